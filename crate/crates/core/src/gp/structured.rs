//! Exact GP algebra for observations shaped like a Successive Halving rung:
//! some candidates observed on a common prefix of the time grid (usually the
//! fully observed training curves) and the rest on a second, shorter prefix.
//!
//! Ordering the cells block by block, the covariance is
//!
//! ```text
//! K = [ P   Q ]    P = amp²·(Kx₁ ⊗ Kt₁) + σ²I
//!     [ Qᵀ  R ]    R = amp²·(Kx₂ ⊗ Kt₂) + σ²I,  Q = amp²·(Kx₁₂ ⊗ Kt₁₂)
//! ```
//!
//! `P` is diagonalized by `U = Ux ⊗ Ut` from the eigendecompositions of the
//! two small factors, and `R` is handled through the dense Schur complement
//! `S = R - Qᵀ P⁻¹ Q`, whose size is the number of cells in the second block.
//! Block-one vectors are kept in the eigenbasis (hatted names) throughout.

use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::kernel::KernelCache;
use super::{ObservationSet, JITTER_LADDER};
use crate::error::{Error, Result};

/// Block structure of an observation set.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    rows1: Vec<usize>,
    len1: usize,
    rows2: Vec<usize>,
    len2: usize,
    /// Observation index of each block position: block one is `c·len1 + τ`,
    /// block two follows at `n1 + a·len2 + s`.
    order: Vec<usize>,
}

impl Layout {
    pub fn detect(obs: &ObservationSet) -> Option<Self> {
        let rows = obs.x_matrix.len();
        let steps = obs.steps();
        let mut index = alloc::vec![usize::MAX; rows * steps];
        let mut count = alloc::vec![0usize; rows];
        for (i, c) in obs.cells.iter().enumerate() {
            index[c.row * steps + c.step] = i;
            count[c.row] += 1;
        }
        // every observed row must be a prefix 0..count
        for r in 0..rows {
            if (0..count[r]).any(|t| index[r * steps + t] == usize::MAX) {
                return None;
            }
        }
        let mut lens: Vec<usize> = count.iter().copied().filter(|&c| c > 0).collect();
        lens.sort_unstable();
        lens.dedup();
        let (len1, len2) = match lens.as_slice() {
            [l] => (*l, 0),
            [short, long] => (*long, *short),
            _ => return None,
        };
        let rows1: Vec<usize> = (0..rows).filter(|&r| count[r] == len1).collect();
        let rows2: Vec<usize> = if len2 > 0 { (0..rows).filter(|&r| count[r] == len2).collect() } else { Vec::new() };
        let mut order = Vec::with_capacity(obs.len());
        for (rs, len) in [(&rows1, len1), (&rows2, len2)] {
            for &r in rs {
                for t in 0..len {
                    order.push(index[r * steps + t]);
                }
            }
        }
        Some(Self { rows1, len1, rows2, len2, order })
    }

    fn n1(&self) -> usize {
        self.rows1.len() * self.len1
    }

    fn m(&self) -> usize {
        self.rows2.len() * self.len2
    }
}

pub(crate) struct StructuredFactor {
    layout: Layout,
    ux: DMatrix<f64>,
    ut: DMatrix<f64>,
    /// Eigenvalues of `P`, indexed `c·len1 + τ`.
    d: Vec<f64>,
    /// `Ẑ = D⁻¹ Uᵀ Q`, `n1 × m`.
    z_hat: DMatrix<f64>,
    s_chol: Option<Cholesky<f64, Dyn>>,
    pub jitter: f64,
    pub logdet: f64,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl StructuredFactor {
    fn rotate_in(&self, v1: &[f64]) -> Vec<f64> {
        let v = DMatrix::from_row_slice(self.layout.rows1.len(), self.layout.len1, v1);
        row_major(&(self.ux.tr_mul(&v) * &self.ut))
    }

    fn rotate_out(&self, v1: &[f64]) -> Vec<f64> {
        let v = DMatrix::from_row_slice(self.layout.rows1.len(), self.layout.len1, v1);
        row_major(&(&self.ux * v * self.ut.transpose()))
    }

    /// Solves `K x = v` with `v` and `x` in observation order.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let n1 = self.layout.n1();
        let order = &self.layout.order;
        let v1: Vec<f64> = order[..n1].iter().map(|&i| v[i]).collect();
        let v2 = DVector::from_iterator(self.layout.m(), order[n1..].iter().map(|&i| v[i]));
        let v1_hat = DVector::from_vec(self.rotate_in(&v1));
        let mut b1_hat = v1_hat.component_div(&DVector::from_column_slice(&self.d));
        let mut out = DVector::zeros(v.len());
        if let Some(chol) = &self.s_chol {
            let b2 = chol.solve(&(v2 - self.z_hat.tr_mul(&v1_hat)));
            b1_hat -= &self.z_hat * &b2;
            for (q, &i) in order[n1..].iter().enumerate() {
                out[i] = b2[q];
            }
        }
        let b1 = self.rotate_out(b1_hat.as_slice());
        for (p, &i) in order[..n1].iter().enumerate() {
            out[i] = b1[p];
        }
        out
    }

    pub fn solve_matrix(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(v.nrows(), v.ncols());
        for j in 0..v.ncols() {
            out.set_column(j, &self.solve(&v.column(j).into_owned()));
        }
        out
    }
}

pub(crate) struct StructuredEval {
    pub lml: f64,
    pub grad: Option<Vec<f64>>,
    pub factor: StructuredFactor,
    pub alpha: DVector<f64>,
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn eigen(m: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let e = SymmetricEigen::new(m);
    let vals = e.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    (e.eigenvectors, vals)
}

pub(crate) fn evaluate(
    cache: &KernelCache,
    obs: &ObservationSet,
    layout: Layout,
    want_grad: bool,
) -> Result<StructuredEval> {
    let (n_c, t1) = (layout.rows1.len(), layout.len1);
    let (n_a, t2) = (layout.rows2.len(), layout.len2);
    let (n1, m) = (layout.n1(), layout.m());
    let amp2 = cache.amp2;
    let steps1: Vec<usize> = (0..t1).collect();
    let steps2: Vec<usize> = (0..t2).collect();

    let kx1 = sub(&cache.kx, &layout.rows1, &layout.rows1);
    let kt1 = sub(&cache.kt, &steps1, &steps1);
    let (ux, lx) = eigen(kx1.clone());
    let (ut, lt) = eigen(kt1.clone());

    // cross and second-block factors
    let kx12 = sub(&cache.kx, &layout.rows1, &layout.rows2);
    let kt12 = sub(&cache.kt, &steps1, &steps2);
    let kx22 = sub(&cache.kx, &layout.rows2, &layout.rows2);
    let kt22 = sub(&cache.kt, &steps2, &steps2);
    let mx = ux.tr_mul(&kx12);
    let mt = ut.tr_mul(&kt12);
    let q_hat = mx.kronecker(&mt) * amp2;
    let r0 = kx22.kronecker(&kt22) * amp2;

    let eigvals: Vec<f64> = (0..n1).map(|p| amp2 * lx[p / t1] * lt[p % t1]).collect();
    let targets = &obs.targets;
    let y1: Vec<f64> = layout.order[..n1].iter().map(|&i| targets[i]).collect();
    let y2 = DVector::from_iterator(m, layout.order[n1..].iter().map(|&i| targets[i]));

    let mut tried = Vec::new();
    let mut chosen = None;
    for &level in &JITTER_LADDER {
        let jitter = level * amp2;
        tried.push(jitter);
        let noise = cache.noise_var + jitter;
        let d: Vec<f64> = eigvals.iter().map(|e| e + noise).collect();
        let mut z_hat = q_hat.clone();
        if n1 > 0 {
            for col in z_hat.as_mut_slice().chunks_exact_mut(n1) {
                col.iter_mut().zip(&d).for_each(|(z, dp)| *z /= dp);
            }
        }
        if m == 0 {
            chosen = Some((jitter, d, z_hat, None));
            break;
        }
        let mut s = &r0 - schur_correction(&mx, &mt, &d, amp2);
        for i in 0..m {
            s[(i, i)] += noise;
        }
        if let Some(chol) = s.cholesky() {
            chosen = Some((jitter, d, z_hat, Some(chol)));
            break;
        }
    }
    let (jitter, d, z_hat, s_chol) = chosen.ok_or(Error::Factorization { ladder: tried })?;

    let mut logdet: f64 = d.iter().map(|v| libm::log(*v)).sum();
    if let Some(chol) = &s_chol {
        let l = chol.l_dirty();
        logdet += 2.0 * (0..m).map(|i| libm::log(l[(i, i)])).sum::<f64>();
    }
    let factor = StructuredFactor { layout, ux, ut, d, z_hat, s_chol, jitter, logdet };

    let y1_hat = DVector::from_vec(factor.rotate_in(&y1));
    let dvec = DVector::from_column_slice(&factor.d);
    let mut a1_hat = y1_hat.component_div(&dvec);
    let a2 = match &factor.s_chol {
        Some(chol) => {
            let a2 = chol.solve(&(&y2 - factor.z_hat.tr_mul(&y1_hat)));
            a1_hat -= &factor.z_hat * &a2;
            a2
        }
        None => DVector::zeros(0),
    };
    let quad = y1_hat.dot(&a1_hat) + y2.dot(&a2);
    let n = targets.len() as f64;
    let lml = -0.5 * quad - 0.5 * factor.logdet - 0.5 * n * libm::log(2.0 * PI);

    let mut alpha = DVector::zeros(targets.len());
    let a1 = factor.rotate_out(a1_hat.as_slice());
    for (p, &i) in factor.layout.order[..n1].iter().enumerate() {
        alpha[i] = a1[p];
    }
    for (q, &i) in factor.layout.order[n1..].iter().enumerate() {
        alpha[i] = a2[q];
    }

    let grad = if want_grad {
        let blocks = Blocks {
            kx1: &kx1,
            kt1: &kt1,
            kx12: &kx12,
            kt12: &kt12,
            kx22: &kx22,
            kt22: &kt22,
            mx: &mx,
            mt: &mt,
            lx: &lx,
            lt: &lt,
            eigvals: &eigvals,
            shape: (n_c, t1, n_a, t2),
        };
        Some(gradient(cache, &factor, &blocks, &a1_hat, &a2))
    } else {
        None
    };

    Ok(StructuredEval { lml, grad, factor, alpha })
}

/// `A⁻¹ = L⁻ᵀ L⁻¹` from the Cholesky factor, touching only triangles.
pub(crate) fn spd_inverse(chol: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let l = chol.l_dirty();
    let m = l.nrows();
    let ls = l.as_slice();
    // columns of L⁻¹, column-major, lower triangle only
    let mut x = alloc::vec![0.0; m * m];
    for j in 0..m {
        let col = &mut x[j * m..(j + 1) * m];
        col[j] = 1.0;
        for k in j..m {
            let v = col[k] / ls[k * m + k];
            col[k] = v;
            if v != 0.0 {
                let lk = &ls[k * m..(k + 1) * m];
                for i in k + 1..m {
                    col[i] -= lk[i] * v;
                }
            }
        }
    }
    let mut w = DMatrix::zeros(m, m);
    for j in 0..m {
        let xj = &x[j * m..(j + 1) * m];
        for i in j..m {
            let xi = &x[i * m..(i + 1) * m];
            let v: f64 = xi[i..].iter().zip(&xj[i..]).map(|(a, b)| a * b).sum();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    w
}

/// `Q̂ᵀ D⁻¹ Q̂`, contracted through the Kronecker factors of `Q̂`.
fn schur_correction(mx: &DMatrix<f64>, mt: &DMatrix<f64>, d: &[f64], amp2: f64) -> DMatrix<f64> {
    let (n_c, n_a) = mx.shape();
    let (t1, t2) = mt.shape();
    let m = n_a * t2;
    let amp4 = amp2 * amp2;
    // g[c][(s, s2)] = Σ_τ mt[τ, s] mt[τ, s2] / d[c, τ]
    let g: Vec<DMatrix<f64>> = (0..n_c)
        .map(|c| {
            let scaled = DMatrix::from_fn(t1, t2, |tau, s| mt[(tau, s)] / d[c * t1 + tau]);
            mt.tr_mul(&scaled)
        })
        .collect();
    let mut out = DMatrix::zeros(m, m);
    let os = out.as_mut_slice();
    let mut weighted = mx.clone();
    for s2 in 0..t2 {
        for s in 0..t2 {
            for (c, mut row) in weighted.row_iter_mut().enumerate() {
                row.copy_from(&mx.row(c));
                row *= amp4 * g[c][(s, s2)];
            }
            let block = mx.tr_mul(&weighted);
            for a2 in 0..n_a {
                let col = &mut os[(a2 * t2 + s2) * m..(a2 * t2 + s2 + 1) * m];
                for (a, v) in block.column(a2).iter().enumerate() {
                    col[a * t2 + s] = *v;
                }
            }
        }
    }
    out
}

/// `(Ẑ W)ᵀ` for symmetric `W`, using `Ẑ = D⁻¹ amp² (Mx ⊗ Mt)`.
fn b_transpose(mx: &DMatrix<f64>, mt: &DMatrix<f64>, d: &[f64], amp2: f64, w: &DMatrix<f64>) -> DMatrix<f64> {
    let (n_c, n_a) = mx.shape();
    let (t1, t2) = mt.shape();
    let m = n_a * t2;
    let wa = DMatrix::from_fn(n_a, t2 * m, |a, sj| w[(a * t2 + sj / m, sj % m)]);
    let u = mx * wa;
    let mut bt = DMatrix::zeros(m, n_c * t1);
    for c in 0..n_c {
        let uc = DMatrix::from_fn(t2, m, |s, j| u[(c, s * m + j)]);
        let bc = mt * uc;
        for tau in 0..t1 {
            let scale = amp2 / d[c * t1 + tau];
            for j in 0..m {
                bt[(j, c * t1 + tau)] = scale * bc[(tau, j)];
            }
        }
    }
    bt
}

struct Blocks<'a> {
    kx1: &'a DMatrix<f64>,
    kt1: &'a DMatrix<f64>,
    kx12: &'a DMatrix<f64>,
    kt12: &'a DMatrix<f64>,
    kx22: &'a DMatrix<f64>,
    kt22: &'a DMatrix<f64>,
    mx: &'a DMatrix<f64>,
    mt: &'a DMatrix<f64>,
    lx: &'a [f64],
    lt: &'a [f64],
    eigvals: &'a [f64],
    shape: (usize, usize, usize, usize),
}

/// `½ αᵀ ∂K α - ½ tr(K⁻¹ ∂K)` per log parameter, assembled block by block.
///
/// With `B = Ẑ S⁻¹`, `MQ = α̂₁α₂ᵀ + B` and `M₂ = α₂α₂ᵀ - S⁻¹` the gradient is
/// `½[α̂₁ᵀ∂P̂α̂₁ - tr(D⁻¹∂P̂) - ⟨B, ∂P̂Ẑ⟩] + ⟨MQ, ∂Q̂⟩ + ½⟨M₂, ∂R⟩`.
fn gradient(
    cache: &KernelCache,
    f: &StructuredFactor,
    b: &Blocks<'_>,
    a1_hat: &DVector<f64>,
    a2: &DVector<f64>,
) -> Vec<f64> {
    let dims = cache.dims();
    let (n_c, t1, n_a, t2) = b.shape;
    let (n1, m) = (n_c * t1, n_a * t2);
    let amp2 = cache.amp2;
    let sigma2 = cache.noise_var;
    let rows1 = &f.layout.rows1;
    let rows2 = &f.layout.rows2;
    let steps1: Vec<usize> = (0..t1).collect();
    let steps2: Vec<usize> = (0..t2).collect();

    // Bᵀ = S⁻¹ Ẑᵀ (m × n1), so column p of bt/zt is row p of B/Ẑ.
    let zt = f.z_hat.transpose();
    let (bt, w) = match &f.s_chol {
        Some(chol) => {
            let w = spd_inverse(chol);
            (b_transpose(b.mx, b.mt, &f.d, amp2, &w), w)
        }
        None => (DMatrix::zeros(0, n1), DMatrix::zeros(0, 0)),
    };
    let (bts, zts) = (bt.as_slice(), zt.as_slice());
    let rowdot = |p: usize, p2: usize| -> f64 {
        let b = &bts[p * m..(p + 1) * m];
        let z = &zts[p2 * m..(p2 + 1) * m];
        b.iter().zip(z).map(|(x, y)| x * y).sum()
    };

    // P-block contractions
    let a1 = |c: usize, tau: usize| a1_hat[c * t1 + tau];
    let mut mxx = DMatrix::zeros(n_c, n_c);
    for c in 0..n_c {
        for c2 in 0..n_c {
            let mut acc = 0.0;
            for tau in 0..t1 {
                let mut v = a1(c, tau) * a1(c2, tau) - rowdot(c * t1 + tau, c2 * t1 + tau);
                if c == c2 {
                    v -= 1.0 / f.d[c * t1 + tau];
                }
                acc += b.lt[tau] * v;
            }
            mxx[(c, c2)] = acc;
        }
    }
    let mut mtt = DMatrix::zeros(t1, t1);
    for tau in 0..t1 {
        for tau2 in 0..t1 {
            let mut acc = 0.0;
            for c in 0..n_c {
                let (p, p2) = (c * t1 + tau, c * t1 + tau2);
                let mut v = a1(c, tau) * a1(c, tau2) - rowdot(p, p2);
                if tau == tau2 {
                    v -= 1.0 / f.d[p];
                }
                acc += b.lx[c] * v;
            }
            mtt[(tau, tau2)] = acc;
        }
    }
    // diagonal part shared by amplitude and noise
    let mut diag_eig = 0.0;
    let mut diag_plain = 0.0;
    for p in 0..n1 {
        let v = a1_hat[p] * a1_hat[p] - 1.0 / f.d[p] - rowdot(p, p);
        diag_eig += b.eigvals[p] * v;
        diag_plain += v;
    }

    // Q-block contractions
    let mut eq = DMatrix::zeros(n_c, n_a);
    let mut fq = DMatrix::zeros(t1, t2);
    let mut mq_q = 0.0;
    let a2s = a2.as_slice();
    for p in 0..n1 {
        let (c, tau) = (p / t1, p % t1);
        let brow = if m == 0 { &[][..] } else { &bts[p * m..(p + 1) * m] };
        let mt_row: Vec<f64> = (0..t2).map(|s| b.mt[(tau, s)]).collect();
        let mut fq_row = alloc::vec![0.0; t2];
        for a in 0..n_a {
            let mx_ca = b.mx[(c, a)];
            let mut e_acc = 0.0;
            for s in 0..t2 {
                let q = a * t2 + s;
                let v = a1_hat[p] * a2s[q] + brow[q];
                e_acc += v * mt_row[s];
                fq_row[s] += v * mx_ca;
            }
            eq[(c, a)] += e_acc;
            mq_q += e_acc * mx_ca;
        }
        for (s, v) in fq_row.into_iter().enumerate() {
            fq[(tau, s)] += v;
        }
    }

    // R-block contractions
    let mut mr = DMatrix::zeros(n_a, n_a);
    let mut mr_t = DMatrix::zeros(t2, t2);
    let mut trace_m2 = 0.0;
    for q in 0..m {
        for q2 in 0..m {
            let v = a2[q] * a2[q2] - w[(q, q2)];
            let (a, s, a_, s_) = (q / t2, q % t2, q2 / t2, q2 % t2);
            mr[(a, a_)] += v * b.kt22[(s, s_)];
            mr_t[(s, s_)] += v * b.kx22[(a, a_)];
            if q == q2 {
                trace_m2 += v;
            }
        }
    }

    let mut g = alloc::vec![0.0; dims + 3];
    for (d, dx2) in cache.dx2.iter().enumerate() {
        let dk1 = b.kx1.component_mul(&sub(dx2, rows1, rows1));
        let gx = f.ux.tr_mul(&dk1) * &f.ux;
        let dk12 = b.kx12.component_mul(&sub(dx2, rows1, rows2));
        let ex = f.ux.tr_mul(&dk12);
        let dk22 = b.kx22.component_mul(&sub(dx2, rows2, rows2));
        g[d] = amp2 * (0.5 * gx.dot(&mxx) + ex.dot(&eq) + 0.5 * dk22.dot(&mr));
    }
    let dt2 = &cache.dt2;
    let dkt1 = b.kt1.component_mul(&sub(dt2, &steps1, &steps1));
    let ht = f.ut.tr_mul(&dkt1) * &f.ut;
    let dkt12 = b.kt12.component_mul(&sub(dt2, &steps1, &steps2));
    let et = f.ut.tr_mul(&dkt12);
    let dkt22 = b.kt22.component_mul(&sub(dt2, &steps2, &steps2));
    g[dims] = amp2 * (0.5 * ht.dot(&mtt) + et.dot(&fq) + 0.5 * dkt22.dot(&mr_t));
    g[dims + 1] = diag_eig + 2.0 * amp2 * mq_q + amp2 * b.kx22.dot(&mr);
    g[dims + 2] = sigma2 * (diag_plain + trace_m2);
    g
}
