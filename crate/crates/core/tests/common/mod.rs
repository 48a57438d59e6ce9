//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use halvinglab_core::curve::PerfSpec;
use halvinglab_core::gp::{kernel_eval, Cell, GpHyperparams, GpModel, ObservationSet, Point};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_hp(rng: &mut ChaCha8Rng, dims: usize) -> GpHyperparams {
    GpHyperparams {
        log_lengthscales: (0..=dims).map(|_| rng.random_range(-1.2..0.5)).collect(),
        log_amplitude: rng.random_range(-0.5..0.5),
        log_noise: rng.random_range(-3.0..-1.0),
    }
}

fn grid(rng: &mut ChaCha8Rng, rows: usize, dims: usize, steps: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x = (0..rows).map(|_| (0..dims).map(|_| rng.random::<f64>()).collect()).collect();
    let t = (0..steps).map(|s| s as f64 / (steps - 1).max(1) as f64).collect();
    (x, t)
}

/// Smooth-ish targets: a random linear trend in (x, t) plus noise.
fn targets(rng: &mut ChaCha8Rng, x: &[Vec<f64>], t: &[f64], cells: &[Cell]) -> Vec<f64> {
    let w: Vec<f64> = (0..x[0].len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    cells
        .iter()
        .map(|c| {
            let lin: f64 = x[c.row].iter().zip(&w).map(|(a, b)| a * b).sum();
            lin - t[c.step] + 0.1 * rng.random_range(-1.0..1.0)
        })
        .collect()
}

/// Observations on a random subset of the grid.
pub fn random_masked(rng: &mut ChaCha8Rng, rows: usize, steps: usize, dims: usize, n: usize) -> ObservationSet {
    let (x, t) = grid(rng, rows, dims, steps);
    let picks = rand::seq::index::sample(rng, rows * steps, n.min(rows * steps));
    let mut cells: Vec<Cell> = picks.iter().map(|i| Cell { row: i / steps, step: i % steps }).collect();
    cells.sort();
    let y = targets(rng, &x, &t, &cells);
    ObservationSet::new((0..rows).collect(), x, t, cells, y).unwrap()
}

/// `full` rows observed through every step, `partial` rows through `prefix`
/// steps, and `unobserved` rows with no data, interleaved and shuffled.
pub fn rung_shaped(
    rng: &mut ChaCha8Rng,
    full: usize,
    partial: usize,
    unobserved: usize,
    steps: usize,
    prefix: usize,
    dims: usize,
) -> ObservationSet {
    let rows = full + partial + unobserved;
    let (x, t) = grid(rng, rows, dims, steps);
    let mut lens: Vec<usize> = std::iter::repeat_n(steps, full)
        .chain(std::iter::repeat_n(prefix, partial))
        .chain(std::iter::repeat_n(0, unobserved))
        .collect();
    for i in (1..lens.len()).rev() {
        let j = rng.random_range(0..=i);
        lens.swap(i, j);
    }
    let mut cells = Vec::new();
    for (row, &len) in lens.iter().enumerate() {
        for step in 0..len {
            cells.push(Cell { row, step });
        }
    }
    // observation order should not matter
    for i in (1..cells.len()).rev() {
        let j = rng.random_range(0..=i);
        cells.swap(i, j);
    }
    let y = targets(rng, &x, &t, &cells);
    ObservationSet::new((0..rows).collect(), x, t, cells, y).unwrap()
}

pub fn point<'a>(obs: &'a ObservationSet, c: Cell) -> Point<'a> {
    Point { x: &obs.x_matrix[c.row], t: obs.t_grid[c.step] }
}

/// Noisy covariance built cell by cell from `kernel_eval`.
pub fn dense_cov(hp: &GpHyperparams, obs: &ObservationSet) -> DMatrix<f64> {
    let n = obs.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| kernel_eval(hp, point(obs, obs.cells[i]), point(obs, obs.cells[j])));
    for i in 0..n {
        k[(i, i)] += hp.noise_variance();
    }
    k
}

/// Log marginal likelihood through an LU determinant and solve.
pub fn lml_oracle(hp: &GpHyperparams, obs: &ObservationSet) -> f64 {
    let k = dense_cov(hp, obs);
    let n = obs.len() as f64;
    let lu = k.clone().lu();
    let y = DVector::from_column_slice(&obs.targets);
    let alpha = lu.solve(&y).unwrap();
    -0.5 * y.dot(&alpha) - 0.5 * lu.determinant().ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Central differences of `f` in every coordinate of the log parameters.
pub fn fd_gradient(hp: &GpHyperparams, h: f64, f: impl Fn(&GpHyperparams) -> f64) -> Vec<f64> {
    let theta = hp.to_vec();
    (0..theta.len())
        .map(|i| {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += h;
            dn[i] -= h;
            let fu = f(&GpHyperparams::from_vec(&up).unwrap());
            let fd = f(&GpHyperparams::from_vec(&dn).unwrap());
            (fu - fd) / (2.0 * h)
        })
        .collect()
}

/// Componentwise relative error, with magnitudes below `floor` treated as `floor`.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor)).fold(0.0, f64::max)
}

/// Closed-form posterior of the window average, built from explicit inverses.
pub fn window_oracle(model: &GpModel, id: usize, spec: &PerfSpec) -> (f64, f64) {
    let obs = &model.observations;
    let hp = &model.hyperparams;
    let k = dense_cov(hp, obs);
    let inv = k.try_inverse().unwrap();
    let row = obs.row_of(id).unwrap();
    let steps = obs.steps();
    let w = spec.window(steps).unwrap();
    let q: Vec<usize> = (steps - w..steps).collect();
    let pt = |s: usize| Point { x: &obs.x_matrix[row], t: obs.t_grid[s] };
    let cross = DMatrix::from_fn(obs.len(), w, |i, j| kernel_eval(hp, point(obs, obs.cells[i]), pt(q[j])));
    let prior = DMatrix::from_fn(w, w, |i, j| kernel_eval(hp, pt(q[i]), pt(q[j])));
    let y = DVector::from_column_slice(&obs.targets);
    let mean = cross.transpose() * &inv * y;
    let cov = prior - cross.transpose() * &inv * &cross;
    let avg = DVector::from_element(w, 1.0 / w as f64);
    let mu = avg.dot(&mean);
    let var = avg.dot(&(cov * &avg));
    let st = &model.standardization;
    (st.destandardize(mu), st.destandardize_var(var))
}
