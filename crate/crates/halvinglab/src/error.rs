use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Config(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] halvinglab_core::Error),
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        AppError::Parse { path: path.to_path_buf(), line, message: message.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Config(_) | AppError::Parse { .. } => "config",
            AppError::Io { .. } => "io",
            AppError::Core(e) if e.is_numerical() => "numerical",
            AppError::Core(_) => "config",
        }
    }

    /// 2 for bad configuration or input, 3 for I/O, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "io" => 3,
            "numerical" => 4,
            _ => 2,
        }
    }

    /// One `key=value` line for the diagnostic stream.
    pub fn diagnostic(&self) -> String {
        let mut line = format!("status=error kind={} exit={}", self.kind(), self.exit_code());
        match self {
            AppError::Parse { path, line: l, .. } => {
                let _ = write!(line, " path={} line={l}", quote(&path.display().to_string()));
            }
            AppError::Io { path, .. } => {
                let _ = write!(line, " path={}", quote(&path.display().to_string()));
            }
            _ => {}
        }
        let _ = write!(line, " message={}", quote(&self.to_string()));
        line
    }
}

/// Quotes a value for a `key=value` record when it contains spaces or quotes.
pub fn quote(s: &str) -> String {
    if !s.is_empty() && !s.contains(|c: char| c.is_whitespace() || c == '"' || c == '=') {
        return s.to_string();
    }
    let escaped: String = s
        .chars()
        .flat_map(|c| match c {
            '"' => vec!['\\', '"'],
            '\\' => vec!['\\', '\\'],
            '\n' => vec!['\\', 'n'],
            c => vec![c],
        })
        .collect();
    format!("\"{escaped}\"")
}
