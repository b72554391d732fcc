use std::path::PathBuf;

/// Library error type.
///
/// `Config` and `CycleParse` indicate bad user input; the remaining variants
/// are runtime failures (solver breakdowns, collisions, diverging iterations).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("cycle parse error at {path}:{line}: {msg}")]
    CycleParse { path: PathBuf, line: usize, msg: String },

    #[error("cycle file not found: {0}")]
    CycleNotFound(PathBuf),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "discrete Riccati iteration did not converge for {label}: residual {residual:.3e} after {iterations} iterations"
    )]
    DareDiverged { label: String, residual: f64, iterations: usize },

    #[error("quadratic program infeasible ({context}); violated rows {violated:?}")]
    QpInfeasible { context: String, violated: Vec<String> },

    #[error("quadratic program breakdown ({context}): {msg}")]
    QpBreakdown { context: String, msg: String },

    #[error("leader optimizer failed: {0}")]
    Nmpc(String),

    #[error("collision: gap between truck {follower} and its predecessor collapsed to {gap:.3} m at t = {t:.1} s")]
    Collision { follower: usize, gap: f64, t: f64 },

    #[error("run aborted at step {step}: {message}")]
    Aborted { step: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by bad configuration or unreadable input files,
    /// as opposed to runtime solver failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::CycleParse { .. }
                | Error::CycleNotFound(_)
                | Error::Domain(_)
        )
    }
}
