use thiserror::Error;

#[derive(Debug, Error)]
pub enum KconeError {
    #[error("scheme index out of range: (m={m}, l={l})")]
    SchemeIndex { m: usize, l: usize },

    #[error("expected {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },

    #[error("insufficient jet order: need {needed}, have {available}")]
    JetOrder { needed: usize, available: usize },

    #[error("index {mu} outside the valid band for total order {total}")]
    IndexBand { total: usize, mu: usize },

    #[error("curve direction exhausted at level {level}: the kernel is trivial, so every complement contains the curve direction")]
    CurveDirectionExhausted { level: usize },

    #[error("resolution is not transversal")]
    NotTransversal,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("Newton iteration failed at eps={eps:e} (residual {residual:e})")]
    NewtonDivergence { eps: f64, residual: f64 },

    #[error("solution left the configured cone box at eps={eps:e}")]
    ExitedCone { eps: f64 },

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
