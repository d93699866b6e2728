use thiserror::Error;

/// Failure modes surfaced by the toolkit. Numerical routines return these rather
/// than panicking so the CLI can map them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("metric not positive definite at ({x}, {y}): g11={g11}, det={det}")]
    DegenerateMetric { x: f64, y: f64, g11: f64, det: f64 },

    #[error("integrator step size collapsed at t={t} (dt={dt})")]
    StepFailure { t: f64, dt: f64 },

    #[error("trajectory left the window before returning to the section: {0}")]
    NoReturn(String),

    #[error("loop is not critical enough for monodromy (EL residual {residual:.3e})")]
    NotCritical { residual: f64 },

    #[error("monodromy lost symplecticity (defect {defect:.3e})")]
    SymplecticityLoss { defect: f64 },

    #[error("energy k={k} is not above the critical-value estimate c_u={c_u}")]
    SubcriticalEnergy { k: f64, c_u: f64 },

    #[error("descent did not converge in {iterations} iterations (|grad|={grad_norm:.3e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("period collapsed onto the lower clamp {t_floor:.3e} during descent")]
    PeriodCollapse { t_floor: f64 },

    #[error("Hessian is singular beyond the expected null directions ({null_count} near-null)")]
    SingularHessian { null_count: usize },

    #[error("Newton iteration diverged: {0}")]
    Diverged(String),

    #[error("no closed orbit found after the penalty schedule was exhausted")]
    NoOrbitFound { stages: Vec<StageDiagnostics> },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Per-penalty-level outcome kept when `find_orbit` fails, so callers can see
/// how each stage of the schedule died.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct StageDiagnostics {
    pub sigma: f64,
    pub attempts: usize,
    pub best_action: Option<f64>,
    pub reasons: Vec<String>,
}

pub type Result<T> = std::result::Result<T, Error>;
