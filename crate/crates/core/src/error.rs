use thiserror::Error;

#[derive(Debug, Error)]
pub enum HdgError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("stabilization must be positive on every face, got {0}")]
    InvalidStabilization(f64),

    #[error("{0} is not supported by the standard HDG path (it depends on the gradient)")]
    GradientDependent(String),

    #[error("local block Q is singular on element {element} (dt = {dt:e}); try a smaller time step")]
    SingularLocalBlock { element: usize, dt: f64 },

    #[error("trace system is singular: {0}")]
    SingularTraceSystem(String),

    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("time step {step} (t = {time}): {source}")]
    AtStep {
        step: usize,
        time: f64,
        #[source]
        source: Box<HdgError>,
    },

    #[error("mesh level n = {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<HdgError>,
    },
}

pub type Result<T, E = HdgError> = std::result::Result<T, E>;
