/// Errors produced by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("component index {index} out of range for system of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("no element of component {component} covers t = {time}")]
    Lookup { component: usize, time: f64 },

    #[error("evaluation point {0} outside the reference interval [0, 1]")]
    OutOfRange(f64),

    #[error("nonpositive time step for component {0}")]
    NonpositiveStep(usize),

    #[error("time slab recursion exceeded depth {0} (degenerate step profile)")]
    SlabDepth(usize),

    #[error("singular Jacobian in Newton solve")]
    SingularJacobian,

    #[error("slab system has {dofs} degrees of freedom, above the dense Newton guard {guard}; use a fixed-point strategy")]
    NewtonGuard { dofs: usize, guard: usize },

    #[error("time slab rejected {0} times in a row; integration failed")]
    TooManyRejects(usize),

    #[error("slab system did not converge in fixed-steps mode")]
    SlabNotConverged,

    #[error("initial step selection failed after {0} halvings")]
    InitialStep(usize),

    #[error("sample time {0} outside [0, T]")]
    SampleTime(f64),

    #[error("solution trace does not cover t = {0}")]
    TraceGap(f64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
