use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("mesh quality failure: minimum angle {min_angle_deg:.3} deg below {required_deg} deg")]
    MeshQuality { min_angle_deg: f64, required_deg: f64 },
    #[error("epsilon must be 1/m for an integer m >= 2 (got {0})")]
    EpsilonNotReciprocal(f64),
    #[error("mesh would have {dofs} vertices, above the cap of {cap}")]
    DofCap { dofs: usize, cap: usize },
    #[error("empty mesh")]
    EmptyMesh,
    #[error("coefficient for region {region} must be positive (got {value})")]
    NonPositiveCoefficient { region: &'static str, value: f64 },
    #[error("mesh has no {0} tagged entities")]
    MissingTag(&'static str),
    #[error("constraint leaves no free degrees of freedom")]
    EmptyFreeSet,
    #[error("incompatible right-hand side for a singular system: defect {defect:e}")]
    Incompatible { defect: f64 },
    #[error("singular or unstable factorization at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("linear solve residual {residual:e} above tolerance {tol:e}")]
    LinearResidual { residual: f64, tol: f64 },
    #[error("eigensolver did not converge: {converged} of {wanted} pairs, worst residual {residual:e}")]
    EigenNotConverged { converged: usize, wanted: usize, residual: f64 },
    #[error("lambda = {lambda} is within pole tolerance of the nonzero-mean Dirichlet eigenvalue {pole}")]
    Pole { lambda: f64, pole: f64 },
    #[error("lambda = {lambda} is ambiguously close to a cluster boundary at {cluster}")]
    Ambiguous { lambda: f64, cluster: f64 },
    #[error("solvability defect {defect:e} exceeds tolerance {tol:e}")]
    Solvability { defect: f64, tol: f64 },
    #[error("lambda_max = {lambda_max} exceeds the resolved Dirichlet range (last eigenvalue {resolved})")]
    Unresolved { lambda_max: f64, resolved: f64 },
    #[error("{0}")]
    Numerical(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
