use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("unsupported format_version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
}

impl ScenarioError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("tessellation needs at least one site")]
    NoSites,
    #[error("sites {first} and {second} coincide")]
    DuplicateSite { first: usize, second: usize },
    #[error("site {index} lies outside the region")]
    SiteOutsideRegion { index: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("quadrature did not converge: {0}")]
    NonConvergence(String),
    #[error("interferer expansion of size {size} exceeds the limit {max}")]
    ExpansionTooLarge { size: usize, max: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("unknown variable id {0}")]
    UnknownVariable(usize),
    #[error("variable {0} is not binary")]
    NotBinary(usize),
    #[error("variable {var} has bounds [{lower}, {upper}] outside [0, 1]")]
    Bound { var: usize, lower: f64, upper: f64 },
    #[error("binary product needs at least two distinct variables")]
    ProductArity,
    #[error("solution is not integral: variable {var} = {value}")]
    NonIntegral { var: usize, value: f64 },
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("numerical failure in simplex: {0}")]
    Numerical(String),
    #[error("branch-and-bound budget exceeded after {nodes} nodes")]
    BudgetExceeded { nodes: u64 },
    #[error("instance too large: size {size} exceeds the limit {max}")]
    SizeGuard { size: usize, max: usize },
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Milp(#[from] MilpError),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("allocation does not match the scenario: {0}")]
    AllocationMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0}")]
    Io(String),
}
