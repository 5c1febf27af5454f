use thiserror::Error;

/// A single machine-readable validation finding.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct ValidationIssue {
    /// Which field/table the issue was found in, e.g. `plant`, `ref_policy`, `prior`.
    pub field: String,
    /// 1-based stage index where applicable.
    pub stage: Option<usize>,
    /// Row index within the table where applicable.
    pub row: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.field)?;
        if let Some(k) = self.stage {
            write!(f, "[stage {k}]")?;
        }
        if let Some(i) = self.row {
            write!(f, "[row {i}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("deformation parameter must be a positive finite real, got {r}")]
    InvalidDeformation { r: f64 },

    #[error("domain error in {op}: argument {value} is outside the domain")]
    Domain { op: &'static str, value: f64 },

    #[error("divergence is infinite: p has mass at outcome {outcome} where q is zero{}",
        condition.map(|z| format!(" (conditioning outcome {z})")).unwrap_or_default())]
    AbsoluteContinuity {
        outcome: usize,
        condition: Option<usize>,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("problem validation failed: {}", issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Validation { issues: Vec<ValidationIssue> },

    #[error("policy support violation at stage {stage}, row {row}: mass {mass} on action {action} outside the reference support")]
    SupportViolation {
        stage: usize,
        row: usize,
        action: usize,
        mass: f64,
    },

    #[error("degenerate kernel: every action weight clamped to zero across the whole scale bracket")]
    DegenerateKernel,

    #[error("scale search profile is not unimodal: minimum attained at both bracket ends; profile has {} samples", profile.len())]
    ScaleBracket { profile: Vec<(f64, f64)> },

    #[error("non-positive stage scale rho = {rho:.6e} at stage {stage}, state {state} (r = {r}, prefix divergence = {prefix_divergence:.6e}); reduce |r - 1| or move the references closer to the plant/policies")]
    NonPositiveScale {
        rho: f64,
        r: f64,
        prefix_divergence: f64,
        stage: usize,
        state: usize,
    },

    #[error("insufficient iteration history: have {have} deltas, need at least {need}")]
    InsufficientHistory { have: usize, need: usize },

    #[error("{what} exceeds the enumeration guard: {size} > {limit}")]
    SizeGuard {
        what: &'static str,
        size: u128,
        limit: u128,
    },

    #[error("parse error{}: {message}", context.as_ref().map(|c| format!(" in {c}")).unwrap_or_default())]
    Parse {
        context: Option<String>,
        message: String,
    },

    #[error("stage {stage}: {source}")]
    AtStage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage {stage}, conditioning state {state}: {source}")]
    AtRow {
        stage: usize,
        state: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_stage(self, stage: usize) -> Error {
        Error::AtStage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn at_row(self, stage: usize, state: usize) -> Error {
        Error::AtRow {
            stage,
            state,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
