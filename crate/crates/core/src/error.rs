use thiserror::Error;

pub type Result<T> = std::result::Result<T, UnmixError>;

#[derive(Debug, Error)]
pub enum UnmixError {
    #[error("empty vector")]
    EmptyVector,
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("Cayley-Menger radicand {0:e} is negative beyond tolerance")]
    NegativeRadicand(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("requested rank {requested} exceeds min(bands, pixels) = {limit}")]
    RankTooLarge { requested: usize, limit: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("|det Q| = {0:e} fell below 1e-30")]
    SingularQ(f64),
    #[error("endmember matrix is rank deficient")]
    RankDeficient,
    #[error("{combinations} endmember combinations exceed cap {cap}")]
    CombinatorialCap { combinations: usize, cap: usize },
    #[error("segmentation produced {0} segment(s), need at least 2")]
    SegmentationFailure(usize),
    #[error("band {0} is identically zero")]
    ZeroBand(usize),
    #[error("reference has zero norm")]
    ZeroReference,
    #[error("column {0} has zero norm")]
    ZeroColumn(usize),
    #[error("spectrum has a non-positive sum")]
    NonPositiveSpectrum,
    #[error("scene/endmember mismatch: {0}")]
    SpecMismatch(String),
    #[error("endmember columns {0} and {1} are identical")]
    DegenerateEndmembers(usize, usize),
    #[error("normal equations are singular (condition {0:e})")]
    SingularNormalEq(f64),
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("payload holds {actual} bytes, header implies {expected}")]
    TruncatedPayload { expected: u64, actual: u64 },
    #[error("ragged CSV: line {line} has {found} cells, expected {expected}")]
    RaggedCsv { line: usize, found: usize, expected: usize },
    #[error("non-numeric CSV cell at line {line}, column {column}: {cell:?}")]
    NonNumericCell { line: usize, column: usize, cell: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl UnmixError {
    /// Stable machine-readable token, one per failure class.
    pub fn token(&self) -> &'static str {
        match self {
            UnmixError::EmptyVector => "EmptyVector",
            UnmixError::NotSquare { .. } => "NotSquare",
            UnmixError::NegativeRadicand(_) => "NegativeRadicand",
            UnmixError::InvalidInput(_) => "InvalidInput",
            UnmixError::ShapeMismatch(_) => "ShapeMismatch",
            UnmixError::RankTooLarge { .. } => "RankTooLarge",
            UnmixError::DegenerateInput(_) => "DegenerateInput",
            UnmixError::SingularQ(_) => "SingularQ",
            UnmixError::RankDeficient => "RankDeficient",
            UnmixError::CombinatorialCap { .. } => "CombinatorialCap",
            UnmixError::SegmentationFailure(_) => "SegmentationFailure",
            UnmixError::ZeroBand(_) => "ZeroBand",
            UnmixError::ZeroReference => "ZeroReference",
            UnmixError::ZeroColumn(_) => "ZeroColumn",
            UnmixError::NonPositiveSpectrum => "NonPositiveSpectrum",
            UnmixError::SpecMismatch(_) => "SpecMismatch",
            UnmixError::DegenerateEndmembers(..) => "DegenerateEndmembers",
            UnmixError::SingularNormalEq(_) => "SingularNormalEq",
            UnmixError::HeaderMismatch(_) => "HeaderMismatch",
            UnmixError::TruncatedPayload { .. } => "TruncatedPayload",
            UnmixError::RaggedCsv { .. } => "RaggedCsv",
            UnmixError::NonNumericCell { .. } => "NonNumericCell",
            UnmixError::Io(_) => "Io",
            UnmixError::Json(_) => "Json",
            UnmixError::Csv(_) => "Csv",
        }
    }
}
