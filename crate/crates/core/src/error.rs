use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatInfoError {
    #[error("column {0} has (near-)zero norm")]
    ZeroColumn(usize),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix has a non-finite entry")]
    NonFinite,
    #[error("matrix has no rows or columns")]
    Empty,
    #[error("diagonal entry {index} is {value}, expected 1")]
    NotUnitDiagonal { index: usize, value: f64 },
    #[error("entry ({row}, {col}) = {value} lies outside [-1, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NcError {
    #[error(transparent)]
    MatInfo(#[from] MatInfoError),
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("label {label} at sample {index} is outside 0..{classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("feature dimension {dim} is too small for {classes} classes (need at least {needed})")]
    DimensionTooSmall {
        dim: usize,
        classes: usize,
        needed: usize,
    },
    #[error("class count {0} is degenerate for the closed-form value (need C >= 3)")]
    DegenerateClassCount(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bound does not apply: {0}")]
    Inapplicable(String),
    #[error("column {index} of Z1 has norm {norm}, expected 1")]
    ColumnsNotNormalized { index: usize, norm: f64 },
}
