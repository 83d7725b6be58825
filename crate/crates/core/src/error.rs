use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },

    #[error("length mismatch: {source_len} source points, {target_len} target points, {weight_len} weights")]
    LengthMismatch {
        source_len: usize,
        target_len: usize,
        weight_len: usize,
    },

    #[error("weight {index} is {value}; weights must be finite and strictly positive")]
    InvalidWeight { index: usize, value: f64 },

    #[error("matrix is not a proper rotation (orthogonality residual {orthogonality:e}, det {det})")]
    NotARotation { orthogonality: f64, det: f64 },

    #[error("degenerate geometry: singular values {singular_values:?} leave the rotation unobservable")]
    DegenerateGeometry { singular_values: [f64; 3] },

    #[error("KKT system is singular (condition estimate {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("candidate columns are collinear (denominator {denominator:e})")]
    CollinearColumns { denominator: f64 },

    #[error("SVD gradient is ill-conditioned (smallest singular-value gap {gap:e})")]
    IllConditioned { gap: f64 },

    #[error("target scatter is near singular (normalized det {normalized_det:e})")]
    NearSingularG { normalized_det: f64 },

    #[error("need {needed} base points, got {available}")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
