use crate::token_space::Branch;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("branch {0:?} carries no spatial grid")]
    NotAnImageBranch(Branch),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("non-finite activation in block {0}")]
    NonFiniteActivation(usize),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },
    #[error("pooling kernel {kernel} exceeds grid side {side}")]
    KernelTooLarge { kernel: usize, side: usize },
    #[error("timestep {t} outside [0, {total}]")]
    TimestepOutOfRange { t: u32, total: u32 },
    #[error("negative blend weight {0}")]
    NegativeLambda(f64),
    #[error("degenerate primitive {0} after transform")]
    DegeneratePrimitive(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
