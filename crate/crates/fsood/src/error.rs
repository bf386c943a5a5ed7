use std::io;
use std::path::{Path, PathBuf};

use fsood_core::evaluation::EvalError;
use fsood_core::fewshot::FewShotError;
use fsood_core::gradcheck;
use fsood_core::mcl::MclError;
use fsood_core::membank::BankError;
use fsood_core::toytrain::ToyError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: not found", path.display())]
    NotFound { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    /// Input that does not follow its format; `line` is 1-based, 0 for
    /// whole-file problems.
    #[error("{}{}: {message}", path.display(), line_suffix(*line))]
    Schema { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{0}")]
    Usage(String),
    /// The request cannot be satisfied by the data, e.g. too few instances.
    #[error("{0}")]
    Infeasible(String),
    #[error(transparent)]
    FewShot(#[from] FewShotError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Toy(#[from] ToyError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error("gradient check failed: max relative error {max_rel_err:e}")]
    CheckFailed { max_rel_err: f64, report: Box<gradcheck::GradcheckReport> },
}

fn line_suffix(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(":{line}")
    }
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            Error::NotFound { path: path.to_path_buf() }
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub fn schema(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// Process exit status: 2 usage or schema, 3 infeasible sampling,
    /// 4 missing resource, 5 failed check, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Schema { .. } | Error::Eval(_) => 2,
            Error::Infeasible(_) | Error::FewShot(FewShotError::InsufficientInstances { .. }) => 3,
            Error::FewShot(_) => 2,
            Error::Toy(ToyError::InvalidConfig(_) | ToyError::Mcl(MclError::InvalidConfig(_))) => 2,
            Error::Toy(ToyError::Bank(BankError::ZeroCapacity)) => 2,
            Error::NotFound { .. } => 4,
            Error::Image { source, .. } if is_missing(source) => 4,
            Error::CheckFailed { .. } => 5,
            _ => 1,
        }
    }
}

fn is_missing(e: &image::ImageError) -> bool {
    matches!(e, image::ImageError::IoError(io) if io.kind() == io::ErrorKind::NotFound)
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
