use std::fmt;
use std::path::{Path, PathBuf};

use morphforge_core::evaluation::EvalError;
use morphforge_core::gates::GateError;
use morphforge_core::latent::LatentError;
use morphforge_core::morph::MorphError;
use morphforge_core::pairing::PairingError;
use morphforge_core::raster::RasterError;
use morphforge_core::synv::SynvError;
use morphforge_core::{Gender, Split};
use morphforge_gateway::GatewayError;

/// Subjects still missing when the candidate budget ran out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shortfall {
    pub split: Split,
    pub gender: Gender,
    pub missing: usize,
}

impl fmt::Display for Shortfall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}: {} missing", self.split, self.gender, self.missing)
    }
}

fn list(s: &[Shortfall]) -> String {
    s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Artifact { path: String, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("candidate budget of {budget} exhausted after {accepted} acceptances; {}", list(.shortfall))]
    BudgetExhausted {
        budget: usize,
        accepted: usize,
        shortfall: Vec<Shortfall>,
    },
    #[error("provider: {0}")]
    Provider(#[from] GatewayError),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Morph(#[from] MorphError),
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Synv(#[from] SynvError),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn artifact(path: impl Into<String>, message: impl fmt::Display) -> Self {
        PipelineError::Artifact {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
