//! Semantic directions on disk: `directions.synv` holds one unit normal per
//! row and `directions.toml` names each row and carries its class distances.
//!
//! ```toml
//! [[direction]]
//! attribute = "expression"
//! mean_distance_neg = 0.5
//! mean_distance_pos = 0.5
//! ```
//!
//! Normals travel as 32-bit floats and are renormalised on load.

use std::path::Path;

use morphforge_core::latent::{DirectionSet, SemanticDirection};
use morphforge_core::SynvBlock;
use serde::{Deserialize, Serialize};

use crate::dataset::write_atomic;
use crate::PipelineError;

pub const NORMALS: &str = "directions.synv";
pub const METADATA: &str = "directions.toml";

/// Attributes the acceptance loop and the mated edits need.
pub const REQUIRED: [&str; 4] = ["pose", "illumination", "expression", "age"];

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    direction: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    attribute: String,
    mean_distance_neg: f64,
    mean_distance_pos: f64,
}

pub fn save(dir: &Path, set: &DirectionSet) -> Result<(), PipelineError> {
    let dirs: Vec<&SemanticDirection> = set.iter().collect();
    let rows: Vec<&[f64]> = dirs.iter().map(|d| d.normal()).collect();
    write_atomic(&dir.join(NORMALS), &SynvBlock::from_rows(&rows)?.encode()?)?;
    let meta = Metadata {
        direction: dirs
            .iter()
            .map(|d| Entry {
                attribute: d.attribute.clone(),
                mean_distance_neg: d.mean_distance_neg,
                mean_distance_pos: d.mean_distance_pos,
            })
            .collect(),
    };
    let text = toml::to_string(&meta).map_err(|e| PipelineError::Config(e.to_string()))?;
    write_atomic(&dir.join(METADATA), text.as_bytes())
}

pub fn load(dir: &Path) -> Result<DirectionSet, PipelineError> {
    let meta_path = dir.join(METADATA);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| PipelineError::io(&meta_path, e))?;
    let meta: Metadata =
        toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", meta_path.display())))?;
    let block = SynvBlock::read(dir.join(NORMALS))?;
    if block.count() != meta.direction.len() {
        return Err(PipelineError::Config(format!(
            "{} lists {} directions but {} holds {}",
            METADATA,
            meta.direction.len(),
            NORMALS,
            block.count()
        )));
    }
    meta.direction
        .into_iter()
        .zip(block.rows_f64())
        .map(|(e, normal)| {
            Ok(SemanticDirection::new(e.attribute, normal)?
                .with_mean_distances(e.mean_distance_neg, e.mean_distance_pos))
        })
        .collect()
}

pub fn check_required(set: &DirectionSet, dim: usize) -> Result<(), PipelineError> {
    for name in REQUIRED {
        let d = set.get(name)?;
        if d.dim() != dim {
            return Err(PipelineError::Config(format!(
                "direction {name:?} has dimension {} but latents have {dim}",
                d.dim()
            )));
        }
    }
    Ok(())
}
