//! Run configuration, read from TOML.
//!
//! Everything except the `[runtime]` table and the candidate budget feeds the
//! config hash recorded in the manifest. Those settings decide how fast a
//! build runs or how long it may try, never what it produces, and raising the
//! budget must not invalidate an interrupted run's checkpoint.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use morphforge_core::evaluation::{ContributorPolicy, Polarity};
use morphforge_core::gates::CannyParams;
use morphforge_core::Split;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Subjects per gender in each split.
    pub counts: SplitCounts,
    pub provider: ProviderConfig,
    /// Directory holding `directions.synv` and `directions.toml`. Required
    /// unless the provider is the toy one, which ships its own.
    pub directions: Option<PathBuf>,
    /// CSV `candidate,gender` used instead of the provider's gender labels.
    pub gender_labels: Option<PathBuf>,
    pub acceptance: AcceptanceConfig,
    pub thresholds: Thresholds,
    pub canny: CannyConfig,
    pub mated: MatedConfig,
    pub pairing: PairingConfig,
    pub morph: MorphConfig,
    pub evaluation: EvaluationConfig,
    pub runtime: RuntimeConfig,
    /// Directory relative paths are resolved against; set by [`PipelineConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            counts: SplitCounts::default(),
            provider: ProviderConfig::default(),
            directions: None,
            gender_labels: None,
            acceptance: AcceptanceConfig::default(),
            thresholds: Thresholds::default(),
            canny: CannyConfig::default(),
            mated: MatedConfig::default(),
            pairing: PairingConfig::default(),
            morph: MorphConfig::default(),
            evaluation: EvaluationConfig::default(),
            runtime: RuntimeConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 1000,
            dev: 75,
            test: 100,
        }
    }
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }

    pub fn per_gender(&self) -> usize {
        self.train + self.dev + self.test
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Toy,
    File,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Sidecar base URL for `http`.
    pub endpoint: String,
    /// Store directory for `file`.
    pub root: Option<PathBuf>,
    /// Toy latent and embedding sizes; for `http`, a set `embedding_dim` is
    /// checked on every response.
    pub latent_dim: usize,
    pub embedding_dim: Option<usize>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Toy,
            endpoint: "http://127.0.0.1:8750".into(),
            root: None,
            latent_dim: 32,
            embedding_dim: Some(16),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceptanceConfig {
    /// Most candidates drawn before giving up.
    pub budget: usize,
    /// Candidates sampled and prepared per round.
    pub batch: usize,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        Self {
            budget: 1_000_000,
            batch: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Minimum cosine distance to every accepted identity.
    pub diversity: f64,
    /// Maximum cosine distance between a mated sample and its base.
    pub preservation: f64,
    /// Yaw and pitch limit in degrees.
    pub pose_deg: f64,
    /// Eyes count as closed below this aspect ratio.
    pub ear_min: f64,
    /// Edge density above which the bridge region shows glasses.
    pub glasses_density: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            diversity: 0.45,
            preservation: 0.45,
            pose_deg: 5.0,
            ear_min: 0.2,
            glasses_density: 0.12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CannyConfig {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyConfig {
    fn default() -> Self {
        let p = CannyParams::default();
        Self {
            sigma: p.sigma,
            low: p.low,
            high: p.high,
        }
    }
}

impl From<CannyConfig> for CannyParams {
    fn from(c: CannyConfig) -> Self {
        CannyParams {
            sigma: c.sigma,
            low: c.low,
            high: c.high,
        }
    }
}

/// Explicit list of scales or an inclusive evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { min: f64, max: f64, steps: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { min, max, steps } => match steps {
                0 => Vec::new(),
                1 => vec![*min],
                n => (0..*n)
                    .map(|i| min + (max - min) * i as f64 / (*n - 1) as f64)
                    .collect(),
            },
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::List(v) => v.len(),
            Grid::Range { steps, .. } => *steps,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IfgsConfig {
    /// Expected number of recipes; must equal the grid size.
    pub count: usize,
    pub illumination: Grid,
    pub age: Grid,
}

impl Default for IfgsConfig {
    fn default() -> Self {
        Self {
            count: 63,
            illumination: Grid::Range {
                min: -3.0,
                max: 3.0,
                steps: 7,
            },
            age: Grid::Range {
                min: -3.0,
                max: 3.0,
                steps: 9,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IfgdConfig {
    pub count: usize,
    pub pose: Grid,
    pub expression: Grid,
    pub illumination: Grid,
    pub age: Grid,
}

impl Default for IfgdConfig {
    fn default() -> Self {
        Self {
            count: 90,
            pose: Grid::List(vec![-1.0, 0.0, 1.0]),
            expression: Grid::List(vec![-1.0, -0.5, 0.0, 0.5, 1.0]),
            illumination: Grid::List(vec![-1.0, 0.0, 1.0]),
            age: Grid::List(vec![-1.5, 1.5]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrpcaConfig {
    /// Edits per subject.
    pub count: usize,
    /// Principal axes mixed by each edit.
    pub components: usize,
    /// Latents sampled to fit the axes.
    pub pca_samples: usize,
    /// Identity budget: largest cosine distance to the base.
    pub tau: f64,
}

impl Default for FrpcaConfig {
    fn default() -> Self {
        Self {
            count: 55,
            components: 55,
            pca_samples: 2000,
            tau: 0.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatedConfig {
    pub ifgs: IfgsConfig,
    pub ifgd: IfgdConfig,
    pub frpca: FrpcaConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingConfig {
    /// Partners per training subject.
    pub k: usize,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self { k: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphConfig {
    pub alpha: f64,
    /// Width of the blend ramp at the spliced face boundary.
    pub feather_px: u32,
}

impl Default for MorphConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            feather_px: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Both,
    Either,
}

impl From<PolicyName> for ContributorPolicy {
    fn from(p: PolicyName) -> Self {
        match p {
            PolicyName::Both => ContributorPolicy::Both,
            PolicyName::Either => ContributorPolicy::Either,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarityName {
    Higher,
    Lower,
}

impl From<PolarityName> for Polarity {
    fn from(p: PolarityName) -> Self {
        match p {
            PolarityName::Higher => Polarity::Higher,
            PolarityName::Lower => Polarity::Lower,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Verification threshold per face recognition system, on its score scale.
    pub thresholds: BTreeMap<String, f64>,
    pub policy: PolicyName,
    /// Which side of a DET threshold counts as bona fide.
    pub polarity: PolarityName,
    pub kl_bins: usize,
    pub kl_epsilon: f64,
    /// Subset compared against every other; first subset in the file if unset.
    pub kl_reference: Option<String>,
    pub kde_grid: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            thresholds: BTreeMap::new(),
            policy: PolicyName::Both,
            polarity: PolarityName::Higher,
            kl_bins: morphforge_core::evaluation::KL_BINS,
            kl_epsilon: morphforge_core::evaluation::KL_EPSILON,
            kl_reference: None,
            kde_grid: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
    pub max_in_flight: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            threads: 0,
            retries: 3,
            backoff_ms: 100,
            timeout_s: 60,
            max_in_flight: 8,
        }
    }
}

impl RuntimeConfig {
    pub fn backoff(&self) -> Duration {
        Duration::from_millis(self.backoff_ms)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_s)
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), PipelineError> {
    if ok {
        Ok(())
    } else {
        Err(PipelineError::Config(msg()))
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolves a configured path against the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let t = &self.thresholds;
        check(t.diversity > 0.0 && t.diversity <= 2.0, || {
            format!("thresholds.diversity {} outside (0, 2]", t.diversity)
        })?;
        check(t.preservation > 0.0 && t.preservation < 2.0, || {
            format!("thresholds.preservation {} outside (0, 2)", t.preservation)
        })?;
        check(t.pose_deg > 0.0 && t.pose_deg <= 90.0, || {
            format!("thresholds.pose_deg {} outside (0, 90]", t.pose_deg)
        })?;
        check(t.ear_min > 0.0 && t.ear_min < 1.0, || {
            format!("thresholds.ear_min {} outside (0, 1)", t.ear_min)
        })?;
        check(t.glasses_density > 0.0 && t.glasses_density <= 1.0, || {
            format!("thresholds.glasses_density {} outside (0, 1]", t.glasses_density)
        })?;
        let c = &self.canny;
        check(c.sigma > 0.0 && c.low > 0.0 && c.low <= c.high, || {
            format!("canny needs sigma > 0 and 0 < low <= high, got {c:?}")
        })?;

        let ifgs = &self.mated.ifgs;
        let n = ifgs.illumination.len() * ifgs.age.len();
        check(n == ifgs.count, || {
            format!("mated.ifgs.count {} but the grid has {n} recipes", ifgs.count)
        })?;
        let ifgd = &self.mated.ifgd;
        let n = ifgd.pose.len() * ifgd.expression.len() * ifgd.illumination.len() * ifgd.age.len();
        check(n == ifgd.count, || {
            format!("mated.ifgd.count {} but the grid has {n} recipes", ifgd.count)
        })?;
        for g in [
            &ifgs.illumination,
            &ifgs.age,
            &ifgd.pose,
            &ifgd.expression,
            &ifgd.illumination,
            &ifgd.age,
        ] {
            check(g.values().iter().all(|v| v.is_finite()), || {
                format!("non-finite edit scale in {g:?}")
            })?;
        }
        let f = &self.mated.frpca;
        check(f.tau > 0.0 && f.tau < 1.0, || {
            format!("mated.frpca.tau {} outside (0, 1)", f.tau)
        })?;
        if f.count > 0 {
            check(f.components >= 1, || "mated.frpca.components must be at least 1".into())?;
            check(f.pca_samples > f.components, || {
                format!(
                    "mated.frpca.pca_samples {} must exceed components {}",
                    f.pca_samples, f.components
                )
            })?;
        }

        check(self.pairing.k >= 1, || "pairing.k must be at least 1".into())?;
        let m = &self.morph;
        check((0.0..=1.0).contains(&m.alpha), || {
            format!("morph.alpha {} outside [0, 1]", m.alpha)
        })?;
        check(self.acceptance.batch >= 1, || {
            "acceptance.batch must be at least 1".into()
        })?;
        check(self.runtime.max_in_flight >= 1, || {
            "runtime.max_in_flight must be at least 1".into()
        })?;

        let e = &self.evaluation;
        check(e.kl_bins >= 1 && e.kl_epsilon > 0.0, || {
            "evaluation.kl_bins must be >= 1 and kl_epsilon > 0".into()
        })?;
        check(e.kde_grid >= 2, || "evaluation.kde_grid must be at least 2".into())?;
        check(e.thresholds.values().all(|v| v.is_finite()), || {
            "evaluation.thresholds must be finite".into()
        })?;
        if self.provider.kind == ProviderKind::File {
            check(self.provider.root.is_some(), || {
                "provider.root is required for the file provider".into()
            })?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, without the runtime table and
    /// the candidate budget.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.runtime = RuntimeConfig::default();
        canonical.acceptance.budget = 0;
        let json = serde_json::to_vec(&canonical).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
