use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use morphforge::config::{PipelineConfig, PolarityName, PolicyName};
use morphforge::dataset::{write_atomic, Dataset};
use morphforge::eval::{self, KlOptions};
use morphforge::stages::demorph_images;
use morphforge::{directions, provider, validate_manifest, DatasetManifest, Pipeline, PipelineError};
use morphforge_core::latent::{fit_direction, DirectionSet, EditMode, LatentVector};
use morphforge_core::pairing::PairingMode;
use morphforge_core::{LandmarkSet, Raster, SynvBlock};
use morphforge_gateway::server::LocalServer;

const DEFAULT_CONFIG: &str = "morphforge.toml";

#[derive(Parser)]
#[command(
    name = "morphforge",
    version,
    about = "Build and evaluate synthetic face-morphing datasets"
)]
struct Cli {
    /// Run configuration (TOML). Defaults to ./morphforge.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dataset directory.
    #[arg(long, global = true, default_value = "dataset")]
    dataset: PathBuf,

    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ifgs,
    Ifgd,
    Frpca,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Draw, neutralise and gate candidates until every split is filled.
    GenBase,
    /// Generate mated samples for every subject.
    Mate {
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Choose morph pairs; development and test splits always pair fully.
    Pair {
        /// Partners per training subject (defaults to the config's k).
        #[arg(long, conflicts_with = "full")]
        k: Option<usize>,
        /// Pair every same-gender combination in the training split too.
        #[arg(long)]
        full: bool,
    },
    /// Morph every recorded pair.
    Morph {
        /// Blend weight of the second subject (defaults to the config's).
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Reverse a suspected morph using a trusted probe image.
    Demorph(DemorphArgs),
    /// Check the manifest; prints violations as JSON and exits 2 if any.
    Validate {
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn score files into plot tables.
    Eval {
        #[command(subcommand)]
        metric: Metric,
    },
    /// Write the toy provider's directions to a directory.
    ToyDirections {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one attribute direction from labelled latents and add it to a
    /// direction directory.
    FitDirection {
        #[arg(long)]
        attribute: String,
        /// SYNV file of latents.
        #[arg(long)]
        latents: PathBuf,
        /// One 0/1 label per line, aligned with the latents.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the toy provider over the sidecar protocol.
    ServeToy {
        #[arg(long, default_value = "127.0.0.1:8750")]
        addr: String,
    },
}

#[derive(Args)]
struct DemorphArgs {
    #[arg(long)]
    factor: f64,
    #[arg(long)]
    suspect: PathBuf,
    #[arg(long)]
    probe: PathBuf,
    /// Landmarks as a JSON list of 68 [x, y] pairs; detected if omitted.
    #[arg(long)]
    suspect_landmarks: Option<PathBuf>,
    #[arg(long)]
    probe_landmarks: Option<PathBuf>,
    /// Verification threshold (cosine distance) for the identity check.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalIo {
    /// Input score CSV.
    #[arg(long)]
    scores: PathBuf,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Metric {
    /// Vulnerability matrix from `morph_id,slot,attempt,frs_id,score`.
    Map {
        #[command(flatten)]
        io: EvalIo,
        /// Per-system threshold as NAME=VALUE; overrides the config.
        #[arg(long = "threshold", value_parser = parse_threshold)]
        thresholds: Vec<(String, f64)>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
    },
    /// DET curve from `id,label,score`.
    Det {
        #[command(flatten)]
        io: EvalIo,
        #[arg(long, value_enum)]
        polarity: Option<PolarityArg>,
    },
    /// KL divergence between quality-score subsets from `id,subset,score`.
    Kld {
        #[command(flatten)]
        io: EvalIo,
        #[arg(long)]
        reference: Option<String>,
        /// Compute KL(subset || reference).
        #[arg(long)]
        reverse: bool,
    },
    /// Kernel density curves per subset from `id,subset,score`.
    Kde {
        #[command(flatten)]
        io: EvalIo,
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Both,
    Either,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolarityArg {
    Higher,
    Lower,
}

fn parse_threshold(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let v: f64 = value.parse().map_err(|e| format!("{value:?}: {e}"))?;
    Ok((name.to_string(), v))
}

enum Outcome {
    Done,
    Violations,
}

fn load_config(path: Option<&Path>, required: bool) -> Result<PipelineConfig, PipelineError> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None if Path::new(DEFAULT_CONFIG).is_file() => PipelineConfig::load(Path::new(DEFAULT_CONFIG)),
        None if required => Err(PipelineError::Config(format!(
            "no --config given and no ./{DEFAULT_CONFIG}"
        ))),
        None => Ok(PipelineConfig::default()),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), PipelineError> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| PipelineError::io(Path::new("<stdout>"), e))
        }
    }
}

fn run(cli: Cli) -> Result<Outcome, PipelineError> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::GenBase => {
            let p = Pipeline::open(load_config(config_path, true)?, &cli.dataset)?;
            let m = p.gen_base()?;
            eprintln!(
                "accepted {} subjects from {} candidates",
                m.subjects.len(),
                m.acceptance.candidates
            );
        }
        Command::Mate { mode } => {
            let p = Pipeline::open(load_config(config_path, true)?, &cli.dataset)?;
            let modes = match mode {
                ModeArg::Ifgs => vec![EditMode::Ifgs],
                ModeArg::Ifgd => vec![EditMode::Ifgd],
                ModeArg::Frpca => vec![EditMode::Frpca],
                ModeArg::All => EditMode::ALL.to_vec(),
            };
            for mode in modes {
                let m = p.mate(mode)?;
                let kept: usize = m
                    .mated
                    .values()
                    .filter_map(|x| x.get(&mode))
                    .map(|l| l.samples.len())
                    .sum();
                eprintln!("{mode}: {kept} mated samples");
            }
        }
        Command::Pair { k, full } => {
            let p = Pipeline::open(load_config(config_path, true)?, &cli.dataset)?;
            let mode = if full {
                PairingMode::Full
            } else {
                PairingMode::TopK(k.unwrap_or(p.config.pairing.k))
            };
            eprintln!("{} pairs", p.pair(mode)?.pairs.len());
        }
        Command::Morph { alpha } => {
            let p = Pipeline::open(load_config(config_path, true)?, &cli.dataset)?;
            let m = p.morph(alpha.unwrap_or(p.config.morph.alpha))?;
            let failed = m.failures.iter().filter(|f| f.stage == "morph").count();
            eprintln!("{} morphs, {failed} failed", m.morphs.len());
        }
        Command::Demorph(a) => {
            let config = load_config(config_path, false)?;
            let provider = provider::open(&config)?;
            let read_landmarks = |p: &Option<PathBuf>| -> Result<Option<LandmarkSet>, PipelineError> {
                p.as_ref()
                    .map(|p| {
                        let bytes = std::fs::read(p).map_err(|e| PipelineError::io(p, e))?;
                        serde_json::from_slice(&bytes).map_err(|e| PipelineError::artifact(p.display().to_string(), e))
                    })
                    .transpose()
            };
            let (image, report) = demorph_images(
                provider.as_ref(),
                &Raster::read_png(&a.suspect)?,
                read_landmarks(&a.suspect_landmarks)?,
                &Raster::read_png(&a.probe)?,
                read_landmarks(&a.probe_landmarks)?,
                a.factor,
                a.threshold,
            )?;
            write_atomic(&a.out, &image.to_png_bytes()?)?;
            println!("{}", serde_json::to_string(&report).expect("report"));
        }
        Command::Validate { out } => {
            let config = load_config(config_path, true)?;
            let ds = Dataset::new(&cli.dataset);
            let manifest = DatasetManifest::load(&ds)?;
            let violations = validate_manifest(&ds, &manifest, &config);
            let mut report = serde_json::to_vec_pretty(&violations).expect("report");
            report.push(b'\n');
            if let Some(p) = &out {
                write_atomic(p, &report)?;
            }
            emit(None, &report)?;
            if !violations.is_empty() {
                return Ok(Outcome::Violations);
            }
        }
        Command::Eval { metric } => {
            let config = load_config(config_path, false)?;
            let e = &config.evaluation;
            let (io, bytes) = match metric {
                Metric::Map { io, thresholds, policy } => {
                    let mut t: BTreeMap<String, f64> = e.thresholds.clone();
                    t.extend(thresholds);
                    let policy = match policy {
                        Some(PolicyArg::Both) => PolicyName::Both,
                        Some(PolicyArg::Either) => PolicyName::Either,
                        None => e.policy,
                    };
                    let bytes = eval::map_table(&io.scores, &t, policy.into())?;
                    (io, bytes)
                }
                Metric::Det { io, polarity } => {
                    let polarity = match polarity {
                        Some(PolarityArg::Higher) => PolarityName::Higher,
                        Some(PolarityArg::Lower) => PolarityName::Lower,
                        None => e.polarity,
                    };
                    let bytes = eval::det_table(&io.scores, polarity.into())?;
                    (io, bytes)
                }
                Metric::Kld { io, reference, reverse } => {
                    let opts = KlOptions {
                        reference: reference.or_else(|| e.kl_reference.clone()),
                        reverse,
                        bins: e.kl_bins,
                        epsilon: e.kl_epsilon,
                    };
                    let bytes = eval::kld_table(&io.scores, &opts)?;
                    (io, bytes)
                }
                Metric::Kde { io, bandwidth, grid } => {
                    let bytes = eval::kde_tables(&io.scores, grid.unwrap_or(e.kde_grid), bandwidth)?;
                    (io, bytes)
                }
            };
            emit(io.out.as_deref(), &bytes)?;
        }
        Command::ToyDirections { out } => {
            let config = load_config(config_path, false)?;
            directions::save(&out, &provider::toy(&config)?.directions())?;
        }
        Command::FitDirection {
            attribute,
            latents,
            labels,
            out,
        } => {
            let rows = SynvBlock::read(&latents)?.rows_f64();
            let latents = rows.into_iter().map(LatentVector::new).collect::<Result<Vec<_>, _>>()?;
            let text = std::fs::read_to_string(&labels).map_err(|e| PipelineError::io(&labels, e))?;
            let labels = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| match l.trim() {
                    "1" => Ok(true),
                    "0" => Ok(false),
                    other => Err(PipelineError::Config(format!("label {other:?} is not 0 or 1"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let d = fit_direction(&attribute, &latents, &labels)?;
            eprintln!(
                "{attribute}: mean distances {:.4} (negative) / {:.4} (positive)",
                d.mean_distance_neg, d.mean_distance_pos
            );
            let mut set = if out.join(directions::METADATA).is_file() {
                directions::load(&out)?
            } else {
                DirectionSet::new()
            };
            set.insert(d);
            directions::save(&out, &set)?;
        }
        Command::ServeToy { addr } => {
            let config = load_config(config_path, false)?;
            let toy = Arc::new(provider::toy(&config)?);
            let server = LocalServer::bind(
                &addr,
                Arc::new(move |req| morphforge_gateway::server::handle(toy.as_ref(), req)),
            )
            .map_err(|e| PipelineError::io(Path::new(&addr), e))?;
            eprintln!("serving the toy provider at {}", server.url());
            server.join();
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .init();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Violations) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
