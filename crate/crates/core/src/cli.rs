//! Command-line front end. Every subcommand accepts `--seed`, `--out` and
//! `--config`; flags given on the command line win over keys in the config
//! file, which win over built-in defaults.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Error;
use crate::experiments::{run_experiment, write_outputs, ExperimentConfig, ExperimentId};
use crate::features::LinearModel;
use crate::interferometer::{
    forward_unitary, generate_training_set, sample_haar_unitary, sample_random_arch,
    sample_uniform_phases, Architecture, PhaseConfig, TrainingSet,
};
use crate::io::{read_csv_columns, read_json, write_json, write_trace_csv};
use crate::layerwise::{tune, DeviceOracle, TuneConfig};
use crate::matrix::ComplexMatrix;
use crate::numerics::fit_power_law;
use crate::programmer::{program_phases, ProgramConfig};
use crate::seed::rng_from_seed;
use crate::trainer::{
    build_design_matrix, held_out_loss, solve_iterative, solve_pinv_with, training_loss,
    FeatureSpace, IterativeConfig, PinvOptions,
};

#[derive(Parser, Debug)]
#[command(
    name = "interferolab",
    version,
    about = "Learn and program layered interferometers"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed for every random draw of this command.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (a directory for `experiment`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file whose keys supply defaults for this command's options.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample a random architecture (Haar-random mixers).
    GenArch {
        #[arg(long)]
        modes: Option<usize>,
        /// Number of phase layers.
        #[arg(long)]
        layers: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate tomography of an architecture at random phase settings.
    GenDataset {
        #[arg(long)]
        arch: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample a target transformation: reachable by `--arch`, or Haar-random.
    GenTarget {
        #[arg(long, conflicts_with = "modes")]
        arch: Option<PathBuf>,
        #[arg(long)]
        modes: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a linear model to a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Solver::Pinv)]
        solver: Solver,
        #[arg(long)]
        rcond: Option<f64>,
        #[arg(long, value_enum)]
        feature_space: Option<Space>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Held-out loss of a model against its architecture, or its loss on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required_unless_present = "dataset")]
        arch: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        test_configs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Find phases that make a model realize a target matrix.
    Program {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Tune a simulated device layer by layer toward a target.
    TuneAls {
        #[arg(long)]
        arch: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        passes: Option<usize>,
        #[arg(long)]
        m_samples: Option<usize>,
        #[arg(long)]
        bfgs_iters: Option<usize>,
        #[arg(long)]
        initial_phases: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one of the numerical experiments and write CSV + metadata.
    Experiment {
        id: String,
        #[arg(long)]
        trials: Option<usize>,
        /// Start from the full-size study instead of desk-scale defaults.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit `y = C x^-k` to two columns of a CSV file.
    FitPowerlaw {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        x_column: Option<String>,
        #[arg(long)]
        y_column: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Solver {
    Pinv,
    Iterative,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Space {
    Full,
    Slice,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `argv` (including the program name) and runs the command.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Config-file keys for a command, or an empty object.
fn config_keys(common: &Common) -> CliResult<serde_json::Map<String, Value>> {
    match &common.config {
        None => Ok(Default::default()),
        Some(p) => match read_json::<Value>(p)? {
            Value::Object(m) => Ok(m),
            _ => Err(Failure::Usage(format!(
                "{}: config must be a JSON object",
                p.display()
            ))),
        },
    }
}

/// `flag`, else the config key, else `None`.
fn pick<T: DeserializeOwned>(
    flag: Option<T>,
    keys: &serde_json::Map<String, Value>,
    key: &str,
) -> CliResult<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    keys.get(key)
        .map(|v| {
            serde_json::from_value(v.clone())
                .map_err(|e| Failure::Usage(format!("config key {key:?}: {e}")))
        })
        .transpose()
}

fn required<T>(v: Option<T>, name: &str) -> CliResult<T> {
    v.ok_or_else(|| Failure::Usage(format!("--{name} is required (flag or config key)")))
}

fn seed(common: &Common, keys: &serde_json::Map<String, Value>) -> CliResult<u64> {
    Ok(pick(common.seed, keys, "seed")?.unwrap_or(0))
}

/// Deserializes a config struct from the file keys, ignoring keys it does
/// not know.
fn from_keys<T: DeserializeOwned + Default + Serialize>(
    keys: &serde_json::Map<String, Value>,
) -> CliResult<T> {
    let mut base = serde_json::to_value(T::default()).expect("defaults serialize");
    let obj = base.as_object_mut().expect("config is an object");
    for (k, v) in keys {
        if obj.contains_key(k) {
            obj.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(base).map_err(|e| Failure::Usage(format!("bad config: {e}")))
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> CliResult<()> {
    match out {
        Some(p) => Ok(write_json(p, value)?),
        None => {
            let text = serde_json::to_string_pretty(value).expect("value serializes");
            println!("{text}");
            Ok(())
        }
    }
}

/// `dir/stem.<suffix>` next to `out`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn run(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::GenArch {
            modes,
            layers,
            common,
        } => {
            let keys = config_keys(&common)?;
            let modes = required(pick(modes, &keys, "modes")?, "modes")?;
            let layers = required(pick(layers, &keys, "layers")?, "layers")?;
            if modes < 1 || layers < 2 {
                return Err(Failure::Usage("need --modes >= 1 and --layers >= 2".into()));
            }
            let mut rng = rng_from_seed(seed(&common, &keys)?);
            let arch = sample_random_arch(modes, layers, &mut rng)?;
            emit(common.out.as_deref(), &arch)
        }

        Cmd::GenDataset {
            arch,
            samples,
            eps,
            common,
        } => {
            let keys = config_keys(&common)?;
            let samples = required(pick(samples, &keys, "samples")?, "samples")?;
            let eps = pick(eps, &keys, "eps")?.unwrap_or(0.0);
            let arch: Architecture = read_json(&arch)?;
            let mut rng = rng_from_seed(seed(&common, &keys)?);
            let data = generate_training_set(&arch, samples, eps, &mut rng)?;
            emit(common.out.as_deref(), &data)
        }

        Cmd::GenTarget {
            arch,
            modes,
            common,
        } => {
            let keys = config_keys(&common)?;
            let mut rng = rng_from_seed(seed(&common, &keys)?);
            let target = match (arch, pick(modes, &keys, "modes")?) {
                (Some(path), _) => {
                    let arch: Architecture = read_json(&path)?;
                    let phases = sample_uniform_phases(arch.modes(), arch.phase_layers(), &mut rng);
                    forward_unitary(&arch, &phases)?
                }
                (None, Some(n)) if n >= 1 => sample_haar_unitary(n, &mut rng)?,
                _ => {
                    return Err(Failure::Usage(
                        "gen-target needs --arch or --modes >= 1".into(),
                    ))
                }
            };
            emit(common.out.as_deref(), &target)
        }

        Cmd::Train {
            dataset,
            solver,
            rcond,
            feature_space,
            epochs,
            learning_rate,
            batch_size,
            common,
        } => {
            let keys = config_keys(&common)?;
            let data: TrainingSet = read_json(&dataset)?;
            let design = build_design_matrix(&data)?;
            let (model, report) = match solver {
                Solver::Pinv => {
                    let mut opts: PinvOptions = from_keys(&keys)?;
                    if let Some(r) = rcond {
                        opts.rcond = r;
                    }
                    if let Some(s) = feature_space {
                        opts.feature_space = match s {
                            Space::Full => FeatureSpace::Full,
                            Space::Slice => FeatureSpace::Slice,
                        };
                    }
                    if !(opts.rcond > 0.0 && opts.rcond < 1.0) {
                        return Err(Failure::Usage("--rcond must lie in (0, 1)".into()));
                    }
                    solve_pinv_with(&design, &data, &opts)?
                }
                Solver::Iterative => {
                    let mut cfg: IterativeConfig = from_keys(&keys)?;
                    cfg.seed = seed(&common, &keys)?;
                    cfg.epochs = epochs.unwrap_or(cfg.epochs);
                    cfg.learning_rate = learning_rate.or(cfg.learning_rate);
                    cfg.batch_size = batch_size.or(cfg.batch_size);
                    solve_iterative(&design, &data, &cfg, None)?
                }
            };
            if report.rank_deficient {
                eprintln!(
                    "warning: rank-deficient design (rank {} < {} features, {} samples); \
                     returning the minimum-norm solution",
                    report.rank_estimate, report.feature_dim, report.m_samples
                );
            }
            match common.out.as_deref() {
                Some(out) => {
                    write_json(out, &model)?;
                    write_json(sibling(out, "report.json"), &report)?;
                }
                None => emit(None, &json!({ "model": model, "report": report }))?,
            }
            Ok(())
        }

        Cmd::Evaluate {
            model,
            arch,
            dataset,
            test_configs,
            common,
        } => {
            let keys = config_keys(&common)?;
            let model: LinearModel = read_json(&model)?;
            let result = match (arch, dataset) {
                (_, Some(path)) => {
                    let data: TrainingSet = read_json(&path)?;
                    let loss = training_loss(&model, &data)? / model.modes() as f64;
                    json!({ "dataset_loss": loss, "samples": data.len() })
                }
                (Some(path), None) => {
                    let arch: Architecture = read_json(&path)?;
                    model.ensure_architecture(&arch)?;
                    let count = pick(test_configs, &keys, "test_configs")?.unwrap_or(20);
                    if count < 1 {
                        return Err(Failure::Usage("--test-configs must be >= 1".into()));
                    }
                    let mut rng = rng_from_seed(seed(&common, &keys)?);
                    let test: Vec<PhaseConfig> = (0..count)
                        .map(|_| sample_uniform_phases(arch.modes(), arch.phase_layers(), &mut rng))
                        .collect();
                    let loss = held_out_loss(&model, &arch, &test)?;
                    json!({ "test_loss": loss, "test_configs": count })
                }
                (None, None) => unreachable!("clap requires --arch or --dataset"),
            };
            emit(common.out.as_deref(), &result)
        }

        Cmd::Program {
            model,
            target,
            restarts,
            max_iters,
            tol,
            common,
        } => {
            let keys = config_keys(&common)?;
            let mut cfg: ProgramConfig = from_keys(&keys)?;
            cfg.seed = seed(&common, &keys)?;
            cfg.restarts = restarts.unwrap_or(cfg.restarts);
            cfg.max_iters = max_iters.unwrap_or(cfg.max_iters);
            cfg.tol = tol.unwrap_or(cfg.tol);
            let model: LinearModel = read_json(&model)?;
            let target: ComplexMatrix = read_json(&target)?;
            let result = program_phases(&model, &target, &cfg)?;
            emit(common.out.as_deref(), &result)
        }

        Cmd::TuneAls {
            arch,
            target,
            eps,
            passes,
            m_samples,
            bfgs_iters,
            initial_phases,
            common,
        } => {
            let keys = config_keys(&common)?;
            let arch: Architecture = read_json(&arch)?;
            let target: ComplexMatrix = read_json(&target)?;
            let eps = pick(eps, &keys, "eps")?.unwrap_or(0.0);
            let mut cfg: TuneConfig = from_keys(&keys)?;
            cfg.seed = seed(&common, &keys)?;
            cfg.passes = passes.unwrap_or(cfg.passes);
            cfg.m_samples_per_layer = m_samples.or(cfg.m_samples_per_layer);
            cfg.bfgs_iters = bfgs_iters.unwrap_or(cfg.bfgs_iters);
            if let Some(p) = initial_phases {
                cfg.initial_phases = Some(read_json(&p)?);
            }
            let start = PhaseConfig::zeros(arch.phase_layers(), arch.modes());
            let mut device = DeviceOracle::new(arch, start, eps)?;
            let trace = tune(&mut device, &target, &cfg)?;
            let summary = json!({
                "initial_loss": trace.initial_loss,
                "final_loss": trace.final_loss,
                "queries": trace.queries,
                "passes": cfg.passes,
            });
            match common.out.as_deref() {
                Some(out) => {
                    write_trace_csv(out, &trace)?;
                    write_json(sibling(out, "phases.json"), &trace.final_phases)?;
                    emit(None, &summary)
                }
                None => emit(None, &json!({ "summary": summary, "trace": trace })),
            }
        }

        Cmd::Experiment {
            id,
            trials,
            paper_scale,
            threads,
            common,
        } => {
            let id: ExperimentId = id
                .parse()
                .map_err(|e: Error| Failure::Usage(e.to_string()))?;
            let mut config = match &common.config {
                Some(p) => {
                    let v: Value = read_json(p)?;
                    let base = if paper_scale {
                        let mut merged = serde_json::to_value(ExperimentConfig::full_scale(id))
                            .expect("config serializes");
                        if let (Value::Object(m), Value::Object(o)) = (&mut merged, v) {
                            m.extend(o);
                        }
                        merged
                    } else {
                        v
                    };
                    ExperimentConfig::from_json_overrides(base, Some(id))
                        .map_err(|e| Failure::Usage(e.to_string()))?
                }
                None if paper_scale => ExperimentConfig::full_scale(id),
                None => ExperimentConfig::desk(id),
            };
            if config.experiment != id {
                return Err(Failure::Usage(format!(
                    "config is for {}, command asked for {id}",
                    config.experiment
                )));
            }
            if let Some(s) = common.seed {
                config.seed = s;
            }
            if let Some(t) = trials {
                config.trials = t;
            }
            config
                .validate()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let result = run_experiment(&config, threads)?;
            let dir = common.out.unwrap_or_else(|| PathBuf::from("results"));
            for p in write_outputs(&result, &dir)? {
                eprintln!("wrote {}", p.display());
            }
            for f in &result.fits {
                println!(
                    "eps={}: k = {:.4} ± {:.4}, C = {:.4e}",
                    f.noise_eps, f.fit.exponent, f.fit.stderr_exponent, f.fit.amplitude
                );
            }
            for t in &result.traces {
                println!(
                    "eps={}: mean loss {:.3e} -> {:.3e} (median final {:.3e})",
                    t.noise_eps,
                    t.initial_mean_loss(),
                    t.final_mean_loss(),
                    t.final_median_loss()
                );
            }
            Ok(())
        }

        Cmd::FitPowerlaw {
            input,
            x_column,
            y_column,
            common,
        } => {
            let keys = config_keys(&common)?;
            let x = pick(x_column, &keys, "x_column")?.unwrap_or_else(|| "sweep_value".into());
            let y = pick(y_column, &keys, "y_column")?.unwrap_or_else(|| "mean_loss".into());
            let points = read_csv_columns(&input, &x, &y)?;
            let fit = fit_power_law(&points)?;
            emit(common.out.as_deref(), &fit)
        }
    }
}
