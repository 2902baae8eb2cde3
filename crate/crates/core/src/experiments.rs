//! Monte Carlo sweeps: learning curves (fig4–fig6) and tuning traces
//! (fig7, fig8).
//!
//! Every trial is an independent task with its own seed, derived from the
//! master seed and the trial's position in the grid, and results are
//! reduced in grid order. Output is therefore a function of the config
//! alone, whatever the number of worker threads.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interferometer::{
    forward_unitary, generate_training_set, sample_random_arch, sample_uniform_phases,
};
use crate::io::{fmt_f64, write_csv, write_json};
use crate::layerwise::{tune, DeviceOracle, TuneConfig, TuneTrace};
use crate::numerics::{fit_power_law, PowerLawFit};
use crate::seed::{derive_seed, rng_from_seed};
use crate::trainer::{build_design_matrix, held_out_loss, solve_pinv};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "INTERFEROLAB_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [Self::Fig4, Self::Fig5, Self::Fig6, Self::Fig7, Self::Fig8];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::Fig6 => "fig6",
            Self::Fig7 => "fig7",
            Self::Fig8 => "fig8",
        }
    }

    fn is_tuning(self) -> bool {
        matches!(self, Self::Fig7 | Self::Fig8)
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown experiment {s:?} (expected fig4..fig8)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub modes: usize,
    pub layers: usize,
    /// Training-set sizes swept by fig4/fig5. fig6 uses the single entry
    /// here, or `2 N^L` when empty. Unused by fig7/fig8.
    pub sample_counts: Vec<usize>,
    /// One curve (or trace) per noise level; fig6 sweeps over them.
    pub noise_levels: Vec<f64>,
    /// Independent interferometers averaged per point.
    pub trials: usize,
    /// Held-out phase settings per trial (fig4–fig6).
    pub test_configs: usize,
    /// Sweeps through all layers (fig7/fig8).
    pub passes: usize,
    /// Tomography queries per layer visit; `None` is `N + 1` without noise
    /// and `10 N` with noise.
    pub m_samples_per_layer: Option<usize>,
    pub bfgs_iters: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Defaults sized to finish in minutes on a workstation.
    pub fn desk(id: ExperimentId) -> Self {
        let base = Self {
            experiment: id,
            modes: 3,
            layers: 4,
            sample_counts: vec![],
            noise_levels: vec![0.0],
            trials: 100,
            test_configs: 20,
            passes: 1000,
            m_samples_per_layer: None,
            bfgs_iters: 5,
            seed: 0,
        };
        match id {
            ExperimentId::Fig4 => Self {
                sample_counts: vec![
                    10, 20, 40, 60, 70, 75, 80, 81, 82, 90, 100, 120, 162, 243, 324,
                ],
                noise_levels: vec![0.0, 0.01, 0.05, 0.1],
                ..base
            },
            ExperimentId::Fig5 => Self {
                sample_counts: vec![162, 324, 648, 1296, 2592],
                noise_levels: vec![0.01, 0.05, 0.1],
                ..base
            },
            ExperimentId::Fig6 => Self {
                modes: 2,
                layers: 3,
                noise_levels: vec![
                    0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1,
                ],
                ..base
            },
            ExperimentId::Fig7 => Self {
                modes: 4,
                layers: 5,
                trials: 10,
                ..base
            },
            ExperimentId::Fig8 => Self {
                modes: 5,
                layers: 6,
                noise_levels: vec![0.01, 0.05, 0.1],
                trials: 10,
                ..base
            },
        }
    }

    /// Full-size grids and trial counts (1000 trials for fig4–fig6, 50 for
    /// fig7/fig8).
    pub fn full_scale(id: ExperimentId) -> Self {
        let desk = Self::desk(id);
        match id {
            ExperimentId::Fig4 => Self {
                modes: 4,
                layers: 5,
                sample_counts: vec![
                    128, 256, 512, 768, 896, 960, 1000, 1023, 1024, 1025, 1100, 1280, 1536, 2048,
                    4096,
                ],
                trials: 1000,
                ..desk
            },
            ExperimentId::Fig5 | ExperimentId::Fig6 => Self {
                trials: 1000,
                ..desk
            },
            ExperimentId::Fig7 | ExperimentId::Fig8 => Self { trials: 50, ..desk },
        }
    }

    /// Applies the keys of a JSON object on top of the desk defaults of the
    /// experiment it names (`"experiment"` may be omitted when `id` is given).
    pub fn from_json_overrides(value: serde_json::Value, id: Option<ExperimentId>) -> Result<Self> {
        let serde_json::Value::Object(overrides) = value else {
            return Err(Error::domain("experiment config must be a JSON object"));
        };
        let id = match overrides.get("experiment") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::domain(format!("bad experiment id: {e}")))?,
            None => id.ok_or_else(|| Error::domain("config does not name an experiment"))?,
        };
        let mut merged = serde_json::to_value(Self::desk(id)).expect("config serializes");
        let obj = merged.as_object_mut().expect("config is an object");
        for (k, v) in overrides {
            if !obj.contains_key(&k) {
                return Err(Error::domain(format!("unknown config key {k:?}")));
            }
            obj.insert(k, v);
        }
        serde_json::from_value(merged).map_err(|e| Error::domain(format!("bad config: {e}")))
    }

    /// `2 N^L` unless a count is configured.
    pub fn fig6_samples(&self) -> usize {
        self.sample_counts
            .first()
            .copied()
            .unwrap_or(2 * self.modes.pow(self.layers as u32))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::domain(format!("{}: {msg}", self.experiment)));
        if self.modes < 1 || self.layers < 2 {
            return fail(format!(
                "need modes >= 1 and layers >= 2, got {} x {}",
                self.modes, self.layers
            ));
        }
        if self.trials < 1 {
            return fail("trials must be >= 1".into());
        }
        if self.noise_levels.is_empty() {
            return fail("noise_levels is empty".into());
        }
        if let Some(e) = self
            .noise_levels
            .iter()
            .find(|e| !(**e >= 0.0 && e.is_finite()))
        {
            return fail(format!(
                "noise level {e} is not a finite non-negative number"
            ));
        }
        let dim = self.modes.pow(self.layers as u32);
        match self.experiment {
            ExperimentId::Fig4 | ExperimentId::Fig5 => {
                if self.sample_counts.is_empty() {
                    return fail("sample_counts is empty".into());
                }
                if self.sample_counts.contains(&0) {
                    return fail("sample counts must be >= 1".into());
                }
                if self.test_configs < 1 {
                    return fail("test_configs must be >= 1".into());
                }
                if self.experiment == ExperimentId::Fig5 {
                    if let Some(m) = self.sample_counts.iter().find(|&&m| m <= dim) {
                        return fail(format!("sweep must lie above N^L = {dim}, found M = {m}"));
                    }
                    if self.sample_counts.len() < 3 {
                        return fail("a power-law fit needs at least 3 sample counts".into());
                    }
                }
            }
            ExperimentId::Fig6 => {
                if self.layers != self.modes + 1 {
                    return fail(format!(
                        "requires L = N + 1, got N = {} and L = {}",
                        self.modes, self.layers
                    ));
                }
                if self.sample_counts.len() > 1 || self.fig6_samples() < 1 {
                    return fail("takes a single positive sample count".into());
                }
                if self.test_configs < 1 {
                    return fail("test_configs must be >= 1".into());
                }
            }
            ExperimentId::Fig7 | ExperimentId::Fig8 => {
                if self.passes < 1 || self.bfgs_iters < 1 {
                    return fail("passes and bfgs_iters must be >= 1".into());
                }
                if self.m_samples_per_layer == Some(0) {
                    return fail("m_samples_per_layer must be >= 1".into());
                }
                let noisy = self.noise_levels.iter().any(|&e| e > 0.0);
                let clean = self.noise_levels.contains(&0.0);
                if self.experiment == ExperimentId::Fig7 && noisy {
                    return fail("is noiseless; noise_levels must be [0]".into());
                }
                if self.experiment == ExperimentId::Fig8 && clean {
                    return fail("needs noise levels > 0".into());
                }
            }
        }
        Ok(())
    }
}

/// Mean loss with its standard error at each sweep value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    pub sweep_values: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub stderr_loss: Vec<f64>,
    pub median_loss: Vec<f64>,
    pub trials: Vec<usize>,
}

impl CurveData {
    fn push(&mut self, x: f64, losses: &[f64]) {
        let (mean, stderr, median) = summarize(losses);
        self.sweep_values.push(x);
        self.mean_loss.push(mean);
        self.stderr_loss.push(stderr);
        self.median_loss.push(median);
        self.trials.push(losses.len());
    }

    pub fn len(&self) -> usize {
        self.sweep_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sweep_values.is_empty()
    }

    /// `(sweep value, mean loss)` pairs.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.sweep_values
            .iter()
            .copied()
            .zip(self.mean_loss.iter().copied())
            .collect()
    }

    pub fn mean_at(&self, x: f64) -> Option<f64> {
        self.index_of(x).map(|i| self.mean_loss[i])
    }

    pub fn median_at(&self, x: f64) -> Option<f64> {
        self.index_of(x).map(|i| self.median_loss[i])
    }

    fn index_of(&self, x: f64) -> Option<usize> {
        self.sweep_values
            .iter()
            .position(|&v| (v - x).abs() <= 1e-12 * x.abs().max(1.0))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(
            path,
            &["sweep_value", "mean_loss", "stderr_loss", "trials"],
            (0..self.len()).map(|i| {
                [
                    fmt_f64(self.sweep_values[i]),
                    fmt_f64(self.mean_loss[i]),
                    fmt_f64(self.stderr_loss[i]),
                    self.trials[i].to_string(),
                ]
            }),
        )
    }
}

/// Mean, standard error of the mean, median.
fn summarize(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let stderr = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    (mean, stderr, median(xs))
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// A learning curve at one noise level (fig4/fig5) or one mode count (fig6).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub noise_eps: Option<f64>,
    pub data: CurveData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsFit {
    pub noise_eps: f64,
    /// `mean loss ≈ C M^-k` over the whole sweep.
    pub fit: PowerLawFit,
    /// The same fit restricted to the three largest `M`.
    pub tail_fit: Option<PowerLawFit>,
    /// Fit against the excess sample count `M - N^L` instead of `M`.
    pub excess_fit: Option<PowerLawFit>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanTraceRecord {
    pub pass: usize,
    pub layer: usize,
    pub iteration: usize,
    pub mean_loss: f64,
}

/// Tuning traces at one noise level, averaged over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub name: String,
    pub noise_eps: f64,
    pub initial_losses: Vec<f64>,
    pub final_losses: Vec<f64>,
    pub records: Vec<MeanTraceRecord>,
    /// Largest single-step loss increase seen in any trial.
    pub max_step_increase: f64,
    /// Tomography queries per trial.
    pub queries_per_trial: u64,
}

impl TraceStats {
    fn from_traces(name: String, noise_eps: f64, traces: &[TuneTrace]) -> Self {
        let k = traces.len() as f64;
        let records = traces[0]
            .records
            .iter()
            .enumerate()
            .map(|(idx, r)| MeanTraceRecord {
                pass: r.pass,
                layer: r.layer,
                iteration: r.iteration,
                mean_loss: traces.iter().map(|t| t.records[idx].loss).sum::<f64>() / k,
            })
            .collect();
        let max_step_increase = traces
            .iter()
            .flat_map(|t| {
                let losses: Vec<f64> = std::iter::once(t.initial_loss)
                    .chain(t.records.iter().map(|r| r.loss))
                    .collect();
                losses.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            name,
            noise_eps,
            initial_losses: traces.iter().map(|t| t.initial_loss).collect(),
            final_losses: traces.iter().map(|t| t.final_loss).collect(),
            records,
            max_step_increase,
            queries_per_trial: traces[0].queries,
        }
    }

    pub fn initial_mean_loss(&self) -> f64 {
        self.initial_losses.iter().sum::<f64>() / self.initial_losses.len() as f64
    }

    pub fn final_mean_loss(&self) -> f64 {
        self.final_losses.iter().sum::<f64>() / self.final_losses.len() as f64
    }

    pub fn final_median_loss(&self) -> f64 {
        median(&self.final_losses)
    }

    /// Largest increase between consecutive points of the mean curve.
    pub fn max_mean_step_increase(&self) -> f64 {
        std::iter::once(self.initial_mean_loss())
            .chain(self.records.iter().map(|r| r.mean_loss))
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(
            path,
            &["pass", "layer", "iteration", "mean_loss"],
            self.records.iter().map(|r| {
                [
                    r.pass.to_string(),
                    r.layer.to_string(),
                    r.iteration.to_string(),
                    fmt_f64(r.mean_loss),
                ]
            }),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub curves: Vec<Curve>,
    pub fits: Vec<EpsFit>,
    pub traces: Vec<TraceStats>,
}

/// Builds a pool of `threads` workers, falling back to `INTERFEROLAB_THREADS`
/// and then to rayon's default.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let threads = match threads {
        Some(t) => t,
        None => match std::env::var(THREADS_ENV) {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| Error::domain(format!("{THREADS_ENV}={s:?} is not a thread count")))?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::domain(format!("cannot build thread pool: {e}")))
}

/// Validates `config` and runs it on a dedicated pool.
pub fn run_experiment(
    config: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ExperimentResult> {
    config.validate()?;
    let pool = thread_pool(threads)?;
    pool.install(|| {
        let mut result = ExperimentResult {
            config: config.clone(),
            curves: vec![],
            fits: vec![],
            traces: vec![],
        };
        match config.experiment {
            ExperimentId::Fig4 => result.curves = run_fig4(config)?,
            ExperimentId::Fig5 => (result.curves, result.fits) = run_fig5(config)?,
            ExperimentId::Fig6 => result.curves = vec![run_fig6(config)?],
            ExperimentId::Fig7 => result.traces = run_fig7(config)?,
            ExperimentId::Fig8 => result.traces = run_fig8(config)?,
        }
        Ok(result)
    })
}

fn eps_label(eps: f64) -> String {
    format!("eps{eps}")
}

/// Held-out loss of one freshly drawn (architecture, training set, test set)
/// triple.
fn learning_trial(config: &ExperimentConfig, m: usize, eps: f64, seed: u64) -> Result<f64> {
    let (n, l) = (config.modes, config.layers);
    let mut rng = rng_from_seed(seed);
    let arch = sample_random_arch(n, l, &mut rng)?;
    let training = generate_training_set(&arch, m, eps, &mut rng)?;
    let test: Vec<_> = (0..config.test_configs)
        .map(|_| sample_uniform_phases(n, l, &mut rng))
        .collect();
    let design = build_design_matrix(&training)?;
    let (model, _) = solve_pinv(&design, &training)?;
    held_out_loss(&model, &arch, &test)
}

/// Losses indexed `[point][trial]` for `(m, eps, point seed)` grid points.
fn learning_grid(config: &ExperimentConfig, points: &[(usize, f64, u64)]) -> Result<Vec<Vec<f64>>> {
    let trials = config.trials;
    let flat: Vec<f64> = (0..points.len() * trials)
        .into_par_iter()
        .map(|idx| {
            let (m, eps, seed) = points[idx / trials];
            learning_trial(config, m, eps, derive_seed(seed, (idx % trials) as u64))
        })
        .collect::<Result<_>>()?;
    Ok(flat.chunks(trials).map(<[f64]>::to_vec).collect())
}

fn learning_curves(config: &ExperimentConfig) -> Result<Vec<Curve>> {
    let mut points = Vec::new();
    for (e, &eps) in config.noise_levels.iter().enumerate() {
        let eps_seed = derive_seed(config.seed, e as u64);
        for (k, &m) in config.sample_counts.iter().enumerate() {
            points.push((m, eps, derive_seed(eps_seed, k as u64)));
        }
    }
    let losses = learning_grid(config, &points)?;
    let per_eps = config.sample_counts.len();
    Ok(config
        .noise_levels
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let mut data = CurveData::default();
            for (k, &m) in config.sample_counts.iter().enumerate() {
                data.push(m as f64, &losses[e * per_eps + k]);
            }
            Curve {
                name: format!("{}_{}", config.experiment, eps_label(eps)),
                noise_eps: Some(eps),
                data,
            }
        })
        .collect())
}

/// Held-out loss against training-set size, one curve per noise level.
/// Runs on the current rayon pool.
pub fn run_fig4(config: &ExperimentConfig) -> Result<Vec<Curve>> {
    learning_curves(config)
}

/// As [`run_fig4`], plus a power-law fit of each curve.
pub fn run_fig5(config: &ExperimentConfig) -> Result<(Vec<Curve>, Vec<EpsFit>)> {
    let curves = learning_curves(config)?;
    let dim = config.modes.pow(config.layers as u32) as f64;
    let fits = curves
        .iter()
        .map(|c| {
            let pts = c.data.points();
            let tail = pts.len().checked_sub(3).map(|s| &pts[s..]);
            let excess: Vec<_> = pts.iter().map(|&(m, y)| (m - dim, y)).collect();
            Ok(EpsFit {
                noise_eps: c.noise_eps.unwrap_or(0.0),
                fit: fit_power_law(&pts)?,
                tail_fit: tail.and_then(|t| fit_power_law(t).ok()),
                excess_fit: fit_power_law(&excess).ok(),
            })
        })
        .collect::<Result<_>>()?;
    Ok((curves, fits))
}

/// Held-out loss against noise level at `M = 2 N^L` (or the configured
/// count), with `L = N + 1`.
pub fn run_fig6(config: &ExperimentConfig) -> Result<Curve> {
    let m = config.fig6_samples();
    let points: Vec<_> = config
        .noise_levels
        .iter()
        .enumerate()
        .map(|(e, &eps)| (m, eps, derive_seed(derive_seed(config.seed, e as u64), 0)))
        .collect();
    let losses = learning_grid(config, &points)?;
    let mut data = CurveData::default();
    for (&eps, l) in config.noise_levels.iter().zip(&losses) {
        data.push(eps, l);
    }
    Ok(Curve {
        name: format!("fig6_n{}", config.modes),
        noise_eps: None,
        data,
    })
}

/// `sqrt(L(2ε) / L(ε))` from a fig6 curve, if both noise levels were run.
pub fn linearity_ratio(curve: &CurveData, eps: f64) -> Option<f64> {
    Some((curve.mean_at(2.0 * eps)? / curve.mean_at(eps)?).sqrt())
}

fn tuning_trial(config: &ExperimentConfig, eps: f64, seed: u64) -> Result<TuneTrace> {
    let (n, l) = (config.modes, config.layers);
    let mut rng = rng_from_seed(seed);
    let arch = sample_random_arch(n, l, &mut rng)?;
    let target = forward_unitary(&arch, &sample_uniform_phases(n, l, &mut rng))?;
    let initial = sample_uniform_phases(n, l, &mut rng);
    let mut device = DeviceOracle::new(arch, initial.clone(), eps)?;
    let tune_cfg = TuneConfig {
        passes: config.passes,
        m_samples_per_layer: config.m_samples_per_layer,
        bfgs_iters: config.bfgs_iters,
        seed: derive_seed(seed, 0),
        initial_phases: Some(initial),
    };
    tune(&mut device, &target, &tune_cfg)
}

fn tuning_traces(config: &ExperimentConfig) -> Result<Vec<TraceStats>> {
    let trials = config.trials;
    let levels = &config.noise_levels;
    let flat: Vec<TuneTrace> = (0..levels.len() * trials)
        .into_par_iter()
        .map(|idx| {
            let e = idx / trials;
            let seed = derive_seed(derive_seed(config.seed, e as u64), (idx % trials) as u64);
            tuning_trial(config, levels[e], seed)
        })
        .collect::<Result<_>>()?;
    Ok(levels
        .iter()
        .zip(flat.chunks(trials))
        .map(|(&eps, traces)| {
            let name = match config.experiment {
                ExperimentId::Fig7 if levels.len() == 1 => "fig7".to_string(),
                id => format!("{id}_{}", eps_label(eps)),
            };
            TraceStats::from_traces(name, eps, traces)
        })
        .collect())
}

/// Noiseless tuning toward reachable targets.
pub fn run_fig7(config: &ExperimentConfig) -> Result<Vec<TraceStats>> {
    tuning_traces(config)
}

/// Tuning from noisy tomography, one averaged trace per noise level.
pub fn run_fig8(config: &ExperimentConfig) -> Result<Vec<TraceStats>> {
    tuning_traces(config)
}

#[derive(Serialize)]
struct Metadata<'a> {
    experiment: ExperimentId,
    seed: u64,
    git_describe: String,
    crate_version: &'static str,
    config: &'a ExperimentConfig,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "<[EpsFit]>::is_empty")]
    fits: &'a [EpsFit],
    #[serde(skip_serializing_if = "Option::is_none")]
    linearity_ratio_0_05: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    traces: Vec<TraceSummary>,
}

#[derive(Serialize)]
struct TraceSummary {
    noise_eps: f64,
    initial_mean_loss: f64,
    final_mean_loss: f64,
    final_median_loss: f64,
    max_step_increase: f64,
    queries_per_trial: u64,
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Writes one CSV per curve or trace plus `<id>_meta.json` into `dir`.
/// Returns the paths written.
pub fn write_outputs(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    for c in &result.curves {
        let p = dir.join(format!("{}.csv", c.name));
        c.data.write_csv(&p)?;
        paths.push(p);
    }
    for t in &result.traces {
        let p = dir.join(format!("{}.csv", t.name));
        t.write_csv(&p)?;
        paths.push(p);
    }
    let id = result.config.experiment;
    let meta = Metadata {
        experiment: id,
        seed: result.config.seed,
        git_describe: git_describe(),
        crate_version: env!("CARGO_PKG_VERSION"),
        config: &result.config,
        outputs: paths
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
        fits: &result.fits,
        linearity_ratio_0_05: (id == ExperimentId::Fig6)
            .then(|| {
                result
                    .curves
                    .first()
                    .and_then(|c| linearity_ratio(&c.data, 0.05))
            })
            .flatten(),
        traces: if id.is_tuning() {
            result
                .traces
                .iter()
                .map(|t| TraceSummary {
                    noise_eps: t.noise_eps,
                    initial_mean_loss: t.initial_mean_loss(),
                    final_mean_loss: t.final_mean_loss(),
                    final_median_loss: t.final_median_loss(),
                    max_step_increase: t.max_step_increase,
                    queries_per_trial: t.queries_per_trial,
                })
                .collect()
        } else {
            vec![]
        },
    };
    let meta_path = dir.join(format!("{id}_meta.json"));
    write_json(&meta_path, &meta)?;
    paths.push(meta_path);
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(id: ExperimentId) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk(id);
        c.trials = 4;
        c.test_configs = 5;
        c.passes = 3;
        match id {
            ExperimentId::Fig4 => {
                c.sample_counts = vec![40, 162];
                c.noise_levels = vec![0.0, 0.05];
            }
            ExperimentId::Fig5 => c.sample_counts = vec![162, 324, 648],
            _ => {}
        }
        c
    }

    #[test]
    fn desk_and_full_scale_configs_validate() {
        for id in ExperimentId::ALL {
            ExperimentConfig::desk(id).validate().unwrap();
            ExperimentConfig::full_scale(id).validate().unwrap();
            assert_eq!(id.as_str().parse::<ExperimentId>().unwrap(), id);
        }
        assert!("fig9".parse::<ExperimentId>().is_err());
    }

    #[test]
    fn fig6_default_sample_count_is_twice_feature_dim() {
        for (n, m) in [(2, 16), (3, 162), (4, 2048)] {
            let c = ExperimentConfig {
                modes: n,
                layers: n + 1,
                ..ExperimentConfig::desk(ExperimentId::Fig6)
            };
            assert_eq!(c.fig6_samples(), m);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = ExperimentConfig::desk(ExperimentId::Fig5);
        c.sample_counts = vec![81, 162, 324];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::desk(ExperimentId::Fig6);
        c.layers = 4;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::desk(ExperimentId::Fig7);
        c.noise_levels = vec![0.05];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::desk(ExperimentId::Fig8);
        c.noise_levels = vec![0.0];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::desk(ExperimentId::Fig4);
        c.trials = 0;
        assert!(c.validate().is_err());
        c.trials = 1;
        c.noise_levels.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_overrides_merge_onto_defaults() {
        let v = serde_json::json!({"experiment": "fig7", "trials": 3, "seed": 11});
        let c = ExperimentConfig::from_json_overrides(v, None).unwrap();
        assert_eq!(c.trials, 3);
        assert_eq!(c.seed, 11);
        assert_eq!(c.modes, 4);
        let c =
            ExperimentConfig::from_json_overrides(serde_json::json!({}), Some(ExperimentId::Fig5))
                .unwrap();
        assert_eq!(c, ExperimentConfig::desk(ExperimentId::Fig5));
        assert!(ExperimentConfig::from_json_overrides(
            serde_json::json!({"bogus": 1}),
            Some(ExperimentId::Fig4)
        )
        .is_err());
    }

    #[test]
    fn summary_statistics() {
        let (mean, se, med) = summarize(&[1.0, 2.0, 3.0, 10.0]);
        assert_eq!(mean, 4.0);
        assert_eq!(med, 2.5);
        // squared deviations 9 + 4 + 1 + 36 = 50; variance 50/3, stderr sqrt(50/3/4)
        assert!((se - (50.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(summarize(&[5.0]), (5.0, 0.0, 5.0));
    }

    #[test]
    fn curves_have_grid_shape_and_are_thread_independent() {
        let c = small(ExperimentId::Fig4);
        let one = run_experiment(&c, Some(1)).unwrap();
        let many = run_experiment(&c, Some(4)).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.curves.len(), 2);
        for curve in &one.curves {
            assert_eq!(curve.data.sweep_values, vec![40.0, 162.0]);
            assert!(curve.data.trials.iter().all(|&t| t == 4));
            assert!(curve.data.mean_loss.iter().all(|&l| l >= 0.0));
        }
        assert!(one.curves[0].data.mean_at(162.0).unwrap() < 1e-20);
    }

    #[test]
    fn fig5_reports_one_fit_per_noise_level() {
        let r = run_experiment(&small(ExperimentId::Fig5), Some(2)).unwrap();
        assert_eq!(r.fits.len(), 3);
        assert!(r.fits.iter().all(|f| f.fit.exponent > 0.0));
    }

    #[test]
    fn traces_have_one_row_per_layer_update() {
        let c = small(ExperimentId::Fig7);
        let r = run_experiment(&c, Some(2)).unwrap();
        assert_eq!(r.traces.len(), 1);
        let t = &r.traces[0];
        assert_eq!(t.name, "fig7");
        assert_eq!(t.records.len(), 3 * 5);
        assert_eq!(t.final_losses.len(), 4);
        assert_eq!(t.queries_per_trial, 3 * 5 * 5);
        assert!(t.max_step_increase <= 1e-12);
    }

    #[test]
    fn outputs_are_written_with_headers() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_experiment(&small(ExperimentId::Fig4), Some(2)).unwrap();
        let paths = write_outputs(&r, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let text = std::fs::read_to_string(dir.path().join("fig4_eps0.05.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("sweep_value,mean_loss,stderr_loss,trials")
        );
        assert_eq!(lines.count(), 2);
        let meta: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("fig4_meta.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(meta["seed"], 0);
        assert_eq!(meta["config"]["trials"], 4);
    }
}
