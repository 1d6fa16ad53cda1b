//! Ensembles, histogram distance against a reference, and step/speed-up
//! reports, with their CSV writers.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::model::ReactionNetwork;
use crate::sampling::RngStream;
use crate::solvers::{run_trajectory, uniform_grid, SolverError, SolverKind, StepStats};
use crate::stepping::SolverConfig;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty sample")]
    EmptySample,
    #[error("invalid ensemble: {0}")]
    InvalidSpec(String),
    #[error("ensembles were recorded on different grids")]
    GridMismatch,
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("trajectory {index}: {source}")]
    Solver {
        index: usize,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub const DEFAULT_GRID_POINTS: usize = 25;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_TRAJECTORIES: usize = 10_000;

/// What to simulate and how to record it.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub kind: SolverKind,
    pub config: SolverConfig,
    pub n_s: usize,
    pub t_end: f64,
    pub grid: Vec<f64>,
    pub bins: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    /// Defaults: 10^4 trajectories, 25 grid points, 10 bins.
    pub fn new(kind: SolverKind, config: SolverConfig, t_end: f64, seed: u64) -> Self {
        EnsembleSpec {
            kind,
            config,
            n_s: DEFAULT_TRAJECTORIES,
            t_end,
            grid: uniform_grid(t_end, DEFAULT_GRID_POINTS),
            bins: DEFAULT_BINS,
            seed,
        }
    }

    pub fn with_trajectories(mut self, n_s: usize) -> Self {
        self.n_s = n_s;
        self
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.n_s < 2 {
            return Err(AnalysisError::InvalidSpec(format!(
                "need at least 2 trajectories, got {}",
                self.n_s
            )));
        }
        if self.bins < 2 {
            return Err(AnalysisError::InvalidSpec(format!(
                "need at least 2 bins, got {}",
                self.bins
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(AnalysisError::InvalidSpec(format!(
                "end time must be positive, got {}",
                self.t_end
            )));
        }
        if self.grid.is_empty() || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AnalysisError::InvalidSpec(
                "grid must be nonempty and strictly increasing".into(),
            ));
        }
        self.config.validate().map_err(AnalysisError::InvalidSpec)
    }
}

/// Per-trajectory grid readouts and statistics, indexed by trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub kind: SolverKind,
    pub grid: Vec<f64>,
    /// `states[r][g][i]`: run `r`, grid point `g`, species `i`.
    pub states: Vec<Vec<Vec<i64>>>,
    pub stats: Vec<StepStats>,
}

impl Ensemble {
    /// Runs `spec.n_s` trajectories on `jobs` threads; trajectory `k` uses
    /// stream `k` of `spec.seed`, so the result does not depend on `jobs`.
    pub fn run(
        network: &ReactionNetwork,
        spec: &EnsembleSpec,
        jobs: usize,
    ) -> Result<Ensemble, AnalysisError> {
        spec.validate()?;
        let simulate = |k: usize| {
            let mut rng = RngStream::new(spec.seed, k as u64);
            run_trajectory(network, spec.kind, &spec.config, &mut rng, spec.t_end, &spec.grid)
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| AnalysisError::InvalidSpec(e.to_string()))?;
        let results: Vec<_> = pool.install(|| (0..spec.n_s).into_par_iter().map(simulate).collect());
        let mut states = Vec::with_capacity(spec.n_s);
        let mut stats = Vec::with_capacity(spec.n_s);
        for (index, r) in results.into_iter().enumerate() {
            let traj = r.map_err(|source| AnalysisError::Solver { index, source })?;
            states.push(traj.states);
            stats.push(traj.stats);
        }
        Ok(Ensemble {
            kind: spec.kind,
            grid: spec.grid.clone(),
            states,
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Populations of `species` at grid point `g` across all runs.
    pub fn sample(&self, g: usize, species: usize) -> Vec<i64> {
        self.states.iter().map(|run| run[g][species]).collect()
    }

    pub fn mean_steps(&self) -> f64 {
        self.stats.iter().map(|s| s.steps_total as f64).sum::<f64>() / self.len() as f64
    }

    pub fn mean_wall_ms(&self) -> f64 {
        self.stats
            .iter()
            .map(|s| s.wall_time.as_secs_f64() * 1e3)
            .sum::<f64>()
            / self.len() as f64
    }

    /// Average RNG draws per committed step.
    pub fn draws_per_step(&self) -> f64 {
        let draws: u64 = self.stats.iter().map(|s| s.rng_draws).sum();
        let steps: u64 = self.stats.iter().map(|s| s.steps_total).sum();
        draws as f64 / steps.max(1) as f64
    }

    pub fn min_population(&self) -> i64 {
        self.stats.iter().map(|s| s.min_population).min().unwrap_or(0)
    }
}

/// Two samples binned on shared edges over their pooled range.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramPair {
    pub edges: Vec<f64>,
    pub width: f64,
    pub counts_a: Vec<u64>,
    pub counts_b: Vec<u64>,
    pub n_a: usize,
    pub n_b: usize,
}

impl HistogramPair {
    pub fn new(a: &[i64], b: &[i64], bins: usize) -> Result<Self, AnalysisError> {
        if a.is_empty() || b.is_empty() {
            return Err(AnalysisError::EmptySample);
        }
        if bins == 0 {
            return Err(AnalysisError::InvalidSpec("need at least 1 bin".into()));
        }
        let (lo, hi) = a
            .iter()
            .chain(b)
            .fold((i64::MAX, i64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = (hi - lo) as i128;
        let width = (hi - lo) as f64 / bins as f64;
        let edges = (0..=bins).map(|k| lo as f64 + k as f64 * width).collect();
        let bin_of = |v: i64| -> usize {
            if range == 0 {
                return 0;
            }
            let k = (bins as i128 * (v - lo) as i128 / range) as usize;
            k.min(bins - 1)
        };
        let count = |s: &[i64]| {
            let mut c = vec![0u64; bins];
            for &v in s {
                c[bin_of(v)] += 1;
            }
            c
        };
        Ok(HistogramPair {
            edges,
            width,
            counts_a: count(a),
            counts_b: count(b),
            n_a: a.len(),
            n_b: b.len(),
        })
    }

    fn density(counts: &[u64], n: usize, width: f64) -> Vec<f64> {
        counts.iter().map(|&c| c as f64 / (n as f64 * width)).collect()
    }

    /// Normalized density of the first sample; zero-width ranges give an
    /// empty vector since no density exists.
    pub fn density_a(&self) -> Vec<f64> {
        if self.width == 0.0 {
            return Vec::new();
        }
        Self::density(&self.counts_a, self.n_a, self.width)
    }

    pub fn density_b(&self) -> Vec<f64> {
        if self.width == 0.0 {
            return Vec::new();
        }
        Self::density(&self.counts_b, self.n_b, self.width)
    }

    /// `width * sum |P - Q|`, evaluated exactly on integer counts as
    /// `sum |c_a n_b - c_b n_a| / (n_a n_b)`.
    pub fn distance(&self) -> f64 {
        if self.width == 0.0 {
            return 0.0;
        }
        let (na, nb) = (self.n_a as u128, self.n_b as u128);
        let total: u128 = self
            .counts_a
            .iter()
            .zip(&self.counts_b)
            .map(|(&ca, &cb)| (ca as u128 * nb).abs_diff(cb as u128 * na))
            .sum();
        total as f64 / (na * nb) as f64
    }
}

/// Histogram distance in `[0, 2]` between two population samples.
pub fn histogram_distance(a: &[i64], b: &[i64], bins: usize) -> Result<f64, AnalysisError> {
    let pair = HistogramPair::new(a, b, bins)?;
    if pair.width == 0.0 {
        return Ok(if a[0] == b[0] { 0.0 } else { 2.0 });
    }
    Ok(pair.distance())
}

/// Statistical floor of the histogram distance for `n_s` samples.
pub fn self_distance_bound(bins: usize, n_s: usize) -> f64 {
    (4.0 * bins as f64 / (std::f64::consts::PI * n_s as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEntry {
    pub time: f64,
    pub species: String,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub kind: SolverKind,
    pub entries: Vec<ErrorEntry>,
    pub mean: f64,
    pub self_distance: f64,
}

/// Histogram distance of `test` against `reference` at every grid point and
/// tracked species (all species when `tracked` is `None`).
pub fn ensemble_error(
    network: &ReactionNetwork,
    test: &Ensemble,
    reference: &Ensemble,
    tracked: Option<&[String]>,
    bins: usize,
) -> Result<ErrorReport, AnalysisError> {
    if test.grid != reference.grid {
        return Err(AnalysisError::GridMismatch);
    }
    let species: Vec<usize> = match tracked {
        None => (0..network.num_species()).collect(),
        Some(names) => names
            .iter()
            .map(|n| {
                network
                    .species_index(n)
                    .ok_or_else(|| AnalysisError::UnknownSpecies(n.clone()))
            })
            .collect::<Result<_, _>>()?,
    };
    let mut entries = Vec::with_capacity(test.grid.len() * species.len());
    for (g, &time) in test.grid.iter().enumerate() {
        for &i in &species {
            let d = histogram_distance(&test.sample(g, i), &reference.sample(g, i), bins)?;
            entries.push(ErrorEntry {
                time,
                species: network.species_names()[i].clone(),
                d,
            });
        }
    }
    let mean = entries.iter().map(|e| e.d).sum::<f64>() / entries.len().max(1) as f64;
    Ok(ErrorReport {
        kind: test.kind,
        entries,
        mean,
        self_distance: self_distance_bound(bins, test.len().min(reference.len())),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub kind: SolverKind,
    pub mean_steps: f64,
    pub mean_wall_ms: f64,
    pub speedup: f64,
}

/// Mean steps and wall time per ensemble, with speed-up relative to the SSA
/// ensemble in the list (`NaN` if there is none).
pub fn speedup_rows(ensembles: &[&Ensemble]) -> Vec<SpeedupRow> {
    let ssa_ms = ensembles
        .iter()
        .find(|e| e.kind == SolverKind::Ssa)
        .map(|e| e.mean_wall_ms());
    ensembles
        .iter()
        .map(|e| {
            let ms = e.mean_wall_ms();
            SpeedupRow {
                kind: e.kind,
                mean_steps: e.mean_steps(),
                mean_wall_ms: ms,
                speedup: ssa_ms.map_or(f64::NAN, |s| s / ms),
            }
        })
        .collect()
}

/// Runs `repetitions` sequential trajectories per kind, SSA first, and
/// reports steps and wall-time speed-up over SSA.
pub fn speedup_report(
    network: &ReactionNetwork,
    kinds: &[SolverKind],
    config: &SolverConfig,
    t_end: f64,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<SpeedupRow>, AnalysisError> {
    let mut all = vec![SolverKind::Ssa];
    all.extend(kinds.iter().copied().filter(|&k| k != SolverKind::Ssa));
    let ensembles = all
        .into_iter()
        .map(|kind| {
            let spec = EnsembleSpec {
                n_s: repetitions.max(2),
                ..EnsembleSpec::new(kind, config.clone(), t_end, seed)
            };
            Ensemble::run(network, &spec, 1)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(speedup_rows(&ensembles.iter().collect::<Vec<_>>()))
}

/// `run_id,time,<species...>`, one row per run and grid point. `species`
/// selects and orders the columns; `None` writes all species.
pub fn write_trajectories_csv<W: Write>(
    mut out: W,
    network: &ReactionNetwork,
    species: Option<&[usize]>,
    grid: &[f64],
    runs: &[Vec<Vec<i64>>],
) -> io::Result<()> {
    let all: Vec<usize> = (0..network.num_species()).collect();
    let columns = species.unwrap_or(&all);
    write!(out, "run_id,time")?;
    for &i in columns {
        write!(out, ",{}", network.species_names()[i])?;
    }
    writeln!(out)?;
    for (r, run) in runs.iter().enumerate() {
        for (t, state) in grid.iter().zip(run) {
            write!(out, "{r},{t}")?;
            for &i in columns {
                write!(out, ",{}", state[i])?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn write_errors_csv<W: Write>(mut out: W, report: &ErrorReport) -> io::Result<()> {
    writeln!(out, "time,species,d,self_distance")?;
    for e in &report.entries {
        writeln!(out, "{},{},{},{}", e.time, e.species, e.d, report.self_distance)?;
    }
    Ok(())
}

pub fn write_speedup_csv<W: Write>(mut out: W, rows: &[SpeedupRow]) -> io::Result<()> {
    writeln!(out, "method,mean_steps,mean_wall_ms,speedup")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.kind, r.mean_steps, r.mean_wall_ms, r.speedup)?;
    }
    Ok(())
}
