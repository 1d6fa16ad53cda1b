//! The six samplers behind one trajectory driver.

mod implicit;
mod steps;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::{PropensityView, ReactionNetwork, SystemState};
use crate::sampling::RngStream;
use crate::stepping::{Firings, MethodTag, SolverConfig, StepProposal};

pub use implicit::{implicit_solve, ImplicitSolveResult, NewtonOptions};
pub use steps::{
    empty_leap_fallback, implicit_firings, keeps_nonnegative, r_leap_step, r_leap_with_l, s_adaptive_step,
    s_leap_step, ssa_step, tau_adaptive_step, tau_explicit_step, StepContext, StepDecision,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Ssa,
    TauExplicit,
    TauAdaptive,
    RLeap,
    SLeap,
    SAdaptive,
}

impl SolverKind {
    pub const ALL: [SolverKind; 6] = [
        SolverKind::Ssa,
        SolverKind::TauExplicit,
        SolverKind::TauAdaptive,
        SolverKind::RLeap,
        SolverKind::SLeap,
        SolverKind::SAdaptive,
    ];

    /// Command-line name.
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Ssa => "ssa",
            SolverKind::TauExplicit => "tau",
            SolverKind::TauAdaptive => "tau-adaptive",
            SolverKind::RLeap => "r",
            SolverKind::SLeap => "s",
            SolverKind::SAdaptive => "s-adaptive",
        }
    }

    fn reorders(self) -> bool {
        matches!(
            self,
            SolverKind::RLeap | SolverKind::SLeap | SolverKind::SAdaptive
        )
    }

    /// Runs one step of this sampler at the given context.
    pub fn step(
        self,
        ctx: &StepContext<'_>,
        rng: &mut RngStream,
    ) -> Result<StepDecision, SolverError> {
        match self {
            SolverKind::Ssa => Ok(ssa_step(ctx.props, rng)),
            SolverKind::TauExplicit => tau_explicit_step(ctx, rng),
            SolverKind::TauAdaptive => tau_adaptive_step(ctx, rng),
            SolverKind::RLeap => r_leap_step(ctx, rng),
            SolverKind::SLeap => s_leap_step(ctx, rng),
            SolverKind::SAdaptive => s_adaptive_step(ctx, rng),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ssa" => SolverKind::Ssa,
            "tau" | "tau_explicit" => SolverKind::TauExplicit,
            "tau-adaptive" | "tau_adaptive" => SolverKind::TauAdaptive,
            "r" | "r_leap" => SolverKind::RLeap,
            "s" | "s_leap" => SolverKind::SLeap,
            "s-adaptive" | "s_adaptive" => SolverKind::SAdaptive,
            other => {
                return Err(format!(
                    "unknown method `{other}` (expected ssa, tau, tau-adaptive, r, s or s-adaptive)"
                ))
            }
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("{kind}: proposal at t={t} rejected more than {retries} times")]
    RetryCapExceeded {
        kind: SolverKind,
        t: f64,
        retries: u32,
    },
    #[error("implicit solve did not converge at t={t} (residual {residual:e})")]
    ImplicitSolveFailed { t: f64, residual: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Counters collected over one trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    /// Committed steps, SSA-burst steps included.
    pub steps_total: u64,
    pub ssa_fallback_steps: u64,
    pub implicit_steps: u64,
    pub rejected_proposals: u64,
    pub rng_draws: u64,
    /// Smallest population ever committed in any species.
    pub min_population: i64,
    pub wall_time: Duration,
}

/// Recorded populations at the grid times plus run statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `states[g][i]`: population of species `i` at `times[g]`.
    pub states: Vec<Vec<i64>>,
    pub final_state: SystemState,
    pub stats: StepStats,
    /// `a0 = 0` was reached before the end time.
    pub exhausted: bool,
}

/// `n` equally spaced times in `(0, t_end]`.
pub fn uniform_grid(t_end: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| t_end * k as f64 / n as f64).collect()
}

/// Nearest-landed-time readout of the grid.
struct Recorder<'g> {
    grid: &'g [f64],
    next: usize,
    states: Vec<Vec<i64>>,
}

impl<'g> Recorder<'g> {
    fn new(grid: &'g [f64]) -> Self {
        Recorder {
            grid,
            next: 0,
            states: Vec::with_capacity(grid.len()),
        }
    }

    fn due(&self, t_new: f64) -> bool {
        self.next < self.grid.len() && self.grid[self.next] <= t_new
    }

    /// The state jumped from `old` at `t_old` to `new` at `t_new`.
    fn land(&mut self, t_old: f64, old: &[i64], t_new: f64, new: &[i64]) {
        while self.due(t_new) {
            let g = self.grid[self.next];
            let pick = if g - t_old <= t_new - g { old } else { new };
            self.states.push(pick.to_vec());
            self.next += 1;
        }
    }

    fn finish(mut self, last: &[i64]) -> Vec<Vec<i64>> {
        while self.next < self.grid.len() {
            self.states.push(last.to_vec());
            self.next += 1;
        }
        self.states
    }
}

struct Driver<'a, 'g> {
    network: &'a ReactionNetwork,
    state: SystemState,
    recorder: Recorder<'g>,
    stats: StepStats,
}

impl Driver<'_, '_> {
    fn track_min(&mut self) {
        if let Some(&low) = self.state.x.iter().min() {
            self.stats.min_population = self.stats.min_population.min(low);
        }
    }

    fn commit_single(&mut self, tau: f64, j: usize) {
        let t_new = self.state.t + tau;
        let nu = &self.network.reaction(j).nu;
        if self.recorder.due(t_new) {
            let old = self.state.x.clone();
            apply_nu(&mut self.state.x, nu, 1);
            self.recorder.land(self.state.t, &old, t_new, &self.state.x);
        } else {
            apply_nu(&mut self.state.x, nu, 1);
        }
        self.track_min();
        self.state.t = t_new;
        self.stats.steps_total += 1;
    }

    fn commit(&mut self, p: &StepProposal) {
        self.stats.rejected_proposals += u64::from(p.rejections);
        if matches!(p.method, MethodTag::Implicit | MethodTag::CriticalImplicit) {
            self.stats.implicit_steps += 1;
        }
        if p.idle > 0.0 {
            let t_idle = self.state.t + p.idle;
            let x = &self.state.x;
            self.recorder.land(self.state.t, x, t_idle, x);
            self.state.t = t_idle;
        }
        match &p.firings {
            Firings::Single(j) => self.commit_single(p.tau, *j),
            Firings::Counts(k) => {
                let t_new = self.state.t + p.tau;
                let old = self.recorder.due(t_new).then(|| self.state.x.clone());
                for (j, &kj) in k.iter().enumerate() {
                    if kj > 0 {
                        let nu = &self.network.reaction(j).nu;
                        apply_nu(&mut self.state.x, nu, kj as i64);
                    }
                }
                self.track_min();
                if let Some(old) = old {
                    self.recorder.land(self.state.t, &old, t_new, &self.state.x);
                }
                self.state.t = t_new;
                self.stats.steps_total += 1;
            }
        }
    }
}

fn apply_nu(x: &mut [i64], nu: &[(usize, i64)], times: i64) {
    for &(s, v) in nu {
        x[s] += v * times;
    }
}

/// Simulates one trajectory from the network's initial state to `t_end`,
/// reading populations off at `grid` with the nearest-landed-time rule.
/// With `t_end = 0` the initial state is returned as the only record.
pub fn run_trajectory(
    network: &ReactionNetwork,
    kind: SolverKind,
    config: &SolverConfig,
    rng: &mut RngStream,
    t_end: f64,
    grid: &[f64],
) -> Result<Trajectory, SolverError> {
    config.validate().map_err(SolverError::InvalidConfig)?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(SolverError::InvalidConfig(format!(
            "end time must be finite and nonnegative, got {t_end}"
        )));
    }
    let start = Instant::now();
    let draws_before = rng.draws();
    let initial = network.initial_state();
    let min_population = initial.x.iter().copied().min().unwrap_or(0);
    if t_end == 0.0 {
        return Ok(Trajectory {
            times: vec![0.0],
            states: vec![initial.x.clone()],
            final_state: initial,
            stats: StepStats {
                min_population,
                ..StepStats::default()
            },
            exhausted: false,
        });
    }

    let mut driver = Driver {
        network,
        state: initial,
        recorder: Recorder::new(grid),
        stats: StepStats {
            min_population,
            ..StepStats::default()
        },
    };
    let m = network.num_reactions();
    let mut props = PropensityView::zeros(m);
    let mut order: Vec<usize> = (0..m).collect();
    let mut leap_steps: u64 = 0;
    let mut burst_left: u64 = 0;
    let mut exhausted = false;

    while driver.state.t < t_end {
        let volume = network.apply_hooks(&mut driver.state, rng);
        driver.track_min();
        network.fill_propensities(&driver.state.x, volume, &mut props);
        if !(props.a0 > 0.0) {
            exhausted = true;
            break;
        }
        if kind == SolverKind::Ssa || burst_left > 0 {
            let tau = rng.exponential(1.0 / props.a0);
            let j = rng.discrete_with_total(&props.a, props.a0);
            driver.commit_single(tau, j);
            if burst_left > 0 {
                burst_left -= 1;
                driver.stats.ssa_fallback_steps += 1;
            }
            continue;
        }
        if kind.reorders() && leap_steps % config.reorder_period == 0 {
            order.sort_by(|&i, &j| props.a[j].total_cmp(&props.a[i]).then(i.cmp(&j)));
        }
        let ctx = StepContext {
            network,
            x: &driver.state.x,
            t: driver.state.t,
            props: &props,
            config,
            order: &order,
            volume,
            tau_cap: t_end - driver.state.t,
        };
        match kind.step(&ctx, rng)? {
            StepDecision::Exhausted => {
                exhausted = true;
                break;
            }
            StepDecision::SsaBurst => burst_left = config.ssa_burst.max(1),
            StepDecision::Leap(p) => {
                driver.commit(&p);
                leap_steps += 1;
            }
        }
    }

    let Driver {
        state,
        recorder,
        mut stats,
        ..
    } = driver;
    let states = recorder.finish(&state.x);
    stats.rng_draws = rng.draws() - draws_before;
    stats.wall_time = start.elapsed();
    Ok(Trajectory {
        times: grid.to_vec(),
        states,
        final_state: state,
        stats,
        exhausted,
    })
}
