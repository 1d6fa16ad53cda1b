//! One step of each sampler, from a known state to an accepted proposal.
//!
//! Step routines never mutate the state: they either return a proposal that
//! keeps every population nonnegative, ask the driver for an SSA burst, or
//! report that no reaction can fire. Rejected proposals only cost random
//! draws.

use crate::model::{PropensityView, ReactionNetwork};
use crate::sampling::RngStream;
use crate::stepping::{
    binomial_cascade, critical_reactions, explicit_tau, implicit_tau, negative_control_l,
    partial_equilibrium_mask, r_leap_l, round_nearest, s_leap_l, Firings, MethodTag,
    SolverConfig, StepProposal,
};

use super::implicit::{implicit_solve, NewtonOptions};
use super::{SolverError, SolverKind};

/// Everything a step needs to know about the current state.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub network: &'a ReactionNetwork,
    pub x: &'a [i64],
    pub t: f64,
    pub props: &'a PropensityView,
    pub config: &'a SolverConfig,
    /// Reaction visiting order for the binomial cascade.
    pub order: &'a [usize],
    pub volume: f64,
    /// Replaces an unbounded τ (remaining simulation time).
    pub tau_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepDecision {
    Leap(StepProposal),
    /// Leap too short to pay off: run `ssa_burst` exact steps instead.
    SsaBurst,
    /// `a0 = 0`: nothing can fire any more.
    Exhausted,
}

impl StepContext<'_> {
    fn cap(&self, tau: f64) -> f64 {
        if tau.is_finite() {
            tau
        } else {
            self.tau_cap
        }
    }

    fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.config.newton_tol,
            max_iter: self.config.newton_max_iter,
        }
    }
}

/// True when `x + sum_j k_j nu_j` has no negative component.
pub fn keeps_nonnegative(network: &ReactionNetwork, x: &[i64], k: &[u64]) -> bool {
    let mut next = x.to_vec();
    for (j, &kj) in k.iter().enumerate() {
        if kj == 0 {
            continue;
        }
        for &(s, v) in &network.reaction(j).nu {
            next[s] += v * kj as i64;
        }
    }
    next.iter().all(|&v| v >= 0)
}

struct Retries {
    kind: SolverKind,
    t: f64,
    cap: u32,
    count: u32,
    newton_iterations: u32,
    last_newton_residual: Option<f64>,
}

impl Retries {
    fn new(kind: SolverKind, ctx: &StepContext<'_>) -> Self {
        Retries {
            kind,
            t: ctx.t,
            cap: ctx.config.retry_cap,
            count: 0,
            newton_iterations: 0,
            last_newton_residual: None,
        }
    }

    fn reject(&mut self) -> Result<(), SolverError> {
        self.count += 1;
        if self.count <= self.cap {
            return Ok(());
        }
        Err(match self.last_newton_residual {
            Some(residual) => SolverError::ImplicitSolveFailed {
                t: self.t,
                residual,
            },
            None => SolverError::RetryCapExceeded {
                kind: self.kind,
                t: self.t,
                retries: self.cap,
            },
        })
    }

    fn proposal(&self, idle: f64, tau: f64, firings: Firings, method: MethodTag) -> StepDecision {
        StepDecision::Leap(StepProposal {
            idle,
            tau,
            firings,
            method,
            rejections: self.count,
            newton_iterations: self.newton_iterations,
        })
    }
}

/// Exact step: `tau ~ Exp(1/a0)` then one reaction chosen by propensity.
pub fn ssa_step(props: &PropensityView, rng: &mut RngStream) -> StepDecision {
    if !(props.a0 > 0.0) {
        return StepDecision::Exhausted;
    }
    let tau = rng.exponential(1.0 / props.a0);
    let j = rng.discrete_with_total(&props.a, props.a0);
    StepDecision::Leap(StepProposal {
        idle: 0.0,
        tau,
        firings: Firings::Single(j),
        method: MethodTag::Ssa,
        rejections: 0,
        newton_iterations: 0,
    })
}

/// Non-negative explicit τ-leaping.
pub fn tau_explicit_step(
    ctx: &StepContext<'_>,
    rng: &mut RngStream,
) -> Result<StepDecision, SolverError> {
    tau_leap_step(ctx, rng, false)
}

/// Adaptive explicit/implicit τ-leaping.
pub fn tau_adaptive_step(
    ctx: &StepContext<'_>,
    rng: &mut RngStream,
) -> Result<StepDecision, SolverError> {
    tau_leap_step(ctx, rng, true)
}

fn tau_leap_step(
    ctx: &StepContext<'_>,
    rng: &mut RngStream,
    adaptive: bool,
) -> Result<StepDecision, SolverError> {
    let StepContext {
        network,
        x,
        props,
        config,
        ..
    } = *ctx;
    let a0 = props.a0;
    if !(a0 > 0.0) {
        return Ok(StepDecision::Exhausted);
    }
    let m = network.num_reactions();
    let crit = critical_reactions(network, x, props, config.n_critical);
    let tau_ex = ctx.cap(explicit_tau(network, x, props, config.epsilon, &crit));
    let mut stiff = false;
    let mut tau1 = tau_ex;
    if adaptive {
        let pe = partial_equilibrium_mask(network, props, config.delta);
        let necr: Vec<bool> = (0..m).map(|j| !crit[j] && !pe[j]).collect();
        let tau_im = ctx.cap(implicit_tau(network, x, props, config.epsilon, &necr));
        if tau_im > config.stiffness_factor * tau_ex {
            stiff = true;
            tau1 = tau_im;
        }
    }
    let kind = if adaptive {
        SolverKind::TauAdaptive
    } else {
        SolverKind::TauExplicit
    };
    let crit_weights: Vec<f64> = (0..m)
        .map(|j| if crit[j] { props.a[j] } else { 0.0 })
        .collect();
    let a0c: f64 = crit_weights.iter().sum();
    let noncrit: Vec<bool> = crit.iter().map(|c| !c).collect();
    let threshold = config.ssa_fallback_threshold / a0;
    let mut retries = Retries::new(kind, ctx);

    loop {
        let too_short = if adaptive {
            tau1 <= threshold
        } else {
            tau1 < threshold
        };
        if config.ssa_fallback && too_short {
            return Ok(StepDecision::SsaBurst);
        }
        let tau2 = if a0c > 0.0 {
            rng.exponential(1.0 / a0c)
        } else {
            f64::INFINITY
        };
        let mut k = vec![0_u64; m];
        let (tau, critical_fired) = if tau1 <= tau2 {
            (tau1, None)
        } else {
            let jc = rng.discrete_with_total(&crit_weights, a0c);
            k[jc] = 1;
            (tau2, Some(jc))
        };
        let implicit = stiff && (critical_fired.is_none() || tau2 >= tau_ex);
        for j in 0..m {
            if noncrit[j] {
                k[j] = rng.poisson(props.a[j] * tau);
            }
        }
        if implicit {
            let mut drift = vec![0.0; network.num_species()];
            for (j, r) in network.reactions().iter().enumerate() {
                let weight = if noncrit[j] {
                    k[j] as f64 - props.a[j] * tau
                } else {
                    k[j] as f64
                };
                if weight != 0.0 {
                    for &(s, v) in &r.nu {
                        drift[s] += v as f64 * weight;
                    }
                }
            }
            let solve = implicit_solve(network, x, &drift, &noncrit, tau, ctx.volume, ctx.newton());
            retries.newton_iterations += solve.iterations;
            if !solve.converged {
                retries.last_newton_residual = Some(solve.residual);
                retries.reject()?;
                tau1 = tau / 2.0;
                continue;
            }
            for j in 0..m {
                if noncrit[j] {
                    let a_star = network.propensity_relaxed(j, &solve.x_star, ctx.volume);
                    let kj = round_nearest(a_star * tau + k[j] as f64 - props.a[j] * tau);
                    k[j] = kj.max(0) as u64;
                }
            }
        }
        if keeps_nonnegative(network, x, &k) {
            let method = match (critical_fired.is_some(), implicit) {
                (false, false) => MethodTag::Explicit,
                (false, true) => MethodTag::Implicit,
                (true, false) => MethodTag::Critical,
                (true, true) => MethodTag::CriticalImplicit,
            };
            return Ok(retries.proposal(0.0, tau, Firings::Counts(k), method));
        }
        retries.reject()?;
        tau1 = tau / 2.0;
    }
}

/// R-leaping: preselect L, split it by the binomial cascade, draw the time
/// span from `Gamma(L, 1/a0)`.
pub fn r_leap_step(ctx: &StepContext<'_>, rng: &mut RngStream) -> Result<StepDecision, SolverError> {
    let StepContext {
        network,
        x,
        props,
        config,
        ..
    } = *ctx;
    if !(props.a0 > 0.0) {
        return Ok(StepDecision::Exhausted);
    }
    let mut l = r_leap_l(network, x, props, config.epsilon, config.l_max);
    if config.negative_control {
        if let Some(bound) = negative_control_l(network, x, props, config.theta) {
            l = l.min(bound);
        }
    }
    r_leap_with_l(ctx, rng, l)
}

/// R-leaping proposal with a given number of firings `l >= 1`.
pub fn r_leap_with_l(
    ctx: &StepContext<'_>,
    rng: &mut RngStream,
    mut l: u64,
) -> Result<StepDecision, SolverError> {
    let props = ctx.props;
    if !(props.a0 > 0.0) {
        return Ok(StepDecision::Exhausted);
    }
    let mut retries = Retries::new(SolverKind::RLeap, ctx);
    loop {
        let k = binomial_cascade(rng, l, props, ctx.order);
        if keeps_nonnegative(ctx.network, ctx.x, &k) {
            let tau = rng.gamma(l, 1.0 / props.a0);
            return Ok(retries.proposal(0.0, tau, Firings::Counts(k), MethodTag::Explicit));
        }
        retries.reject()?;
        l = (l / 2).max(1);
    }
}

/// Explicit S-leaping: τ from the leap condition, `L ~ Poisson(a0 τ)`,
/// firings by the binomial cascade.
pub fn s_leap_step(ctx: &StepContext<'_>, rng: &mut RngStream) -> Result<StepDecision, SolverError> {
    let StepContext {
        network,
        x,
        props,
        config,
        ..
    } = *ctx;
    if !(props.a0 > 0.0) {
        return Ok(StepDecision::Exhausted);
    }
    let none = vec![false; network.num_reactions()];
    let tau = ctx.cap(explicit_tau(network, x, props, config.epsilon, &none));
    s_leap_from_tau(ctx, rng, tau, SolverKind::SLeap)
}

fn s_leap_from_tau(
    ctx: &StepContext<'_>,
    rng: &mut RngStream,
    mut tau: f64,
    kind: SolverKind,
) -> Result<StepDecision, SolverError> {
    let StepContext {
        network,
        x,
        props,
        config,
        ..
    } = *ctx;
    let a0 = props.a0;
    let mut retries = Retries::new(kind, ctx);
    loop {
        let mut l = s_leap_l(rng, a0, tau);
        if config.negative_control {
            if let Some(bound) = negative_control_l(network, x, props, config.theta) {
                if bound < l {
                    l = bound;
                    tau = rng.gamma(l, 1.0 / a0);
                }
            }
        }
        if l == 0 {
            let StepDecision::Leap(mut p) = empty_leap_fallback(ctx, rng) else {
                unreachable!("a0 > 0 checked by the caller");
            };
            p.idle = tau;
            p.rejections = retries.count;
            return Ok(StepDecision::Leap(p));
        }
        let k = binomial_cascade(rng, l, props, ctx.order);
        if keeps_nonnegative(network, x, &k) {
            return Ok(retries.proposal(0.0, tau, Firings::Counts(k), MethodTag::Explicit));
        }
        retries.reject()?;
        tau /= 2.0;
    }
}

/// The S-leaping continuation after an empty leap: one firing with
/// `tau ~ Gamma(1, 1/a0)`. The idle time of the empty leap is left at 0.
pub fn empty_leap_fallback(ctx: &StepContext<'_>, rng: &mut RngStream) -> StepDecision {
    let props = ctx.props;
    if !(props.a0 > 0.0) {
        return StepDecision::Exhausted;
    }
    let tau = rng.gamma(1, 1.0 / props.a0);
    let k = binomial_cascade(rng, 1, props, ctx.order);
    StepDecision::Leap(StepProposal {
        idle: 0.0,
        tau,
        firings: Firings::Counts(k),
        method: MethodTag::EmptyLeap,
        rejections: 0,
        newton_iterations: 0,
    })
}

/// Firing counts `max(0, round(a_j(x_star) tau + noise_j))`.
pub fn implicit_firings(
    network: &ReactionNetwork,
    x_star: &[f64],
    tau: f64,
    noise: &[f64],
    volume: f64,
) -> Vec<u64> {
    noise
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let a_star = network.propensity_relaxed(j, x_star, volume);
            round_nearest(a_star * tau + n).max(0) as u64
        })
        .collect()
}

/// Adaptive S-leaping: explicit S-leaping when non-stiff, otherwise the
/// multinomial-split implicit update with the mean approximation of
/// `L(t + tau)`.
pub fn s_adaptive_step(
    ctx: &StepContext<'_>,
    rng: &mut RngStream,
) -> Result<StepDecision, SolverError> {
    let StepContext {
        network,
        x,
        props,
        config,
        ..
    } = *ctx;
    let a0 = props.a0;
    if !(a0 > 0.0) {
        return Ok(StepDecision::Exhausted);
    }
    let m = network.num_reactions();
    let none = vec![false; m];
    let tau_ex = ctx.cap(explicit_tau(network, x, props, config.epsilon, &none));
    let pe = partial_equilibrium_mask(network, props, config.delta);
    let necr: Vec<bool> = pe.iter().map(|p| !p).collect();
    let tau_im = ctx.cap(implicit_tau(network, x, props, config.epsilon, &necr));
    if !(tau_im > config.stiffness_factor * tau_ex) {
        return s_leap_from_tau(ctx, rng, tau_ex, SolverKind::SAdaptive);
    }

    let all = vec![true; m];
    let mut tau = tau_im;
    let mut retries = Retries::new(SolverKind::SAdaptive, ctx);
    loop {
        let l = s_leap_l(rng, a0, tau);
        let km = binomial_cascade(rng, l, props, ctx.order);
        let noise: Vec<f64> = (0..m)
            .map(|j| km[j] as f64 - props.a[j] / a0 * l as f64)
            .collect();
        let mut drift = vec![0.0; network.num_species()];
        for (j, r) in network.reactions().iter().enumerate() {
            if noise[j] != 0.0 {
                for &(s, v) in &r.nu {
                    drift[s] += v as f64 * noise[j];
                }
            }
        }
        let solve = implicit_solve(network, x, &drift, &all, tau, ctx.volume, ctx.newton());
        retries.newton_iterations += solve.iterations;
        if !solve.converged {
            retries.last_newton_residual = Some(solve.residual);
            retries.reject()?;
            tau /= 2.0;
            continue;
        }
        let k = implicit_firings(network, &solve.x_star, tau, &noise, ctx.volume);
        if keeps_nonnegative(network, x, &k) {
            return Ok(retries.proposal(0.0, tau, Firings::Counts(k), MethodTag::Implicit));
        }
        retries.reject()?;
        tau /= 2.0;
    }
}
