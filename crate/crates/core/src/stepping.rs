//! Leap-size selection and firing-count sampling shared by the solvers.
//!
//! τ selectors return `f64::INFINITY` when no bound is active; solvers cap
//! that at the remaining simulation time. L selectors cap at
//! [`SolverConfig::l_max`].

use crate::model::{PropensityView, ReactionNetwork};
use crate::sampling::RngStream;

/// Tolerances and switches shared by all samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Leap-condition accuracy ε.
    pub epsilon: f64,
    /// A reaction within `n_critical` firings of exhausting a reactant is critical.
    pub n_critical: u64,
    /// Negative-population control strength θ.
    pub theta: f64,
    /// Relative tolerance of the partial-equilibrium test.
    pub delta: f64,
    /// Reorder reaction channels every `reorder_period` committed steps.
    pub reorder_period: u64,
    /// Switch to the implicit branch when `τ_im > stiffness_factor * τ_ex`.
    pub stiffness_factor: f64,
    /// Run an SSA burst when the leap is too short to pay off.
    pub ssa_fallback: bool,
    /// Burst when `τ < ssa_fallback_threshold / a0`.
    pub ssa_fallback_threshold: f64,
    pub ssa_burst: u64,
    /// Bound L by the negative-population control `L''`.
    pub negative_control: bool,
    pub l_max: u64,
    /// Maximum number of halvings of one proposal before the run aborts.
    pub retry_cap: u32,
    pub newton_tol: f64,
    pub newton_max_iter: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 0.03,
            n_critical: 10,
            theta: 0.1,
            delta: 0.05,
            reorder_period: 10_000,
            stiffness_factor: 100.0,
            ssa_fallback: true,
            ssa_fallback_threshold: 10.0,
            ssa_burst: 100,
            negative_control: false,
            l_max: 1_000_000,
            retry_cap: 30,
            newton_tol: 1e-6,
            newton_max_iter: 100,
        }
    }
}

impl SolverConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        if !(self.delta > 0.0) {
            return Err(format!("delta must be positive, got {}", self.delta));
        }
        if self.reorder_period == 0 {
            return Err("reorder period must be at least 1".into());
        }
        if !(self.stiffness_factor > 0.0) {
            return Err("stiffness factor must be positive".into());
        }
        if self.l_max == 0 {
            return Err("l_max must be at least 1".into());
        }
        Ok(())
    }
}

/// Which branch of a solver produced a proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodTag {
    Ssa,
    Explicit,
    Implicit,
    Critical,
    CriticalImplicit,
    /// S-leaping step whose sampled L was zero.
    EmptyLeap,
}

/// Firing counts of one proposal.
#[derive(Debug, Clone, PartialEq)]
pub enum Firings {
    Single(usize),
    Counts(Vec<u64>),
}

impl Firings {
    pub fn total(&self) -> u64 {
        match self {
            Firings::Single(_) => 1,
            Firings::Counts(k) => k.iter().sum(),
        }
    }

    /// Firing count of reaction `j`.
    pub fn get(&self, j: usize) -> u64 {
        match self {
            Firings::Single(i) => u64::from(*i == j),
            Firings::Counts(k) => k[j],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepProposal {
    /// Time advanced without any firing before `tau` (S-leaping with L = 0).
    pub idle: f64,
    pub tau: f64,
    pub firings: Firings,
    pub method: MethodTag,
    /// Proposals rejected for negativity before this one was accepted.
    pub rejections: u32,
    pub newton_iterations: u32,
}

/// Nearest integer, halves rounded away from zero.
pub fn round_nearest(v: f64) -> i64 {
    v.round() as i64
}

/// `J_crit`: reactions with `a_j > 0` within `n_critical` firings of
/// exhausting a consumed species.
pub fn critical_reactions(
    network: &ReactionNetwork,
    x: &[i64],
    props: &PropensityView,
    n_critical: u64,
) -> Vec<bool> {
    let n_c = n_critical as i64;
    network
        .reactions()
        .iter()
        .zip(&props.a)
        .map(|(r, &a)| {
            a > 0.0
                && r
                    .consumed()
                    .map(|(i, v)| round_nearest(x[i] as f64 / v as f64))
                    .min()
                    .is_some_and(|l| l <= n_c)
        })
        .collect()
}

/// `|a_plus - a_minus| <= delta * min(a_plus, a_minus)`.
pub fn in_partial_equilibrium(a_plus: f64, a_minus: f64, delta: f64) -> bool {
    (a_plus - a_minus).abs() <= delta * a_plus.min(a_minus)
}

/// Marks both channels of every reversible pair in partial equilibrium.
pub fn partial_equilibrium_mask(
    network: &ReactionNetwork,
    props: &PropensityView,
    delta: f64,
) -> Vec<bool> {
    let mut mask = vec![false; network.num_reactions()];
    for &(p, m) in network.reversible_pairs() {
        if in_partial_equilibrium(props.a[p], props.a[m], delta) {
            mask[p] = true;
            mask[m] = true;
        }
    }
    mask
}

/// Drift `mu_i` and variance `sigma2_i` for species `i` over the included reactions.
fn drift_and_variance(
    network: &ReactionNetwork,
    props: &PropensityView,
    i: usize,
    include: &dyn Fn(usize) -> bool,
) -> (f64, f64) {
    let mut mu = 0.0;
    let mut sigma2 = 0.0;
    for &(j, v) in network.column(i) {
        if include(j) {
            let v = v as f64;
            mu += v * props.a[j];
            sigma2 += v * v * props.a[j];
        }
    }
    (mu, sigma2)
}

/// `max(eps * x_i / g_i, 1)`, the allowed absolute change of species `i`.
fn allowed_change(network: &ReactionNetwork, x: &[i64], i: usize, epsilon: f64) -> f64 {
    let g = network.g_factor(x, i).unwrap_or(1.0);
    (epsilon * x[i] as f64 / g).max(1.0)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

fn tau_bound(
    network: &ReactionNetwork,
    x: &[i64],
    props: &PropensityView,
    epsilon: f64,
    include: &dyn Fn(usize) -> bool,
) -> f64 {
    let mut tau = f64::INFINITY;
    for &i in network.reactant_species() {
        let (mu, sigma2) = drift_and_variance(network, props, i, include);
        let bound = allowed_change(network, x, i, epsilon);
        tau = tau
            .min(ratio(bound, mu.abs()))
            .min(ratio(bound * bound, sigma2));
    }
    tau
}

/// Explicit leap size with the reactions flagged in `excluded` left out of
/// the drift and variance sums.
pub fn explicit_tau(
    network: &ReactionNetwork,
    x: &[i64],
    props: &PropensityView,
    epsilon: f64,
    excluded: &[bool],
) -> f64 {
    tau_bound(network, x, props, epsilon, &|j| !excluded[j])
}

/// Implicit leap size summing only over `necr`: reactions that are neither
/// critical nor in partial equilibrium.
pub fn implicit_tau(
    network: &ReactionNetwork,
    x: &[i64],
    props: &PropensityView,
    epsilon: f64,
    necr: &[bool],
) -> f64 {
    tau_bound(network, x, props, epsilon, &|j| necr[j])
}

/// R-leaping firing count: the leap-condition bound on the number of
/// firings with variance correction `sigma2 - mu^2 / a0`. Nonpositive
/// corrections leave the bound inactive. Floored, at least 1, at most `l_max`.
pub fn r_leap_l(
    network: &ReactionNetwork,
    x: &[i64],
    props: &PropensityView,
    epsilon: f64,
    l_max: u64,
) -> u64 {
    let a0 = props.a0;
    let mut scale = f64::INFINITY;
    for &i in network.reactant_species() {
        let (mu, sigma2) = drift_and_variance(network, props, i, &|_| true);
        let bound = allowed_change(network, x, i, epsilon);
        scale = scale
            .min(ratio(bound, mu.abs()))
            .min(ratio(bound * bound, sigma2 - mu * mu / a0));
    }
    let l = (a0 * scale).floor();
    if l >= l_max as f64 {
        l_max
    } else if l >= 1.0 {
        l as u64
    } else {
        1
    }
}

/// Negative-population bound `L''`. `None` when no reaction with positive
/// propensity consumes anything.
pub fn negative_control_l(
    network: &ReactionNetwork,
    x: &[i64],
    props: &PropensityView,
    theta: f64,
) -> Option<u64> {
    let mut best = f64::INFINITY;
    for (r, &a) in network.reactions().iter().zip(&props.a) {
        if a <= 0.0 {
            continue;
        }
        let Some(lj) = r
            .consumed()
            .map(|(i, v)| round_nearest(x[i] as f64 / v as f64))
            .min()
        else {
            continue;
        };
        let factor = 1.0 - theta * (1.0 - props.a0 / a);
        best = best.min(factor * lj as f64);
    }
    best.is_finite().then(|| (best.floor().max(1.0)) as u64)
}

/// Total firings of an S-leap: `L ~ Poisson(a0 * tau)`.
pub fn s_leap_l(rng: &mut RngStream, a0: f64, tau: f64) -> u64 {
    rng.poisson(a0 * tau)
}

/// Splits `l` firings among channels by sequential conditional binomials,
/// visiting reactions in `order`. Channels with zero propensity never fire;
/// the last positive channel takes the remainder without a draw.
pub fn binomial_cascade(
    rng: &mut RngStream,
    l: u64,
    props: &PropensityView,
    order: &[usize],
) -> Vec<u64> {
    let mut k = vec![0; props.a.len()];
    binomial_cascade_into(rng, l, props, order, &mut k);
    k
}

pub fn binomial_cascade_into(
    rng: &mut RngStream,
    l: u64,
    props: &PropensityView,
    order: &[usize],
    k: &mut [u64],
) {
    k.iter_mut().for_each(|v| *v = 0);
    if l == 0 {
        return;
    }
    let Some(last) = order.iter().rposition(|&j| props.a[j] > 0.0) else {
        return;
    };
    let mut remaining = l;
    let mut mass = props.a0;
    for &j in &order[..last] {
        let a = props.a[j];
        if a <= 0.0 {
            continue;
        }
        let p = if mass > 0.0 { (a / mass).clamp(0.0, 1.0) } else { 1.0 };
        let kj = rng.binomial(remaining, p);
        k[j] = kj;
        remaining -= kj;
        mass -= a;
        if remaining == 0 {
            return;
        }
    }
    k[order[last]] = remaining;
}

/// Reaction order sorted by nonincreasing propensity (stable), recomputed
/// every `period` steps; otherwise `current` is returned unchanged.
pub fn reorder_schedule(
    props: &PropensityView,
    step_count: u64,
    period: u64,
    current: &[usize],
) -> Vec<usize> {
    if step_count % period != 0 {
        return current.to_vec();
    }
    let mut order: Vec<usize> = (0..props.a.len()).collect();
    order.sort_by(|&i, &j| props.a[j].total_cmp(&props.a[i]));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_network, Reaction};

    fn decay(x0: i64) -> ReactionNetwork {
        parse_network(&format!(
            "species S1\ninit {x0}\nreaction R1 : S1 -> 0 ; rate 1\n"
        ))
        .unwrap()
    }

    fn view(a: &[f64]) -> PropensityView {
        PropensityView {
            a: a.to_vec(),
            a0: a.iter().sum(),
        }
    }

    #[test]
    fn critical_boundary_and_rounding() {
        let net = decay(10);
        let props = net.all_propensities(&[10], 1.0);
        assert_eq!(critical_reactions(&net, &[10], &props, 10), vec![true]);
        assert_eq!(critical_reactions(&net, &[11], &net.all_propensities(&[11], 1.0), 10), vec![false]);

        // x = (10, 3), nu = (-1, -2): min(10, round(1.5) = 2) <= 10
        let net = ReactionNetwork::new(
            vec!["A".into(), "B".into()],
            vec![Reaction::new("R", &[(0, 1), (1, 2)], &[], 1.0)],
            vec![],
            vec![],
            vec![0, 0],
        )
        .unwrap();
        assert_eq!(round_nearest(1.5), 2);
        let props = net.all_propensities(&[10, 3], 1.0);
        assert_eq!(critical_reactions(&net, &[10, 3], &props, 10), vec![true]);
        assert_eq!(critical_reactions(&net, &[10, 3], &props, 1), vec![false]);
    }

    #[test]
    fn zero_propensity_is_never_critical() {
        let net = decay(0);
        let props = view(&[0.0]);
        assert_eq!(critical_reactions(&net, &[0], &props, 10), vec![false]);
    }

    #[test]
    fn explicit_tau_single_decay() {
        let net = decay(100);
        let props = net.all_propensities(&[100], 1.0);
        let tau = explicit_tau(&net, &[100], &props, 0.03, &[false]);
        assert!((tau - 0.03).abs() < 1e-15);
        assert_eq!(explicit_tau(&net, &[100], &props, 0.03, &[true]), f64::INFINITY);
        // eps * x / g = 0.3 < 1: numerator clamps to 1
        let props = net.all_propensities(&[10], 1.0);
        let tau = explicit_tau(&net, &[10], &props, 0.03, &[false]);
        assert!((tau - 0.1).abs() < 1e-15);
    }

    #[test]
    fn implicit_tau_matches_explicit_without_equilibrium() {
        let net = parse_network(crate::builtin::DIMER_NONSTIFF).unwrap();
        let x = net.initial_populations().to_vec();
        let props = net.all_propensities(&x, 1.0);
        let crit = critical_reactions(&net, &x, &props, 10);
        let ncr: Vec<bool> = crit.iter().map(|c| !c).collect();
        assert_eq!(
            explicit_tau(&net, &x, &props, 0.03, &crit),
            implicit_tau(&net, &x, &props, 0.03, &ncr)
        );
        assert_eq!(implicit_tau(&net, &x, &props, 0.03, &[false; 4]), f64::INFINITY);
    }

    #[test]
    fn implicit_tau_much_larger_at_stiff_equilibrium() {
        let net = parse_network(crate::builtin::DIMER_STIFF).unwrap();
        // 10 x1 (x1 - 1) = 1000 x2 with x1 = 2000
        let x = vec![2000, 39980, 3445];
        let props = net.all_propensities(&x, 1.0);
        let pe = partial_equilibrium_mask(&net, &props, 0.05);
        assert_eq!(pe, vec![false, true, true, false]);
        let crit = critical_reactions(&net, &x, &props, 10);
        let necr: Vec<bool> = (0..4).map(|j| !crit[j] && !pe[j]).collect();
        let tau_ex = explicit_tau(&net, &x, &props, 0.05, &crit);
        let tau_im = implicit_tau(&net, &x, &props, 0.05, &necr);
        assert!(tau_im > 100.0 * tau_ex, "{tau_im} vs {tau_ex}");
    }

    #[test]
    fn partial_equilibrium_examples() {
        assert!(in_partial_equilibrium(100.0, 103.0, 0.05));
        assert!(!in_partial_equilibrium(100.0, 120.0, 0.05));
        assert!(in_partial_equilibrium(0.0, 0.0, 0.05));
    }

    #[test]
    fn r_leap_l_single_decay() {
        let net = decay(100);
        let props = net.all_propensities(&[100], 1.0);
        assert_eq!(r_leap_l(&net, &[100], &props, 0.03, 1_000_000), 3);
        // tiny populations: the bound is below one firing
        let props = net.all_propensities(&[1], 1.0);
        assert_eq!(r_leap_l(&net, &[1], &props, 0.03, 1_000_000), 1);
    }

    #[test]
    fn r_leap_l_caps_without_reactant_species() {
        let net = parse_network("species A\nreaction B : 0 -> A ; rate 5\n").unwrap();
        let props = net.all_propensities(&[0], 1.0);
        assert_eq!(r_leap_l(&net, &[0], &props, 0.03, 1234), 1234);
    }

    #[test]
    fn negative_control_example() {
        let net = ReactionNetwork::new(
            vec!["A".into(), "B".into()],
            vec![
                Reaction::new("R1", &[(0, 1)], &[], 9.0 / 5.0),
                Reaction::new("R2", &[(1, 1)], &[], 1.0 / 50.0),
            ],
            vec![],
            vec![],
            vec![5, 50],
        )
        .unwrap();
        let x = [5, 50];
        let props = net.all_propensities(&x, 1.0);
        assert!((props.a[0] - 9.0).abs() < 1e-12 && (props.a[1] - 1.0).abs() < 1e-12);
        assert_eq!(negative_control_l(&net, &x, &props, 0.1), Some(5));
        assert_eq!(negative_control_l(&net, &x, &props, 0.0), Some(5));

        let birth = parse_network("species A\nreaction B : 0 -> A ; rate 5\n").unwrap();
        let props = birth.all_propensities(&[0], 1.0);
        assert_eq!(negative_control_l(&birth, &[0], &props, 0.1), None);
    }

    #[test]
    fn s_leap_l_zero_rate() {
        let mut rng = RngStream::new(1, 0);
        assert_eq!(s_leap_l(&mut rng, 0.0, 1.0), 0);
        let zeros = (0..10_000).filter(|_| s_leap_l(&mut rng, 1.0, 0.01) == 0).count();
        assert!(zeros > 9_800);
    }

    #[test]
    fn cascade_single_channel_uses_no_draws() {
        let mut rng = RngStream::new(2, 0);
        let k = binomial_cascade(&mut rng, 17, &view(&[2.5]), &[0]);
        assert_eq!(k, vec![17]);
        assert_eq!(rng.draws(), 0);
    }

    #[test]
    fn cascade_skips_zero_channels() {
        let mut rng = RngStream::new(3, 0);
        let props = view(&[1.0, 0.0, 2.0, 0.0]);
        for _ in 0..1000 {
            let k = binomial_cascade(&mut rng, 50, &props, &[3, 2, 1, 0]);
            assert_eq!(k[1], 0);
            assert_eq!(k[3], 0);
            assert_eq!(k.iter().sum::<u64>(), 50);
        }
    }

    #[test]
    fn cascade_stops_when_budget_is_spent() {
        let mut rng = RngStream::new(4, 0);
        let props = view(&[1000.0, 1e-9, 1e-9, 1e-9]);
        let mut draws = 0;
        for _ in 0..1000 {
            let before = rng.draws();
            binomial_cascade(&mut rng, 3, &props, &[0, 1, 2, 3]);
            draws += rng.draws() - before;
        }
        // the dominant channel nearly always absorbs all firings
        assert!(draws < 1100, "{draws}");
    }

    #[test]
    fn reorder_examples() {
        let props = view(&[1.0, 5.0, 3.0]);
        assert_eq!(reorder_schedule(&props, 0, 10_000, &[0, 1, 2]), vec![1, 2, 0]);
        assert_eq!(reorder_schedule(&props, 1, 10_000, &[0, 1, 2]), vec![0, 1, 2]);
        let ties = view(&[2.0, 2.0, 2.0]);
        assert_eq!(reorder_schedule(&ties, 20_000, 10_000, &[2, 1, 0]), vec![0, 1, 2]);
    }

    #[test]
    fn config_defaults() {
        let c = SolverConfig::default();
        assert_eq!(c.n_critical, 10);
        assert_eq!(c.theta, 0.1);
        assert_eq!(c.delta, 0.05);
        assert_eq!(c.reorder_period, 10_000);
        assert_eq!(c.stiffness_factor, 100.0);
        assert!(c.validate().is_ok());
        assert!(c.clone().with_epsilon(1.5).validate().is_err());
    }
}
