//! Built-in property suites run by `sleap validate`.

use statrs::distribution::{Binomial, Discrete, Poisson};

use crate::model::{parse_network, PropensityView};
use crate::sampling::RngStream;
use crate::solvers::{run_trajectory, SolverKind};
use crate::stats::{chi_square_gof, chi_square_two_sample};
use crate::stepping::{binomial_cascade, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Poisson draws use a mean inflated by 10%.
    PoissonBias,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    pub quick: bool,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            quick: false,
            seed: 2024,
            fault: None,
        }
    }
}

impl ValidateOptions {
    fn samples(&self, full: usize) -> usize {
        if self.quick {
            full / 10
        } else {
            full
        }
    }

    fn alpha(&self) -> f64 {
        if self.quick {
            1e-3
        } else {
            1e-2
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn report(name: &'static str, failures: Vec<String>, detail: String) -> SuiteReport {
    SuiteReport {
        name,
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            detail
        } else {
            failures.join("; ")
        },
    }
}

fn poisson_draw(rng: &mut RngStream, mean: f64, fault: Option<Fault>) -> u64 {
    match fault {
        Some(Fault::PoissonBias) => rng.poisson(mean * 1.1),
        None => rng.poisson(mean),
    }
}

/// Counts of `0..cells-1`, with the last cell collecting the upper tail.
fn tally(values: impl Iterator<Item = u64>, cells: usize) -> Vec<u64> {
    let mut c = vec![0u64; cells];
    for v in values {
        c[(v as usize).min(cells - 1)] += 1;
    }
    c
}

fn tail_probs(pmf: impl Fn(u64) -> f64, cells: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..cells as u64 - 1).map(pmf).collect();
    p.push((1.0 - p.iter().sum::<f64>()).max(0.0));
    p
}

pub fn sampling_suite(opts: &ValidateOptions) -> SuiteReport {
    let n = opts.samples(100_000);
    let alpha = opts.alpha();
    let mut rng = RngStream::new(opts.seed, 0);
    let mut failures = Vec::new();
    let mut ps = Vec::new();

    for mean in [0.7f64, 4.0, 35.0] {
        let cells = (mean + 8.0 * mean.sqrt() + 8.0) as usize;
        let obs = tally((0..n).map(|_| poisson_draw(&mut rng, mean, opts.fault)), cells);
        let dist = Poisson::new(mean).expect("positive mean");
        let r = chi_square_gof(&obs, &tail_probs(|k| dist.pmf(k), cells));
        ps.push(format!("poisson({mean}) p={:.3}", r.p_value));
        if r.p_value <= alpha {
            failures.push(format!("poisson({mean}) p={:.2e}", r.p_value));
        }
    }

    let dist = Binomial::new(0.3, 20).expect("valid binomial");
    let obs = tally((0..n).map(|_| rng.binomial(20, 0.3)), 21);
    let probs: Vec<f64> = (0..=20).map(|k| dist.pmf(k)).collect();
    let r = chi_square_gof(&obs, &probs);
    ps.push(format!("binomial(20,0.3) p={:.3}", r.p_value));
    if r.p_value <= alpha {
        failures.push(format!("binomial p={:.2e}", r.p_value));
    }

    // exponential and gamma(1) on 20 equiprobable cells
    for (label, shape) in [("exponential", 0u64), ("gamma(1)", 1)] {
        let obs = tally(
            (0..n).map(|_| {
                let v = if shape == 0 {
                    rng.exponential(2.0)
                } else {
                    rng.gamma(1, 2.0)
                };
                (20.0 * (1.0 - (-v / 2.0).exp())) as u64
            }),
            20,
        );
        let r = chi_square_gof(&obs, &[0.05; 20]);
        ps.push(format!("{label} p={:.3}", r.p_value));
        if r.p_value <= alpha {
            failures.push(format!("{label} p={:.2e}", r.p_value));
        }
    }

    let weights = [0.1, 0.0, 2.5, 1.4];
    let obs = tally((0..n).map(|_| rng.discrete(&weights).expect("positive weights") as u64), 4);
    let probs: Vec<f64> = weights.iter().map(|w| w / 4.0).collect();
    let r = chi_square_gof(&obs, &probs);
    ps.push(format!("discrete p={:.3}", r.p_value));
    if obs[1] != 0 || r.p_value <= alpha {
        failures.push(format!("discrete p={:.2e} zero-weight hits {}", r.p_value, obs[1]));
    }

    report("sampling goodness of fit", failures, ps.join(", "))
}

fn view(a: &[f64]) -> PropensityView {
    PropensityView {
        a: a.to_vec(),
        a0: a.iter().sum(),
    }
}

pub fn cascade_suite(opts: &ValidateOptions) -> SuiteReport {
    let n = opts.samples(100_000);
    let mut rng = RngStream::new(opts.seed, 1);
    let mut failures = Vec::new();

    let mut sum_violations = 0u64;
    for i in 0..n {
        let m = 1 + (rng.uniform() * 8.0) as usize;
        let a: Vec<f64> = (0..m)
            .map(|_| if rng.uniform() < 0.2 { 0.0 } else { rng.uniform() * 100.0 })
            .collect();
        let props = view(&a);
        if props.a0 == 0.0 {
            continue;
        }
        let l = (rng.uniform() * 1000.0) as u64;
        let order: Vec<usize> = if i % 2 == 0 { (0..m).collect() } else { (0..m).rev().collect() };
        let k = binomial_cascade(&mut rng, l, &props, &order);
        if k.iter().sum::<u64>() != l || k.iter().zip(&a).any(|(&kj, &aj)| aj == 0.0 && kj > 0) {
            sum_violations += 1;
        }
    }
    if sum_violations > 0 {
        failures.push(format!("{sum_violations} cascades did not sum to L"));
    }

    let props = view(&[5.0, 1.0, 3.0, 0.5, 0.5]);
    let l = 40u64;
    let order = [0, 1, 2, 3, 4];
    let mut sums = [0.0f64; 5];
    for _ in 0..n {
        for (s, k) in sums.iter_mut().zip(binomial_cascade(&mut rng, l, &props, &order)) {
            *s += k as f64;
        }
    }
    for (j, s) in sums.iter().enumerate() {
        let p = props.a[j] / props.a0;
        let mean = l as f64 * p;
        let se = (l as f64 * p * (1.0 - p) / n as f64).sqrt();
        if (s / n as f64 - mean).abs() > 3.0 * se {
            failures.push(format!("channel {j} mean {:.4} vs {mean:.4}", s / n as f64));
        }
    }
    report(
        "cascade sum and marginals",
        failures,
        format!("{n} random cascades summed to L; marginal means within 3 standard errors"),
    )
}

pub fn permutation_suite(opts: &ValidateOptions) -> SuiteReport {
    let n = opts.samples(100_000);
    let mut rng = RngStream::new(opts.seed, 2);
    let props = view(&[2.0, 1.0, 1.0]);
    let l = 6u64;
    let cell = |k: &[u64]| (k[0] * (l + 1) + k[1]) as usize;
    let cells = ((l + 1) * (l + 1)) as usize;
    let mut forward = vec![0u64; cells];
    let mut backward = vec![0u64; cells];
    for _ in 0..n {
        forward[cell(&binomial_cascade(&mut rng, l, &props, &[0, 1, 2]))] += 1;
        backward[cell(&binomial_cascade(&mut rng, l, &props, &[2, 0, 1]))] += 1;
    }
    let r = chi_square_two_sample(&forward, &backward);
    let failures = if r.p_value > opts.alpha() {
        Vec::new()
    } else {
        vec![format!("joint firing distribution differs, p={:.2e}", r.p_value)]
    };
    report("permutation invariance", failures, format!("p={:.3}", r.p_value))
}

pub fn ssa_oracle_suite(opts: &ValidateOptions) -> SuiteReport {
    let n = opts.samples(10_000);
    let net = parse_network(
        "species S1 S2\ninit 40 0\nreaction R1 : S1 -> S2 ; rate 1\nreaction R2 : S2 -> S1 ; rate 1\n",
    )
    .expect("isomerization parses");
    let config = SolverConfig::default();
    let mut counts = vec![0u64; 41];
    for k in 0..n {
        let mut rng = RngStream::new(opts.seed, 1000 + k as u64);
        match run_trajectory(&net, SolverKind::Ssa, &config, &mut rng, 20.0, &[20.0]) {
            Ok(traj) => counts[traj.states[0][0] as usize] += 1,
            Err(e) => return report("SSA isomerization oracle", vec![e.to_string()], String::new()),
        }
    }
    let dist = Binomial::new(0.5, 40).expect("valid binomial");
    let probs: Vec<f64> = (0..=40).map(|k| dist.pmf(k)).collect();
    let r = chi_square_gof(&counts, &probs);
    let failures = if r.p_value > opts.alpha() {
        Vec::new()
    } else {
        vec![format!("X1(20) differs from Binomial(40, 0.5), p={:.2e}", r.p_value)]
    };
    report("SSA isomerization oracle", failures, format!("p={:.3}", r.p_value))
}

pub fn run_all(opts: &ValidateOptions) -> Vec<SuiteReport> {
    vec![
        sampling_suite(opts),
        cascade_suite(opts),
        permutation_suite(opts),
        ssa_oracle_suite(opts),
    ]
}
