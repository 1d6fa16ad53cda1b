use sleap_core::builtin::BuiltinModel;
use sleap_core::model::{parse_network, ReactionNetwork};
use sleap_core::sampling::RngStream;
use sleap_core::solvers::{
    implicit_firings, implicit_solve, r_leap_with_l, run_trajectory, s_leap_step, ssa_step,
    uniform_grid, NewtonOptions, SolverKind, StepContext, StepDecision,
};
use sleap_core::stepping::{Firings, SolverConfig, StepProposal};

fn context<'a>(
    net: &'a ReactionNetwork,
    x: &'a [i64],
    props: &'a sleap_core::model::PropensityView,
    config: &'a SolverConfig,
    order: &'a [usize],
) -> StepContext<'a> {
    StepContext {
        network: net,
        x,
        t: 0.0,
        props,
        config,
        order,
        volume: 1.0,
        tau_cap: f64::INFINITY,
    }
}

fn leap(d: StepDecision) -> StepProposal {
    match d {
        StepDecision::Leap(p) => p,
        other => panic!("expected a leap, got {other:?}"),
    }
}

#[test]
fn ssa_selection_frequency() {
    let net = parse_network(
        "species A B\ninit 3 1\nreaction R1 : A -> B ; rate 1\nreaction R2 : B -> A ; rate 1\n",
    )
    .unwrap();
    let props = net.all_propensities(&[3, 1], 1.0);
    let mut rng = RngStream::new(1, 0);
    let n = 1_000_000;
    let hits = (0..n)
        .filter(|_| leap(ssa_step(&props, &mut rng)).firings == Firings::Single(0))
        .count();
    assert!((hits as f64 / n as f64 - 0.75).abs() < 0.005);
}

#[test]
fn r_leap_single_channel_batches_firings() {
    let net = parse_network("species A\ninit 0\nreaction B : 0 -> A ; rate 4\n").unwrap();
    let x = [0];
    let props = net.all_propensities(&x, 1.0);
    let config = SolverConfig::default();
    let ctx = context(&net, &x, &props, &config, &[0]);
    let mut rng = RngStream::new(2, 0);
    let n = 20_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let p = leap(r_leap_with_l(&ctx, &mut rng, 12).unwrap());
        assert_eq!(p.firings, Firings::Counts(vec![12]));
        sum += p.tau;
    }
    // Gamma(12, 1/4) has mean 3 and standard deviation sqrt(12)/4
    let se = 12f64.sqrt() / 4.0 / (n as f64).sqrt();
    assert!((sum / n as f64 - 3.0).abs() < 4.0 * se);
}

#[test]
fn s_leap_mean_firings_match_poisson_mean() {
    let net = BuiltinModel::DimerNonstiff.network();
    let x = net.initial_populations().to_vec();
    let props = net.all_propensities(&x, 1.0);
    let config = SolverConfig::default();
    let order: Vec<usize> = (0..4).collect();
    let ctx = context(&net, &x, &props, &config, &order);
    let mut rng = RngStream::new(3, 0);
    let n = 10_000;
    let mut fired = 0.0;
    let mut expected = 0.0;
    for _ in 0..n {
        let p = leap(s_leap_step(&ctx, &mut rng).unwrap());
        assert_eq!(p.rejections, 0);
        fired += p.firings.total() as f64;
        expected = props.a0 * p.tau;
    }
    let mean = fired / n as f64;
    assert!((mean - expected).abs() < 3.0 * (expected / n as f64).sqrt());
}

#[test]
fn adaptive_equals_explicit_when_never_stiff() {
    let net = BuiltinModel::Bsubtilis.network();
    let grid = uniform_grid(10.0, 25);
    let config = SolverConfig {
        ssa_fallback: false,
        ..SolverConfig::default().with_epsilon(0.05)
    };
    for (explicit, adaptive) in [
        (SolverKind::TauExplicit, SolverKind::TauAdaptive),
        (SolverKind::SLeap, SolverKind::SAdaptive),
    ] {
        for seed in 0..20 {
            let run = |kind| {
                let mut rng = RngStream::new(seed, 0);
                run_trajectory(&net, kind, &config, &mut rng, 10.0, &grid).unwrap()
            };
            let (a, b) = (run(explicit), run(adaptive));
            assert_eq!(b.stats.implicit_steps, 0);
            assert_eq!(a.states, b.states);
            assert_eq!(a.final_state, b.final_state);
            assert_eq!(a.stats.steps_total, b.stats.steps_total);
        }
    }
}

#[test]
fn no_negative_populations_in_short_sweep() {
    for model in BuiltinModel::ALL {
        let net = model.network();
        let t_end = match model {
            BuiltinModel::DimerStiff => 0.01,
            BuiltinModel::LaczBig => 1.0,
            BuiltinModel::LaczSmall => 50.0,
            _ => 5.0,
        };
        let config = SolverConfig {
            negative_control: model == BuiltinModel::LaczSmall,
            ..SolverConfig::default()
        };
        let grid = uniform_grid(t_end, 25);
        for kind in SolverKind::ALL {
            for seed in 0..10 {
                let mut rng = RngStream::new(seed, 0);
                let traj = run_trajectory(&net, kind, &config, &mut rng, t_end, &grid).unwrap();
                assert!(traj.stats.min_population >= 0, "{model}/{kind} seed {seed}");
                assert!(traj.states.iter().flatten().all(|&v| v >= 0));
            }
        }
    }
}

#[test]
fn stiff_dimer_adaptive_methods_go_implicit() {
    let net = BuiltinModel::DimerStiff.network();
    let grid = uniform_grid(1.0, 25);
    let config = SolverConfig::default().with_epsilon(0.05);
    for kind in [SolverKind::TauAdaptive, SolverKind::SAdaptive] {
        let mut rng = RngStream::new(8, 0);
        let traj = run_trajectory(&net, kind, &config, &mut rng, 1.0, &grid).unwrap();
        assert!(traj.stats.implicit_steps > 0, "{kind}");
        assert!(traj.stats.steps_total < 1000, "{kind}: {}", traj.stats.steps_total);
    }
}

/// Implicit Euler for the stiff dimerization, solved by bisection on S1
/// after eliminating S2 and S3 from the linear equations.
fn implicit_euler_dimer(x: [f64; 3], tau: f64, c: [f64; 4]) -> [f64; 3] {
    // y1 = x1 + tau(-c1 y1 - 2 c2 y1(y1-1) + 2 c3 y2)
    // y2 = x2 + tau(c2 y1(y1-1) - c3 y2 - c4 y2)
    // y3 = x3 + tau c4 y2
    let y2_of = |y1: f64| (x[1] + tau * c[1] * y1 * (y1 - 1.0)) / (1.0 + tau * (c[2] + c[3]));
    let f = |y1: f64| {
        y1 - x[0] - tau * (-c[0] * y1 - 2.0 * c[1] * y1 * (y1 - 1.0) + 2.0 * c[2] * y2_of(y1))
    };
    let (mut lo, mut hi) = (1.0, x[0] + 2.0 * x[1] + 1.0);
    assert!(f(lo) < 0.0 && f(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y1 = 0.5 * (lo + hi);
    let y2 = y2_of(y1);
    [y1, y2, x[2] + tau * c[3] * y2]
}

#[test]
fn zero_noise_update_is_rounded_implicit_euler() {
    let net = BuiltinModel::DimerStiff.network();
    let c = [1.0, 10.0, 1000.0, 0.1];
    for (x, tau) in [([2000, 39980, 3445], 0.02), ([4150, 39565, 3445], 0.005), ([900, 8000, 20000], 0.3)] {
        let xf = x.map(|v| v as f64);
        let oracle = implicit_euler_dimer(xf, tau, c);
        let res = implicit_solve(&net, &x, &[0.0; 3], &[true; 4], tau, 1.0, NewtonOptions::default());
        assert!(res.converged);
        for i in 0..3 {
            assert!((res.x_star[i] - oracle[i]).abs() <= 1e-6 * oracle[i].max(1.0), "{i}: {:?} vs {oracle:?}", res.x_star);
        }
        let k = implicit_firings(&net, &res.x_star, tau, &[0.0; 4], 1.0);
        let a_oracle = [
            c[0] * oracle[0],
            c[1] * oracle[0] * (oracle[0] - 1.0),
            c[2] * oracle[1],
            c[3] * oracle[1],
        ];
        for j in 0..4 {
            assert_eq!(k[j], (a_oracle[j] * tau).round() as u64, "reaction {j}");
        }
    }
}
