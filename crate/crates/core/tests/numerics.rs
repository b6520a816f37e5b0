use nalgebra::DMatrix;
use nested_flow::data::synth_blobs;
use nested_flow::estimation::estimate_cross_lipschitz;
use nested_flow::experiments::sweep::{run_sweep, Grid, SweepConfig};
use nested_flow::flows::{hypergradient, HypergradOptions};
use nested_flow::integrator::{integrate, IntegrateOptions, Scheme};
use nested_flow::problems::{lower_argmin, InnerSolveOptions};
use nested_flow::problems::{jvp_xu, make_hypercleaning, HypercleanConfig, Hypercleaning, Problem};
use nested_flow::problems::{QuadraticBilevel, QuadraticMinMinMax};
use nested_flow::rng::SplitMix64;
use nested_flow::thresholds::{
    bilevel_thresholds, conversion_constants, threshold_report, ConversionOptions, ThresholdInputs,
};
use nested_flow::{FlowField, FlowKind, FlowState};

fn tiny(corrupt: f64) -> Hypercleaning {
    let data = synth_blobs(24, 2, 2, 3).unwrap();
    make_hypercleaning(
        &data,
        &HypercleanConfig {
            corrupt_frac: corrupt,
            ..HypercleanConfig::default()
        },
    )
    .unwrap()
}

fn tight() -> InnerSolveOptions {
    InnerSolveOptions {
        tol: 1e-12,
        ..InnerSolveOptions::default()
    }
}

#[test]
fn hypercleaning_hypergradient_matches_finite_differences() {
    let p = tiny(0.3);
    let w = SplitMix64::new(1).gaussian_vec(p.n_train(), 0.5);
    let opts = HypergradOptions {
        inner: tight(),
        ..HypergradOptions::for_problem(&p)
    };
    let analytic = hypergradient(&p, &w, &opts).unwrap();
    let hyper = |w: &[f64]| {
        let theta = lower_argmin(&p, w, &tight()).unwrap();
        p.upper().value(w, &theta)
    };
    let eps = 1e-5;
    let mut worst = 0.0_f64;
    let scale = analytic.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for i in 0..w.len() {
        let mut plus = w.clone();
        let mut minus = w.clone();
        plus[i] += eps;
        minus[i] -= eps;
        let fd = (hyper(&plus) - hyper(&minus)) / (2.0 * eps);
        worst = worst.max((fd - analytic[i]).abs() / scale);
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn cross_lipschitz_estimate_matches_dense_operator() {
    let p = tiny(0.3);
    let d = p.dims();
    let mut rng = SplitMix64::new(8);
    let x = rng.gaussian_vec(d.x, 1.0);
    let y = rng.gaussian_vec(d.y, 0.3);
    let g = p.lower().unwrap();
    let mut m = DMatrix::<f64>::zeros(d.x, d.y);
    for j in 0..d.y {
        let mut e = vec![0.0; d.y];
        e[j] = 1.0;
        for (i, v) in jvp_xu(g, &x, &y, &e).into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    let sigma = m.singular_values().max();
    let est = estimate_cross_lipschitz(&p, &x, &y, 200, 1e-5, 0).unwrap();
    assert!((est.value - sigma).abs() <= 1e-4 * sigma, "{} vs {sigma}", est.value);
}

#[test]
fn euler_is_first_order() {
    let p = QuadraticBilevel::new(0.5, 1.0, 1);
    let kind = FlowKind::Bilevel {
        lambda: 10.0,
        delta: 0.5,
        eta: 1.0,
    };
    let field = FlowField::new(&kind, &p).unwrap();
    let s0 = FlowState::new(vec![2.0], vec![-1.0], Some(vec![1.5]));
    let horizon = 1.0;
    let reference = integrate(&field, &s0, &IntegrateOptions::new(1e-4, 10_000, Scheme::Rk4))
        .unwrap()
        .last()
        .to_flat();
    let err = |h: f64| {
        let n = (horizon / h).round() as usize;
        let end = integrate(&field, &s0, &IntegrateOptions::new(h, n, Scheme::Euler)).unwrap();
        end.last()
            .to_flat()
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let e: Vec<f64> = [1e-2, 5e-3, 2.5e-3].into_iter().map(err).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 0.9, "observed order {order} from errors {e:?}");
    }
}

#[test]
fn sweeps_are_deterministic() {
    let p = QuadraticMinMinMax::default();
    let cfg = SweepConfig {
        delta: Grid::around(4.5, 30.0, 4),
        eta: Grid::around(0.375, 30.0, 4),
        n_steps: 300,
        threads: 2,
        ..SweepConfig::around(4.5, 0.375, 1.0)
    };
    let a = run_sweep(&p, &cfg).unwrap();
    let b = run_sweep(&p, &SweepConfig { threads: 1, ..cfg.clone() }).unwrap();
    let rows = |c: &[nested_flow::experiments::sweep::SweepCell]| c.iter().map(|c| c.csv_row()).collect::<Vec<_>>();
    assert_eq!(rows(&a), rows(&b));
}

#[test]
fn label_corruption_hurts_validation_loss() {
    let make = |corrupt| {
        let data = synth_blobs(150, 4, 3, 0).unwrap();
        make_hypercleaning(
            &data,
            &HypercleanConfig {
                corrupt_frac: corrupt,
                ..HypercleanConfig::default()
            },
        )
        .unwrap()
    };
    let val_loss = |p: &Hypercleaning| {
        let w = vec![0.0; p.n_train()];
        let theta = lower_argmin(p, &w, &InnerSolveOptions::for_problem(p)).unwrap();
        p.upper().value(&w, &theta)
    };
    let clean = val_loss(&make(0.0));
    let noisy = val_loss(&make(0.3));
    assert!(clean < noisy, "clean {clean} noisy {noisy}");
}

#[test]
fn bilevel_thresholds_match_independent_formulas() {
    let mut rng = SplitMix64::new(42);
    for _ in 0..200 {
        let c_y = 0.1 + 3.0 * rng.next_f64();
        let c_z = 0.1 + 3.0 * rng.next_f64();
        let alpha = 0.05 + 0.9 * rng.next_f64();
        let beta = 0.05 + 0.9 * rng.next_f64();
        let theta = 0.1 + 5.0 * rng.next_f64();
        let eps1 = 0.1 + 1.8 * rng.next_f64();
        let lambda = 1.0 + 30.0 * rng.next_f64();
        let t = bilevel_thresholds(c_y, c_z, alpha, beta, theta, eps1).unwrap();

        let k_y = (1.0 - alpha) / (2.0 * eps1) + theta * (alpha - beta).abs() / 2.0;
        let delta0 = k_y * c_y * c_y / alpha;
        let base = (1.0 - alpha) * (1.0 - eps1 / 2.0);
        let eps2 = base / (lambda * (1.0 - beta));
        let c1 = base - lambda * (1.0 - beta) * eps2 / 2.0;
        let k_z = lambda * (1.0 - beta) / (2.0 * eps2) + beta * lambda * lambda
            + lambda * lambda * (alpha - beta).abs() / (2.0 * theta);
        let eta0 = k_z * c_z * c_z / (beta * lambda * lambda);
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1e-300);
        assert!(rel(t.delta0, delta0), "delta0 {} vs {delta0}", t.delta0);
        assert!(rel(t.eta0, eta0), "eta0 {} vs {eta0}", t.eta0);
        assert!(rel(t.c1, c1), "c1 {} vs {c1}", t.c1);
    }
}

#[test]
fn threshold_report_agrees_with_building_blocks() {
    let p = QuadraticBilevel::new(0.5, 1.0, 1);
    for lambda in [2.5, 10.0, 40.0] {
        let r = threshold_report(
            &p,
            &ThresholdInputs {
                lambda,
                ..ThresholdInputs::default()
            },
        )
        .unwrap();
        let conv = conversion_constants(p.family(), p.constants(), lambda, ConversionOptions::default()).unwrap();
        let t = bilevel_thresholds(conv.c_y, conv.c_z, 0.5, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(r.delta0, Some(t.delta0));
        assert_eq!(r.eta0, Some(t.eta0));
        assert_eq!(r.c1, t.c1);
    }
}
