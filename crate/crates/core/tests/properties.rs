use nested_flow::data::synth_blobs;
use nested_flow::lyapunov::{deviations, diagnostics, residuals, LyapunovSpec};
use nested_flow::problems::{make_hypercleaning, HypercleanConfig, Hypercleaning, Problem};
use nested_flow::problems::{QuadraticBilevel, QuadraticMinMinMax, QuadraticMinimax};
use nested_flow::thresholds::{conversion_constants, threshold_report, ConversionOptions, ThresholdInputs};
use nested_flow::{eval_field, FlowField, FlowKind, FlowState};
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 3)
}

fn tiny_hyperclean() -> Hypercleaning {
    let data = synth_blobs(30, 2, 3, 1).unwrap();
    make_hypercleaning(&data, &HypercleanConfig::default()).unwrap()
}

fn hyperclean_state(p: &Hypercleaning, seed: u64) -> FlowState {
    let mut rng = nested_flow::rng::SplitMix64::new(seed);
    FlowState::new(
        rng.gaussian_vec(p.n_train(), 1.0),
        rng.gaussian_vec(p.theta_dim(), 1.0),
        Some(rng.gaussian_vec(p.theta_dim(), 1.0)),
    )
}

fn field_at(p: &dyn Problem, kind: FlowKind, s: &FlowState) -> FlowState {
    eval_field(&FlowField::new(&kind, p).unwrap(), s).unwrap()
}

proptest! {
    #[test]
    fn fast_time_scales_are_linear(
        a in 0.1..2.0f64, b in 0.1..2.0f64, lambda in 0.5..50.0f64,
        delta in 0.01..10.0f64, eta in 0.01..10.0f64,
        x in vec3(), y in vec3(), z in vec3(),
    ) {
        let p = QuadraticBilevel::new(a, b, 3);
        let s = FlowState::new(x, y, Some(z));
        let base = field_at(&p, FlowKind::Bilevel { lambda, delta, eta }, &s);
        let dd = field_at(&p, FlowKind::Bilevel { lambda, delta: 2.0 * delta, eta }, &s);
        let de = field_at(&p, FlowKind::Bilevel { lambda, delta, eta: 2.0 * eta }, &s);
        prop_assert_eq!(&dd.x, &base.x);
        prop_assert_eq!(&dd.z, &base.z);
        prop_assert!(dd.y.iter().zip(&base.y).all(|(d, b)| *d == 2.0 * b));
        prop_assert_eq!(&de.x, &base.x);
        prop_assert_eq!(&de.y, &base.y);
        let (zb, ze) = (base.z.unwrap(), de.z.unwrap());
        prop_assert!(ze.iter().zip(&zb).all(|(e, b)| *e == 2.0 * b));

        let g = p.lower().unwrap();
        let expect: Vec<f64> = g.grad_u(&s.x, s.z.as_ref().unwrap()).iter().map(|v| -eta * lambda * v).collect();
        prop_assert!(zb.iter().zip(&expect).all(|(a, b)| (a - b).abs() <= 1e-14 * (1.0 + b.abs())));
    }

    #[test]
    fn minminmax_scales_are_linear(
        af in -1.0..1.0f64, ag in -2.0..2.0f64, delta in 0.01..10.0f64, eta in 0.01..10.0f64,
        x in vec3(), y in vec3(), z in vec3(),
    ) {
        let p = QuadraticMinMinMax::new(af, ag, 3).unwrap();
        let s = FlowState::new(x, y, Some(z));
        let base = field_at(&p, FlowKind::MinMinMax { delta, eta }, &s);
        let dd = field_at(&p, FlowKind::MinMinMax { delta: 2.0 * delta, eta }, &s);
        let de = field_at(&p, FlowKind::MinMinMax { delta, eta: 2.0 * eta }, &s);
        prop_assert!(dd.y.iter().zip(&base.y).all(|(d, b)| *d == 2.0 * b));
        prop_assert_eq!(&dd.z, &base.z);
        let (zb, ze) = (base.z.unwrap(), de.z.unwrap());
        prop_assert!(ze.iter().zip(&zb).all(|(e, b)| *e == 2.0 * b));
        prop_assert_eq!(&de.y, &base.y);
    }

    #[test]
    fn thresholds_scale_with_kappa_squared(
        k in prop::sample::select(vec![0.5, 2.0, 2.5]),
        lxy in 0.1..3.0f64, mu in 0.1..3.0f64, a in 0.1..2.0f64, b in 0.1..2.0f64,
        ag in -2.0..2.0f64, lambda in 1.0..40.0f64,
    ) {
        let inp = ThresholdInputs { lambda, ..ThresholdInputs::default() };
        let pairs: Vec<(Box<dyn Problem>, Box<dyn Problem>)> = vec![
            (
                Box::new(QuadraticMinimax::new(lxy, mu, 1).unwrap().with_kappa(Some(1.0 / mu))),
                Box::new(QuadraticMinimax::new(lxy, mu, 1).unwrap().with_kappa(Some(k / mu))),
            ),
            (
                Box::new(QuadraticBilevel::new(a, b, 1).with_kappa(Some(1.0))),
                Box::new(QuadraticBilevel::new(a, b, 1).with_kappa(Some(k))),
            ),
            (
                Box::new(QuadraticMinMinMax::new(0.5, ag, 1).unwrap().with_kappa(Some(1.0))),
                Box::new(QuadraticMinMinMax::new(0.5, ag, 1).unwrap().with_kappa(Some(k))),
            ),
        ];
        for (base, scaled) in &pairs {
            let r0 = threshold_report(base.as_ref(), &inp).unwrap();
            let r1 = threshold_report(scaled.as_ref(), &inp).unwrap();
            for (t0, t1) in [(r0.gamma0, r1.gamma0), (r0.delta0, r1.delta0), (r0.eta0, r1.eta0)] {
                match (t0, t1) {
                    (Some(t0), Some(t1)) => {
                        let want = k * k * t0;
                        prop_assert!((t1 - want).abs() <= 1e-14 * want.abs().max(f64::MIN_POSITIVE), "{t1} vs {want}");
                    }
                    (None, None) => {}
                    _ => prop_assert!(false, "threshold presence changed"),
                }
            }
        }
    }

    #[test]
    fn deviations_are_bounded_by_residuals(
        lxy in 0.1..3.0f64, mu in 0.1..3.0f64, a in 0.1..2.0f64, b in 0.1..2.0f64,
        af in -1.0..1.0f64, ag in -2.0..2.0f64, lambda in 0.5..40.0f64,
        x in vec3(), y in vec3(), z in vec3(),
    ) {
        let cases: Vec<(Box<dyn Problem>, LyapunovSpec, Option<Vec<f64>>)> = vec![
            (Box::new(QuadraticMinimax::new(lxy, mu, 3).unwrap()), LyapunovSpec::minimax(0.5), None),
            (Box::new(QuadraticBilevel::new(a, b, 3)), LyapunovSpec::bilevel(0.5, 0.5, lambda), Some(z.clone())),
            (Box::new(QuadraticMinMinMax::new(af, ag, 3).unwrap()), LyapunovSpec::minminmax(0.5, 0.5), Some(z.clone())),
        ];
        for (p, spec, z) in &cases {
            let s = FlowState::new(x.clone(), y.clone(), z.clone());
            let conv = conversion_constants(p.family(), p.constants(), lambda, ConversionOptions::default()).unwrap();
            let (ry, rz) = residuals(spec, p.as_ref(), &s).unwrap();
            let (dy, dz) = deviations(spec, p.as_ref(), &s).unwrap();
            prop_assert!(norm(&dy) <= conv.c_y * norm(&ry) * (1.0 + 1e-6) + 1e-12);
            if let (Some(dz), Some(rz)) = (dz, rz) {
                prop_assert!(norm(&dz) <= conv.c_z * norm(&rz) * (1.0 + 1e-6) + 1e-12);
            }
        }
    }

    #[test]
    fn gaps_are_nonnegative(
        lxy in 0.1..3.0f64, mu in 0.1..3.0f64, a in 0.1..2.0f64, b in 0.1..2.0f64,
        af in -1.0..1.0f64, ag in -2.0..2.0f64, lambda in 0.5..40.0f64,
        x in vec3(), y in vec3(), z in vec3(),
    ) {
        let cases: Vec<(Box<dyn Problem>, LyapunovSpec, Option<Vec<f64>>)> = vec![
            (Box::new(QuadraticMinimax::new(lxy, mu, 3).unwrap()), LyapunovSpec::minimax(0.5), None),
            (Box::new(QuadraticBilevel::new(a, b, 3)), LyapunovSpec::bilevel(0.5, 0.5, lambda), Some(z.clone())),
            (Box::new(QuadraticMinMinMax::new(af, ag, 3).unwrap()), LyapunovSpec::minminmax(0.5, 0.5), Some(z.clone())),
        ];
        for (p, spec, z) in &cases {
            let rec = diagnostics(spec, p.as_ref(), &FlowState::new(x.clone(), y.clone(), z.clone())).unwrap();
            prop_assert!(rec.h_y >= -1e-12 * (1.0 + rec.phi.abs()), "h_y = {}", rec.h_y);
            prop_assert!(rec.h_z >= -1e-12 * (1.0 + rec.phi.abs()), "h_z = {}", rec.h_z);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn hyperclean_inner_rate_identity(seed in 0u64..1000, eta in 0.01..10.0f64, lambda in 1.0..20.0f64) {
        let p = tiny_hyperclean();
        let s = hyperclean_state(&p, seed);
        let v = field_at(&p, FlowKind::Bilevel { lambda, delta: 1.0, eta }, &s);
        let gz = p.lower().unwrap().grad_u(&s.x, s.z.as_ref().unwrap());
        let zd = v.z.unwrap();
        prop_assert!(zd.iter().zip(&gz).all(|(a, g)| (a + eta * lambda * g).abs() <= 1e-13 * (1.0 + (eta * lambda * g).abs())));
    }

    #[test]
    fn hyperclean_lower_level_is_strongly_convex(seed in 0u64..1000) {
        let p = tiny_hyperclean();
        let s = hyperclean_state(&p, seed);
        let t2 = hyperclean_state(&p, seed + 7919).y;
        let g = p.lower().unwrap();
        let d: Vec<f64> = s.y.iter().zip(&t2).map(|(a, b)| a - b).collect();
        let gd: Vec<f64> = g.grad_u(&s.x, &s.y).iter().zip(g.grad_u(&s.x, &t2)).map(|(a, b)| a - b).collect();
        let inner: f64 = gd.iter().zip(&d).map(|(a, b)| a * b).sum();
        let rho = p.config().rho_reg;
        prop_assert!(inner >= rho * norm(&d).powi(2) * (1.0 - 1e-10));
    }
}
