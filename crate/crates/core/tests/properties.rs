use kinetic_qsd::lyapunov::{
    generator_fd, generator_terms, generator_value, power_for, BoundedDomainLyapunov, HamiltonianLyapunov,
    SmoothFunction, TestFunction,
};
use kinetic_qsd::model::catalog::ModelSpec;
use kinetic_qsd::model::{
    audit_coefficients, mollify, CompactSet, CoefficientModel, CylindricalDomain, KineticState, LangevinModel, MollifierKernel,
    Perturbation, PhaseGrid, Potential, RegularityMetadata,
};
use kinetic_qsd::qsd::{Histogram, HistogramSpec};
use proptest::prelude::*;

fn models() -> Vec<CoefficientModel> {
    vec![
        ModelSpec::HarmonicLangevin {
            dim: 1,
            omega: 1.3,
            gamma: 0.7,
            kt: 0.5,
        }
        .build()
        .unwrap(),
        ModelSpec::DoubleWellLangevin {
            h: 1.0,
            q0: 1.0,
            gamma: 1.0,
            kt: 0.3,
        }
        .build()
        .unwrap(),
        ModelSpec::HolderDiffusion {
            dim: 1,
            kappa: 1.0,
            gamma: 0.5,
            base: 1.0,
            amp: 1.0,
            exponent: 0.5,
        }
        .build()
        .unwrap(),
        ModelSpec::Linear {
            matrix: vec![-1.0, -0.5],
            offset: vec![0.1],
            sigma: vec![0.8],
        }
        .build()
        .unwrap(),
    ]
}

fn functions() -> Vec<SmoothFunction> {
    vec![
        SmoothFunction::KineticEnergy,
        SmoothFunction::CrossTerm,
        SmoothFunction::Quadratic { a: 1.0, b: 0.3, c: 2.0 },
        SmoothFunction::ExpLinear { u: 0.4, v: -0.3 },
        SmoothFunction::TrigProduct { k: 1.7 },
        SmoothFunction::Gaussian { s: 1.2 },
        SmoothFunction::LogCosh,
    ]
}

fn phase() -> impl Strategy<Value = (f64, f64)> {
    (-1.5f64..1.5, -2.0f64..2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn generator_matches_finite_differences(m in 0usize..4, f in 0usize..7, (q, p) in phase()) {
        let model = &models()[m];
        let phi = functions()[f].bind(1);
        let a = generator_value(model, &phi, &[q], &[p]);
        let b = generator_fd(model, &phi, &[q], &[p]);
        let scale: f64 = generator_terms(model, &phi, &[q], &[p]).iter().map(|t| t.abs()).sum();
        prop_assert!((a - b).abs() <= 1e-5 * scale.max(1e-3), "{a} vs {b}");
    }

    #[test]
    fn bounded_lyapunov_stays_in_its_band(q in -1.0f64..1.0, p in -50.0f64..50.0) {
        let beta = 2.0;
        let phi = BoundedDomainLyapunov::function(1, beta);
        let v = phi.value(&[q], &[p]);
        prop_assert!((1.0..=2.0 * beta - 1.0).contains(&v), "phi = {v}");
    }

    #[test]
    fn h_hat_is_at_least_one(q in -20.0f64..20.0, p in -20.0f64..20.0, delta in 0.01f64..0.99) {
        let l = LangevinModel::new(1, Potential::Harmonic { omega: 1.0 }, Perturbation::Zero, 1.0, 0.5).unwrap();
        let h = HamiltonianLyapunov::function(&l, delta, 1);
        prop_assert!(h.h_hat(&[q], &[p]) >= 1.0);
        // The quadratic part equals |p|^2/4 + |p + kappa q|^2/4.
        let k = h.kappa();
        let quad = 0.5 * p * p + 0.5 * k * q * p + 0.25 * k * k * q * q;
        let alt = 0.25 * p * p + 0.25 * (p + k * q).powi(2);
        prop_assert!((quad - alt).abs() <= 1e-12 * (1.0 + quad.abs()));
    }

    #[test]
    fn power_is_monotone_in_lambda(l1 in 0.01f64..10.0, l2 in 0.01f64..10.0, delta in 0.05f64..1.0) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        prop_assert!(power_for(lo, delta) <= power_for(hi, delta));
        let n = power_for(hi, delta);
        prop_assert!(n as f64 * delta / 2.0 >= hi);
    }

    #[test]
    fn p0_is_affine_in_lambda(l in 0.0f64..10.0, beta in 1.0f64..5.0, p_a in 0.0f64..100.0) {
        let mut phi = BoundedDomainLyapunov::function(1, beta);
        phi.p_a = p_a;
        let (a, b) = (phi.p0_for(0.0), phi.p0_for(1.0));
        prop_assert!((phi.p0_for(l) - (a + (b - a) * l)).abs() <= 1e-12 * (1.0 + phi.p0_for(l)));
        prop_assert!(b > a);
    }

    #[test]
    fn signed_distance_sign_matches_membership(x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let domains = [
            CylindricalDomain::ball(vec![0.2, -0.1], 1.5).unwrap(),
            CylindricalDomain::cuboid(vec![-1.0, -2.0], vec![1.0, 0.5]).unwrap(),
            CylindricalDomain::half_space(vec![1.0, 1.0], 0.3).unwrap(),
            CylindricalDomain::full_space(2),
        ];
        for d in &domains {
            let q = [x, y];
            prop_assert_eq!(d.signed_distance(&q) > 0.0, d.contains(&q));
        }
        let i = CylindricalDomain::interval(-1.0, 2.0).unwrap();
        prop_assert_eq!(i.signed_distance(&[x]) > 0.0, i.contains(&[x]));
    }

    #[test]
    fn exhaustion_is_nested(k in 1u32..6, q in -3.0f64..3.0, p in -7.0f64..7.0) {
        let dom = CylindricalDomain::interval(-2.5, 2.5).unwrap();
        let (a, b) = (CompactSet::exhaustion(k).unwrap(), CompactSet::exhaustion(k + 1).unwrap());
        if a.contains(&dom, &[q], &[p]) {
            prop_assert!(b.contains(&dom, &[q], &[p]));
        }
    }

    #[test]
    fn histogram_weights_are_normalized(points in prop::collection::vec((-3.0f64..3.0, -5.0f64..5.0), 1..300)) {
        let spec = HistogramSpec::new(vec![-2.0], vec![2.0], vec![-4.0], vec![4.0], 7).unwrap();
        let states: Vec<KineticState> = points.iter().map(|&(q, p)| KineticState::new(vec![q], vec![p]).unwrap()).collect();
        match Histogram::from_states(&spec, &states) {
            Ok(h) => {
                let total: f64 = h.weights.iter().sum::<f64>() + h.overflow;
                prop_assert!((total - 1.0).abs() <= 1e-12);
                prop_assert!(h.weights.iter().all(|&w| w >= 0.0));
            }
            Err(_) => prop_assert!(false, "non-empty input must give a histogram"),
        }
    }
}

#[test]
fn mollified_lipschitz_field_moves_by_at_most_lip_radius() {
    let meta = RegularityMetadata::isotropic(0.5, 1.0, 1.0);
    let model = ModelSpec::Expression {
        drift: vec!["math::sin(q0) + 0.5 * math::cos(p0)".into()],
        diffusion: vec!["0.5".into()],
    };
    let mut cfg = kinetic_qsd::model::ModelConfig::new(model);
    cfg.metadata = Some(meta);
    let base = cfg.build().unwrap();
    // Euclidean Lipschitz constant of sin(q) + cos(p) / 2.
    let lip = (1.0f64 + 0.25).sqrt();
    for n in [2u32, 4, 8] {
        let k = MollifierKernel::with_default_order(n).unwrap();
        let m = mollify(&base, &k).unwrap();
        let bound = lip * 2f64.sqrt() * k.support_radius();
        for (q, p) in PhaseGrid::centered(1, 2.0, 2.0, 9).points {
            let (f0, _) = base.eval_checked(&q, &p).unwrap();
            let (f1, _) = m.eval_checked(&q, &p).unwrap();
            assert!((f1[0] - f0[0]).abs() <= bound + 1e-12, "n = {n}");
        }
    }
}

#[test]
fn mollified_model_passes_its_widened_audit() {
    let holder = ModelSpec::HolderDiffusion {
        dim: 1,
        kappa: 1.0,
        gamma: 0.5,
        base: 1.0,
        amp: 1.0,
        exponent: 0.5,
    }
    .build()
    .unwrap();
    let sign = ModelSpec::SignDrift {
        dim: 1,
        strength: 1.0,
        sigma: 1.0,
    }
    .build()
    .unwrap();
    let grid = PhaseGrid::centered(1, 1.5, 1.5, 11);
    for base in [holder, sign] {
        for n in [4u32, 16] {
            let m = mollify(&base, &MollifierKernel::with_default_order(n).unwrap()).unwrap();
            let report = audit_coefficients(&m, &grid).unwrap();
            for name in ["ellipticity-lower", "ellipticity-upper", "affine-growth"] {
                if let Some(c) = report.check(name) {
                    assert!(c.passed, "n = {n}: {c:?}");
                }
            }
        }
    }
}
