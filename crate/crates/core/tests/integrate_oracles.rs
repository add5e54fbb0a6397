use kinetic_qsd::integrate::{exit_times, IntegratorConfig, Outcome, TANGENTIAL_THRESHOLD};
use kinetic_qsd::model::catalog::ModelSpec;
use kinetic_qsd::model::{CylindricalDomain, KineticState};
use kinetic_qsd::numeric::norm;

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn harmonic_mean_exit_time_is_stable_under_dt_refinement() {
    let m = ModelSpec::HarmonicLangevin {
        dim: 1,
        omega: 1.0,
        gamma: 1.0,
        kt: 0.5,
    }
    .build()
    .unwrap();
    let dom = CylindricalDomain::interval(-2.0, 2.0).unwrap();
    let starts = vec![KineticState::new(vec![0.0], vec![0.0]).unwrap(); 10_000];
    let mut stats = Vec::new();
    for (dt, seed) in [(2e-3, 1), (1e-3, 2)] {
        // Long enough that censoring is negligible (P(tau > T) ~ 1e-5).
        let cfg = IntegratorConfig::new(dt, 2000.0, seed);
        let taus: Vec<f64> = exit_times(&starts, &m, &dom, &cfg)
            .unwrap()
            .iter()
            .map(Outcome::exit_time)
            .collect();
        assert!(taus.iter().filter(|t| t.is_infinite()).count() <= 5);
        let finite: Vec<f64> = taus.into_iter().filter(|t| t.is_finite()).collect();
        stats.push(mean_se(&finite));
    }
    let ((a, sa), (b, sb)) = (stats[0], stats[1]);
    assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "{a} +- {sa} vs {b} +- {sb}");
}

#[test]
fn tangential_exits_vanish_with_the_threshold() {
    let m = ModelSpec::FreeTransport { dim: 2, sigma: 1.0 }.build().unwrap();
    let dom = CylindricalDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
    let starts = vec![KineticState::new(vec![0.3, -0.2], vec![0.0, 0.5]).unwrap(); 4000];
    let out = exit_times(&starts, &m, &dom, &IntegratorConfig::new(0.01, 50.0, 9)).unwrap();
    let recs: Vec<_> = out.iter().filter_map(Outcome::exit).collect();
    assert!(recs.len() > 3900);
    let freq = |thr: f64| {
        recs.iter()
            .filter(|r| r.normal_velocity.abs() <= thr * (1.0 + norm(&r.exit_state.p)))
            .count() as f64
            / recs.len() as f64
    };
    let f: Vec<f64> = [1e-1, 1e-2, 1e-3, TANGENTIAL_THRESHOLD].iter().map(|&t| freq(t)).collect();
    assert!(f.windows(2).all(|w| w[1] <= w[0]), "{f:?}");
    assert!(f[0] > 0.0 && f[3] <= 1.0 / recs.len() as f64, "{f:?}");
    // Every exit leaves through the closure of the outgoing set.
    assert!(recs.iter().all(|r| r.normal_velocity >= -TANGENTIAL_THRESHOLD * (1.0 + norm(&r.exit_state.p))));
}

#[test]
fn free_langevin_momentum_has_ou_moments() {
    use kinetic_qsd::model::{Perturbation, Potential};
    let (gamma, kt, t) = (0.8, 0.5, 2.0);
    let m = ModelSpec::NonconservativeLangevin {
        dim: 1,
        potential: Potential::Flat,
        ell: Perturbation::Zero,
        gamma,
        kt,
        alpha_drift: 1.0,
        beta_drift: 0.0,
    }
    .build()
    .unwrap();
    let p0 = 1.5;
    let starts = vec![KineticState::new(vec![0.0], vec![p0]).unwrap(); 20_000];
    let out = exit_times(&starts, &m, &CylindricalDomain::full_space(1), &IntegratorConfig::new(0.05, t, 12)).unwrap();
    let ps: Vec<f64> = out
        .iter()
        .map(|o| match o {
            Outcome::Survived(s) => s.p[0],
            Outcome::Exited(_) => panic!("no boundary in full space"),
        })
        .collect();
    let mean = p0 * (-gamma * t).exp();
    let var = kt * (1.0 - (-2.0 * gamma * t).exp());
    let n = ps.len() as f64;
    let (m_hat, se_m) = mean_se(&ps);
    let v_hat = ps.iter().map(|x| (x - m_hat).powi(2)).sum::<f64>() / (n - 1.0);
    let se_v = var * (2.0 / (n - 1.0)).sqrt();
    assert!((m_hat - mean).abs() < 4.0 * se_m, "{m_hat} vs {mean}");
    assert!((v_hat - var).abs() < 4.0 * se_v, "{v_hat} vs {var}");
}
