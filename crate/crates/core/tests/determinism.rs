use kinetic_qsd::diagnostics::{exit_law_battery, harnack_ratio_scan, ExitLawOptions, PhaseSet};
use kinetic_qsd::integrate::{exit_times, IntegratorConfig, Outcome};
use kinetic_qsd::model::catalog::ModelSpec;
use kinetic_qsd::model::{CoefficientModel, CylindricalDomain, KineticState};
use kinetic_qsd::qsd::{
    conditioned_mc, fleming_viot_run, ConditionedOptions, FvOptions, HistogramSpec, InitialDistribution, StartLaw,
};

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

fn harmonic() -> CoefficientModel {
    ModelSpec::HarmonicLangevin {
        dim: 1,
        omega: 1.0,
        gamma: 1.0,
        kt: 0.5,
    }
    .build()
    .unwrap()
}

fn domain() -> CylindricalDomain {
    CylindricalDomain::interval(-1.0, 1.0).unwrap()
}

fn spec() -> HistogramSpec {
    HistogramSpec::new(vec![-1.0], vec![1.0], vec![-3.0], vec![3.0], 16).unwrap()
}

fn start() -> StartLaw {
    InitialDistribution::Uniform {
        q_lo: vec![-0.5],
        q_hi: vec![0.5],
        p_lo: vec![-1.0],
        p_hi: vec![1.0],
    }
    .into()
}

#[test]
fn exit_times_do_not_depend_on_thread_count() {
    let m = harmonic();
    let starts = vec![KineticState::new(vec![0.1], vec![0.2]).unwrap(); 400];
    let cfg = IntegratorConfig::new(0.005, 10.0, 77);
    let run = || exit_times(&starts, &m, &domain(), &cfg).unwrap();
    let (a, b) = (with_threads(1, run), with_threads(3, run));
    assert_eq!(a, b);
    assert!(a.iter().any(|o| matches!(o, Outcome::Exited(_))));
}

#[test]
fn fleming_viot_does_not_depend_on_thread_count() {
    let m = harmonic();
    let opts = FvOptions::new(IntegratorConfig::new(0.01, 5.0, 3), spec());
    let run = || fleming_viot_run(&start(), &m, &domain(), 300, &opts).unwrap();
    let (a, b) = (with_threads(1, run), with_threads(3, run));
    assert!(a.estimate.kill_count > 0);
    assert_eq!(a.estimate.histogram.weights, b.estimate.histogram.weights);
    assert_eq!(a.estimate.lambda0_hat.to_bits(), b.estimate.lambda0_hat.to_bits());
    assert_eq!(a.estimate.lambda0_stderr.to_bits(), b.estimate.lambda0_stderr.to_bits());
    assert_eq!(a.final_states, b.final_states);
    assert_eq!(a.kills_per_epoch, b.kills_per_epoch);
}

#[test]
fn conditioned_mc_does_not_depend_on_thread_count() {
    let m = harmonic();
    let opts = ConditionedOptions::new(IntegratorConfig::new(0.01, 1.0, 5), spec(), 2000);
    let run = || conditioned_mc(&start(), &m, &domain(), &opts).unwrap();
    let (a, b) = (with_threads(1, run), with_threads(3, run));
    assert_eq!(a.histogram, b.histogram);
    assert_eq!(a.n_samples, b.n_samples);
}

#[test]
fn batteries_do_not_depend_on_thread_count() {
    let m = harmonic();
    let cfg = IntegratorConfig::new(0.01, 40.0, 6);
    let opts = ExitLawOptions::new(cfg.clone(), 1000);
    let battery = || exit_law_battery(&start(), &m, &domain(), &opts).unwrap();
    let (a, b) = (with_threads(1, battery), with_threads(3, battery));
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let starts = vec![(vec![0.0], vec![0.0]), (vec![0.5], vec![-0.5])];
    let scan = || harnack_ratio_scan(&PhaseSet::Domain, &starts, &m, &domain(), &[0.5, 1.0], 0.5, 500, &cfg).unwrap();
    let (a, b) = (with_threads(1, scan), with_threads(3, scan));
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
