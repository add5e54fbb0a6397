use kqsd::config::{self, ExperimentConfig};
use proptest::prelude::*;

fn initial() -> impl Strategy<Value = String> {
    prop_oneof![
        (-0.9f64..0.9, -3.0f64..3.0).prop_map(|(q, p)| format!("type = \"point\"\nq = [{q:?}]\np = [{p:?}]")),
        (-0.9f64..0.0, 0.0f64..0.9, 0.1f64..2.0).prop_map(|(a, b, s)| format!(
            "type = \"uniform\"\nq_lo = [{a:?}]\nq_hi = [{b:?}]\np_lo = [{:?}]\np_hi = [{s:?}]",
            -s
        )),
        (-0.9f64..0.9, 0.01f64..3.0).prop_map(|(q, sd)| format!("type = \"gaussian-momentum\"\nq = [{q:?}]\nsd = {sd:?}")),
    ]
}

fn model() -> impl Strategy<Value = String> {
    prop_oneof![
        (0.1f64..5.0, 0.1f64..3.0, 0.05f64..2.0).prop_map(|(omega, gamma, kt)| format!(
            "name = \"harmonic-langevin\"\nomega = {omega:?}\ngamma = {gamma:?}\nkt = {kt:?}"
        )),
        (0.1f64..3.0, 0.1f64..2.0, 0.05f64..1.0).prop_map(|(h, q0, kt)| format!(
            "name = \"double-well-langevin\"\nh = {h:?}\nq0 = {q0:?}\nkt = {kt:?}"
        )),
        (0.0f64..2.0).prop_map(|s| format!("name = \"free-transport\"\nsigma = {s:?}")),
        (-2.0f64..2.0, 0.1f64..2.0).prop_map(|(b, s)| format!("name = \"sign-drift\"\nstrength = {b:?}\nsigma = {s:?}")),
    ]
}

fn config_text() -> impl Strategy<Value = String> {
    (
        model(),
        initial(),
        0u64..=i64::MAX as u64,
        1e-4f64..0.1,
        1.0f64..100.0,
        prop::bool::ANY,
        2usize..100_000,
        prop::option::of(10usize..500),
        prop_oneof![Just("auto"), Just("euler-maruyama")],
        prop_oneof![Just("substep-interpolation"), Just("endpoint-only")],
    )
        .prop_map(|(model, initial, seed, dt, max_time, fv, n, extra, scheme, crossing)| {
            let (kind, table) = if fv { ("fleming-viot", "fleming-viot") } else { ("simulate", "simulate") };
            let mut text = format!(
                "kind = \"{kind}\"\nseed = {seed}\n\n[model.catalog]\n{model}\n\n[domain]\ntype = \"interval\"\nlo = -1.0\nhi = 1.0\n\n\
                 [integrator]\ndt = {dt:?}\nmax_time = {max_time:?}\nscheme = \"{scheme}\"\ncrossing = \"{crossing}\"\n\n[{table}]\n"
            );
            if fv {
                text.push_str(&format!("n_particles = {n}\nburn_in = {:?}\n", max_time / 2.0));
                if let Some(k) = extra {
                    text.push_str(&format!("snapshot_times = [{:?}]\nrecord_every = {k}\n", max_time / 4.0));
                }
            } else {
                text.push_str(&format!("n_samples = {}\n", n.max(100)));
                if let Some(k) = extra {
                    text.push_str(&format!("survival_points = {k}\n"));
                }
            }
            text.push_str(&format!("\n[{table}.initial]\n{initial}\n"));
            text
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn configs_round_trip(text in config_text()) {
        let cfg = config::parse_str(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        let toml_back = config::parse_str(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&cfg, &toml_back);
        let json: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(&cfg, &json);
    }

    #[test]
    fn unknown_keys_are_rejected(text in config_text(), key in "[a-z]{3,8}_x") {
        let bad = text.replacen("[integrator]\n", &format!("[integrator]\n{key} = 1\n"), 1);
        let msg = config::parse_str(&bad).unwrap_err().to_string();
        let expected = format!("integrator.{key}: unknown key");
        prop_assert!(msg.contains(&expected), "{}", msg);
    }
}
