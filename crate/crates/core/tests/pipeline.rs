use gofkit::builtin;
use gofkit::lipschitz::{DensityTestConfig, DensityTestId, PreparedDensityTest};
use gofkit::partition::{
    assign_samples, partition_to_multinomial, standard_partition, BuildLimits, PartitionConstants,
};
use gofkit::rng::rng_from_seed;
use gofkit::sim::{power_curve, PowerTable, SimConfig};

fn config(v: serde_json::Value) -> SimConfig {
    serde_json::from_value(v).unwrap()
}

fn multinomial_table(seed: u64) -> PowerTable {
    power_curve(&config(serde_json::json!({
        "null": "powerlaw:500", "alternative": "dense", "tests": ["trunc-chisq", "chisq", "max"],
        "eps_grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5], "n": 300, "trials": 400, "calibration_trials": 1000,
        "seed": seed
    })))
    .unwrap()
}

#[test]
fn zero_perturbation_has_nominal_power() {
    let t = multinomial_table(5);
    for row in t.rows.iter().filter(|r| r.eps == 0.0) {
        let se = (0.05f64 * 0.95 / row.trials as f64).sqrt();
        assert!(
            (row.power - 0.05).abs() <= 3.0 * se + 1e-12,
            "{} {}",
            row.test,
            row.power
        );
    }
}

#[test]
fn power_grows_with_the_perturbation() {
    let t = multinomial_table(6);
    for test in ["trunc-chisq", "chisq", "max"] {
        let rows: Vec<_> = t.rows.iter().filter(|r| r.test == test).collect();
        let drops = rows
            .windows(2)
            .filter(|w| w[1].power < w[0].power - 2.0 * w[0].stderr.max(w[1].stderr))
            .count();
        assert_eq!(drops, 0, "{test}");
    }
    assert!(t.power(0.5, "trunc-chisq").unwrap() > 0.5);
}

#[test]
fn power_tables_are_reproducible() {
    let cfg = config(serde_json::json!({
        "null": "uniform:200", "alternative": "sparse", "tests": ["two-thirds-tail", "lrt"],
        "eps_grid": [0.0, 0.3], "n": 100, "trials": 100, "calibration_trials": 200, "seed": 77
    }));
    let a = power_curve(&cfg).unwrap();
    let b = power_curve(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_json(), b.to_json());
    let other = power_curve(&SimConfig { seed: 78, ..cfg }).unwrap();
    assert_ne!(a.to_csv(), other.to_csv());
}

#[test]
fn partition_reduces_to_a_multinomial_with_tail_category_last() {
    let f = builtin("gaussian", &[0.0, 1.0]).unwrap();
    let p = standard_partition(
        f.as_ref(),
        1.0,
        0.3,
        PartitionConstants::LITERAL,
        BuildLimits::default(),
    )
    .unwrap();
    let m = partition_to_multinomial(&p).unwrap();
    assert_eq!(m.dim(), p.len() + 1);
    assert!((m.probs()[p.len()] - p.a_infty_prob).abs() < 1e-12);
    assert!((m.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);

    // far-away samples land in the tail category
    let x = [p.support.lower[0] - 1.0, 0.0, 100.0];
    let c = assign_samples(&p, &x);
    assert_eq!(c.counts.len(), p.len() + 1);
    assert_eq!(c.counts[p.len()], 2);
    assert_eq!(c.counts.iter().sum::<u64>(), 3);
}

#[test]
fn adaptive_bins_are_parsimonious_on_heavy_tails() {
    let f = builtin("pareto", &[0.5, 1.0]).unwrap();
    let cfg = DensityTestConfig {
        constants: PartitionConstants::SIM,
        ..Default::default()
    };
    let adaptive = PreparedDensityTest::new(DensityTestId::Minimax, &f, 1.0, 0.3, 2000, 0.05, &cfg).unwrap();
    let naive = PreparedDensityTest::new(DensityTestId::Naive, &f, 1.0, 0.3, 2000, 0.05, &cfg).unwrap();
    let (a, b) = (adaptive.cells().unwrap(), naive.cells().unwrap());
    assert!(b >= 5 * a, "adaptive {a} naive {b}");
}

#[test]
fn null_samples_round_trip_through_the_binned_test() {
    let f = builtin("beta", &[2.0, 3.0]).unwrap();
    let test = PreparedDensityTest::new(
        DensityTestId::BinnedChisq,
        &f,
        12.0,
        0.3,
        1000,
        0.05,
        &DensityTestConfig::default(),
    )
    .unwrap();
    let mut rng = rng_from_seed(3);
    let x = f.sample(1000, &mut rng);
    let model = test.binned().unwrap();
    let counts = assign_samples(&model.partition, &x);
    assert_eq!(counts.counts.iter().sum::<u64>(), 1000);
    // beta has bounded support, so nothing escapes the effective support
    // beyond its truncated mass
    assert!(counts.counts[model.partition.len()] <= 50);
}
