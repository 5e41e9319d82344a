use std::path::Path;

use topodetect::profiles::STEPS_PER_DAY;
use topodetect::scenario::Tally;
use topodetect::{write_report, Criterion, Experiment, ScenarioConfig, Signal, Verdict};

fn small(reps: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        repetitions: reps,
        master_seed: seed,
        ..ScenarioConfig::reference()
    }
}

#[test]
fn same_seed_same_report_regardless_of_threads() {
    let exp = Experiment::new(small(2, 5)).unwrap();
    let a = exp.run_with_jobs(Some(1)).unwrap();
    let b = exp.run_with_jobs(Some(4)).unwrap();
    assert_eq!(a, b);
    let other = Experiment::new(small(2, 6)).unwrap().run().unwrap();
    assert_ne!(a.aggregate, other.aggregate);
}

#[test]
fn trials_are_reproducible_individually() {
    let exp = Experiment::new(small(3, 9)).unwrap();
    let report = exp.run().unwrap();
    for trial in report.trials.iter().step_by(97) {
        let again = exp.run_trial(trial.true_topology, trial.time_index, trial.repetition).unwrap();
        assert_eq!(&again, trial);
    }
    assert_eq!(report.trials.len(), 5 * STEPS_PER_DAY * 3);
}

#[test]
fn noiseless_library_contains_the_truth_exactly() {
    let exp = Experiment::new(ScenarioConfig::noiseless()).unwrap();
    for q in 0..5 {
        for t in [0, 30, 51, 80] {
            let dm = exp.difference_matrices(q, t, 0).unwrap();
            for s in Signal::ALL {
                assert!(dm.matrix(s).column(q).iter().all(|&v| v == 0.0), "{q} {t} {s}");
            }
        }
    }
    let report = exp.run().unwrap();
    for c in Criterion::ALL {
        for s in Signal::ALL {
            assert_eq!(report.overall(c, s).correct_rate(), 1.0, "{c} {s}");
        }
    }
}

#[test]
fn more_noise_never_helps() {
    let rate = |pmu: f64| {
        let cfg = ScenarioConfig {
            pmu_sigma: pmu,
            pmu_accuracy: pmu,
            ..small(4, 3)
        };
        let r = Experiment::new(cfg).unwrap().run().unwrap();
        (r.overall(Criterion::Armv, Signal::Angle).correct_rate(), r.overall(Criterion::Armv, Signal::Magnitude).correct_rate())
    };
    let levels = [0.0, 1e-4, 2.5e-4, 1e-3, 4e-3];
    let rates: Vec<(f64, f64)> = levels.iter().map(|&s| rate(s)).collect();
    for w in rates.windows(2) {
        assert!(w[1].0 <= w[0].0 + 0.01, "{rates:?}");
        assert!(w[1].1 <= w[0].1 + 0.01, "{rates:?}");
    }
    assert!(rates[0].0 > 0.95);
    // far above the signal, detection approaches chance among five candidates
    assert!(rates[4].0 < 0.5, "{rates:?}");
}

#[test]
fn report_tables_have_expected_shape() {
    let exp = Experiment::new(small(1, 2)).unwrap();
    let report = exp.run().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_report(&report, dir.path()).unwrap();
    let lines = |p: &Path| std::fs::read_to_string(p).unwrap().lines().count();
    // topologies x criteria x signals x (buses + aggregate), plus header
    assert_eq!(lines(&files[0]), 5 * 3 * 2 * 6 + 1);
    // criteria x signals x true topologies x (topologies + inconclusive)
    assert_eq!(lines(&files[1]), 3 * 2 * 5 * 6 + 1);
    assert_eq!(lines(&files[2]), 2 * 5 * 4 + 1);

    let mut pooled = Tally::default();
    for q in 0..5 {
        pooled.merge(&report.tally(q, Criterion::Rmv, Signal::Angle));
    }
    assert_eq!(pooled, report.overall(Criterion::Rmv, Signal::Angle));
    assert_eq!(pooled.total(), 5 * STEPS_PER_DAY as u64);
    // the slack-bus row never votes
    for q in 0..5 {
        let t = report.per_bus[&(q, Signal::Angle, 1)];
        assert_eq!(t.inconclusive, t.total());
    }
    let confusion_total: u64 = report
        .confusion
        .iter()
        .filter(|((c, s, _, _), _)| *c == Criterion::Ormv && *s == Signal::Magnitude)
        .map(|(_, n)| n)
        .sum();
    assert_eq!(confusion_total, pooled.total());
    assert!(report.confusion.keys().any(|k| k.3 == Verdict::Inconclusive));
}

#[test]
fn restricted_pmu_placement_and_signal_subset() {
    let cfg = ScenarioConfig {
        pmu_buses: Some(vec![4, 5]),
        signals: vec![Signal::Angle],
        criteria: vec![Criterion::Armv],
        ..small(1, 4)
    };
    let exp = Experiment::new(cfg).unwrap();
    let trial = exp.run_trial(2, 40, 0).unwrap();
    assert_eq!(trial.outcomes.len(), 1);
    assert_eq!(trial.row_votes[0].1.len(), 2);
    assert!(exp.run_trial(0, STEPS_PER_DAY, 0).is_err());

    let bad = ScenarioConfig {
        pmu_buses: Some(vec![9]),
        ..small(1, 4)
    };
    assert!(Experiment::new(bad).is_err());
}

#[test]
fn config_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("grid.net"), topodetect::network::FIVEBUS_NET).unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, "network = \"grid.net\"\nrepetitions = 1\n").unwrap();
    let cfg = ScenarioConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.network, dir.path().join("grid.net"));
    assert!(Experiment::new(cfg).is_ok());
}
