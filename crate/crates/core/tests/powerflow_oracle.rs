use num_complex::Complex64;
use proptest::prelude::*;

use topodetect::network::{build_ybus, AdmittanceMatrix, Bus, Line, NetworkGraph};
use topodetect::powerflow::{
    compute_mismatch, solve_fixed_point_oracle, solve_newton_raphson, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE,
};
use topodetect::profiles::{InjectionSeries, STEPS_PER_DAY};
use topodetect::{InjectionSnapshot, NetworkDefinition, PowerFlowSolution, TopologyConfig};

const TOL: f64 = DEFAULT_TOLERANCE;

fn nr(y: &AdmittanceMatrix, inj: &InjectionSnapshot) -> PowerFlowSolution {
    solve_newton_raphson(y, inj, TOL, DEFAULT_MAX_ITER).unwrap()
}

fn angle_gap_deg(a: f64, b: f64) -> f64 {
    (a - b).to_degrees().abs()
}

#[test]
fn newton_matches_fixed_point_on_every_fixture_case() {
    let def = NetworkDefinition::fivebus();
    let series = InjectionSeries::default_for(&def.graph);
    let mut cases = 0;
    for topo in &def.topologies {
        let y = build_ybus(&def.graph, topo).unwrap();
        for t in 0..STEPS_PER_DAY {
            let inj = series.snapshot(&def.graph, t).unwrap();
            let a = nr(&y, &inj);
            let b = solve_fixed_point_oracle(&y, &inj, TOL).unwrap();
            for k in 0..a.len() {
                assert!((a.vm[k] - b.vm[k]).abs() < 1e-8, "{} t={t} bus {}", topo.id, k + 1);
                assert!(angle_gap_deg(a.va[k], b.va[k]) < 1e-6, "{} t={t} bus {}", topo.id, k + 1);
            }
            assert!(a.iterations <= 10, "{} t={t}: {} iterations", topo.id, a.iterations);
            let m = compute_mismatch(&y, &inj, &a.voltages()).max_abs();
            assert!(m < TOL, "{} t={t}: mismatch {m}", topo.id);
            cases += 1;
        }
    }
    assert_eq!(cases, 480);
}

fn line_flows(graph: &NetworkGraph, topo: &TopologyConfig, sol: &PowerFlowSolution) -> Vec<(Complex64, Complex64)> {
    graph
        .closed_lines(topo)
        .map(|l| {
            let (vi, vj) = (sol.voltage(l.from_bus - 1), sol.voltage(l.to_bus - 1));
            let current = (vi - vj) * l.admittance();
            (vi * current.conj(), -vj * current.conj())
        })
        .collect()
}

#[test]
fn injections_balance_line_losses() {
    let def = NetworkDefinition::fivebus();
    let series = InjectionSeries::default_for(&def.graph);
    for topo in &def.topologies {
        let y = build_ybus(&def.graph, topo).unwrap();
        for t in (0..STEPS_PER_DAY).step_by(5) {
            let inj = series.snapshot(&def.graph, t).unwrap();
            let sol = nr(&y, &inj);
            let total: Complex64 = sol.bus_injections(&y).iter().sum();
            let losses: Complex64 = line_flows(&def.graph, topo, &sol).iter().map(|(a, b)| a + b).sum();
            assert!((total - losses).norm() < 10.0 * TOL, "{} t={t}", topo.id);
            // losses are real and reactive consumption in series impedances
            assert!(losses.re >= 0.0 && losses.im >= 0.0);
        }
    }
}

#[test]
fn default_profiles_respect_line_flow_cap() {
    let def = NetworkDefinition::fivebus();
    let series = InjectionSeries::default_for(&def.graph);
    let mut worst = 0.0f64;
    for topo in &def.topologies {
        let y = build_ybus(&def.graph, topo).unwrap();
        for t in 0..STEPS_PER_DAY {
            let sol = nr(&y, &series.snapshot(&def.graph, t).unwrap());
            for (a, b) in line_flows(&def.graph, topo, &sol) {
                worst = worst.max(a.norm()).max(b.norm());
            }
        }
    }
    assert!(worst <= 0.3, "max line flow {worst}");
    assert!(worst > 0.2, "profiles should load the feeder, got {worst}");
}

#[test]
fn peak_load_meshed_topology_converges_in_oracle() {
    let def = NetworkDefinition::fivebus();
    let series = InjectionSeries::default_for(&def.graph);
    let topo = def.topology("V").unwrap();
    let y = build_ybus(&def.graph, topo).unwrap();
    let peak = (0..STEPS_PER_DAY)
        .max_by(|&a, &b| {
            let load = |t: usize| -series.net[t].iter().map(|s| s.re).sum::<f64>();
            load(a).total_cmp(&load(b))
        })
        .unwrap();
    let inj = series.snapshot(&def.graph, peak).unwrap();
    let sol = solve_fixed_point_oracle(&y, &inj, TOL).unwrap();
    assert!(compute_mismatch(&y, &inj, &sol.voltages()).max_abs() < TOL);
}

/// Relabels PQ buses with `perm` (a permutation of 2..=n) keeping the slack at bus 1.
fn relabel(graph: &NetworkGraph, perm: &[usize]) -> NetworkGraph {
    let map = |b: usize| if b == 1 { 1 } else { perm[b - 2] };
    let mut buses: Vec<Bus> = graph
        .buses()
        .iter()
        .map(|b| Bus {
            id: map(b.id),
            ..b.clone()
        })
        .collect();
    buses.sort_by_key(|b| b.id);
    let lines = graph
        .lines()
        .iter()
        .map(|l| Line {
            from_bus: map(l.from_bus),
            to_bus: map(l.to_bus),
            ..l.clone()
        })
        .collect();
    NetworkGraph::new(buses, lines).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solution_invariant_under_bus_relabeling(
        perm in Just(vec![2usize, 3, 4, 5]).prop_shuffle(),
        t in 0..STEPS_PER_DAY,
        q in 0usize..5,
    ) {
        let def = NetworkDefinition::fivebus();
        let topo = &def.topologies[q];
        let series = InjectionSeries::default_for(&def.graph);
        let base = nr(&build_ybus(&def.graph, topo).unwrap(), &series.snapshot(&def.graph, t).unwrap());

        let graph = relabel(&def.graph, &perm);
        let mut net = vec![Complex64::new(0.0, 0.0); 5];
        for b in 2..=5 {
            net[perm[b - 2] - 1] = series.net[t][b - 1];
        }
        let sol = nr(&build_ybus(&graph, topo).unwrap(), &InjectionSnapshot::new(&graph, &net).unwrap());
        for b in 2..=5 {
            let k = perm[b - 2] - 1;
            prop_assert!((sol.vm[k] - base.vm[b - 1]).abs() < 1e-10);
            prop_assert!(angle_gap_deg(sol.va[k], base.va[b - 1]) < 1e-8);
        }
    }

    #[test]
    fn newton_agrees_with_oracle_on_random_loads(
        p in prop::collection::vec(-0.12f64..0.04, 4),
        q in prop::collection::vec(-0.05f64..0.05, 4),
        topo in 0usize..5,
    ) {
        let def = NetworkDefinition::fivebus();
        let y = build_ybus(&def.graph, &def.topologies[topo]).unwrap();
        let mut net = vec![Complex64::new(0.0, 0.0)];
        net.extend(p.iter().zip(&q).map(|(&p, &q)| Complex64::new(p, q)));
        let inj = InjectionSnapshot::new(&def.graph, &net).unwrap();
        let a = nr(&y, &inj);
        let b = solve_fixed_point_oracle(&y, &inj, TOL).unwrap();
        for k in 0..5 {
            prop_assert!((a.vm[k] - b.vm[k]).abs() < 1e-8);
            prop_assert!(angle_gap_deg(a.va[k], b.va[k]) < 1e-6);
        }
    }
}
