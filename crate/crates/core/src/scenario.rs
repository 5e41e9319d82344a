//! Monte Carlo detection-rate experiment.
//!
//! A trial is one `(true topology, time step, repetition)`: the true state is solved with the
//! true injections, μPMU and SCADA readings are simulated, the candidate library is solved
//! from the SCADA readings, and every requested criterion is applied to both signals.
//!
//! Device offsets are drawn once per measurement run, i.e. per simulated day
//! `(true topology, repetition)`, and held for its 96 steps. Every random draw is keyed by
//! `(master_seed, run or trial index, device)`, so results do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::detector::{
    armv_among, detect, row_votes, Criterion, DetectionOutcome, DifferenceMatrices, LibraryBuilder, Signal,
    Verdict,
};
use crate::error::{Error, Result};
use crate::measurement::{
    install_pmus, install_scada, sample_pmu, sample_scada, AngleUnit, DeviceSpec, MeasurementSet,
    REFERENCE_PMU_ACCURACY, REFERENCE_PMU_SIGMA, REFERENCE_SCADA_ACCURACY, REFERENCE_SCADA_SIGMA,
};
use crate::network::{load_network, NetworkDefinition};
use crate::powerflow::{InjectionSnapshot, PowerFlowSolution};
use crate::profiles::{InjectionSeries, STEPS_PER_DAY};

/// Text of the bundled reference-noise experiment.
pub const REFERENCE_CFG: &str = include_str!("../fixtures/paper.cfg");
/// Text of the bundled noise-free experiment.
pub const ZERO_NOISE_CFG: &str = include_str!("../fixtures/zero_noise.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
pub enum AngleUnitName {
    #[default]
    #[serde(rename = "rad")]
    Rad,
    #[serde(rename = "deg")]
    Deg,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Network file; `fivebus` selects the bundled feeder.
    #[serde(default = "default_network")]
    pub network: PathBuf,
    /// `default`, `zero`, or a profile CSV path.
    #[serde(default = "default_profile")]
    pub profile: String,
    #[serde(default = "default_pmu_sigma")]
    pub pmu_sigma: f64,
    #[serde(default = "default_pmu_accuracy")]
    pub pmu_accuracy: f64,
    #[serde(default)]
    pub pmu_angle_unit: AngleUnitName,
    #[serde(default = "default_scada_sigma")]
    pub scada_sigma: f64,
    #[serde(default = "default_scada_accuracy")]
    pub scada_accuracy: f64,
    /// μPMU locations; every bus when absent.
    #[serde(default)]
    pub pmu_buses: Option<Vec<usize>>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_criteria")]
    pub criteria: Vec<Criterion>,
    #[serde(default = "default_signals")]
    pub signals: Vec<Signal>,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
}

fn default_network() -> PathBuf {
    PathBuf::from("fivebus")
}
fn default_profile() -> String {
    "default".into()
}
fn default_pmu_sigma() -> f64 {
    REFERENCE_PMU_SIGMA
}
fn default_pmu_accuracy() -> f64 {
    REFERENCE_PMU_ACCURACY
}
fn default_scada_sigma() -> f64 {
    REFERENCE_SCADA_SIGMA
}
fn default_scada_accuracy() -> f64 {
    REFERENCE_SCADA_ACCURACY
}
fn default_repetitions() -> usize {
    20
}
fn default_criteria() -> Vec<Criterion> {
    Criterion::ALL.to_vec()
}
fn default_signals() -> Vec<Signal> {
    Signal::ALL.to_vec()
}
fn default_seed() -> u64 {
    1
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl ScenarioConfig {
    /// Parses config text. Relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))?;
        if cfg.network != Path::new("fivebus") && cfg.network.is_relative() {
            let local = base_dir.join(&cfg.network);
            // the bundled fixture name also resolves when no such file sits next to the config
            cfg.network = if !local.exists() && cfg.network == Path::new("fivebus.net") {
                default_network()
            } else {
                local
            };
        }
        if !matches!(cfg.profile.as_str(), "default" | "zero") && Path::new(&cfg.profile).is_relative() {
            cfg.profile = base_dir.join(&cfg.profile).display().to_string();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// The bundled reference experiment.
    pub fn reference() -> Self {
        Self::parse(REFERENCE_CFG, Path::new(".")).expect("bundled config is valid")
    }

    /// No noise and no offsets on any device.
    pub fn noiseless() -> Self {
        Self {
            pmu_sigma: 0.0,
            pmu_accuracy: 0.0,
            scada_sigma: 0.0,
            scada_accuracy: 0.0,
            repetitions: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Configuration("repetitions must be at least 1".into()));
        }
        if self.criteria.is_empty() || self.signals.is_empty() {
            return Err(Error::Configuration("need at least one criterion and one signal".into()));
        }
        self.pmu_spec().validate()?;
        self.scada_spec().validate()
    }

    pub fn pmu_spec(&self) -> DeviceSpec {
        DeviceSpec {
            angle_unit: match self.pmu_angle_unit {
                AngleUnitName::Rad => AngleUnit::Radians,
                AngleUnitName::Deg => AngleUnit::Degrees,
            },
            ..DeviceSpec::micro_pmu(self.pmu_sigma, self.pmu_accuracy)
        }
    }

    pub fn scada_spec(&self) -> DeviceSpec {
        DeviceSpec::scada(self.scada_sigma, self.scada_accuracy)
    }
}

/// Verdicts of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub true_topology: usize,
    pub time_index: usize,
    pub repetition: usize,
    pub outcomes: Vec<DetectionOutcome>,
    /// Per-signal row votes (`None` = abstained), rows in μPMU order.
    pub row_votes: Vec<(Signal, Vec<Option<usize>>)>,
    /// ARMV restricted to the true topology and one confuser: `(signal, confuser, verdict)`.
    pub pairwise: Vec<(Signal, usize, Verdict)>,
    /// Per signal: whether the noise-free true state differs from every other candidate.
    pub distinguishable: Vec<(Signal, bool)>,
}

impl TrialOutcome {
    pub fn outcome(&self, criterion: Criterion, signal: Signal) -> Option<&DetectionOutcome> {
        self.outcomes
            .iter()
            .find(|o| o.criterion == criterion && o.signal == signal)
    }

    pub fn is_correct(&self, criterion: Criterion, signal: Signal) -> bool {
        self.outcome(criterion, signal)
            .is_some_and(|o| o.verdict == Verdict::Topology(self.true_topology))
    }

    pub fn is_distinguishable(&self, signal: Signal) -> bool {
        self.distinguishable
            .iter()
            .any(|&(s, d)| s == signal && d)
    }
}

/// A prepared experiment: network, injections, true states, and candidate admittances.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ScenarioConfig,
    pub network: NetworkDefinition,
    pub series: InjectionSeries,
    snapshots: Vec<InjectionSnapshot>,
    builder: LibraryBuilder,
    truth: Vec<Vec<PowerFlowSolution>>,
    pmu_buses: Vec<usize>,
    scada_buses: Vec<usize>,
}

impl Experiment {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        let network = load_network(&config.network)?;
        let series = match config.profile.as_str() {
            "default" => InjectionSeries::default_for(&network.graph),
            "zero" => InjectionSeries::zero(&network.graph),
            path => InjectionSeries::load_csv(&network.graph, Path::new(path))?,
        };
        Self::from_parts(config, network, series)
    }

    pub fn from_parts(config: ScenarioConfig, network: NetworkDefinition, series: InjectionSeries) -> Result<Self> {
        config.validate()?;
        let graph = &network.graph;
        let builder = LibraryBuilder::new(graph, &network.topologies)?;
        let snapshots = series.snapshots(graph)?;
        let truth = (0..network.topologies.len())
            .map(|q| {
                snapshots
                    .iter()
                    .enumerate()
                    .map(|(t, inj)| builder.solve_one(q, inj, t))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let pmu_buses = match &config.pmu_buses {
            Some(b) => {
                if let Some(bad) = b.iter().find(|&&id| id == 0 || id > graph.bus_count()) {
                    return Err(Error::Configuration(format!("μPMU bus {bad} not in network")));
                }
                b.clone()
            }
            None => graph.bus_ids(),
        };
        let scada_buses = series.metered_buses();
        Ok(Self {
            config,
            network,
            series,
            snapshots,
            builder,
            truth,
            pmu_buses,
            scada_buses,
        })
    }

    pub fn topology_count(&self) -> usize {
        self.network.topologies.len()
    }

    pub fn time_steps(&self) -> usize {
        self.snapshots.len()
    }

    pub fn pmu_buses(&self) -> &[usize] {
        &self.pmu_buses
    }

    pub fn builder(&self) -> &LibraryBuilder {
        &self.builder
    }

    /// Noise-free state of topology `q` at step `t`.
    pub fn true_state(&self, q: usize, t: usize) -> &PowerFlowSolution {
        &self.truth[q][t]
    }

    pub fn trial_count(&self) -> usize {
        self.topology_count() * self.time_steps() * self.config.repetitions
    }

    fn run_index(&self, q: usize, repetition: usize) -> u64 {
        (q * self.config.repetitions + repetition) as u64
    }

    fn trial_index(&self, q: usize, t: usize, repetition: usize) -> u64 {
        self.run_index(q, repetition) * STEPS_PER_DAY as u64 + t as u64
    }

    /// Simulated readings of every device for one trial.
    pub fn measure(&self, q: usize, t: usize, repetition: usize) -> Result<MeasurementSet> {
        let seed = self.config.master_seed;
        let run = self.run_index(q, repetition);
        let trial = self.trial_index(q, t, repetition);
        let pmus = install_pmus(&self.pmu_buses, self.config.pmu_spec(), seed, run)?;
        let scada = install_scada(&self.scada_buses, self.config.scada_spec(), seed, run)?;
        Ok(MeasurementSet {
            time_index: t,
            phasors: sample_pmu(&self.truth[q][t], &pmus, t, seed, trial)?,
            scada: sample_scada(&self.snapshots[t], &scada, t, seed, trial)?,
            rng_seed: seed,
        })
    }

    /// Measurements and difference matrices of one trial.
    pub fn difference_matrices(&self, q: usize, t: usize, repetition: usize) -> Result<DifferenceMatrices> {
        let set = self.measure(q, t, repetition)?;
        let inj = set.scada_injections(&self.network.graph)?;
        let states = self.builder.solve_step(&inj, t)?;
        let refs: Vec<&PowerFlowSolution> = states.iter().collect();
        DifferenceMatrices::from_states(&set.phasors, &refs, self.builder.topology_ids())
    }

    fn distinguishable(&self, q: usize, t: usize, signal: Signal) -> bool {
        let truth = &self.truth[q][t];
        (0..self.topology_count()).filter(|&o| o != q).all(|o| {
            let other = &self.truth[o][t];
            self.pmu_buses.iter().any(|&b| match signal {
                Signal::Angle => truth.va_deg(b - 1) != other.va_deg(b - 1),
                Signal::Magnitude => truth.vm[b - 1] != other.vm[b - 1],
            })
        })
    }

    pub fn run_trial(&self, q: usize, t: usize, repetition: usize) -> Result<TrialOutcome> {
        let wrap = |e: Error| Error::Trial {
            topology: self.network.topologies[q].id.clone(),
            time_index: t,
            repetition,
            source: Box::new(e),
        };
        if q >= self.topology_count() || t >= self.time_steps() || repetition >= self.config.repetitions {
            return Err(wrap(Error::Configuration("trial index out of range".into())));
        }
        let dm = self.difference_matrices(q, t, repetition).map_err(wrap)?;
        let mut outcome = TrialOutcome {
            true_topology: q,
            time_index: t,
            repetition,
            outcomes: Vec::new(),
            row_votes: Vec::new(),
            pairwise: Vec::new(),
            distinguishable: Vec::new(),
        };
        for &signal in &self.config.signals {
            let m = dm.matrix(signal);
            for &criterion in &self.config.criteria {
                outcome.outcomes.push(detect(criterion, m, signal));
            }
            outcome.row_votes.push((signal, row_votes(m)));
            for confuser in (0..self.topology_count()).filter(|&o| o != q) {
                outcome
                    .pairwise
                    .push((signal, confuser, armv_among(m, &[q.min(confuser), q.max(confuser)])));
            }
            outcome.distinguishable.push((signal, self.distinguishable(q, t, signal)));
        }
        Ok(outcome)
    }

    /// Runs every trial on the current rayon pool.
    pub fn run(&self) -> Result<DetectionRateReport> {
        let steps = self.time_steps();
        let reps = self.config.repetitions;
        let results: Vec<Result<TrialOutcome>> = (0..self.trial_count())
            .into_par_iter()
            .map(|k| {
                let q = k / (steps * reps);
                let rest = k % (steps * reps);
                self.run_trial(q, rest % steps, rest / steps)
            })
            .collect();
        let total = results.len();
        let mut trials = Vec::with_capacity(total);
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(t) => trials.push(t),
                Err(e) => failures.push(e),
            }
        }
        if !failures.is_empty() {
            let failed = failures.len();
            return Err(Error::Experiment {
                failed,
                total,
                first: Box::new(failures.swap_remove(0)),
            });
        }
        Ok(DetectionRateReport::from_trials(self, trials))
    }

    /// Runs on a dedicated pool of `jobs` threads (all cores when `None`).
    pub fn run_with_jobs(&self, jobs: Option<usize>) -> Result<DetectionRateReport> {
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = jobs {
            pool = pool.num_threads(n.max(1));
        }
        let pool = pool
            .build()
            .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?;
        pool.install(|| self.run())
    }
}

pub fn run_experiment(config: ScenarioConfig) -> Result<DetectionRateReport> {
    Experiment::new(config)?.run()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub correct: u64,
    pub incorrect: u64,
    pub inconclusive: u64,
}

impl Tally {
    pub fn add(&mut self, truth: usize, verdict: Verdict) {
        match verdict {
            Verdict::Topology(q) if q == truth => self.correct += 1,
            Verdict::Topology(_) => self.incorrect += 1,
            Verdict::Inconclusive => self.inconclusive += 1,
        }
    }

    pub fn merge(&mut self, other: &Tally) {
        self.correct += other.correct;
        self.incorrect += other.incorrect;
        self.inconclusive += other.inconclusive;
    }

    pub fn total(&self) -> u64 {
        self.correct + self.incorrect + self.inconclusive
    }

    fn frac(&self, k: u64) -> f64 {
        match self.total() {
            0 => 0.0,
            n => k as f64 / n as f64,
        }
    }

    pub fn correct_rate(&self) -> f64 {
        self.frac(self.correct)
    }

    pub fn incorrect_rate(&self) -> f64 {
        self.frac(self.incorrect)
    }

    pub fn inconclusive_rate(&self) -> f64 {
        self.frac(self.inconclusive)
    }
}

/// Aggregated detection rates. All maps are ordered so the report serializes identically
/// regardless of the order trials finished in.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRateReport {
    pub topology_ids: Vec<String>,
    pub pmu_buses: Vec<usize>,
    pub criteria: Vec<Criterion>,
    pub signals: Vec<Signal>,
    /// `(true topology, criterion, signal)` → aggregate verdicts.
    pub aggregate: BTreeMap<(usize, Criterion, Signal), Tally>,
    /// `(true topology, signal, bus)` → that μPMU's own row vote.
    pub per_bus: BTreeMap<(usize, Signal, usize), Tally>,
    /// `(criterion, signal, true topology, verdict)` → count.
    pub confusion: BTreeMap<(Criterion, Signal, usize, Verdict), u64>,
    /// `(signal, true topology, confuser)` → ARMV restricted to the pair.
    pub pairwise: BTreeMap<(Signal, usize, usize), Tally>,
    pub trials: Vec<TrialOutcome>,
}

impl DetectionRateReport {
    pub fn from_trials(exp: &Experiment, trials: Vec<TrialOutcome>) -> Self {
        let mut report = Self {
            topology_ids: exp.network.topology_ids(),
            pmu_buses: exp.pmu_buses.clone(),
            criteria: exp.config.criteria.clone(),
            signals: exp.config.signals.clone(),
            aggregate: BTreeMap::new(),
            per_bus: BTreeMap::new(),
            confusion: BTreeMap::new(),
            pairwise: BTreeMap::new(),
            trials: Vec::new(),
        };
        let nt = report.topology_ids.len();
        for q in 0..nt {
            for &s in &report.signals {
                for &c in &report.criteria {
                    report.aggregate.insert((q, c, s), Tally::default());
                    for v in (0..nt).map(Verdict::Topology).chain([Verdict::Inconclusive]) {
                        report.confusion.insert((c, s, q, v), 0);
                    }
                }
                for &b in &report.pmu_buses {
                    report.per_bus.insert((q, s, b), Tally::default());
                }
                for o in (0..nt).filter(|&o| o != q) {
                    report.pairwise.insert((s, q, o), Tally::default());
                }
            }
        }
        for trial in &trials {
            let q = trial.true_topology;
            for o in &trial.outcomes {
                report.aggregate.entry((q, o.criterion, o.signal)).or_default().add(q, o.verdict);
                *report.confusion.entry((o.criterion, o.signal, q, o.verdict)).or_default() += 1;
            }
            for (s, votes) in &trial.row_votes {
                for (&bus, vote) in report.pmu_buses.iter().zip(votes) {
                    let verdict = vote.map_or(Verdict::Inconclusive, Verdict::Topology);
                    report.per_bus.entry((q, *s, bus)).or_default().add(q, verdict);
                }
            }
            for &(s, confuser, verdict) in &trial.pairwise {
                report.pairwise.entry((s, q, confuser)).or_default().add(q, verdict);
            }
        }
        report.trials = trials;
        report
    }

    pub fn topology_index(&self, id: &str) -> Option<usize> {
        self.topology_ids.iter().position(|t| t == id)
    }

    pub fn tally(&self, true_topology: usize, criterion: Criterion, signal: Signal) -> Tally {
        self.aggregate
            .get(&(true_topology, criterion, signal))
            .copied()
            .unwrap_or_default()
    }

    /// Pooled over all true topologies.
    pub fn overall(&self, criterion: Criterion, signal: Signal) -> Tally {
        let mut t = Tally::default();
        for q in 0..self.topology_ids.len() {
            t.merge(&self.tally(q, criterion, signal));
        }
        t
    }

    pub fn pairwise_tally(&self, signal: Signal, true_topology: usize, confuser: usize) -> Tally {
        self.pairwise
            .get(&(signal, true_topology, confuser))
            .copied()
            .unwrap_or_default()
    }

    /// Human-readable table of pooled rates per criterion and signal.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10}{:<11}{:>9}{:>14}{:>9}", "criterion", "signal", "correct", "inconclusive", "trials");
        for &c in &self.criteria {
            for &s in &self.signals {
                let t = self.overall(c, s);
                let _ = writeln!(
                    out,
                    "{:<10}{:<11}{:>9.4}{:>14.4}{:>9}",
                    c.to_string(),
                    s.to_string(),
                    t.correct_rate(),
                    t.inconclusive_rate(),
                    t.total()
                );
            }
        }
        out
    }
}

fn verdict_label(ids: &[String], v: Verdict) -> &str {
    match v {
        Verdict::Topology(q) => &ids[q],
        Verdict::Inconclusive => "inconclusive",
    }
}

fn rate(x: f64) -> String {
    format!("{x:.6}")
}

/// Writes `rates.csv`, `confusion.csv`, and `pairwise.csv` into `out_dir`.
///
/// `rates.csv` has one row per (true topology, criterion, signal) for the aggregate verdict
/// (`bus = all`) and one per μPMU bus; bus rows give that bus's own row vote, which is what
/// every criterion reduces to on a single row.
pub fn write_report(report: &DetectionRateReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ids = &report.topology_ids;

    let rates_path = out_dir.join("rates.csv");
    let mut w = csv::Writer::from_path(&rates_path).map_err(|e| Error::csv(&rates_path, e))?;
    let mut rows: Vec<[String; 7]> = Vec::new();
    for (q, id) in ids.iter().enumerate() {
        for &c in &report.criteria {
            for &s in &report.signals {
                let t = report.tally(q, c, s);
                rows.push([id.clone(), c.to_string(), s.to_string(), "all".into(), rate(t.correct_rate()), rate(t.inconclusive_rate()), t.total().to_string()]);
                for &b in &report.pmu_buses {
                    let t = report.per_bus.get(&(q, s, b)).copied().unwrap_or_default();
                    rows.push([id.clone(), c.to_string(), s.to_string(), b.to_string(), rate(t.correct_rate()), rate(t.inconclusive_rate()), t.total().to_string()]);
                }
            }
        }
    }
    w.write_record(["true_topology", "criterion", "signal", "bus", "correct_rate", "inconclusive_rate", "n"])
        .and_then(|_| rows.iter().try_for_each(|r| w.write_record(r)))
        .and_then(|_| w.flush().map_err(csv::Error::from))
        .map_err(|e| Error::csv(&rates_path, e))?;

    let confusion_path = out_dir.join("confusion.csv");
    let mut w = csv::Writer::from_path(&confusion_path).map_err(|e| Error::csv(&confusion_path, e))?;
    w.write_record(["criterion", "signal", "true_topology", "detected", "count"])
        .and_then(|_| {
            report.confusion.iter().try_for_each(|((c, s, q, v), n)| {
                w.write_record([c.to_string(), s.to_string(), ids[*q].clone(), verdict_label(ids, *v).to_string(), n.to_string()])
            })
        })
        .and_then(|_| w.flush().map_err(csv::Error::from))
        .map_err(|e| Error::csv(&confusion_path, e))?;

    let pairwise_path = out_dir.join("pairwise.csv");
    let mut w = csv::Writer::from_path(&pairwise_path).map_err(|e| Error::csv(&pairwise_path, e))?;
    w.write_record(["signal", "true_topology", "confuser", "correct_rate", "n"])
        .and_then(|_| {
            report.pairwise.iter().try_for_each(|((s, q, o), t)| {
                w.write_record([s.to_string(), ids[*q].clone(), ids[*o].clone(), rate(t.correct_rate()), t.total().to_string()])
            })
        })
        .and_then(|_| w.flush().map_err(csv::Error::from))
        .map_err(|e| Error::csv(&pairwise_path, e))?;

    Ok(vec![rates_path, confusion_path, pairwise_path])
}
