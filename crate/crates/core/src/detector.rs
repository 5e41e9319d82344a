//! Topology identification from μPMU readings.
//!
//! For every candidate topology a power flow is solved from the SCADA-measured injections.
//! The absolute differences between measured and calculated angles (ADM) and magnitudes (MDM)
//! form `N_pmu × N_T` matrices, and three row-minimum voting rules pick a topology.
//!
//! A row whose entries are all identical cannot prefer any topology (the slack-bus μPMU is
//! the usual case: its calculated voltage is the same in every topology). Such rows abstain
//! from voting. Otherwise argmin ties go to the lowest topology index.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::measurement::{MeasurementSet, PhasorMeasurement};
use crate::network::{build_ybus, AdmittanceMatrix, NetworkGraph, TopologyConfig};
use crate::powerflow::{solve_newton_raphson, InjectionSnapshot, PowerFlowSolution, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Deserialize)]
#[serde(try_from = "String")]
pub enum Criterion {
    /// Row minimum value: each row votes for its argmin; plurality wins.
    Rmv,
    /// Average row minimum value: argmin of the column means.
    Armv,
    /// Overall row minimum value: conclusive only when every voting row agrees.
    Ormv,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Rmv, Criterion::Armv, Criterion::Ormv];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Rmv => "RMV",
            Criterion::Armv => "ARMV",
            Criterion::Ormv => "ORMV",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RMV" => Ok(Criterion::Rmv),
            "ARMV" => Ok(Criterion::Armv),
            "ORMV" => Ok(Criterion::Ormv),
            _ => Err(Error::Configuration(format!("unknown criterion {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Deserialize)]
#[serde(try_from = "String")]
pub enum Signal {
    Angle,
    Magnitude,
}

impl Signal {
    pub const ALL: [Signal; 2] = [Signal::Angle, Signal::Magnitude];
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Signal::Angle => "angle",
            Signal::Magnitude => "magnitude",
        })
    }
}

impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "angle" => Ok(Signal::Angle),
            "magnitude" => Ok(Signal::Magnitude),
            _ => Err(Error::Configuration(format!("unknown signal {s:?}"))),
        }
    }
}

impl TryFrom<String> for Criterion {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl TryFrom<String> for Signal {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Detected topology as a column index into the library, or no decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    Topology(usize),
    Inconclusive,
}

impl Verdict {
    pub fn topology(self) -> Option<usize> {
        match self {
            Verdict::Topology(q) => Some(q),
            Verdict::Inconclusive => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionOutcome {
    pub criterion: Criterion,
    pub signal: Signal,
    pub verdict: Verdict,
    /// Per-row argmin (`None` = abstained). Empty for ARMV.
    pub row_votes: Vec<Option<usize>>,
}

/// Power-flow states of every candidate topology at a set of time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyLibrary {
    pub topology_ids: Vec<String>,
    pub time_indices: Vec<usize>,
    /// `entries[q][k]` is topology `q` at `time_indices[k]`.
    pub entries: Vec<Vec<PowerFlowSolution>>,
}

impl TopologyLibrary {
    pub fn topology_count(&self) -> usize {
        self.topology_ids.len()
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, topology: usize, time_index: usize) -> Option<&PowerFlowSolution> {
        let k = self.time_indices.iter().position(|&t| t == time_index)?;
        self.entries.get(topology)?.get(k)
    }

    /// All topologies' states at one time step.
    pub fn at(&self, time_index: usize) -> Result<Vec<&PowerFlowSolution>> {
        (0..self.topology_count())
            .map(|q| {
                self.get(q, time_index).ok_or_else(|| {
                    Error::Consistency(format!(
                        "library has no entry for topology {} at t = {time_index}",
                        self.topology_ids[q]
                    ))
                })
            })
            .collect()
    }
}

/// Admittance matrices of the candidate topologies, assembled once and reused for every solve.
#[derive(Debug, Clone)]
pub struct LibraryBuilder {
    topology_ids: Vec<String>,
    ybuses: Vec<AdmittanceMatrix>,
    pub tol: f64,
    pub max_iter: usize,
}

impl LibraryBuilder {
    /// Fails on the first disconnected or otherwise invalid candidate.
    pub fn new(graph: &NetworkGraph, topologies: &[TopologyConfig]) -> Result<Self> {
        let ybuses = topologies
            .iter()
            .map(|t| build_ybus(graph, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            topology_ids: topologies.iter().map(|t| t.id.clone()).collect(),
            ybuses,
            tol: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        })
    }

    pub fn topology_ids(&self) -> &[String] {
        &self.topology_ids
    }

    pub fn ybus(&self, topology: usize) -> &AdmittanceMatrix {
        &self.ybuses[topology]
    }

    pub fn solve_one(&self, topology: usize, inj: &InjectionSnapshot, time_index: usize) -> Result<PowerFlowSolution> {
        solve_newton_raphson(&self.ybuses[topology], inj, self.tol, self.max_iter).map_err(|e| Error::Library {
            topology: self.topology_ids[topology].clone(),
            time_index,
            source: Box::new(e),
        })
    }

    /// One solution per candidate topology, in candidate order.
    pub fn solve_step(&self, inj: &InjectionSnapshot, time_index: usize) -> Result<Vec<PowerFlowSolution>> {
        (0..self.ybuses.len())
            .map(|q| self.solve_one(q, inj, time_index))
            .collect()
    }

    pub fn build(&self, steps: &[(usize, InjectionSnapshot)]) -> Result<TopologyLibrary> {
        let mut entries = vec![Vec::with_capacity(steps.len()); self.ybuses.len()];
        for (t, inj) in steps {
            for (q, sol) in self.solve_step(inj, *t)?.into_iter().enumerate() {
                entries[q].push(sol);
            }
        }
        Ok(TopologyLibrary {
            topology_ids: self.topology_ids.clone(),
            time_indices: steps.iter().map(|(t, _)| *t).collect(),
            entries,
        })
    }
}

/// Library of calculated states, one time step per measurement set, driven by its SCADA readings.
pub fn build_library(
    graph: &NetworkGraph,
    topologies: &[TopologyConfig],
    measurements: &[MeasurementSet],
) -> Result<TopologyLibrary> {
    let steps = measurements
        .iter()
        .map(|m| Ok((m.time_index, m.scada_injections(graph)?)))
        .collect::<Result<Vec<_>>>()?;
    LibraryBuilder::new(graph, topologies)?.build(&steps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMatrices {
    pub bus_ids: Vec<usize>,
    pub topology_ids: Vec<String>,
    /// `|θ_meas − θ_calc|`, degrees.
    pub adm: DMatrix<f64>,
    /// `|V_meas − V_calc|`, p.u.
    pub mdm: DMatrix<f64>,
}

impl DifferenceMatrices {
    pub fn from_states(
        phasors: &[PhasorMeasurement],
        states: &[&PowerFlowSolution],
        topology_ids: &[String],
    ) -> Result<Self> {
        let rows = phasors.len();
        let cols = states.len();
        let mut adm = DMatrix::zeros(rows, cols);
        let mut mdm = DMatrix::zeros(rows, cols);
        for (p, m) in phasors.iter().enumerate() {
            for (q, sol) in states.iter().enumerate() {
                let k = m.bus_id.checked_sub(1).filter(|&k| k < sol.len()).ok_or_else(|| {
                    Error::Consistency(format!("μPMU bus {} absent from library solution", m.bus_id))
                })?;
                adm[(p, q)] = (m.va_deg - sol.va_deg(k)).abs();
                mdm[(p, q)] = (m.vm - sol.vm[k]).abs();
            }
        }
        Ok(Self {
            bus_ids: phasors.iter().map(|m| m.bus_id).collect(),
            topology_ids: topology_ids.to_vec(),
            adm,
            mdm,
        })
    }

    pub fn matrix(&self, signal: Signal) -> &DMatrix<f64> {
        match signal {
            Signal::Angle => &self.adm,
            Signal::Magnitude => &self.mdm,
        }
    }

    /// CSV with a header of topology ids and one row per μPMU bus.
    pub fn write_csv(&self, signal: Signal, out: &mut impl Write) -> std::io::Result<()> {
        let m = self.matrix(signal);
        write!(out, "bus")?;
        for id in &self.topology_ids {
            write!(out, ",{id}")?;
        }
        writeln!(out)?;
        for (r, bus) in self.bus_ids.iter().enumerate() {
            write!(out, "{bus}")?;
            for c in 0..m.ncols() {
                write!(out, ",{:.9e}", m[(r, c)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn compute_difference_matrices(
    measurements: &MeasurementSet,
    library: &TopologyLibrary,
    time_index: usize,
) -> Result<DifferenceMatrices> {
    let states = library.at(time_index)?;
    DifferenceMatrices::from_states(&measurements.phasors, &states, &library.topology_ids)
}

/// Index of the smallest entry, lowest index on ties; `None` when every entry is equal.
pub fn row_argmin(row: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut first = None;
    let mut uniform = true;
    for (k, v) in row.into_iter().enumerate() {
        match first {
            None => first = Some(v),
            Some(f) if f != v => uniform = false,
            _ => {}
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((k, v));
        }
    }
    if uniform {
        None
    } else {
        best.map(|(k, _)| k)
    }
}

pub fn row_votes(matrix: &DMatrix<f64>) -> Vec<Option<usize>> {
    matrix
        .row_iter()
        .map(|r| row_argmin(r.iter().copied()))
        .collect()
}

pub fn detect_rmv(matrix: &DMatrix<f64>, signal: Signal) -> DetectionOutcome {
    let votes = row_votes(matrix);
    let mut tally = vec![0usize; matrix.ncols()];
    for q in votes.iter().flatten() {
        tally[*q] += 1;
    }
    let top = tally.iter().copied().max().unwrap_or(0);
    let leaders: Vec<usize> = (0..tally.len()).filter(|&q| tally[q] == top).collect();
    let verdict = match leaders.as_slice() {
        [q] if top > 0 => Verdict::Topology(*q),
        _ => Verdict::Inconclusive,
    };
    DetectionOutcome {
        criterion: Criterion::Rmv,
        signal,
        verdict,
        row_votes: votes,
    }
}

/// Column means restricted to `columns`; the winner is reported as a full column index.
pub fn armv_among(matrix: &DMatrix<f64>, columns: &[usize]) -> Verdict {
    if matrix.nrows() == 0 {
        return Verdict::Inconclusive;
    }
    let rows = matrix.nrows() as f64;
    let mut best: Option<(usize, f64)> = None;
    for &q in columns {
        let mean = matrix.column(q).iter().sum::<f64>() / rows;
        if best.is_none_or(|(_, b)| mean < b) {
            best = Some((q, mean));
        }
    }
    best.map_or(Verdict::Inconclusive, |(q, _)| Verdict::Topology(q))
}

pub fn detect_armv(matrix: &DMatrix<f64>, signal: Signal) -> DetectionOutcome {
    let all: Vec<usize> = (0..matrix.ncols()).collect();
    DetectionOutcome {
        criterion: Criterion::Armv,
        signal,
        verdict: armv_among(matrix, &all),
        row_votes: Vec::new(),
    }
}

pub fn detect_ormv(matrix: &DMatrix<f64>, signal: Signal) -> DetectionOutcome {
    let votes = row_votes(matrix);
    let mut cast = votes.iter().flatten();
    let verdict = match cast.next() {
        Some(&q) if cast.all(|&v| v == q) => Verdict::Topology(q),
        _ => Verdict::Inconclusive,
    };
    DetectionOutcome {
        criterion: Criterion::Ormv,
        signal,
        verdict,
        row_votes: votes,
    }
}

pub fn detect(criterion: Criterion, matrix: &DMatrix<f64>, signal: Signal) -> DetectionOutcome {
    match criterion {
        Criterion::Rmv => detect_rmv(matrix, signal),
        Criterion::Armv => detect_armv(matrix, signal),
        Criterion::Ormv => detect_ormv(matrix, signal),
    }
}
