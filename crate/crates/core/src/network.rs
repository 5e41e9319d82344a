//! Microgrid graph, candidate switch configurations, and the matrices derived from them.
//!
//! Buses are numbered `1..=N`; matrix row/column `k` always corresponds to bus `k + 1`.
//! Each line carries exactly one switch, so a topology is the set of closed switch ids.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Text of the bundled five-bus test feeder.
pub const FIVEBUS_NET: &str = include_str!("../fixtures/fivebus.net");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pq,
}

impl fmt::Display for BusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BusKind::Slack => f.write_str("slack"),
            BusKind::Pq => f.write_str("pq"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Per-unit reference voltage; for the slack bus this is the substation setpoint.
    pub base_voltage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: String,
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    pub switch_id: String,
}

impl Line {
    pub fn impedance(&self) -> Complex64 {
        Complex64::new(self.r, self.x)
    }

    /// Series admittance `1 / (r + jx)`.
    pub fn admittance(&self) -> Complex64 {
        self.impedance().inv()
    }
}

/// One candidate switch configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyConfig {
    pub id: String,
    pub closed_switches: BTreeSet<String>,
}

impl TopologyConfig {
    pub fn new<I, S>(id: impl Into<String>, closed: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            id: id.into(),
            closed_switches: closed.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_closed(&self, line: &Line) -> bool {
        self.closed_switches.contains(&line.switch_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    buses: Vec<Bus>,
    lines: Vec<Line>,
}

impl NetworkGraph {
    /// Builds a graph, reporting every invariant violation at once.
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>) -> Result<Self> {
        let violations = validate_graph(&buses, &lines);
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        Ok(Self { buses, lines })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_ids(&self) -> Vec<usize> {
        self.buses.iter().map(|b| b.id).collect()
    }

    pub fn slack(&self) -> &Bus {
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .expect("validated graph has a slack bus")
    }

    /// Zero-based matrix index of the slack bus.
    pub fn slack_index(&self) -> usize {
        self.slack().id - 1
    }

    fn check_switches(&self, topo: &TopologyConfig) -> Result<()> {
        let known: HashSet<&str> = self.lines.iter().map(|l| l.switch_id.as_str()).collect();
        let unknown: Vec<&str> = topo
            .closed_switches
            .iter()
            .map(String::as_str)
            .filter(|s| !known.contains(s))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Configuration(format!(
                "topology {} references unknown switch(es) {}",
                topo.id,
                unknown.join(", ")
            )))
        }
    }

    pub fn closed_lines<'a>(&'a self, topo: &'a TopologyConfig) -> impl Iterator<Item = &'a Line> {
        self.lines.iter().filter(move |l| topo.is_closed(l))
    }
}

fn validate_graph(buses: &[Bus], lines: &[Line]) -> Vec<String> {
    let mut v = Vec::new();
    if buses.is_empty() {
        v.push("network has no buses".to_string());
    }
    let mut seen = HashSet::new();
    for (k, bus) in buses.iter().enumerate() {
        if !seen.insert(bus.id) {
            v.push(format!("duplicate bus id {}", bus.id));
        } else if bus.id != k + 1 {
            v.push(format!(
                "bus ids must be contiguous from 1 in file order; found {} at position {}",
                bus.id,
                k + 1
            ));
        }
        if !(bus.base_voltage.is_finite() && bus.base_voltage > 0.0) {
            v.push(format!("bus {}: base voltage must be positive", bus.id));
        }
    }
    let slacks = buses.iter().filter(|b| b.kind == BusKind::Slack).count();
    if slacks != 1 && !buses.is_empty() {
        v.push(format!("expected exactly one slack bus, found {slacks}"));
    }

    let mut line_ids = HashSet::new();
    let mut switch_ids = HashSet::new();
    for line in lines {
        if !line_ids.insert(line.id.as_str()) {
            v.push(format!("duplicate line id {}", line.id));
        }
        if !switch_ids.insert(line.switch_id.as_str()) {
            v.push(format!(
                "line {}: switch {} already assigned to another line",
                line.id, line.switch_id
            ));
        }
        for end in [line.from_bus, line.to_bus] {
            if !seen.contains(&end) {
                v.push(format!("line {}: unknown bus {}", line.id, end));
            }
        }
        if line.from_bus == line.to_bus {
            v.push(format!("line {}: from and to bus are both {}", line.id, line.from_bus));
        }
        if !(line.r.is_finite() && line.x.is_finite()) {
            v.push(format!("line {}: impedance must be finite", line.id));
        } else {
            if line.r < 0.0 {
                v.push(format!("line {}: negative resistance {}", line.id, line.r));
            }
            if line.impedance().norm() == 0.0 {
                v.push(format!("line {}: zero impedance", line.id));
            }
        }
    }
    v
}

/// Line-to-bus incidence: one row per closed line, `-1` at the source bus and `+1` at the terminal bus.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    pub entries: DMatrix<i8>,
    /// Ids of the lines behind each row.
    pub line_ids: Vec<String>,
}

pub fn build_incidence_matrix(graph: &NetworkGraph, topo: &TopologyConfig) -> Result<IncidenceMatrix> {
    graph.check_switches(topo)?;
    let closed: Vec<&Line> = graph.closed_lines(topo).collect();
    let mut entries = DMatrix::<i8>::zeros(closed.len(), graph.bus_count());
    for (row, line) in closed.iter().enumerate() {
        entries[(row, line.from_bus - 1)] = -1;
        entries[(row, line.to_bus - 1)] = 1;
    }
    Ok(IncidenceMatrix {
        entries,
        line_ids: closed.iter().map(|l| l.id.clone()).collect(),
    })
}

/// Per-unit bus admittance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub entries: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    /// Stamps series admittances of `lines` into an `n`-bus matrix. No connectivity check.
    pub fn from_lines<'a>(n: usize, lines: impl IntoIterator<Item = &'a Line>) -> Self {
        let mut y = DMatrix::<Complex64>::zeros(n, n);
        for line in lines {
            let (i, j) = (line.from_bus - 1, line.to_bus - 1);
            let ys = line.admittance();
            y[(i, i)] += ys;
            y[(j, j)] += ys;
            y[(i, j)] -= ys;
            y[(j, i)] -= ys;
        }
        Self { entries: y }
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    /// Largest `|sum_j Y[i][j]|` over rows; zero for a shunt-free network.
    pub fn max_row_sum(&self) -> f64 {
        self.entries
            .row_iter()
            .map(|r| r.iter().sum::<Complex64>().norm())
            .fold(0.0, f64::max)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.size();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)]).norm());
            }
        }
        worst
    }
}

pub fn build_ybus(graph: &NetworkGraph, topo: &TopologyConfig) -> Result<AdmittanceMatrix> {
    graph.check_switches(topo)?;
    let report = check_connectivity(graph, topo);
    if !report.connected() {
        return Err(Error::Disconnected {
            topology: topo.id.clone(),
            unreachable: report.unreachable,
        });
    }
    Ok(AdmittanceMatrix::from_lines(graph.bus_count(), graph.closed_lines(topo)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityReport {
    /// Bus ids not reachable from the slack bus, ascending.
    pub unreachable: Vec<usize>,
}

impl ConnectivityReport {
    pub fn connected(&self) -> bool {
        self.unreachable.is_empty()
    }
}

/// Breadth-first reachability from the slack bus over closed lines. Unknown switch ids are ignored.
pub fn check_connectivity(graph: &NetworkGraph, topo: &TopologyConfig) -> ConnectivityReport {
    let n = graph.bus_count();
    let mut adjacency = vec![Vec::new(); n];
    for line in graph.closed_lines(topo) {
        adjacency[line.from_bus - 1].push(line.to_bus - 1);
        adjacency[line.to_bus - 1].push(line.from_bus - 1);
    }
    let mut visited = vec![false; n];
    let start = graph.slack_index();
    visited[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(k) = queue.pop_front() {
        for &m in &adjacency[k] {
            if !visited[m] {
                visited[m] = true;
                queue.push_back(m);
            }
        }
    }
    ConnectivityReport {
        unreachable: (0..n).filter(|&k| !visited[k]).map(|k| k + 1).collect(),
    }
}

/// A parsed network definition: the graph and its candidate topologies in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDefinition {
    pub graph: NetworkGraph,
    pub topologies: Vec<TopologyConfig>,
}

impl NetworkDefinition {
    pub fn topology(&self, id: &str) -> Result<&TopologyConfig> {
        self.topologies.iter().find(|t| t.id == id).ok_or_else(|| {
            Error::Configuration(format!(
                "unknown topology {id} (known: {})",
                self.topology_ids().join(", ")
            ))
        })
    }

    pub fn topology_ids(&self) -> Vec<String> {
        self.topologies.iter().map(|t| t.id.clone()).collect()
    }

    /// The bundled five-bus test feeder.
    pub fn fivebus() -> Self {
        parse_network(FIVEBUS_NET, "fivebus.net").expect("bundled fixture is valid")
    }
}

/// Reads a network file. The name `fivebus` resolves to the bundled fixture.
pub fn load_network(path: &Path) -> Result<NetworkDefinition> {
    if path.as_os_str() == "fivebus" {
        return Ok(NetworkDefinition::fivebus());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text, &path.display().to_string())
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Buses,
    Lines,
    Topologies,
}

/// Parses the `[buses]` / `[lines]` / `[topologies]` text format.
///
/// Blank lines and `#` comments are skipped. Syntax errors stop at the first offending
/// line; semantic problems are collected and reported together.
pub fn parse_network(text: &str, source_name: &str) -> Result<NetworkDefinition> {
    let perr = |line: usize, field: &str, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        field: field.to_string(),
        message,
    };

    let mut section = None;
    let mut buses = Vec::new();
    let mut lines = Vec::new();
    let mut topologies: Vec<TopologyConfig> = Vec::new();
    let mut saw_content = false;

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        saw_content = true;
        if content.starts_with('[') {
            section = Some(match content {
                "[buses]" => Section::Buses,
                "[lines]" => Section::Lines,
                "[topologies]" => Section::Topologies,
                other => return Err(perr(lineno, "section", format!("unknown section {other}"))),
            });
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        let expect = |n: usize, what: &str| {
            if fields.len() == n {
                Ok(())
            } else {
                Err(perr(
                    lineno,
                    what,
                    format!("expected {n} comma-separated fields, found {}", fields.len()),
                ))
            }
        };
        let number = |idx: usize, name: &str| -> Result<f64> {
            fields[idx]
                .parse::<f64>()
                .map_err(|_| perr(lineno, name, format!("not a number: {:?}", fields[idx])))
        };
        let bus_id = |idx: usize, name: &str| -> Result<usize> {
            fields[idx]
                .parse::<usize>()
                .map_err(|_| perr(lineno, name, format!("not a bus id: {:?}", fields[idx])))
        };
        match section {
            None => return Err(perr(lineno, "section", "data before any section header".into())),
            Some(Section::Buses) => {
                expect(3, "bus")?;
                let kind = match fields[1].to_ascii_lowercase().as_str() {
                    "slack" => BusKind::Slack,
                    "pq" => BusKind::Pq,
                    other => return Err(perr(lineno, "kind", format!("unknown bus kind {other:?}"))),
                };
                buses.push(Bus {
                    id: bus_id(0, "id")?,
                    kind,
                    base_voltage: number(2, "base_voltage")?,
                });
            }
            Some(Section::Lines) => {
                expect(6, "line")?;
                for (idx, name) in [(0, "id"), (5, "switch")] {
                    if fields[idx].is_empty() {
                        return Err(perr(lineno, name, "empty identifier".into()));
                    }
                }
                lines.push(Line {
                    id: fields[0].to_string(),
                    from_bus: bus_id(1, "from")?,
                    to_bus: bus_id(2, "to")?,
                    r: number(3, "r_pu")?,
                    x: number(4, "x_pu")?,
                    switch_id: fields[5].to_string(),
                });
            }
            Some(Section::Topologies) => {
                expect(2, "topology")?;
                if fields[0].is_empty() {
                    return Err(perr(lineno, "id", "empty identifier".into()));
                }
                let closed = fields[1]
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty());
                topologies.push(TopologyConfig::new(fields[0], closed));
            }
        }
    }
    if !saw_content {
        return Err(perr(1, "file", "empty network definition".into()));
    }

    let mut violations = validate_graph(&buses, &lines);
    let switches: HashSet<&str> = lines.iter().map(|l| l.switch_id.as_str()).collect();
    let mut topo_ids = HashMap::new();
    for topo in &topologies {
        if topo_ids.insert(topo.id.as_str(), ()).is_some() {
            violations.push(format!("duplicate topology id {}", topo.id));
        }
        for s in &topo.closed_switches {
            if !switches.contains(s.as_str()) {
                violations.push(format!("topology {}: unknown switch {s}", topo.id));
            }
        }
    }
    if topologies.is_empty() {
        violations.push("no candidate topologies defined".to_string());
    }
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(NetworkDefinition {
        graph: NetworkGraph { buses, lines },
        topologies,
    })
}
