//! Daily load and PV profiles at 15-minute resolution.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusKind, NetworkGraph};
use crate::powerflow::InjectionSnapshot;

pub const STEPS_PER_DAY: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadClass {
    Residential,
    Industrial,
    Pv,
}

/// One consumer or generator at a bus. Values are consumption for loads and production for
/// PV, so both are non-negative; [`LoadProfile::net_injection`] applies the sign.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub bus_id: usize,
    pub class: LoadClass,
    /// `(p, q)` in p.u. for each of the 96 steps.
    pub values: Vec<(f64, f64)>,
}

impl LoadProfile {
    pub fn net_injection(&self, t: usize) -> Complex64 {
        let (p, q) = self.values[t];
        match self.class {
            LoadClass::Pv => Complex64::new(p, q),
            LoadClass::Residential | LoadClass::Industrial => Complex64::new(-p, -q),
        }
    }
}

fn hour(t: usize) -> f64 {
    t as f64 * 24.0 / STEPS_PER_DAY as f64
}

/// Gaussian bump in time of day that wraps around midnight.
fn bump(h: f64, center: f64, width: f64) -> f64 {
    let d = (h - center).abs();
    let d = d.min(24.0 - d);
    (-0.5 * (d / width).powi(2)).exp()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Household shape: night base, morning and (larger) evening peaks, small midday bump.
pub fn residential_shape(t: usize) -> f64 {
    let h = hour(t);
    0.5 + 0.5 * bump(h, 7.5, 1.2) + 0.8 * bump(h, 19.5, 1.8) + 0.15 * bump(h, 12.5, 1.5)
}

/// Commercial/industrial shape: 30 % base with a plateau from about 07:00 to 17:30.
pub fn industrial_shape(t: usize) -> f64 {
    let h = hour(t);
    0.3 + 0.7 * logistic(2.0 * (h - 7.0)) * logistic(-2.0 * (h - 17.5))
}

/// Clear-sky PV bell, zero outside 06:30–19:00, peak 1 at 12:45.
pub fn pv_shape(t: usize) -> f64 {
    let x = (hour(t) - 12.75) / 6.25;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (x * PI / 2.0).cos().powi(2)
    }
}

fn sampled(bus_id: usize, class: LoadClass, scale: f64, shape: fn(usize) -> f64) -> LoadProfile {
    LoadProfile {
        bus_id,
        class,
        // active-power profiles; loads and PV run at unity power factor
        values: (0..STEPS_PER_DAY).map(|t| (scale * shape(t), 0.0)).collect(),
    }
}

/// Synthetic weekday profiles for the five-bus feeder: households at buses 2 and 4 (the
/// latter a larger multi-dwelling load), an industrial load at bus 5, rooftop PV at all three.
/// Peak line flows stay below 0.3 p.u. in every candidate topology. Buses missing from
/// `graph` are skipped.
pub fn generate_default_profiles(graph: &NetworkGraph) -> Vec<LoadProfile> {
    let present = |b: usize| graph.buses().iter().any(|x| x.id == b && x.kind == BusKind::Pq);
    let mut out = Vec::new();
    for (bus, class, scale, shape) in [
        (2, LoadClass::Residential, 0.04, residential_shape as fn(usize) -> f64),
        (2, LoadClass::Pv, 0.012, pv_shape),
        (4, LoadClass::Residential, 0.12, residential_shape),
        (4, LoadClass::Pv, 0.036, pv_shape),
        (5, LoadClass::Industrial, 0.15, industrial_shape),
        (5, LoadClass::Pv, 0.032, pv_shape),
    ] {
        if present(bus) {
            out.push(sampled(bus, class, scale, shape));
        }
    }
    out
}

/// Net injection at every bus for each step of the day (`net[t][bus_id - 1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSeries {
    pub net: Vec<Vec<Complex64>>,
}

impl InjectionSeries {
    pub fn from_profiles(graph: &NetworkGraph, profiles: &[LoadProfile]) -> Result<Self> {
        let n = graph.bus_count();
        let mut net = vec![vec![Complex64::new(0.0, 0.0); n]; STEPS_PER_DAY];
        for p in profiles {
            if p.values.len() != STEPS_PER_DAY {
                return Err(Error::Configuration(format!(
                    "profile at bus {} has {} values, expected {STEPS_PER_DAY}",
                    p.bus_id,
                    p.values.len()
                )));
            }
            let k = bus_slot(graph, p.bus_id)?;
            for (t, row) in net.iter_mut().enumerate() {
                row[k] += p.net_injection(t);
            }
        }
        Ok(Self { net })
    }

    pub fn default_for(graph: &NetworkGraph) -> Self {
        Self::from_profiles(graph, &generate_default_profiles(graph)).expect("default profiles fit the graph")
    }

    pub fn zero(graph: &NetworkGraph) -> Self {
        Self::from_profiles(graph, &[]).expect("empty profile set")
    }

    pub fn snapshot(&self, graph: &NetworkGraph, t: usize) -> Result<InjectionSnapshot> {
        let row = self.net.get(t).ok_or_else(|| {
            Error::Configuration(format!("time index {t} outside 0..{STEPS_PER_DAY}"))
        })?;
        InjectionSnapshot::new(graph, row)
    }

    pub fn snapshots(&self, graph: &NetworkGraph) -> Result<Vec<InjectionSnapshot>> {
        (0..self.net.len()).map(|t| self.snapshot(graph, t)).collect()
    }

    /// PQ buses with a nonzero injection at some step (the buses that carry SCADA metering).
    pub fn metered_buses(&self) -> Vec<usize> {
        let n = self.net.first().map_or(0, Vec::len);
        (0..n)
            .filter(|&k| self.net.iter().any(|row| row[k] != Complex64::new(0.0, 0.0)))
            .map(|k| k + 1)
            .collect()
    }

    /// Reads `time_index,bus_id,p_pu,q_pu` rows; each listed bus needs all 96 steps.
    pub fn read_csv(graph: &NetworkGraph, reader: impl Read, source_name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut seen: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
        let mut net = vec![vec![Complex64::new(0.0, 0.0); graph.bus_count()]; STEPS_PER_DAY];
        for (k, rec) in rdr.deserialize::<ProfileRow>().enumerate() {
            let line = k + 2;
            let row = rec.map_err(|e| Error::Parse {
                source_name: source_name.to_string(),
                line,
                field: "row".into(),
                message: e.to_string(),
            })?;
            let perr = |field: &str, message: String| Error::Parse {
                source_name: source_name.to_string(),
                line,
                field: field.to_string(),
                message,
            };
            if row.time_index >= STEPS_PER_DAY {
                return Err(perr("time_index", format!("{} outside 0..{STEPS_PER_DAY}", row.time_index)));
            }
            if !(row.p_pu.is_finite() && row.q_pu.is_finite()) {
                return Err(perr("p_pu", "non-finite value".into()));
            }
            let slot = bus_slot(graph, row.bus_id).map_err(|e| perr("bus_id", e.to_string()))?;
            let flags = seen.entry(row.bus_id).or_insert_with(|| vec![false; STEPS_PER_DAY]);
            if std::mem::replace(&mut flags[row.time_index], true) {
                return Err(perr("time_index", format!("duplicate step {} for bus {}", row.time_index, row.bus_id)));
            }
            net[row.time_index][slot] = Complex64::new(row.p_pu, row.q_pu);
        }
        let incomplete: Vec<String> = seen
            .iter()
            .filter(|(_, f)| !f.iter().all(|&x| x))
            .map(|(b, f)| format!("bus {b} has {} of {STEPS_PER_DAY} steps", f.iter().filter(|&&x| x).count()))
            .collect();
        if !incomplete.is_empty() {
            return Err(Error::Validation(incomplete));
        }
        Ok(Self { net })
    }

    pub fn load_csv(graph: &NetworkGraph, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(graph, file, &path.display().to_string())
    }

    /// Writes every metered bus, 96 rows each.
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for bus in self.metered_buses() {
            for (t, row) in self.net.iter().enumerate() {
                w.serialize(ProfileRow {
                    time_index: t,
                    bus_id: bus,
                    p_pu: row[bus - 1].re,
                    q_pu: row[bus - 1].im,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    time_index: usize,
    bus_id: usize,
    p_pu: f64,
    q_pu: f64,
}

fn bus_slot(graph: &NetworkGraph, bus_id: usize) -> Result<usize> {
    match graph.buses().iter().find(|b| b.id == bus_id) {
        Some(b) if b.kind == BusKind::Slack => Err(Error::Configuration(format!(
            "bus {bus_id} is the slack bus and takes no injection profile"
        ))),
        Some(b) => Ok(b.id - 1),
        None => Err(Error::Configuration(format!("bus {bus_id} not in network"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkDefinition;

    #[test]
    fn shapes() {
        assert!(residential_shape(0) < residential_shape(76));
        assert_eq!(pv_shape(0), 0.0);
        assert_eq!(pv_shape(95), 0.0);
        assert!((pv_shape(51) - 1.0).abs() < 1e-12);
        let daily: f64 = (0..STEPS_PER_DAY).map(residential_shape).sum();
        assert!(daily > 0.0);
        assert!(industrial_shape(48) > 0.95 && industrial_shape(4) < 0.31);
    }

    #[test]
    fn default_profiles_layout() {
        let def = NetworkDefinition::fivebus();
        let profiles = generate_default_profiles(&def.graph);
        assert_eq!(profiles.len(), 6);
        assert!(profiles.iter().all(|p| p.values.len() == STEPS_PER_DAY));
        let pv = profiles.iter().find(|p| p.class == LoadClass::Pv).unwrap();
        assert_eq!(pv.values[0], (0.0, 0.0));
        let series = InjectionSeries::default_for(&def.graph);
        assert_eq!(series.metered_buses(), [2, 4, 5]);
        // PV offsets part of the bus 2 load at noon
        let noon = series.net[51][1].re;
        assert!((noon - (0.012 - 0.04 * residential_shape(51))).abs() < 1e-15);
        assert!(noon > -0.04 * residential_shape(51));
        assert!(series.net[0].iter().all(|s| s.re <= 0.0));
    }

    #[test]
    fn csv_roundtrip() {
        let def = NetworkDefinition::fivebus();
        let series = InjectionSeries::default_for(&def.graph);
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time_index,bus_id,p_pu,q_pu\n"));
        assert_eq!(text.lines().count(), 1 + 3 * STEPS_PER_DAY);
        let back = InjectionSeries::read_csv(&def.graph, text.as_bytes(), "mem").unwrap();
        assert_eq!(back, series);
    }

    #[test]
    fn csv_errors() {
        let def = NetworkDefinition::fivebus();
        let partial = "time_index,bus_id,p_pu,q_pu\n0,2,-0.1,0\n";
        assert!(matches!(
            InjectionSeries::read_csv(&def.graph, partial.as_bytes(), "p"),
            Err(Error::Validation(_))
        ));
        let slack = "time_index,bus_id,p_pu,q_pu\n0,1,-0.1,0\n";
        assert!(matches!(
            InjectionSeries::read_csv(&def.graph, slack.as_bytes(), "p"),
            Err(Error::Parse { line: 2, .. })
        ));
        let late = "time_index,bus_id,p_pu,q_pu\n96,2,-0.1,0\n";
        assert!(InjectionSeries::read_csv(&def.graph, late.as_bytes(), "p").is_err());
        let dup = "time_index,bus_id,p_pu,q_pu\n3,2,-0.1,0\n3,2,-0.1,0\n";
        assert!(matches!(
            InjectionSeries::read_csv(&def.graph, dup.as_bytes(), "p"),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
