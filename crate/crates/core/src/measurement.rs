//! Synthetic μPMU phasor and SCADA power measurements.
//!
//! Every device carries a systematic offset, drawn once when it is installed, and adds
//! independent zero-mean Gaussian noise to every reading. Random numbers come from
//! [`derive_rng_stream`], so a reading depends only on `(master_seed, index, device)` and
//! never on execution order.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::network::NetworkGraph;
use crate::powerflow::{InjectionSnapshot, PowerFlowSolution};

/// Nominal voltage that scales magnitude noise and offsets, p.u.
pub const NOMINAL_VOLTAGE: f64 = 1.0;

pub const REFERENCE_PMU_SIGMA: f64 = 0.00025;
pub const REFERENCE_PMU_ACCURACY: f64 = 0.00025;
pub const REFERENCE_SCADA_SIGMA: f64 = 0.025;
pub const REFERENCE_SCADA_ACCURACY: f64 = 0.0005;

const OFFSET_STREAM: u32 = 0x8000_0000;
const SCADA_DEVICE_BASE: u32 = 0x0001_0000;

pub type RngStream = ChaCha20Rng;

/// Independent ChaCha20 stream for one device in one trial.
///
/// `(master_seed, trial_index)` form the key and `device_id` selects the stream, so distinct
/// triples never share a stream.
pub fn derive_rng_stream(master_seed: u64, trial_index: u64, device_id: u32) -> RngStream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial_index.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(u64::from(device_id));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceKind {
    MicroPmu,
    Scada,
}

/// Unit in which the μPMU angle noise std `b` is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AngleUnit {
    #[default]
    Radians,
    Degrees,
}

impl AngleUnit {
    fn to_degrees(self, value: f64) -> f64 {
        match self {
            AngleUnit::Radians => value.to_degrees(),
            AngleUnit::Degrees => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceSpec {
    pub kind: DeviceKind,
    /// Relative noise standard deviation (fraction).
    pub sigma: f64,
    /// Bound of the uniform systematic offset (fraction).
    pub accuracy: f64,
    pub angle_unit: AngleUnit,
}

impl DeviceSpec {
    pub fn micro_pmu(sigma: f64, accuracy: f64) -> Self {
        Self {
            kind: DeviceKind::MicroPmu,
            sigma,
            accuracy,
            angle_unit: AngleUnit::Radians,
        }
    }

    pub fn scada(sigma: f64, accuracy: f64) -> Self {
        Self {
            kind: DeviceKind::Scada,
            sigma,
            accuracy,
            angle_unit: AngleUnit::Radians,
        }
    }

    pub fn noiseless(kind: DeviceKind) -> Self {
        Self {
            kind,
            sigma: 0.0,
            accuracy: 0.0,
            angle_unit: AngleUnit::Radians,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma", self.sigma), ("accuracy", self.accuracy)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Configuration(format!(
                    "{:?} {name} must be finite and non-negative, got {v}",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    fn expect_kind(&self, kind: DeviceKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Configuration(format!(
                "device spec is {:?}, expected {kind:?}",
                self.kind
            )))
        }
    }

    /// Std of the magnitude noise, p.u.
    pub fn magnitude_std(&self) -> f64 {
        self.sigma * NOMINAL_VOLTAGE
    }

    /// Std of the angle noise, degrees.
    pub fn angle_std_deg(&self) -> f64 {
        self.angle_unit.to_degrees(self.sigma)
    }
}

fn uniform_offset(bound: f64, rng: &mut impl Rng) -> f64 {
    bound * (2.0 * rng.random::<f64>() - 1.0)
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasorMeasurement {
    pub bus_id: usize,
    /// Voltage magnitude, p.u.
    pub vm: f64,
    /// Voltage angle, degrees.
    pub va_deg: f64,
    pub time_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScadaPowerMeasurement {
    pub bus_id: usize,
    pub p: f64,
    pub q: f64,
    pub time_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmuDevice {
    pub bus_id: usize,
    pub spec: DeviceSpec,
    pub vm_offset: f64,
    pub va_offset_deg: f64,
}

impl PmuDevice {
    /// A device without systematic offset.
    pub fn new(bus_id: usize, spec: DeviceSpec) -> Result<Self> {
        spec.validate()?;
        spec.expect_kind(DeviceKind::MicroPmu)?;
        Ok(Self {
            bus_id,
            spec,
            vm_offset: 0.0,
            va_offset_deg: 0.0,
        })
    }

    /// Draws the device's systematic offsets, uniform in `±accuracy` of the measurand range.
    pub fn install(bus_id: usize, spec: DeviceSpec, rng: &mut impl Rng) -> Result<Self> {
        let mut dev = Self::new(bus_id, spec)?;
        dev.vm_offset = uniform_offset(spec.accuracy * NOMINAL_VOLTAGE, rng);
        dev.va_offset_deg = spec.angle_unit.to_degrees(uniform_offset(spec.accuracy, rng));
        Ok(dev)
    }

    pub fn device_id(&self) -> u32 {
        self.bus_id as u32
    }

    pub fn measure(
        &self,
        truth: &PowerFlowSolution,
        time_index: usize,
        rng: &mut impl Rng,
    ) -> Result<PhasorMeasurement> {
        let k = self.bus_id.checked_sub(1).filter(|&k| k < truth.len()).ok_or_else(|| {
            Error::Consistency(format!("μPMU bus {} not in solution", self.bus_id))
        })?;
        let zv = gaussian(rng);
        let za = gaussian(rng);
        Ok(PhasorMeasurement {
            bus_id: self.bus_id,
            vm: truth.vm[k] + self.vm_offset + self.spec.magnitude_std() * zv,
            va_deg: truth.va_deg(k) + self.va_offset_deg + self.spec.angle_std_deg() * za,
            time_index,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScadaDevice {
    pub bus_id: usize,
    pub spec: DeviceSpec,
    pub p_offset: f64,
    pub q_offset: f64,
}

impl ScadaDevice {
    pub fn new(bus_id: usize, spec: DeviceSpec) -> Result<Self> {
        spec.validate()?;
        spec.expect_kind(DeviceKind::Scada)?;
        Ok(Self {
            bus_id,
            spec,
            p_offset: 0.0,
            q_offset: 0.0,
        })
    }

    pub fn install(bus_id: usize, spec: DeviceSpec, rng: &mut impl Rng) -> Result<Self> {
        let mut dev = Self::new(bus_id, spec)?;
        dev.p_offset = uniform_offset(spec.accuracy, rng);
        dev.q_offset = uniform_offset(spec.accuracy, rng);
        Ok(dev)
    }

    pub fn device_id(&self) -> u32 {
        SCADA_DEVICE_BASE + self.bus_id as u32
    }

    /// Multiplicative reading: `p * (1 + offset + N(0, sigma))`.
    pub fn measure(
        &self,
        truth: &InjectionSnapshot,
        time_index: usize,
        rng: &mut impl Rng,
    ) -> Result<ScadaPowerMeasurement> {
        let k = self.bus_id.checked_sub(1).filter(|&k| k < truth.len()).ok_or_else(|| {
            Error::Consistency(format!("SCADA bus {} not in snapshot", self.bus_id))
        })?;
        let s = truth.get(k);
        let zp = gaussian(rng);
        let zq = gaussian(rng);
        Ok(ScadaPowerMeasurement {
            bus_id: self.bus_id,
            p: s.re * (1.0 + self.p_offset + self.spec.sigma * zp),
            q: s.im * (1.0 + self.q_offset + self.spec.sigma * zq),
            time_index,
        })
    }
}

/// Readings of all devices at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub time_index: usize,
    pub phasors: Vec<PhasorMeasurement>,
    pub scada: Vec<ScadaPowerMeasurement>,
    pub rng_seed: u64,
}

impl MeasurementSet {
    /// `N_pmu × 2` matrix of `[magnitude p.u., angle degrees]`, rows in device order.
    pub fn measurement_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.phasors.len(), 2, |r, c| match c {
            0 => self.phasors[r].vm,
            _ => self.phasors[r].va_deg,
        })
    }

    pub fn measurement_count(&self) -> usize {
        2 * self.phasors.len()
    }

    /// Injection snapshot implied by the SCADA readings. Buses without SCADA are zero-injection.
    pub fn scada_injections(&self, graph: &NetworkGraph) -> Result<InjectionSnapshot> {
        let mut net = vec![Complex64::new(0.0, 0.0); graph.bus_count()];
        for m in &self.scada {
            let slot = m.bus_id.checked_sub(1).and_then(|k| net.get_mut(k)).ok_or_else(|| {
                Error::Consistency(format!("SCADA bus {} not in network", m.bus_id))
            })?;
            *slot = Complex64::new(m.p, m.q);
        }
        InjectionSnapshot::new(graph, &net)
    }
}

/// Installs devices for one measurement run. Offsets come from streams keyed by `run_index`.
pub fn install_pmus(
    buses: &[usize],
    spec: DeviceSpec,
    master_seed: u64,
    run_index: u64,
) -> Result<Vec<PmuDevice>> {
    buses
        .iter()
        .map(|&b| {
            let mut rng = derive_rng_stream(master_seed, run_index, OFFSET_STREAM | b as u32);
            PmuDevice::install(b, spec, &mut rng)
        })
        .collect()
}

pub fn install_scada(
    buses: &[usize],
    spec: DeviceSpec,
    master_seed: u64,
    run_index: u64,
) -> Result<Vec<ScadaDevice>> {
    buses
        .iter()
        .map(|&b| {
            let id = SCADA_DEVICE_BASE + b as u32;
            let mut rng = derive_rng_stream(master_seed, run_index, OFFSET_STREAM | id);
            ScadaDevice::install(b, spec, &mut rng)
        })
        .collect()
}

/// One reading from every μPMU, each drawing noise from its own stream for `trial_index`.
pub fn sample_pmu(
    truth: &PowerFlowSolution,
    devices: &[PmuDevice],
    time_index: usize,
    master_seed: u64,
    trial_index: u64,
) -> Result<Vec<PhasorMeasurement>> {
    devices
        .iter()
        .map(|d| {
            let mut rng = derive_rng_stream(master_seed, trial_index, d.device_id());
            d.measure(truth, time_index, &mut rng)
        })
        .collect()
}

pub fn sample_scada(
    truth: &InjectionSnapshot,
    devices: &[ScadaDevice],
    time_index: usize,
    master_seed: u64,
    trial_index: u64,
) -> Result<Vec<ScadaPowerMeasurement>> {
    devices
        .iter()
        .map(|d| {
            let mut rng = derive_rng_stream(master_seed, trial_index, d.device_id());
            d.measure(truth, time_index, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkDefinition;

    fn truth() -> PowerFlowSolution {
        PowerFlowSolution {
            vm: vec![1.0, 0.998, 0.997, 0.995, 0.996],
            va: vec![0.0, -0.0004, -0.0006, -0.0011, -0.0008],
            iterations: 3,
            max_mismatch: 0.0,
        }
    }

    #[test]
    fn noiseless_is_exact() {
        let sol = truth();
        let spec = DeviceSpec::noiseless(DeviceKind::MicroPmu);
        let devs = install_pmus(&[1, 2, 3, 4, 5], spec, 9, 0).unwrap();
        let m = sample_pmu(&sol, &devs, 7, 9, 3).unwrap();
        for (k, r) in m.iter().enumerate() {
            assert_eq!(r.vm, sol.vm[k]);
            assert_eq!(r.va_deg, sol.va_deg(k));
            assert_eq!(r.time_index, 7);
        }

        let def = NetworkDefinition::fivebus();
        let inj = InjectionSnapshot::new(
            &def.graph,
            &[0.0, -0.1, 0.0, 0.05, -0.2].map(|p| Complex64::new(p, p / 3.0)),
        )
        .unwrap();
        let scada = install_scada(&[2, 4, 5], DeviceSpec::noiseless(DeviceKind::Scada), 9, 0).unwrap();
        for r in sample_scada(&inj, &scada, 0, 9, 3).unwrap() {
            assert_eq!(Complex64::new(r.p, r.q), inj.get(r.bus_id - 1));
        }
    }

    #[test]
    fn reference_sigma_units() {
        let pmu = DeviceSpec::micro_pmu(REFERENCE_PMU_SIGMA, 0.0);
        assert_eq!(pmu.magnitude_std(), 2.5e-4);
        assert!((pmu.angle_std_deg() - 0.014_323_944_878_270_58).abs() < 1e-15);
        let deg = DeviceSpec {
            angle_unit: AngleUnit::Degrees,
            ..pmu
        };
        assert_eq!(deg.angle_std_deg(), 2.5e-4);
    }

    #[test]
    fn zero_injection_reads_zero() {
        let def = NetworkDefinition::fivebus();
        let inj = InjectionSnapshot::zero(&def.graph);
        let dev = ScadaDevice::install(3, DeviceSpec::scada(0.025, 0.0005), &mut derive_rng_stream(1, 1, 1))
            .unwrap();
        let r = dev.measure(&inj, 0, &mut derive_rng_stream(1, 2, 3)).unwrap();
        assert_eq!((r.p, r.q), (0.0, 0.0));
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let draw = |s, t, d| {
            let mut r = derive_rng_stream(s, t, d);
            (0..4).map(|_| r.random::<u64>()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5, 10, 2), draw(5, 10, 2));
        assert_ne!(draw(5, 10, 2), draw(5, 11, 2));
        assert_ne!(draw(5, 10, 2), draw(5, 10, 3));
        assert_ne!(draw(5, 10, 2), draw(6, 10, 2));
    }

    #[test]
    fn wrong_kind_and_bad_sigma_rejected() {
        assert!(PmuDevice::new(1, DeviceSpec::scada(0.1, 0.0)).is_err());
        assert!(ScadaDevice::new(1, DeviceSpec::micro_pmu(-0.1, 0.0)).is_err());
        assert!(PmuDevice::new(1, DeviceSpec::micro_pmu(0.1, f64::NAN)).is_err());
    }

    #[test]
    fn missing_bus_is_consistency_error() {
        let dev = PmuDevice::new(9, DeviceSpec::micro_pmu(0.0, 0.0)).unwrap();
        assert!(matches!(
            dev.measure(&truth(), 0, &mut derive_rng_stream(0, 0, 0)),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn measurement_matrix_shape() {
        let devs = install_pmus(&[1, 2, 3], DeviceSpec::micro_pmu(1e-3, 0.0), 1, 0).unwrap();
        let set = MeasurementSet {
            time_index: 0,
            phasors: sample_pmu(&truth(), &devs, 0, 1, 0).unwrap(),
            scada: Vec::new(),
            rng_seed: 1,
        };
        assert_eq!(set.measurement_matrix().shape(), (3, 2));
        assert_eq!(set.measurement_count(), 6);
    }
}
