//! AC power flow in polar coordinates.
//!
//! All non-slack buses are PQ buses. Complex power injected at bus `k` is
//! `S_k = v_k * conj(i_k)` with `i = Y v`. Generation is positive, load negative.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::{AdmittanceMatrix, NetworkGraph};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Net injections for one instant. `None` marks the slack bus, whose injection is solved for.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSnapshot {
    pub injections: Vec<Option<Complex64>>,
    pub slack_voltage: Complex64,
}

impl InjectionSnapshot {
    /// Builds a snapshot from per-bus net injections (index `k` is bus `k + 1`).
    /// The value given for the slack bus is ignored.
    pub fn new(graph: &NetworkGraph, net: &[Complex64]) -> Result<Self> {
        if net.len() != graph.bus_count() {
            return Err(Error::Consistency(format!(
                "{} injections given for {} buses",
                net.len(),
                graph.bus_count()
            )));
        }
        let slack = graph.slack_index();
        let injections: Vec<_> = net
            .iter()
            .enumerate()
            .map(|(k, &s)| (k != slack).then_some(s))
            .collect();
        if let Some(bad) = injections.iter().flatten().find(|s| !s.is_finite()) {
            return Err(Error::Consistency(format!("non-finite injection {bad}")));
        }
        Ok(Self {
            injections,
            slack_voltage: Complex64::new(graph.slack().base_voltage, 0.0),
        })
    }

    pub fn zero(graph: &NetworkGraph) -> Self {
        Self::new(graph, &vec![Complex64::new(0.0, 0.0); graph.bus_count()])
            .expect("zero injections are valid")
    }

    pub fn len(&self) -> usize {
        self.injections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.injections.is_empty()
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.injections.iter().position(Option::is_none)
    }

    /// Net injection at bus index `k`, zero for the slack bus.
    pub fn get(&self, k: usize) -> Complex64 {
        self.injections[k].unwrap_or_default()
    }

    fn pq_buses(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.injections[k].is_some()).collect()
    }

    fn check_against(&self, ybus: &AdmittanceMatrix) -> Result<usize> {
        if self.len() != ybus.size() {
            return Err(Error::Consistency(format!(
                "snapshot has {} buses, admittance matrix {}",
                self.len(),
                ybus.size()
            )));
        }
        let slacks = self.injections.iter().filter(|s| s.is_none()).count();
        if slacks != 1 {
            return Err(Error::Consistency(format!("expected one slack bus, found {slacks}")));
        }
        Ok(self.slack_index().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Voltage magnitudes, p.u.
    pub vm: Vec<f64>,
    /// Voltage angles, radians.
    pub va: Vec<f64>,
    pub iterations: usize,
    /// Largest |ΔP| or |ΔQ| at PQ buses when iteration stopped.
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn flat(n: usize) -> Self {
        Self {
            vm: vec![1.0; n],
            va: vec![0.0; n],
            iterations: 0,
            max_mismatch: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.vm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vm.is_empty()
    }

    pub fn va_deg(&self, k: usize) -> f64 {
        self.va[k].to_degrees()
    }

    pub fn voltage(&self, k: usize) -> Complex64 {
        Complex64::from_polar(self.vm[k], self.va[k])
    }

    pub fn voltages(&self) -> Vec<Complex64> {
        (0..self.len()).map(|k| self.voltage(k)).collect()
    }

    /// Complex power injected at every bus, slack included.
    pub fn bus_injections(&self, ybus: &AdmittanceMatrix) -> Vec<Complex64> {
        injected_power(ybus, &self.voltages())
    }

    fn from_voltages(v: &[Complex64], iterations: usize, max_mismatch: f64) -> Self {
        Self {
            vm: v.iter().map(|x| x.norm()).collect(),
            va: v.iter().map(|x| x.arg()).collect(),
            iterations,
            max_mismatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    /// Specified minus calculated active power, per bus (zero at the slack bus).
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
}

impl Mismatch {
    pub fn max_abs(&self) -> f64 {
        self.dp
            .iter()
            .chain(&self.dq)
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn injected_power(ybus: &AdmittanceMatrix, v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let current: Complex64 = (0..n).map(|k| ybus.get(i, k) * v[k]).sum();
            v[i] * current.conj()
        })
        .collect()
}

pub fn compute_mismatch(ybus: &AdmittanceMatrix, inj: &InjectionSnapshot, v: &[Complex64]) -> Mismatch {
    let calc = injected_power(ybus, v);
    let (dp, dq) = calc
        .iter()
        .zip(&inj.injections)
        .map(|(s, spec)| match spec {
            Some(target) => (target.re - s.re, target.im - s.im),
            None => (0.0, 0.0),
        })
        .unzip();
    Mismatch { dp, dq }
}

/// Newton-Raphson from a flat start. Unknowns are angle and magnitude at each PQ bus.
pub fn solve_newton_raphson(
    ybus: &AdmittanceMatrix,
    inj: &InjectionSnapshot,
    tol: f64,
    max_iter: usize,
) -> Result<PowerFlowSolution> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Configuration(format!("tolerance must be positive, got {tol}")));
    }
    let slack = inj.check_against(ybus)?;
    let n = ybus.size();
    let pq = inj.pq_buses();
    let npq = pq.len();

    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    vm[slack] = inj.slack_voltage.norm();
    va[slack] = inj.slack_voltage.arg();
    let polar = |vm: &[f64], va: &[f64]| -> Vec<Complex64> {
        vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
    };

    let mut iteration = 0;
    loop {
        let v = polar(&vm, &va);
        let mis = compute_mismatch(ybus, inj, &v);
        let worst = mis.max_abs();
        if !worst.is_finite() {
            return Err(Error::Diverged {
                iterations: iteration,
                mismatch: worst,
            });
        }
        if worst < tol {
            return Ok(PowerFlowSolution {
                vm,
                va,
                iterations: iteration,
                max_mismatch: worst,
            });
        }
        if iteration == max_iter {
            return Err(Error::Diverged {
                iterations: iteration,
                mismatch: worst,
            });
        }
        iteration += 1;

        let current: Vec<Complex64> = (0..n)
            .map(|i| (0..n).map(|k| ybus.get(i, k) * v[k]).sum())
            .collect();
        let mut jac = DMatrix::<f64>::zeros(2 * npq, 2 * npq);
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pq.iter().enumerate() {
                let unit = v[k] / vm[k];
                let mut ds_dva = -J * v[i] * (ybus.get(i, k) * v[k]).conj();
                let mut ds_dvm = v[i] * (ybus.get(i, k) * unit).conj();
                if i == k {
                    ds_dva += J * v[i] * current[i].conj();
                    ds_dvm += current[i].conj() * unit;
                }
                jac[(r, c)] = ds_dva.re;
                jac[(r, npq + c)] = ds_dvm.re;
                jac[(npq + r, c)] = ds_dva.im;
                jac[(npq + r, npq + c)] = ds_dvm.im;
            }
        }
        let rhs = DVector::from_iterator(
            2 * npq,
            pq.iter().map(|&i| mis.dp[i]).chain(pq.iter().map(|&i| mis.dq[i])),
        );
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularJacobian { iteration })?;
        for (r, &i) in pq.iter().enumerate() {
            va[i] += step[r];
            vm[i] += step[npq + r];
        }
    }
}

/// Gauss-Seidel successive substitution on `v_i = (conj(S_i / v_i) - Σ_{k≠i} Y_ik v_k) / Y_ii`.
///
/// Independent of the Newton path; used to validate it. Iterates until the power mismatch
/// is a hundredth of `tol`, which pins voltages well below the Newton tolerance.
pub fn solve_fixed_point_oracle(
    ybus: &AdmittanceMatrix,
    inj: &InjectionSnapshot,
    tol: f64,
) -> Result<PowerFlowSolution> {
    const MAX_SWEEPS: usize = 200_000;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Configuration(format!("tolerance must be positive, got {tol}")));
    }
    let slack = inj.check_against(ybus)?;
    let n = ybus.size();
    let pq = inj.pq_buses();
    if let Some(&k) = pq.iter().find(|&&k| ybus.get(k, k).norm() == 0.0) {
        return Err(Error::Consistency(format!("bus {} has no closed lines", k + 1)));
    }
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    v[slack] = inj.slack_voltage;

    let target = tol * 1e-2;
    let mut worst = f64::INFINITY;
    for sweep in 1..=MAX_SWEEPS {
        for &i in &pq {
            let s = inj.get(i);
            let coupled: Complex64 = (0..n).filter(|&k| k != i).map(|k| ybus.get(i, k) * v[k]).sum();
            v[i] = ((s / v[i]).conj() - coupled) / ybus.get(i, i);
        }
        if sweep % 8 == 0 {
            worst = compute_mismatch(ybus, inj, &v).max_abs();
            if !worst.is_finite() {
                break;
            }
            if worst < target {
                let mut sol = PowerFlowSolution::from_voltages(&v, sweep, worst);
                sol.vm[slack] = inj.slack_voltage.norm();
                sol.va[slack] = inj.slack_voltage.arg();
                return Ok(sol);
            }
        }
    }
    Err(Error::Diverged {
        iterations: MAX_SWEEPS,
        mismatch: worst,
    })
}
