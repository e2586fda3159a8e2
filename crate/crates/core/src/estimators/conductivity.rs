use serde::{Deserialize, Serialize};

use super::stats::{linear_fit, LinearFit};
use super::EstimatorError;
use crate::chain::{EventSink, JumpEvent, ModelParams};
use crate::scalar::Real;

/// Cumulative signed flux per bond (right-to-left positive), counting only
/// events at or after `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxLedger {
    pub bonds: Vec<f64>,
    pub start: f64,
    pub end: f64,
    pub events: u64,
}

impl FluxLedger {
    /// Ledger for a chain of `n` sites (`n + 1` bonds).
    pub fn new(n: usize, start: f64) -> Self {
        Self { bonds: vec![0.0; n + 1], start, end: start, events: 0 }
    }

    pub fn add(&mut self, bond: usize, time: f64, flux: f64) {
        if time >= self.start {
            self.bonds[bond] += flux;
            self.events += 1;
        }
    }

    /// Marks the end of the observation window.
    pub fn close(&mut self, end: f64) {
        self.end = end.max(self.start);
    }

    pub fn elapsed(&self) -> f64 {
        self.end - self.start
    }

    /// Mean flux per unit time on each bond.
    pub fn bond_rates(&self) -> Vec<f64> {
        let t = self.elapsed();
        self.bonds.iter().map(|j| j / t).collect()
    }
}

impl<S: Real> EventSink<S> for FluxLedger {
    fn record(&mut self, event: &JumpEvent<S>, _energies: &[S]) {
        self.add(event.bond, event.time.to_f64_lossy(), event.flux.to_f64_lossy());
    }
}

/// `kappa = sum_k J_k / (T (T_R - T_L) (N + 1))` over all bonds.
pub fn thermal_conductivity(ledger: &FluxLedger, params: &ModelParams<f64>) -> Result<f64, EstimatorError> {
    let gap = params.t_right - params.t_left;
    if gap == 0.0 {
        return Err(EstimatorError::Undefined("conductivity needs T_L != T_R".into()));
    }
    if ledger.bonds.len() != params.n + 1 {
        return Err(EstimatorError::InvalidInput(format!("ledger has {} bonds, chain has {}", ledger.bonds.len(), params.n + 1)));
    }
    let t = ledger.elapsed();
    if !(t > 0.0) {
        return Err(EstimatorError::Undefined("empty observation window".into()));
    }
    Ok(ledger.bonds.iter().sum::<f64>() / (t * gap * (params.n + 1) as f64))
}

/// Per-bond mean flux rates across independent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondFluxSummary {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Largest `|mean_i - mean_j| / sqrt(se_i^2 + se_j^2)` over bond pairs.
    pub max_pairwise_z: f64,
}

pub fn bond_flux_summary(ledgers: &[FluxLedger]) -> Result<BondFluxSummary, EstimatorError> {
    if ledgers.len() < 2 {
        return Err(EstimatorError::InsufficientSamples { needed: 2, found: ledgers.len() });
    }
    let bonds = ledgers[0].bonds.len();
    if ledgers.iter().any(|l| l.bonds.len() != bonds) {
        return Err(EstimatorError::InvalidInput("ledgers differ in bond count".into()));
    }
    let rates: Vec<Vec<f64>> = ledgers.iter().map(FluxLedger::bond_rates).collect();
    let mut mean = Vec::with_capacity(bonds);
    let mut stderr = Vec::with_capacity(bonds);
    for b in 0..bonds {
        let col: Vec<f64> = rates.iter().map(|r| r[b]).collect();
        let (m, s) = super::stats::mean_stderr(&col);
        mean.push(m);
        stderr.push(s);
    }
    let mut max_pairwise_z: f64 = 0.0;
    for i in 0..bonds {
        for j in i + 1..bonds {
            let se = (stderr[i].powi(2) + stderr[j].powi(2)).sqrt();
            if se > 0.0 {
                max_pairwise_z = max_pairwise_z.max((mean[i] - mean[j]).abs() / se);
            }
        }
    }
    Ok(BondFluxSummary { mean, stderr, max_pairwise_z })
}

/// Fits `kappa(N) = a / N + b`; the returned slope is `a`, the intercept `b`.
pub fn fit_inverse_length(ns: &[usize], kappas: &[f64]) -> Result<LinearFit, EstimatorError> {
    let inv: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
    linear_fit(&inv, kappas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_and_kappa() {
        let params = ModelParams::new(3, 2, 1.0, 2.0).unwrap();
        let mut l = FluxLedger::new(3, 10.0);
        l.add(0, 5.0, 100.0);
        for b in 0..4 {
            l.add(b, 12.0, 2.0);
        }
        l.close(20.0);
        assert_eq!(l.events, 4);
        assert_eq!(l.bond_rates(), vec![0.2; 4]);
        assert!((thermal_conductivity(&l, &params).unwrap() - 0.2).abs() < 1e-15);
        let swapped = ModelParams::new(3, 2, 2.0, 1.0).unwrap();
        let mut neg = l.clone();
        neg.bonds.iter_mut().for_each(|j| *j = -*j);
        assert_eq!(thermal_conductivity(&neg, &swapped).unwrap(), thermal_conductivity(&l, &params).unwrap());
        let equal = ModelParams::new(3, 2, 1.0, 1.0).unwrap();
        assert!(matches!(thermal_conductivity(&l, &equal), Err(EstimatorError::Undefined(_))));
    }

    #[test]
    fn inverse_length_fit() {
        let ns = [4, 8, 16, 32];
        let k: Vec<f64> = ns.iter().map(|&n| 0.0752 / n as f64 + 4e-5).collect();
        let f = fit_inverse_length(&ns, &k).unwrap();
        assert!((f.slope - 0.0752).abs() < 1e-12 && (f.intercept - 4e-5).abs() < 1e-12);
    }

    #[test]
    fn bond_summary() {
        let mut ls = Vec::new();
        for r in 0..4 {
            let mut l = FluxLedger::new(1, 0.0);
            l.add(0, 1.0, 1.0 + 0.1 * r as f64);
            l.add(1, 1.0, 1.0 - 0.1 * r as f64);
            l.close(1.0);
            ls.push(l);
        }
        let s = bond_flux_summary(&ls).unwrap();
        assert!((s.mean[0] - 1.15).abs() < 1e-12 && (s.mean[1] - 0.85).abs() < 1e-12);
        assert!(s.max_pairwise_z > 0.0);
    }
}
