//! Two-point local perturbation for values in `[-1, 1]`.
//!
//! Each user reports `+B` or `-B` with `B = (e^ε + 1) / (e^ε − 1)`, choosing
//! `+B` with probability `(x (e^ε − 1) + e^ε + 1) / (2 (e^ε + 1))`. The report
//! is unbiased for `x`, so the mean of reports estimates the population mean.
//!
//! ```
//! use rand::SeedableRng;
//! use trimgame::privacy::{ldp_perturb, LdpConfig};
//!
//! let cfg = LdpConfig::new(3f64.ln()).unwrap();
//! assert!((cfg.bound() - 2.0).abs() < 1e-12);
//! assert!((cfg.prob_plus(1.0).unwrap() - 0.75).abs() < 1e-12);
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let r = ldp_perturb(0.3, &cfg, &mut rng).unwrap();
//! assert_eq!(r.value.abs(), cfg.bound());
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdpConfig {
    pub epsilon: f64,
}

impl LdpConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::domain(format!(
                "privacy budget {epsilon} must be positive and finite"
            )));
        }
        Ok(Self { epsilon })
    }

    /// Report magnitude `B`.
    pub fn bound(&self) -> f64 {
        let e = self.epsilon.exp();
        (e + 1.0) / (e - 1.0)
    }

    pub fn prob_plus(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        let e = self.epsilon.exp();
        Ok((x * (e - 1.0) + e + 1.0) / (2.0 * (e + 1.0)))
    }

    /// Variance of a single report for input `x`: `B² − x²`.
    pub fn report_variance(&self, x: f64) -> f64 {
        let b = self.bound();
        b * b - x * x
    }
}

fn check_domain(x: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::domain(format!("input {x} outside [-1, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub value: f64,
}

pub fn ldp_perturb<R: Rng + ?Sized>(x: f64, cfg: &LdpConfig, rng: &mut R) -> Result<Report> {
    let p = cfg.prob_plus(x)?;
    let b = cfg.bound();
    let value = if rng.random::<f64>() < p { b } else { -b };
    Ok(Report { value })
}

pub fn ldp_mean(reports: &[Report]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::domain("mean of no reports"));
    }
    Ok(reports.iter().map(|r| r.value).sum::<f64>() / reports.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManipulationKind {
    /// Honestly perturb a counterfeit input.
    InputManipulation,
    /// Skip perturbation and report the extreme on the target's side.
    OutputManipulation,
}

pub fn craft_attack<R: Rng + ?Sized>(
    kind: ManipulationKind,
    target: f64,
    n: usize,
    cfg: &LdpConfig,
    rng: &mut R,
) -> Result<Vec<Report>> {
    match kind {
        ManipulationKind::InputManipulation => {
            check_domain(target)?;
            (0..n).map(|_| ldp_perturb(target, cfg, rng)).collect()
        }
        ManipulationKind::OutputManipulation => {
            if !target.is_finite() {
                return Err(Error::domain(format!("target {target} is not finite")));
            }
            let value = if target < 0.0 {
                -cfg.bound()
            } else {
                cfg.bound()
            };
            Ok(vec![Report { value }; n])
        }
    }
}

pub fn mse(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::domain("mean squared error of no estimates"));
    }
    Ok(estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / estimates.len() as f64)
}

/// Honest reports followed by poison reports, as an engine batch.
pub fn reports_to_batch(honest: &[Report], poison: &[Report]) -> Batch {
    let mut b = Batch::benign(honest.iter().map(|r| r.value).collect());
    for r in poison {
        b.push(r.value, true);
    }
    b
}
