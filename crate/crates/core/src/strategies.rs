//! Defender threshold policies and attacker injection policies.
//!
//! Positions are carried in percentage points (pp) of the public board's
//! benign reference, so `95.0` is the 95th percentile and an offset of
//! `-3.0` moves three points down the scale.
//!
//! The elastic pair follows two coupled affine recurrences. Writing
//! `t = T - Tth` and `a = A - Tth`,
//!
//! ```text
//! t(i+1) = k * (a(i) - 1)
//! a(i+1) = -3 + k * t(i)
//! ```
//!
//! whose unique fixed point is `t* = -4k / (1 - k^2)`,
//! `a* = -(3 + k^2) / (1 - k^2)`. Two applications of the linear part give
//! `k^2` times the identity, so deviations shrink by exactly `k^2` every two
//! rounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::PercentilePoint;
use crate::error::{Error, Result};

/// Sign used when comparing round quality against the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerSign {
    /// Trigger when `qe < baseline - red`: redundancy makes triggering harder.
    #[default]
    Minus,
    /// Trigger when `qe < baseline + red`, the literal pseudo-code reading.
    Plus,
}

/// Reference quality the Tit-for-tat trigger compares against.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum QualityBaseline {
    /// Quality of a clean reference batch drawn before round 1.
    #[default]
    Measured,
    /// A fixed quality level.
    Fixed(f64),
}

fn default_soft_offset() -> f64 {
    1.0
}

fn default_hard_offset() -> f64 {
    -3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TitfortatParams {
    pub tth_pp: f64,
    #[serde(default)]
    pub red: f64,
    #[serde(default = "default_soft_offset")]
    pub soft_offset_pp: f64,
    #[serde(default = "default_hard_offset")]
    pub hard_offset_pp: f64,
    #[serde(default)]
    pub sign: TriggerSign,
    #[serde(default)]
    pub baseline: QualityBaseline,
    /// Never fire the trigger; the soft threshold is kept throughout.
    #[serde(default)]
    pub no_trigger: bool,
}

impl TitfortatParams {
    pub fn new(tth_pp: f64, red: f64) -> Self {
        Self {
            tth_pp,
            red,
            soft_offset_pp: default_soft_offset(),
            hard_offset_pp: default_hard_offset(),
            sign: TriggerSign::Minus,
            baseline: QualityBaseline::Measured,
            no_trigger: false,
        }
    }

    pub fn soft_pp(&self) -> f64 {
        self.tth_pp + self.soft_offset_pp
    }

    pub fn hard_pp(&self) -> f64 {
        self.tth_pp + self.hard_offset_pp
    }

    pub fn fires(&self, qe: f64, baseline: f64) -> bool {
        match self.sign {
            TriggerSign::Minus => qe < baseline - self.red,
            TriggerSign::Plus => qe < baseline + self.red,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum DefenderScheme {
    /// Accepts everything.
    Ostrich,
    /// Static threshold.
    Baseline {
        threshold_pp: f64,
    },
    Titfortat(TitfortatParams),
    Elastic {
        tth_pp: f64,
        k: f64,
    },
}

impl DefenderScheme {
    pub fn id(&self) -> &'static str {
        match self {
            DefenderScheme::Ostrich => "ostrich",
            DefenderScheme::Baseline { .. } => "baseline",
            DefenderScheme::Titfortat(_) => "titfortat",
            DefenderScheme::Elastic { .. } => "elastic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_tth = |tth: f64| {
            if tth > 0.0 && tth < 100.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("Tth = {tth}pp outside (0, 100)")))
            }
        };
        match *self {
            DefenderScheme::Ostrich => Ok(()),
            DefenderScheme::Baseline { threshold_pp } => check_tth(threshold_pp),
            DefenderScheme::Titfortat(p) => {
                check_tth(p.tth_pp)?;
                if p.red < 0.0 {
                    return Err(Error::domain(format!("redundancy {} < 0", p.red)));
                }
                Ok(())
            }
            DefenderScheme::Elastic { tth_pp, k } => {
                check_tth(tth_pp)?;
                check_k(k)
            }
        }
    }
}

fn check_k(k: f64) -> Result<()> {
    if (0.0..1.0).contains(&k) {
        Ok(())
    } else {
        Err(Error::domain(format!("k = {k} outside [0, 1)")))
    }
}

fn default_ideal_offset() -> f64 {
    -1.0
}

fn default_mixed_hi() -> f64 {
    99.0
}

fn default_mixed_lo() -> f64 {
    90.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum AttackerScheme {
    /// Every poison value at one percentile.
    StaticAttacker { pp: f64 },
    /// Each poison value at an independent uniform percentile in `[lo, hi]`.
    RandomRange { lo_pp: f64, hi_pp: f64 },
    /// Reads the collector's current threshold and sits just below it.
    IdealStatic {
        #[serde(default = "default_ideal_offset")]
        offset_pp: f64,
    },
    /// Per round: `hi_pp` with probability `p`, otherwise `lo_pp`.
    MixedEvasive {
        p: f64,
        #[serde(default = "default_mixed_hi")]
        hi_pp: f64,
        #[serde(default = "default_mixed_lo")]
        lo_pp: f64,
    },
    /// Responds to the collector's previous threshold.
    ElasticAdversary { tth_pp: f64, k: f64 },
}

impl AttackerScheme {
    pub fn id(&self) -> &'static str {
        match self {
            AttackerScheme::StaticAttacker { .. } => "static_attacker",
            AttackerScheme::RandomRange { .. } => "random_range",
            AttackerScheme::IdealStatic { .. } => "ideal_static",
            AttackerScheme::MixedEvasive { .. } => "mixed_evasive",
            AttackerScheme::ElasticAdversary { .. } => "elastic_adversary",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_pp = |pp: f64| {
            if pp > 0.0 && pp <= 100.0 {
                Ok(())
            } else {
                Err(Error::domain(format!(
                    "injection percentile {pp}pp outside (0, 100]"
                )))
            }
        };
        match *self {
            AttackerScheme::StaticAttacker { pp } => check_pp(pp),
            AttackerScheme::RandomRange { lo_pp, hi_pp } => {
                check_pp(lo_pp)?;
                check_pp(hi_pp)?;
                if lo_pp > hi_pp {
                    return Err(Error::domain("random_range needs lo_pp <= hi_pp"));
                }
                Ok(())
            }
            AttackerScheme::IdealStatic { .. } => Ok(()),
            AttackerScheme::MixedEvasive { p, hi_pp, lo_pp } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::domain(format!(
                        "mixing probability {p} outside [0, 1]"
                    )));
                }
                check_pp(hi_pp)?;
                check_pp(lo_pp)
            }
            AttackerScheme::ElasticAdversary { tth_pp, k } => {
                check_pp(tth_pp)?;
                check_k(k)
            }
        }
    }
}

/// Absorbing trigger of the Tit-for-tat defender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TriggerState {
    trigger_round: Option<usize>,
}

impl TriggerState {
    pub fn untriggered() -> Self {
        Self::default()
    }

    pub fn triggered(&self) -> bool {
        self.trigger_round.is_some()
    }

    pub fn trigger_round(&self) -> Option<usize> {
        self.trigger_round
    }
}

/// One Tit-for-tat decision after observing round `round`'s quality.
///
/// Returns the threshold to use from now on and the updated trigger.
pub fn titfortat_step(
    state: TriggerState,
    round: usize,
    qe_current: f64,
    qe_baseline: f64,
    params: &TitfortatParams,
) -> (PercentilePoint, TriggerState) {
    let next = if state.triggered() || params.no_trigger {
        state
    } else if params.fires(qe_current, qe_baseline) {
        TriggerState {
            trigger_round: Some(round),
        }
    } else {
        state
    };
    let pp = if next.triggered() {
        params.hard_pp()
    } else {
        params.soft_pp()
    };
    (PercentilePoint::from_pp_clamped(pp), next)
}

/// Quality-driven elastic threshold `(1 - k*qe) * t_lo + k*qe * t_hi`.
pub fn elastic_threshold(qe: f64, k: f64, t_lo: f64, t_hi: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&qe) {
        return Err(Error::domain(format!(
            "normalised quality {qe} outside [0, 1]"
        )));
    }
    let w = k * qe;
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::domain(format!("k * qe = {w} outside [0, 1]")));
    }
    Ok((1.0 - w) * t_lo + w * t_hi)
}

/// `T(i+1) = Tth + k (A(i) - Tth - 1)`, all in pp.
pub fn elastic_defender_update(tth_pp: f64, k: f64, a_prev_pp: f64) -> f64 {
    tth_pp + k * (a_prev_pp - tth_pp - 1.0)
}

/// `A(i+1) = Tth - 3 + k (T(i) - Tth)`, all in pp.
pub fn elastic_attacker_update(tth_pp: f64, k: f64, t_prev_pp: f64) -> f64 {
    tth_pp - 3.0 + k * (t_prev_pp - tth_pp)
}

/// Initial elastic positions `(T(1), A(1)) = (Tth - 3, Tth + 1)`.
pub fn elastic_initial(tth_pp: f64) -> (f64, f64) {
    (tth_pp - 3.0, tth_pp + 1.0)
}

/// Closed-form fixed point `(T*, A*)` of the coupled elastic updates.
pub fn elastic_fixed_point(tth_pp: f64, k: f64) -> Result<(f64, f64)> {
    check_k(k)?;
    let denom = 1.0 - k * k;
    Ok((tth_pp - 4.0 * k / denom, tth_pp - (3.0 + k * k) / denom))
}

/// One simultaneous step of both elastic updates.
pub fn elastic_step(tth_pp: f64, k: f64, (t, a): (f64, f64)) -> (f64, f64) {
    (
        elastic_defender_update(tth_pp, k, a),
        elastic_attacker_update(tth_pp, k, t),
    )
}

/// Draws the mixed attacker's percentile for one round: 99pp with
/// probability `p`, otherwise 90pp.
pub fn mixed_evasive_injection<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    mixed_injection_between(p, 99.0, 90.0, rng)
}

pub(crate) fn mixed_injection_between<R: Rng + ?Sized>(
    p: f64,
    hi_pp: f64,
    lo_pp: f64,
    rng: &mut R,
) -> f64 {
    if rng.random::<f64>() < p {
        hi_pp
    } else {
        lo_pp
    }
}
