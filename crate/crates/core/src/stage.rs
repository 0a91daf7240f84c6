//! The one-shot trimming game: strategy domain, mixed strategies and the
//! 2x2 soft/hard payoff matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Domain `[x_left, x_right]` that rational poison values fall in.
///
/// Below `x_left` trimming costs more than the poison it removes; above
/// `x_right` the collector always trims.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpace {
    x_left: f64,
    x_right: f64,
}

impl StrategySpace {
    pub fn new(x_left: f64, x_right: f64) -> Result<Self> {
        if !(x_left <= x_right) {
            return Err(Error::domain(format!(
                "strategy space needs x_left <= x_right, got [{x_left}, {x_right}]"
            )));
        }
        Ok(Self { x_left, x_right })
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.x_left..=self.x_right).contains(&x)
    }
}

/// Probability of playing `x_left`; the complement goes to `x_right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    p_left: f64,
}

impl MixedStrategy {
    pub fn new(p_left: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_left) {
            return Err(Error::domain(format!("p_left = {p_left} outside [0, 1]")));
        }
        Ok(Self { p_left })
    }

    pub fn p_left(&self) -> f64 {
        self.p_left
    }

    pub fn p_right(&self) -> f64 {
        1.0 - self.p_left
    }
}

/// `p_L * x_L + p_R * x_R`: the single point a mixed strategy reduces to.
pub fn mixed_strategy_point(space: StrategySpace, mix: MixedStrategy) -> f64 {
    mix.p_left() * space.x_left + mix.p_right() * space.x_right
}

/// Inverse of [`mixed_strategy_point`]. Unique whenever `x_left < x_right`;
/// a degenerate domain decomposes to `p_left = 1`.
pub fn decompose_point(space: StrategySpace, x: f64) -> Result<MixedStrategy> {
    if !space.contains(x) {
        return Err(Error::domain(format!(
            "{x} outside strategy space [{}, {}]",
            space.x_left, space.x_right
        )));
    }
    let width = space.x_right - space.x_left;
    if width == 0.0 {
        return MixedStrategy::new(1.0);
    }
    MixedStrategy::new(((space.x_right - x) / width).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Soft,
    Hard,
}

impl Move {
    pub const ALL: [Move; 2] = [Move::Soft, Move::Hard];
}

/// Stage-game payoffs. Field names follow the bars in the usual notation:
/// `poison_high` is P-bar, `trim_low` is T-underbar, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    poison_high: f64,
    trim_high: f64,
    poison_low: f64,
    trim_low: f64,
}

impl PayoffMatrix {
    /// Requires `poison_high > trim_high > poison_low > trim_low > 0`.
    pub fn new(poison_high: f64, trim_high: f64, poison_low: f64, trim_low: f64) -> Result<Self> {
        let ordered = poison_high > trim_high
            && trim_high > poison_low
            && poison_low > trim_low
            && trim_low > 0.0;
        if !ordered {
            return Err(Error::domain(format!(
                "payoffs must satisfy P_hi > T_hi > P_lo > T_lo > 0, got \
                 ({poison_high}, {trim_high}, {poison_low}, {trim_low})"
            )));
        }
        Ok(Self {
            poison_high,
            trim_high,
            poison_low,
            trim_low,
        })
    }

    pub fn poison_high(&self) -> f64 {
        self.poison_high
    }
    pub fn trim_high(&self) -> f64 {
        self.trim_high
    }
    pub fn poison_low(&self) -> f64 {
        self.poison_low
    }
    pub fn trim_low(&self) -> f64 {
        self.trim_low
    }

    /// Poison gain `P` and trimming loss `T` realised in a cell.
    ///
    /// A hard collector trims everything the adversary could inject, so the
    /// adversary gains nothing either way.
    pub fn cell(&self, collector: Move, adversary: Move) -> (f64, f64) {
        match (collector, adversary) {
            (Move::Soft, Move::Soft) => (self.poison_low, self.trim_low),
            (Move::Soft, Move::Hard) => (self.poison_high, self.trim_low),
            (Move::Hard, _) => (0.0, self.trim_high),
        }
    }

    /// `(collector, adversary)` payoffs: the collector receives `-P - T`,
    /// the adversary `P`.
    pub fn payoffs(&self, collector: Move, adversary: Move) -> (f64, f64) {
        let (p, t) = self.cell(collector, adversary);
        (-p - t, p)
    }
}

/// Adversary best response; indifference breaks toward `Hard`.
fn adversary_best_response(m: &PayoffMatrix, collector: Move) -> Move {
    let soft = m.payoffs(collector, Move::Soft).1;
    let hard = m.payoffs(collector, Move::Hard).1;
    if soft > hard {
        Move::Soft
    } else {
        Move::Hard
    }
}

fn collector_best_response(m: &PayoffMatrix, adversary: Move) -> Move {
    let soft = m.payoffs(Move::Soft, adversary).0;
    let hard = m.payoffs(Move::Hard, adversary).0;
    if soft > hard {
        Move::Soft
    } else {
        Move::Hard
    }
}

/// Pure-strategy equilibrium `(collector, adversary)` of the one-shot game.
///
/// Scans the four cells for mutual best responses under the tie-break
/// above. Under the payoff ordering the adversary's `Hard` is weakly
/// dominant, so the scan always lands on `(Hard, Hard)`.
pub fn stage_game_equilibrium(m: &PayoffMatrix) -> Result<(Move, Move)> {
    let m = PayoffMatrix::new(m.poison_high, m.trim_high, m.poison_low, m.trim_low)?;
    for c in Move::ALL {
        for a in Move::ALL {
            if adversary_best_response(&m, c) == a && collector_best_response(&m, a) == c {
                return Ok((c, a));
            }
        }
    }
    Err(Error::domain("stage game has no pure equilibrium"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_point_examples() {
        let s = StrategySpace::new(0.9, 0.99).unwrap();
        assert_eq!(
            mixed_strategy_point(s, MixedStrategy::new(1.0).unwrap()),
            0.9
        );
        let half = mixed_strategy_point(s, MixedStrategy::new(0.5).unwrap());
        assert!((half - 0.945).abs() < 1e-15);

        let unit = StrategySpace::new(0.0, 1.0).unwrap();
        let x = mixed_strategy_point(unit, MixedStrategy::new(0.3).unwrap());
        assert!((x - 0.7).abs() < 1e-15);
    }

    #[test]
    fn decompose_outside_is_error() {
        let s = StrategySpace::new(0.9, 0.99).unwrap();
        assert!(decompose_point(s, 0.5).is_err());
        assert!(decompose_point(s, 1.0).is_err());
        let mix = decompose_point(s, 0.945).unwrap();
        assert!((mix.p_left() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bad_space_and_mix() {
        assert!(StrategySpace::new(1.0, 0.0).is_err());
        assert!(MixedStrategy::new(1.5).is_err());
    }

    #[test]
    fn equilibrium_is_hard_hard() {
        let m = PayoffMatrix::new(10.0, 5.0, 2.0, 1.0).unwrap();
        assert_eq!(
            stage_game_equilibrium(&m).unwrap(),
            (Move::Hard, Move::Hard)
        );
        let m = PayoffMatrix::new(100.0, 50.0, 2.0, 1.0).unwrap();
        assert_eq!(
            stage_game_equilibrium(&m).unwrap(),
            (Move::Hard, Move::Hard)
        );
    }

    #[test]
    fn exhaustive_best_response_check() {
        // brute force: a cell is an equilibrium when no unilateral switch
        // strictly improves, with the adversary's indifference going Hard
        let m = PayoffMatrix::new(100.0, 50.0, 2.0, 1.0).unwrap();
        let mut eq = vec![];
        for c in Move::ALL {
            for a in Move::ALL {
                let (uc, ua) = m.payoffs(c, a);
                let other = |mv: Move| {
                    if mv == Move::Soft {
                        Move::Hard
                    } else {
                        Move::Soft
                    }
                };
                let c_ok = m.payoffs(other(c), a).0 <= uc;
                let a_ok = m.payoffs(c, other(a)).1 < ua
                    || (m.payoffs(c, other(a)).1 == ua && a == Move::Hard);
                if c_ok && a_ok {
                    eq.push((c, a));
                }
            }
        }
        assert_eq!(eq, vec![(Move::Hard, Move::Hard)]);
    }

    #[test]
    fn soft_hard_cell_payoff() {
        let m = PayoffMatrix::new(10.0, 5.0, 2.0, 1.0).unwrap();
        assert_eq!(m.payoffs(Move::Soft, Move::Hard), (-11.0, 10.0));
    }

    #[test]
    fn ordering_violation() {
        assert!(PayoffMatrix::new(5.0, 10.0, 2.0, 1.0).is_err());
        assert!(PayoffMatrix::new(10.0, 5.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn zero_sum_except_trimming_loss() {
        let m = PayoffMatrix::new(10.0, 5.0, 2.0, 1.0).unwrap();
        for a in Move::ALL {
            let (uc, ua) = m.payoffs(Move::Soft, a);
            let (_, t) = m.cell(Move::Soft, a);
            assert_eq!(ua, -(uc + t));
        }
    }
}
