//! Simulator and analysis toolkit for the repeated trimming game between a
//! data collector and an evasive poisoning adversary.
//!
//! - [`batch`] and [`stage`]: percentiles, trimming, the one-shot stage game.
//! - [`strategies`]: defender thresholds and attacker injection policies.
//! - [`engine`]: the round-by-round game and its trace.
//! - [`theory`]: compliance calculus and Lagrangian utility dynamics.
//! - [`privacy`]: two-point local perturbation and manipulation attacks.
//! - [`metrics`]: clustering, leftover poison, elastic cost, termination.
//! - [`harness`]: datasets, declarative configs and experiment sweeps.
//!
//! ```
//! use trimgame::engine::{run_game, GameConfig};
//! use trimgame::source::{BenignSource, SynthSpec};
//! use trimgame::strategies::{AttackerScheme, DefenderScheme};
//!
//! let cfg = GameConfig::new(
//!     DefenderScheme::Baseline { threshold_pp: 95.0 },
//!     AttackerScheme::StaticAttacker { pp: 99.0 },
//!     BenignSource::Synthetic(SynthSpec::Uniform { lo: 0.0, hi: 1.0 }),
//!     42,
//! );
//! let trace = run_game(&cfg).unwrap();
//! assert!(trace.rounds.iter().all(|r| r.kept_poison == 0));
//! ```

pub mod batch;
pub mod engine;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod privacy;
pub mod source;
pub mod stage;
pub mod strategies;
pub mod theory;

pub use batch::{nearest_rank_percentile, trim_above, Batch, PercentilePoint};
pub use engine::{run_game, GameConfig, GameTrace, PublicBoard, RoundRecord};
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/percentiles.md")]
    mod percentiles {}
    #[doc = include_str!("../../../book/src/stage-game.md")]
    mod stage_game {}
    #[doc = include_str!("../../../book/src/strategies.md")]
    mod strategies {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/theory.md")]
    mod theory {}
    #[doc = include_str!("../../../book/src/privacy.md")]
    mod privacy {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
