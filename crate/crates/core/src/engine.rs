//! The repeated trimming game, one round at a time.
//!
//! A round runs the collection steps in a fixed order:
//!
//! 1. read the public board (benign reference and its percentile table);
//! 2. the attacker picks its injection percentile and injects
//!    `round(attack_ratio * samples_per_round)` poison values there;
//! 3. the collector gathers the benign draw plus the poison;
//! 4. it trims everything above the cutoff at its current threshold;
//! 5. it scores quality with [`quality_evaluation`];
//! 6. it picks the next threshold, and the round's benign draw is appended
//!    to the board.
//!
//! Quality is the excess mass above a monitored board percentile: with
//! monitor `m`, a batch distributed like the board has about `1 - m` of its
//! mass above the board's `m`-th percentile, and anything beyond that is
//! counted as suspected poison. `QE = 1 - max(0, observed - (1 - m))`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::{nearest_rank, percentile_of_sorted, trim_above, Batch, PercentilePoint};
use crate::error::{Error, Result};
use crate::source::BenignSource;
use crate::strategies::{
    elastic_attacker_update, elastic_defender_update, elastic_initial, mixed_injection_between,
    titfortat_step, AttackerScheme, DefenderScheme, QualityBaseline, TriggerState,
};

/// Poison share of each round's samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttackRatio {
    Fixed(f64),
    /// Drawn uniformly and independently every round.
    Interval([f64; 2]),
}

impl AttackRatio {
    pub fn validate(&self) -> Result<()> {
        let ok = |r: f64| (0.0..1.0).contains(&r);
        match *self {
            AttackRatio::Fixed(r) if ok(r) => Ok(()),
            AttackRatio::Interval([lo, hi]) if ok(lo) && ok(hi) && lo <= hi => Ok(()),
            other => Err(Error::Config(format!(
                "attack ratio {other:?} not within [0, 1)"
            ))),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            AttackRatio::Fixed(r) => format!("{r}"),
            AttackRatio::Interval([lo, hi]) => format!("[{lo},{hi}]"),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            AttackRatio::Fixed(r) => r,
            AttackRatio::Interval([lo, hi]) if lo == hi => lo,
            AttackRatio::Interval([lo, hi]) => rng.random_range(lo..=hi),
        }
    }
}

/// Population the collector's cutoff percentile is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileBasis {
    /// The board's benign reference, shared with the attacker.
    #[default]
    BoardReference,
    /// The round's own collected (poisoned) batch.
    CombinedBatch,
}

/// Which data the round's quality score is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityInput {
    /// The data that survives trimming.
    #[default]
    Kept,
    /// Everything collected, before trimming.
    Collected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub round_no: usize,
    pub samples_per_round: usize,
    pub attack_ratio: AttackRatio,
    pub defender: DefenderScheme,
    pub attacker: AttackerScheme,
    pub seed: u64,
    pub benign: BenignSource,
    pub percentile_basis: PercentileBasis,
    pub quality_input: QualityInput,
    /// Board percentile above which excess mass is counted.
    pub monitor_from: f64,
    /// Initial board size; `None` uses `samples_per_round`.
    pub reference_size: Option<usize>,
}

impl GameConfig {
    pub fn new(
        defender: DefenderScheme,
        attacker: AttackerScheme,
        benign: BenignSource,
        seed: u64,
    ) -> Self {
        Self {
            round_no: 20,
            samples_per_round: 1000,
            attack_ratio: AttackRatio::Fixed(0.2),
            defender,
            attacker,
            seed,
            benign,
            percentile_basis: PercentileBasis::default(),
            quality_input: QualityInput::default(),
            monitor_from: 0.9,
            reference_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.round_no == 0 {
            return Err(Error::Config("round_no must be >= 1".into()));
        }
        if self.samples_per_round == 0 {
            return Err(Error::Config("samples_per_round must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.monitor_from) {
            return Err(Error::Config(format!(
                "monitor_from {} outside [0, 1)",
                self.monitor_from
            )));
        }
        if self.reference_size == Some(0) {
            return Err(Error::Config("reference_size must be >= 1".into()));
        }
        self.attack_ratio.validate()?;
        self.defender.validate()?;
        self.attacker.validate()?;
        self.benign.validate()
    }
}

/// Shared record of untrimmed benign reference data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PublicBoard {
    sorted: Vec<f64>,
}

impl PublicBoard {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { sorted: values }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Reference values in ascending order; doubles as the percentile table.
    pub fn reference_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn percentile(&self, q: PercentilePoint) -> Result<f64> {
        percentile_of_sorted(&self.sorted, q)
    }

    pub fn value_at_pp(&self, pp: f64) -> Result<f64> {
        self.percentile(PercentilePoint::from_pp_clamped(pp))
    }

    pub fn record(&mut self, values: &[f64]) {
        let mut add = values.to_vec();
        add.sort_by(f64::total_cmp);
        let mut merged = Vec::with_capacity(self.sorted.len() + add.len());
        let (mut i, mut j) = (0, 0);
        while i < self.sorted.len() && j < add.len() {
            if self.sorted[i] <= add[j] {
                merged.push(self.sorted[i]);
                i += 1;
            } else {
                merged.push(add[j]);
                j += 1;
            }
        }
        merged.extend_from_slice(&self.sorted[i..]);
        merged.extend_from_slice(&add[j..]);
        self.sorted = merged;
    }
}

/// Excess-mass quality score in `[1 - monitor_from, 1]`; an empty batch
/// scores 1.
pub fn quality_evaluation(
    batch: &Batch,
    board: &PublicBoard,
    monitor_from: PercentilePoint,
) -> Result<f64> {
    if board.is_empty() {
        return Err(Error::domain("quality evaluation against an empty board"));
    }
    if batch.is_empty() {
        return Ok(1.0);
    }
    let monitor = board.percentile(monitor_from)?;
    let above = batch.values().iter().filter(|&&v| v > monitor).count();
    let observed = above as f64 / batch.len() as f64;
    let excess = (observed - (1.0 - monitor_from.fraction())).max(0.0);
    Ok(1.0 - excess)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub threshold_pp: f64,
    pub injection_pp: f64,
    /// Value cutoff; infinite when nothing is trimmed.
    pub cutoff: f64,
    pub qe: f64,
    pub kept_benign: usize,
    pub kept_poison: usize,
    pub removed_benign: usize,
    pub removed_poison: usize,
    pub u_a_increment: f64,
    pub u_c_increment: f64,
}

impl RoundRecord {
    pub fn total(&self) -> usize {
        self.kept_benign + self.kept_poison + self.removed_benign + self.removed_poison
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameTrace {
    pub rounds: Vec<RoundRecord>,
    /// Round at which a trigger defender switched to punishment.
    pub trigger_round: Option<usize>,
    pub round_no: usize,
    /// Cumulative adversary utility after each round.
    pub u_a: Vec<f64>,
    /// Cumulative collector utility after each round.
    pub u_c: Vec<f64>,
}

impl GameTrace {
    /// Trigger round, or the round cap when the game never triggered.
    pub fn termination_round(&self) -> usize {
        self.trigger_round.unwrap_or(self.round_no)
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "round",
        "threshold_pp",
        "injection_pp",
        "qe",
        "kept_benign",
        "kept_poison",
        "removed_benign",
        "removed_poison",
        "u_a",
        "u_c",
    ];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for (i, r) in self.rounds.iter().enumerate() {
            w.write_record([
                r.round.to_string(),
                r.threshold_pp.to_string(),
                r.injection_pp.to_string(),
                r.qe.to_string(),
                r.kept_benign.to_string(),
                r.kept_poison.to_string(),
                r.removed_benign.to_string(),
                r.removed_poison.to_string(),
                self.u_a[i].to_string(),
                self.u_c[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trace plus the raw values, for metrics that need the data itself.
#[derive(Debug, Clone)]
pub struct GameOutcome {
    pub trace: GameTrace,
    /// Everything that survived trimming, pooled over rounds.
    pub kept: Batch,
    /// Every benign value collected, pooled over rounds.
    pub benign: Vec<f64>,
}

/// One game instance. Owns its random streams and board.
#[derive(Debug)]
pub struct Game<'a> {
    config: &'a GameConfig,
    data_rng: ChaCha8Rng,
    attack_rng: ChaCha8Rng,
    board: PublicBoard,
    baseline_qe: f64,
    trigger: TriggerState,
    threshold_pp: f64,
    adversary_pp: f64,
    round: usize,
}

const DATA_STREAM: u64 = 0;
const ATTACK_STREAM: u64 = 1;

impl<'a> Game<'a> {
    pub fn new(config: &'a GameConfig) -> Result<Self> {
        config.validate()?;
        let mut data_rng = ChaCha8Rng::seed_from_u64(config.seed);
        data_rng.set_stream(DATA_STREAM);
        let mut attack_rng = ChaCha8Rng::seed_from_u64(config.seed);
        attack_rng.set_stream(ATTACK_STREAM);

        let n = config.samples_per_round;
        let board = PublicBoard::new(
            config
                .benign
                .sample(config.reference_size.unwrap_or(n), &mut data_rng),
        );
        let x0 = Batch::benign(config.benign.sample(n, &mut data_rng));
        let baseline_qe = quality_evaluation(&x0, &board, monitor(config))?;

        let threshold_pp = match config.defender {
            DefenderScheme::Ostrich => 100.0,
            DefenderScheme::Baseline { threshold_pp } => threshold_pp,
            DefenderScheme::Titfortat(p) => p.soft_pp(),
            DefenderScheme::Elastic { tth_pp, .. } => elastic_initial(tth_pp).0,
        };
        let adversary_pp = match config.attacker {
            AttackerScheme::ElasticAdversary { tth_pp, .. } => elastic_initial(tth_pp).1,
            _ => f64::NAN,
        };
        Ok(Self {
            config,
            data_rng,
            attack_rng,
            board,
            baseline_qe,
            trigger: TriggerState::untriggered(),
            threshold_pp,
            adversary_pp,
            round: 0,
        })
    }

    pub fn board(&self) -> &PublicBoard {
        &self.board
    }

    pub fn trigger(&self) -> TriggerState {
        self.trigger
    }

    /// Quality of the clean reference batch drawn at setup.
    pub fn measured_baseline(&self) -> f64 {
        self.baseline_qe
    }

    /// Threshold the collector will use in the next round.
    pub fn current_threshold_pp(&self) -> f64 {
        self.threshold_pp
    }

    pub fn play_round(&mut self) -> Result<RoundRecord> {
        self.play_round_detailed().map(|(rec, _, _)| rec)
    }

    fn injection_percentiles(&mut self, count: usize) -> (f64, Vec<f64>) {
        let rng = &mut self.attack_rng;
        let single = |pp: f64| (pp, vec![pp; count]);
        match self.config.attacker {
            AttackerScheme::StaticAttacker { pp } => single(pp),
            AttackerScheme::IdealStatic { offset_pp } => single(self.threshold_pp + offset_pp),
            AttackerScheme::MixedEvasive { p, hi_pp, lo_pp } => {
                single(mixed_injection_between(p, hi_pp, lo_pp, rng))
            }
            AttackerScheme::ElasticAdversary { .. } => single(self.adversary_pp),
            AttackerScheme::RandomRange { lo_pp, hi_pp } => {
                let pps: Vec<f64> = (0..count)
                    .map(|_| {
                        if lo_pp == hi_pp {
                            lo_pp
                        } else {
                            rng.random_range(lo_pp..=hi_pp)
                        }
                    })
                    .collect();
                let mean = if pps.is_empty() {
                    (lo_pp + hi_pp) / 2.0
                } else {
                    pps.iter().sum::<f64>() / pps.len() as f64
                };
                (mean, pps)
            }
        }
    }

    fn play_round_detailed(&mut self) -> Result<(RoundRecord, Batch, Vec<f64>)> {
        let cfg = self.config;
        self.round += 1;
        let n = cfg.samples_per_round;

        let ratio = cfg.attack_ratio.draw(&mut self.data_rng);
        let n_poison = ((ratio * n as f64) + 0.5).floor().min(n as f64) as usize;
        let benign = cfg.benign.sample(n - n_poison, &mut self.data_rng);

        let threshold_pp = self.threshold_pp;
        let (injection_pp, pps) = self.injection_percentiles(n_poison);
        let mut collected = Batch::benign(benign.clone());
        for pp in pps {
            collected.push(self.board.value_at_pp(pp)?, true);
        }

        let cutoff = match (cfg.defender, cfg.percentile_basis) {
            (DefenderScheme::Ostrich, _) => f64::INFINITY,
            (_, PercentileBasis::BoardReference) => self.board.value_at_pp(threshold_pp)?,
            (_, PercentileBasis::CombinedBatch) => {
                let sorted = collected.sorted_values();
                sorted[nearest_rank(
                    PercentilePoint::from_pp_clamped(threshold_pp).fraction(),
                    sorted.len(),
                ) - 1]
            }
        };
        let (kept, removed) = trim_above(&collected, cutoff);

        let qe = match cfg.quality_input {
            QualityInput::Kept => quality_evaluation(&kept, &self.board, monitor(cfg))?,
            QualityInput::Collected => quality_evaluation(&collected, &self.board, monitor(cfg))?,
        };

        let kept_poison = kept.poison_count();
        let removed_benign = removed.benign_count();
        let record = RoundRecord {
            round: self.round,
            threshold_pp,
            injection_pp,
            cutoff,
            qe,
            kept_benign: kept.benign_count(),
            kept_poison,
            removed_benign,
            removed_poison: removed.poison_count(),
            u_a_increment: kept_poison as f64 / n as f64,
            u_c_increment: -((kept_poison + removed_benign) as f64) / n as f64,
        };

        match cfg.defender {
            DefenderScheme::Ostrich | DefenderScheme::Baseline { .. } => {}
            DefenderScheme::Titfortat(params) => {
                let baseline = match params.baseline {
                    QualityBaseline::Measured => self.baseline_qe,
                    QualityBaseline::Fixed(v) => v,
                };
                let (next, state) = titfortat_step(self.trigger, self.round, qe, baseline, &params);
                self.trigger = state;
                self.threshold_pp = next.pp();
            }
            DefenderScheme::Elastic { tth_pp, k } => {
                self.threshold_pp = elastic_defender_update(tth_pp, k, injection_pp);
            }
        }
        if let AttackerScheme::ElasticAdversary { tth_pp, k } = cfg.attacker {
            self.adversary_pp = elastic_attacker_update(tth_pp, k, threshold_pp);
        }
        self.board.record(&benign);
        Ok((record, kept, benign))
    }
}

fn monitor(cfg: &GameConfig) -> PercentilePoint {
    PercentilePoint::from_pp_clamped(cfg.monitor_from * 100.0)
}

pub fn run_game(config: &GameConfig) -> Result<GameTrace> {
    run_game_detailed(config).map(|o| o.trace)
}

pub fn run_game_detailed(config: &GameConfig) -> Result<GameOutcome> {
    let mut game = Game::new(config)?;
    let mut rounds = Vec::with_capacity(config.round_no);
    let mut kept = Batch::default();
    let mut benign = Vec::new();
    let (mut ua, mut uc) = (Vec::new(), Vec::new());
    let (mut sum_a, mut sum_c) = (0.0, 0.0);
    for _ in 0..config.round_no {
        let (rec, k, b) = game.play_round_detailed()?;
        sum_a += rec.u_a_increment;
        sum_c += rec.u_c_increment;
        ua.push(sum_a);
        uc.push(sum_c);
        kept.extend(&k);
        benign.extend(b);
        rounds.push(rec);
    }
    Ok(GameOutcome {
        trace: GameTrace {
            rounds,
            trigger_round: game.trigger.trigger_round(),
            round_no: config.round_no,
            u_a: ua,
            u_c: uc,
        },
        kept,
        benign,
    })
}
