//! Datasets, declarative configs and experiment sweeps.
//!
//! An experiment expands its config into cells (scheme × attack ratio × Tth
//! × mixing probability), runs `repetitions` seeded games per cell with seed
//! `seed + rep`, and aggregates each metric into a mean and standard error.
//! Every cell sees the same benign draws for a given repetition, so scheme
//! comparisons are paired.
//!
//! ```
//! use trimgame::harness::ExperimentConfig;
//!
//! let cfg: ExperimentConfig = toml::from_str(r#"
//!     seed = 7
//!     repetitions = 2
//!     round_no = 3
//!     samples_per_round = 50
//!     tth_pp = [95.0]
//!     attack_ratios = [0.2]
//!     dataset = { kind = "uniform", lo = 0.0, hi = 1.0 }
//!
//!     [[schemes]]
//!     name = "elastic_0.5"
//!     defender = { scheme = "elastic", k = 0.5 }
//!     attacker = { scheme = "elastic_adversary", k = 0.5 }
//! "#).unwrap();
//! let out = trimgame::harness::run_experiment(&cfg).unwrap();
//! assert!(out.rows.iter().any(|r| r.metric == "untrimmed_fraction"));
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::engine::{run_game_detailed, AttackRatio, GameConfig, PercentileBasis, QualityInput};
use crate::error::{Error, Result};
use crate::metrics::{centroid_distance, kmeans_fit, sse, untrimmed_poison_fraction, Centroids};
use crate::privacy::{craft_attack, ldp_mean, ldp_perturb, LdpConfig, ManipulationKind};
use crate::source::{BenignSource, SynthSpec};
use crate::strategies::{
    AttackerScheme, DefenderScheme, QualityBaseline, TitfortatParams, TriggerSign,
};
use crate::theory::{
    compliance_threshold, energy, integrate_dynamics, AnalyticSolution, DynamicsParams, State,
};

fn parse_row(path: &Path, row: usize, line: &str) -> Result<Vec<f64>> {
    line.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    message: format!("not a finite number: {:?}", f.trim()),
                })
        })
        .collect()
}

/// Reads numeric rows; blank lines and `#` comments are skipped. Every row
/// must have the same number of columns.
pub fn load_points(path: &Path, normalize: bool) -> Result<Vec<Vec<f64>>> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::Dataset {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row = parse_row(path, i + 1, t)?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row: i + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Dataset {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    if normalize {
        for c in 0..rows[0].len() {
            let (lo, hi) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[c]), hi.max(r[c]))
                });
            for r in &mut rows {
                r[c] = if hi > lo {
                    2.0 * (r[c] - lo) / (hi - lo) - 1.0
                } else {
                    0.0
                };
            }
        }
    }
    Ok(rows)
}

/// First column of a numeric file as a benign batch; with `normalize` the
/// values are mapped affinely so that min → −1 and max → +1.
pub fn load_dataset(path: &Path, normalize: bool) -> Result<Batch> {
    let rows = load_points(path, normalize)?;
    Ok(Batch::benign(rows.into_iter().map(|r| r[0]).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Gaussian {
        mean: f64,
        sd: f64,
    },
    Clusters {
        centers: Vec<f64>,
        sd: f64,
    },
    /// Resampled with replacement from the first column of a numeric file.
    File {
        path: PathBuf,
        #[serde(default)]
        normalize: bool,
    },
}

impl DatasetSpec {
    /// Relative file paths resolve against `base`.
    pub fn source(&self, base: &Path) -> Result<BenignSource> {
        let synth = match self {
            DatasetSpec::Uniform { lo, hi } => SynthSpec::Uniform { lo: *lo, hi: *hi },
            DatasetSpec::Gaussian { mean, sd } => SynthSpec::Gaussian {
                mean: *mean,
                sd: *sd,
            },
            DatasetSpec::Clusters { centers, sd } => SynthSpec::Clusters {
                centers: centers.clone(),
                sd: *sd,
            },
            DatasetSpec::File { path, normalize } => {
                let b = load_dataset(&base.join(path), *normalize)?;
                return Ok(BenignSource::Empirical(Arc::new(b.values().to_vec())));
            }
        };
        synth.validate()?;
        Ok(BenignSource::Synthetic(synth))
    }
}

/// Defender given relative to the cell's Tth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum DefenderTemplate {
    Ostrich,
    Baseline {
        #[serde(default)]
        offset_pp: f64,
    },
    Titfortat {
        #[serde(default)]
        red: f64,
        #[serde(default = "one")]
        soft_offset_pp: f64,
        #[serde(default = "minus_three")]
        hard_offset_pp: f64,
        #[serde(default)]
        sign: TriggerSign,
        #[serde(default)]
        baseline: BaselineTemplate,
        #[serde(default)]
        no_trigger: bool,
    },
    Elastic {
        k: f64,
    },
}

/// Trigger baseline of a templated Tit-for-tat defender.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum BaselineTemplate {
    #[default]
    Measured,
    Fixed(f64),
    /// The cell's mixing probability, so the trigger fires once the
    /// estimated poison ratio exceeds `1 − p + red`.
    MixP,
}

fn one() -> f64 {
    1.0
}

fn minus_three() -> f64 {
    -3.0
}

fn minus_one() -> f64 {
    -1.0
}

impl DefenderTemplate {
    pub fn instantiate(&self, tth_pp: f64, mix_p: Option<f64>) -> Result<DefenderScheme> {
        Ok(match *self {
            DefenderTemplate::Ostrich => DefenderScheme::Ostrich,
            DefenderTemplate::Baseline { offset_pp } => DefenderScheme::Baseline {
                threshold_pp: tth_pp + offset_pp,
            },
            DefenderTemplate::Titfortat {
                red,
                soft_offset_pp,
                hard_offset_pp,
                sign,
                baseline,
                no_trigger,
            } => DefenderScheme::Titfortat(TitfortatParams {
                tth_pp,
                red,
                soft_offset_pp,
                hard_offset_pp,
                sign,
                baseline: match baseline {
                    BaselineTemplate::Measured => QualityBaseline::Measured,
                    BaselineTemplate::Fixed(v) => QualityBaseline::Fixed(v),
                    BaselineTemplate::MixP => QualityBaseline::Fixed(mix_p.ok_or_else(|| {
                        Error::Config("baseline mix_p needs a swept mixing probability".into())
                    })?),
                },
                no_trigger,
            }),
            DefenderTemplate::Elastic { k } => DefenderScheme::Elastic { tth_pp, k },
        })
    }
}

/// Attacker given relative to the cell's Tth. A static attacker takes either
/// an absolute `pp` or an `offset_pp` from Tth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum AttackerTemplate {
    StaticAttacker {
        pp: Option<f64>,
        offset_pp: Option<f64>,
    },
    RandomRange {
        lo_pp: f64,
        hi_pp: f64,
    },
    IdealStatic {
        #[serde(default = "minus_one")]
        offset_pp: f64,
    },
    /// `p` may be omitted when the experiment sweeps `mix_p`.
    MixedEvasive {
        p: Option<f64>,
        #[serde(default = "ninety_nine")]
        hi_pp: f64,
        #[serde(default = "ninety")]
        lo_pp: f64,
    },
    ElasticAdversary {
        k: f64,
    },
}

fn ninety_nine() -> f64 {
    99.0
}

fn ninety() -> f64 {
    90.0
}

impl AttackerTemplate {
    pub fn instantiate(&self, tth_pp: f64, mix_p: Option<f64>) -> Result<AttackerScheme> {
        Ok(match *self {
            AttackerTemplate::StaticAttacker { pp, offset_pp } => match (pp, offset_pp) {
                (Some(pp), None) => AttackerScheme::StaticAttacker { pp },
                (None, Some(off)) => AttackerScheme::StaticAttacker { pp: tth_pp + off },
                _ => {
                    return Err(Error::Config(
                        "static_attacker needs exactly one of pp and offset_pp".into(),
                    ))
                }
            },
            AttackerTemplate::RandomRange { lo_pp, hi_pp } => {
                AttackerScheme::RandomRange { lo_pp, hi_pp }
            }
            AttackerTemplate::IdealStatic { offset_pp } => {
                AttackerScheme::IdealStatic { offset_pp }
            }
            AttackerTemplate::MixedEvasive { p, hi_pp, lo_pp } => {
                let p = mix_p.or(p).ok_or_else(|| {
                    Error::Config("mixed_evasive needs p or an experiment-level mix_p".into())
                })?;
                AttackerScheme::MixedEvasive { p, hi_pp, lo_pp }
            }
            AttackerTemplate::ElasticAdversary { k } => {
                AttackerScheme::ElasticAdversary { tth_pp, k }
            }
        })
    }

    fn sweeps_p(&self) -> bool {
        matches!(self, AttackerTemplate::MixedEvasive { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub name: String,
    pub defender: DefenderTemplate,
    pub attacker: AttackerTemplate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Game,
    Theory,
    Ldp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySweep {
    #[serde(default)]
    pub d: Vec<f64>,
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub g_ac: Vec<f64>,
    pub dynamics: Option<DynamicsSweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSweep {
    pub m_a: f64,
    pub m_c: f64,
    pub k: f64,
    /// `[u_a, u_c, du_a, du_c]` at the start of the span.
    pub init: [f64; 4],
    pub span: [f64; 2],
    pub h: f64,
    pub trajectory_output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpSweep {
    pub epsilons: Vec<f64>,
    pub users: usize,
    #[serde(default = "default_attacker_fraction")]
    pub attacker_fraction: f64,
    #[serde(default = "one")]
    pub target: f64,
}

fn default_attacker_fraction() -> f64 {
    0.1
}

fn default_rounds() -> usize {
    20
}

fn default_samples() -> usize {
    1000
}

fn default_reps() -> usize {
    100
}

fn default_monitor() -> f64 {
    0.9
}

fn default_kmeans_iters() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default = "default_rounds")]
    pub round_no: usize,
    #[serde(default = "default_samples")]
    pub samples_per_round: usize,
    pub output: Option<PathBuf>,
    /// Per-repetition values, one row per (cell, repetition, metric).
    pub samples_output: Option<PathBuf>,
    #[serde(default)]
    pub tth_pp: Vec<f64>,
    #[serde(default)]
    pub attack_ratios: Vec<AttackRatio>,
    /// Mixing probabilities swept for every mixed_evasive scheme.
    #[serde(default)]
    pub mix_p: Vec<f64>,
    pub dataset: Option<DatasetSpec>,
    #[serde(default)]
    pub schemes: Vec<SchemeSpec>,
    #[serde(default = "default_monitor")]
    pub monitor_from: f64,
    #[serde(default)]
    pub percentile_basis: PercentileBasis,
    #[serde(default)]
    pub quality_input: QualityInput,
    pub reference_size: Option<usize>,
    /// Clusters for the SSE metrics; defaults to the synthetic centers.
    pub kmeans_k: Option<usize>,
    #[serde(default = "default_kmeans_iters")]
    pub kmeans_iters: usize,
    pub theory: Option<TheorySweep>,
    pub ldp: Option<LdpSweep>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        match self.mode {
            Mode::Game => {
                if self.schemes.is_empty()
                    || self.tth_pp.is_empty()
                    || self.attack_ratios.is_empty()
                {
                    return Err(Error::Config(
                        "game mode needs schemes, tth_pp and attack_ratios".into(),
                    ));
                }
                if self.dataset.is_none() {
                    return Err(Error::Config("game mode needs a dataset".into()));
                }
                for r in &self.attack_ratios {
                    r.validate()?;
                }
            }
            Mode::Theory if self.theory.is_none() => {
                return Err(Error::Config("theory mode needs a [theory] table".into()))
            }
            Mode::Ldp if self.ldp.is_none() => {
                return Err(Error::Config("ldp mode needs an [ldp] table".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: String,
    pub attack_ratio: String,
    pub tth_pp: Option<f64>,
    pub param: String,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub repetitions: usize,
}

impl ResultRow {
    pub const CSV_HEADER: [&'static str; 8] = [
        "scheme",
        "attack_ratio",
        "tth_pp",
        "param",
        "metric",
        "value",
        "stderr",
        "repetitions",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub scheme: String,
    pub attack_ratio: String,
    pub tth_pp: Option<f64>,
    pub param: String,
    pub repetition: usize,
    pub metric: String,
    pub value: f64,
}

impl SampleRow {
    pub const CSV_HEADER: [&'static str; 7] = [
        "scheme",
        "attack_ratio",
        "tth_pp",
        "param",
        "repetition",
        "metric",
        "value",
    ];
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub samples: Vec<SampleRow>,
}

fn write_rows<W: Write, T: Serialize>(header: &[&str], rows: &[T], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl ExperimentOutput {
    pub fn write_results<W: Write>(&self, out: W) -> Result<()> {
        write_rows(&ResultRow::CSV_HEADER, &self.rows, out)
    }

    pub fn write_samples<W: Write>(&self, out: W) -> Result<()> {
        write_rows(&SampleRow::CSV_HEADER, &self.samples, out)
    }
}

/// Mean and standard error of the mean (zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone)]
struct Cell {
    scheme: String,
    ratio: AttackRatio,
    tth_pp: f64,
    mix_p: Option<f64>,
    defender: DefenderScheme,
    attacker: AttackerScheme,
}

impl Cell {
    fn param(&self) -> String {
        self.mix_p.map(|p| format!("p={p}")).unwrap_or_default()
    }

    fn id(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            self.scheme,
            self.ratio.label(),
            self.tth_pp,
            self.param()
        )
    }
}

fn expand_cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for s in &cfg.schemes {
        let ps: Vec<Option<f64>> = if s.attacker.sweeps_p() && !cfg.mix_p.is_empty() {
            cfg.mix_p.iter().map(|&p| Some(p)).collect()
        } else {
            vec![None]
        };
        for &ratio in &cfg.attack_ratios {
            for &tth in &cfg.tth_pp {
                for &mix_p in &ps {
                    let cell = Cell {
                        scheme: s.name.clone(),
                        ratio,
                        tth_pp: tth,
                        mix_p,
                        defender: s.defender.instantiate(tth, mix_p)?,
                        attacker: s.attacker.instantiate(tth, mix_p)?,
                    };
                    cell.defender
                        .validate()
                        .and(cell.attacker.validate())
                        .map_err(|e| Error::Cell {
                            cell: cell.id(),
                            source: Box::new(e),
                        })?;
                    cells.push(cell);
                }
            }
        }
    }
    Ok(cells)
}

/// Clustering reference: the dataset's own centers, or `k`.
#[derive(Debug, Clone)]
pub struct ClusterTruth {
    pub k: usize,
    pub centers: Option<Vec<f64>>,
    pub max_iters: usize,
}

/// Per-game metrics, in a fixed order.
pub fn game_metrics(
    config: &GameConfig,
    clusters: Option<&ClusterTruth>,
) -> Result<Vec<(&'static str, f64)>> {
    let out = run_game_detailed(config)?;
    let t = &out.trace;
    let mut m = vec![
        ("untrimmed_fraction", untrimmed_poison_fraction(t)),
        ("termination_round", t.termination_round() as f64),
        ("u_a", *t.u_a.last().unwrap_or(&0.0)),
        ("u_c", *t.u_c.last().unwrap_or(&0.0)),
        (
            "mean_qe",
            t.rounds.iter().map(|r| r.qe).sum::<f64>() / t.rounds.len() as f64,
        ),
    ];
    if let Some(c) = clusters {
        let (offset, dist) = cluster_metrics(&out.kept, &out.benign, c, config.seed)?;
        m.push(("sse_offset", offset));
        m.push(("centroid_distance", dist));
    }
    Ok(m)
}

/// SSE offset and centroid distance of a k-means fit on the kept data.
///
/// The offset is `|SSE(clean, fit) − SSE(clean, truth)| / |clean|`, scored on
/// the benign values alone, so it measures how far poisoning moved the fit.
pub fn cluster_metrics(
    kept: &Batch,
    benign: &[f64],
    c: &ClusterTruth,
    seed: u64,
) -> Result<(f64, f64)> {
    let clean: Vec<Vec<f64>> = benign.iter().map(|&v| vec![v]).collect();
    let truth = match &c.centers {
        Some(centers) => Centroids::scalar(centers)?,
        None => kmeans_fit(&clean, c.k, c.max_iters, seed)?,
    };
    let kept_pts: Vec<Vec<f64>> = kept.values().iter().map(|&v| vec![v]).collect();
    let fit = kmeans_fit(&kept_pts, truth.k(), c.max_iters, seed)?;
    let offset = (sse(&clean, &fit)? - sse(&clean, &truth)?).abs() / clean.len() as f64;
    Ok((offset, centroid_distance(&fit, &truth)?))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Game => run_game_sweep(cfg),
        Mode::Theory => run_theory_sweep(cfg),
        Mode::Ldp => run_ldp_sweep(cfg),
    }
}

fn run_game_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let dataset = cfg.dataset.as_ref().expect("validated");
    let source = dataset.source(&cfg.base_dir)?;
    let clusters = match (cfg.kmeans_k, source.centers()) {
        (Some(k), Some(c)) if k == c.len() => Some((k, Some(c.to_vec()))),
        (Some(k), _) => Some((k, None)),
        (None, Some(c)) => Some((c.len(), Some(c.to_vec()))),
        (None, None) => None,
    }
    .map(|(k, centers)| ClusterTruth {
        k,
        centers,
        max_iters: cfg.kmeans_iters,
    });

    let cells = expand_cells(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.repetitions).map(move |r| (c, r)))
        .collect();
    let results: Vec<Result<Vec<(&'static str, f64)>>> = jobs
        .par_iter()
        .map(|&(c, rep)| {
            let cell = &cells[c];
            let game = GameConfig {
                round_no: cfg.round_no,
                samples_per_round: cfg.samples_per_round,
                attack_ratio: cell.ratio,
                defender: cell.defender,
                attacker: cell.attacker,
                seed: cfg.seed.wrapping_add(rep as u64),
                benign: source.clone(),
                percentile_basis: cfg.percentile_basis,
                quality_input: cfg.quality_input,
                monitor_from: cfg.monitor_from,
                reference_size: cfg.reference_size,
            };
            game_metrics(&game, clusters.as_ref()).map_err(|e| Error::Cell {
                cell: format!("{} rep {rep}", cell.id()),
                source: Box::new(e),
            })
        })
        .collect();

    let mut out = ExperimentOutput::default();
    let mut per_cell: Vec<Vec<Vec<(&'static str, f64)>>> = vec![Vec::new(); cells.len()];
    for (&(c, _), r) in jobs.iter().zip(results) {
        per_cell[c].push(r?);
    }
    for (cell, reps) in cells.iter().zip(per_cell) {
        for (mi, &(metric, _)) in reps[0].iter().enumerate() {
            let values: Vec<f64> = reps.iter().map(|r| r[mi].1).collect();
            push_metric(
                &mut out,
                &cell.scheme,
                &cell.ratio.label(),
                Some(cell.tth_pp),
                &cell.param(),
                metric,
                &values,
            );
        }
    }
    Ok(out)
}

fn push_metric(
    out: &mut ExperimentOutput,
    scheme: &str,
    ratio: &str,
    tth_pp: Option<f64>,
    param: &str,
    metric: &str,
    values: &[f64],
) {
    let (value, stderr) = mean_stderr(values);
    out.rows.push(ResultRow {
        scheme: scheme.into(),
        attack_ratio: ratio.into(),
        tth_pp,
        param: param.into(),
        metric: metric.into(),
        value,
        stderr,
        repetitions: values.len(),
    });
    for (rep, &v) in values.iter().enumerate() {
        out.samples.push(SampleRow {
            scheme: scheme.into(),
            attack_ratio: ratio.into(),
            tth_pp,
            param: param.into(),
            repetition: rep,
            metric: metric.into(),
            value: v,
        });
    }
}

fn run_theory_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let th = cfg.theory.as_ref().expect("validated");
    let mut out = ExperimentOutput::default();
    for &d in &th.d {
        for &p in &th.p {
            for &g in &th.g_ac {
                let v = compliance_threshold(d, p, g)?;
                push_metric(
                    &mut out,
                    "compliance",
                    "",
                    None,
                    &format!("d={d};p={p};g_ac={g}"),
                    "delta_max",
                    &[v],
                );
            }
        }
    }
    if let Some(dy) = &th.dynamics {
        let params = DynamicsParams::new(dy.m_a, dy.m_c, dy.k)?;
        let [ua, uc, va, vc] = dy.init;
        let init = State::new(ua, uc, va, vc);
        let traj = integrate_dynamics(&params, init, (dy.span[0], dy.span[1]), dy.h)?;
        let sol = AnalyticSolution::new(&params, init);
        let mut sup = 0.0f64;
        let e0 = energy(&init, &params);
        let mut drift = 0.0f64;
        for (i, s) in traj.states().enumerate() {
            let exact = sol.at(traj.r[i] - dy.span[0]);
            sup = sup
                .max((s.u_a - exact.u_a).abs())
                .max((s.u_c - exact.u_c).abs());
            drift = drift.max((energy(&s, &params) - e0).abs());
        }
        let param = format!("m_a={};m_c={};k={}", dy.m_a, dy.m_c, dy.k);
        push_metric(
            &mut out,
            "dynamics",
            "",
            None,
            &param,
            "omega",
            &[params.omega()],
        );
        push_metric(&mut out, "dynamics", "", None, &param, "sup_error", &[sup]);
        push_metric(
            &mut out,
            "dynamics",
            "",
            None,
            &param,
            "energy_drift",
            &[drift],
        );
        if let Some(path) = &dy.trajectory_output {
            traj.write_csv(&params, File::create(cfg.resolve(path))?)?;
        }
    }
    Ok(out)
}

fn run_ldp_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let l = cfg.ldp.as_ref().expect("validated");
    if l.users == 0 || !(0.0..1.0).contains(&l.attacker_fraction) {
        return Err(Error::Config(
            "ldp needs users >= 1 and attacker_fraction in [0, 1)".into(),
        ));
    }
    let source = match &cfg.dataset {
        Some(d) => d.source(&cfg.base_dir)?,
        None => BenignSource::Synthetic(SynthSpec::Uniform { lo: -1.0, hi: 1.0 }),
    };
    let n_att = ((l.attacker_fraction * l.users as f64) + 0.5).floor() as usize;
    let n_honest = l.users - n_att;
    let mut out = ExperimentOutput::default();
    for &eps in &l.epsilons {
        let lcfg = LdpConfig::new(eps)?;
        let reps: Vec<Result<[f64; 3]>> = (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(rep as u64));
                let inputs: Vec<f64> = source
                    .sample(n_honest, &mut rng)
                    .into_iter()
                    .map(|x| x.clamp(-1.0, 1.0))
                    .collect();
                let truth = inputs.iter().sum::<f64>() / inputs.len().max(1) as f64;
                let honest = inputs
                    .iter()
                    .map(|&x| ldp_perturb(x, &lcfg, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let input = craft_attack(
                    ManipulationKind::InputManipulation,
                    l.target,
                    n_att,
                    &lcfg,
                    &mut rng,
                )?;
                let output = craft_attack(
                    ManipulationKind::OutputManipulation,
                    l.target,
                    n_att,
                    &lcfg,
                    &mut rng,
                )?;
                let with = |poison: &[crate::privacy::Report]| -> Result<f64> {
                    let all: Vec<_> = honest.iter().chain(poison).copied().collect();
                    Ok((ldp_mean(&all)? - truth).powi(2))
                };
                Ok([with(&[])?, with(&input)?, with(&output)?])
            })
            .collect();
        let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
        let param = format!("epsilon={eps}");
        for (i, name) in [
            "mse_honest",
            "mse_input_manipulation",
            "mse_output_manipulation",
        ]
        .iter()
        .enumerate()
        {
            let v: Vec<f64> = reps.iter().map(|r| r[i]).collect();
            push_metric(
                &mut out,
                "ldp",
                &format!("{}", l.attacker_fraction),
                None,
                &param,
                name,
                &v,
            );
        }
    }
    Ok(out)
}

/// Defender side of the redundancy protocol below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolDefender {
    Titfortat,
    Elastic,
}

/// The redundancy protocol: a mixed evasive attacker (99pp with
/// probability `p`, else 90pp) at attack ratio 0.2 against a collector with
/// Tth = 95, 30 samples per round and a 25-round cap.
///
/// The Tit-for-tat collector trims at 96pp until the estimated poison ratio
/// `1 − QE` exceeds `1 − p + 0.05`, then trims at 90pp for good. The Elastic
/// collector uses `k = 0.5`.
pub fn redundancy_protocol(p: f64, defender: ProtocolDefender, seed: u64) -> GameConfig {
    let tth = 95.0;
    let defender = match defender {
        ProtocolDefender::Titfortat => DefenderScheme::Titfortat(TitfortatParams {
            hard_offset_pp: -5.0,
            baseline: QualityBaseline::Fixed(p),
            ..TitfortatParams::new(tth, 0.05)
        }),
        ProtocolDefender::Elastic => DefenderScheme::Elastic {
            tth_pp: tth,
            k: 0.5,
        },
    };
    let mut cfg = GameConfig::new(
        defender,
        AttackerScheme::MixedEvasive {
            p,
            hi_pp: 99.0,
            lo_pp: 90.0,
        },
        BenignSource::Synthetic(SynthSpec::Uniform { lo: 0.0, hi: 1.0 }),
        seed,
    );
    cfg.round_no = 25;
    cfg.samples_per_round = 30;
    cfg.attack_ratio = AttackRatio::Fixed(0.2);
    cfg
}

/// One game as a declarative file, with absolute schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rounds")]
    pub round_no: usize,
    #[serde(default = "default_samples")]
    pub samples_per_round: usize,
    pub attack_ratio: AttackRatio,
    pub defender: DefenderScheme,
    pub attacker: AttackerScheme,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub percentile_basis: PercentileBasis,
    #[serde(default)]
    pub quality_input: QualityInput,
    #[serde(default = "default_monitor")]
    pub monitor_from: f64,
    pub reference_size: Option<usize>,
    pub output: Option<PathBuf>,
}

impl GameFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn game_config(&self, base: &Path) -> Result<GameConfig> {
        let cfg = GameConfig {
            round_no: self.round_no,
            samples_per_round: self.samples_per_round,
            attack_ratio: self.attack_ratio,
            defender: self.defender,
            attacker: self.attacker,
            seed: self.seed,
            benign: self.dataset.source(base)?,
            percentile_basis: self.percentile_basis,
            quality_input: self.quality_input,
            monitor_from: self.monitor_from,
            reference_size: self.reference_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn normalizes_to_unit_interval() {
        let f = write_tmp("0\n43170\n86340\n");
        let b = load_dataset(f.path(), true).unwrap();
        assert_eq!(b.values(), &[-1.0, 0.0, 1.0]);
        let raw = load_dataset(f.path(), false).unwrap();
        assert_eq!(raw.values(), &[0.0, 43170.0, 86340.0]);
    }

    #[test]
    fn dataset_errors() {
        let empty = write_tmp("");
        assert!(matches!(
            load_dataset(empty.path(), false),
            Err(Error::Dataset { .. })
        ));
        let bad = write_tmp("1.0\n# note\n2.0\nabc\n");
        match load_dataset(bad.path(), false) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 4),
            other => panic!("{other:?}"),
        }
        let ragged = write_tmp("1,2\n3\n");
        assert!(load_points(ragged.path(), false).is_err());
    }

    #[test]
    fn mean_stderr_values() {
        assert_eq!(mean_stderr(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn templates_follow_tth() {
        let d = DefenderTemplate::Baseline { offset_pp: 0.0 }
            .instantiate(90.0, None)
            .unwrap();
        assert_eq!(d, DefenderScheme::Baseline { threshold_pp: 90.0 });
        let a = AttackerTemplate::StaticAttacker {
            pp: None,
            offset_pp: Some(-3.0),
        };
        assert_eq!(
            a.instantiate(90.0, None).unwrap(),
            AttackerScheme::StaticAttacker { pp: 87.0 }
        );
        let both = AttackerTemplate::StaticAttacker {
            pp: Some(1.0),
            offset_pp: Some(1.0),
        };
        assert!(both.instantiate(90.0, None).is_err());
        let mixed = AttackerTemplate::MixedEvasive {
            p: None,
            hi_pp: 99.0,
            lo_pp: 90.0,
        };
        assert!(mixed.instantiate(95.0, None).is_err());
    }

    #[test]
    fn config_rejects_missing_pieces() {
        assert!(ExperimentConfig::from_toml("repetitions = 0").is_err());
        assert!(ExperimentConfig::from_toml("mode = \"theory\"").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn game_file_parses() {
        let g = GameFile::from_toml(
            r#"
            seed = 3
            round_no = 4
            samples_per_round = 40
            attack_ratio = [0.05, 0.15]
            defender = { scheme = "titfortat", tth_pp = 95.0, red = 0.05 }
            attacker = { scheme = "mixed_evasive", p = 0.5 }
            dataset = { kind = "gaussian", mean = 0.0, sd = 1.0 }
            "#,
        )
        .unwrap();
        let cfg = g.game_config(Path::new(".")).unwrap();
        assert_eq!(cfg.attack_ratio, AttackRatio::Interval([0.05, 0.15]));
        assert_eq!(crate::engine::run_game(&cfg).unwrap().rounds.len(), 4);
    }

    #[test]
    fn protocol_without_high_injection_never_triggers() {
        let cfg = redundancy_protocol(0.0, ProtocolDefender::Titfortat, 11);
        let t = crate::engine::run_game(&cfg).unwrap();
        assert_eq!(t.termination_round(), 25);
    }
}
