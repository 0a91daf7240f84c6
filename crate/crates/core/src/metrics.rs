//! Evaluation metrics: clustering quality, leftover poison, elastic cost and
//! termination rounds.
//!
//! ## Elastic cost
//!
//! The cost of a round is the gap between the collector's soft trim and the
//! poison position, accrued while the pair of recurrences
//!
//! ```text
//! T(i+1) = Tth + k (A(i) − Tth − 1)
//! A(i+1) = Tth − 3 + k (T(i) − Tth)
//! ```
//!
//! started from `(T(1), A(1)) = (Tth − 3, Tth + 1)` settles. Odd rounds cost
//! nothing; round `2m` costs `A(2m − 1) − A(2m + 1)`, with `A(1)` replaced by
//! `Tth`. The sum telescopes to
//!
//! ```text
//! C(n) = Tth − A(2⌊n/2⌋ + 1)        (C(1) = 0)
//! ```
//!
//! which converges to `Tth − A* = (3 + k²) / (1 − k²)`. The roundwise cost is
//! `C(n) / n`.
//!
//! ```
//! use trimgame::metrics::{cumulative_cost_limit, roundwise_cost};
//!
//! assert!((cumulative_cost_limit(0.5).unwrap() - 13.0 / 3.0).abs() < 1e-12);
//! assert!((roundwise_cost(95.0, 0.5, 5).unwrap() - 0.8).abs() < 1e-12);
//! assert!((roundwise_cost(95.0, 0.1, 5).unwrap() - 0.608).abs() < 1e-12);
//! ```

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::engine::GameTrace;
use crate::error::{Error, Result};
use crate::strategies::{elastic_initial, elastic_step};

#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    points: Vec<Vec<f64>>,
}

impl Centroids {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::domain("need at least one centroid"));
        };
        let dim = first.len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::domain("centroids differ in dimension"));
        }
        Ok(Self { points })
    }

    /// One-dimensional centroids.
    pub fn scalar(centers: &[f64]) -> Result<Self> {
        Self::new(centers.iter().map(|&c| vec![c]).collect())
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.points.iter().enumerate() {
            let d = sq_dist(x, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sse(points: &[Vec<f64>], centroids: &Centroids) -> Result<f64> {
    if points.iter().any(|p| p.len() != centroids.dim()) {
        return Err(Error::domain("point and centroid dimensions differ"));
    }
    Ok(points.iter().map(|p| centroids.nearest(p).1).sum())
}

pub fn kmeans_fit(points: &[Vec<f64>], k: usize, max_iters: usize, seed: u64) -> Result<Centroids> {
    kmeans_fit_traced(points, k, max_iters, seed).map(|(c, _)| c)
}

/// Like [`kmeans_fit`], also returning the SSE after every Lloyd iteration.
pub fn kmeans_fit_traced(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(Centroids, Vec<f64>)> {
    if k == 0 || points.len() < k {
        return Err(Error::domain(format!(
            "k-means with k={k} on {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::domain("points differ in dimension"));
    }

    // farthest-point initialization from a seeded first pick
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut dmin: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let far = (0..points.len()).fold(0, |b, i| if dmin[i] > dmin[b] { i } else { b });
        let c = points[far].clone();
        for (d, p) in dmin.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }

    let mut cents = Centroids { points: centers };
    let mut assign: Vec<usize> = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let j = cents.nearest(p).0;
            changed |= *a != j;
            *a = j;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&j, p) in assign.iter().zip(points) {
            counts[j] += 1;
            for (s, x) in sums[j].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                cents.points[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        trace.push(sse(points, &cents)?);
        if !changed {
            break;
        }
    }
    Ok((cents, trace))
}

/// Total Euclidean distance under the cheapest one-to-one matching of fitted
/// to reference centroids. Brute force, so limited to `k <= 8`.
pub fn centroid_distance(fit: &Centroids, truth: &Centroids) -> Result<f64> {
    if fit.k() != truth.k() || fit.dim() != truth.dim() {
        return Err(Error::domain(format!(
            "cannot match {} centroids of dim {} against {} of dim {}",
            fit.k(),
            fit.dim(),
            truth.k(),
            truth.dim()
        )));
    }
    let k = fit.k();
    if k > 8 {
        return Err(Error::domain(format!(
            "centroid matching supports k <= 8, got {k}"
        )));
    }
    let cost: Vec<Vec<f64>> = fit
        .points
        .iter()
        .map(|a| truth.points.iter().map(|b| sq_dist(a, b).sqrt()).collect())
        .collect();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        best = best.min(c);
    });
    Ok(best)
}

fn permute(p: &mut [usize], at: usize, visit: &mut impl FnMut(&[usize])) {
    if at == p.len() {
        visit(p);
        return;
    }
    for i in at..p.len() {
        p.swap(at, i);
        permute(p, at + 1, visit);
        p.swap(at, i);
    }
}

/// Share of poison among everything kept, pooled over rounds; 0 when nothing
/// was kept.
pub fn untrimmed_poison_fraction(trace: &GameTrace) -> f64 {
    let (poison, total) = trace.rounds.iter().fold((0usize, 0usize), |(p, t), r| {
        (p + r.kept_poison, t + r.kept_poison + r.kept_benign)
    });
    if total == 0 {
        0.0
    } else {
        poison as f64 / total as f64
    }
}

fn check_k(k: f64) -> Result<()> {
    if (0.0..1.0).contains(&k) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "response intensity {k} outside [0, 1)"
        )))
    }
}

pub fn cumulative_cost(tth_pp: f64, k: f64, round_no: usize) -> Result<f64> {
    check_k(k)?;
    if round_no == 0 {
        return Err(Error::domain("round_no must be >= 1"));
    }
    if round_no < 2 {
        return Ok(0.0);
    }
    let mut ta = elastic_initial(tth_pp);
    for _ in 0..2 * (round_no / 2) {
        ta = elastic_step(tth_pp, k, ta);
    }
    Ok(tth_pp - ta.1)
}

pub fn roundwise_cost(tth_pp: f64, k: f64, round_no: usize) -> Result<f64> {
    Ok(cumulative_cost(tth_pp, k, round_no)? / round_no as f64)
}

/// `lim C(n) = (3 + k²) / (1 − k²)`.
pub fn cumulative_cost_limit(k: f64) -> Result<f64> {
    check_k(k)?;
    Ok((3.0 + k * k) / (1.0 - k * k))
}

/// Mean termination round; untriggered games count at their round cap.
pub fn termination_stats(traces: &[GameTrace]) -> Result<f64> {
    if traces.is_empty() {
        return Err(Error::domain("termination statistics of no games"));
    }
    Ok(traces
        .iter()
        .map(|t| t.termination_round() as f64)
        .sum::<f64>()
        / traces.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MetricReport {
    pub sse: f64,
    pub centroid_distance: f64,
    pub untrimmed_fraction: f64,
    pub roundwise_cost_pp: f64,
    pub avg_termination_round: f64,
}

impl MetricReport {
    pub const CSV_HEADER: [&'static str; 5] = [
        "sse",
        "centroid_distance",
        "untrimmed_fraction",
        "roundwise_cost_pp",
        "avg_termination_round",
    ];

    pub fn write_csv<W: Write>(reports: &[MetricReport], out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in reports {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RoundRecord;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn single_cluster_is_mean() {
        let p = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let c = kmeans_fit(&p, 1, 10, 0).unwrap();
        assert_eq!(c.points()[0], vec![3.0, 3.0]);
    }

    #[test]
    fn two_separated_clusters() {
        let xs = [-1.2, -1.0, -0.9, -1.1, -0.8, 1.0, 1.3, 0.9, 1.1, 1.2];
        let mut centers: Vec<f64> = kmeans_fit(&pts(&xs), 2, 50, 4)
            .unwrap()
            .points()
            .iter()
            .map(|p| p[0])
            .collect();
        centers.sort_by(f64::total_cmp);
        assert!((centers[0] + 1.0).abs() < 1e-9);
        assert!((centers[1] - 1.1).abs() < 1e-9);
    }

    #[test]
    fn identical_points_zero_sse() {
        let p = pts(&[2.5; 6]);
        let c = kmeans_fit(&p, 1, 5, 1).unwrap();
        assert_eq!(sse(&p, &c).unwrap(), 0.0);
        assert!(kmeans_fit(&p[..1], 2, 5, 1).is_err());
    }

    #[test]
    fn sse_hand_values() {
        let c = Centroids::new(vec![vec![0.0, 0.0], vec![4.0, 0.0]]).unwrap();
        assert_eq!(sse(&[vec![0.0, 2.0]], &c).unwrap(), 4.0);
        let p = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![3.0, 1.0],
            vec![5.0, 0.0],
            vec![2.0, 0.0],
        ];
        // 1 + 1 + 2 + 1 + 4 (the last point is equidistant and scores 4 either way)
        assert_eq!(sse(&p, &c).unwrap(), 9.0);
        assert!(sse(&[vec![1.0]], &c).is_err());
    }

    #[test]
    fn matching_distances() {
        let t = Centroids::new(vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]]).unwrap();
        let perm = Centroids::new(vec![vec![0.0, 10.0], vec![0.0, 0.0], vec![10.0, 0.0]]).unwrap();
        assert_eq!(centroid_distance(&perm, &t).unwrap(), 0.0);
        let moved = Centroids::new(vec![vec![3.0, 4.0], vec![10.0, 0.0], vec![0.0, 10.0]]).unwrap();
        assert_eq!(centroid_distance(&moved, &t).unwrap(), 5.0);
        assert!(centroid_distance(&Centroids::scalar(&[1.0]).unwrap(), &t).is_err());
    }

    fn trace_of(rows: &[(usize, usize)], trigger: Option<usize>) -> GameTrace {
        let rounds: Vec<RoundRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, &(kb, kp))| RoundRecord {
                round: i + 1,
                threshold_pp: 95.0,
                injection_pp: 90.0,
                cutoff: 1.0,
                qe: 1.0,
                kept_benign: kb,
                kept_poison: kp,
                removed_benign: 0,
                removed_poison: 0,
                u_a_increment: 0.0,
                u_c_increment: 0.0,
            })
            .collect();
        GameTrace {
            u_a: vec![0.0; rounds.len()],
            u_c: vec![0.0; rounds.len()],
            round_no: 25,
            rounds,
            trigger_round: trigger,
        }
    }

    #[test]
    fn pooled_fraction() {
        assert_eq!(
            untrimmed_poison_fraction(&trace_of(&[(10, 0), (5, 0)], None)),
            0.0
        );
        assert_eq!(
            untrimmed_poison_fraction(&trace_of(&[(6, 2), (2, 0)], None)),
            0.2
        );
        assert_eq!(untrimmed_poison_fraction(&trace_of(&[(0, 0)], None)), 0.0);
    }

    #[test]
    fn termination_mean() {
        assert_eq!(
            termination_stats(&vec![trace_of(&[], None); 3]).unwrap(),
            25.0
        );
        assert_eq!(termination_stats(&[trace_of(&[], Some(7))]).unwrap(), 7.0);
        assert!(termination_stats(&[]).is_err());
    }

    #[test]
    fn cost_matches_gap_sum() {
        for k in [0.0, 0.1, 0.5, 0.9] {
            // attacker positions A(1), A(2), ... from the raw recurrences
            let mut a = vec![f64::NAN];
            let (mut t, mut x) = (92.0, 96.0);
            for _ in 0..60 {
                a.push(x);
                (t, x) = (95.0 + k * (x - 96.0), 92.0 + k * (t - 95.0));
            }
            let mut total = 0.0;
            for n in 1..=50usize {
                if n % 2 == 0 {
                    let before = if n == 2 { 95.0 } else { a[n - 1] };
                    total += before - a[n + 1];
                }
                assert!(
                    (cumulative_cost(95.0, k, n).unwrap() - total).abs() < 1e-12,
                    "k={k} n={n}"
                );
            }
            let limit = cumulative_cost_limit(k).unwrap();
            assert!((cumulative_cost(95.0, k, 4001).unwrap() - limit).abs() < 1e-9);
        }
    }

    #[test]
    fn cost_limits_and_decay() {
        assert!((cumulative_cost_limit(0.1).unwrap() - 3.040404).abs() < 1e-6);
        for n in [2usize, 5, 10, 25] {
            let a = roundwise_cost(95.0, 0.5, n).unwrap();
            assert!(roundwise_cost(95.0, 0.5, 2 * n).unwrap() < a);
        }
        assert!(roundwise_cost(95.0, 1.0, 5).is_err());
        assert_eq!(roundwise_cost(95.0, 0.5, 1).unwrap(), 0.0);
    }

    #[test]
    fn metric_report_csv() {
        let mut buf = Vec::new();
        MetricReport::write_csv(&[MetricReport::default()], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s.lines().next().unwrap(),
            MetricReport::CSV_HEADER.join(",")
        );
        assert_eq!(s.lines().count(), 2);
    }
}
