//! Centroid-based anomaly detection.
//!
//! Training partitions benign embeddings into `k` clusters and keeps the
//! centroids plus the mean nearest-centroid distance `d_mean` over the
//! training set. Scoring takes the Euclidean distance to the nearest
//! centroid, normalizes by `d_mean`, and flags the entity when the
//! normalized score exceeds the threshold `theta`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{euclidean, Matrix};
use crate::seed::{self, stream};

const MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    /// k × d centroid matrix.
    pub centroids: Matrix,
    /// Mean nearest-centroid distance over the training set.
    pub d_mean: f64,
    /// Verdict threshold on the normalized score.
    pub theta: f64,
    pub k: usize,
    /// Stored training summary; `d_mean` must always equal
    /// `train_dist_sum / train_count`.
    pub train_dist_sum: f64,
    pub train_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Benign,
    Anomalous,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Benign => "benign",
            Verdict::Anomalous => "anomalous",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    pub id: String,
    /// Euclidean distance to the nearest centroid.
    pub raw: f64,
    /// raw / d_mean.
    pub normalized: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
}

/// Per-fit diagnostics: within-cluster sum of squares after each Lloyd
/// iteration of the winning restart, and how many empty-cluster reseeds
/// happened.
#[derive(Debug, Clone, Default)]
pub struct FitTrace {
    pub wcss_history: Vec<f64>,
    pub reseeds: usize,
    pub restarts_run: usize,
}

/// Fit k centroids on benign embeddings. Runs a fixed number of seeded
/// k-means++ restarts and keeps the lowest-WCSS result, so small fixtures
/// land in the quality regime a brute-force reference reaches. `theta`
/// starts at the default calibration (0.995 quantile of training scores,
/// floored at 1.0); use [`calibrate_theta`] to re-derive it from held-out
/// data.
pub fn fit(embeddings: &Matrix, k: usize, seed: u64) -> Result<CentroidModel> {
    Ok(fit_detailed(embeddings, k, seed)?.0)
}

pub fn fit_detailed(embeddings: &Matrix, k: usize, seed: u64) -> Result<(CentroidModel, FitTrace)> {
    let n = embeddings.rows;
    if k == 0 {
        return Err(Error::Usage("k must be at least 1".into()));
    }
    if n < k {
        return Err(Error::Data(format!(
            "k-means needs at least k={k} points, got {n}"
        )));
    }
    let distinct = count_distinct(embeddings);
    if distinct < k {
        return Err(Error::Data(format!(
            "only {distinct} distinct points for k={k} clusters"
        )));
    }

    // Small inputs get more restarts; individual k-means++ runs can still
    // land in a poor local optimum there, and restarts are cheap.
    let restarts = if n <= 64 { 40 } else { 10 };
    let mut best: Option<(Matrix, f64, FitTrace)> = None;
    for r in 0..restarts {
        let (centroids, wcss, trace) =
            lloyd(embeddings, k, seed::derive2(seed, stream::KMEANS, r as u64));
        if best.as_ref().is_none_or(|(_, bw, _)| wcss < *bw) {
            best = Some((centroids, wcss, trace));
        }
    }
    let (centroids, _, mut trace) = best.unwrap();
    trace.restarts_run = restarts;

    let mut dist_sum = 0.0;
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let d = nearest_distance(&centroids, embeddings.row(i));
        dist_sum += d;
        scores.push(d);
    }
    let d_mean = dist_sum / n as f64;
    if d_mean <= 0.0 {
        return Err(Error::Numeric(
            "degenerate training set: mean nearest-centroid distance is zero".into(),
        ));
    }
    let mut normalized: Vec<f64> = scores.iter().map(|s| s / d_mean).collect();
    normalized.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let theta = nearest_rank_quantile(&normalized, 0.995).max(1.0);

    Ok((
        CentroidModel {
            centroids,
            d_mean,
            theta,
            k,
            train_dist_sum: dist_sum,
            train_count: n,
        },
        trace,
    ))
}

fn count_distinct(x: &Matrix) -> usize {
    let mut rows: Vec<&[f64]> = (0..x.rows).map(|i| x.row(i)).collect();
    rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rows.dedup();
    rows.len()
}

fn nearest_distance(centroids: &Matrix, x: &[f64]) -> f64 {
    (0..centroids.rows)
        .map(|j| euclidean(centroids.row(j), x))
        .fold(f64::INFINITY, f64::min)
}

fn assign(centroids: &Matrix, x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for j in 0..centroids.rows {
        let d = euclidean(centroids.row(j), x);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// One seeded k-means++ initialization followed by Lloyd iterations until
/// the assignment fixpoint or the iteration cap.
fn lloyd(x: &Matrix, k: usize, seed: u64) -> (Matrix, f64, FitTrace) {
    let n = x.rows;
    let d = x.cols;
    let mut rng = seed::rng(seed);

    // k-means++: D²-weighted seeding.
    let mut centroids = Matrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| {
            let dd = euclidean(x.row(i), centroids.row(0));
            dd * dd
        })
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for i in 0..n {
            let dd = euclidean(x.row(i), centroids.row(c));
            d2[i] = d2[i].min(dd * dd);
        }
    }

    let mut assignments = vec![usize::MAX; n];
    let mut trace = FitTrace::default();
    for _ in 0..MAX_ITERS {
        let new_assignments: Vec<usize> = (0..n).map(|i| assign(&centroids, x.row(i))).collect();
        let wcss: f64 = (0..n)
            .map(|i| {
                let dd = euclidean(x.row(i), centroids.row(new_assignments[i]));
                dd * dd
            })
            .sum();
        trace.wcss_history.push(wcss);
        let converged = new_assignments == assignments;
        assignments = new_assignments;
        if converged {
            break;
        }
        // update step
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; n.max(k)];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            let row = sums.row_mut(a);
            for (s, v) in row.iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Reseed an emptied cluster to the point farthest from its
                // current centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = euclidean(x.row(a), centroids.row(assignments[a]));
                        let db = euclidean(x.row(b), centroids.row(assignments[b]));
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids.row_mut(j).copy_from_slice(x.row(far));
                trace.reseeds += 1;
            } else {
                let row = sums.row(j).to_vec();
                let c = counts[j] as f64;
                for (dst, s) in centroids.row_mut(j).iter_mut().zip(row) {
                    *dst = s / c;
                }
            }
        }
    }
    let wcss = *trace.wcss_history.last().unwrap();
    (centroids, wcss, trace)
}

/// Score one embedding against the model.
pub fn score(model: &CentroidModel, id: &str, x: &[f64]) -> ScoredEntity {
    let raw = nearest_distance(&model.centroids, x);
    let normalized = raw / model.d_mean;
    ScoredEntity {
        id: id.to_string(),
        raw,
        normalized,
        verdict: if normalized > model.theta {
            Verdict::Anomalous
        } else {
            Verdict::Benign
        },
    }
}

/// Elementwise scoring plus a distribution summary of the normalized scores.
pub fn score_batch(
    model: &CentroidModel,
    embeddings: &Matrix,
    ids: &[String],
) -> (Vec<ScoredEntity>, Option<ScoreSummary>) {
    assert_eq!(embeddings.rows, ids.len(), "ids and rows must align");
    let scored: Vec<ScoredEntity> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| score(model, id, embeddings.row(i)))
        .collect();
    let summary = if scored.is_empty() {
        None
    } else {
        let mut vals: Vec<f64> = scored.iter().map(|s| s.normalized).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(ScoreSummary {
            count: vals.len(),
            min: vals[0],
            max: vals[vals.len() - 1],
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
            p50: nearest_rank_quantile(&vals, 0.5),
            p90: nearest_rank_quantile(&vals, 0.9),
            p95: nearest_rank_quantile(&vals, 0.95),
            p99: nearest_rank_quantile(&vals, 0.99),
        })
    };
    (scored, summary)
}

/// Threshold calibration: the `target_quantile` empirical quantile of the
/// validation set's normalized scores, floored at 1.0 so a point at the
/// average training distance is never anomalous.
pub fn calibrate_theta(
    model: &CentroidModel,
    validation: &Matrix,
    target_quantile: f64,
) -> Result<f64> {
    if validation.rows == 0 {
        return Err(Error::Data("theta calibration needs a nonempty validation set".into()));
    }
    if !(0.0..=1.0).contains(&target_quantile) || target_quantile == 0.0 {
        return Err(Error::Usage(format!(
            "quantile must be in (0,1], got {target_quantile}"
        )));
    }
    let mut vals: Vec<f64> = (0..validation.rows)
        .map(|i| nearest_distance(&model.centroids, validation.row(i)) / model.d_mean)
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(nearest_rank_quantile(&vals, target_quantile).max(1.0))
}

/// Nearest-rank quantile of an ascending-sorted slice.
pub fn nearest_rank_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
