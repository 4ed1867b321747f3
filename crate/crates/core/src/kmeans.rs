//! Lloyd's k-means with k-means++ seeding.
//!
//! Defaults mirror scikit-learn: 10 restarts, at most 300 iterations, and a
//! tolerance of 1e-4 on the total squared centroid shift relative to the mean
//! per-feature variance of the data.

use rand::Rng;

use crate::data::ClusterAssignment;
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, FeatureMatrix};
use crate::rng::{derive_seed, make_rng};

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansConfig {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            n_init: 10,
            max_iter: 300,
            tol: 1e-4,
            seed,
        }
    }

    pub fn with_n_init(mut self, n_init: usize) -> Self {
        self.n_init = n_init;
        self
    }
}

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub assignment: ClusterAssignment,
    pub centroids: FeatureMatrix,
    /// Sum of squared distances from each point to its assigned centroid.
    pub inertia: f64,
    pub n_iter: usize,
    /// Inertia after every assignment step of the winning run.
    pub inertia_history: Vec<f64>,
    /// Final inertia of every restart, in run order.
    pub run_inertias: Vec<f64>,
}

fn validate_input(x: &FeatureMatrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if x.rows() < k {
        return Err(Error::invalid(format!(
            "k-means needs at least k={k} rows, got {}",
            x.rows()
        )));
    }
    if !x.is_finite() {
        return Err(Error::invalid("k-means input contains non-finite values"));
    }
    Ok(())
}

pub fn kmeans_fit(x: &FeatureMatrix, cfg: &KmeansConfig) -> Result<KmeansResult> {
    validate_input(x, cfg.k)?;
    if cfg.n_init == 0 || cfg.max_iter == 0 {
        return Err(Error::invalid("k-means needs n_init >= 1 and max_iter >= 1"));
    }
    let tol = cfg.tol * mean_variance(x);
    let mut best: Option<KmeansResult> = None;
    let mut run_inertias = Vec::with_capacity(cfg.n_init);
    for run in 0..cfg.n_init {
        let init = kmeans_pp_init(x, cfg.k, derive_seed(cfg.seed, run as u64))?;
        let result = lloyd(x, init, cfg.max_iter, tol)?;
        run_inertias.push(result.inertia);
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    let mut best = best.expect("n_init >= 1");
    best.run_inertias = run_inertias;
    Ok(best)
}

/// D² seeding: the first centroid is a uniformly chosen row, each further one
/// a row drawn with probability proportional to its squared distance to the
/// nearest centroid chosen so far.
pub fn kmeans_pp_init(x: &FeatureMatrix, k: usize, seed: u64) -> Result<FeatureMatrix> {
    validate_input(x, k)?;
    let n = x.rows();
    let mut rng = make_rng(seed);
    let mut centroids = FeatureMatrix::zeros(k, x.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut closest: Vec<f64> = x.iter_rows().map(|r| squared_distance(r, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in closest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the running sum
            chosen.unwrap_or_else(|| closest.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, d) in closest.iter_mut().enumerate() {
            *d = d.min(squared_distance(x.row(i), x.row(pick)));
        }
    }
    Ok(centroids)
}

/// Lloyd iterations from the given centroids. `tol` is absolute: iteration
/// stops once the total squared centroid shift is at most `tol` or the labels
/// stop changing.
pub fn lloyd(x: &FeatureMatrix, init: FeatureMatrix, max_iter: usize, tol: f64) -> Result<KmeansResult> {
    let k = init.rows();
    validate_input(x, k)?;
    if init.cols() != x.cols() {
        return Err(Error::invalid("initial centroids have the wrong dimension"));
    }
    let mut centroids = init;
    let mut labels = vec![0usize; x.rows()];
    let mut dists = vec![0.0; x.rows()];
    let mut history = Vec::new();
    let mut n_iter = 0;
    let mut prev_labels: Option<Vec<usize>> = None;
    while n_iter < max_iter {
        assign(x, &centroids, &mut labels, &mut dists);
        repair_empty(x, &mut centroids, &mut labels, &mut dists);
        history.push(dists.iter().sum());
        let updated = means(x, &labels, k, &centroids);
        let shift: f64 = (0..k)
            .map(|c| squared_distance(updated.row(c), centroids.row(c)))
            .sum();
        centroids = updated;
        n_iter += 1;
        let stable = prev_labels.as_ref() == Some(&labels);
        if stable || shift <= tol {
            break;
        }
        prev_labels = Some(labels.clone());
    }
    assign(x, &centroids, &mut labels, &mut dists);
    repair_empty(x, &mut centroids, &mut labels, &mut dists);
    let inertia: f64 = dists.iter().sum();
    history.push(inertia);
    Ok(KmeansResult {
        assignment: ClusterAssignment::new(labels, k)?,
        centroids,
        inertia,
        n_iter,
        inertia_history: history,
        run_inertias: vec![inertia],
    })
}

/// Nearest centroid per row; ties go to the lowest centroid index.
fn assign(x: &FeatureMatrix, centroids: &FeatureMatrix, labels: &mut [usize], dists: &mut [f64]) {
    for (i, row) in x.iter_rows().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..centroids.rows() {
            let d = squared_distance(row, centroids.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
    }
}

/// Gives every empty cluster the point farthest from its centroid, taken
/// from a cluster with more than one member.
fn repair_empty(x: &FeatureMatrix, centroids: &mut FeatureMatrix, labels: &mut [usize], dists: &mut [f64]) {
    let k = centroids.rows();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..labels.len() {
            if sizes[labels[i]] > 1 && far.is_none_or(|f| dists[i] > dists[f]) {
                far = Some(i);
            }
        }
        let i = far.expect("n >= k guarantees a cluster with spare members");
        sizes[labels[i]] -= 1;
        sizes[empty] = 1;
        labels[i] = empty;
        dists[i] = 0.0;
        centroids.row_mut(empty).copy_from_slice(x.row(i));
    }
}

fn means(x: &FeatureMatrix, labels: &[usize], k: usize, previous: &FeatureMatrix) -> FeatureMatrix {
    let d = x.cols();
    let mut sums = FeatureMatrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (row, &l) in x.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(row) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            sums.row_mut(c).copy_from_slice(previous.row(c));
            continue;
        }
        let inv = counts[c] as f64;
        for s in sums.row_mut(c) {
            *s /= inv;
        }
    }
    sums
}

fn mean_variance(x: &FeatureMatrix) -> f64 {
    let (n, d) = (x.rows(), x.cols());
    if n == 0 || d == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 0..d {
        let mean = x.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64;
        total += x.iter_rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
    }
    total / d as f64
}
