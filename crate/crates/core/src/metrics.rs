//! Evaluation utilities: Rand Index, the ensemble-size bound, and WCSS /
//! elbow statistics.

use crate::data::{ClusterAssignment, Hyperparams, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::pipeline;

/// Fraction of instance pairs on which two partitions agree, via the
/// contingency table.
pub fn rand_index(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<f64> {
    let n = a.n();
    if n != b.n() {
        return Err(Error::invalid(format!(
            "rand index of partitions over {n} and {} instances",
            b.n()
        )));
    }
    if n < 2 {
        return Err(Error::invalid("rand index needs at least two instances"));
    }
    let (ka, kb) = (a.k(), b.k());
    let mut table = vec![0u64; ka * kb];
    for (&la, &lb) in a.labels().iter().zip(b.labels()) {
        table[la * kb + lb] += 1;
    }
    let pairs = |x: u64| x * x.saturating_sub(1) / 2;
    let both: u64 = table.iter().map(|&c| pairs(c)).sum();
    let same_a: u64 = a.sizes().into_iter().map(|s| pairs(s as u64)).sum();
    let same_b: u64 = b.sizes().into_iter().map(|s| pairs(s as u64)).sum();
    let total = pairs(n as u64);
    let agree = total + 2 * both - same_a - same_b;
    Ok(agree as f64 / total as f64)
}

/// Ensemble size needed for a same-class pair to be co-clustered with
/// confidence `1 - alpha` when a fraction `gamma` of members are relevant:
/// `-2 ln(alpha) / gamma^2`.
pub fn ensemble_size_lower_bound(alpha: f64, gamma: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma {gamma} outside (0, 1]")));
    }
    Ok(-2.0 * alpha.ln() / (gamma * gamma))
}

/// Within-cluster sum of squared distances to each cluster's mean.
pub fn wcss(x: &FeatureMatrix, assignment: &ClusterAssignment) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::invalid("wcss of an empty matrix"));
    }
    if x.rows() != assignment.n() {
        return Err(Error::invalid(format!(
            "wcss: {} rows but {} labels",
            x.rows(),
            assignment.n()
        )));
    }
    let d = x.cols();
    let k = assignment.k();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (row, &l) in x.iter_rows().zip(assignment.labels()) {
        counts[l] += 1;
        for (s, v) in sums[l * d..(l + 1) * d].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            for s in &mut sums[c * d..(c + 1) * d] {
                *s /= count as f64;
            }
        }
    }
    Ok(x
        .iter_rows()
        .zip(assignment.labels())
        .map(|(row, &l)| {
            row.iter()
                .zip(&sums[l * d..(l + 1) * d])
                .map(|(v, m)| (v - m) * (v - m))
                .sum::<f64>()
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowCurve {
    pub ks: Vec<usize>,
    pub wcss: Vec<f64>,
}

impl ElbowCurve {
    /// Discrete curvature `w[i-1] - 2 w[i] + w[i+1]` at each interior k, as
    /// `(k, value)` pairs.
    pub fn second_differences(&self) -> Vec<(usize, f64)> {
        (1..self.wcss.len().saturating_sub(1))
            .map(|i| (self.ks[i], self.wcss[i - 1] - 2.0 * self.wcss[i] + self.wcss[i + 1]))
            .collect()
    }

    /// The k with the largest second difference; earliest k wins ties.
    pub fn elbow(&self) -> Option<usize> {
        self.second_differences()
            .into_iter()
            .fold(None, |best: Option<(usize, f64)>, (k, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k, v)),
            })
            .map(|(k, _)| k)
    }
}

/// Runs the pipeline once per k and scores each consensus by WCSS in a
/// fixed, k-independent feature space (see [`pipeline::elbow_feature_space`]).
pub fn elbow_curve(dataset: &TimeSeriesDataset, hp: &Hyperparams, k_range: &[usize]) -> Result<ElbowCurve> {
    if k_range.is_empty() {
        return Err(Error::invalid("empty k range"));
    }
    if k_range.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("k range must be strictly ascending"));
    }
    let max_k = *k_range.last().expect("non-empty");
    if max_k > dataset.n() || k_range[0] == 0 {
        return Err(Error::invalid(format!(
            "k range must lie within 1..={} instances",
            dataset.n()
        )));
    }
    let space = pipeline::elbow_feature_space(dataset, hp)?;
    let assignments = pipeline::run_multi_k(dataset, hp, k_range)?;
    let wcss = assignments
        .iter()
        .map(|a| wcss(&space, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(ElbowCurve {
        ks: k_range.to_vec(),
        wcss,
    })
}
