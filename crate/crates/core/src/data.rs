//! Domain types shared by every stage of the engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A univariate series of finite real values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("time series must have at least one value"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "time series value at position {pos} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl TryFrom<Vec<f64>> for TimeSeries {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<TimeSeries> for Vec<f64> {
    fn from(s: TimeSeries) -> Self {
        s.values
    }
}

/// A collection of equal-length series with optional ground-truth classes.
///
/// Labels are always contiguous and 0-based. When the dataset was read from a
/// file, `class_names` holds the original label token for each class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct TimeSeriesDataset {
    name: String,
    series: Vec<TimeSeries>,
    labels: Option<Vec<usize>>,
    class_names: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct RawDataset {
    name: String,
    series: Vec<TimeSeries>,
    labels: Option<Vec<usize>>,
    class_names: Option<Vec<String>>,
}

impl TryFrom<RawDataset> for TimeSeriesDataset {
    type Error = Error;

    fn try_from(raw: RawDataset) -> Result<Self> {
        let mut data = Self::new(raw.name, raw.series, raw.labels)?;
        data.class_names = raw.class_names;
        Ok(data)
    }
}

impl TimeSeriesDataset {
    pub fn new(
        name: impl Into<String>,
        series: Vec<TimeSeries>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::invalid("dataset has no series"));
        }
        let m = series[0].len();
        if let Some(i) = series.iter().position(|s| s.len() != m) {
            return Err(Error::invalid(format!(
                "series {i} has length {} but the dataset length is {m}",
                series[i].len()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != series.len() {
                return Err(Error::invalid(format!(
                    "{} labels for {} series",
                    labels.len(),
                    series.len()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            series,
            labels,
            class_names: None,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = Some(names);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    /// Number of instances.
    pub fn n(&self) -> usize {
        self.series.len()
    }

    /// Common series length.
    pub fn m(&self) -> usize {
        self.series[0].len()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Ground truth as an assignment, with k = number of distinct class ids.
    pub fn truth(&self) -> Option<ClusterAssignment> {
        let labels = self.labels.as_ref()?;
        let k = labels.iter().max().map_or(1, |&l| l + 1);
        ClusterAssignment::new(labels.clone(), k).ok()
    }

    /// Returns a copy whose series are replaced by `f` applied to each one.
    pub fn map_series<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, &[f64]) -> Vec<f64>,
    {
        let series = self
            .series
            .iter()
            .enumerate()
            .map(|(i, s)| TimeSeries::new(f(i, s.values())))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self::new(self.name.clone(), series, self.labels.clone())?;
        out.class_names = self.class_names.clone();
        Ok(out)
    }
}

/// A partition of n instances into k declared groups.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawAssignment")]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

#[derive(Deserialize)]
struct RawAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl TryFrom<RawAssignment> for ClusterAssignment {
    type Error = Error;

    fn try_from(raw: RawAssignment) -> Result<Self> {
        Self::new(raw.labels, raw.k)
    }
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("cluster count k must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!("label {bad} out of range for k={k}")));
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Member count of every declared cluster, including empty ones.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Relabels clusters in order of first appearance. Two assignments
    /// describe the same partition iff their canonical forms are equal.
    pub fn canonical(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        self.labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect()
    }

    pub fn same_partition(&self, other: &Self) -> bool {
        self.n() == other.n() && self.canonical() == other.canonical()
    }
}

/// Branch clusterings in branch order, with their violation totals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusteringEnsemble {
    clusterings: Vec<ClusterAssignment>,
    violations: Vec<f64>,
}

impl ClusteringEnsemble {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, clustering: ClusterAssignment, violations: f64) {
        self.clusterings.push(clustering);
        self.violations.push(violations);
    }

    pub fn extend(&mut self, other: ClusteringEnsemble) {
        self.clusterings.extend(other.clusterings);
        self.violations.extend(other.violations);
    }

    pub fn clusterings(&self) -> &[ClusterAssignment] {
        &self.clusterings
    }

    pub fn violations(&self) -> &[f64] {
        &self.violations
    }

    pub fn len(&self) -> usize {
        self.clusterings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusterings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClusterAssignment, f64)> {
        self.clusterings.iter().zip(self.violations.iter().copied())
    }
}

/// Engine configuration. Defaults follow the published setup: 800 branches,
/// selection rate 0.1, size bounds at 0.3 and 1.5 times the average cluster
/// size, and blocks of 8-filter width-3 convolutions with pooling size 2
/// feeding an 8-unit LSTM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub branches: usize,
    pub k: usize,
    pub selection_rate: f64,
    pub lower_mult: f64,
    pub upper_mult: f64,
    pub master_seed: u64,
    pub filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub lstm_units: usize,
    /// Sampled biases are zeroed when false.
    pub use_bias: bool,
    /// k-means restarts per branch.
    pub kmeans_n_init: usize,
}

impl Hyperparams {
    pub const DEFAULT_BRANCHES: usize = 800;
    pub const DEFAULT_SEED: u64 = 42;

    pub fn new(k: usize) -> Self {
        Self {
            branches: Self::DEFAULT_BRANCHES,
            k,
            selection_rate: 0.1,
            lower_mult: 0.3,
            upper_mult: 1.5,
            master_seed: Self::DEFAULT_SEED,
            filters: 8,
            kernel_size: 3,
            pool_size: 2,
            lstm_units: 8,
            use_bias: true,
            kmeans_n_init: 10,
        }
    }

    /// Profile for timing studies only: 100 branches, one k-means init.
    pub fn fast(k: usize) -> Self {
        Self {
            branches: 100,
            kmeans_n_init: 1,
            ..Self::new(k)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_branches(mut self, branches: usize) -> Self {
        self.branches = branches;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("branches", self.branches),
            ("k", self.k),
            ("filters", self.filters),
            ("kernel_size", self.kernel_size),
            ("pool_size", self.pool_size),
            ("lstm_units", self.lstm_units),
            ("kmeans_n_init", self.kmeans_n_init),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.selection_rate > 0.0 && self.selection_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "selection rate {} outside (0, 1]",
                self.selection_rate
            )));
        }
        if !(self.lower_mult.is_finite() && self.upper_mult.is_finite())
            || self.lower_mult <= 0.0
            || self.lower_mult >= self.upper_mult
        {
            return Err(Error::invalid(format!(
                "size multipliers must satisfy 0 < lower ({}) < upper ({})",
                self.lower_mult, self.upper_mult
            )));
        }
        // a lone branch is always kept whatever the rate
        let expected_kept = self.selection_rate * (self.branches as f64);
        if self.branches > 1 && expected_kept < 1.0 - 1e-9 {
            return Err(Error::invalid(format!(
                "selection rate {} keeps fewer than one of {} branches",
                self.selection_rate, self.branches
            )));
        }
        Ok(())
    }

    /// Lower and upper cluster-size bounds for a dataset of `n` instances.
    pub fn size_bounds(&self, n: usize) -> Result<(f64, f64)> {
        let acs = average_cluster_size(n, self.k)? as f64;
        Ok((self.lower_mult * acs, self.upper_mult * acs))
    }
}

/// `round(n / k)` with halves rounded away from zero, at least 1.
pub fn average_cluster_size(n: usize, k: usize) -> Result<usize> {
    if n == 0 || k == 0 {
        return Err(Error::invalid(format!(
            "average cluster size needs n, k > 0 (got n={n}, k={k})"
        )));
    }
    Ok(((2 * n + k) / (2 * k)).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acs_examples() {
        assert_eq!(average_cluster_size(930, 3).unwrap(), 310);
        assert_eq!(average_cluster_size(100, 8).unwrap(), 13);
        assert_eq!(average_cluster_size(5, 5).unwrap(), 1);
        assert!(average_cluster_size(0, 3).is_err());
        assert!(average_cluster_size(3, 0).is_err());
    }

    #[test]
    fn acs_matches_float_rounding() {
        for n in 1..300usize {
            for k in 1..=n.min(40) {
                let expected = ((n as f64) / (k as f64)).round().max(1.0) as usize;
                assert_eq!(average_cluster_size(n, k).unwrap(), expected, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn default_bounds_bracket_acs() {
        let hp = Hyperparams::new(3);
        hp.validate().unwrap();
        let (lr, ur) = hp.size_bounds(300).unwrap();
        assert!(lr < 100.0 && 100.0 < ur);
        assert_eq!((lr, ur), (30.0, 150.0));
    }

    #[test]
    fn series_rejects_non_finite() {
        assert!(TimeSeries::new(vec![1.0, f64::NAN]).is_err());
        assert!(TimeSeries::new(vec![]).is_err());
    }

    #[test]
    fn dataset_requires_uniform_length() {
        let a = TimeSeries::new(vec![1.0, 2.0]).unwrap();
        let b = TimeSeries::new(vec![1.0]).unwrap();
        assert!(TimeSeriesDataset::new("x", vec![a.clone(), b], None).is_err());
        assert!(TimeSeriesDataset::new("x", vec![a.clone()], Some(vec![0, 1])).is_err());
        assert!(TimeSeriesDataset::new("x", vec![a], Some(vec![0])).is_ok());
    }

    #[test]
    fn assignment_label_range() {
        assert!(ClusterAssignment::new(vec![0, 2], 2).is_err());
        assert!(ClusterAssignment::new(vec![0, 1], 0).is_err());
        let a = ClusterAssignment::new(vec![2, 2, 0], 4).unwrap();
        assert_eq!(a.sizes(), vec![1, 0, 2, 0]);
        assert_eq!(a.canonical(), vec![0, 0, 1]);
    }

    #[test]
    fn validate_rejects_bad_multipliers() {
        let mut hp = Hyperparams::new(2);
        hp.lower_mult = 2.0;
        assert!(hp.validate().is_err());
        let mut hp = Hyperparams::new(2);
        hp.selection_rate = 0.0;
        assert!(hp.validate().is_err());
    }
}
