//! Cluster-size based filtering of branch clusterings.

use crate::data::{ClusterAssignment, ClusteringEnsemble};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub lower: f64,
    pub upper: f64,
    pub selection_rate: f64,
    pub branches: usize,
}

impl SelectionConfig {
    /// Guaranteed survivor count `round(sr * B)`, at least 1.
    pub fn quota(&self) -> usize {
        ((self.selection_rate * self.branches as f64).round() as usize).max(1)
    }
}

/// Total amount by which cluster sizes fall below `lower` or exceed `upper`.
pub fn violations_from_sizes(sizes: &[usize], lower: f64, upper: f64) -> f64 {
    sizes
        .iter()
        .map(|&s| {
            let s = s as f64;
            if s > upper {
                s - upper
            } else if s < lower {
                lower - s
            } else {
                0.0
            }
        })
        .sum()
}

/// Violation total over all `k` declared clusters; empty clusters count as
/// `lower` each.
pub fn count_violations(assignment: &ClusterAssignment, lower: f64, upper: f64) -> f64 {
    violations_from_sizes(&assignment.sizes(), lower, upper)
}

/// Number of clusterings kept from an ensemble of `len` with `zero_count`
/// violation-free members.
pub fn effective_size(cfg: &SelectionConfig, zero_count: usize, len: usize) -> usize {
    zero_count.max(cfg.quota()).clamp(1, len.max(1))
}

/// Indices of the kept clusterings, lowest violations first, ties in branch
/// order.
pub fn select_indices(violations: &[f64], cfg: &SelectionConfig) -> Result<Vec<usize>> {
    if violations.is_empty() {
        return Err(Error::invalid("cannot select from an empty ensemble"));
    }
    let zero = violations.iter().filter(|&&v| v == 0.0).count();
    let keep = effective_size(cfg, zero, violations.len());
    let mut order: Vec<usize> = (0..violations.len()).collect();
    order.sort_by(|&a, &b| violations[a].total_cmp(&violations[b]));
    order.truncate(keep);
    Ok(order)
}

/// Recomputes every member's violations under `cfg` and keeps the best.
pub fn select(ensemble: &ClusteringEnsemble, cfg: &SelectionConfig) -> Result<Vec<ClusterAssignment>> {
    let violations: Vec<f64> = ensemble
        .clusterings()
        .iter()
        .map(|c| count_violations(c, cfg.lower, cfg.upper))
        .collect();
    let picked = select_indices(&violations, cfg)?;
    Ok(picked
        .into_iter()
        .map(|i| ensemble.clusterings()[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rate: f64, branches: usize) -> SelectionConfig {
        SelectionConfig {
            lower: 5.0,
            upper: 50.0,
            selection_rate: rate,
            branches,
        }
    }

    #[test]
    fn worked_example() {
        assert_eq!(violations_from_sizes(&[40, 52], 5.0, 50.0), 2.0);
        let labels: Vec<usize> = (0..92).map(|i| usize::from(i >= 40)).collect();
        let a = ClusterAssignment::new(labels, 2).unwrap();
        assert_eq!(count_violations(&a, 5.0, 50.0), 2.0);
    }

    #[test]
    fn within_bounds_and_both_sides() {
        assert_eq!(violations_from_sizes(&[5, 50, 20], 5.0, 50.0), 0.0);
        assert_eq!(violations_from_sizes(&[2, 90], 5.0, 50.0), 43.0);
    }

    #[test]
    fn empty_declared_cluster_counts_lower_bound() {
        let a = ClusterAssignment::new(vec![0; 10], 2).unwrap();
        assert_eq!(count_violations(&a, 3.0, 15.0), 3.0);
    }

    #[test]
    fn fractional_bounds() {
        assert!((violations_from_sizes(&[1, 9], 1.5, 7.5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quota_with_defaults() {
        assert_eq!(cfg(0.1, 800).quota(), 80);
        let violations: Vec<f64> = (0..800).map(|i| (i % 37) as f64 + 1.0).collect();
        let picked = select_indices(&violations, &cfg(0.1, 800)).unwrap();
        assert_eq!(picked.len(), 80);
        let worst_kept = picked.iter().map(|&i| violations[i]).fold(0.0, f64::max);
        let kept: std::collections::HashSet<_> = picked.iter().collect();
        assert!((0..800)
            .filter(|i| !kept.contains(i))
            .all(|i| violations[i] >= worst_kept));
    }

    #[test]
    fn all_zero_keeps_everything() {
        let picked = select_indices(&[0.0; 12], &cfg(0.1, 12)).unwrap();
        assert_eq!(picked, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn hand_trace() {
        let c = SelectionConfig {
            selection_rate: 0.4,
            branches: 5,
            ..cfg(0.1, 5)
        };
        let picked = select_indices(&[3.0, 0.0, 2.0, 0.0, 1.0], &c).unwrap();
        assert_eq!(picked, vec![1, 3]);
    }

    #[test]
    fn ties_keep_branch_order() {
        let picked = select_indices(&[1.0, 2.0, 1.0, 1.0, 0.5], &cfg(0.6, 5)).unwrap();
        assert_eq!(picked, vec![4, 0, 2]);
    }

    #[test]
    fn quota_clamped_to_ensemble() {
        let picked = select_indices(&[4.0, 1.0], &cfg(0.1, 800)).unwrap();
        assert_eq!(picked, vec![1, 0]);
        assert!(select_indices(&[], &cfg(0.1, 10)).is_err());
        // sr·B rounds to zero: one survivor
        assert_eq!(select_indices(&[2.0], &cfg(0.1, 1)).unwrap(), vec![0]);
    }
}
