//! End-to-end orchestration: B independent branches of random feature
//! extraction and k-means, size-based selection, then consensus.
//!
//! Branch `i` derives all of its randomness from `branch_seed(master, i)`,
//! so any split of the branch range, run in any order or on any number of
//! threads, reproduces the same ensemble.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{ClusterAssignment, ClusteringEnsemble, Hyperparams, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::feature_extractor::{extract_features, make_block_params};
use crate::hbgf::consensus;
use crate::kmeans::{kmeans_fit, KmeansConfig};
use crate::matrix::FeatureMatrix;
use crate::metrics::rand_index;
use crate::rng::{SeedTree, Stream};
use crate::selection::{count_violations, select_indices, SelectionConfig};

/// Number of branches whose features span the elbow scoring space.
pub const ELBOW_BRANCHES: usize = 16;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub assignment: ClusterAssignment,
    pub rand_index_vs_truth: Option<f64>,
    /// `(violations, branch count)`, ascending by violations.
    pub violation_histogram: Vec<(f64, usize)>,
    pub selected_count: usize,
    pub wall_time_ms: u64,
    pub hyperparams: Hyperparams,
}

fn check_inputs(dataset: &TimeSeriesDataset, hp: &Hyperparams) -> Result<()> {
    hp.validate()?;
    if dataset.n() < hp.k {
        return Err(Error::invalid(format!(
            "{} instances cannot form k={} clusters",
            dataset.n(),
            hp.k
        )));
    }
    if dataset.m() < 2 {
        return Err(Error::invalid(format!("series length {} < 2", dataset.m())));
    }
    Ok(())
}

pub fn selection_config(dataset: &TimeSeriesDataset, hp: &Hyperparams) -> Result<SelectionConfig> {
    let (lower, upper) = hp.size_bounds(dataset.n())?;
    Ok(SelectionConfig {
        lower,
        upper,
        selection_rate: hp.selection_rate,
        branches: hp.branches,
    })
}

/// Features of branch `index` for every instance.
pub fn branch_features(dataset: &TimeSeriesDataset, hp: &Hyperparams, index: usize) -> Result<FeatureMatrix> {
    let seeds = SeedTree::new(hp.master_seed).branch(index);
    let params = make_block_params(seeds.stream(Stream::Weights).seed(), dataset.m(), hp)?;
    extract_features(dataset, &params)
}

fn cluster_features(features: &FeatureMatrix, hp: &Hyperparams, k: usize, index: usize) -> Result<ClusterAssignment> {
    let seed = SeedTree::new(hp.master_seed)
        .branch(index)
        .stream(Stream::Kmeans)
        .seed();
    let cfg = KmeansConfig::new(k, seed).with_n_init(hp.kmeans_n_init);
    Ok(kmeans_fit(features, &cfg)?.assignment)
}

fn wrap_branch<T>(index: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Branch {
        index,
        source: Box::new(e),
    })
}

/// One branch: randomize, extract, cluster.
pub fn run_branch(dataset: &TimeSeriesDataset, hp: &Hyperparams, index: usize) -> Result<ClusterAssignment> {
    wrap_branch(
        index,
        branch_features(dataset, hp, index).and_then(|f| cluster_features(&f, hp, hp.k, index)),
    )
}

/// The branch loop over `range`, in branch order.
pub fn run_branches(dataset: &TimeSeriesDataset, hp: &Hyperparams, range: Range<usize>) -> Result<ClusteringEnsemble> {
    check_inputs(dataset, hp)?;
    let sel = selection_config(dataset, hp)?;
    let clusterings = range
        .into_par_iter()
        .map(|i| run_branch(dataset, hp, i))
        .collect::<Result<Vec<_>>>()?;
    let mut ensemble = ClusteringEnsemble::new();
    for c in clusterings {
        let v = count_violations(&c, sel.lower, sel.upper);
        ensemble.push(c, v);
    }
    Ok(ensemble)
}

/// Selection and consensus over a complete ensemble. Returns the consensus and
/// the number of selected clusterings.
pub fn finish(dataset: &TimeSeriesDataset, hp: &Hyperparams, ensemble: &ClusteringEnsemble) -> Result<(ClusterAssignment, usize)> {
    let sel = selection_config(dataset, hp)?;
    let violations: Vec<f64> = ensemble
        .clusterings()
        .iter()
        .map(|c| count_violations(c, sel.lower, sel.upper))
        .collect();
    let picked = select_indices(&violations, &sel)?;
    let selected: Vec<ClusterAssignment> = picked
        .iter()
        .map(|&i| ensemble.clusterings()[i].clone())
        .collect();
    let seed = SeedTree::new(hp.master_seed).stream(Stream::Consensus).seed();
    Ok((consensus(&selected, hp.k, seed)?, selected.len()))
}

fn histogram(violations: &[f64]) -> Vec<(f64, usize)> {
    let mut sorted = violations.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

fn report(
    dataset: &TimeSeriesDataset,
    hp: &Hyperparams,
    ensemble: &ClusteringEnsemble,
    started: Instant,
) -> Result<RunReport> {
    if ensemble.len() != hp.branches {
        return Err(Error::invalid(format!(
            "ensemble has {} clusterings, expected {}",
            ensemble.len(),
            hp.branches
        )));
    }
    let (assignment, selected_count) = finish(dataset, hp, ensemble)?;
    let rand_index_vs_truth = match dataset.truth() {
        Some(truth) if dataset.n() >= 2 => Some(rand_index(&assignment, &truth)?),
        _ => None,
    };
    Ok(RunReport {
        assignment,
        rand_index_vs_truth,
        violation_histogram: histogram(ensemble.violations()),
        selected_count,
        wall_time_ms: started.elapsed().as_millis() as u64,
        hyperparams: hp.clone(),
    })
}

/// Clusters `dataset` into `hp.k` groups.
pub fn run(dataset: &TimeSeriesDataset, hp: &Hyperparams) -> Result<RunReport> {
    let started = Instant::now();
    let ensemble = run_branches(dataset, hp, 0..hp.branches)?;
    report(dataset, hp, &ensemble, started)
}

/// Like [`run`], but persists finished branches to `checkpoint` after every
/// chunk of `chunk` branches and resumes from whatever the file already holds.
pub fn run_with_checkpoint(
    dataset: &TimeSeriesDataset,
    hp: &Hyperparams,
    checkpoint: &Path,
    chunk: usize,
) -> Result<RunReport> {
    let started = Instant::now();
    check_inputs(dataset, hp)?;
    let sel = selection_config(dataset, hp)?;
    let mut ensemble = ClusteringEnsemble::new();
    if checkpoint.exists() {
        for c in load_checkpoint(checkpoint)? {
            if c.n() != dataset.n() || c.k() != hp.k {
                return Err(Error::invalid(format!(
                    "checkpoint {} does not match this dataset and k",
                    checkpoint.display()
                )));
            }
            let v = count_violations(&c, sel.lower, sel.upper);
            ensemble.push(c, v);
        }
    }
    if ensemble.len() > hp.branches {
        return Err(Error::invalid(format!(
            "checkpoint holds {} branches, more than the {} requested",
            ensemble.len(),
            hp.branches
        )));
    }
    let chunk = chunk.max(1);
    let mut next = ensemble.len();
    while next < hp.branches {
        let end = (next + chunk).min(hp.branches);
        let part = run_branches(dataset, hp, next..end)?;
        append_checkpoint(checkpoint, next, part.clusterings())?;
        ensemble.extend(part);
        next = end;
    }
    report(dataset, hp, &ensemble, started)
}

/// Checkpoint line: `branch<TAB>k<TAB>comma-separated labels`.
pub fn checkpoint_line(index: usize, clustering: &ClusterAssignment) -> String {
    let labels: Vec<String> = clustering.labels().iter().map(usize::to_string).collect();
    format!("{index}\t{}\t{}", clustering.k(), labels.join(","))
}

pub fn parse_checkpoint_line(line: &str) -> Result<(usize, ClusterAssignment)> {
    let bad = |what: &str| Error::invalid(format!("malformed checkpoint line ({what}): {line:?}"));
    let mut fields = line.split('\t');
    let index = fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| bad("branch index"))?;
    let k = fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| bad("k"))?;
    let labels_field = fields.next().ok_or_else(|| bad("labels"))?;
    if fields.next().is_some() {
        return Err(bad("extra fields"));
    }
    let labels = if labels_field.is_empty() {
        Vec::new()
    } else {
        labels_field
            .split(',')
            .map(|l| l.parse::<usize>().map_err(|_| bad("label")))
            .collect::<Result<Vec<_>>>()?
    };
    Ok((index, ClusterAssignment::new(labels, k)?))
}

/// Reads a checkpoint; branches must be numbered 0, 1, 2, … in order.
pub fn load_checkpoint(path: &Path) -> Result<Vec<ClusterAssignment>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (index, c) = parse_checkpoint_line(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if index != out.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected branch {}, found {index}", out.len()),
            });
        }
        out.push(c);
    }
    Ok(out)
}

pub fn append_checkpoint(path: &Path, first_index: usize, clusterings: &[ClusterAssignment]) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = String::new();
    for (offset, c) in clusterings.iter().enumerate() {
        buf.push_str(&checkpoint_line(first_index + offset, c));
        buf.push('\n');
    }
    file.write_all(buf.as_bytes())?;
    file.flush()?;
    Ok(())
}

/// Consensus for every k in `ks`, sharing one feature extraction per branch.
/// Each result equals `run` with `hp.k` set to that k.
pub fn run_multi_k(dataset: &TimeSeriesDataset, hp: &Hyperparams, ks: &[usize]) -> Result<Vec<ClusterAssignment>> {
    for &k in ks {
        check_inputs(dataset, &Hyperparams { k, ..hp.clone() })?;
    }
    let per_branch = (0..hp.branches)
        .into_par_iter()
        .map(|i| {
            let features = wrap_branch(i, branch_features(dataset, hp, i))?;
            ks.iter()
                .map(|&k| wrap_branch(i, cluster_features(&features, hp, k, i)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    ks.iter()
        .enumerate()
        .map(|(j, &k)| {
            let khp = Hyperparams { k, ..hp.clone() };
            let sel = selection_config(dataset, &khp)?;
            let mut ensemble = ClusteringEnsemble::new();
            for branch in &per_branch {
                let c = branch[j].clone();
                let v = count_violations(&c, sel.lower, sel.upper);
                ensemble.push(c, v);
            }
            Ok(finish(dataset, &khp, &ensemble)?.0)
        })
        .collect()
}

/// Fixed space for elbow scoring: features of a seeded sample of
/// [`ELBOW_BRANCHES`] branches (all of them when B is smaller), concatenated
/// column-wise in branch order, each column standardized to zero mean and
/// unit variance (constant columns become zero).
pub fn elbow_feature_space(dataset: &TimeSeriesDataset, hp: &Hyperparams) -> Result<FeatureMatrix> {
    let take = ELBOW_BRANCHES.min(hp.branches);
    let mut rng = SeedTree::new(hp.master_seed).stream(Stream::Elbow).rng();
    let mut picked = sample(&mut rng, hp.branches, take).into_vec();
    picked.sort_unstable();
    let parts = picked
        .iter()
        .map(|&i| wrap_branch(i, branch_features(dataset, hp, i)))
        .collect::<Result<Vec<_>>>()?;
    let mut space = FeatureMatrix::hstack(&parts)?;
    standardize_columns(&mut space);
    Ok(space)
}

fn standardize_columns(x: &mut FeatureMatrix) {
    let (n, d) = (x.rows(), x.cols());
    for j in 0..d {
        let mean = (0..n).map(|i| x.row(i)[j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x.row(i)[j] - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
        for i in 0..n {
            let v = &mut x.row_mut(i)[j];
            *v = (*v - mean) * scale;
        }
    }
}
