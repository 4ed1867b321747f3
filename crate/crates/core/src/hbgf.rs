//! Consensus clustering over the instance–cluster bipartite graph.
//!
//! Instances and the clusters of every selected clustering are the two vertex
//! sets; an instance is joined to each cluster it belongs to. The graph is
//! partitioned spectrally: the connectivity matrix is degree-normalized,
//! its top-k singular vectors are found by subspace iteration, and k-means
//! groups the row-normalized instance embedding.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::ClusterAssignment;
use crate::error::{Error, Result};
use crate::kmeans::{kmeans_fit, KmeansConfig};
use crate::matrix::FeatureMatrix;
use crate::rng::make_rng;

pub const SVD_MAX_ITER: usize = 300;
pub const SVD_TOL: f64 = 1e-8;
const OVERSAMPLE: usize = 10;

/// Sparse instance–cluster incidence. Each instance has exactly one edge per
/// member clustering; empty clusters get no vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    n_instances: usize,
    members: usize,
    /// `(member index, cluster id)` for every cluster vertex, in column order.
    cluster_vertices: Vec<(usize, usize)>,
    /// `edges[i * members + s]` is the column of instance i's cluster in member s.
    edges: Vec<usize>,
    column_sizes: Vec<usize>,
}

impl BipartiteGraph {
    pub fn n_instances(&self) -> usize {
        self.n_instances
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_vertices.len()
    }

    pub fn cluster_vertices(&self) -> &[(usize, usize)] {
        &self.cluster_vertices
    }

    /// Cluster-vertex columns adjacent to instance `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.edges[i * self.members..(i + 1) * self.members]
    }

    pub fn row_sums(&self) -> Vec<usize> {
        vec![self.members; self.n_instances]
    }

    pub fn column_sums(&self) -> &[usize] {
        &self.column_sizes
    }

    /// Dense n × c binary connectivity matrix.
    pub fn connectivity(&self) -> FeatureMatrix {
        let mut a = FeatureMatrix::zeros(self.n_instances, self.n_clusters());
        for i in 0..self.n_instances {
            let row = a.row_mut(i);
            for &c in &self.edges[i * self.members..(i + 1) * self.members] {
                row[c] = 1.0;
            }
        }
        a
    }
}

pub fn build_bipartite(selected: &[ClusterAssignment]) -> Result<BipartiteGraph> {
    let first = selected
        .first()
        .ok_or_else(|| Error::invalid("consensus needs at least one clustering"))?;
    let n = first.n();
    if let Some(bad) = selected.iter().position(|c| c.n() != n) {
        return Err(Error::invalid(format!(
            "clustering {bad} covers {} instances, expected {n}",
            selected[bad].n()
        )));
    }
    let members = selected.len();
    let mut cluster_vertices = Vec::new();
    let mut column_sizes = Vec::new();
    let mut column_of = Vec::with_capacity(members);
    for (s, clustering) in selected.iter().enumerate() {
        let mut map = vec![usize::MAX; clustering.k()];
        for (id, size) in clustering.sizes().into_iter().enumerate() {
            if size > 0 {
                map[id] = cluster_vertices.len();
                cluster_vertices.push((s, id));
                column_sizes.push(size);
            }
        }
        column_of.push(map);
    }
    let mut edges = Vec::with_capacity(n * members);
    for i in 0..n {
        for (s, clustering) in selected.iter().enumerate() {
            edges.push(column_of[s][clustering.labels()[i]]);
        }
    }
    Ok(BipartiteGraph {
        n_instances: n,
        members,
        cluster_vertices,
        edges,
        column_sizes,
    })
}

/// `D1^-1/2 A D2^-1/2` applied implicitly; zero-degree vertices scale by 0.
struct NormalizedIncidence<'a> {
    graph: &'a BipartiteGraph,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

impl<'a> NormalizedIncidence<'a> {
    fn new(graph: &'a BipartiteGraph) -> Self {
        let inv_sqrt = |d: usize| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() };
        Self {
            graph,
            row_scale: graph.row_sums().into_iter().map(inv_sqrt).collect(),
            col_scale: graph.column_sums().iter().map(|&d| inv_sqrt(d)).collect(),
        }
    }

    /// out (n) = Ã x (c)
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = self
                .graph
                .neighbors(i)
                .iter()
                .map(|&c| self.col_scale[c] * x[c])
                .sum();
            *o = self.row_scale[i] * s;
        }
    }

    /// out (c) = Ãᵀ y (n)
    fn apply_t(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &yi) in y.iter().enumerate() {
            let v = self.row_scale[i] * yi;
            for &c in self.graph.neighbors(i) {
                out[c] += v;
            }
        }
        for (o, s) in out.iter_mut().zip(&self.col_scale) {
            *o *= s;
        }
    }
}

/// Top singular triplets of a normalized incidence matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// Left singular vectors, one `Vec` of length n per component.
    pub left: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Top-`rank` singular triplets of the degree-normalized connectivity matrix.
///
/// Runs subspace iteration with Rayleigh–Ritz on the Gram operator of the
/// smaller side (ÃᵀÃ when clusters are fewer than instances, ÃÃᵀ otherwise),
/// from a seeded Gaussian start. Stops when the sine of the largest principal
/// angle between successive top-`rank` Ritz subspaces is at most [`SVD_TOL`],
/// or after [`SVD_MAX_ITER`] iterations.
pub fn normalized_svd(graph: &BipartiteGraph, rank: usize, seed: u64) -> TruncatedSvd {
    let op = NormalizedIncidence::new(graph);
    let n = graph.n_instances();
    let c = graph.n_clusters();
    let cluster_side = c <= n;
    let dim = if cluster_side { c } else { n };
    let rank = rank.min(dim);
    let block = (rank + OVERSAMPLE).min(dim);
    let mut rng = make_rng(seed);

    let mut scratch_n = vec![0.0; n];
    let mut scratch_c = vec![0.0; c];
    let mut gram = |v: &[f64], out: &mut [f64]| {
        if cluster_side {
            op.apply(v, &mut scratch_n);
            op.apply_t(&scratch_n, out);
        } else {
            op.apply_t(v, &mut scratch_c);
            op.apply(&scratch_c, out);
        }
    };

    let mut q: Vec<Vec<f64>> = (0..block).map(|_| gaussian(&mut rng, dim)).collect();
    orthonormalize(&mut q, &mut rng);
    let mut prev_top: Option<Vec<Vec<f64>>> = None;
    let mut ritz_vectors = q.clone();
    let mut ritz_values = vec![0.0; block];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < SVD_MAX_ITER {
        iterations += 1;
        let w: Vec<Vec<f64>> = q
            .iter()
            .map(|col| {
                let mut out = vec![0.0; dim];
                gram(col, &mut out);
                out
            })
            .collect();
        let h = DMatrix::from_fn(block, block, |a, b| 0.5 * (dot(&q[a], &w[b]) + dot(&q[b], &w[a])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let rotate = |basis: &[Vec<f64>], j: usize| -> Vec<f64> {
            let mut out = vec![0.0; dim];
            for (a, col) in basis.iter().enumerate() {
                let coef = eig.eigenvectors[(a, j)];
                if coef != 0.0 {
                    for (o, v) in out.iter_mut().zip(col) {
                        *o += coef * v;
                    }
                }
            }
            out
        };
        ritz_vectors = order.iter().map(|&j| rotate(&q, j)).collect();
        let mut next: Vec<Vec<f64>> = order.iter().map(|&j| rotate(&w, j)).collect();
        ritz_values = order.iter().map(|&j| eig.eigenvalues[j].max(0.0)).collect();

        let top = &ritz_vectors[..rank];
        if let Some(prev) = &prev_top {
            if subspace_sine(prev, top) <= SVD_TOL {
                converged = true;
                break;
            }
        }
        prev_top = Some(top.to_vec());
        orthonormalize(&mut next, &mut rng);
        q = next;
    }

    let singular_values: Vec<f64> = ritz_values[..rank].iter().map(|v| v.sqrt()).collect();
    let left = if cluster_side {
        let floor = singular_values.first().copied().unwrap_or(0.0) * 1e-12;
        ritz_vectors[..rank]
            .iter()
            .zip(&singular_values)
            .map(|(v, &sigma)| {
                let mut u = vec![0.0; n];
                if sigma > floor && sigma > 0.0 {
                    op.apply(v, &mut u);
                    for x in &mut u {
                        *x /= sigma;
                    }
                }
                u
            })
            .collect()
    } else {
        ritz_vectors[..rank].to_vec()
    };
    TruncatedSvd {
        left,
        singular_values,
        iterations,
        converged,
    }
}

/// Which vertices feed the final k-means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Readout {
    /// Instance rows only; cluster vertices are dropped after embedding.
    #[default]
    Instances,
    /// Instance and cluster vertices clustered together; instance labels are
    /// read off afterwards.
    Joint,
}

/// Partitions the bipartite graph into `k` instance groups.
pub fn spectral_consensus(graph: &BipartiteGraph, k: usize, seed: u64) -> Result<ClusterAssignment> {
    spectral_consensus_with(graph, k, seed, Readout::Instances)
}

pub fn spectral_consensus_with(graph: &BipartiteGraph, k: usize, seed: u64, readout: Readout) -> Result<ClusterAssignment> {
    let n = graph.n_instances();
    if k == 0 || n < k {
        return Err(Error::invalid(format!(
            "consensus needs 1 <= k <= n (k={k}, n={n})"
        )));
    }
    if k == 1 {
        return ClusterAssignment::new(vec![0; n], 1);
    }
    let first = graph.neighbors(0);
    if (1..n).all(|i| graph.neighbors(i) == first) {
        let cfg = KmeansConfig::new(k, seed).with_n_init(1);
        return Ok(kmeans_fit(&graph.connectivity(), &cfg)?.assignment);
    }
    let svd = normalized_svd(graph, k, seed);
    let mut columns = svd.left.clone();
    if readout == Readout::Joint {
        let op = NormalizedIncidence::new(graph);
        let floor = svd.singular_values.first().copied().unwrap_or(0.0) * 1e-12;
        for (col, (u, &sigma)) in columns.iter_mut().zip(svd.left.iter().zip(&svd.singular_values)) {
            let mut v = vec![0.0; graph.n_clusters()];
            if sigma > floor && sigma > 0.0 {
                op.apply_t(u, &mut v);
                for x in &mut v {
                    *x /= sigma;
                }
            }
            col.extend(v);
        }
    }
    let rows = columns.first().map_or(n, Vec::len);
    let mut embedding = FeatureMatrix::zeros(rows, columns.len());
    for i in 0..rows {
        let row = embedding.row_mut(i);
        for (j, u) in columns.iter().enumerate() {
            row[j] = u[i];
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    let labels = kmeans_fit(&embedding, &KmeansConfig::new(k, seed))?.assignment;
    ClusterAssignment::new(labels.labels()[..n].to_vec(), k)
}

/// Bipartite-graph consensus of the selected clusterings.
pub fn consensus(selected: &[ClusterAssignment], k: usize, seed: u64) -> Result<ClusterAssignment> {
    let graph = build_bipartite(selected)?;
    spectral_consensus(&graph, k, seed)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Two-pass modified Gram–Schmidt. Columns that collapse are replaced by
/// fresh random directions so the block keeps full rank.
fn orthonormalize(cols: &mut [Vec<f64>], rng: &mut ChaCha8Rng) {
    let dim = cols.first().map_or(0, Vec::len);
    for j in 0..cols.len() {
        for attempt in 0..4 {
            let original = dot(&cols[j], &cols[j]).sqrt();
            for _pass in 0..2 {
                for i in 0..j {
                    let (done, rest) = cols.split_at_mut(j);
                    let proj = dot(&done[i], &rest[0]);
                    for (v, b) in rest[0].iter_mut().zip(&done[i]) {
                        *v -= proj * b;
                    }
                }
            }
            let norm = dot(&cols[j], &cols[j]).sqrt();
            if norm > 1e-10 * original.max(1e-300) && norm > 1e-300 {
                for v in &mut cols[j] {
                    *v /= norm;
                }
                break;
            }
            if attempt == 3 {
                cols[j].fill(0.0);
            } else {
                cols[j] = gaussian(rng, dim);
            }
        }
    }
}

/// Sine of the largest principal angle between two orthonormal bases.
fn subspace_sine(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let k = a.len();
    if k == 0 {
        return 0.0;
    }
    let m = DMatrix::from_fn(k, k, |i, j| dot(&a[i], &b[j]));
    let sv = m.singular_values();
    let min_cos = sv.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
    (1.0 - min_cos * min_cos).max(0.0).sqrt()
}
