//! Naive reference implementations and fixtures shared by integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tscluster::feature_extractor::{make_block_params, BlockParams, ConvLayerParams, LstmParams};
use tscluster::{ClusterAssignment, Hyperparams};

/// `[channel][t]` layout, the way one would write it by hand.
pub type Map = Vec<Vec<f64>>;

pub fn naive_conv(input: &Map, p: &ConvLayerParams) -> Map {
    let len = input[0].len() as isize;
    let half = (p.kernel_size / 2) as isize;
    let mut out = vec![vec![0.0; len as usize]; p.filters];
    for f in 0..p.filters {
        for t in 0..len {
            let mut acc = p.biases[f];
            for (c, channel) in input.iter().enumerate() {
                for j in 0..p.kernel_size {
                    let src = t + j as isize - half;
                    if src >= 0 && src < len {
                        let w = p.kernels[f * p.in_channels * p.kernel_size + c * p.kernel_size + j];
                        acc += w * channel[src as usize];
                    }
                }
            }
            out[f][t as usize] = acc;
        }
    }
    out
}

pub fn naive_relu(map: &Map) -> Map {
    map.iter()
        .map(|row| row.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect())
        .collect()
}

pub fn naive_pool(map: &Map, size: usize) -> Map {
    map.iter()
        .map(|row| {
            let mut out = Vec::new();
            let mut start = 0;
            while start + size <= row.len() {
                let mut best = row[start];
                for &v in &row[start + 1..start + size] {
                    if v > best {
                        best = v;
                    }
                }
                out.push(best);
                start += size;
            }
            out
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn naive_lstm(input: &Map, p: &LstmParams) -> Vec<f64> {
    let u = p.units;
    let steps = input[0].len();
    let mut h = vec![0.0; u];
    let mut c = vec![0.0; u];
    for t in 0..steps {
        let mut pre = vec![0.0; 4 * u];
        for (r, value) in pre.iter_mut().enumerate() {
            let mut acc = p.biases[r];
            for ch in 0..p.in_channels {
                acc += p.input_weights[r * p.in_channels + ch] * input[ch][t];
            }
            for j in 0..u {
                acc += p.recurrent_weights[r * u + j] * h[j];
            }
            *value = acc;
        }
        let mut next_h = vec![0.0; u];
        for j in 0..u {
            let i = sigmoid(pre[j]);
            let f = sigmoid(pre[u + j]);
            let g = pre[2 * u + j].tanh();
            let o = sigmoid(pre[3 * u + j]);
            c[j] = f * c[j] + i * g;
            next_h[j] = o * c[j].tanh();
        }
        h = next_h;
    }
    h
}

pub fn naive_block(series: &[f64], p: &BlockParams) -> Vec<f64> {
    let mut map: Map = vec![series.to_vec()];
    for group in &p.conv_groups {
        map = naive_pool(&naive_relu(&naive_conv(&map, group)), p.pool_size);
    }
    let h = naive_lstm(&map, &p.lstm);
    let mut out: Vec<f64> = map.into_iter().flatten().collect();
    out.extend(h);
    out
}

/// Random small architecture drawn through the public parameter factory.
pub fn random_block(rng: &mut ChaCha8Rng, m: usize) -> BlockParams {
    let mut hp = Hyperparams::new(2);
    hp.filters = rng.random_range(1..=4);
    hp.kernel_size = rng.random_range(1..=5);
    hp.pool_size = rng.random_range(2..=3);
    hp.lstm_units = rng.random_range(1..=4);
    hp.use_bias = rng.random_bool(0.8);
    make_block_params(rng.random(), m, &hp).unwrap()
}

pub fn random_map(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> Map {
    (0..channels)
        .map(|_| (0..len).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Pair-counting Rand Index.
pub fn pairwise_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let mut agree = 0u64;
    let mut total = 0u64;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

/// Planted two-way split of `n` instances: first half 0, second half 1.
pub fn planted_split(n: usize) -> Vec<usize> {
    (0..n).map(|i| usize::from(i >= n / 2)).collect()
}

/// `relevant` copies of the planted split with randomly permuted cluster
/// ids, followed by `random` uniform labelings, shuffled together.
pub fn planted_ensemble(rng: &mut ChaCha8Rng, n: usize, k: usize, relevant: usize, random: usize) -> Vec<ClusterAssignment> {
    let truth = planted_split(n);
    let mut members = Vec::with_capacity(relevant + random);
    for _ in 0..relevant {
        let flip = rng.random_bool(0.5);
        let labels = truth.iter().map(|&l| if flip { 1 - l } else { l }).collect();
        members.push(ClusterAssignment::new(labels, k).unwrap());
    }
    for _ in 0..random {
        let labels = (0..n).map(|_| rng.random_range(0..k)).collect();
        members.push(ClusterAssignment::new(labels, k).unwrap());
    }
    for i in (1..members.len()).rev() {
        let j = rng.random_range(0..=i);
        members.swap(i, j);
    }
    members
}

/// Links every pair co-clustered by more than half the members and returns
/// the connected components as a partition.
pub fn coassociation_majority(members: &[ClusterAssignment]) -> Vec<usize> {
    let n = members[0].n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            let together = members.iter().filter(|m| m.labels()[i] == m.labels()[j]).count();
            if 2 * together > members.len() {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut ids = vec![usize::MAX; n];
    let mut next = 0;
    (0..n)
        .map(|i| {
            let r = find(&mut parent, i);
            if ids[r] == usize::MAX {
                ids[r] = next;
                next += 1;
            }
            ids[r]
        })
        .collect()
}
