//! Untrained CNN-LSTM feature extraction.
//!
//! A block is a stack of `[conv1d -> ReLU -> max-pool]` groups followed by an
//! LSTM that reads the last pooled feature map. Every weight and bias is drawn
//! uniformly from {-1, 0, +1} and never updated.
//!
//! Feature maps are stored channel-major: value `(c, t)` lives at
//! `c * len + t`. The block output is the final feature map flattened in that
//! order, followed by the LSTM's last hidden state, so a series of length `m`
//! produces `len_final * filters + units` features.

use rand::RngCore;

use crate::data::{Hyperparams, TimeSeries, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::{make_rng, ternary};

/// Multichannel sequence, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * len {
            return Err(Error::invalid(format!(
                "feature map data has {} values, expected {channels}x{len}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            len,
            data,
        })
    }

    pub fn single(values: &[f64]) -> Self {
        Self {
            channels: 1,
            len: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.data[c * self.len + t]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams {
    pub filters: usize,
    pub in_channels: usize,
    pub kernel_size: usize,
    /// `[filter][in_channel][tap]`
    pub kernels: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ConvLayerParams {
    pub fn kernel(&self, f: usize, c: usize) -> &[f64] {
        let start = (f * self.in_channels + c) * self.kernel_size;
        &self.kernels[start..start + self.kernel_size]
    }
}

/// Gate rows are ordered input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub units: usize,
    pub in_channels: usize,
    /// `[4 * units][in_channels]`
    pub input_weights: Vec<f64>,
    /// `[4 * units][units]`
    pub recurrent_weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub conv_groups: Vec<ConvLayerParams>,
    pub pool_size: usize,
    pub lstm: LstmParams,
}

impl BlockParams {
    /// Length of the feature map after all groups, for input length `m`.
    pub fn final_len(&self, m: usize) -> usize {
        self.conv_groups
            .iter()
            .fold(m, |len, _| len / self.pool_size)
    }

    /// Output dimension for input length `m`.
    pub fn feature_dim(&self, m: usize) -> usize {
        let filters = self.conv_groups.last().map_or(1, |g| g.filters);
        self.final_len(m) * filters + self.lstm.units
    }

    /// Every parameter, in draw order.
    pub fn all_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.conv_groups
            .iter()
            .flat_map(|g| g.kernels.iter().chain(&g.biases))
            .chain(&self.lstm.input_weights)
            .chain(&self.lstm.recurrent_weights)
            .chain(&self.lstm.biases)
            .copied()
    }
}

/// "Same" zero-padded cross-correlation.
pub fn conv1d_forward(input: &FeatureMap, params: &ConvLayerParams) -> Result<FeatureMap> {
    if input.channels != params.in_channels {
        return Err(Error::invalid(format!(
            "conv expects {} input channels, got {}",
            params.in_channels, input.channels
        )));
    }
    if input.len == 0 {
        return Err(Error::invalid("conv input is empty"));
    }
    let len = input.len;
    let half = (params.kernel_size / 2) as isize;
    let mut out = vec![0.0; params.filters * len];
    for (f, out_row) in out.chunks_exact_mut(len).enumerate() {
        out_row.fill(params.biases[f]);
        for c in 0..input.channels {
            let in_row = input.channel(c);
            for (j, &w) in params.kernel(f, c).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let offset = j as isize - half;
                // t ranges over outputs whose tap t + offset lands inside the input
                let t_lo = (-offset).max(0) as usize;
                let t_hi = ((len as isize) - offset).clamp(0, len as isize) as usize;
                if t_lo >= t_hi {
                    continue;
                }
                let src_lo = (t_lo as isize + offset) as usize;
                let src = &in_row[src_lo..src_lo + (t_hi - t_lo)];
                for (o, &x) in out_row[t_lo..t_hi].iter_mut().zip(src) {
                    *o += w * x;
                }
            }
        }
    }
    Ok(FeatureMap {
        channels: params.filters,
        len,
        data: out,
    })
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

fn relu_in_place(x: &mut [f64]) {
    for v in x {
        *v = v.max(0.0);
    }
}

/// Non-overlapping per-channel max pooling; a trailing partial window is dropped.
pub fn max_pool(input: &FeatureMap, pool_size: usize) -> Result<FeatureMap> {
    if pool_size == 0 {
        return Err(Error::invalid("pool size must be positive"));
    }
    if input.len < pool_size {
        return Err(Error::invalid(format!(
            "cannot pool length {} with window {pool_size}",
            input.len
        )));
    }
    let out_len = input.len / pool_size;
    let mut data = Vec::with_capacity(input.channels * out_len);
    for c in 0..input.channels {
        let row = input.channel(c);
        data.extend(
            row.chunks_exact(pool_size)
                .map(|w| w.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        );
    }
    Ok(FeatureMap {
        channels: input.channels,
        len: out_len,
        data,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs the LSTM from a zero state over every timestep and returns the final
/// hidden state.
pub fn lstm_forward(input: &FeatureMap, params: &LstmParams) -> Result<Vec<f64>> {
    if input.channels != params.in_channels {
        return Err(Error::invalid(format!(
            "lstm expects {} input channels, got {}",
            params.in_channels, input.channels
        )));
    }
    if input.len == 0 {
        return Err(Error::invalid("lstm input is empty"));
    }
    let u = params.units;
    let c_in = params.in_channels;
    let mut h = vec![0.0; u];
    let mut cell = vec![0.0; u];
    let mut z = vec![0.0; 4 * u];
    let mut x = vec![0.0; c_in];
    for t in 0..input.len {
        for (c, xc) in x.iter_mut().enumerate() {
            *xc = input.get(c, t);
        }
        for (r, zr) in z.iter_mut().enumerate() {
            let wx: f64 = params.input_weights[r * c_in..(r + 1) * c_in]
                .iter()
                .zip(&x)
                .map(|(w, v)| w * v)
                .sum();
            let uh: f64 = params.recurrent_weights[r * u..(r + 1) * u]
                .iter()
                .zip(&h)
                .map(|(w, v)| w * v)
                .sum();
            *zr = params.biases[r] + wx + uh;
        }
        for j in 0..u {
            let i_gate = sigmoid(z[j]);
            let f_gate = sigmoid(z[u + j]);
            let g = z[2 * u + j].tanh();
            let o_gate = sigmoid(z[3 * u + j]);
            cell[j] = f_gate * cell[j] + i_gate * g;
            h[j] = o_gate * cell[j].tanh();
        }
    }
    Ok(h)
}

/// Full block: conv groups, flattened final map, then LSTM hidden state.
pub fn block_forward(series: &[f64], params: &BlockParams) -> Result<Vec<f64>> {
    let mut map = FeatureMap::single(series);
    for group in &params.conv_groups {
        let mut conv = conv1d_forward(&map, group)?;
        relu_in_place(&mut conv.data);
        map = max_pool(&conv, params.pool_size)?;
    }
    let hidden = lstm_forward(&map, &params.lstm)?;
    let mut features = map.into_vec();
    features.extend(hidden);
    Ok(features)
}

/// Number of conv groups for length `m`: `max(1, floor(log2 m))`, cut short
/// when the running length can no longer be pooled.
pub fn group_count(m: usize, pool_size: usize) -> usize {
    let requested = (usize::BITS - 1 - m.max(1).leading_zeros()).max(1) as usize;
    let mut len = m;
    let mut groups = 0;
    while groups < requested && len >= pool_size {
        len /= pool_size;
        groups += 1;
    }
    groups
}

/// Draws block parameters from a ChaCha8 stream seeded with `seed`.
///
/// Draw order: for each group, kernels `[filter][channel][tap]` then biases;
/// then LSTM input weights, recurrent weights and biases, all row-major.
/// Biases are drawn even when `hp.use_bias` is false (and then zeroed), so
/// toggling biases never changes the weights.
pub fn make_block_params(seed: u64, m: usize, hp: &Hyperparams) -> Result<BlockParams> {
    if m < 2 {
        return Err(Error::invalid(format!("series length {m} < 2")));
    }
    if hp.pool_size < 2 || hp.filters == 0 || hp.kernel_size == 0 || hp.lstm_units == 0 {
        return Err(Error::invalid(
            "architecture needs pool_size >= 2 and positive filters, kernel_size, lstm_units",
        ));
    }
    let groups = group_count(m, hp.pool_size);
    if groups == 0 {
        return Err(Error::invalid(format!(
            "series length {m} shorter than pool size {}",
            hp.pool_size
        )));
    }
    let mut rng = make_rng(seed);
    let mut draw = |count: usize, keep: bool| -> Vec<f64> {
        let v = draw_ternary(&mut rng, count);
        if keep {
            v
        } else {
            vec![0.0; count]
        }
    };

    let mut conv_groups = Vec::with_capacity(groups);
    let mut in_channels = 1;
    for _ in 0..groups {
        let kernels = draw(hp.filters * in_channels * hp.kernel_size, true);
        let biases = draw(hp.filters, hp.use_bias);
        conv_groups.push(ConvLayerParams {
            filters: hp.filters,
            in_channels,
            kernel_size: hp.kernel_size,
            kernels,
            biases,
        });
        in_channels = hp.filters;
    }
    let u = hp.lstm_units;
    let lstm = LstmParams {
        units: u,
        in_channels,
        input_weights: draw(4 * u * in_channels, true),
        recurrent_weights: draw(4 * u * u, true),
        biases: draw(4 * u, hp.use_bias),
    };
    Ok(BlockParams {
        conv_groups,
        pool_size: hp.pool_size,
        lstm,
    })
}

fn draw_ternary<R: RngCore>(rng: &mut R, count: usize) -> Vec<f64> {
    (0..count).map(|_| ternary(rng)).collect()
}

/// Runs the block over every series of the dataset.
pub fn extract_features(dataset: &TimeSeriesDataset, params: &BlockParams) -> Result<FeatureMatrix> {
    extract_from_series(dataset.series(), params)
}

pub fn extract_from_series(series: &[TimeSeries], params: &BlockParams) -> Result<FeatureMatrix> {
    let rows = series
        .iter()
        .map(|s| block_forward(s.values(), params))
        .collect::<Result<Vec<_>>>()?;
    let matrix = FeatureMatrix::from_rows(&rows)?;
    if !matrix.is_finite() {
        return Err(Error::invalid("feature extraction overflowed to a non-finite value"));
    }
    Ok(matrix)
}
