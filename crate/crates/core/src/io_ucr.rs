//! Dataset input: UCR-format text files, synthetic Cylinder-Bell-Funnel data,
//! and noise utilities.
//!
//! A UCR file holds one instance per line: the class label followed by the
//! series values, separated by tabs, commas or whitespace (detected from the
//! first non-empty line). Blank or `NaN` values count as missing and become
//! 0.0; shorter rows are right-padded with zeros to the longest row.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{TimeSeries, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::rng::make_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Delimiter {
    Tab,
    Comma,
    Whitespace,
}

impl Delimiter {
    fn detect(line: &str) -> Self {
        if line.contains('\t') {
            Delimiter::Tab
        } else if line.contains(',') {
            Delimiter::Comma
        } else {
            Delimiter::Whitespace
        }
    }

    fn split<'a>(self, line: &'a str) -> Vec<&'a str> {
        let mut fields: Vec<&str> = match self {
            Delimiter::Tab => line.split('\t').map(str::trim).collect(),
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Whitespace => line.split_whitespace().collect(),
        };
        while fields.last() == Some(&"") {
            fields.pop();
        }
        fields
    }
}

/// Counters reported by the loader.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    /// Blank or NaN values replaced by 0.0.
    pub missing_values: usize,
    /// Rows shorter than the longest row.
    pub padded_rows: usize,
}

struct RawRow {
    label: f64,
    token: String,
    values: Vec<f64>,
}

fn parse_file(path: &Path, stats: &mut LoadStats) -> Result<Vec<RawRow>> {
    let text = fs::read_to_string(path)?;
    let mut delimiter = None;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let delim = *delimiter.get_or_insert_with(|| Delimiter::detect(line));
        let fields = delim.split(line);
        if fields.len() < 2 {
            return Err(parse_err(format!("expected a label and at least one value, got {} field(s)", fields.len())));
        }
        let token = fields[0].to_string();
        let label: f64 = token
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(format!("label {token:?} is not a number")))?;
        let mut values = Vec::with_capacity(fields.len() - 1);
        for (col, field) in fields[1..].iter().enumerate() {
            if field.is_empty() || field.eq_ignore_ascii_case("nan") {
                stats.missing_values += 1;
                values.push(0.0);
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("value {field:?} in column {} is not a number", col + 2)))?;
            if !v.is_finite() {
                return Err(parse_err(format!("value {field:?} in column {} is not finite", col + 2)));
            }
            values.push(v);
        }
        rows.push(RawRow { label, token, values });
    }
    Ok(rows)
}

fn dataset_name(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    for suffix in ["_TRAIN", "_TEST"] {
        if let Some(base) = stem.strip_suffix(suffix) {
            return base.to_string();
        }
    }
    stem
}

/// Loads and fuses a UCR train file and optional test file (train rows first).
pub fn load_ucr(train: &Path, test: Option<&Path>) -> Result<TimeSeriesDataset> {
    load_ucr_with_stats(train, test).map(|(d, _)| d)
}

pub fn load_ucr_with_stats(train: &Path, test: Option<&Path>) -> Result<(TimeSeriesDataset, LoadStats)> {
    let mut stats = LoadStats::default();
    let mut rows = parse_file(train, &mut stats)?;
    if let Some(test) = test {
        rows.extend(parse_file(test, &mut stats)?);
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{} contains no rows", train.display())));
    }
    let m = rows.iter().map(|r| r.values.len()).max().expect("non-empty");
    // original label value -> (class id, first token seen)
    let mut classes: BTreeMap<OrderedLabel, String> = BTreeMap::new();
    for r in &rows {
        classes.entry(OrderedLabel(r.label)).or_insert_with(|| r.token.clone());
    }
    let ids: BTreeMap<OrderedLabel, usize> = classes.keys().enumerate().map(|(i, &l)| (l, i)).collect();
    let names: Vec<String> = classes.into_values().collect();
    let mut labels = Vec::with_capacity(rows.len());
    let mut series = Vec::with_capacity(rows.len());
    for r in rows {
        labels.push(ids[&OrderedLabel(r.label)]);
        let mut values = r.values;
        if values.len() < m {
            stats.padded_rows += 1;
            values.resize(m, 0.0);
        }
        series.push(TimeSeries::new(values)?);
    }
    let dataset = TimeSeriesDataset::new(dataset_name(train), series, Some(labels))?.with_class_names(names);
    Ok((dataset, stats))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedLabel(f64);

impl Eq for OrderedLabel {}

impl PartialOrd for OrderedLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Writes the dataset in tab-separated UCR format. Original class tokens are
/// kept when all of them are numeric, otherwise class ids are written. Values
/// use the shortest representation that parses back to the same `f64`.
pub fn write_ucr(dataset: &TimeSeriesDataset, path: &Path) -> Result<()> {
    let names = dataset
        .class_names()
        .filter(|names| names.iter().all(|n| n.parse::<f64>().is_ok()));
    let mut out = String::new();
    for (i, s) in dataset.series().iter().enumerate() {
        let label = match (dataset.labels(), names) {
            (Some(l), Some(names)) => names[l[i]].clone(),
            (Some(l), None) => l[i].to_string(),
            (None, _) => "0".to_string(),
        };
        out.push_str(&label);
        for v in s.values() {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Cylinder-Bell-Funnel: three classes of `n_per_class` series each, in class
/// order (0 cylinder, 1 bell, 2 funnel). For each series the event starts at
/// `a ~ U{m/8..=m/4}` and lasts `b - a ~ U{m/4..=m/2}`; its amplitude is
/// `6 + η` and every point gets additive `ε(t)`, with η and ε standard normal.
pub fn generate_cbf(n_per_class: usize, m: usize, seed: u64) -> Result<TimeSeriesDataset> {
    if n_per_class == 0 {
        return Err(Error::invalid("CBF needs at least one series per class"));
    }
    if m < 16 {
        return Err(Error::invalid(format!("CBF length {m} < 16")));
    }
    let mut rng = make_rng(seed);
    let mut series = Vec::with_capacity(3 * n_per_class);
    let mut labels = Vec::with_capacity(3 * n_per_class);
    for class in 0..3 {
        for _ in 0..n_per_class {
            let a = rng.random_range(m / 8..=m / 4);
            let b = a + rng.random_range(m / 4..=m / 2);
            let eta: f64 = rng.sample(StandardNormal);
            let amp = 6.0 + eta;
            let span = (b - a) as f64;
            let values: Vec<f64> = (0..m)
                .map(|t| {
                    let eps: f64 = rng.sample(StandardNormal);
                    let shape = if t < a || t > b {
                        0.0
                    } else {
                        match class {
                            0 => 1.0,
                            1 => (t - a) as f64 / span,
                            _ => (b - t) as f64 / span,
                        }
                    };
                    amp * shape + eps
                })
                .collect();
            series.push(TimeSeries::new(values)?);
            labels.push(class);
        }
    }
    Ok(TimeSeriesDataset::new("CBF", series, Some(labels))?
        .with_class_names(vec!["cylinder".into(), "bell".into(), "funnel".into()]))
}

/// Adds i.i.d. N(0, scale²) noise to every value.
pub fn inject_noise(dataset: &TimeSeriesDataset, scale: f64, seed: u64) -> Result<TimeSeriesDataset> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("noise scale {scale} must be finite and >= 0")));
    }
    if scale == 0.0 {
        return Ok(dataset.clone());
    }
    let normal = Normal::new(0.0, scale).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = make_rng(seed);
    dataset.map_series(|_, v| v.iter().map(|x| x + normal.sample(&mut rng)).collect())
}

/// Extends every series to `target_m` with standard normal values.
pub fn pad_with_noise(dataset: &TimeSeriesDataset, target_m: usize, seed: u64) -> Result<TimeSeriesDataset> {
    if target_m < dataset.m() {
        return Err(Error::invalid(format!(
            "target length {target_m} shorter than series length {}",
            dataset.m()
        )));
    }
    let mut rng = make_rng(seed);
    dataset.map_series(|_, v| {
        let mut out = v.to_vec();
        out.extend((v.len()..target_m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        out
    })
}

/// Per-series z-normalization; constant series become all zeros.
pub fn znormalize(dataset: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    dataset.map_series(|_, v| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            v.iter().map(|x| (x - mean) / sd).collect()
        } else {
            vec![0.0; v.len()]
        }
    })
}
