#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use support::*;
use tscluster::feature_extractor::{block_forward, conv1d_forward, lstm_forward, max_pool, FeatureMap};
use tscluster::hbgf::consensus;
use tscluster::io_ucr::write_ucr;
use tscluster::kmeans::{kmeans_pp_init, lloyd};
use tscluster::metrics::elbow_curve;
use tscluster::rng::make_rng;
use tscluster::selection::count_violations;
use tscluster::{
    ensemble_size_lower_bound, generate_cbf, load_ucr, rand_index, ClusterAssignment, FeatureMatrix,
    Hyperparams,
};
use tscluster_cli::{cmd_scale_test, ScaleArgs, ScaleMode};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn bound() -> Outcome {
    let b = ensemble_size_lower_bound(0.01, 0.3).unwrap();
    verdict((b - 102.33).abs() <= 0.01, format!("bound(0.01, 0.3) = {b:.4}"))
}

fn violations_example() -> Outcome {
    let labels = std::iter::repeat_n(0, 40).chain(std::iter::repeat_n(1, 52)).collect();
    let a = ClusterAssignment::new(labels, 2).unwrap();
    let v = count_violations(&a, 5.0, 50.0);
    verdict(v == 2.0, format!("violations = {v}"))
}

fn rand_index_fuzz() -> Outcome {
    let mut rng = make_rng(0xACCE_0003);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=12);
        let ka = rng.random_range(1..=5);
        let kb = rng.random_range(1..=5);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        let fast = rand_index(
            &ClusterAssignment::new(a.clone(), ka).unwrap(),
            &ClusterAssignment::new(b.clone(), kb).unwrap(),
        )
        .unwrap();
        if fast != pairwise_rand_index(&a, &b) {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches}/1000 pairs disagree with the all-pairs count"))
}

fn planted_consensus() -> Outcome {
    let truth = ClusterAssignment::new(planted_split(40), 2).unwrap();
    let needed = ensemble_size_lower_bound(0.05, 0.3).unwrap().ceil() as usize;
    let mut exact = 0;
    for trial in 0..100u64 {
        let mut rng = make_rng(0xACCE_0400 + trial);
        let members = planted_ensemble(&mut rng, 40, 2, 21, 49);
        let out = consensus(&members, 2, trial).unwrap();
        if rand_index(&out, &truth).unwrap() == 1.0 {
            exact += 1;
        }
    }
    verdict(
        exact >= 95 && needed == 67 && 70 >= needed,
        format!("RI = 1 in {exact}/100 trials with 70 members (bound {needed})"),
    )
}

fn cbf_accuracy() -> Outcome {
    let mut hits = 0;
    let mut scores = Vec::new();
    for seed in 0..10u64 {
        let data = generate_cbf(100, 128, 1000 + seed).unwrap();
        let report = tscluster::run(&data, &Hyperparams::new(3).with_seed(seed)).unwrap();
        let ri = report.rand_index_vs_truth.unwrap();
        if ri >= 0.90 {
            hits += 1;
        }
        scores.push(format!("{ri:.3}"));
    }
    verdict(hits >= 8, format!("RI >= 0.90 in {hits}/10 seeds [{}]", scores.join(" ")))
}

fn ucr_dataset(root: &Path, name: &str) -> Option<(PathBuf, PathBuf)> {
    let dir = root.join(name);
    let train = dir.join(format!("{name}_TRAIN.tsv"));
    let test = dir.join(format!("{name}_TEST.tsv"));
    (train.exists() && test.exists()).then_some((train, test))
}

fn ucr_spot_check() -> Outcome {
    let Some(root) = std::env::var_os("UCR_ARCHIVE_DIR") else {
        return Skip("UCR_ARCHIVE_DIR not set".into());
    };
    let root = PathBuf::from(root);
    let mut details = Vec::new();
    let mut ok = true;
    for name in ["Coffee", "InsectEPGRegularTrain"] {
        let Some((train, test)) = ucr_dataset(&root, name) else {
            return Skip(format!("{name} not found under {}", root.display()));
        };
        let data = load_ucr(&train, Some(&test)).unwrap();
        let k = data.truth().unwrap().k();
        let hits = (0..10u64)
            .filter(|&seed| {
                let report = tscluster::run(&data, &Hyperparams::new(k).with_seed(seed)).unwrap();
                report.rand_index_vs_truth.unwrap() >= 0.95
            })
            .count();
        ok &= hits >= 6;
        details.push(format!("{name} RI >= 0.95 in {hits}/10 seeds"));
    }
    verdict(ok, details.join(", "))
}

fn scaling(mode: ScaleMode, sizes: Vec<usize>, threshold: f64) -> Outcome {
    let args = ScaleArgs {
        mode,
        sizes,
        k: 3,
        seed: 42,
        out: None,
    };
    let (rows, fit) = cmd_scale_test(&args).unwrap();
    let times: Vec<String> = rows.iter().map(|r| format!("{}:{:.0}ms", r.size, r.mean_ms)).collect();
    verdict(
        fit.r_squared >= threshold,
        format!("R^2 = {:.4} [{}]", fit.r_squared, times.join(" ")),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("Cbf_TRAIN.tsv");
    write_ucr(&generate_cbf(100, 128, 7).unwrap(), &train).unwrap();
    let mut files = Vec::new();
    for (i, jobs) in ["1", "4", "1"].iter().enumerate() {
        let labels = dir.path().join(format!("labels{i}.txt"));
        let status = Command::new(env!("CARGO_BIN_EXE_tscluster"))
            .args(["--jobs", jobs, "cluster", "--k", "3", "--seed", "5"])
            .arg("--train")
            .arg(&train)
            .arg("--labels-out")
            .arg(&labels)
            .output()
            .unwrap()
            .status;
        if !status.success() {
            return Fail(format!("run {i} exited with {status}"));
        }
        files.push(std::fs::read(&labels).unwrap());
    }
    verdict(
        files[0] == files[1] && files[0] == files[2],
        "label files from --jobs 1, 4, 1 compared byte for byte".into(),
    )
}

fn to_map(map: &Map) -> FeatureMap {
    FeatureMap::new(map.len(), map[0].len(), map.iter().flatten().copied().collect()).unwrap()
}

fn from_map(map: &FeatureMap) -> Map {
    (0..map.channels()).map(|c| map.channel(c).to_vec()).collect()
}

fn kernel_oracles() -> Outcome {
    let mut rng = make_rng(0xACCE_0010);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(4..=32);
        let params = random_block(&mut rng, m);
        let series: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let group = &params.conv_groups[0];
        let input = vec![series.clone()];
        let conv = from_map(&conv1d_forward(&to_map(&input), group).unwrap());
        for (a, b) in conv.iter().zip(naive_conv(&input, group)) {
            worst = worst.max(max_abs_diff(a, &b));
        }
        let map = random_map(&mut rng, group.filters, m);
        let pooled = from_map(&max_pool(&to_map(&map), params.pool_size).unwrap());
        for (a, b) in pooled.iter().zip(naive_pool(&map, params.pool_size)) {
            worst = worst.max(max_abs_diff(a, &b));
        }
        let steps = rng.random_range(1..=6);
        let seq = random_map(&mut rng, params.lstm.in_channels, steps);
        let h = lstm_forward(&to_map(&seq), &params.lstm).unwrap();
        worst = worst.max(max_abs_diff(&h, &naive_lstm(&seq, &params.lstm)));
        let block = block_forward(&series, &params).unwrap();
        worst = worst.max(max_abs_diff(&block, &naive_block(&series, &params)));
    }

    let mut increases = 0;
    for _ in 0..100 {
        let n = rng.random_range(5..=60);
        let d = rng.random_range(1..=4);
        let k = rng.random_range(1..=n.min(6));
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let centre = (i % 3) as f64 * 4.0;
                (0..d).map(|_| centre + rng.random_range(-2.0..2.0)).collect()
            })
            .collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let init = kmeans_pp_init(&x, k, rng.random()).unwrap();
        let result = lloyd(&x, init, 300, 0.0).unwrap();
        if result.inertia_history.windows(2).any(|w| w[1] > w[0]) {
            increases += 1;
        }
    }
    verdict(
        worst <= 1e-9 && increases == 0,
        format!("max deviation {worst:.2e}, {increases}/100 k-means runs with rising inertia"),
    )
}

fn elbow() -> Outcome {
    let ks: Vec<usize> = (2..=8).collect();
    let mut picks = Vec::new();
    for seed in 0..10u64 {
        let data = generate_cbf(100, 128, 1000 + seed).unwrap();
        let curve = elbow_curve(&data, &Hyperparams::new(3).with_seed(seed), &ks).unwrap();
        picks.push(curve.elbow());
    }
    let hits = picks.iter().filter(|&&p| p == Some(3)).count();
    let shown: Vec<String> = picks.iter().map(|p| p.map_or("-".into(), |k| k.to_string())).collect();
    verdict(hits >= 8, format!("elbow at k=3 in {hits}/10 seeds [{}]", shown.join(" ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("ensemble size bound", bound),
        ("violation count example", violations_example),
        ("rand index oracle", rand_index_fuzz),
        ("planted consensus", planted_consensus),
        ("CBF accuracy", cbf_accuracy),
        ("UCR spot check", ucr_spot_check),
        ("linear scaling in n", || {
            scaling(ScaleMode::Instances, vec![200, 500, 1000, 2000, 4000], 0.95)
        }),
        ("linear scaling in m", || scaling(ScaleMode::Length, vec![256, 512, 1024, 2048], 0.90)),
        ("determinism", determinism),
        ("kernel oracles", kernel_oracles),
        ("elbow", elbow),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match check() {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!(
            "criterion {:>2} {tag} {name}: {detail} ({:.1}s)",
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
