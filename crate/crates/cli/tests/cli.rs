use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lre_core::nn::{io as model_io, Layer};
use lre_core::report::CompressionReport;
use lre_core::{Network, Tensor};
use lre_prune::run;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const BLOBS: &str = r#"
seed = 3

[dataset]
kind = "blobs"
classes = 3
dim = 8
per_class = 200
separation = 8.0
seed = 3

[model]
layers = ["dense:24", "relu", "dense:24", "relu", "dense:3"]

[train]
learning_rate = 0.01
max_epochs = 15

[compress]
learning_rate = 0.001
finetune_max_epochs = 5
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn lre(args: &[&str]) -> i32 {
    let mut all = vec!["lre-prune"];
    all.extend_from_slice(args);
    run(all)
}

/// Trains the blobs model into `dir/train` and returns (config, model) paths.
fn trained(dir: &TempDir) -> (String, String) {
    let cfg = s(&write(dir.path(), "job.toml", BLOBS));
    let out = s(&dir.path().join("train"));
    assert_eq!(lre(&["train", "--config", &cfg, "--out", &out]), 0);
    (cfg, s(&dir.path().join("train/model.lre")))
}

#[test]
fn train_reaches_separable_accuracy_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = trained(&dir);
    let metrics = fs::read_to_string(dir.path().join("train/train_metrics.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert!(v["accuracy"].as_f64().unwrap() >= 0.99, "{metrics}");
    let again = s(&dir.path().join("again"));
    assert_eq!(lre(&["train", "--config", &cfg, "--out", &again]), 0);
    assert_eq!(metrics, fs::read_to_string(dir.path().join("again/train_metrics.json")).unwrap());
    assert_eq!(
        fs::read(dir.path().join("train/model.lre")).unwrap(),
        fs::read(dir.path().join("again/model.lre")).unwrap()
    );
    // a different seed gives a different initialization
    let other = s(&dir.path().join("other"));
    assert_eq!(lre(&["train", "--config", &cfg, "--seed", "4", "--out", &other]), 0);
    assert_ne!(
        fs::read(dir.path().join("train/model.lre")).unwrap(),
        fs::read(dir.path().join("other/model.lre")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write(
        dir.path(),
        "missing.toml",
        "[dataset]\nkind = \"csv\"\npath = \"nowhere.csv\"\n[model]\nlayers = [\"dense:2\"]\n",
    );
    assert_eq!(lre(&["train", "--config", &s(&missing)]), 2);
    let bad = write(dir.path(), "bad.toml", &format!("{BLOBS}\n[split]\nheldout_fraction = 2.0\n"));
    assert_eq!(lre(&["train", "--config", &s(&bad)]), 2);
    let unknown = write(dir.path(), "unknown.toml", &BLOBS.replace("[train]", "[train]\nepochs = 3"));
    assert_eq!(lre(&["train", "--config", &s(&unknown)]), 2);
    let cfg = write(dir.path(), "job.toml", BLOBS);
    assert_eq!(lre(&["eval", "--config", &s(&cfg), "--model", "/nonexistent/model.lre"]), 2);
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "job.toml", BLOBS);
    let blocker = write(dir.path(), "file", "not a directory");
    assert_eq!(lre(&["train", "--config", &s(&cfg), "--out", &s(&blocker.join("sub"))]), 1);
}

#[test]
fn compress_eval_project_audit() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, model) = trained(&dir);
    let out = dir.path().join("c");
    assert_eq!(lre(&["compress", "--config", &cfg, "--model", &model, "--out", &s(&out)]), 0);
    let report = CompressionReport::from_json(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let teacher = model_io::load(&model).unwrap();
    assert_eq!(report.baseline.params, teacher.count_params());
    let compressed = model_io::load(out.join("compressed.lre")).unwrap();
    assert_eq!(report.summary.final_params, compressed.count_params());
    assert!(report.summary.delta_acc_pct <= 100.0 * report.config["compress"]["epsilon"].as_f64().unwrap() + 1e-9);
    let lines = fs::read_to_string(out.join("steps.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), report.steps.len());
    let csv = fs::read_to_string(out.join("perturbation.csv")).unwrap();
    assert!(csv.starts_with("step,layer,adjusted,unadjusted\n"));

    assert_eq!(lre(&["eval", "--config", &cfg, "--model", &s(&out.join("compressed.lre")), "--out", &s(&out)]), 0);
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["params"]["total"].as_u64().unwrap() as usize, compressed.count_params().total);

    assert_eq!(lre(&["project", "--config", &cfg, "--model", &model, "--layer", "2", "--out", &s(&out)]), 0);
    let proj = fs::read_to_string(out.join("projection_layer2.csv")).unwrap();
    let mut lines = proj.lines();
    assert!(lines.next().unwrap().starts_with("# explained_variance="));
    assert_eq!(lines.next().unwrap(), "x,y,label");
    let rows: Vec<[f64; 2]> = lines
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            [f[0], f[1]]
        })
        .collect();
    for c in 0..2 {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64;
        assert!(mean.abs() < 1e-8);
    }
    assert_eq!(lre(&["project", "--config", &cfg, "--model", &model, "--layer", "1", "--out", &s(&out)]), 2);

    assert_eq!(lre(&["audit", "--config", &cfg, "--model", &model, "--layer", "0", "--out", &s(&out)]), 0);
    let audit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("audit_layer0.json")).unwrap()).unwrap();
    assert!(audit.is_object());
    assert_eq!(lre(&["audit", "--config", &cfg, "--model", &model, "--layer", "4", "--out", &s(&out)]), 2);
}

#[test]
fn sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, model) = trained(&dir);
    let out = dir.path().join("s");
    assert_eq!(lre(&["sweep", "--config", &cfg, "--model", &model, "--epsilons", "0.05", "--out", &s(&out)]), 0);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "epsilon,delta_params_pct,delta_acc_pct");
    assert_eq!(csv.lines().count(), 2);

    assert_eq!(
        lre(&["sweep", "--config", &cfg, "--model", &model, "--epsilons", "0.1,0.02,0", "--out", &s(&out)]),
        0
    );
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let reductions: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(reductions.len(), 3);
    assert!(reductions.windows(2).all(|w| w[1] <= w[0]), "{reductions:?}");

    for bad in ["0.05,x", "0.01,0.05", ""] {
        assert_eq!(lre(&["sweep", "--config", &cfg, "--model", &model, "--epsilons", bad]), 2, "{bad}");
    }
}

/// Four hidden units each pass one input coordinate through; units 4 and 5
/// are exact multiples of units 0 and 2. Every class depends on its own unit.
fn planted_network() -> Network<f32> {
    let mut w0 = vec![0f32; 6 * 4];
    for i in 0..4 {
        w0[i * 4 + i] = 1.0;
    }
    w0[4 * 4] = 2.0;
    w0[5 * 4 + 2] = 0.5;
    let mut w1 = vec![0f32; 4 * 6];
    for c in 0..4 {
        w1[c * 6 + c] = 1.0;
    }
    w1[0] = 0.5;
    w1[4] = 0.25;
    w1[2 * 6 + 2] = 0.5;
    w1[2 * 6 + 5] = 2.0;
    let layers = vec![
        Layer::Dense {
            weight: Tensor::new(vec![6, 4], w0).unwrap(),
            bias: vec![0.0; 6],
        },
        Layer::Relu,
        Layer::Dense {
            weight: Tensor::new(vec![4, 6], w1).unwrap(),
            bias: vec![0.0; 4],
        },
    ];
    Network::new(layers, vec![4], 4).unwrap()
}

fn planted_csv(path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut text = String::from("label,f0,f1,f2,f3\n");
    for i in 0..400 {
        let c = i % 4;
        let x: Vec<f64> = (0..4)
            .map(|d| if d == c { 3.0 } else { 0.0 } + rng.random_range(0.0..0.5))
            .collect();
        writeln!(text, "{c},{},{},{},{}", x[0], x[1], x[2], x[3]).unwrap();
    }
    fs::write(path, text).unwrap();
}

#[test]
fn zero_tolerance_removes_exactly_the_planted_units() {
    let dir = tempfile::tempdir().unwrap();
    planted_csv(&dir.path().join("planted.csv"));
    let model = dir.path().join("planted.lre");
    model_io::save(&planted_network(), &model).unwrap();
    let cfg = write(
        dir.path(),
        "zero.toml",
        r#"
[dataset]
kind = "csv"
path = "planted.csv"

[compress]
epsilon = 0.0
finetune_max_epochs = 0
"#,
    );
    let out = dir.path().join("z");
    assert_eq!(lre(&["compress", "--config", &s(&cfg), "--model", &s(&model), "--out", &s(&out)]), 0);
    let report = CompressionReport::from_json(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.baseline.accuracy, 1.0);
    assert_eq!(report.summary.delta_acc_pct, 0.0);
    assert_eq!(report.summary.removed_units, 2);
    let compressed = model_io::load(out.join("compressed.lre")).unwrap();
    assert_eq!(compressed.units(0), 4);

    // the adjusted step leaves the consumer's pre-activations untouched,
    // plain deletion of the same units does not
    let accepted: Vec<_> = report.steps.iter().filter(|s| s.accepted).collect();
    assert_eq!(accepted.len(), 1);
    let adjusted = accepted[0].perturbation_adjusted.unwrap();
    let unadjusted = accepted[0].perturbation_unadjusted.unwrap();
    assert!(adjusted < 1e-5 && adjusted < unadjusted, "{adjusted} vs {unadjusted}");
}
