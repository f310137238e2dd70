use lre_core::amc::{run_schedule, tolerance_sweep, AmcConfig, Schedule};
use lre_core::data::{make_blobs, BlobSpec, Splits};
use lre_core::nn::{evaluate, train, TrainConfig};
use lre_core::report::CompressionReport;
use lre_core::NetworkBuilder;

fn setup() -> (lre_core::Network<f32>, Splits) {
    let data = make_blobs(&BlobSpec::new(4, 10, 150, 1).separation(5.0)).unwrap();
    let splits = Splits::new(&data, 0.2, 0.2, 1).unwrap();
    let net = NetworkBuilder::new(&[10]).dense(32).relu().dense(16).relu().dense(4).build(1).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 10,
        ..TrainConfig::default()
    };
    (train(&net, &splits.train, &cfg).unwrap().network, splits)
}

fn config(schedule: Schedule) -> AmcConfig {
    AmcConfig {
        epsilon: 0.03,
        schedule,
        finetune_max_epochs: 4,
        learning_rate: 1e-3,
        ..AmcConfig::default()
    }
}

#[test]
fn accepted_steps_respect_the_tolerance() {
    let (teacher, splits) = setup();
    let snapshot = teacher.clone();
    for schedule in [Schedule::TopDown, Schedule::RoundRobin] {
        let cfg = config(schedule);
        let out = run_schedule(&teacher, &splits, &cfg).unwrap();
        assert_eq!(teacher, snapshot, "teacher was modified");
        let mut params = teacher.count_params().total;
        for r in out.records.iter().filter(|r| r.accepted) {
            assert!(out.baseline_accuracy - r.accuracy_after <= cfg.epsilon, "{r:?}");
            assert!(r.params_after < params);
            params = r.params_after;
        }
        assert_eq!(params, out.network.count_params().total);
        assert_eq!(out.final_accuracy, evaluate(&out.network, &splits.heldout).unwrap());
        let report = CompressionReport::new(&teacher, &out, serde_json::Value::Null, 0);
        let back = CompressionReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}

#[test]
fn same_seed_same_records() {
    let (teacher, splits) = setup();
    let cfg = config(Schedule::RoundRobin);
    let a = run_schedule(&teacher, &splits, &cfg).unwrap();
    let b = run_schedule(&teacher, &splits, &cfg).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.network, b.network);
}

#[test]
fn tampered_report_is_rejected() {
    let (teacher, splits) = setup();
    let out = run_schedule(&teacher, &splits, &config(Schedule::TopDown)).unwrap();
    let report = CompressionReport::new(&teacher, &out, serde_json::Value::Null, 0);
    let mut v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    v["summary"]["delta_total_pct"] = serde_json::json!(1.0);
    assert!(CompressionReport::from_json(&v.to_string()).is_err());
}

#[test]
fn sweep_reduction_shrinks_with_tolerance() {
    let (teacher, splits) = setup();
    let rows = tolerance_sweep(&teacher, &splits, &config(Schedule::TopDown), &[0.1, 0.03, 0.0]).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[1].delta_params_pct <= w[0].delta_params_pct), "{rows:?}");
    assert!(rows.iter().all(|r| r.delta_acc_pct <= 100.0 * r.epsilon + 1e-9));
}
