//! The compression loop: redundancy-guided shrink steps alternating with
//! distillation fine-tuning under an accuracy tolerance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Splits};
use crate::error::{Error, Result};
use crate::nn::loss::softmax;
use crate::nn::train::sgd_epoch;
use crate::nn::{evaluate, forward_logits, Network, Sgd};
use crate::pruner::{preactivation_perturbation, remove_units, GuardReport, RemovalOrder, Selection};
use crate::redundancy::{analyze, removal_count, AnalysisConfig, RedundancyAnalysis};
use crate::tensor::{Scalar, Tensor};

const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Maximally shrink one layer at a time, starting from the penultimate.
    #[default]
    TopDown,
    /// At most one shrink per layer per pass, until a pass changes nothing.
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmcConfig {
    /// Fraction of a layer's current units removed per shrink call.
    pub gamma: f64,
    /// Allowed held-out accuracy drop below the baseline.
    pub epsilon: f64,
    /// Weight of the hard-label term of the distillation loss.
    pub lambda: f64,
    pub temperature: f64,
    pub finetune_max_epochs: usize,
    pub plateau_patience: usize,
    pub lr_decay: f64,
    pub lr_floor: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub use_adjustment: bool,
    pub selection: Selection,
    /// Retry a rejected step with half as many removals until none remain.
    pub backoff: bool,
    /// Held-out samples used to measure pre-activation perturbation.
    pub probe_samples: usize,
    pub analysis: AnalysisConfig,
    pub seed: u64,
}

impl Default for AmcConfig {
    fn default() -> Self {
        Self {
            gamma: 0.75,
            epsilon: 0.05,
            lambda: 0.75,
            temperature: 4.0,
            finetune_max_epochs: 50,
            plateau_patience: 3,
            lr_decay: 0.5,
            lr_floor: 1e-6,
            learning_rate: 1e-4,
            momentum: 0.9,
            batch_size: 64,
            schedule: Schedule::TopDown,
            use_adjustment: true,
            selection: Selection::Greedy,
            backoff: true,
            probe_samples: 256,
            analysis: AnalysisConfig::default(),
            seed: 0,
        }
    }
}

impl AmcConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::invalid(msg)) };
        check(self.gamma > 0.0 && self.gamma < 1.0, "gamma must lie in (0, 1)")?;
        check(self.epsilon >= 0.0 && self.epsilon.is_finite(), "epsilon must be >= 0")?;
        check((0.0..=1.0).contains(&self.lambda), "lambda must lie in [0, 1]")?;
        check(self.temperature > 0.0 && self.temperature.is_finite(), "temperature must be > 0")?;
        check(self.lr_decay > 0.0 && self.lr_decay < 1.0, "lr_decay must lie in (0, 1)")?;
        check(self.lr_floor > 0.0, "lr_floor must be > 0")?;
        check(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            "learning_rate must be >= 0",
        )?;
        check((0.0..1.0).contains(&self.momentum), "momentum must lie in [0, 1)")?;
        check(self.batch_size >= 1, "batch_size must be >= 1")?;
        check(self.plateau_patience >= 1, "plateau_patience must be >= 1")?;
        check(self.analysis.jitter >= 0.0, "analysis.jitter must be >= 0")?;
        Ok(())
    }
}

fn cross_entropy_rows(target: &[f64], logq: &[f64]) -> f64 {
    -target.iter().zip(logq).map(|(p, lq)| p * lq).sum::<f64>()
}

/// Batch mean of `(1−λ)·H(softmax(z/T), softmax(v/T)) + λ·H(y, softmax(v))`
/// for student logits `v`, teacher logits `z` and labels `y`, together with
/// its gradient with respect to `v`. Logarithms are floored at `1e-12`.
pub fn distill_loss_grad<T: Scalar>(
    student: &Tensor<T>,
    teacher: &Tensor<T>,
    labels: &[usize],
    temperature: f64,
    lambda: f64,
) -> Result<(f64, Tensor<T>)> {
    if student.shape() != teacher.shape() || student.rank() != 2 {
        return Err(Error::shape(format!(
            "student logits {:?} vs teacher logits {:?}",
            student.shape(),
            teacher.shape()
        )));
    }
    let (b, c) = (student.rows(), student.cols());
    if labels.len() != b {
        return Err(Error::shape(format!("{b} logit rows but {} labels", labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::invalid(format!("label {y} outside [0, {c})")));
    }
    let v = student.cast::<f64>();
    let z = teacher.cast::<f64>();
    let p_t = softmax(&z, temperature);
    let q_t = softmax(&v, temperature);
    let q = softmax(&v, 1.0);
    let mut loss = 0.0;
    let mut grad = vec![0.0; b * c];
    for i in 0..b {
        let (pt, qt, q1) = (p_t.row(i), q_t.row(i), q.row(i));
        let log_qt: Vec<f64> = qt.iter().map(|x| x.max(LOG_FLOOR).ln()).collect();
        let soft = cross_entropy_rows(pt, &log_qt);
        let hard = -q1[labels[i]].max(LOG_FLOOR).ln();
        loss += (1.0 - lambda) * soft + lambda * hard;
        for k in 0..c {
            let onehot = if k == labels[i] { 1.0 } else { 0.0 };
            grad[i * c + k] =
                ((1.0 - lambda) * (qt[k] - pt[k]) / temperature + lambda * (q1[k] - onehot)) / b as f64;
        }
    }
    let grad = Tensor::from_parts(vec![b, c], grad.into_iter().map(T::from_f64_lossy).collect());
    Ok((loss / b as f64, grad))
}

pub fn distill_loss<T: Scalar>(
    student: &Tensor<T>,
    teacher: &Tensor<T>,
    labels: &[usize],
    temperature: f64,
    lambda: f64,
) -> Result<f64> {
    distill_loss_grad(student, teacher, labels, temperature, lambda).map(|(l, _)| l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    WithinTolerance,
    EpochsExhausted,
    LearningRateFloor,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct FineTuneOutcome {
    /// Best held-out network seen (the input if nothing improved on it).
    pub network: Network<f32>,
    pub accuracy: f64,
    pub epochs: usize,
    pub final_learning_rate: f64,
    pub stop: StopReason,
}

/// Fine-tuning driver with a caller-supplied epoch. `epoch` trains the
/// network in place at the given learning rate and returns its mean loss.
///
/// Stops once held-out accuracy is within `epsilon` of `baseline_accuracy`
/// (checked before the first epoch), after `finetune_max_epochs`, or once the
/// learning rate, multiplied by `lr_decay` after every `plateau_patience`
/// epochs without improvement, falls below `lr_floor`. A non-finite loss
/// restores the last good network.
pub fn fine_tune_with<F>(
    student: &Network<f32>,
    heldout: &LabeledDataset,
    baseline_accuracy: f64,
    cfg: &AmcConfig,
    mut epoch: F,
) -> Result<FineTuneOutcome>
where
    F: FnMut(&mut Network<f32>, f64) -> Result<f64>,
{
    let target = baseline_accuracy - cfg.epsilon;
    let mut net = student.clone();
    let mut acc = evaluate(&net, heldout)?;
    let mut best = (net.clone(), acc);
    let mut lr = cfg.learning_rate;
    let mut stale = 0;
    let mut epochs = 0;
    let stop = loop {
        if acc >= target {
            break StopReason::WithinTolerance;
        }
        if epochs >= cfg.finetune_max_epochs {
            break StopReason::EpochsExhausted;
        }
        let loss = epoch(&mut net, lr)?;
        epochs += 1;
        if !loss.is_finite() || !net.layers().iter().all(layer_is_finite) {
            break StopReason::Diverged;
        }
        acc = evaluate(&net, heldout)?;
        if acc > best.1 {
            best = (net.clone(), acc);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.plateau_patience {
                stale = 0;
                lr *= cfg.lr_decay;
                if lr < cfg.lr_floor {
                    break StopReason::LearningRateFloor;
                }
            }
        }
    };
    let (network, accuracy) = if stop == StopReason::WithinTolerance && acc >= best.1 {
        (net, acc)
    } else {
        best
    };
    Ok(FineTuneOutcome {
        network,
        accuracy,
        epochs,
        final_learning_rate: lr,
        stop,
    })
}

fn layer_is_finite(layer: &crate::nn::Layer<f32>) -> bool {
    match layer {
        crate::nn::Layer::Dense { weight, bias } | crate::nn::Layer::Conv2d { weight, bias, .. } => {
            weight.is_finite() && bias.iter().all(|b| b.is_finite())
        }
        _ => true,
    }
}

/// Distills `teacher` into `student` on `train` with SGD, monitoring `heldout`.
pub fn fine_tune(
    student: &Network<f32>,
    teacher: &Network<f32>,
    train: &LabeledDataset,
    heldout: &LabeledDataset,
    baseline_accuracy: f64,
    cfg: &AmcConfig,
    seed: u64,
) -> Result<FineTuneOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("fine-tuning needs training data"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum);
    let mut order: Vec<usize> = (0..train.len()).collect();
    fine_tune_with(student, heldout, baseline_accuracy, cfg, |net, lr| {
        opt.learning_rate = lr as f32;
        order.shuffle(&mut rng);
        sgd_epoch(net, train, &order, cfg.batch_size, &mut opt, |x, y, logits| {
            let z = forward_logits(teacher, x)?;
            distill_loss_grad(logits, &z, y, cfg.temperature, cfg.lambda)
        })
    })
}

/// One shrink call on a layer.
#[derive(Debug, Clone)]
pub struct ShrinkStep {
    pub network: Network<f32>,
    pub removed: Vec<usize>,
    pub guards: Vec<GuardReport>,
    pub analysis: Option<RedundancyAnalysis>,
}

/// Analyzes layer `k` on `inputs` and removes `count` units one by one with
/// readjustment and guards, reusing the single analysis across removals.
pub fn lre_shrink_count(
    net: &Network<f32>,
    k: usize,
    inputs: &Tensor<f32>,
    count: usize,
    cfg: &AmcConfig,
) -> Result<ShrinkStep> {
    if count == 0 {
        return Ok(ShrinkStep {
            network: net.clone(),
            removed: Vec::new(),
            guards: Vec::new(),
            analysis: None,
        });
    }
    let analysis = analyze(net, k, inputs, &cfg.analysis)?;
    let order = match cfg.selection {
        Selection::Greedy => RemovalOrder::Greedy(count),
        Selection::Ranked => RemovalOrder::Ranked(count),
    };
    let out = remove_units(net, k, &analysis, order, cfg.use_adjustment)?;
    Ok(ShrinkStep {
        network: out.network,
        removed: out.removed,
        guards: out.guards,
        analysis: Some(analysis),
    })
}

/// Shrinks layer `k` by `⌊gamma·n_k⌋` units (never emptying it).
pub fn lre_shrink(net: &Network<f32>, k: usize, inputs: &Tensor<f32>, cfg: &AmcConfig) -> Result<ShrinkStep> {
    if k >= net.layers().len() || !net.layers()[k].is_parametric() {
        return Err(Error::invalid(format!("layer {k} is not a dense/conv layer")));
    }
    lre_shrink_count(net, k, inputs, removal_count(net.units(k), cfg.gamma), cfg)
}

/// One attempted shrink step of a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkRecord {
    pub step: usize,
    pub layer: usize,
    pub units_before: usize,
    pub removed: Vec<usize>,
    pub guards_fired: usize,
    pub accuracy_before: f64,
    /// Held-out accuracy right after the shrink, before any fine-tuning.
    pub accuracy_pruned: f64,
    /// Held-out accuracy of the step's final network.
    pub accuracy_after: f64,
    pub params_before: usize,
    pub params_after: usize,
    pub fine_tuned: bool,
    pub finetune_epochs: usize,
    pub accepted: bool,
    /// Relative change of the consumer's pre-activation on the probe, with
    /// and without readjustment of the same removals.
    pub perturbation_adjusted: Option<f64>,
    pub perturbation_unadjusted: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScheduleOutcome {
    pub network: Network<f32>,
    pub records: Vec<ShrinkRecord>,
    pub baseline_accuracy: f64,
    pub final_accuracy: f64,
}

fn probe_of(splits: &Splits, n: usize) -> Tensor<f32> {
    let source = if splits.heldout.is_empty() {
        &splits.train
    } else {
        &splits.heldout
    };
    source.head(n.max(1)).inputs().clone()
}

fn perturbation_pair(
    before: &Network<f32>,
    k: usize,
    step: &ShrinkStep,
    probe: &Tensor<f32>,
) -> (Option<f64>, Option<f64>) {
    let Some(consumer) = before.consumer_of(k) else {
        return (None, None);
    };
    let Some(analysis) = &step.analysis else {
        return (None, None);
    };
    let variant = |adjust: bool| {
        remove_units(before, k, analysis, RemovalOrder::Fixed(&step.removed), adjust)
            .and_then(|o| preactivation_perturbation(before, &o.network, consumer, probe))
            .ok()
    };
    (variant(true), variant(false))
}

struct Runner<'a> {
    teacher: &'a Network<f32>,
    splits: &'a Splits,
    cfg: &'a AmcConfig,
    probe: Tensor<f32>,
    baseline: f64,
    records: Vec<ShrinkRecord>,
}

impl Runner<'_> {
    fn within(&self, acc: f64) -> bool {
        self.baseline - acc <= self.cfg.epsilon
    }

    /// Tries to shrink layer `k`, backing off on rejection. Returns the
    /// accepted network, if any.
    fn attempt(&mut self, current: &Network<f32>, current_acc: f64, k: usize) -> Result<Option<(Network<f32>, f64)>> {
        let n = current.units(k);
        let mut count = removal_count(n, self.cfg.gamma);
        while count > 0 {
            let step_index = self.records.len();
            let step = lre_shrink_count(current, k, self.splits.train.inputs(), count, self.cfg)?;
            let (pa, pu) = perturbation_pair(current, k, &step, &self.probe);
            let pruned_acc = evaluate(&step.network, &self.splits.heldout)?;
            let mut record = ShrinkRecord {
                step: step_index,
                layer: k,
                units_before: n,
                removed: step.removed.clone(),
                guards_fired: step.guards.iter().filter(|g| !g.applied).count(),
                accuracy_before: current_acc,
                accuracy_pruned: pruned_acc,
                accuracy_after: pruned_acc,
                params_before: current.count_params().total,
                params_after: step.network.count_params().total,
                fine_tuned: false,
                finetune_epochs: 0,
                accepted: false,
                perturbation_adjusted: pa,
                perturbation_unadjusted: pu,
            };
            let mut candidate = step.network;
            let mut acc = pruned_acc;
            if !self.within(acc) {
                let seed = self.cfg.seed.wrapping_add(step_index as u64);
                let ft = fine_tune(
                    &candidate,
                    self.teacher,
                    &self.splits.train,
                    &self.splits.heldout,
                    self.baseline,
                    self.cfg,
                    seed,
                )?;
                record.fine_tuned = true;
                record.finetune_epochs = ft.epochs;
                candidate = ft.network;
                acc = ft.accuracy;
                record.accuracy_after = acc;
            }
            record.accepted = self.within(acc);
            self.records.push(record);
            if self.within(acc) {
                return Ok(Some((candidate, acc)));
            }
            if !self.cfg.backoff {
                break;
            }
            count /= 2;
        }
        Ok(None)
    }
}

/// Compresses a trained network. The input network is the frozen teacher and
/// the baseline is its held-out accuracy; every accepted step keeps held-out
/// accuracy within `epsilon` of that baseline.
pub fn run_schedule(teacher: &Network<f32>, splits: &Splits, cfg: &AmcConfig) -> Result<ScheduleOutcome> {
    cfg.validate()?;
    if splits.heldout.is_empty() {
        return Err(Error::invalid("the schedule needs a non-empty held-out split"));
    }
    let baseline = evaluate(teacher, &splits.heldout)?;
    let mut runner = Runner {
        teacher,
        splits,
        cfg,
        probe: probe_of(splits, cfg.probe_samples),
        baseline,
        records: Vec::new(),
    };
    let mut layers = teacher.prunable_layers();
    layers.reverse();
    let mut current = teacher.clone();
    let mut acc = baseline;
    match cfg.schedule {
        Schedule::TopDown => {
            for &k in &layers {
                while current.units(k) >= 2 {
                    match runner.attempt(&current, acc, k)? {
                        Some((net, a)) => (current, acc) = (net, a),
                        None => break,
                    }
                }
            }
        }
        Schedule::RoundRobin => loop {
            let mut changed = false;
            for &k in &layers {
                if current.units(k) < 2 {
                    continue;
                }
                if let Some((net, a)) = runner.attempt(&current, acc, k)? {
                    (current, acc) = (net, a);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        },
    }
    Ok(ScheduleOutcome {
        network: current,
        records: runner.records,
        baseline_accuracy: baseline,
        final_accuracy: acc,
    })
}

/// One row of a tolerance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub delta_params_pct: f64,
    pub delta_acc_pct: f64,
}

/// Runs the full schedule once per tolerance, always from the same teacher.
pub fn tolerance_sweep(
    teacher: &Network<f32>,
    splits: &Splits,
    cfg: &AmcConfig,
    epsilons: &[f64],
) -> Result<Vec<SweepRow>> {
    if epsilons.is_empty() {
        return Err(Error::invalid("no tolerances given"));
    }
    if epsilons.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::invalid("tolerances must be sorted in descending order"));
    }
    let base_params = teacher.count_params().total as f64;
    epsilons
        .iter()
        .map(|&epsilon| {
            let run_cfg = AmcConfig {
                epsilon,
                ..cfg.clone()
            };
            let out = run_schedule(teacher, splits, &run_cfg)?;
            Ok(SweepRow {
                epsilon,
                delta_params_pct: 100.0 * (1.0 - out.network.count_params().total as f64 / base_params),
                delta_acc_pct: 100.0 * (out.baseline_accuracy - out.final_accuracy),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, BlobSpec};
    use crate::nn::{train, NetworkBuilder, TrainConfig};
    use rand::{Rng, SeedableRng};

    #[test]
    fn hard_label_only_is_cross_entropy() {
        let v = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 0.0, 0.3, -0.2]).unwrap();
        let z = Tensor::new(vec![2, 3], vec![3.0, 1.0, 0.0, -1.0, 0.0, 1.0]).unwrap();
        let l = distill_loss(&v, &z, &[2, 1], 4.0, 1.0).unwrap();
        let (ce, _) = crate::nn::loss::softmax_cross_entropy(&v, &[2, 1]);
        assert!((l - ce).abs() < 1e-12);
    }

    #[test]
    fn soft_term_of_identical_logits_is_entropy() {
        let z: Tensor<f64> = Tensor::new(vec![1, 3], vec![1.0, 2.0, 0.5]).unwrap();
        let t = 2.0;
        let p = softmax(&z, t);
        let entropy: f64 = -p.data().iter().map(|&x: &f64| x * x.ln()).sum::<f64>();
        let l = distill_loss(&z, &z, &[0], t, 0.0).unwrap();
        assert!((l - entropy).abs() < 1e-12);
    }

    #[test]
    fn two_class_scalar_evaluation() {
        let v = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let l = distill_loss(&v, &v, &[0], 2.0, 0.75).unwrap();
        // softmax([0.5, 0]) and softmax([1, 0]) written out by hand
        let p0 = 0.5f64.exp() / (0.5f64.exp() + 1.0);
        let p1 = 1.0 - p0;
        let soft = -(p0 * p0.ln() + p1 * p1.ln());
        let hard = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((l - (0.25 * soft + 0.75 * hard)).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let v = Tensor::new(vec![2, 4], (0..8).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let z = Tensor::new(vec![2, 4], (0..8).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let labels = [rng.random_range(0..4), rng.random_range(0..4)];
            let (_, g) = distill_loss_grad::<f64>(&v, &z, &labels, 3.0, 0.6).unwrap();
            for i in 0..8 {
                let h = 1e-5;
                let mut up = v.clone();
                up.data_mut()[i] += h;
                let mut down = v.clone();
                down.data_mut()[i] -= h;
                let fd = (distill_loss(&up, &z, &labels, 3.0, 0.6).unwrap()
                    - distill_loss(&down, &z, &labels, 3.0, 0.6).unwrap())
                    / (2.0 * h);
                let an = g.data()[i];
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(fd.abs()).max(1e-3));
            }
        }
    }

    fn blob_splits() -> Splits {
        let d = make_blobs(&BlobSpec::new(3, 6, 80, 2).separation(8.0)).unwrap();
        Splits::new(&d, 0.2, 0.0, 1).unwrap()
    }

    #[test]
    fn frozen_gradients_hit_the_floor_on_schedule() {
        let splits = blob_splits();
        // an untrained net far from a demanding baseline
        let net = NetworkBuilder::new(&[6]).dense(4).relu().dense(3).build(0).unwrap();
        let cfg = AmcConfig {
            epsilon: 0.0,
            ..AmcConfig::default()
        };
        let out = fine_tune_with(&net, &splits.heldout, 2.0, &cfg, |_, _| Ok(1.0)).unwrap();
        let decays = (cfg.learning_rate / cfg.lr_floor).log2().ceil() as usize;
        assert_eq!(out.stop, StopReason::LearningRateFloor);
        assert_eq!(out.epochs, decays * cfg.plateau_patience);
        assert_eq!(out.epochs, 21);
    }

    #[test]
    fn nan_loss_restores_last_good() {
        let splits = blob_splits();
        let net = NetworkBuilder::new(&[6]).dense(4).relu().dense(3).build(0).unwrap();
        let cfg = AmcConfig::default();
        let out = fine_tune_with(&net, &splits.heldout, 2.0, &cfg, |n, _| {
            if let crate::nn::Layer::Dense { weight, .. } = &mut n.layers_mut()[0] {
                weight.data_mut()[0] = f32::NAN;
            }
            Ok(f64::NAN)
        })
        .unwrap();
        assert_eq!(out.stop, StopReason::Diverged);
        assert_eq!(out.network, net);
    }

    fn trained() -> (Network<f32>, Splits) {
        let splits = blob_splits();
        let net = NetworkBuilder::new(&[6]).dense(8).relu().dense(6).relu().dense(3).build(4).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            max_epochs: 30,
            ..TrainConfig::default()
        };
        (train(&net, &splits.train, &cfg).unwrap().network, splits)
    }

    #[test]
    fn student_equal_to_teacher_stops_at_once() {
        let (net, splits) = trained();
        let base = evaluate(&net, &splits.heldout).unwrap();
        let out = fine_tune(&net, &net, &splits.train, &splits.heldout, base, &AmcConfig::default(), 0).unwrap();
        assert_eq!(out.epochs, 0);
        assert_eq!(out.stop, StopReason::WithinTolerance);
    }

    #[test]
    fn loose_tolerance_prunes_every_layer_to_one_unit() {
        let (net, splits) = trained();
        let cfg = AmcConfig {
            epsilon: 1.0,
            ..AmcConfig::default()
        };
        let out = run_schedule(&net, &splits, &cfg).unwrap();
        for k in net.prunable_layers() {
            assert_eq!(out.network.units(k), 1);
        }
        assert!(out.records.iter().all(|r| !r.fine_tuned && r.accepted));
        for w in out.records.windows(2) {
            assert!(w[1].params_before < w[0].params_before);
        }
    }

    #[test]
    fn shrink_boundaries() {
        let (net, splits) = trained();
        let x = splits.train.inputs();
        let tiny = AmcConfig {
            gamma: 0.05,
            ..AmcConfig::default()
        };
        let step = lre_shrink(&net, 2, x, &tiny).unwrap();
        assert!(step.removed.is_empty());
        assert_eq!(step.network, net);
        let two = NetworkBuilder::new(&[6]).dense(2).relu().dense(3).build(1).unwrap();
        let big = AmcConfig {
            gamma: 0.9,
            ..AmcConfig::default()
        };
        let step = lre_shrink(&two, 0, x, &big).unwrap();
        assert_eq!(step.removed.len(), 1);
        assert_eq!(step.network.units(0), 1);
    }

    #[test]
    fn sweep_shapes() {
        let (net, splits) = trained();
        let cfg = AmcConfig {
            finetune_max_epochs: 2,
            ..AmcConfig::default()
        };
        assert!(tolerance_sweep(&net, &splits, &cfg, &[0.0, 0.1]).is_err());
        let rows = tolerance_sweep(&net, &splits, &cfg, &[0.5]).unwrap();
        assert_eq!(rows.len(), 1);
        let run = run_schedule(&net, &splits, &AmcConfig { epsilon: 0.5, ..cfg }).unwrap();
        let expect = 100.0 * (1.0 - run.network.count_params().total as f64 / net.count_params().total as f64);
        assert_eq!(rows[0].delta_params_pct, expect);
    }
}
