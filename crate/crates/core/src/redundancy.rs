//! Per-layer linear redundancy: how well each unit's activation is predicted
//! by a zero-diagonal linear combination of the other units in its layer.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::{add_jitter, spd_inverse, SymMatrix, DEFAULT_JITTER};
use crate::nn::{forward, Layer, Network};
use crate::tensor::{matmul, Matrix, Tensor};

/// Activation columns gathered when no budget is configured.
pub const MIN_SAMPLE_BUDGET: usize = 2048;

/// `max(4·n, 2048)` activation columns for a layer of `n` units.
pub fn default_sample_budget(units: usize) -> usize {
    (4 * units).max(MIN_SAMPLE_BUDGET)
}

/// Post-activation outputs of parametric layer `k` as an `n_k × m` matrix.
///
/// Dense layers contribute one column per sample. Conv layers contribute one
/// column per sample and spatial position, with channels as rows. Samples are
/// consumed in order until `m` columns are filled or the inputs run out.
pub fn collect_activations(net: &Network<f32>, k: usize, inputs: &Tensor<f32>, m: usize) -> Result<Matrix> {
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    if k >= net.layers().len() || !net.layers()[k].is_parametric() {
        return Err(Error::invalid(format!("layer {k} is not a dense/conv layer")));
    }
    let n = net.units(k);
    let total = inputs.shape().first().copied().unwrap_or(0);
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(m); n];
    let mut filled = 0;
    let mut start = 0;
    while filled < m && start < total {
        let end = (start + 256).min(total);
        let idx: Vec<usize> = (start..end).collect();
        let batch = gather_rows(inputs, &idx);
        let (_, caps) = forward(net, &batch, &[k])?;
        let post = &caps[0].post;
        // [B, n] or [B, n, H, W]
        let positions: usize = post.shape()[2..].iter().product();
        let data = post.data();
        'samples: for s in 0..idx.len() {
            for p in 0..positions {
                if filled == m {
                    break 'samples;
                }
                for (u, row) in rows.iter_mut().enumerate() {
                    row.push(data[(s * n + u) * positions + p] as f64);
                }
                filled += 1;
            }
        }
        start = end;
    }
    if filled < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: filled });
    }
    Ok(Matrix::from_parts(vec![n, filled], rows.concat()))
}

fn gather_rows(t: &Tensor<f32>, idx: &[usize]) -> Tensor<f32> {
    let sample = t.len() / t.shape()[0];
    let mut shape = t.shape().to_vec();
    shape[0] = idx.len();
    let mut data = Vec::with_capacity(idx.len() * sample);
    for &i in idx {
        data.extend_from_slice(&t.data()[i * sample..(i + 1) * sample]);
    }
    Tensor::from_parts(shape, data)
}

/// `S = (1/m)·Z Zᵀ` plus `jitter · trace/n` on the diagonal.
pub fn correlation(z: &Matrix, jitter: f64) -> Result<SymMatrix> {
    if z.rank() != 2 || z.is_empty() {
        return Err(Error::shape("correlation needs a non-empty n × m matrix"));
    }
    Ok(add_jitter(&SymMatrix::gram(z), jitter))
}

/// Least-squares prediction matrix `A = I − D·S⁻¹` with `D = diag(S⁻¹)⁻¹`,
/// i.e. `A[l][j] = −P[l][j] / P[l][l]` for `P = S⁻¹`, and a zero diagonal.
pub fn closed_form_a(s: &SymMatrix) -> Result<Matrix> {
    let p = spd_inverse(s)?;
    let n = s.order();
    Ok(Matrix::from_fn(n, n, |l, j| {
        if l == j {
            0.0
        } else {
            -p.get(l, j) / p.get(l, l)
        }
    }))
}

/// Iterated Tikhonov refinement of a ridge solution `a⁰`. With
/// `S = G + ridge·I`, each step sets `a_l ← a⁰_l + ridge·(S₋ₗ₋ₗ)⁻¹·a_l`,
/// which converges to the unregularized least-squares row; the
/// principal-submatrix inverse comes from `P = S⁻¹` by a rank-one correction.
pub fn refine_ridge(a: &Matrix, s: &SymMatrix, ridge: f64, steps: usize) -> Result<Matrix> {
    if steps == 0 || ridge == 0.0 {
        return Ok(a.clone());
    }
    let p = spd_inverse(s)?.to_matrix();
    let n = s.order();
    let mut cur = a.clone();
    for _ in 0..steps {
        let w = matmul(&cur, &p)?;
        cur = Matrix::from_fn(n, n, |l, h| {
            if l == h {
                0.0
            } else {
                a.get(l, h) + ridge * (w.get(l, h) - p.get(l, h) * w.get(l, l) / p.get(l, l))
            }
        });
    }
    Ok(cur)
}

/// Projected gradient descent on `tr((I − A) S (I − A)ᵀ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdConfig {
    /// Fixed step; `None` uses the reciprocal of a Gershgorin bound on the
    /// largest eigenvalue of `S`.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    /// Stop once the objective fell by less than this fraction over `window`
    /// iterations.
    pub stop_tolerance: f64,
    pub window: usize,
    pub jitter: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            step_size: None,
            max_iters: 2000,
            stop_tolerance: 1e-7,
            window: 10,
            jitter: DEFAULT_JITTER,
        }
    }
}

/// Result of [`gd_from_correlation`].
#[derive(Debug, Clone)]
pub struct GdOutcome {
    pub a: Matrix,
    pub iterations: usize,
    /// Objective after every accepted step, starting at `A = 0`.
    pub objective: Vec<f64>,
}

/// `A` by projected gradient descent from the activations `Z`.
pub fn gd_a(z: &Matrix, cfg: &GdConfig) -> Result<Matrix> {
    let s = correlation(z, cfg.jitter)?;
    gd_from_correlation(&s, cfg).map(|o| o.a)
}

/// `(I − A)·S` and the objective `Σ (U S) ∘ U`.
fn residual_product(u: &Matrix, s: &Matrix) -> (Matrix, f64) {
    let us = matmul(u, s).expect("square");
    let f = us.data().iter().zip(u.data()).map(|(a, b)| a * b).sum();
    (us, f)
}

pub fn gd_from_correlation(s: &SymMatrix, cfg: &GdConfig) -> Result<GdOutcome> {
    let n = s.order();
    let sm = s.to_matrix();
    let mut step = match cfg.step_size {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::invalid(format!("step_size must be positive, got {h}"))),
        None => {
            let bound = (0..n)
                .map(|i| (0..n).map(|j| s.get(i, j).abs()).sum::<f64>())
                .fold(0.0, f64::max);
            if bound > 0.0 {
                1.0 / bound
            } else {
                1.0
            }
        }
    };
    let window = cfg.window.max(1);
    let mut a = Matrix::zeros(vec![n, n]);
    let (mut us, mut f) = residual_product(&Matrix::identity(n), &sm);
    if !f.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    let mut history = vec![f];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        // grad = -2 (I - A) S; step along -grad, then zero the diagonal.
        let mut trial = a.clone();
        for (t, g) in trial.data_mut().iter_mut().zip(us.data()) {
            *t += 2.0 * step * g;
        }
        for i in 0..n {
            trial.set(i, i, 0.0);
        }
        let trial_u = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { -trial.get(i, j) });
        let (trial_us, trial_f) = residual_product(&trial_u, &sm);
        if !trial_f.is_finite() {
            return Err(Error::Divergence { iteration: iterations });
        }
        if trial_f > f {
            step *= 0.5;
            if step < f64::MIN_POSITIVE {
                break;
            }
            continue;
        }
        (a, us, f) = (trial, trial_us, trial_f);
        history.push(f);
        let len = history.len();
        if len > window {
            let before = history[len - 1 - window];
            if before <= 0.0 || (before - f) / before < cfg.stop_tolerance {
                break;
            }
        }
    }
    Ok(GdOutcome {
        a,
        iterations,
        objective: history,
    })
}

/// How `A` is obtained from `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    ClosedForm,
    GradientDescent(GdConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Activation columns; `None` means [`default_sample_budget`].
    pub samples: Option<usize>,
    pub jitter: f64,
    pub solver: Solver,
    /// Ridge refinement steps applied to the closed-form solution.
    pub refine_steps: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            samples: None,
            jitter: DEFAULT_JITTER,
            solver: Solver::ClosedForm,
            refine_steps: 2,
        }
    }
}

/// `S`, `A` and residuals for one layer.
#[derive(Debug, Clone)]
pub struct RedundancyAnalysis {
    pub layer_index: usize,
    pub unit_count: usize,
    pub sample_count: usize,
    /// Jittered correlation matrix.
    pub s: SymMatrix,
    /// Absolute amount added to the diagonal of the raw Gram matrix.
    pub ridge: f64,
    pub a: Matrix,
    /// `r[l] = mean_t (Z[l,t] − A[l]·Z[:,t])²`.
    pub residuals: Vec<f64>,
    /// `mean_t |Z[l,t]|`.
    pub mean_abs: Vec<f64>,
}

impl RedundancyAnalysis {
    pub fn from_activations(layer_index: usize, z: &Matrix, cfg: &AnalysisConfig) -> Result<Self> {
        if z.rank() != 2 || z.cols() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: if z.rank() == 2 { z.cols() } else { 0 },
            });
        }
        let (n, m) = (z.rows(), z.cols());
        let raw = SymMatrix::gram(z);
        let s = add_jitter(&raw, cfg.jitter);
        let ridge = s.get(0, 0) - raw.get(0, 0);
        let a = match &cfg.solver {
            Solver::ClosedForm => refine_ridge(&closed_form_a(&s)?, &s, ridge, cfg.refine_steps)?,
            Solver::GradientDescent(gd) => gd_from_correlation(&s, gd)?.a,
        };
        let residuals = residuals(z, &a)?;
        let mean_abs = (0..n)
            .map(|l| z.row(l).iter().map(|v| v.abs()).sum::<f64>() / m as f64)
            .collect();
        Ok(Self {
            layer_index,
            unit_count: n,
            sample_count: m,
            s,
            ridge,
            a,
            residuals,
            mean_abs,
        })
    }

    /// Gram matrix without the jitter.
    pub fn raw_gram(&self) -> Matrix {
        let mut g = self.s.to_matrix();
        for i in 0..self.unit_count {
            let v = g.get(i, i) - self.ridge;
            g.set(i, i, v);
        }
        g
    }

    /// `(1/m)·‖Z − A Z‖²_F`.
    pub fn objective(&self) -> f64 {
        self.residuals.iter().sum()
    }

    /// JSON document with `S`, `A` and the residuals.
    pub fn to_json(&self) -> serde_json::Value {
        let n = self.unit_count;
        let rows = |m: &Matrix| -> Vec<Vec<f64>> { (0..n).map(|i| m.row(i).to_vec()).collect() };
        json!({
            "layer_index": self.layer_index,
            "unit_count": n,
            "sample_count": self.sample_count,
            "ridge": self.ridge,
            "s": rows(&self.s.to_matrix()),
            "a": rows(&self.a),
            "residuals": self.residuals,
            "mean_abs_activation": self.mean_abs,
        })
    }
}

/// Mean squared prediction error per unit, evaluated on `Z` directly.
pub fn residuals(z: &Matrix, a: &Matrix) -> Result<Vec<f64>> {
    let pred = matmul(a, z)?;
    let m = z.cols() as f64;
    Ok((0..z.rows())
        .map(|l| {
            z.row(l)
                .iter()
                .zip(pred.row(l))
                .map(|(x, p)| (x - p) * (x - p))
                .sum::<f64>()
                / m
        })
        .collect())
}

/// Collects activations of layer `k` and analyzes them.
pub fn analyze(net: &Network<f32>, k: usize, inputs: &Tensor<f32>, cfg: &AnalysisConfig) -> Result<RedundancyAnalysis> {
    let budget = cfg.samples.unwrap_or_else(|| default_sample_budget(net.units(k)));
    let z = collect_activations(net, k, inputs, budget)?;
    RedundancyAnalysis::from_activations(k, &z, cfg)
}

/// Number of units a shrink by `gamma` removes from a layer of `n`:
/// `⌊gamma·n⌋`, but never all of them.
pub fn removal_count(n: usize, gamma: f64) -> usize {
    // Nudge so that e.g. 0.1·30 still floors to 3.
    let raw = (gamma * n as f64 + 1e-9).floor() as usize;
    raw.min(n.saturating_sub(1))
}

/// Indices of the `⌊gamma·n⌋` units with the smallest residuals, ascending
/// by residual with ties broken by index.
pub fn rank_units(analysis: &RedundancyAnalysis, gamma: f64) -> Result<Vec<usize>> {
    rank_residuals(&analysis.residuals, gamma)
}

pub fn rank_residuals(residuals: &[f64], gamma: f64) -> Result<Vec<usize>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let mut order: Vec<usize> = (0..residuals.len()).collect();
    order.sort_by(|&x, &y| residuals[x].total_cmp(&residuals[y]).then(x.cmp(&y)));
    order.truncate(removal_count(residuals.len(), gamma));
    Ok(order)
}

/// Whether layer `k`'s activation passes through a ReLU before its consumer.
pub fn has_relu(net: &Network<f32>, k: usize) -> bool {
    net.layers()[k + 1..net.activation_end(k)]
        .iter()
        .any(|l| matches!(l, Layer::Relu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{plant_redundancy, Dependency, PlantMode, PlantSpec};
    use crate::nn::NetworkBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_z(n: usize, m: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_layer_on_unit_vectors() {
        let n = 4;
        let net = Network::new(
            vec![
                Layer::Dense {
                    weight: Tensor::identity(n),
                    bias: vec![0.0; n],
                },
                Layer::Relu,
                Layer::Dense {
                    weight: Tensor::identity(n),
                    bias: vec![0.0; n],
                },
            ],
            vec![n],
            n,
        )
        .unwrap();
        let z = collect_activations(&net, 0, &Tensor::identity(n), 100).unwrap();
        assert_eq!(z, Matrix::identity(n));
    }

    #[test]
    fn too_few_samples() {
        let net = NetworkBuilder::new(&[3]).dense(4).relu().dense(2).build(0).unwrap();
        let x = Tensor::zeros(vec![5, 3]);
        assert!(matches!(
            collect_activations(&net, 0, &x, 1),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(matches!(
            collect_activations(&net, 0, &Tensor::zeros(vec![1, 3]), 10),
            Err(Error::InsufficientSamples { got: 1, .. })
        ));
    }

    #[test]
    fn planted_duplicate_rows_match() {
        let net = NetworkBuilder::new(&[5]).dense(6).relu().dense(2).build(4).unwrap();
        let spec = PlantSpec {
            layer: 0,
            dependencies: vec![Dependency {
                unit: 3,
                terms: vec![(1, 1.0)],
            }],
            mode: PlantMode::ScaleOnly,
        };
        let net = plant_redundancy(&net, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::new(vec![64, 5], (0..320).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let z = collect_activations(&net, 0, &x, 64).unwrap();
        assert_eq!(z.row(3), z.row(1));
    }

    #[test]
    fn conv_half_channel_rows() {
        let net = NetworkBuilder::new(&[1, 5, 5])
            .conv2d(3, 3, 1, 1)
            .relu()
            .conv2d(2, 1, 1, 0)
            .flatten()
            .dense(2)
            .build(8)
            .unwrap();
        let spec = PlantSpec {
            layer: 0,
            dependencies: vec![Dependency {
                unit: 2,
                terms: vec![(1, 0.5)],
            }],
            mode: PlantMode::ScaleOnly,
        };
        let net = plant_redundancy(&net, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::new(vec![6, 1, 5, 5], (0..150).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let z = collect_activations(&net, 0, &x, 1000).unwrap();
        assert_eq!(z.cols(), 150);
        for t in 0..z.cols() {
            assert_eq!(z.get(2, t), 0.5 * z.get(1, t));
        }
    }

    #[test]
    fn correlation_small_cases() {
        let s = correlation(&Matrix::identity(2), 0.0).unwrap();
        assert_eq!(s.to_matrix(), Matrix::diag(&[0.5, 0.5]));
        let mut z = random_z(2, 10, 3);
        let first = z.row(0).to_vec();
        z.row_mut(1).copy_from_slice(&first);
        assert!(correlation(&z, 0.0).unwrap().cholesky().is_err());
        assert!(correlation(&z, DEFAULT_JITTER).unwrap().cholesky().is_ok());
    }

    #[test]
    fn correlation_matches_loop_oracle() {
        let z = random_z(4, 100, 4);
        let s = correlation(&z, 0.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for t in 0..100 {
                    acc += z.get(i, t) * z.get(j, t);
                }
                assert!((s.get(i, j) - acc / 100.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_small_cases() {
        let a = closed_form_a(&SymMatrix::identity(2)).unwrap();
        assert_eq!(a, Matrix::zeros(vec![2, 2]));
        let s = SymMatrix::from_upper(&Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap()).unwrap();
        let a = closed_form_a(&s).unwrap();
        let expect = Matrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        assert!(a.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn planted_sum_is_recovered() {
        // five independent rows and a sixth equal to the sum of the first two
        let mut z = random_z(6, 500, 5);
        for t in 0..500 {
            let v = z.get(0, t) + z.get(1, t);
            z.set(5, t, v);
        }
        let an = RedundancyAnalysis::from_activations(0, &z, &AnalysisConfig::default()).unwrap();
        let expect = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        for (j, e) in expect.iter().enumerate() {
            assert!((an.a.get(5, j) - e).abs() < 1e-4, "{j}: {}", an.a.get(5, j));
        }
        assert!(an.residuals[5] < 1e-5);

        let gd = AnalysisConfig {
            solver: Solver::GradientDescent(GdConfig::default()),
            ..AnalysisConfig::default()
        };
        let an_gd = RedundancyAnalysis::from_activations(0, &z, &gd).unwrap();
        let mean = an_gd.objective() / 6.0;
        assert!(an_gd.residuals[5] < 1e-4 * mean, "{:?}", an_gd.residuals);
    }

    #[test]
    fn ridge_refinement_approaches_least_squares() {
        let z = random_z(6, 200, 21);
        let exact = closed_form_a(&correlation(&z, 0.0).unwrap()).unwrap();
        let s = correlation(&z, 1e-2).unwrap();
        let ridge = s.get(0, 0) - SymMatrix::gram(&z).get(0, 0);
        let a = closed_form_a(&s).unwrap();
        let mut last = a.max_abs_diff(&exact);
        for steps in 1..4 {
            let err = refine_ridge(&a, &s, ridge, steps).unwrap().max_abs_diff(&exact);
            assert!(err < 0.1 * last, "{steps}: {err} vs {last}");
            last = err;
        }
        assert_eq!(refine_ridge(&a, &s, ridge, 0).unwrap(), a);
    }

    #[test]
    fn gd_small_cases() {
        let a = gd_a(&Matrix::identity(3).scale(2.0), &GdConfig::default()).unwrap();
        assert!(a.data().iter().all(|v| v.abs() < 1e-12));

        // Second moments close to [[2,1],[1,2]].
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = 4000;
        let mut z = Matrix::zeros(vec![2, m]);
        let unit = 3f64.sqrt();
        for t in 0..m {
            let x: f64 = rng.random_range(-unit..unit);
            let y: f64 = rng.random_range(-unit..unit);
            z.set(0, t, 1.5f64.sqrt() * x + 0.5f64.sqrt() * y);
            z.set(1, t, 1.5f64.sqrt() * x - 0.5f64.sqrt() * y);
        }
        let cf = closed_form_a(&correlation(&z, DEFAULT_JITTER).unwrap()).unwrap();
        let gd = gd_a(&z, &GdConfig::default()).unwrap();
        assert!(cf.max_abs_diff(&gd) < 1e-3);
    }

    #[test]
    fn gd_objective_never_increases() {
        let z = random_z(6, 80, 7);
        let s = correlation(&z, DEFAULT_JITTER).unwrap();
        let out = gd_from_correlation(&s, &GdConfig::default()).unwrap();
        for w in out.objective.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let big = GdConfig {
            step_size: Some(1e3),
            ..GdConfig::default()
        };
        // an oversized step is halved back until it decreases
        let out = gd_from_correlation(&s, &big).unwrap();
        for w in out.objective.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn gd_reports_divergence() {
        let s = SymMatrix::from_upper(&Matrix::from_rows(&[vec![f64::MAX, 0.0], vec![0.0, f64::MAX]]).unwrap())
            .unwrap();
        let s = add_jitter(&s, 0.0);
        let cfg = GdConfig {
            step_size: Some(1.0),
            ..GdConfig::default()
        };
        assert!(matches!(
            gd_from_correlation(&s, &cfg),
            Err(Error::Divergence { .. })
        ));
    }

    fn analysis_with(residuals: Vec<f64>) -> RedundancyAnalysis {
        let n = residuals.len();
        RedundancyAnalysis {
            layer_index: 0,
            unit_count: n,
            sample_count: 2,
            s: SymMatrix::identity(n),
            ridge: 0.0,
            a: Matrix::zeros(vec![n, n]),
            residuals,
            mean_abs: vec![0.0; n],
        }
    }

    #[test]
    fn ranking_rules() {
        assert_eq!(rank_units(&analysis_with(vec![0.5, 0.0, 0.3]), 0.34).unwrap(), vec![1]);
        assert_eq!(rank_units(&analysis_with(vec![1.0; 4]), 0.5).unwrap(), vec![0, 1]);
        assert_eq!(rank_units(&analysis_with(vec![0.1, 0.2, 0.3]), 1.0).unwrap().len(), 2);
        assert!(rank_units(&analysis_with(vec![0.1, 0.2]), 0.0).is_err());
        assert!(rank_units(&analysis_with(vec![0.1, 0.2]), 1.5).is_err());
    }

    #[test]
    fn json_dump_has_matrices() {
        let z = random_z(3, 20, 8);
        let an = RedundancyAnalysis::from_activations(2, &z, &AnalysisConfig::default()).unwrap();
        let v = an.to_json();
        assert_eq!(v["layer_index"], 2);
        assert_eq!(v["a"].as_array().unwrap().len(), 3);
        assert_eq!(v["residuals"].as_array().unwrap().len(), 3);
    }
}
