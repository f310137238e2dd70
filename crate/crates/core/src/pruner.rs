//! Unit removal with weight readjustment of the consuming layer.
//!
//! Removing a set `J` of units from layer `k` replaces the consumer weights
//! `W` by `W·T`, where `T` maps the kept activations back onto an estimate of
//! the full activation vector. When the removed activations are exact linear
//! combinations of the kept ones the consumer's pre-activations do not change.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{general_inverse, spd_solve};
use crate::nn::{forward, Layer, Network};
use crate::redundancy::RedundancyAnalysis;
use crate::tensor::{Matrix, Tensor};

/// Ceiling on the 1-norm condition number of `I − A_plus`.
pub const MAX_CONDITION: f64 = 1e8;

/// Below this magnitude the chain-formula denominator `1 − a_lj·a_jl` is
/// treated as zero and the row is refit instead.
const CHAIN_PIVOT_FLOOR: f64 = 1e-8;

/// Removal set, kept set and the matrices that carry the kept activations
/// back to the full layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformationPlan {
    pub removed: Vec<usize>,
    pub kept: Vec<usize>,
    /// `A[j_i][j_p]`, `|J| × |J|`.
    pub a_plus: Matrix,
    /// `A[j_i][h_p]`, `|J| × |H|`.
    pub a_minus: Matrix,
    /// Solution of `(I − A_plus)·U = A_minus`.
    pub u: Matrix,
    /// `n × |H|`: identity on kept rows, `U` on removed rows.
    pub t: Matrix,
}

impl TransformationPlan {
    pub fn unit_count(&self) -> usize {
        self.t.rows()
    }
}

pub fn build_transformation(a: &Matrix, removed: &[usize]) -> Result<TransformationPlan> {
    let n = a.rows();
    if a.rank() != 2 || a.cols() != n {
        return Err(Error::shape(format!("A must be square, got {:?}", a.shape())));
    }
    let mut removed = removed.to_vec();
    removed.sort_unstable();
    removed.dedup();
    if removed.is_empty() || removed.len() >= n {
        return Err(Error::invalid(format!(
            "removal set must be a non-empty strict subset of {n} units"
        )));
    }
    if let Some(&bad) = removed.iter().find(|&&j| j >= n) {
        return Err(Error::invalid(format!("unit {bad} outside layer of {n}")));
    }
    let kept: Vec<usize> = (0..n).filter(|u| removed.binary_search(u).is_err()).collect();
    let a_plus = Matrix::from_fn(removed.len(), removed.len(), |i, p| a.get(removed[i], removed[p]));
    let a_minus = Matrix::from_fn(removed.len(), kept.len(), |i, p| a.get(removed[i], kept[p]));
    let i_minus = Matrix::from_fn(removed.len(), removed.len(), |i, p| {
        (if i == p { 1.0 } else { 0.0 }) - a_plus.get(i, p)
    });
    let (inv, condition) =
        general_inverse(&i_minus).ok_or(Error::MutualRedundancy { condition: f64::INFINITY })?;
    if condition > MAX_CONDITION {
        return Err(Error::MutualRedundancy { condition });
    }
    let u = crate::tensor::matmul(&inv, &a_minus)?;
    let mut t = Matrix::zeros(vec![n, kept.len()]);
    for (p, &h) in kept.iter().enumerate() {
        t.set(h, p, 1.0);
    }
    for (i, &j) in removed.iter().enumerate() {
        t.row_mut(j).copy_from_slice(u.row(i));
    }
    Ok(TransformationPlan {
        removed,
        kept,
        a_plus,
        a_minus,
        u,
        t,
    })
}

/// `W'[o, p, g] = Σ_u W[o, u, g]·T[u][p]` where each row of `weight` is
/// `units` blocks of `group` contiguous scalars.
fn readjust_grouped(weight: &Tensor<f32>, units: usize, t: &Matrix) -> Result<Tensor<f32>> {
    let out = weight.rows();
    let row = weight.cols();
    if units == 0 || row % units != 0 || t.rows() != units {
        return Err(Error::shape(format!(
            "consumer weight {:?} does not split into {} unit blocks",
            weight.shape(),
            t.rows()
        )));
    }
    let group = row / units;
    let kept = t.cols();
    let mut data = vec![0f32; out * kept * group];
    let mut acc = vec![0f64; kept * group];
    for o in 0..out {
        acc.iter_mut().for_each(|v| *v = 0.0);
        let w = weight.row(o);
        for u in 0..units {
            let tu = t.row(u);
            let block = &w[u * group..(u + 1) * group];
            for (p, &c) in tu.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for (a, &x) in acc[p * group..(p + 1) * group].iter_mut().zip(block) {
                    *a += c * x as f64;
                }
            }
        }
        for (d, a) in data[o * kept * group..(o + 1) * kept * group].iter_mut().zip(&acc) {
            *d = *a as f32;
        }
    }
    let mut shape = weight.shape().to_vec();
    if shape.len() == 2 {
        shape[1] = kept * group;
    } else {
        shape[1] = kept;
    }
    Ok(Tensor::from_parts(shape, data))
}

/// `W_next · T` for a dense consumer; its bias is left alone.
pub fn readjust_dense(w_next: &Tensor<f32>, plan: &TransformationPlan) -> Result<Tensor<f32>> {
    if w_next.rank() != 2 || w_next.cols() != plan.unit_count() {
        return Err(Error::shape(format!(
            "dense weight {:?} needs {} columns",
            w_next.shape(),
            plan.unit_count()
        )));
    }
    readjust_grouped(w_next, plan.unit_count(), &plan.t)
}

/// Channel-wise readjustment of an `out × in × kh × kw` kernel: every kept
/// slice gains `Σ_j T[j][h]·slice_j` and removed slices are dropped.
pub fn readjust_conv(w_next: &Tensor<f32>, plan: &TransformationPlan) -> Result<Tensor<f32>> {
    if w_next.rank() != 4 || w_next.shape()[1] != plan.unit_count() {
        return Err(Error::shape(format!(
            "conv weight {:?} needs {} input channels",
            w_next.shape(),
            plan.unit_count()
        )));
    }
    readjust_grouped(w_next, plan.unit_count(), &plan.t)
}

/// Outcome of the update guard for one removed unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardReport {
    /// Removed unit, as an index into the layer before the shrink call.
    pub unit: usize,
    pub update_row_norm_mean: f64,
    pub weight_row_norm_mean: f64,
    pub predictability_score: f64,
    pub applied: bool,
}

fn mean_row_norm(rows: usize, row: usize, values: impl Fn(usize) -> f64) -> f64 {
    if rows == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for o in 0..rows {
        let mut sq = 0.0;
        for x in 0..row {
            let v = values(o * row + x);
            sq += v * v;
        }
        total += sq.sqrt();
    }
    total / rows as f64
}

fn guard_from_parts(
    w_old: &Tensor<f32>,
    w_new: &Tensor<f32>,
    unit: usize,
    column_abs_mean: f64,
    activation_abs_mean: f64,
) -> Result<GuardReport> {
    if w_old.shape() != w_new.shape() {
        return Err(Error::shape(format!(
            "guard compares {:?} with {:?}",
            w_old.shape(),
            w_new.shape()
        )));
    }
    let (old, new) = (w_old.data(), w_new.data());
    let rows = w_old.rows();
    let row = w_old.cols();
    let update = mean_row_norm(rows, row, |i| new[i] as f64 - old[i] as f64);
    let weight = mean_row_norm(rows, row, |i| old[i] as f64);
    let score = column_abs_mean * activation_abs_mean;
    Ok(GuardReport {
        unit,
        update_row_norm_mean: update,
        weight_row_norm_mean: weight,
        predictability_score: score,
        applied: !(update > weight || score > 1.0),
    })
}

/// Decides whether the readjusted consumer weights `w_new` replace the plain
/// deletion `w_old` when unit `j` is removed. The update is rejected when its
/// mean row norm exceeds that of `w_old`, or when the mean of `|A[i][j]|`
/// over `i ≠ j` times the mean `|Z_j|` exceeds 1.
pub fn guard_update(
    w_old: &Tensor<f32>,
    w_new: &Tensor<f32>,
    analysis: &RedundancyAnalysis,
    j: usize,
) -> Result<GuardReport> {
    let n = analysis.unit_count;
    if j >= n {
        return Err(Error::invalid(format!("unit {j} outside layer of {n}")));
    }
    let column = if n > 1 {
        (0..n).filter(|&i| i != j).map(|i| analysis.a.get(i, j).abs()).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    guard_from_parts(w_old, w_new, j, column, analysis.mean_abs[j])
}

/// How the next unit to remove is chosen inside one shrink call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Always the unit whose remapped prediction error is currently lowest.
    #[default]
    Greedy,
    /// The static ascending-residual order of the initial analysis.
    Ranked,
}

/// Result of removing units from one layer.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub network: Network<f32>,
    /// Removed units (indices before the call), in removal order.
    pub removed: Vec<usize>,
    /// One report per removal when adjustment was requested.
    pub guards: Vec<GuardReport>,
}

impl PruneOutcome {
    pub fn guards_fired(&self) -> usize {
        self.guards.iter().filter(|g| !g.applied).count()
    }
}

/// Prediction state over the units still present in the layer.
///
/// Row `l` of `u` is `e_l − a_l` expressed over the original units, so a
/// removed unit `j` is folded in by `u_l ← (u_l + a_lj·u_j) / (1 − a_lj·a_jl)`.
/// `c = U·G·Uᵀ` tracks the resulting prediction errors on the raw Gram
/// matrix `G`; its diagonal holds the current residuals.
struct RemovalState {
    units: Vec<usize>,
    u: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    gram: Matrix,
    s: Matrix,
    mean_abs: Vec<f64>,
}

impl RemovalState {
    fn new(analysis: &RedundancyAnalysis) -> Self {
        let n = analysis.unit_count;
        let u: Vec<Vec<f64>> = (0..n)
            .map(|l| (0..n).map(|j| if l == j { 1.0 } else { -analysis.a.get(l, j) }).collect())
            .collect();
        let gram = analysis.raw_gram();
        let mut state = Self {
            units: (0..n).collect(),
            u,
            c: vec![vec![0.0; n]; n],
            gram,
            s: analysis.s.to_matrix(),
            mean_abs: analysis.mean_abs.clone(),
        };
        for l in 0..n {
            state.refresh_c(l);
        }
        state
    }

    /// Recomputes row and column `pos` of `c` from `u`.
    fn refresh_c(&mut self, pos: usize) {
        let n = self.gram.rows();
        let ul = &self.u[pos];
        let ug: Vec<f64> = (0..n)
            .map(|x| (0..n).map(|y| ul[y] * self.gram.get(y, x)).sum())
            .collect();
        for m in 0..self.units.len() {
            let v: f64 = ug.iter().zip(&self.u[m]).map(|(a, b)| a * b).sum();
            self.c[pos][m] = v;
            self.c[m][pos] = v;
        }
    }

    fn residual(&self, pos: usize) -> f64 {
        self.c[pos][pos]
    }

    fn a(&self, l: usize, j: usize) -> f64 {
        -self.u[l][self.units[j]]
    }

    fn position(&self, unit: usize) -> Option<usize> {
        self.units.iter().position(|&u| u == unit)
    }

    /// Mean `|A[i][j]|` over the other current units.
    fn column_abs_mean(&self, pos: usize) -> f64 {
        let n = self.units.len();
        if n < 2 {
            return 0.0;
        }
        (0..n).filter(|&i| i != pos).map(|i| self.a(i, pos).abs()).sum::<f64>() / (n - 1) as f64
    }

    /// Coefficients predicting the unit at `pos` from the other current
    /// units, in current order with `pos` skipped.
    fn coefficients(&self, pos: usize) -> Vec<f64> {
        (0..self.units.len()).filter(|&q| q != pos).map(|q| self.a(pos, q)).collect()
    }

    fn remove(&mut self, pos: usize) {
        let n = self.units.len();
        let j = self.units[pos];
        let uj = self.u[pos].clone();
        let cj = self.c[pos].clone();
        let cjj = cj[pos];
        let mut alpha = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut refit = Vec::new();
        for l in 0..n {
            if l == pos {
                continue;
            }
            let a_lj = -self.u[l][j];
            let a_jl = -uj[self.units[l]];
            let den = 1.0 - a_lj * a_jl;
            if den.abs() < CHAIN_PIVOT_FLOOR || !den.is_finite() {
                refit.push(l);
                continue;
            }
            alpha[l] = 1.0 / den;
            beta[l] = a_lj;
            for (x, y) in self.u[l].iter_mut().zip(&uj) {
                *x = (*x + a_lj * y) / den;
            }
            self.u[l][j] = 0.0;
        }
        for l in 0..n {
            if l == pos || refit.contains(&l) {
                continue;
            }
            for m in l..n {
                if m == pos || refit.contains(&m) {
                    continue;
                }
                let v = alpha[l]
                    * alpha[m]
                    * (self.c[l][m] + beta[m] * cj[l] + beta[l] * cj[m] + beta[l] * beta[m] * cjj);
                self.c[l][m] = v;
                self.c[m][l] = v;
            }
        }
        self.units.remove(pos);
        self.u.remove(pos);
        self.c.remove(pos);
        for row in &mut self.c {
            row.remove(pos);
        }
        for l in refit {
            let l = if l > pos { l - 1 } else { l };
            self.refit(l);
        }
    }

    /// Least-squares prediction of the unit at `pos` from the other current
    /// units on the jittered correlation matrix.
    fn refit(&mut self, pos: usize) {
        let target = self.units[pos];
        let others: Vec<usize> = self.units.iter().copied().filter(|&u| u != target).collect();
        let n = self.gram.rows();
        let mut row = vec![0.0; n];
        row[target] = 1.0;
        if !others.is_empty() {
            let sub = Matrix::from_fn(others.len(), others.len(), |i, p| self.s.get(others[i], others[p]));
            let rhs = Matrix::from_fn(others.len(), 1, |i, _| self.s.get(others[i], target));
            let sym = crate::linalg::SymMatrix::from_upper(&sub).expect("square");
            if let Ok(coef) = spd_solve(&sym, &rhs) {
                for (i, &h) in others.iter().enumerate() {
                    row[h] = -coef.get(i, 0);
                }
            }
        }
        self.u[pos] = row;
        self.refresh_c(pos);
    }
}

/// The layer-`k` producer with unit `pos` deleted.
fn drop_producer_unit(layer: &Layer<f32>, pos: usize) -> Layer<f32> {
    let strip = |weight: &Tensor<f32>, bias: &[f32]| {
        let row = weight.cols();
        let mut data = weight.data().to_vec();
        data.drain(pos * row..(pos + 1) * row);
        let mut shape = weight.shape().to_vec();
        shape[0] -= 1;
        let mut bias = bias.to_vec();
        bias.remove(pos);
        (Tensor::from_parts(shape, data), bias)
    };
    match layer {
        Layer::Dense { weight, bias } => {
            let (weight, bias) = strip(weight, bias);
            Layer::Dense { weight, bias }
        }
        Layer::Conv2d {
            weight,
            bias,
            stride,
            padding,
        } => {
            let (weight, bias) = strip(weight, bias);
            Layer::Conv2d {
                weight,
                bias,
                stride: *stride,
                padding: *padding,
            }
        }
        other => other.clone(),
    }
}

fn consumer_weight(layer: &Layer<f32>) -> &Tensor<f32> {
    match layer {
        Layer::Dense { weight, .. } | Layer::Conv2d { weight, .. } => weight,
        _ => unreachable!("consumer is parametric"),
    }
}

fn with_weight(layer: &Layer<f32>, weight: Tensor<f32>) -> Layer<f32> {
    match layer {
        Layer::Dense { bias, .. } => Layer::Dense {
            weight,
            bias: bias.clone(),
        },
        Layer::Conv2d {
            bias,
            stride,
            padding,
            ..
        } => Layer::Conv2d {
            weight,
            bias: bias.clone(),
            stride: *stride,
            padding: *padding,
        },
        other => other.clone(),
    }
}

/// Consumer weights with unit block `pos` removed; kept block `q` gains
/// `coeffs[q']·block_pos` when coefficients are given.
fn fold_consumer(weight: &Tensor<f32>, units: usize, pos: usize, coeffs: Option<&[f64]>) -> Tensor<f32> {
    let out = weight.rows();
    let group = weight.cols() / units;
    let kept_row = (units - 1) * group;
    let mut data = Vec::with_capacity(out * kept_row);
    for o in 0..out {
        let w = weight.row(o);
        let removed = &w[pos * group..(pos + 1) * group];
        for (qi, q) in (0..units).filter(|&q| q != pos).enumerate() {
            let block = &w[q * group..(q + 1) * group];
            match coeffs {
                Some(c) if c[qi] != 0.0 => data.extend(
                    block
                        .iter()
                        .zip(removed)
                        .map(|(&x, &r)| (x as f64 + c[qi] * r as f64) as f32),
                ),
                _ => data.extend_from_slice(block),
            }
        }
    }
    let mut shape = weight.shape().to_vec();
    if shape.len() == 2 {
        shape[1] = kept_row;
    } else {
        shape[1] = units - 1;
    }
    Tensor::from_parts(shape, data)
}

fn check_prunable(net: &Network<f32>, k: usize) -> Result<usize> {
    if k >= net.layers().len() || !net.layers()[k].is_parametric() {
        return Err(Error::invalid(format!("layer {k} is not a dense/conv layer")));
    }
    net.consumer_of(k)
        .ok_or_else(|| Error::invalid(format!("layer {k} has no consuming layer")))
}

/// Removes units one at a time from layer `k`, readjusting the consumer after
/// each removal from the remapped prediction state. Shared by
/// [`prune_layer`] and the shrink step of the compression loop.
pub fn remove_units(
    net: &Network<f32>,
    k: usize,
    analysis: &RedundancyAnalysis,
    order: RemovalOrder<'_>,
    use_adjustment: bool,
) -> Result<PruneOutcome> {
    let consumer = check_prunable(net, k)?;
    let n = net.units(k);
    if analysis.unit_count != n {
        return Err(Error::shape(format!(
            "analysis covers {} units but layer {k} has {n}",
            analysis.unit_count
        )));
    }
    let count = match order {
        RemovalOrder::Fixed(units) => units.len(),
        RemovalOrder::Greedy(count) | RemovalOrder::Ranked(count) => count,
    };
    if count >= n {
        return Err(Error::invalid(format!("cannot remove {count} of {n} units")));
    }
    let ranked = match order {
        RemovalOrder::Ranked(_) => {
            crate::redundancy::rank_residuals(&analysis.residuals, 1.0)?
        }
        _ => Vec::new(),
    };
    let mut state = RemovalState::new(analysis);
    let mut layers = net.layers().to_vec();
    let mut removed = Vec::with_capacity(count);
    let mut guards = Vec::new();
    for step in 0..count {
        let pos = match order {
            RemovalOrder::Fixed(units) => state
                .position(units[step])
                .ok_or_else(|| Error::invalid(format!("unit {} removed twice or out of range", units[step])))?,
            RemovalOrder::Ranked(_) => state.position(ranked[step]).expect("ranked units are distinct"),
            RemovalOrder::Greedy(_) => (0..state.units.len())
                .min_by(|&x, &y| {
                    state
                        .residual(x)
                        .total_cmp(&state.residual(y))
                        .then(state.units[x].cmp(&state.units[y]))
                })
                .expect("at least two units remain"),
        };
        let unit = state.units[pos];
        let units_now = state.units.len();
        let w = consumer_weight(&layers[consumer]);
        let plain = fold_consumer(w, units_now, pos, None);
        let next = if use_adjustment {
            let coeffs = state.coefficients(pos);
            let adjusted = fold_consumer(w, units_now, pos, Some(&coeffs));
            let report = guard_from_parts(
                &plain,
                &adjusted,
                unit,
                state.column_abs_mean(pos),
                state.mean_abs[unit],
            )?;
            let applied = report.applied;
            guards.push(report);
            if applied {
                adjusted
            } else {
                plain
            }
        } else {
            plain
        };
        layers[consumer] = with_weight(&layers[consumer], next);
        layers[k] = drop_producer_unit(&layers[k], pos);
        state.remove(pos);
        removed.push(unit);
    }
    let network = Network::new(layers, net.input_shape().to_vec(), net.class_count())?;
    Ok(PruneOutcome {
        network,
        removed,
        guards,
    })
}

/// Which units [`remove_units`] takes, and in what order.
#[derive(Debug, Clone, Copy)]
pub enum RemovalOrder<'a> {
    /// Exactly these units, in this order.
    Fixed(&'a [usize]),
    /// `count` units, each the currently best predicted one.
    Greedy(usize),
    /// The first `count` units of the static residual ranking.
    Ranked(usize),
}

/// Removes the units `removed` from layer `k`. With `use_adjustment` the
/// consumer is readjusted (subject to the guard); otherwise their columns
/// are simply deleted.
pub fn prune_layer(
    net: &Network<f32>,
    k: usize,
    removed: &[usize],
    analysis: &RedundancyAnalysis,
    use_adjustment: bool,
) -> Result<PruneOutcome> {
    let mut sorted = removed.to_vec();
    sorted.sort_unstable();
    if use_adjustment {
        // surfaces circular dependencies before anything is touched
        build_transformation(&analysis.a, &sorted)?;
    } else {
        let n = analysis.unit_count;
        sorted.dedup();
        if sorted.len() != removed.len() || sorted.is_empty() || sorted.len() >= n || sorted[sorted.len() - 1] >= n {
            return Err(Error::invalid(format!(
                "removal set must be a non-empty strict subset of {n} units"
            )));
        }
    }
    remove_units(net, k, analysis, RemovalOrder::Fixed(&sorted), use_adjustment)
}

/// Plain deletion of units from layer `k` without any analysis.
pub fn delete_units(net: &Network<f32>, k: usize, removed: &[usize]) -> Result<Network<f32>> {
    let consumer = check_prunable(net, k)?;
    let n = net.units(k);
    let mut sorted = removed.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != removed.len() || sorted.len() >= n || sorted.last().is_some_and(|&u| u >= n) {
        return Err(Error::invalid(format!("invalid removal set for {n} units")));
    }
    let mut layers = net.layers().to_vec();
    for &u in sorted.iter().rev() {
        let units_now = layers[k].units();
        let w = fold_consumer(consumer_weight(&layers[consumer]), units_now, u, None);
        layers[consumer] = with_weight(&layers[consumer], w);
        layers[k] = drop_producer_unit(&layers[k], u);
    }
    Network::new(layers, net.input_shape().to_vec(), net.class_count())
}

/// Applies a full plan at once: the consumer becomes `W·T`, no guard.
pub fn apply_plan(net: &Network<f32>, k: usize, plan: &TransformationPlan) -> Result<Network<f32>> {
    let consumer = check_prunable(net, k)?;
    if plan.unit_count() != net.units(k) {
        return Err(Error::shape(format!(
            "plan covers {} units but layer {k} has {}",
            plan.unit_count(),
            net.units(k)
        )));
    }
    let mut layers = net.layers().to_vec();
    let w = readjust_grouped(consumer_weight(&layers[consumer]), plan.unit_count(), &plan.t)?;
    layers[consumer] = with_weight(&layers[consumer], w);
    for &u in plan.removed.iter().rev() {
        layers[k] = drop_producer_unit(&layers[k], u);
    }
    Network::new(layers, net.input_shape().to_vec(), net.class_count())
}

/// `‖Y_after − Y_before‖ / ‖Y_before‖` for the pre-activation of parametric
/// layer `k_next` on the probe inputs.
pub fn preactivation_perturbation(
    before: &Network<f32>,
    after: &Network<f32>,
    k_next: usize,
    probe: &Tensor<f32>,
) -> Result<f64> {
    let (_, a) = forward(before, probe, &[k_next])?;
    let (_, b) = forward(after, probe, &[k_next])?;
    let (ya, yb) = (&a[0].pre, &b[0].pre);
    if ya.shape() != yb.shape() {
        return Err(Error::shape(format!(
            "pre-activations {:?} and {:?} differ in shape",
            ya.shape(),
            yb.shape()
        )));
    }
    let mut diff = 0.0;
    let mut reference = 0.0;
    for (&x, &y) in ya.data().iter().zip(yb.data()) {
        let (x, y) = (x as f64, y as f64);
        diff += (y - x) * (y - x);
        reference += x * x;
    }
    if reference == 0.0 {
        return Err(Error::UndefinedMetric);
    }
    Ok((diff / reference).sqrt())
}
