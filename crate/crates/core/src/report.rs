//! Compression reports and 2-D PCA projections of layer features.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::amc::{ScheduleOutcome, ShrinkRecord};
use crate::error::{Error, Result};
use crate::nn::{forward, Network, ParamCount};
use crate::tensor::{Matrix, Tensor};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub accuracy: f64,
    pub params: ParamCount,
}

/// Reductions in percent of the baseline. `delta_acc_pct` is the accuracy
/// drop in percentage points and is negative when accuracy improved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub delta_total_pct: f64,
    pub delta_dense_pct: f64,
    pub delta_conv_pct: f64,
    pub delta_acc_pct: f64,
    pub final_accuracy: f64,
    pub final_params: ParamCount,
    pub removed_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPoint {
    pub step: usize,
    pub layer: usize,
    pub adjusted: Option<f64>,
    pub unadjusted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub version: u32,
    pub seed: u64,
    pub config: serde_json::Value,
    pub baseline: Baseline,
    pub steps: Vec<ShrinkRecord>,
    pub summary: Summary,
    /// Accepted steps only.
    pub perturbation: Vec<PerturbationPoint>,
}

fn reduction(before: usize, after: usize) -> f64 {
    if before == 0 {
        0.0
    } else {
        100.0 * (1.0 - after as f64 / before as f64)
    }
}

impl Summary {
    pub fn compute(baseline: &Baseline, final_params: ParamCount, final_accuracy: f64, steps: &[ShrinkRecord]) -> Self {
        Self {
            delta_total_pct: reduction(baseline.params.total, final_params.total),
            delta_dense_pct: reduction(baseline.params.dense, final_params.dense),
            delta_conv_pct: reduction(baseline.params.conv, final_params.conv),
            delta_acc_pct: 100.0 * (baseline.accuracy - final_accuracy),
            final_accuracy,
            final_params,
            removed_units: steps.iter().filter(|s| s.accepted).map(|s| s.removed.len()).sum(),
        }
    }
}

impl CompressionReport {
    pub fn new(teacher: &Network<f32>, outcome: &ScheduleOutcome, config: serde_json::Value, seed: u64) -> Self {
        let baseline = Baseline {
            accuracy: outcome.baseline_accuracy,
            params: teacher.count_params(),
        };
        let summary = Summary::compute(
            &baseline,
            outcome.network.count_params(),
            outcome.final_accuracy,
            &outcome.records,
        );
        let perturbation = outcome
            .records
            .iter()
            .filter(|r| r.accepted)
            .map(|r| PerturbationPoint {
                step: r.step,
                layer: r.layer,
                adjusted: r.perturbation_adjusted,
                unadjusted: r.perturbation_unadjusted,
            })
            .collect();
        Self {
            version: REPORT_VERSION,
            seed,
            config,
            baseline,
            steps: outcome.records.clone(),
            summary,
            perturbation,
        }
    }

    /// Recomputes the summary from the baseline and the step records and
    /// checks it against the stored one.
    pub fn verify(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parse(format!("inconsistent report: {msg}")));
        let expect = Summary::compute(
            &self.baseline,
            self.summary.final_params,
            self.summary.final_accuracy,
            &self.steps,
        );
        if expect != self.summary {
            return bad(format!("summary {:?} recomputes to {:?}", self.summary, expect));
        }
        let last = self
            .steps
            .iter()
            .rev()
            .find(|s| s.accepted)
            .map_or(self.baseline.params.total, |s| s.params_after);
        if last != self.summary.final_params.total {
            return bad(format!(
                "final params {} but last accepted step ends at {last}",
                self.summary.final_params.total
            ));
        }
        for (name, v) in [
            ("delta_total_pct", self.summary.delta_total_pct),
            ("delta_dense_pct", self.summary.delta_dense_pct),
            ("delta_conv_pct", self.summary.delta_conv_pct),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 100]"));
            }
        }
        let mut params = self.baseline.params.total;
        for s in self.steps.iter().filter(|s| s.accepted) {
            if s.params_after >= params {
                return bad(format!("step {} does not reduce the parameter count", s.step));
            }
            params = s.params_after;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("report: {e}")))?;
        report.verify()?;
        Ok(report)
    }

    /// One JSON object per step record.
    pub fn steps_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// `step,layer,adjusted,unadjusted` with empty cells for undefined values.
    pub fn perturbation_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut out = String::from("step,layer,adjusted,unadjusted\n");
        for p in &self.perturbation {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.step,
                p.layer,
                cell(p.adjusted),
                cell(p.unadjusted)
            ));
        }
        out
    }
}

/// Samples projected onto the top two principal directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub layer: Option<usize>,
    pub coords: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    /// Variances along the two directions, descending.
    pub explained_variance: [f64; 2],
}

/// Centers the rows of `features` (samples × dims) and projects them on the
/// two leading eigenvectors of their covariance.
pub fn pca(features: &Matrix, labels: &[usize], layer: Option<usize>) -> Result<PcaProjection> {
    if features.rank() != 2 || features.rows() < 2 {
        return Err(Error::invalid("PCA needs at least two samples"));
    }
    let (n, d) = (features.rows(), features.cols());
    if labels.len() != n {
        return Err(Error::shape(format!("{n} samples but {} labels", labels.len())));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(features.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| features.get(i, j) - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut dirs = Vec::with_capacity(2);
    let mut variances = [0.0; 2];
    for (slot, &c) in order.iter().take(2).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        // fix the sign: largest-magnitude component positive
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("non-empty");
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        variances[slot] = eig.eigenvalues[c].max(0.0);
        dirs.push(v);
    }
    let coords = (0..n)
        .map(|i| {
            let mut p = [0.0; 2];
            for (slot, dir) in dirs.iter().enumerate() {
                p[slot] = (0..d).map(|j| centered[(i, j)] * dir[j]).sum();
            }
            p
        })
        .collect();
    Ok(PcaProjection {
        layer,
        coords,
        labels: labels.to_vec(),
        explained_variance: variances,
    })
}

impl PcaProjection {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# explained_variance={},{}\nx,y,label\n",
            self.explained_variance[0], self.explained_variance[1]
        );
        for (p, y) in self.coords.iter().zip(&self.labels) {
            out.push_str(&format!("{},{},{}\n", p[0], p[1], y));
        }
        out
    }

    pub fn column_means(&self) -> [f64; 2] {
        let n = self.coords.len() as f64;
        let mut m = [0.0; 2];
        for p in &self.coords {
            m[0] += p[0] / n;
            m[1] += p[1] / n;
        }
        m
    }

    /// Smallest distance between class centroids and the mean distance of a
    /// sample to its own class centroid.
    pub fn cluster_separation(&self) -> (f64, f64) {
        let classes = self.labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut centroid = vec![[0.0; 2]; classes];
        let mut count = vec![0usize; classes];
        for (p, &y) in self.coords.iter().zip(&self.labels) {
            centroid[y][0] += p[0];
            centroid[y][1] += p[1];
            count[y] += 1;
        }
        for (c, &k) in centroid.iter_mut().zip(&count) {
            if k > 0 {
                c[0] /= k as f64;
                c[1] /= k as f64;
            }
        }
        let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let present: Vec<usize> = (0..classes).filter(|&c| count[c] > 0).collect();
        let mut closest = f64::INFINITY;
        for (i, &a) in present.iter().enumerate() {
            for &b in &present[i + 1..] {
                closest = closest.min(dist(centroid[a], centroid[b]));
            }
        }
        let spread = self
            .coords
            .iter()
            .zip(&self.labels)
            .map(|(p, &y)| dist(*p, centroid[y]))
            .sum::<f64>()
            / self.coords.len().max(1) as f64;
        (closest, spread)
    }
}

/// Post-activation outputs of parametric layer `layer`, flattened to
/// samples × features.
pub fn layer_features(net: &Network<f32>, layer: usize, inputs: &Tensor<f32>) -> Result<Matrix> {
    let (_, caps) = forward(net, inputs, &[layer])?;
    let post = &caps[0].post;
    let (rows, cols) = (post.rows(), post.cols());
    Matrix::new(vec![rows, cols], post.data().iter().map(|&v| v as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn axis_aligned_data_is_rotated_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::from_fn(50, 2, |_, j| rng.random_range(-1.0..1.0) * if j == 0 { 5.0 } else { 1.0 });
        let p = pca(&x, &vec![0; 50], None).unwrap();
        let means = p.column_means();
        assert!(means[0].abs() < 1e-8 && means[1].abs() < 1e-8);
        // distances between samples are preserved
        for i in 0..10 {
            for j in 0..10 {
                let a = ((x.get(i, 0) - x.get(j, 0)).powi(2) + (x.get(i, 1) - x.get(j, 1)).powi(2)).sqrt();
                let b = ((p.coords[i][0] - p.coords[j][0]).powi(2) + (p.coords[i][1] - p.coords[j][1]).powi(2)).sqrt();
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert!(p.explained_variance[0] >= p.explained_variance[1]);
    }

    #[test]
    fn rank_one_data_has_no_second_variance() {
        let x = Matrix::from_fn(30, 4, |i, j| (i as f64 - 7.0) * [1.0, -2.0, 0.5, 3.0][j]);
        let p = pca(&x, &vec![0; 30], None).unwrap();
        assert!(p.explained_variance[1] < 1e-9 * p.explained_variance[0]);
    }

    #[test]
    fn csv_layout() {
        let x = Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let p = pca(&x, &[0, 1, 2], Some(4)).unwrap();
        let csv = p.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# explained_variance="));
        assert_eq!(lines.next().unwrap(), "x,y,label");
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn clusters_are_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let centres = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 5.0]];
        let mut labels = Vec::new();
        let x = Matrix::from_fn(90, 3, |i, j| {
            if j == 0 {
                labels.push(i / 30);
            }
            centres[i / 30][j] + rng.random_range(-1.0..1.0)
        });
        let p = pca(&x, &labels, None).unwrap();
        let (closest, spread) = p.cluster_separation();
        assert!(closest > spread);
    }
}
