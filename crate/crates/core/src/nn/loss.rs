use crate::tensor::{Scalar, Tensor};

/// Row-wise softmax of `logits / temperature`.
pub fn softmax<T: Scalar>(logits: &Tensor<T>, temperature: T) -> Tensor<T> {
    let c = logits.cols();
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(c) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v / temperature));
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v / temperature - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Tensor::from_parts(logits.shape().to_vec(), out)
}

/// Batch-mean softmax cross-entropy and its gradient with respect to the
/// logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> (T, Tensor<T>) {
    let b = logits.rows();
    let c = logits.cols();
    assert_eq!(b, labels.len(), "one label per row");
    let mut grad = softmax(logits, T::one());
    let inv_b = T::one() / T::from_usize(b).expect("batch size");
    let mut loss = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits.data()[i * c..(i + 1) * c];
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        loss += lse - row[y];
        let g = &mut grad.data_mut()[i * c..(i + 1) * c];
        g[y] -= T::one();
        g.iter_mut().for_each(|v| *v *= inv_b);
    }
    (loss * inv_b, grad)
}

pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_sum_to_one() {
        let t = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -100.0, 0.0, 100.0]).unwrap();
        let s = softmax(&t, 2.0);
        for r in 0..2 {
            let sum: f64 = s.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let t = Tensor::new(vec![1, 4], vec![0.0f64; 4]).unwrap();
        let (loss, _) = softmax_cross_entropy(&t, &[2]);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
