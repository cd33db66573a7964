use super::{KernelError, Matrix};

/// Score assigned to masked positions. Finite so arithmetic stays total.
pub const MASK_SENTINEL: f64 = -1e30;

/// Boolean matrix; `true` marks a valid (unmasked) entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn all(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![true; rows * cols])
    }

    pub fn row_vector(valid: &[bool]) -> Self {
        Self::new(1, valid.len(), valid.to_vec())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

pub fn relu(m: &Matrix) -> Matrix {
    m.map(|v| v.max(0.0))
}

/// Gradient through ReLU given the pre-activation.
pub fn relu_backward(grad: &Matrix, pre: &Matrix) -> Result<Matrix, KernelError> {
    let mask = pre.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    grad.hadamard(&mask)
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Row-wise softmax with optional mask. Masked entries come out exactly zero.
pub fn row_softmax(m: &Matrix, mask: Option<&Mask>) -> Result<Matrix, KernelError> {
    if let Some(mask) = mask {
        if mask.shape() != m.shape() {
            return Err(KernelError::ShapeMismatch {
                op: "row_softmax",
                left: m.shape(),
                right: mask.shape(),
            });
        }
    }
    let valid = |r: usize, c: usize| mask.map_or(true, |mk| mk.get(r, c));
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        let mut max = f64::NEG_INFINITY;
        for (c, &v) in row.iter().enumerate() {
            if valid(r, c) && v > max {
                max = v;
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(KernelError::AllMaskedRow(r));
        }
        let mut total = 0.0;
        let out_row = out.row_mut(r);
        for (c, &v) in row.iter().enumerate() {
            if valid(r, c) {
                let e = (v - max).exp();
                out_row[c] = e;
                total += e;
            }
        }
        for v in out_row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Backward pass of a row softmax: `p ⊙ (g − ⟨g, p⟩)` per row.
pub fn softmax_backward(probs: &Matrix, grad_out: &Matrix) -> Result<Matrix, KernelError> {
    if probs.shape() != grad_out.shape() {
        return Err(KernelError::ShapeMismatch {
            op: "softmax_backward",
            left: probs.shape(),
            right: grad_out.shape(),
        });
    }
    let mut out = Matrix::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let g = grad_out.row(r);
        let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for (o, (pi, gi)) in out.row_mut(r).iter_mut().zip(p.iter().zip(g)) {
            *o = pi * (gi - inner);
        }
    }
    Ok(out)
}

/// Mean binary cross-entropy on `sigmoid(scores)` and its gradient with
/// respect to the raw scores.
pub fn bce_loss(scores: &Matrix, labels: &Matrix) -> Result<(f64, Matrix), KernelError> {
    if scores.shape() != labels.shape() {
        return Err(KernelError::ShapeMismatch {
            op: "bce_loss",
            left: scores.shape(),
            right: labels.shape(),
        });
    }
    let n = scores.data().len();
    if n == 0 {
        return Ok((0.0, Matrix::zeros(scores.rows(), scores.cols())));
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(scores.rows(), scores.cols());
    for ((g, &s), &y) in grad
        .data_mut()
        .iter_mut()
        .zip(scores.data())
        .zip(labels.data())
    {
        // max(s, 0) − s·y + ln(1 + e^{−|s|})
        loss += s.max(0.0) - s * y + (-s.abs()).exp().ln_1p();
        *g = (sigmoid(s) - y) * inv;
    }
    Ok((loss * inv, grad))
}

/// Softmax cross-entropy over the valid entries of one score row, averaged
/// over the target indices. Returns the loss, the probabilities and the
/// gradient with respect to the scores (zero at masked positions).
pub fn softmax_cross_entropy(
    scores: &[f64],
    valid: &[bool],
    targets: &[usize],
) -> Result<(f64, Vec<f64>, Vec<f64>), KernelError> {
    let m = Matrix::row_vector(scores);
    let mask = Mask::row_vector(valid);
    let probs = row_softmax(&m, Some(&mask))?.into_data();
    let t = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for &i in targets {
        loss -= probs[i].max(1e-300).ln() / t;
        grad[i] -= 1.0 / t;
    }
    for (g, &ok) in grad.iter_mut().zip(valid) {
        if !ok {
            *g = 0.0;
        }
    }
    Ok((loss, probs, grad))
}
