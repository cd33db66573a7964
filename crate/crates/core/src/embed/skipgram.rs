use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbedError, WalkConfig};
use crate::numkernel::{dot, sigmoid, Matrix};

/// Cumulative unigram^0.75 weights for negative sampling.
struct NegativeTable {
    cumulative: Vec<f64>,
}

impl NegativeTable {
    fn new(corpus: &[Vec<usize>], n: usize) -> Self {
        let mut counts = vec![0usize; n];
        for w in corpus {
            for &v in w {
                counts[v] += 1;
            }
        }
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// Skip-gram with negative sampling over a walk corpus; rows come back
/// L2-normalized. `n` is the number of distinct nodes.
pub fn train_skipgram(corpus: &[Vec<usize>], n: usize, config: &WalkConfig) -> Result<Matrix, EmbedError> {
    config.validate()?;
    let d = config.embedding_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5151);
    let mut input = Matrix::from_vec(n, d, (0..n * d).map(|_| (rng.gen::<f64>() - 0.5) / d as f64).collect())
        .expect("shape");
    let mut output = Matrix::zeros(n, d);
    if n == 0 {
        return Ok(input);
    }
    let table = NegativeTable::new(corpus, n);

    let pairs_per_epoch: usize = corpus
        .iter()
        .map(|w| (0..w.len()).map(|i| i.min(config.window) + (w.len() - 1 - i).min(config.window)).sum::<usize>())
        .sum();
    let total = (pairs_per_epoch * config.epochs).max(1) as f64;
    let mut seen = 0usize;
    let mut grad = vec![0.0; d];
    let mut center_vec = vec![0.0; d];

    for epoch in 0..config.epochs {
        let mut loss = 0.0;
        for walk in corpus {
            for (i, &center) in walk.iter().enumerate() {
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window + 1).min(walk.len());
                for (j, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let lr = config.learning_rate * (1.0 - seen as f64 / total).max(1e-4);
                    seen += 1;
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    center_vec.copy_from_slice(input.row(center));
                    for k in 0..=config.negatives_per_positive {
                        let (target, label) = if k == 0 { (context, 1.0) } else { (table.sample(&mut rng), 0.0) };
                        if k > 0 && target == context {
                            continue;
                        }
                        let s = dot(&center_vec, output.row(target));
                        let p = sigmoid(s);
                        loss -= if label == 1.0 { p.max(1e-300).ln() } else { (1.0 - p).max(1e-300).ln() };
                        let g = lr * (label - p);
                        let out = output.row_mut(target);
                        for c in 0..d {
                            grad[c] += g * out[c];
                            out[c] += g * center_vec[c];
                        }
                    }
                    for (v, g) in input.row_mut(center).iter_mut().zip(&grad) {
                        *v += g;
                    }
                }
            }
        }
        if !loss.is_finite() {
            return Err(EmbedError::NonFiniteLoss { epoch: epoch + 1 });
        }
        tracing::debug!(epoch = epoch + 1, loss, "skip-gram epoch");
    }

    for r in 0..n {
        let row = input.row_mut(r);
        let norm = dot(row, row).sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(input)
}
