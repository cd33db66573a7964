use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{KernelError, Matrix};

pub type Grads = BTreeMap<String, Matrix>;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Matrix,
    m: Matrix,
    v: Matrix,
}

impl Param {
    fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
        }
    }
}

/// Named parameters plus Adam moment accumulators and a shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    step: u64,
    rng_seed: u64,
}

impl ParamStore {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            params: BTreeMap::new(),
            step: 0,
            rng_seed,
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.params.insert(name.into(), Param::new(value));
    }

    /// Panics when `name` is missing; model code only asks for names it created.
    pub fn get(&self, name: &str) -> &Matrix {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .value
    }

    pub fn try_get(&self, name: &str) -> Option<&Matrix> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.data().len()).sum()
    }

    /// Value-only copy of the parameters, as written to checkpoints.
    pub fn to_checkpoint(&self, meta: BTreeMap<String, serde_json::Value>) -> Checkpoint {
        Checkpoint {
            rng_seed: self.rng_seed,
            step: self.step,
            params: self
                .params
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        StoredMatrix {
                            shape: [p.value.rows(), p.value.cols()],
                            data: p.value.data().to_vec(),
                        },
                    )
                })
                .collect(),
            meta,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, KernelError> {
        let mut store = ParamStore::new(ckpt.rng_seed);
        store.step = ckpt.step;
        for (name, m) in &ckpt.params {
            let value = Matrix::from_vec(m.shape[0], m.shape[1], m.data.clone())
                .map_err(|_| KernelError::MalformedCheckpoint(format!("bad shape for {name}")))?;
            store.insert(name.clone(), value);
        }
        Ok(store)
    }
}

/// Uniform Glorot initialisation.
pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = (6.0 / (rows + cols).max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// One bias-corrected Adam update. Parameters without a gradient entry are
/// left untouched but still share the step counter.
pub fn adam_step(store: &mut ParamStore, grads: &Grads, cfg: &AdamConfig) -> Result<(), KernelError> {
    for (name, g) in grads {
        let p = store
            .params
            .get(name)
            .ok_or_else(|| KernelError::UnknownParam(name.clone()))?;
        if p.value.shape() != g.shape() {
            return Err(KernelError::ShapeMismatch {
                op: "adam_step",
                left: p.value.shape(),
                right: g.shape(),
            });
        }
    }
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, g) in grads {
        let p = store.params.get_mut(name).expect("checked above");
        let Param { value, m, v } = p;
        for (((w, mi), vi), &gi) in value
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(g.data())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

// Finite differences on an O(1) loss carry roughly 1e-16 / eps of noise, so
// coordinates whose true gradient is zero would otherwise score near 1.
const RELATIVE_FLOOR: f64 = 1e-5;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(RELATIVE_FLOOR)
}

/// Central finite differences against the analytic gradient for every
/// coordinate. Returns the maximum relative error
/// `|g_a − g_fd| / max(1e-5, |g_a| + |g_fd|)`.
pub fn gradient_check<F>(f: F, store: &ParamStore, epsilon: f64) -> f64
where
    F: Fn(&ParamStore) -> (f64, Grads),
{
    gradient_check_sampled(f, store, epsilon, usize::MAX, 0)
}

/// As [`gradient_check`] but visits at most `max_per_param` coordinates of
/// each parameter (chosen with `seed`), for large models.
pub fn gradient_check_sampled<F>(
    f: F,
    store: &ParamStore,
    epsilon: f64,
    max_per_param: usize,
    seed: u64,
) -> f64
where
    F: Fn(&ParamStore) -> (f64, Grads),
{
    let (_, analytic) = f(store);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = store.clone();
    let mut worst = 0.0f64;
    let names: Vec<String> = store.params.keys().cloned().collect();
    for name in names {
        let len = store.get(&name).data().len();
        let coords: Vec<usize> = if len <= max_per_param {
            (0..len).collect()
        } else {
            (0..max_per_param).map(|_| rng.gen_range(0..len)).collect()
        };
        for i in coords {
            let base = store.get(&name).data()[i];
            probe.get_mut(&name).unwrap().data_mut()[i] = base + epsilon;
            let (up, _) = f(&probe);
            probe.get_mut(&name).unwrap().data_mut()[i] = base - epsilon;
            let (down, _) = f(&probe);
            probe.get_mut(&name).unwrap().data_mut()[i] = base;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic.get(&name).map_or(0.0, |g| g.data()[i]);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredMatrix {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Parameter checkpoint: `{name → shape + row-major data}` plus seed, step
/// and free-form model metadata. Serialises byte-stably (sorted keys).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub rng_seed: u64,
    pub step: u64,
    pub params: BTreeMap<String, StoredMatrix>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn save(&self, path: &Path) -> Result<(), KernelError> {
        fs::write(path, self.to_json()).map_err(|e| KernelError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, KernelError> {
        let text = fs::read_to_string(path).map_err(|e| KernelError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| KernelError::MalformedCheckpoint(e.to_string()))
    }
}
