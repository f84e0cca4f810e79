//! A small convolutional network trained from scratch.
//!
//! Parameters live in one flat f64 vector (weights then biases per weighted
//! layer, in network order), so snapshots, serialization, and finite
//! differences all work on a single slice. Forward and backward walk a
//! precomputed op plan derived from the architecture's shape trace. Training
//! is plain momentum SGD over softmax cross-entropy with inverted dropout on
//! each weighted layer's input.

mod arch;

pub use arch::{ArchError, ArchSpec, LayerSpec, Shape};

use crate::raster::FeatureTensor;
use crate::seed::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("input shape {got:?} does not match network input {expected:?}")]
    ShapeMismatch {
        got: (usize, usize, usize),
        expected: (usize, usize, usize),
    },
    #[error("invalid training config: {0}")]
    ConfigError(String),
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("batch must be nonempty")]
    EmptyBatch,
    #[error("parameter vector has {got} values, architecture needs {expected}")]
    ParamCountMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Dropout rate on the input of each weighted layer, in network order.
    pub dropout: Vec<f64>,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 96,
            learning_rate: 0.01,
            momentum: 0.9,
            dropout: Vec::new(),
            epochs: 6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, spec: &ArchSpec) -> Result<(), NetError> {
        if self.batch_size == 0 {
            return Err(NetError::ConfigError("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::ConfigError(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(NetError::ConfigError(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.epochs == 0 {
            return Err(NetError::ConfigError("epochs must be positive".into()));
        }
        if !self.dropout.is_empty() {
            if self.dropout.len() != spec.weighted_layer_count() {
                return Err(NetError::ConfigError(format!(
                    "dropout list has {} rates but the architecture has {} weighted layers",
                    self.dropout.len(),
                    spec.weighted_layer_count()
                )));
            }
            if self.dropout.iter().any(|&p| !(0.0..1.0).contains(&p)) {
                return Err(NetError::ConfigError(
                    "dropout rates must lie in [0, 1)".into(),
                ));
            }
        }
        Ok(())
    }

    fn rates(&self, spec: &ArchSpec) -> Vec<f64> {
        if self.dropout.is_empty() {
            vec![0.0; spec.weighted_layer_count()]
        } else {
            self.dropout.clone()
        }
    }
}

/// One executable op with resolved shapes and parameter offsets.
#[derive(Debug, Clone, Copy)]
enum PlanOp {
    Conv {
        w_off: usize,
        b_off: usize,
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        out_h: usize,
        out_w: usize,
        k: usize,
        widx: usize,
    },
    Pool {
        c: usize,
        in_h: usize,
        in_w: usize,
        out_h: usize,
        out_w: usize,
    },
    Full {
        w_off: usize,
        b_off: usize,
        in_len: usize,
        out_len: usize,
        relu: bool,
        widx: usize,
    },
}

impl PlanOp {
    fn out_len(&self) -> usize {
        match *self {
            PlanOp::Conv {
                out_c, out_h, out_w, ..
            } => out_c * out_h * out_w,
            PlanOp::Pool {
                c, out_h, out_w, ..
            } => c * out_h * out_w,
            PlanOp::Full { out_len, .. } => out_len,
        }
    }
}

fn build_plan(spec: &ArchSpec) -> Vec<PlanOp> {
    let trace = spec.shape_trace();
    let mut plan = Vec::with_capacity(spec.layers.len() + 1);
    let mut offset = 0usize;
    let mut widx = 0usize;
    for (i, layer) in spec.layers.iter().enumerate() {
        let (prev, next) = (trace[i], trace[i + 1]);
        match (*layer, prev, next) {
            (
                LayerSpec::Conv { filters, size },
                Shape::Map {
                    c: in_c,
                    h: in_h,
                    w: in_w,
                },
                Shape::Map {
                    h: out_h, w: out_w, ..
                },
            ) => {
                let w_len = filters * in_c * size * size;
                plan.push(PlanOp::Conv {
                    w_off: offset,
                    b_off: offset + w_len,
                    in_c,
                    in_h,
                    in_w,
                    out_c: filters,
                    out_h,
                    out_w,
                    k: size,
                    widx,
                });
                offset += w_len + filters;
                widx += 1;
            }
            (
                LayerSpec::MaxPool,
                Shape::Map {
                    c,
                    h: in_h,
                    w: in_w,
                },
                Shape::Map {
                    h: out_h, w: out_w, ..
                },
            ) => {
                plan.push(PlanOp::Pool {
                    c,
                    in_h,
                    in_w,
                    out_h,
                    out_w,
                });
            }
            (LayerSpec::Full { units }, prev, _) => {
                let in_len = prev.len();
                plan.push(PlanOp::Full {
                    w_off: offset,
                    b_off: offset + units * in_len,
                    in_len,
                    out_len: units,
                    relu: true,
                    widx,
                });
                offset += units * in_len + units;
                widx += 1;
            }
            _ => unreachable!("shape trace validated at parse time"),
        }
    }
    let in_len = trace[trace.len() - 2].len();
    plan.push(PlanOp::Full {
        w_off: offset,
        b_off: offset + spec.classes * in_len,
        in_len,
        out_len: spec.classes,
        relu: false,
        widx,
    });
    plan
}

/// Per-sample forward state kept for backprop.
struct ForwardCache {
    /// acts[0] is the input; acts[i+1] is op i's output (post ReLU/pool).
    acts: Vec<Vec<f64>>,
    /// For each op: the scaled dropout mask applied to its input, if any.
    masks: Vec<Option<Vec<f64>>>,
    /// For each pool op: flat input index of each output's argmax.
    argmax: Vec<Option<Vec<u32>>>,
}

impl ForwardCache {
    fn logits(&self) -> &[f64] {
        self.acts.last().expect("plan is nonempty")
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    -(logits[label] - max - log_sum)
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: ArchSpec,
    plan: Vec<PlanOp>,
    params: Vec<f64>,
    velocity: Vec<f64>,
    dropout: Vec<f64>,
}

impl Network {
    /// Fresh network with He-initialized weights (normal, variance 2/fan_in)
    /// and zero biases. The same (spec, seed) pair always yields the same
    /// parameters.
    pub fn init(spec: ArchSpec, seed: u64) -> Network {
        let plan = build_plan(&spec);
        let n = spec.param_count();
        let mut params = vec![0.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for op in &plan {
            let (w_off, b_off, fan_in) = match *op {
                PlanOp::Conv {
                    w_off,
                    b_off,
                    in_c,
                    k,
                    ..
                } => (w_off, b_off, in_c * k * k),
                PlanOp::Full {
                    w_off, b_off, in_len, ..
                } => (w_off, b_off, in_len),
                PlanOp::Pool { .. } => continue,
            };
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                .expect("positive standard deviation");
            for w in &mut params[w_off..b_off] {
                *w = normal.sample(&mut rng);
            }
        }
        let dropout = vec![0.0; spec.weighted_layer_count()];
        Network {
            velocity: vec![0.0; n],
            dropout,
            spec,
            plan,
            params,
        }
    }

    /// Rebuild a network around an existing parameter vector. Velocity and
    /// dropout start zeroed.
    pub fn from_params(spec: ArchSpec, params: Vec<f64>) -> Result<Network, NetError> {
        let expected = spec.param_count();
        if params.len() != expected {
            return Err(NetError::ParamCountMismatch {
                got: params.len(),
                expected,
            });
        }
        let plan = build_plan(&spec);
        let dropout = vec![0.0; spec.weighted_layer_count()];
        Ok(Network {
            velocity: vec![0.0; expected],
            dropout,
            spec,
            plan,
            params,
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<(), NetError> {
        if params.len() != self.params.len() {
            return Err(NetError::ParamCountMismatch {
                got: params.len(),
                expected: self.params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    /// Dropout rates used by `forward` in train mode.
    pub fn set_dropout(&mut self, rates: Vec<f64>) -> Result<(), NetError> {
        if rates.len() != self.spec.weighted_layer_count() {
            return Err(NetError::ConfigError(format!(
                "dropout list has {} rates but the architecture has {} weighted layers",
                rates.len(),
                self.spec.weighted_layer_count()
            )));
        }
        if rates.iter().any(|&p| !(0.0..1.0).contains(&p)) {
            return Err(NetError::ConfigError(
                "dropout rates must lie in [0, 1)".into(),
            ));
        }
        self.dropout = rates;
        Ok(())
    }

    fn check_input(&self, x: &FeatureTensor) -> Result<(), NetError> {
        let got = (x.channels(), x.height(), x.width());
        if got != self.spec.input {
            return Err(NetError::ShapeMismatch {
                got,
                expected: self.spec.input,
            });
        }
        Ok(())
    }

    /// Class probability vector for one input. Train mode applies inverted
    /// dropout at the configured rates, drawn from the seed; eval mode is
    /// deterministic and ignores the seed.
    pub fn forward(&self, x: &FeatureTensor, train: bool, seed: u64) -> Result<Vec<f64>, NetError> {
        self.check_input(x)?;
        let x64: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
        let cache = if train && self.dropout.iter().any(|&p| p > 0.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            self.forward_impl(&x64, Some((&mut rng, &self.dropout)))
        } else {
            self.forward_impl(&x64, None)
        };
        Ok(softmax(cache.logits()))
    }

    fn forward_impl(
        &self,
        input: &[f64],
        mut dropout: Option<(&mut ChaCha8Rng, &[f64])>,
    ) -> ForwardCache {
        debug_assert_eq!(input.len(), self.spec.input_len());
        let n_ops = self.plan.len();
        let mut cache = ForwardCache {
            acts: Vec::with_capacity(n_ops + 1),
            masks: vec![None; n_ops],
            argmax: vec![None; n_ops],
        };
        cache.acts.push(input.to_vec());
        let mut scratch: Vec<f64> = Vec::new();
        for (oi, op) in self.plan.iter().enumerate() {
            // Apply dropout to this op's input if it is a weighted layer
            // with a positive rate.
            let widx = match *op {
                PlanOp::Conv { widx, .. } | PlanOp::Full { widx, .. } => Some(widx),
                PlanOp::Pool { .. } => None,
            };
            let rate = widx
                .and_then(|w| dropout.as_ref().map(|(_, rates)| rates[w]))
                .unwrap_or(0.0);
            let cur = &cache.acts[oi];
            let input_used: &[f64] = if rate > 0.0 {
                let (rng, _) = dropout.as_mut().expect("rate implies dropout");
                let scale = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..cur.len())
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
                    .collect();
                scratch.clear();
                scratch.extend(cur.iter().zip(&mask).map(|(&v, &m)| v * m));
                cache.masks[oi] = Some(mask);
                &scratch
            } else {
                cur
            };
            let mut out = vec![0.0; op.out_len()];
            match *op {
                PlanOp::Conv {
                    w_off,
                    b_off,
                    in_c,
                    in_h,
                    in_w,
                    out_c,
                    out_h,
                    out_w,
                    k,
                    ..
                } => {
                    let weights = &self.params[w_off..b_off];
                    let biases = &self.params[b_off..b_off + out_c];
                    for oc in 0..out_c {
                        for oy in 0..out_h {
                            for ox in 0..out_w {
                                let mut acc = biases[oc];
                                for ic in 0..in_c {
                                    let wbase = ((oc * in_c + ic) * k) * k;
                                    for ky in 0..k {
                                        let irow = (ic * in_h + oy + ky) * in_w + ox;
                                        let wrow = wbase + ky * k;
                                        for kx in 0..k {
                                            acc += weights[wrow + kx] * input_used[irow + kx];
                                        }
                                    }
                                }
                                out[(oc * out_h + oy) * out_w + ox] = acc.max(0.0);
                            }
                        }
                    }
                }
                PlanOp::Pool {
                    c,
                    in_h,
                    in_w,
                    out_h,
                    out_w,
                } => {
                    let mut arg = vec![0u32; c * out_h * out_w];
                    for ch in 0..c {
                        for oy in 0..out_h {
                            for ox in 0..out_w {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_i = 0u32;
                                for ky in 0..2 {
                                    for kx in 0..2 {
                                        let ii = (ch * in_h + 2 * oy + ky) * in_w + 2 * ox + kx;
                                        if input_used[ii] > best {
                                            best = input_used[ii];
                                            best_i = ii as u32;
                                        }
                                    }
                                }
                                out[(ch * out_h + oy) * out_w + ox] = best;
                                arg[(ch * out_h + oy) * out_w + ox] = best_i;
                            }
                        }
                    }
                    cache.argmax[oi] = Some(arg);
                }
                PlanOp::Full {
                    w_off,
                    b_off,
                    in_len,
                    out_len,
                    relu,
                    ..
                } => {
                    let weights = &self.params[w_off..b_off];
                    let biases = &self.params[b_off..b_off + out_len];
                    for o in 0..out_len {
                        let row = &weights[o * in_len..(o + 1) * in_len];
                        let mut acc = biases[o];
                        for (w, x) in row.iter().zip(input_used) {
                            acc += w * x;
                        }
                        out[o] = if relu { acc.max(0.0) } else { acc };
                    }
                }
            }
            cache.acts.push(out);
        }
        cache
    }

    /// Loss and parameter gradient for one cached forward pass.
    fn backward_impl(&self, cache: &ForwardCache, label: usize) -> (f64, Vec<f64>) {
        let logits = cache.logits();
        let loss = cross_entropy(logits, label);
        let mut grads = vec![0.0; self.params.len()];
        let mut g_out = softmax(logits);
        g_out[label] -= 1.0;
        for (oi, op) in self.plan.iter().enumerate().rev() {
            let out = &cache.acts[oi + 1];
            let input_orig = &cache.acts[oi];
            // Reconstruct the op's effective input if dropout masked it.
            let masked: Vec<f64>;
            let input_used: &[f64] = match &cache.masks[oi] {
                Some(mask) => {
                    masked = input_orig.iter().zip(mask).map(|(&v, &m)| v * m).collect();
                    &masked
                }
                None => input_orig,
            };
            let mut g_in = vec![0.0; input_used.len()];
            match *op {
                PlanOp::Conv {
                    w_off,
                    b_off,
                    in_c,
                    in_h,
                    in_w,
                    out_c,
                    out_h,
                    out_w,
                    k,
                    ..
                } => {
                    let weights = &self.params[w_off..b_off];
                    for oc in 0..out_c {
                        for oy in 0..out_h {
                            for ox in 0..out_w {
                                let oidx = (oc * out_h + oy) * out_w + ox;
                                // ReLU gate: the stored activation is
                                // post-ReLU, so positive means pass.
                                if out[oidx] <= 0.0 {
                                    continue;
                                }
                                let g = g_out[oidx];
                                if g == 0.0 {
                                    continue;
                                }
                                grads[b_off + oc] += g;
                                for ic in 0..in_c {
                                    let wbase = ((oc * in_c + ic) * k) * k;
                                    for ky in 0..k {
                                        let irow = (ic * in_h + oy + ky) * in_w + ox;
                                        let wrow = wbase + ky * k;
                                        for kx in 0..k {
                                            grads[w_off + wrow + kx] +=
                                                g * input_used[irow + kx];
                                            g_in[irow + kx] += g * weights[wrow + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                PlanOp::Pool { .. } => {
                    let arg = cache.argmax[oi].as_ref().expect("pool cached argmax");
                    for (o, &src) in arg.iter().enumerate() {
                        g_in[src as usize] += g_out[o];
                    }
                }
                PlanOp::Full {
                    w_off,
                    b_off,
                    in_len,
                    out_len,
                    relu,
                    ..
                } => {
                    let weights = &self.params[w_off..b_off];
                    for o in 0..out_len {
                        if relu && out[o] <= 0.0 {
                            continue;
                        }
                        let g = g_out[o];
                        if g == 0.0 {
                            continue;
                        }
                        grads[b_off + o] += g;
                        let row = &weights[o * in_len..(o + 1) * in_len];
                        let wrow = &mut grads[w_off + o * in_len..w_off + (o + 1) * in_len];
                        for i in 0..in_len {
                            wrow[i] += g * input_used[i];
                            g_in[i] += g * row[i];
                        }
                    }
                }
            }
            // Route back through the dropout mask.
            if let Some(mask) = &cache.masks[oi] {
                for (gi, &m) in g_in.iter_mut().zip(mask) {
                    *gi *= m;
                }
            }
            g_out = g_in;
        }
        (loss, grads)
    }

    /// Cross-entropy of one raw input at the current parameters, eval mode.
    fn loss_of(&self, input: &[f64], label: usize) -> f64 {
        let cache = self.forward_impl(input, None);
        cross_entropy(cache.logits(), label)
    }

    /// One momentum-SGD step over a batch. Per-sample losses and gradients
    /// are computed in parallel, then reduced in batch order so results do
    /// not depend on thread scheduling. Returns the mean pre-update loss.
    pub fn train_step(
        &mut self,
        batch: &[(&FeatureTensor, usize)],
        cfg: &TrainConfig,
        step_seed: u64,
    ) -> Result<f64, NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        cfg.validate(&self.spec)?;
        for (x, label) in batch {
            self.check_input(x)?;
            if *label >= self.spec.classes {
                return Err(NetError::BadLabel {
                    label: *label,
                    classes: self.spec.classes,
                });
            }
        }
        let rates = cfg.rates(&self.spec);
        let use_dropout = rates.iter().any(|&p| p > 0.0);
        let results: Vec<(f64, Vec<f64>)> = batch
            .par_iter()
            .enumerate()
            .map(|(i, (x, label))| {
                let x64: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
                let cache = if use_dropout {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(derive_seed(step_seed, "dropout", &[i as u64]));
                    self.forward_impl(&x64, Some((&mut rng, &rates)))
                } else {
                    self.forward_impl(&x64, None)
                };
                self.backward_impl(&cache, *label)
            })
            .collect();
        let scale = 1.0 / batch.len() as f64;
        let mut mean_loss = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (loss, g) in &results {
            mean_loss += loss;
            for (acc, &gi) in grad.iter_mut().zip(g) {
                *acc += gi;
            }
        }
        mean_loss *= scale;
        for ((w, v), g) in self
            .params
            .iter_mut()
            .zip(&mut self.velocity)
            .zip(&grad)
        {
            *v = cfg.momentum * *v - cfg.learning_rate * g * scale;
            *w += *v;
        }
        Ok(mean_loss)
    }

    #[cfg(test)]
    fn act_lens_after_forward(&self, input: &[f64]) -> Vec<usize> {
        let cache = self.forward_impl(input, None);
        cache.acts.iter().map(Vec::len).collect()
    }
}

/// Compare analytic gradients against central finite differences on a toy
/// architecture. Returns the worst relative error over up to 50 sampled
/// parameters: |analytic - fd| / max(|analytic|, |fd|, 1e-5).
pub fn grad_check(spec: &ArchSpec, seed: u64) -> Result<f64, NetError> {
    grad_check_with_fault(spec, seed, 0.0)
}

/// `grad_check` with a fault injected into one analytic gradient component.
/// A nonzero `fault_delta` must push the reported error past any sane
/// threshold; it exists so tests can prove the check has teeth.
pub fn grad_check_with_fault(
    spec: &ArchSpec,
    seed: u64,
    fault_delta: f64,
) -> Result<f64, NetError> {
    let count = spec.param_count();
    if count > 10_000 {
        return Err(NetError::ConfigError(format!(
            "gradient check is for toy architectures, {count} parameters is too many"
        )));
    }
    let mut net = Network::init(spec.clone(), derive_seed(seed, "gc-init", &[]));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "gc-data", &[]));
    let input: Vec<f64> = (0..spec.input_len())
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    let label = rng.random_range(0..spec.classes);
    let cache = net.forward_impl(&input, None);
    let (_, mut analytic) = net.backward_impl(&cache, label);
    let n_probe = count.min(50);
    let mut picked = rand::seq::index::sample(&mut rng, count, n_probe).into_vec();
    picked.sort_unstable();
    if fault_delta != 0.0 {
        analytic[picked[0]] += fault_delta;
    }
    let h = 1e-5;
    let mut worst = 0.0f64;
    for idx in picked {
        let orig = net.params[idx];
        net.params[idx] = orig + h;
        let up = net.loss_of(&input, label);
        net.params[idx] = orig - h;
        let down = net.loss_of(&input, label);
        net.params[idx] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (analytic[idx] - fd).abs() / analytic[idx].abs().max(fd.abs()).max(1e-5);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::FeatureTensor;

    fn toy_spec() -> ArchSpec {
        ArchSpec::parse("1x6x6-2C3-MP2-4N-3Output").unwrap()
    }

    fn input_tensor(spec: &ArchSpec, seed: u64) -> FeatureTensor {
        let (c, h, w) = spec.input;
        let labels = (0..c).map(|i| format!("ch{i}")).collect();
        let mut t = FeatureTensor::zeros(labels, h, w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    t.set(ci, y, x, rng.random_range(-1.0..=1.0));
                }
            }
        }
        t
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = Network::init(toy_spec(), 5);
        let b = Network::init(toy_spec(), 5);
        assert_eq!(a.params(), b.params());
        let c = Network::init(toy_spec(), 6);
        assert_ne!(a.params(), c.params());
        // Conv biases at offset 18..20, full at 52..56, output at 68..71.
        for range in [18..20, 52..56, 68..71] {
            assert!(a.params()[range].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_weight_variance_tracks_fan_in() {
        // A layer with enough weights for a tight sample estimate.
        let spec = ArchSpec::parse("8x10x10-MP2-32N-5Output").unwrap();
        let net = Network::init(spec, 11);
        // First weighted layer: 32 x (8*5*5) = 6400 weights at offset 0.
        let fan_in = 8 * 5 * 5;
        let ws = &net.params()[..32 * fan_in];
        let mean: f64 = ws.iter().sum::<f64>() / ws.len() as f64;
        let var: f64 = ws.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / ws.len() as f64;
        let expected = 2.0 / fan_in as f64;
        assert!(
            (var - expected).abs() / expected < 0.2,
            "sample variance {var} vs expected {expected}"
        );
    }

    #[test]
    fn forward_produces_a_distribution() {
        let net = Network::init(toy_spec(), 1);
        let x = input_tensor(net.arch(), 2);
        let p = net.forward(&x, false, 0).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zeroed_params_give_uniform_distribution() {
        let spec = toy_spec();
        let net = Network::from_params(spec.clone(), vec![0.0; spec.param_count()]).unwrap();
        let x = input_tensor(&spec, 3);
        let p = net.forward(&x, false, 0).unwrap();
        for &v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let net = Network::init(toy_spec(), 1);
        let bad = FeatureTensor::zeros(vec!["a".into()], 5, 6).unwrap();
        assert!(matches!(
            net.forward(&bad, false, 0),
            Err(NetError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn activation_sizes_follow_the_shape_trace() {
        let spec = ArchSpec::parse("2x12x8-4C3-MP2-6N-4Output").unwrap();
        let net = Network::init(spec.clone(), 0);
        let lens = net.act_lens_after_forward(&vec![0.1; spec.input_len()]);
        let expected: Vec<usize> = spec.shape_trace().iter().map(Shape::len).collect();
        assert_eq!(lens, expected);
    }

    #[test]
    fn train_mode_without_dropout_equals_eval_mode() {
        let net = Network::init(toy_spec(), 7);
        let x = input_tensor(net.arch(), 8);
        let eval = net.forward(&x, false, 0).unwrap();
        let train = net.forward(&x, true, 99).unwrap();
        assert_eq!(eval, train);
    }

    #[test]
    fn dropout_is_seed_deterministic_and_seed_sensitive() {
        let mut net = Network::init(toy_spec(), 7);
        net.set_dropout(vec![0.5, 0.5, 0.5]).unwrap();
        let x = input_tensor(net.arch(), 8);
        let a = net.forward(&x, true, 1).unwrap();
        let b = net.forward(&x, true, 1).unwrap();
        assert_eq!(a, b);
        let mut differs = false;
        for seed in 2..10 {
            if net.forward(&x, true, seed).unwrap() != a {
                differs = true;
                break;
            }
        }
        assert!(differs, "dropout masks should vary with the seed");
    }

    #[test]
    fn set_dropout_validates() {
        let mut net = Network::init(toy_spec(), 7);
        assert!(net.set_dropout(vec![0.5]).is_err());
        assert!(net.set_dropout(vec![0.5, 0.5, 1.0]).is_err());
        assert!(net.set_dropout(vec![0.0, 0.1, 0.2]).is_ok());
    }

    #[test]
    fn train_step_rejects_bad_batches() {
        let mut net = Network::init(toy_spec(), 7);
        let cfg = TrainConfig::default();
        assert_eq!(
            net.train_step(&[], &cfg, 0).unwrap_err(),
            NetError::EmptyBatch
        );
        let x = input_tensor(net.arch(), 8);
        assert!(matches!(
            net.train_step(&[(&x, 3)], &cfg, 0).unwrap_err(),
            NetError::BadLabel { .. }
        ));
    }

    #[test]
    fn train_config_dropout_length_is_checked() {
        let cfg = TrainConfig {
            dropout: vec![0.1, 0.1],
            ..TrainConfig::default()
        };
        assert!(matches!(
            cfg.validate(&toy_spec()),
            Err(NetError::ConfigError(_))
        ));
    }

    #[test]
    fn single_sample_overfits() {
        let mut net = Network::init(toy_spec(), 13);
        let x = input_tensor(net.arch(), 14);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            ..TrainConfig::default()
        };
        let mut last = f64::INFINITY;
        for step in 0..200 {
            last = net.train_step(&[(&x, 1)], &cfg, step).unwrap();
        }
        assert!(last < 0.01, "loss after 200 steps: {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let runs: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let mut net = Network::init(toy_spec(), 21);
                let xs: Vec<FeatureTensor> =
                    (0..4).map(|i| input_tensor(net.arch(), 30 + i)).collect();
                let batch: Vec<(&FeatureTensor, usize)> =
                    xs.iter().enumerate().map(|(i, x)| (x, i % 3)).collect();
                let cfg = TrainConfig {
                    dropout: vec![0.2, 0.2, 0.2],
                    ..TrainConfig::default()
                };
                for step in 0..5 {
                    net.train_step(&batch, &cfg, 100 + step).unwrap();
                }
                net.params().to_vec()
            })
            .collect();
        assert_eq!(runs[0], runs[1]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let worst = grad_check(&toy_spec(), 3).unwrap();
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn grad_check_is_linear_exact_on_a_linear_net() {
        // No ReLU in the path to the loss: a single output layer.
        let spec = ArchSpec::parse("1x4x4-3Output").unwrap();
        let worst = grad_check(&spec, 5).unwrap();
        assert!(worst < 1e-6, "max relative error {worst}");
    }

    #[test]
    fn grad_check_catches_a_perturbed_gradient() {
        let worst = grad_check_with_fault(&toy_spec(), 3, 0.05).unwrap();
        assert!(worst > 1e-4, "fault went unnoticed: {worst}");
    }

    #[test]
    fn grad_check_refuses_large_architectures() {
        let spec =
            ArchSpec::parse("1x48x48-16C3-MP2-32C2-MP2-48C2-MP2-64C2-MP2-80C2-96N-10Output")
                .unwrap();
        assert!(matches!(
            grad_check(&spec, 0),
            Err(NetError::ConfigError(_))
        ));
    }
}
