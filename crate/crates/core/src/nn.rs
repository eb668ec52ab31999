//! Fully connected ReLU networks, a deterministic full-batch trainer and the
//! operator-network composition `D ∘ pad ∘ net ∘ restrict ∘ E`.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FemSolution, Mesh};
use crate::frames::{CoeffSeq, Decoder, Encoder};
use crate::linalg::Point2;
use crate::scalar::Real;
use crate::shape_param::ParamPoint;

/// Affine layer `x ↦ W x + b` with `W` stored row-major (`rows × cols`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Layer<T> {
    pub fn new(rows: usize, cols: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weights.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: weights.len() });
        }
        if bias.len() != rows {
            return Err(Error::DimensionMismatch { expected: rows, got: bias.len() });
        }
        Ok(Self { rows, cols, weights, bias })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, weights: vec![T::zero(); rows * cols], bias: vec![T::zero(); rows] }
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        self.weights
            .chunks(self.cols)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi))
            .collect()
    }

    fn nnz(&self) -> usize {
        self.weights.iter().chain(&self.bias).filter(|&&v| v != T::zero()).count()
    }
}

/// `A_L ∘ ReLU ∘ A_{L−1} ∘ ⋯ ∘ ReLU ∘ A_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReluNet<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> ReluNet<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[1].cols != w[0].rows {
                return Err(Error::DimensionMismatch { expected: w[0].rows, got: w[1].cols });
            }
        }
        Ok(Self { layers })
    }

    /// Layer widths `n_0, …, n_{L+1}`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].cols).chain(self.layers.iter().map(|l| l.rows)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").rows
    }

    /// He-uniform weights from a seeded stream, zero biases.
    pub fn random(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidInput("need at least input and output widths, all positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                let weights = (0..w[0] * w[1]).map(|_| T::lit(rng.gen_range(-bound..bound))).collect();
                Layer { rows: w[1], cols: w[0], weights, bias: vec![T::zero(); w[1]] }
            })
            .collect();
        Self::new(layers)
    }

    /// `x ↦ ReLU(x) − ReLU(−x)` in dimension `d`.
    pub fn identity_emulation(d: usize) -> Self {
        let mut w0 = vec![T::zero(); 2 * d * d];
        let mut w1 = vec![T::zero(); 2 * d * d];
        for i in 0..d {
            w0[i * d + i] = T::one();
            w0[(d + i) * d + i] = -T::one();
            w1[i * 2 * d + i] = T::one();
            w1[i * 2 * d + d + i] = -T::one();
        }
        Self {
            layers: vec![
                Layer { rows: 2 * d, cols: d, weights: w0, bias: vec![T::zero(); 2 * d] },
                Layer { rows: d, cols: 2 * d, weights: w1, bias: vec![T::zero(); d] },
            ],
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (j, layer) in self.layers.iter().enumerate() {
            a = layer.apply(&a);
            if j < last {
                a.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
        }
        Ok(a)
    }

    /// Number of nonzero weights and biases.
    pub fn size(&self) -> usize {
        self.layers.iter().map(Layer::nnz).sum()
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let net: Self = serde_json::from_reader(r).map_err(|e| Error::Parse(e.to_string()))?;
        for l in &net.layers {
            Layer::new(l.rows, l.cols, l.weights.clone(), l.bias.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        }
        Self::new(net.layers).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain gradient descent with the step schedule.
    GradientDescent,
    /// Full-batch Adam (β₁ = 0.9, β₂ = 0.999) with the same step schedule.
    Adam,
}

/// Trainer settings; defaults are depth 3, width 64, 5000 epochs, step
/// `1e−2` halved every 1000 epochs, plain gradient descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub depth: usize,
    pub width: usize,
    pub epochs: usize,
    pub step: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub validation_fraction: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            width: 64,
            epochs: 5000,
            step: 1e-2,
            decay_every: 1000,
            decay_factor: 0.5,
            validation_fraction: 0.2,
            optimizer: Optimizer::GradientDescent,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(std::iter::repeat_n(self.width, self.depth))
            .chain(std::iter::once(output))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport<T> {
    pub net: ReluNet<T>,
    pub initial_train_loss: T,
    pub initial_validation_loss: T,
    pub train_loss: T,
    pub validation_loss: T,
    pub best_epoch: usize,
    pub size: usize,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

/// Mean over samples and outputs of the squared error.
pub fn mse<T: Real>(net: &ReluNet<T>, data: &[(Vec<T>, Vec<T>)], idx: &[usize]) -> Result<T> {
    if idx.is_empty() {
        return Ok(T::zero());
    }
    let mut acc = T::zero();
    for &i in idx {
        let (x, y) = &data[i];
        let p = net.forward(x)?;
        acc += p.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
    }
    Ok(acc / T::from_usize_exact(idx.len() * net.output_dim()))
}

/// Full-batch gradient of [`mse`] by backpropagation.
fn gradient<T: Real>(net: &ReluNet<T>, data: &[(Vec<T>, Vec<T>)], idx: &[usize]) -> Vec<Layer<T>> {
    let mut grads: Vec<Layer<T>> = net.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect();
    let scale = T::lit(2.0) / T::from_usize_exact(idx.len() * net.output_dim());
    let last = net.layers.len() - 1;
    let mut acts: Vec<Vec<T>> = Vec::with_capacity(net.layers.len() + 1);
    for &i in idx {
        let (x, y) = &data[i];
        acts.clear();
        acts.push(x.clone());
        for (j, layer) in net.layers.iter().enumerate() {
            let mut z = layer.apply(&acts[j]);
            if j < last {
                z.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            acts.push(z);
        }
        let mut delta: Vec<T> = acts[last + 1].iter().zip(y).map(|(&p, &t)| scale * (p - t)).collect();
        for j in (0..=last).rev() {
            let layer = &net.layers[j];
            let g = &mut grads[j];
            let input = &acts[j];
            for r in 0..layer.rows {
                let d = delta[r];
                if d == T::zero() {
                    continue;
                }
                g.bias[r] += d;
                let row = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                for (gw, &a) in row.iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if j > 0 {
                let mut prev = vec![T::zero(); layer.cols];
                for r in 0..layer.rows {
                    let d = delta[r];
                    if d == T::zero() {
                        continue;
                    }
                    let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // ReLU derivative: active where the stored activation is positive.
                for (p, &a) in prev.iter_mut().zip(&acts[j]) {
                    if a <= T::zero() {
                        *p = T::zero();
                    }
                }
                delta = prev;
            }
        }
    }
    grads
}

/// Fixed 80/20-style split from a seeded shuffle. A single sample goes to
/// training only.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split_salt(seed)));
    let n_val = if n < 2 { 0 } else { ((n as f64 * validation_fraction).round() as usize).clamp(1, n - 1) };
    let val = idx.split_off(n - n_val);
    (idx, val)
}

// Keeps the split stream distinct from the initialization stream.
const fn split_salt(x: u64) -> u64 {
    x.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Trains a fresh network of the configured architecture on `data`
/// (pairs of input and target vectors) and returns the iterate with the
/// lowest validation loss (training loss when there is no validation set).
pub fn train<T: Real>(data: &[(Vec<T>, Vec<T>)], cfg: &TrainConfig) -> Result<TrainReport<T>> {
    let first = data.first().ok_or_else(|| Error::InvalidInput("training set is empty".into()))?;
    let (n_in, n_out) = (first.0.len(), first.1.len());
    if data.iter().any(|(x, y)| x.len() != n_in || y.len() != n_out) {
        return Err(Error::InvalidInput("inconsistent sample dimensions".into()));
    }
    let net = ReluNet::random(&cfg.widths(n_in, n_out), cfg.seed)?;
    train_from(net, data, cfg)
}

/// Continues training from a given network.
pub fn train_from<T: Real>(mut net: ReluNet<T>, data: &[(Vec<T>, Vec<T>)], cfg: &TrainConfig) -> Result<TrainReport<T>> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let (tr, va) = split_indices(data.len(), cfg.validation_fraction, cfg.seed);
    let monitor = |net: &ReluNet<T>| -> Result<(T, T)> { Ok((mse(net, data, &tr)?, mse(net, data, &va)?)) };
    let (t0, v0) = monitor(&net)?;
    let score = |t: T, v: T| if va.is_empty() { t } else { v };
    let mut best = (score(t0, v0), net.clone(), t0, v0, 0);
    let (b1, b2, eps) = (T::lit(0.9), T::lit(0.999), T::lit(1e-8));
    let mut m: Vec<Layer<T>> = net.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect();
    let mut v = m.clone();
    let (mut b1t, mut b2t) = (T::one(), T::one());
    for epoch in 1..=cfg.epochs {
        let halvings = if cfg.decay_every == 0 { 0 } else { (epoch - 1) / cfg.decay_every };
        let step = T::lit(cfg.step * cfg.decay_factor.powi(halvings as i32));
        let grads = gradient(&net, data, &tr);
        match cfg.optimizer {
            Optimizer::GradientDescent => {
                for (layer, g) in net.layers.iter_mut().zip(&grads) {
                    for (w, &gw) in layer.weights.iter_mut().zip(&g.weights) {
                        *w -= step * gw;
                    }
                    for (b, &gb) in layer.bias.iter_mut().zip(&g.bias) {
                        *b -= step * gb;
                    }
                }
            }
            Optimizer::Adam => {
                b1t *= b1;
                b2t *= b2;
                let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let mh = *m / (T::one() - b1t);
                    let vh = *v / (T::one() - b2t);
                    *p -= step * mh / (vh.sqrt() + eps);
                };
                for (((layer, g), ml), vl) in net.layers.iter_mut().zip(&grads).zip(&mut m).zip(&mut v) {
                    for (((w, &gw), mw), vw) in
                        layer.weights.iter_mut().zip(&g.weights).zip(&mut ml.weights).zip(&mut vl.weights)
                    {
                        update(w, gw, mw, vw);
                    }
                    for (((b, &gb), mb), vb) in layer.bias.iter_mut().zip(&g.bias).zip(&mut ml.bias).zip(&mut vl.bias)
                    {
                        update(b, gb, mb, vb);
                    }
                }
            }
        }
        let (t, vl) = monitor(&net)?;
        if !t.is_finite() || !vl.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, train: t.to_f64_lossless(), validation: vl.to_f64_lossless() });
        }
        if score(t, vl) < best.0 {
            best = (score(t, vl), net.clone(), t, vl, epoch);
        }
    }
    let (_, net, train_loss, validation_loss, best_epoch) = best;
    let size = net.size();
    Ok(TrainReport {
        net,
        initial_train_loss: t0,
        initial_validation_loss: v0,
        train_loss,
        validation_loss,
        best_epoch,
        size,
        train_indices: tr,
        validation_indices: va,
    })
}

/// `D ∘ R′ ∘ net ∘ R ∘ E`.
#[derive(Clone, Debug)]
pub struct OnetModel<'a, T> {
    pub encoder: &'a Encoder<'a, T>,
    pub net: ReluNet<T>,
    pub decoder: Decoder<T>,
}

pub fn compose_onet<'a, T: Real>(
    encoder: &'a Encoder<'a, T>,
    net: ReluNet<T>,
    decoder: Decoder<T>,
) -> Result<OnetModel<'a, T>> {
    if net.input_dim() > encoder.dim() {
        return Err(Error::DimensionMismatch { expected: encoder.dim(), got: net.input_dim() });
    }
    if net.output_dim() > decoder.m_out {
        return Err(Error::DimensionMismatch { expected: decoder.m_out, got: net.output_dim() });
    }
    Ok(OnetModel { encoder, net, decoder })
}

impl<T: Real> OnetModel<'_, T> {
    /// Net output padded to the decoder truncation, from encoder coefficients.
    pub fn coefficients(&self, code: &CoeffSeq<T>) -> Result<CoeffSeq<T>> {
        let x = code.restrict(self.net.input_dim()).pad(self.net.input_dim());
        Ok(CoeffSeq::new(self.net.forward(&x.values)?).pad(self.decoder.m_out))
    }

    /// Applies the model to a raw parameter (encoded as `(w_j y_j)`).
    pub fn apply_param(&self, y: &ParamPoint<T>, mesh: &Arc<Mesh<T>>) -> Result<FemSolution<T>> {
        let code = self.encoder.encode_param(y)?;
        self.decoder.decode(&self.coefficients(&code)?, mesh)
    }

    /// Applies the model to a displacement field by quadrature encoding.
    pub fn apply_field<F: Fn(Point2<T>) -> Point2<T>>(&self, d: F, mesh: &Arc<Mesh<T>>) -> Result<FemSolution<T>> {
        let code = self.encoder.encode_field(d);
        self.decoder.decode(&self.coefficients(&code)?, mesh)
    }
}
