//! Fully connected feed-forward classifier: relu hidden layers, softmax
//! output, cross-entropy loss, trained with Adam on minibatches.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AbsenteeismClass;
use crate::numerics::{argmax, log_sum_exp, softmax_in_place, Matrix, RngStream, Scalar};
use crate::preprocess::{stratified_split, EncodedMatrix};

pub const DEFAULT_HIDDEN_LAYERS: [usize; 4] = [400, 100, 50, 20];

/// Rows per parallel gradient chunk. Chunks are summed in a fixed order so
/// gradients do not depend on thread scheduling.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    /// `outputs × inputs`.
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    fn affine(&self, a: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.weights
                .row_iter()
                .zip(&self.bias)
                .map(|(w, &b)| b + crate::numerics::dot(w, a)),
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<T> {
    pub layers: Vec<Layer<T>>,
}

/// Per-layer pre-activations and activations from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    /// `pre[l]` is the input to layer `l`'s nonlinearity.
    pub pre: Vec<Vec<T>>,
    /// `post[0]` is the input; `post[l + 1]` is layer `l`'s output.
    pub post: Vec<Vec<T>>,
}

impl<T: Scalar> MlpModel<T> {
    /// He-normal weights (`N(0, 2/fan_in)`), zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer sizes {sizes:?}")));
        }
        let mut rng = RngStream::derive(seed, 0xA22);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let scale = (2.0 / w[0] as f64).sqrt();
                let values = (0..w[0] * w[1]).map(|_| T::of(scale * rng.next_normal())).collect();
                Layer {
                    weights: Matrix::from_raw(w[1], w[0], values),
                    bias: vec![T::zero(); w[1]],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::DimensionMismatch {
                    expected: layer.outputs(),
                    found: layer.bias.len(),
                });
            }
            if layer.bias.iter().any(|b| !b.is_finite()) || layer.weights.values().iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFinite(format!("layer {l}")));
            }
            if l > 0 && layers[l - 1].outputs() != layer.inputs() {
                return Err(Error::DimensionMismatch {
                    expected: layers[l - 1].outputs(),
                    found: layer.inputs(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.n_inputs()];
        s.extend(self.layers.iter().map(Layer::outputs));
        s
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.values().len() + l.bias.len()).sum()
    }

    /// Parameters layer by layer, weights (row-major) before biases.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.values());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                found: params.len(),
            });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.values().len();
            l.weights.values_mut().copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect(),
        }
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Output logits, before the softmax.
    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&a, &mut z);
            if l < last {
                for v in &mut z {
                    *v = v.max(T::zero());
                }
            }
            std::mem::swap(&mut a, &mut z);
        }
        Ok(a)
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let mut p = self.logits(x)?;
        softmax_in_place(&mut p);
        Ok(p)
    }

    pub fn forward_trace(&self, x: &[T]) -> Result<ForwardTrace<T>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = vec![x.to_vec()];
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(&post[l], &mut z);
            let mut a = z.clone();
            if l < last {
                for v in &mut a {
                    *v = v.max(T::zero());
                }
            } else {
                softmax_in_place(&mut a);
            }
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardTrace { pre, post })
    }

    pub fn predict_index(&self, x: &[T]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Sum of per-row cross-entropy over `rows`, accumulating gradients into `grad`.
    fn accumulate(&self, x: &Matrix<T>, labels: &[usize], rows: &[usize], grad: &mut Self) -> Result<T> {
        let mut loss = T::zero();
        let last = self.layers.len() - 1;
        for &r in rows {
            let trace = self.forward_trace(x.row(r))?;
            let y = labels[r];
            let logits = &trace.pre[last];
            loss += log_sum_exp(logits) - logits[y];
            let mut delta = trace.post[last + 1].clone();
            delta[y] -= T::one();
            for l in (0..=last).rev() {
                let input = &trace.post[l];
                let g = &mut grad.layers[l];
                let width = input.len();
                for (o, &d) in delta.iter().enumerate() {
                    g.bias[o] += d;
                    if d != T::zero() {
                        let row = &mut g.weights.values_mut()[o * width..(o + 1) * width];
                        for (gw, &a) in row.iter_mut().zip(input) {
                            *gw += d * a;
                        }
                    }
                }
                if l > 0 {
                    let w = &self.layers[l].weights;
                    let mut prev = vec![T::zero(); width];
                    for (o, &d) in delta.iter().enumerate() {
                        if d != T::zero() {
                            for (p, &wv) in prev.iter_mut().zip(w.row(o)) {
                                *p += wv * d;
                            }
                        }
                    }
                    for (p, &z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                        if z <= T::zero() {
                            *p = T::zero();
                        }
                    }
                    delta = prev;
                }
            }
        }
        Ok(loss)
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weights.values_mut().iter_mut().zip(b.weights.values()) {
                *x += y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            for x in l.weights.values_mut() {
                *x *= s;
            }
            for x in &mut l.bias {
                *x *= s;
            }
        }
    }
}

pub fn ann_forward<T: Scalar>(model: &MlpModel<T>, x: &[T]) -> Result<Vec<T>> {
    model.forward(x)
}

pub fn ann_predict<T: Scalar>(model: &MlpModel<T>, x: &[T]) -> Result<AbsenteeismClass> {
    let i = model.predict_index(x)?;
    AbsenteeismClass::from_index(i).ok_or_else(|| Error::InvalidParameter(format!("class index {i}")))
}

fn batch_gradient<T: Scalar>(model: &MlpModel<T>, x: &Matrix<T>, labels: &[usize], rows: &[usize]) -> Result<(T, MlpModel<T>)> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no rows".into()));
    }
    let parts = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = model.zeros_like();
            let loss = model.accumulate(x, labels, chunk, &mut g)?;
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = parts.into_iter();
    let (mut loss, mut grad) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        grad.add_assign(&g);
    }
    let inv = T::one() / T::of(rows.len() as f64);
    grad.scale(inv);
    Ok((loss * inv, grad))
}

/// Mean cross-entropy over the batch and its exact gradient, shaped like the model.
pub fn ann_backward<T: Scalar>(model: &MlpModel<T>, batch: &Matrix<T>, labels: &[usize]) -> Result<(T, MlpModel<T>)> {
    if batch.cols() != model.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: model.n_inputs(),
            found: batch.cols(),
        });
    }
    if labels.len() != batch.rows() {
        return Err(Error::DimensionMismatch {
            expected: batch.rows(),
            found: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.n_outputs()) {
        return Err(Error::InvalidParameter(format!("label {bad} out of range")));
    }
    let rows: Vec<usize> = (0..batch.rows()).collect();
    batch_gradient(model, batch, labels, &rows)
}

/// Mean cross-entropy of `model` on the given rows.
pub fn ann_loss<T: Scalar>(model: &MlpModel<T>, x: &Matrix<T>, labels: &[usize], rows: &[usize]) -> Result<T> {
    let mut total = T::zero();
    for &r in rows {
        let logits = model.logits(x.row(r))?;
        total += log_sum_exp(&logits) - logits[labels[r]];
    }
    Ok(total / T::of(rows.len().max(1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_layers: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Share of training rows held out for early stopping; 0 disables.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: DEFAULT_HIDDEN_LAYERS.to_vec(),
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 30,
            validation_fraction: 0.15,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && (0.0..1.0).contains(&self.validation_fraction)
            && !self.hidden_layers.contains(&0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid network training config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean minibatch loss per completed epoch.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Epoch (1-based) whose parameters were kept; 0 means the initialization.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Training-matrix rows held out for early stopping.
    pub validation_rows: Vec<usize>,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn step(&mut self, params: &mut [T], grad: &[T], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let lr = T::of(cfg.learning_rate);
        let eps = T::of(cfg.epsilon);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

/// Minibatch Adam on mean cross-entropy with validation-based early stopping.
/// The returned model is the one with the lowest validation loss.
pub fn ann_train<T: Scalar>(x: &Matrix<T>, labels: &[AbsenteeismClass], config: &TrainConfig) -> Result<(MlpModel<T>, TrainReport)> {
    config.validate()?;
    if x.rows() == 0 {
        return Err(Error::EmptyInput("no rows".into()));
    }
    if labels.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: labels.len(),
        });
    }
    let distinct = AbsenteeismClass::ALL.iter().filter(|c| labels.contains(c)).count();
    if distinct < 2 {
        return Err(Error::SingleClass);
    }
    let y: Vec<usize> = labels.iter().map(|c| c.index()).collect();
    let mut sizes = vec![x.cols()];
    sizes.extend(&config.hidden_layers);
    sizes.push(AbsenteeismClass::COUNT);
    let mut model = MlpModel::init(&sizes, config.seed)?;

    let (mut fit_rows, validation_rows) = if config.validation_fraction > 0.0 && config.patience > 0 {
        let split = stratified_split(labels, 1.0 - config.validation_fraction, config.seed ^ 0x5EED_0A11)?;
        (split.train, split.test)
    } else {
        ((0..x.rows()).collect(), Vec::new())
    };

    let mut rng = RngStream::derive(config.seed, 0xBA7C);
    let mut adam = Adam {
        m: vec![T::zero(); model.n_params()],
        v: vec![T::zero(); model.n_params()],
        t: 0,
    };
    let mut params = model.flat_params();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut report = TrainReport {
        train_loss: Vec::new(),
        validation_loss: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        validation_rows,
    };

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut fit_rows);
        let mut epoch_loss = 0.0;
        for batch in fit_rows.chunks(config.batch_size) {
            let (loss, grad) = batch_gradient(&model, x, &y, batch)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut params, &grad.flat_params(), config);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            model.set_flat_params(&params)?;
        }
        report.train_loss.push(epoch_loss / fit_rows.len() as f64);

        if report.validation_rows.is_empty() {
            continue;
        }
        let val = ann_loss(&model, x, &y, &report.validation_rows)?.as_f64();
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        report.validation_loss.push(val);
        if val < best.0 {
            best = (val, params.clone(), epoch);
        } else if epoch - best.2 >= config.patience {
            report.stopped_early = true;
            break;
        }
    }

    if !report.validation_rows.is_empty() {
        model.set_flat_params(&best.1)?;
        report.best_epoch = best.2;
    } else {
        report.best_epoch = report.train_loss.len();
    }
    Ok((model, report))
}

pub fn ann_train_encoded<T: Scalar>(matrix: &EncodedMatrix<T>, config: &TrainConfig) -> Result<(MlpModel<T>, TrainReport)> {
    ann_train(&matrix.values, &matrix.labels, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    fn random_batch(rng: &mut RngStream, rows: usize, cols: usize, classes: usize) -> (Matrix<f64>, Vec<usize>) {
        let values = (0..rows * cols).map(|_| rng.next_normal()).collect();
        let labels = (0..rows).map(|_| rng.next_below(classes)).collect();
        (Matrix::new(rows, cols, values).unwrap(), labels)
    }

    fn near_kink(model: &MlpModel<f64>, x: &Matrix<f64>) -> bool {
        let last = model.layers.len() - 1;
        x.row_iter().any(|r| {
            let t = model.forward_trace(r).unwrap();
            t.pre[..last].iter().flatten().any(|z| z.abs() < 1e-6)
        })
    }

    fn check_gradient(sizes: &[usize], seed: u64) -> Option<f64> {
        let mut rng = RngStream::new(seed);
        let mut model = MlpModel::<f64>::init(sizes, seed).unwrap();
        // Non-zero biases so the check also covers them.
        let mut p = model.flat_params();
        for v in &mut p {
            *v += 0.1 * rng.next_normal();
        }
        model.set_flat_params(&p).unwrap();
        let (x, y) = random_batch(&mut rng, 5, sizes[0], sizes[sizes.len() - 1]);
        if near_kink(&model, &x) {
            return None;
        }
        let (_, grad) = ann_backward(&model, &x, &y).unwrap();
        let rows: Vec<usize> = (0..x.rows()).collect();
        let numeric = finite_diff_grad(
            |q: &[f64]| {
                let mut m = model.clone();
                m.set_flat_params(q).unwrap();
                ann_loss(&m, &x, &y, &rows).unwrap()
            },
            &model.flat_params(),
            1e-6,
        );
        Some(rel_err(&grad.flat_params(), &numeric))
    }

    #[test]
    fn six_parameter_net_gradient_matches_finite_differences() {
        let err = check_gradient(&[2, 2], 1).unwrap();
        assert!(err < 1e-5, "relative error {err}");
        assert_eq!(MlpModel::<f64>::init(&[2, 2], 1).unwrap().n_params(), 6);
    }

    #[test]
    fn backward_matches_finite_differences_over_twenty_seeds() {
        let mut checked = 0;
        let mut seed = 0;
        while checked < 20 {
            let sizes = match seed % 3 {
                0 => vec![3, 4, 3],
                1 => vec![2, 5, 4, 3],
                _ => vec![4, 3, 3, 2, 3],
            };
            if let Some(err) = check_gradient(&sizes, seed) {
                assert!(err < 1e-5, "seed {seed}: relative error {err}");
                checked += 1;
            }
            seed += 1;
            assert!(seed < 200, "too many seeds rejected near relu kinks");
        }
    }

    #[test]
    fn hand_computed_forward_pass() {
        // 2-3-2 network.
        let l1 = Layer {
            weights: Matrix::from_rows(&[vec![0.5, -1.0], vec![0.25, 0.75], vec![-0.3, 0.2]]).unwrap(),
            bias: vec![0.1, -0.2, 0.05],
        };
        let l2 = Layer {
            weights: Matrix::from_rows(&[vec![1.0, -0.5, 0.3], vec![-0.4, 0.6, 0.9]]).unwrap(),
            bias: vec![0.02, -0.03],
        };
        let model = MlpModel::from_layers(vec![l1, l2]).unwrap();
        let x = [0.8, 0.4];
        // Hidden pre-activations.
        let h = [
            (0.5f64 * 0.8 - 1.0 * 0.4 + 0.1).max(0.0),
            (0.25 * 0.8 + 0.75 * 0.4 - 0.2f64).max(0.0),
            (-0.3 * 0.8 + 0.2 * 0.4 + 0.05f64).max(0.0),
        ];
        let z0 = 1.0 * h[0] - 0.5 * h[1] + 0.3 * h[2] + 0.02;
        let z1 = -0.4 * h[0] + 0.6 * h[1] + 0.9 * h[2] - 0.03;
        let e0 = z0.exp();
        let e1 = z1.exp();
        let p = model.forward(&x).unwrap();
        assert!((p[0] - e0 / (e0 + e1)).abs() < 1e-12);
        assert!((p[1] - e1 / (e0 + e1)).abs() < 1e-12);
    }

    #[test]
    fn zero_network_outputs_uniform() {
        let mut m = MlpModel::<f64>::init(&[4, 5, 3], 1).unwrap();
        let zeros = vec![0.0; m.n_params()];
        m.set_flat_params(&zeros).unwrap();
        for p in m.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn shifting_output_bias_keeps_probabilities() {
        let m = MlpModel::<f64>::init(&[3, 4, 3], 2).unwrap();
        let mut shifted = m.clone();
        for b in &mut shifted.layers[1].bias {
            *b += 7.5;
        }
        let x = [0.3, -0.2, 0.9];
        let (a, b) = (m.forward(&x).unwrap(), shifted.forward(&x).unwrap());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn outputs_are_probability_vectors() {
        let m = MlpModel::<f64>::init(&[6, 10, 8, 3], 3).unwrap();
        let mut rng = RngStream::new(4);
        for _ in 0..200 {
            let x: Vec<f64> = (0..6).map(|_| 50.0 * rng.next_normal()).collect();
            let p = m.forward(&x).unwrap();
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_input_gives_zero_first_layer_weight_gradient() {
        let m = MlpModel::<f64>::init(&[3, 4, 3], 5).unwrap();
        let x = Matrix::zeros(4, 3);
        let (_, g) = ann_backward(&m, &x, &[0, 1, 2, 1]).unwrap();
        assert!(g.layers[0].weights.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let m = MlpModel::<f64>::init(&[3, 6, 3], 6).unwrap();
        let mut rng = RngStream::new(6);
        let (x, y) = random_batch(&mut rng, 7, 3, 3);
        let idx: Vec<usize> = (0..7).flat_map(|i| [i, i]).collect();
        let x2 = x.select_rows(&idx);
        let y2: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
        let (l1, g1) = ann_backward(&m, &x, &y).unwrap();
        let (l2, g2) = ann_backward(&m, &x2, &y2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        assert!(rel_err(&g1.flat_params(), &g2.flat_params()) < 1e-12);
    }

    fn toy_separable() -> (Matrix<f64>, Vec<AbsenteeismClass>) {
        let mut rng = RngStream::new(10);
        let centers = [[-2.0, 0.0], [2.0, 0.0], [0.0, 3.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, ctr) in centers.iter().enumerate() {
            for _ in 0..30 {
                rows.push(vec![ctr[0] + 0.4 * rng.next_normal(), ctr[1] + 0.4 * rng.next_normal()]);
                labels.push(AbsenteeismClass::ALL[c]);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn learns_a_separable_toy_set() {
        let (x, labels) = toy_separable();
        let cfg = TrainConfig {
            hidden_layers: vec![16, 8],
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-2,
            validation_fraction: 0.0,
            patience: 0,
            seed: 3,
            ..TrainConfig::default()
        };
        let (m, report) = ann_train(&x, &labels, &cfg).unwrap();
        assert_eq!(report.train_loss.len(), 200);
        for (row, l) in x.row_iter().zip(&labels) {
            assert_eq!(ann_predict(&m, row).unwrap(), *l);
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (x, labels) = toy_separable();
        let cfg = TrainConfig {
            hidden_layers: vec![5],
            epochs: 0,
            seed: 9,
            ..TrainConfig::default()
        };
        let (m, report) = ann_train(&x, &labels, &cfg).unwrap();
        assert_eq!(m, MlpModel::init(&[2, 5, 3], 9).unwrap());
        assert!(report.train_loss.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let (x, labels) = toy_separable();
        let cfg = TrainConfig {
            hidden_layers: vec![12, 6],
            epochs: 40,
            batch_size: 8,
            seed: 11,
            ..TrainConfig::default()
        };
        let (m1, r1) = ann_train(&x, &labels, &cfg).unwrap();
        let (m2, r2) = ann_train(&x, &labels, &cfg).unwrap();
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&r1.train_loss), bits(&r2.train_loss));
        assert_eq!(m1, m2);
        assert!(!r1.validation_rows.is_empty());
    }

    #[test]
    fn full_batch_gradient_descent_is_monotone() {
        let mut rng = RngStream::new(12);
        let (x, y) = random_batch(&mut rng, 20, 4, 3);
        let mut m = MlpModel::<f64>::init(&[4, 8, 3], 12).unwrap();
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let (loss, g) = ann_backward(&m, &x, &y).unwrap();
            assert!(loss <= prev + 1e-12, "{loss} > {prev}");
            prev = loss;
            let p: Vec<f64> = m.flat_params().iter().zip(g.flat_params()).map(|(p, g)| p - 0.01 * g).collect();
            m.set_flat_params(&p).unwrap();
        }
    }

    #[test]
    fn divergence_names_the_epoch() {
        let (x, labels) = toy_separable();
        let cfg = TrainConfig {
            hidden_layers: vec![4],
            epochs: 5,
            learning_rate: 1e306,
            validation_fraction: 0.0,
            patience: 0,
            ..TrainConfig::default()
        };
        match ann_train(&x, &labels, &cfg) {
            Err(Error::Diverged { epoch }) => assert_eq!(epoch, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Matrix::<f64>::zeros(4, 2);
        let labels = vec![AbsenteeismClass::APlus; 4];
        assert!(matches!(ann_train(&x, &labels, &TrainConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn f32_network_runs() {
        let m = MlpModel::<f32>::init(&[3, 4, 3], 1).unwrap();
        let p = m.forward(&[0.1, 0.2, 0.3]).unwrap();
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}
