//! Feedforward regression network mapping 2m flow features to 3n binned
//! force components, trained with mini-batch Adam on MSE with inverted
//! dropout, plus the evaluation metrics (RMSE, sparse RMSES, total-force
//! RMSET against binned ground truth and against F/T readings).
//!
//! Labels are packed axis-interleaved, `(fx_0, fy_0, fz_0, fx_1, ...)`, so
//! component `i` belongs to axis `i mod 3`.

mod checkpoint;
mod dataset;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use dataset::{Dataset, DatasetManifest, DatasetRecord};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::FtReading;
use crate::seed::stage_rng;
use crate::util::neumaier_sum;

/// Share of records held out as the test set.
pub const TEST_FRACTION: f64 = 0.2;

/// Layer weights and biases of the network; `weights[l]` has shape
/// `(size[l], size[l+1])`, activations are sigmoid on hidden layers and
/// identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl MlpParameters {
    pub fn new(
        layer_sizes: Vec<usize>,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let layers = layer_sizes.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::config(format!(
                "expected {layers} weight/bias pairs, got {}/{}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..layers {
            if weights[l].dim() != (layer_sizes[l], layer_sizes[l + 1])
                || biases[l].len() != layer_sizes[l + 1]
            {
                return Err(Error::config(format!("layer {l}: shape mismatch")));
            }
            if weights[l].iter().chain(biases[l].iter()).any(|v| !v.is_finite()) {
                return Err(Error::config(format!("layer {l}: non-finite parameter")));
            }
        }
        Ok(Self { layer_sizes, weights, biases })
    }

    pub fn zeros(layer_sizes: Vec<usize>) -> Result<Self> {
        let weights = layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[0], w[1])))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&s| Array1::zeros(s)).collect();
        Self::new(layer_sizes, weights, biases)
    }

    /// Xavier-uniform initialization, `U(-limit, limit)` with
    /// `limit = sqrt(6 / (fan_in + fan_out))`; biases start at zero.
    pub fn xavier(layer_sizes: Vec<usize>, rng: &mut ChaCha8Rng) -> Result<Self> {
        let weights = layer_sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-limit..limit))
            })
            .collect();
        let biases = layer_sizes[1..].iter().map(|&s| Array1::zeros(s)).collect();
        Self::new(layer_sizes, weights, biases)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    fn hidden_layers(&self) -> usize {
        self.layer_sizes.len() - 2
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Inference (`Eval`) applies no dropout; `Train` masks each hidden unit
/// with keep probability `1 - dropout_rate` and rescales by the keep
/// probability so expectations match eval mode.
pub enum ForwardMode<'a> {
    Eval,
    Train {
        dropout_rate: f64,
        rng: &'a mut ChaCha8Rng,
    },
}

/// Single-sample forward pass.
pub fn forward(params: &MlpParameters, features: &[f64], mode: ForwardMode<'_>) -> Result<Vec<f64>> {
    if features.len() != params.input_dim() {
        return Err(Error::config(format!(
            "{} features for an input layer of {}",
            features.len(),
            params.input_dim()
        )));
    }
    let mut dropout: Option<(f64, &mut ChaCha8Rng)> = match mode {
        ForwardMode::Eval => None,
        ForwardMode::Train { dropout_rate, rng } => {
            validate_dropout(dropout_rate)?;
            Some((dropout_rate, rng))
        }
    };

    let mut a = Array1::from_vec(features.to_vec());
    for l in 0..params.hidden_layers() {
        let mut h = (a.dot(&params.weights[l]) + &params.biases[l]).mapv(sigmoid);
        if let Some((rate, rng)) = dropout.as_mut() {
            if *rate > 0.0 {
                let keep = 1.0 - *rate;
                for v in h.iter_mut() {
                    *v = if rng.gen::<f64>() < keep { *v / keep } else { 0.0 };
                }
            }
        }
        a = h;
    }
    let out = a.dot(&params.weights[params.hidden_layers()])
        + &params.biases[params.hidden_layers()];
    Ok(out.to_vec())
}

fn validate_dropout(rate: f64) -> Result<()> {
    if !(rate.is_finite() && (0.0..1.0).contains(&rate)) {
        return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Mean squared error over all components.
pub fn mse_loss(pred: &[f64], label: &[f64]) -> Result<f64> {
    if pred.len() != label.len() || pred.is_empty() {
        return Err(Error::config(format!(
            "prediction length {} vs label length {}",
            pred.len(),
            label.len()
        )));
    }
    let sum: f64 = pred.iter().zip(label).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sum / pred.len() as f64)
}

/// Gradients of the batch-mean MSE with the same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

struct BatchCache {
    /// Post-dropout activations per hidden layer.
    activations: Vec<Array2<f64>>,
    /// Pre-dropout sigmoid outputs per hidden layer.
    sigmoids: Vec<Array2<f64>>,
    /// Dropout masks (already scaled by 1/keep) per hidden layer.
    masks: Vec<Option<Array2<f64>>>,
    prediction: Array2<f64>,
}

fn forward_batch(
    params: &MlpParameters,
    x: ArrayView2<f64>,
    dropout_rate: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> BatchCache {
    let hidden = params.hidden_layers();
    let mut activations = Vec::with_capacity(hidden);
    let mut sigmoids = Vec::with_capacity(hidden);
    let mut masks = Vec::with_capacity(hidden);

    let mut a = x.to_owned();
    for l in 0..hidden {
        let h = (a.dot(&params.weights[l]) + &params.biases[l]).mapv(sigmoid);
        let (dropped, mask) = match (&mut rng, dropout_rate > 0.0) {
            (Some(rng), true) => {
                let keep = 1.0 - dropout_rate;
                let mask = Array2::from_shape_fn(h.dim(), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                (&h * &mask, Some(mask))
            }
            _ => (h.clone(), None),
        };
        sigmoids.push(h);
        masks.push(mask);
        activations.push(dropped.clone());
        a = dropped;
    }
    let prediction = a.dot(&params.weights[hidden]) + &params.biases[hidden];
    BatchCache { activations, sigmoids, masks, prediction }
}

/// Exact gradients of the batch-mean MSE under freshly sampled dropout
/// masks (the same masks are used for the loss value returned alongside).
pub fn backward(
    params: &MlpParameters,
    features: ArrayView2<f64>,
    labels: ArrayView2<f64>,
    dropout_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Gradients, f64)> {
    validate_dropout(dropout_rate)?;
    let batch = features.nrows();
    if batch == 0 {
        return Err(Error::config("empty batch".to_string()));
    }
    if features.ncols() != params.input_dim()
        || labels.ncols() != params.output_dim()
        || labels.nrows() != batch
    {
        return Err(Error::config(format!(
            "batch shapes {:?}/{:?} for a [{}, ..., {}] network",
            features.dim(),
            labels.dim(),
            params.input_dim(),
            params.output_dim()
        )));
    }

    let hidden = params.hidden_layers();
    let cache = forward_batch(params, features, dropout_rate, Some(rng));

    let diff = &cache.prediction - &labels;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / (batch * params.output_dim()) as f64;

    let mut grads = Gradients {
        weights: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
        biases: params.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
    };

    // d loss / d prediction
    let mut delta = diff * (2.0 / (batch * params.output_dim()) as f64);

    // Output layer. dot() of a transposed view can come back in
    // column-major layout; normalize so consumers can rely on slices.
    let standard = |a: Array2<f64>| -> Array2<f64> {
        if a.is_standard_layout() {
            a
        } else {
            a.as_standard_layout().into_owned()
        }
    };
    let a_prev: ArrayView2<'_, f64> = if hidden == 0 {
        features.reborrow()
    } else {
        cache.activations[hidden - 1].view()
    };
    grads.weights[hidden] = standard(a_prev.t().dot(&delta));
    grads.biases[hidden] = delta.sum_axis(Axis(0));

    // Hidden layers, back to front.
    for l in (0..hidden).rev() {
        let mut da = delta.dot(&params.weights[l + 1].t());
        if let Some(mask) = &cache.masks[l] {
            da *= mask;
        }
        let h = &cache.sigmoids[l];
        let dz = da * h * (1.0 - h);
        let a_in: ArrayView2<'_, f64> = if l == 0 {
            features.reborrow()
        } else {
            cache.activations[l - 1].view()
        };
        grads.weights[l] = standard(a_in.t().dot(&dz));
        grads.biases[l] = dz.sum_axis(Axis(0));
        delta = dz;
    }

    Ok((grads, loss))
}

/// First/second moment accumulators of Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &MlpParameters) -> Self {
        Self {
            m_w: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_w: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_b: params.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            v_b: params.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut MlpParameters,
    state: &mut AdamState,
    grads: &Gradients,
    config: &TrainConfig,
) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);

    for l in 0..params.weights.len() {
        ndarray::Zip::from(&mut params.weights[l])
            .and(&mut state.m_w[l])
            .and(&mut state.v_w[l])
            .and(&grads.weights[l])
            .for_each(|w, m, v, &g| {
                *m = config.beta1 * *m + (1.0 - config.beta1) * g;
                *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
                *w -= config.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + config.epsilon);
            });
        ndarray::Zip::from(&mut params.biases[l])
            .and(&mut state.m_b[l])
            .and(&mut state.v_b[l])
            .and(&grads.biases[l])
            .for_each(|b, m, v, &g| {
                *m = config.beta1 * *m + (1.0 - config.beta1) * g;
                *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
                *b -= config.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + config.epsilon);
            });
    }
}

/// Training hyperparameters; defaults follow the deployed configuration
/// (hidden sizes 800/600/400, learning rate 1e-4, batch 400, dropout 0.1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_hidden")]
    pub hidden_sizes: Vec<usize>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Standardize features to zero mean / unit variance on the train split;
    /// the scaling is folded into the first layer of the returned model, so
    /// checkpoints always consume raw features.
    #[serde(default)]
    pub standardize_features: bool,
}

fn default_hidden() -> Vec<usize> {
    vec![800, 600, 400]
}
fn default_lr() -> f64 {
    1e-4
}
fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    400
}
fn default_dropout() -> f64 {
    0.1
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: default_hidden(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            dropout_rate: default_dropout(),
            epochs: default_epochs(),
            seed: 0,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            standardize_features: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        validate_dropout(self.dropout_rate)?;
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1".to_string()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config(format!("learning rate {}", self.learning_rate)));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::config(format!("hidden sizes {:?}", self.hidden_sizes)));
        }
        Ok(())
    }
}

/// Deterministic shuffled 80/20 split of `count` records.
pub fn split_dataset(count: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..count).collect();
    let mut rng = stage_rng(seed, "learning/split");
    // Fisher-Yates
    for i in (1..count).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let n_test = (count as f64 * TEST_FRACTION).floor() as usize;
    let train = indices[..count - n_test].to_vec();
    let test = indices[count - n_test..].to_vec();
    (train, test)
}

/// A trained network plus its training trace and record split.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: MlpParameters,
    /// Mean train MSE per epoch.
    pub loss_history: Vec<f64>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Mini-batch Adam training with a seeded shuffle, 80/20 split and
/// Xavier-uniform initialization; bit-deterministic for a fixed seed.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.records().is_empty() {
        return Err(Error::config("cannot train on an empty dataset".to_string()));
    }

    let in_dim = 2 * dataset.m();
    let out_dim = 3 * dataset.n();
    let mut layer_sizes = Vec::with_capacity(config.hidden_sizes.len() + 2);
    layer_sizes.push(in_dim);
    layer_sizes.extend_from_slice(&config.hidden_sizes);
    layer_sizes.push(out_dim);

    let (train_indices, test_indices) = split_dataset(dataset.records().len(), config.seed);

    let mut init_rng = stage_rng(config.seed, "learning/init");
    let mut params = MlpParameters::xavier(layer_sizes, &mut init_rng)?;

    // Optional feature standardization, estimated on the train split only.
    let scaler = if config.standardize_features {
        Some(FeatureScaler::fit(dataset, &train_indices))
    } else {
        None
    };
    let feature_of = |record: &DatasetRecord| -> Vec<f64> {
        match &scaler {
            Some(s) => s.apply(&record.features),
            None => record.features.clone(),
        }
    };

    let mut shuffle_rng = stage_rng(config.seed, "learning/shuffle");
    let mut dropout_rng = stage_rng(config.seed, "learning/dropout");
    let mut state = AdamState::new(&params);
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut order = train_indices.clone();

    for _epoch in 0..config.epochs {
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_sse = 0.0;
        let mut epoch_count = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let b = chunk.len();
            let mut x = Array2::zeros((b, in_dim));
            let mut y = Array2::zeros((b, out_dim));
            for (row, &idx) in chunk.iter().enumerate() {
                let rec = &dataset.records()[idx];
                let feats = feature_of(rec);
                x.row_mut(row).assign(&Array1::from_vec(feats));
                y.row_mut(row).assign(&Array1::from_vec(rec.label.clone()));
            }
            let (grads, loss) =
                backward(&params, x.view(), y.view(), config.dropout_rate, &mut dropout_rng)?;
            adam_step(&mut params, &mut state, &grads, config);
            epoch_sse += loss * b as f64;
            epoch_count += b;
        }
        loss_history.push(if epoch_count > 0 { epoch_sse / epoch_count as f64 } else { 0.0 });
    }

    if let Some(s) = scaler {
        params = s.fold_into_first_layer(params)?;
    }

    Ok(TrainedModel { params, loss_history, train_indices, test_indices })
}

struct FeatureScaler {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl FeatureScaler {
    fn fit(dataset: &Dataset, indices: &[usize]) -> Self {
        let dim = 2 * dataset.m();
        let n = indices.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for &i in indices {
            for (m, f) in mean.iter_mut().zip(&dataset.records()[i].features) {
                *m += f / n;
            }
        }
        let mut var = vec![0.0; dim];
        for &i in indices {
            for (v, (f, m)) in var.iter_mut().zip(dataset.records()[i].features.iter().zip(&mean)) {
                *v += (f - m) * (f - m) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = v.sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    fn apply(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(f, (m, s))| (f - m) / s)
            .collect()
    }

    /// Absorb `(x - mean) / std` into the first layer so the model takes raw
    /// features: `W'[i][j] = W[i][j] / std[i]`,
    /// `b'[j] = b[j] - sum_i W[i][j] mean[i] / std[i]`.
    fn fold_into_first_layer(&self, mut params: MlpParameters) -> Result<MlpParameters> {
        let w0 = &mut params.weights[0];
        let b0 = &mut params.biases[0];
        for j in 0..w0.ncols() {
            let mut shift = 0.0;
            for i in 0..w0.nrows() {
                let scaled = w0[(i, j)] / self.std[i];
                shift += scaled * self.mean[i];
                w0[(i, j)] = scaled;
            }
            b0[j] -= shift;
        }
        MlpParameters::new(params.layer_sizes, params.weights, params.biases)
    }
}

/// Evaluation metrics in Newtons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Per-axis RMSE over all label components.
    pub rmse_n: [f64; 3],
    /// Per-axis RMSE restricted to components whose ground truth is
    /// non-zero; absent when an axis has no non-zero components.
    pub rmses_n: [Option<f64>; 3],
    /// Per-axis RMSE of predicted vs ground-truth total force (bin sums).
    pub rmset_fem_n: [f64; 3],
    /// Per-axis RMSE of predicted totals vs F/T readings, when provided.
    pub rmset_ft_n: Option<[f64; 3]>,
}

/// Evaluate a model over a test set, with optional F/T readings for the
/// sensor-referenced total-force error.
pub fn evaluate(
    params: &MlpParameters,
    testset: &[DatasetRecord],
    ft_readings: Option<&[FtReading]>,
) -> Result<EvalReport> {
    if testset.is_empty() {
        return Err(Error::config("cannot evaluate on an empty test set".to_string()));
    }
    let out_dim = params.output_dim();
    if !out_dim.is_multiple_of(3) {
        return Err(Error::config(format!("output dimension {out_dim} is not a multiple of 3")));
    }

    let ft_map: Option<std::collections::HashMap<&str, &[f64; 3]>> = ft_readings.map(|rs| {
        rs.iter().map(|r| (r.indentation_id.as_str(), &r.total_n)).collect()
    });
    if let Some(map) = &ft_map {
        let missing: Vec<&str> = testset
            .iter()
            .filter(|r| !map.contains_key(r.indentation_id.as_str()))
            .map(|r| r.indentation_id.as_str())
            .take(10)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Pairing(format!(
                "test records without F/T readings: {}",
                missing.join(", ")
            )));
        }
    }

    let mut sq = [Vec::new(), Vec::new(), Vec::new()];
    let mut sq_sparse = [Vec::new(), Vec::new(), Vec::new()];
    let mut sq_total_fem = [Vec::new(), Vec::new(), Vec::new()];
    let mut sq_total_ft = [Vec::new(), Vec::new(), Vec::new()];

    for rec in testset {
        if rec.label.len() != out_dim {
            return Err(Error::config(format!(
                "record {}: label length {} for an output layer of {out_dim}",
                rec.indentation_id,
                rec.label.len()
            )));
        }
        let pred = forward(params, &rec.features, ForwardMode::Eval)?;
        let mut totals_pred = [0.0f64; 3];
        let mut totals_truth = [0.0f64; 3];
        for (i, (&p, &y)) in pred.iter().zip(&rec.label).enumerate() {
            let axis = i % 3;
            let d = p - y;
            sq[axis].push(d * d);
            if y != 0.0 {
                sq_sparse[axis].push(d * d);
            }
            totals_pred[axis] += p;
            totals_truth[axis] += y;
        }
        for axis in 0..3 {
            let d = totals_pred[axis] - totals_truth[axis];
            sq_total_fem[axis].push(d * d);
        }
        if let Some(map) = &ft_map {
            let ft = map[rec.indentation_id.as_str()];
            for axis in 0..3 {
                let d = totals_pred[axis] - ft[axis];
                sq_total_ft[axis].push(d * d);
            }
        }
    }

    let rms = |v: &[f64]| (neumaier_sum(v.iter().copied()) / v.len() as f64).sqrt();
    let mut report = EvalReport {
        rmse_n: [0.0; 3],
        rmses_n: [None, None, None],
        rmset_fem_n: [0.0; 3],
        rmset_ft_n: ft_map.as_ref().map(|_| [0.0; 3]),
    };
    for axis in 0..3 {
        report.rmse_n[axis] = rms(&sq[axis]);
        if !sq_sparse[axis].is_empty() {
            report.rmses_n[axis] = Some(rms(&sq_sparse[axis]));
        }
        report.rmset_fem_n[axis] = rms(&sq_total_fem[axis]);
        if let Some(t) = report.rmset_ft_n.as_mut() {
            t[axis] = rms(&sq_total_ft[axis]);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_params() -> MlpParameters {
        MlpParameters::new(
            vec![2, 2, 1],
            vec![array![[0.1, -0.2], [0.3, 0.4]], array![[0.7], [-0.6]]],
            vec![array![0.05, -0.05], array![0.2]],
        )
        .unwrap()
    }

    #[test]
    fn forward_matches_hand_computation() {
        // Reference value from a 40-digit evaluation of the sigmoid chain.
        let out = forward(&tiny_params(), &[1.0, 2.0], ForwardMode::Eval).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0] - 0.29494373481629467).abs() < 1e-15, "{}", out[0]);
    }

    #[test]
    fn forward_zero_weights_gives_zero_output() {
        let params = MlpParameters::zeros(vec![4, 3, 2]).unwrap();
        let out = forward(&params, &[1.0, -2.0, 3.0, 0.5], ForwardMode::Eval).unwrap();
        // sigmoid(0) = 0.5 on hidden, but zero output weights kill it
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_dropout_zero_equals_eval() {
        let params = tiny_params();
        let mut rng = stage_rng(1, "learning/test");
        let train = forward(
            &params,
            &[0.3, -0.7],
            ForwardMode::Train { dropout_rate: 0.0, rng: &mut rng },
        )
        .unwrap();
        let eval = forward(&params, &[0.3, -0.7], ForwardMode::Eval).unwrap();
        assert_eq!(train, eval);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        assert!(forward(&tiny_params(), &[1.0], ForwardMode::Eval).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mse_loss(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn backward_zero_error_gives_zero_gradients() {
        let params = tiny_params();
        let x = array![[1.0, 2.0]];
        let y = array![[0.29494373481629467]];
        let mut rng = stage_rng(2, "learning/test");
        let (grads, loss) = backward(&params, x.view(), y.view(), 0.0, &mut rng).unwrap();
        assert!(loss < 1e-28);
        for g in &grads.weights {
            assert!(g.iter().all(|v| v.abs() < 1e-14));
        }
    }

    fn finite_difference_check(layer_sizes: Vec<usize>, seed: u64) -> f64 {
        let mut rng = stage_rng(seed, "learning/fd-init");
        let mut params = MlpParameters::xavier(layer_sizes.clone(), &mut rng).unwrap();
        // Random biases too, so all parameter classes are exercised.
        for b in &mut params.biases {
            for v in b.iter_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        let batch = 5;
        let x = Array2::from_shape_fn((batch, layer_sizes[0]), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((batch, *layer_sizes.last().unwrap()), |_| {
            rng.gen_range(-1.0..1.0)
        });

        let mut dummy = stage_rng(0, "learning/fd");
        let (grads, _) = backward(&params, x.view(), y.view(), 0.0, &mut dummy).unwrap();

        let loss_of = |p: &MlpParameters| {
            let cache = forward_batch(p, x.view(), 0.0, None);
            let diff = &cache.prediction - &y;
            diff.iter().map(|d| d * d).sum::<f64>() / (batch * p.output_dim()) as f64
        };

        let h = 1e-6;
        let mut max_rel: f64 = 0.0;
        for l in 0..params.weights.len() {
            for idx in 0..params.weights[l].len() {
                let mut hi = params.clone();
                let mut lo = params.clone();
                hi.weights[l].as_slice_mut().unwrap()[idx] += h;
                lo.weights[l].as_slice_mut().unwrap()[idx] -= h;
                let fd = (loss_of(&hi) - loss_of(&lo)) / (2.0 * h);
                let bp = grads.weights[l].as_slice().unwrap()[idx];
                let rel = (fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-8);
                max_rel = max_rel.max(rel);
            }
            for idx in 0..params.biases[l].len() {
                let mut hi = params.clone();
                let mut lo = params.clone();
                hi.biases[l][idx] += h;
                lo.biases[l][idx] -= h;
                let fd = (loss_of(&hi) - loss_of(&lo)) / (2.0 * h);
                let bp = grads.biases[l][idx];
                let rel = (fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-8);
                max_rel = max_rel.max(rel);
            }
        }
        max_rel
    }

    #[test]
    fn backward_matches_finite_differences() {
        let rel = finite_difference_check(vec![4, 3, 3, 3, 2], 11);
        assert!(rel < 1e-6, "max relative gradient error {rel}");
    }

    #[test]
    fn backward_is_linear_over_batches() {
        let mut rng = stage_rng(5, "learning/linear");
        let params = MlpParameters::xavier(vec![3, 4, 2], &mut rng).unwrap();
        let xa = Array2::from_shape_fn((2, 3), |_| rng.gen_range(-1.0..1.0));
        let ya = Array2::from_shape_fn((2, 2), |_| rng.gen_range(-1.0..1.0));
        let xb = Array2::from_shape_fn((3, 3), |_| rng.gen_range(-1.0..1.0));
        let yb = Array2::from_shape_fn((3, 2), |_| rng.gen_range(-1.0..1.0));

        let mut dummy = stage_rng(0, "learning/linear-d");
        let (ga, _) = backward(&params, xa.view(), ya.view(), 0.0, &mut dummy).unwrap();
        let (gb, _) = backward(&params, xb.view(), yb.view(), 0.0, &mut dummy).unwrap();

        let mut xc = Array2::zeros((5, 3));
        let mut yc = Array2::zeros((5, 2));
        xc.slice_mut(ndarray::s![..2, ..]).assign(&xa);
        xc.slice_mut(ndarray::s![2.., ..]).assign(&xb);
        yc.slice_mut(ndarray::s![..2, ..]).assign(&ya);
        yc.slice_mut(ndarray::s![2.., ..]).assign(&yb);
        let (gc, _) = backward(&params, xc.view(), yc.view(), 0.0, &mut dummy).unwrap();

        for l in 0..gc.weights.len() {
            let blended = &ga.weights[l] * (2.0 / 5.0) + &gb.weights[l] * (3.0 / 5.0);
            let diff = (&gc.weights[l] - &blended).mapv(f64::abs);
            assert!(diff.iter().all(|&d| d < 1e-12));
        }
    }

    #[test]
    fn adam_examples() {
        let config = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut params = MlpParameters::new(
            vec![1, 1],
            vec![array![[1.0]]],
            vec![array![0.0]],
        )
        .unwrap();
        let mut state = AdamState::new(&params);

        // Zero gradient: parameters unchanged.
        let zero = Gradients {
            weights: vec![array![[0.0]]],
            biases: vec![array![0.0]],
        };
        adam_step(&mut params, &mut state, &zero, &config);
        assert_eq!(params.weights[0][(0, 0)], 1.0);

        // Constant gradient 0.5: two steps match the hand-rolled reference
        // (bias-corrected first step is ~ -lr * sign(g)).
        let mut params = MlpParameters::new(vec![1, 1], vec![array![[1.0]]], vec![array![0.0]]).unwrap();
        let mut state = AdamState::new(&params);
        let g = Gradients { weights: vec![array![[0.5]]], biases: vec![array![0.0]] };
        adam_step(&mut params, &mut state, &g, &config);
        assert!((params.weights[0][(0, 0)] - 0.9000000020).abs() < 1e-9, "{}", params.weights[0][(0, 0)]);
        adam_step(&mut params, &mut state, &g, &config);
        assert!((params.weights[0][(0, 0)] - 0.8000000040).abs() < 1e-9, "{}", params.weights[0][(0, 0)]);
    }

    #[test]
    fn dropout_expectation_matches_eval() {
        let mut rng = stage_rng(31, "learning/dropout-exp");
        let params = MlpParameters::xavier(vec![6, 8, 8, 4], &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eval = forward(&params, &x, ForwardMode::Eval).unwrap();

        let mut mask_rng = stage_rng(32, "learning/dropout-masks");
        let trials = 20_000;
        let mut mean = [0.0; 4];
        for _ in 0..trials {
            let out = forward(
                &params,
                &x,
                ForwardMode::Train { dropout_rate: 0.1, rng: &mut mask_rng },
            )
            .unwrap();
            for (m, o) in mean.iter_mut().zip(out) {
                *m += o / trials as f64;
            }
        }
        let num: f64 = mean.iter().zip(&eval).map(|(m, e)| (m - e) * (m - e)).sum::<f64>().sqrt();
        let den: f64 = eval.iter().map(|e| e * e).sum::<f64>().sqrt();
        assert!(num / den < 0.01, "relative deviation {}", num / den);
    }

    fn linear_task_dataset(seed: u64) -> Dataset {
        // labels = A . features + small noise; m = 8 regions, n = 4 bins.
        let (m, n) = (8usize, 4usize);
        let (fdim, ldim) = (2 * m, 3 * n);
        let mut rng = stage_rng(seed, "learning/linear-task");
        let a = Array2::from_shape_fn((fdim, ldim), |_| rng.gen_range(-0.5..0.5));
        let records = (0..2000)
            .map(|i| {
                let feats: Vec<f64> = (0..fdim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let x = Array1::from_vec(feats.clone());
                let label: Vec<f64> = x
                    .dot(&a)
                    .iter()
                    .map(|v| v + rng.gen_range(-0.01..0.01))
                    .collect();
                DatasetRecord {
                    indentation_id: format!("r{i:04}"),
                    features: feats,
                    label,
                }
            })
            .collect();
        Dataset::new(m, n, records, None, None).unwrap()
    }

    fn label_variance(dataset: &Dataset) -> f64 {
        let dim = 3 * dataset.n();
        let count = dataset.records().len() as f64;
        let mut mean = vec![0.0; dim];
        for r in dataset.records() {
            for (m, l) in mean.iter_mut().zip(&r.label) {
                *m += l / count;
            }
        }
        let mut var = 0.0;
        for r in dataset.records() {
            for (m, l) in mean.iter().zip(&r.label) {
                var += (l - m) * (l - m);
            }
        }
        var / (count * dim as f64)
    }

    #[test]
    fn training_fits_a_linear_task() {
        let dataset = linear_task_dataset(77);
        let config = TrainConfig {
            hidden_sizes: vec![32, 24, 16],
            learning_rate: 1e-3,
            batch_size: 100,
            dropout_rate: 0.0,
            epochs: 200,
            seed: 9,
            ..TrainConfig::default()
        };
        let model = train(&dataset, &config).unwrap();
        let var = label_variance(&dataset);
        let final_loss = *model.loss_history.last().unwrap();
        assert!(
            final_loss < 0.1 * var,
            "final train MSE {final_loss} vs label variance {var}"
        );
        assert!(model.loss_history[config.epochs - 1] < model.loss_history[0]);

        // Same seed, same history, bit for bit.
        let again = train(&dataset, &config).unwrap();
        for (a, b) in model.loss_history.iter().zip(&again.loss_history) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (wa, wb) in model.params.weights().iter().zip(again.params.weights()) {
            assert!(wa.iter().zip(wb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let dataset = linear_task_dataset(78);
        let config = TrainConfig {
            hidden_sizes: vec![8, 8, 8],
            learning_rate: 0.0,
            batch_size: 200,
            dropout_rate: 0.1,
            epochs: 3,
            seed: 4,
            ..TrainConfig::default()
        };
        let model = train(&dataset, &config).unwrap();
        let mut init_rng = stage_rng(4, "learning/init");
        let sizes = vec![16, 8, 8, 8, 12];
        let init = MlpParameters::xavier(sizes, &mut init_rng).unwrap();
        for (wa, wb) in model.params.weights().iter().zip(init.weights()) {
            assert!(wa.iter().zip(wb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn standardization_folds_into_first_layer() {
        // With and without standardization the model must consume raw
        // features; predictions of the standardized model stay finite and
        // its loss should be no worse than epsilon-ish on the linear task.
        let dataset = linear_task_dataset(79);
        let config = TrainConfig {
            hidden_sizes: vec![16, 12, 8],
            learning_rate: 1e-3,
            batch_size: 200,
            dropout_rate: 0.0,
            epochs: 50,
            seed: 12,
            standardize_features: true,
            ..TrainConfig::default()
        };
        let model = train(&dataset, &config).unwrap();
        let rec = &dataset.records()[0];
        let pred = forward(&model.params, &rec.features, ForwardMode::Eval).unwrap();
        assert!(pred.iter().all(|p| p.is_finite()));
        assert_eq!(pred.len(), 12);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (train, test) = split_dataset(100, 5);
        assert_eq!(train.len(), 80);
        assert_eq!(test.len(), 20);
        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (train2, test2) = split_dataset(100, 5);
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn evaluate_examples() {
        // Identity-ish check with a handcrafted 1-bin network: n = 1 bin,
        // m = 1 region; pick weights so predictions are constant.
        let params = MlpParameters::new(
            vec![2, 2, 3],
            vec![Array2::zeros((2, 2)), Array2::zeros((2, 3))],
            vec![Array1::zeros(2), array![0.0, 0.0, -0.9]],
        )
        .unwrap();
        let record = DatasetRecord {
            indentation_id: "a".to_string(),
            features: vec![0.0, 0.0],
            label: vec![0.0, 0.0, -1.0],
        };

        let report = evaluate(&params, std::slice::from_ref(&record), None).unwrap();
        // x axis: truth 0, pred 0 -> rmse 0, rmses absent.
        assert_eq!(report.rmse_n[0], 0.0);
        assert!(report.rmses_n[0].is_none());
        // z axis: truth -1, pred -0.9.
        assert!((report.rmse_n[2] - 0.1).abs() < 1e-12);
        assert!((report.rmses_n[2].unwrap() - 0.1).abs() < 1e-12);
        assert!((report.rmset_fem_n[2] - 0.1).abs() < 1e-12);
        assert!(report.rmset_ft_n.is_none());

        // Perfect predictions: everything zero.
        let perfect = DatasetRecord {
            label: vec![0.0, 0.0, -0.9],
            ..record.clone()
        };
        let report = evaluate(&params, &[perfect], None).unwrap();
        assert_eq!(report.rmse_n, [0.0; 3]);
        assert_eq!(report.rmses_n[2], Some(0.0));

        // F/T totals path.
        let ft = vec![FtReading::new("a", [0.0, 0.0, -1.0], [0.03, 0.03, 0.06]).unwrap()];
        let report = evaluate(&params, std::slice::from_ref(&record), Some(&ft)).unwrap();
        assert!((report.rmset_ft_n.unwrap()[2] - 0.1).abs() < 1e-12);

        // Unmatched id.
        let ft = vec![FtReading::new("other", [0.0; 3], [0.03, 0.03, 0.06]).unwrap()];
        assert!(matches!(evaluate(&params, &[record], Some(&ft)), Err(Error::Pairing(_))));
    }

    #[test]
    fn evaluate_two_bin_totals() {
        // Two bins of (0, 0, -1) predicted as (0, 0, -0.9):
        // total error on z is 0.2.
        let params = MlpParameters::new(
            vec![2, 2, 6],
            vec![Array2::zeros((2, 2)), Array2::zeros((2, 6))],
            vec![
                Array1::zeros(2),
                array![0.0, 0.0, -0.9, 0.0, 0.0, -0.9],
            ],
        )
        .unwrap();
        let record = DatasetRecord {
            indentation_id: "a".into(),
            features: vec![0.0, 0.0],
            label: vec![0.0, 0.0, -1.0, 0.0, 0.0, -1.0],
        };
        let report = evaluate(&params, &[record], None).unwrap();
        assert!((report.rmset_fem_n[2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rmses_equals_rmse_without_zeros() {
        let mut rng = stage_rng(41, "learning/rmses");
        let params = MlpParameters::xavier(vec![4, 5, 6], &mut rng).unwrap();
        let records: Vec<DatasetRecord> = (0..6)
            .map(|i| DatasetRecord {
                indentation_id: format!("r{i}"),
                features: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                // no zero components
                label: (0..6).map(|_| rng.gen_range(0.1..1.0)).collect(),
            })
            .collect();
        let report = evaluate(&params, &records, None).unwrap();
        for axis in 0..3 {
            assert!(report.rmse_n[axis] >= 0.0);
            let rmses = report.rmses_n[axis].unwrap();
            assert!((rmses - report.rmse_n[axis]).abs() < 1e-12);
        }
    }
}
