//! Surrogate classifier: a ReLU MLP trained with mini-batch SGD + momentum on the
//! evidential compound loss.

use crate::config::{format_f64, format_list, ConfigError, KeyValues};
use crate::data::DatasetBundle;
use crate::evidential::{
    annealing_coefficient, compound_loss, compound_loss_gradient, CeMode, EvidentialError,
};
use crate::rng::{Prng, Stream};
use rayon::prelude::*;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer_dims needs at least an input and an output size, got {0:?}")]
    InvalidLayers(Vec<usize>),
    #[error("input has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model outputs {model} classes but the dataset has {dataset}")]
    ClassMismatch { model: usize, dataset: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: u32 },
    #[error("non-finite parameters after epoch {epoch}")]
    NonFiniteParameters { epoch: u32 },
    #[error("cannot evaluate on an empty split")]
    EmptySplit,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Evidential(#[from] EvidentialError),
    #[error("recorder: {0}")]
    Recorder(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub anneal_epochs: u32,
    pub lambda_max: f64,
    pub ce_mode: CeMode,
    pub layer_dims: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 0,
            anneal_epochs: 10,
            lambda_max: 1.0,
            ce_mode: CeMode::Softmax,
            layer_dims: vec![784, 128, 64, 10],
        }
    }
}

impl TrainConfig {
    /// Defaults with a `dim → 128 → 64 → classes` network.
    pub fn for_dataset(dim: usize, classes: usize) -> Self {
        Self {
            layer_dims: vec![dim, 128, 64, classes],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be finite and >= 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} not in [0, 1)", self.momentum));
        }
        if self.anneal_epochs == 0 {
            return bad("anneal_epochs must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.lambda_max) {
            return bad(format!("lambda_max {} not in [0, 1]", self.lambda_max));
        }
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(ModelError::InvalidLayers(self.layer_dims.clone()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "epochs={}\nbatch_size={}\nlearning_rate={}\nmomentum={}\nseed={}\nanneal_epochs={}\nlambda_max={}\nce_mode={}\nlayer_dims={}\n",
            self.epochs,
            self.batch_size,
            format_f64(self.learning_rate),
            format_f64(self.momentum),
            self.seed,
            self.anneal_epochs,
            format_f64(self.lambda_max),
            self.ce_mode.as_str(),
            format_list(&self.layer_dims),
        )
    }

    /// Missing keys keep their defaults; unknown keys are rejected.
    pub fn from_kv(mut kv: KeyValues) -> Result<Self, ModelError> {
        let d = Self::default();
        let cfg = Self {
            epochs: kv.take("epochs")?.unwrap_or(d.epochs),
            batch_size: kv.take("batch_size")?.unwrap_or(d.batch_size),
            learning_rate: kv.take("learning_rate")?.unwrap_or(d.learning_rate),
            momentum: kv.take("momentum")?.unwrap_or(d.momentum),
            seed: kv.take("seed")?.unwrap_or(d.seed),
            anneal_epochs: kv.take("anneal_epochs")?.unwrap_or(d.anneal_epochs),
            lambda_max: kv.take("lambda_max")?.unwrap_or(d.lambda_max),
            ce_mode: kv.take("ce_mode")?.unwrap_or(d.ce_mode),
            layer_dims: kv.take_list("layer_dims")?.unwrap_or(d.layer_dims),
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, ModelError> {
        Self::from_kv(KeyValues::read(path)?)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_kv())
    }
}

/// Dense layer, weights row-major `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(dot + self.biases[o]);
        }
    }
}

/// ReLU MLP with an identity output layer producing logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Dense>,
}

impl MlpClassifier {
    /// He-style uniform init `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self, ModelError> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(ModelError::InvalidLayers(layer_dims.to_vec()));
        }
        let layers = layer_dims
            .windows(2)
            .enumerate()
            .map(|(l, pair)| {
                let (in_dim, out_dim) = (pair[0], pair[1]);
                let bound = (6.0 / in_dim as f64).sqrt();
                let mut rng = Prng::new(seed, Stream::Init, l as u32);
                Dense {
                    in_dim,
                    out_dim,
                    weights: (0..in_dim * out_dim).map(|_| rng.uniform(-bound, bound)).collect(),
                    biases: vec![0.0; out_dim],
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>, ModelError> {
        if features.len() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                found: features.len(),
            });
        }
        let mut x = features.to_vec();
        let mut y = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&x, &mut y);
            if l != last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    /// Accumulates ∂loss/∂θ for one sample into `grads` (laid out like
    /// [`MlpClassifier::parameters`]) and returns the logits.
    fn backprop(
        &self,
        features: &[f64],
        output_grad: impl FnOnce(&[f64]) -> Result<Vec<f64>, ModelError>,
        grads: &mut [f64],
    ) -> Result<Vec<f64>, ModelError> {
        let last = self.layers.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(features.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(layer.out_dim);
            layer.affine(&acts[l], &mut y);
            if l != last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(y);
        }
        let logits = acts.pop().unwrap();
        let mut delta = output_grad(&logits)?;

        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.weights.len() + layer.biases.len();
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &acts[l];
            let (gw, gb) = grads[offsets[l]..offsets[l] + layer.weights.len() + layer.out_dim]
                .split_at_mut(layer.weights.len());
            for o in 0..layer.out_dim {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
            }
            if l > 0 {
                let mut next = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    next.iter_mut().zip(row).for_each(|(n, w)| *n += w * d);
                }
                // ReLU mask: the stored activation is zero exactly where the unit was off.
                next.iter_mut().zip(input).for_each(|(n, &a)| {
                    if a <= 0.0 {
                        *n = 0.0;
                    }
                });
                delta = next;
            }
        }
        Ok(logits)
    }
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// End-of-epoch snapshot of every training sample, in dataset order.
#[derive(Debug, Clone)]
pub struct EpochRecord<'a> {
    pub epoch: u32,
    pub class_count: usize,
    /// Row-major `N × C`.
    pub logits: &'a [f64],
    pub labels: &'a [u32],
    pub confidence: &'a [f64],
    pub correct: &'a [bool],
}

/// Sink for per-epoch training dynamics.
pub trait Recorder {
    fn record(&mut self, record: &EpochRecord<'_>) -> Result<(), String>;

    /// When false the trainer skips the end-of-epoch recording pass.
    fn enabled(&self) -> bool {
        true
    }
}

/// Discards everything; used when retraining on a coreset.
pub struct NullRecorder;

impl Recorder for NullRecorder {
    fn record(&mut self, _: &EpochRecord<'_>) -> Result<(), String> {
        Ok(())
    }
    fn enabled(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: u32,
    pub mean_loss: f64,
    /// Accuracy of the mini-batch-time predictions made before each update.
    pub train_accuracy: f64,
}

/// Samples per parallel gradient chunk; chunks are reduced in order so results
/// do not depend on the thread count.
const GRAD_CHUNK: usize = 16;

/// Model plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: MlpClassifier,
    pub config: TrainConfig,
    velocity: Vec<f64>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let model = MlpClassifier::init(&config.layer_dims, config.seed)?;
        let velocity = vec![0.0; model.parameter_count()];
        Ok(Self {
            model,
            config,
            velocity,
        })
    }

    fn check_dataset(&self, dataset: &DatasetBundle) -> Result<(), ModelError> {
        if dataset.dim != self.model.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.model.input_dim(),
                found: dataset.dim,
            });
        }
        if dataset.class_count != self.model.class_count() {
            return Err(ModelError::ClassMismatch {
                model: self.model.class_count(),
                dataset: dataset.class_count,
            });
        }
        Ok(())
    }

    /// One shuffled pass over every sample of `dataset`, then (if the recorder
    /// is enabled) a full forward pass whose per-sample confidence and
    /// correctness are handed to `recorder`.
    pub fn train_epoch(
        &mut self,
        dataset: &DatasetBundle,
        epoch: u32,
        recorder: &mut dyn Recorder,
    ) -> Result<EpochSummary, ModelError> {
        self.check_dataset(dataset)?;
        let n = dataset.len();
        let cfg = &self.config;
        let lambda_t = annealing_coefficient(epoch, cfg.anneal_epochs, cfg.lambda_max);
        let ce_mode = cfg.ce_mode;

        let mut order: Vec<usize> = (0..n).collect();
        Prng::new(cfg.seed, Stream::Shuffle, epoch).shuffle(&mut order);

        let n_params = self.model.parameter_count();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let model = &self.model;
            let partials: Vec<(Vec<f64>, f64, usize)> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| -> Result<_, ModelError> {
                    let mut grads = vec![0.0; n_params];
                    let mut loss = 0.0;
                    let mut hits = 0;
                    for &i in chunk {
                        let label = dataset.one_hot_row(i);
                        let logits = model.backprop(
                            dataset.row(i),
                            |z| {
                                let l = compound_loss(z, label, lambda_t, ce_mode)?;
                                if !l.total.is_finite() {
                                    return Err(ModelError::NonFiniteLoss { epoch });
                                }
                                loss += l.total;
                                Ok(compound_loss_gradient(z, label, lambda_t, ce_mode)?)
                            },
                            &mut grads,
                        )?;
                        hits += (argmax(&logits) == dataset.labels[i] as usize) as usize;
                    }
                    Ok((grads, loss, hits))
                })
                .collect::<Result<_, _>>()?;

            let mut grads = vec![0.0; n_params];
            for (g, l, h) in partials {
                grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                loss_sum += l;
                correct += h;
            }
            let scale = 1.0 / batch.len() as f64;
            self.apply_update(&grads, scale);
        }
        if self.model.parameters().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFiniteParameters { epoch });
        }

        if recorder.enabled() {
            self.record_epoch(dataset, epoch, recorder)?;
        }
        Ok(EpochSummary {
            epoch,
            mean_loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
        })
    }

    fn apply_update(&mut self, grads: &[f64], scale: f64) {
        let lr = self.config.learning_rate;
        let mu = self.config.momentum;
        let mut k = 0;
        for layer in &mut self.model.layers {
            for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                let v = &mut self.velocity[k];
                *v = mu * *v + grads[k] * scale;
                *p -= lr * *v;
                k += 1;
            }
        }
    }

    fn record_epoch(
        &self,
        dataset: &DatasetBundle,
        epoch: u32,
        recorder: &mut dyn Recorder,
    ) -> Result<(), ModelError> {
        let c = dataset.class_count;
        let logits: Vec<Vec<f64>> = (0..dataset.len())
            .into_par_iter()
            .map(|i| self.model.forward(dataset.row(i)))
            .collect::<Result<_, _>>()?;
        let mut confidence = Vec::with_capacity(dataset.len());
        let mut correct = Vec::with_capacity(dataset.len());
        for (i, z) in logits.iter().enumerate() {
            let alpha_norm = z
                .iter()
                .map(|&v| {
                    let a = v.max(0.0) + 1.0;
                    a * a
                })
                .sum::<f64>()
                .sqrt();
            confidence.push(alpha_norm);
            correct.push(argmax(z) == dataset.labels[i] as usize);
        }
        let flat: Vec<f64> = logits.into_iter().flatten().collect();
        recorder
            .record(&EpochRecord {
                epoch,
                class_count: c,
                logits: &flat,
                labels: &dataset.labels,
                confidence: &confidence,
                correct: &correct,
            })
            .map_err(ModelError::Recorder)
    }

    /// Runs epochs `1..=config.epochs`.
    pub fn fit(
        &mut self,
        dataset: &DatasetBundle,
        recorder: &mut dyn Recorder,
        mut on_epoch: impl FnMut(&EpochSummary),
    ) -> Result<Vec<EpochSummary>, ModelError> {
        (1..=self.config.epochs)
            .map(|epoch| {
                let s = self.train_epoch(dataset, epoch, recorder)?;
                on_epoch(&s);
                Ok(s)
            })
            .collect()
    }
}

/// Fraction of samples whose argmax logit equals the label.
pub fn evaluate(model: &MlpClassifier, dataset: &DatasetBundle) -> Result<f64, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptySplit);
    }
    let hits: usize = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            model
                .forward(dataset.row(i))
                .map(|z| (argmax(&z) == dataset.labels[i] as usize) as usize)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok(hits as f64 / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_blobs, BlobSpec};
    use crate::evidential::confidence_score;
    use crate::evidential::dirichlet_from_logits;

    #[derive(Default)]
    struct Capture {
        rows: Vec<(Vec<f64>, Vec<bool>)>,
    }

    impl Recorder for Capture {
        fn record(&mut self, r: &EpochRecord<'_>) -> Result<(), String> {
            self.rows.push((r.confidence.to_vec(), r.correct.to_vec()));
            Ok(())
        }
    }

    fn blobs(n_per: usize, seed: u64) -> DatasetBundle {
        generate_blobs(&BlobSpec {
            class_count: 3,
            dim: 8,
            samples_per_class: n_per,
            center_spread: 3.0,
            within_std: 1.0,
            overlap_boost: 0.0,
            seed,
        })
        .unwrap()
    }

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 15,
            batch_size: 16,
            seed,
            layer_dims: vec![8, 16, 3],
            ..TrainConfig::default()
        }
    }

    fn param_bytes(m: &MlpClassifier) -> Vec<u8> {
        m.parameters().flat_map(|p| p.to_le_bytes()).collect()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = MlpClassifier::init(&[6, 5, 3], 42).unwrap();
        let b = MlpClassifier::init(&[6, 5, 3], 42).unwrap();
        let c = MlpClassifier::init(&[6, 5, 3], 43).unwrap();
        assert_eq!(param_bytes(&a), param_bytes(&b));
        assert_ne!(param_bytes(&a), param_bytes(&c));
        assert!(a.layers[0].weights.iter().all(|w| (-1.0..=1.0).contains(w)));
        assert!(a.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        assert!(matches!(MlpClassifier::init(&[4], 1), Err(ModelError::InvalidLayers(_))));
    }

    #[test]
    fn forward_special_cases() {
        let mut m = MlpClassifier::init(&[3, 4, 2], 1).unwrap();
        for l in &mut m.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        assert_eq!(m.forward(&[0.3, 0.2, 0.9]).unwrap(), vec![0.0, 0.0]);

        let mut id = MlpClassifier::init(&[3, 3], 1).unwrap();
        id.layers[0].weights = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(id.forward(&[0.5, -2.0, 7.0]).unwrap(), vec![0.5, -2.0, 7.0]);

        assert!(matches!(
            id.forward(&[1.0]),
            Err(ModelError::DimensionMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn forward_matches_straight_line_evaluation() {
        let m = MlpClassifier::init(&[5, 7, 4, 3], 9).unwrap();
        let x = [0.1, 0.9, 0.4, 0.0, 0.7];
        // Explicit triple loop with indices, no shared helpers.
        let mut h = x.to_vec();
        for (l, layer) in m.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim];
            for o in 0..layer.out_dim {
                let mut s = layer.biases[o];
                for i in 0..layer.in_dim {
                    s += layer.weights[o * layer.in_dim + i] * h[i];
                }
                next[o] = if l + 1 < m.layers.len() { s.max(0.0) } else { s };
            }
            h = next;
        }
        let z = m.forward(&x).unwrap();
        for (a, b) in z.iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let data = blobs(4, 2);
        let trainer = Trainer::new(small_config(3)).unwrap();
        let model = trainer.model.clone();
        let label = data.one_hot_row(1).to_vec();
        let x = data.row(1).to_vec();
        let mut grads = vec![0.0; model.parameter_count()];
        model
            .backprop(&x, |z| Ok(compound_loss_gradient(z, &label, 0.4, CeMode::Softmax)?), &mut grads)
            .unwrap();
        let loss_at = |m: &MlpClassifier| {
            compound_loss(&m.forward(&x).unwrap(), &label, 0.4, CeMode::Softmax)
                .unwrap()
                .total
        };
        let perturbed = |k: usize, d: f64| {
            let mut m = model.clone();
            let p = m
                .layers
                .iter_mut()
                .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
                .nth(k)
                .unwrap();
            *p += d;
            m
        };
        let h = 1e-6;
        for (k, g) in grads.iter().enumerate() {
            let fd = (loss_at(&perturbed(k, h)) - loss_at(&perturbed(k, -h))) / (2.0 * h);
            assert!((fd - g).abs() < 1e-5 * (1.0 + fd.abs()), "param {k}: {fd} vs {g}");
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_but_records() {
        let data = blobs(10, 4);
        let mut cfg = small_config(5);
        cfg.learning_rate = 0.0;
        let mut t = Trainer::new(cfg).unwrap();
        let before = param_bytes(&t.model);
        let mut cap = Capture::default();
        t.train_epoch(&data, 1, &mut cap).unwrap();
        t.train_epoch(&data, 2, &mut cap).unwrap();
        assert_eq!(param_bytes(&t.model), before);
        assert_eq!(cap.rows.len(), 2);
        assert_eq!(cap.rows[0].0.len(), 30);
        assert_eq!(cap.rows[0], cap.rows[1]);
    }

    #[test]
    fn single_sample_is_learned() {
        let data = DatasetBundle::new(vec![0.2, 0.8, 0.5], 3, vec![1], 2).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 1,
            learning_rate: 0.05,
            layer_dims: vec![3, 8, 2],
            seed: 1,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(cfg).unwrap();
        let mut cap = Capture::default();
        t.fit(&data, &mut cap, |_| {}).unwrap();
        let first_correct = cap.rows.iter().position(|(_, d)| d[0]).expect("never learned");
        assert!(cap.rows[first_correct..].iter().all(|(_, d)| d[0]));
        assert!(cap.rows.last().unwrap().1[0]);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = blobs(20, 6);
        let run = || {
            let mut t = Trainer::new(small_config(8)).unwrap();
            let mut cap = Capture::default();
            let s = t.fit(&data, &mut cap, |_| {}).unwrap();
            (param_bytes(&t.model), cap.rows, s)
        };
        let (pa, ra, sa) = run();
        let (pb, rb, sb) = run();
        assert_eq!(pa, pb);
        assert_eq!(ra, rb);
        assert_eq!(sa, sb);
    }

    #[test]
    fn loss_decreases_and_confidence_tracks_correctness() {
        for seed in 0..3 {
            let data = blobs(60, 10 + seed);
            let mut t = Trainer::new(TrainConfig {
                epochs: 20,
                ..small_config(seed)
            })
            .unwrap();
            let mut cap = Capture::default();
            let s = t.fit(&data, &mut cap, |_| {}).unwrap();
            assert!(s.last().unwrap().mean_loss < s[0].mean_loss, "seed {seed}");

            let (conf, correct) = cap.rows.last().unwrap();
            let mean = |want: bool| {
                let v: Vec<f64> = conf
                    .iter()
                    .zip(correct)
                    .filter(|(_, &d)| d == want)
                    .map(|(c, _)| *c)
                    .collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            if let (Some(right), Some(wrong)) = (mean(true), mean(false)) {
                assert!(right >= wrong, "seed {seed}: {right} < {wrong}");
            }
            // Recorded confidence equals ‖α‖ of the final model.
            let z = t.model.forward(data.row(0)).unwrap();
            assert_eq!(conf[0], confidence_score(&dirichlet_from_logits(&z).unwrap()));
        }
    }

    #[test]
    fn evaluate_cases() {
        // Output bias forces class 1 everywhere.
        let mut m = MlpClassifier::init(&[2, 2], 0).unwrap();
        m.layers[0].weights = vec![0.0; 4];
        m.layers[0].biases = vec![0.0, 1.0];
        let ones = DatasetBundle::new(vec![0.1, 0.2, 0.3, 0.4], 2, vec![1, 1], 2).unwrap();
        let zeros = DatasetBundle::new(vec![0.1, 0.2, 0.3, 0.4], 2, vec![0, 0], 2).unwrap();
        assert_eq!(evaluate(&m, &ones).unwrap(), 1.0);
        assert_eq!(evaluate(&m, &zeros).unwrap(), 0.0);
        let empty = DatasetBundle::new(vec![], 2, vec![], 2).unwrap();
        assert!(matches!(evaluate(&m, &empty), Err(ModelError::EmptySplit)));
    }

    #[test]
    fn untrained_model_is_near_chance() {
        let data = generate_blobs(&BlobSpec {
            class_count: 3,
            dim: 16,
            samples_per_class: 400,
            ..BlobSpec::default()
        })
        .unwrap();
        let accs: Vec<f64> = (0..3)
            .map(|s| {
                let m = MlpClassifier::init(&[16, 32, 3], 100 + s).unwrap();
                evaluate(&m, &data).unwrap()
            })
            .collect();
        let mean = accs.iter().sum::<f64>() / 3.0;
        assert!((mean - 1.0 / 3.0).abs() < 0.05, "{accs:?}");
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = TrainConfig {
            epochs: 7,
            learning_rate: 0.013,
            ce_mode: CeMode::None,
            layer_dims: vec![32, 10, 3],
            seed: u64::MAX,
            ..TrainConfig::default()
        };
        let back = TrainConfig::from_kv(KeyValues::parse(&cfg.to_kv()).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let text = cfg.to_kv();
        for key in [
            "epochs", "batch_size", "learning_rate", "momentum", "seed", "anneal_epochs",
            "lambda_max", "ce_mode", "layer_dims",
        ] {
            assert!(text.contains(&format!("{key}=")), "{key}");
        }
        assert!(TrainConfig::from_kv(KeyValues::parse("epochs=0").unwrap()).is_err());
        assert!(TrainConfig::from_kv(KeyValues::parse("momentum=1.0").unwrap()).is_err());
        assert!(TrainConfig::from_kv(KeyValues::parse("layer_dims=5").unwrap()).is_err());
        assert!(TrainConfig::from_kv(KeyValues::parse("ce_mode=logit").unwrap()).is_err());
    }
}
