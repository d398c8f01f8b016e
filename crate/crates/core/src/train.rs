//! Deterministic mini-batch training and the trained-model container.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureScaler, Features, WindowedDataset, N_FEATURES};
use crate::error::{Error, Result};
use crate::gru::{self, GruParams};
use crate::optim::{AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub finetune_lr_multiplier: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            hidden_size: 32,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            finetune_lr_multiplier: 0.5,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.hidden_size == 0 {
            return bad("hidden_size must be at least 1");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0) {
            return bad("adam_beta1 must lie in (0, 1)");
        }
        if !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("adam_beta2 must lie in (0, 1)");
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be > 0");
        }
        if !(self.finetune_lr_multiplier.is_finite() && self.finetune_lr_multiplier > 0.0) {
            return bad("finetune_lr_multiplier must be > 0");
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return bad("clip_norm must be > 0 when set");
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    /// Copy used for fine-tuning: learning rate scaled by the multiplier.
    pub fn for_finetune(&self) -> Self {
        Self {
            learning_rate: self.learning_rate * self.finetune_lr_multiplier,
            ..*self
        }
    }
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
}

impl TrainHistory {
    pub fn first(&self) -> Option<f64> {
        self.epoch_loss.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.epoch_loss.last().copied()
    }
}

const MODEL_FORMAT: &str = "epicast-gru";
const MODEL_VERSION: u32 = 1;

/// A trained predictor: weights, the scaler its inputs were built with,
/// its look-back, and where its weights came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruModel {
    pub params: GruParams,
    pub scaler: FeatureScaler,
    pub lookback: usize,
    pub provenance: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: GruModel,
}

impl GruModel {
    pub fn new(
        params: GruParams,
        scaler: FeatureScaler,
        lookback: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if lookback == 0 {
            return Err(Error::InvalidConfig("look-back must be at least 1".into()));
        }
        params.validate()?;
        if params.input_size != N_FEATURES {
            return Err(Error::ShapeMismatch(format!(
                "input size {} differs from {N_FEATURES}",
                params.input_size
            )));
        }
        Ok(Self {
            params,
            scaler,
            lookback,
            provenance: provenance.into(),
        })
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    /// One-step prediction on a scaled window of exactly `lookback` rows.
    pub fn predict_scaled(&self, window: &[Features]) -> Result<Features> {
        gru::forward_window_checked(window, self.lookback, &self.params)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        let m = file.model;
        let scaler = FeatureScaler::new(m.scaler.min(), m.scaler.max())?;
        Self::new(m.params, scaler, m.lookback, m.provenance)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Trains on a scaled dataset, starting from `initial` or a fresh
/// initialization drawn from `config.seed`.
///
/// Batches come from a seeded shuffle each epoch, the last batch may be
/// short, and gradients within a batch are summed in sample order.
pub fn train(
    dataset: &WindowedDataset,
    config: &TrainConfig,
    initial: Option<GruParams>,
) -> Result<(GruModel, TrainHistory)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scaler = *dataset
        .scaler()
        .ok_or_else(|| Error::InvalidConfig("training data must be scaled before training".into()))?;

    let mut params = match initial {
        Some(p) => {
            p.validate()?;
            p
        }
        None => gru::init_params(N_FEATURES, config.hidden_size, config.seed)?,
    };
    let adam = config.adam();
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let inputs = dataset.inputs();
    let targets = dataset.targets();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut grads = params.zeros_like();
    let mut history = TrainHistory::default();
    let mut step = 0u64;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.scale_in_place(0.0);
            for &i in batch {
                epoch_loss += gru::accumulate_gradients(&inputs[i], &targets[i], &params, &mut grads);
            }
            grads.scale_in_place(1.0 / batch.len() as f64);
            if let Some(limit) = config.clip_norm {
                let norm = grads.norm();
                if norm > limit {
                    grads.scale_in_place(limit / norm);
                }
            }
            step += 1;
            state.update(&mut params, &grads, &adam, step);
        }
        let mean = epoch_loss / dataset.len() as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(Error::DivergedLoss { epoch, loss: mean });
        }
        history.epoch_loss.push(mean);
    }
    log::debug!(
        "trained {} epochs on {} samples, loss {:.3e} -> {:.3e}",
        config.epochs,
        dataset.len(),
        history.first().unwrap_or(f64::NAN),
        history.last().unwrap_or(f64::NAN)
    );

    let model = GruModel::new(params, scaler, dataset.lookback(), "unnamed")?;
    Ok((model, history))
}

/// Per-sample mean loss of `params` over a dataset, without updating.
pub fn evaluate_loss(dataset: &WindowedDataset, params: &GruParams) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (w, t) in dataset.inputs().iter().zip(dataset.targets()) {
        total += gru::loss_mse(&gru::forward_window(w, params)?, t);
    }
    Ok(total / dataset.len() as f64)
}
