//! Collaborative autoencoders: k independently initialized autoencoders
//! whose per-sample losses are summed, trained end to end under a chosen
//! aggregation scheme, with the summed loss doubling as the anomaly score.

use serde::{Deserialize, Serialize};

use crate::aggregation::{Aggregator, LossVector, WeightVector};
use crate::autoencoder::{
    adam_step, autoencoder_dims, backward_weighted, default_activations, default_hidden,
    per_sample_recon_loss, AdamState, ForwardCache, MlpParams,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

/// `k` autoencoders with identical layer dimensions and distinct
/// initializations.
#[derive(Debug, Clone, PartialEq)]
pub struct CollabModel {
    autoencoders: Vec<MlpParams>,
}

impl CollabModel {
    pub fn init(dims: &[usize], k: usize, rng: &mut Rng) -> Result<Self> {
        if k == 0 {
            return Err(Error::Param("need at least one autoencoder".into()));
        }
        let acts = default_activations(dims.len() - 1);
        let autoencoders = (0..k)
            .map(|_| MlpParams::init(dims, &acts, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(CollabModel { autoencoders })
    }

    pub fn from_parts(autoencoders: Vec<MlpParams>) -> Result<Self> {
        if autoencoders.is_empty() {
            return Err(Error::Param("need at least one autoencoder".into()));
        }
        let dims = autoencoders[0].dims();
        if autoencoders.iter().any(|ae| ae.dims() != dims) {
            return Err(Error::Shape(
                "all autoencoders must share layer dimensions".into(),
            ));
        }
        Ok(CollabModel { autoencoders })
    }

    pub fn k(&self) -> usize {
        self.autoencoders.len()
    }

    pub fn autoencoders(&self) -> &[MlpParams] {
        &self.autoencoders
    }

    pub fn input_dim(&self) -> usize {
        self.autoencoders[0].input_dim()
    }
}

/// Training hyperparameters. `hidden` overrides the default encoder
/// widths (the decoder mirrors them); labels never influence training —
/// `trace_weights` only records per-class weight means for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub aggregator: Aggregator,
    pub lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub k: usize,
    pub seed: u64,
    pub trace_weights: bool,
    pub hidden: Option<Vec<usize>>,
}

impl TrainConfig {
    pub fn new(aggregator: Aggregator) -> Self {
        TrainConfig {
            aggregator,
            lr: 0.001,
            max_epochs: 100,
            batch_size: 128,
            k: 2,
            seed: 0,
            trace_weights: false,
            hidden: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Param(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Param("max_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch_size must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Param("k must be >= 1".into()));
        }
        if let Some(h) = &self.hidden {
            if h.is_empty() || h.contains(&0) {
                return Err(Error::Param("hidden widths must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One record per completed epoch when tracing is enabled. Class means
/// are per-batch means averaged over the batches that contained the
/// class; `aggregate_loss` is the epoch mean of the batch objectives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub mean_weight_normal: Option<f64>,
    pub mean_weight_anomalous: Option<f64>,
    pub aggregate_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightTrace {
    pub records: Vec<TraceRecord>,
}

/// Per-sample summed reconstruction loss over all k autoencoders; one
/// forward pass per autoencoder.
pub fn collab_loss(model: &CollabModel, batch: &Matrix) -> Result<(LossVector, Vec<ForwardCache>)> {
    let mut caches = Vec::with_capacity(model.k());
    let mut total: Option<Vec<f64>> = None;
    for ae in &model.autoencoders {
        let (losses, cache) = per_sample_recon_loss(ae, batch)?;
        match &mut total {
            None => total = Some(losses.values().to_vec()),
            Some(acc) => {
                for (a, l) in acc.iter_mut().zip(losses.values()) {
                    *a += l;
                }
            }
        }
        caches.push(cache);
    }
    let losses = LossVector::new(total.expect("k >= 1"))?;
    Ok((losses, caches))
}

/// Anomaly scores for a test set: larger means more anomalous.
pub fn score(model: &CollabModel, testset: &Dataset) -> Result<Vec<f64>> {
    if testset.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "test set has {} features, model expects {}",
            testset.dim(),
            model.input_dim()
        )));
    }
    let (losses, _) = collab_loss(model, &testset.features)?;
    Ok(losses.values().to_vec())
}

/// Train collaborative autoencoders on `trainset` (labels, if any, are
/// ignored except for tracing). Deterministic given the config seed.
pub fn train(trainset: &Dataset, config: &TrainConfig) -> Result<(CollabModel, WeightTrace)> {
    config.validate()?;
    if trainset.is_empty() {
        return Err(Error::Shape("training set is empty".into()));
    }
    if config.trace_weights && trainset.labels.is_none() {
        return Err(Error::UndefinedMetric(
            "weight tracing needs a labeled dataset".into(),
        ));
    }
    let agg = config.aggregator;
    train_with_weighter(trainset, config, |losses| agg.gradient_weights(losses))
}

/// The training loop, generic over how per-sample weights are derived
/// from the batch losses. `train` passes the aggregator's closed-form
/// weights; tests substitute other weighters to probe the loop itself.
fn train_with_weighter(
    trainset: &Dataset,
    config: &TrainConfig,
    weighter: impl Fn(&LossVector) -> Result<WeightVector>,
) -> Result<(CollabModel, WeightTrace)> {
    let agg = config.aggregator;
    let d = trainset.dim();
    let hidden = config
        .hidden
        .clone()
        .unwrap_or_else(|| default_hidden(d));
    let dims = autoencoder_dims(d, &hidden);

    let mut rng = Rng::new(config.seed);
    let mut model = CollabModel::init(&dims, config.k, &mut rng)?;
    let mut adam: Vec<AdamState> = model.autoencoders.iter().map(AdamState::new).collect();

    let n = trainset.len();
    let batch_size = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = WeightTrace::default();

    for epoch in 0..config.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_stats = EpochStats::default();

        for (batch_idx, chunk) in order.chunks(batch_size).enumerate() {
            let batch = trainset.features.select_rows(chunk)?;
            let diverged = |e: Error| match e {
                Error::NonFinite(_) | Error::Domain(_) => Error::Diverged {
                    epoch,
                    batch: batch_idx,
                },
                other => other,
            };
            let (losses, caches) = collab_loss(&model, &batch).map_err(diverged)?;
            let weights = weighter(&losses).map_err(diverged)?;

            for (ae, (cache, state)) in model
                .autoencoders
                .iter_mut()
                .zip(caches.iter().zip(adam.iter_mut()))
            {
                let grads = backward_weighted(ae, cache, &batch, &weights)?;
                adam_step(ae, &grads, state, config.lr).map_err(diverged)?;
            }

            if config.trace_weights {
                let value = agg.aggregate(&losses).map_err(diverged)?;
                epoch_stats.absorb(chunk, trainset, &weights, value);
            }
        }

        if config.trace_weights {
            trace.records.push(epoch_stats.into_record(epoch));
        }
    }
    Ok((model, trace))
}

#[derive(Default)]
struct EpochStats {
    normal_batch_means: Vec<f64>,
    anomalous_batch_means: Vec<f64>,
    aggregate_values: Vec<f64>,
}

impl EpochStats {
    fn absorb(&mut self, chunk: &[usize], trainset: &Dataset, weights: &WeightVector, value: f64) {
        let labels = trainset.labels.as_ref().expect("tracing requires labels");
        let (mut n_sum, mut n_cnt, mut a_sum, mut a_cnt) = (0.0, 0usize, 0.0, 0usize);
        for (w, &row) in weights.values().iter().zip(chunk) {
            if labels[row] == 1 {
                a_sum += w;
                a_cnt += 1;
            } else {
                n_sum += w;
                n_cnt += 1;
            }
        }
        if n_cnt > 0 {
            self.normal_batch_means.push(n_sum / n_cnt as f64);
        }
        if a_cnt > 0 {
            self.anomalous_batch_means.push(a_sum / a_cnt as f64);
        }
        self.aggregate_values.push(value);
    }

    fn into_record(self, epoch: usize) -> TraceRecord {
        let mean = |xs: &[f64]| {
            if xs.is_empty() {
                None
            } else {
                Some(xs.iter().sum::<f64>() / xs.len() as f64)
            }
        };
        TraceRecord {
            epoch,
            mean_weight_normal: mean(&self.normal_batch_means),
            mean_weight_anomalous: mean(&self.anomalous_batch_means),
            aggregate_loss: self.aggregate_values.iter().sum::<f64>()
                / self.aggregate_values.len().max(1) as f64,
        }
    }
}
