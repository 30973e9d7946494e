//! Point-cloud classifiers and segmenters: a modified PointNet with
//! neighbour message passing, PointNet++ (single-scale grouping), a
//! coordinate-free feature MLP, and classifiers on PCA-projected statistics.

mod config;
mod input;
mod net;
mod pca_stat;
mod tnet;
mod train;

pub use config::{Architecture, AuxChannel, CloudModelConfig, Task};
pub use input::{interpolation_weights, Batch, PreparedCloud};
pub use net::CloudNet;
pub use pca_stat::{LogisticRegression, PcaStatClassifier, SmallMlp, StatModel, StatVariant};
pub use tnet::{tnet_regularizer, tnet_regularizer_grad, AlignmentMatrix};
pub use train::{train, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::featurestore::LabeledCloud;
use crate::formats::Checkpoint;
use crate::nn::{ParamStore, Tape};

/// A network together with its f32 parameters.
#[derive(Debug, Clone)]
pub struct CloudModel {
    pub net: CloudNet,
    pub params: ParamStore<f32>,
}

fn argmax(row: &[f32]) -> u8 {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best as u8
}

impl CloudModel {
    pub fn new(config: &CloudModelConfig, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = CloudNet::build(config, &mut params, seed)?;
        Ok(Self { net, params })
    }

    pub fn config(&self) -> &CloudModelConfig {
        &self.net.config
    }

    pub fn prepare(&self, object: &LabeledCloud) -> Result<PreparedCloud> {
        PreparedCloud::new(&self.net.config, object)
    }

    /// Logits for one object: `classes` values, or `n × classes` row-major for segmentation.
    pub fn logits(&self, object: &PreparedCloud) -> Result<Vec<f32>> {
        let batch = Batch::new(&[object])?;
        let mut tape = Tape::new(&self.params);
        let out = self.net.logits(&mut tape, &batch)?;
        Ok(tape.value(out).to_vec())
    }

    /// The pooled descriptor before the head.
    pub fn global_feature(&self, object: &PreparedCloud) -> Result<Vec<f32>> {
        let batch = Batch::new(&[object])?;
        let mut tape = Tape::new(&self.params);
        let out = self.net.global_feature(&mut tape, &batch)?;
        Ok(tape.value(out).to_vec())
    }

    /// Predicted object label (classification) or point labels (segmentation).
    pub fn predict(&self, object: &PreparedCloud) -> Result<Vec<u8>> {
        let logits = self.logits(object)?;
        Ok(logits.chunks(self.net.config.classes).map(argmax).collect())
    }

    /// Predictions for many objects, spread over up to `threads` workers.
    pub fn predict_all(&self, objects: &[PreparedCloud], threads: usize) -> Result<Vec<Vec<u8>>> {
        let threads = threads.clamp(1, objects.len().max(1));
        if threads == 1 {
            return objects.iter().map(|o| self.predict(o)).collect();
        }
        let chunk = objects.len().div_ceil(threads);
        let parts: Vec<Result<Vec<Vec<u8>>>> = std::thread::scope(|s| {
            let handles: Vec<_> = objects
                .chunks(chunk)
                .map(|c| s.spawn(move || c.iter().map(|o| self.predict(o)).collect::<Result<Vec<_>>>()))
                .collect();
            handles.into_iter().map(|h| h.join().expect("prediction worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(objects.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::from_params(&self.params)
    }

    pub fn from_checkpoint(config: &CloudModelConfig, checkpoint: &Checkpoint) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        checkpoint.restore_params(&mut model.params)?;
        if model.params.iter().any(|p| !p.value.all_finite()) {
            return Err(Error::invalid_data("checkpoint holds non-finite parameters"));
        }
        Ok(model)
    }
}
