//! Per-run manifest written next to every trained model.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::protocol::RunMetrics;
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::rng::digest_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: u64,
    /// Rendered configuration; the digest is recomputed from this text.
    pub config: String,
    pub config_digest: String,
    pub split: String,
    /// Epochs for cloud models, optimizer steps for rollout models.
    pub budget: usize,
    pub schedule: String,
    /// Each seed draws its own train/test split.
    pub resplit_per_seed: bool,
    pub metrics: Option<RunMetrics>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn start(config: &KvFile, seed: u64, split: &str, budget: usize, schedule: &str) -> Self {
        let config_digest = config.digest();
        let run_id = digest_hex(format!("{config_digest}/{seed}/{split}").as_bytes())[..16].to_string();
        Self {
            run_id,
            seed,
            config: config.render(),
            config_digest,
            split: split.to_string(),
            budget,
            schedule: schedule.to_string(),
            resplit_per_seed: true,
            metrics: None,
            started_unix: now(),
            finished_unix: None,
        }
    }

    pub fn finish(&mut self, metrics: RunMetrics) {
        self.metrics = Some(metrics);
        self.finished_unix = Some(now());
    }

    pub fn configuration(&self) -> Result<KvFile> {
        KvFile::parse(&self.config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.configuration()?.digest() != self.config_digest {
            return Err(Error::invalid_data("manifest digest does not match its configuration"));
        }
        if self.metrics.is_some() != self.finished_unix.is_some() {
            return Err(Error::invalid_data("manifest metrics and completion time disagree"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid_data(format!("manifest: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::invalid_data(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_digest() {
        let mut kv = KvFile::new();
        kv.set("train.epochs", 20);
        let mut m = RunManifest::start(&kv, 3, "stratified 80/20", 20, "cosine-weight-decay");
        assert!(m.validate().is_ok());
        m.finish(RunMetrics { f1: Some(0.5), ..Default::default() });
        let back = RunManifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.run_id, RunManifest::start(&kv, 3, "stratified 80/20", 20, "x").run_id);

        let mut tampered = m.clone();
        tampered.config = tampered.config.replace("20", "21");
        assert!(tampered.validate().is_err());
        tampered = m;
        tampered.finished_unix = None;
        assert!(tampered.validate().is_err());
    }
}
