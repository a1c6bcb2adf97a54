use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::spec::NetworkSpec;
use super::train::TrainConfig;

/// Configuration echo stored in checkpoint headers as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub network: NetworkSpec,
    pub train: TrainConfig,
    /// Class labels in logit order.
    pub classes: Vec<String>,
    /// Learning rate of every scheduled epoch.
    pub lr_schedule: Vec<f64>,
}

impl CheckpointMeta {
    pub fn new(network: NetworkSpec, train: TrainConfig, classes: Vec<String>) -> Self {
        let lr_schedule = (1..=train.epochs).map(|e| train.learning_rate(e)).collect();
        Self {
            network,
            train,
            classes,
            lr_schedule,
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn decode(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format {
            offset: 0,
            message: format!("checkpoint metadata: {e}"),
        })
    }
}
