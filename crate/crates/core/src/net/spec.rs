use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DitherRanges;

/// One point-abstraction layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// Input point count.
    pub na: usize,
    /// Output point count (DFPS centroids).
    pub nb: usize,
    /// Ball radius in millimeters.
    pub radius: f64,
    /// Neighbors per centroid.
    pub k: usize,
    /// Learned input feature channels.
    pub f_in: usize,
    /// Output channels.
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    /// Fully connected widths after global pooling. The last one is the
    /// embedding.
    pub head: Vec<usize>,
    /// Classifier outputs; set from the training labels.
    pub n_classes: usize,
    pub dropout: f64,
    /// Feed normals and eigenvalues to the first layer.
    pub use_normals: bool,
    pub train_sampling: DitherRanges,
    /// Extra random rotation (degrees, each Euler angle) applied about the
    /// nose tip to every training cloud at every step. Zero disables it.
    #[serde(default)]
    pub pose_jitter_deg: f64,
    pub eval_radius: f64,
    pub eval_exponent: f64,
    /// Neighbors used for normal estimation.
    pub normal_k: usize,
}

/// Width of the default embedding.
pub const EMBEDDING_DIM: usize = 256;

/// Attribute channels carried into the first layer (normal and eigenvalue).
pub const ATTRIBUTE_CHANNELS: usize = 4;

impl Default for NetworkSpec {
    fn default() -> Self {
        let layer = |na, nb, radius, k, f_in, m| LayerSpec {
            na,
            nb,
            radius,
            k,
            f_in,
            m,
        };
        Self {
            layers: vec![
                layer(24576, 4096, 4.0, 24, 0, 32),
                layer(4096, 1024, 8.0, 32, 32, 64),
                layer(1024, 256, 16.0, 48, 64, 128),
                layer(256, 64, 32.0, 64, 128, 256),
            ],
            head: vec![512, EMBEDDING_DIM],
            n_classes: 0,
            dropout: 0.5,
            use_normals: true,
            train_sampling: DitherRanges::default(),
            pose_jitter_deg: 0.0,
            eval_radius: 65.0,
            eval_exponent: 0.0,
            normal_k: 16,
        }
    }
}

impl NetworkSpec {
    /// A scaled-down network for desk-scale experiments: 2048 input points,
    /// 128-d embedding.
    pub fn micro() -> Self {
        let layer = |na, nb, radius, k, f_in, m| LayerSpec {
            na,
            nb,
            radius,
            k,
            f_in,
            m,
        };
        Self {
            layers: vec![
                layer(2048, 512, 8.0, 8, 0, 16),
                layer(512, 128, 16.0, 12, 16, 32),
                layer(128, 32, 32.0, 16, 32, 64),
                layer(32, 8, 64.0, 24, 64, 128),
            ],
            head: vec![256, 128],
            ..Self::default()
        }
    }

    pub fn with_classes(mut self, n_classes: usize) -> Self {
        self.n_classes = n_classes;
        self
    }

    pub fn input_points(&self) -> usize {
        self.layers.first().map_or(0, |l| l.na)
    }

    pub fn embedding_dim(&self) -> usize {
        self.head.last().copied().unwrap_or(0)
    }

    /// Channels entering the shared MLP of layer `i`.
    pub fn layer_input_channels(&self, i: usize) -> usize {
        let extra = if i == 0 && self.use_normals {
            ATTRIBUTE_CHANNELS
        } else {
            0
        };
        3 + extra + self.layers[i].f_in
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.nb == 0 || l.nb > l.na {
                return Err(Error::invalid(format!("layer {i}: need 1 <= NB <= NA")));
            }
            if !(l.radius > 0.0) || !l.radius.is_finite() {
                return Err(Error::invalid(format!("layer {i}: radius must be positive")));
            }
            if l.k == 0 || l.m < 2 {
                return Err(Error::invalid(format!("layer {i}: need k >= 1 and m >= 2")));
            }
            if i == 0 && l.f_in != 0 {
                return Err(Error::invalid("first layer has no learned input features"));
            }
            if i > 0 {
                let prev = &self.layers[i - 1];
                if prev.nb != l.na {
                    return Err(Error::invalid(format!("layer {i}: NA must equal previous NB")));
                }
                if prev.m != l.f_in {
                    return Err(Error::invalid(format!("layer {i}: F must equal previous m")));
                }
            }
        }
        if self.head.is_empty() || self.head.contains(&0) {
            return Err(Error::invalid("head widths must be nonempty and positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        if !(self.eval_radius > 0.0) || !self.eval_exponent.is_finite() {
            return Err(Error::invalid("eval sampling radius must be positive"));
        }
        let d = &self.train_sampling;
        if !(d.radius.0 > 0.0 && d.radius.0 < d.radius.1 && d.exponent.0 < d.exponent.1) {
            return Err(Error::invalid("train sampling ranges must be increasing and positive"));
        }
        if !(0.0..90.0).contains(&self.pose_jitter_deg) {
            return Err(Error::invalid("pose jitter must lie in [0, 90) degrees"));
        }
        if self.normal_k < 3 {
            return Err(Error::invalid("normal estimation needs at least 3 neighbors"));
        }
        Ok(())
    }
}
