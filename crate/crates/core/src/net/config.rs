use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::o3::L_MAX;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Channel counts indexed `[parity][l]`, parity 0 even and 1 odd.
    pub channels: [[usize; L_MAX + 1]; 2],
    /// Message-passing steps.
    pub t1: usize,
    /// Local point-wise steps after message passing.
    pub t2: usize,
    /// Convolution channels `I`; input matrices are mixed into this many.
    pub conv_channels: usize,
    /// Attention heads `J`.
    pub heads: usize,
    /// Number of Morlet basis functions.
    pub n_basis: usize,
    /// Hidden width of the attention MLP.
    pub attn_hidden: usize,
    /// Hidden width of the point-wise MLPs; `None` means the total channel count.
    pub mlp_hidden: Option<usize>,
    /// Stability constant of the regularized norm.
    pub epsilon: f64,
    /// Variance floor of layer statistics and of batch estimates. Set to
    /// `epsilon^2`: spreads below that are under the resolution of the
    /// regularized norm, and a smaller floor makes layer statistics of tiny
    /// molecules blow up their inputs' curvature.
    pub variance_floor: f64,
    /// Weight of the previous running estimate in batch statistics.
    pub momentum: f64,
    /// Zero the last layer of the output MLP so each step starts as identity.
    pub zero_init_final: bool,
    /// Number of feature matrices per molecule (4, or 12 with energy-weighted densities).
    pub input_channels: usize,
    /// Morlet frequencies start at `gamma0 * ratio^k`.
    pub gamma0: f64,
    pub gamma_ratio: f64,
}

impl ModelConfig {
    /// Production-size network: 256 channels, four message-passing and four
    /// point-wise steps.
    pub fn full(input_channels: usize) -> Self {
        ModelConfig {
            channels: [[128, 48, 24, 12, 6], [24, 8, 4, 2, 0]],
            t1: 4,
            t2: 4,
            conv_channels: 8,
            heads: 8,
            n_basis: 16,
            attn_hidden: 16,
            mlp_hidden: None,
            epsilon: 0.1,
            variance_floor: 1e-2,
            momentum: 0.9,
            zero_init_final: true,
            input_channels,
            gamma0: 0.3,
            gamma_ratio: 1.08,
        }
    }

    /// Reduced network used for gradient checks and quick fits.
    pub fn small(input_channels: usize) -> Self {
        ModelConfig {
            channels: [[8, 4, 2, 1, 1], [2, 1, 1, 1, 0]],
            t1: 1,
            t2: 1,
            ..Self::full(input_channels)
        }
    }

    pub fn total_channels(&self) -> usize {
        self.channels.iter().flatten().sum()
    }

    pub fn hidden(&self) -> usize {
        self.mlp_hidden.unwrap_or_else(|| self.total_channels())
    }

    pub fn steps(&self) -> usize {
        self.t1 + self.t2
    }

    pub fn validate(&self) -> Result<()> {
        for l in 0..=2 {
            if self.channels[0][l] == 0 {
                return Err(Error::Config(format!(
                    "even-parity degree {l} needs at least one channel (it receives AO messages)"
                )));
            }
        }
        if self.conv_channels == 0 || self.heads == 0 || self.n_basis == 0 || self.attn_hidden == 0 {
            return Err(Error::Config("convolution, head and basis counts must be positive".into()));
        }
        if self.input_channels == 0 {
            return Err(Error::Config("at least one input matrix is required".into()));
        }
        if !(self.epsilon > 0.0) || !(self.variance_floor > 0.0) {
            return Err(Error::Config("epsilon and variance floor must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}
