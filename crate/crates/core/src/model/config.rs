use serde::{Deserialize, Serialize};

use super::ModelError;

/// Order of operations inside one convolution unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BlockOrder {
    #[default]
    ConvBnRelu,
    ConvReluBn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    Jaccard,
    Dice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub levels: usize,
    pub base_features: usize,
    /// Full-resolution `(H, W)` before the shrink factor is applied.
    pub input_size: (usize, usize),
    pub shrink_factor: usize,
    pub block_order: BlockOrder,
    pub use_batchnorm: bool,
    pub use_residual: bool,
    pub loss: LossKind,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            levels: 5,
            base_features: 64,
            input_size: (128, 128),
            shrink_factor: 1,
            block_order: BlockOrder::ConvBnRelu,
            use_batchnorm: true,
            use_residual: true,
            loss: LossKind::Jaccard,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.levels < 2 {
            return fail(format!("levels must be >= 2, got {}", self.levels));
        }
        if self.base_features < 1 {
            return fail("base_features must be >= 1".into());
        }
        if self.shrink_factor < 1 {
            return fail("shrink_factor must be >= 1".into());
        }
        let (h, w) = self.input_size;
        if h == 0 || w == 0 {
            return fail(format!("input size {h}x{w} must be positive"));
        }
        if h % self.shrink_factor != 0 || w % self.shrink_factor != 0 {
            return fail(format!(
                "input size {h}x{w} is not divisible by shrink factor {}",
                self.shrink_factor
            ));
        }
        let div = 1usize << (self.levels - 1);
        let (nh, nw) = self.network_size();
        if nh % div != 0 || nw % div != 0 {
            return fail(format!(
                "network input {nh}x{nw} must be divisible by 2^(levels-1) = {div}"
            ));
        }
        Ok(())
    }

    /// Spatial size seen by the network after shrinking.
    pub fn network_size(&self) -> (usize, usize) {
        let sf = self.shrink_factor.max(1);
        (self.input_size.0 / sf, self.input_size.1 / sf)
    }

    /// Feature channels at encoder level `level` (0-based).
    pub fn channels(&self, level: usize) -> usize {
        self.base_features << level
    }

    /// Closed-form number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
        let bn = |c: usize| if self.use_batchnorm { 2 * c } else { 0 };
        let mut total = 0;
        let mut cin = 1;
        for level in 0..self.levels {
            let c = self.channels(level);
            total += conv(cin, c, 3) + bn(c) + conv(c, c, 3) + bn(c);
            cin = c;
        }
        for level in 0..self.levels - 1 {
            let c = self.channels(level);
            total += conv(2 * c, c, 2);
            total += conv(2 * c, c, 3) + bn(c) + conv(c, c, 3) + bn(c);
        }
        total + conv(self.base_features, 2, 1)
    }
}
