use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layers::output_len;
use crate::error::{Error, Result};
use crate::topomap::{RASTER_COLS, RASTER_ROWS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
    pub padding: usize,
}

/// conv → [batchnorm] → [relu] → [maxpool]
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub batchnorm: bool,
    pub relu: bool,
    pub pool: Option<PoolSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

/// Architecture of one binary classifier.
///
/// The first block is applied with one shared weight set to every input
/// channel separately; its per-channel outputs are summed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input: InputShape,
    pub blocks: Vec<BlockSpec>,
    pub shared_first_block: bool,
    pub outputs: usize,
}

/// The three artifact classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CnnKind {
    /// Blinks and vertical eye movements.
    BlinkVertical,
    /// Horizontal eye movements and cardiac.
    HorizontalCardiac,
    /// Muscular and impedance/interference.
    MuscleImpedance,
}

impl CnnKind {
    pub const ALL: [CnnKind; 3] = [
        CnnKind::BlinkVertical,
        CnnKind::HorizontalCardiac,
        CnnKind::MuscleImpedance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CnnKind::BlinkVertical => "B_V",
            CnnKind::HorizontalCardiac => "H_E",
            CnnKind::MuscleImpedance => "E_I",
        }
    }
}

impl fmt::Display for CnnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CnnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CnnKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown category `{s}` (expected B_V, H_E or E_I)")))
    }
}

impl NetworkSpec {
    /// 3×3 stride-1 same-padded convolutions with batchnorm and ReLU; every
    /// block but the last ends in the given max pool.
    pub fn uniform(name: &str, input: InputShape, filters: &[usize], pool: PoolSpec) -> Self {
        let blocks = filters
            .iter()
            .enumerate()
            .map(|(i, &f)| BlockSpec {
                filters: f,
                kernel: 3,
                stride: 1,
                padding: 1,
                batchnorm: true,
                relu: true,
                pool: (i + 1 < filters.len()).then_some(pool),
            })
            .collect();
        Self {
            name: name.to_string(),
            input,
            blocks,
            shared_first_block: true,
            outputs: 2,
        }
    }

    pub fn filters(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.filters).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Config("network has no blocks".into()));
        }
        if !self.shared_first_block {
            return Err(Error::Config("first block must be channel-shared".into()));
        }
        if self.blocks.last().unwrap().pool.is_some() {
            return Err(Error::Config("last block must not pool".into()));
        }
        if self.outputs != 2 {
            return Err(Error::Config(format!("binary head expected, got {}", self.outputs)));
        }
        self.block_shapes().map(|_| ())
    }

    /// `(channels, rows, cols)` after the convolution (before pooling) and
    /// after the whole block, for every block.
    pub fn block_shapes(&self) -> Result<Vec<([usize; 3], [usize; 3])>> {
        let (mut h, mut w) = (self.input.rows, self.input.cols);
        let mut out = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            h = output_len(h, b.kernel, b.stride, b.padding)?;
            w = output_len(w, b.kernel, b.stride, b.padding)?;
            let conv = [b.filters, h, w];
            if let Some(p) = b.pool {
                h = output_len(h, p.window, p.stride, p.padding)?;
                w = output_len(w, p.window, p.stride, p.padding)?;
            }
            out.push((conv, [b.filters, h, w]));
        }
        Ok(out)
    }

    /// `(channels, rows, cols)` of the last block's feature maps.
    pub fn feature_shape(&self) -> Result<[usize; 3]> {
        Ok(self.block_shapes()?.last().map(|s| s.1).unwrap_or([0; 3]))
    }
}

/// The architecture used for each artifact category on 134×136 RGB input.
pub fn build_architecture(kind: CnnKind) -> NetworkSpec {
    let input = InputShape {
        rows: RASTER_ROWS,
        cols: RASTER_COLS,
        channels: 3,
    };
    let pool = |stride| PoolSpec {
        window: 2,
        stride,
        padding: 0,
    };
    match kind {
        CnnKind::BlinkVertical => NetworkSpec::uniform("B_V", input, &[8, 16, 32, 64], pool(4)),
        CnnKind::HorizontalCardiac => {
            NetworkSpec::uniform("H_E", input, &[8, 16, 32, 64, 128], pool(4))
        }
        CnnKind::MuscleImpedance => {
            NetworkSpec::uniform("E_I", input, &[8, 16, 32, 64, 128, 256, 256], pool(2))
        }
    }
}
