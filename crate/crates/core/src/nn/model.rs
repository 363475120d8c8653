use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::NetworkSpec;
use super::layers::softmax;
use super::{Mode, Network, Tensor};
use crate::error::{Error, Result};
use crate::topomap::{RgbImage, RASTER_COLS, RASTER_ROWS};

pub const MODEL_MAGIC: &[u8; 13] = b"ICASCOPE-MDL1";

/// Class index of the artifact ("positive") output.
pub const POSITIVE: usize = 0;
/// Class index of the "negative" output.
pub const NEGATIVE: usize = 1;

/// Image geometry and color mapping a model was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterConvention {
    pub rows: usize,
    pub cols: usize,
    pub orientation: String,
    pub palette: String,
}

impl Default for RasterConvention {
    fn default() -> Self {
        Self {
            rows: RASTER_ROWS,
            cols: RASTER_COLS,
            orientation: "nose-up/left-ear-left".into(),
            palette: "parula64".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub class_name: String,
    pub seed: u64,
    pub epochs_trained: usize,
    pub raster: RasterConvention,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub positive: bool,
    /// Softmax probability of the positive class.
    pub score: f64,
}

impl Prediction {
    /// Positive only when the score strictly exceeds `threshold`, so equal
    /// logits count as negative.
    pub fn from_logits(logits: [f64; 2], threshold: f64) -> Self {
        let m = logits[0].max(logits[1]);
        let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
        let score = e[POSITIVE] / (e[0] + e[1]);
        Self {
            positive: score > threshold,
            score,
        }
    }
}

/// A trained binary classifier plus what is needed to reuse it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network<f32>,
    pub metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    metadata: ModelMetadata,
    params: Vec<Vec<usize>>,
    buffers: Vec<Vec<usize>>,
}

/// Converts RGB rasters to a `[n, 3, rows, cols]` tensor scaled to [0, 1].
pub fn images_to_tensor(images: &[&RgbImage]) -> Result<Tensor<f32>> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let (rows, cols) = (first.rows, first.cols);
    let plane = rows * cols;
    let mut data = vec![0f32; images.len() * 3 * plane];
    for (i, img) in images.iter().enumerate() {
        if img.rows != rows || img.cols != cols || img.data.len() != plane * 3 {
            return Err(Error::Shape(format!(
                "image {i} is {}×{}, batch is {rows}×{cols}",
                img.rows, img.cols
            )));
        }
        let out = &mut data[i * 3 * plane..(i + 1) * 3 * plane];
        for (p, px) in img.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = px[c] as f32 / 255.0;
            }
        }
    }
    Tensor::from_vec(&[images.len(), 3, rows, cols], data)
}

impl TrainedModel {
    pub fn spec(&self) -> &NetworkSpec {
        self.network.spec()
    }

    pub fn class_name(&self) -> &str {
        &self.metadata.class_name
    }

    /// Positive-vs-negative logits for a batch, inference mode.
    pub fn logits(&self, images: &[&RgbImage]) -> Result<Vec<[f64; 2]>> {
        let x = images_to_tensor(images)?;
        let (logits, _) = self.network.forward(&x, Mode::Infer)?;
        Ok(logits
            .data()
            .chunks_exact(2)
            .map(|l| [l[0] as f64, l[1] as f64])
            .collect())
    }

    pub fn predict(&self, image: &RgbImage) -> Result<Prediction> {
        Ok(self.predict_batch(&[image], 0.5)?[0])
    }

    /// Batched prediction with a custom decision threshold on the positive
    /// probability.
    pub fn predict_batch(&self, images: &[&RgbImage], threshold: f64) -> Result<Vec<Prediction>> {
        const CHUNK: usize = 64;
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(CHUNK) {
            out.extend(
                self.logits(chunk)?
                    .into_iter()
                    .map(|l| Prediction::from_logits(l, threshold)),
            );
        }
        Ok(out)
    }

    /// Class probabilities `[positive, negative]` for each image.
    pub fn probabilities(&self, images: &[&RgbImage]) -> Result<Vec<[f64; 2]>> {
        let x = images_to_tensor(images)?;
        let (logits, _) = self.network.forward(&x, Mode::Infer)?;
        Ok(softmax(&logits)
            .data()
            .chunks_exact(2)
            .map(|p| [p[0] as f64, p[1] as f64])
            .collect())
    }

    fn tensors(&self) -> impl Iterator<Item = &Tensor<f32>> {
        self.network
            .params()
            .into_iter()
            .chain(self.network.buffers())
    }

    /// CRC-32 of every parameter and running statistic as little-endian
    /// f32, in file order.
    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for t in self.tensors() {
            for v in t.data() {
                h.update(&v.to_le_bytes());
            }
        }
        h.finalize()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            spec: self.spec().clone(),
            metadata: self.metadata.clone(),
            params: self.network.params().iter().map(|t| t.shape().to_vec()).collect(),
            buffers: self.network.buffers().iter().map(|t| t.shape().to_vec()).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        if bytes.len() < MODEL_MAGIC.len() + 8 || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
            return Err(bad("wrong magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(bad("checksum mismatch"));
        }
        let mut rest = &body[MODEL_MAGIC.len()..];
        let mut len = [0u8; 4];
        rest.read_exact(&mut len).map_err(|_| bad("truncated header"))?;
        let len = u32::from_le_bytes(len) as usize;
        if rest.len() < len {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&rest[..len]).map_err(|e| bad(&format!("header: {e}")))?;
        rest = &rest[len..];

        let mut network = Network::<f32>::new(&header.spec, 0)?;
        let expect = |ts: Vec<&Tensor<f32>>| ts.iter().map(|t| t.shape().to_vec()).collect::<Vec<_>>();
        if expect(network.params()) != header.params || expect(network.buffers()) != header.buffers {
            return Err(bad("tensor shapes disagree with the architecture"));
        }
        let total: usize = network.params().iter().chain(network.buffers().iter()).map(|t| t.len()).sum();
        if rest.len() != total * 4 {
            return Err(bad(&format!("expected {} parameter bytes, found {}", total * 4, rest.len())));
        }
        let mut values = rest
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        for t in network.params_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = values.next().unwrap());
        }
        for t in network.buffers_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = values.next().unwrap());
        }
        Ok(Self {
            network,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
