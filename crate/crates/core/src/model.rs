//! Network parameters and the on-disk model format.
//!
//! A model is a JSON manifest plus one little-endian `f32` weight file. The
//! manifest lists every blob by name and shape in the fixed order given by
//! [`blob_layout`]; the loader rejects anything else. Weights stay in full
//! precision on disk and are quantized by [`NetworkModel::build`], so one
//! file serves every point of a precision sweep.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{fold_batchnorm, BatchNorm, GateParams, LstmDirectionParams, OutputLayerParams};
use crate::matrix::Matrix;
use crate::quant::PrecisionConfig;

pub const MANIFEST_FORMAT: &str = "qbilstm-model";
pub const MANIFEST_VERSION: u32 = 1;
pub const BLANK_INDEX: usize = 0;

/// Pixels per column (I), cells per direction (H), output classes (K).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Dims {
    pub fn new(input: usize, hidden: usize, classes: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || classes == 0 {
            return Err(Error::Model(format!(
                "dims must be positive, got I={input} H={hidden} K={classes}"
            )));
        }
        Ok(Self {
            input,
            hidden,
            classes,
        })
    }
}

/// Output symbols; index [`BLANK_INDEX`] is the CTC blank. Every other
/// symbol is a single character so ground truth can be checked per char.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.len() < 2 {
            return Err(Error::Model(
                "alphabet needs a blank and at least one symbol".into(),
            ));
        }
        for (i, s) in symbols.iter().enumerate().skip(1) {
            if s.chars().count() != 1 {
                return Err(Error::Model(format!(
                    "alphabet symbol {i} ({s:?}) must be a single character"
                )));
            }
            if symbols[1..i].contains(s) {
                return Err(Error::Model(format!("duplicate alphabet symbol {s:?}")));
            }
        }
        Ok(Self { symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank_index(&self) -> usize {
        BLANK_INDEX
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Index of a non-blank symbol.
    pub fn index_of(&self, c: char) -> Option<usize> {
        self.symbols
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, s)| s.starts_with(c))
            .map(|(i, _)| i)
    }
}

/// Full-precision parameters exactly as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawModel {
    pub dims: Dims,
    pub alphabet: Alphabet,
    pub forward: LstmDirectionParams,
    pub backward: LstmDirectionParams,
    pub fc_weights: Matrix,
    pub fc_bias: Vec<f64>,
    pub batchnorm: BatchNorm,
}

/// Quantized, inference-ready network: two LSTM directions plus the output
/// layer with batch-norm folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub dims: Dims,
    pub forward: LstmDirectionParams,
    pub backward: LstmDirectionParams,
    pub output: OutputLayerParams,
    pub alphabet: Alphabet,
}

impl NetworkModel {
    /// Assembles a model from already-prepared parts, checking shapes.
    pub fn new(
        forward: LstmDirectionParams,
        backward: LstmDirectionParams,
        output: OutputLayerParams,
        alphabet: Alphabet,
    ) -> Result<Self> {
        let dims = Dims::new(forward.input_size(), forward.hidden(), output.classes())?;
        if backward.input_size() != dims.input || backward.hidden() != dims.hidden {
            return Err(Error::Model(format!(
                "backward direction is {}x{}, forward is {}x{}",
                backward.hidden(),
                backward.input_size(),
                dims.hidden,
                dims.input
            )));
        }
        if output.features() != 2 * dims.hidden {
            return Err(Error::dimension(
                "output layer columns",
                2 * dims.hidden,
                output.features(),
            ));
        }
        if alphabet.len() != dims.classes {
            return Err(Error::dimension("alphabet size", dims.classes, alphabet.len()));
        }
        Ok(Self {
            dims,
            forward,
            backward,
            output,
            alphabet,
        })
    }

    /// Quantizes a raw model for `precision`: LSTM weights and biases onto
    /// the WQ grid (or binarized), batch-norm folded into the FC layer and
    /// the folded weights put on the output-layer weight grid.
    pub fn build(raw: &RawModel, precision: &PrecisionConfig) -> Result<Self> {
        let folded = fold_batchnorm(&raw.fc_weights, &raw.fc_bias, &raw.batchnorm)?;
        let output = folded.quantize_weights(&precision.fc_weight_spec()?)?;
        Self::new(
            raw.forward.quantized(precision)?,
            raw.backward.quantized(precision)?,
            output,
            raw.alphabet.clone(),
        )
    }

    /// Uses full-precision weights as-is, batch-norm folded but unquantized.
    pub fn unquantized(raw: &RawModel) -> Result<Self> {
        let output = fold_batchnorm(&raw.fc_weights, &raw.fc_bias, &raw.batchnorm)?;
        Self::new(
            raw.forward.clone(),
            raw.backward.clone(),
            output,
            raw.alphabet.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dims: Dims,
    pub alphabet: Vec<String>,
    /// Weight file, relative to the manifest.
    pub weights: String,
    pub blobs: Vec<BlobEntry>,
}

const GATE_NAMES: [&str; 4] = ["I", "i", "f", "o"];

/// Canonical blob order and shapes for `dims`.
pub fn blob_layout(dims: &Dims) -> Vec<BlobEntry> {
    let (i, h, k) = (dims.input, dims.hidden, dims.classes);
    let mut blobs = Vec::new();
    let mut push = |name: String, shape: Vec<usize>| blobs.push(BlobEntry { name, shape });
    for dir in ["forward", "backward"] {
        for g in GATE_NAMES {
            push(format!("{dir}.W_{g}"), vec![h, i]);
        }
        for g in GATE_NAMES {
            push(format!("{dir}.R_{g}"), vec![h, h]);
        }
        for g in GATE_NAMES {
            push(format!("{dir}.b_{g}"), vec![h]);
        }
    }
    push("fc.weight".into(), vec![k, 2 * h]);
    push("fc.bias".into(), vec![k]);
    for p in ["gamma", "beta", "mean", "var"] {
        push(format!("bn.{p}"), vec![2 * h]);
    }
    push("bn.eps".into(), vec![1]);
    blobs
}

impl RawModel {
    pub fn save(&self, dir: impl AsRef<Path>, weights_file: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            dims: self.dims,
            alphabet: self.alphabet.symbols().to_vec(),
            weights: weights_file.into(),
            blobs: blob_layout(&self.dims),
        };
        let mut bytes = Vec::new();
        for blob in self.blobs() {
            for v in blob {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let weights_path = dir.join(weights_file);
        fs::write(&weights_path, bytes).map_err(|e| Error::io(&weights_path, e))?;
        let manifest_path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Model(e.to_string()))?;
        fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
        Ok(manifest_path)
    }

    /// Loads from a manifest path, or from a directory holding `manifest.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut manifest_path = path.as_ref().to_path_buf();
        if manifest_path.is_dir() {
            manifest_path.push("manifest.json");
        }
        let text =
            fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Model(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
            return Err(Error::Model(format!(
                "{}: unsupported format {} v{}",
                manifest_path.display(),
                manifest.format,
                manifest.version
            )));
        }
        let dims = Dims::new(
            manifest.dims.input,
            manifest.dims.hidden,
            manifest.dims.classes,
        )?;
        let expected = blob_layout(&dims);
        if manifest.blobs != expected {
            let first_bad = manifest
                .blobs
                .iter()
                .zip(&expected)
                .position(|(a, b)| a != b)
                .unwrap_or(manifest.blobs.len().min(expected.len()));
            return Err(Error::Model(format!(
                "{}: blob list does not match the layout for I={} H={} K={} (first difference at entry {first_bad})",
                manifest_path.display(),
                dims.input,
                dims.hidden,
                dims.classes
            )));
        }
        let alphabet = Alphabet::new(manifest.alphabet)?;
        if alphabet.len() != dims.classes {
            return Err(Error::dimension("alphabet size", dims.classes, alphabet.len()));
        }

        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let weights_path = base.join(&manifest.weights);
        let bytes = fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;
        let total: usize = expected.iter().map(|b| b.shape.iter().product::<usize>()).sum();
        if bytes.len() != total * 4 {
            return Err(Error::Model(format!(
                "{}: expected {} bytes of f32 weights, found {}",
                weights_path.display(),
                total * 4,
                bytes.len()
            )));
        }
        let mut values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };

        let (i, h, k) = (dims.input, dims.hidden, dims.classes);
        let mut direction = || -> Result<LstmDirectionParams> {
            let w: Vec<Vec<f64>> = (0..4).map(|_| take(h * i)).collect();
            let r: Vec<Vec<f64>> = (0..4).map(|_| take(h * h)).collect();
            let b: Vec<Vec<f64>> = (0..4).map(|_| take(h)).collect();
            let gate = |g: usize| -> Result<GateParams> {
                GateParams::new(
                    Matrix::from_vec(h, i, w[g].clone())?,
                    Matrix::from_vec(h, h, r[g].clone())?,
                    b[g].clone(),
                )
            };
            LstmDirectionParams::new(gate(0)?, gate(1)?, gate(2)?, gate(3)?)
        };
        let forward = direction()?;
        let backward = direction()?;
        let fc_weights = Matrix::from_vec(k, 2 * h, take(k * 2 * h))?;
        let fc_bias = take(k);
        let gamma = take(2 * h);
        let beta = take(2 * h);
        let mean = take(2 * h);
        let var = take(2 * h);
        let eps = take(1)[0];
        let batchnorm = BatchNorm::new(gamma, beta, mean, var, eps)?;

        Ok(Self {
            dims,
            alphabet,
            forward,
            backward,
            fc_weights,
            fc_bias,
            batchnorm,
        })
    }

    /// Blobs in on-disk order.
    fn blobs(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for dir in [&self.forward, &self.backward] {
            let gates = dir.gates();
            out.extend(gates.iter().map(|g| g.input.as_slice().to_vec()));
            out.extend(gates.iter().map(|g| g.recurrent.as_slice().to_vec()));
            out.extend(gates.iter().map(|g| g.bias.clone()));
        }
        out.push(self.fc_weights.as_slice().to_vec());
        out.push(self.fc_bias.clone());
        let bn = &self.batchnorm;
        out.extend([
            bn.gamma.clone(),
            bn.beta.clone(),
            bn.mean.clone(),
            bn.var.clone(),
            vec![bn.eps],
        ]);
        out
    }
}
