//! A small hand-wired model and matching synthetic text lines.
//!
//! Each cell of both directions tracks one pixel row; the output layer
//! correlates the resulting sign pattern against one template per symbol.
//! At 8 bits and above the model transcribes its lines exactly, and it
//! degrades as precision drops, which is what sweeps need to show.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::TextLineImage;
use crate::lstm::{BatchNorm, GateParams, LstmDirectionParams};
use crate::matrix::Matrix;
use crate::model::{Alphabet, Dims, RawModel};

pub const TOY_HEIGHT: usize = 4;
const INK: u8 = 230;
const SYMBOL_WIDTH: usize = 2;

/// Pixel rows lit for each symbol, indexed like the alphabet (blank first).
const PATTERNS: [[bool; TOY_HEIGHT]; 4] = [
    [false, false, false, false],
    [true, true, false, false],
    [false, false, true, true],
    [true, false, true, false],
];

pub const TOY_LINES: [&str; 5] = ["abc", "cab", "bca", "aab", "cbca"];

pub fn toy_alphabet() -> Alphabet {
    Alphabet::new(vec!["<blank>".into(), "a".into(), "b".into(), "c".into()])
        .expect("static alphabet is valid")
}

fn toy_direction() -> LstmDirectionParams {
    let (h, i) = (TOY_HEIGHT, TOY_HEIGHT);
    let gate = |diag: f64, bias: f64| GateParams {
        input: Matrix::from_fn(h, i, |r, c| if r == c { diag } else { 0.0 }),
        recurrent: Matrix::zeros(h, h),
        bias: vec![bias; h],
    };
    LstmDirectionParams {
        cell_input: gate(0.875, -0.375),
        input_gate: gate(0.0, 0.875),
        forget_gate: gate(0.0, -0.875),
        output_gate: gate(0.0, 0.875),
    }
}

pub fn toy_model() -> RawModel {
    let h = TOY_HEIGHT;
    let alphabet = toy_alphabet();
    let k = alphabet.len();
    let fc_weights = Matrix::from_fn(k, 2 * h, |sym, j| {
        if PATTERNS[sym][j % h] {
            0.5
        } else {
            -0.5
        }
    });
    let n = 2 * h;
    RawModel {
        dims: Dims {
            input: h,
            hidden: h,
            classes: k,
        },
        alphabet,
        forward: toy_direction(),
        backward: toy_direction(),
        fc_weights,
        fc_bias: vec![0.0; k],
        batchnorm: BatchNorm {
            gamma: vec![1.5; n],
            beta: vec![0.125; n],
            mean: vec![0.0625; n],
            var: vec![0.75; n],
            eps: 1e-5,
        },
    }
}

/// Renders `text` with one blank column around and between symbols.
pub fn render_line(text: &str) -> Result<TextLineImage> {
    let alphabet = toy_alphabet();
    let mut columns = vec![blank_column()];
    for c in text.chars() {
        let sym = alphabet
            .index_of(c)
            .ok_or_else(|| Error::Dataset(format!("toy alphabet has no symbol {c:?}")))?;
        let col: Vec<f64> = PATTERNS[sym]
            .iter()
            .map(|&on| if on { INK as f64 / 256.0 } else { 0.0 })
            .collect();
        columns.extend(std::iter::repeat_n(col, SYMBOL_WIDTH));
        columns.push(blank_column());
    }
    Ok(TextLineImage {
        width: columns.len(),
        height: TOY_HEIGHT,
        columns,
    })
}

fn blank_column() -> Vec<f64> {
    vec![0.0; TOY_HEIGHT]
}

/// Paths of a bundle written by [`write_toy_bundle`].
#[derive(Debug, Clone)]
pub struct ToyBundle {
    pub model: PathBuf,
    pub images: PathBuf,
    pub truth: PathBuf,
}

/// Writes `model/`, `images/line<N>.pgm` and `truth.tsv` under `dir`.
pub fn write_toy_bundle(dir: impl AsRef<Path>) -> Result<ToyBundle> {
    let dir = dir.as_ref();
    let model = toy_model().save(dir.join("model"), "weights.bin")?;
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut truth = String::new();
    for (n, text) in TOY_LINES.iter().enumerate() {
        let name = format!("line{n}.pgm");
        render_line(text)?.write_pgm(images.join(&name))?;
        truth.push_str(&format!("{name}\t{text}\n"));
    }
    let truth_path = dir.join("truth.tsv");
    fs::write(&truth_path, truth).map_err(|e| Error::io(&truth_path, e))?;
    Ok(ToyBundle {
        model,
        images,
        truth: truth_path,
    })
}
