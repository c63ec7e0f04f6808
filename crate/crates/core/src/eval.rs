//! Text-line images, edit-distance metrics and dataset evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lstm::infer;
use crate::model::NetworkModel;
use crate::quant::PrecisionConfig;

/// Minimum number of insertions, deletions and substitutions turning `a` into `b`.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn levenshtein_str(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein(&a, &b)
}

/// Character error rate: edit distance over the ground-truth length.
pub fn cer(pred: &str, truth: &str) -> Result<f64> {
    let len = truth.chars().count();
    if len == 0 {
        return Err(Error::UndefinedRate);
    }
    Ok(levenshtein_str(pred, truth) as f64 / len as f64)
}

/// Gray-scale text line, stored column by column with pixels in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextLineImage {
    pub width: usize,
    pub height: usize,
    pub columns: Vec<Vec<f64>>,
}

impl TextLineImage {
    /// Builds an image from 8-bit pixels in row-major order, mapping `p` to `p / 256`.
    pub fn from_pixels(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::dimension("pixel count", width * height, pixels.len()));
        }
        let columns = (0..width)
            .map(|x| {
                (0..height)
                    .map(|y| pixels[y * width + x] as f64 / 256.0)
                    .collect()
            })
            .collect();
        Ok(Self {
            width,
            height,
            columns,
        })
    }

    /// Inverse of [`from_pixels`](Self::from_pixels); values are rounded to the nearest `1/256`.
    pub fn to_pixels(&self) -> Vec<u8> {
        let mut pixels = vec![0u8; self.width * self.height];
        for (x, col) in self.columns.iter().enumerate() {
            for (y, v) in col.iter().enumerate() {
                pixels[y * self.width + x] = (v * 256.0).round().clamp(0.0, 255.0) as u8;
            }
        }
        pixels
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(self.to_pixels());
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl HeaderReader<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self, field: &'static str) -> Result<&str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error(field, "missing".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| self.error(field, "not ASCII".into()))
    }

    fn number(&mut self, field: &'static str) -> Result<usize> {
        let tok = self.token(field)?.to_string();
        tok.parse()
            .map_err(|_| self.error(field, format!("'{tok}' is not a non-negative integer")))
    }

    fn error(&self, field: &'static str, reason: String) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            field,
            reason,
        }
    }
}

/// Parses a binary PGM (P5, maxval 255).
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<TextLineImage> {
    let mut r = HeaderReader {
        bytes,
        pos: 0,
        path,
    };
    let magic = r.token("magic number")?;
    if magic != "P5" {
        let reason = format!("expected P5, found '{magic}'");
        return Err(r.error("magic number", reason));
    }
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if maxval != 255 {
        return Err(r.error("maxval", format!("expected 255, found {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if r.pos >= bytes.len() || !bytes[r.pos].is_ascii_whitespace() {
        return Err(r.error("header terminator", "missing whitespace before pixel data".into()));
    }
    let data = &bytes[r.pos + 1..];
    let expected = width * height;
    if data.len() < expected {
        return Err(r.error(
            "pixel data",
            format!("truncated: expected {expected} bytes, found {}", data.len()),
        ));
    }
    TextLineImage::from_pixels(width, height, &data[..expected])
}

/// Loads a PGM and checks its height against the model's column size.
pub fn load_image(path: impl AsRef<Path>, expected_height: usize) -> Result<TextLineImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let image = parse_pgm(&bytes, path)?;
    if image.height != expected_height {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            field: "height",
            reason: format!("expected {expected_height} pixels, found {}", image.height),
        });
    }
    Ok(image)
}

/// One labelled image of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub image: PathBuf,
    pub truth: String,
}

/// Reads a `<image-filename>\t<ground truth>` file, resolving names against `image_dir`.
pub fn load_dataset(image_dir: impl AsRef<Path>, truth_file: impl AsRef<Path>) -> Result<Vec<DatasetEntry>> {
    let (image_dir, truth_file) = (image_dir.as_ref(), truth_file.as_ref());
    if !image_dir.is_dir() {
        return Err(Error::Dataset(format!(
            "{} is not a directory",
            image_dir.display()
        )));
    }
    let text = fs::read_to_string(truth_file).map_err(|e| Error::io(truth_file, e))?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (name, truth) = line.split_once('\t').ok_or_else(|| {
            Error::Dataset(format!(
                "{}:{}: expected '<image>\\t<text>'",
                truth_file.display(),
                n + 1
            ))
        })?;
        entries.push(DatasetEntry {
            image: image_dir.join(name),
            truth: truth.to_string(),
        });
    }
    if entries.is_empty() {
        return Err(Error::Dataset(format!(
            "{}: no images listed",
            truth_file.display()
        )));
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageResult {
    pub image: PathBuf,
    pub predicted: String,
    pub truth: String,
    pub distance: usize,
    pub truth_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub images: Vec<ImageResult>,
    /// Total edits over total ground-truth characters.
    pub cer: f64,
    pub accuracy: f64,
}

impl EvalReport {
    pub fn from_results(images: Vec<ImageResult>) -> Result<Self> {
        let edits: usize = images.iter().map(|r| r.distance).sum();
        let chars: usize = images.iter().map(|r| r.truth_len).sum();
        if chars == 0 {
            return Err(Error::UndefinedRate);
        }
        let cer = edits as f64 / chars as f64;
        Ok(Self {
            images,
            cer,
            accuracy: 1.0 - cer,
        })
    }
}

/// Runs inference on every image (in parallel) and aggregates a corpus-wide CER.
/// Results keep dataset order.
pub fn evaluate_dataset(
    model: &NetworkModel,
    dataset: &[DatasetEntry],
    precision: &PrecisionConfig,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Dataset("empty dataset".into()));
    }
    for entry in dataset {
        if entry.truth.is_empty() {
            return Err(Error::Dataset(format!(
                "{}: empty ground truth",
                entry.image.display()
            )));
        }
        let mut unknown: Vec<char> = entry
            .truth
            .chars()
            .filter(|c| model.alphabet.index_of(*c).is_none())
            .collect();
        if !unknown.is_empty() {
            unknown.dedup();
            return Err(Error::Dataset(format!(
                "{}: ground truth uses symbols outside the alphabet: {:?}",
                entry.image.display(),
                unknown
            )));
        }
    }
    let results = dataset
        .par_iter()
        .map(|entry| {
            let image = load_image(&entry.image, model.dims.input)?;
            let predicted = infer(model, &image.columns, precision)?;
            let distance = levenshtein_str(&predicted, &entry.truth);
            Ok(ImageResult {
                image: entry.image.clone(),
                predicted,
                truth: entry.truth.clone(),
                distance,
                truth_len: entry.truth.chars().count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_results(results)
}
