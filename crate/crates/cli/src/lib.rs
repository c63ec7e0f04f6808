//! Subcommand implementations behind the `qbilstm` binary. Each command
//! returns the text it would print, so tests can drive them directly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qbilstm::eval::{evaluate_dataset, load_dataset, load_image, EvalReport};
use qbilstm::lstm::infer;
use qbilstm::perfmodel::{simulate, FoldingConfig, SimReport};
use qbilstm::{Dims, NetworkModel, PrecisionConfig, RawModel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] qbilstm::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Csv(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn parse_precision(s: &str) -> Result<PrecisionConfig> {
    PrecisionConfig::from_str(s).map_err(|e| CliError::Usage(e.to_string()))
}

/// Parses `PE:SIMD_INPUT:SIMD_RECURRENT`.
pub fn parse_folding(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("folding '{s}' must be PE:SIMD_INPUT:SIMD_RECURRENT"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let n = |p: &str| p.trim().parse::<usize>().map_err(|_| bad());
    Ok((n(parts[0])?, n(parts[1])?, n(parts[2])?))
}

/// Parses `I,H,K`.
pub fn parse_dims(s: &str) -> Result<Dims> {
    let bad = || CliError::Usage(format!("dims '{s}' must be I,H,K"));
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(Dims::new(parts[0], parts[1], parts[2])?)
}

fn folding_label(f: &FoldingConfig) -> String {
    format!("{}:{}:{}", f.pe, f.simd_input, f.simd_recurrent)
}

fn load_model(path: &Path, precision: &PrecisionConfig) -> Result<NetworkModel> {
    let raw = RawModel::load(path)?;
    Ok(NetworkModel::build(&raw, precision)?)
}

pub fn cmd_infer(model: &Path, image: &Path, precision: &str) -> Result<String> {
    let precision = parse_precision(precision)?;
    let model = load_model(model, &precision)?;
    let image = load_image(image, model.dims.input)?;
    Ok(infer(&model, &image.columns, &precision)? + "\n")
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn write_eval_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image", "distance", "truth_len", "pred"])?;
    for r in &report.images {
        w.write_record([
            file_name(&r.image),
            r.distance.to_string(),
            r.truth_len.to_string(),
            r.predicted.clone(),
        ])?;
    }
    w.flush().map_err(|e| qbilstm::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn cmd_eval(
    model: &Path,
    images: &Path,
    truth: &Path,
    precision: &str,
    csv_path: Option<&Path>,
) -> Result<String> {
    let precision = parse_precision(precision)?;
    let model = load_model(model, &precision)?;
    let dataset = load_dataset(images, truth)?;
    let report = evaluate_dataset(&model, &dataset, &precision)?;
    if let Some(path) = csv_path {
        write_eval_csv(&report, path)?;
    }
    let mut out = String::new();
    writeln!(out, "image\tdistance\ttruth_len\tpredicted\ttruth").unwrap();
    for r in &report.images {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            file_name(&r.image),
            r.distance,
            r.truth_len,
            r.predicted,
            r.truth
        )
        .unwrap();
    }
    writeln!(out, "precision\t{precision}").unwrap();
    writeln!(out, "cer\t{:.6}", report.cer).unwrap();
    writeln!(out, "accuracy\t{:.6}", report.accuracy).unwrap();
    Ok(out)
}

fn sim_rows(report: &SimReport, folding: &FoldingConfig, precision: &PrecisionConfig) -> Vec<(&'static str, String)> {
    vec![
        (
            "dims",
            format!(
                "I={} H={} K={}",
                report.dims.input, report.dims.hidden, report.dims.classes
            ),
        ),
        ("columns", report.columns.to_string()),
        ("precision", precision.to_string()),
        ("pe", folding.pe.to_string()),
        ("simd_input", folding.simd_input.to_string()),
        ("simd_recurrent", folding.simd_recurrent.to_string()),
        ("fold_factor", report.fold_factor.to_string()),
        ("pipeline_depth", folding.pipeline_depth.to_string()),
        ("frequency_mhz", folding.frequency_mhz.to_string()),
        ("bilstm_ops", report.ops.bilstm_ops.to_string()),
        ("output_ops", report.ops.output_ops.to_string()),
        ("total_ops", report.ops.total_ops.to_string()),
        ("cycles", report.cycles.to_string()),
        ("runtime_s", format!("{:.9}", report.runtime_s)),
        ("gops", format!("{:.6}", report.gops)),
        ("lstm_weight_bits", report.memory.lstm_bits.to_string()),
        ("output_weight_bits", report.memory.output_bits.to_string()),
        ("weight_bits", report.memory.weight_bits.to_string()),
        ("memory_blocks", report.memory.memory_blocks.to_string()),
    ]
}

pub fn cmd_simulate(
    dims: &Dims,
    folding: &FoldingConfig,
    columns: usize,
    precision: &str,
    csv_path: Option<&Path>,
) -> Result<String> {
    let precision = parse_precision(precision)?;
    let report = simulate(dims, folding, columns, &precision)?;
    let rows = sim_rows(&report, folding, &precision);
    if let Some(path) = csv_path {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(rows.iter().map(|(k, _)| *k))?;
        w.write_record(rows.iter().map(|(_, v)| v.as_str()))?;
        w.flush().map_err(|e| qbilstm::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    let mut out = String::new();
    for (k, v) in rows {
        writeln!(out, "{k:<20}{v}").unwrap();
    }
    Ok(out)
}

/// Precision x folding grid evaluated against one model and dataset.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub precisions: Vec<PrecisionConfig>,
    pub foldings: Vec<FoldingConfig>,
    pub model: PathBuf,
    pub images: PathBuf,
    pub truth: PathBuf,
    /// Sequence length for the performance model; defaults to the total
    /// column count of the dataset.
    pub columns: Option<usize>,
}

pub const SWEEP_HEADER: [&str; 8] = [
    "precision",
    "folding",
    "cer",
    "total_ops",
    "cycles",
    "gops",
    "weight_bits",
    "memory_blocks",
];

pub const ERROR_MARKER: &str = "ERROR";

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub csv: String,
    /// One diagnostic per failed point.
    pub errors: Vec<String>,
}

pub fn cmd_sweep(spec: &SweepSpec, csv_path: Option<&Path>) -> Result<SweepOutput> {
    if spec.precisions.is_empty() || spec.foldings.is_empty() {
        return Err(CliError::Usage(
            "sweep needs at least one precision and one folding".into(),
        ));
    }
    let raw = RawModel::load(&spec.model)?;
    let dataset = load_dataset(&spec.images, &spec.truth)?;
    let columns = match spec.columns {
        Some(c) => c,
        None => dataset
            .iter()
            .map(|e| load_image(&e.image, raw.dims.input).map(|img| img.width))
            .sum::<qbilstm::Result<usize>>()?,
    };

    let mut precisions = spec.precisions.clone();
    precisions.sort();
    precisions.dedup();
    let mut foldings = spec.foldings.clone();
    foldings.sort_by(|a, b| {
        (a.pe, a.simd_input, a.simd_recurrent)
            .cmp(&(b.pe, b.simd_input, b.simd_recurrent))
            .then(a.frequency_mhz.total_cmp(&b.frequency_mhz))
            .then(a.pipeline_depth.cmp(&b.pipeline_depth))
    });

    let mut errors = Vec::new();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for precision in &precisions {
        let cer = NetworkModel::build(&raw, precision)
            .and_then(|model| evaluate_dataset(&model, &dataset, precision))
            .map(|r| format!("{:.6}", r.cer));
        let cer = cer.unwrap_or_else(|e| {
            errors.push(format!("{precision}: {e}"));
            ERROR_MARKER.to_string()
        });
        for folding in &foldings {
            let mut row = vec![precision.to_string(), folding_label(folding), cer.clone()];
            match simulate(&raw.dims, folding, columns, precision) {
                Ok(r) => row.extend([
                    r.ops.total_ops.to_string(),
                    r.cycles.to_string(),
                    format!("{:.6}", r.gops),
                    r.memory.weight_bits.to_string(),
                    r.memory.memory_blocks.to_string(),
                ]),
                Err(e) => {
                    errors.push(format!("{precision} @ {}: {e}", folding_label(folding)));
                    row.extend(std::iter::repeat_n(ERROR_MARKER.to_string(), 5));
                }
            }
            w.write_record(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    let csv = String::from_utf8(bytes).expect("csv output is UTF-8");
    if let Some(path) = csv_path {
        fs::write(path, &csv).map_err(|e| qbilstm::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    Ok(SweepOutput { csv, errors })
}
