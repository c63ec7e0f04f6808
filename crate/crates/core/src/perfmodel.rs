//! Analytical performance model of the folded BiLSTM accelerator: operation
//! counts, PE/SIMD folding, cycle and throughput estimates, and weight
//! memory in BRAM36-equivalents.
//!
//! The hidden layer dominates. Each interleaved timestep costs
//! `(H / PE) * F_s` cycles; the output layer, concatenator and decoder are
//! assumed to overlap with it. Memory covers weights only, so it is a lower
//! bound on what a placed design uses.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Dims;
use crate::quant::PrecisionConfig;

/// Bits in one BRAM36 block.
pub const BRAM36_BITS: u64 = 36 * 1024;

/// A URAM holds four BRAM36 worth of bits.
pub const URAM_BRAM36_EQUIVALENT: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldingConfig {
    /// LSTM cells computed in parallel.
    pub pe: usize,
    pub simd_input: usize,
    pub simd_recurrent: usize,
    pub pipeline_depth: u64,
    pub frequency_mhz: f64,
}

impl FoldingConfig {
    pub fn new(pe: usize, simd_input: usize, simd_recurrent: usize) -> Self {
        Self {
            pe,
            simd_input,
            simd_recurrent,
            pipeline_depth: 0,
            frequency_mhz: 200.0,
        }
    }

    pub fn with_pipeline_depth(mut self, depth: u64) -> Self {
        self.pipeline_depth = depth;
        self
    }

    pub fn with_frequency(mut self, mhz: f64) -> Self {
        self.frequency_mhz = mhz;
        self
    }

    /// Single cell with full SIMD width: `PE = 1`, `SIMD_INPUT = I`, `SIMD_RECURRENT = H`.
    pub fn full_simd(dims: &Dims) -> Self {
        Self::new(1, dims.input, dims.hidden)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OpCount {
    pub bilstm_ops: u64,
    pub output_ops: u64,
    pub total_ops: u64,
}

/// Multiply and add counted separately:
/// `[2*4*(H+I) + 8] * H * 2 * C` for the BiLSTM layer and
/// `[2*(2*H) + 1] * K * C` for the output layer.
pub fn op_count(hidden: usize, input: usize, classes: usize, columns: usize) -> Result<OpCount> {
    if hidden == 0 || input == 0 || classes == 0 {
        return Err(Error::Domain(format!(
            "op count needs positive dims, got H={hidden} I={input} K={classes}"
        )));
    }
    let (h, i, k, c) = (hidden as u64, input as u64, classes as u64, columns as u64);
    let bilstm_ops = (2 * 4 * (h + i) + 8) * h * 2 * c;
    let output_ops = (2 * (2 * h) + 1) * k * c;
    Ok(OpCount {
        bilstm_ops,
        output_ops,
        total_ops: bilstm_ops + output_ops,
    })
}

/// Cycles per dot-product result, `F_s = I / SIMD_INPUT = H / SIMD_RECURRENT`.
pub fn fold_factor(config: &FoldingConfig, input: usize, hidden: usize) -> Result<usize> {
    let divides = |lanes: usize, n: usize| lanes != 0 && n.is_multiple_of(lanes);
    if !divides(config.simd_input, input) {
        return Err(Error::Folding(format!(
            "SIMD_INPUT={} does not divide I={input}",
            config.simd_input
        )));
    }
    if !divides(config.simd_recurrent, hidden) {
        return Err(Error::Folding(format!(
            "SIMD_RECURRENT={} does not divide H={hidden}",
            config.simd_recurrent
        )));
    }
    let input_fold = input / config.simd_input;
    let recurrent_fold = hidden / config.simd_recurrent;
    if input_fold != recurrent_fold {
        return Err(Error::Folding(format!(
            "I/SIMD_INPUT={input_fold} differs from H/SIMD_RECURRENT={recurrent_fold}"
        )));
    }
    Ok(input_fold)
}

/// `2 * C * (H / PE) * F_s + pipeline_depth`.
pub fn cycle_estimate(dims: &Dims, config: &FoldingConfig, columns: usize) -> Result<u64> {
    if config.pe == 0 || !dims.hidden.is_multiple_of(config.pe) {
        return Err(Error::Folding(format!(
            "PE={} does not divide H={}",
            config.pe, dims.hidden
        )));
    }
    let fs = fold_factor(config, dims.input, dims.hidden)? as u64;
    let per_step = (dims.hidden / config.pe) as u64 * fs;
    Ok(2 * columns as u64 * per_step + config.pipeline_depth)
}

/// GOP/S for `ops` executed in `cycles` at `frequency_mhz`.
pub fn throughput(ops: &OpCount, cycles: u64, frequency_mhz: f64) -> Result<f64> {
    if cycles == 0 {
        return Err(Error::Domain("throughput undefined for zero cycles".into()));
    }
    if !(frequency_mhz > 0.0 && frequency_mhz.is_finite()) {
        return Err(Error::Domain(format!(
            "frequency must be positive, got {frequency_mhz} MHz"
        )));
    }
    let runtime = cycles as f64 / (frequency_mhz * 1e6);
    Ok(ops.total_ops as f64 / runtime / 1e9)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryEstimate {
    pub lstm_bits: u64,
    pub output_bits: u64,
    pub weight_bits: u64,
    /// BRAM36-equivalents.
    pub memory_blocks: u64,
}

/// Weight storage: `2 * 4 * (I + H + 1) * H * WQ` for both directions
/// (biases included) plus `(2H + 1) * K * fc_bits` for the output layer.
pub fn memory_estimate(dims: &Dims, precision: &PrecisionConfig) -> MemoryEstimate {
    let (i, h, k) = (dims.input as u64, dims.hidden as u64, dims.classes as u64);
    let lstm_bits = 2 * 4 * (i + h + 1) * h * precision.weight_bits as u64;
    let output_bits = (2 * h + 1) * k * precision.fc_weight_bits as u64;
    let weight_bits = lstm_bits + output_bits;
    MemoryEstimate {
        lstm_bits,
        output_bits,
        weight_bits,
        memory_blocks: weight_bits.div_ceil(BRAM36_BITS),
    }
}

/// Memory blocks as reported for placed designs: `#BRAM36 + 4 * #URAM`.
pub fn memory_blocks_used(bram36: u64, uram: u64) -> u64 {
    bram36 + URAM_BRAM36_EQUIVALENT * uram
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub dims: Dims,
    pub columns: usize,
    pub fold_factor: usize,
    pub ops: OpCount,
    pub cycles: u64,
    pub runtime_s: f64,
    /// Zero when no cycles are spent.
    pub gops: f64,
    pub memory: MemoryEstimate,
}

pub fn simulate(
    dims: &Dims,
    config: &FoldingConfig,
    columns: usize,
    precision: &PrecisionConfig,
) -> Result<SimReport> {
    if !(config.frequency_mhz > 0.0 && config.frequency_mhz.is_finite()) {
        return Err(Error::Domain(format!(
            "frequency must be positive, got {} MHz",
            config.frequency_mhz
        )));
    }
    let fs = fold_factor(config, dims.input, dims.hidden)?;
    let cycles = cycle_estimate(dims, config, columns)?;
    let ops = op_count(dims.hidden, dims.input, dims.classes, columns)?;
    let gops = if cycles == 0 {
        0.0
    } else {
        throughput(&ops, cycles, config.frequency_mhz)?
    };
    Ok(SimReport {
        dims: *dims,
        columns,
        fold_factor: fs,
        ops,
        cycles,
        runtime_s: cycles as f64 / (config.frequency_mhz * 1e6),
        gops,
        memory: memory_estimate(dims, precision),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> Dims {
        Dims::new(32, 128, 82).unwrap()
    }

    #[test]
    fn op_counts() {
        let ops = op_count(128, 32, 82, 732).unwrap();
        assert_eq!(ops.bilstm_ops, 241_360_896);
        assert_eq!(ops.output_ops, 30_792_312);
        assert_eq!(ops.total_ops, 272_153_208);
        let tiny = op_count(1, 1, 1, 1).unwrap();
        // (2*(2*1)+1)*1*1 = 5
        assert_eq!((tiny.bilstm_ops, tiny.output_ops), (48, 5));
        assert_eq!(op_count(1, 1, 1, 0).unwrap().total_ops, 0);
        assert!(op_count(0, 1, 1, 1).is_err());
    }

    #[test]
    fn fold_factors() {
        assert_eq!(fold_factor(&FoldingConfig::new(1, 32, 128), 32, 128).unwrap(), 1);
        assert_eq!(fold_factor(&FoldingConfig::new(1, 4, 16), 32, 128).unwrap(), 8);
        assert!(matches!(
            fold_factor(&FoldingConfig::new(1, 4, 32), 32, 128),
            Err(Error::Folding(_))
        ));
        assert!(fold_factor(&FoldingConfig::new(1, 5, 16), 32, 128).is_err());
        assert!(fold_factor(&FoldingConfig::new(1, 0, 16), 32, 128).is_err());
    }

    #[test]
    fn cycles() {
        let d = table1();
        let base = FoldingConfig::full_simd(&d);
        assert_eq!(cycle_estimate(&d, &base, 732).unwrap(), 187_392);
        let pe2 = FoldingConfig { pe: 2, ..base };
        assert_eq!(cycle_estimate(&d, &pe2, 732).unwrap(), 93_696);
        let full = FoldingConfig { pe: 128, ..base }.with_pipeline_depth(7);
        assert_eq!(cycle_estimate(&d, &full, 732).unwrap(), 2 * 732 + 7);
        let bad = FoldingConfig { pe: 3, ..base };
        assert!(cycle_estimate(&d, &bad, 732).is_err());
    }

    #[test]
    fn throughput_values() {
        let ops = op_count(128, 32, 82, 732).unwrap();
        let gops = throughput(&ops, 187_392, 266.0).unwrap();
        assert!((gops - 386.317203125).abs() < 1e-9, "{gops}");
        let toy = OpCount {
            bilstm_ops: 48,
            output_ops: 3,
            total_ops: 51,
        };
        assert!((throughput(&toy, 2, 1.0).unwrap() - 0.0255).abs() < 1e-12);
        assert_eq!(
            throughput(&ops, 1000, 200.0).unwrap(),
            2.0 * throughput(&ops, 1000, 100.0).unwrap()
        );
        assert!(throughput(&ops, 0, 100.0).is_err());
        assert!(throughput(&ops, 10, 0.0).is_err());
    }

    #[test]
    fn memory() {
        let p1 = PrecisionConfig::new(1, 1, 1).unwrap();
        let m = memory_estimate(&table1(), &p1);
        assert_eq!(m.lstm_bits, 164_864);
        assert_eq!(m.output_bits, 168_592);
        assert_eq!(m.weight_bits, 333_456);
        assert_eq!(m.memory_blocks, 10);
        let p2 = PrecisionConfig::new(2, 1, 1).unwrap();
        assert_eq!(memory_estimate(&table1(), &p2).lstm_bits, 2 * 164_864);
        let p8 = PrecisionConfig::new(8, 8, 8).unwrap();
        let tiny = memory_estimate(&Dims::new(1, 1, 1).unwrap(), &p8);
        assert_eq!((tiny.weight_bits, tiny.memory_blocks), (216, 1));
        assert_eq!(memory_blocks_used(10, 3), 22);
    }

    #[test]
    fn simulate_degenerate_sequence() {
        let d = table1();
        let cfg = FoldingConfig::full_simd(&d).with_pipeline_depth(5);
        let r = simulate(&d, &cfg, 0, &PrecisionConfig::new(1, 1, 1).unwrap()).unwrap();
        assert_eq!((r.ops.total_ops, r.cycles, r.gops), (0, 5, 0.0));
        let r = simulate(&d, &cfg.with_pipeline_depth(0), 0, &PrecisionConfig::new(1, 1, 1).unwrap()).unwrap();
        assert_eq!((r.cycles, r.gops), (0, 0.0));
    }
}
