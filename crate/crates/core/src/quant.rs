//! Fixed-point quantization grids and binarization.
//!
//! A [`QuantSpec`] describes a uniform grid of `2^k` values spaced `2^-f`
//! apart. Quantized values are carried as `f64`, which holds every grid point
//! of up to 32 bits exactly, so grid membership is an exact test via
//! [`QuantSpec::code`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widest grid supported. Keeps every code exactly representable in `f64`.
pub const MAX_BITS: u32 = 32;

/// Integer bits (sign included) of the cell-state grid.
pub const CELL_INTEGER_BITS: u32 = 4;

/// Default precision of in-memory cell activations and of the output layer weights.
pub const DEFAULT_INTERNAL_BITS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Signedness {
    Signed,
    Unsigned,
}

/// A `k`-bit fixed-point grid with `f` fraction bits and saturating bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantSpec {
    bits: u32,
    frac_bits: u32,
    signedness: Signedness,
}

impl QuantSpec {
    /// General two's-complement (or unsigned) grid. Signed grids span
    /// `[-2^(k-f-1), 2^(k-f-1) - 2^-f]`, unsigned ones `[0, 2^(k-f) - 2^-f]`.
    pub fn fixed(bits: u32, frac_bits: u32, signedness: Signedness) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::InvalidBitWidth { bits, min: 1 });
        }
        if frac_bits > MAX_BITS {
            return Err(Error::InvalidFormat(format!(
                "{frac_bits} fraction bits exceeds {MAX_BITS}"
            )));
        }
        Ok(Self {
            bits,
            frac_bits,
            signedness,
        })
    }

    /// Grid for values after a `tanh`: `f = k - 1`, range `[-1, 1 - 2^-f]`.
    pub fn signed(bits: u32) -> Result<Self> {
        if !(2..=MAX_BITS).contains(&bits) {
            return Err(Error::InvalidBitWidth { bits, min: 2 });
        }
        Self::fixed(bits, bits - 1, Signedness::Signed)
    }

    /// Grid for values after a logistic sigmoid: `f = k`, range `[0, 1 - 2^-f]`.
    pub fn unsigned(bits: u32) -> Result<Self> {
        if !(1..=MAX_BITS).contains(&bits) {
            return Err(Error::InvalidBitWidth { bits, min: 1 });
        }
        Self::fixed(bits, bits, Signedness::Unsigned)
    }

    /// Signed grid for the LSTM cell state, with [`CELL_INTEGER_BITS`] integer bits.
    pub fn cell_state(bits: u32) -> Result<Self> {
        if !(CELL_INTEGER_BITS..=MAX_BITS).contains(&bits) {
            return Err(Error::InvalidBitWidth {
                bits,
                min: CELL_INTEGER_BITS,
            });
        }
        Self::fixed(bits, bits - CELL_INTEGER_BITS, Signedness::Signed)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn signedness(&self) -> Signedness {
        self.signedness
    }

    /// Grid spacing `2^-f`.
    pub fn step(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_code(&self) -> i64 {
        match self.signedness {
            Signedness::Signed => -(1i64 << (self.bits - 1)),
            Signedness::Unsigned => 0,
        }
    }

    pub fn max_code(&self) -> i64 {
        match self.signedness {
            Signedness::Signed => (1i64 << (self.bits - 1)) - 1,
            Signedness::Unsigned => (1i64 << self.bits) - 1,
        }
    }

    pub fn min(&self) -> f64 {
        self.min_code() as f64 * self.step()
    }

    pub fn max(&self) -> f64 {
        self.max_code() as f64 * self.step()
    }

    /// Number of representable values.
    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    /// Integer code of `x` if it lies exactly on the grid.
    pub fn code(&self, x: f64) -> Option<i64> {
        if !x.is_finite() {
            return None;
        }
        let scaled = x * (self.frac_bits as f64).exp2();
        if scaled.fract() != 0.0 {
            return None;
        }
        let code = scaled as i64;
        (self.min_code()..=self.max_code())
            .contains(&code)
            .then_some(code)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.code(x).is_some()
    }

    /// `clip(round(x * 2^f) * 2^-f, min, max)` with round-half-away-from-zero.
    pub fn quantize(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        let scaled = (x * (self.frac_bits as f64).exp2()).round();
        let code = scaled.clamp(self.min_code() as f64, self.max_code() as f64);
        Ok(code * self.step())
    }
}

/// Free-function form of [`QuantSpec::signed`].
pub fn make_signed_spec(bits: u32) -> Result<QuantSpec> {
    QuantSpec::signed(bits)
}

/// Free-function form of [`QuantSpec::unsigned`].
pub fn make_unsigned_spec(bits: u32) -> Result<QuantSpec> {
    QuantSpec::unsigned(bits)
}

pub fn quantize(x: f64, spec: &QuantSpec) -> Result<f64> {
    spec.quantize(x)
}

/// `sign(x)` with `sign(0) = +1`.
pub fn binarize_activation(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    Ok(if x >= 0.0 { 1.0 } else { -1.0 })
}

/// Binarized weights `sign(x) * 1/sqrt(H + I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryWeightSpec {
    scaling_factor: f64,
}

impl BinaryWeightSpec {
    pub fn new(hidden: usize, input: usize) -> Result<Self> {
        if hidden == 0 || input == 0 {
            return Err(Error::Domain(format!(
                "binary weight scaling needs H >= 1 and I >= 1, got H={hidden}, I={input}"
            )));
        }
        Ok(Self {
            scaling_factor: 1.0 / ((hidden + input) as f64).sqrt(),
        })
    }

    pub fn scaling_factor(&self) -> f64 {
        self.scaling_factor
    }

    pub fn binarize(&self, x: f64) -> Result<f64> {
        Ok(binarize_activation(x)? * self.scaling_factor)
    }
}

pub fn binarize_weight(x: f64, hidden: usize, input: usize) -> Result<f64> {
    BinaryWeightSpec::new(hidden, input)?.binarize(x)
}

/// How a tensor is mapped onto its representable values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantPolicy {
    Grid(QuantSpec),
    BinaryWeight(BinaryWeightSpec),
    BinaryActivation,
}

impl QuantPolicy {
    pub fn apply(&self, x: f64) -> Result<f64> {
        match self {
            QuantPolicy::Grid(spec) => spec.quantize(x),
            QuantPolicy::BinaryWeight(spec) => spec.binarize(x),
            QuantPolicy::BinaryActivation => binarize_activation(x),
        }
    }

    /// Whether `x` is one of the values this policy can produce.
    pub fn admits(&self, x: f64) -> bool {
        match self {
            QuantPolicy::Grid(spec) => spec.contains(x),
            QuantPolicy::BinaryWeight(spec) => x.abs() == spec.scaling_factor(),
            QuantPolicy::BinaryActivation => x == 1.0 || x == -1.0,
        }
    }
}

pub fn quantize_tensor(values: &[f64], policy: &QuantPolicy) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(index, &x)| {
            policy.apply(x).map_err(|e| Error::Element {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Bit-widths for weights (WQ), output activations (AQ), input activations (IQ)
/// and recurrent activations (RQ), plus the internal cell precision and the
/// output-layer weight precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrecisionConfig {
    pub weight_bits: u32,
    pub activation_bits: u32,
    pub input_bits: u32,
    pub recurrent_bits: u32,
    pub cell_bits: u32,
    pub fc_weight_bits: u32,
}

impl PrecisionConfig {
    /// `WQ/AQ/IQ` with `RQ = AQ` and 8-bit internals.
    pub fn new(weight_bits: u32, activation_bits: u32, input_bits: u32) -> Result<Self> {
        let config = Self {
            weight_bits,
            activation_bits,
            input_bits,
            recurrent_bits: activation_bits,
            cell_bits: DEFAULT_INTERNAL_BITS,
            fc_weight_bits: DEFAULT_INTERNAL_BITS,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_recurrent_bits(mut self, bits: u32) -> Result<Self> {
        self.recurrent_bits = bits;
        self.validate()?;
        Ok(self)
    }

    /// Overrides the 8-bit internal cell precision (gates, cell input, cell
    /// state and its `tanh`). Only meant for convergence studies.
    pub fn with_cell_bits(mut self, bits: u32) -> Result<Self> {
        self.cell_bits = bits;
        self.validate()?;
        Ok(self)
    }

    /// Every field set to `bits`, internals included.
    pub fn uniform(bits: u32) -> Result<Self> {
        let config = Self {
            weight_bits: bits,
            activation_bits: bits,
            input_bits: bits,
            recurrent_bits: bits,
            cell_bits: bits,
            fc_weight_bits: bits,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        for bits in [
            self.weight_bits,
            self.activation_bits,
            self.input_bits,
            self.recurrent_bits,
        ] {
            if !(1..=MAX_BITS).contains(&bits) {
                return Err(Error::InvalidBitWidth { bits, min: 1 });
            }
        }
        QuantSpec::cell_state(self.cell_bits)?;
        QuantSpec::signed(self.fc_weight_bits)?;
        Ok(())
    }

    /// LSTM weights and biases: signed WQ grid, or scaled binarization at WQ = 1.
    pub fn weight_policy(&self, hidden: usize, input: usize) -> Result<QuantPolicy> {
        if self.weight_bits == 1 {
            Ok(QuantPolicy::BinaryWeight(BinaryWeightSpec::new(
                hidden, input,
            )?))
        } else {
            Ok(QuantPolicy::Grid(QuantSpec::signed(self.weight_bits)?))
        }
    }

    /// Pixels live in `[0, 1)`, so inputs use the unsigned IQ grid.
    pub fn input_policy(&self) -> Result<QuantPolicy> {
        Ok(QuantPolicy::Grid(QuantSpec::unsigned(self.input_bits)?))
    }

    pub fn output_policy(&self) -> Result<QuantPolicy> {
        activation_policy(self.activation_bits)
    }

    pub fn recurrent_policy(&self) -> Result<QuantPolicy> {
        activation_policy(self.recurrent_bits)
    }

    pub fn gate_spec(&self) -> Result<QuantSpec> {
        QuantSpec::unsigned(self.cell_bits)
    }

    pub fn tanh_spec(&self) -> Result<QuantSpec> {
        QuantSpec::signed(self.cell_bits)
    }

    pub fn cell_spec(&self) -> Result<QuantSpec> {
        QuantSpec::cell_state(self.cell_bits)
    }

    pub fn fc_weight_spec(&self) -> Result<QuantSpec> {
        QuantSpec::signed(self.fc_weight_bits)
    }
}

fn activation_policy(bits: u32) -> Result<QuantPolicy> {
    if bits == 1 {
        Ok(QuantPolicy::BinaryActivation)
    } else {
        Ok(QuantPolicy::Grid(QuantSpec::signed(bits)?))
    }
}

/// `WQ/AQ/IQ`, with `/RQ` appended only when it differs from AQ.
impl fmt::Display for PrecisionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.weight_bits, self.activation_bits, self.input_bits
        )?;
        if self.recurrent_bits != self.activation_bits {
            write!(f, "/{}", self.recurrent_bits)?;
        }
        Ok(())
    }
}

impl FromStr for PrecisionConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |reason: String| Error::Precision {
            input: s.to_string(),
            reason,
        };
        let fields: Vec<&str> = s.trim().split('/').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(err(format!(
                "expected WQ/AQ/IQ or WQ/AQ/IQ/RQ, got {} field(s)",
                fields.len()
            )));
        }
        let mut bits = Vec::with_capacity(4);
        for field in &fields {
            let value: u32 = field
                .parse()
                .map_err(|_| err(format!("'{field}' is not a positive integer")))?;
            if value == 0 {
                return Err(err("bit-widths must be positive".into()));
            }
            bits.push(value);
        }
        let config = Self::new(bits[0], bits[1], bits[2]).map_err(|e| err(e.to_string()))?;
        match bits.get(3) {
            Some(&rq) => config
                .with_recurrent_bits(rq)
                .map_err(|e| err(e.to_string())),
            None => Ok(config),
        }
    }
}
