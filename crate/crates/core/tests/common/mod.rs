//! Random model generators and reference implementations shared by the
//! integration tests. The references are written against plain vectors and
//! the scalar quantizers only; they do not call into `qbilstm::lstm`.
#![allow(dead_code)]

use qbilstm::lstm::{BatchNorm, GateParams, LstmDirectionParams};
use qbilstm::matrix::Matrix;
use qbilstm::quant::{binarize_activation, quantize, PrecisionConfig, QuantSpec};
use qbilstm::{Alphabet, Dims, RawModel};
use rand::Rng;

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

pub fn random_direction<R: Rng>(rng: &mut R, hidden: usize, input: usize) -> LstmDirectionParams {
    let mut gate = || GateParams {
        input: uniform_matrix(rng, hidden, input, 1.0),
        recurrent: uniform_matrix(rng, hidden, hidden, 1.0),
        bias: (0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    LstmDirectionParams {
        cell_input: gate(),
        input_gate: gate(),
        forget_gate: gate(),
        output_gate: gate(),
    }
}

pub fn random_alphabet(classes: usize) -> Alphabet {
    let mut symbols = vec!["<blank>".to_string()];
    symbols.extend((0..classes - 1).map(|i| char::from(b'a' + i as u8).to_string()));
    Alphabet::new(symbols).unwrap()
}

pub fn random_batchnorm<R: Rng>(rng: &mut R, features: usize) -> BatchNorm {
    BatchNorm {
        gamma: (0..features).map(|_| rng.gen_range(0.5..1.5)).collect(),
        beta: (0..features).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        mean: (0..features).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        var: (0..features).map(|_| rng.gen_range(0.1..2.0)).collect(),
        eps: 1e-5,
    }
}

pub fn random_raw_model<R: Rng>(rng: &mut R, input: usize, hidden: usize, classes: usize) -> RawModel {
    RawModel {
        dims: Dims::new(input, hidden, classes).unwrap(),
        alphabet: random_alphabet(classes),
        forward: random_direction(rng, hidden, input),
        backward: random_direction(rng, hidden, input),
        fc_weights: uniform_matrix(rng, classes, 2 * hidden, 0.5),
        fc_bias: (0..classes).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        batchnorm: random_batchnorm(rng, 2 * hidden),
    }
}

/// Pixels `p / 256` for random bytes `p`.
pub fn random_columns<R: Rng>(rng: &mut R, columns: usize, input: usize) -> Vec<Vec<f64>> {
    (0..columns)
        .map(|_| (0..input).map(|_| rng.gen_range(0..256u32) as f64 / 256.0).collect())
        .collect()
}

pub fn random_precision<R: Rng>(rng: &mut R) -> PrecisionConfig {
    let mut bits = || rng.gen_range(1..=8u32);
    let (w, a, i, r) = (bits(), bits(), bits(), bits());
    PrecisionConfig::new(w, a, i)
        .unwrap()
        .with_recurrent_bits(r)
        .unwrap()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gate_sum(g: &GateParams, row: usize, x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..x.len() {
        acc += g.input.get(row, j) * x[j];
    }
    for j in 0..y.len() {
        acc += g.recurrent.get(row, j) * y[j];
    }
    acc + g.bias[row]
}

/// Full-precision LSTM step without peepholes.
pub fn real_step(p: &LstmDirectionParams, x: &[f64], y: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = p.hidden();
    let mut y_new = vec![0.0; h];
    let mut c_new = vec![0.0; h];
    for j in 0..h {
        let z = gate_sum(&p.cell_input, j, x, y).tanh();
        let i = sigmoid(gate_sum(&p.input_gate, j, x, y));
        let f = sigmoid(gate_sum(&p.forget_gate, j, x, y));
        let o = sigmoid(gate_sum(&p.output_gate, j, x, y));
        c_new[j] = z * i + c[j] * f;
        y_new[j] = c_new[j].tanh() * o;
    }
    (y_new, c_new)
}

pub fn real_direction(p: &LstmDirectionParams, xs: &[&Vec<f64>]) -> Vec<Vec<f64>> {
    let h = p.hidden();
    let (mut y, mut c) = (vec![0.0; h], vec![0.0; h]);
    xs.iter()
        .map(|x| {
            let (ny, nc) = real_step(p, x, &y, &c);
            y = ny;
            c = nc;
            y.clone()
        })
        .collect()
}

/// Full-precision BiLSTM features, row `t = [fw_t, bw_t]`.
pub fn real_bilstm(fw: &LstmDirectionParams, bw: &LstmDirectionParams, cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let forward: Vec<&Vec<f64>> = cols.iter().collect();
    let backward: Vec<&Vec<f64>> = cols.iter().rev().collect();
    let f = real_direction(fw, &forward);
    let mut b = real_direction(bw, &backward);
    b.reverse();
    f.into_iter()
        .zip(b)
        .map(|(mut row, tail)| {
            row.extend(tail);
            row
        })
        .collect()
}

fn q_act(bits: u32, v: f64) -> f64 {
    if bits == 1 {
        binarize_activation(v).unwrap()
    } else {
        quantize(v, &QuantSpec::signed(bits).unwrap()).unwrap()
    }
}

/// Quantized direction written out step by step from the scalar quantizers.
/// Returns outputs on the AQ grid in processing order.
pub fn naive_quantized_direction(
    p: &LstmDirectionParams,
    xs: &[&Vec<f64>],
    prec: &PrecisionConfig,
) -> Vec<Vec<f64>> {
    let h = p.hidden();
    let gate = QuantSpec::unsigned(prec.cell_bits).unwrap();
    let tanh = QuantSpec::signed(prec.cell_bits).unwrap();
    let cell = QuantSpec::fixed(prec.cell_bits, prec.cell_bits - 4, qbilstm::quant::Signedness::Signed).unwrap();
    let input = QuantSpec::unsigned(prec.input_bits).unwrap();
    let (mut y, mut c) = (vec![0.0; h], vec![0.0; h]);
    let mut outputs = Vec::new();
    for x in xs {
        let x: Vec<f64> = x.iter().map(|v| quantize(*v, &input).unwrap()).collect();
        let mut y_new = vec![0.0; h];
        let mut out = vec![0.0; h];
        for j in 0..h {
            let z = quantize(gate_sum(&p.cell_input, j, &x, &y).tanh(), &tanh).unwrap();
            let i = quantize(sigmoid(gate_sum(&p.input_gate, j, &x, &y)), &gate).unwrap();
            let f = quantize(sigmoid(gate_sum(&p.forget_gate, j, &x, &y)), &gate).unwrap();
            let o = quantize(sigmoid(gate_sum(&p.output_gate, j, &x, &y)), &gate).unwrap();
            c[j] = quantize(i * z + f * c[j], &cell).unwrap();
            let raw = o * quantize(c[j].tanh(), &tanh).unwrap();
            y_new[j] = q_act(prec.recurrent_bits, raw);
            out[j] = q_act(prec.activation_bits, raw);
        }
        y = y_new;
        outputs.push(out);
    }
    outputs
}

pub fn naive_quantized_bilstm(
    fw: &LstmDirectionParams,
    bw: &LstmDirectionParams,
    cols: &[Vec<f64>],
    prec: &PrecisionConfig,
) -> Vec<Vec<f64>> {
    let forward: Vec<&Vec<f64>> = cols.iter().collect();
    let backward: Vec<&Vec<f64>> = cols.iter().rev().collect();
    let f = naive_quantized_direction(fw, &forward, prec);
    let mut b = naive_quantized_direction(bw, &backward, prec);
    b.reverse();
    f.into_iter()
        .zip(b)
        .map(|(mut row, tail)| {
            row.extend(tail);
            row
        })
        .collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
