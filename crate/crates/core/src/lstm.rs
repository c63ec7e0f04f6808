//! Quantized LSTM inference datapath: cell step, bidirectional layer, the
//! batch-norm-folded output layer and greedy CTC decoding.
//!
//! Pre-activations are accumulated in `f64` in a fixed order (input block,
//! recurrent block, bias). Quantization happens only where the hardware
//! stores a value: activation outputs and the cell-state writeback.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Alphabet, NetworkModel};
use crate::quant::{PrecisionConfig, QuantPolicy, QuantSpec};

/// Weights of one gate (or the cell input): `W` is H x I, `R` is H x H.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub input: Matrix,
    pub recurrent: Matrix,
    pub bias: Vec<f64>,
}

impl GateParams {
    pub fn new(input: Matrix, recurrent: Matrix, bias: Vec<f64>) -> Result<Self> {
        let h = input.rows();
        if recurrent.rows() != h {
            return Err(Error::dimension("recurrent weight rows", h, recurrent.rows()));
        }
        if recurrent.cols() != h {
            return Err(Error::dimension("recurrent weight columns", h, recurrent.cols()));
        }
        if bias.len() != h {
            return Err(Error::dimension("bias length", h, bias.len()));
        }
        Ok(Self {
            input,
            recurrent,
            bias,
        })
    }

    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            input: Matrix::zeros(hidden, input),
            recurrent: Matrix::zeros(hidden, hidden),
            bias: vec![0.0; hidden],
        }
    }

    fn quantized(&self, policy: &QuantPolicy) -> Result<Self> {
        Ok(Self {
            input: self.input.map_quantized(policy)?,
            recurrent: self.recurrent.map_quantized(policy)?,
            bias: crate::quant::quantize_tensor(&self.bias, policy)?,
        })
    }

    /// `W x + R y + b` for cell `row`, accumulated in that order.
    fn preactivation(&self, row: usize, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (w, v) in self.input.row(row).iter().zip(x) {
            acc += w * v;
        }
        for (r, v) in self.recurrent.row(row).iter().zip(y) {
            acc += r * v;
        }
        acc + self.bias[row]
    }
}

/// One direction of the BiLSTM layer, without peephole connections.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirectionParams {
    pub cell_input: GateParams,
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub output_gate: GateParams,
}

impl LstmDirectionParams {
    pub fn new(
        cell_input: GateParams,
        input_gate: GateParams,
        forget_gate: GateParams,
        output_gate: GateParams,
    ) -> Result<Self> {
        let (h, i) = (cell_input.input.rows(), cell_input.input.cols());
        if h == 0 || i == 0 {
            return Err(Error::Model(format!("empty LSTM direction (H={h}, I={i})")));
        }
        for gate in [&input_gate, &forget_gate, &output_gate] {
            if gate.input.rows() != h || gate.input.cols() != i {
                return Err(Error::Model(format!(
                    "gate input weights are {}x{}, expected {h}x{i}",
                    gate.input.rows(),
                    gate.input.cols()
                )));
            }
        }
        Ok(Self {
            cell_input,
            input_gate,
            forget_gate,
            output_gate,
        })
    }

    pub fn zeros(hidden: usize, input: usize) -> Self {
        let g = GateParams::zeros(hidden, input);
        Self {
            cell_input: g.clone(),
            input_gate: g.clone(),
            forget_gate: g.clone(),
            output_gate: g,
        }
    }

    pub fn hidden(&self) -> usize {
        self.cell_input.input.rows()
    }

    pub fn input_size(&self) -> usize {
        self.cell_input.input.cols()
    }

    /// Gates in storage order: cell input, input, forget, output.
    pub fn gates(&self) -> [&GateParams; 4] {
        [
            &self.cell_input,
            &self.input_gate,
            &self.forget_gate,
            &self.output_gate,
        ]
    }

    /// Weights and biases mapped onto the WQ grid, or binarized with
    /// `1/sqrt(H + I)` scaling when WQ = 1.
    pub fn quantized(&self, precision: &PrecisionConfig) -> Result<Self> {
        let policy = precision.weight_policy(self.hidden(), self.input_size())?;
        Ok(Self {
            cell_input: self.cell_input.quantized(&policy)?,
            input_gate: self.input_gate.quantized(&policy)?,
            forget_gate: self.forget_gate.quantized(&policy)?,
            output_gate: self.output_gate.quantized(&policy)?,
        })
    }
}

/// Recurrent state carried between timesteps. `y` is on the RQ grid and `c`
/// on the cell-state grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub y: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            y: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Result of one timestep: the new state (recurrent path, RQ grid) and the
/// cell output on the AQ grid consumed by the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: LstmState,
    pub output: Vec<f64>,
}

/// Every grid a cell step writes to, resolved once per sequence.
#[derive(Debug, Clone, Copy)]
struct CellGrids {
    input: QuantPolicy,
    gate: QuantSpec,
    tanh: QuantSpec,
    cell: QuantSpec,
    output: QuantPolicy,
    recurrent: QuantPolicy,
}

impl CellGrids {
    fn new(precision: &PrecisionConfig) -> Result<Self> {
        Ok(Self {
            input: precision.input_policy()?,
            gate: precision.gate_spec()?,
            tanh: precision.tanh_spec()?,
            cell: precision.cell_spec()?,
            output: precision.output_policy()?,
            recurrent: precision.recurrent_policy()?,
        })
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn lstm_cell_step(
    params: &LstmDirectionParams,
    x: &[f64],
    prev: &LstmState,
    precision: &PrecisionConfig,
) -> Result<StepOutput> {
    check_step_shapes(params, x, prev)?;
    step(params, x, prev, &CellGrids::new(precision)?)
}

fn check_step_shapes(params: &LstmDirectionParams, x: &[f64], prev: &LstmState) -> Result<()> {
    let h = params.hidden();
    if x.len() != params.input_size() {
        return Err(Error::dimension("input column", params.input_size(), x.len()));
    }
    if prev.y.len() != h {
        return Err(Error::dimension("previous output", h, prev.y.len()));
    }
    if prev.c.len() != h {
        return Err(Error::dimension("previous cell state", h, prev.c.len()));
    }
    Ok(())
}

fn step(
    params: &LstmDirectionParams,
    x: &[f64],
    prev: &LstmState,
    grids: &CellGrids,
) -> Result<StepOutput> {
    let h = params.hidden();
    let mut state = LstmState::zeros(h);
    let mut output = vec![0.0; h];
    for j in 0..h {
        let cell_in = grids
            .tanh
            .quantize(params.cell_input.preactivation(j, x, &prev.y).tanh())?;
        let i = grids
            .gate
            .quantize(sigmoid(params.input_gate.preactivation(j, x, &prev.y)))?;
        let f = grids
            .gate
            .quantize(sigmoid(params.forget_gate.preactivation(j, x, &prev.y)))?;
        let o = grids
            .gate
            .quantize(sigmoid(params.output_gate.preactivation(j, x, &prev.y)))?;
        let c = grids.cell.quantize(i * cell_in + f * prev.c[j])?;
        let y = o * grids.tanh.quantize(c.tanh())?;
        state.c[j] = c;
        state.y[j] = grids.recurrent.apply(y)?;
        output[j] = grids.output.apply(y)?;
    }
    Ok(StepOutput { state, output })
}

/// Columns mapped onto the IQ grid, with their lengths checked.
fn prepare_columns(
    model: &NetworkModel,
    columns: &[Vec<f64>],
    grids: &CellGrids,
) -> Result<Vec<Vec<f64>>> {
    columns
        .iter()
        .enumerate()
        .map(|(t, col)| {
            if col.len() != model.dims.input {
                return Err(Error::Dimension {
                    what: format!("column {t}"),
                    expected: model.dims.input,
                    got: col.len(),
                });
            }
            crate::quant::quantize_tensor(col, &grids.input)
        })
        .collect()
}

fn concat(fw: Vec<Vec<f64>>, bw: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    fw.into_iter()
        .zip(bw)
        .map(|(mut row, b)| {
            row.extend(b);
            row
        })
        .collect()
}

/// Runs the left-to-right pass, then the right-to-left pass, and returns
/// row `t = [fw_t ‖ bw_t]` on the AQ grid. Input columns are mapped onto the
/// IQ grid first (a no-op for columns already on it).
pub fn bilstm_forward(
    model: &NetworkModel,
    columns: &[Vec<f64>],
    precision: &PrecisionConfig,
) -> Result<Vec<Vec<f64>>> {
    let grids = CellGrids::new(precision)?;
    let xs = prepare_columns(model, columns, &grids)?;
    let h = model.dims.hidden;
    let len = xs.len();

    let mut fw = Vec::with_capacity(len);
    let mut state = LstmState::zeros(h);
    for x in &xs {
        let out = step(&model.forward, x, &state, &grids)?;
        state = out.state;
        fw.push(out.output);
    }

    let mut bw = vec![Vec::new(); len];
    let mut state = LstmState::zeros(h);
    for t in (0..len).rev() {
        let out = step(&model.backward, &xs[t], &state, &grids)?;
        state = out.state;
        bw[t] = out.output;
    }
    Ok(concat(fw, bw))
}

/// Output of the interleaved schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct InterleavedOutput {
    pub features: Vec<Vec<f64>>,
    /// For each column, the 1-based round after which both directions'
    /// results for it exist. Round `r` runs `fw(r-1)` then `bw(C-r)`.
    pub availability: Vec<usize>,
    /// Single-direction cell evaluations issued on the shared datapath (2C).
    pub steps: usize,
}

impl InterleavedOutput {
    /// Earliest round at which the concatenator can emit a column, and that column.
    pub fn first_available(&self) -> Option<(usize, usize)> {
        self.availability
            .iter()
            .enumerate()
            .min_by_key(|&(t, &round)| (round, t))
            .map(|(t, &round)| (round, t))
    }
}

/// Same result as [`bilstm_forward`], computed on one cell datapath that
/// alternates directions: fw(0), bw(C-1), fw(1), bw(C-2), ...
pub fn interleaved_forward(
    model: &NetworkModel,
    columns: &[Vec<f64>],
    precision: &PrecisionConfig,
) -> Result<InterleavedOutput> {
    let grids = CellGrids::new(precision)?;
    let xs = prepare_columns(model, columns, &grids)?;
    let h = model.dims.hidden;
    let len = xs.len();

    let mut fw = vec![Vec::new(); len];
    let mut bw = vec![Vec::new(); len];
    let mut fw_done = vec![0usize; len];
    let mut bw_done = vec![0usize; len];
    let mut fw_state = LstmState::zeros(h);
    let mut bw_state = LstmState::zeros(h);
    let mut steps = 0;

    for round in 1..=len {
        let t_fw = round - 1;
        let out = step(&model.forward, &xs[t_fw], &fw_state, &grids)?;
        fw_state = out.state;
        fw[t_fw] = out.output;
        fw_done[t_fw] = round;
        steps += 1;

        let t_bw = len - round;
        let out = step(&model.backward, &xs[t_bw], &bw_state, &grids)?;
        bw_state = out.state;
        bw[t_bw] = out.output;
        bw_done[t_bw] = round;
        steps += 1;
    }

    let availability = fw_done
        .iter()
        .zip(&bw_done)
        .map(|(a, b)| *a.max(b))
        .collect();
    Ok(InterleavedOutput {
        features: concat(fw, bw),
        availability,
        steps,
    })
}

/// Per-feature batch-norm statistics over the 2H concatenated features.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(gamma: Vec<f64>, beta: Vec<f64>, mean: Vec<f64>, var: Vec<f64>, eps: f64) -> Result<Self> {
        let n = gamma.len();
        for (what, v) in [("beta", &beta), ("mean", &mean), ("var", &var)] {
            if v.len() != n {
                return Err(Error::dimension(format!("batch-norm {what}"), n, v.len()));
            }
        }
        Ok(Self {
            gamma,
            beta,
            mean,
            var,
            eps,
        })
    }

    pub fn identity(features: usize) -> Self {
        Self {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            mean: vec![0.0; features],
            var: vec![1.0; features],
            eps: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(j, v)| {
                self.gamma[j] * (v - self.mean[j]) / (self.var[j] + self.eps).sqrt() + self.beta[j]
            })
            .collect()
    }
}

/// Affine output layer, K x 2H. No softmax follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputLayerParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl OutputLayerParams {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::dimension("output bias", weights.rows(), bias.len()));
        }
        Ok(Self { weights, bias })
    }

    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn features(&self) -> usize {
        self.weights.cols()
    }

    /// Weights onto `spec`; the bias stays in full precision.
    pub fn quantize_weights(&self, spec: &QuantSpec) -> Result<Self> {
        Ok(Self {
            weights: self.weights.map_quantized(&QuantPolicy::Grid(*spec))?,
            bias: self.bias.clone(),
        })
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.features() {
            return Err(Error::dimension("output layer input", self.features(), z.len()));
        }
        Ok((0..self.classes())
            .map(|k| crate::matrix::dot(self.weights.row(k), z) + self.bias[k])
            .collect())
    }
}

/// Folds `BN` into the following fully connected layer so that
/// `FC(BN(z)) = folded(z)`. The result is not quantized.
pub fn fold_batchnorm(
    fc_weights: &Matrix,
    fc_bias: &[f64],
    bn: &BatchNorm,
) -> Result<OutputLayerParams> {
    if bn.len() != fc_weights.cols() {
        return Err(Error::dimension("batch-norm features", fc_weights.cols(), bn.len()));
    }
    if fc_bias.len() != fc_weights.rows() {
        return Err(Error::dimension("fc bias", fc_weights.rows(), fc_bias.len()));
    }
    let mut scale = Vec::with_capacity(bn.len());
    let mut shift = Vec::with_capacity(bn.len());
    for j in 0..bn.len() {
        let denom = bn.var[j] + bn.eps;
        if !(denom > 0.0) {
            return Err(Error::Fold {
                feature: j,
                value: denom,
            });
        }
        let s = bn.gamma[j] / denom.sqrt();
        scale.push(s);
        shift.push(bn.beta[j] - bn.mean[j] * s);
    }
    let weights = Matrix::from_fn(fc_weights.rows(), fc_weights.cols(), |k, j| {
        fc_weights.get(k, j) * scale[j]
    });
    let bias = (0..fc_weights.rows())
        .map(|k| fc_bias[k] + crate::matrix::dot(fc_weights.row(k), &shift))
        .collect();
    OutputLayerParams::new(weights, bias)
}

pub fn output_layer(features: &[Vec<f64>], out: &OutputLayerParams) -> Result<Vec<Vec<f64>>> {
    features.iter().map(|z| out.apply(z)).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// CTC best path: merge runs of the same label, then drop blanks.
pub fn collapse_best_path(labels: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = None;
    for &label in labels {
        if Some(label) != last && label != blank {
            out.push(label);
        }
        last = Some(label);
    }
    out
}

pub fn greedy_decode(logits: &[Vec<f64>], alphabet: &Alphabet) -> Result<String> {
    let mut labels = Vec::with_capacity(logits.len());
    for (t, column) in logits.iter().enumerate() {
        if column.len() != alphabet.len() {
            return Err(Error::Dimension {
                what: format!("logits column {t}"),
                expected: alphabet.len(),
                got: column.len(),
            });
        }
        labels.push(argmax(column));
    }
    Ok(collapse_best_path(&labels, alphabet.blank_index())
        .into_iter()
        .map(|i| alphabet.symbol(i))
        .collect())
}

pub fn infer(
    model: &NetworkModel,
    columns: &[Vec<f64>],
    precision: &PrecisionConfig,
) -> Result<String> {
    let features = bilstm_forward(model, columns, precision)?;
    let logits = output_layer(&features, &model.output)?;
    greedy_decode(&logits, &model.alphabet)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p16() -> PrecisionConfig {
        PrecisionConfig::uniform(16).unwrap()
    }

    fn one_cell(bias_f: f64) -> LstmDirectionParams {
        let mut p = LstmDirectionParams::zeros(1, 1);
        p.forget_gate.bias[0] = bias_f;
        p
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let p = LstmDirectionParams::zeros(3, 2);
        let prec = "4/4/4".parse().unwrap();
        let out = lstm_cell_step(&p, &[0.5, 0.25], &LstmState::zeros(3), &prec).unwrap();
        assert_eq!(out.output, vec![0.0; 3]);
        assert_eq!(out.state, LstmState::zeros(3));
    }

    #[test]
    fn open_forget_gate_preserves_state() {
        // Zero input and zero y', large forget bias: c = q(sigmoid(b_f)) * c'.
        let prec = p16();
        let gate = prec.gate_spec().unwrap();
        let prev = LstmState {
            y: vec![0.0],
            c: vec![0.75],
        };
        let out = lstm_cell_step(&one_cell(20.0), &[0.0], &prev, &prec).unwrap();
        let f = gate.quantize(sigmoid(20.0)).unwrap();
        // i = q(0.5), I = q(tanh(0)) = 0
        let expected = prec.cell_spec().unwrap().quantize(f * 0.75).unwrap();
        assert_eq!(out.state.c[0], expected);
        assert!((out.state.c[0] - 0.75).abs() < 1e-4);
    }

    #[test]
    fn shape_errors() {
        let p = LstmDirectionParams::zeros(2, 3);
        let prec = "2/2/2".parse().unwrap();
        assert!(matches!(
            lstm_cell_step(&p, &[0.0; 2], &LstmState::zeros(2), &prec),
            Err(Error::Dimension { .. })
        ));
        assert!(lstm_cell_step(&p, &[0.0; 3], &LstmState::zeros(3), &prec).is_err());
    }

    #[test]
    fn rq_and_aq_outputs_differ_only_when_configured() {
        let mut p = LstmDirectionParams::zeros(1, 1);
        p.cell_input.bias[0] = 0.9;
        p.output_gate.bias[0] = 2.0;
        p.input_gate.bias[0] = 2.0;
        let same: PrecisionConfig = "4/4/4".parse().unwrap();
        let out = lstm_cell_step(&p, &[0.0], &LstmState::zeros(1), &same).unwrap();
        assert_eq!(out.output, out.state.y);
        let split: PrecisionConfig = "4/4/4/1".parse().unwrap();
        let out = lstm_cell_step(&p, &[0.0], &LstmState::zeros(1), &split).unwrap();
        assert_eq!(out.state.y, vec![1.0]);
        assert!(out.output[0] > 0.0 && out.output[0] < 1.0);
    }

    #[test]
    fn fold_examples() {
        let w = Matrix::from_vec(2, 2, vec![0.5, -0.25, 1.0, 2.0]).unwrap();
        let b = vec![0.1, -0.2];
        let id = fold_batchnorm(&w, &b, &BatchNorm::identity(2)).unwrap();
        assert_eq!(id.weights, w);
        assert_eq!(id.bias, b);

        let bn = BatchNorm::new(vec![2.0; 2], vec![0.0; 2], vec![0.0; 2], vec![3.0; 2], 1.0).unwrap();
        let folded = fold_batchnorm(&w, &b, &bn).unwrap();
        assert_eq!(folded.weights, w);

        let bad = BatchNorm::new(vec![1.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0, -1.0], 0.5).unwrap();
        assert!(matches!(
            fold_batchnorm(&w, &b, &bad),
            Err(Error::Fold { feature: 1, .. })
        ));
    }

    #[test]
    fn output_layer_cases() {
        let zero = OutputLayerParams::new(Matrix::zeros(3, 2), vec![1.0, 2.0, 3.0]).unwrap();
        let logits = output_layer(&[vec![0.5, -0.5], vec![0.25, 0.0]], &zero).unwrap();
        assert_eq!(logits, vec![vec![1.0, 2.0, 3.0]; 2]);

        let proj = OutputLayerParams::new(Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(), vec![0.0]).unwrap();
        assert_eq!(output_layer(&[vec![0.375, 0.5]], &proj).unwrap(), vec![vec![0.375]]);
        assert!(output_layer(&[vec![0.0; 3]], &proj).is_err());
    }

    #[test]
    fn collapse_rules() {
        // blank = 0, a = 1, b = 2
        assert_eq!(collapse_best_path(&[1, 1, 0, 2], 0), vec![1, 2]);
        assert_eq!(collapse_best_path(&[0, 0, 0], 0), Vec::<usize>::new());
        assert_eq!(collapse_best_path(&[1, 0, 1], 0), vec![1, 1]);
        assert_eq!(collapse_best_path(&[], 0), Vec::<usize>::new());
    }

    #[test]
    fn decode_from_logits() {
        let alphabet = Alphabet::new(vec!["_".into(), "a".into(), "b".into()]).unwrap();
        let col = |k: usize| {
            let mut v = vec![0.0; 3];
            v[k] = 1.0;
            v
        };
        let logits = vec![col(1), col(1), col(0), col(2)];
        assert_eq!(greedy_decode(&logits, &alphabet).unwrap(), "ab");
        assert_eq!(greedy_decode(&[], &alphabet).unwrap(), "");
        assert!(greedy_decode(&[vec![0.0; 2]], &alphabet).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }
}
