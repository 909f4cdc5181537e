//! LSTM recurrence and its exact backward pass.

use super::{LstmParams, Matrix, NnError};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activations of one direction over `len` timesteps, indexed by processing step.
pub(crate) struct LstmTrace {
    hidden: usize,
    len: usize,
    reversed: bool,
    /// Post-activation gates `[i, f, g, o]`, `len × 4h`.
    gates: Vec<f64>,
    cells: Vec<f64>,
    states: Vec<f64>,
}

impl LstmTrace {
    fn time_of(&self, step: usize) -> usize {
        if self.reversed {
            self.len - 1 - step
        } else {
            step
        }
    }

    /// Hidden state emitted for input row `t`.
    pub(crate) fn state_at(&self, t: usize) -> &[f64] {
        let step = self.time_of(t);
        &self.states[step * self.hidden..(step + 1) * self.hidden]
    }

    /// State after the final processing step: row `len-1` forward, row 0 reversed.
    pub(crate) fn last_state(&self) -> &[f64] {
        let h = self.hidden;
        &self.states[(self.len - 1) * h..self.len * h]
    }
}

/// Runs the recurrence over precomputed input pre-activations
/// `zx[t] = x_t · W_input + bias` (`len × 4h`, by time index).
pub(crate) fn recur(zx: &[f64], len: usize, w_rec: &Matrix, reversed: bool) -> LstmTrace {
    let h = w_rec.rows();
    let mut trace = LstmTrace {
        hidden: h,
        len,
        reversed,
        gates: vec![0.0; len * 4 * h],
        cells: vec![0.0; len * h],
        states: vec![0.0; len * h],
    };
    let mut z = vec![0.0; 4 * h];
    for step in 0..len {
        let t = trace.time_of(step);
        z.copy_from_slice(&zx[t * 4 * h..(t + 1) * 4 * h]);
        if step > 0 {
            let prev = &trace.states[(step - 1) * h..step * h];
            w_rec.vec_mul_acc(prev, &mut z);
        }
        let gates = &mut trace.gates[step * 4 * h..(step + 1) * 4 * h];
        for j in 0..h {
            gates[j] = sigmoid(z[j]);
            gates[h + j] = sigmoid(z[h + j]);
            gates[2 * h + j] = z[2 * h + j].tanh();
            gates[3 * h + j] = sigmoid(z[3 * h + j]);
        }
        for j in 0..h {
            let c_prev = if step > 0 { trace.cells[(step - 1) * h + j] } else { 0.0 };
            let c = gates[h + j] * c_prev + gates[j] * gates[2 * h + j];
            trace.cells[step * h + j] = c;
            trace.states[step * h + j] = gates[3 * h + j] * c.tanh();
        }
    }
    trace
}

/// Backpropagates through `trace`. `d_states` holds the upstream gradient of
/// each hidden state by processing step (`len × h`). Accumulates into
/// `d_w_rec` and returns the pre-activation gradients by time index (`len × 4h`).
pub(crate) fn recur_backward(
    trace: &LstmTrace,
    d_states: &[f64],
    w_rec: &Matrix,
    d_w_rec: &mut Matrix,
) -> Vec<f64> {
    let h = trace.hidden;
    let len = trace.len;
    let mut dzx = vec![0.0; len * 4 * h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for step in (0..len).rev() {
        let gates = &trace.gates[step * 4 * h..(step + 1) * 4 * h];
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let c = trace.cells[step * h + j];
            let c_prev = if step > 0 { trace.cells[(step - 1) * h + j] } else { 0.0 };
            let tc = c.tanh();
            let dh = d_states[step * h + j] + dh_next[j];
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * c_prev * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let t = trace.time_of(step);
        dzx[t * 4 * h..(t + 1) * 4 * h].copy_from_slice(&dz);
        dh_next.fill(0.0);
        if step > 0 {
            let prev = &trace.states[(step - 1) * h..step * h];
            d_w_rec.add_outer(prev, &dz);
            w_rec.mul_vec_acc(&dz, &mut dh_next);
        }
    }
    dzx
}

fn input_preactivations(x: &Matrix, p: &LstmParams, len: usize) -> Vec<f64> {
    let g = 4 * p.hidden();
    let mut zx = Vec::with_capacity(len * g);
    for t in 0..len {
        let start = zx.len();
        zx.extend_from_slice(&p.bias);
        p.w_input.vec_mul_acc(x.row(t), &mut zx[start..start + g]);
    }
    zx
}

fn check_input(x: &Matrix, p: &LstmParams) -> Result<(), NnError> {
    if x.cols() != p.input() {
        return Err(NnError::ShapeMismatch(format!(
            "input width {} but lstm expects {}",
            x.cols(),
            p.input()
        )));
    }
    if p.w_recurrent.shape() != (p.hidden(), 4 * p.hidden()) || p.bias.len() != 4 * p.hidden() || p.w_input.cols() != 4 * p.hidden() {
        return Err(NnError::ShapeMismatch("inconsistent lstm parameter blocks".into()));
    }
    Ok(())
}

/// Hidden states for every input row. With `reversed`, rows are consumed from
/// last to first; row `t` of the output still belongs to input row `t`.
pub fn lstm_forward(x: &Matrix, p: &LstmParams, reversed: bool) -> Result<Matrix, NnError> {
    check_input(x, p)?;
    let len = x.rows();
    let trace = recur(&input_preactivations(x, p, len), len, &p.w_recurrent, reversed);
    let h = p.hidden();
    let mut out = Matrix::zeros(len, h);
    for t in 0..len {
        out.row_mut(t).copy_from_slice(trace.state_at(t));
    }
    Ok(out)
}

/// Bidirectional pass over the first `valid_len` rows of `x`; later rows are
/// padding and get zero states. Returns per-row `[forward | backward]`
/// states and the pooled vector: the forward state at row `valid_len - 1`
/// followed by the backward state at row 0.
pub fn bilstm(
    x: &Matrix,
    fwd: &LstmParams,
    bwd: &LstmParams,
    valid_len: usize,
) -> Result<(Matrix, Vec<f64>), NnError> {
    check_input(x, fwd)?;
    check_input(x, bwd)?;
    if fwd.hidden() != bwd.hidden() {
        return Err(NnError::ShapeMismatch("direction widths differ".into()));
    }
    if valid_len > x.rows() {
        return Err(NnError::ShapeMismatch(format!(
            "valid length {valid_len} exceeds {} rows",
            x.rows()
        )));
    }
    let h = fwd.hidden();
    let mut out = Matrix::zeros(x.rows(), 2 * h);
    let mut pooled = vec![0.0; 2 * h];
    if valid_len == 0 {
        return Ok((out, pooled));
    }
    let f = recur(&input_preactivations(x, fwd, valid_len), valid_len, &fwd.w_recurrent, false);
    let b = recur(&input_preactivations(x, bwd, valid_len), valid_len, &bwd.w_recurrent, true);
    for t in 0..valid_len {
        let row = out.row_mut(t);
        row[..h].copy_from_slice(f.state_at(t));
        row[h..].copy_from_slice(b.state_at(t));
    }
    pooled[..h].copy_from_slice(f.last_state());
    pooled[h..].copy_from_slice(b.last_state());
    Ok((out, pooled))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_lstm(wx: [f64; 4], wh: [f64; 4], b: [f64; 4]) -> LstmParams {
        LstmParams {
            w_input: Matrix::from_vec(1, 4, wx.to_vec()).unwrap(),
            w_recurrent: Matrix::from_vec(1, 4, wh.to_vec()).unwrap(),
            bias: b.to_vec(),
        }
    }

    #[test]
    fn zero_parameters_give_zero_states() {
        let x = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![2.0, 2.0]]).unwrap();
        let p = LstmParams::zeros(2, 3);
        for rev in [false, true] {
            let out = lstm_forward(&x, &p, rev).unwrap();
            assert!(out.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_step_matches_hand_evaluation() {
        // x = 0.5; pre-activations i = 0.5*0.4+0.1 = 0.3, f = 0.5*(-0.2)+1 = 0.9,
        // g = 0.5*0.7-0.05 = 0.3, o = 0.5*0.9 = 0.45. With c_prev = 0:
        // c = sigmoid(0.3)*tanh(0.3) = 0.574442516811659 * 0.291312612451591
        //   = 0.167342350275671, h = sigmoid(0.45)*tanh(c)
        //   = 0.610639233949222 * 0.165797596295115 = 0.101242517192271.
        let p = scalar_lstm([0.4, -0.2, 0.7, 0.9], [0.3, 0.3, 0.3, 0.3], [0.1, 1.0, -0.05, 0.0]);
        let x = Matrix::from_vec(1, 1, vec![0.5]).unwrap();
        let out = lstm_forward(&x, &p, false).unwrap();
        assert!((out.get(0, 0) - 0.101242517192271).abs() < 1e-14, "{}", out.get(0, 0));
        assert_eq!(out, lstm_forward(&x, &p, true).unwrap());
    }

    #[test]
    fn reversed_output_is_aligned_to_input_rows() {
        let p = scalar_lstm([0.4, -0.2, 0.7, 0.9], [0.3, 0.1, -0.3, 0.2], [0.1, 1.0, -0.05, 0.0]);
        let x = Matrix::from_vec(3, 1, vec![0.5, -1.0, 2.0]).unwrap();
        let xr = Matrix::from_vec(3, 1, vec![2.0, -1.0, 0.5]).unwrap();
        let rev = lstm_forward(&x, &p, true).unwrap();
        let fwd_of_reversed = lstm_forward(&xr, &p, false).unwrap();
        for t in 0..3 {
            assert_eq!(rev.get(t, 0), fwd_of_reversed.get(2 - t, 0));
        }
    }

    #[test]
    fn shape_errors() {
        let p = LstmParams::zeros(2, 3);
        let x = Matrix::zeros(4, 5);
        assert!(matches!(lstm_forward(&x, &p, false), Err(NnError::ShapeMismatch(_))));
        let x = Matrix::zeros(4, 2);
        assert!(matches!(bilstm(&x, &p, &p, 5), Err(NnError::ShapeMismatch(_))));
    }

    #[test]
    fn bilstm_zero_and_empty() {
        let p = LstmParams::zeros(2, 3);
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let (_, pooled) = bilstm(&x, &p, &p, 2).unwrap();
        assert_eq!(pooled, vec![0.0; 6]);
        let (states, pooled) = bilstm(&x, &p, &p, 0).unwrap();
        assert_eq!(pooled, vec![0.0; 6]);
        assert_eq!(states.shape(), (2, 6));
    }
}
