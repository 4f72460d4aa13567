use rand::Rng;

use super::tape::{log_softmax_rows, Tape, Var};
use super::{NnError, Tensor};

/// GRU cell weights in row-vector convention (`x · W`): `w_*` are
/// `[input, hidden]`, `u_*` are `[hidden, hidden]`, biases `[1, hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w_z: Tensor::zeros(input, hidden),
            w_r: Tensor::zeros(input, hidden),
            w_h: Tensor::zeros(input, hidden),
            u_z: Tensor::zeros(hidden, hidden),
            u_r: Tensor::zeros(hidden, hidden),
            u_h: Tensor::zeros(hidden, hidden),
            b_z: Tensor::zeros(1, hidden),
            b_r: Tensor::zeros(1, hidden),
            b_h: Tensor::zeros(1, hidden),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.u_z.rows()
    }

    /// Registers the nine arrays on `tape` as constants.
    pub fn constants(&self, tape: &Tape) -> GruVars {
        GruVars {
            w_z: tape.constant(self.w_z.clone()),
            w_r: tape.constant(self.w_r.clone()),
            w_h: tape.constant(self.w_h.clone()),
            u_z: tape.constant(self.u_z.clone()),
            u_r: tape.constant(self.u_r.clone()),
            u_h: tape.constant(self.u_h.clone()),
            b_z: tape.constant(self.b_z.clone()),
            b_r: tape.constant(self.b_r.clone()),
            b_h: tape.constant(self.b_h.clone()),
        }
    }
}

/// GRU weights already placed on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_h: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
}

fn mismatch(op: &'static str, detail: String) -> NnError {
    NnError::ShapeMismatch { op, detail }
}

impl GruVars {
    pub fn check(&self, tape: &Tape) -> Result<(usize, usize), NnError> {
        let (input, hidden) = tape.shape(self.w_z);
        for (name, v, want) in [
            ("w_r", self.w_r, (input, hidden)),
            ("w_h", self.w_h, (input, hidden)),
            ("u_z", self.u_z, (hidden, hidden)),
            ("u_r", self.u_r, (hidden, hidden)),
            ("u_h", self.u_h, (hidden, hidden)),
            ("b_z", self.b_z, (1, hidden)),
            ("b_r", self.b_r, (1, hidden)),
            ("b_h", self.b_h, (1, hidden)),
        ] {
            let got = tape.shape(v);
            if got != want {
                return Err(mismatch("gru_step", format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        Ok((input, hidden))
    }
}

/// One GRU step on a batch: `x: [B, input]`, `h: [B, hidden]`.
///
/// ```text
/// z  = σ(x W_z + h U_z + b_z)
/// r  = σ(x W_r + h U_r + b_r)
/// h̃  = tanh(x W_h + (r ⊙ h) U_h + b_h)
/// h' = (1 - z) ⊙ h̃ + z ⊙ h
/// ```
pub fn gru_step(tape: &Tape, p: &GruVars, x: Var, h: Var) -> Result<Var, NnError> {
    let (input, hidden) = p.check(tape)?;
    let (bx, ix) = tape.shape(x);
    let (bh, ih) = tape.shape(h);
    if ix != input || ih != hidden || bx != bh {
        return Err(mismatch(
            "gru_step",
            format!("x is [{bx}, {ix}], h is [{bh}, {ih}], cell is {input}->{hidden}"),
        ));
    }
    Ok(gru_step_unchecked(tape, p, x, h))
}

pub(crate) fn gru_step_unchecked(tape: &Tape, p: &GruVars, x: Var, h: Var) -> Var {
    let gate = |w: Var, u: Var, b: Var, hh: Var| {
        let xw = tape.matmul(x, w);
        let hu = tape.matmul(hh, u);
        let s = tape.add(xw, hu);
        tape.add_row(s, b)
    };
    let z = gate(p.w_z, p.u_z, p.b_z, h);
    let z = tape.sigmoid(z);
    let r = gate(p.w_r, p.u_r, p.b_r, h);
    let r = tape.sigmoid(r);
    let rh = tape.mul(r, h);
    let cand = gate(p.w_h, p.u_h, p.b_h, rh);
    let cand = tape.tanh(cand);
    let keep = tape.mul(z, h);
    let one_minus_z = tape.one_minus(z);
    let fresh = tape.mul(one_minus_z, cand);
    tape.add(fresh, keep)
}

/// [`gru_step`] on plain tensors.
pub fn gru_cell(p: &GruParams, x: &Tensor, h: &Tensor) -> Result<Tensor, NnError> {
    let tape = Tape::new();
    let vars = p.constants(&tape);
    let xv = tape.constant(x.clone());
    let hv = tape.constant(h.clone());
    let out = gru_step(&tape, &vars, xv, hv)?;
    tape.check()?;
    let v = tape.value(out).clone();
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, tape: &Tape, v: Var) -> Var {
        match self {
            Activation::Identity => v,
            Activation::Tanh => tape.tanh(v),
            Activation::Relu => tape.relu(v),
        }
    }
}

/// One affine layer `act(x · W + b)` with `W: [in, out]`, `b: [1, out]`.
#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub w: Var,
    pub b: Var,
    pub act: Activation,
}

pub fn dense(tape: &Tape, layer: &DenseVars, x: Var) -> Var {
    let xw = tape.matmul(x, layer.w);
    let y = tape.add_row(xw, layer.b);
    layer.act.apply(tape, y)
}

pub fn ffn_forward(tape: &Tape, layers: &[DenseVars], x: Var) -> Result<Var, NnError> {
    let mut width = tape.shape(x).1;
    for (i, l) in layers.iter().enumerate() {
        let (wi, wo) = tape.shape(l.w);
        let b = tape.shape(l.b);
        if wi != width || b != (1, wo) {
            return Err(mismatch(
                "ffn_forward",
                format!("layer {i}: input width {width}, weight [{wi}, {wo}], bias {b:?}"),
            ));
        }
        width = wo;
    }
    let mut h = x;
    for l in layers {
        h = dense(tape, l, h);
    }
    Ok(h)
}

/// [`ffn_forward`] on plain tensors.
pub fn ffn_apply(layers: &[(Tensor, Tensor, Activation)], x: &Tensor) -> Result<Tensor, NnError> {
    let tape = Tape::new();
    let vars: Vec<DenseVars> = layers
        .iter()
        .map(|(w, b, act)| DenseVars {
            w: tape.constant(w.clone()),
            b: tape.constant(b.clone()),
            act: *act,
        })
        .collect();
    let xv = tape.constant(x.clone());
    let out = ffn_forward(&tape, &vars, xv)?;
    tape.check()?;
    let v = tape.value(out).clone();
    Ok(v)
}

/// Row-wise log-softmax of a plain tensor.
pub fn log_softmax(logits: &Tensor) -> Tensor {
    log_softmax_rows(logits)
}

/// Inverted dropout: each entry is zeroed with probability `p` and survivors
/// are scaled by `1 / (1 - p)`.
pub fn dropout<R: Rng + ?Sized>(tape: &Tape, x: Var, p: f64, rng: &mut R) -> Var {
    if p <= 0.0 {
        return x;
    }
    let (r, c) = tape.shape(x);
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..r * c)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let m = tape.constant(Tensor::matrix(r, c, mask));
    tape.mul(x, m)
}
