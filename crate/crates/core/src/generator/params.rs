use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::nn::{Activation, DenseVars, GruVars, Tape, Tensor, Var};

/// Parameter-name prefixes of the four blocks.
pub const EXP_ENCODER: &str = "exp_enc.";
pub const EXP_DECODER: &str = "exp_dec.";
pub const MOL_ENCODER: &str = "mol_enc.";
pub const MOL_DECODER: &str = "mol_dec.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct DenseSlots {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct GruSlots([usize; 9]);

/// Slot indices of every named array, derived from a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub exp_enc: Vec<DenseSlots>,
    pub exp_mu: DenseSlots,
    pub exp_logvar: DenseSlots,
    pub exp_dec: Vec<DenseSlots>,
    pub enc_embed: usize,
    pub enc_fwd: Vec<GruSlots>,
    pub enc_bwd: Vec<GruSlots>,
    pub enc_mu: DenseSlots,
    pub enc_logvar: DenseSlots,
    pub dec_embed: usize,
    pub dec_init: Vec<DenseSlots>,
    pub dec_gru: Vec<GruSlots>,
    pub dec_out: DenseSlots,
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize) -> usize {
        self.names.push(name);
        self.shapes.push((rows, cols));
        self.names.len() - 1
    }

    fn dense(&mut self, prefix: &str, rows: usize, cols: usize) -> DenseSlots {
        DenseSlots {
            w: self.add(format!("{prefix}.w"), rows, cols),
            b: self.add(format!("{prefix}.b"), 1, cols),
        }
    }

    fn gru(&mut self, prefix: &str, input: usize, hidden: usize) -> GruSlots {
        let mut s = [0; 9];
        for (k, gate) in ["z", "r", "h"].iter().enumerate() {
            s[k] = self.add(format!("{prefix}.w_{gate}"), input, hidden);
            s[3 + k] = self.add(format!("{prefix}.u_{gate}"), hidden, hidden);
            s[6 + k] = self.add(format!("{prefix}.b_{gate}"), 1, hidden);
        }
        GruSlots(s)
    }
}

pub(crate) fn build_layout(c: &ModelConfig) -> (Layout, Vec<String>, Vec<(usize, usize)>) {
    let mut b = Builder {
        names: Vec::new(),
        shapes: Vec::new(),
    };
    let mut widths = vec![c.gene_count];
    widths.extend(&c.exp_hidden);
    let exp_enc = (0..c.exp_hidden.len())
        .map(|i| b.dense(&format!("exp_enc.l{i}"), widths[i], widths[i + 1]))
        .collect();
    let top = *widths.last().expect("non-empty");
    let exp_mu = b.dense("exp_enc.mu", top, c.latent_dim);
    let exp_logvar = b.dense("exp_enc.logvar", top, c.latent_dim);
    let mut dec_widths = vec![c.latent_dim];
    dec_widths.extend(c.exp_hidden.iter().rev());
    dec_widths.push(c.gene_count);
    let exp_dec = (0..dec_widths.len() - 1)
        .map(|i| b.dense(&format!("exp_dec.l{i}"), dec_widths[i], dec_widths[i + 1]))
        .collect();

    let enc_embed = b.add("mol_enc.embed".into(), c.vocab_size, c.embed_dim);
    let mut enc_fwd = Vec::new();
    let mut enc_bwd = Vec::new();
    for l in 0..c.layers {
        let input = if l == 0 { c.embed_dim } else { 2 * c.hidden };
        enc_fwd.push(b.gru(&format!("mol_enc.fwd{l}"), input, c.hidden));
        enc_bwd.push(b.gru(&format!("mol_enc.bwd{l}"), input, c.hidden));
    }
    let enc_mu = b.dense("mol_enc.mu", 2 * c.hidden, c.latent_dim);
    let enc_logvar = b.dense("mol_enc.logvar", 2 * c.hidden, c.latent_dim);

    let dec_embed = b.add("mol_dec.embed".into(), c.vocab_size, c.embed_dim);
    let dec_init = (0..c.layers)
        .map(|l| b.dense(&format!("mol_dec.init{l}"), c.latent_dim, c.hidden))
        .collect();
    let dec_gru = (0..c.layers)
        .map(|l| {
            let input = if l == 0 { c.embed_dim + c.latent_dim } else { c.hidden };
            b.gru(&format!("mol_dec.gru{l}"), input, c.hidden)
        })
        .collect();
    let dec_out = b.dense("mol_dec.out", c.hidden, c.output_size());
    let layout = Layout {
        exp_enc,
        exp_mu,
        exp_logvar,
        exp_dec,
        enc_embed,
        enc_fwd,
        enc_bwd,
        enc_mu,
        enc_logvar,
        dec_embed,
        dec_init,
        dec_gru,
        dec_out,
    };
    (layout, b.names, b.shapes)
}

/// Every learnable array of the expression VAE and the molecule VAE.
///
/// Prior and agent are two instances of this type with identical shapes.
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    layout: Layout,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.names == other.names && self.tensors == other.tensors
    }
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases and embeddings uniform in ±0.1,
    /// fully determined by `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let (layout, names, shapes) = build_layout(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = names
            .iter()
            .zip(&shapes)
            .map(|(name, &(r, c))| {
                if name.ends_with(".embed") {
                    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-0.1..0.1)).collect())
                } else if name.ends_with(".b") || name.contains(".b_") {
                    Tensor::zeros(r, c)
                } else {
                    let s = (6.0 / (r + c) as f64).sqrt();
                    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-s..s)).collect())
                }
            })
            .collect();
        ModelParams {
            config: config.clone(),
            names,
            tensors,
            layout,
        }
    }

    /// Rebuilds parameters from named arrays, checking every name and shape
    /// against the layout implied by `config`.
    pub fn from_named(config: &ModelConfig, arrays: Vec<(String, Tensor)>) -> Result<Self, String> {
        let (layout, names, shapes) = build_layout(config);
        if arrays.len() != names.len() {
            return Err(format!("expected {} arrays, found {}", names.len(), arrays.len()));
        }
        let mut tensors = Vec::with_capacity(names.len());
        for ((name, t), (want, &(r, c))) in arrays.into_iter().zip(names.iter().zip(&shapes)) {
            if &name != want {
                return Err(format!("expected array `{want}`, found `{name}`"));
            }
            if t.shape() != [r, c] {
                return Err(format!("array `{name}` has shape {:?}, expected [{r}, {c}]", t.shape()));
            }
            tensors.push(t);
        }
        Ok(ModelParams {
            config: config.clone(),
            names,
            tensors,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors.iter().map(Tensor::zeros_like).collect()
    }

    /// `true` for arrays whose name starts with any of `prefixes`.
    pub fn mask(&self, prefixes: &[&str]) -> Vec<bool> {
        self.names
            .iter()
            .map(|n| prefixes.iter().any(|p| n.starts_with(p)))
            .collect()
    }

    /// The arrays of one block, in layout order.
    pub fn block(&self, prefix: &str) -> Vec<&Tensor> {
        self.names
            .iter()
            .zip(&self.tensors)
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t)
            .collect()
    }

    /// SHA-256 over the names, shapes and little-endian values of one block.
    pub fn block_sha256(&self, prefix: &str) -> String {
        let mut bytes = Vec::new();
        for (n, t) in self.names.iter().zip(&self.tensors).filter(|(n, _)| n.starts_with(prefix)) {
            bytes.extend_from_slice(n.as_bytes());
            for &d in t.shape() {
                bytes.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        crate::util::sha256_hex(&bytes)
    }
}

/// Lazily places parameter arrays on a tape, either as gradient-tracked
/// leaves or as constants.
pub(crate) struct Bound<'a> {
    pub tape: &'a Tape,
    pub params: &'a ModelParams,
    trainable: bool,
    vars: RefCell<Vec<Option<Var>>>,
}

impl<'a> Bound<'a> {
    pub fn trainable(tape: &'a Tape, params: &'a ModelParams) -> Self {
        Bound::new(tape, params, true)
    }

    pub fn frozen(tape: &'a Tape, params: &'a ModelParams) -> Self {
        Bound::new(tape, params, false)
    }

    fn new(tape: &'a Tape, params: &'a ModelParams, trainable: bool) -> Self {
        Bound {
            tape,
            params,
            trainable,
            vars: RefCell::new(vec![None; params.tensors.len()]),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.params.layout
    }

    pub fn var(&self, slot: usize) -> Var {
        if let Some(v) = self.vars.borrow()[slot] {
            return v;
        }
        let t = &self.params.tensors[slot];
        let v = if self.trainable {
            self.tape.param(slot, t)
        } else {
            self.tape.constant(t.clone())
        };
        self.vars.borrow_mut()[slot] = Some(v);
        v
    }

    pub fn dense(&self, s: DenseSlots, act: Activation) -> DenseVars {
        DenseVars {
            w: self.var(s.w),
            b: self.var(s.b),
            act,
        }
    }

    pub fn gru(&self, s: GruSlots) -> GruVars {
        let v = |k: usize| self.var(s.0[k]);
        GruVars {
            w_z: v(0),
            w_r: v(1),
            w_h: v(2),
            u_z: v(3),
            u_r: v(4),
            u_h: v(5),
            b_z: v(6),
            b_r: v(7),
            b_h: v(8),
        }
    }
}
