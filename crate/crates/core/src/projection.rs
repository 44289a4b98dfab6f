//! Per-modality projection networks.
//!
//! Each modality is projected by a 2-layer fully connected network with tanh
//! after both layers, inverted dropout on the first hidden layer, and an
//! ℓ2-normalizing head, so that similarity in the shared space is a dot
//! product of unit vectors. Gradients are hand-derived and exact, including
//! the full normalization Jacobian `∂(z/‖z‖)/∂z = (I − ẑẑᵀ)/‖z‖`; this
//! exactness is what makes the finite-difference checks in the test suite
//! meaningful.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{l2_normalize, Matrix, Rng, Vector, NORM_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A two-layer tanh MLP with an ℓ2-normalizing output head.
#[derive(Debug, Clone)]
pub struct ProjectionNetwork {
    /// hidden_dim × input_dim
    pub w1: Matrix,
    pub b1: Vector,
    /// out_dim × hidden_dim
    pub w2: Matrix,
    pub b2: Vector,
    pub dropout_p: f64,
}

impl ProjectionNetwork {
    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.rows()
    }

    /// Glorot-uniform weights (`[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`
    /// per layer), zero biases. Deterministic per seed.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        dropout_p: f64,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidConfig(
                "network dimensions must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::InvalidConfig(format!(
                "dropout_p must lie in [0, 1), got {dropout_p}"
            )));
        }
        let mut rng = Rng::from_seed(seed);
        let glorot = |rows: usize, cols: usize, rng: &mut Rng| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| rng.uniform(-a, a))
        };
        Ok(ProjectionNetwork {
            w1: glorot(hidden_dim, input_dim, &mut rng),
            b1: Vector::zeros(hidden_dim),
            w2: glorot(out_dim, hidden_dim, &mut rng),
            b2: Vector::zeros(out_dim),
            dropout_p,
        })
    }

    /// Full forward pass keeping every intermediate needed by [`Self::backward`].
    ///
    /// In train mode the first hidden layer is multiplied by an inverted
    /// dropout mask (kept units scaled by `1/(1-p)`), so eval mode needs no
    /// rescaling. Eval mode never touches the generator.
    pub fn forward(&self, x: &Vector, mode: Mode, rng: &mut Rng) -> Result<ForwardTrace> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "projection input",
                left: x.dim(),
                right: self.input_dim(),
            });
        }
        let mut hidden_pre = self.w1.matvec(x);
        hidden_pre.add_scaled(1.0, &self.b1);
        let hidden_act = Vector::from_vec(hidden_pre.iter().map(|v| v.tanh()).collect());

        let dropout_mask = match mode {
            Mode::Train if self.dropout_p > 0.0 => {
                let keep = 1.0 - self.dropout_p;
                Vector::from_vec(
                    (0..self.hidden_dim())
                        .map(|_| if rng.next_f64() < keep { 1.0 / keep } else { 0.0 })
                        .collect(),
                )
            }
            _ => Vector::from_vec(vec![1.0; self.hidden_dim()]),
        };
        let hidden_dropped = Vector::from_vec(
            hidden_act
                .iter()
                .zip(dropout_mask.iter())
                .map(|(h, m)| h * m)
                .collect(),
        );

        let mut out_pre = self.w2.matvec(&hidden_dropped);
        out_pre.add_scaled(1.0, &self.b2);
        let out_act = Vector::from_vec(out_pre.iter().map(|v| v.tanh()).collect());

        let out_norm = out_act.norm();
        if out_norm < NORM_EPSILON {
            return Err(Error::DegenerateVector {
                context: "projection output",
                norm: out_norm,
            });
        }
        let output = l2_normalize(&out_act)?;

        Ok(ForwardTrace {
            input: x.clone(),
            hidden_pre,
            hidden_act,
            dropout_mask,
            hidden_dropped,
            out_pre,
            out_act,
            out_norm,
            output,
        })
    }

    /// Eval-mode projection without trace bookkeeping.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        // No draws happen in eval mode, so a throwaway generator is fine.
        let mut rng = Rng::from_seed(0);
        Ok(self.forward(x, Mode::Eval, &mut rng)?.output)
    }

    /// Exact gradients of a scalar loss w.r.t. all parameters, given the loss
    /// gradient at the normalized output.
    pub fn backward(&self, trace: &ForwardTrace, grad_output: &Vector) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_accumulate(trace, grad_output, &mut grads)?;
        Ok(grads)
    }

    /// As [`Self::backward`] but accumulating into an existing buffer; the
    /// trainer reuses one buffer per batch instead of allocating per instance.
    pub fn backward_accumulate(
        &self,
        trace: &ForwardTrace,
        grad_output: &Vector,
        grads: &mut Gradients,
    ) -> Result<()> {
        if grad_output.dim() != self.out_dim() {
            return Err(Error::ShapeMismatch {
                context: "backward grad_output",
                expected: format!("{}", self.out_dim()),
                got: format!("{}", grad_output.dim()),
            });
        }
        if trace.input.dim() != self.input_dim() || trace.hidden_act.dim() != self.hidden_dim() {
            return Err(Error::ShapeMismatch {
                context: "backward trace",
                expected: format!("{}→{}", self.input_dim(), self.hidden_dim()),
                got: format!("{}→{}", trace.input.dim(), trace.hidden_act.dim()),
            });
        }

        // Through the normalization head: (I − ẑẑᵀ)/‖z‖ applied to the
        // upstream gradient (the Jacobian is symmetric).
        let radial = trace.output.dot(grad_output);
        let mut grad_out_act = grad_output.clone();
        grad_out_act.add_scaled(-radial, &trace.output);
        grad_out_act.scale(1.0 / trace.out_norm);

        // Through the second tanh.
        let grad_out_pre = Vector::from_vec(
            grad_out_act
                .iter()
                .zip(trace.out_act.iter())
                .map(|(g, a)| g * (1.0 - a * a))
                .collect(),
        );

        grads.w2
            .add_outer_scaled(1.0, &grad_out_pre, &trace.hidden_dropped);
        grads.b2.add_scaled(1.0, &grad_out_pre);

        // Back into the hidden layer, through the dropout mask and first tanh.
        let grad_hidden_dropped = self.w2.matvec_transpose(&grad_out_pre);
        let grad_hidden_pre = Vector::from_vec(
            grad_hidden_dropped
                .iter()
                .zip(trace.dropout_mask.iter())
                .zip(trace.hidden_act.iter())
                .map(|((g, m), a)| g * m * (1.0 - a * a))
                .collect(),
        );

        grads.w1.add_outer_scaled(1.0, &grad_hidden_pre, &trace.input);
        grads.b1.add_scaled(1.0, &grad_hidden_pre);
        Ok(())
    }
}

/// Intermediates cached by a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Vector,
    pub hidden_pre: Vector,
    pub hidden_act: Vector,
    /// Entries are `0` or `1/(1-p)`; all ones in eval mode.
    pub dropout_mask: Vector,
    pub hidden_dropped: Vector,
    pub out_pre: Vector,
    /// Pre-normalization output `z`.
    pub out_act: Vector,
    /// `‖z‖₂`
    pub out_norm: f64,
    /// `z / (‖z‖₂ + ε)`, unit norm.
    pub output: Vector,
}

/// Parameter-shaped gradient (or velocity) buffers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Matrix,
    pub b1: Vector,
    pub w2: Matrix,
    pub b2: Vector,
}

impl Gradients {
    pub fn zeros_like(net: &ProjectionNetwork) -> Self {
        Gradients {
            w1: Matrix::zeros(net.hidden_dim(), net.input_dim()),
            b1: Vector::zeros(net.hidden_dim()),
            w2: Matrix::zeros(net.out_dim(), net.hidden_dim()),
            b2: Vector::zeros(net.out_dim()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite() && self.b1.is_finite() && self.w2.is_finite() && self.b2.is_finite()
    }
}

/// Checkpoint metadata stored next to the raw weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub d_v: usize,
    pub d_t: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub dropout_p: f64,
    pub seed: u64,
    pub epoch: usize,
    pub categories: Vec<String>,
}

fn push_tensor(buf: &mut Vec<u8>, values: &[f64]) {
    for &x in values {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

/// Writes `model.json` plus `weights.f32` (W1, b1, W2, b2 for the visual net
/// followed by the textual net, little-endian float32).
pub fn save_checkpoint(
    dir: &Path,
    net_v: &ProjectionNetwork,
    net_t: &ProjectionNetwork,
    meta: &CheckpointMeta,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta_path = dir.join("model.json");
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::Json {
        path: meta_path.clone(),
        source: e,
    })?;
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;

    let mut buf = Vec::new();
    for net in [net_v, net_t] {
        push_tensor(&mut buf, net.w1.as_slice());
        push_tensor(&mut buf, net.b1.as_slice());
        push_tensor(&mut buf, net.w2.as_slice());
        push_tensor(&mut buf, net.b2.as_slice());
    }
    let weights_path = dir.join("weights.f32");
    fs::write(&weights_path, buf).map_err(|e| Error::io(&weights_path, e))
}

/// Loads a checkpoint directory written by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<(ProjectionNetwork, ProjectionNetwork, CheckpointMeta)> {
    let meta_path = dir.join("model.json");
    let raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&raw).map_err(|e| Error::Json {
        path: meta_path.clone(),
        source: e,
    })?;

    let weights_path = dir.join("weights.f32");
    let bytes = fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;
    let tower = |input_dim: usize| {
        meta.hidden_dim * input_dim + meta.hidden_dim + meta.out_dim * meta.hidden_dim + meta.out_dim
    };
    let expected = ((tower(meta.d_v) + tower(meta.d_t)) * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::FileShape {
            path: weights_path,
            expected,
            found: bytes.len() as u64,
        });
    }

    let mut offset = 0usize;
    let mut take = |count: usize| -> Vec<f64> {
        let out = bytes[offset..offset + count * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        offset += count * 4;
        out
    };
    let mut load_net = |input_dim: usize| -> ProjectionNetwork {
        let w1_data = take(meta.hidden_dim * input_dim);
        let b1 = take(meta.hidden_dim);
        let w2_data = take(meta.out_dim * meta.hidden_dim);
        let b2 = take(meta.out_dim);
        let mut w1_iter = w1_data.into_iter();
        let w1 = Matrix::from_fn(meta.hidden_dim, input_dim, |_, _| w1_iter.next().unwrap());
        let mut w2_iter = w2_data.into_iter();
        let w2 = Matrix::from_fn(meta.out_dim, meta.hidden_dim, |_, _| w2_iter.next().unwrap());
        ProjectionNetwork {
            w1,
            b1: Vector::from_vec(b1),
            w2,
            b2: Vector::from_vec(b2),
            dropout_p: meta.dropout_p,
        }
    };
    let net_v = load_net(meta.d_v);
    let net_t = load_net(meta.d_t);
    Ok((net_v, net_t, meta))
}
