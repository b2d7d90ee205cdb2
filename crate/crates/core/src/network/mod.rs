//! The point-forecast network.
//!
//! Pipeline per sequence: min-max scaled value + target flag + calendar
//! features are linearly projected into a 112-wide token, a stack of four
//! dilated causal convolutions (kernel 5, dilations 1/2/4/8, outputs
//! concatenated) lifts tokens to `d_model` and a position-wise combiner
//! mixes the temporal scales; the encoder applies pre-norm state-space
//! blocks; a second conv stack at width `d_model` and a linear decoder
//! produce one scaled point forecast per token.
//!
//! The 112-dim token layout is fixed: 16 dims from the value channel, 12
//! from the flag channel, 6 per calendar feature (14 features, 84 dims).

pub mod checkpoint;
pub mod scaler;
pub mod tokens;

pub use scaler::ScalerParams;
pub use tokens::{assemble_tokens, tokens_from_parts, TargetKind, TokenFlag, TokenInputs, TokenRecord};

use crate::autodiff::{GradStore, Tape, Var};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::ssm::SsdDims;
use crate::timefeatures::ENCODED_LEN;
use indexmap::IndexMap;
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Width of the assembled token embedding.
pub const TOKEN_WIDTH: usize = 112;
/// Dims the scaled value channel projects to.
pub const VALUE_PROJ: usize = 16;
/// Dims the flag channel projects to.
pub const FLAG_PROJ: usize = 12;
/// Dims each of the 14 calendar features projects to.
pub const CAL_PROJ_EACH: usize = 6;

const LN_EPS: f64 = 1e-5;

/// CNN or position-wise linear, for the embedding and the encoder-final
/// layer (the linear forms are the ablation arms).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerVariant {
    Cnn,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub expand: usize,
    pub n_state: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub conv_kernel: usize,
    pub conv_dilations: Vec<usize>,
    pub embedding: LayerVariant,
    pub encoder_final: LayerVariant,
    pub chunk_size: usize,
}

impl ModelConfig {
    /// Small configuration that trains on a CPU in minutes.
    pub fn desk() -> Self {
        ModelConfig {
            d_model: 64,
            expand: 2,
            n_state: 16,
            n_heads: 4,
            n_encoder_layers: 2,
            conv_kernel: 5,
            conv_dilations: vec![1, 2, 4, 8],
            embedding: LayerVariant::Cnn,
            encoder_final: LayerVariant::Cnn,
            chunk_size: 64,
        }
    }

    /// Full-scale configuration (~27M parameters).
    pub fn paper() -> Self {
        ModelConfig {
            d_model: 1024,
            expand: 2,
            n_state: 128,
            n_heads: 16,
            n_encoder_layers: 2,
            conv_kernel: 5,
            conv_dilations: vec![1, 2, 4, 8],
            embedding: LayerVariant::Cnn,
            encoder_final: LayerVariant::Cnn,
            chunk_size: 64,
        }
    }

    pub fn dims(&self) -> SsdDims {
        SsdDims {
            d_model: self.d_model,
            expand: self.expand,
            n_state: self.n_state,
            n_heads: self.n_heads,
        }
    }

    pub fn d_inner(&self) -> usize {
        self.d_model * self.expand
    }

    pub fn validate(&self) -> Result<()> {
        self.dims().validate()?;
        if self.n_encoder_layers == 0 {
            return Err(Error::config("need at least one encoder layer"));
        }
        if self.conv_dilations.is_empty() {
            return Err(Error::config("need at least one conv dilation"));
        }
        if self.d_model % self.conv_dilations.len() != 0 {
            return Err(Error::config(format!(
                "d_model {} not divisible by the {} conv branches",
                self.d_model,
                self.conv_dilations.len()
            )));
        }
        if self.chunk_size == 0 {
            return Err(Error::config("chunk size must be >= 1"));
        }
        Ok(())
    }

    /// Width of the in-projection output: x, gate, per-head B and C, and
    /// one decay logit per head.
    pub fn in_proj_width(&self) -> usize {
        2 * self.d_inner() + 2 * self.n_heads * self.n_state + self.n_heads
    }

    /// Receptive field of one conv stack in tokens.
    pub fn conv_receptive_field(&self) -> usize {
        1 + (self.conv_kernel - 1) * self.conv_dilations.iter().sum::<usize>()
    }

    /// Every learnable array: stable name and shape, derived from the
    /// config alone.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let di = self.d_inner();
        let k = self.conv_kernel;
        let branch = d / self.conv_dilations.len();
        let mut specs: Vec<(String, Vec<usize>)> = vec![
            ("embed.value.w".into(), vec![1, VALUE_PROJ]),
            ("embed.value.b".into(), vec![VALUE_PROJ]),
            ("embed.flag.w".into(), vec![2, FLAG_PROJ]),
            ("embed.flag.b".into(), vec![FLAG_PROJ]),
            ("embed.cal.w".into(), vec![ENCODED_LEN, CAL_PROJ_EACH]),
            ("embed.cal.b".into(), vec![ENCODED_LEN * CAL_PROJ_EACH]),
        ];
        let conv_stack = |specs: &mut Vec<(String, Vec<usize>)>, prefix: &str, c_in: usize| {
            for (i, _dil) in self.conv_dilations.iter().enumerate() {
                let cin = if i == 0 { c_in } else { branch };
                specs.push((format!("{prefix}.conv{i}.w"), vec![cin * k, branch]));
                specs.push((format!("{prefix}.conv{i}.b"), vec![branch]));
            }
            specs.push((format!("{prefix}.combine.w"), vec![d, d]));
            specs.push((format!("{prefix}.combine.b"), vec![d]));
        };
        match self.embedding {
            LayerVariant::Cnn => conv_stack(&mut specs, "embed", TOKEN_WIDTH),
            LayerVariant::Linear => {
                specs.push(("embed.linear.w".into(), vec![TOKEN_WIDTH, d]));
                specs.push(("embed.linear.b".into(), vec![d]));
            }
        }
        for layer in 0..self.n_encoder_layers {
            let p = format!("block{layer}");
            specs.push((format!("{p}.ln.gamma"), vec![d]));
            specs.push((format!("{p}.ln.beta"), vec![d]));
            specs.push((format!("{p}.in_proj.w"), vec![d, self.in_proj_width()]));
            specs.push((format!("{p}.a_log"), vec![self.n_heads]));
            specs.push((format!("{p}.dt_bias"), vec![self.n_heads]));
            specs.push((format!("{p}.norm.gamma"), vec![di]));
            specs.push((format!("{p}.out_proj.w"), vec![di, d]));
        }
        specs.push(("final.ln.gamma".into(), vec![d]));
        specs.push(("final.ln.beta".into(), vec![d]));
        match self.encoder_final {
            LayerVariant::Cnn => conv_stack(&mut specs, "final", d),
            LayerVariant::Linear => {
                specs.push(("final.linear.w".into(), vec![d, d]));
                specs.push(("final.linear.b".into(), vec![d]));
            }
        }
        specs.push(("decoder.w".into(), vec![d, 1]));
        specs.push(("decoder.b".into(), vec![1]));
        specs
    }

    pub fn param_count(&self) -> usize {
        self.param_specs()
            .iter()
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum()
    }
}

/// All learnable arrays keyed by the stable name hierarchy.
#[derive(Debug, Clone)]
pub struct ModelParams<F: Real> {
    pub arrays: IndexMap<String, ArrayD<F>>,
}

impl<F: Real> ModelParams<F> {
    /// Fresh parameters: fan-in scaled uniform projections, unit norms,
    /// decay rates log-spaced over [1, 8] and step-size biases matching a
    /// softplus output log-uniform in [1e-3, 0.1].
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Self {
        let mut arrays = IndexMap::new();
        for (name, shape) in config.param_specs() {
            let arr = if name.ends_with(".b") || name.ends_with("ln.beta") {
                ArrayD::zeros(IxDyn(&shape))
            } else if name.ends_with("ln.gamma") || name.ends_with("norm.gamma") {
                ArrayD::from_elem(IxDyn(&shape), F::one())
            } else if name.ends_with("a_log") {
                ArrayD::from_shape_fn(IxDyn(&shape), |_| {
                    F::of(rng.gen_range(0.0..(8.0f64).ln()))
                })
            } else if name.ends_with("dt_bias") {
                ArrayD::from_shape_fn(IxDyn(&shape), |_| {
                    let dt = (rng.gen_range((1e-3f64).ln()..(0.1f64).ln())).exp();
                    // softplus^-1(dt) = ln(e^dt - 1)
                    F::of((dt.exp() - 1.0).ln())
                })
            } else {
                let fan_in = shape[0] as f64;
                let bound = 1.0 / fan_in.sqrt();
                ArrayD::from_shape_fn(IxDyn(&shape), |_| F::of(rng.gen_range(-bound..bound)))
            };
            arrays.insert(name, arr);
        }
        ModelParams { arrays }
    }

    pub fn get(&self, name: &str) -> &ArrayD<F> {
        self.arrays
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
    }

    /// Validate every array against the shapes the config dictates.
    pub fn validate_shapes(&self, config: &ModelConfig) -> Result<()> {
        let specs = config.param_specs();
        let mut problems = Vec::new();
        for (name, shape) in &specs {
            match self.arrays.get(name) {
                None => problems.push(format!("missing '{name}'")),
                Some(arr) if arr.shape() != shape.as_slice() => problems.push(format!(
                    "'{name}' has shape {:?}, expected {:?}",
                    arr.shape(),
                    shape
                )),
                _ => {}
            }
        }
        for name in self.arrays.keys() {
            if !specs.iter().any(|(n, _)| n == name) {
                problems.push(format!("unexpected '{name}'"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Checkpoint(problems.join("; ")))
        }
    }

    pub fn to_f32(&self) -> ModelParams<f32> {
        ModelParams {
            arrays: self
                .arrays
                .iter()
                .map(|(k, v)| (k.clone(), v.mapv(|x| x.as_f64() as f32)))
                .collect(),
        }
    }

    pub fn from_f32(src: &ModelParams<f32>) -> Self {
        ModelParams {
            arrays: src
                .arrays
                .iter()
                .map(|(k, v)| (k.clone(), v.mapv(|x| F::of(f64::from(x)))))
                .collect(),
        }
    }
}

/// Parameters registered on a tape for one forward pass; maps names to
/// `Var` handles so gradients can be read back out.
pub struct BoundParams {
    bound: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn bind<F: Real>(tape: &mut Tape<F>, params: &ModelParams<F>) -> Self {
        let mut bound = IndexMap::with_capacity(params.arrays.len());
        for (name, arr) in &params.arrays {
            bound.insert(name.clone(), tape.leaf(arr.clone()));
        }
        BoundParams { bound }
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .bound
            .get(name)
            .unwrap_or_else(|| panic!("parameter '{name}' not bound"))
    }

    /// Gradients per parameter in registration order; zero arrays where a
    /// parameter did not influence the loss.
    pub fn gradients<F: Real>(
        &self,
        grads: &mut GradStore<F>,
        params: &ModelParams<F>,
    ) -> IndexMap<String, ArrayD<F>> {
        self.bound
            .iter()
            .map(|(name, var)| {
                let g = grads
                    .take(*var)
                    .unwrap_or_else(|| ArrayD::zeros(params.get(name).raw_dim()));
                (name.clone(), g)
            })
            .collect()
    }
}

fn conv_stack<F: Real>(
    tape: &mut Tape<F>,
    bound: &BoundParams,
    config: &ModelConfig,
    prefix: &str,
    input: Var,
) -> Var {
    let mut branches = Vec::with_capacity(config.conv_dilations.len());
    let mut current = input;
    for (i, dilation) in config.conv_dilations.iter().enumerate() {
        let w = bound.var(&format!("{prefix}.conv{i}.w"));
        let b = bound.var(&format!("{prefix}.conv{i}.b"));
        let conv = tape.causal_conv(current, w, b, config.conv_kernel, *dilation);
        let act = tape.silu(conv);
        branches.push(act);
        current = act;
    }
    let cat = tape.concat_cols(&branches);
    let w = bound.var(&format!("{prefix}.combine.w"));
    let b = bound.var(&format!("{prefix}.combine.b"));
    let mm = tape.matmul(cat, w);
    tape.add_bias(mm, b)
}

/// Token features through the embedding stage only; exposed so the conv
/// stack's receptive field can be probed directly.
pub fn embed<F: Real>(
    tape: &mut Tape<F>,
    bound: &BoundParams,
    config: &ModelConfig,
    inputs: &TokenInputs<F>,
) -> Var {
    let values = tape.leaf2(inputs.values.clone());
    let flags = tape.leaf2(inputs.flags.clone());
    let calendar = tape.leaf2(inputs.calendar.clone());

    let vw = bound.var("embed.value.w");
    let vb = bound.var("embed.value.b");
    let vm = tape.matmul(values, vw);
    let vproj = tape.add_bias(vm, vb);

    let fw = bound.var("embed.flag.w");
    let fb = bound.var("embed.flag.b");
    let fm = tape.matmul(flags, fw);
    let fproj = tape.add_bias(fm, fb);

    let cw = bound.var("embed.cal.w");
    let cb = bound.var("embed.cal.b");
    let cproj = tape.feature_expand(calendar, cw, cb);

    let token = tape.concat_cols(&[vproj, fproj, cproj]);

    match config.embedding {
        LayerVariant::Cnn => conv_stack(tape, bound, config, "embed", token),
        LayerVariant::Linear => {
            let w = bound.var("embed.linear.w");
            let b = bound.var("embed.linear.b");
            let mm = tape.matmul(token, w);
            tape.add_bias(mm, b)
        }
    }
}

fn encoder_block<F: Real>(
    tape: &mut Tape<F>,
    bound: &BoundParams,
    config: &ModelConfig,
    layer: usize,
    input: Var,
) -> Var {
    let p = format!("block{layer}");
    let di = config.d_inner();
    let hn = config.n_heads * config.n_state;

    let gamma = bound.var(&format!("{p}.ln.gamma"));
    let beta = bound.var(&format!("{p}.ln.beta"));
    let normed = tape.layer_norm(input, gamma, beta, LN_EPS);

    let w_in = bound.var(&format!("{p}.in_proj.w"));
    let proj = tape.matmul(normed, w_in);
    let x = tape.slice_cols(proj, 0, di);
    let gate = tape.slice_cols(proj, di, 2 * di);
    let bmat = tape.slice_cols(proj, 2 * di, 2 * di + hn);
    let cmat = tape.slice_cols(proj, 2 * di + hn, 2 * di + 2 * hn);
    let dt = tape.slice_cols(proj, 2 * di + 2 * hn, 2 * di + 2 * hn + config.n_heads);

    // a_t = exp(-softplus(dt + dt_bias) * exp(a_log)), in (0, 1).
    let dt_bias = bound.var(&format!("{p}.dt_bias"));
    let dt_shift = tape.add_bias(dt, dt_bias);
    let dt_pos = tape.softplus(dt_shift);
    let a_log = bound.var(&format!("{p}.a_log"));
    let a_head = tape.exp(a_log);
    let scaled = tape.scale_cols(dt_pos, a_head);
    let neg = tape.neg(scaled);
    let decay = tape.exp(neg);

    let y = tape.ssd_scan(x, decay, bmat, cmat, config.n_heads, config.chunk_size);

    let norm_gamma = bound.var(&format!("{p}.norm.gamma"));
    let y_norm = tape.rms_norm_grouped(y, norm_gamma, config.n_heads, LN_EPS);
    let gate_act = tape.silu(gate);
    let gated = tape.mul(y_norm, gate_act);

    let w_out = bound.var(&format!("{p}.out_proj.w"));
    let out = tape.matmul(gated, w_out);
    tape.add(input, out)
}

/// Full forward pass: one scaled point prediction per token, shape `(T, 1)`.
pub fn forward<F: Real>(
    tape: &mut Tape<F>,
    bound: &BoundParams,
    config: &ModelConfig,
    inputs: &TokenInputs<F>,
) -> Var {
    let mut h = embed(tape, bound, config, inputs);
    for layer in 0..config.n_encoder_layers {
        h = encoder_block(tape, bound, config, layer, h);
    }
    let gamma = bound.var("final.ln.gamma");
    let beta = bound.var("final.ln.beta");
    let normed = tape.layer_norm(h, gamma, beta, LN_EPS);
    let enc_out = match config.encoder_final {
        LayerVariant::Cnn => conv_stack(tape, bound, config, "final", normed),
        LayerVariant::Linear => {
            let w = bound.var("final.linear.w");
            let b = bound.var("final.linear.b");
            let mm = tape.matmul(normed, w);
            tape.add_bias(mm, b)
        }
    };
    let dw = bound.var("decoder.w");
    let db = bound.var("decoder.b");
    let mm = tape.matmul(enc_out, dw);
    tape.add_bias(mm, db)
}

/// Convenience wrapper: run a forward pass outside any training loop and
/// return the raw (scaled-space) per-token predictions.
pub fn predict<F: Real>(
    params: &ModelParams<F>,
    config: &ModelConfig,
    inputs: &TokenInputs<F>,
) -> Result<Vec<F>> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params);
    let out = forward(&mut tape, &bound, config, inputs);
    let view = tape.value2(out);
    let preds: Vec<F> = view.column(0).to_vec();
    if preds.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network output".into()));
    }
    Ok(preds)
}
