//! Recurrent cells: IndRNN, Skip IndRNN, and GRU.
//!
//! Each cell has a single-step function over tape handles plus a layer type
//! that owns its parameters in a [`ParamStore`] and unrolls whole sequences
//! from a zero initial state with full backpropagation through time.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, uniform, Bound, ParamId, ParamStore, Real, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Real>(self, tape: &mut Tape<T>, v: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(v),
            Activation::Tanh => tape.tanh(v),
            Activation::Sigmoid => tape.sigmoid(v),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Default bound on `|u_j|`: `2^(1/1024)`.
pub fn default_recurrent_clip() -> f64 {
    2f64.powf(1.0 / 1024.0)
}

fn check_len<T: Real>(tape: &Tape<T>, v: Var, len: usize, what: &str) -> Result<()> {
    let got = tape.value(v).len();
    if got != len {
        return Err(Error::shape(format!("{what}: expected length {len}, got {got}")));
    }
    Ok(())
}

fn matrix_dims<T: Real>(tape: &Tape<T>, w: Var, what: &str) -> Result<(usize, usize)> {
    match tape.value(w).shape() {
        [r, c] => Ok((*r, *c)),
        other => Err(Error::shape(format!("{what}: expected a matrix, got {other:?}"))),
    }
}

// ---------------------------------------------------------------------------
// IndRNN

/// IndRNN weights bound to a tape: input matrix `w` (hidden × input),
/// recurrent vector `u`, bias `b`.
#[derive(Clone, Copy, Debug)]
pub struct IndRnnParams {
    pub w: Var,
    pub u: Var,
    pub b: Var,
    pub activation: Activation,
}

/// `h_t = σ(W x_t + u ⊙ h_{t-1} + b)`.
pub fn indrnn_step<T: Real>(
    tape: &mut Tape<T>,
    params: &IndRnnParams,
    x: Var,
    h_prev: Var,
) -> Result<Var> {
    let (hidden, input) = matrix_dims(tape, params.w, "indrnn W")?;
    check_len(tape, x, input, "indrnn input")?;
    check_len(tape, h_prev, hidden, "indrnn previous state")?;
    check_len(tape, params.u, hidden, "indrnn u")?;
    check_len(tape, params.b, hidden, "indrnn b")?;
    Ok(indrnn_step_unchecked(tape, params, x, h_prev))
}

fn indrnn_step_unchecked<T: Real>(
    tape: &mut Tape<T>,
    params: &IndRnnParams,
    x: Var,
    h_prev: Var,
) -> Var {
    let wx = tape.affine(params.w, x, Some(params.b));
    let rec = tape.mul(params.u, h_prev);
    let pre = tape.add(wx, rec);
    params.activation.apply(tape, pre)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndRnnLayer {
    pub input: usize,
    pub hidden: usize,
    pub activation: Activation,
    w: ParamId,
    u: ParamId,
    b: ParamId,
}

impl IndRnnLayer {
    /// Glorot-uniform `W`, `u ~ U[0, 1]`, zero bias.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add(format!("{prefix}.w"), glorot_uniform(rng, hidden, input));
        let u = store.add(format!("{prefix}.u"), uniform(rng, &[hidden], 0.0, 1.0));
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(&[hidden]));
        IndRnnLayer { input, hidden, activation, w, u, b }
    }

    pub fn params(&self, bound: &Bound) -> IndRnnParams {
        IndRnnParams { w: bound[self.w], u: bound[self.u], b: bound[self.b], activation: self.activation }
    }

    pub fn recurrent_id(&self) -> ParamId {
        self.u
    }

    pub fn input_weight_id(&self) -> ParamId {
        self.w
    }

    /// Hidden state after every frame, starting from zero.
    pub fn unroll<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, xs: &[Var]) -> Result<Vec<Var>> {
        let params = self.params(bound);
        let mut h = tape.constant(Tensor::zeros(&[self.hidden]));
        let mut out = Vec::with_capacity(xs.len());
        for (t, &x) in xs.iter().enumerate() {
            h = if t == 0 {
                indrnn_step(tape, &params, x, h)?
            } else {
                indrnn_step_unchecked(tape, &params, x, h)
            };
            out.push(h);
        }
        Ok(out)
    }

    /// Clamps every `u_j` into `[-u_max, u_max]`.
    pub fn clip_recurrent<T: Real>(&self, store: &mut ParamStore<T>, u_max: f64) {
        let bound = T::from_f64(u_max);
        for v in store.get_mut(self.u).data_mut() {
            *v = v.max(-bound).min(bound);
        }
    }
}

// ---------------------------------------------------------------------------
// Skip IndRNN

/// Threshold `v >= 0.5` on values in `[0, 1]`.
pub fn binarize<T: Real>(v: &[T]) -> Result<Vec<T>> {
    let tol = T::from_f64(1e-6);
    let half = T::from_f64(0.5);
    v.iter()
        .map(|&x| {
            if x.is_nan() || x < -tol || x > T::one() + tol {
                Err(Error::invalid(format!("binarize input {x} outside [0, 1]")))
            } else if x >= half {
                Ok(T::one())
            } else {
                Ok(T::zero())
            }
        })
        .collect()
}

/// Skip IndRNN weights: the IndRNN candidate plus the elementwise gate
/// increment weights `w_p`, `b_p`.
#[derive(Clone, Copy, Debug)]
pub struct SkipIndRnnParams {
    pub base: IndRnnParams,
    pub w_p: Var,
    pub b_p: Var,
}

/// Recurrent state: output `h` and the update accumulator `ũ`.
#[derive(Clone, Copy, Debug)]
pub struct SkipState {
    pub h: Var,
    pub u_tilde: Var,
}

impl SkipState {
    /// `h = 0`, `ũ = 1` so the first frame always updates.
    pub fn initial<T: Real>(tape: &mut Tape<T>, hidden: usize) -> Self {
        SkipState {
            h: tape.constant(Tensor::zeros(&[hidden])),
            u_tilde: tape.constant(Tensor::filled(&[hidden], T::one())),
        }
    }
}

/// How the binary update gate is differentiated.
#[derive(Clone, Copy, Debug)]
pub enum GateMode<'a> {
    /// Gate computed from `ũ`; adjoint passes through the step unchanged.
    StraightThrough,
    /// Gate replayed from recorded decisions and treated as a constant.
    Frozen(&'a [bool]),
}

#[derive(Clone, Debug)]
pub struct SkipStep {
    pub output: Var,
    pub state: SkipState,
    /// Per-neuron update decision `u_t` used at this step.
    pub update: Vec<bool>,
}

fn accumulator_ok<T: Real>(v: &[T]) -> bool {
    v.iter().all(|&x| x >= T::zero() && x <= T::one())
}

/// One Skip IndRNN transition:
///
/// ```text
/// ĥ_t   = σ(W x_t + u ⊙ h_{t-1} + b)
/// u_t   = [ũ_t >= 0.5]
/// h_t   = u_t ⊙ ĥ_t + (1 - u_t) ⊙ h_{t-1}
/// Δũ_t  = sigmoid(w_p ⊙ h_t + b_p)
/// ũ_t+1 = u_t ⊙ Δũ_t + (1 - u_t) ⊙ (ũ_t + min(Δũ_t, 1 - ũ_t))
/// ```
pub fn skip_indrnn_step<T: Real>(
    tape: &mut Tape<T>,
    params: &SkipIndRnnParams,
    x: Var,
    state: SkipState,
    mode: GateMode<'_>,
) -> Result<SkipStep> {
    let (hidden, input) = matrix_dims(tape, params.base.w, "skip indrnn W")?;
    check_len(tape, x, input, "skip indrnn input")?;
    for (v, what) in [
        (state.h, "skip indrnn h"),
        (state.u_tilde, "skip indrnn accumulator"),
        (params.base.u, "skip indrnn u"),
        (params.base.b, "skip indrnn b"),
        (params.w_p, "skip indrnn w_p"),
        (params.b_p, "skip indrnn b_p"),
    ] {
        check_len(tape, v, hidden, what)?;
    }
    if let GateMode::Frozen(d) = mode {
        if d.len() != hidden {
            return Err(Error::shape(format!("frozen gate: expected {hidden} decisions, got {}", d.len())));
        }
    }
    if !accumulator_ok(tape.value(state.u_tilde).data()) {
        return Err(Error::Invariant("accumulator left [0, 1] before step".into()));
    }
    let step = skip_step_unchecked(tape, params, x, state, mode);
    if !accumulator_ok(tape.value(step.state.u_tilde).data()) {
        return Err(Error::Invariant("accumulator left [0, 1] after step".into()));
    }
    Ok(step)
}

fn skip_step_unchecked<T: Real>(
    tape: &mut Tape<T>,
    params: &SkipIndRnnParams,
    x: Var,
    state: SkipState,
    mode: GateMode<'_>,
) -> SkipStep {
    let candidate = indrnn_step_unchecked(tape, &params.base, x, state.h);
    let gate = match mode {
        GateMode::StraightThrough => tape.binarize(state.u_tilde, true),
        GateMode::Frozen(d) => {
            let v = d.iter().map(|&on| if on { T::one() } else { T::zero() }).collect();
            tape.constant(Tensor::vector(v))
        }
    };
    let update: Vec<bool> = tape.value(gate).data().iter().map(|&g| g == T::one()).collect();

    let keep_gate = tape.one_minus(gate);
    let fresh = tape.mul(gate, candidate);
    let copied = tape.mul(keep_gate, state.h);
    let h = tape.add(fresh, copied);

    let gate_in = tape.mul(params.w_p, h);
    let gate_pre = tape.add(gate_in, params.b_p);
    let delta = tape.sigmoid(gate_pre);

    let headroom = tape.one_minus(state.u_tilde);
    let increment = tape.min(delta, headroom);
    let accumulated = tape.add(state.u_tilde, increment);
    let reset = tape.mul(gate, delta);
    let carried = tape.mul(keep_gate, accumulated);
    let u_tilde = tape.add(reset, carried);

    SkipStep { output: h, state: SkipState { h, u_tilde }, update }
}

#[derive(Clone, Copy, Debug)]
pub enum SkipMode<'a> {
    StraightThrough,
    /// One decision vector per timestep.
    Frozen(&'a [Vec<bool>]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkipIndRnnLayer {
    pub base: IndRnnLayer,
    w_p: ParamId,
    b_p: ParamId,
}

impl SkipIndRnnLayer {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let base = IndRnnLayer::new(store, prefix, input, hidden, activation, rng);
        let w_p = store.add(format!("{prefix}.w_p"), uniform(rng, &[hidden], -0.1, 0.1));
        let b_p = store.add(format!("{prefix}.b_p"), Tensor::zeros(&[hidden]));
        SkipIndRnnLayer { base, w_p, b_p }
    }

    pub fn params(&self, bound: &Bound) -> SkipIndRnnParams {
        SkipIndRnnParams { base: self.base.params(bound), w_p: bound[self.w_p], b_p: bound[self.b_p] }
    }

    /// Outputs per frame and the update decisions taken at each step.
    pub fn unroll<T: Real>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        xs: &[Var],
        mode: SkipMode<'_>,
    ) -> Result<(Vec<Var>, Vec<Vec<bool>>)> {
        if let SkipMode::Frozen(d) = mode {
            if d.len() != xs.len() {
                return Err(Error::shape(format!(
                    "frozen decisions cover {} steps, sequence has {}",
                    d.len(),
                    xs.len()
                )));
            }
        }
        let params = self.params(bound);
        let mut state = SkipState::initial(tape, self.base.hidden);
        let mut outputs = Vec::with_capacity(xs.len());
        let mut decisions = Vec::with_capacity(xs.len());
        for (t, &x) in xs.iter().enumerate() {
            let gate = match mode {
                SkipMode::StraightThrough => GateMode::StraightThrough,
                SkipMode::Frozen(d) => GateMode::Frozen(&d[t]),
            };
            let step = if t == 0 {
                skip_indrnn_step(tape, &params, x, state, gate)?
            } else {
                skip_step_unchecked(tape, &params, x, state, gate)
            };
            outputs.push(step.output);
            decisions.push(step.update);
            state = step.state;
        }
        Ok((outputs, decisions))
    }

    pub fn clip_recurrent<T: Real>(&self, store: &mut ParamStore<T>, u_max: f64) {
        self.base.clip_recurrent(store, u_max);
    }
}

// ---------------------------------------------------------------------------
// GRU

/// Standard GRU weights bound to a tape, with `h_t = (1 - z) ⊙ h_{t-1} + z ⊙ h̃`.
#[derive(Clone, Copy, Debug)]
pub struct GruParams {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

pub fn gru_step<T: Real>(tape: &mut Tape<T>, params: &GruParams, x: Var, h_prev: Var) -> Result<Var> {
    let (hidden, input) = matrix_dims(tape, params.w_z, "gru W_z")?;
    check_len(tape, x, input, "gru input")?;
    check_len(tape, h_prev, hidden, "gru previous state")?;
    for (w, what) in [(params.w_r, "gru W_r"), (params.w_h, "gru W_h")] {
        if matrix_dims(tape, w, what)? != (hidden, input) {
            return Err(Error::shape(format!("{what}: expected {hidden}x{input}")));
        }
    }
    for (u, what) in [(params.u_z, "gru U_z"), (params.u_r, "gru U_r"), (params.u_h, "gru U_h")] {
        if matrix_dims(tape, u, what)? != (hidden, hidden) {
            return Err(Error::shape(format!("{what}: expected {hidden}x{hidden}")));
        }
    }
    for (b, what) in [(params.b_z, "gru b_z"), (params.b_r, "gru b_r"), (params.b_h, "gru b_h")] {
        check_len(tape, b, hidden, what)?;
    }
    Ok(gru_step_unchecked(tape, params, x, h_prev))
}

fn gru_step_unchecked<T: Real>(tape: &mut Tape<T>, p: &GruParams, x: Var, h_prev: Var) -> Var {
    let zx = tape.affine(p.w_z, x, Some(p.b_z));
    let zh = tape.affine(p.u_z, h_prev, None);
    let z_pre = tape.add(zx, zh);
    let z = tape.sigmoid(z_pre);

    let rx = tape.affine(p.w_r, x, Some(p.b_r));
    let rh = tape.affine(p.u_r, h_prev, None);
    let r_pre = tape.add(rx, rh);
    let r = tape.sigmoid(r_pre);

    let reset_h = tape.mul(r, h_prev);
    let cx = tape.affine(p.w_h, x, Some(p.b_h));
    let ch = tape.affine(p.u_h, reset_h, None);
    let c_pre = tape.add(cx, ch);
    let candidate = tape.tanh(c_pre);

    let keep = tape.one_minus(z);
    let old = tape.mul(keep, h_prev);
    let new = tape.mul(z, candidate);
    tape.add(old, new)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GruLayer {
    pub input: usize,
    pub hidden: usize,
    ids: [ParamId; 9],
}

impl GruLayer {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut ids = Vec::with_capacity(9);
        for gate in ["z", "r", "h"] {
            ids.push(store.add(format!("{prefix}.w_{gate}"), glorot_uniform(rng, hidden, input)));
            ids.push(store.add(format!("{prefix}.u_{gate}"), glorot_uniform(rng, hidden, hidden)));
            ids.push(store.add(format!("{prefix}.b_{gate}"), Tensor::zeros(&[hidden])));
        }
        GruLayer { input, hidden, ids: ids.try_into().expect("nine gru tensors") }
    }

    pub fn params(&self, bound: &Bound) -> GruParams {
        let v = |i: usize| bound[self.ids[i]];
        GruParams {
            w_z: v(0),
            u_z: v(1),
            b_z: v(2),
            w_r: v(3),
            u_r: v(4),
            b_r: v(5),
            w_h: v(6),
            u_h: v(7),
            b_h: v(8),
        }
    }

    pub fn unroll<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, xs: &[Var]) -> Result<Vec<Var>> {
        let params = self.params(bound);
        let mut h = tape.constant(Tensor::zeros(&[self.hidden]));
        let mut out = Vec::with_capacity(xs.len());
        for (t, &x) in xs.iter().enumerate() {
            h = if t == 0 { gru_step(tape, &params, x, h)? } else { gru_step_unchecked(tape, &params, x, h) };
            out.push(h);
        }
        Ok(out)
    }
}
