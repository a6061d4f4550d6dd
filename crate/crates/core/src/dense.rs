use rand::Rng;

use crate::numerics::{glorot_uniform, Bound, ParamId, ParamStore, Real, Tape, Tensor, Var};

/// Fully connected layer `W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    w: ParamId,
    b: ParamId,
}

impl Dense {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add(format!("{prefix}.w"), glorot_uniform(rng, output, input));
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(&[output]));
        Dense { input, output, w, b }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Var {
        tape.affine(bound[self.w], x, Some(bound[self.b]))
    }

    pub fn weight_id(&self) -> ParamId {
        self.w
    }

    pub fn bias_id(&self) -> ParamId {
        self.b
    }
}
