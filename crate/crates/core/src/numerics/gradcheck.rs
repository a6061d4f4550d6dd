//! Central finite-difference verification of tape gradients at 64-bit precision.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Relative error `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub max_rel_error: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares the tape gradient of `f` against `(f(θ+h) - f(θ-h)) / 2h` for
/// every element of every parameter tensor.
///
/// `f` receives a fresh tape and one parameter [`Var`] per tensor, in order,
/// and returns the scalar loss node.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    if !tape.scalar(loss).is_finite() {
        return Err(Error::NonFinite("loss at the unperturbed point".into()));
    }
    let grads = tape.backward(loss)?;

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut checks = Vec::with_capacity(params.len());
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.to_tensor(*var, params[pi].shape());
        let mut check =
            ParamCheck { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 };
        for k in 0..params[pi].len() {
            let orig = params[pi].data()[k];
            work[pi].data_mut()[k] = orig + h;
            let plus = eval(&work)?;
            work[pi].data_mut()[k] = orig - h;
            let minus = eval(&work)?;
            work[pi].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("loss at perturbed param {pi}[{k}]")));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[k];
            let err = relative_error(a, numeric);
            if err > check.max_rel_error || k == 0 {
                check = ParamCheck { max_rel_error: err, worst_index: k, analytic: a, numeric };
            }
        }
        checks.push(check);
    }
    let max_rel_error = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { params: checks, max_rel_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let report = grad_check(
            |tape, p| {
                let sq = tape.mul(p[0], p[0]);
                Ok(tape.sum(sq))
            },
            &[Tensor::scalar(3.0)],
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert!((report.params[0].analytic - 6.0).abs() < 1e-12);
        assert!((report.params[0].numeric - 6.0).abs() < 1e-9);
    }

    #[test]
    fn sine_against_cosine() {
        let report = grad_check(
            |tape, p| {
                let s = tape.sin(p[0]);
                Ok(tape.sum(s))
            },
            &[Tensor::scalar(1.0)],
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert!(relative_error(report.params[0].analytic, 1f64.cos()) < 1e-15);
    }

    #[test]
    fn relative_error_denominator_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-10, 0.0) - 1e-2).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu(x) at x = 0: tape uses subgradient 0, central difference gives 0.5.
        let report = grad_check(
            |tape, p| {
                let r = tape.relu(p[0]);
                Ok(tape.sum(r))
            },
            &[Tensor::scalar(0.0)],
            1e-5,
        )
        .unwrap();
        assert!(!report.passes(1e-4));
    }

    #[test]
    fn composite_ops_pass() {
        let report = grad_check(
            |tape, p| {
                let a = tape.affine(p[0], p[1], Some(p[2]));
                let s = tape.sigmoid(a);
                let t = tape.tanh(p[1]);
                let m = tape.min(s, t);
                let om = tape.one_minus(m);
                let probs = tape.softmax(om);
                let ce = tape.cross_entropy(probs, 1);
                let mean = tape.mean(a);
                let shifted = tape.add_scalar(mean, -0.3);
                let ab = tape.abs(shifted);
                let sc = tape.scale(ab, 4.0);
                Ok(tape.add(ce, sc))
            },
            &[
                Tensor::matrix(2, 2, vec![0.3, -0.2, 0.5, 0.1]).unwrap(),
                Tensor::vector(vec![0.7, -0.4]),
                Tensor::vector(vec![0.05, -0.1]),
            ],
            1e-5,
        )
        .unwrap();
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn bernoulli_log_prob_gradient() {
        let report = grad_check(
            |tape, p| {
                let s = tape.sigmoid(p[0]);
                Ok(tape.bernoulli_log_prob(s, &[true, false, true], &[true, true, false], 1e-6))
            },
            &[Tensor::vector(vec![0.4, -1.2, 2.0])],
            1e-5,
        )
        .unwrap();
        assert!(report.passes(1e-7), "{report:?}");
    }
}
