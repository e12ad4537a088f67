//! Finite-difference gradient verification.
//!
//! Every hand-written backward pass in the crate is checked against central
//! differences on a miniature instance. The checker works on any
//! deterministic scalar-valued objective that exposes its parameters.

use crate::tensor::Parameter;
use thiserror::Error;

/// Guard applied to the denominator of the relative error so near-zero
/// gradients are compared on an absolute scale instead of blowing up.
pub const REL_ERR_SCALE_FLOOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error("objective is not deterministic: two evaluations gave {first} and {second}")]
    NonDeterministic { first: f64, second: f64 },
}

/// A deterministic scalar objective over named parameters.
///
/// `eval` recomputes the scalar from scratch; `eval_grads` additionally
/// populates each parameter's `grad` (after zeroing) with the analytic
/// gradient.
pub trait ScalarObjective {
    fn eval(&mut self) -> f64;
    fn eval_grads(&mut self) -> f64;
    fn for_each_param(&mut self, visit: &mut dyn FnMut(&mut Parameter));
}

/// One flagged gradient entry.
#[derive(Debug, Clone)]
pub struct FlaggedGradient {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Per-parameter max relative error between analytic and central-difference
/// gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_param: Vec<(String, f64)>,
    pub max_rel_err: f64,
    pub flagged: Vec<FlaggedGradient>,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

fn relative_error(a: f64, n: f64) -> f64 {
    if a == n {
        return 0.0;
    }
    (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_SCALE_FLOOR)
}

/// Compares analytic gradients of `objective` to central differences
/// (f(θ+ε)−f(θ−ε))/2ε, elementwise over every parameter. Entries whose
/// relative error exceeds `tol` are flagged in the report.
pub fn check_gradients(
    objective: &mut dyn ScalarObjective,
    epsilon: f64,
    tol: f64,
) -> Result<GradCheckReport, GradCheckError> {
    let first = objective.eval();
    let second = objective.eval();
    if first.to_bits() != second.to_bits() {
        return Err(GradCheckError::NonDeterministic { first, second });
    }

    objective.for_each_param(&mut |p| p.zero_grad());
    objective.eval_grads();

    // Snapshot analytic grads; the numeric sweep below reuses the params.
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    objective.for_each_param(&mut |p| {
        analytic.push((p.name.clone(), p.grad.data().to_vec()));
    });

    let mut report = GradCheckReport {
        per_param: Vec::new(),
        max_rel_err: 0.0,
        flagged: Vec::new(),
        epsilon,
        tolerance: tol,
    };

    for (param_pos, (name, grads)) in analytic.iter().enumerate() {
        let mut param_max = 0.0_f64;
        for idx in 0..grads.len() {
            let mut plus = 0.0;
            let mut minus = 0.0;
            for (sign, slot) in [(1.0, &mut plus), (-1.0, &mut minus)] {
                let mut seen = 0usize;
                objective.for_each_param(&mut |p| {
                    if seen == param_pos {
                        p.value.data_mut()[idx] += sign * epsilon;
                    }
                    seen += 1;
                });
                *slot = objective.eval();
                let mut seen = 0usize;
                objective.for_each_param(&mut |p| {
                    if seen == param_pos {
                        p.value.data_mut()[idx] -= sign * epsilon;
                    }
                    seen += 1;
                });
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let rel = relative_error(grads[idx], numeric);
            if rel > param_max {
                param_max = rel;
            }
            if rel > tol {
                report.flagged.push(FlaggedGradient {
                    param: name.clone(),
                    index: idx,
                    analytic: grads[idx],
                    numeric,
                    rel_err: rel,
                });
            }
        }
        report.max_rel_err = report.max_rel_err.max(param_max);
        report.per_param.push((name.clone(), param_max));
    }
    Ok(report)
}
