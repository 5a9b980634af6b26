//! Central finite-difference gradient checker.

use crate::error::Result;
use crate::nn::{Gradients, ParamStore, Tensor};
use crate::real::Real;

/// A scalar objective of parameters and inputs with an analytic gradient.
pub trait Differentiable<T: Real> {
    fn value(&self, params: &ParamStore<T>, inputs: &[Tensor<T>]) -> Result<T>;

    /// Parameter gradients and one gradient tensor per input.
    fn gradient(
        &self,
        params: &ParamStore<T>,
        inputs: &[Tensor<T>],
    ) -> Result<(Gradients<T>, Vec<Tensor<T>>)>;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference half-step.
    pub step: f64,
    /// Denominator floor of the relative error, so entries whose true
    /// gradient is ~0 are compared absolutely.
    pub floor: f64,
    pub check_inputs: bool,
}

impl GradCheckOptions {
    pub fn for_precision<T: Real>() -> Self {
        GradCheckOptions {
            step: T::FD_STEP,
            floor: if T::FD_STEP > 1e-4 { 1e-2 } else { 1e-6 },
            check_inputs: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub location: String,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over all entries of |a − n| / max(|a|, |n|, floor)
    pub max_rel_error: f64,
    pub worst: Option<Mismatch>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare `op`'s analytic gradient against central differences over every
/// parameter element (and every input element when enabled).
pub fn grad_check<T: Real, D: Differentiable<T> + ?Sized>(
    op: &D,
    params: &ParamStore<T>,
    inputs: &[Tensor<T>],
    options: GradCheckOptions,
) -> Result<GradCheckReport> {
    let (param_grads, input_grads) = op.gradient(params, inputs)?;
    let h = T::lit(options.step);
    let two_h = T::lit(2.0 * options.step);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut record = |location: String, analytic: T, numeric: T| {
        let (a, n) = (analytic.as_f64(), numeric.as_f64());
        let err = relative_error(a, n, options.floor);
        report.checked += 1;
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
            report.worst = Some(Mismatch {
                location,
                analytic: a,
                numeric: n,
            });
        }
    };

    let mut probe = params.clone();
    for (e_idx, entry) in params.entries().iter().enumerate() {
        for i in 0..entry.value.len() {
            let original = entry.value.data()[i];
            probe.entries_mut()[e_idx].value.data_mut()[i] = original + h;
            let plus = op.value(&probe, inputs)?;
            probe.entries_mut()[e_idx].value.data_mut()[i] = original - h;
            let minus = op.value(&probe, inputs)?;
            probe.entries_mut()[e_idx].value.data_mut()[i] = original;
            let numeric = (plus - minus) / two_h;
            record(
                format!("{}[{i}]", entry.name),
                param_grads.tensors()[e_idx].data()[i],
                numeric,
            );
        }
    }

    if options.check_inputs {
        let mut probe_inputs = inputs.to_vec();
        for (k, input) in inputs.iter().enumerate() {
            for i in 0..input.len() {
                let original = input.data()[i];
                probe_inputs[k].data_mut()[i] = original + h;
                let plus = op.value(params, &probe_inputs)?;
                probe_inputs[k].data_mut()[i] = original - h;
                let minus = op.value(params, &probe_inputs)?;
                probe_inputs[k].data_mut()[i] = original;
                record(
                    format!("input{k}[{i}]"),
                    input_grads[k].data()[i],
                    (plus - minus) / two_h,
                );
            }
        }
    }
    Ok(report)
}
