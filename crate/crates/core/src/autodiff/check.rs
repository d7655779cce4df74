//! Central finite-difference gradient checking.

use super::{NodeId, ParameterStore, Tape};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Denominator floor of the relative error.
const REL_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_values: (f64, f64),
    pub entries_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn evaluate<F>(builder: &F, store: &ParameterStore, param: &str) -> Result<f64>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let loss = builder(&mut tape, store)?;
    let v = tape.scalar(loss);
    if !v.is_finite() {
        return Err(Error::NonFinite {
            what: "loss",
            param: param.to_string(),
        });
    }
    Ok(v)
}

/// Compares backpropagated gradients of `builder`'s scalar loss against
/// central differences with step `eps`, over every entry of every parameter.
pub fn grad_check<F>(builder: F, store: &ParameterStore, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<NodeId>,
{
    let mut analytic_store = store.clone();
    analytic_store.zero_grad();
    let mut tape = Tape::new();
    let loss = builder(&mut tape, store)?;
    if !tape.scalar(loss).is_finite() {
        return Err(Error::NonFinite {
            what: "loss",
            param: "<unperturbed>".into(),
        });
    }
    tape.backward(loss)?;
    tape.accumulate_into(&mut analytic_store, 1.0);

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        entries_checked: 0,
    };
    for id in store.ids() {
        let name = store.entry(id).name.clone();
        for k in 0..store.tensor(id).len() {
            let original = store.tensor(id).value[k];
            probe.tensor_mut(id).value[k] = original + eps;
            let plus = evaluate(&builder, &probe, &name)?;
            probe.tensor_mut(id).value[k] = original - eps;
            let minus = evaluate(&builder, &probe, &name)?;
            probe.tensor_mut(id).value[k] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = analytic_store.tensor(id).grad[k];
            let err = relative_error(analytic, numeric);
            report.entries_checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some((name.clone(), k));
                report.worst_values = (analytic, numeric);
            }
        }
    }
    Ok(report)
}

/// Checks the analytic directional derivative `g . v` against a central
/// difference along `v`. Unlike [`grad_check`] this is one well-conditioned
/// scalar per direction, so it suits large composed losses whose individual
/// entries may sit near the finite-difference noise floor.
pub fn directional_check<F>(builder: F, store: &ParameterStore, directions: &[Vec<f64>], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<NodeId>,
{
    let mut analytic_store = store.clone();
    analytic_store.zero_grad();
    let mut tape = Tape::new();
    let loss = builder(&mut tape, store)?;
    tape.backward(loss)?;
    tape.accumulate_into(&mut analytic_store, 1.0);
    let grads: Vec<f64> = analytic_store.iter().flat_map(|(_, e)| e.tensor.grad.clone()).collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        entries_checked: 0,
    };
    for (d, v) in directions.iter().enumerate() {
        if v.len() != grads.len() {
            return Err(Error::InvalidOp {
                op: "directional-check",
                msg: format!("direction has {} entries, parameters have {}", v.len(), grads.len()),
            });
        }
        let shifted = |sign: f64| -> Result<f64> {
            let mut probe = store.clone();
            let mut offset = 0;
            for id in store.ids() {
                let t = probe.tensor_mut(id);
                for (p, vi) in t.value.iter_mut().zip(&v[offset..]) {
                    *p += sign * eps * vi;
                }
                offset += t.value.len();
            }
            evaluate(&builder, &probe, "<direction>")
        };
        let numeric = (shifted(1.0)? - shifted(-1.0)?) / (2.0 * eps);
        let analytic: f64 = grads.iter().zip(v).map(|(g, vi)| g * vi).sum();
        let err = relative_error(analytic, numeric);
        report.entries_checked += 1;
        if err > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(err);
            report.worst = Some(("<direction>".into(), d));
            report.worst_values = (analytic, numeric);
        }
    }
    Ok(report)
}
