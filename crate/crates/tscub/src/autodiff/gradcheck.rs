//! Central finite-difference verification of analytic gradients.
//!
//! Gradient checks are only meaningful away from derivative
//! discontinuities (PReLU kinks, pool and element-max ties). Each probe
//! therefore records the forward pass's kink signature at both evaluation
//! points; probes whose `±ε` evaluations land on different sides of a kink
//! are excluded from the comparison and counted separately. A check passes
//! when every valid probe agrees within tolerance and nearly all probes
//! were valid.

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::params::ParamStore;
use crate::autodiff::tensor::Tensor;
use crate::error::Result;

/// Worst relative error for one parameter tensor.
#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub param: String,
    pub max_rel_err: f64,
    /// Probes excluded because the perturbation straddled a kink.
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub probes: usize,
    pub skipped: usize,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Gradient magnitude below which the comparison becomes absolute
/// (`|analytic - numeric| < tol * GRAD_FLOOR`); guards the relative error
/// against division by near-zero gradients.
const GRAD_FLOOR: f64 = 1e-2;

/// Largest fraction of probes allowed to be skipped for kink straddling
/// before the check is considered inconclusive (and fails).
const MAX_SKIP_FRACTION: f64 = 0.05;

/// Differentiate `build`'s scalar loss analytically, then compare against
/// central finite differences over every parameter element.
///
/// `build` must deterministically construct the graph from the store's
/// current values and return the loss node.
pub fn check_gradients<F>(
    store: &mut ParamStore,
    eps: f64,
    tol: f64,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(Graph, NodeId)>,
{
    store.zero_grads();
    let (graph, loss) = build(store)?;
    graph.backward(loss, store)?;
    let analytic = store.grads_snapshot();
    compare_with_analytic(store, &analytic, eps, tol, |s| {
        let (g, l) = build(s)?;
        Ok((g.value(l).item(), g.kink_signature()))
    })
}

/// Compare externally supplied analytic gradients against central finite
/// differences of `eval`, which returns the loss value and the forward
/// pass's kink signature. Used directly by negative-control tests.
pub fn compare_with_analytic<F>(
    store: &mut ParamStore,
    analytic: &[Tensor],
    eps: f64,
    tol: f64,
    eval: F,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(f64, u64)>,
{
    assert_eq!(analytic.len(), store.len(), "one gradient per parameter");
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut entries = Vec::with_capacity(names.len());
    let mut probes = 0usize;
    let mut skipped_total = 0usize;
    for (slot, name) in names.iter().enumerate() {
        let numel = store.value_by_slot(slot).numel();
        let mut worst = 0.0f64;
        let mut skipped = 0usize;
        for i in 0..numel {
            probes += 1;
            let orig = store.value_by_slot(slot).data()[i];
            store.value_mut_by_slot(slot).data_mut()[i] = orig + eps;
            let (plus, sig_plus) = eval(store)?;
            store.value_mut_by_slot(slot).data_mut()[i] = orig - eps;
            let (minus, sig_minus) = eval(store)?;
            store.value_mut_by_slot(slot).data_mut()[i] = orig;
            if sig_plus != sig_minus {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[slot].data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
        }
        skipped_total += skipped;
        entries.push(GradCheckEntry {
            param: name.clone(),
            max_rel_err: worst,
            skipped,
        });
    }
    let max_rel_err = entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max);
    let skip_ok = (skipped_total as f64) <= MAX_SKIP_FRACTION * probes as f64;
    Ok(GradCheckReport {
        entries,
        max_rel_err,
        tol,
        probes,
        skipped: skipped_total,
        pass: max_rel_err < tol && skip_ok,
    })
}
