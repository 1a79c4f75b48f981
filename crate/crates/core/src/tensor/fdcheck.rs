use std::collections::HashMap;

use super::{EvalMode, Graph, NodeId, Result, Tensor, TensorError};

/// Per-coordinate comparison of the autodiff gradient against a central
/// finite difference.
#[derive(Debug, Clone)]
pub struct FdCoordReport {
    pub coord: usize,
    pub autodiff: f64,
    pub finite_diff: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct FdCheckReport {
    pub input: String,
    pub coords: Vec<FdCoordReport>,
    pub max_rel_error: f64,
    pub pass: bool,
}

/// Compare the autodiff gradient of the scalar node `output` w.r.t. the
/// named input against (f(x+εe) − f(x−εe))/2ε, coordinate by coordinate.
///
/// The mode must be deterministic for the estimate to make sense; Train
/// mode reuses the same seed for every perturbed evaluation, so dropout
/// masks are held fixed.
pub fn finite_diff_check(
    graph: &Graph,
    bindings: &HashMap<String, Tensor>,
    input: &str,
    output: NodeId,
    epsilon: f64,
    tolerance: f64,
    mode: EvalMode,
) -> Result<FdCheckReport> {
    if epsilon <= 0.0 {
        return Err(TensorError::Invalid("epsilon must be positive".into()));
    }
    let base = bindings
        .get(input)
        .ok_or_else(|| TensorError::UnboundInput(input.to_string()))?
        .clone();

    let eval = graph.forward(bindings, mode)?;
    let grads = graph.backward(&eval, output)?;
    let auto = grads
        .input(input)
        .ok_or_else(|| TensorError::UnboundInput(input.to_string()))?
        .clone();

    let mut coords = Vec::with_capacity(base.len());
    let mut max_rel = 0.0f64;
    for i in 0..base.len() {
        let probe = |delta: f64| -> Result<f64> {
            let mut perturbed = base.clone();
            perturbed.data_mut()[i] += delta;
            let mut b = bindings.clone();
            b.insert(input.to_string(), perturbed);
            let e = graph.forward(&b, mode)?;
            Ok(e.value(output).item())
        };
        let plus = probe(epsilon).map_err(|_| {
            TensorError::Invalid(format!("non-finite perturbed evaluation at coordinate {i}"))
        })?;
        let minus = probe(-epsilon).map_err(|_| {
            TensorError::Invalid(format!("non-finite perturbed evaluation at coordinate {i}"))
        })?;
        let fd = (plus - minus) / (2.0 * epsilon);
        let ad = auto.data()[i];
        let rel = (fd - ad).abs() / (fd.abs() + ad.abs() + 1e-8);
        max_rel = max_rel.max(rel);
        coords.push(FdCoordReport {
            coord: i,
            autodiff: ad,
            finite_diff: fd,
            rel_error: rel,
        });
    }
    Ok(FdCheckReport {
        input: input.to_string(),
        coords,
        max_rel_error: max_rel,
        pass: max_rel <= tolerance,
    })
}
