//! Central-finite-difference verification of analytic gradients.

use super::graph::{AutodiffError, Graph, Matrix, Tensor};

/// Default perturbation for 64-bit checks.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Compares the analytic gradient of a deterministic scalar loss against
/// central finite differences, entry by entry, and returns the worst
/// symmetric relative error |analytic − numeric| / max(1, |analytic|, |numeric|).
///
/// The closure receives a fresh graph and one leaf handle per parameter; it
/// must build the same loss for the same parameter values every time.
pub fn grad_check<F>(params: &[Matrix], build_loss: F, step: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph, &[Tensor]) -> Result<Tensor, AutodiffError>,
{
    if step <= 0.0 {
        return Err(AutodiffError::Contract(format!(
            "grad_check requires step > 0, got {step}"
        )));
    }

    // Analytic pass.
    let mut graph = Graph::new();
    let handles: Vec<Tensor> = params
        .iter()
        .map(|p| graph.leaf(p.clone(), true))
        .collect::<Result<_, _>>()?;
    let loss = build_loss(&mut graph, &handles)?;
    if graph.shape(loss) != (1, 1) {
        let (rows, cols) = graph.shape(loss);
        return Err(AutodiffError::NotScalar { rows, cols });
    }
    if !graph.scalar(loss).is_finite() {
        return Err(AutodiffError::NonFinite { op: "grad_check" });
    }
    graph.backward(loss)?;
    let analytic: Vec<Matrix> = handles.iter().map(|&h| graph.grad(h).clone()).collect();

    let eval = |work: &[Matrix]| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let hs: Vec<Tensor> = work
            .iter()
            .map(|p| g.leaf(p.clone(), false))
            .collect::<Result<_, _>>()?;
        let loss = build_loss(&mut g, &hs)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: "grad_check" });
        }
        Ok(value)
    };

    let mut work: Vec<Matrix> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, shape) in params.iter().map(|p| p.dim()).enumerate() {
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let original = work[pi][[r, c]];
                work[pi][[r, c]] = original + step;
                let plus = eval(&work)?;
                work[pi][[r, c]] = original - step;
                let minus = eval(&work)?;
                work[pi][[r, c]] = original;
                let numeric = (plus - minus) / (2.0 * step);
                let a = analytic[pi][[r, c]];
                let rel = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
                if rel > worst {
                    worst = rel;
                }
            }
        }
    }
    Ok(worst)
}
