//! Central finite-difference gradient checking.

use super::{Graph, ParamStore, Session, Tensor, TensorError, Var};

/// Below this magnitude the error is effectively absolute: central
/// differences on O(1) losses carry ~1e-11 of roundoff, which would
/// otherwise dominate near-zero gradients.
pub const ERROR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(ERROR_FLOOR, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(ERROR_FLOOR)
}

fn scalar_of(g: &Graph, v: Var) -> Result<f64, TensorError> {
    let shape = g.shape(v);
    if !shape.is_scalar() {
        return Err(TensorError::NotScalar(shape));
    }
    Ok(g.data(v)[0])
}

fn at_coordinate(coordinate: usize, e: TensorError) -> TensorError {
    TensorError::GradCheck {
        coordinate,
        source: Box::new(e),
    }
}

/// Compares the analytic gradient of scalar `f` at `point` against central
/// differences with step `eps`; returns the max relative error over all
/// coordinates.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, TensorError>,
{
    let mut g = Graph::new();
    let x = g.variable(point.clone())?;
    let y = f(&mut g, x)?;
    scalar_of(&g, y)?;
    g.backward(y)?;
    let analytic = g.grad(x).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; point.len()]);

    let eval = |p: Tensor, j: usize| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let x = g.constant(p).map_err(|e| at_coordinate(j, e))?;
        let y = f(&mut g, x).map_err(|e| at_coordinate(j, e))?;
        scalar_of(&g, y).map_err(|e| at_coordinate(j, e))
    };

    let mut worst = 0.0f64;
    for j in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[j] += eps;
        let mut minus = point.clone();
        minus.data_mut()[j] -= eps;
        let numeric = (eval(plus, j)? - eval(minus, j)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[j], numeric));
    }
    Ok(worst)
}

/// Result of [`grad_check_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub max_error: f64,
    /// Parameter name and coordinate of the worst disagreement.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at `worst`.
    pub worst_values: (f64, f64),
    pub coordinates: usize,
}

/// Finite-difference check of every trainable coordinate of `store` for the
/// scalar function built by `f`.
pub fn grad_check_params<F>(store: &ParamStore, f: F, eps: f64) -> Result<ParamCheck, TensorError>
where
    F: Fn(&mut Session) -> Result<Var, TensorError>,
{
    let analytic = {
        let mut s = Session::new(store, true);
        let y = f(&mut s)?;
        scalar_of(&s, y)?;
        s.backward(y)?;
        s.param_grads()
    };

    let mut probe = store.clone();
    let mut report = ParamCheck {
        max_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        coordinates: 0,
    };
    let mut flat = 0;
    for id in store.ids() {
        if !store.is_trainable(id) {
            continue;
        }
        for j in 0..store.get(id).len() {
            let base = store.get(id).data()[j];
            let mut eval = |x: f64| -> Result<f64, TensorError> {
                probe.get_mut(id).data_mut()[j] = x;
                let mut s = Session::new(&probe, false);
                let y = f(&mut s).map_err(|e| at_coordinate(flat, e))?;
                scalar_of(&s, y).map_err(|e| at_coordinate(flat, e))
            };
            let numeric = (eval(base + eps)? - eval(base - eps)?) / (2.0 * eps);
            probe.get_mut(id).data_mut()[j] = base;
            let a = analytic[id.index()].as_ref().map_or(0.0, |g| g[j]);
            let err = relative_error(a, numeric);
            if err > report.max_error {
                report.max_error = err;
                report.worst = Some((store.name(id).to_string(), j));
                report.worst_values = (a, numeric);
            }
            report.coordinates += 1;
            flat += 1;
        }
    }
    Ok(report)
}
