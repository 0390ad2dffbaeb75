use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    /// `(parameter index, flat coordinate)` of the largest error.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

fn eval<F>(f: &F, params: &[Tensor]) -> Result<(Graph, Vec<Var>, Var)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok((g, vars, out))
}

/// Compares reverse-mode gradients of the scalar `f(params)` against
/// central differences `(f(θ+h) - f(θ-h)) / 2h` on every coordinate.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(
            "grad_check",
            format!("step must be positive, got {step}"),
        ));
    }
    let (g, vars, out) = eval(&f, params)?;
    if !g.value(out).is_finite() {
        return Err(Error::NonFinite("grad_check: f at the base point".into()));
    }
    let grads = g.backward(out)?;

    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        coordinates: 0,
    };
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(params[pi].shape()));
        for ci in 0..params[pi].len() {
            let base = params[pi].data()[ci];
            let mut side = |x: f64| -> Result<f64> {
                probe[pi].data_mut()[ci] = x;
                let (g, _, out) = eval(&f, &probe)?;
                let v = g.value(out).item();
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "grad_check: f at parameter {pi}, coordinate {ci}"
                    )));
                }
                Ok(v)
            };
            let plus = side(base + step)?;
            let minus = side(base - step)?;
            probe[pi].data_mut()[ci] = base;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[ci];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (pi, ci);
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_to_roundoff() {
        let report = grad_check(
            |g, p| {
                let sq = g.square(p[0]);
                Ok(g.sum(sq))
            },
            &[Tensor::row(&[1.0, 2.0])],
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.coordinates, 2);
    }

    #[test]
    fn rejects_bad_step() {
        let r = grad_check(|g, p| Ok(g.sum(p[0])), &[Tensor::row(&[1.0])], 0.0);
        assert!(r.is_err());
    }

    #[test]
    fn non_finite_probe_names_coordinate() {
        let r = grad_check(
            |g, p| {
                let v = g.value(p[0]).data()[1];
                let s = g.scale(p[0], if v > 1.0 { f64::INFINITY } else { 1.0 });
                Ok(g.sum(s))
            },
            &[Tensor::row(&[0.0, 1.0])],
            1e-3,
        );
        match r {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("coordinate 1"), "{msg}"),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }
}
