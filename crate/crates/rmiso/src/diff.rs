//! Central finite differences, used as an independent gradient oracle by the
//! verification suite. Analytic gradients everywhere else.

use crate::point::ParameterPoint;

/// Central-difference gradient of `f` at `theta` with per-coordinate step
/// `h * (1 + |theta_i|)`.
pub fn central_gradient<F>(f: F, theta: &ParameterPoint, h: f64) -> ParameterPoint
where
    F: Fn(&ParameterPoint) -> f64,
{
    let mut grad = ParameterPoint::zeros(theta.rows(), theta.cols());
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        let x = theta.as_slice()[i];
        let step = h * (1.0 + x.abs());
        probe.as_mut_slice()[i] = x + step;
        let up = f(&probe);
        probe.as_mut_slice()[i] = x - step;
        let down = f(&probe);
        probe.as_mut_slice()[i] = x;
        grad.as_mut_slice()[i] = (up - down) / (2.0 * step);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let f = |p: &ParameterPoint| 0.5 * p.norm().powi(2);
        let theta = ParameterPoint::from_vec(vec![1.0, -2.0, 0.5]);
        let g = central_gradient(f, &theta, 1e-6);
        for (gi, ti) in g.as_slice().iter().zip(theta.as_slice()) {
            assert!((gi - ti).abs() < 1e-8);
        }
    }
}
