//! Central finite-difference gradient checking used by the test suites.

/// Numerical gradient of a scalar function at `x` via central differences:
/// df/dx_i ~ (f(x + h e_i) - f(x - h e_i)) / 2h.
pub fn numeric_grad<F>(mut f: F, x: &mut [f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(x);
        x[i] = orig - h;
        let fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Largest elementwise relative error between analytic and numeric
/// gradients, with a floor that keeps near-zero pairs from exploding.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst: f64 = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric.iter()) {
        let scale = a.abs().max(n.abs()).max(1e-6);
        worst = worst.max((a - n).abs() / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_recovered() {
        let mut x = vec![1.0, -2.0, 3.0];
        let g = numeric_grad(|v| v.iter().map(|a| a * a).sum(), &mut x, 1e-5);
        let expect = [2.0, -4.0, 6.0];
        assert!(max_rel_err(&expect, &g) < 1e-8);
    }

    #[test]
    fn rel_err_floors_tiny_magnitudes() {
        assert!(max_rel_err(&[0.0], &[1e-12]) < 1e-4);
        assert!(max_rel_err(&[1.0], &[2.0]) > 0.4);
    }
}
