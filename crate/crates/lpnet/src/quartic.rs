//! Real roots of polynomials up to degree four, via the companion matrix
//! with Newton polishing.

use ndarray::prelude::*;
use ndarray_linalg::Eig;

use crate::error::{LpError, Result};

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
}

fn poly_deriv(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len() - 1;
    coeffs[..n]
        .iter()
        .enumerate()
        .map(|(i, &c)| c * (n - i) as f64)
        .collect()
}

fn newton_polish(coeffs: &[f64], mut x: f64) -> f64 {
    let deriv = poly_deriv(coeffs);
    for _ in 0..8 {
        let f = poly_eval(coeffs, x);
        let d = poly_eval(&deriv, x);
        if d == 0.0 {
            break;
        }
        let step = f / d;
        x -= step;
        if step.abs() <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// All real roots of `c4 x^4 + c3 x^3 + c2 x^2 + c1 x + c0`, sorted
/// ascending, accurate to about `1e-10` absolute. Leading zeros reduce
/// the degree; repeated roots are reported once.
pub fn quartic_real_roots(c4: f64, c3: f64, c2: f64, c1: f64, c0: f64) -> Result<Vec<f64>> {
    let mut coeffs = vec![c4, c3, c2, c1, c0];
    if coeffs.iter().any(|v| !v.is_finite()) {
        return Err(LpError::Param("non-finite polynomial coefficient".into()));
    }
    while coeffs.len() > 1 && coeffs[0] == 0.0 {
        coeffs.remove(0);
    }
    if coeffs.len() == 1 {
        if coeffs[0] == 0.0 {
            return Err(LpError::Param(
                "all polynomial coefficients are zero".into(),
            ));
        }
        return Ok(Vec::new());
    }

    let mut roots = match coeffs.len() {
        2 => vec![-coeffs[1] / coeffs[0]],
        3 => {
            let (a, b, c) = (coeffs[0], coeffs[1], coeffs[2]);
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                Vec::new()
            } else {
                let s = disc.sqrt();
                // The numerically stable split avoids cancellation.
                let q = -0.5 * (b + b.signum() * s);
                if q == 0.0 {
                    vec![0.0, -b / a]
                } else {
                    vec![q / a, c / q]
                }
            }
        }
        _ => {
            let n = coeffs.len() - 1;
            let lead = coeffs[0];
            let mut companion = Array2::<f64>::zeros((n, n));
            for i in 1..n {
                companion[[i, i - 1]] = 1.0;
            }
            for i in 0..n {
                companion[[i, n - 1]] = -coeffs[n - i] / lead;
            }
            let (eigs, _) = companion.eig()?;
            let scale = coeffs
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(1.0);
            eigs.iter()
                .filter(|z| z.im.abs() <= 1e-6 * (1.0 + z.norm()))
                .map(|z| newton_polish(&coeffs, z.re))
                .filter(|x| {
                    // Polishing a spurious near-real pair can drift; keep
                    // only genuine roots.
                    poly_eval(&coeffs, *x).abs()
                        <= 1e-7 * scale * (1.0 + x.abs().powi(n as i32))
                })
                .collect()
        }
    };

    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-8 * (1.0 + b.abs()));
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn assert_roots(actual: &[f64], expected: &[f64]) {
        assert_eq!(actual.len(), expected.len(), "{actual:?} vs {expected:?}");
        for (a, e) in actual.iter().zip(expected) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-10);
        }
    }

    #[test]
    fn biquadratic_factors() {
        let r = quartic_real_roots(1.0, 0.0, -5.0, 0.0, 4.0).unwrap();
        assert_roots(&r, &[-2.0, -1.0, 1.0, 2.0]);
    }

    #[test]
    fn quadratic_reduction() {
        let r = quartic_real_roots(0.0, 0.0, 1.0, 0.0, -9.0).unwrap();
        assert_roots(&r, &[-3.0, 3.0]);
    }

    #[test]
    fn no_real_roots() {
        let r = quartic_real_roots(1.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn linear_and_constant() {
        let r = quartic_real_roots(0.0, 0.0, 0.0, 2.0, -5.0).unwrap();
        assert_roots(&r, &[2.5]);
        assert!(quartic_real_roots(0.0, 0.0, 0.0, 0.0, 3.0)
            .unwrap()
            .is_empty());
        assert!(quartic_real_roots(0.0, 0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn cubic_with_known_roots() {
        // (x - 1)(x + 2)(x - 3) = x^3 - 2x^2 - 5x + 6.
        let r = quartic_real_roots(0.0, 1.0, -2.0, -5.0, 6.0).unwrap();
        assert_roots(&r, &[-2.0, 1.0, 3.0]);
    }

    #[test]
    fn quartic_with_two_real_roots() {
        // (x^2 + 1)(x - 1)(x + 4) = x^4 + 3x^3 - 3x^2 + 3x - 4.
        let r = quartic_real_roots(1.0, 3.0, -3.0, 3.0, -4.0).unwrap();
        assert_roots(&r, &[-4.0, 1.0]);
    }

    #[test]
    fn random_factored_quartics_recovered() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let mut roots: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Expand prod (x - r_i).
            let mut c = vec![1.0];
            for r in &roots {
                let mut next = vec![0.0; c.len() + 1];
                for (i, &ci) in c.iter().enumerate() {
                    next[i] += ci;
                    next[i + 1] -= ci * r;
                }
                c = next;
            }
            let found = quartic_real_roots(c[0], c[1], c[2], c[3], c[4]).unwrap();
            // Random roots are almost surely well separated; demand each
            // planted root is matched.
            for r in &roots {
                assert!(
                    found.iter().any(|f| (f - r).abs() <= 1e-7),
                    "missing root {r} in {found:?}"
                );
            }
        }
    }
}
