//! Small numerical helpers shared by the modules: deterministic summation,
//! tridiagonal eigenvalues, least squares and asymptotic slope fits.

use nalgebra::{DMatrix, DVector};

/// Pairwise (cascade) summation. The association order depends only on the
/// length, so results are reproducible regardless of how terms were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e` (`e.len() == d.len() - 1`), by implicit QL with Wilkinson
/// shifts. Returned in ascending order.
pub fn tridiagonal_eigenvalues(d: &[f64], e: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut d = d.to_vec();
    let mut e: Vec<f64> = e.iter().copied().chain(std::iter::once(0.0)).collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d
}

/// Ordinary least squares; columns of `basis` are the regressors.
pub fn least_squares(basis: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let m = y.len();
    let k = basis.len();
    if m < k || k == 0 {
        return None;
    }
    let a = DMatrix::from_fn(m, k, |i, j| basis[j][i]);
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let sol = svd.solve(&b, 1e-13).ok()?;
    Some(sol.iter().copied().collect())
}

/// Slope of the straight-line fit `y ≈ c₀ + c₁·x`.
pub fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let ones = vec![1.0; x.len()];
    least_squares(&[ones, x.to_vec()], y).map(|c| c[1]).unwrap_or(f64::NAN)
}

/// Leading exponent `σ` of `y(u) ≈ A·u^σ (1 + B·u^κ + C·u)` as `u → 0`.
///
/// Fits `log y` against `{1, log u, u^κ, u}`. With `kappa = None` the
/// correction exponent is iterated to `κ = min(|σ|, 1)`, which is the order of
/// the first correction for the hypergeometric-type integrals met here.
/// The `u^κ` column is dropped when it would be collinear with `1` or `u`.
pub fn asymptotic_slope(u: &[f64], y: &[f64], kappa: Option<f64>) -> f64 {
    let logu: Vec<f64> = u.iter().map(|v| v.ln()).collect();
    let logy: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let fit = |kap: Option<f64>| -> f64 {
        let mut cols = vec![vec![1.0; u.len()], logu.clone()];
        if let Some(k) = kap {
            if k > 0.02 && (k - 1.0).abs() >= 0.05 {
                cols.push(u.iter().map(|v| v.powf(k)).collect());
            }
        }
        if u.len() > cols.len() + 1 {
            cols.push(u.to_vec());
        }
        least_squares(&cols, &logy).map(|c| c[1]).unwrap_or(f64::NAN)
    };
    if let Some(k) = kappa {
        return fit(Some(k));
    }
    let mut sigma = linear_slope(&logu, &logy);
    for _ in 0..50 {
        let next = fit(Some(sigma.abs().min(1.0)));
        if !next.is_finite() {
            break;
        }
        let done = (next - sigma).abs() < 1e-10;
        sigma = next;
        if done {
            break;
        }
    }
    sigma
}

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let rule = crate::quadrature::gauss_jacobi(order, 0.0, 0.0).expect("Legendre rule");
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        rule.nodes.iter().map(|x| mid + half * x).collect(),
        rule.weights.iter().map(|w| half * w).collect(),
    )
}

/// Geometric mean of positive values.
pub fn geometric_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
}

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    out
}

/// The first `k` primes.
pub fn first_primes(k: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(k);
    let mut c = 2u64;
    while out.len() < k {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pairwise_matches_exact_sum() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn tridiagonal_against_dense() {
        let d = [2.0, -1.0, 0.5, 3.0, 1.5];
        let e = [0.7, 1.1, -0.3, 0.9];
        let ev = tridiagonal_eigenvalues(&d, &e);
        let m = DMatrix::from_fn(5, 5, |i, j| {
            if i == j {
                d[i]
            } else if i + 1 == j {
                e[i]
            } else if j + 1 == i {
                e[j]
            } else {
                0.0
            }
        });
        let mut dense: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in ev.iter().zip(&dense) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn asymptotic_slope_recovers_exponent() {
        let u: Vec<f64> = (0..10).map(|i| 0.2 * 0.6f64.powi(i)).collect();
        let y: Vec<f64> = u.iter().map(|v| v.powf(-0.5) * (1.0 + 0.8 * v.powf(0.5) + 0.3 * v)).collect();
        assert_relative_eq!(asymptotic_slope(&u, &y, None), -0.5, epsilon = 1e-3);
        let y: Vec<f64> = u.iter().map(|v| v.powf(-3.0)).collect();
        assert_relative_eq!(asymptotic_slope(&u, &y, None), -3.0, epsilon = 1e-10);
    }

    #[test]
    fn halton_basics() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert_relative_eq!(radical_inverse(5, 3), 7.0 / 9.0, epsilon = 1e-15);
        assert_eq!(first_primes(5), vec![2, 3, 5, 7, 11]);
    }
}
