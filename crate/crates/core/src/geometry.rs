//! Hyperbolic geometry of the real unit ball.
//!
//! The bracket `[x,y]`, the involutions `φ_a`, the pseudo-hyperbolic metric
//! `ρ`, pseudo-balls and the hyperbolic gradient and Laplacian.

use crate::error::{check_dim, Error, Result};

/// Negative radicands of the bracket down to this value are rounding noise.
pub const RADICAND_CLAMP: f64 = -1e-12;
/// Smallest finite-difference step accepted by the derivative helpers.
pub const MIN_STEP: f64 = 1e-8;

/// Ambient dimension, at least 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dim(usize);

impl Dim {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("dimension must be at least 2, got {n}")));
        }
        Ok(Dim(n))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// A point of the closed unit ball with its squared norm cached.
#[derive(Clone, Debug, PartialEq)]
pub struct BallPoint {
    coords: Vec<f64>,
    norm_sq: f64,
}

impl BallPoint {
    /// Interior point, `|x| < 1`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let p = Self::closure(coords)?;
        if p.norm_sq >= 1.0 {
            return Err(Error::domain(format!("point {:?} is not inside the open ball", p.coords)));
        }
        Ok(p)
    }

    /// Point of the closed ball, `|x| ≤ 1`.
    pub fn closure(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::domain("points need at least two coordinates"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain(format!("non-finite coordinates {coords:?}")));
        }
        let norm_sq = dot(&coords, &coords);
        if norm_sq > 1.0 + 1e-14 {
            return Err(Error::domain(format!("point {coords:?} lies outside the closed ball")));
        }
        Ok(BallPoint { coords, norm_sq })
    }

    pub fn origin(n: usize) -> Self {
        BallPoint { coords: vec![0.0; n], norm_sq: 0.0 }
    }

    /// The point `t·e₁`.
    pub fn on_axis(n: usize, t: f64) -> Result<Self> {
        let mut c = vec![0.0; n];
        c[0] = t;
        Self::new(c)
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        let norm_sq = dot(&coords, &coords);
        BallPoint { coords, norm_sq }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }

    /// `1 − |x|²` computed as `(1 − |x|)(1 + |x|)`.
    pub fn defect(&self) -> f64 {
        one_minus_norm_sq(&self.coords)
    }
}

/// Euclidean ball in ℝⁿ.
#[derive(Clone, Debug, PartialEq)]
pub struct EuclideanBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl EuclideanBall {
    pub fn contains(&self, x: &[f64]) -> bool {
        dist_sq(&self.center, x) < self.radius * self.radius
    }
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `1 − |x|²` without cancellation near the sphere.
#[inline]
pub fn one_minus_norm_sq(x: &[f64]) -> f64 {
    let r = dot(x, x).sqrt();
    (1.0 - r) * (1.0 + r)
}

/// `[x,y]²` in the cancellation-free form `|x−y|² + (1−|x|²)(1−|y|²)`.
#[inline]
pub fn bracket_sq_stable(x: &[f64], y: &[f64]) -> f64 {
    dist_sq(x, y) + one_minus_norm_sq(x) * one_minus_norm_sq(y)
}

/// The bracket `[x,y] = √(1 − 2⟨x,y⟩ + |x|²|y|²)` from its defining formula.
pub fn bracket(x: &BallPoint, y: &BallPoint) -> Result<f64> {
    check_dim(x.dim(), y.dim())?;
    bracket_raw(x.coords(), y.coords())
}

pub(crate) fn bracket_raw(x: &[f64], y: &[f64]) -> Result<f64> {
    let rad = 1.0 - 2.0 * dot(x, y) + dot(x, x) * dot(y, y);
    if rad < RADICAND_CLAMP {
        return Err(Error::Inconsistency(format!("bracket radicand {rad:e} is negative")));
    }
    Ok(rad.max(0.0).sqrt())
}

fn check_interior(x: &BallPoint, what: &str) -> Result<()> {
    if x.norm_sq >= 1.0 {
        return Err(Error::domain(format!("{what} = {:?} is not in the open ball", x.coords)));
    }
    Ok(())
}

/// The involution `φ_a` exchanging `a` and `0`.
pub fn mobius(a: &BallPoint, x: &BallPoint) -> Result<BallPoint> {
    check_dim(a.dim(), x.dim())?;
    check_interior(a, "a")?;
    check_interior(x, "x")?;
    Ok(BallPoint::from_raw(mobius_raw(a.coords(), x.coords())))
}

pub(crate) fn mobius_raw(a: &[f64], x: &[f64]) -> Vec<f64> {
    let b2 = bracket_sq_stable(x, a);
    let d2 = dist_sq(x, a);
    let da = one_minus_norm_sq(a);
    a.iter().zip(x).map(|(ai, xi)| (ai * d2 + da * (ai - xi)) / b2).collect()
}

/// Pseudo-hyperbolic distance `ρ(a,b) = |a−b|/[a,b]`.
pub fn rho(a: &BallPoint, b: &BallPoint) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    check_interior(a, "a")?;
    check_interior(b, "b")?;
    Ok(rho_raw(a.coords(), b.coords()))
}

#[inline]
pub fn rho_raw(a: &[f64], b: &[f64]) -> f64 {
    rho_sq_raw(a, b).sqrt()
}

#[inline]
pub fn rho_sq_raw(a: &[f64], b: &[f64]) -> f64 {
    let d2 = dist_sq(a, b);
    if d2 == 0.0 {
        return 0.0;
    }
    d2 / bracket_sq_stable(a, b)
}

/// The pseudo-ball `E_r(a) = {x : ρ(x,a) < r}` as a Euclidean ball.
pub fn pseudo_ball(a: &BallPoint, r: f64) -> Result<EuclideanBall> {
    check_interior(a, "a")?;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::domain(format!("pseudo-ball radius must lie in (0,1), got {r}")));
    }
    let a2 = a.norm_sq();
    let den = 1.0 - a2 * r * r;
    let center = a.coords().iter().map(|c| (1.0 - r * r) * c / den).collect();
    Ok(EuclideanBall { center, radius: a.defect() * r / den })
}

/// Range of `|y|` compatible with `ρ(x,y) < r` given `|x| = t`.
pub fn radial_window(t: f64, r: f64) -> (f64, f64) {
    ((t - r) / (1.0 - r * t), (t + r) / (1.0 + r * t))
}

/// `(1−|φ_a(x)|²)ⁿ / (1−|x|²)ⁿ = ((1−|a|²)/[x,a]²)ⁿ`.
pub fn jacobian_magnitude(a: &BallPoint, x: &BallPoint) -> Result<f64> {
    check_dim(a.dim(), x.dim())?;
    check_interior(a, "a")?;
    check_interior(x, "x")?;
    let ratio = a.defect() / bracket_sq_stable(x.coords(), a.coords());
    Ok(ratio.powi(a.dim() as i32))
}

fn fd_step(a: &BallPoint, h: Option<f64>) -> Result<f64> {
    check_interior(a, "a")?;
    let h = h.unwrap_or(1e-5 * (1.0 - a.norm()));
    if !(h >= MIN_STEP) {
        return Err(Error::domain(format!("finite-difference step {h:e} below {MIN_STEP:e}")));
    }
    if a.norm() + h >= 1.0 {
        return Err(Error::domain("finite-difference stencil leaves the ball"));
    }
    Ok(h)
}

fn euclid_gradient(f: &dyn Fn(&[f64]) -> f64, a: &[f64], h: f64) -> Vec<f64> {
    let mut x = a.to_vec();
    (0..a.len())
        .map(|i| {
            x[i] = a[i] + h;
            let fp = f(&x);
            x[i] = a[i] - h;
            let fm = f(&x);
            x[i] = a[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `∇^h f(a) = (1−|a|²)∇f(a)` by central differences.
pub fn hyperbolic_gradient(f: &dyn Fn(&[f64]) -> f64, a: &BallPoint, h: Option<f64>) -> Result<Vec<f64>> {
    let h = fd_step(a, h)?;
    let d = a.defect();
    Ok(euclid_gradient(f, a.coords(), h).into_iter().map(|g| d * g).collect())
}

/// `Δ_h f(a) = (1−|a|²)²Δf + 2(n−2)(1−|a|²)⟨a,∇f⟩` by central differences.
pub fn laplacian_h(f: &dyn Fn(&[f64]) -> f64, a: &BallPoint, h: Option<f64>) -> Result<f64> {
    let h = fd_step(a, h)?;
    let c = a.coords();
    let n = c.len();
    let f0 = f(c);
    let mut x = c.to_vec();
    let mut lap = 0.0;
    for i in 0..n {
        x[i] = c[i] + h;
        let fp = f(&x);
        x[i] = c[i] - h;
        let fm = f(&x);
        x[i] = c[i];
        lap += (fp - 2.0 * f0 + fm) / (h * h);
    }
    let d = a.defect();
    let mut out = d * d * lap;
    if n != 2 {
        let g = euclid_gradient(f, c, h);
        out += 2.0 * (n as f64 - 2.0) * d * dot(c, &g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(c: &[f64]) -> BallPoint {
        BallPoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn bracket_examples() {
        let y = p(&[0.3, -0.4]);
        assert_eq!(bracket(&BallPoint::origin(2), &y).unwrap(), 1.0);
        let x = p(&[0.5, 0.0]);
        assert_relative_eq!(bracket(&x, &x).unwrap(), 0.75, epsilon = 1e-15);
        let b = bracket(&p(&[0.6, 0.0]), &p(&[0.0, 0.8])).unwrap();
        assert_relative_eq!(b, 1.2304f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(b, 1.109234, epsilon = 1e-6);
    }

    #[test]
    fn bracket_dimension_mismatch() {
        let e = bracket(&p(&[0.1, 0.0]), &p(&[0.1, 0.0, 0.0])).unwrap_err();
        assert!(matches!(e, Error::DimensionMismatch { expected: 2, got: 3 }));
    }

    #[test]
    fn mobius_examples() {
        let a = p(&[0.3, -0.2]);
        let o = BallPoint::origin(2);
        let m0 = mobius(&a, &o).unwrap();
        assert_relative_eq!(m0.coords()[0], 0.3, epsilon = 1e-15);
        assert_relative_eq!(m0.coords()[1], -0.2, epsilon = 1e-15);
        assert!(mobius(&a, &a).unwrap().norm() < 1e-15);
        let v = mobius(&p(&[0.5, 0.0]), &p(&[-0.5, 0.0])).unwrap();
        assert_relative_eq!(v.defect(), 0.36, epsilon = 1e-14);
        assert_relative_eq!(v.norm(), 0.8, epsilon = 1e-14);
        assert!(matches!(mobius(&a, &BallPoint::closure(vec![1.0, 0.0]).unwrap()), Err(Error::Domain(_))));
    }

    #[test]
    fn rho_examples() {
        let a = p(&[0.5, 0.0]);
        assert_eq!(rho(&a, &a).unwrap(), 0.0);
        assert_relative_eq!(rho(&a, &BallPoint::origin(2)).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(rho(&a, &p(&[-0.5, 0.0])).unwrap(), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn pseudo_ball_examples() {
        let b = pseudo_ball(&BallPoint::origin(2), 0.3).unwrap();
        assert_eq!(b.center, vec![0.0, 0.0]);
        assert_relative_eq!(b.radius, 0.3, epsilon = 1e-15);
        let b = pseudo_ball(&p(&[0.5, 0.0]), 0.5).unwrap();
        assert_relative_eq!(b.center[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(b.radius, 0.4, epsilon = 1e-15);
        assert!(pseudo_ball(&p(&[0.5, 0.0]), 1.0).is_err());
        assert!(pseudo_ball(&p(&[0.5, 0.0]), 0.0).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let x = p(&[0.2, 0.7]);
        assert_relative_eq!(jacobian_magnitude(&BallPoint::origin(2), &x).unwrap(), 1.0, epsilon = 1e-14);
        let j = jacobian_magnitude(&p(&[0.5, 0.0]), &BallPoint::origin(2)).unwrap();
        assert_relative_eq!(j, 0.5625, epsilon = 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let a = p(&[0.5, 0.0]);
        let g = hyperbolic_gradient(&|_: &[f64]| 3.0, &a, None).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let g = hyperbolic_gradient(&|x: &[f64]| x[0], &a, None).unwrap();
        assert_relative_eq!(g[0], 0.75, epsilon = 1e-9);
        assert!(g[1].abs() < 1e-12);
        assert!(hyperbolic_gradient(&|x: &[f64]| x[0], &a, Some(1e-9)).is_err());
    }

    #[test]
    fn gradient_invariance_at_origin() {
        let a = p(&[0.4, -0.3]);
        let w = [0.7, 0.2];
        let f = |x: &[f64]| w[0] * x[0] + w[1] * x[1];
        let fa = |z: &[f64]| f(&mobius_raw(a.coords(), z));
        let g = hyperbolic_gradient(&fa, &BallPoint::origin(2), None).unwrap();
        let lhs = dot(&g, &g).sqrt();
        let rhs = dot(&w, &w).sqrt() * a.defect();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-8);
    }

    #[test]
    fn laplacian_examples() {
        let l = laplacian_h(&|x: &[f64]| x[0], &p(&[0.3, 0.1]), None).unwrap();
        assert!(l.abs() < 1e-5);
        let l = laplacian_h(&|x: &[f64]| x[0], &p(&[0.5, 0.0, 0.0]), None).unwrap();
        assert_relative_eq!(l, 0.75, epsilon = 1e-5);
        let l = laplacian_h(&|x: &[f64]| dot(x, x), &BallPoint::origin(2), None).unwrap();
        assert_relative_eq!(l, 4.0, epsilon = 1e-5);
    }

    fn ball_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
        (prop::collection::vec(-1.0f64..1.0, n), 0.0f64..0.995).prop_filter_map("nonzero", |(v, r)| {
            let s = dot(&v, &v).sqrt();
            (s > 1e-6).then(|| v.iter().map(|c| c * r / s).collect())
        })
    }

    proptest! {
        #[test]
        fn bracket_symmetric_and_bounded(x in ball_point(3), y in ball_point(3)) {
            let (x, y) = (p(&x), p(&y));
            let bxy = bracket(&x, &y).unwrap();
            prop_assert!((bxy - bracket(&y, &x).unwrap()).abs() <= 1e-15);
            let nn = x.norm() * y.norm();
            prop_assert!(bxy >= 1.0 - nn - 1e-12 && bxy <= 1.0 + nn + 1e-12);
            let stable = bracket_sq_stable(x.coords(), y.coords());
            prop_assert!((bxy * bxy - stable).abs() <= 1e-12 * stable.max(1e-300).max(1.0) * 10.0);
        }

        #[test]
        fn involution_and_metric(a in ball_point(2), x in ball_point(2)) {
            let (a, x) = (p(&a), p(&x));
            let y = mobius(&a, &mobius(&a, &x).unwrap()).unwrap();
            for (u, v) in y.coords().iter().zip(x.coords()) {
                prop_assert!((u - v).abs() <= 1e-9);
            }
            let r = rho(&a, &x).unwrap();
            prop_assert!((0.0..1.0).contains(&r));
            prop_assert!((r - mobius(&a, &x).unwrap().norm()).abs() <= 1e-9);
        }

        #[test]
        fn pseudo_ball_membership(a in ball_point(2), x in ball_point(2), r in 0.05f64..0.95) {
            let (a, x) = (p(&a), p(&x));
            let ball = pseudo_ball(&a, r).unwrap();
            let d = rho(&x, &a).unwrap();
            prop_assume!((d - r).abs() > 1e-9);
            prop_assert_eq!(ball.contains(x.coords()), d < r);
        }
    }
}
