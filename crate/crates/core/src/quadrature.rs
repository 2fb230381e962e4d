//! Quadrature on the ball for the measures `dν_α = (1−|x|²)^α dν` and on the
//! sphere for the normalized surface measure `σ`.
//!
//! Ball rules are products of a Gauss–Jacobi rule in `t = |x|²` (which absorbs
//! the endpoint weight `(1−t)^α`) and a sphere rule.

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numerics::{asymptotic_slope, least_squares, pairwise_sum, tridiagonal_eigenvalues};

/// Relative change between successive orders above which a quadrature value
/// is declared unresolved.
pub const RESOLUTION_TOL: f64 = 1e-4;

/// Gauss–Jacobi rule on `[-1, 1]` for the weight `(1−x)^a (1+x)^b`.
#[derive(Clone, Debug)]
pub struct GaussJacobi {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn jacobi_recurrence(order: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let ab = a + b;
    let alpha: Vec<f64> = (0..order)
        .map(|k| {
            if k == 0 {
                (b - a) / (ab + 2.0)
            } else {
                let k2 = 2.0 * k as f64 + ab;
                (b * b - a * a) / (k2 * (k2 + 2.0))
            }
        })
        .collect();
    let beta: Vec<f64> = (1..=order)
        .map(|k| {
            let kf = k as f64;
            if k == 1 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                let k2 = 2.0 * kf + ab;
                4.0 * kf * (kf + a) * (kf + b) * (kf + ab) / (k2 * k2 * (k2 + 1.0) * (k2 - 1.0))
            }
        })
        .collect();
    (alpha, beta)
}

/// Golub–Welsch eigenvalues polished by Newton steps on the orthonormal
/// recurrence; weights from the Christoffel function.
pub fn gauss_jacobi(order: usize, a: f64, b: f64) -> Result<GaussJacobi> {
    if order == 0 {
        return Err(Error::invalid("quadrature order must be positive"));
    }
    if !(a > -1.0 && b > -1.0) {
        return Err(Error::domain(format!("Jacobi exponents must exceed -1, got ({a}, {b})")));
    }
    let (alpha, beta) = jacobi_recurrence(order, a, b);
    let mu0 = ((a + b + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
        - ln_gamma(a + b + 2.0))
    .exp();
    let sqb: Vec<f64> = beta.iter().map(|v| v.sqrt()).collect();
    let mut nodes = tridiagonal_eigenvalues(&alpha, &sqb[..order - 1]);

    // p̃_k(x) for k < order, and p̃_order with its derivative.
    let eval = |x: f64, sum_sq: &mut f64| -> (f64, f64) {
        let mut p_prev = 0.0;
        let mut p = 1.0 / mu0.sqrt();
        let mut dp_prev = 0.0;
        let mut dp = 0.0;
        *sum_sq = p * p;
        for k in 0..order {
            let sb_prev = if k == 0 { 0.0 } else { sqb[k - 1] };
            let p_next = ((x - alpha[k]) * p - sb_prev * p_prev) / sqb[k];
            let dp_next = (p + (x - alpha[k]) * dp - sb_prev * dp_prev) / sqb[k];
            p_prev = p;
            p = p_next;
            dp_prev = dp;
            dp = dp_next;
            if k + 1 < order {
                *sum_sq += p * p;
            }
        }
        (p, dp)
    };

    let mut weights = vec![0.0; order];
    for (i, x) in nodes.iter_mut().enumerate() {
        let mut s = 0.0;
        for _ in 0..4 {
            let (p, dp) = eval(*x, &mut s);
            if dp == 0.0 || !dp.is_finite() {
                break;
            }
            let step = p / dp;
            let nx = *x - step;
            if nx.abs() >= 1.0 {
                break;
            }
            *x = nx;
            if step.abs() < 1e-16 {
                break;
            }
        }
        eval(*x, &mut s);
        weights[i] = 1.0 / s;
    }
    Ok(GaussJacobi { nodes, weights })
}

/// Radial rule for `∫_𝔹 F(|x|) dν_α = (n/2)∫₀¹ t^{n/2−1}(1−t)^α F(√t) dt`.
#[derive(Clone, Debug)]
pub struct RadialRule {
    pub n: usize,
    pub alpha: f64,
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RadialRule {
    pub fn new(n: usize, alpha: f64, order: usize) -> Result<Self> {
        if !(alpha > -1.0) {
            return Err(Error::domain(format!("weight exponent alpha must exceed -1, got {alpha}")));
        }
        let b = n as f64 / 2.0 - 1.0;
        let gj = gauss_jacobi(order, alpha, b)?;
        let scale = (n as f64 / 2.0) * (-(alpha + b + 1.0) * std::f64::consts::LN_2).exp();
        let nodes = gj.nodes.iter().map(|x| (0.5 * (1.0 + x)).sqrt()).collect();
        let weights = gj.weights.iter().map(|w| w * scale).collect();
        Ok(RadialRule { n, alpha, order, nodes, weights })
    }

    /// `Σ wᵢ F(rᵢ)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().zip(&self.weights).map(|(&r, &w)| w * f(r)).collect();
        pairwise_sum(&terms)
    }
}

/// `∫_𝔹 |x|^{2k} dν_α = (n/2)·B(n/2 + k, α + 1)`.
pub fn radial_moment(n: usize, alpha: f64, k: u32) -> f64 {
    let a = n as f64 / 2.0 + k as f64;
    let b = alpha + 1.0;
    (n as f64 / 2.0) * (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// Total mass `ν_α(𝔹)`.
pub fn ball_mass(n: usize, alpha: f64) -> f64 {
    radial_moment(n, alpha, 0)
}

/// Rule for the normalized surface measure on the unit sphere of ℝⁿ.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub n: usize,
    pub order: usize,
    /// Unit vectors, row-major, `n` coordinates each.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// `n = 2`: `order` equispaced angles, exact for trigonometric degree
    /// `order − 1`. `n ≥ 3`: Gauss–Jacobi in the first coordinate with
    /// `order/2` points times the rule on the lower sphere, exact for degree
    /// `order − 1` (for even `order`). Rules with `n ≥ 4` are experimental.
    pub fn new(n: usize, order: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("sphere rules need n >= 2"));
        }
        if order == 0 {
            return Err(Error::invalid("sphere order must be positive"));
        }
        if n == 2 {
            let m = order;
            let mut nodes = Vec::with_capacity(2 * m);
            for j in 0..m {
                let th = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                nodes.push(th.cos());
                nodes.push(th.sin());
            }
            return Ok(SphereRule { n, order, nodes, weights: vec![1.0 / m as f64; m] });
        }
        let lower = SphereRule::new(n - 1, order)?;
        let e = (n as f64 - 3.0) / 2.0;
        let gj = gauss_jacobi((order / 2).max(1), e, e)?;
        let total: f64 = gj.weights.iter().sum();
        let mut nodes = Vec::with_capacity(n * gj.nodes.len() * lower.len());
        let mut weights = Vec::with_capacity(gj.nodes.len() * lower.len());
        for (t, wt) in gj.nodes.iter().zip(&gj.weights) {
            let s = (1.0 - t * t).max(0.0).sqrt();
            for (k, wl) in lower.weights.iter().enumerate() {
                nodes.push(*t);
                nodes.extend(lower.node(k).iter().map(|c| s * c));
                weights.push(wt / total * wl);
            }
        }
        Ok(SphereRule { n, order, nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.n..(j + 1) * self.n]
    }

    pub fn is_experimental(&self) -> bool {
        self.n >= 4
    }
}

/// `∫_𝕊 g dσ`.
pub fn integrate_sphere(g: impl Fn(&[f64]) -> f64 + Sync, rule: &SphereRule) -> Result<f64> {
    let vals: Vec<f64> = (0..rule.len()).into_par_iter().map(|j| g(rule.node(j))).collect();
    let mut terms = Vec::with_capacity(vals.len());
    for (j, v) in vals.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { node: rule.node(j).to_vec(), value: *v });
        }
        terms.push(v * rule.weights[j]);
    }
    Ok(pairwise_sum(&terms))
}

/// Radial and spherical orders of a ball rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadSpec {
    pub radial_order: usize,
    pub sphere_order: usize,
}

impl QuadSpec {
    pub fn default_for(n: usize) -> Self {
        let sphere_order = match n {
            2 => 512,
            3 => 64,
            _ => 16,
        };
        QuadSpec { radial_order: 200, sphere_order }
    }

    pub fn refined(self) -> Self {
        QuadSpec { radial_order: 2 * self.radial_order, sphere_order: 2 * self.sphere_order }
    }

    /// Orders adequate for integrands peaked at distance `1 − t` from the
    /// sphere.
    pub fn for_peak(self, n: usize, t: f64) -> Self {
        let gap = (1.0 - t.abs()).max(1e-6);
        let radial = self.radial_order.max((8.0 / gap.sqrt()).ceil() as usize);
        let sphere = match n {
            2 => self.sphere_order.max((36.0 / gap).ceil() as usize).next_power_of_two(),
            3 => self.sphere_order.max((12.0 / gap).ceil() as usize).next_power_of_two().min(512),
            _ => self.sphere_order,
        };
        QuadSpec { radial_order: radial, sphere_order: sphere.max(self.sphere_order) }
    }
}

/// Product rule for `∫_𝔹 f dν_α`.
#[derive(Clone, Debug)]
pub struct BallRule {
    pub n: usize,
    pub alpha: f64,
    pub radial: RadialRule,
    pub sphere: SphereRule,
    /// Factor `n/2` built into the radial weights so that `ν(𝔹) = 1`.
    pub normalization: f64,
}

/// A ball rule expanded into explicit nodes and combined weights.
#[derive(Clone, Debug)]
pub struct FlatRule {
    pub n: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FlatRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }

    /// Evaluates `f` at every node, in parallel.
    pub fn values(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        (0..self.len()).into_par_iter().map(|i| f(self.point(i))).collect()
    }

    /// `Σ wᵢ vᵢ` for precomputed node values, optionally restricted to a mask.
    pub fn sum(&self, values: &[f64], mask: Option<&[bool]>) -> Result<f64> {
        let mut terms = Vec::with_capacity(values.len());
        for (i, (&v, &w)) in values.iter().zip(&self.weights).enumerate() {
            if mask.is_some_and(|m| !m[i]) {
                continue;
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { node: self.point(i).to_vec(), value: v });
            }
            terms.push(v * w);
        }
        Ok(pairwise_sum(&terms))
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<f64> {
        let v = self.values(f);
        self.sum(&v, None)
    }
}

impl BallRule {
    pub fn new(n: usize, alpha: f64, spec: QuadSpec) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("ball rules need n >= 2"));
        }
        let radial = RadialRule::new(n, alpha, spec.radial_order)?;
        let sphere = SphereRule::new(n, spec.sphere_order)?;
        Ok(BallRule { n, alpha, radial, sphere, normalization: n as f64 / 2.0 })
    }

    pub fn spec(&self) -> QuadSpec {
        QuadSpec { radial_order: self.radial.order, sphere_order: self.sphere.order }
    }

    pub fn len(&self) -> usize {
        self.radial.nodes.len() * self.sphere.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `∫ f dν_α`; parallel over radial nodes with a fixed reduction order.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<f64> {
        let n = self.n;
        let shells: Vec<Result<f64>> = (0..self.radial.nodes.len())
            .into_par_iter()
            .map(|i| {
                let r = self.radial.nodes[i];
                let mut x = vec![0.0; n];
                let mut terms = Vec::with_capacity(self.sphere.len());
                for j in 0..self.sphere.len() {
                    for (xk, zk) in x.iter_mut().zip(self.sphere.node(j)) {
                        *xk = r * zk;
                    }
                    let v = f(&x);
                    if !v.is_finite() {
                        return Err(Error::NonFinite { node: x, value: v });
                    }
                    terms.push(v * self.sphere.weights[j]);
                }
                Ok(self.radial.weights[i] * pairwise_sum(&terms))
            })
            .collect();
        let mut outer = Vec::with_capacity(shells.len());
        for s in shells {
            outer.push(s?);
        }
        Ok(pairwise_sum(&outer))
    }

    pub fn flatten(&self) -> FlatRule {
        let n = self.n;
        let mut points = Vec::with_capacity(n * self.len());
        let mut weights = Vec::with_capacity(self.len());
        for (r, wr) in self.radial.nodes.iter().zip(&self.radial.weights) {
            for j in 0..self.sphere.len() {
                points.extend(self.sphere.node(j).iter().map(|z| r * z));
                weights.push(wr * self.sphere.weights[j]);
            }
        }
        FlatRule { n, points, weights }
    }
}

pub fn build_ball_rule(n: usize, alpha: f64, radial_order: usize, sphere_order: usize) -> Result<BallRule> {
    BallRule::new(n, alpha, QuadSpec { radial_order, sphere_order })
}

pub fn integrate_ball(f: impl Fn(&[f64]) -> f64 + Sync, rule: &BallRule) -> Result<f64> {
    rule.integrate(f)
}

/// Integrates at `spec` and at the doubled spec; fails when they disagree.
pub fn integrate_resolved(
    n: usize,
    alpha: f64,
    spec: QuadSpec,
    f: impl Fn(&[f64]) -> f64 + Sync,
) -> Result<f64> {
    let coarse = BallRule::new(n, alpha, spec)?.integrate(&f)?;
    let fine = BallRule::new(n, alpha, spec.refined())?.integrate(&f)?;
    check_resolution(coarse, fine, &format!("ball integral at orders {spec:?}"))?;
    Ok(fine)
}

pub(crate) fn check_resolution(coarse: f64, fine: f64, what: &str) -> Result<()> {
    let change = (coarse - fine).abs() / fine.abs().max(f64::MIN_POSITIVE);
    if change > RESOLUTION_TOL {
        return Err(Error::Resolution(format!(
            "{what}: relative change {change:.3e} between successive orders exceeds {RESOLUTION_TOL:e}"
        )));
    }
    Ok(())
}

/// As [`check_resolution`], measuring the change against `max(|fine|, scale)`.
pub(crate) fn check_resolution_scaled(coarse: f64, fine: f64, scale: f64, what: &str) -> Result<()> {
    let change = (coarse - fine).abs() / fine.abs().max(scale).max(f64::MIN_POSITIVE);
    if change > RESOLUTION_TOL {
        return Err(Error::Resolution(format!(
            "{what}: relative change {change:.3e} between successive orders exceeds {RESOLUTION_TOL:e}"
        )));
    }
    Ok(())
}

/// Growth regime of `I_c` and `J_{b,c}` near the sphere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Power,
    Logarithmic,
    Bounded,
}

impl Regime {
    pub fn of(c: f64) -> Self {
        if c > 0.0 {
            Regime::Power
        } else if c == 0.0 {
            Regime::Logarithmic
        } else {
            Regime::Bounded
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Power => "power",
            Regime::Logarithmic => "logarithmic",
            Regime::Bounded => "bounded",
        }
    }
}

#[derive(Clone, Debug)]
pub struct IjRow {
    pub t: f64,
    pub i_c: f64,
    pub j_bc: f64,
    pub envelope: f64,
}

/// Shape statistics of one sweep against its envelope.
#[derive(Clone, Debug)]
pub struct EnvelopeFit {
    /// Power regime: fitted exponent of `1 − t²`. Bounded regime: the same
    /// fit, expected near 0. Logarithmic regime: coefficient of
    /// `log(1/(1−t²))` over the full sweep.
    pub slope: f64,
    /// Logarithmic regime only: the coefficient refitted on the deeper half.
    pub deep_slope: Option<f64>,
    /// max/min of value/envelope over the sweep.
    pub envelope_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct IjReport {
    pub n: usize,
    pub b: f64,
    pub c: f64,
    pub regime: Regime,
    pub rows: Vec<IjRow>,
    pub fit_i: EnvelopeFit,
    pub fit_j: EnvelopeFit,
}

/// Tolerances for the envelope checks.
pub const SLOPE_TOL: f64 = 0.05;
pub const BOUNDED_RATIO_MAX: f64 = 10.0;
/// Smallest sweep for the logarithmic fit.
pub const LOG_MIN_RADII: usize = 8;

impl IjReport {
    pub fn fit_passes(&self, fit: &EnvelopeFit) -> bool {
        match self.regime {
            Regime::Power => (fit.slope + self.c).abs() <= SLOPE_TOL,
            Regime::Bounded => fit.slope.abs() <= SLOPE_TOL && fit.envelope_ratio < BOUNDED_RATIO_MAX,
            Regime::Logarithmic => {
                fit.slope > 0.0
                    && fit.deep_slope.is_some_and(|d| (d / fit.slope - 1.0).abs() <= SLOPE_TOL)
                    && fit.envelope_ratio < BOUNDED_RATIO_MAX
            }
        }
    }

    pub fn passes(&self) -> bool {
        self.fit_passes(&self.fit_i) && self.fit_passes(&self.fit_j)
    }
}

/// The envelope `(1−t²)^{−c}`, `1 + log(1/(1−t²))` or `1`.
pub fn ij_envelope(c: f64, t: f64) -> f64 {
    let u = (1.0 - t) * (1.0 + t);
    match Regime::of(c) {
        Regime::Power => u.powf(-c),
        Regime::Logarithmic => 1.0 + (1.0 / u).ln(),
        Regime::Bounded => 1.0,
    }
}

fn log_coefficient(u: &[f64], y: &[f64]) -> f64 {
    let l: Vec<f64> = u.iter().map(|v| (1.0 / v).ln()).collect();
    let mut cols = vec![vec![1.0; u.len()], l.clone()];
    if u.len() >= 4 {
        cols.push(u.iter().zip(&l).map(|(a, b)| a * b).collect());
    }
    if u.len() >= 5 {
        cols.push(u.to_vec());
    }
    least_squares(&cols, y).map(|c| c[1]).unwrap_or(f64::NAN)
}

pub(crate) fn envelope_fit(c: f64, ts: &[f64], ys: &[f64]) -> EnvelopeFit {
    let u: Vec<f64> = ts.iter().map(|t| (1.0 - t) * (1.0 + t)).collect();
    let scaled: Vec<f64> = ts.iter().zip(ys).map(|(t, y)| y / ij_envelope(c, *t)).collect();
    let max = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let min = scaled.iter().cloned().fold(f64::MAX, f64::min);
    let envelope_ratio = max / min;
    match Regime::of(c) {
        Regime::Power => EnvelopeFit { slope: asymptotic_slope(&u, ys, None), deep_slope: None, envelope_ratio },
        Regime::Bounded => EnvelopeFit {
            slope: asymptotic_slope(&u, ys, Some(c.abs().min(1.0))),
            deep_slope: None,
            envelope_ratio,
        },
        Regime::Logarithmic => {
            let mut idx: Vec<usize> = (0..u.len()).collect();
            idx.sort_by(|&a, &b| u[a].partial_cmp(&u[b]).unwrap());
            let half = &idx[..(u.len() + 1) / 2];
            let du: Vec<f64> = half.iter().map(|&i| u[i]).collect();
            let dy: Vec<f64> = half.iter().map(|&i| ys[i]).collect();
            EnvelopeFit {
                slope: log_coefficient(&u, ys),
                deep_slope: Some(log_coefficient(&du, &dy)),
                envelope_ratio,
            }
        }
    }
}

/// `I_c(t e₁) = ∫_𝕊 |t e₁ − ζ|^{−(n−1+c)} dσ(ζ)` at sphere order `m`.
pub fn i_c(n: usize, c: f64, t: f64, m: usize) -> Result<f64> {
    let rule = SphereRule::new(n, m)?;
    let e = -(n as f64 - 1.0 + c) / 2.0;
    integrate_sphere(
        |z| {
            let d2 = (t - z[0]) * (t - z[0]) + z[1..].iter().map(|v| v * v).sum::<f64>();
            d2.powf(e)
        },
        &rule,
    )
}

/// `J_{b,c}(t e₁) = ∫_𝔹 (1−|y|²)^b [x,y]^{−(n+b+c)} dν(y)`.
pub fn j_bc(n: usize, b: f64, c: f64, t: f64, spec: QuadSpec) -> Result<f64> {
    let rule = BallRule::new(n, b, spec)?;
    let e = -(n as f64 + b + c) / 2.0;
    let x: Vec<f64> = std::iter::once(t).chain(std::iter::repeat(0.0).take(n - 1)).collect();
    rule.integrate(|y| crate::geometry::bracket_sq_stable(&x, y).powf(e))
}

/// Sweeps `I_c` and `J_{b,c}` along `x = t e₁` and fits the envelope shape.
pub fn verify_i_j(n: usize, b: f64, c: f64, radii: &[f64], base: QuadSpec) -> Result<IjReport> {
    if !(b > -1.0) {
        return Err(Error::domain(format!("b must exceed -1, got {b}")));
    }
    if radii.iter().any(|t| !(0.0..1.0).contains(t)) {
        return Err(Error::domain("sweep radii must lie in [0,1)"));
    }
    // the deeper half needs the same four-term model as the full sweep
    if Regime::of(c) == Regime::Logarithmic && radii.len() < LOG_MIN_RADII {
        return Err(Error::domain(format!("the logarithmic regime needs at least {LOG_MIN_RADII} radii, got {}", radii.len())));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &t in radii {
        let spec = base.for_peak(n, t);
        let i0 = i_c(n, c, t, spec.sphere_order)?;
        let i1 = i_c(n, c, t, 2 * spec.sphere_order)?;
        check_resolution(i0, i1, &format!("I_c at t = {t}"))?;
        let j0 = j_bc(n, b, c, t, spec)?;
        let j1 = j_bc(n, b, c, t, spec.refined())?;
        check_resolution(j0, j1, &format!("J_bc at t = {t}"))?;
        rows.push(IjRow { t, i_c: i1, j_bc: j1, envelope: ij_envelope(c, t) });
    }
    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let is: Vec<f64> = rows.iter().map(|r| r.i_c).collect();
    let js: Vec<f64> = rows.iter().map(|r| r.j_bc).collect();
    Ok(IjReport {
        n,
        b,
        c,
        regime: Regime::of(c),
        fit_i: envelope_fit(c, &ts, &is),
        fit_j: envelope_fit(c, &ts, &js),
        rows,
    })
}

/// `count` radii with `1 − t` log-spaced between `1 − lo` and `1 − hi`.
pub fn boundary_sweep(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = ((1.0 - lo).ln(), (1.0 - hi).ln());
    (0..count)
        .map(|i| {
            let s = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            1.0 - (a + s * (b - a)).exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_rule_is_exact() {
        let r = gauss_jacobi(5, 0.0, 0.0).unwrap();
        let s: f64 = r.weights.iter().sum();
        assert_relative_eq!(s, 2.0, epsilon = 1e-14);
        let m8: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(8)).sum();
        assert_relative_eq!(m8, 2.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn jacobi_rule_against_beta_moments() {
        for &(a, b) in &[(0.5, -0.5), (3.0, 0.0), (-0.9, 1.5), (-0.5, -0.5)] {
            let g = gauss_jacobi(12, a, b).unwrap();
            for k in 0..20u32 {
                // ∫(1−x)^a(1+x)^b ((1+x)/2)^k dx = 2^{a+b+1} B(a+1, b+k+1)
                let exact = ((a + b + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + k as f64 + 1.0)
                    - ln_gamma(a + b + k as f64 + 2.0))
                .exp();
                let q: f64 =
                    g.nodes.iter().zip(&g.weights).map(|(x, w)| w * (0.5 * (1.0 + x)).powi(k as i32)).sum();
                assert_relative_eq!(q, exact, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn large_order_rule_is_sane() {
        let g = gauss_jacobi(1200, 1.0, 0.0).unwrap();
        assert!(g.weights.iter().all(|w| *w > 0.0));
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        let s: f64 = g.weights.iter().sum();
        assert_relative_eq!(s, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn ball_rule_masses() {
        for &(alpha, mass) in &[(0.0, 1.0), (1.0, 0.5), (2.0, 1.0 / 3.0)] {
            let r = build_ball_rule(2, alpha, 40, 16).unwrap();
            assert_relative_eq!(r.integrate(|_| 1.0).unwrap(), mass, max_relative = 1e-12);
        }
        assert!(matches!(build_ball_rule(2, -1.0, 10, 8), Err(Error::Domain(_))));
    }

    #[test]
    fn ball_integration_examples() {
        let r = build_ball_rule(2, 0.0, 40, 16).unwrap();
        assert_relative_eq!(r.integrate(|x| x[0] * x[0] + x[1] * x[1]).unwrap(), 0.5, max_relative = 1e-13);
        assert!(r.integrate(|x| x[0]).unwrap().abs() < 1e-15);
        let err = r.integrate(|x| if x[0] > 0.5 { f64::NAN } else { 0.0 }).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn radial_moments_and_refinement() {
        for n in [2usize, 3, 5] {
            for &alpha in &[-0.5, 0.0, 1.5] {
                let coarse = RadialRule::new(n, alpha, 40).unwrap();
                let fine = RadialRule::new(n, alpha, 80).unwrap();
                for k in 0..=10 {
                    let exact = radial_moment(n, alpha, k);
                    let q = coarse.integrate(|r| r.powi(2 * k as i32));
                    assert_relative_eq!(q, exact, max_relative = 1e-12);
                    let qf = fine.integrate(|r| r.powi(2 * k as i32));
                    assert!((q - qf).abs() <= 1e-10 * exact);
                }
            }
        }
    }

    #[test]
    fn sphere_rules() {
        for n in [2usize, 3, 4] {
            let r = SphereRule::new(n, 8).unwrap();
            assert_relative_eq!(r.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            assert!(integrate_sphere(|z| z[0], &r).unwrap().abs() < 1e-15);
            let q = integrate_sphere(|z| z[0] * z[0], &r).unwrap();
            assert_relative_eq!(q, 1.0 / n as f64, epsilon = 1e-14);
            let q = integrate_sphere(|z| z[1] * z[1], &r).unwrap();
            assert_relative_eq!(q, 1.0 / n as f64, epsilon = 1e-14);
        }
        assert!(SphereRule::new(4, 8).unwrap().is_experimental());
    }

    #[test]
    fn sphere_rule_exactness_degree() {
        // n = 3 with order 8 is exact through degree 7.
        let r = SphereRule::new(3, 8).unwrap();
        let q = integrate_sphere(|z| z[0].powi(4) * z[1].powi(2), &r).unwrap();
        assert_relative_eq!(q, 1.0 / 35.0, epsilon = 1e-14);
        let r2 = SphereRule::new(2, 8).unwrap();
        let q = integrate_sphere(|z| z[0].powi(6), &r2).unwrap();
        assert_relative_eq!(q, 5.0 / 16.0, epsilon = 1e-14);
    }

    #[test]
    fn j_at_center_is_mass() {
        let j = j_bc(2, 0.0, 1.0, 0.0, QuadSpec::default_for(2)).unwrap();
        assert_relative_eq!(j, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn j_closed_form_for_zero_c() {
        // J_{0,0}(t e₁) = log(1/(1−t²))/t² when n = 2.
        let t: f64 = 0.95;
        let j = j_bc(2, 0.0, 0.0, t, QuadSpec::default_for(2).for_peak(2, t)).unwrap();
        let exact = (1.0 / (1.0 - t * t)).ln() / (t * t);
        assert_relative_eq!(j, exact, max_relative = 1e-9);
    }

    #[test]
    fn short_logarithmic_sweep_is_rejected() {
        let r = boundary_sweep(0.9, 0.99, 4);
        assert!(matches!(verify_i_j(2, 0.0, 0.0, &r, QuadSpec::default_for(2)), Err(Error::Domain(_))));
    }

    #[test]
    fn sweep_endpoints() {
        let s = boundary_sweep(0.9, 0.999, 4);
        assert_relative_eq!(s[0], 0.9, epsilon = 1e-14);
        assert_relative_eq!(s[3], 0.999, epsilon = 1e-14);
    }
}
