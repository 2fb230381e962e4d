//! Kernel backends standing in for `R_s(x,y)` and the numerical checks of the
//! kernel estimates.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{bracket_sq_stable, dot, laplacian_h, BallPoint};
use crate::numerics::{asymptotic_slope, linear_slope, pairwise_sum};
use crate::quadrature::{check_resolution, BallRule, QuadSpec, RadialRule};

/// Below this bracket value kernels are evaluated through logarithms.
pub const LOG_SPACE_BRACKET: f64 = 1e-3;
/// A truncated series is flagged when its last term exceeds this fraction of the sum.
pub const TRUNCATION_WARN: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Power,
    ZonalHarmonic,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Power => "power",
            KernelKind::ZonalHarmonic => "zonal",
        }
    }
}

/// Evaluator of a fixed kernel-atom combination `Σ c_m K(·, a_m)`.
pub trait AtomSum: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

/// Abstract kernel `K(x,y)` of order `s`.
pub trait KernelBackend: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;
    fn order(&self) -> f64;
    fn kind(&self) -> KernelKind;
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;
    fn grad1(&self, x: &[f64], y: &[f64]) -> Vec<f64>;
    fn diagonal(&self, x: &[f64]) -> f64 {
        self.eval(x, x)
    }
    /// Whether the kernel reproduces harmonic functions for `ν_s`.
    fn is_reproducing(&self) -> bool;
    /// Evaluator for `Σ coeffs[m]·K(·, centers[m])`; `centers` is row-major.
    fn combination(&self, centers: &[f64], coeffs: &[f64]) -> Box<dyn AtomSum>;
}

struct DirectSum {
    backend: Arc<dyn KernelBackend>,
    n: usize,
    centers: Vec<f64>,
    coeffs: Vec<f64>,
}

impl AtomSum for DirectSum {
    fn eval(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(m, c)| c * self.backend.eval(x, &self.centers[m * self.n..(m + 1) * self.n]))
            .collect();
        pairwise_sum(&terms)
    }
}

/// `K(x,y) = [x,y]^{−(s+n)}`.
#[derive(Clone, Debug)]
pub struct PowerKernel {
    pub s: f64,
    pub n: usize,
}

impl PowerKernel {
    pub fn new(s: f64, n: usize) -> Result<Self> {
        if !(s > -1.0) {
            return Err(Error::domain(format!("kernel order s must exceed -1, got {s}")));
        }
        if n < 2 {
            return Err(Error::domain("dimension must be at least 2"));
        }
        Ok(PowerKernel { s, n })
    }
}

/// `[x,y]^{−(s+n)}`, through logarithms when the bracket is tiny.
pub fn power_eval(s: f64, x: &[f64], y: &[f64]) -> f64 {
    let k = s + x.len() as f64;
    let b2 = bracket_sq_stable(x, y);
    if b2 < LOG_SPACE_BRACKET * LOG_SPACE_BRACKET {
        (-0.5 * k * b2.ln()).exp()
    } else {
        b2.powf(-0.5 * k)
    }
}

impl KernelBackend for PowerKernel {
    fn dim(&self) -> usize {
        self.n
    }
    fn order(&self) -> f64 {
        self.s
    }
    fn kind(&self) -> KernelKind {
        KernelKind::Power
    }
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        power_eval(self.s, x, y)
    }
    fn grad1(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let k = self.s + self.n as f64;
        let b2 = bracket_sq_stable(x, y);
        let f = k * b2.powf(-0.5 * k - 1.0);
        let y2 = dot(y, y);
        x.iter().zip(y).map(|(xi, yi)| f * (yi - y2 * xi)).collect()
    }
    fn is_reproducing(&self) -> bool {
        false
    }
    fn combination(&self, centers: &[f64], coeffs: &[f64]) -> Box<dyn AtomSum> {
        Box::new(DirectSum {
            backend: Arc::new(self.clone()),
            n: self.n,
            centers: centers.to_vec(),
            coeffs: coeffs.to_vec(),
        })
    }
}

/// Reproducing kernel of the harmonic Bergman space `B²_α` of the disc,
/// `R(x,y) = Σ_k c_k Re((z w̄)^k)` with `z = x₁ + i x₂`, `w = y₁ + i y₂`.
///
/// The coefficients are `c₀ = 1/m₀`, `c_k = 2/m_k` with
/// `m_k = ∫|y|^{2k} dν_α` computed by radial quadrature.
#[derive(Debug)]
pub struct ZonalHarmonicKernel {
    pub alpha: f64,
    pub k_trunc: usize,
    pub coeffs: Vec<f64>,
    warnings: AtomicUsize,
}

impl Clone for ZonalHarmonicKernel {
    fn clone(&self) -> Self {
        ZonalHarmonicKernel {
            alpha: self.alpha,
            k_trunc: self.k_trunc,
            coeffs: self.coeffs.clone(),
            warnings: AtomicUsize::new(0),
        }
    }
}

pub const DEFAULT_K_TRUNC: usize = 256;

impl ZonalHarmonicKernel {
    pub fn new(alpha: f64, k_trunc: usize) -> Result<Self> {
        if !(alpha > -1.0) {
            return Err(Error::domain(format!("kernel weight alpha must exceed -1, got {alpha}")));
        }
        if k_trunc == 0 {
            return Err(Error::invalid("truncation degree must be positive"));
        }
        let rule = RadialRule::new(2, alpha, (k_trunc / 2 + 2).max(200))?;
        let coeffs = (0..=k_trunc)
            .map(|k| {
                let m = rule.integrate(|r| r.powi(2 * k as i32));
                if k == 0 {
                    1.0 / m
                } else {
                    2.0 / m
                }
            })
            .collect();
        Ok(ZonalHarmonicKernel { alpha, k_trunc, coeffs, warnings: AtomicUsize::new(0) })
    }

    /// Number of evaluations whose truncated tail was not negligible.
    pub fn truncation_warnings(&self) -> usize {
        self.warnings.load(Ordering::Relaxed)
    }

    fn note_truncation(&self, last: f64, sum: f64) {
        if last.abs() > TRUNCATION_WARN * sum.abs() {
            if self.warnings.fetch_add(1, Ordering::Relaxed) == 0 {
                log::warn!(
                    "zonal series truncated at degree {}: last term {last:e} vs sum {sum:e}",
                    self.k_trunc
                );
            }
        }
    }

    /// `‖R(·,a)‖²` in `L²(ν_β)` for every row of `points`, from the
    /// orthogonality of the modes `r^k e^{ikθ}`.
    pub fn l2_norms_sq(&self, points: &[f64], beta: f64) -> Result<Vec<f64>> {
        let rule = RadialRule::new(2, beta, (self.k_trunc / 2 + 2).max(200))?;
        let m: Vec<f64> = (0..=self.k_trunc).map(|k| rule.integrate(|r| r.powi(2 * k as i32))).collect();
        Ok(points
            .chunks_exact(2)
            .map(|a| {
                let q = a[0] * a[0] + a[1] * a[1];
                let mut terms = vec![self.coeffs[0] * self.coeffs[0] * m[0]];
                let mut qk = 1.0;
                for k in 1..=self.k_trunc {
                    qk *= q;
                    let t = 0.5 * self.coeffs[k] * self.coeffs[k] * qk * m[k];
                    terms.push(t);
                    if t < 1e-18 * terms[0] && k > 2 {
                        break;
                    }
                }
                pairwise_sum(&terms)
            })
            .collect())
    }

    fn check_dim(x: &[f64]) {
        assert_eq!(x.len(), 2, "the zonal kernel is implemented for n = 2 only");
    }
}

impl KernelBackend for ZonalHarmonicKernel {
    fn dim(&self) -> usize {
        2
    }
    fn order(&self) -> f64 {
        self.alpha
    }
    fn kind(&self) -> KernelKind {
        KernelKind::ZonalHarmonic
    }
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        Self::check_dim(x);
        Self::check_dim(y);
        // w = z·conj(ζ)
        let wr = x[0] * y[0] + x[1] * y[1];
        let wi = x[1] * y[0] - x[0] * y[1];
        let aw = wr.hypot(wi);
        let mut sum = self.coeffs[0];
        let (mut pr, mut pi) = (1.0, 0.0);
        let mut mag = 1.0;
        let mut last = 0.0;
        for k in 1..=self.k_trunc {
            let t = pr * wr - pi * wi;
            pi = pr * wi + pi * wr;
            pr = t;
            mag *= aw;
            last = self.coeffs[k] * pr;
            sum += last;
            if self.coeffs[k] * mag < 1e-18 * sum.abs() {
                return sum;
            }
        }
        self.note_truncation(last, sum);
        sum
    }
    fn grad1(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        Self::check_dim(x);
        Self::check_dim(y);
        // ∂₁ = Re(k z^{k−1} w̄^k), ∂₂ = −Im(k z^{k−1} w̄^k)
        let (zr, zi) = (x[0], x[1]);
        let (wr, wi) = (y[0], -y[1]);
        let (mut zr_k, mut zi_k) = (1.0, 0.0);
        let (mut wr_k, mut wi_k) = (wr, wi);
        let mut g = [0.0, 0.0];
        let bound = zr.hypot(zi).max(1e-300) * wr.hypot(wi);
        let mut mag = 1.0;
        for k in 1..=self.k_trunc {
            let re = zr_k * wr_k - zi_k * wi_k;
            let im = zr_k * wi_k + zi_k * wr_k;
            let f = self.coeffs[k] * k as f64;
            g[0] += f * re;
            g[1] -= f * im;
            mag *= bound;
            if f * mag < 1e-18 * (g[0].abs() + g[1].abs()).max(1e-300) && k > 2 {
                break;
            }
            let t = zr_k * zr - zi_k * zi;
            zi_k = zr_k * zi + zi_k * zr;
            zr_k = t;
            let t = wr_k * wr - wi_k * wi;
            wi_k = wr_k * wi + wi_k * wr;
            wr_k = t;
        }
        g.to_vec()
    }
    fn is_reproducing(&self) -> bool {
        true
    }
    fn combination(&self, centers: &[f64], coeffs: &[f64]) -> Box<dyn AtomSum> {
        Box::new(ZonalModes::new(self, centers, coeffs))
    }
}

/// Mode-aggregated evaluator: `f(x) = Σ_k c_k Re(z^k A_k)` with
/// `A_k = Σ_m μ_m conj(w_m)^k`.
struct ZonalModes {
    c: Vec<f64>,
    ar: Vec<f64>,
    ai: Vec<f64>,
    radius: f64,
}

impl ZonalModes {
    fn new(kernel: &ZonalHarmonicKernel, centers: &[f64], coeffs: &[f64]) -> Self {
        let m = coeffs.len();
        let radius = (0..m).map(|i| centers[2 * i].hypot(centers[2 * i + 1])).fold(0.0, f64::max);
        let mut kmax = kernel.k_trunc;
        for k in 1..=kernel.k_trunc {
            if kernel.coeffs[k] * radius.powi(k as i32) < 1e-18 * kernel.coeffs[0] {
                kmax = k;
                break;
            }
        }
        let mut ar = vec![0.0; kmax + 1];
        let mut ai = vec![0.0; kmax + 1];
        let mut pr: Vec<f64> = coeffs.to_vec();
        let mut pi = vec![0.0; m];
        for k in 0..=kmax {
            ar[k] = pairwise_sum(&pr);
            ai[k] = pairwise_sum(&pi);
            for i in 0..m {
                let (wr, wi) = (centers[2 * i], -centers[2 * i + 1]);
                let t = pr[i] * wr - pi[i] * wi;
                pi[i] = pr[i] * wi + pi[i] * wr;
                pr[i] = t;
            }
        }
        ZonalModes { c: kernel.coeffs[..=kmax].to_vec(), ar, ai, radius }
    }
}

impl AtomSum for ZonalModes {
    fn eval(&self, x: &[f64]) -> f64 {
        let (zr, zi) = (x[0], x[1]);
        let q = zr.hypot(zi) * self.radius;
        let mut sum = self.c[0] * self.ar[0];
        let (mut pr, mut pi) = (1.0, 0.0);
        let mut mag = 1.0;
        for k in 1..self.c.len() {
            let t = pr * zr - pi * zi;
            pi = pr * zi + pi * zr;
            pr = t;
            sum += self.c[k] * (pr * self.ar[k] - pi * self.ai[k]);
            mag *= q;
            if self.c[k] * mag < 1e-18 * self.c[0] && k > 1 {
                break;
            }
        }
        sum
    }
}

/// One sampled pair for the upper-estimate checks.
#[derive(Clone, Debug)]
pub struct KernelSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub stratum: usize,
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = dot(&v, &v);
        if s > 1e-6 && s <= 1.0 {
            let s = s.sqrt();
            return v.into_iter().map(|c| c / s).collect();
        }
    }
}

/// Pairs with `|x|` equal to each stratum radius and `y` drawn uniformly,
/// near `x`, or near the sphere (capped at `y_cap`).
pub fn kernel_samples(n: usize, strata: &[f64], per_stratum: usize, y_cap: f64, seed: u64) -> Vec<KernelSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(strata.len() * per_stratum);
    for (si, &t) in strata.iter().enumerate() {
        for j in 0..per_stratum {
            let x: Vec<f64> = random_direction(&mut rng, n).into_iter().map(|c| c * t).collect();
            let y: Vec<f64> = match j % 3 {
                0 => {
                    let r = rng.gen::<f64>().powf(1.0 / n as f64) * y_cap;
                    random_direction(&mut rng, n).into_iter().map(|c| c * r).collect()
                }
                1 => {
                    let eps = (1.0 - t) * rng.gen::<f64>();
                    let d = random_direction(&mut rng, n);
                    let mut y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + eps * b).collect();
                    let ny = dot(&y, &y).sqrt();
                    if ny > y_cap {
                        y.iter_mut().for_each(|c| *c *= y_cap / ny);
                    }
                    y
                }
                _ => {
                    let r = y_cap - (y_cap - 0.5) * rng.gen::<f64>().powi(3);
                    random_direction(&mut rng, n).into_iter().map(|c| c * r).collect()
                }
            };
            out.push(KernelSample { x, y, stratum: si });
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct UpperReport {
    /// max |K(x,y)|·[x,y]^{s+n}
    pub c_emp: f64,
    /// max |∇₁K(x,y)|·[x,y]^{s+n+1}
    pub c_grad: f64,
    pub per_stratum: Vec<f64>,
    pub per_stratum_grad: Vec<f64>,
}

impl UpperReport {
    /// Largest relative deviation of a stratum constant from the strata mean.
    pub fn stratum_spread(&self) -> f64 {
        let m = self.per_stratum.iter().sum::<f64>() / self.per_stratum.len() as f64;
        self.per_stratum.iter().map(|c| (c / m - 1.0).abs()).fold(0.0, f64::max)
    }
}

pub fn verify_kernel_upper(backend: &dyn KernelBackend, samples: &[KernelSample]) -> UpperReport {
    let k = backend.order() + backend.dim() as f64;
    let strata = samples.iter().map(|s| s.stratum + 1).max().unwrap_or(0);
    let mut per = vec![0.0f64; strata];
    let mut per_g = vec![0.0f64; strata];
    for s in samples {
        let b = bracket_sq_stable(&s.x, &s.y).sqrt();
        let v = backend.eval(&s.x, &s.y).abs() * b.powf(k);
        let g = backend.grad1(&s.x, &s.y);
        let gv = dot(&g, &g).sqrt() * b.powf(k + 1.0);
        per[s.stratum] = per[s.stratum].max(v);
        per_g[s.stratum] = per_g[s.stratum].max(gv);
    }
    UpperReport {
        c_emp: per.iter().cloned().fold(0.0, f64::max),
        c_grad: per_g.iter().cloned().fold(0.0, f64::max),
        per_stratum: per,
        per_stratum_grad: per_g,
    }
}

#[derive(Clone, Debug)]
pub struct DiagonalReport {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Straight-line log-log slope.
    pub slope: f64,
    /// Leading exponent from the asymptotic fit.
    pub asymptotic_slope: f64,
    pub expected: f64,
    /// min and max of diagonal·(1−|x|²)^{s+n}.
    pub c_low: f64,
    pub c_high: f64,
}

impl DiagonalReport {
    pub fn constants_ratio(&self) -> f64 {
        self.c_high / self.c_low
    }
}

pub fn verify_diagonal(backend: &dyn KernelBackend, radii: &[f64]) -> Result<DiagonalReport> {
    if radii.len() < 2 {
        return Err(Error::invalid("diagonal sweep needs at least two radii"));
    }
    let n = backend.dim();
    let k = backend.order() + n as f64;
    let mut values = Vec::with_capacity(radii.len());
    let mut u = Vec::with_capacity(radii.len());
    for &t in radii {
        let x = BallPoint::on_axis(n, t)?;
        let v = backend.diagonal(x.coords());
        if !(v > 0.0) {
            return Err(Error::Inconsistency(format!("non-positive diagonal {v} at |x| = {t}")));
        }
        values.push(v);
        u.push(x.defect());
    }
    let scaled: Vec<f64> = values.iter().zip(&u).map(|(v, w)| v * w.powf(k)).collect();
    let logu: Vec<f64> = u.iter().map(|v| v.ln()).collect();
    let logv: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    Ok(DiagonalReport {
        radii: radii.to_vec(),
        slope: linear_slope(&logu, &logv),
        asymptotic_slope: asymptotic_slope(&u, &values, None),
        expected: -k,
        c_low: scaled.iter().cloned().fold(f64::MAX, f64::min),
        c_high: scaled.iter().cloned().fold(f64::MIN, f64::max),
        values,
    })
}

#[derive(Clone, Debug)]
pub struct IntPowerReport {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub predicted: f64,
}

fn int_power_exponent(backend: &dyn KernelBackend, p: f64, alpha: f64) -> Result<f64> {
    let n = backend.dim() as f64;
    let c = p * (backend.order() + n) - (alpha + n);
    if !(c > 0.0) {
        return Err(Error::domain(format!(
            "integral-power estimate needs p(s+n) - (alpha+n) > 0, got {c} for p = {p}, s = {}, alpha = {alpha}",
            backend.order()
        )));
    }
    Ok(c)
}

/// `∫|K(t e₁, y)|^p dν_α(y)`, resolved against the doubled rule.
pub fn int_power_at(backend: &dyn KernelBackend, p: f64, alpha: f64, t: f64, base: QuadSpec) -> Result<f64> {
    let n = backend.dim();
    let x = BallPoint::on_axis(n, t)?;
    let spec = base.for_peak(n, t);
    let f = |y: &[f64]| backend.eval(x.coords(), y).abs().powf(p);
    let coarse = BallRule::new(n, alpha, spec)?.integrate(f)?;
    let fine = BallRule::new(n, alpha, spec.refined())?.integrate(f)?;
    check_resolution(coarse, fine, &format!("kernel power integral at |x| = {t}"))?;
    Ok(fine)
}

pub fn verify_int_power(
    backend: &dyn KernelBackend,
    p: f64,
    alpha: f64,
    radii: &[f64],
    base: QuadSpec,
) -> Result<IntPowerReport> {
    let c = int_power_exponent(backend, p, alpha)?;
    let values = radii.iter().map(|&t| int_power_at(backend, p, alpha, t, base)).collect::<Result<Vec<_>>>()?;
    let u: Vec<f64> = radii.iter().map(|t| (1.0 - t) * (1.0 + t)).collect();
    Ok(IntPowerReport { radii: radii.to_vec(), slope: asymptotic_slope(&u, &values, None), predicted: -c, values })
}

/// `‖K(·,a)‖` in `B^p_α`.
pub fn kernel_norm(backend: &dyn KernelBackend, a: &BallPoint, p: f64, alpha: f64, base: QuadSpec) -> Result<f64> {
    int_power_exponent(backend, p, alpha)?;
    let n = backend.dim();
    if a.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.dim() });
    }
    let spec = base.for_peak(n, a.norm());
    let f = |y: &[f64]| backend.eval(y, a.coords()).abs().powf(p);
    let coarse = BallRule::new(n, alpha, spec)?.integrate(f)?;
    let fine = BallRule::new(n, alpha, spec.refined())?.integrate(f)?;
    check_resolution(coarse, fine, &format!("kernel norm at |a| = {}", a.norm()))?;
    Ok(fine.powf(1.0 / p))
}

/// Step of the second differences in [`verify_h_harmonic`], relative to
/// `1 − |x|`.
pub const HARMONIC_STEP: f64 = 1e-4;

/// Largest `|Δ_h K(·,y)(x)| / |K(x,y)|` over probe pairs. Without an explicit
/// step each probe uses `HARMONIC_STEP·(1 − |x|)`.
pub fn verify_h_harmonic(backend: &dyn KernelBackend, probes: &[(Vec<f64>, Vec<f64>)], h: Option<f64>) -> Result<f64> {
    let mut worst = 0.0f64;
    for (x, y) in probes {
        let xp = BallPoint::new(x.clone())?;
        let f = |z: &[f64]| backend.eval(z, y);
        let step = h.unwrap_or(HARMONIC_STEP * (1.0 - xp.norm()));
        let lap = laplacian_h(&f, &xp, Some(step))?;
        let scale = backend.eval(x, y).abs().max(f64::MIN_POSITIVE);
        worst = worst.max(lap.abs() / scale);
    }
    Ok(worst)
}

/// Largest `|K(x,y) − K(y,x)|` relative to `|K(x,y)|`.
pub fn symmetry_defect(backend: &dyn KernelBackend, samples: &[KernelSample]) -> f64 {
    samples
        .iter()
        .map(|s| {
            let a = backend.eval(&s.x, &s.y);
            let b = backend.eval(&s.y, &s.x);
            (a - b).abs() / a.abs().max(1.0)
        })
        .fold(0.0, f64::max)
}
