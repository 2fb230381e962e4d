//! Interpolation by Neumann inversion of `TÛ`, with the Schur-test bound and
//! the two tail estimates behind it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{bracket_sq_stable, one_minus_norm_sq, rho_sq_raw, BallPoint};
use crate::kernels::KernelBackend;
use crate::lattice::SeparatedSet;
use crate::operators::{lp_norm, synth_uhat, uhat_weights, CoefSeq, FieldFunction, SpaceParams};
use crate::quadrature::FlatRule;

/// Half-width of the band `|ρ(y, a) − r| ≤ TRANSITION_BAND` around an excluded
/// pseudo-ball.
pub const TRANSITION_BAND: f64 = 0.05;
/// Fewest rule nodes tolerated inside that band.
pub const MIN_TRANSITION_NODES: usize = 50;

#[derive(Clone, Debug)]
pub struct InterpolationReport {
    /// Coefficients with `f = Û μ`.
    pub mu: CoefSeq,
    /// `‖λ − TÛ μ_j‖_{ℓ^p}` per iteration, starting from `μ_0 = 0`.
    pub residual_norms: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `max_m |f(a_m)(1−|a_m|²)^{(α+n)/p} − λ_m|`, by direct evaluation of `f`.
    pub max_residual: f64,
    /// `max_k ‖(TÛ − I) e_k‖_{ℓ^p}` over unit coordinate sequences.
    pub operator_estimate: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `TÛ` as a dense matrix: `(TÛ)_{mk} = (1−|a_m|²)^{(α+n)/p} K(a_m, a_k) ŵ_k`.
pub fn t_uhat_matrix(set: &SeparatedSet, sp: &SpaceParams, backend: &dyn KernelBackend) -> DMatrix<f64> {
    let m = set.len();
    let w = uhat_weights(set, sp, backend);
    let t: Vec<f64> = set.defects().iter().map(|u| u.powf(sp.t_exponent())).collect();
    DMatrix::from_fn(m, m, |i, k| t[i] * backend.eval(set.point(i), set.point(k)) * w[k])
}

fn lp_of(values: impl Iterator<Item = f64>, p: f64) -> f64 {
    CoefSeq::new(values.collect(), p).norm()
}

/// `max_k ‖(M − I) e_k‖_{ℓ^p}`.
pub fn unit_family_estimate(tu: &DMatrix<f64>, p: f64) -> f64 {
    (0..tu.ncols())
        .map(|k| lp_of((0..tu.nrows()).map(|i| tu[(i, k)] - if i == k { 1.0 } else { 0.0 }), p))
        .fold(0.0, f64::max)
}

/// Solves `T f = λ` with `f = Û μ` by the iteration
/// `μ ← μ + (λ − TÛ μ)`.
pub fn solve_interpolation(
    lambda: &CoefSeq,
    set: &SeparatedSet,
    sp: &SpaceParams,
    backend: &dyn KernelBackend,
    tol: f64,
    max_iter: usize,
) -> Result<(FieldFunction, InterpolationReport)> {
    sp.require_condition()?;
    if lambda.len() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), got: lambda.len() });
    }
    let tu = t_uhat_matrix(set, sp, backend);
    let operator_estimate = unit_family_estimate(&tu, sp.p);
    let lam = nalgebra::DVector::from_column_slice(&lambda.values);
    let sup = lambda.sup();
    let mut mu = nalgebra::DVector::zeros(set.len());
    let mut report = InterpolationReport {
        mu: CoefSeq::zeros(set.len(), sp.p),
        residual_norms: Vec::new(),
        ratios: Vec::new(),
        max_residual: 0.0,
        operator_estimate,
        iterations: 0,
        converged: true,
    };
    let mut stalls = 0;
    loop {
        let res = &lam - &tu * &mu;
        let norm = lp_of(res.iter().cloned(), sp.p);
        if let Some(&prev) = report.residual_norms.last() {
            let ratio = norm / prev;
            report.ratios.push(ratio);
            if ratio >= 1.0 {
                stalls += 1;
                if stalls >= 3 {
                    return Err(Error::NonContractive { ratio: operator_estimate, iterations: report.iterations });
                }
            } else {
                stalls = 0;
            }
        }
        report.residual_norms.push(norm);
        if res.amax() <= tol * sup {
            break;
        }
        if report.iterations >= max_iter {
            report.converged = false;
            break;
        }
        mu += res;
        report.iterations += 1;
    }
    report.mu = CoefSeq::new(mu.iter().cloned().collect(), sp.p);
    let f = synth_uhat(&report.mu, set, sp, backend)?;
    report.max_residual = (0..set.len())
        .map(|m| {
            let a = set.point(m);
            (f.eval(a) * one_minus_norm_sq(a).powf(sp.t_exponent()) - lambda.values[m]).abs()
        })
        .fold(0.0, f64::max);
    Ok((f, report))
}

/// `min` and `max` of `‖f‖_{B^p_α}/‖λ‖_{ℓ^p}` over interpolants of a family.
pub fn interpolation_norm_band(
    family: &[CoefSeq],
    set: &SeparatedSet,
    sp: &SpaceParams,
    backend: &dyn KernelBackend,
    rule: &FlatRule,
    tol: f64,
) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for lambda in family.iter().filter(|l| l.norm() > 0.0) {
        let (f, rep) = solve_interpolation(lambda, set, sp, backend, tol, 500)?;
        if !rep.converged {
            return Err(Error::NonContractive { ratio: rep.operator_estimate, iterations: rep.iterations });
        }
        let ratio = lp_norm(rule, &rule.values(|x| f.eval(x)), sp.p, None)? / lambda.norm();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    if hi == 0.0 {
        return Err(Error::invalid("norm band needs a non-zero sequence"));
    }
    Ok((lo, hi))
}

/// `max ‖Ûλ‖_{B^p_α}/‖λ‖_{ℓ^p}` over a family.
pub fn synthesis_bound(
    family: &[CoefSeq],
    set: &SeparatedSet,
    sp: &SpaceParams,
    backend: &dyn KernelBackend,
    rule: &FlatRule,
) -> Result<f64> {
    let mut hi: f64 = 0.0;
    for lambda in family.iter().filter(|l| l.norm() > 0.0) {
        let f = synth_uhat(lambda, set, sp, backend)?;
        hi = hi.max(lp_norm(rule, &rule.values(|x| f.eval(x)), sp.p, None)? / lambda.norm());
    }
    Ok(hi)
}

/// Off-diagonal majorant
/// `A_{mk} = (1−|a_m|²)^{(α+n)/p}(1−|a_k|²)^{s+n−(α+n)/p}/[a_m, a_k]^{s+n}`.
pub fn matrix_a(set: &SeparatedSet, sp: &SpaceParams) -> DMatrix<f64> {
    let d = set.defects();
    let (te, ue, be) = (sp.t_exponent(), sp.u_exponent(), (sp.s + sp.n as f64) / 2.0);
    DMatrix::from_fn(set.len(), set.len(), |m, k| {
        if m == k {
            0.0
        } else {
            d[m].powf(te) * d[k].powf(ue) / bracket_sq_stable(set.point(m), set.point(k)).powf(be)
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchurPath {
    /// `1 < p < ∞`: weighted row and column sums.
    Schur,
    /// `0 < p ≤ 1`: `‖A‖^p ≤ max_k Σ_m A_{mk}^p`.
    Direct,
}

impl SchurPath {
    pub fn name(self) -> &'static str {
        match self {
            SchurPath::Schur => "schur",
            SchurPath::Direct => "direct",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SchurReport {
    pub path: SchurPath,
    pub r: f64,
    pub p: f64,
    /// `γ_m = (1−|a_m|²)^{(n−1)/(p p′)}`; all ones on the direct path.
    pub gamma_weights: Vec<f64>,
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
}

impl SchurReport {
    /// Bound on `‖A‖_{ℓ^p→ℓ^p}`.
    pub fn a_bound(&self) -> f64 {
        match self.path {
            SchurPath::Schur => {
                let pc = self.p / (self.p - 1.0);
                self.c1.powf(1.0 / pc) * self.c2.powf(1.0 / self.p)
            }
            SchurPath::Direct => self.c2.powf(1.0 / self.p),
        }
    }

    /// Bound on `‖TÛ − I‖` given `|(TÛ − I)_{mk}| ≤ C A_{mk}`.
    pub fn operator_bound(&self, kernel_constant: f64) -> f64 {
        kernel_constant * self.a_bound()
    }
}

/// Row and column sums of the Schur test for `A`.
pub fn schur_verify(set: &SeparatedSet, sp: &SpaceParams) -> Result<SchurReport> {
    let a = matrix_a(set, sp);
    let m = set.len();
    let p = sp.p;
    let n = sp.n as f64;
    if p <= 1.0 {
        let cols: Vec<f64> = (0..m).map(|k| (0..m).map(|i| a[(i, k)].powf(p)).sum()).collect();
        let c = cols.iter().cloned().fold(0.0, f64::max);
        return Ok(SchurReport {
            path: SchurPath::Direct,
            r: set.r,
            p,
            gamma_weights: vec![1.0; m],
            row_sums: cols.clone(),
            col_sums: cols,
            c1: c,
            c2: c,
        });
    }
    let pc = p / (p - 1.0);
    let gamma: Vec<f64> = set.defects().iter().map(|u| u.powf((n - 1.0) / (p * pc))).collect();
    let row_sums: Vec<f64> = (0..m)
        .map(|i| (0..m).map(|k| a[(i, k)] * (gamma[k] / gamma[i]).powf(pc)).sum())
        .collect();
    let col_sums: Vec<f64> = (0..m)
        .map(|k| (0..m).map(|i| a[(i, k)] * (gamma[i] / gamma[k]).powf(p)).sum())
        .collect();
    Ok(SchurReport {
        path: SchurPath::Schur,
        r: set.r,
        p,
        c1: row_sums.iter().cloned().fold(0.0, f64::max),
        c2: col_sums.iter().cloned().fold(0.0, f64::max),
        gamma_weights: gamma,
        row_sums,
        col_sums,
    })
}

/// Smallest `C` with `|(TÛ − I)_{mk}| ≤ C A_{mk}` on the set.
pub fn kernel_constant(set: &SeparatedSet, sp: &SpaceParams, backend: &dyn KernelBackend) -> f64 {
    let tu = t_uhat_matrix(set, sp, backend);
    let a = matrix_a(set, sp);
    let mut c: f64 = 0.0;
    for i in 0..set.len() {
        for k in 0..set.len() {
            if i != k && a[(i, k)] > 0.0 {
                c = c.max(tu[(i, k)].abs() / a[(i, k)]);
            }
        }
    }
    c
}

/// `(1−|a|²)^c ∫_{𝔹∖E_r(a)} (1−|y|²)^b/[a, y]^{n+b+c} dν(y)`, with `rule`
/// carrying the weight `(1−|y|²)^b`.
pub fn tail_integral(n: usize, b: f64, c: f64, a: &BallPoint, r: f64, rule: &FlatRule) -> Result<f64> {
    if !(b > -1.0) || !(c > 0.0) {
        return Err(Error::domain(format!("tail integral needs b > -1 and c > 0, got b = {b}, c = {c}")));
    }
    if a.dim() != n || rule.n != n {
        return Err(Error::DimensionMismatch { expected: n, got: if a.dim() != n { a.dim() } else { rule.n } });
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::domain(format!("excluded radius must lie in [0, 1), got {r}")));
    }
    let x = a.coords();
    let (lo, hi) = ((r - TRANSITION_BAND).max(0.0), (r + TRANSITION_BAND).min(1.0));
    let mut band = 0;
    let mut mask = vec![true; rule.len()];
    for (i, keep) in mask.iter_mut().enumerate() {
        let rho2 = rho_sq_raw(x, rule.point(i));
        if rho2 < r * r {
            *keep = false;
        }
        if rho2 >= lo * lo && rho2 <= hi * hi {
            band += 1;
        }
    }
    if r > 0.0 && band < MIN_TRANSITION_NODES {
        return Err(Error::Resolution(format!(
            "only {band} quadrature nodes resolve the boundary of the excluded pseudo-ball (need {MIN_TRANSITION_NODES})"
        )));
    }
    let e = (n as f64 + b + c) / 2.0;
    let vals = rule.values(|y| bracket_sq_stable(x, y).powf(-e));
    Ok(a.defect().powf(c) * rule.sum(&vals, Some(&mask))?)
}

/// `(1−|a_m|²)^c Σ_{k≠m} (1−|a_k|²)^b/[a_m, a_k]^{b+c}`.
pub fn separated_series(set: &SeparatedSet, m: usize, b: f64, c: f64) -> Result<f64> {
    if m >= set.len() {
        return Err(Error::invalid(format!("index {m} out of range for a set of {} points", set.len())));
    }
    let am = set.point(m);
    let terms: Vec<f64> = (0..set.len())
        .filter(|&k| k != m)
        .map(|k| {
            let ak = set.point(k);
            one_minus_norm_sq(ak).powf(b) / bracket_sq_stable(am, ak).powf((b + c) / 2.0)
        })
        .collect();
    Ok(one_minus_norm_sq(am).powf(c) * crate::numerics::pairwise_sum(&terms))
}

/// `max_m` of [`separated_series`] together with `min_m`.
pub fn separated_series_range(set: &SeparatedSet, b: f64, c: f64) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for m in 0..set.len() {
        let v = separated_series(set, m, b, c)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// First `r` of an increasing sweep with a tail below `eps`.
pub fn tail_radius(n: usize, b: f64, c: f64, a: &BallPoint, eps: f64, radii: &[f64], rule: &FlatRule) -> Result<Option<f64>> {
    for &r in radii {
        if tail_integral(n, b, c, a, r, rule)? < eps {
            return Ok(Some(r));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{ZonalHarmonicKernel, DEFAULT_K_TRUNC};
    use crate::quadrature::{BallRule, QuadSpec};
    use approx::assert_relative_eq;

    fn sp() -> SpaceParams {
        SpaceParams::new(2.0, 0.0, 1.0, 2).unwrap()
    }

    fn kernel() -> ZonalHarmonicKernel {
        ZonalHarmonicKernel::new(1.0, DEFAULT_K_TRUNC).unwrap()
    }

    #[test]
    fn zero_data() {
        let set = SeparatedSet::from_points(2, 0.5, 0.9, vec![0.1, 0.2, -0.5, 0.3]).unwrap();
        let (f, rep) = solve_interpolation(&CoefSeq::zeros(2, 2.0), &set, &sp(), &kernel(), 1e-12, 10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(f.eval(&[0.3, 0.3]), 0.0);
    }

    #[test]
    fn one_point_is_exact() {
        let set = SeparatedSet::from_points(2, 0.5, 0.9, vec![0.4, -0.3]).unwrap();
        let (f, rep) = solve_interpolation(&CoefSeq::new(vec![2.5], 2.0), &set, &sp(), &kernel(), 1e-14, 10).unwrap();
        assert_eq!(rep.iterations, 1);
        let t = one_minus_norm_sq(&[0.4, -0.3]);
        assert_relative_eq!(f.eval(&[0.4, -0.3]) * t, 2.5, max_relative = 1e-13);
    }

    #[test]
    fn a_is_nonnegative_with_zero_diagonal() {
        let set = SeparatedSet::from_points(2, 0.5, 0.9, vec![0.5, 0.0, -0.5, 0.0, 0.0, 0.7]).unwrap();
        let a = matrix_a(&set, &sp());
        for i in 0..3 {
            assert_eq!(a[(i, i)], 0.0);
        }
        assert!(a.iter().all(|v| *v >= 0.0));
        // (α+n)/p = s+n−(α+n)/p = 1 makes A symmetric.
        assert_relative_eq!(a[(0, 1)], a[(1, 0)], max_relative = 1e-14);
    }

    #[test]
    fn gamma_exponent() {
        let set = SeparatedSet::from_points(2, 0.5, 0.9, vec![0.6, 0.0]).unwrap();
        let rep = schur_verify(&set, &sp()).unwrap();
        assert_relative_eq!(rep.gamma_weights[0], 0.64f64.powf(0.25), max_relative = 1e-14);
        assert_eq!((rep.c1, rep.c2), (0.0, 0.0));
    }

    #[test]
    fn direct_path_below_one() {
        let set = SeparatedSet::from_points(2, 0.5, 0.9, vec![0.5, 0.0, -0.5, 0.0]).unwrap();
        let sp = SpaceParams::new(1.0, 0.0, 1.0, 2).unwrap();
        let rep = schur_verify(&set, &sp).unwrap();
        assert_eq!(rep.path, SchurPath::Direct);
        let a = matrix_a(&set, &sp);
        assert_relative_eq!(rep.c2, a[(0, 1)].max(a[(1, 0)]), max_relative = 1e-14);
    }

    #[test]
    fn whole_ball_mass() {
        let rule = BallRule::new(2, 0.0, QuadSpec::default_for(2)).unwrap().flatten();
        let v = tail_integral(2, 0.0, 1.0, &BallPoint::origin(2), 0.0, &rule).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn tail_shrinks_with_r() {
        let rule = BallRule::new(2, 0.0, QuadSpec::default_for(2).for_peak(2, 0.9)).unwrap().flatten();
        let a = BallPoint::new(vec![0.9, 0.0]).unwrap();
        let v: Vec<f64> = [0.5, 0.7, 0.9].iter().map(|&r| tail_integral(2, 0.0, 1.0, &a, r, &rule).unwrap()).collect();
        assert!(v[0] > v[1] && v[1] > v[2], "{v:?}");
    }

    #[test]
    fn coarse_rule_is_refused() {
        let rule = BallRule::new(2, 0.0, QuadSpec { radial_order: 4, sphere_order: 8 }).unwrap().flatten();
        let a = BallPoint::new(vec![0.9, 0.0]).unwrap();
        assert!(matches!(tail_integral(2, 0.0, 1.0, &a, 0.5, &rule), Err(Error::Resolution(_))));
    }

    #[test]
    fn series_on_one_point() {
        let set = SeparatedSet::from_points(2, 0.5, 0.9, vec![0.6, 0.0]).unwrap();
        assert_eq!(separated_series(&set, 0, 1.5, 1.0).unwrap(), 0.0);
    }
}
