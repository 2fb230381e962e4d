//! Atomic decomposition by Neumann inversion of `UT̂`.

use crate::error::{Error, Result};
use crate::geometry::one_minus_norm_sq;
use crate::kernels::{kernel_norm, KernelBackend, KernelKind, ZonalHarmonicKernel};
use crate::lattice::SeparatedSet;
use crate::numerics::geometric_mean;
use crate::operators::{lp_norm, radius_mask, sample_t, u_weights, AtomCombination, CoefSeq, FieldFunction, SpaceParams};
use crate::quadrature::{BallRule, FlatRule, QuadSpec};

/// Consecutive non-decreasing residuals tolerated before giving up.
pub const STALL_LIMIT: usize = 3;

#[derive(Clone, Debug)]
pub struct DecomposeOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Residual norms are taken over `|x| ≤ region`; defaults to `R_max`.
    pub region: Option<f64>,
    /// Radius of the reconstruction probe grid.
    pub probe_radius: f64,
    /// Allows non-reproducing backends and `n ≠ 2`.
    pub experimental: bool,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { tol: 1e-6, max_iter: 200, region: None, probe_radius: 0.8, experimental: false }
    }
}

#[derive(Clone, Debug)]
pub struct DecompositionReport {
    pub lambda: CoefSeq,
    /// Multipliers `ω_m` of the atoms, `f ≈ Σ λ_m ω_m K(·, a_m)`.
    pub atom_weights: Vec<f64>,
    /// `‖e_j‖` in `B^p_α` over the residual region.
    pub residual_norms: Vec<f64>,
    /// `‖e_{j+1}‖ / ‖e_j‖`.
    pub contraction_estimates: Vec<f64>,
    /// `‖T e_j‖_{ℓ^p}`, the residual seen by the lattice.
    pub sampled_norms: Vec<f64>,
    pub f_norm: f64,
    pub region_f_norm: f64,
    pub reconstruction_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl DecompositionReport {
    /// Geometric mean of the successive residual ratios.
    pub fn mean_ratio(&self) -> f64 {
        geometric_mean(&self.contraction_estimates)
    }

    /// Geometric mean of the successive ratios of the sampled residual.
    pub fn sampled_mean_ratio(&self) -> f64 {
        let r: Vec<f64> = self.sampled_norms.windows(2).map(|w| w[1] / w[0]).collect();
        geometric_mean(&r)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.residual_norms.windows(2).all(|w| w[1] < w[0])
    }

    /// `‖λ‖_{ℓ^p} / ‖f‖_{B^p_α}`.
    pub fn norm_ratio(&self) -> f64 {
        self.lambda.norm() / self.f_norm
    }

    /// Coefficients of the final atom series `Σ c_m K(·, a_m)`.
    pub fn atom_coefficients(&self) -> Vec<f64> {
        self.lambda.values.iter().zip(&self.atom_weights).map(|(l, w)| l * w).collect()
    }
}

/// Grid points with `|x| ≤ radius`, spacing `radius/20`.
pub fn probe_grid(n: usize, radius: f64) -> Vec<f64> {
    let steps: i32 = if n == 2 { 20 } else { 8 };
    let h = radius / steps as f64;
    let mut out = Vec::new();
    let mut idx = vec![-steps; n];
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
        if x.iter().map(|c| c * c).sum::<f64>() <= radius * radius * (1.0 + 1e-12) {
            out.extend(x);
        }
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            idx[k] += 1;
            if idx[k] > steps {
                idx[k] = -steps;
                k += 1;
            } else {
                break;
            }
        }
    }
}

/// Shared data of the Neumann engine: the lattice, cell masses and norm rule.
pub struct Engine<'a> {
    pub set: &'a SeparatedSet,
    pub masses: &'a [f64],
    pub sp: SpaceParams,
    pub backend: &'a dyn KernelBackend,
    /// Rule carrying the weight `(1−|x|²)^α`.
    pub rule: &'a FlatRule,
}

impl Engine<'_> {
    fn gate(&self, opts: &DecomposeOptions) -> Result<()> {
        self.sp.require_condition()?;
        if self.masses.len() != self.set.len() {
            return Err(Error::DimensionMismatch { expected: self.set.len(), got: self.masses.len() });
        }
        let exact = self.sp.n == 2 && self.backend.is_reproducing() && (self.backend.order() - self.sp.s).abs() < 1e-12;
        if !exact && !opts.experimental {
            return Err(Error::domain(format!(
                "decomposition needs the n = 2 reproducing kernel of order s = {}; got the {} backend with n = {} (use the experimental mode for reports only)",
                self.sp.s,
                self.backend.kind().name(),
                self.sp.n
            )));
        }
        Ok(())
    }

    /// Runs `λ ← λ + T̂_ω e_j`, `e_{j+1} = e_j − U_ω T̂_ω e_j` with atom
    /// multipliers `ω`.
    pub fn run(&self, f: &FieldFunction, weights: &[f64], opts: &DecomposeOptions) -> Result<DecompositionReport> {
        self.gate(opts)?;
        let set = self.set;
        let m = set.len();
        let region = opts.region.unwrap_or(set.r_max);
        let mask = radius_mask(self.rule, region);
        let fv = self.rule.values(|x| f.eval(x));
        let f_norm = lp_norm(self.rule, &fv, self.sp.p, None)?;
        let region_f_norm = lp_norm(self.rule, &fv, self.sp.p, Some(&mask))?;
        let mut report = DecompositionReport {
            lambda: CoefSeq::zeros(m, self.sp.p),
            atom_weights: weights.to_vec(),
            residual_norms: Vec::new(),
            contraction_estimates: Vec::new(),
            sampled_norms: Vec::new(),
            f_norm,
            region_f_norm,
            reconstruction_error: 0.0,
            iterations: 0,
            converged: true,
        };
        if region_f_norm == 0.0 {
            return Ok(report);
        }
        let node_idx: Vec<usize> = (0..self.rule.len()).filter(|&i| mask[i]).collect();
        let sub = FlatRule {
            n: self.rule.n,
            points: node_idx.iter().flat_map(|&i| self.rule.point(i).to_vec()).collect(),
            weights: node_idx.iter().map(|&i| self.rule.weights[i]).collect(),
        };
        let mut e_nodes: Vec<f64> = node_idx.iter().map(|&i| fv[i]).collect();
        let mut e_atoms: Vec<f64> = (0..m).map(|k| f.eval(set.point(k))).collect();
        let t_scale: Vec<f64> = set.defects().into_iter().map(|u| u.powf(self.sp.t_exponent())).collect();
        let target = opts.tol * f_norm;
        let mut stalls = 0;
        let mut norm = lp_norm(&sub, &e_nodes, self.sp.p, None)?;
        report.residual_norms.push(norm);
        report.sampled_norms.push(sampled_norm(&e_atoms, &t_scale, self.sp.p));
        while norm > target {
            if report.iterations >= opts.max_iter {
                report.converged = false;
                break;
            }
            // U_ω T̂_ω e = Σ e(a_m) ν_s(E_m) K(·, a_m)
            let coeffs: Vec<f64> = (0..m).map(|k| e_atoms[k] * self.masses[k]).collect();
            for k in 0..m {
                report.lambda.values[k] += coeffs[k] / weights[k];
            }
            let g = AtomCombination::new(self.backend, set.points.clone(), coeffs)?;
            let g_nodes = sub.values(|x| g.eval(x));
            for (e, v) in e_nodes.iter_mut().zip(&g_nodes) {
                *e -= v;
            }
            for (k, e) in e_atoms.iter_mut().enumerate() {
                *e -= g.eval(set.point(k));
            }
            report.iterations += 1;
            let next = lp_norm(&sub, &e_nodes, self.sp.p, None)?;
            let ratio = next / norm;
            report.residual_norms.push(next);
            report.contraction_estimates.push(ratio);
            report.sampled_norms.push(sampled_norm(&e_atoms, &t_scale, self.sp.p));
            norm = next;
            if ratio >= 1.0 {
                stalls += 1;
                if stalls >= STALL_LIMIT {
                    return Err(Error::NonContractive { ratio, iterations: report.iterations });
                }
            } else {
                stalls = 0;
            }
        }
        let coeffs = report.atom_coefficients();
        let u = AtomCombination::new(self.backend, set.points.clone(), coeffs)?;
        let grid = probe_grid(set.n, opts.probe_radius);
        report.reconstruction_error =
            grid.chunks_exact(set.n).map(|x| (f.eval(x) - u.eval(x)).abs()).fold(0.0, f64::max);
        Ok(report)
    }
}

fn sampled_norm(e_atoms: &[f64], t_scale: &[f64], p: f64) -> f64 {
    CoefSeq::new(e_atoms.iter().zip(t_scale).map(|(e, t)| e * t).collect(), p).norm()
}

/// Decomposition into the atoms `(1−|a_m|²)^{s+n−(α+n)/p} K(·, a_m)`.
pub fn decompose(
    f: &FieldFunction,
    set: &SeparatedSet,
    masses: &[f64],
    sp: &SpaceParams,
    backend: &dyn KernelBackend,
    rule: &FlatRule,
    opts: &DecomposeOptions,
) -> Result<DecompositionReport> {
    let engine = Engine { set, masses, sp: *sp, backend, rule };
    engine.run(f, &u_weights(set, sp), opts)
}

/// `‖K(·, a_m)‖_{B^p_α}` for every lattice point.
pub fn atom_norms(set: &SeparatedSet, sp: &SpaceParams, backend: &dyn KernelBackend, spec: QuadSpec) -> Result<Vec<f64>> {
    if backend.kind() == KernelKind::ZonalHarmonic && sp.p == 2.0 {
        let z = ZonalHarmonicKernel::new(backend.order(), crate::kernels::DEFAULT_K_TRUNC)?;
        return Ok(z.l2_norms_sq(&set.points, sp.alpha)?.into_iter().map(f64::sqrt).collect());
    }
    (0..set.len())
        .map(|m| {
            let a = crate::geometry::BallPoint::new(set.point(m).to_vec())?;
            kernel_norm(backend, &a, sp.p, sp.alpha, spec)
        })
        .collect()
}

/// Decomposition into the normalized atoms `K(·, a_m)/‖K(·, a_m)‖_{B^p_α}`.
#[allow(clippy::too_many_arguments)]
pub fn decompose_normalized(
    f: &FieldFunction,
    set: &SeparatedSet,
    masses: &[f64],
    sp: &SpaceParams,
    backend: &dyn KernelBackend,
    rule: &FlatRule,
    spec: QuadSpec,
    opts: &DecomposeOptions,
) -> Result<DecompositionReport> {
    let engine = Engine { set, masses, sp: *sp, backend, rule };
    engine.gate(opts)?;
    let weights: Vec<f64> = atom_norms(set, sp, backend, spec)?.into_iter().map(|k| 1.0 / k).collect();
    engine.run(f, &weights, opts)
}

/// Bounds `c_low ≤ ‖λ‖/‖f‖ ≤ c_high` over at least five decompositions.
pub fn verify_norm_equivalence(reports: &[DecompositionReport]) -> Result<(f64, f64)> {
    if reports.len() < 5 {
        return Err(Error::invalid(format!("norm equivalence needs at least 5 decompositions, got {}", reports.len())));
    }
    if let Some(r) = reports.iter().find(|r| !r.converged) {
        return Err(Error::Inconsistency(format!(
            "a decomposition in the family did not converge after {} iterations",
            r.iterations
        )));
    }
    let ratios: Vec<f64> = reports.iter().filter(|r| r.f_norm > 0.0).map(|r| r.norm_ratio()).collect();
    if ratios.is_empty() {
        return Err(Error::invalid("the family contains only zero functions"));
    }
    Ok((ratios.iter().cloned().fold(f64::MAX, f64::min), ratios.iter().cloned().fold(0.0, f64::max)))
}

/// Norm rule for `B^p_α` used by the engine.
pub fn norm_rule(n: usize, alpha: f64, spec: QuadSpec) -> Result<FlatRule> {
    Ok(BallRule::new(n, alpha, spec)?.flatten())
}

/// `sup |f(x)|(1−|x|²)^{(α+n)/p} / ‖f‖` over probe points, the empirical
/// constant of the pointwise bound.
pub fn pointwise_constant(f: &FieldFunction, f_norm: f64, sp: &SpaceParams, probes: &[f64]) -> f64 {
    probes
        .chunks_exact(sp.n)
        .map(|x| f.eval(x).abs() * one_minus_norm_sq(x).powf(sp.t_exponent()) / f_norm)
        .fold(0.0, f64::max)
}

/// `T` applied to the reconstruction, for consistency checks.
pub fn resample(report: &DecompositionReport, set: &SeparatedSet, sp: &SpaceParams, backend: &dyn KernelBackend) -> Result<CoefSeq> {
    let u = AtomCombination::new(backend, set.points.clone(), report.atom_coefficients())?;
    Ok(sample_t(&FieldFunction::Atoms(u), set, sp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{PowerKernel, DEFAULT_K_TRUNC};
    use crate::lattice::{build_cells, build_lattice, cell_masses};
    use crate::operators::Polynomial;

    struct Fixture {
        set: SeparatedSet,
        masses: Vec<f64>,
        rule: FlatRule,
        kernel: ZonalHarmonicKernel,
        sp: SpaceParams,
    }

    fn fixture(r: f64, r_max: f64) -> Fixture {
        let sp = SpaceParams::new(2.0, 0.0, 1.0, 2).unwrap();
        let set = build_lattice(2, r, r_max, 1).unwrap();
        let cells = build_cells(&set).unwrap();
        let srule = BallRule::new(2, sp.s, QuadSpec::default_for(2)).unwrap().flatten();
        let masses = cell_masses(&cells, &srule).unwrap().masses;
        let rule = norm_rule(2, sp.alpha, QuadSpec::default_for(2)).unwrap();
        Fixture { set, masses, rule, kernel: ZonalHarmonicKernel::new(1.0, DEFAULT_K_TRUNC).unwrap(), sp }
    }

    fn poly(text: &str) -> FieldFunction {
        FieldFunction::Polynomial(Polynomial::parse(2, text).unwrap())
    }

    #[test]
    fn grid_shape() {
        let g = probe_grid(2, 0.8);
        assert!(g.chunks(2).all(|x| x[0] * x[0] + x[1] * x[1] <= 0.64 + 1e-12));
        assert!(g.len() / 2 > 1000);
    }

    #[test]
    fn zero_function_needs_no_iterations() {
        let fx = fixture(0.3, 0.7);
        let rep = decompose(&FieldFunction::zero(2), &fx.set, &fx.masses, &fx.sp, &fx.kernel, &fx.rule, &DecomposeOptions::default())
            .unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.lambda.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn power_backend_is_gated() {
        let fx = fixture(0.3, 0.7);
        let pk = PowerKernel::new(1.0, 2).unwrap();
        let err = decompose(&poly("x1"), &fx.set, &fx.masses, &fx.sp, &pk, &fx.rule, &DecomposeOptions::default());
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn normalized_engine_matches() {
        let fx = fixture(0.2, 0.7);
        let opts = DecomposeOptions { tol: 0.0, max_iter: 6, ..Default::default() };
        let f = poly("x1");
        let a = decompose(&f, &fx.set, &fx.masses, &fx.sp, &fx.kernel, &fx.rule, &opts).unwrap();
        let b = decompose_normalized(&f, &fx.set, &fx.masses, &fx.sp, &fx.kernel, &fx.rule, QuadSpec::default_for(2), &opts)
            .unwrap();
        for (x, y) in a.residual_norms.iter().zip(&b.residual_norms) {
            assert!((x - y).abs() <= 1e-10 * x.abs());
        }
        let norms = atom_norms(&fx.set, &fx.sp, &fx.kernel, QuadSpec::default_for(2)).unwrap();
        for m in 0..fx.set.len() {
            let expected = a.lambda.values[m] * a.atom_weights[m] * norms[m];
            assert!((b.lambda.values[m] - expected).abs() <= 1e-10 * expected.abs().max(1e-12));
        }
    }

    #[test]
    fn linear_in_f() {
        let fx = fixture(0.2, 0.7);
        let opts = DecomposeOptions { tol: 0.0, max_iter: 5, ..Default::default() };
        let run = |t: &str| decompose(&poly(t), &fx.set, &fx.masses, &fx.sp, &fx.kernel, &fx.rule, &opts).unwrap();
        let a = run("x1");
        let b = run("x1*x2");
        let c = run("x1 + x1*x2");
        for m in 0..fx.set.len() {
            let s = a.lambda.values[m] + b.lambda.values[m];
            assert!((c.lambda.values[m] - s).abs() <= 1e-8 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn coarse_lattice_is_non_contractive() {
        let fx = fixture(0.7, 0.9);
        let opts = DecomposeOptions { max_iter: 50, ..Default::default() };
        match decompose(&poly("x1"), &fx.set, &fx.masses, &fx.sp, &fx.kernel, &fx.rule, &opts) {
            Err(Error::NonContractive { ratio, .. }) => assert!(ratio >= 1.0),
            other => panic!("expected a non-contractive error, got {other:?}"),
        }
    }

    #[test]
    fn equivalence_needs_five() {
        assert!(verify_norm_equivalence(&[]).is_err());
    }
}
