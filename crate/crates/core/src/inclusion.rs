//! Inclusions `B^p_α ⊂ B^q_β`: the exponent criterion and numerical probes of
//! both directions.

use crate::error::{Error, Result};
use crate::geometry::BallPoint;
use crate::kernels::{kernel_norm, KernelBackend, PowerKernel};
use crate::lattice::{gamma_sum, GammaReport, Growth, SeparatedSet};
use crate::numerics::asymptotic_slope;
use crate::operators::{lp_norm, FieldFunction};
use crate::quadrature::{ball_mass, BallRule, FlatRule, QuadSpec};

/// Fitted slopes below this flag an unbounded norm ratio.
pub const UNBOUNDED_SLOPE: f64 = -0.02;
/// Allowed gap between fitted and predicted slopes.
pub const SLOPE_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InclusionQuery {
    pub p: f64,
    pub alpha: f64,
    pub q: f64,
    pub beta: f64,
    pub n: usize,
}

impl InclusionQuery {
    pub fn new(p: f64, alpha: f64, q: f64, beta: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("dimension must be at least 2, got {n}")));
        }
        for (name, v) in [("p", p), ("q", q)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("exponent {name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > -1.0 && v.is_finite()) {
                return Err(Error::domain(format!("weight {name} must exceed -1, got {v}")));
            }
        }
        Ok(InclusionQuery { p, alpha, q, beta, n })
    }

    /// `(β+n)/q − (α+n)/p`, the exponent of the kernel norm ratio.
    pub fn ratio_exponent(&self) -> f64 {
        let n = self.n as f64;
        (self.beta + n) / self.q - (self.alpha + n) / self.p
    }

    /// `((β+n) − (α+n)q/p)·p/(p−q)`, defined for `q < p`.
    pub fn dual_gamma(&self) -> f64 {
        let n = self.n as f64;
        ((self.beta + n) - (self.alpha + n) * self.q / self.p) * self.p / (self.p - self.q)
    }

    /// `(β − αq/p)·p/(p−q)`, the weight exponent after Hölder.
    pub fn holder_exponent(&self) -> f64 {
        (self.beta - self.alpha * self.q / self.p) * self.p / (self.p - self.q)
    }

    pub fn branch(&self) -> Branch {
        if self.q >= self.p {
            Branch::Embedding
        } else {
            Branch::Holder
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// `q ≥ p`.
    Embedding,
    /// `q < p`.
    Holder,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Embedding => "q>=p",
            Branch::Holder => "q<p",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub included: bool,
    pub branch: Branch,
}

pub fn decide_inclusion(q: &InclusionQuery) -> Verdict {
    let branch = q.branch();
    let included = match branch {
        Branch::Embedding => (q.alpha + q.n as f64) / q.p <= (q.beta + q.n as f64) / q.q,
        Branch::Holder => (q.alpha + 1.0) / q.p < (q.beta + 1.0) / q.q,
    };
    Verdict { included, branch }
}

/// Smallest integer order `s` with `p(s+n) − (α+n) ≥ 1` and likewise for
/// `(q, β)`.
pub fn probe_order(q: &InclusionQuery) -> f64 {
    let n = q.n as f64;
    let need = ((q.alpha + n + 1.0) / q.p).max((q.beta + n + 1.0) / q.q) - n;
    need.ceil().max(1.0)
}

#[derive(Clone, Debug)]
pub struct RatioProbe {
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    pub slope: f64,
    pub predicted: f64,
    pub bounded: bool,
}

impl RatioProbe {
    pub fn slope_within_tol(&self) -> bool {
        (self.slope - self.predicted).abs() <= SLOPE_TOL
    }
}

/// `‖K(·,a)‖_{B^q_β}/‖K(·,a)‖_{B^p_α}` along `a = t e₁`.
pub fn norm_ratio_probe(query: &InclusionQuery, backend: &dyn KernelBackend, radii: &[f64], base: QuadSpec) -> Result<RatioProbe> {
    if backend.dim() != query.n {
        return Err(Error::DimensionMismatch { expected: query.n, got: backend.dim() });
    }
    if radii.len() < 3 {
        return Err(Error::invalid(format!("ratio probe needs at least 3 radii, got {}", radii.len())));
    }
    let mut ratios = Vec::with_capacity(radii.len());
    for &t in radii {
        let a = BallPoint::on_axis(query.n, t)?;
        let num = kernel_norm(backend, &a, query.q, query.beta, base)?;
        let den = kernel_norm(backend, &a, query.p, query.alpha, base)?;
        ratios.push(num / den);
    }
    let u: Vec<f64> = radii.iter().map(|t| (1.0 - t) * (1.0 + t)).collect();
    let slope = asymptotic_slope(&u, &ratios, None);
    Ok(RatioProbe { radii: radii.to_vec(), ratios, slope, predicted: query.ratio_exponent(), bounded: slope >= UNBOUNDED_SLOPE })
}

/// `count` radii evenly spaced in `log(1−|a|)` over `[0.9, 0.995]`.
pub fn probe_radii(count: usize) -> Vec<f64> {
    let (lo, hi) = ((0.1f64).ln(), (0.005f64).ln());
    (0..count).map(|i| 1.0 - (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp()).collect()
}

#[derive(Clone, Debug)]
pub struct HolderCheck {
    pub exponent: f64,
    pub exponent_ok: bool,
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
}

/// `‖f‖_{B^q_β}/‖f‖_{B^p_α}` over a family, for `q < p` inside the criterion.
pub fn holder_sufficiency_check(query: &InclusionQuery, family: &[FieldFunction], spec: QuadSpec) -> Result<HolderCheck> {
    if query.branch() != Branch::Holder || !decide_inclusion(query).included {
        return Err(Error::domain(format!(
            "Hoelder check needs q < p and (alpha+1)/p < (beta+1)/q, got p = {}, alpha = {}, q = {}, beta = {}",
            query.p, query.alpha, query.q, query.beta
        )));
    }
    let rule_p: FlatRule = BallRule::new(query.n, query.alpha, spec)?.flatten();
    let rule_q: FlatRule = BallRule::new(query.n, query.beta, spec)?.flatten();
    let mut ratios = Vec::new();
    for f in family {
        let den = lp_norm(&rule_p, &rule_p.values(|x| f.eval(x)), query.p, None)?;
        if den == 0.0 {
            continue;
        }
        let num = lp_norm(&rule_q, &rule_q.values(|x| f.eval(x)), query.q, None)?;
        ratios.push(num / den);
    }
    let exponent = query.holder_exponent();
    Ok(HolderCheck {
        exponent,
        exponent_ok: exponent > -1.0,
        max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
        ratios,
    })
}

/// `ν_β(𝔹)^{1/q}/ν_α(𝔹)^{1/p}`, the ratio for constants.
pub fn constant_ratio(query: &InclusionQuery) -> f64 {
    ball_mass(query.n, query.beta).powf(1.0 / query.q) / ball_mass(query.n, query.alpha).powf(1.0 / query.p)
}

#[derive(Clone, Debug)]
pub struct DualProbe {
    pub gamma: f64,
    pub report: GammaReport,
    pub convergent: bool,
}

/// Growth of `Σ (1−|a_m|²)^γ` over a lattice sweep with the exponent tied to
/// the query.
pub fn lattice_dual_probe(query: &InclusionQuery, sweep: &[SeparatedSet]) -> Result<DualProbe> {
    if query.branch() != Branch::Holder {
        return Err(Error::domain(format!("dual probe needs q < p, got p = {}, q = {}", query.p, query.q)));
    }
    if sweep.iter().any(|s| s.n != query.n) {
        return Err(Error::DimensionMismatch { expected: query.n, got: sweep.iter().find(|s| s.n != query.n).map_or(0, |s| s.n) });
    }
    if sweep.last().is_some_and(|s| s.len() <= 1) {
        return Err(Error::invalid("dual probe needs a lattice with more than one point"));
    }
    let gamma = query.dual_gamma();
    let report = gamma_sum(sweep, gamma)?;
    Ok(DualProbe { gamma, convergent: report.diagnosis == Growth::Bounded, report })
}

#[derive(Clone, Debug)]
pub struct GridRow {
    pub query: InclusionQuery,
    pub verdict: Verdict,
    /// Fitted slope on the `q ≥ p` branch, `γ` on the other.
    pub slope_or_gamma: f64,
    /// Bounded ratio or convergent sum.
    pub evidence: bool,
}

impl GridRow {
    pub fn consistent(&self) -> bool {
        self.verdict.included == self.evidence
    }
}

/// Queries whose probes are decisive: ratio exponents either zero or at least
/// `0.15` away from it, dual exponents either `n − 1` or at least `0.25` away.
pub fn default_grid(n: usize, count: usize) -> Vec<InclusionQuery> {
    let exps = [0.5, 1.0, 1.5, 2.0, 3.0];
    let weights = [0.0, 0.5, 1.0, 2.0];
    let nf = n as f64;
    let mut embed = Vec::new();
    let mut holder = Vec::new();
    for &p in &exps {
        for &q in &exps {
            for &alpha in &weights {
                for &beta in &weights {
                    let Ok(query) = InclusionQuery::new(p, alpha, q, beta, n) else { continue };
                    if q >= p {
                        let sigma = query.ratio_exponent();
                        if sigma.abs() < 1e-12 || sigma.abs() >= 0.15 {
                            embed.push(query);
                        }
                    } else {
                        let g = query.dual_gamma() - (nf - 1.0);
                        if g.abs() < 1e-12 || g.abs() >= 0.25 {
                            holder.push(query);
                        }
                    }
                }
            }
        }
    }
    let half = count / 2;
    let mut out = spread(&embed, count - half);
    out.extend(spread(&holder, half));
    out
}

fn spread(items: &[InclusionQuery], k: usize) -> Vec<InclusionQuery> {
    if items.len() <= k {
        return items.to_vec();
    }
    (0..k).map(|i| items[i * items.len() / k]).collect()
}

/// Runs both probes over a grid, the dual probe on a shared sweep.
pub fn run_grid(queries: &[InclusionQuery], sweep: &[SeparatedSet], radii: &[f64], base: QuadSpec) -> Result<Vec<GridRow>> {
    queries
        .iter()
        .map(|query| {
            let verdict = decide_inclusion(query);
            let (slope_or_gamma, evidence) = match verdict.branch {
                Branch::Embedding => {
                    let backend = PowerKernel::new(probe_order(query), query.n)?;
                    let probe = norm_ratio_probe(query, &backend, radii, base)?;
                    (probe.slope, probe.bounded)
                }
                Branch::Holder => {
                    let probe = lattice_dual_probe(query, sweep)?;
                    (probe.gamma, probe.convergent)
                }
            };
            Ok(GridRow { query: *query, verdict, slope_or_gamma, evidence })
        })
        .collect()
}

/// `(p, α) ↦ (1, (α+n)/p − n)` for `0 < p < 1`.
pub fn l1_companion(p: f64, alpha: f64, n: usize) -> Result<InclusionQuery> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("companion space needs 0 < p < 1, got {p}")));
    }
    InclusionQuery::new(p, alpha, 1.0, (alpha + n as f64) / p - n as f64, n)
}
