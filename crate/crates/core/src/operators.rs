//! Sampling and synthesis operators, the integral operators `Q_s`, `P_s`,
//! and empirical contraction factors.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::one_minus_norm_sq;
use crate::kernels::{power_eval, AtomSum, KernelBackend, KernelKind};
use crate::lattice::SeparatedSet;
use crate::numerics::pairwise_sum;
use crate::quadrature::{check_resolution_scaled, BallRule, FlatRule, QuadSpec};

/// Exponent, weight and kernel order of a space `B^p_α` with kernel `R_s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceParams {
    pub p: f64,
    pub alpha: f64,
    pub s: f64,
    pub n: usize,
}

impl SpaceParams {
    pub fn new(p: f64, alpha: f64, s: f64, n: usize) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::domain(format!("exponent p must be positive and finite, got {p}")));
        }
        if !(alpha > -1.0) {
            return Err(Error::domain(format!("weight alpha must exceed -1, got {alpha}")));
        }
        if !(s > -1.0) {
            return Err(Error::domain(format!("kernel order s must exceed -1, got {s}")));
        }
        if n < 2 {
            return Err(Error::domain("dimension must be at least 2"));
        }
        Ok(SpaceParams { p, alpha, s, n })
    }

    /// `α+1 < p(s+1)` when `p ≥ 1`, `α+n < p(s+n)` when `p < 1`.
    pub fn condition_holds(&self) -> bool {
        let n = self.n as f64;
        if self.p >= 1.0 {
            self.alpha + 1.0 < self.p * (self.s + 1.0)
        } else {
            self.alpha + n < self.p * (self.s + n)
        }
    }

    pub fn require_condition(&self) -> Result<()> {
        if self.condition_holds() {
            Ok(())
        } else {
            let n = self.n as f64;
            let (lhs, rhs, form) = if self.p >= 1.0 {
                (self.alpha + 1.0, self.p * (self.s + 1.0), "alpha+1 < p(s+1)")
            } else {
                (self.alpha + n, self.p * (self.s + n), "alpha+n < p(s+n)")
            };
            Err(Error::domain(format!(
                "kernel order too small: {form} fails ({lhs} >= {rhs}) for p = {}, alpha = {}, s = {}",
                self.p, self.alpha, self.s
            )))
        }
    }

    /// `(α+n)/p`, the exponent of the sampling weights.
    pub fn t_exponent(&self) -> f64 {
        (self.alpha + self.n as f64) / self.p
    }

    /// `s+n−(α+n)/p`, the exponent of the atom weights.
    pub fn u_exponent(&self) -> f64 {
        self.s + self.n as f64 - self.t_exponent()
    }
}

/// Finite coefficient sequence with its exponent.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefSeq {
    pub values: Vec<f64>,
    pub p: f64,
}

impl CoefSeq {
    pub fn new(values: Vec<f64>, p: f64) -> Self {
        CoefSeq { values, p }
    }

    pub fn zeros(len: usize, p: f64) -> Self {
        CoefSeq { values: vec![0.0; len], p }
    }

    pub fn unit(len: usize, k: usize, p: f64) -> Self {
        let mut v = vec![0.0; len];
        v[k] = 1.0;
        CoefSeq { values: v, p }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ|λ_m|^p`.
    pub fn norm_pow(&self) -> f64 {
        pairwise_sum(&self.values.iter().map(|v| v.abs().powf(self.p)).collect::<Vec<_>>())
    }

    /// `(Σ|λ_m|^p)^{1/p}`; a quasi-norm when `p < 1`.
    pub fn norm(&self) -> f64 {
        self.norm_pow().powf(1.0 / self.p)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &CoefSeq) -> CoefSeq {
        CoefSeq { values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(), p: self.p }
    }
}

/// Real polynomial in `x₁…x_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub n: usize,
    /// Exponent vector ↦ coefficient.
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn constant(n: usize, c: f64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(vec![0; n], c);
        }
        Polynomial { n, terms }
    }

    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Polynomial { n, terms: BTreeMap::from([(e, 1.0)]) }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> =
            self.terms.iter().map(|(e, c)| c * e.iter().zip(x).map(|(k, xi)| xi.powi(*k as i32)).product::<f64>()).collect();
        pairwise_sum(&terms)
    }

    pub fn add(&self, other: &Polynomial, sign: f64) -> Polynomial {
        let mut terms = self.terms.clone();
        for (e, c) in &other.terms {
            *terms.entry(e.clone()).or_insert(0.0) += sign * c;
        }
        terms.retain(|_, c| *c != 0.0);
        Polynomial { n: self.n, terms }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut terms: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                *terms.entry(e).or_insert(0.0) += c1 * c2;
            }
        }
        terms.retain(|_, c| *c != 0.0);
        Polynomial { n: self.n, terms }
    }

    pub fn scale(&self, t: f64) -> Polynomial {
        let mut p = self.clone();
        p.terms.values_mut().for_each(|c| *c *= t);
        p.terms.retain(|_, c| *c != 0.0);
        p
    }

    /// Euclidean Laplacian.
    pub fn laplacian(&self) -> Polynomial {
        let mut terms: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (e, c) in &self.terms {
            for i in 0..self.n {
                if e[i] >= 2 {
                    let mut f = e.clone();
                    f[i] -= 2;
                    *terms.entry(f).or_insert(0.0) += c * (e[i] * (e[i] - 1)) as f64;
                }
            }
        }
        terms.retain(|_, c| *c != 0.0);
        Polynomial { n: self.n, terms }
    }

    pub fn is_harmonic(&self) -> bool {
        self.laplacian().terms.values().all(|c| c.abs() < 1e-12)
    }

    /// Parses expressions such as `x1^2 - x2^2`, `2*x1*x2 + 0.5` or `(x1 - 1)^3`.
    pub fn parse(n: usize, text: &str) -> Result<Polynomial> {
        let mut p = Parser { n, s: text.as_bytes(), i: 0 };
        let out = p.expr()?;
        p.skip();
        if p.i != p.s.len() {
            return Err(Error::Format(format!("unexpected input at position {} of '{text}'", p.i)));
        }
        Ok(out)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.terms.iter().enumerate() {
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0)
                .map(|(i, p)| if *p == 1 { format!("x{}", i + 1) } else { format!("x{}^{}", i + 1, p) })
                .collect();
            let sign = if *c < 0.0 { "-" } else if k > 0 { "+" } else { "" };
            let sep = if k > 0 { " " } else { "" };
            let mag = c.abs();
            let body = if vars.is_empty() {
                format!("{mag}")
            } else if mag == 1.0 {
                vars.join("*")
            } else {
                format!("{mag}*{}", vars.join("*"))
            };
            if k > 0 {
                write!(f, "{sep}{sign} {body}")?;
            } else {
                write!(f, "{sign}{body}")?;
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    n: usize,
    s: &'a [u8],
    i: usize,
}

impl Parser<'_> {
    fn skip(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip();
        self.s.get(self.i).copied()
    }

    fn err(&self, what: &str) -> Error {
        Error::Format(format!("polynomial syntax: {what} at position {}", self.i))
    }

    fn expr(&mut self) -> Result<Polynomial> {
        let mut acc = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.i += 1;
            let t = self.term()?;
            acc = acc.add(&t, if c == b'+' { 1.0 } else { -1.0 });
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial> {
        let mut acc = self.factor()?;
        while self.peek() == Some(b'*') {
            self.i += 1;
            acc = acc.mul(&self.factor()?);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial> {
        if self.peek() == Some(b'-') {
            self.i += 1;
            return Ok(self.factor()?.scale(-1.0));
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.i += 1;
            self.skip();
            let start = self.i;
            while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                self.i += 1;
            }
            let k: u32 = std::str::from_utf8(&self.s[start..self.i])
                .ok()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| self.err("expected a non-negative integer exponent"))?;
            let mut out = Polynomial::constant(self.n, 1.0);
            for _ in 0..k {
                out = out.mul(&base);
            }
            return Ok(out);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial> {
        match self.peek() {
            Some(b'(') => {
                self.i += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.i += 1;
                Ok(e)
            }
            Some(b'x') => {
                self.i += 1;
                let start = self.i;
                while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                    self.i += 1;
                }
                let k: usize = std::str::from_utf8(&self.s[start..self.i])
                    .ok()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| self.err("expected a variable index"))?;
                if k == 0 || k > self.n {
                    return Err(self.err(&format!("variable x{k} outside 1..={}", self.n)));
                }
                Ok(Polynomial::coordinate(self.n, k - 1))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.i;
                while self.i < self.s.len()
                    && (self.s[self.i].is_ascii_digit()
                        || self.s[self.i] == b'.'
                        || self.s[self.i] == b'e'
                        || self.s[self.i] == b'E'
                        || ((self.s[self.i] == b'-' || self.s[self.i] == b'+')
                            && matches!(self.s[self.i - 1], b'e' | b'E')))
                {
                    self.i += 1;
                }
                let v: f64 = std::str::from_utf8(&self.s[start..self.i])
                    .ok()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| self.err("malformed number"))?;
                Ok(Polynomial::constant(self.n, v))
            }
            _ => Err(self.err("expected a number, variable or '('")),
        }
    }
}

/// `Re z^k` and `Im z^k` (`z = x₁ + i x₂`) for `k ≤ max_degree`, skipping `Im z⁰`.
pub fn harmonic_basis_2d(max_degree: u32) -> Vec<Polynomial> {
    let mut out = Vec::new();
    let mut re = Polynomial::constant(2, 1.0);
    let mut im = Polynomial::constant(2, 0.0);
    let x = Polynomial::coordinate(2, 0);
    let y = Polynomial::coordinate(2, 1);
    out.push(re.clone());
    for _ in 1..=max_degree {
        let nre = re.mul(&x).add(&im.mul(&y), -1.0);
        let nim = re.mul(&y).add(&im.mul(&x), 1.0);
        re = nre;
        im = nim;
        out.push(re.clone());
        out.push(im.clone());
    }
    out
}

/// Harmonic polynomials through degree 6 for `n = 2`, through degree 2 otherwise.
pub fn harmonic_family(n: usize) -> Vec<Polynomial> {
    if n == 2 {
        return harmonic_basis_2d(6);
    }
    let mut out = vec![Polynomial::constant(n, 1.0)];
    for i in 0..n {
        out.push(Polynomial::coordinate(n, i));
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push(Polynomial::coordinate(n, i).mul(&Polynomial::coordinate(n, j)));
        }
    }
    for i in 1..n {
        let a = Polynomial::coordinate(n, 0);
        let b = Polynomial::coordinate(n, i);
        out.push(a.mul(&a).add(&b.mul(&b), -1.0));
    }
    out
}

/// `Σ c_m K(·, a_m)` with an aggregated evaluator.
#[derive(Clone)]
pub struct AtomCombination {
    pub n: usize,
    pub kind: KernelKind,
    pub centers: Vec<f64>,
    pub coeffs: Vec<f64>,
    evaluator: Arc<dyn AtomSum>,
}

impl AtomCombination {
    pub fn new(backend: &dyn KernelBackend, centers: Vec<f64>, coeffs: Vec<f64>) -> Result<Self> {
        let n = backend.dim();
        if centers.len() != n * coeffs.len() {
            return Err(Error::DimensionMismatch { expected: n * coeffs.len(), got: centers.len() });
        }
        let evaluator: Arc<dyn AtomSum> = Arc::from(backend.combination(&centers, &coeffs));
        Ok(AtomCombination { n, kind: backend.kind(), centers, coeffs, evaluator })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.evaluator.eval(x)
    }
}

impl fmt::Debug for AtomCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AtomCombination")
            .field("n", &self.n)
            .field("kind", &self.kind)
            .field("atoms", &self.coeffs.len())
            .finish()
    }
}

/// Values on a fixed point set; evaluation elsewhere yields NaN.
#[derive(Clone, Debug)]
pub struct Table {
    pub n: usize,
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    lookup: HashMap<Vec<u64>, usize>,
}

impl Table {
    pub fn new(n: usize, points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if points.len() != n * values.len() {
            return Err(Error::DimensionMismatch { expected: n * values.len(), got: points.len() });
        }
        let lookup = points.chunks_exact(n).enumerate().map(|(i, x)| (key(x), i)).collect();
        Ok(Table { n, points, values, lookup })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.lookup.get(&key(x)).map_or(f64::NAN, |&i| self.values[i])
    }
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// A function on the ball.
#[derive(Clone, Debug)]
pub enum FieldFunction {
    Polynomial(Polynomial),
    Atoms(AtomCombination),
    Table(Table),
}

impl FieldFunction {
    pub fn zero(n: usize) -> Self {
        FieldFunction::Polynomial(Polynomial::constant(n, 0.0))
    }

    pub fn dim(&self) -> usize {
        match self {
            FieldFunction::Polynomial(p) => p.n,
            FieldFunction::Atoms(a) => a.n,
            FieldFunction::Table(t) => t.n,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FieldFunction::Polynomial(p) => p.eval(x),
            FieldFunction::Atoms(a) => a.eval(x),
            FieldFunction::Table(t) => t.eval(x),
        }
    }

    /// Values at row-major points.
    pub fn values_at(&self, points: &[f64]) -> Vec<f64> {
        points.chunks_exact(self.dim()).map(|x| self.eval(x)).collect()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, FieldFunction::Polynomial(p) if p.terms.is_empty())
            || matches!(self, FieldFunction::Atoms(a) if a.coeffs.iter().all(|c| *c == 0.0))
    }
}

/// `(Σ wᵢ|vᵢ|^p)^{1/p}` over the (masked) nodes of a rule.
pub fn lp_norm(rule: &FlatRule, values: &[f64], p: f64, mask: Option<&[bool]>) -> Result<f64> {
    let pow: Vec<f64> = values.iter().map(|v| v.abs().powf(p)).collect();
    Ok(rule.sum(&pow, mask)?.powf(1.0 / p))
}

/// `‖f‖_{B^p_α}` by a rule carrying the weight `(1−|x|²)^α`.
pub fn bergman_norm(f: &FieldFunction, rule: &FlatRule, p: f64, mask: Option<&[bool]>) -> Result<f64> {
    let v = rule.values(|x| f.eval(x));
    lp_norm(rule, &v, p, mask)
}

/// `T f = {f(a_m)(1−|a_m|²)^{(α+n)/p}}`.
pub fn sample_t(f: &FieldFunction, set: &SeparatedSet, sp: &SpaceParams) -> CoefSeq {
    let e = sp.t_exponent();
    let values = (0..set.len()).map(|m| f.eval(set.point(m)) * one_minus_norm_sq(set.point(m)).powf(e)).collect();
    CoefSeq::new(values, sp.p)
}

/// `Σ λ_m ω_m K(·, a_m)` for arbitrary per-atom multipliers.
pub fn synth_weighted(
    lambda: &[f64],
    weights: &[f64],
    set: &SeparatedSet,
    backend: &dyn KernelBackend,
) -> Result<FieldFunction> {
    if lambda.len() != set.len() || weights.len() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), got: lambda.len().min(weights.len()) });
    }
    let coeffs: Vec<f64> = lambda.iter().zip(weights).map(|(l, w)| l * w).collect();
    Ok(FieldFunction::Atoms(AtomCombination::new(backend, set.points.clone(), coeffs)?))
}

/// Standard atom multipliers `(1−|a_m|²)^{s+n−(α+n)/p}`.
pub fn u_weights(set: &SeparatedSet, sp: &SpaceParams) -> Vec<f64> {
    let e = sp.u_exponent();
    set.defects().into_iter().map(|u| u.powf(e)).collect()
}

/// Multipliers `(1−|a_m|²)^{−(α+n)/p} / K(a_m,a_m)` of `Û`.
pub fn uhat_weights(set: &SeparatedSet, sp: &SpaceParams, backend: &dyn KernelBackend) -> Vec<f64> {
    let e = sp.t_exponent();
    (0..set.len()).map(|m| one_minus_norm_sq(set.point(m)).powf(-e) / backend.diagonal(set.point(m))).collect()
}

fn check_backend(set: &SeparatedSet, sp: &SpaceParams, backend: &dyn KernelBackend) -> Result<()> {
    if backend.dim() != sp.n || set.n != sp.n {
        return Err(Error::DimensionMismatch { expected: sp.n, got: if backend.dim() != sp.n { backend.dim() } else { set.n } });
    }
    sp.require_condition()
}

/// `U λ = Σ λ_m (1−|a_m|²)^{s+n−(α+n)/p} K(·, a_m)`.
pub fn synth_u(lambda: &CoefSeq, set: &SeparatedSet, sp: &SpaceParams, backend: &dyn KernelBackend) -> Result<FieldFunction> {
    check_backend(set, sp, backend)?;
    synth_weighted(&lambda.values, &u_weights(set, sp), set, backend)
}

/// `Û λ = Σ λ_m (1−|a_m|²)^{−(α+n)/p} K(·, a_m)/K(a_m, a_m)`.
pub fn synth_uhat(lambda: &CoefSeq, set: &SeparatedSet, sp: &SpaceParams, backend: &dyn KernelBackend) -> Result<FieldFunction> {
    check_backend(set, sp, backend)?;
    synth_weighted(&lambda.values, &uhat_weights(set, sp, backend), set, backend)
}

/// `T̂ f = {f(a_m)(1−|a_m|²)^{(α+n)/p−(s+n)} ν_s(E_m)}` from cell masses.
pub fn sample_that(f: &FieldFunction, set: &SeparatedSet, masses: &[f64], sp: &SpaceParams) -> Result<CoefSeq> {
    if masses.len() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), got: masses.len() });
    }
    let e = -sp.u_exponent();
    let values =
        (0..set.len()).map(|m| f.eval(set.point(m)) * one_minus_norm_sq(set.point(m)).powf(e) * masses[m]).collect();
    Ok(CoefSeq::new(values, sp.p))
}

fn integral_operator(
    f: &FieldFunction,
    s: f64,
    spec: QuadSpec,
    points: &[f64],
    kernel: impl Fn(&[f64], &[f64]) -> f64 + Sync,
    what: &str,
) -> Result<FieldFunction> {
    if !(s > -1.0) {
        return Err(Error::domain(format!("s must exceed -1, got {s}")));
    }
    let n = f.dim();
    let coarse = BallRule::new(n, s, spec)?.flatten();
    let fine = BallRule::new(n, s, spec.refined())?.flatten();
    let fc = coarse.values(|y| f.eval(y));
    let ff = fine.values(|y| f.eval(y));
    let mut out = Vec::with_capacity(points.len() / n);
    for x in points.chunks_exact(n) {
        let kc: Vec<f64> = (0..coarse.len()).map(|i| fc[i] * kernel(x, coarse.point(i))).collect();
        let kf: Vec<f64> = (0..fine.len()).map(|i| ff[i] * kernel(x, fine.point(i))).collect();
        let vc = coarse.sum(&kc, None)?;
        let vf = fine.sum(&kf, None)?;
        let abs: Vec<f64> = kf.iter().map(|v| v.abs()).collect();
        let scale = 1e-8 * fine.sum(&abs, None)?;
        check_resolution_scaled(vc, vf, scale, &format!("{what} at {x:?}"))?;
        out.push(vf);
    }
    Ok(FieldFunction::Table(Table::new(n, points.to_vec(), out)?))
}

/// `Q_s f(x) = ∫ f(y)[x,y]^{−(s+n)} dν_s(y)` at the given points.
pub fn apply_qs(f: &FieldFunction, s: f64, spec: QuadSpec, points: &[f64]) -> Result<FieldFunction> {
    integral_operator(f, s, spec, points, |x, y| power_eval(s, x, y), "Q_s")
}

/// `P_s f(x) = ∫ f(y)K(x,y) dν_s(y)` at the given points.
pub fn apply_ps(
    f: &FieldFunction,
    s: f64,
    backend: &dyn KernelBackend,
    spec: QuadSpec,
    points: &[f64],
) -> Result<FieldFunction> {
    if !backend.is_reproducing() {
        return Err(Error::domain(format!("P_s needs a reproducing kernel, got the {} backend", backend.kind().name())));
    }
    if (backend.order() - s).abs() > 1e-12 {
        return Err(Error::domain(format!("backend order {} does not match s = {s}", backend.order())));
    }
    integral_operator(f, s, spec, points, |x, y| backend.eval(x, y), "P_s")
}

/// Largest ratio `‖op v‖ / ‖v‖` over a test family, given as `(‖op v‖, ‖v‖)` pairs.
pub fn op_contraction(ratios: impl IntoIterator<Item = Result<(f64, f64)>>) -> Result<f64> {
    let mut worst: Option<f64> = None;
    for r in ratios {
        let (num, den) = r?;
        if den > 0.0 {
            worst = Some(worst.unwrap_or(0.0).max(num / den));
        }
    }
    worst.ok_or_else(|| Error::invalid("contraction estimate needs a non-empty test family"))
}

/// `‖(I − TÛ) v‖ / ‖v‖` maximised over sequences.
pub fn contraction_t_uhat(
    set: &SeparatedSet,
    sp: &SpaceParams,
    backend: &dyn KernelBackend,
    family: &[CoefSeq],
) -> Result<f64> {
    op_contraction(family.iter().map(|v| {
        let g = synth_uhat(v, set, sp, backend)?;
        let tv = sample_t(&g, set, sp);
        Ok((v.sub(&tv).norm(), v.norm()))
    }))
}

/// `‖(I − UT̂) f‖ / ‖f‖` in `B^p_α` on the masked nodes of `rule`.
pub fn contraction_u_that(
    set: &SeparatedSet,
    masses: &[f64],
    sp: &SpaceParams,
    backend: &dyn KernelBackend,
    family: &[FieldFunction],
    rule: &FlatRule,
    mask: Option<&[bool]>,
) -> Result<f64> {
    op_contraction(family.iter().map(|f| {
        let lam = sample_that(f, set, masses, sp)?;
        let g = synth_u(&lam, set, sp, backend)?;
        let fv = rule.values(|x| f.eval(x));
        let gv = rule.values(|x| g.eval(x));
        let diff: Vec<f64> = fv.iter().zip(&gv).map(|(a, b)| a - b).collect();
        Ok((lp_norm(rule, &diff, sp.p, mask)?, lp_norm(rule, &fv, sp.p, mask)?))
    }))
}

/// Unit coordinate sequences `e_k` for `k` in `indices`.
pub fn unit_family(len: usize, indices: &[usize], p: f64) -> Vec<CoefSeq> {
    indices.iter().map(|&k| CoefSeq::unit(len, k, p)).collect()
}

/// Random sequences with entries uniform in `[−1, 1]`.
pub fn random_sequences(len: usize, count: usize, p: f64, seed: u64) -> Vec<CoefSeq> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| CoefSeq::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), p)).collect()
}

/// Random combinations of `atoms` kernels centred at points of the set.
pub fn random_atom_functions(
    set: &SeparatedSet,
    backend: &dyn KernelBackend,
    count: usize,
    atoms: usize,
    seed: u64,
) -> Result<Vec<FieldFunction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = set.n;
    (0..count)
        .map(|_| {
            let mut centers = Vec::with_capacity(n * atoms);
            let mut coeffs = Vec::with_capacity(atoms);
            for _ in 0..atoms {
                let m = rng.gen_range(0..set.len());
                centers.extend_from_slice(set.point(m));
                coeffs.push(rng.gen_range(-1.0..1.0) / backend.diagonal(set.point(m)));
            }
            Ok(FieldFunction::Atoms(AtomCombination::new(backend, centers, coeffs)?))
        })
        .collect()
}

/// Mask of rule nodes with `|x| ≤ radius`.
pub fn radius_mask(rule: &FlatRule, radius: f64) -> Vec<bool> {
    (0..rule.len()).map(|i| one_minus_norm_sq(rule.point(i)) >= (1.0 - radius) * (1.0 + radius)).collect()
}
