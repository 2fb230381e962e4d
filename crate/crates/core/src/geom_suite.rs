//! Randomized identity and inequality checks for the ball geometry, run
//! against swappable primitives so that a corrupted bracket is caught.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{bracket_raw, dist_sq, dot, mobius_raw, one_minus_norm_sq, rho_raw};

/// Default slack on the non-strict side of every inequality.
pub const INEQ_SLACK: f64 = 1e-9;
/// Tolerance of the identity checks.
pub const IDENTITY_TOL: f64 = 1e-10;

/// Primitives under test; the defaults are the library's own.
#[derive(Clone, Copy)]
pub struct Primitives {
    pub bracket: fn(&[f64], &[f64]) -> f64,
    pub mobius: fn(&[f64], &[f64]) -> Vec<f64>,
    pub rho: fn(&[f64], &[f64]) -> f64,
}

fn library_bracket(x: &[f64], y: &[f64]) -> f64 {
    bracket_raw(x, y).unwrap_or(f64::NAN)
}

impl Default for Primitives {
    fn default() -> Self {
        Primitives { bracket: library_bracket, mobius: mobius_raw, rho: rho_raw }
    }
}

impl Primitives {
    pub fn bracket(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.bracket)(x, y)
    }

    pub fn mobius(&self, a: &[f64], x: &[f64]) -> Vec<f64> {
        (self.mobius)(a, x)
    }

    pub fn rho(&self, a: &[f64], b: &[f64]) -> f64 {
        (self.rho)(a, b)
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    /// Largest error of an identity, or largest excess of an inequality.
    pub max_violation: f64,
    pub violations: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Random points: mostly uniform in the ball, a fifth with `1 − |x|` spread
/// over `[10⁻³, 10⁻¹]`.
pub fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    loop {
        let s = dot(&v, &v);
        if s > 1e-12 && s <= 1.0 {
            break;
        }
        v.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..1.0));
    }
    let len = dot(&v, &v).sqrt();
    let radius = if rng.gen_bool(0.2) {
        1.0 - 10f64.powf(-rng.gen_range(1.0..3.0))
    } else {
        rng.gen_range(0.0f64..1.0).powf(1.0 / n as f64)
    };
    v.iter().map(|c| c / len * radius).collect()
}

struct Tally {
    name: &'static str,
    cases: usize,
    worst: f64,
    bad: usize,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally { name, cases: 0, worst: 0.0, bad: 0 }
    }

    fn identity(&mut self, err: f64, tol: f64) {
        self.cases += 1;
        let err = if err.is_nan() { f64::INFINITY } else { err };
        self.worst = self.worst.max(err);
        if err > tol {
            self.bad += 1;
        }
    }

    /// Records `lo ≤ hi`.
    fn le(&mut self, lo: f64, hi: f64, slack: f64) {
        self.cases += 1;
        let excess = if lo.is_nan() || hi.is_nan() { f64::INFINITY } else { lo - hi };
        self.worst = self.worst.max(excess);
        if excess > slack * hi.abs().max(1.0) {
            self.bad += 1;
        }
    }

    fn done(self) -> CheckResult {
        CheckResult { name: self.name, cases: self.cases, max_violation: self.worst, violations: self.bad }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Algebraic identities on `count` random configurations. The bracket
/// identity is checked in relative error, the others in absolute error.
pub fn identity_suite(prims: &Primitives, n: usize, count: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut square = Tally::new("bracket square identity");
    let mut mob = Tally::new("mobius defect identity");
    let mut image = Tally::new("bracket of mobius image");
    let mut inv = Tally::new("involution");
    let mut rho_inv = Tally::new("mobius invariance of rho");
    let mut rho_def = Tally::new("rho equals |phi_a(b)|");
    for _ in 0..count {
        let a = random_point(&mut rng, n);
        let x = random_point(&mut rng, n);
        let c = random_point(&mut rng, n);
        let (da, dx) = (one_minus_norm_sq(&a), one_minus_norm_sq(&x));
        let bxa = prims.bracket(&x, &a);
        square.identity(rel(bxa * bxa, dist_sq(&x, &a) + da * dx), IDENTITY_TOL);
        let phi = prims.mobius(&a, &x);
        mob.identity((one_minus_norm_sq(&phi) - da * dx / (bxa * bxa)).abs(), IDENTITY_TOL);
        image.identity((prims.bracket(&phi, &a) * bxa - da).abs(), IDENTITY_TOL);
        let back = prims.mobius(&a, &phi);
        inv.identity(dist_sq(&back, &x).sqrt(), IDENTITY_TOL);
        let (pa, px) = (prims.mobius(&c, &a), prims.mobius(&c, &x));
        rho_inv.identity((prims.rho(&pa, &px) - prims.rho(&a, &x)).abs(), IDENTITY_TOL);
        rho_def.identity((prims.rho(&a, &x) - dot(&phi, &phi).sqrt()).abs(), IDENTITY_TOL);
    }
    vec![square.done(), mob.done(), image.done(), inv.done(), rho_inv.done(), rho_def.done()]
}

/// Sampled inequalities on `count` random triples.
pub fn inequality_suite(prims: &Primitives, n: usize, count: usize, seed: u64, slack: f64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bounds = Tally::new("bracket between 1-|x||y| and 1+|x||y|");
    let mut tri_lo = Tally::new("strong triangle, lower");
    let mut tri_hi = Tally::new("strong triangle, upper");
    let mut ratio = Tally::new("defect over bracket");
    let mut square = Tally::new("defect ratio");
    let mut brk = Tally::new("bracket ratio");
    for _ in 0..count {
        let a = random_point(&mut rng, n);
        let b = random_point(&mut rng, n);
        let x = random_point(&mut rng, n);
        let (na, nb) = (dot(&a, &a).sqrt(), dot(&b, &b).sqrt());
        let bab = prims.bracket(&a, &b);
        bounds.le(1.0 - na * nb, bab, slack);
        bounds.le(bab, 1.0 + na * nb, slack);
        let (rax, rbx, rab) = (prims.rho(&a, &x), prims.rho(&b, &x), prims.rho(&a, &b));
        tri_lo.le((rax - rbx).abs() / (1.0 - rax * rbx), rab, slack);
        tri_hi.le(rab, (rax + rbx) / (1.0 + rax * rbx), slack);
        let q = one_minus_norm_sq(&a) / bab;
        ratio.le(1.0 - rab, q, slack);
        ratio.le(q, 1.0 + rab, slack);
        let s = one_minus_norm_sq(&a) / one_minus_norm_sq(&b);
        let (lo, hi) = ((1.0 - rab) / (1.0 + rab), (1.0 + rab) / (1.0 - rab));
        square.le(lo, s, slack);
        square.le(s, hi, slack);
        let t = bab / prims.bracket(&x, &b);
        // a, x play the roles of the two free points, b of the anchor
        let rax_ = prims.rho(&a, &x);
        brk.le((1.0 - rax_) / (1.0 + rax_), t, slack);
        brk.le(t, (1.0 + rax_) / (1.0 - rax_), slack);
    }
    vec![bounds.done(), tri_lo.done(), tri_hi.done(), ratio.done(), square.done(), brk.done()]
}
