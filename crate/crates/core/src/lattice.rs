//! r-separated sets and r-lattices in the pseudo-hyperbolic metric, cell
//! partitions and counting diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geometry::{dot, mobius_raw, one_minus_norm_sq, rho_sq_raw};
use crate::numerics::{first_primes, gauss_legendre, radical_inverse};
use crate::quadrature::FlatRule;

/// Smallest reference radius of the candidate stream.
pub const STREAM_REF_RADIUS: f64 = 0.99;
/// A tail exponent at or below this value is diagnosed as divergent.
pub const DIVERGENCE_EXPONENT: f64 = 0.125;
/// Partial sums growing by less than this factor over the sweep are bounded.
pub const FLAT_GROWTH: f64 = 1.05;
/// Largest tolerated fraction of uncovered quadrature nodes inside `R_max`.
pub const MAX_UNCOVERED: f64 = 0.01;

/// Seeded Halton sequence with a Cranley–Patterson shift, mapped to the ball.
///
/// The radius is drawn uniformly in `t = |x|²/(1−|x|²)` up to a fixed
/// reference radius, so streams for different truncation radii share their
/// points and regenerated lattices are nearly nested.
#[derive(Clone, Debug)]
pub struct CandidateStream {
    n: usize,
    seed: u64,
    t_max: f64,
    bases: Vec<u64>,
    shift: Vec<f64>,
    index: u64,
    normal: Normal,
}

impl CandidateStream {
    pub fn new(n: usize, seed: u64, r_ref: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("dimension must be at least 2"));
        }
        if !(r_ref > 0.0 && r_ref < 1.0) {
            return Err(Error::domain(format!("stream reference radius must lie in (0,1), got {r_ref}")));
        }
        let coords = if n <= 3 { n } else { n + 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..coords).map(|_| rng.gen::<f64>()).collect();
        Ok(CandidateStream {
            n,
            seed,
            t_max: r_ref * r_ref / one_minus_norm_sq(&[r_ref]),
            bases: first_primes(coords),
            shift,
            index: 0,
            normal: Normal::new(0.0, 1.0).expect("standard normal"),
        })
    }

    /// Stream used for a lattice truncated at `r_max`.
    pub fn for_region(n: usize, seed: u64, r_max: f64) -> Result<Self> {
        Self::new(n, seed, r_max.max(STREAM_REF_RADIUS))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn coord(&self, j: usize) -> f64 {
        let v = (radical_inverse(self.index, self.bases[j]) + self.shift[j]).fract();
        v.clamp(1e-15, 1.0 - 1e-15)
    }
}

impl Iterator for CandidateStream {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        self.index += 1;
        let t = self.coord(0) * self.t_max;
        let radius = (t / (1.0 + t)).sqrt();
        let dir: Vec<f64> = match self.n {
            2 => {
                let th = std::f64::consts::TAU * self.coord(1);
                vec![th.cos(), th.sin()]
            }
            3 => {
                let z = 2.0 * self.coord(1) - 1.0;
                let ph = std::f64::consts::TAU * self.coord(2);
                let s = (1.0 - z * z).max(0.0).sqrt();
                vec![s * ph.cos(), s * ph.sin(), z]
            }
            n => {
                let g: Vec<f64> = (1..=n).map(|j| self.normal.inverse_cdf(self.coord(j))).collect();
                let s = dot(&g, &g).sqrt();
                g.into_iter().map(|c| c / s).collect()
            }
        };
        Some(dir.into_iter().map(|c| c * radius).collect())
    }
}

/// Uniform points of the Euclidean ball `|x| ≤ radius`, row-major.
pub fn uniform_probes(n: usize, radius: f64, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * count);
    let mut v = vec![0.0; n];
    let mut made = 0;
    while made < count {
        for c in v.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        if dot(&v, &v) < 1.0 {
            out.extend(v.iter().map(|c| c * radius));
            made += 1;
        }
    }
    out
}

/// Points bucketed by Euclidean norm for pseudo-ball queries.
#[derive(Clone, Debug)]
pub struct RadialIndex {
    n: usize,
    width: f64,
    bins: Vec<Vec<u32>>,
    points: Vec<f64>,
}

impl RadialIndex {
    pub fn new(n: usize, bins: usize) -> Self {
        RadialIndex { n, width: 1.0 / bins as f64, bins: vec![Vec::new(); bins], points: Vec::new() }
    }

    pub fn from_points(n: usize, points: &[f64]) -> Self {
        let m = points.len() / n;
        let mut idx = Self::new(n, (4 * m).clamp(64, 4096));
        for i in 0..m {
            idx.insert(&points[i * n..(i + 1) * n]);
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }

    pub fn insert(&mut self, x: &[f64]) -> usize {
        let i = self.len();
        let b = ((dot(x, x).sqrt() / self.width) as usize).min(self.bins.len() - 1);
        self.bins[b].push(i as u32);
        self.points.extend_from_slice(x);
        i
    }

    /// Calls `f(index, ρ²)` for every stored point with `ρ(x, point) < radius`.
    pub fn for_each_within(&self, x: &[f64], radius: f64, mut f: impl FnMut(usize, f64)) {
        let x2 = dot(x, x);
        let q = 1.0 - x2 * radius * radius;
        let scale = (1.0 - radius * radius) / q;
        let eu_r = (1.0 - x2) * radius / q;
        let c_norm = x2.sqrt() * scale;
        let lo = ((c_norm - eu_r - 1e-12) / self.width).floor().max(0.0) as usize;
        let hi = (((c_norm + eu_r + 1e-12) / self.width).floor() as usize).min(self.bins.len() - 1);
        let r2 = radius * radius;
        let eu_r2 = eu_r * eu_r * (1.0 + 1e-9) + 1e-300;
        for b in lo..=hi {
            for &i in &self.bins[b] {
                let a = self.point(i as usize);
                let d2: f64 = a.iter().zip(x).map(|(ai, xi)| (ai - scale * xi).powi(2)).sum();
                if d2 > eu_r2 {
                    continue;
                }
                let p2 = rho_sq_raw(x, a);
                if p2 < r2 {
                    f(i as usize, p2);
                }
            }
        }
    }

    /// Whether some stored point lies at ρ-distance below `radius`.
    pub fn any_within(&self, x: &[f64], radius: f64) -> bool {
        let mut hit = false;
        self.for_each_within(x, radius, |_, _| hit = true);
        hit
    }
}

/// Finite truncation of an r-separated sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparatedSet {
    pub n: usize,
    pub r: f64,
    pub r_max: f64,
    pub seed: u64,
    /// Row-major coordinates in generation order.
    pub points: Vec<f64>,
    pub covering_verified: bool,
}

impl SeparatedSet {
    /// Wraps explicit points after checking separation and truncation.
    pub fn from_points(n: usize, r: f64, r_max: f64, points: Vec<f64>) -> Result<Self> {
        check_params(r, r_max)?;
        if points.len() % n != 0 || points.is_empty() {
            return Err(Error::invalid("point buffer is empty or not a multiple of the dimension"));
        }
        let set = SeparatedSet { n, r, r_max, seed: 0, points, covering_verified: false };
        for i in 0..set.len() {
            let a = set.point(i);
            if dot(a, a).sqrt() > r_max {
                return Err(Error::domain(format!("point {i} lies outside the truncation radius {r_max}")));
            }
        }
        let sep = verify_separation(&set);
        if sep < r {
            return Err(Error::domain(format!("points are only {sep}-separated, below r = {r}")));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }

    /// `1 − |a_m|²` for every point.
    pub fn defects(&self) -> Vec<f64> {
        (0..self.len()).map(|i| one_minus_norm_sq(self.point(i))).collect()
    }

    pub fn index(&self) -> RadialIndex {
        RadialIndex::from_points(self.n, &self.points)
    }
}

fn check_params(r: f64, r_max: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::domain(format!("separation r must lie in (0,1), got {r}")));
    }
    if !(r_max > 0.0 && r_max < 1.0) {
        return Err(Error::domain(format!("truncation radius must lie in (0,1), got {r_max}")));
    }
    Ok(())
}

/// Stopping rule of the greedy pass.
#[derive(Clone, Copy, Debug)]
pub struct GreedyOptions {
    /// Stop after this many consecutive rejections, at least.
    pub patience_floor: usize,
    /// ... or this many per accepted point, whichever is larger.
    pub patience_per_point: usize,
    pub max_candidates: usize,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        GreedyOptions { patience_floor: 20_000, patience_per_point: 60, max_candidates: 20_000_000 }
    }
}

/// First-fit greedy r-separated subset of the stream points in `|x| ≤ R_max`,
/// completed to a maximal set by a deterministic sweep of the ball boundaries.
pub fn greedy_lattice(
    n: usize,
    r: f64,
    r_max: f64,
    seed: u64,
    stream: &mut dyn Iterator<Item = Vec<f64>>,
    opts: GreedyOptions,
) -> Result<SeparatedSet> {
    check_params(r, r_max)?;
    let mut index = RadialIndex::new(n, 1024);
    let r_max2 = r_max * r_max;
    let mut seen = 0usize;
    let mut in_region = 0usize;
    let mut rejected_run = 0usize;
    for x in stream {
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        seen += 1;
        if seen > opts.max_candidates {
            break;
        }
        if dot(&x, &x) > r_max2 {
            continue;
        }
        in_region += 1;
        if index.any_within(&x, r) {
            rejected_run += 1;
            if rejected_run >= opts.patience_floor.max(opts.patience_per_point * index.len()) {
                break;
            }
        } else {
            index.insert(&x);
            rejected_run = 0;
        }
    }
    if in_region == 0 {
        return Err(Error::invalid("candidate stream produced no point inside the truncation radius"));
    }
    complete(&mut index, r, r_max);
    Ok(SeparatedSet { n, r, r_max, seed, points: index.points, covering_verified: false })
}

/// Unit directions sampled on the sphere of `ℝⁿ`.
fn sphere_directions(n: usize) -> Vec<Vec<f64>> {
    match n {
        2 => (0..512)
            .map(|k| {
                let th = std::f64::consts::TAU * (k as f64 + 0.5) / 512.0;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            let m = 2048;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|k| {
                    let z = 1.0 - (2 * k + 1) as f64 / m as f64;
                    let s = (1.0 - z * z).sqrt();
                    let ph = golden * k as f64;
                    vec![s * ph.cos(), s * ph.sin(), z]
                })
                .collect()
        }
        n => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            (0..4096)
                .map(|_| {
                    let g: Vec<f64> = (0..n).map(|_| normal.inverse_cdf(rng.gen::<f64>().clamp(1e-15, 1.0 - 1e-15))).collect();
                    let s = dot(&g, &g).sqrt();
                    g.into_iter().map(|c| c / s).collect()
                })
                .collect()
        }
    }
}

/// Fills the holes left by the stream: points just outside each `∂E_r(a_m)`
/// that are inside `R_max` and uncovered are accepted, until none remain.
fn complete(index: &mut RadialIndex, r: f64, r_max: f64) {
    let dirs = sphere_directions(index.n);
    let reach = r * (1.0 + 1e-9);
    let r_max2 = r_max * r_max;
    let mut m = 0;
    while m < index.len() {
        let a = index.point(m).to_vec();
        for d in &dirs {
            let z: Vec<f64> = d.iter().map(|c| c * reach).collect();
            let b = mobius_raw(&a, &z);
            if dot(&b, &b) <= r_max2 && !index.any_within(&b, r) {
                index.insert(&b);
            }
        }
        m += 1;
    }
}

/// Greedy lattice from the default seeded stream.
pub fn build_lattice(n: usize, r: f64, r_max: f64, seed: u64) -> Result<SeparatedSet> {
    let mut stream = CandidateStream::for_region(n, seed, r_max)?;
    greedy_lattice(n, r, r_max, seed, &mut stream, GreedyOptions::default())
}

/// Exact minimum pairwise ρ; `+∞` for a single point.
pub fn verify_separation(set: &SeparatedSet) -> f64 {
    let m = set.len();
    let mut best = f64::INFINITY;
    for i in 0..m {
        for j in i + 1..m {
            best = best.min(rho_sq_raw(set.point(i), set.point(j)));
        }
    }
    best.sqrt()
}

/// Fraction of probes inside `R_max` lying within ρ-distance r of the set.
pub fn verify_covering(set: &SeparatedSet, probes: &[f64]) -> f64 {
    let index = set.index();
    let n = set.n;
    let r_max2 = set.r_max * set.r_max;
    let (mut total, mut hit) = (0usize, 0usize);
    for x in probes.chunks_exact(n) {
        if dot(x, x) > r_max2 {
            continue;
        }
        total += 1;
        if index.any_within(x, set.r) {
            hit += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

/// Disjoint cells `E_m` with `E_{r/2}(a_m) ⊆ E_m ⊆ E_r(a_m)`.
///
/// `E_m = E_r(a_m) ∖ (E_1 ∪ … ∪ E_{m−1} ∪ ⋃_{i>m} E_{r/2}(a_i))`, which gives the
/// owner of `x` as the point whose half-ball contains it, or else the first
/// point within distance r.
#[derive(Clone, Debug)]
pub struct CellPartition {
    pub n: usize,
    pub r: f64,
    pub r_max: f64,
    index: RadialIndex,
}

pub fn build_cells(set: &SeparatedSet) -> Result<CellPartition> {
    if set.is_empty() {
        return Err(Error::invalid("cannot partition an empty set"));
    }
    Ok(CellPartition { n: set.n, r: set.r, r_max: set.r_max, index: set.index() })
}

impl CellPartition {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Cell index of `x`, `None` when `x` is outside every `E_r(a_m)`.
    pub fn owner(&self, x: &[f64]) -> Option<usize> {
        let half2 = 0.25 * self.r * self.r;
        let mut first: Option<usize> = None;
        let mut inner: Option<usize> = None;
        self.index.for_each_within(x, self.r, |i, p2| {
            if p2 < half2 {
                inner = Some(i);
            }
            first = Some(first.map_or(i, |f| f.min(i)));
        });
        inner.or(first)
    }

    /// Number of cells claiming `x` under a literal reading of the recursion.
    pub fn claim_count(&self, x: &[f64]) -> usize {
        let mut near: Vec<(usize, f64)> = Vec::new();
        self.index.for_each_within(x, self.r, |i, p2| near.push((i, p2)));
        near.sort_by_key(|e| e.0);
        let half2 = 0.25 * self.r * self.r;
        let mut claims = 0;
        for (k, _) in near.iter().enumerate() {
            let earlier_claimed = claims > 0;
            let later_half = near[k + 1..].iter().any(|e| e.1 < half2);
            if !earlier_claimed && !later_half {
                claims += 1;
            }
        }
        claims
    }

    /// Owners of every node of a flattened rule.
    pub fn owners(&self, rule: &FlatRule) -> Vec<Option<usize>> {
        (0..rule.len()).map(|i| self.owner(rule.point(i))).collect()
    }
}

/// Cell masses `ν_s(E_m)` from a rule carrying the weight `(1−|x|²)^s`.
#[derive(Clone, Debug)]
pub struct CellMasses {
    pub masses: Vec<f64>,
    pub owners: Vec<Option<usize>>,
    /// Fraction of rule weight inside `R_max` left uncovered.
    pub uncovered_fraction: f64,
}

pub fn cell_masses(cells: &CellPartition, rule: &FlatRule) -> Result<CellMasses> {
    let owners = cells.owners(rule);
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); cells.len()];
    let r_max2 = cells.r_max * cells.r_max;
    let (mut inside, mut lost) = (Vec::new(), Vec::new());
    for (i, o) in owners.iter().enumerate() {
        let x = rule.point(i);
        let w = rule.weights[i];
        if dot(x, x) <= r_max2 {
            inside.push(w);
            if o.is_none() {
                lost.push(w);
            }
        }
        if let Some(m) = o {
            buckets[*m].push(w);
        }
    }
    let total = crate::numerics::pairwise_sum(&inside);
    let uncovered = if total > 0.0 { crate::numerics::pairwise_sum(&lost) / total } else { 0.0 };
    if uncovered > MAX_UNCOVERED {
        return Err(Error::PartitionQuality(format!(
            "{:.3}% of the rule mass inside R_max = {} is not covered by any cell",
            100.0 * uncovered,
            cells.r_max
        )));
    }
    Ok(CellMasses {
        masses: buckets.iter().map(|b| crate::numerics::pairwise_sum(b)).collect(),
        owners,
        uncovered_fraction: uncovered,
    })
}

/// Violations of the sandwich `E_{r/2}(a_m) ⊆ E_m ⊆ E_r(a_m)` and of
/// disjointness at probe points.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartitionCheck {
    pub probes: usize,
    pub uncovered: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    pub multi_claims: usize,
}

pub fn check_partition(set: &SeparatedSet, cells: &CellPartition, probes: &[f64]) -> PartitionCheck {
    let n = set.n;
    let mut out = PartitionCheck::default();
    for x in probes.chunks_exact(n) {
        out.probes += 1;
        let claims = cells.claim_count(x);
        if claims > 1 {
            out.multi_claims += 1;
        }
        match cells.owner(x) {
            None => out.uncovered += 1,
            Some(m) => {
                let p2 = rho_sq_raw(x, set.point(m));
                if p2 >= set.r * set.r {
                    out.upper_violations += 1;
                }
            }
        }
        for m in 0..set.len() {
            if rho_sq_raw(x, set.point(m)) < 0.25 * set.r * set.r && cells.owner(x) != Some(m) {
                out.lower_violations += 1;
            }
        }
    }
    out
}

/// `τ(𝔹_t) = n∫₀ᵗ ρ^{n−1}(1−ρ²)^{−n} dρ`.
pub fn tau_ball_volume(n: usize, t: f64) -> f64 {
    let (x, w) = gauss_legendre(128, 0.0, t);
    let nf = n as f64;
    let terms: Vec<f64> = x.iter().zip(&w).map(|(r, w)| w * nf * r.powi(n as i32 - 1) * one_minus_norm_sq(&[*r]).powf(-nf)).collect();
    crate::numerics::pairwise_sum(&terms)
}

#[derive(Clone, Debug)]
pub struct OverlapReport {
    pub max_count: usize,
    pub bound: f64,
}

impl OverlapReport {
    pub fn within_bound(&self) -> bool {
        self.max_count as f64 <= self.bound
    }
}

/// Largest number of balls `E_δ(a_m)` containing a probe, against
/// `τ(𝔹_s)/τ(𝔹_{r/2})` with `s = (δ + r/2)/(1 + δr/2)`.
pub fn overlap_count(set: &SeparatedSet, delta: f64, probes: &[f64]) -> Result<OverlapReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0,1), got {delta}")));
    }
    let index = set.index();
    let mut max_count = 0;
    for x in probes.chunks_exact(set.n) {
        let mut c = 0;
        index.for_each_within(x, delta, |_, _| c += 1);
        max_count = max_count.max(c);
    }
    let h = 0.5 * set.r;
    let s = (delta + h) / (1.0 + delta * h);
    Ok(OverlapReport { max_count, bound: tau_ball_volume(set.n, s) / tau_ball_volume(set.n, h) })
}

/// Lattices for each truncation radius of a sweep, sharing one stream.
pub fn lattice_sweep(n: usize, r: f64, radii: &[f64], seed: u64) -> Result<Vec<SeparatedSet>> {
    let r_ref = radii.iter().cloned().fold(STREAM_REF_RADIUS, f64::max);
    radii
        .iter()
        .map(|&rm| {
            let mut stream = CandidateStream::new(n, seed, r_ref)?;
            greedy_lattice(n, r, rm, seed, &mut stream, GreedyOptions::default())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Growth {
    Bounded,
    Divergent,
}

impl Growth {
    pub fn name(self) -> &'static str {
        match self {
            Growth::Bounded => "bounded",
            Growth::Divergent => "divergent",
        }
    }
}

#[derive(Clone, Debug)]
pub struct GammaReport {
    pub gamma: f64,
    pub radii: Vec<f64>,
    /// `Σ (1−|a_m|²)^γ` of the lattice regenerated at each radius.
    pub sums: Vec<f64>,
    pub counts: Vec<usize>,
    /// The same sums over `|a_m| ≤ R` within the largest lattice.
    pub nested_sums: Vec<f64>,
    pub nested_counts: Vec<usize>,
    /// Radii of the three nested sums used for the diagnosis.
    pub diagnosis_radii: Vec<f64>,
    /// Fitted tail exponent `e` of the sum increments, when identifiable.
    pub exponent: Option<f64>,
    pub diagnosis: Growth,
}

/// `∫_{u_lo}^{u_hi} (1−u)^{n/2−1} u^{e−1} du`, the model increment of a sum
/// whose terms behave like `u^{e}` per unit of `log u`.
fn increment_model(n: usize, e: f64, u_lo: f64, u_hi: f64) -> f64 {
    let (x, w) = gauss_legendre(48, u_lo.ln(), u_hi.ln());
    let h = 0.5 * n as f64 - 1.0;
    x.iter()
        .zip(&w)
        .map(|(l, w)| {
            let u = l.exp();
            w * (1.0 - u).powf(h) * u.powf(e)
        })
        .sum()
}

/// Tail exponent from three partial sums and point counts at increasing radii.
fn tail_exponent(n: usize, radii: &[f64], sums: &[f64], counts: &[usize]) -> Option<f64> {
    let u: Vec<f64> = radii.iter().map(|r| one_minus_norm_sq(&[*r])).collect();
    let (d1, d2) = (sums[1] - sums[0], sums[2] - sums[1]);
    let (c1, c2) = (counts[1] as f64 - counts[0] as f64, counts[2] as f64 - counts[1] as f64);
    if d1 <= 0.0 || d2 <= 0.0 || c1 <= 0.0 || c2 <= 0.0 {
        return None;
    }
    let observed = (d2 / d1).ln() - (c2 / c1).ln();
    let ratio = |e: f64| (increment_model(n, e, u[2], u[1]) / increment_model(n, e, u[1], u[0])).ln();
    let base = ratio(1.0 - n as f64);
    let g = |e: f64| ratio(e) - base - observed;
    let (mut lo, mut hi) = (-8.0, 12.0);
    if g(lo) < 0.0 {
        return Some(lo);
    }
    if g(hi) > 0.0 {
        return Some(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Partial sums `Σ (1−|a_m|²)^γ` over a sweep of regenerated lattices and a
/// growth diagnosis.
///
/// Within the largest lattice, the increments of the sum between the last
/// three radii (the outermost pulled in by `ρ = r/2`) are compared with those of the point count (`γ = 0`, tail
/// exponent `1 − n`) to estimate the exponent `e` of the boundary tail
/// `∫ u^{e−1} du`. The sum diverges as the truncation is lifted iff `e ≤ 0`,
/// flagged when the estimate is at most [`DIVERGENCE_EXPONENT`].
pub fn gamma_sum(sets: &[SeparatedSet], gamma: f64) -> Result<GammaReport> {
    if sets.is_empty() {
        return Err(Error::invalid("gamma sum needs at least one lattice"));
    }
    if sets.windows(2).any(|w| w[1].r_max <= w[0].r_max) {
        return Err(Error::invalid("sweep radii must increase"));
    }
    let n = sets[0].n;
    let term = |u: f64| u.powf(gamma);
    let radii: Vec<f64> = sets.iter().map(|s| s.r_max).collect();
    let sums: Vec<f64> = sets
        .iter()
        .map(|s| crate::numerics::pairwise_sum(&s.defects().into_iter().map(term).collect::<Vec<_>>()))
        .collect();
    let counts: Vec<usize> = sets.iter().map(|s| s.len()).collect();
    let last = &sets[sets.len() - 1];
    let k = radii.len();
    let mut diagnosis_radii = radii[k.saturating_sub(3)..].to_vec();
    if k >= 3 {
        // the outermost layer of a truncated lattice is packed against R_max
        let h = 0.5 * last.r;
        let top = (last.r_max - h) / (1.0 - last.r_max * h);
        if top > diagnosis_radii[1] {
            diagnosis_radii[2] = top;
        }
    }
    let norms: Vec<f64> = (0..last.len()).map(|i| dot(last.point(i), last.point(i)).sqrt()).collect();
    let nested = |rm: f64| -> (f64, usize) {
        let terms: Vec<f64> =
            (0..last.len()).filter(|&i| norms[i] <= rm).map(|i| term(one_minus_norm_sq(last.point(i)))).collect();
        (crate::numerics::pairwise_sum(&terms), terms.len())
    };
    let (nested_sums, nested_counts): (Vec<f64>, Vec<usize>) = diagnosis_radii.iter().map(|&rm| nested(rm)).unzip();
    let mut report = GammaReport {
        gamma,
        radii,
        sums,
        counts,
        nested_sums,
        nested_counts,
        diagnosis_radii,
        exponent: None,
        diagnosis: Growth::Bounded,
    };
    if k < 3 || last.len() <= 1 {
        return Ok(report);
    }
    let s = &report.nested_sums;
    if s[0] > 0.0 && s[2] / s[0] < FLAT_GROWTH {
        return Ok(report);
    }
    report.exponent = tail_exponent(n, &report.diagnosis_radii, s, &report.nested_counts);
    report.diagnosis = match report.exponent {
        Some(e) if e <= DIVERGENCE_EXPONENT => Growth::Divergent,
        Some(_) => Growth::Bounded,
        None => Growth::Divergent,
    };
    Ok(report)
}
