//! Run configuration, CSV tables, binary caches and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{build_lattice, SeparatedSet};
use crate::operators::SpaceParams;
use crate::quadrature::{BallRule, FlatRule, QuadSpec};

pub const CACHE_ENV: &str = "BERGMAN_LAB_CACHE";
pub const CACHE_MAGIC: &[u8; 4] = b"BLAB";
pub const CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8 + 8 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Zonal,
    Power,
}

/// Flat run configuration. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n: usize,
    pub p: f64,
    pub alpha: f64,
    pub s: f64,
    pub r: f64,
    pub r_max: f64,
    pub seed: u64,
    pub radial_order: Option<usize>,
    pub sphere_order: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub backend: BackendChoice,
    pub k_trunc: usize,
    pub probe_radius: f64,
    /// Polynomial in `x1..xn` for `decompose`.
    pub function: String,
    /// Data for `interpolate`: `unit:K`, `ones`, or comma-separated values.
    pub lambda: String,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 2,
            p: 2.0,
            alpha: 0.0,
            s: 1.0,
            r: 0.1,
            r_max: 0.9,
            seed: 1,
            radial_order: None,
            sphere_order: None,
            tol: 1e-6,
            max_iter: 200,
            backend: BackendChoice::Zonal,
            k_trunc: crate::kernels::DEFAULT_K_TRUNC,
            probe_radius: 0.8,
            function: "x1".into(),
            lambda: "unit:0".into(),
            out_dir: "out".into(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Re-checks every parameter against the module preconditions.
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        SpaceParams::new(self.p, self.alpha, self.s, self.n).map_err(wrap)?;
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::Config(format!("separation r must lie in (0, 1), got {}", self.r)));
        }
        if !(self.r_max > 0.0 && self.r_max < 1.0) {
            return Err(Error::Config(format!("truncation radius r_max must lie in (0, 1), got {}", self.r_max)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tol must be positive and max_iter at least 1".into()));
        }
        if !(self.probe_radius > 0.0 && self.probe_radius < 1.0) {
            return Err(Error::Config(format!("probe_radius must lie in (0, 1), got {}", self.probe_radius)));
        }
        if self.k_trunc < 2 {
            return Err(Error::Config(format!("k_trunc must be at least 2, got {}", self.k_trunc)));
        }
        if matches!(self.radial_order, Some(0)) || matches!(self.sphere_order, Some(0)) {
            return Err(Error::Config("quadrature orders must be positive".into()));
        }
        crate::operators::Polynomial::parse(self.n, &self.function).map_err(wrap)?;
        Ok(())
    }

    pub fn space(&self) -> SpaceParams {
        SpaceParams::new(self.p, self.alpha, self.s, self.n).expect("validated")
    }

    pub fn quad_spec(&self) -> QuadSpec {
        let d = QuadSpec::default_for(self.n);
        QuadSpec {
            radial_order: self.radial_order.unwrap_or(d.radial_order),
            sphere_order: self.sphere_order.unwrap_or(d.sphere_order),
        }
    }

    /// `key = value` lines in field order.
    pub fn snapshot(&self) -> Vec<(String, String)> {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut out = Vec::new();
        if let toml::Value::Table(t) = value {
            for (k, v) in t {
                out.push((k, v.to_string()));
            }
        }
        out
    }
}

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Row-oriented CSV table with a mandatory header.
#[derive(Clone, Debug, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| Error::Format(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        let header = r.headers().map_err(|e| Error::Format(e.to_string()))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(|e| Error::Format(e.to_string()))?.iter().map(String::from).collect());
        }
        Ok(CsvTable { header, rows })
    }
}

/// Writes through a temporary sibling and renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheKind {
    Lattice = 1,
    Rule = 2,
    Coefficients = 3,
}

impl CacheKind {
    fn from_u32(v: u32) -> Result<Self> {
        match v {
            1 => Ok(CacheKind::Lattice),
            2 => Ok(CacheKind::Rule),
            3 => Ok(CacheKind::Coefficients),
            _ => Err(Error::Format(format!("unknown cache kind {v}"))),
        }
    }
}

/// Versioned binary record: header, then little-endian `f64` rows of `width`
/// values.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheFrame {
    pub kind: CacheKind,
    pub n: u32,
    /// `r` for lattices, `α` for rules.
    pub param_a: f64,
    /// `R_max` for lattices; for rules the radial and spherical orders packed
    /// as `radial · 2³² + sphere`.
    pub param_b: f64,
    pub seed: u64,
    pub count: u64,
    pub data: Vec<f64>,
}

impl CacheFrame {
    fn width(&self) -> usize {
        match self.kind {
            CacheKind::Lattice => self.n as usize,
            CacheKind::Rule => self.n as usize + 1,
            CacheKind::Coefficients => 1,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind as u32).to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.param_a.to_le_bytes());
        out.extend_from_slice(&self.param_b.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("cache file of {} bytes is shorter than its header", bytes.len())));
        }
        if &bytes[..4] != CACHE_MAGIC {
            return Err(Error::Format("not a cache file (bad magic)".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != CACHE_VERSION {
            return Err(Error::Format(format!("cache format version {version}, expected {CACHE_VERSION}")));
        }
        let mut frame = CacheFrame {
            kind: CacheKind::from_u32(u32_at(8))?,
            n: u32_at(12),
            param_a: f64_at(16),
            param_b: f64_at(24),
            seed: u64_at(32),
            count: u64_at(40),
            data: Vec::new(),
        };
        let width = frame.width();
        let expected = frame.count as usize * width * 8;
        let body = &bytes[HEADER_LEN..];
        if body.len() != expected {
            return Err(Error::Format(format!(
                "cache body holds {} bytes, header announces {} rows of {} values ({} bytes)",
                body.len(),
                frame.count,
                width,
                expected
            )));
        }
        frame.data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(frame)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

pub fn lattice_frame(set: &SeparatedSet) -> CacheFrame {
    CacheFrame {
        kind: CacheKind::Lattice,
        n: set.n as u32,
        param_a: set.r,
        param_b: set.r_max,
        seed: set.seed,
        count: set.len() as u64,
        data: set.points.clone(),
    }
}

/// Rebuilds a set from a frame, re-checking separation and truncation.
pub fn lattice_from_frame(frame: &CacheFrame) -> Result<SeparatedSet> {
    if frame.kind != CacheKind::Lattice {
        return Err(Error::Format("cache file does not hold a lattice".into()));
    }
    let mut set = SeparatedSet::from_points(frame.n as usize, frame.param_a, frame.param_b, frame.data.clone())?;
    set.seed = frame.seed;
    Ok(set)
}

pub fn rule_frame(rule: &FlatRule, alpha: f64, spec: QuadSpec) -> CacheFrame {
    let n = rule.n;
    let mut data = Vec::with_capacity(rule.len() * (n + 1));
    for i in 0..rule.len() {
        data.extend_from_slice(rule.point(i));
        data.push(rule.weights[i]);
    }
    CacheFrame {
        kind: CacheKind::Rule,
        n: n as u32,
        param_a: alpha,
        param_b: (spec.radial_order as u64 * (1u64 << 32) + spec.sphere_order as u64) as f64,
        seed: 0,
        count: rule.len() as u64,
        data,
    }
}

pub fn rule_from_frame(frame: &CacheFrame) -> Result<FlatRule> {
    if frame.kind != CacheKind::Rule {
        return Err(Error::Format("cache file does not hold a quadrature rule".into()));
    }
    let n = frame.n as usize;
    let mut points = Vec::with_capacity(frame.count as usize * n);
    let mut weights = Vec::with_capacity(frame.count as usize);
    for row in frame.data.chunks_exact(n + 1) {
        points.extend_from_slice(&row[..n]);
        weights.push(row[n]);
    }
    Ok(FlatRule { n, points, weights })
}

pub fn coefficient_frame(values: &[f64], n: usize, seed: u64) -> CacheFrame {
    CacheFrame {
        kind: CacheKind::Coefficients,
        n: n as u32,
        param_a: 0.0,
        param_b: 0.0,
        seed,
        count: values.len() as u64,
        data: values.to_vec(),
    }
}

/// Cache directory: `$BERGMAN_LAB_CACHE`, else `bergman-lab` under the system
/// temporary directory.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("bergman-lab"))
}

/// Cache lookup keyed by every parameter; also returns the file digest.
pub fn cached_lattice(dir: &Path, n: usize, r: f64, r_max: f64, seed: u64) -> Result<(SeparatedSet, String)> {
    let name = format!("lattice-n{n}-r{:016x}-R{:016x}-s{seed}.bin", r.to_bits(), r_max.to_bits());
    let path = dir.join(name);
    if path.exists() {
        if let Ok(set) = CacheFrame::read(&path).and_then(|f| lattice_from_frame(&f)) {
            return Ok((set, file_digest(&path)?));
        }
        log::warn!("discarding unreadable cache file {}", path.display());
    }
    let set = build_lattice(n, r, r_max, seed)?;
    let frame = lattice_frame(&set);
    frame.write(&path)?;
    Ok((set, sha256_hex(&frame.encode())))
}

pub fn cached_rule(dir: &Path, n: usize, alpha: f64, spec: QuadSpec) -> Result<(FlatRule, String)> {
    let name = format!("rule-n{n}-a{:016x}-{}x{}.bin", alpha.to_bits(), spec.radial_order, spec.sphere_order);
    let path = dir.join(name);
    if path.exists() {
        if let Ok(rule) = CacheFrame::read(&path).and_then(|f| rule_from_frame(&f)) {
            return Ok((rule, file_digest(&path)?));
        }
        log::warn!("discarding unreadable cache file {}", path.display());
    }
    let rule = BallRule::new(n, alpha, spec)?.flatten();
    let frame = rule_frame(&rule, alpha, spec);
    frame.write(&path)?;
    Ok((rule, sha256_hex(&frame.encode())))
}

/// Flat key-value record of a run.
#[derive(Clone, Debug, Default)]
pub struct RunManifest {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub condition_holds: bool,
    pub caches: BTreeMap<String, String>,
    pub files: BTreeMap<String, String>,
    pub checks: Vec<(String, bool)>,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        RunManifest {
            command: command.into(),
            config: cfg.snapshot(),
            condition_holds: cfg.space().condition_holds(),
            ..Default::default()
        }
    }

    pub fn check(&mut self, name: &str, ok: bool) {
        self.checks.push((name.into(), ok));
    }

    /// Writes `bytes` under `dir` and records its digest.
    pub fn emit(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.insert(name.into(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("command = {}\n", self.command));
        s.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("wall_clock_s = {:.3}\n", self.wall_clock_s));
        s.push_str(&format!("condition_holds = {}\n", self.condition_holds));
        for (k, v) in &self.config {
            s.push_str(&format!("config.{k} = {v}\n"));
        }
        for (k, v) in &self.caches {
            s.push_str(&format!("cache.{k} = {v}\n"));
        }
        for (k, v) in &self.files {
            s.push_str(&format!("file.{k} = {v}\n"));
        }
        for (k, ok) in &self.checks {
            s.push_str(&format!("check.{k} = {}\n", if *ok { "pass" } else { "fail" }));
        }
        s
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("manifest.txt"), self.render().as_bytes())
    }
}

/// Parses `key = value` lines of a manifest.
pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::Format(format!("manifest line {} is not `key = value`", i + 1)))?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("n = 2\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn preconditions_are_rechecked() {
        assert!(RunConfig::parse("alpha = -1.5\n").is_err());
        assert!(RunConfig::parse("r = 1.2\n").is_err());
        assert!(RunConfig::parse("function = \"x3\"\n").is_err());
        let cfg = RunConfig::parse("n = 3\nfunction = \"x3\"\nbackend = \"power\"\n").unwrap();
        assert_eq!(cfg.backend, BackendChoice::Power);
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert_eq!(s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count(), 17);
        }
    }

    #[test]
    fn frame_round_trip_and_truncation() {
        let set = SeparatedSet::from_points(2, 0.5, 0.9, vec![0.1, 0.2, -0.6, 0.3]).unwrap();
        let bytes = lattice_frame(&set).encode();
        let back = lattice_from_frame(&CacheFrame::decode(&bytes).unwrap()).unwrap();
        assert_eq!(back.points, set.points);
        assert!(matches!(CacheFrame::decode(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(CacheFrame::decode(&bytes[..10]), Err(Error::Format(_))));
    }

    #[test]
    fn rule_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = QuadSpec { radial_order: 8, sphere_order: 16 };
        let (a, da) = cached_rule(dir.path(), 2, 0.5, spec).unwrap();
        let (b, db) = cached_rule(dir.path(), 2, 0.5, spec).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.weights, b.weights);
        assert_eq!(da, db);
    }

    #[test]
    fn manifest_lists_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("test", &RunConfig::default());
        m.emit(dir.path(), "a.csv", b"x\n1\n").unwrap();
        m.check("ok", true);
        m.write(dir.path()).unwrap();
        let kv = read_manifest(&dir.path().join("manifest.txt")).unwrap();
        assert_eq!(kv["file.a.csv"], sha256_hex(b"x\n1\n"));
        assert_eq!(kv["check.ok"], "pass");
        assert_eq!(kv["config.n"], "2");
    }
}
