use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use bergman_core::atomic::{decompose, norm_rule, DecomposeOptions};
use bergman_core::geom_suite::{identity_suite, inequality_suite, Primitives, INEQ_SLACK};
use bergman_core::inclusion::{default_grid, probe_radii, run_grid};
use bergman_core::interpolation::{kernel_constant, schur_verify, solve_interpolation};
use bergman_core::io::{
    cache_dir, cached_lattice, coefficient_frame, file_digest, lattice_frame, lattice_from_frame, read_manifest,
    sha256_hex, BackendChoice, CacheFrame, RunConfig, RunManifest,
};
use bergman_core::kernels::{
    kernel_samples, symmetry_defect, verify_diagonal, verify_int_power, verify_kernel_upper, KernelBackend, KernelKind,
    PowerKernel, ZonalHarmonicKernel,
};
use bergman_core::lattice::{
    build_cells, cell_masses, lattice_sweep, uniform_probes, verify_covering, verify_separation, SeparatedSet,
};
use bergman_core::operators::{CoefSeq, FieldFunction, Polynomial};
use bergman_core::quadrature::{boundary_sweep, verify_i_j, BallRule};
use bergman_core::{reports, Error};

#[derive(Parser)]
#[command(name = "bergman-lab", version, about = "Numerical experiments on weighted Bergman spaces of the real unit ball")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Radial quadrature order.
    #[arg(long = "quad-order", global = true)]
    quad_order: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Allow configurations outside the exact regime (reports only).
    #[arg(long, global = true)]
    experimental: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Geometry identity and inequality suites.
    GeomCheck {
        #[arg(long, default_value_t = 10_000)]
        count: usize,
    },
    Lattice {
        #[command(subcommand)]
        action: LatticeCmd,
    },
    Estimate {
        #[command(subcommand)]
        kind: EstimateCmd,
    },
    /// Atomic decomposition of the configured function.
    Decompose {
        #[arg(long)]
        function: Option<String>,
    },
    /// Interpolation of the configured data on the lattice.
    Interpolate {
        #[arg(long)]
        lambda: Option<String>,
    },
    /// Inclusion verdicts against numerical probes.
    Inclusion {
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
    /// Schur-test bound of the interpolation operator.
    Schur,
    /// Re-checks the manifest and file digests in the output directory.
    Report,
}

#[derive(Subcommand)]
enum LatticeCmd {
    Gen,
    Verify {
        /// Lattice file; defaults to `lattice.bin` in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        probes: usize,
    },
}

#[derive(Subcommand)]
enum EstimateCmd {
    KernelBounds,
    Diagonal,
    IntPower,
    #[command(name = "i-j")]
    IJ {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        c: f64,
    },
}

const DIAG_EXACT_TOL: f64 = 1e-9;
const SLOPE_TOL: f64 = 0.05;
const ZONAL_SLOPE_TOL: f64 = 0.1;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Resolution(_) | Error::NonFinite { .. } => 4,
        Error::NonContractive { .. } | Error::Inconsistency(_) | Error::PartitionQuality(_) => 2,
        _ => 3,
    }
}

fn load_config(cli: &Cli) -> bergman_core::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("{}: {io}", p.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(q) = cli.quad_order {
        cfg.radial_order = Some(q);
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.display().to_string();
    }
    if let Cmd::Decompose { function: Some(f) } = &cli.cmd {
        cfg.function = f.clone();
    }
    if let Cmd::Interpolate { lambda: Some(l) } = &cli.cmd {
        cfg.lambda = l.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn backend(cfg: &RunConfig) -> bergman_core::Result<Box<dyn KernelBackend>> {
    Ok(match cfg.backend {
        BackendChoice::Zonal => {
            if cfg.n != 2 {
                return Err(Error::Config(format!("the zonal backend needs n = 2, got n = {}", cfg.n)));
            }
            Box::new(ZonalHarmonicKernel::new(cfg.s, cfg.k_trunc)?)
        }
        BackendChoice::Power => Box::new(PowerKernel::new(cfg.s, cfg.n)?),
    })
}

fn lattice(cfg: &RunConfig, m: &mut RunManifest) -> bergman_core::Result<SeparatedSet> {
    let dir = cache_dir();
    std::fs::create_dir_all(&dir)?;
    let (set, digest) = cached_lattice(&dir, cfg.n, cfg.r, cfg.r_max, cfg.seed)?;
    m.caches.insert("lattice".into(), digest);
    log::info!("lattice: {} points, r = {}, R_max = {}", set.len(), cfg.r, cfg.r_max);
    Ok(set)
}

fn parse_lambda(text: &str, len: usize) -> bergman_core::Result<Vec<f64>> {
    let bad = |msg: String| Error::Config(format!("lambda `{text}`: {msg}"));
    if let Some(k) = text.strip_prefix("unit:") {
        let k: usize = k.trim().parse().map_err(|_| bad("index is not an integer".into()))?;
        if k >= len {
            return Err(bad(format!("index {k} outside a lattice of {len} points")));
        }
        let mut v = vec![0.0; len];
        v[k] = 1.0;
        return Ok(v);
    }
    if text.trim() == "ones" {
        return Ok(vec![1.0; len]);
    }
    let v = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| bad(e.to_string()))?;
    if v.len() != len {
        return Err(bad(format!("{} values for a lattice of {len} points", v.len())));
    }
    Ok(v)
}

fn run(cli: &Cli) -> bergman_core::Result<bool> {
    let start = Instant::now();
    let cfg = load_config(cli)?;
    let out = PathBuf::from(&cfg.out_dir);
    if let Cmd::Report = cli.cmd {
        return report(&out);
    }
    std::fs::create_dir_all(&out)?;
    let name = match &cli.cmd {
        Cmd::GeomCheck { .. } => "geom-check",
        Cmd::Lattice { action: LatticeCmd::Gen } => "lattice gen",
        Cmd::Lattice { action: LatticeCmd::Verify { .. } } => "lattice verify",
        Cmd::Estimate { kind: EstimateCmd::KernelBounds } => "estimate kernel-bounds",
        Cmd::Estimate { kind: EstimateCmd::Diagonal } => "estimate diagonal",
        Cmd::Estimate { kind: EstimateCmd::IntPower } => "estimate int-power",
        Cmd::Estimate { kind: EstimateCmd::IJ { .. } } => "estimate i-j",
        Cmd::Decompose { .. } => "decompose",
        Cmd::Interpolate { .. } => "interpolate",
        Cmd::Inclusion { .. } => "inclusion",
        Cmd::Schur => "schur",
        Cmd::Report => unreachable!(),
    };
    let mut m = RunManifest::new(name, &cfg);
    match &cli.cmd {
        Cmd::GeomCheck { count } => {
            let prims = Primitives::default();
            let mut rows = Vec::new();
            for r in identity_suite(&prims, cfg.n, *count, cfg.seed)
                .into_iter()
                .chain(inequality_suite(&prims, cfg.n, *count, cfg.seed + 1, INEQ_SLACK))
            {
                println!("{:<44} max {:.3e}  violations {}", r.name, r.max_violation, r.violations);
                m.check(&r.name.replace(' ', "_"), r.passed());
                rows.push((cfg.n, r));
            }
            m.emit(&out, "geom_check.csv", &reports::checks_csv(&rows).to_bytes()?)?;
        }
        Cmd::Lattice { action: LatticeCmd::Gen } => {
            let set = lattice(&cfg, &mut m)?;
            let bytes = lattice_frame(&set).encode();
            m.emit(&out, "lattice.bin", &bytes)?;
            m.emit(&out, "lattice.csv", &reports::lattice_csv(&set).to_bytes()?)?;
            let sep = verify_separation(&set);
            m.check("separation", sep >= set.r);
            println!("points {}\nseparation {sep:.6}\ndigest {}", set.len(), sha256_hex(&bytes));
        }
        Cmd::Lattice { action: LatticeCmd::Verify { input, probes } } => {
            let path = input.clone().unwrap_or_else(|| out.join("lattice.bin"));
            let frame = CacheFrame::read(&path)?;
            let set = lattice_from_frame(&frame)?;
            let digest = file_digest(&path)?;
            m.caches.insert("input".into(), digest.clone());
            let sep = verify_separation(&set);
            let pts = uniform_probes(set.n, set.r_max, *probes, cfg.seed);
            let cover = verify_covering(&set, &pts);
            m.check("separation", sep >= set.r);
            m.check("covering", cover == 1.0);
            println!("points {}\nseparation {sep:.6}\ncovering {cover}\ndigest {digest}", set.len());
        }
        Cmd::Estimate { kind } => {
            let k = backend(&cfg)?;
            let exact = k.kind() == KernelKind::Power;
            match kind {
                EstimateCmd::KernelBounds => {
                    let strata = [0.5, 0.9, 0.99];
                    let samples = kernel_samples(cfg.n, &strata, 200, 0.999, cfg.seed);
                    let rep = verify_kernel_upper(k.as_ref(), &samples);
                    let sym = symmetry_defect(k.as_ref(), &samples);
                    println!("c_emp {:.6e}\nc_grad {:.6e}\nsymmetry {sym:.3e}", rep.c_emp, rep.c_grad);
                    m.check("finite_constants", rep.c_emp.is_finite() && rep.c_grad.is_finite() && rep.c_emp > 0.0);
                    m.check("symmetry", sym <= 1e-8);
                    m.emit(&out, "kernel_bounds.csv", &reports::upper_csv(&rep, &strata).to_bytes()?)?;
                }
                EstimateCmd::Diagonal => {
                    let rep = verify_diagonal(k.as_ref(), &boundary_sweep(0.5, 0.99, 8))?;
                    let (slope, tol) = if exact { (rep.slope, DIAG_EXACT_TOL) } else { (rep.asymptotic_slope, ZONAL_SLOPE_TOL) };
                    println!("slope {slope:.6}\nexpected {}", rep.expected);
                    m.check("diagonal_slope", (slope - rep.expected).abs() <= tol);
                    m.emit(&out, "diagonal.csv", &reports::diagonal_csv(&rep).to_bytes()?)?;
                }
                EstimateCmd::IntPower => {
                    let rep = verify_int_power(k.as_ref(), cfg.p, cfg.alpha, &boundary_sweep(0.9, 0.995, 6), cfg.quad_spec())?;
                    println!("slope {:.6}\npredicted {:.6}", rep.slope, rep.predicted);
                    m.check("int_power_slope", (rep.slope - rep.predicted).abs() <= SLOPE_TOL);
                    m.emit(&out, "int_power.csv", &reports::int_power_csv(&rep).to_bytes()?)?;
                }
                EstimateCmd::IJ { b, c } => {
                    let rep = verify_i_j(cfg.n, *b, *c, &boundary_sweep(0.9, 0.995, 10), cfg.quad_spec())?;
                    println!(
                        "regime {}\nslope_i {:.6}\nslope_j {:.6}\nratio_i {:.4}\nratio_j {:.4}",
                        rep.regime.name(),
                        rep.fit_i.slope,
                        rep.fit_j.slope,
                        rep.fit_i.envelope_ratio,
                        rep.fit_j.envelope_ratio
                    );
                    m.check("envelope", rep.passes());
                    m.emit(&out, "i_j.csv", &reports::ij_csv(&rep).to_bytes()?)?;
                }
            }
        }
        Cmd::Decompose { .. } => {
            let k = backend(&cfg)?;
            let sp = cfg.space();
            let spec = cfg.quad_spec();
            let set = lattice(&cfg, &mut m)?;
            let srule = BallRule::new(cfg.n, sp.s, spec)?.flatten();
            let cm = cell_masses(&build_cells(&set)?, &srule)?;
            let rule = norm_rule(cfg.n, cfg.alpha, spec)?;
            let f = FieldFunction::Polynomial(Polynomial::parse(cfg.n, &cfg.function)?);
            let opts = DecomposeOptions {
                tol: cfg.tol,
                max_iter: cfg.max_iter,
                region: None,
                probe_radius: cfg.probe_radius,
                experimental: cli.experimental,
            };
            let rep = decompose(&f, &set, &cm.masses, &sp, k.as_ref(), &rule, &opts)?;
            println!(
                "iterations {}\nconverged {}\nmean_ratio {:.6}\nreconstruction_error {:.3e}\nnorm_ratio {:.6}",
                rep.iterations,
                rep.converged,
                rep.mean_ratio(),
                rep.reconstruction_error,
                rep.norm_ratio()
            );
            m.emit(&out, "decomposition.csv", &reports::decomposition_csv(&rep).to_bytes()?)?;
            m.emit(&out, "coefficients.csv", &reports::coefficients_csv(&rep).to_bytes()?)?;
            m.emit(&out, "coefficients.bin", &coefficient_frame(&rep.lambda.values, cfg.n, cfg.seed).encode())?;
            if cli.experimental && k.kind() != KernelKind::ZonalHarmonic {
                log::warn!("experimental run: no checks recorded");
            } else {
                m.check("converged", rep.converged);
                m.check("reconstruction", rep.reconstruction_error <= 10.0 * cfg.tol * rep.f_norm.max(1.0));
            }
        }
        Cmd::Interpolate { .. } => {
            let k = backend(&cfg)?;
            let sp = cfg.space();
            let set = lattice(&cfg, &mut m)?;
            let lam = CoefSeq::new(parse_lambda(&cfg.lambda, set.len())?, sp.p);
            let (_, rep) = solve_interpolation(&lam, &set, &sp, k.as_ref(), cfg.tol, cfg.max_iter)?;
            println!(
                "points {}\niterations {}\nconverged {}\noperator_estimate {:.6}\nmax_residual {:.3e}",
                set.len(),
                rep.iterations,
                rep.converged,
                rep.operator_estimate,
                rep.max_residual
            );
            m.emit(&out, "interpolation.csv", &reports::interpolation_csv(&rep).to_bytes()?)?;
            m.check("converged", rep.converged);
            m.check("residual", rep.max_residual <= 10.0 * cfg.tol * lam.sup());
        }
        Cmd::Inclusion { count } => {
            let sweep = lattice_sweep(cfg.n, 0.3, &[0.9, 0.95, 0.99], cfg.seed)?;
            let rows = run_grid(&default_grid(cfg.n, *count), &sweep, &probe_radii(8), cfg.quad_spec())?;
            let good = rows.iter().filter(|r| r.consistent()).count();
            println!("consistent {good}/{}", rows.len());
            m.check("consistency", good == rows.len());
            m.emit(&out, "inclusion.csv", &reports::inclusion_csv(&rows).to_bytes()?)?;
        }
        Cmd::Schur => {
            let k = backend(&cfg)?;
            let sp = cfg.space();
            let set = lattice(&cfg, &mut m)?;
            let rep = schur_verify(&set, &sp)?;
            let kc = kernel_constant(&set, &sp, k.as_ref());
            let bound = rep.operator_bound(kc);
            println!(
                "path {}\nC1 {:.6}\nC2 {:.6}\nkernel_constant {kc:.6}\noperator_bound {bound:.6}",
                rep.path.name(),
                rep.c1,
                rep.c2
            );
            m.check("operator_bound_below_one", bound < 1.0);
            m.emit(&out, "schur.csv", &reports::schur_csv(&rep).to_bytes()?)?;
        }
        Cmd::Report => unreachable!(),
    }
    m.wall_clock_s = start.elapsed().as_secs_f64();
    m.write(&out)?;
    for (k, ok) in &m.checks {
        println!("check {k}: {}", if *ok { "pass" } else { "fail" });
    }
    Ok(m.all_passed())
}

fn report(out: &Path) -> bergman_core::Result<bool> {
    let entries = read_manifest(&out.join("manifest.txt"))?;
    let mut ok = true;
    for (k, v) in &entries {
        if let Some(file) = k.strip_prefix("file.") {
            let actual = file_digest(&out.join(file))?;
            let same = &actual == v;
            ok &= same;
            println!("{file}: {}", if same { "digest ok" } else { "digest MISMATCH" });
        } else if let Some(check) = k.strip_prefix("check.") {
            ok &= v == "pass";
            println!("check {check}: {v}");
        } else {
            println!("{k} = {v}");
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
