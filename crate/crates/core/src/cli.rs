//! Command-line driver: phantom generation, forward projection, inversion,
//! round trips, and a numerical self-test, with JSON configuration, a fixed
//! binary format for tensor grids, and plot-ready CSV exports.

use crate::attenuation::{
    alpha_closed, conv_eg, h_closed_form, h_quadrature, AttenuationCoeffs, GSign, ModeSequence,
};
use crate::bukhgeim::{bukhgeim_cauchy, BoundarySequence};
use crate::elliptic::{solve_pd, EllipticProblem};
use crate::fields::{
    divergence, phantom_incompressible, phantom_tracefree, ComplexField, GridSpec, PhantomSpec,
    RealField, TensorClass, TensorField,
};
use crate::pipeline::{compare_fields, invert, ReconstructionConfig};
use crate::pompeiu::{solve_dbar_pompeiu, solve_d_pompeiu};
use crate::geometry::{boundary_point, classify, Direction, RayClass};
use crate::transform::{sample_sinogram, BoundaryData, Sinogram};
use crate::{Error, Result};
use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Magic prefix of the binary tensor-grid format.
pub const TENSOR_MAGIC: &[u8; 8] = b"TTGRID01";

/// Resolved run settings: command, file paths, reconstruction parameters,
/// and the seed for randomized self-tests.  All fields have defaults so a
/// configuration file may specify only what it overrides.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub phantom_spec: Option<PathBuf>,
    pub tensor_in: Option<PathBuf>,
    pub sinogram_in: Option<PathBuf>,
    pub output: PathBuf,
    pub threads: Option<usize>,
    pub mu: f64,
    pub grid_n: usize,
    pub n_modes: usize,
    pub n_beta: usize,
    pub n_phi: usize,
    pub class: TensorClass,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            phantom_spec: None,
            tensor_in: None,
            sinogram_in: None,
            output: PathBuf::from("out"),
            threads: None,
            mu: 1.0,
            grid_n: 257,
            n_modes: 32,
            n_beta: 512,
            n_phi: 256,
            class: TensorClass::Incompressible,
            seed: 7,
        }
    }
}

impl RunConfig {
    pub fn reconstruction(&self) -> Result<ReconstructionConfig> {
        ReconstructionConfig::new(
            self.class,
            self.mu,
            self.grid_n,
            self.n_modes,
            self.n_beta,
            self.n_phi,
        )
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "tensortom",
    about = "Exponential X-ray transform of planar symmetric 2-tensor fields: \
             forward projection and constructive inversion on the unit disk",
    version
)]
struct Cli {
    /// JSON run configuration; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker thread count; TENSORTOM_THREADS is the fallback, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Grid size n (odd, >= 33).
    #[arg(long = "grid-n", global = true)]
    grid_n: Option<usize>,
    /// Mode truncation N (>= 4).
    #[arg(long = "modes-N", global = true)]
    modes_n: Option<usize>,
    /// Attenuation constant (> 0 for inversion).
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// Tensor class: incompressible | tracefree.
    #[arg(long, global = true)]
    class: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Debug)]
enum Command {
    /// Rasterize a phantom description to a binary tensor grid.
    Phantom {
        /// PhantomSpec JSON; defaults to the built-in example of the class.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Project a tensor grid to a sinogram.
    Forward {
        /// Binary tensor-grid input.
        #[arg(long)]
        tensor: Option<PathBuf>,
    },
    /// Reconstruct a tensor grid from a sinogram.
    Invert {
        /// Sinogram CSV input (sidecar JSON expected next to it).
        #[arg(long)]
        sinogram: Option<PathBuf>,
    },
    /// Phantom, forward, inversion, and error report in one run.
    Roundtrip {
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Run the numerical oracle suite and print per-check residuals.
    Selftest {
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_class(s: &str) -> Result<TensorClass> {
    match s {
        "incompressible" => Ok(TensorClass::Incompressible),
        "tracefree" => Ok(TensorClass::Tracefree),
        other => Err(Error::Config(format!(
            "unknown tensor class {other:?}; expected incompressible or tracefree"
        ))),
    }
}

/// Map an error to the process exit code: 2 input, 3 configuration,
/// 4 numerical.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Json(_) | Error::Format(_) => 2,
        Error::Config(_) | Error::Mismatch(_) | Error::Contract(_) | Error::OutsideDisk(..) => 3,
        Error::NumericalCheck(_) | Error::Singular(_) => 4,
    }
}

/// Parse arguments and execute; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => serde_json::from_str::<RunConfig>(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(v) = cli.output {
        cfg.output = v;
    }
    if let Some(v) = cli.threads {
        cfg.threads = Some(v);
    }
    if let Some(v) = cli.grid_n {
        cfg.grid_n = v;
    }
    if let Some(v) = cli.modes_n {
        cfg.n_modes = v;
    }
    if let Some(v) = cli.mu {
        cfg.mu = v;
    }
    if let Some(v) = &cli.class {
        cfg.class = parse_class(v)?;
    }
    init_threads(cfg.threads);
    std::fs::create_dir_all(&cfg.output)?;
    match cli.command {
        Command::Phantom { spec } => {
            if let Some(p) = spec {
                cfg.phantom_spec = Some(p);
            }
            cmd_phantom(&cfg)
        }
        Command::Forward { tensor } => {
            if let Some(p) = tensor {
                cfg.tensor_in = Some(p);
            }
            cmd_forward(&cfg)
        }
        Command::Invert { sinogram } => {
            if let Some(p) = sinogram {
                cfg.sinogram_in = Some(p);
            }
            cmd_invert(&cfg)
        }
        Command::Roundtrip { spec } => {
            if let Some(p) = spec {
                cfg.phantom_spec = Some(p);
            }
            cmd_roundtrip(&cfg)
        }
        Command::Selftest { seed } => {
            let seed = seed.unwrap_or(cfg.seed);
            cmd_selftest(seed)
        }
    }
}

fn init_threads(requested: Option<usize>) {
    let n = requested.or_else(|| {
        std::env::var("TENSORTOM_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // A second initialization (tests, repeated calls) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Write a tensor grid: magic, `n` as little-endian u32, then each component
/// (f11, f12, f22) as row-major little-endian f64.
pub fn save_tensor_binary(path: &Path, f: &TensorField) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(f.grid().n() as u32).to_le_bytes())?;
    for comp in [&f.f11, &f.f12, &f.f22] {
        for v in comp.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_tensor_binary(path: &Path) -> Result<TensorField> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a tensor grid file (bad magic)",
            path.display()
        )));
    }
    let mut nb = [0u8; 4];
    r.read_exact(&mut nb)?;
    let n = u32::from_le_bytes(nb) as usize;
    let grid = GridSpec::new(n)?;
    let mut f = TensorField::zeros(&grid);
    for comp in [&mut f.f11, &mut f.f12, &mut f.f22] {
        let mut buf = [0u8; 8];
        for v in comp.values_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format(format!(
            "{} has trailing bytes after the tensor grid",
            path.display()
        )));
    }
    Ok(f)
}

/// Flatten a tensor grid to CSV with node coordinates, one row per node.
pub fn write_tensor_csv(path: &Path, f: &TensorField) -> Result<()> {
    let grid = f.grid();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,y,f11,f12,f22")?;
    let n = grid.n();
    for j in 0..n {
        for i in 0..n {
            let (x, y) = grid.xy(i, j);
            writeln!(
                w,
                "{x},{y},{},{},{}",
                f.f11.at(i, j),
                f.f12.at(i, j),
                f.f22.at(i, j)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn load_phantom_spec(cfg: &RunConfig) -> Result<PhantomSpec> {
    match &cfg.phantom_spec {
        Some(path) => Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?),
        None => Ok(PhantomSpec::example(cfg.class)),
    }
}

fn rasterize(spec: &PhantomSpec, grid: &GridSpec) -> Result<TensorField> {
    match spec.kind {
        TensorClass::Incompressible => phantom_incompressible(spec, grid),
        TensorClass::Tracefree => phantom_tracefree(spec, grid),
    }
}

fn max_trace(f: &TensorField) -> f64 {
    let grid = f.grid();
    let mut worst = 0.0f64;
    for (i, j) in grid.inside_nodes() {
        worst = worst.max(f.trace(i, j).abs());
    }
    worst
}

fn cmd_phantom(cfg: &RunConfig) -> Result<()> {
    let spec = load_phantom_spec(cfg)?;
    let grid = GridSpec::new(cfg.grid_n)?;
    let f = rasterize(&spec, &grid)?;
    let bin = cfg.output.join("phantom.ttgrid");
    let csv = cfg.output.join("phantom.csv");
    save_tensor_binary(&bin, &f)?;
    write_tensor_csv(&csv, &f)?;
    let diag = match spec.kind {
        TensorClass::Incompressible => {
            let (d1, d2) = divergence(&f);
            format!("max_divergence_residual={:.6e}", d1.max_abs().max(d2.max_abs()))
        }
        TensorClass::Tracefree => format!("max_trace={:.6e}", max_trace(&f)),
    };
    println!(
        "phantom: class={:?} grid_n={} support_radius={} {diag}",
        spec.kind,
        grid.n(),
        spec.r_max
    );
    println!("wrote {} and {}", bin.display(), csv.display());
    Ok(())
}

fn cmd_forward(cfg: &RunConfig) -> Result<()> {
    let input = cfg
        .tensor_in
        .clone()
        .unwrap_or_else(|| cfg.output.join("phantom.ttgrid"));
    let f = load_tensor_binary(&input)?;
    if cfg.mu < 0.0 {
        return Err(Error::Config(format!(
            "forward projection needs mu >= 0, got {}",
            cfg.mu
        )));
    }
    let s = sample_sinogram(&f, cfg.mu, cfg.n_beta, cfg.n_phi)?;
    let path = cfg.output.join("sinogram.csv");
    s.save(&path)?;
    let (mut lo, mut hi, mut incoming) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for b in 0..s.n_beta {
        let zeta = boundary_point(s.beta(b));
        for p in 0..s.n_phi {
            let v = s.at(b, p);
            lo = lo.min(v);
            hi = hi.max(v);
            if classify(&zeta, &Direction::new(s.phi(p))) == RayClass::Incoming {
                incoming = incoming.max(v.abs());
            }
        }
    }
    println!("sinogram: min={lo:.6e} max={hi:.6e} incoming_max_abs={incoming:.6e}");
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_invert(cfg: &RunConfig) -> Result<()> {
    let input = cfg
        .sinogram_in
        .clone()
        .unwrap_or_else(|| cfg.output.join("sinogram.csv"));
    let s = Sinogram::load(&input)?;
    let rc = cfg.reconstruction()?;
    let (f, report) = invert(&s, &rc)?;
    write_inversion_outputs(cfg, &f, &report)?;
    Ok(())
}

fn write_inversion_outputs(
    cfg: &RunConfig,
    f: &TensorField,
    report: &crate::pipeline::ReconstructionReport,
) -> Result<()> {
    let bin = cfg.output.join("reconstruction.ttgrid");
    let csv = cfg.output.join("reconstruction.csv");
    let rep = cfg.output.join("report.json");
    save_tensor_binary(&bin, f)?;
    write_tensor_csv(&csv, f)?;
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(&rep, text)?;
    println!(
        "inversion: class={:?} aanalytic_residual={:.3e} pompeiu_residual={:.3e}",
        report.class, report.aanalytic_residual, report.pompeiu_residual
    );
    if let Some(errors) = &report.errors {
        println!(
            "errors: l2_aggregate={:.4} linf_aggregate={:.4}",
            errors.l2.aggregate, errors.linf.aggregate
        );
    }
    println!(
        "wrote {}, {}, {}",
        bin.display(),
        csv.display(),
        rep.display()
    );
    Ok(())
}

fn cmd_roundtrip(cfg: &RunConfig) -> Result<()> {
    let mut spec = load_phantom_spec(cfg)?;
    spec.kind = cfg.class;
    let rc = cfg.reconstruction()?;
    let f = rasterize(&spec, &rc.grid)?;
    save_tensor_binary(&cfg.output.join("phantom.ttgrid"), &f)?;
    write_tensor_csv(&cfg.output.join("phantom.csv"), &f)?;
    let s = sample_sinogram(&f, cfg.mu, cfg.n_beta, cfg.n_phi)?;
    s.save(&cfg.output.join("sinogram.csv"))?;
    let (fhat, mut report) = invert(&s, &rc)?;
    report.errors = Some(compare_fields(&f, &fhat, rc.delta_b)?);
    write_inversion_outputs(cfg, &fhat, &report)?;
    Ok(())
}

/// One self-test line: a named residual against its tolerance.
#[derive(Clone, Debug)]
pub struct SelfCheck {
    pub name: &'static str,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl SelfCheck {
    fn max_under(name: &'static str, residual: f64, tol: f64) -> Self {
        Self {
            name,
            residual,
            tol,
            pass: residual <= tol,
        }
    }
}

fn random_interior(rng: &mut ChaCha8Rng) -> Complex64 {
    loop {
        let x: f64 = rng.random_range(-0.9..0.9);
        let y: f64 = rng.random_range(-0.9..0.9);
        if x.hypot(y) < 0.9 {
            return Complex64::new(x, y);
        }
    }
}

fn check_h_quadrature(rng: &mut ChaCha8Rng) -> SelfCheck {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let z = random_interior(rng);
        let phi: f64 = rng.random_range(0.0..TAU);
        let mu: f64 = rng.random_range(0.3..2.0);
        match h_quadrature(z, phi, mu, 4096) {
            Ok(q) => worst = worst.max((q - h_closed_form(z, phi, mu)).norm()),
            Err(_) => worst = f64::INFINITY,
        }
    }
    SelfCheck::max_under("h-quadrature-vs-closed-form", worst, 1e-4)
}

fn check_alpha_recursion(rng: &mut ChaCha8Rng) -> SelfCheck {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let z = random_interior(rng);
        let mu: f64 = rng.random_range(0.2..3.0);
        for k in 1..=16usize {
            let lhs = alpha_closed(z, mu, k) * k as f64;
            let rhs = alpha_closed(z, mu, k - 1) * mu * z.conj();
            worst = worst.max((lhs - rhs).norm());
        }
    }
    SelfCheck::max_under("attenuation-coefficient-recursion", worst, 1e-10)
}

fn check_bukhgeim_chain() -> SelfCheck {
    let m = 512;
    let c = Complex64::new(0.3, -0.4);
    let bv = BoundarySequence::from_fn(m, 6, |n, beta| {
        let zeta = Complex64::from_polar(1.0, beta);
        match n {
            0 => zeta.conj(),
            2 => -zeta,
            4 => c,
            _ => Complex64::ZERO,
        }
    });
    let mut worst = 0.0f64;
    for (x, y) in [(0.0, 0.0), (0.3, -0.2), (0.6, 0.1)] {
        let z = Complex64::new(x, y);
        let got = bukhgeim_cauchy(&bv, z, 0.05).expect("points are certified");
        let want = [z.conj(), Complex64::ZERO, -z, Complex64::ZERO, c, Complex64::ZERO, Complex64::ZERO];
        for (g, w) in got.iter().zip(want.iter()) {
            worst = worst.max((g - w).norm());
        }
    }
    SelfCheck::max_under("bukhgeim-chain-reproduction", worst, 1e-6)
}

fn mms_error(c1: f64, c2: f64, n: usize) -> f64 {
    let grid = GridSpec::new(n).expect("valid grid");
    let phi = |x: f64, y: f64| {
        let s = 1.0 - x * x - y * y;
        s * s
    };
    let mut rhs1 = RealField::zeros(&grid);
    let mut rhs2 = RealField::zeros(&grid);
    for (i, j) in grid.inside_nodes() {
        let (x, y) = grid.xy(i, j);
        let r2 = x * x + y * y;
        let lap = -8.0 + 16.0 * r2;
        let pxx = -4.0 + 4.0 * r2 + 8.0 * x * x;
        let pxy = 8.0 * x * y;
        rhs1.set(i, j, lap + c1 / 4.0 * pxx + c2 * phi(x, y));
        rhs2.set(i, j, c1 / 4.0 * pxy);
    }
    let g = BoundaryData::from_fn(64, |_| Complex64::ZERO).expect("even sample count");
    let problem = EllipticProblem {
        c1,
        c2,
        rhs: (rhs1, rhs2),
        dirichlet: g,
    };
    let (u1, u2) = solve_pd(&problem).expect("manufactured problem is solvable");
    let mut worst = 0.0f64;
    for (i, j) in grid.inside_nodes() {
        let (x, y) = grid.xy(i, j);
        worst = worst.max((u1.at(i, j) - phi(x, y)).abs().max(u2.at(i, j).abs()));
    }
    worst
}

fn check_elliptic_mms() -> SelfCheck {
    let mut worst_ratio = 0.0f64;
    for (c1, c2) in [(0.0, 0.0), (0.0, -2.0), (4.0, -2.0)] {
        let coarse = mms_error(c1, c2, 33);
        let fine = mms_error(c1, c2, 65);
        worst_ratio = worst_ratio.max(fine / coarse);
    }
    SelfCheck::max_under("elliptic-manufactured-convergence", worst_ratio, 0.45)
}

fn pompeiu_identity_error(kind_dbar: bool) -> f64 {
    let grid = GridSpec::new(65).expect("valid grid");
    let mut psi = ComplexField::zeros(&grid);
    for v in psi.values_mut() {
        *v = Complex64::ONE;
    }
    let g = BoundaryData::from_fn(256, |beta| Complex64::from_polar(1.0, if kind_dbar { -beta } else { beta }))
        .expect("even sample count");
    let mut worst = 0.0f64;
    for (x, y) in [(0.0, 0.0), (0.3, 0.4), (-0.5, 0.2), (0.1, -0.6)] {
        let z = Complex64::new(x, y);
        let got = if kind_dbar {
            solve_dbar_pompeiu(&psi, &g, z, 0.1).expect("point is certified")
        } else {
            solve_d_pompeiu(&psi, &g, z, 0.1).expect("point is certified")
        };
        let want = if kind_dbar { z.conj() } else { z };
        worst = worst.max((got - want).norm());
    }
    worst
}

fn attenuation_pair_residual(corrupt: bool, mu: f64) -> f64 {
    let grid = GridSpec::new(65).expect("valid grid");
    let n_max = 16;
    let k_trunc = 12;
    let mut u = ModeSequence::zeros(&grid, n_max);
    for k in 0..=n_max {
        let decay = 0.7f64.powi(k as i32);
        let field = u.at_mut(k);
        let g = field.grid().clone();
        for (i, j) in g.inside_nodes() {
            let (x, y) = g.xy(i, j);
            field.set(i, j, Complex64::new(decay * (1.0 + x), decay * (x * y - 0.2)));
        }
    }
    let mut coeffs =
        AttenuationCoeffs::compute(&grid, mu, k_trunc).expect("valid coefficient request");
    if corrupt {
        coeffs.corrupt_for_test(1, 1.5);
    }
    let down = conv_eg(&u, &coeffs, GSign::Minus).expect("matching grids");
    let back = conv_eg(&down, &coeffs, GSign::Plus).expect("matching grids");
    let mut worst = 0.0f64;
    for k in 0..=n_max - k_trunc {
        let (a, b) = (back.at(k), u.at(k));
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            num = num.max((x - y).norm());
            den = den.max(y.norm());
        }
        worst = worst.max(num / den.max(1e-300));
    }
    worst
}

fn check_mu_zero_identity() -> SelfCheck {
    SelfCheck::max_under(
        "attenuation-mu-zero-identity",
        attenuation_pair_residual(false, 0.0),
        1e-13,
    )
}

/// Run every oracle check; deterministic for a fixed seed.
pub fn selftest_checks(seed: u64) -> Vec<SelfCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        check_h_quadrature(&mut rng),
        check_alpha_recursion(&mut rng),
        check_bukhgeim_chain(),
        check_elliptic_mms(),
        SelfCheck::max_under("pompeiu-dbar-identity", pompeiu_identity_error(true), 5e-3),
        SelfCheck::max_under("pompeiu-d-identity", pompeiu_identity_error(false), 5e-3),
        SelfCheck::max_under(
            "attenuation-inverse-pair",
            attenuation_pair_residual(false, 1.0),
            1e-8,
        ),
        check_mu_zero_identity(),
    ];
    // Negative control: a corrupted coefficient table must break the pair.
    let corrupted = attenuation_pair_residual(true, 1.0);
    out.push(SelfCheck {
        name: "attenuation-corruption-detected",
        residual: corrupted,
        tol: 1e-6,
        pass: corrupted > 1e-6,
    });
    out
}

fn cmd_selftest(seed: u64) -> Result<()> {
    let checks = selftest_checks(seed);
    let mut failed = 0usize;
    for c in &checks {
        let verdict = if c.pass { "ok" } else { "FAIL" };
        println!(
            "{:40} residual {:>12.4e}  tol {:>8.1e}  {verdict}",
            c.name, c.residual, c.tol
        );
        if !c.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Error::NumericalCheck(format!(
            "{failed} of {} self-test checks failed",
            checks.len()
        )));
    }
    println!("all {} checks passed (seed {seed})", checks.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Bump;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().expect("temp dir")
    }

    #[test]
    fn tensor_binary_roundtrip_is_bit_exact() {
        let dir = tmpdir();
        let grid = GridSpec::new(33).unwrap();
        let spec = PhantomSpec::example(TensorClass::Incompressible);
        let f = phantom_incompressible(&spec, &grid).unwrap();
        let path = dir.path().join("t.ttgrid");
        save_tensor_binary(&path, &f).unwrap();
        let g = load_tensor_binary(&path).unwrap();
        assert_eq!(f.f11.values(), g.f11.values());
        assert_eq!(f.f12.values(), g.f12.values());
        assert_eq!(f.f22.values(), g.f22.values());
    }

    #[test]
    fn tensor_binary_rejects_bad_magic_and_truncation() {
        let dir = tmpdir();
        let path = dir.path().join("bad.ttgrid");
        std::fs::write(&path, b"NOTMAGIC").unwrap();
        assert!(load_tensor_binary(&path).is_err());
        let grid = GridSpec::new(33).unwrap();
        let f = TensorField::zeros(&grid);
        let good = dir.path().join("good.ttgrid");
        save_tensor_binary(&good, &f).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let short = dir.path().join("short.ttgrid");
        std::fs::write(&short, &bytes[..bytes.len() - 9]).unwrap();
        assert!(load_tensor_binary(&short).is_err());
    }

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(exit_code(&Error::Format("x".into())), 2);
        assert_eq!(
            exit_code(&Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "missing"
            ))),
            2
        );
        assert_eq!(exit_code(&Error::Config("x".into())), 3);
        assert_eq!(exit_code(&Error::Mismatch("x".into())), 3);
        assert_eq!(exit_code(&Error::NumericalCheck("x".into())), 4);
        assert_eq!(exit_code(&Error::Singular("x".into())), 4);
    }

    #[test]
    fn empty_bump_list_gives_zero_phantom() {
        let dir = tmpdir();
        let spec = PhantomSpec {
            kind: TensorClass::Incompressible,
            bumps: vec![],
            r_max: 0.8,
        };
        let spec_path = dir.path().join("spec.json");
        std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
        let cfg = RunConfig {
            phantom_spec: Some(spec_path),
            output: dir.path().to_path_buf(),
            grid_n: 33,
            ..RunConfig::default()
        };
        cmd_phantom(&cfg).unwrap();
        let f = load_tensor_binary(&dir.path().join("phantom.ttgrid")).unwrap();
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn run_config_json_roundtrip_and_unknown_fields() {
        let cfg = RunConfig {
            mu: 0.5,
            grid_n: 65,
            class: TensorClass::Tracefree,
            ..RunConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.mu, 0.5);
        assert_eq!(back.grid_n, 65);
        assert_eq!(back.class, TensorClass::Tracefree);
        assert!(serde_json::from_str::<RunConfig>("{\"not_a_field\": 1}").is_err());
        // Partial configs fill remaining fields with defaults.
        let partial: RunConfig = serde_json::from_str("{\"mu\": 2.0}").unwrap();
        assert_eq!(partial.mu, 2.0);
        assert_eq!(partial.grid_n, 257);
    }

    #[test]
    fn phantom_forward_pipeline_files_exist() {
        let dir = tmpdir();
        let spec = PhantomSpec {
            kind: TensorClass::Tracefree,
            bumps: vec![Bump {
                cx: 0.0,
                cy: 0.0,
                r: 0.5,
                amp: 1.0,
            }],
            r_max: 0.7,
        };
        let spec_path = dir.path().join("spec.json");
        std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
        let cfg = RunConfig {
            phantom_spec: Some(spec_path),
            output: dir.path().to_path_buf(),
            grid_n: 33,
            class: TensorClass::Tracefree,
            n_beta: 64,
            n_phi: 64,
            ..RunConfig::default()
        };
        cmd_phantom(&cfg).unwrap();
        cmd_forward(&cfg).unwrap();
        assert!(dir.path().join("phantom.csv").exists());
        assert!(dir.path().join("sinogram.csv").exists());
        let s = Sinogram::load(&dir.path().join("sinogram.csv")).unwrap();
        assert_eq!(s.n_beta, 64);
        // Incoming pairs are zero by construction.
        for b in 0..s.n_beta {
            let zeta = boundary_point(s.beta(b));
            for p in 0..s.n_phi {
                if classify(&zeta, &Direction::new(s.phi(p))) == RayClass::Incoming
                {
                    assert_eq!(s.at(b, p), 0.0);
                }
            }
        }
    }

    #[test]
    fn selftest_passes_and_detects_corruption() {
        let checks = selftest_checks(7);
        for c in &checks {
            assert!(c.pass, "{}: residual {} tol {}", c.name, c.residual, c.tol);
        }
        assert!(checks.iter().any(|c| c.name == "attenuation-corruption-detected"));
    }

    #[test]
    fn class_parsing_accepts_both_classes() {
        assert_eq!(parse_class("incompressible").unwrap(), TensorClass::Incompressible);
        assert_eq!(parse_class("tracefree").unwrap(), TensorClass::Tracefree);
        assert!(parse_class("elastic").is_err());
    }
}
