mod artifacts;
mod config;

use artifacts::Manifest;
use clap::{Parser, Subcommand, ValueEnum};
use config::{ConfigError, RunConfig};
use mixdim::acceptance;
use mixdim::exterior::{dtn_galerkin, dtn_symbol, gamma1_exterior, DEFAULT_OVERSAMPLING};
use mixdim::interface::MultiscaleDecomposition;
use mixdim::transmission::{assemble_system, convergence_study, plasmonic_pencil, solve_interface, reconstruct};
use mixdim::tree_dtn::{condensed_dtn, exact_dtn, truncated_dtn, AssemblyOptions};
use mixdim::tree_model::evaluate_params;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mixdim", version, about = "Tree/exterior transmission solver")]
struct Cli {
    /// Run single-threaded.
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DtnKind {
    Condensed,
    Truncated,
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Check tree, interface and coupling parameters.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Dump a tree DtN matrix on level-N cells.
    TreeDtn {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "condensed")]
        kind: DtnKind,
        #[arg(long)]
        allow_large: bool,
    },
    /// Dump the exterior DtN symbol, and optionally its Galerkin matrix.
    ExteriorDtn {
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        level: usize,
        /// Mode cutoff; defaults to 16·p^N.
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        galerkin: Option<PathBuf>,
        #[arg(long)]
        allow_large: bool,
    },
    /// Solve the transmission problem and write all artifacts under a prefix.
    Transmission {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_prefix: String,
    },
    /// Run a convergence study over `transmission.levels`.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generalized eigenvalues of the plasmonic pencil.
    Plasmonic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Run the acceptance suite.
    Selftest {
        #[arg(long)]
        seed: Option<u64>,
        /// Takes the seed from `run.seed` when `--seed` is absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<mixdim::Error> for Failure {
    fn from(e: mixdim::Error) -> Self {
        use mixdim::Error::*;
        match e {
            SingularSystem | KirchhoffViolated { .. } | UnresolvableMode0 { .. } | SingularInterfaceOperator { .. }
            | Numerical(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o error: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn load(path: &Path) -> Result<(Vec<u8>, RunConfig), Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure::Validation(format!("{} is not valid UTF-8", path.display())))?;
    let cfg = RunConfig::parse(&text)?;
    if cfg.serial {
        single_thread();
    }
    Ok((bytes, cfg))
}

fn manifest_for(command: &str, path: &Path, bytes: &[u8], cfg: &RunConfig) -> Manifest {
    let mut m = Manifest::new(command, bytes);
    m.set("config", path.display());
    for (k, v) in cfg.raw.echo() {
        m.set(&format!("param.{k}"), v);
    }
    m
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn resolve(cfg: &RunConfig, out: &Path) -> PathBuf {
    match &cfg.out_dir {
        Some(dir) if out.is_relative() => dir.join(out),
        _ => out.to_path_buf(),
    }
}

fn validate(path: &Path) -> Outcome {
    let (_, cfg) = load(path)?;
    let report = evaluate_params(&cfg.params)?;
    let mut ok = report.passed();
    match report.sigma {
        Some(s) => println!("sigma = {s:.17}"),
        None => println!("sigma = undefined (p = 1)"),
    }
    println!("r = {:.17}", report.r);
    println!("condensation factor = {:.17}", cfg.params.condensation_factor());
    for c in &report.checks {
        println!("[{}] {}: {}", if c.passed { "ok" } else { "violated" }, c.name, c.detail);
    }
    if cfg.params.p >= 2 {
        let decomp = MultiscaleDecomposition::new(cfg.radius, cfg.params.p, cfg.level)?;
        let rep = decomp.verify_conditions();
        println!(
            "[{}] decomposition: diameter ratio {:.6} <= {:.6}, overlap ratio {:.6} <= {:.6}",
            if rep.passed() { "ok" } else { "violated" },
            rep.max_diam_ratio,
            rep.c1,
            rep.max_overlap_ratio,
            rep.c2
        );
        ok &= rep.passed();
    }
    if cfg.raw.has_section("transmission") {
        let sys = assemble_system(&cfg.transmission)?;
        println!("solvability: case (i) {}, case (ii) {}", sys.flags.case_i, sys.flags.case_ii);
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Validation("structural conditions violated".into()))
    }
}

fn tree_dtn(path: &Path, depth: usize, out: &Path, kind: DtnKind, allow_large: bool) -> Outcome {
    let (bytes, cfg) = load(path)?;
    let opts = AssemblyOptions { allow_large: allow_large || cfg.transmission.allow_large };
    let op = match kind {
        DtnKind::Condensed => condensed_dtn(&cfg.params, depth, opts)?,
        DtnKind::Truncated => truncated_dtn(&cfg.params, depth, opts)?,
        DtnKind::Exact => exact_dtn(&cfg.params, depth, opts)?,
    };
    let out = resolve(&cfg, out);
    let mut m = manifest_for("tree-dtn", path, &bytes, &cfg);
    m.set("depth", depth);
    m.set("kind", ["condensed", "truncated", "exact"][kind as usize]);
    m.set("dim", op.dim());
    m.write(&out, &op.to_csv())?;
    m.finish(&sidecar(&out))?;
    Ok(())
}

fn exterior_dtn(
    radius: f64,
    level: usize,
    modes: Option<usize>,
    p: usize,
    out: &Path,
    galerkin: Option<&Path>,
    allow_large: bool,
) -> Outcome {
    let cutoff = modes.unwrap_or_else(|| mixdim::exterior::default_cutoff(p, level, DEFAULT_OVERSAMPLING));
    let symbol = dtn_symbol(radius, cutoff)?;
    let echo = format!("radius={radius}\nlevel={level}\nmodes={cutoff}\np={p}\n");
    let mut m = Manifest::new("exterior-dtn", echo.as_bytes());
    for line in echo.lines() {
        let (k, v) = line.split_once('=').unwrap_or((line, ""));
        m.set(&format!("param.{k}"), v);
    }
    if let Some(g) = galerkin {
        let decomp = MultiscaleDecomposition::new(radius, p, level)?;
        let oversampling = (cutoff / decomp.cells(level)).max(1);
        let op = dtn_galerkin(&decomp, level, &symbol, oversampling, allow_large)?;
        m.write(g, &op.to_csv())?;
    }
    m.write(out, &symbol.to_csv())?;
    m.finish(&sidecar(out))?;
    Ok(())
}

fn transmission(path: &Path, prefix: &str) -> Outcome {
    let (bytes, cfg) = load(path)?;
    let prefix = match &cfg.out_dir {
        Some(dir) if Path::new(prefix).is_relative() => format!("{}/{prefix}", dir.display()),
        _ => prefix.to_string(),
    };
    let file = |name: &str| PathBuf::from(format!("{prefix}{name}"));
    let t = &cfg.transmission;
    let sys = assemble_system(t)?;
    let sol = solve_interface(&sys)?;
    let full = reconstruct(t, &sys, &sol)?;
    let table = convergence_study(t, &cfg.levels)?;
    let pencil = plasmonic_pencil(&sys.c, &sys.d, cfg.pencil_count)?;

    let mut m = manifest_for("transmission", path, &bytes, &cfg);
    m.set("case_i", sys.flags.case_i);
    m.set("case_ii", sys.flags.case_ii);
    m.set("condition", format!("{:.6e}", full.condition));
    m.set("residual", format!("{:.6e}", sol.residual));
    m.set("trace_defect_tree", format!("{:.6e}", full.trace_defect_tree));
    m.set("trace_defect_exterior", format!("{:.6e}", full.trace_defect_exterior));
    m.set("flux_residual", format!("{:.6e}", full.flux_residual));
    if let Some(r) = table.rho_hat {
        m.set("rho_hat", format!("{r:.6}"));
    }
    if let Some(r) = table.rho_bound {
        m.set("rho_bound", format!("{r:.6}"));
    }
    m.write(&file("g_re.csv"), &full.g.to_csv_component(false))?;
    m.write(&file("g_im.csv"), &full.g.to_csv_component(true))?;
    m.write(&file("tree_re.csv"), &full.u_tree.re.to_csv())?;
    m.write(&file("tree_im.csv"), &full.u_tree.im.to_csv())?;
    m.write(&file("exterior_trace.csv"), &full.exterior.trace().to_csv())?;
    m.write(&file("exterior_flux.csv"), &gamma1_exterior(&full.exterior).to_csv())?;
    m.write(&file("convergence.csv"), &table.to_csv())?;
    m.write(&file("pencil.csv"), &pencil.to_csv())?;
    m.finish(&file("manifest.txt"))?;
    Ok(())
}

fn convergence(path: &Path, out: &Path) -> Outcome {
    let (bytes, cfg) = load(path)?;
    let table = convergence_study(&cfg.transmission, &cfg.levels)?;
    let out = resolve(&cfg, out);
    let mut m = manifest_for("convergence", path, &bytes, &cfg);
    if let Some(r) = table.rho_hat {
        m.set("rho_hat", format!("{r:.6}"));
        println!("rho_hat = {r:.6}");
    }
    if let Some(r) = table.rho_bound {
        m.set("rho_bound", format!("{r:.6}"));
    }
    m.set("monotone_h12", table.monotone_h12());
    m.write(&out, &table.to_csv())?;
    m.finish(&sidecar(&out))?;
    Ok(())
}

fn plasmonic(path: &Path, out: &Path, count: Option<usize>) -> Outcome {
    let (bytes, cfg) = load(path)?;
    let sys = assemble_system(&cfg.transmission)?;
    let pencil = plasmonic_pencil(&sys.c, &sys.d, count.or(cfg.pencil_count))?;
    let out = resolve(&cfg, out);
    let mut m = manifest_for("plasmonic", path, &bytes, &cfg);
    m.set("max_imag", format!("{:.6e}", pencil.max_imag()));
    m.set("constant_alignment", format!("{:.12}", pencil.constant_alignment));
    m.write(&out, &pencil.to_csv())?;
    m.finish(&sidecar(&out))?;
    Ok(())
}

fn selftest(seed: Option<u64>, config: Option<&Path>) -> Outcome {
    let from_config = match config {
        Some(path) => load(path)?.1.seed,
        None => None,
    };
    let seed = seed.or(from_config).unwrap_or(acceptance::DEFAULT_SEED);
    println!("seed = {seed}");
    let outcomes = acceptance::run_all(seed);
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("{failed} criteria failed")))
    }
}

fn single_thread() {
    // a second call fails harmlessly once the pool exists
    let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.serial {
        single_thread();
    }
    let result = match &cli.command {
        Command::Validate { config } => validate(config),
        Command::TreeDtn { config, depth, out, kind, allow_large } => tree_dtn(config, *depth, out, *kind, *allow_large),
        Command::ExteriorDtn { radius, level, modes, p, out, galerkin, allow_large } => {
            exterior_dtn(*radius, *level, *modes, *p, out, galerkin.as_deref(), *allow_large)
        }
        Command::Transmission { config, out_prefix } => transmission(config, out_prefix),
        Command::Convergence { config, out } => convergence(config, out),
        Command::Plasmonic { config, out, count } => plasmonic(config, out, *count),
        Command::Selftest { seed, config } => selftest(*seed, config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Validation(msg) | Failure::Numerical(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
