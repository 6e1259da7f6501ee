use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wannier_core::config::{parse_start, RunConfig, StartKind, TrialKind};
use wannier_core::functional::GaugeField;
use wannier_core::harmonic::{default_cases, line_of_degree, run_suite};
use wannier_core::io::{gauge_table, read_gauge_csv, wannier_table, write_json};
use wannier_core::pipeline::{
    apply_gauge, band_structure, build_frame, localize, oracle_only, summarize_wannier, synthesize_set, DescentSummary,
    Problem,
};
use wannier_core::{Error, Result};

const EXIT_CODES: &str = "\
Exit codes:
   0  success
   1  usage error
   2  configuration or parse error (with line number)
   3  invalid input: lattice, grid, potential or band window
   4  eigensolver failure
   5  spectral gap violated
   6  frame construction failed (degenerate projection, transport, shapes)
   7  optimizer failure (line search stall, gradient check)
   8  abelian oracle failure
   9  Wannier synthesis or decay failure
  10  harmonic-map check failure (quadrature divergence, invalid line)
  11  file I/O error";

#[derive(Parser)]
#[command(name = "wannier", version, about = "Maximally localized Wannier functions and harmonic-map checks", after_help = EXIT_CODES)]
struct Cli {
    /// INI run configuration
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides [output] dir)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for random trials and starts (overrides [optimizer] seed)
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Suppress progress and summary output
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrialArg {
    Eigen,
    Random,
    Constant,
}

impl From<TrialArg> for TrialKind {
    fn from(t: TrialArg) -> Self {
        match t {
            TrialArg::Eigen => TrialKind::Eigen,
            TrialArg::Random => TrialKind::Random,
            TrialArg::Constant => TrialKind::Constant,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Band energies on the k-grid and the gap of the configured window
    Bands,
    /// Minimize the spread functional and synthesize the Wannier functions
    Localize {
        /// Trial subspace for the initial frame (overrides [frame] trial)
        #[arg(long, value_enum)]
        frame_trial: Option<TrialArg>,
        /// identity, random or perturbed:EPS (overrides [optimizer] start)
        #[arg(long, value_parser = parse_start)]
        start: Option<StartKind>,
        /// Also run the abelian Poisson oracle (m = 1 only)
        #[arg(long)]
        oracle: bool,
    },
    /// Synthesize Wannier functions from the configured frame and a gauge dump
    Synthesize {
        /// Gauge CSV (kIndex,row,col,re,im); identity when omitted
        #[arg(long, value_name = "PATH")]
        gauge: Option<PathBuf>,
        #[arg(long, value_enum)]
        frame_trial: Option<TrialArg>,
    },
    /// Closed-form minimizer for a single band
    OracleAbelian {
        #[arg(long, value_enum)]
        frame_trial: Option<TrialArg>,
    },
    /// Energy quantization, stability bound and second-variation checks
    HarmonicCheck {
        /// Add a case of this degree (requires --m)
        #[arg(long, requires = "m")]
        degree: Option<usize>,
        /// Matrix size of the added case
        #[arg(long, requires = "degree")]
        m: Option<usize>,
        /// Random trials per m for the second-variation identity
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Gauss-Legendre order of the sphere quadrature
        #[arg(long, default_value_t = 64)]
        order: usize,
    },
}

struct Ctx {
    out: PathBuf,
    json: bool,
    csv: bool,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config { line: None, msg: "--config is required".into() })?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.optimizer.seed = seed;
    }
    Ok(cfg)
}

fn make_ctx(cli: &Cli, cfg: Option<&RunConfig>) -> Result<Ctx> {
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.dir.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("wannier-out"));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display(), e))?;
    let (json, csv) = cfg.map_or((true, true), |c| (c.output.json, c.output.csv));
    Ok(Ctx { out, json, csv, quiet: cli.quiet })
}

fn with_trial(cfg: &mut RunConfig, t: Option<TrialArg>) {
    if let Some(t) = t {
        cfg.frame.trial = t.into();
    }
}

fn cmd_bands(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let ctx = make_ctx(cli, Some(&cfg))?;
    let p = Problem::build(&cfg)?;
    let (table, gap) = band_structure(&p, cfg.bands)?;
    if ctx.csv {
        table.write(&ctx.path("bands.csv"))?;
    }
    if ctx.json {
        write_json(&ctx.path("gap.json"), &gap)?;
    }
    if !ctx.quiet {
        println!(
            "window n={} m={}: min gap {:.6e} at k-index {} ({})",
            gap.first,
            gap.count,
            gap.min_gap,
            gap.k_index,
            if gap.open { "open" } else { "closed" }
        );
    }
    Ok(())
}

fn cmd_localize(cli: &Cli, trial: Option<TrialArg>, start: Option<StartKind>, oracle: bool) -> Result<()> {
    let mut cfg = load_config(cli)?;
    with_trial(&mut cfg, trial);
    let ctx = make_ctx(cli, Some(&cfg))?;
    let p = Problem::build(&cfg)?;
    ctx.note(format!("solved {} fibers, basis size {}", p.grid.len(), p.basis.len()));
    let loc = localize(&p, &cfg.frame, &cfg.optimizer, start.unwrap_or(cfg.start), oracle)?;
    let summary = DescentSummary::from_trace(&loc.trace);
    ctx.note(format!(
        "descent: F = {:.12} after {} iterations, |grad| = {:.3e}, converged = {}",
        summary.objective, summary.iterations, summary.grad_norm, summary.converged
    ));
    let ws = synthesize_set(&p, &loc.final_frame(), cfg.grid.samples.as_deref())?;
    let (wsum, decay_err) = summarize_wannier(&ws, &p.lattice)?;

    if ctx.json {
        write_json(&ctx.path("trace.json"), &loc.trace.rows)?;
        write_json(&ctx.path("functional.json"), &loc.functional)?;
        write_json(
            &ctx.path("localize.json"),
            &serde_json::json!({
                "minGap": loc.window.min_gap,
                "descent": summary,
                "oracle": loc.oracle,
            }),
        )?;
        write_json(&ctx.path("wannier.json"), &wsum)?;
    }
    if ctx.csv {
        gauge_table(&loc.trace.gauge).write(&ctx.path("gauge.csv"))?;
        wannier_table(&ws).write(&ctx.path("wannier.csv"))?;
    }
    if !ctx.quiet {
        println!("objective {:.17e}", summary.objective);
        if let Some(o) = &loc.oracle {
            println!("oracle    {:.17e} (relative difference {:.3e})", o.objective, o.relative_difference.unwrap_or(f64::NAN));
        }
        for (a, (c, s)) in wsum.centers.iter().zip(&wsum.spreads).enumerate() {
            println!("band {a}: center {c:?} spread {s:.12}");
        }
        if let Some(fits) = &wsum.decay {
            for (a, f) in fits.iter().enumerate() {
                println!("band {a}: beta {:.6} rSquared {:.6}", f.beta, f.r_squared);
            }
        }
    }
    decay_err.map_or(Ok(()), Err)
}

fn cmd_synthesize(cli: &Cli, gauge: Option<&Path>, trial: Option<TrialArg>) -> Result<()> {
    let mut cfg = load_config(cli)?;
    with_trial(&mut cfg, trial);
    let ctx = make_ctx(cli, Some(&cfg))?;
    let p = Problem::build(&cfg)?;
    let window = p.validated_window()?;
    let frame = build_frame(&p, &window, &cfg.frame, cfg.optimizer.seed)?;
    let u = match gauge {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
            read_gauge_csv(std::io::BufReader::new(file))?
        }
        None => GaugeField::identity(p.grid.len(), window.count),
    };
    let ws = synthesize_set(&p, &apply_gauge(&frame, &u)?, cfg.grid.samples.as_deref())?;
    let (wsum, decay_err) = summarize_wannier(&ws, &p.lattice)?;
    if ctx.json {
        write_json(&ctx.path("wannier.json"), &wsum)?;
    }
    if ctx.csv {
        wannier_table(&ws).write(&ctx.path("wannier.csv"))?;
    }
    if !ctx.quiet {
        println!("spread total {:.17e}", wsum.total);
    }
    decay_err.map_or(Ok(()), Err)
}

fn cmd_oracle(cli: &Cli, trial: Option<TrialArg>) -> Result<()> {
    let mut cfg = load_config(cli)?;
    with_trial(&mut cfg, trial);
    let ctx = make_ctx(cli, Some(&cfg))?;
    let p = Problem::build(&cfg)?;
    let o = oracle_only(&p, &cfg.frame, cfg.optimizer.seed)?;
    if ctx.json {
        write_json(&ctx.path("oracle.json"), &o)?;
    }
    if !ctx.quiet {
        println!("oracle objective {:.17e}, |grad| {:.3e}, sector {}", o.objective, o.grad_norm, o.selected);
    }
    Ok(())
}

fn cmd_harmonic(cli: &Cli, extra: Option<(usize, usize)>, trials: usize, order: usize) -> Result<()> {
    let ctx = make_ctx(cli, None)?;
    let mut cases = default_cases();
    if let Some((m, d)) = extra {
        cases.push((format!("U({m}) degree {d} (added)"), line_of_degree(m, d)?));
    }
    let report = run_suite(&cases, trials, cli.seed.unwrap_or(0), order)?;
    write_json(&ctx.path("harmonic.json"), &report)?;
    if !ctx.quiet {
        for r in &report.quantization {
            println!("{:<24} E/8pi = {:.8}  {}", r.case, r.ratio_to_8pi, if r.pass { "pass" } else { "FAIL" });
        }
        for s in &report.stability {
            println!("stability m={}: E = {:.6} vs bound {:.6}  {}", s.m, s.energy, s.bound, if s.pass { "pass" } else { "FAIL" });
        }
        for i in &report.identity {
            println!(
                "second variation m={}: {} trials, worst {:.3e}  {}",
                i.m,
                i.trials,
                i.worst_rel_error,
                if i.pass { "pass" } else { "FAIL" }
            );
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Bands => cmd_bands(cli),
        Command::Localize { frame_trial, start, oracle } => cmd_localize(cli, *frame_trial, *start, *oracle),
        Command::Synthesize { gauge, frame_trial } => cmd_synthesize(cli, gauge.as_deref(), *frame_trial),
        Command::OracleAbelian { frame_trial } => cmd_oracle(cli, *frame_trial),
        Command::HarmonicCheck { degree, m, trials, order } => cmd_harmonic(cli, m.zip(*degree), *trials, *order),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
