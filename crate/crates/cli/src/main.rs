//! `slmimo`: design, analysis and simulation of sparse layered MIMO systems.

mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use slmimo::awep::analytic_report;
use slmimo::design::design_codebooks;
use slmimo::eigen::{expand_ordered_pdf, MonomialExpansion};
use slmimo::report::{self, Provenance};
use slmimo::sim::{self, DetectorKind, System};
use slmimo::sl::{check_design_condition, difference_set, SlMatrix};
use slmimo::{Error, ErrorClass};

use config::{CodebookSpec, CompareSource, Config, SystemSpec};

#[derive(Parser, Debug)]
#[command(name = "slmimo", version, about = "Sparse layered MIMO design, analysis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, global = true)]
    snr_list: Option<String>,
    #[arg(long, global = true)]
    detector: Option<DetectorArg>,
    #[arg(long, global = true)]
    mp_iters: Option<usize>,
    /// Progress messages on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Monomial expansion of the ordered eigenvalue density.
    Expand {
        #[arg(long)]
        nt: Option<usize>,
        #[arg(long)]
        nr: Option<usize>,
    },
    /// Codebooks and design trace for every system.
    Design,
    /// Analytic AWEP bound and asymptote for every system.
    Analyze,
    /// Monte Carlo AWEP for every system, merged with the analytic curves.
    Simulate,
    /// SNR gaps of every system against the first.
    Compare,
    /// MP word-error rate against iteration count for the first system.
    Converge,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Expand { .. } => "expand",
            Self::Design => "design",
            Self::Analyze => "analyze",
            Self::Simulate => "simulate",
            Self::Compare => "compare",
            Self::Converge => "converge",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum DetectorArg {
    Ml,
    Mp,
    Exact,
}

struct Failure {
    code: u8,
    class: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, class) = match e.class() {
            ErrorClass::Input => (2, "input"),
            ErrorClass::Numerical => (3, "numerical"),
            ErrorClass::Budget => (4, "budget"),
        };
        Self { code, class, message: e.to_string() }
    }
}

fn input(message: impl Into<String>) -> Failure {
    Failure { code: 2, class: "input", message: message.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.class, f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

/// Files of one run, written only under the output directory.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| input(format!("cannot write {}: {e}", path.display())))?;
        self.files.push((name.to_string(), hex::encode(Sha256::digest(contents.as_bytes()))));
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    subcommand: &'a str,
    config_hash: &'a str,
    seed: u64,
    threads: usize,
    runtime_seconds: f64,
    config: &'a Config,
    files: Vec<ManifestFile<'a>>,
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    name: &'a str,
    sha256: &'a str,
}

struct Ctx {
    cfg: Config,
    prov: Provenance,
    verbose: bool,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let start = Instant::now();
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| input(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| input(format!("bad config {}: {e}", p.display())))?
        }
        None => Config::default(),
    };
    apply_overrides(&mut cfg, cli)?;
    cfg.validate().map_err(input)?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(input("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| input(format!("thread pool: {e}")))?;
    }
    let canonical = serde_json::to_string(&cfg).expect("config serializes");
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    let ctx = Ctx { prov: Provenance::new(&hash[..16], cfg.seed), cfg, verbose: cli.verbose > 0 };
    fs::create_dir_all(&cli.out).map_err(|e| input(format!("cannot create {}: {e}", cli.out.display())))?;
    let mut out = Outputs { dir: cli.out.clone(), files: Vec::new() };

    match cli.command {
        Command::Expand { nt, nr } => expand(&ctx, nt, nr, &mut out)?,
        Command::Design => design(&ctx, &mut out)?,
        Command::Analyze => analyze(&ctx, &mut out)?,
        Command::Simulate => simulate(&ctx, &mut out)?,
        Command::Compare => compare(&ctx, &mut out)?,
        Command::Converge => converge(&ctx, &mut out)?,
    }

    let manifest = Manifest {
        version: &ctx.prov.version,
        subcommand: cli.command.name(),
        config_hash: &hash,
        seed: ctx.cfg.seed,
        threads: rayon::current_num_threads(),
        runtime_seconds: start.elapsed().as_secs_f64(),
        config: &ctx.cfg,
        files: out.files.iter().map(|(n, h)| ManifestFile { name: n, sha256: h }).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(out.dir.join("manifest.json"), text + "\n").map_err(|e| input(format!("cannot write manifest: {e}")))?;
    Ok(())
}

fn apply_overrides(cfg: &mut Config, cli: &Cli) -> Result<(), Failure> {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(list) = &cli.snr_list {
        cfg.snr_db = list
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| input(format!("bad SNR value {s:?}"))))
            .collect::<Result<_, _>>()?;
    }
    let iters = cli.mp_iters.or(match cfg.detector {
        DetectorKind::Mp { iterations, .. } => Some(iterations),
        _ => None,
    });
    let damping = match cfg.detector {
        DetectorKind::Mp { damping, .. } => damping,
        _ => 0.0,
    };
    match cli.detector {
        Some(DetectorArg::Ml) => cfg.detector = DetectorKind::Ml,
        Some(DetectorArg::Exact) => cfg.detector = DetectorKind::Exact,
        Some(DetectorArg::Mp) => cfg.detector = DetectorKind::Mp { iterations: iters.unwrap_or(5), damping },
        None => {
            if let (Some(k), DetectorKind::Mp { .. }) = (cli.mp_iters, cfg.detector) {
                cfg.detector = DetectorKind::Mp { iterations: k, damping };
            }
        }
    }
    Ok(())
}

fn expansion(ctx: &Ctx) -> Result<MonomialExpansion, Failure> {
    ctx.log(format!("expanding {}x{} ordered density", ctx.cfg.n_t, ctx.cfg.n_r));
    Ok(expand_ordered_pdf(ctx.cfg.n_t, ctx.cfg.n_r)?)
}

fn expand(ctx: &Ctx, nt: Option<usize>, nr: Option<usize>, out: &mut Outputs) -> Result<(), Failure> {
    let (n_t, n_r) = (nt.unwrap_or(ctx.cfg.n_t), nr.unwrap_or(ctx.cfg.n_r));
    let exp = expand_ordered_pdf(n_t, n_r)?;
    out.write("expansion.txt", &report::expansion_text(&exp, &ctx.prov))?;
    println!("P = {}, C = {}", exp.count(), exp.normalizer_exact());
    Ok(())
}

/// Builds one configured system, designing codebooks if asked.
fn build_system(ctx: &Ctx, spec: &SystemSpec, exp: &MonomialExpansion) -> Result<(System, Option<slmimo::design::DesignResult>), Failure> {
    let sl: SlMatrix = spec.matrix.resolve()?;
    let cfg = &ctx.cfg;
    match &spec.codebooks {
        CodebookSpec::Designed { .. } => {
            let opts = spec.codebooks.design_options(cfg.n_t, cfg.n_r, cfg.e_s).expect("designed spec");
            ctx.log(format!("designing {}", spec.name));
            let res = design_codebooks(&sl, exp, &opts)?;
            Ok((System::new(sl, res.books.clone())?, Some(res)))
        }
        CodebookSpec::Baseline { base, m, real } => {
            let books = slmimo::design::rotated_baseline(&sl, *base, *m, cfg.e_s, *real)?;
            Ok((System::new(sl, books)?, None))
        }
        CodebookSpec::File { path } => {
            let text = fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
            let books = slmimo::sl::CodebookSet::from_json(&sl, &text)?;
            Ok((System::new(sl, books)?, None))
        }
    }
}

fn design(ctx: &Ctx, out: &mut Outputs) -> Result<(), Failure> {
    let exp = expansion(ctx)?;
    for spec in &ctx.cfg.systems {
        let (sys, res) = build_system(ctx, spec, &exp)?;
        out.write(&format!("codebooks_{}.json", spec.name), &(sys.books.to_json() + "\n"))?;
        if let Some(res) = res {
            out.write(&format!("design_trace_{}.jsonl", spec.name), &res.trace_jsonl())?;
            let ops = serde_json::to_string_pretty(&res.operators).expect("operators serialize");
            out.write(&format!("operators_{}.json", spec.name), &(ops + "\n"))?;
        }
        let check = check_design_condition(&sys.sl, &sys.books);
        println!("{}: design condition {}", spec.name, if check.passed { "holds" } else { "violated" });
    }
    Ok(())
}

fn analytic(ctx: &Ctx, sys: &System, exp: &MonomialExpansion) -> Result<slmimo::awep::AwepReport, Failure> {
    let diffs = difference_set(&sys.books, &sys.sl)?;
    let total = sys.books.layers() as f64 * ctx.cfg.e_s;
    Ok(analytic_report(&diffs, exp, sys.sl.big_n(), &ctx.cfg.snr_db, total)?)
}

fn analyze(ctx: &Ctx, out: &mut Outputs) -> Result<(), Failure> {
    let exp = expansion(ctx)?;
    for spec in &ctx.cfg.systems {
        let (sys, _) = build_system(ctx, spec, &exp)?;
        ctx.log(format!("bounding {}", spec.name));
        let rep = analytic(ctx, &sys, &exp)?;
        out.write(&format!("awep_{}.csv", spec.name), &report::awep_report_csv(&rep, &ctx.prov))?;
        println!("{}: G_d = {}", spec.name, rep.diversity);
    }
    Ok(())
}

fn sim_config(ctx: &Ctx) -> sim::SimConfig {
    let c = &ctx.cfg;
    sim::SimConfig {
        n_t: c.n_t,
        n_r: c.n_r,
        snr_db: c.snr_db.clone(),
        detector: c.detector,
        stopping: c.stopping,
        seed: c.seed,
        chunk: c.chunk,
        e_s: c.e_s,
        noiseless: c.noiseless,
    }
}

fn simulate(ctx: &Ctx, out: &mut Outputs) -> Result<(), Failure> {
    let exp = expansion(ctx)?;
    let sc = sim_config(ctx);
    for spec in &ctx.cfg.systems {
        let (sys, _) = build_system(ctx, spec, &exp)?;
        let check = check_design_condition(&sys.sl, &sys.books);
        ctx.log(format!("simulating {}", spec.name));
        let pts = sim::run_curve(&sys, &sc)?;
        let extra = [("design_condition", if check.passed { "holds" } else { "violated" }.to_string())];
        out.write(
            &format!("curve_{}.csv", spec.name),
            &report::curve_csv(&pts, &ctx.cfg.detector.label(), &ctx.prov, &extra),
        )?;
        if ctx.cfg.with_bound {
            ctx.log(format!("bounding {}", spec.name));
            let mut rep = analytic(ctx, &sys, &exp)?;
            sim::merge_into_report(&mut rep, &pts)?;
            out.write(&format!("awep_{}.csv", spec.name), &report::awep_report_csv(&rep, &ctx.prov))?;
        }
    }
    Ok(())
}

fn compare(ctx: &Ctx, out: &mut Outputs) -> Result<(), Failure> {
    if ctx.cfg.systems.len() < 2 {
        return Err(input("compare needs at least two systems"));
    }
    let exp = expansion(ctx)?;
    let sc = sim_config(ctx);
    let mut curves = Vec::new();
    for spec in &ctx.cfg.systems {
        let (sys, _) = build_system(ctx, spec, &exp)?;
        ctx.log(format!("evaluating {}", spec.name));
        let values = match ctx.cfg.compare_source {
            CompareSource::Analytic => analytic(ctx, &sys, &exp)?.upper_bound,
            CompareSource::Simulated => sim::run_curve(&sys, &sc)?.iter().map(|p| p.awep).collect(),
        };
        curves.push((spec.name.clone(), ctx.cfg.snr_db.clone(), values));
    }
    let gaps = sim::compare_systems(&curves, &ctx.cfg.targets)?;
    let merged: Vec<(String, Vec<f64>)> = curves.iter().map(|(n, _, v)| (n.clone(), v.clone())).collect();
    out.write("compare.csv", &report::merged_csv(&ctx.cfg.snr_db, &merged, &ctx.prov))?;
    out.write("gaps.csv", &report::gaps_csv(&curves[0].0, &gaps, &ctx.prov))?;
    for g in &gaps {
        let v = g.gap_db.map(|x| format!("{x:.2} dB")).unwrap_or_else(|| "n/a".into());
        println!("{} vs {} at {:e}: {v} ({:?})", g.system, curves[0].0, g.target, g.kind);
    }
    Ok(())
}

fn converge(ctx: &Ctx, out: &mut Outputs) -> Result<(), Failure> {
    let exp = expansion(ctx)?;
    let spec = &ctx.cfg.systems[0];
    let (sys, _) = build_system(ctx, spec, &exp)?;
    let mut sc = sim_config(ctx);
    if !matches!(sc.detector, DetectorKind::Mp { .. }) {
        sc.detector = DetectorKind::Mp { iterations: 1, damping: 0.0 };
    }
    let c = &ctx.cfg.converge;
    ctx.log(format!("convergence study on {}", spec.name));
    let rows = sim::convergence_study(&sys, &sc, c.snr_db, &c.iterations)?;
    out.write(&format!("convergence_{}.csv", spec.name), &report::convergence_csv(&rows, &ctx.prov))?;
    Ok(())
}
