use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dgfeti::analysis::lemmas::{
    check_energy_identity, check_projection, compare_schur, sample_coercivity,
    sample_projection_bound, write_ratio_csv, LemmaConfig,
};
use dgfeti::analysis::oracle::{check_tilde, schur_path_error};
use dgfeti::analysis::{check_lemma_equivalences, dense_spectrum, refine_subdomain};
use dgfeti::assembly::CoefficientField;
use dgfeti::experiment::{
    emit, reproduce_table, run_case_full, table_spec, ExperimentConfig, OutputFormat,
};
use dgfeti::fetidp::FetiDp;
use dgfeti::krylov::{pcg, PcgConfig};
use dgfeti::problem::{Problem, ProblemConfig};

#[derive(Parser, Debug)]
#[command(
    name = "dgfeti",
    version,
    about = "FETI-DP solver for interior penalty DG discretizations"
)]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one case and print its result row.
    Solve {
        /// Write the PCG residual history as CSV.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Also solve the assembled system directly and report the difference.
        #[arg(long)]
        check_direct: bool,
    },
    /// Reproduce one of the five parameter sweeps.
    Table {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=5))]
        id: u8,
    },
    /// Run the verification suites; exits nonzero if any check fails.
    Verify {
        /// Write the lemma ratio table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Dense spectrum of the preconditioned dual operator on a small case.
    Spectrum {
        /// Write the eigenvalues as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct Options {
    /// Key-value file with the same keys as the flags; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Subdomains per side.
    #[arg(long = "M", global = true)]
    big_m: Option<usize>,
    /// Intervals per subdomain side.
    #[arg(long = "m", global = true)]
    small_m: Option<usize>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    rho_const: Option<f64>,
    #[arg(long, global = true)]
    rho_red: Option<f64>,
    #[arg(long, global = true)]
    rho_black: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// csv, json or pretty.
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

impl Options {
    /// Fills unset options from the config file.
    fn layered(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let table: toml::Table = text
            .parse()
            .with_context(|| format!("parsing {}", path.display()))?;
        for (key, value) in &table {
            let float = || {
                value
                    .as_float()
                    .or_else(|| value.as_integer().map(|v| v as f64))
                    .with_context(|| format!("{key} must be a number"))
            };
            let int = || -> Result<u64> {
                let v = value
                    .as_integer()
                    .with_context(|| format!("{key} must be an integer"))?;
                u64::try_from(v).with_context(|| format!("{key} must be non-negative"))
            };
            match key.replace('-', "_").as_str() {
                "M" => self.big_m = self.big_m.or(Some(int()? as usize)),
                "m" => self.small_m = self.small_m.or(Some(int()? as usize)),
                "delta" => self.delta = self.delta.or(Some(float()?)),
                "beta" => self.beta = self.beta.or(Some(float()?)),
                "rho_const" => self.rho_const = self.rho_const.or(Some(float()?)),
                "rho_red" => self.rho_red = self.rho_red.or(Some(float()?)),
                "rho_black" => self.rho_black = self.rho_black.or(Some(float()?)),
                "tol" => self.tol = self.tol.or(Some(float()?)),
                "max_iters" => self.max_iters = self.max_iters.or(Some(int()? as usize)),
                "seed" => self.seed = self.seed.or(Some(int()?)),
                "format" => {
                    let s = value.as_str().context("format must be a string")?;
                    self.format = self.format.take().or(Some(s.to_string()));
                }
                other => bail!("unknown key `{other}` in {}", path.display()),
            }
        }
        Ok(self)
    }

    fn coefficients(&self) -> Result<CoefficientField> {
        match (self.rho_const, self.rho_red, self.rho_black) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                bail!("--rho-const cannot be combined with --rho-red or --rho-black")
            }
            (c, None, None) => Ok(CoefficientField::Constant(c.unwrap_or(1.0))),
            (None, red, black) => Ok(CoefficientField::Checkerboard {
                black: black.unwrap_or(1.0),
                red: red.unwrap_or(1.0),
            }),
        }
    }

    fn format(&self, default: OutputFormat) -> Result<OutputFormat> {
        match &self.format {
            Some(f) => Ok(OutputFormat::from_str(f)?),
            None => Ok(default),
        }
    }

    fn pcg(&self) -> PcgConfig {
        let mut p = PcgConfig::default();
        if let Some(t) = self.tol {
            p.tol = t;
        }
        if let Some(k) = self.max_iters {
            p.max_iters = k;
        }
        p
    }

    fn experiment(&self, default_n: usize, default_m: usize) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(
            self.big_m.unwrap_or(default_n),
            self.small_m.unwrap_or(default_m),
            self.coefficients()?,
        );
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        cfg.pcg = self.pcg();
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A failed check, as opposed to an invalid invocation.
#[derive(Debug)]
struct VerificationFailed(usize);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} verification check(s) failed", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

fn solve(opts: &Options, history: Option<PathBuf>, check_direct: bool) -> Result<()> {
    let mut cfg = opts.experiment(4, 4)?;
    cfg.check_direct = check_direct;
    let format = opts.format(OutputFormat::Pretty)?;
    let out = run_case_full(&cfg)?;
    if let Some(path) = history {
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        out.report.write_history_csv(BufWriter::new(file))?;
    }
    print!("{}", emit(std::slice::from_ref(&out.row), format, None)?);
    if !out.row.converged {
        eprintln!(
            "warning: PCG did not converge in {} iterations",
            out.row.iters
        );
    }
    if out.row.residual > 1e-8 {
        eprintln!(
            "warning: relative residual {:.2e} exceeds 1e-8",
            out.row.residual
        );
    }
    Ok(())
}

fn table(opts: &Options, id: u8) -> Result<()> {
    let spec = table_spec(id)?;
    let format = opts.format(OutputFormat::Pretty)?;
    let pcg = opts.pcg();
    pcg.validate()?;
    let delta = opts.delta;
    let rows = reproduce_table(&spec, |c| {
        c.pcg = pcg;
        if let Some(d) = delta {
            c.delta = d;
        }
    })?;
    print!("{}", emit(&rows, format, Some(&spec))?);
    Ok(())
}

struct Checks(Vec<(String, bool, String)>);

impl Checks {
    fn add(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.0.push((name.to_string(), pass, detail));
    }

    fn failures(&self) -> usize {
        self.0.iter().filter(|c| !c.1).count()
    }
}

fn verify(opts: &Options, csv: Option<PathBuf>) -> Result<()> {
    let seed = opts.seed.unwrap_or(2024);
    let mut checks = Checks(Vec::new());

    let part_n = 3;
    let m = opts.small_m.unwrap_or(4);
    let problem = Problem::build(ProblemConfig::new(
        part_n,
        m,
        CoefficientField::Constant(1.0),
    ))?;
    let mut tiled = true;
    for i in 0..problem.subdomains() {
        let rm = refine_subdomain(&problem.partition, &problem.meshes, i)?;
        tiled &= rm.check_tiling(&problem.meshes[i]).is_valid();
    }
    checks.add("refinement tiling", tiled, format!("M={part_n} m={m}"));

    let lemma = check_lemma_equivalences(&LemmaConfig {
        seed,
        ..Default::default()
    })?;
    let identity = lemma.identity_error.iter().map(|e| e.1).fold(0.0, f64::max);
    checks.add(
        "backward of forward interpolation is the identity",
        identity <= 1e-13,
        format!("max relative error {identity:.2e}"),
    );
    for s in &lemma.suites {
        let g = s.growth();
        checks.add(
            &format!("ratio suite {}", s.name),
            s.bounded(0.10),
            format!(
                "max growth per doubling {:+.1}%, range [{:.3}, {:.3}]",
                100.0 * g,
                s.rows.iter().map(|r| r.min).fold(f64::INFINITY, f64::min),
                s.rows
                    .iter()
                    .map(|r| r.max)
                    .fold(f64::NEG_INFINITY, f64::max)
            ),
        );
    }
    if let Some(path) = csv {
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_ratio_csv(&lemma.suites, BufWriter::new(file))?;
    }

    let cfg = opts.experiment(4, 4)?;
    let problem = Problem::build(cfg.problem_config())?;
    let feti = FetiDp::new(&problem, cfg.beta)?;
    let proj = check_projection(&feti, 100, seed);
    checks.add(
        "B P = B and P^2 = P",
        proj.bp_error <= 1e-13 && proj.pp_error <= 1e-13,
        format!("errors {:.2e}, {:.2e}", proj.bp_error, proj.pp_error),
    );
    let cmp = compare_schur(&feti, 100, seed, 1e-12);
    checks.add(
        "<S~u,u> <= <S'u,u> on dual vectors",
        cmp.violations == 0,
        format!("worst relative excess {:.2e}", cmp.worst_excess),
    );
    let energy = check_energy_identity(&feti, 10, seed);
    checks.add(
        "Schur energy equals extension energy",
        energy <= 1e-12,
        format!("max relative error {energy:.2e}"),
    );
    let coer = sample_coercivity(&problem, 100, seed)?;
    checks.add(
        "coercivity of the DG form",
        coer.gamma0 > 0.0,
        format!("gamma0 {:.4}, gamma1 {:.4}", coer.gamma0, coer.gamma1),
    );
    let bound = sample_projection_bound(&feti, 100, seed);
    println!(
        "INFO projection bound: max ratio {:.3}, normalized by (1+log m)^2 {:.3}",
        bound.max_ratio, bound.normalized
    );

    let small = Problem::build(ProblemConfig::new(
        2,
        2,
        CoefficientField::Checkerboard {
            black: 1.0,
            red: 10.0,
        },
    ))?;
    let small_feti = FetiDp::new(&small, 1.0)?;
    let tilde = check_tilde(&small_feti, 10, seed)?;
    checks.add(
        "S~ equals the dense Schur complement",
        tilde.schur_error <= 1e-11 && tilde.inverse_error <= 1e-11 && tilde.f_error <= 1e-11,
        format!(
            "errors {:.2e}, {:.2e}, {:.2e}",
            tilde.schur_error, tilde.inverse_error, tilde.f_error
        ),
    );
    let path = schur_path_error(&small_feti)?;
    checks.add(
        "assembled Schur path matches the direct solve",
        path <= 1e-10,
        format!("relative difference {path:.2e}"),
    );

    let failed = checks.failures();
    println!("{} checks, {} failed", checks.0.len(), failed);
    if failed > 0 {
        return Err(VerificationFailed(failed).into());
    }
    Ok(())
}

fn spectrum(opts: &Options, csv: Option<PathBuf>) -> Result<()> {
    let cfg = opts.experiment(2, 2)?;
    let format = opts.format(OutputFormat::Pretty)?;
    let problem = Problem::build(cfg.problem_config())?;
    let feti = FetiDp::new(&problem, cfg.beta)?;
    if feti.n_multipliers() > 4000 {
        bail!(
            "dense spectrum needs {} multipliers; choose a smaller case",
            feti.n_multipliers()
        );
    }
    let dense = dense_spectrum(&feti)?;
    let g = feti.dual_rhs();
    let (_, report) = pcg(|x| feti.apply_f(x), |x| feti.apply_m_inv(x), &g, &cfg.pcg)?;
    let sp = &dense.spectrum;
    if let Some(path) = csv {
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        sp.write_csv(BufWriter::new(file))?;
    }
    let kappa = sp.condition();
    let rel = (report.condition - kappa).abs() / kappa;
    match format {
        OutputFormat::Json => {
            let doc = serde_json::json!({
                "M": cfg.n,
                "m": cfg.m,
                "beta": cfg.beta,
                "multipliers": feti.n_multipliers(),
                "lambda_min": sp.min(),
                "lambda_max": sp.max(),
                "cond": kappa,
                "eig_residual": sp.residual,
                "lanczos_cond": report.condition,
                "iters": report.iterations,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        OutputFormat::Csv => {
            println!(
                "M,m,beta,multipliers,lambda_min,lambda_max,cond,eig_residual,lanczos_cond,iters"
            );
            println!(
                "{},{},{},{},{},{},{},{:e},{},{}",
                cfg.n,
                cfg.m,
                cfg.beta,
                feti.n_multipliers(),
                sp.min(),
                sp.max(),
                kappa,
                sp.residual,
                report.condition,
                report.iterations
            );
        }
        OutputFormat::Pretty => {
            println!("multipliers      {}", feti.n_multipliers());
            println!("lambda_min       {:.10}", sp.min());
            println!("lambda_max       {:.6}", sp.max());
            println!("cond (dense)     {kappa:.4}");
            println!(
                "cond (Lanczos)   {:.4}  ({} iterations, {:.2}% off)",
                report.condition,
                report.iterations,
                100.0 * rel
            );
            println!("eigen residual   {:.2e}", sp.residual);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let opts = cli.opts.layered()?;
    match cli.command {
        Command::Solve {
            history,
            check_direct,
        } => solve(&opts, history, check_direct),
        Command::Table { id } => table(&opts, id),
        Command::Verify { csv } => verify(&opts, csv),
        Command::Spectrum { csv } => spectrum(&opts, csv),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<VerificationFailed>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
