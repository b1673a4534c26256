//! Experiment driver: single runs, table sweeps and result formatting.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{CoefficientField, LoadFunction};
use crate::dofs::PrimalMode;
use crate::error::{Error, Result};
use crate::fetidp::FetiDp;
use crate::krylov::{pcg, PcgConfig, PcgReport};
use crate::linalg::{norm2, SparseCholesky};
use crate::problem::{Problem, ProblemConfig};

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub beta: f64,
    pub coefficients: CoefficientField,
    pub pcg: PcgConfig,
    pub primal_mode: PrimalMode,
    pub load: LoadFunction,
    /// Also solve `Âu = f` directly and record the difference.
    pub check_direct: bool,
}

impl ExperimentConfig {
    pub fn new(n: usize, m: usize, coefficients: CoefficientField) -> Self {
        Self {
            n,
            m,
            delta: 10.0,
            beta: 1.0,
            coefficients,
            pcg: PcgConfig::default(),
            primal_mode: PrimalMode::default(),
            load: LoadFunction::Constant(1.0),
            check_direct: false,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn problem_config(&self) -> ProblemConfig {
        ProblemConfig::new(self.n, self.m, self.coefficients)
            .with_delta(self.delta)
            .with_load(self.load.clone())
            .with_primal_mode(self.primal_mode)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem_config().validate()?;
        self.pcg.validate()?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// One line of output. The CSV columns are the first thirteen fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "M")]
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub beta: f64,
    pub rho_b: f64,
    pub rho_r: f64,
    pub iters: usize,
    pub cond: f64,
    pub lmin: f64,
    pub lmax: f64,
    /// `‖f − Âu*‖₂ / ‖f‖₂` of the recovered solution.
    pub residual: f64,
    pub converged: bool,
    pub seconds: f64,
    /// `‖B_Δ u*_Δ‖_∞ / ‖u*‖_∞`.
    #[serde(default)]
    pub jump: f64,
    /// `‖u* − u_direct‖₂ / ‖u_direct‖₂` when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_error: Option<f64>,
}

pub const CSV_HEADER: &str =
    "M,m,delta,beta,rho_b,rho_r,iters,cond,lmin,lmax,residual,converged,seconds";

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:e},{},{:.3}",
            self.n,
            self.m,
            self.delta,
            self.beta,
            self.rho_b,
            self.rho_r,
            self.iters,
            self.cond,
            self.lmin,
            self.lmax,
            self.residual,
            self.converged,
            self.seconds
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 13 {
            return Err(Error::InvalidConfig(format!(
                "expected 13 CSV fields, found {}",
                f.len()
            )));
        }
        fn p<T: FromStr>(s: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::InvalidConfig(format!("cannot parse CSV field '{s}'")))
        }
        Ok(Self {
            n: p(f[0])?,
            m: p(f[1])?,
            delta: p(f[2])?,
            beta: p(f[3])?,
            rho_b: p(f[4])?,
            rho_r: p(f[5])?,
            iters: p(f[6])?,
            cond: p(f[7])?,
            lmin: p(f[8])?,
            lmax: p(f[9])?,
            residual: p(f[10])?,
            converged: p(f[11])?,
            seconds: p(f[12])?,
            jump: 0.0,
            direct_error: None,
        })
    }

    pub fn cell(&self) -> String {
        format!("{} ({:.2})", self.iters, self.cond)
    }
}

/// Full output of a run, for callers needing more than the row.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub row: ResultRow,
    pub report: PcgReport,
    pub solution: Vec<f64>,
}

/// Mesh, assembly, dual system, PCG, recovery and residual check.
pub fn run_case(config: &ExperimentConfig) -> Result<ResultRow> {
    Ok(run_case_full(config)?.row)
}

pub fn run_case_full(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let start = Instant::now();
    let problem = Problem::build(config.problem_config())?;
    let feti = FetiDp::new(&problem, config.beta)?;
    let g = feti.dual_rhs();
    let (lambda, report) = pcg(
        |x| feti.apply_f(x),
        |x| feti.apply_m_inv(x),
        &g,
        &config.pcg,
    )?;
    let rec = feti.recover_solution(&lambda);
    let seconds = start.elapsed().as_secs_f64();

    let (a, f) = problem.assemble_global();
    let au = a.mul_vec(&rec.global);
    let res: Vec<f64> = f.iter().zip(&au).map(|(x, y)| x - y).collect();
    let f_norm = norm2(&f);
    let residual = if f_norm > 0.0 {
        norm2(&res) / f_norm
    } else {
        norm2(&res)
    };
    let u_max = crate::linalg::max_abs(&rec.global);
    let jump_max = crate::linalg::max_abs(&rec.jump);
    let jump = if u_max > 0.0 {
        jump_max / u_max
    } else {
        jump_max
    };
    let direct_error = if config.check_direct {
        let chol = SparseCholesky::new(&a)?;
        let u_ref = chol.solve(&f);
        let diff: Vec<f64> = rec.global.iter().zip(&u_ref).map(|(x, y)| x - y).collect();
        Some(norm2(&diff) / norm2(&u_ref).max(f64::MIN_POSITIVE))
    } else {
        None
    };
    let (rho_b, rho_r) = config.coefficients.black_red();
    Ok(RunOutput {
        row: ResultRow {
            n: config.n,
            m: config.m,
            delta: config.delta,
            beta: config.beta,
            rho_b,
            rho_r,
            iters: report.iterations,
            cond: report.condition,
            lmin: report.lambda_min,
            lmax: report.lambda_max,
            residual,
            converged: report.converged,
            seconds,
            jump,
            direct_error,
        },
        report,
        solution: rec.global,
    })
}

/// Parameter grid of one of the five tables.
#[derive(Debug, Clone)]
pub struct TableSpec {
    pub id: u8,
    pub title: String,
    pub row_label: String,
    pub col_label: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Row-major cells.
    pub cells: Vec<ExperimentConfig>,
}

pub const TABLE3_RHO_RED: [f64; 9] = [1e4, 1e3, 1e2, 10.0, 1.0, 0.1, 0.01, 1e-3, 1e-4];

pub fn table_spec(id: u8) -> Result<TableSpec> {
    let sizes = [4usize, 8, 16];
    let ms = [2usize, 4, 8, 16];
    let labels = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let fmt_rho = |r: f64| format!("{r}");
    let spec = match id {
        1 | 2 => {
            let coeff = if id == 1 {
                CoefficientField::Constant(1.0)
            } else {
                CoefficientField::Checkerboard {
                    black: 1.0,
                    red: 1000.0,
                }
            };
            let mut cells = Vec::new();
            for &n in &sizes {
                for &m in &sizes {
                    cells.push(ExperimentConfig::new(n, m, coeff));
                }
            }
            TableSpec {
                id,
                title: if id == 1 {
                    "rho = 1 everywhere, beta = 1".into()
                } else {
                    "checkerboard rho_b = 1, rho_r = 1000, beta = 1".into()
                },
                row_label: "M".into(),
                col_label: "m".into(),
                rows: labels(&sizes),
                cols: labels(&sizes),
                cells,
            }
        }
        3 => {
            let mut cells = Vec::new();
            for &red in &TABLE3_RHO_RED {
                for &m in &ms {
                    cells.push(ExperimentConfig::new(
                        8,
                        m,
                        CoefficientField::Checkerboard { black: 1.0, red },
                    ));
                }
            }
            TableSpec {
                id,
                title: "M = 8, rho_b = 1, beta = 1".into(),
                row_label: "rho_r".into(),
                col_label: "m".into(),
                rows: TABLE3_RHO_RED.iter().map(|&r| fmt_rho(r)).collect(),
                cols: labels(&ms),
                cells,
            }
        }
        4 | 5 => {
            let beta = if id == 4 { 0.5 } else { 10.0 };
            let reds = [1000.0, 1.0, 0.001];
            let mut cells = Vec::new();
            for &red in &reds {
                for &m in &ms {
                    cells.push(
                        ExperimentConfig::new(
                            8,
                            m,
                            CoefficientField::Checkerboard { black: 1.0, red },
                        )
                        .with_beta(beta),
                    );
                }
            }
            TableSpec {
                id,
                title: format!("M = 8, rho_b = 1, beta = {beta}"),
                row_label: "rho_r".into(),
                col_label: "m".into(),
                rows: reds.iter().map(|&r| fmt_rho(r)).collect(),
                cols: labels(&ms),
                cells,
            }
        }
        _ => {
            return Err(Error::InvalidConfig(format!(
                "table id must be between 1 and 5, got {id}"
            )))
        }
    };
    Ok(spec)
}

/// Runs every cell of a table; rows come back in grid order.
pub fn reproduce_table(
    spec: &TableSpec,
    adjust: impl Fn(&mut ExperimentConfig) + Sync,
) -> Result<Vec<ResultRow>> {
    spec.cells
        .par_iter()
        .map(|c| {
            let mut c = c.clone();
            adjust(&mut c);
            run_case(&c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    Csv,
    Json,
    Pretty,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "pretty" => Ok(OutputFormat::Pretty),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

/// Formats rows; `table` selects the grid layout for pretty output.
pub fn emit(rows: &[ResultRow], format: OutputFormat, table: Option<&TableSpec>) -> Result<String> {
    match format {
        OutputFormat::Csv => {
            let mut s = String::from(CSV_HEADER);
            s.push('\n');
            for r in rows {
                s.push_str(&r.csv_line());
                s.push('\n');
            }
            Ok(s)
        }
        OutputFormat::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
        OutputFormat::Pretty => Ok(match table {
            Some(t) => pretty_grid(t, rows),
            None => {
                let mut s = String::new();
                for r in rows {
                    let _ = writeln!(
                        s,
                        "M={} m={} rho_b={} rho_r={} beta={}: {}",
                        r.n,
                        r.m,
                        r.rho_b,
                        r.rho_r,
                        r.beta,
                        r.cell()
                    );
                }
                s
            }
        }),
    }
}

fn pretty_grid(t: &TableSpec, rows: &[ResultRow]) -> String {
    let width = 12;
    let mut s = String::new();
    let _ = writeln!(s, "Table {}: {}", t.id, t.title);
    let _ = write!(s, "{:>8} |", format!("{}\\{}", t.row_label, t.col_label));
    for c in &t.cols {
        let _ = write!(s, "{c:>width$}");
    }
    s.push('\n');
    let _ = writeln!(s, "{}", "-".repeat(10 + width * t.cols.len()));
    for (ri, label) in t.rows.iter().enumerate() {
        let _ = write!(s, "{label:>8} |");
        for ci in 0..t.cols.len() {
            let cell = rows
                .get(ri * t.cols.len() + ci)
                .map(ResultRow::cell)
                .unwrap_or_default();
            let _ = write!(s, "{cell:>width$}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ResultRow {
        ResultRow {
            n: 4,
            m: 4,
            delta: 10.0,
            beta: 1.0,
            rho_b: 1.0,
            rho_r: 1000.0,
            iters: 13,
            cond: 2.2812345678,
            lmin: 1.0000001,
            lmax: 2.28,
            residual: 3.5e-12,
            converged: true,
            seconds: 0.25,
            jump: 0.0,
            direct_error: None,
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let s = emit(&[], OutputFormat::Csv, None).unwrap();
        assert_eq!(s.trim(), CSV_HEADER);
    }

    #[test]
    fn csv_round_trip() {
        let r = row();
        let back = ResultRow::parse_csv_line(&r.csv_line()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn unknown_format() {
        assert!(matches!(
            "xml".parse::<OutputFormat>(),
            Err(Error::UnknownFormat(_))
        ));
        assert_eq!(
            "Pretty".parse::<OutputFormat>().unwrap(),
            OutputFormat::Pretty
        );
    }

    #[test]
    fn table_grids() {
        assert_eq!(table_spec(1).unwrap().cells.len(), 9);
        assert_eq!(table_spec(3).unwrap().cells.len(), 36);
        assert_eq!(table_spec(5).unwrap().cells[0].beta, 10.0);
        assert!(table_spec(6).is_err());
        let t = table_spec(1).unwrap();
        let rows = vec![row(); 9];
        let s = emit(&rows, OutputFormat::Pretty, Some(&t)).unwrap();
        assert_eq!(s.lines().count(), 3 + 3);
        assert!(s.contains("13 (2.28)"));
    }

    #[test]
    fn small_run() {
        let mut c = ExperimentConfig::new(2, 2, CoefficientField::Constant(1.0));
        c.check_direct = true;
        let r = run_case(&c).unwrap();
        assert!(r.converged);
        assert!(r.residual < 1e-8);
        assert!(r.direct_error.unwrap() < 1e-8);
        assert!(r.lmin >= 1.0 - 1e-6);
    }
}
