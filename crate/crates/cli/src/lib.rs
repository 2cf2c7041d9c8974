//! Job runner behind the `saddlerisk` binary. Every job returns its whole
//! output as a string, so a failing job never leaves a partial file behind.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use saddlerisk::contrib::{risk_report, RiskReport};
use saddlerisk::mixer::{
    clt_density, clt_esf, clt_tail, distribution_curve, granularity_adjust, solve_var, Method, Mixture,
};
use saddlerisk::model::{load_portfolio, FactorModel, Portfolio};
use saddlerisk::oracle::{mixed_exact, monte_carlo, LossGrid, MonteCarlo};
use saddlerisk::quadrature::Quadrature;
use saddlerisk::saddle::{SaddleOptions, Side};
use saddlerisk::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Gauss,
    Crp,
    Indep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Job {
    Dist,
    Var,
    Esf,
    Contrib,
    Hessian,
    Ga,
    Compare,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodKind {
    Sp,
    Clt,
    Exact,
    Mc,
}

/// Saddlepoint credit-portfolio risk: distribution, VaR, shortfall,
/// contributions, Hessian and reference comparisons.
#[derive(Debug, Clone, Parser)]
#[command(name = "saddlerisk", version)]
pub struct Cli {
    /// Portfolio CSV with header `id,exposure,pd,beta`.
    #[arg(long)]
    pub portfolio: PathBuf,
    #[arg(long, value_enum, default_value = "gauss")]
    pub model: ModelKind,
    /// Replace every asset's factor loading.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Volatility of the default-rate scaling in the `crp` model.
    #[arg(long, default_value_t = 1.0)]
    pub sigma_f: f64,
    /// Gauss-Hermite nodes.
    #[arg(long, default_value_t = 99)]
    pub nodes: usize,
    #[arg(long, value_enum, default_value = "dist")]
    pub job: Job,
    /// Upper tail probabilities, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "levels_loss")]
    pub levels_prob: Option<Vec<f64>>,
    /// Loss thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub levels_loss: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "sp")]
    pub method: MethodKind,
    /// Monte Carlo paths.
    #[arg(long, default_value_t = 1_000_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Levels {
    Prob(Vec<f64>),
    Loss(Vec<f64>),
    Default,
}

/// A validated job.
#[derive(Debug, Clone)]
pub struct JobConfig {
    pub portfolio_path: PathBuf,
    pub portfolio: Portfolio,
    pub model: FactorModel,
    pub model_kind: ModelKind,
    pub beta: Option<f64>,
    pub nodes: usize,
    pub job: Job,
    pub levels: Levels,
    pub method: MethodKind,
    pub paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Numeric(Error),
    /// A result failed its own consistency check.
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) | CliError::Check(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "ConfigError: {msg}"),
            CliError::Numeric(e) => write!(f, "{}: {e}", e.name()),
            CliError::Check(msg) => write!(f, "CheckFailed: {msg}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Numeric(e)
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Errors in what the user supplied, as opposed to failures of a computation.
fn input_error(e: Error) -> CliError {
    match e {
        Error::InvalidInput(_)
        | Error::InvalidAsset { .. }
        | Error::DuplicateId(_)
        | Error::Parse { .. }
        | Error::Io(_) => CliError::Config(format!("{}: {e}", e.name())),
        e => CliError::Numeric(e),
    }
}

impl JobConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        if cli.nodes == 0 {
            return Err(config("--nodes must be positive"));
        }
        let mut portfolio = load_portfolio(&cli.portfolio).map_err(input_error)?;
        if let Some(beta) = cli.beta {
            portfolio = portfolio.with_loading(beta).map_err(input_error)?;
        }
        let model = match cli.model {
            ModelKind::Gauss => FactorModel::GaussianCopula,
            ModelKind::Indep => FactorModel::Independent,
            ModelKind::Crp => FactorModel::CreditRiskPlusScaled { sigma: cli.sigma_f },
        };
        model.validate().map_err(input_error)?;
        let levels = match (&cli.levels_prob, &cli.levels_loss) {
            (Some(_), Some(_)) => return Err(config("--levels-prob and --levels-loss are mutually exclusive")),
            (Some(p), None) => {
                if let Some(bad) = p.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
                    return Err(config(format!("tail probability {bad} not in (0, 1)")));
                }
                Levels::Prob(p.clone())
            }
            (None, Some(y)) => {
                if let Some(bad) = y.iter().find(|x| !x.is_finite()) {
                    return Err(config(format!("loss level {bad} is not finite")));
                }
                Levels::Loss(y.clone())
            }
            (None, None) => Levels::Default,
        };
        let method_ok = match cli.job {
            Job::Dist | Job::Var | Job::Esf => true,
            Job::Contrib | Job::Hessian => matches!(cli.method, MethodKind::Sp | MethodKind::Clt),
            Job::Ga | Job::Compare | Job::Mc => true,
        };
        if !method_ok {
            return Err(config(format!("job {} supports --method sp or clt", flag(cli.job))));
        }
        let needs_mc = cli.job == Job::Mc || cli.job == Job::Compare || cli.method == MethodKind::Mc;
        if needs_mc && cli.paths < 10_000 {
            return Err(config(format!("--paths must be at least 10000, got {}", cli.paths)));
        }
        Ok(JobConfig {
            portfolio_path: cli.portfolio.clone(),
            portfolio,
            model,
            model_kind: cli.model,
            beta: cli.beta,
            nodes: cli.nodes,
            job: cli.job,
            levels,
            method: cli.method,
            paths: cli.paths,
            seed: cli.seed,
        })
    }

    fn probabilities(&self) -> Result<Vec<f64>, CliError> {
        match &self.levels {
            Levels::Prob(p) => Ok(p.clone()),
            Levels::Default => Ok(vec![0.05, 0.01, 0.001]),
            Levels::Loss(_) => Err(config(format!("job {} needs --levels-prob", flag(self.job)))),
        }
    }
}

/// Twelve significant digits.
fn num(x: f64) -> String {
    format!("{x:.11e}")
}

struct Table {
    out: String,
}

impl Table {
    fn new(cfg: &JobConfig, columns: &[&str]) -> Self {
        let mut out = String::new();
        let _ = writeln!(out, "# saddlerisk {}", env!("CARGO_PKG_VERSION"));
        let levels = match &cfg.levels {
            Levels::Prob(p) => format!("prob:{}", join(p)),
            Levels::Loss(y) => format!("loss:{}", join(y)),
            Levels::Default => "default".to_string(),
        };
        let _ = writeln!(
            out,
            "# portfolio={} assets={} model={} beta={} nodes={} job={} method={} levels={} paths={} seed={}",
            cfg.portfolio_path.display(),
            cfg.portfolio.len(),
            flag(cfg.model_kind),
            cfg.beta.map_or("file".to_string(), |b| b.to_string()),
            cfg.nodes,
            flag(cfg.job),
            flag(cfg.method),
            levels,
            cfg.paths,
            cfg.seed
        );
        let mut t = Table { out };
        t.row(columns.iter().map(|c| c.to_string()));
        t
    }

    fn row(&mut self, cells: impl IntoIterator<Item = String>) {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let cells: Vec<String> = cells.into_iter().collect();
        w.write_record(&cells).expect("writing to memory");
        let bytes = w.into_inner().expect("writing to memory");
        self.out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    }

    fn nums(&mut self, xs: &[f64]) {
        self.row(xs.iter().map(|&x| num(x)));
    }

    fn comment(&mut self, text: &str) {
        let _ = writeln!(self.out, "# {text}");
    }
}

fn flag(v: impl ValueEnum) -> String {
    v.to_possible_value().map_or_else(String::new, |p| p.get_name().to_string())
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

struct Engine<'a> {
    cfg: &'a JobConfig,
    quad: Quadrature,
    opts: SaddleOptions,
}

impl<'a> Engine<'a> {
    fn pf(&self) -> &Portfolio {
        &self.cfg.portfolio
    }

    fn exact(&self) -> Result<LossGrid, CliError> {
        mixed_exact(self.pf(), &self.cfg.model, &self.quad).map_err(CliError::from)
    }

    fn mc(&self) -> Result<MonteCarlo, CliError> {
        monte_carlo(self.pf(), &self.cfg.model, self.cfg.paths, self.cfg.seed).map_err(CliError::from)
    }

    fn var(&self, p: f64, method: MethodKind) -> Result<f64, CliError> {
        let m = &self.cfg.model;
        Ok(match method {
            MethodKind::Sp => solve_var(self.pf(), m, &self.quad, p, Method::Saddlepoint, self.opts)?,
            MethodKind::Clt => solve_var(self.pf(), m, &self.quad, p, Method::Clt, self.opts)?,
            MethodKind::Exact => self.exact()?.var(p)?,
            MethodKind::Mc => self.mc()?.quantile(p),
        })
    }

    /// Default threshold grid: 50 points strictly inside the loss range.
    fn loss_grid(&self) -> Vec<f64> {
        let top = self.pf().max_loss();
        (1..=50).map(|k| top * k as f64 / 51.0).collect()
    }

    fn thresholds(&self) -> Result<Vec<f64>, CliError> {
        match &self.cfg.levels {
            Levels::Loss(y) => Ok(y.clone()),
            Levels::Default => Ok(self.loss_grid()),
            Levels::Prob(p) => p.iter().map(|&p| self.var(p, self.cfg.method)).collect(),
        }
    }

    fn dist(&self) -> Result<String, CliError> {
        let ys = self.thresholds()?;
        let mut t = Table::new(self.cfg, &["y", "tail", "density", "esf"]);
        let m = &self.cfg.model;
        match self.cfg.method {
            MethodKind::Sp => {
                for p in distribution_curve(self.pf(), m, &self.quad, &ys, self.opts)?.points {
                    t.nums(&[p.y, p.tail, p.density, p.esf]);
                }
            }
            MethodKind::Clt => {
                for &y in &ys {
                    let tail = clt_tail(self.pf(), m, &self.quad, y);
                    let density = clt_density(self.pf(), m, &self.quad, y);
                    t.nums(&[y, tail, density, clt_esf(self.pf(), m, &self.quad, y)?.0]);
                }
            }
            MethodKind::Exact => {
                let grid = self.exact()?;
                let q = grid.quantum();
                for &y in &ys {
                    let k = (y / q).round();
                    let mass = if (y / q - k).abs() < 1e-9 { grid.probs().get(k as usize).copied().unwrap_or(0.0) } else { 0.0 };
                    t.nums(&[y, grid.tail(y), mass / q, grid.esf(y)]);
                }
            }
            MethodKind::Mc => {
                let mc = self.mc()?;
                let h = self.pf().max_loss() / 100.0;
                for &y in &ys {
                    let density = (mc.tail(y - h).value - mc.tail(y + h).value) / (2.0 * h);
                    t.nums(&[y, mc.tail(y).value, density, mc.esf(y).value]);
                }
            }
        }
        Ok(t.out)
    }

    fn var_esf(&self, with_esf: bool) -> Result<String, CliError> {
        let probs = self.cfg.probabilities()?;
        let columns: &[&str] = if with_esf { &["level", "var", "esf"] } else { &["level", "var"] };
        let mut t = Table::new(self.cfg, columns);
        let m = &self.cfg.model;
        let grid = if self.cfg.method == MethodKind::Exact { Some(self.exact()?) } else { None };
        let mc = if self.cfg.method == MethodKind::Mc { Some(self.mc()?) } else { None };
        for &p in &probs {
            let var = match (&grid, &mc) {
                (Some(g), _) => g.var(p)?,
                (_, Some(s)) => s.quantile(p),
                _ => self.var(p, self.cfg.method)?,
            };
            if !with_esf {
                t.nums(&[p, var]);
                continue;
            }
            let esf = match self.cfg.method {
                MethodKind::Sp => Mixture::new(self.pf(), m, &self.quad, var, self.opts)?.esf(Side::Upper)?,
                MethodKind::Clt => clt_esf(self.pf(), m, &self.quad, var)?.0,
                MethodKind::Exact => grid.as_ref().map_or(f64::NAN, |g| g.esf(var)),
                MethodKind::Mc => mc.as_ref().map_or(f64::NAN, |s| s.esf(var).value),
            };
            t.nums(&[p, var, esf]);
        }
        Ok(t.out)
    }

    fn reports(&self) -> Result<Vec<RiskReport>, CliError> {
        let method = match self.cfg.method {
            MethodKind::Clt => Method::Clt,
            _ => Method::Saddlepoint,
        };
        self.cfg
            .probabilities()?
            .iter()
            .map(|&p| risk_report(self.pf(), &self.cfg.model, &self.quad, p, method, self.opts).map_err(CliError::from))
            .collect()
    }

    fn contrib(&self) -> Result<String, CliError> {
        let reports = self.reports()?;
        let mut t = Table::new(self.cfg, &["level", "id", "exposure", "var_delta", "esf_sys", "esf_unsys", "esf_total"]);
        let assets = self.pf().assets();
        let a = self.pf().exposures();
        for r in &reports {
            let total = r.esf_delta();
            for (j, asset) in assets.iter().enumerate() {
                t.row([
                    num(r.level),
                    asset.id.clone(),
                    num(a[j]),
                    num(r.var_delta[j]),
                    num(r.esf_delta_systematic[j]),
                    num(r.esf_delta_unsystematic[j]),
                    num(total[j]),
                ]);
            }
            let dot = |d: &[f64]| a.iter().zip(d).map(|(x, y)| x * y).sum::<f64>();
            let (sum_var, sum_esf) = (dot(&r.var_delta), dot(&total));
            t.row([
                num(r.level),
                "total".to_string(),
                num(a.iter().sum()),
                num(sum_var),
                num(dot(&r.esf_delta_systematic)),
                num(dot(&r.esf_delta_unsystematic)),
                num(sum_esf),
            ]);
            let var_err = (sum_var - r.var).abs() / r.var.abs();
            let esf_err = (sum_esf - r.esf).abs() / r.esf.abs();
            t.comment(&format!(
                "level={} var={} esf={} homogeneity rel_err var={} esf={}",
                num(r.level),
                num(r.var),
                num(r.esf),
                num(var_err),
                num(esf_err)
            ));
            if !(var_err <= 1e-9 && esf_err <= 1e-9) {
                return Err(CliError::Check(format!(
                    "homogeneity at level {}: VaR {var_err:e}, ESF {esf_err:e}",
                    r.level
                )));
            }
        }
        Ok(t.out)
    }

    fn hessian(&self) -> Result<String, CliError> {
        let reports = self.reports()?;
        let assets = self.pf().assets();
        let mut columns = vec!["level", "id"];
        columns.extend(assets.iter().map(|a| a.id.as_str()));
        let mut t = Table::new(self.cfg, &columns);
        for r in &reports {
            let h = &r.esf_hessian;
            for (j, asset) in assets.iter().enumerate() {
                let mut cells = vec![num(r.level), asset.id.clone()];
                cells.extend(h.row(j).iter().map(|&x| num(x)));
                t.row(cells);
            }
        }
        Ok(t.out)
    }

    fn ga(&self) -> Result<String, CliError> {
        let probs = self.cfg.probabilities()?;
        let mut t = Table::new(self.cfg, &["level", "var_infinite", "var_adjusted", "esf_infinite", "esf_adjusted"]);
        for &p in &probs {
            let g = granularity_adjust(self.pf(), &self.cfg.model, &self.quad, p)?;
            t.nums(&[p, g.var_infinite, g.var_adjusted, g.esf_infinite, g.esf_adjusted]);
        }
        Ok(t.out)
    }

    fn compare(&self) -> Result<String, CliError> {
        let grid = self.exact()?;
        let mc = self.mc()?;
        let ys = match &self.cfg.levels {
            Levels::Loss(y) => y.clone(),
            _ => self.cfg.probabilities()?.iter().map(|&p| grid.nearest_level(p)).collect(),
        };
        let mut t = Table::new(
            self.cfg,
            &[
                "y", "exact", "sp", "clt", "mc", "mc_se", "sp_rel_err", "clt_rel_err", "sp_outside_mc", "clt_outside_mc",
            ],
        );
        let m = &self.cfg.model;
        for &y in &ys {
            let exact = grid.tail(y);
            let sp = Mixture::new(self.pf(), m, &self.quad, y, self.opts)?.tail(Side::Upper);
            let clt = clt_tail(self.pf(), m, &self.quad, y);
            let est = mc.tail(y);
            let flag = |x: f64| if est.contains(x, 3.0) { "0" } else { "1" }.to_string();
            t.row([
                num(y),
                num(exact),
                num(sp),
                num(clt),
                num(est.value),
                num(est.std_error),
                num(sp / exact - 1.0),
                num(clt / exact - 1.0),
                flag(sp),
                flag(clt),
            ]);
        }
        Ok(t.out)
    }

    fn monte_carlo(&self) -> Result<String, CliError> {
        let mc = self.mc()?;
        let mut t = Table::new(self.cfg, &["level", "y", "tail", "tail_se", "esf", "esf_se"]);
        let rows: Vec<(f64, f64)> = match &self.cfg.levels {
            Levels::Loss(y) => y.iter().map(|&y| (mc.tail(y).value, y)).collect(),
            _ => self.cfg.probabilities()?.iter().map(|&p| (p, mc.quantile(p))).collect(),
        };
        for (level, y) in rows {
            let (tail, esf) = (mc.tail(y), mc.esf(y));
            t.nums(&[level, y, tail.value, tail.std_error, esf.value, esf.std_error]);
        }
        Ok(t.out)
    }
}

/// Run one job and return the CSV text.
pub fn run(cfg: &JobConfig) -> Result<String, CliError> {
    let engine = Engine {
        cfg,
        quad: Quadrature::gauss_hermite(cfg.nodes),
        opts: SaddleOptions::default(),
    };
    match cfg.job {
        Job::Dist => engine.dist(),
        Job::Var => engine.var_esf(false),
        Job::Esf => engine.var_esf(true),
        Job::Contrib => engine.contrib(),
        Job::Hessian => engine.hessian(),
        Job::Ga => engine.ga(),
        Job::Compare => engine.compare(),
        Job::Mc => engine.monte_carlo(),
    }
}

/// Run the parsed command line and write the output.
pub fn main_with(cli: &Cli) -> Result<(), CliError> {
    let cfg = JobConfig::from_cli(cli)?;
    let text = run(&cfg)?;
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|e| config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
