//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bandwidth::{amise_report, log_grid, lscv_select, normal_reference, BandwidthReport};
use crate::bias_bench::{benchmark_table, fmt_float, mc_verify_proposition, Weight};
use crate::error::{Error, Result};
use crate::estimate::{fit, DensityEstimate, Method, Renormalized};
use crate::kernels::{KernelKind, KernelSpec};
use crate::mixtures::{self, NormalMixture};
use crate::sample::Sample;

/// Environment variable naming a catalog file that replaces the built-in one.
pub const CATALOG_ENV: &str = "SEMIPAR_CATALOG";

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (bad flags, unsupported method/kernel combination)
  3  input parse or validation error (the message names the line)
  4  numerical failure (non-convergence, singular moments, zero bias)
  5  I/O error";

#[derive(Debug, Parser)]
#[command(name = "semipar", version, about = "Semiparametric kernel density estimation and bias benchmarks", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an estimator to a data file and evaluate it on a grid
    Fit(FitArgs),
    /// Ratio of root integrated squared bias to the kernel method for every catalog density
    BenchTable(TableArgs),
    /// Monte Carlo comparison of pointwise bias and variance with their approximations
    BenchMc(McArgs),
    /// Select a bandwidth by cross-validation or the AMISE oracle
    Bandwidth(BandwidthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Epanechnikov,
}

impl From<KernelArg> for KernelSpec {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Gaussian => KernelSpec::new(KernelKind::Gaussian),
            KernelArg::Epanechnikov => KernelSpec::new(KernelKind::Epanechnikov),
        }
    }
}

/// A bandwidth or `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HArg {
    Value(f64),
    Auto,
}

impl FromStr for HArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(HArg::Auto);
        }
        match s.parse::<f64>() {
            Ok(h) if h > 0.0 && h.is_finite() => Ok(HArg::Value(h)),
            _ => Err(format!("bandwidth must be a positive number or 'auto', got '{s}'")),
        }
    }
}

/// `a:b:n`, `n ≥ 2` equally spaced points from `a` to `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || format!("grid must look like a:b:n, got '{s}'");
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n < 2 {
            return Err(format!("grid needs at least 2 points, got {n}"));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(format!("grid needs finite a < b, got {a}:{b}"));
        }
        Ok(GridSpec { a, b, n })
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                if i + 1 == self.n {
                    self.b
                } else {
                    self.a + (self.b - self.a) * i as f64 / (self.n - 1) as f64
                }
            })
            .collect()
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// data file, one value per line, '#' starts a comment
    #[arg(long)]
    pub input: PathBuf,
    /// kernel, et1..et4, jones, hg, local1, local2
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// bandwidth, or 'auto' for cross-validation around the normal reference
    #[arg(long)]
    pub h: HArg,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    /// evaluation grid a:b:n (default: data range padded by 3h, 201 points)
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<GridSpec>,
    /// CSV output (x, fhat, fhat_prime); fitted parameters go to the same path with extension .json
    #[arg(long)]
    pub output: PathBuf,
    /// divide the estimate by its numerically computed integral
    #[arg(long)]
    pub renormalize: bool,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// catalog JSON (default: $SEMIPAR_CATALOG, else the built-in catalog)
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// CSV output; the aligned text table is always printed to stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// catalog density name
    #[arg(long, default_value = "normal")]
    pub density: String,
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub h: f64,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "-3:3:50", allow_hyphen_values = true)]
    pub grid: GridSpec,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// CSV output (default: stdout)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectorArg {
    Lscv,
    Amise,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    #[arg(long, value_enum)]
    pub selector: SelectorArg,
    #[arg(long, value_parser = parse_method, default_value = "kernel")]
    pub method: Method,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    /// data file (lscv)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// bandwidth grid a:b:steps (lscv; default 25 log-spaced values around the normal reference)
    #[arg(long)]
    pub h_grid: Option<GridSpec>,
    /// catalog density name (amise)
    #[arg(long)]
    pub density: Option<String>,
    /// sample size the oracle bandwidth is computed for (amise)
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// criterion curve CSV (h, criterion)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Execute a parsed command line. Text meant for the terminal is returned
/// rather than printed.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::BenchTable(a) => run_table(a),
        Command::BenchMc(a) => run_mc(a),
        Command::Bandwidth(a) => run_bandwidth(a),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_catalog(flag: Option<&Path>) -> Result<Vec<NormalMixture>> {
    if let Some(p) = flag {
        return mixtures::load_catalog(p);
    }
    match std::env::var_os(CATALOG_ENV) {
        Some(p) if !p.is_empty() => mixtures::load_catalog(Path::new(&p)),
        _ => Ok(mixtures::default_catalog()),
    }
}

fn find_density(catalog: &[NormalMixture], name: &str) -> Result<NormalMixture> {
    mixtures::find(catalog, name).cloned().ok_or_else(|| {
        let names: Vec<&str> = catalog.iter().map(|m| m.name.as_str()).collect();
        Error::invalid(format!("no density named '{name}' in the catalog (have: {})", names.join(", ")))
    })
}

/// LSCV over 25 log-spaced bandwidths from a quarter to four times the
/// normal reference bandwidth.
pub fn auto_bandwidth(data: &Sample, method: Method, k: KernelSpec) -> Result<BandwidthReport> {
    let r = normal_reference(data);
    if !(r > 0.0) {
        return Err(Error::invalid("automatic bandwidth needs a sample with positive spread"));
    }
    lscv_select(data, method, k, &log_grid(0.25 * r, 4.0 * r, 25))
}

fn run_fit(a: FitArgs) -> Result<String> {
    let data = Sample::read(&a.input)?;
    let kernel: KernelSpec = a.kernel.into();
    if a.method.requires_gaussian() && kernel.kind != KernelKind::Gaussian {
        return Err(Error::UnsupportedKernel { method: a.method.name() });
    }
    let (h, selection) = match a.h {
        HArg::Value(h) => (h, None),
        HArg::Auto => {
            let rep = auto_bandwidth(&data, a.method, kernel)?;
            (rep.h_selected, Some(rep))
        }
    };
    let mut est: Arc<dyn DensityEstimate> = fit(a.method, &data, h, kernel)?;
    if a.renormalize {
        est = Arc::new(Renormalized::new(est)?);
    }
    let grid = a.grid.unwrap_or(GridSpec {
        a: data.min() - 3.0 * h,
        b: data.max() + 3.0 * h,
        n: 201,
    });
    let mut csv = String::from("x,fhat,fhat_prime\n");
    for x in grid.points() {
        let e = est.evaluate(x)?;
        let _ = writeln!(csv, "{},{},{}", fmt_float(x), fmt_float(e.value), fmt_float(e.derivative));
    }
    write_file(&a.output, &csv)?;

    let mut meta = est.metadata();
    if let Some(obj) = meta.as_object_mut() {
        obj.insert("input".into(), a.input.display().to_string().into());
        obj.insert("n".into(), data.len().into());
        obj.insert("sample_mean".into(), data.mean().into());
        obj.insert("sample_sd".into(), data.sd().into());
        if let Some(rep) = &selection {
            obj.insert(
                "bandwidth_selection".into(),
                json!({ "selector": rep.selector, "curve": rep.curve, "failed": rep.failed }),
            );
        }
    }
    let sidecar = a.output.with_extension("json");
    let text = serde_json::to_string_pretty(&meta).expect("metadata is plain JSON");
    write_file(&sidecar, &(text + "\n"))?;
    Ok(format!(
        "{} fitted with h = {}; wrote {} and {}\n",
        a.method,
        fmt_float(h),
        a.output.display(),
        sidecar.display()
    ))
}

fn run_table(a: TableArgs) -> Result<String> {
    let catalog = load_catalog(a.catalog.as_deref())?;
    let table = benchmark_table(&catalog)?;
    if let Some(out) = &a.output {
        write_file(out, &table.to_csv())?;
    }
    Ok(table.to_text())
}

fn run_mc(a: McArgs) -> Result<String> {
    let catalog = load_catalog(a.catalog.as_deref())?;
    let m = find_density(&catalog, &a.density)?;
    let kernel: KernelSpec = a.kernel.into();
    if a.method.requires_gaussian() && kernel.kind != KernelKind::Gaussian {
        return Err(Error::UnsupportedKernel { method: a.method.name() });
    }
    if !(a.h > 0.0) || a.n == 0 {
        return Err(Error::invalid("bench-mc needs h > 0 and n >= 1"));
    }
    let report = mc_verify_proposition(&m, a.method, kernel, a.n, a.h, a.reps, a.seed, &a.grid.points())?;
    let csv = report.to_csv();
    let within = report.rows.iter().filter(|r| r.z_bias.abs() <= 4.0).count();
    let summary = format!(
        "{} / {}: {} of {} grid points have |z_bias| <= 4; {} of {} replicates failed\n",
        report.density,
        report.method,
        within,
        report.rows.len(),
        report.failures,
        report.reps
    );
    match &a.output {
        Some(out) => {
            write_file(out, &csv)?;
            Ok(summary)
        }
        None => Ok(csv),
    }
}

fn run_bandwidth(a: BandwidthArgs) -> Result<String> {
    let kernel: KernelSpec = a.kernel.into();
    let report = match a.selector {
        SelectorArg::Lscv => {
            let input = a
                .input
                .as_ref()
                .ok_or_else(|| Error::invalid("--selector lscv needs --input"))?;
            let data = Sample::read(input)?;
            match a.h_grid {
                Some(g) => lscv_select(&data, a.method, kernel, &g.points())?,
                None => auto_bandwidth(&data, a.method, kernel)?,
            }
        }
        SelectorArg::Amise => {
            let name = a
                .density
                .as_deref()
                .ok_or_else(|| Error::invalid("--selector amise needs --density"))?;
            let n = a.n.ok_or_else(|| Error::invalid("--selector amise needs --n"))?;
            let catalog = load_catalog(a.catalog.as_deref())?;
            let m = find_density(&catalog, name)?;
            amise_report(&m, a.method, &kernel, n, Weight::Unit)?
        }
    };
    if let Some(out) = &a.output {
        write_file(out, &report.curve_csv())?;
    }
    let mut s = format!("{}\n", fmt_float(report.h_selected));
    for (h, why) in &report.failed {
        let _ = writeln!(s, "# h = {h}: {why}");
    }
    Ok(s)
}
