//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::analysis::{
    beta_from_gap_ratio, critical_disorder, loglog_slope, omega_uv, one_over_omega_prefactor,
    tail_slope_prediction, thouless_exponent, thouless_max_curvature, thouless_sum_rule,
    uv_weight_fraction,
};
use crate::error::{Error, Result};
use crate::runner::aggregate::{curve_path, histogram_from_curve, read_curve, read_summary};
use crate::runner::{aggregate_dir, run_ensemble, RunConfig};
use crate::strongdisorder::{asymptote_zeta_with, log_w_prefactor};

#[derive(Debug, Parser)]
#[command(name = "xxzloc", version, about = "Exact diagonalization of the disordered XXZ chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run (or resume) the sweep described by a config file.
    Run(RunArgs),
    /// Rebuild summary tables from the records in an output directory.
    Aggregate {
        dir: PathBuf,
        /// Bin width of the log-susceptibility histograms.
        #[arg(long)]
        zeta_bin_width: Option<f64>,
    },
    /// Fit a summary table; without a selector every fit is reported.
    Fit(FitArgs),
    /// Strong-disorder prefactor C(L) and the asymptote -C log W + B.
    Oracle {
        #[arg(long = "L", value_name = "SITES")]
        sites: usize,
        /// Intercept B of the asymptote curve.
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        #[arg(long, default_value_t = 1e3)]
        w_min: f64,
        #[arg(long, default_value_t = 1e5)]
        w_max: f64,
        #[arg(long, default_value_t = 5)]
        points: usize,
    },
    /// Run the built-in closed-form checks.
    Selftest,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Override the output directory of the config.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Override the worker count (the XXZLOC_WORKERS variable wins over both).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Lift the memory guard.
    #[arg(long)]
    pub allow_large: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// A summary.csv written by `run` or `aggregate`. Optional for --wstar
    /// when --alpha, --ratio-uv and --L are all given.
    pub summary: Option<PathBuf>,
    /// Log-log slope of the mean spectrum over [10 spacing, omega_uv] and the 1/omega prefactor.
    #[arg(long)]
    pub slope: bool,
    /// Thouless energies (max curvature and sum rule) and their W dependence.
    #[arg(long)]
    pub thouless: bool,
    /// Measured P(z) tail rate against (1 + beta) / (2 + alpha).
    #[arg(long)]
    pub tail: bool,
    /// Critical disorder W*(L) = (L log 2 - log ratio_uv) / alpha.
    #[arg(long)]
    pub wstar: bool,
    /// Decay constant for --wstar; defaults to 1/(8C) with C fitted from the data.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ratio Omega_uv / omega_uv for --wstar; defaults to bandwidth / omega_uv.
    #[arg(long)]
    pub ratio_uv: Option<f64>,
    /// Chain lengths for --wstar; defaults to those in the summary.
    #[arg(long = "L", value_name = "SITES", value_delimiter = ',')]
    pub sites: Vec<usize>,
    /// omega_uv = uv_scale / W.
    #[arg(long, default_value_t = 0.1)]
    pub uv_scale: f64,
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Run(a) => {
            let mut cfg = RunConfig::load(&a.config)?;
            if let Some(o) = a.output {
                cfg.output = o;
            }
            if a.workers.is_some() {
                cfg.workers = a.workers;
            }
            cfg.allow_large |= a.allow_large;
            let report = run_ensemble(&cfg)?;
            writeln!(
                out,
                "computed {} realizations ({} failed), {} already present; {} summary rows in {}",
                report.computed,
                report.failed,
                report.skipped,
                report.summaries.len(),
                cfg.output.display()
            )
            .map_err(io_out)?;
            Ok(0)
        }
        Command::Aggregate {
            dir,
            zeta_bin_width,
        } => {
            let s = aggregate_dir(&dir, zeta_bin_width)?;
            writeln!(out, "wrote {} summary rows to {}", s.len(), dir.display()).map_err(io_out)?;
            Ok(0)
        }
        Command::Fit(a) => fit(&a, out),
        Command::Oracle {
            sites,
            b,
            w_min,
            w_max,
            points,
        } => {
            let curve = log_w_prefactor(sites)?;
            writeln!(out, "C({sites}) = {}", curve.c_of_l).map_err(io_out)?;
            for (i, t) in curve.terms.iter().enumerate() {
                writeln!(out, "term[{}] = {t}", i + 1).map_err(io_out)?;
            }
            writeln!(out, "W,zeta").map_err(io_out)?;
            let n = points.max(1);
            for k in 0..n {
                let w = if n == 1 {
                    w_min
                } else {
                    w_min * (w_max / w_min).powf(k as f64 / (n - 1) as f64)
                };
                writeln!(out, "{w},{}", asymptote_zeta_with(curve.c_of_l, w, b)).map_err(io_out)?;
            }
            Ok(0)
        }
        Command::Selftest => {
            let results = crate::selftest::run_selftest();
            let mut failed = 0;
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                writeln!(out, "{tag} {}: {}", r.name, r.detail).map_err(io_out)?;
                failed += usize::from(!r.passed);
            }
            writeln!(out, "{} of {} checks passed", results.len() - failed, results.len())
                .map_err(io_out)?;
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}

fn emit(out: &mut dyn Write, value: serde_json::Value) -> Result<()> {
    writeln!(out, "{value}").map_err(io_out)
}

fn fit(a: &FitArgs, out: &mut dyn Write) -> Result<i32> {
    let rows = match &a.summary {
        Some(p) => read_summary(p)?,
        None if a.wstar && a.alpha.is_some() && a.ratio_uv.is_some() && !a.sites.is_empty() => Vec::new(),
        None => {
            return Err(Error::invalid(
                "a summary file is required unless --wstar is given with --alpha, --ratio-uv and --L",
            ))
        }
    };
    let all = !(a.slope || a.thouless || a.tail || a.wstar);
    let mut prefactors = Vec::new();
    let mut thouless: std::collections::BTreeMap<usize, Vec<(f64, f64)>> = Default::default();
    for row in &rows {
        let uv = omega_uv(row.w, a.uv_scale);
        let curve_file = curve_path(a.summary.as_deref().unwrap_or(Path::new(".")), row);
        let hist = if curve_file.exists() {
            Some(histogram_from_curve(&read_curve(&curve_file)?, row.norm)?)
        } else {
            None
        };
        let spacing = row.mean_spacing.unwrap_or(f64::NAN);
        let window = (10.0 * spacing, uv);
        if all || a.slope {
            let mut rec = json!({"fit": "slope", "sites": row.sites, "w": row.w,
                "window": [window.0, window.1]});
            if let Some(h) = &hist {
                match loglog_slope(h, window) {
                    Ok(f) => {
                        rec["slope"] = json!(f.slope);
                        rec["points"] = json!(f.points);
                    }
                    Err(e) => rec["slope_error"] = json!(e.to_string()),
                }
                match one_over_omega_prefactor(h, row.w, window) {
                    Ok(c) => {
                        prefactors.push(c);
                        rec["prefactor"] = json!(c);
                    }
                    Err(e) => rec["prefactor_error"] = json!(e.to_string()),
                }
                if let Ok(f) = uv_weight_fraction(h, uv) {
                    rec["uv_weight_fraction"] = json!(f);
                }
            }
            emit(out, rec)?;
        }
        if all || a.thouless {
            let mut rec = json!({"fit": "thouless", "sites": row.sites, "w": row.w});
            if let Some(h) = &hist {
                match thouless_max_curvature(h, (spacing, uv)) {
                    Ok(t) => {
                        rec["max_curvature"] = json!(t.omega_th);
                        thouless.entry(row.sites).or_default().push((row.w, t.omega_th));
                    }
                    Err(e) => rec["max_curvature_error"] = json!(e.to_string()),
                }
                match thouless_sum_rule(h, row.w, uv, window) {
                    Ok(t) => rec["sum_rule"] = json!(t.omega_th),
                    Err(e) => rec["sum_rule_error"] = json!(e.to_string()),
                }
            }
            emit(out, rec)?;
        }
        if all || a.tail {
            let mut rec = json!({"fit": "tail", "sites": row.sites, "w": row.w,
                "measured_rate": row.tail_slope.map(|s| -s)});
            if let Some(r) = row.mean_gap_ratio {
                let beta = beta_from_gap_ratio(r);
                let alpha = hist
                    .as_ref()
                    .and_then(|h| loglog_slope(h, window).ok())
                    .map_or(0.0, |f| (-f.slope).clamp(0.0, 1.0));
                let model = tail_slope_prediction(beta, alpha)?;
                rec["beta"] = json!(beta);
                rec["alpha"] = json!(alpha);
                rec["predicted_rate"] = json!(model.predicted);
            }
            emit(out, rec)?;
        }
    }
    if all || a.thouless {
        for (sites, pts) in &thouless {
            if pts.len() >= 2 {
                let ws: Vec<f64> = pts.iter().map(|p| p.0).collect();
                let os: Vec<f64> = pts.iter().map(|p| p.1).collect();
                if let Ok((alpha, _)) = thouless_exponent(&ws, &os) {
                    emit(out, json!({"fit": "thouless_exponent", "sites": sites, "alpha_prime": alpha}))?;
                }
            }
        }
    }
    if all || a.wstar {
        let alpha = match a.alpha {
            Some(al) => al,
            None => match crate::stats::median(&prefactors) {
                Some(c) => crate::analysis::alpha_from_prefactor(c),
                None if a.wstar => {
                    return Err(Error::NotInRegime(
                        "no 1/omega prefactor could be fitted; pass --alpha".into(),
                    ))
                }
                None => return Ok(0),
            },
        };
        let ratio = match a.ratio_uv {
            Some(r) => r,
            None => {
                let ratios: Vec<f64> = rows
                    .iter()
                    .filter_map(|r| r.bandwidth.map(|b| b / omega_uv(r.w, a.uv_scale)))
                    .collect();
                crate::stats::median(&ratios).unwrap_or(1.0).max(1.0)
            }
        };
        let mut sites: Vec<usize> = if a.sites.is_empty() {
            rows.iter().map(|r| r.sites).collect()
        } else {
            a.sites.clone()
        };
        sites.sort_unstable();
        sites.dedup();
        let slope = std::f64::consts::LN_2 / alpha;
        let offset = ratio.ln() / alpha;
        writeln!(out, "W*(L) = {slope}*L - {offset}  (alpha = {alpha}, ratio_uv = {ratio})")
            .map_err(io_out)?;
        for l in sites {
            let w = critical_disorder(l as f64, alpha, ratio)?;
            emit(out, json!({"fit": "wstar", "sites": l, "alpha": alpha, "ratio_uv": ratio, "w_star": w}))?;
        }
    }
    Ok(0)
}

/// Entry point of the binary.
pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut out = std::io::stdout();
    let mut err = std::io::stderr();
    run_cli(std::env::args_os(), &mut out, &mut err)
}
