//! `resq`: fit censored residual-life quantile regressions on CSV data and
//! run the Monte Carlo / estimator-comparison harness.
//!
//! Exit codes: 0 success, 2 parse or validation error, 3 unidentifiable
//! model, 4 non-convergence.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use resq_core::{
    calibrate_censoring, compare_estimators, fit, generate_dataset, run_monte_carlo,
    CovariateLaw, Error as CoreError, FitSpec, HPolicy, SimScenario, Subject, SurvivalSample,
    Weighting,
};

#[derive(Parser)]
#[command(name = "resq", version, about = "Quantile regression for censored residual lifetimes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a model to a CSV dataset (header: time,status,<covariates...>).
    Fit(FitArgs),
    /// Run a Monte Carlo simulation grid and summarize PE/ESE/SD/CP.
    Simulate(SimArgs),
    /// Paired non-smooth vs smoothed estimates on simulated replicates.
    Compare(SimArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Li,
    Kim,
}

#[derive(Clone, Copy, ValueEnum)]
enum HPolicyArg {
    Fixed,
    Iterative,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Tsv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum CovariateLawArg {
    Bernoulli,
    Uniform,
}

#[derive(Args)]
struct SpecArgs {
    /// Quantile level in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Weighting scheme for the estimating function.
    #[arg(long, value_enum, default_value_t = WeightingArg::Li)]
    weighting: WeightingArg,
    /// Bandwidth policy: fixed identity or the full iterative update.
    #[arg(long = "h-policy", value_enum, default_value_t = HPolicyArg::Fixed)]
    h_policy: HPolicyArg,
    /// Multiplier resamples for the covariance estimate.
    #[arg(long, default_value_t = 200)]
    resamples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 100)]
    max_iter: usize,
}

impl SpecArgs {
    fn to_spec(&self, t0: f64) -> FitSpec {
        let mut spec = FitSpec::new(self.tau, t0);
        spec.weighting = match self.weighting {
            WeightingArg::Li => Weighting::Li,
            WeightingArg::Kim => Weighting::Kim,
        };
        spec.h_policy = match self.h_policy {
            HPolicyArg::Fixed => HPolicy::FixedIdentity,
            HPolicyArg::Iterative => HPolicy::Iterative,
        };
        spec.resample_m = self.resamples;
        spec.seed = self.seed;
        spec.tol = self.tol;
        spec.max_iter = self.max_iter;
        spec
    }

    fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("tau".into(), self.tau.to_string()),
            (
                "weighting".into(),
                match self.weighting {
                    WeightingArg::Li => "li".into(),
                    WeightingArg::Kim => "kim".into(),
                },
            ),
            (
                "h-policy".into(),
                match self.h_policy {
                    HPolicyArg::Fixed => "fixed".into(),
                    HPolicyArg::Iterative => "iterative".into(),
                },
            ),
            ("resamples".into(), self.resamples.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("tol".into(), self.tol.to_string()),
            ("max-iter".into(), self.max_iter.to_string()),
        ]
    }
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV path.
    input: PathBuf,
    /// Horizon t0; the model targets log residual life beyond it.
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[command(flatten)]
    spec: SpecArgs,
    /// Confidence level for Wald intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, value_enum, default_value_t = FormatArg::Tsv)]
    format: FormatArg,
    /// Output path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Flat key=value scenario file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated horizons, e.g. "0,1,2,3".
    #[arg(long = "t0-list")]
    t0_list: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long = "beta0-base")]
    beta0_base: Option<f64>,
    #[arg(long = "beta1-base")]
    beta1_base: Option<f64>,
    #[arg(long = "censor-target")]
    censor_target: Option<f64>,
    #[arg(long = "covariate-law", value_enum)]
    covariate_law: Option<CovariateLawArg>,
    #[arg(long)]
    reps: Option<usize>,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum, default_value_t = FormatArg::Tsv)]
    format: FormatArg,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Directory for per-replicate CSV dumps (simulate only).
    #[arg(long = "emit-data")]
    emit_data: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn from_core(err: CoreError) -> Self {
        let code = match err {
            CoreError::Unidentifiable { .. } | CoreError::EmptyRiskSet { .. } => 3,
            CoreError::MaxIterExceeded { .. } => 4,
            _ => 2,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("RESQ_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Fit(args) => cmd_fit(&args),
        Cmd::Simulate(args) => cmd_simulate(&args),
        Cmd::Compare(args) => cmd_compare(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn write_output(path: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| Failure::parse(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            std::io::stdout()
                .flush()
                .map_err(|e| Failure::parse(format!("stdout: {e}")))
        }
    }
}

fn comment_header(cmd: &str, entries: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(&format!("# {cmd} {k}={v}\n"));
    }
    out
}

// ---------------------------------------------------------------------------
// fit

fn read_csv(path: &Path) -> Result<SurvivalSample, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[0] != "time" || cols[1] != "status" {
        return Err(Failure::parse(format!(
            "{}: header must start with `time,status`, found `{}`",
            path.display(),
            cols.join(",")
        )));
    }
    let covariate_names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
    let p = covariate_names.len();

    let mut subjects = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| Failure::parse(format!("line {line}: {e}")))?;
        if record.len() != p + 2 {
            return Err(Failure::parse(format!(
                "line {line}: expected {} fields, found {}",
                p + 2,
                record.len()
            )));
        }
        let field = |j: usize, what: &str| -> Result<f64, Failure> {
            let raw = &record[j];
            if raw.is_empty() {
                return Err(Failure::parse(format!("line {line}: missing value for {what}")));
            }
            raw.parse::<f64>()
                .map_err(|_| Failure::parse(format!("line {line}: invalid {what} `{raw}`")))
        };
        let time = field(0, "time")?;
        let status_raw = field(1, "status")?;
        if status_raw != 0.0 && status_raw != 1.0 {
            return Err(Failure::parse(format!(
                "line {line}: status must be 0 or 1, found `{status_raw}`"
            )));
        }
        let covariates = (0..p)
            .map(|j| field(j + 2, &covariate_names[j]))
            .collect::<Result<Vec<_>, _>>()?;
        subjects.push(Subject::new(time, status_raw as u8, covariates));
    }
    if subjects.is_empty() {
        return Err(Failure::parse(format!("{}: no data rows", path.display())));
    }
    Ok(SurvivalSample::new(subjects, true, covariate_names))
}

fn cmd_fit(args: &FitArgs) -> Result<(), Failure> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Failure::parse("level must be in (0,1)"));
    }
    let sample = read_csv(&args.input)?;
    let spec = args.spec.to_spec(args.t0);
    spec.validate().map_err(Failure::from_core)?;
    let result = fit(&spec, &sample, args.level).map_err(Failure::from_core)?;
    if !result.report.converged {
        return Err(Failure {
            code: 4,
            message: format!(
                "did not converge within {} iterations (final score norm {:.3e})",
                result.report.iterations, result.report.final_score_norm
            ),
        });
    }

    let mut names = vec!["(Intercept)".to_string()];
    names.extend(sample.covariate_names.iter().cloned());

    let mut echo = vec![("input".into(), args.input.display().to_string())];
    echo.push(("t0".into(), args.t0.to_string()));
    echo.extend(args.spec.echo());
    echo.push(("level".into(), args.level.to_string()));

    let content = match args.format {
        FormatArg::Tsv => {
            let mut out = comment_header("fit", &echo);
            out.push_str("coef\testimate\tse\tci_lower\tci_upper\n");
            for (j, name) in names.iter().enumerate() {
                out.push_str(&format!(
                    "{name}\t{}\t{}\t{}\t{}\n",
                    result.coefficients[j], result.se[j], result.ci[j].0, result.ci[j].1
                ));
            }
            out.push_str(&format!(
                "# n={} n_effective={} events_beyond_t0={} iterations={} converged={}\n",
                result.n,
                result.n_effective,
                result.n_events_effective,
                result.report.iterations,
                result.report.converged
            ));
            out
        }
        FormatArg::Json => {
            let coeffs: Vec<serde_json::Value> = names
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    serde_json::json!({
                        "coef": name,
                        "estimate": result.coefficients[j],
                        "se": result.se[j],
                        "ci_lower": result.ci[j].0,
                        "ci_upper": result.ci[j].1,
                    })
                })
                .collect();
            let flags: serde_json::Map<String, serde_json::Value> = echo
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect();
            let doc = serde_json::json!({
                "flags": flags,
                "coefficients": coeffs,
                "diagnostics": {
                    "n": result.n,
                    "n_effective": result.n_effective,
                    "events_beyond_t0": result.n_events_effective,
                    "iterations": result.report.iterations,
                    "converged": result.report.converged,
                },
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).unwrap())
        }
    };
    write_output(&args.output, &content)
}

// ---------------------------------------------------------------------------
// simulate / compare

fn parse_t0_list(raw: &str) -> Result<Vec<f64>, Failure> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::parse(format!("invalid t0 value `{s}`")))
        })
        .collect()
}

fn scenario_from(args: &SimArgs) -> Result<SimScenario, Failure> {
    let mut sc = SimScenario::new();
    sc.reps = 500;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Failure::parse(format!("{}:{}: expected key=value", path.display(), idx + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                Failure::parse(format!(
                    "{}:{}: invalid {what} `{value}`",
                    path.display(),
                    idx + 1
                ))
            };
            match key {
                "n" => sc.n = value.parse().map_err(|_| bad("n"))?,
                "tau" => sc.tau = value.parse().map_err(|_| bad("tau"))?,
                "t0_list" => sc.t0_list = parse_t0_list(value)?,
                "kappa" => sc.kappa = value.parse().map_err(|_| bad("kappa"))?,
                "beta0_base" => sc.beta0_base = value.parse().map_err(|_| bad("beta0_base"))?,
                "beta1_base" => sc.beta1_base = value.parse().map_err(|_| bad("beta1_base"))?,
                "censor_target" => {
                    sc.censor_target = value.parse().map_err(|_| bad("censor_target"))?
                }
                "covariate_law" => {
                    sc.covariate_law = match value {
                        "bernoulli" => CovariateLaw::Bernoulli,
                        "uniform" => CovariateLaw::Uniform,
                        _ => return Err(bad("covariate_law")),
                    }
                }
                "reps" => sc.reps = value.parse().map_err(|_| bad("reps"))?,
                "seed" => sc.seed = value.parse().map_err(|_| bad("seed"))?,
                _ => {
                    return Err(Failure::parse(format!(
                        "{}:{}: unknown key `{key}`",
                        path.display(),
                        idx + 1
                    )))
                }
            }
        }
    }
    if let Some(n) = args.n {
        sc.n = n;
    }
    sc.tau = args.spec.tau;
    if let Some(raw) = &args.t0_list {
        sc.t0_list = parse_t0_list(raw)?;
    }
    if let Some(v) = args.kappa {
        sc.kappa = v;
    }
    if let Some(v) = args.beta0_base {
        sc.beta0_base = v;
    }
    if let Some(v) = args.beta1_base {
        sc.beta1_base = v;
    }
    if let Some(v) = args.censor_target {
        sc.censor_target = v;
    }
    if let Some(law) = args.covariate_law {
        sc.covariate_law = match law {
            CovariateLawArg::Bernoulli => CovariateLaw::Bernoulli,
            CovariateLawArg::Uniform => CovariateLaw::Uniform,
        };
    }
    if let Some(v) = args.reps {
        sc.reps = v;
    }
    sc.seed = args.spec.seed;
    sc.validate().map_err(Failure::from_core)?;
    Ok(sc)
}

fn scenario_echo(sc: &SimScenario) -> Vec<(String, String)> {
    vec![
        ("n".into(), sc.n.to_string()),
        ("tau".into(), sc.tau.to_string()),
        (
            "t0-list".into(),
            sc.t0_list
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
        ("kappa".into(), sc.kappa.to_string()),
        ("beta0-base".into(), sc.beta0_base.to_string()),
        ("beta1-base".into(), sc.beta1_base.to_string()),
        ("censor-target".into(), sc.censor_target.to_string()),
        (
            "covariate-law".into(),
            match sc.covariate_law {
                CovariateLaw::Bernoulli => "bernoulli".into(),
                CovariateLaw::Uniform => "uniform".into(),
            },
        ),
        ("reps".into(), sc.reps.to_string()),
        ("seed".into(), sc.seed.to_string()),
    ]
}

fn emit_datasets(dir: &Path, sc: &SimScenario) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::parse(format!("cannot create {}: {e}", dir.display())))?;
    let c = calibrate_censoring(sc).map_err(Failure::from_core)?;
    for rep in 0..sc.reps {
        let sample = generate_dataset(sc, rep, c);
        let mut out = String::from("time,status,x1\n");
        for s in &sample.subjects {
            out.push_str(&format!("{},{},{}\n", s.time, s.status, s.covariates[0]));
        }
        let path = dir.join(format!("rep_{rep:04}.csv"));
        fs::write(&path, out)
            .map_err(|e| Failure::parse(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimArgs) -> Result<(), Failure> {
    let sc = scenario_from(args)?;
    let spec = args.spec.to_spec(0.0);
    spec.validate().map_err(Failure::from_core)?;
    if let Some(dir) = &args.emit_data {
        emit_datasets(dir, &sc)?;
    }
    let summary = run_monte_carlo(&sc, &spec).map_err(Failure::from_core)?;
    let echo = scenario_echo(&sc);
    let content = match args.format {
        FormatArg::Tsv => format!("{}{}", comment_header("simulate", &echo), summary.to_tsv()),
        FormatArg::Json => {
            let rows: Vec<serde_json::Value> = summary
                .rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "t0": r.t0,
                        "cens": r.cens,
                        "coef": r.coef,
                        "PE": r.pe,
                        "ESE": r.ese,
                        "SD": r.sd,
                        "CP": r.cp,
                        "n_failed": r.n_failed,
                        "unidentifiable": r.unidentifiable,
                    })
                })
                .collect();
            let flags: serde_json::Map<String, serde_json::Value> = echo
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect();
            format!(
                "{}\n",
                serde_json::to_string_pretty(&serde_json::json!({
                    "flags": flags,
                    "rows": rows,
                    "reps": summary.reps,
                }))
                .unwrap()
            )
        }
    };
    write_output(&args.output, &content)
}

fn cmd_compare(args: &SimArgs) -> Result<(), Failure> {
    if args.emit_data.is_some() {
        return Err(Failure::parse("--emit-data is only available for `simulate`"));
    }
    let sc = scenario_from(args)?;
    let spec = args.spec.to_spec(0.0);
    spec.validate().map_err(Failure::from_core)?;
    let result = compare_estimators(&sc, &spec).map_err(Failure::from_core)?;
    let echo = scenario_echo(&sc);
    let content = match args.format {
        FormatArg::Tsv => {
            let mut out = comment_header("compare", &echo);
            out.push_str(&result.pairs_tsv());
            for line in result.cells_tsv().lines() {
                out.push_str(&format!("# {line}\n"));
            }
            out
        }
        FormatArg::Json => {
            let pairs: Vec<serde_json::Value> = result
                .pairs
                .iter()
                .map(|p| {
                    serde_json::json!({
                        "rep": p.rep,
                        "t0": p.t0,
                        "nonsmooth": p.nonsmooth,
                        "smoothed": p.smoothed,
                    })
                })
                .collect();
            let cells: Vec<serde_json::Value> = result
                .cells
                .iter()
                .map(|c| {
                    serde_json::json!({
                        "t0": c.t0,
                        "coef": c.coef,
                        "mean_nonsmooth": c.mean_nonsmooth,
                        "sd_nonsmooth": c.sd_nonsmooth,
                        "mean_smoothed": c.mean_smoothed,
                        "sd_smoothed": c.sd_smoothed,
                        "correlation": c.correlation,
                    })
                })
                .collect();
            let flags: serde_json::Map<String, serde_json::Value> = echo
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect();
            format!(
                "{}\n",
                serde_json::to_string_pretty(&serde_json::json!({
                    "flags": flags,
                    "pairs": pairs,
                    "cells": cells,
                    "n_failed": result.n_failed,
                }))
                .unwrap()
            )
        }
    };
    write_output(&args.output, &content)
}
