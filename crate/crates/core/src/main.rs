use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use orthant_ruin::config::{ConfigError, Format, Prepared, RunConfig};
use orthant_ruin::corpus::{run_duality_corpus, CorpusFamily, CorpusParams};
use orthant_ruin::estimators::{run_claims, sample_ladder_pk, ClaimsReport, Method};
use orthant_ruin::models::{derive_stream_in, domain};
use orthant_ruin::orthant::OrthantVector;
use orthant_ruin::output::{fmt_f64, to_json, vector_columns, write_file, CsvTable};
use orthant_ruin::skorokhod::{solve_sp, DEFAULT_STRICT_TOL};
use orthant_ruin::storage::{duality_verdict, reverse_inputs, solve_storage};

const EXIT_CONFIG: u8 = 1;
const EXIT_COUNTEREXAMPLE: u8 = 2;
const EXIT_IDENTITY: u8 = 3;

#[derive(Parser)]
#[command(name = "orthant-ruin", version, about = "Reflected walks, storage duals and ruin estimates in the orthant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and print the hypothesis report.
    Validate { config: PathBuf },
    /// Simulate one primal path and its reversed dual.
    SimulatePath {
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config output dir.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run the randomized pathwise-duality corpus.
    DualityCheck {
        #[arg(long, default_value_t = 100_000)]
        instances: u64,
        #[arg(long, default_value_t = 5)]
        dmax: usize,
        #[arg(long, default_value_t = 40)]
        nmax: usize,
        #[arg(long, default_value_t = 20_240_601)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = CorpusFamily::Mixed)]
        family: CorpusFamily,
        #[arg(long, default_value_t = DEFAULT_STRICT_TOL)]
        strict_tol: f64,
        /// Perturb lattice data by ~1e-13 to probe the tolerance.
        #[arg(long)]
        stress: bool,
        /// Also write the summary JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate ruin probabilities and write the claims report.
    Estimate {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::All)]
        method: Method,
        /// Capital sweep `start:end:step`, applied to every coordinate.
        #[arg(long)]
        sweep: Option<String>,
        /// Output directory; defaults to the config output dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn fail(kind: &str, message: impl ToString) -> ExitCode {
    eprint!(
        "{}",
        to_json(&ErrorReport {
            error: kind,
            message: message.to_string()
        })
    );
    ExitCode::from(EXIT_CONFIG)
}

fn config_fail(e: ConfigError) -> ExitCode {
    fail(e.kind(), e)
}

fn load(path: &Path) -> Result<Prepared, ConfigError> {
    RunConfig::load(path)?.prepare()
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), ExitCode> {
    write_file(dir, name, contents)
        .map(|_| ())
        .map_err(|e| fail("Io", format!("{}: {e}", dir.join(name).display())))
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    args: Vec<String>,
}

fn write_meta(dir: &Path, command: &str) -> Result<(), ExitCode> {
    let meta = RunMeta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        args: std::env::args().skip(1).collect(),
    };
    write(dir, "run_meta.json", &to_json(&meta))
}

#[derive(Serialize)]
struct ReflectionSummary {
    d: usize,
    spectral_radius: f64,
    rinv: Vec<Vec<f64>>,
    /// Zero-based index of a strictly positive column of `R^{-1}`.
    h2_column: Option<usize>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    reflection: ReflectionSummary,
    hypotheses: &'a orthant_ruin::models::HypothesisReport,
}

fn cmd_validate(config: &Path) -> ExitCode {
    let p = match load(config) {
        Ok(p) => p,
        Err(e) => return config_fail(e),
    };
    let report = ValidateReport {
        reflection: ReflectionSummary {
            d: p.matrix.dim(),
            spectral_radius: p.matrix.spectral_radius(),
            rinv: p.matrix.rinv().rows(),
            h2_column: p.matrix.h2_column(),
            warnings: p.matrix.warnings().to_vec(),
        },
        hypotheses: &p.hypotheses,
    };
    print!("{}", to_json(&report));
    ExitCode::SUCCESS
}

fn cmd_simulate_path(config: &Path, n: usize, seed: Option<u64>, dump: Option<PathBuf>) -> ExitCode {
    let p = match load(config) {
        Ok(p) => p,
        Err(e) => return config_fail(e),
    };
    if n == 0 {
        return fail("InvalidArgument", "--n must be >= 1");
    }
    let seed = seed.unwrap_or(p.config.seed);
    let mut rng = derive_stream_in(seed, domain::PATHS, 0);
    let u: Vec<OrthantVector> = (0..n).map(|_| p.model.sample_increment(&mut rng)).collect();
    let primal = match solve_sp(&p.a, &u, &p.matrix) {
        Ok(x) => x,
        Err(e) => return fail(e.kind(), e),
    };
    let dual = match solve_storage(&reverse_inputs(&u, &p.matrix), &p.matrix, false) {
        Ok(x) => x,
        Err(e) => return fail(e.kind(), e),
    };
    let verdict = match duality_verdict(&p.a, &u, &p.matrix, p.config.strict_tol) {
        Ok(v) => v,
        Err(e) => return fail(e.kind(), e),
    };
    let dir = dump.unwrap_or_else(|| p.config.output.dir.clone());
    let formats = &p.config.output.formats;
    let mut jobs = Vec::new();
    if formats.contains(&Format::Csv) {
        jobs.push(("primal.csv", primal.to_csv()));
        jobs.push(("dual.csv", dual.to_csv()));
    }
    if formats.contains(&Format::Json) {
        jobs.push(("verdict.json", to_json(&verdict)));
    }
    for (name, body) in jobs {
        if let Err(code) = write(&dir, name, &body) {
            return code;
        }
    }
    if let Err(code) = write_meta(&dir, "simulate-path") {
        return code;
    }
    println!("horizon: {n}");
    println!("failed statements: {}", verdict.failures);
    for id in verdict.failed_ids() {
        println!("  {id}");
    }
    ExitCode::SUCCESS
}

fn cmd_duality_check(params: CorpusParams, out: Option<PathBuf>) -> ExitCode {
    if params.dmax == 0 || params.nmax == 0 {
        return fail("InvalidArgument", "--dmax and --nmax must be >= 1");
    }
    let summary = run_duality_corpus(&params);
    if let Some(path) = out {
        let dir = path
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("duality.json");
        if let Err(code) = write(&dir, name, &to_json(&summary)) {
            return code;
        }
    }
    println!("instances: {}", summary.instances);
    println!("failures: {}", summary.failing_instances);
    for t in &summary.tallies {
        println!(
            "  {:<24} lhs_true {:>8}  failures {:>8}  (lhs only {}, rhs only {})",
            t.id, t.lhs_true, t.failures, t.lhs_only, t.rhs_only
        );
    }
    match &summary.first_counterexample {
        None => ExitCode::SUCCESS,
        Some(cx) => {
            print!("{}", to_json(cx));
            ExitCode::from(EXIT_COUNTEREXAMPLE)
        }
    }
}

/// Parses `start:end:step` into `start, start + step, ..` up to `end` inclusive.
fn parse_sweep(arg: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<f64> = arg
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [start, end, step] = parts[..] else {
        return Err(format!("expected start:end:step, got {arg:?}"));
    };
    if !(start >= 0.0 && end >= start && step > 0.0 && end.is_finite()) {
        return Err(format!("need 0 <= start <= end and step > 0, got {arg:?}"));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| start + i as f64 * step).collect())
}

fn pk_curve_csv(p: &Prepared, report: &ClaimsReport) -> Result<Option<String>, ExitCode> {
    let Some(rows) = &report.sweep else {
        return Ok(None);
    };
    let d = p.matrix.dim();
    let p_hat = report.p_hat.as_ref().filter(|e| e.value < 1.0);
    let mut header = vector_columns("a", d);
    header.extend(["ss", "ss_se", "s", "s_se", "r", "r_se"].map(String::from));
    if p_hat.is_some() {
        header.extend(["pk", "pk_se"].map(String::from));
    }
    let mut t = CsvTable::new(header);
    for row in rows {
        let mut cells: Vec<String> = row.a.iter().map(|x| fmt_f64(*x)).collect();
        for e in [&row.ss, &row.s, &row.r] {
            cells.push(fmt_f64(e.value));
            cells.push(fmt_f64(e.std_error));
        }
        if let Some(ph) = p_hat {
            let c = &p.config;
            // The same seed for every capital gives common random numbers.
            match sample_ladder_pk(&p.model, &p.matrix, &row.a, c.n_paths, c.seed, ph, c.settings()) {
                Ok(s) => {
                    cells.push(fmt_f64(s.ruin.value));
                    cells.push(fmt_f64(s.ruin.std_error));
                }
                Err(e) => return Err(fail(e.kind(), e)),
            }
        }
        t.push(cells);
    }
    Ok(Some(t.render()))
}

fn cmd_estimate(config: &Path, method: Method, sweep: Option<String>, out: Option<PathBuf>) -> ExitCode {
    let p = match load(config) {
        Ok(p) => p,
        Err(e) => return config_fail(e),
    };
    let d = p.matrix.dim();
    let caps: Vec<OrthantVector> = match sweep.as_deref().map(parse_sweep).transpose() {
        Ok(levels) => levels
            .unwrap_or_default()
            .into_iter()
            .map(|x| OrthantVector::splat(d, x))
            .collect(),
        Err(e) => return fail("InvalidArgument", e),
    };
    if !caps.is_empty() && !matches!(method, Method::Direct | Method::All) {
        return fail("InvalidArgument", "--sweep runs in the direct engine; use --method direct or all");
    }
    let report = match run_claims(&p.model, &p.matrix, &p.hypotheses, &p.config.model, &p.plan(method, caps)) {
        Ok(r) => r,
        Err(e) => return fail(e.kind(), e),
    };
    let dir = out.unwrap_or_else(|| p.config.output.dir.clone());
    let formats = &p.config.output.formats;
    let mut jobs = Vec::new();
    if formats.contains(&Format::Json) {
        jobs.push(("report.json", to_json(&report)));
    }
    if formats.contains(&Format::Csv) {
        if let Some(t) = &report.per_horizon_identity {
            jobs.push(("identity.csv", t.to_csv()));
        }
        match pk_curve_csv(&p, &report) {
            Ok(Some(csv)) => jobs.push(("pk_curve.csv", csv)),
            Ok(None) => {}
            Err(code) => return code,
        }
    }
    for (name, body) in jobs {
        if let Err(code) = write(&dir, name, &body) {
            return code;
        }
    }
    if let Err(code) = write_meta(&dir, "estimate") {
        return code;
    }
    for c in &report.claims {
        let z = c.z.map(|z| format!("{z:+.2}")).unwrap_or_else(|| "-".into());
        println!("{:<36} z {:>7}  {:?}", c.id, z, c.verdict);
    }
    if report.identity_passed() {
        ExitCode::SUCCESS
    } else {
        eprintln!("per-horizon identity table failed; see identity.csv");
        ExitCode::from(EXIT_IDENTITY)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => cmd_validate(&config),
        Command::SimulatePath { config, n, seed, dump } => cmd_simulate_path(&config, n, seed, dump),
        Command::DualityCheck {
            instances,
            dmax,
            nmax,
            seed,
            family,
            strict_tol,
            stress,
            out,
        } => cmd_duality_check(
            CorpusParams {
                instances,
                dmax,
                nmax,
                seed,
                strict_tol,
                family,
                stress,
            },
            out,
        ),
        Command::Estimate {
            config,
            method,
            sweep,
            out,
        } => cmd_estimate(&config, method, sweep, out),
    }
}

#[cfg(test)]
mod tests {
    use super::parse_sweep;

    #[test]
    fn sweep_grid() {
        assert_eq!(parse_sweep("0:16:2").unwrap().len(), 9);
        assert_eq!(parse_sweep("1:1:1").unwrap(), vec![1.0]);
        assert!(parse_sweep("0:1").is_err());
        assert!(parse_sweep("2:1:1").is_err());
        assert!(parse_sweep("0:1:0").is_err());
    }
}
