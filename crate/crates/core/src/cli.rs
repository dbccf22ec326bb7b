//! Command-line front end: `test`, `simulate` and `calibrate`.
//!
//! Exit codes: 0 success, 1 calibration failure, 2 input error,
//! 3 statistical degeneracy.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::calibration::{self, Suite};
use crate::error::{Error, Result};
use crate::gmm::prop_coloc_full;
use crate::io::load_summary_raw;
use crate::result::{combined_verdict, Method, TestResult, Verdict};
use crate::selective::{self, build_selection, lm_test, prop_coloc_naive, CondOptions};
use crate::sim::{parse_grid, run_experiment};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

/// Version of the JSON report layout. Later versions only add fields.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "propcoloc", version, about = "Proportional colocalization tests for two traits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test proportional colocalization on summary data.
    Test(TestArgs),
    /// Run a simulation grid and write rejection frequencies as TSV.
    Simulate(SimulateArgs),
    /// Run the distributional and numerical oracles.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Association TSV with columns variant_id, beta1, se1, beta2, se2.
    #[arg(long)]
    pub assoc: PathBuf,
    /// Whitespace-delimited LD matrix, optionally with a header of ids.
    #[arg(long)]
    pub ld: PathBuf,
    /// Sample size.
    #[arg(long)]
    pub n: usize,
    /// Sample correlation between the two traits.
    #[arg(long, allow_hyphen_values = true)]
    pub trait_cor: f64,
    /// Prune to pairwise r² at or below this threshold (1 keeps all but exact duplicates).
    #[arg(long, default_value_t = 0.6)]
    pub prune_r2: f64,
    /// Keep the union of the k strongest variants per trait (0 keeps all).
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Initial Monte-Carlo draws for the conditional test.
    #[arg(long, default_value_t = selective::DEFAULT_DRAWS)]
    pub draws: usize,
    /// Seed for the conditional test; drawn at random and reported if absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of full, naive, cond, lm.
    #[arg(long, value_delimiter = ',', default_value = "full,naive,cond,lm")]
    pub methods: Vec<Method>,
    /// Emit the full JSON report.
    #[arg(long, conflicts_with = "tsv")]
    pub json: bool,
    /// Emit one TSV row per method.
    #[arg(long)]
    pub tsv: bool,
    /// Write output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON array of simulation configs.
    #[arg(long)]
    pub grid: PathBuf,
    /// Output TSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Overrides the seed of every grid entry.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of full, naive, cond, lm.
    #[arg(long, value_delimiter = ',', default_value = "full,naive,cond,lm")]
    pub methods: Vec<Method>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// chisq, cstar, optimizer or all.
    #[arg(long, default_value = "all")]
    pub suite: Suite,
    /// Drawn at random and reported if absent.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Echo of the settings a `test` run used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestConfig {
    pub assoc: String,
    pub ld: String,
    pub n: usize,
    pub trait_cor: f64,
    pub prune_r2: f64,
    pub top_k: usize,
    pub alpha: f64,
    pub draws: usize,
    pub methods: Vec<Method>,
}

/// Variant counts at each preprocessing step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preprocessing {
    pub input_variants: usize,
    pub duplicates_removed: usize,
    pub pruned: usize,
    pub top_k_removed: usize,
    pub analysed_variants: usize,
    pub traits_swapped: bool,
    pub lead_trait1: Option<String>,
    pub lead_trait2: Option<String>,
    pub variant_ids: Vec<String>,
}

/// Everything a `test` run produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config: TestConfig,
    pub preprocessing: Preprocessing,
    pub results: Vec<TestResult>,
    pub verdict: Option<Verdict>,
}

fn draw_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn dedup_methods(methods: &[Method]) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    for m in methods {
        if !out.contains(m) {
            out.push(*m);
        }
    }
    out
}

/// Runs the preprocessing pipeline and the requested tests.
pub fn run_test(args: &TestArgs) -> Result<RunReport> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let methods = dedup_methods(&args.methods);
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    let seed = draw_seed(args.seed);

    let raw = load_summary_raw(&args.assoc, &args.ld, args.trait_cor, args.n)?;
    let input_variants = raw.num_variants();
    let deduped = raw.drop_duplicates();
    let duplicates_removed = input_variants - deduped.num_variants();
    let (ordered, traits_swapped) = deduped.order_traits();
    let pruned_ds = ordered.prune(args.prune_r2)?;
    let pruned = ordered.num_variants() - pruned_ds.num_variants();
    let filtered = if args.top_k == 0 {
        pruned_ds.clone()
    } else {
        pruned_ds.select_top_k(args.top_k)?
    };
    let top_k_removed = pruned_ds.num_variants() - filtered.num_variants();
    if filtered.num_variants() < 2 {
        return Err(Error::InvalidArgument(
            "fewer than 2 variants remain after preprocessing".into(),
        ));
    }
    let je = filtered.to_joint_effects()?;
    let sel = build_selection(&je)?;
    let ids = filtered.variant_ids();

    let mut results = Vec::with_capacity(methods.len());
    for m in &methods {
        let r = match m {
            Method::Full => prop_coloc_full(&je, args.alpha)?,
            Method::Naive => prop_coloc_naive(&je, &sel, args.alpha)?,
            Method::Conditional => {
                selective::prop_coloc_cond_with(&je, args.alpha, &CondOptions::new(args.draws, seed))?
            }
            Method::Lm => lm_test(&je, &sel, args.alpha)?,
        };
        results.push(r);
    }

    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config: TestConfig {
            assoc: args.assoc.display().to_string(),
            ld: args.ld.display().to_string(),
            n: args.n,
            trait_cor: args.trait_cor,
            prune_r2: args.prune_r2,
            top_k: args.top_k,
            alpha: args.alpha,
            draws: args.draws,
            methods,
        },
        preprocessing: Preprocessing {
            input_variants,
            duplicates_removed,
            pruned,
            top_k_removed,
            analysed_variants: filtered.num_variants(),
            traits_swapped,
            lead_trait1: Some(ids[sel.j_star].clone()),
            lead_trait2: Some(ids[sel.j_star_star].clone()),
            variant_ids: ids.to_vec(),
        },
        verdict: report_verdict(&results, args.alpha),
        results,
    })
}

/// Verdict from the LM test and the best available proportionality test
/// (conditional, then full, then naive). With only the LM test, a missing
/// trait-1 signal still settles the verdict.
pub fn report_verdict(results: &[TestResult], alpha: f64) -> Option<Verdict> {
    let find = |m: Method| results.iter().find(|r| r.method == m);
    let lm = find(Method::Lm)?;
    let prop = [Method::Conditional, Method::Full, Method::Naive]
        .into_iter()
        .find_map(find);
    match prop {
        Some(p) => Some(combined_verdict(p, lm, alpha)),
        None if lm.p_value >= alpha => Some(Verdict::RejectNoTrait1Signal),
        None => None,
    }
}

fn fmt_eta(r: &TestResult) -> String {
    r.eta_hat.map_or_else(|| "NA".to_string(), |e| format!("{e:.6}"))
}

const TSV_COLUMNS: &str = "method\tstatistic\tdf_or_critical\tp_value\teta_hat\treject";

pub fn report_tsv(report: &RunReport) -> String {
    let mut s = String::from(TSV_COLUMNS);
    s.push('\n');
    for r in &report.results {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.method,
            r.statistic,
            r.df_or_critical,
            r.p_value,
            r.eta_hat.map_or_else(|| "NA".to_string(), |e| e.to_string()),
            r.reject
        ));
    }
    s
}

pub fn report_text(report: &RunReport) -> String {
    let p = &report.preprocessing;
    let mut s = String::new();
    s.push_str(&format!(
        "variants: {} input, {} duplicates, {} pruned, {} dropped by top-k, {} analysed\n",
        p.input_variants, p.duplicates_removed, p.pruned, p.top_k_removed, p.analysed_variants
    ));
    if p.traits_swapped {
        s.push_str("traits swapped so the strongest association belongs to trait 2\n");
    }
    if let (Some(a), Some(b)) = (&p.lead_trait1, &p.lead_trait2) {
        s.push_str(&format!("lead variants: trait 1 {a}, trait 2 {b}\n"));
    }
    s.push_str(&format!("seed: {}\n\n", report.seed));
    s.push_str(&format!(
        "{:<6} {:>12} {:>14} {:>12} {:>10} {:>7}\n",
        "method", "statistic", "df/critical", "p_value", "eta_hat", "reject"
    ));
    for r in &report.results {
        s.push_str(&format!(
            "{:<6} {:>12.4} {:>14.4} {:>12.4e} {:>10} {:>7}\n",
            r.method.as_str(),
            r.statistic,
            r.df_or_critical,
            r.p_value,
            fmt_eta(r),
            r.reject
        ));
    }
    if let Some(v) = report.verdict {
        s.push_str(&format!("\nverdict at alpha = {}: {v}\n", report.config.alpha));
    }
    s
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn cmd_test(args: &TestArgs) -> Result<()> {
    let report = run_test(args)?;
    let text = if args.json {
        let mut s = serde_json::to_string_pretty(&report)?;
        s.push('\n');
        s
    } else if args.tsv {
        report_tsv(&report)
    } else {
        report_text(&report)
    };
    emit(args.out.as_deref(), &text)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let json = fs::read_to_string(&args.grid).map_err(|e| Error::io(&args.grid, e))?;
    let mut grid = parse_grid(&json)?;
    if let Some(seed) = args.seed {
        for c in &mut grid {
            c.seed = seed;
        }
    }
    let methods = dedup_methods(&args.methods);
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    let table = run_experiment(&grid, &methods, args.parallel.max(1))?;
    fs::write(&args.out, table.to_tsv()).map_err(|e| Error::io(&args.out, e))?;
    eprintln!(
        "wrote {} rows for {} grid points to {}",
        table.rows.len(),
        grid.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<bool> {
    let seed = draw_seed(args.seed);
    println!("seed: {seed}");
    let checks = calibration::run_suite(args.suite, seed)?;
    for c in &checks {
        println!("{c}");
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn exit_code(err: &Error) -> i32 {
    if err.is_degeneracy() {
        EXIT_DEGENERATE
    } else {
        EXIT_INPUT
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Test(a) => cmd_test(a).map(|_| true),
        Command::Simulate(a) => cmd_simulate(a).map(|_| true),
        Command::Calibrate(a) => cmd_calibrate(a),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn res(method: Method, p: f64) -> TestResult {
        TestResult {
            method,
            statistic: 1.0,
            df_or_critical: 1.0,
            p_value: p,
            eta_hat: None,
            nu: 0.05,
            reject: p < 0.05,
            diagnostics: BTreeMap::new(),
        }
    }

    #[test]
    fn lm_alone_can_reject() {
        let v = report_verdict(&[res(Method::Lm, 0.6)], 0.05);
        assert_eq!(v, Some(Verdict::RejectNoTrait1Signal));
        assert_eq!(report_verdict(&[res(Method::Lm, 0.001)], 0.05), None);
        assert_eq!(report_verdict(&[res(Method::Full, 0.001)], 0.05), None);
    }

    #[test]
    fn conditional_preferred_over_full() {
        let rs = [
            res(Method::Full, 0.001),
            res(Method::Conditional, 0.5),
            res(Method::Lm, 0.001),
        ];
        assert_eq!(
            report_verdict(&rs, 0.05),
            Some(Verdict::RetainProportionalColocalization)
        );
    }

    #[test]
    fn parses_method_lists() {
        let cli = Cli::try_parse_from([
            "propcoloc", "test", "--assoc", "a", "--ld", "b", "--n", "100", "--trait-cor",
            "-0.2", "--methods", "lm,cond",
        ])
        .unwrap();
        let Command::Test(t) = cli.command else { panic!() };
        assert_eq!(t.methods, vec![Method::Lm, Method::Conditional]);
        assert_eq!(t.trait_cor, -0.2);
        assert_eq!(t.prune_r2, 0.6);
        assert_eq!(t.top_k, 10);
    }

    #[test]
    fn bad_flags_are_input_errors() {
        assert_eq!(run(["propcoloc", "test", "--n", "x"]), EXIT_INPUT);
        assert_eq!(run(["propcoloc", "calibrate", "--suite", "nope"]), EXIT_INPUT);
    }
}
