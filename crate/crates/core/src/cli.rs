//! Command-line front end: single-expression obfuscation, corpus benchmarks,
//! rule checking and metrics.
//!
//! Exit codes: 0 success, 1 failed soundness or self-check, 2 input error,
//! 3 resource error.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::corpus::{sample_corpus, SAMPLE_SEED, SAMPLE_SIZE};
use crate::expand::{expand, ExpandError, ExpansionConfig, ExpansionReport};
use crate::expr::{parse, BitWidth, Expr};
use crate::metrics::{aggregate, measure, ObfuscationRecord};
use crate::rewrite::{parse_rules, Rule};
use crate::verify::{admit_rule, check_equivalence, check_rule, check_rule_random, ADMISSION_TRIALS};

/// Rules used when `--rules` is not given.
pub const DEFAULT_RULES: &str = include_str!("../rules/default.rules");

/// Random environments for `--selfcheck` when exhaustive checking is too
/// expensive.
pub const SELFCHECK_TRIALS: u64 = 1000;

#[derive(Debug, Parser)]
#[command(name = "mba-obf", version, about = "MBA obfuscation by e-graph equality expansion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Obfuscate a single expression.
    Obfuscate {
        #[arg(short = 'e', long = "expr")]
        expr: String,
        #[command(flatten)]
        opts: ExpansionArgs,
        /// Print the full JSON report instead of the expression.
        #[arg(long)]
        json: bool,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Obfuscate every line of a corpus and report average metrics.
    Bench {
        #[arg(short = 'f', long = "corpus")]
        corpus: PathBuf,
        #[command(flatten)]
        opts: ExpansionArgs,
        /// Directory receiving `details.jsonl` and `aggregate.csv`. Without
        /// it the CSV goes to stdout.
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Check every rule in a rule file for soundness.
    CheckRules {
        rules: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the complexity metrics of an expression.
    Metrics {
        #[arg(short = 'e', long = "expr")]
        expr: String,
        #[arg(long, default_value = "64")]
        bitwidth: BitWidth,
        #[arg(long)]
        json: bool,
    },
    /// Print a seeded random sample corpus.
    Corpus {
        #[arg(long, default_value_t = SAMPLE_SIZE)]
        count: usize,
        #[arg(long, default_value_t = SAMPLE_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ExpansionArgs {
    /// Rule file; the built-in rule set is used when omitted.
    #[arg(short = 'r', long = "rules")]
    pub rules: Option<PathBuf>,
    #[arg(long, default_value_t = 3000)]
    pub node_limit: usize,
    #[arg(long, default_value_t = 30)]
    pub iter_limit: usize,
    #[arg(long, default_value_t = 2000)]
    pub time_limit_ms: u64,
    #[arg(long = "target-size")]
    pub target_size: Option<usize>,
    /// Depth cap of the maximizing extractor.
    #[arg(long, default_value_t = 64)]
    pub rounds: usize,
    /// Largest output the extractor may produce, in AST nodes.
    #[arg(long, default_value_t = 50_000)]
    pub max_output: usize,
    #[arg(long, default_value = "64")]
    pub bitwidth: BitWidth,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Verify every output against its input.
    #[arg(long)]
    pub selfcheck: bool,
    /// Skip rule soundness checks.
    #[arg(long)]
    pub no_check: bool,
}

impl ExpansionArgs {
    pub fn config(&self) -> ExpansionConfig {
        ExpansionConfig {
            width: self.bitwidth,
            node_limit: Some(self.node_limit),
            iter_limit: Some(self.iter_limit),
            time_limit: Some(Duration::from_millis(self.time_limit_ms)),
            target_ast_size: self.target_size,
            extraction_rounds: self.rounds,
            max_output_nodes: self.max_output,
            seed: self.seed,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Resource(String),
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Input(_) => 2,
            CliError::Resource(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Resource(m) | CliError::Check(m) => m,
        }
    }
}

impl From<ExpandError> for CliError {
    fn from(e: ExpandError) -> Self {
        match e {
            ExpandError::Config(e) => CliError::Input(e.to_string()),
            other => CliError::Resource(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Obfuscate {
            expr,
            opts,
            json,
            output,
        } => run_obfuscate(&expr, &opts, json, output.as_deref(), out),
        Command::Bench {
            corpus,
            opts,
            output,
        } => run_bench(&corpus, &opts, output.as_deref(), out, err),
        Command::CheckRules { rules, seed } => run_check_rules(&rules, seed, out),
        Command::Metrics {
            expr,
            bitwidth,
            json,
        } => run_metrics(&expr, bitwidth, json, out),
        Command::Corpus { count, seed } => {
            let text: String = sample_corpus(count, seed)
                .iter()
                .map(|e| format!("{e}\n"))
                .collect();
            write_out(out, &text)
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Resource(format!("write failed: {e}")))
}

/// Loads and, unless disabled, admits the rule set.
pub fn load_rules(opts: &ExpansionArgs) -> Result<Vec<Rule>, CliError> {
    let (origin, text) = match &opts.rules {
        Some(path) => (
            path.display().to_string(),
            fs::read_to_string(path).map_err(|e| io_error(path, e))?,
        ),
        None => ("<built-in rules>".to_string(), DEFAULT_RULES.to_string()),
    };
    let rules = parse_rules(&text).map_err(|e| CliError::Input(format!("{origin}: {e}")))?;
    if !opts.no_check {
        for rule in &rules {
            admit_rule(rule, opts.seed).map_err(|e| CliError::Input(format!("{origin}: {e}")))?;
        }
    }
    Ok(rules)
}

fn record(input: &Expr, report: &ExpansionReport) -> ObfuscationRecord {
    ObfuscationRecord {
        input: input.to_string(),
        output: report.output.to_string(),
        stop: report.stop.to_string(),
        metrics_in: report.metrics_in.clone(),
        metrics_out: report.metrics_out.clone(),
    }
}

fn selfcheck(input: &Expr, report: &ExpansionReport, opts: &ExpansionArgs) -> Result<(), CliError> {
    let result = check_equivalence(input, &report.output, opts.bitwidth, SELFCHECK_TRIALS, opts.seed);
    match result.counterexample {
        None => Ok(()),
        Some(cex) => Err(CliError::Check(format!(
            "self-check failed for `{input}`: {cex} (engine bug)"
        ))),
    }
}

pub fn run_obfuscate(
    text: &str,
    opts: &ExpansionArgs,
    json: bool,
    output: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let rules = load_rules(opts)?;
    let input = parse(text, opts.bitwidth).map_err(|e| CliError::Input(e.to_string()))?;
    let report = expand(&input, &rules, &opts.config())?;
    if opts.selfcheck {
        selfcheck(&input, &report, opts)?;
    }
    let text = if json {
        let mut s = serde_json::to_string(&record(&input, &report)).expect("serializable");
        s.push('\n');
        s
    } else {
        format!("{}\n", report.output)
    };
    match output {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => write_out(out, &text),
    }
}

/// Outputs of a benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutput {
    pub jsonl: String,
    pub csv: String,
    pub failures: usize,
}

/// Expands every corpus line. Lines that fail to parse or expand are
/// reported on `err` and skipped.
pub fn bench(corpus: &str, opts: &ExpansionArgs, err: &mut dyn Write) -> Result<BenchOutput, CliError> {
    let lines: Vec<(usize, &str)> = corpus
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if lines.is_empty() {
        return Err(CliError::Input("EmptyCorpus: corpus has no expressions".into()));
    }
    let rules = load_rules(opts)?;
    let cfg = opts.config();
    cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;

    type LineResult = (usize, Result<(Expr, ExpansionReport), CliError>);
    let results: Vec<LineResult> = lines
        .par_iter()
        .map(|&(line, text)| {
            let run = || {
                let input = parse(text, opts.bitwidth).map_err(|e| CliError::Input(e.to_string()))?;
                let report = expand(&input, &rules, &cfg)?;
                if opts.selfcheck {
                    selfcheck(&input, &report, opts)?;
                }
                Ok((input, report))
            };
            (line, run())
        })
        .collect();

    let mut jsonl = String::new();
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for (line, result) in results {
        match result {
            Ok((input, report)) => {
                jsonl.push_str(&serde_json::to_string(&record(&input, &report)).expect("serializable"));
                jsonl.push('\n');
                pairs.push((report.metrics_in, report.metrics_out));
            }
            Err(e) => {
                let _ = writeln!(err, "line {line}: {}", e.message());
                failures.push(e);
            }
        }
    }
    if !failures.is_empty() {
        let _ = writeln!(err, "{} of {} lines failed", failures.len(), lines.len());
    }
    if pairs.is_empty() {
        // every line failed; surface the most severe failure class
        let worst = failures
            .into_iter()
            .max_by_key(|e| match e {
                CliError::Check(_) => 2,
                CliError::Resource(_) => 1,
                CliError::Input(_) => 0,
            })
            .unwrap();
        return Err(worst);
    }
    let csv = aggregate(&pairs).expect("nonempty").to_csv();
    Ok(BenchOutput {
        jsonl,
        csv,
        failures: lines.len() - pairs.len(),
    })
}

pub fn run_bench(
    corpus: &Path,
    opts: &ExpansionArgs,
    output: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let text = fs::read_to_string(corpus).map_err(|e| io_error(corpus, e))?;
    let result = bench(&text, opts, err)?;
    match output {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            let details = dir.join("details.jsonl");
            fs::write(&details, &result.jsonl).map_err(|e| io_error(&details, e))?;
            let csv = dir.join("aggregate.csv");
            fs::write(&csv, &result.csv).map_err(|e| io_error(&csv, e))
        }
        None => write_out(out, &result.csv),
    }
}

pub fn run_check_rules(path: &Path, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let rules = parse_rules(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut report = String::new();
    let mut failed = Vec::new();
    for rule in &rules {
        let mut cases = Vec::new();
        let mut failure = None;
        for width in [BitWidth::W4, BitWidth::W8] {
            let (result, how) = match check_rule(rule, width) {
                Ok(r) => (r, "cases"),
                Err(_) => (check_rule_random(rule, width, ADMISSION_TRIALS, seed), "trials"),
            };
            cases.push(format!("{width}-bit {} {how}", result.cases_checked));
            if let Some(cex) = result.counterexample {
                failure = Some((width, cex));
                break;
            }
        }
        if failure.is_none() {
            let result = check_rule_random(rule, BitWidth::W64, ADMISSION_TRIALS, seed);
            cases.push(format!("64-bit {} trials", result.cases_checked));
            failure = result.counterexample.map(|cex| (BitWidth::W64, cex));
        }
        match failure {
            None => writeln!(report, "ok   {} ({})", rule.name, cases.join(", ")).unwrap(),
            Some((width, cex)) => {
                writeln!(report, "FAIL {} at {width} bits: {cex}", rule.name).unwrap();
                failed.push(rule.name.clone());
            }
        }
    }
    write_out(out, &report)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("unsound rules: {}", failed.join(", "))))
    }
}

pub fn run_metrics(text: &str, width: BitWidth, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let e = parse(text, width).map_err(|e| CliError::Input(e.to_string()))?;
    let m = measure(&e);
    let text = if json {
        format!("{}\n", serde_json::to_string(&m).expect("serializable"))
    } else {
        format!(
            "ast_size {}\nvar_count {}\nconst_count {}\nop_count {}\nmba_alternation {}\nentropy_tokens {:.4}\nentropy_leaves {:.4}\n",
            m.ast_size, m.var_count, m.const_count, m.op_count, m.mba_alternation, m.entropy_tokens, m.entropy_leaves
        )
    };
    write_out(out, &text)
}
