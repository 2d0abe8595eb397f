//! Command-line pipeline: simulate, evaluate, search counterfactuals,
//! refine, score and check.
//!
//! Exit codes: 0 success, 1 usage error, 2 parse/format error,
//! 3 refinement exhausted or validation rejection.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::candidate::llm::{LlmConfig, LlmGenerator};
use crate::candidate::{CandidateGenerator, DeterministicGenerator, MockGenerator};
use crate::counterfactual::{build_evidence, SearchLimits};
use crate::grammar::{check_vocabulary, parse_rule, OddSpec};
use crate::io::{self, IoError};
use crate::metrics::{compute_metrics, grammar_compliance, render_table};
use crate::scenario::{make_paper_fixture, sample_dataset, OracleConfig, SafetyOracle};
use crate::semantics::{decisiveness, ruleset_decisiveness, LabeledRun, PolarizedRule, DEFAULT_EPS_EQ};
use crate::validation::{
    prepare, refine_with_context, render_exhausted, render_report, ContradictionBudget, RefineConfig, RefineError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FORMAT: i32 = 2;
pub const EXIT_REJECTED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "ruleforge", version, about = "Refine safety operational rules against labeled runs")]
struct Cli {
    /// Emit diagnostics on stderr as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a labeled dataset from an oracle configuration.
    Sim(SimArgs),
    /// Per-rule decisiveness on a dataset.
    Eval(EvalArgs),
    /// Counterfactual evidence for one inconsistent rule.
    Cf(CfArgs),
    /// Run the refinement loop on one rule.
    Refine(RefineArgs),
    /// Score a refinement.
    Metrics(MetricsArgs),
    /// Parse a rules file and report vocabulary and grammar compliance.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Oracle configuration JSON; the built-in driving config when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 198)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Build the 198-run fixture with its rule set instead of plain sampling.
    #[arg(long)]
    paper_fixture: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct Inputs {
    #[arg(long)]
    odd: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPS_EQ)]
    eps_eq: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    oracle_config: PathBuf,
    /// Target rule id; the first inconsistent rule when omitted.
    #[arg(long)]
    rule_id: Option<String>,
    #[arg(long, default_value_t = SearchLimits::default().max_radius_steps)]
    max_radius: u32,
    #[arg(long, default_value_t = SearchLimits::default().query_budget)]
    query_budget: u64,
}

impl SearchArgs {
    fn limits(&self) -> SearchLimits {
        SearchLimits { max_radius_steps: self.max_radius, query_budget: self.query_budget }
    }
}

#[derive(Args, Debug)]
struct CfArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GeneratorKind {
    Local,
    Llm,
    Mock,
}

#[derive(Args, Debug)]
struct RefineArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, value_enum, default_value_t = GeneratorKind::Local)]
    generator: GeneratorKind,
    /// JSON array of raw responses for the mock generator.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    max_attempts: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = ContradictionBudget::default().grid_cap)]
    grid_cap: usize,
    #[arg(long, default_value_t = ContradictionBudget::default().samples)]
    samples: usize,
    #[arg(long, default_value_t = ContradictionBudget::default().max_depth)]
    max_depth: u32,
    #[arg(long, default_value_t = ContradictionBudget::default().max_boxes)]
    max_boxes: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    rule_id: String,
    /// Refined rule text.
    #[arg(long, conflicts_with = "outcome", required_unless_present = "outcome")]
    refined: Option<String>,
    /// Outcome JSON written by `refine`.
    #[arg(long)]
    outcome: Option<PathBuf>,
    /// Row label in the printed table.
    #[arg(long, default_value = "run")]
    label: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    rules: PathBuf,
    /// ODD for vocabulary checks; skipped when omitted.
    #[arg(long)]
    odd: Option<PathBuf>,
}

/// Settings of a `refine` run, stored next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub odd_path: PathBuf,
    pub rules_path: PathBuf,
    pub dataset_path: PathBuf,
    pub oracle_config_path: PathBuf,
    pub rule_id: String,
    pub generator: String,
    pub max_attempts: u32,
    pub eps_eq: f64,
    pub limits: SearchLimits,
    pub contradiction: ContradictionBudget,
    pub seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(IoError),
    Format(String),
    Rejected(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(IoError::Io { .. }) => EXIT_USAGE,
            CliError::Io(IoError::Format { .. }) | CliError::Format(_) => EXIT_FORMAT,
            CliError::Rejected(_) => EXIT_REJECTED,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(IoError::Io { .. }) => "io",
            CliError::Io(IoError::Format { .. }) | CliError::Format(_) => "format",
            CliError::Rejected(_) => "rejected",
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let mut v = json!({"error": self.kind(), "exit_code": self.code(), "message": self.to_string()});
        if let CliError::Io(IoError::Format { path, source }) = self {
            v["path"] = json!(path);
            v["what"] = json!(source.what);
            v["line"] = json!(source.line);
            v["field"] = json!(source.field);
        }
        v
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Format(m) | CliError::Rejected(m) => f.write_str(m),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e)
    }
}

type CliResult = Result<(), CliError>;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let want_json = argv.iter().any(|a| a == "--json");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => {
            report(&CliError::Usage(e.to_string().trim_end().to_string()), want_json);
            return EXIT_USAGE;
        }
    };
    let result = match &cli.command {
        Command::Sim(a) => sim(a),
        Command::Eval(a) => eval(a),
        Command::Cf(a) => cf(a),
        Command::Refine(a) => refine(a),
        Command::Metrics(a) => metrics(a),
        Command::Check(a) => check(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            report(&e, cli.json);
            e.code()
        }
    }
}

fn report(e: &CliError, as_json: bool) {
    if as_json {
        eprintln!("{}", e.to_json());
    } else {
        eprintln!("error: {e}");
    }
}

struct Loaded {
    odd: OddSpec,
    rules: Vec<PolarizedRule>,
    dataset: Vec<LabeledRun>,
}

fn load_inputs(inputs: &Inputs) -> Result<Loaded, CliError> {
    if !(inputs.eps_eq >= 0.0 && inputs.eps_eq.is_finite()) {
        return Err(CliError::Usage(format!("--eps-eq must be a non-negative number, got {}", inputs.eps_eq)));
    }
    let odd = io::load(&inputs.odd, io::odd_from_json)?;
    let rules = io::load(&inputs.rules, io::rules_from_json)?;
    let dataset = io::load(&inputs.dataset, |t| io::dataset_from_csv(t, Some(&odd)))?;
    if dataset.is_empty() {
        return Err(CliError::Format(format!("{}: dataset has no runs", inputs.dataset.display())));
    }
    Ok(Loaded { odd, rules, dataset })
}

fn load_oracle(path: &Path, odd: &OddSpec) -> Result<OracleConfig, CliError> {
    let config = io::load(path, io::oracle_config_from_json)?;
    if &config.odd != odd {
        return Err(CliError::Format(format!("{}: oracle ODD differs from the --odd file", path.display())));
    }
    Ok(config)
}

/// The named rule, or the first one with mismatches.
fn pick_target(loaded: &Loaded, rule_id: Option<&str>, eps: f64) -> Result<String, CliError> {
    if let Some(id) = rule_id {
        return if loaded.rules.iter().any(|r| r.id == id) {
            Ok(id.to_string())
        } else {
            Err(CliError::Usage(format!("rule `{id}` is not in the rules file")))
        };
    }
    for rule in &loaded.rules {
        let report = decisiveness(rule, &loaded.dataset, eps).map_err(|e| CliError::Format(e.to_string()))?;
        if report.n_mismatch > 0 {
            return Ok(rule.id.clone());
        }
    }
    Err(CliError::Rejected("no rule is inconsistent on the dataset".into()))
}

fn write(path: &Path, text: &str) -> CliResult {
    io::write_text(path, text).map_err(CliError::from)
}

fn sim(a: &SimArgs) -> CliResult {
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let config = match &a.config {
        Some(path) => io::load(path, io::oracle_config_from_json)?,
        None => OracleConfig::paper_default(a.seed),
    };
    let (dataset, rules) = if a.paper_fixture {
        if a.config.is_some() {
            return Err(CliError::Usage("--paper-fixture uses the built-in config; drop --config".into()));
        }
        let fx = make_paper_fixture(a.seed).map_err(|e| CliError::Rejected(e.to_string()))?;
        let rules = fx.ruleset();
        (fx.dataset, Some(rules))
    } else {
        (sample_dataset(&config, a.n, a.seed).map_err(|e| CliError::Format(e.to_string()))?, None)
    };
    write(&a.out_dir.join("dataset.csv"), &io::dataset_to_csv(&dataset, &config.odd))?;
    write(&a.out_dir.join("oracle.json"), &io::oracle_config_to_json(&config))?;
    write(&a.out_dir.join("odd.json"), &io::odd_to_json(&config.odd))?;
    if let Some(rules) = &rules {
        write(&a.out_dir.join("rules.json"), &io::rules_to_json(rules))?;
    }
    println!("wrote {} runs to {}", dataset.len(), a.out_dir.display());
    Ok(())
}

fn eval(a: &EvalArgs) -> CliResult {
    let loaded = load_inputs(&a.inputs)?;
    let report = ruleset_decisiveness(&loaded.rules, &loaded.dataset, a.inputs.eps_eq)
        .map_err(|e| CliError::Format(e.to_string()))?;
    write(&a.out, &io::to_versioned_json(&report))?;
    for r in &report.rules {
        println!("{:<12} dg={:.4} mismatches={}/{}", r.rule_id, r.dg, r.n_mismatch, r.n);
    }
    Ok(())
}

fn cf(a: &CfArgs) -> CliResult {
    let loaded = load_inputs(&a.inputs)?;
    let config = load_oracle(&a.search.oracle_config, &loaded.odd)?;
    let target_id = pick_target(&loaded, a.search.rule_id.as_deref(), a.inputs.eps_eq)?;
    let target = loaded.rules.iter().find(|r| r.id == target_id).expect("picked from the rule set");
    let evidence = build_evidence(
        target,
        &loaded.dataset,
        &SafetyOracle::new(config),
        &loaded.odd,
        a.search.limits(),
        a.inputs.eps_eq,
        &io::dataset_digest(&loaded.dataset, &loaded.odd),
    )
    .map_err(|e| CliError::Rejected(e.to_string()))?;
    write(&a.out, &io::evidence_to_json(&evidence))?;
    println!("rule {}: {} pair(s), {} unresolved", target_id, evidence.pairs.len(), evidence.unresolved.len());
    Ok(())
}

enum Generator {
    Local(DeterministicGenerator),
    Mock(MockGenerator),
    Llm(LlmGenerator),
}

impl Generator {
    fn as_dyn(&mut self) -> &mut dyn CandidateGenerator {
        match self {
            Generator::Local(g) => g,
            Generator::Mock(g) => g,
            Generator::Llm(g) => g,
        }
    }
}

fn refine(a: &RefineArgs) -> CliResult {
    let loaded = load_inputs(&a.inputs)?;
    let oracle_config = load_oracle(&a.search.oracle_config, &loaded.odd)?;
    if a.max_attempts == 0 {
        return Err(CliError::Usage("--max-attempts must be at least 1".into()));
    }
    let mut generator = match a.generator {
        GeneratorKind::Local => Generator::Local(DeterministicGenerator),
        GeneratorKind::Mock => {
            let path = a.mock_script.as_ref().ok_or_else(|| CliError::Usage("--generator mock needs --mock-script".into()))?;
            let script = io::read_text(path)?;
            Generator::Mock(
                MockGenerator::from_json(&script)
                    .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?,
            )
        }
        GeneratorKind::Llm => {
            let config = LlmConfig::from_env().map_err(|e| CliError::Usage(e.to_string()))?;
            Generator::Llm(LlmGenerator::new(config))
        }
    };
    let target_id = pick_target(&loaded, a.search.rule_id.as_deref(), a.inputs.eps_eq)?;
    let config = RefineConfig {
        max_attempts: a.max_attempts,
        limits: a.search.limits(),
        contradiction: ContradictionBudget {
            grid_cap: a.grid_cap,
            samples: a.samples,
            max_depth: a.max_depth,
            max_boxes: a.max_boxes,
            seed: a.seed,
        },
        eps_eq: a.inputs.eps_eq,
    };
    let run_config = RunConfig {
        odd_path: a.inputs.odd.clone(),
        rules_path: a.inputs.rules.clone(),
        dataset_path: a.inputs.dataset.clone(),
        oracle_config_path: a.search.oracle_config.clone(),
        rule_id: target_id.clone(),
        generator: format!("{:?}", a.generator).to_lowercase(),
        max_attempts: a.max_attempts,
        eps_eq: a.inputs.eps_eq,
        limits: config.limits,
        contradiction: config.contradiction,
        seed: a.seed,
        output_dir: a.out_dir.clone(),
    };

    let oracle = SafetyOracle::new(oracle_config);
    let inputs = crate::validation::RefineInputs {
        target_id: &target_id,
        ruleset: &loaded.rules,
        dataset: &loaded.dataset,
        oracle: &oracle,
        odd: &loaded.odd,
        dataset_ref: &io::dataset_digest(&loaded.dataset, &loaded.odd),
    };
    let mut ctx = prepare(&inputs, &config).map_err(|e| match e {
        RefineError::TargetNotInRuleset(_) => CliError::Usage(e.to_string()),
        other => CliError::Rejected(other.to_string()),
    })?;
    let result = refine_with_context(&mut ctx, &loaded.rules, generator.as_dyn(), &config);

    let out = &a.out_dir;
    write(&out.join("run_config.json"), &io::to_versioned_json(&run_config))?;
    write(&out.join("evidence.json"), &io::evidence_to_json(&ctx.evidence))?;
    if let Generator::Llm(llm) = &generator {
        write(&out.join("transcripts.json"), &io::to_versioned_json(&json!({"transcripts": llm.transcripts})))?;
    }
    match result {
        Ok(outcome) => {
            write(&out.join("outcome.json"), &io::outcome_to_json(&outcome))?;
            write(&out.join("report.txt"), &render_report(&outcome))?;
            println!(
                "rule {} refined on attempt {}: dg {:.4} -> {:.4}",
                outcome.rule_id, outcome.attempts, outcome.dg_before, outcome.dg_after
            );
            Ok(())
        }
        Err(RefineError::Exhausted { reports }) => {
            write(&out.join("reports.json"), &io::to_versioned_json(&json!({"reports": reports})))?;
            write(&out.join("report.txt"), &render_exhausted(&reports))?;
            Err(CliError::Rejected(format!("refinement exhausted after {} attempt(s)", reports.len())))
        }
        Err(e) => Err(CliError::Rejected(e.to_string())),
    }
}

fn metrics(a: &MetricsArgs) -> CliResult {
    let loaded = load_inputs(&a.inputs)?;
    let original = loaded
        .rules
        .iter()
        .find(|r| r.id == a.rule_id)
        .ok_or_else(|| CliError::Usage(format!("rule `{}` is not in the rules file", a.rule_id)))?;
    let refined_text = match (&a.refined, &a.outcome) {
        (Some(text), _) => text.clone(),
        (None, Some(path)) => crate::grammar::print_rule(&io::load(path, io::outcome_from_json)?.refined),
        (None, None) => unreachable!("clap requires one of --refined/--outcome"),
    };
    let report = compute_metrics(original, &refined_text, &loaded.dataset, &loaded.odd, a.inputs.eps_eq)
        .map_err(|e| CliError::Format(e.to_string()))?;
    write(&a.out, &io::to_versioned_json(&report))?;
    print!("{}", render_table(&[(a.label.clone(), report)]));
    Ok(())
}

fn check(a: &CheckArgs) -> CliResult {
    let odd = a.odd.as_deref().map(|p| io::load(p, io::odd_from_json)).transpose()?;
    let raw = io::load(&a.rules, io::raw_rules_from_json)?;
    let mut parse_failures = 0;
    let mut vocab_failures = 0;
    for rule in &raw {
        let gc = grammar_compliance(&rule.text);
        let status = match parse_rule(&rule.text) {
            Err(e) => {
                parse_failures += 1;
                format!("parse error: {e}")
            }
            Ok(ast) => match odd.as_ref().map(|o| check_vocabulary(&ast, o)).unwrap_or_default() {
                v if v.is_empty() => "ok".to_string(),
                v => {
                    vocab_failures += 1;
                    let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
                    format!("vocabulary violation: {}", parts.join("; "))
                }
            },
        };
        println!("{:<12} gc={:.4} ({}/{} violating tokens) {status}", rule.id, gc.gc, gc.n_viol, gc.n_tok);
    }
    if parse_failures > 0 {
        Err(CliError::Format(format!("{parse_failures} rule(s) failed to parse")))
    } else if vocab_failures > 0 {
        Err(CliError::Rejected(format!("{vocab_failures} rule(s) violate the vocabulary")))
    } else {
        Ok(())
    }
}
