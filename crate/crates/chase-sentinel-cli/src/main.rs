use anyhow::Context;
use chase_sentinel::chase::{entails, results, run_chase, ChaseBudget, ChaseStatus};
use chase_sentinel::classify::{bucket, classify, Check, ClassificationReport, ClassifyOptions, Combined};
use chase_sentinel::cyclicity::{CyclicityPrefix, CyclicityResult, Notion};
use chase_sentinel::matcher::FactSet;
use chase_sentinel::model::RuleSet;
use chase_sentinel::ruleio::{parse, parse_query, render_facts, SourceProgram};
use chase_sentinel::termination::AcyclicMode;
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

const EXIT_PARSE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "chase-sentinel", version, about = "Restricted chase engine and termination classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NotionArg {
    Rpcs,
    Rpc,
    Drpc,
    Acyclic,
}

#[derive(Subcommand)]
enum Command {
    /// Decide termination or non-termination of a rule set
    Classify {
        file: PathBuf,
        /// Run a single check instead of acyclic, DRPC and RPC_s in turn
        #[arg(long, value_enum)]
        notion: Option<NotionArg>,
        #[arg(long, default_value_t = 2)]
        k: u32,
        /// Overall time limit in seconds
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long, default_value_t = 8)]
        term_depth: u32,
        #[arg(long)]
        json: bool,
        #[arg(long, default_value = "rmfa-like", value_parser = ["rmfa-like", "mfa"])]
        acyclic_mode: String,
        /// Run every check even after a definitive verdict
        #[arg(long)]
        all: bool,
        /// Disable the injectivity filter of the prefix search (unsound; for experiments)
        #[arg(long, hide = true)]
        no_injectivity: bool,
    },
    /// Run the restricted chase and print its results
    Chase {
        rules: PathBuf,
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        max_vertices: usize,
        #[arg(long, default_value_t = 10_000)]
        max_depth: usize,
        #[arg(long, default_value_t = 64)]
        max_term_depth: u32,
        /// Write the chase tree in GraphViz format
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Print one line per chase tree vertex
        #[arg(long)]
        trace: bool,
    },
    /// Decide entailment of a boolean conjunctive query
    Entails {
        rules: PathBuf,
        data: Option<PathBuf>,
        /// Query atoms; defaults to the first query in the rule file
        #[arg(long)]
        query: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        max_vertices: usize,
        #[arg(long, default_value_t = 10_000)]
        max_depth: usize,
    },
    /// Classify every .drls file in a directory
    Batch {
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Per-file time limit in seconds
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the non-termination witness of a rule set
    Explain {
        file: PathBuf,
        /// Re-render a witness saved as JSON instead of searching
        #[arg(long)]
        witness: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "rpcs")]
        notion: NotionArg,
        #[arg(long)]
        json: bool,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure { code: 1, msg: format!("{e:#}") }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure { code: EXIT_IO, msg: format!("{}: {e}", path.display()) })
}

fn load(path: &Path) -> Result<(SourceProgram, RuleSet), Failure> {
    let text = read(path)?;
    let program = parse(&text).map_err(|e| Failure { code: EXIT_PARSE, msg: format!("{}:{e}", path.display()) })?;
    let rules = program.rule_set().map_err(|e| Failure { code: EXIT_PARSE, msg: format!("{}: {e}", path.display()) })?;
    Ok((program, rules))
}

fn load_database(program: &SourceProgram, data: Option<&Path>) -> Result<FactSet, Failure> {
    let mut db: FactSet = program.facts.iter().cloned().collect();
    if let Some(path) = data {
        let (extra, rules) = load(path)?;
        if !rules.is_empty() {
            return Err(Failure { code: EXIT_PARSE, msg: format!("{}: data file contains rules", path.display()) });
        }
        db.extend(extra.facts);
    }
    Ok(db)
}

fn seconds(s: Option<f64>) -> Option<Duration> {
    s.map(|s| Duration::from_secs_f64(s.max(0.0)))
}

fn notion_checks(n: Option<NotionArg>) -> Vec<Check> {
    match n {
        None => ClassifyOptions::default().checks,
        Some(NotionArg::Acyclic) => vec![Check::Acyclic],
        Some(NotionArg::Drpc) => vec![Check::Cyclicity(Notion::Drpc)],
        Some(NotionArg::Rpcs) => vec![Check::Cyclicity(Notion::RpcS)],
        Some(NotionArg::Rpc) => vec![Check::Cyclicity(Notion::Rpc)],
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Classify { file, notion, k, timeout, term_depth, json, acyclic_mode, all, no_injectivity } => {
            let (_, rules) = load(&file)?;
            let opts = ClassifyOptions {
                checks: notion_checks(notion),
                exhaustive: all,
                k,
                acyclic_mode: acyclic_mode.parse::<AcyclicMode>().map_err(anyhow::Error::msg)?,
                timeout: seconds(timeout),
                term_depth,
                injectivity: !no_injectivity,
            };
            let report = classify(&file.display().to_string(), &rules, &opts).context("classification failed")?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report.to_json(&rules)).expect("json"));
            } else {
                print!("{}", report.render(&rules));
            }
        }
        Command::Chase { rules, data, max_vertices, max_depth, max_term_depth, dot, trace } => {
            let (program, rule_set) = load(&rules)?;
            let db = load_database(&program, data.as_deref())?;
            let budget = ChaseBudget { max_vertices, max_depth, max_term_depth };
            let tree = run_chase(&rule_set, &db, budget).context("chase failed")?;
            if let Some(path) = dot {
                std::fs::write(&path, tree.to_dot(&rule_set))
                    .map_err(|e| Failure { code: EXIT_IO, msg: format!("{}: {e}", path.display()) })?;
            }
            if trace {
                print!("{}", tree.trace(&rule_set));
            }
            match tree.status {
                ChaseStatus::Complete => {
                    let sets = results(&tree).context("chase failed")?;
                    println!("complete: {} vertices, {} result(s)", tree.len(), sets.len());
                    for (i, set) in sets.iter().enumerate() {
                        println!("result {}:", i + 1);
                        for line in render_facts(set.sorted()).lines() {
                            println!("  {line}");
                        }
                    }
                }
                ChaseStatus::BudgetExhausted => {
                    println!("budget-exhausted: stopped after {} vertices", tree.len());
                }
            }
        }
        Command::Entails { rules, data, query, max_vertices, max_depth } => {
            let (program, rule_set) = load(&rules)?;
            let db = load_database(&program, data.as_deref())?;
            let atoms = match query {
                Some(q) => parse_query(&q).map_err(|e| Failure { code: EXIT_PARSE, msg: format!("query: {e}") })?.atoms,
                None => program
                    .queries
                    .first()
                    .map(|q| q.atoms.clone())
                    .ok_or_else(|| Failure { code: EXIT_PARSE, msg: "no query given".into() })?,
            };
            let budget = ChaseBudget { max_vertices, max_depth, ..ChaseBudget::default() };
            println!("{}", entails(&rule_set, &db, &atoms, budget).context("chase failed")?);
        }
        Command::Batch { dir, jobs, timeout, csv } => batch(&dir, jobs, seconds(timeout), csv.as_deref())?,
        Command::Explain { file, witness, notion, json } => {
            let (_, rules) = load(&file)?;
            let prefix = match witness {
                Some(path) => {
                    let text = read(&path)?;
                    let value: serde_json::Value = serde_json::from_str(&text)
                        .map_err(|e| Failure { code: EXIT_PARSE, msg: format!("{}: {e}", path.display()) })?;
                    let value = if value.get("triggers").is_some() { value } else { find_witness(&value) };
                    Some(
                        CyclicityPrefix::from_json(&value, &rules)
                            .map_err(|e| Failure { code: EXIT_PARSE, msg: format!("{}: {e}", path.display()) })?,
                    )
                }
                None => {
                    let opts = ClassifyOptions { checks: notion_checks(Some(notion)), ..ClassifyOptions::default() };
                    let report = classify(&file.display().to_string(), &rules, &opts).context("classification failed")?;
                    report.cyclicity.into_iter().find_map(|v| v.witness)
                }
            };
            match (prefix, json) {
                (Some(p), true) => println!("{}", serde_json::to_string_pretty(&p.to_json(&rules)).expect("json")),
                (Some(p), false) => print!("{}", p.render(&rules)),
                (None, _) => println!("no witness found"),
            }
        }
    }
    Ok(())
}

/// The witness object inside a classification report.
fn find_witness(report: &serde_json::Value) -> serde_json::Value {
    report["notionResults"]
        .as_array()
        .into_iter()
        .flatten()
        .find_map(|r| r.get("witness").filter(|w| !w.is_null()).cloned())
        .unwrap_or(serde_json::Value::Null)
}

struct Row {
    file: String,
    bucket: String,
    acyclic: String,
    drpc: String,
    rpcs: String,
    combined: String,
    ms: u128,
}

fn row_for(path: &Path, timeout: Option<Duration>) -> Row {
    let start = Instant::now();
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let error = |msg: String| Row {
        file: name.clone(),
        bucket: "-".into(),
        acyclic: "-".into(),
        drpc: "-".into(),
        rpcs: "-".into(),
        combined: format!("error: {msg}"),
        ms: start.elapsed().as_millis(),
    };
    let rules = match load(path) {
        Ok((_, r)) => r,
        Err(f) => return error(f.msg),
    };
    let opts = ClassifyOptions { timeout, ..ClassifyOptions::default() };
    let report: ClassificationReport = match classify(&name, &rules, &opts) {
        Ok(r) => r,
        Err(e) => return error(e.to_string()),
    };
    let cyc = |n: Notion| report.cyclicity_result(n).map_or("-".to_string(), |r: CyclicityResult| r.to_string());
    Row {
        file: name.clone(),
        bucket: bucket(&rules),
        acyclic: report.acyclic.as_ref().map_or("-".into(), |a| a.result.to_string()),
        drpc: cyc(Notion::Drpc),
        rpcs: cyc(Notion::RpcS),
        combined: report.combined.to_string(),
        ms: start.elapsed().as_millis(),
    }
}

fn batch(dir: &Path, jobs: usize, timeout: Option<Duration>, csv_path: Option<&Path>) -> Result<(), Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure { code: EXIT_IO, msg: format!("{}: {e}", dir.display()) })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "drls"))
        .collect();
    files.sort();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(anyhow::Error::from)?;
    let rows: Vec<Row> = pool.install(|| files.par_iter().map(|p| row_for(p, timeout)).collect());

    println!("{:<28} {:<10} {:<19} {:<19} {:<19} {:<18} {:>7}", "file", "bucket", "acyclic", "drpc", "rpcs", "combined", "ms");
    for r in &rows {
        println!(
            "{:<28} {:<10} {:<19} {:<19} {:<19} {:<18} {:>7}",
            r.file, r.bucket, r.acyclic, r.drpc, r.rpcs, r.combined, r.ms
        );
    }
    let mut buckets: Vec<&str> = rows.iter().filter(|r| r.bucket != "-").map(|r| r.bucket.as_str()).collect();
    buckets.sort();
    buckets.dedup();
    println!();
    println!("{:<10} {:>6} {:>12} {:>18} {:>8}", "bucket", "total", "terminating", "never-terminating", "unknown");
    for b in buckets {
        let in_b: Vec<&Row> = rows.iter().filter(|r| r.bucket == b).collect();
        let count = |c: Combined| in_b.iter().filter(|r| r.combined == c.to_string()).count();
        println!(
            "{:<10} {:>6} {:>12} {:>18} {:>8}",
            b,
            in_b.len(),
            count(Combined::Terminating),
            count(Combined::NeverTerminating),
            count(Combined::Unknown)
        );
    }
    let errors = rows.iter().filter(|r| r.combined.starts_with("error")).count();
    println!("files: {}, errors: {errors}", rows.len());

    if let Some(path) = csv_path {
        let io = |e: csv::Error| Failure { code: EXIT_IO, msg: format!("{}: {e}", path.display()) };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["file", "bucket", "acyclic", "drpc", "rpcs", "combined", "ms"]).map_err(io)?;
        for r in &rows {
            let ms = r.ms.to_string();
            w.write_record([&r.file, &r.bucket, &r.acyclic, &r.drpc, &r.rpcs, &r.combined, &ms]).map_err(io)?;
        }
        w.flush().map_err(|e| Failure { code: EXIT_IO, msg: format!("{}: {e}", path.display()) })?;
    }
    if !rows.is_empty() && errors == rows.len() {
        return Err(Failure { code: EXIT_PARSE, msg: "no file could be analyzed".into() });
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CHASE_SENTINEL_LOG")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
