use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use formnet_core::graph::is_generically_rigid;
use formnet_core::loss::StrategyKind;
use formnet_core::results::{summary_from_timeseries, write_timeseries, SummaryFile};
use formnet_core::scenario_file::ScenarioFile;
use formnet_core::sim::{compare_strategies, run_scenario, Scenario, ScenarioResult, Summary};
use formnet_core::spanning_tree::{build_mst, prune_unhealthy, LinkTokenVector};
use formnet_core::Error;

const SEED_ENV: &str = "FORMNET_SEED";

#[derive(Parser)]
#[command(
    name = "formnet",
    version,
    about = "Formation control over lossy links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Rank test of the desired formation.
    Rigidity {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run one scenario and write timeseries + summary.json.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run the scenario once per strategy on shared loss and noise draws.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated: zero, hold, combination[:gamma].
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
        /// More strategies, same syntax.
        #[arg(value_name = "STRATEGY")]
        extra: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Prune dropped links and build the spanning tree of the rest.
    Mst {
        #[arg(long)]
        scenario: PathBuf,
        /// One bit per edge in file order, 1 = delivered.
        #[arg(long, conflicts_with = "failed")]
        tokens: Option<String>,
        /// Dropped edges as i-j pairs, e.g. 1-2,3-4.
        #[arg(long, value_delimiter = ',')]
        failed: Vec<String>,
    },
    /// Check a scenario file, or recompute a bundle's summary from its time series.
    Validate {
        #[arg(long, required_unless_present = "out")]
        scenario: Option<PathBuf>,
        /// Results directory written by simulate or compare.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Outcome {
    Success,
    Negative,
}

fn fail(msg: impl std::fmt::Display) -> String {
    msg.to_string()
}

fn load(path: &Path) -> Result<ScenarioFile, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ScenarioFile::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Effective seed: `--seed`, else `FORMNET_SEED`, else the file's seed.
fn resolve_seed(file: &ScenarioFile, flag: Option<u64>) -> Result<(u64, Option<u64>), String> {
    let env = match std::env::var(SEED_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<u64>()
                .map_err(|_| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?,
        ),
        Err(_) => None,
    };
    Ok((flag.or(env).unwrap_or(file.seed), env))
}

fn prepare(
    path: &Path,
    seed: Option<u64>,
) -> Result<(ScenarioFile, Scenario, u64, Option<u64>), String> {
    let file = load(path)?;
    let (seed, env) = resolve_seed(&file, seed)?;
    let mut scenario = file.to_scenario().map_err(fail)?;
    scenario.seed = seed;
    Ok((file, scenario, seed, env))
}

fn write_bundle(
    dir: &Path,
    summary: &SummaryFile,
    result: &ScenarioResult,
    format: Format,
) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    match format {
        Format::Csv => {
            let path = dir.join("timeseries.csv");
            let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            write_timeseries(result, std::io::BufWriter::new(file)).map_err(fail)?;
        }
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&result.records).map_err(fail)?;
            text.push('\n');
            write_file(&dir.join("timeseries.json"), &text)?;
        }
    }
    write_file(&dir.join("summary.json"), &summary.to_json())
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn rigidity(path: &Path) -> Result<Outcome, String> {
    let file = load(path)?;
    let scenario = file.to_scenario().map_err(fail)?;
    let report =
        is_generically_rigid(&scenario.graph, scenario.formation.offsets()).map_err(fail)?;
    let verdict = if report.rigid { "RIGID" } else { "NOT RIGID" };
    println!(
        "rank {} / required {} → {verdict}",
        report.rank, report.required
    );
    println!(
        "degenerate placement: {}",
        if report.degenerate_placement {
            "yes"
        } else {
            "no"
        }
    );
    Ok(if report.rigid {
        Outcome::Success
    } else {
        Outcome::Negative
    })
}

fn simulate(path: &Path, out: &Path, seed: Option<u64>, format: Format) -> Result<Outcome, String> {
    let (file, scenario, seed, env) = prepare(path, seed)?;
    let result = run_scenario(&scenario).map_err(fail)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    write_bundle(
        out,
        &SummaryFile::new(file, seed, env, &[&result]),
        &result,
        format,
    )?;
    let s = &result.summary;
    println!(
        "{}: final formation error {:.6e}, mean cov trace {:.6e}, {} disconnected epochs",
        result.strategy, s.final_formation_error, s.mean_cov_trace, s.disconnect_count
    );
    Ok(Outcome::Success)
}

fn compare(
    path: &Path,
    out: &Path,
    names: &[String],
    seed: Option<u64>,
    format: Format,
) -> Result<Outcome, String> {
    let (file, scenario, seed, env) = prepare(path, seed)?;
    let kinds = if names.is_empty() {
        vec![
            StrategyKind::ToZero,
            StrategyKind::ToHold,
            StrategyKind::Combination { gamma: 0.5 },
        ]
    } else {
        names
            .iter()
            .map(|n| StrategyKind::parse(n))
            .collect::<Result<Vec<_>, Error>>()
            .map_err(fail)?
    };
    let (report, results) = compare_strategies(&scenario, &kinds).map_err(fail)?;
    for w in &results[0].warnings {
        eprintln!("warning: {w}");
    }
    for result in &results {
        let dir = out.join(result.strategy.replace(':', "-"));
        write_bundle(
            &dir,
            &SummaryFile::new(file.clone(), seed, env, &[result]),
            result,
            format,
        )?;
    }
    let doc = serde_json::json!({
        "tool": "formnet",
        "version": formnet_core::VERSION,
        "seed": seed,
        "seed_env_override": env,
        "report": report,
    });
    write_file(
        &out.join("comparison.json"),
        &(serde_json::to_string_pretty(&doc).map_err(fail)? + "\n"),
    )?;

    println!(
        "{:<4} {:<18} {:>16} {:>16}",
        "rank", "strategy", "mean cov trace", "mean form. err"
    );
    for (i, label) in report.ranking.iter().enumerate() {
        let row = report
            .rows
            .iter()
            .find(|r| &r.strategy == label)
            .expect("ranked row exists");
        println!(
            "{:<4} {:<18} {:>16.9e} {:>16.9e}",
            i + 1,
            label,
            row.mean_cov_trace,
            row.mean_formation_error
        );
    }
    if report.tie && report.rows.len() > 1 {
        println!(
            "TIE: all {} strategies produced identical results",
            report.rows.len()
        );
    }
    Ok(Outcome::Success)
}

fn parse_failed(file: &ScenarioFile, failed: &[String]) -> Result<LinkTokenVector, String> {
    let mut tokens = vec![true; file.edges.len()];
    for spec in failed {
        let (a, b) = spec
            .split_once('-')
            .and_then(|(a, b)| {
                Some((
                    a.trim().parse::<usize>().ok()?,
                    b.trim().parse::<usize>().ok()?,
                ))
            })
            .ok_or_else(|| format!("bad edge `{spec}`, expected i-j"))?;
        let e = file
            .edges
            .iter()
            .position(|edge| {
                let ends = edge.endpoints();
                ends == (a, b) || ends == (b, a)
            })
            .ok_or_else(|| format!("no edge between agents {a} and {b}"))?;
        tokens[e] = false;
    }
    Ok(LinkTokenVector { tokens, epoch: 0 })
}

fn edge_list(file: &ScenarioFile, edges: &[usize]) -> String {
    let parts: Vec<String> = edges
        .iter()
        .map(|&e| {
            let (a, b) = file.edges[e].endpoints();
            format!("({a},{b})")
        })
        .collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(" ")
    }
}

fn mst(path: &Path, bits: Option<&str>, failed: &[String]) -> Result<Outcome, String> {
    let file = load(path)?;
    let scenario = file.to_scenario().map_err(fail)?;
    let tokens = match bits {
        Some(bits) => LinkTokenVector::parse_bitstring(bits, 0)
            .ok_or_else(|| format!("tokens `{bits}` must be 0s and 1s"))?,
        None => parse_failed(&file, failed)?,
    };
    let healthy = prune_unhealthy(&scenario.graph, &tokens).map_err(fail)?;
    println!("retained: {}", edge_list(&file, &healthy.edges));
    let weights = scenario.graph.link_weights(&scenario.initial);
    match build_mst(&scenario.graph, &healthy, &weights) {
        Ok(tree) => {
            println!("tree: {}", edge_list(&file, &tree.sorted_edges()));
            println!("total weight: {}", tree.total_weight);
            Ok(Outcome::Success)
        }
        Err(Error::Disconnected { components }) => {
            let groups: Vec<String> = components
                .iter()
                .map(|c| {
                    format!(
                        "{{{}}}",
                        c.iter()
                            .map(|v| (v + 1).to_string())
                            .collect::<Vec<_>>()
                            .join(",")
                    )
                })
                .collect();
            println!("DISCONNECTED: {}", groups.join(" | "));
            Ok(Outcome::Negative)
        }
        Err(e) => Err(e.to_string()),
    }
}

fn bundle_dirs(out: &Path) -> Result<Vec<PathBuf>, String> {
    if out.join("summary.json").exists() {
        return Ok(vec![out.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(out)
        .map_err(|e| format!("{}: {e}", out.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.join("summary.json").exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(format!("{}: no summary.json found", out.display()));
    }
    Ok(dirs)
}

fn summary_from_json_records(text: &str) -> Result<Summary, String> {
    let records: Vec<serde_json::Value> = serde_json::from_str(text).map_err(fail)?;
    let series = records
        .iter()
        .map(|r| {
            let num = |key: &str| {
                r[key]
                    .as_f64()
                    .ok_or_else(|| format!("record is missing `{key}`"))
            };
            let cov = if r["cov_trace"].is_null() {
                Ok(f64::INFINITY)
            } else {
                num("cov_trace")
            };
            Ok((num("formation_error")?, cov?, !r["mst"].is_null()))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(Summary::from_series(&series))
}

fn validate(scenario: Option<&Path>, out: Option<&Path>) -> Result<Outcome, String> {
    let mut outcome = Outcome::Success;
    if let Some(path) = scenario {
        let file = load(path)?;
        let warnings = file
            .to_scenario()
            .and_then(|s| s.validate())
            .map_err(fail)?;
        for w in &warnings {
            println!("warning: {w}");
        }
        println!("{}: ok", path.display());
    }
    if let Some(out) = out {
        for dir in bundle_dirs(out)? {
            let text = fs::read_to_string(dir.join("summary.json")).map_err(fail)?;
            let summary: SummaryFile =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", dir.display()))?;
            let recomputed = if dir.join("timeseries.csv").exists() {
                let f = fs::File::open(dir.join("timeseries.csv")).map_err(fail)?;
                summary_from_timeseries(f).map_err(fail)?
            } else {
                summary_from_json_records(
                    &fs::read_to_string(dir.join("timeseries.json")).map_err(fail)?,
                )?
            };
            let stored = &summary
                .runs
                .first()
                .ok_or("summary.json has no runs")?
                .summary;
            if stored == &recomputed {
                println!("{}: summary matches time series", dir.display());
            } else {
                println!(
                    "{}: MISMATCH\n  stored     {stored:?}\n  recomputed {recomputed:?}",
                    dir.display()
                );
                outcome = Outcome::Negative;
            }
        }
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Rigidity { scenario } => rigidity(scenario),
        Command::Simulate {
            scenario,
            out,
            seed,
            format,
        } => simulate(scenario, out, *seed, *format),
        Command::Compare {
            scenario,
            out,
            strategies,
            extra,
            seed,
            format,
        } => {
            let names: Vec<String> = strategies.iter().chain(extra).cloned().collect();
            compare(scenario, out, &names, *seed, *format)
        }
        Command::Mst {
            scenario,
            tokens,
            failed,
        } => mst(scenario, tokens.as_deref(), failed),
        Command::Validate { scenario, out } => validate(scenario.as_deref(), out.as_deref()),
    };
    match outcome {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Negative) => ExitCode::from(2),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
