//! Command-line front end: load a protocol and a goal, then build the
//! characteristic skeleton, enumerate shapes, or check the goal.
//!
//! Exit codes: 0 achieved, 1 counterexample, 2 bound exceeded,
//! 3 input or validation error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skeletal::charskel::{characteristic_skeleton, CsResult};
use skeletal::dot::to_dot;
use skeletal::goal::parse_goal;
use skeletal::protocol::parse_protocol;
use skeletal::report;
use skeletal::search::{check_goal, shapes, SearchBounds, Verdict};

#[derive(Parser)]
#[command(
    name = "skeletal",
    about = "Symbolic security-protocol goal checking over strand spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Protocol definition file.
    protocol: PathBuf,
    /// Goal definition file.
    goal: PathBuf,
    /// Maximum strands added during search.
    #[arg(long = "max-strands", default_value_t = SearchBounds::default().max_added_strands)]
    max_strands: usize,
    /// Maximum fresh atoms a single added strand may introduce.
    #[arg(long = "max-fresh", default_value_t = SearchBounds::default().max_fresh_atoms)]
    max_fresh: usize,
    /// Maximum states explored before giving up.
    #[arg(long = "max-states", default_value_t = SearchBounds::default().max_states)]
    max_states: usize,
    /// Directory for Graphviz output (one .dot file per skeleton).
    #[arg(long = "dot")]
    dot: Option<PathBuf>,
    /// Path for the JSON report.
    #[arg(long = "json")]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the characteristic skeleton of the goal's hypothesis.
    Cs(Common),
    /// Enumerate the shapes of the hypothesis' characteristic skeleton.
    Shapes(Common),
    /// Check whether the protocol achieves the goal.
    Check(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match &cli.command {
        Command::Cs(c) => ("cs", c),
        Command::Shapes(c) => ("shapes", c),
        Command::Check(c) => ("check", c),
    };
    match run(mode, common) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_dot(dir: &Path, name: &str, content: &str) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let path = dir.join(format!("{name}.dot"));
    std::fs::write(&path, content).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(mode: &str, common: &Common) -> Result<ExitCode, String> {
    let prot = parse_protocol(&read(&common.protocol)?)
        .map_err(|e| format!("{}: {e}", common.protocol.display()))?;
    let goal = parse_goal(&read(&common.goal)?, &prot)
        .map_err(|e| format!("{}: {e}", common.goal.display()))?;
    let bounds = SearchBounds {
        max_added_strands: common.max_strands,
        max_fresh_atoms: common.max_fresh,
        max_states: common.max_states,
    };
    if bounds.max_added_strands == 0 || bounds.max_fresh_atoms == 0 || bounds.max_states == 0 {
        return Err("bounds must be positive".into());
    }

    match mode {
        "cs" => {
            match characteristic_skeleton(&goal.hypothesis, &prot).map_err(|e| e.to_string())? {
                CsResult::Characteristic { skeleton, sigma } => {
                    let rec = report::skeleton_record(&skeleton, &prot);
                    println!(
                        "characteristic skeleton:\n{}",
                        serde_json::to_string_pretty(&rec).expect("records serialize")
                    );
                    let mut vars: Vec<String> =
                        sigma.iter().map(|(x, v)| format!("  {x} -> {v:?}")).collect();
                    vars.sort();
                    println!("assignment:\n{}", vars.join("\n"));
                    if let Some(dir) = &common.dot {
                        write_dot(dir, "cs", &to_dot(&skeleton, "cs"))?;
                    }
                    if let Some(path) = &common.json {
                        std::fs::write(
                            path,
                            serde_json::to_string_pretty(&rec).expect("records serialize"),
                        )
                        .map_err(|e| format!("{}: {e}", path.display()))?;
                    }
                    Ok(ExitCode::SUCCESS)
                }
                CsResult::Unsatisfiable { conjunct, reason } => {
                    println!("hypothesis unsatisfiable at conjunct {conjunct}: {reason}");
                    Ok(ExitCode::SUCCESS)
                }
            }
        }
        "shapes" => {
            let start =
                match characteristic_skeleton(&goal.hypothesis, &prot).map_err(|e| e.to_string())? {
                    CsResult::Characteristic { skeleton, .. } => skeleton,
                    CsResult::Unsatisfiable { conjunct, reason } => {
                        println!("hypothesis unsatisfiable at conjunct {conjunct}: {reason}");
                        return Ok(ExitCode::SUCCESS);
                    }
                };
            let result = shapes(&start, &prot, &bounds);
            let rec = report::shapes_record(&result, &bounds, &prot);
            println!("{}", serde_json::to_string_pretty(&rec).expect("records serialize"));
            if let Some(dir) = &common.dot {
                write_dot(dir, "start", &to_dot(&start, "start"))?;
                for (i, (_, sk)) in result.shapes.iter().enumerate() {
                    write_dot(dir, &format!("shape-{i}"), &to_dot(sk, &format!("shape-{i}")))?;
                }
            }
            if let Some(path) = &common.json {
                std::fs::write(
                    path,
                    serde_json::to_string_pretty(&rec).expect("records serialize"),
                )
                .map_err(|e| format!("{}: {e}", path.display()))?;
            }
            Ok(if result.exhausted { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        "check" => {
            let check = check_goal(&prot, &goal, &bounds).map_err(|e| e.to_string())?;
            let rec = report::verdict_record(&check, &prot);
            println!("{}", serde_json::to_string_pretty(&rec).expect("records serialize"));
            if let Some(dir) = &common.dot {
                if let Some(start) = &check.start {
                    write_dot(dir, "start", &to_dot(start, "start"))?;
                }
                for (i, (_, sk)) in check.shapes.iter().enumerate() {
                    write_dot(dir, &format!("shape-{i}"), &to_dot(sk, &format!("shape-{i}")))?;
                }
                if let Some((_, sk)) = &check.counterexample {
                    write_dot(dir, "counterexample", &to_dot(sk, "counterexample"))?;
                }
            }
            if let Some(path) = &common.json {
                std::fs::write(
                    path,
                    serde_json::to_string_pretty(&rec).expect("records serialize"),
                )
                .map_err(|e| format!("{}: {e}", path.display()))?;
            }
            Ok(match check.verdict {
                Verdict::Achieved => ExitCode::SUCCESS,
                Verdict::Counterexample => ExitCode::from(1),
                Verdict::BoundExceeded => ExitCode::from(2),
            })
        }
        _ => unreachable!("modes are fixed"),
    }
}
