use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dyrun::attacker::fuzz::{fuzz_attacks, FuzzConfig};
use dyrun::attacker::{honest_script, parse_attack, run_attack};
use dyrun::exec::Execution;
use dyrun::level::{explain, level, Level};
use dyrun::report::RunReport;
use dyrun::syntax::{parse_dump, parse_term};
use dyrun::Protocol;

#[derive(Parser)]
#[command(name = "dyrun", version, about = "Run, attack and fuzz protocol code against a symbolic crypto model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an attack script, or the built-in honest relay.
    Run {
        /// rpc-correct, rpc-flawed or otway-rees.
        protocol: Protocol,
        /// Attack script in the DSL.
        #[arg(required_unless_present = "honest", conflicts_with = "honest")]
        script: Option<PathBuf>,
        #[arg(long)]
        honest: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
        /// Write the final log and table to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run many random attack programs and report the verdicts.
    Fuzz {
        protocol: Protocol,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
        max_len: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for counterexample scripts.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        sequential: bool,
        /// Skip the built-in scripts and their mutations.
        #[arg(long)]
        no_corpus: bool,
    },
    /// Decide a level judgement against a dumped log.
    Query {
        log_file: PathBuf,
        #[arg(long, value_enum)]
        level: LevelArg,
        /// Term in canonical rendering, e.g. 'Pair(Literal(0x31),Literal("Bob"))'.
        #[arg(long)]
        term: String,
        #[arg(long)]
        explain: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Low,
    High,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Level {
        match l {
            LevelArg::Low => Level::Low,
            LevelArg::High => Level::High,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn emit(s: &str) {
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Run {
            protocol,
            script,
            honest: _,
            seed,
            json,
            dump,
        } => {
            let text = match &script {
                Some(path) => {
                    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
                }
                None => honest_script(protocol).to_string(),
            };
            let name = script.as_ref().map_or("<honest>".into(), |p| p.display().to_string());
            let prog = parse_attack(&text, protocol).with_context(|| name.clone())?;
            let out = run_attack(&prog, protocol, seed);
            let report = RunReport::from_outcome(&out);
            if json {
                emit(&format!("{}\n", report.to_json()));
            } else {
                emit(&report.to_string());
            }
            if let Some(path) = dump {
                fs::write(&path, out.cs.dump()).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(report.exit_code as u8)
        }
        Cmd::Fuzz {
            protocol,
            count,
            max_len,
            seed,
            out,
            json,
            sequential,
            no_corpus,
        } => {
            let mut cfg = FuzzConfig::new(protocol, count as usize, max_len as usize, seed);
            cfg.use_corpus = !no_corpus;
            if sequential {
                cfg.exec = Execution::Sequential;
            }
            let report = fuzz_attacks(&cfg);
            if let Some(dir) = &out {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                for c in &report.counterexamples {
                    let path = dir.join(format!("counterexample_{:06}.dsl", c.index));
                    fs::write(&path, &c.script).with_context(|| format!("writing {}", path.display()))?;
                }
            }
            let mut o = String::new();
            if json {
                let _ = writeln!(o, "{}", serde_json::to_string_pretty(&report)?);
            } else {
                let _ = writeln!(o, "protocol: {protocol}  programs: {count}  max length: {max_len}  seed: {seed}");
                for (verdict, n) in &report.histogram {
                    let _ = writeln!(o, "  {verdict:<20} {n}");
                }
                for (kind, n) in &report.assumption_failures {
                    let _ = writeln!(o, "    {kind:<18} {n}");
                }
                let _ = writeln!(o, "assertions checked: {}", report.assertions_checked);
                let _ = writeln!(o, "suppressed assertion failures: {}", report.suppressed_assertions);
                let _ = writeln!(o, "counterexamples: {}", report.counterexamples.len());
                let _ = writeln!(o, "contract faults: {}", report.faults.len());
                let _ = writeln!(
                    o,
                    "weak secrecy: {} violations over {} runs",
                    report.secrecy_violations.len(),
                    report.secrecy_checked_runs
                );
                for c in report.counterexamples.iter().take(3) {
                    let _ = writeln!(o, "\n# program {}: {}\n{}", c.index, c.verdict, c.script);
                }
            }
            emit(&o);
            Ok(if report.counterexamples.is_empty() { 0 } else { 10 })
        }
        Cmd::Query {
            log_file,
            level: l,
            term,
            explain: want_explain,
        } => {
            let text = fs::read_to_string(&log_file)
                .with_context(|| format!("reading {}", log_file.display()))?;
            let dump = parse_dump(&text).with_context(|| log_file.display().to_string())?;
            let t = parse_term(&term).context("--term")?;
            let l = Level::from(l);
            let mut o = format!("{}\n", level(l, &t, &dump.log));
            if want_explain {
                match explain(l, &t, &dump.log) {
                    Some(d) => o.push_str(&d.to_string()),
                    None => o.push_str("no derivation\n"),
                }
            }
            emit(&o);
            Ok(0)
        }
    }
}
