use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use dockmine::corpus::{discover, ingest};
use dockmine::detect::{check_file, Violation};
use dockmine::miner::{mine, report_json, MineConfig, DEFAULT_MAX_LEN, DEFAULT_MIN_SUPPORT};
use dockmine::rules::{builtin_catalog, load_rules, Level, RuleCatalog};
use dockmine::{analyze, dockerfile};

const CLEAN: u8 = 0;
const MANDATORY: u8 = 1;
const ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "dockmine", about = "Mine Dockerfile rules and check Dockerfiles against them")]
#[command(disable_version_flag = true, arg_required_else_help = true)]
struct Cli {
    /// Print tool and catalog versions
    #[arg(short = 'V', long)]
    version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the instruction listing or the token sequence of a Dockerfile
    Parse {
        file: PathBuf,
        #[arg(long)]
        dump_ir: bool,
    },
    /// Mine frequent patterns from a directory of Dockerfiles
    Mine {
        dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
        min_support: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
        /// Report destination (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the corpus manifest here
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a Dockerfile or every Dockerfile under a directory
    Check {
        path: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Comma-separated rule ids to check
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Records,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { ERROR } else { CLEAN });
        }
    };
    if cli.version {
        println!(
            "dockmine {} (catalog {})",
            env!("CARGO_PKG_VERSION"),
            builtin_catalog().version
        );
        return ExitCode::from(CLEAN);
    }
    let code = match cli.command {
        Some(Command::Parse { file, dump_ir }) => cmd_parse(&file, dump_ir),
        Some(Command::Mine {
            dir,
            min_support,
            max_len,
            out,
            manifest,
            jobs,
        }) => with_jobs(jobs, || {
            cmd_mine(&dir, MineConfig { min_support, max_len }, out.as_deref(), manifest.as_deref())
        }),
        Some(Command::Check {
            path,
            rules,
            format,
            only,
            jobs,
        }) => with_jobs(jobs, || cmd_check(&path, rules.as_deref(), format, &only)),
        None => ERROR,
    };
    ExitCode::from(code)
}

fn with_jobs(jobs: Option<usize>, f: impl FnOnce() -> u8 + Send) -> u8 {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n.max(1));
    }
    match builder.build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            eprintln!("error: {e}");
            ERROR
        }
    }
}

fn cmd_parse(file: &Path, dump_ir: bool) -> u8 {
    let text = match std::fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            return ERROR;
        }
    };
    let name = file.display().to_string();
    if dump_ir {
        match analyze(&name, &text) {
            Ok(a) => print!("{}", a.ir.dump()),
            Err(e) => {
                eprintln!("{name}: {e}");
                return ERROR;
            }
        }
    } else {
        match dockerfile::parse_named(&name, &text) {
            Ok(ast) => {
                for ins in &ast.instructions {
                    println!(
                        "{}-{}\t{}",
                        ins.line_span.start,
                        ins.line_span.end,
                        ins.canonical()
                    );
                }
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                return ERROR;
            }
        }
    }
    CLEAN
}

fn cmd_mine(dir: &Path, config: MineConfig, out: Option<&Path>, manifest: Option<&Path>) -> u8 {
    if !(config.min_support > 0.0 && config.min_support <= 1.0) {
        eprintln!("error: --min-support must lie in (0, 1]");
        return ERROR;
    }
    let ingested = ingest(dir);
    for e in &ingested.errors {
        eprintln!("warning: skipped {e}");
    }
    if let Some(path) = manifest {
        let lines: String = ingested
            .entries
            .iter()
            .map(|e| e.manifest_line() + "\n")
            .collect();
        if let Err(e) = std::fs::write(path, lines) {
            eprintln!("{}: {e}", path.display());
            return ERROR;
        }
    }
    let corpus: Vec<_> = ingested
        .entries
        .iter()
        .filter(|e| e.gold_eligible())
        .filter_map(|e| ingested.analyses.get(&e.path))
        .map(|a| a.ir.clone())
        .collect();
    if corpus.is_empty() {
        eprintln!("error: no eligible Dockerfiles under {}", dir.display());
        return ERROR;
    }
    let groups = match mine(&corpus, config) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return ERROR;
        }
    };
    let report = serde_json::to_string_pretty(&report_json(config, &groups))
        .expect("report serializes");
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, report + "\n") {
                eprintln!("{}: {e}", path.display());
                return ERROR;
            }
        }
        None => println!("{report}"),
    }
    CLEAN
}

fn load_catalog(rules: Option<&Path>, only: &[u32]) -> Result<RuleCatalog, String> {
    let catalog = match rules {
        Some(p) => load_rules(p).map_err(|e| e.to_string())?,
        None => builtin_catalog(),
    };
    if only.is_empty() {
        return Ok(catalog);
    }
    let ids: BTreeSet<u32> = only.iter().copied().collect();
    if let Some(missing) = ids.iter().find(|id| catalog.get(**id).is_none()) {
        return Err(format!("--only: no rule with id {missing}"));
    }
    Ok(catalog.only(&ids))
}

fn render(file: &str, v: &Violation, format: Format) -> String {
    match format {
        Format::Text => format!(
            "{file}:{}: [{}] rule {} {}: {}",
            v.location.start, v.level, v.rule_id, v.rule_name, v.message
        ),
        Format::Records => serde_json::json!({
            "file": file,
            "line_start": v.location.start,
            "line_end": v.location.end,
            "rule_id": v.rule_id,
            "level": v.level.as_str(),
            "message": v.message,
        })
        .to_string(),
    }
}

fn cmd_check(path: &Path, rules: Option<&Path>, format: Format, only: &[u32]) -> u8 {
    let catalog = match load_catalog(rules, only) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ERROR;
        }
    };
    if !path.exists() {
        eprintln!("{}: no such file or directory", path.display());
        return ERROR;
    }
    let files = discover(path);
    let results: Vec<(String, Result<Vec<Violation>, String>)> = files
        .par_iter()
        .map(|f| {
            let name = f.display().to_string();
            let r = std::fs::read_to_string(f)
                .map_err(|e| e.to_string())
                .and_then(|text| check_file(&name, &text, &catalog).map_err(|e| e.to_string()));
            (name, r)
        })
        .collect();

    let mut code = CLEAN;
    for (name, r) in results {
        match r {
            Ok(vs) => {
                for v in &vs {
                    println!("{}", render(&name, v, format));
                    if v.level == Level::Mandatory && code == CLEAN {
                        code = MANDATORY;
                    }
                }
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                code = ERROR;
            }
        }
    }
    code
}
