use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args as ClapArgs, Parser, Subcommand};
use lace_core::api::HttpDriver;
use lace_core::session::Measure;
use lace_core::study::script::BUNDLED_SCRIPTS;
use lace_core::study::{analyze, bundled_script, read_csv, run_script, run_script_with, Alternative, ReplayScript};

/// Scripted session replay and workflow statistics.
#[derive(Debug, Parser)]
#[command(name = "lace-study", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Replay a script and print its outcome as JSON.
    Run(RunArgs),
    /// Friedman, Kendall's W and pairwise Wilcoxon tests on a Likert CSV.
    Stats(StatsArgs),
    /// List the bundled task scripts, or write them to a directory.
    Scripts {
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

#[derive(Debug, ClapArgs)]
struct RunArgs {
    /// Script file, or `bundled:<name>` for a bundled script.
    script: String,
    /// Replay against a running server instead of in-process.
    #[arg(long, conflicts_with = "embedded")]
    server: Option<String>,
    /// Replay in-process (the default).
    #[arg(long)]
    embedded: bool,
    /// Write the outcome here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, ClapArgs)]
struct StatsArgs {
    /// CSV with header participant,workflow,measure,score.
    csv: PathBuf,
    /// Measures to analyze; all measures present by default.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    measure: Vec<Measure>,
    /// One-sided tests of the first workflow scoring lower (the default).
    #[arg(long, conflicts_with = "two_sided")]
    one_sided: bool,
    #[arg(long)]
    two_sided: bool,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a flat CSV report.
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

fn load_script(source: &str) -> Result<ReplayScript, String> {
    if let Some(name) = source.strip_prefix("bundled:") {
        return bundled_script(name).ok_or_else(|| format!("no bundled script {name:?}"));
    }
    let text = fs::read_to_string(source).map_err(|e| format!("{source}: {e}"))?;
    ReplayScript::from_json(&text).map_err(|e| format!("{source}: {e}"))
}

fn emit(out: Option<&Path>, json: &str) -> Result<(), String> {
    match out {
        Some(path) => fs::write(path, format!("{json}\n")).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<(), String> {
    let script = load_script(&args.script)?;
    let outcome = match &args.server {
        Some(url) => run_script_with(&script, &mut HttpDriver::new(url.clone())),
        None => run_script(&script),
    }
    .map_err(|e| e.to_string())?;
    emit(args.out.as_deref(), &serde_json::to_string_pretty(&outcome).expect("outcome serializes"))
}

fn stats(args: StatsArgs) -> Result<(), String> {
    let file = fs::File::open(&args.csv).map_err(|e| format!("{}: {e}", args.csv.display()))?;
    let tables = read_csv(file).map_err(|e| e.to_string())?;
    let selected: Vec<_> = if args.measure.is_empty() {
        tables.values().collect()
    } else {
        args.measure
            .iter()
            .map(|m| tables.get(m).ok_or_else(|| format!("no ratings for measure {m}")))
            .collect::<Result<_, _>>()?
    };
    let alternative = if args.two_sided { Alternative::TwoSided } else { Alternative::Less };
    let report = analyze(selected, alternative).map_err(|e| e.to_string())?;
    if let Some(path) = &args.csv_out {
        let mut f = fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
        report.write_csv(&mut f).map_err(|e| e.to_string())?;
        f.flush().map_err(|e| e.to_string())?;
    }
    emit(args.out.as_deref(), &serde_json::to_string_pretty(&report).expect("report serializes"))
}

fn scripts(dump: Option<PathBuf>) -> Result<(), String> {
    for (name, text) in BUNDLED_SCRIPTS {
        match &dump {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| e.to_string())?;
                let path = dir.join(format!("{name}.json"));
                fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
                println!("{}", path.display());
            }
            None => println!("{name}"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run(a) => run(a),
        Cmd::Stats(a) => stats(a),
        Cmd::Scripts { dump } => scripts(dump),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lace-study: {e}");
            ExitCode::FAILURE
        }
    }
}
