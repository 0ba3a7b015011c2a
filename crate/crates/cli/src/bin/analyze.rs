//! Builds the report tables from a directory of run logs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use botboard_analysis::{emit_report, Formats, ReportOptions, SigmaKind};
use botboard_core::runlog::RunLog;
use clap::Parser;

#[derive(Parser)]
#[command(name = "analyze", version, about = "Summary tables over evaluation run logs")]
struct Args {
    /// Directory searched recursively for run-log *.json files.
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Hard-question thresholds, in standard deviations above the mean.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    k_sigma: Vec<f64>,
    /// Output formats: md, csv.
    #[arg(long, value_delimiter = ',', default_value = "md,csv")]
    format: Vec<String>,
    /// Standard deviation for the hard-question threshold: population or sample.
    #[arg(long, default_value = "population")]
    sigma: String,
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("analyze: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> Result<(), String> {
    let mut formats = Formats {
        markdown: false,
        csv: false,
    };
    for f in &args.format {
        match f.trim() {
            "md" | "markdown" => formats.markdown = true,
            "csv" => formats.csv = true,
            other => return Err(format!("unknown format {other:?}, expected md or csv")),
        }
    }
    let sigma_kind = match args.sigma.as_str() {
        "population" => SigmaKind::Population,
        "sample" => SigmaKind::Sample,
        other => return Err(format!("unknown sigma {other:?}, expected population or sample")),
    };
    if let Some(k) = args.k_sigma.iter().find(|k| !k.is_finite()) {
        return Err(format!("--k-sigma must be finite, got {k}"));
    }

    let logs = load_logs(&args.logs)?;
    if logs.is_empty() {
        return Err(format!("no run logs under {}", args.logs.display()));
    }
    let records: Vec<_> = logs.iter().map(|l| l.record.clone()).collect();
    let options = ReportOptions {
        k_sigmas: args.k_sigma,
        sigma_kind,
        formats,
    };
    let report = emit_report(&records, &logs, &options).map_err(|e| e.to_string())?;
    let written = report
        .write_to(&args.out, formats)
        .map_err(|e| format!("{}: {e}", args.out.display()))?;
    println!(
        "{} run logs, {} ok",
        logs.len(),
        records.iter().filter(|r| r.is_ok()).count()
    );
    for name in written {
        println!("{}", args.out.join(name).display());
    }
    Ok(())
}

fn load_logs(dir: &Path) -> Result<Vec<RunLog>, String> {
    let mut logs = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| e.to_string())?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let log: RunLog = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        logs.push(log);
    }
    Ok(logs)
}
