use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ics_core::datasets::{load_split, DatasetManifest};
use ics_core::harness::{
    emit_report, load_experiment_data, run_experiment, run_grid, validate_report_json,
    write_run_manifest, ConfigFile, ReportFormat, ReportSet, RunManifest, Runtime,
};

/// In-context sampling experiments from the command line.
///
/// Any config field can be overridden with a flag of the same dotted name,
/// e.g. `--n 50`, `--backend.demo_quality_weight 0.3` or `--grid.k [3,5]`.
#[derive(Parser, Debug)]
#[command(name = "ics", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Backend kind: mock or openai-compatible.
    #[arg(long)]
    backend: Option<String>,
    /// Output directory for report.csv, report.json and manifest.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    max_concurrency: Option<usize>,
    /// Directory for the response and embedding caches.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment cell.
    Run(RunArgs),
    /// Run the cell matrix described by the config's [grid] table.
    Grid(RunArgs),
    /// Re-emit report.csv and report.json from a stored report.json.
    Report {
        /// Stored report.json.
        #[arg(long)]
        from: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Label of the row to measure deltas against.
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Check every split of a dataset against its schema and declared size.
    ValidateData {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "data")]
        data_root: PathBuf,
        /// TOML dataset manifest; the built-in catalog is used when absent.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

const KNOWN_FLAGS: [&str; 11] = [
    "config",
    "seed",
    "backend",
    "out",
    "max-concurrency",
    "cache-dir",
    "from",
    "baseline",
    "dataset",
    "data-root",
    "manifest",
];

/// Pulls `--dotted.key value` (or `--key=value`) config overrides out of
/// argv, leaving the flags clap knows about.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--").filter(|f| !f.is_empty()) else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_owned(), Some(v.to_owned())),
            None => (flag.to_owned(), None),
        };
        if KNOWN_FLAGS.contains(&name.as_str()) || name == "help" || name == "version" {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .with_context(|| format!("--{name} needs a value"))?,
        };
        overrides.push((name, value));
    }
    Ok((rest, overrides))
}

fn load_config(args: &RunArgs, mut overrides: Vec<(String, String)>) -> Result<ConfigFile> {
    if let Some(kind) = &args.backend {
        overrides.insert(0, ("backend.kind".into(), kind.clone()));
    }
    if let Some(seed) = args.seed {
        overrides.push(("master_seed".into(), seed.to_string()));
    }
    if let Some(c) = args.max_concurrency {
        overrides.push(("max_concurrency".into(), c.to_string()));
    }
    let mut file = ConfigFile::load(&args.config, &overrides)?;
    if let Some(dir) = &args.cache_dir {
        file.experiment.cache_dir = Some(dir.clone());
    }
    Ok(file)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn finish(
    command: &str,
    file: &ConfigFile,
    set: &ReportSet,
    rt: &Runtime,
    out: &Path,
    started: (u64, Instant),
) -> Result<()> {
    let files = emit_report(set, out, &[ReportFormat::Csv, ReportFormat::Json])?;
    let mut manifest = RunManifest::new(command, &file.experiment, set);
    manifest.started_unix_secs = started.0;
    manifest.elapsed_secs = started.1.elapsed().as_secs_f64();
    manifest.backend_calls = rt.backend_calls();
    manifest.embedding_calls = rt.embedding_calls();
    write_run_manifest(&manifest, out)?;
    for cell in &set.cells {
        match &cell.aggregate {
            Some(a) => println!(
                "{:<48} {:>8.3}% ± {:.3}  errored={}{}",
                cell.label,
                a.mean_accuracy * 100.0,
                a.std_accuracy * 100.0,
                a.errored,
                if a.non_comparable {
                    "  NON-COMPARABLE"
                } else {
                    ""
                }
            ),
            None => println!("{:<48} {:?}", cell.label, cell.status),
        }
    }
    println!("wrote {}", files.csv.unwrap_or_default().display());
    Ok(())
}

fn main() -> Result<()> {
    let (argv, overrides) = split_overrides(std::env::args().collect())?;
    let cli = Cli::parse_from(argv);
    let started = (unix_now(), Instant::now());
    match cli.command {
        Command::Run(args) => {
            let file = load_config(&args, overrides)?;
            let data = load_experiment_data(&file.experiment)?;
            let rt = Runtime::from_config(&file.experiment)?;
            let cell = run_experiment(&file.experiment, &data, &rt)?;
            finish(
                "run",
                &file,
                &ReportSet::new(vec![cell]),
                &rt,
                &args.out,
                started,
            )
        }
        Command::Grid(args) => {
            let file = load_config(&args, overrides)?;
            let Some(grid) = &file.grid else {
                bail!("{} has no [grid] table", args.config.display());
            };
            let data = load_experiment_data(&file.experiment)?;
            let rt = Runtime::from_config(&file.experiment)?;
            let set = run_grid(&file.experiment, grid, &data, &rt);
            finish("grid", &file, &set, &rt, &args.out, started)
        }
        Command::Report {
            from,
            out,
            baseline,
        } => {
            if !overrides.is_empty() {
                bail!("report takes no config overrides");
            }
            let text =
                std::fs::read_to_string(&from).with_context(|| from.display().to_string())?;
            let mut set = validate_report_json(&text)?;
            if baseline.is_some() {
                set.baseline_label = baseline;
            }
            if let Some(label) = &set.baseline_label {
                if !set.cells.iter().any(|c| &c.label == label) {
                    bail!("no row labelled {label:?}");
                }
            }
            let files = emit_report(&set, &out, &[ReportFormat::Csv, ReportFormat::Json])?;
            println!("wrote {}", files.csv.unwrap_or_default().display());
            Ok(())
        }
        Command::ValidateData {
            dataset,
            data_root,
            manifest,
        } => {
            if !overrides.is_empty() {
                bail!("validate-data takes no config overrides");
            }
            let m = DatasetManifest::resolve(&dataset, manifest.as_deref())?;
            m.validate()?;
            for split in m.splits.keys() {
                let rows = load_split(&m, *split, &data_root)?;
                println!("{} {split}: {} rows ok", m.dataset_id, rows.len());
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn overrides_are_separated() {
        let (rest, ov) = split_overrides(args(
            "ics run --config c.toml --n 50 --backend mock --backend.seed=4 --out o",
        ))
        .unwrap();
        assert_eq!(rest, args("ics run --config c.toml --backend mock --out o"));
        assert_eq!(
            ov,
            [
                ("n".into(), "50".into()),
                ("backend.seed".into(), "4".into())
            ]
        );
        assert!(split_overrides(args("ics run --trials")).is_err());
    }
}
