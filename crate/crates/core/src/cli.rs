//! The `tidysim` command line.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::aggregate::{aggregate, AggregateSpec};
use crate::config::StudyConfig;
use crate::grid::{expand_grid, Grid};
use crate::plot::{parse_filter, plot_svg, PlotSpec};
use crate::results::{join_grid_long, left_join, pivot_long};
use crate::runner::{checkpoint_path, run_detailed, Chunk, RunConfig, Subset};
use crate::study::{check_factors, find_study, registry};
use crate::table::{read_table, write_table, Format, Table};

/// Metadata key holding the study a grid or results file belongs to.
pub const STUDY_KEY: &str = "tidysim.study";

#[derive(Debug, Parser)]
#[command(name = "tidysim", version, about = "Tidy Monte Carlo simulation studies")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expand a TOML study configuration into a grid file.
    Grid(GridArgs),
    /// Run a study over a grid and write the results table.
    Run(RunArgs),
    /// Join grid and results and summarise bias and power per cell.
    Aggregate(AggregateArgs),
    /// Render an aggregate table as a faceted SVG chart.
    Plot(PlotArgs),
    /// Regenerate one row's dataset and analysis for debugging.
    DumpRow(DumpRowArgs),
    /// List the built-in studies.
    Studies,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Study configuration (TOML).
    config: PathBuf,
    /// Output grid file (.parquet or .csv).
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Grid file written by `tidysim grid`.
    grid: PathBuf,
    /// Output results file (.parquet or .csv). The checkpoint log is kept next
    /// to it as `<stem>.checkpoint.ndjson`.
    #[arg(short, long)]
    out: PathBuf,
    /// Study to run; defaults to the study recorded in the grid file.
    #[arg(long)]
    study: Option<String>,
    /// Worker threads [default: number of CPUs].
    #[arg(short, long, env = "TIDYSIM_JOBS")]
    jobs: Option<usize>,
    #[arg(long, requires = "num_chunks")]
    chunk_index: Option<u64>,
    /// Split the selected rows into this many contiguous chunks and run only `--chunk-index`.
    #[arg(long, requires = "chunk_index")]
    num_chunks: Option<u64>,
    /// Skip rows already in the checkpoint log.
    #[arg(long)]
    resume: bool,
    /// Only these iterations: `1..5` (inclusive), `3`, or `1,4,9`.
    #[arg(long, conflicts_with = "rows")]
    iterations: Option<String>,
    /// Only rows with `a <= row_id < b`, written `a..b`.
    #[arg(long)]
    rows: Option<String>,
    /// Stop at the first failing row instead of recording it.
    #[arg(long)]
    fail_fast: bool,
    /// Checkpoint log path [default: next to the output].
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Configuration supplying `[run]` defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// No progress reporting.
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    /// Grid file.
    #[arg(long)]
    grid: PathBuf,
    /// Results file.
    #[arg(long)]
    results: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Grouping columns, comma separated [default: all factors].
    #[arg(long, value_delimiter = ',')]
    group_by: Option<Vec<String>>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Critical value of the power interval.
    #[arg(long)]
    z: Option<f64>,
    /// Pivot wide results first, naming the factors encoded in column names
    /// (e.g. `outcome,correction` for `change_uncorrected_pvalue`).
    #[arg(long, value_delimiter = ',')]
    pivot: Option<Vec<String>>,
    /// Value names of the wide columns when pivoting.
    #[arg(long, value_delimiter = ',', default_value = "estimate,pvalue,singular")]
    values: Vec<String>,
    /// Configuration supplying `[aggregate]` defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Aggregate file.
    aggregate: PathBuf,
    /// Output SVG file.
    #[arg(short, long)]
    out: PathBuf,
    /// Keep only some levels: `column=level1,level2`. Repeatable.
    #[arg(long)]
    filter: Vec<String>,
    #[arg(long, default_value = "sample_size")]
    x: String,
    #[arg(long, default_value = "power")]
    y: String,
    #[arg(long)]
    color: Option<String>,
    #[arg(long)]
    linetype: Option<String>,
    #[arg(long)]
    facet: Option<String>,
    #[arg(long)]
    title: Option<String>,
}

#[derive(Debug, Args)]
struct DumpRowArgs {
    /// Grid file.
    grid: PathBuf,
    #[arg(long)]
    row_id: u64,
    #[arg(long)]
    study: Option<String>,
    /// Write the dataset to this file instead of printing it as CSV.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

/// `1..5` (inclusive), `1..=5`, `3` or `1,4,9`.
pub fn parse_iterations(s: &str) -> anyhow::Result<BTreeSet<u64>> {
    let mut out = BTreeSet::new();
    for part in s.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
            if a > b {
                bail!("empty iteration range `{part}`");
            }
            out.extend(a..=b);
        } else {
            out.insert(part.parse().with_context(|| format!("bad iteration `{part}`"))?);
        }
    }
    Ok(out)
}

/// `a..b`, half-open.
pub fn parse_rows(s: &str) -> anyhow::Result<std::ops::Range<u64>> {
    let (a, b) = s.split_once("..").with_context(|| format!("row range `{s}` is not a..b"))?;
    Ok(a.trim().parse()?..b.trim().parse()?)
}

fn format_of(path: &Path) -> Format {
    Format::from_path(path)
}

fn load_grid(path: &Path) -> anyhow::Result<(Table, Grid)> {
    let table = read_table(path).with_context(|| format!("reading grid {}", path.display()))?;
    let grid = Grid::from_table(&table).with_context(|| format!("reading grid {}", path.display()))?;
    Ok((table, grid))
}

fn study_name(explicit: Option<String>, grid_table: &Table) -> anyhow::Result<String> {
    match explicit.or_else(|| grid_table.metadata().get(STUDY_KEY).cloned()) {
        Some(s) => Ok(s),
        None => bail!(
            "the grid records no study; pass --study (registered: {})",
            registry().iter().map(|s| s.name().to_owned()).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn cmd_grid(args: GridArgs) -> anyhow::Result<()> {
    let config = StudyConfig::load(&args.config)?;
    let grid = expand_grid(&config.grid_spec()?)?;
    if let Some(name) = &config.study {
        check_factors(find_study(name)?.as_ref(), grid.factor_names())?;
    }
    let mut table = grid.to_table();
    if let Some(name) = &config.study {
        table.set_metadata(STUDY_KEY, name.clone());
    }
    write_table(&table, &args.out, format_of(&args.out))?;
    eprintln!("{} rows -> {}", grid.len(), args.out.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let defaults = args.config.as_deref().map(StudyConfig::load).transpose()?;
    let (grid_table, grid) = load_grid(&args.grid)?;
    let study = find_study(&study_name(args.study, &grid_table)?)?;
    let jobs = args
        .jobs
        .or_else(|| defaults.as_ref().and_then(|c| c.run.jobs))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, NonZeroUsize::get));
    let subset = match (&args.iterations, &args.rows) {
        (Some(it), _) => Some(Subset::Iterations(parse_iterations(it)?)),
        (_, Some(r)) => Some(Subset::Rows(parse_rows(r)?)),
        _ => None,
    };
    let chunk = args
        .chunk_index
        .zip(args.num_chunks)
        .map(|(index, count)| Chunk { index, count });
    let config = RunConfig {
        jobs,
        chunk,
        checkpoint: Some(args.checkpoint.unwrap_or_else(|| checkpoint_path(&args.out))),
        resume: args.resume,
        subset,
        fail_fast: args.fail_fast,
        progress: !args.quiet,
        cancel: None,
    };
    let out = run_detailed(&grid, study.as_ref(), &config)?;
    let mut table = out.results.to_table();
    table.set_metadata(STUDY_KEY, study.name());
    write_table(&table, &args.out, format_of(&args.out))?;
    eprintln!(
        "{} rows executed, {} taken from the checkpoint, {} failed -> {}",
        out.executed,
        out.skipped,
        out.results.error_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_aggregate(args: AggregateArgs) -> anyhow::Result<()> {
    let defaults = args
        .config
        .as_deref()
        .map(StudyConfig::load)
        .transpose()?
        .map(|c| c.aggregate)
        .unwrap_or_default();
    let (_, grid) = load_grid(&args.grid)?;
    let results = read_table(&args.results)
        .with_context(|| format!("reading results {}", args.results.display()))?;
    if args.pivot.is_none() && results.num_rows() < grid.len() {
        eprintln!(
            "warning: {} of {} grid rows have no results; they count towards n_error",
            grid.len() - results.num_rows(),
            grid.len()
        );
    }
    let mut group_by: Vec<String> = grid.factor_names().map(str::to_owned).collect();
    let frame = match &args.pivot {
        Some(factors) => {
            let values: Vec<&str> = args.values.iter().map(String::as_str).collect();
            let factors_ref: Vec<&str> = factors.iter().map(String::as_str).collect();
            group_by.extend(factors.iter().cloned());
            join_grid_long(&grid, &pivot_long(&results, &values, &factors_ref)?)?
        }
        None => left_join(&grid.to_table(), &results)?,
    };
    let spec = AggregateSpec {
        group_by: args.group_by.or(defaults.group_by).unwrap_or(group_by),
        alpha: args.alpha.or(defaults.alpha).unwrap_or(0.05),
        z: args.z.or(defaults.z).unwrap_or(1.96),
        ..AggregateSpec::default()
    };
    let table = aggregate(&frame, &spec)?;
    write_table(&table, &args.out, format_of(&args.out))?;
    eprintln!("{} groups -> {}", table.num_rows(), args.out.display());
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> anyhow::Result<()> {
    let table = read_table(&args.aggregate)
        .with_context(|| format!("reading aggregate {}", args.aggregate.display()))?;
    let spec = PlotSpec {
        x: args.x,
        y: args.y,
        ymin: None,
        ymax: None,
        color: args.color,
        linetype: args.linetype,
        facet: args.facet,
        filters: args.filter.iter().map(|f| parse_filter(f)).collect::<Result<_, _>>()?,
        title: args.title,
    };
    let svg = plot_svg(&table, &spec)?;
    crate::table::io::atomic_write(&args.out, |w| Ok(w.write_all(svg.as_bytes())?))?;
    Ok(())
}

fn cmd_dump_row(args: DumpRowArgs) -> anyhow::Result<()> {
    let (grid_table, grid) = load_grid(&args.grid)?;
    let study = find_study(&study_name(args.study, &grid_table)?)?;
    let pos = grid
        .row_ids()
        .binary_search(&args.row_id)
        .ok()
        .with_context(|| format!("row_id {} is not in the grid", args.row_id))?;
    let row = grid.row(pos).expect("position from row_ids");
    let view = grid.view(&row);
    let factors: Vec<String> = view.pairs().map(|(n, v)| format!("{n}={v}")).collect();
    eprintln!(
        "row_id={} iteration={} seed={} {}",
        row.row_id,
        row.iteration,
        row.seed,
        factors.join(" ")
    );
    let (data, outcome) = study.replay(&view).map_err(|e| anyhow::anyhow!("generation failed: {e}"))?;
    match &args.out {
        Some(path) => write_table(&data, path, format_of(path))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            crate::table::io::write_csv(&data, &mut stdout)?;
        }
    }
    match outcome {
        Ok(o) => {
            let parts: Vec<String> = o.iter().map(|(n, v)| format!("{n}={v}")).collect();
            eprintln!("outcomes: {}", parts.join(" "));
        }
        Err(e) => eprintln!("analysis failed: {e}"),
    }
    Ok(())
}

fn cmd_studies() {
    for s in registry() {
        let schema: Vec<String> = s.outcome_schema().names().map(str::to_owned).collect();
        println!(
            "{}\tfactors: {}\toutcomes: {}",
            s.name(),
            s.required_factors().join(", "),
            schema.join(", ")
        );
    }
}

pub fn run_cli<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match cli.command {
        Command::Grid(a) => cmd_grid(a),
        Command::Run(a) => cmd_run(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Plot(a) => cmd_plot(a),
        Command::DumpRow(a) => cmd_dump_row(a),
        Command::Studies => {
            cmd_studies();
            Ok(())
        }
    }
}

pub fn main() -> ExitCode {
    match run_cli(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_lists() {
        assert_eq!(parse_iterations("1..5").unwrap(), (1..=5).collect());
        assert_eq!(parse_iterations("1..=3,7").unwrap(), [1, 2, 3, 7].into());
        assert!(parse_iterations("5..1").is_err());
        assert!(parse_iterations("x").is_err());
        assert_eq!(parse_rows("10..20").unwrap(), 10..20);
        assert!(parse_rows("10").is_err());
    }
}
