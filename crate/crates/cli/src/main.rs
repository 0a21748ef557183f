//! `edgesim` — run delay/concurrency/processing sweeps of the cluster
//! simulator and post-process the results.
//!
//! Exit codes: 0 success, 1 unusable invocation or input (bad flags, broken
//! scenario file, unreadable results), 2 failure while executing or writing.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use edgesim_core::{
    compare, plot_tables, read_rows, run_sweep, Comparison, OutputFormat, ScenarioConfig,
    SweepOptions, TopologyKind,
};

#[derive(Parser)]
#[command(
    name = "edgesim",
    version,
    about = "Deterministic simulator for concurrency-autoscaled serverless clusters behind emulated WAN links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario sweep and write results under --out
    Run(RunArgs),
    /// Join single- and multi-site results into throughput ratio rows
    Compare(CompareArgs),
    /// Pivot a results file into plot-ready tables (one CSV per topology and
    /// user count, delays as columns)
    Plotdata(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum TopologyArg {
    SingleSite,
    MultiSite,
}

impl From<TopologyArg> for TopologyKind {
    fn from(value: TopologyArg) -> Self {
        match value {
            TopologyArg::SingleSite => TopologyKind::SingleSite,
            TopologyArg::MultiSite => TopologyKind::MultiSite,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (`key = value` lines, `#` comments)
    scenario: PathBuf,
    /// Output directory for results, aggregate and manifest files
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario's base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Run only one topology instead of what the scenario selects
    #[arg(long)]
    topology: Option<TopologyArg>,
    /// Override the concurrent-user grid, e.g. --users 1,50,500
    #[arg(long, value_delimiter = ',')]
    users: Option<Vec<u32>>,
    /// Override the total one-way delay grid in ms, e.g. --x 0,25,100
    #[arg(long = "x", value_delimiter = ',')]
    x_total_ms: Option<Vec<f64>>,
    /// Override the processing-time grid in ms, e.g. --proc 0,8,64
    #[arg(long = "proc", value_delimiter = ',')]
    processing_ms: Option<Vec<f64>>,
    /// Override repetitions per grid point
    #[arg(long)]
    reps: Option<u32>,
    /// Worker threads for the sweep (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Results file format
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Also write one event trace per run (forces sequential execution;
    /// meant for small scenarios)
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Results file containing the single-site rows
    single: PathBuf,
    /// Results file containing the multi-site rows
    multi: PathBuf,
    /// Pair single-site delay d with multi-site delay 2d (same delay on each
    /// emulated interface) instead of matching totals literally
    #[arg(long)]
    by_link: bool,
    /// Write the comparison CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Results file to pivot
    results: PathBuf,
    /// Directory for the plot tables
    #[arg(long, default_value = "plots")]
    out: PathBuf,
}

enum CliError {
    /// The invocation or an input file is unusable; nothing was attempted.
    Input(String),
    /// Execution or output writing failed part-way.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; those print to stdout and
            // exit clean, real usage mistakes go to stderr and exit 1.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Plotdata(args) => cmd_plotdata(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read scenario {}: {e}", path.display())))?;
    ScenarioConfig::parse(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut config = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(topology) = args.topology {
        config.topology.kind = Some(topology.into());
    }
    if let Some(users) = args.users {
        config.user_grid = users;
    }
    if let Some(delays) = args.x_total_ms {
        config.delay_grid_ms = delays;
    }
    if let Some(processing) = args.processing_ms {
        config.processing_grid_ms = processing;
    }
    if let Some(reps) = args.reps {
        config.repetitions = reps;
    }
    config
        .validate()
        .map_err(|e| CliError::Input(format!("scenario after overrides: {e}")))?;

    let options = SweepOptions {
        out_dir: args.out,
        jobs: args.jobs,
        format: match args.format {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        },
        trace: args.trace,
    };
    let summary = run_sweep(&config, &options).context("sweep failed")?;
    println!(
        "{} runs -> {} (aggregate and manifest alongside)",
        summary.rows.len(),
        summary.results_path.display()
    );
    Ok(())
}

fn read_results(path: &Path) -> Result<Vec<edgesim_core::ResultRow>, CliError> {
    read_rows(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn render_comparison(cmp: &Comparison) -> String {
    let mut out = String::from(
        "x_total_ms,multi_x_total_ms,users,processing_ms,single_rps,multi_rps,ratio\n",
    );
    for row in &cmp.rows {
        let ratio = row.ratio.map(|r| r.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.x_total_ms,
            row.multi_x_total_ms,
            row.users,
            row.processing_ms,
            row.single_rps,
            row.multi_rps,
            ratio
        ));
    }
    out
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let single = read_results(&args.single)?;
    let multi = read_results(&args.multi)?;
    let cmp = compare(&single, &multi, args.by_link)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let rendered = render_comparison(&cmp);
    match &args.out {
        Some(path) => std::fs::write(path, rendered)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{rendered}"),
    }
    for (side, keys) in
        [("single-site", &cmp.unmatched_single), ("multi-site", &cmp.unmatched_multi)]
    {
        if !keys.is_empty() {
            let listed: Vec<String> = keys
                .iter()
                .map(|(x, u, p)| format!("x={x} users={u} proc={p}"))
                .collect();
            eprintln!("note: {} {} points had no partner: {}", keys.len(), side, listed.join("; "));
        }
    }
    Ok(())
}

fn cmd_plotdata(args: PlotArgs) -> Result<(), CliError> {
    let rows = read_results(&args.results)?;
    let tables = plot_tables(&rows);
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for table in &tables {
        let path = args.out.join(table.file_name());
        std::fs::write(&path, table.to_csv())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{} tables -> {}", tables.len(), args.out.display());
    Ok(())
}
