use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use collision_core::scenario::{list_presets, preset, run_scenario, write_outputs, RunOptions, ScenarioConfig};
use collision_core::Error;

#[derive(Parser)]
#[command(name = "collide", version, about = "Run repeated-collision scenarios and emit their data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a JSON config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a built-in preset.
    Preset {
        name: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// List the built-in presets.
    List,
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Print a preset as a JSON config.
    Export { name: String },
}

#[derive(Args)]
struct RunArgs {
    /// Output directory; defaults to $COLLISION_OUT_DIR/<name>, else ./out/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep only the finest k sweep points.
    #[arg(long)]
    tau_points: Option<usize>,
    #[arg(long)]
    ntraj: Option<usize>,
    #[arg(long)]
    hbar: Option<f64>,
    #[arg(long, env = "COLLISION_OUT_DIR", hide = true)]
    out_root: Option<PathBuf>,
}

const CONFIG_ERROR: u8 = 2;
const NUMERIC_FAILURE: u8 = 3;

fn load(path: &Path) -> Result<ScenarioConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: format!("cannot read file: {e}"),
    })?;
    ScenarioConfig::from_json(&text, &path.display().to_string())
}

fn execute(config: ScenarioConfig, args: &RunArgs) -> ExitCode {
    let options = RunOptions {
        tau_points: args.tau_points,
        n_traj: args.ntraj,
        seed: args.seed,
        hbar: args.hbar,
    };
    let config = options.apply(config);
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(CONFIG_ERROR);
    }
    let dir = args.out.clone().unwrap_or_else(|| {
        args.out_root
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
            .join(&config.name)
    });
    let run = match run_scenario(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("numeric failure: {e}");
            return ExitCode::from(NUMERIC_FAILURE);
        }
    };
    if let Err(e) = write_outputs(&run, &dir) {
        eprintln!("error writing outputs: {e}");
        return ExitCode::from(NUMERIC_FAILURE);
    }
    for c in &run.checks {
        println!(
            "{} {}: {:e} (threshold {:e}) {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold,
            c.detail
        );
    }
    println!("outputs in {}", dir.display());
    if run.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(NUMERIC_FAILURE)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, run } => match load(&config) {
            Ok(c) => execute(c, &run),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
        Command::Preset { name, run } => match preset(&name) {
            Ok(c) => execute(c, &run),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
        Command::List => {
            for name in list_presets() {
                let c = preset(name).expect("listed presets exist");
                println!("{name:30} {}", c.description);
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config).and_then(|c| c.validate()) {
            Ok(()) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
        Command::Export { name } => match preset(&name) {
            Ok(c) => {
                println!("{}", c.to_json());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
    }
}
