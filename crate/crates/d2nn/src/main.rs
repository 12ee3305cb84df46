use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use d2nn::commands::{cmd_eval, cmd_report, cmd_sweep, cmd_train, cmd_visualize, published_table, CHECKPOINT_FILE};
use d2nn::config::RunConfig;
use d2nn::export::FieldView;
use d2nn::report::ReportConfig;
use d2nn::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "d2nn", version, about = "Train and analyse multi-task diffractive networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides both the initialization and the training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write a checkpoint.
    Train(Common),
    /// Clean test accuracy per task.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Accuracy under detector, device and splitter noise.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Export every propagation stage of one test sample.
    Visualize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        task: usize,
        #[arg(long, default_value_t = 0)]
        sample: usize,
        /// Draw field phase instead of magnitude.
        #[arg(long)]
        phase: bool,
    },
    /// Accuracy-per-detector report from eval summaries.
    Report {
        /// JSON with `multi` and `singles` eval.json paths.
        #[arg(long, required_unless_present = "published")]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Recompute the published comparison tables instead.
        #[arg(long)]
        published: bool,
    },
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.arch.seed = seed;
            cfg.train.seed = seed;
        }
        Ok(cfg)
    }
}

fn checkpoint_path(cfg: &RunConfig, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(vec![format!("--threads: {e}")]))?;
    }
    match cli.command {
        Command::Train(common) => {
            let cfg = common.load()?;
            let (_, metrics) = cmd_train(&cfg)?;
            if let Some(last) = metrics.last() {
                println!("test accuracy {:?}", last.test_accuracy);
            }
            println!("checkpoint {}", cfg.output_dir.join(CHECKPOINT_FILE).display());
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.load()?;
            let summary = cmd_eval(&cfg, &checkpoint_path(&cfg, checkpoint))?;
            for (name, acc) in summary.tasks.iter().zip(&summary.accuracy) {
                println!("{name}: {acc:.4}");
            }
        }
        Command::Sweep { common, checkpoint } => {
            let cfg = common.load()?;
            let rows = cmd_sweep(&cfg, &checkpoint_path(&cfg, checkpoint))?;
            println!("{} rows written to {}", rows.len(), cfg.output_dir.join("sweep.csv").display());
        }
        Command::Visualize { common, checkpoint, task, sample, phase } => {
            let cfg = common.load()?;
            let view = if phase { FieldView::Phase } else { FieldView::Magnitude };
            for f in cmd_visualize(&cfg, &checkpoint_path(&cfg, checkpoint), task, sample, view)? {
                println!("{}", f.display());
            }
        }
        Command::Report { config, out, published } => {
            if published {
                published_table()?.iter().for_each(|l| println!("{l}"));
            }
            if let Some(path) = config {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                let cfg: ReportConfig =
                    serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("report config: {e}")]))?;
                for row in cmd_report(&cfg, &out)?.rows {
                    println!(
                        "{}: single {:.4}  multi {:.4}  acc-hw {:.2}x",
                        row.task, row.single_accuracy, row.multi_accuracy, row.acc_hw
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
