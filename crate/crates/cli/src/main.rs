use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eventscope::agent::Task;
use eventscope::refine::S2Mode;
use eventscope_cli::commands::{cmd_eval, cmd_refine, cmd_run, cmd_segment, RunArgs};
use eventscope_cli::config::Overrides;
use eventscope_cli::error::CliError;
use eventscope_cli::output::{emit, to_json};

#[derive(Parser)]
#[command(
    name = "eventscope",
    version,
    about = "Event localization and instruction-guided reasoning over video frames"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    task: Option<Task>,
    #[arg(long = "n-events", global = true)]
    n_events: Option<usize>,
    /// Reasoning steps per event; 0 disables refinement.
    #[arg(long = "T", global = true)]
    t_max: Option<usize>,
    /// Frames sampled per event.
    #[arg(long, global = true)]
    frames: Option<usize>,
    /// Demonstrations in each prompt.
    #[arg(long, global = true)]
    shots: Option<usize>,
    #[arg(long = "s2-mode", global = true)]
    s2_mode: Option<S2Mode>,
    /// Use deterministic stub providers for every tool.
    #[arg(long = "stub-all", global = true)]
    stub_all: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with stub provider tables.
    #[arg(long, global = true)]
    stubs: Option<PathBuf>,
    /// JSON file with prompt demonstrations.
    #[arg(long, global = true)]
    demos: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            task: self.task,
            n_events: self.n_events,
            t_max: self.t_max,
            n_frames: self.frames,
            n_shots: self.shots,
            s2_mode: self.s2_mode,
            stub_all: self.stub_all,
            seed: self.seed,
            stubs: self.stubs.clone(),
            demos: self.demos.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Initial event regions from frame similarity.
    Segment {
        /// Manifest files or directories of them.
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Refine regions against instructions.
    Refine {
        #[arg(long)]
        manifest: PathBuf,
        /// `segment` output or a JSON list of regions.
        #[arg(long)]
        regions: PathBuf,
        /// One instruction per line, or a single line for all regions.
        #[arg(long)]
        instructions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Segmentation, reasoning and task responses.
    Run {
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        /// Ground-truth boundaries used instead of segmentation.
        #[arg(long = "true-proposals")]
        true_proposals: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a responses file.
    Eval {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Segment { manifests, out, common } => {
            let text = cmd_segment(&manifests, common.config.as_deref(), &common.overrides())?;
            emit(out.as_deref(), &text)
        }
        Command::Refine {
            manifest,
            regions,
            instructions,
            out,
            common,
        } => {
            let text = cmd_refine(
                &manifest,
                &regions,
                &instructions,
                common.config.as_deref(),
                &common.overrides(),
            )?;
            emit(out.as_deref(), &text)
        }
        Command::Run {
            manifests,
            dataset,
            out_dir,
            true_proposals,
            common,
        } => {
            let overrides = common.overrides();
            let responses = cmd_run(&RunArgs {
                manifests: &manifests,
                dataset: dataset.as_deref(),
                out_dir: &out_dir,
                true_proposals: true_proposals.as_deref(),
                config: common.config.as_deref(),
                overrides: &overrides,
            })?;
            let summary = serde_json::json!({
                "run_id": responses.run_id,
                "videos": responses.videos.len(),
                "responses": out_dir.join("responses.json"),
            });
            emit(None, &to_json(&summary))
        }
        Command::Eval {
            responses,
            dataset,
            out,
        } => {
            let text = cmd_eval(&responses, &dataset)?;
            emit(out.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eventscope: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
