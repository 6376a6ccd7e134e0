//! `corefsum`: batch pipeline for coreference post-processing, structure
//! building, head probing, training, summarization and ROUGE evaluation.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "corefsum",
    version,
    about = "Coreference-aware dialogue summarization toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ensemble coreference annotations, fix speaker mentions and merge clusters.
    Postprocess(PostprocessArgs),
    /// Build the coreference graph and attention matrix for each dialogue.
    Graph(GraphArgs),
    /// Rank encoder heads by similarity to the coreference attention matrix.
    Probe(ProbeArgs),
    /// Train a summarizer variant and write its best checkpoint.
    Train(TrainArgs),
    /// Summarize dialogues with a trained checkpoint.
    Summarize(SummarizeArgs),
    /// Score hypothesis summaries against references with ROUGE.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic pronoun-resolution corpus.
    GenData(GenDataArgs),
}

#[derive(Args, Debug)]
pub struct PostprocessArgs {
    /// Annotation JSONL files, one per coreference system.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Dialogue JSONL file.
    #[arg(long)]
    pub dialogues: PathBuf,
    /// Votes a mention pair needs to be kept [default: majority of inputs].
    #[arg(long)]
    pub min_votes: Option<usize>,
    /// Output annotation JSONL.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GraphArgs {
    /// Dialogue JSONL file.
    #[arg(long)]
    pub dialogues: PathBuf,
    /// Annotation JSONL file (dialogues without a line get no clusters).
    #[arg(long)]
    pub coref: PathBuf,
    /// Output JSONL with edges, attention rows and covered flags.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus directory (uses validation.jsonl) or a sample JSONL file.
    #[arg(long)]
    pub data: PathBuf,
    /// Output probe report JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Model variant: base, gnn, attn or headrep.
    #[arg(long)]
    pub variant: String,
    /// Corpus directory with train.jsonl and optional validation.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    /// Flat key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output checkpoint JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for initialization, shuffling and dropout (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epoch count (overrides the config).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Heads to replace, as layer:head,... (headrep only).
    #[arg(long, conflicts_with = "probe_report")]
    pub heads: Option<String>,
    /// Probe report whose winning heads are replaced (headrep only).
    #[arg(long)]
    pub probe_report: Option<PathBuf>,
    /// Encoder layers taking their winning head from --probe-report [default: all].
    #[arg(long, value_delimiter = ',', requires = "probe_report")]
    pub probe_layers: Option<Vec<usize>>,
    /// Optional JSON file for per-epoch loss and validation ROUGE-2.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dialogue or sample JSONL file.
    #[arg(long)]
    pub dialogues: PathBuf,
    /// Annotation JSONL (overrides annotations carried by samples).
    #[arg(long)]
    pub coref: Option<PathBuf>,
    /// Output text file, one summary per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum generated tokens per summary.
    #[arg(long, default_value_t = 32)]
    pub max_len: usize,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Hypothesis summaries, one per line.
    #[arg(long)]
    pub hyp: PathBuf,
    /// Reference summaries, aligned by line.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Output directory for train/validation/test JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub train: usize,
    #[arg(long, default_value_t = 30)]
    pub validation: usize,
    #[arg(long, default_value_t = 30)]
    pub test: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            // help and version go to stdout, usage errors to stderr
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Postprocess(a) => commands::postprocess(&a),
        Command::Graph(a) => commands::graph(&a),
        Command::Probe(a) => commands::probe(&a),
        Command::Train(a) => commands::train(&a),
        Command::Summarize(a) => commands::summarize(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::GenData(a) => commands::gen_data(&a),
    };
    match result {
        Ok(done) => {
            eprintln!("{}", done.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Outcome of a successful subcommand.
pub struct CommandResult {
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

impl CommandResult {
    fn new(artifacts: Vec<PathBuf>, summary: String) -> Self {
        Self { artifacts, summary }
    }
}
