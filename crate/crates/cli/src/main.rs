mod inspect;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use byoc_core::codegen::{from_bytes, load_module, save_module, BLOB_MAGIC};
use byoc_core::fixtures::FixtureKind;
use byoc_core::ir::json::{model_to_string, outputs_to_json, parse_inputs, parse_model};
use byoc_core::ir::Layout;
use byoc_core::partition::{parse_target_config, Fallback};
use byoc_core::patterns::PatternTable;
use byoc_core::pipeline::{compile, CompileOptions};
use byoc_core::runtime::{InferenceSession, SessionOptions};
use byoc_core::sim::{builtin_backends, builtin_engines};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "byoc", version, about = "Partition, compile and run models on simulated accelerators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a model into a blob and print the compile summary as JSON.
    Compile {
        #[arg(long)]
        model: PathBuf,
        /// Target annotation config.
        #[arg(long)]
        targets: PathBuf,
        /// Pattern table.
        #[arg(long)]
        patterns: PathBuf,
        /// Directory of input files used for static calibration.
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Quantize regions for targets that need integer inputs.
        #[arg(long)]
        quantize: bool,
        /// Data layout requested by accelerator regions (NCHW or NHWC).
        #[arg(long)]
        layout: Option<Layout>,
        /// Split regions larger than this many operators.
        #[arg(long)]
        max_nodes: Option<usize>,
        /// calc_mac_gt_zero, none or min_nodes:<k>.
        #[arg(long)]
        fallback: Option<Fallback>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a compiled blob on an input file and print the outputs as JSON.
    Run {
        blob: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Also print the per-kernel time breakdown.
        #[arg(long)]
        profile: bool,
        /// Simulated fixsim engine build time.
        #[arg(long, default_value_t = 0)]
        init_delay_ms: u64,
        /// Simulated host/accelerator copy cost.
        #[arg(long, default_value_t = 0)]
        transfer_ns_per_byte: u64,
    },
    /// Print a model file or compiled blob.
    Inspect { file: PathBuf },
    /// Write a built-in model: chain, tiny_cnn, detection or quant_demo.
    GenFixture {
        kind: String,
        /// Residual blocks of the chain fixture.
        #[arg(long)]
        n: Option<usize>,
        /// Operators between the host-only node and the tail of the chain fixture.
        #[arg(long)]
        k: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Failure class, mapped to the process exit code.
enum Failure {
    Config(anyhow::Error),
    Compile(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Compile(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Compile(e) | Failure::Runtime(e) => e,
        }
    }
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn compile(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn compile(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Compile(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

/// Write to stdout; a closed pipe downstream is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Runtime(e.into())),
        _ => Ok(()),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn calibration_samples(dir: &Path) -> anyhow::Result<Vec<byoc_core::interp::Inputs>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.extension().is_some_and(|x| x == "json"));
    files.sort();
    if files.is_empty() {
        return Err(anyhow!("no .json input files in {}", dir.display()));
    }
    files
        .iter()
        .map(|p| parse_inputs(&read(p)?).with_context(|| format!("parsing {}", p.display())))
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Compile {
            model,
            targets,
            patterns,
            calib,
            quantize,
            layout,
            max_nodes,
            fallback,
            output,
        } => {
            let graph = read(&model)
                .and_then(|t| parse_model(&t).with_context(|| format!("parsing {}", model.display())))
                .config()?;
            let (registry, mut partition) = read(&targets)
                .and_then(|t| parse_target_config(&t).with_context(|| format!("parsing {}", targets.display())))
                .config()?;
            let patterns = read(&patterns)
                .and_then(|t| PatternTable::from_json(&t).with_context(|| format!("parsing {}", patterns.display())))
                .config()?;
            if max_nodes == Some(0) {
                return Err(Failure::Config(anyhow!("--max-nodes must be positive")));
            }
            if max_nodes.is_some() {
                partition.max_nodes = max_nodes;
            }
            if let Some(f) = fallback {
                partition.fallback = f;
            }
            let calibration = match &calib {
                Some(dir) => calibration_samples(dir).config()?,
                None => Vec::new(),
            };
            let opts = CompileOptions {
                registry,
                partition,
                patterns,
                quantize,
                calibration,
                layout,
            };
            let out = compile(&graph, &opts, &builtin_backends()).compile()?;
            save_module(&out.compiled, &output).compile()?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&out.summary).compile()?))?;
        }
        Command::Run {
            blob,
            input,
            profile,
            init_delay_ms,
            transfer_ns_per_byte,
        } => {
            let inputs = read(&input)
                .and_then(|t| parse_inputs(&t).with_context(|| format!("parsing {}", input.display())))
                .config()?;
            let cm = load_module(&blob).with_context(|| format!("loading {}", blob.display())).runtime()?;
            let options = SessionOptions {
                transfer_ns_per_byte,
                ..SessionOptions::default()
            };
            let engines = builtin_engines(Duration::from_millis(init_delay_ms));
            let mut session = InferenceSession::load(cm, &engines, options).runtime()?;
            let outputs = session.run(&inputs).runtime()?;
            let mut text = format!("{}\n", outputs_to_json(&outputs));
            if profile {
                text += &session.profile_report().and_then(|r| r.to_json()).runtime()?;
                text.push('\n');
            }
            emit(&text)?;
        }
        Command::Inspect { file } => {
            let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display())).config()?;
            let text = if bytes.starts_with(BLOB_MAGIC) {
                inspect::blob(&from_bytes(&bytes).config()?)
            } else {
                let text = String::from_utf8(bytes).context("model file is not UTF-8").config()?;
                inspect::model(&parse_model(&text).config()?)
            };
            emit(&text.config()?)?;
        }
        Command::GenFixture { kind, n, k, output } => {
            let kind = match (kind.parse::<FixtureKind>().config()?, n, k) {
                (FixtureKind::Chain { n: dn, k: dk }, n, k) => FixtureKind::Chain {
                    n: n.unwrap_or(dn),
                    k: k.unwrap_or(dk),
                },
                (other, None, None) => other,
                (other, _, _) => return Err(Failure::Config(anyhow!("--n and --k apply only to chain, not {other}"))),
            };
            let graph = kind.build().config()?;
            fs::write(&output, model_to_string(&graph).config()?)
                .with_context(|| format!("writing {}", output.display()))
                .config()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
