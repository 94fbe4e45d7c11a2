//! `sparsedeploy` command-line driver.
//!
//! Exit codes: 0 success, 1 usage, 2 data (dataset or model file cannot be
//! read or does not fit), 3 pipeline (training, search, quantization,
//! evaluation, reporting), 4 code generation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparsedeploy::codegen::{emit, footprint, write_files, EmitPlan};
use sparsedeploy::dense::evaluate;
use sparsedeploy::io::{load_idx_dir, read_sdm, save_compressed, save_model, SdmModel};
use sparsedeploy::model::{lenet5_layers, toy_cnn_layers, LENET5_INPUT, TOY_INPUT};
use sparsedeploy::pipeline::{compress, Event, PipelineConfig};
use sparsedeploy::pruner::PruneSearchConfig;
use sparsedeploy::report::{layer_report, size_report, timing_report, Report, TimingConfig};
use sparsedeploy::sparse::evaluate_sparse;
use sparsedeploy::synth::{bars_split, BarsConfig, BARS_CLASSES};
use sparsedeploy::trainer::{init_model, train};
use sparsedeploy::{CompressedModel, ModelGraph, Split, TrainConfig};

const THREADS_ENV: &str = "SPARSEDEPLOY_THREADS";

#[derive(Parser, Debug)]
#[command(name = "sparsedeploy", version, about = "Prune, quantize and emit C for small CNNs")]
struct Cli {
    /// Seed for model initialization and training.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a freshly initialized model.
    Init {
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Arch::Toy)]
        arch: Arch,
        /// Output classes (toy architecture only).
        #[arg(long, default_value_t = BARS_CLASSES)]
        classes: usize,
    },
    /// Train a dense model.
    Train {
        model: PathBuf,
        /// `builtin:bars` or a directory of MNIST-named IDX files.
        data: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        /// Copy the model through without training.
        #[arg(long)]
        skip_initial_training: bool,
    },
    /// Train, prune-search, quantize and encode.
    Compress {
        model: PathBuf,
        data: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        tolerated_acc_loss: f64,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        min_search_step: f64,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        skip_initial_training: bool,
        /// Keep the model input in float.
        #[arg(long)]
        no_quantize_input: bool,
        /// Keep float weights and activations.
        #[arg(long)]
        no_quantize: bool,
        /// Cap on training samples used for activation calibration.
        #[arg(long)]
        calibration_samples: Option<usize>,
    },
    /// Test-set accuracy.
    Eval {
        model: PathBuf,
        data: String,
        #[command(flatten)]
        path: EvalPath,
    },
    /// Emit main.c, main.h and nn_kernels.h.
    Generate {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Embed test sample `i` of a dataset and emit `main()`.
        #[arg(long, value_name = "DATA:i")]
        embed_input: Option<String>,
    },
    /// Sparsity, size and (with --data) timing tables.
    Report {
        model: PathBuf,
        /// Time inference on the first test inputs of this dataset.
        #[arg(long)]
        data: Option<String>,
        #[arg(long, default_value_t = 30)]
        repetitions: usize,
        #[arg(long, default_value_t = 32)]
        timing_inputs: usize,
        #[arg(long)]
        json: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Arch {
    Toy,
    Lenet5,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value_t = 4)]
    epochs: usize,
    #[arg(long, default_value_t = 2e-3)]
    learning_rate: f32,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Debug)]
#[group(multiple = false)]
struct EvalPath {
    /// Float dense forward pass over the decoded weights.
    #[arg(long)]
    dense: bool,
    /// Float sparse engine.
    #[arg(long)]
    sparse: bool,
    /// Int8 sparse engine (quantized models only).
    #[arg(long)]
    int8: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Pipeline(String),
    Codegen(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Pipeline(_) => 3,
            Failure::Codegen(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            Failure::Usage(m) => ("usage", m),
            Failure::Data(m) => ("data", m),
            Failure::Pipeline(m) => ("pipeline", m),
            Failure::Codegen(m) => ("codegen", m),
        };
        write!(f, "{kind} error: {msg}")
    }
}

type Outcome<T> = Result<T, Failure>;

fn data_err(e: impl fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn pipeline_err(e: impl fmt::Display) -> Failure {
    Failure::Pipeline(e.to_string())
}

fn codegen_err(e: impl fmt::Display) -> Failure {
    Failure::Codegen(e.to_string())
}

fn load_data(spec: &str) -> Outcome<Split> {
    match spec {
        "builtin:bars" => Ok(bars_split(&BarsConfig::default())),
        s if s.starts_with("builtin:") => Err(Failure::Data(format!("unknown builtin dataset {s:?}"))),
        dir => load_idx_dir(Path::new(dir)).map_err(|e| Failure::Data(format!("{dir}: {e}"))),
    }
}

fn load_sdm(path: &Path) -> Outcome<SdmModel> {
    read_sdm(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_dense(path: &Path) -> Outcome<ModelGraph> {
    match load_sdm(path)? {
        SdmModel::Dense(m) => Ok(m),
        SdmModel::Compressed(_) => Err(Failure::Data(format!(
            "{}: expected a dense model, found a compressed one",
            path.display()
        ))),
    }
}

fn load_compressed_model(path: &Path) -> Outcome<CompressedModel> {
    match load_sdm(path)? {
        SdmModel::Compressed(m) => Ok(m),
        SdmModel::Dense(m) => CompressedModel::from_float(&m).map_err(data_err),
    }
}

fn check_fit(input_shape: [usize; 3], split: &Split) -> Outcome<()> {
    let shape = split.test.sample_shape();
    if shape != input_shape {
        return Err(Failure::Data(format!(
            "dataset samples are {shape:?}, model expects {input_shape:?}"
        )));
    }
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Outcome<()> {
    std::fs::write(path, bytes).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn derived_path(model: &Path, suffix: &str) -> PathBuf {
    let stem = model.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    model.with_file_name(format!("{stem}.{suffix}.sdm"))
}

/// Parses `DATA:i`, splitting at the last colon.
fn parse_embed(spec: &str) -> Outcome<(&str, usize)> {
    let (data, index) = spec
        .rsplit_once(':')
        .ok_or_else(|| Failure::Usage(format!("--embed-input expects DATA:i, got {spec:?}")))?;
    let index = index
        .parse()
        .map_err(|_| Failure::Usage(format!("--embed-input index {index:?} is not a number")))?;
    Ok((data, index))
}

fn threads() -> Outcome<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .parse()
            .map_err(|_| Failure::Usage(format!("{THREADS_ENV} must be a number, got {v:?}"))),
        Err(_) => Ok(1),
    }
}

fn echo(pairs: &[(&str, String)]) {
    eprintln!("config:");
    for (k, v) in pairs {
        eprintln!("  {k} = {v}");
    }
}

fn echo_train(pairs: &mut Vec<(&str, String)>, cfg: &TrainConfig) {
    pairs.push(("optimizer", format!("{:?}", cfg.optimizer)));
    pairs.push(("learning_rate", cfg.learning_rate.to_string()));
    pairs.push(("epochs", cfg.epochs.to_string()));
    pairs.push(("batch_size", cfg.batch_size.to_string()));
}

fn run(cli: Cli) -> Outcome<()> {
    let threads = threads()?;
    sparsedeploy::parallel::configure_threads(threads);
    let seed = cli.seed;
    let base = vec![("seed", seed.to_string()), ("threads", threads.to_string())];
    match cli.command {
        Command::Init { output, arch, classes } => {
            let mut cfg = base;
            cfg.push(("arch", format!("{arch:?}").to_lowercase()));
            cfg.push(("output", output.display().to_string()));
            let (input, layers) = match arch {
                Arch::Toy => {
                    cfg.push(("classes", classes.to_string()));
                    (TOY_INPUT, toy_cnn_layers(classes))
                }
                Arch::Lenet5 => (LENET5_INPUT, lenet5_layers()),
            };
            echo(&cfg);
            let model = init_model(input, layers, seed).map_err(pipeline_err)?;
            write_bytes(&output, &save_model(&model))?;
            println!("wrote {} ({} parameters)", output.display(), model.parameter_count());
        }
        Command::Train {
            model,
            data,
            output,
            train: args,
            skip_initial_training,
        } => {
            let output = output.unwrap_or_else(|| derived_path(&model, "trained"));
            let tc = args.config(seed);
            let mut cfg = base;
            cfg.push(("model", model.display().to_string()));
            cfg.push(("data", data.clone()));
            cfg.push(("output", output.display().to_string()));
            cfg.push(("skip_initial_training", skip_initial_training.to_string()));
            echo_train(&mut cfg, &tc);
            echo(&cfg);
            let m = load_dense(&model)?;
            let split = load_data(&data)?;
            check_fit(m.input_shape(), &split)?;
            let (trained, acc) = if skip_initial_training {
                let acc = evaluate(&m, &split.test).map_err(pipeline_err)?;
                (m, acc)
            } else {
                train(&m, &split.train, &split.test, &tc, None).map_err(pipeline_err)?
            };
            write_bytes(&output, &save_model(&trained))?;
            println!("accuracy {acc:.4}");
            println!("wrote {}", output.display());
        }
        Command::Compress {
            model,
            data,
            output,
            tolerated_acc_loss,
            min_search_step,
            train: args,
            skip_initial_training,
            no_quantize_input,
            no_quantize,
            calibration_samples,
        } => {
            let output = output.unwrap_or_else(|| derived_path(&model, "compressed"));
            let pc = PipelineConfig {
                search: PruneSearchConfig {
                    tolerated_acc_loss,
                    min_search_step,
                    train: args.config(seed),
                },
                initial_training: !skip_initial_training,
                quantize: !no_quantize,
                quantize_input: !no_quantize && !no_quantize_input,
                calibration_samples,
            };
            pc.search.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let mut cfg = base;
            cfg.push(("model", model.display().to_string()));
            cfg.push(("data", data.clone()));
            cfg.push(("output", output.display().to_string()));
            cfg.push(("tolerated_acc_loss", tolerated_acc_loss.to_string()));
            cfg.push(("min_search_step", min_search_step.to_string()));
            echo_train(&mut cfg, &pc.search.train);
            cfg.push(("initial_training", pc.initial_training.to_string()));
            cfg.push(("quantize", pc.quantize.to_string()));
            cfg.push(("quantize_input", pc.quantize_input.to_string()));
            cfg.push((
                "calibration_samples",
                calibration_samples.map_or("all".into(), |n| n.to_string()),
            ));
            echo(&cfg);
            let m = load_dense(&model)?;
            let split = load_data(&data)?;
            check_fit(m.input_shape(), &split)?;
            let out = compress(&m, &split, &pc, |e| match e {
                Event::Trained { accuracy } => eprintln!("trained: accuracy {accuracy:.4}"),
                Event::Trial(t) => eprintln!(
                    "trial: sparsity {:.6} accuracy {:.4} {}",
                    t.sparsity,
                    t.accuracy,
                    if t.accepted { "accepted" } else { "rejected" }
                ),
                Event::Searched { sparsity, accuracy } => {
                    eprintln!("search: sparsity {sparsity:.6} accuracy {accuracy:.4}")
                }
                Event::Quantized { sparsity } => eprintln!("quantized: sparsity {sparsity:.6}"),
                Event::Evaluated { accuracy } => eprintln!("evaluated: accuracy {accuracy:.4}"),
            })
            .map_err(pipeline_err)?;
            write_bytes(&output, &save_compressed(&out.compressed))?;
            let s = &out.summary;
            println!("initial_accuracy {:.4}", s.initial_accuracy);
            println!("final_accuracy {:.4}", s.final_accuracy);
            println!("accuracy_drop {:.4}", s.accuracy_drop());
            println!("sparsity {:.4}", s.final_sparsity);
            println!(
                "payload {} / {} bytes ({:.3}x)",
                s.compressed_weight_bytes,
                s.dense_weight_bytes,
                s.payload_ratio()
            );
            println!("wrote {}", output.display());
        }
        Command::Eval { model, data, path } => {
            let mode = if path.dense {
                "dense"
            } else if path.sparse {
                "sparse"
            } else if path.int8 {
                "int8"
            } else {
                "native"
            };
            let mut cfg = base;
            cfg.push(("model", model.display().to_string()));
            cfg.push(("data", data.clone()));
            cfg.push(("path", mode.into()));
            echo(&cfg);
            let sdm = load_sdm(&model)?;
            let split = load_data(&data)?;
            let input_shape = match &sdm {
                SdmModel::Dense(m) => m.input_shape(),
                SdmModel::Compressed(c) => c.input_shape(),
            };
            check_fit(input_shape, &split)?;
            let acc = match (mode, sdm) {
                ("dense" | "native", SdmModel::Dense(m)) => evaluate(&m, &split.test),
                ("dense", SdmModel::Compressed(c)) => c.to_dense().and_then(|m| evaluate(&m, &split.test)),
                ("sparse", SdmModel::Dense(m)) => {
                    CompressedModel::from_float(&m).and_then(|c| evaluate_sparse(&c, &split.test))
                }
                ("sparse", SdmModel::Compressed(c)) if c.is_quantized() => c
                    .to_dense()
                    .and_then(|m| CompressedModel::from_float(&m))
                    .and_then(|f| evaluate_sparse(&f, &split.test)),
                ("int8", SdmModel::Compressed(c)) if !c.is_quantized() => {
                    return Err(Failure::Usage("--int8 needs a quantized model".into()))
                }
                ("int8", SdmModel::Dense(_)) => {
                    return Err(Failure::Usage("--int8 needs a compressed, quantized model".into()))
                }
                (_, SdmModel::Compressed(c)) => evaluate_sparse(&c, &split.test),
                _ => unreachable!("all modes handled"),
            }
            .map_err(pipeline_err)?;
            println!("accuracy {acc:.4}");
        }
        Command::Generate { model, out, embed_input } => {
            let mut cfg = base;
            cfg.push(("model", model.display().to_string()));
            cfg.push(("out", out.display().to_string()));
            cfg.push(("embed_input", embed_input.clone().unwrap_or_else(|| "none".into())));
            echo(&cfg);
            let embed = embed_input.as_deref().map(parse_embed).transpose()?;
            let c = load_compressed_model(&model)?;
            let mut plan = EmitPlan::for_model(&c);
            if let Some((data, index)) = embed {
                let split = load_data(data)?;
                check_fit(c.input_shape(), &split)?;
                if index >= split.test.len() {
                    return Err(Failure::Data(format!(
                        "embed index {index} out of range, test set has {} samples",
                        split.test.len()
                    )));
                }
                plan = plan.with_input(&c, split.test.image(index)).map_err(codegen_err)?;
            }
            let files = emit(&c, &plan).map_err(codegen_err)?;
            std::fs::create_dir_all(&out).map_err(codegen_err)?;
            write_files(&files, &out).map_err(codegen_err)?;
            let fp = footprint(&c, &plan);
            for f in &files {
                println!("wrote {}", out.join(f.name).display());
            }
            println!("rom {} bytes", fp.rom_bytes);
            println!("ram {} bytes", fp.ram_bytes);
        }
        Command::Report {
            model,
            data,
            repetitions,
            timing_inputs,
            json,
        } => {
            let mut cfg = base;
            cfg.push(("model", model.display().to_string()));
            cfg.push(("data", data.clone().unwrap_or_else(|| "none".into())));
            cfg.push(("repetitions", repetitions.to_string()));
            cfg.push(("timing_inputs", timing_inputs.to_string()));
            echo(&cfg);
            let c = load_compressed_model(&model)?;
            let timing = match data {
                Some(spec) => {
                    let split = load_data(&spec)?;
                    check_fit(c.input_shape(), &split)?;
                    let n = timing_inputs.min(split.test.len());
                    let inputs: Vec<Vec<f32>> = (0..n).map(|i| split.test.image(i).to_vec()).collect();
                    let dense = c.to_dense().map_err(pipeline_err)?;
                    let float = CompressedModel::from_float(&dense).map_err(pipeline_err)?;
                    let int8 = c.is_quantized().then_some(&c);
                    let tc = TimingConfig {
                        repetitions,
                        ..TimingConfig::default()
                    };
                    Some(timing_report(&dense, &float, int8, &inputs, &tc).map_err(pipeline_err)?)
                }
                None => None,
            };
            let report = Report {
                layers: layer_report(&c),
                size: size_report(&c),
                timing,
            };
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sparsedeploy: {f}");
            ExitCode::from(f.code())
        }
    }
}
