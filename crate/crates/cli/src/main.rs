use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use itsgw_client::GatewayClient;
use itsgw_core::api::{JobParams, Payload, SubmitRequest};
use itsgw_core::model::{LabelSchema, Modality};
use itsgw_core::pipeline::{train_classifier, vocab_path_for, Classifier, ClassifierTraining};
use itsgw_core::protocol::{run_conformance, serve, BackendEndpoint, ExternalBackend, ServeOptions};
use itsgw_core::text::{build_vocab, decode, encode, Vocab, DEFAULT_MAX_LEN};
use itsgw_core::visual::{load_frame_dir, run_caption_chain, BuiltinCaptioner, ChainOptions, RefineTask};
use itsgw_service::engine::load_inputs;
use itsgw_service::profile::profile;
use itsgw_service::{Gateway, GatewayConfig};

#[derive(Parser)]
#[command(name = "itsgw", version, about = "Multimodal sensor inference gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP gateway.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `http_bind` from the config.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Train a classifier and write its checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Caption a directory of PGM frames.
    Caption {
        #[arg(long)]
        frames: PathBuf,
        /// Shell command of an external backend speaking the NDJSON protocol.
        #[arg(long)]
        backend: Option<String>,
        #[arg(long, conflicts_with = "backend")]
        backend_tcp: Option<String>,
        #[arg(long, default_value = "summarize")]
        task: RefineTask,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, default_value_t = 16)]
        max_frames: usize,
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
        #[arg(long)]
        no_fallback: bool,
    },
    /// Print the per-modality performance report.
    Profile {
        #[arg(long, required_unless_present = "server")]
        config: Option<PathBuf>,
        /// Ask a running gateway instead.
        #[arg(long, conflicts_with = "config")]
        server: Option<String>,
    },
    /// Show how a text is split into vocabulary pieces.
    Tokenize {
        #[arg(long)]
        text: String,
        /// Vocabulary file; without one, a vocabulary is built from the text.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
    },
    /// Submit a job to a running gateway.
    Submit {
        #[arg(long)]
        server: String,
        #[arg(long)]
        modality: Modality,
        /// Send this file's bytes inline.
        #[arg(long, required_unless_present = "path")]
        file: Option<PathBuf>,
        /// Let the gateway read this path itself.
        #[arg(long, conflicts_with = "file")]
        path: Option<String>,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        task: Option<RefineTask>,
        /// Poll until the job is terminal and print the envelope.
        #[arg(long)]
        wait: bool,
    },
    /// Print a job envelope.
    Status {
        #[arg(long)]
        server: String,
        job_id: String,
    },
    /// Query the gateway's health endpoint.
    Health {
        #[arg(long)]
        server: String,
    },
    /// Serve the backend protocol on stdin/stdout with the built-in captioner.
    #[command(hide = true)]
    BackendStub {
        #[arg(long)]
        model_id: Option<String>,
        #[arg(long, default_value_t = 0)]
        jitter_ms: u64,
        #[arg(long)]
        hang: bool,
    },
    /// Run the protocol conformance suite against a backend.
    #[command(hide = true)]
    BackendCheck {
        #[arg(long, required_unless_present = "tcp")]
        backend: Option<String>,
        #[arg(long, conflicts_with = "backend")]
        tcp: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    modality: Modality,
    /// Tabular CSV (time_series) or `path,label` WAV manifest (audio).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Held-out set for the reported accuracy; defaults to the training set.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Label schema file; defaults to the classes found in the data.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

fn endpoint(command: Option<String>, tcp: Option<String>) -> Option<BackendEndpoint> {
    command.map(BackendEndpoint::Command).or(tcp.map(BackendEndpoint::Tcp))
}

fn read_labels(path: &Path) -> anyhow::Result<LabelSchema> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(LabelSchema::parse(&text)?)
}

/// Class names from a `label` column or manifest, in first-seen order.
fn labels_from_data(modality: Modality, data: &Path) -> anyhow::Result<LabelSchema> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(data)
        .with_context(|| format!("reading {}", data.display()))?;
    let column = match modality {
        Modality::Audio => 1,
        _ => reader
            .headers()?
            .iter()
            .position(|h| h.eq_ignore_ascii_case(itsgw_core::dataset::LABEL_COLUMN))
            .context("data has no `label` column; pass --labels")?,
    };
    let mut names: Vec<String> = Vec::new();
    for row in reader.records() {
        let row = row?;
        if let Some(name) = row.get(column).filter(|n| !n.is_empty()) {
            if !names.iter().any(|n| n == name) {
                names.push(name.to_string());
            }
        }
    }
    Ok(LabelSchema::classification(names)?)
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let labels = match &args.labels {
        Some(p) => read_labels(p)?,
        None => labels_from_data(args.modality, &args.data)?,
    };
    let inputs = load_inputs(args.modality, &args.data, &labels)?;
    let eval = args
        .eval
        .as_deref()
        .map(|p| load_inputs(args.modality, p, &labels))
        .transpose()?;
    let mut options = ClassifierTraining::default_for(args.modality);
    let s = &mut options.shape;
    s.layers = args.layers.unwrap_or(s.layers);
    s.heads = args.heads.unwrap_or(s.heads);
    s.d_model = args.d_model.unwrap_or(s.d_model);
    s.d_ff = args.d_ff.unwrap_or(s.d_ff);
    s.max_len = args.max_len.unwrap_or(s.max_len);
    let t = &mut options.train;
    t.epochs = args.epochs.unwrap_or(t.epochs);
    t.batch_size = args.batch_size.unwrap_or(t.batch_size);
    t.max_steps = args.max_steps.or(t.max_steps);
    t.optimizer.lr = args.lr.unwrap_or(t.optimizer.lr);
    t.seed = args.seed;

    let (classifier, log) = train_classifier(args.modality, &inputs, eval.as_deref(), &labels, &options)?;
    classifier.save(&args.out)?;
    let summary = serde_json::json!({
        "checkpoint": args.out.display().to_string(),
        "vocab": classifier.vocab.as_ref().map(|_| vocab_path_for(&args.out).display().to_string()),
        "params": classifier.model.param_count(),
        "steps": log.step_losses.len(),
        "final_loss": log.epoch_mean_losses.last(),
        "eval_accuracy": classifier.eval_accuracy,
    });
    println!("{summary}");
    Ok(())
}

fn eval(ckpt: &Path, data: &Path, vocab: Option<&Path>, labels: Option<&Path>) -> anyhow::Result<()> {
    let labels = labels.map(read_labels).transpose()?;
    let mut classifier = Classifier::load(ckpt, vocab, labels.as_ref())?;
    let inputs = load_inputs(classifier.modality, data, &classifier.labels.clone())?;
    let accuracy = classifier.evaluate(&inputs)?;
    println!(
        "{}",
        serde_json::json!({"modality": classifier.modality, "examples": inputs.len(), "accuracy": accuracy})
    );
    Ok(())
}

fn tokenize(text: &str, vocab: Option<&Path>, max_len: usize) -> anyhow::Result<()> {
    let vocab = match vocab {
        Some(p) => Vocab::load(p)?,
        None => build_vocab(&[text], 1, usize::MAX)?,
    };
    let encoded = encode(text, &vocab, max_len)?;
    let pieces: Vec<&str> = encoded
        .ids
        .iter()
        .zip(&encoded.mask)
        .filter(|(_, &m)| m == 1)
        .map(|(&id, _)| vocab.token(id).unwrap_or("[UNK]"))
        .collect();
    let out = serde_json::json!({
        "pieces": pieces,
        "ids": encoded.ids,
        "mask": encoded.mask,
        "decoded": decode(&encoded, &vocab)?,
    });
    println!("{out}");
    Ok(())
}

fn caption(
    frames: &Path,
    backend: Option<BackendEndpoint>,
    options: ChainOptions,
    timeout: Duration,
) -> anyhow::Result<()> {
    let seq = load_frame_dir(frames)?;
    let result = match backend {
        None => run_caption_chain(&seq, &mut BuiltinCaptioner, &options)?,
        Some(endpoint) => {
            let mut external = ExternalBackend::connect(&endpoint, timeout)?;
            run_caption_chain(&seq, &mut external, &options)?
        }
    };
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

async fn serve_gateway(config_path: &Path, bind: Option<String>) -> anyhow::Result<()> {
    let mut config = GatewayConfig::load(config_path).with_context(|| format!("loading {}", config_path.display()))?;
    if let Some(bind) = bind {
        config.http_bind = bind;
    }
    let gateway = Gateway::open(config.clone())?;
    gateway.start_workers();
    let listener = tokio::net::TcpListener::bind(&config.http_bind).await?;
    let addr = listener.local_addr()?;
    tracing::info!(%addr, workers = config.worker_count, "gateway up");
    println!("listening on http://{addr}");
    std::io::stdout().flush()?;
    itsgw_service::http::serve(gateway, listener).await?;
    Ok(())
}

async fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve { config, bind } => serve_gateway(&config, bind).await?,
        Command::Train(args) => train(args)?,
        Command::Eval {
            ckpt,
            data,
            vocab,
            labels,
        } => eval(&ckpt, &data, vocab.as_deref(), labels.as_deref())?,
        Command::Caption {
            frames,
            backend,
            backend_tcp,
            task,
            stride,
            max_frames,
            timeout_ms,
            no_fallback,
        } => {
            let options = ChainOptions {
                task,
                stride,
                max_frames,
                fallback_to_builtin: !no_fallback,
            };
            caption(
                &frames,
                endpoint(backend, backend_tcp),
                options,
                Duration::from_millis(timeout_ms),
            )?
        }
        Command::Profile { config, server } => {
            let report = match (config, server) {
                (_, Some(server)) => GatewayClient::new(&server).metrics().await?,
                (Some(path), None) => profile(&GatewayConfig::load(&path)?)?,
                (None, None) => bail!("pass --config or --server"),
            };
            print!("{}", report.format());
        }
        Command::Tokenize { text, vocab, max_len } => tokenize(&text, vocab.as_deref(), max_len)?,
        Command::Submit {
            server,
            modality,
            file,
            path,
            label,
            task,
            wait,
        } => {
            let payload = match (file, path) {
                (Some(file), _) => {
                    Payload::inline(&std::fs::read(&file).with_context(|| format!("reading {}", file.display()))?)
                }
                (None, Some(path)) => Payload::path(path),
                (None, None) => bail!("pass --file or --path"),
            };
            let req = SubmitRequest {
                modality,
                payload,
                params: JobParams {
                    label,
                    task,
                    ..JobParams::default()
                },
            };
            let client = GatewayClient::new(&server);
            let job_id = client.submit(&req).await?;
            if wait {
                let env = client
                    .wait(&job_id, Duration::from_millis(20), Duration::from_secs(600))
                    .await?;
                println!("{}", serde_json::to_string(&env)?);
            } else {
                println!("{job_id}");
            }
        }
        Command::Status { server, job_id } => {
            let env = GatewayClient::new(&server).job(&job_id).await?;
            println!("{}", serde_json::to_string(&env)?);
        }
        Command::Health { server } => {
            let health = GatewayClient::new(&server).health().await?;
            println!("{}", serde_json::to_string(&health)?);
        }
        Command::BackendStub {
            model_id,
            jitter_ms,
            hang,
        } => {
            let options = ServeOptions {
                model_id,
                jitter_ms,
                hang,
            };
            serve(std::io::stdin().lock(), std::io::stdout(), &options)?;
        }
        Command::BackendCheck {
            backend,
            tcp,
            timeout_ms,
        } => {
            let endpoint = endpoint(backend, tcp).context("pass --backend or --tcp")?;
            let report = run_conformance(&endpoint, Duration::from_millis(timeout_ms))?;
            for check in &report.checks {
                println!(
                    "{}\t{}\t{}",
                    if check.passed { "pass" } else { "FAIL" },
                    check.name,
                    check.detail
                );
            }
            println!("out-of-order responses observed: {}", report.saw_reordering);
            if !report.passed() {
                bail!("backend failed the conformance suite");
            }
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    run(Cli::parse()).await
}
