use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use ar_core::codec::{degrade, list_images, load_image, save_image, ImagePlanes};
use ar_core::metrics::{evaluate_dataset, EvalOptions, Restorer as RestoreFn};
use ar_core::restoration::{Restorer, RestoreMode, DEFAULT_OVERLAP, DEFAULT_TILE};
use ar_core::training::{load_generator, train, Dataset, LossKind, TrainConfig, TrainOutput};
use ar_core::{gradsuite, Error};
use ar_study::{Study, StudyDefinition, StudyError};
use clap::{Args, Parser, Subcommand};

/// Compression artifact removal toolkit.
#[derive(Parser, Debug)]
#[command(name = "deartifact", version, about)]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Log progress at info level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// JPEG-style degradation of every image in a directory.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// One quality factor, or a comma list to write qf{N} subdirectories.
        #[arg(long, value_delimiter = ',', required = true)]
        qf: Vec<u32>,
    },
    /// Train a generator (and discriminator for gan losses).
    Train(TrainArgs),
    /// Restore one image, or every image of a directory.
    Restore {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Overlapping tiles instead of one whole-image pass.
        #[arg(long)]
        tiled: bool,
        #[arg(long, default_value_t = DEFAULT_TILE)]
        tile: usize,
        #[arg(long, default_value_t = DEFAULT_OVERLAP)]
        overlap: usize,
    },
    /// PSNR, PSNR-B and SSIM of test (or simulated) images against references.
    Evaluate {
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Degraded images; simulated from the references when absent.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Also score restorations by this generator.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        qf: Vec<u32>,
        /// `.md` writes Markdown, anything else CSV.
        #[arg(long)]
        report: PathBuf,
    },
    /// Finite-difference check of every differentiable op and loss.
    Gradcheck {
        #[arg(long)]
        op: Option<String>,
    },
    /// Serve the subjective study API.
    ServeStudy {
        /// Contains `original/` plus one directory per method.
        #[arg(long)]
        images: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Event log (newline-delimited JSON).
        #[arg(long)]
        results: PathBuf,
        /// Derive session orders from --seed.
        #[arg(long)]
        seeded: bool,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "out")]
    output: PathBuf,
    /// Loss log CSV; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    qf: Option<Vec<u32>>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    residual_blocks: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

/// Failures split by exit code: 1 for bad input, 2 for runtime errors.
#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Invalid(_) | StudyError::NotFound(_) | StudyError::Corrupt(_) => Failure::Validation(e.to_string()),
            StudyError::Conflict(_) | StudyError::Io(..) => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn file_name(p: &Path) -> String {
    p.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

fn create_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| Failure::from(Error::io(dir, e)))
}

fn cmd_degrade(input: &Path, output: &Path, qfs: &[u32]) -> Outcome {
    let files = list_images(input)?;
    if files.is_empty() {
        return Err(Failure::Validation(format!("no images in {}", input.display())));
    }
    for &qf in qfs {
        let dir = if qfs.len() > 1 { output.join(format!("qf{qf}")) } else { output.to_path_buf() };
        create_dir(&dir)?;
        for f in &files {
            save_image(&degrade(&load_image(f)?, qf)?, dir.join(file_name(f)))?;
        }
        println!("degraded {} images at QF {qf} into {}", files.len(), dir.display());
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs, seed: u64) -> Outcome {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = seed;
    if let Some(v) = args.loss {
        cfg.loss = v;
    }
    if let Some(v) = args.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.patch_size {
        cfg.patch_size = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = &args.qf {
        cfg.qfs = v.clone();
    }
    if let Some(v) = args.channels {
        cfg.channels = v;
    }
    if let Some(v) = args.residual_blocks {
        cfg.residual_blocks = v;
    }
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    cfg.validate()?;
    let data = Dataset::load(&args.data, cfg.patch_size)?;
    for s in &data.skipped {
        eprintln!("warning: skipped {s} (smaller than the patch)");
    }
    let log = args.log.clone().unwrap_or_else(|| args.output.with_extension("loss.csv"));
    let out = TrainOutput {
        checkpoint: Some(args.output.clone()),
        loss_log: Some(log.clone()),
    };
    let res = train(&cfg, &data, &out)?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    let last = res.history.last().map(|r| r.g_loss).unwrap_or(f64::NAN);
    println!(
        "trained {} iterations ({} loss); final generator loss {last:.6}; checkpoint {}; loss log {}",
        cfg.iterations,
        cfg.loss,
        args.output.display(),
        log.display()
    );
    Ok(())
}

fn restore_mode(tiled: bool, tile: usize, overlap: usize) -> RestoreMode {
    if tiled {
        RestoreMode::Tiled { tile, overlap }
    } else {
        RestoreMode::Whole
    }
}

fn cmd_restore(ckpt: &Path, input: &Path, output: &Path, mode: RestoreMode) -> Outcome {
    let (generator, _) = load_generator(ckpt)?;
    let restorer = Restorer::new(&generator, mode)?;
    if input.is_dir() {
        create_dir(output)?;
        let files = list_images(input)?;
        for f in &files {
            save_image(&restorer.restore(&load_image(f)?)?, output.join(file_name(f)))?;
        }
        println!("restored {} images into {}", files.len(), output.display());
    } else {
        save_image(&restorer.restore(&load_image(input)?)?, output)?;
        println!("restored {} -> {}", input.display(), output.display());
    }
    Ok(())
}

fn cmd_evaluate(reference: &Path, test: Option<&Path>, ckpt: Option<&Path>, qfs: &[u32], report: &Path) -> Outcome {
    if test.is_none() && qfs.is_empty() {
        return Err(Failure::Validation("give --test DIR or at least one --qf to simulate".into()));
    }
    let generator = ckpt.map(load_generator).transpose()?.map(|(g, _)| g);
    let restorer = generator.as_ref().map(|g| Restorer::new(g, RestoreMode::Whole)).transpose()?;
    let restore = |img: &ImagePlanes| restorer.as_ref().expect("restorer present").restore(img);
    let opts = EvalOptions {
        qfs: qfs.to_vec(),
        test_dir: test.map(Path::to_path_buf),
        restorer: restorer.as_ref().map(|_| ("restored", &restore as RestoreFn<'_>)),
    };
    let result = evaluate_dataset(reference, &opts)?;
    let markdown = result.to_markdown();
    let text = match report.extension().and_then(|e| e.to_str()) {
        Some("md") => markdown.clone(),
        _ => result.to_csv(),
    };
    std::fs::write(report, text).map_err(|e| Failure::from(Error::io(report, e)))?;
    print!("{markdown}");
    println!("{} rows written to {}", result.rows.len(), report.display());
    if !result.missing.is_empty() {
        return Err(Failure::Validation(format!(
            "{} reference images had no test counterpart and were skipped: {}",
            result.missing.len(),
            result.missing.join(", ")
        )));
    }
    Ok(())
}

fn cmd_gradcheck(op: Option<&str>) -> Outcome {
    let results = gradsuite::run(op)?;
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed() { "pass" } else { "FAIL" };
        println!(
            "{status} {:<28} max rel error {:.3e} over {} coordinates",
            r.name, r.report.max_rel_error, r.report.coordinates
        );
        if !r.passed() {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        println!("all {} gradient checks passed (tolerance {:e})", results.len(), gradsuite::TOLERANCE);
        Ok(())
    } else {
        Err(Failure::Validation(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn cmd_serve(images: &Path, methods: &[String], addr: SocketAddr, log: &Path, seed: Option<u64>) -> Outcome {
    let def = StudyDefinition::from_dir(images, methods)?;
    let trials = def.trial_count();
    let study = Arc::new(Study::open(def, log, seed)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("serving {trials} trials per session on http://{addr}, logging to {}", log.display());
    rt.block_on(ar_study::serve(study, addr))
        .map_err(|e| Failure::Runtime(format!("study service: {e}")))
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Degrade { input, output, qf } => cmd_degrade(input, output, qf),
        Command::Train(args) => cmd_train(args, cli.seed),
        Command::Restore {
            ckpt,
            input,
            output,
            tiled,
            tile,
            overlap,
        } => cmd_restore(ckpt, input, output, restore_mode(*tiled, *tile, *overlap)),
        Command::Evaluate {
            reference,
            test,
            ckpt,
            qf,
            report,
        } => cmd_evaluate(reference, test.as_deref(), ckpt.as_deref(), qf, report),
        Command::Gradcheck { op } => cmd_gradcheck(op.as_deref()),
        Command::ServeStudy {
            images,
            methods,
            port,
            host,
            results,
            seeded,
        } => cmd_serve(images, methods, SocketAddr::new(*host, *port), results, seeded.then_some(cli.seed)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
