use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use logpolar_core::experiments::{
    compression_csv, compression_sweep, dedup_grids, diff_csv, diff_pgm, file_checksums, load_mnist, run_baseline,
    run_sweep_with_hook, write_matrix, NoHook, Preprocess, SweepSpec,
};
use logpolar_core::logpolar::{from_logpolar, make_grid, to_logpolar};
use logpolar_core::mnist::{load_split, Dataset, Split};
use logpolar_core::nn::{load_weights_expecting, save_weights};
use logpolar_core::{pgm, Exec};

use crate::error::CliError;
use crate::fetch::{fetch, Source, DEFAULT_SOURCE};
use crate::report::{summary, Collected};
use crate::run::Run;
use crate::settings::{FileConfig, Flags, Settings};

pub const DEFAULT_DATA_DIR: &str = "data/mnist";
pub const DEFAULT_OUT_DIR: &str = "runs";

/// Log-polar pre-processing for a digit CNN: data, training, sweeps, reports.
#[derive(Debug, Parser)]
#[command(name = "logpolar", version)]
pub struct Cli {
    /// Directory holding the four MNIST IDX files.
    #[arg(long, global = true, env = "MNIST_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Parent of the run-stamped output directories.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Write this run into exactly this (empty or new) directory.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Worker threads; 1 is the sequential reference path. Defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub n_theta: Option<usize>,
    #[arg(long)]
    pub n_rho: Option<usize>,
    #[arg(long)]
    pub r_min: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    /// bilinear or nearest.
    #[arg(long)]
    pub interp: Option<String>,
}

#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Momentum for sgd.
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Train on the first N training images only.
    #[arg(long)]
    pub train_subset: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download (or copy) and verify the MNIST files.
    Fetch {
        /// Base URL serving `<name>.gz`, or a local directory with plain or gzipped files.
        #[arg(long, default_value = DEFAULT_SOURCE)]
        source: String,
    },
    /// Log-polar transform of a PGM image or an MNIST digit, or its inverse.
    Transform {
        /// Input PGM (P5).
        input: Option<PathBuf>,
        /// Use this MNIST image instead of a file.
        #[arg(long, conflicts_with = "input")]
        mnist_index: Option<usize>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Map a log-polar image back to Cartesian.
        #[arg(long)]
        inverse: bool,
        /// Output width for --inverse.
        #[arg(long, default_value_t = 28)]
        width: usize,
        /// Output height for --inverse.
        #[arg(long, default_value_t = 28)]
        height: usize,
        /// Also write the result here.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Train a baseline CNN and save its weights.
    Train {
        /// euclidean or logpolar.
        #[arg(long)]
        variant: Option<String>,
        #[command(flatten)]
        train: TrainArgs,
        /// Score on the first N test images only.
        #[arg(long)]
        test_subset: Option<usize>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Rotation x scale accuracy sweep of trained weights.
    Sweep {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        variant: Option<String>,
        /// Degrees, comma separated; negative angles wrap.
        #[arg(long, allow_hyphen_values = true)]
        rotations: Option<String>,
        /// Ratios or percentages, comma separated.
        #[arg(long)]
        scales: Option<String>,
        #[arg(long)]
        test_subset: Option<usize>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Retrain a log-polar CNN at several output resolutions.
    CompressSweep {
        /// `THETAxRHO` list, e.g. `28x28,16x10`.
        #[arg(long)]
        grids: Option<String>,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        test_subset: Option<usize>,
    },
    /// Summarise result files under a directory.
    Report { results: PathBuf },
}

impl Cli {
    fn flags(&self) -> Flags {
        let mut f = Flags {
            seed: self.seed,
            ..Flags::default()
        };
        let grid = |f: &mut Flags, g: &GridArgs| {
            f.n_theta = g.n_theta;
            f.n_rho = g.n_rho;
            f.r_min = g.r_min;
            f.r_max = g.r_max;
            f.interp = g.interp.clone();
        };
        let train = |f: &mut Flags, t: &TrainArgs| {
            f.epochs = t.epochs;
            f.batch_size = t.batch_size;
            f.learning_rate = t.learning_rate;
            f.optimizer = t.optimizer.clone();
            f.momentum = t.momentum;
            f.train_subset = t.train_subset;
        };
        match &self.command {
            Command::Fetch { .. } | Command::Report { .. } => {}
            Command::Transform { grid: g, .. } => grid(&mut f, g),
            Command::Train {
                variant,
                train: t,
                test_subset,
                grid: g,
            } => {
                f.variant = variant.clone();
                f.test_subset = *test_subset;
                train(&mut f, t);
                grid(&mut f, g);
            }
            Command::Sweep {
                variant,
                rotations,
                scales,
                test_subset,
                grid: g,
                ..
            } => {
                f.variant = variant.clone();
                f.rotations = rotations.clone();
                f.scales = scales.clone();
                f.test_subset = *test_subset;
                grid(&mut f, g);
            }
            Command::CompressSweep {
                grids,
                train: t,
                test_subset,
            } => {
                f.grids = grids.clone();
                f.test_subset = *test_subset;
                train(&mut f, t);
            }
        }
        f
    }
}

/// Everything a command needs after flags and config are merged.
struct Ctx {
    settings: Settings,
    data_dir: PathBuf,
    out_dir: PathBuf,
    run_dir: Option<PathBuf>,
    threads: usize,
    exec: Exec,
}

impl Ctx {
    fn start_run(&self, command: &str, config: serde_json::Value, with_data: bool) -> Result<Run, CliError> {
        let sums = if with_data {
            file_checksums(&self.data_dir)?
        } else {
            Default::default()
        };
        Run::start(
            &self.out_dir,
            self.run_dir.as_deref(),
            command,
            self.settings.seed,
            config,
            sums,
            self.threads,
        )
    }

    fn settings_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.settings).expect("settings serialise")
    }

    fn subset(data: Dataset, n: Option<usize>) -> Dataset {
        match n {
            Some(n) => data.head(n),
            None => data,
        }
    }

    fn load_both(&self) -> Result<(Dataset, Dataset), CliError> {
        let (train, test) = load_mnist(&self.data_dir)?;
        Ok((
            Self::subset(train, self.settings.train_subset),
            Self::subset(test, self.settings.test_subset),
        ))
    }
}

fn configure_threads(threads: Option<usize>) -> Result<usize, CliError> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let n = threads.unwrap_or(available);
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    {
        // A second call in the same process (tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(n)
}

fn say(msg: &str) {
    eprintln!("{msg}");
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let settings = Settings::resolve(&cli.flags(), &file)?;
    let threads = configure_threads(cli.threads.or(file.threads))?;
    let ctx = Ctx {
        settings,
        data_dir: cli
            .data_dir
            .clone()
            .or_else(|| file.data_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR)),
        out_dir: cli
            .out_dir
            .clone()
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        run_dir: cli.run_dir.clone(),
        threads,
        exec: if threads == 1 {
            Exec::Sequential
        } else {
            Exec::default()
        },
    };
    match &cli.command {
        Command::Fetch { source } => cmd_fetch(&ctx, source),
        Command::Transform {
            input,
            mnist_index,
            split,
            inverse,
            width,
            height,
            output,
            grid,
        } => cmd_transform(
            &ctx,
            input.as_deref(),
            *mnist_index,
            split,
            *inverse,
            (*width, *height),
            output.as_deref(),
            grid,
        ),
        Command::Train { .. } => cmd_train(&ctx),
        Command::Sweep { weights, .. } => cmd_sweep(&ctx, weights),
        Command::CompressSweep { .. } => cmd_compress_sweep(&ctx),
        Command::Report { results } => cmd_report(&ctx, results),
    }
}

fn cmd_fetch(ctx: &Ctx, source: &str) -> Result<(), CliError> {
    fetch(&ctx.data_dir, &Source::parse(source), &mut |m| say(m))?;
    println!("{}", ctx.data_dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_transform(
    ctx: &Ctx,
    input: Option<&Path>,
    mnist_index: Option<usize>,
    split: &str,
    inverse: bool,
    out_dims: (usize, usize),
    output: Option<&Path>,
    grid: &GridArgs,
) -> Result<(), CliError> {
    let image = match (input, mnist_index) {
        (Some(path), _) => pgm::decode(&std::fs::read(path).map_err(CliError::io(path))?)?,
        (None, Some(i)) => {
            let split = match split {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(CliError::Usage(format!("unknown split {other:?} (train or test)"))),
            };
            let data = load_split(&ctx.data_dir, split)?;
            data.images
                .get(i)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("--mnist-index {i} out of range (split has {})", data.len())))?
        }
        (None, None) => return Err(CliError::Usage("give an input PGM or --mnist-index".into())),
    };
    let s = &ctx.settings;
    let result = if inverse {
        // The grid size comes from the input unless given explicitly.
        let mut cfg = s.logpolar_config(out_dims.0, out_dims.1);
        cfg.n_theta = grid.n_theta.unwrap_or(image.width());
        cfg.n_rho = grid.n_rho.unwrap_or(image.height());
        from_logpolar(&image, &cfg, out_dims.0, out_dims.1)?
    } else {
        let cfg = s.logpolar_config(image.width(), image.height());
        to_logpolar(&image, &make_grid(&cfg)?, s.interp_mode())
    };
    let mut config = ctx.settings_json();
    config["transform"] = serde_json::json!({
        "input": input.map(|p| p.display().to_string()),
        "mnist_index": mnist_index,
        "split": split,
        "inverse": inverse,
        "width": out_dims.0,
        "height": out_dims.1,
    });
    let run = ctx.start_run("transform", config, mnist_index.is_some())?;
    let bytes = pgm::encode(&result);
    let path = run.path("transform.pgm");
    std::fs::write(&path, &bytes).map_err(CliError::io(&path))?;
    if let Some(out) = output {
        std::fs::write(out, &bytes).map_err(CliError::io(out))?;
    }
    let dir = run.finish()?;
    println!(
        "{}",
        output.map_or(dir.join("transform.pgm"), Path::to_path_buf).display()
    );
    Ok(())
}

fn cmd_train(ctx: &Ctx) -> Result<(), CliError> {
    let variant = ctx.settings.require_variant()?;
    let (train, test) = ctx.load_both()?;
    let (w, h) = train
        .dims()
        .ok_or_else(|| CliError::Usage("training set is empty".into()))?;
    let pre = Preprocess::for_variant(variant, &ctx.settings.logpolar_config(w, h), ctx.settings.interp_mode())?;
    let run = ctx.start_run("train", ctx.settings_json(), true)?;
    say(&format!(
        "training {variant} on {} images, scoring {} ({})",
        train.len(),
        test.len(),
        run.dir.display()
    ));
    let (net, report) = run_baseline(&pre, &train, &test, &ctx.settings.train_config(), ctx.exec, &mut |e| {
        say(&format!(
            "epoch {}: train loss {:.4}, test accuracy {}",
            e.epoch,
            e.train_loss,
            e.test_accuracy.map_or_else(|| "-".into(), |a| format!("{a:.4}"))
        ))
    })?;
    save_weights(&net, &run.path("weights.bin"))?;
    let report_path = run.path("report.csv");
    std::fs::write(&report_path, report.to_csv()).map_err(CliError::io(&report_path))?;
    let dir = run.finish()?;
    println!("{}", dir.display());
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, weights: &Path) -> Result<(), CliError> {
    let variant = ctx.settings.require_variant()?;
    let test = Ctx::subset(load_split(&ctx.data_dir, Split::Test)?, ctx.settings.test_subset);
    let (w, h) = test.dims().ok_or_else(|| CliError::Usage("test set is empty".into()))?;
    let pre = Preprocess::for_variant(variant, &ctx.settings.logpolar_config(w, h), ctx.settings.interp_mode())?;
    let net = load_weights_expecting::<f32>(weights, &pre.architecture(w, h))?;
    let spec = SweepSpec {
        rotations: ctx.settings.rotations.clone(),
        scales: ctx.settings.scales.clone(),
        variant,
    };
    spec.validate()?;
    let mut config = ctx.settings_json();
    config["weights"] = serde_json::json!({
        "path": weights.display().to_string(),
        "checksum": net.checksum(),
    });
    let run = ctx.start_run("sweep", config, true)?;
    let cells = spec.rotations.len() * spec.scales.len();
    let mut done = 0;
    let mut m = run_sweep_with_hook(&net, &test, &spec, &pre, ctx.exec, &NoHook, &mut |r, s, c| {
        done += 1;
        say(&format!("[{done}/{cells}] rotation {r} scale {s}: {:.4}", c.accuracy));
    })?;
    m.manifest_id = run.id();
    write_matrix(&m, &run.dir, &format!("sweep-{variant}"))?;
    let dir = run.finish()?;
    println!("{}", dir.display());
    Ok(())
}

fn cmd_compress_sweep(ctx: &Ctx) -> Result<(), CliError> {
    let (grids, dropped) = dedup_grids(&ctx.settings.grids);
    for (t, r) in dropped {
        say(&format!("warning: grid {t}x{r} listed more than once; running it once"));
    }
    let (train, test) = ctx.load_both()?;
    let mut config = ctx.settings_json();
    config["grids"] = serde_json::to_value(&grids).expect("grids serialise");
    let run = ctx.start_run("compress-sweep", config, true)?;
    let points = compression_sweep(
        &train,
        &test,
        &grids,
        &ctx.settings.train_config(),
        ctx.exec,
        &mut |p| {
            say(&format!(
                "{}x{}: factor {:.4}, accuracy {:.4}",
                p.n_theta, p.n_rho, p.compression_factor, p.test_accuracy
            ))
        },
    )?;
    let path = run.path("compression.csv");
    std::fs::write(&path, compression_csv(&points)?).map_err(CliError::io(&path))?;
    let dir = run.finish()?;
    println!("{}", dir.display());
    Ok(())
}

fn cmd_report(ctx: &Ctx, results: &Path) -> Result<(), CliError> {
    let collected = Collected::scan(results)?;
    let text = summary(&collected, results)?;
    let run = ctx.start_run(
        "report",
        serde_json::json!({ "results": results.display().to_string() }),
        false,
    )?;
    let path = run.path("summary.txt");
    std::fs::write(&path, &text).map_err(CliError::io(&path))?;
    if let Some(d) = collected.diff()? {
        let pgm_path = run.path("diff-map.pgm");
        std::fs::write(&pgm_path, diff_pgm(&d)).map_err(CliError::io(&pgm_path))?;
        let csv_path = run.path("diff-map.csv");
        std::fs::write(&csv_path, diff_csv(&d)?).map_err(CliError::io(&csv_path))?;
    }
    run.finish()?;
    print!("{text}");
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                crate::error::exit::USAGE
            } else {
                crate::error::exit::OK
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => crate::error::exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
