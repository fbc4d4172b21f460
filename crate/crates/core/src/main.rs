use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dmjc::metrics::evaluate;
use dmjc::numerics::RngState;
use dmjc::pipeline::config::ConfigError;
use dmjc::pipeline::data::DataError;
use dmjc::pipeline::{
    load_labels, make_synthetic, run_pipeline, write_feature_binary, write_feature_csv,
    write_labels, ConfusionPlan, Method, Normalization, RunConfig, SyntheticConfig, ViewConfig,
};

/// Deep multi-view joint clustering.
#[derive(Parser)]
#[command(name = "dmjc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate as described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// dec, dmjc_s, dmjc_t, s_view or s_all_views
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Write a complementary-Gaussian dataset plus a ready-to-run config.
    Synth {
        #[arg(long, default_value_t = 3)]
        views: usize,
        #[arg(long, default_value_t = 4)]
        clusters: usize,
        /// Samples per cluster.
        #[arg(long, default_value_t = 150)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        /// Write features in the binary format instead of CSV.
        #[arg(long)]
        binary: bool,
    },
    /// Score predicted labels against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

enum Failure {
    Config(String),
    Data(String),
    Divergence(String),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, msg) = match self {
            Failure::Config(m) => (1, m),
            Failure::Data(m) => (2, m),
            Failure::Divergence(m) => (3, m),
        };
        eprintln!("error: {msg}");
        ExitCode::from(code)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.to_string())
    }
}

fn run(
    config: &Path,
    seed: Option<u64>,
    method: Option<Method>,
    max_epochs: Option<usize>,
) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = method {
        cfg.method = m;
    }
    if let Some(e) = max_epochs {
        cfg.joint.max_epochs = e;
    }
    let report = run_pipeline(&cfg).map_err(|e| match e.exit_code() {
        1 => Failure::Config(e.to_string()),
        3 => Failure::Divergence(e.to_string()),
        _ => Failure::Data(e.to_string()),
    })?;
    let s = &report.summary;
    match &s.scores {
        Some(sc) => println!(
            "{}: {} epochs, acc {:.4} nmi {:.4} ari {:.4}",
            s.method.as_str(),
            s.epochs_run,
            sc.acc,
            sc.nmi,
            sc.ari
        ),
        None => println!("{}: {} epochs", s.method.as_str(), s.epochs_run),
    }
    println!("report written to {}", cfg.output_dir.display());
    Ok(())
}

fn synth(
    views: usize,
    clusters: usize,
    n: usize,
    out: &Path,
    seed: u64,
    dim: usize,
    binary: bool,
) -> Result<(), Failure> {
    let mut config = SyntheticConfig::new(views, clusters, n);
    config.dim = dim;
    let plan = ConfusionPlan::chain(views, clusters);
    let data = make_synthetic(&config, &plan, &mut RngState::new(seed))
        .map_err(|e| Failure::Config(e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| Failure::Data(format!("{}: {e}", out.display())))?;
    let mut view_configs = Vec::new();
    for (i, m) in data.views.iter().enumerate() {
        let name = if binary {
            format!("view_{}.bin", i + 1)
        } else {
            format!("view_{}.csv", i + 1)
        };
        let path = out.join(&name);
        if binary {
            write_feature_binary(&path, m)?;
        } else {
            write_feature_csv(&path, m)?;
        }
        view_configs.push(ViewConfig {
            feature_file: name.into(),
            encoder_dims: vec![dim, 2],
            normalization: Normalization::None,
        });
    }
    write_labels(&out.join("labels.csv"), &data.labels)?;
    let mut cfg = RunConfig::from_toml_str(&format!(
        "method = \"dmjc_t\"\nclusters = {clusters}\nseed = {seed}\nlabels_file = \"labels.csv\"\noutput_dir = \"output\"\nviews = []\n"
    ))?;
    cfg.views = view_configs;
    let path = out.join("config.toml");
    std::fs::write(&path, cfg.to_toml_string())
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    println!(
        "wrote {} views, {} samples and {}",
        views,
        data.labels.len(),
        path.display()
    );
    Ok(())
}

fn eval(pred: &Path, truth: &Path) -> Result<(), Failure> {
    let p = load_labels(pred)?;
    let t = load_labels(truth)?;
    let scores = evaluate(&p, &t).map_err(|e| Failure::Data(e.to_string()))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&scores).expect("scores serialise")
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            method,
            max_epochs,
        } => run(&config, seed, method, max_epochs),
        Command::Synth {
            views,
            clusters,
            n,
            out,
            seed,
            dim,
            binary,
        } => synth(views, clusters, n, &out, seed, dim, binary),
        Command::Eval { pred, truth } => eval(&pred, &truth),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
