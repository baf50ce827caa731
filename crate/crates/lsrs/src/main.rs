use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lsrs::checkpoint;
use lsrs::config::{ExperimentConfig, ModeName, Overrides};
use lsrs::harness::{self, files, HarnessError, Stage, StageExt, WallClock};
use lsrs_core::audit::audit_encoder;
use lsrs_core::network::SplitNetwork;
use lsrs_core::train::train;

#[derive(Parser)]
#[command(name = "lsrs", version, about = "Latent-space randomized smoothing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its checkpoint.
    Train(Common),
    /// Certify the test set and write the per-example CSV.
    Certify(WithModel),
    /// Certify the test set and write the CSV and summary.
    Evaluate(WithModel),
    /// Audit encoder Lipschitz bounds.
    Audit {
        #[command(flatten)]
        model: WithModel,
        /// Audit freshly built encoders at every orthogonal fraction instead.
        #[arg(long)]
        sweep: bool,
    },
    /// Time input-space against latent-space smoothing across split depths.
    Bench(WithModel),
    /// Train, audit, evaluate and report in one go.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    /// ls-rs or is-rs.
    #[arg(long)]
    mode: Option<ModeName>,
    /// Encoder depth in blocks.
    #[arg(long)]
    split: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Estimation samples per certification.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WithModel {
    #[command(flatten)]
    common: Common,
    /// Checkpoint to load; defaults to `<out>/model.ckpt`.
    #[arg(long)]
    model: Option<PathBuf>,
}

fn load_config(c: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).stage(Stage::Config)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        sigma: c.sigma,
        mode: c.mode,
        split: c.split,
        seed: c.seed,
        n: c.n,
        alpha: c.alpha,
        out: c.out.clone(),
    });
    cfg.validate().stage(Stage::Config)?;
    std::fs::create_dir_all(&cfg.run.out).stage(Stage::Report)?;
    Ok(cfg)
}

/// Loads the checkpoint and moves its split to the configured depth.
fn load_model(m: &WithModel, cfg: &ExperimentConfig) -> Result<SplitNetwork, HarnessError> {
    let path = m.model.clone().unwrap_or_else(|| cfg.run.out.join(files::MODEL));
    let net = checkpoint::load(&path).stage(Stage::Config)?;
    if m.common.split.is_some() {
        let split = harness::block_split(&net, cfg.arch().split_blocks);
        return net.with_split_index(split).stage(Stage::Config);
    }
    Ok(net)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError {
        stage: Stage::Report,
        message: format!("{}: {e}", path.display()),
    })
}

fn certify_cmd(m: &WithModel, summary: bool) -> Result<(), HarnessError> {
    let cfg = load_config(&m.common)?;
    let net = load_model(m, &cfg)?;
    let (_, test) = harness::load_data(&cfg)?;
    let stage = if summary { Stage::Evaluate } else { Stage::Certify };
    let smoothing = cfg.smoothing_config();
    let eval = harness::evaluate(&net, &test, cfg.mode(), &smoothing, &cfg.run.radii, cfg.run.workers, cfg.run.timing)
        .stage(stage)?;
    let mut csv = Vec::new();
    harness::write_csv(&eval.records, &mut csv).stage(Stage::Report)?;
    write(&cfg.run.out.join(files::CERTIFY_CSV), csv)?;
    if summary {
        let text = eval.summary.to_text(cfg.mode(), &smoothing);
        write(&cfg.run.out.join(files::SUMMARY), &text)?;
        print!("{text}");
    } else {
        println!("certified {} examples -> {}", eval.records.len(), cfg.run.out.join(files::CERTIFY_CSV).display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train(c) => {
            let cfg = load_config(&c)?;
            let (train_set, _) = harness::load_data(&cfg)?;
            let mut net = cfg.arch().build().stage(Stage::Config)?;
            let history = train(&mut net, &train_set, &cfg.train_config()).stage(Stage::Train)?;
            write(&cfg.run.out.join(files::TRAIN_LOG), harness::train_log_csv(&history))?;
            let path = cfg.run.out.join(files::MODEL);
            checkpoint::save(&net, &path).stage(Stage::Report)?;
            if let Some(last) = history.last() {
                println!("final loss {} train accuracy {}", last.loss, last.train_acc);
            }
            println!("checkpoint -> {}", path.display());
        }
        Command::Certify(m) => certify_cmd(&m, false)?,
        Command::Evaluate(m) => certify_cmd(&m, true)?,
        Command::Audit { model, sweep } => {
            let cfg = load_config(&model.common)?;
            let tol = cfg.audit.tolerance;
            let nets = if sweep {
                let step = (cfg.model.blocks / 4).max(1);
                (0..=cfg.model.blocks)
                    .step_by(step)
                    .map(|k| {
                        let mut a = cfg.arch();
                        a.ortho_blocks = k;
                        a.split_blocks = k;
                        a.build().stage(Stage::Config)
                    })
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                vec![load_model(&model, &cfg)?]
            };
            let mut csv = format!("{}\n", harness::AUDIT_CSV_HEADER);
            let mut text = String::new();
            let mut failed = 0;
            for net in &nets {
                let report = audit_encoder(net, &cfg.audit_config()).stage(Stage::Audit)?;
                failed += usize::from(!report.passes(tol));
                csv.push_str(&harness::audit_csv_row(&report, net, tol));
                csv.push('\n');
                text.push_str(&harness::audit_text(&report, net, tol));
            }
            write(&cfg.run.out.join(files::AUDIT_CSV), csv)?;
            write(&cfg.run.out.join(files::AUDIT_TXT), &text)?;
            print!("{text}");
            if failed > 0 {
                return Err(HarnessError { stage: Stage::Audit, message: format!("{failed} encoder(s) failed the audit") });
            }
        }
        Command::Bench(m) => {
            let cfg = load_config(&m.common)?;
            let net = load_model(&m, &cfg)?;
            let (_, test) = harness::load_data(&cfg)?;
            let subset = test.take(cfg.run.bench_examples.min(test.len())).stage(Stage::Data)?;
            let report = harness::bench_modes(&net, &subset, &cfg.smoothing_config(), &cfg.run.bench_splits, &WallClock::new())
                .stage(Stage::Bench)?;
            write(&cfg.run.out.join("bench.csv"), report.to_csv())?;
            write(&cfg.run.out.join("bench.txt"), report.to_text())?;
            print!("{}", report.to_text());
        }
        Command::Run(c) => {
            let cfg = load_config(&c)?;
            let outcome = harness::run(&cfg)?;
            print!("{}", outcome.evaluation.summary.to_text(cfg.mode(), &cfg.smoothing_config()));
            println!("artifacts -> {}", outcome.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error{e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
