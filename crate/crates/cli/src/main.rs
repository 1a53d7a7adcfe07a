use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use latent_cf::evaluation::{report_table, Method};
use latent_cf_cli::{cmd_evaluate, cmd_fit_classifier, cmd_generate, cmd_plot, cmd_train, Context, GenerateArgs};

#[derive(Parser)]
#[command(name = "latent-cf", version, about = "Counterfactual explanations by latent-space interpolation")]
struct Cli {
    /// TOML run configuration (defaults to the synthetic benchmark).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and freeze the classifier to be explained.
    FitClassifier,
    /// Train the autoencoder, mixture head and adversary.
    Train {
        /// Classifier archive (default: OUT/classifier.lcf).
        #[arg(long)]
        classifier: Option<PathBuf>,
    },
    /// Generate counterfactuals for query rows.
    Generate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        classifier: Option<PathBuf>,
        /// CSV of raw query rows.
        #[arg(long, conflicts_with = "all_test")]
        queries: Option<PathBuf>,
        /// Use every base-class row of the held-out split.
        #[arg(long)]
        all_test: bool,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value = "interp")]
        method: Method,
        /// Write the score curve of each query.
        #[arg(long)]
        trace: bool,
    },
    /// Run the repeated split protocol and write the metric report.
    Evaluate {
        /// Methods to compare (default: all).
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
    },
    /// Render a PCA export or a trace as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        boundary: f64,
    },
}

fn run(cli: Cli) -> latent_cf::Result<bool> {
    if let Command::Plot {
        input,
        output,
        boundary,
    } = &cli.command
    {
        let kind = cmd_plot(input, output, *boundary)?;
        println!("wrote {} ({kind:?})", output.display());
        return Ok(true);
    }
    let ctx = Context::load(cli.config.as_deref(), cli.seed, cli.out)?;
    match cli.command {
        Command::FitClassifier => {
            let r = cmd_fit_classifier(&ctx)?;
            println!("train accuracy {:.4}", r.train_accuracy);
            println!("held-out accuracy {:.4}", r.test_accuracy);
            println!("wrote {}", r.archive.display());
        }
        Command::Train { classifier } => {
            let r = cmd_train(&ctx, classifier.as_deref())?;
            if let Some(last) = r.epochs.last() {
                println!(
                    "epochs {} final L_rec {:.5} L_GM {:.5} L_adv {:.5}",
                    r.epochs.len(),
                    last.rec,
                    last.gm,
                    last.adv
                );
            }
            println!("wrote {}", r.archive.display());
            println!("wrote {}", r.telemetry.display());
        }
        Command::Generate {
            model,
            classifier,
            queries,
            all_test,
            tol,
            grid,
            method,
            trace,
        } => {
            let r = cmd_generate(
                &ctx,
                &GenerateArgs {
                    model,
                    classifier,
                    queries,
                    all_test,
                    tol,
                    grid,
                    method,
                    trace,
                },
            )?;
            println!(
                "{} queries, {} counterfactuals, {} already in the target class",
                r.queries, r.successes, r.already_target
            );
            println!("wrote {}", r.results.display());
        }
        Command::Evaluate { method } => {
            let methods = if method.is_empty() { Method::ALL.to_vec() } else { method };
            let r = cmd_evaluate(&ctx, &methods, |msg| eprintln!("{msg}"))?;
            print!("{}", report_table(&r.report));
            println!("wrote {}", r.dir.display());
            return Ok(r.report.failed.is_empty());
        }
        Command::Plot { .. } => unreachable!(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
