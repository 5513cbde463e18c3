use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use dsp_cli::commands;
use dsp_cli::output::emit_text;
use dsp_cli::ConfigArgs;

/// Deep spatial pyramid encoding and linear classification of descriptor grids.
#[derive(Debug, Parser)]
#[command(name = "dsp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the GMM dictionary on the descriptors of a grid manifest.
    TrainGmm {
        /// Manifest of training grids.
        manifest: PathBuf,
        /// Where to write the GMM (JSON).
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Encode every image of a manifest into a DFVF feature file.
    Encode {
        /// Manifest with one grid per image and scale.
        manifest: PathBuf,
        /// GMM written by train-gmm.
        #[arg(short, long)]
        gmm: PathBuf,
        /// Where to write the features (DFVF).
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a one-vs-rest linear SVM on a feature file.
    TrainSvm {
        /// Labeled features written by encode.
        features: PathBuf,
        /// Where to write the model (JSON).
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the predicted class and per-class scores of each record.
    Predict {
        features: PathBuf,
        /// Model written by train-svm.
        #[arg(short, long)]
        model: PathBuf,
        /// Write to a file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Report accuracy (and mAP for multi-label data) of a model.
    Eval {
        features: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
        /// Report per-class AP and mAP even for single-label data.
        #[arg(long)]
        map: bool,
        /// Write to a file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// List mixture weights in descending order with cumulative sums.
    GmmStats {
        gmm: PathBuf,
        /// Write to a file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::TrainGmm { manifest, output, config } => {
            let s = commands::train_gmm(&manifest, &config.resolve()?, &output)?;
            eprintln!(
                "fit GMM on {} descriptors from {} grids in {} EM steps{}",
                s.descriptors,
                s.grids,
                s.iterations,
                if s.converged { "" } else { " (iteration cap reached)" }
            );
        }
        Command::Encode {
            manifest,
            gmm,
            output,
            config,
        } => {
            let s = commands::encode(&manifest, &gmm, &config.resolve()?, &output)?;
            eprintln!("encoded {} images into {}-dimensional features", s.images, s.dim);
        }
        Command::TrainSvm { features, output, config } => {
            let model = commands::train_svm(&features, &config.resolve()?, &output)?;
            eprintln!("trained {} one-vs-rest classifiers", model.classes.len());
        }
        Command::Predict { features, model, output } => {
            emit_text(output.as_deref(), &commands::predict_table(&features, &model)?)?;
        }
        Command::Eval {
            features,
            model,
            map,
            output,
        } => {
            emit_text(output.as_deref(), &commands::eval_report(&features, &model, map)?)?;
        }
        Command::GmmStats { gmm, output } => {
            emit_text(output.as_deref(), &commands::gmm_stats_table(&gmm)?)?;
        }
    }
    Ok(())
}
