use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fedsparsify_core::data::{load_fashion_mnist, partition, read_fds, write_fds};
use fedsparsify_core::federation::{DataSource, DatasetConfig};
use fedsparsify_core::metrics::{
    evaluate, load_checkpoint, records_csv, save_checkpoint, write_records_json,
};
use fedsparsify_core::{Error, ExperimentConfig, Federation, PartitionScheme, PartitionSpec, Result};

#[derive(Parser)]
#[command(name = "fedsparsify", version, about = "Federated training with progressive sparsification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Iid,
    Noniid,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML or JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the dataset directory of a fashion-mnist config.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        charge_mask_every_round: bool,
    },
    /// Split a training set into client shards written as FDS files.
    Partition {
        /// `fashion-mnist` or a path to an FDS file.
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "data/fashion-mnist")]
        data_dir: PathBuf,
        #[arg(long)]
        clients: usize,
        #[arg(long, value_enum, default_value = "iid")]
        scheme: Scheme,
        #[arg(long)]
        classes_per_client: Option<usize>,
        #[arg(long, default_value_t = 1990)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report test accuracy and loss of a saved checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `fashion-mnist` or a path to an FDS test file.
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "data/fashion-mnist")]
        data_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            out,
            data_dir,
            charge_mask_every_round,
        } => run(&config, out, data_dir, charge_mask_every_round),
        Command::Partition {
            dataset,
            data_dir,
            clients,
            scheme,
            classes_per_client,
            seed,
            out,
        } => {
            let scheme = match scheme {
                Scheme::Iid => PartitionScheme::Iid,
                Scheme::Noniid => PartitionScheme::NonIid,
            };
            let spec = PartitionSpec {
                num_clients: clients,
                scheme,
                classes_per_client,
                seed,
            };
            split(&dataset, &data_dir, &spec, &out)
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            data_dir,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let test = if dataset == "fashion-mnist" {
                load_fashion_mnist(&data_dir)?.test
            } else {
                read_fds(Path::new(&dataset))?
            };
            let eval = evaluate(&ckpt.arch, &ckpt.params, &ckpt.mask, &test)?;
            let p = ckpt.arch.param_count();
            println!(
                "accuracy={} loss={} nnz={} sparsity={}",
                eval.accuracy,
                eval.loss,
                ckpt.mask.nnz(),
                1.0 - ckpt.mask.nnz() as f64 / p as f64
            );
            Ok(())
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn run(
    config_path: &Path,
    out: Option<PathBuf>,
    data_dir: Option<PathBuf>,
    charge_mask_every_round: bool,
) -> Result<()> {
    let mut config = ExperimentConfig::from_file(config_path)?;
    if let Some(dir) = data_dir {
        config.dataset = DatasetConfig {
            source: DataSource::FashionMnist { dir },
            ..config.dataset
        };
    }
    config.charge_mask_every_round |= charge_mask_every_round;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let out = out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs/latest"));
    let mut fed = Federation::from_config(config, base)?;
    create_dir(&out)?;
    write_json(&out.join("manifest.json"), fed.manifest())?;
    let records = fed.run_with(|r| {
        eprintln!(
            "round {:>4}  acc {:.4}  loss {:.4}  nnz {:>7}  sparsity {:.4}",
            r.round, r.accuracy, r.loss, r.nnz, r.sparsity
        );
        Ok(())
    })?;
    let csv_path = out.join("records.csv");
    fs::write(&csv_path, records_csv(&records)).map_err(|e| Error::Io {
        path: csv_path,
        source: e,
    })?;
    write_records_json(&records, fed.manifest(), &out.join("records.json"))?;
    save_checkpoint(&fed.checkpoint(), &out.join("checkpoint.bin"))?;
    Ok(())
}

fn split(dataset: &str, data_dir: &Path, spec: &PartitionSpec, out: &Path) -> Result<()> {
    let train = if dataset == "fashion-mnist" {
        load_fashion_mnist(data_dir)?.train
    } else {
        read_fds(Path::new(dataset))?
    };
    let shards = partition(&train, spec)?;
    create_dir(out)?;
    let mut summary = Vec::with_capacity(shards.len());
    for shard in &shards {
        let name = format!("client_{:03}.fds", shard.client_id);
        write_fds(&shard.data, &out.join(&name))?;
        summary.push(serde_json::json!({
            "client_id": shard.client_id,
            "file": name,
            "examples": shard.len(),
            "label_counts": shard.data.label_counts(),
        }));
    }
    let doc = serde_json::json!({ "spec": spec, "clients": summary });
    write_json(&out.join("partition.json"), &doc)
}
