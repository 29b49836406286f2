use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grn::data::{self, Sample};
use grn::evo;
use grn::genome::Genome;
use grn::grad;
use grn::harness::{self, ExperimentConfig};
use grn::optim::{AdamHyper, Bounds};

#[derive(Parser)]
#[command(name = "grn", version, about = "Differentiable gene regulatory networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be > 0, got {v}"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compare analytic gradients against central finite differences on
    /// random genomes.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum regulatory protein count per random genome.
        #[arg(long, default_value_t = 5)]
        n_proteins: usize,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5, value_parser = positive_f64)]
        epsilon: f64,
    },
    /// Run a single evolution (first arm, one trial) from a config file.
    Evolve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the full experiment protocol: all arms and trials, long-training
    /// comparison, random baseline, manifest.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a genome on a CSV dataset and write `<genome>.trained`.
    Train {
        #[arg(long)]
        genome: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
    },
    /// Evaluate a genome's MSE on a CSV dataset.
    Eval {
        #[arg(long)]
        genome: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        steps: usize,
    },
}

fn gradcheck(seed: u64, n_proteins: usize, steps: usize, trials: usize, epsilon: f64) -> ExitCode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = Bounds::default();
    let mut max_rel = 0.0f64;
    let mut rel_sum = 0.0f64;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for _ in 0..trials {
        let n_in = rng.gen_range(1..=3);
        let n_reg = rng.gen_range(1..=n_proteins.max(1));
        let genome = evo::random_genome(&mut rng, n_in, 1, n_reg, &bounds);
        let batch: Vec<Sample> = (0..3)
            .map(|_| Sample {
                features: (0..n_in).map(|_| rng.gen()).collect(),
                target: vec![rng.gen()],
            })
            .collect();
        let report = grad::grad_check(&genome, &batch, steps, epsilon).expect("nonempty batch");
        max_rel = max_rel.max(report.max_rel_error);
        rel_sum += report.mean_rel_error * report.n_checked as f64;
        checked += report.n_checked;
        skipped += report.n_skipped;
    }
    let mean = if checked > 0 { rel_sum / checked as f64 } else { 0.0 };
    println!("max_rel_error {max_rel}");
    println!("mean_rel_error {mean}");
    println!("checked {checked}");
    println!("skipped {skipped}");
    if max_rel <= 1e-4 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, ExitCode> {
    match ExperimentConfig::from_file(path) {
        Ok(cfg) => {
            if let Some(threads) = cfg.threads {
                // Ignore failure: the global pool can only be built once.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
            Ok(cfg)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(ExitCode::from(2))
        }
    }
}

fn fail2(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(2)
}

/// Loads a CSV for the train/eval subcommands: the whole file is the
/// dataset, last column is the target, normalized against itself.
fn load_whole_csv(path: &PathBuf) -> Result<data::Dataset, String> {
    let table = data::load_csv(path).map_err(|e| e.to_string())?;
    let (ds, _) = data::normalize(&table, &table, &[]).map_err(|e| e.to_string())?;
    Ok(ds)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Gradcheck { seed, n_proteins, steps, trials, epsilon } => {
            gradcheck(seed, n_proteins, steps, trials, epsilon)
        }
        Command::Evolve { config } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            cfg.arms.truncate(1);
            cfg.n_trials = 1;
            match harness::run_experiment(&cfg, |line| eprintln!("{line}")) {
                Ok(bundle) => match harness::write_manifest(&cfg, &bundle) {
                    Ok(_) => ExitCode::SUCCESS,
                    Err(e) => fail2(e),
                },
                Err(e) => fail2(e),
            }
        }
        Command::Experiment { config } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match harness::run_full_experiment(&cfg, |line| eprintln!("{line}")) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => fail2(e),
            }
        }
        Command::Train { genome, data, epochs, seed, steps, batch_size } => {
            let text = match std::fs::read_to_string(&genome) {
                Ok(t) => t,
                Err(e) => return fail2(format!("{}: {e}", genome.display())),
            };
            let g = match Genome::from_text(&text) {
                Ok(g) => g,
                Err(e) => return fail2(format!("{}: {e}", genome.display())),
            };
            let ds = match load_whole_csv(&data) {
                Ok(d) => d,
                Err(e) => return fail2(format!("{}: {e}", data.display())),
            };
            match grn::optim::train(
                &g,
                &ds,
                epochs,
                batch_size,
                steps,
                AdamHyper::default(),
                &Bounds::default(),
                seed,
            ) {
                Ok((trained, _)) => {
                    let out = genome.with_extension(match genome.extension() {
                        Some(ext) => format!("{}.trained", ext.to_string_lossy()),
                        None => "trained".to_string(),
                    });
                    if let Err(e) = std::fs::write(&out, trained.to_text()) {
                        return fail2(format!("{}: {e}", out.display()));
                    }
                    match grn::optim::evaluate(&trained, &ds, steps) {
                        Ok(mse) => {
                            println!("{mse}");
                            ExitCode::SUCCESS
                        }
                        Err(e) => fail2(e),
                    }
                }
                Err(e) => fail2(e),
            }
        }
        Command::Eval { genome, data, steps } => {
            let text = match std::fs::read_to_string(&genome) {
                Ok(t) => t,
                Err(e) => return fail2(format!("{}: {e}", genome.display())),
            };
            let g = match Genome::from_text(&text) {
                Ok(g) => g,
                Err(e) => return fail2(format!("{}: {e}", genome.display())),
            };
            let ds = match load_whole_csv(&data) {
                Ok(d) => d,
                Err(e) => return fail2(format!("{}: {e}", data.display())),
            };
            match grn::optim::evaluate(&g, &ds, steps) {
                Ok(mse) => {
                    println!("{mse}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail2(e),
            }
        }
    }
}
