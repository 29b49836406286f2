//! End-to-end experiment orchestration: runs the evolution arms over
//! multiple trials, persists per-generation logs and best genomes, trains
//! selected genomes for a longer period, and samples a large random-GRN
//! baseline. Everything is a pure function of the config file, including
//! every seed, so reruns reproduce all outputs byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{self, Dataset};
use crate::evo::{self, EvoConfig, LearnSettings};
use crate::genome::Genome;
use crate::optim;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("missing required config key `{0}`")]
    MissingKey(&'static str),
    #[error("bad value for config key `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("malformed config line {0}: expected `key = value`")]
    MalformedLine(usize),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Evo(#[from] evo::EvoError),
    #[error(transparent)]
    Optim(#[from] optim::OptimError),
    #[error("missing genome file {0}")]
    MissingGenomeFile(PathBuf),
    #[error("genome file {path}: {message}")]
    BadGenomeFile { path: PathBuf, message: String },
    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub target_columns: Vec<usize>,
    pub split_seed: u64,
    pub test_fraction: f64,
    /// Global seed; per-trial seeds are `seed + trial_index`.
    pub seed: u64,
    pub evo: EvoConfig,
    /// Fitness-epoch settings compared against each other.
    pub arms: Vec<usize>,
    pub learn: LearnSettings,
    pub grn_steps: usize,
    pub post_training_epochs: usize,
    pub n_trials: usize,
    pub baseline_reg_proteins: usize,
    pub baseline_samples: usize,
    /// Which generations feed the long-training comparison, as fractions of
    /// the final generation index.
    pub comparison_fractions: Vec<f64>,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    /// Raw config text, hashed into the manifest.
    pub source: String,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::MalformedLine(idx + 1))?;
            pairs.insert(key.trim().to_string(), value.trim().to_string());
        }

        let mut cfg = ExperimentConfig {
            dataset: PathBuf::new(),
            target_columns: Vec::new(),
            split_seed: 0,
            test_fraction: 0.25,
            seed: 0,
            evo: EvoConfig::default(),
            arms: vec![0, 1, 10],
            learn: LearnSettings::default(),
            grn_steps: 3,
            post_training_epochs: 200,
            n_trials: 10,
            baseline_reg_proteins: 50,
            baseline_samples: 10,
            comparison_fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            out_dir: PathBuf::from("results"),
            threads: None,
            source: text.to_string(),
        };

        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                key: key.to_string(),
                message: e.to_string(),
            })
        }
        fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse(key, s))
                .collect()
        }

        for (key, value) in &pairs {
            match key.as_str() {
                "dataset" => cfg.dataset = PathBuf::from(value),
                "target_columns" => cfg.target_columns = parse_list(key, value)?,
                "split_seed" => cfg.split_seed = parse(key, value)?,
                "test_fraction" => cfg.test_fraction = parse(key, value)?,
                "seed" => cfg.seed = parse(key, value)?,
                "population_size" => cfg.evo.population_size = parse(key, value)?,
                "generations" => cfg.evo.generations = parse(key, value)?,
                "crossover_rate" => cfg.evo.crossover_rate = parse(key, value)?,
                "mutation_rate" => cfg.evo.mutation_rate = parse(key, value)?,
                "p_add" => cfg.evo.p_add = parse(key, value)?,
                "p_modify" => cfg.evo.p_modify = parse(key, value)?,
                "p_delete" => cfg.evo.p_delete = parse(key, value)?,
                "speciation_threshold" => cfg.evo.speciation_threshold = parse(key, value)?,
                "tournament_size" => cfg.evo.tournament_size = parse(key, value)?,
                "elitism" => cfg.evo.elitism = parse(key, value)?,
                "max_regulatory" => cfg.evo.max_regulatory = parse(key, value)?,
                "arms" => cfg.arms = parse_list(key, value)?,
                "grn_steps" => cfg.grn_steps = parse(key, value)?,
                "batch_size" => cfg.learn.batch_size = parse(key, value)?,
                "lr" => cfg.learn.hyper.lr = parse(key, value)?,
                "b1" => cfg.learn.hyper.b1 = parse(key, value)?,
                "b2" => cfg.learn.hyper.b2 = parse(key, value)?,
                "eps" => cfg.learn.hyper.eps = parse(key, value)?,
                "beta_lo" => cfg.learn.bounds.beta_lo = parse(key, value)?,
                "beta_hi" => cfg.learn.bounds.beta_hi = parse(key, value)?,
                "delta_lo" => cfg.learn.bounds.delta_lo = parse(key, value)?,
                "delta_hi" => cfg.learn.bounds.delta_hi = parse(key, value)?,
                "post_training_epochs" => cfg.post_training_epochs = parse(key, value)?,
                "n_trials" => cfg.n_trials = parse(key, value)?,
                "baseline_reg_proteins" => cfg.baseline_reg_proteins = parse(key, value)?,
                "baseline_samples" => cfg.baseline_samples = parse(key, value)?,
                "comparison_fractions" => cfg.comparison_fractions = parse_list(key, value)?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "threads" => cfg.threads = Some(parse(key, value)?),
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }

        if cfg.dataset.as_os_str().is_empty() {
            return Err(ConfigError::MissingKey("dataset"));
        }
        if cfg.arms.is_empty() {
            return Err(ConfigError::BadValue {
                key: "arms".into(),
                message: "at least one arm is required".into(),
            });
        }
        if cfg.n_trials < 1 {
            return Err(ConfigError::BadValue {
                key: "n_trials".into(),
                message: "must be >= 1".into(),
            });
        }
        cfg.evo
            .validate()
            .map_err(|e| ConfigError::BadValue { key: "evolution".into(), message: e.to_string() })?;
        Ok(cfg)
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed + trial as u64
    }
}

#[derive(Debug, Clone)]
pub struct GenomeFileRecord {
    pub arm: usize,
    pub trial: usize,
    pub generation: usize,
    pub path: PathBuf,
}

#[derive(Debug)]
pub struct ResultsBundle {
    pub train: Dataset,
    pub test: Dataset,
    pub genome_files: Vec<GenomeFileRecord>,
    pub files: Vec<PathBuf>,
}

fn write_file(path: &Path, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(io_err(path))?;
    files.push(path.to_path_buf());
    Ok(())
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), HarnessError> {
    let table = data::load_csv(&cfg.dataset)?;
    let (train_raw, test_raw) = data::split(&table, cfg.test_fraction, cfg.split_seed)?;
    Ok(data::normalize(&train_raw, &test_raw, &cfg.target_columns)?)
}

/// Runs every (arm, trial) evolution, writing per-trial logs, per-generation
/// best genomes, and per-arm aggregates.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    mut progress: impl FnMut(&str),
) -> Result<ResultsBundle, HarnessError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let (train, test) = load_dataset(cfg)?;

    let mut files = Vec::new();
    let mut genome_files = Vec::new();

    for &arm in &cfg.arms {
        // per (generation) across trials: collected series for aggregation
        let mut series: Vec<Vec<[f64; 4]>> = vec![Vec::new(); cfg.evo.generations];
        for trial in 0..cfg.n_trials {
            let mut evo_cfg = cfg.evo.clone();
            evo_cfg.fitness_epochs = arm;
            evo_cfg.rng_seed = cfg.trial_seed(trial);
            progress(&format!("arm {arm} trial {trial} seed {}", evo_cfg.rng_seed));
            let (history, _) = evo::evolve(&evo_cfg, &train, cfg.grn_steps, &cfg.learn, |rec| {
                progress(&format!(
                    "gen {} best_pre {} best_post {}",
                    rec.generation, rec.best_pre_mse, rec.best_post_mse
                ));
            })?;

            let mut log = String::from(
                "generation,best_pre_mse,mean_pre_mse,best_post_mse,mean_post_mse,species_count,best_n_reg\n",
            );
            for rec in &history {
                writeln!(
                    log,
                    "{},{},{},{},{},{},{}",
                    rec.generation,
                    rec.best_pre_mse,
                    rec.mean_pre_mse,
                    rec.best_post_mse,
                    rec.mean_post_mse,
                    rec.species_count,
                    rec.best_n_reg
                )
                .unwrap();
                series[rec.generation].push([
                    rec.best_pre_mse,
                    rec.mean_pre_mse,
                    rec.best_post_mse,
                    rec.mean_post_mse,
                ]);

                let gpath = cfg
                    .out_dir
                    .join(format!("arm{arm}_trial{trial}_gen{:04}_best.grn", rec.generation));
                write_file(&gpath, &rec.best_genome.to_text(), &mut files)?;
                genome_files.push(GenomeFileRecord {
                    arm,
                    trial,
                    generation: rec.generation,
                    path: gpath,
                });
            }
            let lpath = cfg.out_dir.join(format!("arm{arm}_trial{trial}_log.csv"));
            write_file(&lpath, &log, &mut files)?;
        }

        let mut agg = String::from(
            "generation,best_pre_mean,best_pre_std,mean_pre_mean,mean_pre_std,best_post_mean,best_post_std,mean_post_mean,mean_post_std\n",
        );
        for (generation, rows) in series.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let mut cells = Vec::new();
            for k in 0..4 {
                let vals: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var =
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
                cells.push(mean);
                cells.push(var.sqrt());
            }
            let joined: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
            writeln!(agg, "{},{}", generation, joined.join(",")).unwrap();
        }
        let apath = cfg.out_dir.join(format!("arm{arm}_aggregate.csv"));
        write_file(&apath, &agg, &mut files)?;
    }

    Ok(ResultsBundle { train, test, genome_files, files })
}

fn load_genome(path: &Path) -> Result<Genome, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::MissingGenomeFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Genome::from_text(&text).map_err(|e| HarnessError::BadGenomeFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Which generation indices feed the long-training comparison.
pub fn comparison_generations(fractions: &[f64], generations: usize) -> Vec<usize> {
    let last = generations.saturating_sub(1);
    let mut gens: Vec<usize> = fractions
        .iter()
        .map(|f| ((f * last as f64).round() as usize).min(last))
        .collect();
    gens.sort_unstable();
    gens.dedup();
    gens
}

#[derive(Debug, Clone)]
pub struct PostTrainRow {
    pub arm: usize,
    pub trial: usize,
    pub generation: usize,
    pub pre_train_mse: f64,
    pub post_train_mse: f64,
    pub pre_test_mse: f64,
    pub post_test_mse: f64,
}

/// Loads the selected generation-best genomes and trains each for the long
/// learning period, reporting train/test MSE before and after.
pub fn post_train_best(
    cfg: &ExperimentConfig,
    bundle: &mut ResultsBundle,
    epochs: usize,
) -> Result<Vec<PostTrainRow>, HarnessError> {
    let selected = comparison_generations(&cfg.comparison_fractions, cfg.evo.generations);
    let mut rows = Vec::new();
    for rec in &bundle.genome_files {
        if !selected.contains(&rec.generation) {
            continue;
        }
        let genome = load_genome(&rec.path)?;
        let pre_train = optim::evaluate(&genome, &bundle.train, cfg.grn_steps)?;
        let pre_test = optim::evaluate(&genome, &bundle.test, cfg.grn_steps)?;
        let seed = cfg.trial_seed(rec.trial) ^ 0x5EED_0000_0000_0001;
        let (trained, _) = optim::train(
            &genome,
            &bundle.train,
            epochs,
            cfg.learn.batch_size,
            cfg.grn_steps,
            cfg.learn.hyper,
            &cfg.learn.bounds,
            seed,
        )?;
        rows.push(PostTrainRow {
            arm: rec.arm,
            trial: rec.trial,
            generation: rec.generation,
            pre_train_mse: pre_train,
            post_train_mse: optim::evaluate(&trained, &bundle.train, cfg.grn_steps)?,
            pre_test_mse: pre_test,
            post_test_mse: optim::evaluate(&trained, &bundle.test, cfg.grn_steps)?,
        });
    }

    let mut csv = String::from(
        "arm,trial,generation,pre_train_mse,post_train_mse,pre_test_mse,post_test_mse\n",
    );
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.arm, r.trial, r.generation, r.pre_train_mse, r.post_train_mse, r.pre_test_mse, r.post_test_mse
        )
        .unwrap();
    }
    let path = cfg.out_dir.join("post_training.csv");
    write_file(&path, &csv, &mut bundle.files)?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct BaselineRow {
    pub sample: usize,
    pub pre_test_mse: f64,
    pub post_test_mse: f64,
}

/// Samples large random GRNs (default 50 regulatory proteins), trains each
/// for the long learning period, and reports the test-MSE distribution.
pub fn random_baseline(
    cfg: &ExperimentConfig,
    bundle: &mut ResultsBundle,
    n_reg: usize,
    n_samples: usize,
    epochs: usize,
) -> Result<Vec<BaselineRow>, HarnessError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xBA5E_0000_0000_0001);
    let n_in = bundle.train.n_features;
    let n_out = bundle.train.n_targets;
    let mut rows = Vec::new();
    for sample in 0..n_samples {
        let genome = evo::random_genome(&mut rng, n_in, n_out, n_reg, &cfg.learn.bounds);
        let pre = optim::evaluate(&genome, &bundle.test, cfg.grn_steps)?;
        let seed = cfg.seed ^ 0xBA5E_0000_0000_0002 ^ (sample as u64) << 8;
        let (trained, _) = optim::train(
            &genome,
            &bundle.train,
            epochs,
            cfg.learn.batch_size,
            cfg.grn_steps,
            cfg.learn.hyper,
            &cfg.learn.bounds,
            seed,
        )?;
        rows.push(BaselineRow {
            sample,
            pre_test_mse: pre,
            post_test_mse: optim::evaluate(&trained, &bundle.test, cfg.grn_steps)?,
        });
    }
    let mut csv = String::from("sample,pre_test_mse,post_test_mse\n");
    for r in &rows {
        writeln!(csv, "{},{},{}", r.sample, r.pre_test_mse, r.post_test_mse).unwrap();
    }
    let path = cfg.out_dir.join("random_baseline.csv");
    write_file(&path, &csv, &mut bundle.files)?;
    Ok(rows)
}

/// Records the config hash, per-trial seeds, and every file the run wrote.
pub fn write_manifest(cfg: &ExperimentConfig, bundle: &ResultsBundle) -> Result<PathBuf, HarnessError> {
    let mut hasher = Sha256::new();
    hasher.update(cfg.source.as_bytes());
    let hash = hasher.finalize();
    let mut text = String::new();
    write!(text, "config_sha256 ").unwrap();
    for b in hash {
        write!(text, "{b:02x}").unwrap();
    }
    text.push('\n');
    writeln!(text, "split_seed {}", cfg.split_seed).unwrap();
    let seeds: Vec<String> = (0..cfg.n_trials).map(|t| cfg.trial_seed(t).to_string()).collect();
    writeln!(text, "trial_seeds {}", seeds.join(",")).unwrap();
    let mut names: Vec<String> = bundle
        .files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort_unstable();
    for name in names {
        writeln!(text, "file {name}").unwrap();
    }
    let path = cfg.out_dir.join("manifest.txt");
    std::fs::write(&path, &text).map_err(io_err(&path))?;
    Ok(path)
}

/// The whole protocol: evolutions, long-training comparison, random
/// baseline, manifest.
pub fn run_full_experiment(
    cfg: &ExperimentConfig,
    progress: impl FnMut(&str),
) -> Result<ResultsBundle, HarnessError> {
    let mut bundle = run_experiment(cfg, progress)?;
    post_train_best(cfg, &mut bundle, cfg.post_training_epochs)?;
    random_baseline(
        cfg,
        &mut bundle,
        cfg.baseline_reg_proteins,
        cfg.baseline_samples,
        cfg.post_training_epochs,
    )?;
    write_manifest(cfg, &bundle)?;
    Ok(bundle)
}
