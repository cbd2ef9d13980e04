use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bloomnet::baselines::{self, BaselineFactory};
use bloomnet::corpus::{self, synthetic, DataFormat};
use bloomnet::harness::{self, cross_validate, run_ablation, BloomNetFactory, CvOptions, ModelFactory, RunResult};
use bloomnet::hwa::WordVocab;
use bloomnet::nn;
use bloomnet::seed::{self, stream};
use bloomnet::{CognitiveLevel, Dataset, FoldPlan};
use candle_core::Device;
use serde::Serialize;

use crate::config::{ExperimentConfig, ABLATION};
use crate::report::{emit_report, Comparison, ReportFormat, ResultFile};
use crate::Failure;

pub fn load_data(path: &Path) -> Result<Dataset> {
    let format = DataFormat::from_path(path)
        .with_context(|| format!("{}: unknown data format (use .csv, .tsv or .jsonl)", path.display()))?;
    Ok(corpus::load_dataset(path, format)?)
}

/// Class counts in the layout of the corpus statistics table.
pub fn class_table(data: &Dataset) -> String {
    let mut out = format!("{}\n{:<14}{:>7}\n", data.name(), "level", "count");
    for level in CognitiveLevel::ALL {
        out += &format!("{:<14}{:>7}\n", level.name(), data.count(level));
    }
    out += &format!("{:<14}{:>7}\n", "total", data.len());
    let dups = data.duplicate_texts();
    if !dups.is_empty() {
        out += &format!("note: {} question texts occur more than once\n", dups.len());
    }
    out
}

pub fn validate_data(paths: &[PathBuf]) -> Result<(), Failure> {
    if paths.is_empty() {
        return Err(Failure::Usage(anyhow::anyhow!("no datasets given")));
    }
    for p in paths {
        let data = load_data(p).map_err(Failure::Usage)?;
        print!("{}", class_table(&data));
    }
    Ok(())
}

#[derive(Serialize)]
struct DatasetRecord {
    path: PathBuf,
    name: String,
    size: usize,
    class_counts: [usize; bloomnet::NUM_LEVELS],
}

impl DatasetRecord {
    fn new(path: &Path, d: &Dataset) -> Self {
        Self {
            path: path.to_path_buf(),
            name: d.name().to_string(),
            size: d.len(),
            class_counts: d.class_counts(),
        }
    }
}

#[derive(Serialize)]
struct CheckpointRecord {
    model: String,
    fold: usize,
    dir: PathBuf,
    checksum: String,
}

#[derive(Serialize)]
struct Seeds {
    seed: u64,
    streams: [&'static str; 6],
}

/// Everything needed to rerun an experiment.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    run_id: &'a str,
    version: &'static str,
    config: &'a ExperimentConfig,
    seeds: Seeds,
    fold_plan_digest: String,
    datasets: Vec<DatasetRecord>,
    checkpoints: Vec<CheckpointRecord>,
}

/// Loaded inputs of a cross-validated run.
struct Experiment {
    config: ExperimentConfig,
    d1: Dataset,
    d2: Option<Dataset>,
    plan: FoldPlan,
    vocab: WordVocab,
    run_dir: PathBuf,
    run_id: String,
    workers: usize,
}

impl Experiment {
    fn prepare(config: ExperimentConfig, command: &str, model: &str, workers: usize) -> Result<Self, Failure> {
        config.validate().map_err(Failure::Usage)?;
        let d1 = load_data(&config.data.dataset1).map_err(Failure::Usage)?;
        let d2 = config.data.dataset2.as_deref().map(load_data).transpose().map_err(Failure::Usage)?;
        let plan = corpus::make_folds(&d1, config.folds.k, config.seed, config.folds.stratified)
            .map_err(|e| Failure::Usage(e.into()))?;
        let vocab = WordVocab::build(d1.texts(), config.model.min_word_freq);
        let toml = config.to_toml().map_err(Failure::Runtime)?;
        let run_id = config
            .output
            .run_id
            .clone()
            .unwrap_or_else(|| format!("{command}-{model}-{:016x}", seed::hash_str(0, &toml)).replace('+', "plus-"));
        let run_dir = config.output.dir.join(&run_id);
        std::fs::create_dir_all(&run_dir)
            .with_context(|| format!("cannot create {}", run_dir.display()))
            .map_err(Failure::Runtime)?;
        write(&run_dir.join("config.toml"), &toml)?;
        write(&run_dir.join("folds.json"), &plan.to_json().map_err(|e| Failure::Runtime(e.into()))?)?;
        Ok(Self {
            config,
            d1,
            d2,
            plan,
            vocab,
            run_dir,
            run_id,
            workers,
        })
    }

    fn options(&self, model: &str) -> CvOptions<'_> {
        CvOptions {
            ood: self.d2.as_ref(),
            workers: self.workers,
            checkpoint_dir: self
                .config
                .output
                .save_checkpoints
                .then(|| self.run_dir.join("checkpoints").join(model.replace('+', "plus-"))),
        }
    }

    fn factory(&self, name: &str) -> Result<Box<dyn ModelFactory>> {
        let c = &self.config;
        if name == "bloomnet" {
            return Ok(Box::new(BloomNetFactory::new(c.bloomnet_config()?, self.vocab.clone())));
        }
        Ok(Box::new(BaselineFactory {
            spec: c.baseline_spec(name)?,
            vocab: self.vocab.clone(),
            encoder: c.representation_encoder()?,
            seed: c.seed,
            dtype: nn::parse_dtype(&c.model.dtype)?,
            device: Device::Cpu,
        }))
    }

    fn run(&self, name: &str) -> Result<RunResult> {
        eprintln!("cross-validating {name} ({} folds)", self.plan.k);
        let factory = self.factory(name)?;
        let result = cross_validate(factory.as_ref(), &self.d1, &self.plan, &self.config.train_config(), &self.options(&factory.name()))?;
        Ok(result)
    }

    fn checkpoints(&self, results: &[&RunResult]) -> Vec<CheckpointRecord> {
        results
            .iter()
            .flat_map(|r| {
                let dir = self.options(&r.model_name).checkpoint_dir;
                r.per_fold.iter().filter_map(move |f| {
                    Some(CheckpointRecord {
                        model: r.model_name.clone(),
                        fold: f.fold,
                        dir: dir.as_ref()?.join(format!("fold-{}", f.fold)),
                        checksum: f.trained_checksum.clone(),
                    })
                })
            })
            .collect()
    }

    fn finish(&self, command: &str, checkpoints: Vec<CheckpointRecord>) -> Result<(), Failure> {
        let mut datasets = vec![DatasetRecord::new(&self.config.data.dataset1, &self.d1)];
        if let (Some(p), Some(d)) = (&self.config.data.dataset2, &self.d2) {
            datasets.push(DatasetRecord::new(p, d));
        }
        let manifest = RunManifest {
            command,
            run_id: &self.run_id,
            version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            seeds: Seeds {
                seed: self.config.seed,
                streams: [
                    stream::FOLDS,
                    stream::INIT,
                    stream::SHUFFLE,
                    stream::DROPOUT,
                    stream::VALIDATION,
                    stream::FOREST,
                ],
            },
            fold_plan_digest: self.plan.digest(),
            datasets,
            checkpoints,
        };
        write_json(&self.run_dir.join("manifest.json"), &manifest)?;
        eprintln!("artifacts in {}", self.run_dir.display());
        Ok(())
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Runtime)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.into()))?;
    write(path, &(text + "\n"))
}

pub fn train(config: ExperimentConfig, workers: usize) -> Result<(), Failure> {
    let name = config.model.name.clone();
    if name == ABLATION {
        return ablate(config, workers);
    }
    let exp = Experiment::prepare(config, "train", &name, workers)?;
    let result = exp.run(&name).map_err(Failure::Runtime)?;
    write_json(&exp.run_dir.join("result.json"), &result)?;
    let table = emit_report(std::slice::from_ref(&result), ReportFormat::Markdown).map_err(Failure::Runtime)?;
    write(&exp.run_dir.join("report.md"), &table)?;
    print!("{table}");
    exp.finish("train", exp.checkpoints(&[&result]))
}

pub fn ablate(config: ExperimentConfig, workers: usize) -> Result<(), Failure> {
    let exp = Experiment::prepare(config, "ablate", "bloomnet", workers)?;
    let bcfg = exp.config.bloomnet_config().map_err(Failure::Usage)?;
    let options = exp.options("bloomnet");
    eprintln!("running the four-variant ablation ({} folds each)", exp.plan.k);
    let table = run_ablation(&bcfg, &exp.vocab, &exp.d1, &exp.plan, &exp.config.train_config(), &options)
        .map_err(|e| Failure::Runtime(e.into()))?;
    write_json(&exp.run_dir.join("ablation.json"), &table)?;
    let runs: Vec<RunResult> = table.rows.iter().map(|r| r.result.clone()).collect();
    let md = emit_report(&runs, ReportFormat::Markdown).map_err(Failure::Runtime)?;
    write(&exp.run_dir.join("ablation.md"), &md)?;
    print!("{md}");
    // Ablation checkpoints live under one directory per variant.
    let mut records = Vec::new();
    if let Some(dir) = &options.checkpoint_dir {
        for r in &runs {
            for f in &r.per_fold {
                records.push(CheckpointRecord {
                    model: r.model_name.clone(),
                    fold: f.fold,
                    dir: dir.join(r.model_name.replace('+', "plus-")).join(format!("fold-{}", f.fold)),
                    checksum: f.trained_checksum.clone(),
                });
            }
        }
    }
    exp.finish("ablate", records)
}

pub fn compare(config: ExperimentConfig, workers: usize) -> Result<(), Failure> {
    let exp = Experiment::prepare(config, "compare", "models", workers)?;
    let mut results = Vec::new();
    for name in &exp.config.model.compare {
        results.push(exp.run(name).map_err(Failure::Runtime)?);
    }
    let cmp = Comparison::new(results, exp.plan.digest()).map_err(Failure::Runtime)?;
    write(&exp.run_dir.join("comparison.json"), &cmp.render(ReportFormat::Json).map_err(Failure::Runtime)?)?;
    let md = cmp.render(ReportFormat::Markdown).map_err(Failure::Runtime)?;
    write(&exp.run_dir.join("comparison.md"), &md)?;
    print!("{md}");
    let refs: Vec<&RunResult> = cmp.rows.iter().map(|r| &r.result).collect();
    exp.finish("compare", exp.checkpoints(&refs))
}

pub fn evaluate(checkpoint: &Path, data: &Path, out: Option<&Path>) -> Result<(), Failure> {
    if !checkpoint.join("manifest.json").is_file() {
        return Err(Failure::Usage(anyhow::anyhow!(
            "missing checkpoint: {} has no manifest.json",
            checkpoint.display()
        )));
    }
    let data = load_data(data).map_err(Failure::Usage)?;
    let model = baselines::load_checkpoint(checkpoint, &Device::Cpu)
        .with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))
        .map_err(Failure::Runtime)?;
    let metrics = harness::evaluate(model.as_ref(), &data).map_err(|e| Failure::Runtime(e.into()))?;
    let text = serde_json::to_string_pretty(&metrics).map_err(|e| Failure::Runtime(e.into()))? + "\n";
    match out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn report(files: &[PathBuf], format: ReportFormat, out: Option<&Path>) -> Result<(), Failure> {
    if files.is_empty() {
        return Err(Failure::Usage(anyhow::anyhow!("no result files given")));
    }
    let mut parsed = Vec::new();
    for f in files {
        let raw = std::fs::read_to_string(f)
            .with_context(|| format!("cannot read {}", f.display()))
            .map_err(Failure::Usage)?;
        let file: ResultFile = serde_json::from_str(&raw)
            .with_context(|| format!("{} is not a result file", f.display()))
            .map_err(Failure::Usage)?;
        parsed.push(file);
    }
    let text = match parsed.as_slice() {
        [ResultFile::Comparison(c)] => c.render(format),
        _ => emit_report(&parsed.into_iter().flat_map(ResultFile::into_runs).collect::<Vec<_>>(), format),
    }
    .map_err(Failure::Runtime)?;
    match out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Write synthetic stand-ins for the two corpora.
pub fn generate_data(dir: &Path, seed_value: u64, format: DataFormat) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::Runtime)?;
    let ext = match format {
        DataFormat::Csv => "csv",
        DataFormat::Tsv => "tsv",
        DataFormat::Jsonl => "jsonl",
    };
    for data in [synthetic::dataset1_like(seed_value), synthetic::dataset2_like(seed_value)] {
        let path = dir.join(format!("{}.{ext}", data.name()));
        corpus::write_dataset(&data, &path, format).map_err(|e| Failure::Runtime(e.into()))?;
        eprintln!("wrote {} ({} questions)", path.display(), data.len());
    }
    Ok(())
}
