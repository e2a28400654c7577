use std::collections::BTreeSet;
use std::io::{self, BufWriter};
use std::path::Path;
use std::sync::Arc;

use oosguard::data::{oos_domain_split, stackoverflow_style_split, synthesize, OosMode, SplitRatios};
use oosguard::metrics::evaluate;
use oosguard::scorer::calibrate_threshold;
use oosguard::training::{fit_statistics, sweep_alpha, train, DEFAULT_ALPHA_GRID};
use oosguard::{EvaluationReport, Featurizer, ModelArtifact, Policy, Query, TrainingSet, ValidationSet};

use crate::cli::{
    CalibrateArgs, Command, EvalArgs, OosModeArg, Procedure, ScoreArgs, ServeArgs, SplitArgs, SweepArgs, SynthArgs,
    TrainArgs,
};
use crate::config::{load_run_config, load_synthetic_spec, FeaturizerSection, RunConfig};
use crate::dataset::{load_raw, load_split, write_embedding_bundle, write_text_bundle, Inputs, LoadedSplit, RawCorpus};
use crate::error::{CliError, CliResult};
use crate::serve;
use crate::with_examples;

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Split(a) => cmd_split(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Score(a) => cmd_score(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn featurizer_for(split: &LoadedSplit, section: FeaturizerSection) -> CliResult<Featurizer> {
    match &split.inputs {
        Inputs::Embeddings(ex) => {
            let dim = ex
                .first()
                .map(|e| e.input.len())
                .ok_or_else(|| CliError::data(format!("{} is empty", split.path.display())))?;
            Ok(Featurizer::passthrough(dim))
        }
        Inputs::Text(_) => Ok(Featurizer::hashed(section.dim, section.seed)),
    }
}

fn run_config(config: Option<&Path>, preset: Option<&str>, seed: Option<u64>, alpha: Option<f64>) -> CliResult<RunConfig> {
    let mut rc = load_run_config(config, preset)?;
    if let Some(s) = seed {
        rc.train.seed = s;
    }
    if let Some(a) = alpha {
        rc.train.alpha = a;
    }
    rc.train.validate()?;
    Ok(rc)
}

fn training_set(split: &LoadedSplit, featurizer: &Featurizer) -> CliResult<TrainingSet<f64>> {
    Ok(with_examples!(&split.inputs, ex => TrainingSet::from_examples(featurizer, ex, split.labels.len()))?)
}

pub fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let rc = run_config(a.config.as_deref(), a.preset.as_deref(), a.seed, a.alpha)?;
    let split = load_split(&a.data, "train")?;
    let featurizer = featurizer_for(&split, rc.featurizer)?;
    let data = training_set(&split, &featurizer)?;
    let model = train(&rc.train, &data)?;
    println!("{:>5} {:>12} {:>12} {:>12}", "epoch", "ce", "ae", "total");
    for e in &model.log {
        println!("{:>5} {:>12.6} {:>12.6} {:>12.6}", e.epoch, e.ce, e.ae, e.total);
    }
    let scorer = fit_statistics(&model, featurizer, &data, split.labels.clone())?;
    let mut artifact = ModelArtifact::new(scorer);
    artifact.training = Some(rc.train);
    artifact.training_log = model.log;
    artifact.dataset_hashes.insert("train".into(), split.hash());
    artifact.save(&a.out)?;
    eprintln!(
        "wrote {} ({} classes, embedding dim {}, ridge {:e})",
        a.out.display(),
        artifact.scorer.class_count(),
        artifact.scorer.embedding_dim(),
        artifact.scorer.statistics.ridge_used
    );
    Ok(())
}

fn load_model(path: &Path) -> CliResult<ModelArtifact> {
    ModelArtifact::load(path).map_err(|e| match e {
        oosguard::Error::Io { .. } => CliError::usage(e.to_string()),
        other => other.into(),
    })
}

pub fn cmd_calibrate(a: CalibrateArgs) -> CliResult<()> {
    let policy: Policy = a.policy.parse()?;
    let mut artifact = load_model(&a.model)?;
    let split = load_split(&a.data, "validation")?.relabel(&artifact.scorer.labels)?;
    let tau = with_examples!(&split.inputs, ex => calibrate_threshold(&artifact.scorer, ex, policy))?;
    artifact.scorer.tau = Some(tau);
    artifact.dataset_hashes.insert("validation".into(), split.hash());
    let out = a.out.as_deref().unwrap_or(&a.model);
    artifact.save(out)?;
    println!("policy={policy}");
    println!("tau={tau}");
    Ok(())
}

pub fn eval_report(artifact: &ModelArtifact, data: &Path, tau: Option<f64>) -> CliResult<EvaluationReport> {
    let split = load_split(data, "test")?.relabel(&artifact.scorer.labels)?;
    let tau = tau.or(artifact.scorer.tau);
    Ok(with_examples!(&split.inputs, ex => evaluate(&artifact.scorer, ex, tau))?)
}

pub fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let artifact = load_model(&a.model)?;
    let report = eval_report(&artifact, &a.data, a.tau)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::data(e.to_string()))?;
    if a.json {
        println!("{json}");
    } else {
        print!("{}", report.to_text());
    }
    if let Some(out) = &a.out {
        std::fs::write(out, json + "\n").map_err(|e| CliError::data(format!("cannot write {}: {e}", out.display())))?;
    }
    Ok(())
}

pub fn cmd_split(a: SplitArgs) -> CliResult<()> {
    let ratios = SplitRatios::default();
    let oos: BTreeSet<String> = a.oos_labels.iter().cloned().collect();
    match load_raw(&a.data)? {
        RawCorpus::Text(ex) => {
            let bundle = match a.procedure {
                Procedure::Stackoverflow => stackoverflow_style_split(&ex, ratios, a.seed)?,
                Procedure::OosDomain => oos_domain_split(&ex, &oos, a.min_per_class, ratios, a.seed)?,
            };
            write_text_bundle(&a.out, &bundle)?;
            print_counts(&bundle.provenance);
        }
        RawCorpus::Embeddings(ex) => {
            let bundle = match a.procedure {
                Procedure::Stackoverflow => stackoverflow_style_split(&ex, ratios, a.seed)?,
                Procedure::OosDomain => oos_domain_split(&ex, &oos, a.min_per_class, ratios, a.seed)?,
            };
            write_embedding_bundle(&a.out, &bundle)?;
            print_counts(&bundle.provenance);
        }
    }
    Ok(())
}

fn print_counts(p: &oosguard::data::Provenance) {
    let c = &p.counts;
    println!("in_scope_labels={}", p.in_scope_labels.join(","));
    println!("oos_labels={}", p.oos_labels.join(","));
    println!(
        "train={} validation_is={} validation_oos={} test_is={} test_oos={}",
        c.train, c.validation_is, c.validation_oos, c.test_is, c.test_oos
    );
}

pub fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let mut spec = load_synthetic_spec(a.config.as_deref())?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(c) = a.classes {
        spec.classes = c;
    }
    if let Some(d) = a.dim {
        spec.dim = d;
    }
    if let Some(n) = a.samples_per_class {
        spec.samples_per_class = n;
    }
    if let Some(m) = a.oos_mode {
        spec.oos_mode = match m {
            OosModeArg::Shell => OosMode::Shell,
            OosModeArg::UniformBox => OosMode::UniformBox,
            OosModeArg::HeldOutClusters => OosMode::HeldOutClusters,
        };
    }
    let bundle = synthesize(&spec)?;
    write_embedding_bundle(&a.out, &bundle)?;
    print_counts(&bundle.provenance);
    Ok(())
}

fn threshold(artifact: &ModelArtifact, flag: Option<f64>) -> CliResult<f64> {
    let tau = flag
        .or(artifact.scorer.tau)
        .ok_or_else(|| CliError::usage("model has no threshold; run `oosguard calibrate` or pass --tau"))?;
    if tau.is_nan() || tau < 0.0 {
        return Err(CliError::usage(format!("threshold must be >= 0, got {tau}")));
    }
    Ok(tau)
}

pub fn cmd_score(a: ScoreArgs) -> CliResult<()> {
    let artifact = load_model(&a.model)?;
    let tau = threshold(&artifact, a.tau)?;
    let query = match (&a.text, &a.embedding) {
        (Some(t), _) => Query::Text(t),
        (None, Some(e)) => Query::Embedding(e),
        (None, None) => return Err(CliError::usage("pass --text or --embedding")),
    };
    let response = serve::answer(&artifact.scorer, tau, query, None)?;
    println!("{}", serde_json::to_string(&response).map_err(|e| CliError::data(e.to_string()))?);
    Ok(())
}

pub fn cmd_serve(a: ServeArgs) -> CliResult<()> {
    let artifact = load_model(&a.model)?;
    let tau = threshold(&artifact, a.tau)?;
    if a.stdio {
        let stdin = io::stdin();
        serve::serve_lines(&artifact.scorer, tau, stdin.lock(), BufWriter::new(io::stdout()))
            .map_err(|e| CliError::data(format!("i/o error: {e}")))?;
        return Ok(());
    }
    let listener = serve::bind(&a.addr)?;
    let local = listener.local_addr().map_err(|e| CliError::usage(e.to_string()))?;
    eprintln!("listening on {local}");
    serve::serve_tcp(Arc::new(artifact.scorer), tau, listener)
}

pub fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let rc = run_config(a.config.as_deref(), a.preset.as_deref(), a.seed, None)?;
    let grid = if a.grid.is_empty() { DEFAULT_ALPHA_GRID.to_vec() } else { a.grid };
    let train_split = load_split(&a.data, "train")?;
    let featurizer = featurizer_for(&train_split, rc.featurizer)?;
    let data = training_set(&train_split, &featurizer)?;
    let val = load_split(&a.data, "validation")?.relabel(&train_split.labels)?;
    let validation: ValidationSet<f64> = with_examples!(&val.inputs, ex => ValidationSet::from_examples(&featurizer, ex))?;
    let report = sweep_alpha(&rc.train, &grid, featurizer, &data, &train_split.labels, &validation)?;
    println!("{:>8} {:>10} {:>10} {:>10}", "alpha", "aupr_oos", "auroc", "accuracy");
    for e in &report.entries {
        println!("{:>8} {:>10.6} {:>10.6} {:>10.6}", e.alpha, e.aupr_oos, e.auroc, e.intent_accuracy);
    }
    println!("best_alpha={}", report.best_alpha);
    if let Some(out) = &a.out {
        let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::data(e.to_string()))?;
        std::fs::write(out, json + "\n").map_err(|e| CliError::data(format!("cannot write {}: {e}", out.display())))?;
    }
    Ok(())
}
