//! End-to-end acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use oosguard::data::{
    read_emb, stackoverflow_style_split, synthesize, Example, Label, RawExample, SplitRatios, SyntheticSpec,
};
use oosguard::linalg::{mahalanobis, ClassStatistics, Matrix, Ridge, StatisticsConfig};
use oosguard::metrics::{self, oracle, ScoredLabel};
use oosguard::nn::{grad_check, max_relative_error, Activation, DenseNetwork, LossConfig, LossKind, FD_STEP};
use oosguard::training::{fit_statistics, train, JointModel, JointObjective};
use oosguard::{decide, Featurizer, ModelArtifact, Query, TrainConfig, TrainingSet};
use oosguard_cli::serve::encode_embedding;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_oosguard")
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "oosguard {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let ae = DenseNetwork::<f64>::new(&[4, 8, 4], Activation::Relu, Activation::Linear, 11).map_err(err)?;
    let ae_err = grad_check(&ae, &LossConfig { kind: LossKind::Reconstruction, batch: 8 }, 12).map_err(err)?;

    let mut config = TrainConfig::preset("synthetic").map_err(err)?;
    config.alpha = 0.1;
    config.encoder.hidden_dims = vec![24];
    config.encoder.embedding_dim = Some(16);
    config.autoencoder_hidden = vec![8];
    let model = JointModel::<f64>::init(&config, 16, 4).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let features = Matrix::from_vec(8, 16, (0..128).map(|_| rng.random_range(-1.0..1.0)).collect()).map_err(err)?;
    let labels = (0..8).map(|i| i % 4).collect();
    let mut objective = JointObjective { model, features, labels };
    let joint_err = max_relative_error(&mut objective, FD_STEP).map_err(err)?;
    let elapsed = start.elapsed();

    ensure(ae_err < 1e-4, format!("autoencoder relative error {ae_err:e}"))?;
    ensure(joint_err < 1e-4, format!("joint relative error {joint_err:e}"))?;
    ensure(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!("ae {ae_err:.2e}, joint {joint_err:.2e}, {elapsed:.2?}"))
}

fn random_instance(rng: &mut ChaCha8Rng) -> Vec<ScoredLabel> {
    let n = rng.random_range(2..=1000);
    let tie_heavy = rng.random_bool(0.5);
    let levels = rng.random_range(1..=8);
    let mut items: Vec<ScoredLabel> = (0..n)
        .map(|_| {
            let score = if tie_heavy {
                rng.random_range(0..levels) as f64 * 0.5
            } else {
                rng.random_range(-5.0..5.0)
            };
            ScoredLabel::new(score, rng.random_bool(0.3))
        })
        .collect();
    items[0].is_oos = true;
    items[1].is_oos = false;
    items
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..200 {
        let items = random_instance(&mut rng);
        let ap = metrics::aupr_oos(&items).map_err(err)?;
        let expected_ap = oracle::average_precision(&oracle::brute_force_pr_curve(&items).map_err(err)?);
        ensure(ap == expected_ap, format!("instance {k}: AP {ap} vs oracle {expected_ap}"))?;
        let roc = metrics::auroc(&items).map_err(err)?;
        let expected_roc = oracle::pairwise_auroc(&items);
        ensure(roc == expected_roc, format!("instance {k}: AUROC {roc} vs oracle {expected_roc}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!("200 instances exact, {elapsed:.2?}"))
}

fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_euclid = 0.0_f64;
    let mut worst_invariance = 0.0_f64;
    let mut worst_centroid = 0.0_f64;
    for _ in 0..50 {
        let d = rng.random_range(2..=5);
        let identity = Matrix::<f64>::identity(d);
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let euclid = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let m = mahalanobis(&a, &b, &identity).map_err(err)?;
        worst_euclid = worst_euclid.max((m - euclid).abs());

        let classes = 3;
        let n = 12 * d;
        let rows: Vec<Vec<f64>> = uniform_rows(&mut rng, n, d)
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|v| v * 2.0 - 1.0 + (i % classes) as f64).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        // A well-conditioned random map: identity plus a bounded perturbation.
        let map: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 2.0 } else { 0.0 } + rng.random_range(-0.4..0.4)).collect())
            .collect();
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..d).map(|i| (0..d).map(|j| map[i][j] * x[j]).sum::<f64>() + shift[i]).collect()
        };
        let config = StatisticsConfig { ridge: Ridge::Exact, ..StatisticsConfig::default() };
        let x = Matrix::from_rows(&rows).map_err(err)?;
        let y = Matrix::from_rows(&rows.iter().map(|r| apply(r)).collect::<Vec<_>>()).map_err(err)?;
        let sx = ClassStatistics::fit(&x, &labels, classes, &config).map_err(err)?;
        let sy = ClassStatistics::fit(&y, &labels, classes, &config).map_err(err)?;
        for _ in 0..10 {
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..4.0)).collect();
            let dx = sx.distances(&q).map_err(err)?;
            let dy = sy.distances(&apply(&q)).map_err(err)?;
            for (u, v) in dx.iter().zip(&dy) {
                worst_invariance = worst_invariance.max((u - v).abs() / u.abs().max(1e-12));
            }
        }
        for mu in sx.means.row_iter() {
            let own = mahalanobis(mu, mu, &sx.precision).map_err(err)?;
            worst_centroid = worst_centroid.max(own.abs());
        }
    }
    ensure(worst_euclid <= 1e-12, format!("identity precision differs from Euclidean by {worst_euclid:e}"))?;
    ensure(worst_invariance <= 1e-6, format!("affine invariance relative error {worst_invariance:e}"))?;
    ensure(worst_centroid <= 1e-12, format!("distance at centroid {worst_centroid:e}"))?;
    Ok(format!(
        "euclid {worst_euclid:.1e}, invariance {worst_invariance:.1e}, centroid {worst_centroid:.1e}"
    ))
}

fn training_set(bundle: &oosguard::data::DatasetBundle<Vec<f32>>) -> Result<(Featurizer, TrainingSet<f64>), String> {
    let dim = bundle.train[0].input.len();
    let featurizer = Featurizer::passthrough(dim);
    let set = TrainingSet::from_examples(&featurizer, &bundle.train, bundle.labels.len()).map_err(err)?;
    Ok((featurizer, set))
}

fn criterion_4() -> Check {
    let bundle = synthesize(&SyntheticSpec { seed: 4, ..SyntheticSpec::default() }).map_err(err)?;
    let (_, set) = training_set(&bundle)?;
    let mut config = TrainConfig::preset("synthetic").map_err(err)?;
    config.epochs = 5;
    config.seed = 4;
    config.alpha = 0.0;
    let zero_alpha = train(&config, &set).map_err(err)?;
    config.alpha = 0.3;
    config.ablate_autoencoder = true;
    let ablated = train(&config, &set).map_err(err)?;
    let bits = |n: &DenseNetwork<f64>| n.parameters().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(bits(&zero_alpha.encoder) == bits(&ablated.encoder), "encoder weights differ")?;
    ensure(bits(&zero_alpha.head) == bits(&ablated.head), "softmax head weights differ")?;
    let ce = |m: &JointModel<f64>| m.log.iter().map(|e| e.ce.to_bits()).collect::<Vec<_>>();
    ensure(ce(&zero_alpha) == ce(&ablated), "cross-entropy logs differ")?;
    Ok(format!("{} parameters identical after 5 epochs", zero_alpha.encoder.parameter_count()))
}

struct RunSummary {
    dispersion: f64,
    aupr: f64,
    accuracy: f64,
}

fn run_seed(seed: u64, alpha: f64) -> Result<RunSummary, String> {
    let bundle = synthesize(&SyntheticSpec { seed, ..SyntheticSpec::default() }).map_err(err)?;
    let (featurizer, set) = training_set(&bundle)?;
    let mut config = TrainConfig::preset("synthetic").map_err(err)?;
    config.seed = seed;
    config.alpha = alpha;
    let model = train(&config, &set).map_err(err)?;
    let dispersion = metrics::dispersion(&model.embed(&set.features).map_err(err)?).map_err(err)?;
    let scorer = fit_statistics(&model, featurizer, &set, bundle.labels.clone()).map_err(err)?;
    let report = metrics::evaluate(&scorer, &bundle.test, None).map_err(err)?;
    Ok(RunSummary {
        dispersion,
        aupr: report.aupr_oos,
        accuracy: report.intent_accuracy,
    })
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let seeds = [1u64, 2, 3, 4, 5];
    let mut lower = 0;
    let (mut aupr_ae, mut aupr_ce, mut acc_ae, mut acc_ce) = (0.0, 0.0, 0.0, 0.0);
    for &seed in &seeds {
        let ce = run_seed(seed, 0.0)?;
        let ae = run_seed(seed, 0.1)?;
        if ae.dispersion < ce.dispersion {
            lower += 1;
        }
        aupr_ae += ae.aupr / seeds.len() as f64;
        aupr_ce += ce.aupr / seeds.len() as f64;
        acc_ae += ae.accuracy / seeds.len() as f64;
        acc_ce += ce.accuracy / seeds.len() as f64;
    }
    let elapsed = start.elapsed();
    let summary = format!(
        "dispersion lower in {lower}/5, AUPR {aupr_ae:.4} vs {aupr_ce:.4}, accuracy {acc_ae:.4} vs {acc_ce:.4}, {elapsed:.2?}"
    );
    ensure(lower >= 4, format!("dispersion lower in only {lower}/5 seeds; {summary}"))?;
    ensure(aupr_ae >= aupr_ce, format!("mean AUPR dropped; {summary}"))?;
    ensure(acc_ce - acc_ae <= 0.005, format!("accuracy dropped by more than 0.5pp; {summary}"))?;
    ensure(elapsed < Duration::from_secs(600), format!("too slow; {summary}"))?;
    Ok(summary)
}

fn criterion_6() -> Check {
    let corpus: Vec<RawExample<String>> = (0..20)
        .flat_map(|l| {
            (0..(10 + 4 * l)).map(move |j| RawExample {
                input: format!("question {j} about topic {l}"),
                label: format!("tag{l:02}"),
            })
        })
        .collect();
    let total = corpus.len() as f64;
    for seed in 0..10u64 {
        let a = stackoverflow_style_split(&corpus, SplitRatios::default(), seed).map_err(err)?;
        let b = stackoverflow_style_split(&corpus, SplitRatios::default(), seed).map_err(err)?;
        ensure(a == b, format!("seed {seed}: split is not deterministic"))?;
        a.check_invariants().map_err(err)?;
        let covered = corpus
            .iter()
            .filter(|e| a.labels.index_of(&e.label).is_some())
            .count() as f64;
        ensure(covered / total >= 0.75, format!("seed {seed}: coverage {}", covered / total))?;
        ensure(a.train.iter().all(|e| !e.label.is_oos()), format!("seed {seed}: OOS in train"))?;
        let oos_names: BTreeSet<&str> = a.provenance.oos_labels.iter().map(String::as_str).collect();
        ensure(!oos_names.is_empty(), format!("seed {seed}: no OOS labels"))?;
        let oos_inputs: BTreeSet<&str> = corpus
            .iter()
            .filter(|e| oos_names.contains(e.label.as_str()))
            .map(|e| e.input.as_str())
            .collect();
        ensure(
            a.train.iter().all(|e| !oos_inputs.contains(e.input.as_str())),
            format!("seed {seed}: OOS-label text in train"),
        )?;
        let c = a.counts();
        ensure(
            c.validation_oos.abs_diff(c.test_oos) <= 1,
            format!("seed {seed}: OOS split {} / {}", c.validation_oos, c.test_oos),
        )?;
        ensure(
            c.validation_oos + c.test_oos == oos_inputs.len(),
            format!("seed {seed}: OOS examples lost"),
        )?;
    }
    Ok("10 seeds: coverage, no leakage, balanced OOS, deterministic".into())
}

struct Pipeline {
    _dir: tempfile::TempDir,
    data: PathBuf,
    model: PathBuf,
}

fn build_pipeline() -> Result<Pipeline, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let data = dir.path().join("data");
    let model = dir.path().join("model.oosm");
    let s = |p: &Path| p.to_string_lossy().into_owned();
    run_cli(&["synth", "--out", &s(&data), "--seed", "7"])?;
    run_cli(&["train", "--preset", "synthetic", "--data", &s(&data), "--out", &s(&model), "--seed", "7"])?;
    run_cli(&["calibrate", "--model", &s(&model), "--data", &s(&data)])?;
    Ok(Pipeline { _dir: dir, data, model })
}

fn examples(path: &Path, labels: &oosguard::data::LabelMap) -> Result<Vec<Example<Vec<f32>>>, String> {
    let file = read_emb(path).map_err(err)?;
    file.records
        .into_iter()
        .map(|r| {
            let label = match r.label {
                Label::Oos => Label::Oos,
                Label::InScope(i) => labels.resolve(file.labels.name(i).ok_or("label out of range")?).map_err(err)?,
            };
            Ok(Example { input: r.values, label })
        })
        .collect()
}

fn criterion_7(p: &Pipeline) -> Check {
    let artifact = ModelArtifact::load(&p.model).map_err(err)?;
    let scorer = &artifact.scorer;
    let tau = scorer.tau.ok_or("calibrate did not store a threshold")?;

    let validation = examples(&p.data.join("validation.emb"), &scorer.labels)?;
    let in_scope: Vec<_> = validation.iter().filter(|e| !e.label.is_oos()).collect();
    let mut accepted = 0;
    for e in &in_scope {
        if scorer.score(Query::Embedding(&e.input)).map_err(err)?.d_min <= tau {
            accepted += 1;
        }
    }
    let recall = accepted as f64 / in_scope.len() as f64;
    ensure((0.93..=0.97).contains(&recall), format!("validation in-scope recall {recall}"))?;

    let out = p.data.join("eval.json");
    let s = |p: &Path| p.to_string_lossy().into_owned();
    run_cli(&["eval", "--model", &s(&p.model), "--data", &s(&p.data), "--json", "--out", &s(&out)])?;
    let report: Value = serde_json::from_slice(&std::fs::read(&out).map_err(err)?).map_err(err)?;

    let test = examples(&p.data.join("test.emb"), &scorer.labels)?;
    let mut items = Vec::new();
    let mut in_scope_embeddings = Vec::new();
    let mut correct = 0usize;
    for e in &test {
        let r = scorer.score(Query::Embedding(&e.input)).map_err(err)?;
        let mut item = ScoredLabel::new(r.d_min, e.label.is_oos());
        item.true_intent = e.label.intent();
        item.predicted_intent = Some(r.c_min);
        items.push(item);
        if let Label::InScope(i) = e.label {
            correct += usize::from(r.c_min == i);
            let embedded = scorer.embed_inputs(std::slice::from_ref(&e.input)).map_err(err)?;
            in_scope_embeddings.push(embedded.row(0).to_vec());
        }
    }
    let n_is = in_scope_embeddings.len();
    let golden_aupr = oracle::average_precision(&oracle::brute_force_pr_curve(&items).map_err(err)?);
    let golden_auroc = oracle::pairwise_auroc(&items);
    let golden_accuracy = correct as f64 / n_is as f64;
    let d = in_scope_embeddings[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| in_scope_embeddings.iter().map(|r| r[j]).sum::<f64>() / n_is as f64)
        .collect();
    let golden_dispersion: f64 = (0..d)
        .map(|j| in_scope_embeddings.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n_is as f64)
        .sum();

    let field = |k: &str| report[k].as_f64().ok_or(format!("eval JSON missing {k}"));
    ensure(field("aupr_oos")? == golden_aupr, format!("aupr {} vs {golden_aupr}", field("aupr_oos")?))?;
    ensure(field("auroc")? == golden_auroc, format!("auroc {} vs {golden_auroc}", field("auroc")?))?;
    ensure(field("intent_accuracy")? == golden_accuracy, "intent accuracy differs")?;
    let disp = field("dispersion")?;
    ensure(
        (disp - golden_dispersion).abs() <= 1e-9 * golden_dispersion.abs().max(1.0),
        format!("dispersion {disp} vs {golden_dispersion}"),
    )?;
    ensure(field("tau")? == tau, "tau differs")?;
    ensure(report["n_is"].as_u64() == Some(n_is as u64), "n_is differs")?;
    ensure(report["n_oos"].as_u64() == Some((test.len() - n_is) as u64), "n_oos differs")?;
    Ok(format!("recall {recall:.4}, aupr {golden_aupr:.4}, auroc {golden_auroc:.4}"))
}

fn requests(p: &Pipeline) -> Result<Vec<(String, Vec<f32>)>, String> {
    let artifact = ModelArtifact::load(&p.model).map_err(err)?;
    let test = read_emb(&p.data.join("test.emb")).map_err(err)?;
    let dim = test.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let means = &artifact.scorer.statistics.means;
    (0..1000)
        .map(|i| {
            let v: Vec<f32> = match i % 4 {
                0 | 1 => test.records[rng.random_range(0..test.records.len())].values.clone(),
                2 => means
                    .row(rng.random_range(0..means.rows()))
                    .iter()
                    .map(|&m| (m + rng.random_range(-0.5..0.5)) as f32)
                    .collect(),
                _ => (0..dim).map(|_| rng.random_range(-15.0..15.0)).collect(),
            };
            let line = serde_json::json!({ "id": i, "embedding": encode_embedding(&v).map_err(err)? }).to_string();
            Ok((line, v))
        })
        .collect()
}

fn check_responses(p: &Pipeline, reqs: &[(String, Vec<f32>)], lines: &[String]) -> Result<(), String> {
    let artifact = ModelArtifact::load(&p.model).map_err(err)?;
    let scorer = &artifact.scorer;
    let tau = scorer.tau.ok_or("no threshold")?;
    ensure(lines.len() == reqs.len(), format!("{} responses for {} requests", lines.len(), reqs.len()))?;
    for (i, ((_, v), line)) in reqs.iter().zip(lines).enumerate() {
        let got: Value = serde_json::from_str(line).map_err(err)?;
        let r = scorer.score(Query::Embedding(v)).map_err(err)?;
        let d = decide(&r, tau);
        let intent = d.intent.map_or("oos", |c| scorer.labels.name(c).unwrap_or("?"));
        let d_min = got["d_min"].as_f64().ok_or(format!("request {i}: {line}"))?;
        ensure(got["id"].as_u64() == Some(i as u64), format!("request {i}: id mismatch"))?;
        ensure(d_min.to_bits() == r.d_min.to_bits(), format!("request {i}: d_min {d_min} vs {}", r.d_min))?;
        ensure(got["verdict"] == d.verdict.as_str(), format!("request {i}: verdict mismatch"))?;
        ensure(got["intent"] == intent, format!("request {i}: intent mismatch"))?;
        ensure(got["tau"].as_f64().map(f64::to_bits) == Some(tau.to_bits()), format!("request {i}: tau mismatch"))?;
    }
    Ok(())
}

fn criterion_8(p: &Pipeline) -> Check {
    let reqs = requests(p)?;
    let model = p.model.to_string_lossy().into_owned();

    let mut child = Command::new(bin())
        .args(["serve", "--model", &model, "--stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(err)?;
    {
        let mut stdin = child.stdin.take().ok_or("no stdin")?;
        let payload: String = reqs.iter().map(|(l, _)| format!("{l}\n")).collect();
        std::thread::spawn(move || stdin.write_all(payload.as_bytes()));
    }
    let out = child.wait_with_output().map_err(err)?;
    let lines: Vec<String> = String::from_utf8_lossy(&out.stdout).lines().map(String::from).collect();
    check_responses(p, &reqs, &lines)?;

    let mut server = Command::new(bin())
        .args(["serve", "--model", &model, "--addr", "127.0.0.1:0"])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(err)?;
    let mut banner = String::new();
    BufReader::new(server.stderr.take().ok_or("no stderr")?)
        .read_line(&mut banner)
        .map_err(err)?;
    let addr = banner.trim().strip_prefix("listening on ").ok_or(format!("banner {banner:?}"))?.to_string();
    let chunks: Vec<Vec<String>> = reqs.chunks(250).map(|c| c.iter().map(|(l, _)| l.clone()).collect()).collect();
    let handles: Vec<_> = chunks
        .into_iter()
        .map(|chunk| {
            let addr = addr.clone();
            std::thread::spawn(move || -> Result<Vec<String>, String> {
                let stream = TcpStream::connect(&addr).map_err(err)?;
                let mut reader = BufReader::new(stream.try_clone().map_err(err)?);
                let mut writer = stream;
                let mut out = Vec::new();
                for line in chunk {
                    writeln!(writer, "{line}").map_err(err)?;
                    let mut resp = String::new();
                    reader.read_line(&mut resp).map_err(err)?;
                    out.push(resp.trim_end().to_string());
                }
                Ok(out)
            })
        })
        .collect();
    let mut tcp_lines = Vec::new();
    for h in handles {
        tcp_lines.extend(h.join().map_err(|_| "client thread panicked")??);
    }
    let _ = server.kill();
    let _ = server.wait();
    check_responses(p, &reqs, &tcp_lines)?;
    Ok("1000 requests over stdio and 4 concurrent TCP connections match bitwise".into())
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, Check)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
    ];
    match build_pipeline() {
        Ok(p) => {
            results.push((7, criterion_7(&p)));
            results.push((8, criterion_8(&p)));
        }
        Err(e) => {
            results.push((7, Err(format!("pipeline: {e}"))));
            results.push((8, Err(format!("pipeline: {e}"))));
        }
    }
    let mut failed = 0;
    for (n, r) in &results {
        match r {
            Ok(msg) => println!("[PASS] criterion {n}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] criterion {n}: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed in {:.2?}", results.len() - failed, start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
