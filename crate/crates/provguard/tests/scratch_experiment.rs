//! Temporary exploration harness (deleted before finalizing).

use provguard::adversary::{apply_attack, AttackKind, AttackSpec, TargetPolicy};
use provguard::augment::AugmentationPlan;
use provguard::detector;
use provguard::encoder::train::{train, TrainConfig};
use provguard::encoder::{EmbedLevel, EncoderModel, FeatureVocab};
use provguard::graph::{batch_split, build_graph, cleanup, reduce_cpr, Label, ProvenanceGraph};
use provguard::linalg::Matrix;
use provguard::metrics::compute_metrics;
use provguard::pipeline::embed_many;
use provguard::seed;
use provguard::synth::{generate, Profile, SynthConfig};
use std::collections::BTreeMap;

struct Fixture {
    train: Vec<ProvenanceGraph>,
    test: Vec<ProvenanceGraph>,
    labels: BTreeMap<String, Label>,
}

fn build_fixture(seed_v: u64, benign: usize, malicious: usize, holdout: usize) -> Fixture {
    let ds = generate(&SynthConfig {
        profile: Profile::GraphLevel,
        benign,
        malicious,
        holdout,
        seed: seed_v,
    });
    let prep = |events: &Vec<provguard::graph::EventRecord>| {
        cleanup(&reduce_cpr(&build_graph(events).unwrap(), 1_000_000_000))
    };
    let train: Vec<ProvenanceGraph> = ds.train.iter().map(prep).collect();
    let mut test: Vec<ProvenanceGraph> = ds.test.iter().map(prep).collect();
    for (i, g) in test.iter_mut().enumerate() {
        g.label = Some(ds.test_labels[&i.to_string()]);
    }
    Fixture {
        train,
        test,
        labels: ds.test_labels,
    }
}

struct Eval {
    clean_auc: f64,
    clean_f1: f64,
    attacked_auc: f64,
    theta: f64,
    benign_max: f64,
    mal_min_clean: f64,
    mal_min_attacked: f64,
    mal_mean_clean: f64,
    mal_mean_attacked: f64,
}

fn train_and_eval(fx: &Fixture, gamma: f64, seed_v: u64, lr: f64, epochs: usize, batch: usize, hidden: usize, d: usize, attack_y: f64) -> Eval {
    let plan = AugmentationPlan::all_kinds(gamma, seed_v).unwrap();
    let cfg = TrainConfig {
        learning_rate: lr,
        tau: 0.5,
        epochs,
        batch_size: batch,
        seed: seed_v,
    };
    let init = EncoderModel::new(
        FeatureVocab::standard(),
        hidden,
        d,
        true,
        seed::derive(seed_v, seed::stream::WEIGHT_INIT),
    );
    let out = train(&fx.train, &plan, &cfg, init).unwrap();
    let (_, emb) = embed_many(&out.model, &fx.train, EmbedLevel::Graph).unwrap();
    let mut model = detector::fit(&emb, 8.min(emb.rows), seed_v).unwrap();
    model.theta = detector::calibrate_theta(&model, &emb, 0.995).unwrap();

    let eval = |graphs: &[ProvenanceGraph]| {
        let (ids, emb) = embed_many(&out.model, graphs, EmbedLevel::Graph).unwrap();
        let (scored, _) = detector::score_batch(&model, &emb, &ids);
        let report = compute_metrics(&scored, &fx.labels).unwrap();
        let mal: Vec<f64> = scored
            .iter()
            .filter(|s| fx.labels[&s.id] == Label::Malicious)
            .map(|s| s.normalized)
            .collect();
        let ben: Vec<f64> = scored
            .iter()
            .filter(|s| fx.labels[&s.id] == Label::Benign)
            .map(|s| s.normalized)
            .collect();
        let mal_min = mal.iter().cloned().fold(f64::INFINITY, f64::min);
        let mal_mean = mal.iter().sum::<f64>() / mal.len() as f64;
        let ben_max = ben.iter().cloned().fold(0.0, f64::max);
        (report, mal_min, mal_mean, ben_max)
    };
    let (clean, mal_min_clean, mal_mean_clean, benign_max) = eval(&fx.test);
    let spec = AttackSpec::new(AttackKind::Cgpa, attack_y, seed::derive(seed_v, 0xCC), TargetPolicy::Random).unwrap();
    let attacked_graphs = apply_attack(&fx.test, &spec).unwrap();
    let (attacked, mal_min_attacked, mal_mean_attacked, _) = eval(&attacked_graphs);
    Eval {
        clean_auc: clean.auc.unwrap(),
        clean_f1: clean.f1,
        attacked_auc: attacked.auc.unwrap(),
        theta: model.theta,
        benign_max,
        mal_min_clean,
        mal_min_attacked,
        mal_mean_clean,
        mal_mean_attacked,
    }
}

#[test]
#[ignore]
fn explore() {
    let _ = Matrix::zeros(1, 1);
    let (benign, malicious, holdout) = (60usize, 15usize, 15usize);
    println!("=== fixture sizes: {benign} benign, {malicious} malicious, holdout {holdout}");
    for &(lr, epochs, batch, hidden, d) in &[(0.2f64, 20usize, 16usize, 32usize, 16usize)] {
        println!("--- lr={lr} epochs={epochs} batch={batch} hidden={hidden} d={d}");
        for gamma in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let mut accs = Vec::new();
            for s in [11u64, 22, 33] {
                let fx = build_fixture(s, benign, malicious, holdout);
                let e = train_and_eval(&fx, gamma, s, lr, epochs, batch, hidden, d, 0.2);
                accs.push(e);
            }
            let mean = |f: &dyn Fn(&Eval) -> f64| accs.iter().map(|e| f(e)).sum::<f64>() / accs.len() as f64;
            println!(
                "gamma={gamma:.2}  clean_auc={:.4} clean_f1={:.4} attacked_auc={:.4} rel_drop={:.4} | theta={:.2} ben_max={:.2} mal_min {:.2}->{:.2} mal_mean {:.2}->{:.2}",
                mean(&|e| e.clean_auc),
                mean(&|e| e.clean_f1),
                mean(&|e| e.attacked_auc),
                mean(&|e| (e.clean_auc - e.attacked_auc) / e.clean_auc),
                mean(&|e| e.theta),
                mean(&|e| e.benign_max),
                mean(&|e| e.mal_min_clean),
                mean(&|e| e.mal_min_attacked),
                mean(&|e| e.mal_mean_clean),
                mean(&|e| e.mal_mean_attacked),
            );
        }
    }
}

#[test]
#[ignore]
fn explore_default_config_clean() {
    // Criterion-5 shape: 100 benign + 25 malicious, default hyperparameters.
    let fx = build_fixture(42, 100, 25, 25);
    let t0 = std::time::Instant::now();
    let e = train_and_eval(&fx, 0.5, 42, 0.001, 20, 50, 128, 64, 0.2);
    println!(
        "default config: clean_f1={:.4} clean_auc={:.4} attacked_auc={:.4} elapsed={:?}",
        e.clean_f1,
        e.clean_auc,
        e.attacked_auc,
        t0.elapsed()
    );
}

struct NodeFixture {
    train: Vec<ProvenanceGraph>,
    test: Vec<ProvenanceGraph>,
    labels: BTreeMap<String, Label>,
}

fn build_node_fixture(seed_v: u64, benign: usize, malicious: usize, holdout: usize) -> NodeFixture {
    let ds = generate(&SynthConfig {
        profile: Profile::NodeLevel,
        benign,
        malicious,
        holdout,
        seed: seed_v,
    });
    let prep = |events: &Vec<provguard::graph::EventRecord>| {
        cleanup(&reduce_cpr(&build_graph(events).unwrap(), 1_000_000_000))
    };
    let train: Vec<ProvenanceGraph> = ds.train.iter().map(prep).collect();
    let mut test: Vec<ProvenanceGraph> = ds.test.iter().map(prep).collect();
    for g in &mut test {
        g.apply_node_labels(&ds.test_labels);
    }
    NodeFixture {
        train,
        test,
        labels: ds.test_labels,
    }
}

struct NodeEval {
    clean_auc: f64,
    clean_f1: f64,
    attacked_auc: f64,
    first_loss: f64,
    last_loss: f64,
}

fn node_train_eval(fx: &NodeFixture, gamma: f64, seed_v: u64, lr: f64, tau: f64, epochs: usize, batch: usize, hidden: usize, d: usize, attack_y: f64) -> NodeEval {
    let plan = AugmentationPlan::all_kinds(gamma, seed_v).unwrap();
    let cfg = TrainConfig { learning_rate: lr, tau, epochs, batch_size: batch, seed: seed_v };
    let init = EncoderModel::new(FeatureVocab::standard(), hidden, d, true, seed::derive(seed_v, seed::stream::WEIGHT_INIT));
    let out = train(&fx.train, &plan, &cfg, init).unwrap();
    let (_, emb) = embed_many(&out.model, &fx.train, EmbedLevel::Node).unwrap();
    let mut model = detector::fit(&emb, 16, seed_v).unwrap();
    model.theta = detector::calibrate_theta(&model, &emb, 0.995).unwrap();
    let eval = |graphs: &[ProvenanceGraph]| {
        let (ids, emb_t) = embed_many(&out.model, graphs, EmbedLevel::Node).unwrap();
        let (scored, _) = detector::score_batch(&model, &emb_t, &ids);
        compute_metrics(&scored, &fx.labels).unwrap()
    };
    let clean = eval(&fx.test);
    let spec = AttackSpec::new(AttackKind::Cgpa, attack_y, seed::derive(seed_v, 0xCC), TargetPolicy::MaliciousNodes).unwrap();
    let attacked_graphs = apply_attack(&fx.test, &spec).unwrap();
    let attacked = eval(&attacked_graphs);
    NodeEval {
        clean_auc: clean.auc.unwrap(),
        clean_f1: clean.f1,
        attacked_auc: attacked.auc.unwrap(),
        first_loss: out.loss_history[0],
        last_loss: *out.loss_history.last().unwrap(),
    }
}

#[test]
#[ignore]
fn explore_node_categories() {
    let seed_v = 11u64;
    let (be, batch_events) = (40usize, 120usize);
    let ds = generate(&SynthConfig {
        profile: Profile::NodeLevel,
        benign: be,
        malicious: 10,
        holdout: 10,
        seed: seed_v,
    });
    let train_g = batch_split(&ds.train[0], batch_events, 1_000_000_000).unwrap();
    let mut test_g = batch_split(&ds.test[0], batch_events, 1_000_000_000).unwrap();
    for g in &mut test_g {
        g.apply_node_labels(&ds.test_labels);
    }
    println!("train graphs {} test graphs {}", train_g.len(), test_g.len());
    let plan = AugmentationPlan::all_kinds(0.5, seed_v).unwrap();
    let cfg = TrainConfig { learning_rate: 0.2, tau: 0.5, epochs: 15, batch_size: 8, seed: seed_v };
    let init = EncoderModel::new(FeatureVocab::standard(), 32, 16, true, seed::derive(seed_v, seed::stream::WEIGHT_INIT));
    let out = train(&train_g, &plan, &cfg, init).unwrap();
    let (_, emb) = embed_many(&out.model, &train_g, EmbedLevel::Node).unwrap();
    let mut model = detector::fit(&emb, 16, seed_v).unwrap();
    model.theta = detector::calibrate_theta(&model, &emb, 0.995).unwrap();
    let (ids, emb_t) = embed_many(&out.model, &test_g, EmbedLevel::Node).unwrap();
    let (scored, _) = detector::score_batch(&model, &emb_t, &ids);
    // bucket scores by the category suffix of the entity id
    let mut buckets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &scored {
        let suffix = s.id.split('_').nth(1).unwrap_or(&s.id);
        let cat: String = suffix.chars().take_while(|c| c.is_alphabetic()).collect();
        buckets.entry(cat).or_default().push(s.normalized);
    }
    println!("theta={:.3}", model.theta);
    for (cat, mut vals) in buckets {
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        println!(
            "{cat:12} n={:4}  mean={mean:7.3}  min={:7.3}  max={:7.3}",
            vals.len(),
            vals[0],
            vals[vals.len() - 1]
        );
    }
    let report = compute_metrics(&scored, &ds.test_labels).unwrap();
    println!("clean: {}", report.summary_line());
}

#[test]
#[ignore]
fn explore_training_regimes() {
    let fx = build_node_fixture(11, 40, 15, 10);
    for &(lr, tau, epochs) in &[
        (0.5f64, 0.5f64, 60usize),
        (1.0, 0.2, 60),
        (2.0, 0.2, 60),
        (2.0, 0.1, 60),
        (5.0, 0.1, 60),
        (5.0, 0.2, 60),
    ] {
        for gamma in [0.5] {
            let plan = AugmentationPlan::all_kinds(gamma, 11).unwrap();
            let cfg = TrainConfig { learning_rate: lr, tau, epochs, batch_size: 16, seed: 11 };
            let init = EncoderModel::new(FeatureVocab::standard(), 32, 16, true, seed::derive(11, seed::stream::WEIGHT_INIT));
            match train(&fx.train, &plan, &cfg, init) {
                Ok(out) => {
                    let h = &out.loss_history;
                    println!(
                        "lr={lr} tau={tau} gamma={gamma}: loss {:.4} {:.4} {:.4} {:.4} -> {:.4}",
                        h[0], h[epochs / 4], h[epochs / 2], h[3 * epochs / 4], h[epochs - 1]
                    );
                }
                Err(e) => println!("lr={lr} tau={tau} gamma={gamma}: {e}"),
            }
        }
    }
}

#[test]
#[ignore]
fn explore_node_robustness() {
    for &(lr, tau, epochs, batch, hidden, d) in &[
        (0.5f64, 0.5f64, 40usize, 16usize, 32usize, 16usize),
        (0.5, 0.5, 100, 16, 32, 16),
        (0.5, 0.3, 100, 16, 32, 16),
    ] {
        println!("--- node-level lr={lr} tau={tau} epochs={epochs} batch={batch} hidden={hidden} d={d}");
        for gamma in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let mut evals = Vec::new();
            for s in [11u64, 22, 33, 44, 55] {
                let fx = build_node_fixture(s, 40, 15, 10);
                evals.push(node_train_eval(&fx, gamma, s, lr, tau, epochs, batch, hidden, d, 0.2));
            }
            let mean = |f: &dyn Fn(&NodeEval) -> f64| evals.iter().map(|e| f(e)).sum::<f64>() / evals.len() as f64;
            println!(
                "gamma={gamma:.2}  clean_auc={:.4} clean_f1={:.4} attacked_auc={:.4} rel_drop={:.4} loss {:.4}->{:.4}",
                mean(&|e| e.clean_auc),
                mean(&|e| e.clean_f1),
                mean(&|e| e.attacked_auc),
                mean(&|e| (e.clean_auc - e.attacked_auc) / e.clean_auc),
                mean(&|e| e.first_loss),
                mean(&|e| e.last_loss),
            );
        }
    }
}

#[test]
#[ignore]
fn explore_node_level() {
    let ds = generate(&SynthConfig {
        profile: Profile::NodeLevel,
        benign: 40,
        malicious: 8,
        holdout: 10,
        seed: 5,
    });
    let train_graphs = batch_split(&ds.train[0], 50, 1_000_000_000).unwrap();
    let test_graphs = batch_split(&ds.test[0], 50, 1_000_000_000).unwrap();
    println!("train graphs: {}, test graphs: {}", train_graphs.len(), test_graphs.len());
    let plan = AugmentationPlan::all_kinds(0.5, 5).unwrap();
    let cfg = TrainConfig { learning_rate: 0.2, tau: 0.5, epochs: 15, batch_size: 16, seed: 5 };
    let init = EncoderModel::new(FeatureVocab::standard(), 32, 16, true, seed::derive(5, seed::stream::WEIGHT_INIT));
    let out = train(&train_graphs, &plan, &cfg, init).unwrap();
    let (_, emb) = embed_many(&out.model, &train_graphs, EmbedLevel::Node).unwrap();
    let mut model = detector::fit(&emb, 8, 5).unwrap();
    model.theta = detector::calibrate_theta(&model, &emb, 0.995).unwrap();
    let (ids, emb_t) = embed_many(&out.model, &test_graphs, EmbedLevel::Node).unwrap();
    let (scored, _) = detector::score_batch(&model, &emb_t, &ids);
    let report = compute_metrics(&scored, &ds.test_labels).unwrap();
    println!("node-level: {}", report.summary_line());
}
