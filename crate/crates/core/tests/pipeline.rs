use std::path::Path;

use bargain::harness::{verify_report, ExperimentConfig, Pipeline};
use bargain::managers::{ManagerKind, NetConfig};

fn tiny(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.seed = 3;
    c.output_dir = dir.join("run");
    c.cache_dir = Some(dir.join("cache"));
    c.corpus.dialogs = 40;
    c.sl.epochs = 1;
    c.rl.episodes = 32;
    c.rl.eval_every = 1;
    c.rl.eval_episodes = 6;
    c.tom_corpus.dialogs = 50;
    c.identifier.train.epochs = 1;
    c.identifier.holdout_dialogs = 20;
    c.transition.train.epochs = 1;
    c.transition.train.net = NetConfig {
        hidden: 8,
        layers: 1,
        head_hidden: 8,
    };
    c.finetune.config.iterations = 1;
    c.finetune.config.episodes_per_iteration = 2;
    c.finetune.paired_episodes = 6;
    c.finetune.variance_states = 1;
    c.evaluation.dialogs = 5;
    c.evaluation.mixed_dialogs = 9;
    c.evaluation.debug_dialogs = 1;
    c
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn same_config_gives_byte_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = Pipeline::new(tiny(a.path())).unwrap();
    let pb = Pipeline::new(tiny(b.path())).unwrap();
    let sa = pa.run().unwrap();
    let sb = pb.run().unwrap();
    assert_eq!(sa, sb);
    for file in ["reports/evaluation.json", "reports/evaluation.csv", "reports/summary.json"] {
        assert_eq!(read(a.path().join("run").join(file)), read(b.path().join("run").join(file)), "{file}");
    }
    assert_eq!(sa.evaluation.rows.len(), 12);
    let mixed = sa.evaluation.row(ManagerKind::Rl, "mixed").unwrap();
    assert_eq!(mixed.dialogs, 9);
    assert_eq!(mixed.populations, vec![0, 1, 2, 3, 4, 5, 6]);
}

#[test]
fn rerun_reuses_every_stage_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(dir.path())).unwrap();
    p.run().unwrap();
    let before = read(dir.path().join("run/reports/summary.json"));
    let csv = dir.path().join("run/reports/evaluation.csv");
    let stamp = std::fs::metadata(&csv).unwrap().modified().unwrap();
    for out in [p.corpus().unwrap(), p.rl().unwrap(), p.identifier().unwrap(), p.finetune().unwrap()] {
        assert!(out.reused, "{} rebuilt", out.stage);
        p.cache().verify(&out).unwrap();
    }
    p.run().unwrap();
    assert_eq!(read(dir.path().join("run/reports/summary.json")), before);
    assert_eq!(std::fs::metadata(&csv).unwrap().modified().unwrap(), stamp);

    // A changed evaluation setting re-evaluates without retraining.
    let mut config = tiny(dir.path());
    config.evaluation.dialogs = 6;
    let p2 = Pipeline::new(config).unwrap();
    assert!(p2.rl().unwrap().reused);
    let report = p2.evaluate().unwrap();
    assert_eq!(report.row(ManagerKind::SlRule, "cooperative").unwrap().dialogs, 6);
}

#[test]
fn verifier_recomputes_and_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(dir.path())).unwrap();
    let report = p.evaluate().unwrap();
    let run = dir.path().join("run");
    assert_eq!(verify_report(&run, p.bank()).unwrap(), report);

    let row = report.row(ManagerKind::Rl, "mixed").unwrap();
    let path = run.join(&row.transcripts);
    let text = read(&path);
    let mut lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let flip = lines[0]["metrics"]["agreement"].as_u64().unwrap() ^ 1;
    lines[0]["metrics"]["agreement"] = flip.into();
    // Metrics are recomputed from the replayed turns, so editing the stored
    // metrics alone must not fool the verifier; editing the report must.
    let edited: String = lines.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&path, edited).unwrap();
    verify_report(&run, p.bank()).unwrap();

    let json_path = run.join("reports/evaluation.json");
    let json = read(&json_path);
    let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
    value["rows"][0]["deals"] = (value["rows"][0]["deals"].as_u64().unwrap() + 1).into();
    std::fs::write(&json_path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    assert!(verify_report(&run, p.bank()).is_err());
}

#[test]
fn transcripts_with_a_changed_turn_fail_replay_check() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(dir.path())).unwrap();
    let report = p.evaluate().unwrap();
    let run = dir.path().join("run");
    let row = &report.rows[0];
    let path = run.join(&row.transcripts);
    let mut lines: Vec<serde_json::Value> = read(&path).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let turns = lines[0]["turns"].as_array_mut().unwrap();
    turns.pop();
    let edited: String = lines.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&path, edited).unwrap();
    assert!(verify_report(&run, p.bank()).is_err());
}

#[test]
fn embeddings_cover_the_holdout_dialogs() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny(dir.path());
    let width = config.identifier.train.net.head_hidden;
    let p = Pipeline::new(config).unwrap();
    let episodes = p.holdout_episodes().unwrap();
    let out = dir.path().join("emb.jsonl");
    assert_eq!(p.dump_embeddings(&episodes, &out).unwrap(), episodes.len());
    let text = read(&out);
    assert_eq!(text.lines().count(), episodes.len());
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["embedding"].as_array().unwrap().len(), width);
    assert!(first["population"].as_u64().unwrap() < 7);
}

#[test]
fn failing_stage_leaves_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(dir.path())).unwrap();
    let missing = dir.path().join("nope.jsonl");
    let err = p.recording("dump-embeddings", |p| p.load_episodes(&missing));
    assert!(err.is_err());
    let record: serde_json::Value = serde_json::from_str(&read(p.error_path())).unwrap();
    assert_eq!(record["stage"], "dump-embeddings");
    assert_eq!(record["kind"], "io");
    p.recording("corpus", |p| p.corpus()).unwrap();
    assert!(!p.error_path().exists());
}

#[test]
fn config_file_overlays_defaults() {
    let text = read(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml"));
    let config = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(config.corpus.dialogs, 60);
    assert_eq!(config.rl.net, ExperimentConfig::default().rl.net);
    assert!(ExperimentConfig::from_toml("mixture = [1.0]").is_err());
}

#[test]
fn swapping_roles_mirrors_utilities() {
    use bargain::environment::Role;
    use bargain::generator::TemplateBank;
    use bargain::harness::{evaluate, opponent_schedule};
    use bargain::populations::{default_roster, PopulationAgent};
    use bargain::rollout::MatchConfig;

    let roster = default_roster();
    let agent = PopulationAgent::new(roster.get(2).unwrap().clone());
    let schedule = opponent_schedule(&[4], &[600]);
    let mean_sd = |role: Role| {
        let config = MatchConfig {
            agent_role: role,
            ..MatchConfig::default()
        };
        let eps = evaluate(&agent, &roster, &schedule, &config, 21, false, TemplateBank::builtin()).unwrap();
        let u: Vec<f64> = eps.iter().map(|e| e.metrics.utility()).collect();
        let m = u.iter().sum::<f64>() / u.len() as f64;
        let v = u.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (u.len() - 1) as f64;
        (m, (v / u.len() as f64).sqrt())
    };
    let (mb, sb) = mean_sd(Role::Buyer);
    let (ms, ss) = mean_sd(Role::Seller);
    let se = (sb * sb + ss * ss).sqrt();
    assert!((mb - ms).abs() < 4.0 * se + 1e-3, "buyer {mb} seller {ms} se {se}");
}
