use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::cache::{StageCache, StageOutput};
use super::config::ExperimentConfig;
use super::evaluate::{allocate, evaluate, opponent_schedule};
use super::report::{aggregate, read_transcripts, write_transcripts, EvaluationReport, MetricSummary};
use super::{read_file, write_file, write_json, ErrorRecord, HarnessError};
use crate::derive_seed;
use crate::generator::TemplateBank;
use crate::managers::{
    generate_corpus, train_rl, train_sl, CorpusConfig, ManagerKind, PolicyNet, RlAgent, RlConfig, SlAgent,
    TrainConfig, ValueNet,
};
use crate::neural::{load_checkpoint, save_checkpoint, Module};
use crate::populations::PopulationAgent;
use crate::rollout::{play, Episode, Negotiator};
use crate::tom::{
    finetune_tom, generate_tom_corpus, identifier_accuracy, prefix_state, target_variances, train_identifier,
    train_transition, FinetuneConfig, FinetuneReport, IdentifierNet, IdentifierReport, TomAgent, TomCorpusConfig,
    TomMode, TomModels, TransitionNet, TransitionReport,
};
use crate::SimRng;

// Stream indices for `derive_seed(config.seed, _)`.
const CORPUS: u64 = 1;
const SL: u64 = 2;
const RL: u64 = 3;
const TOM_CORPUS: u64 = 4;
const IDENTIFIER: u64 = 5;
const HOLDOUT: u64 = 6;
const TRANSITION: u64 = 7;
const FINETUNE: u64 = 8;
const EVALUATION: u64 = 9;
const PAIRED: u64 = 10;
const VARIANCE: u64 = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifierSummary {
    pub training: IdentifierReport,
    /// Opponent utterances seen when accuracy is read off.
    pub turns: usize,
    pub holdout_dialogs: usize,
    /// Held-out dialogs long enough to be scored.
    pub scored_dialogs: usize,
    pub top1: f64,
    pub top3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSummary {
    pub mode: TomMode,
    pub data_fraction: f64,
    pub report: TransitionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSummary {
    pub mode: TomMode,
    pub training: FinetuneReport,
    pub reward_before: MetricSummary,
    pub reward_after: MetricSummary,
    /// Per-dialog after-minus-before reward on shared seeds.
    pub paired_difference: MetricSummary,
    /// `(lookahead variance, rollout variance)` per probed state.
    pub target_variances: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub seed: u64,
    /// `(stage, key)` of every stage the run depended on.
    pub stages: Vec<(String, String)>,
    pub identifier: IdentifierSummary,
    pub transitions: Vec<TransitionSummary>,
    pub finetune: Option<FinetuneSummary>,
    pub evaluation: EvaluationReport,
}

#[derive(Serialize)]
struct Seeded<'a, T: Serialize> {
    seed: u64,
    #[serde(flatten)]
    settings: &'a T,
}

/// Lazily built, cached stages of one experiment. Each stage method builds
/// its upstream stages first; anything already in the store is reused.
pub struct Pipeline {
    pub config: ExperimentConfig,
    cache: StageCache,
    bank: &'static TemplateBank,
}

fn load<M: Module>(mut module: M, path: &Path) -> Result<M, HarnessError> {
    load_checkpoint(&mut module, path)?;
    Ok(module)
}

fn shape_rng() -> SimRng {
    SimRng::seed_from_u64(0)
}

fn load_episodes(path: &Path, bank: &TemplateBank) -> Result<Vec<Episode>, HarnessError> {
    read_transcripts(path)?
        .iter()
        .map(|t| t.to_episode(bank).map_err(HarnessError::from))
        .collect()
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    Ok(serde_json::from_str(&read_file(path)?)?)
}

fn slug(kind: ManagerKind) -> &'static str {
    match kind {
        ManagerKind::SlRule => "sl-rule",
        ManagerKind::Rl => "rl",
        ManagerKind::TomImplicit => "tom-implicit",
        ManagerKind::TomExplicit => "tom-explicit",
    }
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let cache = StageCache::new(config.cache_root());
        Ok(Pipeline {
            config,
            cache,
            bank: TemplateBank::builtin(),
        })
    }

    pub fn cache(&self) -> &StageCache {
        &self.cache
    }

    pub fn bank(&self) -> &'static TemplateBank {
        self.bank
    }

    fn seed(&self, stream: u64) -> u64 {
        derive_seed(self.config.seed, stream)
    }

    pub fn corpus(&self) -> Result<StageOutput, HarnessError> {
        let c = &self.config;
        let corpus = CorpusConfig {
            seed: self.seed(CORPUS),
            ..c.corpus.clone()
        };
        let settings = (&c.roster, &c.match_config, &corpus);
        self.cache.run("corpus", &settings, &[], |dir| {
            let episodes = generate_corpus(&c.roster, &corpus, &c.match_config, self.bank)?;
            write_transcripts(&dir.join("corpus.jsonl"), &episodes)
        })
    }

    pub fn sl(&self) -> Result<StageOutput, HarnessError> {
        let corpus = self.corpus()?;
        let train = TrainConfig {
            seed: self.seed(SL),
            ..self.config.sl.clone()
        };
        self.cache.run("sl", &train, &[&corpus], |dir| {
            let episodes = load_episodes(&corpus.path("corpus.jsonl"), self.bank)?;
            let (policy, report) = train_sl(&episodes, &train)?;
            save_checkpoint(&policy, &dir.join("policy.ckpt"))?;
            write_json(&dir.join("report.json"), &report)
        })
    }

    pub fn load_sl(&self) -> Result<PolicyNet, HarnessError> {
        let out = self.sl()?;
        load(PolicyNet::new(&self.config.sl.net, &mut shape_rng()), &out.path("policy.ckpt"))
    }

    pub fn rl(&self) -> Result<StageOutput, HarnessError> {
        let sl = self.sl()?;
        let c = &self.config;
        let rl = RlConfig {
            seed: self.seed(RL),
            ..c.rl.clone()
        };
        let opponents = c.training_opponents();
        let settings = (&c.roster, &opponents, &c.match_config, &rl);
        self.cache.run("rl", &settings, &[&sl], |dir| {
            let initial = self.load_sl()?;
            let (policy, value, report) = train_rl(&initial, &c.roster, &opponents, &c.match_config, &rl, self.bank)?;
            save_checkpoint(&policy, &dir.join("policy.ckpt"))?;
            save_checkpoint(&value, &dir.join("value.ckpt"))?;
            write_json(&dir.join("report.json"), &report)
        })
    }

    pub fn load_rl(&self) -> Result<(PolicyNet, ValueNet), HarnessError> {
        let out = self.rl()?;
        let net = &self.config.rl.net;
        Ok((
            load(PolicyNet::new(net, &mut shape_rng()), &out.path("policy.ckpt"))?,
            load(ValueNet::new(net, &mut shape_rng()), &out.path("value.ckpt"))?,
        ))
    }

    fn rl_agent(&self) -> Result<RlAgent, HarnessError> {
        Ok(RlAgent::new(Arc::new(self.load_rl()?.0), self.config.rl.price_sigma))
    }

    fn tom_corpus_settings(&self, dialogs: usize, stream: u64) -> TomCorpusConfig {
        TomCorpusConfig {
            dialogs,
            seed: self.seed(stream),
            ..self.config.tom_corpus.clone()
        }
    }

    pub fn tom_corpus(&self) -> Result<StageOutput, HarnessError> {
        let rl = self.rl()?;
        let c = &self.config;
        let settings = self.tom_corpus_settings(c.tom_corpus.dialogs, TOM_CORPUS);
        let opponents = c.training_opponents();
        self.cache.run("tom-corpus", &(&opponents, &settings), &[&rl], |dir| {
            let agent = self.rl_agent()?;
            let episodes = generate_tom_corpus(&agent, &c.roster, &opponents, &c.match_config, &settings, self.bank)?;
            write_transcripts(&dir.join("corpus.jsonl"), &episodes)
        })
    }

    pub fn identifier(&self) -> Result<StageOutput, HarnessError> {
        let corpus = self.tom_corpus()?;
        let c = &self.config;
        let stage = &c.identifier;
        let settings = Seeded {
            seed: self.seed(IDENTIFIER),
            settings: stage,
        };
        self.cache.run("identifier", &settings, &[&corpus], |dir| {
            let episodes = load_episodes(&corpus.path("corpus.jsonl"), self.bank)?;
            let train = TrainConfig {
                seed: settings.seed,
                ..stage.train.clone()
            };
            let (net, training) = train_identifier(&episodes, &train)?;
            save_checkpoint(&net, &dir.join("identifier.ckpt"))?;
            let holdout_config = self.tom_corpus_settings(stage.holdout_dialogs, HOLDOUT);
            let agent = self.rl_agent()?;
            let holdout = generate_tom_corpus(
                &agent,
                &c.roster,
                &c.training_opponents(),
                &c.match_config,
                &holdout_config,
                self.bank,
            )?;
            write_transcripts(&dir.join("holdout.jsonl"), &holdout)?;
            let (top1, top3, scored) = identifier_accuracy(&net, &holdout, stage.accuracy_turns);
            let summary = IdentifierSummary {
                training,
                turns: stage.accuracy_turns,
                holdout_dialogs: holdout.len(),
                scored_dialogs: scored,
                top1,
                top3,
            };
            write_json(&dir.join("report.json"), &summary)
        })
    }

    pub fn load_identifier(&self) -> Result<IdentifierNet, HarnessError> {
        let out = self.identifier()?;
        load(IdentifierNet::new(&self.config.identifier.train.net, &mut shape_rng()), &out.path("identifier.ckpt"))
    }

    pub fn identifier_summary(&self) -> Result<IdentifierSummary, HarnessError> {
        read_json(&self.identifier()?.path("report.json"))
    }

    /// Held-out dialogs of the identifier stage.
    pub fn holdout_episodes(&self) -> Result<Vec<Episode>, HarnessError> {
        load_episodes(&self.identifier()?.path("holdout.jsonl"), self.bank)
    }

    pub fn transition(&self, mode: TomMode, fraction: f64) -> Result<StageOutput, HarnessError> {
        let corpus = self.tom_corpus()?;
        let identifier = match mode {
            TomMode::Explicit => Some(self.identifier()?),
            TomMode::Implicit => None,
        };
        let train = TrainConfig {
            seed: self.seed(TRANSITION),
            ..self.config.transition.train.clone()
        };
        let mut upstream = vec![&corpus];
        upstream.extend(identifier.as_ref());
        self.cache.run(&format!("transition-{}", mode.label()), &(mode, fraction, &train), &upstream, |dir| {
            let episodes = load_episodes(&corpus.path("corpus.jsonl"), self.bank)?;
            let id_net = match mode {
                TomMode::Explicit => Some(self.load_identifier()?),
                TomMode::Implicit => None,
            };
            let (net, report) = train_transition(&episodes, mode, id_net.as_ref(), &train, fraction)?;
            save_checkpoint(&net, &dir.join("transition.ckpt"))?;
            write_json(&dir.join("report.json"), &report)
        })
    }

    pub fn transition_summary(&self, mode: TomMode, fraction: f64) -> Result<TransitionSummary, HarnessError> {
        Ok(TransitionSummary {
            mode,
            data_fraction: fraction,
            report: read_json(&self.transition(mode, fraction)?.path("report.json"))?,
        })
    }

    pub fn load_transition(&self, mode: TomMode, fraction: f64) -> Result<TransitionNet, HarnessError> {
        let out = self.transition(mode, fraction)?;
        let report: TransitionReport = read_json(&out.path("report.json"))?;
        let mut net = load(
            TransitionNet::new(mode, &self.config.transition.train.net, &mut shape_rng()),
            &out.path("transition.ckpt"),
        )?;
        net.price_sigma = report.price_sigma;
        Ok(net)
    }

    /// ToM manager on the RL policy and critic.
    pub fn tom_agent(&self, mode: TomMode) -> Result<TomAgent, HarnessError> {
        let (policy, value) = self.load_rl()?;
        let identifier = match mode {
            TomMode::Explicit => Some(Arc::new(self.load_identifier()?)),
            TomMode::Implicit => None,
        };
        let models = TomModels {
            policy: Arc::new(policy),
            value: Arc::new(value),
            transition: Arc::new(self.load_transition(mode, self.config.transition.data_fraction)?),
            identifier,
        };
        Ok(TomAgent::new(
            models,
            self.config.tom.clone(),
            self.config.rl.price_sigma,
            Arc::new(self.bank.clone()),
        ))
    }

    pub fn agent(&self, kind: ManagerKind) -> Result<Box<dyn Negotiator>, HarnessError> {
        Ok(match kind {
            ManagerKind::SlRule => Box::new(SlAgent::new(Arc::new(self.load_sl()?))),
            ManagerKind::Rl => Box::new(self.rl_agent()?),
            ManagerKind::TomImplicit => Box::new(self.tom_agent(TomMode::Implicit)?),
            ManagerKind::TomExplicit => Box::new(self.tom_agent(TomMode::Explicit)?),
        })
    }

    fn mixed_schedule(&self, total: usize) -> Vec<u8> {
        opponent_schedule(&self.config.roster.ids(), &allocate(&self.config.weights(), total))
    }

    pub fn finetune(&self) -> Result<StageOutput, HarnessError> {
        let c = &self.config;
        let stage = &c.finetune;
        let mode = stage.mode;
        let transition = self.transition(mode, c.transition.data_fraction)?;
        let rl = self.rl()?;
        let identifier = self.identifier()?;
        let config = FinetuneConfig {
            seed: self.seed(FINETUNE),
            ..stage.config.clone()
        };
        let settings = (&config, mode, stage.paired_episodes, stage.variance_states, &c.tom, &c.training_opponents());
        self.cache.run("finetune", &settings, &[&rl, &identifier, &transition], |dir| {
            let base = self.tom_agent(mode)?;
            let opponents = c.training_opponents();
            let (policy, value, training) = finetune_tom(&base, &c.roster, &opponents, &c.match_config, &config, self.bank)?;
            save_checkpoint(&policy, &dir.join("policy.ckpt"))?;
            save_checkpoint(&value, &dir.join("value.ckpt"))?;
            let mut tuned = base.clone();
            tuned.models.policy = Arc::new(policy);
            tuned.models.value = Arc::new(value);

            let schedule = self.mixed_schedule(stage.paired_episodes);
            let seed = self.seed(PAIRED);
            let rewards = |agent: &TomAgent| -> Result<Vec<f64>, HarnessError> {
                let eps = evaluate(agent, &c.roster, &schedule, &c.match_config, seed, false, self.bank)?;
                Ok(eps.iter().map(|e| e.metrics.reward()).collect())
            };
            let before = rewards(&base)?;
            let after = rewards(&tuned)?;
            let diff: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();

            let probes = self.variance_probes(&base, stage.variance_states)?;
            let mut variances = Vec::with_capacity(probes.len());
            for (i, (state, act, id)) in probes.iter().enumerate() {
                let opponent = PopulationAgent::new(c.roster.get(*id).expect("scheduled id").clone());
                let role = c.match_config.agent_role;
                let v = target_variances(
                    &base,
                    &opponent,
                    &[(state.clone(), *act)],
                    role,
                    config.gap_penalty,
                    self.bank,
                    derive_seed(self.seed(VARIANCE), i as u64),
                )?;
                variances.extend(v);
            }
            let summary = FinetuneSummary {
                mode,
                training,
                reward_before: MetricSummary::of(&before).expect("paired_episodes > 0"),
                reward_after: MetricSummary::of(&after).expect("paired_episodes > 0"),
                paired_difference: MetricSummary::of(&diff).expect("paired_episodes > 0"),
                target_variances: variances,
            };
            write_json(&dir.join("report.json"), &summary)
        })
    }

    /// The agent's second decision in each of `n` mixed-population dialogs,
    /// with the act it took and the opponent id.
    fn variance_probes(
        &self,
        agent: &TomAgent,
        n: usize,
    ) -> Result<Vec<(crate::environment::DialogState, crate::ontology::DialogAct, u8)>, HarnessError> {
        let c = &self.config;
        let schedule = self.mixed_schedule(n);
        let episodes = evaluate(agent, &c.roster, &schedule, &c.match_config, self.seed(VARIANCE), false, self.bank)?;
        let mut probes = Vec::new();
        for (ep, id) in episodes.iter().zip(&schedule) {
            let own: Vec<usize> = (0..ep.state.history.len()).filter(|&t| ep.state.history[t].agent == ep.agent).collect();
            if let Some(&t) = own.get(1).or(own.first()) {
                probes.push((prefix_state(&ep.state, t), ep.state.history[t].act, *id));
            }
        }
        Ok(probes)
    }

    pub fn finetune_summary(&self) -> Result<FinetuneSummary, HarnessError> {
        read_json(&self.finetune()?.path("report.json"))
    }

    /// Evaluation columns: `(name, populations, schedule)`.
    pub fn columns(&self) -> Vec<(String, Vec<u8>, Vec<u8>)> {
        let e = &self.config.evaluation;
        let ids: Vec<u8> = self.config.roster.ids();
        vec![
            ("cooperative".into(), vec![e.cooperative], vec![e.cooperative; e.dialogs]),
            ("competitive".into(), vec![e.competitive], vec![e.competitive; e.dialogs]),
            ("mixed".into(), ids, self.mixed_schedule(e.mixed_dialogs)),
        ]
    }

    fn evaluation_key(&self) -> Result<String, HarnessError> {
        let mut upstream = Vec::new();
        for kind in &self.config.evaluation.managers {
            match kind {
                ManagerKind::SlRule => upstream.push(self.sl()?),
                ManagerKind::Rl => upstream.push(self.rl()?),
                ManagerKind::TomImplicit => upstream.push(self.transition(TomMode::Implicit, self.config.transition.data_fraction)?),
                ManagerKind::TomExplicit => {
                    upstream.push(self.identifier()?);
                    upstream.push(self.transition(TomMode::Explicit, self.config.transition.data_fraction)?);
                }
            }
        }
        upstream.push(self.rl()?);
        let refs: Vec<&StageOutput> = upstream.iter().collect();
        let c = &self.config;
        let settings = (&c.evaluation, &c.tom, &c.match_config, &c.roster, c.weights(), self.seed(EVALUATION));
        StageCache::key("evaluation", &settings, &refs)
    }

    /// Runs every manager against every column, writing transcripts, debug
    /// dumps and reports under the run directory. A finished evaluation with
    /// the same inputs is left in place.
    pub fn evaluate(&self) -> Result<EvaluationReport, HarnessError> {
        let run_dir = &self.config.output_dir;
        let key = self.evaluation_key()?;
        let key_path = run_dir.join("reports/evaluation.key");
        if read_file(&key_path).ok().as_deref() == Some(key.as_str()) {
            if let Ok(report) = EvaluationReport::load(run_dir) {
                return Ok(report);
            }
        }
        let _ = std::fs::remove_file(&key_path);
        let c = &self.config;
        let seed = self.seed(EVALUATION);
        let mut rows = Vec::new();
        for &kind in &c.evaluation.managers {
            let agent = self.agent(kind)?;
            for (column, populations, schedule) in self.columns() {
                tracing::info!(manager = kind.label(), column, dialogs = schedule.len(), "evaluating");
                let episodes = evaluate(
                    agent.as_ref(),
                    &c.roster,
                    &schedule,
                    &c.match_config,
                    seed,
                    c.evaluation.alternate_roles,
                    self.bank,
                )?;
                let rel = format!("transcripts/{}__{column}.jsonl", slug(kind));
                write_transcripts(&run_dir.join(&rel), &episodes)?;
                let records: Vec<_> = episodes.iter().map(|e| e.metrics).collect();
                rows.push(aggregate(kind, &column, &populations, &records, &rel));
                if matches!(kind, ManagerKind::TomImplicit | ManagerKind::TomExplicit) && c.evaluation.debug_dialogs > 0 {
                    let mode = if kind == ManagerKind::TomImplicit { TomMode::Implicit } else { TomMode::Explicit };
                    self.debug_dump(mode, &schedule, seed, &run_dir.join(format!("debug/{}__{column}.jsonl", slug(kind))))?;
                }
            }
        }
        let report = EvaluationReport {
            seed: c.seed,
            agent_role: c.match_config.agent_role,
            rows,
        };
        report.write(run_dir)?;
        write_file(&key_path, &key)?;
        Ok(report)
    }

    /// Replays the first dialogs of a column with the decision log switched on.
    fn debug_dump(&self, mode: TomMode, schedule: &[u8], seed: u64, path: &Path) -> Result<(), HarnessError> {
        let c = &self.config;
        let mut agent = self.tom_agent(mode)?;
        let mut out = String::new();
        for (i, &id) in schedule.iter().enumerate().take(c.evaluation.debug_dialogs) {
            let sink = Arc::new(Mutex::new(Vec::new()));
            agent.debug = Some(sink.clone());
            let opponent = PopulationAgent::new(c.roster.get(id).expect("scheduled id").clone());
            let mut config = c.match_config.clone();
            if c.evaluation.alternate_roles && i % 2 == 1 {
                config.agent_role = config.agent_role.other();
            }
            play(&agent, &opponent, &config, derive_seed(seed, i as u64), self.bank)?;
            let decisions = std::mem::take(&mut *sink.lock().expect("debug sink"));
            let line = serde_json::json!({ "dialog": i, "opponent": id, "decisions": decisions });
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        write_file(path, out)
    }

    /// Every stage, then the evaluation; writes `reports/summary.json`.
    pub fn run(&self) -> Result<PipelineSummary, HarnessError> {
        let c = &self.config;
        let fractions = [c.transition.data_fraction, c.transition.reduced_fraction];
        let mut stages = vec![self.corpus()?, self.sl()?, self.rl()?, self.tom_corpus()?, self.identifier()?];
        let mut transitions = Vec::new();
        for mode in [TomMode::Implicit, TomMode::Explicit] {
            for (i, &f) in fractions.iter().enumerate() {
                if i == 1 && f == fractions[0] {
                    continue;
                }
                stages.push(self.transition(mode, f)?);
                transitions.push(self.transition_summary(mode, f)?);
            }
        }
        let finetune = if c.finetune.enabled {
            stages.push(self.finetune()?);
            Some(self.finetune_summary()?)
        } else {
            None
        };
        let evaluation = self.evaluate()?;
        let summary = PipelineSummary {
            seed: c.seed,
            stages: stages.iter().map(|s| (s.stage.clone(), s.key.clone())).collect(),
            identifier: self.identifier_summary()?,
            transitions,
            finetune,
            evaluation,
        };
        write_json(&c.output_dir.join("reports/summary.json"), &summary)?;
        Ok(summary)
    }

    /// Runs `f`, and on failure writes `error.json` to the run directory.
    pub fn recording<T>(&self, stage: &str, f: impl FnOnce(&Self) -> Result<T, HarnessError>) -> Result<T, HarnessError> {
        let _ = std::fs::remove_file(self.error_path());
        f(self).inspect_err(|e| {
            let _ = write_json(&self.error_path(), &ErrorRecord::new(stage, e));
        })
    }

    pub fn error_path(&self) -> PathBuf {
        self.config.output_dir.join("error.json")
    }

    /// Identifier embeddings of every dialog in `episodes`, one JSON line each.
    pub fn dump_embeddings(&self, episodes: &[Episode], path: &Path) -> Result<usize, HarnessError> {
        let net = self.load_identifier()?;
        let mut out = String::new();
        for (i, ep) in episodes.iter().enumerate() {
            let line = serde_json::json!({
                "dialog": i,
                "population": ep.opponent_population,
                "predicted": net.identify(&ep.state, ep.agent).argmax(),
                "embedding": net.embedding(&ep.state.history, ep.agent),
            });
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        write_file(path, out)?;
        Ok(episodes.len())
    }

    pub fn load_episodes(&self, path: &Path) -> Result<Vec<Episode>, HarnessError> {
        load_episodes(path, self.bank)
    }
}
