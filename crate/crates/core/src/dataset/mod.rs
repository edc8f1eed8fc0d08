//! Instruction samples built from run logs: one sample per sub-task at each
//! consultation tick, with prompt corruption, class balancing and a
//! stratified train/test split.

pub mod templates;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbiter::{render_prompt_text, schedule_ticks, MetaAction};
use crate::geometry::{OrientedBox, Pose2D};
use crate::scene::{project_box, SUMMARY_RANGE};
use crate::simulator::{SimLog, TickLabel, TickRecord};

use templates::{DecisionFacts, ObjectFacts, TemplateError, TemplateSet};

/// Collision time quoted by a corrupted hazard prompt when the truth has none.
pub const FALLBACK_PROMPT_TIME: f64 = 3.0;

/// Objects described per critical-object answer.
pub const MAX_OBJECTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtask {
    ScenarioDescription,
    CriticalObjects,
    DecisionMaking,
}

impl Subtask {
    pub const ALL: [Subtask; 3] = [Subtask::ScenarioDescription, Subtask::CriticalObjects, Subtask::DecisionMaking];

    pub fn name(self) -> &'static str {
        match self {
            Subtask::ScenarioDescription => "scenario_description",
            Subtask::CriticalObjects => "critical_objects",
            Subtask::DecisionMaking => "decision_making",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub sample_id: u64,
    pub scenario: String,
    pub tick: u64,
    pub subtask: Subtask,
    pub question: String,
    pub answer: String,
    /// Initial-decision text; decision samples only.
    pub aeb_prompt: Option<String>,
    /// Action stated by `aeb_prompt`.
    pub prompt_action: Option<MetaAction>,
    pub prompt_agent: Option<String>,
    pub prompt_time: Option<f64>,
    pub prompt_corrupted: bool,
    /// 1 exactly when `meta_label` is emergency braking.
    pub brake_label: u8,
    pub meta_label: MetaAction,
}

impl TrainingSample {
    pub fn check_invariants(&self) -> Result<(), String> {
        if (self.brake_label == 1) != (self.meta_label == MetaAction::EmergencyBraking) || self.brake_label > 1 {
            return Err(format!("sample {}: brake label disagrees with meta label", self.sample_id));
        }
        if self.aeb_prompt.is_some() != (self.subtask == Subtask::DecisionMaking) {
            return Err(format!("sample {}: prompt present on the wrong sub-task", self.sample_id));
        }
        if self.subtask == Subtask::DecisionMaking {
            if self.meta_label.is_hazard() != self.answer.ends_with(crate::slow::AEB_TOKEN) {
                return Err(format!("sample {}: token rule violated", self.sample_id));
            }
            if self.prompt_corrupted == (self.prompt_action == Some(self.meta_label)) {
                return Err(format!("sample {}: corruption flag disagrees with the prompt", self.sample_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("labels for scenario `{scenario}` do not cover tick {tick}")]
    LabelsMissing { scenario: String, tick: u64 },
    #[error("{logs} logs but {labels} label sets")]
    LabelCount { logs: usize, labels: usize },
    #[error("class {0} has no samples")]
    EmptyClass(&'static str),
    #[error("corruption fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("split needs at least 10 samples, got {0}")]
    TooFew(usize),
}

/// Closed-loop labels recorded in a log.
pub fn log_labels(log: &SimLog) -> Vec<TickLabel> {
    log.ticks
        .iter()
        .map(|r| TickLabel {
            tick: r.tick,
            required_action: r.required.action,
            time_to_contact: r.required.time_to_contact,
            agent: r.required.agent.clone(),
        })
        .collect()
}

/// Consultation ticks of a run: where prompts went out, or the nominal grid
/// for runs without a slow path.
pub fn consultation_ticks(log: &SimLog) -> Vec<u64> {
    let sent: Vec<u64> = log.ticks.iter().filter(|r| r.request.is_some()).map(|r| r.tick).collect();
    if !sent.is_empty() {
        return sent;
    }
    schedule_ticks(log.ticks.len() as u64, log.header.scenario.dt, log.header.config.arbiter.trigger_interval)
}

fn critical_objects(log: &SimLog, record: &TickRecord, hazard: Option<&str>) -> Vec<ObjectFacts> {
    let meta = &log.header.scenario;
    let ego = Pose2D::new(record.ego.x, record.ego.y, record.ego.heading);
    let mut visible: Vec<(f64, &str, ObjectFacts)> = Vec::new();
    let mut occluded = None;
    for (snap, desc) in record.agents.iter().zip(&log.header.agents) {
        let pose = Pose2D::new(snap.x, snap.y, snap.heading);
        let bbox = OrientedBox::from_dims(pose, desc.length, desc.width).expect("logged dimensions are valid");
        let distance = pose.position().distance(ego.position());
        let facts = |image_box| ObjectFacts {
            description: desc.description.clone(),
            image_box,
            distance: (distance * 100.0).round() / 100.0,
            signal: desc.signal,
            intention: desc.intention.clone(),
            ghost: desc.ghost,
        };
        if !snap.perceived {
            if hazard == Some(desc.id.as_str()) {
                occluded = Some(facts(None));
            }
            continue;
        }
        if distance > SUMMARY_RANGE {
            continue;
        }
        if let Some(b) = project_box(&meta.camera, &ego, &bbox, desc.height) {
            visible.push((distance, &desc.id, facts(Some(b))));
        }
    }
    visible.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let mut out: Vec<ObjectFacts> = visible.into_iter().take(MAX_OBJECTS).map(|(_, _, f)| f).collect();
    out.extend(occluded);
    out
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &'a [String]) -> &'a str {
    &options[rng.gen_range(0..options.len())]
}

fn prompt_text(action: MetaAction, agent: Option<&str>, time: Option<f64>) -> String {
    let seconds = match action {
        MetaAction::Normal => None,
        _ => Some(time.unwrap_or(FALLBACK_PROMPT_TIME)),
    };
    render_prompt_text(action, agent, seconds)
}

fn decision_question(templates: &TemplateSet, index: usize, prompt: &str) -> Result<String, TemplateError> {
    templates::render(&templates.decision_questions[index], &BTreeMap::from([("aeb_prompt", prompt.to_string())]))
}

/// Three samples per consultation tick of every log. `labels[i]` must
/// cover every tick of `logs[i]`. Prompts state the true action; see
/// [`corrupt_prompts`].
pub fn build_samples(logs: &[SimLog], labels: &[Vec<TickLabel>], templates: &TemplateSet, seed: u64) -> Result<Vec<TrainingSample>, DatasetError> {
    templates.validate()?;
    if logs.len() != labels.len() {
        return Err(DatasetError::LabelCount {
            logs: logs.len(),
            labels: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for (log, labels) in logs.iter().zip(labels) {
        let by_tick: BTreeMap<u64, &TickLabel> = labels.iter().map(|l| (l.tick, l)).collect();
        let scenario = log.scenario_name().to_string();
        for tick in consultation_ticks(log) {
            let label = *by_tick.get(&tick).ok_or_else(|| DatasetError::LabelsMissing {
                scenario: scenario.clone(),
                tick,
            })?;
            let record = &log.ticks[tick as usize];
            let truth = label.required_action;
            let hazard_desc = label.agent.as_deref().and_then(|id| log.header.agents.iter().find(|a| a.id == id));
            let objects = critical_objects(log, record, label.agent.as_deref());

            let mut push = |subtask, question: String, answer: String, prompt: Option<(String, Option<String>, Option<f64>)>| {
                let (aeb_prompt, prompt_agent, prompt_time) = match prompt {
                    Some((text, agent, time)) => (Some(text), agent, time),
                    None => (None, None, None),
                };
                samples.push(TrainingSample {
                    sample_id: samples.len() as u64,
                    scenario: scenario.clone(),
                    tick,
                    subtask,
                    question,
                    answer,
                    prompt_action: aeb_prompt.as_ref().map(|_| truth),
                    aeb_prompt,
                    prompt_agent,
                    prompt_time,
                    prompt_corrupted: false,
                    brake_label: u8::from(truth == MetaAction::EmergencyBraking),
                    meta_label: truth,
                });
            };

            push(
                Subtask::ScenarioDescription,
                pick(&mut rng, &templates.scenario_questions).to_string(),
                templates.scenario_sentence(&log.header.scenario.environment)?,
                None,
            );
            push(
                Subtask::CriticalObjects,
                pick(&mut rng, &templates.object_questions).to_string(),
                templates.objects_paragraph(&objects)?,
                None,
            );

            // hazard named by the prompt: the true one, else the nearest object
            let prompt_agent = hazard_desc
                .map(|a| format!("the {}", a.description))
                .or_else(|| objects.first().map(|o| format!("the {}", o.description)));
            let prompt_time = label.time_to_contact;
            let prompt = prompt_text(truth, prompt_agent.as_deref(), prompt_time);
            let q = rng.gen_range(0..templates.decision_questions.len());
            let answer = templates.decision_sentence(&DecisionFacts {
                action: truth,
                hazard: hazard_desc.map(|a| a.description.clone()),
                time_to_contact: label.time_to_contact,
                hazard_occluded: hazard_desc.is_some_and(|a| a.hidden_until.is_some_and(|h| record.time < h - 1e-9)),
                ghost_dismissed: objects.iter().any(|o| o.ghost),
            })?;
            push(
                Subtask::DecisionMaking,
                decision_question(templates, q, &prompt)?,
                answer,
                Some((prompt, prompt_agent, prompt_time)),
            );
        }
    }
    Ok(samples)
}

/// Rewrites the prompts of exactly `round(fraction × N)` decision samples
/// to one of the two wrong actions, chosen uniformly. Answers are kept.
pub fn corrupt_prompts(samples: Vec<TrainingSample>, fraction: f64, seed: u64) -> Result<Vec<TrainingSample>, DatasetError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DatasetError::Fraction(fraction));
    }
    let mut samples = samples;
    let decision: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.subtask == Subtask::DecisionMaking)
        .map(|(i, _)| i)
        .collect();
    let count = (fraction * decision.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = decision.choose_multiple(&mut rng, count).copied().collect();
    chosen.sort_unstable();
    for i in chosen {
        let s = &mut samples[i];
        let wrong: Vec<MetaAction> = MetaAction::ALL.into_iter().filter(|&a| a != s.meta_label).collect();
        let action = wrong[rng.gen_range(0..wrong.len())];
        let old = s.aeb_prompt.clone().expect("decision samples carry a prompt");
        let new = prompt_text(action, s.prompt_agent.as_deref(), s.prompt_time);
        s.question = s.question.replacen(&old, &new, 1);
        s.aeb_prompt = Some(new);
        s.prompt_action = Some(action);
        s.prompt_corrupted = true;
    }
    Ok(samples)
}

pub fn class_counts(samples: &[TrainingSample]) -> BTreeMap<MetaAction, usize> {
    let mut counts: BTreeMap<MetaAction, usize> = MetaAction::ALL.into_iter().map(|a| (a, 0)).collect();
    for s in samples {
        *counts.get_mut(&s.meta_label).unwrap() += 1;
    }
    counts
}

/// Downsamples each class, per sub-task, to the smallest class count. The
/// result is within any tolerance of the minimum; kept samples stay in
/// `sample_id` order.
pub fn balance_classes(samples: Vec<TrainingSample>, seed: u64) -> Result<Vec<TrainingSample>, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; samples.len()];
    for subtask in Subtask::ALL {
        let mut by_class: BTreeMap<MetaAction, Vec<usize>> = MetaAction::ALL.into_iter().map(|a| (a, Vec::new())).collect();
        for (i, s) in samples.iter().enumerate().filter(|(_, s)| s.subtask == subtask) {
            by_class.get_mut(&s.meta_label).unwrap().push(i);
        }
        if by_class.values().all(Vec::is_empty) {
            continue;
        }
        if let Some((class, _)) = by_class.iter().find(|(_, v)| v.is_empty()) {
            return Err(DatasetError::EmptyClass(class.label()));
        }
        let target = by_class.values().map(Vec::len).min().unwrap();
        for indices in by_class.values() {
            for &i in indices.choose_multiple(&mut rng, target) {
                keep[i] = true;
            }
        }
    }
    Ok(samples.into_iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s).collect())
}

/// Keeps `n` samples, allocated across classes in proportion to their
/// counts by largest remainder, chosen by seeded shuffle.
pub fn select_stratified(samples: Vec<TrainingSample>, n: usize, seed: u64) -> Vec<TrainingSample> {
    if n >= samples.len() {
        return samples;
    }
    let quotas = largest_remainder(&class_counts(&samples), n, samples.len());
    let picked = pick_per_class(&samples, &quotas, seed);
    samples.into_iter().zip(picked).filter(|(_, k)| *k).map(|(s, _)| s).collect()
}

/// Per-class shares of `n` out of `total`, floors plus largest remainders,
/// ties to the lower class.
fn largest_remainder(counts: &BTreeMap<MetaAction, usize>, n: usize, total: usize) -> BTreeMap<MetaAction, usize> {
    let mut quotas: BTreeMap<MetaAction, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    for (&class, &c) in counts {
        let exact = c as u128 * n as u128;
        quotas.insert(class, (exact / total as u128) as usize);
        remainders.push((exact % total as u128, class));
    }
    let assigned: usize = quotas.values().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, class) in remainders.into_iter().take(n - assigned) {
        *quotas.get_mut(&class).unwrap() += 1;
    }
    quotas
}

fn pick_per_class(samples: &[TrainingSample], quotas: &BTreeMap<MetaAction, usize>, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = vec![false; samples.len()];
    for (class, &quota) in quotas {
        let mut indices: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].meta_label == *class).collect();
        indices.shuffle(&mut rng);
        for &i in indices.iter().take(quota) {
            picked[i] = true;
        }
    }
    picked
}

/// Stratified 9:1 split. The test set holds `round(N / 10)` samples spread
/// over classes by largest remainder; both halves keep `sample_id` order.
pub fn split(samples: Vec<TrainingSample>, seed: u64) -> Result<(Vec<TrainingSample>, Vec<TrainingSample>), DatasetError> {
    if samples.len() < 10 {
        return Err(DatasetError::TooFew(samples.len()));
    }
    let n_test = (samples.len() as f64 / 10.0).round() as usize;
    let quotas = largest_remainder(&class_counts(&samples), n_test, samples.len());
    let in_test = pick_per_class(&samples, &quotas, seed);
    let (test, train): (Vec<_>, Vec<_>) = samples.into_iter().zip(in_test).partition(|(_, t)| *t);
    Ok((train.into_iter().map(|(s, _)| s).collect(), test.into_iter().map(|(s, _)| s).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub total: usize,
    pub by_class: BTreeMap<String, usize>,
    pub by_subtask: BTreeMap<String, usize>,
    pub corrupted: usize,
}

impl SplitCounts {
    pub fn of(samples: &[TrainingSample]) -> Self {
        let mut by_class = BTreeMap::new();
        let mut by_subtask = BTreeMap::new();
        for s in samples {
            *by_class.entry(s.meta_label.label().to_string()).or_insert(0) += 1;
            *by_subtask.entry(s.subtask.name().to_string()).or_insert(0) += 1;
        }
        Self {
            total: samples.len(),
            by_class,
            by_subtask,
            corrupted: samples.iter().filter(|s| s.prompt_corrupted).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub corrupt_fraction: f64,
    pub balanced: bool,
    pub train: SplitCounts,
    pub test: SplitCounts,
}

pub fn to_jsonl(samples: &[TrainingSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("samples serialize"));
        out.push('\n');
    }
    out
}

/// Options for [`build_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub seed: u64,
    pub balance: bool,
    pub corrupt_fraction: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            balance: true,
            corrupt_fraction: 0.5,
        }
    }
}

/// Build, balance, corrupt and split, with the manifest.
pub fn build_dataset(
    logs: &[SimLog],
    templates: &TemplateSet,
    opts: &DatasetOptions,
) -> Result<(Vec<TrainingSample>, Vec<TrainingSample>, Manifest), DatasetError> {
    let labels: Vec<Vec<TickLabel>> = logs.iter().map(log_labels).collect();
    let mut samples = build_samples(logs, &labels, templates, opts.seed)?;
    if opts.balance {
        samples = balance_classes(samples, opts.seed.wrapping_add(1))?;
    }
    let samples = corrupt_prompts(samples, opts.corrupt_fraction, opts.seed.wrapping_add(2))?;
    let (train, test) = split(samples, opts.seed.wrapping_add(3))?;
    let manifest = Manifest {
        seed: opts.seed,
        corrupt_fraction: opts.corrupt_fraction,
        balanced: opts.balance,
        train: SplitCounts::of(&train),
        test: SplitCounts::of(&test),
    };
    Ok((train, test, manifest))
}
