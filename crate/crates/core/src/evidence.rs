//! Evidence-source selection with verification feedback.
//!
//! Each trial asks for one evidence source for one of three learning tasks.
//! A source is useful iff it belongs to the task's usefulness set. Scope
//! expansion trials restrict the choice to historical sources.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    run_episode, Diagnostics, EvidenceBatch, EvidenceItem, EvidenceOrigin, EvidenceRequest,
    KnowledgeState, LearningMaterials, LearningPlan, LearningResult, LoopState, Operators,
    SufficiencyAssessment, ThinkingStrategy, UpdateComponent, UpdateTarget, Verdict,
};
use crate::error::LoopError;
use crate::objects::{ActionRoutine, ActionToken, CandidateUpdate, GoalId, LearningObjectSet, ModelHandle};
use crate::rng::{seeded, SimRng};
use crate::scenario::MetricMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EvidenceSource {
    Color,
    Shape,
    Texture,
    Position,
    HistSuccessSeq,
    HistFailSeq,
    UnknownClusters,
    RandomNoise,
    PastSimilarTasks,
    PartialInputMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourcePool {
    Direct,
    Historical,
}

impl EvidenceSource {
    pub const ALL: [EvidenceSource; 10] = [
        EvidenceSource::Color,
        EvidenceSource::Shape,
        EvidenceSource::Texture,
        EvidenceSource::Position,
        EvidenceSource::HistSuccessSeq,
        EvidenceSource::HistFailSeq,
        EvidenceSource::UnknownClusters,
        EvidenceSource::RandomNoise,
        EvidenceSource::PastSimilarTasks,
        EvidenceSource::PartialInputMatch,
    ];

    pub fn cost(self) -> f64 {
        match self {
            EvidenceSource::Color
            | EvidenceSource::Shape
            | EvidenceSource::Texture
            | EvidenceSource::HistSuccessSeq
            | EvidenceSource::UnknownClusters => 1.0,
            EvidenceSource::Position => 2.0,
            EvidenceSource::HistFailSeq => 3.0,
            EvidenceSource::PastSimilarTasks => 4.0,
            EvidenceSource::RandomNoise | EvidenceSource::PartialInputMatch => 5.0,
        }
    }

    pub fn pool(self) -> SourcePool {
        match self {
            EvidenceSource::Color
            | EvidenceSource::Shape
            | EvidenceSource::Texture
            | EvidenceSource::Position
            | EvidenceSource::RandomNoise => SourcePool::Direct,
            _ => SourcePool::Historical,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn token(self) -> ActionToken {
        ActionToken(self as u16)
    }

    fn from_token(t: ActionToken) -> Option<Self> {
        EvidenceSource::ALL.get(t.0 as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EvidenceSource::Color => "color",
            EvidenceSource::Shape => "shape",
            EvidenceSource::Texture => "texture",
            EvidenceSource::Position => "position",
            EvidenceSource::HistSuccessSeq => "hist_success_seq",
            EvidenceSource::HistFailSeq => "hist_fail_seq",
            EvidenceSource::UnknownClusters => "unknown_clusters",
            EvidenceSource::RandomNoise => "random_noise",
            EvidenceSource::PastSimilarTasks => "past_similar_tasks",
            EvidenceSource::PartialInputMatch => "partial_input_match",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LearningTask {
    ObjectRecognition,
    RoutineReconstruction,
    CategoryDiscovery,
}

impl LearningTask {
    pub const ALL: [LearningTask; 3] = [
        LearningTask::ObjectRecognition,
        LearningTask::RoutineReconstruction,
        LearningTask::CategoryDiscovery,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Ground-truth useful sources per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UsefulnessMap(pub BTreeMap<LearningTask, BTreeSet<EvidenceSource>>);

impl Default for UsefulnessMap {
    fn default() -> Self {
        use EvidenceSource::*;
        let mut m = BTreeMap::new();
        m.insert(
            LearningTask::ObjectRecognition,
            [Color, Shape, HistSuccessSeq].into_iter().collect(),
        );
        m.insert(
            LearningTask::RoutineReconstruction,
            [HistSuccessSeq, PastSimilarTasks, PartialInputMatch].into_iter().collect(),
        );
        m.insert(
            LearningTask::CategoryDiscovery,
            [UnknownClusters, Color, HistSuccessSeq].into_iter().collect(),
        );
        UsefulnessMap(m)
    }
}

impl UsefulnessMap {
    pub fn useful(&self, task: LearningTask) -> impl Iterator<Item = EvidenceSource> + '_ {
        self.0.get(&task).into_iter().flatten().copied()
    }

    /// Three useful sources per task, one of cost 1, one historical, and
    /// never random noise.
    pub fn check_invariants(&self) -> bool {
        LearningTask::ALL.iter().all(|&t| {
            let u: Vec<EvidenceSource> = self.useful(t).collect();
            u.len() == 3
                && u.iter().any(|s| s.cost() == 1.0)
                && u.iter().any(|s| s.pool() == SourcePool::Historical)
                && !u.contains(&EvidenceSource::RandomNoise)
        })
    }
}

pub fn verify_selection(task: LearningTask, source: EvidenceSource, map: &UsefulnessMap) -> bool {
    map.0.get(&task).is_some_and(|u| u.contains(&source))
}

/// Sources eligible on a trial: all ten, or the historical pool on a scope
/// expansion trial.
pub fn eligible(scope: bool) -> Vec<EvidenceSource> {
    EvidenceSource::ALL
        .iter()
        .copied()
        .filter(|s| !scope || s.pool() == SourcePool::Historical)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    Direct,
    Expanded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub trial: usize,
    pub task: LearningTask,
    pub source: EvidenceSource,
    pub scope: Scope,
    pub useful: bool,
    pub cost: f64,
    pub repeated_error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvidenceParams {
    pub trials: usize,
    /// Share of trials run as scope expansion, realized as the first
    /// `round(10 · fraction)` slots of every block of ten trials.
    pub scope_fraction: f64,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub untried_prior: f64,
    /// Probability that a verification outcome is reported flipped.
    pub feedback_flip: f64,
    pub usefulness: UsefulnessMap,
}

impl Default for EvidenceParams {
    fn default() -> Self {
        EvidenceParams {
            trials: 150,
            scope_fraction: 0.3,
            epsilon0: 0.3,
            epsilon_decay: 0.97,
            epsilon_floor: 0.01,
            untried_prior: 0.5,
            feedback_flip: 0.0,
            usefulness: UsefulnessMap::default(),
        }
    }
}

impl EvidenceParams {
    pub fn epsilon(&self, trial: usize) -> f64 {
        (self.epsilon0 * libm::pow(self.epsilon_decay, trial as f64)).max(self.epsilon_floor)
    }

    pub fn is_scope_trial(&self, trial: usize) -> bool {
        let slots = libm::round(self.scope_fraction.clamp(0.0, 1.0) * 10.0) as usize;
        trial % 10 < slots
    }

    pub fn task_of(&self, trial: usize) -> LearningTask {
        LearningTask::ALL[trial % 3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvidenceMethod {
    NoImprovement,
    MemoryOnly,
    Proposed,
}

impl EvidenceMethod {
    pub const ALL: [EvidenceMethod; 3] = [
        EvidenceMethod::NoImprovement,
        EvidenceMethod::MemoryOnly,
        EvidenceMethod::Proposed,
    ];

    pub fn key(self) -> &'static str {
        match self {
            EvidenceMethod::NoImprovement => "no_improvement",
            EvidenceMethod::MemoryOnly => "memory_only",
            EvidenceMethod::Proposed => "proposed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRoundResult {
    pub useful_rate: f64,
    pub avg_cost: f64,
    pub repeated_error_rate: f64,
    pub thinking_success_rate: f64,
    pub scope_success_rate: f64,
    pub records: Vec<SelectionRecord>,
}

impl EvidenceRoundResult {
    /// Useful/cost/repeat over direct trials; scope success over expanded
    /// trials.
    pub fn from_records(records: Vec<SelectionRecord>) -> Self {
        let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let direct: Vec<&SelectionRecord> = records.iter().filter(|r| r.scope == Scope::Direct).collect();
        let expanded: Vec<&SelectionRecord> = records.iter().filter(|r| r.scope == Scope::Expanded).collect();
        let useful_rate = rate(direct.iter().filter(|r| r.useful).count(), direct.len());
        let avg_cost = if direct.is_empty() {
            0.0
        } else {
            direct.iter().map(|r| r.cost).sum::<f64>() / direct.len() as f64
        };
        EvidenceRoundResult {
            useful_rate,
            avg_cost,
            repeated_error_rate: rate(direct.iter().filter(|r| r.repeated_error).count(), direct.len()),
            thinking_success_rate: useful_rate,
            scope_success_rate: rate(expanded.iter().filter(|r| r.useful).count(), expanded.len()),
            records,
        }
    }

    pub fn metrics(&self) -> MetricMap {
        let mut m = MetricMap::new();
        m.insert("useful".into(), self.useful_rate);
        m.insert("cost".into(), self.avg_cost);
        m.insert("repeat".into(), self.repeated_error_rate);
        m.insert("think".into(), self.thinking_success_rate);
        m.insert("scope".into(), self.scope_success_rate);
        m
    }
}

/// Tracks sources verified useless per task within a round.
#[derive(Debug, Clone, Default)]
struct UselessMemory(BTreeSet<(LearningTask, EvidenceSource)>);

impl UselessMemory {
    fn record(&mut self, trial: usize, task: LearningTask, source: EvidenceSource, scope: bool, useful: bool, reported_useful: bool) -> SelectionRecord {
        let repeated_error = self.0.contains(&(task, source));
        if !reported_useful {
            self.0.insert((task, source));
        }
        SelectionRecord {
            trial,
            task,
            source,
            scope: if scope { Scope::Expanded } else { Scope::Direct },
            useful,
            cost: source.cost(),
            repeated_error,
        }
    }
}

fn reported<R: Rng + ?Sized>(truth: bool, flip: f64, rng: &mut R) -> bool {
    if flip > 0.0 && rng.gen::<f64>() < flip {
        !truth
    } else {
        truth
    }
}

fn uniform_baseline(params: &EvidenceParams, rng: &mut SimRng, with_memory: bool) -> EvidenceRoundResult {
    let mut memory = UselessMemory::default();
    let mut last_failed: BTreeMap<LearningTask, EvidenceSource> = BTreeMap::new();
    let mut records = Vec::with_capacity(params.trials);
    for trial in 0..params.trials {
        let task = params.task_of(trial);
        let scope = params.is_scope_trial(trial);
        let mut pool = eligible(scope);
        if with_memory {
            if let Some(prev) = last_failed.get(&task) {
                pool.retain(|s| s != prev);
            }
        }
        let source = pool[rng.gen_range(0..pool.len())];
        let useful = verify_selection(task, source, &params.usefulness);
        let seen = reported(useful, params.feedback_flip, rng);
        if seen {
            last_failed.remove(&task);
        } else {
            last_failed.insert(task, source);
        }
        records.push(memory.record(trial, task, source, scope, useful, seen));
    }
    EvidenceRoundResult::from_records(records)
}

/// One trial of the stream, as seen by the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceTrial {
    pub index: usize,
    pub task: LearningTask,
    pub scope: bool,
}

impl EvidenceTrial {
    /// One goal per (task, scope) pair.
    pub fn goal(&self) -> GoalId {
        GoalId((self.task.index() * 2 + usize::from(self.scope)) as u16)
    }
}

/// Φ for evidence selection: incremental-mean usefulness estimates per
/// (task, source).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub estimates: BTreeMap<LearningTask, BTreeMap<EvidenceSource, Estimate>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub trials: u32,
}

impl SelectionStrategy {
    pub fn estimate(&self, task: LearningTask, source: EvidenceSource, prior: f64) -> f64 {
        self.estimates
            .get(&task)
            .and_then(|m| m.get(&source))
            .map_or(prior, |e| e.mean)
    }

    /// Folds one verification outcome into the running mean.
    pub fn observe(&mut self, task: LearningTask, source: EvidenceSource, outcome: f64) {
        let e = self.estimates.entry(task).or_default().entry(source).or_default();
        e.trials += 1;
        e.mean += (outcome - e.mean) / e.trials as f64;
    }

    /// Highest estimate/cost, ties to the earlier source.
    pub fn best(&self, task: LearningTask, pool: &[EvidenceSource], prior: f64) -> EvidenceSource {
        let mut best = pool[0];
        let mut best_score = f64::NEG_INFINITY;
        for &s in pool {
            let score = self.estimate(task, s, prior) / s.cost();
            if score > best_score {
                best = s;
                best_score = score;
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct EvidenceWorld {
    pub params: EvidenceParams,
    cursor: usize,
    memory: UselessMemory,
    pub records: Vec<SelectionRecord>,
}

impl EvidenceWorld {
    pub fn new(params: &EvidenceParams) -> Self {
        EvidenceWorld {
            params: params.clone(),
            cursor: 0,
            memory: UselessMemory::default(),
            records: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvidenceOperators;

fn task_of_goal(goal: GoalId) -> Option<LearningTask> {
    LearningTask::ALL.get(goal.0 as usize / 2).copied()
}

fn routine_source(objects: &LearningObjectSet, goal: GoalId) -> Option<EvidenceSource> {
    objects
        .routine_for(goal)
        .and_then(|r| r.actions.first())
        .and_then(|&t| EvidenceSource::from_token(t))
}

/// Sources that verification has rejected for `task`, from the knowledge base.
fn verified_useless(knowledge: &KnowledgeState<EvidenceTrial>, task: LearningTask) -> BTreeSet<EvidenceSource> {
    knowledge
        .learned()
        .filter(|(_, v)| !v.accepted)
        .filter_map(|(r, _)| match &r.candidate {
            CandidateUpdate::ReplaceRoutine(routine) if task_of_goal(routine.goal) == Some(task) => {
                routine.actions.first().and_then(|&t| EvidenceSource::from_token(t))
            }
            _ => None,
        })
        .collect()
}

pub fn initial_objects() -> LearningObjectSet {
    LearningObjectSet::new(Default::default(), Default::default(), ModelHandle::empty(), Vec::new())
        .expect("empty evidence objects are consistent")
}

impl Operators for EvidenceOperators {
    type Env = EvidenceWorld;
    type Observation = EvidenceTrial;
    type Evidence = EvidenceSource;
    type Strategy = SelectionStrategy;

    fn observe(&self, env: &mut EvidenceWorld, _rng: &mut SimRng) -> Result<EvidenceTrial, LoopError> {
        let index = env.cursor;
        env.cursor += 1;
        Ok(EvidenceTrial {
            index,
            task: env.params.task_of(index),
            scope: env.params.is_scope_trial(index),
        })
    }

    /// Sufficient when the goal already has a verified source and no cheaper
    /// eligible source is still untested.
    fn evaluate(
        &self,
        trial: &EvidenceTrial,
        objects: &LearningObjectSet,
        knowledge: &KnowledgeState<EvidenceTrial>,
        _env: &mut EvidenceWorld,
    ) -> SufficiencyAssessment {
        let mut d = Diagnostics::new();
        let deficit = |detail: &str, d: Diagnostics| {
            SufficiencyAssessment::deficit(
                UpdateTarget {
                    component: UpdateComponent::Routine,
                    detail: detail.into(),
                },
                d,
            )
        };
        let Some(current) = routine_source(objects, trial.goal()) else {
            return deficit("no verified source for this goal", d);
        };
        d.insert("current_cost".into(), current.cost());
        let useless = verified_useless(knowledge, trial.task);
        let open_cheaper = eligible(trial.scope)
            .into_iter()
            .filter(|s| s.cost() < current.cost() && !useless.contains(s))
            .count();
        d.insert("open_cheaper".into(), open_cheaper as f64);
        if open_cheaper == 0 {
            SufficiencyAssessment::sufficient(d)
        } else {
            deficit("cheaper sources remain untested", d)
        }
    }

    fn execute(&self, trial: &EvidenceTrial, objects: &LearningObjectSet, env: &mut EvidenceWorld) {
        if let Some(source) = routine_source(objects, trial.goal()) {
            let useful = verify_selection(trial.task, source, &env.params.usefulness);
            let rec = env.memory.record(trial.index, trial.task, source, trial.scope, useful, useful);
            env.records.push(rec);
        }
    }

    fn think(
        &self,
        assessment: &SufficiencyAssessment,
        trial: &EvidenceTrial,
        _objects: &LearningObjectSet,
        _knowledge: &KnowledgeState<EvidenceTrial>,
        strategy: &ThinkingStrategy<SelectionStrategy>,
        env: &mut EvidenceWorld,
        rng: &mut SimRng,
    ) -> Result<LearningPlan, LoopError> {
        let pool = eligible(trial.scope);
        let source = if rng.gen::<f64>() < env.params.epsilon(trial.index) {
            pool[rng.gen_range(0..pool.len())]
        } else {
            strategy.params.best(trial.task, &pool, env.params.untried_prior)
        };
        let mut target = assessment.deficit.clone().expect("engine only thinks on a deficit");
        target.detail = source.name().into();
        Ok(LearningPlan {
            target,
            evidence_requests: vec![EvidenceRequest {
                source: source.name().into(),
                quantity: 1,
                cost_estimate: source.cost(),
            }],
            verification_protocol: BTreeMap::new(),
        })
    }

    fn collect(
        &self,
        plan: &LearningPlan,
        trial: &EvidenceTrial,
        _knowledge: &KnowledgeState<EvidenceTrial>,
        _env: &mut EvidenceWorld,
        _rng: &mut SimRng,
    ) -> Result<EvidenceBatch<EvidenceSource>, LoopError> {
        let source = EvidenceSource::ALL
            .iter()
            .copied()
            .find(|s| s.name() == plan.evidence_requests[0].source)
            .ok_or_else(|| LoopError::operator("collect", "unknown evidence source"))?;
        let origin = match source.pool() {
            SourcePool::Direct => EvidenceOrigin::CurrentObservation,
            SourcePool::Historical => EvidenceOrigin::HistoricalMemory,
        };
        let mut batch = EvidenceBatch::new();
        batch.push(EvidenceItem {
            payload: source,
            source: source.name().into(),
            origin,
            cost: source.cost(),
        });
        let _ = trial;
        Ok(batch)
    }

    fn construct_data(
        &self,
        batch: &EvidenceBatch<EvidenceSource>,
        plan: &LearningPlan,
        _knowledge: &KnowledgeState<EvidenceTrial>,
    ) -> Result<LearningMaterials, LoopError> {
        Ok(LearningMaterials {
            target: plan.target.clone(),
            train: (0..batch.len()).collect(),
            validation: Vec::new(),
        })
    }

    fn learn(
        &self,
        materials: &LearningMaterials,
        batch: &EvidenceBatch<EvidenceSource>,
        _objects: &LearningObjectSet,
        env: &mut EvidenceWorld,
    ) -> Result<LearningResult, LoopError> {
        let source = batch.items()[materials.train[0]].payload;
        // The trial being served is the one most recently observed.
        let index = env.cursor - 1;
        let trial = EvidenceTrial {
            index,
            task: env.params.task_of(index),
            scope: env.params.is_scope_trial(index),
        };
        Ok(LearningResult {
            candidate: CandidateUpdate::ReplaceRoutine(ActionRoutine {
                actions: vec![source.token()],
                goal: trial.goal(),
            }),
            fit_metrics: Diagnostics::new(),
        })
    }

    fn verify(
        &self,
        result: &LearningResult,
        _batch: &EvidenceBatch<EvidenceSource>,
        _knowledge: &KnowledgeState<EvidenceTrial>,
        env: &mut EvidenceWorld,
        rng: &mut SimRng,
    ) -> Verdict {
        let CandidateUpdate::ReplaceRoutine(routine) = &result.candidate else {
            return Verdict::insufficient(0.0);
        };
        let (Some(task), Some(source)) = (
            task_of_goal(routine.goal),
            routine.actions.first().and_then(|&t| EvidenceSource::from_token(t)),
        ) else {
            return Verdict::insufficient(0.0);
        };
        let index = env.cursor - 1;
        let scope = env.params.is_scope_trial(index);
        let useful = verify_selection(task, source, &env.params.usefulness);
        let seen = reported(useful, env.params.feedback_flip, rng);
        let rec = env.memory.record(index, task, source, scope, useful, seen);
        env.records.push(rec);
        if seen {
            Verdict::pass(1.0)
        } else {
            Verdict::fail(0.0)
        }
    }

    fn improve_thinking(
        &self,
        strategy: &SelectionStrategy,
        _knowledge: &KnowledgeState<EvidenceTrial>,
        result: &LearningResult,
        verdict: &Verdict,
    ) -> SelectionStrategy {
        let mut next = strategy.clone();
        if let CandidateUpdate::ReplaceRoutine(routine) = &result.candidate {
            if let (Some(task), Some(source)) = (
                task_of_goal(routine.goal),
                routine.actions.first().and_then(|&t| EvidenceSource::from_token(t)),
            ) {
                next.observe(task, source, if verdict.accepted { 1.0 } else { 0.0 });
            }
        }
        next
    }
}

pub fn run_proposed(
    params: &EvidenceParams,
    rng: &mut SimRng,
) -> Result<(LoopState<EvidenceTrial, SelectionStrategy>, EvidenceWorld), crate::error::EpisodeError> {
    let mut world = EvidenceWorld::new(params);
    let state = LoopState::new(initial_objects(), SelectionStrategy::default());
    let horizon = params.trials.max(1) as u64;
    let episode = run_episode(state, &mut world, &EvidenceOperators, horizon, rng)?;
    Ok((episode.final_state, world))
}

pub fn run_evidence_method(method: EvidenceMethod, params: &EvidenceParams, seed: u64) -> EvidenceRoundResult {
    let mut rng = seeded(seed);
    match method {
        EvidenceMethod::NoImprovement => uniform_baseline(params, &mut rng, false),
        EvidenceMethod::MemoryOnly => uniform_baseline(params, &mut rng, true),
        EvidenceMethod::Proposed => {
            let (_, world) = run_proposed(params, &mut rng).expect("evidence operators uphold the loop contracts");
            EvidenceRoundResult::from_records(world.records)
        }
    }
}
