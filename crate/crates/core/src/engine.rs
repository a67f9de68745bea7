//! Scenario-agnostic closed loop.
//!
//! One [`run_step`] executes the branch structure below; every box is an
//! [`Operators`] slot filled in by a scenario.
//!
//! ```text
//! observe ─► evaluate ─┬─ sufficient ─► execute, K += observation
//!                      └─ deficit ───► think ─► collect ─► construct_data
//!                                      ─► learn ─► verify ─► apply_update (accepted only)
//!                                      ─► K += (result, verdict, u) ─► improve_thinking
//! ```
//!
//! Random draws follow a fixed order per step: the environment's `observe`
//! draws first, then the agent operators in slot order.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{EpisodeError, LoopError};
use crate::objects::{apply_update, CandidateUpdate, LearningObjectSet};
use crate::rng::SimRng;

pub type Diagnostics = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictReason {
    PassedThreshold,
    FailedThreshold,
    InsufficientEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub accepted: bool,
    pub score: f64,
    pub reason: VerdictReason,
}

impl Verdict {
    pub fn pass(score: f64) -> Self {
        Verdict {
            accepted: true,
            score,
            reason: VerdictReason::PassedThreshold,
        }
    }

    pub fn fail(score: f64) -> Self {
        Verdict {
            accepted: false,
            score,
            reason: VerdictReason::FailedThreshold,
        }
    }

    pub fn insufficient(score: f64) -> Self {
        Verdict {
            accepted: false,
            score,
            reason: VerdictReason::InsufficientEvidence,
        }
    }

    pub fn is_consistent(&self) -> bool {
        !self.accepted || self.reason == VerdictReason::PassedThreshold
    }
}

/// Which member of the learning-object quintuple needs revision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateComponent {
    InputFeatures,
    OutputSet,
    Model,
    Routine,
    Relation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateTarget {
    pub component: UpdateComponent,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyAssessment {
    pub sufficient: bool,
    pub deficit: Option<UpdateTarget>,
    pub diagnostics: Diagnostics,
}

impl SufficiencyAssessment {
    pub fn sufficient(diagnostics: Diagnostics) -> Self {
        SufficiencyAssessment {
            sufficient: true,
            deficit: None,
            diagnostics,
        }
    }

    pub fn deficit(target: UpdateTarget, diagnostics: Diagnostics) -> Self {
        SufficiencyAssessment {
            sufficient: false,
            deficit: Some(target),
            diagnostics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRequest {
    pub source: String,
    pub quantity: u32,
    pub cost_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningPlan {
    pub target: UpdateTarget,
    pub evidence_requests: Vec<EvidenceRequest>,
    /// Threshold name → value used by Verify.
    pub verification_protocol: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvidenceOrigin {
    CurrentObservation,
    HistoricalMemory,
    ActiveInteraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem<E> {
    pub payload: E,
    pub source: String,
    pub origin: EvidenceOrigin,
    pub cost: f64,
}

/// Collected evidence; `total_cost` is maintained as the running sum of item
/// costs in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBatch<E> {
    items: Vec<EvidenceItem<E>>,
    total_cost: f64,
}

impl<E> Default for EvidenceBatch<E> {
    fn default() -> Self {
        EvidenceBatch {
            items: Vec::new(),
            total_cost: 0.0,
        }
    }
}

impl<E> EvidenceBatch<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, item: EvidenceItem<E>) {
        self.total_cost += item.cost;
        self.items.push(item);
    }

    pub fn items(&self) -> &[EvidenceItem<E>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    pub fn is_consistent(&self) -> bool {
        let sum: f64 = self.items.iter().map(|i| i.cost).sum();
        self.items.iter().all(|i| i.cost >= 0.0) && sum == self.total_cost
    }
}

impl<E> FromIterator<EvidenceItem<E>> for EvidenceBatch<E> {
    fn from_iter<I: IntoIterator<Item = EvidenceItem<E>>>(iter: I) -> Self {
        let mut batch = EvidenceBatch::new();
        for item in iter {
            batch.push(item);
        }
        batch
    }
}

/// Train/validation split expressed as indices into the source batch, so
/// every item traces back to collected evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningMaterials {
    pub target: UpdateTarget,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl LearningMaterials {
    pub fn traces_to<E>(&self, batch: &EvidenceBatch<E>) -> bool {
        self.train
            .iter()
            .chain(&self.validation)
            .all(|&i| i < batch.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningResult {
    pub candidate: CandidateUpdate,
    pub fit_metrics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KnowledgeRecord<O> {
    Observation(O),
    Learned(LearningResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry<O> {
    pub record: KnowledgeRecord<O>,
    /// u_t in [0, 1].
    pub usefulness: f64,
    pub verdict: Option<Verdict>,
    pub time_step: u64,
}

/// Append-only knowledge K_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeState<O> {
    entries: Vec<KnowledgeEntry<O>>,
}

impl<O> Default for KnowledgeState<O> {
    fn default() -> Self {
        KnowledgeState {
            entries: Vec::new(),
        }
    }
}

impl<O> KnowledgeState<O> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[KnowledgeEntry<O>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn record_observation(&mut self, observation: O, time_step: u64) {
        self.entries.push(KnowledgeEntry {
            record: KnowledgeRecord::Observation(observation),
            usefulness: 0.0,
            verdict: None,
            time_step,
        });
    }

    /// UpdateKnowledge with the usefulness score folded in.
    pub fn record_result(&mut self, result: LearningResult, verdict: Verdict, time_step: u64) {
        let usefulness = assess(&result, &verdict);
        self.entries.push(KnowledgeEntry {
            record: KnowledgeRecord::Learned(result),
            usefulness,
            verdict: Some(verdict),
            time_step,
        });
    }

    /// Learned entries with their verdicts, oldest first.
    pub fn learned(&self) -> impl Iterator<Item = (&LearningResult, &Verdict)> {
        self.entries.iter().filter_map(|e| match (&e.record, &e.verdict) {
            (KnowledgeRecord::Learned(r), Some(v)) => Some((r, v)),
            _ => None,
        })
    }
}

/// u_t: 0 for rejected results, 1 for accepted improvements, otherwise the
/// `fit` metric clamped to [0, 1].
pub fn assess(result: &LearningResult, verdict: &Verdict) -> f64 {
    if !verdict.accepted {
        0.0
    } else if verdict.score > 0.0 {
        1.0
    } else {
        result
            .fit_metrics
            .get("fit")
            .copied()
            .unwrap_or(0.0)
            .clamp(0.0, 1.0)
    }
}

/// Φ_t: scenario parameters plus a version bumped on every ImproveThinking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinkingStrategy<P> {
    pub params: P,
    version: u64,
}

impl<P> ThinkingStrategy<P> {
    pub fn new(params: P) -> Self {
        ThinkingStrategy { params, version: 0 }
    }

    pub fn version(&self) -> u64 {
        self.version
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopState<O, P> {
    pub time_step: u64,
    pub objects: LearningObjectSet,
    pub knowledge: KnowledgeState<O>,
    pub strategy: ThinkingStrategy<P>,
}

impl<O, P> LoopState<O, P> {
    pub fn new(objects: LearningObjectSet, strategy: P) -> Self {
        LoopState {
            time_step: 0,
            objects,
            knowledge: KnowledgeState::new(),
            strategy: ThinkingStrategy::new(strategy),
        }
    }
}

/// The operator slots of the loop. The loop engine calls them in a fixed
/// order and enforces the cross-slot contracts (non-empty plans, traceable
/// materials, well-formed candidates, consistent verdicts).
pub trait Operators {
    type Env;
    type Observation: Clone + Debug + PartialEq;
    type Evidence: Clone + Debug + PartialEq;
    type Strategy: Clone + Debug + PartialEq;

    fn observe(&self, env: &mut Self::Env, rng: &mut SimRng)
        -> Result<Self::Observation, LoopError>;

    fn evaluate(
        &self,
        observation: &Self::Observation,
        objects: &LearningObjectSet,
        knowledge: &KnowledgeState<Self::Observation>,
        env: &mut Self::Env,
    ) -> SufficiencyAssessment;

    /// Runs the current relation/model/routine on the sufficient branch.
    fn execute(
        &self,
        _observation: &Self::Observation,
        _objects: &LearningObjectSet,
        _env: &mut Self::Env,
    ) {
    }

    #[allow(clippy::too_many_arguments)]
    fn think(
        &self,
        assessment: &SufficiencyAssessment,
        observation: &Self::Observation,
        objects: &LearningObjectSet,
        knowledge: &KnowledgeState<Self::Observation>,
        strategy: &ThinkingStrategy<Self::Strategy>,
        env: &mut Self::Env,
        rng: &mut SimRng,
    ) -> Result<LearningPlan, LoopError>;

    fn collect(
        &self,
        plan: &LearningPlan,
        observation: &Self::Observation,
        knowledge: &KnowledgeState<Self::Observation>,
        env: &mut Self::Env,
        rng: &mut SimRng,
    ) -> Result<EvidenceBatch<Self::Evidence>, LoopError>;

    fn construct_data(
        &self,
        batch: &EvidenceBatch<Self::Evidence>,
        plan: &LearningPlan,
        knowledge: &KnowledgeState<Self::Observation>,
    ) -> Result<LearningMaterials, LoopError>;

    fn learn(
        &self,
        materials: &LearningMaterials,
        batch: &EvidenceBatch<Self::Evidence>,
        objects: &LearningObjectSet,
        env: &mut Self::Env,
    ) -> Result<LearningResult, LoopError>;

    fn verify(
        &self,
        result: &LearningResult,
        batch: &EvidenceBatch<Self::Evidence>,
        knowledge: &KnowledgeState<Self::Observation>,
        env: &mut Self::Env,
        rng: &mut SimRng,
    ) -> Verdict;

    fn improve_thinking(
        &self,
        strategy: &Self::Strategy,
        knowledge: &KnowledgeState<Self::Observation>,
        result: &LearningResult,
        verdict: &Verdict,
    ) -> Self::Strategy;
}

/// Everything a step produced, in pipeline order. Fields after `assessment`
/// are `None` on the sufficient branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace<O, E> {
    pub observation: O,
    pub assessment: SufficiencyAssessment,
    pub plan: Option<LearningPlan>,
    pub evidence: Option<EvidenceBatch<E>>,
    pub materials: Option<LearningMaterials>,
    pub result: Option<LearningResult>,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<O, E> {
    pub time_step: u64,
    pub applied: bool,
    pub objects_version: u64,
    pub strategy_version: u64,
    pub trace: StepTrace<O, E>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome<O, P, E> {
    pub state: LoopState<O, P>,
    pub record: StepRecord<O, E>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord<O, P, E> {
    pub final_state: LoopState<O, P>,
    pub steps: Vec<StepRecord<O, E>>,
}

pub type OpState<Op> = LoopState<<Op as Operators>::Observation, <Op as Operators>::Strategy>;
pub type OpStepOutcome<Op> = StepOutcome<
    <Op as Operators>::Observation,
    <Op as Operators>::Strategy,
    <Op as Operators>::Evidence,
>;
pub type OpEpisode<Op> = EpisodeRecord<
    <Op as Operators>::Observation,
    <Op as Operators>::Strategy,
    <Op as Operators>::Evidence,
>;

/// Executes one pass of the loop.
pub fn run_step<Op: Operators>(
    state: OpState<Op>,
    env: &mut Op::Env,
    ops: &Op,
    rng: &mut SimRng,
) -> Result<OpStepOutcome<Op>, LoopError> {
    state.objects.validate()?;
    let LoopState {
        time_step,
        objects,
        mut knowledge,
        mut strategy,
    } = state;

    let observation = ops.observe(env, rng)?;
    let assessment = ops.evaluate(&observation, &objects, &knowledge, env);
    if assessment.sufficient && assessment.deficit.is_some() {
        return Err(LoopError::InconsistentState(
            "sufficient assessment carries a deficit".into(),
        ));
    }

    if assessment.sufficient {
        ops.execute(&observation, &objects, env);
        knowledge.record_observation(observation.clone(), time_step);
        let record = StepRecord {
            time_step,
            applied: false,
            objects_version: objects.version(),
            strategy_version: strategy.version(),
            trace: StepTrace {
                observation,
                assessment,
                plan: None,
                evidence: None,
                materials: None,
                result: None,
                verdict: None,
            },
        };
        return Ok(StepOutcome {
            state: LoopState {
                time_step: time_step + 1,
                objects,
                knowledge,
                strategy,
            },
            record,
        });
    }

    if assessment.deficit.is_none() {
        return Err(LoopError::operator(
            "evaluate",
            "insufficient assessment without a deficit",
        ));
    }

    let plan = ops.think(
        &assessment,
        &observation,
        &objects,
        &knowledge,
        &strategy,
        env,
        rng,
    )?;
    if plan.evidence_requests.is_empty() {
        return Err(LoopError::operator("think", "plan has no evidence requests"));
    }

    let batch = ops.collect(&plan, &observation, &knowledge, env, rng)?;
    if batch.is_empty() {
        return Err(LoopError::operator(
            "collect",
            "no evidence returned for a non-empty plan",
        ));
    }
    if !batch.is_consistent() {
        return Err(LoopError::InconsistentState(
            "evidence batch total cost drifted from item costs".into(),
        ));
    }

    let materials = ops.construct_data(&batch, &plan, &knowledge)?;
    if !materials.traces_to(&batch) {
        return Err(LoopError::operator(
            "construct_data",
            "materials reference items outside the evidence batch",
        ));
    }

    let result = ops.learn(&materials, &batch, &objects, env)?;
    result.candidate.check_against(&objects)?;

    let verdict = ops.verify(&result, &batch, &knowledge, env, rng);
    if !verdict.is_consistent() {
        return Err(LoopError::operator(
            "verify",
            format!("accepted verdict with reason {:?}", verdict.reason),
        ));
    }

    let next_objects = apply_update(&objects, &result.candidate, &verdict)?;
    let applied = verdict.accepted;
    knowledge.record_result(result.clone(), verdict.clone(), time_step);
    let params = ops.improve_thinking(&strategy.params, &knowledge, &result, &verdict);
    strategy.params = params;
    strategy.version += 1;

    let record = StepRecord {
        time_step,
        applied,
        objects_version: next_objects.version(),
        strategy_version: strategy.version(),
        trace: StepTrace {
            observation,
            assessment,
            plan: Some(plan),
            evidence: Some(batch),
            materials: Some(materials),
            result: Some(result),
            verdict: Some(verdict),
        },
    };
    Ok(StepOutcome {
        state: LoopState {
            time_step: time_step + 1,
            objects: next_objects,
            knowledge,
            strategy,
        },
        record,
    })
}

/// Runs exactly `horizon` steps.
pub fn run_episode<Op: Operators>(
    initial: OpState<Op>,
    env: &mut Op::Env,
    ops: &Op,
    horizon: u64,
    rng: &mut SimRng,
) -> Result<OpEpisode<Op>, EpisodeError> {
    if horizon == 0 {
        return Err(EpisodeError {
            step: 0,
            source: LoopError::InconsistentState("horizon must be at least 1".into()),
        });
    }
    let mut state = initial;
    let mut steps = Vec::with_capacity(horizon as usize);
    for step in 0..horizon {
        let outcome =
            run_step(state, env, ops, rng).map_err(|source| EpisodeError { step, source })?;
        state = outcome.state;
        steps.push(outcome.record);
    }
    Ok(EpisodeRecord {
        final_state: state,
        steps,
    })
}
