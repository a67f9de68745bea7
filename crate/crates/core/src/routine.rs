//! Washing-machine device model and action-routine reconstruction.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    run_episode, Diagnostics, EvidenceBatch, EvidenceItem, EvidenceOrigin, EvidenceRequest,
    KnowledgeState, LearningMaterials, LearningPlan, LearningResult, LoopState, Operators,
    SufficiencyAssessment, ThinkingStrategy, UpdateComponent, UpdateTarget, Verdict,
};
use crate::error::LoopError;
use crate::objects::{ActionRoutine, ActionToken, CandidateUpdate, GoalId, LearningObjectSet, ModelHandle};
use crate::rng::{seeded, SimRng};
use crate::scenario::MetricMap;

pub const ROUTINE_CAP: usize = 20;
pub const LEGACY_LENGTH: usize = 13;
pub const QUICK_WASH_GOAL: GoalId = GoalId(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    PowerOn,
    PressProgram,
    ObserveMode,
    Judge,
    Confirm,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::PowerOn,
        Action::PressProgram,
        Action::ObserveMode,
        Action::Judge,
        Action::Confirm,
    ];

    pub fn token(self) -> ActionToken {
        ActionToken(self as u16)
    }

    pub fn from_token(t: ActionToken) -> Option<Self> {
        Action::ALL.get(t.0 as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::PowerOn => "power_on",
            Action::PressProgram => "press_program",
            Action::ObserveMode => "observe_mode",
            Action::Judge => "judge",
            Action::Confirm => "confirm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WashMode {
    Standard,
    Heavy,
    Quick,
    Rinse,
    Spin,
}

impl WashMode {
    pub const ORDER: [WashMode; 5] = [
        WashMode::Standard,
        WashMode::Heavy,
        WashMode::Quick,
        WashMode::Rinse,
        WashMode::Spin,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineState {
    pub power: bool,
    pub mode_index: u8,
    pub confirmed: Option<WashMode>,
}

impl MachineState {
    pub fn off() -> Self {
        MachineState {
            power: false,
            mode_index: 0,
            confirmed: None,
        }
    }

    pub fn mode(&self) -> WashMode {
        WashMode::ORDER[self.mode_index as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MachineObservation {
    Unpowered,
    Ack,
    Mode(WashMode),
    Judgement(bool),
    Confirmed(WashMode),
}

/// Deterministic device transition.
pub fn step_machine(state: MachineState, action: Action) -> (MachineState, MachineObservation) {
    if state.confirmed.is_some() {
        return (state, MachineObservation::Ack);
    }
    if !state.power && action != Action::PowerOn {
        return (state, MachineObservation::Unpowered);
    }
    let mut next = state;
    let obs = match action {
        Action::PowerOn => {
            next.power = true;
            next.mode_index = 0;
            MachineObservation::Ack
        }
        Action::PressProgram => {
            next.mode_index = (state.mode_index + 1) % 5;
            MachineObservation::Ack
        }
        Action::ObserveMode => MachineObservation::Mode(state.mode()),
        Action::Judge => MachineObservation::Judgement(state.mode() == WashMode::Quick),
        Action::Confirm => {
            next.confirmed = Some(state.mode());
            MachineObservation::Confirmed(state.mode())
        }
    };
    (next, obs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub steps: Vec<(Action, MachineObservation)>,
    pub success: bool,
}

impl ExecutionTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|(a, _)| *a).collect()
    }
}

/// Runs `actions` from the off state. Execution stops at the first Confirm.
pub fn execute_routine(actions: &[Action]) -> ExecutionTrace {
    let mut state = MachineState::off();
    let mut steps = Vec::with_capacity(actions.len());
    for &a in actions.iter().take(ROUTINE_CAP) {
        let (next, obs) = step_machine(state, a);
        state = next;
        steps.push((a, obs));
        if a == Action::Confirm {
            break;
        }
    }
    ExecutionTrace {
        steps,
        success: state.confirmed == Some(WashMode::Quick),
    }
}

/// PowerOn followed by four press/observe/judge triples, with no Confirm.
pub fn legacy_routine() -> Vec<Action> {
    let mut r = vec![Action::PowerOn];
    for _ in 0..4 {
        r.extend([Action::PressProgram, Action::ObserveMode, Action::Judge]);
    }
    r
}

/// Power on, then observe/judge and press until the judge reports Quick,
/// then confirm.
pub fn reactive_episode() -> ExecutionTrace {
    let mut actions = vec![Action::PowerOn];
    let mut state = step_machine(MachineState::off(), Action::PowerOn).0;
    for _ in 0..5 {
        actions.extend([Action::ObserveMode, Action::Judge]);
        if state.mode() == WashMode::Quick {
            break;
        }
        actions.push(Action::PressProgram);
        state = step_machine(state, Action::PressProgram).0;
    }
    actions.push(Action::Confirm);
    execute_routine(&actions)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutineError {
    #[error("no successful routine of length at most {0}")]
    NoSolution(usize),
    #[error("oracle search length {0} exceeds the limit of 8")]
    SearchTooLarge(usize),
    #[error("no successful trace to compress")]
    NoSuccessfulTrace,
}

/// Lexicographically first shortest successful routine, by exhaustive search.
pub fn minimal_routine_oracle(max_len: usize) -> Result<Vec<Action>, RoutineError> {
    if max_len > 8 {
        return Err(RoutineError::SearchTooLarge(max_len));
    }
    for len in 1..=max_len {
        // Counting in base 5 with the first action most significant walks
        // sequences of one length in lexicographic order.
        for code in 0..5usize.pow(len as u32) {
            let mut rest = code;
            let mut candidate = vec![Action::PowerOn; len];
            for slot in candidate.iter_mut().rev() {
                *slot = Action::ALL[rest % 5];
                rest /= 5;
            }
            let trace = execute_routine(&candidate);
            if trace.success && trace.len() == len {
                return Ok(candidate);
            }
        }
    }
    Err(RoutineError::NoSolution(max_len))
}

/// Greedy deletion of observe/judge steps from the shortest successful trace,
/// then `k_verify` re-executions of the result.
pub fn compress_routine(
    traces: &[ExecutionTrace],
    k_verify: usize,
) -> Result<(Vec<Action>, Verdict), RoutineError> {
    let source = traces
        .iter()
        .filter(|t| t.success)
        .min_by_key(|t| t.len())
        .ok_or(RoutineError::NoSuccessfulTrace)?;
    let mut candidate = source.actions();
    let mut i = 0;
    while i < candidate.len() {
        if matches!(candidate[i], Action::ObserveMode | Action::Judge) {
            let mut shorter = candidate.clone();
            shorter.remove(i);
            if execute_routine(&shorter).success {
                candidate = shorter;
                continue;
            }
        }
        i += 1;
    }
    let verdict = verify_routine(&candidate, source.len(), k_verify);
    Ok((candidate, verdict))
}

fn verify_routine(candidate: &[Action], source_len: usize, k_verify: usize) -> Verdict {
    let passes = (0..k_verify)
        .filter(|_| execute_routine(candidate).success)
        .count();
    let rate = if k_verify == 0 { 0.0 } else { passes as f64 / k_verify as f64 };
    if k_verify > 0 && passes == k_verify && candidate.len() <= source_len {
        Verdict::pass(rate)
    } else {
        Verdict::fail(rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutineParams {
    pub trial_budget: u32,
    pub random_min_len: usize,
    pub random_max_len: usize,
    pub distractor_probability: f64,
    pub exploration_episodes: u32,
    pub k_verify: usize,
    pub horizon: u64,
}

impl Default for RoutineParams {
    fn default() -> Self {
        RoutineParams {
            trial_budget: 10,
            random_min_len: 3,
            random_max_len: 13,
            distractor_probability: 0.3,
            exploration_episodes: 4,
            k_verify: 5,
            horizon: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoutineMethod {
    FixedRoutine,
    RandomSearch,
    RlLike,
    Proposed,
}

impl RoutineMethod {
    pub const ALL: [RoutineMethod; 4] = [
        RoutineMethod::FixedRoutine,
        RoutineMethod::RandomSearch,
        RoutineMethod::RlLike,
        RoutineMethod::Proposed,
    ];

    pub fn key(self) -> &'static str {
        match self {
            RoutineMethod::FixedRoutine => "fixed",
            RoutineMethod::RandomSearch => "random",
            RoutineMethod::RlLike => "rl_like",
            RoutineMethod::Proposed => "proposed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutineRoundResult {
    pub success: bool,
    pub final_length: usize,
    pub adaptation_time: u32,
    pub failed_trials: u32,
    pub final_routine: Vec<Action>,
}

impl RoutineRoundResult {
    pub fn compression_ratio(&self) -> f64 {
        if self.success {
            1.0 - self.final_length as f64 / LEGACY_LENGTH as f64
        } else {
            0.0
        }
    }

    pub fn failed_trial_rate(&self) -> f64 {
        if self.adaptation_time == 0 {
            0.0
        } else {
            self.failed_trials as f64 / self.adaptation_time as f64
        }
    }

    pub fn metrics(&self) -> MetricMap {
        let mut m = MetricMap::new();
        m.insert("succ".into(), if self.success { 1.0 } else { 0.0 });
        m.insert("len".into(), self.final_length as f64);
        m.insert("time".into(), self.adaptation_time as f64);
        m.insert("comp".into(), self.compression_ratio());
        m.insert("fail".into(), self.failed_trial_rate());
        m
    }
}

fn tokens(actions: &[Action]) -> Vec<ActionToken> {
    actions.iter().map(|a| a.token()).collect()
}

fn actions_of(routine: &ActionRoutine) -> Vec<Action> {
    routine.actions.iter().filter_map(|&t| Action::from_token(t)).collect()
}

pub fn initial_objects() -> LearningObjectSet {
    LearningObjectSet::new(
        Default::default(),
        Default::default(),
        ModelHandle::empty(),
        vec![ActionRoutine {
            actions: tokens(&legacy_routine()),
            goal: QUICK_WASH_GOAL,
        }],
    )
    .expect("legacy routine objects are consistent")
}

/// Trial bookkeeping for the loop-driven method.
#[derive(Debug, Clone, Default)]
pub struct RoutineWorld {
    pub params: RoutineParams,
    pub trials: u32,
    pub failed_trials: u32,
    pub executions: Vec<ExecutionTrace>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutineStrategy {
    pub accepted_lengths: Vec<usize>,
    pub rejected: u32,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RoutineOperators;

fn current_routine(objects: &LearningObjectSet) -> Vec<Action> {
    objects.routine_for(QUICK_WASH_GOAL).map(actions_of).unwrap_or_default()
}

impl Operators for RoutineOperators {
    type Env = RoutineWorld;
    type Observation = MachineState;
    type Evidence = ExecutionTrace;
    type Strategy = RoutineStrategy;

    fn observe(&self, _env: &mut RoutineWorld, _rng: &mut SimRng) -> Result<MachineState, LoopError> {
        Ok(MachineState::off())
    }

    fn evaluate(
        &self,
        _observation: &MachineState,
        objects: &LearningObjectSet,
        _knowledge: &KnowledgeState<MachineState>,
        _env: &mut RoutineWorld,
    ) -> SufficiencyAssessment {
        let trace = execute_routine(&current_routine(objects));
        let mut d = Diagnostics::new();
        d.insert("success".into(), if trace.success { 1.0 } else { 0.0 });
        d.insert("length".into(), trace.len() as f64);
        if trace.success {
            SufficiencyAssessment::sufficient(d)
        } else {
            SufficiencyAssessment::deficit(
                UpdateTarget {
                    component: UpdateComponent::Routine,
                    detail: "routine no longer reaches quick wash".into(),
                },
                d,
            )
        }
    }

    fn execute(&self, _observation: &MachineState, objects: &LearningObjectSet, env: &mut RoutineWorld) {
        env.executions.push(execute_routine(&current_routine(objects)));
    }

    fn think(
        &self,
        assessment: &SufficiencyAssessment,
        _observation: &MachineState,
        _objects: &LearningObjectSet,
        _knowledge: &KnowledgeState<MachineState>,
        _strategy: &ThinkingStrategy<RoutineStrategy>,
        env: &mut RoutineWorld,
        _rng: &mut SimRng,
    ) -> Result<LearningPlan, LoopError> {
        let n = env.params.exploration_episodes;
        let mut protocol = BTreeMap::new();
        protocol.insert("k_verify".into(), env.params.k_verify as f64);
        Ok(LearningPlan {
            target: assessment.deficit.clone().expect("engine only thinks on a deficit"),
            evidence_requests: vec![EvidenceRequest {
                source: "reactive_exploration".into(),
                quantity: n,
                cost_estimate: n as f64,
            }],
            verification_protocol: protocol,
        })
    }

    fn collect(
        &self,
        plan: &LearningPlan,
        _observation: &MachineState,
        _knowledge: &KnowledgeState<MachineState>,
        env: &mut RoutineWorld,
        _rng: &mut SimRng,
    ) -> Result<EvidenceBatch<ExecutionTrace>, LoopError> {
        let mut batch = EvidenceBatch::new();
        for req in &plan.evidence_requests {
            for _ in 0..req.quantity {
                let trace = reactive_episode();
                env.trials += 1;
                if !trace.success {
                    env.failed_trials += 1;
                }
                batch.push(EvidenceItem {
                    payload: trace,
                    source: req.source.clone(),
                    origin: EvidenceOrigin::ActiveInteraction,
                    cost: 1.0,
                });
            }
        }
        Ok(batch)
    }

    fn construct_data(
        &self,
        batch: &EvidenceBatch<ExecutionTrace>,
        plan: &LearningPlan,
        _knowledge: &KnowledgeState<MachineState>,
    ) -> Result<LearningMaterials, LoopError> {
        let train: Vec<usize> = batch
            .items()
            .iter()
            .enumerate()
            .filter(|(_, i)| i.payload.success)
            .map(|(k, _)| k)
            .collect();
        Ok(LearningMaterials {
            target: plan.target.clone(),
            train,
            validation: Vec::new(),
        })
    }

    fn learn(
        &self,
        materials: &LearningMaterials,
        batch: &EvidenceBatch<ExecutionTrace>,
        _objects: &LearningObjectSet,
        _env: &mut RoutineWorld,
    ) -> Result<LearningResult, LoopError> {
        let traces: Vec<ExecutionTrace> = materials
            .train
            .iter()
            .map(|&k| batch.items()[k].payload.clone())
            .collect();
        let (candidate, _) = compress_routine(&traces, 0)
            .map_err(|e| LoopError::operator("learn", alloc::format!("{e}")))?;
        let mut fit = Diagnostics::new();
        fit.insert("source_length".into(), traces.iter().map(|t| t.len()).min().unwrap_or(0) as f64);
        fit.insert("candidate_length".into(), candidate.len() as f64);
        Ok(LearningResult {
            candidate: CandidateUpdate::ReplaceRoutine(ActionRoutine {
                actions: tokens(&candidate),
                goal: QUICK_WASH_GOAL,
            }),
            fit_metrics: fit,
        })
    }

    fn verify(
        &self,
        result: &LearningResult,
        batch: &EvidenceBatch<ExecutionTrace>,
        _knowledge: &KnowledgeState<MachineState>,
        env: &mut RoutineWorld,
        _rng: &mut SimRng,
    ) -> Verdict {
        let CandidateUpdate::ReplaceRoutine(routine) = &result.candidate else {
            return Verdict::insufficient(0.0);
        };
        let Some(source_len) = batch.items().iter().filter(|i| i.payload.success).map(|i| i.payload.len()).min()
        else {
            return Verdict::insufficient(0.0);
        };
        let verdict = verify_routine(&actions_of(routine), source_len, env.params.k_verify);
        // The k re-executions count as one verification pass.
        env.trials += 1;
        if !verdict.accepted {
            env.failed_trials += 1;
        }
        verdict
    }

    fn improve_thinking(
        &self,
        strategy: &RoutineStrategy,
        _knowledge: &KnowledgeState<MachineState>,
        result: &LearningResult,
        verdict: &Verdict,
    ) -> RoutineStrategy {
        let mut next = strategy.clone();
        if verdict.accepted {
            if let CandidateUpdate::ReplaceRoutine(r) = &result.candidate {
                next.accepted_lengths.push(r.actions.len());
            }
        } else {
            next.rejected += 1;
        }
        next
    }
}

fn random_search(params: &RoutineParams, rng: &mut SimRng) -> RoutineRoundResult {
    let mut failed = 0;
    for trial in 1..=params.trial_budget {
        let len = rng.gen_range(params.random_min_len..=params.random_max_len);
        let actions: Vec<Action> = (0..len).map(|_| Action::ALL[rng.gen_range(0..5)]).collect();
        let trace = execute_routine(&actions);
        if trace.success {
            return RoutineRoundResult {
                success: true,
                final_length: trace.len(),
                adaptation_time: trial,
                failed_trials: failed,
                final_routine: trace.actions(),
            };
        }
        failed += 1;
    }
    RoutineRoundResult {
        success: false,
        final_length: LEGACY_LENGTH,
        adaptation_time: params.trial_budget,
        failed_trials: failed,
        final_routine: legacy_routine(),
    }
}

/// Iterates press-count hypotheses; a trial whose failure may be due to an
/// injected distractor retries the same hypothesis. The reported routine is
/// the one that actually succeeded, distractor included.
fn rl_like(params: &RoutineParams, rng: &mut SimRng) -> RoutineRoundResult {
    let mut presses = 1usize;
    let mut failed = 0;
    for trial in 1..=params.trial_budget {
        let mut actions = vec![Action::PowerOn];
        actions.extend(core::iter::repeat_n(Action::PressProgram, presses));
        actions.push(Action::Confirm);
        let distracted = rng.gen::<f64>() < params.distractor_probability;
        if distracted {
            let at = rng.gen_range(1..actions.len());
            actions.insert(at, Action::ALL[rng.gen_range(0..5)]);
        }
        let trace = execute_routine(&actions);
        if trace.success {
            return RoutineRoundResult {
                success: true,
                final_length: trace.len(),
                adaptation_time: trial,
                failed_trials: failed,
                final_routine: trace.actions(),
            };
        }
        failed += 1;
        if !distracted {
            presses += 1;
        }
    }
    RoutineRoundResult {
        success: false,
        final_length: LEGACY_LENGTH,
        adaptation_time: params.trial_budget,
        failed_trials: failed,
        final_routine: legacy_routine(),
    }
}

/// Drives the loop over `params.horizon` steps from the legacy routine.
pub fn run_proposed(
    params: &RoutineParams,
    rng: &mut SimRng,
) -> Result<(LoopState<MachineState, RoutineStrategy>, RoutineWorld), crate::error::EpisodeError> {
    let mut world = RoutineWorld {
        params: params.clone(),
        ..Default::default()
    };
    let state = LoopState::new(initial_objects(), RoutineStrategy::default());
    let episode = run_episode(state, &mut world, &RoutineOperators, params.horizon.max(1), rng)?;
    Ok((episode.final_state, world))
}

pub fn run_routine_method(method: RoutineMethod, params: &RoutineParams, seed: u64) -> RoutineRoundResult {
    let mut rng = seeded(seed);
    match method {
        RoutineMethod::FixedRoutine => {
            let trace = execute_routine(&legacy_routine());
            RoutineRoundResult {
                success: trace.success,
                final_length: trace.len(),
                adaptation_time: 0,
                failed_trials: 0,
                final_routine: trace.actions(),
            }
        }
        RoutineMethod::RandomSearch => random_search(params, &mut rng),
        RoutineMethod::RlLike => rl_like(params, &mut rng),
        RoutineMethod::Proposed => {
            let (state, world) =
                run_proposed(params, &mut rng).expect("routine operators uphold the loop contracts");
            let routine = current_routine(&state.objects);
            let trace = execute_routine(&routine);
            RoutineRoundResult {
                success: trace.success,
                final_length: routine.len(),
                adaptation_time: world.trials,
                failed_trials: world.failed_trials,
                final_routine: routine,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Action::*;

    #[test]
    fn unpowered_observe_is_noop() {
        let (s, o) = step_machine(MachineState::off(), ObserveMode);
        assert_eq!(s, MachineState::off());
        assert_eq!(o, MachineObservation::Unpowered);
    }

    #[test]
    fn two_presses_reach_quick() {
        let t = execute_routine(&[PowerOn, PressProgram, PressProgram, ObserveMode]);
        assert_eq!(t.steps.last().unwrap().1, MachineObservation::Mode(WashMode::Quick));
    }

    #[test]
    fn five_presses_wrap() {
        let mut s = step_machine(MachineState::off(), PowerOn).0;
        for _ in 0..5 {
            s = step_machine(s, PressProgram).0;
        }
        assert_eq!(s.mode_index, 0);
    }

    #[test]
    fn legacy_fails_with_full_length() {
        let t = execute_routine(&legacy_routine());
        assert!(!t.success);
        assert_eq!(t.len(), 13);
    }

    #[test]
    fn short_routine_succeeds_and_confirm_standard_fails() {
        let t = execute_routine(&[PowerOn, PressProgram, PressProgram, Confirm]);
        assert!(t.success);
        assert_eq!(t.len(), 4);
        assert!(!execute_routine(&[PowerOn, Confirm]).success);
    }

    #[test]
    fn reactive_trace_has_ten_steps() {
        let t = reactive_episode();
        assert!(t.success);
        assert_eq!(
            t.actions(),
            vec![PowerOn, ObserveMode, Judge, PressProgram, ObserveMode, Judge, PressProgram, ObserveMode, Judge, Confirm]
        );
    }

    #[test]
    fn compress_reactive_to_four() {
        let (c, v) = compress_routine(&[reactive_episode()], 5).unwrap();
        assert_eq!(c, vec![PowerOn, PressProgram, PressProgram, Confirm]);
        assert!(v.accepted);
    }

    #[test]
    fn compress_fixed_point_and_empty() {
        let minimal = execute_routine(&[PowerOn, PressProgram, PressProgram, Confirm]);
        let (c, v) = compress_routine(core::slice::from_ref(&minimal), 5).unwrap();
        assert_eq!(c, minimal.actions());
        assert!(v.accepted);
        assert_eq!(compress_routine(&[], 5), Err(RoutineError::NoSuccessfulTrace));
    }

    #[test]
    fn oracle_rejects_large_search() {
        assert_eq!(minimal_routine_oracle(9), Err(RoutineError::SearchTooLarge(9)));
    }

    #[test]
    fn fixed_method_row() {
        let r = run_routine_method(RoutineMethod::FixedRoutine, &RoutineParams::default(), 1);
        let m = r.metrics();
        assert_eq!(m["succ"], 0.0);
        assert_eq!(m["len"], 13.0);
        assert_eq!(m["time"], 0.0);
        assert_eq!(m["comp"], 0.0);
        assert_eq!(m["fail"], 0.0);
    }

    #[test]
    fn proposed_method_row() {
        let r = run_routine_method(RoutineMethod::Proposed, &RoutineParams::default(), 3);
        assert!(r.success);
        assert_eq!(r.final_length, 4);
        assert_eq!(r.adaptation_time, 5);
        assert_eq!(r.failed_trials, 0);
        assert!((r.compression_ratio() - (1.0 - 4.0 / 13.0)).abs() < 1e-12);
    }

    #[test]
    fn rl_like_reports_a_working_routine() {
        for seed in 0..20 {
            let r = run_routine_method(RoutineMethod::RlLike, &RoutineParams::default(), seed);
            if r.success {
                assert!(r.final_length >= 4);
                assert!(execute_routine(&r.final_routine).success);
                assert_eq!(r.failed_trials + 1, r.adaptation_time);
            }
        }
    }
}
