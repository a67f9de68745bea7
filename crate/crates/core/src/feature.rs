//! Input-feature discovery over four object categories.
//!
//! Objects carry six discrete features; the agent starts with shape and size
//! and may add color, texture, position or weight. A categorical generative
//! table drives sampling, and [`bayes_oracle`] gives the exact attainable
//! accuracy of any feature subset by enumerating the joint value space.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    Diagnostics, EvidenceBatch, EvidenceItem, EvidenceOrigin, EvidenceRequest, KnowledgeState,
    LearningMaterials, LearningPlan, LearningResult, LoopState, Operators, SufficiencyAssessment,
    ThinkingStrategy, UpdateComponent, UpdateTarget, Verdict,
};
use crate::error::LoopError;
use crate::objects::{CandidateUpdate, CategoryId, FeatureId, LearningObjectSet, ModelHandle, ModelId};
use crate::rng::{categorical, seeded, SimRng};
use crate::scenario::MetricMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObjectCategory {
    Banana,
    Apple,
    Cup,
    Bottle,
}

impl ObjectCategory {
    pub const ALL: [ObjectCategory; 4] = [
        ObjectCategory::Banana,
        ObjectCategory::Apple,
        ObjectCategory::Cup,
        ObjectCategory::Bottle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn id(self) -> CategoryId {
        CategoryId(self as u16)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureName {
    Shape,
    Size,
    Color,
    Texture,
    Position,
    Weight,
}

impl FeatureName {
    pub const ALL: [FeatureName; 6] = [
        FeatureName::Shape,
        FeatureName::Size,
        FeatureName::Color,
        FeatureName::Texture,
        FeatureName::Position,
        FeatureName::Weight,
    ];
    pub const INITIAL: [FeatureName; 2] = [FeatureName::Shape, FeatureName::Size];
    pub const CANDIDATES: [FeatureName; 4] = [
        FeatureName::Color,
        FeatureName::Texture,
        FeatureName::Position,
        FeatureName::Weight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn id(self) -> FeatureId {
        FeatureId(self as u16)
    }

    pub fn from_id(id: FeatureId) -> Option<Self> {
        FeatureName::ALL.get(id.0 as usize).copied()
    }

    /// Value alphabet, in table column order.
    pub fn alphabet(self) -> &'static [&'static str] {
        match self {
            FeatureName::Shape => &["round", "elongated", "cylindrical"],
            FeatureName::Size => &["small", "medium", "large"],
            FeatureName::Color => &["yellow", "red", "white", "blue"],
            FeatureName::Texture => &["smooth", "rough"],
            FeatureName::Position => &["table", "shelf"],
            FeatureName::Weight => &["light", "heavy"],
        }
    }

    pub fn arity(self) -> usize {
        self.alphabet().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureName::Shape => "shape",
            FeatureName::Size => "size",
            FeatureName::Color => "color",
            FeatureName::Texture => "texture",
            FeatureName::Position => "position",
            FeatureName::Weight => "weight",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FeatureName::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSample {
    pub category: ObjectCategory,
    /// Value index per feature, in [`FeatureName::ALL`] order.
    pub values: [u8; 6],
}

impl ObjectSample {
    pub fn value(&self, feature: FeatureName) -> usize {
        self.values[feature.index()] as usize
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("feature subset is empty")]
    EmptyFeatureSet,
    #[error("generative table is malformed: {0}")]
    MalformedSpec(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
}

/// Per (category, feature) categorical distributions:
/// `table[category][feature][value]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerativeSpec {
    pub table: Vec<Vec<Vec<f64>>>,
}

fn peaked(arity: usize, peak: usize, mass: f64) -> Vec<f64> {
    let rest = (1.0 - mass) / (arity - 1) as f64;
    (0..arity).map(|v| if v == peak { mass } else { rest }).collect()
}

impl Default for GenerativeSpec {
    /// The calibrated table: shape and size are weakly informative, color is
    /// the one strongly informative candidate, and texture/position/weight
    /// each carry a single small perturbation.
    fn default() -> Self {
        const SHAPE: f64 = 0.50;
        const SIZE: f64 = 0.52;
        const COLOR: f64 = 0.85;
        // (shape peak, size peak, color peak) per category.
        let peaks = [(1, 1, 0), (0, 0, 1), (2, 0, 2), (2, 2, 3)];
        let binary = |p: f64| vec![p, 1.0 - p];
        let table = ObjectCategory::ALL
            .iter()
            .map(|&c| {
                let (sh, sz, co) = peaks[c.index()];
                vec![
                    peaked(3, sh, SHAPE),
                    peaked(3, sz, SIZE),
                    peaked(4, co, COLOR),
                    binary(if c == ObjectCategory::Apple { 0.55 } else { 0.5 }),
                    binary(if c == ObjectCategory::Cup { 0.45 } else { 0.5 }),
                    binary(if c == ObjectCategory::Bottle { 0.45 } else { 0.5 }),
                ]
            })
            .collect();
        GenerativeSpec { table }
    }
}

impl GenerativeSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.table.len() != 4 {
            return Err(FeatureError::MalformedSpec(format!(
                "expected 4 categories, got {}",
                self.table.len()
            )));
        }
        for (c, per_feature) in self.table.iter().enumerate() {
            if per_feature.len() != 6 {
                return Err(FeatureError::MalformedSpec(format!(
                    "category {c}: expected 6 features"
                )));
            }
            for (f, dist) in per_feature.iter().enumerate() {
                let feature = FeatureName::ALL[f];
                if dist.len() != feature.arity() {
                    return Err(FeatureError::MalformedSpec(format!(
                        "category {c}, {}: expected {} values",
                        feature.name(),
                        feature.arity()
                    )));
                }
                let sum: f64 = dist.iter().sum();
                if dist.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(FeatureError::MalformedSpec(format!(
                        "category {c}, {}: not a distribution",
                        feature.name()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn prob(&self, category: ObjectCategory, feature: FeatureName, value: usize) -> f64 {
        self.table[category.index()][feature.index()][value]
    }
}

pub fn sample_object<R: Rng + ?Sized>(spec: &GenerativeSpec, rng: &mut R) -> ObjectSample {
    let category = ObjectCategory::ALL[rng.gen_range(0..4)];
    let mut values = [0u8; 6];
    for f in FeatureName::ALL {
        values[f.index()] = categorical(rng, &spec.table[category.index()][f.index()]) as u8;
    }
    ObjectSample { category, values }
}

pub fn sample_many<R: Rng + ?Sized>(spec: &GenerativeSpec, n: usize, rng: &mut R) -> Vec<ObjectSample> {
    (0..n).map(|_| sample_object(spec, rng)).collect()
}

fn normalized(features: &[FeatureName]) -> Vec<FeatureName> {
    let set: BTreeSet<FeatureName> = features.iter().copied().collect();
    set.into_iter().collect()
}

/// Exact Bayes-optimal accuracy of `features` under a uniform category prior.
pub fn bayes_oracle(spec: &GenerativeSpec, features: &[FeatureName]) -> Result<f64, FeatureError> {
    let features = normalized(features);
    if features.is_empty() {
        return Err(FeatureError::EmptyFeatureSet);
    }
    spec.validate()?;
    let mut cell = vec![0usize; features.len()];
    let mut total = 0.0;
    loop {
        let best = ObjectCategory::ALL
            .iter()
            .map(|&c| {
                features
                    .iter()
                    .zip(&cell)
                    .map(|(&f, &v)| spec.prob(c, f, v))
                    .product::<f64>()
            })
            .fold(0.0, f64::max);
        total += 0.25 * best;
        // Mixed-radix increment over the selected alphabets.
        let mut pos = 0;
        loop {
            if pos == features.len() {
                return Ok(total);
            }
            cell[pos] += 1;
            if cell[pos] < features[pos].arity() {
                break;
            }
            cell[pos] = 0;
            pos += 1;
        }
    }
}

/// Joint-frequency classifier with add-one smoothing over the active
/// features' value tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyClassifier {
    active: Vec<FeatureName>,
    cells: usize,
    /// `counts[cell * 4 + category]`.
    counts: Vec<u32>,
    class_totals: [u32; 4],
}

impl FrequencyClassifier {
    pub fn fit(features: &[FeatureName], samples: &[ObjectSample]) -> Self {
        let active = normalized(features);
        let cells = active.iter().map(|f| f.arity()).product::<usize>();
        let mut clf = FrequencyClassifier {
            active,
            cells,
            counts: vec![0; cells * 4],
            class_totals: [0; 4],
        };
        for s in samples {
            let cell = clf.cell_of(s);
            clf.counts[cell * 4 + s.category.index()] += 1;
            clf.class_totals[s.category.index()] += 1;
        }
        clf
    }

    pub fn active(&self) -> &[FeatureName] {
        &self.active
    }

    fn cell_of(&self, s: &ObjectSample) -> usize {
        self.active
            .iter()
            .fold(0, |acc, &f| acc * f.arity() + s.value(f))
    }

    /// Argmax of the smoothed likelihood; the first category wins ties.
    pub fn predict(&self, s: &ObjectSample) -> ObjectCategory {
        let cell = self.cell_of(s);
        let mut best = ObjectCategory::Banana;
        let mut best_score = f64::NEG_INFINITY;
        for c in ObjectCategory::ALL {
            let k = c.index();
            let score = (self.counts[cell * 4 + k] as f64 + 1.0)
                / (self.class_totals[k] as f64 + self.cells as f64);
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        best
    }

    pub fn accuracy(&self, samples: &[ObjectSample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let hits = samples.iter().filter(|s| self.predict(s) == s.category).count();
        hits as f64 / samples.len() as f64
    }

    /// Packs the count table into a model handle; the first four params are
    /// the class totals.
    pub fn to_handle(&self, id: ModelId) -> ModelHandle {
        let mut params: Vec<f64> = self.class_totals.iter().map(|&c| c as f64).collect();
        params.extend(self.counts.iter().map(|&c| c as f64));
        ModelHandle {
            id,
            inputs: self.active.iter().map(|f| f.id()).collect(),
            outputs: ObjectCategory::ALL.iter().map(|c| c.id()).collect(),
            params,
        }
    }

    pub fn from_handle(handle: &ModelHandle) -> Option<Self> {
        let active: Vec<FeatureName> = handle
            .inputs
            .iter()
            .map(|&id| FeatureName::from_id(id))
            .collect::<Option<_>>()?;
        let cells = active.iter().map(|f| f.arity()).product::<usize>();
        if handle.params.len() != 4 + cells * 4 {
            return None;
        }
        let mut class_totals = [0u32; 4];
        for (t, p) in class_totals.iter_mut().zip(&handle.params[..4]) {
            *t = *p as u32;
        }
        Some(FrequencyClassifier {
            active,
            cells,
            counts: handle.params[4..].iter().map(|&p| p as u32).collect(),
            class_totals,
        })
    }
}

/// Fits on `train_n` draws and scores on `test_n` fresh draws.
pub fn train_and_evaluate<R: Rng + ?Sized>(
    features: &[FeatureName],
    train_n: usize,
    test_n: usize,
    spec: &GenerativeSpec,
    rng: &mut R,
) -> f64 {
    let train = sample_many(spec, train_n, rng);
    let test = sample_many(spec, test_n, rng);
    FrequencyClassifier::fit(features, &train).accuracy(&test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    /// Minimum held-out accuracy improvement for acceptance (δ).
    pub delta: f64,
    /// Evidence samples per ranking batch and per verification batch (n_e).
    pub evidence_samples: usize,
    /// Validation accuracy below which the feature set is insufficient.
    pub insufficiency_threshold: f64,
    pub step_budget: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub validation_n: usize,
    pub spec: Option<GenerativeSpec>,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            delta: 0.05,
            evidence_samples: 20,
            insufficiency_threshold: 0.60,
            step_budget: 4,
            train_n: 500,
            test_n: 2000,
            validation_n: 200,
            spec: None,
        }
    }
}

impl FeatureParams {
    pub fn generative_spec(&self) -> GenerativeSpec {
        self.spec.clone().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureMethod {
    FixedFeature,
    RandomExpansion,
    Proposed,
}

impl FeatureMethod {
    pub const ALL: [FeatureMethod; 3] = [
        FeatureMethod::FixedFeature,
        FeatureMethod::RandomExpansion,
        FeatureMethod::Proposed,
    ];

    pub fn key(self) -> &'static str {
        match self {
            FeatureMethod::FixedFeature => "fixed",
            FeatureMethod::RandomExpansion => "random",
            FeatureMethod::Proposed => "proposed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRoundResult {
    pub final_accuracy: f64,
    pub discovered_useful: bool,
    pub false_acceptances: u32,
    pub evidence_cost: u64,
    pub adaptation_steps: u32,
    pub budget_exhausted: bool,
    pub final_features: Vec<FeatureName>,
}

impl FeatureRoundResult {
    pub fn metrics(&self) -> MetricMap {
        let mut m = MetricMap::new();
        m.insert("acc".into(), self.final_accuracy);
        m.insert("disc".into(), if self.discovered_useful { 1.0 } else { 0.0 });
        m.insert("false".into(), self.false_acceptances as f64);
        m.insert("steps".into(), self.adaptation_steps as f64);
        m.insert("cost".into(), self.evidence_cost as f64);
        m
    }
}

/// The per-round world: training data, held-out test set and the evidence
/// ledger. Training and test draws are made before any method runs so every
/// method sees the same data for a seed.
#[derive(Debug, Clone)]
pub struct FeatureWorld {
    pub spec: GenerativeSpec,
    pub params: FeatureParams,
    pub train: Vec<ObjectSample>,
    pub test: Vec<ObjectSample>,
    pub evidence_cost: u64,
}

impl FeatureWorld {
    pub fn new(params: &FeatureParams, rng: &mut SimRng) -> Self {
        let spec = params.generative_spec();
        let train = sample_many(&spec, params.train_n, rng);
        let test = sample_many(&spec, params.test_n, rng);
        FeatureWorld {
            spec,
            params: params.clone(),
            train,
            test,
            evidence_cost: 0,
        }
    }

    fn fit(&self, features: &[FeatureName]) -> FrequencyClassifier {
        FrequencyClassifier::fit(features, &self.train)
    }
}

fn features_of(objects: &LearningObjectSet) -> Vec<FeatureName> {
    objects
        .features()
        .iter()
        .filter_map(|&id| FeatureName::from_id(id))
        .collect()
}

pub fn initial_objects(world: &FeatureWorld) -> LearningObjectSet {
    let model = world.fit(&FeatureName::INITIAL).to_handle(ModelId(0));
    LearningObjectSet::new(
        FeatureName::INITIAL.iter().map(|f| f.id()).collect(),
        ObjectCategory::ALL.iter().map(|c| c.id()).collect(),
        model,
        Vec::new(),
    )
    .expect("initial feature objects are consistent")
}

/// Φ for feature discovery.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureStrategy {
    pub rejected: Vec<FeatureName>,
    pub accepted: Vec<FeatureName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureObservation {
    pub batch: Vec<ObjectSample>,
}

/// Loop operators for the thinking-guided feature adaptation.
#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureOperators;

impl FeatureOperators {
    pub fn open_candidates(
        objects: &LearningObjectSet,
        strategy: &FeatureStrategy,
    ) -> Vec<FeatureName> {
        let active = features_of(objects);
        FeatureName::CANDIDATES
            .iter()
            .copied()
            .filter(|c| !active.contains(c) && !strategy.rejected.contains(c))
            .collect()
    }
}

impl Operators for FeatureOperators {
    type Env = FeatureWorld;
    type Observation = FeatureObservation;
    type Evidence = ObjectSample;
    type Strategy = FeatureStrategy;

    fn observe(&self, env: &mut FeatureWorld, rng: &mut SimRng) -> Result<FeatureObservation, LoopError> {
        Ok(FeatureObservation {
            batch: sample_many(&env.spec, env.params.validation_n, rng),
        })
    }

    fn evaluate(
        &self,
        observation: &FeatureObservation,
        objects: &LearningObjectSet,
        _knowledge: &KnowledgeState<FeatureObservation>,
        env: &mut FeatureWorld,
    ) -> SufficiencyAssessment {
        let clf = FrequencyClassifier::from_handle(objects.model())
            .unwrap_or_else(|| env.fit(&features_of(objects)));
        let acc = clf.accuracy(&observation.batch);
        let mut diagnostics = Diagnostics::new();
        diagnostics.insert("validation_accuracy".into(), acc);
        if acc < env.params.insufficiency_threshold {
            SufficiencyAssessment::deficit(
                UpdateTarget {
                    component: UpdateComponent::InputFeatures,
                    detail: "current features confuse categories".into(),
                },
                diagnostics,
            )
        } else {
            SufficiencyAssessment::sufficient(diagnostics)
        }
    }

    fn think(
        &self,
        _assessment: &SufficiencyAssessment,
        _observation: &FeatureObservation,
        objects: &LearningObjectSet,
        _knowledge: &KnowledgeState<FeatureObservation>,
        strategy: &ThinkingStrategy<FeatureStrategy>,
        env: &mut FeatureWorld,
        rng: &mut SimRng,
    ) -> Result<LearningPlan, LoopError> {
        let candidates = Self::open_candidates(objects, &strategy.params);
        if candidates.is_empty() {
            return Err(LoopError::operator("think", "no candidate features left"));
        }
        let current = features_of(objects);
        let base = env.fit(&current);
        let n_e = env.params.evidence_samples;
        let mut best: Option<(FeatureName, f64)> = None;
        for c in candidates {
            let probe = sample_many(&env.spec, n_e, rng);
            env.evidence_cost += n_e as u64;
            let mut extended = current.clone();
            extended.push(c);
            let gain = env.fit(&extended).accuracy(&probe) - base.accuracy(&probe);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((c, gain));
            }
        }
        let (chosen, gain) = best.expect("at least one candidate was scored");
        let mut protocol = alloc::collections::BTreeMap::new();
        protocol.insert("delta".to_string(), env.params.delta);
        protocol.insert("evidence_samples".to_string(), n_e as f64);
        protocol.insert("estimated_gain".to_string(), gain);
        Ok(LearningPlan {
            target: UpdateTarget {
                component: UpdateComponent::InputFeatures,
                detail: chosen.name().into(),
            },
            evidence_requests: vec![EvidenceRequest {
                source: chosen.name().into(),
                quantity: n_e as u32,
                cost_estimate: n_e as f64,
            }],
            verification_protocol: protocol,
        })
    }

    fn collect(
        &self,
        plan: &LearningPlan,
        _observation: &FeatureObservation,
        _knowledge: &KnowledgeState<FeatureObservation>,
        env: &mut FeatureWorld,
        rng: &mut SimRng,
    ) -> Result<EvidenceBatch<ObjectSample>, LoopError> {
        let mut batch = EvidenceBatch::new();
        for req in &plan.evidence_requests {
            for s in sample_many(&env.spec, req.quantity as usize, rng) {
                batch.push(EvidenceItem {
                    payload: s,
                    source: req.source.clone(),
                    origin: EvidenceOrigin::ActiveInteraction,
                    cost: 1.0,
                });
            }
        }
        env.evidence_cost += batch.len() as u64;
        Ok(batch)
    }

    fn construct_data(
        &self,
        batch: &EvidenceBatch<ObjectSample>,
        plan: &LearningPlan,
        _knowledge: &KnowledgeState<FeatureObservation>,
    ) -> Result<LearningMaterials, LoopError> {
        Ok(LearningMaterials {
            target: plan.target.clone(),
            train: Vec::new(),
            validation: (0..batch.len()).collect(),
        })
    }

    fn learn(
        &self,
        materials: &LearningMaterials,
        _batch: &EvidenceBatch<ObjectSample>,
        objects: &LearningObjectSet,
        env: &mut FeatureWorld,
    ) -> Result<LearningResult, LoopError> {
        let feature = FeatureName::parse(&materials.target.detail).ok_or_else(|| {
            LoopError::operator("learn", format!("unknown feature `{}`", materials.target.detail))
        })?;
        let mut extended = features_of(objects);
        extended.push(feature);
        let clf = env.fit(&extended);
        let mut fit = Diagnostics::new();
        fit.insert("train_accuracy".into(), clf.accuracy(&env.train));
        Ok(LearningResult {
            candidate: CandidateUpdate::AddFeature {
                feature: feature.id(),
                model: Some(clf.to_handle(ModelId(objects.model().id.0 + 1))),
            },
            fit_metrics: fit,
        })
    }

    fn verify(
        &self,
        result: &LearningResult,
        batch: &EvidenceBatch<ObjectSample>,
        _knowledge: &KnowledgeState<FeatureObservation>,
        env: &mut FeatureWorld,
        _rng: &mut SimRng,
    ) -> Verdict {
        let CandidateUpdate::AddFeature {
            feature,
            model: Some(model),
        } = &result.candidate
        else {
            return Verdict::insufficient(0.0);
        };
        let held_out: Vec<ObjectSample> = batch.items().iter().map(|i| i.payload.clone()).collect();
        let Some(new_clf) = FrequencyClassifier::from_handle(model) else {
            return Verdict::insufficient(0.0);
        };
        let old: Vec<FeatureName> = new_clf
            .active()
            .iter()
            .copied()
            .filter(|f| f.id() != *feature)
            .collect();
        let improvement = new_clf.accuracy(&held_out) - env.fit(&old).accuracy(&held_out);
        if improvement >= env.params.delta {
            Verdict::pass(improvement)
        } else {
            Verdict::fail(improvement)
        }
    }

    fn improve_thinking(
        &self,
        strategy: &FeatureStrategy,
        _knowledge: &KnowledgeState<FeatureObservation>,
        result: &LearningResult,
        verdict: &Verdict,
    ) -> FeatureStrategy {
        let mut next = strategy.clone();
        if let CandidateUpdate::AddFeature { feature, .. } = &result.candidate {
            if let Some(f) = FeatureName::from_id(*feature) {
                if verdict.accepted {
                    next.accepted.push(f);
                } else {
                    next.rejected.push(f);
                }
            }
        }
        next
    }
}

fn summarize(world: &FeatureWorld, final_features: Vec<FeatureName>, steps: u32, exhausted: bool) -> FeatureRoundResult {
    let added: Vec<FeatureName> = final_features
        .iter()
        .copied()
        .filter(|f| !FeatureName::INITIAL.contains(f))
        .collect();
    FeatureRoundResult {
        final_accuracy: world.fit(&final_features).accuracy(&world.test),
        discovered_useful: added.contains(&FeatureName::Color),
        false_acceptances: added.iter().filter(|&&f| f != FeatureName::Color).count() as u32,
        evidence_cost: world.evidence_cost,
        adaptation_steps: steps,
        budget_exhausted: exhausted,
        final_features,
    }
}

/// One round of a compared method, fully determined by `seed`.
pub fn run_feature_method(method: FeatureMethod, params: &FeatureParams, seed: u64) -> FeatureRoundResult {
    let mut rng = seeded(seed);
    let mut world = FeatureWorld::new(params, &mut rng);
    match method {
        FeatureMethod::FixedFeature => summarize(&world, FeatureName::INITIAL.to_vec(), 0, false),
        FeatureMethod::RandomExpansion => {
            let k = rng.gen_range(1..=4usize);
            let mut pool = FeatureName::CANDIDATES.to_vec();
            pool.shuffle(&mut rng);
            let mut features = FeatureName::INITIAL.to_vec();
            features.extend(pool.into_iter().take(k));
            world.evidence_cost = (k * params.evidence_samples) as u64;
            summarize(&world, features, k as u32, false)
        }
        FeatureMethod::Proposed => {
            let (state, steps, exhausted) = run_proposed(&mut world, &mut rng)
                .expect("feature operators uphold the loop contracts");
            summarize(&world, features_of(&state.objects), steps, exhausted)
        }
    }
}

/// Runs the loop until Evaluate reports sufficiency, the step budget is spent
/// or no candidates remain. Returns the final state, the number of attempted
/// verification cycles and whether the budget ran out.
pub fn run_proposed(
    world: &mut FeatureWorld,
    rng: &mut SimRng,
) -> Result<(LoopState<FeatureObservation, FeatureStrategy>, u32, bool), LoopError> {
    let ops = FeatureOperators;
    let mut state = LoopState::new(initial_objects(world), FeatureStrategy::default());
    let mut attempts = 0u32;
    loop {
        if FeatureOperators::open_candidates(&state.objects, &state.strategy.params).is_empty() {
            return Ok((state, attempts, false));
        }
        if attempts as usize >= world.params.step_budget {
            return Ok((state, attempts, true));
        }
        let outcome = crate::engine::run_step(state, world, &ops, rng)?;
        state = outcome.state;
        if outcome.record.trace.assessment.sufficient {
            return Ok((state, attempts, false));
        }
        attempts += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_step;

    fn point_mass_spec() -> GenerativeSpec {
        // Category c always takes value min(c, arity-1) on every feature, so
        // the six-feature tuple is distinct per category.
        let table = ObjectCategory::ALL
            .iter()
            .map(|&c| {
                FeatureName::ALL
                    .iter()
                    .map(|&f| {
                        let v = if f == FeatureName::Color { c.index() } else { c.index().min(f.arity() - 1) };
                        (0..f.arity()).map(|i| if i == v { 1.0 } else { 0.0 }).collect()
                    })
                    .collect()
            })
            .collect();
        GenerativeSpec { table }
    }

    #[test]
    fn default_spec_is_valid() {
        GenerativeSpec::default().validate().unwrap();
    }

    #[test]
    fn point_mass_sampling_is_forced() {
        let spec = point_mass_spec();
        let mut rng = seeded(3);
        for _ in 0..50 {
            let s = sample_object(&spec, &mut rng);
            let c = s.category.index();
            assert_eq!(s.value(FeatureName::Color), c);
            assert_eq!(s.value(FeatureName::Texture), c.min(1));
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let spec = GenerativeSpec::default();
        let a = sample_many(&spec, 30, &mut seeded(5));
        let b = sample_many(&spec, 30, &mut seeded(5));
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_frequencies_match_table() {
        let spec = GenerativeSpec::default();
        let mut rng = seeded(99);
        let samples = sample_many(&spec, 10_000, &mut rng);
        for c in ObjectCategory::ALL {
            let of_c: Vec<&ObjectSample> = samples.iter().filter(|s| s.category == c).collect();
            for f in FeatureName::ALL {
                for v in 0..f.arity() {
                    let freq = of_c.iter().filter(|s| s.value(f) == v).count() as f64 / of_c.len() as f64;
                    assert!(
                        (freq - spec.prob(c, f, v)).abs() <= 0.03,
                        "{c:?} {f:?} {v}: {freq} vs {}",
                        spec.prob(c, f, v)
                    );
                }
            }
        }
    }

    #[test]
    fn bayes_on_disjoint_point_masses_is_one() {
        let acc = bayes_oracle(&point_mass_spec(), &FeatureName::ALL).unwrap();
        assert!((acc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bayes_rejects_empty_subset() {
        assert_eq!(
            bayes_oracle(&GenerativeSpec::default(), &[]),
            Err(FeatureError::EmptyFeatureSet)
        );
    }

    #[test]
    fn point_mass_classifier_is_perfect() {
        let spec = point_mass_spec();
        let acc = train_and_evaluate(&[FeatureName::Color], 100, 500, &spec, &mut seeded(1));
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn classifier_handle_round_trips() {
        let spec = GenerativeSpec::default();
        let train = sample_many(&spec, 200, &mut seeded(8));
        let clf = FrequencyClassifier::fit(&[FeatureName::Shape, FeatureName::Color], &train);
        let back = FrequencyClassifier::from_handle(&clf.to_handle(ModelId(4))).unwrap();
        assert_eq!(back, clf);
    }

    #[test]
    fn ties_go_to_first_category() {
        let clf = FrequencyClassifier::fit(&[FeatureName::Shape], &[]);
        let s = ObjectSample {
            category: ObjectCategory::Cup,
            values: [0; 6],
        };
        assert_eq!(clf.predict(&s), ObjectCategory::Banana);
    }

    #[test]
    fn fixed_method_never_adapts() {
        let r = run_feature_method(FeatureMethod::FixedFeature, &FeatureParams::default(), 4);
        assert_eq!(r.adaptation_steps, 0);
        assert_eq!(r.false_acceptances, 0);
        assert!(!r.discovered_useful);
        assert_eq!(r.final_features, FeatureName::INITIAL.to_vec());
    }

    #[test]
    fn random_expansion_adds_k_candidates() {
        for seed in 0..20 {
            let r = run_feature_method(FeatureMethod::RandomExpansion, &FeatureParams::default(), seed);
            assert!((1..=4).contains(&r.adaptation_steps));
            assert_eq!(r.final_features.len(), 2 + r.adaptation_steps as usize);
        }
    }

    #[test]
    fn proposed_step_adds_color_when_shape_size_confuse() {
        let params = FeatureParams::default();
        let mut rng = seeded(21);
        let mut world = FeatureWorld::new(&params, &mut rng);
        let state = LoopState::new(initial_objects(&world), FeatureStrategy::default());
        let before = state.objects.clone();
        let outcome = run_step(state, &mut world, &FeatureOperators, &mut rng).unwrap();
        assert!(!outcome.record.trace.assessment.sufficient);
        assert!(outcome.record.applied);
        let after = outcome.state.objects.features().clone();
        assert_eq!(after.len(), before.features().len() + 1);
        assert!(after.contains(&FeatureName::Color.id()));
        // Independent check that the accepted feature raises attainable accuracy.
        let spec = GenerativeSpec::default();
        let base = bayes_oracle(&spec, &FeatureName::INITIAL).unwrap();
        let with_color =
            bayes_oracle(&spec, &[FeatureName::Shape, FeatureName::Size, FeatureName::Color]).unwrap();
        assert!(with_color > base + 0.1);
    }

    #[test]
    fn proposed_never_accepts_below_delta() {
        let params = FeatureParams::default();
        for seed in 0..15 {
            let mut rng = seeded(seed);
            let mut world = FeatureWorld::new(&params, &mut rng);
            let mut state = LoopState::new(initial_objects(&world), FeatureStrategy::default());
            for _ in 0..3 {
                if FeatureOperators::open_candidates(&state.objects, &state.strategy.params).is_empty() {
                    break;
                }
                let out = run_step(state, &mut world, &FeatureOperators, &mut rng).unwrap();
                if let Some(v) = &out.record.trace.verdict {
                    if v.accepted {
                        assert!(v.score >= params.delta);
                    }
                }
                state = out.state;
            }
        }
    }
}
