//! Open-set recognition with verified category expansion.
//!
//! Samples live in `[0,1]^4` (hue, roundness, size, texture). Three categories
//! are known at the start; an unseen one (orange) appears in the stream. A
//! nearest-centroid model with a global distance threshold flags unknowns,
//! buffers them, and grows its output set only after a buffered cluster is
//! large, tight and well separated.

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
use crate::objects::{CandidateUpdate, CategoryId, FeatureId, LearningObjectSet, ModelHandle, ModelId};
use crate::rng::{seeded, standard_normal, SimRng};
use crate::scenario::MetricMap;

pub const DIM: usize = 4;
pub type Point = [f64; DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpenSetCategory {
    Apple,
    Banana,
    Cup,
    Orange,
}

impl OpenSetCategory {
    pub const KNOWN: [OpenSetCategory; 3] =
        [OpenSetCategory::Apple, OpenSetCategory::Banana, OpenSetCategory::Cup];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn id(self) -> CategoryId {
        CategoryId(self as u16)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSetSample {
    pub true_category: OpenSetCategory,
    pub vector: Point,
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

pub fn mean_point(points: &[Point]) -> Point {
    let mut m = [0.0; DIM];
    if points.is_empty() {
        return m;
    }
    for p in points {
        for (acc, v) in m.iter_mut().zip(p) {
            *acc += v;
        }
    }
    for v in &mut m {
        *v /= points.len() as f64;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenSetSpec {
    /// Means in [`OpenSetCategory`] order.
    pub means: [Point; 4],
    pub sigma: f64,
}

impl Default for OpenSetSpec {
    fn default() -> Self {
        OpenSetSpec {
            means: [
                [0.15, 0.80, 0.45, 0.25],
                [0.55, 0.20, 0.55, 0.25],
                [0.80, 0.60, 0.40, 0.80],
                [0.40, 0.80, 0.45, 0.50],
            ],
            sigma: 0.04,
        }
    }
}

impl OpenSetSpec {
    pub fn mean(&self, c: OpenSetCategory) -> &Point {
        &self.means[c.index()]
    }

    /// Isotropic Gaussian around the category mean, each axis redrawn until
    /// it falls inside `[0, 1]`.
    pub fn sample<R: Rng + ?Sized>(&self, c: OpenSetCategory, rng: &mut R) -> OpenSetSample {
        let mean = self.mean(c);
        let mut vector = [0.0; DIM];
        for (v, m) in vector.iter_mut().zip(mean) {
            *v = loop {
                let x = m + self.sigma * standard_normal(rng);
                if (0.0..=1.0).contains(&x) {
                    break x;
                }
            };
        }
        OpenSetSample { true_category: c, vector }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpenSetError {
    #[error("category {0:?} has {1} training samples, at least 50 are required")]
    InsufficientData(CategoryId, usize),
    #[error("category {0:?} already exists in the model")]
    DuplicateCategory(CategoryId),
    #[error("model parameters do not decode")]
    Corrupt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Known(CategoryId),
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidClass {
    pub category: CategoryId,
    pub centroid: Point,
    pub replay: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    pub tau: f64,
    pub classes: Vec<CentroidClass>,
}

pub const MIN_TRAIN_PER_CLASS: usize = 50;

/// Centroid per category, τ at the `quantile` of own-centroid training
/// distances, and the first `replay_capacity` samples of each class kept.
pub fn fit_centroid_model(
    train: &[(CategoryId, Point)],
    quantile: f64,
    replay_capacity: usize,
    min_per_class: usize,
) -> Result<CentroidModel, OpenSetError> {
    let mut grouped: BTreeMap<CategoryId, Vec<Point>> = BTreeMap::new();
    for (c, p) in train {
        grouped.entry(*c).or_default().push(*p);
    }
    let mut classes = Vec::new();
    let mut dists = Vec::new();
    for (category, points) in grouped {
        if points.len() < min_per_class {
            return Err(OpenSetError::InsufficientData(category, points.len()));
        }
        let centroid = mean_point(&points);
        dists.extend(points.iter().map(|p| distance(p, &centroid)));
        classes.push(CentroidClass {
            category,
            centroid,
            replay: points.iter().take(replay_capacity).copied().collect(),
        });
    }
    dists.sort_by(f64::total_cmp);
    let tau = if dists.is_empty() {
        0.0
    } else {
        let rank = libm::ceil(quantile.clamp(0.0, 1.0) * dists.len() as f64) as usize;
        dists[rank.clamp(1, dists.len()) - 1]
    };
    Ok(CentroidModel { tau, classes })
}

impl CentroidModel {
    pub fn classify(&self, x: &Point) -> Prediction {
        let mut best: Option<(CategoryId, f64)> = None;
        for c in &self.classes {
            let d = distance(x, &c.centroid);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c.category, d));
            }
        }
        match best {
            Some((c, d)) if d <= self.tau => Prediction::Known(c),
            _ => Prediction::Unknown,
        }
    }

    pub fn categories(&self) -> Vec<CategoryId> {
        self.classes.iter().map(|c| c.category).collect()
    }

    pub fn centroid(&self, category: CategoryId) -> Option<&Point> {
        self.classes.iter().find(|c| c.category == category).map(|c| &c.centroid)
    }

    /// Adds a class at the buffer mean and recomputes every centroid from
    /// its replay samples; the new class replays the buffer itself.
    pub fn expand(
        &self,
        new_category: CategoryId,
        buffer: &[Point],
        replay_capacity: usize,
    ) -> Result<CentroidModel, OpenSetError> {
        if self.classes.iter().any(|c| c.category == new_category) {
            return Err(OpenSetError::DuplicateCategory(new_category));
        }
        let mut classes: Vec<CentroidClass> = self
            .classes
            .iter()
            .map(|c| CentroidClass {
                category: c.category,
                centroid: if c.replay.is_empty() { c.centroid } else { mean_point(&c.replay) },
                replay: c.replay.clone(),
            })
            .collect();
        classes.push(CentroidClass {
            category: new_category,
            centroid: mean_point(buffer),
            replay: buffer.iter().take(replay_capacity).copied().collect(),
        });
        classes.sort_by_key(|c| c.category);
        Ok(CentroidModel { tau: self.tau, classes })
    }

    /// Layout: `[τ, n_classes, (category, centroid…, n_replay, replay…)…]`.
    pub fn to_handle(&self, id: ModelId) -> ModelHandle {
        let mut params = vec![self.tau, self.classes.len() as f64];
        for c in &self.classes {
            params.push(c.category.0 as f64);
            params.extend_from_slice(&c.centroid);
            params.push(c.replay.len() as f64);
            for p in &c.replay {
                params.extend_from_slice(p);
            }
        }
        ModelHandle {
            id,
            inputs: (0..DIM as u16).map(FeatureId).collect(),
            outputs: self.classes.iter().map(|c| c.category).collect(),
            params,
        }
    }

    pub fn from_handle(handle: &ModelHandle) -> Result<Self, OpenSetError> {
        let p = &handle.params;
        let take = |at: usize, n: usize| p.get(at..at + n).ok_or(OpenSetError::Corrupt);
        let head = take(0, 2)?;
        let (tau, n) = (head[0], head[1] as usize);
        let mut at = 2;
        let mut classes = Vec::with_capacity(n);
        let point = |s: &[f64]| -> Point { [s[0], s[1], s[2], s[3]] };
        for _ in 0..n {
            let cat = take(at, 1)?[0] as u16;
            let centroid = point(take(at + 1, DIM)?);
            let r = take(at + 1 + DIM, 1)?[0] as usize;
            at += 2 + DIM;
            let flat = take(at, r * DIM)?;
            at += r * DIM;
            classes.push(CentroidClass {
                category: CategoryId(cat),
                centroid,
                replay: flat.chunks(DIM).map(point).collect(),
            });
        }
        if at != p.len() {
            return Err(OpenSetError::Corrupt);
        }
        Ok(CentroidModel { tau, classes })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub count: usize,
    pub centroid: Point,
    /// Mean distance of members to the cluster centroid.
    pub cohesion: f64,
}

pub fn cluster_stats(buffer: &[Point]) -> ClusterStats {
    let centroid = mean_point(buffer);
    let cohesion = if buffer.is_empty() {
        0.0
    } else {
        buffer.iter().map(|p| distance(p, &centroid)).sum::<f64>() / buffer.len() as f64
    };
    ClusterStats {
        count: buffer.len(),
        centroid,
        cohesion,
    }
}

/// Accepts a buffered cluster iff it is large, tight and far from every
/// known centroid. The score is the minimum centroid separation.
pub fn verify_new_category(
    buffer: &[Point],
    known_centroids: &[Point],
    m_min: usize,
    cohesion_threshold: f64,
    separation_threshold: f64,
) -> Verdict {
    if buffer.len() < m_min || buffer.is_empty() {
        return Verdict::insufficient(0.0);
    }
    let stats = cluster_stats(buffer);
    let separation = known_centroids
        .iter()
        .map(|c| distance(c, &stats.centroid))
        .fold(f64::INFINITY, f64::min);
    if stats.cohesion <= cohesion_threshold && separation >= separation_threshold {
        Verdict::pass(separation)
    } else {
        Verdict::fail(separation.min(1e9))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenSetParams {
    pub spec: OpenSetSpec,
    pub train_per_class: usize,
    pub quantile: f64,
    pub replay_capacity: usize,
    pub m_min: usize,
    pub cohesion_threshold: f64,
    pub separation_threshold: f64,
    pub p_rand: f64,
    pub noise_fraction: f64,
    pub stream_len: usize,
    pub known_fraction: f64,
    pub heldout_known: usize,
    pub mixed_test: usize,
    pub success_accuracy: f64,
}

impl Default for OpenSetParams {
    fn default() -> Self {
        let spec = OpenSetSpec::default();
        // Per-axis kσ spread over four axes: kσ·√4.
        let sigma_equiv = spec.sigma * 2.0;
        OpenSetParams {
            spec,
            train_per_class: 200,
            quantile: 0.99,
            replay_capacity: 50,
            m_min: 15,
            cohesion_threshold: 2.0 * sigma_equiv,
            separation_threshold: 3.0 * sigma_equiv,
            p_rand: 0.5,
            noise_fraction: 0.1,
            stream_len: 600,
            known_fraction: 0.7,
            heldout_known: 1000,
            mixed_test: 2000,
            success_accuracy: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpenSetMethod {
    ClosedSet,
    OpenSetOnly,
    RandomExpansion,
    Proposed,
}

impl OpenSetMethod {
    pub const ALL: [OpenSetMethod; 4] = [
        OpenSetMethod::ClosedSet,
        OpenSetMethod::OpenSetOnly,
        OpenSetMethod::RandomExpansion,
        OpenSetMethod::Proposed,
    ];

    pub fn key(self) -> &'static str {
        match self {
            OpenSetMethod::ClosedSet => "closed_set",
            OpenSetMethod::OpenSetOnly => "open_set_only",
            OpenSetMethod::RandomExpansion => "random",
            OpenSetMethod::Proposed => "proposed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSetRoundResult {
    pub unknown_detection_rate: f64,
    pub new_cat_formed_correctly: bool,
    pub false_categories: u32,
    pub model_update_success: bool,
    pub forgetting: f64,
    pub final_output_count: usize,
}

impl OpenSetRoundResult {
    pub fn metrics(&self) -> MetricMap {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        let mut m = MetricMap::new();
        m.insert("unk".into(), self.unknown_detection_rate);
        m.insert("new".into(), b(self.new_cat_formed_correctly));
        m.insert("false".into(), self.false_categories as f64);
        m.insert("model".into(), b(self.model_update_success));
        m.insert("forget".into(), self.forgetting);
        m
    }
}

/// The per-round world shared by all methods for a seed.
#[derive(Debug, Clone)]
pub struct OpenSetWorld {
    pub params: OpenSetParams,
    pub initial: CentroidModel,
    pub stream: Vec<OpenSetSample>,
    pub heldout_known: Vec<OpenSetSample>,
    pub mixed_test: Vec<OpenSetSample>,
    cursor: usize,
    buffer: Vec<OpenSetSample>,
    /// True labels of every buffer that was accepted, in acceptance order.
    pub accepted_buffers: Vec<Vec<OpenSetCategory>>,
}

impl OpenSetWorld {
    pub fn new(params: &OpenSetParams, rng: &mut SimRng) -> Self {
        let spec = &params.spec;
        let mut train = Vec::new();
        for c in OpenSetCategory::KNOWN {
            for _ in 0..params.train_per_class {
                train.push((c.id(), spec.sample(c, rng).vector));
            }
        }
        let initial = fit_centroid_model(&train, params.quantile, params.replay_capacity, MIN_TRAIN_PER_CLASS)
            .expect("default world has enough training samples per class");
        let draw_known = |rng: &mut SimRng| {
            let c = OpenSetCategory::KNOWN[rng.gen_range(0..3)];
            spec.sample(c, rng)
        };
        let heldout_known = (0..params.heldout_known).map(|_| draw_known(rng)).collect();
        let draw_mixed = |rng: &mut SimRng| {
            if rng.gen::<f64>() < params.known_fraction {
                draw_known(rng)
            } else {
                spec.sample(OpenSetCategory::Orange, rng)
            }
        };
        let mixed_test = (0..params.mixed_test).map(|_| draw_mixed(rng)).collect();
        let stream = (0..params.stream_len).map(|_| draw_mixed(rng)).collect();
        OpenSetWorld {
            params: params.clone(),
            initial,
            stream,
            heldout_known,
            mixed_test,
            cursor: 0,
            buffer: Vec::new(),
            accepted_buffers: Vec::new(),
        }
    }

    pub fn buffer(&self) -> &[OpenSetSample] {
        &self.buffer
    }

    /// Share of the stream's orange samples flagged by the initial detector.
    pub fn unknown_detection_rate(&self) -> f64 {
        let oranges: Vec<&OpenSetSample> = self
            .stream
            .iter()
            .filter(|s| s.true_category == OpenSetCategory::Orange)
            .collect();
        if oranges.is_empty() {
            return 0.0;
        }
        let flagged = oranges
            .iter()
            .filter(|s| self.initial.classify(&s.vector) == Prediction::Unknown)
            .count();
        flagged as f64 / oranges.len() as f64
    }
}

/// Known-category accuracy; unknown predictions count as errors.
pub fn known_accuracy(model: &CentroidModel, samples: &[OpenSetSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples
        .iter()
        .filter(|s| model.classify(&s.vector) == Prediction::Known(s.true_category.id()))
        .count();
    hits as f64 / samples.len() as f64
}

/// Accuracy on mixed samples when `orange_as` is the category standing for
/// orange (if any).
pub fn combined_accuracy(model: &CentroidModel, samples: &[OpenSetSample], orange_as: Option<CategoryId>) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples
        .iter()
        .filter(|s| {
            let want = if s.true_category == OpenSetCategory::Orange {
                match orange_as {
                    Some(c) => Prediction::Known(c),
                    None => return false,
                }
            } else {
                Prediction::Known(s.true_category.id())
            };
            model.classify(&s.vector) == want
        })
        .count();
    hits as f64 / samples.len() as f64
}

fn mostly_orange(labels: &[OpenSetCategory]) -> bool {
    let oranges = labels.iter().filter(|&&c| c == OpenSetCategory::Orange).count();
    2 * oranges > labels.len()
}

fn next_category(model: &CentroidModel) -> CategoryId {
    CategoryId(model.classes.iter().map(|c| c.category.0 + 1).max().unwrap_or(0))
}

/// Scores a round given which categories were created and from what.
fn summarize(
    world: &OpenSetWorld,
    detecting: bool,
    created: &[(CategoryId, Vec<OpenSetCategory>)],
    final_model: &CentroidModel,
) -> OpenSetRoundResult {
    let correct = created.iter().find(|(_, labels)| mostly_orange(labels)).map(|(c, _)| *c);
    let false_categories = created.len() as u32 - u32::from(correct.is_some());
    let forgetting = if created.is_empty() {
        0.0
    } else {
        let before = known_accuracy(&world.initial, &world.heldout_known);
        let after = known_accuracy(final_model, &world.heldout_known);
        (before - after).max(0.0)
    };
    let model_update_success = correct.is_some()
        && combined_accuracy(final_model, &world.mixed_test, correct) >= world.params.success_accuracy;
    OpenSetRoundResult {
        unknown_detection_rate: if detecting { world.unknown_detection_rate() } else { 0.0 },
        new_cat_formed_correctly: correct.is_some(),
        false_categories,
        model_update_success,
        forgetting,
        final_output_count: final_model.classes.len(),
    }
}

pub fn initial_objects(world: &OpenSetWorld) -> LearningObjectSet {
    let handle = world.initial.to_handle(ModelId(0));
    LearningObjectSet::new(
        handle.inputs.clone(),
        handle.outputs.clone(),
        handle,
        Vec::new(),
    )
    .expect("initial open-set objects are consistent")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpenSetStrategy {
    pub accepted: u32,
    pub rejected: u32,
    pub insufficient: u32,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OpenSetOperators;

impl Operators for OpenSetOperators {
    type Env = OpenSetWorld;
    type Observation = OpenSetSample;
    type Evidence = OpenSetSample;
    type Strategy = OpenSetStrategy;

    fn observe(&self, env: &mut OpenSetWorld, _rng: &mut SimRng) -> Result<OpenSetSample, LoopError> {
        let s = env
            .stream
            .get(env.cursor)
            .cloned()
            .ok_or_else(|| LoopError::operator("observe", "stream exhausted"))?;
        env.cursor += 1;
        Ok(s)
    }

    fn evaluate(
        &self,
        observation: &OpenSetSample,
        objects: &LearningObjectSet,
        _knowledge: &KnowledgeState<OpenSetSample>,
        _env: &mut OpenSetWorld,
    ) -> SufficiencyAssessment {
        let mut d = Diagnostics::new();
        let Ok(model) = CentroidModel::from_handle(objects.model()) else {
            return SufficiencyAssessment::deficit(
                UpdateTarget {
                    component: UpdateComponent::Model,
                    detail: "model parameters do not decode".into(),
                },
                d,
            );
        };
        d.insert("outputs".into(), model.classes.len() as f64);
        match model.classify(&observation.vector) {
            Prediction::Known(c) => {
                d.insert("predicted".into(), c.0 as f64);
                SufficiencyAssessment::sufficient(d)
            }
            Prediction::Unknown => SufficiencyAssessment::deficit(
                UpdateTarget {
                    component: UpdateComponent::OutputSet,
                    detail: "sample outside every known category".into(),
                },
                d,
            ),
        }
    }

    fn think(
        &self,
        assessment: &SufficiencyAssessment,
        _observation: &OpenSetSample,
        _objects: &LearningObjectSet,
        _knowledge: &KnowledgeState<OpenSetSample>,
        _strategy: &ThinkingStrategy<OpenSetStrategy>,
        env: &mut OpenSetWorld,
        _rng: &mut SimRng,
    ) -> Result<LearningPlan, LoopError> {
        let p = &env.params;
        let mut protocol = BTreeMap::new();
        protocol.insert("m_min".into(), p.m_min as f64);
        protocol.insert("cohesion".into(), p.cohesion_threshold);
        protocol.insert("separation".into(), p.separation_threshold);
        Ok(LearningPlan {
            target: assessment.deficit.clone().expect("engine only thinks on a deficit"),
            evidence_requests: vec![EvidenceRequest {
                source: "unknown_buffer".into(),
                quantity: 1,
                cost_estimate: 1.0,
            }],
            verification_protocol: protocol,
        })
    }

    fn collect(
        &self,
        plan: &LearningPlan,
        observation: &OpenSetSample,
        _knowledge: &KnowledgeState<OpenSetSample>,
        env: &mut OpenSetWorld,
        _rng: &mut SimRng,
    ) -> Result<EvidenceBatch<OpenSetSample>, LoopError> {
        env.buffer.push(observation.clone());
        let source = &plan.evidence_requests[0].source;
        Ok(env
            .buffer
            .iter()
            .map(|s| EvidenceItem {
                payload: s.clone(),
                source: source.clone(),
                origin: EvidenceOrigin::CurrentObservation,
                cost: 1.0,
            })
            .collect())
    }

    fn construct_data(
        &self,
        batch: &EvidenceBatch<OpenSetSample>,
        plan: &LearningPlan,
        _knowledge: &KnowledgeState<OpenSetSample>,
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
        batch: &EvidenceBatch<OpenSetSample>,
        objects: &LearningObjectSet,
        env: &mut OpenSetWorld,
    ) -> Result<LearningResult, LoopError> {
        let model = CentroidModel::from_handle(objects.model())
            .map_err(|e| LoopError::operator("learn", alloc::format!("{e}")))?;
        let points: Vec<Point> = materials.train.iter().map(|&i| batch.items()[i].payload.vector).collect();
        let category = next_category(&model);
        let expanded = model
            .expand(category, &points, env.params.replay_capacity)
            .map_err(|e| LoopError::operator("learn", alloc::format!("{e}")))?;
        let stats = cluster_stats(&points);
        let mut fit = Diagnostics::new();
        fit.insert("count".into(), stats.count as f64);
        fit.insert("cohesion".into(), stats.cohesion);
        Ok(LearningResult {
            candidate: CandidateUpdate::AddCategory {
                category,
                model: Some(expanded.to_handle(ModelId(objects.model().id.0 + 1))),
            },
            fit_metrics: fit,
        })
    }

    fn verify(
        &self,
        result: &LearningResult,
        batch: &EvidenceBatch<OpenSetSample>,
        _knowledge: &KnowledgeState<OpenSetSample>,
        env: &mut OpenSetWorld,
        _rng: &mut SimRng,
    ) -> Verdict {
        let CandidateUpdate::AddCategory { category, model: Some(handle) } = &result.candidate else {
            return Verdict::insufficient(0.0);
        };
        let Ok(expanded) = CentroidModel::from_handle(handle) else {
            return Verdict::insufficient(0.0);
        };
        let known: Vec<Point> = expanded
            .classes
            .iter()
            .filter(|c| c.category != *category)
            .map(|c| c.centroid)
            .collect();
        let points: Vec<Point> = batch.items().iter().map(|i| i.payload.vector).collect();
        let p = &env.params;
        let verdict = verify_new_category(&points, &known, p.m_min, p.cohesion_threshold, p.separation_threshold);
        if verdict.accepted {
            let labels = env.buffer.iter().map(|s| s.true_category).collect();
            env.accepted_buffers.push(labels);
            env.buffer.clear();
        }
        verdict
    }

    fn improve_thinking(
        &self,
        strategy: &OpenSetStrategy,
        _knowledge: &KnowledgeState<OpenSetSample>,
        _result: &LearningResult,
        verdict: &Verdict,
    ) -> OpenSetStrategy {
        let mut next = strategy.clone();
        match (verdict.accepted, verdict.reason) {
            (true, _) => next.accepted += 1,
            (false, crate::engine::VerdictReason::InsufficientEvidence) => next.insufficient += 1,
            (false, _) => next.rejected += 1,
        }
        next
    }
}

/// Streams every sample through the loop, one step per sample.
pub fn run_proposed(
    world: &mut OpenSetWorld,
    rng: &mut SimRng,
) -> Result<LoopState<OpenSetSample, OpenSetStrategy>, crate::error::EpisodeError> {
    let state = LoopState::new(initial_objects(world), OpenSetStrategy::default());
    let horizon = world.stream.len().max(1) as u64;
    Ok(run_episode(state, world, &OpenSetOperators, horizon, rng)?.final_state)
}

fn random_expansion(world: &OpenSetWorld, rng: &mut SimRng) -> OpenSetRoundResult {
    let p = &world.params;
    let flagged: Vec<&OpenSetSample> = world
        .stream
        .iter()
        .filter(|s| world.initial.classify(&s.vector) == Prediction::Unknown)
        .collect();
    let mut model = world.initial.clone();
    let mut created = Vec::new();
    for chunk in flagged.chunks(p.m_min.max(1)) {
        if chunk.len() < p.m_min {
            break;
        }
        let noisy = rng.gen::<f64>() < p.noise_fraction;
        let (points, labels): (Vec<Point>, Vec<OpenSetCategory>) = if noisy {
            // Noise carries no orange label.
            let pts = (0..chunk.len())
                .map(|_| {
                    let mut v = [0.0; DIM];
                    for x in &mut v {
                        *x = rng.gen::<f64>();
                    }
                    v
                })
                .collect();
            (pts, vec![OpenSetCategory::Apple; chunk.len()])
        } else {
            (
                chunk.iter().map(|s| s.vector).collect(),
                chunk.iter().map(|s| s.true_category).collect(),
            )
        };
        if rng.gen::<f64>() < p.p_rand {
            let category = next_category(&model);
            model = model
                .expand(category, &points, p.replay_capacity)
                .expect("fresh category id is never a duplicate");
            created.push((category, labels));
            break;
        }
    }
    summarize(world, true, &created, &model)
}

pub fn run_openset_method(method: OpenSetMethod, params: &OpenSetParams, seed: u64) -> OpenSetRoundResult {
    let mut rng = seeded(seed);
    let mut world = OpenSetWorld::new(params, &mut rng);
    match method {
        OpenSetMethod::ClosedSet => OpenSetRoundResult {
            unknown_detection_rate: 0.0,
            new_cat_formed_correctly: false,
            false_categories: 0,
            model_update_success: false,
            forgetting: 0.0,
            final_output_count: world.initial.classes.len(),
        },
        OpenSetMethod::OpenSetOnly => summarize(&world, true, &[], &world.initial.clone()),
        OpenSetMethod::RandomExpansion => random_expansion(&world, &mut rng),
        OpenSetMethod::Proposed => {
            let state = run_proposed(&mut world, &mut rng).expect("open-set operators uphold the loop contracts");
            let final_model =
                CentroidModel::from_handle(state.objects.model()).expect("accepted models always decode");
            let new_ids: Vec<CategoryId> = final_model
                .categories()
                .into_iter()
                .filter(|c| !world.initial.categories().contains(c))
                .collect();
            let created: Vec<(CategoryId, Vec<OpenSetCategory>)> =
                new_ids.into_iter().zip(world.accepted_buffers.iter().cloned()).collect();
            summarize(&world, true, &created, &final_model)
        }
    }
}
