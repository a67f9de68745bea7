//! The versioned learning-object set: features, outputs, model, routines and
//! the relations tying them together.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::Verdict;
use crate::error::LoopError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CategoryId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoalId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionToken(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelId(pub u32);

/// Opaque per-scenario model: declared input/output signature plus a flat
/// parameter bundle whose layout only the owning scenario understands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHandle {
    pub id: ModelId,
    pub inputs: BTreeSet<FeatureId>,
    pub outputs: BTreeSet<CategoryId>,
    pub params: Vec<f64>,
}

impl ModelHandle {
    /// A model with no signature, for scenarios that never recognise anything.
    pub fn empty() -> Self {
        ModelHandle {
            id: ModelId(0),
            inputs: BTreeSet::new(),
            outputs: BTreeSet::new(),
            params: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRoutine {
    pub actions: Vec<ActionToken>,
    pub goal: GoalId,
}

/// (feature subset, model) → output set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognitionRelation {
    pub features: BTreeSet<FeatureId>,
    pub model: ModelId,
    pub outputs: BTreeSet<CategoryId>,
}

/// routine → goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRelation {
    pub routine: Vec<ActionToken>,
    pub goal: GoalId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSet {
    pub recognition: RecognitionRelation,
    pub action: Vec<ActionRelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningObjectSet {
    version: u64,
    features: BTreeSet<FeatureId>,
    outputs: BTreeSet<CategoryId>,
    model: ModelHandle,
    routines: Vec<ActionRoutine>,
    relations: RelationSet,
}

impl LearningObjectSet {
    /// Builds version 0 with relations derived from the components.
    pub fn new(
        features: BTreeSet<FeatureId>,
        outputs: BTreeSet<CategoryId>,
        model: ModelHandle,
        routines: Vec<ActionRoutine>,
    ) -> Result<Self, LoopError> {
        let relations = RelationSet {
            recognition: RecognitionRelation {
                features: features.clone(),
                model: model.id,
                outputs: outputs.clone(),
            },
            action: routines
                .iter()
                .map(|r| ActionRelation {
                    routine: r.actions.clone(),
                    goal: r.goal,
                })
                .collect(),
        };
        let set = LearningObjectSet {
            version: 0,
            features,
            outputs,
            model,
            routines,
            relations,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn features(&self) -> &BTreeSet<FeatureId> {
        &self.features
    }

    pub fn outputs(&self) -> &BTreeSet<CategoryId> {
        &self.outputs
    }

    pub fn model(&self) -> &ModelHandle {
        &self.model
    }

    pub fn routines(&self) -> &[ActionRoutine] {
        &self.routines
    }

    pub fn relations(&self) -> &RelationSet {
        &self.relations
    }

    pub fn routine_for(&self, goal: GoalId) -> Option<&ActionRoutine> {
        self.routines.iter().find(|r| r.goal == goal)
    }

    /// Structural equality ignoring the version counter.
    pub fn same_content(&self, other: &Self) -> bool {
        self.features == other.features
            && self.outputs == other.outputs
            && self.model == other.model
            && self.routines == other.routines
            && self.relations == other.relations
    }

    /// Checks every invariant of the set, including relation reference
    /// integrity.
    pub fn validate(&self) -> Result<(), LoopError> {
        let bad = |msg: alloc::string::String| Err(LoopError::InconsistentState(msg));
        if !self.model.inputs.is_subset(&self.features) {
            return bad(format!(
                "model inputs {:?} not within features {:?}",
                self.model.inputs, self.features
            ));
        }
        if !self.model.outputs.is_subset(&self.outputs) {
            return bad(format!(
                "model outputs {:?} not within outputs {:?}",
                self.model.outputs, self.outputs
            ));
        }
        let rec = &self.relations.recognition;
        if rec.model != self.model.id {
            return bad(format!(
                "recognition relation references model {:?}, current is {:?}",
                rec.model, self.model.id
            ));
        }
        if !rec.features.is_subset(&self.features) || !rec.outputs.is_subset(&self.outputs) {
            return bad("recognition relation references unknown features or outputs".into());
        }
        for r in &self.routines {
            if r.actions.is_empty() {
                return bad(format!("empty routine for goal {:?}", r.goal));
            }
        }
        for rel in &self.relations.action {
            if !self
                .routines
                .iter()
                .any(|r| r.actions == rel.routine && r.goal == rel.goal)
            {
                return bad(format!(
                    "action relation for goal {:?} references a missing routine",
                    rel.goal
                ));
            }
        }
        Ok(())
    }
}

/// Kind-specific candidate change Δ𝒪 proposed by a Learn operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CandidateUpdate {
    AddFeature {
        feature: FeatureId,
        model: Option<ModelHandle>,
    },
    AddCategory {
        category: CategoryId,
        model: Option<ModelHandle>,
    },
    ReplaceModel(ModelHandle),
    /// Replaces every routine serving the same goal.
    ReplaceRoutine(ActionRoutine),
    ReviseRelation(RelationSet),
}

impl CandidateUpdate {
    /// Rejects deltas whose references do not resolve against `objects`.
    pub fn check_against(&self, objects: &LearningObjectSet) -> Result<(), LoopError> {
        let malformed = |msg: alloc::string::String| Err(LoopError::MalformedDelta(msg));
        let model_fits =
            |m: &ModelHandle, feats: &BTreeSet<FeatureId>, outs: &BTreeSet<CategoryId>| {
                m.inputs.is_subset(feats) && m.outputs.is_subset(outs)
            };
        match self {
            CandidateUpdate::AddFeature { feature, model } => {
                if objects.features.contains(feature) {
                    return malformed(format!("feature {feature:?} already present"));
                }
                if let Some(m) = model {
                    let mut feats = objects.features.clone();
                    feats.insert(*feature);
                    if !model_fits(m, &feats, &objects.outputs) {
                        return malformed("model signature outside the extended feature set".into());
                    }
                }
            }
            CandidateUpdate::AddCategory { category, model } => {
                if objects.outputs.contains(category) {
                    return malformed(format!("category {category:?} already present"));
                }
                if let Some(m) = model {
                    let mut outs = objects.outputs.clone();
                    outs.insert(*category);
                    if !model_fits(m, &objects.features, &outs) {
                        return malformed("model signature outside the extended output set".into());
                    }
                }
            }
            CandidateUpdate::ReplaceModel(m) => {
                if !model_fits(m, &objects.features, &objects.outputs) {
                    return malformed("replacement model references unknown components".into());
                }
            }
            CandidateUpdate::ReplaceRoutine(r) => {
                if r.actions.is_empty() {
                    return malformed("replacement routine is empty".into());
                }
            }
            CandidateUpdate::ReviseRelation(rel) => {
                let rec = &rel.recognition;
                if rec.model != objects.model.id
                    || !rec.features.is_subset(&objects.features)
                    || !rec.outputs.is_subset(&objects.outputs)
                {
                    return malformed("revised recognition relation does not resolve".into());
                }
                for a in &rel.action {
                    if !objects
                        .routines
                        .iter()
                        .any(|r| r.actions == a.routine && r.goal == a.goal)
                    {
                        return malformed("revised action relation references a missing routine".into());
                    }
                }
            }
        }
        Ok(())
    }
}

/// 𝒪_{t+1} = 𝒪_t ⊕ Δ𝒪_t.
///
/// Identity on a rejected verdict. On acceptance the delta is applied, the
/// relations are rebuilt so every reference resolves, and the version is
/// bumped iff the content actually changed.
pub fn apply_update(
    objects: &LearningObjectSet,
    delta: &CandidateUpdate,
    verdict: &Verdict,
) -> Result<LearningObjectSet, LoopError> {
    delta.check_against(objects)?;
    if !verdict.accepted {
        return Ok(objects.clone());
    }
    let mut next = objects.clone();
    match delta {
        CandidateUpdate::AddFeature { feature, model } => {
            next.features.insert(*feature);
            if let Some(m) = model {
                next.model = m.clone();
            }
            next.rebuild_recognition();
        }
        CandidateUpdate::AddCategory { category, model } => {
            next.outputs.insert(*category);
            if let Some(m) = model {
                next.model = m.clone();
            }
            next.rebuild_recognition();
        }
        CandidateUpdate::ReplaceModel(m) => {
            next.model = m.clone();
            next.rebuild_recognition();
        }
        CandidateUpdate::ReplaceRoutine(routine) => {
            next.routines.retain(|r| r.goal != routine.goal);
            next.relations.action.retain(|a| a.goal != routine.goal);
            next.routines.push(routine.clone());
            next.relations.action.push(ActionRelation {
                routine: routine.actions.clone(),
                goal: routine.goal,
            });
        }
        CandidateUpdate::ReviseRelation(rel) => {
            next.relations = rel.clone();
        }
    }
    if !next.same_content(objects) {
        next.version = objects.version + 1;
    }
    next.validate()
        .map_err(|e| LoopError::MalformedDelta(format!("update broke an invariant: {e}")))?;
    Ok(next)
}

impl LearningObjectSet {
    fn rebuild_recognition(&mut self) {
        self.relations.recognition = RecognitionRelation {
            features: self.features.clone(),
            model: self.model.id,
            outputs: self.outputs.clone(),
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Verdict;
    use alloc::vec;

    fn feats(ids: &[u16]) -> BTreeSet<FeatureId> {
        ids.iter().map(|&i| FeatureId(i)).collect()
    }

    fn cats(ids: &[u16]) -> BTreeSet<CategoryId> {
        ids.iter().map(|&i| CategoryId(i)).collect()
    }

    fn base() -> LearningObjectSet {
        let model = ModelHandle {
            id: ModelId(1),
            inputs: feats(&[0, 1]),
            outputs: cats(&[0, 1, 2, 3]),
            params: vec![0.5],
        };
        let legacy = ActionRoutine {
            actions: vec![ActionToken(0), ActionToken(1)],
            goal: GoalId(0),
        };
        LearningObjectSet::new(feats(&[0, 1]), cats(&[0, 1, 2, 3]), model, vec![legacy]).unwrap()
    }

    #[test]
    fn add_feature_extends_features_and_recognition() {
        let o = base();
        let delta = CandidateUpdate::AddFeature {
            feature: FeatureId(2),
            model: None,
        };
        let next = apply_update(&o, &delta, &Verdict::pass(0.4)).unwrap();
        assert_eq!(next.features(), &feats(&[0, 1, 2]));
        assert_eq!(next.relations().recognition.features, feats(&[0, 1, 2]));
        assert_eq!(next.version(), o.version() + 1);
    }

    #[test]
    fn rejected_delta_is_identity() {
        let o = base();
        let delta = CandidateUpdate::AddCategory {
            category: CategoryId(9),
            model: None,
        };
        let next = apply_update(&o, &delta, &Verdict::fail(0.0)).unwrap();
        assert_eq!(next, o);
    }

    #[test]
    fn replace_routine_rewrites_action_relation() {
        let o = base();
        let quick = ActionRoutine {
            actions: vec![ActionToken(0), ActionToken(1), ActionToken(1), ActionToken(4)],
            goal: GoalId(0),
        };
        let next =
            apply_update(&o, &CandidateUpdate::ReplaceRoutine(quick.clone()), &Verdict::pass(1.0))
                .unwrap();
        assert_eq!(next.routines(), core::slice::from_ref(&quick));
        assert_eq!(next.relations().action.len(), 1);
        assert_eq!(next.relations().action[0].routine, quick.actions);
        assert_eq!(next.relations().action[0].goal, GoalId(0));
    }

    #[test]
    fn duplicate_feature_is_malformed() {
        let o = base();
        let delta = CandidateUpdate::AddFeature {
            feature: FeatureId(0),
            model: None,
        };
        assert!(matches!(
            apply_update(&o, &delta, &Verdict::pass(1.0)),
            Err(LoopError::MalformedDelta(_))
        ));
    }

    #[test]
    fn model_outside_signature_is_malformed() {
        let o = base();
        let m = ModelHandle {
            id: ModelId(2),
            inputs: feats(&[7]),
            outputs: cats(&[0]),
            params: vec![],
        };
        assert!(apply_update(&o, &CandidateUpdate::ReplaceModel(m), &Verdict::pass(1.0)).is_err());
    }

    #[test]
    fn unchanged_content_keeps_version() {
        let o = base();
        let same = CandidateUpdate::ReviseRelation(o.relations().clone());
        let next = apply_update(&o, &same, &Verdict::pass(1.0)).unwrap();
        assert_eq!(next.version(), o.version());
    }

    #[test]
    fn constructor_rejects_model_with_unknown_inputs() {
        let model = ModelHandle {
            id: ModelId(1),
            inputs: feats(&[5]),
            outputs: cats(&[]),
            params: vec![],
        };
        assert!(LearningObjectSet::new(feats(&[0]), cats(&[0]), model, vec![]).is_err());
    }
}
