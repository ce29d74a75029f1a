//! Modality-split teachers: one ComplEx model per modality, with visual and
//! textual entity tables produced by projecting fixed features.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::backbone::{score_all, ComplexEmbeddingTable, Projection};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::Scorer;
use crate::features::FeatureMatrix;
use crate::kg::{Dataset, Triple};
use crate::optim::Adam;
use crate::scalar::{softmax, Scalar};
use crate::{Modality, NUM_MODALITIES};

#[derive(Debug, Clone)]
pub struct ModalTeacher<S> {
    pub modality: Modality,
    /// Free parameters for the structural teacher; the projected table
    /// otherwise.
    pub entities: ComplexEmbeddingTable<S>,
    pub relations: ComplexEmbeddingTable<S>,
    pub projection: Option<Projection<S>>,
    /// Fixed features behind `projection`. Absent once loaded from a
    /// checkpoint, which freezes the teacher.
    pub features: Option<Arc<FeatureMatrix>>,
}

impl<S: Scalar> ModalTeacher<S> {
    pub fn structural<R: Rng + ?Sized>(num_entities: usize, num_relations: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            modality: Modality::Structural,
            entities: ComplexEmbeddingTable::random(num_entities, dim, rng),
            relations: ComplexEmbeddingTable::random(num_relations, dim, rng),
            projection: None,
            features: None,
        }
    }

    pub fn projected<R: Rng + ?Sized>(
        features: Arc<FeatureMatrix>,
        num_relations: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let projection = Projection::random(features.dim, dim, rng);
        let entities = projection.project(&features)?;
        Ok(Self {
            modality: features.modality,
            entities,
            relations: ComplexEmbeddingTable::random(num_relations, dim, rng),
            projection: Some(projection),
            features: Some(features),
        })
    }

    pub fn num_parameters(&self) -> usize {
        let rel = 2 * self.relations.re.len();
        match &self.projection {
            Some(p) => rel + p.weights.len(),
            None => rel + 2 * self.entities.re.len(),
        }
    }

    /// Mean cross-entropy over `batch`, followed by one optimizer step.
    pub fn train_step(&mut self, batch: &[Triple], opt: &mut Adam<S>) -> Result<S> {
        let out = crate::backbone::ce_loss_and_grads(batch, &self.entities, &self.relations)
            .map_err(|e| e.context(format!("{} teacher", self.modality)))?;
        match (&mut self.projection, &self.features) {
            (Some(proj), Some(features)) => {
                let gw = proj.backward(features, &out.grad_entities);
                let [rr, ri] = self.relations.params_mut();
                let [gr, gi] = out.grad_relations.params();
                opt.step(&mut [&mut proj.weights, rr, ri], &[&gw.weights, gr, gi])?;
                self.entities = proj.project(features)?;
            }
            (Some(_), None) => {
                return Err(Error::Config(format!(
                    "{} teacher is frozen (no features loaded)",
                    self.modality
                )));
            }
            (None, _) => {
                let [er, ei] = self.entities.params_mut();
                let [rr, ri] = self.relations.params_mut();
                let [ger, gei] = out.grad_entities.params();
                let [gr, gi] = out.grad_relations.params();
                opt.step(&mut [er, ei, rr, ri], &[ger, gei, gr, gi])?;
            }
        }
        Ok(out.loss)
    }
}

impl<S: Scalar> Scorer<S> for ModalTeacher<S> {
    fn num_entities(&self) -> usize {
        self.entities.count
    }

    fn score_all(&self, head: usize, rel: usize) -> Vec<S> {
        score_all(head, rel, &self.entities, &self.relations)
    }
}

/// Structural, visual and textual teachers in [`Modality::ALL`] order.
#[derive(Debug, Clone)]
pub struct TeacherEnsemble<S> {
    pub teachers: [ModalTeacher<S>; NUM_MODALITIES],
}

impl<S: Scalar> TeacherEnsemble<S> {
    pub fn new<R: Rng + ?Sized>(
        dataset: &Dataset,
        dim: usize,
        visual: FeatureMatrix,
        textual: FeatureMatrix,
        rng: &mut R,
    ) -> Result<Self> {
        let n = dataset.num_entities();
        let nr = dataset.num_relations_aug();
        for (expected, f) in [(Modality::Visual, &visual), (Modality::Textual, &textual)] {
            if f.modality != expected {
                return Err(Error::Shape(format!("{expected} slot got {} features", f.modality)));
            }
            if f.num_entities != n {
                return Err(Error::Shape(format!(
                    "{expected} features cover {} entities, dataset has {n}",
                    f.num_entities
                )));
            }
        }
        let s = ModalTeacher::structural(n, nr, dim, rng);
        let v = ModalTeacher::projected(Arc::new(visual), nr, dim, rng)?;
        let d = ModalTeacher::projected(Arc::new(textual), nr, dim, rng)?;
        Ok(Self { teachers: [s, v, d] })
    }

    pub fn num_entities(&self) -> usize {
        self.teachers[0].entities.count
    }

    pub fn get(&self, m: Modality) -> &ModalTeacher<S> {
        &self.teachers[m.index()]
    }

    pub fn num_parameters(&self) -> usize {
        self.teachers.iter().map(ModalTeacher::num_parameters).sum()
    }
}

/// Per-modality optimizers for pre-training.
#[derive(Debug, Clone)]
pub struct TeacherOptimizers<S>(pub [Adam<S>; NUM_MODALITIES]);

impl<S: Scalar> TeacherOptimizers<S> {
    pub fn new(config: &TrainConfig) -> Self {
        let mk = || Adam::new(config.learning_rate).with_weight_decay(config.l2);
        Self([mk(), mk(), mk()])
    }
}

/// One shuffled pass over `train_aug`. Each modality is stepped on its own
/// loss; the parameter sets are disjoint so this equals stepping their sum.
pub fn pretrain_epoch<S: Scalar, R: Rng + ?Sized>(
    ensemble: &mut TeacherEnsemble<S>,
    train_aug: &[Triple],
    config: &TrainConfig,
    optimizers: &mut TeacherOptimizers<S>,
    rng: &mut R,
) -> Result<[S; NUM_MODALITIES]> {
    let mut order = train_aug.to_vec();
    order.shuffle(rng);
    let mut sums = [S::zero(); NUM_MODALITIES];
    let mut seen = 0usize;
    for batch in order.chunks(config.batch_size) {
        let w = S::of(batch.len() as f64);
        for (m, (teacher, opt)) in ensemble.teachers.iter_mut().zip(optimizers.0.iter_mut()).enumerate() {
            let loss = teacher.train_step(batch, opt)?;
            sums[m] = sums[m] + loss * w;
        }
        seen += batch.len();
    }
    let denom = S::of(seen.max(1) as f64);
    Ok(sums.map(|s| s / denom))
}

/// Score vectors of every teacher for `(head, rel, ?)`.
pub fn teacher_logits<S: Scalar>(ensemble: &TeacherEnsemble<S>, head: usize, rel: usize) -> [Vec<S>; NUM_MODALITIES] {
    [0, 1, 2].map(|m| ensemble.teachers[m].score_all(head, rel))
}

/// Frozen teacher scores for a fixed set of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherLogitCache<S> {
    pub num_entities: usize,
    pub queries: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    /// Per query, the three teachers' vectors back to back.
    pub data: Vec<S>,
}

impl<S: Scalar> TeacherLogitCache<S> {
    pub fn build(ensemble: &TeacherEnsemble<S>, triples: &[Triple]) -> Self {
        let mut queries: Vec<(usize, usize)> = triples.iter().map(|t| (t.head, t.rel)).collect();
        queries.sort_unstable();
        queries.dedup();
        let n = ensemble.num_entities();
        let mut data = Vec::with_capacity(queries.len() * NUM_MODALITIES * n);
        for &(h, r) in &queries {
            for v in teacher_logits(ensemble, h, r) {
                data.extend(v);
            }
        }
        Self::from_parts(n, queries, data).expect("consistent cache")
    }

    pub fn from_parts(num_entities: usize, queries: Vec<(usize, usize)>, data: Vec<S>) -> Result<Self> {
        if data.len() != queries.len() * NUM_MODALITIES * num_entities {
            return Err(Error::Shape("teacher logit cache payload size".into()));
        }
        let index = queries.iter().enumerate().map(|(i, &q)| (q, i)).collect();
        Ok(Self {
            num_entities,
            queries,
            index,
            data,
        })
    }

    pub fn get(&self, head: usize, rel: usize) -> Option<[Vec<S>; NUM_MODALITIES]> {
        let i = *self.index.get(&(head, rel))?;
        let n = self.num_entities;
        let base = i * NUM_MODALITIES * n;
        Some([0, 1, 2].map(|m| self.data[base + m * n..base + (m + 1) * n].to_vec()))
    }
}

/// Ranks by the mean of the teachers' softmax distributions.
pub struct SoftmaxAverage<'a, S>(pub &'a TeacherEnsemble<S>);

impl<S: Scalar> Scorer<S> for SoftmaxAverage<'_, S> {
    fn num_entities(&self) -> usize {
        self.0.num_entities()
    }

    fn score_all(&self, head: usize, rel: usize) -> Vec<S> {
        let probs = teacher_logits(self.0, head, rel).map(|v| softmax(&v));
        let k = S::of(NUM_MODALITIES as f64);
        (0..self.num_entities())
            .map(|e| probs.iter().map(|p| p[e]).sum::<S>() / k)
            .collect()
    }
}
