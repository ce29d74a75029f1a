//! Student training: hard-label cross-entropy, reinforced teacher selection
//! and weighted distillation toward the selected teachers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{backprop_scores, score_all, ComplexEmbeddingTable, KgeModel};
use crate::config::{Strategy, TrainConfig};
use crate::distill::kd_loss;
use crate::error::{Error, Result};
use crate::kg::{Dataset, NeighborIndex, Triple};
use crate::optim::Adam;
use crate::reinforce::{
    aggregate_teachers, build_state, policy_forward, rc_loss_and_grads, sample_action, standardize, Action, PolicyNet,
    PolicySample, RewardRecord, NUM_ACTIONS,
};
use crate::scalar::{cross_entropy, log_sum_exp, softmax, Scalar};
use crate::teachers::{teacher_logits, TeacherEnsemble, TeacherLogitCache};
use crate::NUM_MODALITIES;

/// Batch-mean loss components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts<S> {
    pub total: S,
    pub ce: S,
    pub rc: S,
    /// Unweighted distillation loss of the configured variant.
    pub kd: S,
    pub nekd: S,
    pub nnkd: S,
    pub vanilla: S,
}

#[derive(Debug, Clone)]
pub struct StudentLossOutput<S> {
    pub parts: LossParts<S>,
    pub grad_entities: ComplexEmbeddingTable<S>,
    pub grad_relations: ComplexEmbeddingTable<S>,
    /// Present when a policy batch was supplied.
    pub policy_grad: Option<PolicyNet<S>>,
}

/// `CE + RC + gamma * KD` for one batch. `combined[i]` holds the frozen
/// combined teacher scores for `batch[i]`. Distillation and CE gradients reach
/// only the student tables, RC gradients only the policy.
pub fn student_total_loss<S: Scalar>(
    batch: &[Triple],
    student: &KgeModel<S>,
    combined: &[Vec<S>],
    neighbors: &NeighborIndex,
    policy: &PolicyNet<S>,
    policy_batch: &[PolicySample<S>],
    config: &TrainConfig,
) -> Result<StudentLossOutput<S>> {
    if batch.is_empty() || combined.len() != batch.len() {
        return Err(Error::Shape(format!(
            "batch of {} triples with {} teacher vectors",
            batch.len(),
            combined.len()
        )));
    }
    let (tau, alpha, beta, gamma) = (
        S::of(config.tau),
        S::of(config.alpha),
        S::of(config.beta),
        S::of(config.gamma),
    );
    let scale = S::one() / S::of(batch.len() as f64);
    let mut ge = ComplexEmbeddingTable::zeros(student.entities.count, student.entities.dim);
    let mut gr = ComplexEmbeddingTable::zeros(student.relations.count, student.relations.dim);
    let mut parts = LossParts::default();
    for (t, tea) in batch.iter().zip(combined) {
        let scores = score_all(t.head, t.rel, &student.entities, &student.relations);
        let lse = log_sum_exp(&scores);
        let ce = lse - scores[t.tail];
        let mut neighbor_set = neighbors.get(t.head, t.rel).to_vec();
        if neighbor_set.binary_search(&t.tail).is_err() {
            // queries outside the training graph still treat the target as a neighbor
            neighbor_set.push(t.tail);
            neighbor_set.sort_unstable();
        }
        let (kd, kd_grad) = kd_loss(
            config.kd_variant,
            tea,
            &scores,
            t.tail,
            &neighbor_set,
            tau,
            alpha,
            beta,
            config.temperature_sq_scale,
        )
        .map_err(|e| e.context(format!("distillation at triple {t:?}")))?;
        if !ce.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite student cross-entropy at triple {t:?}"
            )));
        }
        parts.ce = parts.ce + ce * scale;
        parts.kd = parts.kd + kd.total * scale;
        parts.nekd = parts.nekd + kd.nekd * scale;
        parts.nnkd = parts.nnkd + kd.nnkd * scale;
        parts.vanilla = parts.vanilla + kd.vanilla * scale;
        let mut d: Vec<S> = scores.iter().map(|&s| (s - lse).exp()).collect();
        d[t.tail] = d[t.tail] - S::one();
        for (di, &k) in d.iter_mut().zip(&kd_grad) {
            *di = (*di + gamma * k) * scale;
        }
        backprop_scores(
            t.head,
            t.rel,
            &student.entities,
            &student.relations,
            &d,
            &mut ge,
            &mut gr,
        );
    }
    let policy_grad = if policy_batch.is_empty() {
        None
    } else {
        let (rc, g) = rc_loss_and_grads(policy, policy_batch)?;
        parts.rc = rc;
        Some(g)
    };
    parts.total = parts.ce + parts.rc + gamma * parts.kd;
    Ok(StudentLossOutput {
        parts,
        grad_entities: ge,
        grad_relations: gr,
        policy_grad,
    })
}

/// Subset chosen by a fixed (non-learned) strategy.
pub fn fixed_strategy_action<S: Scalar>(
    strategy: Strategy,
    teacher_vectors: &[Vec<S>; NUM_MODALITIES],
    target: usize,
) -> Option<Action> {
    let singles = crate::Modality::ALL.map(Action::single);
    let ce_of = |a: Action| cross_entropy(&aggregate_teachers(teacher_vectors, a), target);
    let argmin = |it: &mut dyn Iterator<Item = Action>| {
        it.map(|a| (ce_of(a), a))
            .fold(None, |best: Option<(S, Action)>, (c, a)| match best {
                Some((bc, _)) if bc <= c => best,
                _ => Some((c, a)),
            })
            .map(|(_, a)| a)
    };
    match strategy {
        Strategy::Reinforced => None,
        Strategy::TeacherAvg => Some(Action::everything()),
        Strategy::ConfTeacher => {
            let conf = |a: &Action| {
                let m = a.subset()[0];
                softmax(&teacher_vectors[m.index()]).into_iter().fold(S::zero(), S::max)
            };
            let mut best = singles[0];
            for a in &singles[1..] {
                if conf(a) > conf(&best) {
                    best = *a;
                }
            }
            Some(best)
        }
        Strategy::BestTeacher => argmin(&mut singles.into_iter()),
        Strategy::BestStrategy => argmin(&mut Action::all()),
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss: LossParts<f64>,
    /// Mean advantage over every triple of the epoch.
    pub mean_delta: f64,
    /// Mean advantage of each optimizer step.
    pub step_deltas: Vec<f64>,
    pub action_fractions: [f64; NUM_ACTIONS],
}

pub struct StudentTrainer<'a, S: Scalar> {
    pub config: TrainConfig,
    pub student: KgeModel<S>,
    pub policy: PolicyNet<S>,
    dataset: &'a Dataset,
    ensemble: &'a TeacherEnsemble<S>,
    neighbors: NeighborIndex,
    cache: Option<TeacherLogitCache<S>>,
    student_opt: Adam<S>,
    policy_opt: Adam<S>,
    rng: ChaCha8Rng,
}

impl<'a, S: Scalar> StudentTrainer<'a, S> {
    pub fn new(dataset: &'a Dataset, ensemble: &'a TeacherEnsemble<S>, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let n = dataset.num_entities();
        if ensemble.num_entities() != n {
            return Err(Error::Shape(format!(
                "teachers cover {} entities, dataset has {n}",
                ensemble.num_entities()
            )));
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        init_rng.set_stream(2);
        let student = KgeModel::random(n, dataset.num_relations_aug(), config.dim, &mut init_rng);
        let mut policy = PolicyNet::random(NUM_MODALITIES * n, config.policy_hidden, &mut init_rng);
        policy.standardize = config.standardize_state;
        let cache = config
            .cache_teacher_logits
            .then(|| TeacherLogitCache::build(ensemble, &dataset.train_aug));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(3);
        Ok(Self {
            config: config.clone(),
            student,
            policy,
            dataset,
            ensemble,
            neighbors: dataset.neighbor_index(),
            cache,
            student_opt: Adam::new(config.learning_rate).with_weight_decay(config.l2),
            policy_opt: Adam::new(config.policy_learning_rate),
            rng,
        })
    }

    fn teacher_vectors(&self, t: &Triple) -> [Vec<S>; NUM_MODALITIES] {
        self.cache
            .as_ref()
            .and_then(|c| c.get(t.head, t.rel))
            .unwrap_or_else(|| teacher_logits(self.ensemble, t.head, t.rel))
    }

    pub fn policy_state(&self, teacher_vectors: &[Vec<S>; NUM_MODALITIES]) -> Result<Vec<S>> {
        if self.policy.standardize {
            build_state(&teacher_vectors.clone().map(|v| standardize(&v)))
        } else {
            build_state(teacher_vectors)
        }
    }

    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochReport> {
        let mut order = self.dataset.train_aug.clone();
        order.shuffle(&mut self.rng);
        let reinforced = self.config.strategy == Strategy::Reinforced;
        let mut counts = [0usize; NUM_ACTIONS];
        let mut sums = LossParts::<f64>::default();
        let mut delta_sum = 0.0;
        let mut step_deltas = Vec::new();
        let mut seen = 0usize;
        for batch in order.chunks(self.config.batch_size) {
            let mut combined = Vec::with_capacity(batch.len());
            let mut samples = Vec::new();
            let mut batch_delta = 0.0;
            for t in batch {
                let tv = self.teacher_vectors(t);
                let stu_scores = score_all(t.head, t.rel, &self.student.entities, &self.student.relations);
                let stu_ce = cross_entropy(&stu_scores, t.tail);
                let (action, state) = if reinforced {
                    let state = self.policy_state(&tv)?;
                    let probs = policy_forward(&self.policy, &state)?;
                    (sample_action(&probs, &mut self.rng), Some(state))
                } else {
                    let a = fixed_strategy_action(self.config.strategy, &tv, t.tail).expect("fixed strategy");
                    (a, None)
                };
                let record = RewardRecord::evaluate(&tv, action, t.tail, stu_ce, &self.config);
                counts[action.index()] += 1;
                batch_delta += record.advantage.as_f64();
                if let Some(state) = state {
                    samples.push(PolicySample {
                        state,
                        action,
                        advantage: record.advantage,
                    });
                }
                combined.push(aggregate_teachers(&tv, action));
            }
            let out = student_total_loss(
                batch,
                &self.student,
                &combined,
                &self.neighbors,
                &self.policy,
                &samples,
                &self.config,
            )
            .map_err(|e| e.context(format!("epoch {epoch}")))?;
            {
                let [er, ei] = self.student.entities.params_mut();
                let [rr, ri] = self.student.relations.params_mut();
                let [ger, gei] = out.grad_entities.params();
                let [grr, gri] = out.grad_relations.params();
                self.student_opt.step(&mut [er, ei, rr, ri], &[ger, gei, grr, gri])?;
            }
            if let Some(pg) = &out.policy_grad {
                let [w1, b1, w2, b2] = self.policy.params_mut();
                let [g1, gb1, g2, gb2] = pg.params();
                self.policy_opt.step(&mut [w1, b1, w2, b2], &[g1, gb1, g2, gb2])?;
            }
            let w = batch.len() as f64;
            let p = out.parts;
            sums.total += p.total.as_f64() * w;
            sums.ce += p.ce.as_f64() * w;
            sums.rc += p.rc.as_f64() * w;
            sums.kd += p.kd.as_f64() * w;
            sums.nekd += p.nekd.as_f64() * w;
            sums.nnkd += p.nnkd.as_f64() * w;
            sums.vanilla += p.vanilla.as_f64() * w;
            step_deltas.push(batch_delta / w);
            delta_sum += batch_delta;
            seen += batch.len();
        }
        let n = seen.max(1) as f64;
        let loss = LossParts {
            total: sums.total / n,
            ce: sums.ce / n,
            rc: sums.rc / n,
            kd: sums.kd / n,
            nekd: sums.nekd / n,
            nnkd: sums.nnkd / n,
            vanilla: sums.vanilla / n,
        };
        Ok(EpochReport {
            epoch,
            loss,
            mean_delta: delta_sum / n,
            step_deltas,
            action_fractions: counts.map(|c| c as f64 / n),
        })
    }
}
