//! End-to-end phases: teacher pre-training, student training and evaluation,
//! plus the CSV artifacts each phase emits.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::KgeModel;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, Metrics, Scorer};
use crate::features::FeatureMatrix;
use crate::kg::{Dataset, FilterIndex, Triple};
use crate::reinforce::{Action, PolicyNet, NUM_ACTIONS};
use crate::scalar::Scalar;
use crate::student::{EpochReport, StudentTrainer};
use crate::teachers::{pretrain_epoch, ModalTeacher, SoftmaxAverage, TeacherEnsemble, TeacherOptimizers};
use crate::{Modality, NUM_MODALITIES};

/// Evaluates on a split, or returns `None` when the split is empty.
pub fn evaluate_split<S: Scalar, M: Scorer<S> + ?Sized>(
    model: &M,
    dataset: &Dataset,
    filter: &FilterIndex,
    split: &[Triple],
) -> Result<Option<EvalReport>> {
    if split.is_empty() {
        return Ok(None);
    }
    evaluate(model, split, filter, dataset.num_relations()).map(Some)
}

fn is_checkpoint_epoch(epoch: usize, total: usize, every: usize) -> bool {
    epoch.is_multiple_of(every) || epoch == total
}

pub struct PretrainOutcome<S> {
    pub ensemble: TeacherEnsemble<S>,
    /// Mean training CE per modality, one entry per epoch.
    pub loss_trace: Vec<[f64; NUM_MODALITIES]>,
    /// `(epoch, per-modality validation MRR)`.
    pub valid_trace: Vec<(usize, [f64; NUM_MODALITIES])>,
    /// Epoch each kept teacher comes from (0 = initialization).
    pub best_epochs: [usize; NUM_MODALITIES],
    pub best_valid_mrr: [f64; NUM_MODALITIES],
}

/// Pre-trains the three teachers for `config.teacher_epochs` epochs and keeps,
/// per modality, the parameters with the best validation MRR.
pub fn pretrain_teachers<S: Scalar>(
    dataset: &Dataset,
    visual: FeatureMatrix,
    textual: FeatureMatrix,
    config: &TrainConfig,
) -> Result<PretrainOutcome<S>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut ensemble = TeacherEnsemble::new(dataset, config.dim, visual, textual, &mut rng)?;
    let mut optimizers = TeacherOptimizers::new(config);
    let filter = dataset.filter_index();
    let mut best: Vec<ModalTeacher<S>> = ensemble.teachers.to_vec();
    let mut best_epochs = [0; NUM_MODALITIES];
    let mut best_valid_mrr = [f64::NEG_INFINITY; NUM_MODALITIES];
    let mut loss_trace = Vec::with_capacity(config.teacher_epochs);
    let mut valid_trace = Vec::new();
    for epoch in 1..=config.teacher_epochs {
        let losses = pretrain_epoch(&mut ensemble, &dataset.train_aug, config, &mut optimizers, &mut rng)
            .map_err(|e| e.context(format!("pre-training epoch {epoch}")))?;
        loss_trace.push(losses.map(|l| l.as_f64()));
        log::info!(
            "pretrain epoch {epoch}: CE S={:.4} V={:.4} D={:.4}",
            losses[0].as_f64(),
            losses[1].as_f64(),
            losses[2].as_f64()
        );
        if dataset.valid.is_empty() || !is_checkpoint_epoch(epoch, config.teacher_epochs, config.eval_every) {
            continue;
        }
        let mut mrrs = [0.0; NUM_MODALITIES];
        for (m, teacher) in ensemble.teachers.iter().enumerate() {
            let report = evaluate(teacher, &dataset.valid, &filter, dataset.num_relations())?;
            mrrs[m] = report.metrics.mrr;
            if report.metrics.mrr > best_valid_mrr[m] {
                best_valid_mrr[m] = report.metrics.mrr;
                best_epochs[m] = epoch;
                best[m] = teacher.clone();
            }
        }
        valid_trace.push((epoch, mrrs));
    }
    if dataset.valid.is_empty() || config.teacher_epochs == 0 {
        best = ensemble.teachers.to_vec();
        best_epochs = [config.teacher_epochs; NUM_MODALITIES];
    }
    let ensemble = TeacherEnsemble {
        teachers: best.try_into().expect("three teachers"),
    };
    Ok(PretrainOutcome {
        ensemble,
        loss_trace,
        valid_trace,
        best_epochs,
        best_valid_mrr,
    })
}

pub struct StudentOutcome<S> {
    pub student: KgeModel<S>,
    pub policy: PolicyNet<S>,
    pub epochs: Vec<EpochReport>,
    pub valid_trace: Vec<(usize, f64)>,
    pub best_epoch: usize,
}

/// Trains a student against frozen teachers and keeps the best-validation
/// student (with the policy as it was at that epoch).
pub fn train_student<S: Scalar>(
    dataset: &Dataset,
    ensemble: &TeacherEnsemble<S>,
    config: &TrainConfig,
) -> Result<StudentOutcome<S>> {
    let mut trainer = StudentTrainer::new(dataset, ensemble, config)?;
    let filter = dataset.filter_index();
    let mut best = (trainer.student.clone(), trainer.policy.clone());
    let mut best_mrr = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut valid_trace = Vec::new();
    for epoch in 1..=config.epochs {
        let report = trainer.run_epoch(epoch)?;
        log::info!(
            "student epoch {epoch}: CE={:.4} KD={:.4} RC={:.4} mean delta={:.3}",
            report.loss.ce,
            report.loss.kd,
            report.loss.rc,
            report.mean_delta
        );
        epochs.push(report);
        if dataset.valid.is_empty() || !is_checkpoint_epoch(epoch, config.epochs, config.eval_every) {
            continue;
        }
        let mrr = evaluate(&trainer.student, &dataset.valid, &filter, dataset.num_relations())?
            .metrics
            .mrr;
        valid_trace.push((epoch, mrr));
        if mrr > best_mrr {
            best_mrr = mrr;
            best_epoch = epoch;
            best = (trainer.student.clone(), trainer.policy.clone());
        }
    }
    if dataset.valid.is_empty() || config.epochs == 0 {
        best = (trainer.student.clone(), trainer.policy.clone());
        best_epoch = config.epochs;
    }
    Ok(StudentOutcome {
        student: best.0,
        policy: best.1,
        epochs,
        valid_trace,
        best_epoch,
    })
}

/// Test metrics of each teacher alone, of the softmax-averaged ensemble, and
/// the plain mean of the three single-teacher MRRs.
#[derive(Debug, Clone)]
pub struct TeacherBaselines {
    pub per_teacher: [Metrics; NUM_MODALITIES],
    pub softmax_average: Metrics,
    pub mean_teacher_mrr: f64,
}

pub fn teacher_baselines<S: Scalar>(
    dataset: &Dataset,
    ensemble: &TeacherEnsemble<S>,
    split: &[Triple],
) -> Result<TeacherBaselines> {
    let filter = dataset.filter_index();
    let nr = dataset.num_relations();
    let mut per = Vec::with_capacity(NUM_MODALITIES);
    for t in &ensemble.teachers {
        per.push(evaluate(t, split, &filter, nr)?.metrics);
    }
    let per_teacher: [Metrics; NUM_MODALITIES] = per.try_into().expect("three");
    let mean_teacher_mrr = per_teacher.iter().map(|m| m.mrr).sum::<f64>() / NUM_MODALITIES as f64;
    let softmax_average = evaluate(&SoftmaxAverage(ensemble), split, &filter, nr)?.metrics;
    Ok(TeacherBaselines {
        per_teacher,
        softmax_average,
        mean_teacher_mrr,
    })
}

fn csv_header(manifest_hash: &str, columns: &str) -> String {
    format!("# manifest={manifest_hash}\n{columns}\n")
}

/// `epoch,structural,visual,textual` mean training CE.
pub fn pretrain_loss_csv(trace: &[[f64; NUM_MODALITIES]], manifest_hash: &str) -> String {
    let mut out = csv_header(manifest_hash, "epoch,structural,visual,textual");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i + 1, l[0], l[1], l[2]);
    }
    out
}

/// `epoch,total,ce,rc,kd,nekd,nnkd,vanilla`.
pub fn loss_trace_csv(epochs: &[EpochReport], manifest_hash: &str) -> String {
    let mut out = csv_header(manifest_hash, "epoch,total,ce,rc,kd,nekd,nnkd,vanilla");
    for e in epochs {
        let l = &e.loss;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.epoch, l.total, l.ce, l.rc, l.kd, l.nekd, l.nnkd, l.vanilla
        );
    }
    out
}

/// `step,epoch,mean_delta`, one row per optimizer step.
pub fn reward_curve_csv(epochs: &[EpochReport], manifest_hash: &str) -> String {
    let mut out = csv_header(manifest_hash, "step,epoch,mean_delta");
    let mut step = 0;
    for e in epochs {
        for d in &e.step_deltas {
            step += 1;
            let _ = writeln!(out, "{step},{},{d}", e.epoch);
        }
    }
    out
}

/// Per epoch, the fraction of triples assigned to each teacher subset.
pub fn strategy_stats_csv(epochs: &[EpochReport], manifest_hash: &str) -> String {
    let labels: Vec<String> = (0..NUM_ACTIONS)
        .map(|i| Action::new(i).expect("valid").label())
        .collect();
    let mut out = csv_header(manifest_hash, &format!("epoch,{}", labels.join(",")));
    for e in epochs {
        let row: Vec<String> = e.action_fractions.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "{},{}", e.epoch, row.join(","));
    }
    out
}

/// Requires both feature matrices to cover the dataset, naming the modality
/// that does not.
pub fn check_features(dataset: &Dataset, visual: &FeatureMatrix, textual: &FeatureMatrix) -> Result<()> {
    for (m, f) in [(Modality::Visual, visual), (Modality::Textual, textual)] {
        if f.modality != m {
            return Err(Error::Config(format!("{m} feature file is tagged {}", f.modality)));
        }
        if f.num_entities != dataset.num_entities() {
            return Err(Error::Shape(format!(
                "{m} features have {} rows for {} entities",
                f.num_entities,
                dataset.num_entities()
            )));
        }
    }
    Ok(())
}

/// Settings for the 200-entity synthetic MKG: small embeddings and policy,
/// larger steps, so a full teacher + student run takes seconds.
pub fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 32,
        learning_rate: 0.01,
        policy_learning_rate: 1e-3,
        batch_size: 128,
        epochs: 60,
        teacher_epochs: 60,
        eval_every: 5,
        seed,
        policy_hidden: 64,
        cache_teacher_logits: true,
        ..TrainConfig::default()
    }
}
