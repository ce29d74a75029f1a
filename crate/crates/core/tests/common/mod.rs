//! Helpers shared by the integration test targets: finite differences,
//! brute-force oracles and the desk-scale experiment.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::time::Instant;

use dsom::eval::{evaluate, Scorer};
use dsom::kg::{Dataset, Triple, Vocab};
use dsom::pipeline::{desk_config, pretrain_teachers, teacher_baselines, train_student, TeacherBaselines};
use dsom::synth::{generate, synth_features, SynthSpec};
use dsom::{KdVariant, Real, Strategy, TrainConfig};
use rand::Rng;

/// Entries smaller than this in both gradients are compared on an absolute
/// scale instead of a relative one.
pub const GRAD_FLOOR: f64 = 1e-5;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Central differences of `f` at `x`, one entry at a time.
pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest per-entry relative error between an analytic and a numeric gradient.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

pub fn random_logits<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Sort-based rank with the half-floor tie rule.
pub fn brute_rank(scores: &[f64], target: usize, known_true: &[usize]) -> usize {
    let mut competitors: Vec<f64> = (0..scores.len())
        .filter(|&e| e != target && !known_true.contains(&e))
        .map(|e| scores[e])
        .collect();
    competitors.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let st = scores[target];
    let better = competitors.iter().position(|&s| s <= st).unwrap_or(competitors.len());
    let tied = competitors[better..].iter().take_while(|&&s| s == st).count();
    1 + better + tied / 2
}

/// Scores read from a fixed table keyed by `(head, rel)`.
pub struct TableScorer {
    pub num_entities: usize,
    pub scores: BTreeMap<(usize, usize), Vec<f64>>,
}

impl Scorer<f64> for TableScorer {
    fn num_entities(&self) -> usize {
        self.num_entities
    }

    fn score_all(&self, head: usize, rel: usize) -> Vec<f64> {
        self.scores[&(head, rel)].clone()
    }
}

/// Random tiny dataset with an integer-valued scorer so ties are common.
pub fn random_ranking_instance<R: Rng>(rng: &mut R) -> (Dataset, TableScorer) {
    let n = rng.random_range(3..9);
    let r = rng.random_range(1..4);
    let mut entities = Vocab::new();
    for i in 0..n {
        entities.intern(&format!("e{i}"));
    }
    let mut relations = Vocab::new();
    for i in 0..r {
        relations.intern(&format!("r{i}"));
    }
    let draw = |k: usize, rng: &mut R| -> Vec<Triple> {
        (0..k)
            .map(|_| Triple::new(rng.random_range(0..n), rng.random_range(0..r), rng.random_range(0..n)))
            .collect()
    };
    let train = draw(rng.random_range(1..12), rng);
    let valid = draw(rng.random_range(0..4), rng);
    let test = draw(rng.random_range(1..6), rng);
    let ds = Dataset::from_ids(entities, relations, train, valid, test);
    let levels = rng.random_range(1..4);
    let mut scores = BTreeMap::new();
    for h in 0..n {
        for rel in 0..2 * r {
            scores.insert((h, rel), (0..n).map(|_| rng.random_range(0..levels) as f64).collect());
        }
    }
    (
        ds,
        TableScorer {
            num_entities: n,
            scores,
        },
    )
}

/// Ranks in evaluation order computed by looping over the raw splits.
pub fn brute_evaluate(ds: &Dataset, model: &TableScorer) -> Vec<usize> {
    let all: Vec<Triple> = ds.train.iter().chain(&ds.valid).chain(&ds.test).copied().collect();
    let nr = ds.num_relations();
    let mut ranks = Vec::new();
    for t in &ds.test {
        let tails: Vec<usize> = all
            .iter()
            .filter(|x| x.head == t.head && x.rel == t.rel)
            .map(|x| x.tail)
            .collect();
        ranks.push(brute_rank(&model.scores[&(t.head, t.rel)], t.tail, &tails));
        let heads: Vec<usize> = all
            .iter()
            .filter(|x| x.tail == t.tail && x.rel == t.rel)
            .map(|x| x.head)
            .collect();
        ranks.push(brute_rank(&model.scores[&(t.tail, t.rel + nr)], t.head, &heads));
    }
    ranks
}

/// Direct transcription of the neighbor-decoupled loss:
/// `alpha * KL(b_t || b_s) + beta * KL(p~_t || p~_s)`.
pub fn literal_ndkd(tea: &[f64], stu: &[f64], neighbors: &[usize], tau: f64, alpha: f64, beta: f64) -> f64 {
    let soft = |z: &[f64]| -> Vec<f64> {
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| ((v - m) / tau).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    };
    let (pt, ps) = (soft(tea), soft(stu));
    let k = neighbors.len() as f64;
    let bt: f64 = neighbors.iter().map(|&n| pt[n]).sum::<f64>() / k;
    let bs: f64 = neighbors.iter().map(|&n| ps[n]).sum::<f64>() / k;
    let nekd = bt * (bt / bs).ln() + (1.0 - bt) * ((1.0 - bt) / (1.0 - bs)).ln();
    let outside: Vec<usize> = (0..tea.len()).filter(|e| !neighbors.contains(e)).collect();
    let zt: f64 = outside.iter().map(|&e| pt[e]).sum();
    let zs: f64 = outside.iter().map(|&e| ps[e]).sum();
    let nnkd: f64 = outside
        .iter()
        .map(|&e| {
            let (a, b) = (pt[e] / zt, ps[e] / zs);
            a * (a / b).ln()
        })
        .sum();
    alpha * nekd + beta * nnkd
}

pub struct DeskRun {
    pub seed: u64,
    pub baselines: TeacherBaselines,
    pub ndkd_rc: f64,
    pub vanilla_rc: f64,
    /// Epoch-mean advantage of the NDKD + RC run.
    pub deltas: Vec<f64>,
    pub seconds: f64,
}

/// Synthetic MKG with structural and visual signal and a noise textual
/// modality; teachers, then NDKD + RC and vanilla KD + RC students.
pub fn desk_run(seed: u64) -> DeskRun {
    let start = Instant::now();
    let kg = generate(&SynthSpec {
        seed: 7 + seed,
        ..SynthSpec::default()
    })
    .unwrap();
    let (visual, textual) = synth_features(&kg, 16, 1, 100 + seed).unwrap();
    let ds = &kg.dataset;
    let cfg = desk_config(seed);
    let pre = pretrain_teachers::<Real>(ds, visual, textual, &cfg).unwrap();
    let baselines = teacher_baselines(ds, &pre.ensemble, &ds.test).unwrap();
    let filter = ds.filter_index();
    let student_mrr = |kd_variant: KdVariant| {
        let c = TrainConfig {
            strategy: Strategy::Reinforced,
            kd_variant,
            ..cfg.clone()
        };
        let out = train_student::<Real>(ds, &pre.ensemble, &c).unwrap();
        let mrr = evaluate(&out.student, &ds.test, &filter, ds.num_relations())
            .unwrap()
            .metrics
            .mrr;
        (mrr, out.epochs.iter().map(|e| e.mean_delta).collect::<Vec<_>>())
    };
    let (ndkd_rc, deltas) = student_mrr(KdVariant::Ndkd);
    let (vanilla_rc, _) = student_mrr(KdVariant::Vanilla);
    DeskRun {
        seed,
        baselines,
        ndkd_rc,
        vanilla_rc,
        deltas,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Mean of the first and the last quarter of `xs`.
pub fn quartile_means(xs: &[f64]) -> (f64, f64) {
    let q = (xs.len() / 4).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&xs[..q]), mean(&xs[xs.len() - q..]))
}

use dsom::backbone::{ce_loss_and_grads, ComplexEmbeddingTable, Projection};
use dsom::distill::kd_loss;
use dsom::kg::build_neighbor_index;
use dsom::reinforce::{rc_loss_and_grads, Action, PolicyNet, PolicySample, NUM_ACTIONS};
use dsom::student::student_total_loss;
use dsom::{FeatureMatrix, KgeModel, Modality};

const FD_STEP: f64 = 1e-5;

fn flatten_tables(tables: &[&ComplexEmbeddingTable<f64>]) -> Vec<f64> {
    tables.iter().flat_map(|t| t.re.iter().chain(&t.im).copied()).collect()
}

fn unflatten_tables(x: &[f64], shapes: &[(usize, usize)]) -> Vec<ComplexEmbeddingTable<f64>> {
    let mut off = 0;
    shapes
        .iter()
        .map(|&(count, dim)| {
            let len = count * dim;
            let mut t = ComplexEmbeddingTable::zeros(count, dim);
            t.re.copy_from_slice(&x[off..off + len]);
            t.im.copy_from_slice(&x[off + len..off + 2 * len]);
            off += 2 * len;
            t
        })
        .collect()
}

fn random_batch<R: Rng>(n: usize, nr: usize, k: usize, rng: &mut R) -> Vec<Triple> {
    (0..k)
        .map(|_| Triple::new(rng.random_range(0..n), rng.random_range(0..nr), rng.random_range(0..n)))
        .collect()
}

/// Random neighbor set of size `1..n` that contains `target`.
fn random_neighbors<R: Rng>(n: usize, target: usize, rng: &mut R) -> Vec<usize> {
    let size = rng.random_range(1..n);
    let mut set: Vec<usize> = rand::seq::index::sample(rng, n, size).into_vec();
    if !set.contains(&target) {
        set[0] = target;
    }
    set.sort_unstable();
    set
}

/// Worst relative error of every analytic gradient against central
/// differences on small random instances, one entry per check.
pub fn gradient_suite(seed: u64) -> Vec<(String, f64)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let (n, nr, dim) = (12, 6, 4);

    // cross-entropy w.r.t. both tables
    let model = KgeModel::<f64>::random(n, nr, dim, &mut rng);
    let batch = random_batch(n, nr, 5, &mut rng);
    let shapes = [(n, dim), (nr, dim)];
    let ce = ce_loss_and_grads(&batch, &model.entities, &model.relations).unwrap();
    let x = flatten_tables(&[&model.entities, &model.relations]);
    let num = numeric_grad(&x, FD_STEP, |x| {
        let t = unflatten_tables(x, &shapes);
        ce_loss_and_grads(&batch, &t[0], &t[1]).unwrap().loss
    });
    let ana = flatten_tables(&[&ce.grad_entities, &ce.grad_relations]);
    out.push(("cross-entropy".to_string(), max_rel_err(&ana, &num)));

    // distillation terms w.r.t. student logits
    let variants = [
        KdVariant::Vanilla,
        KdVariant::Ndkd,
        KdVariant::Dkd,
        KdVariant::NekdOnly,
        KdVariant::NnkdOnly,
    ];
    for variant in variants {
        for tau_sq in [false, true] {
            let mut worst: f64 = 0.0;
            for _ in 0..4 {
                let m = rng.random_range(3..16);
                let tea = random_logits(m, 3.0, &mut rng);
                let stu = random_logits(m, 3.0, &mut rng);
                let target = rng.random_range(0..m);
                let neighbors = random_neighbors(m, target, &mut rng);
                let tau = rng.random_range(0.5..5.0);
                let (alpha, beta) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
                let kd = |s: &[f64]| kd_loss(variant, &tea, s, target, &neighbors, tau, alpha, beta, tau_sq).unwrap();
                let ana = kd(&stu).1;
                let num = numeric_grad(&stu, FD_STEP, |s| kd(s).0.total);
                worst = worst.max(max_rel_err(&ana, &num));
            }
            let label = if tau_sq {
                format!("{variant} (tau^2)")
            } else {
                variant.to_string()
            };
            out.push((label, worst));
        }
    }

    // full student objective w.r.t. the student tables
    let mut entities = Vocab::new();
    for i in 0..n {
        entities.intern(&format!("e{i}"));
    }
    let mut relations = Vocab::new();
    for i in 0..nr / 2 {
        relations.intern(&format!("r{i}"));
    }
    let train = random_batch(n, nr / 2, 20, &mut rng);
    let ds = Dataset::from_ids(entities, relations, train, vec![], vec![]);
    let neighbors = build_neighbor_index(&ds.train_aug);
    let batch: Vec<Triple> = ds.train_aug[..6].to_vec();
    let combined: Vec<Vec<f64>> = batch.iter().map(|_| random_logits(n, 3.0, &mut rng)).collect();
    let policy = PolicyNet::<f64>::zeros(3 * n, 4);
    for variant in [KdVariant::Ndkd, KdVariant::Vanilla] {
        let cfg = TrainConfig {
            kd_variant: variant,
            tau: 2.0,
            gamma: 1.5,
            ..TrainConfig::default()
        };
        let loss = |e: &ComplexEmbeddingTable<f64>, r: &ComplexEmbeddingTable<f64>| {
            let student = KgeModel {
                entities: e.clone(),
                relations: r.clone(),
            };
            student_total_loss(&batch, &student, &combined, &neighbors, &policy, &[], &cfg).unwrap()
        };
        let ana_out = loss(&model.entities, &model.relations);
        let ana = flatten_tables(&[&ana_out.grad_entities, &ana_out.grad_relations]);
        let num = numeric_grad(&x, FD_STEP, |x| {
            let t = unflatten_tables(x, &shapes);
            loss(&t[0], &t[1]).parts.total
        });
        out.push((format!("student objective ({variant})"), max_rel_err(&ana, &num)));
    }

    // policy loss w.r.t. all policy parameters
    let (input, hidden) = (9, 16);
    let policy = PolicyNet::<f64>::random(input, hidden, &mut rng);
    let samples: Vec<PolicySample<f64>> = (0..8)
        .map(|_| PolicySample {
            state: random_logits(input, 2.0, &mut rng),
            action: Action::new(rng.random_range(0..NUM_ACTIONS)).unwrap(),
            advantage: [-11.0, 0.0, 11.0][rng.random_range(0..3)],
        })
        .collect();
    let (_, g) = rc_loss_and_grads(&policy, &samples).unwrap();
    let flat = |p: &PolicyNet<f64>| p.params().concat();
    let x = flat(&policy);
    let num = numeric_grad(&x, FD_STEP, |x| {
        let mut p = policy.clone();
        let mut off = 0;
        for part in p.params_mut() {
            part.copy_from_slice(&x[off..off + part.len()]);
            off += part.len();
        }
        rc_loss_and_grads(&p, &samples).unwrap().0
    });
    out.push(("policy (REINFORCE)".to_string(), max_rel_err(&flat(&g), &num)));

    // projection weights through the projected-teacher cross-entropy
    let feat_dim = 5;
    let data: Vec<f32> = (0..n * feat_dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let features = FeatureMatrix::new(Modality::Visual, n, feat_dim, data).unwrap();
    let proj = Projection::<f64>::random(feat_dim, dim, &mut rng);
    let rels = ComplexEmbeddingTable::<f64>::random(nr, dim, &mut rng);
    let batch = random_batch(n, nr, 5, &mut rng);
    let table = proj.project(&features).unwrap();
    let ce = ce_loss_and_grads(&batch, &table, &rels).unwrap();
    let ana = proj.backward(&features, &ce.grad_entities).weights;
    let num = numeric_grad(&proj.weights, FD_STEP, |w| {
        let p = Projection {
            weights: w.to_vec(),
            ..proj.clone()
        };
        ce_loss_and_grads(&batch, &p.project(&features).unwrap(), &rels)
            .unwrap()
            .loss
    });
    out.push(("projection".to_string(), max_rel_err(&ana, &num)));
    out
}

use dsom::distill::{decouple, dkd_loss, ndkd_loss, temp_scale};
use dsom::eval::filtered_rank;
use dsom::optim::Adam;
use dsom::reinforce::aggregate_teachers;

/// Instances where `filtered_rank` and `evaluate` disagree with the
/// brute-force oracles, out of `instances`.
pub fn ranking_mismatches(instances: usize, seed: u64) -> usize {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..instances {
        let n = rng.random_range(1..12);
        let levels = rng.random_range(1..5);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let target = rng.random_range(0..n);
        let known: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
        let rank_ok = filtered_rank(&scores, target, &known).unwrap() == brute_rank(&scores, target, &known);

        let (ds, model) = random_ranking_instance(&mut rng);
        let report = evaluate(&model, &ds.test, &ds.filter_index(), ds.num_relations()).unwrap();
        let got: Vec<usize> = report.ranks.iter().map(|r| r.rank).collect();
        let want = brute_evaluate(&ds, &model);
        let mrr = want.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / want.len() as f64;
        let eval_ok = got == want && report.metrics.mrr == mrr;
        if !(rank_ok && eval_ok) {
            bad += 1;
        }
    }
    bad
}

/// Largest gap between `ndkd_loss` and [`literal_ndkd`] over random instances.
pub fn ndkd_literal_gap(instances: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let m = rng.random_range(2..30);
        let tea = random_logits(m, 4.0, &mut rng);
        let stu = random_logits(m, 4.0, &mut rng);
        let target = rng.random_range(0..m);
        let neighbors = random_neighbors(m, target, &mut rng);
        let tau = rng.random_range(0.5..6.0);
        let (alpha, beta) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let tv = decouple(&temp_scale(&tea, tau), &neighbors).unwrap();
        let sv = decouple(&temp_scale(&stu, tau), &neighbors).unwrap();
        let got = ndkd_loss(&tv, &sv, alpha, beta).unwrap().loss;
        let want = literal_ndkd(&tea, &stu, &neighbors, tau, alpha, beta);
        worst = worst.max((got - want).abs());
    }
    worst
}

/// Largest gap between `aggregate_teachers` and a per-entity mean.
pub fn aggregate_gap(instances: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(1..40);
        let tv: [Vec<f64>; 3] = std::array::from_fn(|_| random_logits(n, 10.0, &mut rng));
        for action in Action::all() {
            let got = aggregate_teachers(&tv, action);
            for e in 0..n {
                let mut sum = 0.0;
                let mut k = 0.0;
                for (m, v) in tv.iter().enumerate() {
                    if action.mask() & (1 << m) != 0 {
                        sum += v[e];
                        k += 1.0;
                    }
                }
                worst = worst.max((got[e] - sum / k).abs());
            }
        }
    }
    worst
}

/// Largest `|NDKD - DKD|` with the neighbor set reduced to the target.
pub fn ndkd_dkd_gap(instances: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let m = rng.random_range(2..50);
        let tau = rng.random_range(0.5..6.0);
        let tea = temp_scale(&random_logits(m, 5.0, &mut rng), tau);
        let stu = temp_scale(&random_logits(m, 5.0, &mut rng), tau);
        let target = rng.random_range(0..m);
        let (alpha, beta) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let nd = ndkd_loss(
            &decouple(&tea, &[target]).unwrap(),
            &decouple(&stu, &[target]).unwrap(),
            alpha,
            beta,
        )
        .unwrap();
        let dk = dkd_loss(&tea, &stu, target, alpha, beta).unwrap();
        worst = worst.max((nd.loss - dk.loss).abs());
        for (a, b) in nd.grad.iter().zip(&dk.grad) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Step count after which the mean probability of `good` over held-out
/// states first exceeds 0.9, in an environment whose advantage is `+11` for
/// `good` and `-11` for every other subset. `None` if it never does within
/// `max_steps`.
pub fn bandit_steps_to_converge(seed: u64, good: Action, max_steps: usize, lr: f64) -> Option<usize> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (input, hidden, batch) = (9, 16, 16);
    let mut policy = PolicyNet::<f64>::random(input, hidden, &mut rng);
    let mut opt = Adam::new(lr);
    let state =
        |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> { (0..input).map(|_| StandardNormal.sample(rng)).collect() };
    let probe: Vec<Vec<f64>> = (0..64).map(|_| state(&mut rng)).collect();
    let p_good = |p: &PolicyNet<f64>| {
        probe
            .iter()
            .map(|s| p.forward(s).unwrap().probs[good.index()])
            .sum::<f64>()
            / probe.len() as f64
    };
    for step in 1..=max_steps {
        let samples: Vec<PolicySample<f64>> = (0..batch)
            .map(|_| {
                let s = state(&mut rng);
                let probs = policy.forward(&s).unwrap().probs;
                let action = dsom::reinforce::sample_action(&probs, &mut rng);
                let advantage = if action == good { 11.0 } else { -11.0 };
                PolicySample {
                    state: s,
                    action,
                    advantage,
                }
            })
            .collect();
        let (_, g) = rc_loss_and_grads(&policy, &samples).unwrap();
        let grads = g.params();
        let mut params = policy.params_mut();
        opt.step(&mut params, &grads).unwrap();
        if p_good(&policy) > 0.9 {
            return Some(step);
        }
    }
    None
}

/// `(tea_ce, stu_ce, expected reward)` rows covering strict win, strict
/// loss, exact tie and a one-ulp win.
pub fn reward_truth_table() -> Vec<(f64, f64, f64)> {
    let cfg = TrainConfig::default();
    let near = 1.5f64;
    vec![
        (0.5, 1.0, cfg.reward_pos),
        (1.0, 0.5, cfg.reward_neg),
        (0.7, 0.7, cfg.reward_neg),
        (near - f64::EPSILON, near, cfg.reward_pos),
    ]
}

/// Every advantage produced by `RewardRecord::evaluate` over random teacher
/// vectors, student CEs and all seven actions.
pub fn observed_advantages(instances: usize, seed: u64) -> Vec<f64> {
    use dsom::reinforce::RewardRecord;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let cfg = TrainConfig::default();
    let mut seen = Vec::new();
    for _ in 0..instances {
        let n = rng.random_range(2..10);
        let tv: [Vec<f64>; 3] = std::array::from_fn(|_| random_logits(n, 4.0, &mut rng));
        let target = rng.random_range(0..n);
        let stu_ce = rng.random_range(0.0..4.0);
        for action in Action::all() {
            let rec = RewardRecord::evaluate(&tv, action, target, stu_ce, &cfg);
            if !seen.contains(&rec.advantage) {
                seen.push(rec.advantage);
            }
        }
    }
    seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
    seen
}
