use dsom::backbone::ce_loss_and_grads;
use dsom::checkpoint::{
    load_model, load_teachers, policy_from_bytes, policy_to_bytes, save_model, save_teachers, TeacherManifest,
};
use dsom::distill::temp_scale;
use dsom::eval::evaluate;
use dsom::kg::{Dataset, Triple};
use dsom::optim::Adam;
use dsom::pipeline::{desk_config, pretrain_teachers, train_student};
use dsom::reinforce::Action;
use dsom::student::fixed_strategy_action;
use dsom::synth::{generate, synth_features, SynthSpec};
use dsom::teachers::ModalTeacher;
use dsom::{KdVariant, Modality, Real, Strategy, TrainConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn twenty_triple_kg() -> Dataset {
    let named: Vec<(String, String, String)> = (0..20)
        .map(|i| {
            (
                format!("n{}", i % 10),
                format!("r{}", i % 3),
                format!("n{}", (i * 7 + 3) % 10),
            )
        })
        .collect();
    Dataset::from_named_splits(&named, &[], &[]).unwrap()
}

#[test]
fn toy_graph_is_learnable() {
    let ds = twenty_triple_kg();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = ModalTeacher::<f64>::structural(ds.num_entities(), ds.num_relations_aug(), 16, &mut rng);
    let mut opt = Adam::new(0.05);
    for _ in 0..200 {
        model.train_step(&ds.train_aug, &mut opt).unwrap();
    }
    let ce = ce_loss_and_grads(&ds.train_aug, &model.entities, &model.relations)
        .unwrap()
        .loss;
    assert!(ce < 0.1, "train CE {ce}");
}

#[test]
fn temperature_never_lowers_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    use rand::Rng;
    for _ in 0..200 {
        let logits: Vec<f64> = (0..rng.random_range(2..20))
            .map(|_| rng.random_range(-6.0..6.0))
            .collect();
        let mut last = 0.0;
        for tau in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 64.0] {
            let h = temp_scale(&logits, tau).entropy();
            assert!(h >= last - 1e-12);
            last = h;
        }
        assert!(last <= (logits.len() as f64).ln() + 1e-12);
    }
}

#[test]
fn fixed_strategies_pick_lowest_cross_entropy() {
    // target 0; V is the only teacher favoring it, S+V averages better than S
    let tv = [vec![0.0, 2.0, 0.0], vec![4.0, 0.0, 0.0], vec![-3.0, 0.0, 6.0]];
    let best = fixed_strategy_action(Strategy::BestTeacher, &tv, 0).unwrap();
    assert_eq!(best, Action::single(Modality::Visual));
    let strat = fixed_strategy_action(Strategy::BestStrategy, &tv, 0).unwrap();
    assert_eq!(strat, Action::single(Modality::Visual));
    assert_eq!(
        fixed_strategy_action(Strategy::TeacherAvg, &tv, 0),
        Some(Action::everything())
    );
    assert_eq!(fixed_strategy_action(Strategy::Reinforced, &tv, 0), None);
    // the most confident teacher is the textual one (peak softmax on entity 2)
    let conf = fixed_strategy_action(Strategy::ConfTeacher, &tv, 0).unwrap();
    assert_eq!(conf, Action::single(Modality::Textual));
}

fn small_run() -> (dsom::synth::SynthKg, TrainConfig) {
    let kg = generate(&SynthSpec {
        num_entities: 60,
        num_triples: 500,
        num_relations: 4,
        ..SynthSpec::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        teacher_epochs: 4,
        epochs: 4,
        eval_every: 2,
        ..desk_config(3)
    };
    (kg, cfg)
}

#[test]
fn seeded_runs_repeat_exactly() {
    let (kg, cfg) = small_run();
    let ds = &kg.dataset;
    let run = || {
        let (v, d) = synth_features(&kg, 8, 1, 0).unwrap();
        let pre = pretrain_teachers::<Real>(ds, v, d, &cfg).unwrap();
        let out = train_student(ds, &pre.ensemble, &cfg).unwrap();
        evaluate(&out.student, &ds.test, &ds.filter_index(), ds.num_relations())
            .unwrap()
            .metrics
            .to_json()
    };
    assert_eq!(run(), run());
}

#[test]
fn every_strategy_and_variant_trains() {
    let (kg, cfg) = small_run();
    let ds = &kg.dataset;
    let (v, d) = synth_features(&kg, 8, 1, 0).unwrap();
    let pre = pretrain_teachers::<Real>(ds, v, d, &cfg).unwrap();
    for strategy in [
        Strategy::Reinforced,
        Strategy::ConfTeacher,
        Strategy::BestTeacher,
        Strategy::BestStrategy,
        Strategy::TeacherAvg,
    ] {
        for kd_variant in [
            KdVariant::Ndkd,
            KdVariant::Dkd,
            KdVariant::Vanilla,
            KdVariant::NekdOnly,
            KdVariant::NnkdOnly,
            KdVariant::None,
        ] {
            let c = TrainConfig {
                strategy,
                kd_variant,
                epochs: 1,
                ..cfg.clone()
            };
            let out = train_student(ds, &pre.ensemble, &c).unwrap();
            let e = &out.epochs[0];
            assert!(e.loss.total.is_finite());
            assert!((e.action_fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            if strategy != Strategy::Reinforced {
                assert_eq!(e.loss.rc, 0.0, "{strategy}");
            }
            if kd_variant == KdVariant::None {
                assert_eq!(e.loss.kd, 0.0);
            }
        }
    }
}

#[test]
fn plain_student_without_distillation_matches_ce_only() {
    let (kg, cfg) = small_run();
    let ds = &kg.dataset;
    let (v, d) = synth_features(&kg, 8, 1, 0).unwrap();
    let pre = pretrain_teachers::<Real>(ds, v, d, &cfg).unwrap();
    let c = TrainConfig {
        strategy: Strategy::TeacherAvg,
        kd_variant: KdVariant::None,
        gamma: 0.0,
        ..cfg
    };
    let out = train_student(ds, &pre.ensemble, &c).unwrap();
    for e in &out.epochs {
        assert_eq!(e.loss.total, e.loss.ce);
        assert_eq!(e.action_fractions[Action::everything().index()], 1.0);
    }
}

#[test]
fn checkpoints_round_trip_through_files() {
    let (kg, cfg) = small_run();
    let ds = &kg.dataset;
    let (v, d) = synth_features(&kg, 8, 1, 0).unwrap();
    let pre = pretrain_teachers::<Real>(ds, v, d, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = TeacherManifest {
        modalities: Modality::ALL.to_vec(),
        dim: cfg.dim,
        num_entities: ds.num_entities(),
        num_relations: ds.num_relations_aug(),
        selection: "best_valid_mrr".into(),
        best_epochs: pre.best_epochs.to_vec(),
        valid_mrr: pre.best_valid_mrr.to_vec(),
        config: cfg.clone(),
        run_manifest: None,
    };
    let path = dir.path().join("teachers.bin");
    save_teachers(&pre.ensemble, &manifest, &path).unwrap();
    let (back, m) = load_teachers::<Real>(&path).unwrap();
    assert_eq!(m, manifest);
    for (a, b) in back.teachers.iter().zip(&pre.ensemble.teachers) {
        assert_eq!(a.entities, b.entities);
        assert_eq!(a.relations, b.relations);
        assert_eq!(a.projection, b.projection);
    }
    let out = train_student(ds, &back, &TrainConfig { epochs: 1, ..cfg }).unwrap();
    let student_path = dir.path().join("student.bin");
    save_model(&out.student, &student_path).unwrap();
    assert_eq!(load_model::<Real>(&student_path).unwrap(), out.student);
    assert_eq!(
        policy_from_bytes::<Real>(&policy_to_bytes(&out.policy)).unwrap(),
        out.policy
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reverse_triples_invert(h in 0usize..50, r in 0usize..10, t in 0usize..50) {
        let tr = Triple::new(h, r, t);
        let rev = tr.reversed(10);
        prop_assert_eq!(rev, Triple::new(t, r + 10, h));
    }
}

#[test]
fn logit_cache_does_not_change_training() {
    let (kg, cfg) = small_run();
    let ds = &kg.dataset;
    let (v, d) = synth_features(&kg, 8, 1, 0).unwrap();
    let pre = pretrain_teachers::<Real>(ds, v, d, &cfg).unwrap();
    let cached = train_student(
        ds,
        &pre.ensemble,
        &TrainConfig {
            cache_teacher_logits: true,
            ..cfg.clone()
        },
    )
    .unwrap();
    let direct = train_student(
        ds,
        &pre.ensemble,
        &TrainConfig {
            cache_teacher_logits: false,
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(cached.student, direct.student);
    assert_eq!(cached.policy, direct.policy);
}
