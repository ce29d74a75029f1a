//! Desk-scale run on the synthetic MKG: teachers, then students under a few
//! strategy / distillation settings, printing test MRR for each.
//!
//! `cargo run --release -p dsom-core --example desk -- [seed]`

use std::time::Instant;

use dsom::pipeline::{pretrain_teachers, teacher_baselines, train_student};
use dsom::synth::{generate, synth_features, SynthSpec};
use dsom::{eval::evaluate, KdVariant, Real, Strategy, TrainConfig};

fn main() -> dsom::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let kg = generate(&SynthSpec {
        seed: 7 + seed,
        ..Default::default()
    })?;
    let (visual, textual) = synth_features(&kg, 16, 1, 100 + seed)?;
    let ds = &kg.dataset;
    let cfg = dsom::pipeline::desk_config(seed);
    let t0 = Instant::now();
    let pre = pretrain_teachers::<Real>(ds, visual, textual, &cfg)?;
    println!(
        "pretrain {:.1}s best epochs {:?} valid {:?}",
        t0.elapsed().as_secs_f64(),
        pre.best_epochs,
        pre.best_valid_mrr
    );
    let base = teacher_baselines(ds, &pre.ensemble, &ds.test)?;
    println!(
        "teachers test MRR S={:.4} V={:.4} D={:.4} mean={:.4} softmax-avg={:.4}",
        base.per_teacher[0].mrr,
        base.per_teacher[1].mrr,
        base.per_teacher[2].mrr,
        base.mean_teacher_mrr,
        base.softmax_average.mrr
    );
    let filter = ds.filter_index();
    let runs: &[(Strategy, KdVariant, f64)] = &[
        (Strategy::Reinforced, KdVariant::Ndkd, cfg.gamma),
        (Strategy::Reinforced, KdVariant::Vanilla, cfg.gamma),
        (Strategy::TeacherAvg, KdVariant::Ndkd, cfg.gamma),
        (Strategy::TeacherAvg, KdVariant::None, 0.0),
    ];
    for &(strategy, kd_variant, gamma) in runs {
        let c = TrainConfig {
            strategy,
            kd_variant,
            gamma,
            ..cfg.clone()
        };
        let t0 = Instant::now();
        let out = train_student::<Real>(ds, &pre.ensemble, &c)?;
        let m = evaluate(&out.student, &ds.test, &filter, ds.num_relations())?.metrics;
        let n = out.epochs.len();
        let q = (n / 4).max(1);
        let first: f64 = out.epochs[..q].iter().map(|e| e.mean_delta).sum::<f64>() / q as f64;
        let last: f64 = out.epochs[n - q..].iter().map(|e| e.mean_delta).sum::<f64>() / q as f64;
        let fr = out.epochs.last().unwrap().action_fractions;
        println!(
            "{strategy}/{kd_variant} g={gamma}: test MRR {:.4} H@10 {:.3} best ep {} ({:.1}s) delta {:.2}->{:.2} last actions {:?}",
            m.mrr, m.hits10, out.best_epoch, t0.elapsed().as_secs_f64(), first, last,
            fr.map(|f| (f * 100.0).round() / 100.0)
        );
    }
    Ok(())
}
