use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use dsom::checkpoint::{
    load_model, load_teachers, policy_to_bytes, save_model, save_teachers, TeacherManifest, MODEL_MAGIC, TEACHER_MAGIC,
};
use dsom::eval::{evaluate, EvalReport, Scorer};
use dsom::features::apply_missing_mask;
use dsom::kg::{load_dataset, Dataset};
use dsom::manifest::{sha256_hex, RunManifest};
use dsom::pipeline::{self, check_features, pretrain_teachers, teacher_baselines};
use dsom::synth::{generate, synth_features, SynthSpec};
use dsom::teachers::SoftmaxAverage;
use dsom::{FeatureMatrix, Metrics, Modality, Real};
use serde_json::json;

use crate::{EvalArgs, GenSynthArgs, PretrainArgs, SplitName, TeacherChoice, TrainStudentArgs, VocabArgs};

pub fn load_data(dir: &Path) -> Result<Dataset> {
    let ds = load_dataset(dir.join("train.txt"), dir.join("valid.txt"), dir.join("test.txt"))
        .with_context(|| format!("loading dataset from {}", dir.display()))?;
    log::info!(
        "{} entities, {} relations, {}/{}/{} triples",
        ds.num_entities(),
        ds.num_relations(),
        ds.train.len(),
        ds.valid.len(),
        ds.test.len()
    );
    let dump = dir.join("entities.tsv");
    if dump.is_file() {
        let text = fs::read_to_string(&dump).with_context(|| format!("reading {}", dump.display()))?;
        let vocab = dsom::kg::Vocab::parse_dump(&text).with_context(|| format!("parsing {}", dump.display()))?;
        if vocab.names() != ds.entities.names() {
            bail!(
                "{} does not match the entity order of the splits; regenerate it with `dsom vocab`",
                dump.display()
            );
        }
    }
    Ok(ds)
}

pub fn vocab(a: &VocabArgs) -> Result<()> {
    let ds = load_dataset(
        a.data.join("train.txt"),
        a.data.join("valid.txt"),
        a.data.join("test.txt"),
    )
    .with_context(|| format!("loading dataset from {}", a.data.display()))?;
    let out = a.out.as_ref().unwrap_or(&a.data);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("entities.tsv"), ds.entities.dump())?;
    write(&out.join("relations.tsv"), ds.relations.dump())?;
    println!("{}", out.join("entities.tsv").display());
    Ok(())
}

fn load_features(modality: Modality, path: &Path) -> Result<(FeatureMatrix, String)> {
    let bytes = fs::read(path).with_context(|| format!("{modality} feature file {}", path.display()))?;
    let m = FeatureMatrix::from_bytes(&bytes).with_context(|| format!("{modality} feature file {}", path.display()))?;
    if m.modality != modality {
        bail!("{} holds {} features, expected {modality}", path.display(), m.modality);
    }
    Ok((m, sha256_hex(&bytes)))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Fresh `<out>/<phase>-<hash>` directory. Existing runs are never
/// overwritten.
fn run_dir(out: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let dir = out.join(format!("{}-{}", manifest.phase, manifest.short_hash()));
    if dir.join("manifest.json").exists() {
        bail!("run {} already exists", dir.display());
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn stamped(mut m: Metrics, hash: &str) -> Metrics {
    m.manifest = Some(hash.to_string());
    m
}

pub fn gen_synth(a: &GenSynthArgs) -> Result<()> {
    let kg = generate(&SynthSpec {
        num_entities: a.entities,
        num_relations: a.relations,
        num_triples: a.triples,
        num_clusters: a.clusters,
        seed: a.seed,
        ..SynthSpec::default()
    })?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    kg.dataset.write_splits(&a.out)?;
    let (visual, textual) = synth_features(&kg, a.feature_dim, a.signal_modalities, a.seed)?;
    dsom::features::write_feature_file(&visual, a.out.join("visual.feat"))?;
    dsom::features::write_feature_file(&textual, a.out.join("textual.feat"))?;
    let clusters: String = kg
        .cluster_of
        .iter()
        .enumerate()
        .map(|(e, c)| format!("{}\t{c}\n", kg.dataset.entities.name(e)))
        .collect();
    write(&a.out.join("clusters.tsv"), clusters)?;
    println!("{}", a.out.display());
    Ok(())
}

pub fn pretrain(a: &PretrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let ds = load_data(&a.data)?;
    let vpath = a.visual.clone().unwrap_or_else(|| a.data.join("visual.feat"));
    let tpath = a.textual.clone().unwrap_or_else(|| a.data.join("textual.feat"));
    let (mut visual, vhash) = load_features(Modality::Visual, &vpath)?;
    let (mut textual, thash) = load_features(Modality::Textual, &tpath)?;
    check_features(&ds, &visual, &textual)?;
    if a.missing_rate > 0.0 {
        visual = apply_missing_mask(&visual, a.missing_rate, cfg.seed.wrapping_mul(2).wrapping_add(1))?;
        textual = apply_missing_mask(&textual, a.missing_rate, cfg.seed.wrapping_mul(2).wrapping_add(2))?;
    }
    let mut manifest = RunManifest::new("pretrain", &cfg, &ds);
    manifest.inputs.insert("visual".into(), vhash);
    manifest.inputs.insert("textual".into(), thash);
    manifest
        .inputs
        .insert("missing_rate".into(), a.missing_rate.to_string());
    let hash = manifest.hash();
    let dir = run_dir(&a.out, &manifest)?;

    let start = Instant::now();
    let out = pretrain_teachers::<Real>(&ds, visual, textual, &cfg)?;
    manifest
        .timings
        .insert("pretrain".into(), start.elapsed().as_secs_f64());

    let tman = TeacherManifest {
        modalities: Modality::ALL.to_vec(),
        dim: cfg.dim,
        num_entities: ds.num_entities(),
        num_relations: ds.num_relations_aug(),
        selection: "best_valid_mrr".into(),
        best_epochs: out.best_epochs.to_vec(),
        valid_mrr: out.best_valid_mrr.to_vec(),
        config: cfg.clone(),
        run_manifest: Some(hash.clone()),
    };
    save_teachers(&out.ensemble, &tman, dir.join("teachers.bin"))?;

    let mut metrics = serde_json::Map::new();
    for (name, split) in [("valid", &ds.valid), ("test", &ds.test)] {
        if split.is_empty() {
            continue;
        }
        let b = teacher_baselines(&ds, &out.ensemble, split)?;
        let mut per = serde_json::Map::new();
        for (m, metric) in Modality::ALL.iter().zip(b.per_teacher) {
            per.insert(m.to_string(), serde_json::to_value(stamped(metric, &hash))?);
        }
        per.insert(
            "softmax_average".into(),
            serde_json::to_value(stamped(b.softmax_average, &hash))?,
        );
        per.insert("mean_teacher_mrr".into(), json!(b.mean_teacher_mrr));
        metrics.insert(name.into(), per.into());
    }
    metrics.insert("manifest".into(), json!(hash));
    write(
        &dir.join("teacher_metrics.json"),
        serde_json::to_string_pretty(&metrics)? + "\n",
    )?;
    write(
        &dir.join("pretrain_loss.csv"),
        pipeline::pretrain_loss_csv(&out.loss_trace, &hash),
    )?;
    let mut valid = format!("# manifest={hash}\nepoch,structural,visual,textual\n");
    for (epoch, m) in &out.valid_trace {
        valid.push_str(&format!("{epoch},{},{},{}\n", m[0], m[1], m[2]));
    }
    write(&dir.join("pretrain_valid.csv"), valid)?;
    write(&dir.join("manifest.json"), manifest.to_json())?;
    println!("{}", dir.display());
    Ok(())
}

pub fn train_student(a: &TrainStudentArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let ds = load_data(&a.data)?;
    let bytes = fs::read(&a.teachers).with_context(|| format!("reading {}", a.teachers.display()))?;
    let (ensemble, tman) = dsom::checkpoint::teachers_from_bytes::<Real>(&bytes)
        .with_context(|| format!("loading teachers from {}", a.teachers.display()))?;
    if tman.num_entities != ds.num_entities() || tman.num_relations != ds.num_relations_aug() {
        bail!(
            "teachers cover {} entities / {} relations, dataset has {} / {}",
            tman.num_entities,
            tman.num_relations,
            ds.num_entities(),
            ds.num_relations_aug()
        );
    }
    let mut manifest = RunManifest::new("student", &cfg, &ds);
    manifest.inputs.insert("teachers".into(), sha256_hex(&bytes));
    let hash = manifest.hash();
    let dir = run_dir(&a.out, &manifest)?;

    let start = Instant::now();
    let out = pipeline::train_student(&ds, &ensemble, &cfg)?;
    manifest.timings.insert("train".into(), start.elapsed().as_secs_f64());

    save_model(&out.student, dir.join("student.bin"))?;
    write(&dir.join("policy.bin"), policy_to_bytes(&out.policy))?;
    write(
        &dir.join("loss_trace.csv"),
        pipeline::loss_trace_csv(&out.epochs, &hash),
    )?;
    write(
        &dir.join("reward_curve.csv"),
        pipeline::reward_curve_csv(&out.epochs, &hash),
    )?;
    write(
        &dir.join("strategy_stats.csv"),
        pipeline::strategy_stats_csv(&out.epochs, &hash),
    )?;
    let mut valid = format!("# manifest={hash}\nepoch,mrr\n");
    for (epoch, mrr) in &out.valid_trace {
        valid.push_str(&format!("{epoch},{mrr}\n"));
    }
    write(&dir.join("valid_trace.csv"), valid)?;
    if !ds.test.is_empty() {
        let start = Instant::now();
        let report = evaluate(&out.student, &ds.test, &ds.filter_index(), ds.num_relations())?;
        manifest.timings.insert("eval".into(), start.elapsed().as_secs_f64());
        write(
            &dir.join("metrics.json"),
            stamped(report.metrics.clone(), &hash).to_json(),
        )?;
        write(&dir.join("ranks.csv"), report.rank_dump_csv())?;
    }
    write(&dir.join("manifest.json"), manifest.to_json())?;
    println!("{}", dir.display());
    Ok(())
}

/// Hash recorded in the `manifest.json` next to `checkpoint`, if any.
fn sibling_manifest(checkpoint: &Path) -> Option<String> {
    let path = checkpoint.parent()?.join("manifest.json");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).ok()?).ok()?;
    v.get("hash")?.as_str().map(str::to_string)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let ds = load_data(&a.data)?;
    let split = match a.split {
        SplitName::Train => &ds.train,
        SplitName::Valid => &ds.valid,
        SplitName::Test => &ds.test,
    };
    if split.is_empty() {
        bail!("{:?} split is empty", a.split);
    }
    let filter = ds.filter_index();
    let head = fs::read(&a.checkpoint)
        .with_context(|| format!("reading {}", a.checkpoint.display()))?
        .into_iter()
        .take(8)
        .collect::<Vec<u8>>();
    let report: EvalReport = if head == MODEL_MAGIC {
        let model = load_model::<Real>(&a.checkpoint)?;
        check_entities(model.entities.count, &ds)?;
        evaluate(&model, split, &filter, ds.num_relations())?
    } else if head == TEACHER_MAGIC {
        let (ens, _) = load_teachers::<Real>(&a.checkpoint)?;
        check_entities(ens.num_entities(), &ds)?;
        let average = SoftmaxAverage(&ens);
        let scorer: &dyn Scorer<Real> = match a.teacher {
            TeacherChoice::Structural => &ens.teachers[0],
            TeacherChoice::Visual => &ens.teachers[1],
            TeacherChoice::Textual => &ens.teachers[2],
            TeacherChoice::Average => &average,
        };
        evaluate(scorer, split, &filter, ds.num_relations())?
    } else {
        bail!(
            "{} is neither a student nor a teacher checkpoint",
            a.checkpoint.display()
        );
    };
    let mut metrics = report.metrics.clone();
    metrics.manifest = sibling_manifest(&a.checkpoint);
    match &a.out {
        Some(p) => write(p, metrics.to_json())?,
        None => print!("{}", metrics.to_json()),
    }
    if let Some(p) = &a.ranks {
        write(p, report.rank_dump_csv())?;
    }
    Ok(())
}

fn check_entities(n: usize, ds: &Dataset) -> Result<()> {
    if n != ds.num_entities() {
        bail!("checkpoint covers {n} entities, dataset has {}", ds.num_entities());
    }
    Ok(())
}
