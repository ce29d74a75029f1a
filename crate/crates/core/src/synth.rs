//! Synthetic multimodal KGs for desk-scale experiments.
//!
//! Entities are split into clusters and placed on a cycle inside their
//! cluster. Each relation maps one source cluster onto one target cluster,
//! sending a head at cycle position `p` to tails near `p + offset`. Signal
//! features encode the cluster and the cycle phase through a random linear
//! map; noise features are i.i.d. standard normal.

use std::collections::HashSet;
use std::f64::consts::TAU;

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::kg::Dataset;
use crate::Modality;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_triples: usize,
    pub num_clusters: usize,
    /// Tails lie within this many cycle steps of the mapped position.
    pub window: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_entities: 200,
            num_relations: 10,
            num_triples: 2000,
            num_clusters: 4,
            window: 2,
            seed: 7,
        }
    }
}

/// A generated KG with its latent structure, indexed by dataset entity id.
#[derive(Debug, Clone)]
pub struct SynthKg {
    pub dataset: Dataset,
    pub cluster_of: Vec<usize>,
    /// Position on the cluster's cycle.
    pub position_of: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    pub num_clusters: usize,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthKg> {
    let n = spec.num_entities;
    let k = spec.num_clusters.max(1);
    if n == 0 || spec.num_relations == 0 || spec.num_triples == 0 {
        return Err(Error::Infeasible(
            "entity, relation and triple counts must be positive".into(),
        ));
    }
    if k > n {
        return Err(Error::Infeasible(format!("{k} clusters for {n} entities")));
    }
    let max = (n as u128) * (n as u128) * spec.num_relations as u128;
    if spec.num_triples as u128 > max {
        return Err(Error::Infeasible(format!(
            "{} triples exceed n^2 * relations = {max}",
            spec.num_triples
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &e) in ids.iter().enumerate() {
        members[i % k].push(e);
    }
    let mut cluster = vec![0; n];
    let mut position = vec![0; n];
    for (c, list) in members.iter().enumerate() {
        for (p, &e) in list.iter().enumerate() {
            cluster[e] = c;
            position[e] = p;
        }
    }

    let relations: Vec<(usize, usize, usize)> = (0..spec.num_relations)
        .map(|_| {
            let src = rng.random_range(0..k);
            let dst = rng.random_range(0..k);
            let offset = rng.random_range(0..members[dst].len());
            (src, dst, offset)
        })
        .collect();
    let structured = |w: usize| -> Vec<(usize, usize, usize)> {
        let mut out = HashSet::new();
        for (r, &(src, dst, offset)) in relations.iter().enumerate() {
            let (ms, md) = (members[src].len(), members[dst].len());
            for (p, &h) in members[src].iter().enumerate() {
                let centre = p * md / ms + offset;
                for d in 0..=2 * w {
                    let q = (centre + md + d - w.min(md)) % md;
                    out.insert((h, r, members[dst][q]));
                }
            }
        }
        let mut v: Vec<_> = out.into_iter().collect();
        v.sort_unstable();
        v
    };
    let largest = members.iter().map(Vec::len).max().unwrap_or(1);
    let mut window = spec.window;
    let mut candidates = structured(window);
    while candidates.len() * 4 < spec.num_triples * 5 && 2 * window + 1 < largest {
        window += 1;
        candidates = structured(window);
    }
    let mut chosen: Vec<(usize, usize, usize)> = if candidates.len() >= spec.num_triples {
        sample(&mut rng, candidates.len(), spec.num_triples)
            .into_iter()
            .map(|i| candidates[i])
            .collect()
    } else {
        // structure exhausted: top up with uniformly random distinct triples
        let mut set: HashSet<_> = candidates.iter().copied().collect();
        let mut all = candidates.clone();
        while all.len() < spec.num_triples {
            let t = (
                rng.random_range(0..n),
                rng.random_range(0..spec.num_relations),
                rng.random_range(0..n),
            );
            if set.insert(t) {
                all.push(t);
            }
        }
        all
    };
    chosen.shuffle(&mut rng);

    let n_train = spec.num_triples * 8 / 10;
    let n_valid = spec.num_triples / 10;
    let name = |(h, r, t): (usize, usize, usize)| (format!("e{h:04}"), format!("r{r:02}"), format!("e{t:04}"));
    let named: Vec<_> = chosen.into_iter().map(name).collect();
    let (train, rest) = named.split_at(n_train);
    let (valid, test) = rest.split_at(n_valid);
    let dataset = Dataset::from_named_splits(train, valid, test)?;

    let mut cluster_of = Vec::with_capacity(dataset.num_entities());
    let mut position_of = Vec::with_capacity(dataset.num_entities());
    for name in dataset.entities.names() {
        let raw: usize = name[1..].parse().expect("generated name");
        cluster_of.push(cluster[raw]);
        position_of.push(position[raw]);
    }
    Ok(SynthKg {
        dataset,
        cluster_of,
        position_of,
        cluster_sizes: members.iter().map(Vec::len).collect(),
        num_clusters: k,
    })
}

/// Cluster code plus two cycle harmonics for every entity.
fn latent(kg: &SynthKg) -> (Vec<Vec<f64>>, usize) {
    let width = kg.num_clusters + 4;
    let rows = (0..kg.dataset.num_entities())
        .map(|e| {
            let c = kg.cluster_of[e];
            let phase = TAU * kg.position_of[e] as f64 / kg.cluster_sizes[c] as f64;
            let mut z = vec![0.0; width];
            z[c] = 2.0;
            let base = kg.num_clusters;
            z[base] = phase.cos();
            z[base + 1] = phase.sin();
            z[base + 2] = (2.0 * phase).cos();
            z[base + 3] = (2.0 * phase).sin();
            z
        })
        .collect();
    (rows, width)
}

fn signal_features<R: Rng>(kg: &SynthKg, modality: Modality, dim: usize, rng: &mut R) -> Result<FeatureMatrix> {
    let (z, width) = latent(kg);
    let scale = 1.0 / (width as f64).sqrt();
    let mixing: Vec<f64> = (0..dim * width)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v * scale * 2.0
        })
        .collect();
    let mut data = Vec::with_capacity(z.len() * dim);
    for row in &z {
        for d in 0..dim {
            let mixed: f64 = (0..width).map(|j| mixing[d * width + j] * row[j]).sum();
            let jitter: f64 = StandardNormal.sample(rng);
            data.push((mixed + 0.1 * jitter) as f32);
        }
    }
    FeatureMatrix::new(modality, z.len(), dim, data)
}

fn noise_features<R: Rng>(n: usize, modality: Modality, dim: usize, rng: &mut R) -> Result<FeatureMatrix> {
    let data = (0..n * dim)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v as f32
        })
        .collect();
    FeatureMatrix::new(modality, n, dim, data)
}

/// Visual and textual features. The first `signal_modality_count` of
/// (visual, textual) carry the latent structure; the rest are pure noise.
pub fn synth_features(
    kg: &SynthKg,
    dim: usize,
    signal_modality_count: usize,
    noise_seed: u64,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    if dim < 2 {
        return Err(Error::Config("feature dim must be at least 2".into()));
    }
    let n = kg.dataset.num_entities();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let make = |m: Modality, signal: bool, rng: &mut ChaCha8Rng| {
        if signal {
            signal_features(kg, m, dim, rng)
        } else {
            noise_features(n, m, dim, rng)
        }
    };
    let visual = make(Modality::Visual, signal_modality_count >= 1, &mut rng)?;
    let textual = make(Modality::Textual, signal_modality_count >= 2, &mut rng)?;
    Ok((visual, textual))
}
