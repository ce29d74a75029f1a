//! Filtered link-prediction metrics.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{FilterIndex, Triple};
use crate::scalar::Scalar;

pub const TIE_POLICY: &str = "half_floor";

/// Anything that scores every entity as the tail of a query.
pub trait Scorer<S>: Sync {
    fn num_entities(&self) -> usize;
    fn score_all(&self, head: usize, rel: usize) -> Vec<S>;
}

/// `1 + #{better} + floor(#{tied} / 2)` over competitors, where competitors
/// exclude the target and every other known-true entity.
pub fn filtered_rank<S: Scalar>(scores: &[S], target: usize, known_true: &[usize]) -> Result<usize> {
    if target >= scores.len() {
        return Err(Error::Shape(format!(
            "target {target} out of range for {} entities",
            scores.len()
        )));
    }
    let st = scores[target];
    let mut excluded = vec![false; scores.len()];
    for &e in known_true {
        if e < excluded.len() {
            excluded[e] = true;
        }
    }
    excluded[target] = true;
    let (mut better, mut tied) = (0usize, 0usize);
    for (e, &s) in scores.iter().enumerate() {
        if excluded[e] {
            continue;
        }
        if s > st {
            better += 1;
        } else if s == st {
            tied += 1;
        }
    }
    Ok(1 + better + tied / 2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub mr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub count: usize,
    pub tie_policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl Metrics {
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Shape("no ranks to summarize".into()));
        }
        let n = ranks.len() as f64;
        let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Ok(Metrics {
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            mr: ranks.iter().map(|&r| r as f64).sum::<f64>() / n,
            hits1: hits(1),
            hits3: hits(3),
            hits10: hits(10),
            count: ranks.len(),
            tie_policy: TIE_POLICY.into(),
            manifest: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Tail,
    Head,
}

/// One ranked prediction, in original (un-reversed) ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankRecord {
    pub triple: Triple,
    pub direction: Direction,
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub ranks: Vec<RankRecord>,
}

impl EvalReport {
    /// `head,rel,tail,direction,rank` rows.
    pub fn rank_dump_csv(&self) -> String {
        let mut out = String::from("head,rel,tail,direction,rank\n");
        for r in &self.ranks {
            let dir = match r.direction {
                Direction::Tail => "tail",
                Direction::Head => "head",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.triple.head, r.triple.rel, r.triple.tail, dir, r.rank
            );
        }
        out
    }
}

/// Parses a rank dump back into ranks.
pub fn parse_rank_dump(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, line)| {
            line.rsplit(',')
                .next()
                .and_then(|r| r.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: "<rank dump>".into(),
                    line: i + 2,
                    msg: "bad rank column".into(),
                })
        })
        .collect()
}

/// Tail prediction on `(h, r)` and head prediction on `(t, r + num_rels)` for
/// every triple of the split.
pub fn evaluate<S: Scalar, M: Scorer<S> + ?Sized>(
    model: &M,
    split: &[Triple],
    filter: &FilterIndex,
    num_rels: usize,
) -> Result<EvalReport> {
    if split.is_empty() {
        return Err(Error::Shape("empty evaluation split".into()));
    }
    let per_triple: Vec<Result<[RankRecord; 2]>> = split
        .par_iter()
        .map(|&t| {
            let tail_scores = model.score_all(t.head, t.rel);
            let tail_rank = filtered_rank(&tail_scores, t.tail, filter.get(t.head, t.rel))?;
            let rev = t.reversed(num_rels);
            let head_scores = model.score_all(rev.head, rev.rel);
            let head_rank = filtered_rank(&head_scores, rev.tail, filter.get(rev.head, rev.rel))?;
            Ok([
                RankRecord {
                    triple: t,
                    direction: Direction::Tail,
                    rank: tail_rank,
                },
                RankRecord {
                    triple: t,
                    direction: Direction::Head,
                    rank: head_rank,
                },
            ])
        })
        .collect();
    let mut ranks = Vec::with_capacity(2 * split.len());
    for r in per_triple {
        ranks.extend(r?);
    }
    let raw: Vec<usize> = ranks.iter().map(|r| r.rank).collect();
    Ok(EvalReport {
        metrics: Metrics::from_ranks(&raw)?,
        ranks,
    })
}
