//! ComplEx embedding tables, full-entity scoring and the cross-entropy
//! objective with hand-derived gradients.
//!
//! A triple scores `Re(<h, r, conj(t)>)`. Scoring every candidate tail for a
//! query reduces to one product of the query vector `q = h * r` with the
//! entity table: `z_e = sum_k Re(q_k) Re(e_k) + Im(q_k) Im(e_k)`.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::eval::Scorer;
use crate::features::FeatureMatrix;
use crate::kg::Triple;
use crate::scalar::{log_sum_exp, Scalar};

/// `count` complex vectors of complex dimension `dim`, split into real and
/// imaginary row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEmbeddingTable<S> {
    pub count: usize,
    pub dim: usize,
    pub re: Vec<S>,
    pub im: Vec<S>,
}

impl<S: Scalar> ComplexEmbeddingTable<S> {
    pub fn zeros(count: usize, dim: usize) -> Self {
        Self {
            count,
            dim,
            re: vec![S::zero(); count * dim],
            im: vec![S::zero(); count * dim],
        }
    }

    /// i.i.d. normal entries with standard deviation `1 / sqrt(dim)`.
    pub fn random<R: Rng + ?Sized>(count: usize, dim: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid std");
        let mut draw = || -> Vec<S> { (0..count * dim).map(|_| S::of(normal.sample(rng))).collect() };
        let re = draw();
        let im = draw();
        Self { count, dim, re, im }
    }

    pub fn re_row(&self, i: usize) -> &[S] {
        &self.re[i * self.dim..(i + 1) * self.dim]
    }

    pub fn im_row(&self, i: usize) -> &[S] {
        &self.im[i * self.dim..(i + 1) * self.dim]
    }

    pub fn fill_zero(&mut self) {
        self.re.fill(S::zero());
        self.im.fill(S::zero());
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.count == other.count && self.dim == other.dim
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }

    pub fn params(&self) -> [&[S]; 2] {
        [&self.re, &self.im]
    }

    pub fn params_mut(&mut self) -> [&mut [S]; 2] {
        [&mut self.re, &mut self.im]
    }

    pub fn cast<T: Scalar>(&self) -> ComplexEmbeddingTable<T> {
        ComplexEmbeddingTable {
            count: self.count,
            dim: self.dim,
            re: self.re.iter().map(|v| T::of(v.as_f64())).collect(),
            im: self.im.iter().map(|v| T::of(v.as_f64())).collect(),
        }
    }
}

/// `Re(<h, r, conj(t)>)` over complex vectors given as `(re, im)` pairs.
pub fn complex_score<S: Scalar>(h: (&[S], &[S]), r: (&[S], &[S]), t: (&[S], &[S])) -> S {
    let (hr, hi) = h;
    let (rr, ri) = r;
    let (tr, ti) = t;
    debug_assert!(hr.len() == rr.len() && rr.len() == tr.len());
    let mut acc = S::zero();
    for k in 0..hr.len() {
        acc = acc + hr[k] * rr[k] * tr[k] + hi[k] * rr[k] * ti[k] + hr[k] * ri[k] * ti[k] - hi[k] * ri[k] * tr[k];
    }
    acc
}

/// `q = h * r`, returned as `(re, im)`.
pub fn query_vector<S: Scalar>(
    head: usize,
    rel: usize,
    entities: &ComplexEmbeddingTable<S>,
    relations: &ComplexEmbeddingTable<S>,
) -> (Vec<S>, Vec<S>) {
    let (hr, hi) = (entities.re_row(head), entities.im_row(head));
    let (rr, ri) = (relations.re_row(rel), relations.im_row(rel));
    let qr = (0..entities.dim).map(|k| hr[k] * rr[k] - hi[k] * ri[k]).collect();
    let qi = (0..entities.dim).map(|k| hr[k] * ri[k] + hi[k] * rr[k]).collect();
    (qr, qi)
}

/// Scores of every entity as the tail of `(head, rel, ?)`.
pub fn score_all<S: Scalar>(
    head: usize,
    rel: usize,
    entities: &ComplexEmbeddingTable<S>,
    relations: &ComplexEmbeddingTable<S>,
) -> Vec<S> {
    let (qr, qi) = query_vector(head, rel, entities, relations);
    let dim = entities.dim;
    (0..entities.count)
        .map(|e| {
            let er = &entities.re[e * dim..(e + 1) * dim];
            let ei = &entities.im[e * dim..(e + 1) * dim];
            let mut acc = S::zero();
            for k in 0..dim {
                acc = acc + qr[k] * er[k] + qi[k] * ei[k];
            }
            acc
        })
        .collect()
}

/// Accumulates `d loss / d table` given `d loss / d scores` for one query
/// whose scores came from [`score_all`].
pub fn backprop_scores<S: Scalar>(
    head: usize,
    rel: usize,
    entities: &ComplexEmbeddingTable<S>,
    relations: &ComplexEmbeddingTable<S>,
    dscores: &[S],
    grad_entities: &mut ComplexEmbeddingTable<S>,
    grad_relations: &mut ComplexEmbeddingTable<S>,
) {
    let dim = entities.dim;
    let (qr, qi) = query_vector(head, rel, entities, relations);
    let mut ar = vec![S::zero(); dim];
    let mut ai = vec![S::zero(); dim];
    for (e, &g) in dscores.iter().enumerate() {
        if g == S::zero() {
            continue;
        }
        let off = e * dim;
        for k in 0..dim {
            ar[k] = ar[k] + g * entities.re[off + k];
            ai[k] = ai[k] + g * entities.im[off + k];
            grad_entities.re[off + k] = grad_entities.re[off + k] + g * qr[k];
            grad_entities.im[off + k] = grad_entities.im[off + k] + g * qi[k];
        }
    }
    let (hoff, roff) = (head * dim, rel * dim);
    for k in 0..dim {
        let (hr, hi) = (entities.re[hoff + k], entities.im[hoff + k]);
        let (rr, ri) = (relations.re[roff + k], relations.im[roff + k]);
        grad_entities.re[hoff + k] = grad_entities.re[hoff + k] + ar[k] * rr + ai[k] * ri;
        grad_entities.im[hoff + k] = grad_entities.im[hoff + k] - ar[k] * ri + ai[k] * rr;
        grad_relations.re[roff + k] = grad_relations.re[roff + k] + ar[k] * hr + ai[k] * hi;
        grad_relations.im[roff + k] = grad_relations.im[roff + k] - ar[k] * hi + ai[k] * hr;
    }
}

/// Gradients of a mean cross-entropy loss over a batch.
#[derive(Debug, Clone)]
pub struct CeOutput<S> {
    pub loss: S,
    pub grad_entities: ComplexEmbeddingTable<S>,
    pub grad_relations: ComplexEmbeddingTable<S>,
}

/// Mean over the batch of `-log softmax(score_all(h, r))[t]`.
pub fn ce_loss_and_grads<S: Scalar>(
    batch: &[Triple],
    entities: &ComplexEmbeddingTable<S>,
    relations: &ComplexEmbeddingTable<S>,
) -> Result<CeOutput<S>> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut grad_entities = ComplexEmbeddingTable::zeros(entities.count, entities.dim);
    let mut grad_relations = ComplexEmbeddingTable::zeros(relations.count, relations.dim);
    let scale = S::one() / S::of(batch.len() as f64);
    let mut total = S::zero();
    for t in batch {
        let scores = score_all(t.head, t.rel, entities, relations);
        let lse = log_sum_exp(&scores);
        let loss = lse - scores[t.tail];
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite cross-entropy at triple {t:?}")));
        }
        total = total + loss;
        let mut d: Vec<S> = scores.iter().map(|&s| (s - lse).exp() * scale).collect();
        d[t.tail] = d[t.tail] - scale;
        backprop_scores(
            t.head,
            t.rel,
            entities,
            relations,
            &d,
            &mut grad_entities,
            &mut grad_relations,
        );
    }
    Ok(CeOutput {
        loss: total * scale,
        grad_entities,
        grad_relations,
    })
}

/// Trainable linear map from fixed features to complex embeddings: the first
/// `dim` outputs are real parts, the last `dim` imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<S> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim x in_dim`, row-major.
    pub weights: Vec<S>,
}

impl<S: Scalar> Projection<S> {
    pub fn zeros(in_dim: usize, dim: usize) -> Self {
        Self {
            in_dim,
            out_dim: 2 * dim,
            weights: vec![S::zero(); 2 * dim * in_dim],
        }
    }

    /// Xavier-uniform initialization.
    pub fn random<R: Rng + ?Sized>(in_dim: usize, dim: usize, rng: &mut R) -> Self {
        let out_dim = 2 * dim;
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let u = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
        let weights = (0..out_dim * in_dim).map(|_| S::of(u.sample(rng))).collect();
        Self {
            in_dim,
            out_dim,
            weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.out_dim / 2
    }

    /// Materializes the entity table `W x_e` for every feature row.
    pub fn project(&self, features: &FeatureMatrix) -> Result<ComplexEmbeddingTable<S>> {
        if features.dim != self.in_dim {
            return Err(Error::Shape(format!(
                "projection expects {}-dim features, got {}",
                self.in_dim, features.dim
            )));
        }
        let dim = self.dim();
        let mut table = ComplexEmbeddingTable::zeros(features.num_entities, dim);
        let x: Vec<S> = features.data.iter().map(|&v| S::of(v as f64)).collect();
        for e in 0..features.num_entities {
            let row = &x[e * self.in_dim..(e + 1) * self.in_dim];
            for o in 0..self.out_dim {
                let w = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                let v: S = w.iter().zip(row).map(|(&a, &b)| a * b).sum();
                if o < dim {
                    table.re[e * dim + o] = v;
                } else {
                    table.im[e * dim + o - dim] = v;
                }
            }
        }
        Ok(table)
    }

    /// Chains a gradient on the projected table back to the weights.
    pub fn backward(&self, features: &FeatureMatrix, grad_table: &ComplexEmbeddingTable<S>) -> Projection<S> {
        let dim = self.dim();
        let mut grad = Projection::zeros(self.in_dim, dim);
        for e in 0..features.num_entities {
            if !features.mask[e] {
                continue;
            }
            let row = features.row(e);
            for o in 0..self.out_dim {
                let g = if o < dim {
                    grad_table.re[e * dim + o]
                } else {
                    grad_table.im[e * dim + o - dim]
                };
                if g == S::zero() {
                    continue;
                }
                let w = &mut grad.weights[o * self.in_dim..(o + 1) * self.in_dim];
                for (wi, &xi) in w.iter_mut().zip(row) {
                    *wi = *wi + g * S::of(xi as f64);
                }
            }
        }
        grad
    }
}

/// Entity and relation tables of a single ComplEx model.
#[derive(Debug, Clone, PartialEq)]
pub struct KgeModel<S> {
    pub entities: ComplexEmbeddingTable<S>,
    pub relations: ComplexEmbeddingTable<S>,
}

impl<S: Scalar> KgeModel<S> {
    pub fn random<R: Rng + ?Sized>(num_entities: usize, num_relations: usize, dim: usize, rng: &mut R) -> Self {
        let entities = ComplexEmbeddingTable::random(num_entities, dim, rng);
        let relations = ComplexEmbeddingTable::random(num_relations, dim, rng);
        Self { entities, relations }
    }

    pub fn dim(&self) -> usize {
        self.entities.dim
    }

    pub fn num_parameters(&self) -> usize {
        2 * (self.entities.re.len() + self.relations.re.len())
    }
}

impl<S: Scalar> Scorer<S> for KgeModel<S> {
    fn num_entities(&self) -> usize {
        self.entities.count
    }

    fn score_all(&self, head: usize, rel: usize) -> Vec<S> {
        score_all(head, rel, &self.entities, &self.relations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Modality;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn score_zero_and_identity() {
        let z = [0.0f64; 3];
        assert_eq!(complex_score((&z, &z), (&z, &z), (&z, &z)), 0.0);
        let (one, zero) = ([1.0f64], [0.0f64]);
        assert_eq!(complex_score((&one, &zero), (&one, &zero), (&one, &zero)), 1.0);
    }

    #[test]
    fn score_matches_complex_arithmetic() {
        // (1+2i)(0.5-1i) = 2.5 + 0i; times conj(2) = 5
        let s = complex_score((&[1.0f64], &[2.0]), (&[0.5], &[-1.0]), (&[2.0], &[0.0]));
        assert!((s - 5.0).abs() < 1e-15);
    }

    #[test]
    fn score_all_only_nonzero_entity() {
        let mut e = ComplexEmbeddingTable::<f64>::zeros(4, 2);
        e.re[2 * 2] = 1.0;
        e.re[0] = 0.0;
        let mut r = ComplexEmbeddingTable::<f64>::zeros(1, 2);
        r.re.fill(1.0);
        // head = entity 2 itself, identity relation
        let s = score_all(2, 0, &e, &r);
        assert_eq!(s, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn score_all_scales_quadratically_in_entities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = ComplexEmbeddingTable::<f64>::random(5, 2, &mut rng);
        let r = ComplexEmbeddingTable::<f64>::random(2, 2, &mut rng);
        let mut scaled = e.clone();
        scaled.re.iter_mut().chain(scaled.im.iter_mut()).for_each(|v| *v *= 3.0);
        let base = score_all(1, 1, &e, &r);
        let big = score_all(1, 1, &scaled, &r);
        for (a, b) in base.iter().zip(&big) {
            assert!((b - 9.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_scores_loss_is_ln4() {
        let e = ComplexEmbeddingTable::<f64>::zeros(4, 3);
        let r = ComplexEmbeddingTable::<f64>::zeros(1, 3);
        let out = ce_loss_and_grads(&[Triple::new(0, 0, 1)], &e, &r).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_decreases_as_target_logit_grows() {
        // entity 1 aligned with the query; growing its norm raises its score
        let mut prev = f64::INFINITY;
        for scale in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let mut e = ComplexEmbeddingTable::<f64>::zeros(3, 1);
            e.re[0] = 1.0;
            e.re[1] = scale;
            let mut r = ComplexEmbeddingTable::<f64>::zeros(1, 1);
            r.re[0] = 1.0;
            let loss = ce_loss_and_grads(&[Triple::new(0, 0, 1)], &e, &r).unwrap().loss;
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn non_finite_loss_reports_triple() {
        let mut e = ComplexEmbeddingTable::<f64>::zeros(2, 1);
        e.re[0] = f64::NAN;
        let r = ComplexEmbeddingTable::<f64>::zeros(1, 1);
        let err = ce_loss_and_grads(&[Triple::new(0, 0, 1)], &e, &r).unwrap_err();
        assert!(err.to_string().contains("head: 0"));
    }

    #[test]
    fn projection_of_missing_row_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = FeatureMatrix::new(Modality::Visual, 2, 3, vec![1.0; 6]).unwrap();
        f.mask[1] = false;
        f.data[3..].fill(0.0);
        let p = Projection::<f64>::random(3, 2, &mut rng);
        let t = p.project(&f).unwrap();
        assert!(t.re_row(1).iter().chain(t.im_row(1)).all(|&v| v == 0.0));
        assert!(t.re_row(0).iter().any(|&v| v != 0.0));
    }
}
