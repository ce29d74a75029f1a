//! Temperature scaling and logit-distillation losses.
//!
//! Every loss returns its gradient with respect to the raw (unscaled) student
//! logits; teacher inputs are constants.

use crate::config::KdVariant;
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Scalar};

/// `softmax(logits / tau)` together with its log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledDistribution<S> {
    pub probs: Vec<S>,
    pub log_probs: Vec<S>,
    pub tau: S,
}

impl<S: Scalar> ScaledDistribution<S> {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn entropy(&self) -> S {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .filter(|(p, _)| **p > S::zero())
            .map(|(&p, &lp)| -p * lp)
            .sum()
    }
}

pub fn temp_scale<S: Scalar>(logits: &[S], tau: S) -> ScaledDistribution<S> {
    let scaled: Vec<S> = logits.iter().map(|&z| z / tau).collect();
    let lse = log_sum_exp(&scaled);
    let log_probs: Vec<S> = scaled.iter().map(|&u| u - lse).collect();
    let probs = log_probs.iter().map(|lp| lp.exp()).collect();
    ScaledDistribution { probs, log_probs, tau }
}

/// A loss value and its gradient with respect to the student's raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct KdOutput<S> {
    pub loss: S,
    pub grad: Vec<S>,
}

/// `sum_i p_i (log p_i - log q_i)` from log-probabilities; `0 log 0 = 0`.
fn kl_logspace<S: Scalar>(p: &[S], log_p: &[S], log_q: &[S]) -> S {
    p.iter()
        .zip(log_p)
        .zip(log_q)
        .filter(|((pi, _), _)| **pi > S::zero())
        .map(|((&pi, &lp), &lq)| pi * (lp - lq))
        .sum()
}

/// KL between two Bernoulli distributions `[a, 1 - a]` and `[b, 1 - b]`, with
/// the complements passed explicitly to avoid cancellation.
fn kl_binary<S: Scalar>(a: S, a_c: S, b: S, b_c: S) -> S {
    let term = |p: S, q: S| {
        if p > S::zero() {
            p * (p.ln() - q.ln())
        } else {
            S::zero()
        }
    };
    term(a, b) + term(a_c, b_c)
}

/// `KL(P_tea || P_stu)`.
pub fn vanilla_kd<S: Scalar>(tea: &ScaledDistribution<S>, stu: &ScaledDistribution<S>) -> Result<KdOutput<S>> {
    if tea.len() != stu.len() {
        return Err(Error::Shape(format!(
            "teacher {} vs student {} classes",
            tea.len(),
            stu.len()
        )));
    }
    let loss = kl_logspace(&tea.probs, &tea.log_probs, &stu.log_probs);
    let grad = stu
        .probs
        .iter()
        .zip(&tea.probs)
        .map(|(&q, &p)| (q - p) / stu.tau)
        .collect();
    Ok(KdOutput { loss, grad })
}

/// A distribution split into the neighbor-average binary pair and the
/// renormalized distribution over non-neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupledView<S> {
    /// `[mean_{n in N} p_n, 1 - mean_{n in N} p_n]`.
    pub neighbor_binary: [S; 2],
    /// Entity ids outside `N`, ascending.
    pub non_neighbor_ids: Vec<usize>,
    /// `p_e / p_{\N}` for each id in `non_neighbor_ids`.
    pub non_neighbor: Vec<S>,
    pub non_neighbor_log: Vec<S>,
    /// `p_{\N}`, total mass outside the neighbor set.
    pub non_neighbor_mass: S,
    pub neighbor_count: usize,
    pub in_neighbor: Vec<bool>,
    pub probs: Vec<S>,
    pub tau: S,
}

pub fn decouple<S: Scalar>(dist: &ScaledDistribution<S>, neighbors: &[usize]) -> Result<DecoupledView<S>> {
    let n = dist.len();
    let mut in_neighbor = vec![false; n];
    for &e in neighbors {
        if e >= n {
            return Err(Error::Shape(format!("neighbor {e} out of range for {n} entities")));
        }
        in_neighbor[e] = true;
    }
    let neighbor_count = in_neighbor.iter().filter(|&&b| b).count();
    if neighbor_count == 0 {
        return Err(Error::Degenerate("empty neighbor set".into()));
    }
    if neighbor_count == n {
        return Err(Error::Degenerate("neighbor set covers every entity".into()));
    }
    let non_neighbor_ids: Vec<usize> = (0..n).filter(|&e| !in_neighbor[e]).collect();
    let outside: Vec<S> = non_neighbor_ids.iter().map(|&e| dist.log_probs[e]).collect();
    let log_mass = log_sum_exp(&outside);
    let non_neighbor_log: Vec<S> = outside.iter().map(|&lp| lp - log_mass).collect();
    let non_neighbor = non_neighbor_log.iter().map(|v| v.exp()).collect();
    let non_neighbor_mass = log_mass.exp();
    let k = S::of(neighbor_count as f64);
    let neighbor_sum: S = neighbors_sum(&dist.probs, &in_neighbor);
    let mean = neighbor_sum / k;
    // 1 - P_N / |N| = ((|N| - 1) + p_{\N}) / |N|
    let complement = (k - S::one() + non_neighbor_mass) / k;
    Ok(DecoupledView {
        neighbor_binary: [mean, complement],
        non_neighbor_ids,
        non_neighbor,
        non_neighbor_log,
        non_neighbor_mass,
        neighbor_count,
        in_neighbor,
        probs: dist.probs.clone(),
        tau: dist.tau,
    })
}

fn neighbors_sum<S: Scalar>(probs: &[S], in_neighbor: &[bool]) -> S {
    probs.iter().zip(in_neighbor).filter(|(_, &b)| b).map(|(&p, _)| p).sum()
}

/// Neighbor-decoupled distillation split into its two weighted parts.
#[derive(Debug, Clone, PartialEq)]
pub struct NdkdOutput<S> {
    /// `alpha * nekd + beta * nnkd`.
    pub loss: S,
    /// Unweighted KL of the binary neighbor pair.
    pub nekd: S,
    /// Unweighted KL of the renormalized non-neighbor distributions.
    pub nnkd: S,
    pub grad: Vec<S>,
}

/// `alpha * KL(b_tea || b_stu) + beta * KL(P~_tea || P~_stu)`.
pub fn ndkd_loss<S: Scalar>(
    tea: &DecoupledView<S>,
    stu: &DecoupledView<S>,
    alpha: S,
    beta: S,
) -> Result<NdkdOutput<S>> {
    if tea.in_neighbor != stu.in_neighbor {
        return Err(Error::Shape(
            "teacher and student views use different neighbor sets".into(),
        ));
    }
    let [bt, bt_c] = tea.neighbor_binary;
    let [bs, bs_c] = stu.neighbor_binary;
    let nekd = kl_binary(bt, bt_c, bs, bs_c);
    let nnkd = kl_logspace(&tea.non_neighbor, &tea.non_neighbor_log, &stu.non_neighbor_log);

    let k = S::of(stu.neighbor_count as f64);
    // d nekd / d b_stu, then through b_stu = P_N / |N|
    let dbin = -bt / bs + bt_c / bs_c;
    let p_n = neighbors_sum(&stu.probs, &stu.in_neighbor);
    let mut grad: Vec<S> = stu
        .probs
        .iter()
        .zip(&stu.in_neighbor)
        .map(|(&p, &inside)| {
            let ind = if inside { S::one() } else { S::zero() };
            alpha * dbin * p * (ind - p_n) / k
        })
        .collect();
    for ((&e, &qs), &qt) in stu
        .non_neighbor_ids
        .iter()
        .zip(&stu.non_neighbor)
        .zip(&tea.non_neighbor)
    {
        grad[e] = grad[e] + beta * (qs - qt);
    }
    for g in &mut grad {
        *g = *g / stu.tau;
    }
    Ok(NdkdOutput {
        loss: alpha * nekd + beta * nnkd,
        nekd,
        nnkd,
        grad,
    })
}

/// Decoupled KD around a single target class: binary `[p_t, 1 - p_t]` plus the
/// renormalized non-target distribution.
#[allow(clippy::needless_range_loop)]
pub fn dkd_loss<S: Scalar>(
    tea: &ScaledDistribution<S>,
    stu: &ScaledDistribution<S>,
    target: usize,
    alpha: S,
    beta: S,
) -> Result<NdkdOutput<S>> {
    let n = stu.len();
    if tea.len() != n || target >= n {
        return Err(Error::Shape("mismatched distributions or target".into()));
    }
    if n < 2 {
        return Err(Error::Degenerate("no non-target classes".into()));
    }
    let others = |d: &ScaledDistribution<S>| -> (Vec<S>, S) {
        let lp: Vec<S> = (0..n).filter(|&e| e != target).map(|e| d.log_probs[e]).collect();
        let lse = log_sum_exp(&lp);
        (lp.into_iter().map(|v| v - lse).collect(), lse.exp())
    };
    let (t_hat_log, t_rest) = others(tea);
    let (s_hat_log, s_rest) = others(stu);
    let t_hat: Vec<S> = t_hat_log.iter().map(|v| v.exp()).collect();
    let s_hat: Vec<S> = s_hat_log.iter().map(|v| v.exp()).collect();
    let (pt, ps) = (tea.probs[target], stu.probs[target]);
    let nekd = kl_binary(pt, t_rest, ps, s_rest);
    let nnkd = kl_logspace(&t_hat, &t_hat_log, &s_hat_log);

    // binary term reaches u_j through d p_t / d u_j = p_t (1[j = t] - p_j)
    let dbin = -pt / ps + t_rest / s_rest;
    let mut grad = vec![S::zero(); n];
    let mut j_hat = 0;
    for j in 0..n {
        let ind = if j == target { S::one() } else { S::zero() };
        let mut g = alpha * dbin * ps * (ind - stu.probs[j]);
        if j != target {
            g = g + beta * (s_hat[j_hat] - t_hat[j_hat]);
            j_hat += 1;
        }
        grad[j] = g / stu.tau;
    }
    Ok(NdkdOutput {
        loss: alpha * nekd + beta * nnkd,
        nekd,
        nnkd,
        grad,
    })
}

/// Distillation terms reported for a single query.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KdParts<S> {
    pub total: S,
    pub nekd: S,
    pub nnkd: S,
    pub vanilla: S,
}

/// Evaluates the configured distillation variant between combined teacher
/// logits and student logits for query target `target` with neighbor set
/// `neighbors`. The gradient is with respect to the student logits and
/// already includes the optional `tau^2` factor but not the outer weight.
#[allow(clippy::too_many_arguments)]
pub fn kd_loss<S: Scalar>(
    variant: KdVariant,
    tea_logits: &[S],
    stu_logits: &[S],
    target: usize,
    neighbors: &[usize],
    tau: S,
    alpha: S,
    beta: S,
    tau_sq_scale: bool,
) -> Result<(KdParts<S>, Vec<S>)> {
    let tea = temp_scale(tea_logits, tau);
    let stu = temp_scale(stu_logits, tau);
    let (mut parts, mut grad) = match variant {
        KdVariant::None => (KdParts::default(), vec![S::zero(); stu.len()]),
        KdVariant::Vanilla => {
            let out = vanilla_kd(&tea, &stu)?;
            (
                KdParts {
                    total: out.loss,
                    vanilla: out.loss,
                    ..Default::default()
                },
                out.grad,
            )
        }
        KdVariant::Dkd => {
            let out = dkd_loss(&tea, &stu, target, alpha, beta)?;
            (
                KdParts {
                    total: out.loss,
                    nekd: out.nekd,
                    nnkd: out.nnkd,
                    vanilla: S::zero(),
                },
                out.grad,
            )
        }
        KdVariant::Ndkd | KdVariant::NekdOnly | KdVariant::NnkdOnly => {
            let (a, b) = match variant {
                KdVariant::NekdOnly => (alpha, S::zero()),
                KdVariant::NnkdOnly => (S::zero(), beta),
                _ => (alpha, beta),
            };
            let tv = decouple(&tea, neighbors)?;
            let sv = decouple(&stu, neighbors)?;
            let out = ndkd_loss(&tv, &sv, a, b)?;
            (
                KdParts {
                    total: out.loss,
                    nekd: out.nekd,
                    nnkd: out.nnkd,
                    vanilla: S::zero(),
                },
                out.grad,
            )
        }
    };
    if tau_sq_scale {
        let t2 = tau * tau;
        parts.total = parts.total * t2;
        grad.iter_mut().for_each(|g| *g = *g * t2);
    }
    if !parts.total.is_finite() {
        return Err(Error::Numerical(format!("non-finite {variant} loss")));
    }
    Ok((parts, grad))
}
