//! Teacher-combination agent: states from frozen teacher scores, a one-hidden
//! layer policy over the seven non-empty teacher subsets, rewards against the
//! student and REINFORCE with an all-teacher baseline.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::scalar::{cross_entropy, log_sum_exp, Scalar};
use crate::{Modality, NUM_MODALITIES};

/// Size of the policy pool: every non-empty subset of the modalities.
pub const NUM_ACTIONS: usize = (1 << NUM_MODALITIES) - 1;

/// A non-empty teacher subset. Index `i` encodes bitmask `i + 1`: bit 0
/// structural, bit 1 visual, bit 2 textual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action(usize);

impl Action {
    pub fn new(index: usize) -> Result<Self> {
        if index < NUM_ACTIONS {
            Ok(Action(index))
        } else {
            Err(Error::Shape(format!("action index {index} >= {NUM_ACTIONS}")))
        }
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..NUM_ACTIONS).map(Action)
    }

    /// The subset containing every modality.
    pub fn everything() -> Self {
        Action(NUM_ACTIONS - 1)
    }

    pub fn single(m: Modality) -> Self {
        Action((1 << m.index()) - 1)
    }

    pub fn from_mask(mask: usize) -> Result<Self> {
        if mask == 0 {
            return Err(Error::Shape("empty teacher subset".into()));
        }
        Action::new(mask - 1)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn mask(self) -> usize {
        self.0 + 1
    }

    pub fn contains(self, m: Modality) -> bool {
        self.mask() >> m.index() & 1 == 1
    }

    pub fn subset(self) -> Vec<Modality> {
        Modality::ALL.into_iter().filter(|&m| self.contains(m)).collect()
    }

    /// Short label such as `S+V` or `S+V+D`.
    pub fn label(self) -> String {
        self.subset().iter().map(|m| m.letter()).collect::<Vec<_>>().join("+")
    }
}

/// Concatenates teacher score vectors in modality order.
pub fn build_state<S: Scalar>(teacher_vectors: &[Vec<S>; NUM_MODALITIES]) -> Result<Vec<S>> {
    let n = teacher_vectors[0].len();
    if teacher_vectors.iter().any(|v| v.len() != n) {
        return Err(Error::Shape("teacher score vectors differ in length".into()));
    }
    Ok(teacher_vectors.iter().flatten().copied().collect())
}

/// Zero mean, unit variance; constant vectors map to zeros.
pub fn standardize<S: Scalar>(v: &[S]) -> Vec<S> {
    let n = S::of(v.len().max(1) as f64);
    let mean = v.iter().copied().sum::<S>() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / n;
    let sd = var.sqrt();
    if sd <= S::of(1e-12) {
        return vec![S::zero(); v.len()];
    }
    v.iter().map(|&x| (x - mean) / sd).collect()
}

/// `softmax(W2 relu(W1 s + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<S> {
    pub input: usize,
    pub hidden: usize,
    /// `hidden x input`, row-major.
    pub w1: Vec<S>,
    pub b1: Vec<S>,
    /// `NUM_ACTIONS x hidden`, row-major.
    pub w2: Vec<S>,
    pub b2: Vec<S>,
    /// Whether callers standardize each teacher vector before [`build_state`].
    pub standardize: bool,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct PolicyForward<S> {
    pub pre: Vec<S>,
    pub hidden: Vec<S>,
    pub logits: Vec<S>,
    pub probs: Vec<S>,
}

impl<S: Scalar> PolicyNet<S> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w1: vec![S::zero(); hidden * input],
            b1: vec![S::zero(); hidden],
            w2: vec![S::zero(); NUM_ACTIONS * hidden],
            b2: vec![S::zero(); NUM_ACTIONS],
            standardize: false,
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(input, hidden);
        let mut fill = |w: &mut [S], fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
            w.iter_mut().for_each(|v| *v = S::of(u.sample(rng)));
        };
        fill(&mut net.w1, input, hidden);
        fill(&mut net.w2, hidden, NUM_ACTIONS);
        net
    }

    pub fn params(&self) -> [&[S]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> [&mut [S]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn forward(&self, state: &[S]) -> Result<PolicyForward<S>> {
        if state.len() != self.input {
            return Err(Error::Shape(format!(
                "policy expects a state of length {}, got {}",
                self.input,
                state.len()
            )));
        }
        let pre: Vec<S> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.input..(j + 1) * self.input];
                row.iter().zip(state).map(|(&w, &x)| w * x).sum::<S>() + self.b1[j]
            })
            .collect();
        let hidden: Vec<S> = pre.iter().map(|&v| v.max(S::zero())).collect();
        let logits: Vec<S> = (0..NUM_ACTIONS)
            .map(|a| {
                let row = &self.w2[a * self.hidden..(a + 1) * self.hidden];
                row.iter().zip(&hidden).map(|(&w, &h)| w * h).sum::<S>() + self.b2[a]
            })
            .collect();
        let lse = log_sum_exp(&logits);
        let probs = logits.iter().map(|&l| (l - lse).exp()).collect();
        Ok(PolicyForward {
            pre,
            hidden,
            logits,
            probs,
        })
    }
}

pub fn policy_forward<S: Scalar>(policy: &PolicyNet<S>, state: &[S]) -> Result<Vec<S>> {
    Ok(policy.forward(state)?.probs)
}

/// Draws from the categorical distribution `probs`.
pub fn sample_action<S: Scalar, R: Rng + ?Sized>(probs: &[S], rng: &mut R) -> Action {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return Action(i);
        }
    }
    Action(last_positive)
}

/// Mean of the selected teachers' score vectors.
pub fn aggregate_teachers<S: Scalar>(teacher_vectors: &[Vec<S>; NUM_MODALITIES], subset: Action) -> Vec<S> {
    let chosen = subset.subset();
    let k = S::of(chosen.len() as f64);
    let n = teacher_vectors[0].len();
    (0..n)
        .map(|e| chosen.iter().map(|m| teacher_vectors[m.index()][e]).sum::<S>() / k)
        .collect()
}

/// `reward_pos` when the teacher beats the student strictly, else `reward_neg`.
pub fn compute_reward<S: Scalar>(tea_ce: S, stu_ce: S, config: &TrainConfig) -> S {
    if tea_ce < stu_ce {
        S::of(config.reward_pos)
    } else {
        S::of(config.reward_neg)
    }
}

/// Reward of the all-teacher mean, used as the baseline.
pub fn baseline_reward<S: Scalar>(
    teacher_vectors: &[Vec<S>; NUM_MODALITIES],
    target: usize,
    stu_ce: S,
    config: &TrainConfig,
) -> S {
    let mean = aggregate_teachers(teacher_vectors, Action::everything());
    compute_reward(cross_entropy(&mean, target), stu_ce, config)
}

/// Outcome of one agent decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardRecord<S> {
    pub action: Action,
    pub reward: S,
    pub baseline: S,
    /// `reward - baseline`.
    pub advantage: S,
    pub teacher_ce: S,
    pub student_ce: S,
}

impl<S: Scalar> RewardRecord<S> {
    pub fn evaluate(
        teacher_vectors: &[Vec<S>; NUM_MODALITIES],
        action: Action,
        target: usize,
        student_ce: S,
        config: &TrainConfig,
    ) -> Self {
        let combined = aggregate_teachers(teacher_vectors, action);
        let teacher_ce = cross_entropy(&combined, target);
        let reward = compute_reward(teacher_ce, student_ce, config);
        let baseline = baseline_reward(teacher_vectors, target, student_ce, config);
        RewardRecord {
            action,
            reward,
            baseline,
            advantage: reward - baseline,
            teacher_ce,
            student_ce,
        }
    }
}

/// One `(state, action, advantage)` sample for the policy update.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample<S> {
    pub state: Vec<S>,
    pub action: Action,
    pub advantage: S,
}

/// `-mean(delta * log pi(a | s))` and its gradient; advantages are constants.
#[allow(clippy::needless_range_loop)]
pub fn rc_loss_and_grads<S: Scalar>(policy: &PolicyNet<S>, batch: &[PolicySample<S>]) -> Result<(S, PolicyNet<S>)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty policy batch".into()));
    }
    let mut grad = PolicyNet::zeros(policy.input, policy.hidden);
    let scale = S::one() / S::of(batch.len() as f64);
    let mut loss = S::zero();
    for sample in batch {
        if sample.advantage == S::zero() {
            continue;
        }
        let fwd = policy.forward(&sample.state)?;
        let a = sample.action.index();
        let log_pi = fwd.logits[a] - log_sum_exp(&fwd.logits);
        loss = loss - sample.advantage * log_pi * scale;
        // d(-delta log pi_a)/d logits = delta (pi - onehot(a))
        let w = sample.advantage * scale;
        let dlogits: Vec<S> = fwd
            .probs
            .iter()
            .enumerate()
            .map(|(i, &p)| w * (p - if i == a { S::one() } else { S::zero() }))
            .collect();
        let mut dhidden = vec![S::zero(); policy.hidden];
        for (i, &g) in dlogits.iter().enumerate() {
            grad.b2[i] = grad.b2[i] + g;
            let row = i * policy.hidden;
            for j in 0..policy.hidden {
                grad.w2[row + j] = grad.w2[row + j] + g * fwd.hidden[j];
                dhidden[j] = dhidden[j] + g * policy.w2[row + j];
            }
        }
        for j in 0..policy.hidden {
            if fwd.pre[j] <= S::zero() {
                continue;
            }
            let g = dhidden[j];
            grad.b1[j] = grad.b1[j] + g;
            let row = &mut grad.w1[j * policy.input..(j + 1) * policy.input];
            for (w, &x) in row.iter_mut().zip(&sample.state) {
                *w = *w + g * x;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numerical("non-finite policy loss".into()));
    }
    Ok((loss, grad))
}
