//! Variation operators.
//!
//! * [`isoline_dd`]: isotropic Gaussian noise plus a random step along the
//!   line towards a second elite, in parameter space.
//! * [`ascii_mutate`]: action-sequence crossover. The parent's "imagined"
//!   actions on a target trajectory's states are pulled towards (or pushed
//!   away from) the target's actions, with a per-step weight built from the
//!   rewards-to-go gap, the state cosine similarity, a squared-exponential
//!   action kernel, and a pessimistic clip. The change in action space is
//!   mapped to parameters through the policy's vector-Jacobian product.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::EliteRecord;
use crate::buffer::Trajectory;
use crate::policy::{BatchTape, Genotype, PolicySpec};

#[derive(Debug, Error, PartialEq)]
pub enum VariationError {
    #[error("genotype lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sequence {what} has length {got}, expected {expected}")]
    SequenceLength {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid operator config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsoLineConfig {
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for IsoLineConfig {
    fn default() -> Self {
        IsoLineConfig {
            sigma1: 0.005,
            sigma2: 0.05,
        }
    }
}

impl IsoLineConfig {
    pub fn validate(&self) -> Result<(), VariationError> {
        if !(self.sigma1 >= 0.0 && self.sigma2 >= 0.0) {
            return Err(VariationError::InvalidConfig(
                "sigma1 and sigma2 must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// `x_i + sigma1 * N(0, I) + sigma2 * (x_j - x_i) * N(0, 1)`, with a single
/// line scalar per call.
pub fn isoline_dd<R: Rng + ?Sized>(
    x_i: &Genotype,
    x_j: &Genotype,
    cfg: &IsoLineConfig,
    rng: &mut R,
) -> Result<Genotype, VariationError> {
    if x_i.len() != x_j.len() {
        return Err(VariationError::LengthMismatch(x_i.len(), x_j.len()));
    }
    let line: f64 = rng.sample(StandardNormal);
    let params = x_i
        .as_slice()
        .iter()
        .zip(x_j.as_slice())
        .map(|(&a, &b)| {
            let iso: f64 = rng.sample(StandardNormal);
            a + cfg.sigma1 * iso + cfg.sigma2 * (b - a) * line
        })
        .collect();
    Ok(Genotype::new(params).expect("finite inputs give finite offspring"))
}

/// `G_t = r_t + gamma * G_{t+1}` backwards from `G_{H-1} = r_{H-1}`, where
/// `rewards[t]` is the reward received for acting at step `t`.
pub fn rewards_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsciiConfig {
    /// Inner gradient iterations per mutation.
    pub e: usize,
    pub alpha: f64,
    /// Variance of the action kernel.
    pub sigma_sq: f64,
    /// Kernel threshold below which negative-gap steps are dropped.
    pub epsilon: f64,
    /// Floor of the state cosine similarity.
    pub b: f64,
    pub gamma: f64,
    /// Action-space noise scale. Only 0 is supported.
    pub lambda1: f64,
}

impl Default for AsciiConfig {
    fn default() -> Self {
        AsciiConfig {
            e: 32,
            alpha: 3e-3,
            sigma_sq: 4.0,
            epsilon: 0.8,
            b: 0.25,
            gamma: 0.99,
            lambda1: 0.0,
        }
    }
}

impl AsciiConfig {
    pub fn validate(&self) -> Result<(), VariationError> {
        let fail = |m: &str| Err(VariationError::InvalidConfig(m.into()));
        if self.e == 0 {
            return fail("e must be at least 1");
        }
        if !(self.sigma_sq > 0.0) {
            return fail("sigma_sq must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return fail("epsilon must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.b) {
            return fail("b must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]");
        }
        if !self.alpha.is_finite() {
            return fail("alpha must be finite");
        }
        if self.lambda1 != 0.0 {
            return fail("lambda1 must be 0; action-space noise is not implemented");
        }
        Ok(())
    }

    /// Step size `alpha / (H * sigma_sq)`.
    pub fn lambda2(&self, horizon: usize) -> f64 {
        self.alpha / (horizon as f64 * self.sigma_sq)
    }
}

/// `exp(-|a - a_tilde|^2 / (2 sigma_sq))`
#[inline]
pub fn action_kernel(a: &[f64], a_tilde: &[f64], sigma_sq: f64) -> f64 {
    let sq: f64 = a.iter().zip(a_tilde).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq / (2.0 * sigma_sq)).exp()
}

/// `max(b, cos(s_i, s_j))`. A zero-norm state has no direction; its
/// similarity is taken to be `b`.
pub fn cosine_factor(s_i: &[f64], s_j: &[f64], b: f64) -> f64 {
    let dot: f64 = s_i.iter().zip(s_j).map(|(x, y)| x * y).sum();
    let ni = s_i.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nj = s_j.iter().map(|x| x * x).sum::<f64>().sqrt();
    if ni == 0.0 || nj == 0.0 {
        log::debug!("zero-norm state in cosine similarity; using floor {b}");
        return b;
    }
    // rounding can push |cos| a hair past 1
    b.max((dot / (ni * nj)).min(1.0))
}

/// Weight of one time step: zero when the kernel is below `epsilon` while
/// the target did worse, otherwise `kernel * cosine * delta_g`.
#[inline]
pub fn step_weight(delta_g: f64, cosine: f64, kernel: f64, epsilon: f64) -> f64 {
    if kernel < epsilon && delta_g < 0.0 {
        0.0
    } else {
        kernel * cosine * delta_g
    }
}

/// Per-step scalars `z_t`; each multiplies all action dimensions of step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub z: Vec<f64>,
}

/// The parts of the weights that depend only on stored trajectories: the
/// rewards-to-go gap `G^j_t - G^i_t` and the floored cosine similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedFactors {
    pub delta_g: Vec<f64>,
    pub cosine: Vec<f64>,
}

impl FixedFactors {
    pub fn new(
        parent_states: &[f64],
        parent_rtg: &[f64],
        target_states: &[f64],
        target_rtg: &[f64],
        state_dim: usize,
        b: f64,
    ) -> Result<Self, VariationError> {
        let h = target_rtg.len();
        check_len("parent rewards-to-go", h, parent_rtg.len())?;
        check_len("parent states", h * state_dim, parent_states.len())?;
        check_len("target states", h * state_dim, target_states.len())?;
        let delta_g = target_rtg.iter().zip(parent_rtg).map(|(j, i)| j - i).collect();
        let cosine = parent_states
            .chunks_exact(state_dim)
            .zip(target_states.chunks_exact(state_dim))
            .map(|(si, sj)| cosine_factor(si, sj, b))
            .collect();
        Ok(FixedFactors { delta_g, cosine })
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), VariationError> {
    if expected != got {
        return Err(VariationError::SequenceLength {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Full weight vector for a parent evaluation `(s^i, G^i)`, a target
/// trajectory `(s^j, a^j, G^j)` and the parent's imagined actions on `s^j`.
pub fn weight_vector(
    parent_states: &[f64],
    parent_rtg: &[f64],
    target: &Trajectory,
    imagined_actions: &[f64],
    state_dim: usize,
    cfg: &AsciiConfig,
) -> Result<WeightVector, VariationError> {
    let h = target.horizon();
    if h == 0 {
        return Ok(WeightVector { z: vec![] });
    }
    let action_dim = target.actions.len() / h;
    check_len("target actions", h * action_dim, target.actions.len())?;
    check_len("imagined actions", target.actions.len(), imagined_actions.len())?;
    let fixed = FixedFactors::new(
        parent_states,
        parent_rtg,
        &target.states,
        &target.rewards_to_go,
        state_dim,
        cfg.b,
    )?;
    let z = target
        .actions
        .chunks_exact(action_dim)
        .zip(imagined_actions.chunks_exact(action_dim))
        .enumerate()
        .map(|(t, (a, a_tilde))| {
            let k = action_kernel(a, a_tilde, cfg.sigma_sq);
            step_weight(fixed.delta_g[t], fixed.cosine[t], k, cfg.epsilon)
        })
        .collect();
    Ok(WeightVector { z })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsciiOutcome {
    pub genotype: Genotype,
    /// Set when an update went non-finite; `genotype` is then the parent.
    pub aborted: bool,
}

/// Source of the per-step weights used by [`ascii_iterate`].
pub trait StepWeights {
    /// Steps reported inactive are skipped without a forward pass.
    fn active(&self, _t: usize) -> bool {
        true
    }

    /// Weight of step `t` given the target action and the current imagined
    /// action.
    fn weight(&self, t: usize, target_action: &[f64], imagined: &[f64]) -> f64;
}

/// The performance-informed weights: fixed gap and cosine factors combined
/// with a kernel and clip evaluated on the current imagined actions.
#[derive(Debug, Clone)]
pub struct PerformanceWeights {
    pub fixed: FixedFactors,
    pub sigma_sq: f64,
    pub epsilon: f64,
}

impl StepWeights for PerformanceWeights {
    fn active(&self, t: usize) -> bool {
        self.fixed.delta_g[t] != 0.0
    }

    fn weight(&self, t: usize, target_action: &[f64], imagined: &[f64]) -> f64 {
        let k = action_kernel(target_action, imagined, self.sigma_sq);
        step_weight(self.fixed.delta_g[t], self.fixed.cosine[t], k, self.epsilon)
    }
}

/// Runs `iterations` updates `x += lambda2 * sum_t B_t(x)^T z_t (a^j_t - a~_t)`
/// in place, with `a~_t = mu_x(s^j_t)` recomputed for the current `x` each
/// iteration. Returns `false`, leaving `x` partially updated, as soon as an
/// update produces a non-finite parameter.
pub fn ascii_iterate<W: StepWeights>(
    spec: &PolicySpec,
    x: &mut [f64],
    target: &Trajectory,
    iterations: usize,
    lambda2: f64,
    weights: &W,
) -> bool {
    let (sd, ad) = (spec.state_dim, spec.action_dim);
    let steps: Vec<usize> = (0..target.horizon()).filter(|&t| weights.active(t)).collect();
    if steps.is_empty() {
        return true;
    }
    let mut states = Vec::with_capacity(steps.len() * sd);
    let mut actions = Vec::with_capacity(steps.len() * ad);
    for &t in &steps {
        states.extend_from_slice(&target.states[t * sd..(t + 1) * sd]);
        actions.extend_from_slice(&target.actions[t * ad..(t + 1) * ad]);
    }
    let mut grad = vec![0.0; x.len()];
    let mut cot = vec![0.0; actions.len()];
    let mut tape = BatchTape::new(spec);

    for _ in 0..iterations {
        let imagined = spec.forward_batch(x, &states, &mut tape);
        let mut any = false;
        for (row, &t) in steps.iter().enumerate() {
            let span = row * ad..(row + 1) * ad;
            let (a, a_tilde) = (&actions[span.clone()], &imagined[span.clone()]);
            let z = weights.weight(t, a, a_tilde);
            any |= z != 0.0;
            for ((c, &aj), &ai) in cot[span].iter_mut().zip(a).zip(a_tilde) {
                *c = z * (aj - ai);
            }
        }
        if !any {
            continue;
        }
        grad.fill(0.0);
        spec.backward_batch(x, &mut tape, &cot, &mut grad);
        for (p, g) in x.iter_mut().zip(&grad) {
            *p += lambda2 * g;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
    }
    true
}

/// Action-sequence crossover of `parent` towards `target`.
///
/// Each of the `e` iterations recomputes the imagined actions and the
/// kernel/clip terms for the current parameters; the rewards-to-go gap and
/// the cosine factor stay fixed across iterations.
pub fn ascii_mutate(
    parent: &EliteRecord,
    target: &Trajectory,
    spec: &PolicySpec,
    cfg: &AsciiConfig,
) -> Result<AsciiOutcome, VariationError> {
    let h = target.horizon();
    if parent.horizon() != h {
        return Err(VariationError::SequenceLength {
            what: "parent horizon",
            expected: h,
            got: parent.horizon(),
        });
    }
    check_len("target actions", h * spec.action_dim, target.actions.len())?;
    check_len("genotype", spec.parameter_count(), parent.genotype.len())?;
    let weights = PerformanceWeights {
        fixed: FixedFactors::new(
            &parent.states,
            &parent.rewards_to_go,
            &target.states,
            &target.rewards_to_go,
            spec.state_dim,
            cfg.b,
        )?,
        sigma_sq: cfg.sigma_sq,
        epsilon: cfg.epsilon,
    };

    let mut x = parent.genotype.as_slice().to_vec();
    if !ascii_iterate(spec, &mut x, target, cfg.e, cfg.lambda2(h), &weights) {
        return Ok(AsciiOutcome {
            genotype: parent.genotype.clone(),
            aborted: true,
        });
    }
    Ok(AsciiOutcome {
        genotype: Genotype::new(x).expect("checked finite"),
        aborted: false,
    })
}
