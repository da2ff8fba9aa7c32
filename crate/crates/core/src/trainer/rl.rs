use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;

use crate::autograd::{Tape, Var};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{Adam, AdamConfig, Gradients, ParamStore};
use crate::policy::{PolicyConfig, PolicyModel, Trajectory};
use crate::reward::{pairable, RewardModel};
use crate::rng;
use crate::scalar::{Scalar, PROB_FLOOR};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RlConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Subtract an exponential moving average of past batch rewards.
    pub baseline: bool,
    pub baseline_decay: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 32, lr: 1e-4, baseline: false, baseline_decay: 0.9 }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("policy batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("policy learning rate {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::InvalidConfig(format!("baseline decay {} outside [0, 1)", self.baseline_decay)));
        }
        Ok(())
    }
}

/// `R = log(clamp(s, PROB_FLOOR, 1))`.
pub fn reward_from_score(s: f64) -> f64 {
    if s.is_nan() {
        return Float::ln(PROB_FLOOR);
    }
    Float::ln(s.clamp(PROB_FLOOR, 1.0))
}

/// Log label-invariance probability of augmenting `g0` into `gt`.
pub fn compute_reward(g0: &Graph, gt: &Graph, reward: &RewardModel) -> Result<f64> {
    Ok(reward_from_score(reward.score(g0, gt)?))
}

/// Monte-Carlo policy gradient `(1/B) Σ_i a_i ∇ log p_i` over `episodes`
/// episodes. `episode(i, tape)` records episode `i`'s total action
/// log-probability on `tape` and returns it with its advantage `a_i`.
pub fn reinforce_gradient<T, F>(store: &ParamStore<T>, episodes: usize, mut episode: F) -> Result<Gradients<T>>
where
    T: Scalar,
    F: FnMut(usize, &mut Tape<'_, T>) -> Result<(Var, f64)>,
{
    let mut total = Gradients::empty(store.len());
    if episodes == 0 {
        return Ok(total);
    }
    let inv = T::one() / T::from_usize(episodes).expect("episode count");
    for i in 0..episodes {
        let mut tape = Tape::new(store);
        let (log_prob, advantage) = episode(i, &mut tape)?;
        if advantage == 0.0 {
            continue;
        }
        let g = tape.backward_seeded(log_prob, T::lit(advantage) * inv);
        total.accumulate(&g, T::one());
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub mean_reward: f64,
    /// Surrogate loss `-(1/B) Σ (R_i - b) log p_i`.
    pub loss: f64,
    pub grad_norm: f64,
}

/// One REINFORCE ascent step on `policy` from trajectories whose rewards are
/// set; `baseline` is subtracted from every reward.
pub fn reinforce_update(
    trajectories: &[Trajectory],
    policy: &mut PolicyModel,
    optimizer: &mut Adam<f32>,
    baseline: f64,
) -> Result<UpdateStats> {
    let rewards: Vec<f64> = trajectories
        .iter()
        .map(|t| t.reward.ok_or_else(|| Error::InvalidConfig("trajectory without reward".into())))
        .collect::<Result<_>>()?;
    let net = &policy.net;
    let mut loss = 0.0;
    let mut grads = reinforce_gradient(&policy.store, trajectories.len(), |i, tape| {
        let lp = net.trajectory_log_prob(tape, &trajectories[i])?;
        let advantage = rewards[i] - baseline;
        loss -= advantage * tape.scalar(lp) as f64;
        Ok((lp, advantage))
    })?;
    let n = trajectories.len().max(1) as f64;
    // the optimizer descends, REINFORCE ascends
    grads.scale(-1.0);
    let grad_norm = grads.norm() as f64;
    if !grads.all_finite() {
        return Err(Error::Divergence("non-finite policy gradient".into()));
    }
    optimizer.step(&mut policy.store, &grads)?;
    Ok(UpdateStats { mean_reward: rewards.iter().sum::<f64>() / n, loss: loss / n, grad_norm })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyHistory {
    pub epoch_mean_reward: Vec<f64>,
    pub epoch_loss: Vec<f64>,
    /// Training graphs excluded for exceeding the reward model's size cap.
    pub skipped: usize,
}

/// Trains a fresh policy against the frozen `reward` model on the `train`
/// graphs of `dataset`.
pub fn train_policy(
    dataset: &Dataset,
    train: &[usize],
    reward: &RewardModel,
    policy_config: &PolicyConfig,
    rl: &RlConfig,
    seed: u64,
) -> Result<(PolicyModel, PolicyHistory)> {
    rl.validate()?;
    let mut policy = PolicyModel::new(dataset.feature_dim, policy_config.clone(), seed)?;
    let mut adam = Adam::new(&policy.store, AdamConfig::with_lr(rl.lr));
    let mut order = pairable(dataset, train, reward.config.max_nodes);
    let mut history = PolicyHistory { skipped: train.len() - order.len(), ..PolicyHistory::default() };
    if order.is_empty() {
        return Err(Error::DegenerateDataset("no training graphs for the policy".into()));
    }
    let mut baseline: Option<f64> = None;
    for epoch in 0..rl.epochs {
        let mut r = rng::stream(seed, 0x5011_0000 + epoch as u64);
        order.shuffle(&mut r);
        let (mut reward_sum, mut loss_sum, mut count) = (0.0, 0.0, 0usize);
        for batch in order.chunks(rl.batch_size) {
            let mut trajectories = Vec::with_capacity(batch.len());
            for &i in batch {
                let mut gr = rng::stream(rng::derive_seed(seed, epoch as u64), i as u64);
                trajectories.push(policy.augment(&dataset.graphs[i].graph, &mut gr)?);
            }
            let pairs: Vec<(&Graph, &Graph)> =
                trajectories.iter().map(|t| (t.initial_graph(), &t.final_graph)).collect();
            let scores = reward.score_batch(&pairs)?;
            for (t, s) in trajectories.iter_mut().zip(&scores) {
                t.reward = Some(reward_from_score(*s));
            }
            let mean = trajectories.iter().filter_map(|t| t.reward).sum::<f64>() / trajectories.len() as f64;
            let b = if rl.baseline { baseline.unwrap_or(mean) } else { 0.0 };
            let stats = reinforce_update(&trajectories, &mut policy, &mut adam, b)?;
            if rl.baseline {
                baseline = Some(match baseline {
                    Some(prev) => rl.baseline_decay * prev + (1.0 - rl.baseline_decay) * mean,
                    None => mean,
                });
            }
            reward_sum += stats.mean_reward * batch.len() as f64;
            loss_sum += stats.loss * batch.len() as f64;
            count += batch.len();
        }
        let (mr, ml) = (reward_sum / count as f64, loss_sum / count as f64);
        log::info!("policy epoch {epoch}: loss {ml:.4} mean reward {mr:.4}");
        history.epoch_mean_reward.push(mr);
        history.epoch_loss.push(ml);
    }
    Ok((policy, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_colors, SyntheticConfig};
    use crate::policy::bernoulli_log_prob_var;
    use crate::reward::RewardConfig;
    use crate::tensor::Matrix;
    use rand::Rng;

    #[test]
    fn reward_examples() {
        assert_eq!(reward_from_score(1.0), 0.0);
        assert!((reward_from_score((-1.0f64).exp()) + 1.0).abs() < 1e-12);
        assert_eq!(reward_from_score(1e-12), PROB_FLOOR.ln());
        assert_eq!(reward_from_score(0.0), PROB_FLOOR.ln());
    }

    /// One Bernoulli(sigmoid θ) action with reward table `r`.
    fn toy_gradient(theta: f64, r: [f64; 2], samples: usize, scale: f64, seed: u64) -> f64 {
        let mut store = ParamStore::<f64>::new();
        let id = store.insert("theta", Matrix::filled(1, 1, theta));
        let mut rng = rng::seeded(seed);
        let p = crate::autograd::sigmoid(theta);
        let g = reinforce_gradient(&store, samples, |_, tape| {
            let o = rng.gen::<f64>() < p;
            let th = tape.param(id);
            let pr = tape.sigmoid(th);
            let lp = bernoulli_log_prob_var(tape, pr, &[o]);
            Ok((lp, scale * r[o as usize]))
        })
        .unwrap();
        g.get(id).unwrap().as_slice()[0]
    }

    #[test]
    fn toy_estimator_is_unbiased_and_linear() {
        let (theta, r) = (0.4, [-2.0, -0.5]);
        let p = crate::autograd::sigmoid(theta);
        let exact = p * (1.0 - p) * (r[1] - r[0]);
        let est = toy_gradient(theta, r, 100_000, 1.0, 1);
        assert!((est - exact).abs() / exact.abs() < 0.05, "{est} vs {exact}");
        let doubled = toy_gradient(theta, r, 1000, 2.0, 2);
        assert_eq!(doubled, 2.0 * toy_gradient(theta, r, 1000, 1.0, 2));
    }

    #[test]
    fn zero_rewards_leave_parameters_unchanged() {
        let ds = gen_colors(&SyntheticConfig::with_size(4), 1).unwrap();
        let config =
            PolicyConfig { hidden: 8, category_hidden: 8, head_hidden: 8, steps: 2, ..PolicyConfig::default() };
        let mut policy = PolicyModel::new(4, config, 1).unwrap();
        let before = policy.store.flatten_values();
        let mut r = rng::seeded(1);
        let trajs: Vec<Trajectory> = ds
            .graphs
            .iter()
            .map(|g| {
                let mut t = policy.augment(&g.graph, &mut r).unwrap();
                t.reward = Some(0.0);
                t
            })
            .collect();
        let mut adam = Adam::new(&policy.store, AdamConfig::with_lr(1e-2));
        let stats = reinforce_update(&trajs, &mut policy, &mut adam, 0.0).unwrap();
        assert_eq!(stats.grad_norm, 0.0);
        assert_eq!(before, policy.store.flatten_values());
    }

    #[test]
    fn train_policy_is_deterministic() {
        let ds = gen_colors(&SyntheticConfig::with_size(24), 2).unwrap();
        let train: Vec<usize> = (0..24).collect();
        let reward = RewardModel::new(4, RewardConfig { layers: 1, hidden: 8, ..RewardConfig::default() }, 2).unwrap();
        let pc = PolicyConfig { hidden: 8, category_hidden: 8, head_hidden: 8, steps: 2, ..PolicyConfig::default() };
        let rl = RlConfig { epochs: 2, batch_size: 8, lr: 1e-3, ..RlConfig::default() };
        let (p1, h1) = train_policy(&ds, &train, &reward, &pc, &rl, 3).unwrap();
        let (p2, h2) = train_policy(&ds, &train, &reward, &pc, &rl, 3).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(p1.store.flatten_values(), p2.store.flatten_values());
        assert!(h1.epoch_mean_reward.iter().all(|&r| r <= 0.0 && r.is_finite()));
    }
}
