//! Clipped-surrogate policy optimization with a learned value baseline and
//! generalized advantage estimation.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{clip_grad_norm, Adam};
use super::policy::{features, Policy, ACT_DIM, OBS_DIM};
use super::{Controller, ControlEnv, TrainConfig};
use crate::error::{Error, Result};

/// One collected environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    /// Pre-squash action sample.
    pub u: [f64; ACT_DIM],
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// Critic value of the next observation; zero after a terminal step.
    pub next_value: f64,
    pub done: bool,
    pub truncated: bool,
}

/// Advantages and value targets. Episodes end at `done` or `truncated`;
/// only truncation and the end of the buffer bootstrap from `next_value`.
pub fn compute_gae(batch: &[Transition], discount: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let mut adv = vec![0.0; batch.len()];
    let mut gae = 0.0;
    for (i, tr) in batch.iter().enumerate().rev() {
        let carry = if tr.done || tr.truncated || i + 1 == batch.len() {
            0.0
        } else {
            gae
        };
        let next = if tr.done { 0.0 } else { tr.next_value };
        let delta = tr.reward + discount * next - tr.value;
        gae = delta + discount * lambda * carry;
        adv[i] = gae;
    }
    let returns = adv.iter().zip(batch).map(|(a, t)| a + t.value).collect();
    (adv, returns)
}

/// Mean clipped-surrogate loss `-E[min(rho A, clip(rho) A)]` of `policy` on a batch.
pub fn clipped_surrogate(policy: &Policy, batch: &[Transition], advantages: &[f64], clip: f64) -> f64 {
    let total: f64 = batch
        .iter()
        .zip(advantages)
        .map(|(tr, &a)| {
            let mean = policy.mean(&tr.obs);
            let ratio = (policy.log_prob(&mean, &tr.u) - tr.log_prob).exp();
            -(ratio * a).min(ratio.clamp(1.0 - clip, 1.0 + clip) * a)
        })
        .sum();
    total / batch.len() as f64
}

/// Gradient of the clipped surrogate (minus the entropy bonus) with respect
/// to actor parameters and log standard deviations.
fn actor_gradient(
    policy: &Policy,
    items: &[(Transition, f64)],
    clip: f64,
    entropy_coef: f64,
    grads: &mut [f64],
    grad_log_std: &mut [f64; ACT_DIM],
) -> f64 {
    let scale = 1.0 / items.len() as f64;
    let mut loss = 0.0;
    let std: Vec<f64> = policy.log_std.iter().map(|l| l.exp()).collect();
    for (tr, a) in items {
        let cache = policy.actor.forward_cached(&tr.obs);
        let out = cache.output();
        let mean = [out[0], out[1]];
        let ratio = (policy.log_prob(&mean, &tr.u) - tr.log_prob).exp();
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        loss -= unclipped.min(clipped);
        if unclipped <= clipped {
            let d_ratio = -a * scale;
            let mut g_mean = [0.0; ACT_DIM];
            for j in 0..ACT_DIM {
                let z = (tr.u[j] - mean[j]) / std[j];
                g_mean[j] = d_ratio * ratio * z / std[j];
                grad_log_std[j] += d_ratio * ratio * (z * z - 1.0);
            }
            policy.actor.backward(&cache, &g_mean, grads);
        }
    }
    for g in grad_log_std.iter_mut() {
        *g -= entropy_coef;
    }
    let entropy: f64 = policy.log_std.iter().sum();
    loss * scale - entropy_coef * entropy
}

fn critic_gradient(policy: &Policy, items: &[([f64; OBS_DIM], f64)], grads: &mut [f64]) -> f64 {
    let scale = 1.0 / items.len() as f64;
    let mut loss = 0.0;
    for (obs, target) in items {
        let cache = policy.critic.forward_cached(obs);
        let err = cache.output()[0] - target;
        loss += 0.5 * err * err;
        policy.critic.backward(&cache, &[err * scale], grads);
    }
    loss * scale
}

/// Regresses the critic onto fixed targets with Adam minibatch steps.
/// Returns the final mean squared error over the whole set.
pub fn fit_critic(
    policy: &mut Policy,
    data: &[([f64; OBS_DIM], f64)],
    epochs: usize,
    minibatch: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut opt = Adam::new(policy.critic.params().len(), lr);
    let mut idx: Vec<usize> = (0..data.len()).collect();
    for _ in 0..epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(minibatch) {
            let items: Vec<_> = chunk.iter().map(|&i| data[i]).collect();
            let mut g = vec![0.0; policy.critic.params().len()];
            critic_gradient(policy, &items, &mut g);
            opt.step(policy.critic.params_mut(), &g);
        }
    }
    data.iter()
        .map(|(o, t)| (policy.value(o) - t).powi(2))
        .sum::<f64>()
        / data.len() as f64
}

/// Per-episode evaluation record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub success: bool,
    /// Steps taken until the goal (or the cap).
    pub qis: usize,
    pub total_reward: f64,
    /// Return discounted with the factor given to the evaluation.
    pub discounted_reward: f64,
    pub mean_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub success_rate: f64,
    /// Mean steps to goal over successful episodes.
    pub mean_qis_to_goal: Option<f64>,
    /// Mean of the per-episode mean accuracy requests.
    pub mean_eta: f64,
    pub mean_return: f64,
    pub mean_discounted_return: f64,
    pub episodes: Vec<EpisodeOutcome>,
}

impl EvalReport {
    pub fn from_episodes(episodes: Vec<EpisodeOutcome>) -> Self {
        let n = episodes.len().max(1) as f64;
        let successes: Vec<_> = episodes.iter().filter(|e| e.success).collect();
        let mean_qis_to_goal = (!successes.is_empty())
            .then(|| successes.iter().map(|e| e.qis as f64).sum::<f64>() / successes.len() as f64);
        Self {
            success_rate: successes.len() as f64 / n,
            mean_qis_to_goal,
            mean_eta: episodes.iter().map(|e| e.mean_eta).sum::<f64>() / n,
            mean_return: episodes.iter().map(|e| e.total_reward).sum::<f64>() / n,
            mean_discounted_return: episodes.iter().map(|e| e.discounted_reward).sum::<f64>() / n,
            episodes,
        }
    }
}

/// Rolls out `controller` for `episodes` episodes seeded `seed, seed+1, ...`.
/// Discounted returns use the default training discount.
pub fn evaluate<C: Controller + ?Sized, E: ControlEnv + ?Sized>(
    controller: &C,
    env: &mut E,
    episodes: usize,
    seed: u64,
) -> EvalReport {
    evaluate_discounted(controller, env, episodes, seed, TrainConfig::default().discount)
}

pub fn evaluate_discounted<C: Controller + ?Sized, E: ControlEnv + ?Sized>(
    controller: &C,
    env: &mut E,
    episodes: usize,
    seed: u64,
    discount: f64,
) -> EvalReport {
    let mut out = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let ep_seed = seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(ep_seed ^ 0x5eed_0f_ac7);
        let mut belief = env.reset(ep_seed);
        let (mut qis, mut total, mut eta_sum) = (0usize, 0.0, 0.0);
        let (mut discounted, mut weight) = (0.0, 1.0);
        let mut success = env.at_goal();
        if !success {
            loop {
                let action = controller.act(&belief, &mut rng);
                let st = env.step(&action);
                qis += 1;
                total += st.reward;
                discounted += weight * st.reward;
                weight *= discount;
                eta_sum += action.eta;
                belief = st.belief;
                if st.done {
                    success = true;
                    break;
                }
                if st.truncated {
                    break;
                }
            }
        }
        out.push(EpisodeOutcome {
            seed: ep_seed,
            success,
            qis,
            total_reward: total,
            discounted_reward: discounted,
            mean_eta: if qis > 0 { eta_sum / qis as f64 } else { 0.0 },
        });
    }
    EvalReport::from_episodes(out)
}

/// One point of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub env_steps: usize,
    pub episodes: usize,
    /// Mean augmented return of training episodes finished in this rollout.
    pub train_return: f64,
    pub eval_success: f64,
    pub eval_return: f64,
    pub eval_mean_eta: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub log_std: [f64; ACT_DIM],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Policy with the best evaluation score seen during training.
    pub policy: Policy,
    pub best_eval: EvalReport,
    pub curve: Vec<CurvePoint>,
    pub env_steps: usize,
}

/// Success first, then the training objective.
fn score(r: &EvalReport) -> (f64, f64) {
    (r.success_rate, r.mean_discounted_return)
}

/// Trains a policy on `env`. The environment is cloned for evaluation so the
/// training episode in progress is never disturbed.
pub fn train<E: ControlEnv + Clone>(env: &mut E, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = Policy::new(cfg, &mut rng);
    let mut actor_opt = Adam::new(policy.actor.params().len() + ACT_DIM, cfg.actor_lr);
    let mut critic_opt = Adam::new(policy.critic.params().len(), cfg.critic_lr);
    let eval_seed = rng.next_u64();

    let mut belief = env.reset(rng.next_u64());
    let mut ep_return = 0.0;
    let mut steps = 0usize;
    let mut episodes = 0usize;
    let mut curve = Vec::new();
    let mut best: Option<(Policy, EvalReport)> = None;
    let mut perfect_streak = 0usize;

    while steps < cfg.total_steps {
        let n = cfg.rollout_len.min(cfg.total_steps - steps);
        let mut batch = Vec::with_capacity(n);
        let mut finished = Vec::new();
        for _ in 0..n {
            let obs = features(&belief);
            let (action, u, log_prob) = policy.sample(&belief, &mut rng);
            let value = policy.value(&obs);
            let st = env.step(&action);
            let next_value = if st.done { 0.0 } else { policy.value(&features(&st.belief)) };
            batch.push(Transition {
                obs,
                u,
                log_prob,
                reward: st.reward,
                value,
                next_value,
                done: st.done,
                truncated: st.truncated,
            });
            ep_return += st.reward;
            if st.done || st.truncated {
                finished.push(ep_return);
                ep_return = 0.0;
                episodes += 1;
                belief = env.reset(rng.next_u64());
            } else {
                belief = st.belief;
            }
        }
        steps += n;

        let (mut adv, returns) = compute_gae(&batch, cfg.discount, cfg.gae_lambda);
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / adv.len() as f64).sqrt();
        adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));

        let mut idx: Vec<usize> = (0..batch.len()).collect();
        let (mut policy_loss, mut value_loss) = (0.0, 0.0);
        for _ in 0..cfg.epochs {
            idx.shuffle(&mut rng);
            for chunk in idx.chunks(cfg.minibatch_size) {
                let actor_items: Vec<_> = chunk.iter().map(|&i| (batch[i], adv[i])).collect();
                let critic_items: Vec<_> = chunk.iter().map(|&i| (batch[i].obs, returns[i])).collect();

                let mut g_actor = vec![0.0; policy.actor.params().len() + ACT_DIM];
                let mut g_log_std = [0.0; ACT_DIM];
                let (g_net, g_tail) = g_actor.split_at_mut(policy.actor.params().len());
                policy_loss =
                    actor_gradient(&policy, &actor_items, cfg.clip_ratio, cfg.entropy_coef, g_net, &mut g_log_std);
                g_tail.copy_from_slice(&g_log_std);
                let mut g_critic = vec![0.0; policy.critic.params().len()];
                value_loss = critic_gradient(&policy, &critic_items, &mut g_critic);
                if !policy_loss.is_finite() || !value_loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite loss after {steps} steps (policy {policy_loss}, value {value_loss})"
                    )));
                }
                clip_grad_norm(&mut [&mut g_actor], cfg.max_grad_norm);
                clip_grad_norm(&mut [&mut g_critic], cfg.max_grad_norm);

                let mut flat: Vec<f64> = policy.actor.params().to_vec();
                flat.extend_from_slice(&policy.log_std);
                actor_opt.step(&mut flat, &g_actor);
                let split = policy.actor.params().len();
                policy.actor.params_mut().copy_from_slice(&flat[..split]);
                for j in 0..ACT_DIM {
                    policy.log_std[j] = flat[split + j].clamp(cfg.log_std_bounds.0, cfg.log_std_bounds.1);
                }
                critic_opt.step(policy.critic.params_mut(), &g_critic);
            }
        }
        if policy.actor.params().iter().chain(policy.critic.params()).any(|p| !p.is_finite()) {
            return Err(Error::Divergence(format!("non-finite parameters after {steps} steps")));
        }

        let mut eval_env = env.clone();
        let report = evaluate_discounted(&policy, &mut eval_env, cfg.eval_episodes, eval_seed, cfg.discount);
        let point = CurvePoint {
            env_steps: steps,
            episodes,
            train_return: if finished.is_empty() {
                f64::NAN
            } else {
                finished.iter().sum::<f64>() / finished.len() as f64
            },
            eval_success: report.success_rate,
            eval_return: report.mean_return,
            eval_mean_eta: report.mean_eta,
            policy_loss,
            value_loss,
            log_std: policy.log_std,
        };
        log::info!(
            "steps {:>7} episodes {:>5} train return {:>8.2} eval success {:.2} return {:>8.2} eta {:>9.1} log_std [{:.2}, {:.2}]",
            point.env_steps,
            point.episodes,
            point.train_return,
            point.eval_success,
            point.eval_return,
            point.eval_mean_eta,
            point.log_std[0],
            point.log_std[1],
        );
        curve.push(point);

        if report.success_rate >= 1.0 {
            perfect_streak += 1;
        } else {
            perfect_streak = 0;
        }
        if best.as_ref().is_none_or(|(_, b)| score(&report) > score(b)) {
            best = Some((policy.clone(), report));
        }
        if cfg.early_stop_evals > 0 && perfect_streak >= cfg.early_stop_evals {
            break;
        }
    }

    let (policy, best_eval) = match best {
        Some(b) => b,
        None => {
            let mut eval_env = env.clone();
            let r = evaluate_discounted(&policy, &mut eval_env, cfg.eval_episodes, eval_seed, cfg.discount);
            (policy, r)
        }
    };
    Ok(TrainOutcome {
        policy,
        best_eval,
        curve,
        env_steps: steps,
    })
}
