//! Multi-component reward: tiered target proximity with direction factors,
//! validity/novelty bonuses and multipliers, diversity scoring, global
//! memory, adaptive top-K selection, conditional normalization, and the
//! minimum-reward floor.

mod diversity;
mod memory;

pub use diversity::{diversity_score, DiversityParts, GenerationHistory};
pub use memory::{GlobalMemory, MemoryEntry};

use serde::{Deserialize, Serialize};

/// Direction of optimization for one property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptMode {
    Higher,
    Lower,
}

/// One property objective: its target value, direction, and weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyTarget {
    pub name: String,
    pub target: f64,
    pub mode: OptMode,
    pub weight: f64,
}

impl PropertyTarget {
    pub fn new(name: impl Into<String>, target: f64, mode: OptMode, weight: f64) -> Self {
        Self { name: name.into(), target, mode, weight }
    }
}

/// All reward constants. Defaults match the implemented parameter table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Fixed multiplier on the target reward for top-K structures.
    pub beta_base: f64,
    /// Reduced-reward factor for structures outside the top-K.
    pub alpha_reduced: f64,
    /// Scaling applied to each additive bonus.
    pub bonus_scale: f64,
    /// Multiplier when the structure is valid.
    pub valid_mult: f64,
    /// Multiplier when the structure is novel.
    pub novel_mult: f64,
    /// Additive-bonus factors.
    pub novelty_factor: f64,
    pub validity_factor: f64,
    pub diversity_factor: f64,
    /// Default per-property weight for target rewards.
    pub target_weight: f64,
    /// Tier rewards at the relative-distance breakpoints.
    pub tier_rewards: [f64; 4],
    pub tier_breakpoints: [f64; 4],
    /// Tail beyond the last breakpoint: max(tail_floor, tail_slope*(1-d)).
    pub tail_floor: f64,
    pub tail_slope: f64,
    /// Direction factors: achieved / close / wrong direction.
    pub direction_achieved: f64,
    pub direction_close: f64,
    pub direction_wrong: f64,
    /// Relative buffer counted as "close to target".
    pub close_buffer: f64,
    pub eps: f64,
    /// Diversity component weights: batch, n-gram, history, composition.
    pub diversity_weights: [f64; 4],
    pub ngram_n: usize,
    pub history_size: usize,
    /// History score for an exact duplicate.
    pub dup_penalty: f64,
    pub memory_size: usize,
    /// Top-K ratios and the epoch thresholds where they change.
    pub topk_ratios: [f64; 3],
    pub topk_epoch_thresholds: [usize; 2],
    pub min_topk: usize,
    /// Conditional normalization triggers and targets.
    pub norm_mean_threshold: f64,
    pub norm_std_threshold: f64,
    pub norm_target_mean: f64,
    pub norm_target_std: f64,
    /// Minimum reward handed to the trainer.
    pub reward_floor: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta_base: 3.0,
            alpha_reduced: 0.3,
            bonus_scale: 0.1,
            valid_mult: 1.1,
            novel_mult: 1.1,
            novelty_factor: 1.5,
            validity_factor: 2.5,
            diversity_factor: 2.0,
            target_weight: 3.0,
            tier_rewards: [15.0, 12.0, 8.0, 4.0],
            tier_breakpoints: [0.05, 0.1, 0.2, 0.5],
            tail_floor: 1.0,
            tail_slope: 4.0,
            direction_achieved: 1.3,
            direction_close: 1.1,
            direction_wrong: 0.95,
            close_buffer: 0.2,
            eps: 1e-6,
            diversity_weights: [0.30, 0.25, 0.35, 0.10],
            ngram_n: 4,
            history_size: 500,
            dup_penalty: 0.1,
            memory_size: 200,
            topk_ratios: [0.5, 0.4, 0.3],
            topk_epoch_thresholds: [100, 200],
            min_topk: 3,
            norm_mean_threshold: 100.0,
            norm_std_threshold: 50.0,
            norm_target_mean: 20.0,
            norm_target_std: 10.0,
            reward_floor: 0.1,
        }
    }
}

/// Per-structure reward decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub target: f64,
    pub novelty_bonus: f64,
    pub validity_bonus: f64,
    pub diversity_bonus: f64,
    pub is_valid: bool,
    pub is_novel: bool,
    pub in_topk: bool,
    pub total: f64,
}

/// Relative distance of a prediction from its target.
pub fn relative_distance(predicted: f64, target: f64, cfg: &RewardConfig) -> f64 {
    (predicted - target).abs() / (target.abs() + cfg.eps)
}

/// Tiered base reward as a function of relative distance.
pub fn base_reward(delta_rel: f64, cfg: &RewardConfig) -> f64 {
    for (tier, bp) in cfg.tier_rewards.iter().zip(cfg.tier_breakpoints) {
        if delta_rel <= bp {
            return *tier;
        }
    }
    cfg.tail_floor.max(cfg.tail_slope * (1.0 - delta_rel))
}

/// Direction factor: full credit when the target is achieved in the
/// requested direction, partial when within the close buffer on the
/// non-achieving side, a mild penalty otherwise.
pub fn direction_factor(predicted: f64, target: f64, mode: OptMode, cfg: &RewardConfig) -> f64 {
    let achieved = match mode {
        OptMode::Higher => predicted >= target,
        OptMode::Lower => predicted <= target,
    };
    if achieved {
        return cfg.direction_achieved;
    }
    let buffer = cfg.close_buffer * target.abs();
    let close = match mode {
        OptMode::Higher => predicted >= target - buffer,
        OptMode::Lower => predicted <= target + buffer,
    };
    if close {
        cfg.direction_close
    } else {
        cfg.direction_wrong
    }
}

/// Proximity reward for one property: tiered base times direction factor
/// times the property weight.
pub fn proximity_reward(
    predicted: f64,
    target: f64,
    mode: OptMode,
    weight: f64,
    cfg: &RewardConfig,
) -> f64 {
    let delta = relative_distance(predicted, target, cfg);
    base_reward(delta, cfg) * direction_factor(predicted, target, mode, cfg) * weight
}

/// Weighted sum of proximity rewards over all property objectives.
pub fn target_reward(predictions: &[f64], targets: &[PropertyTarget], cfg: &RewardConfig) -> f64 {
    predictions
        .iter()
        .zip(targets)
        .map(|(&p, t)| proximity_reward(p, t.target, t.mode, t.weight, cfg))
        .sum()
}

/// Total reward for one structure. Top-K structures get the multiplicative
/// base plus additive bonuses; the rest get the reduced target signal. The
/// floor applies to both paths.
pub fn total_reward(
    r_target: f64,
    is_valid: bool,
    is_novel: bool,
    diversity: f64,
    in_topk: bool,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    if in_topk {
        let m_valid = if is_valid { cfg.valid_mult } else { 1.0 };
        let m_novel = if is_novel { cfg.novel_mult } else { 1.0 };
        let novelty_bonus = cfg.novelty_factor * f64::from(is_novel) * cfg.bonus_scale;
        let validity_bonus = cfg.validity_factor * f64::from(is_valid) * cfg.bonus_scale;
        let diversity_bonus = cfg.diversity_factor * diversity * cfg.bonus_scale;
        let total = (r_target * cfg.beta_base * m_valid * m_novel
            + novelty_bonus
            + validity_bonus
            + diversity_bonus)
            .max(cfg.reward_floor);
        RewardBreakdown {
            target: r_target,
            novelty_bonus,
            validity_bonus,
            diversity_bonus,
            is_valid,
            is_novel,
            in_topk,
            total,
        }
    } else {
        RewardBreakdown {
            target: r_target,
            novelty_bonus: 0.0,
            validity_bonus: 0.0,
            diversity_bonus: 0.0,
            is_valid,
            is_novel,
            in_topk,
            total: (cfg.alpha_reduced * r_target).max(cfg.reward_floor),
        }
    }
}

/// Progress toward (or past) a target; rewards over-achievement.
pub fn progress(predicted: f64, target: f64, mode: OptMode, cfg: &RewardConfig) -> f64 {
    let denom = target.abs().max(cfg.eps);
    match mode {
        OptMode::Higher if predicted >= target => 1.0 + (predicted - target) / denom,
        OptMode::Higher => {
            if target == 0.0 {
                0.1
            } else {
                (predicted / target).max(0.1)
            }
        }
        OptMode::Lower if predicted <= target => 1.0 + (target - predicted) / denom,
        OptMode::Lower => {
            if predicted == 0.0 {
                0.1
            } else {
                (target / predicted).max(0.1)
            }
        }
    }
}

/// Combined progress score over all objectives; the global-memory ranking
/// key.
pub fn progress_score(predictions: &[f64], targets: &[PropertyTarget], cfg: &RewardConfig) -> f64 {
    predictions
        .iter()
        .zip(targets)
        .map(|(&p, t)| t.weight * progress(p, t.target, t.mode, cfg))
        .sum()
}

/// Adaptive top-K size: a decaying fraction of the batch, at least
/// `min_topk`, never more than the batch.
pub fn topk_count(batch_size: usize, epoch: usize, cfg: &RewardConfig) -> usize {
    let ratio = if epoch < cfg.topk_epoch_thresholds[0] {
        cfg.topk_ratios[0]
    } else if epoch < cfg.topk_epoch_thresholds[1] {
        cfg.topk_ratios[1]
    } else {
        cfg.topk_ratios[2]
    };
    let k = (batch_size as f64 * ratio).floor() as usize;
    k.max(cfg.min_topk).min(batch_size)
}

/// Indices of the `k` highest-keyed entries (ties broken by index, so the
/// selection is deterministic).
pub fn topk_indices(keys: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| {
        keys[b]
            .partial_cmp(&keys[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
    chosen.sort_unstable();
    chosen
}

/// Conditional batch normalization: rescale to the target mean/std only
/// when the batch statistics exceed the thresholds, then apply the floor
/// elementwise. Population standard deviation.
pub fn normalize_rewards(rewards: &[f64], cfg: &RewardConfig) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let mapped: Vec<f64> = if mean > cfg.norm_mean_threshold || std > cfg.norm_std_threshold {
        rewards
            .iter()
            .map(|r| cfg.norm_target_mean + (r - mean) / (std + cfg.eps) * cfg.norm_target_std)
            .collect()
    } else {
        rewards.to_vec()
    };
    mapped.into_iter().map(|r| r.max(cfg.reward_floor)).collect()
}
