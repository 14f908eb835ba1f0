//! Random task assignment. The assigner is a pure function of the world
//! state, so candidate evaluations inside the rollout (which step the
//! dynamics many times per stage) can never perturb the episode's random
//! stream.

use crate::dynamics::{GoodStatus, TargetAssigner, WorldState};

/// Mixes a few words into one; splitmix64 finalizer.
pub fn mix(words: &[u64]) -> u64 {
    let mut h = 0x9e3779b97f4a7c15u64;
    for &w in words {
        let mut z = h ^ w.wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        h = z ^ (z >> 31);
    }
    h
}

/// Uniform pick among Waiting goods, keyed by (seed, stage, agent). Same
/// world and agent always give the same pick.
#[derive(Debug, Clone, Copy)]
pub struct SeededAssigner {
    pub seed: u64,
}

impl TargetAssigner for SeededAssigner {
    fn pick_good(&self, world: &WorldState, agent: usize) -> Option<usize> {
        let waiting: Vec<usize> = world
            .goods
            .iter()
            .enumerate()
            .filter(|(_, g)| g.status == GoodStatus::Waiting)
            .map(|(i, _)| i)
            .collect();
        if waiting.is_empty() {
            return None;
        }
        let h = mix(&[self.seed, world.stage, agent as u64]);
        Some(waiting[(h % waiting.len() as u64) as usize])
    }
}
