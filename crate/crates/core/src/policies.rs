//! Built-in policies: uniform random over the allowed actions (the untrained
//! baseline under each mask) and a deterministic greedy policy.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{
    advance_index, decode_action, Action, ActionMask, EnvConfig, EnvError, Environment,
};
use crate::partition::{average_over_transitions, Assignment};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("every action is masked")]
    AllMasked,
    #[error(transparent)]
    Env(#[from] EnvError),
}

pub trait Policy<F: Scalar> {
    fn choose(&mut self, env: &Environment<F>, mask: &ActionMask) -> Result<usize, PolicyError>;
}

/// Uniform draw over the allowed actions.
pub fn random_policy<R: Rng + ?Sized>(
    mask: &ActionMask,
    rng: &mut R,
) -> Result<usize, PolicyError> {
    let count = mask.count();
    if count == 0 {
        return Err(PolicyError::AllMasked);
    }
    let pick = rng.gen_range(0..count);
    Ok(mask.allowed_actions().nth(pick).expect("pick < count"))
}

/// Commits when the slice is valid and committing is allowed. Otherwise
/// takes the allowed swap leaving the smallest current-tier cut, then the
/// smallest future-tier cut, then the fewest moves relative to the previous
/// slice; ties go to the lowest action index.
pub fn greedy_policy<F: Scalar>(
    env: &Environment<F>,
    mask: &ActionMask,
) -> Result<usize, PolicyError> {
    let n = env.num_qubits();
    let advance = advance_index(n);
    if mask.count() == 0 {
        return Err(PolicyError::AllMasked);
    }
    if mask.allowed(advance) && env.is_valid() {
        return Ok(advance);
    }
    let state = env.state();
    let graph = env.graph();
    let moved = |q: usize, to: usize| usize::from(state.previous.core(q) != to);
    let mut best: Option<(usize, i64, F, isize)> = None;
    for i in mask.allowed_actions() {
        let Action::Swap(a, b) = decode_action(n, i)? else {
            continue;
        };
        let gain = graph.exchange_gain(&state.current, a, b);
        let (ca, cb) = (state.current.core(a), state.current.core(b));
        let move_delta =
            (moved(a, cb) + moved(b, ca)) as isize - (moved(a, ca) + moved(b, cb)) as isize;
        let better = match best {
            None => true,
            Some((_, cur, fut, mv)) => match gain.current.cmp(&cur) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => match gain.future.partial_cmp(&fut) {
                    Some(Ordering::Greater) => true,
                    Some(Ordering::Less) => false,
                    _ => move_delta < mv,
                },
            },
        };
        if better {
            best = Some((i, gain.current, gain.future, move_delta));
        }
    }
    // only Advance is allowed but the slice is invalid (unmasked mode)
    Ok(best.map_or(advance, |(i, ..)| i))
}

pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<F: Scalar> Policy<F> for RandomPolicy {
    fn choose(&mut self, _env: &Environment<F>, mask: &ActionMask) -> Result<usize, PolicyError> {
        random_policy(mask, &mut self.rng)
    }
}

pub struct GreedyPolicy;

impl<F: Scalar> Policy<F> for GreedyPolicy {
    fn choose(&mut self, env: &Environment<F>, mask: &ActionMask) -> Result<usize, PolicyError> {
        greedy_policy(env, mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    Greedy,
}

impl PolicyKind {
    pub fn build<F: Scalar>(self, seed: u64) -> Box<dyn Policy<F> + Send> {
        match self {
            PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
            PolicyKind::Greedy => Box::new(GreedyPolicy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub total_moves: usize,
    pub avg_moves: f64,
    pub episode_length: usize,
    pub total_reward: f64,
    pub completed: bool,
}

/// Stats plus the assignment committed for every slice that was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub stats: EpisodeStats,
    pub committed: Vec<Assignment>,
    pub moves_per_step: Vec<usize>,
}

/// Drives `env` from a fresh reset until it terminates or truncates.
pub fn run_policy<F: Scalar>(
    env: &mut Environment<F>,
    policy: &mut (impl Policy<F> + ?Sized),
) -> Result<EpisodeTrace, PolicyError> {
    let (_, mut mask) = env.reset();
    // the action budget bounds every episode, so this always ends
    while !env.state().done() {
        let action = policy.choose(env, &mask)?;
        env.transition(action)?;
        mask = env.mask();
    }
    let state = env.state();
    Ok(EpisodeTrace {
        stats: EpisodeStats {
            total_moves: state.total_moves(),
            avg_moves: average_over_transitions(state.total_moves(), state.committed.len()),
            episode_length: state.episode_length,
            total_reward: state.total_reward,
            completed: state.terminated,
        },
        committed: state.committed.clone(),
        moves_per_step: state.moves.clone(),
    })
}

/// Builds an `f64` environment from `config` and runs one episode.
pub fn run_episode(
    config: &EnvConfig,
    kind: PolicyKind,
    seed: u64,
) -> Result<EpisodeStats, PolicyError> {
    let mut env = Environment::<f64>::new(config.clone())?;
    let mut policy = kind.build::<f64>(seed);
    run_policy(&mut env, policy.as_mut()).map(|t| t.stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::gen_random;
    use crate::environment::{action_index, compute_mask, CircuitSource, MaskMode};
    use crate::interaction::is_valid;
    use crate::partition::{oracle_optimal, CoreConfig, DEFAULT_ORACLE_BOUND};

    #[test]
    fn random_policy_single_choice() {
        let mut mask = vec![false; 11];
        mask[7] = true;
        let mask = ActionMask::from_vec(mask);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(random_policy(&mask, &mut rng).unwrap(), 7);
        }
        assert!(matches!(
            random_policy(&ActionMask::all(5, false), &mut rng),
            Err(PolicyError::AllMasked)
        ));
    }

    #[test]
    fn random_policy_is_uniform() {
        let mut bits = vec![false; 11];
        for i in [1, 4, 6, 10] {
            bits[i] = true;
        }
        let mask = ActionMask::from_vec(bits);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 10_000;
        let mut counts = [0usize; 11];
        for _ in 0..draws {
            counts[random_policy(&mask, &mut rng).unwrap()] += 1;
        }
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for i in [1, 4, 6, 10] {
            let dev = (counts[i] as f64 - draws as f64 * 0.25).abs();
            assert!(dev < 4.0 * sigma, "action {i}: {}", counts[i]);
        }
        assert_eq!(counts.iter().sum::<usize>(), draws);
    }

    fn config(slices: Vec<Vec<(usize, usize)>>, n: usize, k: usize, mode: MaskMode) -> EnvConfig {
        EnvConfig::new(
            CircuitSource::Slices {
                num_qubits: n,
                slices,
            },
            k,
        )
        .with_mask(mode)
    }

    #[test]
    fn greedy_advances_when_valid_and_fixes_single_pair() {
        let c = config(vec![vec![(0, 1)], vec![(0, 2)]], 4, 2, MaskMode::Soft);
        let mut env = Environment::<f64>::new(c).unwrap();
        let mask = env.mask();
        assert_eq!(greedy_policy(&env, &mask).unwrap(), advance_index(4));
        env.step(advance_index(4)).unwrap();

        // hard mask on {(0,2)} from [0,0,1,1] offers (0,2), (0,3), (1,2); only
        // (0,3) and (1,2) co-locate, (0,3) is lower
        let c = config(vec![vec![(0, 2)]], 4, 2, MaskMode::Hard);
        let env = Environment::<f64>::new(c).unwrap();
        let pick = greedy_policy(&env, &env.mask()).unwrap();
        assert_eq!(pick, action_index(4, 0, 3).unwrap());
    }

    #[test]
    fn greedy_matches_oracle_on_two_exchanges() {
        // slice 0 puts 0 next to 3, slice 1 needs 0 next to 2: one exchange
        // (two moves) is unavoidable
        let c = config(vec![vec![(0, 3)], vec![(0, 2)]], 4, 2, MaskMode::Hard);
        let mut env = Environment::<f64>::new(c).unwrap();
        let trace = run_policy(&mut env, &mut GreedyPolicy).unwrap();
        assert!(trace.stats.completed);
        assert_eq!(trace.committed[0].cores(), &[1, 0, 0, 1]);
        assert_eq!(trace.stats.total_moves, 2);
        let opt = oracle_optimal(env.slices(), env.cores(), 100).unwrap();
        assert_eq!(opt.total_moves, trace.stats.total_moves);
    }

    #[test]
    fn all_valid_circuit_needs_only_advances() {
        let c = config(
            vec![vec![(0, 1), (2, 3)], vec![(1, 0)], vec![(3, 2)]],
            4,
            2,
            MaskMode::Soft,
        );
        let stats = run_episode(&c, PolicyKind::Greedy, 0).unwrap();
        assert_eq!(stats.total_moves, 0);
        assert_eq!(stats.episode_length, 3);
        assert!(stats.completed);
    }

    #[test]
    fn hard_random_never_beats_oracle() {
        let c = config(vec![vec![(0, 1)], vec![(0, 2)]], 4, 2, MaskMode::Hard);
        for seed in 0..50 {
            let stats = run_episode(&c, PolicyKind::Random, seed).unwrap();
            if stats.completed {
                assert!(stats.total_moves >= 2);
            }
        }
        assert_eq!(
            run_episode(&c, PolicyKind::Random, 3).unwrap(),
            run_episode(&c, PolicyKind::Random, 3).unwrap()
        );
    }

    #[test]
    fn greedy_hard_completes_every_enumerable_instance() {
        for (n, k) in [(4, 2), (6, 3), (6, 2), (8, 4), (8, 2)] {
            let cores = CoreConfig::new(n, k).unwrap();
            for seed in 0..40 {
                let density = (2 * cores.max_pairs()) as f64 / n as f64;
                let circuit = gen_random(n, 6, density, seed).unwrap();
                let gates = circuit.gates.iter().map(|g| (g.a, g.b)).collect();
                let c = EnvConfig::new(
                    CircuitSource::Gates {
                        num_qubits: n,
                        gates,
                    },
                    k,
                )
                .with_mask(MaskMode::Hard);
                let mut env = Environment::<f64>::new(c).unwrap();
                let trace = run_policy(&mut env, &mut GreedyPolicy).unwrap();
                assert!(trace.stats.completed, "n={n} k={k} seed={seed}");
                for (s, a) in env.slices().iter().zip(&trace.committed) {
                    assert!(is_valid(s, a) && a.is_balanced(&cores));
                }
                if n <= 8 {
                    let opt = oracle_optimal(env.slices(), &cores, DEFAULT_ORACLE_BOUND).unwrap();
                    assert!(opt.total_moves <= trace.stats.total_moves);
                }
            }
        }
    }

    #[test]
    fn policies_never_pick_masked_actions() {
        let circuit = gen_random(8, 10, 0.75, 5).unwrap();
        let gates: Vec<(usize, usize)> = circuit.gates.iter().map(|g| (g.a, g.b)).collect();
        for mode in [MaskMode::Soft, MaskMode::Hard] {
            let c = EnvConfig::new(
                CircuitSource::Gates {
                    num_qubits: 8,
                    gates: gates.clone(),
                },
                2,
            )
            .with_mask(mode)
            .with_budget(64);
            let mut env = Environment::<f64>::new(c).unwrap();
            let mut policy = RandomPolicy::new(9);
            let (_, mut mask) = env.reset();
            while !env.state().done() {
                let a = Policy::<f64>::choose(&mut policy, &env, &mask).unwrap();
                assert!(mask.allowed(a));
                assert_eq!(mask, compute_mask(env.slice(), &env.state().current, mode));
                mask = env.step(a).unwrap().mask;
            }
        }
    }
}
