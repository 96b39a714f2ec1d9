//! Balanced qubit-to-core assignments and the algorithms that produce them.
//!
//! * [`roee`]: relaxed Overall Extreme Exchange, a Kernighan–Lin style
//!   exchange refinement over the tiered cut that stops at the first
//!   assignment valid for the slice.
//! * [`repair_direct_swap`]: moves each misplaced qubit into its partner's
//!   core; the fallback when exchange passes stall.
//! * [`fgp_roee`]: the per-slice driver producing a whole [`Trajectory`].
//! * [`oracle_optimal`]: exact minimum-movement trajectory by exhaustive
//!   layered shortest path, for small instances.
//!
//! All tie-breaks pick the lowest qubit (or pair) index, so every result is
//! reproducible.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{QubitId, Timeslice};
use crate::interaction::{is_valid, lookahead_graph, Gain, InteractionError, InteractionGraph};
use crate::Scalar;

pub const DEFAULT_MAX_PASSES: usize = 16;
pub const DEFAULT_ORACLE_BOUND: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("Q not divisible by k: {num_qubits} qubits on {num_cores} cores")]
    Indivisible { num_qubits: usize, num_cores: usize },
    #[error("at least 2 cores are required, got {0}")]
    TooFewCores(usize),
    #[error("assignment size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("core {core} out of range for {num_cores} cores")]
    CoreOutOfRange { core: usize, num_cores: usize },
    #[error("assignment is not balanced for capacity {capacity}")]
    Unbalanced { capacity: usize },
    #[error("slice {slice} has {pairs} pairs but {num_cores} cores of capacity {capacity} fit at most {max}")]
    InfeasibleSlice {
        slice: usize,
        pairs: usize,
        num_cores: usize,
        capacity: usize,
        max: usize,
    },
    #[error("instance too large: {count} balanced assignments exceed the bound {bound}")]
    InstanceTooLarge { count: u128, bound: usize },
    #[error("circuit has no timeslices")]
    EmptyCircuit,
    #[error(transparent)]
    Interaction(#[from] InteractionError),
}

/// `num_cores` cores holding exactly `capacity` qubits each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreConfig {
    pub num_cores: usize,
    pub capacity: usize,
}

impl CoreConfig {
    pub fn new(num_qubits: usize, num_cores: usize) -> Result<Self, PartitionError> {
        if num_cores < 2 {
            return Err(PartitionError::TooFewCores(num_cores));
        }
        if num_qubits == 0 || !num_qubits.is_multiple_of(num_cores) {
            return Err(PartitionError::Indivisible {
                num_qubits,
                num_cores,
            });
        }
        Ok(CoreConfig {
            num_cores,
            capacity: num_qubits / num_cores,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_cores * self.capacity
    }

    /// Most disjoint pairs that can be co-located at once.
    pub fn max_pairs(&self) -> usize {
        self.num_cores * (self.capacity / 2)
    }

    fn check_feasible(&self, slice: &Timeslice) -> Result<(), PartitionError> {
        if slice.pairs.len() > self.max_pairs() {
            return Err(PartitionError::InfeasibleSlice {
                slice: slice.index,
                pairs: slice.pairs.len(),
                num_cores: self.num_cores,
                capacity: self.capacity,
                max: self.max_pairs(),
            });
        }
        Ok(())
    }
}

/// Core index of every qubit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Assignment {
    core_of: Vec<usize>,
    num_cores: usize,
}

impl Assignment {
    pub fn from_cores(core_of: Vec<usize>, num_cores: usize) -> Result<Self, PartitionError> {
        if let Some(&core) = core_of.iter().find(|&&c| c >= num_cores) {
            return Err(PartitionError::CoreOutOfRange { core, num_cores });
        }
        Ok(Assignment { core_of, num_cores })
    }

    /// Like [`Assignment::from_cores`] but also requires exact balance.
    pub fn balanced(core_of: Vec<usize>, cores: &CoreConfig) -> Result<Self, PartitionError> {
        if core_of.len() != cores.num_qubits() {
            return Err(PartitionError::SizeMismatch(
                core_of.len(),
                cores.num_qubits(),
            ));
        }
        let a = Self::from_cores(core_of, cores.num_cores)?;
        if !a.is_balanced(cores) {
            return Err(PartitionError::Unbalanced {
                capacity: cores.capacity,
            });
        }
        Ok(a)
    }

    #[inline]
    pub fn core(&self, q: QubitId) -> usize {
        self.core_of[q]
    }

    pub fn cores(&self) -> &[usize] {
        &self.core_of
    }

    pub fn num_cores(&self) -> usize {
        self.num_cores
    }

    pub fn len(&self) -> usize {
        self.core_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.core_of.is_empty()
    }

    /// Exchanges the cores of `a` and `b`.
    pub fn swap(&mut self, a: QubitId, b: QubitId) {
        self.core_of.swap(a, b);
    }

    pub fn qubits_in(&self, core: usize) -> impl Iterator<Item = QubitId> + '_ {
        self.core_of
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == core)
            .map(|(q, _)| q)
    }

    pub fn core_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_cores];
        for &c in &self.core_of {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn is_balanced(&self, cores: &CoreConfig) -> bool {
        self.num_cores == cores.num_cores
            && self.core_of.len() == cores.num_qubits()
            && self.core_sizes().iter().all(|&s| s == cores.capacity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    #[default]
    RoundRobin,
    Random,
}

/// Number of qubits whose core differs between the two assignments.
pub fn nonlocal_moves(prev: &Assignment, next: &Assignment) -> Result<usize, PartitionError> {
    if prev.len() != next.len() {
        return Err(PartitionError::SizeMismatch(prev.len(), next.len()));
    }
    Ok(prev
        .core_of
        .iter()
        .zip(&next.core_of)
        .filter(|(a, b)| a != b)
        .count())
}

/// Seed placement: `RoundRobin` fills cores in qubit order (`q / capacity`),
/// `Random` is a uniformly random balanced assignment drawn from `seed`.
pub fn initial_assignment(
    num_qubits: usize,
    cores: &CoreConfig,
    strategy: InitStrategy,
    seed: u64,
) -> Result<Assignment, PartitionError> {
    if cores.num_qubits() != num_qubits {
        return Err(PartitionError::Indivisible {
            num_qubits,
            num_cores: cores.num_cores,
        });
    }
    let mut core_of: Vec<usize> = (0..num_qubits).map(|q| q / cores.capacity).collect();
    if strategy == InitStrategy::Random {
        core_of.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(Assignment {
        core_of,
        num_cores: cores.num_cores,
    })
}

/// Result of placing one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceOutcome {
    pub assignment: Assignment,
    /// Exchanges kept in the result, including repair swaps.
    pub swaps: usize,
    pub repaired: bool,
}

/// Relaxed Overall Extreme Exchange. See [`roee_with_stats`].
pub fn roee<F: Scalar>(
    graph: &InteractionGraph<F>,
    slice: &Timeslice,
    start: &Assignment,
    cores: &CoreConfig,
    max_passes: usize,
) -> Result<Assignment, PartitionError> {
    roee_with_stats(graph, slice, start, cores, max_passes).map(|o| o.assignment)
}

/// Exchange passes over the tiered cut, returning as soon as the slice is
/// valid.
///
/// Within a pass the unlocked cross-core pair with the largest gain is
/// exchanged and both qubits are locked, even when the gain is negative.
/// After a full pass the assignment rolls back to the best prefix. A pass
/// without cumulative improvement, or running out of passes, hands over to
/// [`repair_direct_swap`].
pub fn roee_with_stats<F: Scalar>(
    graph: &InteractionGraph<F>,
    slice: &Timeslice,
    start: &Assignment,
    cores: &CoreConfig,
    max_passes: usize,
) -> Result<SliceOutcome, PartitionError> {
    check_shape(start, cores)?;
    cores.check_feasible(slice)?;
    let mut current = start.clone();
    let mut kept = 0;
    if is_valid(slice, &current) {
        return Ok(SliceOutcome {
            assignment: current,
            swaps: 0,
            repaired: false,
        });
    }
    let n = current.len();
    for _ in 0..max_passes {
        let pass_start = current.clone();
        let mut locked = vec![false; n];
        let mut moves: Vec<(QubitId, QubitId)> = Vec::new();
        let mut cumulative = Gain::zero();
        let mut best = (Gain::zero(), 0usize);
        loop {
            let mut pick: Option<(QubitId, QubitId, Gain<F>)> = None;
            #[allow(clippy::needless_range_loop)]
            for a in 0..n {
                if locked[a] {
                    continue;
                }
                for b in a + 1..n {
                    if locked[b] || current.core(a) == current.core(b) {
                        continue;
                    }
                    let gain = graph.exchange_gain(&current, a, b);
                    if pick.is_none_or(|(_, _, g)| gain.total_cmp(&g) == Ordering::Greater) {
                        pick = Some((a, b, gain));
                    }
                }
            }
            let Some((a, b, gain)) = pick else { break };
            current.swap(a, b);
            locked[a] = true;
            locked[b] = true;
            moves.push((a, b));
            cumulative = cumulative + gain;
            if is_valid(slice, &current) {
                return Ok(SliceOutcome {
                    assignment: current,
                    swaps: kept + moves.len(),
                    repaired: false,
                });
            }
            if cumulative.total_cmp(&best.0) == Ordering::Greater {
                best = (cumulative, moves.len());
            }
        }
        current = pass_start;
        for &(a, b) in &moves[..best.1] {
            current.swap(a, b);
        }
        kept += best.1;
        if best.1 == 0 {
            break;
        }
    }
    let repaired = repair_direct_swap_with_stats(slice, &current, graph, cores)?;
    Ok(SliceOutcome {
        assignment: repaired.assignment,
        swaps: kept + repaired.swaps,
        repaired: true,
    })
}

/// Direct-swap repair. See [`repair_direct_swap_with_stats`].
pub fn repair_direct_swap<F: Scalar>(
    slice: &Timeslice,
    assignment: &Assignment,
    graph: &InteractionGraph<F>,
    cores: &CoreConfig,
) -> Result<Assignment, PartitionError> {
    repair_direct_swap_with_stats(slice, assignment, graph, cores).map(|o| o.assignment)
}

/// Walks the slice pairs in order and fixes each violated pair `(a, b)` by
/// swapping `a` with an occupant `c` of `b`'s core. `c` is never `b` and never
/// a member of an already co-located pair, so fixed pairs stay fixed. Among
/// candidates the one adding the least future-tier cut wins, ties to the
/// lowest index.
///
/// When `b`'s core holds no candidate (possible only with odd capacity), `b`
/// is moved into `a`'s core instead, and failing that both are moved into a
/// third core with two free slots. One of the three always applies when the
/// slice is feasible.
pub fn repair_direct_swap_with_stats<F: Scalar>(
    slice: &Timeslice,
    assignment: &Assignment,
    graph: &InteractionGraph<F>,
    cores: &CoreConfig,
) -> Result<SliceOutcome, PartitionError> {
    check_shape(assignment, cores)?;
    cores.check_feasible(slice)?;
    let mut current = assignment.clone();
    let n = current.len();
    let partners = slice.partners(n);
    let mut swaps = 0;

    // Occupants of `core` that may be displaced without breaking a fixed pair.
    let free_in = |asg: &Assignment, core: usize, exclude: &[QubitId]| -> Vec<QubitId> {
        asg.qubits_in(core)
            .filter(|q| !exclude.contains(q))
            .filter(|&q| partners[q].is_none_or(|p| asg.core(p) != asg.core(q)))
            .collect()
    };
    // Candidate minimizing the future-tier cut increase, lowest index on ties.
    let best_partner = |asg: &Assignment, mover: QubitId, candidates: &[QubitId]| {
        let mut pick: Option<(QubitId, F)> = None;
        for &c in candidates {
            let gain = graph.exchange_gain(asg, mover, c).future;
            if pick.is_none_or(|(_, g)| gain > g) {
                pick = Some((c, gain));
            }
        }
        pick.map(|(c, _)| c)
    };

    for g in &slice.pairs {
        let (a, b) = (g.a, g.b);
        if current.core(a) == current.core(b) {
            continue;
        }
        let into_b = free_in(&current, current.core(b), &[b]);
        if let Some(c) = best_partner(&current, a, &into_b) {
            current.swap(a, c);
            swaps += 1;
            continue;
        }
        let into_a = free_in(&current, current.core(a), &[a]);
        if let Some(c) = best_partner(&current, b, &into_a) {
            current.swap(b, c);
            swaps += 1;
            continue;
        }
        let (ca, cb) = (current.core(a), current.core(b));
        let third = (0..cores.num_cores)
            .filter(|&x| x != ca && x != cb)
            .map(|x| free_in(&current, x, &[]))
            .find(|free| free.len() >= 2);
        let Some(free) = third else {
            // Unreachable for feasible slices; reported rather than looping.
            return Err(PartitionError::InfeasibleSlice {
                slice: slice.index,
                pairs: slice.pairs.len(),
                num_cores: cores.num_cores,
                capacity: cores.capacity,
                max: cores.max_pairs(),
            });
        };
        let c1 = best_partner(&current, a, &free).expect("two free slots");
        current.swap(a, c1);
        let rest: Vec<QubitId> = free.into_iter().filter(|&q| q != c1).collect();
        let c2 = best_partner(&current, b, &rest).expect("one free slot left");
        current.swap(b, c2);
        swaps += 2;
    }
    debug_assert!(is_valid(slice, &current));
    Ok(SliceOutcome {
        assignment: current,
        swaps,
        repaired: swaps > 0,
    })
}

fn check_shape(assignment: &Assignment, cores: &CoreConfig) -> Result<(), PartitionError> {
    if assignment.len() != cores.num_qubits() {
        return Err(PartitionError::SizeMismatch(
            assignment.len(),
            cores.num_qubits(),
        ));
    }
    if !assignment.is_balanced(cores) {
        return Err(PartitionError::Unbalanced {
            capacity: cores.capacity,
        });
    }
    Ok(())
}

/// Per-slice assignment path and its movement counts.
///
/// `moves_per_step[0]` is always 0: the first placement is free. The average
/// is taken over the `len - 1` transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub assignments: Vec<Assignment>,
    pub moves_per_step: Vec<usize>,
    pub total_moves: usize,
    pub avg_moves: f64,
    /// Exchanges applied while placing each slice; empty when unknown.
    #[serde(default)]
    pub swaps_per_step: Vec<usize>,
}

impl Trajectory {
    pub fn from_assignments(assignments: Vec<Assignment>) -> Result<Self, PartitionError> {
        let mut moves_per_step = Vec::with_capacity(assignments.len());
        for (t, a) in assignments.iter().enumerate() {
            moves_per_step.push(if t == 0 {
                0
            } else {
                nonlocal_moves(&assignments[t - 1], a)?
            });
        }
        let total_moves = moves_per_step.iter().sum();
        Ok(Trajectory {
            avg_moves: average_over_transitions(total_moves, assignments.len()),
            assignments,
            moves_per_step,
            total_moves,
            swaps_per_step: Vec::new(),
        })
    }

    pub fn num_transitions(&self) -> usize {
        self.assignments.len().saturating_sub(1)
    }

    pub fn total_swaps(&self) -> usize {
        self.swaps_per_step.iter().sum()
    }
}

pub(crate) fn average_over_transitions(total_moves: usize, num_slices: usize) -> f64 {
    if num_slices > 1 {
        total_moves as f64 / (num_slices - 1) as f64
    } else {
        0.0
    }
}

/// Knobs of the FGP-rOEE driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgpParams {
    pub decay: f64,
    /// Lookahead depth in slices; `None` looks through the end of the circuit.
    pub horizon: Option<usize>,
    pub init: InitStrategy,
    pub seed: u64,
    pub max_passes: usize,
}

impl Default for FgpParams {
    fn default() -> Self {
        FgpParams {
            decay: 0.5,
            horizon: None,
            init: InitStrategy::RoundRobin,
            seed: 0,
            max_passes: DEFAULT_MAX_PASSES,
        }
    }
}

/// FGP-rOEE: place slice 0 from the seed assignment, then every later slice
/// starting from the previous slice's result.
pub fn fgp_roee<F: Scalar>(
    slices: &[Timeslice],
    cores: &CoreConfig,
    params: &FgpParams,
) -> Result<Trajectory, PartitionError> {
    if slices.is_empty() {
        return Err(PartitionError::EmptyCircuit);
    }
    let n = cores.num_qubits();
    let decay = F::of(params.decay);
    let mut previous = initial_assignment(n, cores, params.init, params.seed)?;
    let mut assignments = Vec::with_capacity(slices.len());
    let mut swaps = Vec::with_capacity(slices.len());
    for (t, slice) in slices.iter().enumerate() {
        let graph = lookahead_graph(slices, n, t, decay, params.horizon)?;
        let outcome = roee_with_stats(&graph, slice, &previous, cores, params.max_passes)?;
        swaps.push(outcome.swaps);
        previous = outcome.assignment.clone();
        assignments.push(outcome.assignment);
    }
    let mut trajectory = Trajectory::from_assignments(assignments)?;
    trajectory.swaps_per_step = swaps;
    Ok(trajectory)
}

/// Number of balanced assignments, `Q! / (capacity!)^k`, saturating.
pub fn count_balanced(cores: &CoreConfig) -> u128 {
    // product of binomials C(remaining, capacity)
    let mut total: u128 = 1;
    let mut remaining = cores.num_qubits() as u128;
    for _ in 0..cores.num_cores {
        let mut binom: u128 = 1;
        for i in 0..cores.capacity as u128 {
            binom = binom.saturating_mul(remaining - i) / (i + 1);
        }
        total = total.saturating_mul(binom);
        remaining -= cores.capacity as u128;
    }
    total
}

/// Every balanced assignment, in lexicographic order of `core_of`.
pub fn balanced_assignments(cores: &CoreConfig) -> Vec<Assignment> {
    fn extend(
        prefix: &mut Vec<usize>,
        room: &mut [usize],
        n: usize,
        k: usize,
        out: &mut Vec<Assignment>,
    ) {
        if prefix.len() == n {
            out.push(Assignment {
                core_of: prefix.clone(),
                num_cores: k,
            });
            return;
        }
        for c in 0..k {
            if room[c] > 0 {
                room[c] -= 1;
                prefix.push(c);
                extend(prefix, room, n, k, out);
                prefix.pop();
                room[c] += 1;
            }
        }
    }
    let mut out = Vec::new();
    let mut room = vec![cores.capacity; cores.num_cores];
    extend(
        &mut Vec::new(),
        &mut room,
        cores.num_qubits(),
        cores.num_cores,
        &mut out,
    );
    out
}

/// Exact minimum-movement trajectory.
///
/// Layer `t` holds the balanced assignments valid for slice `t`; edges cost
/// [`nonlocal_moves`]. Among optimal paths the lexicographically smallest
/// assignment sequence is returned.
pub fn oracle_optimal(
    slices: &[Timeslice],
    cores: &CoreConfig,
    bound: usize,
) -> Result<Trajectory, PartitionError> {
    if slices.is_empty() {
        return Err(PartitionError::EmptyCircuit);
    }
    let count = count_balanced(cores);
    if count > bound as u128 {
        return Err(PartitionError::InstanceTooLarge { count, bound });
    }
    for slice in slices {
        cores.check_feasible(slice)?;
    }
    let all = balanced_assignments(cores);
    let layers: Vec<Vec<&Assignment>> = slices
        .iter()
        .map(|s| all.iter().filter(|a| is_valid(s, a)).collect())
        .collect();
    let hamming = |x: &Assignment, y: &Assignment| {
        x.core_of
            .iter()
            .zip(&y.core_of)
            .filter(|(a, b)| a != b)
            .count()
    };

    // cost_to_end[t][i]: cheapest completion from node i of layer t
    let last = slices.len() - 1;
    let mut cost_to_end: Vec<Vec<usize>> = vec![Vec::new(); slices.len()];
    cost_to_end[last] = vec![0; layers[last].len()];
    for t in (0..last).rev() {
        cost_to_end[t] = layers[t]
            .iter()
            .map(|x| {
                layers[t + 1]
                    .iter()
                    .zip(&cost_to_end[t + 1])
                    .map(|(y, rest)| hamming(x, y) + rest)
                    .min()
                    .expect("feasible layer is non-empty")
            })
            .collect();
    }

    let (mut node, _) = cost_to_end[0]
        .iter()
        .enumerate()
        .min_by_key(|&(i, c)| (*c, i))
        .expect("feasible layer is non-empty");
    let mut path = vec![layers[0][node].clone()];
    for t in 1..=last {
        let target = cost_to_end[t - 1][node];
        let from = layers[t - 1][node];
        node = (0..layers[t].len())
            .find(|&j| hamming(from, layers[t][j]) + cost_to_end[t][j] == target)
            .expect("optimal successor exists");
        path.push(layers[t][node].clone());
    }
    Trajectory::from_assignments(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{gen_random, Gate};
    use crate::interaction::{cut_weight, TieredWeight};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn slice(i: usize, pairs: &[(usize, usize)]) -> Timeslice {
        Timeslice::new(i, pairs.iter().map(|&p| Gate::from(p)).collect())
    }

    fn asg(cores: &[usize], k: usize) -> Assignment {
        Assignment::from_cores(cores.to_vec(), k).unwrap()
    }

    fn cfg(q: usize, k: usize) -> CoreConfig {
        CoreConfig::new(q, k).unwrap()
    }

    fn graph(n: usize, edges: &[((usize, usize), u32, f64)]) -> InteractionGraph<f64> {
        InteractionGraph::from_edges(
            n,
            0,
            edges
                .iter()
                .map(|&(e, c, f)| (e, TieredWeight::new(c, f)))
                .collect::<BTreeMap<_, _>>(),
        )
    }

    #[test]
    fn movement_examples() {
        let a = asg(&[0, 0, 1, 1], 2);
        assert_eq!(nonlocal_moves(&a, &a).unwrap(), 0);
        let mut b = a.clone();
        b.swap(1, 2);
        assert_eq!(nonlocal_moves(&a, &b).unwrap(), 2);
        assert_eq!(nonlocal_moves(&a, &asg(&[1, 1, 0, 0], 2)).unwrap(), 4);
        assert!(nonlocal_moves(&a, &asg(&[0, 1], 2)).is_err());
    }

    #[test]
    fn seed_placements() {
        let rr = initial_assignment(4, &cfg(4, 2), InitStrategy::RoundRobin, 0).unwrap();
        assert_eq!(rr.cores(), &[0, 0, 1, 1]);
        let rr = initial_assignment(6, &cfg(6, 3), InitStrategy::RoundRobin, 0).unwrap();
        assert_eq!(rr.cores(), &[0, 0, 1, 1, 2, 2]);
        let err = CoreConfig::new(5, 2).unwrap_err();
        assert!(err.to_string().contains("Q not divisible by k"));
        assert!(CoreConfig::new(4, 1).is_err());

        let c = cfg(16, 4);
        let r1 = initial_assignment(16, &c, InitStrategy::Random, 9).unwrap();
        assert!(r1.is_balanced(&c));
        assert_eq!(
            r1,
            initial_assignment(16, &c, InitStrategy::Random, 9).unwrap()
        );
        assert_ne!(
            r1,
            initial_assignment(16, &c, InitStrategy::Random, 10).unwrap()
        );
    }

    #[test]
    fn roee_keeps_valid_start() {
        let s = slice(0, &[(0, 1)]);
        let g = graph(4, &[((0, 1), 1, 0.0), ((0, 2), 0, 0.5)]);
        let start = asg(&[0, 0, 1, 1], 2);
        let out = roee_with_stats(&g, &s, &start, &cfg(4, 2), 4).unwrap();
        assert_eq!(out.assignment, start);
        assert_eq!(out.swaps, 0);
    }

    #[test]
    fn roee_single_exchange_with_lowest_pair_tiebreak() {
        // (0,3) and (1,2) both co-locate 0 and 2; (0,3) is the lower pair.
        let s = slice(0, &[(0, 2)]);
        let g = graph(4, &[((0, 2), 1, 0.0)]);
        let out = roee_with_stats(&g, &s, &asg(&[0, 0, 1, 1], 2), &cfg(4, 2), 4).unwrap();
        assert_eq!(out.assignment.cores(), &[1, 0, 1, 0]);
        assert_eq!(out.swaps, 1);
        assert!(!out.repaired);

        // brute force: every balanced valid assignment reachable by one
        // exchange from the start moves exactly 2 qubits
        let start = asg(&[0, 0, 1, 1], 2);
        for cand in balanced_assignments(&cfg(4, 2)) {
            if is_valid(&s, &cand) && nonlocal_moves(&start, &cand).unwrap() <= 2 {
                assert_eq!(nonlocal_moves(&start, &cand).unwrap(), 2);
            }
        }
    }

    #[test]
    fn roee_breaks_ties_with_lookahead() {
        // 0 and 3 must meet; (0,4) and (0,5) fix the slice equally, but a
        // future edge (1,5) makes bringing 5 next to 1 strictly better.
        let s = slice(0, &[(0, 3)]);
        let start = asg(&[0, 0, 0, 1, 1, 1], 2);
        let plain = graph(6, &[((0, 3), 1, 0.0)]);
        let out = roee(&plain, &s, &start, &cfg(6, 2), 4).unwrap();
        assert_eq!(out.cores(), &[1, 0, 0, 1, 0, 1]);

        let ahead = graph(6, &[((0, 3), 1, 0.0), ((1, 5), 0, 0.5)]);
        let out = roee(&ahead, &s, &start, &cfg(6, 2), 4).unwrap();
        assert_eq!(out.cores(), &[1, 0, 0, 1, 1, 0]);
    }

    #[test]
    fn repair_examples() {
        let s = slice(0, &[(0, 1)]);
        let g = graph(4, &[((0, 1), 1, 0.0)]);
        let valid = asg(&[0, 0, 1, 1], 2);
        assert_eq!(
            repair_direct_swap(&s, &valid, &g, &cfg(4, 2)).unwrap(),
            valid
        );

        // core 1 holds {1, 3}; 1 is the partner, so 0 trades with 3
        let out =
            repair_direct_swap_with_stats(&s, &asg(&[0, 1, 0, 1], 2), &g, &cfg(4, 2)).unwrap();
        assert_eq!(out.assignment.cores(), &[1, 1, 0, 0]);
        assert_eq!(out.swaps, 1);

        // two violated pairs, two swaps
        let s = slice(0, &[(0, 1), (2, 3)]);
        let g = graph(4, &[((0, 1), 1, 0.0), ((2, 3), 1, 0.0)]);
        let out =
            repair_direct_swap_with_stats(&s, &asg(&[0, 1, 0, 1], 2), &g, &cfg(4, 2)).unwrap();
        assert!(is_valid(&s, &out.assignment));
        assert_eq!(out.swaps, 1); // the first swap fixes both pairs here

        let s = slice(0, &[(0, 2), (4, 6)]);
        let start = asg(&[0, 0, 1, 1, 2, 2, 3, 3], 4);
        let g = graph(8, &[((0, 2), 1, 0.0), ((4, 6), 1, 0.0)]);
        let out = repair_direct_swap_with_stats(&s, &start, &g, &cfg(8, 4)).unwrap();
        assert!(is_valid(&s, &out.assignment));
        assert_eq!(out.swaps, 2);
        assert_eq!(nonlocal_moves(&start, &out.assignment).unwrap(), 4);
    }

    #[test]
    fn repair_minimizes_future_cut() {
        // 0 must join 1 in core 1 = {1, 2, 3}; 3 has a future edge to 1, so
        // displacing 2 is cheaper.
        let s = slice(0, &[(0, 1)]);
        let g = graph(6, &[((0, 1), 1, 0.0), ((1, 3), 0, 0.5)]);
        let start = asg(&[0, 1, 1, 1, 0, 0], 2);
        let out = repair_direct_swap(&s, &start, &g, &cfg(6, 2)).unwrap();
        assert_eq!(out.cores(), &[1, 1, 0, 1, 0, 0]);
    }

    #[test]
    fn repair_uses_third_core_for_odd_capacity() {
        // capacity 3: cores 0 and 1 each hold a fixed pair plus one end of (0,3)
        let s = slice(0, &[(0, 3), (1, 2), (4, 5)]);
        let start = asg(&[0, 0, 0, 1, 1, 1, 2, 2, 2], 3);
        let g = graph(9, &[((0, 3), 1, 0.0), ((1, 2), 1, 0.0), ((4, 5), 1, 0.0)]);
        let out = repair_direct_swap_with_stats(&s, &start, &g, &cfg(9, 3)).unwrap();
        assert!(is_valid(&s, &out.assignment));
        assert_eq!(out.swaps, 2);
        assert_eq!(out.assignment.core(0), 2);
    }

    #[test]
    fn infeasible_slices_are_reported() {
        let s = slice(0, &[(0, 1), (2, 3), (4, 5)]);
        let g = graph(6, &[]);
        let err = roee(&g, &s, &asg(&[0, 0, 0, 1, 1, 1], 2), &cfg(6, 2), 4).unwrap_err();
        assert!(matches!(
            err,
            PartitionError::InfeasibleSlice { max: 2, .. }
        ));
    }

    #[test]
    fn fgp_examples() {
        let empty = vec![slice(0, &[]), slice(1, &[])];
        let tr = fgp_roee::<f64>(&empty, &cfg(4, 2), &FgpParams::default()).unwrap();
        assert_eq!(tr.total_moves, 0);
        assert_eq!(tr.assignments[0], tr.assignments[1]);

        let s = vec![slice(0, &[(0, 1)]), slice(1, &[(0, 1)])];
        let tr = fgp_roee::<f64>(&s, &cfg(4, 2), &FgpParams::default()).unwrap();
        assert_eq!(tr.moves_per_step, vec![0, 0]);

        assert!(matches!(
            fgp_roee::<f64>(&[], &cfg(4, 2), &FgpParams::default()),
            Err(PartitionError::EmptyCircuit)
        ));
    }

    #[test]
    fn fgp_on_random_circuits_is_valid_and_deterministic() {
        let c = gen_random(16, 30, 0.75, 11).unwrap();
        let s = c.timeslices();
        let cores = cfg(16, 4);
        let p = FgpParams::default();
        let tr = fgp_roee::<f64>(&s, &cores, &p).unwrap();
        assert_eq!(tr.assignments.len(), s.len());
        for (slice, a) in s.iter().zip(&tr.assignments) {
            assert!(is_valid(slice, a));
            assert!(a.is_balanced(&cores));
        }
        assert!(tr.avg_moves.is_finite());
        assert_eq!(tr, fgp_roee::<f64>(&s, &cores, &p).unwrap());
        let tr32 = fgp_roee::<f32>(&s, &cores, &p).unwrap();
        assert!(tr32
            .assignments
            .iter()
            .zip(&s)
            .all(|(a, sl)| is_valid(sl, a)));
    }

    #[test]
    fn oracle_examples() {
        let one = vec![slice(0, &[(0, 1)])];
        assert_eq!(
            oracle_optimal(&one, &cfg(4, 2), DEFAULT_ORACLE_BOUND)
                .unwrap()
                .total_moves,
            0
        );

        let s = vec![slice(0, &[(0, 1)]), slice(1, &[(0, 2)])];
        let tr = oracle_optimal(&s, &cfg(4, 2), DEFAULT_ORACLE_BOUND).unwrap();
        assert_eq!(tr.total_moves, 2);
        assert_eq!(tr.avg_moves, 2.0);
        // lexicographically smallest optimal sequence
        assert_eq!(tr.assignments[0].cores(), &[0, 0, 1, 1]);
        assert_eq!(tr.assignments[1].cores(), &[0, 1, 0, 1]);

        assert_eq!(count_balanced(&cfg(4, 2)), 6);
        assert_eq!(count_balanced(&cfg(6, 2)), 20);
        assert_eq!(count_balanced(&cfg(6, 3)), 90);
        assert_eq!(balanced_assignments(&cfg(6, 3)).len(), 90);
        assert!(matches!(
            oracle_optimal(&s, &cfg(16, 4), DEFAULT_ORACLE_BOUND),
            Err(PartitionError::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn oracle_matches_exhaustive_path_enumeration() {
        // independent check: enumerate every path over 3 layers directly
        let cores = cfg(4, 2);
        let s = vec![
            slice(0, &[(0, 3)]),
            slice(1, &[(1, 3)]),
            slice(2, &[(0, 2)]),
        ];
        let all = balanced_assignments(&cores);
        let mut best = usize::MAX;
        for x in all.iter().filter(|a| is_valid(&s[0], a)) {
            for y in all.iter().filter(|a| is_valid(&s[1], a)) {
                for z in all.iter().filter(|a| is_valid(&s[2], a)) {
                    let cost = nonlocal_moves(x, y).unwrap() + nonlocal_moves(y, z).unwrap();
                    best = best.min(cost);
                }
            }
        }
        assert_eq!(oracle_optimal(&s, &cores, 100).unwrap().total_moves, best);
    }

    fn small_instance() -> impl Strategy<Value = (usize, usize, Vec<Timeslice>, Vec<usize>)> {
        prop_oneof![
            Just((4usize, 2usize)),
            Just((6, 3)),
            Just((8, 2)),
            Just((8, 4)),
            Just((6, 2))
        ]
        .prop_flat_map(|(n, k)| {
            let cap = n / k;
            let max_pairs = k * (cap / 2);
            let layers = prop::collection::vec(
                (
                    Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
                    0..=max_pairs,
                ),
                1..5,
            );
            let start = Just((0..n).map(|q| q / cap).collect::<Vec<_>>()).prop_shuffle();
            (Just(n), Just(k), layers, start)
        })
        .prop_map(|(n, k, layers, start)| {
            let slices = layers
                .into_iter()
                .enumerate()
                .map(|(i, (order, m))| {
                    Timeslice::new(
                        i,
                        order
                            .chunks_exact(2)
                            .take(m)
                            .map(|c| Gate::new(c[0], c[1]))
                            .collect(),
                    )
                })
                .collect();
            (n, k, slices, start)
        })
    }

    proptest! {
        #[test]
        fn roee_and_repair_are_balanced_and_valid((n, k, s, start) in small_instance()) {
            let cores = cfg(n, k);
            let start = Assignment::balanced(start, &cores).unwrap();
            let g = lookahead_graph(&s, n, 0, 0.5f64, None).unwrap();
            let r = roee(&g, &s[0], &start, &cores, DEFAULT_MAX_PASSES).unwrap();
            prop_assert!(r.is_balanced(&cores));
            prop_assert!(is_valid(&s[0], &r));
            prop_assert_eq!(cut_weight(&g, &r).unwrap().current, 0);

            let fixed = repair_direct_swap_with_stats(&s[0], &start, &g, &cores).unwrap();
            prop_assert!(fixed.assignment.is_balanced(&cores));
            prop_assert!(is_valid(&s[0], &fixed.assignment));
            let violated = s[0].pairs.iter().filter(|p| start.core(p.a) != start.core(p.b)).count();
            prop_assert!(fixed.swaps <= 2 * violated);
            if cores.capacity.is_multiple_of(2) {
                prop_assert!(fixed.swaps <= violated);
            }
        }

        #[test]
        fn oracle_never_beaten_by_fgp((n, k, s, _start) in small_instance()) {
            let cores = cfg(n, k);
            let opt = oracle_optimal(&s, &cores, DEFAULT_ORACLE_BOUND).unwrap();
            let fgp = fgp_roee::<f64>(&s, &cores, &FgpParams::default()).unwrap();
            prop_assert!(opt.total_moves <= fgp.total_moves);
            for (sl, a) in s.iter().zip(&opt.assignments) {
                prop_assert!(is_valid(sl, a) && a.is_balanced(&cores));
            }
        }

        #[test]
        fn movement_is_a_hamming_metric(x in prop::collection::vec(0usize..3, 6), y in prop::collection::vec(0usize..3, 6), z in prop::collection::vec(0usize..3, 6)) {
            let (x, y, z) = (asg(&x, 3), asg(&y, 3), asg(&z, 3));
            let d = |p: &Assignment, q: &Assignment| nonlocal_moves(p, q).unwrap();
            prop_assert_eq!(d(&x, &y), d(&y, &x));
            prop_assert_eq!(d(&x, &y) == 0, x == y);
            prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z));
        }
    }
}
