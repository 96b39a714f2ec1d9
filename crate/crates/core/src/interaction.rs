//! Per-timeslice interaction graphs with two-tier edge weights.
//!
//! An edge weight has a *current* tier, the number of gates between the two
//! qubits in the slice being placed, and a *future* tier, the decayed sum of
//! their interactions in the following slices. Tiers compare
//! lexicographically, so any current-slice edge outweighs every amount of
//! lookahead weight. That makes "the assignment is valid for this slice" the
//! same statement as "the current tier of the cut is zero".

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use thiserror::Error;

use crate::circuit::{QubitId, Timeslice};
use crate::partition::Assignment;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InteractionError {
    #[error("slice {t} out of range ({len} slices)")]
    SliceOutOfRange { t: usize, len: usize },
    #[error("decay {0} outside (0, 1)")]
    InvalidDecay(String),
    #[error("assignment covers {got} qubits, graph has {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TieredWeight<F> {
    pub current: u32,
    pub future: F,
}

impl<F: Scalar> TieredWeight<F> {
    pub fn new(current: u32, future: F) -> Self {
        TieredWeight { current, future }
    }

    pub fn zero() -> Self {
        TieredWeight {
            current: 0,
            future: F::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.current == 0 && self.future == F::zero()
    }

    /// Total order; lookahead values are never NaN.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.current.cmp(&other.current).then_with(|| {
            self.future
                .partial_cmp(&other.future)
                .unwrap_or(Ordering::Equal)
        })
    }
}

impl<F: Scalar> PartialOrd for TieredWeight<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.current.cmp(&other.current) {
            Ordering::Equal => self.future.partial_cmp(&other.future),
            ord => Some(ord),
        }
    }
}

impl<F: Scalar> Add for TieredWeight<F> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        TieredWeight {
            current: self.current + rhs.current,
            future: self.future + rhs.future,
        }
    }
}

impl<F: Scalar> AddAssign for TieredWeight<F> {
    fn add_assign(&mut self, rhs: Self) {
        self.current += rhs.current;
        self.future = self.future + rhs.future;
    }
}

/// Signed change of a tiered cut, positive when the cut shrinks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gain<F> {
    pub current: i64,
    pub future: F,
}

impl<F: Scalar> Gain<F> {
    pub fn zero() -> Self {
        Gain {
            current: 0,
            future: F::zero(),
        }
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.current.cmp(&other.current).then_with(|| {
            self.future
                .partial_cmp(&other.future)
                .unwrap_or(Ordering::Equal)
        })
    }

    pub fn is_positive(&self) -> bool {
        self.total_cmp(&Self::zero()) == Ordering::Greater
    }

    fn credit(&mut self, w: &TieredWeight<F>) {
        self.current += i64::from(w.current);
        self.future = self.future + w.future;
    }

    fn debit(&mut self, w: &TieredWeight<F>) {
        self.current -= i64::from(w.current);
        self.future = self.future - w.future;
    }
}

impl<F: Scalar> Add for Gain<F> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Gain {
            current: self.current + rhs.current,
            future: self.future + rhs.future,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph<F> {
    pub num_qubits: usize,
    pub slice_index: usize,
    pub edges: BTreeMap<(QubitId, QubitId), TieredWeight<F>>,
    adjacency: Vec<Vec<(QubitId, TieredWeight<F>)>>,
}

impl<F: Scalar> InteractionGraph<F> {
    /// Builds a graph from `(low, high)`-keyed edges. Self-loops are dropped.
    pub fn from_edges(
        num_qubits: usize,
        slice_index: usize,
        edges: BTreeMap<(QubitId, QubitId), TieredWeight<F>>,
    ) -> Self {
        let edges: BTreeMap<_, _> = edges
            .into_iter()
            .filter(|((a, b), _)| a != b)
            .map(|((a, b), w)| ((a.min(b), a.max(b)), w))
            .collect();
        let mut adjacency = vec![Vec::new(); num_qubits];
        for (&(a, b), &w) in &edges {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        InteractionGraph {
            num_qubits,
            slice_index,
            edges,
            adjacency,
        }
    }

    pub fn weight(&self, a: QubitId, b: QubitId) -> TieredWeight<F> {
        self.edges
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or_else(TieredWeight::zero)
    }

    pub fn neighbors(&self, q: QubitId) -> &[(QubitId, TieredWeight<F>)] {
        &self.adjacency[q]
    }

    /// Change of the cut if `a` and `b` trade cores, positive when the cut
    /// shrinks. Zero for qubits already sharing a core.
    pub fn exchange_gain(&self, assignment: &Assignment, a: QubitId, b: QubitId) -> Gain<F> {
        let (ca, cb) = (assignment.core(a), assignment.core(b));
        let mut gain = Gain::zero();
        if ca == cb {
            return gain;
        }
        for (q, from, to) in [(a, ca, cb), (b, cb, ca)] {
            for (x, w) in self.neighbors(q) {
                if *x == a || *x == b {
                    continue;
                }
                let cx = assignment.core(*x);
                if cx == to {
                    gain.credit(w);
                } else if cx == from {
                    gain.debit(w);
                }
            }
        }
        gain
    }

    /// Flattened upper triangle `(0,1), (0,2), …, (Q-2,Q-1)` of the weight
    /// matrix, with each current-slice interaction contributing `current_cap`.
    pub fn upper_triangle(&self, current_cap: F) -> Vec<F> {
        let n = self.num_qubits;
        let mut out = vec![F::zero(); n * n.saturating_sub(1) / 2];
        for (&(a, b), w) in &self.edges {
            out[pair_offset(n, a, b)] = w.future + current_cap * F::of(f64::from(w.current));
        }
        out
    }
}

/// Row-major position of `(a, b)`, `a < b`, in the strict upper triangle.
pub(crate) fn pair_offset(n: usize, a: usize, b: usize) -> usize {
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

/// Interaction graph for slice `t`: every pair in slice `t` adds 1 to the
/// current tier, every pair `d` slices ahead (up to `horizon`) adds
/// `decay^d` to the future tier. `None` looks through the end of the circuit.
pub fn lookahead_graph<F: Scalar>(
    slices: &[Timeslice],
    num_qubits: usize,
    t: usize,
    decay: F,
    horizon: Option<usize>,
) -> Result<InteractionGraph<F>, InteractionError> {
    if t >= slices.len() {
        return Err(InteractionError::SliceOutOfRange {
            t,
            len: slices.len(),
        });
    }
    if !(decay > F::zero() && decay < F::one()) {
        return Err(InteractionError::InvalidDecay(decay.to_string()));
    }
    let mut edges: BTreeMap<(QubitId, QubitId), TieredWeight<F>> = BTreeMap::new();
    for g in &slices[t].pairs {
        edges
            .entry(g.key())
            .or_insert_with(TieredWeight::zero)
            .current += 1;
    }
    let last = horizon.map_or(slices.len() - 1, |h| {
        (t.saturating_add(h)).min(slices.len() - 1)
    });
    let mut factor = F::one();
    for slice in &slices[t + 1..=last] {
        factor = factor * decay;
        for g in &slice.pairs {
            let w = edges.entry(g.key()).or_insert_with(TieredWeight::zero);
            w.future = w.future + factor;
        }
    }
    Ok(InteractionGraph::from_edges(num_qubits, t, edges))
}

/// Summed weight of the edges whose endpoints sit in different cores.
pub fn cut_weight<F: Scalar>(
    graph: &InteractionGraph<F>,
    assignment: &Assignment,
) -> Result<TieredWeight<F>, InteractionError> {
    if assignment.len() != graph.num_qubits {
        return Err(InteractionError::SizeMismatch {
            expected: graph.num_qubits,
            got: assignment.len(),
        });
    }
    let mut cut = TieredWeight::zero();
    for (&(a, b), &w) in &graph.edges {
        if assignment.core(a) != assignment.core(b) {
            cut += w;
        }
    }
    Ok(cut)
}

/// True iff every pair of the slice shares a core.
pub fn is_valid(slice: &Timeslice, assignment: &Assignment) -> bool {
    slice
        .pairs
        .iter()
        .all(|g| assignment.core(g.a) == assignment.core(g.b))
}
