//! Circuits as ordered two-qubit interaction lists, their decomposition into
//! timeslices, and the benchmark circuit generators.
//!
//! Only two-qubit gates influence placement, so a [`Circuit`] stores nothing
//! else. Single-qubit lines in gate-list files are accepted and dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type QubitId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CircuitError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing `qubits <Q>` header")]
    MissingHeader,
    #[error("qubit {qubit} out of range (circuit has {num_qubits} qubits)")]
    QubitOutOfRange { qubit: QubitId, num_qubits: usize },
    #[error("gate acts twice on qubit {0}")]
    SelfInteraction(QubitId),
    #[error("invalid generator parameters: {0}")]
    InvalidGenerator(String),
}

/// A two-qubit interaction. Operand order is kept as written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Gate {
    pub a: QubitId,
    pub b: QubitId,
}

impl Gate {
    pub fn new(a: QubitId, b: QubitId) -> Self {
        Gate { a, b }
    }

    /// Operands as an ordered `(low, high)` pair.
    pub fn key(&self) -> (QubitId, QubitId) {
        if self.a <= self.b {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }

    pub fn touches(&self, q: QubitId) -> bool {
        self.a == q || self.b == q
    }
}

impl From<(QubitId, QubitId)> for Gate {
    fn from((a, b): (QubitId, QubitId)) -> Self {
        Gate { a, b }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub num_qubits: usize,
    pub gates: Vec<Gate>,
    pub name: String,
}

impl Circuit {
    /// Builds a circuit, checking every operand against `num_qubits`.
    pub fn new(
        num_qubits: usize,
        gates: Vec<Gate>,
        name: impl Into<String>,
    ) -> Result<Self, CircuitError> {
        for g in &gates {
            for q in [g.a, g.b] {
                if q >= num_qubits {
                    return Err(CircuitError::QubitOutOfRange {
                        qubit: q,
                        num_qubits,
                    });
                }
            }
            if g.a == g.b {
                return Err(CircuitError::SelfInteraction(g.a));
            }
        }
        Ok(Circuit {
            num_qubits,
            gates,
            name: name.into(),
        })
    }

    pub fn timeslices(&self) -> Vec<Timeslice> {
        timeslice(self)
    }

    /// Renders the circuit in the gate-list text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.name.is_empty() {
            let _ = writeln!(out, "# {}", self.name);
        }
        let _ = writeln!(out, "qubits {}", self.num_qubits);
        for g in &self.gates {
            let _ = writeln!(out, "cx {} {}", g.a, g.b);
        }
        out
    }
}

/// A layer of gates with pairwise-disjoint operands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeslice {
    pub index: usize,
    pub pairs: Vec<Gate>,
}

impl Timeslice {
    pub fn new(index: usize, pairs: Vec<Gate>) -> Self {
        Timeslice { index, pairs }
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `partner[q]` is the qubit `q` interacts with in this slice, if any.
    pub fn partners(&self, num_qubits: usize) -> Vec<Option<QubitId>> {
        let mut partner = vec![None; num_qubits];
        for g in &self.pairs {
            partner[g.a] = Some(g.b);
            partner[g.b] = Some(g.a);
        }
        partner
    }

    /// True when no qubit occurs in two pairs.
    pub fn is_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.pairs
            .iter()
            .all(|g| seen.insert(g.a) && seen.insert(g.b))
    }
}

/// ASAP layering: every gate lands one slice after the latest earlier gate
/// sharing one of its qubits.
pub fn timeslice(circuit: &Circuit) -> Vec<Timeslice> {
    let mut next_free = vec![0usize; circuit.num_qubits];
    let mut slices: Vec<Timeslice> = Vec::new();
    for &g in &circuit.gates {
        let layer = next_free[g.a].max(next_free[g.b]);
        if layer == slices.len() {
            slices.push(Timeslice::new(layer, Vec::new()));
        }
        slices[layer].pairs.push(g);
        next_free[g.a] = layer + 1;
        next_free[g.b] = layer + 1;
    }
    slices
}

/// Parses the line-based gate-list format:
///
/// ```text
/// # comment
/// qubits 4
/// h 0
/// cx 0 1
/// ```
pub fn parse_circuit(text: &str) -> Result<Circuit, CircuitError> {
    parse_circuit_named(text, "")
}

pub fn parse_circuit_named(text: &str, name: &str) -> Result<Circuit, CircuitError> {
    let mut num_qubits: Option<usize> = None;
    let mut gates = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |message: String| CircuitError::Parse {
            line: line_no,
            message,
        };
        let mut tokens = line.split_whitespace();
        let mnemonic = tokens.next().unwrap_or_default();
        let operands: Vec<&str> = tokens.collect();

        let Some(declared) = num_qubits else {
            if mnemonic != "qubits" {
                return Err(CircuitError::MissingHeader);
            }
            let [count] = operands.as_slice() else {
                return Err(perr("expected `qubits <Q>`".into()));
            };
            let count = count
                .parse::<usize>()
                .map_err(|_| perr(format!("invalid qubit count `{count}`")))?;
            num_qubits = Some(count);
            continue;
        };
        if mnemonic == "qubits" {
            return Err(perr("duplicate `qubits` header".into()));
        }

        let qubits = operands
            .iter()
            .map(|tok| {
                let q = tok
                    .parse::<usize>()
                    .map_err(|_| perr(format!("invalid qubit index `{tok}`")))?;
                if q >= declared {
                    return Err(perr(format!(
                        "qubit {q} out of range (circuit has {declared} qubits)"
                    )));
                }
                Ok(q)
            })
            .collect::<Result<Vec<_>, _>>()?;
        match qubits.as_slice() {
            [] => return Err(perr(format!("gate `{mnemonic}` has no operands"))),
            [_] => {}
            [a, b] => {
                if a == b {
                    return Err(perr(format!("gate `{mnemonic}` acts twice on qubit {a}")));
                }
                gates.push(Gate::new(*a, *b));
            }
            _ => return Err(perr(format!(
                "gate `{mnemonic}` acts on {} qubits; only one- and two-qubit gates are supported",
                qubits.len()
            ))),
        }
    }
    let num_qubits = num_qubits.ok_or(CircuitError::MissingHeader)?;
    Ok(Circuit {
        num_qubits,
        gates,
        name: name.to_string(),
    })
}

/// Layered random matchings.
///
/// Each of the `num_slices` layers holds `⌊density·Q/2⌋` disjoint pairs. Every
/// pair after the first layer contains a qubit that was active in the layer
/// before, so ASAP timeslicing recovers exactly these layers.
pub fn gen_random(
    num_qubits: usize,
    num_slices: usize,
    density: f64,
    seed: u64,
) -> Result<Circuit, CircuitError> {
    if num_qubits < 2 {
        return Err(CircuitError::InvalidGenerator(
            "random circuits need at least 2 qubits".into(),
        ));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(CircuitError::InvalidGenerator(format!(
            "density {density} outside (0, 1]"
        )));
    }
    let pairs_per_slice = (density * num_qubits as f64 / 2.0).floor() as usize;
    if pairs_per_slice == 0 {
        return Err(CircuitError::InvalidGenerator(format!(
            "density {density} gives 0 pairs per slice on {num_qubits} qubits"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gates = Vec::with_capacity(num_slices * pairs_per_slice);
    let mut active: Vec<QubitId> = Vec::new();
    for layer in 0..num_slices {
        let mut pairs = Vec::with_capacity(pairs_per_slice);
        if layer == 0 {
            let mut order: Vec<QubitId> = (0..num_qubits).collect();
            order.shuffle(&mut rng);
            for chunk in order.chunks_exact(2).take(pairs_per_slice) {
                pairs.push(Gate::new(chunk[0], chunk[1]));
            }
        } else {
            let mut anchors = active.clone();
            anchors.shuffle(&mut rng);
            anchors.truncate(pairs_per_slice);
            let mut rest: Vec<QubitId> = (0..num_qubits).filter(|q| !anchors.contains(q)).collect();
            rest.shuffle(&mut rng);
            for (&anchor, &other) in anchors.iter().zip(&rest) {
                if rng.gen::<bool>() {
                    pairs.push(Gate::new(anchor, other));
                } else {
                    pairs.push(Gate::new(other, anchor));
                }
            }
        }
        active = pairs.iter().flat_map(|g| [g.a, g.b]).collect();
        gates.extend(pairs);
    }
    Circuit::new(
        num_qubits,
        gates,
        format!("random-q{num_qubits}-s{num_slices}-d{density}-seed{seed}"),
    )
}

/// QAOA-style circuit: one ZZ interaction per edge of a random
/// `degree`-regular graph, repeated for every layer.
pub fn gen_qaoa(
    num_qubits: usize,
    layers: usize,
    degree: usize,
    seed: u64,
) -> Result<Circuit, CircuitError> {
    let edges = random_regular_graph(num_qubits, degree, seed)?;
    let mut gates = Vec::with_capacity(edges.len() * layers);
    for _ in 0..layers {
        gates.extend(edges.iter().map(|&(a, b)| Gate::new(a, b)));
    }
    Circuit::new(
        num_qubits,
        gates,
        format!("qaoa-q{num_qubits}-p{layers}-d{degree}-seed{seed}"),
    )
}

/// Pairing-model generator with incremental suitability checks, retried on
/// dead ends. Returns the edge list sorted.
fn random_regular_graph(
    n: usize,
    degree: usize,
    seed: u64,
) -> Result<Vec<(QubitId, QubitId)>, CircuitError> {
    if degree == 0 || degree >= n || !(n * degree).is_multiple_of(2) {
        return Err(CircuitError::InvalidGenerator(format!(
            "no {degree}-regular graph on {n} vertices"
        )));
    }
    const ATTEMPTS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'attempt: for _ in 0..ATTEMPTS {
        let mut edges: BTreeSet<(QubitId, QubitId)> = BTreeSet::new();
        let mut stubs: Vec<QubitId> = (0..n)
            .flat_map(|v| std::iter::repeat_n(v, degree))
            .collect();
        while !stubs.is_empty() {
            let mut leftover: BTreeMap<QubitId, usize> = BTreeMap::new();
            stubs.shuffle(&mut rng);
            for pair in stubs.chunks_exact(2) {
                let (s1, s2) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
                if s1 != s2 && !edges.contains(&(s1, s2)) {
                    edges.insert((s1, s2));
                } else {
                    *leftover.entry(s1).or_default() += 1;
                    *leftover.entry(s2).or_default() += 1;
                }
            }
            if !leftover.is_empty() {
                let nodes: Vec<QubitId> = leftover.keys().copied().collect();
                let suitable = nodes
                    .iter()
                    .enumerate()
                    .any(|(i, &u)| nodes[i + 1..].iter().any(|&v| !edges.contains(&(u, v))));
                if !suitable {
                    continue 'attempt;
                }
            }
            stubs = leftover
                .into_iter()
                .flat_map(|(v, count)| std::iter::repeat_n(v, count))
                .collect();
        }
        return Ok(edges.into_iter().collect());
    }
    Err(CircuitError::InvalidGenerator(format!(
        "failed to sample a {degree}-regular graph on {n} vertices"
    )))
}

/// Cuccaro ripple-carry adder on `2·num_bits + 2` qubits, reduced to its
/// two-qubit interactions. Each Toffoli is expanded into the usual 6-CNOT
/// network.
///
/// Qubit layout: carry-in `0`, then `b_i = 1 + 2i`, `a_i = 2 + 2i`, and the
/// carry-out at `2·num_bits + 1`.
pub fn gen_cuccaro(num_bits: usize) -> Result<Circuit, CircuitError> {
    if num_bits == 0 {
        return Err(CircuitError::InvalidGenerator(
            "Cuccaro adder needs at least one bit".into(),
        ));
    }
    let b = |i: usize| 1 + 2 * i;
    let a = |i: usize| 2 + 2 * i;
    let z = 2 * num_bits + 1;
    let mut gates = Vec::new();
    let cx = |gates: &mut Vec<Gate>, c: QubitId, t: QubitId| gates.push(Gate::new(c, t));
    let ccx = |gates: &mut Vec<Gate>, c1: QubitId, c2: QubitId, t: QubitId| {
        for (c, tt) in [(c2, t), (c1, t), (c2, t), (c1, t), (c1, c2), (c1, c2)] {
            gates.push(Gate::new(c, tt));
        }
    };
    let maj = |gates: &mut Vec<Gate>, c: QubitId, bb: QubitId, aa: QubitId| {
        cx(gates, aa, bb);
        cx(gates, aa, c);
        ccx(gates, c, bb, aa);
    };
    let uma = |gates: &mut Vec<Gate>, c: QubitId, bb: QubitId, aa: QubitId| {
        ccx(gates, c, bb, aa);
        cx(gates, aa, c);
        cx(gates, c, bb);
    };

    let carry = |i: usize| if i == 0 { 0 } else { a(i - 1) };
    for i in 0..num_bits {
        maj(&mut gates, carry(i), b(i), a(i));
    }
    cx(&mut gates, a(num_bits - 1), z);
    for i in (0..num_bits).rev() {
        uma(&mut gates, carry(i), b(i), a(i));
    }
    Circuit::new(2 * num_bits + 2, gates, format!("cuccaro-{num_bits}"))
}

/// Declarative description of a generated circuit, shared by the CLI,
/// bench specs and environment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GenSpec {
    Random {
        qubits: usize,
        slices: usize,
        density: f64,
        #[serde(default)]
        seed: u64,
    },
    Qaoa {
        qubits: usize,
        layers: usize,
        degree: usize,
        #[serde(default)]
        seed: u64,
    },
    Cuccaro {
        bits: usize,
    },
}

impl GenSpec {
    pub fn generate(&self) -> Result<Circuit, CircuitError> {
        match *self {
            GenSpec::Random {
                qubits,
                slices,
                density,
                seed,
            } => gen_random(qubits, slices, density, seed),
            GenSpec::Qaoa {
                qubits,
                layers,
                degree,
                seed,
            } => gen_qaoa(qubits, layers, degree, seed),
            GenSpec::Cuccaro { bits } => gen_cuccaro(bits),
        }
    }

    pub fn num_qubits(&self) -> usize {
        match *self {
            GenSpec::Random { qubits, .. } | GenSpec::Qaoa { qubits, .. } => qubits,
            GenSpec::Cuccaro { bits } => 2 * bits + 2,
        }
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenSpec::Random {
                qubits,
                slices,
                density,
                seed,
            } => write!(f, "random:{qubits}:{slices}:{density}:{seed}"),
            GenSpec::Qaoa {
                qubits,
                layers,
                degree,
                seed,
            } => write!(f, "qaoa:{qubits}:{layers}:{degree}:{seed}"),
            GenSpec::Cuccaro { bits } => write!(f, "cuccaro:{bits}"),
        }
    }
}

/// Parses `random:Q:SLICES:DENSITY[:SEED]`, `qaoa:Q:LAYERS:DEGREE[:SEED]` or
/// `cuccaro:BITS`.
impl FromStr for GenSpec {
    type Err = CircuitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: &str| CircuitError::InvalidGenerator(format!("`{s}`: {msg}"));
        let parts: Vec<&str> = s.split(':').collect();
        let int = |i: usize| -> Result<usize, CircuitError> {
            parts
                .get(i)
                .ok_or_else(|| bad("missing field"))?
                .parse()
                .map_err(|_| bad("expected an integer"))
        };
        let seed = |i: usize| -> Result<u64, CircuitError> {
            parts
                .get(i)
                .map_or(Ok(0), |v| v.parse().map_err(|_| bad("invalid seed")))
        };
        match parts[0] {
            "random" if (4..=5).contains(&parts.len()) => Ok(GenSpec::Random {
                qubits: int(1)?,
                slices: int(2)?,
                density: parts[3].parse().map_err(|_| bad("invalid density"))?,
                seed: seed(4)?,
            }),
            "qaoa" if (4..=5).contains(&parts.len()) => Ok(GenSpec::Qaoa {
                qubits: int(1)?,
                layers: int(2)?,
                degree: int(3)?,
                seed: seed(4)?,
            }),
            "cuccaro" if parts.len() == 2 => Ok(GenSpec::Cuccaro { bits: int(1)? }),
            _ => Err(bad(
                "expected random:Q:SLICES:DENSITY[:SEED], qaoa:Q:LAYERS:DEGREE[:SEED] or cuccaro:BITS",
            )),
        }
    }
}
