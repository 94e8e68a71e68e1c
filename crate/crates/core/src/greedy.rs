//! Greedily revealed north-east path and its unrolled walk on the integers.
//!
//! The path starts as the origin alone. When the walk sits at the north-east
//! leaf and reads `x` or `y`, the path grows by that edge and the walk takes
//! it; symmetrically at the south-west leaf with `-x` or `-y`. Everywhere
//! else ordinary induced-walk semantics apply on the path revealed so far.
//! Unrolled, the walk moves outward with probability 2/3 at the ends of its
//! range and like a simple random walk inside it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{neighbor, Edge, Site};
use crate::stream::{BitSource, CounterRng, LetterStream, StreamSeed};
use crate::walk::{WalkState, WalkTranscript};

/// North-east path through the origin, stored as two arms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GreedyPath {
    ne: Vec<Site>,
    sw: Vec<Site>,
}

impl GreedyPath {
    /// Site at signed offset `o` from the origin along the path.
    pub fn site_at(&self, o: i64) -> Option<Site> {
        match o {
            0 => Some(Site::xy(0, 0)),
            o if o > 0 => self.ne.get(o as usize - 1).copied(),
            o => self.sw.get((-o) as usize - 1).copied(),
        }
    }

    pub fn ne_leaf(&self) -> Site {
        self.ne.last().copied().unwrap_or(Site::xy(0, 0))
    }

    pub fn sw_leaf(&self) -> Site {
        self.sw.last().copied().unwrap_or(Site::xy(0, 0))
    }

    /// Offsets of the two leaves, `(a, b)` with `a <= 0 <= b`.
    pub fn range(&self) -> (i64, i64) {
        (-(self.sw.len() as i64), self.ne.len() as i64)
    }

    /// Index of the origin in [`Self::sites`].
    pub fn origin_index(&self) -> usize {
        self.sw.len()
    }

    /// Sites from the south-west leaf to the north-east leaf.
    pub fn sites(&self) -> Vec<Site> {
        let mut v: Vec<Site> = self.sw.iter().rev().copied().collect();
        v.push(Site::xy(0, 0));
        v.extend_from_slice(&self.ne);
        v
    }

    /// Edges in order from the south-west leaf to the north-east leaf.
    pub fn edges(&self) -> Vec<Edge> {
        self.sites()
            .windows(2)
            .map(|w| Edge { low: w[0], axis: if w[1].x() != w[0].x() { 0 } else { 1 } })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.ne.len() + self.sw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every step increases exactly one coordinate by one.
    pub fn is_north_east(&self) -> bool {
        self.sites().windows(2).all(|w| {
            let dx = w[1].x() - w[0].x();
            let dy = w[1].y() - w[0].y();
            (dx, dy) == (1, 0) || (dx, dy) == (0, 1)
        })
    }
}

/// Walk on the greedily grown path; tracks its offset along the path.
#[derive(Clone, Debug)]
pub struct GreedyWalk {
    pub path: GreedyPath,
    pub state: WalkState,
    offset: i64,
    stream: LetterStream,
    transcript: WalkTranscript,
}

impl GreedyWalk {
    pub fn new(seed: StreamSeed) -> Self {
        let origin = Site::xy(0, 0);
        GreedyWalk {
            path: GreedyPath::default(),
            state: WalkState::at(origin),
            offset: 0,
            stream: LetterStream::new(seed, 2),
            transcript: WalkTranscript::new(origin, seed),
        }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn step(&mut self) -> Result<bool> {
        let letter = self.stream.next_letter();
        let pos = self.state.pos;
        let target = neighbor(&pos, letter)?;
        let (a, b) = self.path.range();
        let accepted = if self.offset == b && letter.is_positive() {
            self.path.ne.push(target);
            self.offset += 1;
            true
        } else if self.offset == a && !letter.is_positive() {
            self.path.sw.push(target);
            self.offset -= 1;
            true
        } else if self.path.site_at(self.offset + 1) == Some(target) {
            self.offset += 1;
            true
        } else if self.path.site_at(self.offset - 1) == Some(target) {
            self.offset -= 1;
            true
        } else {
            false
        };
        if accepted {
            self.state.pos = target;
            self.state.accepted_steps += 1;
        }
        self.state.letters_consumed += 1;
        self.transcript.push(letter, accepted);
        Ok(accepted)
    }

    pub fn into_parts(self) -> (GreedyPath, WalkTranscript) {
        (self.path, self.transcript)
    }
}

/// Run the greedy construction for `horizon_letters` letters.
pub fn run_greedy_path(seed: StreamSeed, horizon_letters: u64) -> Result<(GreedyPath, WalkTranscript)> {
    let mut w = GreedyWalk::new(seed);
    for _ in 0..horizon_letters {
        w.step()?;
    }
    Ok(w.into_parts())
}

/// Run until `accepted` steps have been taken.
pub fn run_greedy_path_accepted(seed: StreamSeed, accepted: u64) -> Result<(GreedyPath, WalkTranscript)> {
    let mut w = GreedyWalk::new(seed);
    while w.state.accepted_steps < accepted {
        w.step()?;
    }
    Ok(w.into_parts())
}

/// Walk on the integers: signed offsets, one entry per time step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UnrolledTranscript {
    pub positions: Vec<i64>,
    pub range: (i64, i64),
}

impl UnrolledTranscript {
    fn start() -> Self {
        UnrolledTranscript { positions: vec![0], range: (0, 0) }
    }

    fn push(&mut self, p: i64) {
        self.positions.push(p);
        self.range.0 = self.range.0.min(p);
        self.range.1 = self.range.1.max(p);
    }

    /// Positions after each move (standing still is dropped).
    pub fn accepted_positions(&self) -> Vec<i64> {
        let mut out = vec![self.positions[0]];
        for w in self.positions.windows(2) {
            if w[1] != w[0] {
                out.push(w[1]);
            }
        }
        out
    }

    /// Number of moves that land on offset 0.
    pub fn returns_to_origin(&self) -> u64 {
        self.positions.windows(2).filter(|w| w[1] == 0 && w[0] != 0).count() as u64
    }
}

/// Map a transcript made on `path` to offsets along it.
pub fn unroll(path: &GreedyPath, tr: &WalkTranscript) -> Result<UnrolledTranscript> {
    let mut u = UnrolledTranscript::start();
    let mut o = 0i64;
    for (i, e) in tr.entries().enumerate() {
        if e.accepted {
            if path.site_at(o + 1) == Some(e.pos_after) {
                o += 1;
            } else if path.site_at(o - 1) == Some(e.pos_after) {
                o -= 1;
            } else {
                return Err(Error::PathInconsistency { step: i + 1 });
            }
        }
        u.push(o);
    }
    Ok(u)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryStats {
    pub boundary_visits: u64,
    pub outward_moves: u64,
    pub inward_moves: u64,
    pub interior_left: u64,
    pub interior_right: u64,
}

impl BoundaryStats {
    pub fn merge(&mut self, o: &BoundaryStats) {
        self.boundary_visits += o.boundary_visits;
        self.outward_moves += o.outward_moves;
        self.inward_moves += o.inward_moves;
        self.interior_left += o.interior_left;
        self.interior_right += o.interior_right;
    }
}

/// Classify accepted moves by whether they start at an end of the range
/// attained so far. Moves from a one-point range are skipped: both ends
/// coincide there and "outward" is undefined.
pub fn boundary_law_stats(u: &UnrolledTranscript) -> BoundaryStats {
    let mut s = BoundaryStats::default();
    let Some(&first) = u.positions.first() else {
        return s;
    };
    let (mut a, mut b) = (first, first);
    for w in u.positions.windows(2) {
        let (p, q) = (w[0], w[1]);
        if p == q {
            continue;
        }
        if a != b && (p == b || p == a) {
            s.boundary_visits += 1;
            let outward = if p == b { q > p } else { q < p };
            if outward {
                s.outward_moves += 1;
            } else {
                s.inward_moves += 1;
            }
        } else if a != b && q > p {
            s.interior_right += 1;
        } else if a != b {
            s.interior_left += 1;
        }
        a = a.min(q);
        b = b.max(q);
    }
    s
}

/// Direct simulation of the integer law: outward with probability 2/3 at the
/// ends of the range, fair coin inside it and at time 0.
pub fn boundary_law_simulate(seed: StreamSeed, horizon_steps: u64) -> UnrolledTranscript {
    let mut rng = CounterRng::new(seed);
    let mut bits = BitSource::new(seed.family(0x006c_6177, 0));
    let mut u = UnrolledTranscript::start();
    u.positions.reserve(horizon_steps as usize);
    let (mut a, mut b, mut p) = (0i64, 0i64, 0i64);
    for _ in 0..horizon_steps {
        let q = if a == b || (p != a && p != b) {
            if bits.next_bit() { p + 1 } else { p - 1 }
        } else {
            let out = rng.below(3) < 2;
            let dir = if p == b { 1 } else { -1 };
            if out { p + dir } else { p - dir }
        };
        p = q;
        a = a.min(p);
        b = b.max(p);
        u.push(p);
    }
    u
}

/// Per-run summary for the greedy CLI report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedySummary {
    pub seed: StreamSeed,
    pub letters: u64,
    pub stats: BoundaryStats,
    pub returns_to_origin: u64,
    /// Letters read at the NE leaf and how many of them extended the path.
    pub ne_leaf_letters: u64,
    pub ne_leaf_extensions: u64,
}

pub fn greedy_summary(seed: StreamSeed, letters: u64) -> Result<GreedySummary> {
    let mut w = GreedyWalk::new(seed);
    let (mut leaf_letters, mut leaf_ext) = (0u64, 0u64);
    for _ in 0..letters {
        let at_ne = w.offset == w.path.range().1 && w.offset != 0;
        let before = w.path.ne.len();
        w.step()?;
        if at_ne {
            leaf_letters += 1;
            leaf_ext += u64::from(w.path.ne.len() > before);
        }
    }
    let (path, tr) = w.into_parts();
    let u = unroll(&path, &tr)?;
    Ok(GreedySummary {
        seed,
        letters,
        stats: boundary_law_stats(&u),
        returns_to_origin: u.returns_to_origin(),
        ne_leaf_letters: leaf_letters,
        ne_leaf_extensions: leaf_ext,
    })
}
