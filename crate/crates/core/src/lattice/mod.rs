//! Lattice geometry: sites, unit directions, canonical edges and
//! tri-state subgraph oracles over spanning subgraphs of the integer lattice.

mod finite;
pub mod snapshot;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

pub use finite::{BoundingBox, FiniteSubgraph};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 6;

/// Coordinates must stay strictly below this in magnitude.
pub const COORD_BOUND: i64 = 1 << 62;

/// A point of the integer lattice in dimension `dim`.
///
/// Unused trailing coordinates are kept at zero so derived equality and
/// ordering are lexicographic over the live coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    dim: u8,
    coords: [i64; MAX_DIM],
}

impl Site {
    pub fn origin(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Site { dim: dim as u8, coords: [0; MAX_DIM] })
    }

    pub fn new(coords: &[i64]) -> Result<Self> {
        check_dim(coords.len())?;
        let mut c = [0; MAX_DIM];
        for (slot, &v) in c.iter_mut().zip(coords) {
            if v.unsigned_abs() >= COORD_BOUND as u64 {
                return Err(Error::CoordinateOverflow);
            }
            *slot = v;
        }
        Ok(Site { dim: coords.len() as u8, coords: c })
    }

    /// Two-dimensional shorthand; panics only on coordinates past the bound.
    pub fn xy(x: i64, y: i64) -> Self {
        Site::new(&[x, y]).expect("coordinate within bound")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i64] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> i64 {
        self.coords[axis]
    }

    #[inline]
    pub fn x(&self) -> i64 {
        self.coords[0]
    }

    #[inline]
    pub fn y(&self) -> i64 {
        self.coords[1]
    }

    /// Shift one coordinate by `delta`, failing past the magnitude bound.
    pub fn offset(&self, axis: usize, delta: i64) -> Result<Site> {
        let mut out = *self;
        let v = self.coords[axis].checked_add(delta).ok_or(Error::CoordinateOverflow)?;
        if v.unsigned_abs() >= COORD_BOUND as u64 {
            return Err(Error::CoordinateOverflow);
        }
        out.coords[axis] = v;
        Ok(out)
    }

    /// Graph distance in the full lattice.
    pub fn l1_norm(&self) -> u64 {
        self.coords().iter().map(|c| c.unsigned_abs()).sum()
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        Err(Error::UnsupportedDimension(dim))
    } else {
        Ok(())
    }
}

/// A unit step along one axis. In two dimensions the four values are the
/// letters `x`, `-x`, `y`, `-y`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Direction(u8);

impl Direction {
    pub const PLUS_X: Direction = Direction(0);
    pub const MINUS_X: Direction = Direction(1);
    pub const PLUS_Y: Direction = Direction(2);
    pub const MINUS_Y: Direction = Direction(3);

    pub fn new(axis: usize, positive: bool) -> Self {
        debug_assert!(axis < MAX_DIM);
        Direction((axis as u8) << 1 | u8::from(!positive))
    }

    /// Dense code in `0..2d`: `2 * axis + (sign < 0)`.
    #[inline]
    pub fn from_code(code: u8) -> Self {
        debug_assert!((code as usize) < 2 * MAX_DIM);
        Direction(code)
    }

    #[inline]
    pub fn code(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn axis(self) -> usize {
        (self.0 >> 1) as usize
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    #[inline]
    pub fn sign(self) -> i64 {
        if self.is_positive() {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn opposite(self) -> Self {
        Direction(self.0 ^ 1)
    }

    /// All `2d` directions in code order.
    pub fn all(dim: usize) -> impl Iterator<Item = Direction> {
        (0..2 * dim as u8).map(Direction)
    }

    pub fn name(self) -> String {
        const AXES: [&str; 3] = ["x", "y", "z"];
        let axis = match AXES.get(self.axis()) {
            Some(a) => (*a).to_string(),
            None => format!("e{}", self.axis()),
        };
        if self.is_positive() {
            axis
        } else {
            format!("-{axis}")
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let axis = match body {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            other => other
                .strip_prefix('e')
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&a| a < MAX_DIM)
                .ok_or_else(|| Error::Parse(format!("unknown letter {s:?}")))?,
        };
        Ok(Direction::new(axis, !neg))
    }
}

impl fmt::Debug for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Unit step from `s` along `dir`.
#[inline]
pub fn neighbor(s: &Site, dir: Direction) -> Result<Site> {
    if dir.axis() >= s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: dir.axis() + 1 });
    }
    s.offset(dir.axis(), dir.sign())
}

/// Undirected unit edge, keyed by its lexicographically smaller endpoint.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub low: Site,
    pub axis: u8,
}

impl Edge {
    pub fn high(&self) -> Result<Site> {
        self.low.offset(self.axis as usize, 1)
    }

    pub fn axis(&self) -> usize {
        self.axis as usize
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+e{}", self.low, self.axis)
    }
}

impl fmt::Debug for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// The canonical undirected edge between `s` and `neighbor(s, dir)`.
pub fn canonical_edge(s: &Site, dir: Direction) -> Result<Edge> {
    let other = neighbor(s, dir)?;
    let low = if dir.is_positive() { *s } else { other };
    Ok(Edge { low, axis: dir.axis() as u8 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeState {
    Present,
    Absent,
    Unrevealed,
}

/// Read-only view of an edge subset of the lattice.
pub trait EdgeOracle {
    fn dim(&self) -> usize;
    fn query(&self, edge: &Edge) -> EdgeState;
}

/// A fixed spanning subgraph: either the whole lattice or an explicit finite
/// edge set (everything outside its box is absent).
///
/// Adaptive environments do not live here; they implement
/// [`crate::walk::EdgeResolver`] directly because answering a query may
/// mutate them.
#[derive(Clone, Debug)]
pub enum SubgraphOracle {
    FullLattice { dim: usize },
    ExplicitFinite(FiniteSubgraph),
}

impl SubgraphOracle {
    pub fn full(dim: usize) -> Self {
        SubgraphOracle::FullLattice { dim }
    }

    pub fn as_finite(&self) -> Option<&FiniteSubgraph> {
        match self {
            SubgraphOracle::ExplicitFinite(g) => Some(g),
            SubgraphOracle::FullLattice { .. } => None,
        }
    }
}

impl EdgeOracle for SubgraphOracle {
    fn dim(&self) -> usize {
        match self {
            SubgraphOracle::FullLattice { dim } => *dim,
            SubgraphOracle::ExplicitFinite(g) => g.dim(),
        }
    }

    #[inline]
    fn query(&self, edge: &Edge) -> EdgeState {
        match self {
            SubgraphOracle::FullLattice { .. } => EdgeState::Present,
            SubgraphOracle::ExplicitFinite(g) => g.query(edge),
        }
    }
}

/// Breadth-first closure of `origin` under Present edges with both endpoints
/// in `bbox`. Neighbours are expanded in direction-code order.
pub fn reachable_sites<O: EdgeOracle + ?Sized>(
    oracle: &O,
    origin: &Site,
    bbox: &BoundingBox,
) -> Result<BTreeSet<Site>> {
    let dim = oracle.dim();
    if origin.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: origin.dim() });
    }
    if !bbox.contains(origin) {
        return Err(Error::Domain(format!("origin {origin} outside bounding box")));
    }
    let mut seen = BTreeSet::new();
    let mut frontier = VecDeque::new();
    seen.insert(*origin);
    frontier.push_back(*origin);
    while let Some(s) = frontier.pop_front() {
        for dir in Direction::all(dim) {
            let Ok(next) = neighbor(&s, dir) else { continue };
            if !bbox.contains(&next) || seen.contains(&next) {
                continue;
            }
            let edge = canonical_edge(&s, dir)?;
            match oracle.query(&edge) {
                EdgeState::Present => {
                    seen.insert(next);
                    frontier.push_back(next);
                }
                EdgeState::Absent => {}
                EdgeState::Unrevealed => return Err(Error::UnrevealedEdge(edge)),
            }
        }
    }
    Ok(seen)
}
