use super::{canonical_edge, neighbor, Direction, Edge, EdgeOracle, EdgeState, Site};
use crate::error::{Error, Result};

/// Axis-aligned inclusive box `lo..=hi`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub lo: Site,
    pub hi: Site,
}

impl BoundingBox {
    pub fn new(lo: Site, hi: Site) -> Result<Self> {
        if lo.dim() != hi.dim() {
            return Err(Error::DimensionMismatch { expected: lo.dim(), got: hi.dim() });
        }
        if lo.coords().iter().zip(hi.coords()).any(|(a, b)| a > b) {
            return Err(Error::Domain(format!("empty box {lo}..{hi}")));
        }
        Ok(BoundingBox { lo, hi })
    }

    /// The cube `[-k, k]^d`.
    pub fn cube(dim: usize, k: i64) -> Result<Self> {
        let lo = Site::new(&vec![-k; dim])?;
        let hi = Site::new(&vec![k; dim])?;
        BoundingBox::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    #[inline]
    pub fn contains(&self, s: &Site) -> bool {
        s.dim() == self.dim()
            && (0..self.dim()).all(|a| self.lo.coord(a) <= s.coord(a) && s.coord(a) <= self.hi.coord(a))
    }

    fn extent(&self, axis: usize) -> usize {
        (self.hi.coord(axis) - self.lo.coord(axis) + 1) as usize
    }

    pub fn num_sites(&self) -> usize {
        (0..self.dim()).map(|a| self.extent(a)).product()
    }

    /// Row-major index (first coordinate most significant), so index order is
    /// lexicographic order.
    #[inline]
    pub fn index_of(&self, s: &Site) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        let mut idx = 0usize;
        for a in 0..self.dim() {
            idx = idx * self.extent(a) + (s.coord(a) - self.lo.coord(a)) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let d = self.dim();
        let mut c = vec![0i64; d];
        for a in (0..d).rev() {
            let e = self.extent(a);
            c[a] = self.lo.coord(a) + (idx % e) as i64;
            idx /= e;
        }
        Site::new(&c).expect("box coordinates are in range")
    }

    /// All sites in lexicographic order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.num_sites()).map(move |i| self.site_at(i))
    }

    /// Edges with both endpoints inside the box, ordered by (low site, axis).
    pub fn interior_edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for s in self.sites() {
            for axis in 0..self.dim() {
                if s.coord(axis) < self.hi.coord(axis) {
                    out.push(Edge { low: s, axis: axis as u8 });
                }
            }
        }
        out
    }
}

/// Finite explicit subgraph: a Present/Absent flag per edge with both
/// endpoints inside `bbox`; every other edge is Absent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteSubgraph {
    bbox: BoundingBox,
    present: Vec<bool>,
}

impl FiniteSubgraph {
    pub fn empty(bbox: BoundingBox) -> Self {
        let n = bbox.num_sites() * bbox.dim();
        FiniteSubgraph { bbox, present: vec![false; n] }
    }

    /// Every interior edge of the box present.
    pub fn full_box(bbox: BoundingBox) -> Self {
        let mut g = FiniteSubgraph::empty(bbox);
        for e in g.bbox.interior_edges() {
            g.set(&e, true).expect("interior edge");
        }
        g
    }

    pub fn from_edges<'a>(bbox: BoundingBox, edges: impl IntoIterator<Item = &'a Edge>) -> Result<Self> {
        let mut g = FiniteSubgraph::empty(bbox);
        for e in edges {
            g.set(e, true)?;
        }
        Ok(g)
    }

    /// Subgraph of `bbox` whose interior edges (in [`BoundingBox::interior_edges`]
    /// order) are present exactly where `mask` has a one bit.
    pub fn from_mask(bbox: BoundingBox, mask: u64) -> Self {
        let mut g = FiniteSubgraph::empty(bbox);
        for (i, e) in g.bbox.interior_edges().into_iter().enumerate() {
            if i < 64 && mask >> i & 1 == 1 {
                g.set(&e, true).expect("interior edge");
            }
        }
        g
    }

    /// Path on `n` sites `0..n` in dimension one.
    pub fn path(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("path needs at least one site".into()));
        }
        let bbox = BoundingBox::new(Site::new(&[0])?, Site::new(&[n as i64 - 1])?)?;
        Ok(FiniteSubgraph::full_box(bbox))
    }

    /// Full `k x k` grid with lower-left corner at the origin.
    pub fn grid(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("grid needs at least one site".into()));
        }
        let m = k as i64 - 1;
        let bbox = BoundingBox::new(Site::xy(0, 0), Site::xy(m, m))?;
        Ok(FiniteSubgraph::full_box(bbox))
    }

    /// Comb on `[-half_width, half_width] x [-tooth, tooth]`: the spine `y = 0`
    /// plus a full vertical tooth through every spine site.
    pub fn comb(half_width: i64, tooth: i64) -> Result<Self> {
        let bbox = BoundingBox::new(Site::xy(-half_width, -tooth), Site::xy(half_width, tooth))?;
        let mut g = FiniteSubgraph::empty(bbox);
        for e in g.bbox.interior_edges() {
            let keep = e.axis == 1 || e.low.y() == 0;
            if keep {
                g.set(&e, true)?;
            }
        }
        Ok(g)
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    #[inline]
    fn slot(&self, edge: &Edge) -> Option<usize> {
        let axis = edge.axis();
        if axis >= self.dim() || edge.low.coord(axis) >= self.bbox.hi.coord(axis) {
            return None;
        }
        self.bbox.index_of(&edge.low).map(|i| i * self.dim() + axis)
    }

    /// Set an interior edge; edges leaving the box cannot be made present.
    pub fn set(&mut self, edge: &Edge, present: bool) -> Result<()> {
        match self.slot(edge) {
            Some(i) => {
                self.present[i] = present;
                Ok(())
            }
            None if !present => Ok(()),
            None => Err(Error::Domain(format!("edge {edge} leaves the bounding box"))),
        }
    }

    #[inline]
    pub fn is_present(&self, edge: &Edge) -> bool {
        self.slot(edge).is_some_and(|i| self.present[i])
    }

    pub fn degree(&self, s: &Site) -> usize {
        Direction::all(self.dim())
            .filter(|&d| canonical_edge(s, d).is_ok_and(|e| self.is_present(&e)))
            .count()
    }

    /// Present edges in (low site, axis) order.
    pub fn present_edges(&self) -> Vec<Edge> {
        self.bbox.interior_edges().into_iter().filter(|e| self.is_present(e)).collect()
    }

    /// Neighbours of `s` across present edges, in direction-code order.
    pub fn neighbors(&self, s: &Site) -> Vec<Site> {
        Direction::all(self.dim())
            .filter_map(|d| {
                let e = canonical_edge(s, d).ok()?;
                self.is_present(&e).then(|| neighbor(s, d).ok()).flatten()
            })
            .collect()
    }
}

impl FiniteSubgraph {
    /// Graph distances from `s` to every site of the box (row-major order),
    /// `None` where unreachable.
    pub fn distances_from(&self, s: &Site) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.bbox.num_sites()];
        let Some(start) = self.bbox.index_of(s) else {
            return dist;
        };
        dist[start] = Some(0);
        let mut queue = std::collections::VecDeque::from([*s]);
        while let Some(u) = queue.pop_front() {
            let du = dist[self.bbox.index_of(&u).expect("in box")].expect("visited");
            for v in self.neighbors(&u) {
                let iv = self.bbox.index_of(&v).expect("present edges stay in the box");
                if dist[iv].is_none() {
                    dist[iv] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Graph distance between two sites.
    pub fn distance(&self, a: &Site, b: &Site) -> Option<u32> {
        let i = self.bbox.index_of(b)?;
        self.distances_from(a)[i]
    }
}

impl EdgeOracle for FiniteSubgraph {
    fn dim(&self) -> usize {
        self.bbox.dim()
    }

    #[inline]
    fn query(&self, edge: &Edge) -> EdgeState {
        if self.is_present(edge) {
            EdgeState::Present
        } else {
            EdgeState::Absent
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_box_has_twelve_edges() {
        let b = BoundingBox::cube(2, 1).unwrap();
        assert_eq!(b.interior_edges().len(), 12);
        assert_eq!(b.num_sites(), 9);
    }

    #[test]
    fn index_order_is_lexicographic() {
        let b = BoundingBox::cube(3, 1).unwrap();
        let sites: Vec<Site> = b.sites().collect();
        let mut sorted = sites.clone();
        sorted.sort();
        assert_eq!(sites, sorted);
        for (i, s) in sites.iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
        }
    }

    #[test]
    fn edges_leaving_box_are_absent() {
        let g = FiniteSubgraph::full_box(BoundingBox::cube(2, 1).unwrap());
        let out = Edge { low: Site::xy(1, 0), axis: 0 };
        assert_eq!(g.query(&out), EdgeState::Absent);
        assert_eq!(g.degree(&Site::xy(0, 0)), 4);
        assert_eq!(g.degree(&Site::xy(1, 1)), 2);
    }

    #[test]
    fn comb_shape() {
        let g = FiniteSubgraph::comb(2, 2).unwrap();
        assert_eq!(g.degree(&Site::xy(0, 0)), 4);
        assert_eq!(g.degree(&Site::xy(0, 1)), 2);
        assert_eq!(g.degree(&Site::xy(2, 2)), 1);
        assert!(!g.is_present(&Edge { low: Site::xy(0, 1), axis: 0 }));
    }
}
