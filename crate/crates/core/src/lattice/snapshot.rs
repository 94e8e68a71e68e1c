//! Text snapshot of an edge map.
//!
//! ```text
//! exwalk-edges v1 d=2
//! 0 0 1 0 present
//! 0 1 1 1 absent
//! ```
//!
//! One edge per line, endpoints in canonical order, Unrevealed edges omitted,
//! lines sorted bytewise so equal edge maps give identical files.

use std::fmt::Write as _;

use super::{BoundingBox, Edge, EdgeState, FiniteSubgraph, Site};
use crate::error::{Error, Result};

pub const HEADER_PREFIX: &str = "exwalk-edges v1 d=";

pub fn write_snapshot(dim: usize, edges: impl IntoIterator<Item = (Edge, EdgeState)>) -> Result<String> {
    let mut lines = Vec::new();
    for (edge, state) in edges {
        let word = match state {
            EdgeState::Present => "present",
            EdgeState::Absent => "absent",
            EdgeState::Unrevealed => continue,
        };
        if edge.low.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: edge.low.dim() });
        }
        let high = edge.high()?;
        let mut line = String::new();
        for c in edge.low.coords().iter().chain(high.coords()) {
            write!(line, "{c} ").expect("write to string");
        }
        line.push_str(word);
        lines.push(line);
    }
    lines.sort_unstable();
    lines.dedup();
    let mut out = format!("{HEADER_PREFIX}{dim}\n");
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    Ok(out)
}

/// Parsed snapshot: dimension plus every listed edge with its flag.
pub fn parse_snapshot(text: &str) -> Result<(usize, Vec<(Edge, bool)>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty snapshot".into()))?;
    let dim: usize = header
        .strip_prefix(HEADER_PREFIX)
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad snapshot header {header:?}")))?;
    let mut edges = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 * dim + 1 {
            return Err(Error::Parse(format!("line {}: expected {} fields", lineno + 2, 2 * dim + 1)));
        }
        let nums: Vec<i64> = fields[..2 * dim]
            .iter()
            .map(|f| f.parse::<i64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2))))
            .collect::<Result<_>>()?;
        let low = Site::new(&nums[..dim])?;
        let high = Site::new(&nums[dim..])?;
        let diff: Vec<usize> = (0..dim).filter(|&a| low.coord(a) != high.coord(a)).collect();
        if diff.len() != 1 || high.coord(diff[0]) - low.coord(diff[0]) != 1 {
            return Err(Error::Parse(format!("line {}: endpoints are not a canonical unit edge", lineno + 2)));
        }
        let present = match fields[2 * dim] {
            "present" => true,
            "absent" => false,
            other => return Err(Error::Parse(format!("line {}: unknown state {other:?}", lineno + 2))),
        };
        edges.push((Edge { low, axis: diff[0] as u8 }, present));
    }
    Ok((dim, edges))
}

/// Load a snapshot as a finite subgraph whose box is the hull of the listed
/// endpoints.
pub fn snapshot_to_finite(text: &str) -> Result<FiniteSubgraph> {
    let (dim, edges) = parse_snapshot(text)?;
    if edges.is_empty() {
        return Ok(FiniteSubgraph::empty(BoundingBox::cube(dim, 0)?));
    }
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for (e, _) in &edges {
        let h = e.high()?;
        for a in 0..dim {
            lo[a] = lo[a].min(e.low.coord(a));
            hi[a] = hi[a].max(h.coord(a));
        }
    }
    let bbox = BoundingBox::new(Site::new(&lo)?, Site::new(&hi)?)?;
    let mut g = FiniteSubgraph::empty(bbox);
    for (e, present) in &edges {
        g.set(e, *present)?;
    }
    Ok(g)
}
