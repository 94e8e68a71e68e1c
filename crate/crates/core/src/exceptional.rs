//! Adaptive construction of a subgraph of the square lattice on which the
//! induced walk is pushed to the right.
//!
//! Vertical edges exist exactly on the lines `x = 2^n - 1`. Horizontal edges
//! between consecutive lines are revealed gap by gap while the walk runs:
//! inside the open gap every rightward letter is accepted (revealing the edge
//! if needed), and the gap closes the first time the walk reaches the next
//! line. Whatever was not revealed in a closed gap is absent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::snapshot::write_snapshot;
use crate::lattice::{Direction, Edge, EdgeState, FiniteSubgraph, Site};
use crate::stats::{wilson, Z95};
use crate::stream::{LetterStream, StreamSeed};
use crate::walk::{induced_step, EdgeResolver, WalkState, WalkTranscript};

/// Largest admissible line index.
pub const MAX_LINE: u32 = 40;

/// x-coordinate of line `n`, i.e. `2^n - 1`.
pub fn line_x(n: u32) -> Result<i64> {
    if n > MAX_LINE {
        return Err(Error::LineIndexOutOfRange(n));
    }
    Ok((1i64 << n) - 1)
}

/// Index `n` with `line_x(n) == x`, if `x` lies on a line.
#[inline]
pub fn line_index(x: i64) -> Option<u32> {
    if x < 0 {
        return None;
    }
    let v = (x + 1) as u64;
    v.is_power_of_two().then(|| v.trailing_zeros())
}

/// Gap index `k` (between lines `k` and `k + 1`) and offset from line `k`
/// of the horizontal edge whose left endpoint has x-coordinate `x >= 0`.
#[inline]
fn gap_of(x: i64) -> (u32, i64) {
    let v = (x + 1) as u64;
    let k = 63 - v.leading_zeros();
    (k, x - ((1i64 << k) - 1))
}

/// Per-row count of present horizontal edges, measured rightwards from the
/// left line of a gap. Rows are stored densely around the visited range.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct RowReach {
    base: i64,
    reach: Vec<u32>,
}

impl RowReach {
    #[inline]
    fn get(&self, y: i64) -> u32 {
        let i = y - self.base;
        if i < 0 {
            return 0;
        }
        self.reach.get(i as usize).copied().unwrap_or(0)
    }

    fn slot(&mut self, y: i64) -> &mut u32 {
        if self.reach.is_empty() {
            self.base = y;
        }
        if y < self.base {
            let grow = ((self.base - y) as usize).max(self.reach.len());
            let mut v = vec![0; grow];
            v.extend_from_slice(&self.reach);
            self.reach = v;
            self.base -= grow as i64;
        }
        let i = (y - self.base) as usize;
        if i >= self.reach.len() {
            let new_len = (i + 1).max(2 * self.reach.len());
            self.reach.resize(new_len, 0);
        }
        &mut self.reach[i]
    }

    /// `(y, reach)` for rows with at least one present edge, by increasing y.
    fn rows(&self) -> impl Iterator<Item = (i64, u32)> + '_ {
        self.reach
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 0)
            .map(|(i, &r)| (self.base + i as i64, r))
    }
}

/// Summary of one completed stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub start_t: u64,
    pub end_t: u64,
    /// Row of the horizontal segment that completed the stage.
    pub alpha: i64,
}

/// A horizontal edge revealed present at letter-time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reveal {
    pub x: i64,
    pub y: i64,
    pub t: u64,
}

/// The revealed environment. `stage` is the index of the open gap: gaps
/// `0..stage` are final, gap `stage` is being revealed, nothing to its right
/// has been looked at.
#[derive(Clone, Debug)]
pub struct ExceptionalEnv {
    gaps: Vec<RowReach>,
    stage: u32,
    next_line_x: i64,
    history: Vec<StageRecord>,
    tau: Vec<u64>,
    reveals: Option<Vec<Reveal>>,
    y_lo: i64,
    y_hi: i64,
}

impl Default for ExceptionalEnv {
    fn default() -> Self {
        ExceptionalEnv::new(false)
    }
}

impl ExceptionalEnv {
    pub fn new(audit: bool) -> Self {
        ExceptionalEnv {
            gaps: vec![RowReach::default()],
            stage: 0,
            next_line_x: 1,
            history: Vec::new(),
            tau: vec![0],
            reveals: audit.then(Vec::new),
            y_lo: 0,
            y_hi: 0,
        }
    }

    pub fn stage(&self) -> u32 {
        self.stage
    }

    pub fn history(&self) -> &[StageRecord] {
        &self.history
    }

    /// Letter-time of first arrival at line `n`, if it happened.
    pub fn tau(&self, n: u32) -> Option<u64> {
        self.tau.get(n as usize).copied()
    }

    /// Row of the segment completed at the end of stage `n`.
    pub fn alpha(&self, n: u32) -> Option<i64> {
        self.history.get(n as usize).map(|h| h.alpha)
    }

    pub fn reveals(&self) -> Option<&[Reveal]> {
        self.reveals.as_deref()
    }

    /// x-coordinate whose first visit closes the open gap.
    pub fn next_line_x(&self) -> i64 {
        self.next_line_x
    }

    /// Close the open gap and open the next one.
    pub(crate) fn open_next_gap(&mut self) -> Result<()> {
        let next = line_x(self.stage + 2)?;
        self.stage += 1;
        self.next_line_x = next;
        self.gaps.push(RowReach::default());
        Ok(())
    }

    /// Bookkeeping for a single-walk stage completion at letter-time `t`.
    pub(crate) fn complete_stage(&mut self, t: u64, alpha: i64) -> Result<()> {
        let start_t = self.tau[self.stage as usize];
        self.history.push(StageRecord { start_t, end_t: t, alpha });
        self.tau.push(t);
        self.open_next_gap()
    }

    /// Is the horizontal edge from `(x, y)` to `(x + 1, y)` present, absent or
    /// not yet revealed?
    pub fn horizontal_state(&self, x: i64, y: i64) -> EdgeState {
        if x < 0 {
            return EdgeState::Absent;
        }
        let (k, off) = gap_of(x);
        if k > self.stage {
            return EdgeState::Unrevealed;
        }
        let reach = self.gaps[k as usize].get(y) as i64;
        if off < reach {
            EdgeState::Present
        } else if k < self.stage {
            EdgeState::Absent
        } else {
            EdgeState::Unrevealed
        }
    }

    /// Line rule for vertical edges.
    pub fn vertical_state(x: i64) -> EdgeState {
        if line_index(x).is_some() {
            EdgeState::Present
        } else {
            EdgeState::Absent
        }
    }

    /// Resolve the edge leaving `(x, y)` along `dir`, revealing a rightward
    /// edge in the open gap when needed.
    #[inline]
    pub(crate) fn resolve_xy(&mut self, x: i64, y: i64, dir: Direction, t: u64) -> Result<EdgeState> {
        if y < self.y_lo {
            self.y_lo = y;
        } else if y > self.y_hi {
            self.y_hi = y;
        }
        match dir.code() {
            0 => {
                if x < 0 {
                    return Ok(EdgeState::Absent);
                }
                let (k, off) = gap_of(x);
                if k < self.stage {
                    let reach = self.gaps[k as usize].get(y) as i64;
                    return Ok(if off < reach { EdgeState::Present } else { EdgeState::Absent });
                }
                if k > self.stage {
                    return Err(Error::Domain(format!("walk at x={x} is right of the open gap {}", self.stage)));
                }
                let slot = self.gaps[k as usize].slot(y);
                let reach = *slot as i64;
                if off < reach {
                    Ok(EdgeState::Present)
                } else if off == reach {
                    *slot += 1;
                    if let Some(log) = self.reveals.as_mut() {
                        log.push(Reveal { x, y, t });
                    }
                    Ok(EdgeState::Present)
                } else {
                    Err(Error::Domain(format!("walk at ({x},{y}) is detached from its row")))
                }
            }
            1 => match self.horizontal_state(x - 1, y) {
                EdgeState::Unrevealed => Err(Error::NeverUnrevealed { site: Site::xy(x, y), t }),
                s => Ok(s),
            },
            _ => Ok(Self::vertical_state(x)),
        }
    }

    /// State of the edge leaving `pos` along `letter`.
    pub fn resolve_edge(&mut self, pos: &Site, letter: Direction) -> Result<EdgeState> {
        self.resolve_xy(pos.x(), pos.y(), letter, 0)
    }

    /// Number of full connecting rows in gap `k`.
    pub fn connecting_rows(&self, k: u32) -> Vec<i64> {
        let width = 1u32 << k;
        self.gaps
            .get(k as usize)
            .map(|g| g.rows().filter(|&(_, r)| r == width).map(|(y, _)| y).collect())
            .unwrap_or_default()
    }

    /// Box covering every site whose edges have been looked at.
    pub fn extent(&self) -> (i64, i64, i64, i64) {
        let mut y_lo = self.y_lo;
        let mut y_hi = self.y_hi;
        for g in &self.gaps {
            for (y, _) in g.rows() {
                y_lo = y_lo.min(y);
                y_hi = y_hi.max(y);
            }
        }
        let x_hi = line_x(self.stage).expect("stage in range") + self.gaps[self.stage as usize].rows().map(|(_, r)| r as i64).max().unwrap_or(0);
        (-1, x_hi, y_lo - 1, y_hi + 1)
    }

    /// Every edge in [`Self::extent`] with its state; unrevealed edges are
    /// reported as such (and dropped by the snapshot writer).
    pub fn edges_in_extent(&self) -> Vec<(Edge, EdgeState)> {
        let (x_lo, x_hi, y_lo, y_hi) = self.extent();
        let mut out = Vec::new();
        for x in x_lo..=x_hi {
            for y in y_lo..=y_hi {
                let s = Site::xy(x, y);
                if x < x_hi {
                    out.push((Edge { low: s, axis: 0 }, self.horizontal_state(x, y)));
                }
                if y < y_hi {
                    out.push((Edge { low: s, axis: 1 }, Self::vertical_state(x)));
                }
            }
        }
        out
    }

    pub fn snapshot(&self) -> Result<String> {
        write_snapshot(2, self.edges_in_extent())
    }

    /// Finalised part of the environment (closed gaps only) as an explicit
    /// subgraph over [`Self::extent`] restricted to `x <= line_x(stage)`.
    pub fn finalized_subgraph(&self) -> Result<FiniteSubgraph> {
        let (x_lo, _, y_lo, y_hi) = self.extent();
        let x_hi = line_x(self.stage)?;
        let bbox = crate::lattice::BoundingBox::new(Site::xy(x_lo, y_lo), Site::xy(x_hi, y_hi))?;
        let mut g = FiniteSubgraph::empty(bbox);
        for x in x_lo..=x_hi {
            for y in y_lo..=y_hi {
                let s = Site::xy(x, y);
                if x < x_hi && self.horizontal_state(x, y) == EdgeState::Present {
                    g.set(&Edge { low: s, axis: 0 }, true)?;
                }
                if y < y_hi && Self::vertical_state(x) == EdgeState::Present {
                    g.set(&Edge { low: s, axis: 1 }, true)?;
                }
            }
        }
        Ok(g)
    }
}

impl EdgeResolver for ExceptionalEnv {
    fn dim(&self) -> usize {
        2
    }

    #[inline]
    fn resolve(&mut self, pos: &Site, dir: Direction, t: u64) -> Result<EdgeState> {
        self.resolve_xy(pos.x(), pos.y(), dir, t)
    }
}

/// When to stop [`run_exceptional`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_letters: Option<u64>,
    /// Stop as soon as the open gap index reaches this value.
    pub max_stage: Option<u32>,
}

impl StopRule {
    pub fn letters(n: u64) -> Self {
        StopRule { max_letters: Some(n), max_stage: None }
    }

    pub fn stage(n: u32) -> Self {
        StopRule { max_letters: None, max_stage: Some(n) }
    }

    /// Stop at stage `n` or after `letters` letters, whichever comes first.
    pub fn stage_capped(n: u32, letters: u64) -> Self {
        StopRule { max_letters: Some(letters), max_stage: Some(n) }
    }
}

/// Single-walk construction driver; one letter per [`ExceptionalRun::step`].
pub struct ExceptionalRun {
    pub env: ExceptionalEnv,
    pub state: WalkState,
    stream: LetterStream,
    transcript: Option<WalkTranscript>,
}

impl ExceptionalRun {
    pub fn new(seed: StreamSeed, record: bool) -> Self {
        let origin = Site::xy(0, 0);
        ExceptionalRun {
            env: ExceptionalEnv::new(record),
            state: WalkState::at(origin),
            stream: LetterStream::new(seed, 2),
            transcript: record.then(|| WalkTranscript::new(origin, seed)),
        }
    }

    /// Read one letter; closes the open gap when the walk lands on the next line.
    #[inline]
    pub fn step(&mut self) -> Result<bool> {
        let letter = self.stream.next_letter();
        let acc = induced_step(&mut self.state, letter, &mut self.env)?;
        if let Some(tr) = self.transcript.as_mut() {
            tr.push(letter, acc);
        }
        if acc && self.state.pos.x() == self.env.next_line_x() {
            self.env.complete_stage(self.state.letters_consumed, self.state.pos.y())?;
        }
        Ok(acc)
    }

    pub fn x(&self) -> i64 {
        self.state.pos.x()
    }

    pub fn into_parts(self) -> (Option<WalkTranscript>, ExceptionalEnv) {
        (self.transcript, self.env)
    }
}

/// Run the construction with a recorded transcript until `stop` fires.
pub fn run_exceptional(seed: StreamSeed, stop: StopRule) -> Result<(WalkTranscript, ExceptionalEnv)> {
    if stop.max_letters.is_none() && stop.max_stage.is_none() {
        return Err(Error::Domain("stop rule needs max_letters or max_stage".into()));
    }
    if let Some(s) = stop.max_stage {
        if s >= MAX_LINE {
            return Err(Error::LineIndexOutOfRange(s + 1));
        }
    }
    let mut run = ExceptionalRun::new(seed, true);
    loop {
        if stop.max_stage.is_some_and(|s| run.env.stage() >= s) {
            break;
        }
        if stop.max_letters.is_some_and(|m| run.state.letters_consumed >= m) {
            break;
        }
        run.step()?;
    }
    let (tr, env) = run.into_parts();
    Ok((tr.expect("recording run"), env))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExcursionOutcome {
    PositiveSuccess,
    NegativeSuccess,
    Neither,
}

/// Maximal stretch of letter-times spent at one y-coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Excursion {
    pub y: i64,
    pub start_t: u64,
    pub end_t: u64,
    pub x_min: i64,
    pub x_max: i64,
    pub outcome: ExcursionOutcome,
}

/// First letter-time `>= tau_n` at which the walk sits on line `n - 1` or
/// `n + 1`, if it happens inside the transcript.
fn decision_time(positions: &[Site], tau: usize, n: u32) -> Result<Option<usize>> {
    let right = line_x(n + 1)?;
    let left = if n >= 1 { Some(line_x(n - 1)?) } else { None };
    Ok((tau..positions.len()).find(|&t| {
        let x = positions[t].x();
        x == right || Some(x) == left
    }))
}

/// Split the letter-times between `tau_n` and the decision time `T` (or the
/// end of the transcript) into excursions.
pub fn excursion_decompose(tr: &WalkTranscript, env: &ExceptionalEnv, n: u32) -> Result<Vec<Excursion>> {
    let tau = env.tau(n).ok_or(Error::MissingTau(n))? as usize;
    let positions = tr.positions();
    if tau >= positions.len() {
        return Err(Error::MissingTau(n));
    }
    let right = line_x(n + 1)?;
    let left = if n >= 1 { Some(line_x(n - 1)?) } else { None };
    let end = decision_time(&positions, tau, n)?.unwrap_or(positions.len() - 1);

    let mut out = Vec::new();
    let mut cur = Excursion {
        y: positions[tau].y(),
        start_t: tau as u64,
        end_t: tau as u64,
        x_min: positions[tau].x(),
        x_max: positions[tau].x(),
        outcome: ExcursionOutcome::Neither,
    };
    for t in tau + 1..=end {
        let p = positions[t];
        if p.y() != cur.y {
            cur.end_t = t as u64;
            out.push(cur);
            cur = Excursion { y: p.y(), start_t: t as u64, end_t: t as u64, x_min: p.x(), x_max: p.x(), outcome: ExcursionOutcome::Neither };
        } else {
            cur.x_min = cur.x_min.min(p.x());
            cur.x_max = cur.x_max.max(p.x());
        }
    }
    cur.end_t = end as u64;
    let x_end = positions[end].x();
    if end > tau || x_end == right {
        if x_end == right {
            cur.outcome = ExcursionOutcome::PositiveSuccess;
        } else if Some(x_end) == left {
            cur.outcome = ExcursionOutcome::NegativeSuccess;
        }
    }
    out.push(cur);
    Ok(out)
}

/// Accepted-step statistics during `[tau_n, T)` used to check the excursion
/// law: at line `n` an accepted letter is vertical with probability 2/3 off
/// the connecting row and 1/2 on it; strictly between lines left and right
/// are equally likely.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCounts {
    pub off_alpha_events: u64,
    pub off_alpha_vertical: u64,
    pub alpha_events: u64,
    pub alpha_vertical: u64,
    pub interior_left: u64,
    pub interior_right: u64,
}

impl BoundaryCounts {
    pub fn merge(&mut self, o: &BoundaryCounts) {
        self.off_alpha_events += o.off_alpha_events;
        self.off_alpha_vertical += o.off_alpha_vertical;
        self.alpha_events += o.alpha_events;
        self.alpha_vertical += o.alpha_vertical;
        self.interior_left += o.interior_left;
        self.interior_right += o.interior_right;
    }
}

pub fn boundary_counts(tr: &WalkTranscript, env: &ExceptionalEnv, n: u32) -> Result<BoundaryCounts> {
    if n == 0 {
        return Err(Error::Domain("boundary law needs n >= 1".into()));
    }
    let tau = env.tau(n).ok_or(Error::MissingTau(n))? as usize;
    let alpha = env.alpha(n - 1).ok_or(Error::MissingTau(n))?;
    let positions = tr.positions();
    if tau >= positions.len() {
        return Err(Error::MissingTau(n));
    }
    let end = decision_time(&positions, tau, n)?.unwrap_or(positions.len() - 1);
    let ln = line_x(n)?;
    let mut c = BoundaryCounts::default();
    for t in tau..end {
        let (letter, accepted) = tr.letter(t);
        if !accepted {
            continue;
        }
        let p = positions[t];
        let vertical = letter.axis() == 1;
        if p.x() == ln {
            if p.y() == alpha {
                c.alpha_events += 1;
                c.alpha_vertical += u64::from(vertical);
            } else {
                c.off_alpha_events += 1;
                c.off_alpha_vertical += u64::from(vertical);
            }
        } else if line_index(p.x()).is_none() {
            if letter == Direction::PLUS_X {
                c.interior_right += 1;
            } else if letter == Direction::MINUS_X {
                c.interior_left += 1;
            }
        }
    }
    Ok(c)
}

/// Number of letter-times `t` in `1..=len` with `X(t) == line_x(k)`.
pub fn line_visit_profile(tr: &WalkTranscript, k: u32) -> Result<u64> {
    let lx = line_x(k)?;
    Ok(tr.entries().filter(|e| e.pos_after.x() == lx).count() as u64)
}

/// Back-crossing estimate for one line index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnEstimate {
    pub n: u32,
    pub trials: u64,
    pub hits: u64,
    pub completions: u64,
    pub censored: u64,
    /// `hits / (trials - censored)`; NaN when nothing was decided.
    pub p_hat: f64,
    pub wilson_ci: Option<(f64, f64)>,
    pub seed: StreamSeed,
    pub horizon: u64,
}

/// What happened in one trial of a back-crossing experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialOutcome {
    Hit,
    Completion,
    Censored,
}

impl EnEstimate {
    pub fn from_outcomes(n: u32, seed: StreamSeed, horizon: u64, outcomes: &[TrialOutcome]) -> Self {
        let hits = outcomes.iter().filter(|&&o| o == TrialOutcome::Hit).count() as u64;
        let completions = outcomes.iter().filter(|&&o| o == TrialOutcome::Completion).count() as u64;
        let censored = outcomes.len() as u64 - hits - completions;
        EnEstimate::from_counts(n, outcomes.len() as u64, hits, completions, censored, seed, horizon)
    }

    pub fn from_counts(n: u32, trials: u64, hits: u64, completions: u64, censored: u64, seed: StreamSeed, horizon: u64) -> Self {
        let decided = trials - censored;
        let p_hat = if decided == 0 { f64::NAN } else { hits as f64 / decided as f64 };
        EnEstimate { n, trials, hits, completions, censored, p_hat, wilson_ci: wilson(hits, decided, Z95), seed, horizon }
    }

    pub fn decided(&self) -> u64 {
        self.trials - self.censored
    }

    pub fn ci_lo(&self) -> f64 {
        self.wilson_ci.map_or(f64::NAN, |c| c.0)
    }

    pub fn ci_hi(&self) -> f64 {
        self.wilson_ci.map_or(f64::NAN, |c| c.1)
    }

    /// Do the two 95% intervals intersect?
    pub fn overlaps(&self, other: &EnEstimate) -> bool {
        match (self.wilson_ci, other.wilson_ci) {
            (Some((a, b)), Some((c, d))) => a <= d && c <= b,
            _ => false,
        }
    }
}

/// One trial: run to line `n`, then watch for line `n - 1` versus `n + 1`.
pub fn en_trial(n: u32, seed: StreamSeed, horizon: u64) -> Result<TrialOutcome> {
    let left = line_x(n - 1)?;
    let right = line_x(n + 1)?;
    let mut run = ExceptionalRun::new(seed, false);
    while run.env.stage() < n {
        if run.state.letters_consumed >= horizon {
            return Ok(TrialOutcome::Censored);
        }
        run.step()?;
    }
    loop {
        let x = run.x();
        if x == left {
            return Ok(TrialOutcome::Hit);
        }
        if x == right {
            return Ok(TrialOutcome::Completion);
        }
        if run.state.letters_consumed >= horizon {
            return Ok(TrialOutcome::Censored);
        }
        run.step()?;
    }
}

/// Monte Carlo estimate of the probability that, after first reaching line
/// `n`, the walk returns to line `n - 1` before reaching line `n + 1`.
pub fn estimate_en(n: u32, trials: u64, base_seed: StreamSeed, horizon_letters: u64) -> Result<EnEstimate> {
    if n == 0 {
        return Err(Error::Domain("back-crossing needs n >= 1".into()));
    }
    if trials == 0 {
        return Err(Error::Domain("trials must be positive".into()));
    }
    line_x(n + 1)?;
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| en_trial(n, base_seed.trial(t), horizon_letters))
        .collect::<Result<_>>()?;
    Ok(EnEstimate::from_outcomes(n, base_seed, horizon_letters, &outcomes))
}

/// Result of checking a snapshot against the structure the construction
/// promises.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StructureReport {
    /// Connecting rows per completed gap.
    pub connecting: Vec<Vec<i64>>,
    /// Present horizontal edges touching line `k + 1` from the left, per gap.
    pub left_edges_at_next_line: Vec<usize>,
    pub problems: Vec<String>,
}

/// Check a finalized region against the line/segment structure. `completed`
/// gaps are examined; every row inside the box is looked at.
pub fn verify_structure(g: &FiniteSubgraph, completed: u32) -> Result<StructureReport> {
    let bbox = g.bbox();
    let (x_lo, x_hi) = (bbox.lo.x(), bbox.hi.x());
    let (y_lo, y_hi) = (bbox.lo.y(), bbox.hi.y());
    let mut rep = StructureReport::default();
    let present = |x: i64, y: i64, axis: u8| g.is_present(&Edge { low: Site::xy(x, y), axis });

    for x in x_lo..=x_hi {
        for y in y_lo..y_hi {
            let want = line_index(x).is_some();
            if present(x, y, 1) != want {
                rep.problems.push(format!("vertical edge at ({x},{y}) breaks the line rule"));
            }
        }
        if x < 0 {
            for y in y_lo..=y_hi {
                if x < x_hi && present(x, y, 0) {
                    rep.problems.push(format!("horizontal edge left of the first line at ({x},{y})"));
                }
            }
        }
    }
    for k in 0..completed {
        let a = line_x(k)?;
        let b = line_x(k + 1)?;
        if b > x_hi {
            return Err(Error::Domain(format!("snapshot does not cover gap {k}")));
        }
        let mut rows = Vec::new();
        let mut left_edges = 0;
        for y in y_lo..=y_hi {
            let run: Vec<bool> = (a..b).map(|x| present(x, y, 0)).collect();
            let reach = run.iter().take_while(|&&p| p).count();
            if run[reach..].iter().any(|&p| p) {
                rep.problems.push(format!("gap {k} row {y}: present edge detached from line {k}"));
            }
            if reach == run.len() {
                rows.push(y);
            }
            left_edges += usize::from(present(b - 1, y, 0));
        }
        rep.connecting.push(rows);
        rep.left_edges_at_next_line.push(left_edges);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_positions() {
        assert_eq!(line_x(0).unwrap(), 0);
        assert_eq!(line_x(3).unwrap(), 7);
        assert_eq!(line_x(41), Err(Error::LineIndexOutOfRange(41)));
        assert_eq!(line_index(0), Some(0));
        assert_eq!(line_index(1), Some(1));
        assert_eq!(line_index(7), Some(3));
        assert_eq!(line_index(2), None);
        assert_eq!(line_index(-1), None);
        assert_eq!(gap_of(0), (0, 0));
        assert_eq!(gap_of(1), (1, 0));
        assert_eq!(gap_of(2), (1, 1));
        assert_eq!(gap_of(3), (2, 0));
        assert_eq!(gap_of(6), (2, 3));
    }

    fn env_at_stage_two(alpha0: i64, alpha1: i64) -> ExceptionalEnv {
        let mut env = ExceptionalEnv::new(false);
        // stage 0: single edge 0 -> 1 at alpha0
        assert_eq!(env.resolve_xy(0, alpha0, Direction::PLUS_X, 0).unwrap(), EdgeState::Present);
        env.complete_stage(1, alpha0).unwrap();
        // stage 1: 1 -> 2 -> 3 at alpha1
        env.resolve_xy(1, alpha1, Direction::PLUS_X, 2).unwrap();
        env.resolve_xy(2, alpha1, Direction::PLUS_X, 3).unwrap();
        env.complete_stage(4, alpha1).unwrap();
        env
    }

    #[test]
    fn resolve_edge_examples() {
        let mut env = env_at_stage_two(0, 9);
        assert_eq!(env.stage(), 2);
        // forced rightward acceptance inside the open gap
        assert_eq!(env.resolve_edge(&Site::xy(3, 9), Direction::PLUS_X).unwrap(), EdgeState::Present);
        assert_eq!(env.resolve_edge(&Site::xy(4, 9), Direction::PLUS_X).unwrap(), EdgeState::Present);
        // vertical edges only on lines
        assert_eq!(env.resolve_edge(&Site::xy(5, 9), Direction::PLUS_Y).unwrap(), EdgeState::Absent);
        assert_eq!(env.resolve_edge(&Site::xy(3, 9), Direction::PLUS_Y).unwrap(), EdgeState::Present);
        // crossing left through the finalized segment of stage 1
        assert_eq!(env.resolve_edge(&Site::xy(3, 9), Direction::MINUS_X).unwrap(), EdgeState::Present);
        assert_eq!(env.resolve_edge(&Site::xy(3, 8), Direction::MINUS_X).unwrap(), EdgeState::Absent);
        // vertical step at x = 2 (between lines 1 and 2) rejected
        assert_eq!(env.resolve_edge(&Site::xy(2, 9), Direction::MINUS_Y).unwrap(), EdgeState::Absent);
        // nothing left of the first line
        assert_eq!(env.resolve_edge(&Site::xy(0, 0), Direction::MINUS_X).unwrap(), EdgeState::Absent);
    }

    #[test]
    fn leftward_unrevealed_query_raises() {
        let mut env = ExceptionalEnv::new(false);
        env.complete_stage(0, 0).unwrap();
        env.open_next_gap().unwrap();
        // stage 2 open: edge (4,5)-(5,5) never revealed
        let r = env.resolve_xy(5, 5, Direction::MINUS_X, 17);
        assert!(matches!(r, Err(Error::NeverUnrevealed { t: 17, .. })));
    }

    #[test]
    fn first_stage_has_one_unit_segment() {
        for s in 0..50u64 {
            let (_, env) = run_exceptional(StreamSeed::new(s, 0), StopRule::stage(1)).unwrap();
            let rows = env.connecting_rows(0);
            assert_eq!(rows.len(), 1);
            assert_eq!(env.alpha(0), Some(rows[0]));
            assert_eq!(env.history()[0].start_t, 0);
        }
    }

    #[test]
    fn never_left_of_first_line() {
        for s in 0..20u64 {
            let (tr, _) = run_exceptional(StreamSeed::new(s, 0), StopRule::stage_capped(6, 5_000_000)).unwrap();
            assert!(tr.entries().all(|e| e.pos_after.x() >= 0));
        }
    }

    #[test]
    fn same_seed_same_snapshot() {
        let seed = StreamSeed::new(11, 0);
        let (_, a) = run_exceptional(seed, StopRule::letters(200_000)).unwrap();
        let (_, b) = run_exceptional(seed, StopRule::letters(200_000)).unwrap();
        assert_eq!(a.snapshot().unwrap(), b.snapshot().unwrap());
    }

    #[test]
    fn excursions_form_unit_chain_and_end_positively() {
        let mut positive = 0;
        for s in 0..40u64 {
            let (tr, env) = run_exceptional(StreamSeed::new(s, 1), StopRule::stage_capped(5, 5_000_000)).unwrap();
            if env.stage() < 5 {
                continue;
            }
            let ex = excursion_decompose(&tr, &env, 3).unwrap();
            assert_eq!(ex[0].y, env.alpha(2).unwrap());
            for w in ex.windows(2) {
                assert_eq!((w[0].y - w[1].y).abs(), 1);
                assert_eq!(w[0].end_t, w[1].start_t);
            }
            let last = ex.last().unwrap();
            if last.outcome == ExcursionOutcome::PositiveSuccess {
                positive += 1;
                assert_eq!(last.x_max, 15);
            }
        }
        assert!(positive > 0);
    }

    #[test]
    fn missing_tau_is_reported() {
        let (tr, env) = run_exceptional(StreamSeed::new(0, 0), StopRule::stage(2)).unwrap();
        assert_eq!(excursion_decompose(&tr, &env, 5), Err(Error::MissingTau(5)));
    }

    #[test]
    fn visit_profile_bounds() {
        let (tr, env) = run_exceptional(StreamSeed::new(3, 0), StopRule::stage_capped(4, 5_000_000)).unwrap();
        let beyond = line_visit_profile(&tr, env.stage() + 2).unwrap();
        assert_eq!(beyond, 0);
        let total: u64 = (0..=env.stage() + 1).map(|k| line_visit_profile(&tr, k).unwrap()).sum();
        assert!(total <= tr.len() as u64);
    }

    #[test]
    fn horizon_zero_censors_everything() {
        let e = estimate_en(2, 25, StreamSeed::new(1, 0), 0).unwrap();
        assert_eq!(e.censored, 25);
        assert!(e.p_hat.is_nan());
        assert!(e.wilson_ci.is_none());
    }

    #[test]
    fn en_rejects_bad_indices() {
        assert!(estimate_en(0, 1, StreamSeed::new(1, 0), 10).is_err());
        assert_eq!(estimate_en(50, 1, StreamSeed::new(1, 0), 10).unwrap_err(), Error::LineIndexOutOfRange(51));
    }

    #[test]
    fn structure_holds_on_snapshots() {
        for s in 0..30u64 {
            let (_, env) = run_exceptional(StreamSeed::new(s, 2), StopRule::stage_capped(5, 5_000_000)).unwrap();
            let g = env.finalized_subgraph().unwrap();
            let rep = verify_structure(&g, env.stage()).unwrap();
            assert!(rep.problems.is_empty(), "{:?}", rep.problems);
            for (k, rows) in rep.connecting.iter().enumerate() {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0], env.alpha(k as u32).unwrap());
                assert_eq!(rep.left_edges_at_next_line[k], 1);
            }
        }
    }

    #[test]
    fn reveals_follow_rightward_accepted_letters() {
        let (tr, env) = run_exceptional(StreamSeed::new(8, 0), StopRule::stage_capped(5, 5_000_000)).unwrap();
        let positions = tr.positions();
        for r in env.reveals().unwrap() {
            let (letter, acc) = tr.letter(r.t as usize);
            assert_eq!(letter, Direction::PLUS_X);
            assert!(acc);
            assert_eq!(positions[r.t as usize], Site::xy(r.x, r.y));
        }
    }
}
