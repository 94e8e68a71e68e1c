//! Several walks sharing one adaptively revealed environment.
//!
//! Phase `i` builds the gap between lines `i` and `i + 1`. A new walk is
//! introduced at the start of each phase and first runs alone on the already
//! final part of the environment until it reaches line `i`. Then all active
//! walks read one letter each in a fixed round-robin order, each freezing on
//! its first arrival at line `i + 1`; the phase ends once every active walk
//! is frozen. Revelation rules are those of the single-walk construction, so
//! one walk reproduces it exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exceptional::{line_x, EnEstimate, ExceptionalEnv, TrialOutcome, MAX_LINE};
use crate::lattice::{Direction, EdgeState, Site};
use crate::stream::{LetterStream, StreamSeed};
use crate::walk::{induced_step, run_induced_from, EdgeResolver, WalkState, WalkTranscript};

/// One walk of the collection.
#[derive(Clone, Debug)]
pub struct Walker {
    pub state: WalkState,
    pub seed: StreamSeed,
    stream: LetterStream,
    transcript: Option<WalkTranscript>,
    frozen: bool,
}

impl Walker {
    fn new(seed: StreamSeed, record: bool) -> Self {
        let origin = Site::xy(0, 0);
        Walker {
            state: WalkState::at(origin),
            seed,
            stream: LetterStream::new(seed, 2),
            transcript: record.then(|| WalkTranscript::new(origin, seed)),
            frozen: false,
        }
    }

    pub fn transcript(&self) -> Option<&WalkTranscript> {
        self.transcript.as_ref()
    }

    pub fn x(&self) -> i64 {
        self.state.pos.x()
    }

    #[inline]
    fn step(&mut self, env: &mut ExceptionalEnv) -> Result<()> {
        let letter = self.stream.next_letter();
        let acc = induced_step(&mut self.state, letter, env)?;
        if let Some(tr) = self.transcript.as_mut() {
            tr.push(letter, acc);
        }
        Ok(())
    }
}

/// Entry and freeze letter-times of one walk in one phase (each walk counts
/// its own letters).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub phase: u32,
    pub walk: usize,
    pub entry_t: u64,
    pub freeze_t: u64,
}

/// How a call to [`MultiWalkRun::run_phase`] ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseEnd {
    Completed,
    /// The total letter budget ran out.
    Truncated,
    /// The watched walk reached the watched x-coordinate.
    Watched,
}

/// When to stop [`run_multiwalk`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiStop {
    pub max_phase: Option<u32>,
    /// Budget on letters summed over all walks.
    pub max_letters: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct MultiWalkRun {
    pub k: usize,
    pub env: ExceptionalEnv,
    pub walkers: Vec<Walker>,
    pub phase_log: Vec<PhaseEntry>,
    pub truncated: bool,
    base_seed: StreamSeed,
    record: bool,
}

impl MultiWalkRun {
    pub fn new(base_seed: StreamSeed, k: usize, record: bool) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("need at least one walk".into()));
        }
        Ok(MultiWalkRun {
            k,
            env: ExceptionalEnv::new(record),
            walkers: Vec::with_capacity(k),
            phase_log: Vec::new(),
            truncated: false,
            base_seed,
            record,
        })
    }

    pub fn phase(&self) -> u32 {
        self.env.stage()
    }

    pub fn total_letters(&self) -> u64 {
        self.walkers.iter().map(|w| w.state.letters_consumed).sum()
    }

    /// Number of full connecting rows per completed gap.
    pub fn segment_counts(&self) -> Vec<usize> {
        (0..self.phase()).map(|g| self.env.connecting_rows(g).len()).collect()
    }

    /// Run the current phase to completion, or until `letter_cap` total
    /// letters, or until walk `watch.0` stands at x = `watch.1`.
    pub fn run_phase(&mut self, letter_cap: u64, watch: Option<(usize, i64)>) -> Result<PhaseEnd> {
        let i = self.phase();
        let target = line_x(i + 1)?;
        let mut total = self.total_letters();
        if (i as usize) < self.k && self.walkers.len() == i as usize {
            let seed = self.base_seed.trial(i as u64);
            self.walkers.push(Walker::new(seed, self.record));
            // the newcomer first reaches line i on the finalized region alone
            let left = line_x(i)?;
            let w = self.walkers.last_mut().expect("just pushed");
            while w.x() != left {
                if total >= letter_cap {
                    self.truncated = true;
                    return Ok(PhaseEnd::Truncated);
                }
                w.step(&mut self.env)?;
                total += 1;
            }
        }
        let entry: Vec<u64> = self.walkers.iter().map(|w| w.state.letters_consumed).collect();
        for w in &mut self.walkers {
            w.frozen = w.x() == target;
        }
        let mut remaining = self.walkers.iter().filter(|w| !w.frozen).count();
        while remaining > 0 {
            for (j, w) in self.walkers.iter_mut().enumerate() {
                if w.frozen {
                    continue;
                }
                if total >= letter_cap {
                    self.truncated = true;
                    return Ok(PhaseEnd::Truncated);
                }
                w.step(&mut self.env)?;
                total += 1;
                if w.x() == target {
                    w.frozen = true;
                    remaining -= 1;
                }
                if watch.is_some_and(|(wj, wx)| wj == j && w.x() == wx) {
                    return Ok(PhaseEnd::Watched);
                }
            }
        }
        for (j, w) in self.walkers.iter_mut().enumerate() {
            self.phase_log.push(PhaseEntry { phase: i, walk: j + 1, entry_t: entry[j], freeze_t: w.state.letters_consumed });
            w.frozen = false;
        }
        if self.k == 1 {
            let w = &self.walkers[0];
            self.env.complete_stage(w.state.letters_consumed, w.state.pos.y())?;
        } else {
            self.env.open_next_gap()?;
        }
        Ok(PhaseEnd::Completed)
    }
}

/// Run `k` walks with seeds `base_seed.trial(j)` (walk `j + 1`).
pub fn run_multiwalk(base_seed: StreamSeed, k: usize, stop: MultiStop) -> Result<MultiWalkRun> {
    if stop.max_phase.is_none() && stop.max_letters.is_none() {
        return Err(Error::Domain("stop rule needs max_phase or max_letters".into()));
    }
    if let Some(p) = stop.max_phase {
        if p >= MAX_LINE {
            return Err(Error::LineIndexOutOfRange(p + 1));
        }
    }
    let mut run = MultiWalkRun::new(base_seed, k, true)?;
    let cap = stop.max_letters.unwrap_or(u64::MAX);
    while stop.max_phase.is_none_or(|p| run.phase() < p) {
        if run.run_phase(cap, None)? == PhaseEnd::Truncated {
            break;
        }
    }
    Ok(run)
}

/// Read-only view of a finished environment; unrevealed edges stay
/// unrevealed, so replaying a walk fails loudly if it needs one.
pub struct FrozenView<'a>(pub &'a ExceptionalEnv);

impl EdgeResolver for FrozenView<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn resolve(&mut self, pos: &Site, dir: Direction, _t: u64) -> Result<EdgeState> {
        Ok(match dir.code() {
            0 => self.0.horizontal_state(pos.x(), pos.y()),
            1 => self.0.horizontal_state(pos.x() - 1, pos.y()),
            _ => ExceptionalEnv::vertical_state(pos.x()),
        })
    }
}

/// Replay walk `j` (0-based) of `run` against the final environment.
pub fn replay_walker(run: &MultiWalkRun, j: usize) -> Result<WalkTranscript> {
    let w = &run.walkers[j];
    let mut stream = LetterStream::new(w.seed, 2);
    run_induced_from(&mut stream, &mut FrozenView(&run.env), Site::xy(0, 0), w.state.letters_consumed)
}

/// One trial of the back-crossing event for walk `i` (1-based) at line `n`
/// with `k` walks.
pub fn eni_trial(n: u32, i: usize, k: usize, seed: StreamSeed, horizon: u64) -> Result<TrialOutcome> {
    let mut run = MultiWalkRun::new(seed, k, false)?;
    while run.phase() < n {
        if run.run_phase(horizon, None)? == PhaseEnd::Truncated {
            return Ok(TrialOutcome::Censored);
        }
    }
    let left = line_x(n - 1)?;
    Ok(match run.run_phase(horizon, Some((i - 1, left)))? {
        PhaseEnd::Watched => TrialOutcome::Hit,
        PhaseEnd::Completed => TrialOutcome::Completion,
        PhaseEnd::Truncated => TrialOutcome::Censored,
    })
}

/// Probability that walk `i`, after reaching line `n`, returns to line
/// `n - 1` before reaching line `n + 1`, with `n + 1` walks so that every
/// walk alive during phase `n` takes part. `horizon` caps the letters summed
/// over all walks of a trial.
pub fn estimate_eni(n: u32, i: usize, trials: u64, base_seed: StreamSeed, horizon: u64) -> Result<EnEstimate> {
    estimate_eni_with(n, i, n as usize + 1, trials, base_seed, horizon)
}

/// [`estimate_eni`] with an explicit number of walks `k >= i`. Trial `t`
/// uses the seed family `base_seed.family(MULTI_TAG, t)`; walk `j` of a
/// trial uses stream `j - 1` of that family member.
pub fn estimate_eni_with(n: u32, i: usize, k: usize, trials: u64, base_seed: StreamSeed, horizon: u64) -> Result<EnEstimate> {
    if i == 0 || (i as u32) > n || i > k {
        return Err(Error::Domain(format!("need 1 <= i <= min(n, k), got i={i}, n={n}, k={k}")));
    }
    if trials == 0 {
        return Err(Error::Domain("trials must be positive".into()));
    }
    line_x(n + 1)?;
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| eni_trial(n, i, k, base_seed.family(MULTI_TAG, t), horizon))
        .collect::<Result<_>>()?;
    Ok(EnEstimate::from_outcomes(n, base_seed, horizon, &outcomes))
}

/// Seed-family tag for multi-walk trials.
pub const MULTI_TAG: u64 = 0x6d75_6c74;
