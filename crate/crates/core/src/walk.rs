//! Induced walks: read letters one at a time, step along the letter's edge
//! when it is present, stand still otherwise.

use std::io::Write;

use crate::error::{Error, Result};
use crate::lattice::{canonical_edge, neighbor, Direction, EdgeOracle, EdgeState, Site};
use crate::stream::{LetterStream, StreamSeed};

/// Something that can answer "is the edge leaving `pos` along `dir`
/// present?", possibly revealing it on the way.
pub trait EdgeResolver {
    fn dim(&self) -> usize;

    /// `t` is the letter-time of the query (letters consumed before it).
    fn resolve(&mut self, pos: &Site, dir: Direction, t: u64) -> Result<EdgeState>;
}

impl<T: EdgeOracle> EdgeResolver for T {
    fn dim(&self) -> usize {
        EdgeOracle::dim(self)
    }

    #[inline]
    fn resolve(&mut self, pos: &Site, dir: Direction, _t: u64) -> Result<EdgeState> {
        Ok(self.query(&canonical_edge(pos, dir)?))
    }
}

/// Position plus both clocks: letters read and steps actually taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WalkState {
    pub pos: Site,
    pub letters_consumed: u64,
    pub accepted_steps: u64,
}

impl WalkState {
    pub fn at(pos: Site) -> Self {
        WalkState { pos, letters_consumed: 0, accepted_steps: 0 }
    }
}

/// Apply one letter. Returns whether the step was accepted.
#[inline]
pub fn induced_step<R: EdgeResolver + ?Sized>(
    state: &mut WalkState,
    letter: Direction,
    env: &mut R,
) -> Result<bool> {
    let accepted = match env.resolve(&state.pos, letter, state.letters_consumed)? {
        EdgeState::Present => {
            state.pos = neighbor(&state.pos, letter)?;
            true
        }
        EdgeState::Absent => false,
        EdgeState::Unrevealed => return Err(Error::UnrevealedEdge(canonical_edge(&state.pos, letter)?)),
    };
    state.letters_consumed += 1;
    state.accepted_steps += u64::from(accepted);
    Ok(accepted)
}

/// Compact record of a walk: one byte per letter (`code << 1 | accepted`).
/// Positions are recomputed from the start site on demand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkTranscript {
    pub start: Site,
    pub seed: StreamSeed,
    codes: Vec<u8>,
}

/// One transcript entry with its position after the letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub letter: Direction,
    pub accepted: bool,
    pub pos_after: Site,
}

impl WalkTranscript {
    pub fn new(start: Site, seed: StreamSeed) -> Self {
        WalkTranscript { start, seed, codes: Vec::new() }
    }

    pub fn with_capacity(start: Site, seed: StreamSeed, cap: usize) -> Self {
        WalkTranscript { start, seed, codes: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, letter: Direction, accepted: bool) {
        self.codes.push(letter.code() << 1 | u8::from(accepted));
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.start.dim()
    }

    #[inline]
    pub fn letter(&self, i: usize) -> (Direction, bool) {
        let c = self.codes[i];
        (Direction::from_code(c >> 1), c & 1 == 1)
    }

    pub fn entries(&self) -> impl Iterator<Item = TranscriptEntry> + '_ {
        let mut pos = self.start;
        self.codes.iter().map(move |&c| {
            let letter = Direction::from_code(c >> 1);
            let accepted = c & 1 == 1;
            if accepted {
                pos = pos.offset(letter.axis(), letter.sign()).expect("recorded step stays in bounds");
            }
            TranscriptEntry { letter, accepted, pos_after: pos }
        })
    }

    /// Positions at letter-times `0..=len` (index 0 is the start).
    pub fn positions(&self) -> Vec<Site> {
        std::iter::once(self.start).chain(self.entries().map(|e| e.pos_after)).collect()
    }

    /// Shorter transcript made of the first `n` letters.
    pub fn prefix(&self, n: usize) -> WalkTranscript {
        WalkTranscript { start: self.start, seed: self.seed, codes: self.codes[..n.min(self.len())].to_vec() }
    }

    pub fn final_state(&self) -> WalkState {
        let mut st = WalkState::at(self.start);
        for e in self.entries() {
            st.pos = e.pos_after;
            st.letters_consumed += 1;
            st.accepted_steps += u64::from(e.accepted);
        }
        st
    }

    /// CSV dump `t,letter,accepted,x,y[,z...]`; `t` counts letters read so far.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        const NAMES: [&str; 6] = ["x", "y", "z", "e3", "e4", "e5"];
        let mut header = String::from("t,letter,accepted");
        for name in NAMES.iter().take(self.dim()) {
            header.push(',');
            header.push_str(name);
        }
        writeln!(w, "{header}")?;
        for (i, e) in self.entries().enumerate() {
            write!(w, "{},{},{}", i + 1, e.letter.name(), u8::from(e.accepted))?;
            for c in e.pos_after.coords() {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Run `horizon_letters` letters of `stream` against `env` from the origin.
pub fn run_induced<R: EdgeResolver + ?Sized>(
    stream: &mut LetterStream,
    env: &mut R,
    horizon_letters: u64,
) -> Result<WalkTranscript> {
    let origin = Site::origin(env.dim())?;
    run_induced_from(stream, env, origin, horizon_letters)
}

pub fn run_induced_from<R: EdgeResolver + ?Sized>(
    stream: &mut LetterStream,
    env: &mut R,
    start: Site,
    horizon_letters: u64,
) -> Result<WalkTranscript> {
    if stream.dim() != env.dim() || start.dim() != env.dim() {
        return Err(Error::DimensionMismatch { expected: env.dim(), got: stream.dim() });
    }
    let mut tr = WalkTranscript::with_capacity(start, stream.seed(), horizon_letters.min(1 << 28) as usize);
    let mut st = WalkState::at(start);
    for _ in 0..horizon_letters {
        let letter = stream.next_letter();
        let acc = induced_step(&mut st, letter, env)?;
        tr.push(letter, acc);
    }
    Ok(tr)
}

/// Like [`run_induced`] but the horizon counts accepted steps; gives up
/// after `letter_cap` letters.
pub fn run_induced_accepted<R: EdgeResolver + ?Sized>(
    stream: &mut LetterStream,
    env: &mut R,
    accepted_target: u64,
    letter_cap: u64,
) -> Result<WalkTranscript> {
    let origin = Site::origin(env.dim())?;
    let mut tr = WalkTranscript::new(origin, stream.seed());
    let mut st = WalkState::at(origin);
    while st.accepted_steps < accepted_target && st.letters_consumed < letter_cap {
        let letter = stream.next_letter();
        let acc = induced_step(&mut st, letter, env)?;
        tr.push(letter, acc);
    }
    Ok(tr)
}
