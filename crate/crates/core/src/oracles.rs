//! Exact and independent reference computations: gambler's ruin, local time
//! of the simple random walk, transition probabilities on finite graphs, an
//! abstract excursion chain for the back-crossing event, and the fits used
//! on the resulting estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exceptional::{line_x, EnEstimate, TrialOutcome};
use crate::lattice::{canonical_edge, neighbor, Direction, FiniteSubgraph, Site};
use crate::report::{ExperimentReport, ReportRow};
use crate::stats::{binomial_se, weighted_line_fit, wilson, z_score, Moments, Z95};
use crate::stream::{BitSource, CounterRng, StreamSeed};
use crate::walk::WalkTranscript;

/// Probability `1/n` that the walk from 1 reaches `n` before 0, as
/// `(numerator, denominator, value)`.
pub fn gambler_exact(n: u64) -> Result<(u64, u64, f64)> {
    if n == 0 {
        return Err(Error::Domain("gambler's ruin needs n >= 1".into()));
    }
    Ok((1, n, 1.0 / n as f64))
}

/// Steps after which a gambler's-ruin trial is counted as censored.
pub const GAMBLER_STEP_CAP: u64 = 1_000_000_000;

/// Monte Carlo gambler's ruin: trial `t` runs a fair walk on `0..=n` from 1
/// with coin stream `seed.trial(t)`.
pub fn gambler_mc(n: u64, trials: u64, seed: StreamSeed) -> Result<ExperimentReport> {
    let (_, _, exact) = gambler_exact(n)?;
    let outcomes: Vec<Option<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut bits = BitSource::new(seed.trial(t));
            let mut x = 1u64;
            let mut steps = 0u64;
            while x != 0 && x != n {
                if steps >= GAMBLER_STEP_CAP {
                    return None;
                }
                if bits.next_bit() {
                    x += 1;
                } else {
                    x -= 1;
                }
                steps += 1;
            }
            Some(x == n)
        })
        .collect();
    let censored = outcomes.iter().filter(|o| o.is_none()).count() as u64;
    let hits = outcomes.iter().filter(|o| **o == Some(true)).count() as u64;
    let decided = trials - censored;
    let p = if decided == 0 { f64::NAN } else { hits as f64 / decided as f64 };
    let (lo, hi) = wilson(hits, decided, Z95).unwrap_or((f64::NAN, f64::NAN));
    Ok(ExperimentReport::single(ReportRow {
        name: "gambler".into(),
        param: format!("n={n}"),
        trials,
        estimate: p,
        ci_lo: lo,
        ci_hi: hi,
        censored,
        seed,
        z: z_score(p, exact, binomial_se(exact, decided)),
    }))
}

/// Expected number of visits to 0 at times `1..=n_steps` of the simple
/// random walk on the integers, by exact propagation of its law.
pub fn local_time_exact(n_steps: u64) -> f64 {
    let n = n_steps as usize;
    // dist[i] is P(S_k = i - n)
    let mut dist = vec![0.0f64; 2 * n + 3];
    let mut next = dist.clone();
    let c = n + 1;
    dist[c] = 1.0;
    let mut total = 0.0;
    for k in 1..=n {
        let lo = c - k;
        let hi = c + k;
        next[lo - 1..=hi + 1].fill(0.0);
        for i in (lo..=hi).step_by(1) {
            let m = dist[i];
            if m != 0.0 {
                next[i - 1] += 0.5 * m;
                next[i + 1] += 0.5 * m;
            }
        }
        std::mem::swap(&mut dist, &mut next);
        total += dist[c];
    }
    total
}

/// Monte Carlo estimate of the same expectation.
pub fn local_time_mc(n_steps: u64, trials: u64, seed: StreamSeed) -> ExperimentReport {
    let visits: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut bits = BitSource::new(seed.trial(t));
            let mut x = 0i64;
            let mut v = 0u64;
            for _ in 0..n_steps {
                x += if bits.next_bit() { 1 } else { -1 };
                v += u64::from(x == 0);
            }
            v as f64
        })
        .collect();
    let m: Moments = visits.into_iter().collect();
    let exact = local_time_exact(n_steps);
    ExperimentReport::single(ReportRow {
        name: "localtime".into(),
        param: format!("N={n_steps}"),
        trials,
        estimate: m.mean(),
        ci_lo: m.mean() - Z95 * m.sem(),
        ci_hi: m.mean() + Z95 * m.sem(),
        censored: 0,
        seed,
        z: z_score(m.mean(), exact, m.sem()),
    })
}

/// Row-major distribution over the sites of `graph`'s box after each of
/// `0..=t` steps of the induced walk: each of the `2d` letters has
/// probability `1/2d`, and a letter along a missing edge leaves the walk in
/// place.
pub fn transition_dp(graph: &FiniteSubgraph, origin: &Site, t: u64) -> Result<Vec<Vec<f64>>> {
    let kernel = lazy_kernel(graph);
    propagate(graph, origin, t, &kernel)
}

/// As [`transition_dp`] for the simple random walk: uniform over present
/// edges, staying put only at isolated sites.
pub fn srw_dp(graph: &FiniteSubgraph, origin: &Site, t: u64) -> Result<Vec<Vec<f64>>> {
    let bbox = graph.bbox();
    let kernel: Vec<Vec<(usize, f64)>> = bbox
        .sites()
        .enumerate()
        .map(|(i, s)| {
            let nb = graph.neighbors(&s);
            if nb.is_empty() {
                vec![(i, 1.0)]
            } else {
                let w = 1.0 / nb.len() as f64;
                nb.iter().map(|v| (bbox.index_of(v).expect("in box"), w)).collect()
            }
        })
        .collect();
    propagate(graph, origin, t, &kernel)
}

fn lazy_kernel(graph: &FiniteSubgraph) -> Vec<Vec<(usize, f64)>> {
    let bbox = graph.bbox();
    let d = graph.dim();
    let w = 1.0 / (2 * d) as f64;
    bbox.sites()
        .enumerate()
        .map(|(i, s)| {
            let mut row = vec![(i, 0.0)];
            for dir in Direction::all(d) {
                let present = canonical_edge(&s, dir).is_ok_and(|e| graph.is_present(&e));
                if present {
                    let v = neighbor(&s, dir).expect("present edge has an endpoint");
                    row.push((bbox.index_of(&v).expect("in box"), w));
                } else {
                    row[0].1 += w;
                }
            }
            row
        })
        .collect()
}

fn propagate(graph: &FiniteSubgraph, origin: &Site, t: u64, kernel: &[Vec<(usize, f64)>]) -> Result<Vec<Vec<f64>>> {
    let bbox = graph.bbox();
    let start = bbox.index_of(origin).ok_or_else(|| Error::Domain(format!("{origin} outside the graph's box")))?;
    let mut cur = vec![0.0; bbox.num_sites()];
    cur[start] = 1.0;
    let mut out = Vec::with_capacity(t as usize + 1);
    out.push(cur.clone());
    for _ in 0..t {
        let mut nxt = vec![0.0; cur.len()];
        for (i, &m) in cur.iter().enumerate() {
            if m != 0.0 {
                for &(j, w) in &kernel[i] {
                    nxt[j] += m * w;
                }
            }
        }
        out.push(nxt.clone());
        cur = nxt;
    }
    Ok(out)
}

/// Long-run fraction of accepted letters of the induced walk started at
/// `origin`: the stationary law on the origin's component is uniform (the
/// kernel is symmetric), so this is the mean of `deg / 2d` over the component.
pub fn stationary_acceptance(graph: &FiniteSubgraph, origin: &Site) -> Result<f64> {
    let comp = crate::lattice::reachable_sites(graph, origin, graph.bbox())?;
    let d = graph.dim() as f64;
    Ok(comp.iter().map(|s| graph.degree(s) as f64 / (2.0 * d)).sum::<f64>() / comp.len() as f64)
}

/// One run of the abstract excursion chain until its first successful
/// excursion.
fn excursion_chain_trial(n: u32, seed: StreamSeed) -> TrialOutcome {
    let mut rng = CounterRng::new(seed);
    let w = 1i64 << n; // width of the gap between lines n and n+1
    let half = w / 2; // width of the gap between lines n-1 and n
    let mut beta = 0i64; // y relative to the connecting row
    loop {
        match excursion(&mut rng, beta == 0, w, half) {
            Some(o) => return o,
            None => beta += if rng.below(2) == 0 { 1 } else { -1 },
        }
    }
}

/// One excursion from the boundary line at offset 0. The x-range is `0..=w`
/// off the connecting row and `-half..=w` on it. At offset 0 the excursion
/// ends with probability 2/3 (off the row) or 1/2 (on it); otherwise the walk
/// steps horizontally. Returns the outcome if a line is reached.
fn excursion(rng: &mut CounterRng, on_alpha: bool, w: i64, half: i64) -> Option<TrialOutcome> {
    let mut x = 0i64;
    loop {
        if x == 0 {
            if on_alpha {
                match rng.below(4) {
                    0 | 1 => return None,
                    2 => x += 1,
                    _ => x -= 1,
                }
            } else {
                match rng.below(3) {
                    0 | 1 => return None,
                    _ => x += 1,
                }
            }
        } else {
            x += if rng.below(2) == 0 { 1 } else { -1 };
        }
        if x == w {
            return Some(TrialOutcome::Completion);
        }
        if x == -half {
            return Some(TrialOutcome::Hit);
        }
    }
}

/// Back-crossing probability from the excursion law alone (no lattice).
pub fn excursion_chain_en(n: u32, trials: u64, seed: StreamSeed) -> Result<EnEstimate> {
    if n == 0 {
        return Err(Error::Domain("back-crossing needs n >= 1".into()));
    }
    line_x(n + 1)?;
    let outcomes: Vec<TrialOutcome> = (0..trials).into_par_iter().map(|t| excursion_chain_trial(n, seed.trial(t))).collect();
    Ok(EnEstimate::from_outcomes(n, seed, 0, &outcomes))
}

/// Positively successful excursions among `excursions` consecutive
/// excursions of the teleporting chain at level `n`.
pub fn positive_excursion_rate(n: u32, excursions: u64, seed: StreamSeed) -> (u64, u64) {
    let mut rng = CounterRng::new(seed);
    let w = 1i64 << n;
    let half = w / 2;
    let mut beta = 0i64;
    let mut pos = 0;
    for _ in 0..excursions {
        match excursion(&mut rng, beta == 0, w, half) {
            Some(TrialOutcome::Completion) => {
                pos += 1;
                beta = teleport_row(&mut rng, beta);
            }
            Some(_) => beta = teleport_row(&mut rng, beta),
            None => beta += if rng.below(2) == 0 { 1 } else { -1 },
        }
    }
    (pos, excursions)
}

fn teleport_row(rng: &mut CounterRng, beta: i64) -> i64 {
    if rng.below(2) == 0 {
        beta + 1
    } else {
        beta - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeleportEstimate {
    pub n: u32,
    pub trials: u64,
    pub excursions_per_trial: u64,
    /// Trials in which none of the excursions was positively successful.
    pub f1c: u64,
    /// Trials in which some excursion was negatively successful.
    pub f2c: u64,
    pub p_f1c: f64,
    pub p_f2c: f64,
    pub ci_f1c: Option<(f64, f64)>,
    pub ci_f2c: Option<(f64, f64)>,
    pub seed: StreamSeed,
}

/// Teleporting chain: after a successful excursion the walk restarts on the
/// boundary line one row above or below at random. Each trial runs exactly
/// `3^n` excursions.
pub fn teleport_f1f2(n: u32, trials: u64, seed: StreamSeed) -> Result<TeleportEstimate> {
    if n == 0 || n > 8 {
        return Err(Error::Domain(format!("teleport chain needs 1 <= n <= 8, got {n}")));
    }
    let budget = 3u64.pow(n);
    let w = 1i64 << n;
    let half = w / 2;
    let flags: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = CounterRng::new(seed.trial(t));
            let (mut any_pos, mut any_neg) = (false, false);
            let mut beta = 0i64;
            for _ in 0..budget {
                match excursion(&mut rng, beta == 0, w, half) {
                    Some(o) => {
                        if o == TrialOutcome::Completion {
                            any_pos = true;
                        } else {
                            any_neg = true;
                        }
                        beta = teleport_row(&mut rng, beta);
                    }
                    None => beta += if rng.below(2) == 0 { 1 } else { -1 },
                }
            }
            (!any_pos, any_neg)
        })
        .collect();
    let f1c = flags.iter().filter(|f| f.0).count() as u64;
    let f2c = flags.iter().filter(|f| f.1).count() as u64;
    let frac = |k: u64| if trials == 0 { f64::NAN } else { k as f64 / trials as f64 };
    Ok(TeleportEstimate {
        n,
        trials,
        excursions_per_trial: budget,
        f1c,
        f2c,
        p_f1c: frac(f1c),
        p_f2c: frac(f2c),
        ci_f1c: wilson(f1c, trials, Z95),
        ci_f2c: wilson(f2c, trials, Z95),
        seed,
    })
}

/// Fit of `log p` against `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub slope_ci: (f64, f64),
}

impl DecayFit {
    /// Fitted per-level ratio `exp(slope)`.
    pub fn rate(&self) -> f64 {
        self.slope.exp()
    }
}

/// Least squares of `log p` on `n`. With `weights` the points are treated as
/// having known variances `1/w` (interval from the normal quantile);
/// otherwise an ordinary fit with a Student-t interval.
pub fn decay_fit_values(ns: &[f64], ps: &[f64], weights: Option<&[f64]>) -> Result<DecayFit> {
    if ns.len() != ps.len() {
        return Err(Error::Domain("fit inputs differ in length".into()));
    }
    let keep: Vec<usize> = (0..ns.len()).filter(|&i| ps[i] > 0.0 && ps[i].is_finite()).collect();
    if keep.len() < 3 {
        return Err(Error::InsufficientPoints { need: 3, have: keep.len() });
    }
    let xs: Vec<f64> = keep.iter().map(|&i| ns[i]).collect();
    let ys: Vec<f64> = keep.iter().map(|&i| ps[i]).collect();
    let logs: Vec<f64> = ys.iter().map(|p| p.ln()).collect();
    let (fit, ci) = match weights {
        Some(w) => {
            let ws: Vec<f64> = keep.iter().map(|&i| w[i]).collect();
            let f = weighted_line_fit(&xs, &logs, &ws, true)?;
            (f, f.slope_ci_z())
        }
        None => {
            let f = weighted_line_fit(&xs, &logs, &vec![1.0; xs.len()], false)?;
            (f, f.slope_ci_t())
        }
    };
    Ok(DecayFit { xs, ys, slope: fit.slope, intercept: fit.intercept, slope_se: fit.slope_se, slope_ci: ci })
}

/// Weighted fit over decided, nonzero estimates. The variance of `log p` at
/// each point is read off the width of its Wilson interval:
/// `((hi - lo) / (2 z p))^2`.
pub fn decay_fit(estimates: &[EnEstimate]) -> Result<DecayFit> {
    let usable: Vec<&EnEstimate> = estimates.iter().filter(|e| e.decided() > 0 && e.hits > 0).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientPoints { need: 3, have: usable.len() });
    }
    let ns: Vec<f64> = usable.iter().map(|e| e.n as f64).collect();
    let ps: Vec<f64> = usable.iter().map(|e| e.p_hat).collect();
    let ws: Vec<f64> = usable
        .iter()
        .map(|e| {
            let sd = (e.ci_hi() - e.ci_lo()) / (2.0 * Z95 * e.p_hat);
            1.0 / (sd * sd)
        })
        .collect();
    decay_fit_values(&ns, &ps, Some(&ws))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeFit {
    pub alpha: f64,
    pub ci: (f64, f64),
    pub ts: Vec<u64>,
    pub max_dist: Vec<u64>,
    /// The walk never left its start; alpha is reported as 0.
    pub degenerate: bool,
}

/// Growth exponent of the running maximum `D(t)` of the l1 distance from
/// the start: slope of `log(1 + D(t))` against `log(1 + t)` on a geometric
/// grid of about 20 times from `sqrt(len)` to `len`.
pub fn escape_exponent(tr: &WalkTranscript) -> Result<EscapeFit> {
    let positions = tr.positions();
    escape_exponent_positions(&positions)
}

pub fn escape_exponent_positions(positions: &[Site]) -> Result<EscapeFit> {
    let len = positions.len().saturating_sub(1);
    if len < 1000 {
        return Err(Error::Domain(format!("escape exponent needs at least 1000 letters, got {len}")));
    }
    let start = positions[0];
    let mut running = Vec::with_capacity(positions.len());
    let mut m = 0u64;
    for p in positions {
        let d: u64 = p.coords().iter().zip(start.coords()).map(|(a, b)| a.abs_diff(*b)).sum();
        m = m.max(d);
        running.push(m);
    }
    let t0 = (len as f64).sqrt().ceil();
    let points = 20;
    let ratio = (len as f64 / t0).powf(1.0 / (points - 1) as f64);
    let mut ts: Vec<u64> = (0..points).map(|i| (t0 * ratio.powi(i)).round() as u64).map(|t| t.min(len as u64)).collect();
    ts.dedup();
    let max_dist: Vec<u64> = ts.iter().map(|&t| running[t as usize]).collect();
    if running[len] == 0 {
        return Ok(EscapeFit { alpha: 0.0, ci: (0.0, 0.0), ts, max_dist, degenerate: true });
    }
    let xs: Vec<f64> = ts.iter().map(|&t| (1.0 + t as f64).ln()).collect();
    let ys: Vec<f64> = max_dist.iter().map(|&d| (1.0 + d as f64).ln()).collect();
    let fit = weighted_line_fit(&xs, &ys, &vec![1.0; xs.len()], false)?;
    Ok(EscapeFit { alpha: fit.slope, ci: fit.slope_ci_t(), ts, max_dist, degenerate: false })
}
