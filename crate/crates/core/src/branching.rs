//! Branching random walks with the reduced offspring law, Galton-Watson
//! population growth, recurrence certificates on tiny boxes, and the
//! displacement and Chernoff bounds used alongside them.
//!
//! Each time step first lets every particle branch (a child starts at its
//! parent's current site), then moves every particle by one uniform letter
//! under induced-walk semantics. Particles persist; "one child with
//! probability eps" means one additional particle.
//!
//! Randomness is keyed per particle: the root reads the letters of the tree
//! seed itself, particle `p > 0` reads `seed.family(MOVE_TAG, p)`, and the
//! branching coin of particle `p` at age `a` is word `a` of
//! `seed.family(COIN_TAG, p)`. Trajectories are therefore regenerated on
//! demand instead of stored.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{canonical_edge, reachable_sites, BoundingBox, Direction, EdgeOracle, EdgeState, FiniteSubgraph, Site, SubgraphOracle};
use crate::stream::{CounterRng, LetterStream, StreamSeed};
use crate::walk::{induced_step, WalkState};

pub const MOVE_TAG: u64 = 0x6d6f_7665;
pub const COIN_TAG: u64 = 0x636f_696e;

/// Law of the number of extra children per particle per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    probs: Vec<f64>,
}

impl OffspringLaw {
    /// One extra child with probability `eps`, none otherwise.
    pub fn reduced(eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::Domain(format!("eps must lie in [0, 1], got {eps}")));
        }
        Ok(OffspringLaw { probs: vec![1.0 - eps, eps] })
    }

    /// General law: `probs[c]` is the probability of `c` extra children.
    pub fn general(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Domain("offspring probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("offspring probabilities sum to {total}")));
        }
        Ok(OffspringLaw { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Mean number of extra children.
    pub fn mean_extra(&self) -> f64 {
        self.probs.iter().enumerate().map(|(c, p)| c as f64 * p).sum()
    }

    /// Extra-children count for a uniform `u` in `[0, 1)`.
    #[inline]
    fn count_for(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (c, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return c;
            }
        }
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// Galton-Watson population `N_0..=N_j` with `N_0 = 1`. Increments are drawn
/// as binomial splits of the current population.
pub fn gw_population(j: usize, law: &OffspringLaw, seed: StreamSeed, cap: u64) -> Result<Vec<u64>> {
    let mut rng = CounterRng::new(seed);
    let mut pop = Vec::with_capacity(j + 1);
    pop.push(1u64);
    let mut n = 1u64;
    for time in 1..=j {
        let mut left = n;
        let mut rest = 1.0;
        let mut extra = 0u64;
        for (c, &p) in law.probs.iter().enumerate().skip(1) {
            if left == 0 || rest <= 0.0 {
                break;
            }
            let q = (p / rest).clamp(0.0, 1.0);
            let k = Binomial::new(left, q).map_err(|e| Error::Domain(e.to_string()))?.sample(&mut rng);
            extra += k * c as u64;
            left -= k;
            rest -= p;
        }
        n += extra;
        if n > cap {
            return Err(Error::PopulationCap { cap, time, partial: pop });
        }
        pop.push(n);
    }
    Ok(pop)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Particle {
    pub id: usize,
    pub parent: Option<usize>,
    /// Time step during which the particle was born; it moves in that step.
    pub birth_time: u64,
}

/// Genealogy of a branching walk. Positions are not stored; see
/// [`ParticleTree::trajectory`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleTree {
    pub seed: StreamSeed,
    pub dim: usize,
    pub law: OffspringLaw,
    pub horizon: u64,
    pub cap: usize,
    pub particles: Vec<Particle>,
    /// `population[j]` is the number of particles alive at time `j`.
    pub population: Vec<u64>,
    /// Births stopped because the particle cap was reached.
    pub truncated: bool,
    /// First time step at which a birth was suppressed.
    pub truncated_at: Option<u64>,
    children: Vec<Vec<usize>>,
}

impl ParticleTree {
    /// Letter stream of particle `p`.
    pub fn letters(&self, p: usize) -> LetterStream {
        let s = if p == 0 { self.seed } else { self.seed.family(MOVE_TAG, p as u64) };
        LetterStream::new(s, self.dim)
    }

    pub fn children(&self, p: usize) -> &[usize] {
        &self.children[p]
    }

    /// Ancestors of `p` from the root down to `p` itself.
    pub fn lineage(&self, p: usize) -> Vec<usize> {
        let mut v = vec![p];
        let mut cur = p;
        while let Some(q) = self.particles[cur].parent {
            v.push(q);
            cur = q;
        }
        v.reverse();
        v
    }

    /// Sites visited by the branch ending in particle `p` at times
    /// `0..=until`: the root's path until the next ancestor is born, then that
    /// ancestor's, and so on.
    pub fn trajectory<O: EdgeOracle + ?Sized>(&self, p: usize, oracle: &O, until: u64) -> Result<Vec<Site>> {
        let line = self.lineage(p);
        let mut st = WalkState::at(Site::origin(self.dim)?);
        let mut out = Vec::with_capacity(until as usize + 1);
        out.push(st.pos);
        let mut env = OracleRef(oracle);
        for (k, &q) in line.iter().enumerate() {
            let end = line.get(k + 1).map_or(until, |&c| self.particles[c].birth_time.min(until));
            let mut letters = self.letters(q);
            let mut t = self.particles[q].birth_time;
            while t < end {
                induced_step(&mut st, letters.next_letter(), &mut env)?;
                out.push(st.pos);
                t += 1;
            }
        }
        Ok(out)
    }
}

struct OracleRef<'a, O: ?Sized>(&'a O);

impl<O: EdgeOracle + ?Sized> crate::walk::EdgeResolver for OracleRef<'_, O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[inline]
    fn resolve(&mut self, pos: &Site, dir: Direction, _t: u64) -> Result<EdgeState> {
        Ok(self.0.query(&canonical_edge(pos, dir)?))
    }
}

/// Grow the genealogy of a branching walk for `horizon` steps. Births stop
/// (and the tree is flagged truncated) once `particle_cap` particles exist.
pub fn run_branching(
    seed: StreamSeed,
    d: usize,
    law: &OffspringLaw,
    horizon: u64,
    particle_cap: usize,
    oracle: &SubgraphOracle,
) -> Result<ParticleTree> {
    if particle_cap == 0 {
        return Err(Error::Domain("particle cap must be positive".into()));
    }
    if oracle.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: oracle.dim() });
    }
    if d == 0 || d > crate::lattice::MAX_DIM {
        return Err(Error::UnsupportedDimension(d));
    }
    let mut particles = vec![Particle { id: 0, parent: None, birth_time: 0 }];
    let mut children = vec![Vec::new()];
    let mut coin_keys = vec![CounterRng::new(seed.family(COIN_TAG, 0))];
    let mut population = Vec::with_capacity(horizon as usize + 1);
    population.push(1u64);
    let mut truncated_at = None;
    let branching = law.probs.len() > 1 && law.probs[0] < 1.0;
    for j in 0..horizon {
        if branching && truncated_at.is_none() {
            let alive = particles.len();
            'births: for p in 0..alive {
                let age = j - particles[p].birth_time;
                let u = (coin_keys[p].word_at(age) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                for _ in 0..law.count_for(u) {
                    if particles.len() >= particle_cap {
                        truncated_at = Some(j);
                        break 'births;
                    }
                    let id = particles.len();
                    particles.push(Particle { id, parent: Some(p), birth_time: j });
                    children.push(Vec::new());
                    children[p].push(id);
                    coin_keys.push(CounterRng::new(seed.family(COIN_TAG, id as u64)));
                }
            }
        }
        population.push(particles.len() as u64);
    }
    Ok(ParticleTree {
        seed,
        dim: d,
        law: law.clone(),
        horizon,
        cap: particle_cap,
        particles,
        population,
        truncated: truncated_at.is_some(),
        truncated_at,
        children,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrenceCertificate {
    pub reachable: usize,
    pub certified: bool,
    pub r: u64,
    pub horizon: u64,
    pub witness: Option<usize>,
    /// Branches examined before deciding.
    pub branches_checked: usize,
}

/// Does some branch of `tree` visit every site reachable from the origin in
/// `graph` at least `r` times at times `1..=horizon`? Branches are examined
/// in particle-id order; each particle's walk is simulated once, handing the
/// visit counts at each child's birth down to the child.
pub fn recurrence_certificate(tree: &ParticleTree, graph: &FiniteSubgraph, r: u64, horizon: u64) -> Result<RecurrenceCertificate> {
    if horizon > tree.horizon {
        return Err(Error::Domain(format!("horizon {horizon} exceeds the tree's {}", tree.horizon)));
    }
    let bbox = graph.bbox();
    let origin = Site::origin(tree.dim)?;
    let reach = reachable_sites(graph, &origin, bbox)?;
    let targets: Vec<usize> = reach.iter().map(|s| bbox.index_of(s).expect("reachable sites lie in the box")).collect();
    let mut cert = RecurrenceCertificate { reachable: reach.len(), certified: false, r, horizon, witness: None, branches_checked: 0 };
    if r == 0 {
        cert.certified = true;
        cert.witness = Some(0);
        return Ok(cert);
    }
    if r.saturating_mul(reach.len() as u64) > horizon {
        return Ok(cert);
    }
    let done = |counts: &[u64]| targets.iter().all(|&i| counts[i] >= r);
    let mut handoff: Vec<Option<(Vec<u64>, WalkState)>> = vec![None; tree.particles.len()];
    handoff[0] = Some((vec![0; bbox.num_sites()], WalkState::at(origin)));
    let mut env = OracleRef(graph);
    for p in 0..tree.particles.len() {
        let Some((mut counts, mut st)) = handoff[p].take() else { continue };
        cert.branches_checked += 1;
        let kids = tree.children(p);
        let mut next_kid = 0;
        let mut letters = tree.letters(p);
        let mut t = tree.particles[p].birth_time;
        while t < horizon {
            while next_kid < kids.len() && tree.particles[kids[next_kid]].birth_time == t {
                handoff[kids[next_kid]] = Some((counts.clone(), st));
                next_kid += 1;
            }
            induced_step(&mut st, letters.next_letter(), &mut env)?;
            t += 1;
            let i = bbox.index_of(&st.pos).expect("walk stays in the box");
            counts[i] += 1;
        }
        if done(&counts) {
            cert.certified = true;
            cert.witness = Some(p);
            return Ok(cert);
        }
    }
    Ok(cert)
}

/// One row of the tiny-box sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub subgraph_id: u64,
    pub edges_bitmask: u64,
    pub seed: StreamSeed,
    pub particles: usize,
    pub truncated: bool,
    pub certificate: RecurrenceCertificate,
}

/// Certify every spanning subgraph of `bbox` (edges outside the box absent).
/// Subgraph `id` has edge `i` of [`BoundingBox::interior_edges`] present iff
/// bit `i` of `id` is set and runs on seed `seed.trial(id)`.
pub fn tiny_box_sweep(
    bbox: &BoundingBox,
    law: &OffspringLaw,
    horizon: u64,
    particle_cap: usize,
    r: u64,
    seed: StreamSeed,
) -> Result<Vec<SweepRow>> {
    let n_edges = bbox.interior_edges().len();
    if n_edges > 16 {
        return Err(Error::Domain(format!("box has {n_edges} interior edges, at most 16 allowed")));
    }
    if !bbox.contains(&Site::origin(bbox.dim())?) {
        return Err(Error::Domain("box must contain the origin".into()));
    }
    (0..1u64 << n_edges)
        .into_par_iter()
        .map(|id| sweep_one(bbox, law, horizon, particle_cap, r, seed, id))
        .collect()
}

/// Re-run a single row of [`tiny_box_sweep`].
pub fn sweep_one(
    bbox: &BoundingBox,
    law: &OffspringLaw,
    horizon: u64,
    particle_cap: usize,
    r: u64,
    seed: StreamSeed,
    id: u64,
) -> Result<SweepRow> {
    let g = FiniteSubgraph::from_mask(bbox.clone(), id);
    let s = seed.trial(id);
    let oracle = SubgraphOracle::ExplicitFinite(g);
    let tree = run_branching(s, bbox.dim(), law, horizon, particle_cap, &oracle)?;
    let g = oracle.as_finite().expect("explicit");
    let certificate = recurrence_certificate(&tree, g, r, horizon)?;
    Ok(SweepRow { subgraph_id: id, edges_bitmask: id, seed: s, particles: tree.particles.len(), truncated: tree.truncated, certificate })
}

/// Right-hand side `2 sqrt(deg y / deg x) exp(-rho^2 / 2t)` with `rho` the
/// graph distance.
pub fn carne_bound(graph: &FiniteSubgraph, x: &Site, y: &Site, t: u64) -> Result<f64> {
    if x == y {
        return Ok(2.0);
    }
    let rho = graph.distance(x, y).ok_or(Error::Disconnected(*x, *y))?;
    let (dx, dy) = (graph.degree(x), graph.degree(y));
    if dx == 0 {
        return Err(Error::ZeroDegree(*x));
    }
    if dy == 0 {
        return Err(Error::ZeroDegree(*y));
    }
    if t == 0 {
        return Ok(0.0);
    }
    let rho = rho as f64;
    Ok(2.0 * (dy as f64 / dx as f64).sqrt() * (-rho * rho / (2.0 * t as f64)).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementTail {
    pub trials: u64,
    pub exceed: u64,
    pub empirical: f64,
    pub bound: f64,
    pub delta: f64,
    pub n: u64,
    pub d: usize,
}

/// Empirical `P(dist(0, S_n) > delta n)` for the simple random walk on the
/// graph (uniform over present edges at each step) against
/// `sqrt(8d) (2n+1)^d exp(-delta^2 n / 2)`.
pub fn displacement_tail_check(graph: &SubgraphOracle, delta: f64, n: u64, trials: u64, seed: StreamSeed) -> Result<DisplacementTail> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    let d = graph.dim();
    let origin = Site::origin(d)?;
    let dist = graph.as_finite().map(|g| g.distances_from(&origin));
    let threshold = delta * n as f64;
    let exceed: u64 = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<u64> {
            let end = srw_endpoint(graph, &origin, n, seed.trial(t))?;
            let dd = match (&dist, graph.as_finite()) {
                (Some(dv), Some(g)) => dv[g.bbox().index_of(&end).expect("in box")].expect("reachable") as f64,
                _ => end.l1_norm() as f64,
            };
            Ok(u64::from(dd > threshold))
        })
        .sum::<Result<u64>>()?;
    let bound = (8.0 * d as f64).sqrt() * ((2 * n + 1) as f64).powi(d as i32) * (-delta * delta * n as f64 / 2.0).exp();
    let empirical = if trials == 0 { f64::NAN } else { exceed as f64 / trials as f64 };
    Ok(DisplacementTail { trials, exceed, empirical, bound, delta, n, d })
}

/// Endpoint of an `n`-step simple random walk on `graph` from `start`;
/// an isolated site stays put.
pub fn srw_endpoint(graph: &SubgraphOracle, start: &Site, n: u64, seed: StreamSeed) -> Result<Site> {
    let mut rng = CounterRng::new(seed);
    let mut pos = *start;
    match graph {
        SubgraphOracle::FullLattice { dim } => {
            let mut letters = LetterStream::new(seed, *dim);
            for _ in 0..n {
                let l = letters.next_letter();
                pos = pos.offset(l.axis(), l.sign())?;
            }
        }
        SubgraphOracle::ExplicitFinite(g) => {
            for _ in 0..n {
                let nb = g.neighbors(&pos);
                if nb.is_empty() {
                    break;
                }
                pos = nb[rng.below(nb.len() as u64) as usize];
            }
        }
    }
    Ok(pos)
}

/// `exp(-eps^2 n p / 2)`.
pub fn chernoff_bound(n: u64, p: f64, eps: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p must lie in (0, 1), got {p}")));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    Ok((-eps * eps * n as f64 * p / 2.0).exp())
}

/// `P(Bin(n, p) <= k)` by direct summation of the probability mass.
pub fn binomial_cdf(n: u64, p: f64, k: u64) -> f64 {
    let q = 1.0 - p;
    let mut term = q.powi(n as i32);
    let mut sum = 0.0;
    for i in 0..=k.min(n) {
        if i > 0 {
            term *= (n - i + 1) as f64 / i as f64 * p / q;
        }
        sum += term;
    }
    sum.min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernoffRow {
    pub n: u64,
    pub p: f64,
    pub eps: f64,
    pub threshold: u64,
    pub exact: f64,
    pub bound: f64,
}

impl ChernoffRow {
    pub fn holds(&self) -> bool {
        self.exact <= self.bound
    }
}

/// Exact lower tails `P(Bin(n, p) <= n p (1 - eps))` against the bound for
/// `n` in `0..=n_max` and `p, eps` in tenths. The threshold is computed in
/// integers: `floor(n a (10 - b) / 100)` for `p = a/10`, `eps = b/10`.
pub fn chernoff_grid(n_max: u64) -> Vec<ChernoffRow> {
    let mut rows = Vec::new();
    for n in 0..=n_max {
        for a in 1..=9u64 {
            for b in 1..=9u64 {
                let p = a as f64 / 10.0;
                let eps = b as f64 / 10.0;
                let threshold = n * a * (10 - b) / 100;
                let exact = binomial_cdf(n, p, threshold);
                let bound = chernoff_bound(n, p, eps).expect("grid values are in range");
                rows.push(ChernoffRow { n, p, eps, threshold, exact, bound });
            }
        }
    }
    rows
}
