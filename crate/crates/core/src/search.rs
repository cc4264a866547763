//! Searching for the MAP clustering.
//!
//! [`greedy_map_search`] explores the full partition space with stochastic
//! move/split/merge proposals; [`brute_force_map`] enumerates every partition
//! for small `n`; [`restricted_map_search`] scores a fixed candidate set built
//! by heuristic clusterers ([`kmeans`], [`complete_linkage`]) over a range of
//! cluster counts.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{Clustering, ExpressionMatrix, Hyperparameters};
use crate::error::{Error, Result};
use crate::par;
use crate::partitions::RestrictedGrowth;
use crate::ppm::{
    ln_cluster_weight, log_crp_prior, log_posterior_score, log_prior_move_delta, ClusterStats,
};

/// Largest `n` accepted by [`brute_force_map`].
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Minimum score gain for a greedy proposal to be accepted.
const ACCEPT_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub seed: u64,
    /// A restart ends after this many consecutive sweeps without an accepted proposal.
    pub max_sweeps_without_improvement: usize,
    pub restarts: usize,
    /// Probabilities of proposing (move, split, merge).
    pub operator_mix: [f64; 3],
    /// Hard cap on sweeps per restart.
    pub max_sweeps: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_sweeps_without_improvement: 10,
            restarts: 3,
            operator_mix: [0.6, 0.2, 0.2],
            max_sweeps: 10_000,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Invalid("restarts must be at least 1".into()));
        }
        if self.operator_mix.iter().any(|&p| !(0.0..=1.0).contains(&p))
            || (self.operator_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Invalid(format!(
                "operator_mix must be probabilities summing to 1, got {:?}",
                self.operator_mix
            )));
        }
        if self.max_sweeps_without_improvement == 0 || self.max_sweeps == 0 {
            return Err(Error::Invalid("sweep limits must be positive".into()));
        }
        Ok(())
    }
}

/// How a greedy restart was initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    KMeans,
    Singletons,
    Single,
}

impl Init {
    fn for_restart(r: usize) -> Self {
        match r % 3 {
            0 => Init::KMeans,
            1 => Init::Singletons,
            _ => Init::Single,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RestartSummary {
    pub init: Init,
    pub clustering: Clustering,
    pub log_score: f64,
    pub sweeps: usize,
    /// Incumbent score after initialization and after every accepted proposal.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub clustering: Clustering,
    pub log_score: f64,
    pub restarts: Vec<RestartSummary>,
}

/// Stochastic greedy MAP search; returns the best clustering over all restarts.
pub fn greedy_map_search(
    d: &ExpressionMatrix,
    h: &Hyperparameters,
    cfg: &SearchConfig,
) -> Result<(Clustering, f64)> {
    let out = greedy_map_search_detailed(d, h, cfg)?;
    Ok((out.clustering, out.log_score))
}

pub fn greedy_map_search_detailed(
    d: &ExpressionMatrix,
    h: &Hyperparameters,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    h.validate()?;
    cfg.validate()?;
    let runs = par::map_range(cfg.restarts, |r| run_restart(d, h, cfg, r));
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    // Ties go to the earliest restart.
    let best = runs.iter().enumerate().fold(0, |best, (i, r)| {
        if r.log_score > runs[best].log_score {
            i
        } else {
            best
        }
    });
    Ok(SearchOutcome {
        clustering: runs[best].clustering.clone(),
        log_score: runs[best].log_score,
        restarts: runs,
    })
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn run_restart(
    d: &ExpressionMatrix,
    h: &Hyperparameters,
    cfg: &SearchConfig,
    restart: usize,
) -> Result<RestartSummary> {
    let n = d.n();
    let init = Init::for_restart(restart);
    let mut rng = restart_rng(cfg.seed, restart);
    let start = match init {
        Init::KMeans => kmeans(d, trivial_k(n), rng.random())?,
        Init::Singletons => Clustering::singletons(n),
        Init::Single => Clustering::single(n),
    };
    let mut state = GreedyState::new(d, h, &start);
    let mut trace = vec![state.score];
    let mut idle = 0;
    let mut sweeps = 0;
    while idle < cfg.max_sweeps_without_improvement && sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut accepted = false;
        for _ in 0..n {
            let u: f64 = rng.random();
            let gained = if u < cfg.operator_mix[0] {
                state.propose_move(&mut rng)
            } else if u < cfg.operator_mix[0] + cfg.operator_mix[1] {
                state.propose_split(&mut rng)
            } else {
                state.propose_merge(&mut rng)
            };
            if gained {
                accepted = true;
                trace.push(state.score);
            }
        }
        idle = if accepted { 0 } else { idle + 1 };
        state.refresh();
    }
    let clustering = state.clustering();
    let log_score = log_posterior_score(d, &clustering, h)?;
    Ok(RestartSummary {
        init,
        clustering,
        log_score,
        sweeps,
        trace,
    })
}

struct Slot {
    members: Vec<usize>,
    stats: ClusterStats,
    log_ml: f64,
}

/// Mutable search state with cached per-cluster marginals.
struct GreedyState<'a> {
    d: &'a ExpressionMatrix,
    h: &'a Hyperparameters,
    /// Slot id per item.
    labels: Vec<usize>,
    slots: Vec<Option<Slot>>,
    active: Vec<usize>,
    free: Vec<usize>,
    score: f64,
}

impl<'a> GreedyState<'a> {
    fn new(d: &'a ExpressionMatrix, h: &'a Hyperparameters, start: &Clustering) -> Self {
        let mut s = Self {
            d,
            h,
            labels: start.assignment().to_vec(),
            slots: Vec::new(),
            active: Vec::new(),
            free: Vec::new(),
            score: 0.0,
        };
        for block in start.blocks() {
            s.open(block);
        }
        s.score = s.recompute_score();
        s
    }

    fn make_slot(&self, members: Vec<usize>) -> Slot {
        let stats = ClusterStats::of_members(self.d, &members);
        let log_ml = stats.log_marginal_unchecked(self.h);
        Slot {
            members,
            stats,
            log_ml,
        }
    }

    fn open(&mut self, members: Vec<usize>) -> usize {
        let slot = self.make_slot(members);
        let id = match self.free.pop() {
            Some(id) => id,
            None => {
                self.slots.push(None);
                self.slots.len() - 1
            }
        };
        for &i in &slot.members {
            self.labels[i] = id;
        }
        self.slots[id] = Some(slot);
        self.active.push(id);
        id
    }

    fn close(&mut self, id: usize) {
        self.slots[id] = None;
        let pos = self.active.iter().position(|&a| a == id).unwrap();
        self.active.swap_remove(pos);
        self.free.push(id);
    }

    fn slot(&self, id: usize) -> &Slot {
        self.slots[id].as_ref().expect("active slot")
    }

    fn slot_mut(&mut self, id: usize) -> &mut Slot {
        self.slots[id].as_mut().expect("active slot")
    }

    fn clustering(&self) -> Clustering {
        Clustering::from_labels(&self.labels)
    }

    fn recompute_score(&self) -> f64 {
        let ml: f64 = self.active.iter().map(|&id| self.slot(id).log_ml).sum();
        ml + log_crp_prior(&self.clustering(), self.h.eta0)
    }

    /// Rebuilds cached statistics from scratch to shed accumulated rounding.
    fn refresh(&mut self) {
        for id in self.active.clone() {
            let members = std::mem::take(&mut self.slot_mut(id).members);
            let fresh = self.make_slot(members);
            self.slots[id] = Some(fresh);
        }
        self.score = self.recompute_score();
    }

    fn propose_move(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let n = self.labels.len();
        let i = rng.random_range(0..n);
        let from = self.labels[i];
        let from_size = self.slot(from).members.len();
        let others = self.active.len() - 1;
        let options = others + usize::from(from_size > 1);
        if options == 0 {
            return false;
        }
        let pick = rng.random_range(0..options);
        let target = if pick < others {
            let mut t = self.active[pick];
            if t == from {
                t = self.active[others];
            }
            Some(t)
        } else {
            None
        };

        let row = self.d.row(i);
        let src = self.slot(from);
        let src_after = (from_size > 1).then(|| {
            let mut s = src.stats.clone();
            s.remove(row);
            s
        });
        let src_ml_after = src_after
            .as_ref()
            .map_or(0.0, |s| s.log_marginal_unchecked(self.h));
        let (dst_after, dst_ml_before, to_size) = match target {
            Some(t) => {
                let dst = self.slot(t);
                let mut s = dst.stats.clone();
                s.push(row);
                (s, dst.log_ml, dst.members.len())
            }
            None => (ClusterStats::from_rows(self.d.p(), [row]), 0.0, 0),
        };
        let dst_ml_after = dst_after.log_marginal_unchecked(self.h);
        let delta = src_ml_after - src.log_ml + dst_ml_after - dst_ml_before
            + log_prior_move_delta(from_size, to_size, self.h.eta0);
        if delta <= ACCEPT_EPS {
            return false;
        }

        match src_after {
            Some(stats) => {
                let s = self.slot_mut(from);
                s.members.retain(|&m| m != i);
                s.stats = stats;
                s.log_ml = src_ml_after;
            }
            None => self.close(from),
        }
        match target {
            Some(t) => {
                let s = self.slot_mut(t);
                s.members.push(i);
                s.stats = dst_after;
                s.log_ml = dst_ml_after;
                self.labels[i] = t;
            }
            None => {
                self.open(vec![i]);
            }
        }
        self.score += delta;
        true
    }

    fn propose_split(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let splittable: Vec<usize> = self
            .active
            .iter()
            .copied()
            .filter(|&id| self.slot(id).members.len() > 1)
            .collect();
        if splittable.is_empty() {
            return false;
        }
        let id = splittable[rng.random_range(0..splittable.len())];
        let members = &self.slot(id).members;
        let m = members.len();
        let mut side: Vec<bool> = (0..m).map(|_| rng.random()).collect();
        let ones = side.iter().filter(|&&b| b).count();
        if ones == 0 || ones == m {
            let flip = rng.random_range(0..m);
            side[flip] = !side[flip];
        }
        let (a, b): (Vec<usize>, Vec<usize>) = {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (&item, &s) in members.iter().zip(&side) {
                if s {
                    b.push(item);
                } else {
                    a.push(item);
                }
            }
            (a, b)
        };
        let sa = self.make_slot(a);
        let sb = self.make_slot(b);
        let prior = self.h.eta0.ln()
            + ln_cluster_weight(sa.members.len())
            + ln_cluster_weight(sb.members.len())
            - ln_cluster_weight(m);
        let delta = sa.log_ml + sb.log_ml - self.slot(id).log_ml + prior;
        if delta <= ACCEPT_EPS {
            return false;
        }
        for &i in &sa.members {
            self.labels[i] = id;
        }
        self.slots[id] = Some(sa);
        self.open(sb.members);
        self.score += delta;
        true
    }

    fn propose_merge(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let k = self.active.len();
        if k < 2 {
            return false;
        }
        let x = rng.random_range(0..k);
        let mut y = rng.random_range(0..k - 1);
        if y >= x {
            y += 1;
        }
        let (a, b) = (self.active[x], self.active[y]);
        let (sa, sb) = (self.slot(a), self.slot(b));
        let merged = sa.stats.merged(&sb.stats);
        let merged_ml = merged.log_marginal_unchecked(self.h);
        let (na, nb) = (sa.members.len(), sb.members.len());
        let prior = -self.h.eta0.ln() + ln_cluster_weight(na + nb)
            - ln_cluster_weight(na)
            - ln_cluster_weight(nb);
        let delta = merged_ml - sa.log_ml - sb.log_ml + prior;
        if delta <= ACCEPT_EPS {
            return false;
        }
        let moved = std::mem::take(&mut self.slot_mut(b).members);
        self.close(b);
        for &i in &moved {
            self.labels[i] = a;
        }
        let s = self.slot_mut(a);
        s.members.extend(moved);
        s.stats = merged;
        s.log_ml = merged_ml;
        self.score += delta;
        true
    }
}

/// Exact MAP clustering by enumerating every partition (`n <= 12`).
///
/// Ties are resolved in favour of the lexicographically smallest canonical
/// labelling.
pub fn brute_force_map(d: &ExpressionMatrix, h: &Hyperparameters) -> Result<(Clustering, f64)> {
    let n = d.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    h.validate()?;
    let prefix_len = n.min(5);
    let prefixes: Vec<Vec<usize>> = RestrictedGrowth::new(prefix_len).collect();
    let best = par::map(&prefixes, |prefix| {
        let mut e = Enumerator::new(d, h);
        for (i, &c) in prefix.iter().enumerate() {
            e.assign(i, c);
        }
        e.dfs(prefix_len);
        (e.best_score, e.best)
    });
    let (score, labels) = best
        .into_iter()
        .fold((f64::NEG_INFINITY, Vec::new()), |acc, cand| {
            if cand.0 > acc.0 {
                cand
            } else {
                acc
            }
        });
    let clustering = Clustering::from_labels(&labels);
    Ok((clustering, score))
}

struct Enumerator<'a> {
    d: &'a ExpressionMatrix,
    h: &'a Hyperparameters,
    labels: Vec<usize>,
    clusters: Vec<ClusterStats>,
    best: Vec<usize>,
    best_score: f64,
    log_denominator: f64,
}

impl<'a> Enumerator<'a> {
    fn new(d: &'a ExpressionMatrix, h: &'a Hyperparameters) -> Self {
        let log_denominator = (1..=d.n()).map(|i| (h.eta0 + i as f64 - 1.0).ln()).sum();
        Self {
            d,
            h,
            labels: vec![0; d.n()],
            clusters: Vec::new(),
            best: Vec::new(),
            best_score: f64::NEG_INFINITY,
            log_denominator,
        }
    }

    fn assign(&mut self, i: usize, c: usize) {
        if c == self.clusters.len() {
            self.clusters.push(ClusterStats::empty(self.d.p()));
        }
        self.clusters[c].push(self.d.row(i));
        self.labels[i] = c;
    }

    fn leaf_score(&self) -> f64 {
        let k = self.clusters.len() as f64;
        let mut score = k * self.h.eta0.ln() - self.log_denominator;
        for c in &self.clusters {
            score += ln_cluster_weight(c.count()) + c.log_marginal_unchecked(self.h);
        }
        score
    }

    fn dfs(&mut self, i: usize) {
        if i == self.d.n() {
            let score = self.leaf_score();
            if score > self.best_score {
                self.best_score = score;
                self.best = self.labels.clone();
            }
            return;
        }
        let k = self.clusters.len();
        for c in 0..=k {
            let saved = self.clusters.get(c).cloned();
            self.assign(i, c);
            self.dfs(i + 1);
            match saved {
                Some(s) => self.clusters[c] = s,
                None => {
                    self.clusters.pop();
                }
            }
        }
    }
}

/// Smallest integer `r` with `r * r >= n`.
pub fn ceil_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// Cluster count of the single-candidate space: `ceil(sqrt(n) / 2)`.
pub fn trivial_k(n: usize) -> usize {
    let mut r = 1;
    while 4 * r * r < n {
        r += 1;
    }
    r.min(n.max(1))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub clustering: Clustering,
    /// Within-cluster sum of squares after every centroid update.
    pub sse_trace: Vec<f64>,
    pub iterations: usize,
}

const KMEANS_MAX_ITER: usize = 300;

/// Lloyd's k-means from a k-means++ seeding.
pub fn kmeans(d: &ExpressionMatrix, k: usize, seed: u64) -> Result<Clustering> {
    Ok(kmeans_detailed(d, k, seed)?.clustering)
}

pub fn kmeans_detailed(d: &ExpressionMatrix, k: usize, seed: u64) -> Result<KMeansFit> {
    let n = d.n();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let p = d.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding; falls back to uniform over unused points when all
    // remaining points coincide with a centroid.
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids: Vec<Vec<f64>> = vec![d.row(first).to_vec()];
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(d.row(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            let unused: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen[next] = true;
        let c = d.row(next).to_vec();
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(squared_distance(d.row(i), &c));
        }
        centroids.push(c);
    }

    let mut labels = vec![usize::MAX; n];
    let mut sse_trace = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        for (label, row) in labels.iter_mut().zip(d.rows()) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let dist = squared_distance(row, centroid);
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        repair_empty(d, &mut labels, &mut centroids);
        update_centroids(d, &labels, &mut centroids, p);
        sse_trace.push(
            (0..n)
                .map(|i| squared_distance(d.row(i), &centroids[labels[i]]))
                .sum(),
        );
        if !changed || iterations >= KMEANS_MAX_ITER {
            break;
        }
    }
    Ok(KMeansFit {
        clustering: Clustering::from_labels(&labels),
        sse_trace,
        iterations,
    })
}

/// Gives every empty cluster the point farthest from its centroid, taken
/// from clusters that have more than one member.
fn repair_empty(d: &ExpressionMatrix, labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for e in 0..k {
        if sizes[e] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] > 1 {
                let dist = squared_distance(d.row(i), &centroids[l]);
                if dist > far_d {
                    far_d = dist;
                    far = Some(i);
                }
            }
        }
        let i = far.expect("k <= n leaves a cluster with spare members");
        sizes[labels[i]] -= 1;
        labels[i] = e;
        sizes[e] = 1;
        centroids[e] = d.row(i).to_vec();
    }
}

fn update_centroids(d: &ExpressionMatrix, labels: &[usize], centroids: &mut [Vec<f64>], p: usize) {
    let k = centroids.len();
    let mut sums = vec![vec![0.0; p]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(d.row(i)) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for (dst, s) in centroids[c].iter_mut().zip(&sums[c]) {
                *dst = s / counts[c] as f64;
            }
        }
    }
}

/// Complete-linkage merge sequence over Euclidean distances.
///
/// Clusters are identified by their smallest member; each merge `(a, b)` has
/// `a < b` and the merged cluster keeps id `a`. Ties go to the smallest pair.
pub fn complete_linkage_merges(d: &ExpressionMatrix) -> Vec<(usize, usize)> {
    let n = d.n();
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = squared_distance(d.row(i), d.row(j)).sqrt();
            dist[i * n + j] = v;
            dist[j * n + i] = v;
        }
    }
    let mut active = vec![true; n];
    // nn[i]: closest active j > i (smallest j on ties).
    let row_min = |dist: &[f64], active: &[bool], i: usize| -> Option<usize> {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for j in i + 1..n {
            if active[j] && dist[i * n + j] < best_d {
                best_d = dist[i * n + j];
                best = Some(j);
            }
        }
        best
    };
    let mut nn: Vec<Option<usize>> = (0..n).map(|i| row_min(&dist, &active, i)).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut pick: Option<(usize, usize)> = None;
        let mut pick_d = f64::INFINITY;
        for i in 0..n {
            if let (true, Some(j)) = (active[i], nn[i]) {
                if dist[i * n + j] < pick_d {
                    pick_d = dist[i * n + j];
                    pick = Some((i, j));
                }
            }
        }
        let (a, b) = pick.expect("at least two active clusters");
        merges.push((a, b));
        active[b] = false;
        for x in 0..n {
            if active[x] && x != a {
                let v = dist[a * n + x].max(dist[b * n + x]);
                dist[a * n + x] = v;
                dist[x * n + a] = v;
            }
        }
        for i in 0..n {
            if !active[i] {
                continue;
            }
            // Other rows keep their minimum: d(i, a) can only have grown.
            if i == a || nn[i] == Some(a) || nn[i] == Some(b) {
                nn[i] = row_min(&dist, &active, i);
            }
        }
    }
    merges
}

/// Cuts a merge sequence over `n` items at `k` clusters.
pub fn cut_merges(n: usize, merges: &[(usize, usize)], k: usize) -> Result<Clustering> {
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in &merges[..n - k] {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[rb] = ra;
    }
    let labels: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    Ok(Clustering::from_labels(&labels))
}

/// Agglomerative complete-linkage clustering cut at `k` clusters.
pub fn complete_linkage(d: &ExpressionMatrix, k: usize) -> Result<Clustering> {
    let n = d.n();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    cut_merges(n, &complete_linkage_merges(d), k)
}

/// Heuristic clusterers available for candidate generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heuristic {
    KMeans,
    CompleteLinkage,
}

/// Cluster counts to sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KRange {
    /// `2..=ceil(sqrt(n))`, clamped to `1..=n`.
    Default,
    /// The single value `ceil(sqrt(n) / 2)`.
    Trivial,
    Explicit(RangeInclusive<usize>),
}

impl KRange {
    pub fn values(&self, n: usize) -> Result<Vec<usize>> {
        let range = match self {
            KRange::Default => {
                let hi = ceil_sqrt(n).min(n);
                2.min(hi)..=hi
            }
            KRange::Trivial => {
                let k = trivial_k(n);
                k..=k
            }
            KRange::Explicit(r) => r.clone(),
        };
        if range.is_empty() || *range.start() == 0 || *range.end() > n {
            return Err(Error::Invalid(format!(
                "k range {range:?} not within 1..={n}"
            )));
        }
        Ok(range.collect())
    }
}

/// One clustering per (algorithm, k), algorithm-major.
pub fn candidate_sweep(
    d: &ExpressionMatrix,
    algorithms: &[Heuristic],
    k_range: &KRange,
    seed: u64,
) -> Result<Vec<Clustering>> {
    if algorithms.is_empty() {
        return Err(Error::Invalid("no clustering algorithms given".into()));
    }
    let ks = k_range.values(d.n())?;
    let mut out = Vec::with_capacity(algorithms.len() * ks.len());
    for alg in algorithms {
        match alg {
            Heuristic::KMeans => {
                let fits = par::map(&ks, |&k| kmeans(d, k, seed));
                for f in fits {
                    out.push(f?);
                }
            }
            Heuristic::CompleteLinkage => {
                let merges = complete_linkage_merges(d);
                for &k in &ks {
                    out.push(cut_merges(d.n(), &merges, k)?);
                }
            }
        }
    }
    Ok(out)
}

/// Best-scoring candidate; ties go to the earliest in list order.
pub fn restricted_map_search(
    d: &ExpressionMatrix,
    candidates: &[Clustering],
    h: &Hyperparameters,
) -> Result<(Clustering, f64)> {
    if candidates.is_empty() {
        return Err(Error::Invalid("empty candidate list".into()));
    }
    let scores = par::map(candidates, |c| log_posterior_score(d, c, h));
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        let s = s?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    let (i, s) = best.expect("non-empty");
    Ok((candidates[i].clone(), s))
}
