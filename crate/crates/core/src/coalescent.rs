//! The Bolthausen–Sznitman coalescent restricted to `n` labels.
//!
//! Labels are `0..n`. A block is identified by its smallest label. With `b`
//! blocks present, every `k`-subset merges at rate
//! `λ_{b,k} = (k-2)!(b-k)!/(b-1)!`, so the total rate is `b - 1` and the size
//! of the next merger has law `P(k) = b / (k(k-1)(b-1))`.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::parallel::map_units;
use crate::rng::{stream, tasks, SimRng};
use crate::{Error, Result};

pub const MAX_LABELS: usize = 10_000;

/// `λ_{b,k}`, the rate at which one particular `k`-subset of `b` blocks merges.
pub fn merger_rate(b: usize, k: usize) -> f64 {
    assert!(2 <= k && k <= b, "need 2 <= k <= b");
    // (k-2)!(b-k)!/(b-1)! = 1 / ((b-1) C(b-2, k-2))
    let ln_binom = ln_factorial(b - 2) - ln_factorial(k - 2) - ln_factorial(b - k);
    (-(((b - 1) as f64).ln() + ln_binom)).exp()
}

/// Total merger rate with `b` blocks.
pub fn total_rate(b: usize) -> f64 {
    b.saturating_sub(1) as f64
}

/// Probability that the next merger with `b` blocks involves `k` of them.
pub fn merger_size_probability(b: usize, k: usize) -> f64 {
    if k < 2 || k > b {
        return 0.0;
    }
    b as f64 / ((k * (k - 1) * (b - 1)) as f64)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Inverse of `F(k) = b/(b-1) (1 - 1/k)`.
fn sample_merger_size(b: usize, rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let k = (1.0 / (1.0 - u * (b - 1) as f64 / b as f64)).ceil();
    (k as usize).clamp(2, b)
}

/// Disjoint blocks covering `0..n`, each sorted, ordered by smallest label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = blocks.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        for block in &mut blocks {
            if block.is_empty() {
                return Err(Error::invalid("empty block"));
            }
            block.sort_unstable();
            for &i in block.iter() {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::invalid(format!("label {i} repeated or out of range")));
                }
            }
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Self { blocks })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            blocks: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Number of labels.
    pub fn n(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }
}

/// One merger: at `time` the blocks identified by `merged` (smallest labels,
/// ascending) become one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, Vec<usize>)", into = "(f64, Vec<usize>)")]
pub struct MergerEvent {
    pub time: f64,
    pub merged: Vec<usize>,
}

impl From<(f64, Vec<usize>)> for MergerEvent {
    fn from((time, merged): (f64, Vec<usize>)) -> Self {
        Self { time, merged }
    }
}

impl From<MergerEvent> for (f64, Vec<usize>) {
    fn from(e: MergerEvent) -> Self {
        (e.time, e.merged)
    }
}

/// A completed run, serialised as `{"n": 3, "events": [[0.4, [0, 1]], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RunRecord", into = "RunRecord")]
pub struct CoalescentRun {
    n: usize,
    events: Vec<MergerEvent>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRecord {
    n: usize,
    events: Vec<MergerEvent>,
}

impl TryFrom<RunRecord> for CoalescentRun {
    type Error = Error;
    fn try_from(r: RunRecord) -> Result<Self> {
        CoalescentRun::from_events(r.n, r.events)
    }
}

impl From<CoalescentRun> for RunRecord {
    fn from(r: CoalescentRun) -> Self {
        Self {
            n: r.n,
            events: r.events,
        }
    }
}

/// Block count, holding time and merger size of one step of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub blocks: usize,
    pub wait: f64,
    pub size: usize,
}

impl CoalescentRun {
    /// Validates a recorded run: increasing positive times, each event merges
    /// at least two current blocks, and the run ends in a single block.
    pub fn from_events(n: usize, events: Vec<MergerEvent>) -> Result<Self> {
        if n == 0 || n > MAX_LABELS {
            return Err(Error::invalid(format!("label count {n} outside 1..={MAX_LABELS}")));
        }
        let mut alive = vec![true; n];
        let mut blocks = n;
        let mut last = 0.0;
        for e in &events {
            if !(e.time > last) || !e.time.is_finite() {
                return Err(Error::invalid("event times must be positive and strictly increasing"));
            }
            last = e.time;
            if e.merged.len() < 2 || e.merged.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("an event merges at least two distinct blocks, listed ascending"));
            }
            for &id in &e.merged {
                if id >= n || !alive[id] {
                    return Err(Error::invalid(format!("block {id} does not exist at time {}", e.time)));
                }
            }
            for &id in &e.merged[1..] {
                alive[id] = false;
            }
            blocks -= e.merged.len() - 1;
        }
        if blocks != 1 {
            return Err(Error::invalid(format!("run ends with {blocks} blocks")));
        }
        Ok(Self { n, events })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn events(&self) -> &[MergerEvent] {
        &self.events
    }

    pub fn steps(&self) -> impl Iterator<Item = Step> + '_ {
        let mut blocks = self.n;
        let mut last = 0.0;
        self.events.iter().map(move |e| {
            let step = Step {
                blocks,
                wait: e.time - last,
                size: e.merged.len(),
            };
            blocks -= e.merged.len() - 1;
            last = e.time;
            step
        })
    }

    /// `τ_ij` as a row-major `n × n` matrix.
    pub fn coalescence_times(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut tau = vec![vec![0.0; n]; n];
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for e in &self.events {
            let mut union = std::mem::take(&mut members[e.merged[0]]);
            for &id in &e.merged[1..] {
                let other = std::mem::take(&mut members[id]);
                for &a in &union {
                    for &b in &other {
                        tau[a][b] = e.time;
                        tau[b][a] = e.time;
                    }
                }
                union.extend(other);
            }
            members[e.merged[0]] = union;
        }
        tau
    }

    /// `Γ(t)`: the partition after every event with time `≤ t`.
    pub fn partition_at(&self, t: f64) -> Partition {
        let mut members: Vec<Vec<usize>> = (0..self.n).map(|i| vec![i]).collect();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            for &id in &e.merged[1..] {
                let other = std::mem::take(&mut members[id]);
                members[e.merged[0]].extend(other);
            }
        }
        Partition::new(members.into_iter().filter(|b| !b.is_empty()).collect())
            .expect("replayed partition is valid")
    }
}

/// Runs the coalescent from singletons on `n` labels until one block remains.
pub fn simulate_bs_coalescent(n: usize, rng: &mut SimRng) -> Result<CoalescentRun> {
    if n > MAX_LABELS {
        return Err(Error::Capacity {
            what: "coalescent labels",
            requested: n,
            limit: MAX_LABELS,
        });
    }
    if n == 0 {
        return Err(Error::invalid("coalescent needs at least one label"));
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut events = Vec::with_capacity(n - 1);
    let mut t = 0.0;
    while active.len() >= 2 {
        let b = active.len();
        let e: f64 = rng.sample(Exp1);
        t += e / total_rate(b);
        let k = sample_merger_size(b, rng);
        for i in 0..k {
            let j = rng.random_range(i..b);
            active.swap(i, j);
        }
        let mut merged: Vec<usize> = active.drain(..k).collect();
        merged.sort_unstable();
        active.push(merged[0]);
        events.push(MergerEvent { time: t, merged });
    }
    Ok(CoalescentRun { n, events })
}

/// Aggregated holding times and merger sizes at one block count.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCountStats {
    pub blocks: usize,
    /// Number of runs that passed through `blocks` blocks.
    pub visits: u64,
    pub wait_sum: f64,
    pub wait_sum_sq: f64,
    /// `merger_counts[k]` is the number of `k`-mergers; indices `0, 1` unused.
    pub merger_counts: Vec<u64>,
}

impl BlockCountStats {
    fn new(blocks: usize) -> Self {
        Self {
            blocks,
            visits: 0,
            wait_sum: 0.0,
            wait_sum_sq: 0.0,
            merger_counts: vec![0; blocks + 1],
        }
    }

    /// Mean holding time and its standard error.
    pub fn mean_wait(&self) -> (f64, f64) {
        let n = self.visits as f64;
        if self.visits == 0 {
            return (f64::NAN, 0.0);
        }
        let mean = self.wait_sum / n;
        if self.visits < 2 {
            return (mean, 0.0);
        }
        let var = (self.wait_sum_sq - n * mean * mean).max(0.0) / (n - 1.0);
        (mean, (var / n).sqrt())
    }
}

/// Simulates `runs` coalescents on `n` labels (run `r` on stream
/// `(seed, COALESCENT, r)`) and tabulates per block count `b = 2..=n`.
pub fn collect_statistics(n: usize, runs: usize, seed: u64) -> Result<Vec<BlockCountStats>> {
    let per_run = map_units(runs, |r| {
        let run = simulate_bs_coalescent(n, &mut stream(seed, tasks::COALESCENT, r as u64))?;
        Ok(run.steps().collect::<Vec<_>>())
    })?;
    let mut stats: Vec<BlockCountStats> = (0..=n).map(BlockCountStats::new).collect();
    for steps in per_run {
        for st in steps {
            let s = &mut stats[st.blocks];
            s.visits += 1;
            s.wait_sum += st.wait;
            s.wait_sum_sq += st.wait * st.wait;
            s.merger_counts[st.size] += 1;
        }
    }
    Ok(stats.split_off(2.min(stats.len())))
}
