//! Exact integer load state for balls-into-bins processes.
//!
//! A [`LoadState`] tracks the integer load vector `x` of `n` bins together
//! with the running totals needed by allocation rules and verifiers: the
//! total number of balls `W`, the number of completed rounds `t`, and the
//! number of bin samples consumed `S`.
//!
//! All decision arithmetic is exact. A bin `i` is *overloaded* when its load
//! is at least the average, i.e. `n·x[i] ≥ W`, and *underloaded* otherwise;
//! comparisons are performed on widened integers, never on floats. Derived
//! quantities — the normalized load `y[i] = x[i] − W/n`, the gap
//! `max_i x[i] − W/n`, and a bin's *deficit* `⌈−y[i]⌉` (how many balls bring
//! it up to the ceiling of the average) — are exact rationals or integers.
//!
//! Internally the state maintains a bucketed index of *load classes*: a
//! sorted map from load value to the set of bins currently at that load.
//! Rank-based queries (heaviest underloaded bin, load at a given rank,
//! per-class mass aggregation) read this index instead of scanning all bins,
//! which keeps per-round work proportional to the number of distinct load
//! values rather than `n`. How much per-class membership detail is kept is
//! chosen per process via [`MembershipMode`].

use num_rational::Ratio;
use std::collections::{BTreeMap, BTreeSet};
use std::ops::Bound;

/// Index of a bin, `0 ≤ id < n`.
pub type BinId = u32;

/// Exact rational number used for gaps, normalized loads, and expectations.
pub type Rational = Ratio<i128>;

/// How much per-class membership information the load index maintains.
///
/// Every mode tracks per-class counts (enough for rank and mass queries).
/// The richer modes additionally track which bins are in each class:
///
/// * `CountsOnly` — counts only; cheapest, enough for most processes.
/// * `Ordered` — bins per class in a sorted set, so the lowest-id member of
///   a class is addressable (deterministic tie-breaking for fill rules).
/// * `Pooled` — bins per class in an unordered pool with O(1) swap-removal,
///   so a uniformly random member of a class is addressable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipMode {
    CountsOnly,
    Ordered,
    Pooled,
}

#[derive(Debug, Clone)]
enum Members {
    None,
    Ordered(BTreeSet<BinId>),
    Pooled(Vec<BinId>),
}

impl Members {
    fn new(mode: MembershipMode) -> Self {
        match mode {
            MembershipMode::CountsOnly => Members::None,
            MembershipMode::Ordered => Members::Ordered(BTreeSet::new()),
            MembershipMode::Pooled => Members::Pooled(Vec::new()),
        }
    }
}

#[derive(Debug, Clone)]
struct Class {
    count: u32,
    members: Members,
}

/// Integer load vector plus bookkeeping counters and the load-class index.
#[derive(Debug, Clone)]
pub struct LoadState {
    loads: Vec<u64>,
    total: u64,
    rounds: u64,
    samples: u64,
    mode: MembershipMode,
    classes: BTreeMap<u64, Class>,
    /// Position of each bin inside its class pool (`Pooled` mode only).
    pool_pos: Vec<u32>,
}

impl LoadState {
    /// Fresh state with `n` empty bins.
    pub fn new(n: usize, mode: MembershipMode) -> Self {
        Self::from_loads(vec![0; n], mode)
    }

    /// State with the given initial loads.
    ///
    /// Panics if `loads` is empty or longer than `u32::MAX` bins.
    pub fn from_loads(loads: Vec<u64>, mode: MembershipMode) -> Self {
        assert!(!loads.is_empty(), "a load state needs at least one bin");
        assert!(loads.len() <= u32::MAX as usize, "too many bins");
        let pool_pos = match mode {
            MembershipMode::Pooled => vec![0u32; loads.len()],
            _ => Vec::new(),
        };
        let mut state = LoadState {
            loads: Vec::new(),
            total: 0,
            rounds: 0,
            samples: 0,
            mode,
            classes: BTreeMap::new(),
            pool_pos,
        };
        let mut total = 0u64;
        for (bin, &load) in loads.iter().enumerate() {
            total += load;
            state.attach(bin as BinId, load);
        }
        state.loads = loads;
        state.total = total;
        state
    }

    fn attach(&mut self, bin: BinId, load: u64) {
        let mode = self.mode;
        let class = self
            .classes
            .entry(load)
            .or_insert_with(|| Class { count: 0, members: Members::new(mode) });
        class.count += 1;
        match &mut class.members {
            Members::None => {}
            Members::Ordered(set) => {
                set.insert(bin);
            }
            Members::Pooled(pool) => {
                self.pool_pos[bin as usize] = pool.len() as u32;
                pool.push(bin);
            }
        }
    }

    fn detach(&mut self, bin: BinId) {
        let load = self.loads[bin as usize];
        let class = self.classes.get_mut(&load).expect("bin missing from class index");
        class.count -= 1;
        match &mut class.members {
            Members::None => {}
            Members::Ordered(set) => {
                set.remove(&bin);
            }
            Members::Pooled(pool) => {
                let pos = self.pool_pos[bin as usize] as usize;
                pool.swap_remove(pos);
                if pos < pool.len() {
                    let moved = pool[pos];
                    self.pool_pos[moved as usize] = pos as u32;
                }
            }
        }
        if class.count == 0 {
            self.classes.remove(&load);
        }
    }

    /// Add `count` balls to `bin`, updating the total and the class index.
    pub fn add_balls(&mut self, bin: BinId, count: u64) {
        if count == 0 {
            return;
        }
        self.detach(bin);
        let new_load = self.loads[bin as usize] + count;
        self.loads[bin as usize] = new_load;
        self.total += count;
        self.attach(bin, new_load);
    }

    /// Record the completion of one round that consumed `samples_used` bin
    /// samples.
    pub fn note_round(&mut self, samples_used: u64) {
        self.rounds += 1;
        self.samples += samples_used;
    }

    /// Number of bins `n`.
    pub fn n(&self) -> usize {
        self.loads.len()
    }

    fn n_u64(&self) -> u64 {
        self.loads.len() as u64
    }

    /// Load of one bin.
    pub fn load(&self, bin: BinId) -> u64 {
        self.loads[bin as usize]
    }

    /// The whole load vector, indexed by bin id.
    pub fn loads(&self) -> &[u64] {
        &self.loads
    }

    /// Total number of balls `W`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of completed rounds `t`.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Number of bin samples consumed `S`.
    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Membership mode of the class index.
    pub fn mode(&self) -> MembershipMode {
        self.mode
    }

    /// Largest current load.
    pub fn max_load(&self) -> u64 {
        self.classes.keys().next_back().copied().unwrap_or(0)
    }

    /// Smallest current load.
    pub fn min_load(&self) -> u64 {
        self.classes.keys().next().copied().unwrap_or(0)
    }

    /// `⌈W/n⌉`, the smallest integer load that is at or above the average.
    pub fn ceil_avg(&self) -> u64 {
        let n = self.n_u64();
        self.total.div_ceil(n)
    }

    /// Whether `bin` is overloaded: `n·x[bin] ≥ W`.
    pub fn is_overloaded(&self, bin: BinId) -> bool {
        self.load_is_overloaded(self.loads[bin as usize])
    }

    /// Whether a bin at `load` would be overloaded: `n·load ≥ W`.
    pub fn load_is_overloaded(&self, load: u64) -> bool {
        (self.n_u64() as u128) * (load as u128) >= self.total as u128
    }

    /// Largest load value that still counts as underloaded, or `None` when
    /// no load does (i.e. `W = 0`).
    ///
    /// A bin is underloaded iff `n·x < W`, which for integers is exactly
    /// `x ≤ (W − 1) div n`.
    pub fn underload_threshold(&self) -> Option<u64> {
        if self.total == 0 {
            None
        } else {
            Some((self.total - 1) / self.n_u64())
        }
    }

    /// Balls needed to lift `bin` to `⌈W/n⌉`: the deficit `⌈−y[bin]⌉`.
    /// Zero for overloaded bins.
    pub fn deficit(&self, bin: BinId) -> u64 {
        self.load_deficit(self.loads[bin as usize])
    }

    /// Deficit of a bin currently at `load`.
    pub fn load_deficit(&self, load: u64) -> u64 {
        let n = self.n_u64() as u128;
        let scaled = n * load as u128;
        let w = self.total as u128;
        if scaled >= w {
            0
        } else {
            (w - scaled).div_ceil(n) as u64
        }
    }

    /// Normalized load `y[bin] = x[bin] − W/n` as an exact rational.
    pub fn normalized_load(&self, bin: BinId) -> Rational {
        let n = self.n_u64() as i128;
        let num = n * self.loads[bin as usize] as i128 - self.total as i128;
        Ratio::new(num, n)
    }

    /// The gap `max_i x[i] − W/n` as an exact rational. Always ≥ 0.
    pub fn gap(&self) -> Rational {
        let n = self.n_u64() as i128;
        let num = n * self.max_load() as i128 - self.total as i128;
        Ratio::new(num, n)
    }

    /// `⌈gap⌉` as an integer, the value used for gap histograms.
    pub fn gap_ceil(&self) -> u64 {
        let n = self.n_u64() as u128;
        let num = n * self.max_load() as u128 - self.total as u128;
        num.div_ceil(n) as u64
    }

    /// Load classes as `(load, bin count)` in ascending load order.
    pub fn classes_asc(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        self.classes.iter().map(|(&load, class)| (load, class.count))
    }

    /// Load classes as `(load, bin count)` in descending load order.
    pub fn classes_desc(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        self.classes.iter().rev().map(|(&load, class)| (load, class.count))
    }

    /// Number of distinct load values.
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Underloaded load classes as `(load, bin count)` in descending load
    /// order (heaviest underloaded class first).
    pub fn underloaded_classes_desc(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        let upper = match self.underload_threshold() {
            Some(t) => Bound::Included(t),
            None => Bound::Excluded(0),
        };
        self.classes
            .range((Bound::Unbounded, upper))
            .rev()
            .map(|(&load, class)| (load, class.count))
    }

    /// Number of bins with load strictly greater than `load`.
    pub fn count_heavier(&self, load: u64) -> u64 {
        self.classes
            .range((Bound::Excluded(load), Bound::Unbounded))
            .map(|(_, class)| class.count as u64)
            .sum()
    }

    /// Number of bins with load at least `load`.
    pub fn count_at_least(&self, load: u64) -> u64 {
        self.classes.range(load..).map(|(_, class)| class.count as u64).sum()
    }

    /// Load of the bin at 1-based `rank` when bins are ordered by descending
    /// load (rank 1 = a heaviest bin). Panics if `rank` is out of `1..=n`.
    pub fn load_at_rank(&self, rank: u64) -> u64 {
        assert!(rank >= 1 && rank <= self.n_u64(), "rank out of range");
        let mut seen = 0u64;
        for (load, count) in self.classes_desc() {
            seen += count as u64;
            if seen >= rank {
                return load;
            }
        }
        unreachable!("class counts always sum to n")
    }

    /// Lowest-id bin in the heaviest underloaded class, or `None` if every
    /// bin is overloaded. Requires [`MembershipMode::Ordered`].
    pub fn heaviest_underloaded(&self) -> Option<BinId> {
        let threshold = self.underload_threshold()?;
        let (_, class) = self.classes.range(..=threshold).next_back()?;
        match &class.members {
            Members::Ordered(set) => set.iter().next().copied(),
            _ => panic!("heaviest_underloaded requires MembershipMode::Ordered"),
        }
    }

    /// Bins of the class at `load` in ascending id order. Requires
    /// [`MembershipMode::Ordered`]; panics if no class sits at `load`.
    pub fn members_ordered(&self, load: u64) -> impl Iterator<Item = BinId> + '_ {
        let class = self.classes.get(&load).expect("no class at this load");
        match &class.members {
            Members::Ordered(set) => set.iter().copied(),
            _ => panic!("members_ordered requires MembershipMode::Ordered"),
        }
    }

    /// The `idx`-th bin (in unspecified pool order) of the class at `load`.
    /// Requires [`MembershipMode::Pooled`]; panics if out of range.
    pub fn member_at(&self, load: u64, idx: u32) -> BinId {
        let class = self.classes.get(&load).expect("no class at this load");
        match &class.members {
            Members::Pooled(pool) => pool[idx as usize],
            _ => panic!("member_at requires MembershipMode::Pooled"),
        }
    }

    /// All bins sorted by descending load, ties by ascending id: the
    /// canonical rank order used by the probability-vector verifier.
    pub fn sorted_ranks(&self) -> Vec<BinId> {
        let mut order: Vec<BinId> = (0..self.loads.len() as u32).collect();
        order.sort_by_key(|&bin| (std::cmp::Reverse(self.loads[bin as usize]), bin));
        order
    }
}

/// Free-function form of [`LoadState::sorted_ranks`].
pub fn sorted_ranks(state: &LoadState) -> Vec<BinId> {
    state.sorted_ranks()
}

/// Free-function form of [`LoadState::normalized_load`].
pub fn normalized_load(state: &LoadState, bin: BinId) -> Rational {
    state.normalized_load(bin)
}

/// Free-function form of [`LoadState::gap`].
pub fn gap(state: &LoadState) -> Rational {
    state.gap()
}
