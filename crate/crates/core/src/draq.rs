//! Alignability indicators.
//!
//! DRAQ divides the optimal DTW cost `D(n, m)` by the mean cost of `k`
//! random monotonic paths through the same cost matrix. Random paths walk
//! from `(n, m)` back to `(1, 1)`; at cell `(i, j)` the row index steps back
//! with probability `i / (i + j)` and the column index independently with
//! probability `j / (i + j)`. Draws where neither moves are discarded and
//! redrawn, and a coordinate already at 1 never moves. The bias towards
//! the larger coordinate keeps random paths near the diagonal, which makes
//! them a harder baseline than uniformly random walks.
//!
//! The DTW cost and negative Kendall tau are provided as baselines; all
//! three indicators are "lower is better".

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{cost_matrix, dtw, AlignmentPath, CostMatrix};
use crate::context::ContextualizedSequence;
use crate::error::{Error, Result};

/// Random-path baselines cheaper than this are treated as zero.
pub const DEGENERATE_COST: f64 = 1e-12;

pub const DEFAULT_NUM_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    Draq,
    DtwCost,
    #[serde(rename = "neg_tau")]
    NegKendallTau,
}

impl Indicator {
    pub const ALL: [Indicator; 3] = [
        Indicator::Draq,
        Indicator::DtwCost,
        Indicator::NegKendallTau,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::Draq => "draq",
            Indicator::DtwCost => "dtw_cost",
            Indicator::NegKendallTau => "neg_tau",
        }
    }
}

impl std::fmt::Display for Indicator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Indicator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "draq" => Ok(Indicator::Draq),
            "dtw_cost" | "dtw" => Ok(Indicator::DtwCost),
            "neg_tau" | "tau" => Ok(Indicator::NegKendallTau),
            other => Err(Error::InvalidArgument(format!(
                "unknown indicator {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignabilityScore {
    pub value: f64,
    pub indicator: Indicator,
    /// Set when the score fell back to a convention (DRAQ with a zero
    /// random-path baseline).
    pub degenerate: bool,
}

impl AlignabilityScore {
    pub fn lower_is_better(&self) -> bool {
        true
    }
}

/// How a random walk picks its moves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Draw a fresh move at every cell.
    #[default]
    PerStep,
    /// Draw a move and keep repeating it until it would leave the grid,
    /// then draw again.
    Persistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomPathConfig {
    pub num_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: SamplerMode,
}

impl Default for RandomPathConfig {
    fn default() -> Self {
        Self {
            num_paths: DEFAULT_NUM_PATHS,
            seed: 0,
            mode: SamplerMode::PerStep,
        }
    }
}

impl RandomPathConfig {
    pub fn new(num_paths: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            num_paths,
            seed,
            mode: SamplerMode::PerStep,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_paths == 0 {
            return Err(Error::InvalidArgument(
                "number of random paths must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// The same configuration with a seed derived for one sequence pair.
    pub fn for_pair(&self, a: &str, b: &str) -> Self {
        Self {
            seed: pair_seed(self.seed, a, b),
            ..*self
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Mixes a base seed with two ids into an independent stream seed.
pub fn pair_seed(seed: u64, a: &str, b: &str) -> u64 {
    // FNV-1a over "a\0b", then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in a.bytes().chain(std::iter::once(0)).chain(b.bytes()) {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One biased draw at 1-based `(i, j)`: `(step_row, step_col)`, never both false.
fn draw_move<R: Rng + ?Sized>(i: usize, j: usize, rng: &mut R) -> (bool, bool) {
    let total = (i + j) as f64;
    let p_up = i as f64 / total;
    let p_left = j as f64 / total;
    loop {
        let up = i > 1 && rng.random::<f64>() < p_up;
        let left = j > 1 && rng.random::<f64>() < p_left;
        if up || left {
            return (up, left);
        }
    }
}

/// Walks one random path from `(n, m)` to `(1, 1)`, calling `visit` on
/// every 1-based cell in reverse order.
fn walk<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    mode: SamplerMode,
    rng: &mut R,
    mut visit: impl FnMut(usize, usize),
) {
    let (mut i, mut j) = (n, m);
    visit(i, j);
    while (i, j) != (1, 1) {
        let (up, left) = draw_move(i, j, rng);
        let (di, dj) = (up as usize, left as usize);
        match mode {
            SamplerMode::PerStep => {
                i -= di;
                j -= dj;
                visit(i, j);
            }
            SamplerMode::Persistent => loop {
                i -= di;
                j -= dj;
                visit(i, j);
                let can_repeat = (di == 0 || i > 1) && (dj == 0 || j > 1);
                if (i, j) == (1, 1) || !can_repeat {
                    break;
                }
            },
        }
    }
}

/// Samples one biased random path through an `n x m` grid.
pub fn sample_random_path<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    mode: SamplerMode,
    rng: &mut R,
) -> AlignmentPath {
    assert!(n >= 1 && m >= 1, "grid must be at least 1x1");
    let mut cells = Vec::with_capacity(n + m);
    walk(n, m, mode, rng, |i, j| cells.push((i, j)));
    cells.reverse();
    AlignmentPath::from_tuples(cells)
}

/// Mean cost of `cfg.num_paths` random paths, deterministic in `cfg.seed`.
pub fn random_path_cost(c: &CostMatrix, cfg: &RandomPathConfig) -> f64 {
    let mut rng = cfg.rng();
    let paths = cfg.num_paths.max(1);
    let mut total = 0.0;
    for _ in 0..paths {
        let mut sum = 0.0;
        walk(c.rows(), c.cols(), cfg.mode, &mut rng, |i, j| {
            sum += c.at1(i, j)
        });
        total += sum;
    }
    total / paths as f64
}

/// DRAQ together with the two costs it is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DraqBreakdown {
    pub optimal_cost: f64,
    pub random_cost: f64,
    pub score: AlignabilityScore,
}

pub fn draq_breakdown(c: &CostMatrix, cfg: &RandomPathConfig) -> DraqBreakdown {
    let (_, optimal_cost) = dtw(c);
    draq_with_optimal(c, optimal_cost, cfg)
}

/// DRAQ when `D(n, m)` is already known.
pub fn draq_with_optimal(
    c: &CostMatrix,
    optimal_cost: f64,
    cfg: &RandomPathConfig,
) -> DraqBreakdown {
    let random_cost = random_path_cost(c, cfg);
    let (value, degenerate) = if random_cost < DEGENERATE_COST {
        (1.0, true)
    } else {
        (optimal_cost / random_cost, false)
    };
    DraqBreakdown {
        optimal_cost,
        random_cost,
        score: AlignabilityScore {
            value,
            indicator: Indicator::Draq,
            degenerate,
        },
    }
}

/// `D(n, m) / Cost_random`; 1.0 with `degenerate` set when the random
/// baseline is zero.
pub fn draq(c: &CostMatrix, cfg: &RandomPathConfig) -> AlignabilityScore {
    draq_breakdown(c, cfg).score
}

pub fn dtw_cost_indicator(c: &CostMatrix) -> AlignabilityScore {
    AlignabilityScore {
        value: dtw(c).1,
        indicator: Indicator::DtwCost,
        degenerate: false,
    }
}

/// `-tau` between frame order of `a` and the indices of each frame's
/// nearest neighbour in `b`.
pub fn kendall_tau_indicator(
    a: &ContextualizedSequence,
    b: &ContextualizedSequence,
) -> Result<AlignabilityScore> {
    if a.len() < 2 {
        return Err(Error::InvalidArgument(
            "kendall tau needs at least 2 frames".into(),
        ));
    }
    Ok(neg_kendall_tau_from_costs(&cost_matrix(a, b)?))
}

/// Same as [`kendall_tau_indicator`] on a precomputed cost matrix.
pub fn neg_kendall_tau_from_costs(c: &CostMatrix) -> AlignabilityScore {
    let matched: Vec<usize> = (0..c.rows()).map(|i| argmin(c.row(i))).collect();
    AlignabilityScore {
        value: -kendall_tau_a(&matched),
        indicator: Indicator::NegKendallTau,
        degenerate: false,
    }
}

fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v < row[best] {
            best = k;
        }
    }
    best
}

/// Kendall tau-a of `ys` against its own index order. Tied values count
/// as neither concordant nor discordant; fewer than two values give 0.
pub fn kendall_tau_a<T: PartialOrd>(ys: &[T]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let mut score: i64 = 0;
    for p in 0..n {
        for q in p + 1..n {
            if ys[q] > ys[p] {
                score += 1;
            } else if ys[q] < ys[p] {
                score -= 1;
            }
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::AlignmentPath;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use std::collections::HashMap;

    fn matrix(n: usize, m: usize, seed: u64) -> CostMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CostMatrix::new(
            n,
            m,
            (0..n * m).map(|_| rng.random_range(0.0..2.0)).collect(),
        )
        .unwrap()
    }

    /// Exact expected random-path cost under the clamped per-step law.
    fn expected_cost(c: &CostMatrix) -> f64 {
        let (n, m) = (c.rows(), c.cols());
        let mut e = vec![vec![0.0; m + 1]; n + 1];
        for i in 1..=n {
            for j in 1..=m {
                if (i, j) == (1, 1) {
                    e[i][j] = c.at1(1, 1);
                    continue;
                }
                let (pu, pl) = (i as f64 / (i + j) as f64, j as f64 / (i + j) as f64);
                let pu = if i > 1 { pu } else { 0.0 };
                let pl = if j > 1 { pl } else { 0.0 };
                let (diag, up, left) = (pu * pl, pu * (1.0 - pl), (1.0 - pu) * pl);
                let z = diag + up + left;
                let mut next = 0.0;
                if diag > 0.0 {
                    next += diag / z * e[i - 1][j - 1];
                }
                if up > 0.0 {
                    next += up / z * e[i - 1][j];
                }
                if left > 0.0 {
                    next += left / z * e[i][j - 1];
                }
                e[i][j] = c.at1(i, j) + next;
            }
        }
        e[n][m]
    }

    /// A second sampler written against the textual rule, independent of `walk`.
    fn oracle_mc(c: &CostMatrix, k: usize, seed: u64) -> f64 {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for _ in 0..k {
            let (mut i, mut j) = (c.rows() as f64, c.cols() as f64);
            let mut cost = c.at1(i as usize, j as usize);
            while i > 1.0 || j > 1.0 {
                let (di, dj) = loop {
                    let di = if i > 1.0 && rng.random_bool(i / (i + j)) {
                        1.0
                    } else {
                        0.0
                    };
                    let dj = if j > 1.0 && rng.random_bool(j / (i + j)) {
                        1.0
                    } else {
                        0.0
                    };
                    if di + dj > 0.0 {
                        break (di, dj);
                    }
                };
                i -= di;
                j -= dj;
                cost += c.at1(i as usize, j as usize);
            }
            total += cost;
        }
        total / k as f64
    }

    #[test]
    fn trivial_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_random_path(1, 1, SamplerMode::PerStep, &mut rng).tuples(),
            &[(1, 1)]
        );
        let row: Vec<_> = (1..=5).map(|j| (1, j)).collect();
        for mode in [SamplerMode::PerStep, SamplerMode::Persistent] {
            assert_eq!(
                sample_random_path(1, 5, mode, &mut rng).tuples(),
                row.as_slice()
            );
        }
        let col: Vec<_> = (1..=4).map(|i| (i, 1)).collect();
        assert_eq!(
            sample_random_path(4, 1, SamplerMode::PerStep, &mut rng).tuples(),
            col.as_slice()
        );
    }

    #[test]
    fn two_by_two_law_is_uniform_over_three_paths() {
        // At (2,2) both coordinates move with probability 1/2 each; after
        // discarding the no-move outcome the diagonal, up and left moves each
        // have probability 1/3, and every move from there is forced.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts: HashMap<AlignmentPath, usize> = HashMap::new();
        let trials = 100_000;
        for _ in 0..trials {
            *counts
                .entry(sample_random_path(2, 2, SamplerMode::PerStep, &mut rng))
                .or_default() += 1;
        }
        assert_eq!(counts.len(), 3);
        for (p, n) in counts {
            p.validate(2, 2).unwrap();
            let freq = n as f64 / trials as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.01, "{p:?}: {freq}");
        }
    }

    #[test]
    fn single_row_cost_is_row_sum() {
        let c = CostMatrix::from_rows(&[[0.5, 1.5, 0.25]]).unwrap();
        for k in [1, 7, 100] {
            assert_eq!(
                random_path_cost(&c, &RandomPathConfig::new(k, 9).unwrap()),
                2.25
            );
        }
        let zero = CostMatrix::new(4, 6, vec![0.0; 24]).unwrap();
        assert_eq!(random_path_cost(&zero, &RandomPathConfig::default()), 0.0);
    }

    #[test]
    fn three_by_three_matches_oracles() {
        let c =
            CostMatrix::from_rows(&[[0.1, 0.9, 1.7], [0.6, 0.3, 1.1], [1.9, 0.8, 0.45]]).unwrap();
        let cfg = RandomPathConfig::new(10_000, 7).unwrap();
        let got = random_path_cost(&c, &cfg);
        let exact = expected_cost(&c);
        let mc = oracle_mc(&c, 200_000, 11);
        assert!(
            (got - exact).abs() / exact < 0.005,
            "{got} vs exact {exact}"
        );
        assert!((got - mc).abs() / mc < 0.005, "{got} vs oracle {mc}");
    }

    #[test]
    fn draq_examples() {
        let n = 6;
        let mut v = vec![0.8; n * n];
        for k in 0..n {
            v[k * n + k] = 0.0;
        }
        let s = draq(
            &CostMatrix::new(n, n, v).unwrap(),
            &RandomPathConfig::default(),
        );
        assert_eq!((s.value, s.degenerate), (0.0, false));

        let s = draq(
            &CostMatrix::new(3, 4, vec![0.0; 12]).unwrap(),
            &RandomPathConfig::default(),
        );
        assert_eq!((s.value, s.degenerate), (1.0, true));
    }

    fn max_path_cost(c: &CostMatrix) -> f64 {
        fn go(c: &CostMatrix, i: usize, j: usize) -> f64 {
            let here = c.at1(i, j);
            if (i, j) == (c.rows(), c.cols()) {
                return here;
            }
            let mut best = f64::NEG_INFINITY;
            for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
                if i + di <= c.rows() && j + dj <= c.cols() {
                    best = best.max(go(c, i + di, j + dj));
                }
            }
            here + best
        }
        go(c, 1, 1)
    }

    #[test]
    fn draq_bounds_on_five_by_four() {
        let c = matrix(5, 4, 3);
        let cfg = RandomPathConfig::new(100, 5).unwrap();
        let b = draq_breakdown(&c, &cfg);
        assert_eq!(b.optimal_cost, dtw(&c).1);
        assert_eq!(b.score.value, b.optimal_cost / random_path_cost(&c, &cfg));
        assert!(b.score.value <= 1.0);
        assert!(b.score.value >= b.optimal_cost / max_path_cost(&c));
    }

    #[test]
    fn dtw_indicator_delegates() {
        let c = CostMatrix::from_rows(&[[0.3]]).unwrap();
        assert_eq!(dtw_cost_indicator(&c).value, 0.3);
        let c = matrix(7, 9, 1);
        assert_eq!(dtw_cost_indicator(&c).value, dtw(&c).1);
    }

    fn ctx(rows: &[[f32; 2]]) -> ContextualizedSequence {
        ContextualizedSequence::from_prepared(
            "s",
            rows.len(),
            2,
            rows.iter().flatten().copied().collect(),
        )
    }

    #[test]
    fn kendall_examples() {
        let a = ctx(&[[1.0, 0.0], [0.7, 0.7], [0.0, 1.0], [-0.7, 0.7], [-1.0, 0.0]]);
        assert_eq!(kendall_tau_indicator(&a, &a).unwrap().value, -1.0);
        let rev = ctx(&[[-1.0, 0.0], [-0.7, 0.7], [0.0, 1.0], [0.7, 0.7], [1.0, 0.0]]);
        assert_eq!(kendall_tau_indicator(&a, &rev).unwrap().value, 1.0);
        assert!((kendall_tau_a(&[2, 1, 3, 4]) - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(kendall_tau_a(&[3, 3, 3]), 0.0);
        assert!(kendall_tau_indicator(&ctx(&[[1.0, 0.0]]), &a).is_err());
    }

    #[test]
    fn pair_seeds_are_stable_and_distinct() {
        assert_eq!(pair_seed(1, "a", "b"), pair_seed(1, "a", "b"));
        assert_ne!(pair_seed(1, "a", "b"), pair_seed(1, "b", "a"));
        assert_ne!(pair_seed(1, "ab", ""), pair_seed(1, "a", "b"));
        assert_ne!(pair_seed(1, "a", "b"), pair_seed(2, "a", "b"));
    }

    proptest! {
        #[test]
        fn sampled_paths_are_valid(n in 1usize..=32, m in 1usize..=32, seed in any::<u64>(), persistent in any::<bool>()) {
            let mode = if persistent { SamplerMode::Persistent } else { SamplerMode::PerStep };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = sample_random_path(n, m, mode, &mut rng);
            prop_assert!(p.validate(n, m).is_ok(), "{:?}", p);
        }

        #[test]
        fn dtw_is_no_worse_than_random_paths(n in 1usize..=12, m in 1usize..=12, seed in any::<u64>()) {
            let c = matrix(n, m, seed);
            let (_, best) = dtw(&c);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            for _ in 0..20 {
                let p = sample_random_path(n, m, SamplerMode::PerStep, &mut rng);
                prop_assert!(best <= c.path_cost(&p) + 1e-12);
            }
        }

        #[test]
        fn draq_is_deterministic(seed in any::<u64>()) {
            let c = matrix(8, 5, seed);
            let cfg = RandomPathConfig::new(30, seed).unwrap();
            prop_assert_eq!(draq(&c, &cfg).value.to_bits(), draq(&c, &cfg).value.to_bits());
        }
    }
}
