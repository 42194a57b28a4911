//! Cross-video grouping of within-video clusters.
//!
//! Each of the `N` videos contributes `K` clusters; a solution partitions the
//! `N·K` clusters into `K` cliques holding exactly one cluster per video. The
//! cost of a clique is the sum of centroid distances over all pairs inside
//! it. Exact minimization is an `N`-dimensional assignment problem; the
//! multiple-hub heuristic solves `N − 1` bipartite matchings against every
//! candidate hub video and keeps the cheapest induced partition.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::matrix::{distance, Matrix};
use crate::videocluster::WithinVideoClusters;

/// Optimal linear assignment for a square cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `perm[row]` is the column assigned to `row`.
    pub perm: Vec<usize>,
    /// `Σ_row cost[row, perm[row]]`, summed in row order.
    pub cost: f64,
}

/// Minimum-cost perfect matching (Hungarian method with potentials).
///
/// Among optimal permutations the lexicographically smallest is returned:
/// rows pick, in order, the smallest column that is tight under the optimal
/// dual and still admits a perfect matching of tight edges.
pub fn hungarian(cost: &Matrix) -> Result<Matching> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(invalid!("assignment cost matrix must be square, got {:?}", cost.shape()));
    }
    if !cost.is_finite() {
        return Err(invalid!("assignment cost matrix has non-finite entries"));
    }
    if n == 0 {
        return Ok(Matching { perm: Vec::new(), cost: 0.0 });
    }
    let (u, v) = dual_potentials(cost);
    let scale = cost.as_slice().iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-9 * scale;
    let tight: Vec<Vec<bool>> =
        (0..n).map(|i| (0..n).map(|j| cost[(i, j)] - u[i] - v[j] <= tol).collect()).collect();

    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for i in 0..n {
        let mut fixed = false;
        for j in 0..n {
            if used[j] || !tight[i][j] {
                continue;
            }
            used[j] = true;
            if has_perfect_matching(&tight, i + 1, &used) {
                perm[i] = j;
                fixed = true;
                break;
            }
            used[j] = false;
        }
        if !fixed {
            return Err(Error::Numerical(alloc::string::String::from(
                "assignment duals admit no tight perfect matching",
            )));
        }
    }
    let total = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok(Matching { perm, cost: total })
}

/// Row and column potentials of an optimal dual: `cost[i,j] ≥ u[i] + v[j]`.
fn dual_potentials(cost: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = cost.rows();
    // 1-based arrays; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (u[1..].to_vec(), v[1..].to_vec())
}

/// Whether rows `from..n` can be matched to the unused columns along tight edges.
fn has_perfect_matching(tight: &[Vec<bool>], from: usize, used: &[bool]) -> bool {
    let n = tight.len();
    let mut match_col: Vec<Option<usize>> = vec![None; n];
    fn augment(
        row: usize,
        tight: &[Vec<bool>],
        used: &[bool],
        seen: &mut [bool],
        match_col: &mut [Option<usize>],
    ) -> bool {
        for j in 0..tight.len() {
            if used[j] || seen[j] || !tight[row][j] {
                continue;
            }
            seen[j] = true;
            if match_col[j].is_none_or(|r| augment(r, tight, used, seen, match_col)) {
                match_col[j] = Some(row);
                return true;
            }
        }
        false
    }
    (from..n).all(|row| {
        let mut seen = vec![false; n];
        augment(row, tight, used, &mut seen, &mut match_col)
    })
}

/// Centroids of all within-video clusters: one `K × E` matrix per video.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidTable {
    videos: Vec<Matrix>,
}

impl CentroidTable {
    pub fn new(videos: Vec<Matrix>) -> Result<Self> {
        let first = videos.first().ok_or_else(|| invalid!("centroid table needs at least one video"))?;
        let (k, e) = first.shape();
        if k == 0 {
            return Err(invalid!("videos need at least one cluster"));
        }
        for (n, c) in videos.iter().enumerate() {
            if c.shape() != (k, e) {
                return Err(invalid!("video {n} has centroid shape {:?}, expected {:?}", c.shape(), (k, e)));
            }
            if !c.is_finite() {
                return Err(invalid!("video {n} has non-finite centroids"));
            }
        }
        Ok(CentroidTable { videos })
    }

    pub fn from_clusters(clusters: &[WithinVideoClusters]) -> Result<Self> {
        CentroidTable::new(clusters.iter().map(|c| c.centroids.clone()).collect())
    }

    pub fn videos(&self) -> usize {
        self.videos.len()
    }

    pub fn clusters(&self) -> usize {
        self.videos[0].rows()
    }

    pub fn centroid(&self, video: usize, cluster: usize) -> &[f64] {
        self.videos[video].row(cluster)
    }

    /// Edge weight between two within-video clusters.
    pub fn weight(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        distance(self.centroid(a.0, a.1), self.centroid(b.0, b.1))
    }

    /// Returns the table with each video's clusters reordered:
    /// new cluster `j` of video `n` is old cluster `perms[n][j]`.
    pub fn permuted(&self, perms: &[Vec<usize>]) -> CentroidTable {
        let videos = self.videos.iter().zip(perms).map(|(c, p)| c.select_rows(p)).collect();
        CentroidTable { videos }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    MultiHub,
    Naive,
    BruteForce,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::MultiHub => "multi_hub",
            Strategy::Naive => "naive",
            Strategy::BruteForce => "brute_force",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "multi_hub" => Ok(Strategy::MultiHub),
            "naive" => Ok(Strategy::Naive),
            "brute_force" => Ok(Strategy::BruteForce),
            other => Err(invalid!("unknown assignment strategy {other:?}")),
        }
    }
}

/// Partition of the within-video clusters into `K` global clusters.
///
/// Global ids are canonical: global cluster `g` is the clique containing
/// cluster `g` of the first video.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalAssignment {
    pub strategy: Strategy,
    /// `global_of[video][within]` is the global cluster of that within-video cluster.
    pub global_of: Vec<Vec<usize>>,
    pub cost: f64,
}

impl GlobalAssignment {
    /// Validates, canonicalizes and costs an explicit labeling.
    pub fn from_labels(strategy: Strategy, table: &CentroidTable, global_of: Vec<Vec<usize>>) -> Result<Self> {
        let k = table.clusters();
        if global_of.len() != table.videos() {
            return Err(invalid!("assignment covers {} videos, table has {}", global_of.len(), table.videos()));
        }
        for (n, row) in global_of.iter().enumerate() {
            let mut seen = vec![false; k];
            if row.len() != k {
                return Err(invalid!("video {n} assigns {} clusters, expected {k}", row.len()));
            }
            for &g in row {
                if g >= k || seen[g] {
                    return Err(invalid!("video {n} does not map its clusters one-to-one onto {k} global clusters"));
                }
                seen[g] = true;
            }
        }
        let relabel = global_of[0].clone();
        let global_of: Vec<Vec<usize>> = global_of
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&g| relabel.iter().position(|&r| r == g).expect("first video is a bijection"))
                    .collect()
            })
            .collect();
        let cost = partition_cost(table, &global_of);
        Ok(GlobalAssignment { strategy, global_of, cost })
    }

    pub fn clusters(&self) -> usize {
        self.global_of.first().map_or(0, Vec::len)
    }

    /// Within-video cluster of `video` that belongs to global cluster `g`.
    pub fn member(&self, video: usize, g: usize) -> usize {
        self.global_of[video].iter().position(|&x| x == g).expect("bijection")
    }

    /// `K` cliques of `(video, within-cluster)` pairs.
    pub fn cliques(&self) -> Vec<Vec<(usize, usize)>> {
        (0..self.clusters())
            .map(|g| (0..self.global_of.len()).map(|n| (n, self.member(n, g))).collect())
            .collect()
    }
}

/// Sum over cliques of all pairwise centroid distances inside the clique.
pub fn partition_cost(table: &CentroidTable, global_of: &[Vec<usize>]) -> f64 {
    let videos = global_of.len();
    let k = table.clusters();
    let mut members = vec![vec![0usize; videos]; k];
    for (n, row) in global_of.iter().enumerate() {
        for (within, &g) in row.iter().enumerate() {
            members[g][n] = within;
        }
    }
    let mut total = 0.0;
    for clique in &members {
        for a in 0..videos {
            for b in a + 1..videos {
                total += table.weight((a, clique[a]), (b, clique[b]));
            }
        }
    }
    total
}

/// Pairwise centroid distances between the clusters of two videos.
fn distance_matrix(table: &CentroidTable, a: usize, b: usize) -> Matrix {
    let k = table.clusters();
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = table.weight((a, i), (b, j));
        }
    }
    m
}

/// Iterative multiple-hub heuristic. Hubs are tried in video order and ties
/// keep the earliest hub.
pub fn multi_hub_assign(table: &CentroidTable) -> Result<GlobalAssignment> {
    let videos = table.videos();
    let k = table.clusters();
    if videos == 1 {
        return GlobalAssignment::from_labels(Strategy::MultiHub, table, vec![(0..k).collect()]);
    }
    let mut best: Option<GlobalAssignment> = None;
    for hub in 0..videos {
        let candidate = hub_assignment(table, hub)?;
        if best.as_ref().is_none_or(|b| candidate.cost < b.cost) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least two videos"))
}

/// Partition induced by matching every other video against `hub`.
pub fn hub_assignment(table: &CentroidTable, hub: usize) -> Result<GlobalAssignment> {
    let k = table.clusters();
    let mut global_of = vec![vec![0usize; k]; table.videos()];
    global_of[hub] = (0..k).collect();
    for (n, row) in global_of.iter_mut().enumerate() {
        if n == hub {
            continue;
        }
        let matching = hungarian(&distance_matrix(table, hub, n))?;
        for (hub_cluster, &matched) in matching.perm.iter().enumerate() {
            row[matched] = hub_cluster;
        }
    }
    GlobalAssignment::from_labels(Strategy::MultiHub, table, global_of)
}

/// Groups the `k`-th cluster (by ascending mean timestamp) of every video.
pub fn naive_assign(clusters: &[WithinVideoClusters]) -> Result<GlobalAssignment> {
    let table = CentroidTable::from_clusters(clusters)?;
    let global_of = clusters.iter().map(|c| timestamp_ranks(&c.mean_timestamps)).collect();
    GlobalAssignment::from_labels(Strategy::Naive, &table, global_of)
}

/// Rank of every entry in ascending order (ties by lower index).
pub fn timestamp_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

pub const BRUTE_FORCE_MAX_VIDEOS: usize = 4;
pub const BRUTE_FORCE_MAX_CLUSTERS: usize = 4;

/// Number of candidates the exhaustive search visits: `(K!)^(N−1)`.
pub fn brute_force_candidates(videos: usize, clusters: usize) -> u64 {
    let fact: u64 = (1..=clusters as u64).product();
    fact.pow(videos.saturating_sub(1) as u32)
}

/// Exact minimum over every product of per-video permutations relative to
/// the first video.
pub fn brute_force_assign(table: &CentroidTable) -> Result<GlobalAssignment> {
    let videos = table.videos();
    let k = table.clusters();
    if videos > BRUTE_FORCE_MAX_VIDEOS || k > BRUTE_FORCE_MAX_CLUSTERS {
        return Err(Error::TooLarge(alloc::format!(
            "exhaustive assignment limited to {BRUTE_FORCE_MAX_VIDEOS} videos and {BRUTE_FORCE_MAX_CLUSTERS} clusters, got {videos}x{k}"
        )));
    }
    let perms = permutations(k);
    let mut digits = vec![0usize; videos.saturating_sub(1)];
    let mut best: Option<GlobalAssignment> = None;
    loop {
        let mut global_of = vec![(0..k).collect::<Vec<_>>()];
        global_of.extend(digits.iter().map(|&d| perms[d].clone()));
        let candidate = GlobalAssignment::from_labels(Strategy::BruteForce, table, global_of)?;
        if best.as_ref().is_none_or(|b| candidate.cost < b.cost) {
            best = Some(candidate);
        }
        // Odometer over the per-video permutation indices.
        let mut pos = 0;
        loop {
            if pos == digits.len() {
                return Ok(best.expect("at least one candidate"));
            }
            digits[pos] += 1;
            if digits[pos] < perms.len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        // Next lexicographic permutation.
        let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| current[i] < current[i + 1]) else {
            return out;
        };
        let j = (i + 1..k).rev().find(|&j| current[j] > current[i]).expect("successor exists");
        current.swap(i, j);
        current[i + 1..].reverse();
    }
}
