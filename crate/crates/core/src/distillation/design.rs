//! Exact covers of a Hamming-weight class by sets of size `2^k`.
//!
//! Bit-strings are stored as integers with copy `i` at bit `N − 1 − i`, so
//! copy 0 is the leftmost character when written out.

use itertools::Itertools;
use num_integer::{binomial, Integer};
use serde::Serialize;

use crate::error::{Error, Result};

/// Default cap on backtracking nodes.
pub const DEFAULT_NODE_BUDGET: u64 = 50_000_000;

/// Family of `L` sets of weight-`j` strings, each of size `2^k`, covering
/// every weight-`j` string exactly `n` times.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CoveringDesign {
    pub n_copies: usize,
    pub j: usize,
    pub k: usize,
    pub sets: Vec<Vec<u32>>,
    pub n: usize,
    /// Per set, the lexicographically first `k` copies on which the set
    /// restricts bijectively to `{0,1}^k`.
    pub kept_positions: Vec<Vec<usize>>,
}

pub(crate) fn bit(s: u32, n: usize, copy: usize) -> u32 {
    (s >> (n - 1 - copy)) & 1
}

/// The bits of `s` at `positions`, first position most significant.
pub(crate) fn restrict(s: u32, n: usize, positions: &[usize]) -> u32 {
    positions.iter().fold(0, |acc, &p| (acc << 1) | bit(s, n, p))
}

pub(crate) fn weight_class(n: usize, j: usize) -> Vec<u32> {
    (0..1u32 << n).filter(|s| s.count_ones() as usize == j).collect()
}

/// `(n, L)` for an exact cover of `C(N, j)` strings by sets of size `2^k`.
pub fn design_parameters(n_copies: usize, j: usize, k: usize) -> (usize, usize) {
    let c = binomial(n_copies, j);
    let m = c.lcm(&(1usize << k));
    (m / c, m >> k)
}

/// Whether `set` restricted to `positions` hits every pattern exactly once.
pub fn is_bijective_on(set: &[u32], n_copies: usize, positions: &[usize]) -> bool {
    if set.len() != 1 << positions.len() {
        return false;
    }
    let mut seen = vec![false; set.len()];
    for &s in set {
        let r = restrict(s, n_copies, positions) as usize;
        if seen[r] {
            return false;
        }
        seen[r] = true;
    }
    true
}

fn first_bijective(set: &[u32], n_copies: usize, k: usize) -> Option<Vec<usize>> {
    (0..n_copies).combinations(k).find(|pos| is_bijective_on(set, n_copies, pos))
}

/// Rotate copies `0..m` cyclically by one; copies `m..` stay fixed.
fn rotate(s: u32, n: usize, m: usize) -> u32 {
    (0..n).filter(|&p| bit(s, n, p) == 1).fold(0, |out, p| {
        let q = if p < m { (p + 1) % m } else { p };
        out | 1 << (n - 1 - q)
    })
}

/// Largest cyclic group `Z_m`, `m ∈ {N, N−1}` with `m | L`, whose orbits on
/// the weight class all have full size. Falls back to the trivial group.
fn choose_group(strings: &[u32], n: usize, l: usize) -> usize {
    for m in [n, n.saturating_sub(1)] {
        if m > 1 && l % m == 0 {
            let free = strings.iter().all(|&s| {
                let mut t = rotate(s, n, m);
                let mut size = 1;
                while t != s {
                    t = rotate(t, n, m);
                    size += 1;
                }
                size == m
            });
            if free {
                return m;
            }
        }
    }
    1
}

struct Search {
    n: usize,
    j: usize,
    k: usize,
    mult: usize,
    nblocks: usize,
    orbit: Vec<usize>,
    count: Vec<usize>,
    subsets: Vec<Vec<usize>>,
    blocks: Vec<Vec<u32>>,
    nodes: u64,
    budget: u64,
}

enum Stop {
    Exhausted,
}

impl Search {
    /// Weight-`j` strings whose bits on `kset` read `pattern`.
    fn completions(&self, kset: &[usize], pattern: u32) -> Vec<u32> {
        let ones = pattern.count_ones() as usize;
        let rest: Vec<usize> = (0..self.n).filter(|p| !kset.contains(p)).collect();
        if ones > self.j || self.j - ones > rest.len() {
            return Vec::new();
        }
        let base = kset
            .iter()
            .enumerate()
            .filter(|(i, _)| (pattern >> (self.k - 1 - i)) & 1 == 1)
            .fold(0u32, |acc, (_, &p)| acc | 1 << (self.n - 1 - p));
        rest.iter()
            .copied()
            .combinations(self.j - ones)
            .map(|c| c.iter().fold(base, |acc, &p| acc | 1 << (self.n - 1 - p)))
            .collect()
    }

    fn block(&mut self, depth: usize, kmin: usize) -> std::result::Result<bool, Stop> {
        if depth == self.nblocks {
            return Ok(self.count.iter().all(|&c| c == self.mult));
        }
        for ki in kmin..self.subsets.len() {
            let kset = self.subsets[ki].clone();
            let comps: Vec<Vec<u32>> = (0..1u32 << self.k).map(|b| self.completions(&kset, b)).collect();
            let mut cur = Vec::with_capacity(1 << self.k);
            if self.pattern(depth, ki, &comps, 0, &mut cur)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn pattern(
        &mut self,
        depth: usize,
        ki: usize,
        comps: &[Vec<u32>],
        b: usize,
        cur: &mut Vec<u32>,
    ) -> std::result::Result<bool, Stop> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Stop::Exhausted);
        }
        if b == comps.len() {
            self.blocks.push(cur.clone());
            if self.block(depth + 1, ki)? {
                return Ok(true);
            }
            self.blocks.pop();
            return Ok(false);
        }
        let mut cands = comps[b].clone();
        // Stable sort keeps lexicographic order among equally used orbits.
        cands.sort_by_key(|&s| self.count[self.orbit[s as usize]]);
        for s in cands {
            let o = self.orbit[s as usize];
            if self.count[o] >= self.mult {
                continue;
            }
            self.count[o] += 1;
            cur.push(s);
            if self.pattern(depth, ki, comps, b + 1, cur)? {
                return Ok(true);
            }
            self.count[o] -= 1;
            cur.pop();
        }
        Ok(false)
    }
}

/// Search for a covering design with the default node budget.
pub fn build_covering_design(n_copies: usize, j: usize, k: usize) -> Result<CoveringDesign> {
    build_covering_design_with_budget(n_copies, j, k, DEFAULT_NODE_BUDGET)
}

/// Depth-first search over base blocks of a cyclic design.
///
/// Each base block picks a `k`-subset `K` of copies and, for every pattern
/// on `K`, one weight-`j` string showing that pattern, so the block is
/// bijective on `K` by construction. The full family is the orbit of the
/// base blocks under a cyclic shift of the copies, which divides the search
/// space by the group order. Multiplicities are tracked per orbit.
pub fn build_covering_design_with_budget(n_copies: usize, j: usize, k: usize, budget: u64) -> Result<CoveringDesign> {
    if n_copies == 0 || n_copies > 16 {
        return Err(Error::InvalidArgument(format!("number of copies must be in 1..=16, got {n_copies}")));
    }
    if j > n_copies {
        return Err(Error::InvalidArgument(format!("weight {j} exceeds {n_copies} copies")));
    }
    if k != j.min(n_copies - j) {
        return Err(Error::InvalidArgument(format!("k must be min(j, N - j) = {}, got {k}", j.min(n_copies - j))));
    }
    let (mult, l) = design_parameters(n_copies, j, k);
    let strings = weight_class(n_copies, j);
    let group = choose_group(&strings, n_copies, l);

    let mut orbit = vec![usize::MAX; 1 << n_copies];
    let mut norb = 0;
    for &s in &strings {
        if orbit[s as usize] != usize::MAX {
            continue;
        }
        let mut t = s;
        for _ in 0..group {
            orbit[t as usize] = norb;
            t = rotate(t, n_copies, group);
        }
        norb += 1;
    }

    let mut subsets: Vec<Vec<usize>> = (0..n_copies).combinations(k).collect();
    subsets.reverse();
    let mut search = Search {
        n: n_copies,
        j,
        k,
        mult,
        nblocks: l / group,
        orbit,
        count: vec![0; norb],
        subsets,
        blocks: Vec::new(),
        nodes: 0,
        budget,
    };
    let found = match search.block(0, 0) {
        Ok(f) => f,
        Err(Stop::Exhausted) => false,
    };
    if !found {
        return Err(Error::DesignSearchExhausted { n: n_copies, j, nodes: search.nodes });
    }

    let mut sets = Vec::with_capacity(l);
    for base in &search.blocks {
        let mut cur = base.clone();
        for _ in 0..group {
            let mut sorted = cur.clone();
            sorted.sort_unstable();
            sets.push(sorted);
            cur = cur.iter().map(|&s| rotate(s, n_copies, group)).collect();
        }
    }
    let kept_positions = sets
        .iter()
        .enumerate()
        .map(|(i, s)| first_bijective(s, n_copies, k).ok_or(Error::NotBijective(i, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoveringDesign { n_copies, j, k, sets, n: mult, kept_positions })
}

impl CoveringDesign {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Number of sets containing each weight-`j` string, in increasing string order.
    pub fn multiplicities(&self) -> Vec<usize> {
        weight_class(self.n_copies, self.j)
            .iter()
            .map(|s| self.sets.iter().filter(|set| set.contains(s)).count())
            .collect()
    }

    /// Check every structural invariant; returns a description of the first failure.
    pub fn verify(&self) -> std::result::Result<(), String> {
        let (n, l) = design_parameters(self.n_copies, self.j, self.k);
        if self.n != n || self.sets.len() != l {
            return Err(format!("expected n={n}, L={l}; got n={}, L={}", self.n, self.sets.len()));
        }
        for (i, set) in self.sets.iter().enumerate() {
            if set.len() != 1 << self.k || set.iter().any(|s| s.count_ones() as usize != self.j) {
                return Err(format!("set {i} has the wrong size or weight"));
            }
            if !is_bijective_on(set, self.n_copies, &self.kept_positions[i]) {
                return Err(format!("set {i} is not bijective on {:?}", self.kept_positions[i]));
            }
        }
        if let Some((s, m)) = weight_class(self.n_copies, self.j)
            .into_iter()
            .zip(self.multiplicities())
            .find(|&(_, m)| m != self.n)
        {
            return Err(format!("string {s:b} is covered {m} times"));
        }
        Ok(())
    }

    /// Whether some permutation of the copies maps this family onto `other`
    /// (as an unordered family of sets).
    pub fn equivalent_up_to_relabeling(&self, other: &[Vec<u32>]) -> bool {
        let n = self.n_copies;
        let canon = |fam: &mut Vec<Vec<u32>>| {
            for s in fam.iter_mut() {
                s.sort_unstable();
            }
            fam.sort();
        };
        let mut target = other.to_vec();
        canon(&mut target);
        (0..n).permutations(n).any(|perm| {
            let mut mapped: Vec<Vec<u32>> = self
                .sets
                .iter()
                .map(|set| {
                    set.iter()
                        .map(|&s| (0..n).filter(|&p| bit(s, n, p) == 1).fold(0, |acc, p| acc | 1 << (n - 1 - perm[p])))
                        .collect()
                })
                .collect();
            canon(&mut mapped);
            mapped == target
        })
    }
}
