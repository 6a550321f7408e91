// SPDX-License-Identifier: Apache-2.0

//! Server side: accumulate reports into a dyadic sum tree and release debiased
//! running-count estimates.

use std::collections::{BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{check_horizon, level_count, Report};
use crate::error::{Error, Result};
use crate::privacy::scale_factor;

/// Tree node `[h, j]`: level `h` (leaves are level 1), 1-based position `j`.
pub type Node = (u32, usize);

/// Accumulated report values for every node of the balanced tree over `[1, d]`.
///
/// Stored level by level in a flat array of `2d - 1` counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SumTree {
    d: usize,
    values: Vec<i64>,
    counts: Vec<u64>,
}

impl SumTree {
    pub fn new(d: usize) -> Result<Self> {
        check_horizon(d)?;
        Ok(SumTree {
            d,
            values: vec![0; 2 * d - 1],
            counts: vec![0; 2 * d - 1],
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Nodes at level `h`: `d / 2^(h-1)`.
    pub fn width(&self, h: u32) -> usize {
        self.d >> (h - 1)
    }

    fn offset(&self, (h, j): Node) -> Option<usize> {
        if h == 0 || h > level_count(self.d) || j == 0 || j > self.width(h) {
            return None;
        }
        Some(2 * self.d - 2 * self.width(h) + j - 1)
    }

    /// `T_sum[h, j]`; `None` for an index outside the tree.
    pub fn get(&self, node: Node) -> Option<i64> {
        self.offset(node).map(|o| self.values[o])
    }

    /// Number of reports that landed in `node`.
    pub fn contributions(&self, node: Node) -> Option<u64> {
        self.offset(node).map(|o| self.counts[o])
    }

    pub fn add(&mut self, report: &Report) -> Result<()> {
        report.validate(self.d)?;
        let o = self
            .offset((report.h, report.node()))
            .expect("validated report maps to a node");
        self.values[o] += report.u as i64;
        self.counts[o] += 1;
        Ok(())
    }

    /// Nodewise sum with another tree over the same horizon.
    pub fn merge(&mut self, other: &SumTree) -> Result<()> {
        if other.d != self.d {
            return Err(Error::invalid(format!(
                "cannot merge trees with horizons {} and {}",
                self.d, other.d
            )));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = (Node, i64)> + '_ {
        (1..=level_count(self.d))
            .flat_map(move |h| (1..=self.width(h)).map(move |j| ((h, j), self.get((h, j)).unwrap())))
    }
}

/// Sums the `u` values of all reports per node.
pub fn accumulate<'a, I>(reports: I, d: usize) -> Result<SumTree>
where
    I: IntoIterator<Item = &'a Report>,
{
    let mut tree = SumTree::new(d)?;
    for r in reports {
        tree.add(r)?;
    }
    Ok(tree)
}

/// [`accumulate`] over chunks in parallel, merged nodewise.
pub fn accumulate_par(reports: &[Report], d: usize) -> Result<SumTree> {
    const CHUNK: usize = 1 << 14;
    let empty = SumTree::new(d)?;
    reports
        .par_chunks(CHUNK)
        .map(|chunk| accumulate(chunk, d))
        .try_reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(&b)?;
                Ok(a)
            },
        )
}

/// Tree nodes whose leaf ranges partition `[1, t]`, sorted by position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicCover {
    pub nodes: Vec<Node>,
}

impl DyadicCover {
    /// Leaf range `[lo, hi]` covered by `node`.
    pub fn leaf_range((h, j): Node) -> (usize, usize) {
        let size = 1usize << (h - 1);
        ((j - 1) * size + 1, j * size)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn check_timestep(t: usize, d: usize) -> Result<()> {
    check_horizon(d)?;
    if t == 0 || t > d {
        return Err(Error::invalid(format!("timestep {t} outside [1, {d}]")));
    }
    Ok(())
}

/// Dyadic decomposition of `[1, t]`: one node per set bit of `t`, largest first.
pub fn dyadic_cover(t: usize, d: usize) -> Result<DyadicCover> {
    check_timestep(t, d)?;
    let mut nodes = Vec::with_capacity(t.count_ones() as usize);
    let mut start = 0;
    for h in (1..=level_count(d)).rev() {
        let size = 1usize << (h - 1);
        if t & size != 0 {
            start += size;
            nodes.push((h, start / size));
        }
    }
    Ok(DyadicCover { nodes })
}

/// The cover obtained by literally running the pairwise merge loop: start from
/// the leaves `[1,1]..[1,t]` and replace sibling pairs `[h,i-1],[h,i]` (with `i`
/// even) by their parent `[h+1, i/2]` until none remain.
pub fn merge_loop_cover(t: usize, d: usize) -> Result<DyadicCover> {
    check_timestep(t, d)?;
    let mut cover: BTreeSet<Node> = (1..=t).map(|i| (1, i)).collect();
    let mut queue: VecDeque<Node> = cover.iter().copied().collect();
    while let Some((h, i)) = queue.pop_front() {
        if !cover.contains(&(h, i)) {
            continue;
        }
        let sibling = if i % 2 == 0 { (h, i - 1) } else { (h, i + 1) };
        if cover.contains(&sibling) {
            cover.remove(&(h, i));
            cover.remove(&sibling);
            let parent = (h + 1, i.max(sibling.1) / 2);
            cover.insert(parent);
            queue.push_back(parent);
        }
    }
    let mut nodes: Vec<Node> = cover.into_iter().collect();
    nodes.sort_by_key(|&n| DyadicCover::leaf_range(n).0);
    Ok(DyadicCover { nodes })
}

/// Multiplier turning a cover sum into an unbiased count:
/// `c_eps * k * (log2(d) + 1)`.
///
/// A client lands on a given change with probability `1/k`, on a given level
/// with probability `1/(log2(d) + 1)`, and its randomized response has bias
/// `1/c_eps`; the product inverts all three.
pub fn estimator_scale(epsilon: f64, k: usize, d: usize) -> Result<f64> {
    check_horizon(d)?;
    if k == 0 {
        return Err(Error::invalid("change budget k must be >= 1"));
    }
    Ok(scale_factor(epsilon)? * k as f64 * level_count(d) as f64)
}

/// Released running counts, optionally alongside ground truth (simulation only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEstimates {
    pub f_tilde: Vec<f64>,
    pub true_f: Option<Vec<i64>>,
}

impl MarginalEstimates {
    pub fn with_truth(mut self, true_f: Vec<i64>) -> Result<Self> {
        if true_f.len() != self.f_tilde.len() {
            return Err(Error::invalid("ground truth length differs from horizon"));
        }
        self.true_f = Some(true_f);
        Ok(self)
    }

    /// `|f_t - f~_t|` per step, when ground truth is attached.
    pub fn abs_errors(&self) -> Option<Vec<f64>> {
        self.true_f.as_ref().map(|truth| {
            truth
                .iter()
                .zip(&self.f_tilde)
                .map(|(&f, &g)| (f as f64 - g).abs())
                .collect()
        })
    }

    pub fn max_abs_error(&self) -> Option<f64> {
        self.abs_errors().map(|e| e.into_iter().fold(0.0, f64::max))
    }
}

/// `f~_t = c_eps * k * (log2(d) + 1) * sum_{[h,i] in cover(t)} T_sum[h,i]` for every `t`.
pub fn estimate_marginals(tree: &SumTree, epsilon: f64, k: usize, d: usize) -> Result<MarginalEstimates> {
    if tree.d() != d {
        return Err(Error::invalid(format!(
            "tree built for horizon {} but estimating for {d}",
            tree.d()
        )));
    }
    let scale = estimator_scale(epsilon, k, d)?;
    let f_tilde = (1..=d)
        .map(|t| {
            let cover = dyadic_cover(t, d)?;
            let sum: i64 = cover.nodes.iter().map(|&n| tree.get(n).unwrap()).sum();
            Ok(scale * sum as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MarginalEstimates {
        f_tilde,
        true_f: None,
    })
}
