//! Diagrams Γ(π, σ), their multigraphs, and the partition classes that index
//! the diagram formulae.
//!
//! `π` fixes the rows of the diagram and `σ` the closed curves (edges, when
//! every block of `σ` is a pair). The classes `M`, `M⁰`, `M₂`, ... of
//! partitions `σ` relative to a row partition `π*` are produced by a pruned
//! search over restricted growth strings, so they come out in the same
//! lexicographic order as a filtered scan of P([n]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partitions::SetPartition;

/// Default ceiling on the ground size for class enumeration.
pub const DEFAULT_CLASS_CAP: usize = 12;

/// A pair of partitions of the same ground set: rows and closed curves.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Diagram {
    rows: SetPartition,
    edges: SetPartition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagramFlags {
    pub connected: bool,
    pub nonflat: bool,
    pub gaussian: bool,
    pub circular: bool,
}

impl Diagram {
    pub fn new(rows: SetPartition, edges: SetPartition) -> Result<Self> {
        if rows.ground_size() != edges.ground_size() {
            return Err(Error::GroundSizeMismatch { left: rows.ground_size(), right: edges.ground_size() });
        }
        Ok(Self { rows, edges })
    }

    pub fn rows(&self) -> &SetPartition {
        &self.rows
    }

    pub fn edges(&self) -> &SetPartition {
        &self.edges
    }

    /// `σ ∨ π = 1̂`.
    pub fn is_connected(&self) -> bool {
        self.rows.join(&self.edges).map(|j| j.is_coarsest()).unwrap_or(false)
    }

    /// `σ ∧ π = 0̂`: no curve meets a row twice.
    pub fn is_nonflat(&self) -> bool {
        self.rows.meet(&self.edges).map(|m| m.is_finest()).unwrap_or(false)
    }

    pub fn is_gaussian(&self) -> bool {
        self.edges.block_sizes().iter().all(|&s| s == 2)
    }

    /// Gaussian, with edges only between cyclically consecutive rows and at
    /// least one edge between every such pair.
    pub fn is_circular(&self) -> bool {
        self.to_multigraph().map(|g| g.is_cycle_shaped()).unwrap_or(false)
    }

    pub fn classify(&self) -> DiagramFlags {
        DiagramFlags {
            connected: self.is_connected(),
            nonflat: self.is_nonflat(),
            gaussian: self.is_gaussian(),
            circular: self.is_circular(),
        }
    }

    /// One vertex per row and one edge per pair of `σ`; a pair inside a
    /// single row becomes a loop.
    pub fn to_multigraph(&self) -> Result<Multigraph> {
        if !self.is_gaussian() {
            return Err(Error::NotGaussian);
        }
        let edges = self
            .edges
            .blocks()
            .iter()
            .map(|b| {
                let (u, v) = (self.rows.block_of(b[0]), self.rows.block_of(b[1]));
                (u.min(v), u.max(v))
            })
            .collect();
        Ok(Multigraph { vertex_count: self.rows.block_count(), edges })
    }

    /// Text art: one line per row, each vertex drawn as `•` tagged with the
    /// curve it belongs to.
    pub fn render(&self) -> String {
        let tag = |b: usize| -> String {
            if b < 26 {
                ((b'a' + b as u8) as char).to_string()
            } else {
                format!("#{b}")
            }
        };
        let mut out = String::new();
        for (r, row) in self.rows.blocks().iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|&e| format!("•{}", tag(self.edges.block_of(e)))).collect();
            out.push_str(&format!("row {:>2} | {}\n", r + 1, cells.join(" ")));
        }
        let curves: Vec<String> = self
            .edges
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let members: Vec<String> = b.iter().map(usize::to_string).collect();
                format!("{}=[{}]", tag(i), members.join(","))
            })
            .collect();
        out.push_str(&format!("curves | {}\n", curves.join(" ")));
        out
    }
}

/// Undirected multigraph on `0..vertex_count`; loops allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Multigraph {
    pub vertex_count: usize,
    /// Edges as `(u, v)` with `u ≤ v`, one entry per edge.
    pub edges: Vec<(usize, usize)>,
}

impl Multigraph {
    pub fn loop_count(&self) -> usize {
        self.edges.iter().filter(|(u, v)| u == v).count()
    }

    pub fn multiplicity(&self, u: usize, v: usize) -> usize {
        let key = (u.min(v), u.max(v));
        self.edges.iter().filter(|&&e| e == key).count()
    }

    pub fn is_connected(&self) -> bool {
        if self.vertex_count == 0 {
            return true;
        }
        let mut seen = vec![false; self.vertex_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &(u, v) in &self.edges {
                let next = if u == x { v } else if v == x { u } else { continue };
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Every edge joins cyclically consecutive vertices, and each
    /// consecutive pair carries at least one edge.
    pub fn is_cycle_shaped(&self) -> bool {
        let k = self.vertex_count;
        if k < 2 || self.edges.is_empty() {
            return false;
        }
        let consecutive = |u: usize, v: usize| v == u + 1 || (u == 0 && v == k - 1);
        if !self.edges.iter().all(|&(u, v)| u != v && consecutive(u, v)) {
            return false;
        }
        let pairs = if k == 2 { 1 } else { k };
        (0..pairs).all(|i| self.multiplicity(i, (i + 1) % k) > 0)
    }
}

impl fmt::Display for Multigraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self.edges.iter().map(|(u, v)| format!("v{}-v{}", u + 1, v + 1)).collect();
        write!(f, "{} vertices; edges: {}", self.vertex_count, edges.join(" "))
    }
}

/// The partition classes used by the moment and cumulant formulae.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartitionClass {
    /// Non-flat and connected.
    M,
    /// Non-flat.
    M0,
    /// Non-flat, connected, all blocks of size two.
    M2,
    /// Non-flat, all blocks of size two.
    M20,
    /// Non-flat, connected, all blocks of size at least two.
    MGe2,
    /// Non-flat, all blocks of size at least two.
    MGe20,
    /// Members of `M2` whose diagram is circular.
    M2Circular,
}

impl PartitionClass {
    pub const ALL: [PartitionClass; 7] = [
        PartitionClass::M,
        PartitionClass::M0,
        PartitionClass::M2,
        PartitionClass::M20,
        PartitionClass::MGe2,
        PartitionClass::MGe20,
        PartitionClass::M2Circular,
    ];

    fn block_bounds(self) -> (usize, usize) {
        match self {
            PartitionClass::M | PartitionClass::M0 => (1, usize::MAX),
            PartitionClass::M2 | PartitionClass::M20 | PartitionClass::M2Circular => (2, 2),
            PartitionClass::MGe2 | PartitionClass::MGe20 => (2, usize::MAX),
        }
    }

    fn needs_connected(self) -> bool {
        matches!(self, PartitionClass::M | PartitionClass::M2 | PartitionClass::MGe2 | PartitionClass::M2Circular)
    }

    /// Membership test straight from the definitions.
    pub fn contains(self, pi_star: &SetPartition, sigma: &SetPartition) -> Result<bool> {
        let d = Diagram::new(pi_star.clone(), sigma.clone())?;
        let (lo, hi) = self.block_bounds();
        let sizes_ok = sigma.block_sizes().iter().all(|&s| s >= lo && s <= hi);
        Ok(sizes_ok
            && d.is_nonflat()
            && (!self.needs_connected() || d.is_connected())
            && (self != PartitionClass::M2Circular || d.is_circular()))
    }
}

impl fmt::Display for PartitionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PartitionClass::M => "M",
            PartitionClass::M0 => "M0",
            PartitionClass::M2 => "M2",
            PartitionClass::M20 => "M2_0",
            PartitionClass::MGe2 => "Mge2",
            PartitionClass::MGe20 => "Mge2_0",
            PartitionClass::M2Circular => "M2c",
        };
        f.write_str(s)
    }
}

impl FromStr for PartitionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "m" => PartitionClass::M,
            "m0" => PartitionClass::M0,
            "m2" => PartitionClass::M2,
            "m2_0" | "m20" => PartitionClass::M20,
            "mge2" => PartitionClass::MGe2,
            "mge2_0" | "mge20" => PartitionClass::MGe20,
            "m2c" => PartitionClass::M2Circular,
            _ => return Err(Error::InvalidPartition(format!("unknown class {s:?}"))),
        })
    }
}

/// Depth-first search over restricted growth strings with block-size and
/// non-flatness pruning. Visits admissible partitions in lexicographic order.
struct ClassSearch<'a> {
    row_of: Vec<usize>,
    nonflat: bool,
    min_block: usize,
    max_block: usize,
    labels: Vec<usize>,
    sizes: Vec<usize>,
    row_masks: Vec<u128>,
    visit: &'a mut dyn FnMut(&[usize]),
}

impl ClassSearch<'_> {
    fn run(&mut self, i: usize) {
        let n = self.row_of.len();
        let remaining = n - i;
        let deficit: usize = self.sizes.iter().map(|&s| self.min_block.saturating_sub(s)).sum();
        if deficit > remaining {
            return;
        }
        if i == n {
            (self.visit)(&self.labels);
            return;
        }
        let row_bit = 1u128 << self.row_of[i];
        for b in 0..self.sizes.len() {
            if self.sizes[b] >= self.max_block || (self.nonflat && self.row_masks[b] & row_bit != 0) {
                continue;
            }
            self.labels.push(b);
            self.sizes[b] += 1;
            self.row_masks[b] |= row_bit;
            self.run(i + 1);
            self.row_masks[b] &= !row_bit;
            self.sizes[b] -= 1;
            self.labels.pop();
        }
        self.labels.push(self.sizes.len());
        self.sizes.push(1);
        self.row_masks.push(row_bit);
        self.run(i + 1);
        self.row_masks.pop();
        self.sizes.pop();
        self.labels.pop();
    }
}

/// Enumerates a class relative to the row partition `π*`, in canonical order.
pub fn enumerate_class(pi_star: &SetPartition, which: PartitionClass) -> Result<Vec<SetPartition>> {
    enumerate_class_capped(pi_star, which, DEFAULT_CLASS_CAP)
}

pub fn enumerate_class_capped(pi_star: &SetPartition, which: PartitionClass, cap: usize) -> Result<Vec<SetPartition>> {
    let n = pi_star.ground_size();
    if n > cap {
        return Err(Error::EnumerationCap { size: n, cap });
    }
    if pi_star.block_count() > 128 {
        return Err(Error::EnumerationCap { size: pi_star.block_count(), cap: 128 });
    }
    let (min_block, max_block) = which.block_bounds();
    let mut found = Vec::new();
    let mut visit = |labels: &[usize]| {
        let sigma = SetPartition::from_rgs(labels).expect("search yields restricted growth strings");
        found.push(sigma);
    };
    ClassSearch {
        row_of: pi_star.rgs().collect(),
        nonflat: true,
        min_block,
        max_block,
        labels: Vec::with_capacity(n),
        sizes: Vec::new(),
        row_masks: Vec::new(),
        visit: &mut visit,
    }
    .run(0);

    if which.needs_connected() {
        found.retain(|sigma| Diagram { rows: pi_star.clone(), edges: sigma.clone() }.is_connected());
    }
    if which == PartitionClass::M2Circular {
        found.retain(|sigma| Diagram { rows: pi_star.clone(), edges: sigma.clone() }.is_circular());
    }
    Ok(found)
}

/// All `σ` with `σ ∧ π = 0̂`.
pub fn solve_nonflat(pi: &SetPartition) -> Result<Vec<SetPartition>> {
    enumerate_class(pi, PartitionClass::M0)
}

/// Singleton blocks, heavier blocks, and every ordered split of the heavy
/// blocks into two nonempty groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoissonBlockSplit {
    pub b1: Vec<Vec<usize>>,
    pub b2: Vec<Vec<usize>>,
    pub pb2: Vec<(Vec<Vec<usize>>, Vec<Vec<usize>>)>,
}

pub fn poisson_split(sigma: &SetPartition) -> PoissonBlockSplit {
    let (b1, b2): (Vec<_>, Vec<_>) = sigma.blocks().into_iter().partition(|b| b.len() == 1);
    let m = b2.len();
    let mut pb2 = Vec::new();
    if m >= 2 {
        for mask in 1..(1u64 << m) - 1 {
            let (mut r1, mut r2) = (Vec::new(), Vec::new());
            for (i, b) in b2.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    r1.push(b.clone());
                } else {
                    r2.push(b.clone());
                }
            }
            pb2.push((r1, r2));
        }
    }
    PoissonBlockSplit { b1, b2, pb2 }
}

/// Number of edges between the first two rows of a circular diagram on
/// four rows of `d` points each.
pub fn circular_rank(d: usize, sigma: &SetPartition) -> Result<usize> {
    let pi_star = SetPartition::consecutive(&[d; 4])?;
    if !PartitionClass::M2Circular.contains(&pi_star, sigma)? {
        return Err(Error::NotCircular(sigma.to_string()));
    }
    let g = Diagram::new(pi_star, sigma.clone())?.to_multigraph()?;
    Ok(g.multiplicity(0, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::set_partitions;

    fn p(s: &str) -> SetPartition {
        s.parse().unwrap()
    }

    fn brute(pi_star: &SetPartition, which: PartitionClass) -> Vec<SetPartition> {
        set_partitions(pi_star.ground_size())
            .unwrap()
            .filter(|s| which.contains(pi_star, s).unwrap())
            .collect()
    }

    #[test]
    fn classification_examples() {
        let d = Diagram::new(p("{{1,2,3},{4,5},{6,7,8}}"), p("{{1,4,6},{2,5},{3,7,8}}")).unwrap();
        let f = d.classify();
        assert!(f.connected && !f.nonflat && !f.gaussian && !f.circular);

        let d = Diagram::new(p("{{1,2},{3}}"), p("{{1,2},{3}}")).unwrap();
        assert!(!d.is_connected());

        let d = Diagram::new(p("{{1,2},{3,4},{5,6},{7,8},{9,10}}"), p("{{1,3},{2,9},{4,6},{5,7},{8,10}}")).unwrap();
        let f = d.classify();
        assert!(f.circular && f.connected && f.gaussian && f.nonflat);

        let d = Diagram::new(p("{{1,2,3},{4,5},{6,7},{8,9},{10,11,12}}"), p("{{1,4},{2,11},{3,10},{5,7},{6,8},{9,12}}"))
            .unwrap();
        assert!(d.is_circular());
    }

    #[test]
    fn multigraph_examples() {
        let d = Diagram::new(p("{{1,2,3},{4},{5,6}}"), p("{{1,4},{2,5},{3,6}}")).unwrap();
        let g = d.to_multigraph().unwrap();
        assert_eq!(g.vertex_count, 3);
        assert_eq!(g.multiplicity(0, 1), 1);
        assert_eq!(g.multiplicity(0, 2), 2);
        assert_eq!(g.loop_count(), 0);
        assert!(g.is_connected());

        let d = Diagram::new(p("{{1,2},{3,4,5},{6,7,8}}"), p("{{1,2},{3,4},{5,8},{6,7}}")).unwrap();
        let g = d.to_multigraph().unwrap();
        assert_eq!(g.loop_count(), 3);
        assert!(!g.is_connected());

        let d = Diagram::new(p("{{1,2},{3}}"), p("{{1,2,3}}")).unwrap();
        assert_eq!(d.to_multigraph(), Err(Error::NotGaussian));
    }

    #[test]
    fn nonflat_solution_counts() {
        assert_eq!(solve_nonflat(&p("{{1,2},{3,4}}")).unwrap().len(), 7);
        assert_eq!(solve_nonflat(&p("{{1,2},{3},{4}}")).unwrap().len(), 10);
        assert_eq!(solve_nonflat(&SetPartition::finest(2)).unwrap(), vec![SetPartition::coarsest(2), SetPartition::finest(2)]);
    }

    #[test]
    fn class_examples() {
        let rows = SetPartition::consecutive(&[2, 2, 2]).unwrap();
        assert_eq!(enumerate_class(&rows, PartitionClass::M2).unwrap().len(), 8);
        let rows = SetPartition::consecutive(&[3, 3]).unwrap();
        assert_eq!(enumerate_class(&rows, PartitionClass::M2).unwrap().len(), 6);
        let rows = SetPartition::consecutive(&[3, 2]).unwrap();
        assert!(enumerate_class(&rows, PartitionClass::M2).unwrap().is_empty());
        let m = enumerate_class(&SetPartition::finest(4), PartitionClass::MGe20).unwrap();
        assert_eq!(m, vec![p("{{1,2,3,4}}"), p("{{1,2},{3,4}}"), p("{{1,3},{2,4}}"), p("{{1,4},{2,3}}")]);
    }

    #[test]
    fn pruned_search_matches_filtered_scan() {
        for sizes in [&[2, 2][..], &[1, 2, 3], &[2, 2, 2], &[3, 1, 1, 2], &[2, 2, 2, 2], &[1, 1, 1, 1, 1]] {
            let rows = SetPartition::consecutive(sizes).unwrap();
            for which in PartitionClass::ALL {
                assert_eq!(enumerate_class(&rows, which).unwrap(), brute(&rows, which), "{sizes:?} {which}");
            }
        }
    }

    #[test]
    fn class_cap() {
        let rows = SetPartition::consecutive(&[13]).unwrap();
        assert!(matches!(enumerate_class(&rows, PartitionClass::M0), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn poisson_split_examples() {
        let s = poisson_split(&p("{{1,2},{3,4},{5,6},{7}}"));
        assert_eq!(s.b1, vec![vec![7]]);
        assert_eq!(s.b2.len(), 3);
        assert_eq!(s.pb2.len(), 6);
        for (r1, r2) in &s.pb2 {
            assert!(!r1.is_empty() && !r2.is_empty());
            assert_eq!(r1.len() + r2.len(), 3);
        }
        let s = poisson_split(&p("{{1,2,3},{4},{5}}"));
        assert_eq!(s.b1.len(), 2);
        assert!(s.pb2.is_empty());
        let s = poisson_split(&p("{{1,2,3},{4,5},{6},{7}}"));
        assert_eq!(s.pb2.len(), 2);
        let s = poisson_split(&SetPartition::finest(4));
        assert!(s.b2.is_empty() && s.pb2.is_empty());
    }

    #[test]
    fn rank_examples() {
        let sigma = p("{{1,4},{2,5},{3,12},{6,9},{7,10},{8,11}}");
        assert_eq!(circular_rank(3, &sigma).unwrap(), 2);
        let sigma = p("{{1,8},{2,3},{4,5},{6,7}}");
        assert_eq!(circular_rank(2, &sigma).unwrap(), 1);
        // not circular: edge between rows 1 and 3
        let sigma = p("{{1,5},{2,3},{4,7},{6,8}}");
        assert!(circular_rank(2, &sigma).is_err());
    }

    #[test]
    fn render_marks_every_vertex() {
        let d = Diagram::new(p("{{1,2,3},{4},{5,6}}"), p("{{1,4},{2,5},{3,6}}")).unwrap();
        let art = d.render();
        assert_eq!(art.matches('•').count(), 6);
        assert!(art.contains("row  1 | •a •b •c"));
    }
}
