//! Integer and set partitions, the refinement lattice on P([n]) and its
//! Möbius calculus.
//!
//! Set partitions are stored as restricted growth strings: position `i`
//! holds the index of the block containing element `i + 1`, with blocks
//! numbered in order of their smallest element. Two partitions are equal
//! exactly when their strings are equal, so a [`SetPartition`] can be used
//! directly as a map key, and the derived `Ord` is the lexicographic order
//! on canonical forms used everywhere for stable output.
//!
//! Elements are the labels `1..=n` in every public method.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default ceiling on the ground size of a full enumeration of P([n]).
pub const DEFAULT_ENUMERATION_CAP: usize = 13;

/// A partition of the integer `n` into non-increasing positive parts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntegerPartition {
    parts: Vec<usize>,
}

impl IntegerPartition {
    pub fn from_parts(mut parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidIntegerPartition("no parts".into()));
        }
        if parts.contains(&0) {
            return Err(Error::InvalidIntegerPartition("zero part".into()));
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Self { parts })
    }

    /// Builds `(1^{r_1} 2^{r_2} ...)` from `multiplicities[i - 1] = r_i`.
    pub fn from_multiplicities(multiplicities: &[usize]) -> Result<Self> {
        let mut parts = Vec::new();
        for (i, &r) in multiplicities.iter().enumerate().rev() {
            parts.extend(std::iter::repeat_n(i + 1, r));
        }
        Self::from_parts(parts)
    }

    /// The partitioned integer.
    pub fn n(&self) -> usize {
        self.parts.iter().sum()
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    /// Number of parts, `Σ r_i`.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// `r_1..r_n`: entry `i - 1` counts the parts equal to `i`.
    pub fn multiplicities(&self) -> Vec<usize> {
        let mut r = vec![0; self.n()];
        for &p in &self.parts {
            r[p - 1] += 1;
        }
        r
    }
}

impl fmt::Display for IntegerPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .multiplicities()
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 0)
            .map(|(i, r)| format!("{}^{}", i + 1, r))
            .collect();
        write!(f, "({})", terms.join(" "))
    }
}

impl FromStr for IntegerPartition {
    type Err = Error;

    /// Accepts the exponent form `(1^1 2^3)` or a plain part list `2,2,2,1`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s.trim().trim_start_matches('(').trim_end_matches(')').trim();
        let bad = |m: &str| Error::InvalidIntegerPartition(format!("{m}: {s:?}"));
        if body.contains('^') {
            let mut parts = Vec::new();
            for term in body.split_whitespace() {
                let (base, exp) = term.split_once('^').ok_or_else(|| bad("expected i^r"))?;
                let base: usize = base.parse().map_err(|_| bad("bad part"))?;
                let exp: usize = exp.parse().map_err(|_| bad("bad exponent"))?;
                parts.extend(std::iter::repeat_n(base, exp));
            }
            Self::from_parts(parts)
        } else {
            let parts = body
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().map_err(|_| bad("bad part")))
                .collect::<Result<Vec<usize>>>()?;
            Self::from_parts(parts)
        }
    }
}

/// All partitions of `n`, parts non-increasing, in reverse lexicographic order.
pub fn integer_partitions(n: usize) -> Vec<IntegerPartition> {
    fn go(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<IntegerPartition>) {
        if rest == 0 {
            out.push(IntegerPartition { parts: cur.clone() });
            return;
        }
        for p in (1..=rest.min(max)).rev() {
            cur.push(p);
            go(rest - p, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        go(n, n, &mut Vec::new(), &mut out);
    }
    out
}

/// A partition of `{1..n}` in canonical form.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetPartition {
    rgs: Vec<u16>,
}

impl SetPartition {
    /// Builds a partition of `{1..n}` from blocks of 1-based labels.
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPartition("ground set must be nonempty".into()));
        }
        let mut owner: Vec<Option<usize>> = vec![None; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &e in block {
                if e == 0 || e > n {
                    return Err(Error::InvalidPartition(format!("element {e} outside 1..={n}")));
                }
                if owner[e - 1].replace(b).is_some() {
                    return Err(Error::InvalidPartition(format!("element {e} appears twice")));
                }
            }
        }
        if let Some(missing) = owner.iter().position(Option::is_none) {
            return Err(Error::InvalidPartition(format!("element {} is not covered", missing + 1)));
        }
        Ok(Self::from_labels(owner.into_iter().map(|o| o.unwrap_or(0))))
    }

    /// Relabels arbitrary block ids into canonical first-occurrence order.
    pub(crate) fn from_labels<I, L>(labels: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: Copy + Eq + std::hash::Hash,
    {
        let mut seen = std::collections::HashMap::new();
        let rgs = labels
            .into_iter()
            .map(|l| {
                let next = seen.len() as u16;
                *seen.entry(l).or_insert(next)
            })
            .collect();
        Self { rgs }
    }

    /// Builds a partition from a restricted growth string.
    pub fn from_rgs(rgs: &[usize]) -> Result<Self> {
        if rgs.is_empty() {
            return Err(Error::InvalidPartition("ground set must be nonempty".into()));
        }
        let mut max = 0usize;
        for (i, &a) in rgs.iter().enumerate() {
            if (i == 0 && a != 0) || (i > 0 && a > max + 1) {
                return Err(Error::InvalidPartition(format!("not a restricted growth string: {rgs:?}")));
            }
            max = max.max(a);
        }
        Ok(Self { rgs: rgs.iter().map(|&a| a as u16).collect() })
    }

    /// The minimal element 0̂ (all singletons).
    pub fn finest(n: usize) -> Self {
        assert!(n > 0, "ground set must be nonempty");
        Self { rgs: (0..n as u16).collect() }
    }

    /// The maximal element 1̂ (a single block).
    pub fn coarsest(n: usize) -> Self {
        assert!(n > 0, "ground set must be nonempty");
        Self { rgs: vec![0; n] }
    }

    /// Consecutive rows `{1..n_1}, {n_1+1..n_1+n_2}, ...`.
    pub fn consecutive(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidPartition(format!("row sizes must be positive: {sizes:?}")));
        }
        let rgs = sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &s)| std::iter::repeat_n(b as u16, s))
            .collect();
        Ok(Self { rgs })
    }

    pub fn ground_size(&self) -> usize {
        self.rgs.len()
    }

    /// Number of blocks, `|π|`.
    pub fn block_count(&self) -> usize {
        self.rgs.iter().max().map_or(0, |&m| m as usize + 1)
    }

    /// The restricted growth string (0-based block index per element).
    pub fn rgs(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.rgs.iter().map(|&a| a as usize)
    }

    /// Index of the block containing the 1-based element `e`.
    pub fn block_of(&self, e: usize) -> usize {
        self.rgs[e - 1] as usize
    }

    /// Blocks of 1-based labels, in canonical order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.block_count()];
        for (i, &b) in self.rgs.iter().enumerate() {
            blocks[b as usize].push(i + 1);
        }
        blocks
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.block_count()];
        for &b in &self.rgs {
            sizes[b as usize] += 1;
        }
        sizes
    }

    pub fn is_finest(&self) -> bool {
        self.block_count() == self.ground_size()
    }

    pub fn is_coarsest(&self) -> bool {
        self.block_count() == 1
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.ground_size() != other.ground_size() {
            return Err(Error::GroundSizeMismatch { left: self.ground_size(), right: other.ground_size() });
        }
        Ok(())
    }

    /// `self ≤ other`: every block of `self` lies inside a block of `other`.
    pub fn leq(&self, other: &Self) -> Result<bool> {
        self.check_same(other)?;
        let mut image: Vec<Option<u16>> = vec![None; self.block_count()];
        for (&s, &p) in self.rgs.iter().zip(&other.rgs) {
            match image[s as usize] {
                None => image[s as usize] = Some(p),
                Some(q) if q != p => return Ok(false),
                _ => {}
            }
        }
        Ok(true)
    }

    /// Greatest lower bound: the nonempty pairwise intersections of blocks.
    pub fn meet(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_labels(self.rgs.iter().zip(&other.rgs).map(|(&a, &b)| (a, b))))
    }

    /// Least upper bound, by merging blocks that share an element.
    pub fn join(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let n = self.ground_size();
        let mut uf = UnionFind::new(n);
        for rgs in [&self.rgs, &other.rgs] {
            let mut first: Vec<Option<usize>> = vec![None; n];
            for (i, &b) in rgs.iter().enumerate() {
                match first[b as usize] {
                    None => first[b as usize] = Some(i),
                    Some(j) => uf.union(i, j),
                }
            }
        }
        Ok(Self::from_labels((0..n).map(|i| uf.find(i))))
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (bi, block) in self.blocks().iter().enumerate() {
            if bi > 0 {
                f.write_str(",")?;
            }
            f.write_str("{")?;
            for (i, e) in block.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{e}")?;
            }
            f.write_str("}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for SetPartition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SetPartition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for SetPartition {
    type Err = Error;

    /// Parses `{{1,6},{2},{3,5},{4}}`; whitespace is ignored and blocks may
    /// be given in any order. The ground size is the largest label.
    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::InvalidPartition(format!("cannot parse {s:?}"));
        let inner = compact
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(bad)?;
        let mut blocks = Vec::new();
        let mut rest = inner;
        while !rest.is_empty() {
            let body = rest.strip_prefix('{').ok_or_else(bad)?;
            let close = body.find('}').ok_or_else(bad)?;
            let block = body[..close]
                .split(',')
                .map(|t| t.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            blocks.push(block);
            rest = &body[close + 1..];
            rest = rest.strip_prefix(',').unwrap_or(rest);
        }
        let n = blocks.iter().flatten().copied().max().ok_or_else(bad)?;
        Self::new(n, blocks)
    }
}

/// Streams every partition of `{1..n}` once, in lexicographic order of
/// restricted growth strings.
#[derive(Debug, Clone)]
pub struct SetPartitions {
    next: Option<Vec<u16>>,
}

impl Iterator for SetPartitions {
    type Item = SetPartition;

    fn next(&mut self) -> Option<SetPartition> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        // rightmost position that can still grow
        let mut prefix_max = vec![0u16; succ.len()];
        for i in 1..succ.len() {
            prefix_max[i] = prefix_max[i - 1].max(succ[i - 1]);
        }
        for i in (1..succ.len()).rev() {
            if succ[i] <= prefix_max[i] {
                succ[i] += 1;
                succ[i + 1..].iter_mut().for_each(|a| *a = 0);
                self.next = Some(succ);
                break;
            }
        }
        Some(SetPartition { rgs: current })
    }
}

/// Enumerates P([n]) under the default cap.
pub fn set_partitions(n: usize) -> Result<SetPartitions> {
    set_partitions_capped(n, DEFAULT_ENUMERATION_CAP)
}

pub fn set_partitions_capped(n: usize, cap: usize) -> Result<SetPartitions> {
    if n == 0 {
        return Err(Error::InvalidPartition("ground set must be nonempty".into()));
    }
    if n > cap {
        return Err(Error::EnumerationCap { size: n, cap });
    }
    Ok(SetPartitions { next: Some(vec![0; n]) })
}

/// Bell number `B(n)`; exact for `n ≤ 40`.
pub fn bell(n: usize) -> u128 {
    assert!(n <= 40, "Bell({n}) does not fit in 128 bits");
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for &x in &row {
            let last = *next.last().unwrap();
            next.push(last + x);
        }
        row = next;
    }
    row[0]
}

fn factorial(n: usize) -> Result<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k)).ok_or(Error::Overflow("factorial"))
}

/// The class `λ(σ, π)`: block `j` of `π` contributes a part equal to the
/// number of blocks of `σ` it contains.
pub fn segment_class(sigma: &SetPartition, pi: &SetPartition) -> Result<IntegerPartition> {
    if !sigma.leq(pi)? {
        return Err(Error::NotOrdered { sigma: sigma.to_string(), pi: pi.to_string() });
    }
    let mut inside: Vec<std::collections::BTreeSet<u16>> = vec![Default::default(); pi.block_count()];
    for (&s, &p) in sigma.rgs.iter().zip(&pi.rgs) {
        inside[p as usize].insert(s);
    }
    IntegerPartition::from_parts(inside.iter().map(|b| b.len()).collect())
}

/// Number of partitions of `[n]` whose class relative to 1̂ is `λ`, i.e.
/// with `r_i` blocks of size `i`: `n! / Π (i!)^{r_i} r_i!`.
pub fn count_partitions_with_class(n: usize, class: &IntegerPartition) -> Result<u128> {
    if class.n() != n {
        return Err(Error::InvalidIntegerPartition(format!("{class} is not a partition of {n}")));
    }
    let mut denom = 1u128;
    for (i, &r) in class.multiplicities().iter().enumerate() {
        let fi = factorial(i + 1)?;
        for _ in 0..r {
            denom = denom.checked_mul(fi).ok_or(Error::Overflow("class count"))?;
        }
        denom = denom.checked_mul(factorial(r)?).ok_or(Error::Overflow("class count"))?;
    }
    Ok(factorial(n)? / denom)
}

/// Möbius function of the partition lattice; zero unless `σ ≤ π`.
pub fn mobius(sigma: &SetPartition, pi: &SetPartition) -> Result<i128> {
    if !sigma.leq(pi)? {
        return Ok(0);
    }
    let class = segment_class(sigma, pi)?;
    let mut value: i128 = 1;
    for &part in class.parts() {
        let f = i128::try_from(factorial(part - 1)?).map_err(|_| Error::Overflow("mobius"))?;
        value = value.checked_mul(f).ok_or(Error::Overflow("mobius"))?;
    }
    if (sigma.block_count() - pi.block_count()) % 2 == 1 {
        value = -value;
    }
    Ok(value)
}

/// Which way a lattice sum runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `G(σ) = Σ_{π ≤ σ} F(π)`.
    Down,
    /// `G(σ) = Σ_{π ≥ σ} F(π)`.
    Up,
}

fn complete_domain(values: &BTreeMap<SetPartition, f64>) -> Result<usize> {
    let n = values
        .keys()
        .next()
        .map(SetPartition::ground_size)
        .ok_or_else(|| Error::IncompleteTable("no values".into()))?;
    if values.keys().any(|p| p.ground_size() != n) {
        return Err(Error::IncompleteTable("mixed ground sizes".into()));
    }
    if n > 40 || values.len() as u128 != bell(n) {
        return Err(Error::IncompleteTable(format!("{} values for {} partitions of [{n}]", values.len(), bell(n.min(40)))));
    }
    Ok(n)
}

/// The zeta transform: `G(σ) = Σ_{π ≤ σ} F(π)` (down) or `Σ_{π ≥ σ}` (up).
pub fn zeta_accumulate(values: &BTreeMap<SetPartition, f64>, direction: Direction) -> Result<BTreeMap<SetPartition, f64>> {
    complete_domain(values)?;
    let mut out = BTreeMap::new();
    for sigma in values.keys() {
        let mut acc = 0.0;
        for (pi, v) in values {
            let related = match direction {
                Direction::Down => pi.leq(sigma)?,
                Direction::Up => sigma.leq(pi)?,
            };
            if related {
                acc += v;
            }
        }
        out.insert(sigma.clone(), acc);
    }
    Ok(out)
}

/// Möbius inversion over a complete table on P([n]).
///
/// `Down` recovers `F` from `G(σ) = Σ_{π≤σ} F(π)` via
/// `F(π) = Σ_{σ≤π} μ(σ,π) G(σ)`; `Up` is the dual.
pub fn mobius_invert(values: &BTreeMap<SetPartition, f64>, direction: Direction) -> Result<BTreeMap<SetPartition, f64>> {
    complete_domain(values)?;
    let mut out = BTreeMap::new();
    for pi in values.keys() {
        let mut acc = 0.0;
        for (sigma, g) in values {
            let mu = match direction {
                Direction::Down => mobius(sigma, pi)?,
                Direction::Up => mobius(pi, sigma)?,
            };
            if mu != 0 {
                acc += mu as f64 * g;
            }
        }
        out.insert(pi.clone(), acc);
    }
    Ok(out)
}

/// Every `ρ` with `σ ≤ ρ ≤ π`, in canonical order.
///
/// Built as the product, over blocks of `π`, of the partitions of the
/// `σ`-blocks inside each one.
pub fn enumerate_segment(sigma: &SetPartition, pi: &SetPartition) -> Result<Vec<SetPartition>> {
    if !sigma.leq(pi)? {
        return Err(Error::NotOrdered { sigma: sigma.to_string(), pi: pi.to_string() });
    }
    // σ-blocks grouped by the π-block that holds them
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); pi.block_count()];
    let sigma_blocks = sigma.blocks();
    for (si, block) in sigma_blocks.iter().enumerate() {
        groups[pi.block_of(block[0])].push(si);
    }
    let per_group: Vec<Vec<SetPartition>> = groups
        .iter()
        .map(|g| set_partitions_capped(g.len(), usize::MAX).map(|it| it.collect()))
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    let mut choice = vec![0usize; groups.len()];
    loop {
        let mut label = vec![(0usize, 0usize); sigma.ground_size()];
        for (gi, group) in groups.iter().enumerate() {
            let part = &per_group[gi][choice[gi]];
            for (pos, &si) in group.iter().enumerate() {
                for &e in &sigma_blocks[si] {
                    label[e - 1] = (gi, part.rgs[pos] as usize);
                }
            }
        }
        out.push(SetPartition::from_labels(label));
        // odometer over the per-group choices
        let mut k = 0;
        loop {
            if k == groups.len() {
                out.sort();
                return Ok(out);
            }
            choice[k] += 1;
            if choice[k] < per_group[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> SetPartition {
        s.parse().unwrap()
    }

    #[test]
    fn enumeration_counts_match_bell() {
        assert_eq!(set_partitions(1).unwrap().count(), 1);
        assert_eq!(set_partitions(3).unwrap().count(), 5);
        assert_eq!(set_partitions(4).unwrap().count(), 15);
        for n in 1..=9 {
            assert_eq!(set_partitions(n).unwrap().count() as u128, bell(n));
        }
    }

    #[test]
    fn enumeration_is_sorted_and_distinct() {
        let all: Vec<_> = set_partitions(6).unwrap().collect();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(all.first().unwrap(), &SetPartition::coarsest(6));
        assert_eq!(all.last().unwrap(), &SetPartition::finest(6));
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        assert!(matches!(set_partitions(14), Err(Error::EnumerationCap { size: 14, cap: 13 })));
        assert!(set_partitions_capped(14, 14).is_ok());
    }

    #[test]
    fn canonical_rendering_and_parsing() {
        let pi = SetPartition::new(6, vec![vec![4], vec![5, 3], vec![6, 1], vec![2]]).unwrap();
        assert_eq!(pi.to_string(), "{{1,6},{2},{3,5},{4}}");
        assert_eq!(p("{ {3,5}, {1,6}, {4}, {2} }"), pi);
        assert!("{{1,2},{2,3}}".parse::<SetPartition>().is_err());
        assert!("{{1,3}}".parse::<SetPartition>().is_err());
    }

    #[test]
    fn order_examples() {
        assert!(p("{{1,2},{3},{4,5}}").leq(&p("{{1,2,3},{4,5}}")).unwrap());
        assert!(!p("{{1,2,3},{4,5}}").leq(&p("{{1,2},{3,4,5}}")).unwrap());
        assert!(!p("{{1,2},{3,4,5}}").leq(&p("{{1,2,3},{4,5}}")).unwrap());
        let pi = p("{{1,4},{2,3,5}}");
        assert!(SetPartition::finest(5).leq(&pi).unwrap());
        assert!(pi.leq(&p("{{1,2}}")).is_err());
    }

    #[test]
    fn meet_and_join_examples() {
        let sigma = p("{{1,2},{3,4,5}}");
        let pi = p("{{1,2,3},{4,5}}");
        assert_eq!(sigma.meet(&pi).unwrap(), p("{{1,2},{3},{4,5}}"));
        assert_eq!(sigma.join(&pi).unwrap(), SetPartition::coarsest(5));
        let sigma = p("{{1,3},{2,4}}");
        let pi = p("{{1,2},{3},{4}}");
        assert_eq!(sigma.meet(&pi).unwrap(), SetPartition::finest(4));
        assert_eq!(sigma.join(&pi).unwrap(), SetPartition::coarsest(4));
        assert_eq!(pi.meet(&pi).unwrap(), pi);
        assert_eq!(pi.join(&pi).unwrap(), pi);
    }

    #[test]
    fn class_examples() {
        let c = segment_class(&p("{{1,2},{3},{4,5}}"), &p("{{1,2,3},{4,5}}")).unwrap();
        assert_eq!(c.to_string(), "(1^1 2^1)");
        let c = segment_class(&SetPartition::finest(5), &SetPartition::coarsest(5)).unwrap();
        assert_eq!(c.to_string(), "(5^1)");
        let pi = p("{{1,3},{2},{4,5}}");
        assert_eq!(segment_class(&pi, &pi).unwrap().to_string(), "(1^3)");
        assert!(segment_class(&SetPartition::coarsest(3), &SetPartition::finest(3)).is_err());
    }

    #[test]
    fn class_counts() {
        let c = |s: &str| s.parse::<IntegerPartition>().unwrap();
        assert_eq!(count_partitions_with_class(7, &c("(1^1 2^3)")).unwrap(), 105);
        assert_eq!(count_partitions_with_class(5, &c("(2^1 3^1)")).unwrap(), 10);
        assert_eq!(count_partitions_with_class(3, &c("(1^3)")).unwrap(), 1);
        assert!(count_partitions_with_class(6, &c("(1^3)")).is_err());
        for n in 1..=12 {
            let total: u128 = integer_partitions(n)
                .iter()
                .map(|l| count_partitions_with_class(n, l).unwrap())
                .sum();
            assert_eq!(total, bell(n));
        }
    }

    #[test]
    fn integer_partition_forms_agree() {
        let a: IntegerPartition = "(1^1 2^3)".parse().unwrap();
        let b: IntegerPartition = "2,1,2,2".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.parts(), &[2, 2, 2, 1]);
        assert_eq!(a.multiplicities(), vec![1, 3, 0, 0, 0, 0, 0]);
        assert_eq!(IntegerPartition::from_multiplicities(&[1, 3]).unwrap(), a);
        assert_eq!(integer_partitions(5).len(), 7);
    }

    #[test]
    fn mobius_examples() {
        assert_eq!(mobius(&SetPartition::finest(4), &SetPartition::coarsest(4)).unwrap(), -6);
        let pi = p("{{1,2},{3}}");
        assert_eq!(mobius(&pi, &pi).unwrap(), 1);
        assert_eq!(mobius(&SetPartition::coarsest(3), &pi).unwrap(), 0);
        for n in 2..=9 {
            let expected = (1..n as i128).product::<i128>() * if n % 2 == 0 { -1 } else { 1 };
            assert_eq!(mobius(&SetPartition::finest(n), &SetPartition::coarsest(n)).unwrap(), expected);
        }
    }

    #[test]
    fn mobius_inversion_of_constant_is_indicator_of_bottom() {
        let table: BTreeMap<_, _> = set_partitions(4).unwrap().map(|p| (p, 1.0)).collect();
        let f = mobius_invert(&table, Direction::Down).unwrap();
        for (pi, v) in f {
            let expected = if pi.is_finest() { 1.0 } else { 0.0 };
            assert_eq!(v, expected, "{pi}");
        }
    }

    #[test]
    fn inversion_rejects_incomplete_tables() {
        let mut table: BTreeMap<_, _> = set_partitions(3).unwrap().map(|p| (p, 1.0)).collect();
        table.remove(&SetPartition::finest(3));
        assert!(matches!(mobius_invert(&table, Direction::Up), Err(Error::IncompleteTable(_))));
    }

    #[test]
    fn segment_examples() {
        let seg = enumerate_segment(&p("{{1},{2},{3},{4,5}}"), &p("{{1,2,3},{4,5}}")).unwrap();
        assert_eq!(seg.len(), 5);
        let pi = p("{{1,2},{3}}");
        assert_eq!(enumerate_segment(&pi, &pi).unwrap(), vec![pi]);
        let full = enumerate_segment(&SetPartition::finest(3), &SetPartition::coarsest(3)).unwrap();
        assert_eq!(full, set_partitions(3).unwrap().collect::<Vec<_>>());
    }
}
