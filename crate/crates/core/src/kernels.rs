//! Cell systems and symmetric step-function kernels.
//!
//! A [`CellSystem`] is a finite list of disjoint cells with positive masses;
//! integrals against the control measure become finite sums weighted by those
//! masses. A [`Kernel`] stores one coefficient per multiset of cells (sorted
//! tuple) and is symmetric by construction; a [`Tensor`] holds coefficients on
//! ordered tuples and is what contractions produce before symmetrization.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

/// Upper bound on the number of cells in a system.
pub const MAX_CELLS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct CellSystem {
    labels: Vec<String>,
    masses: Vec<f64>,
}

impl CellSystem {
    pub fn new(labels: Vec<String>, masses: Vec<f64>) -> Result<Self> {
        if labels.len() != masses.len() {
            return Err(Error::InvalidSystem(format!("{} labels but {} masses", labels.len(), masses.len())));
        }
        if labels.is_empty() {
            return Err(Error::InvalidSystem("no cells".into()));
        }
        if labels.len() > MAX_CELLS {
            return Err(Error::EnumerationCap { size: labels.len(), cap: MAX_CELLS });
        }
        for (l, &m) in labels.iter().zip(&masses) {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidSystem(format!("cell {l} has mass {m}")));
            }
            if l.is_empty() || l.chars().any(char::is_whitespace) || l.starts_with('#') {
                return Err(Error::InvalidSystem(format!("bad label {l:?}")));
            }
        }
        let mut sorted: Vec<&String> = labels.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidSystem(format!("duplicate label {}", w[0])));
        }
        Ok(Self { labels, masses })
    }

    /// Cells `c1..cm` with the given masses.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        Self::new((1..=masses.len()).map(|j| format!("c{j}")).collect(), masses)
    }

    pub fn uniform(m: usize, mass: f64) -> Result<Self> {
        Self::from_masses(vec![mass; m])
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn mass(&self, j: usize) -> f64 {
        self.masses[j]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> &str {
        &self.labels[j]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    fn weight(&self, tuple: &[usize]) -> f64 {
        tuple.iter().map(|&c| self.masses[c]).product()
    }
}

fn same_system(a: &Arc<CellSystem>, b: &Arc<CellSystem>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::SystemMismatch)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `α!` for the multiset given by a sorted tuple.
fn multiplicity_factorial(sorted: &[usize]) -> f64 {
    let mut acc = 1.0;
    let mut run = 0usize;
    for i in 0..sorted.len() {
        run = if i > 0 && sorted[i] == sorted[i - 1] { run + 1 } else { 1 };
        acc *= run as f64;
    }
    acc
}

fn has_repeat(sorted: &[usize]) -> bool {
    sorted.windows(2).any(|w| w[0] == w[1])
}

/// Advances to the next lexicographic permutation; false after the last one.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Every distinct rearrangement of a sorted tuple.
pub fn arrangements(sorted: &[usize]) -> Vec<Vec<usize>> {
    let mut cur = sorted.to_vec();
    let mut out = vec![cur.clone()];
    while next_permutation(&mut cur) {
        out.push(cur.clone());
    }
    out
}

/// Nondecreasing `d`-tuples over `0..m`, in lexicographic order.
pub fn canonical_tuples(m: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(d);
    fn rec(m: usize, d: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        let start = cur.last().copied().unwrap_or(0);
        for c in start..m {
            cur.push(c);
            rec(m, d, cur, out);
            cur.pop();
        }
    }
    rec(m, d, &mut cur, &mut out);
    out
}

/// A symmetric kernel of degree `d` on a cell system.
#[derive(Debug, Clone)]
pub struct Kernel {
    system: Arc<CellSystem>,
    degree: usize,
    coeffs: BTreeMap<Vec<usize>, f64>,
    offdiag: bool,
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        self.degree == other.degree && self.coeffs == other.coeffs && *self.system == *other.system
    }
}

impl Kernel {
    pub fn zero(system: Arc<CellSystem>, degree: usize) -> Self {
        Self { system, degree, coeffs: BTreeMap::new(), offdiag: true }
    }

    /// Builds a kernel from `(tuple, coefficient)` pairs. Tuples may be given
    /// in any order; a later entry for the same multiset replaces an earlier one.
    pub fn from_entries(
        system: Arc<CellSystem>,
        degree: usize,
        entries: impl IntoIterator<Item = (Vec<usize>, f64)>,
    ) -> Result<Self> {
        let mut k = Self::zero(system, degree);
        for (t, v) in entries {
            k.set(&t, v)?;
        }
        Ok(k)
    }

    /// Evaluates `f` on every multiset of cells.
    pub fn from_fn(system: Arc<CellSystem>, degree: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let m = system.len();
        let mut k = Self::zero(system, degree);
        for t in canonical_tuples(m, degree) {
            let v = f(&t);
            k.insert_sorted(t, v);
        }
        k
    }

    /// The degree-0 kernel with value `c`.
    pub fn constant(system: Arc<CellSystem>, c: f64) -> Self {
        let mut k = Self::zero(system, 0);
        k.insert_sorted(Vec::new(), c);
        k
    }

    fn insert_sorted(&mut self, t: Vec<usize>, v: f64) {
        if v == 0.0 {
            self.coeffs.remove(&t);
            self.offdiag = self.coeffs.keys().all(|t| !has_repeat(t));
        } else {
            if has_repeat(&t) {
                self.offdiag = false;
            }
            self.coeffs.insert(t, v);
        }
    }

    pub fn set(&mut self, tuple: &[usize], value: f64) -> Result<()> {
        let t = self.canonical(tuple)?;
        if !value.is_finite() {
            return Err(Error::InvalidSystem(format!("non-finite coefficient at {tuple:?}")));
        }
        self.insert_sorted(t, value);
        Ok(())
    }

    fn canonical(&self, tuple: &[usize]) -> Result<Vec<usize>> {
        if tuple.len() != self.degree {
            return Err(Error::DegreeMismatch(format!("tuple of length {} for degree {}", tuple.len(), self.degree)));
        }
        if let Some(&c) = tuple.iter().find(|&&c| c >= self.system.len()) {
            return Err(Error::IndexOutOfRange(format!("cell {c} in a system of {}", self.system.len())));
        }
        let mut t = tuple.to_vec();
        t.sort_unstable();
        Ok(t)
    }

    /// Coefficient at any ordering of `tuple`.
    pub fn value(&self, tuple: &[usize]) -> f64 {
        let mut t = tuple.to_vec();
        t.sort_unstable();
        self.coeffs.get(&t).copied().unwrap_or(0.0)
    }

    pub fn system(&self) -> &Arc<CellSystem> {
        &self.system
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_offdiag(&self) -> bool {
        self.offdiag
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Nonzero coefficients keyed by sorted tuple.
    pub fn entries(&self) -> impl Iterator<Item = (&Vec<usize>, f64)> + '_ {
        self.coeffs.iter().map(|(t, &v)| (t, v))
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.len()
    }

    /// Nonzero coefficients on every ordered tuple.
    pub fn ordered_entries(&self) -> Vec<(Vec<usize>, f64)> {
        self.coeffs
            .iter()
            .flat_map(|(t, &v)| arrangements(t).into_iter().map(move |u| (u, v)))
            .collect()
    }

    /// The restriction to tuples of pairwise distinct cells.
    pub fn offdiag_part(&self) -> Kernel {
        Kernel {
            system: self.system.clone(),
            degree: self.degree,
            coeffs: self.coeffs.iter().filter(|(t, _)| !has_repeat(t)).map(|(t, &v)| (t.clone(), v)).collect(),
            offdiag: true,
        }
    }

    pub fn scale(&self, c: f64) -> Kernel {
        Kernel::from_entries(self.system.clone(), self.degree, self.coeffs.iter().map(|(t, &v)| (t.clone(), c * v)))
            .expect("tuples already canonical")
    }

    pub fn add(&self, other: &Kernel) -> Result<Kernel> {
        same_system(&self.system, &other.system)?;
        self.check_degree(other)?;
        let mut out = self.clone();
        for (t, &v) in &other.coeffs {
            let cur = out.coeffs.get(t).copied().unwrap_or(0.0);
            out.insert_sorted(t.clone(), cur + v);
        }
        Ok(out)
    }

    fn check_degree(&self, other: &Kernel) -> Result<()> {
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch(format!("{} vs {}", self.degree, other.degree)));
        }
        Ok(())
    }

    /// `Σ` over ordered tuples of `f g Π ν`.
    pub fn inner_product(&self, other: &Kernel) -> Result<f64> {
        same_system(&self.system, &other.system)?;
        self.check_degree(other)?;
        let d = factorial(self.degree);
        Ok(self
            .coeffs
            .iter()
            .filter_map(|(t, &v)| other.coeffs.get(t).map(|&w| (t, v * w)))
            .map(|(t, vw)| vw * self.system.weight(t) * d / multiplicity_factorial(t))
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner_product(self).expect("same kernel")
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &Kernel) -> f64 {
        let keys = self.coeffs.keys().chain(other.coeffs.keys());
        keys.map(|t| (self.value(t) - other.value(t)).abs()).fold(0.0, f64::max)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            system: self.system.clone(),
            degree: self.degree,
            entries: self.ordered_entries().into_iter().collect(),
        }
    }
}

/// Coefficients on ordered tuples; not assumed symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    system: Arc<CellSystem>,
    degree: usize,
    entries: BTreeMap<Vec<usize>, f64>,
}

impl Tensor {
    pub fn from_entries(
        system: Arc<CellSystem>,
        degree: usize,
        entries: impl IntoIterator<Item = (Vec<usize>, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (t, v) in entries {
            if t.len() != degree {
                return Err(Error::DegreeMismatch(format!("tuple of length {} for degree {degree}", t.len())));
            }
            if let Some(&c) = t.iter().find(|&&c| c >= system.len()) {
                return Err(Error::IndexOutOfRange(format!("cell {c} in a system of {}", system.len())));
            }
            if v != 0.0 {
                map.insert(t, v);
            }
        }
        Ok(Self { system, degree, entries: map })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn system(&self) -> &Arc<CellSystem> {
        &self.system
    }

    pub fn value(&self, tuple: &[usize]) -> f64 {
        self.entries.get(tuple).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<usize>, f64)> + '_ {
        self.entries.iter().map(|(t, &v)| (t, v))
    }

    pub fn inner_product(&self, other: &Tensor) -> Result<f64> {
        same_system(&self.system, &other.system)?;
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch(format!("{} vs {}", self.degree, other.degree)));
        }
        Ok(self
            .entries
            .iter()
            .filter_map(|(t, &v)| other.entries.get(t).map(|&w| v * w * self.system.weight(t)))
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner_product(self).expect("same tensor")
    }

    /// `(1/d!) Σ_w f(t_w)`.
    pub fn symmetrize(&self) -> Kernel {
        let d = factorial(self.degree);
        let mut acc: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (t, &v) in &self.entries {
            let mut s = t.clone();
            s.sort_unstable();
            let w = multiplicity_factorial(&s) / d;
            *acc.entry(s).or_insert(0.0) += v * w;
        }
        Kernel::from_entries(self.system.clone(), self.degree, acc).expect("tuples in range")
    }
}

/// `f ⋆_r^l g` on ordered tuples `(γ, t, s)`: the first `r` slots of both
/// kernels are identified and the first `l` of those are summed against `ν`.
pub fn contract(f: &Kernel, g: &Kernel, r: usize, l: usize) -> Result<Tensor> {
    same_system(&f.system, &g.system)?;
    let (p, q) = (f.degree, g.degree);
    if r > p.min(q) || l > r {
        return Err(Error::IndexOutOfRange(format!("contraction ({r},{l}) for degrees {p} and {q}")));
    }
    let sys = &f.system;
    let mut by_prefix: HashMap<Vec<usize>, Vec<(Vec<usize>, f64)>> = HashMap::new();
    for (u, v) in g.ordered_entries() {
        by_prefix.entry(u[..r].to_vec()).or_default().push((u[r..].to_vec(), v));
    }
    let mut out: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for (u, v) in f.ordered_entries() {
        let Some(matches) = by_prefix.get(&u[..r]) else { continue };
        let w = v * sys.weight(&u[..l]);
        for (s, gv) in matches {
            let mut key = Vec::with_capacity(p + q - r - l);
            key.extend_from_slice(&u[l..]);
            key.extend_from_slice(s);
            *out.entry(key).or_insert(0.0) += w * gv;
        }
    }
    Tensor::from_entries(sys.clone(), p + q - r - l, out)
}

/// `f ⊗_0 g`.
pub fn tensor0(f: &Kernel, g: &Kernel) -> Result<Tensor> {
    contract(f, g, 0, 0)
}

/// `f ⊗_r g = f ⋆_r^r g`.
pub fn contract_full(f: &Kernel, g: &Kernel, r: usize) -> Result<Tensor> {
    contract(f, g, r, r)
}

/// Occupation counts `α` of a sorted tuple over `m` cells.
pub fn multiindex_of(sorted: &[usize], m: usize) -> Vec<usize> {
    let mut a = vec![0; m];
    for &c in sorted {
        a[c] += 1;
    }
    a
}

/// Sorted tuple listing cell `j` exactly `α_j` times.
pub fn tuple_of(alpha: &[usize]) -> Vec<usize> {
    alpha.iter().enumerate().flat_map(|(j, &a)| std::iter::repeat_n(j, a)).collect()
}

/// Coefficients `c_α` with `f = Σ c_α e(α)` in the basis `e_j = 1_{c_j}/√ν_j`.
pub fn hermite_decompose(f: &Kernel) -> BTreeMap<Vec<usize>, f64> {
    let m = f.system.len();
    let q = factorial(f.degree);
    f.coeffs
        .iter()
        .map(|(t, &v)| {
            let scale: f64 = t.iter().map(|&c| f.system.mass(c).sqrt()).product();
            (multiindex_of(t, m), v * scale * q / multiplicity_factorial(t))
        })
        .collect()
}

/// The symmetrized basis tensor `e(α)`.
pub fn basis_element(system: Arc<CellSystem>, alpha: &[usize]) -> Result<Kernel> {
    if alpha.len() != system.len() {
        return Err(Error::DegreeMismatch(format!("multi-index of length {} for {} cells", alpha.len(), system.len())));
    }
    let t = tuple_of(alpha);
    let scale: f64 = t.iter().map(|&c| system.mass(c).sqrt()).product();
    let v = multiplicity_factorial(&t) / factorial(t.len()) / scale;
    Kernel::from_entries(system, t.len(), [(t, v)])
}

/// Kernel with independent uniform(−1, 1) coefficients on every multiset,
/// restricted to distinct cells when `offdiag` is set.
pub fn random_kernel<R: Rng + ?Sized>(system: Arc<CellSystem>, degree: usize, offdiag: bool, rng: &mut R) -> Kernel {
    Kernel::from_fn(system, degree, |t| {
        let v = rng.random_range(-1.0..1.0);
        if offdiag && has_repeat(t) {
            0.0
        } else {
            v
        }
    })
}

/// A cell system with named kernels, as read from a kernel spec file.
///
/// ```text
/// # comment
/// cell a 1.5
/// cell b 0.25
/// kernel f 2
/// a b 0.5
/// a a -1
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub system: Arc<CellSystem>,
    pub kernels: Vec<(String, Kernel)>,
}

impl KernelSpec {
    pub fn kernel(&self, name: &str) -> Option<&Kernel> {
        self.kernels.iter().find(|(n, _)| n == name).map(|(_, k)| k)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, m) in self.system.labels.iter().zip(&self.system.masses) {
            writeln!(f, "cell {l} {m}")?;
        }
        for (name, k) in &self.kernels {
            writeln!(f, "kernel {name} {}", k.degree)?;
            for (t, v) in k.entries() {
                for &c in t {
                    write!(f, "{} ", self.system.label(c))?;
                }
                writeln!(f, "{v}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let mut labels = Vec::new();
        let mut masses = Vec::new();
        // (name, degree, entries with line numbers)
        let mut raw: Vec<(String, usize, Vec<(usize, Vec<String>, f64)>)> = Vec::new();
        for (i, line) in s.lines().enumerate() {
            let ln = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            match words[0] {
                "cell" => {
                    if !raw.is_empty() {
                        return Err(perr(ln, "cells must precede kernels".into()));
                    }
                    let [_, label, mass] = words[..] else {
                        return Err(perr(ln, "expected `cell <label> <mass>`".into()));
                    };
                    labels.push(label.to_string());
                    masses.push(mass.parse::<f64>().map_err(|e| perr(ln, format!("mass {mass:?}: {e}")))?);
                }
                "kernel" => {
                    let [_, name, degree] = words[..] else {
                        return Err(perr(ln, "expected `kernel <name> <degree>`".into()));
                    };
                    let d: usize = degree.parse().map_err(|e| perr(ln, format!("degree {degree:?}: {e}")))?;
                    if d == 0 {
                        return Err(perr(ln, "degree must be at least 1".into()));
                    }
                    if raw.iter().any(|(n, ..)| n == name) {
                        return Err(perr(ln, format!("kernel {name} defined twice")));
                    }
                    raw.push((name.to_string(), d, Vec::new()));
                }
                _ => {
                    let Some((_, d, entries)) = raw.last_mut() else {
                        return Err(perr(ln, format!("unexpected {:?} before any kernel", words[0])));
                    };
                    if words.len() != *d + 1 {
                        return Err(perr(ln, format!("expected {d} cell labels and a coefficient")));
                    }
                    let v: f64 = words[*d].parse().map_err(|e| perr(ln, format!("coefficient {:?}: {e}", words[*d])))?;
                    if !v.is_finite() {
                        return Err(perr(ln, "coefficient must be finite".into()));
                    }
                    entries.push((ln, words[..*d].iter().map(|w| w.to_string()).collect(), v));
                }
            }
        }
        let system = Arc::new(CellSystem::new(labels, masses).map_err(|e| perr(0, e.to_string()))?);
        let mut kernels = Vec::new();
        for (name, d, entries) in raw {
            let mut k = Kernel::zero(system.clone(), d);
            let mut seen = std::collections::BTreeSet::new();
            for (ln, cells, v) in entries {
                let t = cells
                    .iter()
                    .map(|c| system.index_of(c).ok_or_else(|| perr(ln, format!("unknown cell {c}"))))
                    .collect::<Result<Vec<_>>>()?;
                let t = k.canonical(&t).map_err(|e| perr(ln, e.to_string()))?;
                if !seen.insert(t.clone()) {
                    return Err(perr(ln, "repeated entry for the same cells".into()));
                }
                k.insert_sorted(t, v);
            }
            kernels.push((name, k));
        }
        Ok(Self { system, kernels })
    }
}
