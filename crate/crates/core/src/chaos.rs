//! Diagram formulae for joint moments and cumulants of multiple integrals,
//! and product formulae for their chaos decompositions.
//!
//! Every integral is an exact finite sum over cells. For a partition `σ` of
//! the slots of `f_1, ..., f_k`, one cell is assigned per block; the block
//! contributes its mass when the measure's expected diagonal of that order is
//! nonzero and kills the term otherwise.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulants::{cumulants_from_moments, JointMomentTable};
use crate::diagrams::{enumerate_class_capped, PartitionClass, DEFAULT_CLASS_CAP};
use crate::error::{Error, Result};
use crate::kernels::{contract, CellSystem, Kernel, Tensor};
use crate::partitions::SetPartition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Gaussian,
    Poisson,
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeasureKind::Gaussian => "gaussian",
            MeasureKind::Poisson => "poisson",
        })
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "g" => Ok(MeasureKind::Gaussian),
            "poisson" | "compensated-poisson" | "p" => Ok(MeasureKind::Poisson),
            _ => Err(Error::Parse { line: 0, msg: format!("unknown measure kind {s:?}") }),
        }
    }
}

/// What a block of a given size contributes after taking expectations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockWeight {
    Zero,
    Mass,
}

/// Expected diagonal measure of order `n`: Gaussian keeps only pairs,
/// compensated Poisson keeps every order from two up.
pub fn expected_diagonal(kind: MeasureKind, n: usize) -> BlockWeight {
    match (kind, n) {
        (MeasureKind::Gaussian, 2) => BlockWeight::Mass,
        (MeasureKind::Poisson, n) if n >= 2 => BlockWeight::Mass,
        _ => BlockWeight::Zero,
    }
}

fn diagram_classes(kind: MeasureKind) -> (PartitionClass, PartitionClass) {
    match kind {
        MeasureKind::Gaussian => (PartitionClass::M20, PartitionClass::M2),
        MeasureKind::Poisson => (PartitionClass::MGe20, PartitionClass::MGe2),
    }
}

/// Kernel lookups on ordered tuples, dense when small enough.
enum Lookup<'a> {
    Dense { m: usize, values: Vec<f64> },
    Sparse(&'a Kernel),
}

impl<'a> Lookup<'a> {
    fn new(k: &'a Kernel) -> Self {
        let m = k.system().len();
        match m.checked_pow(k.degree() as u32) {
            Some(size) if size <= 1 << 20 => {
                let mut values = vec![0.0; size];
                for (t, v) in k.ordered_entries() {
                    values[t.iter().fold(0, |acc, &c| acc * m + c)] = v;
                }
                Lookup::Dense { m, values }
            }
            _ => Lookup::Sparse(k),
        }
    }

    fn get(&self, cells: &[usize], slots: &[usize]) -> f64 {
        match self {
            Lookup::Dense { m, values } => values[slots.iter().fold(0, |acc, &b| acc * m + cells[b])],
            Lookup::Sparse(k) => k.value(&slots.iter().map(|&b| cells[b]).collect::<Vec<_>>()),
        }
    }
}

/// Role of a block when summing over cell assignments.
#[derive(Clone, Copy, PartialEq)]
enum Role {
    Integrate,
    Free,
}

/// Sums `Π_i f_i(slots) Π_{integrated b} ν(c_b)` over cell assignments to the
/// blocks of `σ`, reporting each nonzero partial product keyed by the cells of
/// the free blocks.
struct Assignment<'a> {
    system: &'a CellSystem,
    lookups: Vec<Lookup<'a>>,
    slots: Vec<Vec<usize>>,
    ready: Vec<Vec<usize>>,
    roles: Vec<Role>,
}

impl<'a> Assignment<'a> {
    fn new(sigma: &SetPartition, fs: &'a [Kernel], roles: Vec<Role>) -> Self {
        let mut slots = Vec::with_capacity(fs.len());
        let mut ready = vec![Vec::new(); sigma.block_count()];
        let mut offset = 0;
        for (i, f) in fs.iter().enumerate() {
            let s: Vec<usize> = (offset..offset + f.degree()).map(|e| sigma.block_of(e + 1)).collect();
            offset += f.degree();
            match s.iter().max() {
                Some(&last) => ready[last].push(i),
                None => ready[0].push(i),
            }
            slots.push(s);
        }
        Self { system: fs[0].system(), lookups: fs.iter().map(Lookup::new).collect(), slots, ready, roles }
    }

    fn run(&self, visit: &mut impl FnMut(&[usize], f64)) {
        let mut cells = vec![0; self.roles.len()];
        self.rec(0, &mut cells, 1.0, visit);
    }

    fn rec(&self, b: usize, cells: &mut Vec<usize>, acc: f64, visit: &mut impl FnMut(&[usize], f64)) {
        if b == self.roles.len() {
            visit(cells, acc);
            return;
        }
        for c in 0..self.system.len() {
            cells[b] = c;
            let mut v = acc;
            if self.roles[b] == Role::Integrate {
                v *= self.system.mass(c);
            }
            for &i in &self.ready[b] {
                v *= self.lookups[i].get(cells, &self.slots[i]);
                if v == 0.0 {
                    break;
                }
            }
            if v != 0.0 {
                self.rec(b + 1, cells, v, visit);
            }
        }
    }
}

fn check_same_system(fs: &[Kernel]) -> Result<()> {
    let Some(first) = fs.first() else {
        return Err(Error::DegreeMismatch("no kernels".into()));
    };
    for f in &fs[1..] {
        if !(Arc::ptr_eq(f.system(), first.system()) || f.system() == first.system()) {
            return Err(Error::SystemMismatch);
        }
    }
    Ok(())
}

fn slot_partition(fs: &[Kernel]) -> Result<SetPartition> {
    if let Some(i) = fs.iter().position(|f| f.degree() == 0) {
        return Err(Error::DegreeMismatch(format!("kernel {} has degree 0", i + 1)));
    }
    SetPartition::consecutive(&fs.iter().map(Kernel::degree).collect::<Vec<_>>())
}

/// `∫ f_{σ,k} dν^{|σ|}` with block weights from [`expected_diagonal`].
pub fn f_sigma_integral(sigma: &SetPartition, fs: &[Kernel], kind: MeasureKind) -> Result<f64> {
    check_same_system(fs)?;
    let n: usize = fs.iter().map(Kernel::degree).sum();
    if n != sigma.ground_size() {
        return Err(Error::DegreeMismatch(format!("kernels have {n} slots but σ partitions {}", sigma.ground_size())));
    }
    if sigma.block_sizes().iter().any(|&s| expected_diagonal(kind, s) == BlockWeight::Zero) {
        return Ok(0.0);
    }
    let plan = Assignment::new(sigma, fs, vec![Role::Integrate; sigma.block_count()]);
    let mut total = 0.0;
    plan.run(&mut |_, v| total += v);
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramTerm {
    pub sigma: SetPartition,
    pub value: f64,
}

/// Per-`σ` contributions to a moment or cumulant, in lexicographic `σ` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramReport {
    pub kind: MeasureKind,
    pub quantity: Quantity,
    pub degrees: Vec<usize>,
    pub terms: Vec<DiagramTerm>,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Moment,
    Cumulant,
}

/// Sums `f_sigma_integral` over the moment (flat-allowed) or cumulant
/// (connected) diagram class, refusing ground sets above `cap`.
pub fn diagram_sum(kind: MeasureKind, fs: &[Kernel], quantity: Quantity, cap: usize) -> Result<DiagramReport> {
    check_same_system(fs)?;
    if kind == MeasureKind::Poisson && fs.iter().any(|f| !f.is_offdiag()) {
        return Err(Error::NotOffDiagonal);
    }
    let pi_star = slot_partition(fs)?;
    let (moment_class, cumulant_class) = diagram_classes(kind);
    let class = match quantity {
        Quantity::Moment => moment_class,
        Quantity::Cumulant => cumulant_class,
    };
    let sigmas = enumerate_class_capped(&pi_star, class, cap)?;
    let values: Vec<f64> =
        sigmas.par_iter().map(|s| f_sigma_integral(s, fs, kind)).collect::<Result<_>>()?;
    let total = values.iter().sum::<f64>() + 0.0;
    let terms = sigmas.into_iter().zip(values).map(|(sigma, value)| DiagramTerm { sigma, value }).collect();
    Ok(DiagramReport { kind, quantity, degrees: fs.iter().map(Kernel::degree).collect(), terms, total })
}

/// `E[I_{n_1}(f_1) ⋯ I_{n_k}(f_k)]`.
pub fn joint_moment(kind: MeasureKind, fs: &[Kernel]) -> Result<f64> {
    diagram_sum(kind, fs, Quantity::Moment, DEFAULT_CLASS_CAP).map(|r| r.total)
}

/// `χ(I_{n_1}(f_1), ..., I_{n_k}(f_k))`.
pub fn joint_cumulant(kind: MeasureKind, fs: &[Kernel]) -> Result<f64> {
    diagram_sum(kind, fs, Quantity::Cumulant, DEFAULT_CLASS_CAP).map(|r| r.total)
}

/// Joint moments of every nonempty sub-collection of `fs`, as a table.
pub fn moment_table(kind: MeasureKind, fs: &[Kernel]) -> Result<JointMomentTable> {
    let mut err = None;
    let table = JointMomentTable::from_fn(fs.len(), |b| {
        let sub: Vec<Kernel> = b.iter().map(|&i| fs[i - 1].clone()).collect();
        joint_moment(kind, &sub).unwrap_or_else(|e| {
            err.get_or_insert(e);
            f64::NAN
        })
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(table),
    }
}

/// Joint cumulant obtained from the moment table rather than from connected
/// diagrams.
pub fn joint_cumulant_via_moments(kind: MeasureKind, fs: &[Kernel]) -> Result<f64> {
    Ok(cumulants_from_moments(&moment_table(kind, fs)?).full())
}

/// `Σ_m I_m(h_m)` with `h_0` a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosDecomposition {
    system: Arc<CellSystem>,
    constant: f64,
    terms: BTreeMap<usize, Kernel>,
}

impl ChaosDecomposition {
    pub fn zero(system: Arc<CellSystem>) -> Self {
        Self { system, constant: 0.0, terms: BTreeMap::new() }
    }

    pub fn system(&self) -> &Arc<CellSystem> {
        &self.system
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Kernel of order `m ≥ 1`, if present.
    pub fn kernel(&self, m: usize) -> Option<&Kernel> {
        self.terms.get(&m)
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &Kernel)> + '_ {
        self.terms.iter().map(|(&m, k)| (m, k))
    }

    /// Adds `c · h` to the order of `h`.
    pub fn add_term(&mut self, c: f64, h: &Kernel) -> Result<()> {
        if h.degree() == 0 {
            self.constant += c * h.value(&[]);
            return Ok(());
        }
        let scaled = h.scale(c);
        let merged = match self.terms.remove(&h.degree()) {
            Some(k) => k.add(&scaled)?,
            None => scaled,
        };
        if !merged.is_zero() {
            self.terms.insert(h.degree(), merged);
        }
        Ok(())
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    /// Largest coefficient difference over all orders, constant included.
    pub fn max_abs_diff(&self, other: &ChaosDecomposition) -> f64 {
        let mut d = (self.constant - other.constant).abs();
        let orders: std::collections::BTreeSet<usize> = self.terms.keys().chain(other.terms.keys()).copied().collect();
        for m in orders {
            let z = Kernel::zero(self.system.clone(), m);
            let a = self.terms.get(&m).unwrap_or(&z);
            let b = other.terms.get(&m).unwrap_or(&z);
            d = d.max(a.max_abs_diff(b));
        }
        d
    }

    /// Every kernel restricted to distinct cells.
    pub fn offdiag_part(&self) -> ChaosDecomposition {
        ChaosDecomposition {
            system: self.system.clone(),
            constant: self.constant,
            terms: self.terms.iter().map(|(&m, k)| (m, k.offdiag_part())).collect(),
        }
    }

    /// `E[(Σ I_m(h_m))²] = c² + Σ m!‖h_m‖²`.
    pub fn second_moment(&self) -> f64 {
        self.constant.powi(2)
            + self.terms.iter().map(|(&m, k)| (1..=m).map(|j| j as f64).product::<f64>() * k.norm_sq()).sum::<f64>()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn check_pair(f: &Kernel, g: &Kernel) -> Result<()> {
    check_same_system(&[f.clone(), g.clone()])?;
    if f.degree() == 0 || g.degree() == 0 {
        return Err(Error::DegreeMismatch("product factors need degree at least 1".into()));
    }
    Ok(())
}

/// `I_p(f) I_q(g) = Σ_r r! C(p,r) C(q,r) I_{p+q−2r}(sym(f ⊗_r g))`.
pub fn product_gaussian(f: &Kernel, g: &Kernel) -> Result<ChaosDecomposition> {
    check_pair(f, g)?;
    let (p, q) = (f.degree(), g.degree());
    let mut out = ChaosDecomposition::zero(f.system().clone());
    for r in 0..=p.min(q) {
        let c = factorial(r) * binomial(p, r) * binomial(q, r);
        out.add_term(c, &contract(f, g, r, r)?.symmetrize())?;
    }
    Ok(out)
}

/// `I_p(f) I_q(g) = Σ_r r! C(p,r) C(q,r) Σ_l C(r,l) I_{p+q−r−l}(sym(f ⋆_r^l g))`.
pub fn product_poisson(f: &Kernel, g: &Kernel) -> Result<ChaosDecomposition> {
    check_pair(f, g)?;
    if !f.is_offdiag() || !g.is_offdiag() {
        return Err(Error::NotOffDiagonal);
    }
    poisson_terms(f, g)
}

fn poisson_terms(f: &Kernel, g: &Kernel) -> Result<ChaosDecomposition> {
    let (p, q) = (f.degree(), g.degree());
    let mut out = ChaosDecomposition::zero(f.system().clone());
    for r in 0..=p.min(q) {
        for l in 0..=r {
            let c = factorial(r) * binomial(p, r) * binomial(q, r) * binomial(r, l);
            out.add_term(c, &contract(f, g, r, l)?.symmetrize())?;
        }
    }
    Ok(out)
}

/// Product of the binary formula's results, folded left to right.
///
/// Intermediate Poisson kernels keep their values on repeated cells: the
/// binary formula is applied to them as-is, which reproduces the `σ`
/// expansion of [`product_general`] exactly.
pub fn product_iterated(kind: MeasureKind, fs: &[Kernel]) -> Result<ChaosDecomposition> {
    check_same_system(fs)?;
    if kind == MeasureKind::Poisson && fs.iter().any(|f| !f.is_offdiag()) {
        return Err(Error::NotOffDiagonal);
    }
    let mut acc = ChaosDecomposition::zero(fs[0].system().clone());
    acc.add_term(1.0, &fs[0])?;
    for g in &fs[1..] {
        let mut next = ChaosDecomposition::zero(acc.system.clone());
        next.add_term(acc.constant, g)?;
        for h in acc.terms.values() {
            let part = match kind {
                MeasureKind::Gaussian => product_gaussian(h, g)?,
                MeasureKind::Poisson => poisson_terms(h, g)?,
            };
            next.add_constant(part.constant);
            for k in part.terms.values() {
                next.add_term(1.0, k)?;
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// One reduced term of the general product formula: the slots grouped by
/// `σ`, the blocks integrated against `ν`, and the symmetric kernel on the
/// remaining blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTerm {
    pub sigma: SetPartition,
    pub integrated: Vec<Vec<usize>>,
    pub kept: Vec<Vec<usize>>,
    pub kernel: Kernel,
}

/// Expands `Π I_{n_i}(f_i)` as a sum over non-flat `σ`, each reduced to a
/// single multiple integral of lower order.
pub fn product_general(kind: MeasureKind, fs: &[Kernel]) -> Result<Vec<ReducedTerm>> {
    check_same_system(fs)?;
    if kind == MeasureKind::Poisson && fs.iter().any(|f| !f.is_offdiag()) {
        return Err(Error::NotOffDiagonal);
    }
    let pi_star = slot_partition(fs)?;
    let sigmas = enumerate_class_capped(&pi_star, PartitionClass::M0, DEFAULT_CLASS_CAP)?;
    let mut out = Vec::new();
    for sigma in sigmas {
        let blocks = sigma.blocks();
        let choices: Vec<Vec<bool>> = match kind {
            MeasureKind::Gaussian => {
                if blocks.iter().any(|b| b.len() > 2) {
                    continue;
                }
                vec![blocks.iter().map(|b| b.len() == 2).collect()]
            }
            MeasureKind::Poisson => {
                let heavy: Vec<usize> = (0..blocks.len()).filter(|&i| blocks[i].len() >= 2).collect();
                (0..1u64 << heavy.len())
                    .map(|mask| {
                        let mut v = vec![false; blocks.len()];
                        for (j, &i) in heavy.iter().enumerate() {
                            v[i] = mask >> j & 1 == 1;
                        }
                        v
                    })
                    .collect()
            }
        };
        for integrate in choices {
            let roles: Vec<Role> = integrate.iter().map(|&x| if x { Role::Integrate } else { Role::Free }).collect();
            let free: Vec<usize> = (0..blocks.len()).filter(|&i| !integrate[i]).collect();
            let plan = Assignment::new(&sigma, fs, roles);
            let mut acc: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
            plan.run(&mut |cells, v| {
                *acc.entry(free.iter().map(|&i| cells[i]).collect()).or_insert(0.0) += v;
            });
            let kernel = Tensor::from_entries(fs[0].system().clone(), free.len(), acc)?.symmetrize();
            let (integrated, kept) = (0..blocks.len()).fold((Vec::new(), Vec::new()), |(mut a, mut k), i| {
                if integrate[i] { a.push(blocks[i].clone()) } else { k.push(blocks[i].clone()) }
                (a, k)
            });
            out.push(ReducedTerm { sigma: sigma.clone(), integrated, kept, kernel });
        }
    }
    Ok(out)
}

/// Sums reduced terms order by order.
pub fn flatten(system: Arc<CellSystem>, terms: &[ReducedTerm]) -> Result<ChaosDecomposition> {
    let mut out = ChaosDecomposition::zero(system);
    for t in terms {
        out.add_term(1.0, &t.kernel)?;
    }
    Ok(out)
}

fn binary_product(kind: MeasureKind, f: &Kernel, g: &Kernel) -> Result<ChaosDecomposition> {
    match kind {
        MeasureKind::Gaussian => product_gaussian(f, g),
        MeasureKind::Poisson => product_poisson(f, g),
    }
}

/// `|m! ⟨h_m, h⟩ − E[I_p(f) I_q(g) I_m(h)]|` where `h_m` is the order-`m`
/// kernel of the product `I_p(f) I_q(g)`.
pub fn projection_consistency(kind: MeasureKind, f: &Kernel, g: &Kernel, h: &Kernel) -> Result<f64> {
    let m = h.degree();
    let prod = binary_product(kind, f, g)?;
    let lhs = match prod.kernel(m) {
        Some(k) => factorial(m) * k.inner_product(h)?,
        None => 0.0,
    };
    let rhs = joint_moment(kind, &[f.clone(), g.clone(), h.clone()])?;
    Ok((lhs - rhs).abs())
}

/// `M_ij = f(i, j) ν_j` for a degree-2 kernel.
pub fn weighted_matrix(f: &Kernel) -> Result<Vec<Vec<f64>>> {
    if f.degree() != 2 {
        return Err(Error::DegreeMismatch(format!("expected degree 2, got {}", f.degree())));
    }
    let s = f.system();
    Ok((0..s.len()).map(|i| (0..s.len()).map(|j| f.value(&[i, j]) * s.mass(j)).collect()).collect())
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// `χ_k(I_2^G(f)) = 2^{k−1} (k−1)! tr(M^k)` for `k ≥ 2`.
pub fn second_chaos_cumulant(f: &Kernel, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::IndexOutOfRange(format!("cumulant order {k}")));
    }
    let m = weighted_matrix(f)?;
    let mut p = m.clone();
    for _ in 1..k {
        p = mat_mul(&p, &m);
    }
    let trace: f64 = (0..p.len()).map(|i| p[i][i]).sum();
    Ok(2f64.powi(k as i32 - 1) * factorial(k - 1) * trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{random_kernel, tensor0};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sys(masses: &[f64]) -> Arc<CellSystem> {
        Arc::new(CellSystem::from_masses(masses.to_vec()).unwrap())
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn weight_rule() {
        assert_eq!(expected_diagonal(MeasureKind::Gaussian, 3), BlockWeight::Zero);
        assert_eq!(expected_diagonal(MeasureKind::Gaussian, 2), BlockWeight::Mass);
        assert_eq!(expected_diagonal(MeasureKind::Gaussian, 1), BlockWeight::Zero);
        assert_eq!(expected_diagonal(MeasureKind::Poisson, 4), BlockWeight::Mass);
        assert_eq!(expected_diagonal(MeasureKind::Poisson, 1), BlockWeight::Zero);
    }

    #[test]
    fn isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = sys(&[0.5, 1.0, 2.0]);
        for p in 1..=3 {
            for q in 1..=3 {
                let f = random_kernel(s.clone(), p, true, &mut rng);
                let g = random_kernel(s.clone(), q, true, &mut rng);
                let expected = if p == q { factorial(p) * f.inner_product(&g).unwrap() } else { 0.0 };
                for kind in [MeasureKind::Gaussian, MeasureKind::Poisson] {
                    let m = joint_moment(kind, &[f.clone(), g.clone()]).unwrap();
                    assert!(close(m, expected, 1e-12), "{kind} p={p} q={q}");
                    // two-row diagrams are connected as soon as they are non-flat
                    assert!(close(joint_cumulant(kind, &[f.clone(), g.clone()]).unwrap(), m, 1e-12));
                }
            }
        }
    }

    #[test]
    fn poisson_first_chaos_fourth_moment() {
        let s = sys(&[0.5, 1.5, 2.0]);
        let f = Kernel::from_fn(s.clone(), 1, |t| [0.3, -1.0, 0.7][t[0]]);
        let int = |k: i32| (0..3).map(|c| f.value(&[c]).powi(k) * s.mass(c)).sum::<f64>();
        let fs = vec![f.clone(); 4];
        let m = joint_moment(MeasureKind::Poisson, &fs).unwrap();
        assert!(close(m, int(4) + 3.0 * int(2).powi(2), 1e-12));
        assert!(close(joint_cumulant(MeasureKind::Poisson, &fs).unwrap(), int(4), 1e-12));
    }

    #[test]
    fn gaussian_vanishing_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = sys(&[0.5, 1.0]);
        let f = random_kernel(s.clone(), 2, false, &mut rng);
        let g = random_kernel(s.clone(), 1, false, &mut rng);
        assert_eq!(joint_moment(MeasureKind::Gaussian, &[f.clone(), g.clone()]).unwrap(), 0.0);
        assert_eq!(joint_moment(MeasureKind::Gaussian, &[f.clone(), f.clone(), g.clone()]).unwrap(), 0.0);
        assert_eq!(joint_cumulant(MeasureKind::Gaussian, &[g.clone(), g.clone(), g.clone()]).unwrap(), 0.0);
        let sigma: SetPartition = "{{1,2,3},{4}}".parse().unwrap();
        assert_eq!(f_sigma_integral(&sigma, &[f.clone(), f.clone()], MeasureKind::Gaussian).unwrap(), 0.0);
    }

    #[test]
    fn single_cell_is_product_of_coefficients() {
        let s = sys(&[1.0]);
        let f = Kernel::from_entries(s.clone(), 2, [(vec![0, 0], 3.0)]).unwrap();
        let sigma: SetPartition = "{{1,3},{2,4}}".parse().unwrap();
        assert_eq!(f_sigma_integral(&sigma, &[f.clone(), f.clone()], MeasureKind::Gaussian).unwrap(), 9.0);
    }

    #[test]
    fn poisson_requires_offdiag() {
        let s = sys(&[1.0, 1.0]);
        let f = Kernel::from_entries(s, 2, [(vec![0, 0], 1.0)]).unwrap();
        assert_eq!(joint_moment(MeasureKind::Poisson, &[f.clone(), f]), Err(Error::NotOffDiagonal));
    }

    #[test]
    fn second_chaos_cumulants_match_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let s = sys(&[0.5, 1.0, 2.0]);
        let f = random_kernel(s.clone(), 2, false, &mut rng);
        for k in 2..=5 {
            let diag = joint_cumulant(MeasureKind::Gaussian, &vec![f.clone(); k]).unwrap();
            let tr = second_chaos_cumulant(&f, k).unwrap();
            assert!(close(diag, tr, 1e-10), "k={k}: {diag} vs {tr}");
        }
    }

    #[test]
    fn gaussian_product_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let s = sys(&[0.5, 1.0, 2.0]);
        let f1 = random_kernel(s.clone(), 1, false, &mut rng);
        let g1 = random_kernel(s.clone(), 1, false, &mut rng);
        let p = product_gaussian(&f1, &g1).unwrap();
        assert!(close(p.constant(), f1.inner_product(&g1).unwrap(), 1e-14));
        assert!(p.kernel(2).unwrap().max_abs_diff(&tensor0(&f1, &g1).unwrap().symmetrize()) < 1e-15);

        // p = q = 2 gives 1, 4, 1 on orders 4, 2, 0
        let f = random_kernel(s.clone(), 2, false, &mut rng);
        let g = random_kernel(s.clone(), 2, false, &mut rng);
        let p = product_gaussian(&f, &g).unwrap();
        assert!(p.kernel(2).unwrap().max_abs_diff(&contract(&f, &g, 1, 1).unwrap().symmetrize().scale(4.0)) < 1e-14);
        assert!(close(p.constant(), f.inner_product(&g).unwrap() * 2.0, 1e-14));

        // p = 3, q = 2 gives 1, 6, 6 on orders 5, 3, 1
        let f3 = random_kernel(s.clone(), 3, false, &mut rng);
        let p = product_gaussian(&f3, &g).unwrap();
        assert!(p.kernel(3).unwrap().max_abs_diff(&contract(&f3, &g, 1, 1).unwrap().symmetrize().scale(6.0)) < 1e-14);
        assert!(p.kernel(1).unwrap().max_abs_diff(&contract(&f3, &g, 2, 2).unwrap().symmetrize().scale(6.0)) < 1e-14);
        assert_eq!(p.terms().map(|(m, _)| m).collect::<Vec<_>>(), vec![1, 3, 5]);
    }

    #[test]
    fn poisson_product_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let s = sys(&[0.5, 1.0, 2.0]);
        let f = random_kernel(s.clone(), 1, true, &mut rng);
        let g = random_kernel(s.clone(), 1, true, &mut rng);
        let p = product_poisson(&f, &g).unwrap();
        let fg = Kernel::from_fn(s.clone(), 1, |t| f.value(t) * g.value(t));
        assert!(p.kernel(1).unwrap().max_abs_diff(&fg) < 1e-15);
        assert!(close(p.constant(), f.inner_product(&g).unwrap(), 1e-14));

        let f2 = random_kernel(s.clone(), 2, true, &mut rng);
        let p = product_poisson(&f2, &g).unwrap();
        assert!(p.kernel(2).unwrap().max_abs_diff(&contract(&f2, &g, 1, 0).unwrap().symmetrize().scale(2.0)) < 1e-14);
        assert!(p.kernel(1).unwrap().max_abs_diff(&contract(&f2, &g, 1, 1).unwrap().symmetrize().scale(2.0)) < 1e-14);
        assert_eq!(p.constant(), 0.0);

        let a = Kernel::from_entries(s.clone(), 1, [(vec![0], 1.0)]).unwrap();
        let b = Kernel::from_entries(s.clone(), 1, [(vec![1], 1.0)]).unwrap();
        let p = product_poisson(&a, &b).unwrap();
        assert!(p.kernel(1).is_none() && p.constant() == 0.0);
    }

    #[test]
    fn general_product_matches_binary_formulae() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let s = sys(&[0.5, 1.0, 2.0]);
        for (p, q) in [(1, 1), (2, 1), (2, 2), (3, 2)] {
            let f = random_kernel(s.clone(), p, true, &mut rng);
            let g = random_kernel(s.clone(), q, true, &mut rng);
            for kind in [MeasureKind::Gaussian, MeasureKind::Poisson] {
                let general = flatten(s.clone(), &product_general(kind, &[f.clone(), g.clone()]).unwrap()).unwrap();
                let binary = binary_product(kind, &f, &g).unwrap();
                assert!(general.max_abs_diff(&binary) < 1e-12, "{kind} p={p} q={q}");
            }
        }
    }

    #[test]
    fn cube_of_first_chaos() {
        let s = sys(&[0.5, 1.0, 2.0]);
        let f = Kernel::from_fn(s.clone(), 1, |t| [0.4, -0.9, 0.3][t[0]]);
        let fs = vec![f.clone(); 3];
        let norm2 = f.norm_sq();
        let f3 = Kernel::from_fn(s.clone(), 1, |t| f.value(t).powi(3));
        let f2 = Kernel::from_fn(s.clone(), 1, |t| f.value(t).powi(2));
        let fff = tensor0(&f, &f).unwrap().symmetrize();
        let fff = tensor0(&fff, &f).unwrap().symmetrize();

        let mut gauss = ChaosDecomposition::zero(s.clone());
        gauss.add_term(1.0, &fff).unwrap();
        gauss.add_term(3.0 * norm2, &f).unwrap();
        let general = flatten(s.clone(), &product_general(MeasureKind::Gaussian, &fs).unwrap()).unwrap();
        assert!(general.max_abs_diff(&gauss) < 1e-14);
        assert!(product_iterated(MeasureKind::Gaussian, &fs).unwrap().max_abs_diff(&gauss) < 1e-14);

        let mut pois = gauss.clone();
        pois.add_term(1.0, &f3).unwrap();
        pois.add_constant(f3.inner_product(&Kernel::from_fn(s.clone(), 1, |_| 1.0)).unwrap());
        pois.add_term(3.0, &tensor0(&f2, &f).unwrap().symmetrize()).unwrap();
        let general = flatten(s.clone(), &product_general(MeasureKind::Poisson, &fs).unwrap()).unwrap();
        assert!(general.max_abs_diff(&pois) < 1e-14);
        assert!(product_iterated(MeasureKind::Poisson, &fs).unwrap().max_abs_diff(&pois) < 1e-14);
    }

    #[test]
    fn projection_consistency_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = sys(&[0.5, 1.0, 2.0, 0.8]);
        for kind in [MeasureKind::Gaussian, MeasureKind::Poisson] {
            for (p, q, m) in [(1, 1, 2), (2, 2, 1), (2, 2, 2), (2, 1, 3), (2, 1, 1), (2, 2, 4), (1, 1, 1)] {
                let f = random_kernel(s.clone(), p, true, &mut rng);
                let g = random_kernel(s.clone(), q, true, &mut rng);
                let h = random_kernel(s.clone(), m, true, &mut rng);
                let res = projection_consistency(kind, &f, &g, &h).unwrap();
                assert!(res <= 1e-10, "{kind} p={p} q={q} m={m}: {res}");
            }
        }
        // Gaussian p = q = 1 has no first chaos, and the moment vanishes too
        let f = random_kernel(s.clone(), 1, true, &mut rng);
        let h = random_kernel(s.clone(), 1, true, &mut rng);
        assert_eq!(projection_consistency(MeasureKind::Gaussian, &f, &f, &h).unwrap(), 0.0);
    }

    #[test]
    fn cumulants_cohere_with_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let s = sys(&[0.5, 1.0, 2.0]);
        for kind in [MeasureKind::Gaussian, MeasureKind::Poisson] {
            for degrees in [vec![1, 1, 1, 1], vec![2, 2, 2], vec![2, 1, 2, 1], vec![2, 2, 2, 2], vec![3, 1, 2]] {
                let fs: Vec<Kernel> = degrees.iter().map(|&d| random_kernel(s.clone(), d, true, &mut rng)).collect();
                let direct = joint_cumulant(kind, &fs).unwrap();
                let via = joint_cumulant_via_moments(kind, &fs).unwrap();
                assert!(close(direct, via, 1e-10), "{kind} {degrees:?}: {direct} vs {via}");
            }
        }
    }
}
