//! Monte Carlo realizations of Gaussian and compensated Poisson measures on
//! cell systems, pathwise evaluation of multiple integrals, and empirical
//! moment estimation.
//!
//! Sampling is split into batches; batch `b` draws from a ChaCha8 stream keyed
//! by `(seed, b)` so results do not depend on thread scheduling.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{ChaosDecomposition, MeasureKind};
use crate::cumulants::{cumulants_from_moments, JointMomentTable};
use crate::error::{Error, Result};
use crate::kernels::{canonical_tuples, hermite_decompose, CellSystem, Kernel, MAX_CELLS};

/// Largest Hermite degree accepted by [`hermite_poly`].
pub const HERMITE_CAP: usize = 30;

/// Number of batches used for batch-means standard errors.
pub const BATCHES: usize = 100;

/// `H_q(x)` via `H_{k+1} = x H_k − k H_{k−1}`.
pub fn hermite_poly(q: usize, x: f64) -> Result<f64> {
    if q > HERMITE_CAP {
        return Err(Error::HermiteCap(q));
    }
    let (mut prev, mut cur) = (1.0, x);
    if q == 0 {
        return Ok(1.0);
    }
    for k in 1..q {
        (prev, cur) = (cur, x * cur - k as f64 * prev);
    }
    Ok(cur)
}

/// One realization `φ(c_j)` of the random measure on every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSample {
    pub kind: MeasureKind,
    pub values: Vec<f64>,
}

impl MeasureSample {
    /// Gaussian cells are `N(0, ν_j)`; Poisson cells are `Pois(ν_j) − ν_j`.
    pub fn draw<R: Rng + ?Sized>(kind: MeasureKind, system: &CellSystem, rng: &mut R) -> Self {
        let values = system
            .masses()
            .iter()
            .map(|&nu| match kind {
                MeasureKind::Gaussian => Normal::new(0.0, nu.sqrt()).expect("positive mass").sample(rng),
                MeasureKind::Poisson => Poisson::new(nu).expect("positive mass").sample(rng) - nu,
            })
            .collect();
        Self { kind, values }
    }

    fn check(&self, f: &Kernel) -> Result<()> {
        if self.values.len() != f.system().len() {
            return Err(Error::SampleMismatch(format!("{} values for {} cells", self.values.len(), f.system().len())));
        }
        Ok(())
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `n! Σ_{distinct sorted tuples} f · Π φ`, the exact multiple integral of a
/// kernel that vanishes on repeated cells.
pub fn eval_offdiag(f: &Kernel, s: &MeasureSample) -> Result<f64> {
    if !f.is_offdiag() {
        return Err(Error::NotOffDiagonal);
    }
    s.check(f)?;
    let sum: f64 = f.entries().map(|(t, v)| v * t.iter().map(|&c| s.values[c]).product::<f64>()).sum();
    Ok(factorial(f.degree()) * sum)
}

/// Precomputed Hermite expansion `Σ_α c_α Π_j H_{α_j}(φ_j / √ν_j)`.
#[derive(Debug, Clone)]
pub struct GaussianEvaluator {
    scale: Vec<f64>,
    terms: Vec<(Vec<(usize, usize)>, f64)>,
    max_order: usize,
}

impl GaussianEvaluator {
    pub fn new(f: &Kernel) -> Result<Self> {
        if f.degree() > HERMITE_CAP {
            return Err(Error::HermiteCap(f.degree()));
        }
        let scale = f.system().masses().iter().map(|m| m.sqrt().recip()).collect();
        let terms = hermite_decompose(f)
            .into_iter()
            .map(|(alpha, c)| (alpha.iter().enumerate().filter(|(_, &a)| a > 0).map(|(j, &a)| (j, a)).collect(), c))
            .collect();
        Ok(Self { scale, terms, max_order: f.degree() })
    }

    pub fn eval(&self, s: &MeasureSample) -> Result<f64> {
        if s.kind != MeasureKind::Gaussian {
            return Err(Error::SampleMismatch("Hermite evaluation needs a Gaussian sample".into()));
        }
        if s.values.len() != self.scale.len() {
            return Err(Error::SampleMismatch(format!("{} values for {} cells", s.values.len(), self.scale.len())));
        }
        // H_0..H_q at every standardized cell value
        let table: Vec<Vec<f64>> = s
            .values
            .iter()
            .zip(&self.scale)
            .map(|(&v, &k)| {
                let x = v * k;
                let mut h = vec![1.0, x];
                for j in 1..self.max_order {
                    h.push(x * h[j] - j as f64 * h[j - 1]);
                }
                h
            })
            .collect();
        Ok(self.terms.iter().map(|(idx, c)| c * idx.iter().map(|&(j, a)| table[j][a]).product::<f64>()).sum())
    }
}

/// Exact `I_q(f)` for any kernel under a Gaussian sample.
pub fn eval_gaussian_exact(f: &Kernel, s: &MeasureSample) -> Result<f64> {
    s.check(f)?;
    GaussianEvaluator::new(f)?.eval(s)
}

/// Pathwise value of a chaos decomposition: Hermite evaluation for Gaussian
/// samples, off-diagonal parts for Poisson samples.
pub fn eval_decomposition(d: &ChaosDecomposition, s: &MeasureSample) -> Result<f64> {
    let mut total = d.constant();
    for (_, k) in d.terms() {
        total += match s.kind {
            MeasureKind::Gaussian => eval_gaussian_exact(k, s)?,
            MeasureKind::Poisson => eval_offdiag(&k.offdiag_part(), s)?,
        };
    }
    Ok(total)
}

/// Each parent cell split into `s` subcells of mass `ν_j / s`.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub parent: Arc<CellSystem>,
    pub system: Arc<CellSystem>,
    pub factor: usize,
}

pub fn refine(system: &Arc<CellSystem>, s: usize) -> Result<Refinement> {
    if s == 0 {
        return Err(Error::InvalidSystem("refinement factor must be positive".into()));
    }
    if s == 1 {
        return Ok(Refinement { parent: system.clone(), system: system.clone(), factor: 1 });
    }
    let m = system.len();
    if m.saturating_mul(s) > MAX_CELLS {
        return Err(Error::EnumerationCap { size: m * s, cap: MAX_CELLS });
    }
    let mut labels = Vec::with_capacity(m * s);
    let mut masses = Vec::with_capacity(m * s);
    for j in 0..m {
        for a in 0..s {
            labels.push(format!("{}.{}", system.label(j), a + 1));
            masses.push(system.mass(j) / s as f64);
        }
    }
    Ok(Refinement { parent: system.clone(), system: Arc::new(CellSystem::new(labels, masses)?), factor: s })
}

impl Refinement {
    pub fn parent_of(&self, child: usize) -> usize {
        child / self.factor
    }

    /// Constant extension of `f` to subcells.
    pub fn lift(&self, f: &Kernel) -> Result<Kernel> {
        if f.system() != &self.parent {
            return Err(Error::SystemMismatch);
        }
        let s = self.factor;
        let mut entries = Vec::new();
        for (t, v) in f.entries() {
            // runs of equal parents choose nondecreasing subcell indices
            let mut runs: Vec<(usize, usize)> = Vec::new();
            for &c in t {
                match runs.last_mut() {
                    Some((p, k)) if *p == c => *k += 1,
                    _ => runs.push((c, 1)),
                }
            }
            let mut partial: Vec<Vec<usize>> = vec![Vec::new()];
            for (p, k) in runs {
                let choices = canonical_tuples(s, k);
                partial = partial
                    .into_iter()
                    .flat_map(|pre| {
                        choices.iter().map(move |ch| {
                            let mut v = pre.clone();
                            v.extend(ch.iter().map(|&a| p * s + a));
                            v
                        })
                    })
                    .collect();
            }
            entries.extend(partial.into_iter().map(|t| (t, v)));
        }
        Kernel::from_entries(self.system.clone(), f.degree(), entries)
    }

    /// `eval_offdiag(lift(f).offdiag_part(), sample)` without materializing
    /// the lift: within a parent cell the sum over distinct subcells is an
    /// elementary symmetric polynomial of the subcell values.
    pub fn eval_lifted_offdiag(&self, f: &Kernel, sample: &MeasureSample) -> Result<f64> {
        if f.system() != &self.parent {
            return Err(Error::SystemMismatch);
        }
        if sample.values.len() != self.system.len() {
            return Err(Error::SampleMismatch(format!("{} values for {} cells", sample.values.len(), self.system.len())));
        }
        let d = f.degree();
        let elem: Vec<Vec<f64>> = (0..self.parent.len())
            .map(|p| elementary_symmetric(&sample.values[p * self.factor..(p + 1) * self.factor], d))
            .collect();
        let mut total = 0.0;
        for (t, v) in f.entries() {
            let mut prod = v;
            let mut i = 0;
            while i < t.len() {
                let j = (i..t.len()).find(|&j| t[j] != t[i]).unwrap_or(t.len());
                prod *= elem[t[i]][j - i];
                i = j;
            }
            total += prod;
        }
        Ok(factorial(d) * total)
    }

    /// Pathwise value of a decomposition on the base system, lifted and
    /// restricted to distinct subcells.
    pub fn eval_lifted_decomposition(&self, d: &ChaosDecomposition, sample: &MeasureSample) -> Result<f64> {
        let mut total = d.constant();
        for (_, k) in d.terms() {
            total += self.eval_lifted_offdiag(k, sample)?;
        }
        Ok(total)
    }
}

/// `e_0..e_d` of the given values.
fn elementary_symmetric(xs: &[f64], d: usize) -> Vec<f64> {
    let mut e = vec![0.0; d + 1];
    e[0] = 1.0;
    for &x in xs {
        for k in (1..=d).rev() {
            e[k] += e[k - 1] * x;
        }
    }
    e
}

fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    rng
}

fn batch_sizes(n: u64) -> Vec<u64> {
    let b = (BATCHES as u64).min(n).max(1);
    (0..b).map(|i| n / b + u64::from(i < n % b)).collect()
}

/// Runs `per_sample` on `n` draws split into batches and returns the per-batch
/// sums of its output vector, in batch order.
fn batched<F>(kind: MeasureKind, system: &CellSystem, n: u64, seed: u64, width: usize, per_sample: F) -> Result<Vec<(u64, Vec<f64>)>>
where
    F: Fn(&MeasureSample, &mut [f64]) -> Result<()> + Sync,
{
    if n == 0 {
        return Err(Error::NoSamples);
    }
    batch_sizes(n)
        .into_par_iter()
        .enumerate()
        .map(|(b, size)| {
            let mut rng = batch_rng(seed, b);
            let mut sums = vec![0.0; width];
            let mut out = vec![0.0; width];
            for _ in 0..size {
                let s = MeasureSample::draw(kind, system, &mut rng);
                per_sample(&s, &mut out)?;
                for (a, o) in sums.iter_mut().zip(&out) {
                    *a += o;
                }
            }
            Ok((size, sums))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

fn estimate(values: &[f64], weights: &[u64], mean: f64) -> Estimate {
    let b = values.len();
    if b < 2 {
        return Estimate { mean, se: f64::NAN };
    }
    let total: f64 = weights.iter().map(|&w| w as f64).sum();
    let var: f64 = values.iter().zip(weights).map(|(v, &w)| w as f64 * (v - mean).powi(2)).sum::<f64>() / total;
    Estimate { mean, se: (var / (b as f64 - 1.0)).sqrt() }
}

/// Empirical moments of every sub-product plus the plug-in joint cumulant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub kind: MeasureKind,
    pub samples: u64,
    pub seed: u64,
    pub batches: usize,
    /// `(subset, estimate)` with 1-based kernel indices.
    pub moments: Vec<(Vec<usize>, Estimate)>,
    pub joint_moment: Estimate,
    pub joint_cumulant: Estimate,
}

/// Evaluator for one kernel under a given measure.
enum Evaluator {
    Gaussian(GaussianEvaluator),
    Offdiag(Kernel),
}

impl Evaluator {
    fn new(kind: MeasureKind, f: &Kernel) -> Result<Self> {
        match kind {
            MeasureKind::Gaussian => Ok(Evaluator::Gaussian(GaussianEvaluator::new(f)?)),
            MeasureKind::Poisson if f.is_offdiag() => Ok(Evaluator::Offdiag(f.clone())),
            MeasureKind::Poisson => Err(Error::NotOffDiagonal),
        }
    }

    fn eval(&self, s: &MeasureSample) -> Result<f64> {
        match self {
            Evaluator::Gaussian(g) => g.eval(s),
            Evaluator::Offdiag(f) => eval_offdiag(f, s),
        }
    }
}

/// Estimates `E[Π_{i∈b} I_{n_i}(f_i)]` for every nonempty `b` from `n`
/// samples; standard errors come from batch means.
pub fn estimate_moments(kind: MeasureKind, fs: &[Kernel], n: u64, seed: u64) -> Result<EmpiricalReport> {
    let Some(first) = fs.first() else {
        return Err(Error::DegreeMismatch("no kernels".into()));
    };
    let k = fs.len();
    if k > crate::cumulants::MAX_VARIABLES {
        return Err(Error::EnumerationCap { size: k, cap: crate::cumulants::MAX_VARIABLES });
    }
    let system = first.system().clone();
    if fs.iter().any(|f| f.system() != &system) {
        return Err(Error::SystemMismatch);
    }
    let evals = fs.iter().map(|f| Evaluator::new(kind, f)).collect::<Result<Vec<_>>>()?;
    let width = (1usize << k) - 1;
    let sums = batched(kind, &system, n, seed, width, |s, out| {
        let vals = evals.iter().map(|e| e.eval(s)).collect::<Result<Vec<_>>>()?;
        for mask in 1..=width {
            out[mask - 1] = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| vals[i]).product();
        }
        Ok(())
    })?;
    let weights: Vec<u64> = sums.iter().map(|(w, _)| *w).collect();
    let batch_means: Vec<Vec<f64>> = sums.iter().map(|(w, s)| s.iter().map(|x| x / *w as f64).collect()).collect();
    let overall: Vec<f64> =
        (0..width).map(|j| sums.iter().map(|(_, s)| s[j]).sum::<f64>() / n as f64).collect();

    let table = |means: &[f64]| JointMomentTable::from_fn(k, |b| means[b.iter().fold(0, |m, &i| m | 1 << (i - 1)) - 1]);
    let cumulant = cumulants_from_moments(&table(&overall)?).full();
    let batch_cumulants =
        batch_means.iter().map(|m| Ok(cumulants_from_moments(&table(m)?).full())).collect::<Result<Vec<_>>>()?;

    let moments = (1..=width)
        .map(|mask| {
            let col: Vec<f64> = batch_means.iter().map(|m| m[mask - 1]).collect();
            let subset = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).collect();
            (subset, estimate(&col, &weights, overall[mask - 1]))
        })
        .collect::<Vec<_>>();
    let joint_moment = moments[width - 1].1.clone();
    Ok(EmpiricalReport {
        kind,
        samples: n,
        seed,
        batches: weights.len(),
        moments,
        joint_moment,
        joint_cumulant: estimate(&batch_cumulants, &weights, cumulant),
    })
}

/// `log E[exp(iλ I_1(h))]`.
pub fn log_cf_first_order(kind: MeasureKind, h: &Kernel, lambda: f64) -> Result<Complex64> {
    if h.degree() != 1 {
        return Err(Error::DegreeMismatch(format!("expected degree 1, got {}", h.degree())));
    }
    let s = h.system();
    Ok(match kind {
        MeasureKind::Gaussian => Complex64::new(-0.5 * lambda * lambda * h.norm_sq(), 0.0),
        MeasureKind::Poisson => h
            .entries()
            .map(|(t, v)| {
                let x = lambda * v;
                (Complex64::new(0.0, x).exp() - 1.0 - Complex64::new(0.0, x)) * s.mass(t[0])
            })
            .sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfPoint {
    pub lambda: f64,
    pub exact_re: f64,
    pub exact_im: f64,
    pub re: Estimate,
    pub im: Estimate,
}

/// Empirical `E[exp(iλ I_1(h))]` on a grid of `λ`, next to the exact value.
pub fn empirical_cf(kind: MeasureKind, h: &Kernel, lambdas: &[f64], n: u64, seed: u64) -> Result<Vec<CfPoint>> {
    if h.degree() != 1 {
        return Err(Error::DegreeMismatch(format!("expected degree 1, got {}", h.degree())));
    }
    let width = 2 * lambdas.len();
    let sums = batched(kind, h.system(), n, seed, width, |s, out| {
        let x: f64 = h.entries().map(|(t, v)| v * s.values[t[0]]).sum();
        for (i, &l) in lambdas.iter().enumerate() {
            out[2 * i] = (l * x).cos();
            out[2 * i + 1] = (l * x).sin();
        }
        Ok(())
    })?;
    let weights: Vec<u64> = sums.iter().map(|(w, _)| *w).collect();
    let col = |j: usize| -> Estimate {
        let means: Vec<f64> = sums.iter().map(|(w, s)| s[j] / *w as f64).collect();
        let overall = sums.iter().map(|(_, s)| s[j]).sum::<f64>() / n as f64;
        estimate(&means, &weights, overall)
    };
    lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let exact = log_cf_first_order(kind, h, l)?.exp();
            Ok(CfPoint { lambda: l, exact_re: exact.re, exact_im: exact.im, re: col(2 * i), im: col(2 * i + 1) })
        })
        .collect()
}

/// Draws `n` values of `I_q(f)` (Gaussian exact evaluator or Poisson
/// off-diagonal evaluator), in a deterministic order.
pub fn sample_integral(kind: MeasureKind, f: &Kernel, n: u64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let ev = Evaluator::new(kind, f)?;
    let system = f.system().clone();
    let chunks = batch_sizes(n)
        .into_par_iter()
        .enumerate()
        .map(|(b, size)| {
            let mut rng = batch_rng(seed, b);
            (0..size).map(|_| ev.eval(&MeasureSample::draw(kind, &system, &mut rng))).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.concat())
}

/// Pathwise check of the Gaussian product formula: the largest
/// `|I_p(f) I_q(g) − Σ_m I_m(h_m)|` over `n` samples.
pub fn gaussian_product_residual(f: &Kernel, g: &Kernel, n: u64, seed: u64) -> Result<f64> {
    let d = crate::chaos::product_gaussian(f, g)?;
    let (ef, eg) = (GaussianEvaluator::new(f)?, GaussianEvaluator::new(g)?);
    let terms: Vec<GaussianEvaluator> = d.terms().map(|(_, k)| GaussianEvaluator::new(k)).collect::<Result<_>>()?;
    let mut rng = batch_rng(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let s = MeasureSample::draw(MeasureKind::Gaussian, f.system(), &mut rng);
        let lhs = if f.is_offdiag() && g.is_offdiag() {
            eval_offdiag(f, &s)? * eval_offdiag(g, &s)?
        } else {
            ef.eval(&s)? * eg.eval(&s)?
        };
        let mut rhs = d.constant();
        for t in &terms {
            rhs += t.eval(&s)?;
        }
        worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    Ok(worst)
}

/// Mean square of the Poisson product-formula residual on the system refined
/// by `s`, from `n` samples.
pub fn poisson_product_residual(f: &Kernel, g: &Kernel, s: usize, n: u64, seed: u64) -> Result<Estimate> {
    let d = crate::chaos::product_poisson(f, g)?;
    let r = refine(f.system(), s)?;
    let sums = batched(MeasureKind::Poisson, &r.system, n, seed, 1, |sample, out| {
        let lhs = r.eval_lifted_offdiag(f, sample)? * r.eval_lifted_offdiag(g, sample)?;
        let rhs = r.eval_lifted_decomposition(&d, sample)?;
        out[0] = (lhs - rhs).powi(2);
        Ok(())
    })?;
    let weights: Vec<u64> = sums.iter().map(|(w, _)| *w).collect();
    let means: Vec<f64> = sums.iter().map(|(w, v)| v[0] / *w as f64).collect();
    let overall = sums.iter().map(|(_, v)| v[0]).sum::<f64>() / n as f64;
    Ok(estimate(&means, &weights, overall))
}

/// A named kernel collection with a measure, used as a fixed Monte Carlo
/// reference case.
#[derive(Debug, Clone)]
pub struct GoldenConfig {
    pub name: &'static str,
    pub kind: MeasureKind,
    pub kernels: Vec<Kernel>,
}

/// The fixed reference cases for Monte Carlo concordance.
pub fn golden_configurations() -> Vec<GoldenConfig> {
    let sys = Arc::new(CellSystem::from_masses(vec![0.5, 1.0, 1.5, 0.8]).expect("valid masses"));
    let f1 = Kernel::from_fn(sys.clone(), 1, |t| [0.6, -0.4, 0.3, 0.9][t[0]]);
    let g1 = Kernel::from_fn(sys.clone(), 1, |t| [0.2, 0.7, -0.5, 0.1][t[0]]);
    let f2 = Kernel::from_fn(sys.clone(), 2, |t| if t[0] == t[1] { 0.0 } else { 0.25 * ((t[0] + 2 * t[1]) as f64 - 2.5) / 2.0 });
    let g2 = Kernel::from_fn(sys.clone(), 2, |t| if t[0] == t[1] { 0.0 } else { 0.2 * (1.0 + (t[0] * t[1]) as f64).sqrt() });
    let d2 = Kernel::from_fn(sys.clone(), 2, |t| if t[0] == t[1] { 0.4 } else { -0.1 });
    let c = |n, k, ks: Vec<&Kernel>| GoldenConfig { name: n, kind: k, kernels: ks.into_iter().cloned().collect() };
    use MeasureKind::{Gaussian as G, Poisson as P};
    vec![
        c("gaussian-first-chaos-mean", G, vec![&f1]),
        c("gaussian-first-chaos-square", G, vec![&f1, &f1]),
        c("gaussian-second-chaos-fourth", G, vec![&f2, &f2, &f2, &f2]),
        c("gaussian-mixed-orders", G, vec![&f1, &g1, &f2, &d2]),
        c("poisson-first-chaos-cube", P, vec![&f1, &f1, &f1]),
        c("poisson-second-chaos-triple", P, vec![&f2, &g2, &f2]),
        c("poisson-mixed-orders", P, vec![&f1, &g2, &g1, &f2]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::joint_moment;
    use crate::kernels::random_kernel;

    fn sys(masses: &[f64]) -> Arc<CellSystem> {
        Arc::new(CellSystem::from_masses(masses.to_vec()).unwrap())
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite_poly(2, 2.0).unwrap(), 3.0);
        assert_eq!(hermite_poly(0, 7.5).unwrap(), 1.0);
        assert_eq!(hermite_poly(3, 1.0).unwrap(), -2.0);
        assert_eq!(hermite_poly(31, 1.0), Err(Error::HermiteCap(31)));
    }

    #[test]
    fn offdiag_evaluation() {
        let s = sys(&[1.0, 1.0, 1.0]);
        let sample = MeasureSample { kind: MeasureKind::Poisson, values: vec![2.0, -1.0, 0.5] };
        let f = Kernel::from_fn(s.clone(), 1, |t| t[0] as f64 + 1.0);
        assert_eq!(eval_offdiag(&f, &sample).unwrap(), 2.0 - 2.0 + 1.5);
        let pair = Kernel::from_entries(s.clone(), 2, [(vec![0, 1], 0.5)]).unwrap();
        assert_eq!(eval_offdiag(&pair, &sample).unwrap(), 2.0 * 0.5 * 2.0 * -1.0);
        assert_eq!(eval_offdiag(&Kernel::zero(s.clone(), 2), &sample).unwrap(), 0.0);
        let diag = Kernel::from_entries(s, 2, [(vec![0, 0], 1.0)]).unwrap();
        assert_eq!(eval_offdiag(&diag, &sample), Err(Error::NotOffDiagonal));
    }

    #[test]
    fn hermite_basis_evaluation() {
        let s = sys(&[1.0, 2.0, 0.5]);
        let sample = MeasureSample { kind: MeasureKind::Gaussian, values: vec![0.7, -1.2, 0.4] };
        let x: Vec<f64> = sample.values.iter().zip(s.masses()).map(|(v, m)| v / m.sqrt()).collect();
        let e = crate::kernels::basis_element(s.clone(), &[1, 1, 0]).unwrap();
        assert!((eval_gaussian_exact(&e, &sample).unwrap() - x[0] * x[1]).abs() < 1e-14);
        let e = crate::kernels::basis_element(s.clone(), &[3, 1, 1]).unwrap();
        let expected = (x[0].powi(3) - 3.0 * x[0]) * x[1] * x[2];
        assert!((eval_gaussian_exact(&e, &sample).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn exact_and_offdiag_evaluators_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let s = sys(&[0.4, 1.0, 2.2, 0.9]);
        for d in 1..=3 {
            let f = random_kernel(s.clone(), d, true, &mut rng);
            for _ in 0..100 {
                let sample = MeasureSample::draw(MeasureKind::Gaussian, &s, &mut rng);
                let a = eval_gaussian_exact(&f, &sample).unwrap();
                let b = eval_offdiag(&f, &sample).unwrap();
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn refinement_lift() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let s = sys(&[0.5, 1.5, 1.0]);
        assert!(Arc::ptr_eq(&refine(&s, 1).unwrap().system, &s));
        let r = refine(&s, 3).unwrap();
        assert!((r.system.total_mass() - s.total_mass()).abs() < 1e-14);
        for d in 1..=3 {
            let f = random_kernel(s.clone(), d, false, &mut rng);
            let lifted = r.lift(&f).unwrap();
            assert!((lifted.norm_sq() - f.norm_sq()).abs() < 1e-12);
            let off = random_kernel(s.clone(), d, true, &mut rng);
            assert!(r.lift(&off).unwrap().is_offdiag());
            let sample = MeasureSample::draw(MeasureKind::Poisson, &r.system, &mut rng);
            let direct = eval_offdiag(&lifted.offdiag_part(), &sample).unwrap();
            let fast = r.eval_lifted_offdiag(&f, &sample).unwrap();
            assert!((direct - fast).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
        assert!(refine(&s, MAX_CELLS).is_err());
    }

    #[test]
    fn estimates_are_deterministic_and_sane() {
        let s = sys(&[0.5, 1.0, 2.0]);
        let f = Kernel::from_fn(s.clone(), 1, |t| [0.3, -0.8, 0.5][t[0]]);
        let a = estimate_moments(MeasureKind::Gaussian, &[f.clone(), f.clone()], 20_000, 9).unwrap();
        let b = estimate_moments(MeasureKind::Gaussian, &[f.clone(), f.clone()], 20_000, 9).unwrap();
        assert_eq!(a, b);
        assert!((a.joint_moment.mean - f.norm_sq()).abs() < 5.0 * a.joint_moment.se);
        assert!(a.moments[0].1.mean.abs() < 5.0 * a.moments[0].1.se);
        let c = estimate_moments(MeasureKind::Poisson, &[f.clone(), f.clone(), f.clone()], 20_000, 10).unwrap();
        let exact = joint_moment(MeasureKind::Poisson, &[f.clone(), f.clone(), f.clone()]).unwrap();
        assert!((c.joint_moment.mean - exact).abs() < 5.0 * c.joint_moment.se);
        assert_eq!(estimate_moments(MeasureKind::Gaussian, &[f], 0, 1), Err(Error::NoSamples));
    }

    #[test]
    fn first_order_log_cf() {
        let s = sys(&[1.0]);
        let h = Kernel::from_entries(s.clone(), 1, [(vec![0], 1.0)]).unwrap();
        assert_eq!(log_cf_first_order(MeasureKind::Gaussian, &h, 1.0).unwrap(), Complex64::new(-0.5, 0.0));
        assert_eq!(log_cf_first_order(MeasureKind::Poisson, &h, 0.0).unwrap(), Complex64::new(0.0, 0.0));
        let z = log_cf_first_order(MeasureKind::Poisson, &h, std::f64::consts::PI).unwrap();
        assert!((z - Complex64::new(-2.0, -std::f64::consts::PI)).norm() < 1e-14);
    }

    #[test]
    fn gaussian_products_hold_pathwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let s = sys(&[0.4, 1.0, 2.2, 0.9]);
        for (p, q) in [(1, 1), (2, 1), (2, 2), (3, 2), (3, 3)] {
            let f = random_kernel(s.clone(), p, true, &mut rng);
            let g = random_kernel(s.clone(), q, true, &mut rng);
            assert!(gaussian_product_residual(&f, &g, 50, 5).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn poisson_residual_shrinks_with_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let s = sys(&[0.6, 1.0, 1.4]);
        let f = random_kernel(s.clone(), 1, true, &mut rng);
        let g = random_kernel(s.clone(), 2, true, &mut rng);
        let v: Vec<f64> = [4, 16, 64].iter().map(|&k| poisson_product_residual(&f, &g, k, 20_000, 3).unwrap().mean).collect();
        assert!(v[0] > v[1] && v[1] > v[2], "{v:?}");
    }
}
