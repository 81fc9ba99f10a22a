//! Fourth-moment diagnostics for normal approximation of multiple integrals:
//! contraction norms, the fourth cumulant computed two ways, a total-variation
//! bound, circular diagram identities, and the multidimensional and Poisson
//! double-integral conditions.
//!
//! The limit theorems are asymptotic; the verdict flags in the reports compare
//! finite-`k` quantities against a configurable threshold and are advisory.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::chaos::{f_sigma_integral, joint_cumulant, joint_moment, second_chaos_cumulant, MeasureKind};
use crate::diagrams::{circular_rank, enumerate_class, PartitionClass};
use crate::error::{Error, Result};
use crate::kernels::{contract, contract_full, CellSystem, Kernel};
use crate::partitions::SetPartition;

pub const DEFAULT_THRESHOLD: f64 = 1e-3;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

fn need_degree_two(f: &Kernel) -> Result<usize> {
    match f.degree() {
        d if d >= 2 => Ok(d),
        d => Err(Error::DegreeMismatch(format!("need degree at least 2, got {d}"))),
    }
}

/// `‖f ⊗_r f‖²` for `r = 1..d−1`.
pub fn contraction_norms_sq(f: &Kernel) -> Result<Vec<f64>> {
    (1..f.degree()).map(|r| Ok(contract_full(f, f, r)?.norm_sq())).collect()
}

/// `χ_4(I_d(f))` from the connected Gaussian diagrams and from the
/// contraction expansion.
pub fn fourth_cumulant_two_ways(f: &Kernel) -> Result<(f64, f64)> {
    let d = need_degree_two(f)?;
    let via_diagrams = joint_cumulant(MeasureKind::Gaussian, &vec![f.clone(); 4])?;
    let df4 = factorial(d).powi(4);
    let mut via_contractions = 0.0;
    for p in 1..d {
        let c = contract_full(f, f, p)?;
        let w = df4 / (factorial(p) * factorial(d - p)).powi(2);
        via_contractions += w * (c.norm_sq() + binomial(2 * d - 2 * p, d - p) * c.symmetrize().norm_sq());
    }
    Ok((via_diagrams, via_contractions))
}

/// `E[I_d(f)^4] − 3 (d!)² ‖f‖⁴` from the moment diagrams.
pub fn fourth_cumulant_from_moment(f: &Kernel) -> Result<f64> {
    let d = need_degree_two(f)?;
    let m4 = joint_moment(MeasureKind::Gaussian, &vec![f.clone(); 4])?;
    Ok(m4 - 3.0 * factorial(d).powi(2) * f.norm_sq().powi(2))
}

/// Upper bound on `d_TV(I_d(f), N(0,1))`: the square root of
/// `(1 − d!‖f‖²)² + d² Σ_r (2d−2r)! ((r−1)!)² C(d−1,r−1)² ‖f ⊗_r f‖²`.
pub fn tv_bound(f: &Kernel) -> Result<f64> {
    let d = need_degree_two(f)?;
    let mut s = (1.0 - factorial(d) * f.norm_sq()).powi(2);
    for (i, c) in contraction_norms_sq(f)?.into_iter().enumerate() {
        let r = i + 1;
        s += (d * d) as f64 * factorial(2 * d - 2 * r) * factorial(r - 1).powi(2) * binomial(d - 1, r - 1).powi(2) * c;
    }
    Ok(s.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularIdentity {
    pub sigma: SetPartition,
    pub rank: usize,
    /// `∫ f_{σ,4}` over the Gaussian diagram.
    pub integral: f64,
    /// `‖f ⊗_r f‖²`.
    pub norm_rank: f64,
    /// `‖f ⊗_{d−r} f‖²`.
    pub norm_corank: f64,
}

/// Diagram integral of a circular four-row matching next to the contraction
/// norms of its rank and corank.
pub fn circular_rank_identity(f: &Kernel, sigma: &SetPartition) -> Result<CircularIdentity> {
    let d = need_degree_two(f)?;
    let rank = circular_rank(d, sigma)?;
    Ok(CircularIdentity {
        sigma: sigma.clone(),
        rank,
        integral: f_sigma_integral(sigma, &vec![f.clone(); 4], MeasureKind::Gaussian)?,
        norm_rank: contract_full(f, f, rank)?.norm_sq(),
        norm_corank: contract_full(f, f, d - rank)?.norm_sq(),
    })
}

/// [`circular_rank_identity`] for every circular matching on four rows of `d`.
pub fn circular_identities(f: &Kernel) -> Result<Vec<CircularIdentity>> {
    let d = need_degree_two(f)?;
    let pi_star = SetPartition::consecutive(&[d; 4])?;
    enumerate_class(&pi_star, PartitionClass::M2Circular)?
        .iter()
        .map(|s| circular_rank_identity(f, s))
        .collect()
}

/// Largest circular integral next to the cumulants of orders 3 to `max_order`,
/// for a degree-2 kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSufficiency {
    pub max_circular_integral: f64,
    pub cumulants: Vec<(usize, f64)>,
}

pub fn rank_sufficiency(f: &Kernel, max_order: usize) -> Result<RankSufficiency> {
    let ids = circular_identities(f)?;
    let max_circular_integral = ids.iter().map(|c| c.integral.abs()).fold(0.0, f64::max);
    let cumulants = (3..=max_order)
        .map(|k| Ok((k, joint_cumulant(MeasureKind::Gaussian, &vec![f.clone(); k])?)))
        .collect::<Result<_>>()?;
    Ok(RankSufficiency { max_circular_integral, cumulants })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub normalized: bool,
    pub contractions_vanish: bool,
    pub fourth_cumulant_vanishes: bool,
    pub two_ways_agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub degree: usize,
    pub fourth_cumulant_diagrams: f64,
    pub fourth_cumulant_contractions: f64,
    /// `(r, ‖f ⊗_r f‖)`.
    pub contraction_norms: Vec<(usize, f64)>,
    pub tv_bound: f64,
    pub normalization_gap: f64,
    pub threshold: f64,
    pub verdicts: Verdicts,
}

pub fn clt_report(f: &Kernel, threshold: f64) -> Result<CltReport> {
    let d = need_degree_two(f)?;
    let (a, b) = fourth_cumulant_two_ways(f)?;
    let norms: Vec<(usize, f64)> = contraction_norms_sq(f)?.into_iter().enumerate().map(|(i, c)| (i + 1, c.sqrt())).collect();
    let gap = (factorial(d) * f.norm_sq() - 1.0).abs();
    let max_norm = norms.iter().map(|(_, n)| *n).fold(0.0, f64::max);
    Ok(CltReport {
        degree: d,
        fourth_cumulant_diagrams: a,
        fourth_cumulant_contractions: b,
        tv_bound: tv_bound(f)?,
        normalization_gap: gap,
        threshold,
        verdicts: Verdicts {
            normalized: gap < threshold,
            contractions_vanish: max_norm < threshold,
            fourth_cumulant_vanishes: a.abs() < threshold,
            two_ways_agree: (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs())),
        },
        contraction_norms: norms,
    })
}

/// One mixed fourth moment `E[Π_l I(f_{i_l})]` against its Gaussian target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedMoment {
    pub indices: [usize; 4],
    pub value: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub degree: usize,
    pub fourth_cumulant: f64,
    /// `(r, ‖f ⊗_r f‖)`.
    pub contraction_norms: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultidimReport {
    pub components: Vec<ComponentReport>,
    /// `(i, j, |E[I_i I_j] − C(i,j)|)` for `i ≤ j`, 1-based.
    pub covariance_gaps: Vec<(usize, usize, f64)>,
    pub sum_fourth_moment: f64,
    pub sum_fourth_target: f64,
    pub mixed_moments: Vec<MixedMoment>,
}

/// Index vectors `(i_1, ..., i_4)` over `1..=m` with `i_1 ≠ i_2 = i_3 = i_4`,
/// or `i_1 ≠ i_2 = i_3 ≠ i_4 ≠ i_1`, or all four distinct.
pub fn v_m(m: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 1..=m {
        for b in 1..=m {
            for c in 1..=m {
                for d in 1..=m {
                    let case_a = a != b && b == c && c == d;
                    let case_b = a != b && b == c && c != d && d != a;
                    let case_c = a != b && a != c && a != d && b != c && b != d && c != d;
                    if case_a || case_b || case_c {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}

fn check_covariance(c: &[Vec<f64>], m: usize) -> Result<()> {
    if c.len() != m || c.iter().any(|r| r.len() != m) {
        return Err(Error::DegreeMismatch(format!("covariance must be {m}×{m}")));
    }
    for i in 0..m {
        for j in 0..i {
            if (c[i][j] - c[j][i]).abs() > 1e-12 * (1.0 + c[i][j].abs()) {
                return Err(Error::NonSymmetric(i + 1, j + 1));
            }
        }
    }
    // pivoted LDLᵀ; a clearly negative pivot means C is not positive semidefinite
    let mut a: Vec<Vec<f64>> = c.to_vec();
    let scale = (0..m).map(|i| c[i][i].abs()).fold(1.0, f64::max);
    for k in 0..m {
        let piv = a[k][k];
        if piv < -1e-10 * scale {
            return Err(Error::InvalidSystem("covariance is not positive semidefinite".into()));
        }
        if piv.abs() <= 1e-14 * scale {
            if (k + 1..m).any(|i| a[i][k].abs() > 1e-8 * scale) {
                return Err(Error::InvalidSystem("covariance is not positive semidefinite".into()));
            }
            continue;
        }
        for i in k + 1..m {
            let l = a[i][k] / piv;
            for j in k + 1..m {
                a[i][j] -= l * a[k][j];
            }
        }
    }
    Ok(())
}

/// Evaluates the finite-`k` quantities behind the multidimensional
/// fourth-moment theorem for a Gaussian vector of multiple integrals.
pub fn multidim_check(fs: &[Kernel], c: &[Vec<f64>]) -> Result<MultidimReport> {
    let m = fs.len();
    if m < 2 {
        return Err(Error::DegreeMismatch("need at least two components".into()));
    }
    check_covariance(c, m)?;
    let components = fs
        .iter()
        .map(|f| {
            let norms = contraction_norms_sq(f)?.into_iter().enumerate().map(|(i, v)| (i + 1, v.sqrt())).collect();
            let chi4 = if f.degree() >= 2 { fourth_cumulant_two_ways(f)?.0 } else { 0.0 };
            Ok(ComponentReport { degree: f.degree(), fourth_cumulant: chi4, contraction_norms: norms })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut covariance_gaps = Vec::new();
    for i in 0..m {
        for j in i..m {
            let e = joint_moment(MeasureKind::Gaussian, &[fs[i].clone(), fs[j].clone()])?;
            covariance_gaps.push((i + 1, j + 1, (e - c[i][j]).abs()));
        }
    }
    let target = |ix: &[usize; 4]| {
        let g = |a: usize, b: usize| c[ix[a] - 1][ix[b] - 1];
        g(0, 1) * g(2, 3) + g(0, 2) * g(1, 3) + g(0, 3) * g(1, 2)
    };
    let mixed_moments = v_m(m)
        .into_iter()
        .map(|ix| {
            let ks: Vec<Kernel> = ix.iter().map(|&i| fs[i - 1].clone()).collect();
            Ok(MixedMoment { indices: ix, value: joint_moment(MeasureKind::Gaussian, &ks)?, target: target(&ix) })
        })
        .collect::<Result<Vec<_>>>()?;
    // E[(Σ_i I_i)^4] by multilinearity over ordered index quadruples
    let mut sum_fourth_moment = 0.0;
    for a in 0..m {
        for b in 0..m {
            for cc in 0..m {
                for d in 0..m {
                    let ks = [fs[a].clone(), fs[b].clone(), fs[cc].clone(), fs[d].clone()];
                    sum_fourth_moment += joint_moment(MeasureKind::Gaussian, &ks)?;
                }
            }
        }
    }
    let s: f64 = (0..m).map(|i| c[i][i]).sum::<f64>() + 2.0 * (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).map(|(i, j)| c[i][j]).sum::<f64>();
    Ok(MultidimReport { components, covariance_gaps, sum_fourth_moment, sum_fourth_target: 3.0 * s * s, mixed_moments })
}

/// Quantities behind the CLT for double Poisson integrals, each norm paired
/// with its diagram-integral representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonDoubleReport {
    /// `2‖f‖²`.
    pub normalization: f64,
    /// `∫∫ f⁴ dν²`.
    pub fourth_power: f64,
    /// `‖f ⋆_2^1 f‖²`.
    pub star_2_1: f64,
    /// `‖f ⋆_1^1 f‖²`.
    pub star_1_1: f64,
    pub diagram_fourth_power: f64,
    pub diagram_star_2_1: f64,
    pub diagram_star_1_1: f64,
}

impl PoissonDoubleReport {
    /// Largest gap between a norm and its diagram integral.
    pub fn max_gap(&self) -> f64 {
        [
            (self.fourth_power - self.diagram_fourth_power).abs(),
            (self.star_2_1 - self.diagram_star_2_1).abs(),
            (self.star_1_1 - self.diagram_star_1_1).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Partitions of `[8]` (four rows of two) whose diagram integrals represent
/// `∫∫f⁴`, `‖f ⋆_2^1 f‖²` and `‖f ⋆_1^1 f‖²`.
pub fn poisson_double_partitions() -> [SetPartition; 3] {
    ["{{1,3,5,7},{2,4,6,8}}", "{{1,3,5,7},{2,4},{6,8}}", "{{1,3},{2,8},{4,6},{5,7}}"]
        .map(|s| s.parse().expect("valid literal"))
}

pub fn poisson_double_check(f: &Kernel) -> Result<PoissonDoubleReport> {
    if f.degree() != 2 {
        return Err(Error::DegreeMismatch(format!("expected degree 2, got {}", f.degree())));
    }
    if !f.is_offdiag() {
        return Err(Error::NotOffDiagonal);
    }
    let s = f.system();
    let fourth_power: f64 = f.ordered_entries().iter().map(|(t, v)| v.powi(4) * s.mass(t[0]) * s.mass(t[1])).sum();
    let fs = vec![f.clone(); 4];
    let [s1, s2, s3] = poisson_double_partitions();
    Ok(PoissonDoubleReport {
        normalization: 2.0 * f.norm_sq(),
        fourth_power,
        star_2_1: contract(f, f, 2, 1)?.norm_sq(),
        star_1_1: contract(f, f, 1, 1)?.norm_sq(),
        diagram_fourth_power: f_sigma_integral(&s1, &fs, MeasureKind::Poisson)?,
        diagram_star_2_1: f_sigma_integral(&s2, &fs, MeasureKind::Poisson)?,
        diagram_star_1_1: f_sigma_integral(&s3, &fs, MeasureKind::Poisson)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStep {
    pub variance_gap: f64,
    pub max_contraction_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub order: usize,
    pub target_variance: f64,
    pub steps: Vec<OrderStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteChaosReport {
    pub orders: Vec<OrderReport>,
    pub total_target_variance: f64,
    /// Finitely many orders make the tail condition hold trivially.
    pub tail_condition_vacuous: bool,
}

/// Per-order variance gaps `|d!‖f_d^{(k)}‖² − σ_d²|` and largest contraction
/// norms along each kernel sequence.
pub fn finite_chaos_clt_check(orders: &[(usize, Vec<Kernel>, f64)]) -> Result<FiniteChaosReport> {
    let mut out = Vec::new();
    for (d, seq, target) in orders {
        let steps = seq
            .iter()
            .map(|f| {
                if f.degree() != *d {
                    return Err(Error::DegreeMismatch(format!("kernel of degree {} listed under order {d}", f.degree())));
                }
                let max = contraction_norms_sq(f)?.into_iter().map(f64::sqrt).fold(0.0, f64::max);
                Ok(OrderStep { variance_gap: (factorial(*d) * f.norm_sq() - target).abs(), max_contraction_norm: max })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(OrderReport { order: *d, target_variance: *target, steps });
    }
    Ok(FiniteChaosReport {
        total_target_variance: orders.iter().map(|o| o.2).sum(),
        orders: out,
        tail_condition_vacuous: true,
    })
}

/// Degree-2 kernel on `k` unit-mass cells with coefficient
/// `s_ij / √(2k(k−1))` off the diagonal, where `s_ij = (−1)^{popcount(i & j)}`
/// are Sylvester–Hadamard signs. `2‖f‖² = 1` and all contraction norms
/// vanish as `k` grows; `k` must be a power of two.
pub fn hadamard_kernel(k: usize) -> Result<Kernel> {
    if k < 2 || !k.is_power_of_two() {
        return Err(Error::InvalidSystem(format!("size {k} is not a power of two ≥ 2")));
    }
    let system = Arc::new(CellSystem::uniform(k, 1.0)?);
    let c = 1.0 / ((2 * k * (k - 1)) as f64).sqrt();
    Ok(Kernel::from_fn(system, 2, |t| {
        if t[0] == t[1] {
            0.0
        } else if (t[0] & t[1]).count_ones() % 2 == 0 {
            c
        } else {
            -c
        }
    }))
}

/// `χ_k` of a second-chaos integral via the trace formula.
pub fn second_chaos_cumulants(f: &Kernel, orders: impl IntoIterator<Item = usize>) -> Result<Vec<(usize, f64)>> {
    orders.into_iter().map(|k| Ok((k, second_chaos_cumulant(f, k)?))).collect()
}

/// Kolmogorov–Smirnov distance between the empirical law of `xs` and `N(0,1)`.
pub fn ks_statistic(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let n = v.len() as f64;
    Ok(v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max))
}
