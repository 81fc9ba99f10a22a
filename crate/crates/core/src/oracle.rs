//! Brute-force expectations by explicit polynomial expansion.
//!
//! Each multiple integral on a cell system is a polynomial in the independent
//! per-cell values `φ(c_j)`. Expanding the product and applying exact
//! per-cell moments gives the joint moment without any diagram combinatorics.

use std::collections::BTreeMap;

use crate::chaos::MeasureKind;
use crate::cumulants::{cumulants_from_moments, moments_from_cumulant_sequence, JointMomentTable};
use crate::error::{Error, Result};
use crate::kernels::{hermite_decompose, CellSystem, Kernel};

/// Polynomial in the per-cell values, keyed by exponent vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn constant(m: usize, c: f64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(vec![0; m], c);
        }
        Self { terms }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, f64)> + '_ {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    fn add_monomial(&mut self, exps: Vec<u32>, c: f64) {
        *self.terms.entry(exps).or_insert(0.0) += c;
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::default();
        for (a, &x) in &self.terms {
            for (b, &y) in &other.terms {
                out.add_monomial(a.iter().zip(b).map(|(i, j)| i + j).collect(), x * y);
            }
        }
        out
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, &c)| c * e.iter().zip(values).map(|(&k, &v)| v.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn max_exponent(&self) -> u32 {
        self.terms.keys().flat_map(|e| e.iter().copied()).max().unwrap_or(0)
    }
}

/// Monomial coefficients of `H_0..H_n`.
fn hermite_coefficients(n: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![1.0]];
    if n >= 1 {
        h.push(vec![0.0, 1.0]);
    }
    for k in 1..n {
        let mut next = vec![0.0; k + 2];
        for (i, &c) in h[k].iter().enumerate() {
            next[i + 1] += c;
        }
        for (i, &c) in h[k - 1].iter().enumerate() {
            next[i] -= k as f64 * c;
        }
        h.push(next);
    }
    h
}

/// `I_n(f)` as a polynomial in the per-cell values.
///
/// Gaussian: `Σ_α c_α Π_j H_{α_j}(φ_j / √ν_j)`, valid for any support.
/// Poisson: `n! Σ_{distinct cells} f · Π φ`, which needs an off-diagonal kernel.
pub fn polynomial(kind: MeasureKind, f: &Kernel) -> Result<Polynomial> {
    let s = f.system();
    let m = s.len();
    let mut out = Polynomial::default();
    match kind {
        MeasureKind::Poisson => {
            if !f.is_offdiag() {
                return Err(Error::NotOffDiagonal);
            }
            let nf: f64 = (1..=f.degree()).map(|k| k as f64).product();
            for (t, v) in f.entries() {
                let mut e = vec![0; m];
                for &c in t {
                    e[c] += 1;
                }
                out.add_monomial(e, nf * v);
            }
        }
        MeasureKind::Gaussian => {
            let herm = hermite_coefficients(f.degree());
            for (alpha, c) in hermite_decompose(f) {
                let mut poly = Polynomial::constant(m, c);
                for (j, &a) in alpha.iter().enumerate() {
                    if a == 0 {
                        continue;
                    }
                    let scale = s.mass(j).sqrt().recip();
                    let mut factor = Polynomial::default();
                    for (i, &h) in herm[a].iter().enumerate() {
                        if h != 0.0 {
                            let mut e = vec![0; m];
                            e[j] = i as u32;
                            factor.add_monomial(e, h * scale.powi(i as i32));
                        }
                    }
                    poly = poly.mul(&factor);
                }
                for (e, v) in poly.terms {
                    out.add_monomial(e, v);
                }
            }
        }
    }
    Ok(out)
}

/// `E[φ(c)^k]` for `k = 0..=max`, per cell.
fn cell_moments(kind: MeasureKind, system: &CellSystem, max: u32) -> Result<Vec<Vec<f64>>> {
    system
        .masses()
        .iter()
        .map(|&nu| {
            let mut m = vec![1.0];
            match kind {
                MeasureKind::Gaussian => {
                    for k in 1..=max as usize {
                        m.push(if k % 2 == 1 { 0.0 } else { (1..k).step_by(2).map(|j| j as f64).product::<f64>() * nu.powi(k as i32 / 2) });
                    }
                }
                MeasureKind::Poisson if max > 0 => {
                    let kappas: Vec<f64> = (1..=max as usize).map(|k| if k == 1 { 0.0 } else { nu }).collect();
                    m.extend(moments_from_cumulant_sequence(&kappas)?);
                }
                MeasureKind::Poisson => {}
            }
            Ok(m)
        })
        .collect()
}

pub fn expectation(kind: MeasureKind, system: &CellSystem, p: &Polynomial) -> Result<f64> {
    let moments = cell_moments(kind, system, p.max_exponent())?;
    Ok(p.terms
        .iter()
        .map(|(e, &c)| c * e.iter().enumerate().map(|(j, &k)| moments[j][k as usize]).product::<f64>())
        .sum())
}

/// `E[Π I_{n_i}(f_i)]` by expanding the product.
pub fn brute_force_moment(kind: MeasureKind, fs: &[Kernel]) -> Result<f64> {
    let Some(first) = fs.first() else {
        return Err(Error::DegreeMismatch("no kernels".into()));
    };
    let system = first.system();
    let mut prod = Polynomial::constant(system.len(), 1.0);
    for f in fs {
        if f.system() != system {
            return Err(Error::SystemMismatch);
        }
        prod = prod.mul(&polynomial(kind, f)?);
    }
    expectation(kind, system, &prod)
}

/// Joint cumulant from brute-force moments of every sub-collection.
pub fn brute_force_cumulant(kind: MeasureKind, fs: &[Kernel]) -> Result<f64> {
    let mut err = None;
    let table = JointMomentTable::from_fn(fs.len(), |b| {
        let sub: Vec<Kernel> = b.iter().map(|&i| fs[i - 1].clone()).collect();
        brute_force_moment(kind, &sub).unwrap_or_else(|e| {
            err.get_or_insert(e);
            f64::NAN
        })
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(cumulants_from_moments(&table).full()),
    }
}
