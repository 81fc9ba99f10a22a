//! Moment ↔ cumulant transforms over partition lattices.
//!
//! Tables are indexed by nonempty subsets `b ⊆ [n]`; a repeated variable is
//! represented by repeating its index, so every relation below is a sum over
//! P(b) taken literally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partitions::{set_partitions_capped, SetPartition};

/// Largest number of variables accepted by the transforms.
pub const MAX_VARIABLES: usize = 10;

/// One `(subset, value)` record; subsets use 1-based labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRecord {
    pub subset: Vec<usize>,
    pub value: f64,
}

/// Real values on every nonempty subset of `[n]`, stored by bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetTable {
    n: usize,
    values: Vec<f64>,
}

impl SubsetTable {
    pub fn from_fn(n: usize, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        check_size(n)?;
        let mut values = vec![0.0; 1 << n];
        for (mask, slot) in values.iter_mut().enumerate().skip(1) {
            *slot = f(&mask_to_subset(mask));
        }
        Ok(Self { n, values })
    }

    /// Builds a table from records, failing unless every nonempty subset is
    /// present exactly once.
    pub fn from_records(n: usize, records: &[SubsetRecord]) -> Result<Self> {
        check_size(n)?;
        let mut values = vec![None; 1 << n];
        for r in records {
            let mask = subset_to_mask(n, &r.subset)?;
            if values[mask].replace(r.value).is_some() {
                return Err(Error::IncompleteTable(format!("subset {:?} listed twice", r.subset)));
            }
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(mask, v)| match (mask, v) {
                (0, _) => Ok(0.0),
                (_, Some(v)) => Ok(v),
                (_, None) => Err(Error::IncompleteTable(format!("missing subset {:?}", mask_to_subset(mask)))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, subset: &[usize]) -> Result<f64> {
        Ok(self.values[subset_to_mask(self.n, subset)?])
    }

    pub fn get_mask(&self, mask: usize) -> f64 {
        self.values[mask]
    }

    /// Value on the whole ground set.
    pub fn full(&self) -> f64 {
        self.values[(1 << self.n) - 1]
    }

    pub fn records(&self) -> Vec<SubsetRecord> {
        (1..self.values.len())
            .map(|mask| SubsetRecord { subset: mask_to_subset(mask), value: self.values[mask] })
            .collect()
    }
}

macro_rules! table_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(pub SubsetTable);

        impl $name {
            pub fn from_fn(n: usize, f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
                SubsetTable::from_fn(n, f).map(Self)
            }

            pub fn from_records(n: usize, records: &[SubsetRecord]) -> Result<Self> {
                SubsetTable::from_records(n, records).map(Self)
            }

            pub fn n(&self) -> usize {
                self.0.n
            }

            pub fn get(&self, subset: &[usize]) -> Result<f64> {
                self.0.get(subset)
            }

            pub fn full(&self) -> f64 {
                self.0.full()
            }

            pub fn records(&self) -> Vec<SubsetRecord> {
                self.0.records()
            }
        }
    };
}

table_newtype!(
    /// `E[X^b]` for every nonempty `b ⊆ [n]`.
    JointMomentTable
);
table_newtype!(
    /// `χ(X_b)` for every nonempty `b ⊆ [n]`.
    JointCumulantTable
);

fn check_size(n: usize) -> Result<()> {
    if n == 0 || n > MAX_VARIABLES {
        return Err(Error::EnumerationCap { size: n, cap: MAX_VARIABLES });
    }
    Ok(())
}

fn mask_to_subset(mask: usize) -> Vec<usize> {
    (0..usize::BITS as usize).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).collect()
}

fn subset_to_mask(n: usize, subset: &[usize]) -> Result<usize> {
    let mut mask = 0usize;
    for &e in subset {
        if e == 0 || e > n {
            return Err(Error::IndexOutOfRange(format!("variable {e} outside 1..={n}")));
        }
        mask |= 1 << (e - 1);
    }
    if mask == 0 {
        return Err(Error::IndexOutOfRange("empty subset".into()));
    }
    Ok(mask)
}

/// Partitions of `[k]` as lists of position masks, indexed by `k`.
fn partition_masks(max: usize) -> Vec<Vec<Vec<usize>>> {
    (0..=max)
        .map(|k| {
            if k == 0 {
                return Vec::new();
            }
            set_partitions_capped(k, MAX_VARIABLES)
                .expect("size checked by caller")
                .map(|p| p.blocks().iter().map(|b| b.iter().fold(0, |m, &e| m | 1 << (e - 1))).collect())
                .collect()
        })
        .collect()
}

/// Translates a mask over positions within `b` into a mask over `[n]`.
fn lift_mask(positions: usize, elements: &[usize]) -> usize {
    elements
        .iter()
        .enumerate()
        .filter(|(i, _)| positions >> i & 1 == 1)
        .fold(0, |m, (_, &e)| m | 1 << e)
}

/// Applies `F(b) = Σ_{π ∈ P(b)} w(|π|) Π_{a ∈ π} G(a)` on every subset.
fn lattice_transform(table: &SubsetTable, weight: impl Fn(usize) -> f64) -> SubsetTable {
    let n = table.n;
    let parts = partition_masks(n);
    let mut values = vec![0.0; 1 << n];
    for (mask, slot) in values.iter_mut().enumerate().skip(1) {
        let elements: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let mut acc = 0.0;
        for blocks in &parts[elements.len()] {
            let prod: f64 = blocks.iter().map(|&pm| table.values[lift_mask(pm, &elements)]).product();
            acc += weight(blocks.len()) * prod;
        }
        *slot = acc;
    }
    SubsetTable { n, values }
}

/// `E[X^b] = Σ_{π ∈ P(b)} Π_{a ∈ π} χ(X_a)`.
pub fn moments_from_cumulants(c: &JointCumulantTable) -> JointMomentTable {
    JointMomentTable(lattice_transform(&c.0, |_| 1.0))
}

/// `χ(X_b) = Σ_{π ∈ P(b)} (−1)^{r−1} (r−1)! Π_{a ∈ π} E[X^a]`, `r = |π|`.
pub fn cumulants_from_moments(m: &JointMomentTable) -> JointCumulantTable {
    JointCumulantTable(lattice_transform(&m.0, |r| {
        let f: f64 = (1..r).map(|k| k as f64).product();
        if r % 2 == 1 {
            f
        } else {
            -f
        }
    }))
}

/// Joint cumulant of the grouped products `X^{b_1}, ..., X^{b_k}`, summing
/// block products of `χ` over every `τ` with `τ ∨ σ = 1̂`.
pub fn malyshev(grouping: &SetPartition, c: &JointCumulantTable) -> Result<f64> {
    let n = c.n();
    if grouping.ground_size() != n {
        return Err(Error::GroundSizeMismatch { left: grouping.ground_size(), right: n });
    }
    let mut acc = 0.0;
    for tau in set_partitions_capped(n, MAX_VARIABLES)? {
        if !tau.join(grouping)?.is_coarsest() {
            continue;
        }
        acc += tau
            .blocks()
            .iter()
            .map(|b| c.0.values[b.iter().fold(0, |m, &e| m | 1 << (e - 1))])
            .product::<f64>();
    }
    Ok(acc)
}

fn check_symmetric(cov: &[Vec<f64>]) -> Result<()> {
    let n = cov.len();
    for (i, row) in cov.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DegreeMismatch(format!("row {} has length {}, expected {n}", i + 1, row.len())));
        }
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (cov[i][j], cov[j][i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::NonSymmetric(i + 1, j + 1));
            }
        }
    }
    Ok(())
}

/// `E[X_1 ⋯ X_n]` for a centered Gaussian vector: the sum over perfect
/// matchings of products of covariances (zero when `n` is odd).
pub fn gaussian_joint_moment(cov: &[Vec<f64>]) -> Result<f64> {
    check_symmetric(cov)?;
    if cov.is_empty() {
        return Err(Error::IndexOutOfRange("empty covariance".into()));
    }
    let idx: Vec<usize> = (0..cov.len()).collect();
    Ok(matching_sum(cov, &idx))
}

fn matching_sum(cov: &[Vec<f64>], idx: &[usize]) -> f64 {
    match idx.len() {
        0 => 1.0,
        n if n % 2 == 1 => 0.0,
        _ => {
            let first = idx[0];
            (1..idx.len())
                .map(|k| {
                    let rest: Vec<usize> = idx[1..].iter().enumerate().filter(|(j, _)| j + 1 != k).map(|(_, &v)| v).collect();
                    cov[first][idx[k]] * matching_sum(cov, &rest)
                })
                .sum()
        }
    }
}

/// Moment table of a centered Gaussian vector with covariance `cov`.
pub fn gaussian_moment_table(cov: &[Vec<f64>]) -> Result<JointMomentTable> {
    check_symmetric(cov)?;
    JointMomentTable::from_fn(cov.len(), |b| {
        let idx: Vec<usize> = b.iter().map(|&e| e - 1).collect();
        matching_sum(cov, &idx)
    })
}

/// Raw moments `m_1..m_K` of a single variable from its cumulants
/// `κ_1..κ_K`, through the table on `[K]` with `χ(X_b) = κ_{|b|}`.
pub fn moments_from_cumulant_sequence(kappas: &[f64]) -> Result<Vec<f64>> {
    let k = kappas.len();
    let table = JointCumulantTable::from_fn(k, |b| kappas[b.len() - 1])?;
    let m = moments_from_cumulants(&table);
    (1..=k).map(|j| m.get(&(1..=j).collect::<Vec<_>>())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn two_variable_moment() {
        let c = JointCumulantTable::from_fn(2, |b| match b {
            [1] => 0.5,
            [2] => -2.0,
            _ => 0.25,
        })
        .unwrap();
        let m = moments_from_cumulants(&c);
        assert!(close(m.get(&[1, 2]).unwrap(), 0.5 * -2.0 + 0.25));
    }

    #[test]
    fn first_order_cumulants_only_factorize() {
        let means = [1.5, -0.5, 2.0, 3.0];
        let c = JointCumulantTable::from_fn(4, |b| if b.len() == 1 { means[b[0] - 1] } else { 0.0 }).unwrap();
        let m = moments_from_cumulants(&c);
        for r in m.records() {
            let prod: f64 = r.subset.iter().map(|&e| means[e - 1]).product();
            assert!(close(r.value, prod));
        }
    }

    #[test]
    fn standard_normal_fourth_moment() {
        let m = moments_from_cumulant_sequence(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(m, vec![0.0, 1.0, 0.0, 3.0]);
    }

    #[test]
    fn covariance_and_third_cumulant() {
        // X1 = X, X2 = Y with E X = 2, E Y = -1, E XY = 0.5
        let m = JointMomentTable::from_fn(2, |b| match b {
            [1] => 2.0,
            [2] => -1.0,
            _ => 0.5,
        })
        .unwrap();
        let c = cumulants_from_moments(&m);
        assert!(close(c.get(&[1, 2]).unwrap(), 0.5 - 2.0 * -1.0));

        // single variable repeated three times: E X = 1, E X^2 = 3, E X^3 = 10
        let raw = [1.0, 3.0, 10.0];
        let m = JointMomentTable::from_fn(3, |b| raw[b.len() - 1]).unwrap();
        let c = cumulants_from_moments(&m);
        assert!(close(c.full(), 10.0 - 3.0 * 3.0 * 1.0 + 2.0));
    }

    #[test]
    fn malyshev_three_variable_grouping() {
        let vals = [0.3, -1.2, 0.7, 0.11, -0.4, 0.9, 0.05];
        let c = JointCumulantTable::from_fn(3, |b| {
            let mask = b.iter().fold(0, |m, &e| m | 1 << (e - 1));
            vals[mask - 1]
        })
        .unwrap();
        let sigma: SetPartition = "{{1,2},{3}}".parse().unwrap();
        let g = |s: &[usize]| c.get(s).unwrap();
        let expected = g(&[1, 2, 3]) + g(&[1, 3]) * g(&[2]) + g(&[1]) * g(&[2, 3]);
        assert!(close(malyshev(&sigma, &c).unwrap(), expected));
        // the finest grouping reproduces the joint cumulant itself
        assert!(close(malyshev(&SetPartition::finest(3), &c).unwrap(), g(&[1, 2, 3])));
    }

    #[test]
    fn malyshev_for_jointly_gaussian_inputs() {
        let mean = [0.4, -1.1, 0.8];
        let cov = [[1.0, 0.3, -0.2], [0.3, 2.0, 0.5], [-0.2, 0.5, 1.5]];
        let c = JointCumulantTable::from_fn(3, |b| match b.len() {
            1 => mean[b[0] - 1],
            2 => cov[b[0] - 1][b[1] - 1],
            _ => 0.0,
        })
        .unwrap();
        let sigma: SetPartition = "{{1,2},{3}}".parse().unwrap();
        let expected = cov[0][2] * mean[1] + mean[0] * cov[1][2];
        assert!(close(malyshev(&sigma, &c).unwrap(), expected));
    }

    #[test]
    fn isserlis_examples() {
        let id: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        // four copies of one standard normal
        let ones = vec![vec![1.0; 4]; 4];
        assert_eq!(gaussian_joint_moment(&ones).unwrap(), 3.0);
        assert_eq!(gaussian_joint_moment(&id).unwrap(), 0.0);
        let c3 = vec![vec![1.0, 0.2, 0.3], vec![0.2, 1.0, 0.4], vec![0.3, 0.4, 1.0]];
        assert_eq!(gaussian_joint_moment(&c3).unwrap(), 0.0);
        let c = vec![
            vec![1.0, 0.2, 0.3, 0.4],
            vec![0.2, 2.0, 0.5, 0.6],
            vec![0.3, 0.5, 3.0, 0.7],
            vec![0.4, 0.6, 0.7, 4.0],
        ];
        let expected = 0.2 * 0.7 + 0.3 * 0.6 + 0.4 * 0.5;
        assert!(close(gaussian_joint_moment(&c).unwrap(), expected));
        let mut bad = c.clone();
        bad[0][1] = 0.9;
        assert_eq!(gaussian_joint_moment(&bad), Err(Error::NonSymmetric(2, 1)));
    }

    #[test]
    fn incomplete_records_are_rejected() {
        let recs = vec![SubsetRecord { subset: vec![1], value: 1.0 }, SubsetRecord { subset: vec![2], value: 1.0 }];
        assert!(matches!(JointMomentTable::from_records(2, &recs), Err(Error::IncompleteTable(_))));
        let m = JointMomentTable::from_fn(3, |b| b.len() as f64).unwrap();
        assert_eq!(JointMomentTable::from_records(3, &m.records()).unwrap(), m);
    }
}
