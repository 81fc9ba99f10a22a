use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use chaos_diagrams::chaos::{
    flatten, joint_cumulant, joint_cumulant_via_moments, joint_moment, product_general, product_iterated,
    projection_consistency, MeasureKind,
};
use chaos_diagrams::clt::{circular_identities, fourth_cumulant_from_moment, fourth_cumulant_two_ways, poisson_double_check};
use chaos_diagrams::kernels::{random_kernel, CellSystem, Kernel};
use chaos_diagrams::oracle::{brute_force_cumulant, brute_force_moment};
use chaos_diagrams::Result;

use crate::error::CliError;
use crate::output::Printer;

const REL_TOL: f64 = 1e-9;

const KINDS: [MeasureKind; 2] = [MeasureKind::Gaussian, MeasureKind::Poisson];

struct Check {
    name: &'static str,
    cases: usize,
    worst: f64,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self { name, cases: 0, worst: 0.0 }
    }

    /// Records a relative error of `a` against `b`.
    fn compare(&mut self, a: f64, b: f64) {
        self.gap((a - b).abs(), b);
    }

    fn gap(&mut self, gap: f64, scale: f64) {
        self.cases += 1;
        let rel = gap / (1.0 + scale.abs());
        self.worst = if rel.is_nan() { f64::INFINITY } else { self.worst.max(rel) };
    }

    fn passed(&self) -> bool {
        self.cases > 0 && self.worst <= REL_TOL
    }
}

fn random_system(rng: &mut ChaCha8Rng, max_cells: usize) -> Arc<CellSystem> {
    let m = rng.random_range(1..=max_cells);
    let masses = (0..m).map(|_| rng.random_range(0.2..1.5)).collect();
    Arc::new(CellSystem::from_masses(masses).expect("positive masses"))
}

/// Up to four factors whose degrees sum to at most eight.
fn random_factors(rng: &mut ChaCha8Rng, system: &Arc<CellSystem>, offdiag: bool) -> Vec<Kernel> {
    let k = rng.random_range(1..=4);
    let mut budget = 8;
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let reserve = k - i - 1;
        let d = rng.random_range(1..=(budget - reserve).min(3));
        budget -= d;
        out.push(random_kernel(system.clone(), d, offdiag, rng));
    }
    out
}

fn oracle(rng: &mut ChaCha8Rng, configs: usize, moments: &mut Check, cumulants: &mut Check, coherence: &mut Check) -> Result<()> {
    for i in 0..configs {
        let kind = KINDS[i % 2];
        let system = random_system(rng, 4);
        let offdiag = kind == MeasureKind::Poisson || rng.random_bool(0.5);
        let fs = random_factors(rng, &system, offdiag);
        moments.compare(joint_moment(kind, &fs)?, brute_force_moment(kind, &fs)?);
        let c = joint_cumulant(kind, &fs)?;
        cumulants.compare(c, brute_force_cumulant(kind, &fs)?);
        coherence.compare(c, joint_cumulant_via_moments(kind, &fs)?);
    }
    Ok(())
}

fn projections(rng: &mut ChaCha8Rng, check: &mut Check) -> Result<()> {
    for kind in KINDS {
        for p in 1..=2 {
            for q in 1..=2 {
                for m in 1..=p + q {
                    let system = random_system(rng, 3);
                    let offdiag = kind == MeasureKind::Poisson;
                    let f = random_kernel(system.clone(), p, offdiag, rng);
                    let g = random_kernel(system.clone(), q, offdiag, rng);
                    let h = random_kernel(system, m, offdiag, rng);
                    check.gap(projection_consistency(kind, &f, &g, &h)?, 0.0);
                }
            }
        }
    }
    Ok(())
}

fn general_products(rng: &mut ChaCha8Rng, check: &mut Check) -> Result<()> {
    for kind in KINDS {
        for _ in 0..6 {
            let system = random_system(rng, 3);
            let offdiag = kind == MeasureKind::Poisson;
            let k = rng.random_range(2..=3);
            let fs: Vec<Kernel> =
                (0..k).map(|_| random_kernel(system.clone(), rng.random_range(1..=2), offdiag, rng)).collect();
            let general = flatten(system, &product_general(kind, &fs)?)?;
            let iterated = product_iterated(kind, &fs)?;
            check.gap(general.max_abs_diff(&iterated), 0.0);
        }
    }
    Ok(())
}

fn rank_identities(rng: &mut ChaCha8Rng, check: &mut Check) -> Result<()> {
    for d in 2..=3 {
        for _ in 0..3 {
            let system = random_system(rng, 3);
            let f = random_kernel(system, d, rng.random_bool(0.5), rng);
            for c in circular_identities(&f)? {
                check.compare(c.integral, c.norm_rank);
                check.compare(c.integral, c.norm_corank);
            }
        }
    }
    Ok(())
}

fn fourth_cumulants(rng: &mut ChaCha8Rng, check: &mut Check) -> Result<()> {
    for d in 2..=3 {
        for _ in 0..6 {
            let system = random_system(rng, 3);
            let f = random_kernel(system, d, rng.random_bool(0.5), rng);
            let (a, b) = fourth_cumulant_two_ways(&f)?;
            check.compare(a, b);
            check.compare(a, fourth_cumulant_from_moment(&f)?);
        }
    }
    Ok(())
}

fn poisson_double(rng: &mut ChaCha8Rng, check: &mut Check) -> Result<()> {
    for _ in 0..10 {
        let system = random_system(rng, 4);
        let f = random_kernel(system, 2, true, rng);
        let r = poisson_double_check(&f)?;
        check.gap(r.max_gap(), r.fourth_power.abs().max(r.star_2_1.abs()).max(r.star_1_1.abs()));
    }
    Ok(())
}

/// Runs every cross-check and prints one PASS/FAIL line each.
pub fn run(p: &mut Printer, seed: u64, configs: usize) -> std::result::Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut moments = Check::new("oracle moments");
    let mut cumulants = Check::new("oracle cumulants");
    let mut coherence = Check::new("cumulants via moment tables");
    let mut proj = Check::new("projection consistency");
    let mut general = Check::new("general product vs iterated binary");
    let mut ranks = Check::new("circular rank identities");
    let mut fourth = Check::new("fourth cumulant three ways");
    let mut pdouble = Check::new("poisson double integrals");

    oracle(&mut rng, configs, &mut moments, &mut cumulants, &mut coherence)?;
    projections(&mut rng, &mut proj)?;
    general_products(&mut rng, &mut general)?;
    rank_identities(&mut rng, &mut ranks)?;
    fourth_cumulants(&mut rng, &mut fourth)?;
    poisson_double(&mut rng, &mut pdouble)?;

    let checks = [moments, cumulants, coherence, proj, general, ranks, fourth, pdouble];
    let mut failed = 0;
    for c in &checks {
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        if !c.passed() {
            failed += 1;
        }
        p.both(
            format!("{verdict} {} ({} cases, worst relative error {:e})", c.name, c.cases, c.worst),
            "check",
            &json!({ "name": c.name, "passed": c.passed(), "cases": c.cases, "worst": c.worst }),
        )?;
    }
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}
