use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use chaos_diagrams::chaos::{
    diagram_sum, flatten, product_general, product_iterated, ChaosDecomposition, DiagramReport, MeasureKind, Quantity,
};
use chaos_diagrams::clt::{
    circular_identities, clt_report, multidim_check, poisson_double_check, rank_sufficiency,
};
use chaos_diagrams::diagrams::{enumerate_class_capped, Diagram, PartitionClass, DEFAULT_CLASS_CAP};
use chaos_diagrams::kernels::{Kernel, KernelSpec};
use chaos_diagrams::partitions::{
    bell, count_partitions_with_class, mobius, set_partitions_capped, IntegerPartition, SetPartition,
    DEFAULT_ENUMERATION_CAP,
};
use chaos_diagrams::simulate::{empirical_cf, estimate_moments};

use crate::args::{Factors, KernelInput};
use crate::error::CliError;
use crate::output::Printer;

pub const CAP_ENV: &str = "CHAOSDIAG_CAP";
pub const HARD_CAP: usize = 16;

/// Ground-set ceilings for full enumerations and for diagram classes.
#[derive(Debug, Clone, Copy)]
pub struct Caps {
    pub partitions: usize,
    pub diagrams: usize,
}

impl Caps {
    pub fn resolve(flag: Option<usize>) -> Result<Self, CliError> {
        let chosen = match flag {
            Some(c) => Some(c),
            None => match std::env::var(CAP_ENV) {
                Ok(v) => Some(
                    v.trim()
                        .parse()
                        .map_err(|_| CliError::Usage(format!("{CAP_ENV}={v:?} is not a nonnegative integer")))?,
                ),
                Err(_) => None,
            },
        };
        match chosen {
            Some(c) if c > HARD_CAP => Err(CliError::Usage(format!("cap {c} exceeds the hard limit {HARD_CAP}"))),
            Some(c) => Ok(Caps { partitions: c, diagrams: c }),
            None => Ok(Caps { partitions: DEFAULT_ENUMERATION_CAP, diagrams: DEFAULT_CLASS_CAP }),
        }
    }
}

fn parse_partition(s: &str, n: usize) -> Result<SetPartition, CliError> {
    if n == 0 {
        return Err(CliError::Usage("n must be positive".into()));
    }
    let p = match s.trim().to_ascii_lowercase().as_str() {
        "0hat" | "0" | "finest" => SetPartition::finest(n),
        "1hat" | "1" | "coarsest" => SetPartition::coarsest(n),
        _ => s.parse::<SetPartition>()?,
    };
    if p.ground_size() != n {
        return Err(CliError::Usage(format!("{s} is a partition of [{}], expected [{n}]", p.ground_size())));
    }
    Ok(p)
}

pub fn partitions(p: &mut Printer, caps: Caps, n: usize, class: Option<&str>, count: bool) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("n must be positive".into()));
    }
    let class = class.map(str::parse::<IntegerPartition>).transpose()?;
    if let Some(c) = &class {
        if c.n() != n {
            return Err(CliError::Usage(format!("class {c} partitions {}, not {n}", c.n())));
        }
    }
    if count {
        let total = match &class {
            Some(c) => count_partitions_with_class(n, c)?,
            None => bell(n),
        };
        let class_str = class.as_ref().map(ToString::to_string);
        return p.both(total.to_string(), "count", &json!({ "n": n, "class": class_str, "count": total.to_string() }));
    }
    let want = class.map(|c| c.parts().to_vec());
    for sigma in set_partitions_capped(n, caps.partitions)? {
        if let Some(w) = &want {
            let mut sizes = sigma.block_sizes();
            sizes.sort_unstable_by(|a, b| b.cmp(a));
            if &sizes != w {
                continue;
            }
        }
        p.both(sigma.to_string(), "partition", &json!({ "sigma": sigma }))?;
    }
    Ok(())
}

pub fn mobius_cmd(p: &mut Printer, n: usize, sigma: &str, pi: &str) -> Result<(), CliError> {
    let s = parse_partition(sigma, n)?;
    let t = parse_partition(pi, n)?;
    let mu = mobius(&s, &t)?;
    p.both(mu.to_string(), "mobius", &json!({ "n": n, "sigma": s, "pi": t, "mu": mu.to_string() }))
}

pub fn diagrams(
    p: &mut Printer,
    caps: Caps,
    pi: &str,
    nonflat: bool,
    class: Option<&str>,
    count: bool,
    sigma: Option<&str>,
) -> Result<(), CliError> {
    let pi: SetPartition = pi.parse()?;
    let n = pi.ground_size();
    if let Some(s) = sigma {
        let sigma = parse_partition(s, n)?;
        let d = Diagram::new(pi.clone(), sigma.clone())?;
        let flags = d.classify();
        let classes: Vec<String> = PartitionClass::ALL
            .iter()
            .filter_map(|c| match c.contains(&pi, &sigma) {
                Ok(true) => Some(Ok(c.to_string())),
                Ok(false) => None,
                Err(e) => Some(Err(e)),
            })
            .collect::<Result<_, _>>()?;
        let graph = d.to_multigraph()?;
        if p.human() {
            p.raw(&d.render())?;
            p.line(format!(
                "connected={} nonflat={} gaussian={} circular={}",
                flags.connected, flags.nonflat, flags.gaussian, flags.circular
            ))?;
            p.line(format!("classes: {}", if classes.is_empty() { "-".into() } else { classes.join(" ") }))?;
            p.line(format!("multigraph: {graph}"))?;
        }
        return p.record(
            "diagram",
            &json!({ "pi": pi, "sigma": sigma, "flags": flags, "classes": classes, "multigraph": graph }),
        );
    }
    let which = if nonflat {
        Some(PartitionClass::M0)
    } else {
        class.map(str::parse::<PartitionClass>).transpose()?
    };
    let sigmas: Vec<SetPartition> = match which {
        Some(c) => enumerate_class_capped(&pi, c, caps.diagrams)?,
        None => set_partitions_capped(n, caps.partitions)?.collect(),
    };
    let label = which.map(|c| c.to_string()).unwrap_or_else(|| "all".into());
    if count {
        return p.both(
            sigmas.len().to_string(),
            "count",
            &json!({ "pi": pi, "class": label, "count": sigmas.len() }),
        );
    }
    for sigma in sigmas {
        let flags = Diagram::new(pi.clone(), sigma.clone())?.classify();
        let text = format!(
            "{sigma}  {}{}{}{}",
            if flags.connected { "C" } else { "-" },
            if flags.nonflat { "N" } else { "-" },
            if flags.gaussian { "G" } else { "-" },
            if flags.circular { "O" } else { "-" },
        );
        p.both(text, "diagram", &json!({ "sigma": sigma, "flags": flags }))?;
    }
    Ok(())
}

pub fn load_spec(path: &Path) -> Result<KernelSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.display().to_string(), source })?;
    text.parse::<KernelSpec>().map_err(|e| match e {
        chaos_diagrams::Error::Parse { line, msg } => {
            CliError::Usage(format!("{}:{line}: {msg}", path.display()))
        }
        other => other.into(),
    })
}

/// Kernels named on the command line, in order, with their names.
pub fn select(spec: &KernelSpec, input: &KernelInput) -> Result<Vec<(String, Kernel)>, CliError> {
    if input.names.is_empty() {
        if spec.kernels.is_empty() {
            return Err(CliError::Usage("spec file defines no kernels".into()));
        }
        return Ok(spec.kernels.clone());
    }
    input
        .names
        .iter()
        .map(|n| {
            spec.kernel(n)
                .map(|k| (n.clone(), k.clone()))
                .ok_or_else(|| CliError::Usage(format!("no kernel named {n:?}")))
        })
        .collect()
}

fn factor_list(spec: &KernelSpec, f: &Factors) -> Result<(Vec<String>, Vec<Kernel>), CliError> {
    let mut sel = select(spec, &f.input)?;
    if let Some(c) = f.copies {
        if c == 0 {
            return Err(CliError::Usage("--copies must be positive".into()));
        }
        sel = sel.iter().cycle().take(sel.len() * c).cloned().collect();
    }
    if let Some(order) = f.order {
        if order == 0 {
            return Err(CliError::Usage("--order must be positive".into()));
        }
        if sel.len() == 1 && f.copies.is_none() {
            sel = vec![sel[0].clone(); order];
        } else if sel.len() != order {
            return Err(CliError::Usage(format!("--order {order} but {} factors selected", sel.len())));
        }
    }
    Ok(sel.into_iter().unzip())
}

fn diagram_report(
    p: &mut Printer,
    caps: Caps,
    f: &Factors,
    quantity: Quantity,
) -> Result<(), CliError> {
    let spec = load_spec(&f.input.kernel)?;
    let (names, ks) = factor_list(&spec, f)?;
    let report = diagram_sum(f.kind.into(), &ks, quantity, caps.diagrams)?;
    print_diagram_report(p, &names, &report, f.terms)
}

fn print_diagram_report(p: &mut Printer, names: &[String], r: &DiagramReport, terms: bool) -> Result<(), CliError> {
    if terms {
        for t in &r.terms {
            p.both(format!("{}  {}", t.sigma, t.value), "term", t)?;
        }
    }
    let quantity = match r.quantity {
        Quantity::Moment => "moment",
        Quantity::Cumulant => "cumulant",
    };
    p.line(r.total.to_string())?;
    p.record(
        quantity,
        &json!({
            "kind": r.kind,
            "factors": names,
            "degrees": r.degrees,
            "diagrams": r.terms.len(),
            "value": r.total,
        }),
    )
}

pub fn moment(p: &mut Printer, caps: Caps, f: &Factors) -> Result<(), CliError> {
    diagram_report(p, caps, f, Quantity::Moment)
}

pub fn cumulant(p: &mut Printer, caps: Caps, f: &Factors) -> Result<(), CliError> {
    diagram_report(p, caps, f, Quantity::Cumulant)
}

#[derive(Serialize)]
struct EntryRecord<'a> {
    cells: Vec<&'a str>,
    value: f64,
}

fn entries_of(k: &Kernel) -> Vec<EntryRecord<'_>> {
    let sys = k.system();
    k.entries()
        .map(|(t, v)| EntryRecord { cells: t.iter().map(|&c| sys.label(c)).collect(), value: v })
        .collect()
}

pub fn product(p: &mut Printer, caps: Caps, f: &Factors, general: bool, emit_spec: bool) -> Result<(), CliError> {
    let spec = load_spec(&f.input.kernel)?;
    let (names, ks) = factor_list(&spec, f)?;
    if ks.len() < 2 {
        return Err(CliError::Usage("product needs at least two factors".into()));
    }
    let kind: MeasureKind = f.kind.into();
    let decomposition = if general {
        let n: usize = ks.iter().map(Kernel::degree).sum();
        if n > caps.diagrams {
            return Err(chaos_diagrams::Error::EnumerationCap { size: n, cap: caps.diagrams }.into());
        }
        let terms = product_general(kind, &ks)?;
        if f.terms {
            for t in &terms {
                p.both(
                    format!(
                        "{}  integrated={} kept={} norm={}",
                        t.sigma,
                        t.integrated.len(),
                        t.kept.len(),
                        t.kernel.norm()
                    ),
                    "reduced_term",
                    &json!({
                        "sigma": t.sigma,
                        "integrated": t.integrated,
                        "kept": t.kept,
                        "degree": t.kernel.degree(),
                        "entries": entries_of(&t.kernel),
                    }),
                )?;
            }
        }
        flatten(spec.system.clone(), &terms)?
    } else {
        product_iterated(kind, &ks)?
    };
    if emit_spec {
        return p.raw(&decomposition_spec(&decomposition));
    }
    p.both(
        format!("constant {}", decomposition.constant()),
        "constant",
        &json!({ "kind": kind, "factors": names, "value": decomposition.constant() }),
    )?;
    for (m, k) in decomposition.terms() {
        p.line(format!("order {m}: {} entries, norm {}", k.nnz(), k.norm()))?;
        let entries = entries_of(k);
        for e in &entries {
            p.line(format!("  {} {}", e.cells.join(" "), e.value))?;
        }
        p.record("chaos_term", &json!({ "order": m, "norm": k.norm(), "entries": entries }))?;
    }
    Ok(())
}

/// The decomposition as a spec file; the constant term rides in a comment.
fn decomposition_spec(d: &ChaosDecomposition) -> String {
    let spec = KernelSpec {
        system: d.system().clone(),
        kernels: d.terms().map(|(m, k)| (format!("h{m}"), k.clone())).collect(),
    };
    format!("# constant {}\n{spec}", d.constant())
}

#[allow(clippy::too_many_arguments)]
pub fn clt(
    p: &mut Printer,
    input: &KernelInput,
    threshold: f64,
    fourth: bool,
    tv: bool,
    contractions: bool,
    circular: bool,
    poisson_double: bool,
    rank_suff: Option<usize>,
    covariance: Option<&str>,
) -> Result<(), CliError> {
    let spec = load_spec(&input.kernel)?;
    let sel = select(&spec, input)?;
    if let Some(c) = covariance {
        let cov = parse_matrix(c)?;
        let ks: Vec<Kernel> = sel.iter().map(|(_, k)| k.clone()).collect();
        let r = multidim_check(&ks, &cov)?;
        if p.human() {
            for (i, comp) in r.components.iter().enumerate() {
                p.line(format!(
                    "component {} ({}): degree {} fourth cumulant {}",
                    i + 1,
                    sel[i].0,
                    comp.degree,
                    comp.fourth_cumulant
                ))?;
            }
            for (i, j, g) in &r.covariance_gaps {
                p.line(format!("covariance gap ({i},{j}) {g}"))?;
            }
            p.line(format!("sum fourth moment {} target {}", r.sum_fourth_moment, r.sum_fourth_target))?;
            for m in &r.mixed_moments {
                p.line(format!("mixed {:?} {} target {}", m.indices, m.value, m.target))?;
            }
        }
        p.record("multidim", &r)?;
        if !(fourth || tv || contractions || circular || poisson_double || rank_suff.is_some()) {
            return Ok(());
        }
    }
    let (name, f) = match sel.as_slice() {
        [one] => one.clone(),
        _ if covariance.is_some() => sel[0].clone(),
        _ => return Err(CliError::Usage("clt needs exactly one kernel; pass --names".into())),
    };
    let any = fourth || tv || contractions || circular || poisson_double || rank_suff.is_some();
    let (fourth, tv, contractions) = if any { (fourth, tv, contractions) } else { (true, true, true) };
    if fourth || tv || contractions {
        let r = clt_report(&f, threshold)?;
        if fourth {
            p.line(format!(
                "fourth cumulant: diagrams {} contractions {}",
                r.fourth_cumulant_diagrams, r.fourth_cumulant_contractions
            ))?;
        }
        if contractions {
            for (rr, nrm) in &r.contraction_norms {
                p.line(format!("contraction r={rr}: {nrm}"))?;
            }
        }
        if tv {
            p.line(format!("tv bound: {}", r.tv_bound))?;
        }
        p.line(format!(
            "normalization gap {} (threshold {}); normalized={} contractions_vanish={} fourth_cumulant_vanishes={} two_ways_agree={}",
            r.normalization_gap,
            r.threshold,
            r.verdicts.normalized,
            r.verdicts.contractions_vanish,
            r.verdicts.fourth_cumulant_vanishes,
            r.verdicts.two_ways_agree
        ))?;
        p.record("clt", &json!({ "kernel": name, "report": r }))?;
    }
    if circular {
        for c in circular_identities(&f)? {
            p.both(
                format!(
                    "{} rank {}: integral {} norms {} {}",
                    c.sigma, c.rank, c.integral, c.norm_rank, c.norm_corank
                ),
                "circular",
                &c,
            )?;
        }
    }
    if let Some(k) = rank_suff {
        let r = rank_sufficiency(&f, k)?;
        p.line(format!("max circular integral {}", r.max_circular_integral))?;
        for (order, c) in &r.cumulants {
            p.line(format!("cumulant {order}: {c}"))?;
        }
        p.record("rank_sufficiency", &r)?;
    }
    if poisson_double {
        let r = poisson_double_check(&f)?;
        p.line(format!("normalization {}", r.normalization))?;
        p.line(format!("fourth power {} diagram {}", r.fourth_power, r.diagram_fourth_power))?;
        p.line(format!("star_2^1 {} diagram {}", r.star_2_1, r.diagram_star_2_1))?;
        p.line(format!("star_1^1 {} diagram {}", r.star_1_1, r.diagram_star_1_1))?;
        p.record("poisson_double", &r)?;
    }
    Ok(())
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>, CliError> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad covariance entry {v:?}")))
                })
                .collect()
        })
        .collect()
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad number {v:?}"))))
        .collect()
}

pub fn simulate(
    p: &mut Printer,
    caps: Caps,
    f: &Factors,
    samples: u64,
    seed: u64,
    cf: Option<&str>,
) -> Result<(), CliError> {
    if samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let spec = load_spec(&f.input.kernel)?;
    let (names, ks) = factor_list(&spec, f)?;
    let kind: MeasureKind = f.kind.into();
    if let Some(grid) = cf {
        let lambdas = parse_list(grid)?;
        let [h] = ks.as_slice() else {
            return Err(CliError::Usage("--cf needs exactly one kernel".into()));
        };
        for pt in empirical_cf(kind, h, &lambdas, samples, seed)? {
            p.both(
                format!(
                    "lambda {}: re {} ± {} (exact {}) im {} ± {} (exact {})",
                    pt.lambda, pt.re.mean, pt.re.se, pt.exact_re, pt.im.mean, pt.im.se, pt.exact_im
                ),
                "cf",
                &pt,
            )?;
        }
        return Ok(());
    }
    let report = estimate_moments(kind, &ks, samples, seed)?;
    let exact_moment = diagram_sum(kind, &ks, Quantity::Moment, caps.diagrams)?.total;
    let exact_cumulant = diagram_sum(kind, &ks, Quantity::Cumulant, caps.diagrams)?.total;
    p.line(format!("samples {} seed {} batches {}", report.samples, report.seed, report.batches))?;
    if p.human() {
        for (subset, est) in &report.moments {
            p.line(format!("E{subset:?} {} ± {}", est.mean, est.se))?;
        }
    }
    p.line(format!(
        "moment {} ± {} exact {} ({:.2} se)",
        report.joint_moment.mean,
        report.joint_moment.se,
        exact_moment,
        z(report.joint_moment.mean, exact_moment, report.joint_moment.se)
    ))?;
    p.line(format!(
        "cumulant {} ± {} exact {} ({:.2} se)",
        report.joint_cumulant.mean,
        report.joint_cumulant.se,
        exact_cumulant,
        z(report.joint_cumulant.mean, exact_cumulant, report.joint_cumulant.se)
    ))?;
    p.record(
        "simulate",
        &json!({
            "factors": names,
            "report": report,
            "exact_moment": exact_moment,
            "exact_cumulant": exact_cumulant,
        }),
    )
}

fn z(est: f64, exact: f64, se: f64) -> f64 {
    if se > 0.0 {
        (est - exact).abs() / se
    } else if est == exact {
        0.0
    } else {
        f64::INFINITY
    }
}
