use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chaos_diagrams::chaos::{joint_cumulant, joint_cumulant_via_moments, MeasureKind};
use chaos_diagrams::cumulants::{cumulants_from_moments, malyshev, moments_from_cumulants, JointCumulantTable, JointMomentTable};
use chaos_diagrams::kernels::{random_kernel, CellSystem, KernelSpec};
use chaos_diagrams::partitions::{mobius, set_partitions, SetPartition};

fn partition(max_n: usize) -> impl Strategy<Value = SetPartition> {
    (1..=max_n).prop_flat_map(partition_of)
}

fn pair(max_n: usize) -> impl Strategy<Value = (SetPartition, SetPartition)> {
    (1..=max_n).prop_flat_map(|n| (partition_of(n), partition_of(n)))
}

fn partition_of(n: usize) -> impl Strategy<Value = SetPartition> {
    proptest::collection::vec(0..n, n).prop_map(move |labels| {
        let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, &l) in labels.iter().enumerate() {
            blocks[l].push(i + 1);
        }
        SetPartition::new(n, blocks.into_iter().filter(|b| !b.is_empty()).collect()).unwrap()
    })
}

fn table(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, (1usize << n) - 1)
}

proptest! {
    #[test]
    fn display_parse_round_trip(p in partition(9)) {
        let back: SetPartition = p.to_string().parse().unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn meet_and_join_bound_both((a, b) in pair(7)) {
        let meet = a.meet(&b).unwrap();
        let join = a.join(&b).unwrap();
        prop_assert!(meet.leq(&a).unwrap() && meet.leq(&b).unwrap());
        prop_assert!(a.leq(&join).unwrap() && b.leq(&join).unwrap());
        prop_assert_eq!(a.meet(&join).unwrap(), a.clone());
        prop_assert_eq!(a.join(&meet).unwrap(), a);
    }

    #[test]
    fn mobius_inverts_zeta((a, x) in pair(6)) {
        // Σ_{a ≤ c ≤ b} μ(a, c) = δ(a, b)
        let b = a.join(&x).unwrap();
        let n = a.ground_size();
        let sum: i128 = set_partitions(n)
            .unwrap()
            .filter(|c| a.leq(c).unwrap() && c.leq(&b).unwrap())
            .map(|c| mobius(&a, &c).unwrap())
            .sum();
        prop_assert_eq!(sum, i128::from(a == b));
    }

    #[test]
    fn cumulant_round_trip(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..(1usize << n) - 1).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let mut it = values.iter();
        let c = JointCumulantTable::from_fn(n, |_| *it.next().unwrap()).unwrap();
        let back = cumulants_from_moments(&moments_from_cumulants(&c));
        for r in c.records() {
            prop_assert!((back.get(&r.subset).unwrap() - r.value).abs() <= 1e-12);
        }
    }

    #[test]
    fn moment_round_trip(values in (1usize..=6).prop_flat_map(table)) {
        let n = (values.len() + 1).trailing_zeros() as usize;
        let mut it = values.iter();
        let m = JointMomentTable::from_fn(n, |_| *it.next().unwrap()).unwrap();
        let back = moments_from_cumulants(&cumulants_from_moments(&m));
        for r in m.records() {
            prop_assert!((back.get(&r.subset).unwrap() - r.value).abs() <= 1e-12);
        }
    }

    #[test]
    fn malyshev_matches_grouped_moments(values in (1usize..=5).prop_flat_map(table), pick in any::<prop::sample::Index>()) {
        let n = (values.len() + 1).trailing_zeros() as usize;
        let mut it = values.iter();
        let c = JointCumulantTable::from_fn(n, |_| *it.next().unwrap()).unwrap();
        let m = moments_from_cumulants(&c);
        let all: Vec<SetPartition> = set_partitions(n).unwrap().collect();
        let grouping = &all[pick.index(all.len())];
        let blocks = grouping.blocks();
        let grouped = JointMomentTable::from_fn(blocks.len(), |b| {
            let mut members: Vec<usize> = b.iter().flat_map(|&j| blocks[j - 1].iter().copied()).collect();
            members.sort_unstable();
            m.get(&members).unwrap()
        }).unwrap();
        let direct = cumulants_from_moments(&grouped).full();
        prop_assert!((direct - malyshev(grouping, &c).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn symmetrize_is_idempotent(seed in any::<u64>(), d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let system = Arc::new(CellSystem::from_masses(vec![0.5, 1.0, 1.5]).unwrap());
        let f = random_kernel(system, d, false, &mut rng);
        let once = f.to_tensor().symmetrize();
        prop_assert!(once.max_abs_diff(&f) <= 1e-15);
        prop_assert!(once.to_tensor().symmetrize().max_abs_diff(&once) <= 1e-15);
    }

    #[test]
    fn diagram_cumulants_cohere_with_moments(seed in any::<u64>(), k in 1usize..=3, poisson in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = if poisson { MeasureKind::Poisson } else { MeasureKind::Gaussian };
        let system = Arc::new(CellSystem::from_masses(vec![0.7, 1.2, 0.4]).unwrap());
        let fs: Vec<_> = (0..k).map(|i| random_kernel(system.clone(), 1 + i % 2, poisson, &mut rng)).collect();
        let a = joint_cumulant(kind, &fs).unwrap();
        let b = joint_cumulant_via_moments(kind, &fs).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn spec_round_trip(seed in any::<u64>(), d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let system = Arc::new(CellSystem::from_masses(vec![0.25, 1.0, 3.5]).unwrap());
        let spec = KernelSpec {
            system: system.clone(),
            kernels: vec![
                ("f".into(), random_kernel(system.clone(), d, false, &mut rng)),
                ("g".into(), random_kernel(system, 1, true, &mut rng)),
            ],
        };
        let text = spec.to_string();
        let parsed: KernelSpec = text.parse().unwrap();
        prop_assert_eq!(parsed.to_string(), text);
        prop_assert_eq!(parsed, spec);
    }
}
