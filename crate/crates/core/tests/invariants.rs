//! Randomized invariants: group axioms on bulk random samples, portrait
//! round trips, exact dyadic algebra, and the cycle-data product laws.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use markov_groups::cycledata::{CycleData, Dyadic, Partition};
use markov_groups::groupcalc::{cd, ElementSet, EnumConfig};
use markov_groups::markov::{level_data, Mode};
use markov_groups::treeperm::{generator_a, Perm};

fn random_perm(rng: &mut ChaCha8Rng, n: u8) -> Perm {
    let bits = rng.gen::<u64>() & ((1u64 << ((1u32 << n) - 1)) - 1);
    Perm::from_packed_key(n, bits)
}

#[test]
fn group_axioms_bulk_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 1..=5u8 {
        let id = Perm::identity(n);
        for _ in 0..10_000 {
            let a = random_perm(&mut rng, n);
            let b = random_perm(&mut rng, n);
            let c = random_perm(&mut rng, n);
            let ab_c = a.compose(&b).unwrap().compose(&c).unwrap();
            let a_bc = a.compose(&b.compose(&c).unwrap()).unwrap();
            assert_eq!(ab_c, a_bc);
            assert_eq!(a.compose(&id).unwrap(), a);
            assert_eq!(id.compose(&a).unwrap(), a);
            assert!(a.compose(&a.inverse()).unwrap().is_identity());
        }
    }
}

#[test]
fn generator_words_preserve_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 2..=6u8 {
        let gens: Vec<Perm> = (1..=n).map(|i| generator_a(i, n).unwrap()).collect();
        for _ in 0..500 {
            let mut w = Perm::identity(n);
            for _ in 0..rng.gen_range(1..20) {
                w = w.compose(&gens[rng.gen_range(0..gens.len())]).unwrap();
            }
            assert!(w.preserves_blocks());
        }
    }
}

#[test]
fn relative_data_of_random_subgroups_sums_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = EnumConfig::sequential();
    for n in 2..=4u8 {
        for _ in 0..20 {
            let gens = vec![random_perm(&mut rng, n), random_perm(&mut rng, n)];
            let set = ElementSet::closure(&gens, &cfg).unwrap();
            assert!(cd(&set, &set).unwrap().total().is_one());
        }
    }
}

#[test]
fn markov_steps_conserve_density_on_all_models() {
    for model in 1..=6u8 {
        for n in 1..=5u32 {
            let data = level_data(model, n, Mode::Even, false).unwrap();
            assert!(data.total().is_one(), "model {model} level {n}");
            for t in data.support() {
                assert_eq!(t.total_degree(), 1u64 << n);
            }
        }
    }
}

proptest! {
    #[test]
    fn portrait_round_trip_random(n in 1u8..=6, bits in any::<u64>()) {
        let key = bits & ((1u64 << ((1u32 << n) - 1)) - 1);
        let p = Perm::from_packed_key(n, key);
        prop_assert_eq!(p.packed_key(), key);
        prop_assert_eq!(Perm::from_portrait(&p.to_portrait()), p);
    }

    #[test]
    fn dyadic_algebra_exact(
        a in (0u64..1 << 40, 0u32..30),
        b in (0u64..1 << 40, 0u32..30),
        c in (0u64..1 << 40, 0u32..30),
    ) {
        let d = |(num, exp): (u64, u32)| Dyadic::new(num, exp);
        let (a, b, c) = (d(a), d(b), d(c));
        prop_assert_eq!(a.add(&b).add(&c), a.add(&b.add(&c)));
        prop_assert_eq!(a.add(&b), b.add(&a));
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        prop_assert_eq!(a.mul(&b), b.mul(&a));
    }

    #[test]
    fn doubling_distributes_over_merge(
        p1 in proptest::collection::vec(1u32..40, 1..6),
        p2 in proptest::collection::vec(1u32..40, 1..6),
    ) {
        // Pad to equal sums so the merge is defined.
        let mut p1 = p1;
        let mut p2 = p2;
        let s1: u32 = p1.iter().sum();
        let s2: u32 = p2.iter().sum();
        if s1 < s2 {
            p1.push(s2 - s1);
        } else if s2 < s1 {
            p2.push(s1 - s2);
        }
        let (p1, p2) = (Partition::new(p1), Partition::new(p2));
        let lhs = p1.merge_star(&p2).unwrap().double();
        let rhs = p1.double().merge_star(&p2.double()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn product_is_commutative_and_scale_slides(
        entries_a in proptest::collection::vec((1u32..10, 1u64..100, 2u32..12), 1..4),
        entries_b in proptest::collection::vec((1u32..10, 1u64..100, 2u32..12), 1..4),
    ) {
        // Build cycle data over a common total by padding partitions.
        let total = 64u32;
        let build = |entries: &[(u32, u64, u32)]| {
            let mut cd = CycleData::new(6);
            for &(part, num, exp) in entries {
                let mut parts = vec![part.min(total)];
                let mut left = total - parts[0];
                while left > 0 {
                    let take = left.min(part.max(1));
                    parts.push(take);
                    left -= take;
                }
                cd.accumulate(Partition::new(parts), Dyadic::new(num, exp.max(7)));
            }
            cd
        };
        let a = build(&entries_a);
        let b = build(&entries_b);
        prop_assert_eq!(a.product(&b).unwrap(), b.product(&a).unwrap());
        let r = Dyadic::new(1u32, 2);
        let lhs = a.product(&b).unwrap().scale(&r).unwrap();
        let rhs = a.scale(&r).unwrap().product(&b).unwrap();
        prop_assert_eq!(lhs, rhs);
    }
}
