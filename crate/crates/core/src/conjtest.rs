//! Kernel-conjugacy machinery: elementwise vs global conjugation into a
//! target group by elements of the last-level kernel, the equivalence
//! property between the two, and exhaustive scans over small subgroups
//! searching for violations.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::groupcalc::{ElementSet, EnumConfig};
use crate::markovmap::build_generators;
use crate::par::pmap;
use crate::treeperm::Perm;

/// Report of one (H, G) conjugacy test.
#[derive(Debug, Clone, Serialize)]
pub struct ConjReport {
    pub n: u8,
    #[serde(serialize_with = "ser_perms")]
    pub h_gens: Vec<Perm>,
    pub h_order: u64,
    pub g_order: u64,
    pub elementwise: bool,
    /// How many elements of H admit a kernel witness.
    pub witness_count: u64,
    /// First element with no kernel witness, when elementwise fails.
    pub failing_element: Option<String>,
    pub global: bool,
    /// First kernel element conjugating all of H into G, if any.
    pub global_witness: Option<String>,
    /// elementwise <=> global.
    pub property_holds: bool,
}

fn ser_perms<S: serde::Serializer>(perms: &[Perm], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(perms.iter().map(|p| p.to_string()))
}

/// Kernel of the one-level restriction; iteration order is the canonical
/// sorted key order, so witnesses are reproducible.
pub fn kernel(n: u8) -> Result<ElementSet> {
    ElementSet::kernel(n)
}

/// Element paired with its first kernel witness, when one exists.
pub type Witness = (Perm, Option<Perm>);

/// For every h in `h_set`, searches the kernel for a witness k with
/// k h k^{-1} in `g`. Returns the witnesses found (None where none exists).
pub fn elementwise_conjugate(
    h_set: &ElementSet,
    g: &ElementSet,
    ker: &ElementSet,
) -> Result<(bool, Vec<Witness>)> {
    let kernel_elems: Vec<Perm> = ker.iter().collect();
    let mut out = Vec::with_capacity(h_set.len());
    let mut all = true;
    for h in h_set.iter() {
        let mut witness = None;
        for k in &kernel_elems {
            if g.contains(&h.conjugate(k)?) {
                witness = Some(k.clone());
                break;
            }
        }
        if witness.is_none() {
            all = false;
        }
        out.push((h, witness));
    }
    Ok((all, out))
}

/// Searches the kernel for one element conjugating every generator of H
/// into `g` simultaneously.
pub fn globally_conjugate(
    h_gens: &[Perm],
    g: &ElementSet,
    ker: &ElementSet,
) -> Result<(bool, Option<Perm>)> {
    for k in ker.iter() {
        let mut ok = true;
        for h in h_gens {
            if !g.contains(&h.conjugate(&k)?) {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok((true, Some(k)));
        }
    }
    Ok((false, None))
}

/// Tests the equivalence "elementwise iff global" for H = <h_gens> against
/// the enumerated group `g`.
pub fn property_p(h_gens: &[Perm], g: &ElementSet, cfg: &EnumConfig) -> Result<ConjReport> {
    let n = g.height();
    let ker = kernel(n)?;
    let h_set = ElementSet::closure(h_gens, cfg)?;
    let (elementwise, witnesses) = elementwise_conjugate(&h_set, g, &ker)?;
    let (global, global_witness) = globally_conjugate(h_gens, g, &ker)?;
    // Sanity: a global witness is in particular an elementwise witness.
    if global && !elementwise {
        return Err(Error::ConstructionMismatch(
            "global conjugacy without elementwise conjugacy".into(),
        ));
    }
    // Re-verify returned witnesses independently.
    for (h, w) in &witnesses {
        if let Some(k) = w {
            if !g.contains(&h.conjugate(k)?) {
                return Err(Error::ConstructionMismatch(
                    "bad elementwise witness".into(),
                ));
            }
        }
    }
    if let Some(k) = &global_witness {
        for h in h_gens {
            if !g.contains(&h.conjugate(k)?) {
                return Err(Error::ConstructionMismatch("bad global witness".into()));
            }
        }
    }
    Ok(ConjReport {
        n,
        h_gens: h_gens.to_vec(),
        h_order: h_set.len() as u64,
        g_order: g.len() as u64,
        elementwise,
        witness_count: witnesses.iter().filter(|(_, w)| w.is_some()).count() as u64,
        failing_element: witnesses
            .iter()
            .find(|(_, w)| w.is_none())
            .map(|(h, _)| h.to_string()),
        global,
        global_witness: global_witness.map(|k| k.to_string()),
        property_holds: elementwise == global,
    })
}

/// Scan result over all subgroups generated by at most two elements.
#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub model_id: u8,
    pub n: u8,
    pub g_order: u64,
    pub subgroups_scanned: u64,
    /// Pairs violating the equivalence (expected empty).
    pub violations: Vec<ConjReport>,
    /// Subgroups of order 2^(n+1) containing a transitive element; the
    /// equivalence is expected to hold unconditionally for these.
    pub odometer_class_checked: u64,
    pub odometer_class_violations: u64,
    /// Subgroups of the target's order meeting the kernel trivially.
    pub complement_class_checked: u64,
    pub complement_class_violations: u64,
}

/// Every distinct subgroup of the full level-n group generated by one or
/// two elements, each carrying a generating pair. Deterministic order.
pub fn distinct_small_subgroups(n: u8, cfg: &EnumConfig) -> Result<Vec<ElementSet>> {
    let ambient = ElementSet::full_group(n)?;
    let elements: Vec<Perm> = ambient.iter().collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..elements.len() {
        for j in i..elements.len() {
            pairs.push((i, j));
        }
    }
    let closed = pmap(cfg.parallel, &pairs, |&(i, j)| {
        let gens = if i == j {
            vec![elements[i].clone()]
        } else {
            vec![elements[i].clone(), elements[j].clone()]
        };
        let set = ElementSet::closure(&gens, &EnumConfig::sequential()).expect("small closure");
        (set.sorted_keys(), set)
    });
    let mut seen: HashMap<Vec<u64>, ElementSet> = HashMap::new();
    for (keys, set) in closed {
        seen.entry(keys).or_insert(set);
    }
    let mut subgroups: Vec<(Vec<u64>, ElementSet)> = seen.into_iter().collect();
    subgroups.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(subgroups.into_iter().map(|(_, s)| s).collect())
}

/// Random sample of subgroups generated by element pairs, deduplicated, for
/// levels where the exhaustive pair enumeration is out of reach.
pub fn sampled_small_subgroups(
    n: u8,
    samples: usize,
    seed: u64,
    cfg: &EnumConfig,
) -> Result<Vec<ElementSet>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let key_mask = (1u64 << ((1u32 << n) - 1)) - 1;
    let mut seen: HashMap<Vec<u64>, ElementSet> = HashMap::new();
    for _ in 0..samples {
        let a = Perm::from_packed_key(n, rng.gen::<u64>() & key_mask);
        let b = Perm::from_packed_key(n, rng.gen::<u64>() & key_mask);
        let set = ElementSet::closure(&[a, b], cfg)?;
        seen.entry(set.sorted_keys()).or_insert(set);
    }
    let mut subgroups: Vec<(Vec<u64>, ElementSet)> = seen.into_iter().collect();
    subgroups.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(subgroups.into_iter().map(|(_, s)| s).collect())
}

/// Scans subgroups generated by one or two elements against G = the model
/// group at the same level; exhaustive through level 3, sampled above it.
/// Reports every violation of the elementwise/global equivalence.
pub fn scan_property_p(model_id: u8, n: u8, cfg: &EnumConfig) -> Result<ScanReport> {
    let spec = build_generators(model_id, n)?;
    let g = ElementSet::closure(&spec.verification_gens(), cfg)?;
    let subgroups = if n <= 3 {
        distinct_small_subgroups(n, cfg)?
    } else {
        sampled_small_subgroups(n, 2000, 0x57a7, cfg)?
    };
    scan_property_p_against(model_id, &g, &subgroups, cfg)
}

/// The scan itself, reusable across target groups once the subgroup list is
/// enumerated.
pub fn scan_property_p_against(
    model_id: u8,
    g: &ElementSet,
    subgroups: &[ElementSet],
    cfg: &EnumConfig,
) -> Result<ScanReport> {
    let n = g.height();
    let ker = kernel(n)?;

    let reports = pmap(cfg.parallel, subgroups, |h_set| {
        let gens = h_set.generators().to_vec();
        let (elementwise, _) = elementwise_conjugate(h_set, g, &ker).expect("heights agree");
        let (global, witness) = globally_conjugate(&gens, g, &ker).expect("heights agree");
        let has_odometer = h_set.iter().any(|p| p.is_odometer());
        let meets_kernel_trivially = h_set
            .iter()
            .filter(|p| !p.is_identity())
            .all(|p| !ker.contains(&p));
        (
            h_set.len() as u64,
            gens,
            elementwise,
            global,
            witness,
            has_odometer,
            meets_kernel_trivially,
        )
    });

    let mut violations = Vec::new();
    let mut odometer_class_checked = 0u64;
    let mut odometer_class_violations = 0u64;
    let mut complement_class_checked = 0u64;
    let mut complement_class_violations = 0u64;
    for (h_order, gens, elementwise, global, witness, has_odometer, meets_kernel_trivially) in
        reports
    {
        let holds = elementwise == global;
        if h_order == 1u64 << (n as u64 + 1) && has_odometer {
            odometer_class_checked += 1;
            if !holds {
                odometer_class_violations += 1;
            }
        }
        if h_order == g.len() as u64 && meets_kernel_trivially {
            complement_class_checked += 1;
            if !holds {
                complement_class_violations += 1;
            }
        }
        if !holds {
            violations.push(ConjReport {
                n,
                h_gens: gens,
                h_order,
                g_order: g.len() as u64,
                elementwise,
                witness_count: 0,
                failing_element: None,
                global,
                global_witness: witness.map(|k| k.to_string()),
                property_holds: false,
            });
        }
    }
    Ok(ScanReport {
        model_id,
        n,
        g_order: g.len() as u64,
        subgroups_scanned: subgroups.len() as u64,
        violations,
        odometer_class_checked,
        odometer_class_violations,
        complement_class_checked,
        complement_class_violations,
    })
}

/// Exhaustive check of the lift compatibility at one level: every element of
/// the ambient group projecting into the model group at level n-1, whose
/// per-cycle doubling/splitting pattern over its projection also occurs in
/// the model group's fiber, is elementwise kernel-conjugate into the model
/// group.
pub fn check_lift_conjugacy(model_id: u8, n: u8, cfg: &EnumConfig) -> Result<(u64, u64)> {
    let spec_hi = build_generators(model_id, n)?;
    let spec_lo = build_generators(model_id, n - 1)?;
    let g_hi = ElementSet::closure(&spec_hi.verification_gens(), cfg)?;
    let g_lo = ElementSet::closure(&spec_lo.verification_gens(), cfg)?;
    let ker = kernel(n)?;

    // Fiber patterns of the model group over each projection.
    let mut fiber_patterns: HashMap<(u64, Vec<bool>), Vec<u64>> = HashMap::new();
    for y in g_hi.iter() {
        let x = y.project()?;
        fiber_patterns
            .entry((x.packed_key(), split_pattern(&y, &x)))
            .or_default()
            .push(y.packed_key());
    }

    let mut checked = 0u64;
    let mut matched = 0u64;
    for x in g_lo.iter() {
        for k in ker.iter() {
            // Every lift of x: x lifted trivially then twisted by the kernel.
            let y = trivial_lift(&x)?.mul_pub(&k);
            let pattern = split_pattern(&y, &x);
            if !fiber_patterns.contains_key(&(x.packed_key(), pattern)) {
                continue;
            }
            checked += 1;
            let mut found = false;
            for kk in ker.iter() {
                if g_hi.contains(&y.conjugate(&kk)?) {
                    found = true;
                    break;
                }
            }
            if found {
                matched += 1;
            }
        }
    }
    Ok((checked, matched))
}

/// Which cycles of the projection double (true) or split (false) in a lift.
fn split_pattern(y: &Perm, x: &Perm) -> Vec<bool> {
    x.cycles()
        .iter()
        .map(|c| {
            // The cycle of y through leaf 2*min has double length exactly
            // when the lift doubles this cycle.
            let start = 2 * c[0];
            let mut len = 1usize;
            let mut cur = y.image(start);
            while cur != start {
                cur = y.image(cur);
                len += 1;
            }
            len == 2 * c.len()
        })
        .collect()
}

/// The lift acting as x on odd/even leaf pairs without any bottom swaps.
fn trivial_lift(x: &Perm) -> Result<Perm> {
    let n = x.height();
    let mut map = vec![0u16; x.degree() * 2];
    for i in 0..x.degree() as u16 {
        map[2 * i as usize] = 2 * x.image(i);
        map[2 * i as usize + 1] = 2 * x.image(i) + 1;
    }
    Perm::try_new(n + 1, map)
}

trait MulPub {
    fn mul_pub(&self, other: &Perm) -> Perm;
}

impl MulPub for Perm {
    fn mul_pub(&self, other: &Perm) -> Perm {
        self.compose(other).expect("same height")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treeperm::standard_odometer;

    fn cfg() -> EnumConfig {
        EnumConfig::sequential()
    }

    #[test]
    fn kernel_orders() {
        assert_eq!(kernel(2).unwrap().len(), 4);
        assert_eq!(kernel(3).unwrap().len(), 16);
        for p in kernel(4).unwrap().iter() {
            assert!(p.project().unwrap().is_identity());
        }
    }

    #[test]
    fn subgroup_is_elementwise_conjugate_into_itself() {
        let spec = build_generators(5, 3).unwrap();
        let g = ElementSet::closure(&spec.group_gens(), &cfg()).unwrap();
        let report = property_p(&spec.group_gens(), &g, &cfg()).unwrap();
        assert!(report.elementwise && report.global && report.property_holds);
        assert_eq!(report.global_witness.as_deref(), Some("()"));
    }

    #[test]
    fn conjugated_subgroup_has_constant_witness() {
        let spec = build_generators(1, 3).unwrap();
        let g = ElementSet::closure(&spec.group_gens(), &cfg()).unwrap();
        // Twist the group by a kernel element, then test against the original.
        let k = kernel(3).unwrap().iter().nth(5).unwrap();
        let twisted: Vec<Perm> = spec
            .group_gens()
            .iter()
            .map(|h| h.conjugate(&k).unwrap())
            .collect();
        let report = property_p(&twisted, &g, &cfg()).unwrap();
        assert!(report.elementwise && report.global && report.property_holds);
    }

    #[test]
    fn cyclic_subgroups_always_satisfy_the_property() {
        let g = ElementSet::closure(&build_generators(3, 3).unwrap().group_gens(), &cfg()).unwrap();
        for seed in [0u64, 17, 63, 127] {
            let h = Perm::from_packed_key(3, seed);
            let report = property_p(&[h], &g, &cfg()).unwrap();
            assert!(report.property_holds);
        }
    }

    #[test]
    fn odometer_containing_subgroup_example() {
        // <x_3, v_0> has order 16 = 2^(3+1) and contains a transitive
        // element; the equivalence must hold against any target.
        let gens = vec![
            standard_odometer(3),
            crate::treeperm::v_element(0, 3).unwrap(),
        ];
        let g = ElementSet::closure(&build_generators(5, 3).unwrap().group_gens(), &cfg()).unwrap();
        let report = property_p(&gens, &g, &cfg()).unwrap();
        assert!(report.property_holds);
        assert_eq!(report.h_order, 16);
    }

    #[test]
    fn lift_pattern_conjugacy_level3() {
        let (checked, matched) = check_lift_conjugacy(5, 3, &cfg()).unwrap();
        assert!(checked > 0);
        assert_eq!(checked, matched);
    }
}
