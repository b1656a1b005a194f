//! Subgroup enumeration and structural verification: BFS closures over
//! packed portrait keys, relative cycle data of groups and cosets, even
//! parts, quotient invariants, whole-group verification against the Markov
//! model, and the Hausdorff dimension sequence.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use crate::cycledata::{CycleData, Dyadic, Partition};
use crate::error::{Error, Result};
use crate::markov::{self, Mode};
use crate::markovmap::{build_generators, m_element, subgroup_generators};
use crate::par::{pchunk_flat_map, psort_u64};
use crate::treeperm::{standard_odometer, v_element, Perm, MAX_PACKED_HEIGHT};

/// Knobs for enumeration: parallelism, memory budget, and an optional size
/// hint that pre-sizes the visited set.
#[derive(Debug, Clone)]
pub struct EnumConfig {
    pub parallel: bool,
    pub memory_cap_bytes: u64,
    pub expected_order: Option<u64>,
}

impl Default for EnumConfig {
    fn default() -> Self {
        EnumConfig {
            parallel: cfg!(feature = "parallel"),
            memory_cap_bytes: 2 << 30,
            expected_order: None,
        }
    }
}

impl EnumConfig {
    pub fn sequential() -> Self {
        EnumConfig {
            parallel: false,
            ..Default::default()
        }
    }
}

const BFS_CHUNK: usize = 4096;

/// An explicit set of tree automorphisms of one height, stored as packed
/// portrait keys. Iteration order is always ascending key order, so every
/// derived report is independent of how the set was built.
#[derive(Debug, Clone)]
pub struct ElementSet {
    n: u8,
    keys: HashSet<u64>,
    gens: Vec<Perm>,
    is_group: bool,
}

fn check_packable(n: u8) -> Result<()> {
    if n == 0 || n > MAX_PACKED_HEIGHT {
        return Err(Error::HeightOutOfRange(n));
    }
    Ok(())
}

impl ElementSet {
    /// The subgroup generated by `gens`: breadth-first closure under right
    /// multiplication by the generators.
    pub fn closure(gens: &[Perm], cfg: &EnumConfig) -> Result<ElementSet> {
        let (set, _) = Self::closure_inner(gens, cfg, false)?;
        Ok(set)
    }

    /// Closure that also tallies the cycle-type histogram while elements are
    /// discovered. This is the mode the largest runs use: the only per-element
    /// state retained is the 8-byte key.
    pub fn closure_histogram(
        gens: &[Perm],
        cfg: &EnumConfig,
    ) -> Result<(ElementSet, BTreeMap<Partition, u64>)> {
        let (set, hist) = Self::closure_inner(gens, cfg, true)?;
        Ok((set, hist.expect("histogram requested")))
    }

    fn closure_inner(
        gens: &[Perm],
        cfg: &EnumConfig,
        want_hist: bool,
    ) -> Result<(ElementSet, Option<BTreeMap<Partition, u64>>)> {
        let n = gens
            .first()
            .map(|g| g.height())
            .ok_or(Error::HeightOutOfRange(0))?;
        check_packable(n)?;
        for g in gens {
            if g.height() != n {
                return Err(Error::HeightMismatch {
                    left: n,
                    right: g.height(),
                });
            }
        }
        let gens: Vec<Perm> = gens.to_vec();
        let mut keys = HashSet::with_capacity(cfg.expected_order.unwrap_or(64) as usize);
        let mut hist: BTreeMap<Partition, u64> = BTreeMap::new();
        let id = Perm::identity(n);
        keys.insert(id.packed_key());
        if want_hist {
            *hist.entry(id.cycle_type()).or_insert(0) += 1;
        }
        let mut frontier: Vec<u64> = vec![id.packed_key()];
        while !frontier.is_empty() {
            let mut candidates: Vec<u64> =
                pchunk_flat_map(cfg.parallel, &frontier, BFS_CHUNK, |chunk| {
                    let mut out = Vec::with_capacity(chunk.len() * gens.len());
                    for &key in chunk {
                        let p = Perm::from_packed_key(n, key);
                        for g in &gens {
                            out.push(p.mul(g).packed_key());
                        }
                    }
                    out
                });
            psort_u64(cfg.parallel, &mut candidates);
            candidates.dedup();
            let mut next = Vec::new();
            for k in candidates {
                if keys.insert(k) {
                    next.push(k);
                }
            }
            if want_hist && !next.is_empty() {
                let partials = pchunk_flat_map(cfg.parallel, &next, BFS_CHUNK, |chunk| {
                    let mut local: BTreeMap<Partition, u64> = BTreeMap::new();
                    for &k in chunk {
                        *local
                            .entry(Perm::from_packed_key(n, k).cycle_type())
                            .or_insert(0) += 1;
                    }
                    vec![local]
                });
                for local in partials {
                    for (p, c) in local {
                        *hist.entry(p).or_insert(0) += c;
                    }
                }
            }
            let approx_bytes = (keys.capacity() as u64) * 9 + (next.len() as u64) * 16;
            if approx_bytes > cfg.memory_cap_bytes {
                return Err(Error::BudgetExceeded {
                    elements_seen: keys.len() as u64,
                });
            }
            frontier = next;
        }
        let set = ElementSet {
            n,
            keys,
            gens,
            is_group: true,
        };
        Ok((set, want_hist.then_some(hist)))
    }

    /// A plain set (not necessarily a subgroup) from explicit elements.
    pub fn from_perms<'a>(
        n: u8,
        perms: impl IntoIterator<Item = &'a Perm>,
        is_group: bool,
    ) -> Result<ElementSet> {
        check_packable(n)?;
        let mut keys = HashSet::new();
        for p in perms {
            if p.height() != n {
                return Err(Error::HeightMismatch {
                    left: n,
                    right: p.height(),
                });
            }
            keys.insert(p.packed_key());
        }
        Ok(ElementSet {
            n,
            keys,
            gens: Vec::new(),
            is_group,
        })
    }

    /// All of the ambient automorphism group: every packed key is valid.
    pub fn full_group(n: u8) -> Result<ElementSet> {
        check_packable(n)?;
        if n > 5 {
            // 2^63 keys will not fit anywhere.
            return Err(Error::BudgetExceeded { elements_seen: 0 });
        }
        let total = 1u64 << ((1u32 << n) - 1);
        let keys: HashSet<u64> = (0..total).collect();
        let gens = (1..=n)
            .map(|i| crate::treeperm::generator_a(i, n).unwrap())
            .collect();
        Ok(ElementSet {
            n,
            keys,
            gens,
            is_group: true,
        })
    }

    /// Kernel of the restriction one level down: elements whose portrait is
    /// trivial above the last level. Order 2^(2^(n-1)).
    pub fn kernel(n: u8) -> Result<ElementSet> {
        check_packable(n)?;
        if n < 2 {
            return Err(Error::HeightOutOfRange(n));
        }
        let low = (1u64 << (n - 1)) - 1; // nodes above the last level
        let count = 1u64 << (1u32 << (n - 1));
        let keys: HashSet<u64> = (0..count).map(|bits| bits << low).collect();
        Ok(ElementSet {
            n,
            keys,
            gens: Vec::new(),
            is_group: true,
        })
    }

    pub fn height(&self) -> u8 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn is_group(&self) -> bool {
        self.is_group
    }

    pub fn generators(&self) -> &[Perm] {
        &self.gens
    }

    pub fn contains(&self, p: &Perm) -> bool {
        p.height() == self.n && self.keys.contains(&p.packed_key())
    }

    pub fn contains_key(&self, key: u64) -> bool {
        self.keys.contains(&key)
    }

    /// Keys in ascending order: the canonical iteration order.
    pub fn sorted_keys(&self) -> Vec<u64> {
        let mut keys: Vec<u64> = self.keys.iter().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn iter(&self) -> impl Iterator<Item = Perm> + '_ {
        self.sorted_keys()
            .into_iter()
            .map(move |k| Perm::from_packed_key(self.n, k))
    }

    pub fn is_subset_of(&self, other: &ElementSet) -> bool {
        self.n == other.n && self.keys.iter().all(|k| other.keys.contains(k))
    }

    pub fn same_elements(&self, other: &ElementSet) -> bool {
        self.n == other.n && self.keys == other.keys
    }

    /// Left coset {rep h : h in self}.
    pub fn coset(&self, rep: &Perm) -> Result<ElementSet> {
        if rep.height() != self.n {
            return Err(Error::HeightMismatch {
                left: self.n,
                right: rep.height(),
            });
        }
        let mut keys = HashSet::with_capacity(self.keys.len());
        for p in self.iter() {
            keys.insert(rep.mul(&p).packed_key());
        }
        Ok(ElementSet {
            n: self.n,
            keys,
            gens: Vec::new(),
            is_group: false,
        })
    }

    /// Elements with all level parities even (the intersection with the
    /// Frattini subgroup of the ambient group). Uses the packed portrait
    /// directly: parity of level k is the popcount of its bit range.
    pub fn even_part(&self) -> ElementSet {
        let masks = parity_masks(self.n);
        let keys = self
            .keys
            .iter()
            .copied()
            .filter(|&k| masks.iter().all(|&m| (k & m).count_ones() % 2 == 0))
            .collect();
        ElementSet {
            n: self.n,
            keys,
            gens: Vec::new(),
            is_group: self.is_group,
        }
    }

    /// The definitional form of the even part: elements g such that w g is
    /// transitive, for a given transitive w. Agrees with [`even_part`] and
    /// is kept as the independent cross-check.
    pub fn even_part_definitional(&self, w: &Perm) -> Result<ElementSet> {
        if !w.is_odometer() {
            return Err(Error::NotTreeAutomorphism);
        }
        if w.height() != self.n {
            return Err(Error::HeightMismatch {
                left: self.n,
                right: w.height(),
            });
        }
        let mut keys = HashSet::new();
        for g in self.iter() {
            if w.mul(&g).is_odometer() {
                keys.insert(g.packed_key());
            }
        }
        Ok(ElementSet {
            n: self.n,
            keys,
            gens: Vec::new(),
            is_group: self.is_group,
        })
    }

    pub fn cycle_histogram(&self) -> BTreeMap<Partition, u64> {
        let keys = self.sorted_keys();
        let partials = pchunk_flat_map(false, &keys, BFS_CHUNK, |chunk| {
            let mut local: BTreeMap<Partition, u64> = BTreeMap::new();
            for &k in chunk {
                *local
                    .entry(Perm::from_packed_key(self.n, k).cycle_type())
                    .or_insert(0) += 1;
            }
            vec![local]
        });
        let mut hist = BTreeMap::new();
        for local in partials {
            for (p, c) in local {
                *hist.entry(p).or_insert(0) += c;
            }
        }
        hist
    }

    /// Adds one generator and re-closes in place.
    pub fn extend_with(&mut self, g: &Perm) -> Result<()> {
        if g.height() != self.n {
            return Err(Error::HeightMismatch {
                left: self.n,
                right: g.height(),
            });
        }
        if self.contains(g) {
            return Ok(());
        }
        self.gens.push(g.clone());
        let mut frontier = vec![g.packed_key()];
        self.keys.insert(g.packed_key());
        while let Some(key) = frontier.pop() {
            let p = Perm::from_packed_key(self.n, key);
            for gen in &self.gens {
                let k = p.mul(gen).packed_key();
                if self.keys.insert(k) {
                    frontier.push(k);
                }
            }
        }
        Ok(())
    }

    /// Smallest subgroup containing `h_gens` and closed under conjugation by
    /// the group generated by `under_gens`.
    pub fn normal_closure(
        h_gens: &[Perm],
        under_gens: &[Perm],
        cfg: &EnumConfig,
    ) -> Result<ElementSet> {
        let mut set = ElementSet::closure(h_gens, cfg)?;
        let mut queue: Vec<Perm> = h_gens.to_vec();
        while let Some(s) = queue.pop() {
            for g in under_gens {
                let c = s.conjugate(g)?;
                if !set.contains(&c) {
                    set.extend_with(&c)?;
                    queue.push(c);
                }
            }
        }
        Ok(set)
    }

    /// True when conjugating every generator of `sub` by every generator of
    /// this (generated) group stays inside `sub`.
    pub fn normalizes(&self, sub: &ElementSet) -> Result<bool> {
        let sub_gens: Vec<Perm> = if sub.gens.is_empty() {
            sub.iter().collect()
        } else {
            sub.gens.clone()
        };
        let ambient_gens: Vec<Perm> = if self.gens.is_empty() {
            self.iter().collect()
        } else {
            self.gens.clone()
        };
        for g in &ambient_gens {
            for s in &sub_gens {
                if !sub.contains(&s.conjugate(g)?) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

fn parity_masks(n: u8) -> Vec<u64> {
    (0..n)
        .map(|k| {
            let width = 1u64 << k;
            ((1u64 << width) - 1) << (width - 1)
        })
        .collect()
}

/// Relative cycle data CD(s1, s2): for each cycle type of s1, the count in
/// s1 divided by |s2|. Requires s1 to be contained in s2 and |s2| to be a
/// power of two.
pub fn cd(s1: &ElementSet, s2: &ElementSet) -> Result<CycleData> {
    if !s1.is_subset_of(s2) {
        return Err(Error::NotASubset);
    }
    CycleData::from_histogram(s1.height(), &s1.cycle_histogram(), s2.len() as u64)
}

/// CD of the left coset rep*sub relative to `ambient`.
pub fn coset_cycle_data(rep: &Perm, sub: &ElementSet, ambient: &ElementSet) -> Result<CycleData> {
    if !ambient.contains(rep) || !sub.is_subset_of(ambient) {
        return Err(Error::NotASubset);
    }
    cd(&sub.coset(rep)?, ambient)
}

/// Outcome of a quotient computation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum QuotientStructure {
    /// Invariant factors in descending order; empty for the trivial group.
    Abelian(Vec<u64>),
    NonAbelian,
}

/// Computes G/N via explicit coset multiplication. N must be normal in G.
pub fn quotient_structure(g: &ElementSet, n_sub: &ElementSet) -> Result<QuotientStructure> {
    if !n_sub.is_subset_of(g) {
        return Err(Error::NotASubset);
    }
    if !g.normalizes(n_sub)? {
        return Err(Error::NotNormal);
    }
    // Assign coset ids in canonical element order.
    let mut coset_of: HashMap<u64, usize> = HashMap::with_capacity(g.len());
    let mut reps: Vec<Perm> = Vec::new();
    for p in g.iter() {
        if coset_of.contains_key(&p.packed_key()) {
            continue;
        }
        let id = reps.len();
        for h in n_sub.iter() {
            coset_of.insert(p.mul(&h).packed_key(), id);
        }
        reps.push(p);
    }
    let k = reps.len();
    let mut table = vec![vec![0usize; k]; k];
    for (i, a) in reps.iter().enumerate() {
        for (j, b) in reps.iter().enumerate() {
            table[i][j] = coset_of[&a.mul(b).packed_key()];
        }
    }
    for (i, row) in table.iter().enumerate() {
        for (j, &entry) in row.iter().enumerate() {
            if entry != table[j][i] {
                return Ok(QuotientStructure::NonAbelian);
            }
        }
    }
    Ok(QuotientStructure::Abelian(abelian_invariants(&table)))
}

/// Invariant factors of a finite abelian group given by its multiplication
/// table, descending. Peels a maximal-order cyclic factor and recurses on
/// the quotient.
fn abelian_invariants(table: &[Vec<usize>]) -> Vec<u64> {
    let k = table.len();
    if k == 1 {
        return Vec::new();
    }
    let order_of = |e: usize| -> u64 {
        let mut cur = e;
        let mut ord = 1u64;
        while cur != 0 {
            cur = table[cur][e];
            ord += 1;
        }
        ord
    };
    let (best, best_ord) = (0..k)
        .map(|e| (e, order_of(e)))
        .max_by_key(|&(_, o)| o)
        .expect("nonempty table");
    // Cosets of the cyclic subgroup generated by `best`.
    let mut cyclic = Vec::new();
    let mut cur = 0usize;
    loop {
        cyclic.push(cur);
        cur = table[cur][best];
        if cur == 0 {
            break;
        }
    }
    let mut coset_of: HashMap<usize, usize> = HashMap::new();
    let mut reps = Vec::new();
    for (e, row) in table.iter().enumerate() {
        if coset_of.contains_key(&e) {
            continue;
        }
        let id = reps.len();
        for &c in &cyclic {
            coset_of.insert(row[c], id);
        }
        reps.push(e);
    }
    let q = reps.len();
    let mut quot = vec![vec![0usize; q]; q];
    for i in 0..q {
        for j in 0..q {
            quot[i][j] = coset_of[&table[reps[i]][reps[j]]];
        }
    }
    let mut inv = vec![best_ord];
    inv.extend(abelian_invariants(&quot));
    inv.sort_unstable_by(|a, b| b.cmp(a));
    inv
}

/// Count of transitive elements of the full group, by brute force.
pub fn odometer_census(n: u8) -> Result<u64> {
    if n == 0 || n > 4 {
        return Err(Error::HeightOutOfRange(n));
    }
    let total = 1u64 << ((1u32 << n) - 1);
    let count = (0..total)
        .filter(|&k| Perm::from_packed_key(n, k).is_odometer())
        .count() as u64;
    Ok(count)
}

/// log2 of the model group order, from the closed-order formulas.
pub fn log2_order(model_id: u8, n: u8) -> Result<u64> {
    if n == 0 {
        return Err(Error::HeightOutOfRange(0));
    }
    let n64 = n as u64;
    Ok(match model_id {
        1 => 1u64 << (n64 - 1),
        2 => {
            if n == 1 {
                0
            } else {
                (1u64 << (n64 - 1)) - 1
            }
        }
        3 => {
            if n == 1 {
                1
            } else {
                (1u64 << (n64 - 1)) + 1
            }
        }
        4 => {
            if n == 1 {
                1
            } else {
                1u64 << (n64 - 1)
            }
        }
        5 => {
            if n == 1 {
                1
            } else {
                3 << (n64 - 2)
            }
        }
        6 => {
            if n == 1 {
                1
            } else {
                (3 << (n64 - 2)) - 1
            }
        }
        other => return Err(Error::UnknownModel(other)),
    })
}

/// One row of the Hausdorff dimension table.
#[derive(Debug, Clone, Serialize)]
pub struct HausdorffRow {
    pub n: u8,
    pub log2_group_order: u64,
    pub log2_ambient_order: u64,
    /// Enumerated log2 order, where enumeration was feasible.
    pub log2_enumerated: Option<u64>,
}

impl HausdorffRow {
    /// The ratio as an exact reduced fraction.
    pub fn ratio(&self) -> (u64, u64) {
        let g = gcd_u64(self.log2_group_order, self.log2_ambient_order);
        if g == 0 {
            return (0, 1);
        }
        (self.log2_group_order / g, self.log2_ambient_order / g)
    }
}

fn gcd_u64(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd_u64(b, a % b)
    }
}

/// Formula-based log-orders up to `n_max`, with enumeration cross-checks up
/// to `enumerate_up_to` (heights above the packed bound are skipped).
pub fn hausdorff_sequence(
    model_id: u8,
    n_max: u8,
    enumerate_up_to: u8,
    cfg: &EnumConfig,
) -> Result<Vec<HausdorffRow>> {
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let log2_group = log2_order(model_id, n)?;
        let log2_ambient = (1u64 << n) - 1;
        let log2_enumerated = if n <= enumerate_up_to && n <= MAX_PACKED_HEIGHT {
            let spec = build_generators(model_id, n)?;
            let mut c = cfg.clone();
            c.expected_order = Some(1u64 << log2_group.min(40));
            let set = ElementSet::closure(&spec.verification_gens(), &c)?;
            let order = set.len() as u64;
            if !order.is_power_of_two() {
                return Err(Error::ConstructionMismatch(format!(
                    "order {order} is not a power of two"
                )));
            }
            Some(order.trailing_zeros() as u64)
        } else {
            None
        };
        rows.push(HausdorffRow {
            n,
            log2_group_order: log2_group,
            log2_ambient_order: log2_ambient,
            log2_enumerated,
        });
    }
    Ok(rows)
}

/// Comparison of a group's cycle data against the model prediction.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub model_id: u8,
    pub n: u8,
    pub expected: CycleData,
    pub observed: CycleData,
    pub equal: bool,
    pub order_observed: u64,
    pub order_expected: u64,
    /// Per-coset breakdown, present when requested and supported.
    pub cosets: Vec<CosetCheck>,
}

/// One coset (or coset union) of the structure decomposition, with the
/// model data it must reproduce.
#[derive(Debug, Clone, Serialize)]
pub struct CosetCheck {
    pub label: String,
    pub expected: CycleData,
    pub observed: CycleData,
    pub equal: bool,
}

/// Enumerates the model group at level n and compares its cycle data with
/// the even half of the Markov model, exactly.
pub fn verify_model(model_id: u8, n: u8, cfg: &EnumConfig) -> Result<VerificationReport> {
    let spec = build_generators(model_id, n)?;
    let log2 = log2_order(model_id, n)?;
    let mut c = cfg.clone();
    c.expected_order = Some(1u64 << log2.min(40));
    let (set, hist) = ElementSet::closure_histogram(&spec.verification_gens(), &c)?;
    let order_observed = set.len() as u64;
    let observed = CycleData::from_histogram(n, &hist, order_observed)?;
    let expected =
        markov::level_data(model_id, n as u32, Mode::Even, false)?.collapse_to_cycle_data();
    let equal = expected == observed;
    Ok(VerificationReport {
        model_id,
        n,
        expected,
        observed,
        equal,
        order_observed,
        order_expected: 1u64 << log2,
        cosets: Vec::new(),
    })
}

/// The distinguished subgroups of one family at one level, fully enumerated.
pub struct FamilyGroups {
    pub base: u8,
    pub n: u8,
    pub group: ElementSet,
    /// N_n for the square family, the even part of N_n otherwise.
    pub distinguished: ElementSet,
    /// The level-shifted product subgroup inside the distinguished one.
    pub product_part: ElementSet,
    pub companion: ElementSet,
}

/// Enumerates M_n, its distinguished normal subgroup, the product subgroup
/// P_{n-1}, and the companion group, cross-checking the constructive
/// generating sets against normal-closure computations.
pub fn family_groups(model_id: u8, n: u8, cfg: &EnumConfig) -> Result<FamilyGroups> {
    let spec = build_generators(model_id, n)?;
    let base = if model_id % 2 == 1 {
        model_id
    } else {
        model_id - 1
    };
    let pad = |gens: &[Perm]| -> Vec<Perm> {
        if gens.is_empty() {
            vec![Perm::identity(n)]
        } else {
            gens.to_vec()
        }
    };
    let group = ElementSet::closure(&spec.group_gens(), cfg)?;
    let distinguished = ElementSet::closure(&pad(&spec.subgroup_gens), cfg)?;

    // Independent route: normal closure of the v/m generators inside M_n,
    // intersected with the even part where the family calls for it.
    let mut h_gens: Vec<Perm> = Vec::new();
    if base != 1 {
        h_gens.push(m_element(base, n)?);
    }
    for i in 0..=(n as i8 - 3) {
        h_gens.push(v_element(i, n)?);
    }
    let normal = if h_gens.is_empty() {
        ElementSet::from_perms(n, [&Perm::identity(n)], true)?
    } else {
        ElementSet::normal_closure(&h_gens, &spec.group_gens(), cfg)?
    };
    let reference = if base == 1 {
        normal.clone()
    } else {
        normal.even_part()
    };
    if !distinguished.same_elements(&reference) {
        return Err(Error::ConstructionMismatch(format!(
            "distinguished subgroup at level {n}: {} vs {} elements",
            distinguished.len(),
            reference.len()
        )));
    }

    let product_part = if n >= 2 {
        let prev = subgroup_generators(base, n - 1)?;
        let x_n = standard_odometer(n);
        let mut gens = Vec::new();
        for g in prev {
            let e = g.embed(n)?;
            gens.push(e.conjugate(&x_n)?);
            gens.push(e);
        }
        if gens.is_empty() {
            ElementSet::from_perms(n, [&Perm::identity(n)], true)?
        } else {
            ElementSet::closure(&gens, cfg)?
        }
    } else {
        ElementSet::from_perms(n, [&Perm::identity(n)], true)?
    };

    let companion = ElementSet::closure(&spec.companion_gens, cfg)?;
    Ok(FamilyGroups {
        base,
        n,
        group,
        distinguished,
        product_part,
        companion,
    })
}

/// Checks that the listed coset representatives tile `ambient` by `sub`:
/// cosets pairwise disjoint with union the whole group.
pub fn check_coset_partition(
    ambient: &ElementSet,
    sub: &ElementSet,
    reps: &[Perm],
) -> Result<bool> {
    let mut seen: HashSet<u64> = HashSet::with_capacity(ambient.len());
    for rep in reps {
        let coset = sub.coset(rep)?;
        for key in coset.sorted_keys() {
            if !seen.insert(key) {
                return Ok(false); // overlap
            }
            if !ambient.contains_key(key) {
                return Ok(false);
            }
        }
    }
    Ok(seen.len() == ambient.len())
}

/// Cycle data of the set union of cosets {rep_i * sub} relative to
/// `ambient`. Representatives landing in the same coset are deduplicated;
/// at small levels some of the listed cosets coincide.
pub fn union_coset_cycle_data(
    reps: &[Perm],
    sub: &ElementSet,
    ambient: &ElementSet,
) -> Result<CycleData> {
    let mut keys: HashSet<u64> = HashSet::with_capacity(reps.len() * sub.len());
    for rep in reps {
        if !ambient.contains(rep) {
            return Err(Error::NotASubset);
        }
        for key in sub.coset(rep)?.sorted_keys() {
            keys.insert(key);
        }
    }
    if !keys.len().is_multiple_of(sub.len()) {
        return Err(Error::ConstructionMismatch(
            "cosets overlap partially".into(),
        ));
    }
    let union = ElementSet {
        n: ambient.height(),
        keys,
        gens: Vec::new(),
        is_group: false,
    };
    cd(&union, ambient)
}

/// Checks that the listed representatives cover `ambient` by cosets of
/// `sub`; representatives of the same coset are deduplicated. Returns
/// whether the cover is exact and how many distinct cosets appeared.
pub fn check_coset_cover(
    ambient: &ElementSet,
    sub: &ElementSet,
    reps: &[Perm],
) -> Result<(bool, usize)> {
    let mut coset_ids: HashSet<u64> = HashSet::new();
    let mut seen: HashSet<u64> = HashSet::with_capacity(ambient.len());
    let mut ok = true;
    for rep in reps {
        let coset = sub.coset(rep)?;
        let keys = coset.sorted_keys();
        let id = keys[0];
        if !coset_ids.insert(id) {
            continue; // same coset listed twice
        }
        for key in keys {
            if !seen.insert(key) || !ambient.contains_key(key) {
                ok = false;
            }
        }
    }
    Ok((ok && seen.len() == ambient.len(), coset_ids.len()))
}

/// Structural verification of one family at one level: coset partitions,
/// quotient invariants, normality, the direct-product shape of the level
/// shifted subgroup, per-coset cycle data against the model, and the
/// companion group's coset decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub base_model: u8,
    pub n: u8,
    pub partition_checks: Vec<(String, bool)>,
    pub normality_checks: Vec<(String, bool)>,
    pub quotient_checks: Vec<QuotientCheck>,
    pub product_structure_ok: bool,
    pub coset_checks: Vec<CosetCheck>,
    pub all_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuotientCheck {
    pub label: String,
    pub expected: Vec<u64>,
    pub observed: QuotientStructure,
    pub equal: bool,
}

fn power_reps(x: &Perm, exps: &[i64]) -> Vec<Perm> {
    exps.iter().map(|&e| x.pow(e)).collect()
}

fn word(parts: &[&Perm]) -> Perm {
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        acc = acc.mul(p);
    }
    acc
}

/// Runs the full structure suite for the family of `model_id` at level n
/// (n >= 3). The report's `all_ok` aggregates every check.
pub fn structure_report(model_id: u8, n: u8, cfg: &EnumConfig) -> Result<StructureReport> {
    if n < 3 {
        return Err(Error::HeightOutOfRange(n));
    }
    let base = if model_id % 2 == 1 {
        model_id
    } else {
        model_id - 1
    };
    let fam = family_groups(base, n, cfg)?;
    let prev = family_groups(base, n - 1, cfg)?;
    let x = standard_odometer(n);
    let group = &fam.group;
    let sub = &fam.distinguished;
    let p_part = &fam.product_part;

    let mut partition_checks = Vec::new();
    let mut normality_checks = Vec::new();
    let mut quotient_checks = Vec::new();
    let mut coset_checks = Vec::new();

    normality_checks.push((
        "distinguished subgroup normal in group".to_string(),
        group.normalizes(sub)?,
    ));
    normality_checks.push((
        "product subgroup normal in distinguished".to_string(),
        sub.normalizes(p_part)?,
    ));

    // Direct-product shape of the level-shifted subgroup: the two halves
    // have disjoint supports, so the order is the square of one factor.
    let product_structure_ok = p_part.len() == prev.distinguished.len() * prev.distinguished.len();

    let mut push_quotient =
        |label: &str, g: &ElementSet, s: &ElementSet, expected: Vec<u64>| -> Result<()> {
            let observed = quotient_structure(g, s)?;
            let equal = observed == QuotientStructure::Abelian(expected.clone());
            quotient_checks.push(QuotientCheck {
                label: label.to_string(),
                expected,
                observed,
                equal,
            });
            Ok(())
        };

    match base {
        1 => {
            let reps = power_reps(&x, &[0, 1, 2, 3]);
            partition_checks.push((
                "group = union of x^i N, i = 0..3".to_string(),
                check_coset_partition(group, sub, &reps)?,
            ));
            push_quotient("group / N", group, sub, vec![4])?;
            push_quotient("N / product part", sub, p_part, vec![2, 2])?;

            // Companion decomposition: M(2) = N u x^2 N.
            partition_checks.push((
                "companion = N u x^2 N".to_string(),
                check_coset_partition(&fam.companion, sub, &[Perm::identity(n), x.pow(2)])?,
            ));

            let seeds = [
                ("A1", vec![x.clone(), x.pow(3)], sub, "[n,2]", 1u32),
                ("A2", vec![x.pow(2)], sub, "[n,1][n,1]", 2),
                ("A3", vec![Perm::identity(n)], sub, "[s,1][s,1]", 2),
            ];
            for (label, reps, s, seed, exp) in seeds {
                let observed = union_coset_cycle_data(&reps, s, group)?;
                let expected = coset_prediction(1, seed, exp, n)?;
                coset_checks.push(CosetCheck {
                    label: label.to_string(),
                    equal: expected == observed,
                    expected,
                    observed,
                });
            }
        }
        3 => {
            let m = m_element(3, n)?;
            let reps4: Vec<Perm> = vec![Perm::identity(n), x.clone(), m.clone(), x.mul(&m)];
            partition_checks.push((
                "group = union of x^i m^j N-even".to_string(),
                check_coset_partition(group, sub, &reps4)?,
            ));
            partition_checks.push((
                "N-even = P u x^2 P".to_string(),
                check_coset_partition(sub, p_part, &[Perm::identity(n), x.pow(2)])?,
            ));
            let mut reps8 = Vec::new();
            for i in 0..2i64 {
                for j in 0..2i64 {
                    for k in 0..2i64 {
                        reps8.push(word(&[&x.pow(i), &m.pow(j), &x.pow(2 * k)]));
                    }
                }
            }
            partition_checks.push((
                "group = union of x^i m^j x^2k P".to_string(),
                check_coset_partition(group, p_part, &reps8)?,
            ));
            push_quotient("N-even / product part", sub, p_part, vec![2])?;

            partition_checks.push((
                "companion = N-even u xm N-even".to_string(),
                check_coset_partition(&fam.companion, sub, &[Perm::identity(n), x.mul(&m)])?,
            ));

            let xm = x.mul(&m);
            let seeds = [
                ("A1", vec![x.clone()], sub, "[nn,2]", 2u32),
                ("A2", vec![xm], sub, "[ss,2]", 2),
                ("A3", vec![x.pow(2)], p_part, "[nn,1][nn,1]", 3),
                ("A4", vec![Perm::identity(n)], p_part, "[ss,1][ss,1]", 3),
                ("A5", vec![m.clone()], sub, "[ns,1][sn,1]", 2),
            ];
            for (label, reps, s, seed, exp) in seeds {
                let observed = union_coset_cycle_data(&reps, s, group)?;
                let expected = coset_prediction(3, seed, exp, n)?;
                coset_checks.push(CosetCheck {
                    label: label.to_string(),
                    equal: expected == observed,
                    expected,
                    observed,
                });
            }
        }
        5 => {
            let m = m_element(5, n)?;
            let comm = x.mul(&m).mul(&x.inverse()).mul(&m.inverse());
            let v = v_element(n as i8 - 3, n)?;
            let mut reps8 = Vec::new();
            for i in 0..4i64 {
                for j in 0..2i64 {
                    reps8.push(x.pow(i).mul(&m.pow(j)));
                }
            }
            partition_checks.push((
                "group = union of x^i m^j N-even, i = 0..3".to_string(),
                check_coset_partition(group, sub, &reps8)?,
            ));
            // At level 3 the even part of N has index two over the product
            // subgroup ([x,m]^2, v and x^2 all fall into it), so the eight
            // listed cosets collapse to two and the quotient is Z/2; the
            // full Z/4 x Z/2 shape starts at level 4.
            let mut inner8 = Vec::new();
            for i in 0..4i64 {
                for j in 0..2i64 {
                    inner8.push(comm.pow(i).mul(&v.pow(j)));
                }
            }
            let (cover_ok, distinct) = check_coset_cover(sub, p_part, &inner8)?;
            let expect_inner = if n == 3 { 2 } else { 8 };
            partition_checks.push((
                "N-even = union of [x,m]^i v^j P".to_string(),
                cover_ok && distinct == expect_inner,
            ));
            let mut reps64 = Vec::new();
            for i in 0..4i64 {
                for j in 0..2i64 {
                    for k in 0..4i64 {
                        for l in 0..2i64 {
                            reps64.push(word(&[&x.pow(i), &m.pow(j), &comm.pow(k), &v.pow(l)]));
                        }
                    }
                }
            }
            let (cover_ok, distinct) = check_coset_cover(group, p_part, &reps64)?;
            let expect_outer = if n == 3 { 16 } else { 64 };
            partition_checks.push((
                "group = union of x^i m^j [x,m]^k v^l P".to_string(),
                cover_ok && distinct == expect_outer,
            ));
            let expect_quotient = if n == 3 { vec![2] } else { vec![4, 2] };
            push_quotient("N-even / product part", sub, p_part, expect_quotient)?;

            partition_checks.push((
                "companion = four cosets of N-even".to_string(),
                check_coset_partition(
                    &fam.companion,
                    sub,
                    &[Perm::identity(n), x.pow(2), x.mul(&m), x.pow(3).mul(&m)],
                )?,
            ));

            // Union builders for the eight model datums.
            let double_cosets = |par: &[(i64, i64)]| -> Vec<Perm> {
                par.iter()
                    .map(|&(i, j)| comm.pow(2 * i).mul(&v.pow(j)))
                    .collect()
            };
            let all_ij: Vec<(i64, i64)> = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
            let p_even: Vec<Perm> = double_cosets(&all_ij);
            let p_odd: Vec<Perm> = all_ij
                .iter()
                .map(|&(i, j)| comm.pow(2 * i + 1).mul(&v.pow(j)))
                .collect();
            let with_x2 =
                |reps: &[Perm]| -> Vec<Perm> { reps.iter().map(|r| x.pow(2).mul(r)).collect() };

            let seeds: Vec<(&str, Vec<Perm>, &ElementSet, &str, u32)> = vec![
                ("A1", vec![x.clone(), x.pow(3)], sub, "[nn,2]", 2),
                ("A2", vec![x.mul(&m), x.pow(3).mul(&m)], sub, "[sn,2]", 2),
                ("A3", vec![m.clone()], sub, "[ns,1][ss,1]", 3),
                ("A4", vec![x.pow(2).mul(&m)], sub, "[nn,1][sn,1]", 3),
                ("A5", with_x2(&p_even), p_part, "[nn,1][nn,1]", 4),
                ("A6", p_odd.clone(), p_part, "[ns,1][ns,1]", 4),
                ("A7", with_x2(&p_odd), p_part, "[sn,1][sn,1]", 4),
                ("A8", p_even, p_part, "[ss,1][ss,1]", 4),
            ];
            for (label, reps, s, seed, exp) in seeds {
                let observed = union_coset_cycle_data(&reps, s, group)?;
                let expected = coset_prediction(5, seed, exp, n)?;
                coset_checks.push(CosetCheck {
                    label: label.to_string(),
                    equal: expected == observed,
                    expected,
                    observed,
                });
            }
        }
        _ => return Err(Error::UnknownModel(base)),
    }

    let all_ok = partition_checks.iter().all(|(_, ok)| *ok)
        && normality_checks.iter().all(|(_, ok)| *ok)
        && quotient_checks.iter().all(|q| q.equal)
        && product_structure_ok
        && coset_checks.iter().all(|c| c.equal);
    Ok(StructureReport {
        base_model: base,
        n,
        partition_checks,
        normality_checks,
        quotient_checks,
        product_structure_ok,
        coset_checks,
        all_ok,
    })
}

/// Seeds the per-coset model predictions: the level-1 datum evolved n-1
/// steps in the normalized even model, collapsed to cycle data.
pub fn coset_prediction(model_id: u8, seed: &str, density_exp: u32, n: u8) -> Result<CycleData> {
    let spec = markov::ModelSpec::for_model(model_id)?;
    let seed = markov::LevelData::from_pairs(
        1,
        [(
            markov::FactorizationType::parse(seed)?,
            Dyadic::new(1u32, density_exp),
        )],
    );
    let out = markov::iterate_from(&seed, &spec, Mode::Even, false, n as u32 - 1)?;
    Ok(out.collapse_to_cycle_data())
}
