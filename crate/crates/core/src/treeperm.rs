//! Automorphisms of the complete binary rooted tree of height n, as
//! permutations of the 2^n leaves. Leaves are stored 0-based; cycle notation
//! parses and prints 1-based, so that the printed form of a generator is
//! directly comparable with the usual lists `a_1 = (1,2)`, `a_2 = (1,3)(2,4)`.
//!
//! Vertex v at depth k has children 2v and 2v+1 at depth k+1 (0-based), so
//! leaf blocks of size 2^(n-k) aligned at multiples of 2^(n-k) are exactly
//! the depth-k subtrees.

use std::fmt;

use crate::cycledata::Partition;
use crate::error::{Error, Result};

/// Largest supported tree height. Enumeration is far more restrictive; this
/// bound only guards the dense leaf-image representation.
pub const MAX_HEIGHT: u8 = 14;

/// Heights whose automorphisms fit in a 63-bit packed portrait key.
pub const MAX_PACKED_HEIGHT: u8 = 6;

/// An automorphism of the height-n binary rooted tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm {
    n: u8,
    map: Vec<u16>,
}

fn check_height(n: u8) -> Result<()> {
    if n == 0 || n > MAX_HEIGHT {
        return Err(Error::HeightOutOfRange(n));
    }
    Ok(())
}

impl Perm {
    pub fn identity(n: u8) -> Perm {
        assert!((1..=MAX_HEIGHT).contains(&n));
        Perm {
            n,
            map: (0..1u32 << n).map(|i| i as u16).collect(),
        }
    }

    /// Validates that `map` is a bijection preserving every block level.
    pub fn try_new(n: u8, map: Vec<u16>) -> Result<Perm> {
        check_height(n)?;
        let deg = 1usize << n;
        if map.len() != deg {
            return Err(Error::NotTreeAutomorphism);
        }
        let mut seen = vec![false; deg];
        for &img in &map {
            let img = img as usize;
            if img >= deg || seen[img] {
                return Err(Error::NotTreeAutomorphism);
            }
            seen[img] = true;
        }
        let p = Perm { n, map };
        if !p.preserves_blocks() {
            return Err(Error::NotTreeAutomorphism);
        }
        Ok(p)
    }

    /// Block preservation at every level: leaves in one aligned block of
    /// size 2^s map into one such block, for every s = 1..=n.
    pub fn preserves_blocks(&self) -> bool {
        for s in 1..=self.n as usize {
            let size = 1usize << s;
            for block in self.map.chunks(size) {
                let top = block[0] as usize >> s;
                if block.iter().any(|&img| (img as usize >> s) != top) {
                    return false;
                }
            }
        }
        true
    }

    pub fn height(&self) -> u8 {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.map.len()
    }

    /// Image of a 0-based leaf.
    pub fn image(&self, leaf: u16) -> u16 {
        self.map[leaf as usize]
    }

    pub fn is_identity(&self) -> bool {
        self.map
            .iter()
            .enumerate()
            .all(|(i, &img)| i == img as usize)
    }

    fn check_same_height(&self, other: &Perm) -> Result<()> {
        if self.n != other.n {
            return Err(Error::HeightMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }

    /// `(self . other)(i) = self(other(i))`: `other` acts first.
    pub fn compose(&self, other: &Perm) -> Result<Perm> {
        self.check_same_height(other)?;
        Ok(self.mul(other))
    }

    pub(crate) fn mul(&self, other: &Perm) -> Perm {
        debug_assert_eq!(self.n, other.n);
        let map = other.map.iter().map(|&i| self.map[i as usize]).collect();
        Perm { n: self.n, map }
    }

    pub fn inverse(&self) -> Perm {
        let mut map = vec![0u16; self.map.len()];
        for (i, &img) in self.map.iter().enumerate() {
            map[img as usize] = i as u16;
        }
        Perm { n: self.n, map }
    }

    /// Conjugation by g: `g self g^{-1}`, the element acting along g-images
    /// of the support. Satisfies `(x^g)^h = x^(hg)` and reproduces cycle
    /// relabelling: `(i,j)^g = (g(i), g(j))`.
    pub fn conjugate(&self, g: &Perm) -> Result<Perm> {
        self.check_same_height(g)?;
        let mut map = vec![0u16; self.map.len()];
        for (i, &img) in self.map.iter().enumerate() {
            map[g.map[i] as usize] = g.map[img as usize];
        }
        Ok(Perm { n: self.n, map })
    }

    pub fn pow(&self, k: i64) -> Perm {
        let mut base = if k < 0 { self.inverse() } else { self.clone() };
        let mut e = k.unsigned_abs();
        let mut acc = Perm::identity(self.n);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }

    pub fn order(&self) -> u64 {
        let mut ord = 1u64;
        for c in self.cycles() {
            let len = c.len() as u64;
            ord = lcm(ord, len);
        }
        ord
    }

    /// Disjoint cycles covering all leaves, 1-cycles included. Each cycle
    /// starts at its minimal leaf; cycles are ordered by minimal leaf.
    pub fn cycles(&self) -> Vec<Vec<u16>> {
        let deg = self.degree();
        let mut seen = vec![false; deg];
        let mut out = Vec::new();
        for start in 0..deg {
            if seen[start] {
                continue;
            }
            let mut cycle = vec![start as u16];
            seen[start] = true;
            let mut cur = self.map[start] as usize;
            while cur != start {
                seen[cur] = true;
                cycle.push(cur as u16);
                cur = self.map[cur] as usize;
            }
            out.push(cycle);
        }
        out
    }

    pub fn cycle_type(&self) -> Partition {
        Partition::new(self.cycles().iter().map(|c| c.len() as u32).collect())
    }

    /// Transitivity on the leaves: the definitional odometer test.
    pub fn is_odometer(&self) -> bool {
        let deg = self.degree();
        let mut cur = 0usize;
        for _ in 1..deg {
            cur = self.map[cur] as usize;
            if cur == 0 {
                return false;
            }
        }
        true
    }

    /// Parity of the number of swapped internal nodes at each depth
    /// 0..n-1. This is the abelianization map onto (Z/2)^n.
    pub fn level_parities(&self) -> Vec<bool> {
        let po = self.to_portrait();
        (0..self.n)
            .map(|k| {
                let width = 1usize << k;
                let base = width - 1;
                (0..width).fold(false, |acc, j| acc ^ po.bit(base + j))
            })
            .collect()
    }

    /// All level parities odd. Equivalent to transitivity; the equivalence
    /// is validated exhaustively in tests before enumeration relies on it.
    pub fn parity_odometer_criterion(&self) -> bool {
        self.level_parities().iter().all(|&b| b)
    }

    /// Membership in the Frattini subgroup of the full automorphism group:
    /// all level parities even.
    pub fn in_frattini(&self) -> bool {
        self.level_parities().iter().all(|&b| !b)
    }

    /// Drops the last level: the induced permutation of the 2^(n-1)
    /// depth-(n-1) vertices.
    pub fn project(&self) -> Result<Perm> {
        if self.n < 2 {
            return Err(Error::HeightOutOfRange(self.n));
        }
        let map = (0..self.degree() / 2)
            .map(|v| self.map[2 * v] >> 1)
            .collect();
        Ok(Perm { n: self.n - 1, map })
    }

    /// Projects down `levels` times.
    pub fn project_to(&self, n: u8) -> Result<Perm> {
        if n == 0 || n > self.n {
            return Err(Error::HeightOutOfRange(n));
        }
        let mut p = self.clone();
        while p.n > n {
            p = p.project()?;
        }
        Ok(p)
    }

    /// Natural inclusion into height n: acts on the first 2^(height) leaves
    /// as before and fixes everything else.
    pub fn embed(&self, n: u8) -> Result<Perm> {
        check_height(n)?;
        if n < self.n {
            return Err(Error::HeightOutOfRange(n));
        }
        if n == self.n {
            return Ok(self.clone());
        }
        let mut map: Vec<u16> = (0..1u32 << n).map(|i| i as u16).collect();
        map[..self.degree()].copy_from_slice(&self.map);
        Ok(Perm { n, map })
    }

    /// Inverse of [`embed`](Perm::embed): recovers the height-i element from
    /// one that fixes every leaf outside the first 2^i.
    pub fn restrict(&self, i: u8) -> Result<Perm> {
        if i == 0 || i > self.n {
            return Err(Error::HeightOutOfRange(i));
        }
        let span = 1usize << i;
        let inside = self.map[..span].iter().all(|&img| (img as usize) < span);
        let outside_fixed = self.map[span..]
            .iter()
            .enumerate()
            .all(|(off, &img)| img as usize == span + off);
        if !inside || !outside_fixed {
            return Err(Error::NotTreeAutomorphism);
        }
        Ok(Perm {
            n: i,
            map: self.map[..span].to_vec(),
        })
    }

    /// Portrait: one swap bit per internal node, depth by depth.
    pub fn to_portrait(&self) -> Portrait {
        let mut po = Portrait::empty(self.n);
        self.fill_portrait(&mut po, 0, 0, 0);
        po
    }

    fn fill_portrait(&self, po: &mut Portrait, depth: u8, node: usize, block: usize) {
        if depth == self.n {
            return;
        }
        let half = 1usize << (self.n - depth - 1);
        let bit = (self.map[block] as usize >> (self.n as usize - depth as usize - 1)) & 1;
        if bit == 1 {
            po.set_bit((1usize << depth) - 1 + node);
        }
        self.fill_portrait(po, depth + 1, 2 * node + bit, block);
        self.fill_portrait(po, depth + 1, 2 * node + (1 - bit), block + half);
    }

    pub fn from_portrait(po: &Portrait) -> Perm {
        let n = po.n as usize;
        let deg = 1usize << n;
        let mut map = vec![0u16; deg];
        for (leaf, slot) in map.iter_mut().enumerate() {
            let mut node = 0usize;
            let mut img = 0usize;
            for depth in 0..n {
                let mut bit = (leaf >> (n - depth - 1)) & 1;
                if po.bit((1usize << depth) - 1 + node) {
                    bit ^= 1;
                }
                img = (img << 1) | bit;
                node = 2 * node + bit;
            }
            *slot = img as u16;
        }
        Perm { n: po.n, map }
    }

    /// Packed portrait bits; unique key for heights up to
    /// [`MAX_PACKED_HEIGHT`].
    pub fn packed_key(&self) -> u64 {
        debug_assert!(self.n <= MAX_PACKED_HEIGHT);
        self.to_portrait().packed()
    }

    pub fn from_packed_key(n: u8, key: u64) -> Perm {
        debug_assert!(n <= MAX_PACKED_HEIGHT);
        Perm::from_portrait(&Portrait::from_packed(n, key))
    }

    /// Parses 1-based cycle notation like `(1,5,3,7,2,6,4,8)` or `(1,2)(3,4)`;
    /// `()` and `id` denote the identity.
    pub fn parse(n: u8, text: &str) -> Result<Perm> {
        check_height(n)?;
        let deg = 1usize << n;
        let text = text.trim();
        if text == "id" || text == "()" {
            return Ok(Perm::identity(n));
        }
        let mut map: Vec<Option<u16>> = vec![None; deg];
        let mut rest = text;
        while !rest.is_empty() {
            let open = rest
                .find('(')
                .ok_or_else(|| Error::Parse(format!("expected '(' in {text:?}")))?;
            if !rest[..open].trim().is_empty() {
                return Err(Error::Parse(format!("stray text in {text:?}")));
            }
            let close = rest
                .find(')')
                .ok_or_else(|| Error::Parse(format!("unbalanced '(' in {text:?}")))?;
            let inner = &rest[open + 1..close];
            rest = &rest[close + 1..];
            let leaves: Vec<usize> = inner
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Parse(format!("bad leaf {tok:?}")))
                })
                .collect::<Result<_>>()?;
            if leaves.iter().any(|&l| l == 0 || l > deg) {
                return Err(Error::Parse(format!("leaf out of range in {text:?}")));
            }
            for w in 0..leaves.len() {
                let from = leaves[w] - 1;
                let to = leaves[(w + 1) % leaves.len()] - 1;
                if map[from].is_some() {
                    return Err(Error::Parse(format!("leaf repeated in {text:?}")));
                }
                map[from] = Some(to as u16);
            }
        }
        let full: Vec<u16> = map
            .into_iter()
            .enumerate()
            .map(|(i, m)| m.unwrap_or(i as u16))
            .collect();
        Perm::try_new(n, full)
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut wrote = false;
        for cycle in self.cycles() {
            if cycle.len() < 2 {
                continue;
            }
            wrote = true;
            write!(f, "(")?;
            for (i, leaf) in cycle.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", leaf + 1)?;
            }
            write!(f, ")")?;
        }
        if !wrote {
            write!(f, "()")?;
        }
        Ok(())
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Swap bits of the 2^n - 1 internal nodes, depth by depth: the bit of node
/// j at depth k sits at index 2^k - 1 + j.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Portrait {
    pub n: u8,
    bits: Vec<u8>,
}

impl Portrait {
    pub fn empty(n: u8) -> Portrait {
        let nbits = (1usize << n) - 1;
        Portrait {
            n,
            bits: vec![0; nbits.div_ceil(8)],
        }
    }

    pub fn bit(&self, i: usize) -> bool {
        (self.bits[i / 8] >> (i % 8)) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize) {
        self.bits[i / 8] |= 1 << (i % 8);
    }

    pub fn bit_len(&self) -> usize {
        (1usize << self.n) - 1
    }

    pub fn packed(&self) -> u64 {
        debug_assert!(self.n <= MAX_PACKED_HEIGHT);
        let mut key = 0u64;
        for (i, &b) in self.bits.iter().enumerate() {
            key |= (b as u64) << (8 * i);
        }
        key
    }

    pub fn from_packed(n: u8, key: u64) -> Portrait {
        let mut po = Portrait::empty(n);
        for i in 0..po.bits.len() {
            po.bits[i] = ((key >> (8 * i)) & 0xff) as u8;
        }
        po
    }

    /// Hex string of the bit array, low byte first.
    pub fn to_hex(&self) -> String {
        self.bits.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(n: u8, s: &str) -> Result<Portrait> {
        check_height(n)?;
        let mut po = Portrait::empty(n);
        if s.len() != po.bits.len() * 2 {
            return Err(Error::Parse(format!("portrait hex length {}", s.len())));
        }
        for i in 0..po.bits.len() {
            po.bits[i] = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::Parse(format!("bad hex {s:?}")))?;
        }
        let spare = po.bits.len() * 8 - po.bit_len();
        if spare > 0 && po.bits[po.bits.len() - 1] >> (8 - spare) != 0 {
            return Err(Error::Parse("portrait has bits past the last node".into()));
        }
        Ok(po)
    }
}

/// The generator a_i: the root swap of the subtree over leaves 1..2^i,
/// embedded in height n. In cycle notation, a_1 = (1,2), a_2 = (1,3)(2,4),
/// a_3 = (1,5)(2,6)(3,7)(4,8), ...
pub fn generator_a(i: u8, n: u8) -> Result<Perm> {
    check_height(n)?;
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange {
            index: i as i64,
            min: 1,
            max: n as i64,
        });
    }
    let deg = 1usize << n;
    let span = 1u16 << i;
    let half = 1u16 << (i - 1);
    let map = (0..deg as u16)
        .map(|l| if l < span { l ^ half } else { l })
        .collect();
    Ok(Perm { n, map })
}

/// The standard odometer x_n = a_1 a_2 ... a_n, a transitive element.
pub fn standard_odometer(n: u8) -> Perm {
    let mut acc = Perm::identity(n);
    for i in 1..=n {
        acc = acc.mul(&generator_a(i, n).expect("i <= n"));
    }
    acc
}

/// v_i = x_{i+2}^2 embedded in height n, with v_{-1} = v_{-2} = id.
pub fn v_element(i: i8, n: u8) -> Result<Perm> {
    check_height(n)?;
    if i < -2 || i > n as i8 - 3 {
        return Err(Error::IndexOutOfRange {
            index: i as i64,
            min: -2,
            max: n as i64 - 3,
        });
    }
    if i < 0 {
        return Ok(Perm::identity(n));
    }
    let inner = standard_odometer(i as u8 + 2);
    inner.mul(&inner).embed(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u8, s: &str) -> Perm {
        Perm::parse(n, s).unwrap()
    }

    #[test]
    fn generators_match_explicit_lists() {
        assert_eq!(generator_a(1, 3).unwrap(), p(3, "(1,2)"));
        assert_eq!(generator_a(2, 3).unwrap(), p(3, "(1,3)(2,4)"));
        assert_eq!(generator_a(3, 3).unwrap(), p(3, "(1,5)(2,6)(3,7)(4,8)"));
        assert!(generator_a(4, 3).is_err());
        assert!(generator_a(0, 3).is_err());
    }

    #[test]
    fn compose_examples() {
        let id = Perm::identity(3);
        let x = p(3, "(1,5,3,7,2,6,4,8)");
        assert_eq!(id.compose(&x).unwrap(), x);
        let a1 = generator_a(1, 1).unwrap();
        assert!(a1.compose(&a1).unwrap().is_identity());
        // a_1 (a_2 a_3) is the standard 3-odometer.
        let prod = generator_a(1, 3)
            .unwrap()
            .compose(
                &generator_a(2, 3)
                    .unwrap()
                    .compose(&generator_a(3, 3).unwrap())
                    .unwrap(),
            )
            .unwrap();
        assert_eq!(prod, x);
        assert!(a1.compose(&x).is_err());
    }

    #[test]
    fn inverse_and_conjugation() {
        assert_eq!(p(2, "(1,3,2,4)").inverse(), p(2, "(1,4,2,3)"));
        let t = p(2, "(1,2)");
        assert_eq!(t.conjugate(&Perm::identity(2)).unwrap(), t);
        // Conjugation relabels supports through g.
        let g = p(2, "(1,3,2,4)");
        assert_eq!(t.conjugate(&g).unwrap(), p(2, "(3,4)"));
        // v_{n-3}^{x_n} has support on the opposite half tree, so commutes.
        for n in 3..=5u8 {
            let v = v_element(n as i8 - 3, n).unwrap();
            let x = standard_odometer(n);
            let c = v.conjugate(&x).unwrap();
            assert_eq!(c.mul(&v), v.mul(&c));
        }
    }

    #[test]
    fn odometer_examples() {
        assert_eq!(standard_odometer(2), p(2, "(1,3,2,4)"));
        assert_eq!(standard_odometer(3), p(3, "(1,5,3,7,2,6,4,8)"));
        for n in 1..=6u8 {
            let x = standard_odometer(n);
            assert!(x.is_odometer());
            assert!(x.cycle_type().is_single_cycle());
        }
    }

    #[test]
    fn v_element_examples() {
        assert_eq!(v_element(0, 3).unwrap(), p(3, "(1,2)(3,4)"));
        assert!(v_element(-1, 4).unwrap().is_identity());
        assert!(v_element(-2, 4).unwrap().is_identity());
        let x3sq = standard_odometer(3).pow(2).embed(4).unwrap();
        assert_eq!(v_element(1, 4).unwrap(), x3sq);
        assert!(v_element(2, 4).is_err());
    }

    #[test]
    fn cycle_type_examples() {
        let x = p(3, "(1,3,2,4)(5,6)");
        assert_eq!(x.cycle_type(), Partition::new(vec![1, 1, 2, 4]));
        assert_eq!(
            Perm::identity(2).cycle_type(),
            Partition::new(vec![1, 1, 1, 1])
        );
        assert_eq!(
            generator_a(3, 3).unwrap().cycle_type(),
            Partition::new(vec![2, 2, 2, 2])
        );
    }

    #[test]
    fn frattini_and_parities() {
        assert!(!generator_a(1, 1).unwrap().in_frattini());
        let x3 = standard_odometer(3);
        assert_eq!(x3.level_parities(), vec![true, true, true]);
        assert!(x3.pow(2).in_frattini());
    }

    #[test]
    fn projection_and_embedding() {
        assert_eq!(p(2, "(1,3,2,4)").project().unwrap(), p(1, "(1,2)"));
        assert_eq!(p(1, "(1,2)").embed(3).unwrap(), p(3, "(1,2)"));
        for n in 2..=6u8 {
            assert_eq!(
                standard_odometer(n).project().unwrap(),
                standard_odometer(n - 1)
            );
        }
        // Restriction inverts embedding; projection instead commutes with it
        // one level down, since it cuts the bottom of the tree.
        let w = p(2, "(1,3,2,4)");
        assert_eq!(w.embed(5).unwrap().restrict(2).unwrap(), w);
        assert_eq!(
            w.embed(5).unwrap().project().unwrap(),
            w.project().unwrap().embed(4).unwrap()
        );
        assert!(p(1, "(1,2)").project().is_err());
        assert!(p(2, "(1,3)(2,4)").restrict(1).is_err());
    }

    #[test]
    fn portrait_round_trip_exhaustive_w3() {
        for key in 0u64..(1 << 7) {
            let q = Perm::from_packed_key(3, key);
            assert_eq!(q.packed_key(), key);
            assert_eq!(Perm::from_portrait(&q.to_portrait()), q);
            assert!(q.preserves_blocks());
        }
    }

    #[test]
    fn portrait_hex_round_trip() {
        let x = standard_odometer(5);
        let po = x.to_portrait();
        let hex = po.to_hex();
        assert_eq!(Portrait::from_hex(5, &hex).unwrap(), po);
        assert_eq!(Perm::from_portrait(&po), x);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["(1,5,3,7,2,6,4,8)", "(1,2)(3,4)", "(1,3)(2,4)(5,6)", "()"] {
            let q = p(3, s);
            assert_eq!(q.to_string(), s);
        }
        assert!(Perm::parse(2, "(1,5)").is_err());
        assert!(Perm::parse(2, "(1,1)").is_err());
        // Transposing leaves across non-sibling blocks is not an automorphism.
        assert!(Perm::parse(2, "(1,3)").is_err());
        assert!(Perm::try_new(0, vec![]).is_err());
    }

    #[test]
    fn height_zero_rejected() {
        assert!(Perm::parse(0, "()").is_err());
        assert!(generator_a(1, 0).is_err());
    }

    #[test]
    fn odometer_identities() {
        // x_n^2 = x_{n-1} (x_{n-1})^{x_n} and x_n^4 = v_{n-3} (v_{n-3})^{x_n}.
        for n in 2..=6u8 {
            let x = standard_odometer(n);
            let xp = standard_odometer(n - 1).embed(n).unwrap();
            assert_eq!(x.pow(2), xp.mul(&xp.conjugate(&x).unwrap()));
            if n >= 3 {
                let v = v_element(n as i8 - 3, n).unwrap();
                assert_eq!(x.pow(4), v.mul(&v.conjugate(&x).unwrap()));
            }
        }
    }

    #[test]
    fn half_tree_commuting() {
        // Elements supported on the left half tree commute with any
        // x_n-conjugate of another left-half element: the conjugate lives
        // on the right half.
        for n in 3..=5u8 {
            let x = standard_odometer(n);
            let inner = standard_odometer(n - 1).embed(n).unwrap();
            let mut family = vec![
                generator_a(1, n).unwrap(),
                generator_a(n - 1, n).unwrap(),
                inner.clone(),
            ];
            // Arbitrary elements of the embedded half-tree group.
            let mut seed = 0xfeed_u64;
            for _ in 0..32 {
                seed = seed
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                let bits = seed & ((1u64 << ((1u32 << (n - 1)) - 1)) - 1);
                family.push(Perm::from_packed_key(n - 1, bits).embed(n).unwrap());
            }
            for p in &family {
                let moved = p.conjugate(&x).unwrap();
                for g in &family {
                    assert_eq!(moved.mul(g), g.mul(&moved));
                }
            }
        }
    }
}
