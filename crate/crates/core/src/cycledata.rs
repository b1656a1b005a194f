//! Exact dyadic densities, partitions of 2^n, and the cycle-data algebra:
//! the `*` merge of partitions, coordinate doubling, scaling, relative cycle
//! data of nested sets, and products of cycle data sets.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact non-negative dyadic rational `num / 2^exp`.
///
/// Canonical form: `num` odd, or `num = 0` with `exp = 0`. All arithmetic is
/// exact; equality is structural equality of the canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    num: BigUint,
    exp: u32,
}

impl Dyadic {
    pub fn new(num: impl Into<BigUint>, exp: u32) -> Dyadic {
        let mut d = Dyadic {
            num: num.into(),
            exp,
        };
        d.canonicalize();
        d
    }

    pub fn zero() -> Dyadic {
        Dyadic {
            num: BigUint::zero(),
            exp: 0,
        }
    }

    pub fn one() -> Dyadic {
        Dyadic {
            num: BigUint::one(),
            exp: 0,
        }
    }

    /// 1 / 2^exp.
    pub fn unit(exp: u32) -> Dyadic {
        Dyadic {
            num: BigUint::one(),
            exp,
        }
    }

    fn canonicalize(&mut self) {
        if self.num.is_zero() {
            self.exp = 0;
            return;
        }
        let tz = self.num.trailing_zeros().unwrap_or(0) as u32;
        let shift = tz.min(self.exp);
        if shift > 0 {
            self.num >>= shift;
            self.exp -= shift;
        }
    }

    pub fn numerator(&self) -> &BigUint {
        &self.num
    }

    pub fn exponent(&self) -> u32 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.exp == 0 && self.num.is_one()
    }

    pub fn add(&self, other: &Dyadic) -> Dyadic {
        let exp = self.exp.max(other.exp);
        let a = &self.num << (exp - self.exp) as usize;
        let b = &other.num << (exp - other.exp) as usize;
        Dyadic::new(a + b, exp)
    }

    /// `self - other`; `None` when the result would be negative.
    pub fn checked_sub(&self, other: &Dyadic) -> Option<Dyadic> {
        let exp = self.exp.max(other.exp);
        let a = &self.num << (exp - self.exp) as usize;
        let b = &other.num << (exp - other.exp) as usize;
        if a < b {
            return None;
        }
        Some(Dyadic::new(a - b, exp))
    }

    pub fn mul(&self, other: &Dyadic) -> Dyadic {
        Dyadic::new(&self.num * &other.num, self.exp + other.exp)
    }

    /// Exact division by 2^k.
    pub fn div_pow2(&self, k: u32) -> Dyadic {
        if self.num.is_zero() {
            return Dyadic::zero();
        }
        Dyadic {
            num: self.num.clone(),
            exp: self.exp + k,
        }
    }

    /// Exact multiplication by 2^k.
    pub fn mul_pow2(&self, k: u32) -> Dyadic {
        if self.num.is_zero() {
            return Dyadic::zero();
        }
        if self.exp >= k {
            Dyadic {
                num: self.num.clone(),
                exp: self.exp - k,
            }
        } else {
            Dyadic {
                num: &self.num << (k - self.exp) as usize,
                exp: 0,
            }
        }
    }

    /// Lossy value for display; exact comparisons never go through here.
    pub fn to_f64(&self) -> f64 {
        let num_str = self.num.to_string();
        let approx: f64 = num_str.parse().unwrap_or(f64::INFINITY);
        approx / (self.exp as f64).exp2()
    }

    /// Render as a reduced fraction, e.g. `1/512` or `3`.
    pub fn as_fraction(&self) -> String {
        if self.exp == 0 {
            return self.num.to_string();
        }
        let den = BigUint::one() << self.exp as usize;
        format!("{}/{}", self.num, den)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let exp = self.exp.max(other.exp);
        let a = &self.num << (exp - self.exp) as usize;
        let b = &other.num << (exp - other.exp) as usize;
        a.cmp(&b)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_fraction())
    }
}

// Numerators outgrow u64 at deep levels, so JSON carries them as decimal
// strings: {"num": "3", "exp": 5}.
impl Serialize for Dyadic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Dyadic", 2)?;
        st.serialize_field("num", &self.num.to_string())?;
        st.serialize_field("exp", &self.exp)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Dyadic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            num: String,
            exp: u32,
        }
        let raw = Raw::deserialize(d)?;
        let num: BigUint = raw
            .num
            .parse()
            .map_err(|_| serde::de::Error::custom("bad numerator"))?;
        Ok(Dyadic::new(num, raw.exp))
    }
}

/// Partition of an integer, parts sorted ascending, 1-parts included.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition(Vec<u32>);

impl Partition {
    pub fn new(mut parts: Vec<u32>) -> Partition {
        assert!(
            parts.iter().all(|&p| p > 0),
            "partition parts must be positive"
        );
        parts.sort_unstable();
        Partition(parts)
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    pub fn sum(&self) -> u64 {
        self.0.iter().map(|&p| p as u64).sum()
    }

    /// All parts equal to the whole, i.e. `[2^n]` when the sum is 2^n.
    pub fn is_single_cycle(&self) -> bool {
        self.0.len() == 1
    }

    /// The `*` merge: sorted concatenation, turning two partitions of 2^n
    /// into one of 2^(n+1).
    pub fn merge_star(&self, other: &Partition) -> Result<Partition> {
        if self.sum() != other.sum() {
            return Err(Error::LevelMismatch {
                left: self.sum() as u32,
                right: other.sum() as u32,
            });
        }
        let mut parts = Vec::with_capacity(self.0.len() + other.0.len());
        parts.extend_from_slice(&self.0);
        parts.extend_from_slice(&other.0);
        Ok(Partition::new(parts))
    }

    /// Every coordinate doubled; relative order is preserved by sorting.
    pub fn double(&self) -> Partition {
        Partition(self.0.iter().map(|&p| p * 2).collect())
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "]")
    }
}

/// A set of (partition, density) pairs with all partitions of the same 2^n.
///
/// JSON form: `{"n": h, "entries": [{"partition": [...], "num": "...", "exp": e}]}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleData {
    /// Tree height: partitions sum to 2^n.
    pub n: u8,
    pub entries: BTreeMap<Partition, Dyadic>,
}

impl Serialize for CycleData {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Entry<'a> {
            partition: &'a Partition,
            num: String,
            exp: u32,
        }
        let entries: Vec<Entry> = self
            .entries
            .iter()
            .map(|(p, d)| Entry {
                partition: p,
                num: d.numerator().to_string(),
                exp: d.exponent(),
            })
            .collect();
        let mut st = s.serialize_struct("CycleData", 2)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("entries", &entries)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for CycleData {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Entry {
            partition: Vec<u32>,
            num: String,
            exp: u32,
        }
        #[derive(Deserialize)]
        struct Raw {
            n: u8,
            entries: Vec<Entry>,
        }
        let raw = Raw::deserialize(d)?;
        let mut cd = CycleData::new(raw.n);
        for e in raw.entries {
            let num: BigUint = e
                .num
                .parse()
                .map_err(|_| serde::de::Error::custom("bad numerator"))?;
            cd.accumulate(Partition::new(e.partition), Dyadic::new(num, e.exp));
        }
        Ok(cd)
    }
}

impl CycleData {
    pub fn new(n: u8) -> CycleData {
        CycleData {
            n,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_pairs(n: u8, pairs: impl IntoIterator<Item = (Partition, Dyadic)>) -> CycleData {
        let mut cd = CycleData::new(n);
        for (p, d) in pairs {
            cd.accumulate(p, d);
        }
        cd
    }

    pub fn accumulate(&mut self, partition: Partition, density: Dyadic) {
        debug_assert_eq!(partition.sum(), 1u64 << self.n);
        if density.is_zero() {
            return;
        }
        self.entries
            .entry(partition)
            .and_modify(|d| *d = d.add(&density))
            .or_insert(density);
    }

    pub fn total(&self) -> Dyadic {
        self.entries
            .values()
            .fold(Dyadic::zero(), |acc, d| acc.add(d))
    }

    /// Multiply every density by `r`; errors if any scaled density exceeds 1.
    pub fn scale(&self, r: &Dyadic) -> Result<CycleData> {
        let one = Dyadic::one();
        let mut out = CycleData::new(self.n);
        for (p, d) in &self.entries {
            let scaled = d.mul(r);
            if scaled > one {
                return Err(Error::DensityOverflow);
            }
            out.entries.insert(p.clone(), scaled);
        }
        Ok(out)
    }

    pub fn scale_pow2(&self, k: u32) -> Result<CycleData> {
        self.scale(&Dyadic::new(1u32 << k, 0))
    }

    /// All pairwise `*` merges with multiplied densities; colliding
    /// partitions have their densities summed.
    pub fn product(&self, other: &CycleData) -> Result<CycleData> {
        if self.n != other.n {
            return Err(Error::LevelMismatch {
                left: self.n as u32,
                right: other.n as u32,
            });
        }
        let mut out = CycleData::new(self.n + 1);
        for (c1, p1) in &self.entries {
            for (c2, p2) in &other.entries {
                out.accumulate(c1.merge_star(c2)?, p1.mul(p2));
            }
        }
        Ok(out)
    }

    /// Disjoint union of the underlying sets: densities added.
    pub fn union_add(&self, other: &CycleData) -> Result<CycleData> {
        if self.n != other.n {
            return Err(Error::LevelMismatch {
                left: self.n as u32,
                right: other.n as u32,
            });
        }
        let mut out = self.clone();
        for (p, d) in &other.entries {
            out.accumulate(p.clone(), d.clone());
        }
        Ok(out)
    }

    /// Coordinate-doubling applied to every partition.
    pub fn double_all(&self) -> CycleData {
        let mut out = CycleData::new(self.n + 1);
        for (p, d) in &self.entries {
            out.accumulate(p.double(), d.clone());
        }
        out
    }

    /// Cycle data from a histogram of cycle types relative to an ambient set
    /// of size `ambient`, which must be a power of two.
    pub fn from_histogram(
        n: u8,
        hist: &BTreeMap<Partition, u64>,
        ambient: u64,
    ) -> Result<CycleData> {
        if ambient == 0 || !ambient.is_power_of_two() {
            return Err(Error::NotDyadic(ambient));
        }
        let exp = ambient.trailing_zeros();
        let mut out = CycleData::new(n);
        for (p, &count) in hist {
            out.accumulate(p.clone(), Dyadic::new(count, exp));
        }
        Ok(out)
    }

    /// TSV rendering: partition, numerator, exponent, reduced fraction.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("partition\tnum\texp\tfraction\n");
        for (p, d) in &self.entries {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                p,
                d.numerator(),
                d.exponent(),
                d.as_fraction()
            ));
        }
        s
    }
}

impl fmt::Display for CycleData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (p, d)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({p},{d})")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dy(num: u64, exp: u32) -> Dyadic {
        Dyadic::new(num, exp)
    }

    #[test]
    fn dyadic_canonical_form() {
        assert_eq!(dy(2, 1), dy(1, 0));
        assert_eq!(dy(0, 7), Dyadic::zero());
        assert_eq!(dy(6, 3), dy(3, 2));
        assert_eq!(dy(1, 9).as_fraction(), "1/512");
    }

    #[test]
    fn dyadic_arithmetic() {
        assert_eq!(dy(1, 2).add(&dy(1, 2)), dy(1, 1));
        assert_eq!(dy(1, 1).mul(&dy(1, 1)), dy(1, 2));
        assert_eq!(dy(3, 2).mul_pow2(2), dy(3, 0));
        assert_eq!(dy(1, 0).checked_sub(&dy(1, 1)), Some(dy(1, 1)));
        assert_eq!(dy(1, 1).checked_sub(&dy(1, 0)), None);
        assert!(dy(1, 1) < dy(3, 2));
    }

    #[test]
    fn merge_star_examples() {
        let p = |v: &[u32]| Partition::new(v.to_vec());
        assert_eq!(p(&[1, 1]).merge_star(&p(&[2])).unwrap(), p(&[1, 1, 2]));
        assert_eq!(
            p(&[2, 2]).merge_star(&p(&[1, 1, 2])).unwrap(),
            p(&[1, 1, 2, 2, 2])
        );
        assert_eq!(p(&[4]).merge_star(&p(&[4])).unwrap(), p(&[4, 4]));
        assert!(p(&[2]).merge_star(&p(&[1, 1, 2])).is_err());
    }

    #[test]
    fn double_examples() {
        let p = |v: &[u32]| Partition::new(v.to_vec());
        assert_eq!(p(&[1, 1, 2]).double(), p(&[2, 2, 4]));
        assert_eq!(p(&[16]).double(), p(&[32]));
    }

    #[test]
    fn scale_checks_overflow() {
        let p = Partition::new(vec![2]);
        let a = CycleData::from_pairs(1, [(p.clone(), dy(1, 1))]);
        let scaled = a.scale(&dy(1, 1)).unwrap();
        assert_eq!(scaled.entries[&p], dy(1, 2));
        assert_eq!(a.scale(&Dyadic::one()).unwrap(), a);
        assert!(a.scale(&dy(3, 0)).is_err());
    }

    #[test]
    fn product_merges_collisions() {
        let p = |v: &[u32]| Partition::new(v.to_vec());
        // {([1,1],1/2),([2],1/2)}^2 expands to four pairs of which two merge.
        let a = CycleData::from_pairs(1, [(p(&[1, 1]), dy(1, 1)), (p(&[2]), dy(1, 1))]);
        let sq = a.product(&a).unwrap();
        assert_eq!(sq.entries[&p(&[1, 1, 1, 1])], dy(1, 2));
        assert_eq!(sq.entries[&p(&[1, 1, 2])], dy(1, 1));
        assert_eq!(sq.entries[&p(&[2, 2])], dy(1, 2));

        let single = CycleData::from_pairs(1, [(p(&[2]), Dyadic::one())]);
        let prod = single.product(&single).unwrap();
        assert_eq!(prod.entries.len(), 1);
        assert_eq!(prod.entries[&p(&[2, 2])], Dyadic::one());

        let empty = CycleData::new(1);
        assert!(a.product(&empty).unwrap().entries.is_empty());
    }

    #[test]
    fn histogram_requires_power_of_two_ambient() {
        let mut h = BTreeMap::new();
        h.insert(Partition::new(vec![2]), 3u64);
        assert!(CycleData::from_histogram(1, &h, 12).is_err());
        let cd = CycleData::from_histogram(1, &h, 8).unwrap();
        assert_eq!(cd.entries[&Partition::new(vec![2])], dy(3, 3));
    }

    #[test]
    fn json_round_trip() {
        let p = Partition::new(vec![1, 1, 2]);
        let cd = CycleData::from_pairs(2, [(p, dy(3, 9))]);
        let s = serde_json::to_string(&cd).unwrap();
        let back: CycleData = serde_json::from_str(&s).unwrap();
        assert_eq!(cd, back);
        assert!(s.contains("\"num\":\"3\""));
    }
}
