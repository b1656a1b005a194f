//! Finite-field side: iterate the PCF quadratic families mod p, factor the
//! iterates, read off types from quadratic-residue values at the orbit
//! points, aggregate empirical frequencies over prime sweeps, and compare
//! them with the model predictions.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::{Factor, FactorizationType, Letter, LevelData, OrbitSpec, TypeString};
use crate::par::pmap;

// ---------------------------------------------------------------------------
// arithmetic mod p

fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn powmod(mut base: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod(acc, base, p);
        }
        base = mulmod(base, base, p);
        e >>= 1;
    }
    acc
}

/// Euler's criterion for odd p and v != 0: true when v is a square.
pub fn is_square_mod(v: u64, p: u64) -> Option<bool> {
    let v = v % p;
    if v == 0 {
        return None;
    }
    Some(powmod(v, (p - 1) / 2, p) == 1)
}

// ---------------------------------------------------------------------------
// polynomials over F_p

/// Dense polynomial over the prime field F_p, coefficients ascending.
/// The zero polynomial has an empty coefficient vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolyModP {
    pub p: u64,
    coeffs: Vec<u64>,
}

impl PolyModP {
    pub fn new(p: u64, mut coeffs: Vec<u64>) -> PolyModP {
        assert!(p > 2, "p must be an odd prime");
        for c in &mut coeffs {
            *c %= p;
        }
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        PolyModP { p, coeffs }
    }

    pub fn zero(p: u64) -> PolyModP {
        PolyModP {
            p,
            coeffs: Vec::new(),
        }
    }

    pub fn constant(p: u64, c: u64) -> PolyModP {
        PolyModP::new(p, vec![c])
    }

    pub fn x(p: u64) -> PolyModP {
        PolyModP::new(p, vec![0, 1])
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn leading(&self) -> u64 {
        *self.coeffs.last().unwrap_or(&0)
    }

    pub fn eval(&self, x: u64) -> u64 {
        let mut acc = 0u64;
        for &c in self.coeffs.iter().rev() {
            acc = (mulmod(acc, x, self.p) + c) % self.p;
        }
        acc
    }

    pub fn add(&self, other: &PolyModP) -> PolyModP {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0u64; n];
        for (i, slot) in out.iter_mut().enumerate() {
            let a = self.coeffs.get(i).copied().unwrap_or(0);
            let b = other.coeffs.get(i).copied().unwrap_or(0);
            *slot = (a + b) % self.p;
        }
        PolyModP::new(self.p, out)
    }

    pub fn sub(&self, other: &PolyModP) -> PolyModP {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0u64; n];
        for (i, slot) in out.iter_mut().enumerate() {
            let a = self.coeffs.get(i).copied().unwrap_or(0);
            let b = other.coeffs.get(i).copied().unwrap_or(0);
            *slot = (a + self.p - b) % self.p;
        }
        PolyModP::new(self.p, out)
    }

    pub fn mul(&self, other: &PolyModP) -> PolyModP {
        if self.is_zero() || other.is_zero() {
            return PolyModP::zero(self.p);
        }
        let mut out = vec![0u64; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] = (out[i + j] + mulmod(a, b, self.p)) % self.p;
            }
        }
        PolyModP::new(self.p, out)
    }

    pub fn mul_scalar(&self, s: u64) -> PolyModP {
        PolyModP::new(
            self.p,
            self.coeffs.iter().map(|&c| mulmod(c, s, self.p)).collect(),
        )
    }

    /// Remainder of self by a nonzero divisor.
    pub fn rem(&self, divisor: &PolyModP) -> PolyModP {
        assert!(!divisor.is_zero());
        let p = self.p;
        let dd = divisor.degree().unwrap();
        let inv_lead = powmod(divisor.leading(), p - 2, p);
        let mut rem = self.coeffs.clone();
        while rem.len() > dd {
            let k = rem.len() - 1;
            let coef = mulmod(rem[k], inv_lead, p);
            if coef != 0 {
                for (i, &dc) in divisor.coeffs.iter().enumerate() {
                    let idx = k - dd + i;
                    rem[idx] = (rem[idx] + p - mulmod(coef, dc, p)) % p;
                }
            }
            rem.pop();
        }
        PolyModP::new(p, rem)
    }

    pub fn div_exact(&self, divisor: &PolyModP) -> PolyModP {
        let p = self.p;
        let dd = divisor.degree().expect("nonzero divisor");
        let inv_lead = powmod(divisor.leading(), p - 2, p);
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0u64; rem.len().saturating_sub(dd)];
        while rem.len() > dd {
            let k = rem.len() - 1;
            let coef = mulmod(rem[k], inv_lead, p);
            quot[k - dd] = coef;
            if coef != 0 {
                for (i, &dc) in divisor.coeffs.iter().enumerate() {
                    let idx = k - dd + i;
                    rem[idx] = (rem[idx] + p - mulmod(coef, dc, p)) % p;
                }
            }
            rem.pop();
        }
        debug_assert!(PolyModP::new(p, rem).is_zero(), "division was not exact");
        PolyModP::new(p, quot)
    }

    pub fn gcd(&self, other: &PolyModP) -> PolyModP {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn monic(&self) -> PolyModP {
        if self.is_zero() || self.leading() == 1 {
            return self.clone();
        }
        self.mul_scalar(powmod(self.leading(), self.p - 2, self.p))
    }

    pub fn derivative(&self) -> PolyModP {
        if self.coeffs.len() <= 1 {
            return PolyModP::zero(self.p);
        }
        let out = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| mulmod(c, (i as u64) % self.p, self.p))
            .collect();
        PolyModP::new(self.p, out)
    }

    /// self(other(x)).
    pub fn compose(&self, other: &PolyModP) -> PolyModP {
        let mut acc = PolyModP::zero(self.p);
        for &c in self.coeffs.iter().rev() {
            acc = acc.mul(other).add(&PolyModP::constant(self.p, c));
        }
        acc
    }

    /// self^e modulo `m`, with a big-integer exponent.
    pub fn powmod_big(&self, e: &BigUint, m: &PolyModP) -> PolyModP {
        let mut acc = PolyModP::constant(self.p, 1);
        let mut base = self.rem(m);
        let bits = e.bits();
        for i in 0..bits {
            if e.bit(i) {
                acc = acc.mul(&base).rem(m);
            }
            base = base.mul(&base).rem(m);
        }
        acc
    }

    /// gcd(f, f') = 1.
    pub fn is_separable(&self) -> bool {
        match self.degree() {
            None | Some(0) => false,
            _ => self.gcd(&self.derivative()).degree() == Some(0),
        }
    }
}

/// Irreducible factors with multiplicities; the product reconstructs the
/// monic part of the input. Standard squarefree / distinct-degree /
/// equal-degree factorization, the random splitting seeded for
/// reproducibility.
pub fn factor(poly: &PolyModP, seed: u64) -> Vec<(PolyModP, u32)> {
    let mut out: Vec<(PolyModP, u32)> = Vec::new();
    let monic = poly.monic();
    factor_rec(&monic, 1, seed, &mut out);
    out.sort_by(|a, b| (a.0.degree(), &a.0.coeffs, a.1).cmp(&(b.0.degree(), &b.0.coeffs, b.1)));
    out
}

fn push_factor(out: &mut Vec<(PolyModP, u32)>, f: PolyModP, mult: u32) {
    if let Some(slot) = out.iter_mut().find(|(g, _)| *g == f) {
        slot.1 += mult;
    } else {
        out.push((f, mult));
    }
}

fn factor_rec(f: &PolyModP, mult: u32, seed: u64, out: &mut Vec<(PolyModP, u32)>) {
    match f.degree() {
        None | Some(0) => return,
        Some(1) => {
            push_factor(out, f.clone(), mult);
            return;
        }
        _ => {}
    }
    let deriv = f.derivative();
    if deriv.is_zero() {
        // f = g(x^p); over the prime field g has the same coefficients.
        let p = f.p as usize;
        let g = PolyModP::new(f.p, f.coeffs.iter().step_by(p).copied().collect());
        factor_rec(&g, mult * f.p as u32, seed, out);
        return;
    }
    let d = f.gcd(&deriv);
    if d.degree() == Some(0) {
        for g in factor_squarefree(f, seed) {
            push_factor(out, g, mult);
        }
        return;
    }
    let squarefree_part = f.div_exact(&d);
    factor_rec(&squarefree_part, mult, seed, out);
    factor_rec(&d, mult, seed, out);
}

/// Distinct-degree then equal-degree splitting of a squarefree monic poly.
fn factor_squarefree(f: &PolyModP, seed: u64) -> Vec<PolyModP> {
    let p = f.p;
    let mut out = Vec::new();
    let mut rest = f.clone();
    let x = PolyModP::x(p);
    let mut frob = x.rem(&rest); // x^(p^d) mod rest, advanced per degree
    let mut d = 0usize;
    while let Some(deg) = rest.degree() {
        if deg == 0 {
            break;
        }
        d += 1;
        if deg < 2 * d {
            // What is left is irreducible.
            out.push(rest.monic());
            break;
        }
        frob = frob.powmod_big(&BigUint::from(p), &rest);
        let g = rest.gcd(&frob.sub(&x));
        if g.degree() > Some(0) {
            equal_degree_split(&g, d, seed, &mut out);
            rest = rest.div_exact(&g);
            frob = frob.rem(&rest);
        }
    }
    out
}

/// Cantor-Zassenhaus split of a product of distinct degree-d irreducibles.
fn equal_degree_split(f: &PolyModP, d: usize, seed: u64, out: &mut Vec<PolyModP>) {
    let deg = f.degree().unwrap();
    if deg == d {
        out.push(f.monic());
        return;
    }
    let p = f.p;
    // (p^d - 1) / 2
    let exp = (BigUint::from(p).pow(d as u32) - BigUint::one()) >> 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (deg as u64).wrapping_mul(0x9e3779b97f4a7c15));
    loop {
        let coeffs: Vec<u64> = (0..2 * d).map(|_| rng.gen_range(0..p)).collect();
        let r = PolyModP::new(p, coeffs);
        if r.degree().is_none() {
            continue;
        }
        let pow = r.powmod_big(&exp, f);
        let candidate = f.gcd(&pow.sub(&PolyModP::constant(p, 1)));
        let cd = candidate.degree();
        if cd > Some(0) && cd < f.degree() {
            let other = f.div_exact(&candidate);
            equal_degree_split(&candidate, d, seed.wrapping_add(1), out);
            equal_degree_split(&other, d, seed.wrapping_add(2), out);
            return;
        }
    }
}

// ---------------------------------------------------------------------------
// PCF families

/// The three integral PCF quadratic shapes, each conjugated by x -> x + a.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FamilyKind {
    /// (x+a)^2 - a: conjugates of the square map; fixed critical orbit.
    Square,
    /// (x+a)^2 - a - 2: orbit of size two with a tail.
    SquareMinusTwo,
    /// (x+a)^2 - a - 1: periodic orbit of size two.
    SquareMinusOne,
}

impl FamilyKind {
    pub fn parse(s: &str) -> Result<FamilyKind> {
        match s {
            "x2" => Ok(FamilyKind::Square),
            "x2m2" => Ok(FamilyKind::SquareMinusTwo),
            "x2m1" => Ok(FamilyKind::SquareMinusOne),
            other => Err(Error::UnsupportedFamily(format!(
                "unknown family {other:?}"
            ))),
        }
    }
}

fn is_perfect_square(v: i64) -> bool {
    if v < 0 {
        return false;
    }
    let r = (v as f64).sqrt().round() as i64;
    (r - 1..=r + 1).any(|c| c >= 0 && c * c == v)
}

/// A concrete irreducible member of one of the families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PcfFamily {
    pub kind: FamilyKind,
    pub a: i64,
}

impl PcfFamily {
    pub fn new(kind: FamilyKind, a: i64) -> Result<PcfFamily> {
        let discriminant_shift = match kind {
            FamilyKind::Square => a,
            FamilyKind::SquareMinusTwo => a + 2,
            FamilyKind::SquareMinusOne => a + 1,
        };
        if is_perfect_square(discriminant_shift) {
            return Err(Error::UnsupportedFamily(format!(
                "{kind:?} with a = {a} is reducible"
            )));
        }
        Ok(PcfFamily { kind, a })
    }

    /// Which of the six models the member follows.
    pub fn model_id(&self) -> Result<u8> {
        match self.kind {
            FamilyKind::Square => {
                if is_perfect_square(-self.a) {
                    Ok(2)
                } else {
                    Ok(1)
                }
            }
            FamilyKind::SquareMinusTwo => {
                if is_perfect_square(self.a - 2) || is_perfect_square(2 - self.a) {
                    Ok(4)
                } else {
                    Err(Error::UnsupportedFamily(format!(
                        "a = {} is not 2 +- b^2; no model covers this member",
                        self.a
                    )))
                }
            }
            FamilyKind::SquareMinusOne => {
                if is_perfect_square(self.a) || is_perfect_square(-self.a) {
                    Ok(6)
                } else {
                    Ok(5)
                }
            }
        }
    }

    pub fn orbit_spec(&self) -> OrbitSpec {
        match self.kind {
            FamilyKind::Square => OrbitSpec::new(1, 0, 1),
            FamilyKind::SquareMinusTwo => OrbitSpec::new(2, 1, 2),
            FamilyKind::SquareMinusOne => OrbitSpec::new(2, 0, 1),
        }
    }

    /// Post-critical orbit points as integers, in orbit order f(c), f^2(c).
    pub fn orbit_ints(&self) -> Vec<i64> {
        match self.kind {
            FamilyKind::Square => vec![-self.a],
            FamilyKind::SquareMinusTwo => vec![-self.a - 2, 2 - self.a],
            FamilyKind::SquareMinusOne => vec![-self.a - 1, -self.a],
        }
    }

    fn constant_term(&self) -> i64 {
        // (x+a)^2 - a - c with c = 0, 2, 1.
        match self.kind {
            FamilyKind::Square => self.a * self.a - self.a,
            FamilyKind::SquareMinusTwo => self.a * self.a - self.a - 2,
            FamilyKind::SquareMinusOne => self.a * self.a - self.a - 1,
        }
    }

    pub fn poly_mod(&self, p: u64) -> PolyModP {
        PolyModP::new(
            p,
            vec![
                reduce_mod(self.constant_term(), p),
                reduce_mod(2 * self.a, p),
                1,
            ],
        )
    }

    /// f^n mod p by repeated composition; f^0 = x.
    pub fn iterate_mod(&self, n: u32, p: u64) -> PolyModP {
        let f = self.poly_mod(p);
        let mut acc = PolyModP::x(p);
        for _ in 0..n {
            acc = acc.compose(&f);
        }
        acc
    }

    pub fn orbit_mod(&self, p: u64) -> Vec<u64> {
        self.orbit_ints()
            .iter()
            .map(|&v| reduce_mod(v, p))
            .collect()
    }
}

fn reduce_mod(v: i64, p: u64) -> u64 {
    v.rem_euclid(p as i64) as u64
}

/// Type string of an irreducible factor: the residue letter of g at every
/// orbit point. Fails when an orbit point is a root of g.
pub fn type_of_factor(g: &PolyModP, orbit_mod_p: &[u64]) -> Result<TypeString> {
    let letters: Vec<Letter> = orbit_mod_p
        .iter()
        .map(|&beta| match is_square_mod(g.eval(beta), g.p) {
            Some(true) => Ok(Letter::S),
            Some(false) => Ok(Letter::N),
            None => Err(Error::OrbitRoot { p: g.p }),
        })
        .collect::<Result<_>>()?;
    Ok(TypeString::new(&letters))
}

/// Factorization type of f^n mod p, or the reason p is excluded.
pub fn factorization_type_mod(
    fam: &PcfFamily,
    n: u32,
    p: u64,
    seed: u64,
) -> Result<FactorizationType> {
    let orbit = fam.orbit_mod(p);
    if n == 0 {
        let x = PolyModP::x(p);
        let ty = type_of_factor(&x, &orbit)?;
        return Ok(FactorizationType::new(vec![Factor::new(ty, 1)]));
    }
    // All iterates up to n must stay separable.
    let f = fam.poly_mod(p);
    let mut acc = PolyModP::x(p);
    for _ in 0..n {
        acc = acc.compose(&f);
        if !acc.is_separable() {
            return Err(Error::OrbitRoot { p });
        }
    }
    let mut factors = Vec::new();
    for (g, mult) in factor(&acc, seed ^ p) {
        debug_assert_eq!(mult, 1, "separable polynomial");
        let ty = type_of_factor(&g, &orbit)?;
        factors.push(Factor::new(ty, g.degree().unwrap() as u32));
    }
    Ok(FactorizationType::new(factors))
}

// ---------------------------------------------------------------------------
// prime sweeps

/// Primes up to `bound` (exclusive), simple sieve.
pub fn primes_below(bound: u64) -> Vec<u64> {
    assert!(bound <= 20_000_000, "prime sweeps are capped at 2*10^7");
    let bound = bound as usize;
    if bound <= 2 {
        return Vec::new();
    }
    let mut sieve = vec![true; bound];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2usize;
    while i * i < bound {
        if sieve[i] {
            let mut j = i * i;
            while j < bound {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    (2..bound).filter(|&i| sieve[i]).map(|i| i as u64).collect()
}

/// Controls for an empirical sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub parallel: bool,
    /// Seed for the factorization's random splitting; fixed by default so
    /// identical configurations give identical outputs.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            parallel: cfg!(feature = "parallel"),
            seed: 0x5eed,
        }
    }
}

/// Aggregated factorization types of f^n over a class of primes.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalData {
    pub level: u32,
    pub residue_class: u8,
    pub counts: BTreeMap<FactorizationType, u64>,
    pub total_primes: u64,
    /// Primes excluded because an iterate was inseparable or an orbit point
    /// became a root.
    pub excluded: Vec<u64>,
}

impl EmpiricalData {
    pub fn frequency(&self, t: &FactorizationType) -> (u64, u64) {
        (self.counts.get(t).copied().unwrap_or(0), self.total_primes)
    }
}

/// Sweeps primes `p = residue_class (mod 4)`, p < bound, tallying the
/// factorization type of f^n mod p.
pub fn empirical_level_data(
    fam: &PcfFamily,
    n: u32,
    prime_bound: u64,
    residue_class: u8,
    cfg: &SweepConfig,
) -> Result<EmpiricalData> {
    assert!(residue_class == 1 || residue_class == 3);
    let primes: Vec<u64> = primes_below(prime_bound)
        .into_iter()
        .filter(|&p| p > 2 && p % 4 == residue_class as u64)
        .collect();
    if primes.is_empty() {
        return Err(Error::EmptyPrimeRange);
    }
    let seed = cfg.seed;
    let fam = *fam;
    let results = pmap(cfg.parallel, &primes, |&p| {
        (p, factorization_type_mod(&fam, n, p, seed))
    });
    let mut counts: BTreeMap<FactorizationType, u64> = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut total = 0u64;
    for (p, res) in results {
        match res {
            Ok(t) => {
                *counts.entry(t).or_insert(0) += 1;
                total += 1;
            }
            Err(Error::OrbitRoot { .. }) => excluded.push(p),
            Err(e) => return Err(e),
        }
    }
    if total == 0 {
        return Err(Error::EmptyPrimeRange);
    }
    Ok(EmpiricalData {
        level: n,
        residue_class,
        counts,
        total_primes: total,
        excluded,
    })
}

/// One row of an empirical-vs-model comparison.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub ftype: String,
    pub count: u64,
    pub freq_num: u64,
    pub freq_den: u64,
    pub predicted_num: String,
    pub predicted_exp: u32,
    /// |observed - predicted| as a float, for display and thresholds.
    pub deviation: f64,
    /// Observed but absent from the model's support.
    pub support_violation: bool,
}

/// Deterministic diff of observed frequencies against predicted densities.
#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub level: u32,
    pub rows: Vec<CompareRow>,
    pub max_deviation: f64,
    pub support_violations: usize,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("type,count,freq_num,freq_den,predicted_num,predicted_exp,deviation\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{:.6}\n",
                r.ftype,
                r.count,
                r.freq_num,
                r.freq_den,
                r.predicted_num,
                r.predicted_exp,
                r.deviation
            ));
        }
        s
    }
}

/// Exact |count/total - num/2^exp| evaluated through big integers, reported
/// as f64 only at the end.
fn exact_abs_deviation(count: u64, total: u64, num: &BigUint, exp: u32) -> f64 {
    let lhs = BigUint::from(count) << exp as usize;
    let rhs = num * BigUint::from(total);
    let diff = if lhs >= rhs { lhs - rhs } else { rhs - lhs };
    let den = BigUint::from(total) << exp as usize;
    // Both fit comfortably in f64 range for the sweep sizes used here.
    let diff: f64 = diff.to_string().parse().unwrap_or(f64::INFINITY);
    let den: f64 = den.to_string().parse().unwrap_or(f64::INFINITY);
    diff / den
}

pub fn compare_empirical(observed: &EmpiricalData, predicted: &LevelData) -> Result<CompareReport> {
    if observed.level != predicted.level {
        return Err(Error::LevelMismatch {
            left: observed.level,
            right: predicted.level,
        });
    }
    let mut rows = Vec::new();
    let mut max_deviation = 0f64;
    let mut support_violations = 0usize;
    let total = observed.total_primes;
    let mut seen: Vec<&FactorizationType> = Vec::new();
    for (t, &count) in &observed.counts {
        seen.push(t);
        let (num, exp, violation) = match predicted.datums.get(t) {
            Some(d) => (d.numerator().clone(), d.exponent(), false),
            None => (BigUint::zero(), 0, true),
        };
        if violation {
            support_violations += 1;
        }
        let deviation = exact_abs_deviation(count, total, &num, exp);
        max_deviation = max_deviation.max(deviation);
        rows.push(CompareRow {
            ftype: t.to_string(),
            count,
            freq_num: count,
            freq_den: total,
            predicted_num: num.to_string(),
            predicted_exp: exp,
            deviation,
            support_violation: violation,
        });
    }
    // Predicted types that never occurred still contribute deviations.
    for (t, d) in &predicted.datums {
        if observed.counts.contains_key(t) {
            continue;
        }
        let deviation = exact_abs_deviation(0, total, d.numerator(), d.exponent());
        max_deviation = max_deviation.max(deviation);
        rows.push(CompareRow {
            ftype: t.to_string(),
            count: 0,
            freq_num: 0,
            freq_den: total,
            predicted_num: d.numerator().to_string(),
            predicted_exp: d.exponent(),
            deviation,
            support_violation: false,
        });
    }
    Ok(CompareReport {
        level: observed.level,
        rows,
        max_deviation,
        support_violations,
    })
}

// ---------------------------------------------------------------------------
// structural reality checks against the transition tables

/// Checks, for every good prime p = 1 mod 4 below `prime_bound` and every
/// level up to `n_max`, that the children of each irreducible factor comply
/// with the transition constraints: n-initial factors have a single child of
/// doubled degree and shifted type; s-initial factors have two children
/// whose types multiply to the shifted type and swap digits o and k.
pub fn check_transition_compliance(
    fam: &PcfFamily,
    n_max: u32,
    prime_bound: u64,
    cfg: &SweepConfig,
) -> Result<u64> {
    let orbit_spec = fam.orbit_spec();
    let primes: Vec<u64> = primes_below(prime_bound)
        .into_iter()
        .filter(|&p| p > 2 && p % 4 == 1)
        .collect();
    let seed = cfg.seed;
    let fam = *fam;
    let results = pmap(cfg.parallel, &primes, |&p| -> Result<bool> {
        let orbit = fam.orbit_mod(p);
        let f = fam.poly_mod(p);
        // Reject p if any iterate involved is inseparable or hits the orbit.
        let mut iterates = Vec::new();
        let mut acc = f.clone();
        for _ in 0..=n_max {
            if !acc.is_separable() {
                return Ok(false);
            }
            iterates.push(acc.clone());
            acc = acc.compose(&f);
        }
        for (parent_level, iterate) in iterates.iter().enumerate().take(n_max as usize) {
            let parents = factor(iterate, seed ^ p);
            for (g, _) in parents {
                let t = match type_of_factor(&g, &orbit) {
                    Ok(t) => t,
                    Err(_) => return Ok(false),
                };
                let children = factor(&g.compose(&f), seed ^ p ^ 0xc0ffee);
                let shifted = orbit_spec.shift(&t);
                if t.starts_with_s() {
                    if children.len() != 2 {
                        return Err(Error::ConstructionMismatch(format!(
                            "s-factor of f^{} mod {p} has {} children",
                            parent_level + 1,
                            children.len()
                        )));
                    }
                    let t1 = type_of_factor(&children[0].0, &orbit)
                        .map_err(|_| Error::OrbitRoot { p })?;
                    let t2 = type_of_factor(&children[1].0, &orbit)
                        .map_err(|_| Error::OrbitRoot { p })?;
                    let (o, k) = (orbit_spec.o, orbit_spec.k);
                    if t1.mul(&t2) != shifted
                        || t1.digit(o) != t2.digit(k)
                        || t2.digit(o) != t1.digit(k)
                    {
                        return Err(Error::ConstructionMismatch(format!(
                            "digit constraint fails for f^{} mod {p}: {t} -> {t1},{t2}",
                            parent_level + 1
                        )));
                    }
                } else {
                    if children.len() != 1 {
                        return Err(Error::ConstructionMismatch(format!(
                            "n-factor of f^{} mod {p} split",
                            parent_level + 1
                        )));
                    }
                    let child_ty = type_of_factor(&children[0].0, &orbit)
                        .map_err(|_| Error::OrbitRoot { p })?;
                    if children[0].0.degree() != g.degree().map(|d| 2 * d) || child_ty != shifted {
                        return Err(Error::ConstructionMismatch(format!(
                            "doubling fails for f^{} mod {p}",
                            parent_level + 1
                        )));
                    }
                }
            }
        }
        Ok(true)
    });
    let mut checked = 0u64;
    for r in results {
        if r? {
            checked += 1;
        }
    }
    if checked == 0 {
        return Err(Error::EmptyPrimeRange);
    }
    Ok(checked)
}

/// For p = 3 mod 4: linear factors whose type starts with n split in the
/// next iterate; those starting with s stay irreducible.
pub fn check_odd_linear_twist(
    fam: &PcfFamily,
    n_max: u32,
    prime_bound: u64,
    cfg: &SweepConfig,
) -> Result<u64> {
    let primes: Vec<u64> = primes_below(prime_bound)
        .into_iter()
        .filter(|&p| p > 2 && p % 4 == 3)
        .collect();
    let seed = cfg.seed;
    let fam = *fam;
    let results = pmap(cfg.parallel, &primes, |&p| -> Result<bool> {
        let orbit = fam.orbit_mod(p);
        let f = fam.poly_mod(p);
        let mut acc = f.clone();
        let mut iterates = Vec::new();
        for _ in 0..=n_max {
            if !acc.is_separable() {
                return Ok(false);
            }
            iterates.push(acc.clone());
            acc = acc.compose(&f);
        }
        for it in iterates.iter().take(n_max as usize) {
            for (g, _) in factor(it, seed ^ p) {
                if g.degree() != Some(1) {
                    continue;
                }
                let t = match type_of_factor(&g, &orbit) {
                    Ok(t) => t,
                    Err(_) => return Ok(false),
                };
                let children = factor(&g.compose(&f), seed ^ p ^ 1);
                let split = children.len() == 2;
                if split == t.starts_with_s() {
                    return Err(Error::ConstructionMismatch(format!(
                        "odd linear behavior fails mod {p} for type {t}"
                    )));
                }
            }
        }
        Ok(true)
    });
    let mut checked = 0u64;
    for r in results {
        if r? {
            checked += 1;
        }
    }
    Ok(checked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_criterion_matches_square_table() {
        for p in primes_below(100).into_iter().filter(|&p| p > 2) {
            let squares: std::collections::HashSet<u64> = (1..p).map(|v| mulmod(v, v, p)).collect();
            for v in 1..p {
                assert_eq!(
                    is_square_mod(v, p),
                    Some(squares.contains(&v)),
                    "v={v} p={p}"
                );
            }
            assert_eq!(is_square_mod(0, p), None);
        }
    }

    #[test]
    fn poly_basics() {
        // (x+1)^2 - 2 = x^2 + 2x - 1 = x^2 + 2x + 4 over F_5.
        let fam = PcfFamily::new(FamilyKind::SquareMinusOne, 1).unwrap();
        let f = fam.poly_mod(5);
        assert_eq!(f.coeffs(), &[4, 2, 1]);
        assert!(f.is_separable());
        assert!(!PolyModP::new(5, vec![0, 0, 1]).is_separable());
        // (x-1)^2 over F_3.
        assert!(!PolyModP::new(3, vec![1, 1, 1]).is_separable());
    }

    #[test]
    fn composition_matches_expansion() {
        // (x^2 - 1) composed with itself: x^4 - 2x^2 over any odd prime.
        let p = 97;
        let f = PolyModP::new(p, vec![p - 1, 0, 1]);
        let ff = f.compose(&f);
        assert_eq!(ff.coeffs(), &[0, 0, p - 2, 0, 1]);
    }

    #[test]
    fn iterate_degrees() {
        let fam = PcfFamily::new(FamilyKind::Square, 2).unwrap();
        for n in 0..=5u32 {
            assert_eq!(fam.iterate_mod(n, 101).degree(), Some(1usize << n));
        }
    }

    #[test]
    fn factor_small_cases() {
        // x^2 + 2 is irreducible over F_5.
        let g = PolyModP::new(5, vec![2, 0, 1]);
        let fs = factor(&g, 7);
        assert_eq!(fs.len(), 1);
        assert_eq!(fs[0].0, g.monic());
        assert_eq!(fs[0].1, 1);

        // x^2 - 1 = (x+1)(x+4) over F_5.
        let g = PolyModP::new(5, vec![4, 0, 1]);
        let fs = factor(&g, 7);
        assert_eq!(fs.len(), 2);
        assert!(fs.iter().all(|(f, m)| f.degree() == Some(1) && *m == 1));
    }

    #[test]
    fn factor_reconstructs_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &p in &[5u64, 13, 101] {
            for _ in 0..300 {
                let deg = rng.gen_range(3..=4);
                let mut coeffs: Vec<u64> = (0..deg).map(|_| rng.gen_range(0..p)).collect();
                coeffs.push(rng.gen_range(1..p));
                let f = PolyModP::new(p, coeffs);
                let factors = factor(&f, 99);
                let mut prod = PolyModP::constant(p, f.leading());
                for (g, m) in &factors {
                    assert!(g.leading() == 1);
                    for _ in 0..*m {
                        prod = prod.mul(g);
                    }
                }
                assert_eq!(prod, f, "p={p} f={:?}", f.coeffs());
            }
        }
    }

    #[test]
    fn repeated_root_multiplicity() {
        // (x-1)^2 (x+1) over F_7.
        let lin1 = PolyModP::new(7, vec![6, 1]);
        let lin2 = PolyModP::new(7, vec![1, 1]);
        let f = lin1.mul(&lin1).mul(&lin2);
        let fs = factor(&f, 3);
        let mults: Vec<u32> = fs.iter().map(|(_, m)| *m).collect();
        assert_eq!(fs.len(), 2);
        assert_eq!(mults.iter().sum::<u32>(), 3);
    }

    #[test]
    fn type_extraction_example() {
        // f = (x+1)^2 - 2 over F_5 has orbit {3, 4}; g = x^2 + 2 evaluates
        // to a square at 3 and a non-square at 4, so g has type sn.
        let fam = PcfFamily::new(FamilyKind::SquareMinusOne, 1).unwrap();
        assert_eq!(fam.orbit_mod(5), vec![3, 4]);
        let g = PolyModP::new(5, vec![2, 0, 1]);
        let t = type_of_factor(&g, &fam.orbit_mod(5)).unwrap();
        assert_eq!(t.to_string(), "sn");
        // A linear factor evaluating to 1 starts with s.
        let lin = PolyModP::new(5, vec![3, 1]); // x + 3, eval at 3 = 6 = 1
        assert_eq!(type_of_factor(&lin, &[3]).unwrap().to_string(), "s");
    }

    #[test]
    fn family_classification() {
        assert_eq!(
            PcfFamily::new(FamilyKind::Square, 2)
                .unwrap()
                .model_id()
                .unwrap(),
            1
        );
        assert_eq!(
            PcfFamily::new(FamilyKind::Square, -1)
                .unwrap()
                .model_id()
                .unwrap(),
            2
        );
        assert_eq!(
            PcfFamily::new(FamilyKind::SquareMinusTwo, 3)
                .unwrap()
                .model_id()
                .unwrap(),
            4
        );
        assert!(PcfFamily::new(FamilyKind::SquareMinusTwo, 5)
            .unwrap()
            .model_id()
            .is_err());
        assert_eq!(
            PcfFamily::new(FamilyKind::SquareMinusOne, 5)
                .unwrap()
                .model_id()
                .unwrap(),
            5
        );
        assert_eq!(
            PcfFamily::new(FamilyKind::SquareMinusOne, 4)
                .unwrap()
                .model_id()
                .unwrap(),
            6
        );
        // Reducible members are rejected.
        assert!(PcfFamily::new(FamilyKind::Square, 4).is_err());
        assert!(PcfFamily::new(FamilyKind::SquareMinusOne, 3).is_err());
        assert!(PcfFamily::new(FamilyKind::SquareMinusTwo, 2).is_err());
    }

    #[test]
    fn type_lengths_are_uniform() {
        let fam = PcfFamily::new(FamilyKind::SquareMinusOne, 1).unwrap();
        let cfg = SweepConfig {
            parallel: false,
            ..Default::default()
        };
        for n in 1..=3u32 {
            let data = empirical_level_data(&fam, n, 500, 1, &cfg).unwrap();
            for t in data.counts.keys() {
                assert_eq!(t.total_degree(), 1u64 << n);
                for f in t.factors() {
                    assert_eq!(f.ty.len(), 2);
                }
            }
        }
    }

    #[test]
    fn level_zero_is_degenerate_but_total() {
        let fam = PcfFamily::new(FamilyKind::Square, 2).unwrap();
        let cfg = SweepConfig {
            parallel: false,
            ..Default::default()
        };
        let data = empirical_level_data(&fam, 0, 300, 1, &cfg).unwrap();
        let total: u64 = data.counts.values().sum();
        assert_eq!(total, data.total_primes);
    }

    #[test]
    fn empirical_level1_matches_table_roughly() {
        // Level-1 frequencies approach the model's table; with a small
        // bound we only ask for a loose tolerance.
        let fam = PcfFamily::new(FamilyKind::Square, 2).unwrap();
        let cfg = SweepConfig {
            parallel: false,
            ..Default::default()
        };
        let data = empirical_level_data(&fam, 1, 5_000, 1, &cfg).unwrap();
        let predicted = crate::markov::level_data(1, 1, crate::markov::Mode::Even, false).unwrap();
        let report = compare_empirical(&data, &predicted).unwrap();
        assert_eq!(report.support_violations, 0);
        assert!(
            report.max_deviation < 0.06,
            "deviation {}",
            report.max_deviation
        );
    }

    #[test]
    fn transition_compliance_small() {
        for (kind, a) in [
            (FamilyKind::Square, 2i64),
            (FamilyKind::SquareMinusTwo, 3),
            (FamilyKind::SquareMinusOne, 5),
        ] {
            let fam = PcfFamily::new(kind, a).unwrap();
            let cfg = SweepConfig {
                parallel: false,
                ..Default::default()
            };
            let checked = check_transition_compliance(&fam, 2, 300, &cfg).unwrap();
            assert!(checked > 10);
        }
    }

    #[test]
    fn error_paths() {
        let fam = PcfFamily::new(FamilyKind::Square, 2).unwrap();
        let cfg = SweepConfig {
            parallel: false,
            ..Default::default()
        };
        assert!(matches!(
            empirical_level_data(&fam, 1, 3, 1, &cfg),
            Err(Error::EmptyPrimeRange)
        ));
        let obs = empirical_level_data(&fam, 1, 500, 1, &cfg).unwrap();
        let wrong_level =
            crate::markov::level_data(1, 2, crate::markov::Mode::Even, false).unwrap();
        assert!(matches!(
            compare_empirical(&obs, &wrong_level),
            Err(Error::LevelMismatch { .. })
        ));
    }

    #[test]
    fn odd_twist_small() {
        let fam = PcfFamily::new(FamilyKind::SquareMinusOne, 1).unwrap();
        let cfg = SweepConfig {
            parallel: false,
            ..Default::default()
        };
        let checked = check_odd_linear_twist(&fam, 2, 300, &cfg).unwrap();
        assert!(checked > 10);
    }
}
