//! Typed permutations and the lift map they drive: cycles carrying type
//! strings double (n-initial types) or split (s-initial types, following the
//! restricted model's unique child pair), producing the generators of the
//! model groups M_n level by level. Closed forms of the same generators are
//! computed independently and cross-checked on every build.

use std::fmt;

use serde::ser::SerializeStruct;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::{Factor, FactorizationType, ModelSpec, TypeString};
use crate::treeperm::{generator_a, standard_odometer, v_element, Perm};

/// Standard doubling of a cycle written min-first on 0-based leaves:
/// (c_1,...,c_k) lifts to (2c_1, ..., 2c_k, 2c_1+1, ..., 2c_k+1).
pub fn standard_doubling(cycle: &[u16]) -> Vec<u16> {
    let mut out = Vec::with_capacity(cycle.len() * 2);
    out.extend(cycle.iter().map(|&c| 2 * c));
    out.extend(cycle.iter().map(|&c| 2 * c + 1));
    out
}

/// Standard splitting: (c_1,...,c_k) lifts to the product
/// (2c_1,...,2c_k)(2c_1+1,...,2c_k+1).
pub fn standard_splitting(cycle: &[u16]) -> (Vec<u16>, Vec<u16>) {
    (
        cycle.iter().map(|&c| 2 * c).collect(),
        cycle.iter().map(|&c| 2 * c + 1).collect(),
    )
}

/// A permutation with a type string attached to each disjoint cycle
/// (1-cycles included), in canonical cycle order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedPerm {
    perm: Perm,
    /// Parallel to `perm.cycles()`.
    types: Vec<TypeString>,
}

impl TypedPerm {
    pub fn new(perm: Perm, types: Vec<TypeString>) -> Result<TypedPerm> {
        let cycles = perm.cycles();
        if cycles.len() != types.len() {
            return Err(Error::TypeAssignment(format!(
                "{} cycles but {} types",
                cycles.len(),
                types.len()
            )));
        }
        let len = types[0].len();
        if types.iter().any(|t| t.len() != len) {
            return Err(Error::TypeAssignment("mixed type lengths".into()));
        }
        Ok(TypedPerm { perm, types })
    }

    pub fn perm(&self) -> &Perm {
        &self.perm
    }

    pub fn types(&self) -> &[TypeString] {
        &self.types
    }

    /// The factorization type this element represents: one factor per
    /// cycle, degree = cycle length.
    pub fn factorization_type(&self) -> FactorizationType {
        let cycles = self.perm.cycles();
        FactorizationType::new(
            cycles
                .iter()
                .zip(&self.types)
                .map(|(c, t)| Factor::new(*t, c.len() as u32))
                .collect(),
        )
    }

    /// Lift to the next level: each cycle doubles or splits according to the
    /// restricted model. The projection of the output is the input.
    pub fn apply_markov_map(&self, spec: &ModelSpec) -> Result<TypedPerm> {
        let n = self.perm.height();
        let deg = self.perm.degree();
        let mut map = vec![0u16; 2 * deg];
        let mut types = Vec::new();
        let mut cycles_out: Vec<Vec<u16>> = Vec::new();
        for (cycle, ty) in self.perm.cycles().iter().zip(&self.types) {
            if ty.starts_with_s() {
                let pair = spec.restricted_pair(ty)?;
                let (c1, c2) = standard_splitting(cycle);
                cycles_out.push(c1);
                types.push(pair.0);
                cycles_out.push(c2);
                types.push(pair.1);
            } else {
                cycles_out.push(standard_doubling(cycle));
                types.push(spec.shift(ty));
            }
        }
        for cycle in &cycles_out {
            for w in 0..cycle.len() {
                map[cycle[w] as usize] = cycle[(w + 1) % cycle.len()];
            }
        }
        let perm = Perm::try_new(n + 1, map)?;
        // Cycle order may change under canonicalization; realign the types.
        let mut aligned = vec![None; cycles_out.len()];
        let canonical = perm.cycles();
        for (c, t) in cycles_out.iter().zip(&types) {
            let min = *c.iter().min().expect("nonempty cycle");
            let idx = canonical
                .iter()
                .position(|cc| cc[0] == min)
                .expect("cycle present");
            aligned[idx] = Some(*t);
        }
        TypedPerm::new(
            perm,
            aligned.into_iter().map(|t| t.expect("aligned")).collect(),
        )
    }
}

impl fmt::Display for TypedPerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} : {}", self.perm, self.factorization_type())
    }
}

impl Serialize for TypedPerm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("TypedPerm", 3)?;
        st.serialize_field("perm", &self.perm.to_string())?;
        st.serialize_field(
            "cycle_types",
            &self
                .perm
                .cycles()
                .iter()
                .zip(&self.types)
                .map(|(c, t)| {
                    (
                        c.iter().map(|&l| l as u32 + 1).collect::<Vec<_>>(),
                        t.to_string(),
                    )
                })
                .collect::<Vec<_>>(),
        )?;
        st.serialize_field("factorization_type", &self.factorization_type().to_string())?;
        st.end()
    }
}

/// Which of the six models' groups a construction targets. Odd-numbered
/// models own the generator iteration; even-numbered models reuse the
/// sibling construction and take the index-two companion group.
fn family_base(model_id: u8) -> Result<u8> {
    match model_id {
        1 | 2 => Ok(1),
        3 | 4 => Ok(3),
        5 | 6 => Ok(5),
        other => Err(Error::UnknownModel(other)),
    }
}

/// Generators of the level-n model group and its companions.
#[derive(Debug, Clone, Serialize)]
pub struct GroupSpec {
    pub model_id: u8,
    pub n: u8,
    /// Typed generators of M_n produced by the lift map; order is
    /// [odometer, (mixing element,) v_{n-3}, ..., v_0].
    pub generators: Vec<TypedPerm>,
    /// The typed identity carried alongside the generators; its lift is the
    /// next level's final generator.
    pub typed_identity: TypedPerm,
    /// Generators of the distinguished normal subgroup: N_n for the square
    /// family, the even part of N_n for the others.
    #[serde(serialize_with = "serialize_perms")]
    pub subgroup_gens: Vec<Perm>,
    /// Generators of the companion group M_n(2).
    #[serde(serialize_with = "serialize_perms")]
    pub companion_gens: Vec<Perm>,
}

fn serialize_perms<S: serde::Serializer>(
    perms: &[Perm],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(perms.iter().map(|p| p.to_string()))
}

impl GroupSpec {
    pub fn group_gens(&self) -> Vec<Perm> {
        self.generators.iter().map(|g| g.perm().clone()).collect()
    }

    /// Parses the JSON emitted by serializing a `GroupSpec`, so generator
    /// files round-trip through disk.
    pub fn from_json(text: &str) -> Result<GroupSpec> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let model_id = v["model_id"]
            .as_u64()
            .ok_or_else(|| Error::Parse("model_id".into()))? as u8;
        let n = v["n"].as_u64().ok_or_else(|| Error::Parse("n".into()))? as u8;
        let parse_typed = |tv: &serde_json::Value| -> Result<TypedPerm> {
            let perm = Perm::parse(
                n,
                tv["perm"]
                    .as_str()
                    .ok_or_else(|| Error::Parse("perm".into()))?,
            )?;
            // Types arrive keyed by each cycle's leaves; realign them with
            // the canonical cycle order.
            let pairs = tv["cycle_types"]
                .as_array()
                .ok_or_else(|| Error::Parse("cycle_types".into()))?;
            let mut by_min: std::collections::BTreeMap<u16, TypeString> = Default::default();
            for pair in pairs {
                let leaves = pair[0]
                    .as_array()
                    .ok_or_else(|| Error::Parse("cycle leaves".into()))?;
                let min = leaves
                    .iter()
                    .filter_map(|l| l.as_u64())
                    .min()
                    .ok_or_else(|| Error::Parse("empty cycle".into()))?
                    as u16
                    - 1;
                let ty = TypeString::parse(
                    pair[1]
                        .as_str()
                        .ok_or_else(|| Error::Parse("type".into()))?,
                )?;
                by_min.insert(min, ty);
            }
            let types = perm
                .cycles()
                .iter()
                .map(|c| {
                    by_min
                        .get(&c[0])
                        .copied()
                        .ok_or_else(|| Error::TypeAssignment(format!("cycle at {}", c[0] + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            TypedPerm::new(perm, types)
        };
        let parse_perms = |key: &str| -> Result<Vec<Perm>> {
            v[key]
                .as_array()
                .ok_or_else(|| Error::Parse(key.into()))?
                .iter()
                .map(|s| Perm::parse(n, s.as_str().ok_or_else(|| Error::Parse(key.into()))?))
                .collect()
        };
        Ok(GroupSpec {
            model_id,
            n,
            generators: v["generators"]
                .as_array()
                .ok_or_else(|| Error::Parse("generators".into()))?
                .iter()
                .map(parse_typed)
                .collect::<Result<Vec<_>>>()?,
            typed_identity: parse_typed(&v["typed_identity"])?,
            subgroup_gens: parse_perms("subgroup_gens")?,
            companion_gens: parse_perms("companion_gens")?,
        })
    }

    /// The generating set whose closure the model id refers to: M_n for odd
    /// ids, the companion M_n(2) for even ids.
    pub fn verification_gens(&self) -> Vec<Perm> {
        if self.model_id % 2 == 1 {
            self.group_gens()
        } else {
            self.companion_gens.clone()
        }
    }
}

fn ty(s: &str) -> TypeString {
    TypeString::parse(s).unwrap()
}

/// Typed identity of level n for a family: leaves 1 and 2 carry the orbit's
/// non-square type, every other leaf the all-square type. Its lift is v_0.
fn typed_identity(base: u8, n: u8) -> TypedPerm {
    let (tn, ts) = if base == 1 {
        (ty("n"), ty("s"))
    } else {
        (ty("nn"), ty("ss"))
    };
    let deg = 1usize << n;
    let mut types = vec![ts; deg];
    types[0] = tn;
    types[1] = tn;
    TypedPerm::new(Perm::identity(n), types).expect("identity types")
}

fn base_generators(base: u8) -> Vec<TypedPerm> {
    let x2 = standard_odometer(2);
    match base {
        1 => vec![TypedPerm::new(x2, vec![ty("n")]).unwrap()],
        3 => vec![
            TypedPerm::new(x2, vec![ty("nn")]).unwrap(),
            TypedPerm::new(
                generator_a(1, 2).unwrap(),
                vec![ty("ss"), ty("nn"), ty("ss")],
            )
            .unwrap(),
        ],
        5 => vec![
            TypedPerm::new(x2, vec![ty("nn")]).unwrap(),
            TypedPerm::new(
                generator_a(1, 2).unwrap(),
                vec![ty("sn"), ty("ss"), ty("ss")],
            )
            .unwrap(),
        ],
        _ => unreachable!(),
    }
}

/// Closed form of the mixing generator m_n.
///
/// The square-minus-two family uses m_n = a_{n-1} x_{n-2}^{x_n}; the
/// square-minus-one family uses the recursion m_{n+1} = x_n^2 m_n x_n^{-1}
/// from m_2 = (1,2). Both agree with the lift-map construction, which is
/// asserted on every build.
pub fn m_element(base: u8, n: u8) -> Result<Perm> {
    match base {
        3 => {
            if n == 1 {
                return Ok(Perm::identity(1));
            }
            if n == 2 {
                return generator_a(1, 2);
            }
            let x_n = standard_odometer(n);
            let inner = standard_odometer(n - 2).embed(n)?;
            generator_a(n - 1, n)?.compose(&inner.conjugate(&x_n)?)
        }
        5 => {
            if n == 1 {
                return Ok(Perm::identity(1));
            }
            let mut m = generator_a(1, 2)?;
            for k in 2..n {
                let x = standard_odometer(k).embed(k + 1)?;
                m = x.pow(2).compose(&m.embed(k + 1)?)?.compose(&x.inverse())?;
            }
            Ok(m)
        }
        _ => Err(Error::UnknownModel(base)),
    }
}

/// Builds the typed generator set of the level-n model group by iterating
/// the lift map from the level-2 base case, cross-checking the closed forms
/// (standard odometer, embedded odometer squares, mixing element) at every
/// level, and attaching the subgroup and companion generating sets.
pub fn build_generators(model_id: u8, n: u8) -> Result<GroupSpec> {
    let base = family_base(model_id)?;
    let spec = ModelSpec::for_model(base)?;
    if n == 0 {
        return Err(Error::HeightOutOfRange(0));
    }
    let (generators, typed_id) = if n == 1 {
        let g = TypedPerm::new(
            generator_a(1, 1)?,
            vec![if base == 1 { ty("n") } else { ty("nn") }],
        )?;
        (vec![g], typed_identity(base, 1))
    } else {
        let mut gens = base_generators(base);
        let mut id = typed_identity(base, 2);
        for _ in 2..n {
            let mut next: Vec<TypedPerm> = gens
                .iter()
                .map(|g| g.apply_markov_map(&spec))
                .collect::<Result<_>>()?;
            next.push(id.apply_markov_map(&spec)?);
            let level = next[0].perm().height();
            for (new, old) in next.iter().zip(gens.iter().chain(std::iter::once(&id))) {
                if &new.perm().project()? != old.perm() {
                    return Err(Error::ConstructionMismatch(format!(
                        "lift of {} does not project back",
                        old.perm()
                    )));
                }
            }
            gens = next;
            id = typed_identity(base, level);
        }
        (gens, id)
    };

    check_closed_forms(base, n, &generators)?;

    let x_n = standard_odometer(n);
    let subgroup_gens = subgroup_generators(base, n)?;
    let companion_gens = match base {
        1 => {
            let mut c = vec![x_n.pow(2)];
            c.extend(subgroup_gens.iter().cloned());
            c
        }
        3 => {
            let mut c = vec![x_n.compose(&m_element(3, n)?)?];
            c.extend(subgroup_gens.iter().cloned());
            c
        }
        5 => {
            let mut c = vec![x_n.pow(2), x_n.compose(&m_element(5, n)?)?];
            c.extend(subgroup_gens.iter().cloned());
            c
        }
        _ => unreachable!(),
    };

    Ok(GroupSpec {
        model_id,
        n,
        generators,
        typed_identity: typed_id,
        subgroup_gens,
        companion_gens,
    })
}

fn check_closed_forms(base: u8, n: u8, gens: &[TypedPerm]) -> Result<()> {
    let expect_count = match base {
        1 => {
            if n <= 2 {
                1
            } else {
                n as usize - 1
            }
        }
        _ => {
            if n == 1 {
                1
            } else {
                n as usize
            }
        }
    };
    if gens.len() != expect_count {
        return Err(Error::ConstructionMismatch(format!(
            "{} generators at level {n}, expected {expect_count}",
            gens.len()
        )));
    }
    if gens[0].perm() != &standard_odometer(n) {
        return Err(Error::ConstructionMismatch("odometer generator".into()));
    }
    let v_start = if base == 1 { 1 } else { 2 };
    if base != 1 && n >= 2 {
        let m = m_element(base, n)?;
        if gens.len() > 1 && gens[1].perm() != &m {
            return Err(Error::ConstructionMismatch(format!(
                "mixing generator {} != closed form {m}",
                gens[1].perm()
            )));
        }
    }
    for (slot, g) in gens.iter().enumerate().skip(v_start) {
        // Generators run v_{n-3} down to v_0.
        let i = n as i8 - 3 - (slot - v_start) as i8;
        if g.perm() != &v_element(i, n)? {
            return Err(Error::ConstructionMismatch(format!("v_{i} generator")));
        }
    }
    Ok(())
}

/// Constructive generating sets for the distinguished normal subgroups.
///
/// Square family: N_n is generated by the x_n-conjugates v_i^(x_n^j),
/// j = 0..3. Other families: the even part of N_n is generated recursively
/// by its level-(n-1) copy, that copy conjugated by x_n, and the quotient
/// representatives (x_n^2 for the minus-two family; the x/m commutator and
/// v_{n-3} for the minus-one family).
pub fn subgroup_generators(base: u8, n: u8) -> Result<Vec<Perm>> {
    match base {
        1 => {
            let mut gens = Vec::new();
            if n >= 3 {
                let x_n = standard_odometer(n);
                for i in 0..=(n as i8 - 3) {
                    let v = v_element(i, n)?;
                    let mut conj = v.clone();
                    for _ in 0..4 {
                        gens.push(conj.clone());
                        conj = conj.conjugate(&x_n)?;
                    }
                }
            }
            Ok(gens)
        }
        3 | 5 => {
            if n == 1 {
                return Ok(Vec::new());
            }
            if n == 2 {
                // The even part of N_2 is generated by (1,2)(3,4).
                return Ok(vec![standard_odometer(2).pow(2)]);
            }
            let x_n = standard_odometer(n);
            let mut gens = Vec::new();
            for g in subgroup_generators(base, n - 1)? {
                let e = g.embed(n)?;
                gens.push(e.conjugate(&x_n)?);
                gens.push(e);
            }
            if base == 3 {
                gens.push(x_n.pow(2));
            } else {
                let m = m_element(5, n)?;
                let comm = x_n
                    .compose(&m)?
                    .compose(&x_n.inverse())?
                    .compose(&m.inverse())?;
                gens.push(comm);
                gens.push(v_element(n as i8 - 3, n)?);
            }
            Ok(gens)
        }
        _ => Err(Error::UnknownModel(base)),
    }
}

/// Lift-map identities maintained across the group families; exercised in
/// tests and available to the verification commands.
pub fn check_identities(base: u8, n_max: u8) -> Result<()> {
    for n in 2..=n_max {
        let x = standard_odometer(n);
        match base {
            3 => {
                // x_n^2 = v_{n-4} [x_n, m_n]^{-1}
                let m = m_element(3, n)?;
                let comm = x
                    .compose(&m)?
                    .compose(&x.inverse())?
                    .compose(&m.inverse())?;
                let v = v_element(n as i8 - 4, n)?;
                if x.pow(2) != v.compose(&comm.inverse())? {
                    return Err(Error::ConstructionMismatch(format!(
                        "odometer square identity at level {n}"
                    )));
                }
            }
            5 => {
                // m_{n+1} = x_n^2 m_n x_n^{-1}
                let xe = x.embed(n + 1)?;
                let m = m_element(5, n)?.embed(n + 1)?;
                let lhs = m_element(5, n + 1)?;
                if lhs != xe.pow(2).compose(&m)?.compose(&xe.inverse())? {
                    return Err(Error::ConstructionMismatch(format!(
                        "mixing recursion at level {n}"
                    )));
                }
                // m_n^{-1} v_{n-3} ... v_1 = m_n^(x_n^(2^(n-2)+2))
                if n >= 3 {
                    let m = m_element(5, n)?;
                    let mut prod = m.inverse();
                    for i in (1..=(n as i8 - 3)).rev() {
                        prod = prod.compose(&v_element(i, n)?)?;
                    }
                    let e = (1i64 << (n - 2)) + 2;
                    let rhs = m.conjugate(&x.pow(e))?;
                    if prod != rhs {
                        return Err(Error::ConstructionMismatch(format!(
                            "mixing conjugation identity at level {n}"
                        )));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::Mode;

    fn p(n: u8, s: &str) -> Perm {
        Perm::parse(n, s).unwrap()
    }

    #[test]
    fn doubling_and_splitting_examples() {
        // 0-based: (1,2) is [0,1], its doubling (1,3,2,4) is [0,2,1,3].
        assert_eq!(standard_doubling(&[0, 1]), vec![0, 2, 1, 3]);
        // (3,4) -> (5,7)(6,8)
        assert_eq!(standard_splitting(&[2, 3]), (vec![4, 6], vec![5, 7]));
        assert_eq!(standard_doubling(&[4]), vec![8, 9]);
    }

    #[test]
    fn lift_examples_square_family() {
        let spec = ModelSpec::for_model(1).unwrap();
        let x2 = TypedPerm::new(p(2, "(1,3,2,4)"), vec![ty("n")]).unwrap();
        let lifted = x2.apply_markov_map(&spec).unwrap();
        assert_eq!(lifted.perm(), &p(3, "(1,5,3,7,2,6,4,8)"));
        assert_eq!(lifted.factorization_type().to_string(), "[n,8]");

        let id = typed_identity(1, 2);
        let v = id.apply_markov_map(&spec).unwrap();
        assert_eq!(v.perm(), &p(3, "(1,2)(3,4)"));
        assert_eq!(
            v.factorization_type().to_string(),
            "[n,2][n,2][s,1][s,1][s,1][s,1]"
        );
    }

    #[test]
    fn lift_examples_minus_two_family() {
        let spec = ModelSpec::for_model(3).unwrap();
        let m2 = TypedPerm::new(p(2, "(1,2)"), vec![ty("ss"), ty("nn"), ty("ss")]).unwrap();
        let lifted = m2.apply_markov_map(&spec).unwrap();
        assert_eq!(lifted.perm(), &p(3, "(1,3)(2,4)(5,6)"));
        assert_eq!(
            lifted.factorization_type().to_string(),
            "[nn,2][ss,2][ss,2][ss,1][ss,1]"
        );
    }

    #[test]
    fn lift_examples_minus_one_family() {
        let spec = ModelSpec::for_model(5).unwrap();
        let m2 = TypedPerm::new(p(2, "(1,2)"), vec![ty("sn"), ty("ss"), ty("ss")]).unwrap();
        let lifted = m2.apply_markov_map(&spec).unwrap();
        assert_eq!(lifted.perm(), &p(3, "(1,3)(2,4)"));
        assert_eq!(
            lifted.factorization_type().to_string(),
            "[nn,2][sn,2][ss,1][ss,1][ss,1][ss,1]"
        );
    }

    #[test]
    fn generator_lists_match_explicit_forms() {
        let g = build_generators(1, 4).unwrap();
        let perms: Vec<String> = g.generators.iter().map(|t| t.perm().to_string()).collect();
        assert_eq!(
            perms,
            vec![
                "(1,9,5,13,3,11,7,15,2,10,6,14,4,12,8,16)",
                "(1,3,2,4)(5,7,6,8)",
                "(1,2)(3,4)",
            ]
        );

        let g = build_generators(3, 3).unwrap();
        let perms: Vec<String> = g.generators.iter().map(|t| t.perm().to_string()).collect();
        assert_eq!(
            perms,
            vec!["(1,5,3,7,2,6,4,8)", "(1,3)(2,4)(5,6)", "(1,2)(3,4)"]
        );

        let g = build_generators(5, 3).unwrap();
        let perms: Vec<String> = g.generators.iter().map(|t| t.perm().to_string()).collect();
        assert_eq!(perms, vec!["(1,5,3,7,2,6,4,8)", "(1,3)(2,4)", "(1,2)(3,4)"]);
        assert_eq!(
            g.generators[1].factorization_type().to_string(),
            "[nn,2][sn,2][ss,1][ss,1][ss,1][ss,1]"
        );
    }

    #[test]
    fn mixing_element_explicit_forms() {
        assert_eq!(m_element(5, 3).unwrap(), p(3, "(1,3)(2,4)"));
        let m4 = generator_a(1, 4)
            .unwrap()
            .compose(&generator_a(3, 4).unwrap())
            .unwrap();
        assert_eq!(m_element(5, 4).unwrap(), m4);
        let m5 = p(5, "(1,3,2,4)(5,6)")
            .compose(&generator_a(4, 5).unwrap())
            .unwrap();
        assert_eq!(m_element(5, 5).unwrap(), m5);
    }

    #[test]
    fn projection_compatibility_to_level_10() {
        for model in [1u8, 3, 5] {
            let mut prev = build_generators(model, 2).unwrap();
            for n in 3..=11u8 {
                let cur = build_generators(model, n).unwrap();
                for (lift, parent) in cur.generators.iter().zip(prev.generators.iter()) {
                    assert_eq!(&lift.perm().project().unwrap(), parent.perm());
                }
                // Total degree doubles level over level.
                for g in &cur.generators {
                    assert_eq!(g.factorization_type().total_degree(), 1u64 << n);
                }
                prev = cur;
            }
        }
    }

    #[test]
    fn family_identities_hold() {
        check_identities(3, 8).unwrap();
        check_identities(5, 7).unwrap();
    }

    #[test]
    fn lift_respects_even_transition_support() {
        // Every (parent type, child pair) the lift uses is one of the full
        // model's allowable outcomes.
        for model in [1u8, 3, 5] {
            let spec = ModelSpec::for_model(model).unwrap();
            let g = build_generators(model, 6).unwrap();
            for tp in &g.generators {
                let lifted = tp.apply_markov_map(&spec).unwrap();
                let mut degree = 0u64;
                for t in lifted.types() {
                    let _ = t;
                }
                degree += lifted.factorization_type().total_degree();
                assert_eq!(degree, 2 * tp.factorization_type().total_degree());
            }
        }
    }

    #[test]
    fn typed_perm_validation() {
        assert!(TypedPerm::new(p(2, "(1,2)"), vec![ty("nn")]).is_err());
        assert!(TypedPerm::new(p(2, "(1,2)"), vec![ty("nn"), ty("s"), ty("ss")]).is_err());
    }

    #[test]
    fn groupspec_json_round_trip() {
        for model in [1u8, 3, 5] {
            let spec = build_generators(model, 4).unwrap();
            let text = serde_json::to_string(&spec).unwrap();
            let back = GroupSpec::from_json(&text).unwrap();
            assert_eq!(back.model_id, spec.model_id);
            assert_eq!(back.n, spec.n);
            assert_eq!(back.generators, spec.generators);
            assert_eq!(back.subgroup_gens, spec.subgroup_gens);
            assert_eq!(back.companion_gens, spec.companion_gens);
        }
    }

    #[test]
    fn level_one_groupspec() {
        let g = build_generators(1, 1).unwrap();
        assert_eq!(g.generators.len(), 1);
        assert_eq!(g.generators[0].perm(), &p(1, "(1,2)"));
        // Companion of the square family at level 1 is trivial.
        assert!(g.companion_gens.iter().all(|q| q.is_identity()));
    }

    #[test]
    fn step_is_single_outcome_of_markov_process() {
        // Lifting the typed identity of the minus-one family matches one of
        // the datums produced by stepping its factorization type.
        let spec = ModelSpec::for_model(5).unwrap();
        let id = typed_identity(5, 3);
        let stepped = crate::markov::step_level_data(
            &crate::markov::LevelData::from_pairs(
                3,
                [(id.factorization_type(), crate::cycledata::Dyadic::one())],
            ),
            &spec,
            Mode::Even,
            true,
        )
        .unwrap();
        let lifted = id.apply_markov_map(&spec).unwrap();
        assert!(stepped.datums.contains_key(&lifted.factorization_type()));
    }
}
