use std::fmt;

/// Errors shared across the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Two permutations of different tree heights were combined.
    HeightMismatch { left: u8, right: u8 },
    /// A height outside the supported range (1..=MAX_HEIGHT) was requested.
    HeightOutOfRange(u8),
    /// A leaf map is not a bijection or does not preserve the tree structure.
    NotTreeAutomorphism,
    /// An index argument (generator level, v-element index, ...) is out of range.
    IndexOutOfRange { index: i64, min: i64, max: i64 },
    /// Text that could not be parsed as cycle notation or a portrait.
    Parse(String),
    /// Enumeration exceeded its memory budget; carries the element count seen so far.
    BudgetExceeded { elements_seen: u64 },
    /// Model id outside 1..=6.
    UnknownModel(u8),
    /// The Markov process has no transition for a type that occurred.
    MissingTransition(String),
    /// Odd-prime data requested for a model that only defines even data.
    OddDataUnavailable(u8),
    /// Two level data sets (or a data set and a group) live at different levels.
    LevelMismatch { left: u32, right: u32 },
    /// Scaling would push a density above 1.
    DensityOverflow,
    /// Relative cycle data requested for sets that are not nested.
    NotASubset,
    /// A denominator that is not a power of two cannot be represented exactly.
    NotDyadic(u64),
    /// A quotient was requested by a subgroup that is not normal.
    NotNormal,
    /// Iterative and closed-form generator constructions disagree.
    ConstructionMismatch(String),
    /// The polynomial family parameter is reducible or not covered by any model.
    UnsupportedFamily(String),
    /// An orbit point became a root mod p; such primes are excluded.
    OrbitRoot { p: u64 },
    /// No primes satisfied the sweep constraints.
    EmptyPrimeRange,
    /// A typed permutation's type assignment does not match its cycles.
    TypeAssignment(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::HeightMismatch { left, right } => {
                write!(f, "height mismatch: {left} vs {right}")
            }
            Error::HeightOutOfRange(n) => write!(f, "tree height {n} out of supported range"),
            Error::NotTreeAutomorphism => write!(f, "map is not a tree automorphism"),
            Error::IndexOutOfRange { index, min, max } => {
                write!(f, "index {index} outside [{min}, {max}]")
            }
            Error::Parse(s) => write!(f, "parse error: {s}"),
            Error::BudgetExceeded { elements_seen } => {
                write!(f, "memory budget exceeded after {elements_seen} elements")
            }
            Error::UnknownModel(m) => write!(f, "unknown model id {m}"),
            Error::MissingTransition(t) => write!(f, "no transition defined for type {t}"),
            Error::OddDataUnavailable(m) => {
                write!(f, "model {m} defines no odd (p = 3 mod 4) data")
            }
            Error::LevelMismatch { left, right } => {
                write!(f, "level mismatch: {left} vs {right}")
            }
            Error::DensityOverflow => write!(f, "density would exceed 1"),
            Error::NotASubset => write!(f, "first set is not contained in the second"),
            Error::NotDyadic(d) => write!(f, "{d} is not a power of two"),
            Error::NotNormal => write!(f, "subgroup is not normal"),
            Error::ConstructionMismatch(what) => {
                write!(
                    f,
                    "iterative and closed-form constructions disagree: {what}"
                )
            }
            Error::UnsupportedFamily(why) => write!(f, "unsupported family: {why}"),
            Error::OrbitRoot { p } => write!(f, "orbit point is a root mod {p}"),
            Error::EmptyPrimeRange => write!(f, "no usable primes in range"),
            Error::TypeAssignment(why) => write!(f, "bad type assignment: {why}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
