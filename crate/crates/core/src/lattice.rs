//! Integer quadratic modules assembled from `U`, `E8(-1)` and `Z(d)` blocks.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intlinalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("cannot parse lattice spec: bad token `{token}`")]
    Parse { token: String },
    #[error("vector of length {got} does not belong to a lattice of rank {rank}")]
    RankMismatch { rank: usize, got: usize },
    #[error("gram matrix is not square and symmetric")]
    NotSymmetric,
    #[error("zero vector has no primitivity")]
    ZeroVector,
    #[error("vector is not primitive")]
    NotPrimitive,
    #[error("malformed lattice json: {0}")]
    Json(String),
}

/// One summand of a block-diagonal lattice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    U,
    E8Minus,
    ZSpan(i64),
    /// A summand given only by its Gram matrix (complements, sublattices).
    Derived(usize),
}

impl Block {
    pub fn rank(&self) -> usize {
        match self {
            Block::U => 2,
            Block::E8Minus => 8,
            Block::ZSpan(_) => 1,
            Block::Derived(r) => *r,
        }
    }
}

/// Node order for `E8(-1)`: the chain 1-3-4-5-6-7-8 with node 2 attached to node 4.
pub const E8_EDGES: [(usize, usize); 7] = [(0, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (1, 3)];

/// Gram matrix of `E8(-1)`: diagonal -2, +1 between joined nodes.
pub fn e8_minus_gram() -> Vec<Vec<i64>> {
    let mut g = vec![vec![0i64; 8]; 8];
    for (i, row) in g.iter_mut().enumerate() {
        row[i] = -2;
    }
    for &(a, b) in &E8_EDGES {
        g[a][b] = 1;
        g[b][a] = 1;
    }
    g
}

/// Integer coordinates in the lattice basis. Serializes as a JSON array of
/// numbers, falling back to decimal strings beyond the `i64` range.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticeVector(pub Vec<BigInt>);

impl Serialize for LatticeVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for x in &self.0 {
            match x.to_i64() {
                Some(i) => seq.serialize_element(&i)?,
                None => seq.serialize_element(&x.to_string())?,
            }
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for LatticeVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Coord {
            Int(i64),
            Text(String),
        }
        let raw: Vec<Coord> = Vec::deserialize(d)?;
        raw.into_iter()
            .map(|c| match c {
                Coord::Int(i) => Ok(BigInt::from(i)),
                Coord::Text(t) => t.parse::<BigInt>().map_err(serde::de::Error::custom),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(LatticeVector)
    }
}

impl LatticeVector {
    pub fn zero(n: usize) -> Self {
        Self(vec![BigInt::zero(); n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = Self::zero(n);
        v.0[i] = BigInt::one();
        v
    }

    pub fn from_i64(xs: &[i64]) -> Self {
        Self(xs.iter().map(|&x| BigInt::from(x)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Zero::is_zero)
    }

    pub fn content(&self) -> BigInt {
        self.0.iter().fold(BigInt::zero(), |g, x| g.gcd(x))
    }

    pub fn add(&self, w: &Self) -> Self {
        Self(self.0.iter().zip(&w.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, w: &Self) -> Self {
        Self(self.0.iter().zip(&w.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|a| -a).collect())
    }

    pub fn scale(&self, c: &BigInt) -> Self {
        Self(self.0.iter().map(|a| a * c).collect())
    }

    /// `self + c * w`
    pub fn axpy(&self, c: &BigInt, w: &Self) -> Self {
        Self(self.0.iter().zip(&w.0).map(|(a, b)| a + c * b).collect())
    }

    pub fn to_rational(&self) -> RationalVector {
        RationalVector(self.0.iter().map(|x| BigRational::from_integer(x.clone())).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn to_i64(&self) -> Option<Vec<i64>> {
        self.0.iter().map(|x| x.to_i64()).collect()
    }
}

impl fmt::Display for LatticeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalVector(pub Vec<BigRational>);

impl RationalVector {
    pub fn is_integral(&self) -> bool {
        self.0.iter().all(|x| x.is_integer())
    }

    pub fn to_integral(&self) -> Option<LatticeVector> {
        self.is_integral()
            .then(|| LatticeVector(self.0.iter().map(|x| x.to_integer()).collect()))
    }

    pub fn sub(&self, w: &Self) -> Self {
        Self(self.0.iter().zip(&w.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self(self.0.iter().map(|a| a * c).collect())
    }

    pub fn axpy(&self, c: &BigRational, w: &Self) -> Self {
        Self(self.0.iter().zip(&w.0).map(|(a, b)| a + c * b).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub pos: usize,
    pub neg: usize,
    pub zero: usize,
}

/// Orthogonal complement of a vector: a saturated basis and its Gram matrix.
#[derive(Debug, Clone)]
pub struct Complement {
    pub basis: Vec<LatticeVector>,
    pub gram: Vec<Vec<BigInt>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    gram: Vec<Vec<BigInt>>,
    layout: Vec<Block>,
    // nonzero entries per row, for fast pairings
    sparse: Vec<Vec<(usize, BigInt)>>,
}

#[derive(Serialize, Deserialize)]
struct LatticeJson {
    spec: String,
    gram: Vec<Vec<i64>>,
}

impl Lattice {
    /// Parse a spec such as `"U^3 + E8(-1)^2"` or `"U + E8(-1) + Z(-6)"`.
    pub fn from_spec(spec: &str) -> Result<Self, LatticeError> {
        let compact: String = spec.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(LatticeError::Parse { token: String::new() });
        }
        let mut layout = Vec::new();
        for token in compact.split('+') {
            let bad = || LatticeError::Parse { token: token.to_string() };
            let (base, reps) = match token.rsplit_once('^') {
                Some((b, r)) => {
                    let k: usize = r.parse().map_err(|_| bad())?;
                    if k == 0 {
                        return Err(bad());
                    }
                    (b, k)
                }
                None => (token, 1),
            };
            let block = if base == "U" {
                Block::U
            } else if base == "E8(-1)" {
                Block::E8Minus
            } else if let Some(inner) = base.strip_prefix("Z(").and_then(|s| s.strip_suffix(')')) {
                let d: i64 = inner.parse().map_err(|_| bad())?;
                if d == 0 {
                    return Err(bad());
                }
                Block::ZSpan(d)
            } else {
                return Err(bad());
            };
            layout.extend(std::iter::repeat_n(block, reps));
        }
        Ok(Self::from_layout(layout))
    }

    fn from_layout(layout: Vec<Block>) -> Self {
        let rank: usize = layout.iter().map(Block::rank).sum();
        let mut gram = vec![vec![BigInt::zero(); rank]; rank];
        let mut off = 0;
        for b in &layout {
            match b {
                Block::U => {
                    gram[off][off + 1] = BigInt::one();
                    gram[off + 1][off] = BigInt::one();
                }
                Block::E8Minus => {
                    for (i, row) in e8_minus_gram().iter().enumerate() {
                        for (j, &x) in row.iter().enumerate() {
                            gram[off + i][off + j] = BigInt::from(x);
                        }
                    }
                }
                Block::ZSpan(d) => gram[off][off] = BigInt::from(*d),
                Block::Derived(_) => unreachable!("derived blocks carry their own gram"),
            }
            off += b.rank();
        }
        Self::assemble(gram, layout)
    }

    fn assemble(gram: Vec<Vec<BigInt>>, layout: Vec<Block>) -> Self {
        let sparse = gram
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, x)| !x.is_zero())
                    .map(|(j, x)| (j, x.clone()))
                    .collect()
            })
            .collect();
        Self { gram, layout, sparse }
    }

    /// A lattice given by an arbitrary symmetric integer Gram matrix.
    pub fn from_gram(gram: Vec<Vec<BigInt>>) -> Result<Self, LatticeError> {
        let n = gram.len();
        if gram.iter().any(|r| r.len() != n) {
            return Err(LatticeError::NotSymmetric);
        }
        if (0..n).any(|i| (0..i).any(|j| gram[i][j] != gram[j][i])) {
            return Err(LatticeError::NotSymmetric);
        }
        Ok(Self::assemble(gram, vec![Block::Derived(n)]))
    }

    /// Orthogonal direct sum, keeping both layouts.
    pub fn direct_sum(&self, other: &Lattice) -> Lattice {
        let (n, m) = (self.rank(), other.rank());
        let mut gram = vec![vec![BigInt::zero(); n + m]; n + m];
        for (row, src) in gram.iter_mut().zip(&self.gram) {
            row[..n].clone_from_slice(src);
        }
        for (row, src) in gram[n..].iter_mut().zip(&other.gram) {
            row[n..].clone_from_slice(src);
        }
        let mut layout = self.layout.clone();
        layout.extend(other.layout.iter().cloned());
        Self::assemble(gram, layout)
    }

    pub fn rank(&self) -> usize {
        self.gram.len()
    }

    pub fn gram(&self) -> &[Vec<BigInt>] {
        &self.gram
    }

    pub fn layout(&self) -> &[Block] {
        &self.layout
    }

    /// Blocks paired with their first coordinate index.
    pub fn block_offsets(&self) -> Vec<(Block, usize)> {
        let mut off = 0;
        self.layout
            .iter()
            .map(|b| {
                let here = off;
                off += b.rank();
                (b.clone(), here)
            })
            .collect()
    }

    /// Offsets of all `U` summands, in layout order.
    pub fn u_offsets(&self) -> Vec<usize> {
        self.block_offsets()
            .into_iter()
            .filter(|(b, _)| *b == Block::U)
            .map(|(_, o)| o)
            .collect()
    }

    /// Canonical spec string for the layout.
    pub fn spec(&self) -> String {
        let mut parts: Vec<(String, usize)> = Vec::new();
        for b in &self.layout {
            let name = match b {
                Block::U => "U".to_string(),
                Block::E8Minus => "E8(-1)".to_string(),
                Block::ZSpan(d) => format!("Z({d})"),
                Block::Derived(r) => format!("G{r}"),
            };
            match parts.last_mut() {
                Some((last, k)) if *last == name => *k += 1,
                _ => parts.push((name, 1)),
            }
        }
        parts
            .into_iter()
            .map(|(n, k)| if k == 1 { n } else { format!("{n}^{k}") })
            .collect::<Vec<_>>()
            .join(" + ")
    }

    pub fn check(&self, v: &LatticeVector) -> Result<(), LatticeError> {
        if v.len() != self.rank() {
            return Err(LatticeError::RankMismatch { rank: self.rank(), got: v.len() });
        }
        Ok(())
    }

    pub fn inner_product(&self, v: &LatticeVector, w: &LatticeVector) -> Result<BigInt, LatticeError> {
        self.check(v)?;
        self.check(w)?;
        Ok(self.pair(v, w))
    }

    /// Pairing without the rank check.
    pub fn pair(&self, v: &LatticeVector, w: &LatticeVector) -> BigInt {
        let mut acc = BigInt::zero();
        for (i, row) in self.sparse.iter().enumerate() {
            if v.0[i].is_zero() {
                continue;
            }
            let mut s = BigInt::zero();
            for (j, g) in row {
                if !w.0[*j].is_zero() {
                    s += g * &w.0[*j];
                }
            }
            acc += &v.0[i] * s;
        }
        acc
    }

    pub fn norm(&self, v: &LatticeVector) -> BigInt {
        self.pair(v, v)
    }

    pub fn pair_q(&self, v: &RationalVector, w: &RationalVector) -> BigRational {
        let mut acc = BigRational::zero();
        for (i, row) in self.sparse.iter().enumerate() {
            if v.0[i].is_zero() {
                continue;
            }
            let mut s = BigRational::zero();
            for (j, g) in row {
                if !w.0[*j].is_zero() {
                    s += &w.0[*j] * g;
                }
            }
            acc += &v.0[i] * s;
        }
        acc
    }

    /// `G v` as a coordinate vector (the pairing functional of `v`).
    pub fn dual(&self, v: &LatticeVector) -> Vec<BigInt> {
        self.sparse
            .iter()
            .map(|row| row.iter().map(|(j, g)| g * &v.0[*j]).sum())
            .collect()
    }

    /// `sum_{ij} g_ij x_i y_j` over `f64`.
    pub fn pair_f64(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, row) in self.sparse.iter().enumerate() {
            let mut s = 0.0;
            for (j, g) in row {
                s += g.to_f64().unwrap_or(f64::NAN) * y[*j];
            }
            acc += x[i] * s;
        }
        acc
    }

    pub fn gram_f64(&self) -> Vec<Vec<f64>> {
        self.gram
            .iter()
            .map(|r| r.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect())
            .collect()
    }

    pub fn determinant(&self) -> BigInt {
        intlinalg::determinant(&self.gram)
    }

    pub fn is_even(&self) -> bool {
        (0..self.rank()).all(|i| self.gram[i][i].is_even())
    }

    pub fn is_even_unimodular(&self) -> bool {
        self.is_even() && self.determinant().abs().is_one()
    }

    pub fn signature(&self) -> Signature {
        let d = intlinalg::congruence_diagonal(&self.gram);
        Signature {
            pos: d.iter().filter(|x| x.is_positive()).count(),
            neg: d.iter().filter(|x| x.is_negative()).count(),
            zero: d.iter().filter(|x| x.is_zero()).count(),
        }
    }

    pub fn is_negative_definite(&self) -> bool {
        let s = self.signature();
        s.neg == self.rank()
    }

    pub fn is_primitive(&self, v: &LatticeVector) -> Result<bool, LatticeError> {
        self.check(v)?;
        if v.is_zero() {
            return Err(LatticeError::ZeroVector);
        }
        Ok(v.content().is_one())
    }

    /// Saturated basis of `{w : <w,v> = 0}` in Hermite normal form.
    pub fn orthogonal_complement_basis(&self, v: &LatticeVector) -> Result<Complement, LatticeError> {
        if !self.is_primitive(v)? {
            return Err(LatticeError::NotPrimitive);
        }
        Ok(self.complement_of(std::slice::from_ref(v)))
    }

    /// Saturated basis of the vectors orthogonal to every element of `vs`.
    pub fn complement_of(&self, vs: &[LatticeVector]) -> Complement {
        let rows: Vec<Vec<BigInt>> = vs.iter().map(|v| self.dual(v)).collect();
        let basis: Vec<LatticeVector> = intlinalg::kernel_basis(&rows, self.rank())
            .into_iter()
            .map(LatticeVector)
            .collect();
        let gram = self.sublattice_gram(&basis);
        Complement { basis, gram }
    }

    pub fn sublattice_gram(&self, basis: &[LatticeVector]) -> Vec<Vec<BigInt>> {
        basis
            .iter()
            .map(|a| basis.iter().map(|b| self.pair(a, b)).collect())
            .collect()
    }

    pub fn to_json(&self) -> String {
        let gram = self
            .gram
            .iter()
            .map(|r| r.iter().map(|x| x.to_i64().expect("gram entry fits i64")).collect())
            .collect();
        serde_json::to_string(&LatticeJson { spec: self.spec(), gram }).expect("serializable")
    }

    /// Inverse of [`Lattice::to_json`]; the Gram must match the layout string when that parses.
    pub fn from_json(s: &str) -> Result<Self, LatticeError> {
        let j: LatticeJson = serde_json::from_str(s).map_err(|e| LatticeError::Json(e.to_string()))?;
        let gram: Vec<Vec<BigInt>> =
            j.gram.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect();
        match Self::from_spec(&j.spec) {
            Ok(l) if l.gram == gram => Ok(l),
            Ok(_) => Err(LatticeError::Json("gram does not match spec".into())),
            Err(_) => Self::from_gram(gram),
        }
    }
}

/// `U^p + E8(-1)^k` for signature `(p, q)` with `q - p` a nonnegative multiple of 8.
pub fn even_unimodular(p: usize, q: usize) -> Option<Lattice> {
    if q < p || !(q - p).is_multiple_of(8) || p == 0 {
        return None;
    }
    let mut layout = vec![Block::U; p];
    layout.extend(std::iter::repeat_n(Block::E8Minus, (q - p) / 8));
    Some(Lattice::from_layout(layout))
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn vec10() -> impl Strategy<Value = LatticeVector> {
        proptest::collection::vec(-20i64..=20, 10).prop_map(|v| LatticeVector::from_i64(&v))
    }

    proptest! {
        #[test]
        fn pairing_is_symmetric_and_bilinear(a in vec10(), b in vec10(), c in vec10(), k in -5i64..=5) {
            let l = Lattice::from_spec("U + E8(-1)").unwrap();
            prop_assert_eq!(l.pair(&a, &b), l.pair(&b, &a));
            let kb = BigInt::from(k);
            prop_assert_eq!(l.pair(&a.axpy(&kb, &b), &c), l.pair(&a, &c) + &kb * l.pair(&b, &c));
        }

        #[test]
        fn norms_are_even(a in vec10()) {
            let l = Lattice::from_spec("U + E8(-1)").unwrap();
            prop_assert!(l.norm(&a).is_even());
        }

        #[test]
        fn complement_is_orthogonal(a in vec10()) {
            prop_assume!(!a.is_zero());
            let l = Lattice::from_spec("U + E8(-1)").unwrap();
            let c = l.complement_of(std::slice::from_ref(&a));
            prop_assert_eq!(c.basis.len(), 9);
            for b in &c.basis {
                prop_assert!(l.pair(b, &a).is_zero());
            }
        }
    }
}
