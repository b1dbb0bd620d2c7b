//! Norm −2 vectors: reflections, Eichler transvections, enumeration at fixed
//! pairing with a polarization, counting series and the bounded chamber test.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Block, Lattice, LatticeError, LatticeVector, RationalVector};
use crate::shell::ShellEnumerator;

/// Default cap on the absolute norm of a definite shell.
pub const DEFAULT_SHELL_CAP: i64 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("vector has norm {0}, not -2")]
    NotARoot(BigInt),
    #[error("transvection frame: {0}")]
    BadFrame(&'static str),
    #[error("lattice must be U followed by negative definite blocks")]
    BadShape,
    #[error("lattice is not negative definite")]
    NotNegativeDefinite,
    #[error("shell norm must be non-positive, got {0}")]
    PositiveNorm(i64),
    #[error("polarization must be s*e1 + t*e2 on the first U with s, t >= 1")]
    BadPolarization,
    #[error("shell of norm {norm} exceeds the cap {cap}")]
    ShellTooLarge { norm: i64, cap: i64 },
    #[error("chamber test needs a vector of positive norm")]
    NotPositive,
    #[error("coordinates exceed machine range")]
    Overflow,
}

/// A lattice vector of norm −2.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Root(LatticeVector);

impl Root {
    pub fn new(l: &Lattice, v: LatticeVector) -> Result<Self, RootError> {
        l.check(&v)?;
        let n = l.norm(&v);
        if n != BigInt::from(-2) {
            return Err(RootError::NotARoot(n));
        }
        Ok(Self(v))
    }

    pub fn vec(&self) -> &LatticeVector {
        &self.0
    }

    pub fn into_vec(self) -> LatticeVector {
        self.0
    }

    pub fn neg(&self) -> Root {
        Root(self.0.neg())
    }
}

/// `s_delta(v) = v + <v,delta> delta`
pub fn reflect(l: &Lattice, delta: &Root, v: &LatticeVector) -> Result<LatticeVector, RootError> {
    l.check(v)?;
    l.check(delta.vec())?;
    Ok(reflect_unchecked(l, delta, v))
}

pub(crate) fn reflect_unchecked(l: &Lattice, delta: &Root, v: &LatticeVector) -> LatticeVector {
    let c = l.pair(v, delta.vec());
    if c.is_zero() {
        return v.clone();
    }
    v.axpy(&c, delta.vec())
}

/// The map `g_lambda` fixing `f2`, sending `f1` to `f1 + lambda - <lambda,lambda>/2 f2`
/// and `beta` to `beta - <beta,lambda> f2` on the complement of `{f1, f2}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transvection {
    pub f1: LatticeVector,
    pub f2: LatticeVector,
    pub lambda: LatticeVector,
}

impl Transvection {
    pub fn new(
        l: &Lattice,
        f1: LatticeVector,
        f2: LatticeVector,
        lambda: LatticeVector,
    ) -> Result<Self, RootError> {
        for v in [&f1, &f2, &lambda] {
            l.check(v)?;
        }
        if !l.norm(&f1).is_zero() {
            return Err(RootError::BadFrame("f1 is not isotropic"));
        }
        if !l.norm(&f2).is_zero() {
            return Err(RootError::BadFrame("f2 is not isotropic"));
        }
        if !l.pair(&f1, &f2).is_one() {
            return Err(RootError::BadFrame("<f1,f2> is not 1"));
        }
        if !l.pair(&lambda, &f1).is_zero() || !l.pair(&lambda, &f2).is_zero() {
            return Err(RootError::BadFrame("lambda is not orthogonal to f1 and f2"));
        }
        if l.norm(&lambda).is_odd() {
            return Err(RootError::BadFrame("lambda has odd norm"));
        }
        Ok(Self { f1, f2, lambda })
    }

    /// The inverse map `g_{-lambda}`.
    pub fn inverse(&self) -> Self {
        Self { f1: self.f1.clone(), f2: self.f2.clone(), lambda: self.lambda.neg() }
    }

    /// `alpha + <alpha,f2> lambda - (<alpha,f2><lambda,lambda>/2 + <alpha,lambda>) f2`
    pub fn apply(&self, l: &Lattice, alpha: &LatticeVector) -> LatticeVector {
        let a = l.pair(alpha, &self.f2);
        let half: BigInt = l.norm(&self.lambda) / 2;
        let c: BigInt = &a * half + l.pair(alpha, &self.lambda);
        alpha.axpy(&a, &self.lambda).axpy(&(-c), &self.f2)
    }

    pub fn apply_q(&self, l: &Lattice, alpha: &RationalVector) -> RationalVector {
        let lam = self.lambda.to_rational();
        let f2 = self.f2.to_rational();
        let a = l.pair_q(alpha, &f2);
        let half = BigRational::from_integer(l.norm(&self.lambda) / 2);
        let c = &a * half + l.pair_q(alpha, &lam);
        alpha.axpy(&a, &lam).axpy(&(-c), &f2)
    }
}

/// Image of `alpha` under the transvection built from `(f1, f2, lambda)`.
pub fn transvection(
    l: &Lattice,
    f1: &LatticeVector,
    f2: &LatticeVector,
    lambda: &LatticeVector,
    alpha: &LatticeVector,
) -> Result<LatticeVector, RootError> {
    let t = Transvection::new(l, f1.clone(), f2.clone(), lambda.clone())?;
    l.check(alpha)?;
    Ok(t.apply(l, alpha))
}

fn to_i64_matrix(g: &[Vec<BigInt>]) -> Result<Vec<Vec<i64>>, RootError> {
    g.iter()
        .map(|r| r.iter().map(|x| x.to_i64().ok_or(RootError::Overflow)).collect())
        .collect()
}

/// All `v` in a negative definite lattice with `<v,v> = norm`, sorted lexicographically.
pub fn enumerate_definite_shell(n: &Lattice, norm: i64) -> Result<Vec<LatticeVector>, RootError> {
    if norm > 0 {
        return Err(RootError::PositiveNorm(norm));
    }
    let q: Vec<Vec<i64>> = to_i64_matrix(n.gram())?
        .into_iter()
        .map(|r| r.into_iter().map(|x| -x).collect())
        .collect();
    let e = ShellEnumerator::new(&q).ok_or(RootError::NotNegativeDefinite)?;
    Ok(e.shell(-norm).into_iter().map(|x| LatticeVector::from_i64(&x)).collect())
}

/// Enumeration context for `L = U + N` with `N` negative definite and a
/// polarization `l = s e1 + t e2` on the first `U`.
#[derive(Debug, Clone)]
pub struct PairingEnumerator {
    rank: usize,
    s: i64,
    t: i64,
    shell: ShellEnumerator,
    cap: i64,
}

impl PairingEnumerator {
    pub fn new(l: &Lattice, pol: &LatticeVector, cap: i64) -> Result<Self, RootError> {
        l.check(pol)?;
        let layout = l.layout();
        if layout.first() != Some(&Block::U) {
            return Err(RootError::BadShape);
        }
        let definite_tail = layout[1..].iter().all(|b| match b {
            Block::E8Minus => true,
            Block::ZSpan(d) => *d < 0,
            _ => false,
        });
        if !definite_tail {
            return Err(RootError::BadShape);
        }
        if pol.0[2..].iter().any(|x| !x.is_zero()) {
            return Err(RootError::BadPolarization);
        }
        let s = pol.0[0].to_i64().ok_or(RootError::Overflow)?;
        let t = pol.0[1].to_i64().ok_or(RootError::Overflow)?;
        if s < 1 || t < 1 {
            return Err(RootError::BadPolarization);
        }
        let n = l.rank() - 2;
        let g = to_i64_matrix(l.gram())?;
        let q: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| -g[i + 2][j + 2]).collect()).collect();
        let shell = if n == 0 {
            ShellEnumerator::new(&[]).expect("empty form")
        } else {
            ShellEnumerator::new(&q).ok_or(RootError::NotNegativeDefinite)?
        };
        Ok(Self { rank: l.rank(), s, t, shell, cap })
    }

    /// Splittings `(a, b)` of `a t + b s = n` with `ab >= -1`, in increasing `a`.
    pub fn splittings(&self, n: i64) -> Vec<(i64, i64)> {
        let amax = n.abs() / self.t + 1;
        (-amax..=amax)
            .filter_map(|a| {
                let r = n - a * self.t;
                (r % self.s == 0).then(|| (a, r / self.s))
            })
            .filter(|&(a, b)| a * b >= -1)
            .collect()
    }

    /// Visit every root `a e1 + b e2 + v` of pairing `n`, ordered by `(a, b, v)`.
    pub fn for_each(&self, n: i64, visit: &mut dyn FnMut(&[i64])) -> Result<(), RootError> {
        let splits = self.splittings(n);
        for &(a, b) in &splits {
            let norm = -2 - 2 * a * b;
            if -norm > self.cap {
                return Err(RootError::ShellTooLarge { norm, cap: self.cap });
            }
        }
        let mut buf = vec![0i64; self.rank];
        for (a, b) in splits {
            buf[0] = a;
            buf[1] = b;
            let target = 2 + 2 * a * b;
            if self.rank == 2 {
                if target == 0 {
                    visit(&buf);
                }
                continue;
            }
            for v in self.shell.shell(target) {
                buf[2..].copy_from_slice(&v);
                visit(&buf);
            }
        }
        Ok(())
    }

    pub fn count(&self, n: i64) -> Result<u64, RootError> {
        let mut total = 0u64;
        for (a, b) in self.splittings(n) {
            let norm = -2 - 2 * a * b;
            if -norm > self.cap {
                return Err(RootError::ShellTooLarge { norm, cap: self.cap });
            }
            total += if self.rank == 2 {
                u64::from(norm == 0)
            } else {
                self.shell.count_at(-norm)
            };
        }
        Ok(total)
    }
}

/// The finite set `{delta : <delta,delta> = -2, <delta,l> = n}` in lexicographic order.
pub fn enumerate_roots_with_pairing(
    l: &Lattice,
    pol: &LatticeVector,
    n: i64,
) -> Result<Vec<Root>, RootError> {
    enumerate_roots_with_pairing_capped(l, pol, n, DEFAULT_SHELL_CAP)
}

pub fn enumerate_roots_with_pairing_capped(
    l: &Lattice,
    pol: &LatticeVector,
    n: i64,
    cap: i64,
) -> Result<Vec<Root>, RootError> {
    let e = PairingEnumerator::new(l, pol, cap)?;
    let mut out = Vec::new();
    e.for_each(n, &mut |x| out.push(Root(LatticeVector::from_i64(x))))?;
    Ok(out)
}

/// Root counts `a_n` for `1 <= n <= n_max`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountingSeries {
    pub polarization: LatticeVector,
    pub counts: BTreeMap<u64, u64>,
    pub n_max: u64,
}

impl CountingSeries {
    /// A series given directly by its coefficients.
    pub fn from_counts(counts: BTreeMap<u64, u64>) -> Self {
        let n_max = counts.keys().next_back().copied().unwrap_or(0);
        Self { polarization: LatticeVector::zero(0), counts, n_max }
    }

    pub fn get(&self, n: u64) -> u64 {
        self.counts.get(&n).copied().unwrap_or(0)
    }
}

pub fn counting_series(l: &Lattice, pol: &LatticeVector, n_max: u64) -> Result<CountingSeries, RootError> {
    counting_series_capped(l, pol, n_max, DEFAULT_SHELL_CAP)
}

pub fn counting_series_capped(
    l: &Lattice,
    pol: &LatticeVector,
    n_max: u64,
    cap: i64,
) -> Result<CountingSeries, RootError> {
    l.check(pol)?;
    if !l.norm(pol).is_positive() {
        return Err(RootError::BadPolarization);
    }
    let e = PairingEnumerator::new(l, pol, cap)?;
    let mut counts = BTreeMap::new();
    for n in 1..=n_max {
        counts.insert(n, e.count(n as i64)?);
    }
    Ok(CountingSeries { polarization: pol.clone(), counts, n_max })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Chamber {
    Inside,
    /// First wall with `<v,delta> <= 0`; `boundary` when the pairing is exactly zero.
    Violated { wall: Root, boundary: bool },
}

/// `v` lies in the chamber cut out by `walls` when it pairs positively with every one.
/// Only the supplied walls are checked, so this approximates the Kähler cone to the
/// depth at which `walls` was enumerated.
pub fn chamber_test(l: &Lattice, v: &RationalVector, walls: &[Root]) -> Result<Chamber, RootError> {
    if v.0.len() != l.rank() {
        return Err(LatticeError::RankMismatch { rank: l.rank(), got: v.0.len() }.into());
    }
    if !l.pair_q(v, v).is_positive() {
        return Err(RootError::NotPositive);
    }
    for w in walls {
        let p = l.pair_q(v, &w.vec().to_rational());
        if !p.is_positive() {
            return Ok(Chamber::Violated { wall: w.clone(), boundary: p.is_zero() });
        }
    }
    Ok(Chamber::Inside)
}

/// Walls `delta` with `1 <= <delta,l> <= n_max`.
pub fn walls_to_depth(l: &Lattice, pol: &LatticeVector, n_max: u64) -> Result<Vec<Root>, RootError> {
    let mut out = Vec::new();
    for n in 1..=n_max {
        out.extend(enumerate_roots_with_pairing(l, pol, n as i64)?);
    }
    Ok(out)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn vec10() -> impl Strategy<Value = LatticeVector> {
        proptest::collection::vec(-9i64..=9, 10).prop_map(|v| LatticeVector::from_i64(&v))
    }

    fn lattice() -> Lattice {
        Lattice::from_spec("U + E8(-1)").unwrap()
    }

    proptest! {
        #[test]
        fn reflection_is_an_involutive_isometry(v in vec10(), w in vec10(), i in 2usize..10) {
            let l = lattice();
            let d = Root::new(&l, LatticeVector::unit(10, i)).unwrap();
            let rv = reflect(&l, &d, &v).unwrap();
            let rw = reflect(&l, &d, &w).unwrap();
            prop_assert_eq!(l.pair(&rv, &rw), l.pair(&v, &w));
            prop_assert_eq!(reflect(&l, &d, &rv).unwrap(), v);
        }

        #[test]
        fn transvection_is_an_isometry(v in vec10(), w in vec10(), lam in proptest::collection::vec(-3i64..=3, 8)) {
            let l = lattice();
            let mut lambda = vec![0i64, 0];
            lambda.extend(lam);
            let t = Transvection::new(
                &l,
                LatticeVector::unit(10, 0),
                LatticeVector::unit(10, 1),
                LatticeVector::from_i64(&lambda),
            ).unwrap();
            let (tv, tw) = (t.apply(&l, &v), t.apply(&l, &w));
            prop_assert_eq!(l.pair(&tv, &tw), l.pair(&v, &w));
            prop_assert_eq!(t.inverse().apply(&l, &tv), v);
        }
    }
}
