//! Constructive transitivity on norm −2 vectors of `M = L + U`.
//!
//! A root `r = v + m e1 + n e` is first driven to `|<r,e>| <= 1` by reflections in
//! roots pairing to 1 with `e`; each step at least halves `|<r,e>|`. A root with
//! `<r,e> = 0` is lifted to pairing 1 by one more such reflection, and a root with
//! pairing 1 is moved onto `e1 - e` by a single transvection.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intlinalg;
use crate::lattice::{Block, Lattice, LatticeError, LatticeVector, RationalVector};
use crate::roots::{reflect_unchecked, Root, RootError, Transvection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error("lattice must be even unimodular with at least two U summands")]
    Unsupported,
    #[error("no U summand starts at coordinate {0}")]
    NoSuchBlock(usize),
    #[error("v lies in M, so no adjustment is needed")]
    IntegralVector,
    #[error("the pairing of v with e is integral")]
    IntegralPairing,
    #[error("step {index}: {reason}")]
    InvalidStep { index: usize, reason: String },
    #[error("reduction stalled at {state}")]
    Stuck { state: String },
}

/// The distinguished hyperbolic plane: `e1` and `e` with `<e1,e> = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameU {
    pub e: LatticeVector,
    pub e1: LatticeVector,
    /// First coordinate of the `U` summand holding the frame.
    pub block: usize,
}

impl FrameU {
    /// Frame on the `U` summand starting at `offset`: `e1` is its first basis vector.
    pub fn from_block(l: &Lattice, offset: usize) -> Result<Self, OrbitError> {
        if !l.u_offsets().contains(&offset) {
            return Err(OrbitError::NoSuchBlock(offset));
        }
        let n = l.rank();
        Ok(Self {
            e: LatticeVector::unit(n, offset + 1),
            e1: LatticeVector::unit(n, offset),
            block: offset,
        })
    }

    /// Frame on the last `U` summand.
    pub fn last(l: &Lattice) -> Result<Self, OrbitError> {
        let off = *l.u_offsets().last().ok_or(OrbitError::Unsupported)?;
        Self::from_block(l, off)
    }

    /// `e1 - e`
    pub fn canonical_root(&self) -> LatticeVector {
        self.e1.sub(&self.e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    Reflect(Root),
    Transvect(Transvection),
    Negate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionWord {
    pub steps: Vec<Generator>,
}

impl ReflectionWord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, g: Generator) {
        self.steps.push(g);
    }

    pub fn extend(&mut self, other: ReflectionWord) {
        self.steps.extend(other.steps);
    }

    /// The word undoing this one.
    pub fn inverse(&self) -> Self {
        let steps = self
            .steps
            .iter()
            .rev()
            .map(|g| match g {
                Generator::Transvect(t) => Generator::Transvect(t.inverse()),
                other => other.clone(),
            })
            .collect();
        Self { steps }
    }
}

fn apply_generator(l: &Lattice, g: &Generator, v: &LatticeVector) -> LatticeVector {
    match g {
        Generator::Reflect(d) => reflect_unchecked(l, d, v),
        Generator::Transvect(t) => t.apply(l, v),
        Generator::Negate => v.neg(),
    }
}

/// Apply the generators left to right, re-validating each one.
pub fn apply_word(l: &Lattice, w: &ReflectionWord, v: &LatticeVector) -> Result<LatticeVector, OrbitError> {
    l.check(v)?;
    let mut cur = v.clone();
    for (index, g) in w.steps.iter().enumerate() {
        let invalid = |reason: String| OrbitError::InvalidStep { index, reason };
        match g {
            Generator::Reflect(d) => {
                Root::new(l, d.vec().clone()).map_err(|e| invalid(e.to_string()))?;
            }
            Generator::Transvect(t) => {
                Transvection::new(l, t.f1.clone(), t.f2.clone(), t.lambda.clone())
                    .map_err(|e| invalid(e.to_string()))?;
            }
            Generator::Negate => {}
        }
        cur = apply_generator(l, g, &cur);
    }
    Ok(cur)
}

fn floor_q(x: &BigRational) -> BigInt {
    x.floor().to_integer()
}

fn round_q(x: &BigRational) -> BigInt {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    floor_q(&(x + half))
}

/// Integral `mu = m e1 + n e` with `|<mu - v, mu - v> - x| < 1`, for `a = <v,e>` non-integral.
fn adjust_in_plane(
    l: &Lattice,
    e1: &LatticeVector,
    e: &LatticeVector,
    v: &RationalVector,
    x: &BigRational,
) -> Result<LatticeVector, OrbitError> {
    if v.is_integral() {
        return Err(OrbitError::IntegralVector);
    }
    let a = l.pair_q(v, &e.to_rational());
    if a.is_integer() {
        return Err(OrbitError::IntegralPairing);
    }
    let b = l.pair_q(v, &e1.to_rational());
    let m = floor_q(&a);
    let d = BigRational::from_integer(m.clone()) - &a;
    // <mu-v,mu-v> = <v,v> - 2ab + 2(m-a)(n-b)
    let base = l.pair_q(v, v) - BigRational::from_integer(BigInt::from(2)) * &a * &b;
    let two = BigRational::from_integer(BigInt::from(2));
    let t = &b + (x - &base) / (&two * &d);
    let n = round_q(&t);
    let mu = e1.scale(&m).axpy(&n, e);
    let diff = mu.to_rational().sub(v);
    let err = l.pair_q(&diff, &diff) - x;
    if err.abs() >= BigRational::one() {
        return Err(OrbitError::Stuck { state: format!("norm adjustment missed by {err}") });
    }
    Ok(mu)
}

/// The norm adjustment: `mu = m e1 + n e` in the frame with
/// `|<mu - v, mu - v> - x| < 1`, where `m = floor(<v,e>)`.
pub fn adjust_norm_mu(
    l: &Lattice,
    frame: &FrameU,
    v: &RationalVector,
    x: &BigRational,
) -> Result<LatticeVector, OrbitError> {
    if v.0.len() != l.rank() {
        return Err(LatticeError::RankMismatch { rank: l.rank(), got: v.0.len() }.into());
    }
    adjust_in_plane(l, &frame.e1, &frame.e, v, x)
}

/// Everything `canonicalize_root` needs about the ambient lattice.
#[derive(Debug, Clone)]
struct Setup<'a> {
    l: &'a Lattice,
    frame: &'a FrameU,
    aux: usize,
}

impl<'a> Setup<'a> {
    fn new(l: &'a Lattice, frame: &'a FrameU) -> Result<Self, OrbitError> {
        if !l.is_even_unimodular() {
            return Err(OrbitError::Unsupported);
        }
        let aux = *l
            .u_offsets()
            .iter()
            .find(|&&o| o != frame.block)
            .ok_or(OrbitError::Unsupported)?;
        if !l.u_offsets().contains(&frame.block) {
            return Err(OrbitError::NoSuchBlock(frame.block));
        }
        Ok(Self { l, frame, aux })
    }

    fn split(&self, r: &LatticeVector) -> (LatticeVector, BigInt, BigInt) {
        let m = r.0[self.frame.block].clone();
        let n = r.0[self.frame.block + 1].clone();
        let mut v = r.clone();
        v.0[self.frame.block] = BigInt::zero();
        v.0[self.frame.block + 1] = BigInt::zero();
        (v, m, n)
    }

    /// The root `lambda + e1 + k e` of pairing 1 with `e`.
    fn lift_root(&self, lambda: &LatticeVector) -> Root {
        let k = -(self.l.norm(lambda) + BigInt::from(2)) / BigInt::from(2);
        let v = lambda.add(&self.frame.e1).axpy(&k, &self.frame.e);
        Root::new(self.l, v).expect("lift has norm -2 by construction")
    }

    /// Integral `mu` in `L` with `|<mu - w, mu - w> - x| < 1`, for `w` in `L (x) Q` not in `L`.
    fn find_mu(&self, w: &RationalVector, x: &BigRational) -> Result<LatticeVector, OrbitError> {
        let n = self.l.rank();
        let f1 = LatticeVector::unit(n, self.aux);
        let f2 = LatticeVector::unit(n, self.aux + 1);
        if !w.0[self.aux].is_integer() {
            return adjust_in_plane(self.l, &f1, &f2, w, x);
        }
        if !w.0[self.aux + 1].is_integer() {
            return adjust_in_plane(self.l, &f2, &f1, w, x);
        }
        // Both plane coordinates are integral: shear a non-integral pairing into f1's slot.
        let gw: Vec<BigRational> = (0..n)
            .map(|j| self.l.pair_q(w, &LatticeVector::unit(n, j).to_rational()))
            .collect();
        let skip = [self.aux, self.aux + 1, self.frame.block, self.frame.block + 1];
        let j = (0..n)
            .find(|j| !skip.contains(j) && !gw[*j].is_integer())
            .ok_or_else(|| OrbitError::Stuck { state: "no non-integral pairing in the complement".into() })?;
        let t = Transvection::new(self.l, f1.clone(), f2.clone(), LatticeVector::unit(n, j))?;
        let w2 = t.apply_q(self.l, w);
        let mu2 = adjust_in_plane(self.l, &f2, &f1, &w2, x)?;
        Ok(t.inverse().apply(self.l, &mu2))
    }

    fn reduce(&self, r: &LatticeVector, trace: &mut Vec<BigInt>) -> Result<(LatticeVector, ReflectionWord), OrbitError> {
        let mut word = ReflectionWord::default();
        let mut cur = r.clone();
        loop {
            let (v, m, _) = self.split(&cur);
            trace.push(m.abs());
            if m.is_zero() {
                break;
            }
            if m.abs().is_one() {
                if m.is_negative() {
                    word.push(Generator::Negate);
                    cur = cur.neg();
                }
                break;
            }
            let mq = BigRational::from_integer(m.clone());
            let w = v.to_rational().scale(&mq.recip());
            if w.is_integral() {
                return Err(OrbitError::Stuck { state: format!("v divisible by m = {m} at {cur}") });
            }
            let x = BigRational::from_integer(BigInt::from(-2)) / (&mq * &mq);
            let mu = self.find_mu(&w, &x)?;
            let delta = self.lift_root(&mu);
            let next = reflect_unchecked(self.l, &delta, &cur);
            let m2 = next.0[self.frame.block].abs();
            if m2 >= m.abs() {
                return Err(OrbitError::Stuck { state: format!("pairing did not decrease at {cur}") });
            }
            word.push(Generator::Reflect(delta));
            cur = next;
        }
        Ok((cur, word))
    }

    fn canonicalize(&self, r: &LatticeVector) -> Result<ReflectionWord, OrbitError> {
        let mut trace = Vec::new();
        let (mut cur, mut word) = self.reduce(r, &mut trace)?;
        let (v, m, n) = self.split(&cur);
        if m.is_zero() {
            // v is primitive of norm -2 in the unimodular L: find lambda0 with <v,lambda0> = 1.
            let dual = self.l.dual(&v);
            let lambda0 = LatticeVector(
                intlinalg::bezout_vector(&dual).ok_or_else(|| OrbitError::Stuck { state: format!("zero L-part at {cur}") })?,
            );
            if !self.l.pair(&v, &lambda0).is_one() {
                return Err(OrbitError::Stuck { state: format!("L-part not primitive at {cur}") });
            }
            let lambda = lambda0.scale(&(BigInt::one() - n));
            let delta = self.lift_root(&lambda);
            cur = reflect_unchecked(self.l, &delta, &cur);
            word.push(Generator::Reflect(delta));
        }
        let (v, m, _) = self.split(&cur);
        if !m.is_one() {
            return Err(OrbitError::Stuck { state: format!("expected pairing 1 at {cur}") });
        }
        if !v.is_zero() {
            let t = Transvection::new(self.l, self.frame.e1.clone(), self.frame.e.clone(), v.neg())?;
            cur = t.apply(self.l, &cur);
            word.push(Generator::Transvect(t));
        }
        if cur != self.frame.canonical_root() {
            return Err(OrbitError::Stuck { state: format!("ended at {cur}") });
        }
        Ok(word)
    }
}

/// Outcome of [`reduce_pairing`], with the measure `|<r,e>|` after each step.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub root: Root,
    pub word: ReflectionWord,
    pub measures: Vec<BigInt>,
}

/// Reflect `r` in roots of pairing 1 with `e` until `|<r,e>| <= 1`, then make the pairing
/// non-negative. The measure strictly decreases at every step (checked).
pub fn reduce_pairing(l: &Lattice, r: &Root, frame: &FrameU) -> Result<Reduction, OrbitError> {
    l.check(r.vec())?;
    let s = Setup::new(l, frame)?;
    let mut measures = Vec::new();
    let (cur, word) = s.reduce(r.vec(), &mut measures)?;
    Ok(Reduction { root: Root::new(l, cur)?, word, measures })
}

/// Word `w` with `apply_word(w, r) = e1 - e`.
pub fn canonicalize_root(l: &Lattice, r: &Root, frame: &FrameU) -> Result<(Root, ReflectionWord), OrbitError> {
    l.check(r.vec())?;
    let s = Setup::new(l, frame)?;
    let word = s.canonicalize(r.vec())?;
    Ok((Root::new(l, frame.canonical_root())?, word))
}

fn small_vector<R: Rng>(l: &Lattice, support: &[usize], rng: &mut R) -> LatticeVector {
    let mut v = LatticeVector::zero(l.rank());
    let k = rng.gen_range(1..=3);
    for _ in 0..k {
        let i = support[rng.gen_range(0..support.len())];
        v.0[i] += BigInt::from(rng.gen_range(-1i64..=1));
    }
    v
}

/// A random generator of `O(M)`: reflections in lifted, block or `U` roots,
/// transvections on a `U` summand, or `-1`.
pub fn random_generator<R: Rng>(l: &Lattice, frame: &FrameU, rng: &mut R) -> Generator {
    let n = l.rank();
    let offsets = l.block_offsets();
    let outside: Vec<usize> = (0..n).filter(|&i| i != frame.block && i != frame.block + 1).collect();
    match rng.gen_range(0..10) {
        0..=3 => {
            let lambda = small_vector(l, &outside, rng);
            let k = -(l.norm(&lambda) + BigInt::from(2)) / BigInt::from(2);
            let v = lambda.add(&frame.e1).axpy(&k, &frame.e);
            Generator::Reflect(Root::new(l, v).expect("lifted root"))
        }
        4..=5 => {
            let (b, o) = &offsets[rng.gen_range(0..offsets.len())];
            let v = match b {
                Block::U => {
                    let mut v = LatticeVector::unit(n, *o);
                    v.0[o + 1] = -BigInt::one();
                    v
                }
                _ => LatticeVector::unit(n, o + rng.gen_range(0..b.rank())),
            };
            match Root::new(l, v) {
                Ok(r) => Generator::Reflect(r),
                Err(_) => Generator::Negate,
            }
        }
        6..=8 => {
            let us = l.u_offsets();
            let o = us[rng.gen_range(0..us.len())];
            let (f1, f2) = if rng.gen_bool(0.5) {
                (LatticeVector::unit(n, o), LatticeVector::unit(n, o + 1))
            } else {
                (LatticeVector::unit(n, o + 1), LatticeVector::unit(n, o))
            };
            let support: Vec<usize> = (0..n).filter(|&i| i != o && i != o + 1).collect();
            let lambda = small_vector(l, &support, rng);
            Generator::Transvect(Transvection::new(l, f1, f2, lambda).expect("valid transvection"))
        }
        _ => Generator::Negate,
    }
}

/// A pseudorandom root: a random word of length at most `max_len` applied to `e1 - e`.
pub fn sample_root<R: Rng>(l: &Lattice, frame: &FrameU, max_len: usize, rng: &mut R) -> (Root, ReflectionWord) {
    let len = rng.gen_range(0..=max_len);
    let mut word = ReflectionWord::default();
    let mut cur = frame.canonical_root();
    for _ in 0..len {
        let g = random_generator(l, frame, rng);
        cur = apply_generator(l, &g, &cur);
        word.push(g);
    }
    (Root::new(l, cur).expect("isometries preserve norm"), word)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn u2() -> (Lattice, FrameU) {
        let l = Lattice::from_spec("U^2").unwrap();
        let f = FrameU::last(&l).unwrap();
        (l, f)
    }

    #[test]
    fn adjust_half_integral() {
        let (l, f) = u2();
        // a = 1/2 on the frame, b = 0, nothing elsewhere
        let v = RationalVector(vec![q(0, 1), q(0, 1), q(1, 2), q(0, 1)]);
        let mu = adjust_norm_mu(&l, &f, &v, &q(0, 1)).unwrap();
        let d = mu.to_rational().sub(&v);
        assert!(l.pair_q(&d, &d).abs() < q(1, 1));
        assert!(mu.0[0].is_zero() && mu.0[1].is_zero());
    }

    #[test]
    fn adjust_steps_by_one() {
        let (l, f) = u2();
        let v = RationalVector(vec![q(1, 3), q(2, 5), q(7, 3), q(-4, 7)]);
        let x = q(-3, 11);
        let mu = adjust_norm_mu(&l, &f, &v, &x).unwrap();
        let a = q(7, 3);
        let m = a.floor();
        let shifted = &x + q(2, 1) * (&a - &m);
        let mu2 = adjust_norm_mu(&l, &f, &v, &shifted).unwrap();
        assert_eq!(mu2.0[2], mu.0[2]);
        assert_eq!((&mu2.0[3] - &mu.0[3]).abs(), BigInt::one());
    }

    #[test]
    fn adjust_rejects_integral() {
        let (l, f) = u2();
        let v = RationalVector(vec![q(1, 1), q(0, 1), q(1, 1), q(0, 1)]);
        assert_eq!(adjust_norm_mu(&l, &f, &v, &q(0, 1)), Err(OrbitError::IntegralVector));
        let v = RationalVector(vec![q(1, 2), q(0, 1), q(1, 1), q(0, 1)]);
        assert_eq!(adjust_norm_mu(&l, &f, &v, &q(0, 1)), Err(OrbitError::IntegralPairing));
    }

    #[test]
    fn canonical_root_is_fixed() {
        let l = Lattice::from_spec("U^2 + E8(-1)").unwrap();
        let f = FrameU::last(&l).unwrap();
        let d = Root::new(&l, f.canonical_root()).unwrap();
        let (c, w) = canonicalize_root(&l, &d, &f).unwrap();
        assert_eq!(c, d);
        assert!(w.is_empty());
        let (_, w) = canonicalize_root(&l, &d.neg(), &f).unwrap();
        assert_eq!(w.steps, vec![Generator::Negate]);
    }

    #[test]
    fn reduce_zero_pairing_is_noop() {
        let l = Lattice::from_spec("U^2 + E8(-1)").unwrap();
        let f = FrameU::last(&l).unwrap();
        let r = Root::new(&l, LatticeVector::unit(12, 4)).unwrap();
        let red = reduce_pairing(&l, &r, &f).unwrap();
        assert_eq!(red.root, r);
        assert!(red.word.is_empty());
    }

    #[test]
    fn random_roots_canonicalize() {
        let l = Lattice::from_spec("U^2 + E8(-1)").unwrap();
        let f = FrameU::last(&l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (r, _) = sample_root(&l, &f, 20, &mut rng);
            let (c, w) = canonicalize_root(&l, &r, &f).unwrap();
            assert_eq!(apply_word(&l, &w, r.vec()).unwrap(), *c.vec());
        }
    }

    #[test]
    fn words_are_isometries() {
        let l = Lattice::from_spec("U^2 + E8(-1)").unwrap();
        let f = FrameU::last(&l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, w) = sample_root(&l, &f, 12, &mut rng);
        let a = LatticeVector::from_i64(&[1, 2, 0, -1, 3, 0, 0, 1, -2, 0, 1, 1]);
        let b = LatticeVector::from_i64(&[0, -1, 2, 2, 1, 1, 0, 0, 0, 3, -1, 0]);
        let wa = apply_word(&l, &w, &a).unwrap();
        let wb = apply_word(&l, &w, &b).unwrap();
        assert_eq!(l.pair(&wa, &wb), l.pair(&a, &b));
        assert_eq!(apply_word(&l, &w.inverse(), &wa).unwrap(), a);
    }

    #[test]
    fn invalid_step_is_reported() {
        let (l, _) = u2();
        let bad = Root::new(&l, LatticeVector::from_i64(&[1, -1, 0, 0])).unwrap();
        let mut w = ReflectionWord::default();
        w.push(Generator::Negate);
        w.push(Generator::Reflect(bad));
        // corrupt the second step by rank
        if let Generator::Reflect(r) = &mut w.steps[1] {
            let mut v = r.vec().clone();
            v.0[0] = BigInt::from(5);
            *r = serde_json::from_value(serde_json::to_value(&v).unwrap()).unwrap();
        }
        match apply_word(&l, &w, &LatticeVector::zero(4)) {
            Err(OrbitError::InvalidStep { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected invalid step, got {other:?}"),
        }
    }
}
