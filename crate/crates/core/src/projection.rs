//! Polarized K3 lattices: the complement of `l = e1 + n e2`, the projection onto the
//! distinguished `U`, reflection descent on the complement norm and wall labels.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Lattice, LatticeError, LatticeVector};
use crate::orbit::{FrameU, Generator, OrbitError, ReflectionWord};
use crate::roots::{enumerate_definite_shell, reflect_unchecked, Root, RootError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error("n must be at least 1, got {0}")]
    BadDegree(i64),
    #[error("wall root; no reduction needed")]
    WallRoot,
    #[error("search budget exhausted at measure {measure}")]
    Budget { measure: BigInt },
    #[error("U is not orthogonal to M")]
    NotOrthogonal,
    #[error("the pair does not span a hyperbolic plane")]
    NotHyperbolic,
    #[error("internal: {0}")]
    Internal(String),
}

const K3_SPEC: &str = "U^3 + E8(-1)^2";

/// `Lambda_K3 = U^3 + E8(-1)^2` with `l = e1 + n e2` and `l* = e1 - n e2` on the first `U`.
#[derive(Debug, Clone)]
pub struct PolarizedFrame {
    pub n: i64,
    pub lattice: Lattice,
    pub e1: LatticeVector,
    pub e2: LatticeVector,
    pub l: LatticeVector,
    pub l_star: LatticeVector,
    /// `Z l* + U^2 + E8(-1)^2`, abstractly.
    pub complement: Lattice,
    /// The 21 basis vectors of the complement inside `Lambda_K3`, `l*` first.
    pub complement_basis: Vec<LatticeVector>,
    e8_roots: Vec<Vec<i64>>,
}

pub fn make_polarized_frame(n: i64) -> Result<PolarizedFrame, ProjectionError> {
    if n < 1 {
        return Err(ProjectionError::BadDegree(n));
    }
    let lattice = Lattice::from_spec(K3_SPEC)?;
    let r = lattice.rank();
    let e1 = LatticeVector::unit(r, 0);
    let e2 = LatticeVector::unit(r, 1);
    let nb = BigInt::from(n);
    let l = e1.axpy(&nb, &e2);
    let l_star = e1.axpy(&-nb, &e2);
    let complement = Lattice::from_spec(&format!("Z({}) + U^2 + E8(-1)^2", -2 * n))?;
    let mut complement_basis = vec![l_star.clone()];
    complement_basis.extend((2..r).map(|i| LatticeVector::unit(r, i)));
    let e8 = Lattice::from_spec("E8(-1)")?;
    let e8_roots = enumerate_definite_shell(&e8, -2)?
        .into_iter()
        .map(|v| v.to_i64().expect("small"))
        .collect();
    let f = PolarizedFrame { n, lattice, e1, e2, l, l_star, complement, complement_basis, e8_roots };
    let two_n = BigInt::from(2 * n);
    let checks = [
        f.lattice.norm(&f.l) == two_n,
        f.lattice.norm(&f.l_star) == -two_n.clone(),
        f.lattice.pair(&f.l, &f.l_star).is_zero(),
        f.complement_basis.iter().all(|b| f.lattice.pair(b, &f.l).is_zero()),
        f.lattice.sublattice_gram(&f.complement_basis) == f.complement.gram(),
    ];
    if checks.iter().any(|ok| !ok) {
        return Err(ProjectionError::Internal("polarized frame invariants".into()));
    }
    Ok(f)
}

/// Coordinates of `delta` relative to the polarization: `2n delta = k l + c l* + 2n mu`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MuParts {
    pub m1: BigInt,
    pub m2: BigInt,
    /// `<delta,l> = n m1 + m2`
    pub k: BigInt,
    /// `n m1 - m2`
    pub c: BigInt,
    /// The part of `delta` in `U^2 + E8(-1)^2`.
    pub mu: LatticeVector,
    pub mu_norm: BigInt,
}

impl PolarizedFrame {
    pub fn parts(&self, delta: &LatticeVector) -> Result<MuParts, ProjectionError> {
        self.lattice.check(delta)?;
        let m1 = delta.0[0].clone();
        let m2 = delta.0[1].clone();
        let nb = BigInt::from(self.n);
        let k = &nb * &m1 + &m2;
        let c = &nb * &m1 - &m2;
        let mut mu = delta.clone();
        mu.0[0] = BigInt::zero();
        mu.0[1] = BigInt::zero();
        let mu_norm = self.lattice.norm(&mu);
        Ok(MuParts { m1, m2, k, c, mu, mu_norm })
    }

    /// `|c^2 - k^2 - 4n| = 2n |<mu,mu>|` for a root.
    fn measure(&self, k: &BigInt, c: &BigInt) -> BigInt {
        (c * c - k * k - BigInt::from(4 * self.n)).abs()
    }
}

/// `(n m1 + m2, n m1 - m2)` with `Pr_U(2n delta) = (n m1 + m2) l + (n m1 - m2) l*`.
pub fn project_u(frame: &PolarizedFrame, delta: &LatticeVector) -> Result<(BigInt, BigInt), ProjectionError> {
    let p = frame.parts(delta)?;
    Ok((p.k, p.c))
}

/// Result of [`minimize_mu`]: `word` maps the input to `root`; `measures` holds
/// `2n |<mu,mu>|` before the first and after each reflection.
#[derive(Debug, Clone)]
pub struct MuReduction {
    pub root: Root,
    pub word: ReflectionWord,
    pub measures: Vec<BigInt>,
    pub mu_norm: BigInt,
}

impl MuReduction {
    pub fn reached_zero(&self) -> bool {
        self.mu_norm.is_zero()
    }
}

const MAX_STEPS: usize = 64;

/// Reflect `delta` in roots `l* + mu1` (orthogonal to `l`) while `|<mu,mu>|` strictly
/// decreases. The auxiliary `mu1 = +-(x + a y + r) + m z` has `x, y` a hyperbolic pair of one
/// `U` summand, `z` isotropic in the other, `r` zero or an `E8(-1)` root, and `m` solving
/// for the required pairing. Stops at zero or when no candidate decreases the measure.
pub fn minimize_mu(frame: &PolarizedFrame, delta: &Root) -> Result<MuReduction, ProjectionError> {
    let l = &frame.lattice;
    l.check(delta.vec())?;
    if l.pair(delta.vec(), &frame.l).is_zero() {
        return Err(ProjectionError::WallRoot);
    }
    let two_n = BigInt::from(2 * frame.n);
    let mut cur = delta.vec().clone();
    let mut word = ReflectionWord::default();
    let p0 = frame.parts(&cur)?;
    let mut measures = vec![frame.measure(&p0.k, &p0.c)];
    for step in 0..=MAX_STEPS {
        let parts = frame.parts(&cur)?;
        let current = frame.measure(&parts.k, &parts.c);
        if current.is_zero() {
            break;
        }
        if step == MAX_STEPS {
            return Err(ProjectionError::Budget { measure: current });
        }
        let Some(delta1) = next_reflection(frame, &parts, &current)? else { break };
        let next = reflect_unchecked(l, &delta1, &cur);
        let np = frame.parts(&next)?;
        let m = frame.measure(&np.k, &np.c);
        if np.k != parts.k || m >= current || (&np.c - &parts.c) % &two_n != BigInt::zero() {
            return Err(ProjectionError::Internal("reflection did not decrease the measure".into()));
        }
        measures.push(m);
        word.push(Generator::Reflect(delta1));
        cur = next;
    }
    let last = frame.parts(&cur)?;
    Ok(MuReduction { root: Root::new(l, cur)?, word, measures, mu_norm: last.mu_norm })
}

fn next_reflection(frame: &PolarizedFrame, parts: &MuParts, current: &BigInt) -> Result<Option<Root>, ProjectionError> {
    let two_n = BigInt::from(2 * frame.n);
    let big_k = &parts.k * &parts.k + BigInt::from(4 * frame.n);
    let s = big_k.sqrt() + &two_n + BigInt::from(1);
    // c' = c + 2n t with |c'| <= s
    let t_lo = -(&s + &parts.c) / &two_n - 1;
    let t_hi = (&s - &parts.c) / &two_n + 1;
    let mut targets: Vec<(BigInt, BigInt)> = Vec::new();
    let mut t = t_lo;
    while t <= t_hi {
        let cp = &parts.c + &two_n * &t;
        let m = frame.measure(&parts.k, &cp);
        if &m < current {
            targets.push((m, cp));
        }
        t += 1;
    }
    targets.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.abs().cmp(&b.1.abs())).then(a.1.cmp(&b.1)));
    for (_, cp) in targets {
        let p = (&cp - &parts.c) / &two_n + &parts.c;
        if let Some(mu1) = find_mu1(frame, &parts.mu, &p) {
            let d = frame.l_star.add(&mu1);
            return Ok(Some(Root::new(&frame.lattice, d)?));
        }
    }
    Ok(None)
}

/// `mu1` in `U^2 + E8(-1)^2` with `<mu1,mu1> = 2n - 2` and `<mu,mu1> = p`.
fn find_mu1(frame: &PolarizedFrame, mu: &LatticeVector, p: &BigInt) -> Option<LatticeVector> {
    let lat = &frame.lattice;
    let rank = lat.rank();
    let dual = lat.dual(mu);
    let blocks = [(2usize, 3usize), (4, 5)];
    let e8_offsets = [6usize, 14];
    let n = frame.n;
    let mut rs: Vec<Option<(usize, &Vec<i64>)>> = vec![None];
    for off in e8_offsets {
        rs.extend(frame.e8_roots.iter().map(|r| Some((off, r))));
    }
    for (bi, &(a0, a1)) in blocks.iter().enumerate() {
        let (b0, b1) = blocks[1 - bi];
        for (x, y) in [(a0, a1), (a1, a0)] {
            for r in &rs {
                let a = if r.is_some() { n } else { n - 1 };
                let mut b = LatticeVector::unit(rank, x).axpy(&BigInt::from(a), &LatticeVector::unit(rank, y));
                if let Some((off, root)) = r {
                    for (i, &v) in root.iter().enumerate() {
                        b.0[off + i] += v;
                    }
                }
                let mb: BigInt = b.0.iter().zip(&dual).filter(|(v, _)| !v.is_zero()).map(|(v, d)| v * d).sum();
                for z in [b0, b1] {
                    let mz = &dual[z];
                    for sigma in [1i64, -1] {
                        let rest = p - &mb * sigma;
                        let m = if mz.is_zero() {
                            if !rest.is_zero() {
                                continue;
                            }
                            BigInt::zero()
                        } else {
                            if !(&rest % mz).is_zero() {
                                continue;
                            }
                            &rest / mz
                        };
                        let mut v = b.scale(&BigInt::from(sigma));
                        v.0[z] += &m;
                        return Some(v);
                    }
                }
            }
        }
    }
    None
}

/// The two components of the projected discriminant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WallLabel {
    /// A root orthogonal to `l`, i.e. a root of the complement.
    RootWall { delta: Root },
    LStarWall,
}

impl WallLabel {
    pub fn kind(&self) -> &'static str {
        match self {
            WallLabel::RootWall { .. } => "root",
            WallLabel::LStarWall => "lstar",
        }
    }
}

/// Evidence attached to an `l*` label: the descent word and whether the reduced root's
/// projection to the complement of `l` is a multiple of `l*`.
#[derive(Debug, Clone)]
pub struct WallCertificate {
    pub reduction: MuReduction,
    pub proportional: bool,
}

#[derive(Debug, Clone)]
pub struct WallClass {
    pub label: WallLabel,
    pub certificate: Option<WallCertificate>,
}

pub fn classify_wall(frame: &PolarizedFrame, delta: &Root) -> Result<WallClass, ProjectionError> {
    frame.lattice.check(delta.vec())?;
    if frame.lattice.pair(delta.vec(), &frame.l).is_zero() {
        return Ok(WallClass { label: WallLabel::RootWall { delta: delta.clone() }, certificate: None });
    }
    let reduction = minimize_mu(frame, delta)?;
    let proportional = frame.parts(reduction.root.vec())?.mu.is_zero();
    Ok(WallClass { label: WallLabel::LStarWall, certificate: Some(WallCertificate { reduction, proportional }) })
}

/// A root orthogonal to `l` (so its reflection fixes `l`), drawn from the `U^2 + E8(-1)^2` part
/// or of the form `l* + mu1`.
pub fn random_stabilizer_root<R: Rng>(frame: &PolarizedFrame, rng: &mut R) -> Root {
    let sub = Lattice::from_spec("U^2 + E8(-1)^2").expect("spec parses");
    let sub_frame = FrameU::last(&sub).expect("has U");
    let (r, _) = crate::orbit::sample_root(&sub, &sub_frame, 4, rng);
    let mut v = LatticeVector::zero(frame.lattice.rank());
    for (i, x) in r.vec().0.iter().enumerate() {
        v.0[i + 2] = x.clone();
    }
    if frame.n > 1 && rng.gen_bool(0.3) {
        // l* + (g1 + (n - 1) g2)
        let mut w = frame.l_star.clone();
        w.0[2] += 1;
        w.0[3] += frame.n - 1;
        return Root::new(&frame.lattice, w).expect("norm -2");
    }
    Root::new(&frame.lattice, v).expect("norm -2")
}

#[derive(Debug, Clone)]
pub struct MirrorPicard {
    pub m: Lattice,
    /// Basis of `M1 = U^perp` inside `M^perp`.
    pub m1_basis: Vec<LatticeVector>,
    pub m1: Lattice,
    /// `T_Y = M + U`.
    pub t_y: Lattice,
}

/// `M1` and `T_Y` for a sublattice `M` (given by a basis) and a hyperbolic pair in `M^perp`.
pub fn mirror_picard(
    lattice: &Lattice,
    m_basis: &[LatticeVector],
    u_embed: (&LatticeVector, &LatticeVector),
) -> Result<MirrorPicard, ProjectionError> {
    let (u1, u2) = u_embed;
    for v in m_basis.iter().chain([u1, u2]) {
        lattice.check(v)?;
    }
    if m_basis.iter().any(|b| !lattice.pair(b, u1).is_zero() || !lattice.pair(b, u2).is_zero()) {
        return Err(ProjectionError::NotOrthogonal);
    }
    if !lattice.norm(u1).is_zero() || !lattice.norm(u2).is_zero() || lattice.pair(u1, u2).to_i64() != Some(1) {
        return Err(ProjectionError::NotHyperbolic);
    }
    let m = Lattice::from_gram(lattice.sublattice_gram(m_basis))?;
    let mut all = m_basis.to_vec();
    all.push(u1.clone());
    all.push(u2.clone());
    let comp = lattice.complement_of(&all);
    let m1 = Lattice::from_gram(comp.gram)?;
    let t_y = m.direct_sum(&Lattice::from_spec("U")?);
    Ok(MirrorPicard { m, m1_basis: comp.basis, m1, t_y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(pairs: &[(usize, i64)]) -> LatticeVector {
        let mut x = LatticeVector::zero(22);
        for &(i, c) in pairs {
            x.0[i] = c.into();
        }
        x
    }

    #[test]
    fn frame_invariants() {
        let f = make_polarized_frame(1).unwrap();
        assert_eq!(f.lattice.norm(&f.l), BigInt::from(2));
        assert_eq!(f.lattice.norm(&f.l_star), BigInt::from(-2));
        let f = make_polarized_frame(3).unwrap();
        assert_eq!(f.lattice.norm(&f.l_star), BigInt::from(-6));
        assert_eq!(f.complement_basis.len(), 21);
        assert!(matches!(make_polarized_frame(0), Err(ProjectionError::BadDegree(0))));
    }

    #[test]
    fn projection_examples() {
        let f = make_polarized_frame(1).unwrap();
        assert_eq!(project_u(&f, &v(&[(0, 1)])).unwrap(), (1.into(), 1.into()));
        assert_eq!(project_u(&f, &v(&[(5, 3)])).unwrap(), (0.into(), 0.into()));
        let (a, b) = project_u(&f, &v(&[(0, 1), (1, 2)])).unwrap();
        assert_eq!((a.clone(), b.clone()), (3.into(), (-1).into()));
        let lhs = f.l.scale(&a).add(&f.l_star.scale(&b));
        assert_eq!(lhs, v(&[(0, 2), (1, 4)]));
    }

    #[test]
    fn wall_roots() {
        let f = make_polarized_frame(1).unwrap();
        let e8 = Root::new(&f.lattice, v(&[(6, 1)])).unwrap();
        assert_eq!(classify_wall(&f, &e8).unwrap().label.kind(), "root");
        let d = Root::new(&f.lattice, v(&[(0, 1), (1, -1)])).unwrap();
        assert_eq!(classify_wall(&f, &d).unwrap().label.kind(), "root");
        assert_eq!(minimize_mu(&f, &d).unwrap_err(), ProjectionError::WallRoot);
    }

    #[test]
    fn lstar_wall_with_pairing_one() {
        // n = 2, delta = e1 - e2: <delta,l> = 1, already proportional to l*
        let f = make_polarized_frame(2).unwrap();
        let d = Root::new(&f.lattice, v(&[(0, 1), (1, -1)])).unwrap();
        let c = classify_wall(&f, &d).unwrap();
        assert_eq!(c.label, WallLabel::LStarWall);
        let cert = c.certificate.unwrap();
        assert!(cert.proportional && cert.reduction.word.is_empty());
    }

    #[test]
    fn descent_is_strict_and_replays() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=3 {
            let f = make_polarized_frame(n).unwrap();
            let fr = FrameU::last(&f.lattice).unwrap();
            let mut done = 0;
            while done < 10 {
                let (r, _) = crate::orbit::sample_root(&f.lattice, &fr, 6, &mut rng);
                if f.lattice.pair(r.vec(), &f.l).is_zero() {
                    continue;
                }
                done += 1;
                let red = minimize_mu(&f, &r).unwrap();
                assert!(red.measures.windows(2).all(|w| w[1] < w[0]));
                let replay = crate::orbit::apply_word(&f.lattice, &red.word, r.vec()).unwrap();
                assert_eq!(&replay, red.root.vec());
                assert_eq!(f.lattice.pair(&replay, &f.l), f.lattice.pair(r.vec(), &f.l));
            }
        }
    }

    #[test]
    fn reaches_zero_when_pairing_is_n_minus_one() {
        // k = n - 1 admits mu-norm zero; start from a conjugate of e1 - e2 with extra mu
        let f = make_polarized_frame(3).unwrap();
        let start = v(&[(0, 1), (1, -1)]);
        let d1 = Root::new(&f.lattice, f.l_star.add(&v(&[(2, 1), (3, 2), (4, 1)]))).unwrap();
        let moved = reflect_unchecked(&f.lattice, &d1, &start);
        let r = Root::new(&f.lattice, moved).unwrap();
        let red = minimize_mu(&f, &r).unwrap();
        assert!(red.reached_zero());
    }

    #[test]
    fn stabilizer_roots_fix_l() {
        let f = make_polarized_frame(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let r = random_stabilizer_root(&f, &mut rng);
            assert!(f.lattice.pair(r.vec(), &f.l).is_zero());
        }
    }

    #[test]
    fn mirror_of_u_plus_e8() {
        let l = Lattice::from_spec(K3_SPEC).unwrap();
        let mut m_basis = vec![LatticeVector::unit(22, 0), LatticeVector::unit(22, 1)];
        m_basis.extend((6..14).map(|i| LatticeVector::unit(22, i)));
        let u1 = LatticeVector::unit(22, 2);
        let u2 = LatticeVector::unit(22, 3);
        let mp = mirror_picard(&l, &m_basis, (&u1, &u2)).unwrap();
        assert_eq!(mp.m1.rank() + 2 + mp.m.rank(), 22);
        assert!(mp.m1.is_even_unimodular());
        let s = mp.m1.signature();
        assert_eq!((s.pos, s.neg), (1, 9));
        assert_eq!(mp.t_y.rank(), 12);
        let bad = LatticeVector::unit(22, 1);
        assert_eq!(mirror_picard(&l, &m_basis, (&bad, &u2)).unwrap_err(), ProjectionError::NotOrthogonal);
    }
}
