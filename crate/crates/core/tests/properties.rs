use std::collections::BTreeSet;
use std::sync::Arc;

use k3lattice::borcherds::TruncationConfig;
use k3lattice::grassmannian::{FlatPoint, Frame};
use k3lattice::orbit::{apply_word, canonicalize_root, sample_root, FrameU, ReflectionWord};
use k3lattice::projection::{classify_wall, make_polarized_frame, mirror_picard, project_u, random_stabilizer_root};
use k3lattice::roots::{counting_series, enumerate_roots_with_pairing, reflect, CountingSeries, Root};
use k3lattice::{Lattice, LatticeVector};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ints(v: &LatticeVector) -> Vec<i64> {
    v.to_i64().expect("small coordinates")
}

#[test]
fn sublattice_roots_are_the_full_roots_inside_it() {
    let small = Lattice::from_spec("U + E8(-1)").unwrap();
    let big = Lattice::from_spec("U + E8(-1)^2").unwrap();
    let l_small = LatticeVector::from_i64(&[1, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
    let mut l_big = vec![0i64; 18];
    l_big[..2].copy_from_slice(&[1, 1]);
    let l_big = LatticeVector::from_i64(&l_big);
    for n in 1..=2 {
        let embedded: BTreeSet<Vec<i64>> = enumerate_roots_with_pairing(&small, &l_small, n)
            .unwrap()
            .iter()
            .map(|r| {
                let mut x = ints(r.vec());
                x.resize(18, 0);
                x
            })
            .collect();
        let inside: BTreeSet<Vec<i64>> = enumerate_roots_with_pairing(&big, &l_big, n)
            .unwrap()
            .iter()
            .map(|r| ints(r.vec()))
            .filter(|x| x[10..].iter().all(|&c| c == 0))
            .collect();
        assert!(!embedded.is_empty());
        assert_eq!(embedded, inside, "n = {n}");
    }
}

#[test]
fn counting_series_matches_enumeration() {
    let l = Lattice::from_spec("U + E8(-1)").unwrap();
    let pol = LatticeVector::from_i64(&[1, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
    let cs = counting_series(&l, &pol, 2).unwrap();
    for n in 1..=2u64 {
        let roots = enumerate_roots_with_pairing(&l, &pol, n as i64).unwrap();
        assert_eq!(cs.get(n), roots.len() as u64);
        for r in &roots {
            assert_eq!(l.norm(r.vec()), BigInt::from(-2));
            assert_eq!(l.pair(r.vec(), &pol), BigInt::from(n));
        }
    }
}

#[test]
fn canonical_words_replay() {
    let l = Lattice::from_spec("U^3 + E8(-1)^2").unwrap();
    let frame = FrameU::last(&l).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let (r, _) = sample_root(&l, &frame, 6, &mut rng);
        let (can, word) = canonicalize_root(&l, &r, &frame).unwrap();
        assert_eq!(can.vec(), &frame.canonical_root());
        assert_eq!(&apply_word(&l, &word, r.vec()).unwrap(), can.vec());
        let back = apply_word(&l, &word.inverse(), can.vec()).unwrap();
        assert_eq!(&back, r.vec());
    }
}

#[test]
fn canonical_root_has_empty_word() {
    let l = Lattice::from_spec("U^3 + E8(-1)^2").unwrap();
    let frame = FrameU::last(&l).unwrap();
    let r = Root::new(&l, frame.canonical_root()).unwrap();
    let (_, word) = canonicalize_root(&l, &r, &frame).unwrap();
    assert!(word.is_empty());
}

#[test]
fn wall_label_is_constant_on_stabilizer_orbits() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..=3 {
        let pf = make_polarized_frame(n).unwrap();
        let ambient = FrameU::last(&pf.lattice).unwrap();
        let mut seen = 0;
        while seen < 20 {
            let (delta, _) = sample_root(&pf.lattice, &ambient, 4, &mut rng);
            let kind = match classify_wall(&pf, &delta) {
                Ok(c) => c.label.kind(),
                Err(_) => continue,
            };
            seen += 1;
            let mut moved = delta.vec().clone();
            for _ in 0..rng.gen_range(1..4) {
                let s = random_stabilizer_root(&pf, &mut rng);
                assert!(pf.lattice.pair(s.vec(), &pf.l) == BigInt::from(0));
                moved = reflect(&pf.lattice, &s, &moved).unwrap();
            }
            assert_eq!(pf.lattice.pair(&moved, &pf.l), pf.lattice.pair(delta.vec(), &pf.l));
            let moved = Root::new(&pf.lattice, moved).unwrap();
            let kind2 = classify_wall(&pf, &moved).unwrap().label.kind();
            assert_eq!(kind, kind2);
        }
    }
}

#[test]
fn projection_examples() {
    let pf = make_polarized_frame(1).unwrap();
    let mut d = LatticeVector::zero(22);
    d.0[0] = 1.into();
    assert_eq!(project_u(&pf, &d).unwrap(), (BigInt::from(1), BigInt::from(1)));
    d.0[1] = 2.into();
    assert_eq!(project_u(&pf, &d).unwrap(), (BigInt::from(3), BigInt::from(-1)));
    let pf3 = make_polarized_frame(3).unwrap();
    assert_eq!(pf3.lattice.norm(&pf3.l_star), BigInt::from(-6));
    for b in &pf3.complement_basis {
        assert_eq!(pf3.lattice.pair(b, &pf3.l), BigInt::from(0));
    }
}

#[test]
fn mirror_rank_bookkeeping() {
    let l = Lattice::from_spec("U^3 + E8(-1)^2").unwrap();
    let m_basis: Vec<LatticeVector> =
        [0usize, 1].into_iter().chain(6..14).map(|i| LatticeVector::unit(22, i)).collect();
    let (u1, u2) = (LatticeVector::unit(22, 2), LatticeVector::unit(22, 3));
    let mp = mirror_picard(&l, &m_basis, (&u1, &u2)).unwrap();
    assert_eq!(mp.m1.rank() + 2 + mp.m.rank(), 22);
    assert_eq!(mp.m1.determinant().magnitude(), &num_bigint::BigUint::from(1u32));
    assert_eq!(mp.m1.signature(), Lattice::from_spec("U + E8(-1)").unwrap().signature());
    assert_eq!(mp.t_y.gram(), Lattice::from_spec("U + E8(-1) + U").unwrap().gram());
    let bad = LatticeVector::unit(22, 1);
    assert!(mirror_picard(&l, &m_basis, (&bad, &u2)).is_err());
}

#[test]
fn identity_action_fixes_the_plane() {
    let l = Lattice::from_spec("U^3 + E8(-1)^2").unwrap();
    let frame = Arc::new(Frame::orthonormal(&l));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tau = DMatrix::from_fn(3, 19, |_, _| rng.gen_range(-0.1..0.1));
    let pt = FlatPoint::new(frame, tau.clone()).unwrap();
    let id: Vec<Vec<BigInt>> =
        (0..22).map(|i| (0..22).map(|j| BigInt::from(i32::from(i == j))).collect()).collect();
    let (img, c) = pt.act(&l, &id).unwrap();
    assert!((img.tau() - tau).amax() < 1e-15);
    assert!((c.det_mu() - 1.0).abs() < 1e-15);
}

#[test]
fn json_round_trips() {
    let l = Lattice::from_spec("U + E8(-1) + Z(-4)").unwrap();
    let back = Lattice::from_json(&l.to_json()).unwrap();
    assert_eq!(back.gram(), l.gram());
    assert_eq!(back.spec(), l.spec());

    let big = Lattice::from_spec("U^3 + E8(-1)^2").unwrap();
    let frame = FrameU::last(&big).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (r, word) = sample_root(&big, &frame, 5, &mut rng);
    let w2: ReflectionWord = serde_json::from_str(&serde_json::to_string(&word).unwrap()).unwrap();
    assert_eq!(w2, word);
    let r2: Root = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(r2, r);

    let cs = CountingSeries::from_counts([(1, 480), (2, 2640)].into_iter().collect());
    let cs2: CountingSeries = serde_json::from_str(&serde_json::to_string(&cs).unwrap()).unwrap();
    assert_eq!(cs2, cs);

    let cfg = TruncationConfig::default();
    let cfg2: TruncationConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(cfg2, cfg);
    let partial: TruncationConfig = serde_json::from_str(r#"{"product_cutoff": 4}"#).unwrap();
    assert_eq!(partial.product_cutoff, 4);
    assert_eq!(partial.shell_cutoff, cfg.shell_cutoff);
}
