//! Siegel theta kernel, Borcherds-type products over positive roots, their
//! restriction to a polarization line and the Lambert-series log-derivative.

use std::f64::consts::PI;

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grassmannian::{projector, tube_lattice, FlatPoint, GeometryError};
use crate::lattice::{Lattice, LatticeError, LatticeVector};
use crate::roots::{CountingSeries, PairingEnumerator, RootError, DEFAULT_SHELL_CAP};
use crate::shell::Ellipsoid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("Im rho must be positive, got {0}")]
    NonPositiveY(f64),
    #[error("t must be positive, got {0}")]
    NonPositiveT(f64),
    #[error("truncation parameters must be positive")]
    BadConfig,
    #[error("outside convergence region: factor modulus {modulus} at pairing {n}")]
    OutsideConvergence { modulus: f64, n: u64 },
    #[error("series known up to n = {have}, need {need}")]
    IncompleteSeries { have: u64, need: u64 },
    #[error("exponent a_{n} = {expected} but {found} roots were visited")]
    ExponentMismatch { n: u64, expected: u64, found: u64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// `rho = x + i y` in the upper half plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiegelParameter {
    x: f64,
    y: f64,
}

impl SiegelParameter {
    pub fn new(x: f64, y: f64) -> Result<Self, SeriesError> {
        if y.is_nan() || y <= 0.0 || !x.is_finite() || !y.is_finite() {
            return Err(SeriesError::NonPositiveY(y));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationConfig {
    /// Include `lambda` with `<l+,l+> + |<l-,l->| <= shell_cutoff`.
    pub shell_cutoff: f64,
    /// Include product factors with `<delta,l> <= product_cutoff`.
    pub product_cutoff: u64,
    pub tail_tol: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self { shell_cutoff: 8.0, product_cutoff: 10, tail_tol: 1e-12 }
    }
}

impl TruncationConfig {
    pub fn validate(&self) -> Result<(), SeriesError> {
        if self.shell_cutoff > 0.0 && self.product_cutoff > 0 && self.tail_tol > 0.0 {
            Ok(())
        } else {
            Err(SeriesError::BadConfig)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaValue {
    pub re: f64,
    pub im: f64,
    pub terms: u64,
    /// Upper bound for the modulus of the omitted terms.
    pub tail_bound: f64,
    /// Set when `tail_bound > tail_tol`.
    pub truncated: bool,
}

impl ThetaValue {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// `sum_lambda exp(2 pi i (<l+,l+> rho + <l-,l-> conj(rho)))` over the lattice vectors with
/// majorant `<l+,l+> - <l-,l->` at most the shell cutoff.
///
/// With `<l-,l-> <= 0` each term has modulus `exp(-2 pi y (<l+,l+> + |<l-,l->|))`. Writing the
/// second exponent as `-<l-,l-> conj(rho)` instead gives modulus `exp(-2 pi y <lambda,lambda>)`,
/// which is unbounded on an indefinite lattice.
pub fn theta_kernel_eval(
    l: &Lattice,
    pt: &FlatPoint,
    rho: SiegelParameter,
    cfg: &TruncationConfig,
) -> Result<ThetaValue, SeriesError> {
    cfg.validate()?;
    let frame = pt.frame();
    if frame.ambient_dim() != l.rank() {
        return Err(SeriesError::Dimension("plane and lattice ranks differ".into()));
    }
    let g = frame.gram();
    let p = projector(g, &pt.basis_vectors())?;
    let gp = g * &p;
    let h = (&gp + gp.transpose()) - g;
    let n = l.rank();
    let hrows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| h[(i, j)]).collect()).collect();
    let ell = Ellipsoid::from_f64(&hrows).ok_or(GeometryError::NotPositive)?;
    let gi = l.gram_f64();
    let r = cfg.shell_cutoff;
    let mut terms: Vec<(f64, f64)> = Vec::new();
    ell.for_each(r, &mut |x| {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let xv = DVector::from_column_slice(&xf);
        let maj = (xv.transpose() * &h * &xv)[(0, 0)];
        if maj > r * (1.0 + 1e-12) {
            return;
        }
        let mut norm = 0i64;
        for i in 0..n {
            if x[i] == 0 {
                continue;
            }
            for j in 0..n {
                norm += x[i] * x[j] * gi[i][j] as i64;
            }
        }
        let modulus = (-2.0 * PI * rho.y * maj).exp();
        let phase = 2.0 * PI * rho.x * norm as f64;
        terms.push((modulus, phase));
    });
    // fixed-order pairwise summation
    let vals: Vec<Complex64> = terms.iter().map(|&(m, ph)| Complex64::from_polar(m, ph)).collect();
    let sum = pairwise_sum(&vals);
    let hmin = SymmetricEigen::new(h.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let tail_bound = (-PI * rho.y * r).exp() * (1.0 + 1.0 / (rho.y * hmin).sqrt()).powi(n as i32);
    Ok(ThetaValue {
        re: sum.re,
        im: sum.im,
        terms: terms.len() as u64,
        tail_bound,
        truncated: tail_bound > cfg.tail_tol,
    })
}

fn pairwise_sum(v: &[Complex64]) -> Complex64 {
    match v.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => v[0],
        k => pairwise_sum(&v[..k / 2]) + pairwise_sum(&v[k / 2..]),
    }
}

/// The product `e^{2 pi i <tau,w>} prod (1 - e^{2 pi i <delta,tau>})` over roots `delta` of a
/// lattice `U + N` with `0 < <delta,l> <= N`, each pairing level weighted by its root count.
#[derive(Debug, Clone)]
pub struct ProductSeries {
    lattice: Lattice,
    polarization: LatticeVector,
    pub weyl_vector: Option<Vec<f64>>,
    pub exponents: CountingSeries,
    pub shell_cap: i64,
}

impl ProductSeries {
    pub fn new(lattice: Lattice, polarization: LatticeVector, exponents: CountingSeries) -> Result<Self, SeriesError> {
        lattice.check(&polarization)?;
        PairingEnumerator::new(&lattice, &polarization, DEFAULT_SHELL_CAP)?;
        Ok(Self { lattice, polarization, weyl_vector: None, exponents, shell_cap: DEFAULT_SHELL_CAP })
    }

    /// Exponents from the root counts themselves.
    pub fn from_roots(lattice: Lattice, polarization: LatticeVector, n_max: u64) -> Result<Self, SeriesError> {
        let cs = crate::roots::counting_series(&lattice, &polarization, n_max)?;
        Self::new(lattice, polarization, cs)
    }

    pub fn with_weyl_vector(mut self, w: Vec<f64>) -> Self {
        self.weyl_vector = Some(w);
        self
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn polarization(&self) -> &LatticeVector {
        &self.polarization
    }
}

/// Factor modulus bound for the convergence region.
pub const CONVERGENCE_GUARD: f64 = 1.0 - 1e-9;
/// `|<delta,tau>|` below which a factor is treated as an exact zero.
pub const WALL_EPS: f64 = 1e-14;

/// Truncated product at a tube point `tau` (complex coordinates in the lattice basis).
/// Returns exactly zero when `<delta,tau>` vanishes for an included root.
pub fn product_eval_tube(ps: &ProductSeries, tau: &[Complex64], cfg: &TruncationConfig) -> Result<Complex64, SeriesError> {
    let l = &ps.lattice;
    let n = l.rank();
    if tau.len() != n {
        return Err(SeriesError::Dimension(format!("tau needs {n} coordinates")));
    }
    let big_n = cfg.product_cutoff;
    let upto = big_n.min(ps.exponents.n_max);
    let g = l.gram_f64();
    let gt: Vec<Complex64> = (0..n).map(|i| (0..n).map(|j| tau[j] * g[i][j]).sum()).collect();
    let mut prefactor = Complex64::new(1.0, 0.0);
    if let Some(w) = &ps.weyl_vector {
        if w.len() != n {
            return Err(SeriesError::Dimension("weyl vector rank".into()));
        }
        let tw: Complex64 = w.iter().zip(&gt).map(|(a, b)| b * a).sum();
        prefactor = (Complex64::new(0.0, 2.0 * PI) * tw).exp();
    }
    let en = PairingEnumerator::new(l, &ps.polarization, ps.shell_cap)?;
    let mut log_sum = Complex64::new(0.0, 0.0);
    for level in 1..=upto {
        let expected = ps.exponents.get(level);
        if expected == 0 {
            continue;
        }
        let mut found = 0u64;
        let mut failure: Option<SeriesError> = None;
        let mut zero = false;
        let mut partial: Vec<Complex64> = Vec::new();
        en.for_each(level as i64, &mut |d| {
            found += 1;
            if zero || failure.is_some() {
                return;
            }
            let z: Complex64 = d.iter().zip(&gt).filter(|(c, _)| **c != 0).map(|(&c, t)| t * c as f64).sum();
            if z.norm() <= WALL_EPS {
                zero = true;
                return;
            }
            let q = (Complex64::new(0.0, 2.0 * PI) * z).exp();
            if q.norm() > CONVERGENCE_GUARD {
                failure = Some(SeriesError::OutsideConvergence { modulus: q.norm(), n: level });
                return;
            }
            partial.push((Complex64::new(1.0, 0.0) - q).ln());
        })?;
        if zero {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if let Some(e) = failure {
            return Err(e);
        }
        if found != expected {
            return Err(SeriesError::ExponentMismatch { n: level, expected, found });
        }
        log_sum += pairwise_sum(&partial);
    }
    Ok(prefactor * log_sum.exp())
}

/// `prod_{n <= N} (1 - e^{-2 pi n t})^{a_n}`.
pub fn line_restriction_qproduct(cs: &CountingSeries, t: f64, cfg: &TruncationConfig) -> Result<f64, SeriesError> {
    check_line(cs, t, cfg)?;
    let s: f64 = (1..=cfg.product_cutoff)
        .map(|n| cs.get(n) as f64 * (-(-2.0 * PI * n as f64 * t).exp()).ln_1p())
        .sum();
    Ok(s.exp())
}

fn check_line(cs: &CountingSeries, t: f64, cfg: &TruncationConfig) -> Result<(), SeriesError> {
    if t.is_nan() || t <= 0.0 {
        return Err(SeriesError::NonPositiveT(t));
    }
    if cs.n_max < cfg.product_cutoff && !cs.counts.is_empty() {
        return Err(SeriesError::IncompleteSeries { have: cs.n_max, need: cfg.product_cutoff });
    }
    Ok(())
}

/// Exponent scale in the Lambert series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambertRate {
    /// `sum a_n 2 pi n e^{-2 pi n t} / (1 - e^{-2 pi n t})`, the derivative of the line product.
    TwoPi,
    /// `sum a_n n e^{-n t} / (1 - e^{-n t})`.
    Unit,
}

/// `d/dt log` of the line product as a Lambert series.
pub fn lambert_log_derivative(
    cs: &CountingSeries,
    t: f64,
    cfg: &TruncationConfig,
    rate: LambertRate,
) -> Result<f64, SeriesError> {
    check_line(cs, t, cfg)?;
    let c = match rate {
        LambertRate::TwoPi => 2.0 * PI,
        LambertRate::Unit => 1.0,
    };
    Ok((1..=cfg.product_cutoff)
        .map(|n| {
            let x = c * n as f64;
            let q = (-x * t).exp();
            cs.get(n) as f64 * x * q / -(-x * t).exp_m1()
        })
        .sum())
}

/// Tube coordinate `w` of a positive 2-plane in `L' + U_0`, oriented so that
/// `<Im w, l> > 0`.
pub fn tube_coordinate(pt: &FlatPoint, lp: &Lattice, pol: &LatticeVector) -> Result<Vec<Complex64>, SeriesError> {
    let r = lp.rank();
    let frame = pt.frame();
    if pt.p() != 2 || frame.ambient_dim() != r + 2 {
        return Err(SeriesError::Dimension("need a 2-plane in L' + U".into()));
    }
    let b = pt.basis_vectors();
    let x = b.column(0).into_owned();
    let x = &x / frame.pair(&x, &x).sqrt();
    let y0 = b.column(1).into_owned();
    let y = &y0 - &x * frame.pair(&y0, &x);
    let y = &y / frame.pair(&y, &y).sqrt();
    let last = Complex64::new(x[r + 1], y[r + 1]);
    if last.norm() < 1e-12 {
        return Err(GeometryError::NonGeneric("plane is orthogonal to the cusp".into()).into());
    }
    let mut w: Vec<Complex64> = (0..r).map(|i| Complex64::new(x[i], y[i]) / last).collect();
    let im: Vec<f64> = w.iter().map(|z| z.im).collect();
    if lp.pair_f64(&im, &pol.to_f64()) < 0.0 {
        w = w.iter().map(|z| z.conj()).collect();
    }
    Ok(w)
}

/// `gram_det(pt) |Phi(tau(pt))|^2`, the model right-hand side of the determinant formula.
pub fn model_determinant(pt: &FlatPoint, ps: &ProductSeries, cfg: &TruncationConfig) -> Result<f64, SeriesError> {
    let tau = tube_coordinate(pt, &ps.lattice, &ps.polarization)?;
    let v = product_eval_tube(ps, &tau, cfg)?;
    Ok(pt.gram_det() * v.norm_sqr())
}

/// The flat point of the tube point `w` in the frame `frame` of `L' + U_0`.
pub fn flat_point_of_tube(
    frame: std::sync::Arc<crate::grassmannian::Frame>,
    lp: &Lattice,
    re: &[f64],
    im: &[f64],
) -> Result<FlatPoint, SeriesError> {
    let plane = crate::grassmannian::tube_plane(
        lp,
        &crate::grassmannian::TubePoint { re: re.to_vec(), im: im.to_vec() },
    )?;
    Ok(FlatPoint::from_plane(frame, &plane)?)
}

/// Orthonormal frame of `L' + U_0`.
pub fn tube_frame(lp: &Lattice) -> crate::grassmannian::Frame {
    crate::grassmannian::Frame::orthonormal(&tube_lattice(lp))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::grassmannian::Frame;

    fn series(pairs: &[(u64, u64)], n_max: u64) -> CountingSeries {
        let mut counts: BTreeMap<u64, u64> = pairs.iter().cloned().collect();
        for n in 1..=n_max {
            counts.entry(n).or_insert(0);
        }
        CountingSeries::from_counts(counts)
    }

    #[test]
    fn theta_zero_cutoff_is_one() {
        let l = Lattice::from_spec("U").unwrap();
        let pt = FlatPoint::origin(Arc::new(Frame::orthonormal(&l)));
        let cfg = TruncationConfig { shell_cutoff: 0.5, ..Default::default() };
        let v = theta_kernel_eval(&l, &pt, SiegelParameter::new(0.3, 1.0).unwrap(), &cfg).unwrap();
        assert_eq!(v.terms, 1);
        assert_eq!(v.value(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn theta_u_diagonal_plane() {
        let l = Lattice::from_spec("U").unwrap();
        let pt = FlatPoint::origin(Arc::new(Frame::orthonormal(&l)));
        let cfg = TruncationConfig { shell_cutoff: 72.0, ..Default::default() };
        let v = theta_kernel_eval(&l, &pt, SiegelParameter::new(0.0, 1.0).unwrap(), &cfg).unwrap();
        let one_d: f64 = (-20i64..=20).map(|a| (-2.0 * PI * (a * a) as f64).exp()).sum();
        assert!((v.re - one_d * one_d).abs() < 1e-12);
        assert!(v.im.abs() < 1e-12);
        assert!(!v.truncated);
    }

    #[test]
    fn theta_rejects_lower_half_plane() {
        assert!(SiegelParameter::new(0.0, 0.0).is_err());
        assert!(SiegelParameter::new(0.0, -1.0).is_err());
    }

    #[test]
    fn line_product_values() {
        let cfg = TruncationConfig { product_cutoff: 3, ..Default::default() };
        let zero = series(&[], 3);
        assert_eq!(line_restriction_qproduct(&zero, 1.0, &cfg).unwrap(), 1.0);
        let one = series(&[(1, 1)], 3);
        let v = line_restriction_qproduct(&one, 1.0, &cfg).unwrap();
        assert!((v - (1.0 - (-2.0 * PI).exp())).abs() < 1e-15);
        let mut last = 0.0;
        for t in [0.2, 0.5, 1.0, 2.0, 5.0] {
            let v = line_restriction_qproduct(&one, t, &cfg).unwrap();
            assert!(v > last && v <= 1.0);
            last = v;
        }
        assert!(line_restriction_qproduct(&one, 0.0, &cfg).is_err());
    }

    #[test]
    fn lambert_unit_rate() {
        let cfg = TruncationConfig { product_cutoff: 10, ..Default::default() };
        let cs = series(&(1..=10).map(|n| (n, 1)).collect::<Vec<_>>(), 10);
        let v = lambert_log_derivative(&cs, 1.0, &cfg, LambertRate::Unit).unwrap();
        let direct: f64 = (1..=10).map(|n| n as f64 * (-(n as f64)).exp() / (1.0 - (-(n as f64)).exp())).sum();
        assert!((v - direct).abs() < 1e-14);
        assert!((v - 1.1863).abs() < 1e-3);
        assert_eq!(lambert_log_derivative(&series(&[], 10), 1.0, &cfg, LambertRate::TwoPi).unwrap(), 0.0);
    }

    #[test]
    fn lambert_matches_finite_difference() {
        let cfg = TruncationConfig { product_cutoff: 5, ..Default::default() };
        let cs = series(&[(1, 480), (2, 2640), (3, 13920), (4, 3), (5, 7)], 5);
        for t in [0.5, 1.0, 2.0] {
            let h = 1e-5;
            let fd = (line_restriction_qproduct(&cs, t + h, &cfg).unwrap().ln()
                - line_restriction_qproduct(&cs, t - h, &cfg).unwrap().ln())
                / (2.0 * h);
            let an = lambert_log_derivative(&cs, t, &cfg, LambertRate::TwoPi).unwrap();
            assert!(((fd - an) / an).abs() < 1e-6, "t={t}: {fd} vs {an}");
        }
    }

    fn u_e8() -> (Lattice, LatticeVector) {
        let l = Lattice::from_spec("U + E8(-1)").unwrap();
        let mut pol = LatticeVector::zero(10);
        pol.0[0] = 1.into();
        pol.0[1] = 1.into();
        (l, pol)
    }

    #[test]
    fn trivial_exponents_give_prefactor() {
        let (l, pol) = u_e8();
        let ps = ProductSeries::new(l, pol, series(&[], 2)).unwrap();
        let cfg = TruncationConfig { product_cutoff: 2, ..Default::default() };
        let tau: Vec<Complex64> = (0..10).map(|i| Complex64::new(0.1 * i as f64, 1.0)).collect();
        assert_eq!(product_eval_tube(&ps, &tau, &cfg).unwrap(), Complex64::new(1.0, 0.0));
        let w = vec![0.5; 10];
        let ps = ps.with_weyl_vector(w.clone());
        let v = product_eval_tube(&ps, &tau, &cfg).unwrap();
        let lat = ps.lattice();
        let re: Vec<f64> = tau.iter().map(|z| z.re).collect();
        let im: Vec<f64> = tau.iter().map(|z| z.im).collect();
        let tw = Complex64::new(lat.pair_f64(&re, &w), lat.pair_f64(&im, &w));
        assert!((v - (Complex64::new(0.0, 2.0 * PI) * tw).exp()).norm() < 1e-12);
    }

    #[test]
    fn tube_and_line_agree() {
        let (l, pol) = u_e8();
        let ps = ProductSeries::from_roots(l, pol.clone(), 2).unwrap();
        let cfg = TruncationConfig { product_cutoff: 2, ..Default::default() };
        let t = 0.3;
        let tau: Vec<Complex64> = pol.to_f64().iter().map(|&x| Complex64::new(0.0, t * x)).collect();
        let tube = product_eval_tube(&ps, &tau, &cfg).unwrap();
        let line = line_restriction_qproduct(&ps.exponents, t, &cfg).unwrap();
        assert!(((tube.re - line) / line).abs() < 1e-12);
        assert!(tube.im.abs() < 1e-12);
    }

    #[test]
    fn shallow_point_is_rejected() {
        let (l, pol) = u_e8();
        let ps = ProductSeries::from_roots(l, pol, 1).unwrap();
        let cfg = TruncationConfig { product_cutoff: 1, ..Default::default() };
        // Im tau = e1 - e2 has negative pairing with some roots of level 1
        let mut tau = vec![Complex64::new(0.0, 0.0); 10];
        tau[0] = Complex64::new(0.0, 1.0);
        tau[1] = Complex64::new(0.0, -0.5);
        assert!(matches!(
            product_eval_tube(&ps, &tau, &cfg),
            Err(SeriesError::OutsideConvergence { .. })
        ));
    }

    #[test]
    fn exponent_mismatch_is_reported() {
        let (l, pol) = u_e8();
        let ps = ProductSeries::new(l, pol.clone(), series(&[(1, 7)], 1)).unwrap();
        let cfg = TruncationConfig { product_cutoff: 1, ..Default::default() };
        let tau: Vec<Complex64> = pol.to_f64().iter().map(|&x| Complex64::new(0.0, x)).collect();
        assert_eq!(
            product_eval_tube(&ps, &tau, &cfg).unwrap_err(),
            SeriesError::ExponentMismatch { n: 1, expected: 7, found: 480 }
        );
    }

    #[test]
    fn model_determinant_deep_point() {
        let (l, pol) = u_e8();
        let frame = Arc::new(tube_frame(&l));
        let im: Vec<f64> = pol.to_f64().iter().map(|x| 3.0 * x).collect();
        let re = vec![0.0; 10];
        let pt = flat_point_of_tube(frame, &l, &re, &im).unwrap();
        let tau = tube_coordinate(&pt, &l, &pol).unwrap();
        for (z, y) in tau.iter().zip(&im) {
            assert!(z.re.abs() < 1e-12 && (z.im - y).abs() < 1e-12);
        }
        let cfg = TruncationConfig { product_cutoff: 1, ..Default::default() };
        let trivial = ProductSeries::new(l.clone(), pol.clone(), series(&[], 1)).unwrap();
        let d = model_determinant(&pt, &trivial, &cfg).unwrap();
        assert!((d - pt.gram_det()).abs() < 1e-15);
        let ps = ProductSeries::from_roots(l, pol, 1).unwrap();
        let d = model_determinant(&pt, &ps, &cfg).unwrap();
        assert!(d > 0.0 && d < pt.gram_det());
    }
}
