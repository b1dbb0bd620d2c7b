//! Flat coordinates on the space of positive `p`-planes in a real quadratic
//! space of signature `(p, q)`, the action of lattice isometries with its
//! matrix cocycle, the tube-domain embedding and the Iwasawa-type splitting.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::intlinalg;
use crate::lattice::{Block, Lattice, LatticeError, LatticeVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("basis is not orthonormal for the quadratic form")]
    NotOrthonormal,
    #[error("the plane is not positive definite")]
    NotPositive,
    #[error("matrix is not an isometry of the lattice")]
    NotIsometry,
    #[error("cocycle matrix is singular")]
    SingularCocycle,
    #[error("imaginary part is not in the positive cone")]
    NotInCone,
    #[error("non-generic plane: {0}")]
    NonGeneric(String),
    #[error("e and f must be isotropic with <e,f> = 1")]
    BadIsotropicPair,
    #[error("reconstructed vector f1 is not positive")]
    NonPositiveF1,
}

const ORTHO_TOL: f64 = 1e-9;

/// A real basis `e_1..e_{p+q}` of a nondegenerate subspace with
/// `<e_i,e_j> = diag(+1 (p times), -1 (q times))`, in ambient coordinates.
#[derive(Debug, Clone)]
pub struct Frame {
    gram: DMatrix<f64>,
    basis: DMatrix<f64>,
    p: usize,
    exact: OnceLock<Arc<ExactFrame>>,
}

/// A square frame read as exact binary rationals, kept over the integers:
/// `F = basis / scale`, `basis^-1 = adj / den`, `form = basis^T G basis`.
#[derive(Debug)]
struct ExactFrame {
    scale: BigInt,
    basis: Vec<Vec<BigInt>>,
    adj: Vec<Vec<BigInt>>,
    den: BigInt,
    form: Vec<Vec<BigInt>>,
}

fn gram_f64(l: &Lattice) -> DMatrix<f64> {
    let g = l.gram_f64();
    let n = g.len();
    DMatrix::from_fn(n, n, |i, j| g[i][j])
}

fn pair(g: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (x.transpose() * g * y)[(0, 0)]
}

/// Gram–Schmidt for an indefinite form: repeatedly take the candidate of largest
/// `|norm|` after projecting out the vectors already chosen.
fn indefinite_gram_schmidt(g: &DMatrix<f64>, candidates: &[DVector<f64>], limit: usize) -> Vec<(DVector<f64>, f64)> {
    let mut chosen: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut pool: Vec<DVector<f64>> = candidates.to_vec();
    while chosen.len() < limit {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in pool.iter_mut().enumerate() {
            for (c, s) in &chosen {
                let t = pair(g, v, c) * s;
                *v -= c * t;
            }
            let nrm = pair(g, v, v);
            if best.is_none_or(|(_, b)| nrm.abs() > b.abs() + 1e-12) {
                best = Some((i, nrm));
            }
        }
        let Some((i, nrm)) = best else { break };
        if nrm.abs() < 1e-10 {
            break;
        }
        let v = pool.remove(i) / nrm.abs().sqrt();
        chosen.push((v, nrm.signum()));
    }
    chosen
}

impl Frame {
    /// Validate an explicit frame; the first `p` columns must be positive.
    pub fn new(gram: DMatrix<f64>, basis: DMatrix<f64>, p: usize) -> Result<Self, GeometryError> {
        if gram.nrows() != basis.nrows() || p > basis.ncols() {
            return Err(GeometryError::Dimension("frame shape".into()));
        }
        let k = basis.ncols();
        let m = basis.transpose() * &gram * &basis;
        for i in 0..k {
            for j in 0..k {
                let want = if i != j { 0.0 } else if i < p { 1.0 } else { -1.0 };
                if (m[(i, j)] - want).abs() > ORTHO_TOL * (1.0 + basis.norm().powi(2)) {
                    return Err(GeometryError::NotOrthonormal);
                }
            }
        }
        Ok(Self { gram, basis, p, exact: OnceLock::new() })
    }

    /// `R^{p,q}` with the standard diagonal form and the identity basis.
    pub fn standard(p: usize, q: usize) -> Self {
        let n = p + q;
        let gram = DMatrix::from_fn(n, n, |i, j| if i != j { 0.0 } else if i < p { 1.0 } else { -1.0 });
        Self { gram, basis: DMatrix::identity(n, n), p, exact: OnceLock::new() }
    }

    /// Orthonormal frame of `L (x) R`, built summand by summand from eigenvectors.
    pub fn orthonormal(l: &Lattice) -> Self {
        let g = gram_f64(l);
        let n = l.rank();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (b, off) in l.block_offsets() {
            let r = b.rank();
            let block = g.view((off, off), (r, r)).into_owned();
            let eig = SymmetricEigen::new(block);
            let mut idx: Vec<usize> = (0..r).collect();
            idx.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
            for k in idx {
                let lam = eig.eigenvalues[k];
                let mut u = eig.eigenvectors.column(k).into_owned();
                let lead = u.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() + 1e-12 { x } else { m });
                if lead < 0.0 {
                    u = -u;
                }
                let mut v = DVector::zeros(n);
                v.rows_mut(off, r).copy_from(&(u / lam.abs().sqrt()));
                if lam > 0.0 {
                    pos.push(v);
                } else {
                    neg.push(v);
                }
            }
        }
        let p = pos.len();
        let cols: Vec<DVector<f64>> = pos.into_iter().chain(neg).collect();
        let basis = DMatrix::from_columns(&cols);
        Self { gram: g, basis, p, exact: OnceLock::new() }
    }

    /// A frame of the whole space whose first positive vectors are the
    /// orthonormalized `leading` vectors (which must span a positive subspace).
    pub fn complete(l: &Lattice, leading: &[DVector<f64>]) -> Result<Self, GeometryError> {
        let base = Self::orthonormal(l);
        let g = base.gram.clone();
        let lead = indefinite_gram_schmidt(&g, leading, leading.len());
        if lead.len() != leading.len() || lead.iter().any(|(_, s)| *s < 0.0) {
            return Err(GeometryError::NotPositive);
        }
        let project = |x: DVector<f64>| {
            let mut x = x;
            for (c, _) in &lead {
                let t = pair(&g, &x, c);
                x -= c * t;
            }
            x
        };
        let p_rest: Vec<DVector<f64>> = (0..base.p).map(|i| project(base.basis.column(i).into_owned())).collect();
        let q_rest: Vec<DVector<f64>> =
            (base.p..base.dim()).map(|i| project(base.basis.column(i).into_owned())).collect();
        let extra_pos = indefinite_gram_schmidt(&g, &p_rest, base.p - lead.len());
        let mut cols: Vec<DVector<f64>> = lead.iter().map(|(v, _)| v.clone()).collect();
        cols.extend(extra_pos.iter().map(|(v, _)| v.clone()));
        // negatives: orthogonalize against every positive chosen so far
        let chosen: Vec<DVector<f64>> = cols.clone();
        let negs: Vec<DVector<f64>> = q_rest
            .into_iter()
            .map(|mut x| {
                for c in &chosen {
                    let t = pair(&g, &x, c);
                    x -= c * t;
                }
                x
            })
            .collect();
        let neg = indefinite_gram_schmidt(&g, &negs, base.dim() - base.p);
        if cols.len() != base.p || neg.len() != base.dim() - base.p {
            return Err(GeometryError::NonGeneric("frame completion lost rank".into()));
        }
        cols.extend(neg.into_iter().map(|(v, _)| v));
        Self::new(g, DMatrix::from_columns(&cols), base.p)
    }

    /// Reorder the positive vectors.
    pub fn permute_positive(&self, order: &[usize]) -> Result<Self, GeometryError> {
        if order.len() != self.p {
            return Err(GeometryError::Dimension("permutation length".into()));
        }
        let mut cols: Vec<DVector<f64>> = order.iter().map(|&i| self.basis.column(i).into_owned()).collect();
        cols.extend((self.p..self.dim()).map(|i| self.basis.column(i).into_owned()));
        Self::new(self.gram.clone(), DMatrix::from_columns(&cols), self.p)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.basis.ncols() - self.p
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.basis.column(i).into_owned()
    }

    fn sign(&self, i: usize) -> f64 {
        if i < self.p {
            1.0
        } else {
            -1.0
        }
    }

    /// Frame coordinates `c_i = sign_i <x, e_i>` of an ambient vector in the span.
    pub fn coords(&self, x: &DVector<f64>) -> DVector<f64> {
        let gx = &self.gram * x;
        DVector::from_fn(self.dim(), |i, _| self.sign(i) * self.basis.column(i).dot(&gx))
    }

    /// The matrix of `gamma` in frame coordinates: `J F^T G gamma F`.
    pub fn matrix_in_frame(&self, gamma: &DMatrix<f64>) -> DMatrix<f64> {
        let j = DMatrix::from_fn(self.dim(), self.dim(), |a, b| if a == b { self.sign(a) } else { 0.0 });
        j * self.basis.transpose() * &self.gram * gamma * &self.basis
    }

    pub fn pair(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        pair(&self.gram, x, y)
    }

    // None for frames of a proper subspace
    fn exact(&self) -> Option<&ExactFrame> {
        let n = self.ambient_dim();
        if self.dim() != n {
            return None;
        }
        let e = self.exact.get_or_init(|| {
            let fq: Vec<Vec<BigRational>> = (0..n).map(|a| (0..n).map(|i| to_q(self.basis[(a, i)])).collect()).collect();
            let (basis, scale) = clear_denominators(&fq);
            let bq: Vec<Vec<BigRational>> =
                basis.iter().map(|r| r.iter().map(|x| BigRational::from_integer(x.clone())).collect()).collect();
            let id: Vec<Vec<BigRational>> = (0..n)
                .map(|a| (0..n).map(|b| if a == b { BigRational::one() } else { BigRational::zero() }).collect())
                .collect();
            let (adj, den) = match intlinalg::rational_solve(&bq, &id) {
                Some((inv, _)) => clear_denominators(&inv),
                None => (Vec::new(), BigInt::zero()),
            };
            let g: Vec<Vec<BigInt>> =
                (0..n).map(|a| (0..n).map(|b| BigInt::from(self.gram[(a, b)].round() as i64)).collect()).collect();
            let bt: Vec<Vec<BigInt>> = (0..n).map(|i| (0..n).map(|a| basis[a][i].clone()).collect()).collect();
            let form = mat_mul_z(&bt, &mat_mul_z(&g, &basis));
            Arc::new(ExactFrame { scale, basis, adj, den, form })
        });
        (!e.adj.is_empty()).then_some(e.as_ref())
    }
}

// (E_p | tau)
fn exact_rows(tau: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let p = tau.len();
    tau.iter()
        .enumerate()
        .map(|(j, t)| {
            let mut r = vec![BigRational::zero(); p];
            r[j] = BigRational::one();
            r.extend(t.iter().cloned());
            r
        })
        .collect()
}

// integer rows and the common denominator
fn clear_denominators(m: &[Vec<BigRational>]) -> (Vec<Vec<BigInt>>, BigInt) {
    let den = m.iter().flatten().fold(BigInt::one(), |d, x| d.lcm(x.denom()));
    let rows = m.iter().map(|r| r.iter().map(|x| x.numer() * (&den / x.denom())).collect()).collect();
    (rows, den)
}

fn dot_z<'a>(x: &[BigInt], y: impl Iterator<Item = &'a BigInt>) -> BigInt {
    x.iter().zip(y).filter(|(a, _)| !a.is_zero()).map(|(a, b)| a * b).sum()
}

fn mat_vec_z(m: &[Vec<BigInt>], v: &[BigInt]) -> Vec<BigInt> {
    m.iter().map(|r| dot_z(r, v.iter())).collect()
}

fn mat_mul_z(a: &[Vec<BigInt>], b: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    let m = b.first().map_or(0, Vec::len);
    a.iter().map(|row| (0..m).map(|j| dot_z(row, b.iter().map(|r| &r[j]))).collect()).collect()
}

/// A positive `p`-plane spanned by `g_j = e_j + sum_i tau_j^i e_{p+i}`.
#[derive(Debug, Clone)]
pub struct FlatPoint {
    tau: DMatrix<f64>,
    frame: Arc<Frame>,
    // exact coordinates when the point came from an exact action
    exact: Option<Arc<Vec<Vec<BigRational>>>>,
}

/// `mu` and `sigma` from `(E_p | tau) * A^T = (mu | sigma)`.
#[derive(Debug, Clone)]
pub struct Cocycle {
    pub mu: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    det: f64,
}

impl Cocycle {
    pub fn det_mu(&self) -> f64 {
        self.det
    }
}

fn to_q(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite coordinate")
}

fn q_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

impl FlatPoint {
    pub fn new(frame: Arc<Frame>, tau: DMatrix<f64>) -> Result<Self, GeometryError> {
        if tau.nrows() != frame.p() || tau.ncols() != frame.q() {
            return Err(GeometryError::Dimension(format!(
                "tau is {}x{}, frame wants {}x{}",
                tau.nrows(),
                tau.ncols(),
                frame.p(),
                frame.q()
            )));
        }
        let pt = Self { tau, frame, exact: None };
        if !is_positive_definite(&pt.gram()) {
            return Err(GeometryError::NotPositive);
        }
        Ok(pt)
    }

    /// The point `tau = 0`.
    pub fn origin(frame: Arc<Frame>) -> Self {
        let tau = DMatrix::zeros(frame.p(), frame.q());
        Self { tau, frame, exact: None }
    }

    /// Flat coordinates of the plane spanned by the columns of `vectors` (ambient coordinates).
    pub fn from_plane(frame: Arc<Frame>, vectors: &DMatrix<f64>) -> Result<Self, GeometryError> {
        let p = frame.p();
        if vectors.ncols() != p {
            return Err(GeometryError::Dimension("plane needs p spanning vectors".into()));
        }
        let rows = DMatrix::from_fn(p, frame.dim(), |j, i| frame.coords(&vectors.column(j).into_owned())[i]);
        let a = rows.columns(0, p).into_owned();
        let b = rows.columns(p, frame.q()).into_owned();
        let inv = a.try_inverse().ok_or_else(|| GeometryError::NonGeneric("plane meets the negative space".into()))?;
        Self::new(frame, inv * b)
    }

    pub fn tau(&self) -> &DMatrix<f64> {
        &self.tau
    }

    pub fn frame(&self) -> &Arc<Frame> {
        &self.frame
    }

    pub fn p(&self) -> usize {
        self.frame.p()
    }

    pub fn q(&self) -> usize {
        self.frame.q()
    }

    /// `(E_p | tau)` in frame coordinates.
    pub fn rows(&self) -> DMatrix<f64> {
        let p = self.p();
        let mut r = DMatrix::zeros(p, self.frame.dim());
        r.columns_mut(0, p).fill_with_identity();
        r.columns_mut(p, self.q()).copy_from(&self.tau);
        r
    }

    /// `g_j = e_j + sum_i tau_j^i e_{p+i}` as ambient column vectors.
    pub fn basis_vectors(&self) -> DMatrix<f64> {
        self.frame.basis() * self.rows().transpose()
    }

    /// Gram matrix of the `g_j`; equals `I - tau tau^T` in an orthonormal frame.
    pub fn gram(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::identity(p, p) - &self.tau * self.tau.transpose()
    }

    /// `det <g_i, g_j>`, the weight −2 form. Evaluated exactly for points produced by
    /// [`FlatPoint::act`].
    pub fn gram_det(&self) -> f64 {
        match &self.exact {
            Some(t) => q_to_f64(&intlinalg::rational_det(&self.exact_gram(t))),
            None => self.gram().determinant(),
        }
    }

    /// `tau` as exact rationals.
    pub fn exact_tau(&self) -> Vec<Vec<BigRational>> {
        match &self.exact {
            Some(t) => t.as_ref().clone(),
            None => (0..self.p()).map(|j| (0..self.q()).map(|i| to_q(self.tau[(j, i)])).collect()).collect(),
        }
    }

    /// Image of the plane under `gamma` (acting on column vectors), with its cocycle.
    /// For `gamma1` applied first, `mu(gamma2 * gamma1, tau) = mu(gamma1, tau) mu(gamma2, gamma1 tau)`.
    ///
    /// The frame and `tau` are read as the exact binary rationals they are and image
    /// coordinates are solved against that exact basis, so the cocycle and weight
    /// identities hold up to the final rounding.
    pub fn act(&self, l: &Lattice, gamma: &[Vec<BigInt>]) -> Result<(FlatPoint, Cocycle), GeometryError> {
        check_isometry(l, gamma)?;
        let n = l.rank();
        if self.frame.ambient_dim() != n {
            return Err(GeometryError::Dimension("frame and lattice ranks differ".into()));
        }
        let Some(ef) = self.frame.exact() else {
            return self.act_real(&DMatrix::from_fn(n, n, |a, b| gamma[a][b].to_f64().unwrap_or(f64::NAN)));
        };
        let (p, q) = (self.p(), self.q());
        // x_j = F^-1 gamma F r_j = adj gamma basis r_j / den
        let (rows, d) = clear_denominators(&exact_rows(&self.exact_tau()));
        let den = &ef.den * &d;
        let img: Vec<Vec<BigRational>> = rows
            .iter()
            .map(|r| {
                let x = mat_vec_z(&ef.adj, &mat_vec_z(gamma, &mat_vec_z(&ef.basis, r)));
                x.into_iter().map(|v| BigRational::new(v, den.clone())).collect()
            })
            .collect();
        let mu: Vec<Vec<BigRational>> = img.iter().map(|r| r[..p].to_vec()).collect();
        let sigma: Vec<Vec<BigRational>> = img.iter().map(|r| r[p..].to_vec()).collect();
        let (tau2, det) = intlinalg::rational_solve(&mu, &sigma).ok_or(GeometryError::SingularCocycle)?;
        if intlinalg::ldl_positive(&self.exact_gram(&tau2)).is_none() {
            return Err(GeometryError::NotPositive);
        }
        let f = |m: &[Vec<BigRational>], c: usize| DMatrix::from_fn(p, c, |r, s| q_to_f64(&m[r][s]));
        let pt = FlatPoint { tau: f(&tau2, q), frame: self.frame.clone(), exact: Some(Arc::new(tau2)) };
        Ok((pt, Cocycle { mu: f(&mu, p), sigma: f(&sigma, q), det: q_to_f64(&det) }))
    }

    // Gram of the g_j against the exact frame form, or I - tau tau^T without one
    fn exact_gram(&self, tau: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
        let Some(ef) = self.frame.exact() else {
            return unit_gram(tau);
        };
        let (rows, d) = clear_denominators(&exact_rows(tau));
        let den = (&d * &ef.scale).pow(2);
        let rj: Vec<Vec<BigInt>> = rows.iter().map(|r| mat_vec_z(&ef.form, r)).collect();
        rj.iter()
            .map(|a| rows.iter().map(|b| BigRational::new(dot_z(b, a.iter()), den.clone())).collect())
            .collect()
    }

    /// As [`FlatPoint::act`] for a real matrix assumed to be an isometry.
    pub fn act_real(&self, gamma: &DMatrix<f64>) -> Result<(FlatPoint, Cocycle), GeometryError> {
        let a = self.frame.matrix_in_frame(gamma);
        let img = self.rows() * a.transpose();
        let p = self.p();
        let mu = img.columns(0, p).into_owned();
        let sigma = img.columns(p, self.q()).into_owned();
        let inv = mu.clone().try_inverse().ok_or(GeometryError::SingularCocycle)?;
        let det = mu.determinant();
        if det == 0.0 {
            return Err(GeometryError::SingularCocycle);
        }
        let tau = &inv * &sigma;
        let pt = FlatPoint::new(self.frame.clone(), tau)?;
        Ok((pt, Cocycle { mu, sigma, det }))
    }
}

fn unit_gram(tau: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let p = tau.len();
    (0..p)
        .map(|i| {
            (0..p)
                .map(|j| {
                    let d: BigRational = tau[i].iter().zip(&tau[j]).map(|(a, b)| a * b).sum();
                    if i == j {
                        BigRational::one() - d
                    } else {
                        -d
                    }
                })
                .collect()
        })
        .collect()
}

/// Exact check `gamma^T G gamma = G`.
pub fn check_isometry(l: &Lattice, gamma: &[Vec<BigInt>]) -> Result<(), GeometryError> {
    let n = l.rank();
    if gamma.len() != n || gamma.iter().any(|r| r.len() != n) {
        return Err(GeometryError::Dimension("gamma must be rank x rank".into()));
    }
    let g = l.gram();
    for i in 0..n {
        for j in i..n {
            let mut s = BigInt::zero();
            for a in 0..n {
                if gamma[a][i].is_zero() {
                    continue;
                }
                for b in 0..n {
                    if !g[a][b].is_zero() && !gamma[b][j].is_zero() {
                        s += &gamma[a][i] * &g[a][b] * &gamma[b][j];
                    }
                }
            }
            if s != g[i][j] {
                return Err(GeometryError::NotIsometry);
            }
        }
    }
    Ok(())
}

/// Matrix of an isometry given as a function on lattice vectors (columns are images of the basis).
pub fn matrix_of(n: usize, f: impl Fn(&LatticeVector) -> LatticeVector) -> Vec<Vec<BigInt>> {
    let cols: Vec<LatticeVector> = (0..n).map(|i| f(&LatticeVector::unit(n, i))).collect();
    (0..n).map(|i| (0..n).map(|j| cols[j].0[i].clone()).collect()).collect()
}

/// `||A||^2 = Tr(A A^T)`
pub fn bergman_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `w = Re w + i Im w` in `L' (x) C` for a lattice `L'` of signature `(1, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TubePoint {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TubePointQ {
    pub re: Vec<BigRational>,
    pub im: Vec<BigRational>,
}

fn complex_pair(l: &Lattice, x: &[Complex64], y: &[Complex64]) -> Complex64 {
    let (xr, xi): (Vec<f64>, Vec<f64>) = x.iter().map(|z| (z.re, z.im)).unzip();
    let (yr, yi): (Vec<f64>, Vec<f64>) = y.iter().map(|z| (z.re, z.im)).unzip();
    Complex64::new(
        l.pair_f64(&xr, &yr) - l.pair_f64(&xi, &yi),
        l.pair_f64(&xr, &yi) + l.pair_f64(&xi, &yr),
    )
}

/// Complex bilinear pairing on `L (x) C`.
pub fn pair_complex(l: &Lattice, x: &[Complex64], y: &[Complex64]) -> Complex64 {
    complex_pair(l, x, y)
}

/// Exact complex bilinear pairing.
pub fn pair_complex_exact(
    l: &Lattice,
    x: &[Complex<BigRational>],
    y: &[Complex<BigRational>],
) -> Complex<BigRational> {
    let mut re = BigRational::zero();
    let mut im = BigRational::zero();
    for (i, row) in l.gram().iter().enumerate() {
        for (j, g) in row.iter().enumerate() {
            if g.is_zero() {
                continue;
            }
            let g = BigRational::from_integer(g.clone());
            re += &g * (&x[i].re * &y[j].re - &x[i].im * &y[j].im);
            im += &g * (&x[i].re * &y[j].im + &x[i].im * &y[j].re);
        }
    }
    Complex::new(re, im)
}

/// The tube lattice `L' + U_0` with `U_0` appended last.
pub fn tube_lattice(lp: &Lattice) -> Lattice {
    lp.direct_sum(&Lattice::from_spec("U").expect("U parses"))
}

/// `Psi(w) = (w, -<w,w>/2, 1)` in `(L' + U_0) (x) C`.
pub fn tube_embed(lp: &Lattice, w: &TubePoint) -> Result<Vec<Complex64>, GeometryError> {
    let n = lp.rank();
    if w.re.len() != n || w.im.len() != n {
        return Err(GeometryError::Dimension("tube point rank".into()));
    }
    if lp.pair_f64(&w.im, &w.im) <= 0.0 {
        return Err(GeometryError::NotInCone);
    }
    let z: Vec<Complex64> = w.re.iter().zip(&w.im).map(|(&a, &b)| Complex64::new(a, b)).collect();
    let ww = complex_pair(lp, &z, &z);
    let mut out = z;
    out.push(-ww / 2.0);
    out.push(Complex64::new(1.0, 0.0));
    Ok(out)
}

pub fn tube_embed_exact(lp: &Lattice, w: &TubePointQ) -> Result<Vec<Complex<BigRational>>, GeometryError> {
    let n = lp.rank();
    if w.re.len() != n || w.im.len() != n {
        return Err(GeometryError::Dimension("tube point rank".into()));
    }
    let imv = crate::lattice::RationalVector(w.im.clone());
    if !lp.pair_q(&imv, &imv).is_positive() {
        return Err(GeometryError::NotInCone);
    }
    let z: Vec<Complex<BigRational>> = w.re.iter().zip(&w.im).map(|(a, b)| Complex::new(a.clone(), b.clone())).collect();
    let ww = pair_complex_exact(lp, &z, &z);
    let two = BigRational::from_integer(BigInt::from(2));
    let mut out = z;
    out.push(Complex::new(-ww.re / &two, -ww.im / &two));
    out.push(Complex::new(BigRational::from_integer(1.into()), BigRational::zero()));
    Ok(out)
}

/// The positive 2-plane `(Re Psi, Im Psi)` of a tube point as ambient real columns.
pub fn tube_plane(lp: &Lattice, w: &TubePoint) -> Result<DMatrix<f64>, GeometryError> {
    let psi = tube_embed(lp, w)?;
    let n = psi.len();
    Ok(DMatrix::from_fn(n, 2, |i, j| if j == 0 { psi[i].re } else { psi[i].im }))
}

/// Decomposition of a plane relative to an isotropic pair `(f, e)`, `<e,f> = 1`.
#[derive(Debug, Clone)]
pub struct IwasawaSplit {
    /// `E' = Pr_W(E ∩ e^perp)` in the frame of `W = {e, f}^perp`.
    pub sub: FlatPoint,
    /// `mu` in the frame coordinates of `W`.
    pub mu: DVector<f64>,
    pub lambda: f64,
    /// `<mu,mu> + 2 lambda`, the norm of `f1 = mu + f + lambda e`.
    pub f1_norm: f64,
}

impl IwasawaSplit {
    pub fn mu_norm(&self) -> f64 {
        let fr = self.sub.frame();
        (0..fr.dim()).map(|i| fr.sign(i) * self.mu[i] * self.mu[i]).sum()
    }

    /// Whether `lambda > <mu,mu>` holds as well (a sufficient but not necessary condition).
    pub fn strict_lambda(&self) -> bool {
        self.lambda > self.mu_norm()
    }
}

fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    // right null space via the eigenvectors of M^T M with tiny eigenvalues
    let mtm = m.transpose() * m;
    let eig = SymmetricEigen::new(mtm);
    let scale = 1.0 + eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<DVector<f64>> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i].abs() <= tol * scale)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(m.ncols(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn w_frame(frame: &Frame, f: &DVector<f64>, e: &DVector<f64>) -> Result<Frame, GeometryError> {
    let g = frame.gram();
    let proj = |x: DVector<f64>| {
        let a = pair(g, &x, e);
        let b = pair(g, &x, f);
        x - f * a - e * b
    };
    let cands: Vec<DVector<f64>> = (0..frame.dim()).map(|i| proj(frame.vector(i))).collect();
    let k = frame.dim() - 2;
    let chosen = indefinite_gram_schmidt(g, &cands, k);
    if chosen.len() != k {
        return Err(GeometryError::NonGeneric("W has the wrong rank".into()));
    }
    let pos: Vec<DVector<f64>> = chosen.iter().filter(|(_, s)| *s > 0.0).map(|(v, _)| v.clone()).collect();
    let p = pos.len();
    if p + 1 != frame.p() {
        return Err(GeometryError::NonGeneric("W has the wrong signature".into()));
    }
    let cols: Vec<DVector<f64>> =
        pos.into_iter().chain(chosen.iter().filter(|(_, s)| *s < 0.0).map(|(v, _)| v.clone())).collect();
    Frame::new(g.clone(), DMatrix::from_columns(&cols), p)
}

/// Split a plane `E` as `(E', mu, lambda)` relative to the isotropic pair `(f, e)`.
pub fn iwasawa_split(pt: &FlatPoint, f: &DVector<f64>, e: &DVector<f64>) -> Result<IwasawaSplit, GeometryError> {
    let frame = pt.frame();
    let g = frame.gram();
    if pair(g, e, e).abs() > 1e-10 || pair(g, f, f).abs() > 1e-10 || (pair(g, e, f) - 1.0).abs() > 1e-10 {
        return Err(GeometryError::BadIsotropicPair);
    }
    let p = pt.p();
    if p < 2 {
        return Err(GeometryError::Dimension("need p >= 2".into()));
    }
    let b = pt.basis_vectors();
    let row = DMatrix::from_row_slice(1, p, (e.transpose() * g * &b).as_slice());
    let ker = null_space(&row, 1e-12);
    if ker.ncols() != p - 1 {
        return Err(GeometryError::NonGeneric(format!("E ∩ e^perp has dimension {}", ker.ncols())));
    }
    let k = &b * &ker;
    let kt = k.transpose() * g * &b;
    let c = null_space(&kt, 1e-12);
    if c.ncols() != 1 {
        return Err(GeometryError::NonGeneric("no unique complement of E ∩ e^perp in E".into()));
    }
    let f1raw = &b * c.column(0);
    let fe = pair(g, &f1raw, e);
    if fe.abs() < 1e-12 {
        return Err(GeometryError::NonGeneric("complement is orthogonal to e".into()));
    }
    let f1 = f1raw / fe;
    let lambda = pair(g, &f1, f);
    let mu_amb = &f1 - f - e * lambda;
    let wf = Arc::new(w_frame(frame, f, e)?);
    let proj = |x: DVector<f64>| {
        let a = pair(g, &x, e);
        let bb = pair(g, &x, f);
        x - f * a - e * bb
    };
    let eprime = DMatrix::from_columns(&(0..p - 1).map(|j| proj(k.column(j).into_owned())).collect::<Vec<_>>());
    let sub = FlatPoint::from_plane(wf.clone(), &eprime)?;
    let mu = wf.coords(&mu_amb);
    let f1_norm = pair(g, &f1, &f1);
    if f1_norm <= 0.0 {
        return Err(GeometryError::NonPositiveF1);
    }
    Ok(IwasawaSplit { sub, mu, lambda, f1_norm })
}

/// Rebuild a spanning set of `E` from `(E', mu, lambda)`; rejects a non-positive `f1`.
pub fn iwasawa_reassemble(
    sub: &FlatPoint,
    mu: &DVector<f64>,
    lambda: f64,
    f: &DVector<f64>,
    e: &DVector<f64>,
) -> Result<DMatrix<f64>, GeometryError> {
    let wf = sub.frame();
    let mu_amb = wf.basis() * mu;
    let f1 = &mu_amb + f + e * lambda;
    if wf.pair(&f1, &f1) <= 0.0 {
        return Err(GeometryError::NonPositiveF1);
    }
    // E ∩ e^perp = { x - <x,mu> e : x in E' }, the part of E orthogonal to f1
    let b = sub.basis_vectors();
    let mut cols: Vec<DVector<f64>> = (0..sub.p())
        .map(|j| {
            let x = b.column(j).into_owned();
            let c = wf.pair(&x, &mu_amb);
            x - e * c
        })
        .collect();
    cols.push(f1);
    Ok(DMatrix::from_columns(&cols))
}

/// `G`-orthogonal projector onto the span of the columns of `b`.
pub fn projector(g: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, GeometryError> {
    let m = b.transpose() * g * b;
    let inv = m.try_inverse().ok_or_else(|| GeometryError::NonGeneric("degenerate span".into()))?;
    Ok(b * inv * b.transpose() * g)
}

/// The totally geodesic slice through a positive vector `L`: frame `(e1, e2, L/|L|, ...)`,
/// with `rho = tau_1 + i tau_2` and the third row frozen at zero.
#[derive(Debug, Clone)]
pub struct WpSlice {
    frame: Arc<Frame>,
}

impl WpSlice {
    pub fn new(l: &Lattice, lvec: &LatticeVector) -> Result<Self, GeometryError> {
        l.check(lvec)?;
        let x = DVector::from_vec(lvec.to_f64());
        let base = Frame::complete(l, &[x])?;
        if base.p() != 3 {
            return Err(GeometryError::Dimension("slice needs signature (3, q)".into()));
        }
        let frame = base.permute_positive(&[1, 2, 0])?;
        Ok(Self { frame: Arc::new(frame) })
    }

    pub fn frame(&self) -> &Arc<Frame> {
        &self.frame
    }

    pub fn point(&self, rho: &[Complex64]) -> Result<FlatPoint, GeometryError> {
        let q = self.frame.q();
        if rho.len() != q {
            return Err(GeometryError::Dimension(format!("rho needs {q} entries")));
        }
        let tau = DMatrix::from_fn(3, q, |r, c| match r {
            0 => rho[c].re,
            1 => rho[c].im,
            _ => 0.0,
        });
        FlatPoint::new(self.frame.clone(), tau)
    }

    /// `log det <g_i, g_j>` on the slice.
    pub fn potential(&self, rho: &[Complex64]) -> Result<f64, GeometryError> {
        Ok(self.point(rho)?.gram_det().ln())
    }
}

/// Whether a layout consists only of `U` and `E8(-1)` summands.
pub fn is_standard_layout(l: &Lattice) -> bool {
    l.layout().iter().all(|b| matches!(b, Block::U | Block::E8Minus))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_basis_vectors() {
        let fr = Arc::new(Frame::standard(1, 2));
        let pt = FlatPoint::new(fr.clone(), DMatrix::from_row_slice(1, 2, &[0.3, 0.4])).unwrap();
        let g = pt.basis_vectors();
        assert_eq!(g.column(0).as_slice(), &[1.0, 0.3, 0.4]);
        assert!((pt.gram_det() - 0.75).abs() < 1e-15);
        assert_eq!(FlatPoint::origin(fr).gram_det(), 1.0);
    }

    #[test]
    fn rejects_non_positive_plane() {
        let fr = Arc::new(Frame::standard(1, 2));
        assert_eq!(
            FlatPoint::new(fr, DMatrix::from_row_slice(1, 2, &[0.8, 0.6])).unwrap_err(),
            GeometryError::NotPositive
        );
    }

    #[test]
    fn gram_det_decreases_toward_light_cone() {
        let fr = Arc::new(Frame::standard(2, 3));
        let mut last = f64::INFINITY;
        for k in 0..10 {
            let t = k as f64 / 10.0;
            let mut tau = DMatrix::zeros(2, 3);
            tau[(0, 0)] = t;
            let d = FlatPoint::new(fr.clone(), tau).unwrap().gram_det();
            assert!(d < last);
            last = d;
        }
        assert!(last < 0.2);
    }

    #[test]
    fn orthonormal_frame_of_k3() {
        let l = Lattice::from_spec("U^3 + E8(-1)^2").unwrap();
        let f = Frame::orthonormal(&l);
        assert_eq!((f.p(), f.q()), (3, 19));
        assert!(Frame::new(f.gram().clone(), f.basis().clone(), 3).is_ok());
    }

    #[test]
    fn identity_action() {
        let l = Lattice::from_spec("U^2 + E8(-1)").unwrap();
        let fr = Arc::new(Frame::orthonormal(&l));
        let mut tau = DMatrix::zeros(2, 10);
        tau[(0, 3)] = 0.1;
        tau[(1, 0)] = -0.2;
        let pt = FlatPoint::new(fr, tau.clone()).unwrap();
        let id = matrix_of(12, |v| v.clone());
        let (img, c) = pt.act(&l, &id).unwrap();
        assert!((img.tau() - tau).norm() < 1e-12);
        assert!((c.mu - DMatrix::identity(2, 2)).norm() < 1e-12);
        let mut bad = id.clone();
        bad[0][0] = BigInt::from(2);
        assert_eq!(pt.act(&l, &bad).unwrap_err(), GeometryError::NotIsometry);
    }

    #[test]
    fn bergman_norm_basics() {
        assert_eq!(bergman_norm(&DMatrix::zeros(2, 3)), 0.0);
        let mut a = DMatrix::zeros(2, 3);
        a[(1, 2)] = 3.0;
        assert_eq!(bergman_norm(&a), 9.0);
    }

    #[test]
    fn tube_isotropy() {
        let lp = Lattice::from_spec("U").unwrap();
        let m = tube_lattice(&lp);
        let w = TubePoint { re: vec![0.0, 0.0], im: vec![1.0, 1.0] };
        let psi = tube_embed(&lp, &w).unwrap();
        assert!(pair_complex(&m, &psi, &psi).norm() < 1e-15);
        let conj: Vec<Complex64> = psi.iter().map(|z| z.conj()).collect();
        let h = pair_complex(&m, &psi, &conj);
        assert!((h.re - 2.0 * lp.pair_f64(&w.im, &w.im)).abs() < 1e-12);
        let bad = TubePoint { re: vec![0.0, 0.0], im: vec![1.0, -1.0] };
        assert_eq!(tube_embed(&lp, &bad).unwrap_err(), GeometryError::NotInCone);
    }

    fn split_setup() -> (Arc<Frame>, DVector<f64>, DVector<f64>) {
        // W = R^{2,3} orthonormal, then the isotropic pair (f, e)
        let n = 7;
        let mut g = DMatrix::zeros(n, n);
        for i in 0..5 {
            g[(i, i)] = if i < 2 { 1.0 } else { -1.0 };
        }
        g[(5, 6)] = 1.0;
        g[(6, 5)] = 1.0;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut b = DMatrix::zeros(n, n);
        b[(0, 0)] = 1.0;
        b[(1, 1)] = 1.0;
        b[(5, 2)] = s;
        b[(6, 2)] = s;
        for i in 2..5 {
            b[(i, i + 1)] = 1.0;
        }
        b[(5, 6)] = s;
        b[(6, 6)] = -s;
        let fr = Arc::new(Frame::new(g, b, 3).unwrap());
        let f = DVector::from_fn(n, |i, _| if i == 5 { 1.0 } else { 0.0 });
        let e = DVector::from_fn(n, |i, _| if i == 6 { 1.0 } else { 0.0 });
        (fr, f, e)
    }

    #[test]
    fn split_at_origin() {
        let (fr, f, e) = split_setup();
        let sp = iwasawa_split(&FlatPoint::origin(fr), &f, &e).unwrap();
        assert!(sp.mu.norm() < 1e-12);
        assert!((sp.lambda - 1.0).abs() < 1e-12);
        assert!(sp.sub.tau().norm() < 1e-12);
    }

    #[test]
    fn split_round_trip() {
        let (fr, f, e) = split_setup();
        let tau = DMatrix::from_row_slice(3, 4, &[0.1, -0.2, 0.05, 0.3, 0.0, 0.15, -0.1, 0.2, 0.25, 0.1, 0.1, -0.3]);
        let pt = FlatPoint::new(fr.clone(), tau).unwrap();
        let sp = iwasawa_split(&pt, &f, &e).unwrap();
        let rebuilt = iwasawa_reassemble(&sp.sub, &sp.mu, sp.lambda, &f, &e).unwrap();
        let p1 = projector(fr.gram(), &pt.basis_vectors()).unwrap();
        let p2 = projector(fr.gram(), &rebuilt).unwrap();
        assert!((p1 - p2).norm() < 1e-10);
    }

    #[test]
    fn reassembly_rejects_non_positive_f1() {
        let (fr, f, e) = split_setup();
        let sp = iwasawa_split(&FlatPoint::origin(fr), &f, &e).unwrap();
        let zero = DVector::zeros(sp.mu.len());
        assert_eq!(
            iwasawa_reassemble(&sp.sub, &zero, 0.0, &f, &e).unwrap_err(),
            GeometryError::NonPositiveF1
        );
        assert!(iwasawa_reassemble(&sp.sub, &zero, -1.0, &f, &e).is_err());
    }
}
