//! Fincke–Pohst enumeration of lattice points in ellipsoids.
//!
//! Bounds come from an `L D L^T` factorization evaluated in `f64` and widened
//! slightly, so no point inside the ellipsoid is ever pruned. Callers decide
//! membership exactly on the visited candidates.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::intlinalg;

/// Enumerator for a positive definite form `Q(x) = sum_i d_i (x_i + sum_{j>i} m_ij x_j)^2`.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    d: Vec<f64>,
    // m[i][j] for j > i
    m: Vec<Vec<f64>>,
}

const WIDEN: f64 = 1e-7;

impl Ellipsoid {
    /// Build from an exact positive definite integer form; `None` if not positive definite.
    pub fn from_exact(q: &[Vec<BigInt>]) -> Option<Self> {
        let qr: Vec<Vec<BigRational>> = q
            .iter()
            .map(|r| r.iter().map(|x| BigRational::from_integer(x.clone())).collect())
            .collect();
        let (l, d) = intlinalg::ldl_positive(&qr)?;
        let n = q.len();
        let f = |x: &BigRational| x.to_f64().unwrap_or(f64::NAN);
        let d = d.iter().map(f).collect();
        let m = (0..n)
            .map(|i| (0..n).map(|j| if j > i { f(&l[j][i]) } else { 0.0 }).collect())
            .collect();
        Some(Self { d, m })
    }

    /// Build from a real positive definite form; `None` if a pivot is not positive.
    pub fn from_f64(q: &[Vec<f64>]) -> Option<Self> {
        let n = q.len();
        let mut l = vec![vec![0.0; n]; n];
        let mut d = vec![0.0; n];
        for j in 0..n {
            let mut dj = q[j][j];
            for k in 0..j {
                dj -= l[j][k] * l[j][k] * d[k];
            }
            if dj <= 0.0 || !dj.is_finite() {
                return None;
            }
            l[j][j] = 1.0;
            for i in j + 1..n {
                let mut s = q[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k] * d[k];
                }
                l[i][j] = s / dj;
            }
            d[j] = dj;
        }
        let m = (0..n)
            .map(|i| (0..n).map(|j| if j > i { l[j][i] } else { 0.0 }).collect())
            .collect();
        Some(Self { d, m })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn min_pivot(&self) -> f64 {
        self.d.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Visit every integer point with `Q(x) <= bound` (plus a thin rim of
    /// candidates just outside, which the caller must filter).
    pub fn for_each(&self, bound: f64, visit: &mut dyn FnMut(&[i64])) {
        let n = self.dim();
        if n == 0 {
            visit(&[]);
            return;
        }
        let mut x = vec![0i64; n];
        let slack = WIDEN * (1.0 + bound.abs());
        self.descend(n - 1, bound + slack, &mut x, visit);
    }

    fn descend(&self, i: usize, budget: f64, x: &mut [i64], visit: &mut dyn FnMut(&[i64])) {
        let c: f64 = -self.m[i][i + 1..].iter().zip(&x[i + 1..]).map(|(m, &xj)| m * xj as f64).sum::<f64>();
        let r = (budget.max(0.0) / self.d[i]).sqrt() * (1.0 + WIDEN) + WIDEN;
        let lo = (c - r).ceil() as i64;
        let hi = (c + r).floor() as i64;
        for xi in lo..=hi {
            x[i] = xi;
            let t = xi as f64 - c;
            let rest = budget - self.d[i] * t * t;
            if rest < -WIDEN * (1.0 + budget.abs()) {
                continue;
            }
            if i == 0 {
                visit(x);
            } else {
                self.descend(i - 1, rest, x, visit);
            }
        }
        x[i] = 0;
    }
}

/// Exact integer quadratic form with sparse rows.
#[derive(Debug, Clone)]
pub struct IntForm {
    rows: Vec<Vec<(usize, i64)>>,
}

impl IntForm {
    pub fn new(q: &[Vec<i64>]) -> Self {
        let rows = q
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, &x)| x != 0).map(|(j, &x)| (j, x)).collect())
            .collect();
        Self { rows }
    }

    pub fn eval(&self, x: &[i64]) -> i64 {
        let mut acc = 0i64;
        for (i, row) in self.rows.iter().enumerate() {
            if x[i] == 0 {
                continue;
            }
            let s: i64 = row.iter().map(|&(j, g)| g * x[j]).sum();
            acc += x[i] * s;
        }
        acc
    }
}

/// All `x` with `Q(x) = target` for a positive definite integer form,
/// sorted lexicographically.
#[derive(Debug, Clone)]
pub struct ShellEnumerator {
    ellipsoid: Ellipsoid,
    form: IntForm,
}

impl ShellEnumerator {
    pub fn new(q: &[Vec<i64>]) -> Option<Self> {
        let big: Vec<Vec<BigInt>> = q.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect();
        let ellipsoid = Ellipsoid::from_exact(&big)?;
        Some(Self { ellipsoid, form: IntForm::new(q) })
    }

    pub fn for_each_at(&self, target: i64, visit: &mut dyn FnMut(&[i64])) {
        if target < 0 {
            return;
        }
        let form = &self.form;
        self.ellipsoid.for_each(target as f64, &mut |x| {
            if form.eval(x) == target {
                visit(x);
            }
        });
    }

    pub fn count_at(&self, target: i64) -> u64 {
        let mut c = 0u64;
        self.for_each_at(target, &mut |_| c += 1);
        c
    }

    pub fn shell(&self, target: i64) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        self.for_each_at(target, &mut |x| out.push(x.to_vec()));
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_form_counts() {
        // Z^3: points of norm 1 are the 6 unit vectors, norm 2 gives 12
        let q = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        let e = ShellEnumerator::new(&q).unwrap();
        assert_eq!(e.count_at(0), 1);
        assert_eq!(e.count_at(1), 6);
        assert_eq!(e.count_at(2), 12);
        assert_eq!(e.count_at(3), 8);
    }

    #[test]
    fn a2_hexagonal() {
        let q = vec![vec![2, -1], vec![-1, 2]];
        let e = ShellEnumerator::new(&q).unwrap();
        assert_eq!(e.count_at(2), 6);
        assert_eq!(e.count_at(6), 6);
        assert_eq!(e.count_at(8), 6);
        assert_eq!(e.count_at(4), 0);
    }

    #[test]
    fn rejects_indefinite() {
        assert!(ShellEnumerator::new(&[vec![0, 1], vec![1, 0]]).is_none());
    }

    #[test]
    fn real_ball() {
        let e = Ellipsoid::from_f64(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let mut n = 0;
        e.for_each(4.0, &mut |x| {
            if (x[0] * x[0] + x[1] * x[1]) as f64 <= 4.0 {
                n += 1;
            }
        });
        assert_eq!(n, 13);
    }
}
