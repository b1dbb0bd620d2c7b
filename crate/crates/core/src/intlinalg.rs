//! Exact integer and rational linear algebra over `BigInt`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Determinant by fraction-free (Bareiss) elimination.
pub fn determinant(m: &[Vec<BigInt>]) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut a: Vec<Vec<BigInt>> = m.to_vec();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    sign * a[n - 1][n - 1].clone()
}

/// Extended gcd returning `(g, x, y)` with `a*x + b*y = g >= 0`.
pub fn ext_gcd(a: &BigInt, b: &BigInt) -> (BigInt, BigInt, BigInt) {
    let e = a.extended_gcd(b);
    if e.gcd.is_negative() {
        (-e.gcd, -e.x, -e.y)
    } else {
        (e.gcd, e.x, e.y)
    }
}

/// Integer vector `x` with `sum c_i x_i = gcd(c)`, or `None` if `c` is zero.
pub fn bezout_vector(c: &[BigInt]) -> Option<Vec<BigInt>> {
    let mut x = vec![BigInt::zero(); c.len()];
    let mut g = BigInt::zero();
    for (i, ci) in c.iter().enumerate() {
        if ci.is_zero() {
            continue;
        }
        if g.is_zero() {
            g = ci.abs();
            x[i] = if ci.is_negative() { -BigInt::one() } else { BigInt::one() };
            continue;
        }
        let (ng, s, t) = ext_gcd(&g, ci);
        for xj in x.iter_mut().take(i) {
            *xj *= &s;
        }
        x[i] = t;
        g = ng;
    }
    if g.is_zero() {
        None
    } else {
        Some(x)
    }
}

/// Saturated integer basis of `{x : A x = 0}` for a `k x n` matrix `A`,
/// returned in row Hermite normal form.
pub fn kernel_basis(a: &[Vec<BigInt>], n: usize) -> Vec<Vec<BigInt>> {
    let k = a.len();
    // Stack A over the identity and run unimodular column operations.
    let mut m: Vec<Vec<BigInt>> = a.to_vec();
    for i in 0..n {
        let mut row = vec![BigInt::zero(); n];
        row[i] = BigInt::one();
        m.push(row);
    }
    let mut pivot = 0;
    for r in 0..k {
        if pivot >= n {
            break;
        }
        for j in pivot + 1..n {
            if m[r][j].is_zero() {
                continue;
            }
            let p = m[r][pivot].clone();
            let q = m[r][j].clone();
            let (g, x, y) = ext_gcd(&p, &q);
            let pg = &p / &g;
            let qg = &q / &g;
            for row in m.iter_mut() {
                let cp = row[pivot].clone();
                let cj = row[j].clone();
                row[pivot] = &x * &cp + &y * &cj;
                row[j] = &pg * &cj - &qg * &cp;
            }
        }
        if !m[r][pivot].is_zero() {
            pivot += 1;
        }
    }
    let basis: Vec<Vec<BigInt>> = (pivot..n)
        .map(|c| (0..n).map(|i| m[k + i][c].clone()).collect())
        .collect();
    hnf_rows(basis)
}

/// Row Hermite normal form of the lattice spanned by `rows`; zero rows dropped.
pub fn hnf_rows(mut rows: Vec<Vec<BigInt>>) -> Vec<Vec<BigInt>> {
    if rows.is_empty() {
        return rows;
    }
    let n = rows[0].len();
    let mut out_row = 0;
    for col in 0..n {
        if out_row >= rows.len() {
            break;
        }
        loop {
            // Pick the smallest nonzero entry in this column as pivot.
            let best = (out_row..rows.len())
                .filter(|&r| !rows[r][col].is_zero())
                .min_by(|&a, &b| rows[a][col].abs().cmp(&rows[b][col].abs()));
            let Some(b) = best else { break };
            rows.swap(out_row, b);
            let mut done = true;
            for r in out_row + 1..rows.len() {
                if rows[r][col].is_zero() {
                    continue;
                }
                let q = rows[r][col].div_floor(&rows[out_row][col]);
                let (head, tail) = rows.split_at_mut(r);
                for (x, y) in tail[0].iter_mut().zip(head[out_row].iter()) {
                    *x -= &q * y;
                }
                if !rows[r][col].is_zero() {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        if rows[out_row][col].is_zero() {
            continue;
        }
        if rows[out_row][col].is_negative() {
            for x in rows[out_row].iter_mut() {
                *x = -x.clone();
            }
        }
        for r in 0..out_row {
            let q = rows[r][col].div_floor(&rows[out_row][col]);
            if q.is_zero() {
                continue;
            }
            let (head, tail) = rows.split_at_mut(out_row);
            for (x, y) in head[r].iter_mut().zip(tail[0].iter()) {
                *x -= &q * y;
            }
        }
        out_row += 1;
    }
    rows.truncate(out_row);
    rows.retain(|r| r.iter().any(|x| !x.is_zero()));
    rows
}

/// Diagonal of a congruence diagonalization `P^T A P = D` of a symmetric
/// rational matrix; zero entries mark the radical.
pub fn congruence_diagonal(a: &[Vec<BigInt>]) -> Vec<BigRational> {
    let n = a.len();
    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .map(|r| r.iter().map(|x| BigRational::from_integer(x.clone())).collect())
        .collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut diag = Vec::with_capacity(n);
    while !active.is_empty() {
        let pos = active.iter().position(|&i| !m[i][i].is_zero());
        let p = match pos {
            Some(p) => active[p],
            None => {
                let pair = active.iter().enumerate().find_map(|(ai, &i)| {
                    active[ai + 1..]
                        .iter()
                        .find(|&&j| !m[i][j].is_zero())
                        .map(|&j| (i, j))
                });
                let Some((i, j)) = pair else {
                    diag.extend(active.iter().map(|_| BigRational::zero()));
                    break;
                };
                // Replace basis vector i by e_i + e_j, making the diagonal 2 a_ij.
                for &t in &active {
                    let v = m[t][j].clone();
                    m[t][i] += v;
                }
                for &t in &active {
                    let v = m[j][t].clone();
                    m[i][t] += v;
                }
                i
            }
        };
        let piv = m[p][p].clone();
        active.retain(|&i| i != p);
        for &i in &active {
            let f = &m[i][p] / &piv;
            if f.is_zero() {
                continue;
            }
            for &j in &active {
                let v = &f * &m[p][j];
                m[i][j] -= v;
            }
        }
        diag.push(piv);
    }
    diag
}

/// `L D L^T` of a positive definite rational matrix, `None` otherwise.
/// Returns the unit lower factor and the diagonal.
pub fn ldl_positive(q: &[Vec<BigRational>]) -> Option<(Vec<Vec<BigRational>>, Vec<BigRational>)> {
    let n = q.len();
    let mut l = vec![vec![BigRational::zero(); n]; n];
    let mut d = vec![BigRational::zero(); n];
    for j in 0..n {
        let mut dj = q[j][j].clone();
        for k in 0..j {
            dj -= &l[j][k] * &l[j][k] * &d[k];
        }
        if !dj.is_positive() {
            return None;
        }
        l[j][j] = BigRational::one();
        for i in j + 1..n {
            let mut s = q[i][j].clone();
            for k in 0..j {
                s -= &l[i][k] * &l[j][k] * &d[k];
            }
            l[i][j] = s / &dj;
        }
        d[j] = dj;
    }
    Some((l, d))
}

/// Solve `A X = B` for square nonsingular rational `A` by Gaussian elimination.
/// Returns `X` and `det A`, or `None` when `A` is singular.
pub fn rational_solve(
    a: &[Vec<BigRational>],
    b: &[Vec<BigRational>],
) -> Option<(Vec<Vec<BigRational>>, BigRational)> {
    let n = a.len();
    let m = b.first().map_or(0, |r| r.len());
    let mut aug: Vec<Vec<BigRational>> = a.iter().zip(b).map(|(r, s)| r.iter().chain(s).cloned().collect()).collect();
    let mut det = BigRational::one();
    for c in 0..n {
        let p = (c..n).find(|&r| !aug[r][c].is_zero())?;
        if p != c {
            aug.swap(p, c);
            det = -det;
        }
        let piv = aug[c][c].clone();
        det *= &piv;
        for x in aug[c].iter_mut() {
            *x /= &piv;
        }
        for r in 0..n {
            if r == c || aug[r][c].is_zero() {
                continue;
            }
            let f = aug[r][c].clone();
            let (top, rest) = if r < c { let (x, y) = aug.split_at_mut(c); (&mut x[r], &y[0]) } else { let (x, y) = aug.split_at_mut(r); (&mut y[0], &x[c]) };
            for (t, v) in top.iter_mut().zip(rest.iter()) {
                *t -= &f * v;
            }
        }
    }
    Some((aug.into_iter().map(|r| r[n..n + m].to_vec()).collect(), det))
}

/// Determinant of a square rational matrix.
pub fn rational_det(a: &[Vec<BigRational>]) -> BigRational {
    rational_solve(a, &vec![Vec::new(); a.len()]).map_or_else(BigRational::zero, |(_, d)| d)
}
