//! Small dense symmetric solvers: LDL^T with inertia, and shifted inverse
//! iteration with deflation for the lowest eigenpairs.

use nalgebra::{DMatrix, DVector};

/// `A = L D L^T` without pivoting. Fails on a vanishing pivot.
#[derive(Debug, Clone)]
pub struct Ldlt {
    l: DMatrix<f64>,
    d: DVector<f64>,
}

impl Ldlt {
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LDL^T needs a square matrix");
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut l = DMatrix::<f64>::identity(n, n);
        let mut d = DVector::<f64>::zeros(n);
        let mut w = vec![0.0; n];
        for j in 0..n {
            let mut dj = a[(j, j)];
            for k in 0..j {
                w[k] = l[(j, k)] * d[k];
                dj -= l[(j, k)] * w[k];
            }
            if !dj.is_finite() || dj.abs() <= 1e-14 * scale {
                return None;
            }
            d[j] = dj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * w[k];
                }
                l[(i, j)] = s / dj;
            }
        }
        Some(Self { l, d })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.d.len();
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s;
        }
        x
    }

    /// Numbers of negative and positive pivots.
    pub fn inertia(&self) -> (usize, usize) {
        let neg = self.d.iter().filter(|v| **v < 0.0).count();
        (neg, self.d.len() - neg)
    }
}

/// Symmetric solve: LDL^T when it exists, LU otherwise.
pub fn solve_symmetric(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    match Ldlt::new(a) {
        Some(f) => Some(f.solve(b)),
        None => a.clone().lu().solve(b),
    }
}

/// Number of eigenvalues of `a` below `sigma`.
pub fn count_below(a: &DMatrix<f64>, sigma: f64) -> usize {
    let n = a.nrows();
    let shifted = |s: f64| {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= s;
        }
        Ldlt::new(&m)
    };
    let mut s = sigma;
    let bump = 1e-12 * gershgorin(a).1.abs().max(1.0);
    for k in 0..8 {
        if let Some(f) = shifted(s) {
            return f.inertia().0;
        }
        // nudge off an exact pivot breakdown
        s = sigma - bump * (1 << k) as f64;
    }
    // fall back on a full decomposition
    a.clone().symmetric_eigen().eigenvalues.iter().filter(|v| **v < sigma).count()
}

/// Bounds on the spectrum of a symmetric matrix.
pub fn gershgorin(a: &DMatrix<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..a.nrows() {
        let r: f64 = (0..a.ncols()).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
        lo = lo.min(a[(i, i)] - r);
        hi = hi.max(a[(i, i)] + r);
    }
    if a.nrows() == 0 {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500 }
    }
}

fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(v);
            v.axpy(-c, b, 1.0);
        }
    }
}

/// Orthonormal basis of the span of `vs` (vectors with negligible residual are dropped).
pub fn orthonormal(vs: &[DVector<f64>], against: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vs {
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        orthogonalize(&mut w, against);
        orthogonalize(&mut w, &out);
        let nw = w.norm();
        if nw > 1e-8 * scale {
            out.push(w / nw);
        }
    }
    out
}

/// The `k` lowest eigenpairs of symmetric `a` on the orthogonal complement
/// of the orthonormal vectors `deflate`, ascending.
///
/// Each eigenvalue is bracketed by inertia counts so the shift sits just
/// below it, then refined by inverse iteration against the pairs already found.
pub fn lowest_eigenpairs(
    a: &DMatrix<f64>,
    k: usize,
    deflate: &[DVector<f64>],
    settings: &EigenSettings,
) -> Option<Vec<(f64, DVector<f64>)>> {
    let n = a.nrows();
    let avail = n.saturating_sub(deflate.len());
    let k = k.min(avail);
    let mut found: Vec<(f64, DVector<f64>)> = Vec::with_capacity(k);
    if k == 0 {
        return Some(found);
    }
    let (glo, ghi) = gershgorin(a);
    let span = (ghi - glo).abs().max(1e-300);
    let deflated_below = |s: f64| {
        deflate
            .iter()
            .filter(|z| z.dot(&(a * *z)) < s)
            .count()
    };
    let below = |s: f64| count_below(a, s).saturating_sub(deflated_below(s));

    for j in 0..k {
        // bracket the (j+1)-th eigenvalue of the complement
        let (mut lo, mut hi) = (glo - 1e-3 * span, ghi + 1e-3 * span);
        for _ in 0..200 {
            if hi - lo <= 1e-9 * span {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let sigma = lo - 1e-9 * span;
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= sigma;
        }
        let fact = Ldlt::new(&m);
        let lu = if fact.is_none() { Some(m.clone().lu()) } else { None };
        let apply = |v: &DVector<f64>| -> Option<DVector<f64>> {
            match &fact {
                Some(f) => Some(f.solve(v)),
                None => lu.as_ref().unwrap().solve(v),
            }
        };

        let prev: Vec<DVector<f64>> =
            deflate.iter().cloned().chain(found.iter().map(|(_, v)| v.clone())).collect();
        // deterministic start vector
        let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919 + j * 104729) % 97) as f64 / 97.0);
        orthogonalize(&mut v, &prev);
        let nv = v.norm();
        if nv == 0.0 {
            return None;
        }
        v /= nv;
        let mut converged = false;
        let mut lambda = 0.0;
        for _ in 0..settings.max_iter {
            let mut w = apply(&v)?;
            orthogonalize(&mut w, &prev);
            let nw = w.norm();
            if !nw.is_finite() || nw == 0.0 {
                return None;
            }
            v = w / nw;
            let av = a * &v;
            lambda = v.dot(&av);
            let res = (av - lambda * &v).norm();
            if res <= settings.tol * span {
                converged = true;
                break;
            }
        }
        if !converged {
            return None;
        }
        found.push((lambda, v));
    }
    found.sort_by(|x, y| x.0.total_cmp(&y.0));
    Some(found)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                4.0 + i as f64
            } else {
                1.0 / (1.0 + (i as f64 - j as f64).abs())
            }
        })
    }

    #[test]
    fn ldlt_solves_and_counts() {
        let a = spd(6);
        let b = DVector::from_fn(6, |i, _| i as f64 - 2.0);
        let f = Ldlt::new(&a).unwrap();
        assert!((&a * f.solve(&b) - &b).norm() < 1e-12);
        assert_eq!(f.inertia(), (0, 6));
        let eig = a.clone().symmetric_eigen().eigenvalues;
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert_eq!(count_below(&a, 0.5 * (ev[2] + ev[3])), 3);
    }

    #[test]
    fn lowest_pairs_match_dense_decomposition() {
        let a = spd(8);
        let got = lowest_eigenpairs(&a, 3, &[], &EigenSettings::default()).unwrap();
        let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (j, (l, v)) in got.iter().enumerate() {
            assert!((l - ev[j]).abs() < 1e-9);
            assert!((&a * v - *l * v).norm() < 1e-8);
        }
    }

    #[test]
    fn deflation_skips_null_vectors() {
        // diag(0, 0, 1, 2, 3) with the null space deflated
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0, 2.0, 3.0]));
        let z = vec![DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0]), DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0])];
        let got = lowest_eigenpairs(&a, 2, &z, &EigenSettings::default()).unwrap();
        assert!((got[0].0 - 1.0).abs() < 1e-10);
        assert!((got[1].0 - 2.0).abs() < 1e-10);
    }
}
