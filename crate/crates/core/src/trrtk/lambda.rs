use nalgebra::{DMatrix, DVector};

use super::TrRtkError;

const SEARCH_LOOP_MAX: usize = 100_000;

/// Float ambiguities (cycles) and their covariance (cycles²).
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityProblem {
    pub float_values: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Best and second-best integer candidates with their squared distances.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSolution {
    pub integers: Vec<i64>,
    pub second: Vec<i64>,
    /// Quadratic form of the best candidate.
    pub q1: f64,
    /// Quadratic form of the second-best candidate.
    pub q2: f64,
    /// `q2 / q1`; infinite when the float solution is exactly integer.
    pub ratio: f64,
    pub accepted: bool,
}

/// `Q = Lᵀ·diag(D)·L` with `L` unit lower triangular.
fn ltdl(q: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let n = q.nrows();
    let mut a = q.clone();
    let mut l = DMatrix::zeros(n, n);
    let mut d = DVector::zeros(n);
    for i in (0..n).rev() {
        d[i] = a[(i, i)];
        if !(d[i] > 0.0) {
            return None;
        }
        let s = d[i].sqrt();
        for j in 0..=i {
            l[(i, j)] = a[(i, j)] / s;
        }
        for j in 0..i {
            for k in 0..=j {
                a[(j, k)] -= l[(i, k)] * l[(i, j)];
            }
        }
        let lii = l[(i, i)];
        for j in 0..=i {
            l[(i, j)] /= lii;
        }
    }
    Some((l, d))
}

fn round(x: f64) -> f64 {
    (x + 0.5).floor()
}

fn sign(x: f64) -> f64 {
    if x <= 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn gauss(l: &mut DMatrix<f64>, z: &mut DMatrix<f64>, i: usize, j: usize) {
    let n = l.nrows();
    let mu = round(l[(i, j)]);
    if mu != 0.0 {
        for k in i..n {
            l[(k, j)] -= mu * l[(k, i)];
        }
        for k in 0..n {
            z[(k, j)] -= mu * z[(k, i)];
        }
    }
}

fn permute(l: &mut DMatrix<f64>, d: &mut DVector<f64>, j: usize, del: f64, z: &mut DMatrix<f64>) {
    let n = l.nrows();
    let eta = d[j] / del;
    let lam = d[j + 1] * l[(j + 1, j)] / del;
    d[j] = eta * d[j + 1];
    d[j + 1] = del;
    for k in 0..j {
        let a0 = l[(j, k)];
        let a1 = l[(j + 1, k)];
        l[(j, k)] = -l[(j + 1, j)] * a0 + a1;
        l[(j + 1, k)] = eta * a0 + lam * a1;
    }
    l[(j + 1, j)] = lam;
    for k in j + 2..n {
        l.swap((k, j), (k, j + 1));
    }
    z.swap_columns(j, j + 1);
}

/// Decorrelating reduction; returns the integer transform `Z` such that
/// `Zᵀ·Q·Z = Lᵀ·diag(D)·L` with the updated factors.
fn reduction(l: &mut DMatrix<f64>, d: &mut DVector<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut z = DMatrix::identity(n, n);
    if n < 2 {
        return z;
    }
    let mut j = n as isize - 2;
    let mut k = n as isize - 2;
    while j >= 0 {
        let ju = j as usize;
        if j <= k {
            for i in ju + 1..n {
                gauss(l, &mut z, i, ju);
            }
        }
        let del = d[ju] + l[(ju + 1, ju)] * l[(ju + 1, ju)] * d[ju + 1];
        if del + 1e-6 < d[ju + 1] {
            permute(l, d, ju, del, &mut z);
            k = j;
            j = n as isize - 2;
        } else {
            j -= 1;
        }
    }
    z
}

/// Depth-first search for the two integer vectors closest to `zs` in the
/// metric of the decorrelated factors.
fn search(l: &DMatrix<f64>, d: &DVector<f64>, zs: &DVector<f64>) -> Option<Vec<(Vec<f64>, f64)>> {
    const M: usize = 2;
    let n = l.nrows();
    let mut s_mat = DMatrix::<f64>::zeros(n, n);
    let mut dist = vec![0.0; n];
    let mut zb = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut step = vec![0.0; n];
    let mut best: Vec<(Vec<f64>, f64)> = Vec::with_capacity(M);
    let mut imax = 0;
    let mut maxdist = f64::INFINITY;

    let mut k = n - 1;
    zb[k] = zs[k];
    z[k] = round(zb[k]);
    let mut y = zb[k] - z[k];
    step[k] = sign(y);
    let mut finished = false;
    for _ in 0..SEARCH_LOOP_MAX {
        let newdist = dist[k] + y * y / d[k];
        if newdist < maxdist {
            if k != 0 {
                k -= 1;
                dist[k] = newdist;
                for i in 0..=k {
                    s_mat[(k, i)] = s_mat[(k + 1, i)] + (z[k + 1] - zb[k + 1]) * l[(k + 1, i)];
                }
                zb[k] = zs[k] + s_mat[(k, k)];
                z[k] = round(zb[k]);
                y = zb[k] - z[k];
                step[k] = sign(y);
            } else {
                if best.len() < M {
                    if best.is_empty() || newdist > best[imax].1 {
                        imax = best.len();
                    }
                    best.push((z.clone(), newdist));
                    if best.len() == M {
                        maxdist = best[imax].1;
                    }
                } else {
                    if newdist < best[imax].1 {
                        best[imax] = (z.clone(), newdist);
                        imax = if best[0].1 < best[1].1 { 1 } else { 0 };
                    }
                    maxdist = best[imax].1;
                }
                z[0] += step[0];
                y = zb[0] - z[0];
                step[0] = -step[0] - sign(step[0]);
            }
        } else if k == n - 1 {
            finished = true;
            break;
        } else {
            k += 1;
            z[k] += step[k];
            y = zb[k] - z[k];
            step[k] = -step[k] - sign(step[k]);
        }
    }
    if !finished {
        return None;
    }
    best.sort_by(|a, b| a.1.total_cmp(&b.1));
    Some(best)
}

/// Integer least-squares ambiguity resolution with decorrelation and ratio
/// test.
pub fn lambda_resolve(problem: &AmbiguityProblem, ratio_threshold: f64) -> Result<LambdaSolution, TrRtkError> {
    let n = problem.float_values.len();
    let q = &problem.covariance;
    if n == 0 || q.nrows() != n || q.ncols() != n {
        return Err(TrRtkError::NotPositiveDefinite);
    }
    let asym = (q - q.transpose()).abs().max();
    if !(asym <= 1e-9 * q.abs().max()) || q.clone().cholesky().is_none() {
        return Err(TrRtkError::NotPositiveDefinite);
    }
    let (mut l, mut d) = ltdl(q).ok_or(TrRtkError::NotPositiveDefinite)?;
    let z = reduction(&mut l, &mut d);

    // Search around the integer-shifted float values for numerical range.
    let shift = problem.float_values.map(round);
    let frac = &problem.float_values - &shift;
    let zs = z.transpose() * &frac;
    let candidates = search(&l, &d, &zs).ok_or(TrRtkError::SearchFailed)?;
    let zt_inv = z.transpose().try_inverse().ok_or(TrRtkError::NotPositiveDefinite)?;
    let back = |c: &[f64]| -> Vec<i64> {
        let a = &zt_inv * DVector::from_column_slice(c) + &shift;
        a.iter().map(|v| round(*v) as i64).collect()
    };
    let (z1, q1) = &candidates[0];
    let (z2, q2) = &candidates[1];
    let ratio = if *q1 > 0.0 { q2 / q1 } else { f64::INFINITY };
    Ok(LambdaSolution {
        integers: back(z1),
        second: back(z2),
        q1: *q1,
        q2: *q2,
        ratio,
        accepted: ratio >= ratio_threshold,
    })
}

/// Decorrelating integer transform of a covariance (exposed for tests).
pub fn decorrelate(q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (mut l, mut d) = ltdl(q)?;
    Some(reduction(&mut l, &mut d))
}
