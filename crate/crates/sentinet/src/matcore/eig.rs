//! Spectral radius and 2-norm via power iteration, with a Hessenberg + shifted
//! QR eigenvalue fallback for matrices whose dominant eigenvalues are complex.

use super::{Mat, MatError};

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Deterministic start vector; mildly uneven so it is not orthogonal to the
/// dominant eigenvector of typical structured matrices.
fn start_vector(n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7 + 3) % 13) as f64).collect();
    normalize(&mut v);
    v
}

/// Largest singular value of `a`, via power iteration on aᵀa.
pub fn two_norm(a: &Mat, tol: f64) -> Result<f64, MatError> {
    two_norm_iter(a, tol, 10_000)
}

pub fn two_norm_iter(a: &Mat, tol: f64, max_iter: usize) -> Result<f64, MatError> {
    let at = a.transpose();
    let mut x = start_vector(a.cols());
    let mut lam_prev = f64::INFINITY;
    let mut lam = 0.0;
    for _ in 0..max_iter {
        let mut y = at.matvec(&a.matvec(&x));
        lam = normalize(&mut y);
        if lam == 0.0 {
            return Ok(0.0);
        }
        x = y;
        if (lam - lam_prev).abs() <= tol * lam.max(1.0) {
            return Ok(lam.sqrt());
        }
        lam_prev = lam;
    }
    Err(MatError::NonConvergence { best: lam.sqrt() })
}

/// Spectral radius within `tol`. Power iteration first; if the dominant
/// eigenvalue pair is complex (no convergence), fall back to the full
/// Hessenberg/QR eigenvalue sweep and take the maximum modulus.
pub fn spectral_radius(a: &Mat, tol: f64, max_iter: usize) -> Result<f64, MatError> {
    if !a.is_square() {
        return Err(MatError::NotSquare);
    }
    let n = a.rows();
    if n == 1 {
        return Ok(a.get(0, 0).abs());
    }
    let scale = a.frobenius();
    if scale == 0.0 {
        return Ok(0.0);
    }

    // Power iteration with a residual check; restart cheaply once in case the
    // start vector was nearly deficient in the dominant direction.
    for restart in 0..2 {
        let mut x = start_vector(n);
        if restart == 1 {
            for (i, v) in x.iter_mut().enumerate() {
                *v *= if i % 2 == 0 { 1.0 } else { -1.0 };
            }
            normalize(&mut x);
        }
        let budget = max_iter.min(500);
        for _ in 0..budget {
            let y = a.matvec(&x);
            // Rayleigh quotient (x already unit norm)
            let mu: f64 = x.iter().zip(&y).map(|(xi, yi)| xi * yi).sum();
            let resid: f64 = y
                .iter()
                .zip(&x)
                .map(|(yi, xi)| (yi - mu * xi).powi(2))
                .sum::<f64>()
                .sqrt();
            if resid <= tol.max(1e-12) * scale {
                return Ok(mu.abs());
            }
            let mut y = y;
            if normalize(&mut y) == 0.0 {
                return Ok(0.0);
            }
            x = y;
        }
    }

    // QR fallback: all eigenvalues, max modulus.
    let eigs = eigenvalues(a, max_iter)?;
    let mut best = 0.0f64;
    for (re, im) in eigs {
        best = best.max((re * re + im * im).sqrt());
    }
    Ok(best)
}

/// All eigenvalues of a square matrix as (re, im) pairs, by Householder
/// Hessenberg reduction followed by Francis double-shift QR iteration.
pub fn eigenvalues(a: &Mat, _max_iter: usize) -> Result<Vec<(f64, f64)>, MatError> {
    if !a.is_square() {
        return Err(MatError::NotSquare);
    }
    let mut h = hessenberg(a);
    hqr(&mut h)
}

/// Householder reduction to upper Hessenberg form.
fn hessenberg(a: &Mat) -> Vec<Vec<f64>> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    if n < 3 {
        return m;
    }
    for k in 0..n - 2 {
        // Householder vector zeroing m[k+2..][k]
        let mut norm2 = 0.0;
        for i in k + 1..n {
            norm2 += m[i][k] * m[i][k];
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if m[k + 1][k] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = vec![0.0; n];
        v[k + 1] = m[k + 1][k] - alpha;
        for i in k + 2..n {
            v[i] = m[i][k];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // A <- (I - 2vvᵀ/vᵀv) A
        for j in 0..n {
            let dot: f64 = (k + 1..n).map(|i| v[i] * m[i][j]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k + 1..n {
                m[i][j] -= f * v[i];
            }
        }
        // A <- A (I - 2vvᵀ/vᵀv)
        for i in 0..n {
            let dot: f64 = (k + 1..n).map(|j| v[j] * m[i][j]).sum();
            let f = 2.0 * dot / vnorm2;
            for j in k + 1..n {
                m[i][j] -= f * v[j];
            }
        }
        // clean the explicitly zeroed entries
        for i in k + 2..n {
            m[i][k] = 0.0;
        }
    }
    m
}

fn sign_of(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix; returns eigenvalues
/// as (re, im) pairs. Classic hqr scheme with exceptional shifts.
#[allow(clippy::needless_range_loop)]
fn hqr(m: &mut [Vec<f64>]) -> Result<Vec<(f64, f64)>, MatError> {
    let n = m.len();
    let mut wr = vec![0.0f64; n];
    let mut wi = vec![0.0f64; n];

    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += m[i][j].abs();
        }
    }
    if anorm == 0.0 {
        return Ok(vec![(0.0, 0.0); n]);
    }

    let eps = f64::EPSILON;
    let mut nn = n as isize - 1;
    let mut t = 0.0f64;
    while nn >= 0 {
        let mut its = 0;
        loop {
            // look for a single small subdiagonal element
            let mut l = 0isize;
            let mut found = false;
            let mut ll = nn;
            while ll >= 1 {
                let s = m[(ll - 1) as usize][(ll - 1) as usize].abs()
                    + m[ll as usize][ll as usize].abs();
                let s = if s == 0.0 { anorm } else { s };
                if m[ll as usize][(ll - 1) as usize].abs() <= eps * s {
                    m[ll as usize][(ll - 1) as usize] = 0.0;
                    l = ll;
                    found = true;
                    break;
                }
                ll -= 1;
            }
            if !found {
                l = 0;
            }
            let mut x = m[nn as usize][nn as usize];
            if l == nn {
                // one root found
                wr[nn as usize] = x + t;
                wi[nn as usize] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = m[(nn - 1) as usize][(nn - 1) as usize];
            let mut w = m[nn as usize][(nn - 1) as usize] * m[(nn - 1) as usize][nn as usize];
            if l == nn - 1 {
                // two roots found
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + sign_of(z, p);
                    wr[(nn - 1) as usize] = x + z;
                    wr[nn as usize] = if z != 0.0 { x - w / z } else { x + z };
                    wi[(nn - 1) as usize] = 0.0;
                    wi[nn as usize] = 0.0;
                } else {
                    wr[(nn - 1) as usize] = x + p;
                    wr[nn as usize] = x + p;
                    wi[nn as usize] = z;
                    wi[(nn - 1) as usize] = -z;
                }
                nn -= 2;
                break;
            }
            // no root yet: QR step
            if its == 60 {
                let best = (x * x).sqrt();
                return Err(MatError::NonConvergence { best });
            }
            if its == 10 || its == 20 || its == 30 || its == 40 || its == 50 {
                // exceptional shift
                t += x;
                for i in 0..=nn as usize {
                    m[i][i] -= x;
                }
                let s = m[nn as usize][(nn - 1) as usize].abs()
                    + m[(nn - 1) as usize][(nn - 2) as usize].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            // find two consecutive small subdiagonals
            let mut mm = nn - 2;
            let mut p = 0.0;
            let mut q = 0.0;
            let mut r = 0.0;
            while mm >= l {
                let z = m[mm as usize][mm as usize];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / m[(mm + 1) as usize][mm as usize]
                    + m[mm as usize][(mm + 1) as usize];
                q = m[(mm + 1) as usize][(mm + 1) as usize] - z - rr - ss;
                r = m[(mm + 2) as usize][(mm + 1) as usize];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if mm == l {
                    break;
                }
                let u = m[mm as usize][(mm - 1) as usize].abs() * (q.abs() + r.abs());
                let v = z.abs()
                    * (p.abs()
                        + m[(mm - 1) as usize][(mm - 1) as usize].abs()
                        + m[(mm + 1) as usize][(mm + 1) as usize].abs());
                if u <= eps * v {
                    break;
                }
                mm -= 1;
            }
            for i in (mm + 2)..=nn {
                m[i as usize][(i - 2) as usize] = 0.0;
                if i > mm + 2 {
                    m[i as usize][(i - 3) as usize] = 0.0;
                }
            }
            // double QR step on rows l..nn and columns mm..nn
            for k in mm..nn {
                if k != mm {
                    p = m[k as usize][(k - 1) as usize];
                    q = m[(k + 1) as usize][(k - 1) as usize];
                    r = if k != nn - 1 {
                        m[(k + 2) as usize][(k - 1) as usize]
                    } else {
                        0.0
                    };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign_of((p * p + q * q + r * r).sqrt(), p);
                if s == 0.0 {
                    continue;
                }
                if k == mm {
                    if l != mm {
                        m[k as usize][(k - 1) as usize] = -m[k as usize][(k - 1) as usize];
                    }
                } else {
                    m[k as usize][(k - 1) as usize] = -s * x;
                }
                p += s;
                x = p / s;
                let yy = q / s;
                let zz = r / s;
                q /= p;
                r /= p;
                for j in (k as usize)..=(nn as usize) {
                    let mut pp = m[k as usize][j] + q * m[(k + 1) as usize][j];
                    if k != nn - 1 {
                        pp += r * m[(k + 2) as usize][j];
                        m[(k + 2) as usize][j] -= pp * zz;
                    }
                    m[(k + 1) as usize][j] -= pp * yy;
                    m[k as usize][j] -= pp * x;
                }
                let mmin = nn.min(k + 3);
                for i in (l as usize)..=(mmin as usize) {
                    let mut pp = x * m[i][k as usize] + yy * m[i][(k + 1) as usize];
                    if k != nn - 1 {
                        pp += zz * m[i][(k + 2) as usize];
                        m[i][(k + 2) as usize] -= pp * r;
                    }
                    m[i][(k + 1) as usize] -= pp * q;
                    m[i][k as usize] -= pp;
                }
            }
        }
    }
    Ok(wr.into_iter().zip(wi).collect())
}
