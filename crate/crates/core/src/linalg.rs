//! Dense linear algebra for the small fixed-size systems of the model.
//!
//! Eigenvalues follow the classic EISPACK route: balancing, reduction to
//! upper Hessenberg form by stabilized elimination, then the Francis
//! double-shift QR iteration on the Hessenberg matrix.

use num_complex::Complex64;

use crate::{Error, Result};

pub type Matrix5 = [[f64; 5]; 5];

const RADIX: f64 = 2.0;
const MAX_QR_ITERATIONS: usize = 60;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for a numerically singular matrix.
pub fn solve<const N: usize>(a: &[[f64; N]; N], b: &[f64; N]) -> Option<[f64; N]> {
    let mut m = *a;
    let mut x = *b;
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() <= f64::EPSILON * scale * 1e-3 {
            return None;
        }
        m.swap(col, pivot);
        x.swap(col, pivot);
        for row in col + 1..N {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..N {
                    m[row][k] -= f * m[col][k];
                }
                x[row] -= f * x[col];
            }
        }
    }
    for col in (0..N).rev() {
        let mut acc = x[col];
        for k in col + 1..N {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Some(x)
}

/// All eigenvalues of a real square matrix, sorted by decreasing real part
/// (ties by decreasing imaginary part).
pub fn eigenvalues<const N: usize>(a: &[[f64; N]; N]) -> Result<[Complex64; N]> {
    if a.iter().flat_map(|r| r.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("eigenvalues: non-finite matrix entry".into()));
    }
    // 1-based working copy keeps the index arithmetic of the algorithms readable.
    let mut h = vec![vec![0.0; N + 1]; N + 1];
    for i in 0..N {
        for j in 0..N {
            h[i + 1][j + 1] = a[i][j];
        }
    }
    balance(&mut h, N);
    hessenberg(&mut h, N);
    let (wr, wi) = hessenberg_qr(&mut h, N)?;
    let mut out = [Complex64::new(0.0, 0.0); N];
    for k in 0..N {
        out[k] = Complex64::new(wr[k + 1], wi[k + 1]);
    }
    out.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok(out)
}

/// Largest real part among the eigenvalues, with the matching eigenvalue.
pub fn leading_eigenvalue<const N: usize>(a: &[[f64; N]; N]) -> Result<Complex64> {
    Ok(eigenvalues(a)?[0])
}

fn balance(a: &mut [Vec<f64>], n: usize) {
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 1..=n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let ginv = 1.0 / f;
                    for j in 1..=n {
                        a[i][j] *= ginv;
                    }
                    for j in 1..=n {
                        a[j][i] *= f;
                    }
                }
            }
        }
    }
}

fn hessenberg(a: &mut [Vec<f64>], n: usize) {
    for m in 2..n {
        let mut x = 0.0f64;
        let mut piv = m;
        for j in m..=n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                piv = j;
            }
        }
        if piv != m {
            for j in m - 1..=n {
                let t = a[piv][j];
                a[piv][j] = a[m][j];
                a[m][j] = t;
            }
            for row in a.iter_mut().take(n + 1).skip(1) {
                row.swap(piv, m);
            }
        }
        if x != 0.0 {
            for i in m + 1..=n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        a[i][j] -= y * a[m][j];
                    }
                    for row in a.iter_mut().take(n + 1).skip(1) {
                        row[m] += y * row[i];
                    }
                }
            }
        }
    }
    for i in 3..=n {
        for j in 1..i - 1 {
            a[i][j] = 0.0;
        }
    }
}

#[allow(clippy::many_single_char_names)]
fn hessenberg_qr(a: &mut [Vec<f64>], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.max(2) - 1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        loop {
            // Look for a single small subdiagonal element.
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
                break;
            }
            y = a[nn - 1][nn - 1];
            w = a[nn][nn - 1] * a[nn - 1][nn];
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if z != 0.0 {
                        wr[nn] = x - w / z;
                    }
                    wi[nn - 1] = 0.0;
                    wi[nn] = 0.0;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn -= 2;
                break;
            }
            if its == MAX_QR_ITERATIONS {
                return Err(Error::Convergence(
                    "eigenvalues: QR iteration did not converge".into(),
                ));
            }
            if its == 10 || its == 20 || its == 40 {
                // Exceptional shift.
                t += x;
                for i in 1..=nn {
                    a[i][i] -= x;
                }
                let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            // Look for two consecutive small subdiagonal elements.
            let mut m = nn - 2;
            loop {
                z = a[m][m];
                r = x - z;
                let s0 = y - z;
                p = (r * s0 - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r - s0;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            // Double QR step on rows l..nn and columns m..nn.
            for k in m..nn {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = if k != nn - 1 { a[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = a[k][j] + q * a[k + 1][j];
                        if k != nn - 1 {
                            p += r * a[k + 2][j];
                            a[k + 2][j] -= p * z;
                        }
                        a[k + 1][j] -= p * y;
                        a[k][j] -= p * x;
                    }
                    let mmin = nn.min(k + 3);
                    for i in l..=mmin {
                        p = x * a[i][k] + y * a[i][k + 1];
                        if k != nn - 1 {
                            p += z * a[i][k + 2];
                            a[i][k + 2] -= p * r;
                        }
                        a[i][k + 1] -= p * q;
                        a[i][k] -= p;
                    }
                }
            }
        }
    }
    Ok((wr, wi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
        v
    }

    fn reference<const N: usize>(a: &[[f64; N]; N]) -> Vec<Complex64> {
        let m = DMatrix::from_fn(N, N, |i, j| a[i][j]);
        sorted(m.complex_eigenvalues().iter().copied().collect())
    }

    #[test]
    fn companion_matrix_roots() {
        // roots 1, 2, 3, -1 +- 2i
        let roots = [
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(3.0, 0.0),
            Complex64::new(-1.0, 2.0),
            Complex64::new(-1.0, -2.0),
        ];
        let mut coeffs = vec![Complex64::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
            for (k, c) in coeffs.iter().enumerate() {
                next[k] += c;
                next[k + 1] -= c * r;
            }
            coeffs = next;
        }
        let mut a = [[0.0; 5]; 5];
        for j in 0..5 {
            a[0][j] = -coeffs[j + 1].re;
        }
        for i in 1..5 {
            a[i][i - 1] = 1.0;
        }
        let ev = eigenvalues(&a).unwrap();
        let expected = sorted(roots.to_vec());
        for (got, want) in ev.iter().zip(expected) {
            assert!((got - want).norm() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn diagonal_and_zero() {
        let a = [[0.0; 5]; 5];
        assert!(eigenvalues(&a).unwrap().iter().all(|z| z.norm() == 0.0));
        let mut d = [[0.0; 5]; 5];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = i as f64 - 2.0;
        }
        let ev = eigenvalues(&d).unwrap();
        assert_eq!(ev[0], Complex64::new(2.0, 0.0));
        assert_eq!(ev[4], Complex64::new(-2.0, 0.0));
    }

    #[test]
    fn rejects_nan() {
        let mut a = [[0.0; 5]; 5];
        a[2][3] = f64::NAN;
        assert!(eigenvalues(&a).is_err());
    }

    #[test]
    fn solve_small_system() {
        let a = [[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]];
        let x = solve(&a, &[1.0, 2.0, 3.0]).unwrap();
        for (i, row) in a.iter().enumerate() {
            let lhs: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((lhs - [1.0, 2.0, 3.0][i]).abs() < 1e-14);
        }
        assert!(solve(&[[1.0, 2.0], [2.0, 4.0]], &[1.0, 1.0]).is_none());
    }

    proptest! {
        #[test]
        fn agrees_with_nalgebra(entries in proptest::collection::vec(-3.0f64..3.0, 25)) {
            let mut a = [[0.0; 5]; 5];
            for i in 0..5 {
                for j in 0..5 {
                    a[i][j] = entries[5 * i + j];
                }
            }
            let ours = eigenvalues(&a).unwrap();
            let theirs = reference(&a);
            // Compare as multisets: every eigenvalue has a close partner.
            let scale = 1.0 + theirs.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for z in ours.iter() {
                let best = theirs.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(best < 1e-7 * scale, "{z} not found in {theirs:?}");
            }
            // Trace is preserved.
            let tr: f64 = (0..5).map(|i| a[i][i]).sum();
            let sum: Complex64 = ours.iter().sum();
            prop_assert!((sum.re - tr).abs() < 1e-9 * scale && sum.im.abs() < 1e-9 * scale);
        }

        #[test]
        fn spectrum_closed_under_conjugation(entries in proptest::collection::vec(-1.0f64..1.0, 25)) {
            let mut a = [[0.0; 5]; 5];
            for i in 0..5 {
                for j in 0..5 {
                    a[i][j] = entries[5 * i + j];
                }
            }
            let ev = eigenvalues(&a).unwrap();
            for z in ev.iter() {
                let best = ev.iter().map(|w| (z.conj() - w).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(best < 1e-10);
            }
        }

        #[test]
        fn solve_residual(entries in proptest::collection::vec(-1.0f64..1.0, 30)) {
            let mut a = [[0.0; 5]; 5];
            let mut b = [0.0; 5];
            for i in 0..5 {
                for j in 0..5 {
                    a[i][j] = entries[5 * i + j];
                }
                a[i][i] += 3.0;
                b[i] = entries[25 + i];
            }
            let x = solve(&a, &b).unwrap();
            for i in 0..5 {
                let lhs: f64 = (0..5).map(|j| a[i][j] * x[j]).sum();
                prop_assert!((lhs - b[i]).abs() < 1e-12);
            }
        }
    }
}
