//! Small numerical kernels shared by the symbolic and simulation modules:
//! adaptive quadrature, Dormand–Prince integration, tridiagonal and dense
//! linear solves, and bracketed root finding.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericError {
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("root finding failed: {0}")]
    Root(String),
    #[error("singular linear system")]
    Singular,
    #[error("ODE integration failed: {0}")]
    Ode(String),
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
///
/// `f` may fail; the first failure aborts the integration.
pub fn adaptive_simpson<E, F>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Result<f64, E>, NumericError>
where
    F: Fn(f64) -> Result<f64, E>,
{
    if a == b {
        return Ok(Ok(0.0));
    }
    let fa = match f(a) {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    let fb = match f(b) {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    let m = 0.5 * (a + b);
    let fm = match f(m) {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut budget = 200_000usize;
    match simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 50, &mut budget) {
        Ok(Ok(v)) => Ok(Ok(v)),
        Ok(Err(e)) => Ok(Err(e)),
        Err(msg) => Err(NumericError::Quadrature(msg)),
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<E, F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut usize,
) -> Result<Result<f64, E>, String>
where
    F: Fn(f64) -> Result<f64, E>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = match f(lm) {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    let frm = match f(rm) {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if *budget == 0 {
        return Err("evaluation budget exhausted".into());
    }
    *budget -= 1;
    if depth == 0 || delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
        if !delta.is_finite() {
            return Err("non-finite integrand".into());
        }
        return Ok(Ok(left + right + delta / 15.0));
    }
    let l = match simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, budget)? {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    let r = match simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, budget)? {
        Ok(v) => v,
        Err(e) => return Ok(Err(e)),
    };
    Ok(Ok(l + r))
}

/// Solve a tridiagonal system with the Thomas algorithm.
///
/// `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, NumericError> {
    let n = diag.len();
    assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    if diag[0] == 0.0 {
        return Err(NumericError::Singular);
    }
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - lower[i] * c[i - 1];
        if den == 0.0 || !den.is_finite() {
            return Err(NumericError::Singular);
        }
        c[i] = if i + 1 < n { upper[i] / den } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Dense solve with partial pivoting; `a` is row-major `n × n`.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, NumericError> {
    let n = b.len();
    let norm = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col].abs() <= 1e-13 * norm.max(f64::MIN_POSITIVE) {
            return Err(NumericError::Singular);
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// Linear least squares via the normal equations, for small column counts.
pub fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>, NumericError> {
    let m = rows.first().map_or(0, Vec::len);
    let mut ata = vec![vec![0.0; m]; m];
    let mut atb = vec![0.0; m];
    for (r, &y) in rows.iter().zip(rhs) {
        for i in 0..m {
            atb[i] += r[i] * y;
            for j in 0..m {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    solve_dense(ata, atb)
}

/// Find a root of a monotone function in `[lo, hi]` by safeguarded Newton
/// steps that fall back to bisection.
pub fn bracketed_newton<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64, NumericError>
where
    F: Fn(f64) -> Option<(f64, f64)>,
{
    let (flo, _) = f(lo).ok_or_else(|| NumericError::Root("left bracket not evaluable".into()))?;
    let (fhi, _) = f(hi).ok_or_else(|| NumericError::Root("right bracket not evaluable".into()))?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(NumericError::Root("root not bracketed".into()));
    }
    let increasing = fhi > flo;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dfx) =
            f(x).ok_or_else(|| NumericError::Root(format!("evaluation failed at {x}")))?;
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= tol * (1.0 + x.abs()) || (hi - lo) <= tol * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Adaptive Dormand–Prince 5(4) integration of `y' = f(s, y)` from `s0` to `s1`.
pub fn dopri5<const N: usize, F>(
    f: F,
    s0: f64,
    y0: [f64; N],
    s1: f64,
    rtol: f64,
    atol: f64,
) -> Result<[f64; N], NumericError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const BS: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let span = s1 - s0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut s = s0;
    let mut y = y0;
    let mut h = dir * (span.abs() / 100.0).min(0.1);
    let mut steps = 0usize;
    while (s1 - s) * dir > 0.0 {
        if steps > 1_000_000 {
            return Err(NumericError::Ode("too many steps".into()));
        }
        steps += 1;
        if (s + h - s1) * dir > 0.0 {
            h = s1 - s;
        }
        let mut k = [[0.0; N]; 7];
        k[0] = f(s, &y);
        for i in 1..7 {
            let mut yi = y;
            for j in 0..i {
                for n in 0..N {
                    yi[n] += h * A[i][j] * k[j][n];
                }
            }
            k[i] = f(s + C[i] * h, &yi);
        }
        let mut y5 = y;
        let mut err = 0.0f64;
        for n in 0..N {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for i in 0..7 {
                hi += B[i] * k[i][n];
                lo += BS[i] * k[i][n];
            }
            y5[n] += h * hi;
            let sc = atol + rtol * y[n].abs().max(y5[n].abs());
            err = err.max((h * (hi - lo)).abs() / sc);
        }
        if !err.is_finite() {
            return Err(NumericError::Ode("non-finite step".into()));
        }
        if err <= 1.0 {
            s += h;
            y = y5;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if err > 1.0 && h.abs() < 1e-14 * (1.0 + s.abs()) {
            return Err(NumericError::Ode("step size underflow".into()));
        }
    }
    Ok(y)
}

/// Classical fixed-step RK4 for `y' = f(s, y)`.
pub fn rk4<const N: usize, F>(f: F, s0: f64, y0: [f64; N], s1: f64, steps: usize) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let h = (s1 - s0) / steps as f64;
    let mut y = y0;
    let mut s = s0;
    let axpy = |y: &[f64; N], k: &[f64; N], a: f64| {
        let mut out = *y;
        for n in 0..N {
            out[n] += a * k[n];
        }
        out
    };
    for _ in 0..steps {
        let k1 = f(s, &y);
        let k2 = f(s + 0.5 * h, &axpy(&y, &k1, 0.5 * h));
        let k3 = f(s + 0.5 * h, &axpy(&y, &k2, 0.5 * h));
        let k4 = f(s + h, &axpy(&y, &k3, h));
        for n in 0..N {
            y[n] += h / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
        }
        s += h;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_and_exp() {
        let v = adaptive_simpson(|x| Ok::<_, ()>(x * x), 0.0, 3.0, 1e-12)
            .unwrap()
            .unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = adaptive_simpson(|x| Ok::<_, ()>(x.exp()), 0.0, 1.0, 1e-13)
            .unwrap()
            .unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
        let back = adaptive_simpson(|x| Ok::<_, ()>(x.exp()), 1.0, 0.0, 1e-13)
            .unwrap()
            .unwrap();
        assert!((back + v).abs() < 1e-12);
    }

    #[test]
    fn simpson_propagates_integrand_errors() {
        let r = adaptive_simpson(
            |x| if x > 0.5 { Err("pole") } else { Ok(1.0) },
            0.0,
            1.0,
            1e-10,
        )
        .unwrap();
        assert_eq!(r, Err("pole"));
    }

    #[test]
    fn thomas_laplacian() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1] → x = [1 1 1]
        let x = solve_tridiagonal(
            &[0.0, -1.0, -1.0],
            &[2.0, 2.0, 2.0],
            &[-1.0, -1.0, 0.0],
            &[1.0, 0.0, 1.0],
        )
        .unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn dense_solve_and_singular() {
        let x = solve_dense(
            vec![
                vec![1.0, 1.0, 1.0],
                vec![1.0, 2.0, 4.0],
                vec![1.0, 3.0, 9.0],
            ],
            vec![6.0, 17.0, 34.0],
        )
        .unwrap();
        for (a, b) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(
            solve_dense(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]),
            Err(NumericError::Singular)
        );
    }

    #[test]
    fn newton_finds_cube_root() {
        let r =
            bracketed_newton(|x| Some((x * x * x - 2.0, 3.0 * x * x)), 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn dopri_harmonic_oscillator() {
        let y = dopri5(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [0.0, 1.0],
            10.0,
            1e-12,
            1e-14,
        )
        .unwrap();
        assert!((y[0] - 10f64.sin()).abs() < 1e-9);
        let y = rk4(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [0.0, 1.0],
            10.0,
            10_000,
        );
        assert!((y[0] - 10f64.sin()).abs() < 1e-11);
    }
}
