//! Small numerical kernels shared by the solvers: finite-difference stencils,
//! fixed-step RK4, time grids and SVD-based subspace helpers.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};

/// Fourth-order central derivative of a scalar function of one variable.
pub fn derivative_5pt<F>(f: F, at: f64, h: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let fp2 = f(at + 2.0 * h)?;
    let fp1 = f(at + h)?;
    let fm1 = f(at - h)?;
    let fm2 = f(at - 2.0 * h)?;
    Ok((8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h))
}

/// Same stencil for vector-valued functions.
pub fn derivative_5pt_vec<F>(f: F, at: f64, h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let fp2 = f(at + 2.0 * h)?;
    let fp1 = f(at + h)?;
    let fm1 = f(at - h)?;
    let fm2 = f(at - 2.0 * h)?;
    Ok((0..fp1.len())
        .map(|i| (8.0 * (fp1[i] - fm1[i]) - (fp2[i] - fm2[i])) / (12.0 * h))
        .collect())
}

/// Gradient of `f` at `x` with a per-coordinate step `step * (1 + |x_i|)`.
pub fn gradient_5pt<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    (0..x.len())
        .map(|i| {
            let h = step * (1.0 + x[i].abs());
            derivative_5pt(
                |s| {
                    let mut probe = x.to_vec();
                    probe[i] += s;
                    f(&probe)
                },
                0.0,
                h,
            )
        })
        .collect()
}

/// Hessian of a scalar function by second differences, step `step * (1 + |x_i|)`.
pub fn hessian_fd<F>(f: F, x: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x.len();
    let hs: Vec<f64> = x.iter().map(|v| step * (1.0 + v.abs())).collect();
    let eval = |shifts: &[(usize, f64)]| -> Result<f64> {
        let mut probe = x.to_vec();
        for &(i, s) in shifts {
            probe[i] += s;
        }
        f(&probe)
    };
    let f0 = f(x)?;
    let mut out = DMatrix::zeros(n, n);
    for a in 0..n {
        let h = hs[a];
        let fp2 = eval(&[(a, 2.0 * h)])?;
        let fp1 = eval(&[(a, h)])?;
        let fm1 = eval(&[(a, -h)])?;
        let fm2 = eval(&[(a, -2.0 * h)])?;
        out[(a, a)] = (16.0 * ((fp1 - f0) + (fm1 - f0)) - ((fp2 - f0) + (fm2 - f0))) / (12.0 * h * h);
        for b in 0..a {
            let k = hs[b];
            let pp = eval(&[(a, h), (b, k)])?;
            let pm = eval(&[(a, h), (b, -k)])?;
            let mp = eval(&[(a, -h), (b, k)])?;
            let mm = eval(&[(a, -h), (b, -k)])?;
            let v = (pp - pm - mp + mm) / (4.0 * h * k);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// Jacobian (rows = outputs) of a vector function by the 5-point stencil.
pub fn jacobian_5pt<F>(f: F, x: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step * (1.0 + x[i].abs());
        let col = derivative_5pt_vec(
            |s| {
                let mut probe = x.to_vec();
                probe[i] += s;
                f(&probe)
            },
            0.0,
            h,
        )?;
        cols.push(col);
    }
    let rows = cols.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows, x.len(), |r, c| cols[c][r]))
}

/// Plain second-order central-difference gradient. Used to cross-check
/// analytic derivatives.
pub fn gradient_central<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step * (1.0 + x[i].abs());
        let mut probe = x.to_vec();
        probe[i] = x[i] + h;
        let fp = f(&probe)?;
        probe[i] = x[i] - h;
        let fm = f(&probe)?;
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// A uniform grid covering `[0, t_final]` whose spacing does not exceed `step`.
///
/// Returns `(number_of_steps, actual_step)`. `t_final = 0` yields zero steps.
pub fn time_grid(t_final: f64, step: f64) -> Result<(usize, f64)> {
    if !t_final.is_finite() || t_final < 0.0 {
        return Err(Error::invalid(format!(
            "final time must be finite and non-negative, got {t_final}"
        )));
    }
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::invalid(format!(
            "step must be finite and positive, got {step}"
        )));
    }
    if t_final == 0.0 {
        return Ok((0, step));
    }
    let steps = (t_final / step - 1e-9).ceil().max(1.0);
    if steps > 1e9 {
        return Err(Error::invalid(format!(
            "step {step} is too small for final time {t_final}"
        )));
    }
    let steps = steps as usize;
    Ok((steps, t_final / steps as f64))
}

/// One classical Runge-Kutta step. The right-hand side receives the stage time.
pub fn rk4_step<F>(y: &[f64], t: f64, h: f64, mut rhs: F) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> {
        y.iter().zip(k).map(|(yi, ki)| yi + a * ki).collect()
    };
    let k1 = rhs(t, y)?;
    let k2 = rhs(t + 0.5 * h, &axpy(0.5 * h, &k1))?;
    let k3 = rhs(t + 0.5 * h, &axpy(0.5 * h, &k2))?;
    let k4 = rhs(t + h, &axpy(h, &k3))?;
    Ok((0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Time derivative of sampled data on a uniform grid, fourth order everywhere.
///
/// Interior points use the centred 5-point stencil, the two points at each end
/// use one-sided 5-point stencils. Fewer than five samples fall back to
/// second-order differences (or zero for a single sample).
pub fn sampled_derivative(samples: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let width = samples[0].len();
    let comb = |coeffs: &[(usize, f64)], scale: f64| -> Vec<f64> {
        (0..width)
            .map(|c| coeffs.iter().map(|&(i, w)| w * samples[i][c]).sum::<f64>() / scale)
            .collect()
    };
    if n == 1 {
        return vec![vec![0.0; width]];
    }
    if n < 5 {
        return (0..n)
            .map(|i| {
                if i == 0 {
                    comb(&[(0, -1.0), (1, 1.0)], dt)
                } else if i == n - 1 {
                    comb(&[(n - 2, -1.0), (n - 1, 1.0)], dt)
                } else {
                    comb(&[(i - 1, -1.0), (i + 1, 1.0)], 2.0 * dt)
                }
            })
            .collect();
    }
    let d = 12.0 * dt;
    (0..n)
        .map(|i| match i {
            0 => comb(&[(0, -25.0), (1, 48.0), (2, -36.0), (3, 16.0), (4, -3.0)], d),
            1 => comb(&[(0, -3.0), (1, -10.0), (2, 18.0), (3, -6.0), (4, 1.0)], d),
            _ if i == n - 2 => comb(
                &[(n - 5, -1.0), (n - 4, 6.0), (n - 3, -18.0), (n - 2, 10.0), (n - 1, 3.0)],
                d,
            ),
            _ if i == n - 1 => comb(
                &[(n - 5, 3.0), (n - 4, -16.0), (n - 3, 36.0), (n - 2, -48.0), (n - 1, 25.0)],
                d,
            ),
            _ => comb(&[(i - 2, 1.0), (i - 1, -8.0), (i + 1, 8.0), (i + 2, -1.0)], d),
        })
        .collect()
}

/// Thin singular value decomposition `m = U diag(sigma) Vᵀ` with `sigma`
/// sorted in decreasing order. `U` is `rows × cols`, `V` is a full
/// `cols × cols` orthogonal matrix.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided Jacobi SVD. The rows are zero padded to at least `cols`, so
/// `V` always spans the full domain.
pub fn svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    let work_rows = rows.max(cols);
    let mut a = DMatrix::zeros(work_rows, cols);
    a.view_mut((0, 0), (rows, cols)).copy_from(m);
    let mut v = DMatrix::identity(cols, cols);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..work_rows {
                    alpha += a[(i, p)] * a[(i, p)];
                    beta += a[(i, q)] * a[(i, q)];
                    gamma += a[(i, p)] * a[(i, q)];
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..work_rows {
                    let (ap, aq) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                }
                for i in 0..cols {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = DMatrix::from_fn(rows, cols, |r, c| {
        let j = order[c];
        if norms[j] > 0.0 {
            a[(r, j)] / norms[j]
        } else {
            0.0
        }
    });
    let v = DMatrix::from_fn(cols, cols, |r, c| v[(r, order[c])]);
    Svd { u, sigma, v }
}

/// Singular values of a matrix (empty matrices have none).
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv = svd(m).sigma;
    sv.truncate(m.nrows().min(m.ncols()));
    sv
}

pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Orthonormal basis (as columns) of the column space of `m`.
///
/// Singular values below `rel_tol * sigma_max` are treated as zero.
pub fn column_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let d = svd(m);
    let sigma_max = d.sigma.first().copied().unwrap_or(0.0);
    if sigma_max == 0.0 {
        return DMatrix::zeros(rows, 0);
    }
    let keep = d.sigma.iter().filter(|&&s| s > rel_tol * sigma_max).count();
    d.u.columns(0, keep).into_owned()
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * sigma_max).count()
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub fn kernel(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let cols = m.ncols();
    if cols == 0 {
        return DMatrix::zeros(0, 0);
    }
    let d = svd(m);
    let sigma_max = d.sigma.first().copied().unwrap_or(0.0);
    let keep = d
        .sigma
        .iter()
        .filter(|&&s| sigma_max > 0.0 && s > rel_tol * sigma_max)
        .count();
    d.v.columns(keep, cols - keep).into_owned()
}

/// Least-squares solution of `m x = b` through the pseudo-inverse.
pub fn lstsq(m: &DMatrix<f64>, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    check_len("least-squares right-hand side", m.nrows(), b.len())?;
    let d = svd(m);
    let sigma_max = d.sigma.first().copied().unwrap_or(0.0);
    let mut x = vec![0.0; m.ncols()];
    for (j, &s) in d.sigma.iter().enumerate() {
        if sigma_max == 0.0 || s <= rel_tol * sigma_max {
            continue;
        }
        let coeff = (0..m.nrows()).map(|i| d.u[(i, j)] * b[i]).sum::<f64>() / s;
        for (k, xk) in x.iter_mut().enumerate() {
            *xk += coeff * d.v[(k, j)];
        }
    }
    Ok(x)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_singular_2x2_column_space() {
        let m = DMatrix::from_row_slice(2, 2, &[0.14470263831662805, 0.14714434044673025, -0.0, -2.220446049250313e-16]);
        let q = column_space(&m, 1e-10);
        assert_eq!(q.ncols(), 1);
        assert!((q[(0, 0)].abs() - 1.0).abs() < 1e-12 && q[(1, 0)].abs() < 1e-12);
        assert_eq!(rank(&m, 1e-10), 1);
    }

    #[test]
    fn svd_reconstructs() {
        let m = DMatrix::from_row_slice(3, 4, &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0, 1.0, 2.0, 4.0, -1.0, 0.0, 0.3]);
        for a in [m.clone(), m.transpose()] {
            let d = svd(&a);
            let sig = DMatrix::from_fn(a.ncols(), a.ncols(), |i, j| if i == j { d.sigma[i] } else { 0.0 });
            assert!((&d.u * sig * d.v.transpose() - &a).amax() < 1e-13);
            assert!((d.v.transpose() * &d.v - DMatrix::identity(a.ncols(), a.ncols())).amax() < 1e-13);
            assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
        let k = kernel(&m, 1e-12);
        assert_eq!(k.ncols(), 1);
        assert!((&m * &k).amax() < 1e-13);
        let x = lstsq(&m.transpose(), &[1.0, 2.0, 3.0, 4.0], 1e-12).unwrap();
        let r = m.clone() * (m.transpose() * DMatrix::from_column_slice(3, 1, &x) - DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]));
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn grid_covers_final_time() {
        let (n, h) = time_grid(6.2832, 1e-3).unwrap();
        assert_eq!(n, 6284);
        assert!((n as f64 * h - 6.2832).abs() < 1e-12);
        assert!(h <= 1e-3);
        assert_eq!(time_grid(1.0, 0.25).unwrap(), (4, 0.25));
        assert_eq!(time_grid(0.0, 0.1).unwrap().0, 0);
        assert!(time_grid(-1.0, 0.1).is_err());
        assert!(time_grid(1.0, 0.0).is_err());
        assert!(time_grid(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn stencils_are_exact_on_quartics() {
        let f = |t: f64| Ok(t.powi(4) - 3.0 * t * t + t);
        let d = derivative_5pt(f, 0.7, 1e-2).unwrap();
        let exact = 4.0 * 0.7f64.powi(3) - 6.0 * 0.7 + 1.0;
        assert!((d - exact).abs() < 1e-11);

        let dt = 0.1;
        let samples: Vec<Vec<f64>> = (0..9)
            .map(|i| {
                let t = i as f64 * dt;
                vec![t.powi(4), 2.0 * t]
            })
            .collect();
        let der = sampled_derivative(&samples, dt);
        for (i, row) in der.iter().enumerate() {
            let t = i as f64 * dt;
            assert!((row[0] - 4.0 * t.powi(3)).abs() < 1e-10, "row {i}");
            assert!((row[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| Ok(x[0] * x[0] + 3.0 * x[0] * x[1] - 0.5 * x[1] * x[1]);
        let h = hessian_fd(f, &[0.3, -1.2], 1e-3).unwrap();
        assert!((h[(0, 0)] - 2.0).abs() < 1e-7);
        assert!((h[(0, 1)] - 3.0).abs() < 1e-7);
        assert!((h[(1, 1)] + 1.0).abs() < 1e-7);
    }

    #[test]
    fn kernel_and_column_space() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let k = kernel(&m, 1e-12);
        assert_eq!(k.ncols(), 1);
        assert!((&m * &k).norm() < 1e-12);
        let c = column_space(&m, 1e-12);
        assert_eq!(c.ncols(), 2);
        assert_eq!(rank(&m, 1e-12), 2);
        assert_eq!(kernel(&DMatrix::zeros(1, 2), 1e-12).ncols(), 2);
    }

    #[test]
    fn rk4_integrates_cubic_exactly() {
        // y' = 3t^2 has polynomial solution; RK4 is exact for it.
        let mut y = vec![0.0];
        let h = 0.1;
        for i in 0..10 {
            y = rk4_step(&y, i as f64 * h, h, |t, _| Ok(vec![3.0 * t * t])).unwrap();
        }
        assert!((y[0] - 1.0).abs() < 1e-13);
    }
}
