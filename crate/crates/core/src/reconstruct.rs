//! Reconstruction of group curves from reduced solutions, and the Heisenberg
//! geodesics in chart coordinates.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::heisenberg;
use crate::lie::{AlgebraElement, GroupElement, LieAlgebraSpec};
use crate::numeric;
use crate::trajectory::{StateBlock, Trajectory};

/// Deviation above which a printed closed form is reported as not matching.
pub const PRINTED_FORM_TOL: f64 = 1e-5;
const UNITRIANGULAR_TOL: f64 = 1e-12;

/// Integrates `ġ = g ξ(t)` from uniformly spaced samples `ξ_0 … ξ_N` with the
/// Lie-Euler midpoint rule `g_{k+1} = g_k exp(step (ξ_k + ξ_{k+1})/2)`.
pub fn reconstruct_group(
    alg: &LieAlgebraSpec,
    g0: &GroupElement,
    xi: &[AlgebraElement],
    step: f64,
) -> Result<Vec<GroupElement>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(format!("reconstruction step must be positive, got {step}")));
    }
    let size = alg
        .matrix_size()
        .ok_or_else(|| Error::invalid("reconstruction needs a matrix realization of the algebra"))?;
    check_len("initial group element size", size, g0.size())?;
    let mut out = Vec::with_capacity(xi.len().max(1));
    out.push(g0.clone());
    for w in xi.windows(2) {
        check_len("algebra sample", alg.dim(), w[0].dim())?;
        check_len("algebra sample", alg.dim(), w[1].dim())?;
        let mid = AlgebraElement(
            w[0].coeffs()
                .iter()
                .zip(w[1].coeffs())
                .map(|(a, b)| 0.5 * step * (a + b))
                .collect(),
        );
        let next = out.last().expect("nonempty").compose(&alg.exp_nilpotent(&mid)?);
        out.push(next);
    }
    Ok(out)
}

/// Reconstructs the group curve of a reduced trajectory, reading `ξ` from its
/// `xi_1 … xi_m` channels. The result has block `q` (exponential coordinates
/// of `g(t)`) and channels `xi_*`, plus `speed2 = Σ u_a²` when the trajectory
/// carries controls.
pub fn reconstruct_trajectory(
    alg: &LieAlgebraSpec,
    g0: &GroupElement,
    reduced: &Trajectory,
) -> Result<Trajectory> {
    let m = alg.dim();
    let channels = (1..=m)
        .map(|i| {
            let name = format!("xi_{i}");
            reduced
                .channel(&name)
                .map(|c| (name.clone(), c))
                .ok_or_else(|| Error::invalid(format!("reduced trajectory has no channel `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let step = match reduced.len() {
        0 => return Err(Error::invalid("reduced trajectory is empty")),
        1 => 1.0,
        _ => reduced
            .uniform_step()
            .ok_or_else(|| Error::invalid("reconstruction needs a uniform time grid"))?,
    };
    let xi: Vec<AlgebraElement> = (0..reduced.len())
        .map(|row| AlgebraElement(channels.iter().map(|(_, c)| c[row]).collect()))
        .collect();
    let gs = reconstruct_group(alg, g0, &xi, step)?;
    let mut out = Trajectory::new(vec![StateBlock::new("q", m)]);
    let controls = reduced.block_rows("u").ok();
    for (row, g) in gs.iter().enumerate() {
        out.push(reduced.times[row], alg.log_nilpotent(g)?.0);
        for (name, c) in &channels {
            out.push_channel(name, c[row]);
        }
        if let Some(us) = &controls {
            out.push_channel("speed2", us[row].iter().map(|v| v * v).sum());
        }
    }
    Ok(out)
}

/// `(a, b, c − ab/2)` for the unitriangular matrix with `a = g₁₂`,
/// `b = g₂₃`, `c = g₁₃`.
pub fn heisenberg_chart(g: &GroupElement) -> Result<[f64; 3]> {
    if g.size() != 3 || !g.is_unitriangular(UNITRIANGULAR_TOL) {
        return Err(Error::invalid(
            "Heisenberg chart needs a 3x3 upper unitriangular matrix",
        ));
    }
    let m = g.matrix();
    let (a, b, c) = (m[(0, 1)], m[(1, 2)], m[(0, 2)]);
    Ok([a, b, c - 0.5 * a * b])
}

/// Chart geodesic from the origin obtained by RK4 on
/// `ẋ = λ₁(t), ẏ = λ₂(t), ż = (x λ₂ − y λ₁)/2` with the closed-form momentum
/// `λ(t) = (cos(θ + kt), sin(θ + kt), k)`. `k = 0` gives straight lines.
pub fn heisenberg_geodesic_oracle(theta: f64, k: f64, t_final: f64, step: f64) -> Result<Trajectory> {
    let (steps, h) = numeric::time_grid(t_final, step)?;
    let mut tr = Trajectory::new(vec![StateBlock::new("q", 3)]);
    let mut q = vec![0.0; 3];
    tr.push(0.0, q.clone());
    for i in 0..steps {
        let t = i as f64 * h;
        q = numeric::rk4_step(&q, t, h, |s, y| {
            let [l1, l2, _] = heisenberg::momentum_at(theta, k, s);
            Ok(vec![l1, l2, 0.5 * (y[0] * l2 - y[1] * l1)])
        })?;
        let next = if i + 1 == steps { t_final } else { (i + 1) as f64 * h };
        tr.push(next, q.clone());
    }
    Ok(tr)
}

/// The closed forms as printed in the literature for the same geodesics.
pub fn printed_geodesic(theta: f64, k: f64, t: f64) -> [f64; 3] {
    [
        ((k * t + theta).sin() - theta.sin()) / k,
        ((k * t + theta).cos() + theta.cos()) / k,
        (k * t).sin() / (k * k) + t / k,
    ]
}

/// Center `(−sin θ / k, cos θ / k)` and radius `1/|k|` of the projected circle.
pub fn expected_circle(theta: f64, k: f64) -> ([f64; 2], f64) {
    ([-theta.sin() / k, theta.cos() / k], 1.0 / k.abs())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub theta: f64,
    pub k: f64,
    pub t_final: f64,
    /// Largest deviation of the printed `x`, `y`, `z` from the oracle.
    pub deviations: [f64; 3],
    pub matches: [bool; 3],
    /// Projected circle fitted to the oracle path.
    pub circle: CircleFit,
    pub expected_center: [f64; 2],
    pub expected_radius: f64,
}

impl OracleReport {
    pub fn all_match(&self) -> bool {
        self.matches.iter().all(|m| *m)
    }
}

/// Compares the printed closed forms with the oracle on its time grid.
pub fn compare_printed_geodesic(theta: f64, k: f64, t_final: f64, step: f64) -> Result<OracleReport> {
    if k == 0.0 {
        return Err(Error::invalid("the printed closed forms are singular at k = 0"));
    }
    let tr = heisenberg_geodesic_oracle(theta, k, t_final, step)?;
    let mut dev = [0.0f64; 3];
    let mut pts = Vec::with_capacity(tr.len());
    for (i, t) in tr.times.iter().enumerate() {
        let q = tr.block_at(i, "q")?;
        let printed = printed_geodesic(theta, k, *t);
        for c in 0..3 {
            dev[c] = dev[c].max((printed[c] - q[c]).abs());
        }
        pts.push([q[0], q[1]]);
    }
    let (center, radius) = expected_circle(theta, k);
    Ok(OracleReport {
        theta,
        k,
        t_final,
        deviations: dev,
        matches: dev.map(|d| d <= PRINTED_FORM_TOL),
        circle: circle_fit(&pts)?,
        expected_center: center,
        expected_radius: radius,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircleFit {
    pub center: [f64; 2],
    pub radius: f64,
    /// Largest `| |p − c| − r |` over the fitted points.
    pub max_radial_deviation: f64,
}

/// Algebraic least-squares circle fit (Kåsa): solves
/// `x² + y² + D x + E y + F = 0`.
pub fn circle_fit(points: &[[f64; 2]]) -> Result<CircleFit> {
    if points.len() < 3 {
        return Err(Error::invalid("a circle fit needs at least three points"));
    }
    let a = DMatrix::from_fn(points.len(), 3, |i, j| match j {
        0 => points[i][0],
        1 => points[i][1],
        _ => 1.0,
    });
    let b: Vec<f64> = points.iter().map(|p| -(p[0].powi(2) + p[1].powi(2))).collect();
    if numeric::rank(&a, 1e-12) < 3 {
        return Err(Error::invalid("points are collinear; no circle fits"));
    }
    let sol = numeric::lstsq(&a, &b, 1e-12)?;
    let center = [-sol[0] / 2.0, -sol[1] / 2.0];
    let r2 = center[0].powi(2) + center[1].powi(2) - sol[2];
    if !(r2 > 0.0) {
        return Err(Error::invalid("points are collinear; no circle fits"));
    }
    let radius = r2.sqrt();
    let max_radial_deviation = points
        .iter()
        .map(|p| ((p[0] - center[0]).hypot(p[1] - center[1]) - radius).abs())
        .fold(0.0, f64::max);
    Ok(CircleFit {
        center,
        radius,
        max_radial_deviation,
    })
}

/// Largest `| |(x, y) − c| − r |` along a chart trajectory with block `q`.
pub fn radial_deviation(traj: &Trajectory, center: [f64; 2], radius: f64) -> Result<f64> {
    Ok(traj
        .block_rows("q")?
        .iter()
        .map(|q| ((q[0] - center[0]).hypot(q[1] - center[1]) - radius).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn heis() -> LieAlgebraSpec {
        LieAlgebraSpec::heisenberg()
    }

    fn closed_form_xi(theta: f64, k: f64, step: f64, n: usize) -> Vec<AlgebraElement> {
        (0..=n)
            .map(|i| {
                let [a, b, _] = heisenberg::momentum_at(theta, k, i as f64 * step);
                AlgebraElement(vec![a, b, 0.0])
            })
            .collect()
    }

    #[test]
    fn zero_velocity_stays_put() {
        let g0 = heis().exp_nilpotent(&AlgebraElement(vec![0.3, 0.1, -2.0])).unwrap();
        let gs = reconstruct_group(&heis(), &g0, &vec![AlgebraElement::zeros(3); 20], 0.1).unwrap();
        assert!(gs.iter().all(|g| *g == g0));
    }

    #[test]
    fn constant_velocity_is_subgroup() {
        let xi = AlgebraElement(vec![0.5, -1.0, 0.25]);
        let g0 = heis().exp_nilpotent(&AlgebraElement(vec![1.0, 2.0, 3.0])).unwrap();
        let gs = reconstruct_group(&heis(), &g0, &vec![xi.clone(); 101], 0.01).unwrap();
        let expected = g0.compose(&heis().exp_nilpotent(&xi.scaled(1.0)).unwrap());
        assert!((gs[100].matrix() - expected.matrix()).amax() <= 1e-13);
    }

    #[test]
    fn exact_unitriangularity() {
        let gs = reconstruct_group(&heis(), &GroupElement::identity(3), &closed_form_xi(0.3, 2.0, 1e-2, 300), 1e-2)
            .unwrap();
        for g in &gs {
            let m = g.matrix();
            assert!((0..3).all(|i| m[(i, i)] == 1.0));
            assert!(m[(1, 0)] == 0.0 && m[(2, 0)] == 0.0 && m[(2, 1)] == 0.0);
        }
    }

    #[test]
    fn chart_examples() {
        assert_eq!(heisenberg_chart(&GroupElement::identity(3)).unwrap(), [0.0; 3]);
        let g = heis().exp_nilpotent(&AlgebraElement(vec![0.7, -1.3, 0.4])).unwrap();
        let q = heisenberg_chart(&g).unwrap();
        assert!(numeric::max_abs_diff(&q, &[0.7, -1.3, 0.4]) <= 1e-15);
        let g = heis().exp_nilpotent(&AlgebraElement(vec![0.0, 0.0, 1.0])).unwrap();
        assert_eq!(heisenberg_chart(&g).unwrap(), [0.0, 0.0, 1.0]);
        let mut bad = DMatrix::identity(3, 3);
        bad[(2, 0)] = 0.1;
        assert!(heisenberg_chart(&GroupElement(bad)).is_err());
        assert!(heisenberg_chart(&GroupElement::identity(4)).is_err());
    }

    #[test]
    fn circles_from_reconstruction() {
        let (theta, k, step) = (0.0, 2.0, 1e-3);
        let n = (2.0 * PI / k / step).round() as usize;
        let gs = reconstruct_group(&heis(), &GroupElement::identity(3), &closed_form_xi(theta, k, step, n), step)
            .unwrap();
        let (c, r) = expected_circle(theta, k);
        for g in &gs {
            let q = heisenberg_chart(g).unwrap();
            assert!(((q[0] - c[0]).hypot(q[1] - c[1]) - r).abs() <= 1e-5);
        }
    }

    #[test]
    fn oracle_straight_line() {
        let tr = heisenberg_geodesic_oracle(0.0, 0.0, 2.0, 1e-2).unwrap();
        for (i, t) in tr.times.iter().enumerate() {
            let q = tr.block_at(i, "q").unwrap();
            assert!(numeric::max_abs_diff(q, &[*t, 0.0, 0.0]) <= 1e-12);
        }
    }

    #[test]
    fn oracle_circle_and_period() {
        for (theta, k) in [(0.0, 1.0), (0.7, -2.5), (2.0, 0.5)] {
            let period = 2.0 * PI / f64::abs(k);
            let tr = heisenberg_geodesic_oracle(theta, k, period, 1e-3).unwrap();
            let (c, r) = expected_circle(theta, k);
            assert!(radial_deviation(&tr, c, r).unwrap() <= 1e-5);
            let end = tr.block_at(tr.len() - 1, "q").unwrap();
            assert!(end[0].abs() <= 1e-9 && end[1].abs() <= 1e-9);
            assert!(end[2].abs() > 1e-3);
        }
    }

    #[test]
    fn printed_forms_report() {
        let rep = compare_printed_geodesic(0.4, 1.5, 2.0 * PI / 1.5, 1e-3).unwrap();
        assert!(rep.matches[0]);
        assert!(!rep.matches[1] && !rep.matches[2]);
        assert!(!rep.all_match());
        assert!((rep.circle.radius - rep.expected_radius).abs() <= 1e-6);
        assert!(numeric::max_abs_diff(&rep.circle.center, &rep.expected_center) <= 1e-6);
        assert!(compare_printed_geodesic(0.0, 0.0, 1.0, 1e-3).is_err());
    }

    #[test]
    fn circle_fit_exact() {
        let pts: Vec<[f64; 2]> = (0..10)
            .map(|i| {
                let a = i as f64 * 0.3;
                [1.0 + 2.0 * a.cos(), -3.0 + 2.0 * a.sin()]
            })
            .collect();
        let fit = circle_fit(&pts).unwrap();
        assert!(numeric::max_abs_diff(&fit.center, &[1.0, -3.0]) <= 1e-10);
        assert!((fit.radius - 2.0).abs() <= 1e-10);
        assert!(circle_fit(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_err());
        assert!(circle_fit(&pts[..2]).is_err());
    }
}
