//! Finite-dimensional Lie algebras given by structure constants, together with
//! their matrix realizations and the exponential of nilpotent matrix algebras.
//!
//! # Coadjoint convention
//!
//! `coadjoint(ξ, λ)` is defined by
//!
//! ```text
//! ⟨ad*_ξ λ, ζ⟩ = ⟨λ, [ξ, ζ]⟩   for all ζ
//! ```
//!
//! so component `k` is `Σ_{i,j} ξ_i c[i][k][j] λ_j`. With this sign the
//! Heisenberg Lie-Poisson system `λ̇₁ = −λ₃λ₂, λ̇₂ = λ₃λ₁` reads `λ̇ = ad*_ξ λ`.
//! Texts differ on this sign; see [`crate::reduction::CoadjointSign`] for the
//! switch used by the reduced equations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const BASIS_TOL: f64 = 1e-12;
const JACOBI_TOL: f64 = 1e-12;
const SERIES_TOL: f64 = 1e-12;

/// Coordinates of an element of the Lie algebra in the basis `e_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraElement(pub Vec<f64>);

/// Coordinates of an element of the dual algebra in the dual basis `θ_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalgebraElement(pub Vec<f64>);

impl AlgebraElement {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Self(v)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|c| c * s).collect())
    }
}

impl CoalgebraElement {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Self(v)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| v * s).collect())
    }
}

/// A matrix group element.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement(pub DMatrix<f64>);

impl GroupElement {
    pub fn identity(size: usize) -> Self {
        Self(DMatrix::identity(size, size))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement(&self.0 * &other.0)
    }

    /// Exactly equal to the identity matrix.
    pub fn is_identity(&self) -> bool {
        let n = self.0.nrows();
        self.0.ncols() == n
            && (0..n).all(|i| (0..n).all(|j| self.0[(i, j)] == if i == j { 1.0 } else { 0.0 }))
    }

    /// Ones on the diagonal, zeros below, within `tol`.
    pub fn is_unitriangular(&self, tol: f64) -> bool {
        let n = self.0.nrows();
        if self.0.ncols() != n {
            return false;
        }
        (0..n).all(|i| {
            (self.0[(i, i)] - 1.0).abs() <= tol && (0..i).all(|j| self.0[(i, j)].abs() <= tol)
        })
    }
}

/// `⟨λ, ξ⟩ = Σ λ_i ξ_i`.
pub fn pairing(lambda: &CoalgebraElement, xi: &AlgebraElement) -> Result<f64> {
    check_len("pairing", lambda.dim(), xi.dim())?;
    Ok(lambda.0.iter().zip(&xi.0).map(|(a, b)| a * b).sum())
}

/// Structure constants `c[i][j][k]` with `[e_i, e_j] = Σ_k c[i][j][k] e_k`,
/// optionally realized by matrices.
#[derive(Clone, Debug)]
pub struct LieAlgebraSpec {
    dim: usize,
    structure: Vec<f64>,
    matrix_basis: Option<Vec<DMatrix<f64>>>,
    labels: Vec<String>,
    // Least-squares inverse of the flattened basis, for reading coordinates
    // off a matrix.
    coord_pinv: Option<DMatrix<f64>>,
}

impl LieAlgebraSpec {
    /// Builds and validates an algebra from a dense `dim³` table (row-major in
    /// `i, j, k`).
    pub fn new(
        dim: usize,
        structure: Vec<f64>,
        matrix_basis: Option<Vec<DMatrix<f64>>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("Lie algebra dimension must be positive"));
        }
        check_len("structure constants", dim * dim * dim, structure.len())?;
        if structure.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("structure constants must be finite"));
        }
        let coord_pinv = match &matrix_basis {
            Some(basis) => Some(Self::basis_pinv(dim, basis)?),
            None => None,
        };
        let alg = Self {
            dim,
            structure,
            matrix_basis,
            labels: (1..=dim).map(|i| format!("e{i}")).collect(),
            coord_pinv,
        };
        alg.validate()?;
        Ok(alg)
    }

    /// Builds from sparse entries `(i, j, k, c)` (zero-based). A missing
    /// antisymmetric partner `(j, i, k)` is filled with `-c`.
    pub fn from_entries(
        dim: usize,
        entries: &[(usize, usize, usize, f64)],
        matrix_basis: Option<Vec<DMatrix<f64>>>,
    ) -> Result<Self> {
        let mut table = vec![0.0; dim * dim * dim];
        let mut set = vec![false; dim * dim * dim];
        let idx = |i: usize, j: usize, k: usize| (i * dim + j) * dim + k;
        for &(i, j, k, c) in entries {
            if i >= dim || j >= dim || k >= dim {
                return Err(Error::invalid(format!(
                    "structure entry ({i}, {j}, {k}) out of range for dimension {dim}"
                )));
            }
            table[idx(i, j, k)] = c;
            set[idx(i, j, k)] = true;
        }
        for &(i, j, k, c) in entries {
            if !set[idx(j, i, k)] {
                table[idx(j, i, k)] = -c;
            }
        }
        Self::new(dim, table, matrix_basis)
    }

    pub fn abelian(dim: usize) -> Self {
        Self::new(dim, vec![0.0; dim * dim * dim], None).expect("abelian algebra is valid")
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_len("basis labels", self.dim, labels.len())?;
        self.labels = labels;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix_basis(&self) -> Option<&[DMatrix<f64>]> {
        self.matrix_basis.as_deref()
    }

    pub fn matrix_size(&self) -> Option<usize> {
        self.matrix_basis.as_ref().map(|b| b[0].nrows())
    }

    #[inline]
    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.structure[(i * self.dim + j) * self.dim + k]
    }

    pub fn is_abelian(&self) -> bool {
        self.structure.iter().all(|&c| c == 0.0)
    }

    fn basis_pinv(dim: usize, basis: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        check_len("matrix basis", dim, basis.len())?;
        let m = basis[0].nrows();
        if basis.iter().any(|b| b.nrows() != m || b.ncols() != m) {
            return Err(Error::invalid("matrix basis must be square matrices of one size"));
        }
        let flat = DMatrix::from_fn(m * m, dim, |r, c| basis[c][(r / m, r % m)]);
        if crate::numeric::rank(&flat, 1e-12) != dim {
            return Err(Error::invalid("matrix basis is linearly dependent"));
        }
        flat.pseudo_inverse(1e-14)
            .map_err(|e| Error::invalid(format!("matrix basis pseudo-inverse failed: {e}")))
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim;
        let scale = self.structure.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    if (self.c(i, j, k) + self.c(j, i, k)).abs() > BASIS_TOL * scale {
                        return Err(Error::invalid(format!(
                            "structure constants not antisymmetric at ({i}, {j}, {k})"
                        )));
                    }
                }
            }
        }
        let defect = self.jacobi_defect();
        if defect > JACOBI_TOL * scale * scale {
            return Err(Error::invalid(format!(
                "structure constants violate the Jacobi identity (defect {defect:e})"
            )));
        }
        if let Some(basis) = &self.matrix_basis {
            for i in 0..d {
                for j in 0..d {
                    let comm = &basis[i] * &basis[j] - &basis[j] * &basis[i];
                    let mut expected = DMatrix::zeros(comm.nrows(), comm.ncols());
                    for (k, b) in basis.iter().enumerate() {
                        expected += b * self.c(i, j, k);
                    }
                    let dev = (comm - expected).amax();
                    if dev > BASIS_TOL * scale {
                        return Err(Error::invalid(format!(
                            "matrix basis commutator [{i}, {j}] disagrees with structure constants by {dev:e}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest violation of the Jacobi identity over all index quadruples.
    pub fn jacobi_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let s: f64 = (0..d)
                            .map(|m| {
                                self.c(i, j, m) * self.c(m, k, l)
                                    + self.c(j, k, m) * self.c(m, i, l)
                                    + self.c(k, i, m) * self.c(m, j, l)
                            })
                            .sum();
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    pub fn bracket(&self, xi: &AlgebraElement, zeta: &AlgebraElement) -> Result<AlgebraElement> {
        check_len("bracket (first argument)", self.dim, xi.dim())?;
        check_len("bracket (second argument)", self.dim, zeta.dim())?;
        let d = self.dim;
        let mut out = vec![0.0; d];
        for i in 0..d {
            if xi.0[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                let w = xi.0[i] * zeta.0[j];
                if w == 0.0 {
                    continue;
                }
                for (k, o) in out.iter_mut().enumerate() {
                    *o += self.c(i, j, k) * w;
                }
            }
        }
        Ok(AlgebraElement(out))
    }

    /// `ad*_ξ λ` under the convention documented at module level.
    pub fn coadjoint(&self, xi: &AlgebraElement, lambda: &CoalgebraElement) -> Result<CoalgebraElement> {
        check_len("coadjoint (algebra element)", self.dim, xi.dim())?;
        check_len("coadjoint (coalgebra element)", self.dim, lambda.dim())?;
        let d = self.dim;
        let out = (0..d)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += xi.0[i] * self.c(i, k, j) * lambda.0[j];
                    }
                }
                s
            })
            .collect();
        Ok(CoalgebraElement(out))
    }

    /// `Σ ξ_i B_i` in the matrix realization.
    pub fn matrix_of(&self, xi: &AlgebraElement) -> Result<DMatrix<f64>> {
        check_len("matrix_of", self.dim, xi.dim())?;
        let basis = self.require_basis()?;
        let m = basis[0].nrows();
        let mut out = DMatrix::zeros(m, m);
        for (c, b) in xi.0.iter().zip(basis) {
            if *c != 0.0 {
                out += b * *c;
            }
        }
        Ok(out)
    }

    /// Coordinates of a matrix in the span of the basis.
    pub fn coordinates_of(&self, m: &DMatrix<f64>) -> Result<AlgebraElement> {
        let basis = self.require_basis()?;
        let size = basis[0].nrows();
        if m.nrows() != size || m.ncols() != size {
            return Err(Error::Dimension {
                context: "coordinates_of",
                expected: size,
                got: m.nrows(),
            });
        }
        let pinv = self.coord_pinv.as_ref().expect("pinv exists with basis");
        let flat = DVector::from_fn(size * size, |r, _| m[(r / size, r % size)]);
        let coeffs: Vec<f64> = (pinv * &flat).iter().copied().collect();
        let xi = AlgebraElement(coeffs);
        let back = self.matrix_of(&xi)?;
        let dev = (back - m).amax();
        if dev > 1e-10 * (1.0 + m.amax()) {
            return Err(Error::invalid(format!(
                "matrix is not in the span of the algebra basis (residual {dev:e})"
            )));
        }
        Ok(xi)
    }

    fn require_basis(&self) -> Result<&[DMatrix<f64>]> {
        self.matrix_basis.as_deref().ok_or_else(|| {
            Error::UnsupportedAlgebra("operation needs a matrix realization of the algebra".into())
        })
    }

    fn series_cap(&self) -> usize {
        self.dim.max(self.matrix_size().unwrap_or(0).saturating_sub(1)) + 1
    }

    /// Matrix exponential by the terminating power series.
    ///
    /// The series is summed up to its cap and the next term must vanish,
    /// otherwise the algebra is rejected as not nilpotent.
    pub fn exp_nilpotent(&self, xi: &AlgebraElement) -> Result<GroupElement> {
        let x = self.matrix_of(xi)?;
        let m = x.nrows();
        let mut out = DMatrix::identity(m, m);
        let mut term = DMatrix::identity(m, m);
        let cap = self.series_cap();
        for k in 1..cap {
            term = &term * &x / k as f64;
            out += &term;
        }
        let next = &term * &x / cap as f64;
        if next.amax() > SERIES_TOL {
            return Err(Error::UnsupportedAlgebra(format!(
                "exponential series does not terminate (term {cap} has size {:e})",
                next.amax()
            )));
        }
        Ok(GroupElement(out))
    }

    /// Inverse of [`exp_nilpotent`](Self::exp_nilpotent) on unipotent matrices.
    pub fn log_nilpotent(&self, g: &GroupElement) -> Result<AlgebraElement> {
        let m = g.size();
        let n = &g.0 - DMatrix::identity(m, m);
        let mut out = DMatrix::zeros(m, m);
        let mut power = DMatrix::identity(m, m);
        let cap = self.series_cap();
        for k in 1..cap {
            power = &power * &n;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            out += &power * (sign / k as f64);
        }
        let next = &power * &n;
        if next.amax() > SERIES_TOL {
            return Err(Error::UnsupportedAlgebra(format!(
                "logarithm series does not terminate (term {cap} has size {:e})",
                next.amax()
            )));
        }
        self.coordinates_of(&out)
    }

    /// `Σ_n c_n ad_ξⁿ ζ`, summed until the terms vanish (nilpotent algebras
    /// only).
    fn ad_series(&self, xi: &AlgebraElement, zeta: &AlgebraElement, coeff: impl Fn(usize) -> f64) -> Result<AlgebraElement> {
        check_len("ad series (algebra element)", self.dim, xi.dim())?;
        check_len("ad series (direction)", self.dim, zeta.dim())?;
        let mut out = zeta.0.clone();
        let mut term = zeta.clone();
        for n in 1..=self.dim {
            term = self.bracket(xi, &term)?;
            if term.0.iter().all(|v| *v == 0.0) {
                return Ok(AlgebraElement(out));
            }
            if n >= BERNOULLI.len() {
                break;
            }
            let c = coeff(n);
            for (o, t) in out.iter_mut().zip(&term.0) {
                *o += c * t;
            }
        }
        let tail = self.bracket(xi, &term)?;
        if tail.0.iter().any(|v| v.abs() > SERIES_TOL) {
            return Err(Error::UnsupportedAlgebra(
                "ad series does not terminate; the algebra is not nilpotent".into(),
            ));
        }
        Ok(AlgebraElement(out))
    }

    /// `d/dt log(exp(ξ) exp(tζ))` at `t = 0`, i.e. `(ad_ξ / (1 − e^{−ad_ξ})) ζ`:
    /// the left-invariant field of `ζ` in exponential coordinates.
    pub fn left_field_in_exp_chart(&self, xi: &AlgebraElement, zeta: &AlgebraElement) -> Result<AlgebraElement> {
        self.ad_series(xi, zeta, |n| {
            let b = if n == 1 { 0.5 } else { BERNOULLI[n] };
            b / factorial(n)
        })
    }

    /// `d/dt log(exp(tζ) exp(ξ))` at `t = 0`, i.e. `(ad_ξ / (e^{ad_ξ} − 1)) ζ`:
    /// the generator of left translations in exponential coordinates.
    pub fn right_field_in_exp_chart(&self, xi: &AlgebraElement, zeta: &AlgebraElement) -> Result<AlgebraElement> {
        self.ad_series(xi, zeta, |n| BERNOULLI[n] / factorial(n))
    }

    /// Heisenberg algebra with `[γ₁, γ₂] = γ₃`, realized by strictly upper
    /// triangular 3×3 matrices.
    pub fn heisenberg() -> Self {
        let unit = |r: usize, c: usize| {
            let mut m = DMatrix::zeros(3, 3);
            m[(r, c)] = 1.0;
            m
        };
        let basis = vec![unit(0, 1), unit(1, 2), unit(0, 2)];
        Self::from_entries(3, &[(0, 1, 2, 1.0)], Some(basis))
            .expect("Heisenberg algebra is valid")
            .with_labels(vec!["gamma1".into(), "gamma2".into(), "gamma3".into()])
            .expect("three labels")
    }

    /// One-dimensional translation algebra realized by `[[0, 1], [0, 0]]`.
    pub fn translation_line() -> Self {
        let mut b = DMatrix::zeros(2, 2);
        b[(0, 1)] = 1.0;
        Self::new(1, vec![0.0], Some(vec![b])).expect("translation algebra is valid")
    }
}

/// Bernoulli numbers `B_0 … B_20` with `B_1 = −1/2`.
const BERNOULLI: [f64; 21] = [
    1.0,
    -0.5,
    1.0 / 6.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    1.0 / 42.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    5.0 / 66.0,
    0.0,
    -691.0 / 2730.0,
    0.0,
    7.0 / 6.0,
    0.0,
    -3617.0 / 510.0,
    0.0,
    43867.0 / 798.0,
    0.0,
    -174611.0 / 330.0,
];

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}
