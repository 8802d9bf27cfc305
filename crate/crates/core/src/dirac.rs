//! Linear Dirac structures on a finite-dimensional fiber `V ⊕ V*`.
//!
//! A structure is stored as an orthonormal basis of columns in `ℝ^{2d}`, the
//! first `d` rows holding the vector part and the last `d` the covector part.
//! The pairing is `⟨⟨(u, α), (v, β)⟩⟩ = ⟨β, u⟩ + ⟨α, v⟩`.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::lie::{CoalgebraElement, LieAlgebraSpec};
use crate::numeric;

/// Relative singular-value threshold for subspace arithmetic.
pub const SUBSPACE_TOL: f64 = 1e-10;
/// Absolute tolerance of the isotropy test on an orthonormal basis.
pub const ISOTROPY_TOL: f64 = 1e-10;
const ANTISYMMETRY_TOL: f64 = 1e-12;

/// Antisymmetric bilinear form `Ω(v, w) = vᵀ Ω w`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoForm {
    matrix: DMatrix<f64>,
}

impl TwoForm {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid(format!(
                "two-form matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let defect = (&matrix + matrix.transpose()).amax();
        if !(defect <= ANTISYMMETRY_TOL * scale) {
            return Err(Error::invalid(format!(
                "two-form is not antisymmetric (|Ω + Ωᵀ| = {defect:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn zero(d: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(d, d),
        }
    }

    /// `Σ dxⁱ ∧ dpⁱ` on `(x, p) ∈ ℝ^{2n}`.
    pub fn canonical_symplectic(n: usize) -> Self {
        Self::presymplectic(n, 0)
    }

    /// `Σ dxⁱ ∧ dpⁱ` pulled back to `(x, p, u) ∈ ℝ^{2n+r}`.
    pub fn presymplectic(n: usize, r: usize) -> Self {
        let mut m = DMatrix::zeros(2 * n + r, 2 * n + r);
        for i in 0..n {
            m[(i, n + i)] = 1.0;
            m[(n + i, i)] = -1.0;
        }
        Self { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eval(&self, v: &[f64], w: &[f64]) -> Result<f64> {
        check_len("two-form first argument", self.dim(), v.len())?;
        check_len("two-form second argument", self.dim(), w.len())?;
        let mut s = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                s += v[i] * self.matrix[(i, j)] * w[j];
            }
        }
        Ok(s)
    }

    /// The covector `Ω(v, ·)`.
    pub fn contract(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("two-form contraction", self.dim(), v.len())?;
        Ok((0..self.dim())
            .map(|j| (0..self.dim()).map(|i| v[i] * self.matrix[(i, j)]).sum())
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearDiracStructure {
    base_dim: usize,
    basis: DMatrix<f64>,
}

impl LinearDiracStructure {
    /// Builds a subspace of `V ⊕ V*` from spanning columns. The stored basis
    /// is orthonormal; dependent columns are dropped.
    pub fn from_columns(base_dim: usize, spanning: &DMatrix<f64>) -> Result<Self> {
        check_len("Dirac structure column length", 2 * base_dim, spanning.nrows())?;
        Ok(Self {
            base_dim,
            basis: numeric::column_space(spanning, SUBSPACE_TOL),
        })
    }

    /// Same as [`from_columns`](Self::from_columns), from `(v, α)` pairs.
    pub fn from_pairs(base_dim: usize, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let mut m = DMatrix::zeros(2 * base_dim, pairs.len());
        for (c, (v, a)) in pairs.iter().enumerate() {
            check_len("vector part", base_dim, v.len())?;
            check_len("covector part", base_dim, a.len())?;
            for i in 0..base_dim {
                m[(i, c)] = v[i];
                m[(base_dim + i, c)] = a[i];
            }
        }
        Self::from_columns(base_dim, &m)
    }

    /// `V ⊕ 0`.
    pub fn tangent(d: usize) -> Self {
        let mut m = DMatrix::zeros(2 * d, d);
        for i in 0..d {
            m[(i, i)] = 1.0;
        }
        Self { base_dim: d, basis: m }
    }

    /// `0 ⊕ V*`.
    pub fn cotangent(d: usize) -> Self {
        let mut m = DMatrix::zeros(2 * d, d);
        for i in 0..d {
            m[(d + i, i)] = 1.0;
        }
        Self { base_dim: d, basis: m }
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    /// Dimension of the subspace.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    fn vector_part(&self) -> DMatrix<f64> {
        self.basis.rows(0, self.base_dim).into_owned()
    }

    fn covector_part(&self) -> DMatrix<f64> {
        self.basis.rows(self.base_dim, self.base_dim).into_owned()
    }

    /// Largest `|⟨⟨b_i, b_j⟩⟩|` over basis pairs.
    pub fn isotropy_defect(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        let v = self.vector_part();
        let a = self.covector_part();
        let g = a.transpose() * &v;
        (&g + g.transpose()).amax()
    }

    pub fn is_isotropic(&self) -> bool {
        self.isotropy_defect() <= ISOTROPY_TOL
    }

    /// Maximally isotropic: isotropic with dimension `d`.
    pub fn is_dirac(&self) -> bool {
        self.dim() == self.base_dim && self.is_isotropic()
    }

    /// Distance from `(v, α)` to the subspace, divided by `1 + ‖(v, α)‖`.
    pub fn relative_residual(&self, v: &[f64], alpha: &[f64]) -> Result<f64> {
        check_len("membership vector", self.base_dim, v.len())?;
        check_len("membership covector", self.base_dim, alpha.len())?;
        let w: Vec<f64> = v.iter().chain(alpha).copied().collect();
        let wv = nalgebra::DVector::from_column_slice(&w);
        let proj = &self.basis * (self.basis.transpose() * &wv);
        Ok((wv - proj).norm() / (1.0 + numeric::norm(&w)))
    }

    pub fn contains(&self, v: &[f64], alpha: &[f64], tol: f64) -> Result<bool> {
        Ok(self.relative_residual(v, alpha)? <= tol)
    }

    /// Mutual containment of the two subspaces, column by column.
    pub fn same_subspace(&self, other: &Self, tol: f64) -> bool {
        if self.base_dim != other.base_dim || self.dim() != other.dim() {
            return false;
        }
        let inside = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            let proj = a * (a.transpose() * b);
            (b - proj).amax() <= tol
        };
        inside(&self.basis, &other.basis) && inside(&other.basis, &self.basis)
    }

    /// Dimension of the sum of the two subspaces.
    pub fn rank_with(&self, other: &Self) -> usize {
        let mut m = DMatrix::zeros(2 * self.base_dim, self.dim() + other.dim());
        m.columns_mut(0, self.dim()).copy_from(&self.basis);
        m.columns_mut(self.dim(), other.dim()).copy_from(&other.basis);
        numeric::rank(&m, SUBSPACE_TOL)
    }
}

/// `D_Ω = {(v, α) | α(w) = Ω(v, w) ∀w}`, spanned by `(e_i, Ω(e_i, ·))`.
pub fn graph_of_two_form(omega: &TwoForm) -> LinearDiracStructure {
    let d = omega.dim();
    let mut m = DMatrix::zeros(2 * d, d);
    for i in 0..d {
        m[(i, i)] = 1.0;
        for j in 0..d {
            m[(d + j, i)] = omega.matrix[(i, j)];
        }
    }
    LinearDiracStructure {
        base_dim: d,
        basis: numeric::column_space(&m, SUBSPACE_TOL),
    }
}

/// `ℬψ(D') = {(v, ψᵀβ) | (ψv, β) ∈ D'}` for `ψ : V → V'`.
pub fn backward(psi: &DMatrix<f64>, target: &LinearDiracStructure) -> Result<LinearDiracStructure> {
    let d = psi.ncols();
    let dp = psi.nrows();
    check_len("backward map codomain", target.base_dim, dp)?;
    let a = target.vector_part();
    let b = target.covector_part();
    let k = target.dim();
    // (v, c) with ψv = A c.
    let mut block = DMatrix::zeros(dp, d + k);
    block.columns_mut(0, d).copy_from(psi);
    block.columns_mut(d, k).copy_from(&(-&a));
    let ker = numeric::kernel(&block, SUBSPACE_TOL);
    let v = ker.rows(0, d).into_owned();
    let c = ker.rows(d, k).into_owned();
    let alpha = psi.transpose() * (b * c);
    let mut span = DMatrix::zeros(2 * d, ker.ncols());
    span.rows_mut(0, d).copy_from(&v);
    span.rows_mut(d, d).copy_from(&alpha);
    LinearDiracStructure::from_columns(d, &span)
}

/// `ℱψ(D) = {(ψu, α) | (u, ψᵀα) ∈ D}` for `ψ : V → V'`.
pub fn forward(psi: &DMatrix<f64>, source: &LinearDiracStructure) -> Result<LinearDiracStructure> {
    let d = psi.ncols();
    let dp = psi.nrows();
    check_len("forward map domain", source.base_dim, d)?;
    let a = source.vector_part();
    let b = source.covector_part();
    let k = source.dim();
    // (c, α) with B c = ψᵀα.
    let mut block = DMatrix::zeros(d, k + dp);
    block.columns_mut(0, k).copy_from(&b);
    block.columns_mut(k, dp).copy_from(&(-psi.transpose()));
    let ker = numeric::kernel(&block, SUBSPACE_TOL);
    let c = ker.rows(0, k).into_owned();
    let alpha = ker.rows(k, dp).into_owned();
    let v = psi * (a * c);
    let mut span = DMatrix::zeros(2 * dp, ker.ncols());
    span.rows_mut(0, dp).copy_from(&v);
    span.rows_mut(dp, dp).copy_from(&alpha);
    LinearDiracStructure::from_columns(dp, &span)
}

/// `ω_λ((ξ, ρ), (ζ, σ)) = ⟨σ, ξ⟩ − ⟨ρ, ζ⟩ + ⟨λ, [ξ, ζ]⟩` on `𝔤 ⊕ 𝔤*`.
pub fn reduced_two_form(alg: &LieAlgebraSpec, lambda: &CoalgebraElement) -> Result<TwoForm> {
    let m = alg.dim();
    check_len("reduced fiber momentum", m, lambda.dim())?;
    let mut om = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        om[(i, m + i)] = 1.0;
        om[(m + i, i)] = -1.0;
        for j in 0..m {
            om[(i, j)] = (0..m).map(|k| alg.c(i, j, k) * lambda.coeffs()[k]).sum();
        }
    }
    TwoForm::new(om)
}

/// Graph of [`reduced_two_form`]. A pair `((ξ, λ̇), (0, ∂h/∂μ))` belongs to it
/// iff `ξ = ∂h/∂μ` and `λ̇ = ad*_ξ λ`.
pub fn reduced_dirac_fiber(
    alg: &LieAlgebraSpec,
    lambda: &CoalgebraElement,
) -> Result<LinearDiracStructure> {
    Ok(graph_of_two_form(&reduced_two_form(alg, lambda)?))
}

/// `D_Ω` on a fiber of `M = T*Q × U` with coordinates `(x, p, u)`.
pub fn pontryagin_fiber(n: usize, r: usize) -> LinearDiracStructure {
    graph_of_two_form(&TwoForm::presymplectic(n, r))
}

/// Projection `(x, p, u) ↦ (x, p)`.
pub fn pontryagin_projection(n: usize, r: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n + r);
    for i in 0..2 * n {
        m[(i, i)] = 1.0;
    }
    m
}

/// Graph of the canonical symplectic form on a `T*P` fiber.
pub fn symplectic_fiber(n: usize) -> LinearDiracStructure {
    graph_of_two_form(&TwoForm::canonical_symplectic(n))
}

/// Random antisymmetric matrix with entries in `[-scale, scale]`.
pub fn random_two_form(rng: &mut impl rand::Rng, d: usize, scale: f64) -> TwoForm {
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i + 1..d {
            let v = rng.random_range(-scale..=scale);
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
    TwoForm { matrix: m }
}

/// Outcome of the random-form self-test.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfTestReport {
    pub trials: usize,
    pub passed: usize,
}

/// Checks `is_dirac(graph_of_two_form(Ω))` for `trials` random antisymmetric
/// forms with `1 ≤ d ≤ max_dim`.
pub fn random_graph_self_test(trials: usize, max_dim: usize, seed: u64) -> SelfTestReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let passed = (0..trials)
        .filter(|_| {
            let d = rng.random_range(1..=max_dim.max(1));
            graph_of_two_form(&random_two_form(&mut rng, d, 2.0)).is_dirac()
        })
        .count();
    SelfTestReport { trials, passed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn canonical2() -> LinearDiracStructure {
        graph_of_two_form(&TwoForm::canonical_symplectic(1))
    }

    #[test]
    fn two_form_validation() {
        assert!(TwoForm::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).is_err());
        assert!(TwoForm::new(DMatrix::zeros(2, 3)).is_err());
        let w = TwoForm::canonical_symplectic(1);
        assert_eq!(w.eval(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn canonical_graph() {
        let d = canonical2();
        assert!(d.is_dirac());
        let expected =
            LinearDiracStructure::from_pairs(2, &[(vec![1.0, 0.0], vec![0.0, 1.0]), (vec![0.0, 1.0], vec![-1.0, 0.0])])
                .unwrap();
        assert!(d.same_subspace(&expected, 1e-12));
    }

    #[test]
    fn zero_form_graph_is_tangent() {
        let d = graph_of_two_form(&TwoForm::zero(3));
        assert!(d.is_dirac());
        assert!(d.same_subspace(&LinearDiracStructure::tangent(3), 1e-14));
    }

    #[test]
    fn pontryagin_local_form() {
        let (n, r) = (2, 1);
        let d = pontryagin_fiber(n, r);
        assert!(d.is_dirac());
        // v_x = α_p, v_p = −α_x, α_u = 0 for every element.
        let m = 2 * n + r;
        for c in 0..d.dim() {
            let col = d.basis().column(c);
            for i in 0..n {
                assert!((col[i] - col[m + n + i]).abs() < 1e-14);
                assert!((col[n + i] + col[m + i]).abs() < 1e-14);
            }
            assert!(col[m + 2 * n].abs() < 1e-14);
        }
    }

    #[test]
    fn is_dirac_negative_examples() {
        let mut full = DMatrix::zeros(2, 2);
        full[(0, 0)] = 1.0;
        full[(1, 1)] = 1.0;
        assert!(!LinearDiracStructure::from_columns(1, &full).unwrap().is_dirac());
        let diag = LinearDiracStructure::from_pairs(1, &[(vec![1.0], vec![1.0])]).unwrap();
        assert!(!diag.is_dirac());
        assert!((diag.isotropy_defect() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn contains_examples() {
        let d = canonical2();
        assert!(d.contains(&[1.0, 0.0], &[0.0, 1.0], 1e-12).unwrap());
        assert!(!d.contains(&[1.0, 0.0], &[0.0, 0.0], 1e-6).unwrap());
        assert!(d.contains(&[1.0], &[0.0, 0.0], 1e-6).is_err());
    }

    #[test]
    fn identity_maps() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let d = graph_of_two_form(&random_two_form(&mut rng, 4, 1.0));
        let id = DMatrix::identity(4, 4);
        assert!(backward(&id, &d).unwrap().same_subspace(&d, 1e-10));
        assert!(forward(&id, &d).unwrap().same_subspace(&d, 1e-10));
    }

    #[test]
    fn pontryagin_projection_backward_and_forward() {
        for (n, r) in [(2, 1), (3, 2), (1, 0)] {
            let psi = pontryagin_projection(n, r);
            let back = backward(&psi, &symplectic_fiber(n)).unwrap();
            assert!(back.is_dirac());
            assert!(back.same_subspace(&pontryagin_fiber(n, r), 1e-10));
            let fwd = forward(&psi, &pontryagin_fiber(n, r)).unwrap();
            assert!(fwd.same_subspace(&symplectic_fiber(n), 1e-10));
        }
    }

    #[test]
    fn backward_of_tangent_is_tangent() {
        let psi = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, -1.0]);
        let back = backward(&psi, &LinearDiracStructure::tangent(2)).unwrap();
        assert!(back.same_subspace(&LinearDiracStructure::tangent(3), 1e-10));
    }

    #[test]
    fn forward_of_tangent() {
        let psi = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let fwd = forward(&psi, &LinearDiracStructure::tangent(2)).unwrap();
        assert!(fwd.is_dirac());
        let expected =
            LinearDiracStructure::from_pairs(2, &[(vec![1.0, 2.0], vec![0.0, 0.0]), (vec![0.0, 0.0], vec![2.0, -1.0])])
                .unwrap();
        assert!(fwd.same_subspace(&expected, 1e-10));
    }

    #[test]
    fn dimension_mismatch() {
        let psi = DMatrix::<f64>::identity(3, 3);
        assert!(backward(&psi, &canonical2()).is_err());
        assert!(forward(&psi, &canonical2()).is_err());
    }

    #[test]
    fn reduced_fiber_examples() {
        let heis = LieAlgebraSpec::heisenberg();
        let abelian = LieAlgebraSpec::abelian(3);
        let sympl = symplectic_fiber(3);
        let zero = reduced_dirac_fiber(&heis, &CoalgebraElement::zeros(3)).unwrap();
        assert!(zero.same_subspace(&sympl, 1e-12));
        let ab = reduced_dirac_fiber(&abelian, &CoalgebraElement(vec![1.0, -2.0, 0.5])).unwrap();
        assert!(ab.same_subspace(&sympl, 1e-12));

        let lam = CoalgebraElement(vec![0.3, -0.8, 1.7]);
        let d = reduced_dirac_fiber(&heis, &lam).unwrap();
        assert!(d.is_dirac());
        // h = ⟨λ, (λ₁, λ₂, 0)⟩ / 2 after eliminating controls: ξ = (λ₁, λ₂, 0).
        let xi = crate::lie::AlgebraElement(vec![0.3, -0.8, 0.0]);
        let rate = heis.coadjoint(&xi, &lam).unwrap();
        let v: Vec<f64> = xi.coeffs().iter().chain(rate.coeffs()).copied().collect();
        let alpha = vec![0.0, 0.0, 0.0, 0.3, -0.8, 0.0];
        assert!(d.contains(&v, &alpha, 1e-12).unwrap());
        let mut wrong = v.clone();
        wrong[3] += 0.1;
        assert!(!d.contains(&wrong, &alpha, 1e-6).unwrap());
    }

    #[test]
    fn self_test_passes() {
        let rep = random_graph_self_test(200, 8, 1);
        assert_eq!(rep.passed, 200);
    }

    fn antisym(d: usize) -> impl Strategy<Value = TwoForm> {
        proptest::collection::vec(-3.0f64..3.0, d * d).prop_map(move |v| {
            let m = DMatrix::from_vec(d, d, v);
            TwoForm::new(&m - m.transpose()).unwrap()
        })
    }

    fn form_and_map() -> impl Strategy<Value = (TwoForm, DMatrix<f64>)> {
        (1usize..=6, 0usize..=3).prop_flat_map(|(dp, extra)| {
            let d = dp + extra;
            (
                antisym(dp),
                proptest::collection::vec(-2.0f64..2.0, dp * d)
                    .prop_map(move |v| DMatrix::from_vec(dp, d, v)),
            )
        })
    }

    #[test]
    fn forward_through_rank_deficient_map() {
        let psi = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0]);
        let om = TwoForm::new(DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -2.0, -1.0, 0.0, 0.5, 2.0, -0.5, 0.0])).unwrap();
        let f = forward(&psi, &graph_of_two_form(&om)).unwrap();
        assert!(f.is_dirac());
        let f = forward(&psi, &LinearDiracStructure::tangent(3)).unwrap();
        assert!(f.is_dirac());
    }

    proptest! {
        #[test]
        fn graphs_are_dirac(om in (1usize..=8).prop_flat_map(antisym)) {
            prop_assert!(graph_of_two_form(&om).is_dirac());
        }

        #[test]
        fn forward_after_backward((om, psi) in form_and_map()) {
            prop_assume!(numeric::rank(&psi, 1e-6) == psi.nrows());
            let target = graph_of_two_form(&om);
            let back = backward(&psi, &target).unwrap();
            prop_assert!(back.is_dirac());
            let fwd = forward(&psi, &back).unwrap();
            prop_assert!(fwd.is_dirac());
            prop_assert!(fwd.same_subspace(&target, 1e-10));
        }

        #[test]
        fn forward_preserves_dirac((om, psi) in form_and_map()) {
            let sv = numeric::singular_values(&psi);
            prop_assume!(sv[psi.nrows() - 1] * 100.0 >= sv[0]);
            let src_form = TwoForm::new(psi.transpose() * om.matrix() * &psi).unwrap();
            prop_assert!(forward(&psi, &graph_of_two_form(&src_form)).unwrap().is_dirac());
        }

        #[test]
        fn reduced_fiber_is_dirac(lam in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let d = reduced_dirac_fiber(&LieAlgebraSpec::heisenberg(), &CoalgebraElement(lam)).unwrap();
            prop_assert!(d.is_dirac());
        }
    }
}
