//! Canonical projections onto quotient spaces, induced maps, quotient
//! norms and the adapted norm.
//!
//! Quotient coordinates are orthogonal-complement coordinates: `P = Qᵀ` and
//! `ι = Q` for an orthonormal basis `Q` of `V^⊥`. Then `P ι = I`, `‖ι‖ = 1`
//! and the quotient norm of `x + V` is exactly `‖P x‖₂`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::algebra::{IdealChain, LieAlgebra, Subspace, CONTAINMENT_TOL};
use crate::error::{Error, Result};
use crate::linalg::{self, orthogonal_complement};

#[derive(Clone, Debug)]
pub struct QuotientContext {
    ideal: Subspace,
    /// `q × N` projection.
    p: DMatrix<f64>,
    /// `N × q` injection with `P ι = I`.
    iota: DMatrix<f64>,
}

/// Quotient of the algebra modulo `v`.
pub fn make_quotient(alg: &LieAlgebra, v: &Subspace) -> Result<QuotientContext> {
    if v.ambient_dim() != alg.dim() {
        return Err(Error::DimensionMismatch { expected: alg.dim(), got: v.ambient_dim() });
    }
    Ok(QuotientContext::of_subspace(v))
}

impl QuotientContext {
    /// Quotient of `ℝ^N` modulo an arbitrary subspace.
    pub fn of_subspace(v: &Subspace) -> Self {
        let n = v.ambient_dim();
        let iota = orthogonal_complement(v.basis(), n);
        Self { ideal: v.clone(), p: iota.transpose(), iota }
    }

    pub fn ideal(&self) -> &Subspace {
        &self.ideal
    }

    pub fn ambient_dim(&self) -> usize {
        self.p.ncols()
    }

    pub fn quotient_dim(&self) -> usize {
        self.p.nrows()
    }

    /// `V` is the whole space, so the quotient is zero and `P` has norm 0.
    pub fn is_degenerate(&self) -> bool {
        self.quotient_dim() == 0
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn injection(&self) -> &DMatrix<f64> {
        &self.iota
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p * x
    }

    pub fn lift(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.iota * y
    }

    /// `ι ∘ P`, the orthogonal projector onto `V^⊥`.
    pub fn lift_project(&self) -> DMatrix<f64> {
        &self.iota * &self.p
    }

    /// `inf_{v ∈ V} ‖x + v‖₂`.
    pub fn quotient_norm(&self, x: &DVector<f64>) -> f64 {
        self.project(x).norm()
    }

    /// Residual of `A V ⊆ V`.
    pub fn invariance_residual(&self, a: &DMatrix<f64>) -> f64 {
        if self.ideal.dim() == 0 {
            return 0.0;
        }
        linalg::containment_residual(&(a * self.ideal.basis()), self.ideal.basis())
    }

    /// The unique `Ā` with `Ā P = P A`, given `A V ⊆ V`.
    pub fn induced_map(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.ambient_dim();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
        }
        let residual = self.invariance_residual(a);
        if residual >= CONTAINMENT_TOL * a.amax().max(1.0) {
            return Err(Error::InvarianceViolation { residual });
        }
        Ok(&self.p * a * &self.iota)
    }

    /// `‖Ā P − P A‖₂`.
    pub fn commuting_square_residual(&self, a: &DMatrix<f64>, a_bar: &DMatrix<f64>) -> f64 {
        linalg::op_norm2(&(a_bar * &self.p - &self.p * a))
    }

    /// `‖P ι − I‖_max`.
    pub fn right_inverse_residual(&self) -> f64 {
        let q = self.quotient_dim();
        (&self.p * &self.iota - DMatrix::identity(q, q)).amax()
    }

    /// Operator norm of `P` from `(ℝ^N, ‖·‖₂)` to the quotient norm.
    pub fn projection_norm(&self) -> f64 {
        linalg::op_norm2(&self.p)
    }

    /// Context for `V^n` inside the slot-major stack of `n` copies.
    pub fn stacked(&self, n: usize) -> QuotientContext {
        let eye = DMatrix::identity(n, n);
        QuotientContext {
            ideal: self.ideal.stacked(n),
            p: linalg::kron(&eye, &self.p),
            iota: linalg::kron(&eye, &self.iota),
        }
    }

    /// Structure constants of `g / V` in quotient coordinates:
    /// `[ē_a, ē_b] = P[ι ē_a, ι ē_b]`. Requires `V` to be an ideal.
    pub fn quotient_algebra(&self, alg: &LieAlgebra) -> Result<LieAlgebra> {
        let residual = alg.ideal_residual(&self.ideal);
        if residual >= CONTAINMENT_TOL {
            return Err(Error::NotAnIdeal { residual });
        }
        let q = self.quotient_dim();
        let mut c = vec![vec![vec![0.0; q]; q]; q];
        for a in 0..q {
            let xa = self.iota.column(a).into_owned();
            for b in 0..q {
                let xb = self.iota.column(b).into_owned();
                let br = &self.p * alg.bracket_unchecked(xa.as_slice(), xb.as_slice());
                for k in 0..q {
                    c[a][b][k] = br[k];
                }
            }
        }
        // Exact antisymmetry; the bracket above is antisymmetric only up to rounding.
        for a in 0..q {
            for b in 0..a {
                for k in 0..q {
                    let v = 0.5 * (c[a][b][k] - c[b][a][k]);
                    c[a][b][k] = v;
                    c[b][a][k] = -v;
                }
            }
            for k in 0..q {
                c[a][a][k] = 0.0;
            }
        }
        let labels = (1..=q).map(|i| format!("q{i}")).collect();
        LieAlgebra::new_allow_empty(labels, c)
    }

    pub fn to_record(&self) -> QuotientRecord {
        QuotientRecord {
            ambient_dim: self.ambient_dim(),
            quotient_dim: self.quotient_dim(),
            ideal_basis: sig17_rows(self.ideal.basis()),
            projection: sig17_rows(&self.p),
            injection: sig17_rows(&self.iota),
        }
    }
}

/// Serializable form; matrices row-major with 17 significant digits.
#[derive(Clone, Debug, Serialize)]
pub struct QuotientRecord {
    pub ambient_dim: usize,
    pub quotient_dim: usize,
    pub ideal_basis: Vec<Vec<f64>>,
    pub projection: Vec<Vec<f64>>,
    pub injection: Vec<Vec<f64>>,
}

/// Round to 17 significant digits, which is lossless for `f64`.
pub fn sig17(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.16e}").parse().unwrap_or(x)
}

pub fn sig17_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    linalg::rows_of(m)
        .into_iter()
        .map(|r| r.into_iter().map(sig17).collect())
        .collect()
}

/// Quotient contexts for every level of a chain `h = h^(1) ⊇ h^(2) ⊇ … ⊇ 0`:
/// level `i` is the quotient modulo `h^(i+1)`, for `i = 0..=p`.
#[derive(Clone, Debug)]
pub struct QuotientTower {
    levels: Vec<QuotientContext>,
}

impl QuotientTower {
    pub fn new(alg: &LieAlgebra, chain: &IdealChain) -> Result<Self> {
        let p = chain
            .nilindex()
            .ok_or_else(|| Error::Hypothesis("chain does not terminate; no nilindex".into()))?;
        let levels = (0..=p)
            .map(|i| make_quotient(alg, chain.term(i + 1)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { levels })
    }

    /// Nilindex of the underlying chain.
    pub fn p(&self) -> usize {
        self.levels.len() - 1
    }

    /// Quotient modulo `h^(i+1)`.
    pub fn level(&self, i: usize) -> &QuotientContext {
        &self.levels[i]
    }

    pub fn levels(&self) -> &[QuotientContext] {
        &self.levels
    }
}

/// Right-nested bracket of the letters.
pub fn nested_bracket(alg: &LieAlgebra, letters: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = letters.last().expect("word has letters").clone();
    for y in letters.iter().rev().skip(1) {
        acc = alg.bracket_unchecked(y.as_slice(), acc.as_slice());
    }
    acc
}

/// Residual of `P_i ω = P_i [ι_{i−1}P_{i−1}Y_1, [… , ι_{i−1}P_{i−1}Y_m]]`
/// for a lower-central tower of `g` itself, maximized over `i = 1..=p`.
pub fn check_word_decomposition_nilpotent(
    alg: &LieAlgebra,
    tower: &QuotientTower,
    letters: &[DVector<f64>],
) -> f64 {
    let omega = nested_bracket(alg, letters);
    let mut worst: f64 = 0.0;
    for i in 1..=tower.p() {
        let pi = tower.level(i);
        let prev = tower.level(i - 1).lift_project();
        let reduced: Vec<DVector<f64>> = letters.iter().map(|y| &prev * y).collect();
        let lhs = pi.project(&omega);
        let rhs = pi.project(&nested_bracket(alg, &reduced));
        worst = worst.max((lhs - rhs).amax());
    }
    worst
}

/// Residual of the decomposition of `P_i ω` into the fully reduced word
/// plus one correction per letter, where the corrected letter is
/// `(Id − ι_{i−1}P_{i−1})Y_j` and all others are `ι_0 P_0 Y`. Maximized
/// over `i = 1..=p`.
pub fn check_word_decomposition_solvable(
    alg: &LieAlgebra,
    tower: &QuotientTower,
    letters: &[DVector<f64>],
) -> f64 {
    let d = alg.dim();
    let omega = nested_bracket(alg, letters);
    let base = tower.level(0).lift_project();
    let based: Vec<DVector<f64>> = letters.iter().map(|y| &base * y).collect();
    let mut worst: f64 = 0.0;
    for i in 1..=tower.p() {
        let pi = tower.level(i);
        let prev = tower.level(i - 1).lift_project();
        let comp = DMatrix::identity(d, d) - &prev;
        let reduced: Vec<DVector<f64>> = letters.iter().map(|y| &prev * y).collect();
        let mut rhs = pi.project(&nested_bracket(alg, &reduced));
        for j in 0..letters.len() {
            let mut mixed = based.clone();
            mixed[j] = &comp * &letters[j];
            rhs += pi.project(&nested_bracket(alg, &mixed));
        }
        worst = worst.max((pi.project(&omega) - rhs).amax());
    }
    worst
}

/// Residual of `ι_0 P_0 ι_{i−1} P_{i−1} x = ι_0 P_0 x`, maximized over
/// `i = 1..=p`.
pub fn check_projection_factorization(tower: &QuotientTower, x: &DVector<f64>) -> f64 {
    let base = tower.level(0).lift_project();
    let direct = &base * x;
    (1..=tower.p())
        .map(|i| (&base * (tower.level(i - 1).lift_project() * x) - &direct).amax())
        .fold(0.0, f64::max)
}

/// A norm `‖x‖_T = ‖T⁻¹x‖₂` in which a given map has operator norm below
/// `ρ(A) + ε`.
#[derive(Clone, Debug)]
pub struct AdaptedNorm {
    pub transform: DMatrix<f64>,
    pub transform_inv: DMatrix<f64>,
    pub epsilon: f64,
    pub target_map: DMatrix<f64>,
    pub spectral_radius: f64,
    /// `‖T⁻¹AT‖₂`.
    pub achieved_norm: f64,
    /// Final geometric scaling factor.
    pub delta: f64,
}

impl AdaptedNorm {
    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        (&self.transform_inv * x).norm()
    }

    /// Operator norm of `m` induced by this norm.
    pub fn operator_norm(&self, m: &DMatrix<f64>) -> f64 {
        linalg::op_norm2(&(&self.transform_inv * m * &self.transform))
    }

    /// `κ₂(T)`, the constant relating this norm to the Euclidean one.
    pub fn condition(&self) -> f64 {
        linalg::op_norm2(&self.transform) * linalg::op_norm2(&self.transform_inv)
    }

    pub fn certified(&self) -> bool {
        self.achieved_norm < self.spectral_radius + self.epsilon
    }
}

/// Real Schur form, 2×2 blocks standardized to `[[α, β], [−β, α]]`, then
/// diagonal scaling `δ^level` halved until the scaled triangle has norm
/// below `ρ(A) + ε`.
pub fn adapted_norm(a: &DMatrix<f64>, epsilon: f64) -> Result<AdaptedNorm> {
    if !(epsilon > 0.0) {
        return Err(Error::Input(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    if n == 0 {
        return Ok(AdaptedNorm {
            transform: DMatrix::zeros(0, 0),
            transform_inv: DMatrix::zeros(0, 0),
            epsilon,
            target_map: a.clone(),
            spectral_radius: 0.0,
            achieved_norm: 0.0,
            delta: 1.0,
        });
    }
    let rho = linalg::spectral_radius(a);
    let (q, t) = linalg::real_schur(a);

    // Block structure and standardizing similarity S (block diagonal).
    let scale = t.amax().max(f64::MIN_POSITIVE);
    let mut s = DMatrix::identity(n, n);
    let mut level = vec![0usize; n];
    let mut i = 0;
    let mut lvl = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > 1e-14 * scale {
            let (a11, a12, a21, a22) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let alpha = 0.5 * (a11 + a22);
            let disc = 0.25 * (a11 - a22).powi(2) + a12 * a21;
            if disc < 0.0 && a12 != 0.0 {
                let beta = (-disc).sqrt();
                // Eigenvector for α + iβ is (a12, α − a11 + iβ).
                let mut blk = DMatrix::zeros(2, 2);
                blk[(0, 0)] = a12;
                blk[(1, 0)] = alpha - a11;
                blk[(0, 1)] = 0.0;
                blk[(1, 1)] = beta;
                s.view_mut((i, i), (2, 2)).copy_from(&blk);
            }
            level[i] = lvl;
            level[i + 1] = lvl;
            i += 2;
        } else {
            level[i] = lvl;
            i += 1;
        }
        lvl += 1;
    }
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Input("singular block standardization".into()))?;
    let t_std = &s_inv * &t * &s;

    let target = rho + epsilon;
    let mut delta = 1.0_f64;
    let mut best = None;
    for _ in 0..400 {
        let scaled = DMatrix::from_fn(n, n, |r, c| {
            let e = level[c] as i32 - level[r] as i32;
            if e > 0 {
                t_std[(r, c)] * delta.powi(e)
            } else if e == 0 {
                t_std[(r, c)]
            } else {
                0.0
            }
        });
        let achieved_scaled = linalg::op_norm2(&scaled);
        if achieved_scaled < target {
            best = Some(delta);
            break;
        }
        delta *= 0.5;
    }
    let delta = best.unwrap_or(delta);
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |k, _| delta.powi(level[k] as i32)));
    let transform = &q * &s * &d;
    let transform_inv = transform
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Input("adapted-norm transform is singular".into()))?;
    let achieved = linalg::op_norm2(&(&transform_inv * a * &transform));
    Ok(AdaptedNorm {
        transform,
        transform_inv,
        epsilon,
        target_map: a.clone(),
        spectral_radius: rho,
        achieved_norm: achieved,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::linalg::{mat_of_rows, vec_of};
    use proptest::prelude::*;

    #[test]
    fn heisenberg_projection() {
        let g = catalog::heisenberg();
        let ctx = make_quotient(&g, &Subspace::coordinate(3, &[2])).unwrap();
        let x = vec_of(&[3.0, 2.0, -1.0]);
        let y = ctx.project(&x);
        // Coordinates are w.r.t. some orthonormal basis of span{h1,h2}.
        assert!((ctx.lift(&y) - vec_of(&[3.0, 2.0, 0.0])).amax() < 1e-14);
        assert!((ctx.quotient_norm(&x) - 13f64.sqrt()).abs() < 1e-14);
        assert!(ctx.quotient_norm(&vec_of(&[0.0, 0.0, 5.0])) < 1e-14);
        assert!(ctx.right_inverse_residual() < 1e-12);
    }

    #[test]
    fn zero_ideal_keeps_norm() {
        let ctx = QuotientContext::of_subspace(&Subspace::zero(3));
        let x = vec_of(&[1.0, -2.0, 2.0]);
        assert!((ctx.quotient_norm(&x) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn upper_triangular_quotient_dim() {
        let g = catalog::upper_triangular();
        let ctx = make_quotient(&g, &g.derived_algebra()).unwrap();
        assert_eq!(ctx.quotient_dim(), 3);
    }

    #[test]
    fn induced_map_of_rotation_block() {
        let g = catalog::heisenberg();
        let ctx = make_quotient(&g, &Subspace::coordinate(3, &[2])).unwrap();
        let a = mat_of_rows(&[
            vec![0.25, 0.25, 0.0],
            vec![-0.25, 0.25, 0.0],
            vec![0.0, 0.0, 0.01],
        ]);
        let a_bar = ctx.induced_map(&a).unwrap();
        assert!(ctx.commuting_square_residual(&a, &a_bar) < 1e-14);
        // Express back in the h1,h2 coordinates.
        let e = ctx.injection().rows(0, 2).into_owned();
        let in_coords = &e * &a_bar * e.transpose();
        let expected = mat_of_rows(&[vec![0.25, 0.25], vec![-0.25, 0.25]]);
        assert!((in_coords - expected).amax() < 1e-14);
    }

    #[test]
    fn induced_identity() {
        let g = catalog::upper_triangular();
        let ctx = make_quotient(&g, &g.derived_algebra()).unwrap();
        let a_bar = ctx.induced_map(&DMatrix::identity(6, 6)).unwrap();
        assert!((a_bar - DMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn invariance_violation_reported() {
        let g = catalog::heisenberg();
        let ctx = make_quotient(&g, &Subspace::coordinate(3, &[2])).unwrap();
        let mut a = DMatrix::identity(3, 3);
        a[(0, 2)] = 0.5;
        match ctx.induced_map(&a) {
            Err(Error::InvarianceViolation { residual }) => assert!((residual - 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stacked_ex61_spectrum() {
        let g = catalog::upper_triangular();
        let ctx = make_quotient(&g, &g.derived_algebra()).unwrap().stacked(2);
        let m = mat_of_rows(&[vec![-0.5, 0.5], vec![0.5, 0.25]]);
        let a = linalg::kron(&m, &DMatrix::identity(6, 6));
        let a_bar = ctx.induced_map(&a).unwrap();
        assert_eq!(a_bar.nrows(), 6);
        let mut ev: Vec<f64> = linalg::eigenvalues(&a_bar).iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        for (k, v) in ev.iter().enumerate() {
            let want = if k < 3 { -0.75 } else { 0.5 };
            assert!((v - want).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn quotient_algebra_of_heisenberg_is_abelian() {
        let g = catalog::heisenberg();
        let ctx = make_quotient(&g, &g.derived_algebra()).unwrap();
        let q = ctx.quotient_algebra(&g).unwrap();
        assert_eq!(q.dim(), 2);
        assert!(q.structure_constants().iter().flatten().flatten().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn quotient_algebra_requires_ideal() {
        let g = catalog::heisenberg();
        let ctx = make_quotient(&g, &Subspace::coordinate(3, &[0])).unwrap();
        assert!(matches!(ctx.quotient_algebra(&g), Err(Error::NotAnIdeal { .. })));
    }

    #[test]
    fn adapted_norm_examples() {
        let diag = mat_of_rows(&[vec![0.5, 0.0], vec![0.0, 0.3]]);
        let n = adapted_norm(&diag, 0.05).unwrap();
        assert!(n.certified() && (n.achieved_norm - 0.5).abs() < 1e-12);

        let jordan = mat_of_rows(&[vec![0.5, 100.0], vec![0.0, 0.5]]);
        let n = adapted_norm(&jordan, 0.1).unwrap();
        assert!(n.achieved_norm < 0.6, "{}", n.achieved_norm);

        let nil = mat_of_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let n = adapted_norm(&nil, 0.01).unwrap();
        assert!(n.achieved_norm < 0.01);

        let rot = mat_of_rows(&[vec![0.25, 0.25, 3.0], vec![-0.25, 0.25, -2.0], vec![0.0, 0.0, 0.01]]);
        let n = adapted_norm(&rot, 0.01).unwrap();
        assert!(n.certified(), "{} vs {}", n.achieved_norm, n.spectral_radius);
    }

    #[test]
    fn degenerate_quotient_flagged() {
        let g = catalog::heisenberg();
        let ctx = make_quotient(&g, &g.whole()).unwrap();
        assert!(ctx.is_degenerate());
        assert_eq!(ctx.projection_norm(), 0.0);
    }

    #[test]
    fn record_serializes() {
        let g = catalog::heisenberg();
        let ctx = make_quotient(&g, &g.derived_algebra()).unwrap();
        let s = serde_json::to_string(&ctx.to_record()).unwrap();
        assert!(s.contains("\"quotient_dim\":2"));
        assert_eq!(sig17(0.1 + 0.2), 0.1 + 0.2);
    }

    fn letters(d: usize, m: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
        prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), m)
            .prop_map(|v| v.into_iter().map(DVector::from_vec).collect())
    }

    proptest! {
        #[test]
        fn nilpotent_decomposition_heisenberg(ls in (2usize..5).prop_flat_map(|m| letters(3, m))) {
            let g = catalog::heisenberg();
            let chain = g.lower_central_series(&g.whole()).unwrap();
            let tower = QuotientTower::new(&g, &chain).unwrap();
            prop_assert!(check_word_decomposition_nilpotent(&g, &tower, &ls) < 1e-10);
        }

        #[test]
        fn solvable_decomposition_upper_triangular(ls in (2usize..5).prop_flat_map(|m| letters(6, m))) {
            let g = catalog::upper_triangular();
            let chain = g.lower_central_series(&g.derived_algebra()).unwrap();
            let tower = QuotientTower::new(&g, &chain).unwrap();
            prop_assert!(check_word_decomposition_solvable(&g, &tower, &ls) < 1e-10);
            prop_assert!(check_projection_factorization(&tower, &ls[0]) < 1e-12);
        }

        #[test]
        fn quotient_norm_monotone_along_chain(x in prop::collection::vec(-5.0..5.0f64, 6)) {
            let g = catalog::upper_triangular();
            let chain = g.lower_central_series(&g.derived_algebra()).unwrap();
            let tower = QuotientTower::new(&g, &chain).unwrap();
            let x = DVector::from_vec(x);
            let norms: Vec<f64> = tower.levels().iter().map(|c| c.quotient_norm(&x)).collect();
            for w in norms.windows(2) {
                prop_assert!(w[0] <= w[1] + 1e-12);
            }
            prop_assert!(norms.last().unwrap() <= &(x.norm() + 1e-12));
        }

        #[test]
        fn adapted_norm_random(entries in prop::collection::vec(-1.0..1.0f64, 16)) {
            let a = DMatrix::from_vec(4, 4, entries);
            let n = adapted_norm(&a, 0.01).unwrap();
            prop_assert!(n.certified(), "{} vs {}", n.achieved_norm, n.spectral_radius + 0.01);
        }
    }

    #[test]
    fn solvable_example_word() {
        let g = catalog::upper_triangular();
        let chain = g.lower_central_series(&g.derived_algebra()).unwrap();
        let tower = QuotientTower::new(&g, &chain).unwrap();
        let ls = vec![g.element(&[("t1", 1.0)]), g.element(&[("t4", 1.0)]), g.element(&[("t5", 1.0)])];
        assert!(check_word_decomposition_solvable(&g, &tower, &ls) < 1e-10);
    }

    #[test]
    fn heisenberg_word_decomposition_exact() {
        let g = catalog::heisenberg();
        let chain = g.lower_central_series(&g.whole()).unwrap();
        let tower = QuotientTower::new(&g, &chain).unwrap();
        let ls = vec![g.basis_element(0), g.basis_element(1)];
        assert_eq!(check_word_decomposition_nilpotent(&g, &tower, &ls), 0.0);
    }
}
