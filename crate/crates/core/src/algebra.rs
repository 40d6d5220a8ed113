//! Finite-dimensional real Lie algebras given by structure constants.
//!
//! `[e_i, e_j] = Σ_k C[i][j][k] e_k`, stored densely. Subspaces are kept as
//! orthonormal column bases so containment and projection never depend on
//! which spanning set a caller happened to supply.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, containment_residual, orthonormal_basis};

/// Coordinates of an algebra element in the algebra basis.
pub type Element = DVector<f64>;

/// Tolerance for subspace containment tests.
pub const CONTAINMENT_TOL: f64 = 1e-10;

/// Jacobi residual tolerance applied at construction.
pub const JACOBI_TOL: f64 = 1e-12;

/// Tolerance on `[M_i, M_j] = Σ_k C_ijk M_k` for a matrix representation.
pub const REP_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct LieAlgebra {
    dim: usize,
    /// Flattened `C[i][j][k]` at `(i * dim + j) * dim + k`.
    constants: Vec<f64>,
    labels: Vec<String>,
    matrix_rep: Option<Vec<DMatrix<f64>>>,
}

impl LieAlgebra {
    /// Build from a dense `C[i][j][k]` tensor, validating antisymmetry,
    /// the Jacobi identity and (when given) the matrix representation.
    pub fn new(
        labels: Vec<String>,
        constants: Vec<Vec<Vec<f64>>>,
        matrix_rep: Option<Vec<DMatrix<f64>>>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidAlgebra("dimension must be positive".into()));
        }
        let alg = Self::new_allow_empty(labels, constants)?;
        match matrix_rep {
            Some(rep) => alg.with_matrix_rep(rep),
            None => Ok(alg),
        }
    }

    /// As [`LieAlgebra::new`] without a representation, also admitting the
    /// zero algebra (quotients `g / g`).
    pub fn new_allow_empty(labels: Vec<String>, constants: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = labels.len();
        if constants.len() != dim
            || constants.iter().any(|r| r.len() != dim || r.iter().any(|c| c.len() != dim))
        {
            return Err(Error::InvalidAlgebra(format!(
                "structure constants must be {dim}×{dim}×{dim}"
            )));
        }
        let mut flat = vec![0.0; dim * dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let c = constants[i][j][k];
                    if !c.is_finite() {
                        return Err(Error::InvalidAlgebra("non-finite structure constant".into()));
                    }
                    flat[(i * dim + j) * dim + k] = c;
                }
            }
        }
        let alg = Self { dim, constants: flat, labels, matrix_rep: None };
        alg.validate_antisymmetry()?;
        let jac = alg.max_basis_jacobi_residual();
        let scale = alg.constants.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
        if jac > JACOBI_TOL * scale * scale {
            return Err(Error::InvalidAlgebra(format!("Jacobi identity fails (residual {jac:.3e})")));
        }
        Ok(alg)
    }

    /// Build from the nonzero brackets `[e_i, e_j] = Σ c_k e_k`.
    /// Mirrored pairs are filled in by antisymmetry.
    pub fn from_brackets(
        labels: &[&str],
        brackets: &[(usize, usize, Vec<(usize, f64)>)],
    ) -> Result<Self> {
        let d = labels.len();
        let mut c = vec![vec![vec![0.0; d]; d]; d];
        let mut seen = vec![vec![false; d]; d];
        for (i, j, coeffs) in brackets {
            let (i, j) = (*i, *j);
            if i >= d || j >= d {
                return Err(Error::InvalidAlgebra(format!("bracket index ({i},{j}) out of range")));
            }
            let mut v = vec![0.0; d];
            for &(k, x) in coeffs {
                if k >= d {
                    return Err(Error::InvalidAlgebra(format!("coefficient index {k} out of range")));
                }
                v[k] += x;
            }
            if i == j {
                if v.iter().any(|&x| x != 0.0) {
                    return Err(Error::InvalidAlgebra(format!("[{0},{0}] must vanish", labels[i])));
                }
                continue;
            }
            if seen[i][j] || seen[j][i] {
                // Redundant pair: must agree with what is already there.
                let conflict = (0..d).any(|k| (c[i][j][k] - v[k]).abs() > 1e-12);
                if conflict {
                    return Err(Error::InvalidAlgebra(format!(
                        "bracket [{},{}] conflicts with its mirror",
                        labels[i], labels[j]
                    )));
                }
                continue;
            }
            for k in 0..d {
                c[i][j][k] = v[k];
                c[j][i][k] = -v[k];
            }
            seen[i][j] = true;
        }
        Self::new(labels.iter().map(|s| s.to_string()).collect(), c, None)
    }

    /// Structure constants computed from a basis of matrices under the
    /// commutator. The matrices become the algebra's representation.
    pub fn from_matrix_basis(labels: &[&str], mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = mats.len();
        if d == 0 || labels.len() != d {
            return Err(Error::InvalidAlgebra("need one label per basis matrix".into()));
        }
        let m = mats[0].nrows();
        let vecs = DMatrix::from_fn(m * m, d, |r, c| mats[c].as_slice()[r]);
        if linalg::rank(&vecs) < d {
            return Err(Error::RankDeficient { rank: linalg::rank(&vecs), cols: d });
        }
        let pinv = vecs
            .clone()
            .pseudo_inverse(1e-14)
            .map_err(|e| Error::InvalidAlgebra(e.to_string()))?;
        let mut c = vec![vec![vec![0.0; d]; d]; d];
        for i in 0..d {
            for j in 0..d {
                let comm = &mats[i] * &mats[j] - &mats[j] * &mats[i];
                let coords = &pinv * DVector::from_column_slice(comm.as_slice());
                for k in 0..d {
                    // Exact representations give exact (usually integer)
                    // constants; remove the pseudo-inverse rounding.
                    let v = coords[k];
                    let r = v.round();
                    c[i][j][k] = if (v - r).abs() < 1e-12 { r } else { v };
                }
            }
        }
        Self::new(labels.iter().map(|s| s.to_string()).collect(), c, Some(mats))
    }

    fn with_matrix_rep(mut self, rep: Vec<DMatrix<f64>>) -> Result<Self> {
        if rep.len() != self.dim {
            return Err(Error::InvalidAlgebra(format!(
                "matrix_rep has {} matrices, expected {}",
                rep.len(),
                self.dim
            )));
        }
        let m = rep[0].nrows();
        if rep.iter().any(|r| r.nrows() != m || r.ncols() != m) {
            return Err(Error::InvalidAlgebra("matrix_rep matrices must be square and equal size".into()));
        }
        self.matrix_rep = Some(rep);
        let resid = self.rep_residual().unwrap_or(0.0);
        if resid > REP_TOL {
            return Err(Error::InvalidAlgebra(format!(
                "matrix_rep commutators disagree with structure constants (residual {resid:.3e})"
            )));
        }
        Ok(self)
    }

    fn validate_antisymmetry(&self) -> Result<()> {
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    if self.c(i, j, k) != -self.c(j, i, k) {
                        return Err(Error::InvalidAlgebra(format!(
                            "antisymmetry fails at ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn max_basis_jacobi_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let r = self.jacobi_residual(&self.basis_element(i), &self.basis_element(j), &self.basis_element(k));
                    worst = worst.max(r);
                }
            }
        }
        worst
    }

    #[inline]
    fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.constants[(i * self.dim + j) * self.dim + k]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c(i, j, k)
    }

    /// Dense copy of the tensor as nested vectors.
    pub fn structure_constants(&self) -> Vec<Vec<Vec<f64>>> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| (0..d).map(|k| self.c(i, j, k)).collect()).collect())
            .collect()
    }

    pub fn matrix_rep(&self) -> Option<&[DMatrix<f64>]> {
        self.matrix_rep.as_deref()
    }

    pub fn is_abelian(&self) -> bool {
        self.constants.iter().all(|&c| c == 0.0)
    }

    pub fn basis_element(&self, i: usize) -> Element {
        let mut e = DVector::zeros(self.dim);
        e[i] = 1.0;
        e
    }

    pub fn zero(&self) -> Element {
        DVector::zeros(self.dim)
    }

    /// Element from `(label, coefficient)` pairs. Panics on unknown labels;
    /// intended for catalog algebras and tests.
    pub fn element(&self, terms: &[(&str, f64)]) -> Element {
        let mut x = self.zero();
        for (l, c) in terms {
            let i = self.label_index(l).unwrap_or_else(|| panic!("unknown basis label {l}"));
            x[i] += c;
        }
        x
    }

    fn check_len(&self, x: &Element) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// `[x, y] = Σ_{i,j} x_i y_j C[i][j][·]`.
    pub fn bracket(&self, x: &Element, y: &Element) -> Result<Element> {
        self.check_len(x)?;
        self.check_len(y)?;
        Ok(self.bracket_unchecked(x.as_slice(), y.as_slice()))
    }

    /// Bracket on raw coordinate slices of length `dim`.
    pub fn bracket_unchecked(&self, x: &[f64], y: &[f64]) -> Element {
        let d = self.dim;
        let mut out = DVector::zeros(d);
        for i in 0..d {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for j in 0..d {
                let w = xi * y[j];
                if w == 0.0 {
                    continue;
                }
                let base = (i * d + j) * d;
                for k in 0..d {
                    out[k] += w * self.constants[base + k];
                }
            }
        }
        out
    }

    /// Matrix of `ad_x = [x, ·]` in the algebra basis.
    pub fn ad_matrix(&self, x: &Element) -> DMatrix<f64> {
        let d = self.dim;
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                if x[i] == 0.0 {
                    continue;
                }
                for k in 0..d {
                    m[(k, j)] += x[i] * self.c(i, j, k);
                }
            }
        }
        m
    }

    /// Max-coordinate residual of `[[x,y],z] + [[y,z],x] + [[z,x],y]`.
    pub fn jacobi_residual(&self, x: &Element, y: &Element, z: &Element) -> f64 {
        let b = |a: &Element, c: &Element| self.bracket_unchecked(a.as_slice(), c.as_slice());
        let r = b(&b(x, y), z) + b(&b(y, z), x) + b(&b(z, x), y);
        r.amax()
    }

    /// `Σ_i x_i M_i` in the matrix representation.
    pub fn to_matrix(&self, x: &Element) -> Result<DMatrix<f64>> {
        self.check_len(x)?;
        let rep = self.matrix_rep.as_ref().ok_or(Error::MissingMatrixRep)?;
        let m = rep[0].nrows();
        let mut out = DMatrix::zeros(m, m);
        for (xi, mi) in x.iter().zip(rep) {
            out += mi * *xi;
        }
        Ok(out)
    }

    /// Least-squares coordinates of a matrix in the representation basis.
    /// The second value is the residual of the fit.
    pub fn from_matrix(&self, m: &DMatrix<f64>) -> Result<(Element, f64)> {
        let rep = self.matrix_rep.as_ref().ok_or(Error::MissingMatrixRep)?;
        let size = rep[0].nrows();
        if m.nrows() != size || m.ncols() != size {
            return Err(Error::DimensionMismatch { expected: size, got: m.nrows() });
        }
        let basis = DMatrix::from_fn(size * size, self.dim, |r, c| rep[c].as_slice()[r]);
        let target = DVector::from_column_slice(m.as_slice());
        // The representation is faithful, so the basis has full column rank.
        let qr = basis.clone().qr();
        let coords = qr
            .r()
            .solve_upper_triangular(&(qr.q().transpose() * &target))
            .ok_or_else(|| Error::InvalidAlgebra("matrix representation is not faithful".into()))?;
        let resid = (basis * &coords - target).norm();
        Ok((coords, resid))
    }

    /// `max_{i,j} ‖[M_i,M_j] − Σ_k C_ijk M_k‖_max`, or `None` without a representation.
    pub fn rep_residual(&self) -> Option<f64> {
        let rep = self.matrix_rep.as_ref()?;
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut r = &rep[i] * &rep[j] - &rep[j] * &rep[i];
                for (k, mk) in rep.iter().enumerate() {
                    r -= mk * self.c(i, j, k);
                }
                worst = worst.max(r.amax());
            }
        }
        Some(worst)
    }

    /// Span of all pairwise brackets of basis vectors of `s1` and `s2`.
    pub fn subspace_bracket(&self, s1: &Subspace, s2: &Subspace) -> Result<Subspace> {
        if s1.ambient_dim() != self.dim || s2.ambient_dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: if s1.ambient_dim() != self.dim { s1.ambient_dim() } else { s2.ambient_dim() },
            });
        }
        let (b1, b2) = (s1.basis(), s2.basis());
        let mut cols = Vec::with_capacity(b1.ncols() * b2.ncols());
        for i in 0..b1.ncols() {
            let x = b1.column(i).into_owned();
            for j in 0..b2.ncols() {
                let y = b2.column(j).into_owned();
                cols.push(self.bracket_unchecked(x.as_slice(), y.as_slice()));
            }
        }
        Ok(Subspace::span(self.dim, &cols))
    }

    pub fn whole(&self) -> Subspace {
        Subspace::whole(self.dim)
    }

    /// `[g, g]`.
    pub fn derived_algebra(&self) -> Subspace {
        self.subspace_bracket(&self.whole(), &self.whole())
            .expect("dimensions agree")
    }

    /// Residual of `[g, s] ⊆ s`.
    pub fn ideal_residual(&self, s: &Subspace) -> f64 {
        let br = self.subspace_bracket(&self.whole(), s).expect("dimensions agree");
        containment_residual(br.basis(), s.basis())
    }

    pub fn is_ideal(&self, s: &Subspace) -> bool {
        self.ideal_residual(s) < CONTAINMENT_TOL
    }

    /// Residual of `[s, s] ⊆ s`.
    pub fn subalgebra_residual(&self, s: &Subspace) -> f64 {
        let br = self.subspace_bracket(s, s).expect("dimensions agree");
        containment_residual(br.basis(), s.basis())
    }

    /// Derived series `g_0 = g`, `g_{i+1} = [g_i, g_i]`.
    pub fn derived_series(&self) -> IdealChain {
        let mut ideals = vec![self.whole()];
        loop {
            let cur = ideals.last().expect("nonempty");
            let next = self.subspace_bracket(cur, cur).expect("dimensions agree");
            if next.dim() == 0 {
                ideals.push(next);
                return IdealChain { kind: ChainKind::Derived, ideals, terminated: true };
            }
            if next.dim() == cur.dim() {
                return IdealChain { kind: ChainKind::Derived, ideals, terminated: false };
            }
            ideals.push(next);
        }
    }

    /// Lower central series of the subalgebra `start` inside itself:
    /// `h^(1) = h`, `h^(i+1) = [h^(i), h]`.
    pub fn lower_central_series(&self, start: &Subspace) -> Result<IdealChain> {
        if start.ambient_dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: start.ambient_dim() });
        }
        let resid = self.subalgebra_residual(start);
        if resid >= CONTAINMENT_TOL {
            return Err(Error::Input(format!("start is not a subalgebra (residual {resid:.3e})")));
        }
        let mut ideals = vec![start.clone()];
        if start.dim() == 0 {
            return Ok(IdealChain { kind: ChainKind::LowerCentral, ideals, terminated: true });
        }
        loop {
            let cur = ideals.last().expect("nonempty");
            let next = self.subspace_bracket(cur, start)?;
            if next.dim() == 0 {
                ideals.push(next);
                return Ok(IdealChain { kind: ChainKind::LowerCentral, ideals, terminated: true });
            }
            if next.dim() == cur.dim() {
                return Ok(IdealChain { kind: ChainKind::LowerCentral, ideals, terminated: false });
            }
            ideals.push(next);
        }
    }

    /// Solvability with derived length, cross-checked against nilpotency
    /// of the derived algebra.
    pub fn solvability(&self) -> Solvability {
        let series = self.derived_series();
        let derived_length = series.terminated.then(|| series.ideals.len() - 2);
        let dg = self.derived_algebra();
        let dg_nilpotent = self
            .lower_central_series(&dg)
            .map(|c| c.terminated)
            .unwrap_or(false);
        Solvability {
            solvable: series.terminated,
            derived_length,
            derived_algebra_nilpotent: dg_nilpotent,
        }
    }

    pub fn is_solvable(&self) -> (bool, Option<usize>) {
        let s = self.solvability();
        (s.solvable, s.derived_length)
    }

    /// Nilpotency of `start` (inside itself) and its nilindex.
    pub fn is_nilpotent(&self, start: &Subspace) -> Result<(bool, Option<usize>)> {
        let chain = self.lower_central_series(start)?;
        Ok((chain.terminated, chain.nilindex()))
    }

    /// Bracket constant `μ` with `‖[x,y]‖ ≤ μ‖x‖‖y‖`.
    pub fn mu_constant(&self, kind: MuKind) -> Result<f64> {
        match kind {
            MuKind::FrobeniusRep => {
                if self.matrix_rep.is_none() {
                    return Err(Error::MissingMatrixRep);
                }
                Ok(std::f64::consts::SQRT_2)
            }
            MuKind::Generic => Ok(2.0),
            MuKind::Estimated => Ok(1.05 * self.bracket_norm_sup(0x5eed_0001)),
        }
    }

    /// Bracket constant used when a system does not specify one: `√2` when
    /// the representation basis is Frobenius-orthonormal (so coordinate and
    /// Frobenius norms agree), otherwise the numerical estimate.
    pub fn default_mu(&self) -> f64 {
        if let Some(rep) = &self.matrix_rep {
            let d = self.dim;
            let orthonormal = (0..d).all(|i| {
                (0..d).all(|j| {
                    let ip = rep[i].dot(&rep[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    (ip - want).abs() < 1e-12
                })
            });
            if orthonormal {
                return std::f64::consts::SQRT_2;
            }
        }
        1.05 * self.bracket_norm_sup(0x5eed_0001)
    }

    /// Estimate of `sup ‖[x,y]‖` over Euclidean unit pairs by multistart
    /// alternating maximization: for fixed `x` the best `y` is the top right
    /// singular vector of `ad_x`, and symmetrically.
    pub fn bracket_norm_sup(&self, seed: u64) -> f64 {
        if self.is_abelian() {
            return 0.0;
        }
        let d = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut starts: Vec<Element> = (0..d).map(|i| self.basis_element(i)).collect();
        for _ in 0..(4 * d).max(16) {
            let v = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            starts.push(v);
        }
        let top_right = |m: &DMatrix<f64>| -> (f64, Element) {
            let eig = nalgebra::SymmetricEigen::new(m.transpose() * m);
            let imax = eig.eigenvalues.imax();
            (eig.eigenvalues[imax].max(0.0).sqrt(), eig.eigenvectors.column(imax).into_owned())
        };
        let mut best: f64 = 0.0;
        for mut x in starts {
            let n = x.norm();
            if n == 0.0 {
                continue;
            }
            x /= n;
            let mut val = 0.0;
            for _ in 0..60 {
                let (_, y) = top_right(&self.ad_matrix(&x));
                let (_, xn) = top_right(&self.ad_matrix(&y));
                x = xn;
                let (s, _) = top_right(&self.ad_matrix(&x));
                if (s - val).abs() <= 1e-14 * s.max(1.0) {
                    val = s;
                    break;
                }
                val = s;
            }
            best = best.max(val);
        }
        best
    }
}

/// Choice of bracket constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MuKind {
    /// `√2`, valid for matrix algebras under the Frobenius norm.
    FrobeniusRep,
    /// `2`, from the triangle inequality.
    Generic,
    /// Numerical supremum over unit pairs with a 5% margin.
    Estimated,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solvability {
    pub solvable: bool,
    pub derived_length: Option<usize>,
    /// Nilpotency of `[g, g]`; must equal `solvable`.
    pub derived_algebra_nilpotent: bool,
}

impl Solvability {
    pub fn agrees_with_derived_nilpotency(&self) -> bool {
        self.solvable == self.derived_algebra_nilpotent
    }
}

/// A linear subspace of ℝ^d, stored as an orthonormal column basis.
#[derive(Clone, Debug)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Subspace spanned by the columns of `basis`, which must be linearly
    /// independent.
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let q = orthonormal_basis(&basis);
        if q.ncols() < basis.ncols() {
            return Err(Error::RankDeficient { rank: q.ncols(), cols: basis.ncols() });
        }
        Ok(Self { basis: q })
    }

    /// Span of arbitrary (possibly dependent) vectors.
    pub fn span(d: usize, vectors: &[DVector<f64>]) -> Self {
        if vectors.is_empty() {
            return Self::zero(d);
        }
        let m = DMatrix::from_fn(d, vectors.len(), |i, j| vectors[j][i]);
        Self { basis: orthonormal_basis(&m) }
    }

    pub fn zero(d: usize) -> Self {
        Self { basis: DMatrix::zeros(d, 0) }
    }

    pub fn whole(d: usize) -> Self {
        Self { basis: DMatrix::identity(d, d) }
    }

    /// Span of the given coordinate axes.
    pub fn coordinate(d: usize, axes: &[usize]) -> Self {
        let vs: Vec<DVector<f64>> = axes
            .iter()
            .map(|&i| {
                let mut v = DVector::zeros(d);
                v[i] = 1.0;
                v
            })
            .collect();
        Self::span(d, &vs)
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Orthonormal basis as columns.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `‖(I − Π)v‖`.
    pub fn distance(&self, v: &DVector<f64>) -> f64 {
        if self.dim() == 0 {
            return v.norm();
        }
        (v - &self.basis * (self.basis.transpose() * v)).norm()
    }

    pub fn contains_vector(&self, v: &DVector<f64>) -> bool {
        self.distance(v) < CONTAINMENT_TOL * v.norm().max(1.0)
    }

    /// Residual of `self ⊆ other`.
    pub fn containment_residual(&self, other: &Subspace) -> f64 {
        containment_residual(&self.basis, &other.basis)
    }

    pub fn is_subset_of(&self, other: &Subspace) -> bool {
        self.containment_residual(other) < CONTAINMENT_TOL
    }

    pub fn same_as(&self, other: &Subspace) -> bool {
        self.dim() == other.dim() && self.is_subset_of(other)
    }

    /// `S^n` inside the slot-major stacked space.
    pub fn stacked(&self, n: usize) -> Subspace {
        let d = self.ambient_dim();
        let m = self.dim();
        let mut b = DMatrix::zeros(n * d, n * m);
        for s in 0..n {
            b.view_mut((s * d, s * m), (d, m)).copy_from(&self.basis);
        }
        Subspace { basis: b }
    }

    /// Image under a linear map.
    pub fn image(&self, m: &DMatrix<f64>) -> Subspace {
        let img = m * &self.basis;
        Subspace { basis: orthonormal_basis(&img) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainKind {
    Derived,
    LowerCentral,
}

/// A weakly decreasing chain of ideals.
///
/// Derived chains are indexed from 0 (`g_0 = g`); lower-central chains from
/// 1 (`h^(1) = h`). Indexing past the stored end returns the last entry,
/// which is 0 when the chain terminated.
#[derive(Clone, Debug)]
pub struct IdealChain {
    pub kind: ChainKind,
    pub ideals: Vec<Subspace>,
    /// True when the chain reached the zero subspace.
    pub terminated: bool,
}

impl IdealChain {
    fn offset(&self) -> usize {
        match self.kind {
            ChainKind::Derived => 0,
            ChainKind::LowerCentral => 1,
        }
    }

    /// The `i`-th term in the chain's own indexing convention.
    pub fn term(&self, i: usize) -> &Subspace {
        let off = self.offset();
        assert!(i >= off, "lower-central chains start at index 1");
        let idx = (i - off).min(self.ideals.len() - 1);
        &self.ideals[idx]
    }

    /// For a lower-central chain: smallest `p` with `h^(p+1) = 0`.
    pub fn nilindex(&self) -> Option<usize> {
        (self.kind == ChainKind::LowerCentral && self.terminated).then(|| self.ideals.len() - 1)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.ideals.iter().map(Subspace::dim).collect()
    }

    /// Max residual of `[h^(i), h^(j)] ⊆ h^(i+j)` over all stored levels.
    pub fn strong_centrality_residual(&self, alg: &LieAlgebra) -> f64 {
        assert_eq!(self.kind, ChainKind::LowerCentral);
        let len = self.ideals.len();
        let mut worst: f64 = 0.0;
        for i in 1..=len {
            for j in 1..=len {
                let br = alg
                    .subspace_bracket(self.term(i), self.term(j))
                    .expect("dimensions agree");
                worst = worst.max(br.containment_residual(self.term(i + j)));
            }
        }
        worst
    }

    /// Each entry contained in its predecessor.
    pub fn is_decreasing(&self) -> bool {
        self.ideals.windows(2).all(|w| w[1].is_subset_of(&w[0]))
    }
}

/// On-disk algebra definition. Unlisted pairs bracket to zero; mirrored
/// pairs are completed by antisymmetry, and a listed mirror must agree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraFile {
    pub dim: usize,
    pub labels: Vec<String>,
    #[serde(default)]
    pub brackets: Vec<BracketEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_rep: Option<Vec<Vec<Vec<f64>>>>,
}

/// `[i, j] = Σ_k coeffs[k] k`, all by label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketEntry {
    pub i: String,
    pub j: String,
    pub coeffs: BTreeMap<String, f64>,
}

impl AlgebraFile {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Input(format!("{path}: {inner}"))
        })
    }

    pub fn build(&self) -> Result<LieAlgebra> {
        if self.dim != self.labels.len() {
            return Err(Error::Input(format!(
                "labels: expected {} labels for dim {}, got {}",
                self.dim,
                self.dim,
                self.labels.len()
            )));
        }
        let index = |field: &str, label: &str| -> Result<usize> {
            self.labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::Input(format!("{field}: unknown label {label:?}")))
        };
        let mut brackets = Vec::with_capacity(self.brackets.len());
        for (b, entry) in self.brackets.iter().enumerate() {
            let i = index(&format!("brackets[{b}].i"), &entry.i)?;
            let j = index(&format!("brackets[{b}].j"), &entry.j)?;
            let coeffs = entry
                .coeffs
                .iter()
                .map(|(k, c)| Ok((index(&format!("brackets[{b}].coeffs"), k)?, *c)))
                .collect::<Result<Vec<_>>>()?;
            brackets.push((i, j, coeffs));
        }
        let refs: Vec<&str> = self.labels.iter().map(String::as_str).collect();
        let alg = LieAlgebra::from_brackets(&refs, &brackets)?;
        match &self.matrix_rep {
            None => Ok(alg),
            Some(rep) => {
                if rep.len() != self.dim {
                    return Err(Error::Input(format!(
                        "matrix_rep: expected {} matrices, got {}",
                        self.dim,
                        rep.len()
                    )));
                }
                let mats = rep
                    .iter()
                    .enumerate()
                    .map(|(i, rows)| {
                        let m = rows.len();
                        if rows.iter().any(|r| r.len() != m) {
                            return Err(Error::Input(format!("matrix_rep[{i}]: matrix must be square")));
                        }
                        Ok(linalg::mat_of_rows(rows))
                    })
                    .collect::<Result<Vec<_>>>()?;
                alg.with_matrix_rep(mats)
            }
        }
    }

    /// File form of an algebra, listing each nonzero bracket once.
    pub fn from_algebra(alg: &LieAlgebra) -> Self {
        let d = alg.dim();
        let labels = alg.labels().to_vec();
        let mut brackets = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                let coeffs: BTreeMap<String, f64> = (0..d)
                    .filter(|&k| alg.structure_constant(i, j, k) != 0.0)
                    .map(|k| (labels[k].clone(), alg.structure_constant(i, j, k)))
                    .collect();
                if !coeffs.is_empty() {
                    brackets.push(BracketEntry { i: labels[i].clone(), j: labels[j].clone(), coeffs });
                }
            }
        }
        let matrix_rep = alg.matrix_rep().map(|rep| rep.iter().map(linalg::rows_of).collect());
        Self { dim: d, labels, brackets, matrix_rep }
    }
}
