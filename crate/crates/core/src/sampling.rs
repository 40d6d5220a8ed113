//! From continuous-time invariant plants to discrete-time word series:
//! matrix exponential and principal logarithm, the zero-order-hold
//! step-invariant transform, truncated BCH composition and the adjoint flow.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;

use crate::algebra::{Element, LieAlgebra};
use crate::dynamics::{ClassASystem, ExoSignal, Letter, Slot, Term, Word};
use crate::error::{Error, Result};
use crate::linalg;

/// Highest BCH degree in the coefficient table.
pub const BCH_MAX_ORDER: usize = 6;

/// Entries at most this far from zero count as zero when testing for
/// strict triangularity.
const TRIANGULAR_TOL: f64 = 0.0;

fn is_strictly_upper(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..=i.min(m.ncols().saturating_sub(1))).all(|j| m[(i, j)].abs() <= TRIANGULAR_TOL))
}

fn is_strictly_lower(m: &DMatrix<f64>) -> bool {
    is_strictly_upper(&m.transpose())
}

/// `exp(M)`. Strictly triangular inputs use the terminating series
/// `Σ_{k<m} M^k/k!`; everything else uses scaling-and-squaring Padé.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if is_strictly_upper(m) || is_strictly_lower(m) {
        let mut out = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..n.max(1) {
            term = &term * m / k as f64;
            out += &term;
        }
        return out;
    }
    m.clone().exp()
}

/// Principal logarithm by inverse scaling and squaring: Denman–Beavers
/// square roots until `‖G − I‖ ≤ 0.1`, then `log(I + E) = ∫₀¹ E(I + tE)⁻¹ dt`
/// by 8-point Gauss–Legendre (the [8/8] Padé approximant). Unipotent
/// triangular inputs use the terminating series.
pub fn logm(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    if g.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.ncols() });
    }
    let ident = DMatrix::<f64>::identity(n, n);
    let e = g - &ident;
    if is_strictly_upper(&e) || is_strictly_lower(&e) {
        let mut out = DMatrix::zeros(n, n);
        let mut pow = ident.clone();
        for k in 1..n.max(1) {
            pow = &pow * &e;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            out += &pow * (sign / k as f64);
        }
        return Ok(out);
    }
    for z in linalg::eigenvalues(g).iter() {
        let tiny = 1e-12 * z.norm().max(1.0);
        if z.im.abs() <= tiny && z.re <= tiny {
            return Err(Error::PrincipalLogUndefined { re: z.re, im: z.im });
        }
    }
    let mut x = g.clone();
    let mut squarings = 0u32;
    while linalg::op_norm2(&(&x - &ident)) > 0.1 {
        if squarings >= 60 {
            return Err(Error::Hypothesis("logm: square-root iteration did not approach the identity".into()));
        }
        x = sqrtm_denman_beavers(&x)?;
        squarings += 1;
    }
    let e = &x - &ident;
    let mut out = DMatrix::zeros(n, n);
    for (node, weight) in GAUSS_LEGENDRE_8 {
        let t = 0.5 * (node + 1.0);
        let inv = (&ident + &e * t)
            .try_inverse()
            .ok_or_else(|| Error::Hypothesis("logm: singular quadrature system".into()))?;
        out += &e * inv * (0.5 * weight);
    }
    Ok(out * 2f64.powi(squarings as i32))
}

/// Nodes and weights on `[−1, 1]`.
#[allow(clippy::excessive_precision)] // tabulated to 17 significant digits
const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

fn sqrtm_denman_beavers(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse();
        let zi = z.clone().try_inverse();
        let (Some(yi), Some(zi)) = (yi, zi) else {
            return Err(Error::Hypothesis("logm: singular iterate in square root".into()));
        };
        let yn = (&y + zi) * 0.5;
        let zn = (&z + yi) * 0.5;
        let delta = (&yn - &y).amax();
        y = yn;
        z = zn;
        if delta <= 1e-15 * y.amax().max(1.0) {
            break;
        }
    }
    Ok(y)
}

/// An invertible matrix in the group generated by a matrix algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    matrix: DMatrix<f64>,
}

impl GroupElement {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        let det = matrix.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Input("group elements must be invertible".into()));
        }
        Ok(Self { matrix })
    }

    pub fn identity(m: usize) -> Self {
        Self { matrix: DMatrix::identity(m, m) }
    }

    /// `exp` of an algebra element through its matrix representation.
    pub fn exp_of(alg: &LieAlgebra, x: &Element) -> Result<Self> {
        Ok(Self { matrix: expm(&alg.to_matrix(x)?) })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement { matrix: &self.matrix * &other.matrix }
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement { matrix: self.matrix.clone().try_inverse().expect("checked invertible") }
    }

    /// Principal log in algebra coordinates. Fails when the log leaves
    /// the span of the representation.
    pub fn log(&self, alg: &LieAlgebra) -> Result<Element> {
        let l = logm(&self.matrix)?;
        let (coords, resid) = alg.from_matrix(&l)?;
        if resid > 1e-8 * l.amax().max(1.0) {
            return Err(Error::Hypothesis(format!(
                "log of group element leaves the algebra (residual {resid:.3e})"
            )));
        }
        Ok(coords)
    }
}

/// How the held input enters the generator over one sampling interval.
#[derive(Clone, Debug)]
pub enum HoldInput {
    /// Generator values commute across the interval; the integral is
    /// computed by quadrature and commutation is checked.
    Commuting,
    /// Caller-supplied `∫₀ᵀ A(τ, u) dτ`, trusted as exact.
    ExactIntegral(Element),
}

/// `exp(∫₀ᵀ A(τ, u) dτ)` for a generator sampled under zero-order hold.
pub fn step_invariant(
    alg: &LieAlgebra,
    generator: &dyn Fn(f64, &[f64]) -> Element,
    u: &[f64],
    period: f64,
    hold: HoldInput,
) -> Result<GroupElement> {
    let integral = match hold {
        HoldInput::ExactIntegral(v) => v,
        HoldInput::Commuting => {
            let samples: Vec<(f64, Element)> = GAUSS_LEGENDRE_8
                .iter()
                .map(|(node, w)| {
                    let t = 0.5 * period * (node + 1.0);
                    (0.5 * period * w, generator(t, u))
                })
                .collect();
            let mut worst: f64 = 0.0;
            for (_, a) in &samples {
                for (_, b) in &samples {
                    worst = worst.max(alg.bracket(a, b)?.amax());
                }
            }
            let scale = samples.iter().map(|(_, a)| a.amax()).fold(1.0, f64::max);
            if worst > 1e-12 * scale * scale {
                return Err(Error::NonCommutingHold { residual: worst });
            }
            samples.iter().fold(DVector::zeros(alg.dim()), |acc, (w, a)| acc + a * *w)
        }
    };
    GroupElement::exp_of(alg, &integral)
}

/// Right-nested BCH words in two letters (`0 = X`, `1 = Y`) with exact
/// coefficients, grouped by degree.
#[derive(Clone, Debug)]
pub struct BchSeries {
    by_degree: Vec<Vec<(Vec<u8>, Rational64)>>,
}

/// Noncommutative polynomial in two letters truncated at a degree.
type FreePoly = BTreeMap<Vec<u8>, Rational64>;

fn poly_mul(a: &FreePoly, b: &FreePoly, max_deg: usize) -> FreePoly {
    let mut out = FreePoly::new();
    for (wa, ca) in a {
        for (wb, cb) in b {
            if wa.len() + wb.len() > max_deg {
                continue;
            }
            let mut w = wa.clone();
            w.extend_from_slice(wb);
            *out.entry(w).or_insert_with(|| Rational64::from_integer(0)) += *ca * *cb;
        }
    }
    out.retain(|_, c| *c.numer() != 0);
    out
}

fn exp_letter(letter: u8, max_deg: usize) -> FreePoly {
    let mut out = FreePoly::new();
    let mut fact = 1i64;
    for k in 0..=max_deg {
        if k > 0 {
            fact *= k as i64;
        }
        out.insert(vec![letter; k], Rational64::new(1, fact));
    }
    out
}

impl BchSeries {
    /// The table through [`BCH_MAX_ORDER`], computed once.
    pub fn table() -> &'static BchSeries {
        static TABLE: OnceLock<BchSeries> = OnceLock::new();
        TABLE.get_or_init(|| BchSeries::compute(BCH_MAX_ORDER))
    }

    /// `log(e^X e^Y)` in the free associative algebra, then the
    /// Dynkin–Specht–Wever projection onto right-nested brackets:
    /// a homogeneous Lie element `P` of degree `n` equals
    /// `(1/n) Σ_w c_w [w_1,[w_2,[…,w_n]]]`.
    fn compute(max_deg: usize) -> BchSeries {
        let prod = poly_mul(&exp_letter(0, max_deg), &exp_letter(1, max_deg), max_deg);
        let mut q = prod;
        q.remove(&Vec::new());
        let mut log = FreePoly::new();
        let mut power = q.clone();
        for k in 1..=max_deg {
            let sign = if k % 2 == 1 { 1 } else { -1 };
            for (w, c) in &power {
                *log.entry(w.clone()).or_insert_with(|| Rational64::from_integer(0)) +=
                    *c * Rational64::new(sign, k as i64);
            }
            power = poly_mul(&power, &q, max_deg);
        }
        let mut by_degree = vec![Vec::new(); max_deg + 1];
        let mut collected: BTreeMap<Vec<u8>, Rational64> = BTreeMap::new();
        for (w, c) in &log {
            if *c.numer() == 0 {
                continue;
            }
            let n = w.len();
            if n == 1 {
                *collected.entry(w.clone()).or_insert_with(|| Rational64::from_integer(0)) += *c;
                continue;
            }
            // [w_{n-1}, w_n] = −[w_n, w_{n-1}]: canonicalize so the innermost pair reads (0, 1).
            let (a, b) = (w[n - 2], w[n - 1]);
            if a == b {
                continue;
            }
            let mut key = w.clone();
            let mut coeff = *c * Rational64::new(1, n as i64);
            if a == 1 {
                key.swap(n - 2, n - 1);
                coeff = -coeff;
            }
            *collected.entry(key).or_insert_with(|| Rational64::from_integer(0)) += coeff;
        }
        for (w, c) in collected {
            if *c.numer() != 0 {
                by_degree[w.len()].push((w, c));
            }
        }
        BchSeries { by_degree }
    }

    pub fn max_order(&self) -> usize {
        self.by_degree.len() - 1
    }

    /// Words of one degree with their coefficients.
    pub fn degree(&self, n: usize) -> &[(Vec<u8>, Rational64)] {
        self.by_degree.get(n).map_or(&[], Vec::as_slice)
    }

    /// Coefficient of a right-nested word, after canonicalization.
    pub fn coefficient(&self, word: &[u8]) -> Rational64 {
        self.degree(word.len())
            .iter()
            .find(|(w, _)| w.as_slice() == word)
            .map_or(Rational64::from_integer(0), |(_, c)| *c)
    }
}

/// Result of a truncated BCH composition.
#[derive(Clone, Debug)]
pub struct BchResult {
    pub value: Element,
    pub order: usize,
    /// True when every omitted bracket vanishes identically.
    pub exact: bool,
    /// Heuristic size of the first omitted degree (0 when exact).
    pub tail_estimate: f64,
    pub warning: Option<String>,
}

/// `log(exp X · exp Y)` truncated at degree `order`.
pub fn bch_compose(alg: &LieAlgebra, x: &Element, y: &Element, order: usize) -> Result<BchResult> {
    if x.len() != alg.dim() || y.len() != alg.dim() {
        return Err(Error::DimensionMismatch { expected: alg.dim(), got: x.len().max(y.len()) });
    }
    if order == 0 {
        return Err(Error::Input("BCH order must be at least 1".into()));
    }
    let nilindex = alg.lower_central_series(&alg.whole())?.nilindex();
    let table = BchSeries::table();
    let mut warning = None;
    let used = match nilindex {
        Some(p) if p <= order => order.min(p).min(table.max_order()),
        _ if order > table.max_order() => {
            warning = Some(format!(
                "BCH table stops at degree {}; degrees {}..={} were dropped",
                table.max_order(),
                table.max_order() + 1,
                order
            ));
            table.max_order()
        }
        _ => order,
    };
    let exact = nilindex.is_some_and(|p| p <= used);
    let letters = [x, y];
    let mut value = DVector::zeros(alg.dim());
    for n in 1..=used {
        for (w, c) in table.degree(n) {
            let coeff = *c.numer() as f64 / *c.denom() as f64;
            let mut acc = letters[w[w.len() - 1] as usize].clone();
            for &l in w.iter().rev().skip(1) {
                acc = alg.bracket_unchecked(letters[l as usize].as_slice(), acc.as_slice());
            }
            value += acc * coeff;
        }
    }
    let tail_estimate = if exact {
        0.0
    } else {
        let s = x.norm() + y.norm();
        let mu = alg.default_mu();
        s * (mu * s).powi(used as i32) / (used as f64 + 1.0)
    };
    if !exact && warning.is_none() && nilindex.is_none() {
        warning = Some(format!("truncated at degree {used}; estimated tail {tail_estimate:.3e}"));
    }
    Ok(BchResult { value, order: used, exact, tail_estimate, warning })
}

/// `e^{ad_{T·A}} X` by its power series. Terminates exactly on nilpotent
/// algebras; otherwise runs until terms fall below 1e-17 relative.
pub fn adjoint_flow_step(alg: &LieAlgebra, a: &Element, period: f64, x: &Element) -> Result<Element> {
    if a.len() != alg.dim() || x.len() != alg.dim() {
        return Err(Error::DimensionMismatch { expected: alg.dim(), got: a.len().max(x.len()) });
    }
    let ta = a * period;
    let growth = linalg::op_norm2(&alg.ad_matrix(&ta));
    let mut sum = x.clone();
    let mut term = x.clone();
    for k in 1..10_000 {
        term = alg.bracket_unchecked(ta.as_slice(), term.as_slice()) / k as f64;
        let tn = term.amax();
        if tn == 0.0 {
            break;
        }
        sum += &term;
        if (k as f64) > growth && tn <= 1e-17 * sum.amax().max(1e-300) {
            break;
        }
    }
    Ok(sum)
}

/// Closed-loop feedback gain `u = K e − (1,2,3)ᵀ w` of the Heisenberg
/// tracking example.
pub fn tracking_gain() -> DMatrix<f64> {
    linalg::mat_of_rows(&[vec![-0.75, 0.25, 0.0], vec![-0.25, -0.75, 0.0], vec![0.0, 0.0, -0.99]])
}

/// Direction of the reference signal: `W = (h1 + 2h2 + 3h3) w`.
pub fn tracking_direction() -> Element {
    linalg::vec_of(&[1.0, 2.0, 3.0])
}

/// Linear part `A = I + K` of the tracking error dynamics.
pub fn tracking_linear_part() -> DMatrix<f64> {
    DMatrix::identity(3, 3) + tracking_gain()
}

/// Tracking-error dynamics on the Heisenberg algebra with state `e` and
/// input `W = (h1 + 2h2 + 3h3) w`:
/// `e⁺ = A e + ½[K e, e] − 3/2 [K e, W]`, `K = A − I`.
/// This is the exact group product `exp(2W) exp(u) exp(−W) exp(e)` under
/// the feedback law, so it agrees with [`tracking_pipeline_step`].
pub fn build_error_dynamics_example() -> Result<ClassASystem> {
    let g = crate::catalog::heisenberg();
    let k = tracking_gain();
    let a = tracking_linear_part();
    let kx = Letter::mapped(Slot::State(0), k.clone());
    let terms = vec![
        Term::new(Word::new(vec![kx.clone(), Letter::slot(Slot::State(0))])?, linalg::vec_of(&[0.5])),
        Term::new(Word::new(vec![kx, Letter::slot(Slot::Input(0))])?, linalg::vec_of(&[-1.5])),
    ];
    let whole = g.whole();
    ClassASystem::new(g, 1, 1, a, terms, vec![], whole)
}

/// The same example with the second bracket restricted to `h1, h2`:
/// `−3/2 [(A e)_{12}, (h1 + 2h2) w]`, where `(A e)_{12}` drops the `h3`
/// component. The input slot carries `(h1 + 2h2 + 3h3) w`; the map
/// `diag(1, 1, 0)` recovers `(h1 + 2h2) w` from it.
pub fn build_error_dynamics_truncated_bracket() -> Result<ClassASystem> {
    let g = crate::catalog::heisenberg();
    let a = tracking_linear_part();
    let mut m = a.clone();
    m.row_mut(2).fill(0.0);
    let drop_h3 = DMatrix::from_diagonal(&linalg::vec_of(&[1.0, 1.0, 0.0]));
    let mx = Letter::mapped(Slot::State(0), m);
    let terms = vec![
        Term::new(Word::new(vec![mx.clone(), Letter::slot(Slot::State(0))])?, linalg::vec_of(&[0.5])),
        Term::new(Word::new(vec![mx, Letter::mapped(Slot::Input(0), drop_h3)])?, linalg::vec_of(&[-1.5])),
    ];
    let whole = g.whole();
    ClassASystem::new(g, 1, 1, a, terms, vec![], whole)
}

/// Reference signal `W[k] = 2^k (h1 + 2h2 + 3h3) w0`.
pub fn tracking_signal(w0: f64) -> ExoSignal {
    ExoSignal::Geometric { initial: tracking_direction() * w0, factor: 2.0 }
}

/// One step of the tracking loop computed on the group: the plant factor
/// `exp(h1u1 + h2u2 + h3u3)` from the step-invariant transform, then
/// `E⁺ = exp(2W) · plant · exp(−W) · E`, folded back with `bch_compose`
/// (exact at degree 2 on the Heisenberg algebra).
pub fn tracking_pipeline_step(e: &Element, w: f64) -> Result<Element> {
    let g = crate::catalog::heisenberg();
    let wv = tracking_direction() * w;
    let u = tracking_gain() * e - &wv;
    let basis: Vec<Element> = (0..3).map(|i| g.basis_element(i)).collect();
    let generator = move |_t: f64, u: &[f64]| -> Element {
        basis.iter().zip(u).fold(DVector::zeros(3), |acc, (b, ui)| acc + b * *ui)
    };
    let plant = step_invariant(&g, &generator, u.as_slice(), 1.0, HoldInput::Commuting)?;
    let plant_log = plant.log(&g)?;
    let z = bch_compose(&g, &(&wv * 2.0), &plant_log, 2)?.value;
    let z = bch_compose(&g, &z, &(-&wv), 2)?.value;
    Ok(bch_compose(&g, &z, e, 2)?.value)
}

/// The same step using matrix exponentials and the principal log only.
pub fn tracking_matrix_step(e: &Element, w: f64) -> Result<Element> {
    let g = crate::catalog::heisenberg();
    let wv = tracking_direction() * w;
    let u = tracking_gain() * e - &wv;
    let prod = GroupElement::exp_of(&g, &(&wv * 2.0))?
        .compose(&GroupElement::exp_of(&g, &u)?)
        .compose(&GroupElement::exp_of(&g, &(-&wv))?)
        .compose(&GroupElement::exp_of(&g, e)?);
    prod.log(&g)
}
