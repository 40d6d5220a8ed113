//! Word-series systems `X⁺ = A X + Σ c_ω ⊗ ω` on `g^n` driven by `W ∈ g^r`.
//!
//! Stacked coordinates are slot-major: slot 1 occupies entries `0..d`,
//! slot 2 entries `d..2d`, and so on.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{IdealChain, LieAlgebra, Subspace, CONTAINMENT_TOL};
use crate::error::{Error, Result};
use crate::linalg;
use crate::quotient::{make_quotient, QuotientContext, QuotientTower};

/// Longest family expansion ever produced.
pub const MAX_FAMILY_CUTOFF: usize = 30;

/// Default tail tolerance for family expansion.
pub const FAMILY_TAIL_TOL: f64 = 1e-12;

/// Upper limit on the number of words one family may expand into.
pub const MAX_FAMILY_WORDS: usize = 1 << 20;

/// Norms at or above this are treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e150;

/// A state or input slot, zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slot {
    State(usize),
    Input(usize),
}

impl Slot {
    /// Parse `X3` / `W1` (one-based).
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s.split_at(s.char_indices().nth(1).map_or(s.len(), |(i, _)| i));
        let idx: usize = rest
            .parse()
            .map_err(|_| Error::Input(format!("bad slot reference '{s}' (expected X<j> or W<j>)")))?;
        if idx == 0 {
            return Err(Error::Input(format!("slot indices are one-based: '{s}'")));
        }
        match kind {
            "X" | "x" => Ok(Slot::State(idx - 1)),
            "W" | "w" => Ok(Slot::Input(idx - 1)),
            _ => Err(Error::Input(format!("bad slot reference '{s}' (expected X<j> or W<j>)"))),
        }
    }

    pub fn is_state(self) -> bool {
        matches!(self, Slot::State(_))
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::State(j) => write!(f, "X{}", j + 1),
            Slot::Input(j) => write!(f, "W{}", j + 1),
        }
    }
}

/// A slot value, optionally passed through a linear map `L : g → g`.
#[derive(Clone, Debug, PartialEq)]
pub struct Letter {
    pub slot: Slot,
    pub map: Option<DMatrix<f64>>,
}

impl Letter {
    pub fn slot(slot: Slot) -> Self {
        Self { slot, map: None }
    }

    pub fn mapped(slot: Slot, map: DMatrix<f64>) -> Self {
        Self { slot, map: Some(map) }
    }

    /// `‖L‖₂`, or 1 for a bare letter.
    pub fn map_norm(&self) -> f64 {
        self.map.as_ref().map_or(1.0, linalg::op_norm2)
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.map {
            None => write!(f, "{}", self.slot),
            Some(_) => write!(f, "L({})", self.slot),
        }
    }
}

/// Right-nested bracket `[Y_1, [Y_2, [… , Y_m]…]]`, `m ≥ 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Word {
    letters: Vec<Letter>,
}

impl Word {
    pub fn new(letters: Vec<Letter>) -> Result<Self> {
        if letters.len() < 2 {
            return Err(Error::Input(
                "bracket words need at least two letters; length-one terms belong in A".into(),
            ));
        }
        Ok(Self { letters })
    }

    /// Word over bare slots.
    pub fn of_slots(slots: &[Slot]) -> Result<Self> {
        Self::new(slots.iter().map(|&s| Letter::slot(s)).collect())
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn state_letters(&self) -> usize {
        self.letters.iter().filter(|l| l.slot.is_state()).count()
    }

    /// `Π ‖L_j‖₂`.
    pub fn map_weight(&self) -> f64 {
        self.letters.iter().map(Letter::map_norm).product()
    }

    pub fn slots(&self) -> Vec<Slot> {
        self.letters.iter().map(|l| l.slot).collect()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.letters.len();
        for l in &self.letters[..m - 1] {
            write!(f, "[{l},")?;
        }
        write!(f, "{}", self.letters[m - 1])?;
        for _ in 1..m {
            write!(f, "]")?;
        }
        Ok(())
    }
}

/// `c ⊗ ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub word: Word,
    pub coeff: DVector<f64>,
}

impl Term {
    pub fn new(word: Word, coeff: DVector<f64>) -> Self {
        Self { word, coeff }
    }

    /// `‖c‖₁ Π‖L_j‖₂`, the weight entering every majorant.
    pub fn weight(&self) -> f64 {
        self.coeff.lp_norm(1) * self.word.map_weight()
    }
}

/// How many adjoint powers a family expansion keeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cutoff {
    Fixed(usize),
    /// Smallest `L` with tail below `tol` on the ball of the given radius.
    Tolerance { tol: f64, radius: f64 },
}

/// `c ⊗ scale·(e^{ad_b} − Id)(target)` with `b = Σ β_j Z_j` over slots.
/// The identity part belongs to `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedFamily {
    pub base: Vec<(Slot, f64)>,
    pub target: Slot,
    pub scale: f64,
    pub coeff: DVector<f64>,
    pub cutoff: Cutoff,
}

impl GeneratedFamily {
    pub fn new(base: Vec<(Slot, f64)>, target: Slot, coeff: DVector<f64>) -> Self {
        Self {
            base,
            target,
            scale: 1.0,
            coeff,
            cutoff: Cutoff::Tolerance { tol: FAMILY_TAIL_TOL, radius: 1.0 },
        }
    }

    /// `‖β‖₁`.
    pub fn base_weight(&self) -> f64 {
        self.base.iter().map(|(_, b)| b.abs()).sum()
    }

    /// Some expanded word has only input letters.
    pub fn has_input_only_words(&self) -> bool {
        !self.target.is_state() && self.base.iter().any(|(s, b)| !s.is_state() && *b != 0.0)
    }
}

impl fmt::Display for GeneratedFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base: Vec<String> = self.base.iter().map(|(s, b)| format!("{b}·{s}")).collect();
        write!(f, "{}·(exp(ad[{}]) − I)({})", self.scale, base.join(" + "), self.target)
    }
}

/// Expansion of a family into explicit words.
#[derive(Clone, Debug)]
pub struct FamilyExpansion {
    pub terms: Vec<Term>,
    pub cutoff: usize,
    pub tail_bound: f64,
}

/// Which norm the product spaces `g^n`, `g^r` carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProductNorm {
    /// `Σ_s ‖x_s‖₂`.
    #[default]
    Sum,
    /// Euclidean norm of the stacked vector.
    Euclidean,
}

impl ProductNorm {
    pub fn norm(self, x: &DVector<f64>, width: usize) -> f64 {
        match self {
            ProductNorm::Euclidean => x.norm(),
            ProductNorm::Sum => {
                if width == 0 {
                    return 0.0;
                }
                x.as_slice().chunks(width).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).sum()
            }
        }
    }

    /// Operator norm bound for a map between stacks of `n` slots of width `w`.
    pub fn operator_norm(self, m: &DMatrix<f64>, n: usize, w: usize) -> f64 {
        match self {
            ProductNorm::Euclidean => linalg::op_norm2(m),
            ProductNorm::Sum => linalg::block_sum_norm(m, n, w),
        }
    }
}

/// A class-A system on `g^n` with inputs in `g^r`.
#[derive(Clone, Debug)]
pub struct ClassASystem {
    algebra: LieAlgebra,
    n: usize,
    r: usize,
    a: DMatrix<f64>,
    terms: Vec<Term>,
    families: Vec<GeneratedFamily>,
    ideal: Subspace,
    chain: IdealChain,
    mu: f64,
    norm: ProductNorm,
}

impl ClassASystem {
    /// Validates dimensions, slot ranges and that `ideal` is an ideal.
    pub fn new(
        algebra: LieAlgebra,
        n: usize,
        r: usize,
        a: DMatrix<f64>,
        terms: Vec<Term>,
        families: Vec<GeneratedFamily>,
        ideal: Subspace,
    ) -> Result<Self> {
        let d = algebra.dim();
        if n == 0 {
            return Err(Error::Input("n must be positive".into()));
        }
        if a.nrows() != n * d || a.ncols() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, got: a.nrows() });
        }
        let check_slot = |s: Slot| -> Result<()> {
            match s {
                Slot::State(j) if j >= n => Err(Error::Input(format!("state slot {s} out of range (n = {n})"))),
                Slot::Input(j) if j >= r => Err(Error::Input(format!("input slot {s} out of range (r = {r})"))),
                _ => Ok(()),
            }
        };
        for t in &terms {
            if t.coeff.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: t.coeff.len() });
            }
            for l in t.word.letters() {
                check_slot(l.slot)?;
                if let Some(m) = &l.map {
                    if m.nrows() != d || m.ncols() != d {
                        return Err(Error::DimensionMismatch { expected: d, got: m.nrows() });
                    }
                }
            }
        }
        for f in &families {
            if f.coeff.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: f.coeff.len() });
            }
            check_slot(f.target)?;
            for (s, _) in &f.base {
                check_slot(*s)?;
            }
        }
        if ideal.ambient_dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: ideal.ambient_dim() });
        }
        let residual = algebra.ideal_residual(&ideal);
        if residual >= CONTAINMENT_TOL {
            return Err(Error::NotAnIdeal { residual });
        }
        let chain = algebra.lower_central_series(&ideal)?;
        let mu = algebra.default_mu();
        Ok(Self { algebra, n, r, a, terms, families, ideal, chain, mu, norm: ProductNorm::Sum })
    }

    pub fn with_norm(mut self, norm: ProductNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn algebra(&self) -> &LieAlgebra {
        &self.algebra
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn d(&self) -> usize {
        self.algebra.dim()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }
    pub fn families(&self) -> &[GeneratedFamily] {
        &self.families
    }
    pub fn ideal(&self) -> &Subspace {
        &self.ideal
    }
    pub fn chain(&self) -> &IdealChain {
        &self.chain
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn norm_kind(&self) -> ProductNorm {
        self.norm
    }

    /// Nilindex of the invariance ideal, when its series terminates.
    pub fn nilindex(&self) -> Option<usize> {
        self.chain.nilindex()
    }

    pub fn tower(&self) -> Result<QuotientTower> {
        QuotientTower::new(&self.algebra, &self.chain)
    }

    pub fn state_norm(&self, x: &DVector<f64>) -> f64 {
        self.norm.norm(x, self.d())
    }

    /// Norm of a quotient state with `n` slots of width `width`.
    pub fn quotient_state_norm(&self, y: &DVector<f64>, width: usize) -> f64 {
        self.norm.norm(y, width)
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.a)
    }

    fn slot_value(&self, slot: Slot, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let d = self.d();
        match slot {
            Slot::State(j) => x.rows(j * d, d).into_owned(),
            Slot::Input(j) => w.rows(j * d, d).into_owned(),
        }
    }

    fn letter_value(&self, l: &Letter, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let v = self.slot_value(l.slot, x, w);
        match &l.map {
            Some(m) => m * v,
            None => v,
        }
    }

    /// Value of a word at `(X, W)`.
    pub fn word_value(&self, word: &Word, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let letters = word.letters();
        let mut acc = self.letter_value(&letters[letters.len() - 1], x, w);
        for l in letters.iter().rev().skip(1) {
            let y = self.letter_value(l, x, w);
            acc = self.algebra.bracket_unchecked(y.as_slice(), acc.as_slice());
        }
        acc
    }

    /// `(e^{ad_b} − Id)(target)` via the matrix exponential of `ad_b`.
    pub fn family_value(&self, fam: &GeneratedFamily, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let d = self.d();
        let mut b = DVector::zeros(d);
        for (s, beta) in &fam.base {
            b += self.slot_value(*s, x, w) * *beta;
        }
        let t = self.slot_value(fam.target, x, w);
        if b.amax() == 0.0 {
            return DVector::zeros(d);
        }
        let e = self.algebra.ad_matrix(&b).exp();
        (e * &t - t) * fam.scale
    }

    fn check_dims(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<()> {
        let d = self.d();
        if x.len() != self.n * d {
            return Err(Error::DimensionMismatch { expected: self.n * d, got: x.len() });
        }
        if w.len() != self.r * d {
            return Err(Error::DimensionMismatch { expected: self.r * d, got: w.len() });
        }
        Ok(())
    }

    /// `f(X, W) = A X + Σ c_ω ⊗ ω + Σ families`.
    pub fn eval(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(x, w)?;
        Ok(self.eval_unchecked(x, w))
    }

    fn eval_unchecked(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.a * x;
        out += self.nonlinear_part(x, w);
        out
    }

    /// `f(X, W) − A X`.
    pub fn nonlinear_part(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let d = self.d();
        let mut out = DVector::zeros(self.n * d);
        for t in &self.terms {
            let v = self.word_value(&t.word, x, w);
            add_tensor(&mut out, &t.coeff, &v);
        }
        for f in &self.families {
            let v = self.family_value(f, x, w);
            add_tensor(&mut out, &f.coeff, &v);
        }
        out
    }

    /// Explicit words of a family: `scale·(1/ℓ!)·ad_b^ℓ(target)` expanded
    /// multilinearly for `ℓ = 1..=L`.
    pub fn expand_family(&self, fam: &GeneratedFamily) -> Result<FamilyExpansion> {
        let exact_len = self.algebra_nilindex();
        let (cutoff, tail) = match fam.cutoff {
            Cutoff::Fixed(l) => (l, self.family_tail(fam, l, 1.0, exact_len)),
            Cutoff::Tolerance { tol, radius } => {
                let mut l = 1;
                loop {
                    let t = self.family_tail(fam, l, radius, exact_len);
                    if t < tol {
                        break (l, t);
                    }
                    if l >= MAX_FAMILY_CUTOFF {
                        let required = self.required_cutoff(fam, tol, radius, exact_len);
                        return Err(Error::CutoffTooSmall { given: MAX_FAMILY_CUTOFF, required });
                    }
                    l += 1;
                }
            }
        };
        let m = fam.base.iter().filter(|(_, b)| *b != 0.0).count();
        let effective = exact_len.map_or(cutoff, |p| cutoff.min(p.saturating_sub(1)));
        let mut count = 0usize;
        for l in 1..=effective {
            count = count.saturating_add(m.saturating_pow(l as u32));
        }
        if count > MAX_FAMILY_WORDS {
            return Err(Error::Input(format!(
                "family {fam} expands into {count} words at cutoff {cutoff}; evaluate it in closed form instead"
            )));
        }
        let base: Vec<(Slot, f64)> = fam.base.iter().copied().filter(|(_, b)| *b != 0.0).collect();
        let mut terms = Vec::new();
        if self.algebra.is_abelian() {
            return Ok(FamilyExpansion { terms, cutoff, tail_bound: 0.0 });
        }
        let mut factorial = 1.0;
        for l in 1..=effective {
            factorial *= l as f64;
            let mut idx = vec![0usize; l];
            loop {
                let slots: Vec<Slot> = idx.iter().map(|&i| base[i].0).collect();
                let innermost_zero = slots[l - 1] == fam.target;
                if !innermost_zero {
                    let prod: f64 = idx.iter().map(|&i| base[i].1).product();
                    let mut letters: Vec<Letter> = slots.iter().map(|&s| Letter::slot(s)).collect();
                    letters.push(Letter::slot(fam.target));
                    let c = &fam.coeff * (fam.scale * prod / factorial);
                    terms.push(Term::new(Word::new(letters)?, c));
                }
                if !odometer(&mut idx, base.len()) {
                    break;
                }
            }
        }
        Ok(FamilyExpansion { terms, cutoff, tail_bound: tail })
    }

    fn algebra_nilindex(&self) -> Option<usize> {
        self.algebra
            .lower_central_series(&self.algebra.whole())
            .ok()
            .and_then(|c| c.nilindex())
    }

    /// `|scale|·‖c‖₁·(μ‖β‖₁r)^L / L! · r · e^{μ‖β‖₁r}`, zero once words
    /// longer than the algebra's nilindex are all that remain.
    fn family_tail(&self, fam: &GeneratedFamily, l: usize, radius: f64, exact_len: Option<usize>) -> f64 {
        if self.algebra.is_abelian() || exact_len.is_some_and(|p| l + 1 >= p) {
            return 0.0;
        }
        let x = self.mu * fam.base_weight() * radius;
        let mut pow_fact = 1.0;
        for k in 1..=l {
            pow_fact *= x / k as f64;
        }
        fam.scale.abs() * fam.coeff.lp_norm(1) * pow_fact * radius * x.exp()
    }

    fn required_cutoff(&self, fam: &GeneratedFamily, tol: f64, radius: f64, exact_len: Option<usize>) -> usize {
        let mut l = 1;
        while self.family_tail(fam, l, radius, exact_len) >= tol && l < 10_000 {
            l += 1;
        }
        l
    }

    /// Explicit terms plus every family expanded.
    pub fn all_terms(&self) -> Result<Vec<Term>> {
        let mut out = self.terms.clone();
        for f in &self.families {
            out.extend(self.expand_family(f)?.terms);
        }
        Ok(out)
    }

    /// Descriptions of words lacking a state letter.
    pub fn input_only_words(&self) -> Vec<String> {
        let mut bad: Vec<String> = self
            .terms
            .iter()
            .filter(|t| t.word.state_letters() == 0)
            .map(|t| t.word.to_string())
            .collect();
        bad.extend(self.families.iter().filter(|f| f.has_input_only_words()).map(|f| f.to_string()));
        bad
    }

    /// Simulate `k_max` steps from `x0`.
    pub fn simulate(&self, x0: &DVector<f64>, signal: &ExoSignal, k_max: usize) -> Result<Trajectory> {
        let d = self.d();
        if x0.len() != self.n * d {
            return Err(Error::DimensionMismatch { expected: self.n * d, got: x0.len() });
        }
        let tower = self.tower().ok();
        let stacked: Vec<QuotientContext> = tower
            .as_ref()
            .map(|t| t.levels().iter().map(|c| c.stacked(self.n)).collect())
            .unwrap_or_default();
        let widths: Vec<usize> = tower
            .as_ref()
            .map(|t| t.levels().iter().map(QuotientContext::quotient_dim).collect())
            .unwrap_or_default();
        let mut traj = Trajectory {
            n: self.n,
            d,
            states: Vec::with_capacity(k_max + 1),
            inputs: Vec::with_capacity(k_max + 1),
            norms: Vec::with_capacity(k_max + 1),
            quotient_norms: Vec::with_capacity(k_max + 1),
            status: SimStatus::Completed,
        };
        let mut x = x0.clone();
        for k in 0..=k_max {
            let w = signal.sample(k, self.r, d)?;
            let norm = self.state_norm(&x);
            let qn: Vec<f64> = stacked
                .iter()
                .zip(&widths)
                .map(|(c, &wd)| self.norm.norm(&c.project(&x), wd))
                .collect();
            let bad = !norm.is_finite() || norm >= DIVERGENCE_NORM;
            traj.states.push(x.clone());
            traj.inputs.push(w.clone());
            traj.norms.push(norm);
            traj.quotient_norms.push(qn);
            if bad {
                traj.status = SimStatus::Diverged { index: k };
                break;
            }
            if k < k_max {
                x = self.eval_unchecked(&x, &w);
            }
        }
        Ok(traj)
    }

    /// Structural and numerical search for nonzero fixed points of
    /// `X ↦ f(X, w)`.
    pub fn check_equilibrium_uniqueness(&self, w: &DVector<f64>, starts: usize, seed: u64) -> Result<EquilibriumReport> {
        let d = self.d();
        let dim = self.n * d;
        self.check_dims(&DVector::zeros(dim), w)?;
        let offending = self.input_only_words();
        let structural_ok = offending.is_empty();
        let i_minus_a = DMatrix::identity(dim, dim) - &self.a;
        let smin = linalg::min_singular_value(&i_minus_a);
        let linear_part_invertible = smin > 1e-7 * self.a.amax().max(1.0);
        let w_in_ideal = {
            let ctx = make_quotient(&self.algebra, &self.ideal)?.stacked(self.r.max(1));
            self.r == 0 || ctx.quotient_norm(w) < CONTAINMENT_TOL * w.norm().max(1.0)
        };
        let certified = structural_ok && linear_part_invertible && w_in_ideal && self.nilindex().is_some();
        let zero_fixed = self.eval_unchecked(&DVector::zeros(dim), w).amax() == 0.0;

        let results: Vec<Option<FixedPointCandidate>> = (0..starts)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64 * 0x9E37_79B9));
                let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
                let x0 = DVector::from_fn(dim, |_, _| scale * rng.gen_range(-1.0..1.0));
                let (x, res) = self.levenberg_marquardt(x0, w);
                let norm = self.state_norm(&x);
                (res < 1e-8 && norm > 1e-4).then_some(FixedPointCandidate { norm, residual: res })
            })
            .collect();
        let candidates: Vec<FixedPointCandidate> = results.into_iter().flatten().collect();
        Ok(EquilibriumReport {
            structural_ok,
            offending_words: offending,
            origin_is_fixed: zero_fixed,
            linear_part_invertible,
            certified_by_structure: certified,
            starts,
            violation: !structural_ok || !candidates.is_empty() || !zero_fixed,
            candidates,
        })
    }

    fn levenberg_marquardt(&self, mut x: DVector<f64>, w: &DVector<f64>) -> (DVector<f64>, f64) {
        let dim = x.len();
        let resid = |x: &DVector<f64>| self.eval_unchecked(x, w) - x;
        let mut f = resid(&x);
        let mut cost = f.norm_squared();
        let mut lambda = 1e-3;
        for _ in 0..80 {
            if cost.sqrt() < 1e-13 {
                break;
            }
            let mut jac = DMatrix::zeros(dim, dim);
            for j in 0..dim {
                let h = 1e-7 * x[j].abs().max(1.0);
                let mut xp = x.clone();
                xp[j] += h;
                let fp = resid(&xp);
                jac.set_column(j, &((fp - &f) / h));
            }
            let jt = jac.transpose();
            let g = &jt * &f;
            let jtj = &jt * &jac;
            let mut improved = false;
            for _ in 0..12 {
                let mut m = jtj.clone();
                for i in 0..dim {
                    m[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
                }
                let Some(step) = m.lu().solve(&(-&g)) else {
                    lambda *= 10.0;
                    continue;
                };
                let xn = &x + &step;
                let fnew = resid(&xn);
                let cn = fnew.norm_squared();
                if cn.is_finite() && cn < cost {
                    x = xn;
                    f = fnew;
                    cost = cn;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        (x, cost.sqrt())
    }

    /// Static invariance `A (h^(i))^n ⊆ (h^(i))^n` at every chain level and
    /// a dynamic check that `f` maps chain-valued states into the chain.
    pub fn check_invariance(&self, samples: usize, seed: u64) -> InvarianceReport {
        let d = self.d();
        let mut levels = Vec::new();
        for sub in &self.chain.ideals {
            let stacked = sub.stacked(self.n);
            let res = if stacked.dim() == 0 {
                0.0
            } else {
                linalg::containment_residual(&(&self.a * stacked.basis()), stacked.basis())
            };
            levels.push(res);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dynamic: f64 = 0.0;
        for sub in &self.chain.ideals {
            if sub.dim() == 0 {
                continue;
            }
            let stacked = sub.stacked(self.n);
            let ctx = QuotientContext::of_subspace(&stacked);
            for _ in 0..samples {
                let coords = DVector::from_fn(stacked.dim(), |_, _| rng.gen_range(-1.0..1.0));
                let x = stacked.basis() * coords;
                let w = DVector::from_fn(self.r * d, |_, _| rng.gen_range(-1.0..1.0));
                let fx = self.eval_unchecked(&x, &w);
                dynamic = dynamic.max(ctx.quotient_norm(&fx));
            }
        }
        let pass = levels.iter().all(|&r| r < CONTAINMENT_TOL) && dynamic < 1e-8;
        InvarianceReport { level_residuals: levels, dynamic_residual: dynamic, pass }
    }

    /// Central-difference Jacobians of `f` at the origin for each step size.
    pub fn jacobian_check(&self, h_steps: &[f64]) -> JacobianReport {
        let d = self.d();
        let nx = self.n * d;
        let nw = self.r * d;
        let zx = DVector::zeros(nx);
        let zw = DVector::zeros(nw);
        let mut errors_x = Vec::new();
        let mut errors_w = Vec::new();
        for &h in h_steps {
            let mut jx = DMatrix::zeros(nx, nx);
            for j in 0..nx {
                let mut xp = zx.clone();
                xp[j] = h;
                let mut xm = zx.clone();
                xm[j] = -h;
                let col = (self.eval_unchecked(&xp, &zw) - self.eval_unchecked(&xm, &zw)) / (2.0 * h);
                jx.set_column(j, &col);
            }
            let mut jw = DMatrix::zeros(nx, nw);
            for j in 0..nw {
                let mut wp = zw.clone();
                wp[j] = h;
                let mut wm = zw.clone();
                wm[j] = -h;
                let col = (self.eval_unchecked(&zx, &wp) - self.eval_unchecked(&zx, &wm)) / (2.0 * h);
                jw.set_column(j, &col);
            }
            errors_x.push((jx - &self.a).amax());
            errors_w.push(if nw == 0 { 0.0 } else { jw.amax() });
        }
        // Axis probes cancel every even term and every term needing two
        // distinct coordinates; mixed directions expose the odd cross terms.
        let directions = probe_directions(nx);
        let errors_directional: Vec<f64> = h_steps
            .iter()
            .map(|&h| {
                directions
                    .iter()
                    .map(|v| {
                        let fd = (self.eval_unchecked(&(v * h), &zw) - self.eval_unchecked(&(v * -h), &zw)) / (2.0 * h);
                        (fd - &self.a * v).amax()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let mut orders = observed_orders(h_steps, &errors_x);
        orders.extend(observed_orders(h_steps, &errors_directional));
        // A measured order of two pins the limit to A; without one, every
        // error must already be negligible.
        let converged_x = !orders.is_empty()
            || (errors_x.last().is_some_and(|&e| e < 1e-6) && errors_directional.last().is_some_and(|&e| e < 1e-6));
        let order_ok = orders.iter().all(|&o| o >= JACOBIAN_MIN_ORDER);
        let w_ok = errors_w.last().is_some_and(|&e| e < 1e-6);
        JacobianReport {
            h_steps: h_steps.to_vec(),
            errors_x,
            errors_directional,
            errors_w,
            exact: orders.is_empty(),
            observed_orders: orders,
            pass: converged_x && order_ok && w_ok,
        }
    }

    /// The system induced on `g / h^(level+1)`.
    pub fn quotient_system(&self, level: usize) -> Result<(ClassASystem, QuotientContext)> {
        let tower = self.tower()?;
        if level > tower.p() {
            return Err(Error::Input(format!("level {level} exceeds nilindex {}", tower.p())));
        }
        let ctx = tower.level(level).clone();
        let qalg = ctx.quotient_algebra(&self.algebra)?;
        let a_bar = ctx.stacked(self.n).induced_map(&self.a)?;
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let letters = t
                .word
                .letters()
                .iter()
                .map(|l| {
                    Ok(Letter {
                        slot: l.slot,
                        map: l.map.as_ref().map(|m| ctx.induced_map(m)).transpose()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            terms.push(Term::new(Word::new(letters)?, t.coeff.clone()));
        }
        let q = ctx.quotient_dim();
        let image: Vec<DVector<f64>> = (0..self.ideal.dim())
            .map(|j| ctx.project(&self.ideal.basis().column(j).into_owned()))
            .collect();
        let ideal = Subspace::span(q, &image);
        let sys = ClassASystem::new(qalg, self.n, self.r, a_bar, terms, self.families.clone(), ideal)?
            .with_norm(self.norm)
            .with_mu(self.mu);
        Ok((sys, ctx))
    }

    /// `max ‖(I⊗P) f(X, W) − f̄((I⊗P)X, (I⊗P)W)‖_max` over random samples.
    pub fn quotient_square_residual(
        &self,
        quotient: &ClassASystem,
        ctx: &QuotientContext,
        samples: usize,
        seed: u64,
    ) -> f64 {
        let d = self.d();
        let px = ctx.stacked(self.n);
        let pw = ctx.stacked(self.r.max(1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = DVector::from_fn(self.n * d, |_, _| rng.gen_range(-1.0..1.0));
            let w = DVector::from_fn(self.r * d, |_, _| rng.gen_range(-1.0..1.0));
            let lhs = px.project(&self.eval_unchecked(&x, &w));
            let wq = if self.r == 0 { DVector::zeros(0) } else { pw.project(&w) };
            let rhs = quotient.eval_unchecked(&px.project(&x), &wq);
            worst = worst.max((lhs - rhs).amax());
        }
        worst
    }

    /// `Σ_ω μ^{|ω|−1} w_ω r^{|ω|}` over explicit terms, plus the closed-form
    /// sum `‖c‖₁|scale| r (e^{μ‖β‖₁ r} − 1)` for each family. Every supported
    /// series is finite or entire, so the majorant is finite for all radii.
    pub fn class_a_majorant(&self, radius: f64) -> f64 {
        if radius <= 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for t in &self.terms {
            let l = t.word.len() as i32;
            total += self.mu.powi(l - 1) * t.weight() * radius.powi(l);
        }
        for f in &self.families {
            let x = self.mu * f.base_weight() * radius;
            total += f.coeff.lp_norm(1) * f.scale.abs() * radius * x.exp_m1();
        }
        total
    }

    /// Sum of word weights grouped by word length, families expanded
    /// through `max_len` in closed form.
    pub fn weights_by_length(&self, max_len: usize) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for t in &self.terms {
            *out.entry(t.word.len()).or_insert(0.0) += t.weight();
        }
        let nil = self.algebra_nilindex();
        for f in &self.families {
            let b = f.base_weight();
            let c = f.coeff.lp_norm(1) * f.scale.abs();
            let mut fact = 1.0;
            for l in 1..max_len {
                fact *= l as f64;
                if nil.is_some_and(|p| l + 1 > p) || self.algebra.is_abelian() {
                    break;
                }
                *out.entry(l + 1).or_insert(0.0) += c * b.powi(l as i32) / fact;
            }
        }
        out
    }
}

/// Smallest admissible observed convergence order of the Jacobian error.
pub const JACOBIAN_MIN_ORDER: f64 = 1.9;

/// Errors below this are rounding-level; no order is inferred from them.
pub const JACOBIAN_ERROR_FLOOR: f64 = 1e-9;

/// Unit directions mixing every coordinate: all ones, alternating signs,
/// and a ramp.
fn probe_directions(len: usize) -> Vec<DVector<f64>> {
    if len == 0 {
        return Vec::new();
    }
    let ones = DVector::from_element(len, 1.0);
    let alternating = DVector::from_fn(len, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    let ramp = DVector::from_fn(len, |i, _| (i + 1) as f64);
    [ones, alternating, ramp].into_iter().map(|v| v.normalize()).collect()
}

fn observed_orders(h: &[f64], err: &[f64]) -> Vec<f64> {
    h.windows(2)
        .zip(err.windows(2))
        .filter(|(_, e)| e[0] > JACOBIAN_ERROR_FLOOR && e[1] > JACOBIAN_ERROR_FLOOR)
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

fn add_tensor(out: &mut DVector<f64>, coeff: &DVector<f64>, v: &DVector<f64>) {
    let d = v.len();
    for (s, c) in coeff.iter().enumerate() {
        if *c != 0.0 {
            let mut blk = out.rows_mut(s * d, d);
            blk.axpy(*c, v, 1.0);
        }
    }
}

/// Advance a base-`m` counter; false on wraparound.
fn odometer(idx: &mut [usize], m: usize) -> bool {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < m {
            return true;
        }
        idx[i] = 0;
    }
    false
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointCandidate {
    pub norm: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumReport {
    /// Every word has a state letter.
    pub structural_ok: bool,
    pub offending_words: Vec<String>,
    pub origin_is_fixed: bool,
    pub linear_part_invertible: bool,
    /// Uniqueness follows from structure: state letters everywhere,
    /// `I − A` invertible, nilpotent chain and an ideal-valued input.
    pub certified_by_structure: bool,
    pub starts: usize,
    pub candidates: Vec<FixedPointCandidate>,
    pub violation: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub level_residuals: Vec<f64>,
    pub dynamic_residual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct JacobianReport {
    pub h_steps: Vec<f64>,
    /// Coordinate-axis error `max |J_fd − A|` per step.
    pub errors_x: Vec<f64>,
    /// Worst error along the mixed probe directions per step.
    pub errors_directional: Vec<f64>,
    pub errors_w: Vec<f64>,
    /// Orders from consecutive steps whose errors sit above the floor.
    pub observed_orders: Vec<f64>,
    /// Every error sits at the floor: central differences are exact.
    pub exact: bool,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SimStatus {
    Completed,
    Diverged { index: usize },
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub n: usize,
    pub d: usize,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub norms: Vec<f64>,
    /// Per step, quotient norms at chain levels `0..=p`.
    pub quotient_norms: Vec<Vec<f64>>,
    pub status: SimStatus,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn diverged(&self) -> Option<usize> {
        match self.status {
            SimStatus::Diverged { index } => Some(index),
            SimStatus::Completed => None,
        }
    }

    /// Euclidean norm of state slot `j` at each step.
    pub fn slot_norms(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|x| x.rows(j * self.d, self.d).norm()).collect()
    }

    /// CSV with a `#`-prefixed column header so gnuplot reads it directly
    /// (`set datafile separator ","`). Values use 17 significant digits.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let levels = self.quotient_norms.first().map_or(0, Vec::len);
        let mut cols = vec!["k".to_string()];
        for s in 0..self.n {
            for l in labels {
                cols.push(format!("X{}.{}", s + 1, l));
            }
        }
        cols.push("norm".into());
        for s in 0..self.n {
            cols.push(format!("norm_X{}", s + 1));
        }
        for i in 0..levels {
            cols.push(format!("qnorm_{i}"));
        }
        let mut out = String::new();
        out.push_str("# liestab trajectory; gnuplot: set datafile separator \",\"\n");
        out.push_str(&format!("# {}\n", cols.join(",")));
        for (k, x) in self.states.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(x.iter().map(|v| fmt17(*v)));
            row.push(fmt17(self.norms[k]));
            for s in 0..self.n {
                row.push(fmt17(x.rows(s * self.d, self.d).norm()));
            }
            row.extend(self.quotient_norms[k].iter().map(|v| fmt17(*v)));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "d": self.d,
            "status": self.status,
            "states": self.states.iter().map(|x| x.iter().copied().map(crate::quotient::sig17).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "norms": self.norms.iter().copied().map(crate::quotient::sig17).collect::<Vec<_>>(),
            "quotient_norms": self.quotient_norms,
        })
    }
}

/// 17 significant digits, round-trip exact.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Scalar profile `amplitude·(offset − k^power·base^{−rate·k})·trig(ω k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub amplitude: f64,
    pub offset: f64,
    pub power: f64,
    pub base: f64,
    pub rate: f64,
    pub omega: f64,
    pub trig: Trig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Sin,
    Cos,
}

impl Profile {
    pub fn value(&self, k: f64) -> f64 {
        let decay = if k == 0.0 && self.power == 0.0 { 1.0 } else { k.powf(self.power) };
        let env = self.offset - decay * self.base.powf(-self.rate * k);
        let t = match self.trig {
            Trig::Sin => (self.omega * k).sin(),
            Trig::Cos => (self.omega * k).cos(),
        };
        self.amplitude * env * t
    }

    /// `|amplitude|·(|offset| + sup_{k≥0} k^power·base^{−rate·k})`, or
    /// `None` when the transient is unbounded.
    pub fn bound(&self) -> Option<f64> {
        let c = self.rate * self.base.ln();
        let peak = if self.power == 0.0 {
            if c >= 0.0 {
                1.0
            } else {
                return None;
            }
        } else if c > 0.0 && self.power > 0.0 {
            let x = self.power / c;
            x.powf(self.power) * (-c * x).exp()
        } else {
            return None;
        };
        Some(self.amplitude.abs() * (self.offset.abs() + peak))
    }
}

/// Exogenous input `W[k] ∈ g^r`.
#[derive(Clone, Debug, PartialEq)]
pub enum ExoSignal {
    Zero,
    /// Explicit samples, repeated with wraparound.
    Samples(Vec<DVector<f64>>),
    /// `W[k] = factor^k W[0]`.
    Geometric { initial: DVector<f64>, factor: f64 },
    /// Slot `j` is `profile_j(k − delay)·direction` for `k ≥ delay`, zero before.
    Modulated { direction: DVector<f64>, profiles: Vec<Profile>, delay: usize },
}

/// `‖W[k]‖ ≤ β s^k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Envelope {
    pub beta: f64,
    pub s: f64,
}

impl ExoSignal {
    pub fn sample(&self, k: usize, r: usize, d: usize) -> Result<DVector<f64>> {
        let len = r * d;
        let out = match self {
            ExoSignal::Zero => DVector::zeros(len),
            ExoSignal::Samples(v) => {
                if v.is_empty() {
                    DVector::zeros(len)
                } else {
                    v[k % v.len()].clone()
                }
            }
            ExoSignal::Geometric { initial, factor } => initial * factor.powi(k as i32),
            ExoSignal::Modulated { direction, profiles, delay } => {
                if profiles.len() != r || direction.len() != d {
                    return Err(Error::DimensionMismatch { expected: r, got: profiles.len() });
                }
                let mut w = DVector::zeros(len);
                if k >= *delay {
                    let kk = (k - delay) as f64;
                    for (j, p) in profiles.iter().enumerate() {
                        w.rows_mut(j * d, d).copy_from(&(direction * p.value(kk)));
                    }
                }
                w
            }
        };
        if out.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: out.len() });
        }
        Ok(out)
    }

    /// The same signal multiplied by `factor` at every instant.
    pub fn scaled(&self, factor: f64) -> ExoSignal {
        match self {
            ExoSignal::Zero => ExoSignal::Zero,
            ExoSignal::Samples(v) => ExoSignal::Samples(v.iter().map(|w| w * factor).collect()),
            ExoSignal::Geometric { initial, factor: f } => ExoSignal::Geometric { initial: initial * factor, factor: *f },
            ExoSignal::Modulated { direction, profiles, delay } => ExoSignal::Modulated {
                direction: direction * factor,
                profiles: profiles.clone(),
                delay: *delay,
            },
        }
    }

    /// Certified `(β, s)` with `s ≥ 1`, when one is available in closed form.
    pub fn envelope(&self, r: usize, d: usize, norm: ProductNorm) -> Option<Envelope> {
        match self {
            ExoSignal::Zero => Some(Envelope { beta: 0.0, s: 1.0 }),
            ExoSignal::Samples(v) => Some(Envelope {
                beta: v.iter().map(|w| norm.norm(w, d)).fold(0.0, f64::max),
                s: 1.0,
            }),
            ExoSignal::Geometric { initial, factor } => Some(Envelope {
                beta: norm.norm(initial, d),
                s: factor.abs().max(1.0),
            }),
            ExoSignal::Modulated { direction, profiles, .. } => {
                let bounds: Option<Vec<f64>> = profiles.iter().map(Profile::bound).collect();
                let bounds = bounds?;
                let dn = direction.norm();
                let beta = match norm {
                    ProductNorm::Sum => bounds.iter().sum::<f64>() * dn,
                    ProductNorm::Euclidean => bounds.iter().map(|b| b * b).sum::<f64>().sqrt() * dn,
                };
                let _ = r;
                Some(Envelope { beta, s: 1.0 })
            }
        }
    }

    /// `max_k ‖W[k]‖ / (β s^k)` over `0..=horizon`; at most 1 when the
    /// envelope holds.
    pub fn envelope_ratio(&self, env: Envelope, r: usize, d: usize, norm: ProductNorm, horizon: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in 0..=horizon {
            let w = norm.norm(&self.sample(k, r, d)?, d);
            if w == 0.0 {
                continue;
            }
            let bound = env.beta * env.s.powi(k as i32);
            worst = worst.max(if bound > 0.0 { w / bound } else { f64::INFINITY });
        }
        Ok(worst)
    }

    /// `max_k ‖(I⊗P₀) W[k]‖` over `0..=horizon`, `P₀` modulo `h`.
    pub fn ideal_residuals(&self, ideal_ctx: &QuotientContext, r: usize, d: usize, horizon: usize) -> Result<Vec<f64>> {
        let ctx = ideal_ctx.stacked(r.max(1));
        (0..=horizon)
            .map(|k| {
                let w = self.sample(k, r, d)?;
                Ok(if r == 0 { 0.0 } else { ctx.quotient_norm(&w) })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::linalg::{kron, mat_of_rows, vec_of};
    use proptest::prelude::*;
    use rand::Rng;

    fn heisenberg_quadratic() -> ClassASystem {
        let g = catalog::heisenberg();
        let a = mat_of_rows(&[vec![0.25, 0.25, 0.0], vec![-0.25, 0.25, 0.0], vec![0.0, 0.0, 0.01]]);
        let w = Word::of_slots(&[Slot::State(0), Slot::Input(0)]).unwrap();
        let whole = g.whole();
        ClassASystem::new(g, 1, 1, a, vec![Term::new(w, vec_of(&[0.5]))], vec![], whole).unwrap()
    }

    #[test]
    fn slot_parsing() {
        assert_eq!(Slot::parse("X2").unwrap(), Slot::State(1));
        assert_eq!(Slot::parse("W1").unwrap(), Slot::Input(0));
        assert!(Slot::parse("X0").is_err());
        assert!(Slot::parse("Y1").is_err());
        assert_eq!(Slot::State(2).to_string(), "X3");
    }

    #[test]
    fn words_need_two_letters() {
        assert!(Word::of_slots(&[Slot::State(0)]).is_err());
        let w = Word::of_slots(&[Slot::State(0), Slot::Input(0), Slot::State(0)]).unwrap();
        assert_eq!(w.to_string(), "[X1,[W1,X1]]");
    }

    #[test]
    fn origin_is_fixed() {
        let sys = heisenberg_quadratic();
        let y = sys.eval(&DVector::zeros(3), &vec_of(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y, DVector::zeros(3));
    }

    #[test]
    fn linear_system_eval() {
        let g = catalog::abelian(2);
        let a = mat_of_rows(&[vec![0.5, 1.0], vec![0.0, 0.2]]);
        let whole = g.whole();
        let sys = ClassASystem::new(g, 1, 0, a.clone(), vec![], vec![], whole).unwrap();
        let x = vec_of(&[1.0, -2.0]);
        assert_eq!(sys.eval(&x, &DVector::zeros(0)).unwrap(), &a * &x);
    }

    #[test]
    fn eval_dimension_errors() {
        let sys = heisenberg_quadratic();
        assert!(sys.eval(&DVector::zeros(2), &DVector::zeros(3)).is_err());
        assert!(sys.eval(&DVector::zeros(3), &DVector::zeros(2)).is_err());
    }

    #[test]
    fn family_single_word() {
        let g = catalog::heisenberg();
        let whole = g.whole();
        let mut fam = GeneratedFamily::new(vec![(Slot::Input(0), 1.0)], Slot::State(0), vec_of(&[1.0]));
        fam.scale = 0.5;
        fam.cutoff = Cutoff::Fixed(1);
        let sys = ClassASystem::new(g, 1, 1, DMatrix::zeros(3, 3), vec![], vec![fam.clone()], whole).unwrap();
        let e = sys.expand_family(&fam).unwrap();
        assert_eq!(e.terms.len(), 1);
        assert_eq!(e.terms[0].word.to_string(), "[W1,X1]");
        assert_eq!(e.terms[0].coeff, vec_of(&[0.5]));
        // Nilindex 2: the single word is the whole series.
        assert_eq!(e.tail_bound, 0.0);
    }

    #[test]
    fn abelian_family_is_empty() {
        let g = catalog::abelian(3);
        let whole = g.whole();
        let fam = GeneratedFamily::new(vec![(Slot::Input(0), 1.0)], Slot::State(0), vec_of(&[1.0]));
        let sys = ClassASystem::new(g, 1, 1, DMatrix::zeros(3, 3), vec![], vec![fam.clone()], whole).unwrap();
        assert!(sys.expand_family(&fam).unwrap().terms.is_empty());
    }

    #[test]
    fn family_expansion_matches_conjugation_on_nilpotent() {
        let g = catalog::upper_triangular();
        let h = g.derived_algebra();
        let fam = GeneratedFamily::new(
            vec![(Slot::State(1), 1.0), (Slot::Input(0), -0.5)],
            Slot::State(0),
            vec_of(&[1.0, 0.0]),
        );
        let sys = ClassASystem::new(g.clone(), 2, 1, DMatrix::zeros(12, 12), vec![], vec![fam.clone()], h.clone()).unwrap();
        // Restrict to h-valued letters so the series is finite.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let hv = |rng: &mut ChaCha8Rng| h.basis() * DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let (x1, x2, w) = (hv(&mut rng), hv(&mut rng), hv(&mut rng));
        let mut x = DVector::zeros(12);
        x.rows_mut(0, 6).copy_from(&x1);
        x.rows_mut(6, 6).copy_from(&x2);
        let direct = sys.family_value(&fam, &x, &w);
        let b = g.to_matrix(&(&x2 - &w * 0.5)).unwrap();
        let conj = b.clone().exp() * g.to_matrix(&x1).unwrap() * (-b).exp();
        let (oracle, _) = g.from_matrix(&conj).unwrap();
        assert!((&direct - (oracle - &x1)).amax() < 1e-12);
        let mut fam_fixed = fam.clone();
        fam_fixed.cutoff = Cutoff::Fixed(6);
        let terms = sys.expand_family(&fam_fixed).unwrap().terms;
        let mut sum = DVector::zeros(6);
        for t in &terms {
            sum += sys.word_value(&t.word, &x, &w) * t.coeff[0];
        }
        assert!((sum - direct).amax() < 1e-12);
    }

    #[test]
    fn cutoff_too_small_reports_requirement() {
        let g = catalog::sl2();
        let whole = g.whole();
        let mut fam = GeneratedFamily::new(vec![(Slot::State(0), 1.0)], Slot::Input(0), vec_of(&[1.0]));
        fam.cutoff = Cutoff::Tolerance { tol: 1e-12, radius: 20.0 };
        let sys = ClassASystem::new(g, 1, 1, DMatrix::zeros(3, 3), vec![], vec![fam.clone()], whole).unwrap();
        match sys.expand_family(&fam) {
            Err(Error::CutoffTooSmall { given, required }) => {
                assert_eq!(given, MAX_FAMILY_CUTOFF);
                assert!(required > MAX_FAMILY_CUTOFF);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn simulate_zero_stays_zero() {
        let sys = heisenberg_quadratic();
        let sig = ExoSignal::Geometric { initial: vec_of(&[1.0, 2.0, 3.0]), factor: 2.0 };
        let t = sys.simulate(&DVector::zeros(3), &sig, 20).unwrap();
        assert!(t.norms.iter().all(|&v| v == 0.0));
        assert_eq!(t.len(), 21);
    }

    #[test]
    fn divergence_detected() {
        let g = catalog::abelian(1);
        let whole = g.whole();
        let sys = ClassASystem::new(g, 1, 0, DMatrix::from_element(1, 1, 1e100), vec![], vec![], whole).unwrap();
        let t = sys.simulate(&vec_of(&[1.0]), &ExoSignal::Zero, 10).unwrap();
        assert_eq!(t.diverged(), Some(2));
    }

    #[test]
    fn input_only_word_rejected_structurally() {
        let g = catalog::heisenberg();
        let whole = g.whole();
        let w = Word::of_slots(&[Slot::Input(0), Slot::Input(1)]).unwrap();
        let sys = ClassASystem::new(g, 1, 2, DMatrix::zeros(3, 3), vec![Term::new(w, vec_of(&[1.0]))], vec![], whole).unwrap();
        let rep = sys.check_equilibrium_uniqueness(&DVector::zeros(6), 4, 1).unwrap();
        assert!(!rep.structural_ok && rep.violation);
        assert_eq!(rep.offending_words, vec!["[W1,W2]".to_string()]);
    }

    #[test]
    fn unit_eigenvalue_gives_fixed_points() {
        let g = catalog::abelian(2);
        let whole = g.whole();
        let a = mat_of_rows(&[vec![1.0, 0.0], vec![0.0, 0.5]]);
        let sys = ClassASystem::new(g, 1, 0, a, vec![], vec![], whole).unwrap();
        let rep = sys.check_equilibrium_uniqueness(&DVector::zeros(0), 20, 3).unwrap();
        assert!(rep.violation && !rep.candidates.is_empty());
        assert!(!rep.linear_part_invertible);
    }

    #[test]
    fn invariance_violation_detected() {
        let g = catalog::heisenberg();
        let whole = g.whole();
        let mut a = DMatrix::identity(3, 3) * 0.5;
        a[(0, 2)] = 0.3;
        let sys = ClassASystem::new(g, 1, 0, a, vec![], vec![], whole).unwrap();
        let rep = sys.check_invariance(10, 1);
        assert!(!rep.pass);
        assert!(rep.level_residuals[1] > 0.29);
    }

    #[test]
    fn linear_jacobian_exact() {
        let g = catalog::abelian(2);
        let whole = g.whole();
        let a = mat_of_rows(&[vec![0.5, 1.0], vec![0.0, 0.2]]);
        let sys = ClassASystem::new(g, 1, 1, a, vec![], vec![], whole).unwrap();
        let rep = sys.jacobian_check(&[1e-2, 1e-3, 1e-4]);
        assert!(rep.pass && rep.exact && rep.errors_x.iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn cubic_cross_term_gives_second_order() {
        // [X1, [X1', X1]] on se(2) is odd and needs two coordinates at once.
        let g = catalog::se2();
        let whole = g.whole();
        let a = DMatrix::identity(3, 3) * 0.5;
        let swap = mat_of_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let x = Letter::slot(Slot::State(0));
        let word = Word::new(vec![x.clone(), Letter::mapped(Slot::State(0), swap), x]).unwrap();
        let terms = vec![Term::new(word, DVector::from_element(1, 1.0))];
        let sys = ClassASystem::new(g, 1, 0, a, terms, vec![], whole).unwrap();
        let rep = sys.jacobian_check(&[1e-1, 5e-2, 2.5e-2, 1.25e-2]);
        assert!(rep.errors_directional[0] > 1e-4, "{:?}", rep.errors_directional);
        assert!(!rep.exact && rep.pass, "{rep:?}");
        assert!(rep.observed_orders.iter().all(|o| (o - 2.0).abs() < 0.1), "{:?}", rep.observed_orders);
    }

    #[test]
    fn majorant_basics() {
        let sys = heisenberg_quadratic();
        assert_eq!(sys.class_a_majorant(0.0), 0.0);
        let m = sys.class_a_majorant(2.0);
        assert!((m - sys.mu() * 0.5 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn modulated_profile_bound() {
        let p = Profile { amplitude: 2.0, offset: 1.0, power: 1.0, base: 1.1, rate: 0.5, omega: 10.0, trig: Trig::Sin };
        let b = p.bound().unwrap();
        for k in 0..2000 {
            assert!(p.value(k as f64).abs() <= b);
        }
        let bad = Profile { rate: -1.0, ..p };
        assert!(bad.bound().is_none());
    }

    #[test]
    fn quotient_system_commutes() {
        let g = catalog::upper_triangular();
        let h = g.derived_algebra();
        let m = mat_of_rows(&[vec![-0.5, 0.5], vec![0.5, 0.25]]);
        let a = kron(&m, &DMatrix::identity(6, 6));
        let fam = GeneratedFamily::new(vec![(Slot::State(1), 1.0)], Slot::State(0), vec_of(&[-1.0, 0.5]));
        let w = Word::of_slots(&[Slot::Input(0), Slot::State(1)]).unwrap();
        let sys = ClassASystem::new(g, 2, 1, a, vec![Term::new(w, vec_of(&[0.3, 0.0]))], vec![fam], h).unwrap();
        for level in 0..=2 {
            let (q, ctx) = sys.quotient_system(level).unwrap();
            assert!(sys.quotient_square_residual(&q, &ctx, 50, 9) < 1e-9, "level {level}");
        }
        let (q0, _) = sys.quotient_system(0).unwrap();
        assert!(q0.algebra().is_abelian());
    }

    proptest! {
        #[test]
        fn eval_is_multilinear_per_term(s in -3.0..3.0f64, xs in prop::collection::vec(-1.0..1.0f64, 3), ws in prop::collection::vec(-1.0..1.0f64, 3)) {
            // Degree-(1,1) term: scaling X by s scales the bracket part by s.
            let sys = heisenberg_quadratic();
            let x = DVector::from_vec(xs);
            let w = DVector::from_vec(ws);
            let base = sys.nonlinear_part(&x, &w);
            let scaled = sys.nonlinear_part(&(&x * s), &w);
            prop_assert!((scaled - base * s).amax() < 1e-12);
        }
    }
}
