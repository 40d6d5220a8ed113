//! Stability certificates: the nilpotent rate ladder with its forcing
//! constants, solvable attractivity preconditions, deadbeat horizons,
//! convergence radii of word series and empirical exponential envelopes.
//!
//! Levels follow the quotient tower: level `i` is the state modulo the
//! `(i+1)`-th term of the ideal's lower central series, so level `p` is the
//! full state and level 0 the state modulo the invariance ideal.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{ClassASystem, ExoSignal, ProductNorm, Trajectory};
use crate::error::{Error, Result};
use crate::linalg;
use crate::quotient::{adapted_norm, make_quotient};

/// Powers of the induced maps examined when estimating growth constants.
pub const GROWTH_HORIZON: usize = 500;

/// Eigenvalue modulus below which a linear part counts as nilpotent.
pub const DEADBEAT_EIG_TOL: f64 = 1e-10;

/// Absolute size below which a deadbeat state counts as zero.
pub const DEADBEAT_ZERO_TOL: f64 = 1e-9;

/// Multiplier applied to sampled envelope constants before verification.
pub const ALPHA_SAFETY: f64 = 1.25;

/// Relative slack of every envelope inequality `‖X[k]‖ ≤ αλ^k‖X[0]‖`.
pub const ENVELOPE_SLACK: f64 = 1e-9;

/// Relative slack of the measured forcing bound.
pub const FORCING_SLACK: f64 = 1e-6;

/// Contraction factor keeping the second radius strictly inside the first.
pub const RADIUS_SHRINK: f64 = 0.99;

// ---------------------------------------------------------------------------
// Nilpotent certificate

/// Constants attached to one level of the quotient tower.
#[derive(Clone, Debug, Serialize)]
pub struct LevelConstants {
    pub level: usize,
    pub quotient_dim: usize,
    /// Spectral radius of the induced linear map.
    pub rho_bar: f64,
    /// Linear rate `ρ(Ā_i) + iε/(p+1)`.
    pub linear_rate: f64,
    /// Ladder rate by recursion.
    pub rate: f64,
    /// Ladder rate in closed form `Λ s^{i(i−1)/2}`.
    pub rate_closed_form: f64,
    /// Growth constant with `‖Ā_i^k‖ ≤ σ Λ_i^k`.
    pub sigma: f64,
    pub sigma_direct: f64,
    pub sigma_peak_index: usize,
    pub sigma_adapted: Option<f64>,
    /// Operator norm of the injection of the previous level.
    pub injection_norm: f64,
    /// Forcing gain; absent at level 1, which is unforced.
    pub gamma: Option<f64>,
    pub alpha: f64,
}

/// End-to-end bound `‖X[k]‖ ≤ α λ^k ‖X[0]‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentialBound {
    pub alpha: f64,
    pub lambda: f64,
}

/// Semiglobal exponential stability certificate for a nilpotent algebra
/// with invariance ideal equal to the whole algebra.
#[derive(Clone, Debug, Serialize)]
pub struct NilpotentCertificate {
    pub issued: bool,
    pub reason: Option<String>,
    pub p: usize,
    pub n: usize,
    pub r: usize,
    pub s: f64,
    pub beta: f64,
    pub rho_a: f64,
    /// `s^{p(1−p)/2}`.
    pub threshold: f64,
    /// `threshold − ρ(A)`; negative on rejection.
    pub margin: f64,
    pub epsilon: f64,
    /// `ρ(A) + ε`.
    pub linear_rate: f64,
    pub mu: f64,
    pub m_bound: f64,
    pub levels: Vec<LevelConstants>,
    pub bound: Option<ExponentialBound>,
    /// Recursion and closed form of the ladder agree.
    pub ladder_consistent: bool,
    /// `ρ(Ā_i) ≤ ρ(A)` at every level.
    pub spectral_containment: bool,
}

impl NilpotentCertificate {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("certificate serializes")
    }

    pub fn level(&self, i: usize) -> Option<&LevelConstants> {
        self.levels.iter().find(|l| l.level == i)
    }
}

/// `s^{p(1−p)/2}`.
pub fn nilpotent_threshold(s: f64, p: usize) -> f64 {
    s.powi(-((p * p.saturating_sub(1) / 2) as i32))
}

/// Ladder rates by recursion `λ₁ = Λ`, `λ_i = λ_{i−1}s^{i−1}`.
pub fn ladder_recursive(linear_rate: f64, s: f64, p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(p);
    let mut cur = linear_rate;
    for i in 1..=p {
        if i > 1 {
            cur *= s.powi(i as i32 - 1);
        }
        out.push(cur);
    }
    out
}

/// Ladder rates in closed form `Λ s^{i(i−1)/2}`.
pub fn ladder_closed_form(linear_rate: f64, s: f64, p: usize) -> Vec<f64> {
    (1..=p).map(|i| linear_rate * s.powi((i * (i - 1) / 2) as i32)).collect()
}

/// Largest coefficient weight among words of each length. Terms sharing a
/// slot pattern are pooled, so the per-pattern count in the forcing sum
/// stays an upper bound.
pub fn max_coefficient_by_length(sys: &ClassASystem) -> Result<BTreeMap<usize, f64>> {
    let mut pooled: BTreeMap<(usize, String), f64> = BTreeMap::new();
    for t in sys.all_terms()? {
        let c = match sys.norm_kind() {
            ProductNorm::Sum => t.coeff.lp_norm(1),
            ProductNorm::Euclidean => t.coeff.norm(),
        };
        let key = (t.word.len(), format!("{:?}", t.word.slots()));
        *pooled.entry(key).or_insert(0.0) += c * t.word.map_weight();
    }
    let mut out = BTreeMap::new();
    for ((len, _), w) in pooled {
        let e = out.entry(len).or_insert(0.0_f64);
        *e = e.max(w);
    }
    Ok(out)
}

/// Inputs to the forcing gain of one level.
#[derive(Clone, Debug)]
pub struct ForcingParams<'a> {
    pub n: usize,
    pub r: usize,
    pub mu: f64,
    /// Injection norm of the previous level.
    pub injection_norm: f64,
    pub max_coeff: &'a BTreeMap<usize, f64>,
    pub alpha_prev: f64,
    pub rate_prev: f64,
    pub beta: f64,
    pub s: f64,
}

/// Forcing gain of one level and the rate maximization behind it.
#[derive(Clone, Debug, Serialize)]
pub struct ForcingGain {
    pub level: usize,
    pub gamma: f64,
    /// `λ_{i−1} s^{i−1}`.
    pub rate: f64,
    /// `max λ_{i−1}^q s^{ℓ−q}` over `2 ≤ ℓ ≤ i`, `1 ≤ q ≤ ℓ`.
    pub rate_max: f64,
    /// First `(ℓ, q)` attaining the maximum.
    pub argmax: (usize, usize),
    /// The maximum is attained at `ℓ = i`, `q = 1`.
    pub argmax_expected: bool,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `γ_i = Σ_{ℓ=2}^{i} c_ℓ μ^{ℓ−1} ‖ι‖^ℓ Σ_{q=1}^{ℓ} C(ℓ,q) n^q r^{ℓ−q} α^q M^{q−1} β^{ℓ−q}`
/// with `c_ℓ` the largest coefficient weight of length `ℓ`. Level 1 has no
/// forcing and yields `None`.
pub fn forcing_gain(params: &ForcingParams<'_>, i: usize, m_bound: f64) -> Option<ForcingGain> {
    if i < 2 {
        return None;
    }
    let (n, r) = (params.n as f64, params.r as f64);
    let mut gamma = 0.0;
    for l in 2..=i {
        let c = params.max_coeff.get(&l).copied().unwrap_or(0.0);
        if c == 0.0 {
            continue;
        }
        let inner: f64 = (1..=l)
            .map(|q| {
                binomial(l, q)
                    * n.powi(q as i32)
                    * r.powi((l - q) as i32)
                    * params.alpha_prev.powi(q as i32)
                    * m_bound.powi(q as i32 - 1)
                    * params.beta.powi((l - q) as i32)
            })
            .sum();
        gamma += c * params.mu.powi(l as i32 - 1) * params.injection_norm.powi(l as i32) * inner;
    }
    let mut rate_max = f64::NEG_INFINITY;
    let mut argmax = (i, 1);
    for l in 2..=i {
        for q in 1..=l {
            let v = params.rate_prev.powi(q as i32) * params.s.powi((l - q) as i32);
            if v > rate_max {
                rate_max = v;
                argmax = (l, q);
            }
        }
    }
    let rate = params.rate_prev * params.s.powi(i as i32 - 1);
    Some(ForcingGain {
        level: i,
        gamma,
        rate,
        rate_max,
        argmax,
        argmax_expected: rate >= rate_max * (1.0 - 1e-12),
    })
}

/// Smallest `σ` with `‖M^k‖ ≤ σ rate^k` for `k ≤ GROWTH_HORIZON`, plus the
/// adapted-norm bound `c κ(T)` valid for all `k`, where `c` converts the
/// Euclidean norm to the product norm.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GrowthConstant {
    pub direct: f64,
    pub peak_index: usize,
    pub adapted: Option<f64>,
    pub value: f64,
}

pub fn growth_constant(m: &DMatrix<f64>, rate: f64, norm: ProductNorm, n: usize) -> Result<GrowthConstant> {
    if !(rate > 0.0) {
        return Err(Error::Input(format!("rate must be positive, got {rate}")));
    }
    let dim = m.nrows();
    if dim == 0 {
        return Ok(GrowthConstant { direct: 0.0, peak_index: 0, adapted: Some(0.0), value: 0.0 });
    }
    let width = dim / n.max(1);
    let step = m / rate;
    let mut pow = DMatrix::<f64>::identity(dim, dim);
    let mut direct = 0.0_f64;
    let mut peak_index = 0;
    for k in 0..=GROWTH_HORIZON {
        let v = norm.operator_norm(&pow, n, width);
        if v > direct {
            direct = v;
            peak_index = k;
        }
        pow = &step * pow;
    }
    let rho = linalg::spectral_radius(m);
    let adapted = if rate > rho {
        adapted_norm(m, rate - rho).ok().filter(|a| a.certified()).map(|a| {
            let conv = match norm {
                ProductNorm::Sum => (n as f64).sqrt(),
                ProductNorm::Euclidean => 1.0,
            };
            conv * a.condition()
        })
    } else {
        None
    };
    // A peak near the end of the window means the maximum has not settled.
    let value = if peak_index * 10 > GROWTH_HORIZON * 9 {
        direct.max(adapted.unwrap_or(direct))
    } else {
        direct
    };
    Ok(GrowthConstant { direct, peak_index, adapted, value })
}

fn require_nilpotent_whole(sys: &ClassASystem) -> Result<usize> {
    if !sys.ideal().same_as(&sys.algebra().whole()) {
        return Err(Error::Hypothesis("the invariance ideal must be the whole algebra".into()));
    }
    sys.nilindex().ok_or_else(|| {
        Error::Hypothesis("the algebra is not nilpotent: its lower central series does not terminate".into())
    })
}

/// Certify semiglobal exponential stability on a nilpotent algebra.
/// `epsilon` defaults to `min((1 − ρ)/2, (threshold − ρ)/2)`, which keeps
/// the top ladder rate below one.
pub fn certify_nilpotent(
    sys: &ClassASystem,
    signal: &ExoSignal,
    m_bound: f64,
    epsilon: Option<f64>,
) -> Result<NilpotentCertificate> {
    let p = require_nilpotent_whole(sys)?;
    let env = signal
        .envelope(sys.r(), sys.d(), sys.norm_kind())
        .ok_or_else(|| Error::Hypothesis("the signal has no certified (β, s) envelope".into()))?;
    if !(m_bound > 0.0) || !m_bound.is_finite() {
        return Err(Error::Input(format!("initial-condition bound must be positive, got {m_bound}")));
    }
    let (s, beta) = (env.s, env.beta);
    let rho = sys.spectral_radius();
    let threshold = nilpotent_threshold(s, p);
    let margin = threshold - rho;
    let mut cert = NilpotentCertificate {
        issued: false,
        reason: None,
        p,
        n: sys.n(),
        r: sys.r(),
        s,
        beta,
        rho_a: rho,
        threshold,
        margin,
        epsilon: f64::NAN,
        linear_rate: f64::NAN,
        mu: sys.mu(),
        m_bound,
        levels: Vec::new(),
        bound: None,
        ladder_consistent: false,
        spectral_containment: false,
    };
    if rho >= threshold {
        cert.reason = Some(format!(
            "spectral radius {rho:.6} is not below the threshold {threshold:.6} (margin {margin:.6})"
        ));
        return Ok(cert);
    }
    let eps = match epsilon {
        None => (0.5 * (1.0 - rho)).min(0.5 * (threshold - rho)),
        Some(e) if e > 0.0 && e < 1.0 - rho => e,
        Some(e) => {
            return Err(Error::Input(format!("epsilon must lie in (0, {}), got {e}", 1.0 - rho)));
        }
    };
    let big = rho + eps;
    cert.epsilon = eps;
    cert.linear_rate = big;

    let tower = sys.tower()?;
    let n = sys.n();
    let max_coeff = max_coefficient_by_length(sys)?;
    let rec = ladder_recursive(big, s, p);
    let closed = ladder_closed_form(big, s, p);
    cert.ladder_consistent = rec.iter().zip(&closed).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0));

    let mut containment = true;
    let mut alpha_prev = 0.0;
    for i in 1..=p {
        let ctx = tower.level(i);
        let a_bar = ctx.stacked(n).induced_map(sys.a())?;
        let rho_bar = linalg::spectral_radius(&a_bar);
        containment &= rho_bar <= rho + 1e-9 * rho.max(1.0);
        let linear_rate = rho_bar + i as f64 / (p + 1) as f64 * eps;
        let growth = growth_constant(&a_bar, linear_rate, sys.norm_kind(), n)?;
        let injection_norm = linalg::op_norm2(tower.level(i - 1).injection());
        let rate = rec[i - 1];
        let (gamma, alpha) = if i == 1 {
            (None, growth.value)
        } else {
            let params = ForcingParams {
                n,
                r: sys.r(),
                mu: sys.mu(),
                injection_norm,
                max_coeff: &max_coeff,
                alpha_prev,
                rate_prev: rec[i - 2],
                beta,
                s,
            };
            let g = forcing_gain(&params, i, m_bound).expect("level ≥ 2 has forcing");
            let gap = rate - linear_rate;
            (Some(g.gamma), growth.value * (1.0 + g.gamma / gap))
        };
        alpha_prev = alpha;
        cert.levels.push(LevelConstants {
            level: i,
            quotient_dim: ctx.quotient_dim(),
            rho_bar,
            linear_rate,
            rate,
            rate_closed_form: closed[i - 1],
            sigma: growth.value,
            sigma_direct: growth.direct,
            sigma_peak_index: growth.peak_index,
            sigma_adapted: growth.adapted,
            injection_norm,
            gamma,
            alpha,
        });
    }
    cert.spectral_containment = containment;
    let top = cert.levels.last().expect("p ≥ 1");
    let ordered = cert.levels.windows(2).all(|w| w[0].linear_rate < w[1].linear_rate) && top.linear_rate < big;
    let gaps_ok = cert.levels.iter().all(|l| l.rate > l.linear_rate);
    if top.rate >= 1.0 {
        cert.reason = Some(format!(
            "top ladder rate {:.6} is not below 1 for epsilon {eps:.6}; the threshold test passed but the ladder does not close",
            top.rate
        ));
    } else if !(ordered && gaps_ok) {
        cert.reason = Some("ladder ordering Λ_1 < … < Λ_p < Λ < λ_i violated".into());
    } else if !top.alpha.is_finite() {
        cert.reason = Some("non-finite growth constant".into());
    } else {
        cert.issued = true;
        cert.bound = Some(ExponentialBound { alpha: top.alpha, lambda: top.rate });
    }
    Ok(cert)
}

/// `‖(I⊗P_i)(f(X[k], W[k]) − A X[k])‖` along a trajectory.
pub fn forcing_norms(sys: &ClassASystem, traj: &Trajectory, level: usize) -> Result<Vec<f64>> {
    let tower = sys.tower()?;
    if level > tower.p() {
        return Err(Error::Input(format!("level {level} exceeds nilindex {}", tower.p())));
    }
    let ctx = tower.level(level);
    let width = ctx.quotient_dim();
    let stacked = ctx.stacked(sys.n());
    Ok(traj
        .states
        .iter()
        .zip(&traj.inputs)
        .map(|(x, w)| sys.quotient_state_norm(&stacked.project(&sys.nonlinear_part(x, w)), width))
        .collect())
}

/// Measured forcing against `γ_i λ_i^k ‖X̄_i[0]‖`.
#[derive(Clone, Debug, Serialize)]
pub struct ForcingCheck {
    pub level: usize,
    pub gamma: f64,
    pub rate: f64,
    pub initial_norm: f64,
    /// `max_k ‖u[k]‖ / (γ λ^k ‖X̄[0]‖)`.
    pub worst_ratio: f64,
    pub steps: usize,
    pub pass: bool,
}

pub fn check_forcing_bound(
    sys: &ClassASystem,
    cert: &NilpotentCertificate,
    traj: &Trajectory,
    level: usize,
) -> Result<ForcingCheck> {
    let lc = cert
        .level(level)
        .ok_or_else(|| Error::Input(format!("certificate has no level {level}")))?;
    let u = forcing_norms(sys, traj, level)?;
    let x0 = traj
        .quotient_norms
        .first()
        .and_then(|q| q.get(level))
        .copied()
        .ok_or_else(|| Error::Input("trajectory carries no quotient norms".into()))?;
    let gamma = lc.gamma.unwrap_or(0.0);
    let mut worst = 0.0_f64;
    let mut pass = true;
    for (k, uk) in u.iter().enumerate() {
        let bound = gamma * lc.rate.powi(k as i32) * x0;
        let ok = if bound > 0.0 {
            worst = worst.max(uk / bound);
            *uk <= bound * (1.0 + FORCING_SLACK)
        } else {
            // Unforced level: the projected nonlinearity must vanish.
            *uk <= 1e-12 * x0.max(1.0)
        };
        if !ok {
            if bound == 0.0 {
                worst = f64::INFINITY;
            }
            pass = false;
        }
    }
    Ok(ForcingCheck { level, gamma, rate: lc.rate, initial_norm: x0, worst_ratio: worst, steps: u.len(), pass })
}

// ---------------------------------------------------------------------------
// Empirical envelopes

/// `‖X[k]‖ ≤ α λ^k ‖X[0]‖` fitted over a bundle of norm sequences.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeFit {
    pub alpha: f64,
    pub lambda: f64,
    /// `λ < 1`.
    pub decaying: bool,
    pub trajectories: usize,
    pub samples: usize,
    pub note: Option<String>,
}

impl EnvelopeFit {
    /// Whether every sample satisfies the envelope with relative slack.
    pub fn holds(&self, bundle: &[Vec<f64>]) -> bool {
        let (la, ll) = (self.alpha.ln(), self.lambda.ln());
        bundle.iter().all(|norms| {
            let x0 = norms[0];
            norms.iter().enumerate().all(|(k, &v)| {
                v == 0.0 || v.ln() - x0.ln() <= la + k as f64 * ll + ENVELOPE_SLACK.ln_1p()
            })
        })
    }
}

fn log_ratios(bundle: &[Vec<f64>]) -> Vec<Vec<f64>> {
    bundle
        .iter()
        .map(|n| n.iter().map(|v| if *v == 0.0 { f64::NEG_INFINITY } else { v.ln() - n[0].ln() }).collect())
        .collect()
}

/// For each trajectory, the envelope of its first half also bounds its
/// second half. Monotone in `λ`.
fn admissible(logs: &[Vec<f64>], lambda: f64) -> bool {
    let ll = lambda.ln();
    logs.iter().all(|lr| {
        if lr.len() < 2 {
            return true;
        }
        let half = (lr.len() - 1) / 2;
        let scaled = |k: usize| lr[k] - k as f64 * ll;
        let head = (0..=half).map(scaled).fold(f64::NEG_INFINITY, f64::max);
        let tail = (half + 1..lr.len()).map(scaled).fold(f64::NEG_INFINITY, f64::max);
        tail <= head + 1e-12
    })
}

/// Smallest `λ` whose envelope stops growing over the bundle, found on a
/// grid of step 1e-3 and refined by bisection; `α` is then the tightest
/// constant at that `λ`. Non-decaying bundles report `λ ≥ 1`.
pub fn fit_envelope(bundle: &[Vec<f64>]) -> Result<EnvelopeFit> {
    if bundle.is_empty() {
        return Err(Error::Input("empty trajectory bundle".into()));
    }
    for (t, n) in bundle.iter().enumerate() {
        match n.first() {
            Some(x0) if *x0 > 0.0 && x0.is_finite() => {}
            _ => return Err(Error::Input(format!("trajectory {t} has zero or missing initial norm"))),
        }
        if n.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Input(format!("trajectory {t} has non-finite norms")));
        }
    }
    let logs = log_ratios(bundle);
    let samples = bundle.iter().map(Vec::len).sum();

    let mut lo = 0.0;
    let mut hi = None;
    for j in 1..=1000 {
        let l = j as f64 * 1e-3;
        if admissible(&logs, l) {
            hi = Some(l);
            break;
        }
        lo = l;
    }
    let mut hi = match hi {
        Some(h) => h,
        None => {
            let mut l = 1.0;
            loop {
                l *= 1.05;
                if admissible(&logs, l) {
                    break l;
                }
                lo = l;
                if l > 1e6 {
                    return Ok(EnvelopeFit {
                        alpha: f64::INFINITY,
                        lambda: f64::INFINITY,
                        decaying: false,
                        trajectories: bundle.len(),
                        samples,
                        note: Some("no finite rate bounds the bundle".into()),
                    });
                }
            }
        }
    };
    while hi - lo > 1e-14 * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if admissible(&logs, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Round up to twelve decimals; admissibility is monotone in λ.
    let rounded = (hi * 1e12).ceil() / 1e12;
    let lambda = if rounded > 0.0 { rounded } else { hi };
    let ll = lambda.ln();
    let log_alpha = logs
        .iter()
        .flat_map(|lr| lr.iter().enumerate().map(move |(k, v)| v - k as f64 * ll))
        .fold(f64::NEG_INFINITY, f64::max);
    let alpha = log_alpha.exp();
    let decaying = lambda < 1.0;
    let note = (!decaying).then(|| format!("non-decaying bundle: fitted rate {lambda:.6} ≥ 1, no certificate"));
    Ok(EnvelopeFit { alpha, lambda, decaying, trajectories: bundle.len(), samples, note })
}

// ---------------------------------------------------------------------------
// Deadbeat

/// Finite-time convergence horizons for a nilpotent linear part.
#[derive(Clone, Debug, Serialize)]
pub struct DeadbeatCertificate {
    pub p: usize,
    pub n: usize,
    pub dim_g: usize,
    /// `dim h^(j)` for `j = 1..=p`.
    pub ideal_dims: Vec<usize>,
    /// Entry `i − 1` is the step from which the state modulo `h^(i)` is
    /// zero, `n(i dim g − Σ_{j≤i} dim h^(j))`, for `i = 1..=p+1`.
    pub level_horizons: Vec<usize>,
    pub horizon: usize,
    pub max_eigen_modulus: f64,
}

impl DeadbeatCertificate {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("certificate serializes")
    }
}

fn require_solvable_structure(sys: &ClassASystem) -> Result<usize> {
    let alg = sys.algebra();
    if !alg.is_solvable().0 {
        return Err(Error::Hypothesis("the algebra is not solvable".into()));
    }
    if !alg.derived_algebra().is_subset_of(sys.ideal()) {
        return Err(Error::Hypothesis("the invariance ideal does not contain [g, g]".into()));
    }
    sys.nilindex()
        .ok_or_else(|| Error::Hypothesis("the invariance ideal is not nilpotent".into()))
}

/// Horizons after which every trajectory with `h`-valued inputs is zero.
pub fn deadbeat_horizon(sys: &ClassASystem) -> Result<DeadbeatCertificate> {
    let p = require_solvable_structure(sys)?;
    let max_mod = linalg::eigenvalues(sys.a()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    // Computed eigenvalues of a nilpotent Jordan block scatter at the
    // eps^(1/m) scale; the exact power test settles those cases.
    if max_mod >= DEADBEAT_EIG_TOL && !linalg::is_nilpotent_matrix(sys.a(), 1e-12) {
        return Err(Error::Hypothesis(format!(
            "the linear part is not nilpotent: largest eigenvalue modulus {max_mod:.3e}"
        )));
    }
    let d = sys.d();
    let n = sys.n();
    let dims = sys.chain().dims();
    let ideal_dims: Vec<usize> = dims.iter().take(p).copied().collect();
    let mut level_horizons = Vec::with_capacity(p + 1);
    let mut acc = 0;
    for i in 1..=p + 1 {
        acc += dims.get(i - 1).copied().unwrap_or(0);
        level_horizons.push(n * (i * d - acc));
    }
    let horizon = *level_horizons.last().expect("p + 1 ≥ 1 levels");
    Ok(DeadbeatCertificate {
        p,
        n,
        dim_g: d,
        ideal_dims,
        level_horizons,
        horizon,
        max_eigen_modulus: max_mod,
    })
}

/// Uniform random point of the ideal, per slot.
fn random_ideal_input(sys: &ClassASystem, rng: &mut ChaCha8Rng, scale: f64) -> DVector<f64> {
    let d = sys.d();
    let basis = sys.ideal().basis();
    let mut w = DVector::zeros(sys.r() * d);
    for j in 0..sys.r() {
        let c = DVector::from_fn(basis.ncols(), |_, _| rng.gen_range(-1.0..1.0));
        w.rows_mut(j * d, d).copy_from(&(basis * c * scale));
    }
    w
}

fn random_state(len: usize, rng: &mut ChaCha8Rng, amplitude: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.gen_range(-amplitude..amplitude))
}

/// Simulation evidence for a deadbeat certificate.
#[derive(Clone, Debug, Serialize)]
pub struct DeadbeatEvidence {
    pub runs: usize,
    pub steps: usize,
    /// `max ‖X[k]‖` over `k ≥ horizon`.
    pub worst_after_horizon: f64,
    /// Per level, `max` quotient norm from its horizon on.
    pub worst_per_level: Vec<f64>,
    pub pass: bool,
}

/// Random initial conditions in `[−amplitude, amplitude]` and random
/// `h`-valued inputs of the same scale; every run is checked for
/// `horizon + extra` steps.
pub fn verify_deadbeat(
    sys: &ClassASystem,
    cert: &DeadbeatCertificate,
    runs: usize,
    amplitude: f64,
    extra: usize,
    seed: u64,
) -> Result<DeadbeatEvidence> {
    let steps = cert.horizon + extra;
    let nd = sys.n() * sys.d();
    let results: Vec<Result<(f64, Vec<f64>)>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64));
            let x0 = random_state(nd, &mut rng, amplitude);
            let inputs: Vec<DVector<f64>> =
                (0..=steps).map(|_| random_ideal_input(sys, &mut rng, amplitude)).collect();
            let traj = sys.simulate(&x0, &ExoSignal::Samples(inputs), steps)?;
            let after = traj.norms[cert.horizon..].iter().copied().fold(0.0, f64::max);
            let per_level = cert
                .level_horizons
                .iter()
                .enumerate()
                .map(|(lvl, &h)| traj.quotient_norms[h.min(steps)..].iter().map(|q| q[lvl]).fold(0.0, f64::max))
                .collect();
            Ok((after, per_level))
        })
        .collect();
    let mut worst_after = 0.0_f64;
    let mut worst_per_level = vec![0.0_f64; cert.level_horizons.len()];
    for r in results {
        let (after, levels) = r?;
        worst_after = worst_after.max(after);
        for (w, v) in worst_per_level.iter_mut().zip(levels) {
            *w = w.max(v);
        }
    }
    let pass = worst_after < DEADBEAT_ZERO_TOL && worst_per_level.iter().all(|v| *v < DEADBEAT_ZERO_TOL);
    Ok(DeadbeatEvidence { runs, steps, worst_after_horizon: worst_after, worst_per_level, pass })
}

/// Sampling plan for [`semiglobal_from_deadbeat`].
#[derive(Clone, Copy, Debug)]
pub struct SemiglobalOptions {
    pub directions: usize,
    pub verify_runs: usize,
    pub extra_steps: usize,
    pub seed: u64,
}

impl Default for SemiglobalOptions {
    fn default() -> Self {
        Self { directions: 64, verify_runs: 100, extra_steps: 5, seed: 0 }
    }
}

/// Envelope derived from a deadbeat certificate and its verification.
#[derive(Clone, Debug, Serialize)]
pub struct SemiglobalEnvelope {
    pub fit: EnvelopeFit,
    pub m_bound: f64,
    pub beta: f64,
    pub fitted_runs: usize,
    pub verify_runs: usize,
    /// `max ‖X[k]‖ / (α λ^k ‖X[0]‖)` over the fresh runs.
    pub worst_verify_ratio: f64,
    pub verified: bool,
}

/// Radii on a fixed geometric grid `2^{j/4}`, so the sampled sets are
/// nested as `M` grows.
fn radius_grid(m_bound: f64) -> Vec<f64> {
    (-12..)
        .map(|j: i32| 2f64.powf(j as f64 / 4.0))
        .take_while(|r| *r <= m_bound)
        .collect()
}

fn scaled_direction(len: usize, rng: &mut ChaCha8Rng, sys: &ClassASystem) -> DVector<f64> {
    loop {
        let v = random_state(len, rng, 1.0);
        let nv = sys.state_norm(&v);
        if nv > 1e-3 {
            return v / nv;
        }
    }
}

fn ideal_signal(sys: &ClassASystem, rng: &mut ChaCha8Rng, beta: f64, steps: usize) -> ExoSignal {
    let d = sys.d();
    let inputs = (0..=steps)
        .map(|_| {
            let w = random_ideal_input(sys, rng, 1.0);
            let nw = sys.quotient_state_norm(&w, d);
            if nw > 0.0 {
                w * (beta * rng.gen_range(0.0..1.0) / nw)
            } else {
                w
            }
        })
        .collect();
    ExoSignal::Samples(inputs)
}

/// For a deadbeat system, `α = ALPHA_SAFETY · max ‖X[k]‖/(λ^k‖X[0]‖)` over
/// `k < horizon`, sampled on `‖X[0]‖ ≤ M` with `h`-valued inputs bounded by
/// `β`, then checked on fresh random runs.
pub fn semiglobal_from_deadbeat(
    sys: &ClassASystem,
    cert: &DeadbeatCertificate,
    beta: f64,
    m_bound: f64,
    lambda: f64,
    opts: SemiglobalOptions,
) -> Result<SemiglobalEnvelope> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Input(format!("rate must lie in (0, 1), got {lambda}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::Input(format!("input bound must be nonnegative, got {beta}")));
    }
    let nd = sys.n() * sys.d();
    let steps = cert.horizon + opts.extra_steps;
    let grid = radius_grid(m_bound);
    if m_bound <= 0.0 || grid.is_empty() {
        return Ok(SemiglobalEnvelope {
            fit: EnvelopeFit {
                alpha: 1.0,
                lambda,
                decaying: true,
                trajectories: 0,
                samples: 0,
                note: Some("no nonzero initial condition in range; α = 1 holds vacuously".into()),
            },
            m_bound,
            beta,
            fitted_runs: 0,
            verify_runs: 0,
            worst_verify_ratio: 0.0,
            verified: true,
        });
    }
    let ll = lambda.ln();
    let per_dir: Vec<Result<f64>> = (0..opts.directions)
        .into_par_iter()
        .map(|dir| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9E37_79B9).wrapping_add(dir as u64));
            let u = scaled_direction(nd, &mut rng, sys);
            let signal = ideal_signal(sys, &mut rng, beta, steps);
            let mut worst = f64::NEG_INFINITY;
            for &radius in &grid {
                let traj = sys.simulate(&(&u * radius), &signal, cert.horizon)?;
                let x0 = traj.norms[0];
                for (k, v) in traj.norms.iter().enumerate().take(cert.horizon) {
                    if *v > 0.0 {
                        worst = worst.max(v.ln() - x0.ln() - k as f64 * ll);
                    }
                }
            }
            Ok(worst)
        })
        .collect();
    let mut log_alpha = f64::NEG_INFINITY;
    for r in per_dir {
        log_alpha = log_alpha.max(r?);
    }
    let alpha = if log_alpha.is_finite() { ALPHA_SAFETY * log_alpha.exp() } else { 1.0 };

    let fresh: Vec<Result<f64>> = (0..opts.verify_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(!opts.seed.wrapping_add(run as u64 * 7919));
            let u = scaled_direction(nd, &mut rng, sys);
            let radius = m_bound * rng.gen_range(1e-3..=1.0);
            let signal = ideal_signal(sys, &mut rng, beta, steps);
            let traj = sys.simulate(&(&u * radius), &signal, steps)?;
            let x0 = traj.norms[0];
            Ok(traj
                .norms
                .iter()
                .enumerate()
                .map(|(k, v)| v / (alpha * lambda.powi(k as i32) * x0))
                .fold(0.0, f64::max))
        })
        .collect();
    let mut worst_verify = 0.0_f64;
    for r in fresh {
        worst_verify = worst_verify.max(r?);
    }
    Ok(SemiglobalEnvelope {
        fit: EnvelopeFit {
            alpha,
            lambda,
            decaying: true,
            trajectories: opts.directions * grid.len(),
            samples: opts.directions * grid.len() * (cert.horizon + 1),
            note: None,
        },
        m_bound,
        beta,
        fitted_runs: opts.directions * grid.len(),
        verify_runs: opts.verify_runs,
        worst_verify_ratio: worst_verify,
        verified: worst_verify <= 1.0 + ENVELOPE_SLACK,
    })
}

// ---------------------------------------------------------------------------
// Convergence radius

/// How per-length coefficient weights continue beyond the stored lengths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    /// Finitely many nonzero lengths: the root-test limit is zero.
    Finite,
    /// Factorially decaying weights, as for exponential families.
    Entire,
    /// Only the stored lengths are known; the limit is estimated from them.
    Sampled,
}

/// Radius below which the series of projected words converges.
#[derive(Clone, Debug, Serialize)]
pub struct RadiusEstimate {
    pub kind: SeriesKind,
    /// Estimate of `limsup_ℓ (Σ_{|ω|=ℓ} ‖c_ω‖)^{1/ℓ}`.
    pub root_limit: f64,
    pub mu: f64,
    pub injection_norm: f64,
    /// `min(1, 1/(μ R))`.
    pub rho1: f64,
    /// `RADIUS_SHRINK · ρ₁ / ‖ι₀‖`.
    pub rho2: f64,
    /// `min(ρ₂², ρ₂)`.
    pub radius: f64,
    pub lengths: usize,
    pub warning: Option<String>,
}

/// Root-test radius chain from per-length weight sums.
pub fn radius_from_weights(
    weights: &BTreeMap<usize, f64>,
    kind: SeriesKind,
    mu: f64,
    injection_norm: f64,
) -> RadiusEstimate {
    let nonzero: Vec<(usize, f64)> = weights.iter().filter(|(_, w)| **w > 0.0).map(|(l, w)| (*l, *w)).collect();
    let mut warning = None;
    let root_limit = match kind {
        SeriesKind::Finite | SeriesKind::Entire => 0.0,
        SeriesKind::Sampled => {
            let root = |&(l, w): &(usize, f64)| w.powf(1.0 / l as f64);
            if nonzero.len() < 3 {
                warning = Some(format!(
                    "only {} distinct lengths; using the maximum root over all of them",
                    nonzero.len()
                ));
                nonzero.iter().map(root).fold(0.0, f64::max)
            } else {
                let start = nonzero.len() / 2;
                nonzero[start..].iter().map(root).fold(0.0, f64::max)
            }
        }
    };
    let rho1 = if mu * root_limit <= 1.0 { 1.0 } else { 1.0 / (mu * root_limit) };
    let rho2 = if injection_norm > 0.0 {
        RADIUS_SHRINK * rho1 / injection_norm
    } else {
        if warning.is_none() {
            warning = Some("the quotient by the invariance ideal is trivial; no injection constraint".into());
        }
        RADIUS_SHRINK * rho1
    };
    RadiusEstimate {
        kind,
        root_limit,
        mu,
        injection_norm,
        rho1,
        rho2,
        radius: (rho2 * rho2).min(rho2),
        lengths: nonzero.len(),
        warning,
    }
}

/// Radius for a system's own series: explicit terms are finite, families
/// truncate on nilpotent algebras and are entire otherwise.
pub fn radius_estimate(sys: &ClassASystem) -> Result<RadiusEstimate> {
    let weights = sys.weights_by_length(crate::dynamics::MAX_FAMILY_CUTOFF);
    let nilpotent = sys.algebra().lower_central_series(&sys.algebra().whole())?.nilindex().is_some();
    let kind = if sys.families().is_empty() || nilpotent || sys.algebra().is_abelian() {
        SeriesKind::Finite
    } else {
        SeriesKind::Entire
    };
    let ctx = make_quotient(sys.algebra(), sys.ideal())?;
    let iota = linalg::op_norm2(ctx.injection());
    Ok(radius_from_weights(&weights, kind, sys.mu(), iota))
}

// ---------------------------------------------------------------------------
// Solvable certificate

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolvableVerdict {
    /// Preconditions hold; attractivity needs the input to be small enough,
    /// which is only probed empirically.
    Conditional,
    Rejected,
}

#[derive(Clone, Copy, Debug)]
pub struct SolvableOptions {
    pub horizon: usize,
    pub runs: usize,
    pub amplitude: f64,
    pub seed: u64,
    pub probe: bool,
}

impl Default for SolvableOptions {
    fn default() -> Self {
        Self { horizon: 200, runs: 8, amplitude: 1.0, seed: 0, probe: true }
    }
}

/// Empirical search for the largest input scale that still converges.
#[derive(Clone, Debug, Serialize)]
pub struct BasinProbe {
    pub label: String,
    pub largest_converging_scale: f64,
    pub smallest_failing_scale: Option<f64>,
    pub evaluations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationEvidence {
    pub runs: usize,
    pub horizon: usize,
    pub max_initial_norm: f64,
    pub max_final_norm: f64,
    pub diverged: bool,
    pub converged: bool,
    pub fit: Option<EnvelopeFit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolvableReport {
    pub verdict: SolvableVerdict,
    pub reason: Option<String>,
    pub rho_a: f64,
    /// `1 − ρ(A)`.
    pub margin: f64,
    pub p: usize,
    pub ideal_dim: usize,
    /// `max ‖(I⊗P₀)W[k]‖` over the last tenth of the horizon.
    pub ideal_residual_tail: f64,
    pub ideal_converging: bool,
    /// `max ‖W[k]‖` over the last tenth of the horizon.
    pub signal_tail_norm: f64,
    pub beta_caveat: String,
    pub warnings: Vec<String>,
    pub radius: RadiusEstimate,
    pub basin: Option<BasinProbe>,
    pub evidence: Option<SimulationEvidence>,
}

impl SolvableReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// Convergence to below `1e-6 · max(1, ‖X[0]‖)` without divergence.
fn converged(traj: &Trajectory) -> bool {
    traj.diverged().is_none() && *traj.norms.last().expect("nonempty") <= 1e-6 * traj.norms[0].max(1.0)
}

fn run_bundle(sys: &ClassASystem, starts: &[DVector<f64>], signal: &ExoSignal, horizon: usize) -> Result<Vec<Trajectory>> {
    starts.par_iter().map(|x0| sys.simulate(x0, signal, horizon)).collect()
}

/// Preconditions of global attractivity on a solvable algebra, with
/// simulation evidence and an empirical probe of the admissible input size.
pub fn certify_solvable(sys: &ClassASystem, signal: &ExoSignal, opts: SolvableOptions) -> Result<SolvableReport> {
    let p = require_solvable_structure(sys)?;
    let (r, d) = (sys.r(), sys.d());
    let rho = sys.spectral_radius();
    let mut warnings = Vec::new();
    let tower = sys.tower()?;
    let residuals = signal.ideal_residuals(tower.level(0), r, d, opts.horizon)?;
    let tail_start = opts.horizon - opts.horizon / 10;
    let head_max = residuals.iter().copied().fold(0.0, f64::max);
    let tail = residuals[tail_start..].iter().copied().fold(0.0, f64::max);
    let ideal_converging = tail <= 1e-6 * head_max.max(1.0);
    if !ideal_converging {
        warnings.push(format!(
            "the input does not approach the invariance ideal: tail residual {tail:.3e} over the last {} steps",
            opts.horizon - tail_start + 1
        ));
    }
    let mut signal_tail: f64 = 0.0;
    for k in tail_start..=opts.horizon {
        signal_tail = signal_tail.max(sys.quotient_state_norm(&signal.sample(k, r, d)?, d));
    }
    let radius = radius_estimate(sys)?;
    let beta_caveat = "attractivity holds once the input is ultimately below an unspecified bound; \
                       the basin probe below is empirical, not a proof"
        .to_string();
    let mut report = SolvableReport {
        verdict: SolvableVerdict::Rejected,
        reason: None,
        rho_a: rho,
        margin: 1.0 - rho,
        p,
        ideal_dim: sys.ideal().dim(),
        ideal_residual_tail: tail,
        ideal_converging,
        signal_tail_norm: signal_tail,
        beta_caveat,
        warnings,
        radius,
        basin: None,
        evidence: None,
    };
    if rho >= 1.0 {
        report.reason = Some(format!("the linear part is not Schur: spectral radius {rho:.6} ≥ 1"));
        return Ok(report);
    }

    let nd = sys.n() * d;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<DVector<f64>> = (0..opts.runs.max(1)).map(|_| random_state(nd, &mut rng, opts.amplitude)).collect();
    let trajs = run_bundle(sys, &starts, signal, opts.horizon)?;
    let diverged = trajs.iter().any(|t| t.diverged().is_some());
    let all_converged = trajs.iter().all(converged);
    let fit = if diverged { None } else { fit_envelope(&trajs.iter().map(|t| t.norms.clone()).collect::<Vec<_>>()).ok() };
    report.evidence = Some(SimulationEvidence {
        runs: trajs.len(),
        horizon: opts.horizon,
        max_initial_norm: trajs.iter().map(|t| t.norms[0]).fold(0.0, f64::max),
        max_final_norm: trajs.iter().map(|t| *t.norms.last().expect("nonempty")).fold(0.0, f64::max),
        diverged,
        converged: all_converged,
        fit,
    });
    if !all_converged {
        report.warnings.push("simulated trajectories did not converge over the horizon".into());
    }

    if opts.probe {
        let probe_starts = &starts[..starts.len().min(3)];
        let mut evaluations = 0;
        let mut converges = |scale: f64| -> Result<bool> {
            evaluations += 1;
            let trajs = run_bundle(sys, probe_starts, &signal.scaled(scale), opts.horizon)?;
            Ok(trajs.iter().all(converged))
        };
        let (mut good, mut bad) = if converges(1.0)? {
            let mut good = 1.0;
            let mut bad = None;
            while good < 1024.0 {
                if converges(good * 2.0)? {
                    good *= 2.0;
                } else {
                    bad = Some(good * 2.0);
                    break;
                }
            }
            (good, bad)
        } else {
            (0.0, Some(1.0))
        };
        if let Some(mut b) = bad {
            for _ in 0..12 {
                let mid = 0.5 * (good + b);
                if converges(mid)? {
                    good = mid;
                } else {
                    b = mid;
                }
            }
            bad = Some(b);
        }
        report.basin = Some(BasinProbe {
            label: "empirical".into(),
            largest_converging_scale: good,
            smallest_failing_scale: bad,
            evaluations,
        });
    }
    report.verdict = SolvableVerdict::Conditional;
    Ok(report)
}
