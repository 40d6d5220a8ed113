//! Scenario files and the built-in systems.
//!
//! A scenario names an algebra, the linear part, the word terms and
//! generated families, the invariance ideal, the exogenous signal and run
//! parameters. Built-ins are stored in the same file form, so every one of
//! them can be exported, edited and loaded back.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraFile, LieAlgebra, Subspace};
use crate::catalog;
use crate::dynamics::{ClassASystem, Cutoff, ExoSignal, GeneratedFamily, Letter, Profile, ProductNorm, Slot, Term, Trig, Word};
use crate::error::{Error, Result};
use crate::linalg;

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = ["example-4.1", "example-6.1", "heisenberg-deadbeat", "upper-triangular-deadbeat"];

/// Default number of simulated steps.
pub const DEFAULT_HORIZON: usize = 50;

/// Catalog name, algebra file path, or inline definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlgebraInput {
    Reference(String),
    Inline(AlgebraFile),
}

/// Row list or flat row-major entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

/// A bare slot such as `"X1"`, or a slot seen through a linear map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LetterInput {
    Slot(String),
    Mapped { slot: String, map: MatrixInput },
}

/// Right-nested word `[L1,[L2,…]]` with one coefficient per state slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermInput {
    pub letters: Vec<LetterInput>,
    pub coeff: Vec<f64>,
}

/// `coeff ⊗ scale·(e^{ad_b} − I)(target)` with `b = Σ weight·slot`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyInput {
    pub base: Vec<(String, f64)>,
    pub target: String,
    pub coeff: Vec<f64>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
    /// Fixed expansion length; the tolerance rule applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// `"whole"`, `"derived"`, a span of coordinate vectors, or a span of
/// basis labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IdealInput {
    Named(String),
    Span { span: Vec<Vec<f64>> },
    Labels { labels: Vec<String> },
}

impl Default for IdealInput {
    fn default() -> Self {
        IdealInput::Named("whole".into())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalInput {
    #[default]
    Zero,
    /// Samples repeated with wraparound.
    Samples { values: Vec<Vec<f64>> },
    Geometric { initial: Vec<f64>, factor: f64 },
    /// Slot `j` is `profiles[j](k − delay)·direction` from `delay` on.
    Modulated {
        direction: Vec<f64>,
        profiles: Vec<Profile>,
        #[serde(default)]
        delay: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub algebra: AlgebraInput,
    pub n: usize,
    #[serde(default)]
    pub r: usize,
    pub a: MatrixInput,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermInput>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub families: Vec<FamilyInput>,
    #[serde(default)]
    pub ideal: IdealInput,
    #[serde(default)]
    pub signal: SignalInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Initial-condition bound used by certificates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub norm: ProductNorm,
    /// Bracket-norm constant override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

/// A loaded, validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub system: ClassASystem,
    pub signal: ExoSignal,
    pub initial: Option<DVector<f64>>,
    pub horizon: usize,
    pub m_bound: Option<f64>,
    pub epsilon: Option<f64>,
}

impl Scenario {
    /// The scenario's initial state, or zero.
    pub fn initial_state(&self) -> DVector<f64> {
        self.initial
            .clone()
            .unwrap_or_else(|| DVector::zeros(self.system.n() * self.system.d()))
    }

    /// Initial-condition bound: the stated one, else the initial norm
    /// (at least 1).
    pub fn m_bound(&self) -> f64 {
        self.m_bound
            .unwrap_or_else(|| self.system.state_norm(&self.initial_state()).max(1.0))
    }
}

fn field<T>(path: impl AsRef<str>, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.as_ref())),
        other => Error::Input(format!("{}: {other}", path.as_ref())),
    })
}

fn matrix_of(path: &str, entry: &MatrixInput, size: usize) -> Result<DMatrix<f64>> {
    match entry {
        MatrixInput::Rows(rows) => {
            if rows.len() != size || rows.iter().any(|r| r.len() != size) {
                return Err(Error::Input(format!("{path}: expected a {size}×{size} matrix")));
            }
            Ok(linalg::mat_of_rows(rows))
        }
        MatrixInput::Flat(v) => {
            if v.len() != size * size {
                return Err(Error::Input(format!("{path}: expected {} entries, got {}", size * size, v.len())));
            }
            Ok(DMatrix::from_row_slice(size, size, v))
        }
    }
}

fn vector_of(path: &str, v: &[f64], len: usize) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::Input(format!("{path}: expected {len} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input(format!("{path}: entries must be finite")));
    }
    Ok(DVector::from_column_slice(v))
}

impl ScenarioFile {
    /// Parse JSON, reporting the field path and line/column of any error.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Input(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn algebra(&self, base_dir: Option<&Path>) -> Result<LieAlgebra> {
        match &self.algebra {
            AlgebraInput::Inline(file) => field("algebra", file.build()),
            AlgebraInput::Reference(name) => {
                if let Some(alg) = catalog::by_name(name) {
                    return Ok(alg);
                }
                if name.ends_with(".json") {
                    let path = base_dir.map_or_else(|| Path::new(name).to_path_buf(), |d| d.join(name));
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Error::Input(format!("algebra: cannot read {}: {e}", path.display())))?;
                    return field("algebra", AlgebraFile::from_json_str(&text)?.build());
                }
                Err(Error::Input(format!("algebra: unknown catalog algebra {name:?}")))
            }
        }
    }

    fn ideal(&self, alg: &LieAlgebra) -> Result<Subspace> {
        let d = alg.dim();
        match &self.ideal {
            IdealInput::Named(s) if s == "whole" => Ok(alg.whole()),
            IdealInput::Named(s) if s == "derived" => Ok(alg.derived_algebra()),
            IdealInput::Named(s) => Err(Error::Input(format!("ideal: expected \"whole\" or \"derived\", got {s:?}"))),
            IdealInput::Span { span } => {
                let vs = span
                    .iter()
                    .enumerate()
                    .map(|(i, v)| vector_of(&format!("ideal.span[{i}]"), v, d))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Subspace::span(d, &vs))
            }
            IdealInput::Labels { labels } => {
                let axes = labels
                    .iter()
                    .map(|l| {
                        alg.label_index(l)
                            .ok_or_else(|| Error::Input(format!("ideal.labels: unknown label {l:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Subspace::coordinate(d, &axes))
            }
        }
    }

    fn signal(&self, d: usize) -> Result<ExoSignal> {
        let len = self.r * d;
        Ok(match &self.signal {
            SignalInput::Zero => ExoSignal::Zero,
            SignalInput::Samples { values } => ExoSignal::Samples(
                values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| vector_of(&format!("signal.values[{i}]"), v, len))
                    .collect::<Result<_>>()?,
            ),
            SignalInput::Geometric { initial, factor } => ExoSignal::Geometric {
                initial: vector_of("signal.initial", initial, len)?,
                factor: *factor,
            },
            SignalInput::Modulated { direction, profiles, delay } => {
                if profiles.len() != self.r {
                    return Err(Error::Input(format!(
                        "signal.profiles: expected {} profiles (one per input slot), got {}",
                        self.r,
                        profiles.len()
                    )));
                }
                ExoSignal::Modulated {
                    direction: vector_of("signal.direction", direction, d)?,
                    profiles: profiles.clone(),
                    delay: *delay,
                }
            }
        })
    }

    /// Validate and build. Relative algebra paths resolve against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<Scenario> {
        let alg = self.algebra(base_dir)?;
        let d = alg.dim();
        if self.n == 0 {
            return Err(Error::Input("n: must be positive".into()));
        }
        let nd = self.n * d;
        let a = matrix_of("a", &self.a, nd)?;
        let mut terms = Vec::with_capacity(self.terms.len());
        for (t, entry) in self.terms.iter().enumerate() {
            let mut letters = Vec::with_capacity(entry.letters.len());
            for (l, ls) in entry.letters.iter().enumerate() {
                let path = format!("terms[{t}].letters[{l}]");
                letters.push(match ls {
                    LetterInput::Slot(s) => Letter::slot(field(&path, Slot::parse(s))?),
                    LetterInput::Mapped { slot, map } => Letter::mapped(
                        field(&path, Slot::parse(slot))?,
                        matrix_of(&format!("{path}.map"), map, d)?,
                    ),
                });
            }
            let word = field(format!("terms[{t}].letters"), Word::new(letters))?;
            let coeff = vector_of(&format!("terms[{t}].coeff"), &entry.coeff, self.n)?;
            terms.push(Term::new(word, coeff));
        }
        let mut families = Vec::with_capacity(self.families.len());
        for (f, entry) in self.families.iter().enumerate() {
            let base = entry
                .base
                .iter()
                .enumerate()
                .map(|(b, (s, w))| Ok((field(format!("families[{f}].base[{b}]"), Slot::parse(s))?, *w)))
                .collect::<Result<Vec<_>>>()?;
            let target = field(format!("families[{f}].target"), Slot::parse(&entry.target))?;
            let coeff = vector_of(&format!("families[{f}].coeff"), &entry.coeff, self.n)?;
            let mut fam = GeneratedFamily::new(base, target, coeff);
            fam.scale = entry.scale;
            if let Some(c) = entry.cutoff {
                fam.cutoff = Cutoff::Fixed(c);
            }
            families.push(fam);
        }
        let ideal = self.ideal(&alg)?;
        let signal = self.signal(d)?;
        let initial = self
            .initial
            .as_ref()
            .map(|v| vector_of("initial", v, nd))
            .transpose()?;
        if let Some(m) = self.m_bound {
            if !(m > 0.0) {
                return Err(Error::Input(format!("m_bound: must be positive, got {m}")));
            }
        }
        let mut system = ClassASystem::new(alg, self.n, self.r, a, terms, families, ideal)?.with_norm(self.norm);
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(Error::Input(format!("mu: must be positive, got {mu}")));
            }
            system = system.with_mu(mu);
        }
        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            system,
            signal,
            initial,
            horizon: self.horizon.unwrap_or(DEFAULT_HORIZON),
            m_bound: self.m_bound,
            epsilon: self.epsilon,
        })
    }

    /// Read, parse and build a scenario file.
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)?.build(path.parent())
    }
}

fn rows(m: &DMatrix<f64>) -> MatrixInput {
    MatrixInput::Rows(linalg::rows_of(m))
}

fn shift(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j + 1 { 1.0 } else { 0.0 })
}

fn slot(s: &str) -> LetterInput {
    LetterInput::Slot(s.into())
}

/// Bounded oscillation `sin(0.7k)` used to drive the deadbeat built-ins.
fn oscillation() -> Profile {
    Profile { amplitude: 1.0, offset: 2.0, power: 0.0, base: 1.0, rate: 0.0, omega: 0.7, trig: Trig::Sin }
}

/// Heisenberg tracking error `e⁺ = A e + ½[K e, e] − 3/2 [K e, W]` with
/// `W[k] = 2^k (h1 + 2h2 + 3h3)`, started from `3h1 + 2h2 − h3`.
pub fn tracking_error_file() -> ScenarioFile {
    let k = crate::sampling::tracking_gain();
    let kx = LetterInput::Mapped { slot: "X1".into(), map: rows(&k) };
    ScenarioFile {
        name: Some("example-4.1".into()),
        algebra: AlgebraInput::Reference("heisenberg".into()),
        n: 1,
        r: 1,
        a: rows(&crate::sampling::tracking_linear_part()),
        terms: vec![
            TermInput { letters: vec![kx.clone(), slot("X1")], coeff: vec![0.5] },
            TermInput { letters: vec![kx, slot("W1")], coeff: vec![-1.5] },
        ],
        families: vec![],
        ideal: IdealInput::Named("whole".into()),
        signal: SignalInput::Geometric { initial: vec![1.0, 2.0, 3.0], factor: 2.0 },
        initial: Some(vec![3.0, 2.0, -1.0]),
        horizon: Some(50),
        m_bound: Some(5.0),
        epsilon: None,
        norm: ProductNorm::Sum,
        mu: None,
    }
}

/// Upper-triangular conjugation dynamics
/// `X1⁺ = ½e^{ad W1}X1 − e^{ad X2}X1 + ½e^{ad W2}X2`,
/// `X2⁺ = ½e^{ad X2}X1 + ¼e^{ad(X1+W1)}X2`, inputs along `t4 + 7t5 + 6t6`
/// with two oscillating envelopes whose offsets decay geometrically.
pub fn conjugation_file() -> ScenarioFile {
    let base = linalg::mat_of_rows(&[vec![-0.5, 0.5], vec![0.5, 0.25]]);
    let a = linalg::kron(&base, &DMatrix::identity(6, 6));
    let fam = |base: Vec<(&str, f64)>, target: &str, coeff: [f64; 2]| FamilyInput {
        base: base.into_iter().map(|(s, w)| (s.to_string(), w)).collect(),
        target: target.into(),
        coeff: coeff.to_vec(),
        scale: 1.0,
        cutoff: None,
    };
    ScenarioFile {
        name: Some("example-6.1".into()),
        algebra: AlgebraInput::Reference("upper-triangular".into()),
        n: 2,
        r: 2,
        a: rows(&a),
        terms: vec![],
        families: vec![
            fam(vec![("W1", 1.0)], "X1", [0.5, 0.0]),
            fam(vec![("X2", 1.0)], "X1", [-1.0, 0.5]),
            fam(vec![("W2", 1.0)], "X2", [0.5, 0.0]),
            fam(vec![("X1", 1.0), ("W1", 1.0)], "X2", [0.0, 0.25]),
        ],
        ideal: IdealInput::Named("derived".into()),
        signal: SignalInput::Modulated {
            direction: vec![0.0, 0.0, 0.0, 1.0, 7.0, 6.0],
            profiles: vec![
                Profile { amplitude: 2.0, offset: 1.0, power: 1.0, base: 1.1, rate: 0.5, omega: 10.0, trig: Trig::Sin },
                Profile { amplitude: 1.0, offset: 2.0, power: 2.0, base: 1.1, rate: 2.0, omega: 20.0, trig: Trig::Cos },
            ],
            delay: 1,
        },
        initial: Some(vec![1.0, -1.0, 0.5, 1.0, 2.0, -1.0, 0.5, 1.0, -1.0, -2.0, 1.0, 3.0]),
        horizon: Some(200),
        m_bound: None,
        epsilon: None,
        norm: ProductNorm::Sum,
        mu: None,
    }
}

/// Heisenberg system with the nilpotent shift `h1 → h2 → h3 → 0`:
/// `X⁺ = AX + ½[X, W] + 0.3[W, [W, X]] + [AX, X]`.
pub fn heisenberg_deadbeat_file() -> ScenarioFile {
    let a = shift(3);
    ScenarioFile {
        name: Some("heisenberg-deadbeat".into()),
        algebra: AlgebraInput::Reference("heisenberg".into()),
        n: 1,
        r: 1,
        a: rows(&a),
        terms: vec![
            TermInput { letters: vec![slot("X1"), slot("W1")], coeff: vec![0.5] },
            TermInput { letters: vec![slot("W1"), slot("W1"), slot("X1")], coeff: vec![0.3] },
            TermInput {
                letters: vec![LetterInput::Mapped { slot: "X1".into(), map: rows(&a) }, slot("X1")],
                coeff: vec![1.0],
            },
        ],
        families: vec![],
        ideal: IdealInput::Named("whole".into()),
        signal: SignalInput::Modulated { direction: vec![1.0, -1.0, 2.0], profiles: vec![oscillation()], delay: 0 },
        initial: Some(vec![1.0, -2.0, 0.5]),
        horizon: Some(10),
        m_bound: Some(10.0),
        epsilon: None,
        norm: ProductNorm::Sum,
        mu: None,
    }
}

/// Upper-triangular system with the shift `t1 → … → t6 → 0`, ideal the
/// derived algebra and inputs inside it: `X⁺ = AX + ½[X, W] + [AX, X]`.
pub fn upper_triangular_deadbeat_file() -> ScenarioFile {
    let a = shift(6);
    ScenarioFile {
        name: Some("upper-triangular-deadbeat".into()),
        algebra: AlgebraInput::Reference("upper-triangular".into()),
        n: 1,
        r: 1,
        a: rows(&a),
        terms: vec![
            TermInput { letters: vec![slot("X1"), slot("W1")], coeff: vec![0.5] },
            TermInput {
                letters: vec![LetterInput::Mapped { slot: "X1".into(), map: rows(&a) }, slot("X1")],
                coeff: vec![1.0],
            },
        ],
        families: vec![],
        ideal: IdealInput::Named("derived".into()),
        signal: SignalInput::Modulated {
            direction: vec![0.0, 0.0, 0.0, 1.0, 7.0, 6.0],
            profiles: vec![oscillation()],
            delay: 0,
        },
        initial: Some(vec![1.0, -1.0, 0.5, 1.0, 2.0, -1.0]),
        horizon: Some(20),
        m_bound: Some(5.0),
        epsilon: None,
        norm: ProductNorm::Sum,
        mu: None,
    }
}

/// File form of a built-in.
pub fn builtin_file(name: &str) -> Result<ScenarioFile> {
    match name {
        "example-4.1" => Ok(tracking_error_file()),
        "example-6.1" => Ok(conjugation_file()),
        "heisenberg-deadbeat" => Ok(heisenberg_deadbeat_file()),
        "upper-triangular-deadbeat" => Ok(upper_triangular_deadbeat_file()),
        _ => Err(Error::Input(format!(
            "unknown builtin {name:?}; expected one of {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

pub fn builtin(name: &str) -> Result<Scenario> {
    builtin_file(name)?.build(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{build_error_dynamics_example, tracking_signal};
    use crate::stability::{certify_solvable, deadbeat_horizon, SolvableOptions, SolvableVerdict};

    #[test]
    fn builtins_round_trip_through_json() {
        for name in BUILTIN_NAMES {
            let file = builtin_file(name).unwrap();
            let text = file.to_json_string();
            let back = ScenarioFile::from_json_str(&text).unwrap();
            assert_eq!(back, file, "{name}");
            back.build(None).unwrap();
        }
    }

    #[test]
    fn tracking_scenario_matches_library_builder() {
        let sc = builtin("example-4.1").unwrap();
        let reference = build_error_dynamics_example().unwrap();
        let w = tracking_signal(1.0);
        for (k, x) in [[0.3, -1.0, 2.0], [3.0, 2.0, -1.0]].iter().enumerate() {
            let x = DVector::from_row_slice(x);
            let wk = w.sample(k, 1, 3).unwrap();
            let lhs = sc.system.eval(&x, &wk).unwrap();
            let rhs = reference.eval(&x, &wk).unwrap();
            assert!((lhs - rhs).amax() < 1e-15);
        }
        assert_eq!(sc.signal, w);
    }

    #[test]
    fn conjugation_scenario_spectrum_and_signal() {
        let sc = builtin("example-6.1").unwrap();
        let eig = linalg::eigenvalues(sc.system.a());
        assert_eq!(eig.len(), 12);
        let mut re: Vec<f64> = eig.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        for (i, v) in re.iter().enumerate() {
            let expected = if i < 6 { -0.75 } else { 0.5 };
            assert!((v - expected).abs() < 1e-12);
        }
        // W[0] = 0, W1[1] = 2·sin(0)… = 0, W2[1] = (2 − 0)·cos(0) = 2.
        let w1 = sc.signal.sample(1, 2, 6).unwrap();
        let dir = DVector::from_row_slice(&[0.0, 0.0, 0.0, 1.0, 7.0, 6.0]);
        assert!(w1.rows(0, 6).amax() < 1e-15);
        assert!((w1.rows(6, 6) - &dir * 2.0).amax() < 1e-14);
        let w2 = sc.signal.sample(2, 2, 6).unwrap();
        let p1 = 2.0 * (1.0 - 1.1f64.powf(-0.5)) * 10f64.sin();
        assert!((w2.rows(0, 6) - &dir * p1).amax() < 1e-13);
        let traj = sc.system.simulate(&sc.initial_state(), &sc.signal, 200).unwrap();
        assert!(traj.slot_norms(0)[200].max(traj.slot_norms(1)[200]) < 1e-4);
        let rep = certify_solvable(&sc.system, &sc.signal, SolvableOptions { probe: false, ..Default::default() }).unwrap();
        assert_eq!(rep.verdict, SolvableVerdict::Conditional);
        assert!((rep.rho_a - 0.75).abs() < 1e-12);
        assert!(rep.ideal_converging);
    }

    #[test]
    fn deadbeat_builtins_have_expected_horizons() {
        let h = deadbeat_horizon(&builtin("heisenberg-deadbeat").unwrap().system).unwrap();
        assert_eq!(h.level_horizons, vec![0, 2, 5]);
        let u = deadbeat_horizon(&builtin("upper-triangular-deadbeat").unwrap().system).unwrap();
        assert_eq!(u.level_horizons, vec![3, 8, 14]);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let mut file = tracking_error_file();
        file.terms[0].coeff = vec![0.5, 1.0];
        let err = file.build(None).unwrap_err().to_string();
        assert!(err.contains("terms[0].coeff"), "{err}");

        let mut file = tracking_error_file();
        file.terms[1].letters[1] = slot("Q1");
        let err = file.build(None).unwrap_err().to_string();
        assert!(err.contains("terms[1].letters[1]"), "{err}");

        let err = ScenarioFile::from_json_str("{\n  \"algebra\": \"heisenberg\",\n  \"n\": \"one\"\n}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("n:") && err.contains("line 3"), "{err}");

        let err = ScenarioFile::from_json_str(r#"{"algebra":"heisenberg","n":1,"a":[1],"bogus":0}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");

        let mut file = tracking_error_file();
        file.a = MatrixInput::Flat(vec![0.0; 8]);
        assert!(file.build(None).unwrap_err().to_string().contains(": a: expected 9 entries"));
    }

    #[test]
    fn inline_algebra_and_label_ideal() {
        let text = r#"{
            "algebra": {"dim": 3, "labels": ["x", "y", "z"],
                        "brackets": [{"i": "x", "j": "y", "coeffs": {"z": 1.0}}]},
            "n": 1, "r": 0,
            "a": [0.5, 0, 0, 0, 0.5, 0, 0, 0, 0.5],
            "terms": [{"letters": ["X1", "X1"], "coeff": [1.0]}],
            "ideal": {"labels": ["x", "y", "z"]}
        }"#;
        let sc = ScenarioFile::from_json_str(text).unwrap().build(None).unwrap();
        assert_eq!(sc.system.d(), 3);
        assert_eq!(sc.system.nilindex(), Some(2));
        assert_eq!(sc.horizon, DEFAULT_HORIZON);
    }

    #[test]
    fn conflicting_mirror_bracket_is_rejected() {
        let text = r#"{"dim": 2, "labels": ["a", "b"], "brackets": [
            {"i": "a", "j": "b", "coeffs": {"a": 1.0}},
            {"i": "b", "j": "a", "coeffs": {"a": 1.0}}]}"#;
        let file = AlgebraFile::from_json_str(text).unwrap();
        assert!(file.build().is_err());
        let ok = r#"{"dim": 2, "labels": ["a", "b"], "brackets": [
            {"i": "a", "j": "b", "coeffs": {"a": 1.0}},
            {"i": "b", "j": "a", "coeffs": {"a": -1.0}}]}"#;
        let alg = AlgebraFile::from_json_str(ok).unwrap().build().unwrap();
        assert_eq!(alg.structure_constant(1, 0, 0), -1.0);
        let back = AlgebraFile::from_algebra(&alg);
        assert_eq!(back.brackets.len(), 1);
    }
}
