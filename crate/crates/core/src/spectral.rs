//! Spectral measures on `[-pi, pi)` and the slowly varying functions that
//! parametrise their behaviour at the origin.
//!
//! A [`SpectralMeasure`] is a density (a sum of [`DensityTerm`]s, zeroed on a
//! list of frequency zones) plus a finite symmetric list of atoms. Everything
//! downstream (autocovariances, samplers, band probabilities) is generated from
//! it. The JSON form is the exchange format used by the CLI:
//!
//! ```json
//! {"label": "fgn", "H": 0.7, "ell_family": {"family": "one"},
//!  "density": [{"kind": "fgn", "scale": 1.0}], "atoms": [], "zones": []}
//! ```

use crate::error::{Error, Result, ScheduleCondition};
use crate::quadrature::{integrate, integrate_breaks, uniform_breaks, Quad};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Periodization terms kept on each side of the origin.
pub const DEFAULT_TRUNCATION: usize = 256;

/// Hurst index together with the constant `m_H` of the FGN spectral singularity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstParams {
    hurst: f64,
    m_h: f64,
}

impl HurstParams {
    pub fn new(hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Hurst index must lie in (0, 1), got {hurst}"
            )));
        }
        let m_h = gamma(2.0 * hurst + 1.0) * (PI * hurst).sin() / (2.0 * PI);
        Ok(HurstParams { hurst, m_h })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// `Gamma(2H + 1) sin(pi H) / (2 pi)`.
    pub fn m_h(&self) -> f64 {
        self.m_h
    }

    /// Exponent that regularises `|u|^(1 - 2H)` under `u = s^beta`.
    pub fn regularizing_exponent(&self) -> f64 {
        1.0 / (2.0 - 2.0 * self.hurst)
    }
}

/// Spectral density of fractional Gaussian noise,
/// `m_H |1 - e^{-iu}|^2 sum_k |u + 2 pi k|^{-2H-1}`.
///
/// The periodization is summed over `|k| <= truncation` and the remainder is
/// replaced by its midpoint-rule integral, which is accurate to `O(K^{-2H-2})`.
pub fn fgn_spectral_density(params: &HurstParams, u: f64, truncation: usize) -> Result<f64> {
    if truncation < 8 {
        return Err(Error::InvalidArgument(format!(
            "truncation must be at least 8, got {truncation}"
        )));
    }
    if !u.is_finite() || u.abs() > PI {
        return Err(Error::InvalidArgument(format!(
            "frequency {u} outside [-pi, pi)"
        )));
    }
    let h = params.hurst;
    let x = u.abs();
    if x == 0.0 {
        return match h.partial_cmp(&0.5) {
            Some(std::cmp::Ordering::Greater) => Err(Error::SingularPoint { hurst: h }),
            Some(std::cmp::Ordering::Equal) => Ok(params.m_h),
            _ => Ok(0.0),
        };
    }
    let a = 2.0 * h + 1.0;
    let two_pi = 2.0 * PI;
    let mut sum = 0.0;
    for k in (1..=truncation).rev() {
        let c = two_pi * k as f64;
        sum += (c + x).powf(-a) + (c - x).powf(-a);
    }
    sum += x.powf(-a);
    let edge = two_pi * (truncation as f64 + 0.5);
    sum += ((edge + x).powf(-2.0 * h) + (edge - x).powf(-2.0 * h)) / (two_pi * 2.0 * h);
    let s = (0.5 * x).sin();
    Ok(params.m_h * 4.0 * s * s * sum)
}

/// Built-in slowly varying families: `1` and `|ln x|^a`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum EllFamily {
    #[default]
    One,
    LogPower {
        a: f64,
    },
}

impl EllFamily {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            EllFamily::One => 1.0,
            EllFamily::LogPower { a } => x.ln().abs().powf(a),
        }
    }
}

#[derive(Clone)]
enum EllKind {
    Builtin(EllFamily),
    Custom {
        name: String,
        eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

/// A function slowly varying at zero, evaluated on `(0, 1)`.
#[derive(Clone)]
pub struct SlowlyVaryingFn {
    kind: EllKind,
}

impl fmt::Debug for SlowlyVaryingFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EllKind::Builtin(fam) => write!(f, "SlowlyVaryingFn({fam:?})"),
            EllKind::Custom { name, .. } => write!(f, "SlowlyVaryingFn(custom {name})"),
        }
    }
}

impl Default for SlowlyVaryingFn {
    fn default() -> Self {
        SlowlyVaryingFn::one()
    }
}

impl SlowlyVaryingFn {
    pub fn one() -> Self {
        SlowlyVaryingFn {
            kind: EllKind::Builtin(EllFamily::One),
        }
    }

    pub fn log_power(a: f64) -> Result<Self> {
        Self::from_family(EllFamily::LogPower { a })
    }

    pub fn from_family(family: EllFamily) -> Result<Self> {
        if let EllFamily::LogPower { a } = family {
            if !(-2.0..=2.0).contains(&a) {
                return Err(Error::InvalidArgument(format!(
                    "log-power exponent must lie in [-2, 2], got {a}"
                )));
            }
        }
        Ok(SlowlyVaryingFn {
            kind: EllKind::Builtin(family),
        })
    }

    /// User-supplied function; adjoint convergence is then best-effort.
    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        SlowlyVaryingFn {
            kind: EllKind::Custom {
                name: name.into(),
                eval: Arc::new(eval),
            },
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            EllKind::Builtin(fam) => fam.eval(x),
            EllKind::Custom { eval, .. } => eval(x),
        }
    }

    pub fn family(&self) -> Option<EllFamily> {
        match &self.kind {
            EllKind::Builtin(fam) => Some(*fam),
            EllKind::Custom { .. } => None,
        }
    }

    pub fn is_one(&self) -> bool {
        matches!(self.kind, EllKind::Builtin(EllFamily::One))
    }

    /// `sqrt(ell(r^{-1/H}))`, the function whose adjoint enters the rates.
    pub fn tilde(&self, hurst: f64, r: f64) -> f64 {
        self.eval(r.powf(-1.0 / hurst)).sqrt()
    }
}

/// Controls for [`adjoint_slowly_varying_with`].
#[derive(Debug, Clone, Copy)]
pub struct AdjointConfig {
    pub r_min: f64,
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for AdjointConfig {
    fn default() -> Self {
        AdjointConfig {
            r_min: 2.0,
            damping: 0.5,
            max_iter: 200,
            tol: 1e-10,
        }
    }
}

/// Solves `L * ell~(r L) = 1` for the adjoint `L(r)`.
pub fn adjoint_slowly_varying(ell: &SlowlyVaryingFn, hurst: f64, r: f64) -> Result<f64> {
    adjoint_slowly_varying_with(ell, hurst, r, &AdjointConfig::default())
}

pub fn adjoint_slowly_varying_with(
    ell: &SlowlyVaryingFn,
    hurst: f64,
    r: f64,
    cfg: &AdjointConfig,
) -> Result<f64> {
    if !(r >= cfg.r_min) {
        return Err(Error::InvalidArgument(format!(
            "adjoint needs r >= {}, got {r}",
            cfg.r_min
        )));
    }
    if ell.is_one() {
        return Ok(1.0);
    }
    let residual = |l: f64| l * ell.tilde(hurst, r * l) - 1.0;
    let mut l = 1.0;
    let mut res = residual(l);
    for _ in 0..cfg.max_iter {
        if res.abs() <= cfg.tol {
            return Ok(l);
        }
        let t = ell.tilde(hurst, r * l);
        if !(t.is_finite() && t > 0.0) {
            break;
        }
        l = (1.0 - cfg.damping) * l + cfg.damping / t;
        res = residual(l);
        if !res.is_finite() {
            break;
        }
    }
    if res.abs() <= cfg.tol {
        return Ok(l);
    }
    Err(Error::AdjointDiverged { residual: res })
}

/// `d(r) = r^{1/H} L(r)^{1/H}`.
pub fn scaling_d(hurst: f64, l_value: f64, r: f64) -> f64 {
    r.powf(1.0 / hurst) * l_value.powf(1.0 / hurst)
}

/// One additive piece of the absolutely continuous part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityTerm {
    /// `scale * p_FGN(u)`, modulated by `ell(|u| / 2 pi)` when the measure's
    /// slowly varying family is not `one`.
    Fgn { scale: f64 },
    /// Constant density `level` (Lebesgue measure times `level`).
    Flat { level: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub frequency: f64,
    pub weight: f64,
}

/// The four purely atomic measures with distinct small-deviation orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiracCase {
    /// `delta_0`
    Zero,
    /// `delta_{-pi}`
    Nyquist,
    /// `delta_{-pi/2} + delta_{pi/2}`
    QuarterPair,
    /// `delta_0 + delta_{-pi} + delta_{pi/2} + delta_{-pi/2}`
    FourAtoms,
}

impl DiracCase {
    pub const ALL: [DiracCase; 4] = [
        DiracCase::Zero,
        DiracCase::Nyquist,
        DiracCase::QuarterPair,
        DiracCase::FourAtoms,
    ];

    /// Order of magnitude `f^a N^b` of the band probability, as `(a, b)`.
    pub fn exponents(&self) -> (f64, f64) {
        match self {
            DiracCase::Zero => (1.0, -1.0),
            DiracCase::Nyquist => (1.0, 0.0),
            DiracCase::QuarterPair => (2.0, 0.0),
            DiracCase::FourAtoms => (4.0, -1.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DiracCase::Zero => "delta0",
            DiracCase::Nyquist => "delta-pi",
            DiracCase::QuarterPair => "delta-pm-half-pi",
            DiracCase::FourAtoms => "four-atoms",
        }
    }
}

impl FromStr for DiracCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DiracCase::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown Dirac case {s}")))
    }
}

/// Serialized form of a [`SpectralMeasure`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureDocument {
    pub label: String,
    #[serde(rename = "H", default)]
    pub hurst: Option<f64>,
    #[serde(default)]
    pub ell_family: EllFamily,
    #[serde(default)]
    pub density: Vec<DensityTerm>,
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub zones: Vec<[f64; 2]>,
}

/// Atoms grouped into independent real components.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AtomComponents {
    pub zero: Option<f64>,
    pub nyquist: Option<f64>,
    /// `(t, w)` with `t in (0, pi)`: the pair of atoms at `+-t`, each of weight `w`.
    pub pairs: Vec<(f64, f64)>,
}

impl AtomComponents {
    pub fn dimension(&self) -> usize {
        self.zero.is_some() as usize + self.nyquist.is_some() as usize + 2 * self.pairs.len()
    }
}

/// A symmetric finite measure on `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureDocument", into = "MeasureDocument")]
pub struct SpectralMeasure {
    label: String,
    hurst: Option<HurstParams>,
    ell: EllFamily,
    density: Vec<DensityTerm>,
    atoms: Vec<Atom>,
    zones: Vec<(f64, f64)>,
}

impl TryFrom<MeasureDocument> for SpectralMeasure {
    type Error = Error;

    fn try_from(doc: MeasureDocument) -> Result<Self> {
        let hurst = doc.hurst.map(HurstParams::new).transpose()?;
        SlowlyVaryingFn::from_family(doc.ell_family)?;
        for term in &doc.density {
            match *term {
                DensityTerm::Fgn { scale } => {
                    if hurst.is_none() {
                        return Err(Error::InvalidMeasure("an fgn density term needs H".into()));
                    }
                    if !(scale > 0.0 && scale.is_finite()) {
                        return Err(Error::InvalidMeasure(format!(
                            "fgn scale must be positive, got {scale}"
                        )));
                    }
                }
                DensityTerm::Flat { level } => {
                    if !(level > 0.0 && level.is_finite()) {
                        return Err(Error::InvalidMeasure(format!(
                            "flat level must be positive, got {level}"
                        )));
                    }
                }
            }
        }
        let atoms: Vec<Atom> = doc
            .atoms
            .iter()
            .map(|&[frequency, weight]| Atom { frequency, weight })
            .collect();
        check_atoms(&atoms)?;
        let zones: Vec<(f64, f64)> = doc.zones.iter().map(|&[a, b]| (a, b)).collect();
        check_zones(&zones)?;
        Ok(SpectralMeasure {
            label: doc.label,
            hurst,
            ell: doc.ell_family,
            density: doc.density,
            atoms,
            zones,
        })
    }
}

impl From<SpectralMeasure> for MeasureDocument {
    fn from(m: SpectralMeasure) -> Self {
        MeasureDocument {
            label: m.label,
            hurst: m.hurst.map(|h| h.hurst),
            ell_family: m.ell,
            density: m.density,
            atoms: m.atoms.iter().map(|a| [a.frequency, a.weight]).collect(),
            zones: m.zones.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }
}

fn check_atoms(atoms: &[Atom]) -> Result<()> {
    for a in atoms {
        if !(a.frequency >= -PI && a.frequency < PI) {
            return Err(Error::InvalidMeasure(format!(
                "atom frequency {} outside [-pi, pi)",
                a.frequency
            )));
        }
        if !(a.weight > 0.0 && a.weight.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "atom weight must be positive, got {}",
                a.weight
            )));
        }
    }
    let mut pos: Vec<Atom> = atoms
        .iter()
        .copied()
        .filter(|a| a.frequency > 0.0)
        .collect();
    let mut neg: Vec<Atom> = atoms
        .iter()
        .copied()
        .filter(|a| a.frequency < 0.0 && a.frequency > -PI)
        .collect();
    if pos.len() != neg.len() {
        return Err(Error::InvalidMeasure("atoms are not symmetric".into()));
    }
    pos.sort_by(|a, b| {
        a.frequency
            .total_cmp(&b.frequency)
            .then(a.weight.total_cmp(&b.weight))
    });
    neg.sort_by(|a, b| {
        b.frequency
            .total_cmp(&a.frequency)
            .then(a.weight.total_cmp(&b.weight))
    });
    for (p, n) in pos.iter().zip(&neg) {
        let same_place = (p.frequency + n.frequency).abs() <= 1e-12 * p.frequency.max(1.0);
        let same_weight = (p.weight - n.weight).abs() <= 1e-12 * p.weight;
        if !(same_place && same_weight) {
            return Err(Error::InvalidMeasure(format!(
                "atom at {} has no mirror of equal weight",
                p.frequency
            )));
        }
    }
    Ok(())
}

fn check_zones(zones: &[(f64, f64)]) -> Result<()> {
    let mut last: Option<f64> = None;
    for &(a, b) in zones {
        let ordered = last.is_none_or(|l| a > l);
        if !(a >= 0.0 && b > a && b <= PI && ordered) {
            return Err(Error::InvalidMeasure(format!(
                "zones must be increasing disjoint intervals inside [0, pi], got [{a}, {b}]"
            )));
        }
        last = Some(b);
    }
    Ok(())
}

fn merge_zones(mut zones: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    zones.retain(|&(a, b)| b > a);
    zones.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in zones {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

impl SpectralMeasure {
    pub fn from_document(doc: MeasureDocument) -> Result<Self> {
        Self::try_from(doc)
    }

    pub fn to_document(&self) -> MeasureDocument {
        self.clone().into()
    }

    /// Spectral measure of fractional Gaussian noise with unit variance.
    pub fn fgn(hurst: f64) -> Result<Self> {
        Ok(SpectralMeasure {
            label: format!("fgn(H={hurst})"),
            hurst: Some(HurstParams::new(hurst)?),
            ell: EllFamily::One,
            density: vec![DensityTerm::Fgn { scale: 1.0 }],
            atoms: Vec::new(),
            zones: Vec::new(),
        })
    }

    /// FGN density modulated by a built-in slowly varying function.
    pub fn modulated_fgn(hurst: f64, ell: EllFamily) -> Result<Self> {
        SlowlyVaryingFn::from_family(ell)?;
        let mut m = Self::fgn(hurst)?;
        m.ell = ell;
        m.label = format!("fgn(H={hurst}, {ell:?})");
        Ok(m)
    }

    /// i.i.d. `N(0, variance)` steps: flat density `variance / (2 pi)`.
    pub fn white_noise(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "variance must be positive, got {variance}"
            )));
        }
        Ok(SpectralMeasure {
            label: format!("iid(var={variance})"),
            hurst: Some(HurstParams::new(0.5)?),
            ell: EllFamily::One,
            density: vec![DensityTerm::Flat {
                level: variance / (2.0 * PI),
            }],
            atoms: Vec::new(),
            zones: Vec::new(),
        })
    }

    pub fn atomic(label: impl Into<String>, atoms: Vec<Atom>) -> Result<Self> {
        check_atoms(&atoms)?;
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("atomic measure without atoms".into()));
        }
        Ok(SpectralMeasure {
            label: label.into(),
            hurst: None,
            ell: EllFamily::One,
            density: Vec::new(),
            atoms,
            zones: Vec::new(),
        })
    }

    pub fn dirac(case: DiracCase) -> Self {
        let at = |frequency: f64| Atom {
            frequency,
            weight: 1.0,
        };
        let atoms = match case {
            DiracCase::Zero => vec![at(0.0)],
            DiracCase::Nyquist => vec![at(-PI)],
            DiracCase::QuarterPair => vec![at(-PI / 2.0), at(PI / 2.0)],
            DiracCase::FourAtoms => vec![at(0.0), at(-PI), at(PI / 2.0), at(-PI / 2.0)],
        };
        Self::atomic(case.name(), atoms).expect("built-in atoms are symmetric")
    }

    /// Adds `level` times Lebesgue measure (an independent white component).
    pub fn with_flat(&self, level: f64) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "flat level must be positive, got {level}"
            )));
        }
        let mut m = self.clone();
        if m.hurst.is_none() && !m.zones.is_empty() {
            return Err(Error::InvalidMeasure(
                "cannot add a flat term under zones".into(),
            ));
        }
        m.density.push(DensityTerm::Flat { level });
        m.label = format!("{} + {level}*Leb", self.label);
        Ok(m)
    }

    /// Adds atoms (given with both signs) to the measure.
    pub fn with_atoms(&self, extra: &[Atom]) -> Result<Self> {
        let mut m = self.clone();
        m.atoms.extend_from_slice(extra);
        check_atoms(&m.atoms)?;
        Ok(m)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn hurst(&self) -> Option<HurstParams> {
        self.hurst
    }

    pub fn ell_family(&self) -> EllFamily {
        self.ell
    }

    pub fn density_terms(&self) -> &[DensityTerm] {
        &self.density
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn zones(&self) -> &[(f64, f64)] {
        &self.zones
    }

    pub fn has_density(&self) -> bool {
        !self.density.is_empty()
    }

    pub fn is_purely_atomic(&self) -> bool {
        self.density.is_empty() && !self.atoms.is_empty()
    }

    /// Step variance when the measure is flat (i.i.d. Gaussian steps).
    pub fn iid_variance(&self) -> Option<f64> {
        if !self.atoms.is_empty() || !self.zones.is_empty() || self.density.is_empty() {
            return None;
        }
        let white_fgn = self.hurst.is_some_and(|h| h.hurst() == 0.5) && self.ell == EllFamily::One;
        self.density.iter().try_fold(0.0, |acc, t| match *t {
            DensityTerm::Flat { level } => Some(acc + 2.0 * PI * level),
            DensityTerm::Fgn { scale } if white_fgn => Some(acc + scale),
            DensityTerm::Fgn { .. } => None,
        })
    }

    /// Whether the density has an FGN term and hence a power law at 0.
    pub fn has_fgn_term(&self) -> bool {
        self.density
            .iter()
            .any(|t| matches!(t, DensityTerm::Fgn { .. }))
    }

    /// Same measure without the atoms.
    pub fn density_part(&self) -> SpectralMeasure {
        SpectralMeasure {
            atoms: Vec::new(),
            label: format!("{} (density)", self.label),
            ..self.clone()
        }
    }

    /// Same measure without the density.
    pub fn atomic_part(&self) -> SpectralMeasure {
        SpectralMeasure {
            density: Vec::new(),
            zones: Vec::new(),
            label: format!("{} (atoms)", self.label),
            ..self.clone()
        }
    }

    pub fn in_zone(&self, u: f64) -> bool {
        let x = u.abs();
        self.zones.iter().any(|&(a, b)| x >= a && x <= b)
    }

    /// Restriction of the measure to frequencies with `lo <= |u| <= hi`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<SpectralMeasure> {
        if !(lo >= 0.0 && hi > lo && hi <= PI) {
            return Err(Error::InvalidArgument(format!(
                "restriction band [{lo}, {hi}] must lie in [0, pi]"
            )));
        }
        let mut zones = self.zones.clone();
        zones.push((0.0, lo));
        zones.push((hi, PI));
        let atoms = self
            .atoms
            .iter()
            .copied()
            .filter(|a| a.frequency.abs() >= lo && a.frequency.abs() <= hi)
            .collect();
        Ok(SpectralMeasure {
            label: format!("{} on [{lo}, {hi}]", self.label),
            zones: merge_zones(zones),
            atoms,
            ..self.clone()
        })
    }

    /// Density of the absolutely continuous part at `u`.
    pub fn density(&self, u: f64) -> Result<f64> {
        if self.density.is_empty() || self.in_zone(u) {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for term in &self.density {
            total += match *term {
                DensityTerm::Flat { level } => level,
                DensityTerm::Fgn { scale } => {
                    let params = self.hurst.expect("validated: fgn term has H");
                    let p = fgn_spectral_density(&params, u, DEFAULT_TRUNCATION)?;
                    let x = u.abs();
                    if x > 0.0 {
                        scale * p * self.ell.eval(x / (2.0 * PI))
                    } else {
                        scale * p
                    }
                }
            };
        }
        Ok(total)
    }

    /// Exponent for the singularity-cancelling substitution near 0.
    pub fn regularizing_exponent(&self) -> f64 {
        match (self.has_fgn_term(), self.hurst) {
            (true, Some(h)) => h.regularizing_exponent(),
            _ => 1.0,
        }
    }

    /// Subintervals of `[0, pi]` on which the density is not forced to zero.
    pub fn density_support(&self) -> Vec<(f64, f64)> {
        let mut pieces = Vec::new();
        let mut lo = 0.0;
        for &(a, b) in &self.zones {
            if a > lo {
                pieces.push((lo, a));
            }
            lo = b;
        }
        if lo < PI {
            pieces.push((lo, PI));
        }
        pieces
    }

    /// `int_{-pi}^{pi} weight(u) p(u) du` for an even `weight`.
    ///
    /// `oscillation` is the largest frequency present in `weight`; pieces are split
    /// so each panel holds at most half a period.
    pub fn integrate_density(
        &self,
        weight: impl Fn(f64) -> f64,
        oscillation: f64,
        abs_tol: f64,
    ) -> Result<Quad> {
        if self.density.is_empty() {
            return Ok(Quad {
                value: 0.0,
                error: 0.0,
            });
        }
        let width = if oscillation > 1.0 {
            PI / oscillation
        } else {
            PI / 2.0
        };
        let beta = self.regularizing_exponent();
        let mut value = 0.0;
        let mut error = 0.0;
        let mut failure: Option<Error> = None;
        let pieces = self.density_support();
        let share = abs_tol / (2.0 * (pieces.len() + 1) as f64);
        for (lo, hi) in pieces {
            let mut a = lo;
            if lo == 0.0 {
                // substitution u = s^beta on the first panel removes the power law at 0
                let first = hi.min(width);
                let s_hi = first.powf(1.0 / beta);
                let g = |s: f64| {
                    let u = s.powf(beta);
                    self.density(u).unwrap_or(f64::NAN) * weight(u) * beta * s.powf(beta - 1.0)
                };
                match integrate_breaks(g, &[0.0, s_hi], share, 4000) {
                    Ok(q) => {
                        value += q.value;
                        error += q.error;
                    }
                    Err(e) => failure = Some(e),
                }
                a = first;
            }
            if hi > a {
                let breaks = uniform_breaks(a, hi, width);
                let g = |u: f64| self.density(u).unwrap_or(f64::NAN) * weight(u);
                match integrate_breaks(g, &breaks, share, 4000 + 4 * breaks.len()) {
                    Ok(q) => {
                        value += q.value;
                        error += q.error;
                    }
                    Err(e) => failure = Some(e),
                }
            }
        }
        if let Some(e) = failure {
            return Err(e);
        }
        if !value.is_finite() {
            return Err(Error::QuadratureTolerance {
                achieved: f64::INFINITY,
                requested: abs_tol,
            });
        }
        Ok(Quad {
            value: 2.0 * value,
            error: 2.0 * error,
        })
    }

    /// `int p + sum w`, which equals `r(0)`.
    pub fn total_mass(&self) -> Result<f64> {
        let atoms: f64 = self.atoms.iter().map(|a| a.weight).sum();
        let dens = self.integrate_density(|_| 1.0, 0.0, 1e-11)?;
        Ok(atoms + dens.value)
    }

    /// Splits the atoms into independent real Gaussian components.
    pub fn atom_components(&self) -> AtomComponents {
        let mut comps = AtomComponents::default();
        for a in &self.atoms {
            if a.frequency == 0.0 {
                *comps.zero.get_or_insert(0.0) += a.weight;
            } else if a.frequency == -PI {
                *comps.nyquist.get_or_insert(0.0) += a.weight;
            } else if a.frequency > 0.0 {
                comps.pairs.push((a.frequency, a.weight));
            }
        }
        comps
    }
}

/// One level `(M_j, q_j, N_j)` of a perturbation schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationLevel {
    pub m: f64,
    pub q: usize,
    pub n: u64,
}

fn default_boundary_exponent() -> f64 {
    0.5
}

/// Finite prefix of the zone-discretization schedule for an FGN spectral measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSchedule {
    pub hurst: f64,
    pub levels: Vec<PerturbationLevel>,
    /// `f_N = N^{H * boundary_exponent}`; must lie in `(0, 1)`.
    #[serde(default = "default_boundary_exponent")]
    pub boundary_exponent: f64,
}

impl PerturbationSchedule {
    pub fn new(hurst: f64, levels: Vec<PerturbationLevel>) -> Self {
        PerturbationSchedule {
            hurst,
            levels,
            boundary_exponent: default_boundary_exponent(),
        }
    }

    /// The boundary `f_N` attached to the schedule.
    pub fn boundary(&self, n: u64) -> f64 {
        (n as f64).powf(self.hurst * self.boundary_exponent)
    }

    /// `d(f_{N_j})` with `L = 1`.
    pub fn scale(&self, level: usize) -> f64 {
        self.boundary(self.levels[level].n).powf(1.0 / self.hurst)
    }

    /// Positive-frequency perturbation zone `[1/(M d), M/d]`.
    pub fn zone(&self, level: usize) -> (f64, f64) {
        let d = self.scale(level);
        let m = self.levels[level].m;
        (1.0 / (m * d), m / d)
    }

    /// Grid `t_{j,0} < ... < t_{j,q}` spread uniformly over the zone.
    pub fn nodes(&self, level: usize) -> Vec<f64> {
        let lvl = self.levels[level];
        let d = self.scale(level);
        let start = 1.0 / (lvl.m * d);
        let span = (lvl.m - 1.0 / lvl.m) / d;
        (0..=lvl.q)
            .map(|k| start + (k as f64 / lvl.q as f64) * span)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        HurstParams::new(self.hurst)?;
        if !(self.boundary_exponent > 0.0 && self.boundary_exponent < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "boundary exponent must lie in (0, 1), got {}",
                self.boundary_exponent
            )));
        }
        let fail = |condition, level, detail: String| {
            Err(Error::InvalidSchedule {
                condition,
                level,
                detail,
            })
        };
        for (j, lvl) in self.levels.iter().enumerate() {
            if !(lvl.m > 1.0 && lvl.m.is_finite()) || lvl.q == 0 || lvl.n < 2 {
                return fail(
                    ScheduleCondition::Mq,
                    j,
                    format!(
                        "need M > 1, q >= 1, N >= 2; got M={}, q={}, N={}",
                        lvl.m, lvl.q, lvl.n
                    ),
                );
            }
            let (lo, hi) = self.zone(j);
            if !(lo > 0.0 && hi < PI) {
                return fail(
                    ScheduleCondition::ZoneRange,
                    j,
                    format!("zone [{lo}, {hi}] leaves (0, pi)"),
                );
            }
            if j > 0 {
                let prev = self.levels[j - 1];
                let ratio = lvl.m * lvl.m / lvl.q as f64;
                let prev_ratio = prev.m * prev.m / prev.q as f64;
                if !(lvl.m > prev.m && lvl.q >= prev.q && ratio < prev_ratio) {
                    return fail(
                        ScheduleCondition::Mq,
                        j,
                        format!(
                            "need M increasing, q nondecreasing and M^2/q decreasing; got M {}->{}, q {}->{}",
                            prev.m, lvl.m, prev.q, lvl.q
                        ),
                    );
                }
                let d_prev = self.scale(j - 1);
                let d = self.scale(j);
                if !(d > lvl.m * prev.m * d_prev) {
                    return fail(
                        ScheduleCondition::Nonover,
                        j,
                        format!(
                            "d = {d} must exceed M_j M_(j-1) d_(j-1) = {}",
                            lvl.m * prev.m * d_prev
                        ),
                    );
                }
            }
        }
        Ok(())
    }
}

/// FGN spectral measure with each scheduled zone replaced by `q_j` atom pairs
/// carrying the zone's mass.
pub fn perturbed_measure(schedule: &PerturbationSchedule) -> Result<SpectralMeasure> {
    schedule.validate()?;
    let mut measure = SpectralMeasure::fgn(schedule.hurst)?;
    let params = HurstParams::new(schedule.hurst)?;
    let p = |u: f64| fgn_spectral_density(&params, u, DEFAULT_TRUNCATION).unwrap_or(f64::NAN);
    let mut zones = Vec::new();
    let mut atoms = Vec::new();
    for j in 0..schedule.levels.len() {
        let t = schedule.nodes(j);
        for k in 0..t.len() - 1 {
            let w = integrate(p, t[k], t[k + 1], 1e-14)?.value;
            atoms.push(Atom {
                frequency: t[k],
                weight: w,
            });
            atoms.push(Atom {
                frequency: -t[k],
                weight: w,
            });
        }
        zones.push((t[0], t[t.len() - 1]));
    }
    zones.sort_by(|a, b| a.0.total_cmp(&b.0));
    check_zones(&zones)?;
    measure.zones = zones;
    measure.atoms = atoms;
    measure.label = format!(
        "perturbed-fgn(H={}, levels={})",
        schedule.hurst,
        schedule.levels.len()
    );
    Ok(measure)
}

/// `g~[h, pi] / ((m_H / 2H) h^{-2H})` with `g~(du) = G(du) / |e^{iu} - 1|^2`.
pub fn tail_mass_ratio(measure: &SpectralMeasure, hurst: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && h < PI) {
        return Err(Error::InvalidArgument(format!(
            "h must lie in (0, pi), got {h}"
        )));
    }
    let params = HurstParams::new(hurst)?;
    let reference = params.m_h / (2.0 * hurst) * h.powf(-2.0 * hurst);
    let kernel = |u: f64| {
        let s = (0.5 * u).sin();
        1.0 / (4.0 * s * s)
    };
    let mut total = 0.0;
    if measure.has_density() {
        for (lo, hi) in measure.density_support() {
            let a = lo.max(h);
            if hi <= a {
                continue;
            }
            // u = e^s flattens the u^{-1-2H} decay
            let g = |s: f64| {
                let u = s.exp();
                measure.density(u).unwrap_or(f64::NAN) * kernel(u) * u
            };
            let breaks = uniform_breaks(a.ln(), hi.ln(), 0.5);
            total += integrate_breaks(g, &breaks, 1e-11 * reference, 20_000)?.value;
        }
    }
    for atom in measure.atoms() {
        if atom.frequency >= h {
            total += atom.weight * kernel(atom.frequency);
        } else if atom.frequency == -PI {
            total += 0.5 * atom.weight * kernel(PI);
        }
    }
    Ok(total / reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_h_at_one_half() {
        let p = HurstParams::new(0.5).unwrap();
        assert!((p.m_h() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(HurstParams::new(1.0).is_err());
        assert!(HurstParams::new(0.0).is_err());
    }

    #[test]
    fn density_at_origin() {
        let hi = HurstParams::new(0.7).unwrap();
        assert!(matches!(
            fgn_spectral_density(&hi, 0.0, 64),
            Err(Error::SingularPoint { .. })
        ));
        let lo = HurstParams::new(0.3).unwrap();
        assert_eq!(fgn_spectral_density(&lo, 0.0, 64).unwrap(), 0.0);
        let half = HurstParams::new(0.5).unwrap();
        assert!((fgn_spectral_density(&half, 0.0, 64).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn truncation_floor() {
        let p = HurstParams::new(0.5).unwrap();
        assert!(fgn_spectral_density(&p, 1.0, 7).is_err());
    }

    #[test]
    fn unknown_json_fields_are_rejected() {
        let doc = r#"{"label":"x","H":0.5,"density":[{"kind":"fgn","scale":1.0}],"bogus":1}"#;
        assert!(serde_json::from_str::<SpectralMeasure>(doc).is_err());
    }

    #[test]
    fn negative_atom_weight_is_rejected() {
        let doc = r#"{"label":"x","atoms":[[0.0,-1.0]]}"#;
        let err = serde_json::from_str::<SpectralMeasure>(doc).unwrap_err();
        assert!(err.to_string().contains("weight"), "{err}");
    }

    #[test]
    fn asymmetric_atoms_are_rejected() {
        let r = SpectralMeasure::atomic(
            "a",
            vec![Atom {
                frequency: 1.0,
                weight: 1.0,
            }],
        );
        assert!(r.is_err());
        let r = SpectralMeasure::atomic(
            "b",
            vec![
                Atom {
                    frequency: 1.0,
                    weight: 1.0,
                },
                Atom {
                    frequency: -1.0,
                    weight: 2.0,
                },
            ],
        );
        assert!(r.is_err());
    }

    #[test]
    fn atom_components_of_four_atom_case() {
        let c = SpectralMeasure::dirac(DiracCase::FourAtoms).atom_components();
        assert_eq!(c.zero, Some(1.0));
        assert_eq!(c.nyquist, Some(1.0));
        assert_eq!(c.pairs, vec![(PI / 2.0, 1.0)]);
        assert_eq!(c.dimension(), 4);
    }

    #[test]
    fn schedule_violations_name_the_condition() {
        let s = PerturbationSchedule::new(
            0.7,
            vec![
                PerturbationLevel { m: 2.0, q: 8, n: 4 },
                PerturbationLevel {
                    m: 3.0,
                    q: 32,
                    n: 16,
                },
            ],
        );
        match s.validate() {
            Err(Error::InvalidSchedule {
                condition, level, ..
            }) => {
                assert_eq!(condition, ScheduleCondition::Nonover);
                assert_eq!(level, 1);
            }
            other => panic!("expected nonover failure, got {other:?}"),
        }
        let s = PerturbationSchedule::new(
            0.7,
            vec![
                PerturbationLevel { m: 2.0, q: 8, n: 4 },
                PerturbationLevel {
                    m: 3.0,
                    q: 8,
                    n: 256,
                },
            ],
        );
        match s.validate() {
            Err(Error::InvalidSchedule { condition, .. }) => {
                assert_eq!(condition, ScheduleCondition::Mq)
            }
            other => panic!("expected Mq failure, got {other:?}"),
        }
    }

    #[test]
    fn adjoint_of_one_is_one() {
        let l = adjoint_slowly_varying(&SlowlyVaryingFn::one(), 0.3, 100.0).unwrap();
        assert_eq!(l, 1.0);
        assert!(adjoint_slowly_varying(&SlowlyVaryingFn::one(), 0.3, 1.0).is_err());
    }

    #[test]
    fn adjoint_divergence_is_reported() {
        let wild = SlowlyVaryingFn::custom("zero", |_| 0.0);
        assert!(matches!(
            adjoint_slowly_varying(&wild, 0.5, 10.0),
            Err(Error::AdjointDiverged { .. })
        ));
    }

    #[test]
    fn scaling_d_values() {
        assert_eq!(scaling_d(0.5, 1.0, 4.0), 16.0);
        assert!((scaling_d(0.25, 1.0, 2.0) - 16.0).abs() < 1e-12);
    }
}
