//! Qubit–qutrit system: parameters, dressed eigensystem and the
//! bath-resolved transition channels.
//!
//! The bare product basis is ordered `|q t⟩` with the qubit level `q ∈ {0,1}`
//! and the qutrit level `t ∈ {0,1,2}` (increasing energy):
//!
//! ```text
//! index: 0     1     2     3     4     5
//! state: |00⟩  |01⟩  |02⟩  |10⟩  |11⟩  |12⟩
//! ```
//!
//! In the column-vector convention where the qubit excited state is
//! `[1,0]ᵀ` and the qutrit levels are `|2⟩=[1,0,0]ᵀ, |1⟩=[0,1,0]ᵀ,
//! |0⟩=[0,0,1]ᵀ`, the same states appear in reversed order; nothing outside
//! this module depends on the bare ordering.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::Matrix6;
use thiserror::Error;

/// Number of dressed levels.
pub const DIM: usize = 6;

/// Relative tolerance on `e3 = e1 + e2`.
pub const RESONANCE_TOL: f64 = 1e-12;

/// Ratio above which a dissipation rate is no longer "much smaller" than a
/// frequency gap.
pub const SECULAR_RATIO_LIMIT: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` must be finite and > 0 (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("temperature `{name}` must be finite and >= 0 (got {value})")]
    InvalidTemperature { name: &'static str, value: f64 },
    #[error("resonance violated: e3 = {e3} but e1 + e2 = {sum}")]
    ResonanceViolation { e3: f64, sum: f64 },
    #[error("channel {bath}{operator} has non-positive frequency {omega} (requires g < e1 and g < e2)")]
    DegenerateFrequency { bath: Bath, operator: u8, omega: f64 },
}

/// The three heat baths. `L` and `R` couple to the qutrit, `M` to the qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bath {
    L,
    M,
    R,
}

impl Bath {
    pub const ALL: [Bath; 3] = [Bath::L, Bath::M, Bath::R];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Bath::L => "L",
            Bath::M => "M",
            Bath::R => "R",
        }
    }
}

impl fmt::Display for Bath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A value per bath.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct BathMap<T>(pub [T; 3]);

impl<T> BathMap<T> {
    pub fn new(l: T, m: T, r: T) -> Self {
        Self([l, m, r])
    }

    pub fn from_fn(mut f: impl FnMut(Bath) -> T) -> Self {
        Self([f(Bath::L), f(Bath::M), f(Bath::R)])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Bath, &T)> {
        Bath::ALL.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> BathMap<U> {
        BathMap([f(&self.0[0]), f(&self.0[1]), f(&self.0[2])])
    }
}

impl<T> Index<Bath> for BathMap<T> {
    type Output = T;

    fn index(&self, bath: Bath) -> &T {
        &self.0[bath.index()]
    }
}

impl<T> IndexMut<Bath> for BathMap<T> {
    fn index_mut(&mut self, bath: Bath) -> &mut T {
        &mut self.0[bath.index()]
    }
}

/// Dressed level `|λ_k⟩`, numbered 1..=6 in the fixed order
/// `[E1+E3, E3−g, E1, E3+g, E2, 0]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Level(u8);

impl Level {
    /// Panics unless `1 <= k <= 6`.
    pub const fn new(k: u8) -> Self {
        assert!(k >= 1 && k <= 6, "dressed level out of range");
        Level(k)
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Zero-based position in population vectors.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn all() -> impl Iterator<Item = Level> {
        (1..=6).map(Level)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "λ{}", self.0)
    }
}

/// Bare energies, internal coupling and per-bath decay rates, in units of a
/// reference energy `E` (ħ = k_B = 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub g: f64,
    pub gamma: BathMap<f64>,
}

fn positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::NonPositive { name, value })
    }
}

impl SystemParams {
    pub fn new(e1: f64, e2: f64, e3: f64, g: f64, gamma: BathMap<f64>) -> Result<Self, ModelError> {
        positive("e1", e1)?;
        positive("e2", e2)?;
        positive("e3", e3)?;
        positive("g", g)?;
        positive("gamma_l", gamma[Bath::L])?;
        positive("gamma_m", gamma[Bath::M])?;
        positive("gamma_r", gamma[Bath::R])?;
        if (e3 - e1 - e2).abs() > RESONANCE_TOL * e3 {
            return Err(ModelError::ResonanceViolation { e3, sum: e1 + e2 });
        }
        Ok(Self { e1, e2, e3, g, gamma })
    }

    /// Resonant parameters with `e3 = e1 + e2` and one rate for all baths.
    pub fn resonant(e1: f64, e2: f64, g: f64, gamma: f64) -> Result<Self, ModelError> {
        Self::new(e1, e2, e1 + e2, g, BathMap::new(gamma, gamma, gamma))
    }

    /// `E1 = 4, E2 = 40, E3 = 44, g = 0.75 E1, γ = 0.01 E1` for every bath.
    pub fn reference() -> Self {
        Self::resonant(4.0, 40.0, 3.0, 0.04).expect("reference parameters are valid")
    }

    /// Same parameters with every decay rate multiplied by `factor`.
    pub fn with_scaled_gamma(&self, factor: f64) -> Result<Self, ModelError> {
        Self::new(self.e1, self.e2, self.e3, self.g, self.gamma.map(|g| g * factor))
    }

    /// `H_S` in the bare product basis.
    pub fn hamiltonian(&self) -> Matrix6<f64> {
        let mut h = Matrix6::from_diagonal(&nalgebra::Vector6::new(
            0.0,
            self.e2,
            self.e3,
            self.e1,
            self.e1 + self.e2,
            self.e1 + self.e3,
        ));
        // g(|11⟩⟨02| + |02⟩⟨11|)
        h[(4, 2)] = self.g;
        h[(2, 4)] = self.g;
        h
    }
}

/// Bath temperatures in units of `E`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BathSet {
    pub temperatures: BathMap<f64>,
}

impl BathSet {
    pub fn new(t_l: f64, t_m: f64, t_r: f64) -> Result<Self, ModelError> {
        let temps = BathMap::new(t_l, t_m, t_r);
        for (bath, &t) in temps.iter() {
            if !(t.is_finite() && t >= 0.0) {
                let name = match bath {
                    Bath::L => "t_l",
                    Bath::M => "t_m",
                    Bath::R => "t_r",
                };
                return Err(ModelError::InvalidTemperature { name, value: t });
            }
        }
        Ok(Self { temperatures: temps })
    }

    pub fn uniform(t: f64) -> Result<Self, ModelError> {
        Self::new(t, t, t)
    }

    pub fn get(&self, bath: Bath) -> f64 {
        self.temperatures[bath]
    }

    /// Copy with one temperature replaced.
    pub fn with(&self, bath: Bath, t: f64) -> Result<Self, ModelError> {
        let mut temps = self.temperatures;
        temps[bath] = t;
        Self::new(temps[Bath::L], temps[Bath::M], temps[Bath::R])
    }
}

/// Analytic eigensystem of `H_S`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenSystem {
    /// `[E1+E3, E3−g, E1, E3+g, E2, 0]`.
    pub eigenvalues: [f64; DIM],
    /// Column `k` is `|λ_{k+1}⟩` in the bare basis.
    pub eigenvectors: Matrix6<f64>,
}

impl EigenSystem {
    pub fn energy(&self, level: Level) -> f64 {
        self.eigenvalues[level.index()]
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix6<f64> {
        let d = Matrix6::from_diagonal(&nalgebra::Vector6::from_column_slice(&self.eigenvalues));
        self.eigenvectors * d * self.eigenvectors.transpose()
    }
}

pub fn diagonalize(params: &SystemParams) -> EigenSystem {
    let SystemParams { e1, e2, e3, g, .. } = *params;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = Matrix6::zeros();
    // |λ1⟩ = |12⟩
    v[(5, 0)] = 1.0;
    // |λ2⟩ = (|11⟩ − |02⟩)/√2
    v[(4, 1)] = s;
    v[(2, 1)] = -s;
    // |λ3⟩ = |10⟩
    v[(3, 2)] = 1.0;
    // |λ4⟩ = (|11⟩ + |02⟩)/√2
    v[(4, 3)] = s;
    v[(2, 3)] = s;
    // |λ5⟩ = |01⟩
    v[(1, 4)] = 1.0;
    // |λ6⟩ = |00⟩
    v[(0, 5)] = 1.0;
    EigenSystem {
        eigenvalues: [e1 + e3, e3 - g, e1, e3 + g, e2, 0.0],
        eigenvectors: v,
    }
}

/// One bath-driven transition `upper → lower` between dressed levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionChannel {
    pub bath: Bath,
    /// Eigenoperator number `l` within the bath (1..=3).
    pub operator: u8,
    pub omega: f64,
    pub upper: Level,
    pub lower: Level,
    /// `|⟨λ_lower|V|λ_upper⟩|²`.
    pub weight: f64,
}

impl TransitionChannel {
    /// Identity of the channel, independent of parameter values.
    pub fn key(&self) -> (Bath, u8, Level, Level) {
        (self.bath, self.operator, self.upper, self.lower)
    }

    pub fn connects(&self, a: Level, b: Level) -> bool {
        (self.upper == a && self.lower == b) || (self.upper == b && self.lower == a)
    }
}

// (bath, operator, upper, lower, weight) for the nine eigenoperators; the
// split operators V_M2 and V_M3 contribute two components each.
const CHANNEL_TABLE: [(Bath, u8, u8, u8, f64); 11] = [
    (Bath::L, 1, 2, 3, 0.5),
    (Bath::L, 2, 5, 6, 1.0),
    (Bath::L, 3, 4, 3, 0.5),
    (Bath::M, 1, 3, 6, 1.0),
    (Bath::M, 2, 2, 5, 0.5),
    (Bath::M, 2, 1, 4, 0.5),
    (Bath::M, 3, 4, 5, 0.5),
    (Bath::M, 3, 1, 2, 0.5),
    (Bath::R, 1, 2, 6, 0.5),
    (Bath::R, 2, 4, 6, 0.5),
    (Bath::R, 3, 1, 3, 1.0),
];

/// The eleven population-coupling channels, sorted by bath, then frequency.
pub fn eigenoperator_channels(params: &SystemParams) -> Result<Vec<TransitionChannel>, ModelError> {
    let eig = diagonalize(params);
    let mut channels = Vec::with_capacity(CHANNEL_TABLE.len());
    for &(bath, operator, upper, lower, weight) in &CHANNEL_TABLE {
        let (upper, lower) = (Level::new(upper), Level::new(lower));
        let omega = eig.energy(upper) - eig.energy(lower);
        if !(omega > 0.0) {
            return Err(ModelError::DegenerateFrequency { bath, operator, omega });
        }
        channels.push(TransitionChannel { bath, operator, omega, upper, lower, weight });
    }
    channels.sort_by(|a, b| {
        a.bath
            .cmp(&b.bath)
            .then(a.omega.total_cmp(&b.omega))
            .then(a.upper.cmp(&b.upper))
            .then(a.lower.cmp(&b.lower))
    });
    Ok(channels)
}

/// Frequency of eigenoperator `l` of `bath` as a closed-form expression
/// in the bare parameters.
pub fn operator_frequency(params: &SystemParams, bath: Bath, operator: u8) -> f64 {
    let SystemParams { e1, e2, e3, g, .. } = *params;
    match (bath, operator) {
        (Bath::L, 1) => e2 - g,
        (Bath::L, 2) => e2,
        (Bath::L, 3) => e2 + g,
        (Bath::M, 1) => e1,
        (Bath::M, 2) => e1 - g,
        (Bath::M, 3) => e1 + g,
        (Bath::R, 1) => e3 - g,
        (Bath::R, 2) => e3 + g,
        (Bath::R, 3) => e3,
        _ => panic!("no eigenoperator {bath}{operator}"),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecularWarning {
    pub bath: Bath,
    /// The two eigenoperators whose frequencies are compared.
    pub operators: (u8, u8),
    /// `γ_μ / min(gap, g)`.
    pub ratio: f64,
}

impl fmt::Display for SecularWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "secular approximation doubtful for bath {} operators ({},{}): gamma/gap = {:.4}",
            self.bath, self.operators.0, self.operators.1, self.ratio
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecularReport {
    pub warnings: Vec<SecularWarning>,
    /// Largest ratio over all baths and operator pairs.
    pub max_ratio: f64,
}

impl SecularReport {
    pub fn is_valid(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// Check `γ_μ ≪ min{|ω_l − ω_l' ± 2g|, g}` for every pair of eigenoperators
/// of the same bath. Shifted gaps that vanish identically (on resonance
/// `ω_L3 − ω_L1 = 2g`) are not separations and are skipped.
pub fn validate_secular(params: &SystemParams) -> SecularReport {
    let coincident = 1e-9 * params.e3;
    let mut warnings = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for bath in Bath::ALL {
        let gamma = params.gamma[bath];
        for l in 1..=3u8 {
            for lp in (l + 1)..=3u8 {
                let delta = operator_frequency(params, bath, l) - operator_frequency(params, bath, lp);
                let gap = [(delta + 2.0 * params.g).abs(), (delta - 2.0 * params.g).abs()]
                    .into_iter()
                    .filter(|&x| x > coincident)
                    .fold(params.g, f64::min);
                let ratio = gamma / gap;
                max_ratio = max_ratio.max(ratio);
                if ratio >= SECULAR_RATIO_LIMIT {
                    warnings.push(SecularWarning { bath, operators: (l, lp), ratio });
                }
            }
        }
    }
    SecularReport { warnings, max_ratio }
}
