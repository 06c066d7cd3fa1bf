//! Thermal occupations, per-channel rates and the 6×6 population generator.
//!
//! Under the secular approximation the populations evolve as
//! `d|ρ⟩/dt = W|ρ⟩` with `W = Σ_μ W_μ`. A channel `i → j` of weight `w`
//! moves population down at `2w·γ(n+1)` and up at `2w·γn`; the factor 2
//! comes from the `2VρV† − {V†V, ρ}` form of the dissipator.

use nalgebra::{Matrix6, SMatrix};
use thiserror::Error;

use crate::model::{
    eigenoperator_channels, operator_frequency, Bath, BathMap, BathSet, Level, ModelError,
    SystemParams, TransitionChannel, DIM,
};
use crate::precision::{real, to_f64, zero, Real, RealMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("transition frequency must be > 0 (got {omega})")]
    NonPositiveFrequency { omega: f64 },
    #[error("expected the 11 canonical channels, got {found} matching of {given}")]
    IncompleteChannels { found: usize, given: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `n(ω) = 1/(e^{ω/T} − 1)`; exactly 0 at `T = 0`.
pub fn bose_occupation(omega: f64, t: f64) -> Result<f64, RateError> {
    if !(omega > 0.0) {
        return Err(RateError::NonPositiveFrequency { omega });
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    // expm1 keeps full precision for ω ≪ T and overflows to +∞ (n = 0) for ω ≫ T.
    Ok(1.0 / (omega / t).exp_m1())
}

pub(crate) fn bose_occupation_real(omega: f64, t: f64) -> Result<Real, RateError> {
    if !(omega > 0.0) {
        return Err(RateError::NonPositiveFrequency { omega });
    }
    if t == 0.0 {
        return Ok(zero());
    }
    Ok(real(1.0) / (real(omega) / real(t)).exp_m1())
}

/// Emission (`a = γ(n+1)`) and absorption (`b = γn`) coefficients of one
/// channel; these are the spectral densities `J(−ω)` and `J(+ω)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePair {
    pub a: f64,
    pub b: f64,
}

pub fn rate_pair(
    channel: &TransitionChannel,
    baths: &BathSet,
    params: &SystemParams,
) -> Result<RatePair, RateError> {
    let gamma = params.gamma[channel.bath];
    let n = bose_occupation(channel.omega, baths.get(channel.bath))?;
    Ok(RatePair { a: gamma * (n + 1.0), b: gamma * n })
}

/// Population rate generator, kept per bath. Entries are held in extended
/// precision; the `f64` views are rounded copies.
#[derive(Clone, Debug)]
pub struct PopulationGenerator {
    precise: BathMap<RealMatrix>,
    per_bath: BathMap<Matrix6<f64>>,
    total: Matrix6<f64>,
}

fn round_matrix(m: &RealMatrix) -> Matrix6<f64> {
    Matrix6::from_fn(|i, j| to_f64(m.get(i, j)))
}

impl PopulationGenerator {
    fn from_precise(precise: BathMap<RealMatrix>) -> Self {
        let per_bath = precise.map(round_matrix);
        let total = round_matrix(&(&(&precise[Bath::L] + &precise[Bath::M]) + &precise[Bath::R]));
        Self { precise, per_bath, total }
    }

    /// Generator from explicit per-bath matrices (column `i` holds the
    /// rates out of level `i`).
    pub fn from_matrices(per_bath: BathMap<Matrix6<f64>>) -> Self {
        let precise = per_bath.map(|m| {
            let mut out = RealMatrix::zeros(DIM);
            for i in 0..DIM {
                for j in 0..DIM {
                    out.set(i, j, real(m[(i, j)]));
                }
            }
            out
        });
        Self::from_precise(precise)
    }

    /// `W = Σ_μ W_μ`.
    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.total
    }

    pub fn bath(&self, bath: Bath) -> &Matrix6<f64> {
        &self.per_bath[bath]
    }

    pub(crate) fn bath_precise(&self, bath: Bath) -> &RealMatrix {
        &self.precise[bath]
    }

    pub(crate) fn total_precise(&self) -> RealMatrix {
        &(&self.precise[Bath::L] + &self.precise[Bath::M]) + &self.precise[Bath::R]
    }

    /// Largest `|1ᵀW|` entry.
    pub fn max_column_sum(&self) -> f64 {
        self.total.row_sum().amax()
    }

    /// Generator with every transition into or out of `levels` removed.
    pub fn without_levels(&self, levels: &[Level]) -> Self {
        let drop: Vec<usize> = levels.iter().map(|l| l.index()).collect();
        let precise = self.precise.map(|m| {
            let mut out = m.clone();
            for i in 0..DIM {
                for j in 0..DIM {
                    if i != j && (drop.contains(&i) || drop.contains(&j)) {
                        out.set(i, j, zero());
                    }
                }
            }
            // rebuild diagonals from the remaining off-diagonal rates
            for j in 0..DIM {
                let out_rate = (0..DIM).filter(|&i| i != j).fold(zero(), |acc, i| acc + out.get(i, j));
                out.set(j, j, -out_rate);
            }
            out
        });
        Self::from_precise(precise)
    }

    /// Copy with the sign of one diagonal entry of `W_L` flipped, breaking
    /// probability conservation. Used to self-test the validation battery.
    #[doc(hidden)]
    pub fn with_injected_fault(&self) -> Self {
        let mut precise = self.precise.clone();
        let m = &mut precise[Bath::L];
        let (k, _) = (0..DIM)
            .map(|k| (k, to_f64(m.get(k, k)).abs()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let flipped = -m.get(k, k).clone();
        m.set(k, k, flipped);
        Self::from_precise(precise)
    }
}

/// Build `W_μ` from the channel list. The list must be exactly the canonical
/// eleven channels of `params`.
pub fn assemble_generator(
    channels: &[TransitionChannel],
    baths: &BathSet,
    params: &SystemParams,
) -> Result<PopulationGenerator, RateError> {
    let canonical = eigenoperator_channels(params)?;
    let mut given: Vec<_> = channels.iter().map(|c| c.key()).collect();
    given.sort();
    given.dedup();
    let found = canonical.iter().filter(|c| given.contains(&c.key())).count();
    if channels.len() != canonical.len() || given.len() != canonical.len() || found != canonical.len() {
        return Err(RateError::IncompleteChannels { found, given: channels.len() });
    }

    let mut precise = BathMap::from_fn(|_| RealMatrix::zeros(DIM));
    for c in channels {
        let gamma = real(params.gamma[c.bath]);
        let n = bose_occupation_real(c.omega, baths.get(c.bath))?;
        let scale = real(2.0 * c.weight) * gamma;
        let down = &scale * (&n + real(1.0));
        let up = scale * n;
        let (i, j) = (c.upper.index(), c.lower.index());
        let w = &mut precise[c.bath];
        w.add_to(j, i, &down);
        w.add_to(i, i, &-down.clone());
        w.add_to(i, j, &up);
        w.add_to(j, j, &-up.clone());
    }
    Ok(PopulationGenerator::from_precise(precise))
}

/// Channels and generator for the given parameters in one step.
pub fn generator_for(params: &SystemParams, baths: &BathSet) -> Result<PopulationGenerator, RateError> {
    let channels = eigenoperator_channels(params)?;
    assemble_generator(&channels, baths, params)
}

/// `C_{i,1;m,2} = |i⟩⟨1| + |m⟩⟨2|` embedding a two-level block into six levels.
fn selector(i: usize, m: usize) -> SMatrix<f64, 6, 2> {
    let mut c = SMatrix::<f64, 6, 2>::zeros();
    c[(i - 1, 0)] = 1.0;
    c[(m - 1, 1)] = 1.0;
    c
}

fn rate_block(params: &SystemParams, baths: &BathSet, bath: Bath, operator: u8) -> SMatrix<f64, 2, 2> {
    let gamma = params.gamma[bath];
    let omega = operator_frequency(params, bath, operator);
    let n = 1.0 / ((omega / baths.get(bath)).exp() - 1.0);
    let (a, b) = (gamma * (n + 1.0), gamma * n);
    SMatrix::<f64, 2, 2>::new(-a, b, a, -b)
}

/// `M_μ = Σ coef · C J_{μl} C†`, written out term by term from the factored
/// form. Each term is `(coefficient, upper, lower, operator)`.
///
/// The `V_L3` block has its upper level `λ4` first and the `V_R3` block
/// carries the factor 2 of a unit-weight operator.
pub fn assemble_paper_m(bath: Bath, baths: &BathSet, params: &SystemParams) -> Matrix6<f64> {
    let terms: &[(f64, usize, usize, u8)] = match bath {
        Bath::L => &[(1.0, 2, 3, 1), (2.0, 5, 6, 2), (1.0, 4, 3, 3)],
        Bath::M => &[
            (2.0, 3, 6, 1),
            (1.0, 1, 4, 2),
            (1.0, 2, 5, 2),
            (1.0, 1, 2, 3),
            (1.0, 4, 5, 3),
        ],
        Bath::R => &[(1.0, 2, 6, 1), (1.0, 4, 6, 2), (2.0, 1, 3, 3)],
    };
    terms.iter().fold(Matrix6::zeros(), |acc, &(coef, i, m, l)| {
        let c = selector(i, m);
        acc + coef * c * rate_block(params, baths, bath, l) * c.transpose()
    })
}
