//! Full 36-dimensional Liouvillian, built in the bare product basis.
//!
//! The eigenoperators are not taken from the channel table: they are
//! recomputed from the bare bath couplings (`|0⟩⟨1|` on the qutrit for L,
//! `|0⟩⟨1|` on the qubit for M, `|0⟩⟨2|` on the qutrit for R) by grouping
//! their dressed-basis matrix elements by Bohr frequency. Coherences are
//! kept, so a diagonal steady state is a genuine check of the secular
//! population model.

use nalgebra::{DMatrix, DVector, Matrix6, SymmetricEigen};
use num_complex::Complex64;

use super::{clean_populations, residual_f64, Method, SolveError, SteadyState};
use crate::model::{diagonalize, Bath, BathSet, SystemParams, DIM};
use crate::rates::{bose_occupation, generator_for};

const SUPER: usize = DIM * DIM;

/// Largest off-diagonal magnitude tolerated in the dressed-basis steady state.
pub const OFF_DIAGONAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct LiouvillianSolution {
    /// Steady density matrix in the dressed basis (rows/columns `λ1…λ6`).
    pub density: Matrix6<Complex64>,
    pub max_off_diagonal: f64,
    /// `‖ρ − ρ†‖_max`.
    pub hermiticity_error: f64,
    pub trace: Complex64,
}

fn bare_coupling(bath: Bath) -> Matrix6<f64> {
    let mut a = Matrix6::zeros();
    // bare index = 3·qubit + qutrit
    match bath {
        Bath::L => {
            a[(0, 1)] = 1.0;
            a[(3, 4)] = 1.0;
        }
        Bath::M => {
            for t in 0..3 {
                a[(t, 3 + t)] = 1.0;
            }
        }
        Bath::R => {
            a[(0, 2)] = 1.0;
            a[(3, 5)] = 1.0;
        }
    }
    a
}

/// Numerical eigenvectors of `H_S`, columns ordered like the dressed levels.
fn dressed_frame(params: &SystemParams) -> (Vec<f64>, Matrix6<f64>) {
    let h = params.hamiltonian();
    let eig = SymmetricEigen::new(h);
    let target = diagonalize(params).eigenvalues;
    let mut used = [false; DIM];
    let mut u = Matrix6::zeros();
    let mut energies = Vec::with_capacity(DIM);
    for (col, &e) in target.iter().enumerate() {
        let k = (0..DIM)
            .filter(|&k| !used[k])
            .min_by(|&a, &b| (eig.eigenvalues[a] - e).abs().total_cmp(&(eig.eigenvalues[b] - e).abs()))
            .expect("six eigenvalues");
        used[k] = true;
        u.set_column(col, &eig.eigenvectors.column(k));
        energies.push(eig.eigenvalues[k]);
    }
    (energies, u)
}

/// Jump operators `V(ω)` (bare basis) with their frequencies.
fn eigenoperators(bath: Bath, energies: &[f64], u: &Matrix6<f64>) -> Vec<(f64, Matrix6<f64>)> {
    let scale = energies.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let a = u.transpose() * bare_coupling(bath) * u;
    let mut groups: Vec<(f64, Matrix6<f64>)> = Vec::new();
    for lo in 0..DIM {
        for hi in 0..DIM {
            let el = a[(lo, hi)];
            if el.abs() < 1e-12 {
                continue;
            }
            let omega = energies[hi] - energies[lo];
            assert!(omega > 1e-9 * scale, "bath coupling raises energy on resonance");
            let mut component = Matrix6::zeros();
            component[(lo, hi)] = el;
            match groups.iter_mut().find(|(w, _)| (w - omega).abs() <= 1e-9 * scale) {
                Some((_, v)) => *v += component,
                None => groups.push((omega, component)),
            }
        }
    }
    groups
        .into_iter()
        .map(|(omega, v)| (omega, u * v * u.transpose()))
        .collect()
}

fn complexify(m: &Matrix6<f64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(DIM, DIM, |i, j| Complex64::new(m[(i, j)], 0.0))
}

/// `ρ ↦ 2XρX† − {X†X, ρ}` as a column-stacking superoperator.
fn dissipator(x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let id = DMatrix::<Complex64>::identity(DIM, DIM);
    let xdx = x.adjoint() * x;
    x.conjugate().kronecker(x) * Complex64::new(2.0, 0.0) - id.kronecker(&xdx) - xdx.transpose().kronecker(&id)
}

fn build(params: &SystemParams, baths: &BathSet) -> Result<(DMatrix<Complex64>, Matrix6<f64>), SolveError> {
    let (energies, u) = dressed_frame(params);
    let h = complexify(&params.hamiltonian());
    let id = DMatrix::<Complex64>::identity(DIM, DIM);
    let minus_i = Complex64::new(0.0, -1.0);
    let mut l = (id.kronecker(&h) - h.transpose().kronecker(&id)) * minus_i;
    for bath in Bath::ALL {
        let gamma = params.gamma[bath];
        for (omega, v) in eigenoperators(bath, &energies, &u) {
            let n = bose_occupation(omega, baths.get(bath))?;
            let v = complexify(&v);
            l += dissipator(&v) * Complex64::new(gamma * (n + 1.0), 0.0);
            if n > 0.0 {
                l += dissipator(&v.adjoint()) * Complex64::new(gamma * n, 0.0);
            }
        }
    }
    Ok((l, u))
}

/// Steady density matrix of the full master equation, in the dressed basis.
pub fn full_liouvillian_density(params: &SystemParams, baths: &BathSet) -> Result<LiouvillianSolution, SolveError> {
    let (mut l, u) = build(params, baths)?;
    // Tr L[ρ] = 0, so the (0,0) row is redundant: replace it by Tr ρ = 1.
    for col in 0..SUPER {
        l[(0, col)] = Complex64::new(0.0, 0.0);
    }
    for k in 0..DIM {
        l[(0, k * DIM + k)] = Complex64::new(1.0, 0.0);
    }
    let mut rhs = DVector::<Complex64>::zeros(SUPER);
    rhs[0] = Complex64::new(1.0, 0.0);
    let x = l.lu().solve(&rhs).ok_or(SolveError::SingularLiouvillian)?;
    let rho_bare = Matrix6::<Complex64>::from_fn(|i, j| x[j * DIM + i]);
    let uc = u.map(|v| Complex64::new(v, 0.0));
    let density = uc.transpose() * rho_bare * uc;

    let mut max_off_diagonal: f64 = 0.0;
    for i in 0..DIM {
        for j in 0..DIM {
            if i != j {
                max_off_diagonal = max_off_diagonal.max(density[(i, j)].norm());
            }
        }
    }
    let hermiticity_error = (density - density.adjoint()).map(|z| z.norm()).max();
    Ok(LiouvillianSolution { density, max_off_diagonal, hermiticity_error, trace: density.trace() })
}

pub fn solve_full_liouvillian(params: &SystemParams, baths: &BathSet) -> Result<SteadyState, SolveError> {
    let sol = full_liouvillian_density(params, baths)?;
    if sol.max_off_diagonal >= OFF_DIAGONAL_TOL {
        return Err(SolveError::NonDiagonalSteadyState { max_off_diagonal: sol.max_off_diagonal });
    }
    let mut raw = [0.0; DIM];
    for (k, p) in raw.iter_mut().enumerate() {
        *p = sol.density[(k, k)].re;
    }
    let populations = clean_populations(raw)?;
    let residual = residual_f64(&generator_for(params, baths)?, &populations);
    Ok(SteadyState { populations, method: Method::FullLiouvillianOracle, residual, precise: None })
}
