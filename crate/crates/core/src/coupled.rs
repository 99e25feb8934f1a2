//! Two-species bosonic cMPS on the product ancilla space.
//!
//! Each field keeps its own D×D matrices; the realized state lives on the
//! D̃ = D² product ancilla with R̃₁ = R₁⊗𝟙 and R̃₂ = 𝟙⊗R₂ (which commute
//! exactly, as bosonic regularity demands) and an ancilla Hamiltonian
//! K̃ = K₁⊗𝟙 + 𝟙⊗K₂ + Σₚ Z₁⁽ᵖ⁾⊗Z₂⁽ᵖ⁾ whose Z pairs entangle the two
//! ancillas. P = 0 recovers two uncoupled fields with a separable fixed
//! point.

use num_complex::Complex64 as C64;

use crate::kernel::{self, adjoint, commutator, eye, kron, trace, CMat};
use crate::single::{
    steady_state_from_transfer, transfer_from_parts, StateError, SteadyState, HERM_TOL, OBS_CLIP,
};

/// Two-field variational state. `z` holds the P Hermitian coupling pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledAnsatz {
    d: usize,
    k1: CMat,
    k2: CMat,
    r1: CMat,
    r2: CMat,
    z: Vec<(CMat, CMat)>,
}

impl CoupledAnsatz {
    pub fn new(
        k1: CMat,
        k2: CMat,
        r1: CMat,
        r2: CMat,
        z: Vec<(CMat, CMat)>,
    ) -> Result<Self, StateError> {
        let d = k1.nrows();
        if d == 0 {
            return Err(StateError::BadShape { expected: 1, got: k1.dim() });
        }
        for m in [&k1, &k2, &r1, &r2] {
            if m.dim() != (d, d) {
                return Err(StateError::BadShape { expected: d, got: m.dim() });
            }
        }
        for m in [&k1, &k2] {
            check_hermitian(m)?;
        }
        for (z1, z2) in &z {
            if z1.dim() != (d, d) || z2.dim() != (d, d) {
                return Err(StateError::BadShape { expected: d, got: z1.dim() });
            }
            check_hermitian(z1)?;
            check_hermitian(z2)?;
        }
        Ok(Self { d, k1, k2, r1, r2, z })
    }

    /// Per-field bond dimension D; the realized state uses D̃ = D².
    pub fn bond_dim(&self) -> usize {
        self.d
    }

    /// Realized bond dimension D̃ = D².
    pub fn product_dim(&self) -> usize {
        self.d * self.d
    }

    /// Number of Z coupling pairs P.
    pub fn pairs(&self) -> usize {
        self.z.len()
    }

    pub fn k1(&self) -> &CMat {
        &self.k1
    }
    pub fn k2(&self) -> &CMat {
        &self.k2
    }
    pub fn r1(&self) -> &CMat {
        &self.r1
    }
    pub fn r2(&self) -> &CMat {
        &self.r2
    }
    pub fn z(&self) -> &[(CMat, CMat)] {
        &self.z
    }

    /// Swap the two species (including the Z pair members).
    pub fn swapped(&self) -> Self {
        Self {
            d: self.d,
            k1: self.k2.clone(),
            k2: self.k1.clone(),
            r1: self.r2.clone(),
            r2: self.r1.clone(),
            z: self.z.iter().map(|(a, b)| (b.clone(), a.clone())).collect(),
        }
    }
}

fn check_hermitian(m: &CMat) -> Result<(), StateError> {
    let deviation = kernel::max_abs(&(m - &adjoint(m)));
    if deviation > HERM_TOL * (1.0 + kernel::max_abs(m)) {
        return Err(StateError::NotHermitian { deviation });
    }
    Ok(())
}

/// Physical couplings of two contact gases with a density-density coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledModelParams {
    pub mass: f64,
    /// Intra-species repulsion (same for both species).
    pub c: f64,
    /// Inter-species density-density coupling.
    pub g: f64,
    pub rho01: f64,
    pub rho02: f64,
}

impl CoupledModelParams {
    pub fn new(mass: f64, c: f64, g: f64, rho01: f64, rho02: f64) -> Result<Self, StateError> {
        let p = Self { mass, c, g, rho01, rho02 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), StateError> {
        let finite = self.mass.is_finite()
            && self.c.is_finite()
            && self.g.is_finite()
            && self.rho01.is_finite()
            && self.rho02.is_finite();
        if !finite || !(self.mass > 0.0 && self.rho01 > 0.0 && self.rho02 > 0.0) {
            return Err(StateError::NonFinite("coupled model parameters"));
        }
        Ok(())
    }

    /// Swap the two species' target densities.
    pub fn swapped(&self) -> Self {
        Self { rho01: self.rho02, rho02: self.rho01, ..*self }
    }
}

/// K̃ = K₁⊗𝟙 + 𝟙⊗K₂ + Σₚ Z₁⁽ᵖ⁾⊗Z₂⁽ᵖ⁾ on the product ancilla.
pub fn assemble_k(ansatz: &CoupledAnsatz) -> CMat {
    let id = eye(ansatz.bond_dim());
    let mut k = kron(ansatz.k1(), &id) + kron(&id, ansatz.k2());
    for (z1, z2) in ansatz.z() {
        k = k + kron(z1, z2);
    }
    k
}

/// (R̃₁, R̃₂) = (R₁⊗𝟙, 𝟙⊗R₂); exactly commuting by construction.
pub fn assemble_r(ansatz: &CoupledAnsatz) -> (CMat, CMat) {
    let id = eye(ansatz.bond_dim());
    (kron(ansatz.r1(), &id), kron(&id, ansatz.r2()))
}

/// Q̃ = −iK̃ − ½ Σ_α R̃_α†R̃_α.
pub fn build_q_coupled(ansatz: &CoupledAnsatz) -> CMat {
    let k = assemble_k(ansatz);
    let (r1, r2) = assemble_r(ansatz);
    let sum = adjoint(&r1).dot(&r1) + adjoint(&r2).dot(&r2);
    k.mapv(|z| -C64::i() * z) - sum.mapv(|z| 0.5 * z)
}

/// Coupled transfer operator T̃ = Q̃⊗𝟙 + 𝟙⊗Q̃* + Σ_α R̃_α⊗R̃_α*, of shape
/// D̃²×D̃².
pub fn build_transfer_coupled(ansatz: &CoupledAnsatz) -> CMat {
    let q = build_q_coupled(ansatz);
    let (r1, r2) = assemble_r(ansatz);
    transfer_from_parts(&q, &[&r1, &r2])
}

/// Fixed point of the coupled transfer operator on the D̃-level ancilla.
pub fn steady_state_coupled(ansatz: &CoupledAnsatz, tol: f64) -> Result<SteadyState, StateError> {
    let t = build_transfer_coupled(ansatz);
    steady_state_from_transfer(&t, ansatz.product_dim(), tol)
}

/// Local observables of the coupled state evaluated on one steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledObservables {
    pub n1: f64,
    pub n2: f64,
    pub kin1: f64,
    pub kin2: f64,
    pub pair1: f64,
    pub pair2: f64,
    /// ⟨ρ̂₁ρ̂₂⟩ = Re tr((R̃₂R̃₁)†(R̃₂R̃₁) ϱ*).
    pub cross: f64,
}

fn real_observable(value: C64) -> f64 {
    if value.re < 0.0 && value.re >= OBS_CLIP {
        0.0
    } else {
        value.re
    }
}

/// Densities, kinetic and pair densities per species, and the equal-point
/// cross-density ⟨ρ̂₁ρ̂₂⟩.
pub fn observables_coupled(ansatz: &CoupledAnsatz, ss: &SteadyState) -> CoupledObservables {
    let q = build_q_coupled(ansatz);
    let (r1, r2) = assemble_r(ansatz);
    let tr_with = |m: &CMat| real_observable(trace(&m.dot(&ss.rho)));

    let field = |r: &CMat| -> (f64, f64, f64) {
        let n = tr_with(&adjoint(r).dot(r));
        let qr = commutator(&q, r).expect("Q̃ and R̃ share the product shape");
        let kin = tr_with(&adjoint(&qr).dot(&qr));
        let rr = r.dot(r);
        let pair = tr_with(&adjoint(&rr).dot(&rr));
        (n, kin, pair)
    };
    let (n1, kin1, pair1) = field(&r1);
    let (n2, kin2, pair2) = field(&r2);
    let r21 = r2.dot(&r1);
    let cross = tr_with(&adjoint(&r21).dot(&r21));
    CoupledObservables { n1, n2, kin1, kin2, pair1, pair2, cross }
}

/// Everything the optimizer needs from one coupled steady-state solve.
#[derive(Debug, Clone)]
pub struct CoupledEval {
    pub energy: f64,
    pub obs: CoupledObservables,
    pub gap: f64,
    pub residual: f64,
}

/// Evaluate the coupled energy functional
/// e = (kin₁+kin₂)/(2M) + c(pair₁+pair₂) + g⟨ρ̂₁ρ̂₂⟩ in one solve.
pub fn evaluate(
    ansatz: &CoupledAnsatz,
    params: &CoupledModelParams,
    tol: f64,
) -> Result<CoupledEval, StateError> {
    let ss = steady_state_coupled(ansatz, tol)?;
    let obs = observables_coupled(ansatz, &ss);
    let energy = (obs.kin1 + obs.kin2) / (2.0 * params.mass)
        + params.c * (obs.pair1 + obs.pair2)
        + params.g * obs.cross;
    if !energy.is_finite() {
        return Err(StateError::NonFinite("coupled energy density"));
    }
    Ok(CoupledEval { energy, obs, gap: ss.gap, residual: ss.residual })
}

/// Coupled ground-state energy density.
pub fn energy_density_coupled(
    ansatz: &CoupledAnsatz,
    params: &CoupledModelParams,
) -> Result<f64, StateError> {
    Ok(evaluate(ansatz, params, kernel::DEFAULT_NULL_TOL)?.energy)
}

/// Equal-point density-density correlation |Δρ²| = |⟨ρ̂₁ρ̂₂⟩ − ⟨ρ̂₁⟩⟨ρ̂₂⟩|.
pub fn density_correlation(ansatz: &CoupledAnsatz, ss: &SteadyState) -> f64 {
    let obs = observables_coupled(ansatz, ss);
    (obs.cross - obs.n1 * obs.n2).abs()
}
