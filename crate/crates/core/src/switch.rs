//! Fixed-order processes, the quantum switch and its generalizations.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{FactorLabel, PureProcess, Role, C64, ONE, ZERO};
use crate::random::random_unitary;

/// A distribution over the two branches of a switch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryDistribution {
    pub p0: f64,
    pub p1: f64,
}

impl BinaryDistribution {
    pub fn new(p0: f64, p1: f64) -> Result<Self> {
        let ok = p0.is_finite() && p1.is_finite() && p0 >= 0.0 && p1 >= 0.0 && (p0 + p1 - 1.0).abs() <= 1e-12;
        if !ok {
            return Err(Error::BadDistribution(p0, p1));
        }
        Ok(Self { p0, p1 })
    }

    pub fn uniform() -> Self {
        Self { p0: 0.5, p1: 0.5 }
    }

    pub fn get(&self, i: usize) -> f64 {
        if i == 0 {
            self.p0
        } else {
            self.p1
        }
    }

    pub fn max(&self) -> f64 {
        self.p0.max(self.p1)
    }

    pub fn min(&self) -> f64 {
        self.p0.min(self.p1)
    }

    pub fn swapped(&self) -> Self {
        Self { p0: self.p1, p1: self.p0 }
    }
}

/// The six wire unitaries of a generalized switch. Each maps the first
/// named wire to the second, e.g. `u_pa` maps `P` to `A_I`.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchUnitaries {
    pub u_pa: DMatrix<C64>,
    pub u_ab: DMatrix<C64>,
    pub u_bf: DMatrix<C64>,
    pub u_pb: DMatrix<C64>,
    pub u_ba: DMatrix<C64>,
    pub u_af: DMatrix<C64>,
}

impl SwitchUnitaries {
    pub fn identity(d: usize) -> Self {
        let i = DMatrix::identity(d, d);
        Self { u_pa: i.clone(), u_ab: i.clone(), u_bf: i.clone(), u_pb: i.clone(), u_ba: i.clone(), u_af: i }
    }

    /// Random unitaries satisfying both switch constraints.
    pub fn random_constrained<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let u_pa = random_unitary(d, rng);
        let u_bf = random_unitary(d, rng);
        let u_pb = random_unitary(d, rng);
        let u_af = random_unitary(d, rng);
        let u_ba = &u_pa * &u_bf;
        let u_ab = &u_pb * &u_af;
        Self { u_pa, u_ab, u_bf, u_pb, u_ba, u_af }
    }

    /// Six independent Haar unitaries; generically violates the constraints.
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        Self {
            u_pa: random_unitary(d, rng),
            u_ab: random_unitary(d, rng),
            u_bf: random_unitary(d, rng),
            u_pb: random_unitary(d, rng),
            u_ba: random_unitary(d, rng),
            u_af: random_unitary(d, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.u_pa.nrows()
    }

    fn all(&self) -> [&DMatrix<C64>; 6] {
        [&self.u_pa, &self.u_ab, &self.u_bf, &self.u_pb, &self.u_ba, &self.u_af]
    }
}

/// Control basis as two column vectors.
pub type ControlBasis = [[C64; 2]; 2];

pub const COMPUTATIONAL_BASIS: ControlBasis = [[ONE, ZERO], [ZERO, ONE]];

pub(crate) fn unitary_residual(u: &DMatrix<C64>) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let n = u.nrows();
    (u.adjoint() * u - DMatrix::<C64>::identity(n, n)).iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub(crate) fn basis_residual(b: &ControlBasis) -> f64 {
    let mut m = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let ip: C64 = (0..2).map(|k| b[i][k].conj() * b[j][k]).sum();
            let want = if i == j { ONE } else { ZERO };
            m = m.max((ip - want).norm());
        }
    }
    m
}

/// Random orthonormal control basis.
pub fn random_control_basis<R: Rng + ?Sized>(rng: &mut R) -> ControlBasis {
    let u = random_unitary(2, rng);
    [[u[(0, 0)], u[(1, 0)]], [u[(0, 1)], u[(1, 1)]]]
}

/// Parameters of a generalized quantum switch.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedSwitchSpec {
    pub p: BinaryDistribution,
    pub control_basis: ControlBasis,
    pub unitaries: SwitchUnitaries,
}

impl GeneralizedSwitchSpec {
    pub fn new(p: BinaryDistribution, control_basis: ControlBasis, unitaries: SwitchUnitaries) -> Result<Self> {
        let d = unitaries.dim();
        for u in unitaries.all() {
            if u.nrows() != d || u.ncols() != d {
                return Err(Error::InvalidArgument("switch unitaries must share one dimension".into()));
            }
            let r = unitary_residual(u);
            if r > 1e-10 {
                return Err(Error::NotUnitary { kind: "unitary", residual: r });
            }
        }
        let r = basis_residual(&control_basis);
        if r > 1e-12 {
            return Err(Error::BadControlBasis(r));
        }
        Ok(Self { p, control_basis, unitaries })
    }

    /// Identity unitaries in the computational control basis.
    pub fn with_distribution(p: BinaryDistribution, d: usize) -> Self {
        Self { p, control_basis: COMPUTATIONAL_BASIS, unitaries: SwitchUnitaries::identity(d) }
    }

    pub fn quantum_switch(d: usize) -> Self {
        Self::with_distribution(BinaryDistribution::uniform(), d)
    }

    /// Random constraint-satisfying spec with a random control basis.
    pub fn random_constrained<R: Rng + ?Sized>(p: BinaryDistribution, d: usize, rng: &mut R) -> Self {
        let unitaries = SwitchUnitaries::random_constrained(d, rng);
        Self { p, control_basis: random_control_basis(rng), unitaries }
    }

    pub fn dim(&self) -> usize {
        self.unitaries.dim()
    }
}

/// `[C, P, A_I, A_O, B_I, B_O, F]` with a qubit control and target dimension `d`.
pub fn process_factors(d: usize) -> Vec<FactorLabel> {
    Role::PROCESS
        .iter()
        .map(|&r| FactorLabel::of(r, if r == Role::Control { 2 } else { d }))
        .collect()
}

/// Target part of branch `i` over `[P, A_I, A_O, B_I, B_O, F]`.
pub(crate) fn branch_target(u: &SwitchUnitaries, i: usize) -> Vec<C64> {
    let d = u.dim();
    let mut v = Vec::with_capacity(d.pow(6));
    for p in 0..d {
        for ai in 0..d {
            for ao in 0..d {
                for bi in 0..d {
                    for bo in 0..d {
                        for f in 0..d {
                            v.push(if i == 0 {
                                u.u_pa[(ai, p)] * u.u_ab[(bi, ao)] * u.u_bf[(f, bo)]
                            } else {
                                u.u_pb[(bi, p)] * u.u_ba[(ai, bo)] * u.u_af[(f, ao)]
                            });
                        }
                    }
                }
            }
        }
    }
    v
}

fn with_control(control: &[C64; 2], target: &[C64], d: usize) -> PureProcess {
    let mut data = Vec::with_capacity(2 * target.len());
    for c in control {
        data.extend(target.iter().map(|t| c * t));
    }
    PureProcess::new(process_factors(d), data).expect("sizes match")
}

/// Unweighted branch `|Φ_i⟩|u_i⟩`, with norm² `d³`.
pub fn branch_vector(spec: &GeneralizedSwitchSpec, i: usize) -> PureProcess {
    with_control(&spec.control_basis[i], &branch_target(&spec.unitaries, i), spec.dim())
}

/// `|i⟩_C|𝟙_i⟩`, the canonical branch `i`.
pub fn canonical_branch(i: usize, d: usize) -> PureProcess {
    with_control(&COMPUTATIONAL_BASIS[i], &branch_target(&SwitchUnitaries::identity(d), i), d)
}

/// `|0⟩_C|𝟙₀⟩` (A before B) or `|1⟩_C|𝟙₁⟩` (B before A).
pub fn make_fixed_order(bit: u8, d: usize) -> Result<PureProcess> {
    if bit > 1 {
        return Err(Error::InvalidArgument(format!("bit must be 0 or 1, got {bit}")));
    }
    check_dim(d)?;
    Ok(canonical_branch(bit as usize, d))
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("target dimension must be at least 2, got {d}")));
    }
    Ok(())
}

/// `(|0⟩_C|𝟙₀⟩ + |1⟩_C|𝟙₁⟩)/√2`.
pub fn make_quantum_switch(d: usize) -> Result<PureProcess> {
    check_dim(d)?;
    make_generalized_switch(&GeneralizedSwitchSpec::quantum_switch(d))
}

/// `√p₀|Φ₀⟩|u₀⟩ + √p₁|Φ₁⟩|u₁⟩`. The constraints are not required.
pub fn make_generalized_switch(spec: &GeneralizedSwitchSpec) -> Result<PureProcess> {
    let b0 = branch_vector(spec, 0).scale_real(spec.p.p0.sqrt());
    let b1 = branch_vector(spec, 1).scale_real(spec.p.p1.sqrt());
    b0.add(&b1)
}

/// Superposition of the A-before-B identity process and the A-before-B
/// process with `u_ab` between the labs, controlled by `C`.
pub fn make_w_ent(d: usize, u_ab: &DMatrix<C64>) -> Result<PureProcess> {
    check_dim(d)?;
    if u_ab.nrows() != d || u_ab.ncols() != d {
        return Err(Error::InvalidArgument(format!("u_ab must be {d}x{d}")));
    }
    let r = unitary_residual(u_ab);
    if r > 1e-10 {
        return Err(Error::NotUnitary { kind: "unitary", residual: r });
    }
    // Identity up to a global phase would make the two branches equal.
    let phase = u_ab[(0, 0)];
    let trivial = phase.norm() > 0.5 && (u_ab - DMatrix::<C64>::identity(d, d) * phase).iter().all(|z| z.norm() < 1e-10);
    if trivial {
        return Err(Error::TrivialUnitary);
    }
    let mut second = SwitchUnitaries::identity(d);
    second.u_ab = u_ab.clone();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let b0 = with_control(&COMPUTATIONAL_BASIS[0], &branch_target(&SwitchUnitaries::identity(d), 0), d);
    let b1 = with_control(&COMPUTATIONAL_BASIS[1], &branch_target(&second, 0), d);
    b0.scale_real(s).add(&b1.scale_real(s))
}

/// Residuals `‖u_PA† u_BA u_BF† − 1‖_F` and `‖u_PB† u_AB u_AF† − 1‖_F`.
pub fn switch_constraint_residuals(u: &SwitchUnitaries) -> [f64; 2] {
    let d = u.dim();
    let id = DMatrix::<C64>::identity(d, d);
    let r0 = (u.u_pa.adjoint() * &u.u_ba * u.u_bf.adjoint() - &id).norm();
    let r1 = (u.u_pb.adjoint() * &u.u_ab * u.u_af.adjoint() - &id).norm();
    [r0, r1]
}

/// Whether both switch constraints hold within `tol`, with the residuals.
pub fn check_switch_constraints(spec: &GeneralizedSwitchSpec, tol: f64) -> (bool, [f64; 2]) {
    let r = switch_constraint_residuals(&spec.unitaries);
    (r[0] <= tol && r[1] <= tol, r)
}

/// Named single-qubit gates.
pub mod gates {
    use super::*;

    pub fn pauli_x() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    pub fn pauli_y() -> DMatrix<C64> {
        let i = C64::new(0.0, 1.0);
        DMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO])
    }

    pub fn pauli_z() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    pub fn hadamard() -> DMatrix<C64> {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        DMatrix::from_row_slice(2, 2, &[s, s, s, -s])
    }

    /// `I`, `X`, `Y`, `Z` or `H` (case-insensitive).
    pub fn by_name(name: &str) -> Option<DMatrix<C64>> {
        Some(match name.to_ascii_uppercase().as_str() {
            "I" | "ID" => DMatrix::identity(2, 2),
            "X" => pauli_x(),
            "Y" => pauli_y(),
            "Z" => pauli_z(),
            "H" => hadamard(),
            _ => return None,
        })
    }
}
