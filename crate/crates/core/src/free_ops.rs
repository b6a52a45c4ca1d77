//! Free operations on processes: local operations with ancillary
//! entanglement (LOAE), probabilistic lab swaps (PLS), and the
//! non-signaling conditions they obey.
//!
//! An operation is a list of terms `V_C^(j) ⊗ V_AB^(j)`. `V_C` lives on
//! `[C, C']`, `V_AB` on `[A_I, A_I', A_O, A_O', B_I, B_I', B_O, B_O']`.
//! Unprimed factors face the input process; primed factors face the new labs.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{FactorLabel, LabeledOperator, PureProcess, Role, C64, ZERO};
use crate::process::{
    is_compatible_order, is_valid_process, link_product, random_causal_process, random_separable_mixture,
    CausalOrder, LinearMap, ProcessMatrix,
};
use crate::random::{random_isometry, random_state, random_unitary, stream_rng};

const AI: &str = "A_I";
const AIP: &str = "A_I'";
const AO: &str = "A_O";
const AOP: &str = "A_O'";
const BI: &str = "B_I";
const BIP: &str = "B_I'";
const BO: &str = "B_O";
const BOP: &str = "B_O'";
const C: &str = "C";
const CP: &str = "C'";

/// `[A_I, A_I', A_O, A_O', B_I, B_I', B_O, B_O']` for target dimension `d`.
pub fn labs_factors(d: usize) -> Vec<FactorLabel> {
    [
        Role::AliceIn,
        Role::AliceInPrime,
        Role::AliceOut,
        Role::AliceOutPrime,
        Role::BobIn,
        Role::BobInPrime,
        Role::BobOut,
        Role::BobOutPrime,
    ]
    .iter()
    .map(|&r| FactorLabel::of(r, d))
    .collect()
}

/// `[C, C']` for a qubit control.
pub fn control_factors() -> Vec<FactorLabel> {
    vec![FactorLabel::of(Role::Control, 2), FactorLabel::of(Role::ControlPrime, 2)]
}

/// Which family an operation was built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreeClass {
    Loae,
    Pls,
    NsoChecked,
    MixedSequence,
}

/// Effect of a single term on a process with a definite order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderEffect {
    Preserve,
    Invert,
    Unknown,
}

/// One term `V_C ⊗ V_AB`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeTerm {
    pub control: LabeledOperator,
    pub labs: LabeledOperator,
    pub effect: OrderEffect,
}

/// A free operation in its term decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeOperation {
    terms: Vec<FreeTerm>,
    class: FreeClass,
    d: usize,
}

fn has_factors(op: &LabeledOperator, want: &[FactorLabel]) -> bool {
    op.factors().len() == want.len() && want.iter().all(|f| op.factor(&f.name).map(|g| g.dim) == Some(f.dim))
}

/// Max-abs deviation of `Σ_j Tr_{C'} V_C^(j)` from `1_C`.
pub fn control_instrument_residual(instrument: &[LabeledOperator]) -> Result<f64> {
    let mut sum = LabeledOperator::zeros(vec![FactorLabel::of(Role::Control, 2)])?;
    for v in instrument {
        if !has_factors(v, &control_factors()) {
            return Err(Error::InvalidArgument("control terms must live on [C, C']".into()));
        }
        sum = sum.add(&v.partial_trace(&[CP])?)?;
    }
    sum.max_abs_diff(&LabeledOperator::identity(vec![FactorLabel::of(Role::Control, 2)])?)
}

impl FreeOperation {
    /// Validate and wrap a term list. The control terms must sum to a
    /// trace-preserving map and each labs term must have the trace of a
    /// normalized comb.
    pub fn new(terms: Vec<FreeTerm>, class: FreeClass, d: usize) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("a free operation needs at least one term".into()));
        }
        let lf = labs_factors(d);
        for t in &terms {
            if !has_factors(&t.labs, &lf) {
                return Err(Error::InvalidArgument("labs terms must live on the eight lab factors".into()));
            }
            let tr = t.labs.trace().re;
            let want = (d * d * d * d) as f64;
            if (tr - want).abs() > 1e-8 * want {
                return Err(Error::InvalidArgument(format!("labs term has trace {tr}, expected {want}")));
            }
        }
        let controls: Vec<LabeledOperator> = terms.iter().map(|t| t.control.clone()).collect();
        let r = control_instrument_residual(&controls)?;
        if r > 1e-8 {
            return Err(Error::InvalidArgument(format!("control terms are not trace preserving ({r:.3e})")));
        }
        Ok(Self { terms, class, d })
    }

    /// The identity operation.
    pub fn identity(d: usize) -> Self {
        let labs = identity_labs_vector(d).outer();
        let term = FreeTerm { control: identity_control(), labs, effect: OrderEffect::Preserve };
        Self { terms: vec![term], class: FreeClass::Loae, d }
    }

    pub fn terms(&self) -> &[FreeTerm] {
        &self.terms
    }

    pub fn class(&self) -> FreeClass {
        self.class
    }

    pub fn target_dim(&self) -> usize {
        self.d
    }

    pub fn with_class(mut self, class: FreeClass) -> Self {
        self.class = class;
        self
    }

    /// `V = Σ_j V_AB^(j) ⊗ V_C^(j)` over the ten factors (labs first).
    pub fn assembled(&self) -> LabeledOperator {
        let mut acc: Option<LabeledOperator> = None;
        for t in &self.terms {
            let term = t.labs.tensor(&t.control).expect("disjoint factors");
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term).expect("same factors"),
            });
        }
        acc.expect("at least one term")
    }

    /// `V * W` with primed outputs renamed to the unprimed process slots.
    pub fn apply(&self, w: &ProcessMatrix) -> Result<ProcessMatrix> {
        apply_operator(&self.assembled(), w)
    }

    /// `(V_C^(j) ⊗ V_AB^(j)) * W` for a single term, unnormalized.
    pub fn apply_term(&self, j: usize, w: &ProcessMatrix) -> Result<ProcessMatrix> {
        let t = &self.terms[j];
        apply_operator(&t.labs.tensor(&t.control)?, w)
    }
}

fn unprime(f: &FactorLabel) -> Option<FactorLabel> {
    f.role.unprimed().map(|r| FactorLabel::of(r, f.dim))
}

/// Link an assembled ten-factor `V` with a process.
pub fn apply_operator(v: &LabeledOperator, w: &ProcessMatrix) -> Result<ProcessMatrix> {
    let out = link_product(v, w.op())?;
    ProcessMatrix::new(out.relabel(unprime)?)
}

/// `apply(v, w) = V * W`.
pub fn apply(v: &FreeOperation, w: &ProcessMatrix) -> Result<ProcessMatrix> {
    v.apply(w)
}

/// Apply a rank-one term `|v_C⟩⟩ ⊗ |v_AB⟩⟩` to a pure process.
pub fn apply_pure(control: &PureProcess, labs: &PureProcess, w: &PureProcess) -> Result<PureProcess> {
    let out = w.contract(labs)?.contract(control)?.relabel(unprime)?;
    let order: Vec<&str> = Role::PROCESS.iter().map(|r| r.canonical_name()).collect();
    out.permute_factors(&order)
}

/// CJ state of the identity channel on the control.
pub fn identity_control() -> LabeledOperator {
    kraus_control(&DMatrix::identity(2, 2))
}

/// `|K⟩⟩ = Σ_c |c⟩_C ⊗ K|c⟩_{C'}` for a Kraus operator `C → C'`.
pub fn kraus_control_vector(k: &DMatrix<C64>) -> PureProcess {
    let [c, cp]: [FactorLabel; 2] = control_factors().try_into().unwrap();
    LinearMap::wire(c, cp, k.clone()).and_then(|m| m.cj_vector()).expect("2x2 Kraus operator")
}

pub fn kraus_control(k: &DMatrix<C64>) -> LabeledOperator {
    kraus_control_vector(k).outer()
}

/// Random control instrument whose outcome probabilities do not depend on
/// the control state: `V_C^(j) = q_j |U_j⟩⟩⟨⟨U_j|` with random weights and
/// Haar unitaries. Such instruments cannot signal from `C` to the labs.
pub fn random_control_instrument<R: Rng + ?Sized>(outcomes: usize, rng: &mut R) -> Vec<LabeledOperator> {
    let w: Vec<f64> = (0..outcomes).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|q| kraus_control(&random_unitary(2, rng)).scale_real(q / total)).collect()
}

/// Generic control instrument from a random isometry `C → C' ⊗ outcome`.
/// Its outcome statistics depend on the control state.
pub fn random_kraus_instrument<R: Rng + ?Sized>(outcomes: usize, rng: &mut R) -> Vec<LabeledOperator> {
    let v = random_isometry(2, 2 * outcomes, rng);
    (0..outcomes)
        .map(|o| {
            let k = DMatrix::from_fn(2, 2, |cp, c| v[(cp * outcomes + o, c)]);
            kraus_control(&k)
        })
        .collect()
}

/// `|𝟙_AB⟩⟩ = |𝟙⟩_{A_I A_I'} |𝟙⟩_{A_O' A_O} |𝟙⟩_{B_I B_I'} |𝟙⟩_{B_O' B_O}`.
pub fn identity_labs_vector(d: usize) -> PureProcess {
    labs_vector(d, |ai, aip, ao, aop, bi, bip, bo, bop| ai == aip && ao == aop && bi == bip && bo == bop)
}

/// `|s_AB⟩⟩`: routes `A_I → B_I'`, `B_I → A_I'`, `A_O' → B_O`, `B_O' → A_O`.
pub fn swap_labs_vector(d: usize) -> PureProcess {
    labs_vector(d, |ai, aip, ao, aop, bi, bip, bo, bop| ai == bip && bi == aip && aop == bo && bop == ao)
}

/// Ancilla-free labs vector applying `u_ai: A_I → A_I'`, `u_ao: A_O' → A_O`,
/// `u_bi: B_I → B_I'` and `u_bo: B_O' → B_O`.
pub fn local_unitary_labs_vector(
    u_ai: &DMatrix<C64>,
    u_ao: &DMatrix<C64>,
    u_bi: &DMatrix<C64>,
    u_bo: &DMatrix<C64>,
) -> PureProcess {
    let d = u_ai.nrows();
    let mut data = Vec::with_capacity(d.pow(8));
    for i in 0..d.pow(8) {
        let mut x = [0usize; 8];
        let mut r = i;
        for slot in x.iter_mut().rev() {
            *slot = r % d;
            r /= d;
        }
        let [ai, aip, ao, aop, bi, bip, bo, bop] = x;
        data.push(u_ai[(aip, ai)] * u_ao[(ao, aop)] * u_bi[(bip, bi)] * u_bo[(bo, bop)]);
    }
    PureProcess::new(labs_factors(d), data).expect("d^8 entries")
}

#[allow(clippy::too_many_arguments)]
fn labs_vector(d: usize, pick: impl Fn(usize, usize, usize, usize, usize, usize, usize, usize) -> bool) -> PureProcess {
    let mut data = Vec::with_capacity(d.pow(8));
    for i in 0..d.pow(8) {
        let mut x = [0usize; 8];
        let mut r = i;
        for slot in x.iter_mut().rev() {
            *slot = r % d;
            r /= d;
        }
        let on = pick(x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]);
        data.push(if on { C64::new(1.0, 0.0) } else { ZERO });
    }
    PureProcess::new(labs_factors(d), data).expect("d^8 entries")
}

/// One LOAE term: a shared ancilla state and the four local unitaries.
///
/// `u_ai` acts on `A_I ⊗ Ã → A_I' ⊗ Ã`, `u_ao` on `A_O' ⊗ Ã → A_O ⊗ Ã`,
/// and likewise for Bob. `psi` lives on `Ã ⊗ B̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoaeTerm {
    pub ancilla_dims: (usize, usize),
    pub psi: Vec<C64>,
    pub u_ai: DMatrix<C64>,
    pub u_ao: DMatrix<C64>,
    pub u_bi: DMatrix<C64>,
    pub u_bo: DMatrix<C64>,
}

impl LoaeTerm {
    /// All unitaries identity, one-dimensional ancillas.
    pub fn trivial(d: usize) -> Self {
        let i = DMatrix::identity(d, d);
        Self {
            ancilla_dims: (1, 1),
            psi: vec![C64::new(1.0, 0.0)],
            u_ai: i.clone(),
            u_ao: i.clone(),
            u_bi: i.clone(),
            u_bo: i,
        }
    }

    /// Ancilla-free term with one unitary per lab wire.
    pub fn local_unitaries(u_ai: DMatrix<C64>, u_ao: DMatrix<C64>, u_bi: DMatrix<C64>, u_bo: DMatrix<C64>) -> Self {
        Self { ancilla_dims: (1, 1), psi: vec![C64::new(1.0, 0.0)], u_ai, u_ao, u_bi, u_bo }
    }

    /// Random unitaries and ancilla state with ancillas of dimension `2d²` per side.
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let na = 2 * d * d;
        let nb = 2 * d * d;
        Self {
            ancilla_dims: (na, nb),
            psi: random_state(na * nb, rng),
            u_ai: random_unitary(d * na, rng),
            u_ao: random_unitary(d * na, rng),
            u_bi: random_unitary(d * nb, rng),
            u_bo: random_unitary(d * nb, rng),
        }
    }
}

/// Per-term LOAE data.
#[derive(Clone, Debug, PartialEq)]
pub struct LoaeSpec {
    pub d: usize,
    pub terms: Vec<LoaeTerm>,
}

impl LoaeSpec {
    pub fn trivial(d: usize) -> Self {
        Self { d, terms: vec![LoaeTerm::trivial(d)] }
    }

    pub fn random<R: Rng + ?Sized>(d: usize, n_terms: usize, rng: &mut R) -> Self {
        Self { d, terms: (0..n_terms).map(|_| LoaeTerm::random(d, rng)).collect() }
    }
}

fn check_unitary(u: &DMatrix<C64>, dim: usize) -> Result<()> {
    if u.nrows() != dim || u.ncols() != dim {
        return Err(Error::InvalidArgument(format!("expected a {dim}x{dim} unitary, got {}x{}", u.nrows(), u.ncols())));
    }
    let r = crate::switch::unitary_residual(u);
    if r > 1e-10 {
        return Err(Error::NotUnitary { kind: "unitary", residual: r });
    }
    Ok(())
}

/// Local comb vector for one lab over `[X_I, X_I', X_O, X_O', anc_in, anc_out]`.
fn local_comb(d: usize, na: usize, u_in: &DMatrix<C64>, u_out: &DMatrix<C64>, names: [&str; 6]) -> PureProcess {
    let mut data = Vec::with_capacity(d.pow(4) * na * na);
    for xi in 0..d {
        for xip in 0..d {
            for xo in 0..d {
                for xop in 0..d {
                    for a_in in 0..na {
                        for a_out in 0..na {
                            let mut acc = ZERO;
                            for a1 in 0..na {
                                acc += u_out[(xo * na + a_out, xop * na + a1)] * u_in[(xip * na + a1, xi * na + a_in)];
                            }
                            data.push(acc);
                        }
                    }
                }
            }
        }
    }
    let dims = [d, d, d, d, na, na];
    let factors = names.iter().zip(dims).map(|(n, dim)| FactorLabel::ancilla(*n, dim)).collect();
    PureProcess::new(factors, data).expect("sizes match")
}

/// `V_AB = Tr_{Ã B̃} |χ⟩⟨χ|` for one LOAE term.
pub fn loae_labs_operator(d: usize, term: &LoaeTerm) -> Result<LabeledOperator> {
    let (na, nb) = term.ancilla_dims;
    if term.psi.len() != na * nb {
        return Err(Error::InvalidArgument(format!(
            "ancilla state has {} entries, dims need {}",
            term.psi.len(),
            na * nb
        )));
    }
    let norm: f64 = term.psi.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(norm.sqrt()));
    }
    check_unitary(&term.u_ai, d * na)?;
    check_unitary(&term.u_ao, d * na)?;
    check_unitary(&term.u_bi, d * nb)?;
    check_unitary(&term.u_bo, d * nb)?;

    let ka = local_comb(d, na, &term.u_ai, &term.u_ao, [AI, AIP, AO, AOP, "anc_a_in", "anc_a_out"]);
    let kb = local_comb(d, nb, &term.u_bi, &term.u_bo, [BI, BIP, BO, BOP, "anc_b_in", "anc_b_out"]);
    let psi = PureProcess::new(
        vec![FactorLabel::ancilla("anc_a_in", na), FactorLabel::ancilla("anc_b_in", nb)],
        term.psi.clone(),
    )?;
    let chi = psi.contract(&ka)?.contract(&kb)?;
    let v = chi.reduced(&["anc_a_out", "anc_b_out"])?;
    let lf = labs_factors(d);
    let order: Vec<&str> = lf.iter().map(|f| f.name.as_str()).collect();
    v.permute_factors(&order)?.relabel(|f| lf.iter().find(|g| g.name == f.name).cloned())
}

/// Build an LOAE operation with one labs term per control term.
pub fn build_loae(spec: &LoaeSpec, control_instrument: &[LabeledOperator]) -> Result<FreeOperation> {
    if spec.terms.len() != control_instrument.len() {
        return Err(Error::InvalidArgument(format!(
            "{} LOAE terms but {} control terms",
            spec.terms.len(),
            control_instrument.len()
        )));
    }
    let terms = spec
        .terms
        .iter()
        .zip(control_instrument)
        .map(|(t, c)| {
            Ok(FreeTerm { control: c.clone(), labs: loae_labs_operator(spec.d, t)?, effect: OrderEffect::Preserve })
        })
        .collect::<Result<Vec<_>>>()?;
    FreeOperation::new(terms, FreeClass::Loae, spec.d)
}

/// Random LOAE with a random two-outcome control instrument.
pub fn random_loae<R: Rng + ?Sized>(d: usize, rng: &mut R) -> FreeOperation {
    let spec = LoaeSpec::random(d, 2, rng);
    let instrument = random_control_instrument(2, rng);
    build_loae(&spec, &instrument).expect("random LOAE is well formed")
}

/// Build a PLS operation. Each entry is `(p_j, swap_j)`; without explicit
/// control terms, `V_C^(j) = p_j · cj(1)`.
pub fn build_pls(d: usize, distribution: &[(f64, bool)], control: Option<&[LabeledOperator]>) -> Result<FreeOperation> {
    if distribution.is_empty() {
        return Err(Error::InvalidArgument("empty PLS distribution".into()));
    }
    if distribution.iter().any(|(p, _)| p.is_nan() || *p < 0.0) {
        return Err(Error::InvalidArgument("PLS probabilities must be non-negative".into()));
    }
    let controls: Vec<LabeledOperator> = match control {
        Some(c) => {
            if c.len() != distribution.len() {
                return Err(Error::InvalidArgument("one control term per PLS term required".into()));
            }
            c.to_vec()
        }
        None => {
            let total: f64 = distribution.iter().map(|(p, _)| p).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("PLS probabilities sum to {total}")));
            }
            distribution.iter().map(|(p, _)| identity_control().scale_real(*p)).collect()
        }
    };
    let (id, sw) = (identity_labs_vector(d).outer(), swap_labs_vector(d).outer());
    let terms = distribution
        .iter()
        .zip(controls)
        .map(|(&(_, swap), control)| FreeTerm {
            control,
            labs: if swap { sw.clone() } else { id.clone() },
            effect: if swap { OrderEffect::Invert } else { OrderEffect::Preserve },
        })
        .collect();
    FreeOperation::new(terms, FreeClass::Pls, d)
}

fn scaled_residual(v: &LabeledOperator, lhs: &[&str], rhs: &[&str]) -> f64 {
    let a = v.subindex(lhs).expect("V factors");
    let b = v.subindex(rhs).expect("V factors");
    a.max_abs_diff(&b).expect("same factors") / v.max_abs()
}

fn residual_set(v: &LabeledOperator, pairs: &[(&[&str], &[&str])], tol: f64) -> (bool, [f64; 4]) {
    let mut r = [0.0; 4];
    for (slot, (l, rr)) in r.iter_mut().zip(pairs) {
        *slot = scaled_residual(v, l, rr);
    }
    (r.iter().all(|x| *x <= tol), r)
}

/// Non-signaling conditions on an assembled `V`, residuals scaled by its max-abs entry.
pub fn check_nso_operator(v: &LabeledOperator, tol: f64) -> (bool, [f64; 4]) {
    residual_set(
        v,
        &[(&[AO], &[AOP, AO]), (&[BO], &[BOP, BO]), (&[AIP, AO], &[AI, AIP, AO]), (&[BIP, BO], &[BI, BIP, BO])],
        tol,
    )
}

pub fn check_nso(v: &FreeOperation, tol: f64) -> (bool, [f64; 4]) {
    check_nso_operator(&v.assembled(), tol)
}

/// The order-swapping counterparts of the non-signaling conditions.
pub fn check_swap_conditions_operator(v: &LabeledOperator, tol: f64) -> (bool, [f64; 4]) {
    residual_set(
        v,
        &[(&[AO], &[BOP, AO]), (&[BO], &[AOP, BO]), (&[BIP, AO], &[AI, BIP, AO]), (&[AIP, BO], &[BI, AIP, BO])],
        tol,
    )
}

pub fn check_swap_conditions(v: &FreeOperation, tol: f64) -> (bool, [f64; 4]) {
    check_swap_conditions_operator(&v.assembled(), tol)
}

/// Normalization of an assembled `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationReport {
    pub trace_value: f64,
    pub trace_expected: f64,
    /// Inputs/outputs condition, scaled.
    pub io_residual: f64,
    /// `_{C'}V = _{CC'}V`, scaled.
    pub control_residual: f64,
    /// Labs-only counterpart of the inputs/outputs condition, scaled.
    pub labs_residual: f64,
    pub pass: bool,
}

pub fn check_normalization(v: &FreeOperation, tol: f64) -> NormalizationReport {
    let op = v.assembled();
    let d = v.target_dim() as f64;
    let trace_expected = d.powi(4) * 2.0;
    let trace_value = op.trace().re;
    let io_residual =
        scaled_residual(&op, &[AIP, AO, BIP, BO, CP], &[AI, AOP, BI, BOP, C, AIP, AO, BIP, BO, CP]);
    let control_residual = scaled_residual(&op, &[CP], &[C, CP]);
    let labs_residual = scaled_residual(&op, &[AIP, AO, BIP, BO], &[AI, AOP, BI, BOP, AIP, AO, BIP, BO]);
    let pass = (trace_value - trace_expected).abs() <= tol * trace_expected
        && io_residual <= tol
        && control_residual <= tol
        && labs_residual <= tol;
    NormalizationReport { trace_value, trace_expected, io_residual, control_residual, labs_residual, pass }
}

/// Operations applied one after another.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeSequence {
    ops: Vec<FreeOperation>,
}

pub fn sequence(ops: Vec<FreeOperation>) -> Result<FreeSequence> {
    if let Some(first) = ops.first() {
        if let Some(bad) = ops.iter().find(|o| o.target_dim() != first.target_dim()) {
            return Err(Error::DimensionMismatch {
                name: "target".into(),
                left: first.target_dim(),
                right: bad.target_dim(),
            });
        }
    }
    Ok(FreeSequence { ops })
}

impl FreeSequence {
    pub fn ops(&self) -> &[FreeOperation] {
        &self.ops
    }

    pub fn apply(&self, w: &ProcessMatrix) -> Result<ProcessMatrix> {
        let mut cur = w.clone();
        for op in &self.ops {
            cur = op.apply(&cur)?;
        }
        Ok(cur)
    }
}

/// Worst-case residuals of the preservation checks over random inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PreservationReport {
    pub samples: usize,
    pub max_validity_residual: f64,
    pub max_trace_residual: f64,
    /// Worst order residual over terms with a known effect, relative to max-abs entry.
    pub max_order_residual: f64,
    pub failures: usize,
    pub tol: f64,
    pub pass: bool,
}

struct SampleOutcome {
    validity: f64,
    trace: f64,
    order: f64,
    ok: bool,
}

/// Apply `v` to random valid processes and check validity, trace, and order
/// behavior term by term.
///
/// Sample `i` uses stream `i` of `seed`. Samples with `i % 3 == 2` are
/// separable mixtures of both orders and are only checked for validity and
/// trace; the others have a definite order.
pub fn preservation_suite(v: &FreeOperation, samples: usize, seed: u64) -> PreservationReport {
    let tol = 1e-8;
    let d = v.target_dim();
    let assembled = v.assembled();
    let term_ops: Vec<LabeledOperator> =
        v.terms().iter().map(|t| t.labs.tensor(&t.control).expect("disjoint factors")).collect();
    let outcomes: Vec<SampleOutcome> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let (w, order) = match i % 3 {
                0 => (random_causal_process(CausalOrder::AToB, d, &mut rng), Some(CausalOrder::AToB)),
                1 => (random_causal_process(CausalOrder::BToA, d, &mut rng), Some(CausalOrder::BToA)),
                _ => {
                    let q: f64 = rng.random();
                    (random_separable_mixture(q, d, &mut rng), None)
                }
            };
            let out = apply_operator(&assembled, &w).expect("dimensions match");
            let rep = is_valid_process(&out, tol);
            let validity = rep.residuals.iter().copied().fold(rep.positivity_defect / rep.scale, f64::max);
            let mut order_res = 0.0f64;
            let mut ok = rep.pass;
            if let Some(o) = order {
                for (j, t) in v.terms().iter().enumerate() {
                    let want = match t.effect {
                        OrderEffect::Preserve => o,
                        OrderEffect::Invert => o.flipped(),
                        OrderEffect::Unknown => continue,
                    };
                    let tw = apply_operator(&term_ops[j], &w).expect("dimensions match");
                    let scale = tw.op().max_abs();
                    if scale == 0.0 {
                        continue;
                    }
                    let (_, r) = is_compatible_order(&tw, want, tol);
                    order_res = order_res.max(r / scale);
                }
                ok &= order_res <= tol;
            }
            SampleOutcome { validity, trace: rep.trace_residual, order: order_res, ok }
        })
        .collect();
    let max = |f: fn(&SampleOutcome) -> f64| outcomes.iter().map(f).fold(0.0, f64::max);
    let failures = outcomes.iter().filter(|o| !o.ok).count();
    PreservationReport {
        samples,
        max_validity_residual: max(|o| o.validity),
        max_trace_residual: max(|o| o.trace),
        max_order_residual: max(|o| o.order),
        failures,
        tol,
        pass: failures == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::is_valid_process;
    use crate::switch::{gates, make_fixed_order, make_quantum_switch, SwitchUnitaries};

    fn pm(w: &PureProcess) -> ProcessMatrix {
        ProcessMatrix::from_pure(w).unwrap()
    }

    #[test]
    fn identity_operation_is_identity() {
        let w = pm(&make_quantum_switch(2).unwrap());
        let out = FreeOperation::identity(2).apply(&w).unwrap();
        assert!(out.op().max_abs_diff(w.op()).unwrap() < 1e-12);
        let trivial = build_loae(&LoaeSpec::trivial(2), &[identity_control()]).unwrap();
        assert_eq!(trivial.assembled(), FreeOperation::identity(2).assembled());
    }

    #[test]
    fn pauli_on_alice_input_matches_direct_circuit() {
        let x = gates::pauli_x();
        let i = DMatrix::identity(2, 2);
        let spec = LoaeSpec { d: 2, terms: vec![LoaeTerm::local_unitaries(x.clone(), i.clone(), i.clone(), i)] };
        let v = build_loae(&spec, &[identity_control()]).unwrap();
        let w = make_fixed_order(0, 2).unwrap();
        let out = v.apply(&pm(&w)).unwrap();
        let mut u = SwitchUnitaries::identity(2);
        u.u_pa = x;
        let direct = crate::switch::branch_vector(
            &crate::GeneralizedSwitchSpec::new(crate::BinaryDistribution::new(1.0, 0.0).unwrap(), crate::switch::COMPUTATIONAL_BASIS, u)
                .unwrap(),
            0,
        );
        assert!(out.op().max_abs_diff(&direct.outer()).unwrap() < 1e-12);
    }

    #[test]
    fn pure_application_matches_operator_application() {
        let w = make_quantum_switch(2).unwrap();
        let out = apply_pure(&kraus_control_vector(&gates::hadamard()), &swap_labs_vector(2), &w).unwrap();
        let v = build_pls(2, &[(1.0, true)], Some(&[kraus_control(&gates::hadamard())])).unwrap();
        let full = v.apply(&pm(&w)).unwrap();
        assert!(full.op().max_abs_diff(&out.outer()).unwrap() < 1e-12);
    }

    #[test]
    fn swap_inverts_order() {
        let w0 = make_fixed_order(0, 2).unwrap();
        let out = apply_pure(&kraus_control_vector(&DMatrix::identity(2, 2)), &swap_labs_vector(2), &w0).unwrap();
        let expect = make_fixed_order(1, 2).unwrap();
        // Control stays |0>; the target becomes the B-before-A identity process.
        let d = expect.dim() / 2;
        assert!(out.data()[d..].iter().all(|z| z.norm() < 1e-15));
        for i in 0..d {
            assert!((out.data()[i] - expect.data()[d + i]).norm() < 1e-15);
        }
    }

    #[test]
    fn mixed_pls_gives_valid_process() {
        let v = build_pls(2, &[(0.5, false), (0.5, true)], None).unwrap();
        let out = v.apply(&pm(&make_fixed_order(0, 2).unwrap())).unwrap();
        assert!(is_valid_process(&out, 1e-9).pass);
    }

    #[test]
    fn nso_and_swap_conditions() {
        let id = build_pls(2, &[(1.0, false)], None).unwrap();
        assert!(check_nso(&id, 1e-9).0);
        let sw = build_pls(2, &[(1.0, true)], None).unwrap();
        let (ok, r) = check_nso(&sw, 1e-9);
        assert!(!ok);
        assert!(r.iter().all(|x| *x > 1e-3), "{r:?}");
        assert!(check_swap_conditions(&sw, 1e-9).0);
    }

    #[test]
    fn random_loae_is_nso_and_normalized() {
        let mut rng = stream_rng(21, 0);
        let v = random_loae(2, &mut rng);
        let (ok, r) = check_nso(&v, 1e-9);
        assert!(ok, "{r:?}");
        let n = check_normalization(&v, 1e-9);
        assert!(n.pass, "{n:?}");
    }

    #[test]
    fn signaling_control_instrument_breaks_validity() {
        let mut rng = stream_rng(23, 0);
        let spec = LoaeSpec::random(2, 2, &mut rng);
        let v = build_loae(&spec, &random_kraus_instrument(2, &mut rng)).unwrap();
        assert!(check_normalization(&v, 1e-9).control_residual > 1e-3);
        let w = random_causal_process(CausalOrder::AToB, 2, &mut rng);
        assert!(!is_valid_process(&v.apply(&w).unwrap(), 1e-8).pass);
    }

    #[test]
    fn assembled_is_sum_of_terms() {
        let mut rng = stream_rng(22, 0);
        let v = random_loae(2, &mut rng);
        let a = v.assembled();
        let t0 = v.terms()[0].labs.tensor(&v.terms()[0].control).unwrap();
        let t1 = v.terms()[1].labs.tensor(&v.terms()[1].control).unwrap();
        assert_eq!(a, t0.add(&t1).unwrap());
    }

    #[test]
    fn malformed_operations_rejected() {
        assert!(build_pls(2, &[], None).is_err());
        assert!(build_pls(2, &[(0.3, false)], None).is_err());
        let spec = LoaeSpec::trivial(2);
        assert!(build_loae(&spec, &[]).is_err());
        let mut bad = LoaeSpec::trivial(2);
        bad.terms[0].u_ai = DMatrix::from_element(2, 2, C64::new(1.0, 0.0));
        assert!(matches!(build_loae(&bad, &[identity_control()]), Err(Error::NotUnitary { .. })));
        let mut bad = LoaeSpec::trivial(2);
        bad.terms[0].psi = vec![C64::new(1.0, 0.0); 2];
        assert!(build_loae(&bad, &[identity_control()]).is_err());
    }

    #[test]
    fn sequence_of_identities() {
        let w = pm(&make_quantum_switch(2).unwrap());
        let s = sequence(vec![FreeOperation::identity(2), FreeOperation::identity(2)]).unwrap();
        assert!(s.apply(&w).unwrap().op().max_abs_diff(w.op()).unwrap() < 1e-12);
        assert!(sequence(vec![FreeOperation::identity(2), FreeOperation::identity(3)]).is_err());
    }
}
