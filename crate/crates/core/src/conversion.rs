//! Single-copy conversion between generalized switches: the deterministic
//! protocol for majorized distributions and the probabilistic local filter.
//!
//! The deterministic plan runs in three stages. Local unitaries first bring
//! both source branches to the canonical `|Φ_i⟩|𝟙_i⟩` form, then a control
//! instrument with an identity or swap of the labs reshapes the weights, and
//! a last set of local unitaries installs the target wiring. Swapping labs
//! only maps branch content onto the other branch when the branches are
//! canonical, which is why the swap sits between the two unitary stages.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::free_ops::{
    build_loae, build_pls, identity_control, identity_labs_vector, kraus_control_vector, local_unitary_labs_vector,
    sequence, swap_labs_vector, FreeOperation, FreeSequence, LoaeSpec, LoaeTerm,
};
use crate::linalg::{FactorLabel, LabeledOperator, PureProcess, Role, C64, ZERO};
use crate::process::ProcessMatrix;
use crate::switch::{check_switch_constraints, make_generalized_switch, ControlBasis, GeneralizedSwitchSpec};

pub use crate::switch::BinaryDistribution;

const MAJORIZATION_SLACK: f64 = 1e-12;
const CONSTRAINT_TOL: f64 = 1e-9;
const SOURCE_FIDELITY_TOL: f64 = 1e-9;

/// Whether `p ≼ q`, i.e. `max p ≤ max q`.
pub fn majorizes(q: BinaryDistribution, p: BinaryDistribution) -> bool {
    p.max() <= q.max() + MAJORIZATION_SLACK
}

/// Weights `(λ_id, λ_sw)` with `λ_id·p′ + λ_sw·swap(p′) = p`.
pub fn solve_lambda(p: BinaryDistribution, p_prime: BinaryDistribution) -> Result<(f64, f64)> {
    let not_majorized = || Error::NotMajorized { p0: p.p0, p1: p.p1, q0: p_prime.p0, q1: p_prime.p1 };
    if !majorizes(p_prime, p) {
        return Err(not_majorized());
    }
    let gap = p_prime.p0 - p_prime.p1;
    if gap.abs() <= MAJORIZATION_SLACK {
        return Ok((1.0, 0.0));
    }
    let l = (p.p0 - p_prime.p1) / gap;
    if !(-MAJORIZATION_SLACK..=1.0 + MAJORIZATION_SLACK).contains(&l) {
        return Err(not_majorized());
    }
    let l = l.clamp(0.0, 1.0);
    Ok((l, 1.0 - l))
}

/// One unitary per lab wire: `a_in: A_I → A_I'`, `a_out: A_O' → A_O`, and
/// likewise for Bob.
#[derive(Clone, Debug, PartialEq)]
pub struct LabUnitaries {
    pub a_in: DMatrix<C64>,
    pub a_out: DMatrix<C64>,
    pub b_in: DMatrix<C64>,
    pub b_out: DMatrix<C64>,
}

impl LabUnitaries {
    /// Unitaries that map the spec's branches onto `|Φ_i⟩|𝟙_i⟩`.
    pub fn canonicalizing(spec: &GeneralizedSwitchSpec) -> Self {
        let u = &spec.unitaries;
        Self { a_in: u.u_pa.adjoint(), a_out: u.u_af.adjoint(), b_in: u.u_pb.adjoint(), b_out: u.u_bf.adjoint() }
    }

    /// Unitaries that map `|Φ_i⟩|𝟙_i⟩` onto the spec's branches.
    pub fn installing(spec: &GeneralizedSwitchSpec) -> Self {
        let u = &spec.unitaries;
        Self { a_in: u.u_pa.clone(), a_out: u.u_af.clone(), b_in: u.u_pb.clone(), b_out: u.u_bf.clone() }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Self) -> Self {
        Self {
            a_in: &next.a_in * &self.a_in,
            a_out: &self.a_out * &next.a_out,
            b_in: &next.b_in * &self.b_in,
            b_out: &self.b_out * &next.b_out,
        }
    }

    pub fn labs_vector(&self) -> PureProcess {
        local_unitary_labs_vector(&self.a_in, &self.a_out, &self.b_in, &self.b_out)
    }

    pub fn loae_term(&self) -> LoaeTerm {
        LoaeTerm::local_unitaries(self.a_in.clone(), self.a_out.clone(), self.b_in.clone(), self.b_out.clone())
    }
}

/// Deterministic conversion from one generalized switch to another.
#[derive(Clone, Debug, PartialEq)]
pub struct ConversionPlan {
    pub source: GeneralizedSwitchSpec,
    pub target: GeneralizedSwitchSpec,
    /// Stage one: source wiring to canonical branches.
    pub pre: LabUnitaries,
    /// Stage three: canonical branches to target wiring.
    pub post: LabUnitaries,
    /// `pre` then `post` collapsed into one unitary per wire. This alone
    /// converts the source wiring into the target wiring.
    pub step1_unitaries: LabUnitaries,
    /// `(λ_id, λ_sw)`.
    pub lambda: (f64, f64),
    /// Control vectors on `[C, C']`, identity outcome first.
    pub vc_terms: [PureProcess; 2],
    /// Identity and swap labs vectors.
    pub vab_terms: [PureProcess; 2],
}

fn check_constraints(spec: &GeneralizedSwitchSpec) -> Result<()> {
    let (ok, r) = check_switch_constraints(spec, CONSTRAINT_TOL);
    if !ok {
        return Err(Error::ConstraintsViolated(r[0], r[1]));
    }
    Ok(())
}

fn bra(v: &[C64; 2]) -> [C64; 2] {
    [v[0].conj(), v[1].conj()]
}

/// `√λ Σ_i √(p′_{π(i)}/p_i) |Φ′_{π(i)}⟩⟨Φ_i|`. A branch with `p_i = 0`
/// gets coefficient 1 so that the instrument stays trace preserving.
fn control_kraus(
    lambda: f64,
    p: BinaryDistribution,
    pp: BinaryDistribution,
    from: &ControlBasis,
    to: &ControlBasis,
    swap: bool,
) -> DMatrix<C64> {
    let mut k = DMatrix::from_element(2, 2, ZERO);
    for i in 0..2 {
        let pi = if swap { 1 - i } else { i };
        let coef = if p.get(i) > 0.0 { (pp.get(pi) / p.get(i)).sqrt() } else { 1.0 };
        let b = bra(&from[i]);
        for r in 0..2 {
            for c in 0..2 {
                k[(r, c)] += to[pi][r] * b[c] * coef;
            }
        }
    }
    k * C64::new(lambda.sqrt(), 0.0)
}

/// Plan the deterministic conversion of `source` into `target`.
pub fn plan_deterministic(source: &GeneralizedSwitchSpec, target: &GeneralizedSwitchSpec) -> Result<ConversionPlan> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch { name: "target".into(), left: source.dim(), right: target.dim() });
    }
    check_constraints(source)?;
    check_constraints(target)?;
    let lambda = solve_lambda(source.p, target.p)?;
    let d = source.dim();
    let pre = LabUnitaries::canonicalizing(source);
    let post = LabUnitaries::installing(target);
    let step1_unitaries = pre.then(&post);
    let (from, to) = (&source.control_basis, &target.control_basis);
    let vc_terms = [
        kraus_control_vector(&control_kraus(lambda.0, source.p, target.p, from, to, false)),
        kraus_control_vector(&control_kraus(lambda.1, source.p, target.p, from, to, true)),
    ];
    Ok(ConversionPlan {
        source: source.clone(),
        target: target.clone(),
        pre,
        post,
        step1_unitaries,
        lambda,
        vc_terms,
        vab_terms: [identity_labs_vector(d), swap_labs_vector(d)],
    })
}

/// Contract `v` into `w` and rename its primed outputs to process slots.
fn link_pure(v: &PureProcess, w: &PureProcess) -> Result<PureProcess> {
    let out = w.contract(v)?.relabel(|f| f.role.unprimed().map(|r| FactorLabel::of(r, f.dim)))?;
    let order: Vec<&str> = Role::PROCESS.iter().map(|r| r.canonical_name()).collect();
    out.permute_factors(&order)
}

impl ConversionPlan {
    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    /// Fails with `SpecMismatch` unless `w` is the source switch up to scale and phase.
    pub fn check_source(&self, w: &PureProcess) -> Result<()> {
        let expected = make_generalized_switch(&self.source)?;
        let f = expected.fidelity(w).map_err(|_| Error::SpecMismatch(0.0))?;
        if f.is_nan() || f < 1.0 - SOURCE_FIDELITY_TOL {
            return Err(Error::SpecMismatch(f));
        }
        Ok(())
    }

    /// Unnormalized output of each outcome `π ∈ {id, sw}`. For the source
    /// switch these are `√λ_π |w′⟩`.
    pub fn branch_outputs(&self, w: &PureProcess) -> Result<[PureProcess; 2]> {
        self.check_source(w)?;
        let canonical = link_pure(&self.pre.labs_vector(), w)?;
        let post = self.post.labs_vector();
        let branch = |pi: usize| -> Result<PureProcess> {
            let reshaped = link_pure(&self.vab_terms[pi], &link_pure(&self.vc_terms[pi], &canonical)?)?;
            link_pure(&post, &reshaped)
        };
        Ok([branch(0)?, branch(1)?])
    }

    /// The control instrument with the identity/swap labs terms.
    pub fn control_operation(&self) -> Result<FreeOperation> {
        let controls = [self.vc_terms[0].outer(), self.vc_terms[1].outer()];
        build_pls(self.dim(), &[(self.lambda.0, false), (self.lambda.1, true)], Some(&controls))
    }

    /// The three stages as free operations on process matrices.
    pub fn to_sequence(&self) -> Result<FreeSequence> {
        let d = self.dim();
        let stage = |u: &LabUnitaries| build_loae(&LoaeSpec { d, terms: vec![u.loae_term()] }, &[identity_control()]);
        sequence(vec![stage(&self.pre)?, self.control_operation()?, stage(&self.post)?])
    }
}

/// Run the plan on `w`, summing both outcomes.
pub fn execute(plan: &ConversionPlan, w: &PureProcess) -> Result<ProcessMatrix> {
    let [a, b] = plan.branch_outputs(w)?;
    ProcessMatrix::new(a.outer().add(&b.outer())?)
}

/// Two-outcome local filter on the control, followed by a deterministic
/// conversion when it succeeds.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterPlan {
    pub x: f64,
    pub y: f64,
    /// Analytic probability of outcome 0.
    pub p_success: f64,
    /// Kraus operators `C → C'` of both outcomes.
    pub kraus: [DMatrix<C64>; 2],
    /// CJ vectors of the Kraus operators on `[C, C']`.
    pub povm_vectors: [PureProcess; 2],
    /// Source switch after a successful filter. `None` when success is impossible.
    pub aux: Option<GeneralizedSwitchSpec>,
    pub conversion: Option<ConversionPlan>,
}

fn filter_weight(num: f64, den: f64, ratio: f64) -> f64 {
    if den <= 0.0 {
        return 1.0;
    }
    (num / den * ratio).min(1.0)
}

/// Plan the filter taking `source` to a switch with the target's weights
/// (possibly swapped), then the deterministic conversion to `target`.
pub fn plan_filter(source: &GeneralizedSwitchSpec, target: &GeneralizedSwitchSpec) -> Result<FilterPlan> {
    let (p, pp) = (source.p, target.p);
    if !majorizes(p, pp) {
        return Err(Error::NotMajorized { p0: pp.p0, p1: pp.p1, q0: p.p0, q1: p.p1 });
    }
    check_constraints(source)?;
    check_constraints(target)?;
    let (x, y, p_success) = if pp.min() <= 0.0 {
        (1.0, 1.0, 1.0)
    } else {
        let ratio = pp.max() / pp.min();
        (filter_weight(p.p1, p.p0, ratio), filter_weight(p.p0, p.p1, ratio), p.min() / pp.min())
    };
    let basis = &source.control_basis;
    let diag = |a: f64, b: f64| {
        let mut k = DMatrix::from_element(2, 2, ZERO);
        for (i, w) in [a, b].into_iter().enumerate() {
            let bb = bra(&basis[i]);
            for r in 0..2 {
                for c in 0..2 {
                    k[(r, c)] += basis[i][r] * bb[c] * w.sqrt();
                }
            }
        }
        k
    };
    let kraus = [diag(x, y), diag(1.0 - x, 1.0 - y)];
    let povm_vectors = [kraus_control_vector(&kraus[0]), kraus_control_vector(&kraus[1])];
    let kept = x * p.p0 + y * p.p1;
    let (aux, conversion) = if kept > 0.0 {
        let aux_p = BinaryDistribution::new(x * p.p0 / kept, y * p.p1 / kept)
            .or_else(|_| BinaryDistribution::new(x * p.p0 / kept, 1.0 - x * p.p0 / kept))?;
        let aux = GeneralizedSwitchSpec { p: aux_p, ..source.clone() };
        let conversion = plan_deterministic(&aux, target)?;
        (Some(aux), Some(conversion))
    } else {
        (None, None)
    };
    Ok(FilterPlan { x, y, p_success, kraus, povm_vectors, aux, conversion })
}

/// One filter outcome on a given process.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub outcome: usize,
    pub probability: f64,
    /// Post-measurement state rescaled to the input norm; `None` at zero probability.
    pub state: Option<PureProcess>,
}

impl FilterPlan {
    /// `‖Σ_k K_k†K_k − 1‖_max`.
    pub fn completeness_residual(&self) -> f64 {
        let s = self.kraus[0].adjoint() * &self.kraus[0] + self.kraus[1].adjoint() * &self.kraus[1];
        (s - DMatrix::<C64>::identity(2, 2)).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// POVM elements `|m_k⟩⟩⟨⟨m_k|`.
    pub fn povm(&self) -> [LabeledOperator; 2] {
        [self.povm_vectors[0].outer(), self.povm_vectors[1].outer()]
    }

    /// Born-rule probabilities and post-measurement states of both outcomes.
    pub fn outcomes(&self, w: &PureProcess) -> Result<[FilterOutcome; 2]> {
        let n = w.norm_sqr();
        let one = |k: usize| -> Result<FilterOutcome> {
            let out = link_pure(&self.povm_vectors[k], w)?;
            let probability = out.norm_sqr() / n;
            let state = (probability > 0.0).then(|| out.scale_real(probability.sqrt().recip()));
            Ok(FilterOutcome { outcome: k, probability, state })
        };
        Ok([one(0)?, one(1)?])
    }

    /// Sample one outcome.
    pub fn sample<R: Rng + ?Sized>(&self, w: &PureProcess, rng: &mut R) -> Result<FilterOutcome> {
        let [a, b] = self.outcomes(w)?;
        Ok(if rng.random::<f64>() < a.probability { a } else { b })
    }

    /// Filter outcome 0 followed by the deterministic conversion. Returns the
    /// success probability and the converted process.
    pub fn convert_on_success(&self, w: &PureProcess) -> Result<Option<(f64, ProcessMatrix)>> {
        let [ok, _] = self.outcomes(w)?;
        match (ok.state, &self.conversion) {
            (Some(state), Some(plan)) => Ok(Some((ok.probability, execute(plan, &state)?))),
            _ => Ok(None),
        }
    }
}
