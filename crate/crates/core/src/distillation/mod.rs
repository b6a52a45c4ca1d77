//! Distillation of quantum switches from many copies of a generalized switch.
//!
//! Two protocols are provided: independent local filtering of every copy,
//! and a collective protocol that measures the type class of the control
//! qubits, sub-projects onto one set of a covering design, bypasses the
//! surplus copies and corrects the resulting phases.
//!
//! N-copy states live in the switch basis: an amplitude per bit-string plus,
//! per copy, the two branch vectors `|Φ_b⟩|u_b⟩`.

pub mod design;

use nalgebra::DMatrix;
use num_integer::binomial;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conversion::{plan_filter, LabUnitaries};
use crate::error::{Error, Result};
use crate::free_ops::labs_factors;
use crate::linalg::{FactorLabel, PureProcess, Role, C64, ONE, ZERO};
use crate::random::stream_rng;
use crate::switch::{
    branch_vector, canonical_branch, check_switch_constraints, BinaryDistribution, GeneralizedSwitchSpec,
};

pub use design::{build_covering_design, CoveringDesign};
use design::{bit, restrict};

const SUPPORT_TOL: f64 = 1e-12;

/// `2·min{p0, p1}`.
pub fn filter_distill_rate(p: BinaryDistribution) -> f64 {
    2.0 * p.min()
}

/// Per-copy filtering towards the quantum switch, repeated over `trials`
/// independent batches of `n_copies`. Returns the mean rate and its
/// standard error.
pub fn filter_distill_mc(p: BinaryDistribution, n_copies: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if n_copies == 0 || trials == 0 {
        return Err(Error::InvalidArgument("n_copies and trials must be positive".into()));
    }
    let source = GeneralizedSwitchSpec::with_distribution(p, 2);
    let p_success = plan_filter(&source, &GeneralizedSwitchSpec::quantum_switch(2))?.p_success;
    let rates: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let hits = (0..n_copies).filter(|_| rng.random::<f64>() < p_success).count();
            hits as f64 / n_copies as f64
        })
        .collect();
    Ok(mean_and_stderr(&rates))
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// N copies of a switch-like process in the switch basis.
///
/// `amplitudes[s]` is the coefficient of `⊗_i branches[i][s_i]`, where copy
/// `i` is bit `N − 1 − i` of `s`. Branch vectors are not normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchBasisState {
    pub amplitudes: Vec<C64>,
    pub branches: Vec<[PureProcess; 2]>,
}

fn copy_factors(f: &[FactorLabel], copy: usize) -> Vec<FactorLabel> {
    f.iter().map(|g| FactorLabel::new(format!("{}#{copy}", g.name), g.dim, g.role)).collect()
}

impl SwitchBasisState {
    pub fn new(amplitudes: Vec<C64>, branches: Vec<[PureProcess; 2]>) -> Result<Self> {
        if amplitudes.len() != 1 << branches.len() {
            return Err(Error::DataLength { expected: 1 << branches.len(), got: amplitudes.len() });
        }
        Ok(Self { amplitudes, branches })
    }

    /// `|w⟩^{⊗N}` for a generalized switch.
    pub fn from_generalized_switch(spec: &GeneralizedSwitchSpec, n_copies: usize) -> Result<Self> {
        if n_copies == 0 || n_copies > 16 {
            return Err(Error::InvalidArgument(format!("number of copies must be in 1..=16, got {n_copies}")));
        }
        let amp = [C64::new(spec.p.p0.sqrt(), 0.0), C64::new(spec.p.p1.sqrt(), 0.0)];
        let amplitudes = (0..1u32 << n_copies)
            .map(|s| (0..n_copies).map(|i| amp[bit(s, n_copies, i) as usize]).product())
            .collect();
        let pair = [branch_vector(spec, 0), branch_vector(spec, 1)];
        Self::new(amplitudes, vec![pair; n_copies])
    }

    /// `|w_qs⟩^{⊗k}` with canonical branches.
    pub fn quantum_switch_power(k: usize, d: usize) -> Self {
        let a = C64::new((0.5f64).powi(k as i32).sqrt(), 0.0);
        let pair = [canonical_branch(0, d), canonical_branch(1, d)];
        Self { amplitudes: vec![a; 1 << k], branches: vec![pair; k] }
    }

    pub fn n_copies(&self) -> usize {
        self.branches.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.overlap(self).map(|z| z.re).unwrap_or(f64::NAN)
    }

    /// Full vector over `C#i, P#i, …` for every copy. Only practical for one
    /// or two copies.
    pub fn expand(&self) -> Result<PureProcess> {
        let n = self.n_copies();
        let mut acc: Option<PureProcess> = None;
        for s in 0..1u32 << n {
            let mut term: Option<PureProcess> = None;
            for i in 0..n {
                let b = &self.branches[i][bit(s, n, i) as usize];
                let b = PureProcess::new(copy_factors(b.factors(), i), b.data().to_vec())?;
                term = Some(match term {
                    None => b,
                    Some(t) => t.tensor(&b)?,
                });
            }
            let term = term.expect("at least one copy").scale(self.amplitudes[s as usize]);
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term)?,
            });
        }
        Ok(acc.expect("at least one term"))
    }

    /// Amplitudes of a single-copy vector in the branch basis of `branches`.
    pub fn from_single_copy(v: &PureProcess, branches: [PureProcess; 2]) -> Result<Self> {
        let amplitudes = branches
            .iter()
            .map(|b| Ok(b.inner(v)? / b.norm_sqr()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(amplitudes, vec![branches])
    }

    /// `⟨self|other⟩` through per-copy Gram matrices.
    pub fn overlap(&self, other: &Self) -> Result<C64> {
        let n = self.n_copies();
        if other.n_copies() != n {
            return Err(Error::InvalidArgument(format!("{n} copies against {}", other.n_copies())));
        }
        let mut gram = Vec::with_capacity(n);
        for (a, b) in self.branches.iter().zip(&other.branches) {
            let mut g = [[ZERO; 2]; 2];
            for (x, row) in g.iter_mut().enumerate() {
                for (y, slot) in row.iter_mut().enumerate() {
                    *slot = a[x].inner(&b[y])?;
                }
            }
            gram.push(g);
        }
        let mut total = ZERO;
        for (s, &ra) in self.amplitudes.iter().enumerate() {
            if ra == ZERO {
                continue;
            }
            for (t, &rb) in other.amplitudes.iter().enumerate() {
                if rb == ZERO {
                    continue;
                }
                let g: C64 = (0..n)
                    .map(|i| gram[i][bit(s as u32, n, i) as usize][bit(t as u32, n, i) as usize])
                    .product();
                total += ra.conj() * rb * g;
            }
        }
        Ok(total)
    }

    /// Phase-insensitive fidelity with another switch-basis state.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        Ok(self.overlap(other)?.norm_sqr() / (self.norm_sqr() * other.norm_sqr()))
    }

    /// Probability weight on each Hamming weight, from the amplitudes alone.
    /// Meaningful once the branches of every copy are orthogonal with equal norm.
    pub fn type_class_weights(&self) -> Vec<f64> {
        let n = self.n_copies();
        let mut w = vec![0.0; n + 1];
        for (s, a) in self.amplitudes.iter().enumerate() {
            w[s.count_ones() as usize] += a.norm_sqr();
        }
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    }

    fn renormalized(mut self) -> Self {
        let n: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            for a in &mut self.amplitudes {
                *a /= n;
            }
        }
        self
    }

    /// Keep only the strings selected by `keep`, renormalized.
    fn restricted(&self, keep: impl Fn(u32) -> bool) -> Self {
        let amplitudes =
            self.amplitudes.iter().enumerate().map(|(s, &a)| if keep(s as u32) { a } else { ZERO }).collect();
        Self { amplitudes, branches: self.branches.clone() }.renormalized()
    }
}

fn contract_process(v: &PureProcess, w: &PureProcess) -> Result<PureProcess> {
    let out = w.contract(v)?.relabel(|f| f.role.unprimed().map(|r| FactorLabel::of(r, f.dim)))?;
    let names = out.names();
    let order: Vec<&str> = Role::PROCESS.iter().map(|r| r.canonical_name()).filter(|n| names.contains(n)).collect();
    out.permute_factors(&order)
}

/// `U_C = Σ_i |i⟩⟨Φ_i|` as a CJ vector on `[C, C']`.
fn control_rotation(spec: &GeneralizedSwitchSpec) -> PureProcess {
    let b = &spec.control_basis;
    let u = DMatrix::from_fn(2, 2, |r, c| b[r][c].conj());
    crate::free_ops::kraus_control_vector(&u)
}

/// Local unitaries on every lab wire plus a control rotation, taking each
/// copy's branches to `|0⟩_C|𝟙₀⟩` and `|1⟩_C|𝟙₁⟩`.
pub fn apply_step1_unitaries(state: &SwitchBasisState, spec: &GeneralizedSwitchSpec) -> Result<SwitchBasisState> {
    let (ok, r) = check_switch_constraints(spec, 1e-9);
    if !ok {
        return Err(Error::ConstraintsViolated(r[0], r[1]));
    }
    let labs = LabUnitaries::canonicalizing(spec).labs_vector();
    let control = control_rotation(spec);
    let branches = state
        .branches
        .iter()
        .map(|pair| -> Result<[PureProcess; 2]> {
            let one = |b: &PureProcess| contract_process(&control, &contract_process(&labs, b)?);
            Ok([one(&pair[0])?, one(&pair[1])?])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SwitchBasisState { amplitudes: state.amplitudes.clone(), branches })
}

/// Project onto Hamming weight `j`, renormalized.
pub fn project_type_class(state: &SwitchBasisState, j: usize) -> SwitchBasisState {
    state.restricted(|s| s.count_ones() as usize == j)
}

/// Measure the Hamming weight of the control string.
pub fn type_class_measure<R: Rng + ?Sized>(state: &SwitchBasisState, rng: &mut R) -> (usize, SwitchBasisState) {
    let weights = state.type_class_weights();
    let j = sample_index(&weights, rng);
    (j, project_type_class(state, j))
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn check_weight_support(state: &SwitchBasisState, j: usize) -> Result<()> {
    let outside: f64 = state
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(s, _)| s.count_ones() as usize != j)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    if outside > SUPPORT_TOL {
        return Err(Error::OutsideTypeClass(j));
    }
    Ok(())
}

/// Outcome probabilities of `E_ℓ = P_{R_ℓ}/√n` on a weight-`j` state.
pub fn subproject_probabilities(state: &SwitchBasisState, design: &CoveringDesign) -> Result<Vec<f64>> {
    if state.n_copies() != design.n_copies {
        return Err(Error::InvalidArgument("design and state differ in copies".into()));
    }
    check_weight_support(state, design.j)?;
    let total: f64 = state.amplitudes.iter().map(|a| a.norm_sqr()).sum();
    Ok(design
        .sets
        .iter()
        .map(|set| set.iter().map(|&s| state.amplitudes[s as usize].norm_sqr()).sum::<f64>() / (design.n as f64 * total))
        .collect())
}

/// `‖Σ_ℓ E_ℓ†E_ℓ − Π_j‖_max`, which is diagonal in the string basis.
pub fn design_completeness_residual(design: &CoveringDesign) -> f64 {
    let n = design.n as f64;
    design
        .multiplicities()
        .iter()
        .fold(0.0, |m, &c| m.max((c as f64 / n - 1.0).abs()))
}

/// Post-measurement state of sub-projection outcome `l`.
pub fn subproject(state: &SwitchBasisState, design: &CoveringDesign, l: usize) -> SwitchBasisState {
    let set = &design.sets[l];
    state.restricted(|s| set.contains(&s))
}

/// Sample a sub-projection outcome by the Born rule.
pub fn subproject_measure<R: Rng + ?Sized>(
    state: &SwitchBasisState,
    design: &CoveringDesign,
    rng: &mut R,
) -> Result<(usize, SwitchBasisState)> {
    let probs = subproject_probabilities(state, design)?;
    let l = sample_index(&probs, rng);
    Ok((l, subproject(state, design, l)))
}

/// `|𝟙⟩_{A_I A_O}|𝟙⟩_{B_I B_O}`: both labs forward their input unchanged.
fn bypass_vector(d: usize) -> PureProcess {
    let f: Vec<FactorLabel> = labs_factors(d).into_iter().filter(|f| f.role.unprimed().is_none()).collect();
    let data = (0..d.pow(4))
        .map(|i| {
            let (ai, ao, bi, bo) = (i / d.pow(3), (i / d / d) % d, (i / d) % d, i % d);
            if ai == ao && bi == bo {
                ONE
            } else {
                ZERO
            }
        })
        .collect();
    PureProcess::new(f, data).expect("d^4 entries")
}

/// What happened to one discarded copy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscardRecord {
    pub copy: usize,
    /// `true` for the `|−⟩` outcome.
    pub minus: bool,
    pub probability: f64,
    /// Largest difference between the two bypassed branch contents.
    pub bypass_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtractionLog {
    pub kept: Vec<usize>,
    pub discarded: Vec<DiscardRecord>,
}

/// Target content of a bypassed branch with the control factor stripped.
fn bypassed_content(branch: &PureProcess, bit: usize, d: usize) -> Result<PureProcess> {
    let c = PureProcess::basis(vec![FactorLabel::of(Role::Control, 2)], &[bit])?;
    branch.contract(&bypass_vector(d))?.contract(&c)
}

/// Bypass and measure the copies outside the set's kept positions, fixing
/// phases on the kept controls. `minus` gives the `|±⟩` outcome for each
/// discarded copy, in increasing copy order.
pub fn disentangle_with_outcomes(
    state: &SwitchBasisState,
    design: &CoveringDesign,
    l: usize,
    minus: &[bool],
) -> Result<(SwitchBasisState, ExtractionLog)> {
    extract(state, design, l, minus)
}

/// As [`disentangle_with_outcomes`], sampling each `|±⟩` outcome.
pub fn disentangle_and_extract<R: Rng + ?Sized>(
    state: &SwitchBasisState,
    design: &CoveringDesign,
    l: usize,
    rng: &mut R,
) -> Result<(SwitchBasisState, ExtractionLog)> {
    let n = state.n_copies() - design.k;
    let minus: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    extract(state, design, l, &minus)
}

fn extract(
    state: &SwitchBasisState,
    design: &CoveringDesign,
    l: usize,
    minus: &[bool],
) -> Result<(SwitchBasisState, ExtractionLog)> {
    let n = state.n_copies();
    if n != design.n_copies || l >= design.len() {
        return Err(Error::InvalidArgument(format!("outcome {l} does not belong to this design")));
    }
    let set = &design.sets[l];
    let kept = design.kept_positions[l].clone();
    if !design::is_bijective_on(set, n, &kept) {
        return Err(Error::NotBijective(l, design.k));
    }
    let outside: f64 = state
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(s, _)| !set.contains(&(*s as u32)))
        .map(|(_, a)| a.norm_sqr())
        .sum();
    if outside > SUPPORT_TOL {
        return Err(Error::OutsideTypeClass(design.j));
    }
    let discarded: Vec<usize> = (0..n).filter(|i| !kept.contains(i)).collect();
    if minus.len() != discarded.len() {
        return Err(Error::InvalidArgument(format!("{} outcomes for {} discarded copies", minus.len(), discarded.len())));
    }
    // Discarded bit as a function of the kept pattern.
    let mut lookup = vec![0u32; 1 << design.k];
    let mut records = Vec::with_capacity(discarded.len());

    // Original index of every copy still present.
    let mut copies: Vec<usize> = (0..n).collect();
    let mut amps = state.amplitudes.clone();
    let mut branches = state.branches.clone();
    for (&copy, &is_minus) in discarded.iter().zip(minus) {
        let m = copies.len();
        let pos = copies.iter().position(|&c| c == copy).expect("copy still present");
        let d = branches[pos][0].factors().iter().find(|f| f.role == Role::Past).map_or(2, |f| f.dim);
        let c0 = bypassed_content(&branches[pos][0], 0, d)?;
        let c1 = bypassed_content(&branches[pos][1], 1, d)?;
        let bypass_residual = c0.max_abs_diff(&c1)?;

        for &s in set {
            lookup[restrict(s, n, &kept) as usize] = bit(s, n, copy);
        }
        // Project copy `pos` onto |±⟩; the bypassed content is shared.
        let sign = if is_minus { -1.0 } else { 1.0 };
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut next = vec![ZERO; 1 << (m - 1)];
        for (t, &a) in amps.iter().enumerate() {
            let t = t as u32;
            let b = bit(t, m, pos);
            let high = t >> (m - pos);
            let low = t & ((1 << (m - 1 - pos)) - 1);
            let r = (high << (m - 1 - pos)) | low;
            next[r as usize] += a * if b == 1 { sign * h } else { h };
        }
        copies.remove(pos);
        branches.remove(pos);
        let probability: f64 = next.iter().map(|a| a.norm_sqr()).sum::<f64>() / amps.iter().map(|a| a.norm_sqr()).sum::<f64>();
        if is_minus {
            let kept_idx: Vec<usize> = kept.iter().map(|k| copies.iter().position(|c| c == k).unwrap()).collect();
            for (t, a) in next.iter_mut().enumerate() {
                if lookup[restrict(t as u32, m - 1, &kept_idx) as usize] == 1 {
                    *a = -*a;
                }
            }
        }
        amps = next;
        records.push(DiscardRecord { copy, minus: is_minus, probability, bypass_residual });
    }
    let out = SwitchBasisState { amplitudes: amps, branches }.renormalized();
    Ok((out, ExtractionLog { kept, discarded: records }))
}

/// One run of the collective protocol.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub j: usize,
    pub l: Option<usize>,
    pub k: usize,
    /// Fidelity of the extracted state with `|w_qs⟩^{⊗k}`; `None` when `k = 0`.
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MulticopyReport {
    pub n_copies: usize,
    pub trials: usize,
    pub seed: u64,
    pub empirical_rate: f64,
    pub std_err: f64,
    /// `E[min{j, N−j}]/N` under `Binomial(N, p1)`.
    pub expected_rate: f64,
    pub j_histogram: Vec<usize>,
    /// Lowest fidelity over trials with `k > 0`; 1 when there were none.
    pub min_fidelity: f64,
    pub records: Vec<TrialRecord>,
}

/// `E[min{j, N−j}]/N` with `j ~ Binomial(N, p1)`.
pub fn expected_multicopy_rate(p: BinaryDistribution, n_copies: usize) -> f64 {
    (0..=n_copies)
        .map(|j| {
            let pj = binomial(n_copies, j) as f64 * p.p1.powi(j as i32) * p.p0.powi((n_copies - j) as i32);
            pj * j.min(n_copies - j) as f64
        })
        .sum::<f64>()
        / n_copies as f64
}

/// Run the collective protocol `trials` times on `|w⟩^{⊗N}`.
///
/// Trial `t` draws its randomness from stream `t` of `seed`. Covering designs
/// are built once per weight before the trials start.
pub fn multicopy_distill(spec: &GeneralizedSwitchSpec, n_copies: usize, trials: usize, seed: u64) -> Result<MulticopyReport> {
    if n_copies == 0 || n_copies > 8 {
        return Err(Error::InvalidArgument(format!("number of copies must be in 1..=8, got {n_copies}")));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let d = spec.dim();
    let start = apply_step1_unitaries(&SwitchBasisState::from_generalized_switch(spec, n_copies)?, spec)?;
    let weights = start.type_class_weights();
    let designs: Vec<Option<CoveringDesign>> = (0..=n_copies)
        .map(|j| {
            let k = j.min(n_copies - j);
            if k == 0 || weights[j] == 0.0 {
                Ok(None)
            } else {
                build_covering_design(n_copies, j, k).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let targets: Vec<SwitchBasisState> = (0..=n_copies / 2).map(|k| SwitchBasisState::quantum_switch_power(k, d)).collect();

    let records: Vec<TrialRecord> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<TrialRecord> {
            let mut rng = stream_rng(seed, t as u64);
            let (j, projected) = type_class_measure(&start, &mut rng);
            let Some(design) = &designs[j] else {
                return Ok(TrialRecord { j, l: None, k: 0, fidelity: None });
            };
            let (l, sub) = subproject_measure(&projected, design, &mut rng)?;
            let (out, _) = disentangle_and_extract(&sub, design, l, &mut rng)?;
            let fidelity = out.fidelity(&targets[design.k])?;
            Ok(TrialRecord { j, l: Some(l), k: design.k, fidelity: Some(fidelity) })
        })
        .collect::<Result<_>>()?;

    let rates: Vec<f64> = records.iter().map(|r| r.k as f64 / n_copies as f64).collect();
    let (empirical_rate, std_err) = mean_and_stderr(&rates);
    let mut j_histogram = vec![0; n_copies + 1];
    for r in &records {
        j_histogram[r.j] += 1;
    }
    let min_fidelity = records.iter().filter_map(|r| r.fidelity).fold(1.0, f64::min);
    Ok(MulticopyReport {
        n_copies,
        trials,
        seed,
        empirical_rate,
        std_err,
        expected_rate: expected_multicopy_rate(spec.p, n_copies),
        j_histogram,
        min_fidelity,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversion::plan_deterministic;
    use crate::switch::make_generalized_switch;

    fn bd(p0: f64) -> BinaryDistribution {
        BinaryDistribution::new(p0, 1.0 - p0).unwrap()
    }

    fn parse(s: &str) -> u32 {
        u32::from_str_radix(s, 2).unwrap()
    }

    #[test]
    fn filter_rate_examples() {
        assert_eq!(filter_distill_rate(BinaryDistribution::uniform()), 1.0);
        assert!((filter_distill_rate(bd(0.9)) - 0.2).abs() < 1e-12);
        assert_eq!(filter_distill_rate(bd(1.0)), 0.0);
    }

    #[test]
    fn filter_monte_carlo() {
        assert_eq!(filter_distill_mc(BinaryDistribution::uniform(), 50, 20, 1).unwrap(), (1.0, 0.0));
        assert_eq!(filter_distill_mc(bd(1.0), 50, 20, 1).unwrap(), (0.0, 0.0));
        let (mean, se) = filter_distill_mc(bd(0.8), 1000, 200, 3).unwrap();
        assert!((mean - 0.4).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn single_copy_round_trip() {
        let mut rng = stream_rng(21, 0);
        let spec = GeneralizedSwitchSpec::random_constrained(bd(0.3), 2, &mut rng);
        let state = SwitchBasisState::from_generalized_switch(&spec, 1).unwrap();
        let full = state.expand().unwrap();
        let direct = make_generalized_switch(&spec).unwrap();
        assert!(full.data().iter().zip(direct.data()).all(|(a, b)| (a - b).norm() < 1e-12));
        let back = SwitchBasisState::from_single_copy(&direct, state.branches[0].clone()).unwrap();
        for (a, b) in back.amplitudes.iter().zip(&state.amplitudes) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn two_copy_expansion_is_a_tensor_power() {
        let spec = GeneralizedSwitchSpec::with_distribution(bd(0.6), 2);
        let state = SwitchBasisState::from_generalized_switch(&spec, 2).unwrap();
        let w = make_generalized_switch(&spec).unwrap();
        let want = w.tensor(&w.relabel(|f| Some(FactorLabel::new(format!("{}'", f.name), f.dim, f.role))).unwrap());
        let want = want.unwrap();
        let got = state.expand().unwrap();
        assert!(got.data().iter().zip(want.data()).all(|(a, b)| (a - b).norm() < 1e-12));
        assert!((state.norm_sqr() - w.norm_sqr().powi(2)).abs() < 1e-9);
    }

    #[test]
    fn step1_on_canonical_spec_is_identity() {
        let spec = GeneralizedSwitchSpec::with_distribution(bd(0.7), 2);
        let state = SwitchBasisState::from_generalized_switch(&spec, 3).unwrap();
        let out = apply_step1_unitaries(&state, &spec).unwrap();
        assert_eq!(out.amplitudes, state.amplitudes);
        for (a, b) in out.branches.iter().zip(&state.branches) {
            assert!(a[0].max_abs_diff(&b[0]).unwrap() < 1e-12 && a[1].max_abs_diff(&b[1]).unwrap() < 1e-12);
        }
    }

    #[test]
    fn step1_canonicalizes_random_spec() {
        let mut rng = stream_rng(22, 0);
        let spec = GeneralizedSwitchSpec::random_constrained(bd(0.35), 2, &mut rng);
        let state = SwitchBasisState::from_generalized_switch(&spec, 2).unwrap();
        let out = apply_step1_unitaries(&state, &spec).unwrap();
        assert_eq!(out.amplitudes, state.amplitudes);
        for pair in &out.branches {
            for (b, branch) in pair.iter().enumerate() {
                assert!(branch.max_abs_diff(&canonical_branch(b, 2)).unwrap() < 1e-10);
            }
        }
        // Same single-copy result as the conversion plan to the canonical switch with equal weights.
        let target = GeneralizedSwitchSpec::with_distribution(spec.p, 2);
        let plan = plan_deterministic(&spec, &target).unwrap();
        let [converted, _] = plan.branch_outputs(&make_generalized_switch(&spec).unwrap()).unwrap();
        let one = SwitchBasisState::from_generalized_switch(&spec, 1).unwrap();
        let one = apply_step1_unitaries(&one, &spec).unwrap();
        let [b0, b1] = &one.branches[0];
        let expanded = b0.scale(one.amplitudes[0]).add(&b1.scale(one.amplitudes[1])).unwrap();
        assert!(expanded.max_abs_diff(&converted).unwrap() < 1e-10);
    }

    #[test]
    fn step1_rejects_unconstrained_spec() {
        let mut rng = stream_rng(23, 0);
        let mut spec = GeneralizedSwitchSpec::quantum_switch(2);
        spec.unitaries = crate::switch::SwitchUnitaries::random(2, &mut rng);
        let state = SwitchBasisState::from_generalized_switch(&spec, 1).unwrap();
        assert!(matches!(apply_step1_unitaries(&state, &spec), Err(Error::ConstraintsViolated(..))));
    }

    #[test]
    fn type_class_post_state_is_balanced() {
        let state = SwitchBasisState::from_generalized_switch(&GeneralizedSwitchSpec::quantum_switch(2), 4).unwrap();
        let post = project_type_class(&state, 2);
        let support: Vec<usize> = (0..16).filter(|&s| post.amplitudes[s].norm() > 0.0).collect();
        assert_eq!(support, vec![3, 5, 6, 9, 10, 12]);
        for &s in &support {
            assert!((post.amplitudes[s].norm_sqr() - 1.0 / 6.0).abs() < 1e-12);
        }
        // Skewed weights still give a balanced post-state.
        let skewed = SwitchBasisState::from_generalized_switch(&GeneralizedSwitchSpec::with_distribution(bd(0.8), 2), 4);
        let post = project_type_class(&skewed.unwrap(), 1);
        for s in [1, 2, 4, 8] {
            assert!((post.amplitudes[s].norm_sqr() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn type_class_single_copy() {
        let state = SwitchBasisState::from_generalized_switch(&GeneralizedSwitchSpec::with_distribution(bd(0.3), 2), 1);
        let w = state.unwrap().type_class_weights();
        assert!((w[0] - 0.3).abs() < 1e-12 && (w[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn type_class_statistics_are_binomial() {
        let (n, p1, samples) = (5usize, 0.3, 10_000);
        let state = SwitchBasisState::from_generalized_switch(&GeneralizedSwitchSpec::with_distribution(bd(1.0 - p1), 2), n);
        let state = state.unwrap();
        let mut rng = stream_rng(24, 0);
        let mut hist = vec![0usize; n + 1];
        for _ in 0..samples {
            hist[type_class_measure(&state, &mut rng).0] += 1;
        }
        for (j, &c) in hist.iter().enumerate() {
            let pj = binomial(n, j) as f64 * p1.powi(j as i32) * (1.0 - p1).powi((n - j) as i32);
            let sigma = (samples as f64 * pj * (1.0 - pj)).sqrt();
            assert!((c as f64 - samples as f64 * pj).abs() <= 3.0 * sigma.max(1.0), "j={j}: {c}");
        }
    }

    fn uniform_weight_class(n: usize, j: usize) -> SwitchBasisState {
        let state = SwitchBasisState::from_generalized_switch(&GeneralizedSwitchSpec::quantum_switch(2), n).unwrap();
        project_type_class(&state, j)
    }

    #[test]
    fn subprojection_on_worked_example() {
        let design = build_covering_design(4, 2, 2).unwrap();
        assert_eq!(design_completeness_residual(&design), 0.0);
        let state = uniform_weight_class(4, 2);
        for p in subproject_probabilities(&state, &design).unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        for (l, set) in design.sets.iter().enumerate() {
            let post = subproject(&state, &design, l);
            for s in 0..16u32 {
                let want = if set.contains(&s) { 0.25 } else { 0.0 };
                assert!((post.amplitudes[s as usize].norm_sqr() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subprojection_with_single_set() {
        let design = build_covering_design(2, 1, 1).unwrap();
        let state = uniform_weight_class(2, 1);
        let mut rng = stream_rng(25, 0);
        let (l, post) = subproject_measure(&state, &design, &mut rng).unwrap();
        assert_eq!(l, 0);
        assert!(post.fidelity(&state).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn subprojection_rejects_mixed_weights() {
        let design = build_covering_design(4, 2, 2).unwrap();
        let state = SwitchBasisState::from_generalized_switch(&GeneralizedSwitchSpec::quantum_switch(2), 4).unwrap();
        assert!(matches!(subproject_probabilities(&state, &design), Err(Error::OutsideTypeClass(2))));
    }

    fn all_outcomes(m: usize) -> impl Iterator<Item = Vec<bool>> {
        (0..1u32 << m).map(move |x| (0..m).map(|i| (x >> i) & 1 == 1).collect())
    }

    #[test]
    fn worked_example_every_branch_yields_switches() {
        let design = build_covering_design(4, 2, 2).unwrap();
        let target = SwitchBasisState::quantum_switch_power(2, 2);
        let state = uniform_weight_class(4, 2);
        for l in 0..design.len() {
            let sub = subproject(&state, &design, l);
            for minus in all_outcomes(2) {
                let (out, log) = disentangle_with_outcomes(&sub, &design, l, &minus).unwrap();
                let f = out.fidelity(&target).unwrap();
                assert!((f - 1.0).abs() < 1e-12, "l={l} {minus:?}: {f}");
                for r in &log.discarded {
                    assert!(r.bypass_residual < 1e-12 && (r.probability - 0.5).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn worked_example_set_keeps_middle_copies() {
        let set: Vec<u32> = ["1001", "1010", "1100", "0110"].iter().map(|s| parse(s)).collect();
        let design = CoveringDesign { n_copies: 4, j: 2, k: 2, sets: vec![set], n: 1, kept_positions: vec![vec![1, 2]] };
        let state = uniform_weight_class(4, 2);
        let sub = subproject(&state, &design, 0);
        let (out, log) = disentangle_with_outcomes(&sub, &design, 0, &[true, true]).unwrap();
        assert_eq!(log.kept, vec![1, 2]);
        assert!((out.fidelity(&SwitchBasisState::quantum_switch_power(2, 2)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_phase_fix_would_fail() {
        // Sanity check of the oracle: flipping one kept sign lowers the fidelity.
        let design = build_covering_design(4, 2, 2).unwrap();
        let sub = subproject(&uniform_weight_class(4, 2), &design, 0);
        let (mut out, _) = disentangle_with_outcomes(&sub, &design, 0, &[false, false]).unwrap();
        out.amplitudes[1] = -out.amplitudes[1];
        assert!(out.fidelity(&SwitchBasisState::quantum_switch_power(2, 2)).unwrap() < 0.5);
    }

    #[test]
    fn extraction_is_exact_for_all_small_designs() {
        let mut rng = stream_rng(26, 0);
        let spec = GeneralizedSwitchSpec::random_constrained(bd(0.4), 2, &mut rng);
        for n in 2..=8 {
            let start = SwitchBasisState::from_generalized_switch(&spec, n).unwrap();
            let start = apply_step1_unitaries(&start, &spec).unwrap();
            for j in 1..n {
                let k = j.min(n - j);
                let design = build_covering_design(n, j, k).unwrap();
                let target = SwitchBasisState::quantum_switch_power(k, 2);
                let projected = project_type_class(&start, j);
                for l in 0..design.len() {
                    let sub = subproject(&projected, &design, l);
                    let (out, _) = disentangle_and_extract(&sub, &design, l, &mut rng).unwrap();
                    let f = out.fidelity(&target).unwrap();
                    assert!((f - 1.0).abs() < 1e-10, "N={n} j={j} l={l}: {f}");
                }
            }
        }
    }

    #[test]
    fn multicopy_trivial_cases() {
        let r = multicopy_distill(&GeneralizedSwitchSpec::with_distribution(bd(1.0), 2), 4, 20, 5).unwrap();
        assert_eq!(r.empirical_rate, 0.0);
        assert_eq!(r.j_histogram, vec![20, 0, 0, 0, 0]);
        let r = multicopy_distill(&GeneralizedSwitchSpec::quantum_switch(2), 4, 100, 7).unwrap();
        assert!((r.min_fidelity - 1.0).abs() < 1e-10);
        assert!(r.records.iter().filter(|t| t.j == 2).all(|t| t.k == 2));
    }

    #[test]
    fn multicopy_rate_matches_binomial_expectation() {
        let p = bd(0.7);
        let r = multicopy_distill(&GeneralizedSwitchSpec::with_distribution(p, 2), 8, 500, 11).unwrap();
        assert!((r.empirical_rate - r.expected_rate).abs() < 3.0 * r.std_err, "{r:?}");
        assert!(r.empirical_rate < filter_distill_rate(p));
        assert!((r.min_fidelity - 1.0).abs() < 1e-10);
    }

    #[test]
    fn multicopy_rate_never_beats_filtering() {
        for n in 1..=8 {
            for i in 0..=20 {
                let p = bd(i as f64 / 20.0);
                assert!(expected_multicopy_rate(p, n) <= filter_distill_rate(p) + 1e-12);
            }
        }
    }
}
