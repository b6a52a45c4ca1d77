use causalforge::conversion::{execute, plan_deterministic, plan_filter};
use causalforge::distillation::{filter_distill_mc, filter_distill_rate, multicopy_distill};
use causalforge::free_ops::{
    apply_operator, build_pls, check_normalization, check_nso_operator, check_swap_conditions_operator,
    control_factors, labs_factors, random_loae,
};
use causalforge::random::stream_rng;
use causalforge::switch::{
    check_switch_constraints, gates, make_fixed_order, make_generalized_switch, make_quantum_switch, make_w_ent,
    COMPUTATIONAL_BASIS,
};
use causalforge::{
    is_compatible_order, is_entangled_control_target, is_valid_process, link_product, pure_link, BinaryDistribution,
    CausalOrder, FreeOperation, GeneralizedSwitchSpec, LabeledOperator, ProcessMatrix, PureProcess, Role,
    SwitchUnitaries, ValidityReport, C64,
};
use nalgebra::DMatrix;
use serde_json::Value;

use crate::error::CliError;
use crate::file::{Loaded, ProcessFile};
use crate::report::Report;
use crate::{ApplyArgs, BuildArgs, BuildKind, CheckArgs, ConvertArgs, LinkArgs, MulticopyArgs, OrderArg, RateArgs};

fn distribution(p: &[f64]) -> Result<BinaryDistribution, CliError> {
    Ok(BinaryDistribution::new(p[0], p[1])?)
}

fn entry(v: &Value) -> Option<C64> {
    match v {
        Value::Number(n) => Some(C64::new(n.as_f64()?, 0.0)),
        Value::Array(a) if a.len() == 2 => Some(C64::new(a[0].as_f64()?, a[1].as_f64()?)),
        _ => None,
    }
}

/// A gate name or a JSON matrix.
pub fn parse_unitary(s: &str, d: usize) -> Result<DMatrix<C64>, CliError> {
    if s.eq_ignore_ascii_case("i") || s.eq_ignore_ascii_case("id") {
        return Ok(DMatrix::identity(d, d));
    }
    if let Some(g) = gates::by_name(s) {
        if d != 2 {
            return Err(CliError::Input(format!("gate `{s}` is a qubit gate but d = {d}")));
        }
        return Ok(g);
    }
    let bad = || CliError::Input(format!("`{s}` is neither a gate name nor a {d}x{d} JSON matrix"));
    let rows: Vec<Vec<Value>> = serde_json::from_str(s).map_err(|_| bad())?;
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(bad());
    }
    let entries: Option<Vec<C64>> = rows.iter().flatten().map(entry).collect();
    Ok(DMatrix::from_row_slice(d, d, &entries.ok_or_else(bad)?))
}

fn validity_checks(w: &ProcessMatrix, tol: f64, r: &mut Report) -> ValidityReport {
    let rep = is_valid_process(w, tol);
    r.check("positivity", rep.positivity_defect / rep.scale, tol);
    r.check("trace", rep.trace_residual, tol);
    for (name, res) in ValidityReport::RESIDUAL_NAMES.iter().zip(rep.residuals) {
        r.check(*name, res, tol);
    }
    r.value("trace_value", rep.trace_value);
    r.value("trace_expected", rep.trace_expected);
    r.value("valid", rep.pass);
    rep
}

fn operation_checks(op: &FreeOperation, tol: f64, r: &mut Report) {
    let n = check_normalization(op, tol);
    r.check("operation trace", (n.trace_value - n.trace_expected).abs() / n.trace_expected, tol);
    r.check("operation inputs/outputs", n.io_residual, tol);
    r.check("operation control", n.control_residual, tol);
    r.check("operation labs", n.labs_residual, tol);
}

/// `⟨t|W|t⟩ / (⟨t|t⟩ Tr W)`.
pub fn fidelity(w: &ProcessMatrix, t: &PureProcess) -> Result<f64, CliError> {
    let wt = ProcessMatrix::from_pure(t)?;
    let (a, b) = (w.op(), wt.op());
    if a.factors() != b.factors() {
        return Err(CliError::Input("processes have different factors".into()));
    }
    let n = a.dim();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += a.data()[i * n + j] * b.data()[j * n + i];
        }
    }
    Ok(s.re / (a.trace().re * b.trace().re))
}

fn switch_spec(
    p: BinaryDistribution,
    d: usize,
    random: bool,
    rng: &mut impl rand::Rng,
) -> GeneralizedSwitchSpec {
    if random {
        GeneralizedSwitchSpec::random_constrained(p, d, rng)
    } else {
        GeneralizedSwitchSpec::with_distribution(p, d)
    }
}

pub fn build(a: &BuildArgs, tol: f64, r: &mut Report) -> Result<(), CliError> {
    let d = a.d;
    let loaded = match a.kind {
        BuildKind::Switch => Loaded::Pure(make_quantum_switch(d)?),
        BuildKind::FixedOrder => Loaded::Pure(make_fixed_order(a.bit, d)?),
        BuildKind::WEnt => {
            let u = parse_unitary(a.u_ab.as_deref().unwrap_or("X"), d)?;
            Loaded::Pure(make_w_ent(d, &u)?)
        }
        BuildKind::Generalized => {
            let p = match &a.p {
                Some(p) => distribution(p)?,
                None => BinaryDistribution::uniform(),
            };
            let spec = if a.random {
                r.seed = Some(a.seed);
                GeneralizedSwitchSpec::random_constrained(p, d, &mut stream_rng(a.seed, 0))
            } else {
                let u = |s: &Option<String>| parse_unitary(s.as_deref().unwrap_or("I"), d);
                let unitaries = SwitchUnitaries {
                    u_pa: u(&a.u_pa)?,
                    u_ab: u(&a.u_ab)?,
                    u_bf: u(&a.u_bf)?,
                    u_pb: u(&a.u_pb)?,
                    u_ba: u(&a.u_ba)?,
                    u_af: u(&a.u_af)?,
                };
                GeneralizedSwitchSpec::new(p, COMPUTATIONAL_BASIS, unitaries)?
            };
            let (ok, res) = check_switch_constraints(&spec, tol);
            r.value("constraint_residuals", res);
            r.value("constraints_satisfied", ok);
            if a.require_constraints && !ok {
                return Err(causalforge::Error::ConstraintsViolated(res[0], res[1]).into());
            }
            Loaded::Pure(make_generalized_switch(&spec)?)
        }
        BuildKind::Pls => {
            let q = a.swap_prob;
            let op = build_pls(d, &[(1.0 - q, false), (q, true)], None)?;
            operation_checks(&op, tol, r);
            Loaded::Matrix(op.assembled())
        }
        BuildKind::RandomLoae => {
            r.seed = Some(a.seed);
            let op = random_loae(d, &mut stream_rng(a.seed, 0));
            operation_checks(&op, tol, r);
            Loaded::Matrix(op.assembled())
        }
    };
    if let Loaded::Pure(v) = &loaded {
        r.value("norm_sqr", v.norm_sqr());
        validity_checks(&loaded.process()?, tol, r);
    }
    r.value("entries", loaded.to_file().data.len());
    loaded.to_file().write(&a.out)
}

fn check_operation(op: &LabeledOperator, tol: f64, r: &mut Report) -> Result<(), CliError> {
    let d = op.factor("A_I").map(|f| f.dim).unwrap_or(0);
    let mut need = labs_factors(d);
    need.extend(control_factors());
    for f in &need {
        if op.factor(&f.name).map(|g| g.dim) != Some(f.dim) {
            return Err(CliError::Input(format!("operation is missing factor `{}` of dimension {}", f.name, f.dim)));
        }
    }
    let (_, nso) = check_nso_operator(op, tol);
    for (i, res) in nso.iter().enumerate() {
        r.check(format!("non-signaling {}", i + 1), *res, tol);
    }
    let (swap_ok, swap) = check_swap_conditions_operator(op, tol);
    r.value("swap_conditions", swap);
    r.value("order_inverting", swap_ok);
    Ok(())
}

pub fn check(a: &CheckArgs, tol: f64, r: &mut Report) -> Result<(), CliError> {
    let loaded = ProcessFile::read(&a.input)?;
    if a.nso {
        return check_operation(&loaded.operator(), tol, r);
    }
    let w = loaded.process()?;
    validity_checks(&w, tol, r);
    if a.order || a.expect_order.is_some() {
        let (ab, ab_res) = is_compatible_order(&w, CausalOrder::AToB, tol);
        let (ba, ba_res) = is_compatible_order(&w, CausalOrder::BToA, tol);
        r.value("order_a_to_b", ab);
        r.value("order_b_to_a", ba);
        r.value("order_residuals", [ab_res, ba_res]);
        if let Some(want) = a.expect_order {
            let got = match (ab, ba) {
                (true, false) => Some(OrderArg::AToB),
                (false, true) => Some(OrderArg::BToA),
                (false, false) => Some(OrderArg::Neither),
                (true, true) => None,
            };
            let hit = got == Some(want) || (ab && ba && want != OrderArg::Neither);
            r.check("expected order", if hit { 0.0 } else { 1.0 }, 0.0);
        }
    }
    if a.entanglement {
        let (ent, res) = is_entangled_control_target(&w, tol);
        r.value("entangled", ent);
        r.value("entanglement_residual", res);
    }
    Ok(())
}

pub fn link(a: &LinkArgs, r: &mut Report) -> Result<(), CliError> {
    let x = ProcessFile::read(&a.inputs[0])?;
    let y = ProcessFile::read(&a.inputs[1])?;
    let out = match (&x, &y) {
        (Loaded::Pure(u), Loaded::Pure(v)) => Loaded::Pure(pure_link(u, v)?),
        _ => Loaded::Matrix(link_product(&x.operator(), &y.operator())?),
    };
    let op = out.operator();
    r.value("factors", op.names());
    r.value("trace", op.trace().re);
    out.to_file().write(&a.out)
}

pub fn apply(a: &ApplyArgs, tol: f64, r: &mut Report) -> Result<(), CliError> {
    let w = ProcessFile::read(&a.input)?.process()?;
    let v = ProcessFile::read(&a.op)?.operator();
    let out = apply_operator(&v, &w)?;
    validity_checks(&out, tol, r);
    for (role, key) in [(CausalOrder::AToB, "order_a_to_b"), (CausalOrder::BToA, "order_b_to_a")] {
        r.value(key, is_compatible_order(&out, role, tol).0);
    }
    if let Some(path) = &a.out {
        ProcessFile::from_operator(out.op()).write(path)?;
    }
    Ok(())
}

pub fn convert(a: &ConvertArgs, tol: f64, r: &mut Report) -> Result<(), CliError> {
    let mut rng = stream_rng(a.seed, 0);
    let source = switch_spec(distribution(&a.from_p)?, a.d, a.random_specs, &mut rng);
    let target = switch_spec(distribution(&a.to_p)?, a.d, a.random_specs, &mut rng);
    if a.random_specs {
        r.seed = Some(a.seed);
    }
    let plan = plan_deterministic(&source, &target)?;
    let out = execute(&plan, &make_generalized_switch(&source)?)?;
    let f = fidelity(&out, &make_generalized_switch(&target)?)?;
    r.check("fidelity", 1.0 - f, tol);
    validity_checks(&out, tol, r);
    r.value("lambda", [plan.lambda.0, plan.lambda.1]);
    r.value("fidelity", f);
    r.value("control_dim", out.dim_of(Role::Control));
    Ok(())
}

pub fn filter(a: &ConvertArgs, tol: f64, r: &mut Report) -> Result<(), CliError> {
    let mut rng = stream_rng(a.seed, 0);
    let source = switch_spec(distribution(&a.from_p)?, a.d, a.random_specs, &mut rng);
    let target = switch_spec(distribution(&a.to_p)?, a.d, a.random_specs, &mut rng);
    if a.random_specs {
        r.seed = Some(a.seed);
    }
    let plan = plan_filter(&source, &target)?;
    let w = make_generalized_switch(&source)?;
    let [ok, _] = plan.outcomes(&w)?;
    r.check("filter completeness", plan.completeness_residual(), tol);
    r.check("success probability", (ok.probability - plan.p_success).abs(), tol);
    r.value("x", plan.x);
    r.value("y", plan.y);
    r.value("p_success", plan.p_success);
    r.value("success_probability", ok.probability);
    match plan.convert_on_success(&w)? {
        Some((_, out)) => {
            let f = fidelity(&out, &make_generalized_switch(&target)?)?;
            r.check("fidelity on success", 1.0 - f, tol);
            r.value("fidelity", f);
        }
        None => r.value("fidelity", Value::Null),
    }
    Ok(())
}

pub fn distill_rate(a: &RateArgs, tol: f64, r: &mut Report) -> Result<(), CliError> {
    let p = distribution(&a.p)?;
    let rate = filter_distill_rate(p);
    r.value("rate", rate);
    if a.trials > 0 {
        r.seed = Some(a.seed);
        let (mean, se) = filter_distill_mc(p, a.n, a.trials, a.seed)?;
        r.value("mc_rate", mean);
        r.value("mc_std_err", se);
        r.check("monte carlo vs analytic (4 std err)", (mean - rate).abs(), 4.0 * se + tol);
    }
    Ok(())
}

/// Largest |z|-score of the weight histogram against `Binomial(N, p1)`.
pub fn binomial_z(hist: &[usize], p1: f64, trials: usize) -> f64 {
    let n = hist.len() - 1;
    let t = trials as f64;
    let mut worst = 0.0f64;
    let mut c = 1.0f64;
    for (j, &count) in hist.iter().enumerate() {
        if j > 0 {
            c = c * (n + 1 - j) as f64 / j as f64;
        }
        let pj = c * p1.powi(j as i32) * (1.0 - p1).powi((n - j) as i32);
        let var = t * pj * (1.0 - pj);
        let dev = count as f64 - t * pj;
        let z = if var > 0.0 { dev.abs() / var.sqrt() } else if dev.abs() < 0.5 { 0.0 } else { f64::INFINITY };
        worst = worst.max(z);
    }
    worst
}

pub fn distill_multicopy(a: &MulticopyArgs, tol: f64, r: &mut Report) -> Result<(), CliError> {
    let p = distribution(&a.p)?;
    let spec = switch_spec(p, a.d, a.random_specs, &mut stream_rng(a.seed, u64::MAX));
    r.seed = Some(a.seed);
    let rep = multicopy_distill(&spec, a.n, a.trials, a.seed)?;
    r.check("min fidelity", 1.0 - rep.min_fidelity, tol);
    r.check("weight histogram vs binomial (|z|)", binomial_z(&rep.j_histogram, p.p1, rep.trials), 3.0);
    r.value("empirical_rate", rep.empirical_rate);
    r.value("std_err", rep.std_err);
    r.value("expected_rate", rep.expected_rate);
    r.value("j_histogram", &rep.j_histogram);
    r.value("min_fidelity", rep.min_fidelity);
    r.value("n_copies", rep.n_copies);
    r.value("trials", rep.trials);
    Ok(())
}
