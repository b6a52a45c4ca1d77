//! Acceptance run: one line per criterion, non-zero exit status on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use causalforge::conversion::{plan_deterministic, plan_filter};
use causalforge::distillation::{
    build_covering_design, disentangle_with_outcomes, filter_distill_mc, filter_distill_rate, multicopy_distill,
    project_type_class, subproject, SwitchBasisState,
};
use causalforge::free_ops::{build_pls, check_nso, check_swap_conditions, preservation_suite, random_loae};
use causalforge::linalg::hopping_residual;
use causalforge::random::{random_hermitian, stream_rng};
use causalforge::switch::{make_fixed_order, make_generalized_switch, make_quantum_switch};
use causalforge::{
    is_compatible_order, is_valid_process, BinaryDistribution, CausalOrder, FactorLabel, GeneralizedSwitchSpec,
    ProcessMatrix, PureProcess, Result,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn bd(p0: f64) -> BinaryDistribution {
    BinaryDistribution::new(p0, 1.0 - p0).expect("valid distribution")
}

fn switch_validity() -> Result<Outcome> {
    let w = ProcessMatrix::from_pure(&make_quantum_switch(2)?)?;
    let r = is_valid_process(&w, 1e-9);
    let worst = r.max_residual();
    outcome(
        r.pass && worst < 1e-9 && (r.trace_value - 8.0).abs() < 1e-9,
        format!("trace {:.12}, worst residual {worst:.2e}", r.trace_value),
    )
}

fn nonseparability_signature() -> Result<Outcome> {
    let qs = ProcessMatrix::from_pure(&make_quantum_switch(2)?)?;
    let (ab, r_ab) = is_compatible_order(&qs, CausalOrder::AToB, 1e-9);
    let (ba, r_ba) = is_compatible_order(&qs, CausalOrder::BToA, 1e-9);
    let mut fixed_ok = true;
    for (bit, order) in [(0u8, CausalOrder::AToB), (1, CausalOrder::BToA)] {
        let w = ProcessMatrix::from_pure(&make_fixed_order(bit, 2)?)?;
        fixed_ok &= is_compatible_order(&w, order, 1e-9).0 && !is_compatible_order(&w, order.flipped(), 1e-9).0;
    }
    outcome(
        !ab && !ba && r_ab > 0.1 && r_ba > 0.1 && fixed_ok,
        format!("switch residuals {r_ab:.3} / {r_ba:.3}, fixed orders pass exactly one: {fixed_ok}"),
    )
}

fn preservation() -> Result<Outcome> {
    let (ops, per_op) = (34, 3);
    let mut pairs = [0usize; 2];
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..ops {
        let mut rng = stream_rng(301, i as u64);
        let loae = random_loae(2, &mut rng);
        let q: f64 = if i == 0 { 0.0 } else { rng.random() };
        let pls = build_pls(2, &[(q, false), (1.0 - q, true)], None)?;
        for (slot, op) in [loae, pls].iter().enumerate() {
            let r = preservation_suite(op, per_op, 1000 + i as u64);
            pairs[slot] += r.samples;
            worst = worst.max(r.max_validity_residual).max(r.max_trace_residual).max(r.max_order_residual);
            failures += r.failures;
        }
    }
    outcome(
        pairs[0] >= 100 && pairs[1] >= 100 && failures == 0 && worst < 1e-8,
        format!("{} LOAE and {} PLS pairs, worst residual {worst:.2e}, failures {failures}", pairs[0], pairs[1]),
    )
}

fn nso_closure() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let op = random_loae(2, &mut stream_rng(401, i));
        let (ok, r) = check_nso(&op, 1e-9);
        if !ok {
            return outcome(false, format!("LOAE {i} fails nonsignaling: {r:?}"));
        }
        worst = worst.max(r.iter().cloned().fold(0.0, f64::max));
    }
    let swap = build_pls(2, &[(1.0, true)], None)?;
    let (swap_nso, _) = check_nso(&swap, 1e-9);
    let (swap_inv, r) = check_swap_conditions(&swap, 1e-9);
    outcome(
        !swap_nso && swap_inv,
        format!("20 LOAE worst {worst:.2e}; swap nonsignaling {swap_nso}, swap conditions {swap_inv} ({:.1e})", r[0]),
    )
}

/// `Σ_π |⟨w′|b_π⟩|² / (‖w′‖² Σ_π ‖b_π‖²)`: fidelity of the branch mixture with `w′`.
fn mixture_fidelity(branches: &[PureProcess], want: &PureProcess) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for b in branches {
        num += want.inner(b)?.norm_sqr();
        den += b.norm_sqr();
    }
    Ok(num / (den * want.norm_sqr()))
}

fn deterministic_conversion() -> Result<Outcome> {
    let source = GeneralizedSwitchSpec::quantum_switch(2);
    let w = make_quantum_switch(2)?;
    let mut targets = vec![GeneralizedSwitchSpec::with_distribution(bd(0.7), 2)];
    for i in 0..50 {
        let mut rng = stream_rng(501, i);
        targets.push(GeneralizedSwitchSpec::random_constrained(bd(rng.random()), 2, &mut rng));
    }
    let mut worst_fid: f64 = 0.0;
    let mut worst_branch: f64 = 0.0;
    for t in &targets {
        let plan = plan_deterministic(&source, t)?;
        let want = make_generalized_switch(t)?;
        let branches = plan.branch_outputs(&w)?;
        for (b, l) in branches.iter().zip([plan.lambda.0, plan.lambda.1]) {
            worst_branch = worst_branch.max(b.max_abs_diff(&want.scale_real(l.sqrt()))?);
        }
        worst_fid = worst_fid.max(1.0 - mixture_fidelity(&branches, &want)?);
    }
    outcome(
        worst_fid < 1e-8 && worst_branch < 1e-8,
        format!("{} targets, 1 - fidelity <= {worst_fid:.1e}, per-branch deviation <= {worst_branch:.1e}", targets.len()),
    )
}

fn filter_probability() -> Result<Outcome> {
    let trials = 100_000;
    let mut worst: f64 = 0.0;
    let mut worst_sigma: f64 = 0.0;
    for i in 0..20 {
        let a = 0.5 + 0.5 * (i as f64 + 0.5) / 20.0;
        let b = 0.5 + (a - 0.5) * ((i % 5) as f64 + 0.5) / 5.0;
        let (p, q) = if i % 2 == 0 { (bd(a), bd(b)) } else { (bd(1.0 - a), bd(b)) };
        let mut rng = stream_rng(601, i);
        let source = GeneralizedSwitchSpec::random_constrained(p, 2, &mut rng);
        let target = GeneralizedSwitchSpec::random_constrained(q, 2, &mut rng);
        let plan = plan_filter(&source, &target)?;
        let analytic = p.min() / q.min();
        let [ok, _] = plan.outcomes(&make_generalized_switch(&source)?)?;
        worst = worst.max((plan.p_success - analytic).abs()).max((ok.probability - analytic).abs());
        let hits = (0..trials).filter(|_| rng.random::<f64>() < ok.probability).count();
        let sigma = (analytic * (1.0 - analytic) / trials as f64).sqrt().max(1e-12);
        worst_sigma = worst_sigma.max((hits as f64 / trials as f64 - analytic).abs() / sigma);
    }
    outcome(
        worst < 1e-10 && worst_sigma <= 3.0,
        format!("20 pairs, Born vs formula {worst:.1e}, Monte Carlo within {worst_sigma:.2} sigma"),
    )
}

fn filter_distillation() -> Result<Outcome> {
    let p = bd(0.8);
    let (mean, se) = filter_distill_mc(p, 1000, 200, 701)?;
    let rate = filter_distill_rate(p);
    outcome((mean - rate).abs() <= 3.0 * se, format!("mean {mean:.4} +- {se:.4}, expected {rate}"))
}

fn worked_example() -> Result<Outcome> {
    let example: Vec<Vec<u32>> = [[0b0011, 0b0101, 0b1100, 0b0110], [0b1001, 0b1010, 0b1100, 0b0110], [0b1001, 0b1010, 0b0011, 0b0101]]
        .iter()
        .map(|s| s.to_vec())
        .collect();
    let design = build_covering_design(4, 2, 2)?;
    let shape = design.len() == 3 && design.n == 2 && design.equivalent_up_to_relabeling(&example);
    let start = SwitchBasisState::from_generalized_switch(&GeneralizedSwitchSpec::quantum_switch(2), 4)?;
    let projected = project_type_class(&start, 2);
    let target = SwitchBasisState::quantum_switch_power(2, 2);
    let mut worst: f64 = 0.0;
    let mut branches = 0;
    for l in 0..design.len() {
        let sub = subproject(&projected, &design, l);
        for m in 0..4u8 {
            let (out, _) = disentangle_with_outcomes(&sub, &design, l, &[m & 1 == 1, m & 2 == 2])?;
            worst = worst.max((1.0 - out.fidelity(&target)?).abs());
            branches += 1;
        }
    }
    outcome(
        shape && worst < 1e-10,
        format!("L={}, n={}, matches up to relabeling: {shape}; {branches} branches, 1 - fidelity <= {worst:.1e}", design.len(), design.n),
    )
}

fn multicopy_rate() -> Result<Outcome> {
    let p = bd(0.7);
    let r = multicopy_distill(&GeneralizedSwitchSpec::with_distribution(p, 2), 8, 500, 901)?;
    let cor5 = filter_distill_rate(p);
    outcome(
        (r.empirical_rate - r.expected_rate).abs() <= 3.0 * r.std_err && r.empirical_rate < cor5 && r.min_fidelity > 1.0 - 1e-10,
        format!(
            "rate {:.4} +- {:.4}, expected {:.4}, filter rate {cor5}, min fidelity {:.12}",
            r.empirical_rate, r.std_err, r.expected_rate, r.min_fidelity
        ),
    )
}

fn hopping() -> Result<Outcome> {
    let f: Vec<FactorLabel> = ["x", "y", "z"].iter().zip([2, 3, 2]).map(|(n, d)| FactorLabel::ancilla(*n, d)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let mut rng = stream_rng(1001, i);
        let w = random_hermitian(f.clone(), &mut rng)?;
        let y = random_hermitian(f.clone(), &mut rng)?;
        let traced: &[&str] = [&["x"][..], &["y"], &["x", "z"], &["y", "z"]][i as usize % 4];
        worst = worst.max(hopping_residual(&w, &y, traced)?);
    }
    outcome(worst < 1e-10, format!("100 pairs, worst residual {worst:.1e}"))
}

type Criterion = (&'static str, Duration, fn() -> Result<Outcome>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("switch validity", Duration::from_secs(1), switch_validity),
        ("causal nonseparability signature", Duration::from_secs(1), nonseparability_signature),
        ("free operations preserve validity and order", Duration::from_secs(120), preservation),
        ("nonsignaling closure", Duration::from_secs(60), nso_closure),
        ("deterministic conversion", Duration::from_secs(60), deterministic_conversion),
        ("filter success probability", Duration::from_secs(60), filter_probability),
        ("filter distillation rate", Duration::from_secs(30), filter_distillation),
        ("four-copy worked example", Duration::from_secs(10), worked_example),
        ("multicopy rate", Duration::from_secs(120), multicopy_rate),
        ("hopping identity", Duration::from_secs(10), hopping),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= *budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {detail} ({:.2} s, budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
