//! CJ states, the link product, and process-matrix checks.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{FactorLabel, LabeledOperator, PureProcess, Role, C64, ZERO};
use crate::random::random_isometry;

/// Default tolerance for process checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A linear map between labeled spaces, stored as a `d_out × d_in` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    pub input: Vec<FactorLabel>,
    pub output: Vec<FactorLabel>,
    pub matrix: DMatrix<C64>,
}

impl LinearMap {
    pub fn new(input: Vec<FactorLabel>, output: Vec<FactorLabel>, matrix: DMatrix<C64>) -> Result<Self> {
        let di: usize = input.iter().map(|f| f.dim).product();
        let dout: usize = output.iter().map(|f| f.dim).product();
        if matrix.nrows() != dout || matrix.ncols() != di {
            return Err(Error::DataLength { expected: di * dout, got: matrix.len() });
        }
        Ok(Self { input, output, matrix })
    }

    /// Single-factor map `from → to`.
    pub fn wire(from: FactorLabel, to: FactorLabel, matrix: DMatrix<C64>) -> Result<Self> {
        Self::new(vec![from], vec![to], matrix)
    }

    /// `‖M†M − 1‖_max`.
    pub fn isometry_residual(&self) -> f64 {
        let n = self.matrix.ncols();
        let g = self.matrix.adjoint() * &self.matrix - DMatrix::<C64>::identity(n, n);
        g.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// `|M⟩⟩ = Σ_i |i⟩ ⊗ M|i⟩` over `[input, output]`; no isometry check.
    pub fn cj_vector(&self) -> Result<PureProcess> {
        let (di, dout) = (self.matrix.ncols(), self.matrix.nrows());
        let mut data = Vec::with_capacity(di * dout);
        for i in 0..di {
            for o in 0..dout {
                data.push(self.matrix[(o, i)]);
            }
        }
        let mut factors = self.input.clone();
        factors.extend(self.output.iter().cloned());
        PureProcess::new(factors, data)
    }
}

/// CJ state of an isometric map over `[input, output]`.
pub fn cj_state(map: &LinearMap, tol: f64) -> Result<LabeledOperator> {
    Ok(cj_isometry_vector(map, tol)?.outer())
}

/// CJ vector of an isometric map, with the isometry check.
pub fn cj_isometry_vector(map: &LinearMap, tol: f64) -> Result<PureProcess> {
    let res = map.isometry_residual();
    if res > tol {
        return Err(Error::NotUnitary { kind: "an isometry", residual: res });
    }
    map.cj_vector()
}

/// `|𝟙⟩⟩ = Σ_j |jj⟩` over two factors of equal dimension.
pub fn max_entangled(a: FactorLabel, b: FactorLabel) -> Result<PureProcess> {
    let d = a.dim;
    LinearMap::wire(a, b, DMatrix::identity(d, d))?.cj_vector()
}

/// Link product `D * E = Tr_S[(E ⊗ 1)(1 ⊗ D^{T_S})]` over the shared factors `S`.
///
/// Shared factors are matched by name. The result lists `e`'s unshared
/// factors followed by `d`'s.
pub fn link_product(d: &LabeledOperator, e: &LabeledOperator) -> Result<LabeledOperator> {
    let shared: Vec<&str> = e.names().into_iter().filter(|n| d.factor(n).is_some()).collect();
    for n in &shared {
        let (a, b) = (e.factor(n).unwrap().dim, d.factor(n).unwrap().dim);
        if a != b {
            return Err(Error::DimensionMismatch { name: n.to_string(), left: b, right: a });
        }
    }
    let xs: Vec<&str> = e.names().into_iter().filter(|n| !shared.contains(n)).collect();
    let ys: Vec<&str> = d.names().into_iter().filter(|n| !shared.contains(n)).collect();
    let (ox, os_e) = (e.name_offsets(&xs)?, e.name_offsets(&shared)?);
    let (os_d, oy) = (d.name_offsets(&shared)?, d.name_offsets(&ys)?);
    let (dx, ds, dy) = (ox.len(), os_e.len(), oy.len());
    let (de, dd) = (e.dim(), d.dim());
    let (edata, ddata) = (e.data(), d.data());

    // m[(x,x'),(y,y')] = Σ_{s,s'} E[(x,s),(x',s')] D[(s,y),(s',y')], one (s,s') block at a time.
    let (nx, ny) = (dx * dx, dy * dy);
    let mut m = vec![ZERO; nx * ny];
    let mut coef = vec![ZERO; nx];
    let mut block = vec![ZERO; ny];
    for s in 0..ds {
        for s2 in 0..ds {
            for x in 0..dx {
                for x2 in 0..dx {
                    coef[x * dx + x2] = edata[(ox[x] + os_e[s]) * de + ox[x2] + os_e[s2]];
                }
            }
            if coef.iter().all(|c| *c == ZERO) {
                continue;
            }
            for y in 0..dy {
                let row = &ddata[(os_d[s] + oy[y]) * dd + os_d[s2]..];
                for (slot, &o) in block[y * dy..(y + 1) * dy].iter_mut().zip(&oy) {
                    *slot = row[o];
                }
            }
            for (xx, &c) in coef.iter().enumerate() {
                if c == ZERO {
                    continue;
                }
                for (acc, b) in m[xx * ny..(xx + 1) * ny].iter_mut().zip(&block) {
                    *acc += c * b;
                }
            }
        }
    }
    let n = dx * dy;
    let mut data = vec![ZERO; n * n];
    for x in 0..dx {
        for x2 in 0..dx {
            for y in 0..dy {
                for y2 in 0..dy {
                    data[(x * dy + y) * n + x2 * dy + y2] = m[(x * dx + x2) * ny + y * dy + y2];
                }
            }
        }
    }
    let pick = |op: &LabeledOperator, names: &[&str]| -> Vec<FactorLabel> {
        names.iter().map(|n| op.factor(n).expect("known factor").clone()).collect()
    };
    let mut factors = pick(e, &xs);
    factors.extend(pick(d, &ys));
    LabeledOperator::new(factors, data)
}

/// Link product of pure CJ vectors: `|a⟩⟩ * |b⟩⟩` without conjugation.
pub fn pure_link(a: &PureProcess, b: &PureProcess) -> Result<PureProcess> {
    a.contract(b)
}

/// Either fixed causal order between the two labs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CausalOrder {
    AToB,
    BToA,
}

impl CausalOrder {
    pub fn flipped(self) -> Self {
        match self {
            CausalOrder::AToB => CausalOrder::BToA,
            CausalOrder::BToA => CausalOrder::AToB,
        }
    }
}

/// A positive operator over the seven process slots `[C, P, A_I, A_O, B_I, B_O, F]`.
///
/// Factors are renamed after their roles and stored in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessMatrix {
    op: LabeledOperator,
}

const C: &str = "C";
const P: &str = "P";
const AI: &str = "A_I";
const AO: &str = "A_O";
const BI: &str = "B_I";
const BO: &str = "B_O";
const F: &str = "F";

pub(crate) fn canonical_process_factors(factors: &[FactorLabel]) -> Result<(Vec<String>, Vec<FactorLabel>)> {
    let mut order = Vec::with_capacity(7);
    let mut labels = Vec::with_capacity(7);
    for role in Role::PROCESS {
        let mut hits = factors.iter().filter(|f| f.role == role);
        let f = hits.next().ok_or(Error::MissingRole(role.canonical_name()))?;
        if hits.next().is_some() {
            return Err(Error::RepeatedRole(role.canonical_name()));
        }
        order.push(f.name.clone());
        labels.push(FactorLabel::of(role, f.dim));
    }
    if factors.len() != 7 {
        let extra = factors.iter().find(|f| !Role::PROCESS.contains(&f.role)).unwrap();
        return Err(Error::InvalidArgument(format!("unexpected factor `{}` in process", extra.name)));
    }
    Ok((order, labels))
}

impl ProcessMatrix {
    pub fn new(op: LabeledOperator) -> Result<Self> {
        let (order, labels) = canonical_process_factors(op.factors())?;
        let order: Vec<&str> = order.iter().map(String::as_str).collect();
        let op = op.permute_factors(&order)?;
        let op = LabeledOperator::new(labels, op.data().to_vec())?;
        Ok(Self { op })
    }

    pub fn from_pure(w: &PureProcess) -> Result<Self> {
        Self::new(w.outer())
    }

    pub fn op(&self) -> &LabeledOperator {
        &self.op
    }

    pub fn into_op(self) -> LabeledOperator {
        self.op
    }

    pub fn dim_of(&self, role: Role) -> usize {
        self.op.factor(role.canonical_name()).map(|f| f.dim).unwrap_or(1)
    }

    /// Dimension of the past wire, taken as the target dimension.
    pub fn target_dim(&self) -> usize {
        self.dim_of(Role::Past)
    }

    pub fn control_dim(&self) -> usize {
        self.dim_of(Role::Control)
    }

    fn sub(&self, names: &[&str]) -> LabeledOperator {
        self.op.subindex(names).expect("process factors are canonical")
    }
}

/// Outcome of the validity conditions on a process.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidityReport {
    /// `max(0, -λ_min)`.
    pub positivity_defect: f64,
    pub trace_value: f64,
    pub trace_expected: f64,
    /// Relative trace deviation.
    pub trace_residual: f64,
    /// Max-abs deviations of the signaling, normalization and global-past
    /// conditions, each divided by `scale`.
    pub residuals: [f64; 4],
    /// Max-abs entry of the operator.
    pub scale: f64,
    pub tol: f64,
    pub pass: bool,
}

impl ValidityReport {
    pub const RESIDUAL_NAMES: [&'static str; 4] =
        ["A_O signaling", "B_O signaling", "normalization", "global past"];

    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .copied()
            .fold(self.trace_residual.max(self.positivity_defect / self.scale), f64::max)
    }
}

fn diff(a: &LabeledOperator, b: &LabeledOperator) -> f64 {
    a.max_abs_diff(b).expect("same factors")
}

/// Evaluate every validity condition of a process.
pub fn is_valid_process(w: &ProcessMatrix, tol: f64) -> ValidityReport {
    let op = w.op();
    let scale = op.max_abs().max(f64::MIN_POSITIVE);
    let positivity_defect = match op.hermitian_eigenvalues_tol(tol.max(1e-12)) {
        Ok(ev) => (-ev[0]).max(0.0),
        Err(_) => f64::INFINITY,
    };
    let trace = op.trace();
    let trace_expected = (w.dim_of(Role::Past) * w.dim_of(Role::AliceOut) * w.dim_of(Role::BobOut)) as f64;
    let trace_residual = ((trace - C64::new(trace_expected, 0.0)).norm()) / trace_expected;

    let a = w.sub(&[BI, BO, C, F]);
    let r_c = diff(&a, &a.subindex(&[AO]).unwrap());
    let b = w.sub(&[AI, AO, C, F]);
    let r_d = diff(&b, &b.subindex(&[BO]).unwrap());
    let cf = w.sub(&[C, F]);
    let rhs = w
        .sub(&[AO, C, F])
        .add(&w.sub(&[BO, C, F]))
        .unwrap()
        .sub(&w.sub(&[AO, BO, C, F]))
        .unwrap();
    let r_e = diff(&cf, &rhs);
    let lhs = cf.subindex(&[AI, AO, BI, BO]).unwrap();
    let r_f = diff(&lhs, &w.sub(&[P, AI, AO, BI, BO, C, F]));

    let residuals = [r_c / scale, r_d / scale, r_e / scale, r_f / scale];
    let pass = positivity_defect <= tol * scale
        && trace_residual <= tol
        && residuals.iter().all(|r| *r <= tol);
    ValidityReport {
        positivity_defect,
        trace_value: trace.re,
        trace_expected,
        trace_residual,
        residuals,
        scale,
        tol,
        pass,
    }
}

/// Check compatibility with a fixed order.
///
/// The control qubit is treated as part of the global future together with
/// `F`: for `A→B` the condition is `_{CF} W = _{B_O C F} W`. Returns the
/// verdict at `tol` relative to the max-abs entry, and the raw max-abs residual.
pub fn is_compatible_order(w: &ProcessMatrix, order: CausalOrder, tol: f64) -> (bool, f64) {
    let later_out = match order {
        CausalOrder::AToB => BO,
        CausalOrder::BToA => AO,
    };
    let lhs = w.sub(&[C, F]);
    let rhs = lhs.subindex(&[later_out]).unwrap();
    let r = diff(&lhs, &rhs);
    (r <= tol * w.op().max_abs(), r)
}

/// PPT witness between the control and the target labs.
///
/// Returns `(entangled, λ_min)` where `λ_min` is the smallest eigenvalue of
/// the partial transpose on `C` of the normalized `Tr_{PF} W`. `true` certifies
/// entanglement; `false` is inconclusive.
pub fn is_entangled_control_target(w: &ProcessMatrix, tol: f64) -> (bool, f64) {
    let r = w.op().partial_trace(&[P, F]).unwrap();
    let t = r.trace().re;
    let pt = r.scale_real(1.0 / t).partial_transpose(&[C]).unwrap();
    let ev = pt.hermitian_eigenvalues_tol(1e-6).expect("partial transpose of a Hermitian operator");
    (ev[0] < -tol, ev[0])
}

/// Random process compatible with `order`, built as a comb of random isometries
/// with a `d`-dimensional memory between the labs and a traced environment.
///
/// The last isometry also feeds the control qubit, so `C` is correlated with
/// the target.
pub fn random_causal_process<R: Rng + ?Sized>(order: CausalOrder, d: usize, rng: &mut R) -> ProcessMatrix {
    let (first, second) = match order {
        CausalOrder::AToB => ((Role::AliceIn, Role::AliceOut), (Role::BobIn, Role::BobOut)),
        CausalOrder::BToA => ((Role::BobIn, Role::BobOut), (Role::AliceIn, Role::AliceOut)),
    };
    let f = |r: Role| FactorLabel::of(r, d);
    let m1 = FactorLabel::ancilla("m1", d);
    let m2 = FactorLabel::ancilla("m2", d);
    let env = FactorLabel::ancilla("env", d);
    let v1 = LinearMap::new(vec![f(Role::Past)], vec![f(first.0), m1.clone()], random_isometry(d, d * d, rng));
    let v2 = LinearMap::new(vec![f(first.1), m1], vec![f(second.0), m2.clone()], random_isometry(d * d, d * d, rng));
    let v3 = LinearMap::new(
        vec![f(second.1), m2],
        vec![f(Role::Future), FactorLabel::of(Role::Control, 2), env],
        random_isometry(d * d, 2 * d * d, rng),
    );
    let cj = |m: Result<LinearMap>| m.and_then(|m| m.cj_vector()).expect("comb factors are consistent");
    let v = cj(v1).contract(&cj(v2)).and_then(|a| a.contract(&cj(v3))).expect("memories match");
    let op = v.outer().partial_trace(&["env"]).expect("env present");
    ProcessMatrix::new(op).expect("comb has all process slots")
}

/// `q W_{A→B} + (1-q) W_{B→A}` with independent random causal processes.
pub fn random_separable_mixture<R: Rng + ?Sized>(q: f64, d: usize, rng: &mut R) -> ProcessMatrix {
    let a = random_causal_process(CausalOrder::AToB, d, rng);
    let b = random_causal_process(CausalOrder::BToA, d, rng);
    let op = a.op().scale_real(q).add(&b.op().scale_real(1.0 - q)).unwrap();
    ProcessMatrix::new(op).unwrap()
}
