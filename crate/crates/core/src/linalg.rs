//! Dense complex operators and vectors over named tensor factors.
//!
//! Storage is row-major with big-endian multi-indices: the first factor in
//! the list is the most significant digit of a basis index.

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-9;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// What a tensor factor stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "C")]
    Control,
    #[serde(rename = "P")]
    Past,
    #[serde(rename = "A_I")]
    AliceIn,
    #[serde(rename = "A_O")]
    AliceOut,
    #[serde(rename = "B_I")]
    BobIn,
    #[serde(rename = "B_O")]
    BobOut,
    #[serde(rename = "F")]
    Future,
    #[serde(rename = "C'")]
    ControlPrime,
    #[serde(rename = "A_I'")]
    AliceInPrime,
    #[serde(rename = "A_O'")]
    AliceOutPrime,
    #[serde(rename = "B_I'")]
    BobInPrime,
    #[serde(rename = "B_O'")]
    BobOutPrime,
    #[serde(rename = "ancilla")]
    Ancilla,
    #[serde(rename = "copy")]
    Copy,
}

impl Role {
    /// The seven slots of a process, in the library's canonical order.
    pub const PROCESS: [Role; 7] = [
        Role::Control,
        Role::Past,
        Role::AliceIn,
        Role::AliceOut,
        Role::BobIn,
        Role::BobOut,
        Role::Future,
    ];

    pub fn canonical_name(self) -> &'static str {
        match self {
            Role::Control => "C",
            Role::Past => "P",
            Role::AliceIn => "A_I",
            Role::AliceOut => "A_O",
            Role::BobIn => "B_I",
            Role::BobOut => "B_O",
            Role::Future => "F",
            Role::ControlPrime => "C'",
            Role::AliceInPrime => "A_I'",
            Role::AliceOutPrime => "A_O'",
            Role::BobInPrime => "B_I'",
            Role::BobOutPrime => "B_O'",
            Role::Ancilla => "ancilla",
            Role::Copy => "copy",
        }
    }

    pub fn primed(self) -> Option<Role> {
        Some(match self {
            Role::Control => Role::ControlPrime,
            Role::AliceIn => Role::AliceInPrime,
            Role::AliceOut => Role::AliceOutPrime,
            Role::BobIn => Role::BobInPrime,
            Role::BobOut => Role::BobOutPrime,
            _ => return None,
        })
    }

    pub fn unprimed(self) -> Option<Role> {
        Some(match self {
            Role::ControlPrime => Role::Control,
            Role::AliceInPrime => Role::AliceIn,
            Role::AliceOutPrime => Role::AliceOut,
            Role::BobInPrime => Role::BobIn,
            Role::BobOutPrime => Role::BobOut,
            _ => return None,
        })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

/// A named tensor factor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactorLabel {
    pub name: String,
    pub dim: usize,
    pub role: Role,
}

impl FactorLabel {
    pub fn new(name: impl Into<String>, dim: usize, role: Role) -> Self {
        Self { name: name.into(), dim, role }
    }

    /// Factor named after its role.
    pub fn of(role: Role, dim: usize) -> Self {
        Self::new(role.canonical_name(), dim, role)
    }

    pub fn ancilla(name: impl Into<String>, dim: usize) -> Self {
        Self::new(name, dim, Role::Ancilla)
    }
}

fn validate_factors(factors: &[FactorLabel]) -> Result<usize> {
    let mut seen = HashSet::new();
    let mut total = 1usize;
    for f in factors {
        if f.dim == 0 {
            return Err(Error::ZeroDimension(f.name.clone()));
        }
        if !seen.insert(f.name.as_str()) {
            return Err(Error::DuplicateFactor(f.name.clone()));
        }
        total *= f.dim;
    }
    Ok(total)
}

fn strides(factors: &[FactorLabel]) -> Vec<usize> {
    let mut s = vec![1usize; factors.len()];
    for i in (0..factors.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * factors[i + 1].dim;
    }
    s
}

/// Linear offsets of every multi-index over `positions`, first position most significant.
fn offsets(factors: &[FactorLabel], strides: &[usize], positions: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &p in positions {
        let mut next = Vec::with_capacity(out.len() * factors[p].dim);
        for &o in &out {
            for i in 0..factors[p].dim {
                next.push(o + i * strides[p]);
            }
        }
        out = next;
    }
    out
}

fn positions_of(factors: &[FactorLabel], names: &[&str]) -> Result<Vec<usize>> {
    let mut pos = Vec::with_capacity(names.len());
    for n in names {
        let p = factors
            .iter()
            .position(|f| f.name == *n)
            .ok_or_else(|| Error::UnknownFactor(n.to_string()))?;
        if pos.contains(&p) {
            return Err(Error::DuplicateFactor(n.to_string()));
        }
        pos.push(p);
    }
    Ok(pos)
}

fn complement(n: usize, pos: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| !pos.contains(i)).collect()
}

/// Map from new linear index to old linear index when factors are reordered.
fn permutation_map(factors: &[FactorLabel], order: &[&str]) -> Result<(Vec<FactorLabel>, Vec<usize>)> {
    let names: Vec<String> = order.iter().map(|s| s.to_string()).collect();
    if order.len() != factors.len() {
        return Err(Error::NotAPermutation(names));
    }
    let pos = positions_of(factors, order).map_err(|_| Error::NotAPermutation(names))?;
    let st = strides(factors);
    let new_factors = pos.iter().map(|&p| factors[p].clone()).collect();
    Ok((new_factors, offsets(factors, &st, &pos)))
}

fn same_layout(a: &[FactorLabel], b: &[FactorLabel]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.name == y.name && x.dim == y.dim)
}

fn name_list(factors: &[FactorLabel]) -> Vec<&str> {
    factors.iter().map(|f| f.name.as_str()).collect()
}

/// A square complex matrix acting on the tensor product of its factors.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledOperator {
    factors: Vec<FactorLabel>,
    data: Vec<C64>,
}

impl LabeledOperator {
    pub fn new(factors: Vec<FactorLabel>, data: Vec<C64>) -> Result<Self> {
        let d = validate_factors(&factors)?;
        if data.len() != d * d {
            return Err(Error::DataLength { expected: d * d, got: data.len() });
        }
        Ok(Self { factors, data })
    }

    pub fn zeros(factors: Vec<FactorLabel>) -> Result<Self> {
        let d = validate_factors(&factors)?;
        Ok(Self { factors, data: vec![ZERO; d * d] })
    }

    pub fn identity(factors: Vec<FactorLabel>) -> Result<Self> {
        let mut op = Self::zeros(factors)?;
        let d = op.dim();
        for i in 0..d {
            op.data[i * d + i] = ONE;
        }
        Ok(op)
    }

    pub fn from_matrix(factors: Vec<FactorLabel>, m: &DMatrix<C64>) -> Result<Self> {
        let d = validate_factors(&factors)?;
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DataLength { expected: d * d, got: m.len() });
        }
        let mut data = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                data.push(m[(r, c)]);
            }
        }
        Ok(Self { factors, data })
    }

    pub fn factors(&self) -> &[FactorLabel] {
        &self.factors
    }

    pub fn names(&self) -> Vec<&str> {
        name_list(&self.factors)
    }

    pub fn factor(&self, name: &str) -> Option<&FactorLabel> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim() + col]
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.data)
    }

    pub fn trace(&self) -> C64 {
        let d = self.dim();
        (0..d).map(|i| self.data[i * d + i]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { factors: self.factors.clone(), data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim();
        let mut data = vec![ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                data[c * d + r] = self.data[r * d + c].conj();
            }
        }
        Self { factors: self.factors.clone(), data }
    }

    /// Express `other` in this operator's factor order (same names required).
    fn aligned<'a>(&self, other: &'a Self) -> Result<Cow<'a, [C64]>> {
        if same_layout(&self.factors, &other.factors) {
            return Ok(Cow::Borrowed(&other.data));
        }
        let p = other.permute_factors(&self.names())?;
        for (a, b) in self.factors.iter().zip(&p.factors) {
            if a.dim != b.dim {
                return Err(Error::DimensionMismatch { name: a.name.clone(), left: a.dim, right: b.dim });
            }
        }
        Ok(Cow::Owned(p.data))
    }

    /// Sum of two operators over the same factors (order may differ).
    pub fn add(&self, other: &Self) -> Result<Self> {
        let o = self.aligned(other)?;
        let data = self.data.iter().zip(o.iter()).map(|(a, b)| a + b).collect();
        Ok(Self { factors: self.factors.clone(), data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let o = self.aligned(other)?;
        let data = self.data.iter().zip(o.iter()).map(|(a, b)| a - b).collect();
        Ok(Self { factors: self.factors.clone(), data })
    }

    /// Largest entrywise deviation from `other`, after aligning factor order.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let o = self.aligned(other)?;
        Ok(self.data.iter().zip(o.iter()).fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }

    /// Matrix product over identical factors (order of `other` is aligned first).
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let o = self.aligned(other)?;
        let d = self.dim();
        let b = DMatrix::from_row_slice(d, d, &o);
        Self::from_matrix(self.factors.clone(), &(self.to_matrix() * b))
    }

    /// Max-abs entry of the anti-Hermitian part.
    pub fn hermiticity_residual(&self) -> f64 {
        let d = self.dim();
        let mut m = 0.0f64;
        for r in 0..d {
            for c in r..d {
                let a = (self.data[r * d + c] - self.data[c * d + r].conj()) * 0.5;
                m = m.max(a.norm());
            }
        }
        m
    }

    /// Ascending eigenvalues with the default Hermiticity tolerance.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        self.hermitian_eigenvalues_tol(HERMITIAN_TOL)
    }

    pub fn hermitian_eigenvalues_tol(&self, tol: f64) -> Result<Vec<f64>> {
        let res = self.hermiticity_residual();
        if res > tol * self.max_abs().max(1.0) {
            return Err(Error::NotHermitian(res));
        }
        let m = self.to_matrix();
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        Ok(ev)
    }

    /// Kronecker product; factors of `self` come first.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        validate_factors(&factors)?;
        let (da, db) = (self.dim(), other.dim());
        let d = da * db;
        let mut data = vec![ZERO; d * d];
        for ra in 0..da {
            for ca in 0..da {
                let a = self.data[ra * da + ca];
                if a == ZERO {
                    continue;
                }
                for rb in 0..db {
                    let row = (ra * db + rb) * d + ca * db;
                    let src = &other.data[rb * db..(rb + 1) * db];
                    for (dst, b) in data[row..row + db].iter_mut().zip(src) {
                        *dst = a * b;
                    }
                }
            }
        }
        Ok(Self { factors, data })
    }

    pub fn partial_trace(&self, names: &[&str]) -> Result<Self> {
        let pos = positions_of(&self.factors, names)?;
        let keep = complement(self.factors.len(), &pos);
        let st = strides(&self.factors);
        let k = offsets(&self.factors, &st, &keep);
        let t = offsets(&self.factors, &st, &pos);
        let d = self.dim();
        let dk = k.len();
        let mut data = vec![ZERO; dk * dk];
        for (r, &kr) in k.iter().enumerate() {
            for (c, &kc) in k.iter().enumerate() {
                let mut acc = ZERO;
                for &o in &t {
                    acc += self.data[(kr + o) * d + kc + o];
                }
                data[r * dk + c] = acc;
            }
        }
        Ok(Self { factors: keep.iter().map(|&p| self.factors[p].clone()).collect(), data })
    }

    /// Transpose in the computational basis of the named factors only.
    pub fn partial_transpose(&self, names: &[&str]) -> Result<Self> {
        let pos = positions_of(&self.factors, names)?;
        let rest = complement(self.factors.len(), &pos);
        let st = strides(&self.factors);
        let k = offsets(&self.factors, &st, &rest);
        let t = offsets(&self.factors, &st, &pos);
        let d = self.dim();
        let mut data = vec![ZERO; d * d];
        for &rk in &k {
            for &ck in &k {
                for &rt in &t {
                    for &ct in &t {
                        data[(rk + rt) * d + ck + ct] = self.data[(rk + ct) * d + ck + rt];
                    }
                }
            }
        }
        Ok(Self { factors: self.factors.clone(), data })
    }

    pub fn permute_factors(&self, order: &[&str]) -> Result<Self> {
        let (factors, map) = permutation_map(&self.factors, order)?;
        let d = map.len();
        let mut data = Vec::with_capacity(d * d);
        for &r in &map {
            let row = &self.data[r * d..(r + 1) * d];
            data.extend(map.iter().map(|&c| row[c]));
        }
        Ok(Self { factors, data })
    }

    /// Flat offsets of every multi-index over `names`, first name most
    /// significant, into a row (or column) of this operator.
    pub(crate) fn name_offsets(&self, names: &[&str]) -> Result<Vec<usize>> {
        let pos = positions_of(&self.factors, names)?;
        Ok(offsets(&self.factors, &strides(&self.factors), &pos))
    }

    /// `(1/d_X) 1_X ⊗ Tr_X(op)` expressed over the original factor order.
    pub fn subindex(&self, names: &[&str]) -> Result<Self> {
        if names.is_empty() {
            return Ok(self.clone());
        }
        let pos = positions_of(&self.factors, names)?;
        let traced: Vec<FactorLabel> = pos.iter().map(|&p| self.factors[p].clone()).collect();
        let dx: usize = traced.iter().map(|f| f.dim).product();
        let id = Self::identity(traced)?.scale_real(1.0 / dx as f64);
        id.tensor(&self.partial_trace(names)?)?.permute_factors(&self.names())
    }

    /// Replace factor labels; `f` returns the new label or `None` to keep it.
    /// Dimensions must be preserved.
    pub fn relabel(&self, f: impl Fn(&FactorLabel) -> Option<FactorLabel>) -> Result<Self> {
        let factors = relabel_factors(&self.factors, f)?;
        Ok(Self { factors, data: self.data.clone() })
    }
}

/// `max |Tr_X(_X W · Y) − Tr_X(W · _X Y)|`, which vanishes for all `W`, `Y`.
pub fn hopping_residual(w: &LabeledOperator, y: &LabeledOperator, names: &[&str]) -> Result<f64> {
    let lhs = w.subindex(names)?.matmul(y)?.partial_trace(names)?;
    let rhs = w.matmul(&y.subindex(names)?)?.partial_trace(names)?;
    lhs.max_abs_diff(&rhs)
}

fn relabel_factors(
    factors: &[FactorLabel],
    f: impl Fn(&FactorLabel) -> Option<FactorLabel>,
) -> Result<Vec<FactorLabel>> {
    let mut out = Vec::with_capacity(factors.len());
    for old in factors {
        let new = f(old).unwrap_or_else(|| old.clone());
        if new.dim != old.dim {
            return Err(Error::DimensionMismatch { name: new.name, left: old.dim, right: new.dim });
        }
        out.push(new);
    }
    validate_factors(&out)?;
    Ok(out)
}

/// A complex vector over named factors, e.g. a pure CJ state.
#[derive(Clone, Debug, PartialEq)]
pub struct PureProcess {
    factors: Vec<FactorLabel>,
    data: Vec<C64>,
}

impl PureProcess {
    pub fn new(factors: Vec<FactorLabel>, data: Vec<C64>) -> Result<Self> {
        let d = validate_factors(&factors)?;
        if data.len() != d {
            return Err(Error::DataLength { expected: d, got: data.len() });
        }
        Ok(Self { factors, data })
    }

    pub fn zeros(factors: Vec<FactorLabel>) -> Result<Self> {
        let d = validate_factors(&factors)?;
        Ok(Self { factors, data: vec![ZERO; d] })
    }

    /// Computational basis vector with the given multi-index.
    pub fn basis(factors: Vec<FactorLabel>, index: &[usize]) -> Result<Self> {
        let mut v = Self::zeros(factors)?;
        if index.len() != v.factors.len() {
            return Err(Error::DataLength { expected: v.factors.len(), got: index.len() });
        }
        let st = strides(&v.factors);
        let mut lin = 0;
        for ((i, s), f) in index.iter().zip(&st).zip(&v.factors) {
            if *i >= f.dim {
                return Err(Error::InvalidArgument(format!("index {i} out of range for `{}`", f.name)));
            }
            lin += i * s;
        }
        v.data[lin] = ONE;
        Ok(v)
    }

    pub fn factors(&self) -> &[FactorLabel] {
        &self.factors
    }

    pub fn names(&self) -> Vec<&str> {
        name_list(&self.factors)
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { factors: self.factors.clone(), data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    fn aligned(&self, other: &Self) -> Result<Vec<C64>> {
        if same_layout(&self.factors, &other.factors) {
            return Ok(other.data.clone());
        }
        let p = other.permute_factors(&self.names())?;
        for (a, b) in self.factors.iter().zip(&p.factors) {
            if a.dim != b.dim {
                return Err(Error::DimensionMismatch { name: a.name.clone(), left: a.dim, right: b.dim });
            }
        }
        Ok(p.data)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let o = self.aligned(other)?;
        let data = self.data.iter().zip(&o).map(|(a, b)| a + b).collect();
        Ok(Self { factors: self.factors.clone(), data })
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        let o = self.aligned(other)?;
        Ok(self.data.iter().zip(&o).map(|(a, b)| a.conj() * b).sum())
    }

    /// Phase-insensitive overlap `|⟨a|b⟩|² / (‖a‖²‖b‖²)`.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        let ip = self.inner(other)?;
        Ok(ip.norm_sqr() / (self.norm_sqr() * other.norm_sqr()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let o = self.aligned(other)?;
        Ok(self.data.iter().zip(&o).fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }

    /// `|self⟩⟨self|`.
    pub fn outer(&self) -> LabeledOperator {
        let d = self.dim();
        let mut data = Vec::with_capacity(d * d);
        for a in &self.data {
            data.extend(self.data.iter().map(|b| a * b.conj()));
        }
        LabeledOperator { factors: self.factors.clone(), data }
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        validate_factors(&factors)?;
        let mut data = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.data {
            data.extend(other.data.iter().map(|b| a * b));
        }
        Ok(Self { factors, data })
    }

    pub fn permute_factors(&self, order: &[&str]) -> Result<Self> {
        let (factors, map) = permutation_map(&self.factors, order)?;
        Ok(Self { factors, data: map.iter().map(|&i| self.data[i]).collect() })
    }

    pub fn relabel(&self, f: impl Fn(&FactorLabel) -> Option<FactorLabel>) -> Result<Self> {
        let factors = relabel_factors(&self.factors, f)?;
        Ok(Self { factors, data: self.data.clone() })
    }

    /// `Tr_traced |self⟩⟨self|`, without forming the full outer product.
    pub fn reduced(&self, traced: &[&str]) -> Result<LabeledOperator> {
        let pos = positions_of(&self.factors, traced)?;
        let keep = complement(self.factors.len(), &pos);
        let st = strides(&self.factors);
        let k = offsets(&self.factors, &st, &keep);
        let t = offsets(&self.factors, &st, &pos);
        let m = DMatrix::from_fn(k.len(), t.len(), |r, c| self.data[k[r] + t[c]]);
        let factors = keep.iter().map(|&p| self.factors[p].clone()).collect();
        LabeledOperator::from_matrix(factors, &(&m * m.adjoint()))
    }

    /// Contract `self` with `other` over the named factors of `other`,
    /// without conjugation: `Σ_s a[(x,s)] b[(s,y)]`. Shared factors are
    /// those with equal names; result factors are `self`'s unshared then
    /// `other`'s unshared.
    pub fn contract(&self, other: &Self) -> Result<Self> {
        let shared: Vec<&str> = self
            .factors
            .iter()
            .filter(|f| other.factors.iter().any(|g| g.name == f.name))
            .map(|f| f.name.as_str())
            .collect();
        for n in &shared {
            let (a, b) = (
                self.factors.iter().find(|f| f.name == *n).unwrap(),
                other.factors.iter().find(|f| f.name == *n).unwrap(),
            );
            if a.dim != b.dim {
                return Err(Error::DimensionMismatch { name: n.to_string(), left: a.dim, right: b.dim });
            }
        }
        let xs: Vec<&str> = self.names().into_iter().filter(|n| !shared.contains(n)).collect();
        let ys: Vec<&str> = other.names().into_iter().filter(|n| !shared.contains(n)).collect();
        let a = self.permute_factors(&[xs.clone(), shared.clone()].concat())?;
        let b = other.permute_factors(&[shared.clone(), ys.clone()].concat())?;
        let ds: usize = shared.iter().map(|n| a.factors.iter().find(|f| f.name == *n).unwrap().dim).product();
        let dx = a.dim() / ds;
        let dy = b.dim() / ds;
        let mut data = vec![ZERO; dx * dy];
        for x in 0..dx {
            for s in 0..ds {
                let av = a.data[x * ds + s];
                if av == ZERO {
                    continue;
                }
                let row = &b.data[s * dy..(s + 1) * dy];
                for (dst, bv) in data[x * dy..(x + 1) * dy].iter_mut().zip(row) {
                    *dst += av * bv;
                }
            }
        }
        let mut factors: Vec<FactorLabel> = a.factors[..xs.len()].to_vec();
        factors.extend(b.factors[shared.len()..].iter().cloned());
        Self::new(factors, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(name: &str) -> FactorLabel {
        FactorLabel::new(name, 2, Role::Ancilla)
    }

    fn diag(name: &str, d: &[f64]) -> LabeledOperator {
        let n = d.len();
        let mut data = vec![ZERO; n * n];
        for (i, v) in d.iter().enumerate() {
            data[i * n + i] = C64::new(*v, 0.0);
        }
        LabeledOperator::new(vec![FactorLabel::new(name, n, Role::Ancilla)], data).unwrap()
    }

    fn max_ent(a: &str, b: &str) -> PureProcess {
        let mut v = PureProcess::zeros(vec![q(a), q(b)]).unwrap();
        v.data[0] = ONE;
        v.data[3] = ONE;
        v
    }

    #[test]
    fn tensor_of_identities() {
        let c = LabeledOperator::identity(vec![q("C")]).unwrap();
        let p = LabeledOperator::identity(vec![q("P")]).unwrap();
        let t = c.tensor(&p).unwrap();
        assert_eq!(t.names(), vec!["C", "P"]);
        assert_eq!(t, LabeledOperator::identity(vec![q("C"), q("P")]).unwrap());
    }

    #[test]
    fn tensor_of_projectors() {
        let t = diag("C", &[1.0, 0.0]).tensor(&diag("P", &[0.0, 1.0])).unwrap();
        let want = diag("X", &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.data(), want.data());
    }

    #[test]
    fn duplicate_names_rejected() {
        let c = LabeledOperator::identity(vec![q("C")]).unwrap();
        assert_eq!(c.tensor(&c), Err(Error::DuplicateFactor("C".into())));
    }

    #[test]
    fn trace_of_identity() {
        let id = LabeledOperator::identity(vec![q("X"), q("Y")]).unwrap();
        let r = id.partial_trace(&["X"]).unwrap();
        assert_eq!(r, LabeledOperator::identity(vec![q("Y")]).unwrap().scale_real(2.0));
    }

    #[test]
    fn trace_of_max_entangled() {
        let r = max_ent("X", "X'").outer().partial_trace(&["X"]).unwrap();
        assert_eq!(r, LabeledOperator::identity(vec![q("X'")]).unwrap());
        assert!(max_ent("X", "Y").outer().partial_trace(&["Z"]).is_err());
    }

    #[test]
    fn transpose_of_max_entangled_is_swap() {
        let pt = max_ent("X", "X'").outer().partial_transpose(&["X'"]).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let (r0, r1) = (r / 2, r % 2);
                let want = if c == r1 * 2 + r0 { 1.0 } else { 0.0 };
                assert_eq!(pt.entry(r, c), C64::new(want, 0.0));
            }
        }
    }

    #[test]
    fn eigenvalues_sorted() {
        assert_eq!(diag("X", &[3.0, -1.0]).hermitian_eigenvalues().unwrap(), vec![-1.0, 3.0]);
        let id = LabeledOperator::identity(vec![q("X")]).unwrap();
        assert_eq!(id.hermitian_eigenvalues().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut data = vec![ZERO; 4];
        data[1] = ONE;
        let op = LabeledOperator::new(vec![q("X")], data).unwrap();
        assert!(matches!(op.hermitian_eigenvalues(), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn permutation_errors() {
        let op = LabeledOperator::identity(vec![q("X"), q("Y")]).unwrap();
        assert!(matches!(op.permute_factors(&["X"]), Err(Error::NotAPermutation(_))));
        assert!(matches!(op.permute_factors(&["X", "X"]), Err(Error::NotAPermutation(_))));
        assert_eq!(op.permute_factors(&["X", "Y"]).unwrap(), op);
    }

    #[test]
    fn contract_max_entangled_pairs() {
        // |1>_{XY} contracted on Y with |1>_{YZ} gives |1>_{XZ}.
        let c = max_ent("X", "Y").contract(&max_ent("Y", "Z")).unwrap();
        assert_eq!(c.names(), vec!["X", "Z"]);
        assert_eq!(c.data(), max_ent("X", "Z").data());
    }

    #[test]
    fn basis_vector() {
        let v = PureProcess::basis(vec![q("X"), q("Y")], &[1, 0]).unwrap();
        assert_eq!(v.data()[2], ONE);
        assert!(PureProcess::basis(vec![q("X")], &[2]).is_err());
    }
}
