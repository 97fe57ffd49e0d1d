//! Takagi–Sugeno models, the membership-Jacobian polytope, the box modelling
//! region, and membership functions given as expressions.
//!
//! Certification only ever looks at vertex matrices. Membership expressions
//! are used for simulation and for validating the vertex data against the
//! actual nonlinear system.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr};
use crate::linalg::{mat_from_rows, mat_to_rows, Mat};
use crate::par::{map_collect, Exec};

/// Slack allowed on simplex membership of evaluated memberships.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Tolerance on the zero column sums of Jacobian vertices.
pub const JACOBIAN_COLSUM_TOL: f64 = 1e-12;
/// A hull fit passes when every sample is reproduced within this Frobenius residual.
pub const HULL_RESIDUAL_TOL: f64 = 1e-4;

/// Axis-aligned box; infinite bounds mark unbounded coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidModel(format!(
                "region bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::InvalidModel(format!("bad bound on x{}", j + 1)));
            }
            if l >= u {
                return Err(Error::InvalidModel(format!("empty interval on x{}", j + 1)));
            }
            if !(l < 0.0 && 0.0 < u) {
                return Err(Error::InvalidModel(format!(
                    "origin is not strictly inside the region on x{}",
                    j + 1
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Whole space in `n` dimensions.
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Coordinates with at least one finite bound.
    pub fn bounded_coords(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&j| self.lower[j].is_finite() || self.upper[j].is_finite())
            .collect()
    }
}

/// Fuzzy system `ẋ = Σ α_i(x) A_i(λ) x` with `A_i(λ) = A_i⁰ + λ A_i¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct TsModel {
    n: usize,
    base: Vec<Mat>,
    slope: Vec<Mat>,
    region: BoxRegion,
}

impl TsModel {
    /// `slope` may be empty, meaning no λ-dependence.
    pub fn new(base: Vec<Mat>, slope: Vec<Mat>, region: BoxRegion) -> Result<Self> {
        let r = base.len();
        if r == 0 {
            return Err(Error::InvalidModel("at least one rule is required".into()));
        }
        let n = base[0].nrows();
        if n == 0 {
            return Err(Error::InvalidModel("state dimension must be positive".into()));
        }
        let slope = if slope.is_empty() {
            vec![Mat::zeros(n, n); r]
        } else {
            slope
        };
        if slope.len() != r {
            return Err(Error::InvalidModel(format!(
                "{r} base matrices but {} slope matrices",
                slope.len()
            )));
        }
        for (i, m) in base.iter().chain(&slope).enumerate() {
            if m.shape() != (n, n) {
                return Err(Error::InvalidModel(format!(
                    "vertex matrix {} is {}x{}, expected {n}x{n}",
                    i % r + 1,
                    m.nrows(),
                    m.ncols()
                )));
            }
            crate::linalg::ensure_finite(m)?;
        }
        if region.dim() != n {
            return Err(Error::InvalidModel(format!(
                "region has dimension {}, state has {n}",
                region.dim()
            )));
        }
        Ok(Self { n, base, slope, region })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.base.len()
    }

    pub fn region(&self) -> &BoxRegion {
        &self.region
    }

    pub fn base(&self) -> &[Mat] {
        &self.base
    }

    pub fn slope(&self) -> &[Mat] {
        &self.slope
    }

    /// `A_i(λ)` for zero-based rule `i`.
    pub fn vertex(&self, i: usize, lambda: f64) -> Mat {
        &self.base[i] + &self.slope[i] * lambda
    }

    pub fn vertices(&self, lambda: f64) -> Vec<Mat> {
        (0..self.r()).map(|i| self.vertex(i, lambda)).collect()
    }

    /// `A(α) = Σ α_i A_i(λ)`.
    pub fn system_matrix(&self, alpha: &[f64], lambda: f64) -> Result<Mat> {
        if alpha.len() != self.r() {
            return Err(Error::Dimension(format!(
                "membership vector has length {}, model has {} rules",
                alpha.len(),
                self.r()
            )));
        }
        let mut a = Mat::zeros(self.n, self.n);
        for (i, &w) in alpha.iter().enumerate() {
            a += self.vertex(i, lambda) * w;
        }
        Ok(a)
    }
}

/// Polytope `co{J_1, …, J_p}` containing the membership Jacobian over the region.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianModel {
    vertices: Vec<Mat>,
}

impl JacobianModel {
    /// Each vertex must be `r × n` with zero column sums (memberships sum to one).
    pub fn new(vertices: Vec<Mat>, r: usize, n: usize) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidModel("jacobian model needs p >= 1 vertices".into()));
        }
        for (k, j) in vertices.iter().enumerate() {
            if j.shape() != (r, n) {
                return Err(Error::InvalidModel(format!(
                    "jacobian vertex {} is {}x{}, expected {r}x{n}",
                    k + 1,
                    j.nrows(),
                    j.ncols()
                )));
            }
            crate::linalg::ensure_finite(j)?;
            for c in 0..n {
                let s: f64 = j.column(c).sum();
                if s.abs() > JACOBIAN_COLSUM_TOL {
                    return Err(Error::InvalidModel(format!(
                        "jacobian vertex {} column {} sums to {s:e}, expected 0",
                        k + 1,
                        c + 1
                    )));
                }
            }
        }
        Ok(Self { vertices })
    }

    pub fn p(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Mat] {
        &self.vertices
    }
}

/// Membership functions `α_1(x), …, α_r(x)` as parsed expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipSpec {
    n: usize,
    sources: Vec<String>,
    exprs: Vec<Expr>,
}

impl MembershipSpec {
    pub fn parse<S: AsRef<str>>(texts: &[S], n: usize) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::InvalidModel("no membership expressions".into()));
        }
        let mut exprs = Vec::with_capacity(texts.len());
        for (i, t) in texts.iter().enumerate() {
            let e = parse_expression(t.as_ref())?;
            if let Some(v) = e.max_var() {
                if v >= n {
                    return Err(Error::InvalidModel(format!(
                        "membership {} references x{} but n = {n}",
                        i + 1,
                        v + 1
                    )));
                }
            }
            exprs.push(e);
        }
        Ok(Self {
            n,
            sources: texts.iter().map(|t| t.as_ref().to_owned()).collect(),
            exprs,
        })
    }

    pub fn r(&self) -> usize {
        self.exprs.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    /// Raw expression values, no simplex check.
    pub fn eval_raw(&self, x: &[f64]) -> Vec<f64> {
        self.exprs.iter().map(|e| e.eval(x)).collect()
    }

    /// Evaluates `α(x)` and checks that it lies on the unit simplex. Components
    /// within [`SIMPLEX_TOL`] outside `[0, 1]` are clamped.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {}",
                x.len(),
                self.n
            )));
        }
        let mut alpha = self.eval_raw(x);
        for (i, a) in alpha.iter_mut().enumerate() {
            if !a.is_finite() || *a < -SIMPLEX_TOL || *a > 1.0 + SIMPLEX_TOL {
                return Err(Error::ModelInconsistency(format!(
                    "alpha_{} = {a} outside [0, 1] at x = {x:?}",
                    i + 1
                )));
            }
            *a = a.clamp(0.0, 1.0);
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::ModelInconsistency(format!(
                "memberships sum to {sum} at x = {x:?}"
            )));
        }
        Ok(alpha)
    }

    /// Central-difference Jacobian `∂α/∂x` (`r × n`) with step `h`.
    pub fn jacobian_fd(&self, x: &[f64], h: f64) -> Result<Mat> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {}",
                x.len(),
                self.n
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!("step {h} must be positive")));
        }
        let mut jac = Mat::zeros(self.r(), self.n);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for j in 0..self.n {
            xp[j] = x[j] + h;
            xm[j] = x[j] - h;
            let width = xp[j] - xm[j];
            if width == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "step {h} underflows at x{} = {}",
                    j + 1,
                    x[j]
                )));
            }
            let ap = self.eval_raw(&xp);
            let am = self.eval_raw(&xm);
            for i in 0..self.r() {
                jac[(i, j)] = (ap[i] - am[i]) / width;
            }
            xp[j] = x[j];
            xm[j] = x[j];
        }
        Ok(jac)
    }
}

/// Outcome of fitting each sampled Jacobian by a simplex combination of vertices.
#[derive(Debug, Clone)]
pub struct HullReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Sample where the largest residual occurred.
    pub worst_point: Vec<f64>,
    pub passed: bool,
}

/// Minimises `‖Σ β_k J_k − target‖_F` over the probability simplex.
///
/// Every support set is tried and the equality-constrained problem on it is
/// solved exactly; this is cheap for the handful of vertices used in practice.
/// Returns `(β, residual)`.
pub fn simplex_least_squares(vertices: &[Mat], target: &Mat) -> (Vec<f64>, f64) {
    let p = vertices.len();
    assert!((1..=16).contains(&p), "simplex fit supports 1..=16 vertices");
    let gram = DMatrix::from_fn(p, p, |a, b| vertices[a].dot(&vertices[b]));
    let lin: Vec<f64> = vertices.iter().map(|v| v.dot(target)).collect();
    let objective = |beta: &[f64]| -> f64 {
        let mut comb = Mat::zeros(target.nrows(), target.ncols());
        for (b, v) in beta.iter().zip(vertices) {
            comb += v * *b;
        }
        (comb - target).norm()
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 1u32..(1 << p) {
        let support: Vec<usize> = (0..p).filter(|k| mask & (1 << k) != 0).collect();
        let s = support.len();
        // KKT system: [G_SS 1; 1ᵀ 0] [β; ν] = [h_S; 1]
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = nalgebra::DVector::zeros(s + 1);
        for (a, &ka) in support.iter().enumerate() {
            for (b, &kb) in support.iter().enumerate() {
                kkt[(a, b)] = gram[(ka, kb)];
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = lin[ka];
        }
        rhs[s] = 1.0;
        let Ok(sol) = kkt.svd(true, true).solve(&rhs, 1e-12) else {
            continue;
        };
        if sol.iter().take(s).any(|v| !v.is_finite() || *v < -1e-12) {
            continue;
        }
        let mut beta = vec![0.0; p];
        for (a, &k) in support.iter().enumerate() {
            beta[k] = sol[a].max(0.0);
        }
        let total: f64 = beta.iter().sum();
        if total <= 0.0 {
            continue;
        }
        beta.iter_mut().for_each(|b| *b /= total);
        let res = objective(&beta);
        if best.as_ref().is_none_or(|(_, r)| res < *r) {
            best = Some((beta, res));
        }
    }
    best.unwrap_or_else(|| {
        let mut beta = vec![0.0; p];
        beta[0] = 1.0;
        let r = objective(&beta);
        (beta, r)
    })
}

/// Checks that the finite-difference Jacobian at every sample lies in the
/// vertex polytope (within [`HULL_RESIDUAL_TOL`]).
pub fn check_jacobian_hull(
    spec: &MembershipSpec,
    jac: &JacobianModel,
    samples: &[Vec<f64>],
    h: f64,
    exec: Exec,
) -> Result<HullReport> {
    let residuals: Vec<f64> = map_collect(exec, samples, |x| {
        spec.jacobian_fd(x, h)
            .map(|j| simplex_least_squares(jac.vertices(), &j).1)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let (worst, max_residual) =
        residuals
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    Ok(HullReport {
        worst_point: samples.get(worst).cloned().unwrap_or_default(),
        passed: max_residual <= HULL_RESIDUAL_TOL,
        max_residual,
        residuals,
    })
}

/// Matrix as it appears in JSON files: either a list of rows or a flat
/// row-major list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixJson {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl MatrixJson {
    pub fn to_mat(&self, rows: usize, cols: usize) -> Result<Mat> {
        let m = match self {
            MatrixJson::Rows(r) => mat_from_rows(r)?,
            MatrixJson::Flat(v) => crate::linalg::mat_from_row_major(rows, cols, v)?,
        };
        if m.shape() != (rows, cols) {
            return Err(Error::InvalidModel(format!(
                "matrix is {}x{}, expected {rows}x{cols}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }

    pub fn from_mat(m: &Mat) -> Self {
        MatrixJson::Rows(mat_to_rows(m))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexJson {
    #[serde(rename = "A0")]
    pub a0: MatrixJson,
    #[serde(rename = "A1", default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<MatrixJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionJson {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

/// On-disk model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    pub vertices: Vec<VertexJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobian_vertices: Option<Vec<MatrixJson>>,
    pub region: RegionJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memberships: Option<Vec<String>>,
}

/// A model together with its optional Jacobian polytope and memberships.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub model: TsModel,
    pub jacobian: Option<JacobianModel>,
    pub memberships: Option<MembershipSpec>,
}

const EXAMPLE1_JSON: &str = include_str!("../examples/ex1.json");

impl ModelBundle {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        let (n, r) = (f.n, f.r);
        if n == 0 || r == 0 {
            return Err(Error::InvalidModel("n and r must be positive".into()));
        }
        if f.vertices.len() != r {
            return Err(Error::InvalidModel(format!(
                "r = {r} but {} vertices given",
                f.vertices.len()
            )));
        }
        let mut base = Vec::with_capacity(r);
        let mut slope = Vec::with_capacity(r);
        for v in &f.vertices {
            base.push(v.a0.to_mat(n, n)?);
            slope.push(match &v.a1 {
                Some(m) => m.to_mat(n, n)?,
                None => Mat::zeros(n, n),
            });
        }
        let bound = |b: &Option<f64>, inf: f64| b.unwrap_or(inf);
        if f.region.lower.len() != n || f.region.upper.len() != n {
            return Err(Error::InvalidModel(format!("region bounds must have length n = {n}")));
        }
        let region = BoxRegion::new(
            f.region.lower.iter().map(|b| bound(b, f64::NEG_INFINITY)).collect(),
            f.region.upper.iter().map(|b| bound(b, f64::INFINITY)).collect(),
        )?;
        let model = TsModel::new(base, slope, region)?;
        let jacobian = match &f.jacobian_vertices {
            Some(js) => {
                if let Some(p) = f.p {
                    if p != js.len() {
                        return Err(Error::InvalidModel(format!(
                            "p = {p} but {} jacobian vertices given",
                            js.len()
                        )));
                    }
                }
                let mats = js.iter().map(|j| j.to_mat(r, n)).collect::<Result<Vec<_>>>()?;
                Some(JacobianModel::new(mats, r, n)?)
            }
            None => {
                if f.p.is_some_and(|p| p > 0) {
                    return Err(Error::InvalidModel("p given without jacobian_vertices".into()));
                }
                None
            }
        };
        let memberships = match &f.memberships {
            Some(m) => {
                if m.len() != r {
                    return Err(Error::InvalidModel(format!(
                        "r = {r} but {} membership expressions given",
                        m.len()
                    )));
                }
                Some(MembershipSpec::parse(m, n)?)
            }
            None => None,
        };
        Ok(Self {
            model,
            jacobian,
            memberships,
        })
    }

    /// The bundled two-rule pendulum-like example with its λ direction,
    /// Jacobian vertices, slab region and sine memberships.
    pub fn example1() -> Self {
        Self::from_json(EXAMPLE1_JSON).expect("bundled example model is valid")
    }

    pub fn example1_json() -> &'static str {
        EXAMPLE1_JSON
    }
}
