//! λ* line search, domain-of-attraction estimates, the Ω(φ) region check
//! and the decision-variable / LMI-row complexity table.

use std::fmt::Write as _;

use serde::Serialize;

use crate::conditions::{build, xi_vector, Certificate, MethodKind};
use crate::error::{Error, Result};
use crate::linalg::{inv_spd, min_eig, Mat, SymMat};
use crate::model::{BoxRegion, JacobianModel, MembershipSpec, TsModel};
use crate::par::{map_collect, Exec};
use crate::sdp::{FeasibilitySolver, Status};

pub const DEFAULT_RANGE: (f64, f64) = (0.001, 100.0);
pub const DEFAULT_SEARCH_TOL: f64 = 1e-3;
pub const DEFAULT_FACE_POINTS: usize = 1000;

/// One bisection probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub lambda: f64,
    #[serde(serialize_with = "status_name")]
    pub verdict: Status,
    pub t_star: f64,
}

fn status_name<S: serde::Serializer>(s: &Status, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.serialize_str(s.as_str())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSearchResult {
    /// Final lower end of the bracket, or `None` if the initial lower end
    /// was already infeasible.
    pub lambda_star: Option<f64>,
    pub iterations: usize,
    pub history: Vec<Probe>,
    pub bracket: (f64, f64),
}

impl LambdaSearchResult {
    /// Probe history as JSON lines.
    pub fn history_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.history {
            let line = serde_json::to_string(p).expect("probe serialises");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Bisection on `[lo, hi]`. `probe` returns the verdict and margin at a λ;
/// anything other than strict feasibility moves the upper end.
pub fn bisect<F>(lo: f64, hi: f64, tol: f64, mut probe: F) -> Result<LambdaSearchResult>
where
    F: FnMut(f64) -> Result<(Status, f64)>,
{
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!("bad search range [{lo}, {hi}]")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("bad search tolerance {tol}")));
    }
    let mut history = Vec::new();
    let mut run = |lambda: f64, history: &mut Vec<Probe>| -> Result<bool> {
        let (verdict, t_star) = probe(lambda)?;
        history.push(Probe {
            lambda,
            verdict,
            t_star,
        });
        Ok(verdict == Status::StrictlyFeasible)
    };
    if !run(lo, &mut history)? {
        return Ok(LambdaSearchResult {
            lambda_star: None,
            iterations: 1,
            history,
            bracket: (lo, hi),
        });
    }
    let (mut l, mut u) = (lo, hi);
    while u - l > tol {
        let mid = 0.5 * (l + u);
        if run(mid, &mut history)? {
            l = mid;
        } else {
            u = mid;
        }
    }
    Ok(LambdaSearchResult {
        lambda_star: Some(l),
        iterations: history.len(),
        history,
        bracket: (l, u),
    })
}

/// Largest λ in `range` for which `method` is strictly feasible.
pub fn lambda_max_search(
    method: &MethodKind,
    model: &TsModel,
    jac: Option<&JacobianModel>,
    range: (f64, f64),
    tol: f64,
    solver: &dyn FeasibilitySolver,
) -> Result<LambdaSearchResult> {
    if method.needs_jacobian() && jac.is_none() {
        return Err(Error::InvalidModel(format!(
            "method '{}' needs jacobian_vertices",
            method.name()
        )));
    }
    bisect(range.0, range.1, tol, |lambda| {
        let problem = build(method, model, jac, lambda)?;
        let out = solver.solve(&problem)?;
        Ok((out.status, out.t_star))
    })
}

/// One row of the λ* comparison: a method (or `None` for a row that is
/// listed only for reference) and its published λ*.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonCase {
    pub label: String,
    pub method: Option<MethodKind>,
    pub published: f64,
}

/// The standard comparison for a model with `r` rules: quadratic,
/// augmented-slack, and the two fuzzy-Lyapunov methods at φ ∈ {2, 1, 0.5, 0.1},
/// plus the line-integral reference row.
pub fn comparison_cases(r: usize) -> Vec<ComparisonCase> {
    let case = |label: String, method: Option<MethodKind>, published: f64| ComparisonCase {
        label,
        method,
        published,
    };
    let mut out = vec![
        case("quadratic".into(), Some(MethodKind::Quadratic), 3.8269),
        case("augmented-slack".into(), Some(MethodKind::AugmentedSlack), 5.4749),
    ];
    for (phi, published) in [(2.0, 0.0061), (1.0, 0.0061), (0.5, 0.0061), (0.1, 41.8152)] {
        out.push(case(
            format!("tanaka phi={phi}"),
            Some(MethodKind::Tanaka { phi: vec![phi; r] }),
            published,
        ));
    }
    for (phi, published) in [(2.0, 3.8269), (1.0, 6.7810), (0.5, 12.9333), (0.1, 53.0457)] {
        out.push(case(
            format!("mozelli phi={phi}"),
            Some(MethodKind::Mozelli { phi: vec![phi; r] }),
            published,
        ));
    }
    out.push(case("line-integral".into(), None, 7.7454));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub case: ComparisonCase,
    /// `None` for reference-only rows.
    pub search: Option<LambdaSearchResult>,
}

/// Runs every computable case; the searches are independent and run under `exec`.
pub fn run_comparison(
    cases: &[ComparisonCase],
    model: &TsModel,
    jac: Option<&JacobianModel>,
    range: (f64, f64),
    tol: f64,
    solver: &dyn FeasibilitySolver,
    exec: Exec,
) -> Result<Vec<ComparisonResult>> {
    map_collect(exec, cases, |case| {
        let search = match &case.method {
            Some(m) => Some(lambda_max_search(m, model, jac, range, tol, solver)?),
            None => None,
        };
        Ok(ComparisonResult {
            case: case.clone(),
            search,
        })
    })
    .into_iter()
    .collect()
}

pub fn comparison_table(results: &[ComparisonResult]) -> String {
    let mut out = format!("{:<20} {:>14} {:>12}\n", "method", "lambda*", "published");
    for r in results {
        let computed = match &r.search {
            None => "not computed".to_string(),
            Some(s) => match s.lambda_star {
                Some(l) => format!("{l:.4}"),
                None => "no feasible λ".to_string(),
            },
        };
        let _ = writeln!(out, "{:<20} {:>14} {:>12.4}", r.case.label, computed, r.case.published);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub method: &'static str,
    pub n_d: u64,
    pub n_l: u64,
    /// N_d³·N_l
    pub cost_text: f64,
    /// ln(N_d²·N_l)
    pub cost_fig: f64,
}

/// Closed-form decision-variable counts and LMI row totals for `n` states
/// and `r` rules (Jacobian vertex count taken equal to `r`).
pub fn complexity_report(n: u64, r: u64) -> Result<Vec<ComplexityRow>> {
    if n == 0 || r == 0 {
        return Err(Error::InvalidArgument("n and r must be positive".into()));
    }
    let overflow = || Error::InvalidArgument(format!("counts overflow for n = {n}, r = {r}"));
    let c = |v: Option<u64>| v.ok_or_else(overflow);
    let mul = |a: u64, b: u64| c(a.checked_mul(b));
    let add = |a: u64, b: u64| c(a.checked_add(b));
    let sub = |a: u64, b: u64| c(a.checked_sub(b));

    let tri = mul(n, n + 1)? / 2;
    let nr = mul(n, r)?;
    let pairs = mul(nr, r + 1)? / 2;
    let d = add(add(n, nr)?, mul(n, n)?)?;

    let rows: [(&'static str, u64, u64); 5] = [
        ("quadratic", tri, add(n, nr)?),
        ("tanaka", mul(tri, r)?, add(nr, pairs)?),
        ("mozelli", mul(tri, r + 1)?, add(mul(2, nr)?, pairs)?),
        (
            "line-integral",
            add(add(sub(mul(n, n)?, n)?, nr)?, tri)?,
            add(mul(2, nr)?, mul(nr, r - 1)? / 2)?,
        ),
        (
            "augmented-slack",
            mul(d, add(add(add(n, mul(3, nr)?)?, mul(n, n)?)?, 1)?)? / 2,
            mul(add(add(mul(mul(r, r)?, r)?, mul(r, r)?)?, 2)?, d)? / 2,
        ),
    ];
    Ok(rows
        .into_iter()
        .map(|(method, n_d, n_l)| {
            let (fd, fl) = (n_d as f64, n_l as f64);
            ComplexityRow {
                method,
                n_d,
                n_l,
                cost_text: fd.powi(3) * fl,
                cost_fig: 2.0 * fd.ln() + fl.ln(),
            }
        })
        .collect())
}

pub fn complexity_csv(rows: &[ComplexityRow]) -> String {
    let mut out = String::from("method,N_d,N_l,N_d^3*N_l,ln(N_d^2*N_l)\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:e},{:.6}",
            r.method, r.n_d, r.n_l, r.cost_text, r.cost_fig
        );
    }
    out
}

pub fn complexity_table(rows: &[ComplexityRow]) -> String {
    let mut out = format!(
        "{:<16} {:>10} {:>10} {:>14} {:>14}\n",
        "method", "N_d", "N_l", "N_d^3*N_l", "ln(N_d^2*N_l)"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:>10} {:>10} {:>14.6e} {:>14.6}",
            r.method, r.n_d, r.n_l, r.cost_text, r.cost_fig
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DaKind {
    AnalyticEllipsoid,
    /// Sampled region boundary; the value is an upper estimate of the true
    /// minimum of V over the boundary.
    Grid {
        points_per_face: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaEstimate {
    pub c_star: f64,
    pub kind: DaKind,
}

/// Distance from the origin to the nearer finite bound of coordinate `j`.
fn half_width(region: &BoxRegion, j: usize) -> f64 {
    (-region.lower()[j]).min(region.upper()[j])
}

/// Largest `c` with `{xᵀPx ≤ c}` inside the region's slabs.
pub fn estimate_da_quadratic(p: &SymMat, region: &BoxRegion) -> Result<DaEstimate> {
    if p.dim() != region.dim() {
        return Err(Error::Dimension(format!(
            "P is {0}x{0}, region has dimension {1}",
            p.dim(),
            region.dim()
        )));
    }
    let bounded = region.bounded_coords();
    if bounded.is_empty() {
        return Err(Error::InvalidArgument("region has no bounded face".into()));
    }
    let p_inv = inv_spd(p)?;
    let c_star = bounded
        .iter()
        .map(|&j| {
            let a = half_width(region, j);
            a * a / p_inv.as_mat()[(j, j)]
        })
        .fold(f64::INFINITY, f64::min);
    Ok(DaEstimate {
        c_star,
        kind: DaKind::AnalyticEllipsoid,
    })
}

/// Points on the faces `x_j = l_j` and `x_j = u_j` of every finite bound.
/// Unbounded free coordinates are sampled on `[−radius, radius]`; bounded
/// ones on their interval. About `points_per_face` points per face.
pub fn boundary_grid(region: &BoxRegion, points_per_face: usize, radius: f64) -> Vec<Vec<f64>> {
    let n = region.dim();
    let free = n.saturating_sub(1).max(1);
    // odd counts keep the face centre (other coordinates zero) on the grid
    let per_axis = ((points_per_face as f64).powf(1.0 / free as f64).round() as usize).max(2) | 1;
    let span = |j: usize| {
        let l = if region.lower()[j].is_finite() {
            region.lower()[j]
        } else {
            -radius
        };
        let u = if region.upper()[j].is_finite() {
            region.upper()[j]
        } else {
            radius
        };
        (l, u)
    };
    let mut out = Vec::new();
    for j in region.bounded_coords() {
        for side in [region.lower()[j], region.upper()[j]] {
            if !side.is_finite() {
                continue;
            }
            let others: Vec<usize> = (0..n).filter(|&k| k != j).collect();
            let axes: Vec<Vec<f64>> = others.iter().map(|&k| linspace(span(k), per_axis)).collect();
            for combo in cartesian(&axes) {
                let mut x = vec![0.0; n];
                x[j] = side;
                for (k, v) in others.iter().zip(combo) {
                    x[*k] = v;
                }
                out.push(x);
            }
        }
    }
    out
}

pub fn linspace((a, b): (f64, f64), count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => (0..count)
            .map(|i| a + (b - a) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Cartesian product of the given axes; a single empty point when `axes` is empty.
pub fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Regular grid over a box with finite bounds.
pub fn box_grid(lower: &[f64], upper: &[f64], counts: &[usize]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lower
        .iter()
        .zip(upper)
        .zip(counts)
        .map(|((l, u), c)| linspace((*l, *u), *c))
        .collect();
    cartesian(&axes)
}

/// `V(x) = ξ(x)ᵀ P ξ(x)`.
pub fn augmented_v(p: &Mat, spec: &MembershipSpec, x: &[f64]) -> Result<f64> {
    let xi = nalgebra::DVector::from_vec(xi_vector(x, &spec.eval(x)?));
    if p.nrows() != xi.len() {
        return Err(Error::Dimension(format!(
            "P is {}x{}, ξ has length {}",
            p.nrows(),
            p.ncols(),
            xi.len()
        )));
    }
    Ok((xi.transpose() * p * &xi)[(0, 0)])
}

/// Sampled sublevel bound for the non-quadratic augmented Lyapunov function.
pub fn estimate_da_augmented(
    cert: &Certificate,
    spec: &MembershipSpec,
    region: &BoxRegion,
    points_per_face: usize,
    exec: Exec,
) -> Result<DaEstimate> {
    if !cert.method.needs_jacobian() {
        return Err(Error::InvalidArgument(format!(
            "certificate of method '{}' has no augmented P",
            cert.method.name()
        )));
    }
    let p = cert
        .block("P")
        .ok_or_else(|| Error::ModelInconsistency("certificate lacks block P".into()))?;
    if region.bounded_coords().is_empty() {
        return Err(Error::InvalidArgument("region has no bounded face".into()));
    }
    let lmin = min_eig(p)?;
    if lmin <= 0.0 {
        return Err(Error::NotPositiveDefinite);
    }
    // V ≥ λ_min(P)‖ξ‖² ≥ λ_min(P)‖x‖², so boundary points farther out than
    // sqrt(c0/λ_min) cannot lower the minimum below a value c0 already seen.
    let n = region.dim();
    let mut c0 = f64::INFINITY;
    for j in region.bounded_coords() {
        let mut x = vec![0.0; n];
        for side in [region.lower()[j], region.upper()[j]] {
            if side.is_finite() {
                x[j] = side;
                c0 = c0.min(augmented_v(p, spec, &x)?);
            }
        }
    }
    let radius = (c0 / lmin).sqrt();
    let points = boundary_grid(region, points_per_face, radius);
    let values = map_collect(exec, &points, |x| augmented_v(p, spec, x))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let c_star = values.into_iter().fold(c0, f64::min);
    Ok(DaEstimate {
        c_star,
        kind: DaKind::Grid { points_per_face },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaReport {
    /// Whether each grid point satisfies every derivative bound.
    pub inside: Vec<bool>,
    /// Largest |α̇_i| / φ_i over the grid.
    pub max_ratio: f64,
    pub violations: usize,
}

/// Checks `|∇α_i(x)ᵀ A(α(x)) x| ≤ φ_i` at each grid point.
pub fn omega_region_check(
    model: &TsModel,
    spec: &MembershipSpec,
    phi: &[f64],
    lambda: f64,
    grid: &[Vec<f64>],
    h: f64,
    exec: Exec,
) -> Result<OmegaReport> {
    if phi.len() != spec.r() || phi.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("phi must hold r positive entries".into()));
    }
    let ratios = map_collect(exec, grid, |x| -> Result<f64> {
        let alpha = spec.eval(x)?;
        let a = model.system_matrix(&alpha, lambda)?;
        let xv = nalgebra::DVector::from_column_slice(x);
        let flow = &a * &xv;
        let rates = spec.jacobian_fd(x, h)? * flow;
        Ok(rates.iter().zip(phi).map(|(d, f)| d.abs() / f).fold(0.0, f64::max))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let inside: Vec<bool> = ratios.iter().map(|r| *r <= 1.0).collect();
    Ok(OmegaReport {
        violations: inside.iter().filter(|v| !**v).count(),
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        inside,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::{build_augmented_slack, build_mozelli, build_quadratic, build_tanaka};
    use crate::model::ModelBundle;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ex1_region() -> BoxRegion {
        ModelBundle::example1().model.region().clone()
    }

    #[test]
    fn bisection_finds_a_step() {
        let res = bisect(0.0, 100.0, 1e-4, |l| {
            Ok((
                if l <= 7.25 {
                    Status::StrictlyFeasible
                } else {
                    Status::Infeasible
                },
                0.0,
            ))
        })
        .unwrap();
        let star = res.lambda_star.unwrap();
        assert!((star - 7.25).abs() <= 1e-4);
        assert!(res.bracket.1 - res.bracket.0 <= 1e-4);
        assert_eq!(res.iterations, res.history.len());
    }

    #[test]
    fn bisection_reports_infeasible_start() {
        let res = bisect(0.5, 2.0, 1e-3, |_| Ok((Status::Infeasible, -1.0))).unwrap();
        assert_eq!(res.lambda_star, None);
        assert_eq!(res.history.len(), 1);
        assert!(bisect(2.0, 1.0, 1e-3, |_| Ok((Status::Infeasible, 0.0))).is_err());
        assert!(bisect(0.0, 1.0, 0.0, |_| Ok((Status::Infeasible, 0.0))).is_err());
    }

    #[test]
    fn history_lines_are_json() {
        let res = bisect(0.0, 1.0, 0.25, |l| {
            Ok((
                if l < 0.6 {
                    Status::StrictlyFeasible
                } else {
                    Status::Infeasible
                },
                1.0 - l,
            ))
        })
        .unwrap();
        let text = res.history_jsonl();
        assert_eq!(text.lines().count(), res.history.len());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["verdict"], "feasible");
        assert_eq!(first["lambda"], 0.0);
    }

    #[test]
    fn bisection_lands_on_a_feasible_probe() {
        // feasible set with a gap: the search keeps the last feasible probe
        let res = bisect(0.0, 8.0, 1.0, |l| {
            let ok = l < 1.0 || (3.0..5.0).contains(&l);
            Ok((
                if ok {
                    Status::StrictlyFeasible
                } else {
                    Status::Infeasible
                },
                0.0,
            ))
        })
        .unwrap();
        assert_eq!(res.lambda_star, Some(4.0));
        let lambdas: Vec<f64> = res.history.iter().map(|p| p.lambda).collect();
        assert_eq!(lambdas, vec![0.0, 4.0, 6.0, 5.0]);
    }

    #[test]
    fn complexity_examples() {
        let rows = complexity_report(2, 2).unwrap();
        assert_eq!((rows[0].n_d, rows[0].n_l), (3, 6));
        assert_eq!((rows[4].n_d, rows[4].n_l), (95, 70));
        let rows = complexity_report(3, 3).unwrap();
        assert_eq!((rows[2].n_d, rows[2].n_l), (24, 36));
        let rows = complexity_report(2, 3).unwrap();
        assert_eq!((rows[0].n_d, rows[0].n_l), (3, 8));
        let rows = complexity_report(4, 3).unwrap();
        assert_eq!(rows[4].n_d, 912);
        assert!(complexity_report(0, 1).is_err());
        assert!(complexity_report(1 << 40, 1 << 30).is_err());
        let r = &complexity_report(2, 2).unwrap()[4];
        assert_eq!(r.cost_text, 95f64.powi(3) * 70.0);
        assert_abs_diff_eq!(r.cost_fig, (95f64 * 95.0 * 70.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn complexity_matches_built_problems() {
        // builders and closed forms agree whenever p = r
        for (n, r) in [(1usize, 1usize), (2, 2), (2, 3), (3, 2)] {
            let a: Vec<Mat> = (0..r)
                .map(|i| Mat::from_fn(n, n, |p, q| (p + 2 * q + i) as f64 - 2.0))
                .collect();
            let model = TsModel::new(a, vec![], BoxRegion::unbounded(n)).unwrap();
            let mut jv: Vec<Mat> = (0..r).map(|_| Mat::zeros(r, n)).collect();
            if r > 1 {
                jv[0][(0, 0)] = 1.0;
                jv[0][(1, 0)] = -1.0;
            }
            let jac = JacobianModel::new(jv, r, n).unwrap();
            let phi = vec![1.0; r];
            let rows = complexity_report(n as u64, r as u64).unwrap();
            let built = [
                build_quadratic(&model, 0.0).unwrap(),
                build_tanaka(&model, &phi, 0.0).unwrap(),
                build_mozelli(&model, &phi, 0.0).unwrap(),
            ];
            for (row, prob) in rows.iter().zip(&built) {
                assert_eq!(
                    (row.n_d, row.n_l),
                    (prob.num_scalars() as u64, prob.total_rows() as u64),
                    "{} n={n} r={r}",
                    row.method
                );
            }
            let slack = build_augmented_slack(&model, &jac, 0.0).unwrap();
            assert_eq!(
                (rows[4].n_d, rows[4].n_l),
                (slack.num_scalars() as u64, slack.total_rows() as u64)
            );
        }
    }

    #[test]
    fn quadratic_da_examples() {
        let region = ex1_region();
        let da = estimate_da_quadratic(&SymMat::identity(2), &region).unwrap();
        assert_eq!(da.c_star, FRAC_PI_2 * FRAC_PI_2);
        assert_eq!(da.kind, DaKind::AnalyticEllipsoid);
        let p = SymMat::from_diagonal(&[4.0, 1.0]).unwrap();
        assert_abs_diff_eq!(
            estimate_da_quadratic(&p, &region).unwrap().c_star,
            PI * PI,
            epsilon = 1e-12
        );
        assert!(estimate_da_quadratic(&SymMat::identity(2), &BoxRegion::unbounded(2)).is_err());
        let neg = SymMat::from_diagonal(&[1.0, -1.0]).unwrap();
        assert!(estimate_da_quadratic(&neg, &region).is_err());
    }

    #[test]
    fn asymmetric_bounds_use_nearer_face() {
        let region = BoxRegion::new(vec![-1.0, -3.0], vec![2.0, 0.5]).unwrap();
        let da = estimate_da_quadratic(&SymMat::identity(2), &region).unwrap();
        assert_eq!(da.c_star, 0.25);
    }

    #[test]
    fn boundary_grid_covers_faces() {
        let pts = boundary_grid(&ex1_region(), 100, 3.0);
        assert_eq!(pts.len(), 202);
        assert!(pts.iter().all(|x| x[0].abs() == FRAC_PI_2 && x[1].abs() <= 3.0));
        assert_eq!(box_grid(&[0.0, 0.0], &[1.0, 2.0], &[2, 3]).len(), 6);
        assert_eq!(cartesian(&[]), vec![Vec::<f64>::new()]);
    }

    fn augmented_cert(p: Mat) -> Certificate {
        Certificate {
            method: MethodKind::AugmentedSlack,
            lambda: 3.0,
            margin: 1.0,
            blocks: [("P".to_string(), p)].into(),
        }
    }

    #[test]
    fn augmented_da_identity_and_homogeneity() {
        let b = ModelBundle::example1();
        let spec = b.memberships.as_ref().unwrap();
        let region = b.model.region();
        let id = augmented_cert(Mat::identity(10, 10));
        let da = estimate_da_augmented(&id, spec, region, 1000, Exec::default()).unwrap();
        assert!(da.c_star > 0.0);
        // with P = I the minimum sits at x2 = 0: ‖ξ‖² = a² + a²(α1² + α2²) + a⁴
        let a = FRAC_PI_2;
        assert_abs_diff_eq!(da.c_star, a * a + a * a + a.powi(4), epsilon = 1e-9);
        let scaled = augmented_cert(Mat::identity(10, 10) * 4.0);
        let da4 = estimate_da_augmented(&scaled, spec, region, 1000, Exec::default()).unwrap();
        assert_abs_diff_eq!(da4.c_star, 4.0 * da.c_star, epsilon = 1e-9);
        assert!(matches!(da.kind, DaKind::Grid { points_per_face: 1000 }));
    }

    #[test]
    fn augmented_da_refinement_is_stable() {
        let b = ModelBundle::example1();
        let spec = b.memberships.as_ref().unwrap();
        let m = Mat::from_fn(10, 10, |i, j| ((i * 3 + j * 7) % 5) as f64 * 0.1);
        let p = &m * m.transpose() + Mat::identity(10, 10);
        let cert = augmented_cert(p);
        let coarse = estimate_da_augmented(&cert, spec, b.model.region(), 100, Exec::Sequential).unwrap();
        let fine = estimate_da_augmented(&cert, spec, b.model.region(), 400, Exec::Parallel).unwrap();
        assert!(fine.c_star <= coarse.c_star + 1e-12);
        assert!((coarse.c_star - fine.c_star) / fine.c_star < 0.05);
    }

    #[test]
    fn omega_examples() {
        let b = ModelBundle::example1();
        let spec = b.memberships.as_ref().unwrap();
        let origin = vec![vec![0.0, 0.0]];
        let rep = omega_region_check(&b.model, spec, &[1e-9, 1e-9], 3.0, &origin, 1e-5, Exec::Sequential).unwrap();
        assert_eq!(rep.inside, vec![true]);

        // α̇₁ = cos(x1)·x2/2, so |x2| ≤ 3 keeps both rates below 2
        let grid = box_grid(&[-FRAC_PI_2, -3.0], &[FRAC_PI_2, 3.0], &[21, 21]);
        let rep = omega_region_check(&b.model, spec, &[2.0, 2.0], 3.0, &grid, 1e-5, Exec::default()).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.max_ratio <= 0.75 + 1e-6);

        let tiny = omega_region_check(&b.model, spec, &[1e-9, 1e-9], 3.0, &grid, 1e-5, Exec::default()).unwrap();
        for (x, inside) in grid.iter().zip(&tiny.inside) {
            if x[1] == 0.0 {
                assert!(*inside, "{x:?}");
            }
            if x[0].abs() < 1.2 && x[1].abs() > 0.2 {
                assert!(!*inside, "{x:?}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn table_rows_follow_closed_forms(n in 1u64..12, r in 1u64..12) {
            let rows = complexity_report(n, r).unwrap();
            let d = n + r * n + n * n;
            prop_assert_eq!(rows[0].n_d, n * (n + 1) / 2);
            prop_assert_eq!(rows[0].n_l, n + n * r);
            prop_assert_eq!(rows[1].n_d, n * (n + 1) * r / 2);
            prop_assert_eq!(rows[1].n_l, n * r + n * r * (r + 1) / 2);
            prop_assert_eq!(rows[2].n_d, (r + 1) * n * (n + 1) / 2);
            prop_assert_eq!(rows[2].n_l, 2 * n * r + n * r * (r + 1) / 2);
            prop_assert_eq!(rows[3].n_d, n * n - n + n * r + n * (n + 1) / 2);
            prop_assert_eq!(rows[3].n_l, 2 * n * r + n * r * (r - 1) / 2);
            prop_assert_eq!(rows[4].n_d, d * (n + 3 * r * n + n * n + 1) / 2);
            prop_assert_eq!(rows[4].n_l, (r * r * r + r * r + 2) * d / 2);
        }
    }
}
