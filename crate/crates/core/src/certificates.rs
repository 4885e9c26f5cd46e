//! Stability certificates for a Hopfield system on a time scale.
//!
//! Each check returns structured numbers (both sides of the inequality and
//! the slack) instead of a bare boolean, so reports can show how close a
//! network is to losing a guarantee.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{HopfieldSystem, NetworkSpec};
use crate::timescale::TimeScale;

/// Real parts within this distance of zero are reported as marginal.
pub const EIGEN_TOL: f64 = 1e-9;

/// Verdict on an inequality `lhs <= rhs` (or `lhs < rhs` when strict).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative when the inequality fails.
    pub slack: f64,
    pub witness: Option<String>,
}

impl Verdict {
    pub fn le(lhs: f64, rhs: f64, what: &str) -> Self {
        Self::build(lhs <= rhs, lhs, rhs, what, "<=")
    }

    pub fn lt(lhs: f64, rhs: f64, what: &str) -> Self {
        Self::build(lhs < rhs, lhs, rhs, what, "<")
    }

    fn build(pass: bool, lhs: f64, rhs: f64, what: &str, op: &str) -> Self {
        let witness = (!pass).then(|| format!("{what}: {lhs} {op} {rhs} violated"));
        Verdict { pass, lhs, rhs, slack: rhs - lhs, witness }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GershgorinDisc {
    pub center: f64,
    pub radius: f64,
}

/// Disc `i` is centered at `A_ii` with radius `Σ_{j≠i} |A_ij|`.
pub fn gershgorin_discs(a: &DMatrix<f64>) -> Vec<GershgorinDisc> {
    (0..a.nrows())
        .map(|i| GershgorinDisc {
            center: a[(i, i)],
            radius: (0..a.ncols()).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MMatrixWitness {
    NegativeDiagonal { index: usize, value: f64 },
    PositiveOffDiagonal { row: usize, col: usize, value: f64 },
    Eigenvalue { re: f64, im: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MMatrixVerdict {
    pub is_z_pattern: bool,
    pub eigen_real_parts: Vec<f64>,
    pub is_m_matrix: bool,
    /// Smallest real part within `EIGEN_TOL` of zero.
    pub marginal: bool,
    /// `Q_ii - Σ_{j≠i}|Q_ij| > 0` for every row, on a Z-pattern matrix.
    pub gershgorin_sufficient: bool,
    pub gershgorin_margin: f64,
    /// The eigen solver failed and the verdict fell back to Gershgorin.
    pub eigen_failed: bool,
    pub witness: Option<MMatrixWitness>,
}

/// M-matrix test: Z sign pattern plus positive real parts of all eigenvalues.
/// The Gershgorin row-dominance condition is reported alongside as the
/// cheap sufficient test.
pub fn is_m_matrix(q: &DMatrix<f64>) -> Result<MMatrixVerdict> {
    let n = q.nrows();
    if q.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: q.ncols() });
    }

    let mut z_witness = None;
    'scan: for i in 0..n {
        for j in 0..n {
            let v = q[(i, j)];
            if i == j && v < 0.0 {
                z_witness = Some(MMatrixWitness::NegativeDiagonal { index: i, value: v });
                break 'scan;
            }
            if i != j && v > 0.0 {
                z_witness = Some(MMatrixWitness::PositiveOffDiagonal { row: i, col: j, value: v });
                break 'scan;
            }
        }
    }
    let is_z_pattern = z_witness.is_none();

    let gershgorin_margin = gershgorin_discs(q).iter().map(|d| d.center - d.radius).fold(f64::INFINITY, f64::min);
    let gershgorin_sufficient = is_z_pattern && gershgorin_margin > EIGEN_TOL;

    let (eigen_real_parts, eig_witness, min_re, eigen_failed) = match linalg::eigenvalues(q) {
        Ok(ev) => {
            let worst = ev.iter().min_by(|a, b| a.re.total_cmp(&b.re)).copied();
            let mut re: Vec<f64> = ev.iter().map(|z| z.re).collect();
            re.sort_by(f64::total_cmp);
            let min_re = worst.map_or(f64::INFINITY, |z| z.re);
            (re, worst.map(|z| MMatrixWitness::Eigenvalue { re: z.re, im: z.im }), min_re, false)
        }
        Err(Error::EigenFailure) => (Vec::new(), None, f64::NAN, true),
        Err(e) => return Err(e),
    };

    let (is_m_matrix, marginal) = if eigen_failed {
        (gershgorin_sufficient, false)
    } else {
        (is_z_pattern && min_re > EIGEN_TOL, min_re.abs() <= EIGEN_TOL)
    };
    let witness = if is_m_matrix {
        None
    } else if let Some(w) = z_witness {
        Some(w)
    } else {
        eig_witness
    };

    Ok(MMatrixVerdict {
        is_z_pattern,
        eigen_real_parts,
        is_m_matrix,
        marginal,
        gershgorin_sufficient,
        gershgorin_margin,
        eigen_failed,
        witness,
    })
}

fn abs_matrix(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.map(f64::abs)
}

/// `(I - μB)Λ⁻¹ - μ|A|`.
pub fn regressivity_matrix(sys: &HopfieldSystem, mu: f64) -> DMatrix<f64> {
    let n = sys.dim();
    let mut q = -abs_matrix(&sys.a) * mu;
    for i in 0..n {
        q[(i, i)] += (1.0 - mu * sys.b[i]) / sys.activation.lipschitz[i];
    }
    q
}

/// `BΛ⁻¹ - |A|`.
pub fn uniqueness_matrix(sys: &HopfieldSystem) -> DMatrix<f64> {
    let mut q = -abs_matrix(&sys.a);
    for i in 0..sys.dim() {
        q[(i, i)] += sys.b[i] / sys.activation.lipschitz[i];
    }
    q
}

/// `BΛ - |A|`, the matrix whose rows the degree condition controls.
pub fn degree_form_matrix(sys: &HopfieldSystem) -> DMatrix<f64> {
    let mut q = -abs_matrix(&sys.a);
    for i in 0..sys.dim() {
        q[(i, i)] += sys.b[i] * sys.activation.lipschitz[i];
    }
    q
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressivityAtMu {
    pub mu: f64,
    pub verdict: MMatrixVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressivityReport {
    pub pass: bool,
    pub checks: Vec<RegressivityAtMu>,
}

/// M-matrix test of `(I - μB)Λ⁻¹ - μ|A|` for every graininess value given.
pub fn check_regressivity_at(sys: &HopfieldSystem, mus: &[f64]) -> Result<RegressivityReport> {
    let checks = mus
        .iter()
        .map(|&mu| Ok(RegressivityAtMu { mu, verdict: is_m_matrix(&regressivity_matrix(sys, mu))? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(RegressivityReport { pass: checks.iter().all(|c| c.verdict.is_m_matrix), checks })
}

/// Regressivity over the horizon `[t0, tf]`: every distinct graininess value
/// observed there, plus `mu_star` when given.
pub fn check_regressivity(
    sys: &HopfieldSystem,
    ts: &TimeScale,
    t0: f64,
    tf: f64,
    mu_star: Option<f64>,
) -> Result<RegressivityReport> {
    let mut mus = ts.grain(t0, tf)?.distinct_values();
    if let Some(m) = mu_star {
        if !mus.iter().any(|&x| (x - m).abs() <= 1e-12 * m.max(1.0)) {
            mus.push(m);
            mus.sort_by(f64::total_cmp);
        }
    }
    check_regressivity_at(sys, &mus)
}

/// `r₀ = ( Σ_i b_i⁻² (Σ_j M_j |a_ij| + |J_i|)² )^{1/2}`.
pub fn equilibrium_bound_r0(sys: &HopfieldSystem) -> f64 {
    let n = sys.dim();
    (0..n)
        .map(|i| {
            let row: f64 = (0..n).map(|j| sys.activation.sup_bound(j) * sys.a[(i, j)].abs()).sum::<f64>() + sys.j[i].abs();
            (row / sys.b[i]).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

pub fn check_uniqueness(sys: &HopfieldSystem) -> Result<MMatrixVerdict> {
    is_m_matrix(&uniqueness_matrix(sys))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeDegreeVerdict {
    pub node: String,
    pub degree: usize,
    /// `λ_i / (R_i (b + c))`.
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeCondition {
    pub pass: bool,
    pub nodes: Vec<NodeDegreeVerdict>,
}

/// `k_i < λ_i / (R_i (b + c))` for every node.
pub fn check_degree_condition(net: &NetworkSpec) -> DegreeCondition {
    let scale = net.payoff.b + net.payoff.c;
    let nodes: Vec<NodeDegreeVerdict> = net
        .nodes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let degree = net.graph.degree(i);
            let bound = p.lambda / (p.resistance * scale);
            NodeDegreeVerdict { node: net.label(i), degree, bound, slack: bound - degree as f64, pass: (degree as f64) < bound }
        })
        .collect();
    DegreeCondition { pass: nodes.iter().all(|v| v.pass), nodes }
}

/// Right-hand side of the size conditions,
/// `(-1 - μ* b̄ + sqrt(1 + 2μ*(b̄ + b̲))) / (μ* L)`.
///
/// Evaluated as `(2b̲ - b̄(q - 1)) / ((q + 1) L)` with `q = sqrt(1 + 2μ*(b̄ + b̲))`
/// and `q - 1 = 2μ*(b̄ + b̲)/(q + 1)`: algebraically identical, free of
/// cancellation for small `μ*`, and exactly `b̲ / L` at `μ* = 0`.
pub fn rhs_mu_bound(b_max: f64, b_min: f64, lipschitz: f64, mu_star: f64) -> f64 {
    debug_assert!(mu_star >= 0.0 && lipschitz > 0.0);
    let s = b_max + b_min;
    let q = (1.0 + 2.0 * mu_star * s).sqrt();
    let q_minus_1 = 2.0 * mu_star * s / (q + 1.0);
    (2.0 * b_min - b_max * q_minus_1) / ((q + 1.0) * lipschitz)
}

/// `ξ* = 2b̲ - 2L‖A‖₂ - μ*(b̄ + L‖A‖₂)²`, the lower bound of the decay
/// coefficient of `V(z) = zᵀz`.
pub fn xi_star(sys: &HopfieldSystem, norm_a: f64, mu_star: f64) -> f64 {
    let la = sys.lipschitz_max() * norm_a;
    2.0 * sys.b_min() - 2.0 * la - mu_star * (sys.b_max() + la).powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeDependent {
    pub pass: bool,
    /// `√n (b + c) max_i k_i/C_i <= rhs`.
    pub condition: Verdict,
    /// `‖A‖₂ <= rhs` checked with the true spectral norm.
    pub direct: Verdict,
    pub xi_star: f64,
}

pub fn check_size_dependent(net: &NetworkSpec, sys: &HopfieldSystem, norm_a: f64, mu_star: f64) -> SizeDependent {
    let rhs = rhs_mu_bound(sys.b_max(), sys.b_min(), sys.lipschitz_max(), mu_star);
    let lhs = (net.len() as f64).sqrt() * (net.payoff.b + net.payoff.c) * net.max_relative_degree();
    let condition = Verdict::le(lhs, rhs, "sqrt(n)(b+c)max k_i/C_i <= rhs");
    let direct = Verdict::le(norm_a, rhs, "||A||_2 <= rhs");
    SizeDependent { pass: condition.pass, condition, direct, xi_star: xi_star(sys, norm_a, mu_star) }
}

/// `(b + c) K*/C_* <= rhs`.
pub fn check_size_independent(net: &NetworkSpec, sys: &HopfieldSystem, mu_star: f64) -> Verdict {
    let rhs = rhs_mu_bound(sys.b_max(), sys.b_min(), sys.lipschitz_max(), mu_star);
    let lhs = (net.payoff.b + net.payoff.c) * net.graph.max_degree() as f64 / net.min_capacitance();
    Verdict::le(lhs, rhs, "(b+c)K*/C_* <= rhs")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentialVerdict {
    pub pass: bool,
    /// `β = b̲ - L‖A‖₂`.
    pub beta: f64,
    /// `1 - μ(t) b̲ > 0` on the horizon.
    pub positive_regressive: bool,
    pub rate: Verdict,
    /// `min{√n(b+c)max k_i/C_i, (b+c)K*/C_*} < b̲/L`.
    pub corollary: Verdict,
}

pub fn check_exponential(
    net: &NetworkSpec,
    sys: &HopfieldSystem,
    norm_a: f64,
    ts: &TimeScale,
    t0: f64,
    tf: f64,
) -> Result<ExponentialVerdict> {
    let b_min = sys.b_min();
    let l = sys.lipschitz_max();
    let positive_regressive = ts.is_positive_regressive(|_| -b_min, t0, tf)?;
    let rate = Verdict::lt(l * norm_a, b_min, "L||A||_2 < b_min");
    let scale = net.payoff.b + net.payoff.c;
    let size_dep = (net.len() as f64).sqrt() * scale * net.max_relative_degree();
    let size_indep = scale * net.graph.max_degree() as f64 / net.min_capacitance();
    let corollary = Verdict::lt(size_dep.min(size_indep), b_min / l, "min(size bounds) < b_min/L");
    Ok(ExponentialVerdict { pass: positive_regressive && rate.pass, beta: b_min - l * norm_a, positive_regressive, rate, corollary })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub spectral: f64,
    pub one: f64,
    pub inf: f64,
    pub sqrt_n_inf: f64,
    /// `(b + c) max_i k_i/C_i`, the closed form of `‖A‖∞` for a built system.
    pub inf_closed_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumBound {
    pub exists: bool,
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub n: usize,
    pub t0: f64,
    pub tf: Option<f64>,
    pub unbounded_above: bool,
    pub mu_star: f64,
    pub observed_mu_max: f64,
    pub b_max: f64,
    pub b_min: f64,
    pub lipschitz_max: f64,
    pub max_degree: usize,
    pub min_capacitance: f64,
    pub norms: NormReport,
    pub regressivity: RegressivityReport,
    pub equilibrium: EquilibriumBound,
    pub uniqueness: MMatrixVerdict,
    pub degree_form: MMatrixVerdict,
    pub degree_condition: DegreeCondition,
    /// Degree condition and the `BΛ⁻¹ - |A|` M-matrix test disagree.
    pub lambda_convention_disagreement: bool,
    pub size_dependent: SizeDependent,
    pub size_independent: Verdict,
    pub exponential: ExponentialVerdict,
    pub all_pass: bool,
    pub failures: Vec<String>,
}

pub fn norm_report(net: &NetworkSpec, sys: &HopfieldSystem) -> Result<NormReport> {
    let inf = linalg::norm_inf(&sys.a);
    Ok(NormReport {
        spectral: linalg::spectral_norm(&sys.a)?,
        one: linalg::norm_1(&sys.a),
        inf,
        sqrt_n_inf: (sys.dim() as f64).sqrt() * inf,
        inf_closed_form: (net.payoff.b + net.payoff.c) * net.max_relative_degree(),
    })
}

/// Evaluates every certificate on the horizon `[t0, tf]` (`tf` may be
/// `+inf`). `mu_star` defaults to the largest graininess observed on the
/// horizon and must not be smaller than it.
pub fn certify(net: &NetworkSpec, ts: &TimeScale, t0: f64, tf: f64, mu_star: Option<f64>) -> Result<CertificateReport> {
    let sys = net.build_system();
    let grain = ts.grain(t0, tf)?;
    let observed = grain.mu_star;
    let mu_star = match mu_star {
        Some(m) if !(m >= 0.0 && m.is_finite()) => {
            return Err(Error::InvalidParameter(format!("mu* must be finite and nonnegative, got {m}")))
        }
        Some(m) if m + 1e-12 < observed => return Err(Error::MuStarTooSmall { declared: m, observed }),
        Some(m) => m,
        None => observed,
    };

    let norms = norm_report(net, &sys)?;
    let regressivity = check_regressivity(&sys, ts, t0, tf, Some(mu_star))?;
    let uniqueness = check_uniqueness(&sys)?;
    let degree_form = is_m_matrix(&degree_form_matrix(&sys))?;
    let degree_condition = check_degree_condition(net);
    let size_dependent = check_size_dependent(net, &sys, norms.spectral, mu_star);
    let size_independent = check_size_independent(net, &sys, mu_star);
    let exponential = check_exponential(net, &sys, norms.spectral, ts, t0, tf)?;

    let mut failures = Vec::new();
    if !regressivity.pass {
        failures.push("regressivity: (I - mu B)Lambda^-1 - mu|A| is not an M-matrix".to_string());
    }
    if !uniqueness.is_m_matrix {
        failures.push("uniqueness: B Lambda^-1 - |A| is not an M-matrix".to_string());
    }
    if !degree_condition.pass {
        let bad: Vec<&str> = degree_condition.nodes.iter().filter(|v| !v.pass).map(|v| v.node.as_str()).collect();
        failures.push(format!("degree condition k_i < lambda_i/(R_i(b+c)) fails at nodes {}", bad.join(",")));
    }
    for (name, v) in [("size_dependent", &size_dependent.condition), ("size_independent", &size_independent)] {
        if let Some(w) = &v.witness {
            failures.push(format!("{name}: {w}"));
        }
    }
    if !exponential.positive_regressive {
        failures.push("exponential: -b_min is not positively regressive".to_string());
    }
    if let Some(w) = &exponential.rate.witness {
        failures.push(format!("exponential: {w}"));
    }

    Ok(CertificateReport {
        n: net.len(),
        t0,
        tf: tf.is_finite().then_some(tf),
        unbounded_above: ts.is_unbounded_above(),
        mu_star,
        observed_mu_max: observed,
        b_max: sys.b_max(),
        b_min: sys.b_min(),
        lipschitz_max: sys.lipschitz_max(),
        max_degree: net.graph.max_degree(),
        min_capacitance: net.min_capacitance(),
        equilibrium: EquilibriumBound { exists: regressivity.pass, r0: equilibrium_bound_r0(&sys) },
        lambda_convention_disagreement: degree_condition.pass != uniqueness.is_m_matrix,
        all_pass: failures.is_empty(),
        norms,
        regressivity,
        uniqueness,
        degree_form,
        degree_condition,
        size_dependent,
        size_independent,
        exponential,
        failures,
    })
}
