//! Lead-variant tests: the naive two-variant test, the conditional test
//! whose critical value accounts for how the lead variants were chosen, and
//! the LM test for a zero proportionality constant.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chisq;
use crate::error::{Error, Result};
use crate::gmm::{check_level, GmmProblem};
use crate::linalg;
use crate::result::{Method, TestResult};
use crate::summary::JointEffects;

pub const DEFAULT_DRAWS: usize = 10_000;
pub const MIN_ACCEPTED: usize = 500;
pub const MAX_DRAWS: usize = 1_000_000;

/// Multivariable t-statistics and the chosen lead variants.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionContext {
    /// T̂ = D_γ·√n·(γ̂₁', γ̂₂')', length 2J.
    pub t_stats: DVector<f64>,
    /// Diagonal of D_γ, entries (Σ_γ,kk)_jj^(-1/2).
    pub d_gamma: DVector<f64>,
    /// Lead variant for trait 1.
    pub j_star: usize,
    /// Lead variant for trait 2 among the remaining variants.
    pub j_star_star: usize,
}

impl SelectionContext {
    pub fn num_variants(&self) -> usize {
        self.t_stats.len() / 2
    }

    pub fn leads(&self) -> [usize; 2] {
        [self.j_star, self.j_star_star]
    }

    /// The 2 x J selector I⋆.
    pub fn i_star(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(2, self.num_variants());
        m[(0, self.j_star)] = 1.0;
        m[(1, self.j_star_star)] = 1.0;
        m
    }
}

/// argmax_j |values[j]| over j != skip, lowest index on ties.
fn argmax_abs(values: &[f64], skip: Option<usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in values.iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let a = v.abs();
        match best {
            Some((_, b)) if a <= b => {}
            _ => best = Some((j, a)),
        }
    }
    best.map(|(j, _)| j)
}

/// Lead variants from precomputed t-statistics (first half trait 1).
pub fn select_leads(t_stats: &DVector<f64>) -> Result<(usize, usize)> {
    let j = t_stats.len() / 2;
    if j < 2 || t_stats.len() != 2 * j {
        return Err(Error::InvalidArgument(
            "lead-variant selection needs at least 2 variants".into(),
        ));
    }
    if t_stats.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-statistics".into()));
    }
    let t = t_stats.as_slice();
    let j_star = argmax_abs(&t[..j], None).unwrap();
    let j_star_star = argmax_abs(&t[j..], Some(j_star)).unwrap();
    Ok((j_star, j_star_star))
}

/// Computes T̂ and picks the trait-1 lead, then the trait-2 lead among the
/// remaining variants.
pub fn build_selection(je: &JointEffects) -> Result<SelectionContext> {
    let j = je.num_variants();
    let sqrt_n = (je.n() as f64).sqrt();
    let sv = je.sigma_v();
    let li = je.ld_inv();
    let d_gamma = DVector::from_fn(2 * j, |i, _| {
        let (k, c) = (i / j, i % j);
        (sv[(k, k)] * li[(c, c)]).sqrt().recip()
    });
    let t_stats = DVector::from_fn(2 * j, |i, _| {
        let g = if i < j {
            je.gamma1_hat()[i]
        } else {
            je.gamma2_hat()[i - j]
        };
        d_gamma[i] * sqrt_n * g
    });
    let (j_star, j_star_star) = select_leads(&t_stats)?;
    Ok(SelectionContext {
        t_stats,
        d_gamma,
        j_star,
        j_star_star,
    })
}

fn restricted(je: &JointEffects, sel: &SelectionContext) -> Result<GmmProblem> {
    GmmProblem::from_joint_effects(je).restrict(&sel.leads())
}

/// The two-lead-variant test referred to χ²₁, ignoring selection.
pub fn prop_coloc_naive(je: &JointEffects, sel: &SelectionContext, nu: f64) -> Result<TestResult> {
    check_level(nu)?;
    let problem = restricted(je, sel)?;
    let min = problem.minimize_q()?;
    let statistic = je.n() as f64 * min.q_min;
    let critical = chisq::chi_sq_quantile(1, nu)?;
    let mut diagnostics = BTreeMap::new();
    min.diagnostics(&mut diagnostics);
    diagnostics.insert("critical_value".into(), critical);
    diagnostics.insert("j_star".into(), sel.j_star as f64);
    diagnostics.insert("j_star_star".into(), sel.j_star_star as f64);
    Ok(TestResult {
        method: Method::Naive,
        statistic,
        df_or_critical: 1.0,
        p_value: chisq::chi_sq_upper(1, statistic)?,
        eta_hat: Some(min.eta_hat),
        nu,
        reject: statistic > critical,
        diagnostics,
    })
}

/// Pieces of the conditional distribution of the two-variant statistic
/// given the selection event and the sufficient statistic 𝓛.
#[derive(Debug, Clone)]
pub struct ConditionalMachinery {
    pub eta: f64,
    /// Ω⋆ = I⋆Ω(η)I⋆'
    pub omega_star: Matrix2<f64>,
    pub omega_star_inv_sqrt: Matrix2<f64>,
    /// Ĝ⋆ = −I⋆γ̂₂
    pub g_star_hat: Vector2<f64>,
    /// Rank-one projection M⋆.
    pub m_star: Matrix2<f64>,
    /// C⋆ = Ω⋆^(-1/2)·I⋆·C·D_γ, 2 x 2J.
    pub c_star: DMatrix<f64>,
    /// Ω⋆^(-1/2)·√n·ĝ⋆(η)
    pub standardized_moments: Vector2<f64>,
    /// 𝓛 evaluated at η, length 2J.
    pub ell: DVector<f64>,
}

/// Builds Ω⋆, M⋆, C⋆ and 𝓛 at `eta_eval`.
///
/// C = [Σ₁₁ − Σ₁₂'η, Σ₁₂ − Σ₂₂η] is cov(√n·ĝ(η), √n·γ̂), so
/// cov(Ω⋆^(-1/2)√n·ĝ⋆, T̂) = Ω⋆^(-1/2)·I⋆·C·D_γ.
pub fn conditional_machinery(
    je: &JointEffects,
    sel: &SelectionContext,
    eta_eval: f64,
) -> Result<ConditionalMachinery> {
    let j = je.num_variants();
    let leads = sel.leads();
    let sv = je.sigma_v();
    let li = je.ld_inv();
    let n = je.n() as f64;

    // Ω(η) = s(η)·LD⁻¹ under the Kronecker structure.
    let s_eta = sv[(0, 0)] - 2.0 * sv[(0, 1)] * eta_eval + sv[(1, 1)] * eta_eval * eta_eval;
    let base = Matrix2::from_fn(|a, b| li[(leads[a], leads[b])]);
    let omega_star = base * s_eta;
    let omega_star_inv_sqrt = linalg::inv_sqrt2(&omega_star).ok_or(Error::SingularSelection)?;
    let omega_star_inv = linalg::inv2(&omega_star).ok_or(Error::SingularSelection)?;

    let g_star_hat = Vector2::new(-je.gamma2_hat()[leads[0]], -je.gamma2_hat()[leads[1]]);
    let info = (g_star_hat.transpose() * omega_star_inv * g_star_hat)[(0, 0)];
    if !(info > f64::EPSILON) || g_star_hat.amax() == 0.0 {
        return Err(Error::DegenerateProjection);
    }
    let h = omega_star_inv_sqrt * g_star_hat;
    let m_star = Matrix2::identity() - h * h.transpose() / h.dot(&h);

    // Rows j⋆, j⋆⋆ of C: trait-1 columns use (Σ₁₁ − Σ₁₂'η) = (v₁₁ − v₁₂η)·LD⁻¹,
    // trait-2 columns use (Σ₁₂ − Σ₂₂η) = (v₁₂ − v₂₂η)·LD⁻¹.
    let c1 = sv[(0, 0)] - sv[(0, 1)] * eta_eval;
    let c2 = sv[(0, 1)] - sv[(1, 1)] * eta_eval;
    let ic = DMatrix::from_fn(2, 2 * j, |r, col| {
        let (k, c) = (col / j, col % j);
        let coef = if k == 0 { c1 } else { c2 };
        coef * li[(leads[r], c)] * sel.d_gamma[col]
    });
    let w = DMatrix::from_fn(2, 2, |a, b| omega_star_inv_sqrt[(a, b)]);
    let c_star = &w * ic;

    let g_star = Vector2::new(
        je.gamma1_hat()[leads[0]] - je.gamma2_hat()[leads[0]] * eta_eval,
        je.gamma1_hat()[leads[1]] - je.gamma2_hat()[leads[1]] * eta_eval,
    );
    let standardized_moments = omega_star_inv_sqrt * g_star * n.sqrt();
    let sm = DVector::from_column_slice(standardized_moments.as_slice());
    let ell = &sel.t_stats - c_star.tr_mul(&sm);

    Ok(ConditionalMachinery {
        eta: eta_eval,
        omega_star,
        omega_star_inv_sqrt,
        g_star_hat,
        m_star,
        c_star,
        standardized_moments,
        ell,
    })
}

/// Monte-Carlo settings for the conditional test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondOptions {
    /// Initial number of draws of 𝒦.
    pub draws: usize,
    pub seed: u64,
    /// Draws are doubled until at least this many satisfy the selection event.
    pub min_accepted: usize,
    /// Cap on total draws.
    pub max_draws: usize,
}

impl CondOptions {
    pub fn new(draws: usize, seed: u64) -> Self {
        CondOptions {
            draws,
            seed,
            min_accepted: MIN_ACCEPTED,
            max_draws: MAX_DRAWS,
        }
    }
}

/// Accepted draws of 𝒦'M⋆𝒦 under the selection event.
#[derive(Debug, Clone)]
pub struct ConditionalDraws {
    pub accepted: Vec<f64>,
    pub total: usize,
}

/// Whether ℓ_𝒦 = ℓ + C⋆'𝒦 reproduces the observed lead variants.
fn selection_holds(
    ell: &[f64],
    c0: &[f64],
    c1: &[f64],
    k: (f64, f64),
    j: usize,
    leads: [usize; 2],
) -> bool {
    let at = |i: usize| (ell[i] + c0[i] * k.0 + c1[i] * k.1).abs();
    let lead1 = at(leads[0]);
    for c in 0..j {
        if c != leads[0] && at(c) > lead1 {
            return false;
        }
    }
    let lead2 = at(j + leads[1]);
    for c in 0..j {
        if c != leads[0] && c != leads[1] && at(j + c) > lead2 {
            return false;
        }
    }
    true
}

/// Samples 𝒦 ~ N(0, I₂), keeping 𝒦'M⋆𝒦 whenever the perturbed t-statistics
/// select the same lead variants. Draw count doubles until enough are
/// accepted or the cap is hit.
pub fn sample_conditional(
    mach: &ConditionalMachinery,
    sel: &SelectionContext,
    opts: &CondOptions,
) -> ConditionalDraws {
    let j = sel.num_variants();
    let leads = sel.leads();
    let ell = mach.ell.as_slice();
    let c0: Vec<f64> = mach.c_star.row(0).iter().copied().collect();
    let c1: Vec<f64> = mach.c_star.row(1).iter().copied().collect();
    let m = mach.m_star;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut accepted = Vec::new();
    let mut total = 0usize;
    let mut target = opts.draws.min(opts.max_draws);
    loop {
        while total < target {
            let k0: f64 = StandardNormal.sample(&mut rng);
            let k1: f64 = StandardNormal.sample(&mut rng);
            total += 1;
            if selection_holds(ell, &c0, &c1, (k0, k1), j, leads) {
                let q = m[(0, 0)] * k0 * k0 + 2.0 * m[(0, 1)] * k0 * k1 + m[(1, 1)] * k1 * k1;
                accepted.push(q.max(0.0));
            }
        }
        if accepted.len() >= opts.min_accepted || total >= opts.max_draws {
            break;
        }
        target = (target * 2).min(opts.max_draws);
    }
    ConditionalDraws { accepted, total }
}

/// Empirical (1 − ν) quantile: the ⌈(1−ν)m⌉-th order statistic.
pub fn upper_quantile(sorted: &[f64], nu: f64) -> f64 {
    let m = sorted.len();
    let rank = (((1.0 - nu) * m as f64).ceil() as usize).clamp(1, m);
    sorted[rank - 1]
}

/// Conditional test with default Monte-Carlo settings.
pub fn prop_coloc_cond(je: &JointEffects, nu: f64, draws: usize, seed: u64) -> Result<TestResult> {
    prop_coloc_cond_with(je, nu, &CondOptions::new(draws, seed))
}

/// The two-lead-variant test with a critical value from the conditional
/// distribution given the selection event and 𝓛, evaluated at η̂⋆.
pub fn prop_coloc_cond_with(je: &JointEffects, nu: f64, opts: &CondOptions) -> Result<TestResult> {
    check_level(nu)?;
    if opts.draws < 1000 {
        return Err(Error::InvalidArgument(format!(
            "the conditional test needs at least 1000 draws, got {}",
            opts.draws
        )));
    }
    let sel = build_selection(je)?;
    let naive = prop_coloc_naive(je, &sel, nu)?;
    let eta_hat = naive.eta_hat.unwrap_or(0.0);
    let mach = conditional_machinery(je, &sel, eta_hat)?;
    let draws = sample_conditional(&mach, &sel, opts);
    let m = draws.accepted.len();
    let rate = m as f64 / draws.total as f64;
    if m < opts.min_accepted {
        return Err(Error::LowAcceptance {
            accepted: m,
            draws: draws.total,
            rate,
        });
    }
    let s_obs = naive.statistic;
    let mut sorted = draws.accepted;
    sorted.sort_by(f64::total_cmp);
    let critical = upper_quantile(&sorted, nu);
    let exceed = sorted.iter().filter(|&&q| q >= s_obs).count();
    let p_value = (1 + exceed) as f64 / (1 + m) as f64;

    let mut diagnostics = naive.diagnostics;
    diagnostics.remove("critical_value");
    diagnostics.insert("accepted_draws".into(), m as f64);
    diagnostics.insert("total_draws".into(), draws.total as f64);
    diagnostics.insert("acceptance_rate".into(), rate);
    diagnostics.insert("naive_p_value".into(), naive.p_value);
    Ok(TestResult {
        method: Method::Conditional,
        statistic: s_obs,
        df_or_critical: critical,
        p_value,
        eta_hat: Some(eta_hat),
        nu,
        reject: s_obs > critical,
        diagnostics,
    })
}

/// LM test of η₀ = 0 at the selected lead variants:
/// LM = n(Ĝ⋆'Ω⋆(0)⁻¹ĝ⋆(0))² / (Ĝ⋆'Ω⋆(0)⁻¹Ĝ⋆), referred to χ²₁.
pub fn lm_test(je: &JointEffects, sel: &SelectionContext, nu: f64) -> Result<TestResult> {
    check_level(nu)?;
    let leads = sel.leads();
    let s11 = je.sigma_v()[(0, 0)];
    let li = je.ld_inv();
    let omega0 = Matrix2::from_fn(|a, b| s11 * li[(leads[a], leads[b])]);
    let inv = linalg::inv2(&omega0).ok_or(Error::SingularSelection)?;
    let g_hat = Vector2::new(-je.gamma2_hat()[leads[0]], -je.gamma2_hat()[leads[1]]);
    let g0 = Vector2::new(je.gamma1_hat()[leads[0]], je.gamma1_hat()[leads[1]]);
    let denom = (g_hat.transpose() * inv * g_hat)[(0, 0)];
    if !(denom > f64::EPSILON) || g_hat.amax() == 0.0 {
        return Err(Error::DegenerateProjection);
    }
    let num = (g_hat.transpose() * inv * g0)[(0, 0)];
    let statistic = je.n() as f64 * num * num / denom;
    let critical = chisq::chi_sq_quantile(1, nu)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("critical_value".into(), critical);
    diagnostics.insert("j_star".into(), sel.j_star as f64);
    diagnostics.insert("j_star_star".into(), sel.j_star_star as f64);
    Ok(TestResult {
        method: Method::Lm,
        statistic,
        df_or_critical: 1.0,
        p_value: chisq::chi_sq_upper(1, statistic)?,
        eta_hat: None,
        nu,
        reject: statistic > critical,
        diagnostics,
    })
}
