//! Continuously-updating GMM for the proportionality constant and the
//! full-panel proportional colocalization test.
//!
//! With estimating function ĝ(η) = γ̂₁ − γ̂₂η and weight
//! Ω(η) = Σ₁₁ − Σ₁₂η − Σ₁₂'η + Σ₂₂η², the criterion is
//! Q̂(η) = ĝ(η)'Ω(η)⁻¹ĝ(η) and n·min Q̂ is referred to χ²_{J−1}.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};

use crate::chisq;
use crate::error::{Error, Result};
use crate::linalg;
use crate::result::{Method, TestResult};
use crate::summary::JointEffects;

/// Ω(η) is treated as singular when its smallest eigenvalue is at most this
/// fraction of its largest.
pub const OMEGA_REL_TOL: f64 = 1e-10;
/// Points in the coarse global grid over the bracket.
pub const GRID_POINTS: usize = 2001;
/// Golden-section stops once the bracket is narrower than this.
pub const ETA_TOL: f64 = 1e-8;
/// Local grid minima within this much of the best value are also refined.
pub const LOCAL_MIN_SLACK: f64 = 1e-6;
/// The bracket doubles at most this many times when η̂ hits its edge.
pub const MAX_BRACKET_DOUBLINGS: usize = 3;

/// Ω(η) = s(η)·B with s(η) = v₁₁ − 2v₁₂η + v₂₂η², which holds whenever the
/// blocks are Σ_V ⊗ B. Q̂ then reduces to a ratio of quadratics in η.
#[derive(Debug, Clone)]
struct KroneckerForm {
    sigma_v: Matrix2<f64>,
    /// g0'B⁻¹g0, g0'B⁻¹g1, g1'B⁻¹g1
    aa: f64,
    ab: f64,
    bb: f64,
}

impl KroneckerForm {
    fn new(g0: &DVector<f64>, g1: &DVector<f64>, weight: &DMatrix<f64>, sigma_v: Matrix2<f64>) -> Self {
        let w0 = weight * g0;
        let w1 = weight * g1;
        KroneckerForm {
            sigma_v,
            aa: g0.dot(&w0),
            ab: g0.dot(&w1),
            bb: g1.dot(&w1),
        }
    }

    fn scale(&self, eta: f64) -> f64 {
        self.sigma_v[(0, 0)] - 2.0 * self.sigma_v[(0, 1)] * eta + self.sigma_v[(1, 1)] * eta * eta
    }

    fn q(&self, eta: f64) -> Option<f64> {
        let s = self.scale(eta);
        let size = self.sigma_v[(0, 0)] + self.sigma_v[(1, 1)] * eta * eta;
        if !(s > OMEGA_REL_TOL * size) {
            return None;
        }
        let num = self.aa - 2.0 * self.ab * eta + self.bb * eta * eta;
        Some(num.max(0.0) / s)
    }
}

/// A one-parameter GMM problem: J moment conditions in η.
#[derive(Debug, Clone)]
pub struct GmmProblem {
    g0: DVector<f64>,
    g1: DVector<f64>,
    s11: DMatrix<f64>,
    s12: DMatrix<f64>,
    s22: DMatrix<f64>,
    n: usize,
    variant_index_map: Vec<usize>,
    kron: Option<KroneckerForm>,
}

impl GmmProblem {
    /// A problem with unstructured covariance blocks.
    pub fn new(
        g0: DVector<f64>,
        g1: DVector<f64>,
        s11: DMatrix<f64>,
        s12: DMatrix<f64>,
        s22: DMatrix<f64>,
        n: usize,
    ) -> Result<Self> {
        let j = g0.len();
        if j == 0 {
            return Err(Error::DimensionMismatch("GMM problem has no moments".into()));
        }
        if g1.len() != j || s11.shape() != (j, j) || s12.shape() != (j, j) || s22.shape() != (j, j)
        {
            return Err(Error::DimensionMismatch(
                "moment vectors and covariance blocks disagree in size".into(),
            ));
        }
        Ok(GmmProblem {
            g0,
            g1,
            s11,
            s12,
            s22,
            n,
            variant_index_map: (0..j).collect(),
            kron: None,
        })
    }

    /// The full-panel problem for a set of joint effects. The Kronecker
    /// structure of Σ_γ is kept so the criterion costs O(1) per η.
    pub fn from_joint_effects(je: &JointEffects) -> Self {
        let sv = *je.sigma_v();
        let g0 = je.gamma1_hat().clone();
        let g1 = je.gamma2_hat().clone();
        let kron = KroneckerForm::new(&g0, &g1, je.ld(), sv);
        GmmProblem {
            s11: je.sigma_block(0, 0),
            s12: je.sigma_block(0, 1),
            s22: je.sigma_block(1, 1),
            g0,
            g1,
            n: je.n(),
            variant_index_map: (0..je.num_variants()).collect(),
            kron: Some(kron),
        }
    }

    /// The problem restricted to the moments at `idx` (in that order).
    pub fn restrict(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() || idx.iter().any(|&i| i >= self.len()) {
            return Err(Error::InvalidArgument("restriction indices out of range".into()));
        }
        let g0 = linalg::subvector(&self.g0, idx);
        let g1 = linalg::subvector(&self.g1, idx);
        let s11 = linalg::submatrix(&self.s11, idx);
        let kron = match &self.kron {
            Some(k) => {
                let base = &s11 / k.sigma_v[(0, 0)];
                let weight = linalg::spd_inverse(&base, OMEGA_REL_TOL)
                    .ok_or(Error::SingularSelection)?;
                Some(KroneckerForm::new(&g0, &g1, &weight, k.sigma_v))
            }
            None => None,
        };
        Ok(GmmProblem {
            g0,
            g1,
            s11,
            s12: linalg::submatrix(&self.s12, idx),
            s22: linalg::submatrix(&self.s22, idx),
            n: self.n,
            variant_index_map: idx.iter().map(|&i| self.variant_index_map[i]).collect(),
            kron,
        })
    }

    /// Drops the Kronecker shortcut so every evaluation goes through Ω(η).
    pub fn without_structure(mut self) -> Self {
        self.kron = None;
        self
    }

    pub fn len(&self) -> usize {
        self.g0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g0.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn g0(&self) -> &DVector<f64> {
        &self.g0
    }

    pub fn g1(&self) -> &DVector<f64> {
        &self.g1
    }

    pub fn blocks(&self) -> (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>) {
        (&self.s11, &self.s12, &self.s22)
    }

    pub fn variant_index_map(&self) -> &[usize] {
        &self.variant_index_map
    }

    /// ĝ(η) = γ̂₁ − γ̂₂η
    pub fn estimating_function(&self, eta: f64) -> DVector<f64> {
        &self.g0 - &self.g1 * eta
    }

    /// Ω(η), symmetrized.
    pub fn omega(&self, eta: f64) -> DMatrix<f64> {
        let mut m = &self.s11 - (&self.s12 + self.s12.transpose()) * eta + &self.s22 * (eta * eta);
        linalg::symmetrize(&mut m);
        m
    }

    /// Q̂(η) through an eigendecomposition of Ω(η).
    pub fn q_criterion_unstructured(&self, eta: f64) -> Result<f64> {
        let g = self.estimating_function(eta);
        let eig = SymmetricEigen::new(self.omega(eta));
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min <= OMEGA_REL_TOL * max {
            return Err(Error::CriterionSingular { eta });
        }
        let proj = eig.eigenvectors.tr_mul(&g);
        Ok(proj
            .iter()
            .zip(eig.eigenvalues.iter())
            .map(|(p, l)| p * p / l)
            .sum())
    }

    /// Q̂(η) = ĝ(η)'Ω(η)⁻¹ĝ(η).
    pub fn q_criterion(&self, eta: f64) -> Result<f64> {
        match &self.kron {
            Some(k) => k.q(eta).ok_or(Error::CriterionSingular { eta }),
            None => self.q_criterion_unstructured(eta),
        }
    }

    fn q_or_inf(&self, eta: f64) -> f64 {
        self.q_criterion(eta).unwrap_or(f64::INFINITY)
    }

    /// Default search half-width: 10·max(1, max|γ̂₁| / max(1e-6, max|γ̂₂|)).
    pub fn default_bracket(&self) -> f64 {
        let m0 = self.g0.amax();
        let m1 = self.g1.amax().max(1e-6);
        10.0 * (m0 / m1).max(1.0)
    }

    /// Global minimization of Q̂ over [−B, B]: a coarse grid, then golden
    /// section around the best grid point and every local grid minimum
    /// close to it. B doubles when the minimizer sits on the edge.
    pub fn minimize_q(&self) -> Result<Minimum> {
        let mut bracket = self.default_bracket();
        let mut doublings = 0;
        loop {
            let step = 2.0 * bracket / (GRID_POINTS - 1) as f64;
            let grid: Vec<f64> = (0..GRID_POINTS)
                .map(|i| -bracket + step * i as f64)
                .collect();
            let vals: Vec<f64> = grid.iter().map(|&e| self.q_or_inf(e)).collect();
            let singular = vals.iter().filter(|v| v.is_infinite()).count();
            let (best_i, best_v) = vals
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
            if best_v.is_infinite() {
                return Err(Error::CriterionSingular { eta: grid[best_i] });
            }

            let mut candidates = vec![best_i];
            for i in 1..GRID_POINTS - 1 {
                if i != best_i
                    && vals[i] <= vals[i - 1]
                    && vals[i] <= vals[i + 1]
                    && vals[i] <= best_v + LOCAL_MIN_SLACK
                {
                    candidates.push(i);
                }
            }
            let mut eta_hat = grid[best_i];
            let mut q_min = best_v;
            for &i in &candidates {
                let lo = grid[i.saturating_sub(1)];
                let hi = grid[(i + 1).min(GRID_POINTS - 1)];
                let (e, v) = golden_section(|e| self.q_or_inf(e), lo, hi, ETA_TOL);
                let (e, v) = if v <= vals[i] { (e, v) } else { (grid[i], vals[i]) };
                if v < q_min {
                    q_min = v;
                    eta_hat = e;
                }
            }

            let hit_edge = (eta_hat.abs() - bracket).abs() <= step;
            if hit_edge && doublings < MAX_BRACKET_DOUBLINGS {
                bracket *= 2.0;
                doublings += 1;
                continue;
            }
            return Ok(Minimum {
                eta_hat,
                q_min,
                bracket,
                hit_edge,
                refined: candidates.len(),
                singular_points: singular,
            });
        }
    }
}

/// Result of [`GmmProblem::minimize_q`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub eta_hat: f64,
    pub q_min: f64,
    /// Final half-width B of the search interval.
    pub bracket: f64,
    /// True if η̂ still sits on the bracket edge after all doublings.
    pub hit_edge: bool,
    /// Number of grid minima refined by golden section.
    pub refined: usize,
    /// Grid points where Ω(η) was singular.
    pub singular_points: usize,
}

impl Minimum {
    pub(crate) fn diagnostics(&self, out: &mut BTreeMap<String, f64>) {
        out.insert("bracket".into(), self.bracket);
        out.insert("bracket_edge".into(), if self.hit_edge { 1.0 } else { 0.0 });
        out.insert("refined_minima".into(), self.refined as f64);
        out.insert("singular_grid_points".into(), self.singular_points as f64);
    }
}

/// Golden-section search for a minimum of `f` on [lo, hi].
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = f(mid);
    [(mid, fm), (c, fc), (d, fd)]
        .into_iter()
        .fold((mid, fm), |acc, p| if p.1 < acc.1 { p } else { acc })
}

/// The full-panel proportional colocalization test at level `nu`.
pub fn prop_coloc_full(je: &JointEffects, nu: f64) -> Result<TestResult> {
    let j = je.num_variants();
    if j < 2 {
        return Err(Error::InvalidArgument(format!(
            "the full test needs at least 2 variants, got {j}"
        )));
    }
    check_level(nu)?;
    let problem = GmmProblem::from_joint_effects(je);
    let min = problem.minimize_q()?;
    let df = (j - 1) as u32;
    let statistic = je.n() as f64 * min.q_min;
    let p_value = chisq::chi_sq_upper(df, statistic)?;
    let critical = chisq::chi_sq_quantile(df, nu)?;
    let mut diagnostics = BTreeMap::new();
    min.diagnostics(&mut diagnostics);
    diagnostics.insert("critical_value".into(), critical);
    diagnostics.insert("variants".into(), j as f64);
    Ok(TestResult {
        method: Method::Full,
        statistic,
        df_or_critical: df as f64,
        p_value,
        eta_hat: Some(min.eta_hat),
        nu,
        reject: statistic > critical,
        diagnostics,
    })
}

pub(crate) fn check_level(nu: f64) -> Result<()> {
    if nu > 0.0 && nu < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("test level must lie in (0, 1), got {nu}")))
    }
}
