//! Summary association data for two traits, reconstruction of multivariable
//! effects, and variant preprocessing (pruning, top-K filtering, trait
//! ordering).

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};
use crate::linalg;

/// Correlations at least this close to +/-1 mark duplicated variants.
const DUPLICATE_TOL: f64 = 1e-9;
/// Asymmetry tolerated (and removed) in an input LD matrix.
const ASYMMETRY_TOL: f64 = 1e-6;
/// Minimum eigenvalue an LD matrix needs before it can be inverted.
pub const LD_MIN_EIGENVALUE: f64 = 1e-8;
/// Lower bound on residual variances in the reconstructed Σ_V.
pub const SIGMA_V_DIAG_FLOOR: f64 = 0.01;
/// Eigenvalue floor of the nearest-PD projection of Σ_V.
pub const SIGMA_V_EIG_FLOOR: f64 = 1e-6;

/// Univariable association summaries for two traits over `J` variants plus
/// the variant correlation (LD) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryDataset {
    variant_ids: Vec<String>,
    /// 2 x J
    beta: DMatrix<f64>,
    /// 2 x J, strictly positive
    se: DMatrix<f64>,
    /// J x J signed correlations with unit diagonal
    ld: DMatrix<f64>,
    trait_cor: f64,
    n: usize,
}

impl SummaryDataset {
    /// Validates and builds a dataset. `ld` asymmetry below 1e-6 is
    /// symmetrized away; anything larger is an error.
    pub fn new(
        variant_ids: Vec<String>,
        beta: DMatrix<f64>,
        se: DMatrix<f64>,
        mut ld: DMatrix<f64>,
        trait_cor: f64,
        n: usize,
    ) -> Result<Self> {
        let j = variant_ids.len();
        if j == 0 {
            return Err(Error::DimensionMismatch("dataset has no variants".into()));
        }
        if beta.shape() != (2, j) || se.shape() != (2, j) {
            return Err(Error::DimensionMismatch(format!(
                "beta {:?} and se {:?} must both be 2 x {j}",
                beta.shape(),
                se.shape()
            )));
        }
        if ld.shape() != (j, j) {
            return Err(Error::DimensionMismatch(format!(
                "LD matrix is {}x{} but there are {j} variants",
                ld.nrows(),
                ld.ncols()
            )));
        }
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("beta".into()));
        }
        if se.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("se".into()));
        }
        if ld.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LD matrix".into()));
        }
        for k in 0..2 {
            for c in 0..j {
                if se[(k, c)] <= 0.0 {
                    return Err(Error::NonPositiveSe {
                        variant: variant_ids[c].clone(),
                        trait_idx: k + 1,
                        value: se[(k, c)],
                    });
                }
            }
        }
        for r in 0..j {
            if (ld[(r, r)] - 1.0).abs() > ASYMMETRY_TOL {
                return Err(Error::LdDiagonal(r));
            }
            ld[(r, r)] = 1.0;
            for c in 0..j {
                let v = ld[(r, c)];
                if v.abs() > 1.0 + DUPLICATE_TOL {
                    return Err(Error::LdOutOfRange {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
                if c > r {
                    let diff = (v - ld[(c, r)]).abs();
                    if diff > ASYMMETRY_TOL {
                        return Err(Error::LdAsymmetric { row: r, col: c, diff });
                    }
                }
            }
        }
        linalg::symmetrize(&mut ld);
        if !(trait_cor > -1.0 && trait_cor < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "trait correlation must lie in (-1, 1), got {trait_cor}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "sample size must be at least 3, got {n}"
            )));
        }
        Ok(SummaryDataset {
            variant_ids,
            beta,
            se,
            ld,
            trait_cor,
            n,
        })
    }

    pub fn num_variants(&self) -> usize {
        self.variant_ids.len()
    }

    pub fn variant_ids(&self) -> &[String] {
        &self.variant_ids
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn se(&self) -> &DMatrix<f64> {
        &self.se
    }

    pub fn ld(&self) -> &DMatrix<f64> {
        &self.ld
    }

    pub fn trait_cor(&self) -> f64 {
        self.trait_cor
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Univariable z-statistic beta / se for trait `k` (0 or 1), variant `j`.
    pub fn z(&self, k: usize, j: usize) -> f64 {
        self.beta[(k, j)] / self.se[(k, j)]
    }

    /// Two-sided univariable p-value. Rankings use |z| directly, which
    /// orders identically and does not underflow for strong signals.
    pub fn p_value(&self, k: usize, j: usize) -> f64 {
        crate::chisq::chi_sq_upper(1, self.z(k, j).powi(2)).unwrap_or(0.0)
    }

    /// Keeps the variants at `idx` (which must be increasing) in that order.
    pub fn subset(&self, idx: &[usize]) -> SummaryDataset {
        let pick2 = |m: &DMatrix<f64>| DMatrix::from_fn(2, idx.len(), |k, c| m[(k, idx[c])]);
        SummaryDataset {
            variant_ids: idx.iter().map(|&i| self.variant_ids[i].clone()).collect(),
            beta: pick2(&self.beta),
            se: pick2(&self.se),
            ld: linalg::submatrix(&self.ld, idx),
            trait_cor: self.trait_cor,
            n: self.n,
        }
    }

    /// Drops later copies of perfectly correlated variants (|r| = 1),
    /// keeping the first occurrence.
    pub fn drop_duplicates(&self) -> SummaryDataset {
        let j = self.num_variants();
        let mut keep: Vec<usize> = Vec::with_capacity(j);
        for c in 0..j {
            let dup = keep
                .iter()
                .any(|&k| self.ld[(k, c)].abs() >= 1.0 - DUPLICATE_TOL);
            if !dup {
                keep.push(c);
            }
        }
        if keep.len() == j {
            self.clone()
        } else {
            self.subset(&keep)
        }
    }

    /// Variant indices ordered strongest first by the smaller of the two
    /// univariable p-values; ties go to the lower index.
    fn strength_order(&self) -> Vec<usize> {
        let strength: Vec<f64> = (0..self.num_variants())
            .map(|j| self.z(0, j).abs().max(self.z(1, j).abs()))
            .collect();
        let mut order: Vec<usize> = (0..self.num_variants()).collect();
        order.sort_by(|&a, &b| strength[b].total_cmp(&strength[a]).then(a.cmp(&b)));
        order
    }

    /// Greedy stepwise LD pruning: walk variants strongest first and keep a
    /// variant only if its r² with every kept variant is <= `r2_threshold`.
    /// Perfect duplicates are always dropped.
    pub fn prune(&self, r2_threshold: f64) -> Result<SummaryDataset> {
        if !(r2_threshold > 0.0 && r2_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pruning threshold must lie in (0, 1], got {r2_threshold}"
            )));
        }
        let mut kept: Vec<usize> = Vec::new();
        for j in self.strength_order() {
            let ok = kept.iter().all(|&k| {
                let r = self.ld[(j, k)];
                r * r <= r2_threshold && r.abs() < 1.0 - DUPLICATE_TOL
            });
            if ok {
                kept.push(j);
            }
        }
        kept.sort_unstable();
        Ok(self.subset(&kept))
    }

    /// Union of the `k` most strongly associated variants for each trait.
    pub fn select_top_k(&self, k: usize) -> Result<SummaryDataset> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("top-k needs k >= 2, got {k}")));
        }
        let j = self.num_variants();
        if k >= j {
            return Ok(self.clone());
        }
        let mut chosen = vec![false; j];
        for t in 0..2 {
            let mut order: Vec<usize> = (0..j).collect();
            order.sort_by(|&a, &b| {
                self.z(t, b)
                    .abs()
                    .total_cmp(&self.z(t, a).abs())
                    .then(a.cmp(&b))
            });
            for &i in order.iter().take(k) {
                chosen[i] = true;
            }
        }
        let idx: Vec<usize> = (0..j).filter(|&i| chosen[i]).collect();
        if idx.len() < 2 {
            return Err(Error::InvalidArgument(
                "top-k filtering left fewer than 2 variants".into(),
            ));
        }
        Ok(self.subset(&idx))
    }

    /// Swaps the roles of the two traits.
    pub fn swap_traits(&self) -> SummaryDataset {
        let swap = |m: &DMatrix<f64>| {
            let mut out = m.clone();
            out.swap_rows(0, 1);
            out
        };
        SummaryDataset {
            beta: swap(&self.beta),
            se: swap(&self.se),
            ..self.clone()
        }
    }

    /// Makes the trait holding the single strongest association trait 2.
    /// Returns the (possibly swapped) dataset and whether a swap happened.
    pub fn order_traits(&self) -> (SummaryDataset, bool) {
        let max_abs = |k: usize| {
            (0..self.num_variants())
                .map(|j| self.z(k, j).abs())
                .fold(0.0, f64::max)
        };
        if max_abs(0) > max_abs(1) {
            (self.swap_traits(), true)
        } else {
            (self.clone(), false)
        }
    }

    /// Reconstructs standardized multivariable effects and their joint
    /// covariance from the univariable summaries.
    ///
    /// Each z = beta / se is mapped to the marginal correlation
    /// r = z / sqrt(n - 2 + z²), which is exact for simple regression with
    /// an intercept. Then γ̂_k = LD⁻¹ r_k, Σ_V comes from the explained
    /// variances and the trait correlation, and Σ_γ = Σ_V ⊗ LD⁻¹.
    pub fn to_joint_effects(&self) -> Result<JointEffects> {
        let j = self.num_variants();
        let ld_inv = invert_ld(&self.ld)?;
        let n = self.n as f64;
        let marginal = |k: usize| {
            DVector::from_fn(j, |c, _| {
                let z = self.z(k, c);
                z / (n - 2.0 + z * z).sqrt()
            })
        };
        let r1 = marginal(0);
        let r2 = marginal(1);
        let g1 = &ld_inv * &r1;
        let g2 = &ld_inv * &r2;
        // γ'·LD·γ = r'·LD⁻¹·r
        let e11 = g1.dot(&r1);
        let e22 = g2.dot(&r2);
        let e12 = g1.dot(&r2);
        let raw = Matrix2::new(
            (1.0 - e11).max(SIGMA_V_DIAG_FLOOR),
            self.trait_cor - e12,
            self.trait_cor - e12,
            (1.0 - e22).max(SIGMA_V_DIAG_FLOOR),
        );
        let (sigma_v, _) = linalg::nearest_pd2(&raw, SIGMA_V_EIG_FLOOR);
        JointEffects::new(g1, g2, self.ld.clone(), ld_inv, sigma_v, self.n)
    }

    /// Writes the association TSV and LD matrix (with an id header row).
    /// Floats use the shortest representation that parses back exactly.
    pub fn write(&self, assoc_path: &Path, ld_path: &Path) -> Result<()> {
        let mut out = String::from("variant_id\tbeta1\tse1\tbeta2\tse2\n");
        for (c, id) in self.variant_ids.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                id,
                self.beta[(0, c)],
                self.se[(0, c)],
                self.beta[(1, c)],
                self.se[(1, c)]
            ));
        }
        fs::write(assoc_path, out).map_err(|e| Error::io(assoc_path, e))?;

        let mut f = fs::File::create(ld_path).map_err(|e| Error::io(ld_path, e))?;
        let mut buf = self.variant_ids.join("\t");
        buf.push('\n');
        for r in 0..self.num_variants() {
            let row: Vec<String> = (0..self.num_variants())
                .map(|c| format!("{}", self.ld[(r, c)]))
                .collect();
            buf.push_str(&row.join("\t"));
            buf.push('\n');
        }
        f.write_all(buf.as_bytes()).map_err(|e| Error::io(ld_path, e))?;
        Ok(())
    }
}

pub(crate) fn invert_ld(ld: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = nalgebra::SymmetricEigen::new(ld.clone());
    let min = eig.eigenvalues.min();
    if !(min > LD_MIN_EIGENVALUE) {
        return Err(Error::SingularLd {
            min_eigenvalue: min,
        });
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let mut inv =
        &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    linalg::symmetrize(&mut inv);
    Ok(inv)
}

/// Multivariable effect estimates for the two traits on the standardized
/// scale, with √n·(γ̂₁', γ̂₂')' having covariance Σ_γ = Σ_V ⊗ LD⁻¹, i.e.
/// block (k, l) equals (Σ_V)_kl · LD⁻¹.
#[derive(Debug, Clone)]
pub struct JointEffects {
    gamma1_hat: DVector<f64>,
    gamma2_hat: DVector<f64>,
    ld: DMatrix<f64>,
    ld_inv: DMatrix<f64>,
    sigma_v: Matrix2<f64>,
    n: usize,
}

impl JointEffects {
    pub fn new(
        gamma1_hat: DVector<f64>,
        gamma2_hat: DVector<f64>,
        ld: DMatrix<f64>,
        ld_inv: DMatrix<f64>,
        sigma_v: Matrix2<f64>,
        n: usize,
    ) -> Result<Self> {
        let j = gamma1_hat.len();
        if gamma2_hat.len() != j || ld.shape() != (j, j) || ld_inv.shape() != (j, j) {
            return Err(Error::DimensionMismatch(
                "effect vectors and LD matrices disagree in length".into(),
            ));
        }
        if gamma1_hat.iter().chain(gamma2_hat.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("multivariable effects".into()));
        }
        let det = sigma_v[(0, 0)] * sigma_v[(1, 1)] - sigma_v[(0, 1)] * sigma_v[(1, 0)];
        if !(sigma_v[(0, 0)] > 0.0 && det > 0.0) || sigma_v[(0, 1)] != sigma_v[(1, 0)] {
            return Err(Error::InvalidArgument(
                "residual covariance must be symmetric positive definite".into(),
            ));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be positive".into()));
        }
        Ok(JointEffects {
            gamma1_hat,
            gamma2_hat,
            ld,
            ld_inv,
            sigma_v,
            n,
        })
    }

    /// Builds effects from an LD matrix alone, inverting it.
    pub fn from_ld(
        gamma1_hat: DVector<f64>,
        gamma2_hat: DVector<f64>,
        ld: DMatrix<f64>,
        sigma_v: Matrix2<f64>,
        n: usize,
    ) -> Result<Self> {
        let ld_inv = invert_ld(&ld)?;
        Self::new(gamma1_hat, gamma2_hat, ld, ld_inv, sigma_v, n)
    }

    pub fn num_variants(&self) -> usize {
        self.gamma1_hat.len()
    }

    pub fn gamma1_hat(&self) -> &DVector<f64> {
        &self.gamma1_hat
    }

    pub fn gamma2_hat(&self) -> &DVector<f64> {
        &self.gamma2_hat
    }

    pub fn ld(&self) -> &DMatrix<f64> {
        &self.ld
    }

    pub fn ld_inv(&self) -> &DMatrix<f64> {
        &self.ld_inv
    }

    pub fn sigma_v(&self) -> &Matrix2<f64> {
        &self.sigma_v
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Block (k, l) of Σ_γ, k and l in {0, 1}.
    pub fn sigma_block(&self, k: usize, l: usize) -> DMatrix<f64> {
        &self.ld_inv * self.sigma_v[(k, l)]
    }

    /// The full 2J x 2J covariance of √n·(γ̂₁', γ̂₂')'.
    pub fn sigma_gamma(&self) -> DMatrix<f64> {
        self.sigma_v.kronecker(&self.ld_inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(j: usize) -> Vec<String> {
        (0..j).map(|i| format!("rs{i}")).collect()
    }

    /// z-statistic that maps to marginal correlation `r` at sample size `n`.
    fn z_for(r: f64, n: usize) -> f64 {
        r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt()
    }

    fn dataset(z1: &[f64], z2: &[f64], ld: DMatrix<f64>, n: usize) -> SummaryDataset {
        let j = z1.len();
        let mut beta = DMatrix::zeros(2, j);
        for c in 0..j {
            beta[(0, c)] = z1[c];
            beta[(1, c)] = z2[c];
        }
        SummaryDataset::new(ids(j), beta, DMatrix::from_element(2, j, 1.0), ld, 0.0, n).unwrap()
    }

    #[test]
    fn identity_ld_gives_marginal_effects() {
        let n = 1000;
        let ds = dataset(
            &[z_for(0.5, n), 0.0],
            &[z_for(0.25, n), 0.0],
            DMatrix::identity(2, 2),
            n,
        );
        let je = ds.to_joint_effects().unwrap();
        assert!((je.gamma1_hat()[0] - 0.5).abs() < 1e-12);
        assert!(je.gamma1_hat()[1].abs() < 1e-15);
        assert!((je.gamma2_hat()[0] - 0.25).abs() < 1e-12);
        // Σ_V diagonal = 1 - explained variance
        assert!((je.sigma_v()[(0, 0)] - 0.75).abs() < 1e-12);
        assert!((je.sigma_v()[(1, 1)] - 0.9375).abs() < 1e-12);
        assert!((je.sigma_v()[(0, 1)] + 0.125).abs() < 1e-12);
    }

    #[test]
    fn kronecker_blocks() {
        let n = 500;
        let ld = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 1.0, 0.4, -0.2, 0.4, 1.0]);
        let ds = dataset(&[3.0, -1.0, 2.0], &[5.0, 0.5, -2.0], ld, n);
        let je = ds.to_joint_effects().unwrap();
        let sg = je.sigma_gamma();
        let li = je.ld_inv();
        for k in 0..2 {
            for l in 0..2 {
                for a in 0..3 {
                    for b in 0..3 {
                        let want = je.sigma_v()[(k, l)] * li[(a, b)];
                        assert!((sg[(3 * k + a, 3 * l + b)] - want).abs() < 1e-10);
                    }
                }
            }
        }
        assert!(linalg::min_eigenvalue(&sg) > 0.0);
    }

    #[test]
    fn singular_ld_is_reported() {
        let ld = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let ds = dataset(&[3.0, 3.0], &[1.0, 1.0], ld, 100);
        assert!(matches!(ds.to_joint_effects(), Err(Error::SingularLd { .. })));
    }

    #[test]
    fn prune_keeps_stronger_of_correlated_pair() {
        let r = 0.9_f64.sqrt();
        let ld = DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]);
        let ds = dataset(&[2.0, 5.0], &[1.0, 1.0], ld, 100);
        let p = ds.prune(0.6).unwrap();
        assert_eq!(p.variant_ids(), &["rs1".to_string()]);
    }

    #[test]
    fn prune_identity_keeps_all() {
        let ds = dataset(&[1.0, 2.0, 3.0], &[0.5, 0.1, 4.0], DMatrix::identity(3, 3), 100);
        for t in [0.01, 0.5, 1.0] {
            assert_eq!(ds.prune(t).unwrap().num_variants(), 3);
        }
        assert!(ds.prune(0.0).is_err());
    }

    #[test]
    fn prune_at_one_drops_only_duplicates() {
        let ld = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 1.0, 0.5, 1.0, 1.0, 0.5, 0.5, 0.5, 1.0],
        );
        let ds = dataset(&[1.0, 2.0, 0.3], &[0.0, 0.0, 0.0], ld, 100);
        let p = ds.prune(1.0).unwrap();
        assert_eq!(p.variant_ids(), &["rs1".to_string(), "rs2".to_string()]);
    }

    #[test]
    fn drop_duplicates_keeps_first() {
        let ld = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let ds = dataset(&[1.0, 2.0], &[1.0, 1.0], ld, 100);
        assert_eq!(ds.drop_duplicates().variant_ids(), &["rs0".to_string()]);
    }

    #[test]
    fn top_k_union() {
        let j = 40;
        let mut z1 = vec![0.1; j];
        let mut z2 = vec![0.1; j];
        for i in 0..10 {
            z1[i] = 5.0 + i as f64;
            z2[20 + i] = 5.0 + i as f64;
        }
        let ds = dataset(&z1, &z2, DMatrix::identity(j, j), 100);
        let t = ds.select_top_k(10).unwrap();
        assert_eq!(t.num_variants(), 20);
        assert_eq!(ds.select_top_k(j).unwrap(), ds);
        assert!(ds.select_top_k(1).is_err());
    }

    #[test]
    fn order_traits_swaps_when_trait_one_strongest() {
        let ds = dataset(&[9.0, 1.0], &[2.0, 3.0], DMatrix::identity(2, 2), 100);
        let (sw, flag) = ds.order_traits();
        assert!(flag);
        assert_eq!(sw.beta()[(1, 0)], 9.0);
        let (again, flag2) = sw.order_traits();
        assert!(!flag2);
        assert_eq!(again, sw);
        assert_eq!(sw.swap_traits(), ds);

        let (same, flag) = sw.swap_traits().swap_traits().order_traits();
        assert!(!flag);
        assert_eq!(same, sw);
    }

    #[test]
    fn validation_errors() {
        let ld = DMatrix::identity(2, 2);
        let beta = DMatrix::zeros(2, 2);
        let mut se = DMatrix::from_element(2, 2, 1.0);
        se[(1, 1)] = 0.0;
        assert!(matches!(
            SummaryDataset::new(ids(2), beta.clone(), se, ld.clone(), 0.0, 10),
            Err(Error::NonPositiveSe { .. })
        ));
        let se = DMatrix::from_element(2, 2, 1.0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(matches!(
            SummaryDataset::new(ids(2), beta.clone(), se.clone(), bad, 0.0, 10),
            Err(Error::LdOutOfRange { .. })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            SummaryDataset::new(ids(2), beta.clone(), se.clone(), asym, 0.0, 10),
            Err(Error::LdAsymmetric { .. })
        ));
        let tiny = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5 + 1e-8, 1.0]);
        let ok = SummaryDataset::new(ids(2), beta.clone(), se.clone(), tiny, 0.0, 10).unwrap();
        assert_eq!(ok.ld()[(0, 1)], ok.ld()[(1, 0)]);
        assert!(matches!(
            SummaryDataset::new(ids(3), beta, se, ld, 0.0, 10),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
