//! Simulation harness: individual-level data under the single- and
//! multiple-causal-variant designs, Wishart-perturbed LD, and
//! rejection-frequency experiments over parameter grids.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm;
use crate::linalg;
use crate::result::{Method, TestResult};
use crate::selective::{self, DEFAULT_DRAWS};
use crate::summary::SummaryDataset;

/// Test level used for every rejection frequency.
pub const SIM_NU: f64 = 0.05;
/// Attempts at drawing a positive-definite LD matrix.
pub const LD_ATTEMPTS: usize = 100;
/// Minimum eigenvalue a generated LD matrix must have.
pub const LD_MIN_EIGENVALUE: f64 = 1e-6;
/// Effect size of a causal variant.
pub const CAUSAL_EFFECT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// One causal variant per trait; the two are correlated at ξ and
    /// coincide when ξ = 1.
    #[default]
    SingleCausal,
    /// Two shared causal variants with non-proportional effects controlled
    /// by δ.
    MultiCausal,
}

impl Design {
    pub fn as_str(&self) -> &'static str {
        match self {
            Design::SingleCausal => "single_causal",
            Design::MultiCausal => "multi_causal",
        }
    }
}

fn default_rho0() -> f64 {
    0.8
}
fn default_cov_v() -> f64 {
    0.3
}
fn default_replicates() -> usize {
    1000
}

/// One point of an experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    #[serde(rename = "j", alias = "J")]
    pub j: usize,
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    pub xi: f64,
    pub eta0: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_cov_v")]
    pub cov_v: f64,
    /// Wishart degrees of freedom for a mis-measured LD matrix; absent means
    /// the sample LD of the simulated genotypes is used.
    #[serde(default)]
    pub lambda: Option<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub design: Design,
    /// Optional LD pruning threshold applied before testing.
    #[serde(default)]
    pub prune_r2: Option<f64>,
    /// Optional top-K filtering applied after pruning.
    #[serde(default)]
    pub top_k: Option<usize>,
    /// Monte-Carlo draws for the conditional test.
    #[serde(default)]
    pub draws: Option<usize>,
}

impl SimConfig {
    /// Single-causal-variant config with the standard defaults.
    pub fn single(n: usize, j: usize, xi: f64, eta0: f64) -> Self {
        SimConfig {
            n,
            j,
            rho0: default_rho0(),
            xi,
            eta0,
            delta: 0.0,
            cov_v: default_cov_v(),
            lambda: None,
            replicates: default_replicates(),
            seed: 0,
            design: Design::SingleCausal,
            prune_r2: None,
            top_k: None,
            draws: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.j < 2 {
            return bad(format!("J must be >= 2, got {}", self.j));
        }
        if self.n < self.j + 3 {
            return bad(format!("n = {} is too small for J = {}", self.n, self.j));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return bad(format!("xi must lie in [0, 1], got {}", self.xi));
        }
        if !(0.0..1.0).contains(&self.rho0) {
            return bad(format!("rho0 must lie in [0, 1), got {}", self.rho0));
        }
        if !(self.cov_v > -1.0 && self.cov_v < 1.0) {
            return bad(format!("cov_v must lie in (-1, 1), got {}", self.cov_v));
        }
        if !self.eta0.is_finite() {
            return bad("eta0 must be finite".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.design == Design::MultiCausal {
            if !(0.0..=1.0).contains(&self.delta) {
                return bad(format!("delta must lie in [0, 1], got {}", self.delta));
            }
            if self.xi >= 1.0 {
                return bad("multi_causal needs two distinct causal variants (xi < 1)".into());
            }
        }
        if let Some(l) = self.lambda {
            if l <= self.j {
                return bad(format!("lambda = {l} must exceed J = {}", self.j));
            }
        }
        if let Some(t) = self.prune_r2 {
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("prune_r2 must lie in (0, 1], got {t}"));
            }
        }
        if let Some(k) = self.top_k {
            if k < 2 {
                return bad(format!("top_k must be >= 2, got {k}"));
            }
        }
        if let Some(d) = self.draws {
            if d < 1000 {
                return bad(format!("draws must be >= 1000, got {d}"));
            }
        }
        Ok(())
    }
}

/// Mixes three words into one well-spread 64-bit seed (splitmix64 steps).
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ a) ^ b.rotate_left(32))
}

/// Substream for replicate `rep` of grid point `grid_index`.
pub fn replicate_rng(seed: u64, grid_index: usize, rep: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, grid_index as u64, rep as u64))
}

/// True LD matrix with off-diagonals from aa', a_j ~ U[0, √ρ₀], plus the
/// causal indices (j1 for trait 1, j2 for trait 2). For ξ < 1 the (j1, j2)
/// correlation is overwritten with ξ; for ξ = 1 both traits share j1.
pub fn gen_ld<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<(DMatrix<f64>, usize, usize)> {
    let j = config.j;
    let upper = config.rho0.sqrt();
    for _ in 0..LD_ATTEMPTS {
        let a: Vec<f64> = (0..j).map(|_| rng.random::<f64>() * upper).collect();
        let mut ld = DMatrix::from_fn(j, j, |r, c| if r == c { 1.0 } else { a[r] * a[c] });
        let j1 = rng.random_range(0..j);
        let mut j2 = rng.random_range(0..j - 1);
        if j2 >= j1 {
            j2 += 1;
        }
        if config.xi >= 1.0 {
            j2 = j1;
        } else {
            ld[(j1, j2)] = config.xi;
            ld[(j2, j1)] = config.xi;
        }
        if linalg::min_eigenvalue(&ld) > LD_MIN_EIGENVALUE {
            return Ok((ld, j1, j2));
        }
    }
    Err(Error::Config(format!(
        "could not draw a positive-definite LD matrix with xi = {} and rho0 = {} in {LD_ATTEMPTS} attempts",
        config.xi, config.rho0
    )))
}

/// Generating truth for one simulated dataset.
#[derive(Debug, Clone)]
pub struct Truth {
    pub ld: DMatrix<f64>,
    pub j1: usize,
    pub j2: usize,
    /// Effects on the natural scale of the generating model.
    pub gamma1: DVector<f64>,
    pub gamma2: DVector<f64>,
    /// Residual covariance Σ_V of the generating model.
    pub cov_v: f64,
}

impl Truth {
    /// Effects in trait-SD units per unit-variance variant.
    pub fn standardized(&self) -> (DVector<f64>, DVector<f64>) {
        let sd = |g: &DVector<f64>| (g.dot(&(&self.ld * g)) + 1.0).sqrt();
        (&self.gamma1 / sd(&self.gamma1), &self.gamma2 / sd(&self.gamma2))
    }
}

/// Causal effect vectors for a design.
pub fn causal_effects(config: &SimConfig, j1: usize, j2: usize) -> (DVector<f64>, DVector<f64>) {
    let mut g1 = DVector::zeros(config.j);
    let mut g2 = DVector::zeros(config.j);
    match config.design {
        Design::SingleCausal => {
            g1[j1] = CAUSAL_EFFECT * config.eta0;
            g2[j2] = CAUSAL_EFFECT;
        }
        Design::MultiCausal => {
            let d = config.delta;
            g2[j1] = CAUSAL_EFFECT * (1.0 - d);
            g2[j2] = CAUSAL_EFFECT * (1.0 + d);
            g1[j1] = CAUSAL_EFFECT * (1.0 + d) * config.eta0;
            g1[j2] = CAUSAL_EFFECT * (1.0 - d) * config.eta0;
        }
    }
    (g1, g2)
}

/// Individual-level genotypes and traits.
#[derive(Debug, Clone)]
pub struct IndividualData {
    /// n x J
    pub z: DMatrix<f64>,
    pub x1: DVector<f64>,
    pub x2: DVector<f64>,
    pub truth: Truth,
}

/// Draws Z ~ N(0, ρ) and X_k = γ_k'Z + V_k with V ~ N(0, Σ_V), unit
/// variances and cov(V₁, V₂) = cov_v.
pub fn gen_individual<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<IndividualData> {
    config.validate()?;
    let (ld, j1, j2) = gen_ld(config, rng)?;
    gen_individual_with(config, ld, j1, j2, rng)
}

/// As [`gen_individual`] but with a fixed LD matrix and causal indices, so
/// repeated calls redraw only genotypes and errors.
pub fn gen_individual_with<R: Rng + ?Sized>(
    config: &SimConfig,
    ld: DMatrix<f64>,
    j1: usize,
    j2: usize,
    rng: &mut R,
) -> Result<IndividualData> {
    if ld.shape() != (config.j, config.j) || j1 >= config.j || j2 >= config.j {
        return Err(Error::DimensionMismatch(
            "LD matrix or causal indices do not match the configured variant count".into(),
        ));
    }
    let (gamma1, gamma2) = causal_effects(config, j1, j2);
    let n = config.n;
    let chol = nalgebra::Cholesky::new(ld.clone())
        .ok_or_else(|| Error::Config("generated LD matrix is not positive definite".into()))?;
    let white: DMatrix<f64> = DMatrix::from_fn(n, config.j, |_, _| StandardNormal.sample(rng));
    let z = white * chol.l().transpose();
    let c = config.cov_v;
    let s = (1.0 - c * c).sqrt();
    let mut x1: DVector<f64> = &z * &gamma1;
    let mut x2: DVector<f64> = &z * &gamma2;
    for i in 0..n {
        let e1: f64 = StandardNormal.sample(rng);
        let e2: f64 = StandardNormal.sample(rng);
        x1[i] += e1;
        x2[i] += c * e1 + s * e2;
    }
    Ok(IndividualData {
        z,
        x1,
        x2,
        truth: Truth {
            ld,
            j1,
            j2,
            gamma1,
            gamma2,
            cov_v: c,
        },
    })
}

/// Univariable least-squares summaries (with intercept), the sample LD of
/// the genotypes and the sample trait correlation.
pub fn summarize(data: &IndividualData) -> Result<SummaryDataset> {
    let n = data.z.nrows();
    let j = data.z.ncols();
    let nf = n as f64;
    let mut zc = data.z.clone();
    for mut col in zc.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let center = |x: &DVector<f64>| x.add_scalar(-x.mean());
    let x1 = center(&data.x1);
    let x2 = center(&data.x2);
    let szz = zc.tr_mul(&zc);
    let mut beta = DMatrix::zeros(2, j);
    let mut se = DMatrix::zeros(2, j);
    for (k, x) in [&x1, &x2].into_iter().enumerate() {
        let sxx = x.norm_squared();
        let sxz = zc.tr_mul(x);
        for c in 0..j {
            let b = sxz[c] / szz[(c, c)];
            let rss = (sxx - b * sxz[c]).max(0.0);
            beta[(k, c)] = b;
            se[(k, c)] = (rss / (nf - 2.0) / szz[(c, c)]).sqrt();
        }
    }
    let sd: Vec<f64> = (0..j).map(|c| szz[(c, c)].sqrt()).collect();
    let ld = DMatrix::from_fn(j, j, |r, c| if r == c { 1.0 } else { szz[(r, c)] / (sd[r] * sd[c]) });
    let trait_cor = (x1.dot(&x2) / (x1.norm() * x2.norm())).clamp(-0.999_999, 0.999_999);
    let ids = (1..=j).map(|i| format!("v{i}")).collect();
    SummaryDataset::new(ids, beta, se, ld, trait_cor, n)
}

/// Simulated summary data plus its generating truth. With `lambda` set, the
/// LD matrix handed to the tests is a Wishart perturbation of the true LD
/// instead of the sample LD.
pub fn gen_dataset<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<(SummaryDataset, Truth)> {
    let data = gen_individual(config, rng)?;
    let mut ds = summarize(&data)?;
    if let Some(lambda) = config.lambda {
        let noisy = wishart_perturb(&data.truth.ld, lambda, rng)?;
        ds = SummaryDataset::new(
            ds.variant_ids().to_vec(),
            ds.beta().clone(),
            ds.se().clone(),
            noisy,
            ds.trait_cor(),
            ds.n(),
        )?;
    }
    Ok((ds, data.truth))
}

/// W ~ Wishart(ld_true / λ, λ) by the Bartlett decomposition, so E[W] =
/// ld_true.
pub fn wishart_draw<R: Rng + ?Sized>(ld_true: &DMatrix<f64>, lambda: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let j = ld_true.nrows();
    if lambda <= j {
        return Err(Error::InvalidArgument(format!(
            "Wishart degrees of freedom {lambda} must exceed the dimension {j}"
        )));
    }
    let chol = nalgebra::Cholesky::new(ld_true / lambda as f64)
        .ok_or_else(|| Error::InvalidArgument("Wishart scale matrix is not positive definite".into()))?;
    let mut a = DMatrix::zeros(j, j);
    for i in 0..j {
        let chi = ChiSquared::new((lambda - i) as f64)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for c in 0..i {
            a[(i, c)] = StandardNormal.sample(rng);
        }
    }
    let la = chol.l() * a;
    let mut w = &la * la.transpose();
    linalg::symmetrize(&mut w);
    Ok(w)
}

/// A Wishart draw centred at `ld_true`, rescaled to unit diagonal.
pub fn wishart_perturb<R: Rng + ?Sized>(ld_true: &DMatrix<f64>, lambda: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let w = wishart_draw(ld_true, lambda, rng)?;
    let j = w.nrows();
    let d: Vec<f64> = (0..j).map(|i| w[(i, i)].sqrt()).collect();
    Ok(DMatrix::from_fn(j, j, |r, c| if r == c { 1.0 } else { w[(r, c)] / (d[r] * d[c]) }))
}

/// Why a replicate produced no result for a method.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

/// One method's outcome in one replicate.
pub type Outcome = std::result::Result<TestResult, Failure>;

/// Generates one replicate, preprocesses it per the config and runs each
/// requested method at level 0.05.
pub fn run_replicate(config: &SimConfig, methods: &[Method], rng: &mut ChaCha8Rng) -> Vec<(Method, Outcome)> {
    let prepared = gen_dataset(config, rng).and_then(|(ds, _)| {
        let ds = match config.prune_r2 {
            Some(t) => ds.prune(t)?,
            None => ds,
        };
        let ds = match config.top_k {
            Some(k) => ds.select_top_k(k)?,
            None => ds,
        };
        ds.to_joint_effects()
    });
    let cond_seed = rng.next_u64();
    let je = match prepared {
        Ok(je) => je,
        Err(e) => {
            let f = Failure::from(e);
            return methods.iter().map(|&m| (m, Err(f.clone()))).collect();
        }
    };
    let draws = config.draws.unwrap_or(DEFAULT_DRAWS);
    methods
        .iter()
        .map(|&m| {
            let out = match m {
                Method::Full => gmm::prop_coloc_full(&je, SIM_NU),
                Method::Naive => selective::build_selection(&je)
                    .and_then(|sel| selective::prop_coloc_naive(&je, &sel, SIM_NU)),
                Method::Conditional => selective::prop_coloc_cond(&je, SIM_NU, draws, cond_seed),
                Method::Lm => selective::build_selection(&je)
                    .and_then(|sel| selective::lm_test(&je, &sel, SIM_NU)),
            };
            (m, out.map_err(Failure::from))
        })
        .collect()
}

/// Aggregated rejection frequency for one (grid point, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub grid_index: usize,
    pub method: Method,
    pub design: Design,
    pub n: usize,
    pub j: usize,
    pub xi: f64,
    pub eta0: f64,
    pub delta: f64,
    pub lambda: Option<usize>,
    pub prune_r2: Option<f64>,
    pub rejection_rate: f64,
    /// Replicates that produced a test result.
    pub replicates: usize,
    pub failures: usize,
    pub mean_stat: f64,
    pub mean_acceptance: Option<f64>,
    /// Failure counts by error kind.
    pub failure_kinds: BTreeMap<String, usize>,
}

impl RejectionRow {
    /// Binomial Monte-Carlo standard error of the rejection rate.
    pub fn std_error(&self) -> f64 {
        let p = self.rejection_rate;
        (p * (1.0 - p) / self.replicates.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RejectionTable {
    pub rows: Vec<RejectionRow>,
}

pub const TSV_HEADER: &str = "method\tdesign\tn\tJ\txi\teta0\tdelta\tlambda\trejection_rate\treplicates\tfailures\tmean_stat\tmean_acceptance";

impl RejectionTable {
    pub fn get(&self, grid_index: usize, method: Method) -> Option<&RejectionRow> {
        self.rows
            .iter()
            .find(|r| r.grid_index == grid_index && r.method == method)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(TSV_HEADER);
        out.push('\n');
        let na = |v: Option<String>| v.unwrap_or_else(|| "NA".to_string());
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.method,
                r.design.as_str(),
                r.n,
                r.j,
                r.xi,
                r.eta0,
                r.delta,
                na(r.lambda.map(|l| l.to_string())),
                r.rejection_rate,
                r.replicates,
                r.failures,
                r.mean_stat,
                na(r.mean_acceptance.map(|a| a.to_string())),
            );
        }
        out
    }
}

fn aggregate(grid_index: usize, config: &SimConfig, method: Method, outcomes: &[&Outcome]) -> RejectionRow {
    let mut rejections = 0usize;
    let mut ok = 0usize;
    let mut stat_sum = 0.0;
    let mut acc_sum = 0.0;
    let mut failure_kinds = BTreeMap::new();
    for o in outcomes {
        match o {
            Ok(r) => {
                ok += 1;
                rejections += r.reject as usize;
                stat_sum += r.statistic;
                acc_sum += r.diagnostics.get("acceptance_rate").copied().unwrap_or(0.0);
            }
            Err(f) => {
                *failure_kinds.entry(f.kind.to_string()).or_insert(0) += 1;
            }
        }
    }
    let denom = ok.max(1) as f64;
    RejectionRow {
        grid_index,
        method,
        design: config.design,
        n: config.n,
        j: config.j,
        xi: config.xi,
        eta0: config.eta0,
        delta: config.delta,
        lambda: config.lambda,
        prune_r2: config.prune_r2,
        rejection_rate: if ok == 0 { f64::NAN } else { rejections as f64 / denom },
        replicates: ok,
        failures: outcomes.len() - ok,
        mean_stat: if ok == 0 { f64::NAN } else { stat_sum / denom },
        mean_acceptance: (method == Method::Conditional && ok > 0).then(|| acc_sum / denom),
        failure_kinds,
    }
}

/// Runs every grid point and replicate. Replicate `r` of grid point `g`
/// always uses the substream derived from (seed, g, r), and results are
/// reduced in replicate order, so the table does not depend on
/// `parallelism`.
pub fn run_experiment(grid: &[SimConfig], methods: &[Method], parallelism: usize) -> Result<RejectionTable> {
    if grid.is_empty() {
        return Err(Error::Grid("empty grid".into()));
    }
    if methods.is_empty() {
        return Err(Error::Grid("no methods requested".into()));
    }
    for (i, c) in grid.iter().enumerate() {
        c.validate().map_err(|e| Error::Grid(format!("grid point {i}: {e}")))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut table = RejectionTable::default();
    for (gi, config) in grid.iter().enumerate() {
        let outcomes: Vec<Vec<(Method, Outcome)>> = pool.install(|| {
            (0..config.replicates)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = replicate_rng(config.seed, gi, rep);
                    run_replicate(config, methods, &mut rng)
                })
                .collect()
        });
        for (mi, &m) in methods.iter().enumerate() {
            let per_method: Vec<&Outcome> = outcomes.iter().map(|o| &o[mi].1).collect();
            table.rows.push(aggregate(gi, config, m, &per_method));
        }
    }
    Ok(table)
}

/// Parses a grid specification (a JSON array of configs).
pub fn parse_grid(json: &str) -> Result<Vec<SimConfig>> {
    let grid: Vec<SimConfig> =
        serde_json::from_str(json).map_err(|e| Error::Grid(format!("malformed grid JSON: {e}")))?;
    if grid.is_empty() {
        return Err(Error::Grid("empty grid".into()));
    }
    Ok(grid)
}
