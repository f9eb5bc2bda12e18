//! Seeded support-recovery experiments: sparsity regimes, replication seeding,
//! aggregation into tables, and the model specification used by the CLI.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    discriminant_direction, make_model, sample_dataset_stream, CovarianceSpec, GaussianLdaModel,
    MuScheme,
};
use crate::sda::fit_sda;
use crate::theory::{lambda_of, lambda_sda_raw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FractionalPower,
    Sublinear,
    Linear,
}

impl Regime {
    pub fn id(self) -> u64 {
        match self {
            Regime::FractionalPower => 0,
            Regime::Sublinear => 1,
            Regime::Linear => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::FractionalPower => "fractional_power",
            Regime::Sublinear => "sublinear",
            Regime::Linear => "linear",
        }
    }
}

/// Support size of a regime at dimension `p`.
pub fn sparsity_of(regime: Regime, p: usize) -> Result<usize> {
    if p < 3 {
        return Err(Error::invalid(format!(
            "sparsity regimes need p ≥ 3, got {p}"
        )));
    }
    let pf = p as f64;
    let s = match regime {
        Regime::FractionalPower => (2.0 * pf.powf(0.45)).ceil() as usize,
        Regime::Sublinear => {
            let q = 0.4 * pf;
            if q <= 1.0 {
                return Err(Error::invalid(format!(
                    "sublinear regime needs 0.4p > 1, got p = {p}"
                )));
            }
            (q / q.ln()).ceil() as usize
        }
        // ⌈0.4p⌉ in integer arithmetic
        Regime::Linear => (2 * p + 4) / 5,
    };
    if s > p {
        return Err(Error::invalid(format!(
            "{} regime gives s = {s} > p = {p}",
            regime.name()
        )));
    }
    Ok(s)
}

/// `n = ⌈θ·s·log p⌉`.
pub fn sample_size(theta: f64, s: usize, p: usize) -> usize {
    (theta * s as f64 * (p as f64).ln()).ceil() as usize
}

/// Size of the symmetric difference of two index sets.
pub fn hamming(t_hat: &[usize], t: &[usize]) -> usize {
    let a: BTreeSet<usize> = t_hat.iter().copied().collect();
    let b: BTreeSet<usize> = t.iter().copied().collect();
    a.symmetric_difference(&b).count()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `base` with SplitMix64 finalizers.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |h, &x| splitmix64(h ^ x))
}

/// Seed of replication `r` in the cell `(p, regime, θ index, ρ index)`.
pub fn replication_seed(
    base: u64,
    p: usize,
    regime: Regime,
    theta_idx: usize,
    rho_idx: usize,
    r: usize,
) -> u64 {
    mix_seed(
        base,
        &[
            p as u64,
            regime.id(),
            theta_idx as u64,
            rho_idx as u64,
            r as u64,
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    #[default]
    Identity,
    Toeplitz,
    EqualCorrelation,
}

impl CovarianceKind {
    pub fn spec(self, dim: usize, rho: f64) -> CovarianceSpec {
        match self {
            CovarianceKind::Identity => CovarianceSpec::Identity { dim },
            CovarianceKind::Toeplitz => CovarianceSpec::Toeplitz { dim, rho },
            CovarianceKind::EqualCorrelation => CovarianceSpec::EqualCorrelation { dim, rho },
        }
    }
}

/// Family of the support block `Σ_TT`; the rest of `Σ` is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceConfig {
    pub kind: CovarianceKind,
    #[serde(default)]
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// The simulation penalty with the true `‖β_T‖²_Σ`.
    #[default]
    PaperSda,
    /// `λ0 / (1 + π1π2‖β_T‖²)` with the configured `K_λ0`.
    Theorem3,
    Fixed(f64),
}

impl LambdaRule {
    pub fn penalty(&self, model: &GaussianLdaModel, n: usize, k_lambda0: f64) -> Result<f64> {
        match *self {
            LambdaRule::PaperSda => {
                let dir = discriminant_direction(model)?;
                lambda_sda_raw(
                    dir.beta_norm_sigma_sq,
                    model.dim(),
                    dir.support_size(),
                    n,
                    0.3,
                )
            }
            LambdaRule::Theorem3 => lambda_of(model, n, k_lambda0),
            LambdaRule::Fixed(l) => {
                if !(l >= 0.0 && l.is_finite()) {
                    return Err(Error::invalid(format!(
                        "fixed penalty must be finite and ≥ 0, got {l}"
                    )));
                }
                Ok(l)
            }
        }
    }
}

fn default_replications() -> usize {
    200
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_k_lambda0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub regimes: Vec<Regime>,
    pub p_list: Vec<usize>,
    pub theta_grid: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub covariance: CovarianceConfig,
    #[serde(default)]
    pub lambda_rule: LambdaRule,
    #[serde(default)]
    pub base_seed: u64,
    /// When set, the run sweeps equal-correlation blocks over these values.
    #[serde(default)]
    pub rho_list: Option<Vec<f64>>,
    /// Drop fitted coefficients with `|v̂_j|` below this before comparing supports.
    #[serde(default)]
    pub support_threshold: Option<f64>,
    /// Magnitude of the `±` mean entries on the support.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_k_lambda0")]
    pub k_lambda0: f64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => line_column(text, span.start),
                None => (0, 0),
            };
            Error::Parse {
                source_name: "config",
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Reduced replication count and a single small dimension.
    pub fn quick(mut self) -> Self {
        self.replications = self.replications.min(50);
        self.p_list = vec![100];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() || self.p_list.is_empty() || self.theta_grid.is_empty() {
            return Err(Error::invalid(
                "regimes, p_list and theta_grid must be nonempty",
            ));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.theta_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::invalid("theta values must be positive and finite"));
        }
        if self.theta_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("theta_grid must be strictly increasing"));
        }
        let rhos = self
            .rho_list
            .clone()
            .unwrap_or_else(|| vec![self.covariance.rho]);
        if rhos.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::invalid("correlation values must lie in [0, 1)"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::invalid("amplitude must be positive"));
        }
        if let Some(t) = self.support_threshold {
            if !(t >= 0.0) {
                return Err(Error::invalid("support_threshold must be non-negative"));
            }
        }
        Ok(())
    }
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (u64, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() as u64 + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// One cell of an experiment: every replication shares these settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub regime: Regime,
    pub p: usize,
    pub s: usize,
    pub n: usize,
    pub theta: f64,
    pub theta_idx: usize,
    pub covariance: CovarianceConfig,
    pub rho_idx: usize,
    pub amplitude: f64,
    pub lambda_rule: LambdaRule,
    pub k_lambda0: f64,
    pub support_threshold: Option<f64>,
    pub base_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub hamming: usize,
    pub exact: bool,
}

impl Cell {
    pub fn seed(&self, r: usize) -> u64 {
        replication_seed(
            self.base_seed,
            self.p,
            self.regime,
            self.theta_idx,
            self.rho_idx,
            r,
        )
    }

    pub fn model(&self, r: usize) -> Result<GaussianLdaModel> {
        let block = self.covariance.kind.spec(self.s, self.covariance.rho);
        make_model(
            self.p,
            self.s,
            &CovarianceSpec::block_embedded(self.p, block),
            &MuScheme::RandomSign {
                amplitude: self.amplitude,
            },
            (0.5, 0.5),
            self.seed(r),
        )
    }

    /// Draws the model and data of replication `r`, fits, and scores the support.
    pub fn replicate(&self, r: usize) -> Result<Replication> {
        let model = self.model(r)?;
        let truth = discriminant_direction(&model)?.support;
        let data = sample_dataset_stream(&model, self.n, self.seed(r), 1)?;
        let lambda = self.lambda_rule.penalty(&model, self.n, self.k_lambda0)?;
        let fit = fit_sda(&data, lambda)?;
        let t_hat = match self.support_threshold {
            Some(t) => fit.support_above(t),
            None => fit.active_set,
        };
        let h = hamming(&t_hat, &truth);
        Ok(Replication {
            hamming: h,
            exact: h == 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub regime: Regime,
    pub p: usize,
    pub s: usize,
    pub rho: f64,
    pub theta: f64,
    pub n: usize,
    pub mean_hamming: f64,
    pub stderr_hamming: f64,
    pub exact_recovery_rate: f64,
    pub replications: usize,
    pub failures: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

pub const CSV_HEADER: [&str; 12] = [
    "regime",
    "p",
    "s",
    "rho",
    "theta",
    "n",
    "mean_hamming",
    "stderr_hamming",
    "exact_recovery_rate",
    "replications",
    "failures",
    "seed",
];

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl ExperimentTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.regime.name().to_string(),
                r.p.to_string(),
                r.s.to_string(),
                fmt_float(r.rho),
                fmt_float(r.theta),
                r.n.to_string(),
                fmt_float(r.mean_hamming),
                fmt_float(r.stderr_hamming),
                fmt_float(r.exact_recovery_rate),
                r.replications.to_string(),
                r.failures.to_string(),
                r.seed.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    /// Rows of one curve `(regime, p, ρ)`, in increasing θ.
    pub fn curve(&self, regime: Regime, p: usize, rho: f64) -> Vec<&ExperimentRow> {
        self.rows
            .iter()
            .filter(|r| r.regime == regime && r.p == p && r.rho == rho)
            .collect()
    }
}

/// Smallest θ on a curve whose exact-recovery rate reaches 0.99.
pub fn theta_star(curve: &[&ExperimentRow]) -> Option<f64> {
    curve
        .iter()
        .filter(|r| r.exact_recovery_rate >= 0.99)
        .map(|r| r.theta)
        .reduce(f64::min)
}

/// Runs every replication of every cell in parallel and aggregates per cell in
/// replication order, so the output does not depend on the worker count.
pub fn run_cells(cells: &[Cell], replications: usize) -> Result<ExperimentTable> {
    if replications == 0 {
        return Err(Error::invalid("replications must be at least 1"));
    }
    let outcomes: Vec<Result<Replication>> = (0..cells.len() * replications)
        .into_par_iter()
        .map(|k| cells[k / replications].replicate(k % replications))
        .collect();

    let mut rows = Vec::with_capacity(cells.len());
    for (cell, chunk) in cells.iter().zip(outcomes.chunks(replications)) {
        let mut ok = Vec::with_capacity(replications);
        let mut failures = 0;
        for outcome in chunk {
            match outcome {
                Ok(rep) => ok.push(*rep),
                Err(e) if e.is_numeric() => failures += 1,
                Err(e) => return Err(Error::invalid(format!("{}: {e}", describe(cell)))),
            }
        }
        if failures * 100 > replications {
            return Err(Error::TooManyFailures {
                cell: describe(cell),
                failed: failures,
                total: replications,
            });
        }
        rows.push(aggregate(cell, &ok, failures));
    }
    rows.sort_by(|a, b| {
        (a.regime, a.p)
            .cmp(&(b.regime, b.p))
            .then(a.rho.total_cmp(&b.rho))
            .then(a.theta.total_cmp(&b.theta))
    });
    Ok(ExperimentTable { rows })
}

fn describe(cell: &Cell) -> String {
    format!(
        "regime={} p={} rho={} theta={} n={}",
        cell.regime.name(),
        cell.p,
        cell.covariance.rho,
        cell.theta,
        cell.n
    )
}

fn aggregate(cell: &Cell, reps: &[Replication], failures: usize) -> ExperimentRow {
    let m = reps.len();
    let (mean, stderr, rate) = if m == 0 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mf = m as f64;
        let sum: f64 = reps.iter().map(|r| r.hamming as f64).sum();
        let mean = sum / mf;
        let ss: f64 = reps.iter().map(|r| (r.hamming as f64 - mean).powi(2)).sum();
        let stderr = if m > 1 {
            (ss / (mf - 1.0) / mf).sqrt()
        } else {
            0.0
        };
        let rate = reps.iter().filter(|r| r.exact).count() as f64 / mf;
        (mean, stderr, rate)
    };
    ExperimentRow {
        regime: cell.regime,
        p: cell.p,
        s: cell.s,
        rho: cell.covariance.rho,
        theta: cell.theta,
        n: cell.n,
        mean_hamming: mean,
        stderr_hamming: stderr,
        exact_recovery_rate: rate,
        replications: m,
        failures,
        seed: cell.base_seed,
    }
}

fn build_cells(config: &ExperimentConfig, covariances: &[CovarianceConfig]) -> Result<Vec<Cell>> {
    config.validate()?;
    let mut cells = Vec::new();
    for &regime in &config.regimes {
        for &p in &config.p_list {
            let s = sparsity_of(regime, p)?;
            if p <= s + 1 && config.lambda_rule == LambdaRule::PaperSda {
                return Err(Error::invalid(format!(
                    "{} regime at p = {p} gives s = {s}; the simulation penalty needs p > s + 1",
                    regime.name()
                )));
            }
            for (rho_idx, cov) in covariances.iter().enumerate() {
                for (theta_idx, &theta) in config.theta_grid.iter().enumerate() {
                    let n = sample_size(theta, s, p);
                    if n < 4 {
                        return Err(Error::invalid(format!(
                            "theta = {theta} gives n = {n} at p = {p}, s = {s}; at least 4 observations are needed"
                        )));
                    }
                    cells.push(Cell {
                        regime,
                        p,
                        s,
                        n,
                        theta,
                        theta_idx,
                        covariance: *cov,
                        rho_idx,
                        amplitude: config.amplitude,
                        lambda_rule: config.lambda_rule,
                        k_lambda0: config.k_lambda0,
                        support_threshold: config.support_threshold,
                        base_seed: config.base_seed,
                    });
                }
            }
        }
    }
    Ok(cells)
}

/// Recovery curves over `(regime, p, θ)` with the configured block covariance.
/// A configured `rho_list` turns this into a correlation sweep.
pub fn run_phase_transition(config: &ExperimentConfig) -> Result<ExperimentTable> {
    if let Some(rhos) = &config.rho_list {
        return run_correlation_sweep(config, rhos);
    }
    let cells = build_cells(config, &[config.covariance])?;
    run_cells(&cells, config.replications)
}

/// The same protocol with equal-correlation blocks at each `ρ`. The `ρ` index
/// enters the seed, so a sweep starting at `ρ = 0` reproduces the identity rows.
pub fn run_correlation_sweep(
    config: &ExperimentConfig,
    rho_list: &[f64],
) -> Result<ExperimentTable> {
    if rho_list.is_empty() {
        return Err(Error::invalid("rho_list must be nonempty"));
    }
    if rho_list.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(Error::invalid("correlation values must lie in [0, 1)"));
    }
    let covs: Vec<CovarianceConfig> = rho_list
        .iter()
        .map(|&rho| CovarianceConfig {
            kind: CovarianceKind::EqualCorrelation,
            rho,
        })
        .collect();
    let cells = build_cells(config, &covs)?;
    run_cells(&cells, config.replications)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    /// The family fills `Σ_TT`; identity elsewhere.
    #[default]
    Block,
    /// The family fills the whole `p × p` matrix.
    Full,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCovariance {
    #[serde(default)]
    pub kind: CovarianceKind,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub embed: Embedding,
}

fn default_priors() -> (f64, f64) {
    (0.5, 0.5)
}

/// A ground-truth model described in TOML.
///
/// The signal is one of: `mu` (explicit mean difference), `beta` (explicit
/// discriminant direction), or random `±amplitude` entries placed on the mean
/// (block embedding) or on the direction (full embedding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub p: usize,
    pub s: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub covariance: ModelCovariance,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default = "default_priors")]
    pub priors: (f64, f64),
}

impl ModelSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => line_column(text, span.start),
                None => (0, 0),
            };
            Error::Parse {
                source_name: "model spec",
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn build(&self) -> Result<GaussianLdaModel> {
        let c = &self.covariance;
        let scheme = match (&self.mu, &self.beta) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid("give at most one of `mu` and `beta`"))
            }
            (Some(mu), None) => MuScheme::Mean(Array1::from(mu.clone())),
            (None, Some(beta)) => MuScheme::Direction(Array1::from(beta.clone())),
            (None, None) => match c.embed {
                Embedding::Block => MuScheme::RandomSign {
                    amplitude: self.amplitude,
                },
                Embedding::Full => MuScheme::RandomSignDirection {
                    amplitude: self.amplitude,
                },
            },
        };
        let cov = match c.embed {
            Embedding::Block => CovarianceSpec::block_embedded(self.p, c.kind.spec(self.s, c.rho)),
            Embedding::Full => c.kind.spec(self.p, c.rho),
        };
        make_model(self.p, self.s, &cov, &scheme, self.priors, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity_of(Regime::Linear, 100).unwrap(), 40);
        assert_eq!(sparsity_of(Regime::Linear, 101).unwrap(), 41);
        assert_eq!(sparsity_of(Regime::FractionalPower, 100).unwrap(), 16);
        assert_eq!(sparsity_of(Regime::Sublinear, 100).unwrap(), 11);
        assert!(sparsity_of(Regime::Linear, 2).is_err());
        assert!(sparsity_of(Regime::FractionalPower, 3).is_err());
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(hamming(&[1, 2, 3], &[7, 8]), 5);
        assert_eq!(hamming(&[1, 2, 3], &[2, 3, 4]), 2);
    }

    #[test]
    fn seeds_differ_by_every_part() {
        let base = replication_seed(1, 100, Regime::Sublinear, 2, 0, 5);
        assert_ne!(base, replication_seed(2, 100, Regime::Sublinear, 2, 0, 5));
        assert_ne!(base, replication_seed(1, 101, Regime::Sublinear, 2, 0, 5));
        assert_ne!(base, replication_seed(1, 100, Regime::Linear, 2, 0, 5));
        assert_ne!(base, replication_seed(1, 100, Regime::Sublinear, 3, 0, 5));
        assert_ne!(base, replication_seed(1, 100, Regime::Sublinear, 2, 1, 5));
        assert_ne!(base, replication_seed(1, 100, Regime::Sublinear, 2, 0, 6));
    }

    #[test]
    fn config_parsing() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
regimes = ["fractional_power", "linear"]
p_list = [100]
theta_grid = [1.0, 2.0]
lambda_rule = { fixed = 0.05 }
[covariance]
kind = "toeplitz"
rho = 0.1
"#,
        )
        .unwrap();
        assert_eq!(cfg.replications, 200);
        assert_eq!(cfg.lambda_rule, LambdaRule::Fixed(0.05));
        assert_eq!(cfg.covariance.kind, CovarianceKind::Toeplitz);
        let bad = ExperimentConfig::from_toml_str(
            "regimes = [\"linear\"]\np_list = [100]\ntheta_grid = [2.0, 1.0]\n",
        );
        assert!(bad.is_err());
        match ExperimentConfig::from_toml_str(
            "regimes = [\"linear\"]\np_list = [100]\ntheta_grid = [1.0]\nreplications = \"x\"\n",
        ) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn small_run_is_deterministic() {
        let cfg = ExperimentConfig {
            regimes: vec![Regime::FractionalPower],
            p_list: vec![30],
            theta_grid: vec![1.0, 4.0],
            replications: 6,
            covariance: CovarianceConfig::default(),
            lambda_rule: LambdaRule::PaperSda,
            base_seed: 3,
            rho_list: None,
            support_threshold: None,
            amplitude: 1.0,
            k_lambda0: 1.0,
        };
        let a = run_phase_transition(&cfg).unwrap();
        let b = run_phase_transition(&cfg).unwrap();
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
        assert_eq!(a.rows.len(), 2);
        let s = sparsity_of(Regime::FractionalPower, 30).unwrap();
        for row in &a.rows {
            assert_eq!(row.n, sample_size(row.theta, s, 30));
            assert!(row.mean_hamming >= 0.0 && row.mean_hamming <= 30.0);
            assert!((0.0..=1.0).contains(&row.exact_recovery_rate));
        }
    }

    #[test]
    fn model_spec_full_embedding_keeps_direction_sparse() {
        let spec = ModelSpec::from_toml_str(
            "p = 12\ns = 3\nseed = 4\n[covariance]\nkind = \"equal_correlation\"\nrho = 0.3\nembed = \"full\"\n",
        )
        .unwrap();
        let model = spec.build().unwrap();
        assert_eq!(discriminant_direction(&model).unwrap().support_size(), 3);
        assert!(ModelSpec::from_toml_str("p = 12\ns = 3\nbogus = 1\n").is_err());
    }
}
