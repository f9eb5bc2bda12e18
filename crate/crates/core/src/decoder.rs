//! Exhaustive-search support decoder and its separation diagnostics.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, GaussianLdaModel};
use crate::optim::{block, gather, Cholesky};
use crate::subsets::{binomial, ln_binomial, next_subset, subsets_of, Subsets};

pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Outcome of an exhaustive scan.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderResult {
    pub t_hat: Vec<usize>,
    pub score: f64,
    pub scanned: u64,
    /// `score` minus the second best score; `None` when only one subset exists.
    pub runner_up_gap: Option<f64>,
    /// Subsets whose sample covariance block failed to factor; they score `−∞`.
    pub singular: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderExport {
    pub t_hat: Vec<usize>,
    pub score: f64,
    pub runner_up_gap: Option<f64>,
    pub scanned: u64,
}

impl DecoderResult {
    pub fn export(&self) -> DecoderExport {
        DecoderExport {
            t_hat: self.t_hat.clone(),
            score: self.score,
            runner_up_gap: self.runner_up_gap,
            scanned: self.scanned,
        }
    }
}

/// `μ̂_A' S_AA⁻¹ μ̂_A` for one candidate subset.
pub fn subset_score(dataset: &Dataset, subset: &[usize]) -> Result<f64> {
    let mu = dataset.mu_hat();
    quadratic_on(mu.view(), dataset.pooled_covariance(), subset)
}

fn quadratic_on(mu: ArrayView1<f64>, sigma: &Array2<f64>, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Ok(0.0);
    }
    let chol = Cholesky::factor(block(sigma.view(), subset, subset).view())?;
    chol.inv_quad_form(gather(mu, subset).view())
}

#[derive(Debug, Clone)]
struct Scored {
    score: f64,
    subset: Vec<usize>,
}

/// Higher score first, then the lexicographically smaller subset.
fn rank(a: &Scored, b: &Scored) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.subset.cmp(&b.subset))
}

#[derive(Debug, Clone, Default)]
struct TopTwo {
    best: Vec<Scored>,
    scanned: u64,
    singular: Vec<Vec<usize>>,
}

impl TopTwo {
    fn push(&mut self, item: Scored) {
        self.scanned += 1;
        self.best.push(item);
        self.best.sort_by(rank);
        self.best.truncate(2);
    }

    fn merge(mut self, other: TopTwo) -> TopTwo {
        self.scanned += other.scanned;
        self.best.extend(other.best);
        self.best.sort_by(rank);
        self.best.truncate(2);
        self.singular.extend(other.singular);
        self.singular.sort();
        self
    }
}

pub fn exhaustive_decode(dataset: &Dataset, s: usize) -> Result<DecoderResult> {
    exhaustive_decode_with(dataset, s, DEFAULT_ENUMERATION_CAP)
}

/// Scans every size-`s` subset in lexicographic order, split by first index across
/// workers, and returns the maximizer of `g`.
pub fn exhaustive_decode_with(dataset: &Dataset, s: usize, cap: u128) -> Result<DecoderResult> {
    let p = dataset.dim();
    let n = dataset.n();
    if s == 0 {
        return Err(Error::invalid("decoder needs s ≥ 1"));
    }
    if s > p || s + 2 > n {
        return Err(Error::invalid(format!(
            "decoder needs s ≤ min(p, n − 2); got s = {s}, p = {p}, n = {n}"
        )));
    }
    let count = binomial(p, s);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mu = dataset.mu_hat();
    let sigma = dataset.pooled_covariance();

    let merged = (0..=p - s)
        .into_par_iter()
        .map(|first| {
            let mut acc = TopTwo::default();
            let mut tail: Vec<usize> = (0..s - 1).collect();
            let rest = p - first - 1;
            loop {
                let subset: Vec<usize> = std::iter::once(first)
                    .chain(tail.iter().map(|&i| first + 1 + i))
                    .collect();
                let score = match quadratic_on(mu.view(), sigma, &subset) {
                    Ok(g) => g,
                    Err(Error::Singular { .. }) => {
                        acc.singular.push(subset.clone());
                        f64::NEG_INFINITY
                    }
                    Err(e) => return Err(e),
                };
                acc.push(Scored { score, subset });
                if !next_subset(&mut tail, rest) {
                    break;
                }
            }
            Ok(acc)
        })
        .try_reduce(TopTwo::default, |a, b| Ok(a.merge(b)))?;

    let mut best = merged.best.into_iter();
    let top = best.next().expect("at least one subset is scanned");
    if top.score == f64::NEG_INFINITY {
        return Err(Error::AllSingular {
            scanned: merged.scanned,
        });
    }
    let runner_up_gap = best.next().map(|second| top.score - second.score);
    Ok(DecoderResult {
        t_hat: top.subset,
        score: top.score,
        scanned: merged.scanned,
        runner_up_gap,
        singular: merged.singular,
    })
}

/// `x_{B|A}' Σ_{BB|A}⁻¹ x_{B|A}` with `x_{B|A} = x_B − Σ_BA Σ_AA⁻¹ x_A` and the Schur
/// complement `Σ_{BB|A}`. An empty `cond` gives the unconditional quantity.
pub fn conditional_quadratic(
    x: ArrayView1<f64>,
    sigma: &Array2<f64>,
    cond: &[usize],
    target: &[usize],
) -> Result<f64> {
    if target.is_empty() {
        return Ok(0.0);
    }
    if cond.is_empty() {
        return quadratic_on(x, sigma, target);
    }
    let chol_a = Cholesky::factor(block(sigma.view(), cond, cond).view())?;
    let s_ab = block(sigma.view(), cond, target);
    let w = chol_a.solve_matrix(s_ab.view())?;
    let x_a = gather(x, cond);
    let x_b = gather(x, target);
    let x_cond: Array1<f64> = &x_b - &w.t().dot(&x_a);
    let mut schur = block(sigma.view(), target, target) - s_ab.t().dot(&w);
    let sym = (&schur + &schur.t()) * 0.5;
    schur.assign(&sym);
    let q = Cholesky::factor(schur.view())?.inv_quad_form(x_cond.view())?;
    Ok(q.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapTerms {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub gamma: f64,
    pub k: usize,
}

/// `Γ_{n,p,s,k} = n⁻¹ log(C(p−s, s−k)·C(s, k)·s·log n)`.
pub fn gamma_term(n: usize, p: usize, s: usize, k: usize) -> Result<f64> {
    if k > s || s > p || s - k > p - s {
        return Err(Error::invalid(format!(
            "no competing subset with overlap {k} exists for p = {p}, s = {s}"
        )));
    }
    if n < 2 || s == 0 {
        return Err(Error::invalid("gamma term needs n ≥ 2 and s ≥ 1"));
    }
    let nf = n as f64;
    let log = ln_binomial(p - s, s - k) + ln_binomial(s, k) + (s as f64).ln() + nf.ln().ln();
    Ok(log / nf)
}

fn validate_subset(name: &str, subset: &[usize], p: usize) -> Result<()> {
    if subset.windows(2).any(|w| w[0] >= w[1]) || subset.iter().any(|&a| a >= p) {
        return Err(Error::invalid(format!(
            "{name} must be strictly increasing indices below {p}"
        )));
    }
    Ok(())
}

/// Gap terms of a competing support `t_prime` against `t` under the population model.
pub fn gap_terms(
    model: &GaussianLdaModel,
    t: &[usize],
    t_prime: &[usize],
    n: usize,
) -> Result<GapTerms> {
    let p = model.dim();
    validate_subset("T", t, p)?;
    validate_subset("T'", t_prime, p)?;
    if t.len() != t_prime.len() {
        return Err(Error::invalid(format!(
            "|T'| = {} must equal |T| = {}",
            t_prime.len(),
            t.len()
        )));
    }
    let a1_set: Vec<usize> = t.iter().copied().filter(|a| t_prime.contains(a)).collect();
    let a2_set: Vec<usize> = t.iter().copied().filter(|a| !t_prime.contains(a)).collect();
    let a3_set: Vec<usize> = t_prime.iter().copied().filter(|a| !t.contains(a)).collect();
    let mu = model.mu();
    let sigma = model.sigma();
    let a1 = quadratic_on(mu.view(), sigma, &a1_set)?;
    let a2 = conditional_quadratic(mu.view(), sigma, &a1_set, &a2_set)?;
    let a3 = conditional_quadratic(mu.view(), sigma, &a1_set, &a3_set)?;
    let k = a1_set.len();
    Ok(GapTerms {
        a1,
        a2,
        a3,
        gamma: gamma_term(n, p, t.len(), k)?,
        k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for SeparationConstants {
    fn default() -> Self {
        SeparationConstants {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
        }
    }
}

/// Left side minus right side of the separation inequality for one competitor.
pub fn separation_margin(g: &GapTerms, c: &SeparationConstants) -> f64 {
    let scale = g.a1.max(1.0);
    g.a2 - (1.0 + c.c1 * g.gamma.sqrt()) * g.a3
        - c.c2 * (scale * g.a2 * g.gamma).sqrt()
        - c.c3 * scale * g.gamma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub min_margin: f64,
    pub argmin: Vec<usize>,
    pub terms: GapTerms,
    pub satisfied: bool,
    pub competitors: u64,
    pub constants: SeparationConstants,
}

pub fn separation_check(
    model: &GaussianLdaModel,
    t: &[usize],
    n: usize,
    constants: SeparationConstants,
) -> Result<SeparationReport> {
    separation_check_with(model, t, n, constants, DEFAULT_ENUMERATION_CAP)
}

/// Worst separation margin over every `T' ≠ T` of the same size.
pub fn separation_check_with(
    model: &GaussianLdaModel,
    t: &[usize],
    n: usize,
    constants: SeparationConstants,
    cap: u128,
) -> Result<SeparationReport> {
    let p = model.dim();
    let s = t.len();
    if s == 0 {
        return Err(Error::invalid("separation check needs a nonempty support"));
    }
    validate_subset("T", t, p)?;
    let count = binomial(p, s);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut worst: Option<(f64, Vec<usize>, GapTerms)> = None;
    let mut competitors = 0;
    for t_prime in Subsets::new(p, s) {
        if t_prime == t {
            continue;
        }
        competitors += 1;
        let g = gap_terms(model, t, &t_prime, n)?;
        let m = separation_margin(&g, &constants);
        if worst.as_ref().map_or(true, |(w, _, _)| m < *w) {
            worst = Some((m, t_prime, g));
        }
    }
    let (min_margin, argmin, terms) =
        worst.ok_or_else(|| Error::invalid("no competing support exists (s = p)"))?;
    Ok(SeparationReport {
        min_margin,
        argmin,
        terms,
        satisfied: min_margin > 0.0,
        competitors,
        constants,
    })
}

/// Best score among subsets that share exactly `k` indices with `t`, for each `k`.
pub fn best_score_by_overlap(dataset: &Dataset, t: &[usize]) -> Result<Vec<f64>> {
    let p = dataset.dim();
    let s = t.len();
    validate_subset("T", t, p)?;
    let outside = crate::model::complement(t, p);
    let mut best = Vec::with_capacity(s + 1);
    for k in 0..=s {
        let mut top = f64::NEG_INFINITY;
        if s - k <= outside.len() {
            for keep in subsets_of(t, k) {
                for add in subsets_of(&outside, s - k) {
                    let mut subset: Vec<usize> = keep.iter().chain(add.iter()).copied().collect();
                    subset.sort_unstable();
                    top = top.max(subset_score(dataset, &subset)?);
                }
            }
        }
        best.push(top);
    }
    Ok(best)
}
