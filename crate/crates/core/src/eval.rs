//! Detector evaluation: ROC AUC, thresholded accuracy, per-generator
//! reports, score fusion and Platt calibration.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Class, DatasetManifest, Label, ScoreSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_scores<T: Scalar>(name: &str, s: &[T]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::Empty(format!("{name} scores")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{name} score")));
    }
    Ok(())
}

/// Twice the Mann-Whitney U statistic of `fake` over `real`, as an exact integer.
///
/// Each (fake, real) pair contributes 2 when the fake score is higher and 1 on ties.
pub fn mann_whitney_u2<T: Scalar>(real: &[T], fake: &[T]) -> u128 {
    let mut all: Vec<(T, bool)> = real
        .iter()
        .map(|&s| (s, false))
        .chain(fake.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut u2: u128 = 0;
    let mut reals_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut r, mut f) = (0u128, 0u128);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                f += 1;
            } else {
                r += 1;
            }
            j += 1;
        }
        u2 += 2 * f * reals_below + f * r;
        reals_below += r;
        i = j;
    }
    u2
}

/// Probability that a random fake outscores a random real, ties counting half.
///
/// Computed in `O(n log n)` from tie-grouped ranks; exact integer counting
/// makes it identical to the pairwise definition.
pub fn roc_auc<T: Scalar>(real_scores: &[T], fake_scores: &[T]) -> Result<T> {
    check_scores("real", real_scores)?;
    check_scores("fake", fake_scores)?;
    let u2 = mann_whitney_u2(real_scores, fake_scores);
    let pairs = 2 * real_scores.len() as u128 * fake_scores.len() as u128;
    Ok(T::of(u2 as f64) / T::of(pairs as f64))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMode {
    /// Mean of true-positive and true-negative rates.
    #[default]
    Balanced,
    /// Fraction of all images classified correctly.
    Raw,
}

impl std::str::FromStr for AccuracyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "balanced" => Ok(AccuracyMode::Balanced),
            "raw" => Ok(AccuracyMode::Raw),
            other => Err(format!("unknown accuracy mode {other:?} (expected balanced or raw)")),
        }
    }
}

/// Accuracy with fake ⇔ `score > threshold`; scores equal to the threshold count as real.
pub fn accuracy_at_threshold<T: Scalar>(
    real_scores: &[T],
    fake_scores: &[T],
    threshold: T,
    mode: AccuracyMode,
) -> Result<T> {
    check_scores("real", real_scores)?;
    check_scores("fake", fake_scores)?;
    let tp = fake_scores.iter().filter(|&&s| s > threshold).count();
    let tn = real_scores.iter().filter(|&&s| s <= threshold).count();
    let (nf, nr) = (fake_scores.len(), real_scores.len());
    Ok(match mode {
        AccuracyMode::Balanced => {
            (T::of_usize(tp) / T::of_usize(nf) + T::of_usize(tn) / T::of_usize(nr)) / T::of(2.0)
        }
        AccuracyMode::Raw => T::of_usize(tp + tn) / T::of_usize(nf + nr),
    })
}

/// Unweighted per-path mean of several score sets covering identical paths.
/// Output order follows the first set.
pub fn fuse_scores<T: Scalar>(score_sets: &[ScoreSet<T>]) -> Result<ScoreSet<T>> {
    if score_sets.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "fusion needs at least 2 score sets, got {}",
            score_sets.len()
        )));
    }
    let first = &score_sets[0];
    let maps: Vec<HashMap<&str, T>> = score_sets.iter().map(ScoreSet::to_map).collect();
    let base: HashSet<&str> = maps[0].keys().copied().collect();
    for m in &maps[1..] {
        let other: HashSet<&str> = m.keys().copied().collect();
        if other != base {
            let mut only_left: Vec<String> = base.difference(&other).map(|s| s.to_string()).collect();
            let mut only_right: Vec<String> = other.difference(&base).map(|s| s.to_string()).collect();
            only_left.sort();
            only_right.sort();
            return Err(Error::PathMismatch {
                only_left,
                only_right,
            });
        }
    }
    let k = T::of_usize(score_sets.len());
    let records = first
        .records()
        .iter()
        .map(|(p, _)| {
            let total: T = maps.iter().map(|m| m[p.as_str()]).sum();
            (p.clone(), total / k)
        })
        .collect();
    let name = score_sets
        .iter()
        .map(|s| s.detector_name.as_str())
        .collect::<Vec<_>>()
        .join("+");
    ScoreSet::new(name, records)
}

/// Sigmoid calibration `p(s) = 1 / (1 + exp(a s + b))`. For higher-is-synthetic
/// scores an orientation-preserving fit has `a < 0`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams<T> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> CalibrationParams<T> {
    pub fn apply(&self, s: T) -> T {
        let z = self.a * s + self.b;
        // 1 / (1 + e^z), evaluated without overflow.
        if z >= T::zero() {
            let e = (-z).exp();
            e / (T::one() + e)
        } else {
            T::one() / (T::one() + z.exp())
        }
    }

    pub fn preserves_orientation(&self) -> bool {
        self.a < T::zero()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlattFit<T> {
    pub params: CalibrationParams<T>,
    pub iterations: usize,
    /// False when the iteration budget ran out; `params` is then the best iterate.
    pub converged: bool,
}

const PLATT_MAX_ITER: usize = 100;
const PLATT_GRAD_TOL: f64 = 1e-10;
const PLATT_MIN_STEP: f64 = 1e-10;
const PLATT_HESSIAN_RIDGE: f64 = 1e-12;

/// Negative log-likelihood of smoothed targets under `p(s)`.
pub fn platt_objective<T: Scalar>(scores: &[T], targets: &[T], a: T, b: T) -> T {
    scores
        .iter()
        .zip(targets)
        .map(|(&s, &t)| {
            let z = a * s + b;
            // -[t ln p + (1-t) ln(1-p)] with p = 1/(1+e^z) equals t z + ln(1 + e^-z) for z >= 0.
            if z >= T::zero() {
                t * z + (-z).exp().ln_1p()
            } else {
                (t - T::one()) * z + z.exp().ln_1p()
            }
        })
        .sum()
}

/// Prior-corrected Platt targets: `(N+ + 1)/(N+ + 2)` for synthetic, `1/(N- + 2)` for real.
pub fn platt_targets<T: Scalar>(labels: &[Label]) -> Vec<T> {
    let pos = labels.iter().filter(|l| l.is_synthetic()).count();
    let neg = labels.len() - pos;
    let hi = T::of_usize(pos + 1) / T::of_usize(pos + 2);
    let lo = T::one() / T::of_usize(neg + 2);
    labels
        .iter()
        .map(|l| if l.is_synthetic() { hi } else { lo })
        .collect()
}

/// Maximum-likelihood Platt fit by Newton's method with backtracking line
/// search, starting from `(0, ln((N- + 1)/(N+ + 1)))`.
pub fn platt_fit<T: Scalar>(scores: &[T], labels: &[Label]) -> Result<PlattFit<T>> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    check_scores("calibration", scores)?;
    let pos = labels.iter().filter(|l| l.is_synthetic()).count();
    let neg = labels.len() - pos;
    if pos < 2 || neg < 2 {
        return Err(Error::InsufficientClasses {
            min: 2,
            real: neg,
            synthetic: pos,
        });
    }
    let targets = platt_targets::<T>(labels);
    let mut a = T::zero();
    let mut b = (T::of_usize(neg + 1) / T::of_usize(pos + 1)).ln();
    let mut fval = platt_objective(scores, &targets, a, b);
    let ridge = T::of(PLATT_HESSIAN_RIDGE);
    for iteration in 0..PLATT_MAX_ITER {
        // Gradient and Hessian of the objective in (a, b).
        let (mut h11, mut h22, mut h21) = (ridge, ridge, T::zero());
        let (mut g1, mut g2) = (T::zero(), T::zero());
        for (&s, &t) in scores.iter().zip(&targets) {
            let p = CalibrationParams { a, b }.apply(s);
            let q = T::one() - p;
            let d2 = p * q;
            h11 = h11 + s * s * d2;
            h22 = h22 + d2;
            h21 = h21 + s * d2;
            let d1 = t - p;
            g1 = g1 + s * d1;
            g2 = g2 + d1;
        }
        if g1.abs().hypot(g2.abs()) < T::of(PLATT_GRAD_TOL) {
            return Ok(PlattFit {
                params: CalibrationParams { a, b },
                iterations: iteration,
                converged: true,
            });
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = T::one();
        let mut accepted = false;
        while step >= T::of(PLATT_MIN_STEP) {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = platt_objective(scores, &targets, na, nb);
            if nf < fval + T::of(1e-4) * step * gd {
                a = na;
                b = nb;
                fval = nf;
                accepted = true;
                break;
            }
            step = step / T::of(2.0);
        }
        if !accepted {
            log::warn!("platt fit: line search failed at iteration {iteration}");
            return Ok(PlattFit {
                params: CalibrationParams { a, b },
                iterations: iteration,
                converged: false,
            });
        }
    }
    log::warn!("platt fit: reached {PLATT_MAX_ITER} iterations without convergence");
    Ok(PlattFit {
        params: CalibrationParams { a, b },
        iterations: PLATT_MAX_ITER,
        converged: false,
    })
}

/// Maps every score through the calibration sigmoid, preserving record order.
pub fn platt_apply<T: Scalar>(params: &CalibrationParams<T>, s: &ScoreSet<T>) -> ScoreSet<T> {
    s.map_scores(format!("{}+platt", s.detector_name), |v| params.apply(v))
        .expect("sigmoid outputs are finite")
}

/// Scores and labels of manifest entries present in `scores`, in manifest order.
pub fn labelled_scores<T: Scalar>(
    manifest: &DatasetManifest,
    scores: &ScoreSet<T>,
) -> Result<Vec<(T, Label)>> {
    let map = scores.to_map();
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(manifest.len());
    for e in manifest.entries() {
        match map.get(e.path.as_str()) {
            Some(&s) => out.push((s, e.label.clone())),
            None => missing.push(e.path.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingScores(missing));
    }
    Ok(out)
}

/// Single fit over every calibration image.
pub fn platt_fit_pooled<T: Scalar>(
    manifest: &DatasetManifest,
    scores: &ScoreSet<T>,
) -> Result<PlattFit<T>> {
    let (s, l): (Vec<T>, Vec<Label>) = labelled_scores(manifest, scores)?.into_iter().unzip();
    platt_fit(&s, &l)
}

/// One fit per generator, each using that generator's images plus every real image.
pub fn platt_fit_per_generator<T: Scalar>(
    manifest: &DatasetManifest,
    scores: &ScoreSet<T>,
) -> Result<BTreeMap<String, PlattFit<T>>> {
    let all = labelled_scores(manifest, scores)?;
    let mut fits = BTreeMap::new();
    for generator in manifest.generators() {
        let (s, l): (Vec<T>, Vec<Label>) = all
            .iter()
            .filter(|(_, l)| !l.is_synthetic() || l.generator() == generator)
            .cloned()
            .unzip();
        fits.insert(generator, platt_fit(&s, &l)?);
    }
    Ok(fits)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResult {
    pub generator: String,
    pub acc_pct: f64,
    pub auc_pct: f64,
    pub n_fake: usize,
    pub n_real: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub acc_pct: f64,
    pub auc_pct: f64,
}

/// Per-generator rows (sorted by name) plus their unweighted average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detector: String,
    pub rows: Vec<GeneratorResult>,
    pub avg: AverageRow,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Rounds a percentage to one decimal for display (`99.94 -> "99.9"`).
pub fn format_pct(v: f64) -> String {
    format!("{:.1}", (v * 10.0).round() / 10.0)
}

impl EvalReport {
    /// `"acc/auc"` with one decimal each, e.g. `99.9/100.0`.
    pub fn cell(acc_pct: f64, auc_pct: f64) -> String {
        format!("{}/{}", format_pct(acc_pct), format_pct(auc_pct))
    }

    pub fn row_cell(&self, generator: &str) -> Option<String> {
        self.rows
            .iter()
            .find(|r| r.generator == generator)
            .map(|r| Self::cell(r.acc_pct, r.auc_pct))
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        writeln!(out, "| {} | Acc/AUC % | fake | real |", self.detector).unwrap();
        writeln!(out, "|---|---|---|---|").unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "| {} | {} | {} | {} |",
                r.generator,
                Self::cell(r.acc_pct, r.auc_pct),
                r.n_fake,
                r.n_real
            )
            .unwrap();
        }
        writeln!(out, "| AVG | {} | | |", Self::cell(self.avg.acc_pct, self.avg.auc_pct)).unwrap();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One row per generator, each scored against the full shared real set.
pub fn build_report<T: Scalar>(
    manifest: &DatasetManifest,
    scores: &ScoreSet<T>,
    threshold: T,
    mode: AccuracyMode,
) -> Result<EvalReport> {
    let labelled = labelled_scores(manifest, scores)?;
    let real: Vec<T> = labelled
        .iter()
        .filter(|(_, l)| l.class() == Class::Real)
        .map(|(s, _)| *s)
        .collect();
    if real.is_empty() {
        return Err(Error::Empty("manifest has no real images".into()));
    }
    let mut by_generator: BTreeMap<&str, Vec<T>> = BTreeMap::new();
    for (s, l) in &labelled {
        if l.is_synthetic() {
            by_generator.entry(l.generator()).or_default().push(*s);
        }
    }
    if by_generator.is_empty() {
        return Err(Error::Empty("manifest has no synthetic images".into()));
    }
    let mut rows = Vec::with_capacity(by_generator.len());
    for (generator, fake) in by_generator {
        let acc = accuracy_at_threshold(&real, &fake, threshold, mode)?;
        let auc = roc_auc(&real, &fake)?;
        rows.push(GeneratorResult {
            generator: generator.to_string(),
            acc_pct: 100.0 * acc.as_f64(),
            auc_pct: 100.0 * auc.as_f64(),
            n_fake: fake.len(),
            n_real: real.len(),
        });
    }
    let avg = average_row(&rows);
    Ok(EvalReport {
        detector: scores.detector_name.clone(),
        rows,
        avg,
        seed: None,
    })
}

/// Unweighted mean of the rows' metrics.
pub fn average_row(rows: &[GeneratorResult]) -> AverageRow {
    let n = rows.len() as f64;
    AverageRow {
        acc_pct: rows.iter().map(|r| r.acc_pct).sum::<f64>() / n,
        auc_pct: rows.iter().map(|r| r.auc_pct).sum::<f64>() / n,
    }
}
