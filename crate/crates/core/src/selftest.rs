//! Embedded invariant checks run by the `selftest` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Label;
use crate::eval::{platt_fit, roc_auc};
use crate::spectrum::{AmplitudeSpectrum, SpectrumScale};

#[derive(Clone, Debug, PartialEq)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn pairwise_auc(real: &[f64], fake: &[f64]) -> f64 {
    let wins: f64 = fake
        .iter()
        .flat_map(|f| real.iter().map(move |r| (f, r)))
        .map(|(f, r)| if f > r { 1.0 } else if f == r { 0.5 } else { 0.0 })
        .sum();
    wins / (real.len() * fake.len()) as f64
}

fn auc_oracle() -> SelfCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let nr = rng.gen_range(1..=20);
        let nf = rng.gen_range(1..=20);
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(0..15) as f64 / 14.0).collect::<Vec<_>>();
        let real = draw(nr);
        let fake = draw(nf);
        let fast = roc_auc(&real, &fake).unwrap_or(f64::NAN);
        worst = worst.max((fast - pairwise_auc(&real, &fake)).abs());
    }
    SelfCheck {
        name: "auc matches pairwise Mann-Whitney",
        passed: worst < 1e-12,
        detail: format!("max deviation {worst:e} over 200 instances"),
    }
}

fn fft_cosine() -> SelfCheck {
    let n = 64;
    let plane: Vec<f64> = (0..n * n)
        .map(|i| (2.0 * std::f64::consts::PI * (i % n) as f64 / 8.0).cos())
        .collect();
    let s = AmplitudeSpectrum::from_plane(&plane, n, n, true, SpectrumScale::Linear);
    let expected = (n * n) as f64 / 2.0;
    let max = s.max_value();
    let nonzero = s.values().iter().filter(|&&v| v > 1e-6 * max).count();
    let err = [8isize, -8]
        .iter()
        .map(|&v| ((s.at(0, v) - expected) / expected).abs())
        .fold(0.0, f64::max);
    SelfCheck {
        name: "cosine spectrum has two bins of N^2/2",
        passed: nonzero == 2 && err < 1e-6,
        detail: format!("{nonzero} nonzero bins, relative error {err:e}"),
    }
}

fn platt_symmetry() -> SelfCheck {
    let scores = [0.1f64, 0.25, 0.4, 0.55, 0.8, 0.9];
    let pos = || Label::synthetic("selftest").expect("valid label");
    let labels = [Label::real(), Label::real(), pos(), Label::real(), pos(), pos()];
    let swapped: Vec<Label> = labels
        .iter()
        .map(|l| if l.is_synthetic() { Label::real() } else { pos() })
        .collect();
    match (platt_fit(&scores, &labels), platt_fit(&scores, &swapped)) {
        (Ok(p), Ok(q)) => {
            let dev = (p.params.a + q.params.a).abs().max((p.params.b + q.params.b).abs());
            SelfCheck {
                name: "platt fit is label-swap antisymmetric",
                passed: dev < 1e-6 && p.converged && q.converged,
                detail: format!("a = {:.6}, b = {:.6}, deviation {dev:e}", p.params.a, p.params.b),
            }
        }
        (p, q) => SelfCheck {
            name: "platt fit is label-swap antisymmetric",
            passed: false,
            detail: format!("fit failed: {:?} / {:?}", p.err(), q.err()),
        },
    }
}

/// Runs every embedded check.
pub fn run() -> Vec<SelfCheck> {
    vec![auc_oracle(), fft_cosine(), platt_symmetry()]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
