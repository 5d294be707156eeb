//! Compares hypothesis sampling strategies across budgets on planted
//! instances.
//!
//! Every (strategy, budget) cell fits the same instances, so differences in
//! the table come from sampling order alone. Fitting runs against the
//! instance's generating mode: the question is how fast a mode finds its own
//! face, not which mode wins.

use rayon::prelude::*;

use crate::config::{derive_seed, FitConfig, SamplingStrategy};
use crate::error::{Error, Result};
use crate::eval::metrics::{mnle, MetricSubset, FAILURE_THRESHOLD};
use crate::eval::synth::{synthesize, SynthConfig};
use crate::fitter::fit_mode;
use crate::shape::ModelEnsemble;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub strategies: Vec<SamplingStrategy>,
    /// Hypothesis budgets (`max_iter`) to sweep.
    pub budgets: Vec<usize>,
    /// Instances per cell.
    pub instances: usize,
    pub synth: SynthConfig,
    /// Template for fitting; `strategy`, `max_iter`, and `seed` are filled
    /// per cell.
    pub fit: FitConfig,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            strategies: vec![
                SamplingStrategy::Uniform,
                SamplingStrategy::Confidence,
                SamplingStrategy::Greedy,
            ],
            budgets: vec![50, 200, 1000],
            instances: 100,
            synth: SynthConfig {
                occlusion_rate: 0.3,
                clutter: 2,
                noise_sigma: 1.0,
                ..SynthConfig::default()
            },
            fit: FitConfig::default(),
            seed: 0,
        }
    }
}

/// One cell of the ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub strategy: SamplingStrategy,
    pub budget: usize,
    pub instances: usize,
    pub failure_rate: f64,
    /// Mean normalized error over succeeded instances (NaN when none did).
    pub mnle_mean: f64,
    /// Hypotheses evaluated until the winning one, summarized over
    /// succeeded instances.
    pub hypotheses_median: f64,
    pub hypotheses_mean: f64,
}

fn median(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Runs the full sweep. Instance `i` is identical in every cell; the fit
/// seed varies with the strategy only through the shared template seed, so
/// the whole table is reproducible.
pub fn run_ablation(ensemble: &ModelEnsemble, cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    if cfg.strategies.is_empty() || cfg.budgets.is_empty() {
        return Err(Error::EmptyInput("ablation needs strategies and budgets"));
    }
    if cfg.instances == 0 {
        return Err(Error::EmptyInput("ablation needs instances"));
    }
    cfg.synth.validate()?;

    let instances = (0..cfg.instances)
        .map(|i| synthesize(ensemble, &cfg.synth, derive_seed(cfg.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(cfg.strategies.len() * cfg.budgets.len());
    for &strategy in &cfg.strategies {
        for &budget in &cfg.budgets {
            let fit_cfg = FitConfig {
                strategy,
                max_iter: budget,
                ..cfg.fit.clone()
            };
            let outcomes: Vec<Option<(f64, usize)>> = instances
                .par_iter()
                .enumerate()
                .map(|(i, inst)| -> Result<Option<(f64, usize)>> {
                    let mode = ensemble
                        .mode(inst.mode)
                        .expect("instance mode comes from this ensemble");
                    let fit = fit_mode(
                        mode,
                        &inst.pools,
                        &fit_cfg,
                        derive_seed(fit_cfg.seed, i as u64),
                    )?;
                    match fit {
                        None => Ok(None),
                        Some(f) => {
                            let e = mnle(&f.sparse, &inst.truth, &mode.scheme, MetricSubset::Full)?;
                            Ok(Some((e, f.hypotheses_to_best)))
                        }
                    }
                })
                .collect::<Result<Vec<_>>>()?;

            let mut errors = Vec::new();
            let mut hypotheses = Vec::new();
            for out in outcomes.iter().flatten() {
                if out.0 <= FAILURE_THRESHOLD {
                    errors.push(out.0);
                    hypotheses.push(out.1 as f64);
                }
            }
            hypotheses.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let successes = errors.len();
            rows.push(AblationRow {
                strategy,
                budget,
                instances: cfg.instances,
                failure_rate: 1.0 - successes as f64 / cfg.instances as f64,
                mnle_mean: if successes == 0 {
                    f64::NAN
                } else {
                    errors.iter().sum::<f64>() / successes as f64
                },
                hypotheses_median: median(&hypotheses),
                hypotheses_mean: if successes == 0 {
                    f64::NAN
                } else {
                    hypotheses.iter().sum::<f64>() / successes as f64
                },
            });
        }
    }
    Ok(rows)
}

/// Tab-separated table, one row per cell, floats in shortest round-trip
/// form so identical runs produce identical bytes.
pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let mut out = String::from(
        "strategy\tbudget\tinstances\tfailure_rate\tmnle_mean\thypotheses_median\thypotheses_mean\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\n",
            r.strategy,
            r.budget,
            r.instances,
            r.failure_rate,
            r.mnle_mean,
            r.hypotheses_median,
            r.hypotheses_mean
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::demo::demo_ensemble;

    fn small_cfg() -> AblationConfig {
        AblationConfig {
            budgets: vec![400],
            instances: 6,
            synth: SynthConfig {
                occlusion_rate: 0.2,
                clutter: 1,
                noise_sigma: 0.5,
                ..SynthConfig::default()
            },
            seed: 5,
            ..AblationConfig::default()
        }
    }

    #[test]
    fn tables_are_reproducible() {
        let e = demo_ensemble(1, 2).unwrap();
        let cfg = small_cfg();
        let a = run_ablation(&e, &cfg).unwrap();
        let b = run_ablation(&e, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ablation_tsv(&a), ablation_tsv(&b));
    }

    #[test]
    fn one_row_per_strategy_budget_pair() {
        let e = demo_ensemble(1, 1).unwrap();
        let cfg = AblationConfig {
            budgets: vec![100, 400],
            instances: 3,
            ..small_cfg()
        };
        let rows = run_ablation(&e, &cfg).unwrap();
        assert_eq!(rows.len(), 6);
        let tsv = ablation_tsv(&rows);
        assert_eq!(tsv.lines().count(), 7);
        assert!(tsv.starts_with("strategy\t"));
    }

    #[test]
    fn lightly_occluded_instances_mostly_succeed() {
        let e = demo_ensemble(1, 1).unwrap();
        let rows = run_ablation(&e, &small_cfg()).unwrap();
        for r in &rows {
            assert!(
                r.failure_rate < 0.5,
                "{} at budget {}: failure rate {}",
                r.strategy,
                r.budget,
                r.failure_rate
            );
            if r.failure_rate < 1.0 {
                assert!(r.mnle_mean.is_finite());
                assert!(r.hypotheses_median >= 1.0 || r.hypotheses_median == 0.0);
            }
        }
    }

    #[test]
    fn empty_sweeps_are_rejected() {
        let e = demo_ensemble(1, 1).unwrap();
        let bad = AblationConfig {
            strategies: vec![],
            ..small_cfg()
        };
        assert!(run_ablation(&e, &bad).is_err());
    }
}
