//! Random hyperparameter search with a chronological validation tail.

use rayon::prelude::*;

use super::{
    chronological_split, train, Dataset, HyperparamSpace, Hyperparams, MlpTrainingConfig, ModelKind, TrainedModel,
};
use crate::error::{Error, Result};
use crate::hrv::mape;
use crate::{derive_seed, seeded_rng};

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResult {
    pub index: usize,
    pub hyperparams: Hyperparams,
    /// `None` when the candidate failed to train or score.
    pub val_mape_pct: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Winner retrained on the whole training set.
    pub model: TrainedModel,
    pub best: CandidateResult,
    pub candidates: Vec<CandidateResult>,
}

/// Samples `budget` configurations, scores each by validation MAPE on the
/// last `val_fraction` of `train` and retrains the best on all of `train`.
///
/// Candidate `i` trains with seed `derive_seed(seed, i)`. Failing candidates
/// are logged and skipped; ties go to the lower index.
#[allow(clippy::too_many_arguments)]
pub fn random_search(
    train_set: &Dataset,
    val_fraction: f64,
    kind: ModelKind,
    space: &HyperparamSpace,
    budget: usize,
    seed: u64,
    mlp_cfg: &MlpTrainingConfig,
) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(Error::InvalidConfig("search budget must be at least 1".to_string()));
    }
    space.validate()?;
    let (fit, val) = chronological_split(train_set, 1.0 - val_fraction)?;
    let mut rng = seeded_rng(seed, 0);
    let configs: Vec<Hyperparams> = (0..budget).map(|_| space.sample(kind, fit.len(), &mut rng)).collect();

    let candidates: Vec<CandidateResult> = configs
        .into_par_iter()
        .enumerate()
        .map(|(index, hp)| {
            let scored = train(&fit, &hp, mlp_cfg, derive_seed(seed, index as u64))
                .and_then(|m| m.predict_many(val.samples()))
                .and_then(|pred| mape(&pred, &val.labels()));
            let val_mape_pct = match scored {
                Ok(v) if v.is_finite() => Some(v),
                Ok(v) => {
                    log::warn!("candidate {index} ({hp}) scored non-finite MAPE {v}");
                    None
                }
                Err(e) => {
                    log::warn!("candidate {index} ({hp}) skipped: {e}");
                    None
                }
            };
            CandidateResult {
                index,
                hyperparams: hp,
                val_mape_pct,
            }
        })
        .collect();

    let best = candidates
        .iter()
        .filter_map(|c| c.val_mape_pct.map(|v| (v, c)))
        .fold(None::<(f64, &CandidateResult)>, |acc, (v, c)| match acc {
            Some((bv, _)) if bv <= v => acc,
            _ => Some((v, c)),
        })
        .map(|(_, c)| c.clone())
        .ok_or(Error::SearchFailed)?;
    log::debug!(
        "best {kind} candidate {}: {} ({:?})",
        best.index,
        best.hyperparams,
        best.val_mape_pct
    );
    let model = train(
        train_set,
        &best.hyperparams,
        mlp_cfg,
        derive_seed(seed, best.index as u64),
    )?;
    Ok(SearchOutcome {
        model,
        best,
        candidates,
    })
}
