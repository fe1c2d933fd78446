use crate::decomp::BatchActivations;

use super::{min_count, OutlierError, ThresholdEntry, ThresholdTable};

/// Calibration activations recorded at one layer.
#[derive(Clone, Debug)]
pub struct LayerSamples {
    pub layer: usize,
    pub batches: Vec<BatchActivations>,
}

/// Per-channel score: the magnitude that the `⌈c·S⌉`-th largest token
/// reaches. A channel is flagged under threshold `T` exactly when its score
/// exceeds `T`.
fn channel_scores(x: &crate::DenseMatrix, c: f64, out: &mut Vec<f64>) {
    let need = min_count(c, x.rows());
    let mut col = Vec::with_capacity(x.rows());
    for j in 0..x.cols() {
        col.clear();
        col.extend((0..x.rows()).map(|i| f64::from(x.get(i, j).abs())));
        if need > col.len() {
            out.push(0.0);
            continue;
        }
        let (_, nth, _) = col.select_nth_unstable_by(need - 1, |a, b| b.total_cmp(a));
        out.push(*nth);
    }
}

/// Chooses one threshold per layer so that, averaged over every calibration
/// prompt, a `target_fraction` share of channels is flagged at count fraction
/// `c`.
///
/// The flagged share is a step function of `T` that only changes at channel
/// scores, so the threshold is placed midway between the `n`-th and
/// `(n+1)`-th largest pooled score, `n = round(target · channels)`. This is
/// the point any bisection on `T` converges to, found without iterating.
pub fn calibrate_thresholds(
    samples: &[LayerSamples],
    target_fraction: f64,
    c: f64,
) -> Result<ThresholdTable, OutlierError> {
    if !(target_fraction > 0.0 && target_fraction <= 0.1) {
        return Err(OutlierError::BadTargetFraction(target_fraction));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(OutlierError::BadCountFraction(c));
    }
    if samples.is_empty() {
        return Err(OutlierError::NoLayers);
    }
    let mut entries = Vec::with_capacity(samples.len());
    for layer in samples {
        let prompts: Vec<_> = layer.batches.iter().flat_map(|b| b.prompts()).collect();
        let Some(first) = prompts.first() else {
            return Err(OutlierError::EmptySamples(layer.layer));
        };
        let hidden = first.cols();
        let mut scores = Vec::with_capacity(prompts.len() * hidden);
        for p in &prompts {
            if p.cols() != hidden {
                return Err(OutlierError::HiddenMismatch {
                    layer: layer.layer,
                    found: p.cols(),
                    expected: hidden,
                });
            }
            channel_scores(p, c, &mut scores);
        }
        scores.sort_by(|a, b| b.total_cmp(a));
        let total = scores.len();
        let n = ((target_fraction * total as f64).round() as usize).clamp(1, total);
        let above = scores[n - 1];
        let below = scores.get(n).copied().unwrap_or(0.0);
        let threshold = 0.5 * (above + below);
        if !(threshold > 0.0) {
            return Err(OutlierError::Degenerate(layer.layer));
        }
        entries.push(ThresholdEntry {
            layer: layer.layer,
            threshold,
            count_fraction: c,
        });
    }
    ThresholdTable::new(entries)
}
