use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use uavxai_nn::{Adam, AdamConfig, Parametrized, Tensor};

use super::model::sigmoid;
use super::{Dataset, Detector, DetectorConfig, DetectorKind};
use crate::seed::SeedTree;
use crate::{Error, Exec, Result};

/// Consecutive non-finite batches tolerated before training aborts.
const MAX_BAD_BATCHES: usize = 3;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified 70/15/15 split: each label is shuffled and cut separately.
pub fn split_indices<R: Rng>(labels: &[u8], rng: &mut R) -> Split {
    let mut out = Split::default();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        let n = idx.len();
        let n_train = (n as f64 * 0.7).round() as usize;
        let n_val = (n as f64 * 0.15).round() as usize;
        out.train.extend_from_slice(&idx[..n_train]);
        out.val.extend_from_slice(&idx[n_train..(n_train + n_val).min(n)]);
        out.test.extend_from_slice(&idx[(n_train + n_val).min(n)..]);
    }
    out.train.shuffle(rng);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainCurves {
    pub kind: DetectorKind,
    pub epochs: Vec<EpochStat>,
    /// Epoch whose weights were kept (best validation accuracy).
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub scale: f32,
    pub split: Split,
}

/// One over the RMS of the training payloads, so dense inputs start near
/// unit scale. Image payloads already live in [0, 1] and are left alone.
fn payload_scale(data: &Dataset, idx: &[usize]) -> f32 {
    if data.kind == DetectorKind::Cnn {
        return 1.0;
    }
    let (mut sum, mut n) = (0.0f64, 0usize);
    for &i in idx {
        for &v in data.payload(i) {
            sum += (v as f64) * (v as f64);
            n += 1;
        }
    }
    let rms = (sum / n.max(1) as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        (1.0 / rms) as f32
    } else {
        1.0
    }
}

pub(super) fn accuracy(det: &Detector, data: &Dataset, idx: &[usize], exec: Exec) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let hits = exec.map(idx, |&i| -> Result<bool> { Ok((det.score(data.payload(i))? > 0.5) == (data.labels[i] == 1)) });
    let mut n = 0;
    for h in hits {
        n += h? as usize;
    }
    Ok(n as f64 / idx.len() as f64)
}

fn sample_grads(det: &Detector, data: &Dataset, i: usize, k: f32) -> Result<(f64, Vec<Tensor<f32>>)> {
    let tape = det.forward(data.payload(i))?;
    let z = tape.output().data()[0];
    let y = data.labels[i] as f32;
    let p = sigmoid(z);
    // BCE on the logit, in its overflow-safe form
    let loss = (z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()) as f64;
    let mut grads = det.net().zero_grads();
    det.net().backward(&tape, &Tensor::vector(vec![(p - y) / k]), &mut grads)?;
    Ok((loss, grads))
}

/// Minibatch BCE training with Adam; the weights with the best validation
/// accuracy are returned along with the per-epoch curves.
pub fn train_detector(data: &Dataset, cfg: &DetectorConfig, seeds: &SeedTree, exec: Exec) -> Result<(Detector, TrainCurves)> {
    if data.attacked() == 0 || data.attacked() == data.len() {
        return Err(Error::EmptyDataset(format!("{} set needs both labels", data.kind)));
    }
    let fit = cfg.fit(data.kind);
    let mut rng = seeds.rng("split", 0);
    let split = split_indices(&data.labels, &mut rng);
    let mut det = Detector::new(data.kind, &data.dims, cfg, &mut seeds.rng("init", 0))?;
    det.set_scale(payload_scale(data, &split.train));
    let mut opt = Adam::new(AdamConfig::with_lr(fit.lr), &det.net().params());
    let mut order = split.train.clone();
    let mut shuffle = seeds.rng("shuffle", 0);
    let mut best = (det.clone(), 0usize, f64::NEG_INFINITY);
    let mut epochs = Vec::with_capacity(fit.epochs);
    let mut bad = 0;
    for epoch in 1..=fit.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for batch in order.chunks(fit.batch) {
            let k = batch.len() as f32;
            let per = exec.map(batch, |&i| sample_grads(&det, data, i, k));
            let mut grads = det.net().zero_grads();
            let mut loss = 0.0;
            for r in per {
                let (l, g) = r?;
                loss += l;
                for (a, b) in grads.iter_mut().zip(&g) {
                    a.add_assign(b);
                }
            }
            let ok = opt.step(&mut det.net_mut().params_mut(), &grads) && loss.is_finite();
            if ok {
                bad = 0;
                loss_sum += loss;
            } else {
                bad += 1;
                log::warn!("{} detector: non-finite batch in epoch {epoch}", data.kind);
                if bad >= MAX_BAD_BATCHES {
                    return Err(Error::NonFinite(format!("{} detector training diverged in epoch {epoch}", data.kind)));
                }
            }
        }
        let train_accuracy = accuracy(&det, data, &split.train, exec)?;
        let val_accuracy = accuracy(&det, data, &split.val, exec)?;
        log::info!(
            "{} epoch {epoch}: loss {:.4} train {:.3} val {:.3}",
            data.kind,
            loss_sum / order.len() as f64,
            train_accuracy,
            val_accuracy
        );
        if val_accuracy > best.2 {
            best = (det.clone(), epoch, val_accuracy);
        }
        epochs.push(EpochStat {
            epoch,
            loss: loss_sum / order.len() as f64,
            train_accuracy,
            val_accuracy,
        });
    }
    let (det, best_epoch, val_accuracy) = best;
    let test_accuracy = accuracy(&det, data, &split.test, exec)?;
    Ok((
        det.clone(),
        TrainCurves {
            kind: data.kind,
            epochs,
            best_epoch,
            val_accuracy,
            test_accuracy,
            scale: det.scale(),
            split,
        },
    ))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<u8> = (0..200).map(|i| (i % 4 == 0) as u8).collect();
        let s = split_indices(&labels, &mut ChaCha8Rng::seed_from_u64(3));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        let ones = |v: &[usize]| v.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(ones(&s.train), 35);
        assert_eq!(ones(&s.val), 8);
        assert_eq!(s.train.len(), 140);
    }
}
