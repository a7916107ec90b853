use crate::{Error, Result};

pub const MAX_EXACT_FEATURES: usize = 12;

/// Shapley values of `model` at `x` by full coalition enumeration. An absent
/// feature takes the background's value; coalition values are averaged over
/// the background set.
pub fn exact_shapley(model: &dyn Fn(&[f64]) -> f64, x: &[f64], background: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = x.len();
    if n > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            count: n,
            max: MAX_EXACT_FEATURES,
        });
    }
    if background.is_empty() {
        return Err(Error::EmptyDataset("background set".into()));
    }
    let mut value = vec![0.0; 1 << n];
    let mut z = vec![0.0; n];
    for (mask, v) in value.iter_mut().enumerate() {
        let mut sum = 0.0;
        for b in background {
            for i in 0..n {
                z[i] = if mask & (1 << i) != 0 { x[i] } else { b[i] };
            }
            sum += model(&z);
        }
        *v = sum / background.len() as f64;
    }
    // |S|!(n−|S|−1)!/n!
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let weight: Vec<f64> = (0..n).map(|s| fact(s) * fact(n - s - 1) / fact(n)).collect();
    Ok((0..n)
        .map(|i| {
            (0..1usize << n)
                .filter(|m| m & (1 << i) == 0)
                .map(|m| weight[m.count_ones() as usize] * (value[m | (1 << i)] - value[m]))
                .sum()
        })
        .collect())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt()
}
