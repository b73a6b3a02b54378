//! Small numeric helpers shared by the analysis and reconstruction code.

/// Pearson correlation; `None` when either input has zero variance or the
/// lengths differ.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Centered moving average; near the edges the window shrinks to the
/// samples that exist. A window of 0 or 1 returns the input unchanged.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 || x.is_empty() {
        return x.to_vec();
    }
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    let before = (window - 1) / 2;
    let after = window / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Amplitude envelope: moving RMS over `window` samples.
pub fn envelope(x: &[f64], window: usize) -> Vec<f64> {
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    moving_average(&sq, window)
        .into_iter()
        .map(|v| v.max(0.0).sqrt())
        .collect()
}

pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scales `x` so that its maximum is 1; all-zero input stays zero.
pub fn normalize_peak(x: &[f64]) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        x.to_vec()
    } else {
        x.iter().map(|v| v / peak).collect()
    }
}
