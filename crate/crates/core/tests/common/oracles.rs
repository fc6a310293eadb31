//! Brute-force reference implementations used to cross-check the library.

/// TVD as the largest disagreement over all events `A ⊆ support`.
pub fn tvd_events(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len();
    assert!(n <= 16);
    let mut best: f64 = 0.0;
    for mask in 0u32..(1 << n) {
        let (mut pa, mut qa) = (0.0, 0.0);
        for i in 0..n {
            if mask & (1 << i) != 0 {
                pa += p[i];
                qa += q[i];
            }
        }
        best = best.max((pa - qa).abs());
    }
    best
}

fn entropy_nats(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// JSD in bits via `H(M) − (H(P) + H(Q)) / 2`.
pub fn jsd_entropy(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (entropy_nats(&m) - 0.5 * (entropy_nats(p) + entropy_nats(q))) / std::f64::consts::LN_2
}

/// Smoothed, normalized histogram by linear scan over half-open bins
/// (the last bin closed, out-of-range values clamped to the end bins).
pub fn histogram(values: &[f64], edges: &[f64], smoothing: f64) -> Vec<f64> {
    let bins = edges.len() - 1;
    let mut counts = vec![smoothing; bins];
    for &v in values {
        let b = (0..bins)
            .find(|&i| v < edges[i + 1])
            .unwrap_or(bins - 1);
        counts[b] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

/// `P(fav | unpriv) − P(fav | priv)` from filtered counts.
pub fn spd_counts(fav: &[bool], unpriv: &[bool]) -> Option<f64> {
    let rate = |side: bool| {
        let idx: Vec<usize> = (0..fav.len()).filter(|&i| unpriv[i] == side).collect();
        (!idx.is_empty()).then(|| idx.iter().filter(|&&i| fav[i]).count() as f64 / idx.len() as f64)
    };
    Some(rate(true)? - rate(false)?)
}

/// `(TPR_unpriv − TPR_priv, FPR_unpriv − FPR_priv)`.
pub fn rate_gaps(preds: &[bool], truth: &[bool], unpriv: &[bool]) -> Option<(f64, f64)> {
    let rate = |side: bool, t: bool| {
        let idx: Vec<usize> = (0..preds.len()).filter(|&i| unpriv[i] == side && truth[i] == t).collect();
        (!idx.is_empty()).then(|| idx.iter().filter(|&&i| preds[i]).count() as f64 / idx.len() as f64)
    };
    Some((rate(true, true)? - rate(false, true)?, rate(true, false)? - rate(false, false)?))
}

/// Macro F1 from a full confusion matrix via precision and recall; a class
/// with no predictions and no hits scores 0.
pub fn macro_f1_confusion(preds: &[u32], truth: &[u32]) -> f64 {
    let k = preds.iter().chain(truth).max().map_or(0, |m| *m as usize + 1);
    let mut cm = vec![vec![0usize; k]; k];
    for (&p, &t) in preds.iter().zip(truth) {
        cm[t as usize][p as usize] += 1;
    }
    let mut total = 0.0;
    let mut classes = 0;
    for c in 0..k {
        let actual: usize = cm[c].iter().sum();
        if actual == 0 {
            continue;
        }
        classes += 1;
        let predicted: usize = (0..k).map(|t| cm[t][c]).sum();
        let tp = cm[c][c] as f64;
        if tp == 0.0 {
            continue;
        }
        let precision = tp / predicted as f64;
        let recall = tp / actual as f64;
        total += 2.0 * precision * recall / (precision + recall);
    }
    total / classes as f64
}

/// Slope, intercept and R² from the raw-sum normal equations.
pub fn ols_normal(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy * sxx - sx * sxy) / det;
    let r = (n * sxy - sx * sy) / (det * (n * syy - sy * sy)).sqrt();
    (slope, intercept, r * r)
}

/// Smallest number of removals bringing `|SPD|` to at most `eps` without
/// emptying either group, by exhaustive search over removal counts per
/// (group, label) cell. `None` when no such subset exists.
pub fn min_removals_for_parity(counts: [[usize; 2]; 2], eps: f64) -> Option<usize> {
    // counts[group][fav]; group 0 unprivileged
    let mut best: Option<usize> = None;
    for r00 in 0..=counts[0][0] {
        for r01 in 0..=counts[0][1] {
            for r10 in 0..=counts[1][0] {
                for r11 in 0..=counts[1][1] {
                    let u0 = counts[0][0] - r00;
                    let u1 = counts[0][1] - r01;
                    let p0 = counts[1][0] - r10;
                    let p1 = counts[1][1] - r11;
                    if u0 + u1 == 0 || p0 + p1 == 0 {
                        continue;
                    }
                    let spd = u1 as f64 / (u0 + u1) as f64 - p1 as f64 / (p0 + p1) as f64;
                    if spd.abs() <= eps + 1e-12 {
                        let r = r00 + r01 + r10 + r11;
                        best = Some(best.map_or(r, |b: usize| b.min(r)));
                    }
                }
            }
        }
    }
    best
}

/// Central `level` acceptance region of Binomial(n, p) in counts, from the
/// exact pmf: the smallest `lo` and largest `hi` leaving at most
/// `(1 - level) / 2` mass in each tail.
pub fn binomial_interval(n: usize, p: f64, level: f64) -> (usize, usize) {
    let tail = (1.0 - level) / 2.0;
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_pmf = n as f64 * lq;
    let mut pmf = Vec::with_capacity(n + 1);
    for x in 0..=n {
        pmf.push(log_pmf.exp());
        if x < n {
            log_pmf += ((n - x) as f64 / (x + 1) as f64).ln() + lp - lq;
        }
    }
    let mut acc = 0.0;
    let mut lo = 0;
    while lo < n && acc + pmf[lo] <= tail {
        acc += pmf[lo];
        lo += 1;
    }
    let mut acc = 0.0;
    let mut hi = n;
    while hi > 0 && acc + pmf[hi] <= tail {
        acc += pmf[hi];
        hi -= 1;
    }
    (lo, hi)
}
