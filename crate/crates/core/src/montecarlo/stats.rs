//! Small sample statistics: means, batch-mean errors and Kolmogorov distances.

/// Sample mean and its standard error `s / sqrt(n)`.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimate and standard error from per-batch means with batch sizes `counts`.
///
/// The estimate is the pooled mean; the error treats batch means as iid
/// with variance inversely proportional to batch size.
pub fn batch_mean_stderr(means: &[f64], counts: &[usize]) -> (f64, f64) {
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let pooled = means.iter().zip(counts).map(|(m, &c)| m * c as f64).sum::<f64>() / total;
    let b = means.len() as f64;
    if b < 2.0 {
        return (pooled, f64::NAN);
    }
    // Var(batch mean) = sigma^2 / c, so c (m - pooled)^2 estimates sigma^2.
    let sigma2 = means
        .iter()
        .zip(counts)
        .map(|(m, &c)| c as f64 * (m - pooled).powi(2))
        .sum::<f64>()
        / (b - 1.0);
    (pooled, (sigma2 / total).sqrt())
}

/// `sup_x |F_n(x) - cdf(x)|` for sorted samples.
pub fn kolmogorov_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic for sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of a KS statistic `d` at effective size `ne`.
pub fn ks_p_value(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda < 1.0e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1.0e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// p-value of the two-sample KS test on sorted samples.
pub fn ks_two_sample_p(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    ks_p_value(ks_two_sample(a, b), na * nb / (na + nb))
}
