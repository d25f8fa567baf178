//! Log-domain helpers. Beliefs decay exponentially, so everything downstream
//! of the update rules stores natural-log probabilities.

/// `ln(sum(exp(x)))`, stable for large magnitudes.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Shift a log vector so that it sums to one in probability space.
pub fn normalize_in_place(xs: &mut [f64]) {
    let z = log_sum_exp(xs);
    for x in xs.iter_mut() {
        *x -= z;
    }
}

pub fn normalized(mut xs: Vec<f64>) -> Vec<f64> {
    normalize_in_place(&mut xs);
    xs
}

/// Log of a probability vector. Zero entries map to `-inf`.
pub fn to_log(ps: &[f64]) -> Vec<f64> {
    ps.iter().map(|p| p.ln()).collect()
}

pub fn to_prob(ls: &[f64]) -> Vec<f64> {
    ls.iter().map(|l| l.exp()).collect()
}

/// True when `ls` is a normalized log-probability vector with finite entries.
pub fn is_normalized(ls: &[f64], tol: f64) -> bool {
    ls.iter().all(|l| l.is_finite()) && log_sum_exp(ls).abs() <= tol
}
