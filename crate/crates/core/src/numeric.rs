//! Small shared numeric helpers.

/// Sum with a fixed pairwise reduction tree. The tree shape depends only on
/// the slice length, so results are independent of how the inputs were
/// produced (thread scheduling, chunking).
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Discrete L² norm of a spatial field with quadrature weight `dx`.
pub(crate) fn l2_norm(field: &[f64], dx: f64) -> f64 {
    let mut acc = 0.0;
    for &u in field {
        acc += u * u;
    }
    (acc * dx).sqrt()
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| a + h * i as f64).collect()
}

/// Stable float formatting for CSV output: plain decimal in a readable
/// range, scientific elsewhere, shortest round-trip digits either way.
pub(crate) fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let a = x.abs();
    if (1e-4..1e7).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// SplitMix64 step, used to derive well-separated RNG seeds.
pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
