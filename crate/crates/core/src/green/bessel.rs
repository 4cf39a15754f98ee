//! Exponentially scaled modified Bessel functions `e^{-s} I_k(s)` of integer
//! order, all orders at once by Miller's backward recurrence.

/// Fills `out[k] = e^{-s} I_k(s)` for `k = 0..out.len()`.
///
/// The recurrence `I_{k-1} = (2k/s) I_k + I_{k+1}` is run downward from an
/// order well past both `out.len()` and `sqrt(s)`, then normalized with
/// `I_0 + 2 sum_{k>=1} I_k = e^s`.
pub fn scaled_bessel_i(s: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    if s == 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    let top = out.len() + 24 + (14.0 * s.sqrt()) as usize + (s.min(40.0)) as usize;
    let mut next = 0.0f64;
    let mut cur = 1e-280f64;
    let mut sum = 0.0f64;
    for k in (1..=top).rev() {
        // cur = I_k, next = I_{k+1}
        let prev = (2.0 * k as f64 / s) * cur + next;
        sum += 2.0 * cur;
        if k < out.len() {
            out[k] = cur;
        }
        next = cur;
        cur = prev;
        if cur > 1e250 {
            let f = 1e-250;
            cur *= f;
            next *= f;
            sum *= f;
            for v in out.iter_mut().skip(k) {
                *v *= f;
            }
        }
    }
    out[0] = cur;
    sum += cur;
    for v in out.iter_mut() {
        *v /= sum;
    }
}
