#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_masked(logits, &vec![true; logits.len()])
}

/// Softmax over the entries where `mask` is set; masked entries get 0.
pub fn softmax_masked(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Log-softmax over masked entries; masked entries get `-inf`.
pub fn log_softmax_masked(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + logits
            .iter()
            .zip(mask)
            .filter(|(_, m)| **m)
            .map(|(l, _)| (l - max).exp())
            .sum::<f64>()
            .ln();
    logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { l - lse } else { f64::NEG_INFINITY })
        .collect()
}

pub fn mse(predicted: f64, target: f64) -> f64 {
    (predicted - target) * (predicted - target)
}

/// Value and gradients of the supervised act loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SlLoss {
    pub loss: f64,
    pub cross_entropy: f64,
    /// Squared price error, when the target carried a price.
    pub price_error: Option<f64>,
    pub dlogits: Vec<f64>,
    /// Gradient on the pre-sigmoid price output.
    pub dprice: f64,
}

/// `CE(intent) + alpha * (sigmoid(price_raw) - target_price)^2`, the
/// squared term only when `target_price` is present. Cross-entropy runs over
/// the `mask`ed intents.
pub fn sl_loss(
    logits: &[f64],
    price_raw: f64,
    target_intent: usize,
    target_price: Option<f64>,
    mask: &[bool],
    alpha: f64,
) -> SlLoss {
    debug_assert!(mask[target_intent], "target intent must be unmasked");
    let probs = softmax_masked(logits, mask);
    let log_probs = log_softmax_masked(logits, mask);
    let cross_entropy = -log_probs[target_intent];
    let mut dlogits = probs;
    dlogits[target_intent] -= 1.0;
    let (price_error, dprice) = match target_price {
        Some(y) => {
            let p = sigmoid(price_raw);
            let e = mse(p, y);
            (Some(e), alpha * 2.0 * (p - y) * p * (1.0 - p))
        }
        None => (None, 0.0),
    };
    SlLoss {
        loss: cross_entropy + alpha * price_error.unwrap_or(0.0),
        cross_entropy,
        price_error,
        dlogits,
        dprice,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits_cross_entropy_is_ln_15() {
        let l = sl_loss(&[0.0; 15], 0.0, 4, None, &[true; 15], 1.0);
        assert!((l.cross_entropy - 15f64.ln()).abs() < 1e-12);
        assert!((l.cross_entropy - 2.70805020110221).abs() < 1e-12);
    }

    #[test]
    fn confident_exact_prediction_has_near_zero_loss() {
        let mut logits = [0.0; 15];
        logits[3] = 50.0;
        // sigmoid(0) = 0.5
        let l = sl_loss(&logits, 0.0, 3, Some(0.5), &[true; 15], 1.0);
        assert!(l.loss < 1e-12);
    }

    #[test]
    fn zero_alpha_ignores_price_error() {
        let a = sl_loss(&[0.1; 15], -3.0, 0, Some(0.9), &[true; 15], 0.0);
        let b = sl_loss(&[0.1; 15], 3.0, 0, Some(0.1), &[true; 15], 0.0);
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.dprice, 0.0);
    }

    #[test]
    fn masked_intents_get_no_mass() {
        let mut mask = [false; 15];
        mask[0] = true;
        mask[1] = true;
        let p = softmax_masked(&[1.0; 15], &mask);
        assert_eq!(p[0], 0.5);
        assert_eq!(p[2], 0.0);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(logits in proptest::collection::vec(-50.0f64..50.0, 15)) {
            let total: f64 = softmax(&logits).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
