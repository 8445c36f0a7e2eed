use rand::Rng;

use super::Module;
use crate::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub probes: usize,
    /// Flat index of the worst coordinate.
    pub worst: usize,
}

/// Compares analytic gradients against central differences on `probes`
/// random coordinates. `loss` must return the loss and accumulate the
/// gradients of that same loss into the module.
pub fn grad_check<M: Module>(
    module: &mut M,
    mut loss: impl FnMut(&mut M) -> f64,
    epsilon: f64,
    probes: usize,
    rng: &mut SimRng,
) -> GradCheck {
    module.zero_grad();
    loss(module);
    let analytic = module.flat_grads();
    module.zero_grad();
    let total = analytic.len();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        probes,
        worst: 0,
    };
    for _ in 0..probes {
        let idx = rng.gen_range(0..total);
        let original = nudge(module, idx, None);
        nudge(module, idx, Some(original + epsilon));
        let up = loss(module);
        nudge(module, idx, Some(original - epsilon));
        let down = loss(module);
        nudge(module, idx, Some(original));
        module.zero_grad();
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = idx;
        }
    }
    report
}

/// Reads flat coordinate `idx`, optionally overwriting it.
fn nudge<M: Module>(module: &mut M, idx: usize, set: Option<f64>) -> f64 {
    let mut offset = 0;
    let mut old = f64::NAN;
    module.visit_mut("", &mut |_, p| {
        let len = p.value.data.len();
        if idx >= offset && idx < offset + len {
            old = p.value.data[idx - offset];
            if let Some(v) = set {
                p.value.data[idx - offset] = v;
            }
        }
        offset += len;
    });
    old
}
