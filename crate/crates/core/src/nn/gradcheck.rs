//! Central finite-difference check of the analytic gradients.

use super::layers::Tensor;
use super::model::DenoiserModel;

/// Worst agreement found in one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
}

fn l1(y: &Tensor<f64>, target: &[f64]) -> f64 {
    y.data
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / target.len() as f64
}

/// Compare `∂L/∂θ` for the mean-L1 loss against central differences with
/// step `h`, on at most `per_tensor` evenly spaced entries of every tensor.
/// Entries whose gradients are both below `floor` in magnitude are skipped.
pub fn check_gradients(
    model: &DenoiserModel<f64>,
    input: &Tensor<f64>,
    t: f64,
    target: &[f64],
    h: f64,
    per_tensor: usize,
    floor: f64,
) -> Vec<GradCheck> {
    let (y, cache) = model.forward_train(input, t).expect("valid input");
    let n = target.len() as f64;
    let dy = Tensor::from_data(
        1,
        y.dims,
        y.data
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).signum() / n)
            .collect(),
    );
    let mut grads = model.zero_grads();
    model.backward(&cache, &dy, &mut grads);
    let mut probe = model.clone();
    let mut out = Vec::new();
    for (k, spec) in model.specs().iter().enumerate() {
        let len = spec.len();
        let stride = len.div_ceil(per_tensor).max(1);
        let mut report = GradCheck {
            name: spec.name.clone(),
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
        };
        for i in (0..len).step_by(stride) {
            let orig = probe.params[k][i];
            probe.params[k][i] = orig + h;
            let lp = l1(&probe.forward(input, t).unwrap(), target);
            probe.params[k][i] = orig - h;
            let lm = l1(&probe.forward(input, t).unwrap(), target);
            probe.params[k][i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads[k][i];
            let scale = numeric.abs().max(analytic.abs());
            if scale <= floor {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max((numeric - analytic).abs() / scale);
        }
        out.push(report);
    }
    out
}
