//! Central finite-difference checks of [`Model::backward`].

use super::error::Result;
use super::model::Model;
use super::tensor::Tensor;

/// Denominator floor for the relative error, so that gradients that are
/// zero up to round-off do not produce spurious large ratios.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, RELATIVE_FLOOR)`.
    pub max_relative_error: f64,
    /// Tensor (or `"input"`) and flat index of the worst entry.
    pub worst: (String, usize),
    pub checked: usize,
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR)
}

impl GradCheckReport {
    fn new() -> Self {
        Self {
            max_relative_error: 0.0,
            worst: (String::new(), 0),
            checked: 0,
        }
    }

    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.checked += 1;
        if self.checked == 1 || e > self.max_relative_error {
            self.max_relative_error = e;
            self.worst = (name.to_string(), index);
        }
    }
}

/// Compares analytic parameter and input gradients against
/// `(L(θ+h) − L(θ−h)) / 2h` for every scalar.
pub fn check_gradients(model: &Model, batch: &Tensor, labels: &[usize], h: f64) -> Result<GradCheckReport> {
    let analytic = model.backward(batch, labels)?;
    let mut report = GradCheckReport::new();
    let mut probe = model.clone();
    let names: Vec<String> = model.params.iter().map(|(n, _)| n.to_string()).collect();
    for name in &names {
        let len = model.params.get(name).map(Tensor::len).unwrap_or(0);
        let grad = analytic.params.get(name).expect("gradient per parameter");
        for i in 0..len {
            let original = probe.params.get(name).unwrap().data()[i];
            probe.params.get_mut(name).unwrap().data_mut()[i] = original + h;
            let plus = probe.loss(batch, labels)?;
            probe.params.get_mut(name).unwrap().data_mut()[i] = original - h;
            let minus = probe.loss(batch, labels)?;
            probe.params.get_mut(name).unwrap().data_mut()[i] = original;
            report.record(name, i, grad.data()[i], (plus - minus) / (2.0 * h));
        }
    }
    let mut x = batch.clone();
    for i in 0..x.len() {
        let original = x.data()[i];
        x.data_mut()[i] = original + h;
        let plus = model.loss(&x, labels)?;
        x.data_mut()[i] = original - h;
        let minus = model.loss(&x, labels)?;
        x.data_mut()[i] = original;
        report.record("input", i, analytic.input.data()[i], (plus - minus) / (2.0 * h));
    }
    Ok(report)
}
