//! Central-difference verification of tape gradients (64-bit only).

use crate::error::{Error, Result};

use super::{Tape, Tensor, Var};

pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default)]
pub struct GradCheckReport {
    /// max over coordinates of |analytic − numeric| / max(1, |numeric|).
    pub max_rel_error: f64,
    pub worst_index: usize,
    /// Coordinates compared.
    pub coordinates: usize,
    /// Coordinates left out because every probe step fell on a different branch of a
    /// ReLU, clamp or max-pool than `x` itself.
    pub skipped: usize,
}

/// Each retry divides the step by this factor when `x ± h` crosses a kink.
pub const STEP_SHRINK: f64 = 10.0;
/// Retries after the first step before a coordinate is skipped.
pub const STEP_RETRIES: usize = 6;

/// Fourth-order central difference of `eval(offset) = (value, branch signature)`
/// around 0, `(−f(2h) + 8f(h) − 8f(−h) + f(−2h)) / 12h`, at the first step in
/// `h, h/10, ...` whose probes all stay on `branch`. `None` means every step
/// crossed a kink.
pub fn central_difference<E>(mut eval: E, branch: Option<u64>, h: f64) -> Result<Option<f64>>
where
    E: FnMut(f64) -> Result<(f64, Option<u64>)>,
{
    let mut step = h;
    'steps: for _ in 0..=STEP_RETRIES {
        let mut f = [0.0; 4];
        for (slot, k) in f.iter_mut().zip([2.0, 1.0, -1.0, -2.0]) {
            let (v, sig) = eval(k * step)?;
            if sig != branch {
                step /= STEP_SHRINK;
                continue 'steps;
            }
            *slot = v;
        }
        return Ok(Some((-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * step)));
    }
    Ok(None)
}

impl GradCheckReport {
    /// Folds one comparison into the report.
    pub fn record(&mut self, index: usize, analytic: f64, numeric: f64) -> Result<()> {
        let err = (analytic - numeric).abs() / numeric.abs().max(1.0);
        if !err.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient at coordinate {}", index)));
        }
        if err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst_index = index;
        }
        self.coordinates += 1;
        Ok(())
    }
}

/// Compares the tape gradient of the scalar `f(x)` against central differences with step `h`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let eval = |point: Tensor<f64>| -> Result<(f64, Option<u64>)> {
        let mut tape = Tape::new();
        tape.track_branches();
        let v = tape.constant(point);
        let root = f(&mut tape, v)?;
        Ok((tape.value(root).item()?, tape.branch_signature()))
    };

    let mut tape = Tape::new();
    tape.track_branches();
    let xv = tape.leaf(x.clone(), true);
    let root = f(&mut tape, xv)?;
    if tape.value(root).len() != 1 {
        return Err(Error::contract("grad_check function must return a scalar"));
    }
    let branch = tape.branch_signature();
    tape.backward(root)?;
    let analytic = tape
        .grad(xv)
        .map(|g| g.data().to_vec())
        .unwrap_or_else(|| vec![0.0; x.len()]);

    let mut report = GradCheckReport::default();
    for i in 0..x.len() {
        let numeric = central_difference(|off| {
            let mut p = x.clone();
            p.data_mut()[i] += off;
            eval(p)
        }, branch, h)?;
        match numeric {
            Some(n) => report.record(i, analytic[i], n)?,
            None => report.skipped += 1,
        }
    }
    Ok(report)
}
