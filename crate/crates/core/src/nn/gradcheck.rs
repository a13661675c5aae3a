//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{MgaError, Result};
use crate::nn::ParameterStore;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Coordinates sampled across all parameters that received a gradient.
    pub samples: usize,
    pub step: f64,
    /// Denominator floor in the relative error, so coordinates whose true
    /// gradient is ~0 are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            samples: 100,
            step: 1e-5,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: Vec<CoordinateCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&CoordinateCheck> {
        self.checked
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic gradients against `(f(w+h) - f(w-h)) / 2h` on sampled
/// coordinates.
///
/// `eval` must compute the scalar loss from the current store and accumulate
/// its analytic gradients into the store. It is called once for the analytic
/// pass, once more to confirm determinism, then twice per sampled coordinate.
pub fn finite_difference_check<R, F>(
    store: &mut ParameterStore,
    mut eval: F,
    options: GradCheckOptions,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    R: Rng,
    F: FnMut(&mut ParameterStore) -> Result<f64>,
{
    store.zero_grads();
    let base = eval(store)?;
    let grads = store.take_grads();
    let again = eval(store)?;
    store.zero_grads();
    if base.to_bits() != again.to_bits() {
        return Err(MgaError::Precondition(format!(
            "loss is not deterministic ({base} vs {again}); fix batch statistics or disable stochastic layers"
        )));
    }

    let coords: Vec<(&String, usize)> = grads
        .iter()
        .flat_map(|(name, g)| (0..g.len()).map(move |i| (name, i)))
        .collect();
    if coords.is_empty() {
        return Err(MgaError::Precondition("no parameter received a gradient".into()));
    }
    let picked: Vec<usize> = if coords.len() <= options.samples {
        (0..coords.len()).collect()
    } else {
        let mut v = sample(rng, coords.len(), options.samples).into_vec();
        v.sort_unstable();
        v
    };

    let h = options.step;
    let mut checked = Vec::with_capacity(picked.len());
    for ci in picked {
        let (name, index) = coords[ci];
        let original = store.get(name)?.data()[index];
        store.get_mut(name)?.data_mut()[index] = original + h;
        let plus = eval(store)?;
        store.get_mut(name)?.data_mut()[index] = original - h;
        let minus = eval(store)?;
        store.get_mut(name)?.data_mut()[index] = original;
        store.zero_grads();

        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grads[name].data()[index];
        checked.push(CoordinateCheck {
            name: name.clone(),
            index,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric, options.floor),
        });
    }
    let max_rel_error = checked.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Dense;
    use crate::nn::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_setup(rng: &mut ChaCha8Rng) -> (Dense, ParameterStore, Tensor) {
        let dense = Dense::new("lin", 4, 3);
        let mut store = ParameterStore::new();
        dense.init(&mut store, rng);
        let x = Tensor::new(&[5, 4], (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        (dense, store, x)
    }

    // loss = sum(y * c) for a fixed coefficient per output, so it is linear.
    fn linear_loss(dense: &Dense, store: &mut ParameterStore, x: &Tensor, grad_scale: f64) -> Result<f64> {
        let (y, cache) = dense.forward(store, x)?;
        let coef: Vec<f64> = (0..y.len()).map(|i| 0.1 * (i as f64) - 0.7).collect();
        let loss = y.data().iter().zip(&coef).map(|(a, b)| a * b).sum();
        let g = Tensor::new(y.shape(), coef.iter().map(|c| c * grad_scale).collect())?;
        dense.backward(store, &cache, &g, false)?;
        Ok(loss)
    }

    #[test]
    fn linear_layer_error_is_tiny() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (dense, mut store, x) = linear_setup(&mut rng);
        let report = finite_difference_check(
            &mut store,
            |s| linear_loss(&dense, s, &x, 1.0),
            // A linear loss has no truncation error, so a unit step isolates rounding.
            GradCheckOptions {
                step: 1.0,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.checked.len(), 15);
        assert!(report.max_rel_error < 1e-12, "{}", report.max_rel_error);
    }

    #[test]
    fn doubled_gradient_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (dense, mut store, x) = linear_setup(&mut rng);
        let report = finite_difference_check(
            &mut store,
            |s| linear_loss(&dense, s, &x, 2.0),
            GradCheckOptions::default(),
            &mut rng,
        )
        .unwrap();
        assert!(report.max_rel_error > 1e-2);
    }

    #[test]
    fn nondeterministic_loss_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (dense, mut store, x) = linear_setup(&mut rng);
        let mut calls = 0.0;
        let err = finite_difference_check(
            &mut store,
            |s| {
                calls += 1.0;
                Ok(linear_loss(&dense, s, &x, 1.0)? + calls)
            },
            GradCheckOptions::default(),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, MgaError::Precondition(_)));
    }
}
