use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Max deviation between analytic and central-difference gradients, scaled
/// by the larger of the two gradients' infinity norms.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
        / scale
}

/// Checks every input's gradient against central finite differences.
/// Returns one relative error per input.
pub fn grad_check<F>(inputs: &[Tensor], h: f64, build: F) -> Vec<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |values: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        tape.value(loss).data()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let mut errors = Vec::new();
    for (idx, var) in vars.iter().enumerate() {
        let analytic = tape.grad(*var).unwrap().to_vec();
        let mut numeric = vec![0.0; analytic.len()];
        let mut values = inputs.to_vec();
        for j in 0..analytic.len() {
            let orig = values[idx].data()[j];
            values[idx].data_mut()[j] = orig + h;
            let up = eval(&values);
            values[idx].data_mut()[j] = orig - h;
            let down = eval(&values);
            values[idx].data_mut()[j] = orig;
            numeric[j] = (up - down) / (2.0 * h);
        }
        errors.push(relative_error(&analytic, &numeric));
    }
    errors
}
