use super::matrix::Matrix;

/// Step used by [`grad_check`] for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Compares analytic gradients against central finite differences.
///
/// `loss` evaluates the scalar loss and its analytic gradient (one matrix per
/// parameter tensor) at the given parameters. Returns the maximum over all
/// coordinates of `|analytic - fd| / max(1e-8, |analytic| + |fd|)`.
pub fn grad_check<F>(params: &[Matrix], step: f64, mut loss: F) -> f64
where
    F: FnMut(&[Matrix]) -> (f64, Vec<Matrix>),
{
    let (_, analytic) = loss(params);
    assert_eq!(analytic.len(), params.len(), "one gradient per parameter tensor");
    let mut probe: Vec<Matrix> = params.to_vec();
    let mut worst: f64 = 0.0;
    for t in 0..params.len() {
        for i in 0..params[t].data().len() {
            let orig = params[t].data()[i];
            probe[t].data_mut()[i] = orig + step;
            let (plus, _) = loss(&probe);
            probe[t].data_mut()[i] = orig - step;
            let (minus, _) = loss(&probe);
            probe[t].data_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let a = analytic[t].data()[i];
            let err = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    worst
}
