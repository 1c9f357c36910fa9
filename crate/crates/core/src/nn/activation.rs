use crate::api::{Backend, Evaluator};
use crate::error::{HeError, Result};
use crate::linalg::PackedCipher;

/// `Z ⊙ Z + Z`, the quadratic ReLU surrogate. Depth 1.
pub fn poly_relu<B: Backend>(ev: &Evaluator<B>, z: &PackedCipher<B>) -> Result<PackedCipher<B>> {
    let sq = ev.mul(&z.payload, &z.payload)?;
    Ok(z.with_payload(ev.add(&sq, &z.payload)?))
}

/// `1 + 2 ⊙ δA` with plaintext constants. Depth 1.
pub fn poly_relu_prime<B: Backend>(ev: &Evaluator<B>, da: &PackedCipher<B>) -> Result<PackedCipher<B>> {
    let twice = ev.mul_scalar(&da.payload, 2.0)?;
    Ok(da.with_payload(ev.add_scalar(&twice, 1.0)?))
}

/// `Ŷ − Y`, the gradient of the RSS loss. Depth 0.
pub fn loss_gradient<B: Backend>(
    ev: &Evaluator<B>,
    y_hat: &PackedCipher<B>,
    y: &PackedCipher<B>,
) -> Result<PackedCipher<B>> {
    if y_hat.format != y.format || y_hat.shape != y.shape || y_hat.dims != y.dims {
        return Err(HeError::Format(format!(
            "prediction {:?}/{:?} vs label {:?}/{:?}",
            y_hat.format, y_hat.dims, y.format, y.dims
        )));
    }
    Ok(y_hat.with_payload(ev.sub(&y_hat.payload, &y.payload)?))
}

/// Slot-wise squared residuals, a plaintext diagnostic.
pub fn rss(y_hat: &[f64], y: &[f64]) -> Vec<f64> {
    y_hat.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).collect()
}
