use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

use super::matrix::LinkMatrix;
use super::ChannelError;

/// Signal-to-noise scaling per transmit antenna under equal power split.
fn snr_per_stream(tx_power: f64, noise_power: f64, tx_antennas: usize) -> f64 {
    tx_power / (tx_antennas as f64 * noise_power)
}

/// MIMO capacity with equal power allocation:
/// `bandwidth * log2 det(I + P/(Nt * N0) * H H^*)`.
///
/// The determinant is taken over the smaller Gram matrix (Sylvester's
/// identity) through a Cholesky factorization.
pub fn ue_throughput(
    h: &LinkMatrix,
    tx_power: f64,
    noise_power: f64,
    bandwidth: f64,
) -> Result<f64, ChannelError> {
    for (name, value) in [
        ("tx_power", tx_power),
        ("noise_power", noise_power),
        ("bandwidth", bandwidth),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(ChannelError::InvalidParameter { name, value });
        }
    }
    let m = &h.matrix;
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(ChannelError::NonFinite);
    }
    let (rows, cols) = m.shape();
    let rho = snr_per_stream(tx_power, noise_power, cols);
    let gram = if rows <= cols {
        m * m.adjoint()
    } else {
        m.adjoint() * m
    };
    let n = gram.nrows();
    let system = DMatrix::<Complex64>::identity(n, n) + gram * Complex64::new(rho, 0.0);
    let chol = Cholesky::new(system).ok_or(ChannelError::NonFinite)?;
    let log_det: f64 = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| 2.0 * d.re.ln())
        .sum();
    Ok((bandwidth * log_det / std::f64::consts::LN_2).max(0.0))
}

/// Mean received SNR per receive antenna, in dB.
pub fn sinr_proxy_db(h: &LinkMatrix, tx_power: f64, noise_power: f64) -> f64 {
    let (rows, cols) = h.matrix.shape();
    let energy = h.matrix.norm_squared();
    let ratio = snr_per_stream(tx_power, noise_power, cols) * energy / rows as f64;
    10.0 * ratio.max(1e-30).log10()
}
