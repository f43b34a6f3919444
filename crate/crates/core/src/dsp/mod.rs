//! Streaming signal primitives.

mod envelope;
mod filter;
mod phase;

pub use envelope::{power_envelope, PowerEnvelope};
pub use filter::{design_bandpass, BandpassDesign, BandpassSpec, Biquad, StreamingFilter};
pub use phase::{instantaneous_phase, plv, Hilbert, PhaseWindow};

use crate::error::{Error, Result};
use crate::montage::Montage;

/// Centre value minus the mean of its Laplacian neighbours.
pub fn laplacian(values: &[f64], center: &str, montage: &Montage) -> Result<f64> {
    let (ci, neighbors) = laplacian_indices(center, montage)?;
    if values.len() != montage.len() {
        return Err(Error::Contract(format!(
            "expected {} channel values, got {}",
            montage.len(),
            values.len()
        )));
    }
    let mean = neighbors.iter().map(|&i| values[i]).sum::<f64>() / neighbors.len() as f64;
    Ok(values[ci] - mean)
}

/// Channel index of `center` and of its neighbours.
pub fn laplacian_indices(center: &str, montage: &Montage) -> Result<(usize, Vec<usize>)> {
    let neighbors = montage
        .laplacian_neighbors(center)
        .ok_or_else(|| Error::Contract(format!("no Laplacian neighbourhood for {center}")))?;
    let ci = montage
        .index_of(center)
        .ok_or_else(|| Error::Contract(format!("unknown electrode {center}")))?;
    let idx = neighbors
        .iter()
        .map(|n| montage.index_of(n).expect("validated neighbour"))
        .collect();
    Ok((ci, idx))
}
