//! Station embeddings: recent values, location and calendar.

use rand_chacha::ChaCha8Rng;

use super::layers::Mlp;
use super::{ModelConfig, Result};
use crate::autodiff::{BoundParams, ParamStore, Tensor};
use crate::dataset::WindowBatch;
use crate::time::TimeMarker;
use crate::NUM_VARIABLES;

/// Longitude mapped into [-180, 180).
pub fn normalize_longitude(lon: f64) -> f64 {
    (lon + 180.0).rem_euclid(360.0) - 180.0
}

fn fourier(u: f64, bands: usize, out: &mut Vec<f64>) {
    for j in 0..bands {
        let f = (1u64 << j) as f64 * u;
        out.push(f.sin());
        out.push(f.cos());
    }
}

/// Fourier features of a station location, `4 · bands` values.
pub fn geo_features(lon_deg: f64, lat_deg: f64, bands: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * bands);
    fourier(normalize_longitude(lon_deg).to_radians(), bands, &mut out);
    fourier(lat_deg.to_radians(), bands, &mut out);
    out
}

/// Fourier features of the window-averaged calendar phases, `8 · bands` values.
pub fn time_features(markers: &[TimeMarker], bands: usize) -> Vec<f64> {
    let mut mean = [0.0; 4];
    for m in markers {
        for (acc, p) in mean.iter_mut().zip(m.phases()) {
            *acc += p;
        }
    }
    let n = markers.len().max(1) as f64;
    let mut out = Vec::with_capacity(8 * bands);
    for acc in mean {
        fourier(acc / n, bands, &mut out);
    }
    out
}

#[derive(Clone, Debug)]
pub(crate) struct Embedding {
    var: Mlp,
    geo: Mlp,
    time: Mlp,
    geo_bands: usize,
    time_bands: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, c: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Embedding> {
        let d = c.embed_dim;
        Ok(Embedding {
            var: Mlp::new(store, "emb_var", [c.lookback * NUM_VARIABLES, d, d], rng)?,
            geo: Mlp::new(store, "emb_geo", [4 * c.geo_bands, d, d], rng)?,
            time: Mlp::new(store, "emb_time", [8 * c.time_bands, d, d], rng)?,
            geo_bands: c.geo_bands,
            time_bands: c.time_bands,
        })
    }

    /// `(B, N, D)` embedding of the last `history` lookback hours. Earlier
    /// hours enter `Emb_var` as zeros; calendar phases are averaged over the
    /// kept hours only. Missing inputs are read as the standardized mean, 0.
    pub fn forward(&self, p: &BoundParams, batch: &WindowBatch, history: usize) -> Result<Tensor> {
        let (b, n, t_len) = (batch.batch, batch.stations, batch.lookback);
        let skip = t_len - history;
        let row = t_len * NUM_VARIABLES;
        let mut values = Vec::with_capacity(b * n * row);
        for chunk in batch.inputs.chunks(row) {
            values.extend(std::iter::repeat_n(0.0, skip * NUM_VARIABLES));
            values.extend(
                chunk[skip * NUM_VARIABLES..]
                    .iter()
                    .map(|&x| if x.is_finite() { x } else { 0.0 }),
            );
        }
        let e_var = self.var.forward(p, &Tensor::new(values, &[b, n, row])?)?;

        let geo: Vec<f64> = batch
            .geo
            .iter()
            .flat_map(|&(lon, lat)| geo_features(lon, lat, self.geo_bands))
            .collect();
        let e_geo = self.geo.forward(p, &Tensor::new(geo, &[n, 4 * self.geo_bands])?)?;

        let time: Vec<f64> = (0..b)
            .flat_map(|s| time_features(&batch.markers[s * t_len + skip..(s + 1) * t_len], self.time_bands))
            .collect();
        let e_time = self
            .time
            .forward(p, &Tensor::new(time, &[b, 1, 8 * self.time_bands])?)?;

        Ok(e_var.add(&e_geo)?.add(&e_time)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longitude_wraps() {
        assert_eq!(normalize_longitude(360.0), 0.0);
        assert_eq!(normalize_longitude(180.0), -180.0);
        assert_eq!(normalize_longitude(-190.0), 170.0);
        assert_eq!(geo_features(0.0, 45.0, 8), geo_features(360.0, 45.0, 8));
    }

    #[test]
    fn fourier_layout() {
        let f = geo_features(90.0, 0.0, 2);
        let u = std::f64::consts::FRAC_PI_2;
        let expected = [u.sin(), u.cos(), (2.0 * u).sin(), (2.0 * u).cos(), 0.0, 1.0, 0.0, 1.0];
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
