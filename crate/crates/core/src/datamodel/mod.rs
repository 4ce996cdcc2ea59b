//! Measurement directions, the CIPIC grid, subjects and datasets.
//!
//! Directions use interaural-polar coordinates: azimuth is the lateral angle
//! measured from the median plane (negative = left), elevation rotates from
//! below-front through overhead to behind. Only the left ear is modelled, so
//! azimuth ≤ 0° is the ipsilateral side.

mod dataset;
pub mod synth;

pub use dataset::{
    hrir_file_name, load_dataset, load_dataset_report, write_dataset, Dataset, LoadOptions,
    SkippedSubject, Subject, ANTHRO_FILE, MANIFEST_FILE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of anthropometric parameters kept per subject (17 torso/head + 10 left pinna).
pub const N_ANTHRO: usize = 27;
/// Samples per head-related impulse response.
pub const HRIR_LEN: usize = 200;
/// CIPIC sample rate.
pub const SAMPLE_RATE_HZ: u32 = 44_100;
/// Radius used for every grid direction.
pub const GRID_RADIUS: f64 = 1.0;

/// Azimuths of the CIPIC grid in degrees.
pub const CIPIC_AZIMUTHS: [f64; 25] = [
    -80.0, -65.0, -55.0, -45.0, -40.0, -35.0, -30.0, -25.0, -20.0, -15.0, -10.0, -5.0, 0.0, 5.0,
    10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 55.0, 65.0, 80.0,
];
pub const N_ELEVATIONS: usize = 50;
pub const ELEVATION_START_DEG: f64 = -45.0;
/// 360° / 64.
pub const ELEVATION_STEP_DEG: f64 = 5.625;

/// Which side of the head a direction lies on, relative to the left ear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Ipsilateral,
    Contralateral,
}

impl Side {
    pub fn of_azimuth(azimuth_deg: f64) -> Side {
        if azimuth_deg <= 0.0 {
            Side::Ipsilateral
        } else {
            Side::Contralateral
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Ipsilateral => "ipsilateral",
            Side::Contralateral => "contralateral",
        }
    }
}

/// Interaural-polar → Cartesian: `(R cosθ cosφ, R sinθ, R cosθ sinφ)`.
pub fn interaural_polar_to_cartesian(
    azimuth_deg: f64,
    elevation_deg: f64,
    radius: f64,
) -> Result<[f64; 3]> {
    if !azimuth_deg.is_finite() || !elevation_deg.is_finite() || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite direction ({azimuth_deg}, {elevation_deg}, {radius})"
        )));
    }
    if radius <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let (sin_az, cos_az) = azimuth_deg.to_radians().sin_cos();
    let (sin_el, cos_el) = elevation_deg.to_radians().sin_cos();
    Ok([
        radius * cos_az * cos_el,
        radius * sin_az,
        radius * cos_az * sin_el,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub radius: f64,
    pub cartesian: [f64; 3],
}

impl Direction {
    pub fn new(azimuth_deg: f64, elevation_deg: f64, radius: f64) -> Result<Self> {
        let cartesian = interaural_polar_to_cartesian(azimuth_deg, elevation_deg, radius)?;
        Ok(Direction {
            azimuth_deg,
            elevation_deg,
            radius,
            cartesian,
        })
    }

    pub fn side(&self) -> Side {
        Side::of_azimuth(self.azimuth_deg)
    }

    /// Great-circle angle in degrees between this direction and the
    /// contralateral interaural pole (azimuth +90°).
    pub fn angle_from_contralateral_pole_deg(&self) -> f64 {
        let y = (self.cartesian[1] / self.radius).clamp(-1.0, 1.0);
        y.acos().to_degrees()
    }
}

/// The 25 × 50 CIPIC measurement grid, azimuth-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementGrid {
    pub azimuths: Vec<f64>,
    pub elevations: Vec<f64>,
    pub directions: Vec<Direction>,
}

impl MeasurementGrid {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn index_of(&self, azimuth_idx: usize, elevation_idx: usize) -> usize {
        azimuth_idx * self.elevations.len() + elevation_idx
    }

    /// Index of the grid direction closest (in angle) to the given direction.
    pub fn nearest(&self, azimuth_deg: f64, elevation_deg: f64) -> Result<usize> {
        let target = interaural_polar_to_cartesian(azimuth_deg, elevation_deg, 1.0)?;
        let mut best = (0, f64::NEG_INFINITY);
        for (i, d) in self.directions.iter().enumerate() {
            let dot: f64 = (0..3).map(|k| d.cartesian[k] * target[k]).sum::<f64>() / d.radius;
            if dot > best.1 {
                best = (i, dot);
            }
        }
        Ok(best.0)
    }

    pub fn indices_on_side(&self, side: Side) -> Vec<usize> {
        self.directions
            .iter()
            .enumerate()
            .filter(|(_, d)| d.side() == side)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn build_cipic_grid() -> MeasurementGrid {
    let elevations: Vec<f64> = (0..N_ELEVATIONS)
        .map(|k| ELEVATION_START_DEG + ELEVATION_STEP_DEG * k as f64)
        .collect();
    let mut directions = Vec::with_capacity(CIPIC_AZIMUTHS.len() * N_ELEVATIONS);
    for &az in &CIPIC_AZIMUTHS {
        for &el in &elevations {
            directions.push(Direction::new(az, el, GRID_RADIUS).expect("grid angles are finite"));
        }
    }
    MeasurementGrid {
        azimuths: CIPIC_AZIMUTHS.to_vec(),
        elevations,
        directions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cartesian_trivial_points() {
        let p = interaural_polar_to_cartesian(0.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 0.0, epsilon = 1e-15);

        let p = interaural_polar_to_cartesian(0.0, 90.0, 1.0).unwrap();
        assert_abs_diff_eq!(p[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cartesian_far_left_overhead() {
        // cos(-80°) = 0.173648..., sin(-80°) = -0.984807...
        let p = interaural_polar_to_cartesian(-80.0, 90.0, 1.0).unwrap();
        assert_abs_diff_eq!(p[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], -0.984_807_753_012_208, epsilon = 1e-12);
        assert_abs_diff_eq!(p[2], 0.173_648_177_666_930_4, epsilon = 1e-12);
    }

    #[test]
    fn cartesian_rejects_bad_input() {
        assert!(interaural_polar_to_cartesian(f64::NAN, 0.0, 1.0).is_err());
        assert!(interaural_polar_to_cartesian(0.0, f64::INFINITY, 1.0).is_err());
        assert!(interaural_polar_to_cartesian(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn grid_layout() {
        let grid = build_cipic_grid();
        assert_eq!(grid.azimuths.len(), 25);
        assert_eq!(grid.elevations.len(), 50);
        assert_eq!(grid.len(), 1250);
        assert_eq!(grid.azimuths[0], -80.0);
        assert_eq!(grid.azimuths[24], 80.0);
        assert_eq!(grid.elevations[1] - grid.elevations[0], 5.625);
        assert_eq!(*grid.elevations.last().unwrap(), 230.625);
        assert_eq!(grid, build_cipic_grid());
        for w in grid.azimuths.windows(2) {
            assert!(w[0] < w[1]);
        }
        // azimuth-major order
        assert_eq!(grid.directions[1].azimuth_deg, -80.0);
        assert_eq!(grid.directions[50].azimuth_deg, -65.0);
        assert_eq!(grid.index_of(1, 0), 50);
    }

    #[test]
    fn grid_cartesian_consistent() {
        let grid = build_cipic_grid();
        for d in &grid.directions {
            let re =
                interaural_polar_to_cartesian(d.azimuth_deg, d.elevation_deg, d.radius).unwrap();
            for (a, b) in re.iter().zip(&d.cartesian) {
                assert!((a - b).abs() <= 1e-9);
            }
            let norm2: f64 = d.cartesian.iter().map(|c| c * c).sum();
            assert!((norm2 - d.radius * d.radius).abs() <= 1e-9);
        }
    }

    #[test]
    fn side_split() {
        let grid = build_cipic_grid();
        assert_eq!(grid.indices_on_side(Side::Ipsilateral).len(), 13 * 50);
        assert_eq!(grid.indices_on_side(Side::Contralateral).len(), 12 * 50);
        let i = grid.nearest(80.0, 0.0).unwrap();
        assert_eq!(grid.directions[i].azimuth_deg, 80.0);
        assert_abs_diff_eq!(
            grid.directions[i].angle_from_contralateral_pole_deg(),
            10.0,
            epsilon = 1e-9
        );
    }
}
