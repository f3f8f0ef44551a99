//! Microphone array geometry and steering.
//!
//! Azimuths are in degrees, counterclockwise from the +x axis, wrapped to
//! [0°, 360°). All positions live on the horizontal plane in meters.

use crate::error::{Error, Result};

/// Speed of sound used throughout, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Planar microphone array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    mic_positions: Vec<[f64; 2]>,
    speed_of_sound: f64,
    max_spacing: f64,
}

impl ArrayGeometry {
    pub fn new(mic_positions: Vec<[f64; 2]>) -> Result<Self> {
        Self::with_speed_of_sound(mic_positions, SPEED_OF_SOUND)
    }

    pub fn with_speed_of_sound(mic_positions: Vec<[f64; 2]>, speed_of_sound: f64) -> Result<Self> {
        if mic_positions.len() < 2 {
            return Err(Error::arg("array needs at least 2 microphones"));
        }
        if !(speed_of_sound > 0.0) || !speed_of_sound.is_finite() {
            return Err(Error::arg("speed of sound must be positive and finite"));
        }
        let mut max_spacing = 0.0f64;
        for i in 0..mic_positions.len() {
            for j in (i + 1)..mic_positions.len() {
                let d = dist(mic_positions[i], mic_positions[j]);
                if d == 0.0 {
                    return Err(Error::arg(format!(
                        "microphones {i} and {j} share a position"
                    )));
                }
                max_spacing = max_spacing.max(d);
            }
        }
        if !max_spacing.is_finite() {
            return Err(Error::arg("microphone positions must be finite"));
        }
        Ok(Self {
            mic_positions,
            speed_of_sound,
            max_spacing,
        })
    }

    /// Uniform circular array centered at the origin; microphone 0 at
    /// azimuth 0°, the rest counterclockwise.
    pub fn circular(num_mics: usize, diameter_m: f64) -> Result<Self> {
        if diameter_m <= 0.0 {
            return Err(Error::arg("diameter must be positive"));
        }
        let r = diameter_m / 2.0;
        let positions = (0..num_mics)
            .map(|i| {
                let phi = 2.0 * std::f64::consts::PI * i as f64 / num_mics as f64;
                [r * phi.cos(), r * phi.sin()]
            })
            .collect();
        Self::new(positions)
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn mic(&self, i: usize) -> [f64; 2] {
        self.mic_positions[i]
    }

    pub fn mics(&self) -> &[[f64; 2]] {
        &self.mic_positions
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    /// Largest pairwise microphone distance (array aperture), meters.
    pub fn max_spacing(&self) -> f64 {
        self.max_spacing
    }

    pub fn spacing(&self, i: usize, j: usize) -> f64 {
        dist(self.mic_positions[i], self.mic_positions[j])
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Time difference of arrival from `grid_point` between two microphones:
/// `(||p - m_j|| - ||p - m_i||) / v`, positive when the wavefront reaches
/// microphone `i` first. Antisymmetric under swapping `i` and `j`.
pub fn steering_tdoa(
    geometry: &ArrayGeometry,
    grid_point: [f64; 2],
    mic_i: usize,
    mic_j: usize,
) -> Result<f64> {
    let n = geometry.num_mics();
    if mic_i >= n || mic_j >= n {
        return Err(Error::arg(format!(
            "mic index out of range: ({mic_i}, {mic_j}) for {n} mics"
        )));
    }
    let di = dist(grid_point, geometry.mic(mic_i));
    let dj = dist(grid_point, geometry.mic(mic_j));
    Ok((dj - di) / geometry.speed_of_sound())
}

/// Azimuth scan grid at a fixed radius.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringGrid {
    radius_m: f64,
    azimuths_deg: Vec<f64>,
    step_deg: f64,
}

impl SteeringGrid {
    /// Uniform grid over [0°, 360°) with the given step.
    pub fn uniform(radius_m: f64, step_deg: f64) -> Result<Self> {
        if !(radius_m > 0.0) {
            return Err(Error::arg("scan radius must be positive"));
        }
        if !(step_deg > 0.0) || step_deg >= 360.0 {
            return Err(Error::arg("grid step must be in (0, 360)"));
        }
        let n = (360.0 / step_deg).round() as usize;
        let azimuths = (0..n).map(|i| i as f64 * step_deg).collect();
        Ok(Self {
            radius_m,
            azimuths_deg: azimuths,
            step_deg,
        })
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn azimuths_deg(&self) -> &[f64] {
        &self.azimuths_deg
    }

    pub fn step_deg(&self) -> f64 {
        self.step_deg
    }

    pub fn len(&self) -> usize {
        self.azimuths_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.azimuths_deg.is_empty()
    }

    /// Scan point for an azimuth: `[r cos(theta), r sin(theta)]`.
    pub fn point(&self, azimuth_deg: f64) -> [f64; 2] {
        let th = azimuth_deg.to_radians();
        [self.radius_m * th.cos(), self.radius_m * th.sin()]
    }
}

/// Wraps an angle in degrees into [0, 360).
pub fn wrap_deg(angle: f64) -> f64 {
    let a = angle % 360.0;
    if a < 0.0 {
        a + 360.0
    } else {
        a
    }
}

/// Circular distance between two azimuths, in [0, 180].
pub fn circular_diff_deg(a: f64, b: f64) -> f64 {
    let d = (wrap_deg(a) - wrap_deg(b)).abs();
    d.min(360.0 - d)
}
