//! Synthetic particle-image renderer: the reference frame draws Gaussian
//! blobs at the particle positions, the current frame draws them displaced
//! by an analytic field. Serves as the ground-truth oracle for the flow
//! estimator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::GrayImage;

/// Analytic displacement fields with known per-point values, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisplacementField {
    /// Constant shift.
    Uniform { du_px: f64, dv_px: f64 },
    /// Radial field `peak * (r/sigma) * exp((1 - (r/sigma)^2) / 2)` pointing
    /// away from the center; its magnitude peaks at exactly `peak` when
    /// `r = sigma` and decays smoothly on both sides.
    RadialSqueeze {
        center_px: [f64; 2],
        peak_px: f64,
        sigma_px: f64,
    },
}

impl DisplacementField {
    pub fn at(&self, x: f64, y: f64) -> [f64; 2] {
        match self {
            DisplacementField::Uniform { du_px, dv_px } => [*du_px, *dv_px],
            DisplacementField::RadialSqueeze { center_px, peak_px, sigma_px } => {
                let dx = x - center_px[0];
                let dy = y - center_px[1];
                let r = (dx * dx + dy * dy).sqrt();
                if r == 0.0 {
                    return [0.0, 0.0];
                }
                let s = r / sigma_px;
                let mag = peak_px * s * ((1.0 - s * s) / 2.0).exp();
                [mag * dx / r, mag * dy / r]
            }
        }
    }

    pub fn zero() -> Self {
        DisplacementField::Uniform { du_px: 0.0, dv_px: 0.0 }
    }
}

/// Particle blob layout plus the displacement to apply for the second frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleScene {
    pub width: usize,
    pub height: usize,
    pub particle_centers_px: Vec<[f64; 2]>,
    /// Blob radius; the Gaussian profile has sigma = radius / 2.
    pub particle_radius_px: f64,
    /// Blob amplitude added on top of the background.
    pub peak_intensity: f64,
    pub background: f64,
    pub displacement: DisplacementField,
}

impl ParticleScene {
    /// Uniformly scattered particles with a margin keeping blobs inside the
    /// frame; deterministic for a given RNG state.
    pub fn random<R: Rng>(
        width: usize,
        height: usize,
        count: usize,
        radius_px: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::random_with_margin(width, height, count, radius_px, radius_px, rng)
    }

    /// Like [`Self::random`] with an explicit placement margin; callers that
    /// apply a displacement afterwards need `margin >= radius + max shift`.
    pub fn random_with_margin<R: Rng>(
        width: usize,
        height: usize,
        count: usize,
        radius_px: f64,
        margin_px: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let margin = margin_px.max(radius_px);
        if 2.0 * margin >= (width.min(height) as f64) - 2.0 {
            return Err(Error::geometry(format!(
                "margin {margin} px too large for a {width}x{height} frame"
            )));
        }
        let centers = (0..count)
            .map(|_| {
                [
                    rng.gen_range(margin..width as f64 - 1.0 - margin),
                    rng.gen_range(margin..height as f64 - 1.0 - margin),
                ]
            })
            .collect();
        Ok(Self {
            width,
            height,
            particle_centers_px: centers,
            particle_radius_px: radius_px,
            peak_intensity: 0.85,
            background: 0.06,
            displacement: DisplacementField::zero(),
        })
    }

    fn validate(&self) -> Result<()> {
        if !self.particle_radius_px.is_finite() || self.particle_radius_px <= 0.0 {
            return Err(Error::geometry("particle radius must be > 0".to_string()));
        }
        if !(0.0..=1.0).contains(&self.background)
            || !(0.0..=1.0).contains(&self.peak_intensity)
        {
            return Err(Error::geometry("intensities must lie in [0, 1]".to_string()));
        }
        let margin = self.particle_radius_px;
        let in_frame = |c: &[f64; 2]| {
            c[0] >= margin
                && c[0] <= self.width as f64 - 1.0 - margin
                && c[1] >= margin
                && c[1] <= self.height as f64 - 1.0 - margin
        };
        for c in &self.particle_centers_px {
            if !in_frame(c) {
                return Err(Error::geometry(format!(
                    "particle at ({}, {}) leaves the frame",
                    c[0], c[1]
                )));
            }
            let d = self.displacement.at(c[0], c[1]);
            let moved = [c[0] + d[0], c[1] + d[1]];
            if !in_frame(&moved) {
                return Err(Error::geometry(format!(
                    "particle displaced to ({}, {}) leaves the frame",
                    moved[0], moved[1]
                )));
            }
        }
        Ok(())
    }

    fn render(&self, displaced: bool) -> Result<GrayImage> {
        let mut pixels = vec![self.background; self.width * self.height];
        let sigma = self.particle_radius_px / 2.0;
        let cutoff = 4.0 * sigma;
        let inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

        for c in &self.particle_centers_px {
            let center = if displaced {
                let d = self.displacement.at(c[0], c[1]);
                [c[0] + d[0], c[1] + d[1]]
            } else {
                *c
            };
            let x0 = ((center[0] - cutoff).floor().max(0.0)) as usize;
            let x1 = ((center[0] + cutoff).ceil().min((self.width - 1) as f64)) as usize;
            let y0 = ((center[1] - cutoff).floor().max(0.0)) as usize;
            let y1 = ((center[1] + cutoff).ceil().min((self.height - 1) as f64)) as usize;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let dx = x as f64 - center[0];
                    let dy = y as f64 - center[1];
                    let d2 = dx * dx + dy * dy;
                    if d2 > cutoff * cutoff {
                        continue;
                    }
                    let i = y * self.width + x;
                    pixels[i] = (pixels[i] + self.peak_intensity * (-d2 * inv_two_sigma2).exp())
                        .min(1.0);
                }
            }
        }
        GrayImage::new(self.width, self.height, pixels)
    }

    /// The undeformed frame.
    pub fn render_reference(&self) -> Result<GrayImage> {
        self.validate()?;
        self.render(false)
    }

    /// The frame with particle centers pushed through the displacement field.
    pub fn render_current(&self) -> Result<GrayImage> {
        self.validate()?;
        self.render(true)
    }
}

/// Render the (reference, current) image pair of a scene.
pub fn render_scene(scene: &ParticleScene) -> Result<(GrayImage, GrayImage)> {
    scene.validate()?;
    Ok((scene.render(false)?, scene.render(true)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stage_rng;

    #[test]
    fn zero_displacement_renders_identical_frames() {
        let mut rng = stage_rng(3, "render/zero");
        let scene = ParticleScene::random(96, 96, 60, 3.0, &mut rng).unwrap();
        let (a, b) = render_scene(&scene).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_particles_renders_uniform_background() {
        let scene = ParticleScene {
            width: 64,
            height: 64,
            particle_centers_px: vec![],
            particle_radius_px: 3.0,
            peak_intensity: 0.85,
            background: 0.06,
            displacement: DisplacementField::zero(),
        };
        let (a, _) = render_scene(&scene).unwrap();
        assert!(a.pixels().iter().all(|&p| p == 0.06));
    }

    #[test]
    fn centroid_tracks_displacement() {
        let scene = ParticleScene {
            width: 64,
            height: 64,
            particle_centers_px: vec![[32.0, 32.0]],
            particle_radius_px: 4.0,
            peak_intensity: 0.9,
            background: 0.0,
            displacement: DisplacementField::Uniform { du_px: 5.0, dv_px: 0.0 },
        };
        let (a, b) = render_scene(&scene).unwrap();
        let centroid = |img: &GrayImage| {
            let mut mass = 0.0;
            let mut cx = 0.0;
            let mut cy = 0.0;
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let p = img.get(x, y);
                    mass += p;
                    cx += p * x as f64;
                    cy += p * y as f64;
                }
            }
            [cx / mass, cy / mass]
        };
        let ca = centroid(&a);
        let cb = centroid(&b);
        assert!((cb[0] - ca[0] - 5.0).abs() <= 0.05, "dx = {}", cb[0] - ca[0]);
        assert!((cb[1] - ca[1]).abs() <= 0.05, "dy = {}", cb[1] - ca[1]);
    }

    #[test]
    fn rejects_particles_leaving_the_frame() {
        let scene = ParticleScene {
            width: 64,
            height: 64,
            particle_centers_px: vec![[60.0, 32.0]],
            particle_radius_px: 3.0,
            peak_intensity: 0.9,
            background: 0.0,
            displacement: DisplacementField::Uniform { du_px: 5.0, dv_px: 0.0 },
        };
        assert!(matches!(render_scene(&scene), Err(Error::Geometry(_))));
    }

    #[test]
    fn radial_field_peaks_at_sigma() {
        let f = DisplacementField::RadialSqueeze {
            center_px: [0.0, 0.0],
            peak_px: 4.0,
            sigma_px: 20.0,
        };
        let at_sigma = f.at(20.0, 0.0);
        assert!((at_sigma[0] - 4.0).abs() < 1e-12);
        assert_eq!(f.at(0.0, 0.0), [0.0, 0.0]);
        // decays away from the ring
        assert!(f.at(60.0, 0.0)[0] < 1.0);
    }
}
