//! Synthetic rectified-stereo scenes with exact ground-truth disparity.
//!
//! A scene is a stack of textured fronto-parallel rectangles in front of a
//! background plane. Textures are continuous functions of left-image
//! coordinates, so the right image can be rendered by sampling each surface
//! at `x - D` exactly (nearest surface wins, occlusions resolved), and for
//! integer disparities the rendered pair is warp-consistent byte for byte.
//! Surface brightness optionally encodes disparity (`shading_gain`), giving
//! the single-view encoder a learnable monocular cue, the desk-scale
//! stand-in for the structural regularities of road scenes.

use super::image_io::{
    normalize_byte, quantize_to_byte, read_f32_raster, read_u8_raster, save_image,
    write_f32_raster, write_u8_raster,
};
use super::StereoSample;
use crate::error::{Error, Result};
use crate::geometry::Calibration;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureKind {
    /// Band-limited noise: a seeded sum of oriented sinusoids.
    Noise,
    /// A single horizontal-frequency sinusoid.
    Sinusoid,
    /// Hard-edged checkerboard (exercises the aperture problem).
    Checker,
}

/// One textured fronto-parallel rectangle, in left-image pixel coordinates
/// (`x0 <= x < x1`, `y0 <= y < y1`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub depth_m: f64,
    pub rect: [usize; 4],
    pub texture_seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub id: String,
    /// `[H, W]`.
    pub image_size: [usize; 2],
    pub calibration: Calibration,
    pub background_depth_m: f64,
    pub background_seed: u64,
    pub surfaces: Vec<SurfaceSpec>,
    pub texture: TextureKind,
    /// Dominant texture wavelength in pixels.
    pub texture_scale: f64,
    /// Texture contrast around the surface base intensity.
    pub texture_amplitude: f64,
    /// How strongly base intensity encodes disparity (0 = no monocular cue).
    pub shading_gain: f64,
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.calibration.validate()?;
        let [h, w] = self.image_size;
        if h < 2 || w < 2 {
            return Err(Error::Config(format!("scene {}: image too small", self.id)));
        }
        let fb = self.calibration.fb();
        for (i, depth) in std::iter::once(self.background_depth_m)
            .chain(self.surfaces.iter().map(|s| s.depth_m))
            .enumerate()
        {
            if !(1.0..=50.0).contains(&depth) {
                return Err(Error::Config(format!(
                    "scene {}: depth {depth} of surface {i} outside the [1,50] m clamp range",
                    self.id
                )));
            }
            if fb / depth >= w as f64 {
                return Err(Error::Config(format!(
                    "scene {}: disparity {} exceeds image width {w}",
                    self.id,
                    fb / depth
                )));
            }
        }
        for s in &self.surfaces {
            let [x0, y0, x1, y1] = s.rect;
            if x0 >= x1 || y0 >= y1 || x1 > w || y1 > h {
                return Err(Error::Config(format!(
                    "scene {}: rectangle {:?} outside the {h}x{w} image",
                    self.id, s.rect
                )));
            }
        }
        Ok(())
    }
}

struct Surface {
    disparity: f64,
    rect: Option<[usize; 4]>, // None = background (covers everything)
    base: f64,
    waves: Vec<(f64, f64, f64, f64)>, // (amp, kx, ky, phase)
    seed: u64,
}

impl Surface {
    fn contains(&self, u: f64, y: usize) -> bool {
        match self.rect {
            None => true,
            Some([x0, y0, x1, y1]) => {
                u >= x0 as f64 && u < x1 as f64 && y >= y0 && y < y1
            }
        }
    }

    fn texture(&self, kind: TextureKind, scale: f64, u: f64, v: f64) -> f64 {
        match kind {
            TextureKind::Noise => {
                let mut acc = 0.0;
                for (amp, kx, ky, phase) in &self.waves {
                    acc += amp * (kx * u + ky * v + phase).sin();
                }
                acc
            }
            TextureKind::Sinusoid => (TAU * u / scale + self.seed as f64).sin(),
            TextureKind::Checker => {
                let cell = ((u / scale).floor() + (v / scale).floor()) as i64;
                if cell.rem_euclid(2) == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

fn build_surfaces(spec: &SyntheticSceneSpec) -> Vec<Surface> {
    let fb = spec.calibration.fb();
    let mut max_disp = fb / spec.background_depth_m;
    for s in &spec.surfaces {
        max_disp = max_disp.max(fb / s.depth_m);
    }
    let make_waves = |seed: u64| -> Vec<(f64, f64, f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        (0..n)
            .map(|_| {
                let wavelength = rng.gen_range(spec.texture_scale..3.0 * spec.texture_scale);
                // bias wave vectors towards horizontal frequency so the
                // photometric loss constrains scanline shifts
                let angle = rng.gen_range(-0.6..0.6f64);
                let k = TAU / wavelength;
                (
                    rng.gen_range(0.5..1.0) / n as f64,
                    k * angle.cos(),
                    k * angle.sin(),
                    rng.gen_range(0.0..TAU),
                )
            })
            .collect()
    };
    let base_of = |depth: f64| {
        if spec.shading_gain == 0.0 {
            0.0
        } else {
            spec.shading_gain * ((fb / depth) / max_disp - 0.5)
        }
    };

    let mut surfaces = vec![Surface {
        disparity: fb / spec.background_depth_m,
        rect: None,
        base: base_of(spec.background_depth_m),
        waves: make_waves(spec.background_seed),
        seed: spec.background_seed,
    }];
    for s in &spec.surfaces {
        surfaces.push(Surface {
            disparity: fb / s.depth_m,
            rect: Some(s.rect),
            base: base_of(s.depth_m),
            waves: make_waves(s.texture_seed),
            seed: s.texture_seed,
        });
    }
    surfaces
}

/// Renders the pair plus exact ground truth. Each surface shifts right by
/// its disparity in the right image; nearer surfaces win; left pixels whose
/// counterpart is covered by a nearer surface are flagged occluded.
pub fn generate_synthetic_pair<F: Scalar>(spec: &SyntheticSceneSpec) -> Result<StereoSample<F>> {
    spec.validate()?;
    let [h, w] = spec.image_size;
    let surfaces = build_surfaces(spec);
    let intensity = |s: &Surface, u: f64, v: f64| -> f64 {
        let t = s.texture(spec.texture, spec.texture_scale, u, v);
        (s.base + spec.texture_amplitude * t).clamp(-0.5, 127.0 / 255.0)
    };
    // later surfaces win ties so the visibility rule is total
    let winner_at = |u: f64, y: usize| -> usize {
        let mut best = 0usize; // background covers everything
        for (i, s) in surfaces.iter().enumerate().skip(1) {
            if s.contains(u, y) && s.disparity >= surfaces[best].disparity {
                best = i;
            }
        }
        best
    };

    let mut left = vec![F::zero(); h * w];
    let mut right = vec![F::zero(); h * w];
    let mut gt = vec![F::zero(); h * w];
    let mut occ = vec![F::zero(); h * w];

    for y in 0..h {
        for x in 0..w {
            // left view
            let si = winner_at(x as f64, y);
            let s = &surfaces[si];
            left[y * w + x] =
                normalize_byte(quantize_to_byte::<f64>(intensity(s, x as f64, y as f64)));
            gt[y * w + x] = F::from_f64(s.disparity);
            // occlusion: someone nearer covers our spot in the right image
            let xr = x as f64 + s.disparity;
            let occluded = surfaces.iter().enumerate().any(|(j, o)| {
                j != si && o.disparity > s.disparity && o.contains(xr - o.disparity, y)
            });
            if occluded {
                occ[y * w + x] = F::one();
            }

            // right view: candidates are surfaces covering x - D
            let mut best: Option<usize> = None;
            for (i, o) in surfaces.iter().enumerate() {
                if o.contains(x as f64 - o.disparity, y)
                    && best.map_or(true, |b| o.disparity >= surfaces[b].disparity)
                {
                    best = Some(i);
                }
            }
            let bi = best.expect("background always covers");
            let o = &surfaces[bi];
            right[y * w + x] = normalize_byte(quantize_to_byte::<f64>(intensity(
                o,
                x as f64 - o.disparity,
                y as f64,
            )));
        }
    }

    StereoSample::new(
        spec.id.clone(),
        Tensor::from_vec(&[1, h, w], left)?,
        Tensor::from_vec(&[1, h, w], right)?,
        spec.calibration,
        Some(Tensor::from_vec(&[h, w], gt)?),
        Some(Tensor::from_vec(&[h, w], occ)?),
    )
}

/// Random generator for a family of scenes: textured rectangles over a
/// background, disparities drawn from a range.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneFamily {
    pub image_size: [usize; 2],
    pub calibration: Calibration,
    pub texture: TextureKind,
    pub texture_scale: f64,
    pub texture_amplitude: f64,
    pub shading_gain: f64,
    /// Closed range of foreground surface counts.
    pub surfaces: [usize; 2],
    /// Foreground disparity range in native pixels.
    pub disparity_range: [f64; 2],
    /// Background disparity range in native pixels.
    pub background_disparity: [f64; 2],
    /// Snap drawn disparities to integers.
    pub integer_disparities: bool,
    /// Foreground rectangle width range in pixels.
    pub rect_width: [usize; 2],
    /// Foreground rectangle height range in pixels.
    pub rect_height: [usize; 2],
}

impl SceneFamily {
    /// Noise-textured multi-plane scenes at the desk input size.
    pub fn desk_default() -> Self {
        SceneFamily {
            image_size: [64, 192],
            calibration: Calibration {
                focal_px: 100.0,
                baseline_m: 0.54,
            },
            texture: TextureKind::Noise,
            texture_scale: 14.0,
            texture_amplitude: 0.22,
            shading_gain: 0.85,
            surfaces: [2, 3],
            disparity_range: [2.0, 6.0],
            background_disparity: [1.0, 1.6],
            integer_disparities: false,
            rect_width: [38, 90],
            rect_height: [21, 44],
        }
    }

    pub fn sample_scene(&self, id: &str, rng: &mut ChaCha8Rng) -> SyntheticSceneSpec {
        let [h, w] = self.image_size;
        let fb = self.calibration.fb();
        fn draw_disp(rng: &mut ChaCha8Rng, range: [f64; 2], integer: bool) -> f64 {
            let d = if range[0] == range[1] {
                range[0]
            } else {
                rng.gen_range(range[0]..range[1])
            };
            if integer {
                d.round().max(1.0)
            } else {
                d
            }
        }
        let bg_disp = draw_disp(rng, self.background_disparity, self.integer_disparities);
        let n = rng.gen_range(self.surfaces[0]..=self.surfaces[1]);
        let mut surfaces = Vec::with_capacity(n);
        for _ in 0..n {
            let disp = draw_disp(rng, self.disparity_range, self.integer_disparities);
            let rw = rng.gen_range(self.rect_width[0]..self.rect_width[1].min(w - 1));
            let rh = rng.gen_range(self.rect_height[0]..self.rect_height[1].min(h - 1));
            let x0 = rng.gen_range(0..w - rw);
            let y0 = rng.gen_range(0..h - rh);
            surfaces.push(SurfaceSpec {
                depth_m: (fb / disp).clamp(1.0, 50.0),
                rect: [x0, y0, x0 + rw, y0 + rh],
                texture_seed: rng.gen(),
            });
        }
        SyntheticSceneSpec {
            id: id.to_string(),
            image_size: self.image_size,
            calibration: self.calibration,
            background_depth_m: (fb / bg_disp).clamp(1.0, 50.0),
            background_seed: rng.gen(),
            surfaces,
            texture: self.texture,
            texture_scale: self.texture_scale,
            texture_amplitude: self.texture_amplitude,
            shading_gain: self.shading_gain,
        }
    }

    pub fn generate<F: Scalar>(
        &self,
        count: usize,
        prefix: &str,
        seed: u64,
    ) -> Result<Vec<StereoSample<F>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let spec = self.sample_scene(&format!("{prefix}{i:03}"), &mut rng);
                generate_synthetic_pair(&spec)
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    spec_hash: String,
    image_size: [usize; 2],
    channels: usize,
    focal_px: f64,
    baseline_m: f64,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    gt: bool,
    occlusion: bool,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    dataset: ManifestHeader,
    samples: Vec<ManifestEntry>,
}

/// Writes `samples/<id>_{left,right}.pgm`, `<id>_gt.f32`, `<id>_occ.u8` and
/// a `manifest.toml` describing the set.
pub fn write_dataset<F: Scalar>(
    dir: &Path,
    samples: &[StereoSample<F>],
    spec_hash: &str,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Config("refusing to write an empty dataset".into()));
    }
    let sample_dir = dir.join("samples");
    std::fs::create_dir_all(&sample_dir)
        .map_err(|e| Error::io(sample_dir.display().to_string(), e))?;
    let mut entries = Vec::new();
    for s in samples {
        save_image(&sample_dir.join(format!("{}_left.pgm", s.id)), &s.left)?;
        save_image(&sample_dir.join(format!("{}_right.pgm", s.id)), &s.right)?;
        if let Some(gt) = &s.gt_disparity {
            write_f32_raster(&sample_dir.join(format!("{}_gt.f32", s.id)), gt)?;
        }
        if let Some(occ) = &s.occlusion {
            write_u8_raster(&sample_dir.join(format!("{}_occ.u8", s.id)), occ)?;
        }
        entries.push(ManifestEntry {
            id: s.id.clone(),
            gt: s.gt_disparity.is_some(),
            occlusion: s.occlusion.is_some(),
        });
    }
    let first = &samples[0];
    let manifest = Manifest {
        dataset: ManifestHeader {
            spec_hash: spec_hash.to_string(),
            image_size: first.resolution(),
            channels: first.channels(),
            focal_px: first.calibration.focal_px,
            baseline_m: first.calibration.baseline_m,
        },
        samples: entries,
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    let path = dir.join("manifest.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_dataset<F: Scalar>(dir: &Path) -> Result<Vec<StereoSample<F>>> {
    let path = dir.join("manifest.toml");
    let text =
        std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let [h, w] = manifest.dataset.image_size;
    let cal = Calibration::new(manifest.dataset.focal_px, manifest.dataset.baseline_m)?;
    let sample_dir = dir.join("samples");
    manifest
        .samples
        .iter()
        .map(|e| {
            let left = super::load_image(&sample_dir.join(format!("{}_left.pgm", e.id)))?;
            let right = super::load_image(&sample_dir.join(format!("{}_right.pgm", e.id)))?;
            let gt = if e.gt {
                Some(read_f32_raster(
                    &sample_dir.join(format!("{}_gt.f32", e.id)),
                    h,
                    w,
                )?)
            } else {
                None
            };
            let occ = if e.occlusion {
                Some(read_u8_raster(
                    &sample_dir.join(format!("{}_occ.u8", e.id)),
                    h,
                    w,
                )?)
            } else {
                None
            };
            StereoSample::new(e.id.clone(), left, right, cal, gt, occ)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{inverse_warp, photometric_loss};

    fn plane_spec(disparity: f64) -> SyntheticSceneSpec {
        let cal = Calibration::new(100.0, 0.54).unwrap();
        SyntheticSceneSpec {
            id: "plane".into(),
            image_size: [16, 48],
            calibration: cal,
            background_depth_m: cal.fb() / disparity,
            background_seed: 7,
            surfaces: vec![],
            texture: TextureKind::Noise,
            texture_scale: 8.0,
            texture_amplitude: 0.3,
            shading_gain: 0.0,
        }
    }

    #[test]
    fn single_plane_has_constant_gt_and_shifted_right_image() {
        let spec = plane_spec(4.0);
        let s: StereoSample<f64> = generate_synthetic_pair(&spec).unwrap();
        let gt = s.gt_disparity.as_ref().unwrap();
        assert!(gt.data().iter().all(|&v| (v - 4.0).abs() < 1e-12));
        // right(x) == left(x - 4) for x >= 4
        let (_, h, w) = s.left.spatial_dims().unwrap();
        for y in 0..h {
            for x in 4..w {
                assert_eq!(
                    s.right.data()[y * w + x],
                    s.left.data()[y * w + x - 4],
                    "mismatch at ({x},{y})"
                );
            }
        }
        assert!(s.occlusion.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn warping_right_by_gt_reconstructs_left_exactly() {
        let spec = plane_spec(3.0);
        let s: StereoSample<f64> = generate_synthetic_pair(&spec).unwrap();
        let gt = s.gt_disparity.as_ref().unwrap();
        let (warped, mask) = inverse_warp(&s.right, gt).unwrap();
        let (loss, _) = photometric_loss(&s.left, &warped, &mask).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn two_planes_step_disparity_and_occlusion_band() {
        let cal = Calibration::new(100.0, 0.54).unwrap();
        let mut spec = plane_spec(2.0);
        spec.surfaces.push(SurfaceSpec {
            depth_m: cal.fb() / 6.0,
            rect: [10, 2, 30, 14],
            texture_seed: 3,
        });
        let s: StereoSample<f64> = generate_synthetic_pair(&spec).unwrap();
        let gt = s.gt_disparity.as_ref().unwrap();
        let w = 48;
        // inside the rectangle
        assert!((gt.data()[5 * w + 15] - 6.0).abs() < 1e-12);
        // outside
        assert!((gt.data()[0] - 2.0).abs() < 1e-12);
        // occlusion band: width = disparity step, at the right edge of the rect
        let occ = s.occlusion.as_ref().unwrap();
        let band: Vec<usize> = (0..w).filter(|&x| occ.data()[5 * w + x] != 0.0).collect();
        assert_eq!(band, vec![30, 31, 32, 33]);
    }

    #[test]
    fn occluded_pixels_fail_photometric_check_but_rest_match() {
        let cal = Calibration::new(100.0, 0.54).unwrap();
        let mut spec = plane_spec(2.0);
        spec.texture_amplitude = 0.45;
        spec.surfaces.push(SurfaceSpec {
            depth_m: cal.fb() / 5.0,
            rect: [12, 0, 28, 16],
            texture_seed: 11,
        });
        let s: StereoSample<f64> = generate_synthetic_pair(&spec).unwrap();
        let gt = s.gt_disparity.as_ref().unwrap();
        let occ = s.occlusion.as_ref().unwrap();
        let (warped, mask) = inverse_warp(&s.right, gt).unwrap();
        let (_, h, w) = s.left.spatial_dims().unwrap();
        for i in 0..h * w {
            if mask.data()[i] != 0.0 && occ.data()[i] == 0.0 {
                assert_eq!(warped.data()[i], s.left.data()[i], "pixel {i}");
            }
        }
    }

    #[test]
    fn disparity_wider_than_image_is_rejected() {
        let mut spec = plane_spec(4.0);
        spec.background_depth_m = 1.0; // disparity 54 on a 48-wide image
        assert!(spec.validate().is_err());
    }

    #[test]
    fn dataset_round_trip_preserves_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let family = SceneFamily {
            image_size: [8, 24],
            ..SceneFamily::desk_default()
        };
        let samples: Vec<StereoSample<f32>> = family.generate(3, "t", 5).unwrap();
        write_dataset(dir.path(), &samples, "testhash").unwrap();
        let loaded: Vec<StereoSample<f32>> = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.len(), 3);
        for (a, b) in samples.iter().zip(&loaded) {
            assert_eq!(a.left.data(), b.left.data());
            assert_eq!(a.right.data(), b.right.data());
        }
    }
}
