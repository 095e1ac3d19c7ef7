//! Procedural datasets in MVTec layout.
//!
//! ```text
//! <out>/<category>/train/good/000.png
//!                  test/good/000.png
//!                  test/defect/000.png
//!                  ground_truth/defect/000_mask.png
//! ```
//!
//! Every image of a category shares one sinusoidal texture plus pixel noise;
//! defect images additionally carry a bright or dark blob whose footprint is
//! written as a binary mask.

use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

pub const IMAGE_SIZE: u32 = 64;
const NOISE_SIGMA: f64 = 0.03;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SynthSummary {
    pub root: PathBuf,
    pub train_good: usize,
    pub test_good: usize,
    pub test_defect: usize,
    pub masks: usize,
}

impl SynthSummary {
    pub fn images(&self) -> usize {
        self.train_good + self.test_good + self.test_defect
    }
}

struct Texture {
    a: (f64, f64, f64, f64),
    b: (f64, f64, f64, f64),
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut wave = |amp: f64| {
            (
                rng.random_range(1..=6) as f64,
                rng.random_range(1..=6) as f64,
                rng.random::<f64>() * std::f64::consts::TAU,
                amp,
            )
        };
        Texture { a: wave(0.12), b: wave(0.08) }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let n = IMAGE_SIZE as f64;
        let w = |(fx, fy, ph, amp): (f64, f64, f64, f64), sign: f64| {
            amp * (std::f64::consts::TAU * (fx * x + sign * fy * y) / n + ph).sin()
        };
        0.5 + w(self.a, 1.0) + w(self.b, -1.0)
    }
}

/// 64-bit FNV-1a, used to give each category its own texture under one seed.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_gray_png(path: &Path, pixels: &[u8]) -> Result<(), SynthError> {
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), IMAGE_SIZE, IMAGE_SIZE);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(pixels)?;
    writer.finish()?;
    Ok(())
}

fn render(texture: &Texture, rng: &mut ChaCha8Rng, defect: bool) -> (Vec<u8>, Option<Vec<u8>>) {
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let n = IMAGE_SIZE as usize;
    let blob = defect.then(|| {
        let cx = rng.random_range(12.0..52.0);
        let cy = rng.random_range(12.0..52.0);
        let r: f64 = rng.random_range(5.0..9.0);
        let amp = if rng.random::<bool>() { 0.35 } else { -0.35 };
        (cx, cy, r, amp)
    });
    let mut img = Vec::with_capacity(n * n);
    let mut mask = blob.map(|_| Vec::with_capacity(n * n));
    for y in 0..n {
        for x in 0..n {
            let (fx, fy) = (x as f64, y as f64);
            let mut v = texture.at(fx, fy) + noise.sample(rng);
            if let (Some((cx, cy, r, amp)), Some(m)) = (blob, mask.as_mut()) {
                let d = ((fx - cx).powi(2) + (fy - cy).powi(2)).sqrt() / r;
                if d <= 1.0 {
                    v += amp * (1.0 - d * d);
                }
                m.push(if d <= 1.0 { 255 } else { 0 });
            }
            img.push(to_u8(v));
        }
    }
    (img, mask)
}

/// Write a synthetic category under `out/category`. Deterministic in `seed`.
pub fn synth_dataset(
    category: &str,
    n_train: usize,
    n_test_good: usize,
    n_test_defect: usize,
    seed: u64,
    out: &Path,
) -> Result<SynthSummary, SynthError> {
    if n_train == 0 || n_test_good == 0 || n_test_defect == 0 {
        return Err(SynthError::Precondition("all image counts must be >= 1".into()));
    }
    if category.is_empty() || category.contains(['/', '\\']) || category == "." || category == ".." {
        return Err(SynthError::Precondition(format!("bad category name `{category}`")));
    }
    let root = out.join(category);
    let dirs = ["train/good", "test/good", "test/defect", "ground_truth/defect"];
    for d in dirs {
        fs::create_dir_all(root.join(d))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(category));
    let texture = Texture::random(&mut rng);
    for i in 0..n_train {
        let (img, _) = render(&texture, &mut rng, false);
        write_gray_png(&root.join(format!("train/good/{i:03}.png")), &img)?;
    }
    for i in 0..n_test_good {
        let (img, _) = render(&texture, &mut rng, false);
        write_gray_png(&root.join(format!("test/good/{i:03}.png")), &img)?;
    }
    for i in 0..n_test_defect {
        let (img, mask) = render(&texture, &mut rng, true);
        write_gray_png(&root.join(format!("test/defect/{i:03}.png")), &img)?;
        write_gray_png(&root.join(format!("ground_truth/defect/{i:03}_mask.png")), &mask.expect("defect mask"))?;
    }
    Ok(SynthSummary {
        root,
        train_good: n_train,
        test_good: n_test_good,
        test_defect: n_test_defect,
        masks: n_test_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(dir: &Path) -> usize {
        fs::read_dir(dir).unwrap().count()
    }

    #[test]
    fn layout_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let s = synth_dataset("synthcarpet", 20, 10, 10, 42, dir.path()).unwrap();
        assert_eq!(s.images(), 40);
        assert_eq!(s.masks, 10);
        let root = dir.path().join("synthcarpet");
        assert_eq!(count(&root.join("train/good")), 20);
        assert_eq!(count(&root.join("test/good")), 10);
        assert_eq!(count(&root.join("test/defect")), 10);
        assert_eq!(count(&root.join("ground_truth/defect")), 10);
        assert!(root.join("ground_truth/defect/009_mask.png").is_file());
    }

    #[test]
    fn deterministic_under_seed() {
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        synth_dataset("grid", 3, 2, 2, 7, a.path()).unwrap();
        synth_dataset("grid", 3, 2, 2, 7, b.path()).unwrap();
        synth_dataset("grid", 3, 2, 2, 8, c.path()).unwrap();
        for rel in ["train/good/002.png", "test/defect/001.png", "ground_truth/defect/001_mask.png"] {
            let fa = fs::read(a.path().join("grid").join(rel)).unwrap();
            assert_eq!(fa, fs::read(b.path().join("grid").join(rel)).unwrap(), "{rel}");
            assert_ne!(fa, fs::read(c.path().join("grid").join(rel)).unwrap(), "{rel}");
        }
    }

    #[test]
    fn zero_counts_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(synth_dataset("x", 0, 1, 1, 0, dir.path()), Err(SynthError::Precondition(_))));
        assert!(matches!(synth_dataset("../x", 1, 1, 1, 0, dir.path()), Err(SynthError::Precondition(_))));
        assert_eq!(count(dir.path()), 0);
    }

    #[test]
    fn png_round_trips_and_mask_marks_blob() {
        let dir = tempfile::tempdir().unwrap();
        synth_dataset("tile", 1, 1, 1, 3, dir.path()).unwrap();
        let decoder = png::Decoder::new(io::BufReader::new(
            File::open(dir.path().join("tile/ground_truth/defect/000_mask.png")).unwrap(),
        ));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (IMAGE_SIZE, IMAGE_SIZE));
        let on = buf.iter().filter(|&&v| v == 255).count();
        // Blob radius is in [5, 9): area between about 78 and 255 pixels.
        assert!((60..=260).contains(&on), "{on}");
        assert!(buf.iter().all(|&v| v == 0 || v == 255));
    }
}
