//! Synthetic benchmark scenes with exact ground truth.
//!
//! Three layouts are provided:
//!
//! * [`SceneKind::PureBlocks`]: `r` horizontal bands of square blocks. Block
//!   `k` of band `i` holds a fixed mixture anchored on endmember `i`; block 0
//!   is pure, so every endmember has a pure region.
//! * [`SceneKind::DirichletField`]: smooth Gaussian random fields pushed
//!   through a softmax give a per-pixel mean `mu(x)`; abundances are drawn
//!   from `Dirichlet(alpha * mu(x))`. The pixel with the largest `mu_j` is
//!   made pure for each endmember.
//! * [`SceneKind::NoPurePixels`]: `Dirichlet(1, ..., 1)` draws rejected while
//!   any abundance exceeds `max_purity`, plus `facet_points` pixels lying on
//!   a facet of the simplex (exactly one zero abundance).

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Result, UnmixError};
use crate::rng::{stream_rng, Stream};
use crate::simplex::softmax;
use crate::types::{AbundanceMap, EndmemberMatrix, HsiCube};

/// Standard deviation, in pixels, of the kernel smoothing the random fields.
pub const FIELD_SMOOTHING_PX: f64 = 8.0;
/// Dirichlet concentration around the field mean.
pub const FIELD_CONCENTRATION: f64 = 10.0;
/// Gain applied to the unit-variance fields before the softmax.
pub const FIELD_GAIN: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    PureBlocks,
    DirichletField,
    NoPurePixels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub height: usize,
    pub width: usize,
    pub r: usize,
    pub seed: u64,
    /// Cap on every abundance (NoPurePixels only).
    pub max_purity: f64,
    /// Number of pixels placed on simplex facets (NoPurePixels only).
    pub facet_points: usize,
}

impl SceneSpec {
    /// 75x75, five endmembers, pure pixels.
    pub fn dc1(seed: u64) -> Self {
        Self {
            kind: SceneKind::PureBlocks,
            height: 75,
            width: 75,
            r: 5,
            seed,
            max_purity: 1.0,
            facet_points: 0,
        }
    }

    /// 100x100, nine endmembers, smooth fields.
    pub fn dc2(seed: u64) -> Self {
        Self {
            kind: SceneKind::DirichletField,
            height: 100,
            width: 100,
            r: 9,
            seed,
            max_purity: 1.0,
            facet_points: 0,
        }
    }

    /// 105x105, six endmembers, no pure pixels, two facet points.
    pub fn dc3(seed: u64) -> Self {
        Self {
            kind: SceneKind::NoPurePixels,
            height: 105,
            width: 105,
            r: 6,
            seed,
            max_purity: 0.8,
            facet_points: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(UnmixError::InvalidInput(m));
        if self.r < 2 {
            return bad(format!("scene needs r >= 2, got {}", self.r));
        }
        if self.height == 0 || self.width == 0 {
            return bad("scene has no pixels".into());
        }
        match self.kind {
            SceneKind::PureBlocks => {
                if self.height < self.r || self.width < self.r {
                    return bad(format!(
                        "pure-block scene {}x{} too small for r = {}",
                        self.height, self.width, self.r
                    ));
                }
            }
            SceneKind::DirichletField => {
                if self.height * self.width < self.r {
                    return bad("fewer pixels than endmembers".into());
                }
            }
            SceneKind::NoPurePixels => {
                if !(self.max_purity < 1.0 && self.max_purity > 1.0 / self.r as f64) {
                    return bad(format!(
                        "max_purity must lie in (1/r, 1), got {}",
                        self.max_purity
                    ));
                }
                if self.facet_points > self.height * self.width {
                    return bad("more facet points than pixels".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Target SNR in dB; `f64::INFINITY` means noiseless.
    pub snr_db: f64,
    pub seed: u64,
}

/// Noiseless `Y = E A` and the ground-truth abundances for `spec`.
pub fn generate_scene(spec: &SceneSpec, e_true: &EndmemberMatrix) -> Result<(HsiCube, AbundanceMap)> {
    spec.validate()?;
    if e_true.count() != spec.r {
        return Err(UnmixError::SpecMismatch(format!(
            "scene wants r = {}, endmember matrix has {} columns",
            spec.r,
            e_true.count()
        )));
    }
    let e = e_true.spectra();
    for i in 0..spec.r {
        for j in (i + 1)..spec.r {
            if e.column(i) == e.column(j) {
                return Err(UnmixError::DegenerateEndmembers(i, j));
            }
        }
    }
    let mut rng = stream_rng(spec.seed, Stream::Scene);
    let a = match spec.kind {
        SceneKind::PureBlocks => pure_blocks(spec),
        SceneKind::DirichletField => dirichlet_field(spec, &mut rng),
        SceneKind::NoPurePixels => no_pure_pixels(spec, &mut rng),
    };
    let y = e * &a;
    let cube = HsiCube::new(spec.height, spec.width, y)?;
    let abundances = AbundanceMap::new(a, spec.height, spec.width, true, true)?;
    Ok((cube, abundances))
}

/// Mixtures placed left to right along each band: weights on endmembers
/// `(i, i+1, i+2) mod r`.
const BLOCK_MIXTURES: [[f64; 3]; 5] = [
    [1.0, 0.0, 0.0],
    [0.5, 0.5, 0.0],
    [0.25, 0.75, 0.0],
    [0.5, 0.25, 0.25],
    [0.75, 0.0, 0.25],
];

fn pure_blocks(spec: &SceneSpec) -> DMatrix<f64> {
    let (h, w, r) = (spec.height, spec.width, spec.r);
    let blocks = BLOCK_MIXTURES.len().min(w);
    let band_h = h / r;
    let side = band_h.min(w / blocks);
    let mut a = DMatrix::from_element(r, h * w, 1.0 / r as f64);
    for i in 0..r {
        for (k, mix) in BLOCK_MIXTURES.iter().take(blocks).enumerate() {
            let (row0, col0) = (i * band_h, k * (w / blocks));
            for row in row0..row0 + side {
                for col in col0..col0 + side {
                    let mut c = a.column_mut(row * w + col);
                    c.fill(0.0);
                    for (off, &wt) in mix.iter().enumerate() {
                        c[(i + off) % r] += wt;
                    }
                }
            }
        }
    }
    a
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-0.5 * (x as f64 / sigma).powi(2)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicated borders; `img` is row-major.
fn blur(img: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for row in 0..h {
        for col in 0..w {
            tmp[row * w + col] = kernel
                .iter()
                .enumerate()
                .map(|(t, k)| k * img[row * w + clamp(col as isize + t as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for row in 0..h {
        for col in 0..w {
            out[row * w + col] = kernel
                .iter()
                .enumerate()
                .map(|(t, k)| k * tmp[clamp(row as isize + t as isize - radius, h) * w + col])
                .sum();
        }
    }
    out
}

fn dirichlet_sample(rng: &mut ChaCha8Rng, alpha: &[f64]) -> Vec<f64> {
    loop {
        let mut draw: Vec<f64> = alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
            .collect();
        let total: f64 = draw.iter().sum();
        if total > 0.0 && total.is_finite() {
            draw.iter_mut().for_each(|v| *v /= total);
            return draw;
        }
    }
}

fn dirichlet_field(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (h, w, r) = (spec.height, spec.width, spec.r);
    let n = h * w;
    let kernel = gaussian_kernel(FIELD_SMOOTHING_PX);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let fields: Vec<Vec<f64>> = (0..r)
        .map(|_| {
            let noise: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
            let mut f = blur(&noise, h, w, &kernel);
            let mean = f.iter().sum::<f64>() / n as f64;
            let std = (f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64)
                .sqrt()
                .max(1e-12);
            f.iter_mut().for_each(|v| *v = FIELD_GAIN * (*v - mean) / std);
            f
        })
        .collect();
    let mut mu = DMatrix::zeros(r, n);
    let mut a = DMatrix::zeros(r, n);
    for j in 0..n {
        let logits: Vec<f64> = fields.iter().map(|f| f[j]).collect();
        let m = softmax(&logits, 1.0);
        let alpha: Vec<f64> = m.iter().map(|&v| (FIELD_CONCENTRATION * v).max(1e-3)).collect();
        mu.column_mut(j).copy_from_slice(&m);
        a.column_mut(j).copy_from_slice(&dirichlet_sample(rng, &alpha));
    }
    let mut used = vec![false; n];
    for i in 0..r {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| mu[(i, y)].total_cmp(&mu[(i, x)]).then(x.cmp(&y)));
        let j = *order.iter().find(|&&j| !used[j]).expect("n >= r");
        used[j] = true;
        let mut c = a.column_mut(j);
        c.fill(0.0);
        c[i] = 1.0;
    }
    a
}

fn no_pure_pixels(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (n, r) = (spec.height * spec.width, spec.r);
    let ones = vec![1.0; r];
    let mut a = DMatrix::zeros(r, n);
    for j in 0..n {
        let draw = loop {
            let d = dirichlet_sample(rng, &ones);
            if d.iter().all(|&v| v <= spec.max_purity) {
                break d;
            }
        };
        a.column_mut(j).copy_from_slice(&draw);
    }
    for j in sample(rng, n, spec.facet_points).into_iter() {
        let mut d = dirichlet_sample(rng, &ones);
        let k = rng.random_range(0..r);
        d[k] = 0.0;
        let s: f64 = d.iter().sum();
        d.iter_mut().for_each(|v| *v /= s);
        a.column_mut(j).copy_from_slice(&d);
    }
    a
}

/// Adds i.i.d. zero-mean Gaussian noise with variance
/// `||Y||_F^2 / (n p 10^(snr/10))`. An infinite SNR returns the input unchanged.
pub fn add_noise(cube: &HsiCube, noise: &NoiseSpec) -> HsiCube {
    if noise.snr_db == f64::INFINITY {
        return cube.clone();
    }
    let y = cube.values();
    let count = (y.nrows() * y.ncols()) as f64;
    let var = y.norm_squared() / (count * 10f64.powf(noise.snr_db / 10.0));
    let mut rng = stream_rng(noise.seed, Stream::Noise);
    let normal = Normal::new(0.0, var.sqrt()).expect("finite variance");
    let noisy = y.map(|v| v + normal.sample(&mut rng));
    cube.with_values(noisy).expect("noise keeps the cube finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn dc1_shape_and_purity() {
        let e = fixtures::endmembers(5).unwrap();
        let (cube, a) = generate_scene(&SceneSpec::dc1(0), &e).unwrap();
        assert_eq!((cube.height(), cube.width(), cube.bands()), (75, 75, 188));
        assert_eq!(cube.pixels(), 5625);
        for i in 0..5 {
            let pure = a.coeffs().column_iter().filter(|c| c[i] == 1.0).count();
            assert!(pure >= 1, "endmember {i} has no pure pixel");
        }
        // block (band 2, block 0) is pure endmember 2
        let j = (2 * 15 + 3) * 75 + 4;
        assert_eq!(a.coeffs()[(2, j)], 1.0);
    }

    #[test]
    fn dc2_field_properties() {
        let e = fixtures::endmembers(9).unwrap();
        let (cube, a) = generate_scene(&SceneSpec::dc2(0), &e).unwrap();
        assert_eq!(cube.pixels(), 10_000);
        let maxes: Vec<f64> = a
            .coeffs()
            .column_iter()
            .map(|c| c.iter().copied().fold(0.0, f64::max))
            .collect();
        assert!(maxes.iter().filter(|&&m| m < 1.0).count() > 9_000);
        for i in 0..9 {
            assert!(a.coeffs().column_iter().any(|c| c[i] == 1.0));
        }
    }

    #[test]
    fn dc3_purity_cap_and_facets() {
        let e = fixtures::endmembers(6).unwrap();
        let (_, a) = generate_scene(&SceneSpec::dc3(0), &e).unwrap();
        let zero_rows: Vec<usize> = a
            .coeffs()
            .column_iter()
            .enumerate()
            .filter(|(_, c)| c.iter().any(|&v| v == 0.0))
            .map(|(j, _)| j)
            .collect();
        assert_eq!(zero_rows.len(), 2);
        for (j, c) in a.coeffs().column_iter().enumerate() {
            let zeros = c.iter().filter(|&&v| v == 0.0).count();
            if zero_rows.contains(&j) {
                assert_eq!(zeros, 1);
            } else {
                assert!(c.iter().all(|&v| v <= 0.8));
            }
        }
    }

    #[test]
    fn scenes_are_deterministic() {
        let e = fixtures::endmembers(6).unwrap();
        let a = generate_scene(&SceneSpec::dc3(7), &e).unwrap();
        let b = generate_scene(&SceneSpec::dc3(7), &e).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&SceneSpec::dc3(8), &e).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn scene_errors() {
        let e = fixtures::endmembers(4).unwrap();
        assert!(matches!(
            generate_scene(&SceneSpec::dc1(0), &e),
            Err(UnmixError::SpecMismatch(_))
        ));
        let mut dup = e.spectra().clone().remove_column(3);
        let c0 = dup.column(0).into_owned();
        dup = dup.insert_column(1, 0.0);
        dup.set_column(1, &c0);
        let dup = EndmemberMatrix::new(dup).unwrap();
        let spec = SceneSpec {
            r: 4,
            ..SceneSpec::dc1(0)
        };
        assert!(matches!(
            generate_scene(&spec, &dup),
            Err(UnmixError::DegenerateEndmembers(0, 1))
        ));
        let bad = SceneSpec {
            max_purity: 1.0,
            ..SceneSpec::dc3(0)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn noise_hits_target_snr() {
        let e = fixtures::endmembers(5).unwrap();
        let (cube, _) = generate_scene(&SceneSpec::dc1(0), &e).unwrap();
        let noisy = add_noise(&cube, &NoiseSpec { snr_db: 30.0, seed: 1 });
        let n = noisy.values() - cube.values();
        let snr = 10.0 * (cube.values().norm_squared() / n.norm_squared()).log10();
        assert!((snr - 30.0).abs() < 0.1, "realized snr {snr}");
        let again = add_noise(&cube, &NoiseSpec { snr_db: 30.0, seed: 1 });
        assert_eq!(noisy, again);
        let clean = add_noise(&cube, &NoiseSpec { snr_db: f64::INFINITY, seed: 1 });
        assert_eq!(clean, cube);
    }

    #[test]
    fn noise_variance_definition() {
        // ||Y||^2 = 100 at 20 dB: expected ||N||^2 = 1.
        let y = DMatrix::from_element(4, 2500, 0.1);
        let cube = HsiCube::new(50, 50, y).unwrap();
        assert!((cube.values().norm_squared() - 100.0).abs() < 1e-9);
        let noisy = add_noise(&cube, &NoiseSpec { snr_db: 20.0, seed: 3 });
        let energy = (noisy.values() - cube.values()).norm_squared();
        assert!((energy - 1.0).abs() < 0.1, "noise energy {energy}");
    }
}
