//! Test signals: Fourier-sparse 1-D signals with unrestricted or sub-band
//! supports, and wavelet-sparse images obtained by keeping the largest
//! Haar coefficients of a picture.

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pgm;
use crate::error::{Error, Result};
use crate::operators::{haar2d_analysis, haar2d_synthesis, SupportSet};
use crate::{CVector, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportModel {
    Unrestricted,
    /// `channel_count` non-overlapping runs of `⌈frac·n⌉` consecutive
    /// indices placed uniformly at random; the support is a uniform subset
    /// of their union.
    SubbandChannels {
        channel_count: usize,
        channel_width_frac: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Pgm(PathBuf),
    /// Piecewise-constant picture from [`synthetic_image`].
    Synthetic {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalSpec {
    FourierSparse1D { n: usize, k: usize, support: SupportModel },
    WaveletSparseImage { rows: usize, cols: usize, k: usize, source: ImageSource },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    /// Signal in the sample domain, `x = U c₀`.
    pub x: CVector,
    pub c0: CVector,
    pub t: SupportSet,
}

/// Width in samples of one sub-band channel.
pub fn channel_width(n: usize, frac: f64) -> usize {
    ((frac * n as f64) - 1e-9).ceil().max(1.0) as usize
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

/// Draws a support of size `k` in `0..n`.
pub fn draw_support<R: Rng + ?Sized>(n: usize, k: usize, model: &SupportModel, rng: &mut R) -> Result<SupportSet> {
    if k > n {
        return Err(Error::invalid(format!("sparsity {k} exceeds dimension {n}")));
    }
    match *model {
        SupportModel::Unrestricted => SupportSet::new(index::sample(rng, n, k).into_vec(), n),
        SupportModel::SubbandChannels { channel_count, channel_width_frac } => {
            if channel_count == 0 || !(channel_width_frac > 0.0 && channel_width_frac <= 1.0) {
                return Err(Error::invalid("sub-band needs at least one channel of width in (0, 1]"));
            }
            let w = channel_width(n, channel_width_frac);
            if channel_count * w > n {
                return Err(Error::invalid(format!("{channel_count} channels of width {w} do not fit in {n}")));
            }
            if channel_count * w < k {
                return Err(Error::invalid(format!(
                    "channel union of {} indices is smaller than k = {k}",
                    channel_count * w
                )));
            }
            let starts = place_channels(n, w, channel_count, rng)?;
            let union: Vec<usize> = starts.iter().flat_map(|&s| s..s + w).collect();
            let picked = index::sample(rng, union.len(), k).into_iter().map(|i| union[i]).collect();
            SupportSet::new(picked, n)
        }
    }
}

fn place_channels<R: Rng + ?Sized>(n: usize, w: usize, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    let mut starts: Vec<usize> = Vec::with_capacity(count);
    let mut attempts = 0;
    while starts.len() < count {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(Error::invalid(format!("could not place {count} disjoint channels of width {w} in {n}")));
        }
        let s = rng.random_range(0..=n - w);
        if starts.iter().all(|&o| s + w <= o || o + w <= s) {
            starts.push(s);
        }
    }
    starts.sort_unstable();
    Ok(starts)
}

/// Real coefficients uniform on `[−1, 1]` placed on `t`.
pub fn draw_coefficients<R: Rng + ?Sized>(t: &SupportSet, rng: &mut R) -> CVector {
    let mut c = CVector::zeros(t.n());
    for &i in t.indices() {
        c[i] = C64::new(rng.random_range(-1.0..=1.0), 0.0);
    }
    c
}

/// `x = F c` with `F(j, k) = exp(−2πi·jk/n)/√n`.
pub fn dft_synthesis(c: &CVector) -> CVector {
    let n = c.len();
    let scale = 1.0 / (n as f64).sqrt();
    CVector::from_fn(n, |j, _| {
        c.iter()
            .enumerate()
            .filter(|(_, v)| **v != C64::new(0.0, 0.0))
            .map(|(k, &v)| v * C64::from_polar(scale, -2.0 * PI * ((j * k) % n) as f64 / n as f64))
            .sum()
    })
}

pub fn gen_signal<R: Rng + ?Sized>(spec: &SignalSpec, rng: &mut R) -> Result<Signal> {
    match spec {
        SignalSpec::FourierSparse1D { n, k, support } => {
            let t = draw_support(*n, *k, support, rng)?;
            let c0 = draw_coefficients(&t, rng);
            Ok(Signal { x: dft_synthesis(&c0), c0, t })
        }
        SignalSpec::WaveletSparseImage { rows, cols, k, source } => {
            let img = match source {
                ImageSource::Pgm(path) => pgm::read_pgm(path)?,
                ImageSource::Synthetic { seed } => synthetic_image(*rows, *cols, *seed),
            };
            if img.shape() != (*rows, *cols) {
                return Err(Error::DimensionMismatch { expected: rows * cols, found: img.len() });
            }
            let (t, c0) = image_to_sparse(&img, *k)?;
            let x = haar_synthesis_vec(&c0, *rows, *cols);
            Ok(Signal { x, c0, t })
        }
    }
}

fn haar_levels(rows: usize, cols: usize) -> usize {
    rows.min(cols).trailing_zeros() as usize
}

fn row_major(img: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = img.shape();
    (0..rows * cols).map(|i| img[(i / cols, i % cols)]).collect()
}

/// Inverse Haar transform (maximal levels) of a real coefficient vector,
/// returned as a row-major signal.
pub fn haar_synthesis_vec(c: &CVector, rows: usize, cols: usize) -> CVector {
    let mut data: Vec<f64> = c.iter().map(|z| z.re).collect();
    haar2d_synthesis(&mut data, rows, cols, haar_levels(rows, cols));
    CVector::from_iterator(data.len(), data.into_iter().map(|v| C64::new(v, 0.0)))
}

/// Reshapes a row-major signal into an image, taking real parts.
pub fn to_image(x: &CVector, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |r, c| x[r * cols + c].re)
}

/// Keeps the `k` largest-magnitude Haar coefficients (ties to the lower
/// index; exact zeros are never kept).
pub fn image_to_sparse(img: &DMatrix<f64>, k: usize) -> Result<(SupportSet, CVector)> {
    let (rows, cols) = img.shape();
    if !rows.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { what: "image rows", value: rows });
    }
    if !cols.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { what: "image cols", value: cols });
    }
    let n = rows * cols;
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the pixel count {n}")));
    }
    let mut coeffs = row_major(img);
    haar2d_analysis(&mut coeffs, rows, cols, haar_levels(rows, cols));
    let mut order: Vec<usize> = (0..n).filter(|&i| coeffs[i] != 0.0).collect();
    order.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    let t = SupportSet::new(order, n)?;
    let mut c0 = CVector::zeros(n);
    for &i in t.indices() {
        c0[i] = C64::new(coeffs[i], 0.0);
    }
    Ok((t, c0))
}

/// A piecewise-constant test picture: a flat background with a handful of
/// overlapping rectangles of random gray levels.
pub fn synthetic_image(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = DMatrix::from_element(rows, cols, rng.random_range(20.0..80.0f64).round());
    let shapes = rng.random_range(3..=6);
    for _ in 0..shapes {
        let r0 = rng.random_range(0..rows);
        let c0 = rng.random_range(0..cols);
        let r1 = rng.random_range(r0 + 1..=rows);
        let c1 = rng.random_range(c0 + 1..=cols);
        let level = rng.random_range(0.0..255.0f64).round();
        img.view_mut((r0, c0), (r1 - r0, c1 - c0)).fill(level);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{BasisKind, OrthonormalBasis};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn empty_support_gives_zero_signal() {
        let spec = SignalSpec::FourierSparse1D { n: 16, k: 0, support: SupportModel::Unrestricted };
        let s = gen_signal(&spec, &mut rng(0)).unwrap();
        assert!(s.t.is_empty());
        assert_eq!(s.x.norm(), 0.0);
    }

    #[test]
    fn subband_support_lies_in_two_runs() {
        let model = SupportModel::SubbandChannels { channel_count: 2, channel_width_frac: 0.05 };
        assert_eq!(channel_width(1100, 0.05), 55);
        for seed in 0..20 {
            let spec = SignalSpec::FourierSparse1D { n: 1100, k: 55, support: model };
            let s = gen_signal(&spec, &mut rng(seed)).unwrap();
            assert_eq!(s.t.len(), 55);
            // the support is covered by two windows of 55 consecutive indices
            let idx = s.t.indices();
            let covered = (0..idx.len()).any(|split| {
                let spans = |run: &[usize]| run.is_empty() || run[run.len() - 1] - run[0] < 55;
                spans(&idx[..split]) && spans(&idx[split..])
            });
            assert!(covered, "{idx:?}");
        }
    }

    #[test]
    fn subband_rejects_small_union() {
        let model = SupportModel::SubbandChannels { channel_count: 1, channel_width_frac: 0.05 };
        assert!(draw_support(100, 6, &model, &mut rng(0)).is_err());
    }

    #[test]
    fn parseval_and_dft_agreement() {
        let spec = SignalSpec::FourierSparse1D { n: 64, k: 6, support: SupportModel::Unrestricted };
        let s = gen_signal(&spec, &mut rng(3)).unwrap();
        assert!((s.x.norm() - s.c0.norm()).abs() < 1e-12);
        let u = OrthonormalBasis::new(BasisKind::Dft1D, 64).unwrap();
        assert!((u.entries() * &s.c0 - &s.x).norm() < 1e-12);
    }

    #[test]
    fn constant_image_keeps_dc() {
        let img = DMatrix::from_element(8, 8, 3.0);
        let (t, c0) = image_to_sparse(&img, 1).unwrap();
        assert_eq!(t.indices(), &[0]);
        assert!((c0[0].re - 24.0).abs() < 1e-12);
        let (all, _) = image_to_sparse(&img, 64).unwrap();
        assert_eq!(all.indices(), &[0]);
    }

    #[test]
    fn thresholding_is_best_k() {
        let mut r = rng(9);
        let img = DMatrix::from_fn(32, 32, |_, _| r.random_range(0.0..255.0));
        let (t, c0) = image_to_sparse(&img, 51).unwrap();
        assert_eq!(t.len(), 51);
        let x = row_major(&img);
        let err = |c: &CVector| {
            let rec = haar_synthesis_vec(c, 32, 32);
            x.iter().zip(rec.iter()).map(|(a, b)| (a - b.re).powi(2)).sum::<f64>()
        };
        let best = err(&c0);
        let mut full = x.clone();
        haar2d_analysis(&mut full, 32, 32, 5);
        for trial in 0..20 {
            let mut cand = CVector::zeros(1024);
            for i in index::sample(&mut rng(100 + trial), 1024, 51) {
                cand[i] = C64::new(full[i], 0.0);
            }
            assert!(best <= err(&cand) + 1e-9);
        }
    }

    #[test]
    fn image_signal_matches_haar_basis() {
        let spec =
            SignalSpec::WaveletSparseImage { rows: 8, cols: 8, k: 10, source: ImageSource::Synthetic { seed: 4 } };
        let s = gen_signal(&spec, &mut rng(0)).unwrap();
        let u = OrthonormalBasis::new(BasisKind::haar2d(8, 8), 64).unwrap();
        assert!((u.entries() * &s.c0 - &s.x).norm() < 1e-9);
    }

    #[test]
    fn synthetic_image_is_deterministic() {
        assert_eq!(synthetic_image(16, 16, 5), synthetic_image(16, 16, 5));
        assert_ne!(synthetic_image(16, 16, 5), synthetic_image(16, 16, 6));
    }
}
