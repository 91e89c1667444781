//! Orthonormal bases, the measurement-times-sparsity product `A = Vᴴ U`,
//! coherence and submatrix extraction.
//!
//! Everything is dense. Two-dimensional signals of `rows × cols` pixels are
//! linearized row-major: pixel `(r, c)` has index `r * cols + c`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg;
use crate::{CMatrix, C64};

/// Tolerance on `max |EᴴE − I|` accepted for user-supplied bases.
pub const UNITARY_TOL: f64 = 1e-10;

/// Rows with Euclidean norm at or below this are treated as zero by
/// [`normalize_rows`].
pub const ZERO_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Identity,
    Dft1D,
    Dft2D {
        rows: usize,
        cols: usize,
    },
    /// Orthonormal 2-D Haar synthesis with `levels` Mallat decomposition levels.
    Haar2D {
        rows: usize,
        cols: usize,
        levels: usize,
    },
    Custom,
}

impl BasisKind {
    /// Haar kind with the maximal number of levels, `log2(min(rows, cols))`.
    pub fn haar2d(rows: usize, cols: usize) -> Self {
        let levels = rows.min(cols).max(1).trailing_zeros() as usize;
        BasisKind::Haar2D { rows, cols, levels }
    }
}

/// An `N × N` unitary matrix whose columns are the basis vectors.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    kind: BasisKind,
    entries: CMatrix,
}

impl OrthonormalBasis {
    /// Builds one of the structured bases of dimension `n`.
    ///
    /// DFT entries are `exp(-2πi·jk/n)/√n`; the 2-D DFT is the Kronecker
    /// product of the row and column transforms under row-major
    /// linearization.
    pub fn new(kind: BasisKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("basis dimension must be positive"));
        }
        let entries = match kind {
            BasisKind::Identity => CMatrix::identity(n, n),
            BasisKind::Dft1D => dft_matrix(n),
            BasisKind::Dft2D { rows, cols } => {
                check_area(rows, cols, n)?;
                let dr = dft_matrix(rows);
                let dc = dft_matrix(cols);
                dr.kronecker(&dc)
            }
            BasisKind::Haar2D { rows, cols, levels } => {
                check_area(rows, cols, n)?;
                check_haar_dims(rows, cols, levels)?;
                let mut u = CMatrix::zeros(n, n);
                let mut buf = vec![0.0; n];
                for j in 0..n {
                    buf.iter_mut().for_each(|x| *x = 0.0);
                    buf[j] = 1.0;
                    haar2d_synthesis(&mut buf, rows, cols, levels);
                    for (i, &x) in buf.iter().enumerate() {
                        u[(i, j)] = C64::new(x, 0.0);
                    }
                }
                u
            }
            BasisKind::Custom => return Err(Error::invalid("use OrthonormalBasis::custom for custom bases")),
        };
        Ok(Self { kind, entries })
    }

    /// Wraps a user-supplied matrix after checking it is square and unitary.
    pub fn custom(entries: CMatrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch { expected: entries.nrows(), found: entries.ncols() });
        }
        if entries.nrows() == 0 {
            return Err(Error::invalid("basis dimension must be positive"));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let res = linalg::max_abs_dev_from_identity(&(entries.adjoint() * &entries));
        if res > UNITARY_TOL {
            return Err(Error::NotUnitary(res));
        }
        Ok(Self { kind: BasisKind::Custom, entries })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// `max |EᴴE − I|`.
    pub fn unitarity_residual(&self) -> f64 {
        linalg::max_abs_dev_from_identity(&(self.entries.adjoint() * &self.entries))
    }
}

fn check_area(rows: usize, cols: usize, n: usize) -> Result<()> {
    if rows * cols != n {
        return Err(Error::DimensionMismatch { expected: n, found: rows * cols });
    }
    Ok(())
}

fn check_haar_dims(rows: usize, cols: usize, levels: usize) -> Result<()> {
    if !rows.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { what: "Haar rows", value: rows });
    }
    if !cols.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { what: "Haar cols", value: cols });
    }
    let max_levels = rows.min(cols).trailing_zeros() as usize;
    if levels > max_levels {
        return Err(Error::invalid(format!(
            "{levels} Haar levels requested, at most {max_levels} fit a {rows}x{cols} grid"
        )));
    }
    Ok(())
}

fn dft_matrix(n: usize) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |j, k| {
        // reduce jk mod n first so large n keeps full phase accuracy
        let jk = (j * k) % n;
        C64::from_polar(scale, -2.0 * PI * jk as f64 / n as f64)
    })
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn haar_step_forward(data: &mut [f64], scratch: &mut Vec<f64>) {
    let half = data.len() / 2;
    scratch.clear();
    scratch.extend_from_slice(data);
    for k in 0..half {
        let (a, b) = (scratch[2 * k], scratch[2 * k + 1]);
        data[k] = (a + b) * FRAC_1_SQRT_2;
        data[half + k] = (a - b) * FRAC_1_SQRT_2;
    }
}

fn haar_step_inverse(data: &mut [f64], scratch: &mut Vec<f64>) {
    let half = data.len() / 2;
    scratch.clear();
    scratch.extend_from_slice(data);
    for k in 0..half {
        let (s, d) = (scratch[k], scratch[half + k]);
        data[2 * k] = (s + d) * FRAC_1_SQRT_2;
        data[2 * k + 1] = (s - d) * FRAC_1_SQRT_2;
    }
}

/// In-place orthonormal 2-D Haar analysis (Mallat layout) of a row-major
/// `rows × cols` buffer. Each level transforms the rows, then the columns,
/// of the current top-left approximation block.
pub fn haar2d_analysis(data: &mut [f64], rows: usize, cols: usize, levels: usize) {
    assert_eq!(data.len(), rows * cols);
    let mut scratch = Vec::new();
    let mut column = Vec::new();
    for level in 0..levels {
        let (h, w) = (rows >> level, cols >> level);
        for r in 0..h {
            haar_step_forward(&mut data[r * cols..r * cols + w], &mut scratch);
        }
        for c in 0..w {
            column.clear();
            column.extend((0..h).map(|r| data[r * cols + c]));
            haar_step_forward(&mut column, &mut scratch);
            for (r, &x) in column.iter().enumerate() {
                data[r * cols + c] = x;
            }
        }
    }
}

/// Inverse of [`haar2d_analysis`].
pub fn haar2d_synthesis(data: &mut [f64], rows: usize, cols: usize, levels: usize) {
    assert_eq!(data.len(), rows * cols);
    let mut scratch = Vec::new();
    let mut column = Vec::new();
    for level in (0..levels).rev() {
        let (h, w) = (rows >> level, cols >> level);
        for c in 0..w {
            column.clear();
            column.extend((0..h).map(|r| data[r * cols + c]));
            haar_step_inverse(&mut column, &mut scratch);
            for (r, &x) in column.iter().enumerate() {
                data[r * cols + c] = x;
            }
        }
        for r in 0..h {
            haar_step_inverse(&mut data[r * cols..r * cols + w], &mut scratch);
        }
    }
}

/// The product `A = Vᴴ U` together with its coherence.
#[derive(Debug, Clone)]
pub struct MeasurementEnsemble {
    a: CMatrix,
    mu: f64,
    real: bool,
}

impl MeasurementEnsemble {
    /// Forms `A = Vᴴ U` for measurement basis `v` and sparsity basis `u`.
    pub fn new(v: &OrthonormalBasis, u: &OrthonormalBasis) -> Result<Self> {
        if v.n() != u.n() {
            return Err(Error::DimensionMismatch { expected: v.n(), found: u.n() });
        }
        let a = match (v.kind(), u.kind()) {
            (BasisKind::Identity, _) => u.entries().clone(),
            (_, BasisKind::Identity) => v.entries().adjoint(),
            _ => v.entries().adjoint() * u.entries(),
        };
        Ok(Self::from_unitary(a))
    }

    /// Uses `a` directly; it must be square and unitary.
    pub fn from_matrix(a: CMatrix) -> Result<Self> {
        let basis = OrthonormalBasis::custom(a)?;
        Ok(Self::from_unitary(basis.entries))
    }

    fn from_unitary(a: CMatrix) -> Self {
        let mu = a.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
        let real = linalg::is_real(&a);
        Self { a, mu, real }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    /// Coherence `μ(A) = max |A(i, j)|`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// True when every entry of `A` has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.real
    }

    /// `max |AᴴA − I|`.
    pub fn orthogonality_residual(&self) -> f64 {
        linalg::max_abs_dev_from_identity(&(self.a.adjoint() * &self.a))
    }

    /// Entries `A(r, t)` for `r` in `rows` and `t` in `t`.
    pub fn submatrix(&self, rows: &[usize], t: &SupportSet) -> Result<CMatrix> {
        self.submatrix_cols(rows, t.indices())
    }

    pub(crate) fn submatrix_cols(&self, rows: &[usize], cols: &[usize]) -> Result<CMatrix> {
        let n = self.n();
        if let Some(&bad) = rows.iter().chain(cols).find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, bound: n });
        }
        Ok(CMatrix::from_fn(rows.len(), cols.len(), |i, j| self.a[(rows[i], cols[j])]))
    }

    /// The rows of `A` listed in `rows`, all columns.
    pub fn rows(&self, rows: &[usize]) -> Result<CMatrix> {
        let n = self.n();
        if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, bound: n });
        }
        Ok(self.a.select_rows(rows))
    }
}

/// Sorted, duplicate-free set of coefficient indices in `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SupportSet {
    n: usize,
    indices: Vec<usize>,
}

impl SupportSet {
    /// Sorts `indices`; rejects duplicates and out-of-range entries.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateIndex(w[0]));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::IndexOutOfRange { index: last, bound: n });
            }
        }
        Ok(Self { n, indices })
    }

    /// Every index `0..n`.
    pub fn full(n: usize) -> Self {
        Self { n, indices: (0..n).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Indices in `0..n` not in the set.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.contains(i)).collect()
    }
}

/// Output of [`normalize_rows`].
#[derive(Debug, Clone)]
pub struct NormalizedRows {
    pub matrix: CMatrix,
    /// Rows that were (numerically) zero and left as zero.
    pub zero_rows: Vec<usize>,
}

impl NormalizedRows {
    pub fn has_zero_rows(&self) -> bool {
        !self.zero_rows.is_empty()
    }
}

/// Scales every nonzero row to unit Euclidean norm.
pub fn normalize_rows(m: &CMatrix) -> NormalizedRows {
    let mut matrix = m.clone();
    let mut zero_rows = Vec::new();
    for i in 0..matrix.nrows() {
        let norm = matrix.row(i).norm();
        if norm <= ZERO_ROW_TOL {
            matrix.row_mut(i).fill(C64::new(0.0, 0.0));
            zero_rows.push(i);
        } else {
            matrix.row_mut(i).unscale_mut(norm);
        }
    }
    NormalizedRows { matrix, zero_rows }
}
