//! Complex linear-algebra and clustering kernels shared by every stage.
//!
//! Dense products go through `matrixmultiply`'s complex GEMM; eigen and
//! singular value decompositions are delegated to `nalgebra` and wrapped so
//! that callers always see descending spectra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// How an operand enters a product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    /// As stored.
    N,
    /// Transposed.
    T,
    /// Conjugate-transposed.
    H,
}

impl Op {
    fn dims(self, m: &CMatrix) -> (usize, usize) {
        match self {
            Op::N => (m.nrows(), m.ncols()),
            Op::T | Op::H => (m.ncols(), m.nrows()),
        }
    }

    /// Row and column strides of the operand after the (virtual) transpose.
    fn strides(self, m: &CMatrix) -> (isize, isize) {
        let ld = m.nrows() as isize;
        match self {
            Op::N => (1, ld),
            Op::T | Op::H => (ld, 1),
        }
    }
}

/// `op_a(a) * op_b(b)`.
pub fn gemm(a: &CMatrix, op_a: Op, b: &CMatrix, op_b: Op) -> CMatrix {
    let (m, k) = op_a.dims(a);
    let (k2, n) = op_b.dims(b);
    assert_eq!(k, k2, "inner dimensions differ: {k} vs {k2}");
    let mut c = CMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // the kernel has no conjugating mode, so conjugate a copy instead
    let a_conj;
    let a = if op_a == Op::H {
        a_conj = a.conjugate();
        &a_conj
    } else {
        a
    };
    let b_conj;
    let b = if op_b == Op::H {
        b_conj = b.conjugate();
        &b_conj
    } else {
        b
    };
    let (rsa, csa) = op_a.strides(a);
    let (rsb, csb) = op_b.strides(b);
    // SAFETY: Complex64 is repr(C) with layout [re, im]; all strides and
    // dimensions describe the column-major storage of the nalgebra buffers.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            rsa,
            csa,
            b.as_ptr() as *const [f64; 2],
            rsb,
            csb,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

/// `a * b` or `a^T * b` for real matrices.
pub fn real_gemm(a: &RMatrix, transpose_a: bool, b: &RMatrix) -> RMatrix {
    let (m, k) = if transpose_a { (a.ncols(), a.nrows()) } else { (a.nrows(), a.ncols()) };
    assert_eq!(k, b.nrows(), "inner dimensions differ: {k} vs {}", b.nrows());
    let n = b.ncols();
    let mut c = RMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    let ld = a.nrows() as isize;
    let (rsa, csa) = if transpose_a { (ld, 1) } else { (1, ld) };
    // SAFETY: strides and dimensions describe the column-major buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            1,
            b.nrows() as isize,
            0.0,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
    c
}

/// `a * b`.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    gemm(a, Op::N, b, Op::N)
}

/// `a^H * b`.
pub fn matmul_h(a: &CMatrix, b: &CMatrix) -> CMatrix {
    gemm(a, Op::H, b, Op::N)
}

pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Eigen-pairs of a Hermitian matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: CMatrix,
}

pub fn hermitian_eig(matrix: &CMatrix) -> Result<EigenDecomposition> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let norm = frobenius_sq(matrix).sqrt();
    let asym = frobenius_sq(&(matrix - matrix.adjoint())).sqrt();
    if norm > 0.0 && asym > 1e-10 * norm {
        return Err(Error::NotHermitian(asym / norm));
    }
    let sym = (matrix + matrix.adjoint()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Thin singular value decomposition `A = U diag(s) V^H`, `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

pub fn svd(matrix: &CMatrix) -> Result<Svd> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Err(Error::Shape("svd of an empty matrix".into()));
    }
    if !is_finite(matrix) {
        return Err(Error::Domain("svd input has non-finite entries".into()));
    }
    let dec = nalgebra::SVD::new(matrix.clone(), true, true);
    let u = dec.u.expect("requested U");
    let v_t = dec.v_t.expect("requested V^T");
    let k = dec.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let singular_values = order.iter().map(|&i| dec.singular_values[i]).collect();
    let u_sorted = CMatrix::from_fn(u.nrows(), k, |r, c| u[(r, order[c])]);
    let v_sorted = CMatrix::from_fn(v_t.ncols(), k, |r, c| v_t[(order[c], r)].conj());
    Ok(Svd {
        u: u_sorted,
        singular_values,
        v: v_sorted,
    })
}

/// Least-squares solution of `a x = b` (minimum norm when rank deficient).
///
/// Returns the solution and whether `a` was numerically rank deficient.
pub fn least_squares(a: &CMatrix, b: &CMatrix) -> Result<(CMatrix, bool)> {
    if a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "least squares rows differ: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let dec = svd(a)?;
    let smax = dec.singular_values.first().copied().unwrap_or(0.0);
    let tol = smax * 1e-12 * a.nrows().max(a.ncols()) as f64;
    let mut deficient = false;
    let uhb = matmul_h(&dec.u, b);
    let mut scaled = uhb;
    for (i, &s) in dec.singular_values.iter().enumerate() {
        let inv = if s > tol {
            1.0 / s
        } else {
            deficient = true;
            0.0
        };
        scaled.row_mut(i).iter_mut().for_each(|z| *z *= inv);
    }
    Ok((matmul(&dec.v, &scaled), deficient))
}

/// Output of [`kmeans`].
#[derive(Debug, Clone)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    /// Within-cluster sum of squares after seeding and after every Lloyd step.
    pub objective_trace: Vec<f64>,
}

const KMEANS_MAX_ITER: usize = 100;
const KMEANS_REL_TOL: f64 = 1e-8;

fn dist_sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn assign(points: &[[f64; 2]], centroids: &[[f64; 2]]) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let labels = points
        .iter()
        .map(|&p| {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(i, &c)| (i, dist_sq(p, c)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            total += d;
            best
        })
        .collect();
    (labels, total)
}

/// Lloyd's k-means with k-means++ seeding drawn from `seed`.
pub fn kmeans(points: &[[f64; 2]], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::InvalidArgument("kmeans needs k >= 1".into()));
    }
    if k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "kmeans with k = {k} but only {} points",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|&p| dist_sq(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with chosen centroids
            points[rng.random_range(0..points.len())]
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            points[pick]
        };
        centroids.push(next);
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min(dist_sq(p, next));
        }
    }

    let (mut labels, mut objective) = assign(points, &centroids);
    let mut objective_trace = vec![objective];
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (&l, &p) in labels.iter().zip(points) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            }
        }
        let (new_labels, new_objective) = assign(points, &centroids);
        labels = new_labels;
        objective_trace.push(new_objective);
        let change = (objective - new_objective).abs();
        objective = new_objective;
        if change <= KMEANS_REL_TOL * objective.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(KMeans {
        labels,
        centroids,
        objective_trace,
    })
}

/// SplitMix64 finalizer; used to derive independent RNG streams.
pub fn mix_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for &t in tags {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(t.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(base, tags))
}

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(rand_distr::StandardNormal);
    let im: f64 = rng.sample(rand_distr::StandardNormal);
    C64::new(re * s, im * s)
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = rng_for(seed, &[]);
        CMatrix::from_fn(rows, cols, |_, _| complex_normal(&mut rng, 1.0))
    }

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let a = random_matrix(n, n, seed);
        (&a + a.adjoint()).scale(0.5)
    }

    #[test]
    fn gemm_matches_nalgebra_for_all_ops() {
        let a = random_matrix(5, 3, 1);
        let b = random_matrix(5, 4, 2);
        let c = random_matrix(3, 4, 3);
        let ah_b = gemm(&a, Op::H, &b, Op::N);
        assert!((ah_b - a.adjoint() * &b).norm() < 1e-12);
        let a_c = gemm(&a, Op::N, &c, Op::N);
        assert!((a_c - &a * &c).norm() < 1e-12);
        let at_b = gemm(&a, Op::T, &b, Op::N);
        assert!((at_b - a.transpose() * &b).norm() < 1e-12);
        let b_ch = gemm(&b, Op::N, &c, Op::H);
        assert!((b_ch - &b * c.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn real_gemm_matches_nalgebra() {
        let mut rng = rng_for(21, &[]);
        let a = RMatrix::from_fn(6, 4, |_, _| rng.random::<f64>());
        let b = RMatrix::from_fn(4, 3, |_, _| rng.random::<f64>());
        let c = RMatrix::from_fn(6, 3, |_, _| rng.random::<f64>());
        assert!((real_gemm(&a, false, &b) - &a * &b).norm() < 1e-12);
        assert!((real_gemm(&a, true, &c) - a.transpose() * &c).norm() < 1e-12);
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let eye = CMatrix::identity(4, 4);
        let dec = hermitian_eig(&eye).unwrap();
        for v in dec.eigenvalues {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let diag = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(3.0, 0.0)]));
        let dec = hermitian_eig(&diag).unwrap();
        assert!((dec.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((dec.eigenvalues[1] - 1.0).abs() < 1e-14);
        assert!((dec.eigenvectors[(1, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((dec.eigenvectors[(0, 1)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_bad_input() {
        assert!(matches!(hermitian_eig(&random_matrix(3, 4, 4)), Err(Error::Shape(_))));
        assert!(matches!(hermitian_eig(&random_matrix(4, 4, 5)), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn eig_residual_on_random_hermitian() {
        for seed in 0..10 {
            let a = random_hermitian(8, 100 + seed);
            let dec = hermitian_eig(&a).unwrap();
            for i in 0..8 {
                let v = dec.eigenvectors.column(i).into_owned();
                let r = &a * &v - v.scale(dec.eigenvalues[i]);
                assert!(r.norm() < 1e-10, "pair {i} residual {}", r.norm());
            }
            let gram = dec.eigenvectors.adjoint() * &dec.eigenvectors;
            assert!((gram - CMatrix::identity(8, 8)).norm() < 1e-10);
            assert!(dec.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            let trace: f64 = (0..8).map(|i| a[(i, i)].re).sum();
            let sum: f64 = dec.eigenvalues.iter().sum();
            assert!((trace - sum).abs() <= 1e-9 * trace.abs().max(1.0));
        }
    }

    #[test]
    fn svd_diagonal_zero_and_random() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0)]));
        let s = svd(&d).unwrap();
        assert!((s.singular_values[0] - 2.0).abs() < 1e-14);
        assert!((s.singular_values[1] - 1.0).abs() < 1e-14);

        let z = svd(&CMatrix::zeros(3, 2)).unwrap();
        assert!(z.singular_values.iter().all(|&x| x == 0.0));

        let a = random_matrix(16, 8, 9);
        let s = svd(&a).unwrap();
        let sigma = CMatrix::from_diagonal(&CVector::from_iterator(
            8,
            s.singular_values.iter().map(|&x| C64::new(x, 0.0)),
        ));
        let rec = &s.u * sigma * s.v.adjoint();
        assert!((&a - rec).norm() / a.norm() < 1e-10);
        assert!((s.u.adjoint() * &s.u - CMatrix::identity(8, 8)).norm() < 1e-10);
        assert!((s.v.adjoint() * &s.v - CMatrix::identity(8, 8)).norm() < 1e-10);
        let energy: f64 = s.singular_values.iter().map(|x| x * x).sum();
        assert!((energy - frobenius_sq(&a)).abs() <= 1e-9 * energy);
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        let a = random_matrix(10, 3, 11);
        let x = random_matrix(3, 2, 12);
        let b = &a * &x;
        let (sol, deficient) = least_squares(&a, &b).unwrap();
        assert!(!deficient);
        assert!((sol - x).norm() < 1e-10);
    }

    #[test]
    fn kmeans_separated_clouds() {
        let mut rng = rng_for(5, &[]);
        let mut pts = Vec::new();
        for i in 0..20 {
            let c = if i < 10 { 0.0 } else { 10.0 };
            pts.push([c + rng.random_range(-0.1..0.1), c + rng.random_range(-0.1..0.1)]);
        }
        let km = kmeans(&pts, 2, 3).unwrap();
        let first = km.labels[0];
        assert!(km.labels[..10].iter().all(|&l| l == first));
        assert!(km.labels[10..].iter().all(|&l| l != first));
        assert!(km.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let pts = [[1.0, 2.0], [3.0, 4.0], [5.0, 0.0]];
        let km = kmeans(&pts, 1, 0).unwrap();
        assert!((km.centroids[0][0] - 3.0).abs() < 1e-12);
        assert!((km.centroids[0][1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_is_deterministic_and_validates_k() {
        let mut rng = rng_for(8, &[]);
        let pts: Vec<[f64; 2]> = (0..20).map(|_| [rng.random(), rng.random()]).collect();
        let a = kmeans(&pts, 3, 42).unwrap();
        let b = kmeans(&pts, 3, 42).unwrap();
        assert_eq!(a.labels, b.labels);
        assert!(matches!(kmeans(&pts, 21, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(kmeans(&pts, 0, 0), Err(Error::InvalidArgument(_))));
    }
}
