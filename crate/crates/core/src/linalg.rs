//! Dense helpers shared by the spectral and analytic code.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense matrix exponential (Pade scaling and squaring).
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.amax()
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Drops the imaginary part after checking that it is at most `tolerance`.
pub fn checked_real(m: &DMatrix<Complex64>, tolerance: f64) -> Result<DMatrix<f64>> {
    let residue = m.iter().fold(0.0_f64, |acc, z| acc.max(z.im.abs()));
    if residue > tolerance {
        return Err(Error::ImaginaryResidueTooLarge { residue, tolerance });
    }
    Ok(m.map(|z| z.re))
}

/// Symmetric square root `C` with `C C^T = cov` for a possibly singular psd matrix.
///
/// Eigenvalues below `1e-12 * max` are clipped to zero; an eigenvalue below
/// `-1e-8 * max` rejects the matrix.
pub fn psd_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cov.ncols(),
        });
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min < -1e-8 * max.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let clip = 1e-12 * max;
    let roots = eig.eigenvalues.map(|l| if l > clip { l.sqrt() } else { 0.0 });
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    ((m + m.transpose()) * 0.5).symmetric_eigenvalues().min()
}

/// Adaptive Simpson quadrature of a matrix-valued integrand over `[a, b]`.
///
/// The interval is first split into `panels` pieces; each piece is bisected until
/// the Richardson error estimate (max-norm) is below its share of
/// `rtol * |integral|_max + atol`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, panels: usize, rtol: f64, atol: f64) -> Result<DMatrix<f64>>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    const MAX_DEPTH: u32 = 40;

    struct Piece {
        a: f64,
        b: f64,
        fa: DMatrix<f64>,
        fm: DMatrix<f64>,
        fb: DMatrix<f64>,
        whole: DMatrix<f64>,
        depth: u32,
    }

    let simpson = |a: f64, b: f64, fa: &DMatrix<f64>, fm: &DMatrix<f64>, fb: &DMatrix<f64>| {
        (fa + fm * 4.0 + fb) * ((b - a) / 6.0)
    };

    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut stack = Vec::with_capacity(panels);
    let mut f_left = f(a);
    let mut coarse: Option<DMatrix<f64>> = None;
    for i in 0..panels {
        let pa = a + i as f64 * width;
        let pb = if i + 1 == panels { b } else { pa + width };
        let fm = f(0.5 * (pa + pb));
        let fb = f(pb);
        let whole = simpson(pa, pb, &f_left, &fm, &fb);
        coarse = Some(match coarse {
            Some(c) => c + &whole,
            None => whole.clone(),
        });
        stack.push(Piece {
            a: pa,
            b: pb,
            fa: f_left,
            fm,
            fb: fb.clone(),
            whole,
            depth: 0,
        });
        f_left = fb;
    }
    let coarse = coarse.expect("at least one panel");
    let tol = rtol * coarse.amax() + atol;
    let span = b - a;

    let mut total = DMatrix::zeros(coarse.nrows(), coarse.ncols());
    while let Some(piece) = stack.pop() {
        let m = 0.5 * (piece.a + piece.b);
        let flm = f(0.5 * (piece.a + m));
        let frm = f(0.5 * (m + piece.b));
        let left = simpson(piece.a, m, &piece.fa, &flm, &piece.fm);
        let right = simpson(m, piece.b, &piece.fm, &frm, &piece.fb);
        let refined = &left + &right;
        let err = (&refined - &piece.whole).amax() / 15.0;
        let share = tol * (piece.b - piece.a) / span;
        if err <= share || piece.b - piece.a < 1e-12 * span {
            total += &refined + (&refined - &piece.whole) / 15.0;
        } else if piece.depth >= MAX_DEPTH {
            return Err(Error::Quadrature(format!(
                "no convergence on [{}, {}] (error {err:e})",
                piece.a, piece.b
            )));
        } else {
            stack.push(Piece {
                a: piece.a,
                b: m,
                fa: piece.fa,
                fm: flm,
                fb: piece.fm.clone(),
                whole: left,
                depth: piece.depth + 1,
            });
            stack.push(Piece {
                a: m,
                b: piece.b,
                fa: piece.fm,
                fm: frm,
                fb: piece.fb,
                whole: right,
                depth: piece.depth + 1,
            });
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn expm_of_rotation_generator() {
        let t = 0.9_f64;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&m);
        let want = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        assert_abs_diff_eq!((e - want).amax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn checked_real_rejects_residue() {
        let m = DMatrix::from_element(2, 2, Complex64::new(1.0, 1e-6));
        assert!(matches!(
            checked_real(&m, 1e-8),
            Err(Error::ImaginaryResidueTooLarge { .. })
        ));
        assert_eq!(checked_real(&m, 1e-5).unwrap(), DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn psd_sqrt_of_singular_matrix() {
        // Rank one.
        let v = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let cov = &v * v.transpose();
        let c = psd_sqrt(&cov).unwrap();
        assert_abs_diff_eq!((&c * c.transpose() - &cov).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(psd_sqrt(&m), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn simpson_matches_closed_form() {
        // int_0^3 [[e^{-s}, s^2], [sin s, 1]] ds
        let got = adaptive_simpson(
            |s| DMatrix::from_row_slice(2, 2, &[(-s).exp(), s * s, s.sin(), 1.0]),
            0.0,
            3.0,
            1,
            1e-10,
            0.0,
        )
        .unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0 - (-3.0f64).exp(), 9.0, 1.0 - 3.0f64.cos(), 3.0]);
        assert_abs_diff_eq!((got - want).amax(), 0.0, epsilon = 1e-9);
    }
}
