use num_complex::Complex64;

/// Triangular-truncated spherical-harmonic coefficients of a real field.
///
/// Only orders `m >= 0` are stored; the negative orders follow from
/// `a(l, -m) = conj(a(l, m))`, which makes the synthesized field real.
/// Coefficients are laid out order-major: all degrees of `m = 0`, then
/// `m = 1`, and so on.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    truncation: usize,
    coeffs: Vec<Complex64>,
}

#[inline]
pub(crate) fn spec_len(truncation: usize) -> usize {
    (truncation + 1) * (truncation + 2) / 2
}

#[inline]
pub(crate) fn spec_index(truncation: usize, l: usize, m: usize) -> usize {
    debug_assert!(m <= l && l <= truncation);
    // offset of order m is m (L + 1) - m (m - 1) / 2
    m * (truncation + 1) - m * m.saturating_sub(1) / 2 + (l - m)
}

impl Spectrum {
    pub fn zeros(truncation: usize) -> Self {
        Self {
            truncation,
            coeffs: vec![Complex64::new(0.0, 0.0); spec_len(truncation)],
        }
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    #[inline]
    pub fn index(&self, l: usize, m: usize) -> usize {
        spec_index(self.truncation, l, m)
    }

    pub fn get(&self, l: usize, m: usize) -> Complex64 {
        self.coeffs[self.index(l, m)]
    }

    pub fn set(&mut self, l: usize, m: usize, value: Complex64) {
        let i = self.index(l, m);
        self.coeffs[i] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Iterates `(l, m, flat_index)` in storage order.
    pub fn modes(&self) -> impl Iterator<Item = (usize, usize, usize)> {
        mode_iter(self.truncation)
    }

    /// Multiplies every degree-`l` coefficient by `f(l)`.
    pub fn scale_by_degree(&mut self, f: impl Fn(usize) -> f64) {
        for (l, _m, i) in mode_iter(self.truncation) {
            self.coeffs[i] *= f(l);
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &Spectrum) {
        assert_eq!(self.truncation, other.truncation);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Spectrum {
        Spectrum {
            truncation: self.truncation,
            coeffs: self.coeffs.iter().map(|c| c * alpha).collect(),
        }
    }

    /// `∫ f g dS²` for two real fields given by their coefficients.
    pub fn dot(&self, other: &Spectrum) -> f64 {
        assert_eq!(self.truncation, other.truncation);
        mode_iter(self.truncation)
            .map(|(_l, m, i)| {
                let p = (self.coeffs[i] * other.coeffs[i].conj()).re;
                if m == 0 {
                    p
                } else {
                    2.0 * p
                }
            })
            .sum()
    }

    /// Squared L² norm over the sphere (Parseval).
    pub fn norm_sqr(&self) -> f64 {
        self.dot(self)
    }
}

pub(crate) fn mode_iter(truncation: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..=truncation)
        .flat_map(move |m| (m..=truncation).map(move |l| (l, m)))
        .enumerate()
        .map(|(i, (l, m))| (l, m, i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_matches_storage_order() {
        for lt in [1usize, 2, 5, 15] {
            for (l, m, i) in mode_iter(lt) {
                assert_eq!(spec_index(lt, l, m), i, "L={lt} l={l} m={m}");
            }
            assert_eq!(mode_iter(lt).count(), spec_len(lt));
        }
    }
}
