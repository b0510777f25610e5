use crate::Real;

/// Area-normalized Lorentzian `A (Γ/2π) / ((f - f0)² + (Γ/2)²)`.
pub fn lorentzian<T: Real>(f: T, center: T, fwhm: T, area: T) -> T {
    let hw = fwhm * T::of(0.5);
    let x = f - center;
    area * hw / (T::of(std::f64::consts::PI) * (x * x + hw * hw))
}

/// Value and partial derivatives `(value, ∂/∂center, ∂/∂fwhm, ∂/∂area)`.
pub fn lorentzian_grad<T: Real>(f: T, center: T, fwhm: T, area: T) -> (T, T, T, T) {
    let hw = fwhm * T::of(0.5);
    let x = f - center;
    let den = x * x + hw * hw;
    let pi = T::of(std::f64::consts::PI);
    let shape = hw / (pi * den);
    let v = area * shape;
    let two = T::of(2.0);
    let d_center = v * two * x / den;
    // d/dΓ of hw/den with hw = Γ/2
    let d_fwhm = area * T::of(0.5) * (x * x - hw * hw) / (pi * den * den);
    (v, d_center, d_fwhm, shape)
}

/// Peak height of an area-normalized Lorentzian.
pub fn peak_height<T: Real>(fwhm: T, area: T) -> T {
    T::of(2.0) * area / (T::of(std::f64::consts::PI) * fwhm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_area_and_height() {
        let (c, w) = (3.0, 0.7);
        // ∫ over ±L is (2/π) atan(2L/Γ)
        let l = 200.0;
        let n = 400_000;
        let h = 2.0 * l / n as f64;
        let s: f64 = (0..=n)
            .map(|k| {
                let f = c - l + k as f64 * h;
                let wgt = if k == 0 || k == n { 0.5 } else { 1.0 };
                wgt * lorentzian(f, c, w, 1.0)
            })
            .sum::<f64>()
            * h;
        let expect = 2.0 / std::f64::consts::PI * (2.0 * l / w).atan();
        assert!((s - expect).abs() < 1e-7);
        assert!((lorentzian(c, c, w, 2.5) - peak_height(w, 2.5)).abs() < 1e-14);
        assert!((lorentzian(c + w / 2.0, c, w, 1.0) - 0.5 * peak_height(w, 1.0)).abs() < 1e-14);
        assert!((lorentzian(1.0f32, 1.0, 2.0, 1.0) - 1.0 / std::f32::consts::PI).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn gradient_matches_differences(
            f in -10.0f64..10.0,
            c in -5.0f64..5.0,
            w in 0.2f64..5.0,
            a in -3.0f64..3.0,
        ) {
            let (v, dc, dw, da) = lorentzian_grad(f, c, w, a);
            prop_assert!((v - lorentzian(f, c, w, a)).abs() < 1e-14);
            let h = 1e-6;
            let fd = |g: &dyn Fn(f64) -> f64| (g(h) - g(-h)) / (2.0 * h);
            let scale = 1.0 + v.abs() / w;
            prop_assert!((dc - fd(&|e| lorentzian(f, c + e, w, a))).abs() < 1e-6 * scale);
            prop_assert!((dw - fd(&|e| lorentzian(f, c, w + e, a))).abs() < 1e-6 * scale);
            prop_assert!((da - fd(&|e| lorentzian(f, c, w, a + e))).abs() < 1e-6 * scale);
        }
    }
}
