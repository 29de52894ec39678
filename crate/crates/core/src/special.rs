//! Log-gamma and polygamma functions needed by the beta family.

use crate::Scalar;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural logarithm of |Γ(x)| (Lanczos approximation, reflection below 1/2).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    if x < half {
        let pi = T::of(std::f64::consts::PI);
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut a = T::of(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a = a + T::of(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::of(LANCZOS_G) + half;
    T::of(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + a.ln()
}

/// ψ(x) for x > 0: upward recurrence to x ≥ 10, then the asymptotic series.
pub fn digamma<T: Scalar>(x: T) -> T {
    let mut x = x;
    let mut acc = T::zero();
    let cutoff = T::of(10.0);
    while x < cutoff {
        acc = acc - x.recip();
        x = x + T::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = inv2
        * (T::of(1.0 / 12.0)
            - inv2
                * (T::of(1.0 / 120.0)
                    - inv2 * (T::of(1.0 / 252.0) - inv2 * (T::of(1.0 / 240.0) - inv2 * T::of(1.0 / 132.0)))));
    acc + x.ln() - T::of(0.5) * inv - series
}

/// ψ'(x) for x > 0, same scheme as [`digamma`].
pub fn trigamma<T: Scalar>(x: T) -> T {
    let mut x = x;
    let mut acc = T::zero();
    let cutoff = T::of(10.0);
    while x < cutoff {
        acc = acc + (x * x).recip();
        x = x + T::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let tail = inv
        + T::of(0.5) * inv2
        + inv
            * inv2
            * (T::of(1.0 / 6.0)
                - inv2
                    * (T::of(1.0 / 30.0)
                        - inv2 * (T::of(1.0 / 42.0) - inv2 * (T::of(1.0 / 30.0) - inv2 * T::of(5.0 / 66.0)))));
    acc + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0_f64).abs() < 1e-14);
        assert!(ln_gamma(2.0_f64).abs() < 1e-14);
        assert!((ln_gamma(0.5_f64) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        assert!((ln_gamma(10.0_f64) - 362_880.0_f64.ln()).abs() < 1e-12);
        // Γ(0.1) = 9.513507698668732
        assert!((ln_gamma(0.1_f64) - 9.513_507_698_668_732_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn digamma_known_values() {
        assert!((digamma(1.0_f64) + EULER_GAMMA).abs() < 1e-12);
        assert!((digamma(0.5_f64) + EULER_GAMMA + 2.0 * 2.0_f64.ln()).abs() < 1e-12);
        // ψ(x+1) = ψ(x) + 1/x
        for &x in &[0.01, 0.3, 2.7, 13.0, 250.0] {
            let lhs: f64 = digamma(x + 1.0);
            assert!((lhs - digamma(x) - 1.0 / x).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn digamma_matches_ln_gamma_derivative() {
        for &x in &[0.2_f64, 1.3, 4.0, 7.5, 40.0] {
            let h = 1e-5 * x;
            let fd = (ln_gamma(x + h) - ln_gamma(x - h)) / (2.0 * h);
            assert!((fd - digamma(x)).abs() < 1e-7 * (1.0 + fd.abs()), "x={x}");
        }
    }

    #[test]
    fn trigamma_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0_f64) - pi2_6).abs() < 1e-12);
        assert!((trigamma(0.5_f64) - 3.0 * pi2_6).abs() < 1e-11);
        for &x in &[0.3_f64, 2.0, 9.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((fd - trigamma(x)).abs() < 1e-6 * (1.0 + fd.abs()), "x={x}");
        }
    }
}
