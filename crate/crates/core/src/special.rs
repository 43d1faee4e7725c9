//! Modified Bessel functions of the first kind, as needed by the von Mises family.

/// Ratios `I_n(κ)/I_0(κ)` for `n = 0..=nmax`.
///
/// Uses the backward recurrence for `r_n = I_n/I_{n-1}`,
/// `r_n = 1 / (2n/κ + r_{n+1})`, started far enough above `nmax` that
/// restarting twice as high changes no ratio by more than 1e-15 relative.
pub fn bessel_i_ratios(kappa: f64, nmax: usize) -> Vec<f64> {
    assert!(kappa >= 0.0 && kappa.is_finite(), "kappa must be finite and nonnegative");
    let mut out = vec![0.0; nmax + 1];
    out[0] = 1.0;
    if kappa == 0.0 || nmax == 0 {
        return out;
    }
    let mut start = nmax + 32 + (2.0 * kappa).ceil() as usize + (10.0 * kappa.sqrt()).ceil() as usize;
    let mut prev = ratios_from(kappa, nmax, start);
    loop {
        start *= 2;
        let next = ratios_from(kappa, nmax, start);
        let stable = prev
            .iter()
            .zip(&next)
            .all(|(a, b)| (a - b).abs() <= 1e-15 * b.abs().max(f64::MIN_POSITIVE));
        prev = next;
        if stable || start > 1 << 24 {
            break;
        }
    }
    out.copy_from_slice(&prev);
    out
}

fn ratios_from(kappa: f64, nmax: usize, start: usize) -> Vec<f64> {
    let mut r = vec![0.0; start + 2];
    for n in (1..=start).rev() {
        r[n] = 1.0 / (2.0 * n as f64 / kappa + r[n + 1]);
    }
    let mut out = vec![1.0; nmax + 1];
    for n in 1..=nmax {
        out[n] = out[n - 1] * r[n];
    }
    out
}

/// `ln I_0(κ)` from the power series `Σ (κ²/4)^k / (k!)²`, summed in log space.
pub fn ln_bessel_i0(kappa: f64) -> f64 {
    assert!(kappa >= 0.0 && kappa.is_finite());
    if kappa == 0.0 {
        return 0.0;
    }
    let x = 2.0 * (kappa / 2.0).ln();
    // term_k = exp(k x - 2 ln k!)
    let mut logs = Vec::new();
    let mut ln_fact = 0.0;
    let mut k = 0usize;
    let mut best = f64::NEG_INFINITY;
    loop {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        let lt = k as f64 * x - 2.0 * ln_fact;
        best = best.max(lt);
        logs.push(lt);
        if lt < best - 40.0 && k as f64 > kappa {
            break;
        }
        k += 1;
    }
    best + logs.iter().map(|l| (l - best).exp()).sum::<f64>().ln()
}

/// `I_0(κ)`; overflows to infinity beyond κ ≈ 713.
pub fn bessel_i0(kappa: f64) -> f64 {
    ln_bessel_i0(kappa).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 50-digit mpmath evaluations.
    #[test]
    fn i0_known_values() {
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_3).abs() < 1e-15);
        assert!((bessel_i0(5.0) / 27.239_871_823_604_447 - 1.0).abs() < 1e-14);
        assert!((ln_bessel_i0(100.0) - 96.779_732_689_942_58).abs() < 1e-11);
    }

    #[test]
    fn ratios_match_series() {
        // I_1(1)/I_0(1) and I_2(1)/I_0(1)
        let r = bessel_i_ratios(1.0, 2);
        assert!((r[1] - 0.446_389_965_896_534_5).abs() < 1e-15);
        assert!((r[2] - 0.107_220_068_206_930_99).abs() < 1e-15);
    }

    #[test]
    fn ratios_satisfy_recurrence() {
        for &kappa in &[0.01, 0.5, 3.0, 40.0, 400.0] {
            let r = bessel_i_ratios(kappa, 30);
            for n in 1..30 {
                // I_{n-1} - I_{n+1} = (2n/κ) I_n
                let lhs = r[n - 1] - r[n + 1];
                let rhs = 2.0 * n as f64 / kappa * r[n];
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-300), "kappa={kappa} n={n}");
            }
        }
    }

    #[test]
    fn zero_concentration_is_uniform() {
        assert_eq!(bessel_i_ratios(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
    }
}
