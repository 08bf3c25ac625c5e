//! Cross-checks the log-domain RDP oracle against a compensated linear sum.

use qmgeo::privacy::rdp_oracle_scalar;

/// Neumaier summation.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            c += (sum - s) + t;
        } else {
            c += (t - s) + sum;
        }
        sum = s;
    }
    sum + c
}

fn direct(levels: usize, p: f64, alpha: f64, normalizer_exponent: usize, reversed_shift: usize) -> f64 {
    let q = 1.0 - p;
    let z = 1.0 - q.powi(normalizer_exponent as i32);
    let sum = compensated_sum((1..=levels).map(|i| {
        let fwd = p * q.powi(i as i32 - 1) / z;
        let bwd = p * q.powi((reversed_shift - i) as i32) / z;
        fwd.powf(alpha) * bwd.powf(1.0 - alpha)
    }));
    sum.ln() / (alpha - 1.0)
}

#[test]
fn log_domain_matches_compensated_sum() {
    for &levels in &[4usize, 8, 16, 32] {
        for &p in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            for &alpha in &[1.5, 2.0, 3.0, 8.0] {
                let o = rdp_oracle_scalar(levels, p, alpha).unwrap();
                // True reversal: P'(i) = P(R + 1 - i) = p q^(R - i) / (1 - q^R).
                let exact = direct(levels, p, alpha, levels, levels);
                assert!((o.exact - exact).abs() <= 1e-10 * exact.abs().max(1.0), "{levels} {p} {alpha}");
                let literal = direct(levels, p, alpha, levels - 1, levels + 1);
                let got = o.paper_literal.unwrap();
                assert!((got - literal).abs() <= 1e-10 * literal.abs().max(1.0), "{levels} {p} {alpha}");
            }
        }
    }
}

#[test]
fn frozen_values() {
    let o = rdp_oracle_scalar(8, 0.5, 2.0).unwrap();
    assert!((o.exact - 4.296328315700684).abs() < 1e-12);
    assert!((o.paper_literal.unwrap() - 147.43756151574803f64.ln()).abs() < 1e-12);
    let o3 = rdp_oracle_scalar(8, 0.5, 3.0).unwrap();
    assert!((o3.exact - 4.523287972457048).abs() < 1e-12);
}
