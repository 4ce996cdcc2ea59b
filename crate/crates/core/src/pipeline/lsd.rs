use crate::error::{Error, Result};

/// Log-spectral distance in dB between two dB spectra over bins `k1..=k2`
/// (the full range when `range` is `None`).
pub fn lsd(h_db: &[f64], h_hat_db: &[f64], range: Option<(usize, usize)>) -> Result<f64> {
    if h_db.len() != h_hat_db.len() || h_db.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "LSD needs equal non-empty spectra, got {} and {} bins",
            h_db.len(),
            h_hat_db.len()
        )));
    }
    let (k1, k2) = range.unwrap_or((0, h_db.len() - 1));
    if k1 > k2 || k2 >= h_db.len() {
        return Err(Error::InvalidArgument(format!(
            "bin range {k1}..={k2} outside 0..{}",
            h_db.len()
        )));
    }
    let mut acc = 0.0;
    for k in k1..=k2 {
        let (a, b) = (h_db[k], h_hat_db[k]);
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite spectrum value at bin {k}"
            )));
        }
        let d = a - b;
        acc += d * d;
    }
    Ok((acc / (k2 - k1 + 1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(lsd(&[1.0, 2.0], &[1.0, 2.0], None).unwrap(), 0.0);
        let h = vec![-3.0; 173];
        let lower: Vec<f64> = h.iter().map(|v| v - 20.0).collect();
        assert!((lsd(&h, &lower, None).unwrap() - 20.0).abs() < 1e-12);
        let v = lsd(&[0.0, 6.0], &[3.0, 2.0], None).unwrap();
        assert!((v - (12.5f64).sqrt()).abs() < 1e-12);
        assert!((v - 3.5355).abs() < 1e-4);
    }

    #[test]
    fn sub_range_and_errors() {
        let a = [0.0, 1.0, 5.0];
        let b = [0.0, 1.0, 1.0];
        assert_eq!(lsd(&a, &b, Some((0, 1))).unwrap(), 0.0);
        assert_eq!(lsd(&a, &b, Some((2, 2))).unwrap(), 4.0);
        assert!(lsd(&a, &b, Some((2, 1))).is_err());
        assert!(lsd(&a, &b, Some((0, 3))).is_err());
        assert!(lsd(&a, &b[..2], None).is_err());
        assert!(lsd(&[f64::NAN], &[0.0], None).is_err());
    }
}
