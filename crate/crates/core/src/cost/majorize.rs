use crate::error::{Error, Result};

/// Whether the nonincreasing tuple `x` majorizes the nonincreasing tuple `y`:
/// every prefix sum of `x` dominates that of `y` and the totals agree.
pub fn majorizes(x: &[f64], y: &[f64]) -> Result<bool> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "majorization needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    for (name, t) in [("x", x), ("y", y)] {
        if t.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid(format!("tuple {name} is not sorted nonincreasing")));
        }
    }
    let scale = x.iter().chain(y).fold(1.0f64, |a, v| a.max(v.abs())) * x.len().max(1) as f64;
    let tol = 1e-12 * scale;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sx += a;
        sy += b;
        if sx < sy - tol {
            return Ok(false);
        }
    }
    Ok((sx - sy).abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_pairs() {
        assert!(majorizes(&[3.0, 1.0], &[2.0, 2.0]).unwrap());
        assert!(!majorizes(&[2.0, 2.0], &[3.0, 1.0]).unwrap());
        assert!(!majorizes(&[3.0, 1.0], &[2.0, 1.0]).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(majorizes(&[1.0, 3.0], &[2.0, 2.0]).is_err());
        assert!(majorizes(&[3.0], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn extreme_tuple_majorizes_interior_tuple() {
        // (S, S, m, m) against sorted (S - m3, S - m4, m + m3, m + m4)
        let (m, m3, m4) = (0.5, 0.7, 1.1);
        let s = m + m3 + m4;
        let x = [s, s, m, m];
        let mut y = vec![s - m3, s - m4, m + m3, m + m4];
        y.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(majorizes(&x, &y).unwrap());
    }
}
