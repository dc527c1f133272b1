//! Small dense-vector helpers over `Vec<f64>` coordinates.

pub type Point = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Point {
    a.iter().map(|x| x * s).collect()
}

/// `acc += s * v`
pub fn axpy(acc: &mut [f64], s: f64, v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += s * x;
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Unit vector along `v`, or `None` for the zero vector.
pub fn unit(v: &[f64]) -> Option<Point> {
    let n = norm(v);
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

pub fn zeros(d: usize) -> Point {
    vec![0.0; d]
}

pub fn basis(d: usize, i: usize) -> Point {
    let mut e = zeros(d);
    e[i] = 1.0;
    e
}

/// Largest pairwise distance among `points`.
pub fn diameter<'a>(points: impl IntoIterator<Item = &'a Point>) -> f64 {
    let pts: Vec<&Point> = points.into_iter().collect();
    let mut best = 0.0f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            best = best.max(distance(a, b));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_of_zero_is_none() {
        assert!(unit(&[0.0, 0.0]).is_none());
        assert_eq!(unit(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
    }

    #[test]
    fn diameter_of_square() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
        assert!((diameter(&pts) - 2f64.sqrt()).abs() < 1e-15);
    }
}
