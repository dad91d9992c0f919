//! Triplet margin loss on raw Euclidean distances.

use num_traits::Float;

fn dist<T: Float>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b)).sqrt()
}

/// `max(|a - p| - |a - n| + margin, 0)`.
pub fn triplet_loss<T: Float>(a: &[T], p: &[T], n: &[T], margin: T) -> T {
    debug_assert!(a.len() == p.len() && a.len() == n.len());
    (dist(a, p) - dist(a, n) + margin).max(T::zero())
}

/// Mean of [`triplet_loss`] over a batch.
pub fn batch_triplet_loss<T: Float>(batch: &[(&[T], &[T], &[T])], margin: T) -> T {
    if batch.is_empty() {
        return T::zero();
    }
    let total = batch.iter().fold(T::zero(), |acc, (a, p, n)| acc + triplet_loss(a, p, n, margin));
    total / T::from(batch.len()).unwrap()
}

/// Gradient of [`triplet_loss`] w.r.t. `(a, p, n)`. Zero on the inactive side of the hinge;
/// a zero-length distance contributes a zero subgradient.
pub fn triplet_loss_grad<T: Float>(a: &[T], p: &[T], n: &[T], margin: T) -> (Vec<T>, Vec<T>, Vec<T>) {
    let d = a.len();
    let mut ga = vec![T::zero(); d];
    let mut gp = vec![T::zero(); d];
    let mut gn = vec![T::zero(); d];
    let (dap, dan) = (dist(a, p), dist(a, n));
    if dap - dan + margin <= T::zero() {
        return (ga, gp, gn);
    }
    for i in 0..d {
        let up = if dap > T::zero() { (a[i] - p[i]) / dap } else { T::zero() };
        let un = if dan > T::zero() { (a[i] - n[i]) / dan } else { T::zero() };
        ga[i] = up - un;
        gp[i] = -up;
        gn[i] = un;
    }
    (ga, gp, gn)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        assert_eq!(triplet_loss(&[0.0, 0.0], &[0.0, 0.0], &[2.0, 0.0], 1.0), 0.0);
        assert_eq!(triplet_loss(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0], 1.0), 1.0);
        assert_eq!(triplet_loss(&[0.0, 0.0], &[3.0, 0.0], &[1.0, 0.0], 1.0), 3.0);
    }

    #[test]
    fn batch_is_mean() {
        let z = [0.0f64, 0.0];
        let far = [3.0f64, 0.0];
        let near = [1.0f64, 0.0];
        let l = batch_triplet_loss(&[(&z[..], &z[..], &z[..]), (&z[..], &far[..], &near[..])], 1.0);
        assert_eq!(l, 2.0);
    }
}
