use crate::scalar::Scalar;

/// Cosine annealing from `start` (at `t = 0`) to `end` (at `t = total`).
///
/// Works in either direction, so it also serves increasing schedules such as
/// the weight decay. Steps past `total` stay at `end`.
pub fn cosine_schedule<T: Scalar>(t: usize, total: usize, start: T, end: T) -> T {
    let total = total.max(1);
    if t >= total {
        return end;
    }
    if t == 0 {
        return start;
    }
    let frac = T::of_usize(t) / T::of_usize(total);
    end + T::of(0.5) * (start - end) * (T::one() + (T::PI() * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(cosine_schedule(0, 1000, 1e-4, 1e-6), 1e-4);
        assert_eq!(cosine_schedule(1000, 1000, 1e-4, 1e-6), 1e-6);
        assert_eq!(cosine_schedule(5000, 1000, 1e-4, 1e-6), 1e-6);
        assert!((cosine_schedule(500, 1000, 0.05f64, 0.5) - 0.275).abs() < 1e-15);
    }

    #[test]
    fn monotone_both_directions() {
        let t = 257;
        let lr: Vec<f64> = (0..=t).map(|s| cosine_schedule(s, t, 1e-4, 1e-6)).collect();
        let wd: Vec<f64> = (0..=t).map(|s| cosine_schedule(s, t, 0.05, 0.5)).collect();
        assert!(lr.windows(2).all(|w| w[1] <= w[0]));
        assert!(wd.windows(2).all(|w| w[1] >= w[0]));
    }
}
