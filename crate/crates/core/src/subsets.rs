//! Lexicographic enumeration of fixed-size index subsets.

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// `ln C(n, k)` computed as a sum of logarithms.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// Advances `idx` to the next size-`k` subset of `0..n` in lexicographic order.
/// Returns `false` once `idx` was the last subset.
pub fn next_subset(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in (i + 1)..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Iterator over size-`k` subsets of `0..n` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Subsets {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Subsets {
    pub fn new(n: usize, k: usize) -> Self {
        Subsets {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Subsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let mut nxt = out.clone();
        self.current = if next_subset(&mut nxt, self.n) {
            Some(nxt)
        } else {
            None
        };
        Some(out)
    }
}

/// Size-`k` subsets of `pool` (in the pool's order), mapped through the pool.
pub fn subsets_of(pool: &[usize], k: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
    Subsets::new(pool.len(), k).map(move |idx| idx.iter().map(|&i| pool[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_binomial() {
        for n in 0..9 {
            for k in 0..=n {
                assert_eq!(Subsets::new(n, k).count() as u128, binomial(n, k));
            }
        }
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(Subsets::new(3, 4).count(), 0);
    }

    #[test]
    fn lexicographic_order() {
        let all: Vec<Vec<usize>> = Subsets::new(4, 2).collect();
        assert_eq!(
            all,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_subset_once() {
        assert_eq!(
            Subsets::new(5, 0).collect::<Vec<_>>(),
            vec![Vec::<usize>::new()]
        );
    }

    #[test]
    fn log_binomial() {
        assert!((ln_binomial(10, 3) - 120f64.ln()).abs() < 1e-13);
        assert_eq!(ln_binomial(4, 0), 0.0);
        assert_eq!(binomial(100, 50), 100891344545564193334812497256);
    }
}
