//! Enumeration of set partitions as restricted growth strings.
//!
//! A restricted growth string `a` of length `n` has `a[0] = 0` and
//! `a[i] <= max(a[..i]) + 1`; these are exactly the canonical labellings of
//! the partitions of `n` items, produced here in lexicographic order.

/// Iterator over all canonical labellings of `n` items.
#[derive(Debug, Clone)]
pub struct RestrictedGrowth {
    current: Vec<usize>,
    /// `prefix_max[i]` = max of `current[..=i]`.
    prefix_max: Vec<usize>,
    done: bool,
}

impl RestrictedGrowth {
    pub fn new(n: usize) -> Self {
        Self {
            current: vec![0; n],
            prefix_max: vec![0; n],
            done: n == 0,
        }
    }

    fn advance(&mut self) {
        let n = self.current.len();
        for i in (1..n).rev() {
            if self.current[i] <= self.prefix_max[i - 1] {
                self.current[i] += 1;
                self.prefix_max[i] = self.prefix_max[i - 1].max(self.current[i]);
                for j in i + 1..n {
                    self.current[j] = 0;
                    self.prefix_max[j] = self.prefix_max[i];
                }
                return;
            }
        }
        self.done = true;
    }
}

impl Iterator for RestrictedGrowth {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        self.advance();
        Some(out)
    }
}

/// Bell number `B(n)`, the number of partitions of `n` items.
pub fn bell(n: usize) -> u128 {
    // Bell triangle.
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for &x in &row {
            let last = *next.last().unwrap();
            next.push(last + x);
        }
        row = next;
    }
    row[0]
}
