//! Small numeric helpers shared across modules.

/// Kahan–Babuška compensated accumulator. Level sums and inner products run
/// over up to ~10^5 terms of wildly different magnitude; plain summation is
/// accurate enough for most of them, but the acceptance tolerances (1e-12 on
/// total mass) leave little headroom, so the big reductions compensate.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Fixed interchange formatting: 17 significant digits, so that reading the
/// decimal back reproduces the exact f64 bit pattern.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}
