/// Normalized probabilists' Hermite polynomial ψ_n(ξ) = He_n(ξ)/√(n!).
///
/// Evaluated with the normalized three-term recurrence
/// ψ_{k+1} = (ξ ψ_k − √k ψ_{k−1}) / √(k+1), which avoids factorial overflow.
pub fn hermite_eval(order: usize, xi: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..order {
        let next = (xi * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// ψ_0(ξ) … ψ_p(ξ) in one pass.
pub fn hermite_all(max_order: usize, xi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_order + 1);
    out.push(1.0);
    if max_order >= 1 {
        out.push(xi);
    }
    for k in 1..max_order {
        let next = (xi * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

/// Univariate Hermite basis up to `max_order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermiteBasis {
    pub max_order: usize,
    /// When false, values are the classical He_n with ⟨He_n²⟩ = n!.
    pub normalized: bool,
}

impl HermiteBasis {
    pub fn new(max_order: usize) -> Self {
        Self {
            max_order,
            normalized: true,
        }
    }

    pub fn eval(&self, order: usize, xi: f64) -> f64 {
        let v = hermite_eval(order, xi);
        if self.normalized {
            v
        } else {
            v * (1..=order).map(|k| k as f64).product::<f64>().sqrt()
        }
    }

    /// ⟨ψ_n²⟩ under the standard Gaussian measure.
    pub fn norm_squared(&self, order: usize) -> f64 {
        if self.normalized {
            1.0
        } else {
            (1..=order).map(|k| k as f64).product()
        }
    }
}
