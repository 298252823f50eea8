use serde::{Deserialize, Serialize};

use super::mesh::{DirichletBc, Mesh, NeumannBc};
use crate::error::{Error, Result};

/// Young's modulus along the bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum YoungsProfile {
    Constant { e: f64 },
    /// E(X) = E₀ e^{βX}
    Exponential { e0: f64, beta: f64 },
}

/// Axially loaded bar fixed at X = 0 with a tip load at X = L.
/// Units: mm, mm², kN, kN/mm, GPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarProblem {
    pub length: f64,
    pub area: f64,
    pub tip_load: f64,
    pub line_load: f64,
    pub profile: YoungsProfile,
}

impl BarProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.area > 0.0) {
            return Err(Error::InvalidInput(format!(
                "bar needs positive length and area, got L = {}, A = {}",
                self.length, self.area
            )));
        }
        let ok = match self.profile {
            YoungsProfile::Constant { e } => e > 0.0 && e.is_finite(),
            YoungsProfile::Exponential { e0, beta } => e0 > 0.0 && e0.is_finite() && beta.is_finite(),
        };
        if !ok || !self.tip_load.is_finite() || !self.line_load.is_finite() {
            return Err(Error::InvalidInput(format!("invalid bar parameters {self:?}")));
        }
        Ok(())
    }

    /// Uniform mesh of `n_elements` linear bars carrying this problem's loads.
    pub fn mesh(&self, n_elements: usize) -> Mesh {
        bar_mesh(self.length, self.area, n_elements, self.tip_load, self.line_load)
    }
}

/// Uniform 1D mesh on [0, L], fixed at node 0, tip force `tip_load` on the last node
/// and distributed load `line_load` per unit length.
pub fn bar_mesh(length: f64, area: f64, n_elements: usize, tip_load: f64, line_load: f64) -> Mesh {
    let n = n_elements.max(1);
    let nodes = (0..=n).map(|i| [length * i as f64 / n as f64, 0.0]).collect();
    let elements = (0..n).map(|e| vec![e, e + 1]).collect();
    Mesh {
        dim: 1,
        nodes,
        elements,
        dirichlet: vec![DirichletBc { node: 0, component: 0, value: 0.0 }],
        neumann: vec![NeumannBc {
            element: n - 1,
            edge: 1,
            traction: [tip_load / area, 0.0],
        }],
        body_force: [line_load / area, 0.0],
        section: area,
    }
}

// 1 - e^{-z}(1 + z), accurate for small z
fn one_minus_exp_poly(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for n in 1..=8u32 {
            term *= z / n as f64;
            if n >= 2 {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sum += sign * (n - 1) as f64 * term;
            }
        }
        sum
    } else {
        1.0 - (-z).exp() * (1.0 + z)
    }
}

/// Closed-form displacement of the bar at coordinate `x`.
///
/// Homogeneous: u = (F X + f(L X − X²/2)) / (E A).
/// Exponential: u = ∫₀ˣ (F + f(L − s)) e^{−βs} / (E₀ A) ds, which for f = 0 is
/// F (1 − e^{−βX}) / (E₀ β A).
pub fn analytic_bar(problem: &BarProblem, x: f64) -> Result<f64> {
    problem.validate()?;
    let l = problem.length;
    if !(0.0..=l).contains(&x) {
        return Err(Error::InvalidInput(format!("coordinate {x} outside [0, {l}]")));
    }
    let (f_tip, q, a) = (problem.tip_load, problem.line_load, problem.area);
    match problem.profile {
        YoungsProfile::Constant { e } => Ok((f_tip * x + q * (l * x - 0.5 * x * x)) / (e * a)),
        YoungsProfile::Exponential { e0, beta } => {
            let z = beta * x;
            if (beta * l).abs() > 700.0 {
                return Err(Error::InvalidInput(format!(
                    "exponential Young's modulus profile under/overflows: beta·L = {}",
                    beta * l
                )));
            }
            let u = if beta == 0.0 {
                (f_tip * x + q * (l * x - 0.5 * x * x)) / (e0 * a)
            } else {
                // ∫₀ˣ e^{−βs} ds = −expm1(−z)/β ; ∫₀ˣ s e^{−βs} ds = (1 − e^{−z}(1+z))/β²
                let i0 = -(-z).exp_m1() / beta;
                let i1 = one_minus_exp_poly(z) / (beta * beta);
                ((f_tip + q * l) * i0 - q * i1) / (e0 * a)
            };
            if !u.is_finite() {
                return Err(Error::InvalidInput(format!("analytic bar displacement not finite at X = {x}")));
            }
            Ok(u)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homogeneous() -> BarProblem {
        BarProblem {
            length: 100.0,
            area: 20.0,
            tip_load: 800.0,
            line_load: 0.0,
            profile: YoungsProfile::Constant { e: 200.0 },
        }
    }

    #[test]
    fn tip_and_root() {
        let p = homogeneous();
        assert_eq!(analytic_bar(&p, 0.0).unwrap(), 0.0);
        assert!((analytic_bar(&p, 100.0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn small_beta_limit() {
        for &q in &[0.0, 3.0] {
            let mut p = homogeneous();
            p.line_load = q;
            let ho = analytic_bar(&p, 70.0).unwrap();
            p.profile = YoungsProfile::Exponential { e0: 200.0, beta: 1e-9 };
            let inho = analytic_bar(&p, 70.0).unwrap();
            assert!(((inho - ho) / ho).abs() < 1e-6, "{inho} vs {ho}");
        }
    }

    #[test]
    fn exponential_matches_closed_form_and_quadrature() {
        let p = BarProblem {
            profile: YoungsProfile::Exponential { e0: 200.0, beta: 0.015 },
            ..homogeneous()
        };
        let x = 60.0;
        let closed = 800.0 / (200.0 * 0.015 * 20.0) * (1.0 - (-0.015f64 * x).exp());
        assert!((analytic_bar(&p, x).unwrap() - closed).abs() < 1e-12);
        // with a line load, compare against composite Simpson
        let p = BarProblem { line_load: 2.0, ..p };
        let n = 2000;
        let h = x / n as f64;
        let g = |s: f64| (800.0 + 2.0 * (100.0 - s)) * (-0.015 * s).exp() / (200.0 * 20.0);
        let mut sum = g(0.0) + g(x);
        for i in 1..n {
            sum += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
        }
        let simpson = sum * h / 3.0;
        assert!((analytic_bar(&p, x).unwrap() - simpson).abs() < 1e-10);
    }

    #[test]
    fn underflowing_profile_is_rejected() {
        let p = BarProblem {
            profile: YoungsProfile::Exponential { e0: 200.0, beta: 10.0 },
            ..homogeneous()
        };
        assert!(analytic_bar(&p, 50.0).is_err());
    }
}
