//! Initial magnetization presets.

use std::f64::consts::PI;

use sllg_core::fem::interpolate_nodal;
use sllg_core::{NodalField3, P1Space, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    /// Constant unit direction.
    Uniform(Vec3),
    /// m = (sin φ, 0, cos φ) with φ = a Π_d cos(π x_d); ∂_n m = 0 on the unit cube.
    NeumannWave { amplitude: f64 },
    /// Hedgehog-like bump: e₃ at the centre of the x₁x₂ square, −e₃ outside
    /// the disc of radius ½.
    HedgehogBump,
}

impl InitialData {
    pub fn eval(&self, x: &Vec3, dim: usize) -> Vec3 {
        match *self {
            InitialData::Uniform(d) => d,
            InitialData::NeumannWave { amplitude } => {
                let phi = amplitude * (0..dim).map(|d| (PI * x[d]).cos()).product::<f64>();
                Vec3::new(phi.sin(), 0.0, phi.cos())
            }
            InitialData::HedgehogBump => {
                let (x1, x2) = (x[0] - 0.5, x[1] - 0.5);
                let r2 = x1 * x1 + x2 * x2;
                let a = if r2 <= 0.25 {
                    (1.0 - 2.0 * r2.sqrt()).powi(4)
                } else {
                    0.0
                };
                let den = a * a + r2;
                if den == 0.0 {
                    return Vec3::z();
                }
                Vec3::new(2.0 * a * x1, 2.0 * a * x2, a * a - r2) / den
            }
        }
    }

    /// Nodal interpolant on `space`.
    pub fn interpolate(&self, space: &P1Space) -> Result<NodalField3> {
        let dim = space.dim();
        interpolate_nodal(space, |x| self.eval(x, dim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_unit() {
        let presets = [
            InitialData::Uniform(Vec3::x()),
            InitialData::NeumannWave { amplitude: 1.2 },
            InitialData::HedgehogBump,
        ];
        for p in presets {
            for i in 0..=10 {
                for j in 0..=10 {
                    let x = Vec3::new(i as f64 / 10.0, j as f64 / 10.0, 0.3);
                    assert!((p.eval(&x, 3).norm() - 1.0).abs() < 1e-14, "{p:?} at {x:?}");
                }
            }
        }
        assert_eq!(
            InitialData::HedgehogBump.eval(&Vec3::new(0.5, 0.5, 0.0), 2),
            Vec3::z()
        );
        assert_eq!(
            InitialData::HedgehogBump.eval(&Vec3::new(0.9, 0.1, 0.0), 2),
            -Vec3::z()
        );
    }
}
