//! Truncated Fourier series used as JSON-describable periodic data.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::grid::Point;

/// One mode `a·cos(2π k·x) + b·sin(2π k·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    /// Integer wave vector; one entry per spatial axis.
    pub k: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// A real periodic function on the torus given by finitely many modes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FourierSeries {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<FourierTerm>,
}

impl FourierSeries {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    /// `constant + Σ (cos, sin)` modes along the first axis.
    pub fn one_d(constant: f64, modes: &[(i32, f64, f64)]) -> Self {
        Self {
            constant,
            terms: modes
                .iter()
                .map(|&(k, c, s)| FourierTerm {
                    k: vec![k],
                    cos: c,
                    sin: s,
                })
                .collect(),
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let mut v = self.constant;
        for t in &self.terms {
            let phase: f64 = t
                .k
                .iter()
                .zip(x.iter())
                .map(|(&k, &xi)| k as f64 * xi)
                .sum::<f64>()
                * 2.0
                * PI;
            if t.cos != 0.0 {
                v += t.cos * phase.cos();
            }
            if t.sin != 0.0 {
                v += t.sin * phase.sin();
            }
        }
        v
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
    }

    /// `|constant| + Σ(|cos| + |sin|)`, an upper bound for `sup |f|`.
    pub fn abs_bound(&self) -> f64 {
        self.constant.abs() + self.terms.iter().map(|t| t.cos.abs() + t.sin.abs()).sum::<f64>()
    }
}

/// A positive weight on gradient directions, `c + Σ a_k cos(kθ) + b_k sin(kθ)`
/// where θ is the polar angle of the direction (θ = 0 for +e₁, π for −e₁).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalWeight {
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl DirectionalWeight {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    pub fn at_angle(&self, theta: f64) -> f64 {
        let mut v = self.constant;
        for (k, a) in self.cos.iter().enumerate() {
            v += a * ((k + 1) as f64 * theta).cos();
        }
        for (k, b) in self.sin.iter().enumerate() {
            v += b * ((k + 1) as f64 * theta).sin();
        }
        v
    }

    /// Derivative with respect to the angle.
    pub fn angle_derivative(&self, theta: f64) -> f64 {
        let mut v = 0.0;
        for (k, a) in self.cos.iter().enumerate() {
            let kk = (k + 1) as f64;
            v -= a * kk * (kk * theta).sin();
        }
        for (k, b) in self.sin.iter().enumerate() {
            let kk = (k + 1) as f64;
            v += b * kk * (kk * theta).cos();
        }
        v
    }

    /// Smallest value over 720 sampled angles.
    pub fn sampled_min(&self) -> f64 {
        (0..720)
            .map(|i| self.at_angle(i as f64 * PI / 360.0))
            .fold(f64::INFINITY, f64::min)
    }
}
