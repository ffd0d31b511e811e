//! Tolerances, truncation caps and finite-difference steps, read from one file.

use crate::theta::ThetaConfig;
use serde::{Deserialize, Serialize};

/// Pass thresholds of the verification checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub normalization: f64,
    pub determinant: f64,
    pub monodromy: f64,
    pub product: f64,
    pub exponents: f64,
    pub residue_exponents: f64,
    pub schlesinger: f64,
    pub tau: f64,
    pub thomae: f64,
    pub fay: f64,
    pub szego_bergmann: f64,
    pub heat: f64,
    pub quasi_periodicity: f64,
    pub rauch: f64,
    pub anti_holomorphic: f64,
    pub szego_variation: f64,
    pub compat: f64,
    pub sheet_sum: f64,
    pub prime_slope: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            normalization: 1e-10,
            determinant: 1e-9,
            monodromy: 1e-8,
            product: 1e-9,
            exponents: 1e-8,
            residue_exponents: 1e-7,
            schlesinger: 1e-5,
            tau: 1e-5,
            thomae: 1e-7,
            fay: 1e-8,
            szego_bergmann: 1e-9,
            heat: 1e-6,
            quasi_periodicity: 1e-11,
            rauch: 1e-6,
            anti_holomorphic: 1e-8,
            szego_variation: 1e-5,
            compat: 1e-4,
            sheet_sum: 1e-10,
            prime_slope: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub theta: ThetaConfig,
    pub tol: Tolerances,
    /// Step for λ_m-derivatives; `None` means 1e-4 × the size of the configuration.
    pub fd_step: Option<f64>,
    /// Step for the Rauch checks on B.
    pub rauch_step: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config { theta: ThetaConfig::default(), tol: Tolerances::default(), fd_step: None, rauch_step: 1e-5 }
    }
}
