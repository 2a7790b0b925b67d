//! Named experiment presets (`1-left` through `4-right`, plus two appendix sweeps).
//!
//! The numbered presets use `(n, p) = (10, 3)`. Left variants sweep `σ₁(M)`
//! over `0..=20` with `σ₂ = σ₃ = 0`; right variants fix `σ₁ = 20, σ₃ = 0` and
//! sweep `σ₂`. Presets 1 and 2 compare `em` and `stein`, 3 and 4 their positive
//! parts. The appendix presets sweep `n` at `σ_k(M) = 50` for all `k`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::montecarlo::{Grid, SweepSpec};
use crate::spectral::ProblemDims;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    OneLeft,
    OneRight,
    TwoLeft,
    TwoRight,
    ThreeLeft,
    ThreeRight,
    FourLeft,
    FourRight,
    AppendixLeft,
    AppendixRight,
}

impl Figure {
    pub const ALL: [Figure; 10] = [
        Figure::OneLeft,
        Figure::OneRight,
        Figure::TwoLeft,
        Figure::TwoRight,
        Figure::ThreeLeft,
        Figure::ThreeRight,
        Figure::FourLeft,
        Figure::FourRight,
        Figure::AppendixLeft,
        Figure::AppendixRight,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Figure::OneLeft => "1-left",
            Figure::OneRight => "1-right",
            Figure::TwoLeft => "2-left",
            Figure::TwoRight => "2-right",
            Figure::ThreeLeft => "3-left",
            Figure::ThreeRight => "3-right",
            Figure::FourLeft => "4-left",
            Figure::FourRight => "4-right",
            Figure::AppendixLeft => "appendix-left",
            Figure::AppendixRight => "appendix-right",
        }
    }

    pub fn is_appendix(&self) -> bool {
        matches!(self, Figure::AppendixLeft | Figure::AppendixRight)
    }

    fn is_left(&self) -> bool {
        matches!(
            self,
            Figure::OneLeft | Figure::TwoLeft | Figure::ThreeLeft | Figure::FourLeft | Figure::AppendixLeft
        )
    }

    fn estimators(&self) -> [&'static str; 2] {
        match self {
            Figure::ThreeLeft | Figure::ThreeRight | Figure::FourLeft | Figure::FourRight => ["em+", "stein+"],
            _ => ["em", "stein"],
        }
    }

    /// The sweep behind a preset; `None` for the appendix presets.
    pub fn sweep(&self, reps: usize, seed: u64) -> Option<SweepSpec> {
        if self.is_appendix() {
            return None;
        }
        let (axis, fixed) = if self.is_left() {
            (0, vec![0.0, 0.0, 0.0])
        } else {
            (1, vec![20.0, 0.0, 0.0])
        };
        Some(SweepSpec {
            dims: ProblemDims { n: 10, p: 3 },
            estimators: self.estimators().iter().map(|s| s.to_string()).collect(),
            axis,
            fixed,
            grid: Grid {
                start: 0.0,
                stop: 20.0,
                step: 1.0,
            },
            reps,
            seed,
        })
    }

    /// `(p, n range, σ)` behind an appendix preset.
    pub fn appendix(&self) -> Option<AppendixSpec> {
        match self {
            Figure::AppendixLeft => Some(AppendixSpec { p: 3, n_min: 5, n_max: 10, sigma: 50.0 }),
            Figure::AppendixRight => Some(AppendixSpec { p: 10, n_min: 12, n_max: 20, sigma: 50.0 }),
            _ => None,
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<&str> = Figure::ALL.iter().map(|f| f.name()).collect();
                Error::Config(format!("unknown figure `{s}` (valid: {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixSpec {
    pub p: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub sigma: f64,
}
