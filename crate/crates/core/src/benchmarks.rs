//! Multi-objective test functions and their finite candidate sets.
//!
//! Raw values follow the usual minimization form. [`BenchmarkProblem`] negates
//! them and min-max scales each objective over the candidate set, so every
//! other module works with objectives in `[0, 1]` where larger is better.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::stats::linspace;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkName {
    Dtlz1,
    Dtlz3,
    Kursawe,
    Schaffer1,
    Schaffer2,
    Fonseca,
    Poloni,
}

impl BenchmarkName {
    pub const ALL: [BenchmarkName; 7] = [
        BenchmarkName::Dtlz1,
        BenchmarkName::Dtlz3,
        BenchmarkName::Kursawe,
        BenchmarkName::Schaffer1,
        BenchmarkName::Schaffer2,
        BenchmarkName::Fonseca,
        BenchmarkName::Poloni,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BenchmarkName::Dtlz1 => "dtlz1",
            BenchmarkName::Dtlz3 => "dtlz3",
            BenchmarkName::Kursawe => "kursawe",
            BenchmarkName::Schaffer1 => "schaffer1",
            BenchmarkName::Schaffer2 => "schaffer2",
            BenchmarkName::Fonseca => "fonseca",
            BenchmarkName::Poloni => "poloni",
        }
    }
}

impl fmt::Display for BenchmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        BenchmarkName::ALL.into_iter().find(|b| b.as_str() == lower).ok_or_else(|| {
            let valid: Vec<&str> = BenchmarkName::ALL.iter().map(|b| b.as_str()).collect();
            Error::Config(format!("unknown benchmark '{s}'; valid benchmarks: {}", valid.join(", ")))
        })
    }
}

/// How `‖x_L‖` inside the DTLZ `g` function is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtlzNorm {
    /// Euclidean norm of the tail subvector.
    #[default]
    Euclidean,
    /// Number of elements in the tail subvector, as in the classical suite.
    Cardinality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub name: BenchmarkName,
    pub dim: usize,
    pub n_objectives: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Grid points per input axis.
    pub per_axis: usize,
    #[serde(default)]
    pub dtlz_norm: DtlzNorm,
}

impl BenchmarkSpec {
    pub fn new(name: BenchmarkName) -> Self {
        let (dim, l, lo, hi, per_axis) = match name {
            BenchmarkName::Dtlz1 | BenchmarkName::Dtlz3 => (3, 3, 0.0, 1.0, 10),
            BenchmarkName::Kursawe => (3, 2, -5.0, 5.0, 10),
            BenchmarkName::Schaffer1 => (1, 2, -10.0, 10.0, 1000),
            BenchmarkName::Schaffer2 => (1, 2, -5.0, 10.0, 1000),
            BenchmarkName::Fonseca => (2, 2, -4.0, 4.0, 10),
            BenchmarkName::Poloni => (2, 2, -PI, PI, 20),
        };
        Self {
            name,
            dim,
            n_objectives: l,
            lower: vec![lo; dim],
            upper: vec![hi; dim],
            per_axis,
            dtlz_norm: DtlzNorm::default(),
        }
    }

    pub fn with_dtlz_norm(mut self, norm: DtlzNorm) -> Self {
        self.dtlz_norm = norm;
        self
    }

    pub fn candidate_count(&self) -> usize {
        self.per_axis.pow(self.dim as u32)
    }

    /// Raw objective values at `x` (minimization form).
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::dim_mismatch("benchmark input", self.dim, x.len()));
        }
        for (i, v) in x.iter().enumerate() {
            let slack = 1e-12 * (self.upper[i] - self.lower[i]);
            if !(v.is_finite() && *v >= self.lower[i] - slack && *v <= self.upper[i] + slack) {
                return Err(Error::invalid(format!(
                    "input {v} in dimension {i} lies outside [{}, {}] for {}",
                    self.lower[i], self.upper[i], self.name
                )));
            }
        }
        Ok(match self.name {
            BenchmarkName::Dtlz1 => dtlz1(x, self.n_objectives, self.dtlz_norm),
            BenchmarkName::Dtlz3 => dtlz3(x, self.n_objectives, self.dtlz_norm),
            BenchmarkName::Kursawe => kursawe(x),
            BenchmarkName::Schaffer1 => vec![x[0] * x[0], (x[0] - 2.0).powi(2)],
            BenchmarkName::Schaffer2 => schaffer2(x[0]),
            BenchmarkName::Fonseca => fonseca(x),
            BenchmarkName::Poloni => poloni(x),
        })
    }

    /// Full tensor grid over the box, lexicographic with the last input
    /// varying fastest.
    pub fn candidate_grid(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> =
            (0..self.dim).map(|i| linspace(self.lower[i], self.upper[i], self.per_axis)).collect();
        let mut out = Vec::with_capacity(self.candidate_count());
        let mut idx = vec![0usize; self.dim];
        loop {
            out.push(idx.iter().enumerate().map(|(i, &k)| axes[i][k]).collect());
            let mut d = self.dim;
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < self.per_axis {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    /// Maps an input from the box to `[0, 1]^d`.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / (self.upper[i] - self.lower[i]))
            .collect()
    }
}

fn dtlz_g(tail: &[f64], norm: DtlzNorm) -> f64 {
    let lead = match norm {
        DtlzNorm::Euclidean => tail.iter().map(|v| v * v).sum::<f64>().sqrt(),
        DtlzNorm::Cardinality => tail.len() as f64,
    };
    let s: f64 = tail.iter().map(|&v| (v - 0.5).powi(2) - (20.0 * PI * (v - 0.5)).cos()).sum();
    100.0 * (lead + s)
}

fn dtlz1(x: &[f64], l: usize, norm: DtlzNorm) -> Vec<f64> {
    let g1 = 1.0 + dtlz_g(&x[l - 1..], norm);
    (0..l)
        .map(|m| {
            // objective m multiplies the first l-1-m inputs, then (1 - x_{l-1-m})
            let k = l - 1 - m;
            let mut v = 0.5 * g1;
            v *= x[..k].iter().product::<f64>();
            if m > 0 {
                v *= 1.0 - x[k];
            }
            v
        })
        .collect()
}

fn dtlz3(x: &[f64], l: usize, norm: DtlzNorm) -> Vec<f64> {
    let g1 = 1.0 + dtlz_g(&x[l - 1..], norm);
    (0..l)
        .map(|m| {
            let k = l - 1 - m;
            let mut v = g1;
            v *= x[..k].iter().map(|&t| (t * FRAC_PI_2).cos()).product::<f64>();
            if m > 0 {
                v *= (x[k] * FRAC_PI_2).sin();
            }
            v
        })
        .collect()
}

fn kursawe(x: &[f64]) -> Vec<f64> {
    let f1 = x.windows(2).map(|p| -10.0 * (-0.2 * (p[0] * p[0] + p[1] * p[1]).sqrt()).exp()).sum();
    let f2 = x.iter().map(|&v| v.abs().powf(0.8) + 5.0 * (v * v * v).sin()).sum();
    vec![f1, f2]
}

fn schaffer2(x: f64) -> Vec<f64> {
    let f1 = if x <= 1.0 {
        -x
    } else if x <= 3.0 {
        x - 2.0
    } else if x <= 4.0 {
        4.0 - x
    } else {
        x - 4.0
    };
    vec![f1, (x - 5.0).powi(2)]
}

fn fonseca(x: &[f64]) -> Vec<f64> {
    let c = 1.0 / (x.len() as f64).sqrt();
    let a: f64 = x.iter().map(|v| (v - c).powi(2)).sum();
    let b: f64 = x.iter().map(|v| (v + c).powi(2)).sum();
    vec![1.0 - (-a).exp(), 1.0 - (-b).exp()]
}

fn poloni(x: &[f64]) -> Vec<f64> {
    let (s1, c1, s2, c2) = (1f64.sin(), 1f64.cos(), 2f64.sin(), 2f64.cos());
    let a1 = 0.5 * s1 - 2.0 * c1 + s2 - 1.5 * c2;
    let a2 = 1.5 * s1 - c1 + 2.0 * s2 - 0.5 * c2;
    let (x1, x2) = (x[0], x[1]);
    let b1 = 0.5 * x1.sin() - 2.0 * x1.cos() + x2.sin() - 1.5 * x2.cos();
    let b2 = 1.5 * x1.sin() - x1.cos() + 2.0 * x2.sin() - 0.5 * x2.cos();
    vec![1.0 + (a1 - b1).powi(2) + (a2 - b2).powi(2), (x1 + 3.0).powi(2) + (x2 + 1.0).powi(2)]
}

/// Negates raw minimization values and min-max scales each objective to
/// `[0, 1]` across the rows. Constant objectives map to 0.
pub fn scale_objectives(raw: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = raw.first() else {
        return Vec::new();
    };
    let l = first.len();
    let mut lo = vec![f64::INFINITY; l];
    let mut hi = vec![f64::NEG_INFINITY; l];
    for row in raw {
        for j in 0..l {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    raw.iter()
        .map(|row| {
            (0..l)
                .map(|j| {
                    let span = hi[j] - lo[j];
                    if span > 0.0 {
                        (hi[j] - row[j]) / span
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// A benchmark with its candidate set evaluated and scaled.
#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    pub spec: BenchmarkSpec,
    /// Candidates in original input units.
    pub candidates: Vec<Vec<f64>>,
    /// Candidates mapped to the unit box; these are the GP inputs.
    pub unit_inputs: Vec<Vec<f64>>,
    pub raw: Vec<Vec<f64>>,
    /// Negated, min-max scaled objectives.
    pub scaled: Vec<Vec<f64>>,
}

impl BenchmarkProblem {
    pub fn new(spec: BenchmarkSpec) -> Result<Self> {
        let candidates = spec.candidate_grid();
        let raw = candidates.iter().map(|x| spec.evaluate(x)).collect::<Result<Vec<_>>>()?;
        let scaled = scale_objectives(&raw);
        let unit_inputs = candidates.iter().map(|x| spec.to_unit(x)).collect();
        Ok(Self { spec, candidates, unit_inputs, raw, scaled })
    }

    pub fn by_name(name: BenchmarkName) -> Result<Self> {
        Self::new(BenchmarkSpec::new(name))
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn n_objectives(&self) -> usize {
        self.spec.n_objectives
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn closed_form_examples() {
        let s1 = BenchmarkSpec::new(BenchmarkName::Schaffer1);
        assert_eq!(s1.evaluate(&[0.0]).unwrap(), vec![0.0, 4.0]);
        let k = BenchmarkSpec::new(BenchmarkName::Kursawe);
        let v = k.evaluate(&[0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v[0], -20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-12);
        let f = BenchmarkSpec::new(BenchmarkName::Fonseca);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v = f.evaluate(&[h, h]).unwrap();
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 1.0 - (-4.0f64).exp(), epsilon = 1e-12);
        let d1 = BenchmarkSpec::new(BenchmarkName::Dtlz1);
        let v = d1.evaluate(&[0.5, 0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(v[2], -12.25, epsilon = 1e-9);
        assert_abs_diff_eq!(v[0], 0.25 * 0.5 * -49.0, epsilon = 1e-9);
        let card = d1.clone().with_dtlz_norm(DtlzNorm::Cardinality).evaluate(&[0.5, 0.5, 0.5]).unwrap();
        // g = 100 (1 + 0 - 1) = 0
        assert_abs_diff_eq!(card[2], 0.25, epsilon = 1e-9);
    }

    #[test]
    fn dtlz3_and_poloni_points() {
        let d3 = BenchmarkSpec::new(BenchmarkName::Dtlz3);
        let v = d3.evaluate(&[0.0, 0.0, 0.5]).unwrap();
        // g = -50, 1 + g = -49; f1 = -49 cos 0 cos 0, f2 = -49 cos 0 sin 0, f3 = -49 sin 0
        assert_abs_diff_eq!(v[0], -49.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-9);
        let p = BenchmarkSpec::new(BenchmarkName::Poloni);
        // at (1, 2) B equals A, so f1 = 1
        let v = p.evaluate(&[1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 25.0, epsilon = 1e-12);
    }

    #[test]
    fn schaffer2_pieces() {
        let s = BenchmarkSpec::new(BenchmarkName::Schaffer2);
        let f1 = |x: f64| s.evaluate(&[x]).unwrap()[0];
        assert_eq!(f1(-5.0), 5.0);
        assert_eq!(f1(1.0), -1.0);
        assert_eq!(f1(2.0), 0.0);
        assert_eq!(f1(3.5), 0.5);
        assert_eq!(f1(10.0), 6.0);
    }

    #[test]
    fn out_of_box_is_rejected() {
        let s = BenchmarkSpec::new(BenchmarkName::Schaffer2);
        assert!(s.evaluate(&[10.5]).is_err());
        assert!(s.evaluate(&[f64::NAN]).is_err());
        assert!(s.evaluate(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn grids_have_prescribed_sizes() {
        let sizes = [
            (BenchmarkName::Dtlz1, 1000),
            (BenchmarkName::Dtlz3, 1000),
            (BenchmarkName::Kursawe, 1000),
            (BenchmarkName::Schaffer1, 1000),
            (BenchmarkName::Schaffer2, 1000),
            (BenchmarkName::Fonseca, 100),
            (BenchmarkName::Poloni, 400),
        ];
        for (name, n) in sizes {
            let spec = BenchmarkSpec::new(name);
            let g = spec.candidate_grid();
            assert_eq!(g.len(), n, "{name}");
            assert_eq!(spec.candidate_count(), n);
            assert!(g.windows(2).all(|w| w[0].partial_cmp(&w[1]) == Some(std::cmp::Ordering::Less)), "{name}");
        }
        let g = BenchmarkSpec::new(BenchmarkName::Schaffer2).candidate_grid();
        assert_eq!(g[0][0], -5.0);
        assert_eq!(g[999][0], 10.0);
    }

    #[test]
    fn names_parse_and_reject() {
        assert_eq!("Kursawe".parse::<BenchmarkName>().unwrap(), BenchmarkName::Kursawe);
        let err = "nope".parse::<BenchmarkName>().unwrap_err().to_string();
        assert!(err.contains("schaffer2") && err.contains("dtlz1"));
    }

    #[test]
    fn scaled_objectives_span_unit_interval() {
        for name in BenchmarkName::ALL {
            let p = BenchmarkProblem::by_name(name).unwrap();
            for j in 0..p.n_objectives() {
                let col: Vec<f64> = p.scaled.iter().map(|r| r[j]).collect();
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(lo, 0.0, "{name} objective {j}");
                assert_eq!(hi, 1.0, "{name} objective {j}");
            }
        }
    }

    proptest! {
        #[test]
        fn scaling_reverses_raw_order(raw in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 2), 2..30)) {
            let s = scale_objectives(&raw);
            for j in 0..2 {
                for a in 0..raw.len() {
                    for b in 0..raw.len() {
                        if raw[a][j] < raw[b][j] {
                            prop_assert!(s[a][j] >= s[b][j]);
                        }
                    }
                }
            }
        }
    }
}
