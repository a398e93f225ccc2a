//! Population time series and their CSV form.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::Real;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceMetadata {
    /// Back-end tag, e.g. `exact`, `ehrenfest`, `ion-ideal`.
    pub method: String,
    pub cutoffs: Vec<usize>,
    /// Maximum over time of the top-Fock-level population, per mode.
    pub leakage_per_mode: Vec<f64>,
    /// Free-form diagnostics in insertion order.
    pub diagnostics: Vec<(String, String)>,
}

impl TraceMetadata {
    pub fn new(method: impl Into<String>) -> Self {
        Self { method: method.into(), ..Default::default() }
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl ToString) {
        self.diagnostics.push((key.into(), value.to_string()));
    }
}

/// Sampled populations with their shot-noise uncertainty.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledColumns<T> {
    pub values: Vec<Vec<T>>,
    pub sigma: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationTrace<T> {
    pub times: Vec<T>,
    /// `populations[t][i]`
    pub populations: Vec<Vec<T>>,
    /// Max top-level population over modes at each time.
    pub leakage: Vec<T>,
    pub stderr: Option<Vec<Vec<T>>>,
    pub sampled: Option<SampledColumns<T>>,
    pub metadata: TraceMetadata,
}

impl<T: Real> PopulationTrace<T> {
    pub fn new(times: Vec<T>, populations: Vec<Vec<T>>, leakage: Vec<T>, metadata: TraceMetadata) -> Self {
        Self { times, populations, leakage, stderr: None, sampled: None, metadata }
    }

    pub fn states(&self) -> usize {
        self.populations.first().map_or(0, Vec::len)
    }

    /// Time series of one state.
    pub fn series(&self, state: usize) -> Vec<T> {
        self.populations.iter().map(|p| p[state]).collect()
    }

    /// Largest `|P_i(t) − P'_i(t)|` over states and times.
    pub fn max_deviation(&self, other: &Self) -> Result<T> {
        let report = compare(self, other)?;
        Ok(report.max_abs.iter().copied().fold(T::zero(), T::max))
    }

    pub fn to_csv(&self) -> String {
        let m = self.states();
        let mut out = String::from("time_fs");
        for i in 0..m {
            write!(out, ",P_{i}").expect("string write");
        }
        out.push_str(",leakage");
        if self.stderr.is_some() {
            for i in 0..m {
                write!(out, ",stderr_{i}").expect("string write");
            }
        }
        if self.sampled.is_some() {
            for i in 0..m {
                write!(out, ",P_{i}_sampled,P_{i}_sigma").expect("string write");
            }
        }
        out.push('\n');
        for (r, t) in self.times.iter().enumerate() {
            write!(out, "{t}").expect("string write");
            for p in &self.populations[r] {
                write!(out, ",{p}").expect("string write");
            }
            write!(out, ",{}", self.leakage[r]).expect("string write");
            if let Some(se) = &self.stderr {
                for s in &se[r] {
                    write!(out, ",{s}").expect("string write");
                }
            }
            if let Some(sm) = &self.sampled {
                for (v, s) in sm.values[r].iter().zip(&sm.sigma[r]) {
                    write!(out, ",{v},{s}").expect("string write");
                }
            }
            out.push('\n');
        }
        out
    }
}

impl<T: Real + FromStr> PopulationTrace<T> {
    /// Parses the CSV produced by [`PopulationTrace::to_csv`]. Only the time,
    /// population and leakage columns are required.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, key: "header".into(), message: "empty file".into() })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"time_fs") {
            return Err(Error::Parse { line: 1, key: "time_fs".into(), message: "first column must be time_fs".into() });
        }
        let m = cols.iter().filter(|c| is_population_column(c)).count();
        let col = |name: &str| cols.iter().position(|c| *c == name);
        let pop_idx: Vec<usize> = (0..m)
            .map(|i| col(&format!("P_{i}")).expect("counted above"))
            .collect();
        let leak_idx = col("leakage");
        let se_idx: Option<Vec<usize>> = (0..m).map(|i| col(&format!("stderr_{i}"))).collect();
        let sm_idx: Option<Vec<(usize, usize)>> = (0..m)
            .map(|i| Some((col(&format!("P_{i}_sampled"))?, col(&format!("P_{i}_sigma"))?)))
            .collect();
        let mut tr = PopulationTrace::new(Vec::new(), Vec::new(), Vec::new(), TraceMetadata::default());
        let mut se_rows = Vec::new();
        let mut sm_vals = Vec::new();
        let mut sm_sig = Vec::new();
        for (ln, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse {
                    line: ln + 1,
                    key: "row".into(),
                    message: format!("{} fields, header has {}", fields.len(), cols.len()),
                });
            }
            let num = |j: usize| -> Result<T> {
                fields[j].parse::<T>().map_err(|_| Error::Parse {
                    line: ln + 1,
                    key: cols[j].to_string(),
                    message: format!("'{}' is not a number", fields[j]),
                })
            };
            tr.times.push(num(0)?);
            tr.populations.push(pop_idx.iter().map(|&j| num(j)).collect::<Result<_>>()?);
            tr.leakage.push(match leak_idx {
                Some(j) => num(j)?,
                None => T::zero(),
            });
            if let Some(idx) = &se_idx {
                se_rows.push(idx.iter().map(|&j| num(j)).collect::<Result<Vec<_>>>()?);
            }
            if let Some(idx) = &sm_idx {
                sm_vals.push(idx.iter().map(|&(j, _)| num(j)).collect::<Result<Vec<_>>>()?);
                sm_sig.push(idx.iter().map(|&(_, j)| num(j)).collect::<Result<Vec<_>>>()?);
            }
        }
        if se_idx.is_some() && m > 0 {
            tr.stderr = Some(se_rows);
        }
        if sm_idx.is_some() && m > 0 {
            tr.sampled = Some(SampledColumns { values: sm_vals, sigma: sm_sig });
        }
        Ok(tr)
    }
}

fn is_population_column(c: &str) -> bool {
    c.strip_prefix("P_").is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// Per-state deviation between two traces on the same grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationReport<T> {
    pub max_abs: Vec<T>,
    /// Trapezoidal integral of `|ΔP_i(t)|` over time, in population·fs.
    pub integrated_abs: Vec<T>,
}

impl<T: Real> DeviationReport<T> {
    pub fn overall_max(&self) -> T {
        self.max_abs.iter().copied().fold(T::zero(), T::max)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("state,max_abs_deviation,integrated_abs_deviation_fs\n");
        for (i, (m, s)) in self.max_abs.iter().zip(&self.integrated_abs).enumerate() {
            writeln!(out, "{i},{m},{s}").expect("string write");
        }
        out
    }
}

pub fn compare<T: Real>(a: &PopulationTrace<T>, b: &PopulationTrace<T>) -> Result<DeviationReport<T>> {
    if a.times.len() != b.times.len() {
        return Err(Error::GridMismatch(format!("{} vs {} time points", a.times.len(), b.times.len())));
    }
    for (i, (ta, tb)) in a.times.iter().zip(&b.times).enumerate() {
        let scale = ta.abs().max(tb.abs()).max(T::one());
        if (*ta - *tb).abs() > T::lit(1e-9) * scale {
            return Err(Error::GridMismatch(format!("time point {i} differs: {ta} vs {tb}")));
        }
    }
    if a.states() != b.states() {
        return Err(Error::GridMismatch(format!("{} vs {} states", a.states(), b.states())));
    }
    let m = a.states();
    let mut max_abs = vec![T::zero(); m];
    let mut integrated = vec![T::zero(); m];
    for i in 0..m {
        let d: Vec<T> = a
            .populations
            .iter()
            .zip(&b.populations)
            .map(|(p, q)| (p[i] - q[i]).abs())
            .collect();
        max_abs[i] = d.iter().copied().fold(T::zero(), T::max);
        for w in 1..d.len() {
            integrated[i] += (a.times[w] - a.times[w - 1]) * (d[w] + d[w - 1]) * T::lit(0.5);
        }
    }
    Ok(DeviationReport { max_abs, integrated_abs: integrated })
}

/// `n` equally spaced points on `[0, tau]`, endpoints included.
pub fn uniform_grid<T: Real>(tau: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![T::zero()],
        _ => (0..n).map(|i| tau * T::lit(i as f64) / T::lit((n - 1) as f64)).collect(),
    }
}

/// Checks that a grid starts at zero and is strictly increasing.
pub fn validate_grid<T: Real>(times: &[T]) -> Result<()> {
    match times.first() {
        None => return Err(Error::InvalidArgument("time grid is empty".into())),
        Some(t0) if *t0 != T::zero() => {
            return Err(Error::InvalidArgument(format!("time grid starts at {t0}, not 0")))
        }
        _ => {}
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("time grid is not strictly increasing".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PopulationTrace<f64> {
        PopulationTrace::new(
            vec![0.0, 1.5, 3.0],
            vec![vec![1.0, 0.0], vec![0.6, 0.4], vec![0.1, 0.9]],
            vec![0.0, 1e-7, 2e-7],
            TraceMetadata::new("test"),
        )
    }

    #[test]
    fn csv_round_trip() {
        let mut t = sample();
        t.stderr = Some(vec![vec![0.0, 0.0], vec![0.01, 0.01], vec![0.1 / 3.0, 0.02]]);
        let back = PopulationTrace::<f64>::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back.times, t.times);
        assert_eq!(back.populations, t.populations);
        assert_eq!(back.stderr, t.stderr);
    }

    #[test]
    fn compare_shifted() {
        let a = sample();
        let mut b = sample();
        for row in &mut b.populations {
            row[0] += 0.25;
        }
        let r = compare(&a, &b).unwrap();
        assert!((r.max_abs[0] - 0.25).abs() < 1e-15);
        assert_eq!(r.max_abs[1], 0.0);
        assert!((r.integrated_abs[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn grid_mismatch_detected() {
        let a = sample();
        let mut b = sample();
        b.times[1] = 1.6;
        assert!(matches!(compare(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = uniform_grid(400.0f64, 40);
        assert_eq!(g.len(), 40);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[39], 400.0);
    }
}
