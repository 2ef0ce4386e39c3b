//! Oracle schedules: which agents draw a sample in each round, how their
//! gradients are lifted into an unbiased full vector, and sample accounting.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::Point;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OracleKind {
    /// Every agent samples every round.
    Synchronous,
    /// One agent, uniform at random, samples each round.
    Asynchronous,
}

impl OracleKind {
    pub fn tag(self) -> &'static str {
        match self {
            OracleKind::Synchronous => "sync",
            OracleKind::Asynchronous => "async",
        }
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sync" | "synchronous" => Ok(OracleKind::Synchronous),
            "async" | "asynchronous" => Ok(OracleKind::Asynchronous),
            other => Err(Error::config("oracle", format!("unknown oracle {other:?}"))),
        }
    }
}

/// Agents activated this round. `stream` must be the round's schedule stream
/// and is left untouched by the synchronous oracle.
pub fn next_active_set(kind: OracleKind, n: usize, stream: &mut RngStream) -> Vec<usize> {
    match kind {
        OracleKind::Synchronous => (0..n).collect(),
        OracleKind::Asynchronous => vec![stream.index(n)],
    }
}

/// Full `N`-vector of gradients from the active agents' raw gradients:
/// identity for the synchronous oracle, `N·g` on the active agent and zero
/// elsewhere for the asynchronous one.
pub fn lift_gradient(
    kind: OracleKind,
    n: usize,
    dim: usize,
    active: &[usize],
    raw: &[(usize, Point)],
) -> Result<Vec<Point>> {
    let mut out = vec![DVector::zeros(dim); n];
    let scale = match kind {
        OracleKind::Synchronous => 1.0,
        OracleKind::Asynchronous => n as f64,
    };
    for &i in active {
        let (_, g) = raw
            .iter()
            .find(|(j, _)| *j == i)
            .ok_or(Error::MissingGradient(i))?;
        crate::error::check_dim(dim, g.len())?;
        out[i] = g * scale;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleLedger {
    per_agent: Vec<u64>,
    total: u64,
}

impl SampleLedger {
    pub fn new(n: usize) -> Self {
        Self {
            per_agent: vec![0; n],
            total: 0,
        }
    }

    pub fn record(&mut self, active: &[usize]) {
        for &i in active {
            self.per_agent[i] += 1;
        }
        self.total += active.len() as u64;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn per_agent(&self) -> &[u64] {
        &self.per_agent
    }

    /// `total == Σ per_agent`
    pub fn is_consistent(&self) -> bool {
        self.per_agent.iter().sum::<u64>() == self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sync_activates_everyone() {
        let mut s = RngStream::schedule(0, 0);
        assert_eq!(next_active_set(OracleKind::Synchronous, 3, &mut s), vec![0, 1, 2]);
        assert_eq!(next_active_set(OracleKind::Asynchronous, 1, &mut s), vec![0]);
    }

    #[test]
    fn async_schedule_is_uniform() {
        let rounds = 100_000;
        let mut freq = [0usize; 4];
        for k in 0..rounds {
            let a = next_active_set(OracleKind::Asynchronous, 4, &mut RngStream::schedule(5, k));
            freq[a[0]] += 1;
        }
        for f in freq {
            assert!((f as f64 / rounds as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn async_lift_scales_active_agent() {
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let lifted = lift_gradient(OracleKind::Asynchronous, 5, 2, &[1], &[(1, g.clone())]).unwrap();
        assert_eq!(lifted[1].as_slice(), &[5.0, 5.0]);
        for j in [0, 2, 3, 4] {
            assert_eq!(lifted[j].norm(), 0.0);
        }
        let raw: Vec<_> = (0..3).map(|i| (i, g.clone() * i as f64)).collect();
        let lifted = lift_gradient(OracleKind::Synchronous, 3, 2, &[0, 1, 2], &raw).unwrap();
        for (i, l) in lifted.iter().enumerate() {
            assert_eq!(l, &raw[i].1);
        }
    }

    #[test]
    fn missing_active_gradient_rejected() {
        let err = lift_gradient(OracleKind::Asynchronous, 3, 1, &[2], &[]).unwrap_err();
        assert!(matches!(err, Error::MissingGradient(2)));
    }

    #[test]
    fn async_lift_is_unbiased() {
        let n = 4;
        let raw: Vec<_> = (0..n).map(|i| (i, DVector::from_element(1, i as f64 + 1.0))).collect();
        let draws = 100_000;
        let mut sum = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for k in 0..draws {
            let active = next_active_set(OracleKind::Asynchronous, n, &mut RngStream::schedule(9, k));
            let lifted = lift_gradient(OracleKind::Asynchronous, n, 1, &active, &raw).unwrap();
            for j in 0..n {
                sum[j] += lifted[j][0];
                sq[j] += lifted[j][0] * lifted[j][0];
            }
        }
        let m = draws as f64;
        for j in 0..n {
            let mean = sum[j] / m;
            let sd = (sq[j] / m - mean * mean).sqrt();
            assert!((mean - raw[j].1[0]).abs() <= 4.0 * sd / m.sqrt());
        }
    }

    #[test]
    fn ledger_conservation() {
        let mut l = SampleLedger::new(3);
        for _ in 0..10 {
            l.record(&[0, 1, 2]);
        }
        assert_eq!(l.total(), 30);
        l.record(&[1]);
        assert!(l.is_consistent());
        assert_eq!(l.per_agent(), &[10, 11, 10]);
    }
}
