use nalgebra::DVector;

use crate::error::{check_dim, Result};
use crate::problem::{AgentProblem, Point};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn project(&self, x: &mut Point) {
        let offset = &*x - &self.center;
        let norm = offset.norm();
        if norm > self.radius {
            *x = &self.center + offset * (self.radius / norm);
        }
    }
}

#[derive(Clone, Debug)]
pub struct SgdOptions {
    pub seed: u64,
    /// Data streams are those of this agent index.
    pub agent: usize,
    pub rounds: u64,
    pub x0: Option<Point>,
    pub projection: Option<Ball>,
    pub keep_trajectory: bool,
}

impl SgdOptions {
    pub fn new(seed: u64, rounds: u64) -> Self {
        Self {
            seed,
            agent: 0,
            rounds,
            x0: None,
            projection: None,
            keep_trajectory: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SgdOutput {
    pub last: Point,
    /// `(1/T) Σ_{t<T} x^t`
    pub average: Point,
    /// `x^0, …, x^T` when kept.
    pub trajectory: Vec<Point>,
}

/// `x^{t+1} = p(x^t − η g_t(x^t))`, with `p` the optional ball projection.
pub fn sgd(problem: &AgentProblem, eta: f64, opts: &SgdOptions) -> Result<SgdOutput> {
    let mut x = opts.x0.clone().unwrap_or_else(|| DVector::zeros(problem.dim()));
    check_dim(problem.dim(), x.len())?;
    if let Some(ball) = &opts.projection {
        check_dim(problem.dim(), ball.center.len())?;
    }
    let mut sum = DVector::zeros(problem.dim());
    let mut trajectory = Vec::new();
    for t in 0..opts.rounds {
        if opts.keep_trajectory {
            trajectory.push(x.clone());
        }
        sum += &x;
        let mut stream = RngStream::sample(opts.seed, opts.agent, t);
        let sample = problem.draw(&mut stream);
        let g = problem.gradient_at(&sample, &x);
        x.axpy(-eta, &g, 1.0);
        if let Some(ball) = &opts.projection {
            ball.project(&mut x);
        }
    }
    if opts.keep_trajectory {
        trajectory.push(x.clone());
    }
    let average = if opts.rounds > 0 {
        sum / opts.rounds as f64
    } else {
        x.clone()
    };
    Ok(SgdOutput {
        last: x,
        average,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::AgentDistribution;

    #[test]
    fn noiseless_quadratic_halves() {
        // f(x) = ½x² from a point mass at 0
        let p = AgentProblem::mean_estimation(AgentDistribution::GaussianVector {
            mean: vec![0.0],
            std: 0.0,
        })
        .unwrap();
        let mut opts = SgdOptions::new(0, 20);
        opts.x0 = Some(DVector::from_element(1, 1.0));
        opts.keep_trajectory = true;
        let out = sgd(&p, 0.5, &opts).unwrap();
        for (k, x) in out.trajectory.iter().enumerate() {
            assert_eq!(x[0], 0.5f64.powi(k as i32));
        }
    }

    #[test]
    fn projection_keeps_iterates_in_ball() {
        let p = AgentProblem::mean_estimation(AgentDistribution::GaussianVector {
            mean: vec![5.0, 5.0],
            std: 1.0,
        })
        .unwrap();
        let mut opts = SgdOptions::new(1, 200);
        opts.projection = Some(Ball {
            center: DVector::zeros(2),
            radius: 1.0,
        });
        opts.keep_trajectory = true;
        let out = sgd(&p, 0.3, &opts).unwrap();
        assert!(out.trajectory.iter().all(|x| x.norm() <= 1.0 + 1e-12));
        assert!((out.last.norm() - 1.0).abs() < 1e-12);
    }
}
