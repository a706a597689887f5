//! Fixed-step explicit Runge-Kutta methods of orders 1 through 5 for
//! matrix-valued ODEs, used to simulate the closed-loop feedback system on a
//! uniform grid.

use crate::control::BilinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, DensityMatrix};
use crate::tol;

/// Explicit Butcher tableau. Row `i` of `a` holds the `i` coefficients
/// below the diagonal, so the scheme is explicit by construction.
#[derive(Clone, Debug)]
pub struct ButcherTableau {
    pub order: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ButcherTableau {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Consistency checks: weights sum to one and nodes equal row sums.
    pub fn validate(&self) -> Result<()> {
        let s = self.stages();
        if self.a.len() != s || self.c.len() != s {
            return Err(Error::InvalidTableau {
                reason: format!("stage count mismatch: a={}, b={}, c={}", self.a.len(), s, self.c.len()),
            });
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != i {
                return Err(Error::InvalidTableau {
                    reason: format!("row {i} has {} coefficients, expected {i}", row.len()),
                });
            }
            let row_sum: f64 = row.iter().sum();
            if (row_sum - self.c[i]).abs() > 1e-14 {
                return Err(Error::InvalidTableau {
                    reason: format!("row-sum condition violated at stage {i}: {row_sum} vs {}", self.c[i]),
                });
            }
        }
        let b_sum: f64 = self.b.iter().sum();
        if (b_sum - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidTableau {
                reason: format!("weights sum to {b_sum}, not 1"),
            });
        }
        Ok(())
    }
}

/// The fixed tableau for each order: explicit Euler, Heun, Kutta's
/// third-order rule, the classical fourth-order method, and Butcher's
/// six-stage fifth-order method.
pub fn tableau(order: usize) -> Result<ButcherTableau> {
    let tab = match order {
        1 => ButcherTableau {
            order: 1,
            a: vec![vec![]],
            b: vec![1.0],
            c: vec![0.0],
        },
        2 => ButcherTableau {
            order: 2,
            a: vec![vec![], vec![1.0]],
            b: vec![0.5, 0.5],
            c: vec![0.0, 1.0],
        },
        3 => ButcherTableau {
            order: 3,
            a: vec![vec![], vec![0.5], vec![-1.0, 2.0]],
            b: vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            c: vec![0.0, 0.5, 1.0],
        },
        4 => ButcherTableau {
            order: 4,
            a: vec![
                vec![],
                vec![0.5],
                vec![0.0, 0.5],
                vec![0.0, 0.0, 1.0],
            ],
            b: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            c: vec![0.0, 0.5, 0.5, 1.0],
        },
        5 => ButcherTableau {
            order: 5,
            a: vec![
                vec![],
                vec![0.25],
                vec![0.125, 0.125],
                vec![0.0, -0.5, 1.0],
                vec![3.0 / 16.0, 0.0, 0.0, 9.0 / 16.0],
                vec![-3.0 / 7.0, 2.0 / 7.0, 12.0 / 7.0, -12.0 / 7.0, 8.0 / 7.0],
            ],
            b: vec![
                7.0 / 90.0,
                0.0,
                32.0 / 90.0,
                12.0 / 90.0,
                32.0 / 90.0,
                7.0 / 90.0,
            ],
            c: vec![0.0, 0.25, 0.25, 0.5, 0.75, 1.0],
        },
        other => return Err(Error::UnsupportedOrder { order: other }),
    };
    tab.validate()?;
    Ok(tab)
}

/// One explicit Runge-Kutta step of size `h` for an autonomous matrix ODE
/// y' = f(y).
pub fn rk_step(
    tab: &ButcherTableau,
    f: impl Fn(&ComplexMatrix) -> ComplexMatrix,
    y: &ComplexMatrix,
    h: f64,
) -> ComplexMatrix {
    let s = tab.stages();
    let mut stages: Vec<ComplexMatrix> = Vec::with_capacity(s);
    for i in 0..s {
        let mut yi = y.clone();
        for (j, &aij) in tab.a[i].iter().enumerate() {
            if aij != 0.0 {
                yi.add_scaled_assign(h * aij, &stages[j]);
            }
        }
        stages.push(f(&yi));
    }
    let mut out = y.clone();
    for (bi, ki) in tab.b.iter().zip(&stages) {
        if *bi != 0.0 {
            out.add_scaled_assign(h * bi, ki);
        }
    }
    out
}

/// Discrete closed-loop simulation output on the uniform grid t_n = n T / N.
#[derive(Clone, Debug)]
pub struct ThetaSequence {
    n_grid: usize,
    step: f64,
    points: Vec<ComplexMatrix>,
}

impl ThetaSequence {
    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.n_grid as f64
    }

    pub fn points(&self) -> &[ComplexMatrix] {
        &self.points
    }

    pub fn point(&self, n: usize) -> &ComplexMatrix {
        &self.points[n]
    }
}

/// Simulate the closed-loop system from `rho0` over `[0, horizon]` with `n`
/// uniform steps of the order-`order` Runge-Kutta method.
///
/// The first point is `rho0` exactly. Every step is re-symmetrized,
/// (theta + theta^dag) / 2, to keep round-off out of the coordinate chart;
/// no positivity projection is applied.
pub fn step1_simulate(
    sys: &BilinearSystem,
    rho0: &DensityMatrix,
    horizon: f64,
    n: usize,
    order: usize,
) -> Result<ThetaSequence> {
    if horizon <= 0.0 || n == 0 {
        return Err(Error::Config(format!(
            "need horizon > 0 and n >= 1, got horizon = {horizon}, n = {n}"
        )));
    }
    let tab = tableau(order)?;
    let h = horizon / n as f64;
    let f = |rho: &ComplexMatrix| sys.closed_loop_rhs(rho);

    let mut points = Vec::with_capacity(n + 1);
    points.push(rho0.matrix().clone());
    for step_idx in 0..n {
        let next = rk_step(&tab, f, &points[step_idx], h).hermitian_part();
        if !next.is_finite() {
            return Err(Error::Divergence {
                step: step_idx + 1,
                total: n,
            });
        }
        let tr = next.trace();
        if (tr.re - 1.0).abs() > tol::TOL_THETA || tr.im.abs() > tol::TOL_THETA {
            return Err(Error::Divergence {
                step: step_idx + 1,
                total: n,
            });
        }
        points.push(next);
    }
    Ok(ThetaSequence {
        n_grid: n,
        step: h,
        points,
    })
}
