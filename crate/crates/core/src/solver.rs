//! Constrained least-squares engine behind every policy.
//!
//! All policies reduce to one program: minimize ‖d − Σ_i P_i a_i‖₂ over
//! per-robot allocations a_i that are nonnegative and sum to at most that
//! robot's cache budget (a capped simplex). The engine runs projected
//! gradient descent on the squared objective with an exact sort-based
//! projection; the per-robot constraint sets are independent, so the stacked
//! problem projects each block on its own.

use nalgebra::DVector;

use crate::error::Error;
use crate::model::{Action, CloudState, FeasibleDataMatrix};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stop once the iterate moves at most this far (L2) in one step...
    pub step_tolerance: f64,
    /// ...and the objective improved by at most this much (unsquared norm).
    pub objective_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_tolerance: 1e-10,
            objective_tolerance: 1e-9,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// One action per robot (a singleton for single-robot solves).
    pub actions: Vec<Action>,
    /// ‖d − Σ P_i a_i‖₂ evaluated exactly at the returned actions.
    pub objective: f64,
    pub iterations: usize,
    /// ‖x − Π(x − ∇f(x))‖₂ at the returned point (unit-step fixed-point
    /// residual of the projected-gradient map; 0 exactly at an optimum).
    pub kkt_residual: f64,
    /// False when the iteration cap was hit; the best iterate is still
    /// returned.
    pub converged: bool,
}

impl SolveResult {
    /// The single action of a single-robot solve.
    pub fn action(&self) -> &Action {
        &self.actions[0]
    }
}

/// Exact Euclidean projection onto {x : x ≥ 0, 1ᵀx ≤ budget}.
pub fn project_capped_simplex(v: &[f64], budget: f64) -> Result<Vec<f64>> {
    if !budget.is_finite() || budget < 0.0 {
        return Err(Error::NegativeBudget(budget));
    }
    if budget == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let clipped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    let mass: f64 = clipped.iter().sum();
    if mass <= budget {
        // The orthant projection already satisfies the budget, and no point
        // of the set is closer.
        return Ok(clipped);
    }
    Ok(project_onto_scaled_simplex(v, budget))
}

/// Exact Euclidean projection onto {x : x ≥ 0, 1ᵀx = total}, total > 0.
/// Sort-based water filling: entries become max(v_i − τ, 0) with τ chosen so
/// the survivors sum to `total`.
pub fn project_onto_scaled_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cum += u;
        let candidate = (cum - total) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Minimize ‖target − counts − P·a‖₂ over the capped simplex of one robot.
pub fn solve_single(
    matrix: &FeasibleDataMatrix,
    cloud: &CloudState,
    budget: f64,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    solve_blocks(&[matrix], &[budget], cloud, cfg, None)
}

/// As [`solve_single`], warm-started from a feasible previous action. Used by
/// the best-response loop: restarting at the robot's current action makes a
/// re-solve at a fixed point return it unchanged.
pub fn solve_single_warm(
    matrix: &FeasibleDataMatrix,
    cloud: &CloudState,
    budget: f64,
    cfg: &SolverConfig,
    start: &Action,
) -> Result<SolveResult> {
    solve_blocks(
        &[matrix],
        &[budget],
        cloud,
        cfg,
        Some(&[start.counts().to_vec()]),
    )
}

/// Minimize ‖target − counts − Σ_i P_i a_i‖₂ jointly over all robots'
/// capped simplices. The minimizing sum Σ P_i a_i is unique; the split
/// between robots is whatever the descent path produced.
pub fn solve_stacked(
    matrices: &[&FeasibleDataMatrix],
    cloud: &CloudState,
    budgets: &[f64],
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    solve_blocks(matrices, budgets, cloud, cfg, None)
}

fn solve_blocks(
    matrices: &[&FeasibleDataMatrix],
    budgets: &[f64],
    cloud: &CloudState,
    cfg: &SolverConfig,
    warm: Option<&[Vec<f64>]>,
) -> Result<SolveResult> {
    let n_robot = matrices.len();
    if n_robot == 0 {
        return Err(Error::EmptyFleet);
    }
    if budgets.len() != n_robot {
        return Err(Error::DimensionMismatch {
            context: "solver budgets",
            expected: n_robot,
            actual: budgets.len(),
        });
    }
    let n = cloud.n_class();
    for m in matrices {
        if m.n_class() != n {
            return Err(Error::DimensionMismatch {
                context: "solver matrices",
                expected: n,
                actual: m.n_class(),
            });
        }
    }
    for &b in budgets {
        if !b.is_finite() || b < 0.0 {
            return Err(Error::NegativeBudget(b));
        }
    }

    let dim = n_robot * n;
    let d = cloud.deficit();

    // A is n x dim: the horizontal concatenation of the P_i (column-major here).
    let mut a_cols: Vec<&[f64]> = Vec::with_capacity(dim);
    for m in matrices {
        for j in 0..n {
            a_cols.push(m.column(j));
        }
    }
    // Gram matrix G = AᵀA and linear term h = Aᵀd of the squared objective.
    let mut gram = vec![0.0; dim * dim];
    for s in 0..dim {
        for t in s..dim {
            let dot: f64 = a_cols[s].iter().zip(a_cols[t]).map(|(x, y)| x * y).sum();
            gram[s * dim + t] = dot;
            gram[t * dim + s] = dot;
        }
    }
    let h: Vec<f64> = a_cols
        .iter()
        .map(|col| col.iter().zip(&d).map(|(x, y)| x * y).sum())
        .collect();

    // Largest eigenvalue of G by power iteration. The estimate approaches
    // lambda_max from below, so inflate it slightly: an underestimated L
    // would overshoot the monotone-descent step bound.
    let lipschitz = {
        let g = nalgebra::DMatrix::from_row_slice(dim, dim, &gram);
        let mut b = DVector::from_fn(dim, |t, _| 1.0 + t as f64 / (dim + 1) as f64);
        b /= b.norm();
        let mut lambda = 0.0;
        for _ in 0..100 {
            let gb = &g * &b;
            let norm = gb.norm();
            if norm == 0.0 {
                break;
            }
            lambda = b.dot(&gb);
            b = gb / norm;
        }
        lambda * 1.05
    };

    let mut x = vec![0.0; dim];
    if let Some(blocks) = warm {
        if blocks.len() != n_robot {
            return Err(Error::DimensionMismatch {
                context: "solver warm start",
                expected: n_robot,
                actual: blocks.len(),
            });
        }
        for (i, block) in blocks.iter().enumerate() {
            let projected = project_capped_simplex(block, budgets[i])?;
            x[i * n..(i + 1) * n].copy_from_slice(&projected);
        }
    }

    let residual_norm = |x: &[f64]| -> f64 {
        let mut r = d.clone();
        for (s, col) in a_cols.iter().enumerate() {
            let w = x[s];
            if w != 0.0 {
                for (k, &c) in col.iter().enumerate() {
                    r[k] -= w * c;
                }
            }
        }
        r.iter().map(|z| z * z).sum::<f64>().sqrt()
    };
    let gradient = |x: &[f64], out: &mut [f64]| {
        for s in 0..dim {
            let row = &gram[s * dim..(s + 1) * dim];
            out[s] = row.iter().zip(x).map(|(g, z)| g * z).sum::<f64>() - h[s];
        }
    };
    let project_blocks = |y: &[f64], out: &mut Vec<f64>| -> Result<()> {
        out.clear();
        for i in 0..n_robot {
            out.extend(project_capped_simplex(&y[i * n..(i + 1) * n], budgets[i])?);
        }
        Ok(())
    };

    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 0.0 };
    let mut objective = residual_norm(&x);
    let mut best_x = x.clone();
    let mut best_objective = objective;
    let mut grad = vec![0.0; dim];
    let mut stepped = vec![0.0; dim];
    let mut next = Vec::with_capacity(dim);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        iterations += 1;
        gradient(&x, &mut grad);
        for s in 0..dim {
            stepped[s] = x[s] - step * grad[s];
        }
        project_blocks(&stepped, &mut next)?;
        let movement = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let next_objective = residual_norm(&next);
        let improvement = objective - next_objective;
        std::mem::swap(&mut x, &mut next);
        objective = next_objective;
        if objective < best_objective {
            best_objective = objective;
            best_x.copy_from_slice(&x);
        }
        if movement <= cfg.step_tolerance && improvement.abs() <= cfg.objective_tolerance {
            converged = true;
            break;
        }
    }

    if !converged {
        x = best_x;
        objective = best_objective;
    }

    // Unit-step fixed-point residual as the optimality certificate.
    gradient(&x, &mut grad);
    for s in 0..dim {
        stepped[s] = x[s] - grad[s];
    }
    project_blocks(&stepped, &mut next)?;
    let kkt_residual = x
        .iter()
        .zip(&next)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();

    let actions = (0..n_robot)
        .map(|i| Action::new(x[i * n..(i + 1) * n].to_vec(), budgets[i]))
        .collect::<Result<Vec<_>>>()?;

    Ok(SolveResult {
        actions,
        objective,
        iterations,
        kkt_residual,
        converged,
    })
}
