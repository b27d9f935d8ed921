use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{ConeBlock, ConicBackend, ConicError, RawSolution, SolveStatus, SolverOptions, StandardForm};

/// Clarabel interior-point backend. Each call builds its own solver, so a
/// single instance serves concurrent solves.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn supports_psd(&self) -> bool {
        true
    }

    fn concurrent(&self) -> bool {
        true
    }

    fn solve(&self, sf: &StandardForm, opts: &SolverOptions) -> Result<RawSolution, ConicError> {
        let n = sf.n_vars;
        let mut ii = Vec::new();
        let mut jj = Vec::new();
        let mut vv = Vec::new();
        let mut b = Vec::with_capacity(sf.n_rows());
        let mut cones = Vec::new();
        // Per stacked row: scale applied to the svec coordinate.
        let mut scale = Vec::with_capacity(sf.n_rows());
        for block in &sf.blocks {
            let rows = block.rows();
            if rows.is_empty() {
                continue;
            }
            let row_scale: Vec<f64> = match block {
                ConeBlock::Psd { dim, .. } => super::triangle_order(*dim)
                    .map(|(i, j)| if i == j { 1.0 } else { std::f64::consts::SQRT_2 })
                    .collect(),
                _ => vec![1.0; rows.len()],
            };
            for (e, &s) in rows.iter().zip(&row_scale) {
                let r = b.len();
                for &(v, c) in &e.terms {
                    ii.push(r);
                    jj.push(v.0);
                    vv.push(-c * s);
                }
                b.push(e.constant * s);
                scale.push(s);
            }
            cones.push(match block {
                ConeBlock::Zero(r) => SupportedConeT::ZeroConeT(r.len()),
                ConeBlock::Nonneg(r) => SupportedConeT::NonnegativeConeT(r.len()),
                ConeBlock::Soc(r) => SupportedConeT::SecondOrderConeT(r.len()),
                ConeBlock::Psd { dim, .. } => SupportedConeT::PSDTriangleConeT(*dim),
            });
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, n, ii, jj, vv);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(v, c) in &sf.objective {
            q[v] += c;
        }
        // Unit-scale objective: large cost coefficients otherwise inflate the
        // duals and turn small residuals into large objective errors.
        let qmax = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let qs = if qmax > 0.0 { 1.0 / qmax } else { 1.0 };
        for v in q.iter_mut() {
            *v *= qs;
        }
        let base = DefaultSettings {
            verbose: opts.verbose,
            max_iter: opts.max_iter,
            time_limit: opts.time_limit.unwrap_or(f64::INFINITY),
            tol_gap_rel: opts.tol_gap_rel,
            tol_gap_abs: opts.tol_gap_rel,
            tol_feas: opts.tol_feas,
            reduced_tol_gap_rel: opts.accept_tol,
            reduced_tol_gap_abs: opts.accept_tol,
            reduced_tol_feas: opts.accept_tol,
            chordal_decomposition_enable: opts.chordal,
            iterative_refinement_reltol: 1e-15,
            iterative_refinement_abstol: 1e-15,
            iterative_refinement_max_iter: 50,
            ..DefaultSettings::default()
        };
        // A solve that stalls or only reaches the reduced tolerances is
        // retried with shorter steps and stronger equilibration; the best
        // result is kept.
        let retries = [
            DefaultSettings { max_step_fraction: 0.95, equilibrate_max_iter: 30, ..base.clone() },
            DefaultSettings { max_step_fraction: 0.9, static_regularization_constant: 1e-10, ..base.clone() },
        ];
        let attempts = if opts.retry_inaccurate { 1 + retries.len() } else { 1 };
        let mut best: Option<clarabel::solver::DefaultSolution<f64>> = None;
        for settings in std::iter::once(base.clone()).chain(retries).take(attempts) {
            let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
                .map_err(|e| ConicError::BackendFailure(format!("{e:?}")))?;
            solver.solve();
            let sol = solver.solution;
            let keep = match &best {
                None => true,
                Some(prev) => {
                    let (r, rp) = (rank(sol.status), rank(prev.status));
                    r < rp || (r == rp && r == 1 && accuracy(&sol) < accuracy(prev))
                }
            };
            if keep {
                best = Some(sol);
            }
            if !best.as_ref().is_some_and(|b| retryable(b.status)) {
                break;
            }
        }
        let sol = best.expect("at least one attempt");
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            _ => SolveStatus::NumericalTrouble,
        };
        // Undo the svec scaling so PSD duals read as matrix entries.
        let z = sol.z.iter().zip(&scale).map(|(z, s)| z / s / qs).collect();
        Ok(RawSolution {
            status,
            objective: sol.obj_val / qs,
            dual_objective: sol.obj_val_dual / qs,
            x: sol.x.clone(),
            z,
            iterations: sol.iterations,
            solve_time: sol.solve_time,
        })
    }
}

/// Worst of the relative gap and the primal and dual residuals.
fn accuracy(sol: &clarabel::solver::DefaultSolution<f64>) -> f64 {
    let gap = (sol.obj_val - sol.obj_val_dual).abs() / (1.0 + sol.obj_val.abs().min(sol.obj_val_dual.abs()));
    gap.max(sol.r_prim).max(sol.r_dual)
}

fn retryable(s: SolverStatus) -> bool {
    matches!(
        s,
        SolverStatus::AlmostSolved
            | SolverStatus::NumericalError
            | SolverStatus::InsufficientProgress
            | SolverStatus::MaxIterations
    )
}

fn rank(s: SolverStatus) -> u8 {
    match s {
        SolverStatus::Solved => 0,
        SolverStatus::AlmostSolved => 1,
        _ => 2,
    }
}
