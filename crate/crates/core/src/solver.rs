use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SparseSystem};
use crate::weight::WeightField;

/// Hard cap on the dense LU path; it exists as an oracle, not a workhorse.
pub const DIRECT_MAX_N: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Cg,
    BiCgStab,
    Direct,
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveMethod::Cg => write!(f, "cg"),
            SolveMethod::BiCgStab => write!(f, "bicgstab"),
            SolveMethod::Direct => write!(f, "direct"),
        }
    }
}

/// Outcome of a linear solve. A non-converged report carries the best
/// iterate reached; only structural failures (method mismatch, breakdown,
/// singular factorization) surface as errors.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub final_residual: f64,
    pub method: SolveMethod,
    pub converged: bool,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm of `b - A x`.
pub fn residual(system: &SparseSystem, x: &[f64]) -> Result<f64> {
    if x.len() != system.n() {
        return Err(Error::LengthMismatch {
            got: x.len(),
            expected: system.n(),
        });
    }
    let mut ax = vec![0.0; system.n()];
    system.matrix.mul_vec(x, &mut ax);
    Ok(system
        .rhs
        .iter()
        .zip(&ax)
        .map(|(b, a)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt())
}

/// Solves `A x = b` with the requested method.
///
/// Convergence means `‖b - A x‖ ≤ tolerance · (1 + ‖b‖)`.
pub fn solve(
    system: &SparseSystem,
    method: SolveMethod,
    tolerance: f64,
    max_iterations: usize,
) -> Result<SolveReport> {
    match method {
        SolveMethod::Cg => {
            if !system.symmetric_hint {
                return Err(Error::MethodMismatch);
            }
            cg(system, tolerance, max_iterations)
        }
        SolveMethod::BiCgStab => bicgstab(system, tolerance, max_iterations),
        SolveMethod::Direct => direct(system),
    }
}

/// Jacobi-preconditioned conjugate gradients.
fn cg(system: &SparseSystem, tol: f64, max_iter: usize) -> Result<SolveReport> {
    let a = &system.matrix;
    let b = &system.rhs;
    let n = system.n();
    let target = tol * (1.0 + norm2(b));
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm2(&r);
    let mut iterations = 0;

    while res > target && iterations < max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        // Recurrence residuals drift; recompute the true one periodically.
        if iterations % 50 == 0 {
            let mut ax = vec![0.0; n];
            a.mul_vec(&x, &mut ax);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
        }
        res = norm2(&r);
    }

    // Report the true residual, not the recurrence value.
    let mut ax = vec![0.0; n];
    a.mul_vec(&x, &mut ax);
    let final_residual = b
        .iter()
        .zip(&ax)
        .map(|(bi, ai)| (bi - ai) * (bi - ai))
        .sum::<f64>()
        .sqrt();
    Ok(SolveReport {
        solution: x,
        iterations,
        final_residual,
        method: SolveMethod::Cg,
        converged: final_residual <= target,
    })
}

/// Unpreconditioned BiCGStab.
fn bicgstab(system: &SparseSystem, tol: f64, max_iter: usize) -> Result<SolveReport> {
    let a = &system.matrix;
    let b = &system.rhs;
    let n = system.n();
    let target = tol * (1.0 + norm2(b));

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm2(&r);
    let mut r0_norm = res;
    let mut just_restarted = false;

    let mut iterations = 0;
    while res > target && iterations < max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-14 * r0_norm * res {
            // The shadow residual has lost its overlap with the residual
            // (this happens structurally, e.g. when the right-hand side is
            // supported on identity rows). Restart with a fresh shadow
            // vector; the next pass cannot restart again because
            // dot(r, r) = res^2 clears the threshold.
            r0.copy_from_slice(&r);
            r0_norm = res;
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            just_restarted = true;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        a.mul_vec(&p, &mut v);
        let r0v = dot(&r0, &v);
        if r0v.abs() < 1e-14 * r0_norm * norm2(&v) {
            if just_restarted {
                // A fresh shadow vector did not help: genuine breakdown.
                return Err(Error::Breakdown {
                    iteration: iterations,
                    rho: r0v,
                });
            }
            // Same degeneracy through the search direction; restart.
            r0.copy_from_slice(&r);
            r0_norm = res;
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            just_restarted = true;
            continue;
        }
        just_restarted = false;
        alpha = rho / r0v;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= target {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            iterations += 1;
            r.copy_from_slice(&s);
            break;
        }
        a.mul_vec(&s, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(Error::Breakdown {
                iteration: iterations,
                rho: tt,
            });
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        iterations += 1;
        res = norm2(&r);
        if !res.is_finite() {
            return Err(Error::Breakdown {
                iteration: iterations,
                rho: res,
            });
        }
    }

    let mut ax = vec![0.0; n];
    a.mul_vec(&x, &mut ax);
    let final_residual = b
        .iter()
        .zip(&ax)
        .map(|(bi, ai)| (bi - ai) * (bi - ai))
        .sum::<f64>()
        .sqrt();
    Ok(SolveReport {
        solution: x,
        iterations,
        final_residual,
        method: SolveMethod::BiCgStab,
        converged: final_residual <= target,
    })
}

/// Dense LU, used as an independent oracle for the iterative methods.
fn direct(system: &SparseSystem) -> Result<SolveReport> {
    let n = system.n();
    if n > DIRECT_MAX_N {
        return Err(Error::DirectTooLarge {
            n,
            cap: DIRECT_MAX_N,
        });
    }
    let dense = system.matrix.to_dense();
    let lu = dense.lu();
    let b = nalgebra::DVector::from_column_slice(&system.rhs);
    let x = lu.solve(&b).ok_or(Error::SingularMatrix)?;
    let solution: Vec<f64> = x.iter().cloned().collect();
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    let final_residual = residual(system, &solution)?;
    Ok(SolveReport {
        solution,
        iterations: 0,
        final_residual,
        method: SolveMethod::Direct,
        converged: final_residual <= 1e-8 * (1.0 + norm2(&system.rhs)),
    })
}

/// Bare conjugate-gradient solve on an SPD matrix, for internal eigenvalue
/// and constant estimation loops. Relative tolerance on the residual.
pub(crate) fn cg_raw(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = a.n_rows();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    a.mul_vec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let target = tol * (1.0 + norm2(b));
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut it = 0;
    while norm2(&r) > target && it < max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    Ok(x)
}

/// Verdict of the singularity diagnosis.
#[derive(Debug, Clone, PartialEq)]
pub enum SingularityDiagnosis {
    Ok,
    /// Constant vectors are (numerically) in the nullspace; evidence is the
    /// norm of `A · 1` relative to `‖A‖`.
    ConstantNullspace { residual: f64 },
    /// Condition estimate above 1e12.
    IllConditioned { condition_estimate: f64 },
}

/// Diagnoses the structural failure modes of an assembled system: a pure
/// Neumann problem (no Dirichlet data and vanishing weight, constant
/// nullspace) or near-singularity by condition estimate.
pub fn detect_singularity(
    system: &SparseSystem,
    domain: &DomainSpec,
    weight: &WeightField,
) -> Result<SingularityDiagnosis> {
    let n = system.n();
    if n == 0 {
        return Ok(SingularityDiagnosis::Ok);
    }
    let a = &system.matrix;
    let norm_a = a.norm_inf().max(f64::MIN_POSITIVE);

    // Constant nullspace check: row sums of A.
    let ones = vec![1.0; n];
    let mut a1 = vec![0.0; n];
    a.mul_vec(&ones, &mut a1);
    let a1_norm = a1.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
    if a1_norm < 1e-12 * norm_a {
        return Ok(SingularityDiagnosis::ConstantNullspace { residual: a1_norm });
    }

    // The structural causes worth naming even when rounding keeps the row
    // sums slightly off zero: no Dirichlet data combined with an all-zero
    // weight is a pure Neumann Laplacian.
    let all_zero_weight = domain
        .unknown_pixels()
        .iter()
        .all(|&p| weight.c.values()[p] <= f64::EPSILON);
    if !domain.has_dirichlet_data() && all_zero_weight {
        return Ok(SingularityDiagnosis::ConstantNullspace { residual: a1_norm });
    }

    // Condition estimate via dense SVD for moderate sizes.
    if n <= 2000 {
        let dense = a.to_dense();
        let svd = dense.svd(false, false);
        let smax = svd
            .singular_values
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        let smin = svd
            .singular_values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if cond > 1e12 {
            return Ok(SingularityDiagnosis::IllConditioned {
                condition_estimate: cond,
            });
        }
    }
    Ok(SingularityDiagnosis::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{CsrBuilder, SystemOrigin};

    /// Deterministic SPD test matrix: diagonally dominant with pseudo-random
    /// symmetric off-diagonal entries.
    fn spd_system(n: usize, seed: u64) -> SparseSystem {
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 1000) as f64 / 1000.0 - 0.5
        };
        let mut b = CsrBuilder::new(n, n);
        let mut diag = vec![2.0; n];
        for i in 0..n {
            for &j in &[(i + 1) % n, (i + 7) % n] {
                if j == i {
                    continue;
                }
                let v = 0.3 * next();
                b.add(i, j, v);
                b.add(j, i, v);
                diag[i] += v.abs() + 0.1;
                diag[j] += v.abs() + 0.1;
            }
        }
        for i in 0..n {
            b.add(i, i, diag[i]);
        }
        let rhs: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 100) as f64 / 50.0 - 1.0).collect();
        SparseSystem {
            matrix: b.build(),
            rhs,
            symmetric_hint: true,
            origin: SystemOrigin::Dirichlet,
        }
    }

    fn laplace_1d(n: usize) -> SparseSystem {
        let mut b = CsrBuilder::new(n, n);
        for i in 0..n {
            b.add(i, i, 2.0);
            if i > 0 {
                b.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
            }
        }
        SparseSystem {
            matrix: b.build(),
            rhs: vec![1.0; n],
            symmetric_hint: true,
            origin: SystemOrigin::Dirichlet,
        }
    }

    #[test]
    fn three_methods_agree_on_spd_systems() {
        for &(n, seed) in &[(50usize, 3u64), (200, 17), (800, 99)] {
            let sys = spd_system(n, seed);
            let d = solve(&sys, SolveMethod::Direct, 1e-12, 0).unwrap();
            let c = solve(&sys, SolveMethod::Cg, 1e-12, 10 * n).unwrap();
            let s = solve(&sys, SolveMethod::BiCgStab, 1e-12, 10 * n).unwrap();
            assert!(c.converged && s.converged && d.converged);
            let dn = d.solution.iter().map(|v| v * v).sum::<f64>().sqrt();
            for m in [&c.solution, &s.solution] {
                let diff = m
                    .iter()
                    .zip(&d.solution)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(diff <= 1e-8 * dn.max(1.0), "n = {n}: diff {diff}");
            }
        }
    }

    #[test]
    fn converged_honours_residual_contract() {
        let sys = laplace_1d(300);
        for (m, it) in [(SolveMethod::Cg, 5000), (SolveMethod::BiCgStab, 5000)] {
            let rep = solve(&sys, m, 1e-10, it).unwrap();
            assert!(rep.converged);
            let bnorm = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(rep.final_residual <= 1e-10 * (1.0 + bnorm));
            assert!((residual(&sys, &rep.solution).unwrap() - rep.final_residual).abs() < 1e-12);
        }
    }

    #[test]
    fn non_converged_returns_best_iterate() {
        let sys = laplace_1d(400);
        let rep = solve(&sys, SolveMethod::Cg, 1e-12, 40).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 40);
        // The returned iterate beats the zero start in the energy that cg
        // minimizes: E(x) = x'Ax/2 - b'x, with E(0) = 0. (The plain residual
        // norm is not monotone and can exceed ‖b‖ early on.)
        let x = &rep.solution;
        let mut ax = vec![0.0; x.len()];
        sys.matrix.mul_vec(x, &mut ax);
        let energy = 0.5 * x.iter().zip(&ax).map(|(a, b)| a * b).sum::<f64>()
            - sys.rhs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        assert!(energy < 0.0);
    }

    #[test]
    fn cg_rejects_nonsymmetric_hint() {
        let mut sys = laplace_1d(10);
        sys.symmetric_hint = false;
        assert!(matches!(
            solve(&sys, SolveMethod::Cg, 1e-10, 100),
            Err(Error::MethodMismatch)
        ));
    }

    #[test]
    fn cg_error_monotone_in_energy_norm() {
        // The energy-norm error of cg iterates never increases; sample it
        // every 10 iterations against the direct solution.
        let sys = spd_system(300, 5);
        let exact = solve(&sys, SolveMethod::Direct, 1e-12, 0).unwrap().solution;
        let a_norm_err = |x: &[f64]| -> f64 {
            let e: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
            let mut ae = vec![0.0; e.len()];
            sys.matrix.mul_vec(&e, &mut ae);
            e.iter().zip(&ae).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
        };
        let mut prev = f64::INFINITY;
        for iters in (10..200).step_by(10) {
            let rep = solve(&sys, SolveMethod::Cg, 1e-16, iters).unwrap();
            let err = a_norm_err(&rep.solution);
            assert!(
                err <= prev * (1.0 + 1e-9) + 1e-13,
                "energy error grew at {iters}: {prev} -> {err}"
            );
            prev = err;
        }
    }

    #[test]
    fn direct_solution_residual_contract() {
        let sys = spd_system(500, 23);
        let rep = solve(&sys, SolveMethod::Direct, 1e-12, 0).unwrap();
        let bnorm = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rep.final_residual < 1e-10 * bnorm.max(1.0));
    }

    #[test]
    fn residual_perturbation_operator_bound() {
        let sys = spd_system(100, 7);
        let rep = solve(&sys, SolveMethod::Direct, 1e-12, 0).unwrap();
        let base = residual(&sys, &rep.solution).unwrap();
        let delta = 1e-3;
        let mut x = rep.solution.clone();
        x[42] += delta;
        let perturbed = residual(&sys, &x).unwrap();
        let bound = sys.matrix.norm_inf() * delta * (sys.n() as f64).sqrt();
        assert!(perturbed - base <= bound + 1e-12);
    }

    #[test]
    fn direct_cap_enforced() {
        let sys = laplace_1d(DIRECT_MAX_N + 1);
        assert!(matches!(
            solve(&sys, SolveMethod::Direct, 1e-10, 0),
            Err(Error::DirectTooLarge { .. })
        ));
    }

    #[test]
    fn residual_checks_length() {
        let sys = laplace_1d(10);
        assert!(matches!(
            residual(&sys, &[0.0; 9]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn cg_raw_solves_spd() {
        let sys = spd_system(150, 31);
        let x = cg_raw(&sys.matrix, &sys.rhs, None, 1e-12, 3000).unwrap();
        let mut ax = vec![0.0; sys.n()];
        sys.matrix.mul_vec(&x, &mut ax);
        let r: f64 = sys
            .rhs
            .iter()
            .zip(&ax)
            .map(|(b, a)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        assert!(r < 1e-9);
    }

    #[test]
    fn singular_neumann_matrix_diagnosed() {
        // Pure Neumann 1D Laplacian: rows sum to zero.
        let n = 50;
        let mut b = CsrBuilder::new(n, n);
        for i in 0..n {
            let mut deg = 0.0;
            if i > 0 {
                b.add(i, i - 1, -1.0);
                deg += 1.0;
            }
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
                deg += 1.0;
            }
            b.add(i, i, deg);
        }
        let sys = SparseSystem {
            matrix: b.build(),
            rhs: vec![0.0; n],
            symmetric_hint: true,
            origin: SystemOrigin::Collocation,
        };
        use crate::field::{BoolField, ScalarField};
        let d = DomainSpec::build(&BoolField::filled(8, 8, false), 1.0).unwrap();
        let w =
            WeightField::from_values(ScalarField::constant(8, 8, 1.0, 0.0).unwrap()).unwrap();
        match detect_singularity(&sys, &d, &w).unwrap() {
            SingularityDiagnosis::ConstantNullspace { residual } => {
                assert!(residual < 1e-12 * sys.matrix.norm_inf())
            }
            other => panic!("expected constant nullspace, got {other:?}"),
        }
        // Direct LU refuses the singular matrix.
        assert!(matches!(
            solve(&sys, SolveMethod::Direct, 1e-10, 0),
            Err(Error::SingularMatrix) | Ok(SolveReport { converged: false, .. })
        ));
    }

    #[test]
    fn well_conditioned_matrix_passes() {
        let sys = laplace_1d(64);
        use crate::field::{BoolField, ScalarField};
        let d = DomainSpec::build(&BoolField::filled(8, 8, false), 1.0).unwrap();
        let w =
            WeightField::from_values(ScalarField::constant(8, 8, 1.0, 0.5).unwrap()).unwrap();
        assert_eq!(
            detect_singularity(&sys, &d, &w).unwrap(),
            SingularityDiagnosis::Ok
        );
    }

    #[test]
    fn near_singular_matrix_flagged() {
        let mut b = CsrBuilder::new(3, 3);
        b.add(0, 0, 1.0);
        b.add(1, 1, 1.0);
        b.add(2, 2, 1e-14);
        let sys = SparseSystem {
            matrix: b.build(),
            rhs: vec![1.0; 3],
            symmetric_hint: true,
            origin: SystemOrigin::Weak,
        };
        use crate::field::{BoolField, ScalarField};
        let d = DomainSpec::build(&BoolField::filled(3, 3, false), 1.0).unwrap();
        let w =
            WeightField::from_values(ScalarField::constant(3, 3, 1.0, 0.5).unwrap()).unwrap();
        assert!(matches!(
            detect_singularity(&sys, &d, &w).unwrap(),
            SingularityDiagnosis::IllConditioned { condition_estimate } if condition_estimate > 1e12
        ));
    }
}
