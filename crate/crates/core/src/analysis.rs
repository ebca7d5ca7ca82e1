use crate::assembly::{assemble_collocation, assemble_dirichlet, laplacian_reflected};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::field::{BoolField, ScalarField};
use crate::solver::{solve, SolveMethod};
use crate::sparse::{CsrBuilder, SparseSystem, SystemOrigin};
use crate::weight::{
    check_admissibility, compute_gradient, generalized_lambda_max, mass_diag,
    quadratic_kappa_prime, v_inner, weighted_stiffness, CoefficientField, WeightField, TOL_DEG,
    TOL_GRAD_SCALE,
};
use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exact radial solution of the annulus model problem: harmonic in the
/// annulus ε < r < 1 with value 1 on the inner circle and 0 on the outer.
pub fn annulus_exact(epsilon: f64, x: f64, y: f64) -> Result<f64> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::BadEpsilon(epsilon));
    }
    let r2 = x * x + y * y;
    let r = r2.sqrt();
    if r < epsilon - 1e-12 || r > 1.0 + 1e-12 {
        return Err(Error::OutsideAnnulus {
            x,
            y,
            r,
            eps: epsilon,
        });
    }
    Ok(r2.ln() / (2.0 * epsilon.ln()))
}

/// One row of the annulus convergence table.
#[derive(Debug, Clone)]
pub struct AnnulusErrorRow {
    pub resolution: usize,
    pub spacing: f64,
    pub max_error: f64,
    pub measured_pixels: usize,
}

/// Embeds the annulus in a square grid over [-1.1, 1.1]^2 at the given
/// resolution. Pixels inside the ε-disk and outside the unit disk are
/// known; their values sample the exact radial solution at the pixel's own
/// radius (clamped away from the origin), so that the staircased circles
/// carry data consistent with the continuum solution and the measured
/// error reflects the scheme rather than the O(h) shift of the effective
/// circle radius. The grid frame itself stays in the Neumann role.
/// When the ε-disk captures no pixel, the pixel nearest the center is
/// pinned to 1 instead, keeping the discrete system uniquely solvable even
/// for arbitrarily small ε.
pub fn annulus_grid(epsilon: f64, resolution: usize) -> Result<(DomainSpec, ScalarField)> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::BadEpsilon(epsilon));
    }
    let n = resolution;
    let h = 2.2 / (n - 1) as f64;
    let coord = |k: usize| -> f64 { k as f64 * h - 1.1 };
    let mut any_inner = false;
    let mut mask = BoolField::filled(n, n, false);
    let mut f = ScalarField::constant(n, n, h, 0.0)?;
    for j in 0..n {
        for i in 0..n {
            let frame = i == 0 || j == 0 || i == n - 1 || j == n - 1;
            let r = (coord(i).powi(2) + coord(j).powi(2)).sqrt();
            if frame {
                continue;
            }
            if r <= epsilon || r >= 1.0 {
                mask.set(i, j, true);
                let rr = r.max(0.5 * h);
                f.set(i, j, rr.ln() / epsilon.ln());
                any_inner |= r <= epsilon;
            }
        }
    }
    if !any_inner {
        // Pin the pixel nearest the origin.
        let mut best = (usize::MAX, usize::MAX);
        let mut best_r = f64::INFINITY;
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let r = (coord(i).powi(2) + coord(j).powi(2)).sqrt();
                if r < best_r {
                    best_r = r;
                    best = (i, j);
                }
            }
        }
        mask.set(best.0, best.1, true);
        f.set(best.0, best.1, 1.0);
    }
    Ok((DomainSpec::build(&mask, h)?, f))
}

/// Solves the annulus problem at each resolution and reports the max-norm
/// error against the exact solution, measured away from the staircased
/// circles (further than 2h from both).
pub fn annulus_convergence(epsilon: f64, resolutions: &[usize]) -> Result<Vec<AnnulusErrorRow>> {
    if resolutions.is_empty()
        || resolutions.iter().any(|&n| n < 33)
        || resolutions.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::BadResolutions(resolutions.to_vec()));
    }
    let mut rows = Vec::new();
    for &n in resolutions {
        let (domain, f) = annulus_grid(epsilon, n)?;
        let h = domain.spacing();
        let sys = assemble_dirichlet(&domain, &f)?;
        let rep = solve(&sys, SolveMethod::Cg, 1e-10, 20 * sys.n())?;
        let coord = |k: usize| -> f64 { k as f64 * h - 1.1 };
        let mut max_error: f64 = 0.0;
        let mut measured = 0;
        for (r_idx, &p) in domain.unknown_pixels().iter().enumerate() {
            let (i, j) = domain.coords(p);
            let (x, y) = (coord(i), coord(j));
            let r = (x * x + y * y).sqrt();
            if r < epsilon + 2.0 * h || r > 1.0 - 2.0 * h {
                continue;
            }
            let exact = annulus_exact(epsilon, x, y)?;
            max_error = max_error.max((rep.solution[r_idx] - exact).abs());
            measured += 1;
        }
        rows.push(AnnulusErrorRow {
            resolution: n,
            spacing: h,
            max_error,
            measured_pixels: measured,
        });
    }
    Ok(rows)
}

/// Geometry of the capacity domain D.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityGeometry {
    UnitSquare,
    UnitDisk,
}

/// Result of the constrained capacity minimization.
#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub value: f64,
    pub alpha: f64,
    pub minimizer: ScalarField,
    pub resolution: usize,
}

/// Discrete α-capacity of the region E inside D: the minimum of
/// `Σ |∇u|² + α Σ u²` over fields with u = 1 on E and u = 0 on ∂D.
///
/// The continuum definition constrains u ≥ 1 near E; the quadratic
/// minimizer with the equality constraint stays in [0, 1] by the discrete
/// maximum principle, so the inequality is active exactly on E.
pub fn alpha_capacity(
    resolution: usize,
    region_e: &BoolField,
    alpha: f64,
    geometry: CapacityGeometry,
) -> Result<CapacityResult> {
    let n = resolution;
    if n < 3 {
        return Err(Error::GridTooSmall {
            width: n,
            height: n,
        });
    }
    if region_e.width() != n || region_e.height() != n {
        return Err(Error::DimensionMismatch {
            got_w: region_e.width(),
            got_h: region_e.height(),
            want_w: n,
            want_h: n,
        });
    }
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::BadAlpha(alpha));
    }
    if region_e.count() == 0 {
        return Err(Error::EmptyRegion);
    }

    // D and its fixed-zero boundary under the chosen geometry.
    let h = match geometry {
        CapacityGeometry::UnitSquare => 1.0 / (n - 1) as f64,
        CapacityGeometry::UnitDisk => 2.0 / (n - 1) as f64,
    };
    let offset = match geometry {
        CapacityGeometry::UnitSquare => 0.0,
        CapacityGeometry::UnitDisk => 1.0,
    };
    let coord = |k: usize| -> f64 { k as f64 * h - offset };
    let is_outside = |i: usize, j: usize| -> bool {
        let frame = i == 0 || j == 0 || i == n - 1 || j == n - 1;
        match geometry {
            CapacityGeometry::UnitSquare => frame,
            CapacityGeometry::UnitDisk => {
                frame || coord(i).powi(2) + coord(j).powi(2) >= 1.0
            }
        }
    };
    for j in 0..n {
        for i in 0..n {
            if !region_e.get(i, j) {
                continue;
            }
            let near_boundary = match geometry {
                CapacityGeometry::UnitSquare => i == 0 || j == 0 || i == n - 1 || j == n - 1,
                CapacityGeometry::UnitDisk => {
                    (coord(i).powi(2) + coord(j).powi(2)).sqrt() >= 1.0 - h
                }
            };
            if near_boundary {
                return Err(Error::RegionTouchesBoundary);
            }
        }
    }

    // Fixed values: 1 on E, 0 outside D; everything else is free.
    let mut fixed = vec![None; n * n];
    for j in 0..n {
        for i in 0..n {
            let p = j * n + i;
            if region_e.get(i, j) {
                fixed[p] = Some(1.0);
            } else if is_outside(i, j) {
                fixed[p] = Some(0.0);
            }
        }
    }
    let mut free_index = vec![None; n * n];
    let mut free_pixels = Vec::new();
    for (p, fx) in fixed.iter().enumerate() {
        if fx.is_none() {
            free_index[p] = Some(free_pixels.len());
            free_pixels.push(p);
        }
    }

    // Geometry helper domain for faces and volumes (known set irrelevant).
    let shape = DomainSpec::build(&BoolField::filled(n, n, false), h)?;
    let nf = free_pixels.len();
    let mut b = CsrBuilder::new(nf, nf);
    let mut rhs = vec![0.0; nf];
    let mut diag_extra = vec![0.0; nf];
    for (r, &p) in free_pixels.iter().enumerate() {
        diag_extra[r] = alpha * shape.volume(p);
    }
    for face in shape.faces() {
        let (fp, fq) = (free_index[face.p], free_index[face.q]);
        match (fp, fq) {
            (Some(r), Some(s)) => {
                b.add(r, r, face.t);
                b.add(s, s, face.t);
                b.add(r, s, -face.t);
                b.add(s, r, -face.t);
            }
            (Some(r), None) => {
                b.add(r, r, face.t);
                rhs[r] += face.t * fixed[face.q].unwrap();
            }
            (None, Some(s)) => {
                b.add(s, s, face.t);
                rhs[s] += face.t * fixed[face.p].unwrap();
            }
            (None, None) => {}
        }
    }
    for (r, &extra) in diag_extra.iter().enumerate() {
        b.add(r, r, extra);
    }
    let sys = SparseSystem {
        matrix: b.build(),
        rhs,
        symmetric_hint: true,
        origin: SystemOrigin::Dirichlet,
    };
    let rep = solve(&sys, SolveMethod::Cg, 1e-12, 40 * nf.max(10))?;

    let mut minimizer = ScalarField::constant(n, n, h, 0.0)?;
    for (p, fx) in fixed.iter().enumerate() {
        if let Some(v) = fx {
            minimizer.values_mut()[p] = *v;
        }
    }
    for (r, &p) in free_pixels.iter().enumerate() {
        minimizer.values_mut()[p] = rep.solution[r];
    }

    // Energy of the minimizer: face gradients plus the α mass term.
    let mut value = 0.0;
    for face in shape.faces() {
        let du = minimizer.values()[face.q] - minimizer.values()[face.p];
        value += face.t * du * du;
    }
    for p in 0..n * n {
        value += alpha * shape.volume(p) * minimizer.values()[p].powi(2);
    }
    Ok(CapacityResult {
        value,
        alpha,
        minimizer,
        resolution: n,
    })
}

/// Friedrichs constant of the weighted space: the largest ratio of squared
/// L² norm to squared weighted gradient seminorm over fields vanishing on
/// the known set, computed by power iteration on the generalized
/// eigenproblem of the mass matrix against the weighted stiffness.
pub fn friedrichs_constant(domain: &DomainSpec, weight: &WeightField) -> Result<f64> {
    if !domain.has_dirichlet_data() {
        return Err(Error::NoDirichletData);
    }
    // The constant is unbounded when some unknown pixels have no diffusion
    // path (faces with positive face weight) to the known data: constants
    // supported there have zero seminorm but positive norm.
    let cw = weight.c.values();
    let positive = |p: usize, q: usize| -> bool {
        0.5 * ((1.0 - cw[p]) + (1.0 - cw[q])) > TOL_DEG
    };
    let mut reached = vec![false; domain.num_pixels()];
    let mut queue = std::collections::VecDeque::new();
    for &p in domain.unknown_pixels() {
        if domain
            .neighbors(p)
            .any(|q| domain.is_known(q) && positive(p, q))
        {
            reached[p] = true;
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        for q in domain.neighbors(p) {
            if !domain.is_known(q) && !reached[q] && positive(p, q) {
                reached[q] = true;
                queue.push_back(q);
            }
        }
    }
    let unreached = domain
        .unknown_pixels()
        .iter()
        .filter(|&&p| !reached[p])
        .count();
    if unreached > 0 {
        return Err(Error::UnboundedConstant { count: unreached });
    }

    let stiff = weighted_stiffness(domain, weight);
    let mass = mass_diag(domain);
    generalized_lambda_max(&stiff, &mass)
}

/// Outcome of the stability-bound verification.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub v_norm: f64,
    pub surrogate: f64,
    pub stability_factor: f64,
    pub bound: f64,
    pub satisfied: bool,
    pub margin: f64,
    /// The data-norm surrogate is infinite: the weight reaches 1 where the
    /// image gradient does not vanish, so the boundedness hypothesis on the
    /// right-hand side fails.
    pub infinite_surrogate: bool,
    pub kappa0: f64,
    pub kappa_prime: f64,
}

fn l2_on_unknowns(domain: &DomainSpec, mut values: impl FnMut(usize) -> f64) -> f64 {
    domain
        .unknown_pixels()
        .iter()
        .map(|&p| domain.volume(p) * values(p).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Verifies the a-priori stability bound: the weighted norm of the solved
/// offset v = u - f must not exceed `(1 + κ₀)/κ′` times the three-term
/// surrogate `‖g‖ + ‖Δf‖ + ‖∇f/√(1-c)‖` of the data norm.
pub fn stability_check(
    domain: &DomainSpec,
    weight: &WeightField,
    f: &ScalarField,
) -> Result<StabilityReport> {
    let coeffs = CoefficientField::from_weight(weight);
    let kappa_prime = quadratic_kappa_prime(&coeffs, domain);
    let kappa0 = friedrichs_constant(domain, weight)?;
    let stability_factor = if kappa_prime > 0.0 {
        (1.0 + kappa0) / kappa_prime
    } else {
        f64::INFINITY
    };

    let sys = crate::assembly::assemble_weak(domain, weight, f)?;
    let method = if sys.symmetric_hint {
        SolveMethod::Cg
    } else {
        SolveMethod::BiCgStab
    };
    let rep = solve(&sys, method, 1e-12, 30 * sys.n().max(10))?;
    let mut v_field = ScalarField::constant(f.width(), f.height(), f.spacing(), 0.0)?;
    for (r, &p) in domain.unknown_pixels().iter().enumerate() {
        v_field.values_mut()[p] = rep.solution[r];
    }
    let v_norm = v_inner(&v_field, &v_field, weight, domain)?.max(0.0).sqrt();

    let lap_f = laplacian_reflected(f)?;
    let (fx, fy) = compute_gradient(f)?;
    let cw = weight.c.values();
    let tol_grad = TOL_GRAD_SCALE / domain.spacing();
    let mut infinite_surrogate = false;
    let g_norm: f64 = l2_on_unknowns(domain, |p| (1.0 - cw[p]) * lap_f.values()[p]);
    let lap_norm = l2_on_unknowns(domain, |p| lap_f.values()[p]);
    let grad_norm = l2_on_unknowns(domain, |p| {
        let gmag = (fx.values()[p].powi(2) + fy.values()[p].powi(2)).sqrt();
        let w = 1.0 - cw[p];
        if w <= TOL_DEG {
            if gmag > tol_grad {
                infinite_surrogate = true;
            }
            0.0
        } else {
            gmag / w.sqrt()
        }
    });
    let surrogate = if infinite_surrogate {
        f64::INFINITY
    } else {
        g_norm + lap_norm + grad_norm
    };
    let bound = stability_factor * surrogate;
    let satisfied = v_norm <= bound;
    Ok(StabilityReport {
        v_norm,
        surrogate,
        stability_factor,
        bound,
        satisfied,
        margin: bound - v_norm,
        infinite_surrogate,
        kappa0,
        kappa_prime,
    })
}

/// The constants of the well-posedness theory for one configuration.
#[derive(Debug, Clone)]
pub struct ConstantEstimates {
    /// Growth constant of the weight (continuity).
    pub kappa: f64,
    /// Coercivity constant of the quadratic condition.
    pub kappa_prime: f64,
    /// Friedrichs constant.
    pub kappa0: f64,
    /// (1 + kappa0) / kappa_prime.
    pub stability_factor: f64,
    /// Three-term surrogate of the data norm, when image data is supplied.
    pub f_norm_bound: Option<f64>,
    /// Finite part of the boundary-concentration sequence.
    pub a_sequence: Vec<f64>,
}

/// Computes every constant the theory asks for on one configuration.
pub fn estimate_constants(
    domain: &DomainSpec,
    weight: &WeightField,
    f: Option<&ScalarField>,
    exhaustion_levels: usize,
) -> Result<ConstantEstimates> {
    let report = check_admissibility(weight, domain, exhaustion_levels)?;
    let kappa0 = friedrichs_constant(domain, weight)?;
    let stability_factor = if report.kappa_prime_max > 0.0 {
        (1.0 + kappa0) / report.kappa_prime_max
    } else {
        f64::INFINITY
    };
    let f_norm_bound = match f {
        None => None,
        Some(field) => {
            let stab = stability_check(domain, weight, field)?;
            Some(stab.surrogate)
        }
    };
    Ok(ConstantEstimates {
        kappa: report.kappa_min,
        kappa_prime: report.kappa_prime_max,
        kappa0,
        stability_factor,
        f_norm_bound,
        a_sequence: report.a_sequence,
    })
}

/// Mean squared reconstruction error of a mask: the image is rebuilt from
/// the masked pixels by harmonic inpainting (binary-weight collocation,
/// which tolerates mask pixels on the frame) and compared to the original.
pub fn reconstruction_mse(image: &ScalarField, mask: &BoolField) -> Result<f64> {
    let (w, h) = (image.width(), image.height());
    if mask.width() != w || mask.height() != h {
        return Err(Error::DimensionMismatch {
            got_w: mask.width(),
            got_h: mask.height(),
            want_w: w,
            want_h: h,
        });
    }
    let shape = DomainSpec::build(&BoolField::filled(w, h, false), image.spacing())?;
    let c = ScalarField::new(
        w,
        h,
        image.spacing(),
        mask.values().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
    )?;
    let weight = WeightField::from_values(c)?;
    let sys = assemble_collocation(&shape, &weight, image)?;
    let method = if sys.symmetric_hint {
        SolveMethod::Cg
    } else {
        SolveMethod::BiCgStab
    };
    let rep = solve(&sys, method, 1e-9, 20 * sys.n())?;
    let mse = rep
        .solution
        .iter()
        .zip(image.values())
        .map(|(u, f)| (u - f) * (u - f))
        .sum::<f64>()
        / (w * h) as f64;
    Ok(mse)
}

/// Picks a sparse pixel mask with good reconstruction properties by a
/// stochastic greedy search: start from a random mask at the target
/// density, repeatedly relocate a small fraction of mask pixels and keep
/// the move only when the reconstruction error strictly improves.
/// Deterministic for a fixed seed.
pub fn sparsify_mask(
    image: &ScalarField,
    density: f64,
    seed: u64,
    trials: usize,
) -> Result<BoolField> {
    let total = image.len();
    let n_keep = (density * total as f64).round() as usize;
    if density <= 0.0 || density > 1.0 || n_keep == 0 {
        return Err(Error::BadDensity {
            density,
            pixels: total,
        });
    }
    let (w, h) = (image.width(), image.height());
    if n_keep >= total {
        return Ok(BoolField::filled(w, h, true));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask_pixels: Vec<usize> = sample(&mut rng, total, n_keep).into_vec();
    let to_field = |pixels: &[usize]| -> BoolField {
        let mut m = BoolField::filled(w, h, false);
        for &p in pixels {
            m.set(p % w, p / w, true);
        }
        m
    };
    let mut best_mse = reconstruction_mse(image, &to_field(&mask_pixels))?;
    let moves = (n_keep / 10).max(1);
    for _ in 0..trials {
        let mut candidate = mask_pixels.clone();
        let mut in_mask = vec![false; total];
        for &p in &candidate {
            in_mask[p] = true;
        }
        for _ in 0..moves {
            let victim = rng.gen_range(0..candidate.len());
            let mut replacement = rng.gen_range(0..total);
            let mut guard = 0;
            while in_mask[replacement] && guard < 10 * total {
                replacement = rng.gen_range(0..total);
                guard += 1;
            }
            if in_mask[replacement] {
                continue;
            }
            in_mask[candidate[victim]] = false;
            in_mask[replacement] = true;
            candidate[victim] = replacement;
        }
        match reconstruction_mse(image, &to_field(&candidate)) {
            Ok(mse) if mse < best_mse => {
                best_mse = mse;
                mask_pixels = candidate;
            }
            _ => {}
        }
    }
    Ok(to_field(&mask_pixels))
}

/// Dense oracle for the Friedrichs constant on small grids: whitened
/// generalized eigensolve. Exposed for tests and verification runs.
pub fn friedrichs_dense_oracle(domain: &DomainSpec, weight: &WeightField) -> Result<f64> {
    let stiff = weighted_stiffness(domain, weight);
    let mass = mass_diag(domain);
    let n = domain.num_unknowns();
    let dense = stiff.to_dense();
    let chol = nalgebra::Cholesky::new(dense).ok_or(Error::SingularMatrix)?;
    let li = chol
        .l()
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMatrix)?;
    let mut m = nalgebra::DMatrix::zeros(n, n);
    for (r, &v) in mass.iter().enumerate() {
        m[(r, r)] = v;
    }
    let white = &li * m * li.transpose();
    let eig = nalgebra::SymmetricEigen::new(white);
    Ok(eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max))
}
