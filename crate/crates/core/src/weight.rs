use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::solver::cg_raw;
use crate::sparse::{CsrBuilder, CsrMatrix};

/// Weight products below this threshold count as degenerate (c in {0, 1}).
pub const TOL_DEG: f64 = 1e-12;

/// Gradient magnitudes below `TOL_GRAD_SCALE / h` count as vanishing at
/// degenerate pixels.
pub const TOL_GRAD_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientSource {
    AnalyticSupplied,
    CentralDifference,
}

/// The weight c together with its discrete gradient.
#[derive(Debug, Clone)]
pub struct WeightField {
    pub c: ScalarField,
    pub grad_x: ScalarField,
    pub grad_y: ScalarField,
    pub gradient_source: GradientSource,
}

impl WeightField {
    /// Builds a weight from values of c, differentiating numerically.
    pub fn from_values(c: ScalarField) -> Result<Self> {
        validate_range(&c)?;
        let (grad_x, grad_y) = compute_gradient(&c)?;
        Ok(Self {
            c,
            grad_x,
            grad_y,
            gradient_source: GradientSource::CentralDifference,
        })
    }

    /// Builds a weight with caller-supplied analytic derivatives.
    pub fn with_gradient(c: ScalarField, grad_x: ScalarField, grad_y: ScalarField) -> Result<Self> {
        validate_range(&c)?;
        c.same_shape(&grad_x)?;
        c.same_shape(&grad_y)?;
        Ok(Self {
            c,
            grad_x,
            grad_y,
            gradient_source: GradientSource::AnalyticSupplied,
        })
    }

    pub fn width(&self) -> usize {
        self.c.width()
    }

    pub fn height(&self) -> usize {
        self.c.height()
    }

    pub fn spacing(&self) -> f64 {
        self.c.spacing()
    }

    /// Pixels of the reconstruction region where c fails to stay below 1.
    ///
    /// After the domain split the weight must satisfy c < 1 almost everywhere
    /// outside the known set; offending pixels are reported, not rejected.
    pub fn unknown_region_violations(&self, domain: &DomainSpec) -> Vec<usize> {
        domain
            .unknown_pixels()
            .iter()
            .cloned()
            .filter(|&p| self.c.values()[p] >= 1.0 - TOL_DEG)
            .collect()
    }
}

fn validate_range(c: &ScalarField) -> Result<()> {
    for (p, &v) in c.values().iter().enumerate() {
        if !((-TOL_DEG..=1.0 + TOL_DEG).contains(&v)) || !v.is_finite() {
            let (x, y) = (p % c.width(), p / c.width());
            return Err(Error::WeightOutOfRange { x, y, value: v });
        }
    }
    Ok(())
}

/// Discrete gradient: second-order central differences in the interior,
/// second-order one-sided stencils on the frame.
pub fn compute_gradient(c: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    let (w, h) = (c.width(), c.height());
    if w < 3 || h < 3 {
        return Err(Error::GridTooSmall {
            width: w,
            height: h,
        });
    }
    let dx = c.spacing();
    let mut gx = ScalarField::constant(w, h, dx, 0.0)?;
    let mut gy = ScalarField::constant(w, h, dx, 0.0)?;
    for j in 0..h {
        for i in 0..w {
            let vx = if i == 0 {
                (-3.0 * c.get(0, j) + 4.0 * c.get(1, j) - c.get(2, j)) / (2.0 * dx)
            } else if i == w - 1 {
                (3.0 * c.get(w - 1, j) - 4.0 * c.get(w - 2, j) + c.get(w - 3, j)) / (2.0 * dx)
            } else {
                (c.get(i + 1, j) - c.get(i - 1, j)) / (2.0 * dx)
            };
            let vy = if j == 0 {
                (-3.0 * c.get(i, 0) + 4.0 * c.get(i, 1) - c.get(i, 2)) / (2.0 * dx)
            } else if j == h - 1 {
                (3.0 * c.get(i, h - 1) - 4.0 * c.get(i, h - 2) + c.get(i, h - 3)) / (2.0 * dx)
            } else {
                (c.get(i, j + 1) - c.get(i, j - 1)) / (2.0 * dx)
            };
            gx.set(i, j, vx);
            gy.set(i, j, vy);
        }
    }
    Ok((gx, gy))
}

/// Per-pixel coefficients of the ternary quadratic form behind the
/// bilinear form: diagonal weights 1-c (gradient slots) and c (value slot),
/// cross couplings from the gradient of c.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    /// 1 - c, shared by both first-order slots.
    pub diag_grad: ScalarField,
    /// c, the zero-order slot.
    pub diag_val: ScalarField,
    /// Coupling between the value slot and the x-derivative slot.
    pub cross_x: ScalarField,
    /// Coupling between the value slot and the y-derivative slot.
    pub cross_y: ScalarField,
}

impl CoefficientField {
    pub fn from_weight(weight: &WeightField) -> Self {
        let (w, h) = (weight.width(), weight.height());
        let dx = weight.spacing();
        let mut diag_grad = ScalarField::constant(w, h, dx, 0.0).unwrap();
        let mut diag_val = ScalarField::constant(w, h, dx, 0.0).unwrap();
        for p in 0..w * h {
            diag_grad.values_mut()[p] = 1.0 - weight.c.values()[p];
            diag_val.values_mut()[p] = weight.c.values()[p];
        }
        // Both couplings carry the divergence-form sign; the admissibility
        // checks below are invariant under either sign choice.
        let mut cross_x = weight.grad_x.clone();
        let mut cross_y = weight.grad_y.clone();
        cross_x.values_mut().iter_mut().for_each(|v| *v = -*v);
        cross_y.values_mut().iter_mut().for_each(|v| *v = -*v);
        Self {
            diag_grad,
            diag_val,
            cross_x,
            cross_y,
        }
    }
}

/// Verdicts and constants from the admissibility checks.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub kappa_min: f64,
    pub kappa_prime_max: f64,
    pub growth_violations: Vec<(usize, f64)>,
    pub a_sequence: Vec<f64>,
    pub a_limit_estimate: f64,
    pub passed: bool,
}

/// Smallest constant kappa bounding |grad c| by kappa * sqrt(c (1-c)) over
/// the reconstruction region, together with the pixels where the bound is
/// infinite (nonvanishing gradient at a degenerate pixel).
pub fn growth_kappa(weight: &WeightField, domain: &DomainSpec) -> (f64, Vec<(usize, f64)>) {
    let tol_grad = TOL_GRAD_SCALE / domain.spacing();
    let mut kappa: f64 = 0.0;
    let mut violations = Vec::new();
    for &p in domain.unknown_pixels() {
        let c = weight.c.values()[p];
        let den = c * (1.0 - c);
        let mut pixel_worst: f64 = 0.0;
        for g in [weight.grad_x.values()[p], weight.grad_y.values()[p]] {
            let ratio = if den <= TOL_DEG {
                if g.abs() <= tol_grad {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                g.abs() / den.sqrt()
            };
            pixel_worst = pixel_worst.max(ratio);
        }
        if pixel_worst.is_infinite() {
            violations.push((p, pixel_worst));
        }
        kappa = kappa.max(pixel_worst);
    }
    (kappa, violations)
}

/// Largest kappa' such that the ternary quadratic form dominates kappa'
/// times its diagonal part at every pixel of the reconstruction region.
///
/// Per pixel the 3x3 pencil (M, D) with D = diag(c, 1-c, 1-c) and M = D plus
/// the symmetrised cross couplings has the closed-form answer
/// `1 - |grad c| / (2 sqrt(c (1-c)))`; at degenerate pixels the condition
/// holds with kappa' = 1 when the couplings vanish and fails otherwise.
pub fn quadratic_kappa_prime(coeffs: &CoefficientField, domain: &DomainSpec) -> f64 {
    let tol_grad = TOL_GRAD_SCALE / domain.spacing();
    let mut kappa_prime: f64 = 1.0;
    for &p in domain.unknown_pixels() {
        let c = coeffs.diag_val.values()[p];
        let w = coeffs.diag_grad.values()[p];
        let cx = coeffs.cross_x.values()[p].abs();
        let cy = coeffs.cross_y.values()[p].abs();
        let den = c * w;
        let t = if den <= TOL_DEG {
            if cx.max(cy) <= tol_grad {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 - 0.5 * (cx * cx + cy * cy).sqrt() / den.sqrt()
        };
        kappa_prime = kappa_prime.min(t);
    }
    kappa_prime
}

fn check_field_shapes(domain: &DomainSpec, fields: &[&ScalarField]) -> Result<()> {
    for f in fields {
        if f.width() != domain.width() || f.height() != domain.height() {
            return Err(Error::DimensionMismatch {
                got_w: f.width(),
                got_h: f.height(),
                want_w: domain.width(),
                want_h: domain.height(),
            });
        }
    }
    Ok(())
}

/// Weighted inner product over the reconstruction region:
/// gradient term on cell faces with the arithmetic face value of 1-c,
/// mass term on pixel control volumes.
pub fn v_inner(
    u: &ScalarField,
    v: &ScalarField,
    weight: &WeightField,
    domain: &DomainSpec,
) -> Result<f64> {
    check_field_shapes(domain, &[u, v, &weight.c])?;
    let mut acc = grad_inner(u, v, weight, domain);
    for &p in domain.unknown_pixels() {
        acc += domain.volume(p) * u.values()[p] * v.values()[p];
    }
    Ok(acc)
}

fn grad_inner(u: &ScalarField, v: &ScalarField, weight: &WeightField, domain: &DomainSpec) -> f64 {
    let cw = weight.c.values();
    let mut acc = 0.0;
    for face in domain.faces() {
        if domain.is_known(face.p) && domain.is_known(face.q) {
            continue;
        }
        let wf = 0.5 * ((1.0 - cw[face.p]) + (1.0 - cw[face.q]));
        let du = u.values()[face.q] - u.values()[face.p];
        let dv = v.values()[face.q] - v.values()[face.p];
        acc += wf * face.t * du * dv;
    }
    acc
}

/// Weighted norm sqrt(v_inner(u, u)).
pub fn v_norm(u: &ScalarField, weight: &WeightField, domain: &DomainSpec) -> Result<f64> {
    Ok(v_inner(u, u, weight, domain)?.sqrt())
}

/// Weighted gradient seminorm: the gradient term of the inner product only.
pub fn v_seminorm(u: &ScalarField, weight: &WeightField, domain: &DomainSpec) -> Result<f64> {
    check_field_shapes(domain, &[u, &weight.c])?;
    Ok(grad_inner(u, u, weight, domain).max(0.0).sqrt())
}

/// Weighted stiffness matrix over unknowns in energy scaling: the Gram
/// matrix of the seminorm for functions that vanish on the known set.
pub(crate) fn weighted_stiffness(domain: &DomainSpec, weight: &WeightField) -> CsrMatrix {
    let n = domain.num_unknowns();
    let cw = weight.c.values();
    let mut b = CsrBuilder::new(n, n);
    for face in domain.faces() {
        let iu = domain.unknown_index(face.p);
        let ju = domain.unknown_index(face.q);
        if iu.is_none() && ju.is_none() {
            continue;
        }
        let wf = 0.5 * ((1.0 - cw[face.p]) + (1.0 - cw[face.q])) * face.t;
        match (iu, ju) {
            (Some(r), Some(s)) => {
                b.add(r, r, wf);
                b.add(s, s, wf);
                b.add(r, s, -wf);
                b.add(s, r, -wf);
            }
            (Some(r), None) => b.add(r, r, wf),
            (None, Some(s)) => b.add(s, s, wf),
            (None, None) => unreachable!(),
        }
    }
    b.build()
}

/// Control volumes of the unknowns (diagonal mass matrix, energy scaling).
pub(crate) fn mass_diag(domain: &DomainSpec) -> Vec<f64> {
    domain
        .unknown_pixels()
        .iter()
        .map(|&p| domain.volume(p))
        .collect()
}

/// Graph distance of every unknown pixel to the boundary of the
/// reconstruction region (frame pixels and pixels adjacent to known data
/// are at distance zero). Known pixels get `usize::MAX`.
pub(crate) fn boundary_distance(domain: &DomainSpec) -> Vec<usize> {
    let n = domain.num_pixels();
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for &p in domain.unknown_pixels() {
        let on_boundary =
            domain.is_frame(p) || domain.neighbors(p).any(|q| domain.is_known(q));
        if on_boundary {
            dist[p] = 0;
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        for q in domain.neighbors(p) {
            if !domain.is_known(q) && dist[q] == usize::MAX {
                dist[q] = dist[p] + 1;
                queue.push_back(q);
            }
        }
    }
    dist
}

/// Finite part of the non-compactness sequence A_k.
///
/// Level k keeps the pixels within (halving) graph distance d_k of the
/// boundary and measures how much of the weighted norm can concentrate
/// there: A_k is the square root of the largest generalized eigenvalue of
/// the boundary-shell mass against the full weighted Gram.
pub fn estimate_a(domain: &DomainSpec, weight: &WeightField, levels: usize) -> Result<Vec<f64>> {
    check_field_shapes(domain, &[&weight.c])?;
    let dist = boundary_distance(domain);
    let d_max = domain
        .unknown_pixels()
        .iter()
        .map(|&p| dist[p])
        .max()
        .unwrap_or(0);
    if d_max == 0 {
        return Err(Error::ExhaustionEmpty { level: 1 });
    }
    let stiff = weighted_stiffness(domain, weight);
    let mass = mass_diag(domain);
    let n = domain.num_unknowns();

    // Full weighted Gram G = stiffness + mass.
    let gram = {
        let mut b = CsrBuilder::new(n, n);
        for r in 0..n {
            for (cidx, v) in stiff.row(r) {
                b.add(r, cidx, v);
            }
            b.add(r, r, mass[r]);
        }
        b.build()
    };

    let mut out = Vec::with_capacity(levels);
    for k in 1..=levels {
        let d_k = d_max as f64 / 2f64.powi(k as i32);
        let interior_nonempty = domain
            .unknown_pixels()
            .iter()
            .any(|&p| (dist[p] as f64) > d_k);
        if !interior_nonempty {
            return Err(Error::ExhaustionEmpty { level: k });
        }
        let shell_mass: Vec<f64> = domain
            .unknown_pixels()
            .iter()
            .enumerate()
            .map(|(r, &p)| {
                if (dist[p] as f64) <= d_k {
                    mass[r]
                } else {
                    0.0
                }
            })
            .collect();
        let lambda = generalized_lambda_max(&gram, &shell_mass)?;
        out.push(lambda.max(0.0).sqrt().min(1.0));
    }
    Ok(out)
}

/// Largest eigenvalue of `G^{-1} diag(m)` for SPD `G` and nonnegative `m`,
/// by power iteration with conjugate-gradient solves on `G`.
pub(crate) fn generalized_lambda_max(gram: &CsrMatrix, m: &[f64]) -> Result<f64> {
    let n = gram.n_rows();
    if m.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    // Deterministic pseudo-random start vector.
    let mut z: Vec<f64> = (0..n)
        .map(|i| {
            let s = (i as u64).wrapping_mul(0x9e3779b97f4a7c15).rotate_left(17);
            (s % 1000) as f64 / 1000.0 + 0.5
        })
        .collect();
    let mut rho_prev = 0.0;
    let mut work = vec![0.0; n];
    for _ in 0..5000 {
        // y = G^{-1} (M z)
        for i in 0..n {
            work[i] = m[i] * z[i];
        }
        let y = cg_raw(gram, &work, None, 1e-13, 20 * n.max(100))?;
        // Normalize in the G-norm and read off the Rayleigh quotient.
        gram.mul_vec(&y, &mut work);
        let g_norm2: f64 = y.iter().zip(&work).map(|(a, b)| a * b).sum();
        if g_norm2 <= 0.0 || !g_norm2.is_finite() {
            return Ok(0.0);
        }
        let scale = g_norm2.sqrt();
        for (zi, yi) in z.iter_mut().zip(&y) {
            *zi = yi / scale;
        }
        let rho: f64 = z.iter().zip(m.iter()).map(|(zi, mi)| mi * zi * zi).sum();
        if (rho - rho_prev).abs() <= 1e-12 + 1e-10 * rho.abs() {
            return Ok(rho);
        }
        rho_prev = rho;
    }
    Ok(rho_prev)
}

/// Runs all finitely checkable admissibility conditions.
pub fn check_admissibility(
    weight: &WeightField,
    domain: &DomainSpec,
    levels: usize,
) -> Result<AdmissibilityReport> {
    let (kappa_min, growth_violations) = growth_kappa(weight, domain);
    let coeffs = CoefficientField::from_weight(weight);
    let kappa_prime_max = quadratic_kappa_prime(&coeffs, domain);
    let a_sequence = estimate_a(domain, weight, levels)?;
    let a_limit_estimate = *a_sequence.last().unwrap();
    let passed = kappa_min.is_finite() && kappa_prime_max > 0.0 && a_limit_estimate < 1.0;
    Ok(AdmissibilityReport {
        kappa_min,
        kappa_prime_max,
        growth_violations,
        a_sequence,
        a_limit_estimate,
        passed,
    })
}
