use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::sparse::{CsrBuilder, SparseSystem, SystemOrigin};
use crate::weight::WeightField;

fn check_shape(domain: &DomainSpec, f: &ScalarField) -> Result<()> {
    if f.width() != domain.width() || f.height() != domain.height() {
        return Err(Error::DimensionMismatch {
            got_w: f.width(),
            got_h: f.height(),
            want_w: domain.width(),
            want_h: domain.height(),
        });
    }
    Ok(())
}

fn debug_check_symmetry(system: &SparseSystem) {
    if system.symmetric_hint && system.n() <= 2000 {
        let scale = system.matrix.norm_inf().max(1.0);
        debug_assert!(
            system.matrix.max_asymmetry() <= 1e-12 * scale,
            "symmetric_hint set on an asymmetric matrix"
        );
    }
}

/// Hard-Dirichlet harmonic inpainting system: 5-point Laplacian on the
/// unknowns in conservative (face-flux) scaling, known pixel values folded
/// into the right-hand side, zero-flux reflection on the grid frame.
pub fn assemble_dirichlet(domain: &DomainSpec, f: &ScalarField) -> Result<SparseSystem> {
    check_shape(domain, f)?;
    if !domain.has_dirichlet_data() {
        return Err(Error::NoDirichletData);
    }
    let n = domain.num_unknowns();
    let mut b = CsrBuilder::new(n, n);
    let mut rhs = vec![0.0; n];
    for face in domain.faces() {
        let iu = domain.unknown_index(face.p);
        let ju = domain.unknown_index(face.q);
        match (iu, ju) {
            (Some(r), Some(s)) => {
                b.add(r, r, face.t);
                b.add(s, s, face.t);
                b.add(r, s, -face.t);
                b.add(s, r, -face.t);
            }
            (Some(r), None) => {
                b.add(r, r, face.t);
                rhs[r] += face.t * f.values()[face.q];
            }
            (None, Some(s)) => {
                b.add(s, s, face.t);
                rhs[s] += face.t * f.values()[face.p];
            }
            (None, None) => {}
        }
    }
    let system = SparseSystem {
        matrix: b.build(),
        rhs,
        symmetric_hint: true,
        origin: SystemOrigin::Dirichlet,
    };
    debug_check_symmetry(&system);
    Ok(system)
}

/// Soft-weighted collocation system over all pixels: per pixel
/// `c (u - f) + (1 - c) (-Δu) = 0` with the 5-point stencil and reflected
/// ghost pixels across the frame (a missing neighbour is replaced by its
/// mirror image, doubling the opposite coupling). Symmetric exactly when
/// the weight is constant.
pub fn assemble_collocation(
    domain: &DomainSpec,
    weight: &WeightField,
    f: &ScalarField,
) -> Result<SparseSystem> {
    check_shape(domain, f)?;
    check_shape(domain, &weight.c)?;
    let (w, hgt) = (domain.width(), domain.height());
    let n = w * hgt;
    let h2 = domain.spacing() * domain.spacing();
    let cv = weight.c.values();
    let mut b = CsrBuilder::new(n, n);
    let mut rhs = vec![0.0; n];
    for j in 0..hgt {
        for i in 0..w {
            let p = domain.pixel(i, j);
            let c = cv[p];
            // Row scaled by the transverse volume factor of the control
            // cell so that the reflected couplings pair up symmetrically
            // across the frame; the solution is unchanged by row scaling.
            let s = domain.tx(i) * domain.ty(j);
            let reflect = |k: usize, delta: isize, len: usize| -> usize {
                let m = k as isize + delta;
                if m < 0 {
                    1
                } else if m >= len as isize {
                    len - 2
                } else {
                    m as usize
                }
            };
            for (di, dj) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let q = domain.pixel(reflect(i, di, w), reflect(j, dj, hgt));
                b.add(p, q, -s * (1.0 - c) / h2);
            }
            b.add(p, p, s * (c + 4.0 * (1.0 - c) / h2));
            rhs[p] = s * c * f.values()[p];
        }
    }
    let constant_weight = weight.c.max() - weight.c.min() <= 1e-15;
    let system = SparseSystem {
        matrix: b.build(),
        rhs,
        symmetric_hint: constant_weight,
        origin: SystemOrigin::Collocation,
    };
    debug_check_symmetry(&system);
    Ok(system)
}

/// Weak/divergence-form system for the offset v = u - f, which vanishes on
/// the known set.
///
/// Finite-volume discretization in conservative scaling: face fluxes with
/// the arithmetic face value of 1 - c, the first-order term in the
/// face-paired form `-(1/2) Σ_faces t (Δc)(Δv)(test at both ends)`, and the
/// mass term c·v on control volumes. The right-hand side is minus the same
/// operator applied to f, the conservative quadrature of the source
/// (1 - c)Δf together with the frame flux data -∂_n f; this choice makes
/// the system agree with the hard-Dirichlet one exactly for binary weights.
pub fn assemble_weak(
    domain: &DomainSpec,
    weight: &WeightField,
    f: &ScalarField,
) -> Result<SparseSystem> {
    check_shape(domain, f)?;
    check_shape(domain, &weight.c)?;
    let n = domain.num_unknowns();
    let cv = weight.c.values();
    let mut b = CsrBuilder::new(n, n);
    let mut rhs = vec![0.0; n];
    let mut max_dc: f64 = 0.0;

    for face in domain.faces() {
        let iu = domain.unknown_index(face.p);
        let ju = domain.unknown_index(face.q);
        if iu.is_none() && ju.is_none() {
            continue;
        }
        let wf = 0.5 * ((1.0 - cv[face.p]) + (1.0 - cv[face.q])) * face.t;
        let dc = cv[face.q] - cv[face.p];
        // Only faces with both endpoints unknown produce off-diagonal
        // pairs, so only their convection terms can break symmetry; a
        // binary indicator weight therefore still yields a symmetric
        // matrix (it equals the hard-Dirichlet one).
        if iu.is_some() && ju.is_some() {
            max_dc = max_dc.max(dc.abs());
        }
        let conv = 0.5 * face.t * dc;
        let df = f.values()[face.q] - f.values()[face.p];
        // Row of the face endpoint p: flux wf (v_p - v_q), convection
        // -conv (v_q - v_p); rhs takes the same combination of f with
        // opposite sign. Known endpoints contribute nothing (v = 0 there)
        // but their rows are skipped.
        if let Some(r) = iu {
            b.add(r, r, wf + conv);
            if let Some(s) = ju {
                b.add(r, s, -wf - conv);
            }
            rhs[r] += (wf + conv) * df;
        }
        if let Some(s) = ju {
            b.add(s, s, wf - conv);
            if let Some(r) = iu {
                b.add(s, r, -wf + conv);
            }
            rhs[s] -= (wf - conv) * df;
        }
    }
    for (r, &p) in domain.unknown_pixels().iter().enumerate() {
        b.add(r, r, cv[p] * domain.volume(p));
    }
    let system = SparseSystem {
        matrix: b.build(),
        rhs,
        symmetric_hint: max_dc <= 1e-15,
        origin: SystemOrigin::Weak,
    };
    debug_check_symmetry(&system);
    Ok(system)
}

/// Expands a solution vector over the unknowns into a full image, taking
/// known pixels from `f`.
pub fn scatter_solution(domain: &DomainSpec, f: &ScalarField, x: &[f64]) -> Result<ScalarField> {
    check_shape(domain, f)?;
    if x.len() != domain.num_unknowns() {
        return Err(Error::LengthMismatch {
            got: x.len(),
            expected: domain.num_unknowns(),
        });
    }
    let mut u = f.clone();
    for (r, &p) in domain.unknown_pixels().iter().enumerate() {
        u.values_mut()[p] = x[r];
    }
    Ok(u)
}

/// Recovers the image u = v + f from a weak-form offset solution.
pub fn recover_image(domain: &DomainSpec, f: &ScalarField, v: &[f64]) -> Result<ScalarField> {
    check_shape(domain, f)?;
    if v.len() != domain.num_unknowns() {
        return Err(Error::LengthMismatch {
            got: v.len(),
            expected: domain.num_unknowns(),
        });
    }
    let mut u = f.clone();
    for (r, &p) in domain.unknown_pixels().iter().enumerate() {
        u.values_mut()[p] = f.values()[p] + v[r];
    }
    Ok(u)
}

/// 5-point Laplacian with reflected ghosts across the frame.
pub fn laplacian_reflected(f: &ScalarField) -> Result<ScalarField> {
    if f.width() < 3 || f.height() < 3 {
        return Err(Error::GridTooSmall {
            width: f.width(),
            height: f.height(),
        });
    }
    let (w, h) = (f.width(), f.height());
    let h2 = f.spacing() * f.spacing();
    let mut out = ScalarField::constant(w, h, f.spacing(), 0.0)?;
    for j in 0..h {
        for i in 0..w {
            let center = f.get(i, j);
            let mut acc = 0.0;
            if i > 0 {
                acc += f.get(i - 1, j) - center;
            }
            if i + 1 < w {
                acc += f.get(i + 1, j) - center;
            }
            if j > 0 {
                acc += f.get(i, j - 1) - center;
            }
            if j + 1 < h {
                acc += f.get(i, j + 1) - center;
            }
            out.set(i, j, acc / h2);
        }
    }
    Ok(out)
}
