use crate::analysis::{
    alpha_capacity, annulus_convergence, annulus_exact, estimate_constants, reconstruction_mse,
    sparsify_mask, stability_check, CapacityGeometry,
};
use crate::assembly::{
    assemble_collocation, assemble_dirichlet, assemble_weak, recover_image, scatter_solution,
};
use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::field::{BoolField, ScalarField};
use crate::io::{read_field, read_mask, write_field_depth, write_mask, PgmDepth};
use crate::solver::{solve, SolveMethod};
use crate::weight::{check_admissibility, WeightField, TOL_DEG};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

/// Inpainting with the weighted Laplacian, plus the verification toolkit
/// for its well-posedness conditions.
#[derive(Debug, Parser)]
#[command(name = "wlaplace", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Form {
    Dirichlet,
    Collocation,
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Geometry {
    Square,
    Disk,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct an image from partial data.
    Inpaint {
        /// Image data (PGM or CSV).
        #[arg(long)]
        image: PathBuf,
        /// Known-pixel mask (sample > 0 means known).
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Confidence weight c in [0, 1] (CSV recommended).
        #[arg(long)]
        weight: Option<PathBuf>,
        /// Output image path.
        #[arg(long)]
        out: PathBuf,
        /// Model formulation; defaults to dirichlet with --mask,
        /// collocation with --weight.
        #[arg(long, value_enum)]
        form: Option<Form>,
        /// Solver tolerance.
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
        /// Write PGM output with 16-bit samples.
        #[arg(long)]
        pgm16: bool,
    },
    /// Check the admissibility conditions of a weight.
    Check {
        #[arg(long)]
        weight: PathBuf,
        /// Optional known-pixel mask restricting the reconstruction region.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Levels of the boundary-concentration sequence.
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Estimate every constant of the well-posedness theory.
    Constants {
        #[arg(long)]
        weight: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Optional image data for the data-norm bound and stability check.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Discrete α-capacity of a region.
    Capacity {
        /// Region E (mask file at the given resolution).
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        resolution: usize,
        #[arg(long, value_enum, default_value_t = Geometry::Square)]
        geometry: Geometry,
    },
    /// Annulus model problem: solve and compare with the exact solution.
    Annulus {
        #[arg(long)]
        epsilon: f64,
        /// Comma-separated grid resolutions, increasing, each >= 33.
        #[arg(long, value_delimiter = ',')]
        resolutions: Vec<usize>,
    },
    /// Pick a sparse pixel mask with good reconstruction properties.
    Sparsify {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit status semantics: 0 success, 1 failed checks or data errors,
/// 2 usage errors (also used by the argument parser itself).
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Runs one command, writing `key=value` lines to `out`.
pub fn run(command: &Command, out: &mut impl std::io::Write) -> i32 {
    match dispatch(command, out) {
        Ok(code) => code,
        Err(Error::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            EXIT_USAGE
        }
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_FAILED_CHECK
        }
    }
}

fn emit(out: &mut impl std::io::Write, key: &str, value: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{key}={value}").map_err(|e| Error::Io {
        path: PathBuf::from("<output>"),
        source: e,
    })
}

fn binary_weight_from_mask(mask: &BoolField, spacing: f64) -> Result<WeightField> {
    let values = mask
        .values()
        .iter()
        .map(|&m| if m { 1.0 } else { 0.0 })
        .collect();
    WeightField::from_values(ScalarField::new(mask.width(), mask.height(), spacing, values)?)
}

fn mask_from_weight(weight: &ScalarField) -> BoolField {
    BoolField::from_fn(weight.width(), weight.height(), |i, j| {
        let frame =
            i == 0 || j == 0 || i == weight.width() - 1 || j == weight.height() - 1;
        !frame && weight.get(i, j) >= 1.0 - TOL_DEG
    })
}

fn dispatch(command: &Command, out: &mut impl std::io::Write) -> Result<i32> {
    match command {
        Command::Inpaint {
            image,
            mask,
            weight,
            out: out_path,
            form,
            tolerance,
            pgm16,
        } => {
            let f = read_field(image)?;
            if *tolerance <= 0.0 {
                return Err(Error::Usage(format!(
                    "--tolerance must be positive, got {tolerance}"
                )));
            }
            let (mask_field, weight_field) = match (mask, weight) {
                (Some(_), Some(_)) => {
                    return Err(Error::Usage(
                        "--mask and --weight are mutually exclusive".into(),
                    ))
                }
                (None, None) => {
                    return Err(Error::Usage("one of --mask or --weight is required".into()))
                }
                (Some(m), None) => {
                    let mk = read_mask(m)?;
                    let w = binary_weight_from_mask(&mk, f.spacing())?;
                    (mk, w)
                }
                (None, Some(wp)) => {
                    let mut c = read_field(wp)?;
                    c.clamp_unit();
                    let mk = mask_from_weight(&c);
                    (mk, WeightField::from_values(c)?)
                }
            };
            if mask_field.width() != f.width() || mask_field.height() != f.height() {
                return Err(Error::DimensionMismatch {
                    got_w: mask_field.width(),
                    got_h: mask_field.height(),
                    want_w: f.width(),
                    want_h: f.height(),
                });
            }
            let form = form.unwrap_or(if mask.is_some() {
                Form::Dirichlet
            } else {
                Form::Collocation
            });
            let u = match form {
                Form::Dirichlet => {
                    let domain = DomainSpec::build(&mask_field, f.spacing())?;
                    let sys = assemble_dirichlet(&domain, &f)?;
                    let rep = solve(&sys, SolveMethod::Cg, *tolerance, 20 * sys.n().max(10))?;
                    emit(out, "iterations", rep.iterations)?;
                    emit(out, "residual", rep.final_residual)?;
                    emit(out, "converged", rep.converged)?;
                    scatter_solution(&domain, &f, &rep.solution)?
                }
                Form::Collocation => {
                    let shape = DomainSpec::build(
                        &BoolField::filled(f.width(), f.height(), false),
                        f.spacing(),
                    )?;
                    let sys = assemble_collocation(&shape, &weight_field, &f)?;
                    let method = if sys.symmetric_hint {
                        SolveMethod::Cg
                    } else {
                        SolveMethod::BiCgStab
                    };
                    let rep = solve(&sys, method, *tolerance, 20 * sys.n().max(10))?;
                    emit(out, "iterations", rep.iterations)?;
                    emit(out, "residual", rep.final_residual)?;
                    emit(out, "converged", rep.converged)?;
                    let mut u = f.clone();
                    u.values_mut().copy_from_slice(&rep.solution);
                    u
                }
                Form::Weak => {
                    let domain = DomainSpec::build(&mask_field, f.spacing())?;
                    let sys = assemble_weak(&domain, &weight_field, &f)?;
                    let method = if sys.symmetric_hint {
                        SolveMethod::Cg
                    } else {
                        SolveMethod::BiCgStab
                    };
                    let rep = solve(&sys, method, *tolerance, 20 * sys.n().max(10))?;
                    emit(out, "iterations", rep.iterations)?;
                    emit(out, "residual", rep.final_residual)?;
                    emit(out, "converged", rep.converged)?;
                    recover_image(&domain, &f, &rep.solution)?
                }
            };
            let depth = if *pgm16 {
                PgmDepth::Sixteen
            } else {
                PgmDepth::Eight
            };
            let mut clamped = u;
            clamped.clamp_unit();
            write_field_depth(&clamped, out_path, depth)?;
            emit(out, "form", format!("{form:?}").to_lowercase())?;
            emit(out, "out", out_path.display())?;
            Ok(EXIT_OK)
        }

        Command::Check {
            weight,
            mask,
            levels,
        } => {
            let c = read_field(weight)?;
            let w = WeightField::from_values(c)?;
            let mask_field = match mask {
                Some(m) => read_mask(m)?,
                None => BoolField::filled(w.width(), w.height(), false),
            };
            let domain = DomainSpec::build(&mask_field, w.spacing())?;
            let violations = w.unknown_region_violations(&domain);
            let report = check_admissibility(&w, &domain, *levels)?;
            emit(out, "kappa_min", report.kappa_min)?;
            emit(out, "kappa_prime_max", report.kappa_prime_max)?;
            for (k, a) in report.a_sequence.iter().enumerate() {
                emit(out, &format!("a_{}", k + 1), a)?;
            }
            emit(out, "a_limit_estimate", report.a_limit_estimate)?;
            emit(out, "growth_violations", report.growth_violations.len())?;
            emit(out, "weight_saturated_pixels", violations.len())?;
            emit(out, "passed", report.passed)?;
            Ok(if report.passed {
                EXIT_OK
            } else {
                EXIT_FAILED_CHECK
            })
        }

        Command::Constants {
            weight,
            mask,
            image,
            levels,
        } => {
            let c = read_field(weight)?;
            let w = WeightField::from_values(c)?;
            let mask_field = read_mask(mask)?;
            let domain = DomainSpec::build(&mask_field, w.spacing())?;
            let f = match image {
                Some(p) => Some(read_field(p)?),
                None => None,
            };
            let est = estimate_constants(&domain, &w, f.as_ref(), *levels)?;
            emit(out, "kappa", est.kappa)?;
            emit(out, "kappa_prime", est.kappa_prime)?;
            emit(out, "kappa0", est.kappa0)?;
            emit(out, "stability_factor", est.stability_factor)?;
            for (k, a) in est.a_sequence.iter().enumerate() {
                emit(out, &format!("a_{}", k + 1), a)?;
            }
            let mut ok = est.kappa.is_finite() && est.kappa_prime > 0.0;
            if let Some(bound) = est.f_norm_bound {
                emit(out, "f_norm_bound", bound)?;
                let stab = stability_check(&domain, &w, f.as_ref().unwrap())?;
                emit(out, "v_norm", stab.v_norm)?;
                emit(out, "stability_bound", stab.bound)?;
                emit(out, "stability_margin", stab.margin)?;
                emit(out, "stability_satisfied", stab.satisfied)?;
                ok = ok && stab.satisfied;
            }
            Ok(if ok { EXIT_OK } else { EXIT_FAILED_CHECK })
        }

        Command::Capacity {
            region,
            alpha,
            resolution,
            geometry,
        } => {
            let region_field = read_mask(region)?;
            let geometry = match geometry {
                Geometry::Square => CapacityGeometry::UnitSquare,
                Geometry::Disk => CapacityGeometry::UnitDisk,
            };
            let result = alpha_capacity(*resolution, &region_field, *alpha, geometry)?;
            emit(out, "value", result.value)?;
            emit(out, "alpha", result.alpha)?;
            emit(out, "resolution", result.resolution)?;
            emit(out, "region_pixels", region_field.count())?;
            Ok(EXIT_OK)
        }

        Command::Annulus {
            epsilon,
            resolutions,
        } => {
            let rows = annulus_convergence(*epsilon, resolutions)?;
            emit(out, "epsilon", epsilon)?;
            emit(out, "exact_r05", annulus_exact(*epsilon, 0.5, 0.0)?)?;
            for row in &rows {
                emit(out, &format!("error_{}", row.resolution), row.max_error)?;
                emit(
                    out,
                    &format!("measured_{}", row.resolution),
                    row.measured_pixels,
                )?;
            }
            Ok(EXIT_OK)
        }

        Command::Sparsify {
            image,
            density,
            seed,
            trials,
            out: out_path,
        } => {
            let img = read_field(image)?;
            let mask = sparsify_mask(&img, *density, *seed, *trials)?;
            let mse = reconstruction_mse(&img, &mask)?;
            write_mask(&mask, out_path)?;
            emit(out, "kept_pixels", mask.count())?;
            emit(out, "density", *density)?;
            emit(out, "seed", seed)?;
            emit(out, "trials", trials)?;
            emit(out, "mse", mse)?;
            emit(out, "out", out_path.display())?;
            Ok(EXIT_OK)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn check_on_constant_half_weight_passes() {
        let dir = tempfile::tempdir().unwrap();
        let wpath = dir.path().join("c.csv");
        let c = ScalarField::constant(33, 33, 1.0 / 32.0, 0.5).unwrap();
        crate::io::write_field(&c, &wpath).unwrap();
        let cmd = Command::Check {
            weight: wpath,
            mask: None,
            levels: 3,
        };
        let mut buf = Vec::new();
        let code = run(&cmd, &mut buf);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(code, EXIT_OK, "output:\n{text}");
        assert!(text.contains("kappa_min=0"));
        assert!(text.contains("kappa_prime_max=1"));
        assert!(text.contains("passed=true"));
    }

    #[test]
    fn inpaint_requires_exactly_one_of_mask_or_weight() {
        let dir = tempfile::tempdir().unwrap();
        let ipath = dir.path().join("f.csv");
        let f = ScalarField::constant(9, 9, 1.0 / 8.0, 0.5).unwrap();
        crate::io::write_field(&f, &ipath).unwrap();
        let cmd = Command::Inpaint {
            image: ipath,
            mask: None,
            weight: None,
            out: dir.path().join("u.csv"),
            form: None,
            tolerance: 1e-10,
            pgm16: false,
        };
        let mut buf = Vec::new();
        assert_eq!(run(&cmd, &mut buf), EXIT_USAGE);
    }

    #[test]
    fn inpaint_mask_and_weight_routes_agree_for_binary_weight() {
        let dir = tempfile::tempdir().unwrap();
        let n = 17;
        let h = 1.0 / (n - 1) as f64;
        let f = ScalarField::from_fn(n, n, h, |x, y| {
            0.5 + 0.3 * (4.0 * x).sin() * (3.0 * y).cos()
        })
        .unwrap();
        let mask = BoolField::from_fn(n, n, |i, j| {
            let frame = i == 0 || j == 0 || i == n - 1 || j == n - 1;
            !frame && (i * 7 + j * 3) % 5 == 0
        });
        let ipath = dir.path().join("f.csv");
        let mpath = dir.path().join("m.csv");
        crate::io::write_field(&f, &ipath).unwrap();
        crate::io::write_mask(&mask, &mpath).unwrap();

        let out_d = dir.path().join("u_dirichlet.csv");
        let out_w = dir.path().join("u_weak.csv");
        let mut buf = Vec::new();
        let code = run(
            &Command::Inpaint {
                image: ipath.clone(),
                mask: Some(mpath.clone()),
                weight: None,
                out: out_d.clone(),
                form: Some(Form::Dirichlet),
                tolerance: 1e-12,
                pgm16: false,
            },
            &mut buf,
        );
        assert_eq!(code, EXIT_OK);
        let code = run(
            &Command::Inpaint {
                image: ipath,
                mask: Some(mpath),
                weight: None,
                out: out_w.clone(),
                form: Some(Form::Weak),
                tolerance: 1e-12,
                pgm16: false,
            },
            &mut buf,
        );
        assert_eq!(code, EXIT_OK);
        let ud = crate::io::read_field(&out_d).unwrap();
        let uw = crate::io::read_field(&out_w).unwrap();
        for (a, b) in ud.values().iter().zip(uw.values()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn annulus_command_reports_exact_value() {
        let cmd = Command::Annulus {
            epsilon: 0.1,
            resolutions: vec![33],
        };
        let mut buf = Vec::new();
        assert_eq!(run(&cmd, &mut buf), EXIT_OK);
        let text = String::from_utf8(buf).unwrap();
        let exact: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("exact_r05="))
            .unwrap()
            .parse()
            .unwrap();
        assert!((exact - 0.30103).abs() < 1e-5);
    }

    #[test]
    fn outputs_stable_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let ipath = dir.path().join("img.csv");
        let img = ScalarField::from_fn(12, 12, 1.0 / 11.0, |x, y| {
            0.5 + 0.4 * (5.0 * x - 3.0 * y).sin()
        })
        .unwrap();
        crate::io::write_field(&img, &ipath).unwrap();
        let render = |out_name: &str| -> String {
            let cmd = Command::Sparsify {
                image: ipath.clone(),
                density: 0.1,
                seed: 5,
                trials: 3,
                out: dir.path().join(out_name),
            };
            let mut buf = Vec::new();
            assert_eq!(run(&cmd, &mut buf), EXIT_OK);
            String::from_utf8(buf)
                .unwrap()
                .lines()
                .filter(|l| !l.starts_with("out="))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(render("m1.csv"), render("m2.csv"));
    }
}
