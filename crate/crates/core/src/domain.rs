use crate::error::{Error, Result};
use crate::field::BoolField;

/// Classification of a grid pixel relative to the inpainting geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelClass {
    /// Pixel of the reconstruction region away from the frame.
    InteriorUnknown,
    /// Pixel on the outermost grid frame (Neumann boundary).
    OuterBoundary,
    /// Known pixel with no unknown 4-neighbour.
    KnownInterior,
    /// Known pixel adjacent to the reconstruction region (Dirichlet layer).
    KnownBoundary,
}

/// Constructible-but-degenerate states detected while building a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainWarning {
    /// Empty known set: no Dirichlet data anywhere.
    NoDirichletData,
}

/// Face between two 4-adjacent pixels.
///
/// `t` is the transverse-extent factor of the face (1 in the interior, 1/2
/// when the face lies on the grid frame), so that the face contributes
/// `t * h` of cross-section to a flux integral.
#[derive(Debug, Clone, Copy)]
pub struct Face {
    pub p: usize,
    pub q: usize,
    pub axis: Axis,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// The discrete geometry: grid, known-data region, boundaries and the
/// pixel-to-unknown index map.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    width: usize,
    height: usize,
    spacing: f64,
    known: Vec<bool>,
    outer_boundary: Vec<usize>,
    known_boundary: Vec<usize>,
    unknown_index: Vec<Option<usize>>,
    unknown_pixels: Vec<usize>,
    warnings: Vec<DomainWarning>,
}

/// Builds the domain geometry from a known-pixel mask.
///
/// Frame pixels form the outer (Neumann) boundary; known pixels with an
/// unknown 4-neighbour form the Dirichlet layer. Unknowns are enumerated
/// row-major.
pub fn build_domain(known_mask: &BoolField, spacing: f64) -> Result<DomainSpec> {
    DomainSpec::build(known_mask, spacing)
}

impl DomainSpec {
    pub fn build(known_mask: &BoolField, spacing: f64) -> Result<Self> {
        let (width, height) = (known_mask.width(), known_mask.height());
        if width < 3 || height < 3 {
            return Err(Error::GridTooSmall { width, height });
        }
        if spacing <= 0.0 || !spacing.is_finite() {
            return Err(Error::NonPositiveSpacing(spacing));
        }
        // Assumption: the Dirichlet and Neumann boundaries are disjoint, so a
        // known pixel may never sit on the grid frame.
        for j in 0..height {
            for i in 0..width {
                let frame = i == 0 || j == 0 || i == width - 1 || j == height - 1;
                if frame && known_mask.get(i, j) {
                    return Err(Error::KnownPixelOnFrame { x: i, y: j });
                }
            }
        }

        let known: Vec<bool> = known_mask.values().to_vec();
        let mut outer_boundary = Vec::new();
        let mut known_boundary = Vec::new();
        let mut unknown_index = vec![None; width * height];
        let mut unknown_pixels = Vec::new();

        for j in 0..height {
            for i in 0..width {
                let p = j * width + i;
                let frame = i == 0 || j == 0 || i == width - 1 || j == height - 1;
                if frame {
                    outer_boundary.push(p);
                }
                if known[p] {
                    let touches_unknown = neighbors4(width, height, i, j)
                        .any(|(ni, nj)| !known[nj * width + ni]);
                    if touches_unknown {
                        known_boundary.push(p);
                    }
                } else {
                    unknown_index[p] = Some(unknown_pixels.len());
                    unknown_pixels.push(p);
                }
            }
        }

        let mut warnings = Vec::new();
        if known_boundary.is_empty() {
            warnings.push(DomainWarning::NoDirichletData);
        }

        Ok(Self {
            width,
            height,
            spacing,
            known,
            outer_boundary,
            known_boundary,
            unknown_index,
            unknown_pixels,
            warnings,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Number of solver unknowns (pixels outside the known set).
    pub fn num_unknowns(&self) -> usize {
        self.unknown_pixels.len()
    }

    pub fn is_known(&self, p: usize) -> bool {
        self.known[p]
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    /// Pixels on the grid frame (Neumann boundary).
    pub fn outer_boundary(&self) -> &[usize] {
        &self.outer_boundary
    }

    /// Known pixels adjacent to the reconstruction region (Dirichlet layer).
    pub fn known_boundary(&self) -> &[usize] {
        &self.known_boundary
    }

    /// Dense unknown index of a pixel, `None` for known pixels.
    pub fn unknown_index(&self, p: usize) -> Option<usize> {
        self.unknown_index[p]
    }

    /// Pixel index of each unknown, in unknown order.
    pub fn unknown_pixels(&self) -> &[usize] {
        &self.unknown_pixels
    }

    pub fn warnings(&self) -> &[DomainWarning] {
        &self.warnings
    }

    pub fn has_dirichlet_data(&self) -> bool {
        !self.known_boundary.is_empty()
    }

    #[inline]
    pub fn coords(&self, p: usize) -> (usize, usize) {
        (p % self.width, p / self.width)
    }

    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn is_frame(&self, p: usize) -> bool {
        let (i, j) = self.coords(p);
        i == 0 || j == 0 || i == self.width - 1 || j == self.height - 1
    }

    pub fn classify_pixel(&self, p: usize) -> Result<PixelClass> {
        if p >= self.num_pixels() {
            return Err(Error::PixelOutOfRange {
                index: p,
                width: self.width,
                height: self.height,
            });
        }
        if self.is_frame(p) {
            return Ok(PixelClass::OuterBoundary);
        }
        if self.known[p] {
            let (i, j) = self.coords(p);
            let touches_unknown = neighbors4(self.width, self.height, i, j)
                .any(|(ni, nj)| !self.known[nj * self.width + ni]);
            if touches_unknown {
                Ok(PixelClass::KnownBoundary)
            } else {
                Ok(PixelClass::KnownInterior)
            }
        } else {
            Ok(PixelClass::InteriorUnknown)
        }
    }

    /// Transverse-extent factor of column `i` (1/2 on the frame).
    #[inline]
    pub fn tx(&self, i: usize) -> f64 {
        if i == 0 || i == self.width - 1 {
            0.5
        } else {
            1.0
        }
    }

    /// Transverse-extent factor of row `j` (1/2 on the frame).
    #[inline]
    pub fn ty(&self, j: usize) -> f64 {
        if j == 0 || j == self.height - 1 {
            0.5
        } else {
            1.0
        }
    }

    /// Control volume of pixel `p` in physical units.
    #[inline]
    pub fn volume(&self, p: usize) -> f64 {
        let (i, j) = self.coords(p);
        let h = self.spacing;
        h * h * self.tx(i) * self.ty(j)
    }

    /// All faces between 4-adjacent pixels, with transverse factors.
    pub fn faces(&self) -> impl Iterator<Item = Face> + '_ {
        let (w, h) = (self.width, self.height);
        let x_faces = (0..h).flat_map(move |j| {
            (0..w - 1).map(move |i| Face {
                p: j * w + i,
                q: j * w + i + 1,
                axis: Axis::X,
                t: self.ty(j),
            })
        });
        let y_faces = (0..h - 1).flat_map(move |j| {
            (0..w).map(move |i| Face {
                p: j * w + i,
                q: (j + 1) * w + i,
                axis: Axis::Y,
                t: self.tx(i),
            })
        });
        x_faces.chain(y_faces)
    }

    /// 4-neighbour pixel indices of `p`.
    pub fn neighbors(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.coords(p);
        let w = self.width;
        neighbors4(self.width, self.height, i, j).map(move |(ni, nj)| nj * w + ni)
    }
}

/// Classifies a pixel of `domain`; see [`DomainSpec::classify_pixel`].
pub fn classify_pixel(domain: &DomainSpec, pixel: usize) -> Result<PixelClass> {
    domain.classify_pixel(pixel)
}

pub(crate) fn neighbors4(
    width: usize,
    height: usize,
    i: usize,
    j: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let mut out = [(0usize, 0usize); 4];
    let mut n = 0;
    if i > 0 {
        out[n] = (i - 1, j);
        n += 1;
    }
    if i + 1 < width {
        out[n] = (i + 1, j);
        n += 1;
    }
    if j > 0 {
        out[n] = (i, j - 1);
        n += 1;
    }
    if j + 1 < height {
        out[n] = (i, j + 1);
        n += 1;
    }
    out.into_iter().take(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn center_mask(n: usize) -> BoolField {
        BoolField::from_fn(n, n, |i, j| i == n / 2 && j == n / 2)
    }

    #[test]
    fn single_center_pixel() {
        let d = DomainSpec::build(&center_mask(5), 1.0).unwrap();
        assert_eq!(d.known_boundary(), &[12]);
        assert_eq!(d.outer_boundary().len(), 16);
        assert_eq!(d.num_unknowns(), 24);
        assert!(d.has_dirichlet_data());
    }

    #[test]
    fn all_unknown_is_flagged() {
        let mask = BoolField::filled(5, 5, false);
        let d = DomainSpec::build(&mask, 1.0).unwrap();
        assert!(d.known_boundary().is_empty());
        assert_eq!(d.warnings(), &[DomainWarning::NoDirichletData]);
        assert_eq!(d.num_unknowns(), 25);
    }

    #[test]
    fn block_mask_boundary_counts() {
        // 9x9 grid, 3x3 known block at the centre. Brute-force oracle below.
        let mask = BoolField::from_fn(9, 9, |i, j| (3..=5).contains(&i) && (3..=5).contains(&j));
        let d = DomainSpec::build(&mask, 1.0).unwrap();

        let mut oracle_boundary = Vec::new();
        for j in 0..9 {
            for i in 0..9 {
                if !mask.get(i, j) {
                    continue;
                }
                let touches = neighbors4(9, 9, i, j).any(|(ni, nj)| !mask.get(ni, nj));
                if touches {
                    oracle_boundary.push(j * 9 + i);
                }
            }
        }
        assert_eq!(oracle_boundary.len(), 8);
        assert_eq!(d.known_boundary(), &oracle_boundary[..]);
        assert_eq!(d.num_unknowns(), 72);
        assert_eq!(
            d.classify_pixel(d.pixel(4, 4)).unwrap(),
            PixelClass::KnownInterior
        );
        assert_eq!(
            d.classify_pixel(d.pixel(2, 4)).unwrap(),
            PixelClass::InteriorUnknown
        );
        assert_eq!(
            d.classify_pixel(d.pixel(0, 4)).unwrap(),
            PixelClass::OuterBoundary
        );
    }

    #[test]
    fn frame_known_pixel_is_rejected() {
        let mask = BoolField::from_fn(5, 5, |i, j| i == 0 && j == 2);
        match DomainSpec::build(&mask, 1.0) {
            Err(Error::KnownPixelOnFrame { x: 0, y: 2 }) => {}
            other => panic!("expected KnownPixelOnFrame, got {other:?}"),
        }
    }

    #[test]
    fn tiny_grid_is_rejected() {
        let mask = BoolField::filled(2, 5, false);
        assert!(matches!(
            DomainSpec::build(&mask, 1.0),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn out_of_range_pixel() {
        let d = DomainSpec::build(&center_mask(5), 1.0).unwrap();
        assert!(matches!(
            d.classify_pixel(25),
            Err(Error::PixelOutOfRange { .. })
        ));
    }

    #[test]
    fn unknown_count_partition() {
        let d = DomainSpec::build(&center_mask(7), 0.25).unwrap();
        let known = d.known().iter().filter(|&&k| k).count();
        assert_eq!(d.num_unknowns() + known, d.num_pixels());
    }

    #[test]
    fn deterministic_index_map() {
        let mask = BoolField::from_fn(9, 9, |i, j| (3..=5).contains(&i) && (3..=5).contains(&j));
        let a = DomainSpec::build(&mask, 1.0).unwrap();
        let b = DomainSpec::build(&mask, 1.0).unwrap();
        assert_eq!(a.unknown_pixels(), b.unknown_pixels());
        for p in 0..a.num_pixels() {
            assert_eq!(a.unknown_index(p), b.unknown_index(p));
        }
    }

    #[test]
    fn volumes_and_faces_tile_the_domain() {
        let d = DomainSpec::build(&BoolField::filled(6, 4, false), 0.5).unwrap();
        let total: f64 = (0..d.num_pixels()).map(|p| d.volume(p)).sum();
        let h = 0.5;
        let expected = (5.0 * h) * (3.0 * h);
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn random_masks_match_brute_force_classification() {
        // Deterministic pseudo-random masks up to 64x64, checked against a
        // from-scratch reclassification.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for &n in &[8usize, 17, 33, 64] {
            let mask = BoolField::from_fn(n, n, |i, j| {
                let frame = i == 0 || j == 0 || i == n - 1 || j == n - 1;
                !frame && next() % 4 == 0
            });
            let d = DomainSpec::build(&mask, 1.0).unwrap();
            for j in 0..n {
                for i in 0..n {
                    let p = j * n + i;
                    let class = d.classify_pixel(p).unwrap();
                    let frame = i == 0 || j == 0 || i == n - 1 || j == n - 1;
                    let expect = if frame {
                        PixelClass::OuterBoundary
                    } else if mask.get(i, j) {
                        if neighbors4(n, n, i, j).any(|(a, b)| !mask.get(a, b)) {
                            PixelClass::KnownBoundary
                        } else {
                            PixelClass::KnownInterior
                        }
                    } else {
                        PixelClass::InteriorUnknown
                    };
                    assert_eq!(class, expect, "pixel ({i}, {j}) in {n}x{n}");
                    if class == PixelClass::KnownBoundary {
                        assert!(d
                            .neighbors(p)
                            .any(|q| d.classify_pixel(q).unwrap() != PixelClass::KnownInterior
                                && !d.is_known(q)));
                    }
                }
            }
        }
    }
}
