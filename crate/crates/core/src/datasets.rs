//! Synthetic point clouds and CSV ingestion.
//!
//! CSV files hold one row per point (or per matrix row), comma-separated
//! reals. A first row that does not parse as numbers is taken as a header.
//! Numbers are written with 17 significant digits so that `f64` values
//! round-trip exactly.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, DipoleError, Result};
use crate::geometry::{DistanceMatrix, PointCloud};

/// Symmetry tolerance applied to loaded distance matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;

const ROLL_T_MIN: f64 = 1.5 * PI;
const ROLL_T_MAX: f64 = 4.5 * PI;
const ROLL_HEIGHT: f64 = 21.0;
const HOLE_RADIUS: f64 = 5.0;
const HOLE_OFFSET: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    SwissRollHole { n: usize, noise: f64, seed: u64 },
    SwissRoll { n: usize, noise: f64, seed: u64 },
    Circle { n: usize, radius: f64, noise: f64, seed: u64 },
    Torus { n: usize, major: f64, minor: f64, noise: f64, seed: u64 },
    CsvCloud { path: PathBuf },
    CsvDistance { path: PathBuf },
}

/// Loaded input: either coordinates or a precomputed metric.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Cloud(PointCloud),
    Distance(DistanceMatrix),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Cloud(c) => c.len(),
            Dataset::Distance(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        Ok(match self {
            DatasetSpec::SwissRollHole { n, noise, seed } => Dataset::Cloud(swiss_roll_hole(*n, *noise, *seed)?.cloud),
            DatasetSpec::SwissRoll { n, noise, seed } => Dataset::Cloud(swiss_roll(*n, *noise, *seed)?.cloud),
            DatasetSpec::Circle { n, radius, noise, seed } => {
                Dataset::Cloud(circle_sample(*n, *radius, *noise, *seed)?)
            }
            DatasetSpec::Torus { n, major, minor, noise, seed } => {
                Dataset::Cloud(torus_sample(*n, *major, *minor, *noise, *seed)?)
            }
            DatasetSpec::CsvCloud { path } => Dataset::Cloud(load_cloud(path)?),
            DatasetSpec::CsvDistance { path } => Dataset::Distance(load_distance(path)?),
        })
    }
}

/// Swiss roll sample with its parameter-plane coordinates `(t, height)`.
#[derive(Clone, Debug)]
pub struct SwissRoll {
    pub cloud: PointCloud,
    pub params: Vec<[f64; 2]>,
}

fn check_noise(noise: f64) -> Result<Option<Normal<f64>>> {
    if !(noise >= 0.0) || !noise.is_finite() {
        return param_err(format!("noise must be a finite value >= 0, got {noise}"));
    }
    Ok((noise > 0.0).then(|| Normal::new(0.0, noise).expect("valid normal")))
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return param_err("sample size must be at least 1");
    }
    Ok(())
}

/// Arc length of the spiral `r = t` from `ROLL_T_MIN` to `t`.
fn unrolled_position(t: f64) -> f64 {
    let primitive = |t: f64| 0.5 * (t * (1.0 + t * t).sqrt() + t.asinh());
    primitive(t) - primitive(ROLL_T_MIN)
}

/// Parameter-plane point relative to the sheet's center: unrolled arc
/// position and height, both shifted so the sheet is centered at the origin.
pub fn sheet_coordinates(t: f64, height: f64) -> [f64; 2] {
    let span = unrolled_position(ROLL_T_MAX);
    [unrolled_position(t) - 0.5 * span, height - 0.5 * ROLL_HEIGHT]
}

/// Whether `(t, height)` lies strictly inside the removed disk
/// `x^2 + (y - 1)^2 < 25` of the centered sheet.
pub fn in_hole(t: f64, height: f64) -> bool {
    let [x, y] = sheet_coordinates(t, height);
    x * x + (y - HOLE_OFFSET) * (y - HOLE_OFFSET) < HOLE_RADIUS * HOLE_RADIUS
}

fn roll(n: usize, noise: f64, seed: u64, hole: bool) -> Result<SwissRoll> {
    check_count(n)?;
    let jitter = check_noise(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(3 * n);
    let mut params = Vec::with_capacity(n);
    while params.len() < n {
        let t = rng.gen_range(ROLL_T_MIN..ROLL_T_MAX);
        let height = rng.gen_range(0.0..ROLL_HEIGHT);
        if hole && in_hole(t, height) {
            continue;
        }
        let mut point = [t * t.cos(), height, t * t.sin()];
        if let Some(dist) = &jitter {
            point.iter_mut().for_each(|x| *x += dist.sample(&mut rng));
        }
        coords.extend_from_slice(&point);
        params.push([t, height]);
    }
    Ok(SwissRoll { cloud: PointCloud::new(n, 3, coords)?, params })
}

/// `(t cos t, h, t sin t)` for `t` uniform in `[1.5 pi, 4.5 pi]` and `h`
/// uniform in `[0, 21]`.
pub fn swiss_roll(n: usize, noise: f64, seed: u64) -> Result<SwissRoll> {
    roll(n, noise, seed, false)
}

/// Swiss roll with a disk removed from the unrolled sheet; rejected points
/// are resampled so exactly `n` remain.
pub fn swiss_roll_hole(n: usize, noise: f64, seed: u64) -> Result<SwissRoll> {
    roll(n, noise, seed, true)
}

/// `n` evenly spaced angles on a circle with Gaussian radial noise.
pub fn circle_sample(n: usize, radius: f64, noise: f64, seed: u64) -> Result<PointCloud> {
    check_count(n)?;
    if !(radius > 0.0) {
        return param_err(format!("radius must be positive, got {radius}"));
    }
    let jitter = check_noise(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(2 * n);
    for k in 0..n {
        let angle = 2.0 * PI * k as f64 / n as f64;
        let r = radius + jitter.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        coords.push(r * angle.cos());
        coords.push(r * angle.sin());
    }
    PointCloud::new(n, 2, coords)
}

/// Torus with angles drawn uniformly; `major > minor > 0`.
pub fn torus_sample(n: usize, major: f64, minor: f64, noise: f64, seed: u64) -> Result<PointCloud> {
    check_count(n)?;
    if !(minor > 0.0 && major > minor) {
        return param_err(format!("torus radii need major > minor > 0, got {major} and {minor}"));
    }
    let jitter = check_noise(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let (u, v) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
        let ring = major + minor * v.cos();
        let mut point = [ring * u.cos(), ring * u.sin(), minor * v.sin()];
        if let Some(dist) = &jitter {
            point.iter_mut().for_each(|x| *x += dist.sample(&mut rng));
        }
        coords.extend_from_slice(&point);
    }
    PointCloud::new(n, 3, coords)
}

/// Numeric rows of a CSV stream, with an optional leading header skipped.
pub fn read_rows(reader: impl Read) -> Result<Vec<Vec<f64>>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (index, record) in csv.records().enumerate() {
        let record = record.map_err(|e| DipoleError::Parse {
            line: e.position().map_or(index as u64 + 1, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(index as u64 + 1, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => {
                if let Some(first) = rows.first() {
                    if first.len() != values.len() {
                        return Err(DipoleError::Parse {
                            line,
                            message: format!("expected {} columns, found {}", first.len(), values.len()),
                        });
                    }
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(DipoleError::Parse { line, message: "non-finite value".into() });
                }
                rows.push(values);
            }
            // a non-numeric first row is a header
            Err(_) if index == 0 => {}
            Err(e) => {
                return Err(DipoleError::Parse { line, message: format!("not a number: {e}") });
            }
        }
    }
    Ok(rows)
}

pub fn read_cloud(reader: impl Read) -> Result<PointCloud> {
    let rows = read_rows(reader)?;
    if rows.is_empty() {
        return Err(DipoleError::Validation("point cloud file has no rows".into()));
    }
    PointCloud::from_rows(&rows)
}

pub fn read_distance(reader: impl Read) -> Result<DistanceMatrix> {
    let rows = read_rows(reader)?;
    let n = rows.len();
    if n == 0 {
        return Err(DipoleError::Validation("distance file has no rows".into()));
    }
    if rows[0].len() != n {
        return Err(DipoleError::Validation(format!("distance matrix is {n}x{}, not square", rows[0].len())));
    }
    DistanceMatrix::from_dense(n, rows.concat(), SYMMETRY_TOL)
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    read_cloud(File::open(path)?)
}

pub fn load_distance(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
    read_distance(File::open(path)?)
}

/// Formats a float with 17 significant digits.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `values` as rows of `width` columns.
pub fn write_rows(mut out: impl Write, header: Option<&[&str]>, values: &[f64], width: usize) -> Result<()> {
    if let Some(names) = header {
        writeln!(out, "{}", names.join(","))?;
    }
    for row in values.chunks(width.max(1)) {
        let line: Vec<String> = row.iter().map(|&x| format_real(x)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn write_cloud(out: impl Write, cloud: &PointCloud) -> Result<()> {
    write_rows(out, None, cloud.coords(), cloud.dim())
}

pub fn write_distance(out: impl Write, dist: &DistanceMatrix) -> Result<()> {
    write_rows(out, None, dist.entries(), dist.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::euclidean_distances;
    use crate::persistence::rips_h1;
    use proptest::prelude::*;

    #[test]
    fn hole_is_respected() {
        let roll = swiss_roll_hole(3000, 0.0, 1).unwrap();
        assert_eq!(roll.cloud.len(), 3000);
        assert!(roll.params.iter().all(|&[t, h]| !in_hole(t, h)));
        let full = swiss_roll(3000, 0.0, 1).unwrap();
        assert!(full.params.iter().any(|&[t, h]| in_hole(t, h)));
    }

    #[test]
    fn hole_center_lies_on_the_sheet() {
        let span = unrolled_position(ROLL_T_MAX);
        // find the t at the middle of the arc length by bisection
        let (mut lo, mut hi) = (ROLL_T_MIN, ROLL_T_MAX);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if unrolled_position(mid) < 0.5 * span {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(in_hole(lo, 0.5 * ROLL_HEIGHT + HOLE_OFFSET));
        assert!(!in_hole(lo, 0.0));
        assert!(!in_hole(ROLL_T_MIN, 0.5 * ROLL_HEIGHT));
    }

    #[test]
    fn roll_points_match_parametrization() {
        let roll = swiss_roll(50, 0.0, 2).unwrap();
        for (p, &[t, h]) in roll.cloud.rows().zip(&roll.params) {
            assert_eq!(p, &[t * t.cos(), h, t * t.sin()]);
            assert!((ROLL_T_MIN..ROLL_T_MAX).contains(&t) && (0.0..ROLL_HEIGHT).contains(&h));
        }
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(swiss_roll_hole(100, 0.1, 3).unwrap().cloud, swiss_roll_hole(100, 0.1, 3).unwrap().cloud);
        assert_eq!(circle_sample(30, 1.0, 0.1, 3).unwrap(), circle_sample(30, 1.0, 0.1, 3).unwrap());
        assert_eq!(torus_sample(30, 2.0, 1.0, 0.0, 3).unwrap(), torus_sample(30, 2.0, 1.0, 0.0, 3).unwrap());
        assert_ne!(torus_sample(30, 2.0, 1.0, 0.0, 3).unwrap(), torus_sample(30, 2.0, 1.0, 0.0, 4).unwrap());
    }

    #[test]
    fn octagon_sides() {
        let c = circle_sample(8, 1.0, 0.0, 0).unwrap();
        let d = euclidean_distances(&c);
        let side = 2.0 * (PI / 8.0).sin();
        for k in 0..8 {
            assert!((d.get(k, (k + 1) % 8) - side).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_circle_has_one_cycle() {
        let c = circle_sample(24, 1.0, 0.0, 0).unwrap();
        let h1 = rips_h1(&euclidean_distances(&c));
        assert_eq!(h1.len(), 1);
        assert!(h1.points[0].persistence() > 1.0);
    }

    #[test]
    fn torus_bounds_and_errors() {
        let t = torus_sample(200, 3.0, 1.0, 0.0, 5).unwrap();
        for p in t.rows() {
            let ring = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!(ring <= 4.0 + 1e-12 && ring >= 2.0 - 1e-12 && p[2].abs() <= 1.0 + 1e-12);
        }
        assert!(torus_sample(10, 1.0, 2.0, 0.0, 0).is_err());
        assert!(torus_sample(10, 1.0, 0.0, 0.0, 0).is_err());
        assert!(circle_sample(10, 1.0, -0.1, 0).is_err());
        assert!(swiss_roll(0, 0.0, 0).is_err());
    }

    #[test]
    fn parses_small_cloud_with_header() {
        let cloud = read_cloud("x,y,z\n1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert_eq!((cloud.len(), cloud.dim()), (2, 3));
        assert_eq!(cloud.point(1), &[4.0, 5.0, 6.0]);
        let bare = read_cloud("1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert_eq!(bare, cloud);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match read_cloud("1,2\n3,4\n5,oops\n".as_bytes()) {
            Err(DipoleError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        match read_cloud("1,2\n3,4,5\n".as_bytes()) {
            Err(DipoleError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn distance_validation() {
        assert!(read_distance("0,1\n1,0\n".as_bytes()).is_ok());
        assert!(matches!(read_distance("0,1\n2,0\n".as_bytes()), Err(DipoleError::Validation(_))));
        assert!(matches!(read_distance("0,-1\n-1,0\n".as_bytes()), Err(DipoleError::Validation(_))));
        assert!(matches!(read_distance("0,1,2\n1,0,2\n".as_bytes()), Err(DipoleError::Validation(_))));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(values in proptest::collection::vec(-1e12f64..1e12, 3..30)) {
            let n = values.len() / 3;
            let cloud = PointCloud::new(n, 3, values[..n * 3].to_vec()).unwrap();
            let mut buf = Vec::new();
            write_cloud(&mut buf, &cloud).unwrap();
            prop_assert_eq!(read_cloud(buf.as_slice()).unwrap(), cloud);
        }

        #[test]
        fn distance_round_trip_is_lossless(seed in 0u64..200) {
            let t = torus_sample(7, 2.0, 0.5, 0.0, seed).unwrap();
            let d = euclidean_distances(&t);
            let mut buf = Vec::new();
            write_distance(&mut buf, &d).unwrap();
            prop_assert_eq!(read_distance(buf.as_slice()).unwrap(), d);
        }
    }
}
