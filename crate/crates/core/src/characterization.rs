//! Experimental stress analysis: raw tension/inflation measurements to
//! stress-stretch curves, stretch estimation from tracked points, and the
//! tilt-test friction coefficient.
//!
//! CSV layouts (header row required, comma separated, `.` decimal):
//! - tension records: `lambda,force_n,w0_mm,h0_mm`
//! - inflation records: `pressure_kpa,radius_mm,h0_mm,lambda1,lambda2`
//! - curves: `lambda,sigma_kpa` written with 9 significant digits

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constitutive::LoadCase;
use crate::error::{Error, Result};

/// Ratio `h0/r` above which the thin-membrane stress formula is flagged.
pub const THIN_MEMBRANE_RATIO: f64 = 0.1;

/// One tension (UA or PS) measurement sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensionRecord {
    /// Measured force in N.
    pub force_n: f64,
    /// Principal stretch in loading direction.
    pub lambda: f64,
    /// Reference width in mm.
    pub w0_mm: f64,
    /// Reference thickness in mm.
    pub h0_mm: f64,
}

impl TensionRecord {
    pub fn new(force_n: f64, lambda: f64, w0_mm: f64, h0_mm: f64) -> Result<Self> {
        if !force_n.is_finite() {
            return Err(Error::domain(format!("force {force_n} must be finite")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::domain(format!("stretch {lambda} must be > 0")));
        }
        if !(w0_mm.is_finite() && w0_mm > 0.0) || !(h0_mm.is_finite() && h0_mm > 0.0) {
            return Err(Error::domain(format!(
                "reference dimensions w0 = {w0_mm} mm, h0 = {h0_mm} mm must be > 0"
            )));
        }
        Ok(Self { force_n, lambda, w0_mm, h0_mm })
    }
}

/// Cauchy stress in loading direction, `sigma = F lambda / (w0 h0)`.
///
/// Force in N over mm^2 is MPa; the result is converted to kPa.
pub fn tension_stress(rec: &TensionRecord) -> f64 {
    rec.force_n * rec.lambda / (rec.w0_mm * rec.h0_mm) * 1000.0
}

/// One membrane-inflation (EB) measurement sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InflationRecord {
    /// Inflation pressure in kPa.
    pub pressure_kpa: f64,
    /// Apex radius of curvature in mm.
    pub radius_mm: f64,
    /// Reference thickness in mm.
    pub h0_mm: f64,
    /// In-plane apex stretches.
    pub lambda1: f64,
    pub lambda2: f64,
}

impl InflationRecord {
    pub fn new(
        pressure_kpa: f64,
        radius_mm: f64,
        h0_mm: f64,
        lambda1: f64,
        lambda2: f64,
    ) -> Result<Self> {
        if !(pressure_kpa.is_finite() && pressure_kpa >= 0.0) {
            return Err(Error::domain(format!("pressure {pressure_kpa} must be >= 0")));
        }
        if !(radius_mm.is_finite() && radius_mm > 0.0) {
            return Err(Error::domain(format!("apex radius {radius_mm} must be > 0")));
        }
        if !(h0_mm.is_finite() && h0_mm > 0.0) {
            return Err(Error::domain(format!("thickness {h0_mm} must be > 0")));
        }
        for l in [lambda1, lambda2] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::domain(format!("stretch {l} must be > 0")));
            }
        }
        Ok(Self { pressure_kpa, radius_mm, h0_mm, lambda1, lambda2 })
    }
}

/// Inflation stress with the validity flag of the thin-membrane assumption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflationStress {
    pub sigma_kpa: f64,
    /// Set when `h0/r >= 0.1`, i.e. the `h0 << r` assumption is doubtful.
    pub thin_membrane_warning: bool,
}

/// Equibiaxial Cauchy stress at the apex, `sigma = p r / (2 h0 lambda3)`
/// with `lambda3 = 1/(lambda1 lambda2)`.
pub fn inflation_stress(rec: &InflationRecord) -> InflationStress {
    let lambda3 = 1.0 / (rec.lambda1 * rec.lambda2);
    InflationStress {
        sigma_kpa: rec.pressure_kpa * rec.radius_mm / (2.0 * rec.h0_mm * lambda3),
        thin_membrane_warning: rec.h0_mm / rec.radius_mm >= THIN_MEMBRANE_RATIO,
    }
}

/// Thickness stretch from incompressibility, `lambda3 = 1/(lambda1 lambda2)`.
pub fn thickness_stretch(lambda1: f64, lambda2: f64) -> Result<f64> {
    for l in [lambda1, lambda2] {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::domain(format!("stretch {l} must be > 0")));
        }
    }
    Ok(1.0 / (lambda1 * lambda2))
}

/// Static friction coefficient from the maximum tilt angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionMeasurement {
    pub theta_rad: f64,
    pub mu0: f64,
}

/// `mu0 = tan(theta)` from static equilibrium on the inclined plate.
pub fn friction_from_tilt(theta_rad: f64) -> Result<FrictionMeasurement> {
    if !(theta_rad.is_finite() && theta_rad > 0.0 && theta_rad < std::f64::consts::FRAC_PI_2) {
        return Err(Error::domain(format!(
            "tilt angle {theta_rad} rad outside (0, pi/2)"
        )));
    }
    Ok(FrictionMeasurement {
        theta_rad,
        mu0: theta_rad.tan(),
    })
}

/// Reference and deformed position of one tracked surface point, in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPointPair {
    pub reference: [f64; 2],
    pub current: [f64; 2],
}

impl TrackedPointPair {
    pub fn new(reference: [f64; 2], current: [f64; 2]) -> Result<Self> {
        if reference.iter().chain(current.iter()).any(|c| !c.is_finite()) {
            return Err(Error::domain("tracked point coordinates must be finite".to_string()));
        }
        Ok(Self { reference, current })
    }
}

/// In-plane principal stretches from tracked points.
///
/// Fits the affine map `cur ~ G ref + t` by least squares over centered
/// coordinates and returns the singular values of `G` in descending order.
/// Requires at least 3 points whose reference positions are not collinear.
pub fn principal_stretches_from_points(pairs: &[TrackedPointPair]) -> Result<(f64, f64)> {
    if pairs.len() < 3 {
        return Err(Error::geometry(format!(
            "need at least 3 tracked points, got {}",
            pairs.len()
        )));
    }

    let n = pairs.len() as f64;
    let mut ref_mean = [0.0; 2];
    let mut cur_mean = [0.0; 2];
    for p in pairs {
        for i in 0..2 {
            ref_mean[i] += p.reference[i] / n;
            cur_mean[i] += p.current[i] / n;
        }
    }

    // Normal equations on centered coordinates: G = B N^-1 with
    // N = sum r r^T and B = sum c r^T.
    let mut nmat = [[0.0f64; 2]; 2];
    let mut bmat = [[0.0f64; 2]; 2];
    for p in pairs {
        let r = [p.reference[0] - ref_mean[0], p.reference[1] - ref_mean[1]];
        let c = [p.current[0] - cur_mean[0], p.current[1] - cur_mean[1]];
        for i in 0..2 {
            for j in 0..2 {
                nmat[i][j] += r[i] * r[j];
                bmat[i][j] += c[i] * r[j];
            }
        }
    }

    // Condition estimate of the symmetric 2x2 normal matrix via its
    // eigenvalue ratio; collinear references collapse the small eigenvalue.
    let tr = nmat[0][0] + nmat[1][1];
    let det = nmat[0][0] * nmat[1][1] - nmat[0][1] * nmat[1][0];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let eig_hi = tr / 2.0 + disc;
    let eig_lo = tr / 2.0 - disc;
    if eig_lo <= 0.0 || !eig_lo.is_finite() || eig_hi / eig_lo > 1e8 {
        return Err(Error::geometry(
            "degenerate tracked-point configuration (reference points nearly collinear)"
                .to_string(),
        ));
    }

    let inv_det = 1.0 / det;
    let ninv = [
        [nmat[1][1] * inv_det, -nmat[0][1] * inv_det],
        [-nmat[1][0] * inv_det, nmat[0][0] * inv_det],
    ];
    let mut g = [[0.0f64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g[i][j] = bmat[i][0] * ninv[0][j] + bmat[i][1] * ninv[1][j];
        }
    }

    // Singular values of G from the eigenvalues of G^T G.
    let gtg_tr = g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1];
    let g_det = (g[0][0] * g[1][1] - g[0][1] * g[1][0]).abs();
    let s_disc = (gtg_tr * gtg_tr / 4.0 - g_det * g_det).max(0.0).sqrt();
    let s1 = (gtg_tr / 2.0 + s_disc).sqrt();
    let s2 = if s1 > 0.0 { g_det / s1 } else { 0.0 };
    Ok((s1, s2))
}

/// Provenance of a stress-stretch curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveSource {
    Experiment,
    Model,
}

/// One `(lambda, sigma)` sample of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub lambda: f64,
    pub sigma_kpa: f64,
}

/// Load-case-tagged stress-stretch curve with strictly increasing stretches
/// starting at `lambda >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressStretchCurve {
    case: LoadCase,
    samples: Vec<CurveSample>,
    source: CurveSource,
}

impl StressStretchCurve {
    pub fn new(case: LoadCase, samples: Vec<CurveSample>, source: CurveSource) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("curve must contain at least one sample"));
        }
        if samples[0].lambda < 1.0 {
            return Err(Error::domain(format!(
                "first stretch {} must be >= 1",
                samples[0].lambda
            )));
        }
        for pair in samples.windows(2) {
            if pair[1].lambda <= pair[0].lambda {
                return Err(Error::domain(format!(
                    "stretches must be strictly increasing ({} then {})",
                    pair[0].lambda, pair[1].lambda
                )));
            }
        }
        if samples.iter().any(|s| !s.lambda.is_finite() || !s.sigma_kpa.is_finite()) {
            return Err(Error::domain("curve samples must be finite"));
        }
        Ok(Self { case, samples, source })
    }

    pub fn case(&self) -> LoadCase {
        self.case
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    pub fn source(&self) -> CurveSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Write as `lambda,sigma_kpa` rows with 9 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lambda,sigma_kpa")?;
        for s in &self.samples {
            writeln!(w, "{:.8e},{:.8e}", s.lambda, s.sigma_kpa)?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Parse a `lambda,sigma_kpa` CSV written by [`Self::write_csv`].
    pub fn read_csv<R: Read>(case: LoadCase, source: CurveSource, r: R) -> Result<Self> {
        let mut rdr = csv_reader(r);
        check_header(&mut rdr, &["lambda", "sigma_kpa"])?;
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            samples.push(CurveSample {
                lambda: parse_field(&rec, 0, i, "lambda")?,
                sigma_kpa: parse_field(&rec, 1, i, "sigma_kpa")?,
            });
        }
        Self::new(case, samples, source)
    }

    pub fn read_csv_path(
        case: LoadCase,
        source: CurveSource,
        path: impl AsRef<Path>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::read_csv(case, source, file)
            .map_err(|e| Error::schema(format!("{}: {e}", path.display())))
    }
}

/// Curve from tension records; samples are sorted by stretch.
pub fn tension_curve(case: LoadCase, records: &[TensionRecord]) -> Result<StressStretchCurve> {
    if case == LoadCase::Equibiaxial {
        return Err(Error::config(
            "equibiaxial curves come from inflation records, not tension records".to_string(),
        ));
    }
    let mut samples: Vec<CurveSample> = records
        .iter()
        .map(|r| CurveSample { lambda: r.lambda, sigma_kpa: tension_stress(r) })
        .collect();
    samples.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    StressStretchCurve::new(case, samples, CurveSource::Experiment)
}

/// Equibiaxial curve from inflation records, using `lambda1` as the curve
/// stretch. Returns the curve and whether any sample tripped the
/// thin-membrane warning.
pub fn inflation_curve(records: &[InflationRecord]) -> Result<(StressStretchCurve, bool)> {
    let mut warned = false;
    let mut samples: Vec<CurveSample> = records
        .iter()
        .map(|r| {
            let s = inflation_stress(r);
            warned |= s.thin_membrane_warning;
            CurveSample { lambda: r.lambda1, sigma_kpa: s.sigma_kpa }
        })
        .collect();
    samples.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let curve = StressStretchCurve::new(LoadCase::Equibiaxial, samples, CurveSource::Experiment)?;
    Ok((curve, warned))
}

/// Pointwise mean of repeat-specimen curves on the first curve's stretch
/// grid; the others are linearly interpolated (clamped at their ends).
pub fn average_curves(curves: &[StressStretchCurve]) -> Result<StressStretchCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::domain("cannot average an empty curve list"))?;
    if curves.iter().any(|c| c.case() != first.case()) {
        return Err(Error::config(
            "cannot average curves of different load cases".to_string(),
        ));
    }
    let samples = first
        .samples()
        .iter()
        .map(|s| {
            let mean = curves
                .iter()
                .map(|c| interpolate(c.samples(), s.lambda))
                .sum::<f64>()
                / curves.len() as f64;
            CurveSample { lambda: s.lambda, sigma_kpa: mean }
        })
        .collect();
    StressStretchCurve::new(first.case(), samples, CurveSource::Experiment)
}

fn interpolate(samples: &[CurveSample], lambda: f64) -> f64 {
    if lambda <= samples[0].lambda {
        return samples[0].sigma_kpa;
    }
    let last = samples.last().expect("curve samples are nonempty");
    if lambda >= last.lambda {
        return last.sigma_kpa;
    }
    let idx = samples.partition_point(|s| s.lambda < lambda);
    let (a, b) = (&samples[idx - 1], &samples[idx]);
    let t = (lambda - a.lambda) / (b.lambda - a.lambda);
    a.sigma_kpa + t * (b.sigma_kpa - a.sigma_kpa)
}

/// Read tension records (`lambda,force_n,w0_mm,h0_mm`).
pub fn read_tension_csv<R: Read>(r: R) -> Result<Vec<TensionRecord>> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &["lambda", "force_n", "w0_mm", "h0_mm"])?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(TensionRecord::new(
            parse_field(&rec, 1, i, "force_n")?,
            parse_field(&rec, 0, i, "lambda")?,
            parse_field(&rec, 2, i, "w0_mm")?,
            parse_field(&rec, 3, i, "h0_mm")?,
        )?);
    }
    Ok(out)
}

pub fn read_tension_csv_path(path: impl AsRef<Path>) -> Result<Vec<TensionRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_tension_csv(file).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
}

/// Read inflation records (`pressure_kpa,radius_mm,h0_mm,lambda1,lambda2`).
pub fn read_inflation_csv<R: Read>(r: R) -> Result<Vec<InflationRecord>> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &["pressure_kpa", "radius_mm", "h0_mm", "lambda1", "lambda2"])?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(InflationRecord::new(
            parse_field(&rec, 0, i, "pressure_kpa")?,
            parse_field(&rec, 1, i, "radius_mm")?,
            parse_field(&rec, 2, i, "h0_mm")?,
            parse_field(&rec, 3, i, "lambda1")?,
            parse_field(&rec, 4, i, "lambda2")?,
        )?);
    }
    Ok(out)
}

pub fn read_inflation_csv_path(path: impl AsRef<Path>) -> Result<Vec<InflationRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_inflation_csv(file).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
}

pub(crate) fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

pub(crate) fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::schema(format!(
            "header mismatch: expected '{}', got '{}'",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

pub(crate) fn parse_field(
    rec: &csv::StringRecord,
    idx: usize,
    row: usize,
    name: &str,
) -> Result<f64> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::schema(format!("row {}: missing column {idx} ({name})", row + 2)))?;
    raw.parse::<f64>().map_err(|_| {
        Error::schema(format!(
            "row {}, column {} ({name}): cannot parse '{raw}' as a number",
            row + 2,
            idx + 1
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tension_stress_examples() {
        let zero = TensionRecord::new(0.0, 1.2, 10.0, 0.5).unwrap();
        assert_eq!(tension_stress(&zero), 0.0);
        let rec = TensionRecord::new(1.0, 1.0, 10.0, 0.5).unwrap();
        assert!((tension_stress(&rec) - 200.0).abs() < 1e-12);
        let doubled = TensionRecord::new(1.0, 2.0, 10.0, 0.5).unwrap();
        assert!((tension_stress(&doubled) - 400.0).abs() < 1e-12);
    }

    #[test]
    fn inflation_stress_examples() {
        let zero = InflationRecord::new(0.0, 15.0, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(inflation_stress(&zero).sigma_kpa, 0.0);
        let rec = InflationRecord::new(10.0, 15.0, 0.5, 1.0, 1.0).unwrap();
        let s = inflation_stress(&rec);
        assert!((s.sigma_kpa - 150.0).abs() < 1e-12);
        assert!(!s.thin_membrane_warning);
        let stretched = InflationRecord::new(10.0, 15.0, 0.5, 2f64.sqrt(), 2f64.sqrt()).unwrap();
        assert!((inflation_stress(&stretched).sigma_kpa - 300.0).abs() < 1e-10);
    }

    #[test]
    fn inflation_warns_on_thick_membranes() {
        let rec = InflationRecord::new(10.0, 4.0, 0.5, 1.0, 1.0).unwrap();
        assert!(inflation_stress(&rec).thin_membrane_warning);
    }

    #[test]
    fn thickness_stretch_examples() {
        assert_eq!(thickness_stretch(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(thickness_stretch(2.0, 1.0).unwrap(), 0.5);
        assert!((thickness_stretch(2.0, 3.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(thickness_stretch(0.0, 1.0).is_err());
        assert!(thickness_stretch(1.0, -2.0).is_err());
    }

    #[test]
    fn friction_examples() {
        let m = friction_from_tilt(std::f64::consts::FRAC_PI_4).unwrap();
        assert!((m.mu0 - 1.0).abs() < 1e-15);
        let m = friction_from_tilt(0.45f64.atan()).unwrap();
        assert!((m.mu0 - 0.45).abs() < 1e-15);
        let m = friction_from_tilt(1e-9).unwrap();
        assert!(m.mu0 < 1e-8);
        assert!(friction_from_tilt(0.0).is_err());
        assert!(friction_from_tilt(std::f64::consts::FRAC_PI_2).is_err());
    }

    fn square_pairs(transform: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<TrackedPointPair> {
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
            .into_iter()
            .map(|p| TrackedPointPair::new(p, transform(p)).unwrap())
            .collect()
    }

    #[test]
    fn stretches_identity_and_scaling() {
        let (s1, s2) = principal_stretches_from_points(&square_pairs(|p| p)).unwrap();
        assert!((s1 - 1.0).abs() < 1e-12 && (s2 - 1.0).abs() < 1e-12);

        let (s1, s2) =
            principal_stretches_from_points(&square_pairs(|p| [1.3 * p[0], 1.3 * p[1]])).unwrap();
        assert!((s1 - 1.3).abs() < 1e-12 && (s2 - 1.3).abs() < 1e-12);
    }

    #[test]
    fn stretches_recover_pure_stretch() {
        use rand::Rng;
        let mut rng = crate::seed::stage_rng(11, "characterization/test");
        let pairs: Vec<TrackedPointPair> = (0..10)
            .map(|_| {
                let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
                TrackedPointPair::new(p, [1.5 * p[0] + 0.3, 0.8 * p[1] - 1.1]).unwrap()
            })
            .collect();
        let (s1, s2) = principal_stretches_from_points(&pairs).unwrap();
        assert!((s1 - 1.5).abs() < 1e-9, "s1 = {s1}");
        assert!((s2 - 0.8).abs() < 1e-9, "s2 = {s2}");
    }

    #[test]
    fn stretches_reject_degenerate_geometry() {
        let collinear: Vec<TrackedPointPair> = (0..5)
            .map(|i| {
                let p = [f64::from(i), 2.0 * f64::from(i)];
                TrackedPointPair::new(p, p).unwrap()
            })
            .collect();
        assert!(matches!(
            principal_stretches_from_points(&collinear),
            Err(Error::Geometry(_))
        ));
        assert!(principal_stretches_from_points(&collinear[..2]).is_err());
    }

    #[test]
    fn curve_invariants() {
        let mk = |lams: &[f64]| {
            StressStretchCurve::new(
                LoadCase::Uniaxial,
                lams.iter().map(|&l| CurveSample { lambda: l, sigma_kpa: 0.0 }).collect(),
                CurveSource::Experiment,
            )
        };
        assert!(mk(&[]).is_err());
        assert!(mk(&[0.9, 1.5]).is_err());
        assert!(mk(&[1.0, 1.0]).is_err());
        assert!(mk(&[1.0, 1.2, 1.5]).is_ok());
    }

    #[test]
    fn tension_csv_round_trip() {
        let csv = "lambda,force_n,w0_mm,h0_mm\n1.0,0.0,10,0.5\n1.5,0.4,10,0.5\n";
        let recs = read_tension_csv(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        let curve = tension_curve(LoadCase::Uniaxial, &recs).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve.samples()[0].sigma_kpa, 0.0);
    }

    #[test]
    fn csv_errors_carry_row_diagnostics() {
        let bad = "lambda,force_n,w0_mm,h0_mm\n1.0,abc,10,0.5\n";
        let err = read_tension_csv(bad.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("force_n"), "{msg}");

        let wrong_header = "lambda,sigma\n1.0,2.0\n";
        assert!(read_tension_csv(wrong_header.as_bytes()).is_err());
    }

    #[test]
    fn curve_csv_round_trip_at_printed_precision() {
        let curve = StressStretchCurve::new(
            LoadCase::PureShear,
            vec![
                CurveSample { lambda: 1.0, sigma_kpa: 0.0 },
                CurveSample { lambda: 1.2345678901, sigma_kpa: 9.87654321012 },
                CurveSample { lambda: 2.0, sigma_kpa: 123.456789012 },
            ],
            CurveSource::Model,
        )
        .unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let back =
            StressStretchCurve::read_csv(LoadCase::PureShear, CurveSource::Model, &buf[..]).unwrap();
        for (a, b) in curve.samples().iter().zip(back.samples()) {
            assert!((a.lambda - b.lambda).abs() <= 5e-9 * a.lambda.abs());
            assert!((a.sigma_kpa - b.sigma_kpa).abs() <= 5e-9 * a.sigma_kpa.abs().max(1.0));
        }
    }

    #[test]
    fn averaging_interpolates_to_first_grid() {
        let a = StressStretchCurve::new(
            LoadCase::Uniaxial,
            vec![
                CurveSample { lambda: 1.0, sigma_kpa: 0.0 },
                CurveSample { lambda: 2.0, sigma_kpa: 10.0 },
            ],
            CurveSource::Experiment,
        )
        .unwrap();
        let b = StressStretchCurve::new(
            LoadCase::Uniaxial,
            vec![
                CurveSample { lambda: 1.0, sigma_kpa: 2.0 },
                CurveSample { lambda: 1.5, sigma_kpa: 3.0 },
                CurveSample { lambda: 2.0, sigma_kpa: 4.0 },
            ],
            CurveSource::Experiment,
        )
        .unwrap();
        let avg = average_curves(&[a, b]).unwrap();
        assert_eq!(avg.len(), 2);
        assert!((avg.samples()[0].sigma_kpa - 1.0).abs() < 1e-12);
        assert!((avg.samples()[1].sigma_kpa - 7.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn stress_formulas_are_homogeneous_in_load(f in 0.01f64..10.0, scale in 0.1f64..10.0) {
            let rec = TensionRecord::new(f, 1.4, 10.0, 0.5).unwrap();
            let scaled = TensionRecord::new(scale * f, 1.4, 10.0, 0.5).unwrap();
            prop_assert!((tension_stress(&scaled) - scale * tension_stress(&rec)).abs()
                  <= 1e-9 * tension_stress(&scaled).abs());

            let inf = InflationRecord::new(f, 15.0, 0.5, 1.2, 1.1).unwrap();
            let inf_scaled = InflationRecord::new(scale * f, 15.0, 0.5, 1.2, 1.1).unwrap();
            prop_assert!((inflation_stress(&inf_scaled).sigma_kpa
                  - scale * inflation_stress(&inf).sigma_kpa).abs()
                  <= 1e-9 * inflation_stress(&inf_scaled).sigma_kpa.abs());
        }

        #[test]
        fn stretch_fit_ignores_rigid_motion(tx in -5.0f64..5.0, ty in -5.0f64..5.0,
                                            angle in -3.0f64..3.0,
                                            s1 in 0.5f64..2.0, s2 in 0.5f64..2.0) {
            use rand::Rng;
            let mut rng = crate::seed::stage_rng(5, "characterization/rigid");
            let (c, s) = (angle.cos(), angle.sin());
            let pairs: Vec<TrackedPointPair> = (0..12)
                .map(|_| {
                    let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                    // rotation . diag(s1, s2) applied to p, plus translation
                    let q = [s1 * p[0], s2 * p[1]];
                    let cur = [c * q[0] - s * q[1] + tx, s * q[0] + c * q[1] + ty];
                    TrackedPointPair::new(p, cur).unwrap()
                })
                .collect();
            let (hi, lo) = principal_stretches_from_points(&pairs).unwrap();
            let (want_hi, want_lo) = (s1.max(s2), s1.min(s2));
            prop_assert!((hi - want_hi).abs() < 1e-8, "hi {hi} vs {want_hi}");
            prop_assert!((lo - want_lo).abs() < 1e-8, "lo {lo} vs {want_lo}");
        }
    }
}
