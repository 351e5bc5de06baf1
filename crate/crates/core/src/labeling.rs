//! Ground-truth force distribution labels.
//!
//! Per-indentation nodal force exports are summed into the cells of a
//! regular surface grid; the resulting per-bin 3D forces are the label
//! vector. Totals from bins and from raw nodes must agree, and are compared
//! against force/torque sensor readings for label quality scoring.
//!
//! CSV layouts (header row required):
//! - mesh: `node_id,x_mm,y_mm`
//! - nodal forces (long format): `indentation_id,node_id,fx_n,fy_n,fz_n`
//! - indentation metadata: `indentation_id,center_x_mm,center_y_mm,depth_mm`
//! - F/T readings: `indentation_id,fx_n,fy_n,fz_n`
//! - labels (zero bins omitted): `indentation_id,bin_index,fx_n,fy_n,fz_n`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::characterization::{check_header, csv_reader, parse_field};
use crate::error::{Error, Result};
use crate::util::neumaier_sum;

/// Nodes may sit this far outside the surface rectangle (mm) before the
/// geometry is rejected.
pub const EXTENT_TOL_MM: f64 = 1e-6;

/// Axis-aligned surface rectangle with its origin at (0, 0), in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceExtent {
    pub width_mm: f64,
    pub height_mm: f64,
}

impl SurfaceExtent {
    pub fn new(width_mm: f64, height_mm: f64) -> Result<Self> {
        if !(width_mm.is_finite() && width_mm > 0.0 && height_mm.is_finite() && height_mm > 0.0) {
            return Err(Error::geometry(format!(
                "surface extent {width_mm} x {height_mm} mm must be positive"
            )));
        }
        Ok(Self { width_mm, height_mm })
    }

    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= -tol && x <= self.width_mm + tol && y >= -tol && y <= self.height_mm + tol
    }
}

/// One surface mesh node in the undeformed configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshNode {
    pub id: u64,
    pub x_mm: f64,
    pub y_mm: f64,
}

/// Top-surface mesh: unique node ids, all within the extent.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    nodes: Vec<MeshNode>,
    extent: SurfaceExtent,
}

impl SurfaceMesh {
    pub fn new(nodes: Vec<MeshNode>, extent: SurfaceExtent) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for n in &nodes {
            if !seen.insert(n.id) {
                return Err(Error::geometry(format!("duplicate node id {}", n.id)));
            }
            if !n.x_mm.is_finite() || !n.y_mm.is_finite() {
                return Err(Error::geometry(format!("node {}: non-finite position", n.id)));
            }
            if !extent.contains(n.x_mm, n.y_mm, EXTENT_TOL_MM) {
                return Err(Error::geometry(format!(
                    "node {} at ({}, {}) lies outside the {} x {} mm surface",
                    n.id, n.x_mm, n.y_mm, extent.width_mm, extent.height_mm
                )));
            }
        }
        Ok(Self { nodes, extent })
    }

    /// Regular node lattice covering the extent, ids row-major from 0.
    pub fn regular(extent: SurfaceExtent, nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::geometry(format!("mesh needs at least 2x2 nodes, got {nx}x{ny}")));
        }
        let mut nodes = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                nodes.push(MeshNode {
                    id: (j * nx + i) as u64,
                    x_mm: extent.width_mm * i as f64 / (nx - 1) as f64,
                    y_mm: extent.height_mm * j as f64 / (ny - 1) as f64,
                });
            }
        }
        Self::new(nodes, extent)
    }

    pub fn nodes(&self) -> &[MeshNode] {
        &self.nodes
    }

    pub fn extent(&self) -> SurfaceExtent {
        self.extent
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "node_id,x_mm,y_mm")?;
        for n in &self.nodes {
            writeln!(w, "{},{},{}", n.id, n.x_mm, n.y_mm)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, extent: SurfaceExtent) -> Result<Self> {
        let mut rdr = csv_reader(r);
        check_header(&mut rdr, &["node_id", "x_mm", "y_mm"])?;
        let mut nodes = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let id = rec
                .get(0)
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| Error::schema(format!("row {}: bad node_id", i + 2)))?;
            nodes.push(MeshNode {
                id,
                x_mm: parse_field(&rec, 1, i, "x_mm")?,
                y_mm: parse_field(&rec, 2, i, "y_mm")?,
            });
        }
        Self::new(nodes, extent)
    }
}

/// Regular grid of square bins tiling the surface exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub extent: SurfaceExtent,
    pub rows: usize,
    pub cols: usize,
    pub bin_side_mm: f64,
}

impl BinGrid {
    pub fn new(extent: SurfaceExtent, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::geometry("bin grid needs at least one row and column".to_string()));
        }
        let side_x = extent.width_mm / cols as f64;
        let side_y = extent.height_mm / rows as f64;
        if (side_x - side_y).abs() > 1e-9 * side_x.max(side_y) {
            return Err(Error::geometry(format!(
                "{rows}x{cols} bins over {} x {} mm are not square ({side_x} vs {side_y} mm)",
                extent.width_mm, extent.height_mm
            )));
        }
        Ok(Self { extent, rows, cols, bin_side_mm: side_x })
    }

    /// Number of bins n = rows * cols.
    pub fn bin_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Bin index for a surface point: half-open cells `[x0, x0+side)`, with
    /// the outermost row/column closed so the far edge stays inside.
    pub fn bin_of(&self, x_mm: f64, y_mm: f64) -> Result<usize> {
        if !self.extent.contains(x_mm, y_mm, EXTENT_TOL_MM) {
            return Err(Error::geometry(format!(
                "point ({x_mm}, {y_mm}) outside the {} x {} mm surface",
                self.extent.width_mm, self.extent.height_mm
            )));
        }
        let col = ((x_mm / self.bin_side_mm).floor() as i64).clamp(0, self.cols as i64 - 1) as usize;
        let row = ((y_mm / self.bin_side_mm).floor() as i64).clamp(0, self.rows as i64 - 1) as usize;
        Ok(row * self.cols + col)
    }
}

/// Map every mesh node to the bin containing it.
pub fn assign_bins(mesh: &SurfaceMesh, grid: &BinGrid) -> Result<BTreeMap<u64, usize>> {
    let mut map = BTreeMap::new();
    for n in mesh.nodes() {
        map.insert(n.id, grid.bin_of(n.x_mm, n.y_mm)?);
    }
    Ok(map)
}

/// Indenter placement of one indentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndentationMeta {
    pub center_mm: [f64; 2],
    pub depth_mm: f64,
}

/// Per-indentation 3D nodal force export.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalForceField {
    pub indentation_id: String,
    forces: BTreeMap<u64, [f64; 3]>,
    pub meta: Option<IndentationMeta>,
}

impl NodalForceField {
    pub fn new(
        indentation_id: impl Into<String>,
        forces: BTreeMap<u64, [f64; 3]>,
        meta: Option<IndentationMeta>,
    ) -> Result<Self> {
        for (id, f) in &forces {
            if f.iter().any(|c| !c.is_finite()) {
                return Err(Error::schema(format!("node {id}: non-finite force")));
            }
        }
        Ok(Self { indentation_id: indentation_id.into(), forces, meta })
    }

    pub fn forces(&self) -> &BTreeMap<u64, [f64; 3]> {
        &self.forces
    }
}

/// Binned 3D force distribution of one indentation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceDistributionLabel {
    pub grid: BinGrid,
    values: Vec<[f64; 3]>,
    pub indentation_id: String,
}

impl ForceDistributionLabel {
    /// Per-bin forces, row-major over the grid; length `grid.bin_count()`.
    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    /// Flattened axis-interleaved vector `(fx_0, fy_0, fz_0, fx_1, ...)`.
    pub fn flattened(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }
}

/// Sum nodal forces into their containing bins; empty bins stay zero.
///
/// Every node id in the field must exist in the mesh.
pub fn bin_forces(
    field: &NodalForceField,
    mesh: &SurfaceMesh,
    grid: &BinGrid,
) -> Result<ForceDistributionLabel> {
    let assignment = assign_bins(mesh, grid)?;
    let mut per_bin: Vec<[Vec<f64>; 3]> = vec![[Vec::new(), Vec::new(), Vec::new()]; grid.bin_count()];
    for (node_id, f) in field.forces() {
        let bin = *assignment.get(node_id).ok_or_else(|| {
            Error::schema(format!(
                "indentation {}: node {node_id} is not part of the mesh",
                field.indentation_id
            ))
        })?;
        for axis in 0..3 {
            per_bin[bin][axis].push(f[axis]);
        }
    }
    let values = per_bin
        .into_iter()
        .map(|axes| {
            [
                neumaier_sum(axes[0].iter().copied()),
                neumaier_sum(axes[1].iter().copied()),
                neumaier_sum(axes[2].iter().copied()),
            ]
        })
        .collect();
    Ok(ForceDistributionLabel {
        grid: *grid,
        values,
        indentation_id: field.indentation_id.clone(),
    })
}

/// Componentwise total over all bins.
pub fn total_force_of_label(label: &ForceDistributionLabel) -> [f64; 3] {
    let mut total = [0.0; 3];
    for (axis, t) in total.iter_mut().enumerate() {
        *t = neumaier_sum(label.values().iter().map(|v| v[axis]));
    }
    total
}

/// Componentwise total over all nodes.
pub fn total_force_of_field(field: &NodalForceField) -> [f64; 3] {
    let mut total = [0.0; 3];
    for (axis, t) in total.iter_mut().enumerate() {
        *t = neumaier_sum(field.forces().values().map(|v| v[axis]));
    }
    total
}

/// One force/torque sensor reading of total contact force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtReading {
    pub indentation_id: String,
    pub total_n: [f64; 3],
    /// Per-axis sensor resolution in N, context for interpreting errors.
    pub resolution_n: [f64; 3],
}

impl FtReading {
    pub fn new(indentation_id: impl Into<String>, total_n: [f64; 3], resolution_n: [f64; 3]) -> Result<Self> {
        if resolution_n.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::domain(format!("sensor resolution {resolution_n:?} must be > 0")));
        }
        if total_n.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("reading totals must be finite".to_string()));
        }
        Ok(Self { indentation_id: indentation_id.into(), total_n, resolution_n })
    }
}

/// Per-axis RMSE between binned totals and F/T readings, matched by
/// indentation id. Both sides must cover exactly the same ids.
pub fn ground_truth_rmse(
    labels: &[ForceDistributionLabel],
    readings: &[FtReading],
) -> Result<[f64; 3]> {
    let fem: HashMap<&str, [f64; 3]> = labels
        .iter()
        .map(|l| (l.indentation_id.as_str(), total_force_of_label(l)))
        .collect();
    let ft: HashMap<&str, &[f64; 3]> = readings
        .iter()
        .map(|r| (r.indentation_id.as_str(), &r.total_n))
        .collect();

    let mut missing: Vec<&str> = fem
        .keys()
        .filter(|id| !ft.contains_key(**id))
        .chain(ft.keys().filter(|id| !fem.contains_key(**id)))
        .copied()
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        let shown: Vec<&str> = missing.iter().take(10).copied().collect();
        return Err(Error::Pairing(format!(
            "{} ids present on one side only: {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > 10 { ", ..." } else { "" }
        )));
    }
    if labels.is_empty() {
        return Err(Error::domain("cannot score an empty label set"));
    }

    let n = labels.len() as f64;
    let mut rmse = [0.0; 3];
    for (axis, out) in rmse.iter_mut().enumerate() {
        let sq = neumaier_sum(labels.iter().map(|l| {
            let d = fem[l.indentation_id.as_str()][axis] - ft[l.indentation_id.as_str()][axis];
            d * d
        }));
        *out = (sq / n).sqrt();
    }
    Ok(rmse)
}

/// Parameters of the synthetic spherical-indenter force generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthIndentation {
    pub center_mm: [f64; 2],
    pub depth_mm: f64,
    /// Indenter tip radius in mm.
    pub radius_mm: f64,
    /// Calibration of the total normal force: `|Fz| = stiffness_scale * depth^1.5`.
    pub stiffness_scale: f64,
    /// Friction coefficient scaling the radial shear.
    pub friction_mu: f64,
}

/// Synthetic stand-in for a simulated contact solve.
///
/// Normal forces follow a spherical-cap pressure profile
/// `fz ~ -sqrt(1 - (rho/a)^2)` inside the contact radius
/// `a = sqrt(2 R d - d^2)`, normalized so the total matches
/// `stiffness_scale * depth^1.5`. Shear is `mu * |fz|` pointing radially
/// outward. This exercises the pipeline end to end; it is not a contact
/// mechanics solution.
pub fn synth_indentation(
    mesh: &SurfaceMesh,
    params: &SynthIndentation,
    indentation_id: impl Into<String>,
) -> Result<NodalForceField> {
    let [cx, cy] = params.center_mm;
    if !mesh.extent().contains(cx, cy, 0.0) {
        return Err(Error::domain(format!(
            "indenter center ({cx}, {cy}) outside the surface"
        )));
    }
    if !(params.depth_mm >= 0.0 && params.depth_mm <= 2.0) {
        return Err(Error::domain(format!(
            "indentation depth {} mm outside [0, 2]",
            params.depth_mm
        )));
    }
    if !params.radius_mm.is_finite() || params.radius_mm <= 0.0 {
        return Err(Error::domain(format!("indenter radius {} mm must be > 0", params.radius_mm)));
    }
    if !(params.stiffness_scale >= 0.0 && params.friction_mu >= 0.0) {
        return Err(Error::domain("stiffness scale and friction must be >= 0".to_string()));
    }

    let meta = IndentationMeta { center_mm: params.center_mm, depth_mm: params.depth_mm };
    // Spherical cap: contact radius shrinks to 0 with depth.
    let contact_radius = (2.0 * params.radius_mm * params.depth_mm - params.depth_mm.powi(2))
        .max(0.0)
        .sqrt();

    let mut profile: Vec<(u64, f64, [f64; 2])> = Vec::new();
    let mut weight_total = 0.0;
    for n in mesh.nodes() {
        let dx = n.x_mm - cx;
        let dy = n.y_mm - cy;
        let rho = (dx * dx + dy * dy).sqrt();
        if contact_radius > 0.0 && rho < contact_radius {
            let w = (1.0 - (rho / contact_radius).powi(2)).max(0.0).sqrt();
            let radial = if rho > 0.0 { [dx / rho, dy / rho] } else { [0.0, 0.0] };
            profile.push((n.id, w, radial));
            weight_total += w;
        }
    }

    let mut forces = BTreeMap::new();
    if weight_total > 0.0 {
        let fz_total = params.stiffness_scale * params.depth_mm.powf(1.5);
        for (id, w, radial) in profile {
            let fz = -w / weight_total * fz_total;
            let shear = params.friction_mu * fz.abs();
            forces.insert(id, [shear * radial[0], shear * radial[1], fz]);
        }
    }
    NodalForceField::new(indentation_id, forces, Some(meta))
}

/// Read a long-format nodal force CSV, optionally joining indentation
/// metadata; fields are grouped by indentation id (sorted).
pub fn read_force_fields<R: Read>(
    forces: R,
    metadata: Option<HashMap<String, IndentationMeta>>,
) -> Result<Vec<NodalForceField>> {
    let mut rdr = csv_reader(forces);
    check_header(&mut rdr, &["indentation_id", "node_id", "fx_n", "fy_n", "fz_n"])?;
    let mut grouped: BTreeMap<String, BTreeMap<u64, [f64; 3]>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let ind = rec
            .get(0)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::schema(format!("row {}: missing indentation_id", i + 2)))?;
        let node = rec
            .get(1)
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| Error::schema(format!("row {}: bad node_id", i + 2)))?;
        let f = [
            parse_field(&rec, 2, i, "fx_n")?,
            parse_field(&rec, 3, i, "fy_n")?,
            parse_field(&rec, 4, i, "fz_n")?,
        ];
        if grouped.entry(ind.to_string()).or_default().insert(node, f).is_some() {
            return Err(Error::schema(format!(
                "row {}: duplicate force entry for indentation {ind}, node {node}",
                i + 2
            )));
        }
    }
    grouped
        .into_iter()
        .map(|(id, forces)| {
            let meta = metadata.as_ref().and_then(|m| m.get(&id).copied());
            NodalForceField::new(id, forces, meta)
        })
        .collect()
}

/// Read indentation metadata keyed by indentation id.
pub fn read_metadata_csv<R: Read>(r: R) -> Result<HashMap<String, IndentationMeta>> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &["indentation_id", "center_x_mm", "center_y_mm", "depth_mm"])?;
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec
            .get(0)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::schema(format!("row {}: missing indentation_id", i + 2)))?;
        out.insert(
            id.to_string(),
            IndentationMeta {
                center_mm: [
                    parse_field(&rec, 1, i, "center_x_mm")?,
                    parse_field(&rec, 2, i, "center_y_mm")?,
                ],
                depth_mm: parse_field(&rec, 3, i, "depth_mm")?,
            },
        );
    }
    Ok(out)
}

pub fn write_metadata_csv<W: Write>(mut w: W, fields: &[NodalForceField]) -> Result<()> {
    writeln!(w, "indentation_id,center_x_mm,center_y_mm,depth_mm")?;
    for f in fields {
        let meta = f.meta.ok_or_else(|| {
            Error::schema(format!("indentation {} has no metadata", f.indentation_id))
        })?;
        writeln!(
            w,
            "{},{},{},{}",
            f.indentation_id, meta.center_mm[0], meta.center_mm[1], meta.depth_mm
        )?;
    }
    Ok(())
}

pub fn write_forces_csv<W: Write>(mut w: W, fields: &[NodalForceField]) -> Result<()> {
    writeln!(w, "indentation_id,node_id,fx_n,fy_n,fz_n")?;
    for field in fields {
        for (node, f) in field.forces() {
            writeln!(w, "{},{},{},{},{}", field.indentation_id, node, f[0], f[1], f[2])?;
        }
    }
    Ok(())
}

/// Read F/T readings; the sensor resolution is not part of the file and is
/// supplied by the caller.
pub fn read_ft_csv<R: Read>(r: R, resolution_n: [f64; 3]) -> Result<Vec<FtReading>> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &["indentation_id", "fx_n", "fy_n", "fz_n"])?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec
            .get(0)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::schema(format!("row {}: missing indentation_id", i + 2)))?;
        out.push(FtReading::new(
            id,
            [
                parse_field(&rec, 1, i, "fx_n")?,
                parse_field(&rec, 2, i, "fy_n")?,
                parse_field(&rec, 3, i, "fz_n")?,
            ],
            resolution_n,
        )?);
    }
    Ok(out)
}

pub fn write_ft_csv<W: Write>(mut w: W, readings: &[FtReading]) -> Result<()> {
    writeln!(w, "indentation_id,fx_n,fy_n,fz_n")?;
    for r in readings {
        writeln!(w, "{},{},{},{}", r.indentation_id, r.total_n[0], r.total_n[1], r.total_n[2])?;
    }
    Ok(())
}

/// Write labels, omitting all-zero bins.
pub fn write_labels_csv<W: Write>(mut w: W, labels: &[ForceDistributionLabel]) -> Result<()> {
    writeln!(w, "indentation_id,bin_index,fx_n,fy_n,fz_n")?;
    for label in labels {
        for (idx, v) in label.values().iter().enumerate() {
            if v == &[0.0, 0.0, 0.0] {
                continue;
            }
            writeln!(w, "{},{},{},{},{}", label.indentation_id, idx, v[0], v[1], v[2])?;
        }
    }
    Ok(())
}

/// Grid geometry manifest accompanying a label CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelManifest {
    pub schema_version: u32,
    pub grid: BinGrid,
    pub indentation_count: usize,
}

pub fn write_label_manifest(path: impl AsRef<Path>, grid: &BinGrid, count: usize) -> Result<()> {
    let manifest = LabelManifest {
        schema_version: 1,
        grid: *grid,
        indentation_count: count,
    };
    std::fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}
