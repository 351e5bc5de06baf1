//! Deterministic synthetic dataset generation.
//!
//! A grid of indentation centers and depths drives both sides of each
//! record: the force side through [`synth_indentation`] and binning, the
//! image side through a radial particle displacement whose amplitude scales
//! with depth, rendered and pushed through the flow/feature pipeline. The
//! generator exists to exercise the pipeline end to end at desk scale; it
//! makes no contact-mechanics claims.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfeat::{
    dense_flow, pool_features, DisplacementField, FlowConfig, GrayImage, ParticleScene, RegionGrid,
};
use crate::labeling::{
    bin_forces, synth_indentation, BinGrid, ForceDistributionLabel, FtReading, NodalForceField,
    SurfaceExtent, SurfaceMesh, SynthIndentation,
};
use crate::learning::{Dataset, DatasetRecord};
use crate::seed::stage_rng;
use crate::util::parallel_map;

/// Full parameterization of the synthetic generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub extent_mm: [f64; 2],
    /// Surface mesh node counts (x, y).
    pub mesh_nodes: [usize; 2],
    /// Label bin grid (rows, cols); n = rows * cols.
    pub grid: [usize; 2],
    /// Feature pooling regions (rows, cols); m = rows * cols.
    pub regions: [usize; 2],
    /// Rendered frame size (width, height) in px.
    pub image_px: [usize; 2],
    pub particle_count: usize,
    pub particle_radius_px: f64,
    /// Indentation center spacing and edge margin, mm.
    pub spacing_mm: f64,
    pub margin_mm: f64,
    pub depths_mm: Vec<f64>,
    /// Keep at most this many records (deterministic truncation).
    pub record_cap: Option<usize>,
    pub indenter_radius_mm: f64,
    /// Total normal force calibration: `|Fz| = stiffness_scale * depth^1.5`.
    pub stiffness_scale: f64,
    pub friction_mu: f64,
    /// Peak particle displacement per mm of depth, px/mm.
    pub displacement_gain_px_per_mm: f64,
    /// Radius of the displacement ring, mm.
    pub displacement_sigma_mm: f64,
    pub flow: FlowConfig,
    pub threads: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            extent_mm: [32.0, 32.0],
            mesh_nodes: [33, 33],
            grid: [20, 20],
            regions: [40, 40],
            image_px: [400, 400],
            particle_count: 400 * 400 / 55,
            particle_radius_px: 3.0,
            spacing_mm: 1.0,
            margin_mm: 6.0,
            depths_mm: vec![0.5, 1.0, 1.5, 2.0],
            record_cap: None,
            indenter_radius_mm: 5.0,
            stiffness_scale: 1.7 / 2.0f64.powf(1.5),
            friction_mu: 0.45,
            displacement_gain_px_per_mm: 2.5,
            displacement_sigma_mm: 5.0,
            flow: FlowConfig::default(),
            threads: 1,
        }
    }
}

/// One planned indentation.
#[derive(Debug, Clone, PartialEq)]
pub struct IndentationPlan {
    pub id: String,
    pub center_mm: [f64; 2],
    pub depth_mm: f64,
}

/// Everything the generator produces in memory; current frames are streamed
/// through the `on_image` callback instead (they dominate memory otherwise).
pub struct SynthOutputs {
    pub dataset: Dataset,
    pub mesh: SurfaceMesh,
    pub fields: Vec<NodalForceField>,
    pub labels: Vec<ForceDistributionLabel>,
    pub reference: GrayImage,
}

impl SynthOutputs {
    /// Exact total-force readings per indentation, standing in for a
    /// force/torque sensor log.
    pub fn ft_readings(&self, resolution_n: [f64; 3]) -> Vec<FtReading> {
        self.fields
            .iter()
            .map(|f| {
                FtReading::new(
                    f.indentation_id.clone(),
                    crate::labeling::total_force_of_field(f),
                    resolution_n,
                )
                .expect("resolution validated by caller")
            })
            .collect()
    }
}

/// Row-major grid of indentation centers crossed with the depth list,
/// truncated at `record_cap`.
pub fn plan_indentations(cfg: &SynthConfig) -> Result<Vec<IndentationPlan>> {
    if !cfg.spacing_mm.is_finite() || cfg.spacing_mm <= 0.0 {
        return Err(Error::config(format!("spacing {} mm must be > 0", cfg.spacing_mm)));
    }
    if cfg.depths_mm.is_empty() {
        return Err(Error::config("depth list is empty".to_string()));
    }
    let positions = |extent: f64| -> Vec<f64> {
        let mut out = Vec::new();
        let mut x = cfg.margin_mm;
        while x <= extent - cfg.margin_mm + 1e-9 {
            out.push(x);
            x += cfg.spacing_mm;
        }
        out
    };
    let xs = positions(cfg.extent_mm[0]);
    let ys = positions(cfg.extent_mm[1]);
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::config(format!(
            "margin {} mm leaves no room for indentation centers on a {} x {} mm surface",
            cfg.margin_mm, cfg.extent_mm[0], cfg.extent_mm[1]
        )));
    }

    let mut plans = Vec::with_capacity(xs.len() * ys.len() * cfg.depths_mm.len());
    let mut counter = 0usize;
    'outer: for &y in &ys {
        for &x in &xs {
            for &depth in &cfg.depths_mm {
                plans.push(IndentationPlan {
                    id: format!("ind{counter:05}"),
                    center_mm: [x, y],
                    depth_mm: depth,
                });
                counter += 1;
                if let Some(cap) = cfg.record_cap {
                    if counter >= cap {
                        break 'outer;
                    }
                }
            }
        }
    }
    if plans.is_empty() {
        return Err(Error::config("indentation plan is empty".to_string()));
    }
    Ok(plans)
}

/// Generate the full dataset. `on_image` receives the shared reference
/// frame (id "reference") first, then each indentation's current frame in
/// plan order.
pub fn generate_dataset<F>(cfg: &SynthConfig, seed: u64, mut on_image: F) -> Result<SynthOutputs>
where
    F: FnMut(&str, &GrayImage) -> Result<()>,
{
    let extent = SurfaceExtent::new(cfg.extent_mm[0], cfg.extent_mm[1])?;
    let mesh = SurfaceMesh::regular(extent, cfg.mesh_nodes[0], cfg.mesh_nodes[1])?;
    let grid = BinGrid::new(extent, cfg.grid[0], cfg.grid[1])?;
    let regions = RegionGrid::new(cfg.regions[0], cfg.regions[1])?;
    cfg.flow.validate()?;

    let plans = plan_indentations(cfg)?;

    // One particle layout for the whole dataset; the margin reserves room
    // for the largest displacement any indentation can cause.
    let max_depth = cfg.depths_mm.iter().fold(0.0f64, |a, &b| a.max(b));
    let max_disp = cfg.displacement_gain_px_per_mm * max_depth;
    let mut particle_rng = stage_rng(seed, "synth/particles");
    let base_scene = ParticleScene::random_with_margin(
        cfg.image_px[0],
        cfg.image_px[1],
        cfg.particle_count,
        cfg.particle_radius_px,
        cfg.particle_radius_px + max_disp + 1.0,
        &mut particle_rng,
    )?;
    let reference = base_scene.render_reference()?;
    on_image("reference", &reference)?;

    let px_per_mm = [
        cfg.image_px[0] as f64 / cfg.extent_mm[0],
        cfg.image_px[1] as f64 / cfg.extent_mm[1],
    ];

    let mut fields = Vec::with_capacity(plans.len());
    let mut labels = Vec::with_capacity(plans.len());
    let mut records = Vec::with_capacity(plans.len());

    // Chunked so current frames never pile up in memory.
    let chunk_size = (cfg.threads.max(1) * 8).max(32);
    for chunk in plans.chunks(chunk_size) {
        let produced = parallel_map(chunk.to_vec(), cfg.threads, |_, plan| {
            synth_one(cfg, &mesh, &grid, regions, &base_scene, &reference, px_per_mm, &plan)
                .map(|out| (plan, out))
        });
        for item in produced {
            let (plan, (field, label, current, features)) = item?;
            on_image(&plan.id, &current)?;
            records.push(DatasetRecord {
                indentation_id: plan.id.clone(),
                features,
                label: label.flattened(),
            });
            fields.push(field);
            labels.push(label);
        }
    }

    let dataset = Dataset::new(
        regions.region_count(),
        grid.bin_count(),
        records,
        Some(regions),
        Some(grid),
    )?;

    Ok(SynthOutputs { dataset, mesh, fields, labels, reference })
}

type SynthRecord = (NodalForceField, ForceDistributionLabel, GrayImage, Vec<f64>);

#[allow(clippy::too_many_arguments)]
fn synth_one(
    cfg: &SynthConfig,
    mesh: &SurfaceMesh,
    grid: &BinGrid,
    regions: RegionGrid,
    base_scene: &ParticleScene,
    reference: &GrayImage,
    px_per_mm: [f64; 2],
    plan: &IndentationPlan,
) -> Result<SynthRecord> {
    let field = synth_indentation(
        mesh,
        &SynthIndentation {
            center_mm: plan.center_mm,
            depth_mm: plan.depth_mm,
            radius_mm: cfg.indenter_radius_mm,
            stiffness_scale: cfg.stiffness_scale,
            friction_mu: cfg.friction_mu,
        },
        plan.id.clone(),
    )?;
    let label = bin_forces(&field, mesh, grid)?;

    let mut scene = base_scene.clone();
    scene.displacement = DisplacementField::RadialSqueeze {
        center_px: [
            plan.center_mm[0] * px_per_mm[0],
            plan.center_mm[1] * px_per_mm[1],
        ],
        peak_px: cfg.displacement_gain_px_per_mm * plan.depth_mm,
        sigma_px: cfg.displacement_sigma_mm * px_per_mm[0],
    };
    let current = scene.render_current()?;
    let flow = dense_flow(reference, &current, &cfg.flow)?;
    let features = pool_features(&flow, regions)?;
    Ok((field, label, current, features.values().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SynthConfig {
        SynthConfig {
            extent_mm: [32.0, 32.0],
            mesh_nodes: [17, 17],
            grid: [4, 4],
            regions: [4, 4],
            image_px: [64, 64],
            particle_count: 64 * 64 / 55,
            spacing_mm: 8.0,
            margin_mm: 8.0,
            depths_mm: vec![1.0, 2.0],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn plan_covers_the_grid() {
        let cfg = small_config();
        let plans = plan_indentations(&cfg).unwrap();
        // centers at 8, 16, 24 in both axes, two depths
        assert_eq!(plans.len(), 9 * 2);
        assert_eq!(plans[0].center_mm, [8.0, 8.0]);
        assert_eq!(plans[0].depth_mm, 1.0);
        assert_eq!(plans.last().unwrap().center_mm, [24.0, 24.0]);
    }

    #[test]
    fn plan_respects_the_cap() {
        let cfg = SynthConfig { record_cap: Some(5), ..small_config() };
        assert_eq!(plan_indentations(&cfg).unwrap().len(), 5);
    }

    #[test]
    fn plan_rejects_empty_grids() {
        let cfg = SynthConfig { margin_mm: 20.0, ..small_config() };
        assert!(plan_indentations(&cfg).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig { record_cap: Some(6), ..small_config() };
        let a = generate_dataset(&cfg, 42, |_, _| Ok(())).unwrap();
        let b = generate_dataset(&cfg, 42, |_, _| Ok(())).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.reference, b.reference);

        // Threading must not change results.
        let threaded_cfg = SynthConfig { threads: 4, ..cfg };
        let c = generate_dataset(&threaded_cfg, 42, |_, _| Ok(())).unwrap();
        assert_eq!(a.dataset, c.dataset);
    }

    #[test]
    fn records_carry_consistent_shapes() {
        let cfg = SynthConfig { record_cap: Some(4), ..small_config() };
        let mut image_ids = Vec::new();
        let out = generate_dataset(&cfg, 7, |id, img| {
            image_ids.push(id.to_string());
            assert_eq!(img.width(), 64);
            Ok(())
        })
        .unwrap();
        assert_eq!(out.dataset.m(), 16);
        assert_eq!(out.dataset.n(), 16);
        assert_eq!(out.dataset.records().len(), 4);
        assert_eq!(image_ids.len(), 5); // reference + 4 currents
        assert_eq!(image_ids[0], "reference");
        assert_eq!(out.fields.len(), out.labels.len());

        // Features respond to the indentation: deeper presses displace more.
        let shallow = &out.dataset.records()[0];
        let deep = &out.dataset.records()[1];
        let mag_sum = |r: &DatasetRecord| -> f64 { r.features.iter().step_by(2).sum() };
        assert!(mag_sum(deep) > mag_sum(shallow));
    }

    #[test]
    fn ft_readings_match_field_totals() {
        let cfg = SynthConfig { record_cap: Some(3), ..small_config() };
        let out = generate_dataset(&cfg, 9, |_, _| Ok(())).unwrap();
        let readings = out.ft_readings([0.03, 0.03, 0.06]);
        let labels_rmse =
            crate::labeling::ground_truth_rmse(&out.labels, &readings).unwrap();
        for (axis, rmse) in labels_rmse.iter().enumerate() {
            assert!(*rmse <= 1e-12, "axis {axis}: {rmse}");
        }
    }
}
