//! Per-channel color transfer by optimal transport between 256-bin
//! intensity histograms.

use ndarray::Array2;
use ot_core::{exact_ot, ipot, CostMatrix, Histogram, IpotConfig, TransportPlan};

use crate::error::{HarnessError, Result};
use crate::ppm::PpmImage;

pub const BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransferSolver {
    Exact,
    Ipot(IpotConfig),
}

impl TransferSolver {
    fn plan(&self, src: &Histogram, dst: &Histogram, cost: &CostMatrix) -> Result<TransportPlan> {
        let report = match self {
            TransferSolver::Exact => exact_ot(src, dst, cost)?,
            TransferSolver::Ipot(cfg) => ipot(src, dst, cost, cfg)?,
        };
        Ok(report.plan)
    }
}

/// `(i − j)²` on bin indices.
pub fn bin_cost() -> CostMatrix {
    CostMatrix::new(Array2::from_shape_fn((BINS, BINS), |(i, j)| {
        let d = i as f64 - j as f64;
        d * d
    }))
    .expect("finite costs")
}

pub fn channel_histogram(values: impl Iterator<Item = u8>) -> Result<Histogram> {
    let mut counts = [0.0; BINS];
    for v in values {
        counts[v as usize] += 1.0;
    }
    Histogram::from_weights(&counts).map_err(|_| HarnessError::EmptyImage)
}

/// Conditional-mean map `i ↦ round(Σ_j Γ_ij j / Σ_j Γ_ij)`.
///
/// Bins without source mass take the value of the nearest populated bin,
/// the lower one on ties. The mean is snapped to a 1e-6 grid before rounding
/// half up, so solvers that agree to that precision give the same map even
/// when a bin splits evenly between two targets.
pub fn barycentric_map(plan: &TransportPlan) -> [u8; BINS] {
    let g = plan.view();
    let mut means = [None; BINS];
    for (i, row) in g.rows().into_iter().enumerate() {
        let mass: f64 = row.sum();
        if mass > 0.0 {
            let m: f64 = row.iter().enumerate().map(|(j, &v)| v * j as f64).sum::<f64>() / mass;
            let snapped = (m * 1e6).round() / 1e6;
            means[i] = Some((snapped + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
    }
    let populated: Vec<usize> = (0..BINS).filter(|&i| means[i].is_some()).collect();
    let mut map = [0u8; BINS];
    for (i, slot) in map.iter_mut().enumerate() {
        let nearest = populated
            .iter()
            .copied()
            .min_by_key(|&p| (p.abs_diff(i), p))
            .expect("at least one populated bin");
        *slot = means[nearest].expect("populated");
    }
    map
}

pub fn channel_map(src: &Histogram, dst: &Histogram, solver: &TransferSolver) -> Result<[u8; BINS]> {
    let plan = solver.plan(src, dst, &bin_cost())?;
    Ok(barycentric_map(&plan))
}

/// Maps for R, G and B.
pub fn transfer_maps(src: &PpmImage, reference: &PpmImage, solver: &TransferSolver) -> Result<[[u8; BINS]; 3]> {
    let mut maps = [[0u8; BINS]; 3];
    for (c, map) in maps.iter_mut().enumerate() {
        let hs = channel_histogram(src.channel(c))?;
        let hr = channel_histogram(reference.channel(c))?;
        *map = channel_map(&hs, &hr, solver)?;
    }
    Ok(maps)
}

/// Imposes the per-channel palette of `reference` on `src`.
pub fn color_transfer(src: &PpmImage, reference: &PpmImage, solver: &TransferSolver) -> Result<PpmImage> {
    let maps = transfer_maps(src, reference, solver)?;
    let pixels = src
        .pixels()
        .iter()
        .map(|p| [maps[0][p[0] as usize], maps[1][p[1] as usize], maps[2][p[2] as usize]])
        .collect();
    PpmImage::new(src.width(), src.height(), pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(rgb: [u8; 3], n: usize) -> PpmImage {
        PpmImage::new(n, n, vec![rgb; n * n]).unwrap()
    }

    #[test]
    fn black_to_white() {
        let out = color_transfer(&flat([0, 0, 0], 4), &flat([255, 255, 255], 3), &TransferSolver::Exact).unwrap();
        assert!(out.pixels().iter().all(|&p| p == [255, 255, 255]));
        assert_eq!((out.width(), out.height()), (4, 4));
    }

    #[test]
    fn even_split_rounds_half_up() {
        let mut g = Array2::zeros((BINS, BINS));
        g[[10, 20]] = 0.5;
        g[[10, 21]] = 0.5;
        let map = barycentric_map(&TransportPlan::new(g).unwrap());
        assert_eq!(map[10], 21);
        // unpopulated bins copy the only populated one
        assert_eq!(map[0], 21);
        assert_eq!(map[255], 21);
    }

    #[test]
    fn nearest_populated_bin_prefers_lower_on_ties() {
        let mut g = Array2::zeros((BINS, BINS));
        g[[10, 100]] = 0.5;
        g[[20, 200]] = 0.5;
        let map = barycentric_map(&TransportPlan::new(g).unwrap());
        assert_eq!(map[15], 100);
        assert_eq!(map[16], 200);
        assert_eq!(map[14], 100);
    }
}
