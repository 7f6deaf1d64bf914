//! Shared pipeline stages between subcommands.

use num_complex::Complex64;
use ruelle_core::aniso_space::{h_matrix, BlockScaling, HMatrix, RCalibration};
use ruelle_core::transfer_op::{assemble_matrix, TransferMatrix};

use crate::config::Resolved;

pub struct Stage {
    pub mx: TransferMatrix,
    pub scaling: BlockScaling,
    pub calibration: Option<RCalibration>,
    pub h: HMatrix,
}

/// Assembles the matrix at one truncation size and builds the block scaling,
/// calibrating R unless the config pins it.
pub fn build_stage(res: &Resolved, k_cut: usize) -> ruelle_core::Result<Stage> {
    let mx = assemble_matrix(&res.map, res.psi.as_ref(), k_cut)?;
    let (scaling, calibration) = match res.config.r_weight {
        Some(r) => (
            BlockScaling::build(&res.m_seq, res.config.theta, res.map.lambda(), k_cut, r)?,
            None,
        ),
        None => {
            let (s, cal) =
                BlockScaling::calibrated(&mx, &res.m_seq, res.config.theta, res.map.lambda())?;
            (s, Some(cal))
        }
    };
    let h = h_matrix(&mx, &scaling)?;
    Ok(Stage {
        mx,
        scaling,
        calibration,
        h,
    })
}

/// Deterministic points in the unit disk for spot checks.
pub fn unit_disk_points(count: usize) -> Vec<Complex64> {
    let mut state = 0x243f6a8885a308d3u64;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..count)
        .map(|_| {
            let r = next().sqrt();
            let t = next() * std::f64::consts::TAU;
            Complex64::from_polar(r, t)
        })
        .collect()
}
