//! COCO-compatible uncompressed RLE: column-major runs, starting with a run of zeros.

use serde::{Deserialize, Serialize};

use super::TensorError;
use crate::grid::Mask;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    /// `[height, width]`
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl RleMask {
    /// Number of foreground cells (sum of odd-position runs).
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| c as u64)
            .sum()
    }
}

pub fn encode_rle(mask: &Mask) -> Result<RleMask, TensorError> {
    let (h, w) = mask.dims();
    let (hu, wu) = (u32::try_from(h), u32::try_from(w));
    let (Ok(hu), Ok(wu)) = (hu, wu) else {
        return Err(TensorError::CountsOverflow);
    };
    if (h as u64) * (w as u64) > u32::MAX as u64 {
        return Err(TensorError::CountsOverflow);
    }
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for c in 0..w {
        for r in 0..h {
            let v = mask.get(r, c);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    Ok(RleMask {
        size: [hu, wu],
        counts,
    })
}

/// Decodes; the runs must cover exactly `height * width` cells.
pub fn decode_rle(rle: &RleMask) -> Result<Mask, TensorError> {
    let (h, w) = (rle.size[0] as usize, rle.size[1] as usize);
    let total: u64 = rle.counts.iter().map(|&c| c as u64).sum();
    if total != (h as u64) * (w as u64) {
        return Err(TensorError::CountsOverflow);
    }
    let mut mask = Mask::empty(h, w);
    let mut idx = 0usize;
    let mut value = false;
    for &run in &rle.counts {
        for k in idx..idx + run as usize {
            if value {
                mask.set(k % h, k / h, true);
            }
        }
        idx += run as usize;
        value = !value;
    }
    Ok(mask)
}
