//! Synthetic constraint-matrix workload for memory-exhaustion studies.
//!
//! The matrix is diagonal. Stored densely it needs `n² · 8` bytes; stored as
//! coordinate triplets (row, column, value) it needs three arrays of `n`
//! eight-byte entries.

use serde::{Deserialize, Serialize};

use crate::heap::{payload_size, HeapError, BLOCK_OVERHEAD};
use crate::host::ProcessContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixWorkload {
    pub representation: Representation,
    pub n: u64,
}

impl MatrixWorkload {
    /// Sizes of the buffers the workload allocates, bytes.
    pub fn buffers(&self) -> Vec<u64> {
        match self.representation {
            Representation::Dense => vec![self.n * self.n * 8],
            Representation::Sparse => vec![self.n * 8; 3],
        }
    }

    /// Data bytes, without allocator overhead.
    pub fn footprint(&self) -> u64 {
        self.buffers().iter().sum()
    }

    /// Heap extent the workload adds to an empty heap.
    pub fn extent(&self) -> u64 {
        self.buffers()
            .iter()
            .map(|&b| payload_size(b) + BLOCK_OVERHEAD as u64)
            .sum()
    }

    /// Allocates the matrix, writes its diagonal, and frees it again.
    /// Returns the bytes that were live at the peak.
    pub fn run_matrix_workload(&self, ctx: &mut ProcessContext<'_>) -> Result<u64, HeapError> {
        let mut addrs = Vec::new();
        for size in self.buffers() {
            addrs.push(ctx.alloc(size)?);
        }
        let peak = ctx.heap_stats().allocated_bytes;
        let one = 1.0f64.to_le_bytes();
        for i in 0..self.n {
            match self.representation {
                Representation::Dense => {
                    let off = u32::try_from((i * self.n + i) * 8).map_err(|_| HeapError::Overflow)?;
                    ctx.write(addrs[0], off, &one)?;
                }
                Representation::Sparse => {
                    let off = (i * 8) as u32;
                    ctx.write(addrs[0], off, &i.to_le_bytes())?;
                    ctx.write(addrs[1], off, &i.to_le_bytes())?;
                    ctx.write(addrs[2], off, &one)?;
                }
            }
        }
        for a in addrs.into_iter().rev() {
            ctx.free(a)?;
        }
        Ok(peak)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn footprints() {
        let dense = MatrixWorkload {
            representation: Representation::Dense,
            n: 3000,
        };
        assert_eq!(dense.footprint(), 72_000_000);
        let sparse = MatrixWorkload {
            representation: Representation::Sparse,
            n: 3000,
        };
        assert_eq!(sparse.footprint(), 72_000);
        assert_eq!(sparse.extent(), 72_000 + 3 * 8);
    }
}
