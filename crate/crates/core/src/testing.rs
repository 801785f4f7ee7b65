//! Independent reference models for the test suites.
//!
//! Nothing here shares code with the models it checks. The reference heap
//! keeps blocks in a plain vector instead of a byte image, and the orbit
//! conversion goes through the true anomaly instead of the eccentric one.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::dynamics::{KeplerElements, RelativeElements, Vec3};
use crate::heap::{Addr, HeapError, HeapStats};

const BASE: u64 = 4;
const TAG: u64 = 4;
const OVERHEAD: u64 = 8;
const MIN: u64 = 8;
const SPLIT_MIN: u64 = MIN + OVERHEAD;
const MAX: u64 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefBlock {
    pub addr: u64,
    pub size: u64,
    pub allocated: bool,
}

/// Brute-force first-fit allocator with boundary-tag geometry, LIFO free
/// list and immediate coalescing, kept as an address-ordered block vector.
#[derive(Debug, Clone)]
pub struct ReferenceHeap {
    pub limit: u64,
    pub blocks: Vec<RefBlock>,
    /// Free block addresses, head first.
    pub free_order: Vec<u64>,
    /// Bytes whose contents are defined, per live block.
    pub contents: BTreeMap<u64, Vec<u8>>,
    allocated: u64,
    peak_allocated: u64,
    peak_extent: u64,
    allocs: u64,
    frees: u64,
    reallocs: u64,
}

fn round(n: u64) -> u64 {
    n.max(MIN).div_ceil(8) * 8
}

impl ReferenceHeap {
    pub fn new(limit: u64) -> Self {
        ReferenceHeap {
            limit,
            blocks: Vec::new(),
            free_order: Vec::new(),
            contents: BTreeMap::new(),
            allocated: 0,
            peak_allocated: 0,
            peak_extent: 0,
            allocs: 0,
            frees: 0,
            reallocs: 0,
        }
    }

    pub fn extent(&self) -> u64 {
        self.blocks.iter().map(|b| b.size + OVERHEAD).sum()
    }

    fn index(&self, addr: u64) -> Option<usize> {
        self.blocks.iter().position(|b| b.addr == addr)
    }

    fn live(&self, addr: u64) -> Option<usize> {
        self.index(addr).filter(|&i| self.blocks[i].allocated)
    }

    fn forget_free(&mut self, addr: u64) {
        self.free_order.retain(|&a| a != addr);
    }

    fn grow(&mut self, by: u64) {
        self.allocated += by;
        self.peak_allocated = self.peak_allocated.max(self.allocated);
    }

    fn exhausted(&self, requested: u64) -> HeapError {
        HeapError::Exhausted {
            requested,
            extent: self.extent(),
            limit: self.limit,
        }
    }

    /// Marks block `i` allocated with `need` bytes, splitting off a free tail
    /// when it is big enough to hold a block. Returns the bytes taken.
    fn take(&mut self, i: usize, need: u64) -> u64 {
        let size = self.blocks[i].size;
        self.blocks[i].allocated = true;
        if size - need >= SPLIT_MIN {
            self.blocks[i].size = need;
            let tail = RefBlock {
                addr: self.blocks[i].addr + need + OVERHEAD,
                size: size - need - OVERHEAD,
                allocated: false,
            };
            self.blocks.insert(i + 1, tail);
            self.free_order.insert(0, tail.addr);
            need
        } else {
            size
        }
    }

    pub fn allocate(&mut self, size: u64) -> Result<Addr, HeapError> {
        if size == 0 {
            return Err(HeapError::ZeroSize);
        }
        let need = round(size);
        if need >= MAX {
            return Err(self.exhausted(size));
        }
        let fit = self
            .free_order
            .iter()
            .copied()
            .find(|&a| self.blocks[self.index(a).unwrap()].size >= need);
        let addr = match fit {
            Some(a) => {
                self.forget_free(a);
                let i = self.index(a).unwrap();
                let used = self.take(i, need);
                self.grow(used);
                a
            }
            None => {
                let extent = self.extent();
                if extent + need + OVERHEAD > self.limit {
                    return Err(self.exhausted(size));
                }
                let a = BASE + extent + TAG;
                self.blocks.push(RefBlock {
                    addr: a,
                    size: need,
                    allocated: true,
                });
                self.peak_extent = self.peak_extent.max(extent + need + OVERHEAD);
                self.grow(need);
                a
            }
        };
        self.allocs += 1;
        self.contents.insert(addr, Vec::new());
        Ok(addr as Addr)
    }

    pub fn deallocate(&mut self, addr: Addr) -> Result<(), HeapError> {
        let a = addr as u64;
        let Some(mut i) = self.live(a) else {
            return Err(HeapError::InvalidFree { addr });
        };
        self.contents.remove(&a);
        self.allocated -= self.blocks[i].size;
        self.frees += 1;
        self.blocks[i].allocated = false;
        if i + 1 < self.blocks.len() && !self.blocks[i + 1].allocated {
            let next = self.blocks.remove(i + 1);
            self.forget_free(next.addr);
            self.blocks[i].size += next.size + OVERHEAD;
        }
        if i > 0 && !self.blocks[i - 1].allocated {
            let cur = self.blocks.remove(i);
            i -= 1;
            self.forget_free(self.blocks[i].addr);
            self.blocks[i].size += cur.size + OVERHEAD;
        }
        self.free_order.insert(0, self.blocks[i].addr);
        Ok(())
    }

    pub fn reallocate(&mut self, addr: Addr, new_size: u64) -> Result<Addr, HeapError> {
        let a = addr as u64;
        let Some(i) = self.live(a) else {
            return Err(HeapError::InvalidFree { addr });
        };
        if new_size == 0 {
            return Err(HeapError::ZeroSize);
        }
        self.reallocs += 1;
        let need = round(new_size);
        let size = self.blocks[i].size;
        if need == size {
            return Ok(addr);
        }
        if need < size {
            if size - need >= SPLIT_MIN {
                self.blocks[i].size = need;
                let mut tail = RefBlock {
                    addr: a + need + OVERHEAD,
                    size: size - need - OVERHEAD,
                    allocated: false,
                };
                if i + 1 < self.blocks.len() && !self.blocks[i + 1].allocated {
                    let next = self.blocks.remove(i + 1);
                    self.forget_free(next.addr);
                    tail.size += next.size + OVERHEAD;
                }
                self.blocks.insert(i + 1, tail);
                self.free_order.insert(0, tail.addr);
                self.allocated -= size - need;
                if let Some(c) = self.contents.get_mut(&a) {
                    c.truncate(need as usize);
                }
            }
            return Ok(addr);
        }
        if need < MAX && i + 1 < self.blocks.len() && !self.blocks[i + 1].allocated {
            let next = self.blocks[i + 1];
            if size + OVERHEAD + next.size >= need {
                self.blocks.remove(i + 1);
                self.forget_free(next.addr);
                self.blocks[i].size = size + OVERHEAD + next.size;
                let used = self.take(i, need);
                self.grow(used - size);
                return Ok(addr);
            }
        }
        let moved = self.allocate(new_size)?;
        let data = self.contents.get(&a).cloned().unwrap_or_default();
        self.deallocate(addr)?;
        self.contents.insert(moved as u64, data);
        Ok(moved)
    }

    /// Records that `data` was written at `offset` of the live block `addr`.
    /// Only a contiguous prefix is tracked.
    pub fn note_write(&mut self, addr: Addr, offset: usize, data: &[u8]) {
        if let Some(c) = self.contents.get_mut(&(addr as u64)) {
            if offset <= c.len() {
                c.truncate(offset);
                c.extend_from_slice(data);
            }
        }
    }

    pub fn stats(&self) -> HeapStats {
        let free: Vec<u64> = self.blocks.iter().filter(|b| !b.allocated).map(|b| b.size).collect();
        let total: u64 = free.iter().sum();
        let largest = free.iter().copied().max().unwrap_or(0);
        HeapStats {
            allocated_bytes: self.allocated,
            extent: self.extent(),
            free_block_count: free.len() as u64,
            largest_free_payload: largest,
            total_free_payload: total,
            fragmentation: if total == 0 {
                0.0
            } else {
                1.0 - largest as f64 / total as f64
            },
            peak_allocated: self.peak_allocated,
            peak_extent: self.peak_extent,
            alloc_count: self.allocs,
            free_count: self.frees,
            realloc_count: self.reallocs,
        }
    }
}

/// Kepler elements to inertial position and velocity through the true anomaly.
pub fn kepler_to_cartesian(el: &KeplerElements, mu: f64) -> (Vec3, Vec3) {
    // Kepler's equation by bisection: slow but free of starting-guess issues.
    let m = el.mean_anomaly.rem_euclid(TAU);
    let (mut lo, mut hi) = (0.0, TAU);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid - el.e * mid.sin() < m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ecc = 0.5 * (lo + hi);
    let nu = 2.0 * ((1.0 + el.e).sqrt() * (ecc / 2.0).sin()).atan2((1.0 - el.e).sqrt() * (ecc / 2.0).cos());
    let p = el.a * (1.0 - el.e * el.e);
    let r = p / (1.0 + el.e * nu.cos());
    let u = el.argp + nu;
    let (su, cu) = u.sin_cos();
    let (so, co) = el.raan.sin_cos();
    let (si, ci) = el.i.sin_cos();
    let r_hat = Vec3::new(co * cu - so * su * ci, so * cu + co * su * ci, su * si);
    let t_hat = Vec3::new(-co * su - so * cu * ci, -so * su + co * cu * ci, cu * si);
    let h = (mu * p).sqrt();
    let vr = mu / h * el.e * nu.sin();
    let vt = h / r;
    (r_hat * r, r_hat * vr + t_hat * vt)
}

/// Elements of the deputy whose relative elements with respect to `chief` are `roe`.
pub fn deputy_elements(chief: &KeplerElements, roe: &RelativeElements) -> KeplerElements {
    let (ex, ey) = (
        chief.e * chief.argp.cos() + roe.dex,
        chief.e * chief.argp.sin() + roe.dey,
    );
    let draan = roe.diy / chief.i.sin();
    let u = chief.argp + chief.mean_anomaly + roe.dlambda - draan * chief.i.cos();
    let e = ex.hypot(ey);
    let argp = if e > 0.0 { ey.atan2(ex) } else { 0.0 };
    KeplerElements {
        a: chief.a * (1.0 + roe.da),
        e,
        i: chief.i + roe.dix,
        raan: chief.raan + draan,
        argp,
        mean_anomaly: u - argp,
    }
}

/// Drives `HeapImage` and [`ReferenceHeap`] through the same random
/// operation sequence and reports the first disagreement or broken invariant.
pub fn compare_heaps(seed: u64, ops: usize, limit: u64) -> Result<(), String> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::heap::HeapImage;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut real = HeapImage::new(limit);
    let mut reference = ReferenceHeap::new(limit);
    let mut live: Vec<Addr> = Vec::new();
    let size = |rng: &mut ChaCha8Rng| -> u64 {
        match rng.random_range(0..100) {
            0..60 => rng.random_range(1..64),
            60..95 => rng.random_range(64..2048),
            _ => rng.random_range(2048..65536),
        }
    };

    for step in 0..ops {
        // Lean towards frees once many blocks are live, keeping the walk cheap.
        let op = rng.random_range(0..100) + if live.len() > 150 { 20 } else { 0 };
        let op = if op >= 100 { rng.random_range(45..75) } else { op };
        let (what, got, want) = if op < 45 || live.is_empty() {
            let n = size(&mut rng);
            (format!("alloc({n})"), real.allocate(n), reference.allocate(n))
        } else if op < 75 {
            let a = live.swap_remove(rng.random_range(0..live.len()));
            (
                format!("free({a})"),
                real.deallocate(a).map(|_| a),
                reference.deallocate(a).map(|_| a),
            )
        } else if op < 95 {
            let k = rng.random_range(0..live.len());
            let a = live[k];
            let n = size(&mut rng);
            let kept = reference.contents.get(&(a as u64)).cloned().unwrap_or_default();
            let got = real.reallocate(a, n);
            let want = reference.reallocate(a, n);
            if let Ok(moved) = got {
                live[k] = moved;
                let keep = kept.len().min(crate::heap::payload_size(n) as usize);
                let now = real.read(moved, 0, keep as u32).map_err(|e| e.to_string())?;
                if now != &kept[..keep] {
                    return Err(format!("step {step}: realloc({a}, {n}) lost contents"));
                }
            }
            (format!("realloc({a}, {n})"), got, want)
        } else {
            let a = if rng.random_bool(0.5) {
                rng.random_range(0..(real.extent() as u32 + 16))
            } else {
                live[rng.random_range(0..live.len())] + 8
            };
            if live.contains(&a) {
                continue;
            }
            (
                format!("free({a}) [invalid]"),
                real.deallocate(a).map(|_| a),
                reference.deallocate(a).map(|_| a),
            )
        };
        if got != want {
            return Err(format!("step {step}: {what}: heap gave {got:?}, reference {want:?}"));
        }
        if let Ok(a) = got {
            if what.starts_with("alloc") {
                live.push(a);
            }
            if !what.starts_with("free") {
                let len = real.block_size(a).unwrap().min(64) as usize;
                let data: Vec<u8> = (0..len).map(|i| (step as u8).wrapping_add(i as u8)).collect();
                real.write(a, 0, &data).map_err(|e| e.to_string())?;
                reference.note_write(a, 0, &data);
            }
        }
        if real.stats() != reference.stats() {
            return Err(format!(
                "step {step}: {what}: stats {:?} != {:?}",
                real.stats(),
                reference.stats()
            ));
        }
        let blocks: Vec<RefBlock> = real
            .blocks()
            .iter()
            .map(|b| RefBlock {
                addr: b.payload as u64,
                size: b.size as u64,
                allocated: b.allocated,
            })
            .collect();
        if blocks != reference.blocks {
            return Err(format!("step {step}: {what}: block layout differs"));
        }
        let free: Vec<u64> = real.free_list().iter().map(|&a| a as u64).collect();
        if free != reference.free_order {
            return Err(format!("step {step}: {what}: free list order differs"));
        }
        real.check_invariants()
            .map_err(|e| format!("step {step}: {what}: {e}"))?;
    }
    Ok(())
}
