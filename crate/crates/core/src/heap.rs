//! Simulated per-process heap.
//!
//! The heap is a flat byte image addressed by 32-bit offsets. Blocks are laid
//! out contiguously from offset [`HEAP_BASE`]:
//!
//! ```text
//!  +--------+----------------------+--------+--------+-----
//!  | header | payload (size bytes) | footer | header | ...
//!  +--------+----------------------+--------+--------+-----
//!    4 B     8-byte aligned          4 B
//! ```
//!
//! Header and footer hold the same word: the payload size (a multiple of 8)
//! with the allocated flag in bit 0. Free blocks are threaded on an explicit
//! doubly-linked list whose `next`/`prev` offsets occupy the first 8 payload
//! bytes. Allocation is first fit over the list from the head (most recently
//! freed first); freeing coalesces with both address neighbours and pushes
//! the merged block on the front of the list.

use std::collections::BTreeSet;

use thiserror::Error;

/// Payload address inside a [`HeapImage`].
pub type Addr = u32;

/// Offset of the first block header. Chosen so that payloads are 8-byte aligned.
pub const HEAP_BASE: u32 = 4;
pub const TAG_BYTES: u32 = 4;
/// Header plus footer.
pub const BLOCK_OVERHEAD: u32 = 2 * TAG_BYTES;
pub const MIN_PAYLOAD: u32 = 8;
/// Headers carry the size in 31 bits.
pub const MAX_PAYLOAD: u64 = 1 << 31;

const ALLOCATED_BIT: u32 = 1;
const NIL: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeapError {
    #[error("heap exhausted: requested {requested} bytes with extent {extent} of limit {limit}")]
    Exhausted { requested: u64, extent: u64, limit: u64 },
    #[error("invalid free of address {addr:#x}")]
    InvalidFree { addr: Addr },
    #[error("zero-size allocation")]
    ZeroSize,
    #[error("allocation size overflow")]
    Overflow,
    #[error("access of {len} bytes at {addr:#x}+{offset} is outside the block")]
    BadAccess { addr: Addr, offset: u32, len: u32 },
}

/// Snapshot returned by [`HeapImage::stats`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HeapStats {
    pub allocated_bytes: u64,
    pub extent: u64,
    pub free_block_count: u64,
    pub largest_free_payload: u64,
    pub total_free_payload: u64,
    /// `1 - largest_free_payload / total_free_payload`, or 0 with no free bytes.
    pub fragmentation: f64,
    pub peak_allocated: u64,
    pub peak_extent: u64,
    pub alloc_count: u64,
    pub free_count: u64,
    pub realloc_count: u64,
}

/// One block as seen by an address-order walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockInfo {
    pub payload: Addr,
    pub size: u32,
    pub allocated: bool,
}

#[derive(Debug, Clone)]
pub struct HeapImage {
    bytes: Vec<u8>,
    extent: u64,
    limit: u64,
    free_head: Addr,
    live: BTreeSet<Addr>,
    allocated_bytes: u64,
    peak_allocated: u64,
    peak_extent: u64,
    window_peak: u64,
    alloc_count: u64,
    free_count: u64,
    realloc_count: u64,
}

/// Rounds a request up to a legal payload size.
pub fn payload_size(requested: u64) -> u64 {
    requested.max(MIN_PAYLOAD as u64).div_ceil(8) * 8
}

impl HeapImage {
    /// An empty heap whose extent may never exceed `limit` bytes.
    pub fn new(limit: u64) -> Self {
        HeapImage {
            bytes: vec![0; HEAP_BASE as usize],
            extent: 0,
            limit,
            free_head: NIL,
            live: BTreeSet::new(),
            allocated_bytes: 0,
            peak_allocated: 0,
            peak_extent: 0,
            window_peak: 0,
            alloc_count: 0,
            free_count: 0,
            realloc_count: 0,
        }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn extent(&self) -> u64 {
        self.extent
    }

    pub fn allocated_bytes(&self) -> u64 {
        self.allocated_bytes
    }

    fn end(&self) -> u32 {
        HEAP_BASE + self.extent as u32
    }

    fn word(&self, off: u32) -> u32 {
        let o = off as usize;
        u32::from_le_bytes(self.bytes[o..o + 4].try_into().unwrap())
    }

    fn set_word(&mut self, off: u32, w: u32) {
        let o = off as usize;
        self.bytes[o..o + 4].copy_from_slice(&w.to_le_bytes());
    }

    fn tag(&self, payload: Addr) -> (u32, bool) {
        let w = self.word(payload - TAG_BYTES);
        (w & !7, w & ALLOCATED_BIT != 0)
    }

    fn write_tags(&mut self, payload: Addr, size: u32, allocated: bool) {
        let w = size | if allocated { ALLOCATED_BIT } else { 0 };
        self.set_word(payload - TAG_BYTES, w);
        self.set_word(payload + size, w);
    }

    fn next_free(&self, p: Addr) -> Addr {
        self.word(p)
    }

    fn prev_free(&self, p: Addr) -> Addr {
        self.word(p + 4)
    }

    fn unlink(&mut self, p: Addr) {
        let next = self.next_free(p);
        let prev = self.prev_free(p);
        if prev == NIL {
            self.free_head = next;
        } else {
            self.set_word(prev, next);
        }
        if next != NIL {
            self.set_word(next + 4, prev);
        }
    }

    fn push_front(&mut self, p: Addr) {
        let head = self.free_head;
        self.set_word(p, head);
        self.set_word(p + 4, NIL);
        if head != NIL {
            self.set_word(head + 4, p);
        }
        self.free_head = p;
    }

    /// Payload address of the block following `p`, if any.
    fn successor(&self, p: Addr, size: u32) -> Option<Addr> {
        let next = p + size + BLOCK_OVERHEAD;
        (next < self.end()).then_some(next)
    }

    /// Payload address of the block preceding `p`, if any.
    fn predecessor(&self, p: Addr) -> Option<Addr> {
        if p - TAG_BYTES <= HEAP_BASE {
            return None;
        }
        let footer = self.word(p - BLOCK_OVERHEAD) & !7;
        Some(p - BLOCK_OVERHEAD - footer)
    }

    fn note_allocated(&mut self, delta_up: u64) {
        self.allocated_bytes += delta_up;
        self.peak_allocated = self.peak_allocated.max(self.allocated_bytes);
        self.window_peak = self.window_peak.max(self.allocated_bytes);
    }

    /// Marks `p` allocated with at least `need` bytes, splitting off a free remainder.
    fn carve(&mut self, p: Addr, size: u32, need: u32) -> u32 {
        if size - need >= MIN_PAYLOAD + BLOCK_OVERHEAD {
            self.write_tags(p, need, true);
            let rest = p + need + BLOCK_OVERHEAD;
            self.write_tags(rest, size - need - BLOCK_OVERHEAD, false);
            self.push_front(rest);
            need
        } else {
            self.write_tags(p, size, true);
            size
        }
    }

    pub fn allocate(&mut self, size: u64) -> Result<Addr, HeapError> {
        if size == 0 {
            return Err(HeapError::ZeroSize);
        }
        let need = payload_size(size);
        if need >= MAX_PAYLOAD {
            return Err(self.exhausted(size));
        }
        let need = need as u32;

        let mut p = self.free_head;
        while p != NIL {
            let (bsize, _) = self.tag(p);
            if bsize >= need {
                self.unlink(p);
                let used = self.carve(p, bsize, need);
                self.live.insert(p);
                self.alloc_count += 1;
                self.note_allocated(used as u64);
                return Ok(p);
            }
            p = self.next_free(p);
        }

        let new_extent = self.extent + need as u64 + BLOCK_OVERHEAD as u64;
        if new_extent > self.limit {
            return Err(self.exhausted(size));
        }
        let p = self.end() + TAG_BYTES;
        self.extent = new_extent;
        self.bytes.resize((HEAP_BASE as u64 + new_extent) as usize, 0);
        self.write_tags(p, need, true);
        self.live.insert(p);
        self.alloc_count += 1;
        self.peak_extent = self.peak_extent.max(self.extent);
        self.note_allocated(need as u64);
        Ok(p)
    }

    fn exhausted(&self, requested: u64) -> HeapError {
        HeapError::Exhausted {
            requested,
            extent: self.extent,
            limit: self.limit,
        }
    }

    pub fn deallocate(&mut self, addr: Addr) -> Result<(), HeapError> {
        if !self.live.remove(&addr) {
            return Err(HeapError::InvalidFree { addr });
        }
        let (size, _) = self.tag(addr);
        self.allocated_bytes -= size as u64;
        self.free_count += 1;

        let mut start = addr;
        let mut merged = size;
        if let Some(pred) = self.predecessor(addr) {
            let (psize, palloc) = self.tag(pred);
            if !palloc {
                self.unlink(pred);
                start = pred;
                merged += psize + BLOCK_OVERHEAD;
            }
        }
        if let Some(succ) = self.successor(addr, size) {
            let (ssize, salloc) = self.tag(succ);
            if !salloc {
                self.unlink(succ);
                merged += ssize + BLOCK_OVERHEAD;
            }
        }
        self.write_tags(start, merged, false);
        self.push_front(start);
        Ok(())
    }

    pub fn reallocate(&mut self, addr: Addr, new_size: u64) -> Result<Addr, HeapError> {
        if !self.live.contains(&addr) {
            return Err(HeapError::InvalidFree { addr });
        }
        if new_size == 0 {
            return Err(HeapError::ZeroSize);
        }
        self.realloc_count += 1;
        let need = payload_size(new_size);
        let (size, _) = self.tag(addr);
        if need == size as u64 {
            return Ok(addr);
        }

        if need < size as u64 {
            let need = need as u32;
            if size - need >= MIN_PAYLOAD + BLOCK_OVERHEAD {
                self.write_tags(addr, need, true);
                let rest = addr + need + BLOCK_OVERHEAD;
                let mut rest_size = size - need - BLOCK_OVERHEAD;
                if let Some(succ) = self.successor(addr, size) {
                    let (ssize, salloc) = self.tag(succ);
                    if !salloc {
                        self.unlink(succ);
                        rest_size += ssize + BLOCK_OVERHEAD;
                    }
                }
                self.write_tags(rest, rest_size, false);
                self.push_front(rest);
                self.allocated_bytes -= (size - need) as u64;
            }
            return Ok(addr);
        }

        if need < MAX_PAYLOAD {
            if let Some(succ) = self.successor(addr, size) {
                let (ssize, salloc) = self.tag(succ);
                let combined = size + BLOCK_OVERHEAD + ssize;
                if !salloc && combined as u64 >= need {
                    self.unlink(succ);
                    let used = self.carve(addr, combined, need as u32);
                    self.note_allocated((used - size) as u64);
                    return Ok(addr);
                }
            }
        }

        let moved = self.allocate(new_size)?;
        let (src, dst) = (addr as usize, moved as usize);
        self.bytes.copy_within(src..src + size as usize, dst);
        self.deallocate(addr)?;
        Ok(moved)
    }

    pub fn allocate_zeroed(&mut self, count: u64, size: u64) -> Result<Addr, HeapError> {
        let total = count.checked_mul(size).ok_or(HeapError::Overflow)?;
        let p = self.allocate(total.max(1))?;
        let (bsize, _) = self.tag(p);
        self.bytes[p as usize..(p + bsize) as usize].fill(0);
        Ok(p)
    }

    /// Usable payload size of a live block.
    pub fn block_size(&self, addr: Addr) -> Option<u32> {
        self.live.contains(&addr).then(|| self.tag(addr).0)
    }

    fn check_access(&self, addr: Addr, offset: u32, len: u32) -> Result<(), HeapError> {
        let size = self.block_size(addr).unwrap_or(0);
        if !self.live.contains(&addr) || offset as u64 + len as u64 > size as u64 {
            return Err(HeapError::BadAccess { addr, offset, len });
        }
        Ok(())
    }

    pub fn write(&mut self, addr: Addr, offset: u32, data: &[u8]) -> Result<(), HeapError> {
        self.check_access(addr, offset, data.len() as u32)?;
        let s = (addr + offset) as usize;
        self.bytes[s..s + data.len()].copy_from_slice(data);
        Ok(())
    }

    pub fn read(&self, addr: Addr, offset: u32, len: u32) -> Result<&[u8], HeapError> {
        self.check_access(addr, offset, len)?;
        let s = (addr + offset) as usize;
        Ok(&self.bytes[s..s + len as usize])
    }

    /// Starts a new transient-peak window at the current allocation level.
    pub fn begin_window(&mut self) {
        self.window_peak = self.allocated_bytes;
    }

    /// Highest `allocated_bytes` seen since [`begin_window`](Self::begin_window).
    pub fn window_peak(&self) -> u64 {
        self.window_peak
    }

    pub fn free_list(&self) -> Vec<Addr> {
        let mut out = Vec::new();
        let mut p = self.free_head;
        while p != NIL {
            out.push(p);
            p = self.next_free(p);
        }
        out
    }

    pub fn blocks(&self) -> Vec<BlockInfo> {
        let mut out = Vec::new();
        let mut p = HEAP_BASE + TAG_BYTES;
        while p < self.end() {
            let (size, allocated) = self.tag(p);
            out.push(BlockInfo {
                payload: p,
                size,
                allocated,
            });
            p += size + BLOCK_OVERHEAD;
        }
        out
    }

    pub fn stats(&self) -> HeapStats {
        let mut count = 0;
        let mut largest = 0u64;
        let mut total = 0u64;
        let mut p = self.free_head;
        while p != NIL {
            let s = self.tag(p).0 as u64;
            count += 1;
            largest = largest.max(s);
            total += s;
            p = self.next_free(p);
        }
        let fragmentation = if total == 0 {
            0.0
        } else {
            1.0 - largest as f64 / total as f64
        };
        HeapStats {
            allocated_bytes: self.allocated_bytes,
            extent: self.extent,
            free_block_count: count,
            largest_free_payload: largest,
            total_free_payload: total,
            fragmentation,
            peak_allocated: self.peak_allocated,
            peak_extent: self.peak_extent,
            alloc_count: self.alloc_count,
            free_count: self.free_count,
            realloc_count: self.realloc_count,
        }
    }

    /// Verifies the structural invariants of the image.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut p = HEAP_BASE + TAG_BYTES;
        let mut spanned = 0u64;
        let mut prev_free = false;
        let mut free_blocks = BTreeSet::new();
        let mut live_seen = BTreeSet::new();
        let mut allocated = 0u64;
        while p < self.end() {
            if !p.is_multiple_of(8) {
                return Err(format!("payload {p:#x} not 8-byte aligned"));
            }
            let head = self.word(p - TAG_BYTES);
            let size = head & !7;
            if size < MIN_PAYLOAD || !size.is_multiple_of(8) {
                return Err(format!("block {p:#x} has bad size {size}"));
            }
            if p + size + TAG_BYTES > self.end() {
                return Err(format!("block {p:#x} overruns the extent"));
            }
            let foot = self.word(p + size);
            if head != foot {
                return Err(format!("block {p:#x} header {head:#x} != footer {foot:#x}"));
            }
            let is_free = head & ALLOCATED_BIT == 0;
            if is_free {
                if prev_free {
                    return Err(format!("adjacent free blocks at {p:#x}"));
                }
                free_blocks.insert(p);
            } else {
                live_seen.insert(p);
                allocated += size as u64;
            }
            prev_free = is_free;
            spanned += (size + BLOCK_OVERHEAD) as u64;
            p += size + BLOCK_OVERHEAD;
        }
        if spanned != self.extent {
            return Err(format!("blocks span {spanned} bytes, extent is {}", self.extent));
        }
        if live_seen != self.live {
            return Err("allocated blocks disagree with the live set".into());
        }
        if allocated != self.allocated_bytes {
            return Err(format!(
                "allocated bytes {allocated} != counter {}",
                self.allocated_bytes
            ));
        }
        let mut listed = BTreeSet::new();
        let mut prev = NIL;
        let mut q = self.free_head;
        while q != NIL {
            if !free_blocks.contains(&q) {
                return Err(format!("free list entry {q:#x} is not a free block"));
            }
            if !listed.insert(q) {
                return Err(format!("free list visits {q:#x} twice"));
            }
            if self.prev_free(q) != prev {
                return Err(format!("free list back-link broken at {q:#x}"));
            }
            prev = q;
            q = self.next_free(q);
        }
        if listed != free_blocks {
            return Err("free blocks missing from the free list".into());
        }
        Ok(())
    }
}
