//! Descriptor-driven gather/scatter between array-of-structs records and
//! 64-byte-aligned per-field buffers.
//!
//! Records are plain bytes. A source is either one contiguous run of records
//! or a pointer list, modelled as `Option<&[u8]>` per record (`None` is a null
//! pointer). Buffers come from a per-thread arena that only ever grows.

use std::cell::RefCell;
use std::sync::Arc;

use thiserror::Error;

pub const ALIGN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dir {
    /// Gathered, never scattered.
    In,
    /// Allocated only; scattered back.
    Out,
    InOut,
}

impl Dir {
    pub fn gathered(self) -> bool {
        matches!(self, Dir::In | Dir::InOut)
    }

    pub fn scattered(self) -> bool {
        matches!(self, Dir::Out | Dir::InOut)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldView {
    pub offset: usize,
    pub size: usize,
    pub dir: Dir,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("descriptor has no fields")]
    NoFields,
    #[error("field {field} spans bytes {offset}..{end} of a {record_size}-byte record", end = offset + size)]
    ExtentOutOfRange {
        field: usize,
        offset: usize,
        size: usize,
        record_size: usize,
    },
    #[error("fields {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("field {0} has size zero")]
    EmptyField(usize),
    #[error("null pointer at index {0}")]
    NullPointer(usize),
    #[error("source holds {got} records, descriptor needs {needed}")]
    SourceTooShort { needed: usize, got: usize },
    #[error("record {index} is {got} bytes, expected {expected}")]
    RecordSize { index: usize, got: usize, expected: usize },
    #[error("buffers were built for a different descriptor")]
    DescriptorMismatch,
}

/// What to narrow a record to: field extents with directions, and a count.
/// The field list is shared, so per-count copies are cheap.
#[derive(Clone, Debug, Eq)]
pub struct ViewDescriptor {
    record_size: usize,
    fields: Arc<[FieldView]>,
    count: usize,
}

impl PartialEq for ViewDescriptor {
    fn eq(&self, o: &Self) -> bool {
        self.record_size == o.record_size
            && self.count == o.count
            && (Arc::ptr_eq(&self.fields, &o.fields) || self.fields == o.fields)
    }
}

impl ViewDescriptor {
    pub fn new(record_size: usize, fields: Vec<FieldView>, count: usize) -> Result<Self, LayoutError> {
        if fields.is_empty() {
            return Err(LayoutError::NoFields);
        }
        for (i, f) in fields.iter().enumerate() {
            if f.size == 0 {
                return Err(LayoutError::EmptyField(i));
            }
            if f.offset.checked_add(f.size).is_none_or(|e| e > record_size) {
                return Err(LayoutError::ExtentOutOfRange {
                    field: i,
                    offset: f.offset,
                    size: f.size,
                    record_size,
                });
            }
        }
        let mut order: Vec<usize> = (0..fields.len()).collect();
        order.sort_by_key(|&i| fields[i].offset);
        for w in order.windows(2) {
            let (a, b) = (&fields[w[0]], &fields[w[1]]);
            if a.offset + a.size > b.offset {
                return Err(LayoutError::Overlap(w[0].min(w[1]), w[0].max(w[1])));
            }
        }
        Ok(ViewDescriptor {
            record_size,
            fields: fields.into(),
            count,
        })
    }

    pub fn record_size(&self) -> usize {
        self.record_size
    }

    pub fn fields(&self) -> &[FieldView] {
        &self.fields
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Same fields over a different number of records.
    pub fn with_count(&self, count: usize) -> Self {
        ViewDescriptor { count, ..self.clone() }
    }

    /// Bytes moved by one gather (In and InOut fields over all records).
    pub fn gather_bytes(&self) -> usize {
        self.fields
            .iter()
            .filter(|f| f.dir.gathered())
            .map(|f| f.size)
            .sum::<usize>()
            * self.count
    }

    /// Bytes moved by one scatter.
    pub fn scatter_bytes(&self) -> usize {
        self.fields
            .iter()
            .filter(|f| f.dir.scattered())
            .map(|f| f.size)
            .sum::<usize>()
            * self.count
    }
}

#[derive(Clone, Copy)]
#[repr(C, align(64))]
struct Line([u8; ALIGN]);

const ZERO_LINE: Line = Line([0; ALIGN]);

/// Retired buffer storage of this thread, reused by later views.
#[derive(Default)]
pub struct Arena {
    free: Vec<Vec<Line>>,
    high_water: usize,
}

thread_local! {
    static ARENA: RefCell<Arena> = RefCell::new(Arena::default());
}

impl Arena {
    fn take(&mut self, lines: usize) -> Vec<Line> {
        self.high_water = self.high_water.max(lines);
        let pick = self
            .free
            .iter()
            .position(|b| b.capacity() >= lines)
            .or_else(|| self.free.len().checked_sub(1));
        let mut block = match pick {
            Some(i) => self.free.swap_remove(i),
            None => Vec::new(),
        };
        // Reused lines keep stale bytes; only Out buffers can observe them.
        if block.len() >= lines {
            block.truncate(lines);
        } else {
            block.resize(lines, ZERO_LINE);
        }
        block
    }

    fn give(&mut self, block: Vec<Line>) {
        if block.capacity() > 0 {
            self.free.push(block);
            self.free.sort_by_key(Vec::capacity);
        }
    }

    /// Largest block, in bytes, ever handed out on this thread.
    pub fn high_water_bytes() -> usize {
        ARENA.with(|a| a.borrow().high_water * ALIGN)
    }

    /// Bytes held for reuse on this thread.
    pub fn retained_bytes() -> usize {
        ARENA.with(|a| a.borrow().free.iter().map(|b| b.capacity() * ALIGN).sum())
    }
}

/// One 64-byte-aligned region per descriptor field, each `count * size` bytes.
pub struct SoABuffers {
    storage: Vec<Line>,
    /// Byte offset and length of each field region inside `storage`.
    regions: Vec<(usize, usize)>,
    desc: ViewDescriptor,
}

impl Drop for SoABuffers {
    fn drop(&mut self) {
        let block = std::mem::take(&mut self.storage);
        // During thread teardown the arena may already be gone.
        let _ = ARENA.try_with(|a| a.borrow_mut().give(block));
    }
}

impl std::fmt::Debug for SoABuffers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SoABuffers")
            .field("regions", &self.regions)
            .field("desc", &self.desc)
            .finish()
    }
}

impl SoABuffers {
    /// Arena-backed buffers for `desc` with unspecified contents.
    pub fn allocate(desc: &ViewDescriptor) -> Self {
        let mut regions = Vec::with_capacity(desc.fields.len());
        let mut at = 0;
        for f in desc.fields.iter() {
            let len = f.size * desc.count;
            regions.push((at, len));
            at += len.div_ceil(ALIGN) * ALIGN;
        }
        let storage = ARENA.with(|a| a.borrow_mut().take(at / ALIGN));
        SoABuffers {
            storage,
            regions,
            desc: desc.clone(),
        }
    }

    pub fn descriptor(&self) -> &ViewDescriptor {
        &self.desc
    }

    fn bytes(&self) -> &[u8] {
        // SAFETY: `Line` is 64 plain bytes with no padding.
        unsafe { std::slice::from_raw_parts(self.storage.as_ptr().cast::<u8>(), self.storage.len() * ALIGN) }
    }

    fn bytes_mut(&mut self) -> &mut [u8] {
        // SAFETY: as in `bytes`; the borrow is unique.
        unsafe { std::slice::from_raw_parts_mut(self.storage.as_mut_ptr().cast::<u8>(), self.storage.len() * ALIGN) }
    }

    /// Raw bytes of field `i`'s buffer.
    pub fn field(&self, i: usize) -> &[u8] {
        let (at, len) = self.regions[i];
        &self.bytes()[at..at + len]
    }

    pub fn field_mut(&mut self, i: usize) -> &mut [u8] {
        let (at, len) = self.regions[i];
        &mut self.bytes_mut()[at..at + len]
    }

    /// Field `i` as `f64` values, when its size is a multiple of 8.
    pub fn f64s(&self, i: usize) -> Option<&[f64]> {
        self.desc.fields[i]
            .size
            .is_multiple_of(8)
            .then(|| f64_slice(self.field(i)))
            .flatten()
    }

    pub fn f64s_mut(&mut self, i: usize) -> Option<&mut [f64]> {
        if !self.desc.fields[i].size.is_multiple_of(8) {
            return None;
        }
        f64_slice_mut(self.field_mut(i))
    }

    /// Field `i` as `i32` values, when its size is a multiple of 4.
    pub fn i32s(&self, i: usize) -> Option<&[i32]> {
        self.desc.fields[i]
            .size
            .is_multiple_of(4)
            .then(|| i32_slice(self.field(i)))
            .flatten()
    }

    pub fn i32s_mut(&mut self, i: usize) -> Option<&mut [i32]> {
        if !self.desc.fields[i].size.is_multiple_of(4) {
            return None;
        }
        i32_slice_mut(self.field_mut(i))
    }

    /// All field buffers at once, mutably, in descriptor order.
    pub fn split_mut(&mut self) -> Vec<&mut [u8]> {
        let len = self.storage.len() * ALIGN;
        // SAFETY: as in `bytes_mut`; `regions` is a disjoint field of `self`.
        let mut rest = unsafe { std::slice::from_raw_parts_mut(self.storage.as_mut_ptr().cast::<u8>(), len) };
        let mut consumed = 0;
        let mut out = Vec::with_capacity(self.regions.len());
        for &(at, len) in &self.regions {
            let (_, tail) = std::mem::take(&mut rest).split_at_mut(at - consumed);
            let (field, tail) = tail.split_at_mut(len);
            out.push(field);
            rest = tail;
            consumed = at + len;
        }
        out
    }

    /// Start address of field `i`'s region.
    pub fn field_ptr(&self, i: usize) -> *const u8 {
        self.field(i).as_ptr()
    }
}

macro_rules! typed_view {
    ($name:ident, $name_mut:ident, $t:ty) => {
        /// Reinterprets aligned bytes; `None` on misalignment or a ragged length.
        pub fn $name(b: &[u8]) -> Option<&[$t]> {
            let n = std::mem::size_of::<$t>();
            if b.len() % n != 0 || b.as_ptr() as usize % std::mem::align_of::<$t>() != 0 {
                return None;
            }
            // SAFETY: alignment and length checked; every bit pattern is valid.
            Some(unsafe { std::slice::from_raw_parts(b.as_ptr().cast::<$t>(), b.len() / n) })
        }

        pub fn $name_mut(b: &mut [u8]) -> Option<&mut [$t]> {
            let n = std::mem::size_of::<$t>();
            if b.len() % n != 0 || b.as_ptr() as usize % std::mem::align_of::<$t>() != 0 {
                return None;
            }
            // SAFETY: as above; the borrow is unique.
            Some(unsafe { std::slice::from_raw_parts_mut(b.as_mut_ptr().cast::<$t>(), b.len() / n) })
        }
    };
}

typed_view!(f64_slice, f64_slice_mut, f64);
typed_view!(i32_slice, i32_slice_mut, i32);
typed_view!(i64_slice, i64_slice_mut, i64);

/// Where records live.
#[derive(Clone, Copy, Debug)]
pub enum Records<'a> {
    /// `count` records back to back.
    Contiguous(&'a [u8]),
    /// One byte view per record; `None` is a null pointer.
    Pointers(&'a [Option<&'a [u8]>]),
}

/// Mutable counterpart of [`Records`].
#[derive(Debug)]
pub enum RecordsMut<'a, 'b> {
    Contiguous(&'a mut [u8]),
    Pointers(&'a mut [Option<&'b mut [u8]>]),
}

#[inline(always)]
fn copy(dst: &mut [u8], src: &[u8]) {
    match src.len() {
        8 => dst[..8].copy_from_slice(&src[..8]),
        4 => dst[..4].copy_from_slice(&src[..4]),
        16 => dst[..16].copy_from_slice(&src[..16]),
        _ => dst.copy_from_slice(src),
    }
}

fn check_len(got: usize, desc: &ViewDescriptor) -> Result<(), LayoutError> {
    if got < desc.count {
        Err(LayoutError::SourceTooShort {
            needed: desc.count,
            got,
        })
    } else {
        Ok(())
    }
}

fn record_ok(index: usize, rec: Option<&[u8]>, desc: &ViewDescriptor) -> Result<(), LayoutError> {
    match rec {
        None => Err(LayoutError::NullPointer(index)),
        Some(r) if r.len() != desc.record_size => Err(LayoutError::RecordSize {
            index,
            got: r.len(),
            expected: desc.record_size,
        }),
        Some(_) => Ok(()),
    }
}

/// Narrow and convert: copies every In/InOut field of the first `count`
/// records into fresh buffers. Out-only buffers are allocated with
/// unspecified contents.
pub fn gather(src: Records<'_>, desc: &ViewDescriptor) -> Result<SoABuffers, LayoutError> {
    let rs = desc.record_size;
    match src {
        Records::Contiguous(bytes) => check_len(bytes.len() / rs.max(1), desc)?,
        Records::Pointers(ptrs) => {
            check_len(ptrs.len(), desc)?;
            for (i, p) in ptrs[..desc.count].iter().enumerate() {
                record_ok(i, *p, desc)?;
            }
        }
    }
    let mut out = SoABuffers::allocate(desc);
    match src {
        Records::Contiguous(bytes) => {
            for (fi, f) in desc.fields.iter().enumerate() {
                if !f.dir.gathered() {
                    continue;
                }
                let (off, size) = (f.offset, f.size);
                for (i, d) in out.field_mut(fi).chunks_exact_mut(size).enumerate() {
                    let at = i * rs + off;
                    copy(d, &bytes[at..at + size]);
                }
            }
        }
        Records::Pointers(ptrs) => {
            for (fi, f) in desc.fields.iter().enumerate() {
                if !f.dir.gathered() {
                    continue;
                }
                let (off, size) = (f.offset, f.size);
                for (d, p) in out.field_mut(fi).chunks_exact_mut(size).zip(ptrs) {
                    let r = p.expect("checked non-null");
                    copy(d, &r[off..off + size]);
                }
            }
        }
    }
    Ok(out)
}

/// Widen back: writes every Out/InOut buffer into its records. Other bytes of
/// the records are left alone.
pub fn scatter(bufs: &SoABuffers, dst: RecordsMut<'_, '_>, desc: &ViewDescriptor) -> Result<(), LayoutError> {
    if bufs.desc != *desc {
        return Err(LayoutError::DescriptorMismatch);
    }
    let rs = desc.record_size;
    match &dst {
        RecordsMut::Contiguous(bytes) => check_len(bytes.len() / rs.max(1), desc)?,
        RecordsMut::Pointers(ptrs) => {
            check_len(ptrs.len(), desc)?;
            for (i, p) in ptrs[..desc.count].iter().enumerate() {
                record_ok(i, p.as_deref(), desc)?;
            }
        }
    }
    match dst {
        RecordsMut::Contiguous(bytes) => {
            for (fi, f) in desc.fields.iter().enumerate() {
                if !f.dir.scattered() {
                    continue;
                }
                let (off, size) = (f.offset, f.size);
                for (i, s) in bufs.field(fi).chunks_exact(size).enumerate() {
                    let at = i * rs + off;
                    copy(&mut bytes[at..at + size], s);
                }
            }
        }
        RecordsMut::Pointers(ptrs) => {
            for (fi, f) in desc.fields.iter().enumerate() {
                if !f.dir.scattered() {
                    continue;
                }
                let (off, size) = (f.offset, f.size);
                for (s, p) in bufs.field(fi).chunks_exact(size).zip(ptrs.iter_mut()) {
                    let r = p.as_deref_mut().expect("checked non-null");
                    copy(&mut r[off..off + size], s);
                }
            }
        }
    }
    Ok(())
}
