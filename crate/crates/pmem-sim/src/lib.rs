//! Simulated persistent memory.
//!
//! Two persistency models are provided. Under [`Model::Psc`] every store goes
//! straight into the persistence buffer of its location. Under
//! [`Model::PtsoSyn`] a store first enters the issuing thread's store buffer
//! and is later moved, in FIFO order, into the per-location persistence
//! buffer by a [`SysStep::Propagate`] step. A [`SysStep::Persist`] step writes
//! the head of a persistence buffer to NVM. A crash discards every buffer.
//!
//! Nothing here spins or blocks for real: operations that cannot complete in
//! the current state return [`Blocked`] and leave the state untouched, and it
//! is up to the scheduler to run system steps until they become enabled.

use std::fmt;

/// Index of a persistent cell.
pub type Cell = usize;
/// Contents of a cell.
pub type Word = i32;
/// Logical thread identifier. Threads are small dense indices.
pub type ThreadId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    /// Persistent sequential consistency.
    Psc,
    /// Persistent TSO with synchronous flushes.
    PtsoSyn,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Psc => "psc",
            Model::PtsoSyn => "ptso",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "psc" => Ok(Model::Psc),
            "ptso" | "ptsosyn" | "ptso-syn" => Ok(Model::PtsoSyn),
            _ => Err(format!("unknown memory model {s:?} (expected psc or ptso)")),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The requested step is not enabled in the current state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Blocked;

impl fmt::Display for Blocked {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("step not enabled")
    }
}

impl std::error::Error for Blocked {}

/// An internal memory-system step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SysStep {
    Propagate(ThreadId),
    Persist(Cell),
}

/// Persistent memory state.
///
/// Buffers are stored flat so that cloning a state costs a handful of
/// allocations regardless of the number of cells. Slots past a buffer's
/// length are always zero, which keeps the derived `Eq`/`Hash` canonical.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PMem {
    model: Model,
    lazy: bool,
    cap: usize,
    nvm: Vec<Word>,
    plen: Vec<u8>,
    pdata: Vec<Word>,
    slen: Vec<u8>,
    sdata: Vec<(u16, Word)>,
}

impl PMem {
    /// Fresh memory with every cell holding 0 in NVM and empty buffers.
    ///
    /// `cap` bounds every buffer; it must be at least 1.
    pub fn new(model: Model, cells: usize, threads: usize, cap: usize) -> Self {
        Self::with_nvm(model, vec![0; cells], threads, cap)
    }

    /// Memory whose NVM starts out as `nvm`.
    pub fn with_nvm(model: Model, nvm: Vec<Word>, threads: usize, cap: usize) -> Self {
        assert!(cap >= 1 && cap < 256, "buffer capacity out of range");
        assert!(nvm.len() <= u16::MAX as usize);
        let cells = nvm.len();
        let sthreads = if model == Model::PtsoSyn { threads } else { 0 };
        PMem {
            model,
            lazy: false,
            cap,
            nvm,
            plen: vec![0; cells],
            pdata: vec![0; cells * cap],
            slen: vec![0; sthreads],
            sdata: vec![(0, 0); sthreads * cap],
        }
    }

    pub fn model(&self) -> Model {
        self.model
    }

    /// Switch to lazy persistence: values leave a persistence buffer only
    /// when something needs the room (a push into a full buffer, or a flush),
    /// and [`PMem::crash_states`] branches over every prefix that could have
    /// reached NVM by then. No [`SysStep::Persist`] steps are offered. This
    /// yields the same loads and post-crash images as the eager semantics
    /// with far fewer states.
    pub fn lazy(mut self) -> Self {
        self.lazy = true;
        self
    }

    pub fn is_lazy(&self) -> bool {
        self.lazy
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn cells(&self) -> usize {
        self.nvm.len()
    }

    pub fn threads(&self) -> usize {
        self.slen.len()
    }

    /// The value currently in NVM.
    pub fn nvm(&self, x: Cell) -> Word {
        self.nvm[x]
    }

    pub fn nvm_all(&self) -> &[Word] {
        &self.nvm
    }

    /// Pending values for `x`, oldest first.
    pub fn persist_buf(&self, x: Cell) -> &[Word] {
        let base = x * self.cap;
        &self.pdata[base..base + self.plen[x] as usize]
    }

    /// Pending stores of thread `t`, oldest first. Always empty under PSC.
    pub fn store_buf(&self, t: ThreadId) -> Vec<(Cell, Word)> {
        if self.model == Model::Psc {
            return Vec::new();
        }
        self.sbuf(t).iter().map(|&(x, v)| (x as Cell, v)).collect()
    }

    fn sbuf(&self, t: ThreadId) -> &[(u16, Word)] {
        let base = t * self.cap;
        &self.sdata[base..base + self.slen[t] as usize]
    }

    /// Whether `store(t, x, _)` would be enabled.
    pub fn can_store(&self, t: ThreadId, x: Cell) -> bool {
        match self.model {
            Model::Psc => self.lazy || (self.plen[x] as usize) < self.cap,
            Model::PtsoSyn => (self.slen[t] as usize) < self.cap,
        }
    }

    pub fn store(&mut self, t: ThreadId, x: Cell, v: Word) -> Result<(), Blocked> {
        if !self.can_store(t, x) {
            return Err(Blocked);
        }
        match self.model {
            Model::Psc => self.push_persist(x, v),
            Model::PtsoSyn => {
                let i = self.slen[t] as usize;
                self.sdata[t * self.cap + i] = (x as u16, v);
                self.slen[t] += 1;
            }
        }
        Ok(())
    }

    /// Latest value of `x` visible to thread `t`.
    pub fn load(&self, t: ThreadId, x: Cell) -> Word {
        if self.model == Model::PtsoSyn {
            if let Some(&(_, v)) = self.sbuf(t).iter().rev().find(|&&(y, _)| y as Cell == x) {
                return v;
            }
        }
        match self.persist_buf(x).last() {
            Some(&v) => v,
            None => self.nvm[x],
        }
    }

    /// A flush of `x` by `t` completes only once `t` has no buffered store to
    /// `x` and the persistence buffer of `x` is empty.
    pub fn can_flush(&self, t: ThreadId, x: Cell) -> bool {
        if self.plen[x] != 0 && !self.lazy {
            return false;
        }
        self.model == Model::Psc || !self.sbuf(t).iter().any(|&(y, _)| y as Cell == x)
    }

    /// In lazy mode a successful flush also persists the buffer of `x`.
    pub fn flush(&mut self, t: ThreadId, x: Cell) -> Result<(), Blocked> {
        if !self.can_flush(t, x) {
            return Err(Blocked);
        }
        if self.plen[x] > 0 {
            let n = self.plen[x] as usize;
            self.nvm[x] = self.pdata[x * self.cap + n - 1];
            self.pdata[x * self.cap..x * self.cap + n].iter_mut().for_each(|w| *w = 0);
            self.plen[x] = 0;
        }
        Ok(())
    }

    /// Atomic compare-and-swap with load semantics for the read.
    pub fn cas(&mut self, t: ThreadId, x: Cell, expect: Word, new: Word) -> Result<bool, Blocked> {
        if self.load(t, x) != expect {
            return Ok(false);
        }
        self.store(t, x, new)?;
        Ok(true)
    }

    /// Move the oldest store of `t` into its location's persistence buffer.
    pub fn propagate(&mut self, t: ThreadId) -> Result<(), Blocked> {
        if self.model == Model::Psc || self.slen[t] == 0 {
            return Err(Blocked);
        }
        let base = t * self.cap;
        let (x, v) = self.sdata[base];
        let x = x as Cell;
        if self.plen[x] as usize >= self.cap && !self.lazy {
            return Err(Blocked);
        }
        let n = self.slen[t] as usize;
        self.sdata.copy_within(base + 1..base + n, base);
        self.sdata[base + n - 1] = (0, 0);
        self.slen[t] -= 1;
        self.push_persist(x, v);
        Ok(())
    }

    /// Write the oldest pending value of `x` to NVM.
    pub fn persist(&mut self, x: Cell) -> Result<(), Blocked> {
        if self.plen[x] == 0 {
            return Err(Blocked);
        }
        self.nvm[x] = self.pop_persist(x);
        Ok(())
    }

    /// Apply a system step.
    pub fn sys_step(&mut self, s: SysStep) -> Result<(), Blocked> {
        match s {
            SysStep::Propagate(t) => self.propagate(t),
            SysStep::Persist(x) => self.persist(x),
        }
    }

    /// Every system step enabled in this state, in a fixed order.
    pub fn sys_steps(&self) -> Vec<SysStep> {
        let mut out = Vec::new();
        for t in 0..self.slen.len() {
            if self.slen[t] > 0 {
                let (x, _) = self.sdata[t * self.cap];
                if self.lazy || (self.plen[x as Cell] as usize) < self.cap {
                    out.push(SysStep::Propagate(t));
                }
            }
        }
        if self.lazy {
            return out;
        }
        for x in 0..self.plen.len() {
            if self.plen[x] > 0 {
                out.push(SysStep::Persist(x));
            }
        }
        out
    }

    /// Power failure: all buffered stores are lost, NVM is kept.
    pub fn crash(&mut self) {
        self.plen.iter_mut().for_each(|n| *n = 0);
        self.pdata.iter_mut().for_each(|w| *w = 0);
        self.slen.iter_mut().for_each(|n| *n = 0);
        self.sdata.iter_mut().for_each(|w| *w = (0, 0));
    }

    /// Every state a crash can lead to. Eager memory has exactly one; lazy
    /// memory has one per combination of persisted prefixes.
    pub fn crash_states(&self) -> Vec<PMem> {
        let mut images = vec![self.nvm.clone()];
        if self.lazy {
            for x in 0..self.plen.len() {
                let buf = self.persist_buf(x);
                if buf.is_empty() {
                    continue;
                }
                let mut next = Vec::with_capacity(images.len() * (buf.len() + 1));
                for img in &images {
                    next.push(img.clone());
                    for &v in buf {
                        if v != img[x] {
                            let mut i = img.clone();
                            i[x] = v;
                            next.push(i);
                        }
                    }
                }
                next.sort();
                next.dedup();
                images = next;
            }
        }
        images
            .into_iter()
            .map(|nvm| {
                let mut m = self.clone();
                m.crash();
                m.nvm = nvm;
                m
            })
            .collect()
    }

    /// No store is buffered anywhere.
    pub fn is_quiescent(&self) -> bool {
        self.plen.iter().all(|&n| n == 0) && self.slen.iter().all(|&n| n == 0)
    }

    /// Drain every buffer to NVM in FIFO order.
    pub fn drain(&mut self) {
        for t in 0..self.slen.len() {
            while self.slen[t] > 0 {
                let (x, _) = self.sdata[t * self.cap];
                if self.plen[x as Cell] as usize >= self.cap {
                    self.persist(x as Cell).expect("nonempty");
                }
                self.propagate(t).expect("room was made");
            }
        }
        for x in 0..self.plen.len() {
            while self.plen[x] > 0 {
                self.persist(x).expect("nonempty");
            }
        }
    }

    /// Write the newest pending value of every persistence buffer to NVM.
    /// Loads are unchanged; only the possible post-crash states shrink.
    pub fn persist_all(&mut self) {
        for x in 0..self.plen.len() {
            if self.plen[x] > 0 {
                let n = self.plen[x] as usize;
                self.nvm[x] = self.pdata[x * self.cap + n - 1];
                self.pdata[x * self.cap..x * self.cap + n].iter_mut().for_each(|w| *w = 0);
                self.plen[x] = 0;
            }
        }
    }

    /// Overwrite NVM at `x`, which must have nothing buffered anywhere.
    pub fn set_nvm(&mut self, x: Cell, v: Word) {
        assert!(self.plen[x] == 0, "cell {x} has pending persists");
        assert!((0..self.slen.len()).all(|t| self.sbuf(t).iter().all(|&(y, _)| y as Cell != x)), "cell {x} has buffered stores");
        self.nvm[x] = v;
    }

    /// Persist every buffered value that is already equal to NVM at the head
    /// of its persistence buffer. Such a step changes neither loads nor the
    /// post-crash state, so states that differ only by it are equivalent.
    pub fn drop_redundant_heads(&mut self) {
        for x in 0..self.plen.len() {
            while self.plen[x] > 0 && self.pdata[x * self.cap] == self.nvm[x] {
                self.pop_persist(x);
            }
        }
    }

    fn push_persist(&mut self, x: Cell, v: Word) {
        if self.lazy && self.plen[x] as usize == self.cap {
            self.nvm[x] = self.pop_persist(x);
        }
        let i = self.plen[x] as usize;
        debug_assert!(i < self.cap);
        self.pdata[x * self.cap + i] = v;
        self.plen[x] += 1;
    }

    fn pop_persist(&mut self, x: Cell) -> Word {
        let base = x * self.cap;
        let n = self.plen[x] as usize;
        let head = self.pdata[base];
        self.pdata.copy_within(base + 1..base + n, base);
        self.pdata[base + n - 1] = 0;
        self.plen[x] -= 1;
        head
    }
}

impl fmt::Debug for PMem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("PMem");
        d.field("model", &self.model).field("lazy", &self.lazy).field("nvm", &self.nvm);
        let pb: Vec<_> = (0..self.cells())
            .filter(|&x| self.plen[x] > 0)
            .map(|x| (x, self.persist_buf(x).to_vec()))
            .collect();
        d.field("persist", &pb);
        if self.model == Model::PtsoSyn {
            let sb: Vec<_> = (0..self.threads()).map(|t| self.store_buf(t)).collect();
            d.field("store", &sb);
        }
        d.finish()
    }
}

/// A volatile word with sequentially consistent access, used for the global
/// version counter of the concurrent algorithms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScCell(pub Word);

impl ScCell {
    pub fn load(&self) -> Word {
        self.0
    }

    pub fn store(&mut self, v: Word) {
        self.0 = v;
    }

    pub fn cas(&mut self, expect: Word, new: Word) -> bool {
        if self.0 == expect {
            self.0 = new;
            true
        } else {
            false
        }
    }
}
