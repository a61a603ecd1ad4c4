//! Particle storage in either layout, the cell grid, and initial conditions.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soaview_layout::{Records, RecordsMut};

use crate::particle::{as_bytes, as_bytes_mut, slice_bytes, slice_bytes_mut, Particle};
use crate::SphError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layout {
    /// Individually allocated particles in shuffled heap order, reached
    /// through a pointer list.
    Scattered,
    /// One array sorted by cell.
    Continuous,
}

#[derive(Debug)]
pub enum Store {
    Scattered(Vec<Box<Particle>>),
    Continuous(Vec<Particle>),
}

/// Cloning a scattered store re-shuffles the allocation order; a plain clone
/// would lay the copies out in logical order.
impl Clone for Store {
    fn clone(&self) -> Self {
        match self {
            Store::Continuous(v) => Store::Continuous(v.clone()),
            Store::Scattered(v) => {
                let ps: Vec<Particle> = v.iter().map(|b| **b).collect();
                Store::Scattered(scatter_alloc(&ps, &mut ChaCha8Rng::seed_from_u64(ps.len() as u64)))
            }
        }
    }
}

/// Uniform 1-D grid of unit-width cells over particles sorted by position.
/// Cell `c` owns the contiguous index range `local(c)`; its active set is the
/// union of cells `c-1..=c+1`, again contiguous.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellGrid {
    cells: Vec<Range<usize>>,
}

impl CellGrid {
    /// Bins sorted positions into `ncell` unit cells; positions outside
    /// `[0, ncell)` land in the end cells.
    pub fn build(xs: &[f64], ncell: usize) -> CellGrid {
        assert!(ncell > 0);
        debug_assert!(xs.windows(2).all(|w| w[0] <= w[1]));
        let cell_of = |x: f64| (x.max(0.0) as usize).min(ncell - 1);
        let mut cells = Vec::with_capacity(ncell);
        let mut at = 0;
        for c in 0..ncell {
            let start = at;
            while at < xs.len() && cell_of(xs[at]) == c {
                at += 1;
            }
            cells.push(start..at);
        }
        CellGrid { cells }
    }

    pub fn ncell(&self) -> usize {
        self.cells.len()
    }

    pub fn local(&self, c: usize) -> Range<usize> {
        self.cells[c].clone()
    }

    pub fn active(&self, c: usize) -> Range<usize> {
        let lo = c.saturating_sub(1);
        let hi = (c + 1).min(self.cells.len() - 1);
        self.cells[lo].start..self.cells[hi].end
    }
}

/// Parameters of the initial configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Setup {
    pub n: usize,
    pub ppc: usize,
    pub seed: u64,
    pub layout: Layout,
}

#[derive(Clone, Debug)]
pub struct System {
    store: Store,
    grid: CellGrid,
    pub dt: f64,
}

/// Source records of one range, borrowed in the store's own form.
pub(crate) enum Src<'a> {
    Contiguous(&'a [u8]),
    Pointers(Vec<Option<&'a [u8]>>),
}

impl Src<'_> {
    pub(crate) fn records(&self) -> Records<'_> {
        match self {
            Src::Contiguous(b) => Records::Contiguous(b),
            Src::Pointers(p) => Records::Pointers(p),
        }
    }
}

pub(crate) enum Dst<'a> {
    Contiguous(&'a mut [u8]),
    Pointers(Vec<Option<&'a mut [u8]>>),
}

impl<'a> Dst<'a> {
    pub(crate) fn records(&mut self) -> RecordsMut<'_, 'a> {
        match self {
            Dst::Contiguous(b) => RecordsMut::Contiguous(b),
            Dst::Pointers(p) => RecordsMut::Pointers(p),
        }
    }
}

pub(crate) trait Aos {
    fn p(&self, i: usize) -> &Particle;
    fn pm(&mut self, i: usize) -> &mut Particle;
}

impl Aos for Vec<Particle> {
    #[inline(always)]
    fn p(&self, i: usize) -> &Particle {
        &self[i]
    }
    #[inline(always)]
    fn pm(&mut self, i: usize) -> &mut Particle {
        &mut self[i]
    }
}

impl Aos for Vec<Box<Particle>> {
    #[inline(always)]
    fn p(&self, i: usize) -> &Particle {
        &self[i]
    }
    #[inline(always)]
    fn pm(&mut self, i: usize) -> &mut Particle {
        &mut self[i]
    }
}

/// Boxes the particles in a random allocation order, so heap addresses do not
/// follow the logical order.
#[allow(clippy::vec_box)]
fn scatter_alloc(ps: &[Particle], rng: &mut ChaCha8Rng) -> Vec<Box<Particle>> {
    let mut order: Vec<usize> = (0..ps.len()).collect();
    order.shuffle(rng);
    let mut slots: Vec<Option<Box<Particle>>> = vec![None; ps.len()];
    for &i in &order {
        slots[i] = Some(Box::new(ps[i]));
    }
    slots.into_iter().map(|b| b.expect("filled")).collect()
}

/// Target neighbour count per smoothing volume, as a multiple of ppc.
const ETA_PER_PPC: f64 = 1.0;

impl System {
    /// Jittered lattice of `n` particles over `n / ppc` unit cells with
    /// density close to 1, smoothing lengths perturbed around the target.
    pub fn new(setup: Setup) -> Result<System, SphError> {
        let Setup { n, ppc, seed, layout } = setup;
        if ppc == 0 || n == 0 {
            return Err(SphError::Config("particle count and ppc must be positive".into()));
        }
        if ppc > n {
            return Err(SphError::Config(format!("ppc {ppc} exceeds the particle count {n}")));
        }
        let ncell = n / ppc;
        let spacing = ncell as f64 / n as f64;
        let eta = ETA_PER_PPC * ppc as f64;
        let h0 = eta * spacing / 5.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = Vec::with_capacity(n);
        for k in 0..n {
            let x = (k as f64 + 0.5 + 0.25 * (rng.gen::<f64>() - 0.5)) * spacing;
            let h = h0 * (1.0 + 0.1 * (rng.gen::<f64>() - 0.5));
            let v = 0.1 * (rng.gen::<f64>() - 0.5);
            let u = 1.0 + 0.1 * rng.gen::<f64>();
            ps.push(Particle {
                x,
                v,
                v_pred: v,
                mass: spacing,
                h,
                // Support 2.5 h must stay inside the neighbouring cells.
                h_control: [1e-3 * h0, 0.4, eta],
                u,
                u_pred: u,
                dt_max: 1.0,
                dt_params: [0.3, 0.0],
                id: k as i64,
                cell: ((x as usize).min(ncell - 1)) as i64,
                ..Particle::default()
            });
        }
        let xs: Vec<f64> = ps.iter().map(|p| p.x).collect();
        let grid = CellGrid::build(&xs, ncell);
        let store = match layout {
            Layout::Continuous => Store::Continuous(ps),
            Layout::Scattered => Store::Scattered(scatter_alloc(&ps, &mut rng)),
        };
        Ok(System { store, grid, dt: 1e-3 })
    }

    /// A system over given particles, which must be sorted by position, on
    /// `ncell` unit cells.
    pub fn from_particles(ps: Vec<Particle>, ncell: usize, layout: Layout, dt: f64) -> Result<System, SphError> {
        if ncell == 0 {
            return Err(SphError::Config("at least one cell is required".into()));
        }
        // Negated so a NaN position is rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let unsorted = ps.windows(2).any(|w| !(w[0].x <= w[1].x));
        if unsorted {
            return Err(SphError::Config("particles must be sorted by position".into()));
        }
        let xs: Vec<f64> = ps.iter().map(|p| p.x).collect();
        let grid = CellGrid::build(&xs, ncell);
        let store = match layout {
            Layout::Continuous => Store::Continuous(ps),
            Layout::Scattered => Store::Scattered(scatter_alloc(&ps, &mut ChaCha8Rng::seed_from_u64(ps.len() as u64))),
        };
        Ok(System { store, grid, dt })
    }

    pub fn layout(&self) -> Layout {
        match self.store {
            Store::Scattered(_) => Layout::Scattered,
            Store::Continuous(_) => Layout::Continuous,
        }
    }

    pub fn len(&self) -> usize {
        match &self.store {
            Store::Scattered(v) => v.len(),
            Store::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn particle(&self, i: usize) -> &Particle {
        match &self.store {
            Store::Scattered(v) => &v[i],
            Store::Continuous(v) => &v[i],
        }
    }

    pub fn particle_mut(&mut self, i: usize) -> &mut Particle {
        match &mut self.store {
            Store::Scattered(v) => &mut v[i],
            Store::Continuous(v) => &mut v[i],
        }
    }

    /// Copies of all particles in logical order.
    pub fn particles(&self) -> Vec<Particle> {
        (0..self.len()).map(|i| *self.particle(i)).collect()
    }

    /// The same particles and grid in another layout.
    pub fn to_layout(&self, layout: Layout) -> System {
        let store = match layout {
            _ if layout == self.layout() => self.store.clone(),
            Layout::Continuous => Store::Continuous(self.particles()),
            Layout::Scattered => Store::Scattered(scatter_alloc(
                &self.particles(),
                &mut ChaCha8Rng::seed_from_u64(self.len() as u64),
            )),
        };
        System {
            store,
            grid: self.grid.clone(),
            dt: self.dt,
        }
    }

    pub(crate) fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }

    pub(crate) fn src(&self, r: Range<usize>) -> Src<'_> {
        match &self.store {
            Store::Continuous(v) => Src::Contiguous(slice_bytes(&v[r])),
            Store::Scattered(v) => Src::Pointers(v[r].iter().map(|b| Some(as_bytes(b))).collect()),
        }
    }

    pub(crate) fn dst(&mut self, r: Range<usize>) -> Dst<'_> {
        match &mut self.store {
            Store::Continuous(v) => Dst::Contiguous(slice_bytes_mut(&mut v[r])),
            Store::Scattered(v) => Dst::Pointers(v[r].iter_mut().map(|b| Some(as_bytes_mut(b))).collect()),
        }
    }
}
