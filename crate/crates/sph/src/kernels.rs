//! Kernel drivers: loop structure, layout access and phase timing around the
//! shared arithmetic in [`crate::physics`].

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use soaview_layout::{f64_slice_mut, gather, i32_slice_mut, scatter, SoABuffers};

use crate::physics::*;
use crate::system::{Aos, Layout, Store, System};
use crate::views::{ViewSpec, Views};
use crate::SphError;

/// Per-cell local buffers, interaction count and phase times of one worker.
type WorkerPart = (Vec<SoABuffers>, i64, PhaseTimes);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kernel {
    Density,
    Force,
    Kick1,
    Drift,
    Kick2,
}

impl Kernel {
    pub const ALL: [Kernel; 5] = [
        Kernel::Density,
        Kernel::Force,
        Kernel::Kick1,
        Kernel::Drift,
        Kernel::Kick2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Density => "density",
            Kernel::Force => "force",
            Kernel::Kick1 => "kick1",
            Kernel::Drift => "drift",
            Kernel::Kick2 => "kick2",
        }
    }

    /// Whether the kernel loops over neighbour pairs.
    pub fn is_pairwise(self) -> bool {
        matches!(self, Kernel::Density | Kernel::Force)
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = SphError;
    fn from_str(s: &str) -> Result<Self, SphError> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SphError::Config(format!("unknown kernel '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Path {
    AosBaseline,
    SoaView,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Order {
    LocalActive,
    ActiveLocal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Guard {
    Branch,
    Mask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Variant {
    pub path: Path,
    pub layout: Layout,
    pub order: Order,
    pub guard: Guard,
}

impl Default for Variant {
    fn default() -> Self {
        Variant {
            path: Path::SoaView,
            layout: Layout::Scattered,
            order: Order::LocalActive,
            guard: Guard::Branch,
        }
    }
}

impl Variant {
    pub fn path_name(&self) -> &'static str {
        match self.path {
            Path::AosBaseline => "aos-baseline",
            Path::SoaView => "soa-view",
        }
    }

    pub fn layout_name(&self) -> &'static str {
        match self.layout {
            Layout::Scattered => "scattered",
            Layout::Continuous => "continuous",
        }
    }

    pub fn order_name(&self) -> &'static str {
        match self.order {
            Order::LocalActive => "local-active",
            Order::ActiveLocal => "active-local",
        }
    }

    pub fn guard_name(&self) -> &'static str {
        match self.guard {
            Guard::Branch => "branch",
            Guard::Mask => "mask",
        }
    }

    /// Every combination of the four axes.
    pub fn all() -> Vec<Variant> {
        let mut out = Vec::new();
        for path in [Path::AosBaseline, Path::SoaView] {
            for layout in [Layout::Scattered, Layout::Continuous] {
                for order in [Order::LocalActive, Order::ActiveLocal] {
                    for guard in [Guard::Branch, Guard::Mask] {
                        out.push(Variant {
                            path,
                            layout,
                            order,
                            guard,
                        });
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.path_name(),
            self.layout_name(),
            self.order_name(),
            self.guard_name()
        )
    }
}

/// Comma-separated axis values in any order; omitted axes keep their default.
impl FromStr for Variant {
    type Err = SphError;
    fn from_str(s: &str) -> Result<Self, SphError> {
        let mut v = Variant::default();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "aos-baseline" | "aos" => v.path = Path::AosBaseline,
                "soa-view" => v.path = Path::SoaView,
                "scattered" => v.layout = Layout::Scattered,
                "continuous" => v.layout = Layout::Continuous,
                "local-active" => v.order = Order::LocalActive,
                "active-local" => v.order = Order::ActiveLocal,
                "branch" => v.guard = Guard::Branch,
                "mask" => v.guard = Guard::Mask,
                _ => return Err(SphError::Config(format!("unknown variant component '{tok}'"))),
            }
        }
        Ok(v)
    }
}

/// Time spent per phase. The AoS path only records compute time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhaseTimes {
    pub prologue: Duration,
    pub compute: Duration,
    pub epilogue: Duration,
}

impl PhaseTimes {
    pub fn total(&self) -> Duration {
        self.prologue + self.compute + self.epilogue
    }
}

impl std::ops::AddAssign for PhaseTimes {
    fn add_assign(&mut self, o: PhaseTimes) {
        self.prologue += o.prologue;
        self.compute += o.compute;
        self.epilogue += o.epilogue;
    }
}

/// Hands out each buffer of a view once, so several can be borrowed mutably.
struct Cols<'a>(Vec<Option<&'a mut [u8]>>);

impl<'a> Cols<'a> {
    fn new(b: &'a mut SoABuffers) -> Self {
        Cols(b.split_mut().into_iter().map(Some).collect())
    }

    fn f(&mut self, i: usize) -> &'a mut [f64] {
        f64_slice_mut(self.0[i].take().expect("column taken once")).expect("f64 column")
    }

    fn i32(&mut self, i: usize) -> &'a mut [i32] {
        i32_slice_mut(self.0[i].take().expect("column taken once")).expect("i32 column")
    }
}

impl System {
    /// Runs kernel `k` once over every cell. Returns the corpus kernel's
    /// integer result: unconverged count for density, flagged count for
    /// kick2, zero otherwise. `v.layout` must match the system's layout.
    pub fn run(&mut self, k: Kernel, v: &Variant, views: &Views, times: &mut PhaseTimes) -> Result<i64, SphError> {
        self.precheck(k, v)?;
        match v.path {
            Path::AosBaseline => {
                let t = Instant::now();
                let dt = self.dt;
                let grid = self.grid().clone();
                let r = match self.store_mut() {
                    Store::Scattered(s) => aos(s, &grid, k, v, dt),
                    Store::Continuous(s) => aos(s, &grid, k, v, dt),
                };
                times.compute += t.elapsed();
                Ok(r)
            }
            Path::SoaView => {
                let mut total = 0i64;
                for c in 0..self.grid().ncell() {
                    total = total.wrapping_add(self.soa_cell(k, v, views, c, times)?);
                }
                Ok(total)
            }
        }
    }

    /// Density sweeps until every smoothing length has converged, at most
    /// `max_iter` times. Returns the sweep count and the particles still
    /// unconverged after the last sweep.
    pub fn density_step(&mut self, v: &Variant, views: &Views, max_iter: usize) -> Result<(usize, i64), SphError> {
        let mut t = PhaseTimes::default();
        let mut left = 0;
        for it in 1..=max_iter {
            left = self.run(Kernel::Density, v, views, &mut t)?;
            if left == 0 {
                return Ok((it, 0));
            }
        }
        Ok((max_iter, left))
    }

    fn view_specs(k: Kernel, views: &Views) -> (&ViewSpec, Option<&ViewSpec>) {
        match k {
            Kernel::Density => (&views.density_local, Some(&views.density_active)),
            Kernel::Force => (&views.force_local, Some(&views.force_active)),
            Kernel::Kick1 => (&views.kick1, None),
            Kernel::Drift => (&views.drift, None),
            Kernel::Kick2 => (&views.kick2, None),
        }
    }

    /// Prologue and main loop of cell `c`; leaves the AoS records untouched.
    fn soa_compute(
        &self,
        k: Kernel,
        v: &Variant,
        views: &Views,
        c: usize,
        t: &mut PhaseTimes,
    ) -> Result<(SoABuffers, i64), SphError> {
        let local = self.grid().local(c);
        let active = self.grid().active(c);
        let dt = self.dt;
        let (spec, aspec) = Self::view_specs(k, views);
        let t0 = Instant::now();
        let mut lb = gather(self.src(local.clone()).records(), &spec.desc.with_count(local.len()))?;
        let mut ab = match aspec {
            Some(a) => Some(gather(
                self.src(active.clone()).records(),
                &a.desc.with_count(active.len()),
            )?),
            None => None,
        };
        let t1 = Instant::now();
        let r = match k {
            Kernel::Density => soa_density(spec, aspec.unwrap(), &mut lb, ab.as_mut().unwrap(), v),
            Kernel::Force => soa_force(spec, aspec.unwrap(), &mut lb, ab.as_mut().unwrap(), v),
            Kernel::Kick1 => soa_kick1(spec, &mut lb, dt),
            Kernel::Drift => soa_drift(spec, &mut lb, dt),
            Kernel::Kick2 => soa_kick2(spec, &mut lb, dt),
        };
        drop(ab);
        let t2 = Instant::now();
        t.prologue += t1 - t0;
        t.compute += t2 - t1;
        Ok((lb, r))
    }

    /// Epilogue of cell `c`.
    fn soa_scatter(&mut self, c: usize, lb: SoABuffers, t: &mut PhaseTimes) -> Result<(), SphError> {
        let t0 = Instant::now();
        let local = self.grid().local(c);
        scatter(&lb, self.dst(local).records(), lb.descriptor())?;
        drop(lb);
        t.epilogue += t0.elapsed();
        Ok(())
    }

    fn soa_cell(
        &mut self,
        k: Kernel,
        v: &Variant,
        views: &Views,
        c: usize,
        t: &mut PhaseTimes,
    ) -> Result<i64, SphError> {
        let (lb, r) = self.soa_compute(k, v, views, c, t)?;
        self.soa_scatter(c, lb, t)?;
        Ok(r)
    }

    /// [`System::run`] with prologue and main loop of the cells spread over
    /// `threads` workers, each owning a contiguous cell range; epilogues run
    /// afterwards on the calling thread. Falls back to the sequential run
    /// unless the variant is soa-view local-active and no cell's active view
    /// reads a field another cell scatters. Phase times are summed over
    /// workers. Results are bitwise equal to the sequential run.
    pub fn run_parallel(
        &mut self,
        k: Kernel,
        v: &Variant,
        views: &Views,
        threads: usize,
        times: &mut PhaseTimes,
    ) -> Result<i64, SphError> {
        let ncell = self.grid().ncell();
        let workers = threads.min(ncell);
        if workers <= 1 || v.path != Path::SoaView || v.order != Order::LocalActive || !views.deferrable(k) {
            return self.run(k, v, views, times);
        }
        self.precheck(k, v)?;
        let this = &*self;
        let parts: Vec<Result<WorkerPart, SphError>> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..workers)
                .map(|w| {
                    let cells = ncell * w / workers..ncell * (w + 1) / workers;
                    s.spawn(move || {
                        let mut t = PhaseTimes::default();
                        let mut bufs = Vec::with_capacity(cells.len());
                        let mut total = 0i64;
                        for c in cells {
                            let (lb, r) = this.soa_compute(k, v, views, c, &mut t)?;
                            bufs.push(lb);
                            total = total.wrapping_add(r);
                        }
                        Ok((bufs, total, t))
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let mut total = 0i64;
        let mut c = 0;
        for part in parts {
            let (bufs, r, t) = part?;
            *times += t;
            total = total.wrapping_add(r);
            for lb in bufs {
                self.soa_scatter(c, lb, times)?;
                c += 1;
            }
        }
        Ok(total)
    }

    fn precheck(&self, k: Kernel, v: &Variant) -> Result<(), SphError> {
        if v.layout != self.layout() {
            return Err(SphError::Config(format!(
                "variant layout {} does not match the system",
                v.layout_name()
            )));
        }
        if k == Kernel::Force {
            if let Some(i) = (0..self.len()).find(|&i| self.particle(i).density == 0.0) {
                return Err(SphError::ZeroDensity(i));
            }
        }
        Ok(())
    }
}

fn aos<S: Aos>(s: &mut S, grid: &crate::system::CellGrid, k: Kernel, v: &Variant, dt: f64) -> i64 {
    let mut total = 0i64;
    for c in 0..grid.ncell() {
        let local = grid.local(c);
        let r = match k {
            Kernel::Density => match (v.order, v.guard) {
                (Order::LocalActive, Guard::Branch) => aos_density_la::<S, false>(s, local, grid.active(c)),
                (Order::LocalActive, Guard::Mask) => aos_density_la::<S, true>(s, local, grid.active(c)),
                (Order::ActiveLocal, Guard::Branch) => aos_density_al::<S, false>(s, local, grid.active(c)),
                (Order::ActiveLocal, Guard::Mask) => aos_density_al::<S, true>(s, local, grid.active(c)),
            },
            Kernel::Force => {
                match (v.order, v.guard) {
                    (Order::LocalActive, Guard::Branch) => aos_force_la::<S, false>(s, local, grid.active(c)),
                    (Order::LocalActive, Guard::Mask) => aos_force_la::<S, true>(s, local, grid.active(c)),
                    (Order::ActiveLocal, Guard::Branch) => aos_force_al::<S, false>(s, local, grid.active(c)),
                    (Order::ActiveLocal, Guard::Mask) => aos_force_al::<S, true>(s, local, grid.active(c)),
                }
                0
            }
            Kernel::Kick1 => {
                for i in local {
                    let p = s.pm(i);
                    let rates = p.rates;
                    kick(&mut p.v, &mut p.u, &mut p.t_kick, rates, dt);
                }
                0
            }
            Kernel::Drift => {
                for i in local {
                    let p = s.pm(i);
                    p.x += dt * p.v;
                    p.drift_count = p.drift_count.wrapping_add(1);
                }
                0
            }
            Kernel::Kick2 => {
                let mut n = 0i64;
                for i in local {
                    let p = s.pm(i);
                    let rates = p.rates;
                    kick(&mut p.v, &mut p.u, &mut p.t_kick, rates, dt);
                    p.v_pred = p.v;
                    p.u_pred = p.u;
                    p.rates = [0.0, 0.0];
                    p.h_dt = 0.0;
                    p.v_sig = 0.0;
                    n = n.wrapping_add(kick2_flags(
                        dt,
                        p.dt_params[0],
                        p.dt_max,
                        p.ncount,
                        p.density,
                        p.pressure,
                        p.mass,
                        p.h,
                    ));
                }
                n
            }
        };
        total = total.wrapping_add(r);
    }
    total
}

fn aos_density_finish<S: Aos>(s: &mut S, i: usize, acc: &DensityAcc<f64>) -> i64 {
    let p = s.pm(i);
    p.density = acc.density;
    p.ncount = acc.ncount;
    p.drho_dh = acc.drho_dh;
    p.dn_dh = acc.dn_dh;
    let o = density_finish(acc, p.h, p.h_control, p.u_pred);
    p.pressure = o.pressure;
    p.h = o.h;
    o.unconverged as i64
}

fn aos_density_la<S: Aos, const MASK: bool>(
    s: &mut S,
    local: std::ops::Range<usize>,
    active: std::ops::Range<usize>,
) -> i64 {
    let mut n = 0;
    for i in local {
        let (px, ph) = (s.p(i).x, s.p(i).h);
        let mut acc = DensityAcc::default();
        for j in active.clone() {
            let q = s.p(j);
            density_pair::<f64, MASK>(&mut acc, px, ph, q.x, q.mass);
        }
        n += aos_density_finish(s, i, &acc);
    }
    n
}

fn aos_density_al<S: Aos, const MASK: bool>(
    s: &mut S,
    local: std::ops::Range<usize>,
    active: std::ops::Range<usize>,
) -> i64 {
    // The sums live in the records themselves while the outer loop runs.
    for i in local.clone() {
        let p = s.pm(i);
        p.density = 0.0;
        p.ncount = 0.0;
        p.drho_dh = 0.0;
        p.dn_dh = 0.0;
    }
    for j in active {
        let (qx, qm) = (s.p(j).x, s.p(j).mass);
        for i in local.clone() {
            let p = s.pm(i);
            let mut acc = DensityAcc {
                density: p.density,
                ncount: p.ncount,
                drho_dh: p.drho_dh,
                dn_dh: p.dn_dh,
            };
            density_pair::<f64, MASK>(&mut acc, p.x, p.h, qx, qm);
            p.density = acc.density;
            p.ncount = acc.ncount;
            p.drho_dh = acc.drho_dh;
            p.dn_dh = acc.dn_dh;
        }
    }
    let mut n = 0;
    for i in local {
        let p = s.p(i);
        let acc = DensityAcc {
            density: p.density,
            ncount: p.ncount,
            drho_dh: p.drho_dh,
            dn_dh: p.dn_dh,
        };
        n += aos_density_finish(s, i, &acc);
    }
    n
}

fn force_self_of(p: &crate::Particle) -> ForceSelf<f64> {
    force_self(
        p.x, p.h, p.v_pred, p.drho_dh, p.density, p.pressure, p.u_pred, p.ncount, p.dn_dh,
    )
}

fn force_other_of(q: &crate::Particle) -> ForceOther<f64> {
    ForceOther {
        x: q.x,
        h: q.h,
        mass: q.mass,
        drho_dh: q.drho_dh,
        density: q.density,
        pressure: q.pressure,
        v_pred: q.v_pred,
        u_pred: q.u_pred,
    }
}

fn aos_force_store<S: Aos>(s: &mut S, i: usize, acc: &ForceAcc<f64>) {
    let p = s.pm(i);
    let o = force_finish(acc, p.h, p.h_control[1]);
    p.rates = o.rates;
    p.h_dt = o.h_dt;
    p.v_sig = o.v_sig;
    p.dt_max = o.dt_max;
}

fn aos_force_la<S: Aos, const MASK: bool>(s: &mut S, local: std::ops::Range<usize>, active: std::ops::Range<usize>) {
    for i in local {
        let me = force_self_of(s.p(i));
        let mut acc = ForceAcc::default();
        for j in active.clone() {
            force_pair::<f64, MASK>(&mut acc, &me, &force_other_of(s.p(j)));
        }
        aos_force_store(s, i, &acc);
    }
}

fn aos_force_al<S: Aos, const MASK: bool>(s: &mut S, local: std::ops::Range<usize>, active: std::ops::Range<usize>) {
    // Neighbour terms must see pre-kernel state, and the kernel writes no
    // field it reads, so per-particle terms are taken once up front.
    let selves: Vec<ForceSelf<f64>> = local.clone().map(|i| force_self_of(s.p(i))).collect();
    for i in local.clone() {
        let p = s.pm(i);
        p.rates = [0.0, 0.0];
        p.h_dt = 0.0;
        p.v_sig = 0.0;
    }
    for j in active {
        let q = force_other_of(s.p(j));
        for (me, i) in selves.iter().zip(local.clone()) {
            let p = s.pm(i);
            let mut acc = ForceAcc {
                rates: p.rates,
                h_dt: p.h_dt,
                v_sig: p.v_sig,
            };
            force_pair::<f64, MASK>(&mut acc, me, &q);
            p.rates = acc.rates;
            p.h_dt = acc.h_dt;
            p.v_sig = acc.v_sig;
        }
    }
    for i in local {
        let p = s.p(i);
        let acc = ForceAcc {
            rates: p.rates,
            h_dt: p.h_dt,
            v_sig: p.v_sig,
        };
        aos_force_store(s, i, &acc);
    }
}

fn soa_density(l: &ViewSpec, a: &ViewSpec, lb: &mut SoABuffers, ab: &mut SoABuffers, v: &Variant) -> i64 {
    let mut lc = Cols::new(lb);
    let mut ac = Cols::new(ab);
    let x = lc.f(l.ix("x"));
    let h = lc.f(l.ix("h"));
    let hc = lc.f(l.ix("h_control"));
    let u_pred = lc.f(l.ix("u_pred"));
    let density = lc.f(l.ix("density"));
    let ncount = lc.f(l.ix("ncount"));
    let drho_dh = lc.f(l.ix("drho_dh"));
    let dn_dh = lc.f(l.ix("dn_dh"));
    let pressure = lc.f(l.ix("pressure"));
    let qx = ac.f(a.ix("x"));
    let qm = ac.f(a.ix("mass"));
    let nl = x.len();
    let mut accs = vec![DensityAcc::default(); nl];
    match (v.order, v.guard) {
        (Order::LocalActive, g) => {
            for i in 0..nl {
                let (px, ph) = (x[i], h[i]);
                let acc = &mut accs[i];
                if g == Guard::Mask {
                    for j in 0..qx.len() {
                        density_pair::<f64, true>(acc, px, ph, qx[j], qm[j]);
                    }
                } else {
                    for j in 0..qx.len() {
                        density_pair::<f64, false>(acc, px, ph, qx[j], qm[j]);
                    }
                }
            }
        }
        (Order::ActiveLocal, g) => {
            for j in 0..qx.len() {
                let (xj, mj) = (qx[j], qm[j]);
                if g == Guard::Mask {
                    for i in 0..nl {
                        density_pair::<f64, true>(&mut accs[i], x[i], h[i], xj, mj);
                    }
                } else {
                    for i in 0..nl {
                        density_pair::<f64, false>(&mut accs[i], x[i], h[i], xj, mj);
                    }
                }
            }
        }
    }
    let mut n = 0;
    for i in 0..nl {
        let acc = &accs[i];
        density[i] = acc.density;
        ncount[i] = acc.ncount;
        drho_dh[i] = acc.drho_dh;
        dn_dh[i] = acc.dn_dh;
        let o = density_finish(acc, h[i], [hc[3 * i], hc[3 * i + 1], hc[3 * i + 2]], u_pred[i]);
        pressure[i] = o.pressure;
        h[i] = o.h;
        n += o.unconverged as i64;
    }
    n
}

fn soa_force(l: &ViewSpec, a: &ViewSpec, lb: &mut SoABuffers, ab: &mut SoABuffers, v: &Variant) -> i64 {
    let mut lc = Cols::new(lb);
    let mut ac = Cols::new(ab);
    let x = lc.f(l.ix("x"));
    let h = lc.f(l.ix("h"));
    let v_pred = lc.f(l.ix("v_pred"));
    let drho_dh = lc.f(l.ix("drho_dh"));
    let density = lc.f(l.ix("density"));
    let pressure = lc.f(l.ix("pressure"));
    let u_pred = lc.f(l.ix("u_pred"));
    let ncount = lc.f(l.ix("ncount"));
    let dn_dh = lc.f(l.ix("dn_dh"));
    let hc = lc.f(l.ix("h_control"));
    let rates = lc.f(l.ix("rates"));
    let h_dt = lc.f(l.ix("h_dt"));
    let v_sig = lc.f(l.ix("v_sig"));
    let dt_max = lc.f(l.ix("dt_max"));
    let q = [
        ac.f(a.ix("x")),
        ac.f(a.ix("h")),
        ac.f(a.ix("mass")),
        ac.f(a.ix("drho_dh")),
        ac.f(a.ix("density")),
        ac.f(a.ix("pressure")),
        ac.f(a.ix("v_pred")),
        ac.f(a.ix("u_pred")),
    ];
    let other = |j: usize| ForceOther {
        x: q[0][j],
        h: q[1][j],
        mass: q[2][j],
        drho_dh: q[3][j],
        density: q[4][j],
        pressure: q[5][j],
        v_pred: q[6][j],
        u_pred: q[7][j],
    };
    let na = q[0].len();
    let nl = x.len();
    let selves: Vec<ForceSelf<f64>> = (0..nl)
        .map(|i| {
            force_self(
                x[i],
                h[i],
                v_pred[i],
                drho_dh[i],
                density[i],
                pressure[i],
                u_pred[i],
                ncount[i],
                dn_dh[i],
            )
        })
        .collect();
    let mut accs = vec![ForceAcc::default(); nl];
    match v.order {
        Order::LocalActive => {
            for i in 0..nl {
                let (me, acc) = (&selves[i], &mut accs[i]);
                if v.guard == Guard::Mask {
                    for j in 0..na {
                        force_pair::<f64, true>(acc, me, &other(j));
                    }
                } else {
                    for j in 0..na {
                        force_pair::<f64, false>(acc, me, &other(j));
                    }
                }
            }
        }
        Order::ActiveLocal => {
            for j in 0..na {
                let qj = other(j);
                if v.guard == Guard::Mask {
                    for i in 0..nl {
                        force_pair::<f64, true>(&mut accs[i], &selves[i], &qj);
                    }
                } else {
                    for i in 0..nl {
                        force_pair::<f64, false>(&mut accs[i], &selves[i], &qj);
                    }
                }
            }
        }
    }
    for i in 0..nl {
        let o = force_finish(&accs[i], h[i], hc[3 * i + 1]);
        rates[2 * i] = o.rates[0];
        rates[2 * i + 1] = o.rates[1];
        h_dt[i] = o.h_dt;
        v_sig[i] = o.v_sig;
        dt_max[i] = o.dt_max;
    }
    0
}

fn soa_kick1(l: &ViewSpec, lb: &mut SoABuffers, dt: f64) -> i64 {
    let mut lc = Cols::new(lb);
    kick1_loop(
        lc.f(l.ix("v")),
        lc.f(l.ix("u")),
        lc.f(l.ix("rates")),
        lc.f(l.ix("t_kick")),
        dt,
    );
    0
}

// The streaming loops take every column as a separate slice parameter: only
// parameters carry the no-alias guarantee that lets them vectorize.
#[inline(never)]
fn kick1_loop(v: &mut [f64], u: &mut [f64], rates: &[f64], t_kick: &mut [f64], dt: f64) {
    let n = v.len();
    let (u, rates, t_kick) = (&mut u[..n], &rates[..2 * n], &mut t_kick[..2 * n]);
    for i in 0..n {
        let mut tk = [t_kick[2 * i], t_kick[2 * i + 1]];
        kick(&mut v[i], &mut u[i], &mut tk, [rates[2 * i], rates[2 * i + 1]], dt);
        t_kick[2 * i] = tk[0];
        t_kick[2 * i + 1] = tk[1];
    }
}

fn soa_drift(l: &ViewSpec, lb: &mut SoABuffers, dt: f64) -> i64 {
    let mut lc = Cols::new(lb);
    drift_loop(lc.f(l.ix("x")), lc.f(l.ix("v")), lc.i32(l.ix("drift_count")), dt);
    0
}

#[inline(never)]
fn drift_loop(x: &mut [f64], v: &[f64], count: &mut [i32], dt: f64) {
    let n = x.len();
    let (v, count) = (&v[..n], &mut count[..n]);
    for i in 0..n {
        x[i] += dt * v[i];
        count[i] = count[i].wrapping_add(1);
    }
}

fn soa_kick2(l: &ViewSpec, lb: &mut SoABuffers, dt: f64) -> i64 {
    let mut lc = Cols::new(lb);
    let mut col = |name: &str| lc.f(l.ix(name));
    let rw = Kick2Rw {
        v: col("v"),
        u: col("u"),
        rates: col("rates"),
        t_kick: col("t_kick"),
        v_pred: col("v_pred"),
        u_pred: col("u_pred"),
        h_dt: col("h_dt"),
        v_sig: col("v_sig"),
    };
    let ro = Kick2Ro {
        dt_params: col("dt_params"),
        dt_max: col("dt_max"),
        ncount: col("ncount"),
        density: col("density"),
        pressure: col("pressure"),
        mass: col("mass"),
        h: col("h"),
    };
    kick2_loop(rw, ro, dt)
}

struct Kick2Rw<'a> {
    v: &'a mut [f64],
    u: &'a mut [f64],
    rates: &'a mut [f64],
    t_kick: &'a mut [f64],
    v_pred: &'a mut [f64],
    u_pred: &'a mut [f64],
    h_dt: &'a mut [f64],
    v_sig: &'a mut [f64],
}

struct Kick2Ro<'a> {
    dt_params: &'a [f64],
    dt_max: &'a [f64],
    ncount: &'a [f64],
    density: &'a [f64],
    pressure: &'a [f64],
    mass: &'a [f64],
    h: &'a [f64],
}

fn kick2_loop(rw: Kick2Rw<'_>, ro: Kick2Ro<'_>, dt: f64) -> i64 {
    let Kick2Rw {
        v,
        u,
        rates,
        t_kick,
        v_pred,
        u_pred,
        h_dt,
        v_sig,
    } = rw;
    let Kick2Ro {
        dt_params,
        dt_max,
        ncount,
        density,
        pressure,
        mass,
        h,
    } = ro;
    kick2_inner(
        v, u, rates, t_kick, v_pred, u_pred, h_dt, v_sig, dt_params, dt_max, ncount, density, pressure, mass, h, dt,
    )
}

#[allow(clippy::too_many_arguments)]
#[inline(never)]
fn kick2_inner(
    v: &mut [f64],
    u: &mut [f64],
    rates: &mut [f64],
    t_kick: &mut [f64],
    v_pred: &mut [f64],
    u_pred: &mut [f64],
    h_dt: &mut [f64],
    v_sig: &mut [f64],
    dt_params: &[f64],
    dt_max: &[f64],
    ncount: &[f64],
    density: &[f64],
    pressure: &[f64],
    mass: &[f64],
    h: &[f64],
    dt: f64,
) -> i64 {
    let n = v.len();
    let (u, rates, t_kick, v_pred, u_pred) = (
        &mut u[..n],
        &mut rates[..2 * n],
        &mut t_kick[..2 * n],
        &mut v_pred[..n],
        &mut u_pred[..n],
    );
    let (h_dt, v_sig, dt_params, dt_max) = (&mut h_dt[..n], &mut v_sig[..n], &dt_params[..2 * n], &dt_max[..n]);
    let (ncount, density, pressure, mass, h) = (&ncount[..n], &density[..n], &pressure[..n], &mass[..n], &h[..n]);
    let mut flagged = 0i64;
    for i in 0..n {
        let mut tk = [t_kick[2 * i], t_kick[2 * i + 1]];
        kick(&mut v[i], &mut u[i], &mut tk, [rates[2 * i], rates[2 * i + 1]], dt);
        t_kick[2 * i] = tk[0];
        t_kick[2 * i + 1] = tk[1];
        v_pred[i] = v[i];
        u_pred[i] = u[i];
        rates[2 * i] = 0.0;
        rates[2 * i + 1] = 0.0;
        h_dt[i] = 0.0;
        v_sig[i] = 0.0;
        flagged = flagged.wrapping_add(kick2_flags(
            dt,
            dt_params[2 * i],
            dt_max[i],
            ncount[i],
            density[i],
            pressure[i],
            mass[i],
            h[i],
        ));
    }
    flagged
}
