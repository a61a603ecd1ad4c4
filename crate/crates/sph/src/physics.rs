//! Per-particle and per-pair arithmetic of the five kernels, shared by the
//! AoS and SoA paths. Operation order follows the corpus kernels exactly so
//! every path agrees bitwise with the interpreter.

use num_traits::Float;

use crate::spline::{dm5, m5};

fn c<T: Float>(x: f64) -> T {
    T::from(x).expect("representable constant")
}

/// `a < b ? a : b`, matching KL `min`.
#[inline(always)]
pub fn kmin<T: Float>(a: T, b: T) -> T {
    if a < b {
        a
    } else {
        b
    }
}

/// `a > b ? a : b`, matching KL `max`.
#[inline(always)]
pub fn kmax<T: Float>(a: T, b: T) -> T {
    if a > b {
        a
    } else {
        b
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DensityAcc<T> {
    pub density: T,
    pub ncount: T,
    pub drho_dh: T,
    pub dn_dh: T,
}

/// Adds the contribution of neighbour `q` to `p`'s sums. With `MASK`, the
/// contribution is always computed and multiplied by the 0/1 guard.
#[inline(always)]
pub fn density_pair<T: Float, const MASK: bool>(acc: &mut DensityAcc<T>, px: T, ph: T, qx: T, qmass: T) {
    let r = (px - qx).abs();
    let inside = r < c::<T>(2.5) * ph;
    if MASK || inside {
        let s = r / ph;
        let w = m5(s) / (c::<T>(24.0) * ph);
        let dwdh = -(m5(s) + s * dm5(s)) / (c::<T>(24.0) * ph * ph);
        if MASK {
            let m = if inside { T::one() } else { T::zero() };
            acc.density = acc.density + qmass * w * m;
            acc.ncount = acc.ncount + w * m;
            acc.drho_dh = acc.drho_dh + qmass * dwdh * m;
            acc.dn_dh = acc.dn_dh + dwdh * m;
        } else {
            acc.density = acc.density + qmass * w;
            acc.ncount = acc.ncount + w;
            acc.drho_dh = acc.drho_dh + qmass * dwdh;
            acc.dn_dh = acc.dn_dh + dwdh;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityOut<T> {
    pub pressure: T,
    pub h: T,
    pub unconverged: bool,
}

/// Pressure and one Newton step of `5 h n = target` on the smoothing length,
/// clamped to a factor of two and to `[h_control[0], h_control[1]]`.
#[inline(always)]
pub fn density_finish<T: Float>(acc: &DensityAcc<T>, h: T, h_control: [T; 3], u_pred: T) -> DensityOut<T> {
    let pressure = c::<T>(0.4) * acc.density * u_pred;
    let g = c::<T>(5.0) * h * acc.ncount - h_control[2];
    let dg = c::<T>(5.0) * acc.ncount + c::<T>(5.0) * h * acc.dn_dh;
    let mut hn = h;
    if dg != T::zero() {
        hn = h - g / dg;
    }
    hn = kmin(kmax(hn, c::<T>(0.5) * h), c::<T>(2.0) * h);
    hn = kmin(kmax(hn, h_control[0]), h_control[1]);
    let unconverged = (hn - h).abs() > c::<T>(0.0001) * h;
    DensityOut {
        pressure,
        h: hn,
        unconverged,
    }
}

/// Per-particle terms of the force kernel that do not depend on the neighbour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceSelf<T> {
    pub x: T,
    pub h: T,
    pub v_pred: T,
    pub pp: T,
    pub c: T,
    pub fac: T,
}

/// Neighbour state read by the force kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceOther<T> {
    pub x: T,
    pub h: T,
    pub mass: T,
    pub drho_dh: T,
    pub density: T,
    pub pressure: T,
    pub v_pred: T,
    pub u_pred: T,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ForceAcc<T> {
    pub rates: [T; 2],
    pub h_dt: T,
    pub v_sig: T,
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
pub fn force_self<T: Float>(
    x: T,
    h: T,
    v_pred: T,
    drho_dh: T,
    density: T,
    pressure: T,
    u_pred: T,
    ncount: T,
    dn_dh: T,
) -> ForceSelf<T> {
    let omega_p = kmax(T::one() + h * drho_dh / density, c(0.1));
    let pp = pressure / (omega_p * density * density);
    let cp = (c::<T>(1.4) * c::<T>(0.4) * u_pred).sqrt();
    let den = ncount + h * dn_dh;
    let mut fac = T::zero();
    if den != T::zero() {
        fac = h / den;
    }
    ForceSelf {
        x,
        h,
        v_pred,
        pp,
        c: cp,
        fac,
    }
}

#[inline(always)]
pub fn force_pair<T: Float, const MASK: bool>(acc: &mut ForceAcc<T>, p: &ForceSelf<T>, q: &ForceOther<T>) {
    let dx = p.x - q.x;
    let r = dx.abs();
    let inside = r > T::zero() && r < c::<T>(2.5) * kmax(p.h, q.h);
    if MASK || inside {
        // Masked-out pairs use a unit distance so every term stays finite.
        let r = if MASK && !inside { T::one() } else { r };
        let omega_q = kmax(T::one() + q.h * q.drho_dh / q.density, c(0.1));
        let pq = q.pressure / (omega_q * q.density * q.density);
        let dwp = dm5(r / p.h) / (c::<T>(24.0) * p.h * p.h);
        let dwq = dm5(r / q.h) / (c::<T>(24.0) * q.h * q.h);
        let ex = dx / r;
        let dv = p.v_pred - q.v_pred;
        let cq = p.c + (c::<T>(1.4) * c::<T>(0.4) * q.u_pred).sqrt();
        if MASK {
            let m = if inside { T::one() } else { T::zero() };
            acc.rates[0] = acc.rates[0] - q.mass * (p.pp * dwp + pq * dwq) * ex * m;
            acc.rates[1] = acc.rates[1] + q.mass * p.pp * dv * dwp * ex * m;
            acc.h_dt = acc.h_dt - p.fac * dv * dwp * ex * m;
            acc.v_sig = kmax(acc.v_sig, cq * m);
        } else {
            acc.rates[0] = acc.rates[0] - q.mass * (p.pp * dwp + pq * dwq) * ex;
            acc.rates[1] = acc.rates[1] + q.mass * p.pp * dv * dwp * ex;
            acc.h_dt = acc.h_dt - p.fac * dv * dwp * ex;
            acc.v_sig = kmax(acc.v_sig, cq);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceOut<T> {
    pub rates: [T; 2],
    pub h_dt: T,
    pub v_sig: T,
    pub dt_max: T,
}

#[inline(always)]
pub fn force_finish<T: Float>(acc: &ForceAcc<T>, h: T, h_max: T) -> ForceOut<T> {
    let mut h_dt = acc.h_dt;
    let dt_max = c::<T>(0.3) * h / kmax(acc.v_sig, c(1e-300));
    if h >= h_max {
        h_dt = kmin(h_dt, T::zero());
    }
    ForceOut {
        rates: acc.rates,
        h_dt,
        v_sig: acc.v_sig,
        dt_max,
    }
}

/// Half-kick of velocity, internal energy and the kick clock.
#[inline(always)]
pub fn kick<T: Float>(v: &mut T, u: &mut T, t_kick: &mut [T; 2], rates: [T; 2], dt: T) {
    *v = *v + c::<T>(0.5) * dt * rates[0];
    *u = *u + c::<T>(0.5) * dt * rates[1];
    t_kick[0] = t_kick[0] + c::<T>(0.5) * dt;
    t_kick[1] = c::<T>(0.5) * dt;
}

/// Number of sanity and time-step checks failed after the second kick.
/// Evaluated without short-circuiting; the result equals the corpus count.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
pub fn kick2_flags<T: Float>(dt: T, dt_param: T, dt_max: T, ncount: T, density: T, pressure: T, mass: T, h: T) -> i64 {
    let step = c::<T>(0.5) * dt > dt_param * dt_max;
    let empty = ncount <= T::zero();
    let bad = (density <= T::zero()) | (pressure < T::zero()) | (mass <= T::zero()) | (h <= T::zero());
    step as i64 + empty as i64 + bad as i64
}
