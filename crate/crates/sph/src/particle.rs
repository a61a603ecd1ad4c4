//! The 272-byte particle record, field-for-field identical to the corpus
//! `Particle` struct.

use soaview_core::ast::StructDef;
use soaview_core::interp::Record;
use soaview_core::Value;

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Particle {
    pub x: f64,
    pub v: f64,
    pub v_pred: f64,
    /// Acceleration and internal-energy rate.
    pub rates: [f64; 2],
    pub mass: f64,
    pub h: f64,
    /// Minimum h, maximum h, target neighbour count.
    pub h_control: [f64; 3],
    pub density: f64,
    pub pressure: f64,
    pub u: f64,
    pub u_pred: f64,
    pub ncount: f64,
    pub dn_dh: f64,
    pub drho_dh: f64,
    pub h_dt: f64,
    pub v_sig: f64,
    pub dt_max: f64,
    /// Courant factor and a spare time-step parameter.
    pub dt_params: [f64; 2],
    pub t_kick: [f64; 2],
    pub id: i64,
    pub cell: i64,
    pub drift_count: i32,
    pub tree_level: i32,
    pub owner: i64,
    pub scratch: [f64; 6],
}

pub const PARTICLE_SIZE: usize = 272;

const _: () = assert!(std::mem::size_of::<Particle>() == PARTICLE_SIZE);

/// Byte view of one particle. The struct has no padding.
pub fn as_bytes(p: &Particle) -> &[u8] {
    // SAFETY: repr(C), size checked above, all fields are plain numbers laid
    // out without padding (offsets are checked against the corpus in tests).
    unsafe { std::slice::from_raw_parts((p as *const Particle).cast::<u8>(), PARTICLE_SIZE) }
}

pub fn as_bytes_mut(p: &mut Particle) -> &mut [u8] {
    // SAFETY: as in `as_bytes`; every byte pattern is a valid Particle.
    unsafe { std::slice::from_raw_parts_mut((p as *mut Particle).cast::<u8>(), PARTICLE_SIZE) }
}

pub fn slice_bytes(ps: &[Particle]) -> &[u8] {
    // SAFETY: contiguous padding-free records.
    unsafe { std::slice::from_raw_parts(ps.as_ptr().cast::<u8>(), std::mem::size_of_val(ps)) }
}

pub fn slice_bytes_mut(ps: &mut [Particle]) -> &mut [u8] {
    // SAFETY: as in `slice_bytes`; the borrow is unique.
    unsafe { std::slice::from_raw_parts_mut(ps.as_mut_ptr().cast::<u8>(), std::mem::size_of_val(ps)) }
}

/// Byte offset of every field, by corpus name.
pub fn field_offsets() -> Vec<(&'static str, usize)> {
    macro_rules! offs {
        ($($f:ident),*) => { vec![$((stringify!($f), std::mem::offset_of!(Particle, $f))),*] };
    }
    offs!(
        x,
        v,
        v_pred,
        rates,
        mass,
        h,
        h_control,
        density,
        pressure,
        u,
        u_pred,
        ncount,
        dn_dh,
        drho_dh,
        h_dt,
        v_sig,
        dt_max,
        dt_params,
        t_kick,
        id,
        cell,
        drift_count,
        tree_level,
        owner,
        scratch
    )
}

impl Particle {
    /// Every scalar of the record, vectors flattened, integers widened.
    pub fn numbers(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::with_capacity(34);
        for (name, _) in field_offsets() {
            match self.get(name).expect("known field") {
                Value::F64(x) => out.push((name, x)),
                Value::I64(x) => out.push((name, x as f64)),
                Value::I32(x) => out.push((name, x as f64)),
                Value::Vector(xs) => out.extend(xs.into_iter().map(|x| (name, x))),
                _ => unreachable!("records hold numbers only"),
            }
        }
        out
    }

    fn get(&self, name: &str) -> Option<Value> {
        let f = Value::F64;
        let vct = |a: &[f64]| Value::Vector(a.to_vec());
        Some(match name {
            "x" => f(self.x),
            "v" => f(self.v),
            "v_pred" => f(self.v_pred),
            "rates" => vct(&self.rates),
            "mass" => f(self.mass),
            "h" => f(self.h),
            "h_control" => vct(&self.h_control),
            "density" => f(self.density),
            "pressure" => f(self.pressure),
            "u" => f(self.u),
            "u_pred" => f(self.u_pred),
            "ncount" => f(self.ncount),
            "dn_dh" => f(self.dn_dh),
            "drho_dh" => f(self.drho_dh),
            "h_dt" => f(self.h_dt),
            "v_sig" => f(self.v_sig),
            "dt_max" => f(self.dt_max),
            "dt_params" => vct(&self.dt_params),
            "t_kick" => vct(&self.t_kick),
            "id" => Value::I64(self.id),
            "cell" => Value::I64(self.cell),
            "drift_count" => Value::I32(self.drift_count),
            "tree_level" => Value::I32(self.tree_level),
            "owner" => Value::I64(self.owner),
            "scratch" => vct(&self.scratch),
            _ => return None,
        })
    }

    fn set(&mut self, name: &str, val: &Value) -> Option<()> {
        fn vec_into<const K: usize>(dst: &mut [f64; K], v: &Value) -> Option<()> {
            match v {
                Value::Vector(xs) if xs.len() == K => {
                    dst.copy_from_slice(xs);
                    Some(())
                }
                _ => None,
            }
        }
        let f = |dst: &mut f64| match val {
            Value::F64(x) => {
                *dst = *x;
                Some(())
            }
            _ => None,
        };
        match (name, val) {
            ("x", _) => f(&mut self.x),
            ("v", _) => f(&mut self.v),
            ("v_pred", _) => f(&mut self.v_pred),
            ("rates", _) => vec_into(&mut self.rates, val),
            ("mass", _) => f(&mut self.mass),
            ("h", _) => f(&mut self.h),
            ("h_control", _) => vec_into(&mut self.h_control, val),
            ("density", _) => f(&mut self.density),
            ("pressure", _) => f(&mut self.pressure),
            ("u", _) => f(&mut self.u),
            ("u_pred", _) => f(&mut self.u_pred),
            ("ncount", _) => f(&mut self.ncount),
            ("dn_dh", _) => f(&mut self.dn_dh),
            ("drho_dh", _) => f(&mut self.drho_dh),
            ("h_dt", _) => f(&mut self.h_dt),
            ("v_sig", _) => f(&mut self.v_sig),
            ("dt_max", _) => f(&mut self.dt_max),
            ("dt_params", _) => vec_into(&mut self.dt_params, val),
            ("t_kick", _) => vec_into(&mut self.t_kick, val),
            ("id", Value::I64(x)) => {
                let _: () = self.id = *x;
                Some(())
            }
            ("cell", Value::I64(x)) => {
                let _: () = self.cell = *x;
                Some(())
            }
            ("drift_count", Value::I32(x)) => {
                let _: () = self.drift_count = *x;
                Some(())
            }
            ("tree_level", Value::I32(x)) => {
                let _: () = self.tree_level = *x;
                Some(())
            }
            ("owner", Value::I64(x)) => {
                let _: () = self.owner = *x;
                Some(())
            }
            ("scratch", _) => vec_into(&mut self.scratch, val),
            _ => None,
        }
    }

    /// Interpreter record in the field order of `def`.
    pub fn to_record(&self, def: &StructDef) -> Record {
        def.fields
            .iter()
            .map(|f| self.get(&f.name).unwrap_or_else(|| Value::zero(f.ty)))
            .collect()
    }

    /// Inverse of [`Particle::to_record`]; `None` on a shape mismatch.
    pub fn from_record(def: &StructDef, rec: &Record) -> Option<Particle> {
        let mut p = Particle::default();
        for (f, v) in def.fields.iter().zip(rec) {
            p.set(&f.name, v)?;
        }
        Some(p)
    }
}

/// Whether `def` describes exactly this record: names, types and offsets.
pub fn matches_struct(def: &StructDef) -> bool {
    let offs = field_offsets();
    def.size() == PARTICLE_SIZE
        && def.fields.len() == offs.len()
        && def.fields.iter().zip(&offs).all(|(f, (n, o))| {
            f.name == *n && f.offset == *o && f.ty.size() == Particle::default().get(n).map_or(0, |v| value_size(&v))
        })
}

fn value_size(v: &Value) -> usize {
    match v {
        Value::F64(_) | Value::I64(_) => 8,
        Value::I32(_) => 4,
        Value::Vector(xs) => 8 * xs.len(),
        _ => 0,
    }
}
