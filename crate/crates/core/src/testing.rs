//! Seeded random inputs for differential runs of KL entry points.
//!
//! Float fields and parameters lie in [0.5, 2), integers in [0, 4). Ptrlists
//! are duplicate-free subsets of their struct's pool in random order; two
//! ptrlists named in an `@assume_disjoint` of the entry share no record.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::disjoint_pairs;
use crate::ast::*;
use crate::interp::{Arg, Inputs, Record, Value};

/// Functions that can be run directly: a body, and only scalar, vector or
/// container parameters.
pub fn entry_points(prog: &Program) -> Vec<&FunctionDef> {
    prog.functions
        .iter()
        .filter(|f| {
            f.body.is_some()
                && f.params
                    .iter()
                    .all(|p| !matches!(p.ty, Type::StructRef(_) | Type::Buffer(_)))
        })
        .collect()
}

fn random_value(rng: &mut ChaCha8Rng, ty: FieldType) -> Value {
    match ty {
        FieldType::Scalar(ScalarKind::F64) => Value::F64(rng.gen_range(0.5..2.0)),
        FieldType::Scalar(ScalarKind::I64) => Value::I64(rng.gen_range(0..4)),
        FieldType::Scalar(ScalarKind::I32) => Value::I32(rng.gen_range(0..4)),
        FieldType::Scalar(ScalarKind::Bool) => Value::Bool(rng.gen()),
        FieldType::Vector(k) => Value::Vector((0..k).map(|_| rng.gen_range(0.5..2.0)).collect()),
    }
}

pub fn random_record(rng: &mut ChaCha8Rng, def: &StructDef) -> Record {
    def.fields.iter().map(|f| random_value(rng, f.ty)).collect()
}

/// Inputs for `f`, reproducible from `seed`.
pub fn random_inputs(prog: &Program, f: &FunctionDef, seed: u64) -> Inputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disjoint = HashSet::new();
    if let Some(b) = &f.body {
        disjoint_pairs(b, &mut disjoint);
    }
    let mut inputs = Inputs::default();
    for p in &f.params {
        if let Type::Container(ContainerKind::PtrList, s) = &p.ty {
            if !inputs.pools.contains_key(s) {
                let def = prog.struct_def(s).expect("checked struct");
                let n = rng.gen_range(6..=12);
                let recs = (0..n).map(|_| random_record(&mut rng, def)).collect();
                inputs.pools.insert(s.clone(), recs);
            }
        }
    }
    let mut taken: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for p in &f.params {
        let arg = match &p.ty {
            Type::Scalar(k) => Arg::Scalar(random_value(&mut rng, FieldType::Scalar(*k))),
            Type::Vector(k) => Arg::Scalar(random_value(&mut rng, FieldType::Vector(*k))),
            Type::Container(ContainerKind::Slice, s) => {
                let def = prog.struct_def(s).expect("checked struct");
                let n = rng.gen_range(4..=10);
                Arg::Slice((0..n).map(|_| random_record(&mut rng, def)).collect())
            }
            Type::Container(ContainerKind::PtrList, s) => {
                let pool = inputs.pools[s].len();
                let blocked: HashSet<usize> = taken
                    .iter()
                    .filter(|(other, _)| disjoint.contains(&(p.name.clone(), (*other).clone())))
                    .flat_map(|(_, ix)| ix.iter().copied())
                    .collect();
                let mut free: Vec<usize> = (0..pool).filter(|i| !blocked.contains(i)).collect();
                free.shuffle(&mut rng);
                let k = if free.is_empty() {
                    0
                } else {
                    rng.gen_range(1..=free.len())
                };
                free.truncate(k);
                taken.insert(p.name.clone(), free.clone());
                Arg::PtrList(free.into_iter().map(Some).collect())
            }
            Type::StructRef(_) | Type::Buffer(_) => continue,
        };
        inputs.args.insert(p.name.clone(), arg);
    }
    inputs
}

/// C `main` that feeds `entry` from stdin and prints the final state.
///
/// Stream format, whitespace separated: for every struct in declaration order
/// a record count and the records; then one item per parameter (slices as a
/// count plus records, ptrlists as a count plus pool indices with -1 for null,
/// scalars as one value). Floats travel as their IEEE bit patterns. The output
/// repeats the pools, then every slice parameter, then the return value.
pub fn c_harness(prog: &Program, entry: &FunctionDef) -> String {
    use crate::backends::c::c_ident;
    let mut out = String::from("\n#include <stdio.h>\n#include <stdlib.h>\n#include <inttypes.h>\n\n");
    out.push_str(
        "static __attribute__((unused)) double kl_rd_f64(void) { uint64_t b; if (scanf(\"%\" SCNu64, &b) != 1) exit(3); double d; memcpy(&d, &b, 8); return d; }\n\
         static __attribute__((unused)) int64_t kl_rd_i64(void) { int64_t v; if (scanf(\"%\" SCNd64, &v) != 1) exit(3); return v; }\n\
         static __attribute__((unused)) void kl_wr_f64(double d) { uint64_t b; memcpy(&b, &d, 8); printf(\"%\" PRIu64 \"\\n\", b); }\n\
         static __attribute__((unused)) void kl_wr_i64(int64_t v) { printf(\"%\" PRId64 \"\\n\", v); }\n\n",
    );
    for s in &prog.structs {
        let n = c_ident(&s.name);
        out.push_str(&format!("static void kl_read_{n}({n} *r) {{\n"));
        for f in &s.fields {
            let fname = c_ident(&f.name);
            match f.ty {
                FieldType::Scalar(ScalarKind::F64) => out.push_str(&format!("  r->{fname} = kl_rd_f64();\n")),
                FieldType::Scalar(k) => out.push_str(&format!("  r->{fname} = ({})kl_rd_i64();\n", c_scalar(k))),
                FieldType::Vector(k) => out.push_str(&format!(
                    "  for (int j = 0; j < {k}; j++) r->{fname}[j] = kl_rd_f64();\n"
                )),
            }
        }
        out.push_str("}\n");
        out.push_str(&format!("static void kl_write_{n}(const {n} *r) {{\n"));
        for f in &s.fields {
            let fname = c_ident(&f.name);
            match f.ty {
                FieldType::Scalar(ScalarKind::F64) => out.push_str(&format!("  kl_wr_f64(r->{fname});\n")),
                FieldType::Scalar(_) => out.push_str(&format!("  kl_wr_i64((int64_t)r->{fname});\n")),
                FieldType::Vector(k) => {
                    out.push_str(&format!("  for (int j = 0; j < {k}; j++) kl_wr_f64(r->{fname}[j]);\n"))
                }
            }
        }
        out.push_str("}\n");
    }
    out.push_str("\nint main(void) {\n");
    for s in &prog.structs {
        let n = c_ident(&s.name);
        out.push_str(&format!(
            "  int64_t pool_{n}_len = kl_rd_i64();\n  {n} *pool_{n} = malloc(sizeof({n}) * (pool_{n}_len + 1));\n  for (int64_t i = 0; i < pool_{n}_len; i++) kl_read_{n}(&pool_{n}[i]);\n"
        ));
    }
    let mut call = Vec::new();
    let mut slices = Vec::new();
    for p in &entry.params {
        let n = format!("arg_{}", c_ident(&p.name));
        match &p.ty {
            Type::Container(kind, s) => {
                let sn = c_ident(s);
                out.push_str(&format!("  int64_t {n}_len = kl_rd_i64();\n"));
                match kind {
                    ContainerKind::Slice => {
                        out.push_str(&format!(
                            "  {sn} *{n} = malloc(sizeof({sn}) * ({n}_len + 1));\n  for (int64_t i = 0; i < {n}_len; i++) kl_read_{sn}(&{n}[i]);\n"
                        ));
                        slices.push((n.clone(), sn));
                    }
                    ContainerKind::PtrList => out.push_str(&format!(
                        "  {sn} **{n} = malloc(sizeof({sn} *) * ({n}_len + 1));\n  for (int64_t i = 0; i < {n}_len; i++) {{ int64_t k = kl_rd_i64(); {n}[i] = k < 0 ? NULL : &pool_{sn}[k]; }}\n"
                    )),
                }
                call.push(n.clone());
                call.push(format!("{n}_len"));
            }
            Type::Scalar(ScalarKind::F64) => {
                out.push_str(&format!("  double {n} = kl_rd_f64();\n"));
                call.push(n);
            }
            Type::Scalar(k) => {
                out.push_str(&format!("  {} {n} = ({})kl_rd_i64();\n", c_scalar(*k), c_scalar(*k)));
                call.push(n);
            }
            Type::Vector(k) => {
                out.push_str(&format!(
                    "  double {n}[{k}];\n  for (int j = 0; j < {k}; j++) {n}[j] = kl_rd_f64();\n"
                ));
                call.push(n);
            }
            Type::StructRef(_) | Type::Buffer(_) => call.push("NULL".into()),
        }
    }
    let invoke = format!("{}({})", c_ident(&entry.name), call.join(", "));
    match entry.ret {
        Some(ScalarKind::F64) => out.push_str(&format!("  double ret = {invoke};\n")),
        Some(k) => out.push_str(&format!("  {} ret = {invoke};\n", c_scalar(k))),
        None => out.push_str(&format!("  {invoke};\n")),
    }
    for s in &prog.structs {
        let n = c_ident(&s.name);
        out.push_str(&format!(
            "  for (int64_t i = 0; i < pool_{n}_len; i++) kl_write_{n}(&pool_{n}[i]);\n"
        ));
    }
    for (n, sn) in &slices {
        out.push_str(&format!(
            "  for (int64_t i = 0; i < {n}_len; i++) kl_write_{sn}(&{n}[i]);\n"
        ));
    }
    match entry.ret {
        Some(ScalarKind::F64) => out.push_str("  kl_wr_f64(ret);\n"),
        Some(_) => out.push_str("  kl_wr_i64((int64_t)ret);\n"),
        None => {}
    }
    out.push_str("  return 0;\n}\n");
    out
}

fn c_scalar(k: ScalarKind) -> &'static str {
    match k {
        ScalarKind::F64 => "double",
        ScalarKind::I64 => "int64_t",
        ScalarKind::I32 => "int32_t",
        ScalarKind::Bool => "bool",
    }
}

fn write_value(out: &mut String, v: &Value) {
    use std::fmt::Write;
    match v {
        Value::F64(x) => {
            let _ = writeln!(out, "{}", x.to_bits());
        }
        Value::I64(x) => {
            let _ = writeln!(out, "{x}");
        }
        Value::I32(x) => {
            let _ = writeln!(out, "{x}");
        }
        Value::Bool(b) => {
            let _ = writeln!(out, "{}", *b as i64);
        }
        Value::Vector(xs) => xs.iter().for_each(|x| {
            let _ = writeln!(out, "{}", x.to_bits());
        }),
        _ => {}
    }
}

/// Input stream for [`c_harness`].
pub fn c_input(prog: &Program, entry: &FunctionDef, inputs: &Inputs) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for s in &prog.structs {
        let recs = inputs.pools.get(&s.name).map(Vec::as_slice).unwrap_or(&[]);
        let _ = writeln!(out, "{}", recs.len());
        recs.iter().flatten().for_each(|v| write_value(&mut out, v));
    }
    for p in &entry.params {
        match inputs.args.get(&p.name) {
            Some(Arg::Slice(recs)) => {
                let _ = writeln!(out, "{}", recs.len());
                recs.iter().flatten().for_each(|v| write_value(&mut out, v));
            }
            Some(Arg::PtrList(ix)) => {
                let _ = writeln!(out, "{}", ix.len());
                for i in ix {
                    let _ = writeln!(out, "{}", i.map_or(-1, |i| i as i64));
                }
            }
            Some(Arg::Scalar(v)) => write_value(&mut out, v),
            None => {}
        }
    }
    out
}

/// Parses the output stream of [`c_harness`] into interpreter outputs.
pub fn c_output(
    prog: &Program,
    entry: &FunctionDef,
    inputs: &Inputs,
    text: &str,
) -> Result<crate::interp::Outputs, String> {
    let mut words = text.split_whitespace();
    let mut read = |ty: FieldType| -> Result<Value, String> {
        let mut word = || words.next().ok_or_else(|| "truncated harness output".to_string());
        let bits = |s: &str| s.parse::<u64>().map_err(|e| format!("{s}: {e}"));
        let int = |s: &str| s.parse::<i64>().map_err(|e| format!("{s}: {e}"));
        Ok(match ty {
            FieldType::Scalar(ScalarKind::F64) => Value::F64(f64::from_bits(bits(word()?)?)),
            FieldType::Scalar(ScalarKind::I64) => Value::I64(int(word()?)?),
            FieldType::Scalar(ScalarKind::I32) => Value::I32(int(word()?)? as i32),
            FieldType::Scalar(ScalarKind::Bool) => Value::Bool(int(word()?)? != 0),
            FieldType::Vector(k) => {
                let mut v = Vec::with_capacity(k);
                for _ in 0..k {
                    v.push(f64::from_bits(bits(word()?)?));
                }
                Value::Vector(v)
            }
        })
    };
    let mut pools = BTreeMap::new();
    for s in &prog.structs {
        let n = inputs.pools.get(&s.name).map_or(0, Vec::len);
        let mut recs = Vec::with_capacity(n);
        for _ in 0..n {
            let mut r = Vec::with_capacity(s.fields.len());
            for f in &s.fields {
                r.push(read(f.ty)?);
            }
            recs.push(r);
        }
        if inputs.pools.contains_key(&s.name) {
            pools.insert(s.name.clone(), recs);
        }
    }
    let mut slices = BTreeMap::new();
    for p in &entry.params {
        if let (Type::Container(ContainerKind::Slice, s), Some(Arg::Slice(recs))) = (&p.ty, inputs.args.get(&p.name)) {
            let def = prog.struct_def(s).expect("checked struct");
            let mut out = Vec::with_capacity(recs.len());
            for _ in 0..recs.len() {
                let mut r = Vec::with_capacity(def.fields.len());
                for f in &def.fields {
                    r.push(read(f.ty)?);
                }
                out.push(r);
            }
            slices.insert(p.name.clone(), out);
        }
    }
    let ret = match entry.ret {
        Some(k) => Some(read(FieldType::Scalar(k))?),
        None => None,
    };
    Ok(crate::interp::Outputs { pools, slices, ret })
}
