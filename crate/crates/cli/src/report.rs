//! Formatting of `check` and `bench` reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Value as Json};

use soaview_core::{AccessSets, Analysis, Program};
use soaview_sph::bench::median;
use soaview_sph::BenchRecord;

fn set(fields: &[String]) -> String {
    fields.join(",")
}

fn classes(prog: &Program, s: &AccessSets) -> Vec<(String, &'static str)> {
    let def = prog.struct_def(&s.strukt).expect("analyzed struct");
    s.classification(def).into_iter().map(|(f, c)| (f, c.short())).collect()
}

/// `loop @line:col  A_in={..} (NB)  A_out={..} (NB)` per annotated loop, in
/// source order.
pub fn text(prog: &Program, an: &Analysis, kernels: bool) -> String {
    let mut out = String::new();
    for l in &an.loops {
        let s = &l.sets;
        let _ = writeln!(
            out,
            "loop @{}:{}  A_in={{{}}} ({}B)  A_out={{{}}} ({}B)",
            l.span.line,
            l.span.col,
            set(&s.a_in),
            s.byte_in,
            set(&s.a_out),
            s.byte_out
        );
    }
    if kernels {
        for k in &an.kernels {
            let s = &k.sets;
            let _ = writeln!(
                out,
                "kernel {}  A_in={{{}}} ({}B)  A_out={{{}}} ({}B)",
                k.function,
                set(&s.a_in),
                s.byte_in,
                set(&s.a_out),
                s.byte_out
            );
        }
        for d in &prog.structs {
            let _ = writeln!(out, "struct {}  {} fields ({}B)", d.name, d.fields.len(), d.size());
        }
    }
    out
}

pub const TSV_HEADER: &str = "kind\tname\tline\tcol\tstruct\tn_in\tbyte_in\tn_out\tbyte_out\ta_in\ta_out\tclasses";

fn tsv_row(out: &mut String, prog: &Program, kind: &str, name: &str, pos: (u32, u32), s: &AccessSets) {
    let cls: Vec<String> = classes(prog, s).into_iter().map(|(f, c)| format!("{f}:{c}")).collect();
    let _ = writeln!(
        out,
        "{kind}\t{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        pos.0,
        pos.1,
        s.strukt,
        s.a_in.len(),
        s.byte_in,
        s.a_out.len(),
        s.byte_out,
        set(&s.a_in),
        set(&s.a_out),
        cls.join(",")
    );
}

/// One row per loop (named by its function), then per kernel when asked.
pub fn tsv(prog: &Program, an: &Analysis, kernels: bool) -> String {
    let mut out = format!("{TSV_HEADER}\n");
    for l in &an.loops {
        tsv_row(&mut out, prog, "loop", &l.function, (l.span.line, l.span.col), &l.sets);
    }
    if kernels {
        for k in &an.kernels {
            let f = prog.function(&k.function).expect("analyzed function");
            tsv_row(
                &mut out,
                prog,
                "kernel",
                &k.function,
                (f.span.line, f.span.col),
                &k.sets,
            );
        }
    }
    out
}

fn sets_json(prog: &Program, s: &AccessSets) -> Json {
    let cls: serde_json::Map<String, Json> = classes(prog, s).into_iter().map(|(f, c)| (f, json!(c))).collect();
    json!({
        "struct": s.strukt,
        "a_in": s.a_in,
        "a_out": s.a_out,
        "byte_in": s.byte_in,
        "byte_out": s.byte_out,
        "classes": cls,
    })
}

pub fn json(prog: &Program, an: &Analysis) -> Json {
    let loops: Vec<Json> = an
        .loops
        .iter()
        .map(|l| {
            let mut j = sets_json(prog, &l.sets);
            j["function"] = json!(l.function);
            j["line"] = json!(l.span.line);
            j["col"] = json!(l.span.col);
            j["container"] = json!(l.container);
            j
        })
        .collect();
    let kernels: Vec<Json> = an
        .kernels
        .iter()
        .map(|k| {
            let mut j = sets_json(prog, &k.sets);
            j["function"] = json!(k.function);
            j["loops"] = json!(k.loops);
            j
        })
        .collect();
    let structs: Vec<Json> = prog
        .structs
        .iter()
        .map(|d| json!({"name": d.name, "fields": d.fields.len(), "size": d.size()}))
        .collect();
    json!({"loops": loops, "kernels": kernels, "structs": structs})
}

/// Medians over repetitions per (kernel, variant, ppc, n).
pub fn bench_summary(recs: &[BenchRecord]) -> String {
    let mut groups: BTreeMap<(String, String, usize, usize), Vec<&BenchRecord>> = BTreeMap::new();
    for r in recs {
        groups
            .entry((r.variant.to_string(), r.kernel.to_string(), r.n, r.ppc))
            .or_default()
            .push(r);
    }
    let mut out = format!(
        "{:<8} {:<40} {:>6} {:>8} {:>14} {:>10}\n",
        "kernel", "variant", "ppc", "n", "ns/update", "conv.share"
    );
    for ((variant, kernel, n, ppc), rs) in groups {
        let ns: Vec<f64> = rs.iter().map(|r| r.ns_per_update).collect();
        let share: Vec<f64> = rs.iter().map(|r| r.conversion_share()).collect();
        let _ = writeln!(
            out,
            "{kernel:<8} {variant:<40} {ppc:>6} {n:>8} {:>14.1} {:>10.4}",
            median(&ns),
            median(&share)
        );
    }
    out
}
