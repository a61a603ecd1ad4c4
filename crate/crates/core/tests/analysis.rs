use std::collections::BTreeSet;

use proptest::prelude::*;
use soaview_core::analysis::analyze_program;
use soaview_core::ast::StructDef;
use soaview_core::{analyze, parse, CompileError, FieldClass};

fn corpus(name: &str) -> String {
    std::fs::read_to_string(format!("{}/corpus/{name}.kl", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn set(v: &[String]) -> BTreeSet<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn basic_sets() {
    let prog = parse(&corpus("basic")).unwrap();
    let a = analyze(&prog).unwrap();
    assert_eq!(a.loops.len(), 1);
    let s = &a.loops[0].sets;
    assert_eq!(s.a_in, ["a", "b"]);
    assert_eq!(s.a_out, ["a"]);
    assert_eq!((s.byte_in, s.byte_out), (16, 8));
    assert_eq!(s.class("a"), Some(FieldClass::ReadWrite));
    assert_eq!(s.class("b"), Some(FieldClass::ReadOnly));
    assert_eq!(s.class("unused"), None);
}

#[test]
fn empty_body_has_empty_sets() {
    let prog = parse(&corpus("empty_body")).unwrap();
    let a = analyze(&prog).unwrap();
    assert!(a.loops[0].sets.a_in.is_empty());
    assert!(a.loops[0].sets.a_out.is_empty());
}

#[test]
fn call_graph_fixpoint_reaches_through_two_levels() {
    let prog = parse(&corpus("call_chain")).unwrap();
    let a = analyze(&prog).unwrap();
    let s = &a.loops[0].sets;
    assert!(s.reads("mass") && s.writes("mass"));
    assert!(s.reads("x"));
    assert!(!s.reads("tag") && !s.writes("tag"));
}

#[test]
fn conditional_accesses_enter_the_sets() {
    let prog = parse(&corpus("cond_write")).unwrap();
    let a = analyze(&prog).unwrap();
    let l = &a.loops[0];
    assert!(l.sets.writes("c"));
    assert!(!l.must_write.contains(&"c".to_string()));
    for f in ["d", "n", "flag"] {
        assert!(l.must_write.contains(&f.to_string()), "{f}");
    }
}

/// Expected per-kernel sets: (kernel, |A_in|, byte_in, |A_out|, byte_out).
const TABLE1: &[(&str, usize, usize, usize, usize)] = &[
    ("density", 9, 88, 6, 48),
    ("force", 13, 128, 4, 40),
    ("drift", 3, 20, 2, 12),
    ("kick1", 4, 48, 3, 32),
    ("kick2", 11, 112, 8, 80),
];

#[test]
fn table1_rows_are_reproduced() {
    let prog = parse(&corpus("sph")).unwrap();
    let a = analyze(&prog).unwrap();
    for &(k, nin, bin, nout, bout) in TABLE1 {
        let s = &a.kernels.iter().find(|s| s.function == k).unwrap().sets;
        assert_eq!(
            (s.a_in.len(), s.byte_in, s.a_out.len(), s.byte_out),
            (nin, bin, nout, bout),
            "{k}"
        );
    }
    assert_eq!(prog.struct_def("Particle").unwrap().size(), 272);
}

/// Independent tally: scan the text of each kernel for `p.f` / `q.f`
/// occurrences and classify each as a store, a compound update or a load.
fn textual_sets(src: &str, kernel: &str) -> (BTreeSet<String>, BTreeSet<String>) {
    let start = src.find(&format!("fn {kernel}(")).unwrap();
    let rest = &src[start + 3..];
    let end = rest.find("\nfn ").map_or(rest.len(), |e| e);
    let body = &rest[..end];
    let bytes = body.as_bytes();
    let (mut reads, mut writes) = (BTreeSet::new(), BTreeSet::new());
    let ident = |c: u8| c.is_ascii_alphanumeric() || c == b'_';
    let mut i = 0;
    while i + 2 < bytes.len() {
        let binder = (bytes[i] == b'p' || bytes[i] == b'q') && bytes[i + 1] == b'.';
        if binder && (i == 0 || !ident(bytes[i - 1])) {
            let mut j = i + 2;
            while j < bytes.len() && ident(bytes[j]) {
                j += 1;
            }
            let field = body[i + 2..j].to_string();
            let mut k = j;
            if k < bytes.len() && bytes[k] == b'[' {
                while bytes[k] != b']' {
                    k += 1;
                }
                k += 1;
            }
            let tail = body[k..].trim_start();
            let line_start = body[..i].rfind('\n').map_or(0, |n| n + 1);
            let at_stmt_start = body[line_start..i].trim().is_empty();
            if at_stmt_start && tail.starts_with('=') && !tail.starts_with("==") {
                writes.insert(field);
            } else if at_stmt_start && ["+=", "-=", "*=", "/="].iter().any(|op| tail.starts_with(op)) {
                writes.insert(field.clone());
                reads.insert(field);
            } else {
                reads.insert(field);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    (reads, writes)
}

fn bytes(def: &StructDef, fields: &BTreeSet<String>) -> usize {
    fields.iter().map(|f| def.field(f).unwrap().size()).sum()
}

#[test]
fn table1_matches_textual_tally() {
    let src = corpus("sph");
    let prog = parse(&src).unwrap();
    let def = prog.struct_def("Particle").unwrap();
    let a = analyze(&prog).unwrap();
    for &(k, ..) in TABLE1 {
        let (r, w) = textual_sets(&src, k);
        let s = &a.kernels.iter().find(|s| s.function == k).unwrap().sets;
        let got_in: BTreeSet<String> = s.a_in.iter().cloned().collect();
        let got_out: BTreeSet<String> = s.a_out.iter().cloned().collect();
        assert_eq!(got_in, r, "{k} reads");
        assert_eq!(got_out, w, "{k} writes");
        assert_eq!(s.byte_in, bytes(def, &r), "{k}");
        assert_eq!(s.byte_out, bytes(def, &w), "{k}");
    }
}

#[test]
fn escape_is_rejected() {
    let prog = parse(&corpus("escape")).unwrap();
    let e = analyze(&prog).unwrap_err();
    assert!(matches!(e, CompileError::Escape { .. }), "{e}");
    assert!(e.to_string().starts_with("EscapeError"));
}

#[test]
fn aliasing_needs_a_disjointness_assertion() {
    let bad = parse(&corpus("alias_error")).unwrap();
    let e = analyze(&bad).unwrap_err();
    let CompileError::AliasAmbiguity { detail, .. } = &e else {
        panic!("{e}")
    };
    assert!(detail.conflict.contains(&"density".to_string()), "{e}");
    assert!(e.to_string().starts_with("AliasAmbiguityError"));
    let ok = parse(&corpus("alias_ok")).unwrap();
    analyze(&ok).unwrap();
}

#[test]
fn stale_hoist_is_rejected() {
    let prog = parse(&corpus("stale_hoist")).unwrap();
    let e = analyze(&prog).unwrap_err();
    assert!(matches!(e, CompileError::StaleView { .. }), "{e}");
    // Sets are still computable without the checks.
    analyze_program(&prog).unwrap();
}

#[test]
fn nested_views_without_shared_writes_pass() {
    for name in ["sph", "sph_offload", "nested_hoist"] {
        analyze(&parse(&corpus(name)).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn return_inside_a_view_is_unsupported() {
    let src = "struct S { a: f64; }\nfn f(c: slice<S>) -> f64 {\n  @soa_convert\n  for p in c {\n    return p.a;\n  }\n  return 0.0;\n}\n";
    let e = analyze(&parse(src).unwrap()).unwrap_err();
    assert!(matches!(e, CompileError::Unsupported { .. }), "{e}");
}

#[test]
fn classification_partitions_touched_fields() {
    for name in ["basic", "call_chain", "cond_write", "sph", "nested_hoist"] {
        let prog = parse(&corpus(name)).unwrap();
        let a = analyze(&prog).unwrap();
        for l in &a.loops {
            let def = prog.struct_def(&l.sets.strukt).unwrap();
            let union: BTreeSet<&str> = set(&l.sets.a_in).union(&set(&l.sets.a_out)).copied().collect();
            let classes = l.sets.classification(def);
            assert_eq!(classes.len(), union.len());
            for (f, c) in classes {
                let (r, w) = (l.sets.reads(&f), l.sets.writes(&f));
                let want = match (r, w) {
                    (true, true) => FieldClass::ReadWrite,
                    (true, false) => FieldClass::ReadOnly,
                    (false, true) => FieldClass::WriteOnly,
                    _ => unreachable!(),
                };
                assert_eq!(c, want, "{name} {f}");
            }
            let sum = |v: &[String]| v.iter().map(|f| def.field(f).unwrap().size()).sum::<usize>();
            assert_eq!(l.sets.byte_in, sum(&l.sets.a_in));
            assert_eq!(l.sets.byte_out, sum(&l.sets.a_out));
        }
    }
}

/// Loop body statements drawn from reads and writes of fields a..d.
fn stmt() -> impl Strategy<Value = String> {
    let field = prop::sample::select(vec!["a", "b", "c", "d"]);
    prop_oneof![
        (field.clone(), field.clone()).prop_map(|(x, y)| format!("p.{x} = p.{y};")),
        (field.clone(), field.clone()).prop_map(|(x, y)| format!("p.{x} += p.{y} * 2.0;")),
        (field.clone(), field.clone()).prop_map(|(x, y)| format!("if p.{y} > 1.0 {{ p.{x} = 0.5; }}")),
        field.clone().prop_map(|x| format!("let t = p.{x};")),
        field.prop_map(|x| format!("p.{x} = 1.0;")),
    ]
}

fn program(stmts: &[String]) -> String {
    format!(
        "struct S {{ a: f64; b: f64; c: f64; d: f64; }}\nfn k(c: slice<S>) {{\n  @soa_convert\n  for p in c {{\n    {}\n  }}\n}}\n",
        stmts.iter().map(|s| format!("if true {{ {s} }}")).collect::<Vec<_>>().join("\n    ")
    )
}

proptest! {
    #[test]
    fn adding_a_statement_never_shrinks_the_sets(body in prop::collection::vec(stmt(), 0..6), extra in stmt()) {
        let before = analyze(&parse(&program(&body)).unwrap()).unwrap();
        let mut more = body.clone();
        more.push(extra);
        let after = analyze(&parse(&program(&more)).unwrap()).unwrap();
        let (b, a) = (&before.loops[0].sets, &after.loops[0].sets);
        prop_assert!(set(&b.a_in).is_subset(&set(&a.a_in)));
        prop_assert!(set(&b.a_out).is_subset(&set(&a.a_out)));
    }

    #[test]
    fn analysis_is_idempotent(body in prop::collection::vec(stmt(), 0..6)) {
        let prog = parse(&program(&body)).unwrap();
        let x = analyze(&prog).unwrap();
        let y = analyze(&prog).unwrap();
        prop_assert_eq!(&x.loops[0].sets, &y.loops[0].sets);
    }
}
