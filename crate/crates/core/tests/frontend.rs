use proptest::prelude::*;
use soaview_core::ast::*;
use soaview_core::backends::emit_kl;
use soaview_core::parse;

fn corpus(name: &str) -> String {
    std::fs::read_to_string(format!("{}/corpus/{name}.kl", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

const CORPUS: &[&str] = &[
    "basic",
    "basic_target",
    "basic_offload",
    "empty_body",
    "call_chain",
    "cond_write",
    "escape",
    "alias_error",
    "alias_ok",
    "stale_hoist",
    "nested_hoist",
    "sph",
    "sph_offload",
];

#[test]
fn corpus_parses_and_pretty_print_is_a_fixpoint() {
    for name in CORPUS {
        let prog = parse(&corpus(name)).unwrap_or_else(|d| panic!("{name}: {d}"));
        let once = emit_kl(&prog);
        let again = parse(&once).unwrap_or_else(|d| panic!("{name} reparse: {d}"));
        assert_eq!(again, prog, "{name}");
        assert_eq!(emit_kl(&again), once, "{name}");
    }
}

#[test]
fn empty_source_is_an_empty_program() {
    let prog = parse("").unwrap();
    assert!(prog.is_empty());
    assert_eq!(emit_kl(&prog), "");
}

#[test]
fn record_layout_is_packed() {
    let prog = parse(&corpus("sph")).unwrap();
    let p = prog.struct_def("Particle").unwrap();
    assert_eq!(p.size(), 272);
    let mut offset = 0;
    for f in &p.fields {
        assert_eq!(f.offset, offset, "{}", f.name);
        offset += f.size();
    }
}

#[test]
fn basic_annotation_position() {
    let prog = parse(&corpus("basic")).unwrap();
    let f = prog.function("kernel").unwrap();
    let StmtKind::For(l) = &f.body.as_ref().unwrap().stmts[0].kind else {
        panic!("loop expected")
    };
    assert_eq!((l.span.line, l.span.col), (3, 3));
    assert_eq!(l.annotation, Annotation::Convert);
}

fn first_error(src: &str) -> (u32, u32, String) {
    let d = parse(src).unwrap_err();
    let first = d.iter().next().unwrap();
    (first.span.line, first.span.col, first.message.clone())
}

#[test]
fn diagnostics_carry_positions() {
    let (line, col, msg) = first_error("fn f() {\n  let x = y;\n}\n");
    assert_eq!((line, col), (2, 11));
    assert!(msg.contains("'y'"), "{msg}");

    let (line, _, _) = first_error("struct S { a: f64; }\nfn f(c: slice<S>) {\n  for p in c { p.b = 1.0; }\n}\n");
    assert_eq!(line, 3);

    let (_, _, msg) = first_error(
        "struct S { a: f64; }\nfn f(c: slice<S>) {\n  @soa_convert_hoist(2)\n  for p in c { p.a = 1.0; }\n}\n",
    );
    assert!(msg.contains("hoist depth exceeds nesting"), "{msg}");
}

#[test]
fn rendered_diagnostics_name_the_file() {
    let d = parse("fn f( {").unwrap_err();
    let text = d.render("bad.kl");
    assert!(text.starts_with("bad.kl:1:"), "{text}");
    assert!(text.contains(": error: "), "{text}");
}

#[test]
fn diagnostics_are_deterministic() {
    let src = "struct S { a: f64; }\nfn f(c: slice<S>) -> f64 {\n  return c;\n}\nfn g() { h(); }\n";
    assert_eq!(parse(src).unwrap_err(), parse(src).unwrap_err());
}

#[test]
fn rejected_constructs() {
    for (src, needle) in [
        ("fn f(x: f64) { x + 1.0; }", "only calls"),
        ("fn f() { let z: i32 = 1.5; }", ""),
        ("struct S { a: f64; }\nfn f(c: slice<S>) { let d = c; }", ""),
        ("fn f(x: f64) -> f64 { return x % 2.0; }", "'%'"),
        ("fn f() { let b: buffer<f64> = 3.0; }", ""),
    ] {
        let d = parse(src).expect_err(src);
        assert!(d.to_string().contains(needle), "{src}: {d}");
    }
}

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        (0u32..1000).prop_map(|v| format!("{}.{}", v / 10, v % 10)),
        Just("x".to_string()),
        Just("y".to_string()),
        Just("1e-300".to_string()),
    ]
}

fn f64_expr() -> impl Strategy<Value = String> {
    leaf().prop_recursive(5, 48, 3, |inner| {
        prop_oneof![
            (
                inner.clone(),
                prop::sample::select(vec!["+", "-", "*", "/"]),
                inner.clone()
            )
                .prop_map(|(a, op, b)| format!("({a} {op} {b})")),
            (
                inner.clone(),
                prop::sample::select(vec!["+", "-", "*", "/"]),
                inner.clone()
            )
                .prop_map(|(a, op, b)| format!("{a} {op} {b}")),
            inner.clone().prop_map(|a| format!("-{a}")),
            inner.clone().prop_map(|a| format!("-({a})")),
            inner.clone().prop_map(|a| format!("sqrt({a})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("min({a}, {b})")),
            (inner.clone(), inner).prop_map(|(a, b)| format!("max({a}, {b})")),
        ]
    })
}

fn bool_expr() -> impl Strategy<Value = String> {
    let cmp = (
        f64_expr(),
        prop::sample::select(vec!["<", "<=", ">", ">=", "==", "!="]),
        f64_expr(),
    )
        .prop_map(|(a, op, b)| format!("{a} {op} {b}"));
    cmp.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["&&", "||"]), inner.clone())
                .prop_map(|(a, op, b)| format!("{a} {op} {b}")),
            inner.prop_map(|a| format!("!({a})")),
        ]
    })
}

proptest! {
    #[test]
    fn expression_round_trip(e in f64_expr(), c in bool_expr()) {
        let src = format!("fn f(x: f64, y: f64) -> f64 {{\n  if {c} {{\n    return {e};\n  }}\n  return x;\n}}\n");
        let prog = parse(&src).map_err(|d| TestCaseError::fail(format!("{d}\n{src}")))?;
        let text = emit_kl(&prog);
        let again = parse(&text).map_err(|d| TestCaseError::fail(format!("{d}\n{text}")))?;
        prop_assert_eq!(&again, &prog);
        prop_assert_eq!(emit_kl(&again), text);
    }

    #[test]
    fn parsing_is_deterministic(e in f64_expr()) {
        let src = format!("fn f(x: f64, y: f64) -> f64 {{ return {e}; }}");
        prop_assert_eq!(parse(&src), parse(&src));
    }
}

#[test]
fn embedded_corpus_matches_files() {
    let dir = format!("{}/corpus", env!("CARGO_MANIFEST_DIR"));
    let mut stems: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "kl"))
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    stems.sort();
    let embedded: Vec<&str> = soaview_core::corpus::ALL.iter().map(|(n, _)| *n).collect();
    assert_eq!(stems, embedded);
    for (n, src) in soaview_core::corpus::ALL {
        assert_eq!(*src, std::fs::read_to_string(format!("{dir}/{n}.kl")).unwrap());
    }
}
