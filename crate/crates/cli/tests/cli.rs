use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value as Json;

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../core/corpus/{name}.kl"))
}

fn soaview(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soaview"))
        .args(args)
        .env_remove("SOAVIEW_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_basic_prints_the_loop_line() {
    let o = soaview(&["check", path(&corpus("basic"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o), "loop @3:3  A_in={a,b} (16B)  A_out={a} (8B)\n");
    assert!(o.stderr.is_empty());
}

#[test]
fn check_tsv_and_json() {
    let f = corpus("basic");
    let o = soaview(&["check", "--tsv", path(&f)]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split('\t').count(), lines[1].split('\t').count());
    assert_eq!(lines[1], "loop\tkernel\t3\t3\tData\t2\t16\t1\t8\ta,b\ta\ta:rw,b:ro");

    let o = soaview(&["check", "--json", "--kernels", path(&f)]);
    assert_eq!(code(&o), 0);
    let j: Json = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(j["loops"][0]["a_in"], serde_json::json!(["a", "b"]));
    assert_eq!(j["loops"][0]["classes"]["b"], "ro");
    assert_eq!(j["structs"][0]["size"], 24);
    assert_eq!(j["kernels"][0]["function"], "kernel");

    let o = soaview(&["check", "--tsv", "--json", path(&f)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn check_kernels_adds_unions_and_record_sizes() {
    let o = soaview(&["check", "--kernels", path(&corpus("sph"))]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("loop @")).count(), 7);
    assert_eq!(text.lines().filter(|l| l.starts_with("kernel ")).count(), 5);
    assert!(text.lines().any(|l| l == "struct Particle  25 fields (272B)"), "{text}");
}

#[test]
fn diagnostics_carry_positions_and_exit_one() {
    let f = corpus("alias_error");
    let o = soaview(&["build", path(&f)]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(
        e.starts_with(&format!("{}:5:5: error: AliasAmbiguityError", path(&f))),
        "{e}"
    );
    assert!(o.stdout.is_empty());

    let o = soaview(&["check", path(&corpus("stale_hoist"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("error: StaleViewError"));

    let o = soaview(&["check", path(&corpus("escape"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("error: EscapeError"));
}

#[test]
fn syntax_errors_exit_one_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.kl");
    std::fs::write(&f, "struct S { a: f64; }\nfn k(c: slice<S>) {\n  let = 1.0;\n}\n").unwrap();
    let o = soaview(&["check", path(&f)]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.starts_with(&format!("{}:3:", path(&f))), "{e}");
}

#[test]
fn diagnostics_are_byte_stable() {
    for name in ["alias_error", "stale_hoist", "escape", "sph"] {
        let f = corpus(name);
        let a = soaview(&["check", path(&f)]);
        let b = soaview(&["check", path(&f)]);
        assert_eq!(a.stdout, b.stdout, "{name}");
        assert_eq!(a.stderr, b.stderr, "{name}");
        assert!(!a.stderr.contains(&0x1b), "{name}: escape codes on a pipe");
    }
}

#[test]
fn usage_errors_exit_two() {
    let f = corpus("basic");
    let basic = path(&f);
    for args in [
        vec!["build", basic, "--emit=c", "--offload=map", "--offload=usm"],
        vec!["build", basic, "--offload=map"],
        vec!["build", basic, "--emit=c", "--dump-transformed"],
        vec!["build", basic, "--emit=asm"],
        vec!["run", basic, "--input", "x.json"],
        vec!["frobnicate"],
        vec![],
    ] {
        let o = soaview(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(code(&soaview(&["--help"])), 0);
}

#[test]
fn dump_transformed_reparses_and_names_the_buffers() {
    for name in ["basic", "sph", "nested_hoist", "call_chain"] {
        let o = soaview(&["build", "--dump-transformed", path(&corpus(name))]);
        assert_eq!(code(&o), 0, "{name}");
        let text = stdout(&o);
        let prog = soaview_core::parse(&text).unwrap_or_else(|d| panic!("{name}: {d}"));
        assert!(
            soaview_core::analyze(&prog).unwrap().loops.is_empty(),
            "{name}: annotations left"
        );
        assert!(text.contains("alloc("), "{name}");
    }
}

#[test]
fn build_writes_c_to_the_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.c");
    let o = soaview(&[
        "build",
        path(&corpus("basic_offload")),
        "--emit=c",
        "--offload=map",
        "--dump-transformed",
        "-o",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("fn kernel("));
    let c = std::fs::read_to_string(&out).unwrap();
    assert!(
        c.contains("#pragma omp target teams distribute parallel for map(to: b_"),
        "{c}"
    );

    let o = soaview(&["build", path(&corpus("basic")), "--emit=c"]);
    assert_eq!(code(&o), 0);
    assert!(!stdout(&o).contains("omp target"));
}

#[test]
fn run_interprets_json_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.json");
    let output = dir.path().join("out.json");
    std::fs::write(
        &input,
        r#"{"args": {"buf": [{"a": 1, "b": 2, "unused": 9}, {"a": 3, "b": 4, "unused": 9}]}}"#,
    )
    .unwrap();
    let basic = corpus("basic");
    let mut results = Vec::new();
    for extra in [None, Some("--transformed")] {
        let mut args = vec![
            "run",
            path(&basic),
            "--entry",
            "kernel",
            "--input",
            path(&input),
            "--output",
            path(&output),
        ];
        args.extend(extra);
        let o = soaview(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let j: Json = serde_json::from_str(&std::fs::read_to_string(&output).unwrap()).unwrap();
        let a: Vec<f64> = j["args"]["buf"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["a"].as_f64().unwrap())
            .collect();
        assert_eq!(a, vec![3.0, 7.0]);
        assert_eq!(j["args"]["buf"][1]["unused"], 9.0);
        results.push(j);
    }
    assert_eq!(results[0], results[1]);

    std::fs::write(&input, "{not json").unwrap();
    let o = soaview(&["run", path(&basic), "--entry", "kernel", "--input", path(&input)]);
    assert_eq!(code(&o), 1);
    assert!(
        stderr(&o).starts_with(&format!("{}:1:", path(&input))),
        "{}",
        stderr(&o)
    );

    std::fs::write(&input, r#"{"args": {}}"#).unwrap();
    let o = soaview(&["run", path(&basic), "--entry", "kernel", "--input", path(&input)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing argument 'buf'"));

    let o = soaview(&["run", path(&basic), "--entry", "nope", "--input", path(&input)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let o = soaview(&[
        "bench",
        "--kernel",
        "density,drift",
        "--variant",
        "soa-view,scattered,local-active,mask",
        "--ppc",
        "16",
        "--particles",
        "320",
        "--reps",
        "2",
        "--seed",
        "1",
        "--csv",
        path(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], soaview_sph::bench::CSV_HEADER);
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("density,soa-view,scattered,local-active,mask,16,320,0,"));
    assert!(stdout(&o).starts_with("kernel"));
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = soaview(&[
        "bench",
        "--kernel",
        "drift",
        "--ppc",
        "16",
        "--particles",
        "64",
        "--reps",
        "1",
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with(soaview_sph::bench::CSV_HEADER));
}

#[test]
fn bench_rejects_bad_parameters() {
    for args in [
        vec!["bench", "--kernel", "kick3"],
        vec!["bench", "--variant", "soa-view,sideways"],
        vec!["bench", "--ppc", "64", "--particles", "32"],
        vec!["bench", "--reps", "many"],
    ] {
        let o = soaview(&args);
        assert_eq!(code(&o), 2, "{args:?}");
    }
}

#[test]
fn soaview_threads_caps_and_validates() {
    let run = |env: &str| {
        Command::new(env!("CARGO_BIN_EXE_soaview"))
            .args([
                "bench",
                "--kernel",
                "drift",
                "--ppc",
                "16",
                "--particles",
                "64",
                "--reps",
                "1",
                "--threads",
                "8",
            ])
            .env("SOAVIEW_THREADS", env)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("2")), 0);
    for bad in ["0", "x", ""] {
        let o = run(bad);
        assert_eq!(code(&o), 2, "{bad:?}");
        assert!(stderr(&o).contains("SOAVIEW_THREADS"));
    }
}
