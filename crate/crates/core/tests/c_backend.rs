use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use soaview_core::backends::{emit_c, EmitOptions, OffloadMode};
use soaview_core::interp::interpret;
use soaview_core::testing::{c_harness, c_input, c_output, entry_points, random_inputs};
use soaview_core::transform::rewrite_analyzed;
use soaview_core::{analyze, parse, rewrite, FieldClass};

fn corpus(name: &str) -> String {
    std::fs::read_to_string(format!("{}/corpus/{name}.kl", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn opts(offload: OffloadMode) -> EmitOptions {
    EmitOptions { offload, alignment: 64 }
}

fn scratch_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("soaview-c-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn compile(src: &str, stem: &str, link: bool) -> Result<PathBuf, String> {
    let dir = scratch_dir();
    let c = dir.join(format!("{stem}.c"));
    std::fs::write(&c, src).unwrap();
    let out = dir.join(stem);
    let mut cmd = Command::new("cc");
    cmd.args(["-std=c11", "-O2", "-ffp-contract=off", "-fopenmp", "-Wall", "-Werror"]);
    if link {
        cmd.arg(&c).arg("-o").arg(&out).arg("-lm");
    } else {
        cmd.arg("-c").arg(&c).arg("-o").arg(out.with_extension("o"));
    }
    let o = cmd.output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(out)
    } else {
        Err(String::from_utf8_lossy(&o.stderr).into_owned())
    }
}

const ACCEPTED: &[&str] = &[
    "basic",
    "basic_target",
    "basic_offload",
    "empty_body",
    "call_chain",
    "cond_write",
    "alias_ok",
    "nested_hoist",
    "sph",
    "sph_offload",
];

#[test]
fn emitted_c_compiles_cleanly_in_every_mode() {
    for name in ACCEPTED {
        let t = rewrite(&parse(&corpus(name)).unwrap()).unwrap();
        for mode in [OffloadMode::Off, OffloadMode::Map, OffloadMode::Usm] {
            let c = emit_c(&t, &opts(mode)).unwrap();
            compile(&c, &format!("{name}_{}", mode.name()), false)
                .unwrap_or_else(|e| panic!("{name} {}: {e}", mode.name()));
        }
    }
}

#[test]
fn compiled_c_matches_the_interpreter_bitwise() {
    for name in ACCEPTED {
        let prog = parse(&corpus(name)).unwrap();
        let t = rewrite(&prog).unwrap();
        for f in entry_points(&prog) {
            let mut src = emit_c(&t, &opts(OffloadMode::Off)).unwrap();
            src.push_str(&c_harness(&t, f));
            let bin = compile(&src, &format!("run_{name}_{}", f.name), true)
                .unwrap_or_else(|e| panic!("{name}::{}: {e}", f.name));
            for seed in 0..8 {
                let inputs = random_inputs(&prog, f, seed);
                let want = interpret(&prog, &f.name, &inputs).unwrap();
                let mut child = Command::new(&bin)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .unwrap();
                child
                    .stdin
                    .take()
                    .unwrap()
                    .write_all(c_input(&t, f, &inputs).as_bytes())
                    .unwrap();
                let out = child.wait_with_output().unwrap();
                assert!(out.status.success(), "{name}::{}", f.name);
                let got = c_output(&t, f, &inputs, &String::from_utf8_lossy(&out.stdout)).unwrap();
                assert_eq!(got, want, "{name}::{} seed {seed}", f.name);
            }
        }
    }
}

/// `map(dir: a[0:n], b[0:n])` clauses of every target pragma.
fn map_clauses(c: &str) -> Vec<BTreeMap<String, String>> {
    c.lines()
        .filter(|l| l.contains("#pragma omp target"))
        .map(|l| {
            let mut m = BTreeMap::new();
            let mut rest = l;
            while let Some(i) = rest.find("map(") {
                let body = &rest[i + 4..];
                let end = body.find(')').unwrap();
                let (dir, items) = body[..end].split_once(':').unwrap();
                for item in items.split(',') {
                    let name = item.trim().split('[').next().unwrap().to_string();
                    assert!(m.insert(name, dir.trim().to_string()).is_none(), "{l}");
                }
                rest = &body[end..];
            }
            m
        })
        .collect()
}

#[test]
fn map_clauses_follow_the_classification() {
    for name in ["basic_offload", "sph_offload"] {
        let prog = parse(&corpus(name)).unwrap();
        let a = analyze(&prog).unwrap();
        let r = rewrite_analyzed(&prog, &a).unwrap();
        let c = emit_c(&r.program, &opts(OffloadMode::Map)).unwrap();
        let clauses = map_clauses(&c);
        assert_eq!(clauses.len(), 1, "{name}");
        let mut want = BTreeMap::new();
        for (plan, info) in r.plans.iter().zip(&a.loops) {
            for b in &plan.buffers {
                let dir = match info.sets.class(&b.field).unwrap() {
                    FieldClass::ReadOnly => "to",
                    FieldClass::WriteOnly => "from",
                    FieldClass::ReadWrite => "tofrom",
                };
                want.insert(b.name.clone(), dir.to_string());
            }
        }
        assert_eq!(clauses[0], want, "{name}");
    }
}

#[test]
fn basic_map_pragma_text() {
    let t = rewrite(&parse(&corpus("basic_offload")).unwrap()).unwrap();
    let c = emit_c(&t, &opts(OffloadMode::Map)).unwrap();
    let line = c.lines().find(|l| l.contains("omp target")).unwrap().trim();
    assert_eq!(
        line,
        "#pragma omp target teams distribute parallel for map(to: b_77[0:soa_n_77]) map(tofrom: a_77[0:soa_n_77])"
    );
}

#[test]
fn usm_and_off_modes() {
    let t = rewrite(&parse(&corpus("sph_offload")).unwrap()).unwrap();
    let usm = emit_c(&t, &opts(OffloadMode::Usm)).unwrap();
    assert!(usm.contains("#pragma omp target teams distribute parallel for\n"));
    assert!(!usm.contains("map("));
    let off = emit_c(&t, &opts(OffloadMode::Off)).unwrap();
    assert!(!off.contains("omp target"));
    assert!(!off.contains("declare target"));
}

#[test]
fn untransformed_programs_have_no_target_pragmas() {
    for name in ["basic_offload", "sph_offload"] {
        let prog = parse(&corpus(name)).unwrap();
        let c = emit_c(&prog, &opts(OffloadMode::Map)).unwrap();
        assert!(!c.contains("omp target"), "{name}");
    }
}

/// Body of the function definition whose header line starts with `head`.
fn definition(c: &str, head: &str) -> String {
    let start = c
        .match_indices(head)
        .map(|(i, _)| i)
        .find(|&i| c[i..].lines().next().unwrap().ends_with('{'))
        .unwrap_or_else(|| panic!("no definition of {head}"));
    let end = c[start..].find("\n}\n").unwrap();
    c[start..start + end].to_string()
}

#[test]
fn linear_kernels_get_host_parallel_loops() {
    let t = rewrite(&parse(&corpus("sph")).unwrap()).unwrap();
    let c = emit_c(&t, &opts(OffloadMode::Off)).unwrap();
    let pragmas = |head: &str| definition(&c, head).matches("#pragma omp parallel for").count();
    assert_eq!(pragmas("void drift("), 1);
    assert_eq!(pragmas("void kick1("), 1);
    // kick2 accumulates into a shared counter; density and force nest loops.
    assert_eq!(pragmas("int64_t kick2("), 0);
    assert_eq!(pragmas("int64_t density("), 0);
    assert_eq!(pragmas("void force("), 0);
}

#[test]
fn packed_struct_and_abi_header() {
    let t = rewrite(&parse(&corpus("sph")).unwrap()).unwrap();
    let c = emit_c(&t, &opts(OffloadMode::Off)).unwrap();
    assert!(c.starts_with("/* Generated by soaview"));
    assert!(c.contains("typedef struct __attribute__((packed)) Particle {"));
    assert!(c.contains("_Static_assert(sizeof(Particle) == 272"));
    assert!(c.contains("void drift(Particle **particles, int64_t particles_len, double dt);"));
    assert!(c.contains("__attribute__((aligned(64)))"));
}

#[test]
fn emission_is_deterministic() {
    let t = rewrite(&parse(&corpus("sph")).unwrap()).unwrap();
    for mode in [OffloadMode::Off, OffloadMode::Map, OffloadMode::Usm] {
        assert_eq!(emit_c(&t, &opts(mode)), emit_c(&t, &opts(mode)));
    }
}

#[test]
fn reserved_names_are_renamed() {
    let src =
        "struct S { int: f64; }\nfn double(c: slice<S>, char: f64) {\n  for p in c { p.int = p.int * char; }\n}\n";
    let prog = parse(src).unwrap();
    let c = emit_c(&prog, &opts(OffloadMode::Off)).unwrap();
    assert!(c.contains("double int_;"));
    assert!(c.contains("void double_(S *c, int64_t c_len, double char_)"));
    compile(&c, "reserved", false).unwrap();
}
