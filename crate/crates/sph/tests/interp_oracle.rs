//! The native kernels against the reference interpreter running the corpus.

use std::collections::BTreeMap;

use soaview_core::interp::{interpret, Arg, Inputs};
use soaview_core::{rewrite, Program, Value};
use soaview_sph::*;

fn pool_inputs(prog: &Program, s: &System, args: Vec<(&str, Arg)>) -> Inputs {
    let def = prog.struct_def("Particle").unwrap();
    let recs = s.particles().iter().map(|p| p.to_record(def)).collect();
    Inputs {
        pools: BTreeMap::from([("Particle".to_string(), recs)]),
        args: args.into_iter().map(|(n, a)| (n.to_string(), a)).collect(),
    }
}

fn ptrs(r: std::ops::Range<usize>) -> Arg {
    Arg::PtrList(r.map(Some).collect())
}

/// Runs `k` cell by cell through the interpreter; returns the particles and
/// the summed integer result.
fn interpreted(prog: &Program, s: &System, k: Kernel) -> (Vec<Particle>, i64) {
    let def = prog.struct_def("Particle").unwrap();
    let mut state = s.clone();
    let mut total = 0;
    for c in 0..s.grid().ncell() {
        let (l, a) = (s.grid().local(c), s.grid().active(c));
        let args = match k {
            Kernel::Density | Kernel::Force => vec![("local", ptrs(l)), ("active", ptrs(a))],
            _ => vec![("particles", ptrs(l)), ("dt", Arg::Scalar(Value::F64(s.dt)))],
        };
        let out = interpret(prog, k.name(), &pool_inputs(prog, &state, args)).unwrap();
        for (i, r) in out.pools["Particle"].iter().enumerate() {
            *state.particle_mut(i) = Particle::from_record(def, r).unwrap();
        }
        if let Some(Value::I64(n)) = out.ret {
            total += n;
        }
    }
    (state.particles(), total)
}

#[test]
fn native_paths_match_interpreted_corpus() {
    let views = Views::from_corpus().unwrap();
    let prog = views.program.clone();
    let transformed = rewrite(&prog).unwrap();
    let mut s = System::new(Setup {
        n: 240,
        ppc: 20,
        seed: 4,
        layout: Layout::Continuous,
    })
    .unwrap();
    for k in [
        Kernel::Density,
        Kernel::Density,
        Kernel::Force,
        Kernel::Kick1,
        Kernel::Drift,
        Kernel::Kick2,
    ] {
        let (want, want_ret) = interpreted(&prog, &s, k);
        let (want_t, want_t_ret) = interpreted(&transformed, &s, k);
        assert_eq!(want, want_t, "{k}: transformed corpus diverges");
        assert_eq!(want_ret, want_t_ret);
        for var in Variant::all() {
            let mut t = s.to_layout(var.layout);
            let ret = t.run(k, &var, &views, &mut PhaseTimes::default()).unwrap();
            assert_eq!(t.particles(), want, "{k} {var}");
            if matches!(k, Kernel::Density | Kernel::Kick2) {
                assert_eq!(ret, want_ret, "{k} {var}");
            }
        }
        s.run(
            k,
            &Variant {
                path: Path::AosBaseline,
                layout: Layout::Continuous,
                ..Variant::default()
            },
            &views,
            &mut PhaseTimes::default(),
        )
        .unwrap();
    }
}
