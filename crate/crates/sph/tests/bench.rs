use soaview_sph::bench::{median, to_csv, CSV_HEADER};
use soaview_sph::*;

fn small(reps: usize) -> BenchConfig {
    BenchConfig {
        kernels: Kernel::ALL.to_vec(),
        variants: Variant::all(),
        ppcs: vec![16, 32],
        particles: vec![640],
        reps,
        seed: 7,
        check: true,
        threads: 1,
    }
}

#[test]
fn zero_repetitions_give_no_records() {
    assert!(run_bench(&small(0)).unwrap().is_empty());
}

#[test]
fn ppc_above_particle_count_is_rejected() {
    let cfg = BenchConfig {
        ppcs: vec![64],
        particles: vec![32],
        ..small(1)
    };
    assert!(matches!(run_bench(&cfg), Err(SphError::Config(_))));
}

#[test]
fn records_cover_the_grid_and_add_up() {
    let recs = run_bench(&small(2)).unwrap();
    assert_eq!(recs.len(), 5 * 16 * 2 * 2);
    for r in &recs {
        assert_eq!(r.t_total_ns, r.t_prologue_ns + r.t_compute_ns + r.t_epilogue_ns);
        assert_eq!(r.updates, r.n as u64);
        assert!((r.ns_per_update - r.t_total_ns as f64 / r.n as f64).abs() < 1e-9);
        if r.variant.path == Path::AosBaseline {
            assert_eq!(r.t_prologue_ns + r.t_epilogue_ns, 0);
        } else {
            assert!(r.t_prologue_ns > 0);
        }
        assert!(r.conversion_share() >= 0.0 && r.conversion_share() <= 1.0);
    }
    let reps: Vec<usize> = recs.iter().take(2).map(|r| r.rep).collect();
    assert_eq!(reps, vec![0, 1]);
}

#[test]
fn csv_has_header_and_one_row_per_record() {
    let cfg = BenchConfig {
        kernels: vec![Kernel::Drift],
        variants: vec!["soa-view,scattered,local-active,mask".parse().unwrap()],
        ppcs: vec![16],
        particles: vec![64],
        ..small(3)
    };
    let recs = run_bench(&cfg).unwrap();
    let csv = to_csv(&recs);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 4);
    let cols: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cols.len(), CSV_HEADER.split(',').count());
    assert_eq!(
        &cols[..8],
        &[
            "drift",
            "soa-view",
            "scattered",
            "local-active",
            "mask",
            "16",
            "64",
            "0"
        ]
    );
}

#[test]
fn variant_strings_round_trip() {
    for v in Variant::all() {
        assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
    }
    let v: Variant = "mask,continuous".parse().unwrap();
    assert_eq!(
        (v.guard, v.layout, v.path),
        (Guard::Mask, Layout::Continuous, Path::SoaView)
    );
    assert!("soa-view,sideways".parse::<Variant>().is_err());
    assert_eq!("kick2".parse::<Kernel>().unwrap(), Kernel::Kick2);
    assert!("kick3".parse::<Kernel>().is_err());
}

#[test]
fn median_of_odd_and_even() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
}

#[test]
fn layout_mismatch_is_rejected() {
    let views = Views::from_corpus().unwrap();
    let mut s = System::new(Setup {
        n: 64,
        ppc: 16,
        seed: 1,
        layout: Layout::Scattered,
    })
    .unwrap();
    let v: Variant = "continuous".parse().unwrap();
    assert!(s.run(Kernel::Drift, &v, &views, &mut PhaseTimes::default()).is_err());
}

#[test]
fn parallel_runs_match_sequential_bitwise() {
    let views = Views::from_corpus().unwrap();
    for k in Kernel::ALL {
        assert!(views.deferrable(k), "{k}");
    }
    for v in Variant::all() {
        let setup = Setup {
            n: 600,
            ppc: 20,
            seed: 3,
            layout: v.layout,
        };
        let base = soaview_sph::bench::prepare(setup, Kernel::Kick2, &views).unwrap();
        for threads in [2, 3, 64] {
            let mut seq = base.clone();
            let mut par = base.clone();
            for k in Kernel::ALL {
                let a = seq.run(k, &v, &views, &mut PhaseTimes::default()).unwrap();
                let b = par
                    .run_parallel(k, &v, &views, threads, &mut PhaseTimes::default())
                    .unwrap();
                assert_eq!(a, b, "{k} {v} threads {threads}");
            }
            assert_eq!(seq.particles(), par.particles(), "{v} threads {threads}");
        }
    }
}

#[test]
fn threaded_bench_checks_against_baseline() {
    let cfg = BenchConfig { threads: 4, ..small(1) };
    assert_eq!(run_bench(&cfg).unwrap().len(), 5 * 16 * 2);
}
