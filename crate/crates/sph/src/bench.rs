//! End-to-end timing of kernel invocations, with the SoA-view path checked
//! against the AoS baseline on every repetition.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::kernels::{Kernel, Path, PhaseTimes, Variant};
use crate::particle::Particle;
use crate::system::{Layout, Setup, System};
use crate::views::Views;
use crate::SphError;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub kernels: Vec<Kernel>,
    pub variants: Vec<Variant>,
    pub ppcs: Vec<usize>,
    pub particles: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Compare soa-view results with the AoS baseline after every repetition.
    pub check: bool,
    /// Worker count for [`System::run_parallel`]; 1 is the sequential mode.
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            kernels: Kernel::ALL.to_vec(),
            variants: vec![Variant::default()],
            ppcs: vec![64, 128, 256, 512, 1024],
            particles: vec![100_000],
            reps: 5,
            seed: 42,
            check: true,
            threads: 1,
        }
    }
}

/// One timed repetition.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub kernel: Kernel,
    pub variant: Variant,
    pub ppc: usize,
    pub n: usize,
    pub rep: usize,
    pub t_prologue_ns: u64,
    pub t_compute_ns: u64,
    pub t_epilogue_ns: u64,
    pub t_total_ns: u64,
    /// One update per local particle per kernel call.
    pub updates: u64,
    pub ns_per_update: f64,
}

impl BenchRecord {
    /// (prologue + epilogue) / total.
    pub fn conversion_share(&self) -> f64 {
        if self.t_total_ns == 0 {
            return 0.0;
        }
        (self.t_prologue_ns + self.t_epilogue_ns) as f64 / self.t_total_ns as f64
    }

    fn new(kernel: Kernel, variant: Variant, ppc: usize, n: usize, rep: usize, t: PhaseTimes) -> Self {
        let ns = |d: std::time::Duration| d.as_nanos() as u64;
        let (p, c, e) = (ns(t.prologue), ns(t.compute), ns(t.epilogue));
        let total = p + c + e;
        BenchRecord {
            kernel,
            variant,
            ppc,
            n,
            rep,
            t_prologue_ns: p,
            t_compute_ns: c,
            t_epilogue_ns: e,
            t_total_ns: total,
            updates: n as u64,
            ns_per_update: total as f64 / n as f64,
        }
    }
}

pub const CSV_HEADER: &str =
    "kernel,path,layout,order,guard,ppc,n,rep,t_prologue_ns,t_compute_ns,t_epilogue_ns,t_total_ns,ns_per_update";

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let v = &r.variant;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            r.kernel,
            v.path_name(),
            v.layout_name(),
            v.order_name(),
            v.guard_name(),
            r.ppc,
            r.n,
            r.rep,
            r.t_prologue_ns,
            r.t_compute_ns,
            r.t_epilogue_ns,
            r.t_total_ns,
            r.ns_per_update
        );
    }
    out
}

/// Median of `xs`; the mean of the two middle values for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Number of preceding kernels whose outputs `k` consumes.
fn stage(k: Kernel) -> usize {
    match k {
        Kernel::Density => 0,
        Kernel::Force => 1,
        _ => 2,
    }
}

/// A system in which kernel `k` sees physical inputs: densities converged
/// before force, accelerations present before the kicks and drift.
pub fn prepare(setup: Setup, k: Kernel, views: &Views) -> Result<System, SphError> {
    let mut s = System::new(setup)?;
    let base = Variant {
        path: Path::AosBaseline,
        layout: setup.layout,
        ..Variant::default()
    };
    if stage(k) >= 1 {
        s.density_step(&base, views, 30)?;
    }
    if stage(k) >= 2 {
        s.run(Kernel::Force, &base, views, &mut PhaseTimes::default())?;
    }
    Ok(s)
}

/// Relative difference scaled by the larger magnitude; zero for equal bits.
fn rel_diff(a: f64, b: f64) -> f64 {
    if a.to_bits() == b.to_bits() {
        return 0.0;
    }
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// First field of `got` that differs from `want` by more than `tol` relative.
pub fn compare(got: &Particle, want: &Particle, tol: f64) -> Option<(&'static str, f64, f64)> {
    got.numbers()
        .into_iter()
        .zip(want.numbers())
        // Negated so a NaN difference counts as a mismatch.
        .find(|((_, a), (_, b))| {
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            let bad = !(rel_diff(*a, *b) <= tol);
            bad
        })
        .map(|((f, a), (_, b))| (f, a, b))
}

fn check_equal(k: Kernel, v: &Variant, got: &System, want: &System) -> Result<(), SphError> {
    for i in 0..got.len() {
        if let Some((field, g, w)) = compare(got.particle(i), want.particle(i), 1e-12) {
            return Err(SphError::Mismatch {
                kernel: k.to_string(),
                variant: v.to_string(),
                index: i,
                field: field.to_string(),
                got: g,
                want: w,
            });
        }
    }
    Ok(())
}

/// Times every (particles, ppc, variant, kernel) combination: one discarded
/// warm-up call, then `reps` timed calls on the evolving state. Within one
/// (particles, ppc, variant) group the kernels take turns, so repetition `r`
/// of every kernel runs under the same machine conditions.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, SphError> {
    let mut out = Vec::new();
    if cfg.reps == 0 {
        return Ok(out);
    }
    for &n in &cfg.particles {
        for &ppc in &cfg.ppcs {
            if ppc > n {
                return Err(SphError::Config(format!("ppc {ppc} exceeds the particle count {n}")));
            }
        }
    }
    let views = Views::from_corpus()?;
    for &n in &cfg.particles {
        for &ppc in &cfg.ppcs {
            let mut prepared: HashMap<(usize, Layout), System> = HashMap::new();
            for v in &cfg.variants {
                let mut runs = Vec::with_capacity(cfg.kernels.len());
                for &k in &cfg.kernels {
                    let key = (stage(k), v.layout);
                    if let std::collections::hash_map::Entry::Vacant(e) = prepared.entry(key) {
                        let setup = Setup {
                            n,
                            ppc,
                            seed: cfg.seed,
                            layout: v.layout,
                        };
                        e.insert(prepare(setup, k, &views)?);
                    }
                    let sys = prepared[&key].clone();
                    let baseline = (cfg.check && v.path == Path::SoaView).then(|| sys.clone());
                    runs.push(Run { k, sys, baseline });
                }
                let mut recs: Vec<Vec<BenchRecord>> = vec![Vec::with_capacity(cfg.reps); runs.len()];
                for rep in 0..=cfg.reps {
                    for (run, recs) in runs.iter_mut().zip(&mut recs) {
                        let t = run.step(v, &views, cfg.threads)?;
                        // Repetition 0 is the warm-up.
                        if rep > 0 {
                            recs.push(BenchRecord::new(run.k, *v, ppc, n, rep - 1, t));
                        }
                    }
                }
                out.extend(recs.into_iter().flatten());
            }
        }
    }
    Ok(out)
}

struct Run {
    k: Kernel,
    sys: System,
    baseline: Option<System>,
}

impl Run {
    fn step(&mut self, v: &Variant, views: &Views, threads: usize) -> Result<PhaseTimes, SphError> {
        let mut t = PhaseTimes::default();
        self.sys.run_parallel(self.k, v, views, threads, &mut t)?;
        if let Some(b) = self.baseline.as_mut() {
            let base = Variant {
                path: Path::AosBaseline,
                ..*v
            };
            b.run(self.k, &base, views, &mut PhaseTimes::default())?;
            check_equal(self.k, v, &self.sys, b)?;
        }
        Ok(t)
    }
}
