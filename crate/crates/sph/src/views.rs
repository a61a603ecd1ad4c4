//! Layout descriptors for the five kernels, derived by the compiler from the
//! corpus rather than written by hand.

use soaview_core::{analyze, parse, plan_view, Program};
use soaview_layout::{Dir, FieldView, ViewDescriptor};

use crate::particle::{matches_struct, PARTICLE_SIZE};
use crate::SphError;

/// The view of one annotated loop: descriptor plus field names per buffer.
#[derive(Clone, Debug)]
pub struct ViewSpec {
    pub desc: ViewDescriptor,
    pub names: Vec<String>,
}

impl ViewSpec {
    /// Buffer index of `field`. Panics when the loop does not touch it.
    pub fn ix(&self, field: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == field)
            .unwrap_or_else(|| panic!("field {field} is not in the view"))
    }
}

#[derive(Clone, Debug)]
pub struct Views {
    pub density_local: ViewSpec,
    pub density_active: ViewSpec,
    pub force_local: ViewSpec,
    pub force_active: ViewSpec,
    pub kick1: ViewSpec,
    pub drift: ViewSpec,
    pub kick2: ViewSpec,
    pub program: Program,
}

fn spec(prog: &Program, an: &soaview_core::Analysis, function: &str, container: &str) -> Result<ViewSpec, SphError> {
    let info = an
        .loops
        .iter()
        .find(|l| l.function == function && l.container == container)
        .ok_or_else(|| SphError::Corpus(format!("no annotated loop over {container} in {function}")))?;
    let plan = plan_view(info, prog, info.id);
    let mut fields = Vec::new();
    let mut names = Vec::new();
    for b in &plan.buffers {
        let gathered = plan.gather_fields.contains(&b.field);
        let scattered = plan.scatter_fields.contains(&b.field);
        let dir = match (gathered, scattered) {
            (true, true) => Dir::InOut,
            (true, false) => Dir::In,
            (false, true) => Dir::Out,
            // Allocated, written and read back inside the loop only.
            (false, false) => Dir::Out,
        };
        fields.push(FieldView {
            offset: b.offset,
            size: b.size,
            dir,
        });
        names.push(b.field.clone());
    }
    let desc = ViewDescriptor::new(PARTICLE_SIZE, fields, 0)?;
    Ok(ViewSpec { desc, names })
}

impl Views {
    /// Analyzes the corpus kernels and checks the record against [`crate::Particle`].
    pub fn from_corpus() -> Result<Views, SphError> {
        let program = parse(soaview_core::corpus::SPH).map_err(|e| SphError::Corpus(e.to_string()))?;
        let def = program
            .struct_def("Particle")
            .ok_or_else(|| SphError::Corpus("no Particle struct".into()))?;
        if !matches_struct(def) {
            return Err(SphError::Corpus(
                "corpus Particle differs from the native record".into(),
            ));
        }
        let an = analyze(&program).map_err(|e| SphError::Corpus(e.to_string()))?;
        Ok(Views {
            density_local: spec(&program, &an, "density", "local")?,
            density_active: spec(&program, &an, "density", "active")?,
            force_local: spec(&program, &an, "force", "local")?,
            force_active: spec(&program, &an, "force", "active")?,
            kick1: spec(&program, &an, "kick1", "particles")?,
            drift: spec(&program, &an, "drift", "particles")?,
            kick2: spec(&program, &an, "kick2", "particles")?,
            program,
        })
    }

    /// True when no active view of `k` gathers a field its local view
    /// scatters, so the epilogues of all cells may be deferred past every
    /// prologue without changing results.
    pub fn deferrable(&self, k: crate::Kernel) -> bool {
        let (local, active) = match k {
            crate::Kernel::Density => (&self.density_local, &self.density_active),
            crate::Kernel::Force => (&self.force_local, &self.force_active),
            _ => return true,
        };
        let scattered = |i: usize| local.desc.fields()[i].dir.scattered();
        let gathered = |i: usize| active.desc.fields()[i].dir.gathered();
        !local
            .names
            .iter()
            .enumerate()
            .any(|(i, n)| scattered(i) && active.names.iter().position(|m| m == n).is_some_and(gathered))
    }
}
