//! The shipped KL corpus, embedded at build time.

pub const BASIC: &str = include_str!("../corpus/basic.kl");
pub const SPH: &str = include_str!("../corpus/sph.kl");
pub const SPH_OFFLOAD: &str = include_str!("../corpus/sph_offload.kl");

/// Every corpus file by stem, in file-name order.
pub const ALL: &[(&str, &str)] = &[
    ("alias_error", include_str!("../corpus/alias_error.kl")),
    ("alias_ok", include_str!("../corpus/alias_ok.kl")),
    ("basic", BASIC),
    ("basic_offload", include_str!("../corpus/basic_offload.kl")),
    ("basic_target", include_str!("../corpus/basic_target.kl")),
    ("call_chain", include_str!("../corpus/call_chain.kl")),
    ("cond_write", include_str!("../corpus/cond_write.kl")),
    ("empty_body", include_str!("../corpus/empty_body.kl")),
    ("escape", include_str!("../corpus/escape.kl")),
    ("nested_hoist", include_str!("../corpus/nested_hoist.kl")),
    ("sph", SPH),
    ("sph_offload", SPH_OFFLOAD),
    ("stale_hoist", include_str!("../corpus/stale_hoist.kl")),
];

/// Source of the corpus file `stem`.
pub fn get(stem: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == stem).map(|(_, s)| *s)
}
