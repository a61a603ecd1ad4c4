use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soaview_layout::*;

// struct Data { a: f64, b: f64, c: f64 }
fn data(recs: &[(f64, f64, f64)]) -> Vec<u8> {
    recs.iter()
        .flat_map(|&(a, b, c)| [a, b, c])
        .flat_map(f64::to_ne_bytes)
        .collect()
}

fn fv(offset: usize, size: usize, dir: Dir) -> FieldView {
    FieldView { offset, size, dir }
}

#[test]
fn two_data_records() {
    let bytes = data(&[(1.0, 2.0, 9.0), (3.0, 4.0, 9.0)]);
    let d = ViewDescriptor::new(24, vec![fv(0, 8, Dir::InOut), fv(8, 8, Dir::In)], 2).unwrap();
    let b = gather(Records::Contiguous(&bytes), &d).unwrap();
    assert_eq!(b.f64s(0).unwrap(), &[1.0, 3.0]);
    assert_eq!(b.f64s(1).unwrap(), &[2.0, 4.0]);
    assert_eq!(b.field_ptr(0) as usize % ALIGN, 0);
    assert_eq!(b.field_ptr(1) as usize % ALIGN, 0);
}

#[test]
fn update_via_buffers() {
    let mut bytes = data(&[(1.0, 2.0, 9.0), (3.0, 4.0, 9.0)]);
    let d = ViewDescriptor::new(24, vec![fv(0, 8, Dir::InOut), fv(8, 8, Dir::In)], 2).unwrap();
    let mut b = gather(Records::Contiguous(&bytes), &d).unwrap();
    let bb = b.f64s(1).unwrap().to_vec();
    for (a, x) in b.f64s_mut(0).unwrap().iter_mut().zip(bb) {
        *a += x;
    }
    scatter(&b, RecordsMut::Contiguous(&mut bytes), &d).unwrap();
    assert_eq!(bytes, data(&[(3.0, 2.0, 9.0), (7.0, 4.0, 9.0)]));
}

#[test]
fn zero_count_gives_empty_buffers() {
    let d = ViewDescriptor::new(24, vec![fv(0, 8, Dir::InOut)], 0).unwrap();
    let b = gather(Records::Contiguous(&[]), &d).unwrap();
    assert!(b.field(0).is_empty());
    let mut none: Vec<u8> = Vec::new();
    scatter(&b, RecordsMut::Contiguous(&mut none), &d).unwrap();
}

#[test]
fn descriptor_validation() {
    assert_eq!(ViewDescriptor::new(24, vec![], 1), Err(LayoutError::NoFields));
    assert!(matches!(
        ViewDescriptor::new(24, vec![fv(20, 8, Dir::In)], 1),
        Err(LayoutError::ExtentOutOfRange { field: 0, .. })
    ));
    assert_eq!(
        ViewDescriptor::new(24, vec![fv(8, 8, Dir::In), fv(0, 12, Dir::Out)], 1),
        Err(LayoutError::Overlap(0, 1))
    );
    assert_eq!(
        ViewDescriptor::new(24, vec![fv(0, 0, Dir::In)], 1),
        Err(LayoutError::EmptyField(0))
    );
    assert!(ViewDescriptor::new(usize::MAX, vec![fv(usize::MAX, 2, Dir::In)], 1).is_err());
}

#[test]
fn null_pointer_and_short_source() {
    let bytes = data(&[(1.0, 2.0, 3.0)]);
    let d = ViewDescriptor::new(24, vec![fv(0, 8, Dir::In)], 2).unwrap();
    let ptrs = [Some(&bytes[..]), None];
    assert_eq!(
        gather(Records::Pointers(&ptrs), &d).unwrap_err(),
        LayoutError::NullPointer(1)
    );
    assert_eq!(
        gather(Records::Contiguous(&bytes), &d).unwrap_err(),
        LayoutError::SourceTooShort { needed: 2, got: 1 }
    );
    let short = [Some(&bytes[..16])];
    assert!(matches!(
        gather(Records::Pointers(&short), &d.with_count(1)),
        Err(LayoutError::RecordSize {
            index: 0,
            got: 16,
            expected: 24
        })
    ));
}

#[test]
fn scatter_rejects_foreign_buffers() {
    let mut bytes = data(&[(1.0, 2.0, 3.0)]);
    let d1 = ViewDescriptor::new(24, vec![fv(0, 8, Dir::Out)], 1).unwrap();
    let d2 = ViewDescriptor::new(24, vec![fv(8, 8, Dir::Out)], 1).unwrap();
    let b = gather(Records::Contiguous(&bytes), &d1).unwrap();
    assert_eq!(
        scatter(&b, RecordsMut::Contiguous(&mut bytes), &d2),
        Err(LayoutError::DescriptorMismatch)
    );
}

#[test]
fn no_out_fields_leaves_dest_unchanged() {
    let mut bytes = data(&[(1.0, 2.0, 3.0), (4.0, 5.0, 6.0)]);
    let before = bytes.clone();
    let d = ViewDescriptor::new(24, vec![fv(0, 8, Dir::In), fv(16, 8, Dir::In)], 2).unwrap();
    let mut b = gather(Records::Contiguous(&bytes), &d).unwrap();
    b.f64s_mut(0).unwrap()[0] = 100.0;
    scatter(&b, RecordsMut::Contiguous(&mut bytes), &d).unwrap();
    assert_eq!(bytes, before);
}

#[test]
fn pointer_list_scatter() {
    let mut r0 = data(&[(1.0, 2.0, 3.0)]);
    let mut r1 = data(&[(4.0, 5.0, 6.0)]);
    let d = ViewDescriptor::new(24, vec![fv(16, 8, Dir::Out)], 2).unwrap();
    {
        let ptrs = [Some(&r1[..]), Some(&r0[..])];
        let mut b = gather(Records::Pointers(&ptrs), &d).unwrap();
        b.f64s_mut(0).unwrap().copy_from_slice(&[10.0, 20.0]);
        let mut dst = [Some(&mut r1[..]), Some(&mut r0[..])];
        scatter(&b, RecordsMut::Pointers(&mut dst), &d).unwrap();
    }
    assert_eq!(r0, data(&[(1.0, 2.0, 20.0)]));
    assert_eq!(r1, data(&[(4.0, 5.0, 10.0)]));
}

#[test]
fn round_trip_10k_records_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 10_000;
    let rs = 272;
    let src: Vec<u8> = (0..n * rs).map(|_| rng.gen()).collect();
    let fields = (0..rs / 8).map(|i| fv(i * 8, 8, Dir::InOut)).collect();
    let d = ViewDescriptor::new(rs, fields, n).unwrap();
    let b = gather(Records::Contiguous(&src), &d).unwrap();
    let mut dst = vec![0u8; n * rs];
    scatter(&b, RecordsMut::Contiguous(&mut dst), &d).unwrap();
    assert_eq!(src, dst);
}

#[test]
fn arena_reuses_storage() {
    let d = ViewDescriptor::new(24, vec![fv(0, 8, Dir::Out)], 1000).unwrap();
    let first = SoABuffers::allocate(&d).field_ptr(0);
    let second = SoABuffers::allocate(&d).field_ptr(0);
    assert_eq!(first, second);
    assert!(Arena::high_water_bytes() >= 8000);
    assert!(Arena::retained_bytes() >= 8000);
}

#[test]
fn concurrent_disjoint_views() {
    let mut recs: Vec<Vec<u8>> = (0..8).map(|i| data(&[(i as f64, 0.0, 0.0); 100])).collect();
    std::thread::scope(|s| {
        for r in recs.iter_mut() {
            s.spawn(move || {
                let d = ViewDescriptor::new(24, vec![fv(0, 8, Dir::In), fv(8, 8, Dir::Out)], 100).unwrap();
                let mut b = gather(Records::Contiguous(r), &d).unwrap();
                let a = b.f64s(0).unwrap().to_vec();
                for (o, x) in b.f64s_mut(1).unwrap().iter_mut().zip(a) {
                    *o = x * 2.0;
                }
                scatter(&b, RecordsMut::Contiguous(r), &d).unwrap();
            });
        }
    });
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(*r, data(&[(i as f64, 2.0 * i as f64, 0.0); 100]));
    }
}

/// Random non-overlapping descriptor over a random record size.
fn random_desc(rng: &mut ChaCha8Rng) -> ViewDescriptor {
    let rs = rng.gen_range(1..=96);
    let mut fields = Vec::new();
    let mut at = 0;
    while at < rs {
        let gap = rng.gen_range(0..4).min(rs - at);
        at += gap;
        if at >= rs {
            break;
        }
        let size = rng.gen_range(1..=16).min(rs - at);
        let dir = [Dir::In, Dir::Out, Dir::InOut][rng.gen_range(0..3)];
        if rng.gen_bool(0.7) {
            fields.push(fv(at, size, dir));
        }
        at += size;
    }
    if fields.is_empty() {
        fields.push(fv(0, rs, Dir::InOut));
    }
    let count = rng.gen_range(0..40);
    ViewDescriptor::new(rs, fields, count).unwrap()
}

/// Independent oracle: which byte offsets of a record are scattered.
fn scattered_mask(d: &ViewDescriptor) -> Vec<bool> {
    let mut m = vec![false; d.record_size()];
    for f in d.fields() {
        if matches!(f.dir, Dir::Out | Dir::InOut) {
            for b in &mut m[f.offset..f.offset + f.size] {
                *b = true;
            }
        }
    }
    m
}

#[test]
fn fuzz_mutate_one_buffer_10k() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10_000 {
        let d = random_desc(&mut rng);
        let rs = d.record_size();
        let src: Vec<u8> = (0..rs * d.count()).map(|_| rng.gen()).collect();
        let mut b = gather(Records::Contiguous(&src), &d).unwrap();
        let fi = rng.gen_range(0..d.fields().len());
        for x in b.field_mut(fi) {
            *x = !*x;
        }
        let mut dst = src.clone();
        scatter(&b, RecordsMut::Contiguous(&mut dst), &d).unwrap();
        // Oracle: src with every scattered field replaced by its buffer.
        let mut want = src.clone();
        for (gi, g) in d.fields().iter().enumerate() {
            if matches!(g.dir, Dir::Out | Dir::InOut) {
                for (i, v) in b.field(gi).chunks_exact(g.size).enumerate() {
                    want[i * rs + g.offset..i * rs + g.offset + g.size].copy_from_slice(v);
                }
            }
        }
        assert_eq!(dst, want, "{d:?}");
        let f = d.fields()[fi];
        let mask = scattered_mask(&d);
        for (k, (&s, &t)) in src.iter().zip(&dst).enumerate() {
            let off = k % rs;
            if !mask[off] {
                assert_eq!(s, t, "non-view byte {k} of {d:?}");
            } else if off >= f.offset && off < f.offset + f.size && f.dir == Dir::InOut {
                assert_ne!(s, t, "mutated byte {k} of {d:?}");
            }
        }
    }
}

proptest! {
    #[test]
    fn transpose_relation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_desc(&mut rng);
        let rs = d.record_size();
        let src: Vec<u8> = (0..rs * d.count()).map(|_| rng.gen()).collect();
        let b = gather(Records::Contiguous(&src), &d).unwrap();
        for (fi, f) in d.fields().iter().enumerate() {
            if matches!(f.dir, Dir::Out) {
                continue;
            }
            let buf = b.field(fi);
            prop_assert_eq!(buf.len(), f.size * d.count());
            for i in 0..d.count() {
                prop_assert_eq!(&buf[i * f.size..(i + 1) * f.size], &src[i * rs + f.offset..i * rs + f.offset + f.size]);
            }
        }
    }

    #[test]
    fn round_trip_identity_and_non_view_preservation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_desc(&mut rng);
        let rs = d.record_size();
        let src: Vec<u8> = (0..rs * d.count()).map(|_| rng.gen()).collect();
        // Make all fields InOut, so gather-then-scatter must be the identity.
        let all = ViewDescriptor::new(
            rs,
            d.fields().iter().map(|f| FieldView { dir: Dir::InOut, ..*f }).collect(),
            d.count(),
        ).unwrap();
        let b = gather(Records::Contiguous(&src), &all).unwrap();
        let mut dst = src.clone();
        scatter(&b, RecordsMut::Contiguous(&mut dst), &all).unwrap();
        prop_assert_eq!(&dst, &src);

        // Scattering into a different destination only touches view bytes.
        let other: Vec<u8> = (0..rs * d.count()).map(|_| rng.gen()).collect();
        let mut dst2 = other.clone();
        scatter(&b, RecordsMut::Contiguous(&mut dst2), &all).unwrap();
        let mask = scattered_mask(&all);
        for k in 0..dst2.len() {
            let want = if mask[k % rs] { src[k] } else { other[k] };
            prop_assert_eq!(dst2[k], want);
        }
    }
}

#[test]
fn split_mut_gives_disjoint_aligned_columns() {
    let bytes = data(&[(1.0, 2.0, 3.0), (4.0, 5.0, 6.0), (7.0, 8.0, 9.0)]);
    let d = ViewDescriptor::new(
        24,
        vec![fv(0, 8, Dir::InOut), fv(8, 4, Dir::In), fv(16, 8, Dir::InOut)],
        3,
    )
    .unwrap();
    let mut b = gather(Records::Contiguous(&bytes), &d).unwrap();
    let mut cols = b.split_mut();
    assert_eq!(cols.iter().map(|c| c.len()).collect::<Vec<_>>(), vec![24, 12, 24]);
    for c in &cols {
        assert_eq!(c.as_ptr() as usize % ALIGN, 0);
    }
    let (first, rest) = cols.split_at_mut(1);
    let a = f64_slice_mut(first[0]).unwrap();
    let c = f64_slice(rest[1]).unwrap();
    for (x, y) in a.iter_mut().zip(c) {
        *x += y;
    }
    assert_eq!(b.f64s(0).unwrap(), &[4.0, 10.0, 16.0]);
    assert_eq!(b.f64s(1), None);
    let d2 = d.with_count(2);
    assert_eq!(gather(Records::Contiguous(&bytes), &d2).unwrap().f64s(1), None);
    assert_eq!(b.i32s(1).unwrap().len(), 3);
}
