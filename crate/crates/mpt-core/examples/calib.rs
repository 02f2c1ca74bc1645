//! Temporary online-stage timing probe (not part of the library).

use mpt_core::certificates::{build_certificate_offline, online_delta};
use mpt_core::fem::EdgeSpace;
use mpt_core::mesh::{
    generate_box_mesh, tag_regions, Material, MaterialSet, Shape, TaggedShape,
};
use mpt_core::pod::{
    build_snapshots, frequency_samples, online_coordinates, online_outputs, project_affine,
    truncate_snapshots, Spacing,
};
use mpt_core::transmission::FomModel;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let base = generate_box_mesh(2.0, 3).unwrap();
    let shapes = [TaggedShape::new(Shape::Sphere { center: [0.0; 3], radius: 1.0 }, "object")];
    let mesh = tag_regions(&base, &shapes).unwrap();
    let space = Arc::new(EdgeSpace::new(Arc::new(mesh)));
    let set = MaterialSet::new(vec![Material::new("object", 1.5, 5.96e6, true)]).unwrap();
    let model = FomModel::build(space, &set, 0.01, 1e-10).unwrap();

    let freqs = frequency_samples(1e2, 1e8, 13, Spacing::Log).unwrap();
    let snaps = build_snapshots(&model, &freqs, Spacing::Log).unwrap();
    let basis = truncate_snapshots(&snaps, 0.0).unwrap();
    let reduced = project_affine(&model, &basis).unwrap();
    let cert =
        build_certificate_offline(model.affine(), &basis, model.mass_unit(), 1e2).unwrap();
    println!("m = {:?}", [basis.direction(0).m(), basis.direction(1).m(), basis.direction(2).m()]);

    let omega = 3.3e5;
    let reps = 2000;

    let t = Instant::now();
    let mut sink = 0.0f64;
    for _ in 0..reps {
        let (p, kappa) = online_coordinates(&reduced, omega).unwrap();
        let s = online_outputs(&reduced, omega, &p, kappa);
        sink += s.r[(0, 0)];
    }
    let online_s = t.elapsed().as_secs_f64() / reps as f64;

    let (p, _kappa) = online_coordinates(&reduced, omega).unwrap();
    let t = Instant::now();
    for _ in 0..reps {
        let d = online_delta(&cert, &p, omega, 0.01).unwrap();
        sink += d[(0, 0)];
    }
    let delta_s = t.elapsed().as_secs_f64() / reps as f64;

    println!(
        "online(coords+outputs) {:.2} us, delta {:.2} us, ratio {:.1}% (sink {sink:e})",
        online_s * 1e6,
        delta_s * 1e6,
        100.0 * delta_s / (online_s + delta_s)
    );
}
