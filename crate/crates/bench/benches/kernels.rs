use cavity_bloch::capacitance::{assemble_single_layer, triangle_potential};
use cavity_bloch::geometry::make_sphere_mesh;
use cavity_bloch::oracle::regularized_green;
use cavity_bloch::{enumerate_exceptional, make_lattice, solve_capacitance, Lattice, LatticeSumContext, Vec3};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn triangle_integral(c: &mut Criterion) {
    let corners = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.3, 0.8, 0.0)];
    let p = Vec3::new(0.4, 0.2, 0.05);
    c.bench_function("triangle_potential", |b| b.iter(|| triangle_potential(black_box(&p), &corners)));
}

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("single_layer");
    group.sample_size(10);
    for level in [1u32, 2, 3] {
        let mesh = make_sphere_mesh(1.0, level).unwrap();
        group.bench_with_input(BenchmarkId::new("assemble", mesh.len()), &mesh, |b, m| {
            b.iter(|| assemble_single_layer(m))
        });
        group.bench_with_input(BenchmarkId::new("solve", mesh.len()), &mesh, |b, m| {
            b.iter(|| solve_capacitance(m).unwrap().q)
        });
    }
    group.finish();
}

fn lattice_sum(c: &mut Criterion) {
    let l = Lattice::cubic(1.0).unwrap();
    let k = l.reciprocal_cartesian([0.13, 0.21, 0.34]);
    let ctx = LatticeSumContext::new(&l, k, 60.0).unwrap();
    c.bench_function("regularized_green", |b| b.iter(|| regularized_green(&ctx, black_box(3.7)).unwrap()));
    c.bench_function("lattice_sum_context", |b| b.iter(|| LatticeSumContext::new(&l, black_box(k), 60.0).unwrap()));
}

fn enumeration(c: &mut Criterion) {
    let l = make_lattice(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, 0.75f64.sqrt(), 0.0), Vec3::new(0.0, 0.0, 1.6)).unwrap();
    let mut group = c.benchmark_group("enumerate_exceptional");
    for (name, frac) in [("generic", [0.13, 0.21, 0.34]), ("K", [2.0 / 3.0, 1.0 / 3.0, 0.0]), ("far", [3.5, 2.0, 4.0])] {
        let k = l.reciprocal_cartesian(frac);
        group.bench_function(name, |b| b.iter(|| enumerate_exceptional(&l, black_box(k), 1e-9).unwrap().order));
    }
    group.finish();
}

criterion_group!(benches, triangle_integral, assembly, lattice_sum, enumeration);
criterion_main!(benches);
