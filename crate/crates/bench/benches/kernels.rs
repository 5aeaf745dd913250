use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ddrom::ae::loss_and_gradients;
use ddrom::fom::{be_jacobian, be_residual};
use ddrom::partition::{gather, DdModel};
use ddrom::rom::{compose, RomModels};
use ddrom::sqp::{ConstrainedLsProblem, FomStepProblem, SqpSolver};
use ddrom::{ComposeSpec, SqpOptions};
use ddrom_bench::{bump_state, interior_model, params, periodic_layout, random_batch};

fn fom_kernels(c: &mut Criterion) {
    let layout = periodic_layout(100, 1);
    let p = params(1);
    let x = bump_state(&layout);
    c.bench_function("be_residual_100x100", |b| {
        b.iter(|| be_residual(black_box(&x), &x, &p, &layout.grid).unwrap())
    });
    c.bench_function("be_jacobian_100x100", |b| b.iter(|| be_jacobian(black_box(&x), &p, &layout.grid).unwrap()));
}

fn sqp_step(c: &mut Criterion) {
    let layout = periodic_layout(40, 2);
    let p = params(1);
    let x0 = bump_state(&layout);
    let model = DdModel::new(layout.clone(), &p).unwrap();
    let states = gather(&x0, &model.map);
    let initial: Vec<Vec<f64>> = states.iter().map(|s| s.local()).collect();
    let options = SqpOptions::fom(layout.grid.n_dofs());
    c.bench_function("dd_fom_step_40x40_2x2", |b| {
        let mut solver = SqpSolver::new();
        b.iter(|| {
            let problem = FomStepProblem::new(&model, &states).unwrap();
            solver.solve(&problem, black_box(&initial), &options).unwrap()
        })
    });
    c.bench_function("subdomain_evaluate_20x20", |b| {
        let problem = FomStepProblem::new(&model, &states).unwrap();
        b.iter(|| problem.evaluate(0, black_box(&initial[0])).unwrap())
    });
}

fn decoder(c: &mut Criterion) {
    let m = interior_model(20, 12, 3);
    let y = vec![0.1; 12];
    c.bench_function("decode_interior_648", |b| b.iter(|| m.decode(black_box(&y)).unwrap()));
    c.bench_function("decode_with_jacobian_interior_648", |b| {
        b.iter(|| m.decode_with_jacobian(black_box(&y)).unwrap())
    });
    let batch = random_batch(m.full_dim, 128, 5);
    c.bench_function("train_gradient_interior_batch128", |b| {
        b.iter(|| loss_and_gradients(&m, black_box(&batch), &batch))
    });
}

fn rom_step(c: &mut Criterion) {
    let spec = ComposeSpec {
        blocks_x: 2,
        blocks_y: 2,
        block_nx: 20,
        block_ny: 20,
        bc: ddrom::BoundaryCondition::Periodic,
        x_extent: (0.0, 1.0),
        y_extent: (0.0, 1.0),
    };
    let models = RomModels {
        interior: ddrom::rom::RoleModel::Autoencoder(std::sync::Arc::new(interior_model(20, 12, 9))),
        ..RomModels::identity()
    };
    let rom = compose(&spec, models, &params(1)).unwrap();
    let x0 = bump_state(&rom.fom.layout);
    let latents = rom.encode_state(&x0).unwrap();
    let previous: Vec<Vec<f64>> = (0..rom.n_subdomains()).map(|i| rom.decode_block(i, &latents[i]).unwrap()).collect();
    let problem = ddrom::rom::RomStepProblem::new(&rom, previous).unwrap();
    c.bench_function("rom_block_evaluate_2x2_interior12", |b| {
        b.iter(|| problem.evaluate(0, black_box(&latents[0])).unwrap())
    });
}

criterion_group!(benches, fom_kernels, sqp_step, decoder, rom_step);
criterion_main!(benches);
