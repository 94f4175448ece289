#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hubsched::instance::InstanceFile;
use hubsched::milp::{Constraint, MilpModel, ModelMeta, Sense, Var, VarKind};
use hubsched::objective::{NormBounds, Range};
use hubsched::Problem;

pub fn problem(f: InstanceFile) -> Problem {
    Problem::from_instance(&f.to_instance().expect("valid instance")).expect("transformable")
}

fn coefficient(rng: &mut ChaCha8Rng) -> f64 {
    let c: f64 = match rng.gen_range(0..4) {
        0 => rng.gen_range(1..20) as f64,
        1 => rng.gen_range(1e-7..1e-3),
        _ => rng.gen_range(0.01..1e4),
    };
    if rng.gen_bool(0.4) {
        -c
    } else {
        c
    }
}

/// A random model in the normal form the builder produces: each row
/// mentions a variable at most once with a nonzero coefficient, and row
/// names start with their family letter.
pub fn random_model(seed: u64) -> MilpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..40);
    let vars: Vec<Var> = (0..n)
        .map(|i| {
            if rng.gen_bool(0.6) {
                Var {
                    name: format!("x_{i}_{}", rng.gen_range(0..9)),
                    kind: VarKind::Binary,
                    lb: 0.0,
                    ub: 1.0,
                }
            } else {
                let lb = match rng.gen_range(0..3) {
                    0 => f64::NEG_INFINITY,
                    1 => 0.0,
                    _ => -rng.gen_range(0.0..50.0),
                };
                let ub = if rng.gen_bool(0.3) {
                    f64::INFINITY
                } else {
                    rng.gen_range(0.0..500.0)
                };
                Var {
                    name: format!("t_{i}"),
                    kind: VarKind::Continuous,
                    lb,
                    ub,
                }
            }
        })
        .collect();

    let terms = |rng: &mut ChaCha8Rng, max: usize| {
        let k = rng.gen_range(1..=max.min(n));
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        idx[..k].iter().map(|&i| (i, coefficient(rng))).collect::<Vec<_>>()
    };

    let rows = rng.gen_range(0..60);
    let mut constraints = Vec::new();
    for r in 0..rows {
        let family = (b'a' + rng.gen_range(0..12u8)) as char;
        let t = terms(&mut rng, 30);
        constraints.push(Constraint {
            name: format!("{family}_{r}"),
            family,
            terms: t,
            sense: [Sense::Le, Sense::Eq, Sense::Ge][rng.gen_range(0..3)],
            rhs: if rng.gen_bool(0.3) { 0.0 } else { coefficient(&mut rng) },
        });
    }
    let objective = if rng.gen_bool(0.1) { Vec::new() } else { terms(&mut rng, 40) };
    let range = |rng: &mut ChaCha8Rng| {
        let min = rng.gen_range(-10.0..0.0);
        Range {
            min,
            max: min + rng.gen_range(0.0..10.0),
        }
    };
    let bounds = rng.gen_bool(0.7).then(|| NormBounds {
        latency: range(&mut rng),
        energy: range(&mut rng),
        reliability: range(&mut rng),
    });
    let events = (0..rng.gen_range(0..40))
        .map(|i| format!("t_{}_{}", i, rng.gen_range(1..3)))
        .collect();
    MilpModel {
        vars,
        constraints,
        objective,
        objective_offset: coefficient(&mut rng),
        meta: ModelMeta {
            omega_time: rng.gen_range(1.0..1e4),
            omega_rel: 2.0,
            omega: rng.gen_range(1e-9..1e-3),
            deadline: rng.gen_range(0.1..1e3),
            events,
            bounds,
        },
    }
}
