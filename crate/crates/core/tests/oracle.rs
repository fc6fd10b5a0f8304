mod common;

use common::{random_seq, scalar_sequence, scalar_step};
use gatecell::cells::{
    cell_step, forward_sequence, gate_forward, init_params, CellState, GateVariant,
};
use gatecell::linalg::{Matrix, Rng};

const TOL: f64 = 1e-12;

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= TOL)
}

#[test]
fn gate_forward_matches_scalar_loops() {
    for v in GateVariant::ALL {
        for seed in 0..5 {
            let mut rng = Rng::new(seed);
            let (p, _) = init_params(v, 3, 4, &mut rng, 0.7).unwrap();
            let x = rng.uniform_matrix(-2.0, 2.0, 3, 3).unwrap();
            let h = rng.uniform_matrix(-1.0, 1.0, 3, 4).unwrap();
            let g = gate_forward(&p, &x, &h).unwrap();
            for e in 0..3 {
                let s = scalar_step(&p, x.row(e), h.row(e), &[0.0; 4]);
                assert!(close(g.i.row(e), &s.i), "{v} i");
                assert!(close(g.f.row(e), &s.f), "{v} f");
                assert!(close(g.o.row(e), &s.o), "{v} o");
            }
        }
    }
}

#[test]
fn cell_step_matches_scalar_loops() {
    for v in GateVariant::ALL {
        let mut rng = Rng::new(40);
        let (p, _) = init_params(v, 3, 4, &mut rng, 0.0).unwrap();
        let x = rng.uniform_matrix(-1.0, 1.0, 2, 3).unwrap();
        let state = CellState {
            h: rng.uniform_matrix(-1.0, 1.0, 2, 4).unwrap(),
            c: rng.uniform_matrix(-1.0, 1.0, 2, 4).unwrap(),
        };
        let (next, cache) = cell_step(&p, &x, &state).unwrap();
        for e in 0..2 {
            let s = scalar_step(&p, x.row(e), state.h.row(e), state.c.row(e));
            assert!(close(next.h.row(e), &s.h), "{v} h");
            assert!(close(next.c.row(e), &s.c), "{v} c");
            assert!(close(cache.g.row(e), &s.g), "{v} g");
        }
    }
}

#[test]
fn sequences_match_scalar_loops() {
    for v in GateVariant::ALL {
        for seed in 0..4u64 {
            let mut rng = Rng::new(100 + seed);
            let (m, n, t, b) = (
                1 + rng.below(5),
                1 + rng.below(6),
                1 + rng.below(8),
                1 + rng.below(4),
            );
            let (p, _) = init_params(v, m, n, &mut rng, 1.0).unwrap();
            let xs = random_seq(&mut rng, t, b, m);
            let h0 = rng.uniform_matrix(-0.5, 0.5, b, n).unwrap();
            let c0 = rng.uniform_matrix(-0.5, 0.5, b, n).unwrap();
            let (h, caches) = forward_sequence(&p, &xs, &h0, &c0).unwrap();
            assert_eq!(caches.len(), t);
            let want = scalar_sequence(&p, &xs, &h0, &c0);
            assert!(
                close(h.as_slice(), want.as_slice()),
                "{v} m={m} n={n} T={t} B={b}"
            );
        }
    }
}

#[test]
fn bias_only_gates_ignore_inputs() {
    let mut rng = Rng::new(9);
    let (p, _) = init_params(GateVariant::BiasOnly, 4, 6, &mut rng, 1.0).unwrap();
    let first = gate_forward(&p, &Matrix::zeros(1, 4), &Matrix::zeros(1, 6)).unwrap();
    for _ in 0..100 {
        let x = rng.uniform_matrix(-10.0, 10.0, 1, 4).unwrap();
        let h = rng.uniform_matrix(-1.0, 1.0, 1, 6).unwrap();
        assert_eq!(gate_forward(&p, &x, &h).unwrap(), first);
    }
}
