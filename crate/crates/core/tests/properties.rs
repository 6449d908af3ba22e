mod common;

use std::f64::consts::PI;
use std::io::Cursor;

use common::*;
use num_complex::Complex64;
use odmd::batch::{batch_dmd, mini_batch_dmd, weighted_batch_dmd};
use odmd::kernel::{eig, gram, matmul, matvec, measure, pinv_full_row_rank, Mat};
use odmd::online::OnlineState;
use odmd::snapshots::{open_stream, pair_trajectory, read_stream, stack, write_trajectory, SnapshotPair};
use odmd::spectral::{continuous_eigenvalue, rank_dominant, spectrum_of};
use odmd::sysid::{identify_stream, Dictionary, IdMode, SysIdSample, Term};
use odmd::windowed::WindowedState;
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

/// Frobenius norm of `P G − I`.
fn inverse_residual(p: &Mat, g: &Mat) -> f64 {
    let pg = matmul(p, g).unwrap();
    pg.rel_diff(&Mat::identity(p.rows())) * (p.rows() as f64).sqrt()
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn matmul_is_associative(seed in any::<u64>(), r in 1usize..8, k in 1usize..8, l in 1usize..8, c in 1usize..8) {
        let mut g = rng(seed);
        let (a, b, d) = (gaussian_mat(&mut g, r, k), gaussian_mat(&mut g, k, l), gaussian_mat(&mut g, l, c));
        let left = matmul(&matmul(&a, &b).unwrap(), &d).unwrap();
        let right = matmul(&a, &matmul(&b, &d).unwrap()).unwrap();
        prop_assert!(left.rel_diff(&right) <= 1e-10);
    }

    #[test]
    fn matmul_multiplies_are_exact(r in 1usize..10, k in 1usize..10, c in 1usize..10) {
        let mut g = rng(1);
        let (a, b) = (gaussian_mat(&mut g, r, k), gaussian_mat(&mut g, k, c));
        let (_, count) = measure(|| matmul(&a, &b).unwrap());
        prop_assert_eq!(count, (r * k * c) as u64);
    }

    #[test]
    fn pseudoinverse_identities(seed in any::<u64>(), n in 1usize..8, extra in 0usize..30) {
        let mut g = rng(seed);
        let x = gaussian_mat(&mut g, n, n + extra + 2);
        let xp = pinv_full_row_rank(&x).unwrap();
        let xxpx = matmul(&matmul(&x, &xp).unwrap(), &x).unwrap();
        let xpxxp = matmul(&matmul(&xp, &x).unwrap(), &xp).unwrap();
        prop_assert!(xxpx.rel_diff(&x) <= 1e-8);
        prop_assert!(xpxxp.rel_diff(&xp) <= 1e-8);
    }

    #[test]
    fn eigenvalues_sum_to_trace_and_pair_up(seed in any::<u64>(), n in 1usize..12) {
        let mut g = rng(seed);
        let a = gaussian_mat(&mut g, n, n);
        let d = eig(&a);
        let sum: Complex64 = d.eigenvalues.iter().sum();
        let scale = a.frobenius_norm().max(1.0);
        prop_assert!((sum.re - a.trace()).abs() <= 1e-8 * scale);
        prop_assert!(sum.im.abs() <= 1e-8 * scale);
        for mu in d.eigenvalues.iter().filter(|m| m.im != 0.0) {
            prop_assert!(d.eigenvalues.contains(&mu.conj()), "{mu} has no exact conjugate");
        }
    }

    #[test]
    fn trajectory_shift_identity(seed in any::<u64>(), n in 1usize..6, len in 2usize..40) {
        let mut g = rng(seed);
        let states: Vec<Vec<f64>> = (0..len).map(|_| gaussian_vec(&mut g, n)).collect();
        let s = stack(&pair_trajectory(&states).unwrap()).unwrap();
        let k = s.k();
        for j in 0..k - 1 {
            for i in 0..n {
                prop_assert_eq!(s.y[(i, j)], s.x[(i, j + 1)]);
            }
        }
    }

    #[test]
    fn stream_round_trip_is_deterministic(seed in any::<u64>(), n in 1usize..5, len in 2usize..30) {
        let mut g = rng(seed);
        let states: Vec<Vec<f64>> = (0..len).map(|_| gaussian_vec(&mut g, n)).collect();
        let mut bytes = Vec::new();
        write_trajectory(&mut bytes, 0.25, &states).unwrap();
        let (h, first) = open_stream(Cursor::new(bytes.clone()), None).unwrap();
        let first: Vec<SnapshotPair> = first.collect::<Result<_, _>>().unwrap();
        let second: Vec<SnapshotPair> = read_stream(Cursor::new(bytes), h).collect::<Result<_, _>>().unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(first, pair_trajectory(&states).unwrap());
    }

    #[test]
    fn batch_recovers_noiseless_map(seed in any::<u64>(), n in 1usize..10, extra in 0usize..20) {
        let mut g = rng(seed);
        let a = gaussian_mat(&mut g, n, n);
        let pairs = linear_pairs(&mut g, &a, n + extra + 1);
        let sol = batch_dmd(&matrices(&pairs)).unwrap();
        prop_assert!(sol.a.rel_diff(&a) <= 1e-10);
        prop_assert!(inverse_residual(&sol.p, &gram(&matrices(&pairs).x)) <= 1e-10);
    }

    #[test]
    fn appending_a_pair_matches_one_update(seed in any::<u64>(), n in 1usize..10, extra in 0usize..20) {
        let mut g = rng(seed);
        let pairs = noise_pairs(&mut g, n, 2 * n + extra + 1);
        let (head, last) = pairs.split_at(pairs.len() - 1);
        let mut st = OnlineState::init_exact(&matrices(head), 1.0).unwrap();
        st.update(&last[0]).unwrap();
        let direct = batch_dmd(&matrices(&pairs)).unwrap();
        prop_assert!(st.a().rel_diff(&direct.a) <= 1e-10);
    }

    #[test]
    fn unit_forgetting_is_the_unweighted_solve(seed in any::<u64>(), n in 1usize..8) {
        let mut g = rng(seed);
        let s = matrices(&noise_pairs(&mut g, n, 3 * n));
        let (a, b) = (batch_dmd(&s).unwrap(), weighted_batch_dmd(&s, 1.0).unwrap());
        prop_assert_eq!(a.a, b.a);
        prop_assert_eq!(a.p, b.p);
    }

    #[test]
    fn online_state_invariants(seed in any::<u64>(), n in 1usize..8, rho in prop_oneof![Just(1.0), 0.8f64..1.0]) {
        let mut g = rng(seed);
        let pairs = noise_pairs(&mut g, n, 2 * n + 40);
        let init = 2 * n;
        let mut st = OnlineState::init_exact(&matrices(&pairs[..init]), rho).unwrap();
        for k in init..pairs.len() {
            let r = st.update(&pairs[k]).unwrap();
            prop_assert!(r.gamma > 0.0 && r.gamma <= 1.0, "gamma = {}", r.gamma);
            for _ in 0..100 {
                let v = gaussian_vec(&mut g, n);
                let pv = matvec(st.p(), &v).unwrap();
                prop_assert!(v.iter().zip(&pv).map(|(a, b)| a * b).sum::<f64>() > 0.0);
            }
            prop_assert_eq!(st.p().symmetry_residual(), 0.0);
            // ρ P̂ (Σ ρ^{k−i} x xᵀ) = I
            let w = forgetting_weights(rho, k + 1);
            let mut weighted = Mat::zeros(n, n);
            for (p, wt) in pairs[..=k].iter().zip(&w) {
                for i in 0..n {
                    for j in 0..n {
                        weighted[(i, j)] += wt * p.x[i] * p.x[j];
                    }
                }
            }
            prop_assert!(inverse_residual(&st.p().scaled(rho), &weighted) <= 1e-8);
        }
        let oracle = lstsq_oracle(&pairs, &forgetting_weights(rho, pairs.len()));
        prop_assert!(st.a().rel_diff(&oracle) <= 1e-8);
    }

    #[test]
    fn online_multiplies_within_budget(seed in any::<u64>(), n in 1usize..40, rho in prop_oneof![Just(1.0), 0.5f64..1.0]) {
        let mut g = rng(seed);
        let pairs = noise_pairs(&mut g, n, 2 * n + 1);
        let mut st = OnlineState::init_exact(&matrices(&pairs[..2 * n]), rho).unwrap();
        let r = st.update(&pairs[2 * n]).unwrap();
        prop_assert!(r.multiplies <= (4 * n * n + 8 * n) as u64, "{} for n={n}", r.multiplies);
    }

    #[test]
    fn windowed_gamma_inverts_the_capacitance(seed in any::<u64>(), n in 1usize..8, extra in 0usize..10) {
        let mut g = rng(seed);
        let w = n + extra + 2;
        let pairs = noise_pairs(&mut g, n, w + 30);
        let mut st = WindowedState::init_window(&pairs[..w], 1.0).unwrap();
        for pair in &pairs[w..] {
            let old = st.window_contents().next().unwrap().x.clone();
            let p = st.p().clone();
            let (pu0, pu1) = (matvec(&p, &old).unwrap(), matvec(&p, &pair.x).unwrap());
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
            let m = [[-1.0 + d(&old, &pu0), d(&old, &pu1)], [d(&pair.x, &pu0), 1.0 + d(&pair.x, &pu1)]];
            let r = st.slide(pair.clone()).unwrap();
            let gm = r.gamma;
            for i in 0..2 {
                for j in 0..2 {
                    let e = gm[i][0] * m[0][j] + gm[i][1] * m[1][j];
                    let want = if i == j { 1.0 } else { 0.0 };
                    let scale = 1.0 + gm[i][0].abs() * m[0][j].abs() + gm[i][1].abs() * m[1][j].abs();
                    prop_assert!((e - want).abs() <= 1e-10 * scale, "entry ({i},{j}) = {e}");
                }
            }
            prop_assert!(r.multiplies <= (8 * n * n + 32 * n) as u64);
            let window: Vec<SnapshotPair> = st.window_contents().cloned().collect();
            prop_assert!(inverse_residual(st.p(), &gram(&matrices(&window).x)) <= 1e-8);
        }
        let tail = &pairs[pairs.len() - w..];
        prop_assert!(st.a().rel_diff(&mini_batch_dmd(tail, w).unwrap().a) <= 1e-9);
    }

    #[test]
    fn windowed_and_online_recover_a_fixed_map(seed in any::<u64>(), n in 1usize..8) {
        let mut g = rng(seed);
        let a = gaussian_mat(&mut g, n, n);
        let w = 2 * n + 2;
        let pairs = linear_pairs(&mut g, &a, w + 50);
        let mut win = WindowedState::init_window(&pairs[..w], 1.0).unwrap();
        let mut on = OnlineState::init_exact(&matrices(&pairs[..w]), 1.0).unwrap();
        for p in &pairs[w..] {
            win.slide(p.clone()).unwrap();
            on.update(p).unwrap();
        }
        prop_assert!(win.a().rel_diff(&a) <= 1e-9);
        prop_assert!(on.a().rel_diff(&a) <= 1e-9);
    }

    #[test]
    fn linear_identification_is_online_on_augmented_pairs(seed in any::<u64>(), n in 1usize..4, p in 1usize..3) {
        let mut g = rng(seed);
        let samples: Vec<SysIdSample> = (0..4 * (n + p) + 10)
            .map(|_| SysIdSample { x: gaussian_vec(&mut g, n), u: gaussian_vec(&mut g, p), x_next: gaussian_vec(&mut g, n) })
            .collect();
        let dict = Dictionary::linear(n, p);
        let (model, _) = identify_stream(samples.clone(), &dict, IdMode::Online { rho: 1.0 }).unwrap();
        let pairs: Vec<SnapshotPair> = samples
            .iter()
            .enumerate()
            .map(|(j, s)| SnapshotPair::new([s.x.clone(), s.u.clone()].concat(), s.x_next.clone(), j))
            .collect();
        let q = n + p;
        let mut st = OnlineState::init_exact(&matrices(&pairs[..2 * q]), 1.0).unwrap();
        for pair in &pairs[2 * q..] {
            st.update(pair).unwrap();
        }
        prop_assert_eq!(&model.a_hat, st.a());
    }

    #[test]
    fn permuting_terms_permutes_coefficients(seed in any::<u64>(), shift in 1usize..5) {
        let mut g = rng(seed);
        let dict = Dictionary::quadratic(1, 1);
        let q = dict.q();
        let terms: Vec<Term> = (0..q).map(|i| dict.terms()[(i + shift) % q]).collect();
        let permuted = Dictionary::new(1, 1, terms).unwrap();
        let samples: Vec<SysIdSample> = (0..3 * q)
            .map(|_| SysIdSample { x: gaussian_vec(&mut g, 1), u: gaussian_vec(&mut g, 1), x_next: gaussian_vec(&mut g, 1) })
            .collect();
        let mode = IdMode::Online { rho: 1.0 };
        let (a, _) = identify_stream(samples.clone(), &dict, mode).unwrap();
        let (b, _) = identify_stream(samples, &permuted, mode).unwrap();
        for i in 0..q {
            let (x, y) = (a.a_hat[(0, (i + shift) % q)], b.a_hat[(0, i)]);
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn noiseless_recovery_with_a_quadratic_dictionary(seed in any::<u64>()) {
        let mut g = rng(seed);
        let dict = Dictionary::quadratic(2, 1);
        let coef = gaussian_mat(&mut g, 2, dict.q()).scaled(0.3);
        let samples: Vec<SysIdSample> = (0..4 * dict.q())
            .map(|_| {
                let (x, u) = (gaussian_vec(&mut g, 2), gaussian_vec(&mut g, 1));
                let x_next = matvec(&coef, &odmd::sysid::lift(&dict, &x, &u).unwrap()).unwrap();
                SysIdSample { x, u, x_next }
            })
            .collect();
        let (model, _) = identify_stream(samples, &dict, IdMode::Windowed { w: 2 * dict.q(), rho: 1.0 }).unwrap();
        prop_assert!(model.a_hat.rel_diff(&coef) <= 1e-8);
    }

    #[test]
    fn continuous_eigenvalues_round_trip(re in -3.0f64..3.0, im in -3.0f64..3.0, dt in 1e-3f64..2.0) {
        let mu = Complex64::new(re, im);
        prop_assume!(mu.norm() > 1e-6);
        let lambda = continuous_eigenvalue(mu, dt);
        prop_assert!(((lambda * dt).exp() - mu).norm() <= 1e-12 * mu.norm());
        let phase = lambda.im * dt;
        prop_assert!(phase > -PI && phase <= PI);
    }

    #[test]
    fn spectra_of_real_matrices_are_conjugate_closed(seed in any::<u64>(), n in 1usize..10, dt in 0.01f64..1.0) {
        let mut g = rng(seed);
        let a = gaussian_mat(&mut g, n, n);
        let s = spectrum_of(&a, dt, Some(&gaussian_vec(&mut g, n))).unwrap();
        for (i, mu) in s.mu.iter().enumerate() {
            prop_assert!(s.mu.contains(&mu.conj()));
            if !s.is_degenerate(i) {
                prop_assert!(s.lambda[i].im * dt > -PI && s.lambda[i].im * dt <= PI);
            }
        }
        let rank = rank_dominant(&s, n);
        prop_assert!(rank.indices.iter().all(|&i| s.freq_hz[i] >= 0.0));
    }

    #[test]
    fn ranking_ignores_amplitude_scale(seed in any::<u64>(), n in 1usize..10, c in 1e-6f64..1e6) {
        let mut g = rng(seed);
        let a = gaussian_mat(&mut g, n, n);
        let s = spectrum_of(&a, 0.1, Some(&gaussian_vec(&mut g, n))).unwrap();
        let mut scaled = s.clone();
        for v in &mut scaled.amplitudes {
            *v *= c;
        }
        prop_assert_eq!(rank_dominant(&s, n), rank_dominant(&scaled, n));
    }
}

#[test]
fn online_exactness_holds_over_a_long_stream() {
    let mut g = rng(77);
    let n = 64;
    let pairs = noise_pairs(&mut g, n, 10_000);
    let mut st = OnlineState::init_exact(&matrices(&pairs[..2 * n]), 1.0).unwrap();
    for p in &pairs[2 * n..] {
        st.update(p).unwrap();
    }
    let direct = batch_dmd(&matrices(&pairs)).unwrap();
    assert!(st.a().rel_diff(&direct.a) <= 1e-8, "{}", st.a().rel_diff(&direct.a));
}

#[test]
fn sensor_file_round_trips_bitwise() {
    use odmd::harness::sensors::{sensor_signals, SensorConfig};
    let cfg = SensorConfig { noise: 0.05, ..SensorConfig::default() };
    let states = sensor_signals(&cfg);
    assert_eq!((states.len(), states[0].len()), (20480, 13));
    let mut bytes = Vec::new();
    write_trajectory(&mut bytes, cfg.dt(), &states).unwrap();
    let (h, stream) = open_stream(Cursor::new(bytes), None).unwrap();
    assert_eq!((h.n, h.dt), (13, cfg.dt()));
    let pairs: Vec<SnapshotPair> = stream.collect::<Result<_, _>>().unwrap();
    assert_eq!(pairs, pair_trajectory(&states).unwrap());
}
