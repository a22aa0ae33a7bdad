use lipnet::admm::{
    dual_update, lip_update, loss_update, select_t, train_enforced, train_regularized, write_trace_csv, AdmmConfig,
    AdmmState, Mode, TRACE_HEADER,
};
use lipnet::cert::{build_m, certify, CertifyMode, DiagonalMultiplier};
use lipnet::nn::{accuracy, loss, sgd_train, Activation, Augment, LossKind, Network, SgdConfig, Targets};
use lipnet::sdp::max_eigenvalue;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs(n_per_class: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [(0.5, 0.8), (0.24, 0.35), (0.76, 0.35)];
    let mut x = DMatrix::zeros(2, 3 * n_per_class);
    let mut y = Vec::new();
    for (c, &(cx, cy)) in centers.iter().enumerate() {
        for i in 0..n_per_class {
            let col = c * n_per_class + i;
            x[(0, col)] = cx + 0.1 * (rng.random::<f64>() - 0.5) * 2.0;
            x[(1, col)] = cy + 0.1 * (rng.random::<f64>() - 0.5) * 2.0;
            y.push(c);
        }
    }
    (x, y)
}

fn sgd(epochs: usize, lr: f64, seed: u64) -> SgdConfig<f64> {
    SgdConfig { epochs, batch_size: 16, learning_rate: lr, seed, l2_lambda: 0.0 }
}

fn trained_classifier() -> (Network<f64>, DMatrix<f64>, Vec<usize>) {
    let (x, y) = blobs(40, 1);
    let net = Network::glorot(&[2, 6, 3], Activation::Tanh, 3).unwrap();
    let net = sgd_train(&net, &x, Targets::Classes(&y), LossKind::CrossEntropy, &sgd(100, 0.5, 2), None).unwrap();
    (net, x, y)
}

fn cosine_data() -> (DMatrix<f64>, DMatrix<f64>) {
    let m = 64;
    let x = DMatrix::from_fn(1, m, |_, j| -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * j as f64 / (m - 1) as f64);
    let t = x.map(f64::cos);
    (x, t)
}

#[test]
fn dual_update_is_exact_affine_step() {
    let y = vec![DMatrix::zeros(2, 2)];
    let w = vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])];
    let wb = vec![DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 1.0, 5.0])];
    let y1 = dual_update(&y, &w, &wb, 0.25);
    assert_eq!(y1[0], (&w[0] - &wb[0]) * 0.25);
    assert_eq!(dual_update(&y1, &w, &w, 0.25), y1);
    let y2 = dual_update(&y1, &w, &wb, 0.25);
    assert_eq!(y2[0], (&w[0] - &wb[0]) * 0.5);
}

#[test]
fn loss_step_with_zero_rate_keeps_weights() {
    let (net, x, y) = trained_classifier();
    let state = AdmmState::from_network(&net, 1.0);
    let cfg = AdmmConfig::new(
        Mode::Regularize { mu: 1e-3 },
        DiagonalMultiplier::identity(6),
        LossKind::CrossEntropy,
        sgd(1, 0.0, 0),
    );
    let out = loss_update(&state, &net, &x, Targets::Classes(&y), &cfg).unwrap();
    assert_eq!(out.weights(), net.weights());
}

#[test]
fn large_penalty_pins_loss_step_to_consensus() {
    let (net, x, y) = trained_classifier();
    let state = AdmmState::from_network(&net, 1.0);
    let mut cfg = AdmmConfig::new(
        Mode::Regularize { mu: 1e-3 },
        DiagonalMultiplier::identity(6),
        LossKind::CrossEntropy,
        sgd(1, 1e-6, 0),
    );
    cfg.rho = 1e6;
    let out = loss_update(&state, &net, &x, Targets::Classes(&y), &cfg).unwrap();
    let diff: f64 = out.weights().iter().zip(&state.w_bar).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
    let scale: f64 = state.w_bar.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
    assert!(diff <= 1e-3 * scale, "{diff} vs {scale}");
}

#[test]
fn augmented_objective_decreases_over_inner_epochs() {
    let (net, x, y) = trained_classifier();
    let mut state = AdmmState::from_network(&net, 1.0);
    state.w_bar = net.weights().iter().map(|w| w * 0.5).collect();
    state.y = net.weights().iter().map(|w| w * 0.01).collect();
    let aug = Augment { y: &state.y, w_bar: &state.w_bar, rho: 0.25 };
    let (_, hist) = lipnet::nn::sgd_train_with_history(
        &net,
        &x,
        Targets::Classes(&y),
        LossKind::CrossEntropy,
        &sgd(20, 0.05, 4),
        Some(&aug),
    )
    .unwrap();
    let first: f64 = hist[..5].iter().sum::<f64>() / 5.0;
    let last: f64 = hist[15..].iter().sum::<f64>() / 5.0;
    assert!(last <= first, "{first} -> {last}");
    let begin = loss(&net, &x, Targets::Classes(&y), LossKind::CrossEntropy, 0.0).unwrap() + aug.value(&net).unwrap();
    assert!(hist[19] <= begin);
}

#[test]
fn lmi_step_without_weighting_projects_onto_feasible_set() {
    let (net, _, _) = trained_classifier();
    let t = select_t(&net).unwrap();
    let cfg = AdmmConfig::new(Mode::Regularize { mu: 0.0 }, t.clone(), LossKind::CrossEntropy, sgd(1, 0.1, 0));

    // Already feasible for some L2: projection is the identity.
    let state = AdmmState::from_network(&net, 1.0);
    let up = lip_update(&state, net.activation(), &cfg).unwrap();
    let diff: f64 = up.w_bar.iter().zip(&state.w).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
    assert!(diff <= 1e-4, "{diff}");

    // Inflated weights violate the hidden/output block for every L2; the result must beat
    // every rescaling of W that is feasible at the pinned L2.
    let mut big = AdmmState::from_network(&net, 1.0);
    big.w = net.weights().iter().map(|w| w * 4.0).collect();
    let up = lip_update(&big, net.activation(), &cfg).unwrap();
    let teff = t.floored(cfg.t_floor);
    let m = build_m(&net.with_weights(up.w_bar.clone()).unwrap(), up.l2 * (1.0 + 1e-9) + 1e-12, &teff).unwrap();
    assert!(max_eigenvalue(&m) <= 1e-8 * (1.0 + m.amax()));
    let dist = |ws: &[DMatrix<f64>]| ws.iter().zip(&big.w).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
    let d_star = dist(&up.w_bar);
    for i in 1..=40 {
        let c = i as f64 / 10.0;
        let cand: Vec<_> = big.w.iter().map(|w| w * (c / 4.0)).collect();
        let cand_net = net.with_weights(cand.clone()).unwrap();
        let b = certify(&cand_net, &CertifyMode::FixedT(teff.clone()));
        // with no weight on L2 the step pins L2 at 1e4 * max(1, l2) = 1e4
        if b.is_ok_and(|b| b.bound <= 100.0) {
            assert!(d_star <= dist(&cand) + 1e-5, "c={c}: {d_star} > {}", dist(&cand));
        }
    }
}

#[test]
fn lmi_step_bound_matches_returned_l2_and_shrinks_with_weight() {
    let (net, _, _) = trained_classifier();
    let t = select_t(&net).unwrap();
    let state = AdmmState::from_network(&net, 1.0);
    let mut last = f64::INFINITY;
    for mu in [1e-5, 1e-4, 1e-3, 1e-2, 1e-1] {
        let cfg = AdmmConfig::new(Mode::Regularize { mu }, t.clone(), LossKind::CrossEntropy, sgd(1, 0.1, 0));
        let up = lip_update(&state, net.activation(), &cfg).unwrap();
        let b = certify(&net.with_weights(up.w_bar.clone()).unwrap(), &CertifyMode::FixedT(t.floored(cfg.t_floor)))
            .unwrap()
            .bound;
        assert!(b * b <= up.l2 + 1e-6);
        assert!(up.l2 <= last * (1.0 + 1e-6) + 1e-9, "mu={mu}: {} after {last}", up.l2);
        last = up.l2;
    }
}

#[test]
fn pure_projection_regime_shrinks_consensus_gap() {
    let (net, _, _) = trained_classifier();
    let t = select_t(&net).unwrap();
    let cfg = AdmmConfig::new(Mode::Regularize { mu: 0.0 }, t, LossKind::CrossEntropy, sgd(1, 0.1, 0));
    let mut state = AdmmState::from_network(&net, 1.0);
    state.w = net.weights().iter().map(|w| w * 3.0).collect();
    let mut prev = f64::INFINITY;
    for k in 1..=8 {
        state.k = k;
        if k > 1 {
            // exact loss step when the loss is identically zero
            state.w = state.w_bar.iter().zip(&state.y).map(|(wb, y)| wb - y / cfg.rho).collect();
        }
        let up = lip_update(&state, net.activation(), &cfg).unwrap();
        state.w_bar = up.w_bar;
        state.y = dual_update(&state.y, &state.w, &state.w_bar, cfg.rho);
        let gap: f64 = state.w.iter().zip(&state.w_bar).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
        assert!(gap <= prev + 1e-6, "k={k}: {gap} > {prev}");
        prev = gap;
    }
}

#[test]
fn regularized_run_keeps_certificates_and_trace() {
    let (net, x, y) = trained_classifier();
    let t = select_t(&net).unwrap();
    let mut cfg = AdmmConfig::new(Mode::Regularize { mu: 1e-2 }, t, LossKind::CrossEntropy, sgd(5, 0.2, 7));
    cfg.max_outer_iters = 6;
    cfg.eps_primal = Some(0.0);
    cfg.eps_dual = Some(0.0);
    let out = train_regularized(&net, &x, Targets::Classes(&y), &cfg).unwrap();
    assert_eq!(out.trace.len(), 6);
    assert!(!out.converged);
    for (i, row) in out.trace.iter().enumerate() {
        assert_eq!(row.k, i + 1);
        assert!(row.r_primal.is_finite() && row.r_dual.is_finite());
        assert!(row.certified_bound * row.certified_bound <= row.l2 + 1e-6);
    }
    let last = out.trace.last().unwrap();
    assert!(last.certified_bound < out.initial_bound, "{} vs {}", last.certified_bound, out.initial_bound);
    assert_eq!(out.network.weights(), out.state.w_bar.as_slice());

    let mut buf = Vec::new();
    write_trace_csv(&out.trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRACE_HEADER.join(","));
    assert_eq!(text.lines().count(), 7);

    let again = train_regularized(&net, &x, Targets::Classes(&y), &cfg).unwrap();
    assert_eq!(again.network, out.network);
    for (a, b) in again.trace.iter().zip(&out.trace) {
        assert_eq!((a.r_primal, a.r_dual, a.l2, a.cel_train), (b.r_primal, b.r_dual, b.l2, b.cel_train));
    }
}

#[test]
fn feasible_start_without_weighting_stays_at_consensus() {
    let (net, x, y) = trained_classifier();
    // large multiplier keeps W1'W1 <= 2T for every iterate
    let t = DiagonalMultiplier::new(DVector::from_element(6, 1e3)).unwrap();
    let mut cfg = AdmmConfig::new(Mode::Regularize { mu: 0.0 }, t, LossKind::CrossEntropy, sgd(2, 0.1, 1));
    cfg.max_outer_iters = 4;
    cfg.eps_primal = Some(1.0);
    cfg.eps_dual = Some(1.0);
    let out = train_regularized(&net, &x, Targets::Classes(&y), &cfg).unwrap();
    for row in &out.trace {
        assert!(row.r_primal <= 1e-4, "{}", row.r_primal);
    }
}

#[test]
fn loose_enforced_bound_behaves_like_unconstrained_training() {
    let (net, x, y) = trained_classifier();
    let t = select_t(&net).unwrap();
    let base = certify(&net, &CertifyMode::FixedT(t.floored(1e-6))).unwrap().bound;
    let mut cfg = AdmmConfig::new(Mode::Enforce { l_des: 2.0 * base }, t.clone(), LossKind::CrossEntropy, sgd(5, 0.2, 3));
    cfg.max_outer_iters = 5;
    let enforced = train_enforced(&net, &x, Targets::Classes(&y), &cfg).unwrap();
    cfg.mode = Mode::Regularize { mu: 0.0 };
    let free = train_regularized(&net, &x, Targets::Classes(&y), &cfg).unwrap();
    let a = accuracy(&enforced.network, &x, &y).unwrap();
    let b = accuracy(&free.network, &x, &y).unwrap();
    assert!((a - b).abs() <= 0.01, "{a} vs {b}");
}

#[test]
fn enforced_bound_holds_on_every_iterate_of_cosine_fit() {
    let (x, tgt) = cosine_data();
    let init = Network::glorot(&[1, 8, 1], Activation::Tanh, 5).unwrap();
    let nominal = sgd_train(&init, &x, Targets::Values(&tgt), LossKind::MeanSquaredError, &sgd(400, 0.1, 1), None).unwrap();
    let t = select_t(&nominal).unwrap();
    let l_des = 0.99;
    let mut cfg = AdmmConfig::new(Mode::Enforce { l_des }, t.clone(), LossKind::MeanSquaredError, sgd(20, 0.05, 9));
    cfg.max_outer_iters = 20;
    cfg.eps_primal = Some(0.0);
    cfg.eps_dual = Some(0.0);
    let out = train_enforced(&nominal, &x, Targets::Values(&tgt), &cfg).unwrap();
    assert_eq!(out.trace.len(), 20);
    assert!(out.initial_bound <= l_des * (1.0 + 1e-6));
    for row in &out.trace {
        assert!(row.certified_bound <= l_des * (1.0 + 1e-6), "k={}: {}", row.k, row.certified_bound);
        let b = certify(&nominal.with_weights(out.state.w_bar.clone()).unwrap(), &CertifyMode::FixedT(out.t.clone()));
        assert!(b.is_ok());
    }
    let fit = loss(&out.network, &x, Targets::Values(&tgt), LossKind::MeanSquaredError, 0.0).unwrap();
    let free = loss(&nominal, &x, Targets::Values(&tgt), LossKind::MeanSquaredError, 0.0).unwrap();
    let nominal_bound = certify(&nominal, &CertifyMode::OptimizeT).unwrap().bound;
    println!("cosine fit: enforced mse {fit:e}, unconstrained mse {free:e}, unconstrained bound {nominal_bound}");
    assert!(fit > free, "{fit} <= {free}");
}

#[test]
fn infeasible_modes_are_rejected() {
    let (net, x, y) = trained_classifier();
    let t = DiagonalMultiplier::identity(6);
    let cfg = AdmmConfig::new(Mode::Enforce { l_des: -1.0 }, t.clone(), LossKind::CrossEntropy, sgd(1, 0.1, 0));
    assert!(train_enforced(&net, &x, Targets::Classes(&y), &cfg).is_err());
    let cfg = AdmmConfig::new(Mode::Enforce { l_des: 1.0 }, t, LossKind::CrossEntropy, sgd(1, 0.1, 0));
    assert!(train_regularized(&net, &x, Targets::Classes(&y), &cfg).is_err());
}
