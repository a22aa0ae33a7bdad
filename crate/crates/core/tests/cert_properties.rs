use lipnet::cert::{
    build_m, build_p, certify, empirical_lower_bound, incremental_form, lipsdp_program, trivial_bound, CertifyMode,
    DiagonalMultiplier, Sampler,
};
use lipnet::nn::fixtures::cosine_network;
use lipnet::nn::{Activation, Network};
use lipnet::sdp::{self, bisect_feasibility, max_eigenvalue, SolveOptions, SolveStatus};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_net(rng: &mut ChaCha8Rng, max_hidden_layers: usize, act: Activation) -> Network<f64> {
    let layers = rng.random_range(1..=max_hidden_layers);
    let dims: Vec<usize> = (0..layers + 2).map(|_| rng.random_range(1..=5)).collect();
    let weights = dims
        .windows(2)
        .map(|d| DMatrix::from_fn(d[1], d[0], |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let biases = dims[1..].iter().map(|&d| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect();
    Network::new(dims, weights, biases, act).unwrap()
}

#[test]
fn schur_form_and_full_form_agree_on_feasibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut feasible = 0;
    for case in 0..100 {
        let act = Activation::ALL[case % 3];
        let net = random_net(&mut rng, 3, act);
        let n = net.hidden_neurons();
        let t = DiagonalMultiplier::new(DVector::from_fn(n, |_, _| rng.random_range(0.1..3.0))).unwrap();
        let l2 = rng.random_range(0.0..4.0);
        let p = max_eigenvalue(&build_p(&net, l2, &t.to_matrix()).unwrap());
        let m = max_eigenvalue(&build_m(&net, l2, &t).unwrap());
        assert_eq!(p <= 1e-8, m <= 1e-8, "case {case}: max eig P {p}, M {m}");
        feasible += usize::from(p <= 1e-8);
    }
    // both verdicts must actually occur for the check to mean anything
    assert!(feasible > 0 && feasible < 100, "{feasible}");
}

#[test]
fn certified_bounds_are_sandwiched() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..30 {
        let act = Activation::ALL[case % 3];
        let net = random_net(&mut rng, 3, act);
        let cert = certify(&net, &CertifyMode::OptimizeT).unwrap();
        let sampler = Sampler::cube(net.input_dim(), -2.0, 2.0, 200, 200, case as u64);
        let lower = empirical_lower_bound(&net, &sampler).unwrap();
        assert!(lower <= cert.bound * (1.0 + 1e-9) + 1e-12, "case {case}: {lower} > {}", cert.bound);
        if net.hidden_layers() == 1 {
            let triv = trivial_bound(&net).bound;
            assert!(cert.bound <= triv + 1e-6, "case {case}: {} > {triv}", cert.bound);
        }
    }
}

#[test]
fn feasibility_is_monotone_in_l() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..30 {
        let net = random_net(&mut rng, 2, Activation::Tanh);
        let n = net.hidden_neurons();
        let t = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.5..3.0)));
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let l2 = 0.25 * k as f64;
            let e = max_eigenvalue(&build_p(&net, l2, &t).unwrap());
            assert!(e <= prev + 1e-12);
            prev = e;
        }
    }
}

#[test]
fn scaling_the_output_layer_scales_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..5 {
        let net = random_net(&mut rng, 2, Activation::Tanh);
        let base = certify(&net, &CertifyMode::OptimizeT).unwrap().bound;
        for c in [-2.0, 0.5, 3.0] {
            let mut w = net.weights().to_vec();
            let last = w.len() - 1;
            w[last] *= c;
            let scaled = certify(&net.with_weights(w).unwrap(), &CertifyMode::OptimizeT).unwrap().bound;
            let expected = base * f64::abs(c);
            assert!((scaled - expected).abs() <= 1e-4 * expected.max(1e-3), "{scaled} vs {expected}");
        }
    }
}

#[test]
fn diagonal_multipliers_satisfy_the_incremental_constraint() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for act in Activation::ALL {
        for _ in 0..20_000 {
            let t = DMatrix::from_diagonal(&DVector::from_fn(3, |_, _| rng.random_range(0.0..5.0)));
            let x = DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
            let y = DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
            let v = incremental_form(act, &t, &x, &y).unwrap();
            assert!(v >= -1e-12, "{act}: {v}");
        }
    }
}

#[test]
fn direct_program_solve_matches_certificate() {
    let net = cosine_network::<f64>();
    let cert = certify(&net, &CertifyMode::OptimizeT).unwrap();
    let opts = SolveOptions::default();
    let res = sdp::solve(&lipsdp_program(&net), &opts).unwrap();
    assert_eq!(res.status, SolveStatus::Optimal);
    let l2 = res.scalar("L2").unwrap();
    let rel = (l2 - cert.bound * cert.bound).abs() / l2.max(1.0);
    assert!(rel <= 2.0 * opts.eps_opt, "{l2} vs {}", cert.bound * cert.bound);
}

#[test]
fn bisection_with_optimal_multiplier_matches_certificate() {
    let net = cosine_network::<f64>();
    let cert = certify(&net, &CertifyMode::OptimizeT).unwrap();
    let t = cert.multiplier.clone().unwrap().to_matrix();
    let l = bisect_feasibility(
        |l: f64| max_eigenvalue(&build_p(&net, l * l, &t).unwrap()) <= 1e-8,
        0.0,
        2.0,
        1e-7,
    )
    .unwrap();
    assert!((l - cert.bound).abs() <= 1e-4, "{l} vs {}", cert.bound);
}

#[test]
fn fixed_multiplier_recertification_reproduces_optimized_bound() {
    let net = cosine_network::<f64>();
    let opt = certify(&net, &CertifyMode::OptimizeT).unwrap();
    let t = opt.multiplier.clone().unwrap();
    assert!(t.lambda().iter().all(|v| *v > 0.0));
    let fixed = certify(&net, &CertifyMode::FixedT(t)).unwrap();
    assert!((fixed.bound - opt.bound).abs() <= 1e-9 * opt.bound);
    println!("cosine network certified bound {}", opt.bound);
}
