use epiassim::scan::ScanBackend;
use epiassim::smc::{
    ess, euler_maruyama, resample, smc_run, Filter, FilterConfig, Observation, OuParams, Particle,
};
use proptest::prelude::*;

fn normalized(raw: Vec<f64>) -> Option<Vec<f64>> {
    let total: f64 = raw.iter().sum();
    (total > 0.0).then(|| raw.iter().map(|w| w / total).collect())
}

fn particle() -> impl Strategy<Value = Particle> {
    (0.0f64..1.0, 0.0f64..1.0, -8.0f64..3.0, -8.0f64..3.0).prop_map(|(a, b, lb, lg)| {
        let s = a;
        let i = (1.0 - s) * b;
        Particle { s, i, r: 1.0 - s - i, log_beta: lb, log_gamma: lg }
    })
}

proptest! {
    #[test]
    fn ess_lies_between_one_and_n(raw in prop::collection::vec(0.0f64..1.0, 1..300)) {
        if let Some(w) = normalized(raw) {
            let e = ess(&w).unwrap();
            prop_assert!(e >= 1.0 - 1e-9 && e <= w.len() as f64 + 1e-9);
        }
    }

    #[test]
    fn resampled_ancestors_are_valid(raw in prop::collection::vec(0.0f64..1.0, 1..300), u in 0.0f64..1.0) {
        if let Some(w) = normalized(raw) {
            let a = resample(&w, u, ScanBackend::Parallel).unwrap();
            prop_assert_eq!(a.len(), w.len());
            prop_assert!(a.iter().all(|&j| j < w.len() && w[j] > 0.0));
            prop_assert!(a.windows(2).all(|p| p[0] <= p[1]));
        }
    }

    #[test]
    fn propagation_stays_on_the_simplex(
        p in particle(),
        dt in 0.01f64..2.0,
        z1 in -4.0f64..4.0,
        z2 in -4.0f64..4.0,
    ) {
        let q = euler_maruyama(&p, dt, &OuParams::default(), z1, z2);
        prop_assert!(q.s >= 0.0 && q.i >= 0.0 && q.r >= 0.0);
        prop_assert!((q.s + q.i + q.r - 1.0).abs() <= 1e-12);
        prop_assert!(q.log_beta.is_finite() && q.log_gamma.is_finite());
    }

    #[test]
    fn weights_stay_normalized(
        ys in prop::collection::vec(0.0f64..0.6, 1..8),
        seed in any::<u64>(),
        interp in 0usize..3,
    ) {
        let cfg = FilterConfig { n_particles: 128, interp_steps: interp, seed, obs_sd: 0.05, latent_sd: 0.05, ..Default::default() };
        let mut f = Filter::new(cfg, 0.01, 0).unwrap();
        for (d, y) in ys.iter().enumerate() {
            let mut ok = true;
            f.assimilate_with(&Observation::new(d as u32 + 1, *y).unwrap(), |s, e| {
                let total: f64 = e.weights.iter().sum();
                ok &= (total - 1.0).abs() <= 1e-9;
                ok &= s.q05_i <= s.q95_i;
                ok &= e.ancestors.iter().all(|&a| a < e.len());
            }).unwrap();
            prop_assert!(ok);
        }
        prop_assert_eq!(f.summaries().len(), 1 + ys.len() * (interp + 1));
    }
}

#[test]
fn single_observation_at_prior_state() {
    // Frozen dynamics with i = 0 stay disease free, and an observation of 0
    // leaves the infected mean at 0.
    let cfg = FilterConfig { n_particles: 256, ou: OuParams::frozen(), ..Default::default() };
    let out = smc_run(&[Observation::new(1, 0.0).unwrap()], &cfg, 0.0).unwrap();
    assert!(out.summaries.iter().all(|s| s.mean_i == 0.0));
}

#[test]
fn full_scale_run_completes() {
    let obs: Vec<Observation> = (1..=50)
        .map(|d| Observation::new(d, 0.002 * (1.0 + d as f64 / 5.0)).unwrap())
        .collect();
    let cfg = FilterConfig { seed: 12, ..Default::default() };
    let out = smc_run(&obs, &cfg, 0.002).unwrap();
    assert_eq!(out.summaries.len(), 101);
    for s in &out.summaries {
        assert!(s.ess >= 1.0 && s.ess <= (1 << 14) as f64 + 1e-6);
        for x in [s.mean_s, s.mean_i, s.mean_r, s.q05_i, s.q95_i] {
            assert!((0.0..=1.0).contains(&x));
        }
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let obs: Vec<Observation> = (1..=20).map(|d| Observation::new(d, 0.01 * d as f64).unwrap()).collect();
    let cfg = FilterConfig { n_particles: 2048, seed: 5, obs_sd: 0.02, latent_sd: 0.02, ..Default::default() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| smc_run(&obs, &cfg, 0.002).unwrap())
    };
    assert_eq!(run(1), run(3));
}
