use expstable::decoration::DecorationSpec;
use expstable::model::DpppModel;
use expstable::stability::{check_superposition_shift, Verdict};
use expstable::stats::{chi2_homogeneity, covariance, ks_two_sample, Accumulator};
use expstable::{DecorationLaw, DpppSpec, Execution, Window};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

fn spec(d: DecorationLaw, lo: f64, seed: u64) -> DpppSpec {
    DpppSpec::new(d, 0.0, Window::above(lo).unwrap(), seed).unwrap()
}

fn counts(samples: &[expstable::sampler::RandomMeasureSample], w: Window) -> Vec<u64> {
    samples.iter().map(|z| z.config.mass_in(&w).round() as u64).collect()
}

/// A narrow window and a wide window restricted to the narrow one must give
/// the same law: nothing outside the narrow window can leak in.
#[test]
fn window_sampling_is_exact() {
    let d = DecorationSpec::named("staircase").build().unwrap();
    let n = 20_000;
    let narrow = spec(d.clone(), -1.0, 1).sample_replicas(n, Execution::Parallel).unwrap();
    let wide = spec(d, -6.0, 2).sample_replicas(n, Execution::Parallel).unwrap();
    let top = |s: &[expstable::sampler::RandomMeasureSample]| -> Vec<f64> {
        s.iter()
            .map(|z| {
                z.config
                    .atoms()
                    .iter()
                    .map(|a| a.position)
                    .filter(|&x| x >= -1.0)
                    .fold(-1.0, f64::max)
            })
            .collect()
    };
    let ks = ks_two_sample(&top(&narrow), &top(&wide));
    assert!(ks.p_value > 0.001, "{ks:?}");
    let w = Window::new(-1.0, 0.5).unwrap();
    let chi = chi2_homogeneity(&counts(&narrow, w), &counts(&wide, w));
    assert!(chi.p_value > 0.001, "{chi:?}");
}

/// Poisson counts with the `e^{-x}` mass, and no correlation between
/// disjoint intervals.
#[test]
fn disjoint_interval_counts_are_independent_poisson() {
    let n = 20_000;
    let samples = spec(DecorationLaw::dirac0(), -2.0, 3)
        .sample_replicas(n, Execution::Parallel)
        .unwrap();
    let a = Window::new(-2.0, -1.0).unwrap();
    let b = Window::new(0.0, 1.5).unwrap();
    for w in [a, b] {
        let c = counts(&samples, w);
        let pois = Poisson::new(w.exp_mass()).unwrap();
        let max = *c.iter().max().unwrap();
        let mut observed = vec![0f64; max as usize + 1];
        for &k in &c {
            observed[k as usize] += 1.0;
        }
        // Pool the upper tail until every expected count is at least 5.
        let mut stat = 0.0;
        let mut dof = 0usize;
        let (mut o_acc, mut e_acc) = (0.0, 0.0);
        for k in 0..=max {
            o_acc += observed[k as usize];
            e_acc += n as f64 * pois.pmf(k);
            if e_acc >= 5.0 && n as f64 * (1.0 - pois_cdf(&pois, k)) >= 5.0 {
                stat += (o_acc - e_acc).powi(2) / e_acc;
                dof += 1;
                o_acc = 0.0;
                e_acc = 0.0;
            }
        }
        let tail_e = n as f64 - (0..=max).map(|k| n as f64 * pois.pmf(k)).sum::<f64>() + e_acc;
        stat += (o_acc - tail_e).powi(2) / tail_e;
        let p = ChiSquared::new(dof as f64).unwrap().sf(stat);
        assert!(p > 0.001, "window {w:?}: chi2 {stat} on {dof} dof, p {p}");
    }
    let ca: Vec<f64> = counts(&samples, a).iter().map(|&x| x as f64).collect();
    let cb: Vec<f64> = counts(&samples, b).iter().map(|&x| x as f64).collect();
    let corr = covariance(&ca, &cb)
        / (Accumulator::from_values(&ca).variance() * Accumulator::from_values(&cb).variance()).sqrt();
    assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "{corr}");
}

fn pois_cdf(p: &Poisson, k: u64) -> f64 {
    (0..=k).map(|j| p.pmf(j)).sum()
}

#[test]
fn superposition_shift_holds_for_clusters() {
    let w = Window::above(-4.0).unwrap();
    for (k, name) in ["finite-cluster", "staircase"].iter().enumerate() {
        let m = DpppModel::new(DecorationSpec::named(name).build().unwrap(), 0.0);
        let r = check_superposition_shift(&m, w, 5_000, 40 + k as u64, Execution::Parallel).unwrap();
        assert_eq!(r.verdict, Verdict::Consistent, "{r}");
    }
}

#[test]
fn density_part_adds_poisson_mass() {
    // c e^{-x} dx with no atoms: pairing of an indicator is c ∫ e^{-x}.
    let s = DpppSpec::new(
        DecorationSpec::named("null").build().unwrap(),
        0.7,
        Window::above(-1.0).unwrap(),
        1,
    )
    .unwrap();
    let z = s.sample_replica(0).unwrap();
    assert!(z.config.is_empty());
    let f = expstable::test_function::TestFunction::indicator("ind", 0.0, 1.0, 1.0);
    let expected = 0.7 * (1.0 - (-1.0f64).exp());
    assert!((z.pair(&f).unwrap() - expected).abs() < 1e-9);
}
