use proptest::prelude::*;

use rwre_core::environment::{sample_expl_t, Medium, MixtureEntry};
use rwre_core::lattice::Direction;
use rwre_core::rng::CounterStream;
use rwre_core::{Environment, Site, SiteLaw};

fn laws() -> Vec<(SiteLaw, bool)> {
    vec![
        (SiteLaw::uniform(2), true),
        (
            SiteLaw::UniformDrift {
                dim: 3,
                kappa: 0.05,
                axis: 0,
                strength: 1.0,
            },
            true,
        ),
        (SiteLaw::expl(2, 0.2), true),
        (SiteLaw::expl(3, 0.3), true),
        (SiteLaw::trap_sym(2), true),
        (SiteLaw::trap_transient(1), true),
        (SiteLaw::trap_transient(2), true),
        (SiteLaw::dirichlet_flat(2), true),
        (
            SiteLaw::Dirichlet {
                weights: vec![0.5, 2.0, 1.0, 3.0],
            },
            true,
        ),
        (
            SiteLaw::TableMixture {
                entries: vec![
                    MixtureEntry {
                        weight: 1.0,
                        p: vec![0.5, 0.0, 0.5, 0.0],
                    },
                    MixtureEntry {
                        weight: 3.0,
                        p: vec![0.25; 4],
                    },
                ],
            },
            false,
        ),
    ]
}

fn site(i: u64, d: usize) -> Site {
    let c: Vec<i64> = (0..d).map(|k| ((i >> (12 * k)) & 0xfff) as i64 - 2048).collect();
    Site::new(&c)
}

#[test]
fn simplex_on_many_sites() {
    for (law, elliptic) in laws() {
        let d = law.dim();
        let env = Environment::new(law.clone(), 11).unwrap();
        for i in 0..100_000u64 {
            let tv = env.transitions_at(&site(i.wrapping_mul(0x9e37_79b9), d));
            let sum: f64 = tv.probs().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12, "{}: sum {sum}", law.name());
            if elliptic {
                assert!(tv.probs().iter().all(|p| *p > 0.0), "{}: {:?}", law.name(), tv);
            } else {
                assert!(tv.probs().iter().all(|p| *p >= 0.0));
            }
        }
    }
}

#[test]
fn neighboring_sites_are_uncorrelated() {
    for (law, _) in laws() {
        let d = law.dim();
        let env = Environment::new(law.clone(), 5).unwrap();
        let e1 = Direction::new(0, d);
        let n = 50_000;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for i in 0..n as i64 {
            let mut c = vec![0i64; d];
            c[0] = 2 * i;
            let x = Site::new(&c);
            a.push(env.transitions_at(&x).p(e1));
            b.push(env.transitions_at(&x.step(e1)).p(e1));
        }
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n as f64;
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n as f64;
        if va == 0.0 || vb == 0.0 {
            continue;
        }
        let rho = cov / (va * vb).sqrt();
        assert!(rho.abs() < 4.0 / (n as f64).sqrt(), "{}: rho {rho}", law.name());
    }
}

#[test]
fn expl_marginal_and_inverse_t_entry() {
    let (d, eps) = (2usize, 0.2);
    let law = SiteLaw::expl(d, eps);
    let env = Environment::new(law, 3).unwrap();
    let n = 100_000u64;
    let mut counts = vec![0u64; 2 * d];
    for i in 0..n {
        let x = site(i, d);
        // replay the site's stream: T first, then the index i0
        let mut s = CounterStream::new(env.site_key(&x));
        let t = sample_expl_t(&mut s, d, SiteLaw::expl_tail_index(d, None));
        let i0 = ((s.next_f64() * (2 * d) as f64) as usize).min(2 * d - 1);
        counts[i0] += 1;
        let tv = env.transitions_at(&x);
        // equal up to the final renormalization of the vector
        assert!((tv.probs()[i0] * t - 1.0).abs() < 1e-14, "{} vs {}", tv.probs()[i0], 1.0 / t);
        let forward: f64 = tv.probs()[..d].iter().sum();
        assert!((forward - (1.0 - eps)).abs() < 1e-15);
    }
    let p = 1.0 / (2 * d) as f64;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() < 4.0 * sd, "{c}");
    }
}

#[test]
fn transient_axis_ratio_is_exactly_two() {
    for dim in 1..=3 {
        let law = SiteLaw::trap_transient(dim);
        let n = dim + 1;
        let env = Environment::new(law, 9).unwrap();
        for i in 0..20_000u64 {
            let tv = env.transitions_at(&site(i, n));
            let p = tv.probs();
            assert_eq!(p[dim], 2.0 * p[dim + n]);
            // the trap axes carry mass d/C in total, so C can be read back
            let trap: f64 = p[..dim].iter().chain(&p[n..n + dim]).sum();
            let c = dim as f64 / trap;
            assert!(c >= dim as f64 - 1e-12 && c <= 2.0 * n as f64 + 1e-12, "C = {c}");
        }
    }
}

proptest! {
    #[test]
    fn any_site_any_seed_is_a_probability_vector(
        seed in any::<u64>(),
        coords in proptest::collection::vec(-1_000_000i64..1_000_000, 3),
        which in 0usize..10,
    ) {
        let (law, elliptic) = laws().swap_remove(which);
        let d = law.dim();
        let mut c = coords.clone();
        c.resize(d, 0);
        let env = Environment::new(law, seed).unwrap();
        let x = Site::new(&c[..d]);
        let tv = env.transitions_at(&x);
        let sum: f64 = tv.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(!elliptic || tv.min() > 0.0);
        // the environment is a pure function of (seed, site)
        let again = env.transitions_at(&x);
        let via_trait = Medium::transitions_at(&env, &x);
        prop_assert_eq!(tv.probs(), again.probs());
        prop_assert_eq!(tv.probs(), via_trait.probs());
    }
}
