use marsma_core::rates::{
    check_full_feasibility, common_rates, evaluate_sinrs, total_user_rates, BeamformerSet,
    Clustering, RateAllocation,
};
use marsma_core::seed::rng;
use marsma_core::{CVector, Complex64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn cvec(r: &mut ChaCha8Rng, n: usize) -> CVector {
    (0..n)
        .map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect()
}

struct Instance {
    channels: Vec<CVector>,
    beams: BeamformerSet,
    clustering: Clustering,
    noise: f64,
}

fn instance(r: &mut ChaCha8Rng, n: usize, k: usize) -> Instance {
    let mut users: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        users.swap(i, r.random_range(0..=i));
    }
    let clusters: Vec<Vec<usize>> = users.chunks(2).map(<[usize]>::to_vec).collect();
    let q = clusters.len();
    Instance {
        channels: (0..k).map(|_| cvec(r, n)).collect(),
        beams: BeamformerSet {
            inter: cvec(r, n),
            intra: (0..q).map(|_| cvec(r, n)).collect(),
            private: (0..k).map(|_| cvec(r, n)).collect(),
        },
        clustering: Clustering::new(clusters, k).unwrap(),
        noise: r.random_range(0.01..2.0),
    }
}

/// Literal SINR transcription with scalar accumulation.
fn oracle(x: &Instance) -> Vec<[f64; 3]> {
    let gain = |h: &CVector, w: &CVector| {
        let mut re = 0.0;
        let mut im = 0.0;
        for m in 0..h.len() {
            // conj(h_m) * w_m
            re += h[m].re * w[m].re + h[m].im * w[m].im;
            im += h[m].re * w[m].im - h[m].im * w[m].re;
        }
        re * re + im * im
    };
    let k_users = x.channels.len();
    let mut out = Vec::new();
    for k in 0..k_users {
        let h = &x.channels[k];
        let mut q_k = 0;
        for (q, members) in x.clustering.clusters().iter().enumerate() {
            if members.contains(&k) {
                q_k = q;
            }
        }
        let mut total = x.noise;
        for w in &x.beams.intra {
            total += gain(h, w);
        }
        for w in &x.beams.private {
            total += gain(h, w);
        }
        let c1 = gain(h, &x.beams.intra[q_k]);
        let p = gain(h, &x.beams.private[k]);
        out.push([
            gain(h, &x.beams.inter) / total,
            c1 / (total - c1),
            p / (total - c1 - p),
        ]);
    }
    out
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn sinrs_match_transcription() {
    let mut r = rng(11);
    for i in 0..100 {
        let (n, k) = if i < 10 { (2, 2) } else { (r.random_range(1..6), r.random_range(1..8)) };
        let x = instance(&mut r, n, k);
        let links = evaluate_sinrs(&x.channels, &x.beams, &x.clustering, x.noise).unwrap();
        for (l, o) in links.iter().zip(oracle(&x)) {
            assert!(rel(l.sinr_inter, o[0]) < 1e-9);
            assert!(rel(l.sinr_intra, o[1]) < 1e-9);
            assert!(rel(l.sinr_private, o[2]) < 1e-9);
            assert!(rel(l.rate_private, (1.0 + o[2]).log2()) < 1e-9);
        }
    }
}

#[test]
fn denominators_are_ordered() {
    let mut r = rng(12);
    for _ in 0..50 {
        let x = instance(&mut r, 3, 5);
        let links = evaluate_sinrs(&x.channels, &x.beams, &x.clustering, x.noise).unwrap();
        for (k, l) in links.iter().enumerate() {
            let h = &x.channels[k];
            let g = |w: &CVector| -> f64 {
                h.iter().zip(w).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm_sqr()
            };
            let d_inter = g(&x.beams.inter) / l.sinr_inter;
            let d_intra = g(&x.beams.intra[x.clustering.cluster_of(k)]) / l.sinr_intra;
            let d_private = g(&x.beams.private[k]) / l.sinr_private;
            assert!(d_inter >= d_intra * (1.0 - 1e-12));
            assert!(d_intra >= d_private * (1.0 - 1e-12));
            assert!(d_private >= x.noise * (1.0 - 1e-12));
        }
    }
}

#[test]
fn scaling_beams_raises_inter_sinr() {
    let mut r = rng(13);
    for _ in 0..20 {
        let x = instance(&mut r, 3, 4);
        let a = evaluate_sinrs(&x.channels, &x.beams, &x.clustering, x.noise).unwrap();
        let b = evaluate_sinrs(&x.channels, &x.beams.scaled(1.5), &x.clustering, x.noise).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!(v.sinr_inter > u.sinr_inter);
        }
    }
}

#[test]
fn min_rate_is_permutation_invariant() {
    let mut r = rng(14);
    for _ in 0..20 {
        let x = instance(&mut r, 3, 5);
        let k = 5;
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        // new label of old user u is perm[u]
        let mut channels = vec![Vec::new(); k];
        let mut private = vec![Vec::new(); k];
        for u in 0..k {
            channels[perm[u]] = x.channels[u].clone();
            private[perm[u]] = x.beams.private[u].clone();
        }
        let clusters = x
            .clustering
            .clusters()
            .iter()
            .map(|c| c.iter().map(|&u| perm[u]).collect())
            .collect();
        let y = Instance {
            channels,
            beams: BeamformerSet { private, ..x.beams.clone() },
            clustering: Clustering::new(clusters, k).unwrap(),
            noise: x.noise,
        };
        let la = evaluate_sinrs(&x.channels, &x.beams, &x.clustering, x.noise).unwrap();
        let lb = evaluate_sinrs(&y.channels, &y.beams, &y.clustering, y.noise).unwrap();
        let za = RateAllocation::zeros(k);
        let ma = total_user_rates(&la, &x.clustering, &za).unwrap().min_rate;
        let mb = total_user_rates(&lb, &y.clustering, &za).unwrap().min_rate;
        assert!(rel(ma, mb) < 1e-12);
    }
}

#[test]
fn cluster_minima_match_brute_scan() {
    let mut r = rng(15);
    let x = instance(&mut r, 4, 6);
    let links = evaluate_sinrs(&x.channels, &x.beams, &x.clustering, x.noise).unwrap();
    let c = common_rates(&links, &x.clustering).unwrap();
    let mut inter = f64::INFINITY;
    for l in &links {
        inter = inter.min(l.rate_inter);
    }
    assert_eq!(c.inter, inter);
    for q in 0..x.clustering.n_clusters() {
        let mut m = f64::INFINITY;
        for k in 0..6 {
            if x.clustering.cluster_of(k) == q {
                m = m.min(links[k].rate_intra);
            }
        }
        assert_eq!(c.intra[q], m);
    }
}

/// Best min-rate reachable by splitting the common budgets on a grid of
/// `steps` cells per budget (two users, one cluster).
fn grid_allocator(budget_inter: f64, budget_intra: f64, private: [f64; 2], steps: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        for j in 0..=steps {
            let a = budget_inter * i as f64 / steps as f64;
            let b = budget_intra * j as f64 / steps as f64;
            let t0 = a + b + private[0];
            let t1 = (budget_inter - a) + (budget_intra - b) + private[1];
            best = best.max(t0.min(t1));
        }
    }
    best
}

#[test]
fn random_allocations_never_beat_grid() {
    let mut r = rng(16);
    let clustering = Clustering::new(vec![vec![0, 1]], 2).unwrap();
    for _ in 0..30 {
        let x = Instance {
            clustering: clustering.clone(),
            ..instance(&mut r, 2, 2)
        };
        let links = evaluate_sinrs(&x.channels, &x.beams, &clustering, x.noise).unwrap();
        let c = common_rates(&links, &clustering).unwrap();
        let grid = grid_allocator(
            c.inter,
            c.intra[0],
            [links[0].rate_private, links[1].rate_private],
            50,
        );
        for _ in 0..20 {
            let f: f64 = r.random_range(0.0..1.0);
            let g: f64 = r.random_range(0.0..1.0);
            let s: f64 = r.random_range(0.0..1.0);
            let alloc = RateAllocation {
                inter: vec![s * f * c.inter, s * (1.0 - f) * c.inter],
                intra: vec![s * g * c.intra[0], s * (1.0 - g) * c.intra[0]],
            };
            let m = total_user_rates(&links, &clustering, &alloc).unwrap().min_rate;
            // the grid is within one cell of the continuous optimum
            let cell = (c.inter + c.intra[0]) / 50.0;
            assert!(m <= grid + cell + 1e-12);
        }
    }
}

#[test]
fn overdrawn_allocation_is_reported_not_clipped() {
    let mut r = rng(17);
    let x = instance(&mut r, 2, 2);
    let links = evaluate_sinrs(&x.channels, &x.beams, &x.clustering, x.noise).unwrap();
    let c = common_rates(&links, &x.clustering).unwrap();
    let alloc = RateAllocation {
        inter: vec![c.inter + 0.1, 0.0],
        intra: vec![0.0, 0.0],
    };
    assert!(total_user_rates(&links, &x.clustering, &alloc).is_err());
    let cfg = marsma_core::config::GlobalConfig {
        noise_power: x.noise,
        p_max: 1e6,
        ..marsma_core::config::GlobalConfig::reference(2, 2)
    };
    let v = check_full_feasibility(
        &marsma_core::channel::AntennaPositions::uniform_half_wavelength(&cfg),
        &x.beams,
        &alloc,
        &x.clustering,
        &x.channels,
        &cfg,
    );
    assert!(!v.is_empty());
}
