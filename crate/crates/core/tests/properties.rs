use proptest::prelude::*;

use sparsegnn::analysis::solve_shattering_system;
use sparsegnn::experiments::crossing;
use sparsegnn::rng::stream;
use sparsegnn::sampler::gamma_for_alpha;
use sparsegnn::trainer::PruneScope;
use sparsegnn::*;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn small_graph(
    n: usize,
    dim: usize,
    edges: Vec<(usize, usize)>,
    feats: Vec<f64>,
    bits: Vec<bool>,
) -> StructuredGraph {
    let labels = bits.iter().map(|&b| if b { 1 } else { -1 }).collect();
    let tags = bits
        .iter()
        .map(|&b| {
            if b {
                PartitionTag::VNPlus
            } else {
                PartitionTag::VNMinus
            }
        })
        .collect();
    let edges: Vec<(usize, usize)> = edges.into_iter().map(|(u, v)| (u % n, v % n)).collect();
    StructuredGraph::new(dim, 0.1, feats, labels, tags, &edges).unwrap()
}

fn graph_strategy() -> impl Strategy<Value = StructuredGraph> {
    (2usize..12, 1usize..5).prop_flat_map(|(n, dim)| {
        (
            Just(n),
            Just(dim),
            prop::collection::vec((0..n, 0..n), 0..30),
            prop::collection::vec(-1e3f64..1e3, n * dim),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(n, dim, e, f, b)| small_graph(n, dim, e, f, b))
    })
}

proptest! {
    #[test]
    fn graph_file_round_trip(g in graph_strategy()) {
        let mut bytes = Vec::new();
        save_graph(&g, &mut bytes).unwrap();
        let back = load_graph(&bytes[..]).unwrap();
        prop_assert_eq!(&back, &g);
        let mut again = Vec::new();
        save_graph(&back, &mut again).unwrap();
        prop_assert_eq!(bytes, again);
    }

    #[test]
    fn neighborhoods_are_symmetric_and_loop_free(g in graph_strategy()) {
        for v in 0..g.n() {
            prop_assert!(g.neighbors(v).windows(2).all(|w| w[0] < w[1]));
            for &u in g.neighbors(v) {
                prop_assert_ne!(u, v);
                prop_assert!(g.neighbors(u).contains(&v));
            }
            let nb = g.neighborhood(v).unwrap();
            prop_assert_eq!(nb.len(), g.degree(v) + 1);
            prop_assert!(nb.contains(&v));
        }
        prop_assert_eq!(g.edges().count(), g.edge_count());
    }

    #[test]
    fn noise_stays_in_the_sigma_ball(d in 1usize..64, sigma in 0.0f64..3.0, seed in any::<u64>()) {
        let mut rng = stream(seed, &[]);
        for mode in [NoiseMode::GaussianClipped, NoiseMode::UniformBall, NoiseMode::None] {
            let z = draw_noise(d, sigma, mode, &mut rng).unwrap();
            prop_assert_eq!(z.len(), d);
            prop_assert!(norm(&z) <= sigma * (1.0 + 1e-12));
        }
    }

    #[test]
    fn aggregation_is_max_relu_with_lowest_id_ties(
        w in prop::collection::vec(-2i32..3, 3),
        rows in prop::collection::vec(prop::collection::vec(-2i32..3, 3), 1..8),
    ) {
        // small integers make exact ties common
        let w: Vec<f64> = w.into_iter().map(f64::from).collect();
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
        let nb: Vec<(usize, &[f64])> = rows.iter().enumerate().map(|(i, r)| (i, r.as_slice())).collect();
        let (act, winner) = aggregate(&w, &nb).unwrap();
        let proj: Vec<f64> = rows.iter().map(|r| r.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
        let best = proj.iter().cloned().fold(0.0, f64::max);
        prop_assert_eq!(act, best);
        let expect = if best > 0.0 { proj.iter().position(|&p| p == best) } else { None };
        prop_assert_eq!(winner, expect);
    }

    #[test]
    fn forward_is_positively_homogeneous(g in graph_strategy(), seed in any::<u64>(), c in 0.01f64..10.0) {
        let mut rng = stream(seed, &[]);
        let m = ModelState::initialize(g.dim(), 4, 1.0, NormMode::OverSurviving, &mut rng).unwrap();
        let scaled_w: Vec<f64> = m.weights().iter().map(|x| x * c).collect();
        let scaled = ModelState::new(g.dim(), scaled_w, m.signs().to_vec(), 1.0, NormMode::OverSurviving).unwrap();
        for v in 0..g.n() {
            let (a, b) = (m.forward(&g, v, None).unwrap(), scaled.forward(&g, v, None).unwrap());
            prop_assert!((b - c * a).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn samples_are_distinct_subsets_of_the_neighborhood(
        g in graph_strategy(), r in 1usize..6, gamma in 1.0f64..20.0, seed in any::<u64>(),
    ) {
        let mut rng = stream(seed, &[]);
        for s in [SamplingStrategy::uniform(r), SamplingStrategy::two_tier(r, gamma), SamplingStrategy::full()] {
            for v in 0..g.n() {
                let ids = s.sample(&g, v, &mut rng);
                prop_assert_eq!(ids[0], v);
                let want = if s.kind == SamplerKind::Full { g.degree(v) } else { r.min(g.degree(v)) };
                prop_assert_eq!(ids.len(), want + 1);
                prop_assert!(ids[1..].windows(2).all(|w| w[0] < w[1]));
                prop_assert!(ids[1..].iter().all(|u| g.neighbors(v).contains(u)));
            }
        }
    }

    #[test]
    fn magnitude_pruning_keeps_the_largest_per_class(
        k in 2usize..40, beta in 0.0f64..0.99, seed in any::<u64>(),
    ) {
        let mut rng = stream(seed, &[]);
        let m = ModelState::initialize(3, k, 1.0, NormMode::OverSurviving, &mut rng).unwrap();
        let (mask, pruned) = magnitude_prune(&m, beta, PruneScope::PerClass).unwrap();
        let per = (beta * k as f64 / 2.0).floor() as usize;
        for s in [1i8, -1] {
            let class: Vec<usize> = (0..k).filter(|&i| m.signs()[i] == s).collect();
            let gone: Vec<usize> = class.iter().copied().filter(|&i| !mask[i]).collect();
            prop_assert_eq!(gone.len(), per.min(class.len()));
            let max_gone = gone.iter().map(|&i| norm(m.weight(i))).fold(0.0, f64::max);
            for i in class.iter().filter(|&&i| mask[i]) {
                prop_assert!(norm(m.weight(*i)) >= max_gone);
            }
        }
        prop_assert_eq!(pruned.len(), mask.iter().filter(|&&a| !a).count());
    }

    #[test]
    fn gamma_realizes_the_requested_alpha(r in 1usize..29, t in 0.0f64..1.0) {
        let big_r = 30usize;
        let lo = r as f64 / big_r as f64;
        let alpha = lo + t * (1.0 - lo) * 0.999;
        let gamma = gamma_for_alpha(alpha, r, big_r).unwrap();
        prop_assert!(gamma >= 1.0);
        let pi = (gamma * r as f64 / (gamma + (big_r - 1) as f64)).min(1.0);
        prop_assert!((pi - alpha).abs() < 1e-9, "{} vs {}", pi, alpha);
    }

    #[test]
    fn crossing_lies_in_the_bracketing_interval(rates in prop::collection::vec(0.0f64..=1.0, 2..10), level in 0.05f64..1.0) {
        let sizes: Vec<usize> = (0..rates.len()).map(|i| 4 + 4 * i).collect();
        match crossing(&sizes, &rates, level) {
            None => prop_assert!(rates.iter().all(|&r| r < level)),
            Some(x) => {
                let k = rates.iter().position(|&r| r >= level).unwrap();
                let lo = if k == 0 { sizes[0] } else { sizes[k - 1] };
                prop_assert!(x >= lo as f64 - 1e-9 && x <= sizes[k] as f64 + 1e-9);
            }
        }
    }

    #[test]
    fn shattering_system_is_solved(rhs in prop::collection::vec(-5.0f64..5.0, 2..9)) {
        let x = solve_shattering_system(&rhs).unwrap();
        let total: f64 = x.iter().sum();
        for (xi, bi) in x.iter().zip(&rhs) {
            prop_assert!((total - xi - bi).abs() < 1e-9);
        }
    }

    #[test]
    fn config_text_round_trips(seed in any::<u64>(), beta in 0.0f64..0.9, r in 1usize..40, k in 1usize..500) {
        let overrides = vec![
            ("seed".to_string(), seed.to_string()),
            ("train.beta".to_string(), beta.to_string()),
            ("sampler.r".to_string(), r.to_string()),
            ("train.k".to_string(), k.to_string()),
        ];
        let c = Config::parse_with("", &overrides).unwrap();
        prop_assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }
}

#[test]
fn generated_nodes_have_one_relevant_neighbor() {
    let c = GenConfig {
        seed: 4,
        ..GenConfig::desk()
    };
    let data = generate_graph(&generate_patterns(&c).unwrap(), &c).unwrap();
    let g = &data.graph;
    assert!(validate_assumptions(g, None).is_clean());
    for v in (0..g.n()).filter(|&v| !g.tag(v).is_relevant()) {
        // brute-force scan of the edge list
        let relevant = g.edges().filter(|&(a, b)| {
            (a == v && g.tag(b).is_relevant()) || (b == v && g.tag(a).is_relevant())
        });
        assert_eq!(relevant.count(), 1, "node {v}");
        assert_eq!(g.degree(v), c.degree);
    }
}
