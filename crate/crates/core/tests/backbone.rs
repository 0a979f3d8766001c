use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ushape_core::model::{
    patch_merge_naive, DecoderPath, ModelConfig, PassState, PatchGrid, Side, UShapedModel,
};
use ushape_core::tensor::{Graph, Tensor};

fn random(rng: &mut ChaCha8Rng, shape: [usize; 2]) -> Tensor<f64> {
    let data = (0..shape[0] * shape[1])
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    Tensor::new(shape, data).unwrap()
}

#[test]
fn presets_match_the_token_table() {
    let small = ModelConfig::small();
    assert_eq!(
        (small.lookback_len + small.horizon_len) / small.patch_size,
        48
    );
    assert_eq!(small.n_patches, 48);
    let base = ModelConfig::base();
    assert_eq!(
        (base.lookback_len + base.horizon_len) / base.patch_size,
        128
    );
    assert_eq!(base.n_patches, 128);
    for c in [small, base] {
        for level in 1..=c.n_levels {
            let k = 1usize << (level - 1);
            assert_eq!(c.level_shape(level), (c.n_patches / k, c.d_model * k));
        }
    }
}

#[test]
fn small_preset_attention_tower() {
    let m = UShapedModel::<f32>::new(ModelConfig::small(), 0).unwrap();
    let mut g = Graph::new();
    let b = m.params.bind_constant(&mut g);
    let x = g.constant(Tensor::full([1, 48 * 32], 0.3));
    let (_, attn) = m
        .reconstruct(&mut g, &b, x, &mut PassState::inference())
        .unwrap();
    let got: Vec<(Side, usize, Vec<usize>)> = attn
        .iter()
        .map(|a| (a.side, a.level, a.weights.shape().to_vec()))
        .collect();
    assert_eq!(
        got,
        vec![
            (Side::Enc, 1, vec![48, 48]),
            (Side::Enc, 2, vec![24, 24]),
            (Side::Enc, 3, vec![12, 12]),
            (Side::Dec, 2, vec![24, 24]),
            (Side::Dec, 1, vec![48, 48]),
        ]
    );
    for a in &attn {
        let (r, c) = a.weights.dims2().unwrap();
        for i in 0..r {
            let s: f64 = (0..c).map(|j| a.weights.at2(i, j) as f64).sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn zero_decoder_returns_first_encoder_input_exactly() {
    for seed in 0..5 {
        let m = UShapedModel::<f32>::new(ModelConfig::tiny(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let b = m.params.bind_constant(&mut g);
        let series: Vec<f32> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = g.constant(Tensor::new([1, 64], series).unwrap());
        let grid = m.patch_embed(&mut g, &b, x).unwrap();
        let out = m
            .backbone_forward(
                &mut g,
                &b,
                grid,
                DecoderPath::Zero,
                &mut PassState::inference(),
            )
            .unwrap();
        let a = g.value(grid.tokens).data();
        let o = g.value(out.grid.tokens).data();
        assert!(a.iter().zip(o).all(|(x, y)| x.to_bits() == y.to_bits()));
        let full = m
            .backbone_forward(
                &mut g,
                &b,
                grid,
                DecoderPath::Full,
                &mut PassState::inference(),
            )
            .unwrap();
        assert_ne!(g.value(full.grid.tokens), g.value(grid.tokens));
    }
}

/// `dep[u][t]` is true when perturbing input token `t` changes output token `u`.
fn dependency_mask(
    p: usize,
    d: usize,
    f: &dyn Fn(&mut Graph<f64>, PatchGrid) -> PatchGrid,
) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = random(&mut rng, [p, d]);
    let run = |x: &Tensor<f64>| {
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let out = f(
            &mut g,
            PatchGrid {
                tokens: v,
                level: 1,
            },
        );
        g.value(out.tokens).clone()
    };
    let y0 = run(&base);
    let (q, e) = y0.dims2().unwrap();
    let mut dep = vec![vec![false; p]; q];
    for t in 0..p {
        let mut x = base.clone();
        for k in 0..d {
            x.data_mut()[t * d + k] += 0.5;
        }
        let y = run(&x);
        for (u, row) in dep.iter_mut().enumerate() {
            row[t] = (0..e).any(|k| (y.at2(u, k) - y0.at2(u, k)).abs() > 1e-12);
        }
    }
    dep
}

#[test]
fn learned_merge_couples_adjacent_pairs_naive_couples_halves() {
    let m = UShapedModel::<f64>::new(ModelConfig::tiny(), 5).unwrap();
    let (p, d) = m.config.level_shape(1);
    let learned = dependency_mask(p, d, &|g, grid| {
        let b = m.params.bind_constant(g);
        m.patch_merge(g, &b, grid).unwrap()
    });
    let naive = dependency_mask(p, d, &|g, grid| patch_merge_naive(g, grid).unwrap());
    for u in 0..p / 2 {
        for t in 0..p {
            assert_eq!(learned[u][t], t / 2 == u, "learned u={u} t={t}");
            assert_eq!(naive[u][t], t == u || t == u + p / 2, "naive u={u} t={t}");
        }
    }
}

#[test]
fn naive_merge_matches_index_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&mut rng, [6, 3]);
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let out = patch_merge_naive(
        &mut g,
        PatchGrid {
            tokens: v,
            level: 1,
        },
    )
    .unwrap();
    let y = g.value(out.tokens);
    assert_eq!(y.shape(), &[3, 6]);
    for u in 0..3 {
        for k in 0..3 {
            assert_eq!(y.at2(u, k), x.at2(u, k));
            assert_eq!(y.at2(u, 3 + k), x.at2(u + 3, k));
        }
    }
}

#[test]
fn merge_and_split_convolutions_are_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let (cin, cout, p) = (3, 5, 6);
        let x = random(&mut rng, [cin, p]);
        let y = random(&mut rng, [cout, p / 2]);
        let wdata: Vec<f64> = (0..cout * cin * 2)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let yv = g.constant(y.clone());
        let w = g.constant(Tensor::new([cout, cin, 2], wdata).unwrap());
        let b_out = g.constant(Tensor::zeros([cout]));
        let b_in = g.constant(Tensor::zeros([cin]));
        let cx = g.conv1d_k2s2(xv, w, b_out).unwrap();
        let ty = g.conv_transpose1d_k2s2(yv, w, b_in).unwrap();
        let lhs = g.value(cx).dot(&y);
        let rhs = x.dot(g.value(ty));
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }
}

#[test]
fn transformer_group_is_permutation_equivariant_without_positions() {
    let m = UShapedModel::<f64>::new(ModelConfig::tiny(), 3).unwrap();
    let (p, d) = m.config.level_shape(1);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&mut rng, [p, d]);
    let perm: Vec<usize> = vec![3, 0, 7, 1, 6, 2, 5, 4];
    let permuted = Tensor::from_rows(
        &perm
            .iter()
            .map(|&i| (0..d).map(|k| x.at2(i, k)).collect())
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let run = |t: &Tensor<f64>| {
        let mut g = Graph::new();
        let b = m.params.bind_constant(&mut g);
        let v = g.constant(t.clone());
        let (out, _) = m
            .transformer_group(
                &mut g,
                &b,
                Side::Enc,
                PatchGrid {
                    tokens: v,
                    level: 1,
                },
                &mut PassState::inference(),
            )
            .unwrap();
        g.value(out.tokens).clone()
    };
    let y = run(&x);
    let yp = run(&permuted);
    for (row, &src) in perm.iter().enumerate() {
        for k in 0..d {
            assert!((yp.at2(row, k) - y.at2(src, k)).abs() < 1e-12);
        }
    }
}

#[test]
fn pooled_input_lengths_are_accepted() {
    // a 700-step lookback under the small preset pools onto the 48-token grid
    let c = ModelConfig::small();
    let window = vec![1.0f32; 700];
    let x = ushape_core::data::build_model_input(&window, &c).unwrap();
    assert_eq!(x.shape(), &[1, 48 * 32]);
    assert!(x.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
}
