use cfisac_autodiff::{Graph, Tensor};
use cfisac_core::channel::SensingResponse;
use cfisac_core::dataset::{fixed_environment, Dataset};
use cfisac_core::linalg::{CMat, CVec};
use cfisac_core::metrics::{evaluate, Regime, RegimeSpec};
use cfisac_core::rng::{complex_normal, stream};
use cfisac_core::SystemConfig;
use cfisac_stcib::loss::{batch_loss, rates, BatchData, Penalty};
use cfisac_stcib::model::{
    attention, decode_outputs, encode_inputs, encode_outputs, multihead, Architecture, Model,
};
use cfisac_stcib::train::{batch_gradients, mean_loss};
use cfisac_stcib::TrainSpec;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(antennas: usize, users: usize, heads: usize, seed: u64) -> Model {
    let arch = Architecture::new(antennas, users, heads, 16).unwrap();
    Model::init(arch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random_sets(batch: usize, users: usize, antennas: usize, scale: f64, seed: u64) -> Vec<Vec<CVec>> {
    let mut rng = stream(seed, 11, 0);
    (0..batch)
        .map(|_| {
            (0..users)
                .map(|_| CVec::from_fn(antennas, |_, _| complex_normal(&mut rng) * scale))
                .collect()
        })
        .collect()
}

fn random_tensor(shape: [usize; 3], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    t
}

fn rel(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / a.norm().max(1e-300)
}

/// Plain-loop `softmax(s·QKᵀ)V` for one matrix.
fn attention_oracle(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    q.iter()
        .map(|qi| {
            let scores: Vec<f64> = k
                .iter()
                .map(|kj| s * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = e.iter().sum();
            (0..v[0].len())
                .map(|c| e.iter().zip(v).map(|(w, vj)| w / z * vj[c]).sum())
                .collect()
        })
        .collect()
}

fn rows(t: &Tensor, b: usize) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| (0..t.cols()).map(|c| t.at(b, r, c)).collect()).collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|ar| (0..b[0].len()).map(|c| ar.iter().zip(b).map(|(x, br)| x * br[c]).sum()).collect())
        .collect()
}

fn cols(m: &[Vec<f64>], start: usize, len: usize) -> Vec<Vec<f64>> {
    m.iter().map(|r| r[start..start + len].to_vec()).collect()
}

fn max_diff(t: &Tensor, b: usize, m: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for (r, row) in m.iter().enumerate() {
        for (c, x) in row.iter().enumerate() {
            d = d.max((t.at(b, r, c) - x).abs());
        }
    }
    d
}

#[test]
fn a_single_key_returns_its_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::new();
    let q = g.constant(random_tensor([2, 5, 4], &mut rng));
    let k = g.constant(random_tensor([2, 1, 4], &mut rng));
    let v = g.constant(random_tensor([2, 1, 3], &mut rng));
    let out = attention(&mut g, q, k, v, 0.7).unwrap();
    let (o, vv) = (g.value(out), g.value(v));
    for b in 0..2 {
        for r in 0..5 {
            for c in 0..3 {
                assert!((o.at(b, r, c) - vv.at(b, 0, c)).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn zero_scores_average_the_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = Graph::new();
    let q = g.constant(Tensor::zeros([1, 3, 4]));
    let k = g.constant(random_tensor([1, 6, 4], &mut rng));
    let vt = random_tensor([1, 6, 2], &mut rng);
    let v = g.constant(vt.clone());
    let out = attention(&mut g, q, k, v, 1.0).unwrap();
    for c in 0..2 {
        let mean = (0..6).map(|r| vt.at(0, r, c)).sum::<f64>() / 6.0;
        for r in 0..3 {
            assert!((g.value(out).at(0, r, c) - mean).abs() < 1e-14);
        }
    }
}

#[test]
fn attention_matches_a_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (nq, nk, d, dv) = (
            rng.random_range(1..6),
            rng.random_range(1..7),
            rng.random_range(1..6),
            rng.random_range(1..5),
        );
        let (qt, kt, vt) = (
            random_tensor([2, nq, d], &mut rng),
            random_tensor([2, nk, d], &mut rng),
            random_tensor([2, nk, dv], &mut rng),
        );
        let mut g = Graph::new();
        let (q, k, v) = (g.constant(qt.clone()), g.constant(kt.clone()), g.constant(vt.clone()));
        let s = 1.0 / (d as f64).sqrt();
        let out = attention(&mut g, q, k, v, s).unwrap();
        for b in 0..2 {
            let want = attention_oracle(&rows(&qt, b), &rows(&kt, b), &rows(&vt, b), s);
            assert!(max_diff(g.value(out), b, &want) < 1e-12);
        }
    }
}

#[test]
fn two_heads_attend_over_column_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (d, heads) = (8, 2);
    let xt = random_tensor([1, 3, d], &mut rng);
    let yt = random_tensor([1, 5, d], &mut rng);
    let ws: Vec<Tensor> = (0..4).map(|_| random_tensor([1, d, d], &mut rng)).collect();
    let mut g = Graph::new();
    let (x, y) = (g.constant(xt.clone()), g.constant(yt.clone()));
    let w = [0, 1, 2, 3].map(|i| g.constant(ws[i].clone()));
    let out = multihead(&mut g, x, y, w, heads).unwrap();

    let (x, y) = (rows(&xt, 0), rows(&yt, 0));
    let (q, k, v) = (matmul(&x, &rows(&ws[0], 0)), matmul(&y, &rows(&ws[1], 0)), matmul(&y, &rows(&ws[2], 0)));
    let hd = d / heads;
    let mut cat = vec![Vec::new(); 3];
    for h in 0..heads {
        let o = attention_oracle(&cols(&q, h * hd, hd), &cols(&k, h * hd, hd), &cols(&v, h * hd, hd), 1.0 / (hd as f64).sqrt());
        for (row, part) in cat.iter_mut().zip(o) {
            row.extend(part);
        }
    }
    let want = matmul(&cat, &rows(&ws[3], 0));
    assert!(max_diff(g.value(out), 0, &want) < 1e-12);
}

#[test]
fn layer_norm_rows_have_zero_mean_and_unit_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = Graph::new();
    let x = g.constant(random_tensor([3, 4, 10], &mut rng).map(|v| 5.0 * v + 2.0));
    let gain = g.constant(Tensor::filled([1, 1, 10], 1.0));
    let bias = g.constant(Tensor::zeros([1, 1, 10]));
    let y = g.layer_norm(x, gain, bias).unwrap();
    let t = g.value(y);
    for b in 0..3 {
        for r in 0..4 {
            let row: Vec<f64> = (0..10).map(|c| t.at(b, r, c)).collect();
            let mean = row.iter().sum::<f64>() / 10.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 10.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3, "variance {var}");
        }
    }
}

fn permute(sets: &[Vec<CVec>], perm: &[usize]) -> Vec<Vec<CVec>> {
    sets.iter().map(|s| perm.iter().map(|&p| s[p].clone()).collect()).collect()
}

#[test]
fn encoder_is_permutation_equivariant() {
    let m = model(4, 5, 2, 6);
    let sets = random_sets(3, 5, 4, 1.0, 6);
    let perm = [3, 0, 4, 1, 2];
    let run = |s: &[Vec<CVec>]| {
        let mut g = Graph::new();
        let p = m.bind(&mut g, false);
        let input = g.constant(encode_inputs(s, 4).unwrap());
        let fw = m.forward(&mut g, &p, input, 10.0).unwrap();
        (g.value(fw.features).clone(), g.value(fw.encoded).clone())
    };
    let (f0, e0) = run(&sets);
    let (f1, e1) = run(&permute(&sets, &perm));
    for b in 0..3 {
        for (i, &p) in perm.iter().enumerate() {
            for c in 0..8 {
                assert!((f1.at(b, i, c) - f0.at(b, p, c)).abs() < 1e-12);
                assert!((e1.at(b, i, c) - e0.at(b, p, c)).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn inference_ignores_user_order() {
    let m = model(4, 4, 2, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sets = random_sets(50, 4, 4, 1.0, 7);
    let w0 = m.infer(&sets, 8.0).unwrap();
    for _ in 0..5 {
        let mut perm: Vec<usize> = (0..4).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let w1 = m.infer(&permute(&sets, &perm), 8.0).unwrap();
        for (a, b) in w0.iter().zip(&w1) {
            assert!(rel(a, b) < 1e-9);
        }
    }
}

#[test]
fn output_rows_round_trip_with_beam_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let z = random_tensor([3, 4, 10], &mut rng);
    let w = decode_outputs(&z, 5);
    assert_eq!(w[0].shape(), (5, 4));
    assert_eq!(w[1][(2, 3)], Complex64::new(z.at(1, 3, 2), z.at(1, 3, 7)));
    assert_eq!(encode_outputs(&w), z);
    for (b, m) in w.iter().enumerate() {
        let sq: f64 = z.batch_slice(b).iter().map(|v| v * v).sum();
        assert!((m.norm_squared() - sq).abs() < 1e-12);
    }
}

#[test]
fn inputs_are_rejected_on_mismatched_users() {
    let m = model(4, 3, 2, 9);
    assert!(m.infer(&random_sets(2, 4, 4, 1.0, 9), 1.0).is_err());
    assert!(Architecture::new(3, 2, 4, 16).is_err());
}

#[test]
fn decoder_attention_cost_grows_quadratically_in_users() {
    let flops = |users: usize| {
        let m = model(8, users, 2, 10);
        let mut g = Graph::new();
        let p = m.bind(&mut g, false);
        let input = g.constant(encode_inputs(&random_sets(1, users, 8, 1.0, 10), 8).unwrap());
        m.forward(&mut g, &p, input, 10.0).unwrap().decoder_attention_flops as f64
    };
    let ratio = flops(32) / flops(16);
    assert!((3.5..=4.1).contains(&ratio), "ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn inferred_beams_respect_the_budget(seed in 0u64..1000, log_scale in -3.0f64..3.0, budget in 0.01f64..100.0) {
        let m = model(4, 3, 2, seed);
        let sets = random_sets(8, 3, 4, 10f64.powf(log_scale), seed);
        for w in m.infer(&sets, budget).unwrap() {
            prop_assert!(w.norm_squared() <= budget + 1e-9);
        }
    }
}

fn desk() -> (SystemConfig, SensingResponse) {
    let cfg = SystemConfig::desk();
    let (_, sensing) = fixed_environment(&cfg).unwrap();
    (cfg, sensing)
}

fn random_beams(batch: usize, n: usize, k: usize, seed: u64) -> Vec<CMat> {
    let mut rng = stream(seed, 12, 0);
    (0..batch)
        .map(|_| CMat::from_fn(n, k + 1, |_, _| complex_normal(&mut rng) * 0.7))
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn in_graph_rates_match_complex_arithmetic() {
    let (cfg, sensing) = desk();
    let n = cfg.stacked_dim();
    let k = cfg.users;
    let f = random_sets(200, k, n, 1.0, 13);
    let w = random_beams(200, n, k, 13);
    let mut g = Graph::new();
    let data = BatchData::new(&mut g, &f, &sensing).unwrap();
    let out = g.constant(encode_outputs(&w));
    let r = rates(&mut g, &data, out, cfg.kappa()).unwrap();
    for b in 0..200 {
        let want = evaluate(&f[b], &sensing, &w[b], cfg.kappa());
        for u in 0..k {
            assert!(close(g.value(r.sinr).at(b, u, 0), want.sinr[u]));
            assert!(close(g.value(r.comm).at(b, u, 0), want.comm[u]));
        }
        for j in 0..sensing.n_rx_aps() {
            assert!(close(g.value(r.scnr).at(b, 0, j), want.scnr[j]));
            assert!(close(g.value(r.sensing).at(b, 0, j), want.sensing[j]));
        }
    }
}

#[test]
fn batch_losses_match_a_rate_oracle() {
    let (cfg, sensing) = desk();
    let (n, k, kappa) = (cfg.stacked_dim(), cfg.users, cfg.kappa());
    let f = random_sets(40, k, n, 1.0, 14);
    let w = random_beams(40, n, k, 14);
    let pen = Penalty {
        comm: 7.0,
        sensing: 3.0,
        margin: 0.1,
    };
    let specs = [
        RegimeSpec::sensing_centric(1.5, kappa),
        RegimeSpec::comm_centric(0.8, kappa),
        RegimeSpec::joint(0.3, kappa),
    ];
    for spec in specs {
        let mut g = Graph::new();
        let data = BatchData::new(&mut g, &f, &sensing).unwrap();
        let out = g.constant(encode_outputs(&w));
        let r = rates(&mut g, &data, out, kappa).unwrap();
        let loss = batch_loss(&mut g, &r, &spec, pen).unwrap();
        let mut want = 0.0;
        for (fb, wb) in f.iter().zip(&w) {
            let rt = evaluate(fb, &sensing, wb, kappa);
            let short = |rs: &[f64], th: f64| -> f64 {
                rs.iter().map(|x| (th * 1.1 - x).max(0.0).powi(2)).sum()
            };
            want += match spec.regime {
                Regime::SensingCentric => pen.comm * short(&rt.comm, 1.5) - rt.sensing_sum(),
                Regime::CommCentric => pen.sensing * short(&rt.sensing, 0.8) - rt.comm_sum(),
                Regime::Joint => -(0.3 * rt.comm_sum() + 0.7 * rt.sensing_sum()),
            };
        }
        want /= f.len() as f64;
        assert!(close(g.value(loss).item(), want), "{:?}", spec.regime);
    }
}

#[test]
fn thresholds_at_zero_leave_only_the_objective() {
    let (cfg, sensing) = desk();
    let (n, k, kappa) = (cfg.stacked_dim(), cfg.users, cfg.kappa());
    let f = random_sets(5, k, n, 1.0, 15);
    let w = random_beams(5, n, k, 15);
    let mut g = Graph::new();
    let data = BatchData::new(&mut g, &f, &sensing).unwrap();
    let out = g.constant(encode_outputs(&w));
    let r = rates(&mut g, &data, out, kappa).unwrap();
    let loss = batch_loss(&mut g, &r, &RegimeSpec::comm_centric(0.0, kappa), Penalty::default()).unwrap();
    let want = -f
        .iter()
        .zip(&w)
        .map(|(fb, wb)| evaluate(fb, &sensing, wb, kappa).comm_sum())
        .sum::<f64>()
        / 5.0;
    assert!(close(g.value(loss).item(), want));
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let cfg = SystemConfig::desk();
    let ds = Dataset::generate(&cfg, 3).unwrap();
    let (n, kappa) = (cfg.stacked_dim(), cfg.kappa());
    assert_eq!(2 * n, 16);
    let base = model(n, cfg.users, 2, 16);
    let budget = cfg.power_budget();
    let specs = [
        RegimeSpec::sensing_centric(1.0, kappa),
        RegimeSpec::comm_centric(0.5, kappa),
        RegimeSpec::joint(0.5, kappa),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for regime in specs {
        // Unit-scale weights keep the loss O(1) so central differences
        // resolve gradient entries near 1e-6.
        let mut spec = TrainSpec::new(regime, 0);
        spec.penalty = Penalty {
            comm: 10.0,
            sensing: 10.0,
            margin: 0.2,
        };
        let (_, grads) = batch_gradients(&base, &ds.f_hat, &ds.sensing, &spec, budget).unwrap();
        let mut worst: f64 = 0.0;
        for (i, t) in base.params.tensors().iter().enumerate() {
            for _ in 0..3 {
                let e = rng.random_range(0..t.len());
                let h = 1e-5;
                let mut m = base.clone();
                m.params.tensors_mut()[i].data_mut()[e] += h;
                let fp = mean_loss(&m, &ds.f_hat, &ds.sensing, &spec, budget).unwrap();
                m.params.tensors_mut()[i].data_mut()[e] -= 2.0 * h;
                let fm = mean_loss(&m, &ds.f_hat, &ds.sensing, &spec, budget).unwrap();
                let num = (fp - fm) / (2.0 * h);
                let ana = grads[i].data()[e];
                let err = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-6);
                worst = worst.max(err);
                assert!(err < 1e-3, "{:?} {} [{e}]: {ana} vs {num}", regime.regime, base.params.names()[i]);
            }
        }
        assert!(worst < 1e-3);
    }
}
