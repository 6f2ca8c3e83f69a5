use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajkit_autodiff::gradcheck::{check_inputs, check_params};
use trajkit_autodiff::{sgd_step, ParamStore, Tape, Tensor};

const H: f64 = 1e-5;
const OP_TOL: f64 = 1e-6;

/// Random entries bounded away from zero so ReLU kinks are never straddled.
fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Weighted sum with fixed random weights so every output element matters.
fn probe(tape: &mut Tape, v: trajkit_autodiff::Var, seed: u64) -> trajkit_autodiff::Var {
    let shape = tape.value(v).shape().to_vec();
    let w = rand_tensor(&mut ChaCha8Rng::seed_from_u64(seed), &shape);
    let w = tape.constant(w);
    let m = tape.mul(v, w).unwrap();
    tape.sum(m).unwrap()
}

fn check(
    name: &str,
    shapes: &[&[usize]],
    f: impl Fn(&mut Tape, &[trajkit_autodiff::Var]) -> trajkit_autodiff::Result<trajkit_autodiff::Var>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 * 7919);
    for trial in 0..3 {
        let inputs: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
        let err = check_inputs(&inputs, H, &f).unwrap();
        assert!(err < OP_TOL, "{name} trial {trial}: relative error {err:e}");
    }
}

#[test]
fn matmul() {
    check("matmul", &[&[3, 4], &[4, 2]], |t, v| {
        let y = t.matmul(v[0], v[1])?;
        Ok(probe(t, y, 1))
    });
}

#[test]
fn add_sub_mul_scale() {
    check("add", &[&[2, 3], &[2, 3]], |t, v| {
        let y = t.add(v[0], v[1])?;
        Ok(probe(t, y, 2))
    });
    check("sub", &[&[2, 3], &[2, 3]], |t, v| {
        let y = t.sub(v[0], v[1])?;
        Ok(probe(t, y, 3))
    });
    check("elementwise_mul", &[&[5], &[5]], |t, v| {
        let y = t.mul(v[0], v[1])?;
        Ok(probe(t, y, 4))
    });
    check("scale", &[&[1, 6]], |t, v| {
        let y = t.scale(v[0], -1.7)?;
        Ok(probe(t, y, 5))
    });
}

#[test]
fn activations() {
    check("relu", &[&[1, 8]], |t, v| {
        let y = t.relu(v[0])?;
        Ok(probe(t, y, 6))
    });
    check("sigmoid", &[&[1, 8]], |t, v| {
        let y = t.sigmoid(v[0])?;
        Ok(probe(t, y, 7))
    });
    check("tanh", &[&[1, 8]], |t, v| {
        let y = t.tanh(v[0])?;
        Ok(probe(t, y, 8))
    });
}

#[test]
fn conv2d() {
    check("conv2d", &[&[2, 6, 5], &[3, 2, 3, 3], &[3]], |t, v| {
        let y = t.conv2d(v[0], v[1], v[2])?;
        Ok(probe(t, y, 9))
    });
}

#[test]
fn maxpool() {
    check("maxpool2x2", &[&[2, 5, 4]], |t, v| {
        let y = t.maxpool2x2(v[0])?;
        Ok(probe(t, y, 10))
    });
}

#[test]
fn shape_ops() {
    check("flatten", &[&[2, 2, 3]], |t, v| {
        let y = t.flatten(v[0])?;
        Ok(probe(t, y, 11))
    });
    check("concat", &[&[1, 3], &[1, 2], &[1, 4]], |t, v| {
        let y = t.concat(v)?;
        Ok(probe(t, y, 12))
    });
    check("slice", &[&[1, 9]], |t, v| {
        let y = t.slice(v[0], 2, 5)?;
        Ok(probe(t, y, 13))
    });
    check("sum", &[&[3, 3]], |t, v| t.sum(v[0]));
}

#[test]
fn losses() {
    for target in [0, 3, 6] {
        check("softmax_cross_entropy", &[&[1, 7]], move |t, v| {
            t.softmax_cross_entropy(v[0], target)
        });
    }
    check("mse_loss", &[&[1, 24], &[1, 24]], |t, v| {
        t.mse_loss(v[0], v[1])
    });
}

#[test]
fn composed_network_parameters() {
    // conv → relu → pool → flatten → dense → softmax CE, checked through the parameter path.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut store = ParamStore::new();
    let k = store.add("k", rand_tensor(&mut rng, &[2, 1, 3, 3]));
    let b = store.add("b", rand_tensor(&mut rng, &[2]));
    let w = store.add("w", rand_tensor(&mut rng, &[8, 3]));
    let image = rand_tensor(&mut rng, &[1, 6, 6]);
    let coords: Vec<_> = store
        .iter()
        .flat_map(|(id, p)| (0..p.value.numel()).map(move |j| (id, j)))
        .collect();
    let err = check_params(&store, &coords, H, |tape, s| {
        let x = tape.constant(image.clone());
        let (kv, bv, wv) = (tape.param(s, k), tape.param(s, b), tape.param(s, w));
        let c = tape.conv2d(x, kv, bv)?;
        let r = tape.relu(c)?;
        let p = tape.maxpool2x2(r)?;
        let f = tape.flatten(p)?;
        let logits = tape.matmul(f, wv)?;
        tape.softmax_cross_entropy(logits, 1)
    })
    .unwrap();
    assert!(err < 1e-6, "relative error {err:e}");
}

#[test]
fn freezing_everything_makes_training_a_no_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let w = store.add("w", rand_tensor(&mut rng, &[4, 2]));
    store.set_trainable_prefix("", false);
    let before = store.clone();
    for _ in 0..10 {
        let mut tape = Tape::new();
        let x = tape.constant(rand_tensor(&mut rng, &[1, 4]));
        let wv = tape.param(&store, w);
        let y = tape.matmul(x, wv).unwrap();
        let loss = tape.sum(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.param(w).is_none());
        sgd_step(&mut store, grads.param_slots(), 0.1).unwrap();
    }
    assert_eq!(store, before);
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut store = ParamStore::new();
        let w = store.add("w", rand_tensor(&mut rng, &[3, 1]));
        for _ in 0..25 {
            let mut tape = Tape::new();
            let x = tape.constant(rand_tensor(&mut rng, &[1, 3]));
            let target = tape.constant(Tensor::row(vec![rng.random_range(-1.0..1.0)]));
            let wv = tape.param(&store, w);
            let y = tape.matmul(x, wv).unwrap();
            let loss = tape.mse_loss(y, target).unwrap();
            let g = tape.backward(loss).unwrap();
            sgd_step(&mut store, g.param_slots(), 0.05).unwrap();
        }
        store.checkpoint_bytes("")
    };
    assert_eq!(run(), run());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn cross_entropy_gradient_sums_to_zero(logits in prop::collection::vec(-20.0..20.0f64, 2..40), pick in 0usize..1000) {
            let target = pick % logits.len();
            let mut tape = Tape::new();
            let l = tape.input(Tensor::row(logits));
            let loss = tape.softmax_cross_entropy(l, target).unwrap();
            let g = tape.backward(loss).unwrap();
            let s: f64 = g.wrt(l).unwrap().data().iter().sum();
            prop_assert!(s.abs() < 1e-12);
            prop_assert!(tape.value(loss).item() >= 0.0);
        }
    }
}
