use std::collections::BTreeSet;
use std::time::Instant;

use hetrain::api::Bootstrapper;
use hetrain::params::insecure_banner;
use hetrain::{Backend, CipherVector, HeError, KeyCustodian, PlainVector, SchemeParams, Security, SimBackend};
use hetrain_ckks::serialize::{read_eval_keys, write_eval_keys};
use hetrain_ckks::{CkksBackend, CkksConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn backend(n: usize, level: usize, delta: u32, eps: f64) -> CkksBackend {
    let params = SchemeParams::insecure(n, level, delta).unwrap();
    eprintln!("{}", insecure_banner(&params));
    CkksBackend::new(
        params,
        CkksConfig {
            bootstrap_error: eps,
            ..CkksConfig::default()
        },
    )
    .unwrap()
}

fn custodian(n: usize, level: usize, delta: u32, rotations: &[i64]) -> KeyCustodian<CkksBackend> {
    let set: BTreeSet<i64> = rotations.iter().copied().collect();
    KeyCustodian::generate(backend(n, level, delta, 0.0), &set, 7).unwrap()
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dec<B: Backend>(kc: &KeyCustodian<B>, c: &CipherVector<B>) -> Vec<f64> {
    kc.decrypt(c).unwrap().values
}

#[test]
fn roundtrip_within_two_pow_minus_30() {
    let kc = custodian(1 << 13, 2, 40, &[]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v = random_vec(&mut rng, 1 << 12);
    let err = max_err(&dec(&kc, &kc.encrypt_values(&v).unwrap()), &v);
    eprintln!("roundtrip error 2^{:.2}", err.log2());
    assert!(err <= 2f64.powi(-30), "roundtrip error 2^{:.2}", err.log2());

    let kc = custodian(1 << 12, 2, 40, &[]);
    let ones = vec![1.0; 1 << 11];
    let err = max_err(&dec(&kc, &kc.encrypt_values(&ones).unwrap()), &ones);
    assert!(err <= 2f64.powi(-30), "constant error 2^{:.2}", err.log2());
    let zero = dec(&kc, &kc.encrypt_values(&[]).unwrap());
    assert!(zero.iter().all(|x| x.abs() <= 2f64.powi(-30)));
}

#[test]
fn oversized_values_overflow() {
    let kc = custodian(1 << 10, 1, 40, &[]);
    let err = kc.encrypt_values(&[2f64.powi(30)]).unwrap_err();
    assert!(matches!(err, HeError::Overflow(_)), "{err:?}");
}

#[test]
fn random_ops_match_plaintext() {
    let slots = 1 << 12;
    let kc = custodian(1 << 13, 2, 40, &[1, 2, 5, -1, -3, 100]);
    let ev = kc.evaluator();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tol = 2f64.powi(-25);
    let mut worst = 0f64;
    let steps = [1i64, 2, 5, -1, -3, 100];
    let t0 = Instant::now();
    for case in 0..200 {
        let (a, b) = (random_vec(&mut rng, slots), random_vec(&mut rng, slots));
        let (ca, cb) = (kc.encrypt_values(&a).unwrap(), kc.encrypt_values(&b).unwrap());
        let (got, want): (CipherVector<_>, Vec<f64>) = match case % 5 {
            0 => (
                ev.add(&ca, &cb).unwrap(),
                a.iter().zip(&b).map(|(x, y)| x + y).collect(),
            ),
            1 => (
                ev.sub(&ca, &cb).unwrap(),
                a.iter().zip(&b).map(|(x, y)| x - y).collect(),
            ),
            2 => (
                ev.mul(&ca, &cb).unwrap(),
                a.iter().zip(&b).map(|(x, y)| x * y).collect(),
            ),
            3 => {
                let p = PlainVector::new(b.clone(), slots, 40).unwrap();
                (
                    ev.mul_plain(&ca, &p).unwrap(),
                    a.iter().zip(&b).map(|(x, y)| x * y).collect(),
                )
            }
            _ => {
                let k = steps[rng.random_range(0..steps.len())];
                let want = (0..slots)
                    .map(|i| a[(i as i64 + k).rem_euclid(slots as i64) as usize])
                    .collect();
                (ev.rotate(&ca, k).unwrap(), want)
            }
        };
        let err = max_err(&dec(&kc, &got), &want);
        worst = worst.max(err);
        assert!(err <= tol, "case {case}: error 2^{:.2}", err.log2());
    }
    eprintln!("worst error 2^{:.2} in {:?}", worst.log2(), t0.elapsed());
}

#[test]
fn products_and_identities() {
    let kc = custodian(1 << 12, 3, 40, &[]);
    let ev = kc.evaluator();
    let x = kc.encrypt_values(&[2.0, 3.0, -4.0, 0.5]).unwrap();
    let y = kc.encrypt_values(&[5.0, 7.0, 0.25, -2.0]).unwrap();
    let got = dec(&kc, &ev.mul(&x, &y).unwrap());
    assert!(max_err(&got[..4], &[10.0, 21.0, -1.0, -1.0]) <= 2f64.powi(-25));
    let ones = kc.encrypt_values(&vec![1.0; 1 << 11]).unwrap();
    let got = dec(&kc, &ev.mul(&x, &ones).unwrap());
    assert!(max_err(&got[..4], &[2.0, 3.0, -4.0, 0.5]) <= 2f64.powi(-25));
    let got = dec(&kc, &ev.add_scalar(&ev.mul_scalar(&x, -1.5).unwrap(), 0.25).unwrap());
    assert!(max_err(&got[..4], &[-2.75, -4.25, 6.25, -0.5]) <= 2f64.powi(-25));
}

#[test]
fn eight_multiplies_from_level_ten_then_exhaustion() {
    let kc = custodian(1 << 12, 10, 40, &[]);
    let ev = kc.evaluator();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v: Vec<f64> = (0..1 << 11).map(|_| rng.random_range(0.9..1.1)).collect();
    let factor = kc.encrypt_values(&v).unwrap();
    let mut acc = factor.clone();
    let mut want = v.clone();
    for i in 1..=10 {
        acc = ev.mul(&acc, &factor).unwrap();
        want.iter_mut().zip(&v).for_each(|(w, x)| *w *= x);
        assert_eq!(acc.level(), 10 - i);
        if i <= 8 {
            let err = max_err(&dec(&kc, &acc), &want);
            assert!(err <= 2f64.powi(-25) * 4.0, "multiply {i}: 2^{:.2}", err.log2());
        }
    }
    let err = ev.mul(&acc, &factor).unwrap_err();
    assert!(matches!(err, HeError::LevelExhausted { .. }), "{err:?}");
    assert!(matches!(
        kc.backend().mul_plain(acc.raw(), hetrain::Plain::Scalar(2.0)),
        Err(HeError::LevelExhausted { .. })
    ));
}

#[test]
fn rotations_shift_and_compose() {
    let slots = 1 << 11;
    let kc = custodian(1 << 12, 2, 40, &[2, 3, 5]);
    let ev = kc.evaluator();
    let v: Vec<f64> = (0..slots).map(|i| (i + 1) as f64 / slots as f64).collect();
    let c = kc.encrypt_values(&v).unwrap();
    let r2 = dec(&kc, &ev.rotate(&c, 2).unwrap());
    let want: Vec<f64> = (0..slots).map(|i| v[(i + 2) % slots]).collect();
    assert!(max_err(&r2, &want) <= 2f64.powi(-25));
    assert_eq!(dec(&kc, &ev.rotate(&c, 0).unwrap()), dec(&kc, &c));
    let composed = dec(&kc, &ev.rotate(&ev.rotate(&c, 2).unwrap(), 3).unwrap());
    let direct = dec(&kc, &ev.rotate(&c, 5).unwrap());
    assert!(max_err(&composed, &direct) <= 2f64.powi(-25));
    assert!(matches!(ev.rotate(&c, 4), Err(HeError::MissingRotationKey(4))));
}

#[test]
fn mixed_level_addition_aligns() {
    let kc = custodian(1 << 12, 4, 40, &[]);
    let ev = kc.evaluator();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (a, b) = (random_vec(&mut rng, 1 << 11), random_vec(&mut rng, 1 << 11));
    let ca = kc.encrypt_values(&a).unwrap();
    let cb = kc.encrypt_values(&b).unwrap();
    let low = ev.mul(&ev.mul(&cb, &cb).unwrap(), &cb).unwrap();
    let sum = ev.add(&ca, &low).unwrap();
    assert_eq!(sum.level(), 2);
    let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y * y * y).collect();
    assert!(max_err(&dec(&kc, &sum), &want) <= 2f64.powi(-25));
    let prod = ev.mul(&ca, &low).unwrap();
    let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y * y * y).collect();
    assert!(max_err(&dec(&kc, &prod), &want) <= 2f64.powi(-25));
}

#[test]
fn debug_bootstrap_preserves_or_perturbs() {
    let params = SchemeParams::new(1 << 12, 4, 40, 1, Security::InsecureTest).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = random_vec(&mut rng, 1 << 11);
    for (eps, lo, hi) in [(0.0, 0.0, 2f64.powi(-28)), (2f64.powi(-20), 0.0, 2f64.powi(-19))] {
        let b = CkksBackend::new(
            params.clone(),
            CkksConfig {
                bootstrap_error: eps,
                ..Default::default()
            },
        )
        .unwrap();
        let kc = KeyCustodian::generate(b, &BTreeSet::new(), 1).unwrap();
        let ev = kc.evaluator();
        let mut c = kc.encrypt_values(&v).unwrap();
        while c.level() > 0 {
            c = ev.mul_scalar(&c, 1.0).unwrap();
        }
        let before = dec(&kc, &c);
        let fresh = kc.bootstrap(&c).unwrap();
        assert_eq!((fresh.level(), fresh.depth()), (params.refresh_level(), 0));
        let dev = max_err(&dec(&kc, &fresh), &before);
        assert!(dev > lo && dev <= hi, "eps {eps}: deviation {dev:e}");
        if eps > 0.0 {
            assert!(dev > eps / 2.0, "perturbation too small: {dev:e}");
        }
    }
}

/// Random programs over the shared evaluator, replayed on both backends.
fn run_program<B: Backend>(
    kc: &KeyCustodian<B>,
    inputs: &[Vec<f64>],
    ops: &[(u8, usize, usize, i64)],
) -> (Vec<f64>, usize) {
    let ev = kc.evaluator();
    let mut regs: Vec<CipherVector<B>> = inputs.iter().map(|v| kc.encrypt_values(v).unwrap()).collect();
    for &(op, i, j, k) in ops {
        let (a, b) = (&regs[i % regs.len()], &regs[j % regs.len()]);
        let out = match op {
            0 => ev.add(a, b),
            1 => ev.sub(a, b),
            2 => ev.mul(a, b),
            3 => ev.mul_scalar(a, 0.5),
            4 => ev.rotate(a, k),
            _ => ev.add_scalar(a, 0.25),
        }
        .unwrap();
        regs.push(out);
    }
    let last = regs.last().unwrap();
    (dec(kc, last), last.depth())
}

#[test]
fn matches_sim_on_random_programs() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rotations = [1i64, -2, 7];
    for (case, log_n) in [12usize, 13, 12, 12, 13, 12].into_iter().enumerate() {
        let n = 1 << log_n;
        let params = SchemeParams::insecure(n, 6, 40).unwrap();
        let set: BTreeSet<i64> = rotations.into_iter().collect();
        let ckks = KeyCustodian::generate(
            CkksBackend::new(params.clone(), CkksConfig::default()).unwrap(),
            &set,
            3,
        )
        .unwrap();
        let sim = KeyCustodian::generate(SimBackend::exact(params).unwrap(), &set, 3).unwrap();
        let inputs: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, n / 2)).collect();
        // Keep depth within the chain by tracking it alongside generation.
        let mut depth: Vec<usize> = vec![0; 3];
        let mut ops = Vec::new();
        while ops.len() < 20 {
            let (op, i, j) = (
                rng.random_range(0..6u8),
                rng.random_range(0..depth.len()),
                rng.random_range(0..depth.len()),
            );
            let d = match op {
                2 => depth[i].max(depth[j]) + 1,
                3 => depth[i] + 1,
                0 | 1 => depth[i].max(depth[j]),
                _ => depth[i],
            };
            if d > 6 {
                continue;
            }
            depth.push(d);
            ops.push((op, i, j, rotations[rng.random_range(0..3)]));
        }
        let (c, cd) = run_program(&ckks, &inputs, &ops);
        let (s, sd) = run_program(&sim, &inputs, &ops);
        assert_eq!(cd, sd, "case {case}: ledger depth differs");
        assert_eq!(
            ckks.evaluator().ledger().max_depth(),
            sim.evaluator().ledger().max_depth()
        );
        let scale = s.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let tol = 2f64.powi(-(40 - 15)) * (cd as f64 + 1.0) * scale;
        let err = max_err(&c, &s);
        assert!(err <= tol, "case {case}: error {err:e} over budget {tol:e}");
    }
}

#[test]
fn security_gate_rejects_undersized_ring() {
    let err = SchemeParams::new(1 << 13, 8, 40, 0, Security::Bits(128)).unwrap_err();
    assert!(matches!(err, HeError::InvalidParams(_)));
    let mut p = SchemeParams::insecure(1 << 13, 8, 40).unwrap();
    p.security = Security::Bits(128);
    assert!(CkksBackend::new(p, CkksConfig::default()).is_err());
    let ok = SchemeParams::new(1 << 13, 3, 30, 0, Security::Bits(128)).unwrap();
    assert!(CkksBackend::new(ok, CkksConfig::default()).is_ok());
    let banner = insecure_banner(&SchemeParams::insecure(1 << 13, 8, 40).unwrap());
    assert!(banner.contains("WARNING: insecure-test parameters"));
}

#[test]
fn ciphertexts_and_keys_serialize() {
    let kc = custodian(1 << 10, 2, 40, &[1]);
    let ev = kc.evaluator();
    let c = ev.mul_scalar(&kc.encrypt_values(&[0.5, -0.25]).unwrap(), 3.0).unwrap();
    let mut buf = Vec::new();
    ev.write_cipher(&c, &mut buf).unwrap();
    assert_eq!(&buf[..4], b"RBCT");
    let back = ev.read_cipher(&mut buf.as_slice(), 0).unwrap();
    assert_eq!(back.level(), 1);
    assert_eq!(dec(&kc, &back), dec(&kc, &c));
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(
        ev.read_cipher(&mut bad.as_slice(), 0),
        Err(HeError::Malformed(_))
    ));
    assert!(ev.read_cipher(&mut &buf[..buf.len() - 1], 0).is_err());

    let b = backend(1 << 10, 2, 40, 0.0);
    let (_, keys) = b.keygen(&[1usize, 3].into_iter().collect(), 11).unwrap();
    let mut kb = Vec::new();
    write_eval_keys(b.context(), &keys, &mut kb).unwrap();
    assert_eq!(&kb[..4], b"RBKY");
    let read = read_eval_keys(b.context(), &mut kb.as_slice()).unwrap();
    assert_eq!(read, keys);
    assert_eq!(read.galois_elements().count(), 2);
}
