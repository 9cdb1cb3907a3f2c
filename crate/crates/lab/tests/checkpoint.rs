use rand::Rng;
use resonance_core::policy::{clone_head_per_agent, PolicyParams};
use resonance_core::rng;
use resonance_core::trainers::QTable;
use resonance_lab::checkpoint::{Checkpoint, MAGIC};

fn bits(values: impl Iterator<Item = f64>) -> Vec<u64> {
    values.map(f64::to_bits).collect()
}

fn awkward_policy() -> PolicyParams {
    let mut p = PolicyParams::init(7, 4, 10, 8, &mut rng::seeded(3));
    let specials = [-0.0, f64::MIN_POSITIVE / 4.0, 1e300, -1e-300, 0.1 + 0.2];
    for (v, s) in p.values_mut().zip(specials.iter().cycle()) {
        *v += *s;
    }
    p
}

#[test]
fn policy_round_trip_is_bit_exact() {
    let shared = awkward_policy();
    let cloned = clone_head_per_agent(&shared).unwrap();
    for p in [shared, cloned] {
        let ckpt = Checkpoint::Policy(p.clone());
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        let Checkpoint::Policy(q) = back else { panic!("kind changed") };
        assert_eq!(bits(p.values().copied()), bits(q.values().copied()));
        assert_eq!(p.frozen_body, q.frozen_body);
        assert_eq!(p.heads.len(), q.heads.len());
        assert!(p.same_shape(&q));
    }
}

#[test]
fn qtable_round_trip_is_bit_exact() {
    let mut q = QTable::zeros(5, 3, 4);
    let mut r = rng::seeded(9);
    for v in q.online.iter_mut().chain(q.target.iter_mut()) {
        *v = r.gen_range(-5.0..5.0);
    }
    q.online[0] = -0.0;
    let back = Checkpoint::from_bytes(&Checkpoint::QTable(q.clone()).to_bytes()).unwrap();
    let Checkpoint::QTable(b) = back else { panic!("kind changed") };
    assert_eq!(bits(q.online.iter().copied()), bits(b.online.iter().copied()));
    assert_eq!(bits(q.target.iter().copied()), bits(b.target.iter().copied()));
    assert_eq!((b.n_agents, b.n_levels, b.n_actions), (5, 3, 4));
}

#[test]
fn save_and_load_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    let ckpt = Checkpoint::Policy(awkward_policy());
    ckpt.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], MAGIC);
    assert_eq!(Checkpoint::load(&path).unwrap().to_bytes(), bytes);
}

#[test]
fn corruption_is_rejected() {
    let good = Checkpoint::Policy(PolicyParams::init(2, 2, 3, 4, &mut rng::seeded(1))).to_bytes();

    let mut flipped = good.clone();
    flipped[70] ^= 1;
    assert!(Checkpoint::from_bytes(&flipped).unwrap_err().contains("checksum"));

    assert!(Checkpoint::from_bytes(&good[..good.len() - 9]).is_err());
    assert!(Checkpoint::from_bytes(&good[..20]).is_err());

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(Checkpoint::from_bytes(&magic).unwrap_err().contains("magic"));
}

#[test]
fn unknown_version_is_rejected() {
    let mut bytes = Checkpoint::QTable(QTable::zeros(2, 1, 2)).to_bytes();
    bytes[8] = 99;
    // refresh the checksum so only the version is wrong
    let n = bytes.len() - 8;
    let sum = resonance_core::rng::fnv1a(&bytes[..n]);
    bytes[n..].copy_from_slice(&sum.to_le_bytes());
    assert!(Checkpoint::from_bytes(&bytes).unwrap_err().contains("version"));
}
