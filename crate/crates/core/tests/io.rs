mod common;

use common::*;
use decaf::io::{
    load_config, parse_xyz, read_fingerprints, read_models, write_config, write_fingerprints, write_models, write_xyz,
    Atom, RunConfig,
};
use decaf::regress::fit;
use decaf::*;
use proptest::prelude::*;

fn structure_strategy() -> impl Strategy<Value = Structure> {
    let atom =
        (0..SPECIES.len(), prop::array::uniform3(-1e3..1e3f64)).prop_map(|(s, x)| Atom::new(SPECIES[s], Vec3::from(x)));
    (
        "[a-zA-Z0-9_ =\"\\\\-]{0,12}",
        prop::collection::vec(atom, 1..8),
        prop::option::of(-1e6..1e6f64),
        prop::option::of(prop::array::uniform3(-10.0..10.0f64)),
        any::<bool>(),
    )
        .prop_map(|(id, atoms, energy, dipole, with_forces)| {
            let n = atoms.len();
            let mut s = Structure::new(id, atoms).unwrap();
            s.energy = energy;
            s.dipole = dipole.map(Vec3::from);
            if with_forces {
                s.forces = Some((0..n).map(|k| Vec3::new(k as f64 * 0.1, -1.5, 1e-9)).collect());
            }
            s
        })
}

proptest! {
    #[test]
    fn xyz_round_trips(structures in prop::collection::vec(structure_strategy(), 1..4)) {
        let text = write_xyz(&structures);
        let back = parse_xyz(&text).unwrap();
        prop_assert_eq!(back.len(), structures.len());
        for (a, b) in structures.iter().zip(&back) {
            prop_assert_eq!(&a.atoms, &b.atoms);
            prop_assert_eq!(&a.forces, &b.forces);
            prop_assert_eq!(a.energy, b.energy);
            prop_assert_eq!(a.dipole, b.dipole);
            if !a.id.is_empty() {
                prop_assert_eq!(&a.id, &b.id);
            }
        }
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), cutoff in 5.5..9.0f64, order in 2usize..=6) {
        let mut c = RunConfig { seed, cutoff, ..Default::default() };
        c.grid.radial_order = order;
        c.grid.angular = vec![26; order];
        let back = load_config(&write_config(&c)).unwrap();
        prop_assert_eq!(back, c);
    }
}

#[test]
fn fingerprint_container_round_trips() {
    let grid = default_grid();
    let f = featurizer(MinisumKernel::SquareAngle);
    let atoms = [("O", Vec3::zeros()), ("H", Vec3::new(0.96, 0.0, 0.0)), ("H", Vec3::new(-0.24, 0.93, 0.0))];
    let fps: Vec<Fingerprint> =
        f.extract(&neighborhood(&atoms, 6.0)).unwrap().into_iter().map(|p| p.with_provenance("water#0")).collect();
    let bytes = write_fingerprints(&fps, &grid).unwrap();
    let back = read_fingerprints(&bytes, &grid).unwrap();
    assert_eq!(back, fps);
    assert!(read_fingerprints(&bytes[..bytes.len() - 1], &grid).is_err());
    let other = grid_with(WeightKind::Constant { cutoff: 6.0 });
    assert!(read_fingerprints(&bytes, &other).is_err());
}

#[test]
fn model_container_round_trips() {
    let grid = default_grid();
    let f = featurizer(MinisumKernel::SquareAngle);
    let fps: Vec<Fingerprint> = (1..6)
        .map(|k| {
            let atoms = [("C", Vec3::zeros()), ("H", Vec3::new(0.8 + 0.1 * k as f64, 0.3, 0.0))];
            f.extract(&neighborhood(&atoms, 6.0)).unwrap().remove(0)
        })
        .collect();
    let targets: Vec<f64> = (0..fps.len()).map(|k| k as f64 * 0.5).collect();
    let model = fit(fps.clone(), targets, &HyperSearch::default()).unwrap();
    let bytes = write_models(&[&model], &grid).unwrap();
    let back = read_models(&bytes, &grid).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0].hyperparameters(), model.hyperparameters());
    for q in &fps {
        assert_eq!(back[0].predict(q).unwrap(), model.predict(q).unwrap());
    }
}
