mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rendezvous::world::{
    astar_path, detect_frontiers, generate_map, merge_maps, sense, Cell, CellState, KnownMap,
};

fn random_free(rng: &mut ChaCha8Rng, k: &KnownMap) -> Option<Cell> {
    let free: Vec<Cell> = k.free_cells().collect();
    (!free.is_empty()).then(|| free[rng.gen_range(0..free.len())])
}

#[test]
fn astar_agrees_with_dijkstra() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut reachable = 0;
    for _ in 0..50 {
        let (h, w) = (rng.gen_range(5..40), rng.gen_range(5..40));
        let k = common::random_known(&mut rng, h, w, 0.1, 0.25);
        let (Some(a), Some(b)) = (random_free(&mut rng, &k), random_free(&mut rng, &k)) else {
            continue;
        };
        let expect = common::dijkstra_cells(&k, a, b);
        let got = astar_path(&k, a, b);
        assert_eq!(got.is_some(), expect.is_some(), "{a:?} -> {b:?}");
        if let (Some(p), Some(d)) = (got, expect) {
            reachable += 1;
            assert!(
                (p.length - d * k.cell_size).abs() < 1e-9,
                "A* {} vs Dijkstra {}",
                p.length,
                d
            );
            assert_eq!(p.cells.first(), Some(&a));
            assert_eq!(p.cells.last(), Some(&b));
            let mut len = 0.0;
            for w in p.cells.windows(2) {
                let step = k.moves(w[0]).find(|&(c, _)| c == w[1]);
                assert!(step.is_some(), "illegal step {:?} -> {:?}", w[0], w[1]);
                len += step.unwrap().1;
            }
            assert!((len * k.cell_size - p.length).abs() < 1e-9);
        }
    }
    assert!(reachable >= 20, "too few reachable pairs: {reachable}");
}

#[test]
fn frontiers_match_direct_classification() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..40 {
        let (h, w) = (rng.gen_range(3..=50), rng.gen_range(3..=50));
        let p_unknown = rng.gen_range(0.05..0.6);
        let k = common::random_known(&mut rng, h, w, p_unknown, 0.2);
        let fronts = detect_frontiers(&k);
        let found: BTreeSet<Cell> = fronts
            .iter()
            .flat_map(|f| f.cells.iter().copied())
            .collect();
        assert_eq!(found, common::brute_frontier_cells(&k));
        assert_eq!(
            found.len(),
            fronts.iter().map(|f| f.size()).sum::<usize>(),
            "frontiers overlap"
        );
        for (i, f) in fronts.iter().enumerate() {
            // Connected within, separated between.
            let mut reached = BTreeSet::from([f.cells[0]]);
            let mut grew = true;
            while grew {
                grew = false;
                for &c in &f.cells {
                    if !reached.contains(&c) && reached.iter().any(|&r| common::king_adjacent(r, c))
                    {
                        reached.insert(c);
                        grew = true;
                    }
                }
            }
            assert_eq!(reached.len(), f.size());
            for g in &fronts[i + 1..] {
                assert!(!f
                    .cells
                    .iter()
                    .any(|&a| g.cells.iter().any(|&b| common::king_adjacent(a, b))));
            }
            assert!(f.cells.contains(&f.target()));
        }
    }
}

#[test]
fn explored_area_only_grows() {
    let world = generate_map(60, 2.0, 2, 3);
    let mut known = KnownMap::for_world(&world);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut pose = world.spawns[&1];
    let mut last = 0;
    for _ in 0..200 {
        let before = known.clone();
        sense(&world, &mut known, pose, 12.0).unwrap();
        assert!(known.known_free_count() >= last);
        last = known.known_free_count();
        for r in 0..known.height {
            for c in 0..known.width {
                let cell = Cell::new(r, c);
                let was = before.get(cell);
                assert!(
                    was == CellState::Unknown || was == known.get(cell),
                    "sensing changed a known cell"
                );
                match known.get(cell) {
                    CellState::Free => assert!(!world.is_occupied(cell)),
                    CellState::Occupied => assert!(world.is_occupied(cell)),
                    CellState::Unknown => {}
                }
            }
        }
        let moves: Vec<Cell> = known.moves(pose).map(|(c, _)| c).collect();
        if !moves.is_empty() {
            pose = moves[rng.gen_range(0..moves.len())];
        }
    }
}

fn map_strategy(h: usize, w: usize) -> impl Strategy<Value = KnownMap> {
    prop::collection::vec(0u8..3, h * w).prop_map(move |v| {
        let mut k = KnownMap::unknown(w, h, 1.0);
        for (i, s) in v.into_iter().enumerate() {
            let st = [CellState::Unknown, CellState::Free, CellState::Occupied][s as usize];
            k.set(Cell::new(i / w, i % w), st);
        }
        k
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn merge_is_a_semilattice((a, b, c) in (map_strategy(6, 7), map_strategy(6, 7), map_strategy(6, 7))) {
        let ab = merge_maps(&a, &b).unwrap();
        prop_assert_eq!(&ab, &merge_maps(&b, &a).unwrap());
        prop_assert_eq!(merge_maps(&ab, &c).unwrap(), merge_maps(&a, &merge_maps(&b, &c).unwrap()).unwrap());
        prop_assert_eq!(&merge_maps(&a, &a).unwrap(), &a);
        prop_assert!(ab.known_count() >= a.known_count().max(b.known_count()));
    }
}

#[test]
fn merge_rejects_mismatched_shapes() {
    assert!(merge_maps(&KnownMap::unknown(4, 4, 1.0), &KnownMap::unknown(5, 4, 1.0)).is_err());
    assert!(merge_maps(&KnownMap::unknown(4, 4, 1.0), &KnownMap::unknown(4, 4, 2.0)).is_err());
}
