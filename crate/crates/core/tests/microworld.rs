use hanger_core::geometry::{Cell, Mask};
use hanger_core::world::{asset, load_scenario, Pose, World, FLOOR};

fn scenario(name: &str) -> World {
    load_scenario(asset(name).unwrap()).unwrap().world
}

#[test]
fn mug_ring_comes_to_rest_on_the_hook() {
    let w = scenario("mug_on_hook.json");
    let mug = w.body("mug1").unwrap();
    // The ring's inner-top cells sit on local row 0; the hole below spans rows 1..=3.
    let holes = mug.spec.local_mask().enclosed_holes();
    assert_eq!(holes.len(), 9);
    assert!(holes.contains(Cell::new(1, 5)));

    // The hook starts inside the hole two rows below the ring top and the
    // mug drops one row until the ring top rests on it.
    let hook = w.pose("hook1").unwrap();
    let resting = Pose::new(hook.row - 1, hook.col - 5);
    let w1 = w.step();
    assert_eq!(w1.pose("mug1").unwrap(), resting);
    assert!(w1.is_settled("mug1", 20).unwrap());
    assert!(!w.is_settled("mug1", 1).unwrap());

    let mut cur = w.clone();
    for _ in 0..30 {
        let next = cur.step();
        assert_eq!(next.pose("hook1").unwrap(), hook);
        cur = next;
    }
}

#[test]
fn render_matches_asset() {
    let w = scenario("mug_on_hook.json");
    let f = w.render();
    assert_eq!(f, w.render());
    assert_eq!(f.mask("mug1").unwrap().len(), 31);
    assert_eq!(f.mask("hook1").unwrap().len(), 1);
    assert_eq!(f.mask(FLOOR).unwrap().len(), 20);
    let total: usize = f.masks.values().map(Mask::len).sum();
    let labelled = (0..f.rows)
        .flat_map(|r| (0..f.cols).map(move |c| Cell::new(r, c)))
        .filter(|c| f.label_at(*c).is_some())
        .count();
    assert_eq!(total, labelled);
    assert_eq!(f.label_at(Cell::new(5, 9)), Some("hook1"));
    assert_eq!(hanger_core::world::Frame::from_text(&f.to_text()).unwrap(), f);
    assert_eq!(f.to_ascii().lines().count(), 14);
}

#[test]
fn mug_on_floor_is_already_at_rest() {
    let w = scenario("mug_on_floor.json");
    assert!(w.is_settled("mug1", 20).unwrap());
}

#[test]
fn block_stack_script_pulls_the_base_away() {
    let w = scenario("block_stack.json");
    assert!(w.all_settled());
    let mut cur = w;
    let mut rows = Vec::new();
    for _ in 0..8 {
        cur = cur.step();
        rows.push(cur.pose("blockB").unwrap().row);
    }
    assert_eq!(rows, vec![5, 5, 5, 5, 6, 7, 7, 7]);
    assert_eq!(cur.pose("blockA").unwrap(), Pose::new(7, 0));
}
