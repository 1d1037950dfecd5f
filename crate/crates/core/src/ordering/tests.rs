use super::*;
use crate::instances::{appendix_a_instance, appendix_b_instance};
use crate::money::money;
use crate::valuation::Valuation;
use proptest::prelude::*;

fn names(inst: &Instance, order: &[ItemId]) -> Vec<String> {
    order.iter().map(|&j| inst.items[j].clone()).collect()
}

#[test]
fn appendix_a_forest_is_a_line() {
    let inst = appendix_a_instance(money("0.05")).unwrap();
    let f = build_ap_forest(&vcg(&inst).unwrap());
    assert_eq!(f.trees.len(), 1);
    let line: Vec<String> =
        f.trees[0].as_line().unwrap().into_iter().map(|n| ApForest::node_name(&inst, n)).collect();
    assert_eq!(line, ["a", "A", "b", "C", "c", "B", "d"]);
    let o = enumerate_orderings(&f, DEFAULT_CAP).unwrap();
    assert!(o.exhaustive());
    assert_eq!(o.orderings.len(), 1);
    assert_eq!(names(&inst, &o.orderings[0]), ["B", "C", "A"]);
}

#[test]
fn appendix_b_forest_is_a_star_of_depth_two() {
    let inst = appendix_b_instance().unwrap();
    let f = build_ap_forest(&vcg(&inst).unwrap());
    assert_eq!(f.trees.len(), 1);
    let t = &f.trees[0];
    assert_eq!(t.nodes[0].node, ForestNode::Player(0));
    assert_eq!(t.depth(), 2);
    let kids: Vec<ForestNode> = t.nodes[0].children.iter().map(|&c| t.nodes[c].node).collect();
    assert_eq!(kids, [ForestNode::Item(0), ForestNode::Item(1), ForestNode::Item(2)]);
    // A goes to 4, B to 2, C to 3
    for (&c, owner) in t.nodes[0].children.iter().zip([3, 1, 2]) {
        let grand: Vec<ForestNode> = t.nodes[c].children.iter().map(|&g| t.nodes[g].node).collect();
        assert_eq!(grand, [ForestNode::Player(owner)]);
    }
    let o = enumerate_orderings(&f, DEFAULT_CAP).unwrap();
    assert!(o.exhaustive());
    let mut all = o.orderings.clone();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 6);
}

#[test]
fn single_item_forest() {
    let inst = Instance::new(
        vec!["A".into()],
        vec!["x".into()],
        vec![Valuation::SingleValuedUd {
            value: money("1"),
            interest: ItemSet::singleton(0),
            num_items: 1,
        }],
        None,
        money("0.5"),
        Vec::new(),
        None,
    )
    .unwrap();
    let f = build_ap_forest(&vcg(&inst).unwrap());
    let o = enumerate_orderings(&f, 10).unwrap();
    assert_eq!(o.orderings, vec![vec![0]]);
    let rep = test_conjecture(&inst, &ConjectureConfig::default()).unwrap();
    assert_eq!(rep.witness, Some(vec!["A".to_string()]));
}

#[test]
fn cap_truncates_and_flags() {
    let inst = appendix_b_instance().unwrap();
    let f = build_ap_forest(&vcg(&inst).unwrap());
    let o = enumerate_orderings(&f, 4).unwrap();
    assert_eq!(o.orderings.len(), 4);
    assert_eq!(o.mode, EnumerationMode::Truncated);
    assert!(enumerate_orderings(&f, 0).is_err());
    let s = sample_orderings(&f, 50, 7);
    assert_eq!(s, sample_orderings(&f, 50, 7));
    assert!(s.orderings.len() <= 6 && !s.orderings.is_empty());
}

#[test]
fn appendix_a_conjecture_witness() {
    let inst = appendix_a_instance(money("0.05")).unwrap();
    let rep = test_conjecture(&inst, &ConjectureConfig::default()).unwrap();
    assert_eq!(rep.witness, Some(vec!["B".to_string(), "C".to_string(), "A".to_string()]));
}

#[test]
fn appendix_b_order_abc_is_not_vcg() {
    let inst = appendix_b_instance().unwrap();
    let cfg = ConjectureConfig { test_all: true, ..ConjectureConfig::default() };
    let rep = test_conjecture(&inst, &cfg).unwrap();
    assert_eq!(rep.results.len(), 6);
    let abc = rep.results.iter().find(|r| r.ordering == ["A", "B", "C"]).unwrap();
    assert!(matches!(abc.verdict, OrderingVerdict::NotVcg { .. }), "{abc:?}");
}

#[test]
fn non_single_valued_instances_are_rejected() {
    let inst = crate::instances::identical_items_instance(2).unwrap();
    assert!(matches!(test_conjecture(&inst, &ConjectureConfig::default()), Err(Error::Domain(_))));
}

fn random_single_valued() -> impl Strategy<Value = Instance> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(n, m)| {
        proptest::collection::vec((1i64..=8, 1u32..(1 << m)), n).prop_map(move |rows| {
            let valuations = rows
                .iter()
                .map(|&(v, mask)| Valuation::SingleValuedUd {
                    value: Money::from_int(v),
                    interest: ItemSet::from_items((0..m).filter(|j| mask & (1 << j) != 0)),
                    num_items: m,
                })
                .collect();
            Instance::new(
                (0..m).map(|j| format!("I{j}")).collect(),
                (0..n).map(|i| format!("p{i}")).collect(),
                valuations,
                None,
                Money::from_int(1),
                Vec::new(),
                None,
            )
            .unwrap()
        })
    })
}

proptest! {
    #[test]
    fn orderings_are_permutations_with_the_post_order_property(inst in random_single_valued()) {
        let res = vcg(&inst).unwrap();
        let f = build_ap_forest(&res);
        prop_assert_eq!(&f, &build_ap_forest(&res));

        let mut seen = vec![0; inst.num_items()];
        for t in &f.trees {
            for j in t.items() {
                seen[j] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));

        let o = enumerate_orderings(&f, DEFAULT_CAP).unwrap();
        prop_assert!(!o.orderings.is_empty());
        for ord in &o.orderings {
            let mut sorted = ord.clone();
            sorted.sort();
            prop_assert_eq!(sorted, (0..inst.num_items()).collect::<Vec<_>>());
            let pos = |j: ItemId| ord.iter().position(|&x| x == j).unwrap();
            for t in &f.trees {
                let parents = t.parents();
                for (i, n) in t.nodes.iter().enumerate() {
                    let ForestNode::Item(j) = n.node else { continue };
                    let mut up = parents[i];
                    while let Some(a) = up {
                        if let ForestNode::Item(anc) = t.nodes[a].node {
                            prop_assert!(pos(j) < pos(anc));
                        }
                        up = parents[a];
                    }
                }
            }
        }
    }
}
