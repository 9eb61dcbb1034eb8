use forcing_stages::cohen::Cohen;
use forcing_stages::family::{CONSTANT_ONE, CONSTANT_ZERO};
use forcing_stages::generic::{build, run_stage, Case, Polarity, StageObserver, Verifier};
use forcing_stages::pairing::unpair;
use forcing_stages::*;

fn cohen_build(r: &Registry, stages: u64, budget: u64) -> GenericBuildState<BitString> {
    build(&CohenRule, r, stages, budget, &mut ()).unwrap()
}

/// Stage at which requirement `e` first runs with `t = 0`.
fn first_stage(e: u64) -> u64 {
    e * (e + 1) / 2
}

#[test]
fn stage_decoding() {
    let decoded: Vec<_> = (1..=9).map(unpair).collect();
    assert_eq!(decoded[..5], [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
    assert_eq!(first_stage(3), 6);
}

#[test]
fn all_divergent_registry() {
    let r = Registry::divergent();
    let st = cohen_build(&r, 6, 64);
    assert!(st.bset.is_empty());
    assert_eq!(st.tree.depth(), 6);
    for rec in &st.trace {
        let h = rec.header;
        assert_eq!(rec.counts.strdiv, h.n * h.m);
        assert_eq!(rec.counts.conv_zero + rec.counts.conv_one, 0);
        let added = st.dense.all(h.e).iter().filter(|m| m.stage == h.stage).count() as u64;
        assert_eq!(added, h.m, "one extension per τ_j at stage {}", h.stage);
    }
    let report = verify_requirements(&CohenRule, &st, &r, 64, 512);
    let total = report.total();
    assert_eq!(total.case1, 0);
    assert_eq!(total.stable, total.case2);
    assert!(report.passed());
}

#[test]
fn constant_zero_stage_adds_every_witness() {
    let r = Registry::default();
    let s = first_stage(CONSTANT_ZERO);
    let st = cohen_build(&r, s, 256);
    let rec = st.trace.last().unwrap();
    assert_eq!(rec.header.e, CONSTANT_ZERO);
    assert!(rec.complete);
    assert_eq!(rec.records.len() as u64, rec.header.n * rec.header.m);
    for p in &rec.records {
        assert_eq!(p.case, Case::Conv { value: false });
        assert!(st.in_b(p.x));
        // the constant ignores its oracle, so the empty oracle already computes it
        assert_eq!(eval_family(&r, CONSTANT_ZERO, &BitString::empty(), p.x, 256), Some(false));
        let g = join(&p.sigma, &p.right).unwrap();
        assert_eq!(eval_family(&r, CONSTANT_ZERO, &g, p.x, 256), Some(false));
    }
}

#[test]
fn constant_one_stage_leaves_b_alone() {
    // the constant sits at every index so that each early stage reaches it
    let r = Registry::new(vec![Entry::Constant { value: true }; 4]);
    let mut st = GenericBuildState::new(&CohenRule);
    for s in 1..=3 {
        run_generic_stage(&mut st, s, &r, 256).unwrap();
        let rec = st.trace.last().unwrap();
        assert_eq!(rec.records.len() as u64, rec.header.n * rec.header.m);
        assert!(rec.records.iter().all(|p| p.case == Case::Conv { value: true }));
        assert!(st.bset.is_empty());
    }
    assert_eq!(Registry::default().entry(CONSTANT_ONE), &Entry::Constant { value: true });
}

#[test]
fn default_registry_verifies() {
    let r = Registry::default();
    let st = cohen_build(&r, 8, 256);
    let report = verify_requirements(&CohenRule, &st, &r, 256, 512);
    assert!(report.passed(), "{:?}", report.failures);
    let total = report.total();
    assert!(total.case1 > 0);
    assert_eq!(total.flipped, 0);
    assert!(st.allocations_fresh());
    assert!(check_tree_shape(&st.tree).passed());
    for rec in &st.trace {
        for p in &rec.records {
            assert_eq!(p.sigma.len(), p.right.len());
            if let Case::Conv { value } = p.case {
                let g = join(&p.sigma, &p.right).unwrap();
                assert_eq!(eval_family(&r, rec.header.e, &g, p.x, 256), Some(value));
                assert_eq!(value, !st.in_b(p.x));
            }
        }
    }
}

#[test]
fn streaming_verifier_matches_replay() {
    let r = Registry::default();
    let mut v = Verifier::new(&CohenRule, &r, 256, 512);
    let st = build(&CohenRule, &r, 8, 256, &mut v).unwrap();
    let streamed = v.finish();
    let replayed = verify_requirements(&CohenRule, &st, &r, 256, 512);
    assert_eq!(streamed.failures, replayed.failures);
    let (a, b) = (streamed.total(), replayed.total());
    assert_eq!((a.case1, a.case2, a.flipped), (b.case1, b.case2 + b.unreplayed, b.flipped));
}

#[test]
fn two_phase_registry_flips() {
    let r = Registry::default().delayed(40);
    let st = cohen_build(&r, 4, 32);
    let report = verify_requirements(&CohenRule, &st, &r, 32, 256);
    assert!(report.passed());
    let total = report.total();
    assert_eq!(total.case1, 0);
    assert!(total.flipped > 0);
    for f in &report.flips {
        let rec = &st.trace[(f.stage - 1) as usize];
        let p = rec.records.iter().find(|p| p.i == f.i && p.j == f.j).unwrap();
        let q = ConvQuery { e: f.e, left: p.sigma.clone(), right: p.right.clone(), x: f.x };
        assert!(!decide_conv(&q, &r, 32).converged());
        assert!(decide_conv(&q, &r, 256).converged());
    }
}

#[test]
fn tree_shape_and_paths() {
    let r = Registry::default();
    let st = cohen_build(&r, 3, 64);
    let leaves = st.tree.leaves();
    assert_eq!(leaves.len(), 8);
    let len = leaves[0].len();
    assert!(leaves.iter().all(|l| l.len() == len));
    for (k, a) in leaves.iter().enumerate() {
        assert_eq!(&st.tree.leaf(3, k as u64), a);
        assert!(st.tree.contains(a) && st.tree.contains(&a.prefix(len / 2)));
        for b in &leaves[k + 1..] {
            assert!(!a.compatible(b));
        }
    }
    assert_eq!(select_path(&st.tree, std::iter::repeat(false)), leaves[0]);
    assert_eq!(select_path(&st.tree, std::iter::repeat(true)), leaves[7]);
    assert_eq!(select_path(&st.tree, [false, true, false]), leaves[0b010]);
    // leaves sorted lexicographically follow the split choices
    let mut sorted = leaves.clone();
    sorted.sort();
    assert_eq!(sorted, leaves);
}

#[test]
fn density() {
    let r = Registry::default();
    let st = cohen_build(&r, 2, 64);
    assert!(check_density(&CohenRule, &st, 0, 0).unwrap());
    assert!(matches!(check_density(&CohenRule, &st, 5, 0), Err(Error::InsufficientStages(_))));
    let st = cohen_build(&r, 20, 64);
    assert!(check_density(&CohenRule, &st, 0, 3).unwrap());
    assert!(check_density(&CohenRule, &st, 0, 4).is_err());
}

#[test]
fn determinism() {
    let r = Registry::default();
    let a = serde_json::to_string(&cohen_build(&r, 7, 128)).unwrap();
    let b = serde_json::to_string(&cohen_build(&r, 7, 128)).unwrap();
    assert_eq!(a, b);
    let back: GenericBuildState<BitString> = serde_json::from_str(&a).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), a);
}

#[test]
fn stages_run_in_order() {
    let r = Registry::default();
    let mut st = GenericBuildState::new(&CohenRule);
    assert!(matches!(run_generic_stage(&mut st, 2, &r, 64), Err(Error::StageOrder { .. })));
    st.stage_bound = 1;
    run_generic_stage(&mut st, 1, &r, 64).unwrap();
    assert!(matches!(run_generic_stage(&mut st, 2, &r, 64), Err(Error::PairingOverflow { .. })));
}

fn constants_and_divergence() -> Registry {
    Registry::new(vec![
        Entry::Constant { value: true },
        Entry::Divergent,
        Entry::Constant { value: false },
        Entry::Constant { value: true },
        Entry::Divergent,
    ])
}

#[test]
fn product_over_cohen_matches_string_build() {
    let r = constants_and_divergence();
    let generic = cohen_build(&r, 5, 64);
    let product = build(&ProductRule::new(Cohen), &r, 5, 64, &mut ()).unwrap();
    assert_eq!(product.polarity, Polarity::StrictDivergence);
    for (g, p) in generic.trace.iter().zip(&product.trace) {
        assert_eq!(g.records.len(), p.records.len());
        for (a, b) in g.records.iter().zip(&p.records) {
            let expected = match a.case {
                Case::Conv { value: true } => Case::Conv { value: true },
                _ => Case::StrDiv,
            };
            assert_eq!(b.case, expected, "stage {} pair ({},{})", g.header.stage, a.i, a.j);
            assert_eq!(a.x, b.x);
        }
    }
    // B holds exactly the witnesses of pairs that do not converge to 1
    let witnesses_not_one = |st: &GenericBuildState<BitString>| {
        st.trace
            .iter()
            .flat_map(|r| &r.records)
            .filter(|p| p.case != Case::Conv { value: true })
            .map(|p| p.x)
            .collect::<Vec<_>>()
    };
    for x in witnesses_not_one(&generic) {
        assert!(product.in_b(x));
    }
}

#[test]
fn ks_product_polarity() {
    let r = Registry::divergent();
    let rule = ProductRule::new(KumabeSlaman);
    let st = build(&rule, &r, 5, 64, &mut ()).unwrap();
    let all: Vec<_> = st.trace.iter().flat_map(|t| &t.records).collect();
    assert!(!all.is_empty());
    assert!(all.iter().all(|p| p.case == Case::StrDiv && st.in_b(p.x)));
    assert_eq!(st.b_len(), all.len() as u64);

    let r = Registry::new(vec![Entry::Constant { value: true }; 4]);
    let st = build(&rule, &r, 3, 256, &mut ()).unwrap();
    assert!(st.trace.iter().flat_map(|t| &t.records).all(|p| p.case == Case::Conv { value: true }));
    assert!(st.bset.is_empty());
    let report = verify_requirements(&rule, &st, &r, 256, 512);
    assert!(report.passed());
}

#[test]
fn ks_product_on_default_registry() {
    let r = Registry::default();
    let rule = ProductRule::new(KumabeSlaman);
    let mut v = Verifier::new(&rule, &r, 128, 256);
    let st = build(&rule, &r, 8, 128, &mut v).unwrap();
    let report = v.finish();
    assert!(report.passed(), "{:?}", report.failures);
    assert_eq!(report.total().flipped, 0);
    assert!(report.total().case1 > 0);
    assert!(check_tree_shape(&st.tree).passed());
    assert!(st.allocations_fresh());
    for t in &st.trace {
        for p in &t.records {
            assert_eq!(p.sigma.len(), ks::ks_valuation(&p.right).len());
        }
    }
}

struct CountStages(u64);

impl<R> StageObserver<R> for CountStages {
    fn end_stage(&mut self, _h: &generic::StageHeader, _tree: &generic::LeafStore) {
        self.0 += 1;
    }
}

#[test]
fn observer_sees_every_stage() {
    let r = Registry::default();
    let mut st = GenericBuildState::new(&CohenRule);
    let mut obs = CountStages(0);
    for s in 1..=4 {
        run_stage(&mut st, &CohenRule, s, &r, 64, &mut obs).unwrap();
    }
    assert_eq!(obs.0, 4);
}

#[test]
fn ks_budget_boundary_flips_are_reported() {
    // stage 4 witnesses 133..=164 of the identity-odd entry need uses 268..=330
    let r = Registry::default();
    let rule = ProductRule::new(KumabeSlaman);
    let mut v = Verifier::new(&rule, &r, 256, 512);
    build(&rule, &r, 5, 256, &mut v).unwrap();
    let report = v.finish();
    assert!(report.passed());
    assert_eq!(report.total().flipped, 32);
    assert!(report.flips.iter().all(|f| f.stage == 4 && (133..=164).contains(&f.x)));
}
