use ccm_core::coalition::{
    merge_pass, split_pass, CoalitionStructure, DecisionLog, Negotiation, PassKind, ProtocolMode,
    SplitCandidates,
};
use ccm_core::model::{ModelParams, StockState};
use ccm_core::mpc::{solve_structure, CommMode, MpcConfig, StructureRequest, SustainabilityBand};

fn config(horizon: usize) -> MpcConfig {
    MpcConfig {
        horizon,
        sustainability_radius: SustainabilityBand::Off,
        ..MpcConfig::default()
    }
}

fn request<'a>(state: &'a StockState, params: &'a ModelParams, cfg: &'a MpcConfig) -> StructureRequest<'a> {
    StructureRequest {
        state,
        params,
        cfg,
        comm: CommMode::Cross,
        warm_start: None,
        anchor: None,
    }
}

fn negotiation(req: StructureRequest<'_>, mode: ProtocolMode) -> Negotiation<'_> {
    Negotiation {
        request: req,
        mode,
        day: 30,
        deadline: None,
    }
}

/// Two boats that overfish one shared rich region when competing.
fn shared_region() -> ModelParams {
    ModelParams::new(vec![20.0, 5.0], vec![0.9, 0.5], vec![0.4, 0.4], vec![200.0, 20.0]).unwrap()
}

#[test]
fn grand_structure_is_left_alone() {
    let p = ModelParams::reference();
    let cfg = config(5);
    let s = p.initial_state();
    let req = request(&s, &p, &cfg);
    let grand = CoalitionStructure::grand(6);
    let sol = solve_structure(&grand, &req).unwrap();
    let mut log = DecisionLog::new();
    let out = merge_pass(&grand, &sol, &negotiation(req, ProtocolMode::WithRedistribution), &mut log).unwrap();
    assert!(out.structure.same_partition(&grand));
    assert!(log.is_empty());
}

#[test]
fn competing_boats_merge() {
    let p = shared_region();
    let cfg = config(8);
    let s = p.initial_state();
    let req = request(&s, &p, &cfg);
    let singles = CoalitionStructure::singletons(2, 3);
    let sol = solve_structure(&singles, &req).unwrap();
    let mut log = DecisionLog::new();
    let out = merge_pass(&singles, &sol, &negotiation(req, ProtocolMode::WithRedistribution), &mut log).unwrap();
    assert_eq!(out.structure.blocks(), &[vec![0, 1]]);
    let r = &log.records()[0];
    assert!(r.accepted);
    assert_eq!(r.pass, PassKind::Merge);
    assert!(r.merged_objective.unwrap() >= r.part_a.unwrap() + r.part_b.unwrap());
    assert!(out.solution.total_objective() >= sol.total_objective());
    // ratios follow the standalone optima
    let ratio = r.part_a.unwrap() / (r.part_a.unwrap() + r.part_b.unwrap());
    let shares = ccm_core::coalition::redistribute(1.0, &out.structure.ledger()[0], &[0, 1]).unwrap();
    assert!((shares[0].1 - ratio).abs() < 1e-12);
}

#[test]
fn accepted_merges_are_logged_with_their_condition() {
    let p = ModelParams::reference();
    let cfg = config(6);
    let s = p.initial_state();
    let req = request(&s, &p, &cfg);
    let singles = CoalitionStructure::singletons(6, 3);
    let sol = solve_structure(&singles, &req).unwrap();
    for mode in [ProtocolMode::WithRedistribution, ProtocolMode::WithoutRedistribution] {
        let mut log = DecisionLog::new();
        let out = merge_pass(&singles, &sol, &negotiation(req, mode), &mut log).unwrap();
        assert!(out.structure.validate(6).is_ok());
        for r in log.accepted() {
            let (a, b) = (r.part_a.unwrap(), r.part_b.unwrap());
            match mode {
                ProtocolMode::WithRedistribution => assert!(r.merged_objective.unwrap() >= a + b),
                ProtocolMode::WithoutRedistribution => {
                    assert!(r.share_a.unwrap() >= a && r.share_b.unwrap() >= b)
                }
            }
        }
        let merges = log.accepted().count();
        assert_eq!(out.structure.len(), 6 - merges);
    }
}

#[test]
fn singletons_have_nothing_to_split() {
    let p = shared_region();
    let cfg = config(4);
    let s = p.initial_state();
    let req = request(&s, &p, &cfg);
    let singles = CoalitionStructure::singletons(2, 3);
    let sol = solve_structure(&singles, &req).unwrap();
    let mut log = DecisionLog::new();
    let ctx = negotiation(req, ProtocolMode::WithRedistribution);
    let out = split_pass(&singles, &sol, &ctx, SplitCandidates::LedgerAndSingles, &mut log).unwrap();
    assert!(out.structure.same_partition(&singles));
    assert!(log.is_empty());
}

#[test]
fn unfair_share_splits_without_redistribution() {
    // boat 2 catches far more on its own in the poor region than its share of the joint plan
    let p = ModelParams::new(vec![50.0, 40.0], vec![0.5, 0.5], vec![0.6, 0.05], vec![300.0, 80.0]).unwrap();
    let cfg = config(4);
    let s = p.initial_state();
    let req = request(&s, &p, &cfg);
    let pair = CoalitionStructure::new(vec![vec![0, 1]], 3).unwrap();
    let sol = solve_structure(&pair, &req).unwrap();
    let mut log = DecisionLog::new();
    let ctx = negotiation(req, ProtocolMode::WithoutRedistribution);
    let out = split_pass(&pair, &sol, &ctx, SplitCandidates::LedgerAndSingles, &mut log).unwrap();
    let r = &log.records()[0];
    let margin = cfg.convergence_tol;
    let expected = r.share_a.unwrap() + margin < r.part_a.unwrap() || r.share_b.unwrap() + margin < r.part_b.unwrap();
    assert_eq!(r.accepted, expected);
    assert!(r.accepted, "{r:?}");
    assert_eq!(out.structure.len(), 2);
}

#[test]
fn repeated_passes_at_equilibrium_change_nothing() {
    let p = ModelParams::reference();
    let cfg = config(6);
    let s = p.initial_state();
    let req = request(&s, &p, &cfg);
    let ctx = negotiation(req, ProtocolMode::WithRedistribution);
    let mut structure = CoalitionStructure::singletons(6, 3);
    let mut sol = solve_structure(&structure, &req).unwrap();
    let mut log = DecisionLog::new();
    for _ in 0..4 {
        let m = merge_pass(&structure, &sol, &ctx, &mut log).unwrap();
        let sp = split_pass(&m.structure, &m.solution, &ctx, SplitCandidates::LedgerAndSingles, &mut log).unwrap();
        let fixed = sp.structure.same_partition(&structure);
        structure = sp.structure;
        sol = sp.solution;
        if fixed {
            let again_m = merge_pass(&structure, &sol, &ctx, &mut log).unwrap();
            let again = split_pass(&again_m.structure, &again_m.solution, &ctx, SplitCandidates::LedgerAndSingles, &mut log).unwrap();
            assert!(again.structure.same_partition(&structure));
            return;
        }
    }
    panic!("no fixed point within four rounds: {structure}");
}
