#![allow(dead_code)]

use merchant_po::basis::{penalty_increments, BasisFamily, BasisSpec, ConditionalMoments, PenaltyIncrementTable};
use merchant_po::market::{simulate, FactorLoadings, InitialCurves, ScenarioSet, SyntheticCalibration};
use merchant_po::mdp::{DecisionGraph, PlantParams, ReducedMode};
use merchant_po::pathlp::{build_plp, PathLpModel};

pub struct Fixture {
    pub params: PlantParams,
    pub graph: DecisionGraph,
    pub spec: BasisSpec,
    pub loadings: FactorLoadings,
    pub initial: InitialCurves,
    pub scenarios: ScenarioSet,
    pub increments: PenaltyIncrementTable,
}

impl Fixture {
    pub fn new(stages: usize, paths: usize, family: BasisFamily, cal: SyntheticCalibration, seed: u64) -> Self {
        let params = PlantParams::ethanol(stages);
        Self::with_params(params, paths, family, cal, seed)
    }

    pub fn with_params(
        params: PlantParams,
        paths: usize,
        family: BasisFamily,
        cal: SyntheticCalibration,
        seed: u64,
    ) -> Self {
        let stages = params.stages;
        let graph = DecisionGraph::new(&params).unwrap();
        let spec = BasisSpec::new(stages, family).unwrap();
        let loadings = cal.loadings(stages).unwrap();
        let initial = InitialCurves::flat(stages, 6.0, 2.55, 4.0);
        let scenarios = simulate(&initial, &loadings, paths, seed).unwrap();
        let moments = ConditionalMoments::new(&spec, &loadings).unwrap();
        let increments = penalty_increments(&spec, &moments, &scenarios, &graph).unwrap();
        Fixture { params, graph, spec, loadings, initial, scenarios, increments }
    }

    pub fn model(&self) -> PathLpModel {
        build_plp(&self.scenarios, &self.spec, &self.increments, &self.graph, ReducedMode::Operational).unwrap()
    }
}
