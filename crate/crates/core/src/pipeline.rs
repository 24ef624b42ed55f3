//! End-to-end demonstration chain: an exact correlated-samples tester is
//! read as an overall booster, bootstrapped into a uniform booster over many
//! samples, collapsed back to a single-sample booster, and relabelled into a
//! tester — every stage's guarantee asserted exactly along the way.

use crate::boosters::{
    booster_to_tester, corr_to_overall, tester_error, uniform_to_single, BoosterParams,
    TesterParams, TesterStats,
};
use crate::bootstrap::{
    build_bootstrap_tree, verify_phase_progress, verify_submartingale, BoosterSource,
    BootstrapConfig, DpBoosterSource,
};
use crate::boosters::check_uniform_booster;
use crate::domain::DistPair;
use crate::error::{Error, Result};
use crate::exact::{corr_min_error_tree, dt_eps, Caps};
use crate::ratio::{fmt_rat, Rat};
use crate::rng::Rng;
use num_traits::One;

#[derive(Clone, Debug)]
pub struct PipelineParams {
    /// Samples and depth for the stage-1 correlated tester.
    pub corr_samples: usize,
    pub corr_depth: usize,
    /// Gate on the stage-1 tester's exact error.
    pub corr_error_target: Rat,
    /// Likelihood threshold used for the overall-booster reading and the
    /// phase boosters.
    pub booster_m: Rat,
    pub bootstrap: BootstrapConfig,
    /// Certification target for the bootstrapped uniform booster.
    pub uniform_delta: Rat,
    pub uniform_eps: Rat,
    pub uniform_m: Rat,
    /// Slack multiplier for the single-sample collapse.
    pub collapse_c: Rat,
    pub enum_budget: u64,
    pub sample_count: u64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub corr_error: Rat,
    pub corr_depth: usize,
    pub overall_delta: Rat,
    pub bootstrap_depth: usize,
    pub uniform_good_mass: Rat,
    pub submartingale_vertices: usize,
    pub phase_starts: usize,
    pub single_value: Rat,
    pub single_depth: usize,
    pub single_certified: bool,
    pub final_stats: TesterStats,
    pub final_error: Rat,
    pub reference_cost: usize,
    pub cost_ratio: f64,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::GuaranteeViolated(msg) => Error::GuaranteeViolated(format!("stage {name}: {msg}")),
        Error::NotABooster(msg) => Error::NotABooster(format!("stage {name}: {msg}")),
        Error::OracleNotBooster(msg) => Error::OracleNotBooster(format!("stage {name}: {msg}")),
        other => other,
    })
}

/// Run the whole chain for one pair with the supplied phase-booster source.
pub fn run_pipeline_with_source(
    pair: &DistPair,
    params: &PipelineParams,
    source: &mut dyn BoosterSource,
    caps: &Caps,
) -> Result<PipelineReport> {
    // stage 1: exact correlated-samples tester at the configured depth
    let (corr_error, corr_tester) = stage(
        "corr-tester",
        corr_min_error_tree(pair, params.corr_samples, params.corr_depth, caps),
    )?;
    if corr_error > params.corr_error_target {
        return Err(Error::GuaranteeViolated(format!(
            "stage corr-tester: error {} above target {}",
            fmt_rat(&corr_error),
            fmt_rat(&params.corr_error_target)
        )));
    }

    // stage 2: read the tester as an overall booster
    let stats = crate::boosters::tester_stats(&corr_tester, pair, params.corr_samples);
    let tp = TesterParams {
        delta0: stats.accept_on_d0.clone(),
        delta1: Rat::one() - &stats.accept_on_d1,
    };
    let overall = stage(
        "corr-to-overall",
        corr_to_overall(&corr_tester, pair, params.corr_samples, &tp, &params.booster_m),
    )?;

    // stage 3: bootstrap to a uniform booster over many samples
    let bt = stage("bootstrap", build_bootstrap_tree(&params.bootstrap, pair, source))?;
    let sub = stage("submartingale", verify_submartingale(&bt.tree, pair, &params.bootstrap.trunc))?;
    if sub.violations > 0 {
        return Err(Error::GuaranteeViolated(format!(
            "stage submartingale: {} violations",
            sub.violations
        )));
    }
    let phases = stage("phase-progress", verify_phase_progress(&bt, &params.bootstrap, pair))?;
    if phases.violations > 0 {
        return Err(Error::GuaranteeViolated(format!(
            "stage phase-progress: {} violations",
            phases.violations
        )));
    }
    let uniform = stage(
        "uniform-certificate",
        check_uniform_booster(
            &bt.tree,
            pair,
            params.bootstrap.total_samples,
            &params.uniform_delta,
            &params.uniform_eps,
            &params.uniform_m,
        ),
    )?;
    if !uniform.holds {
        return Err(Error::GuaranteeViolated(format!(
            "stage uniform-certificate: good mass {}",
            fmt_rat(&uniform.good_mass)
        )));
    }

    // stage 4: collapse to a single-sample booster
    let uniform_params =
        BoosterParams::new(params.uniform_delta.clone(), params.uniform_eps.clone(), params.uniform_m.clone())?;
    let mut rng = Rng::new(params.seed);
    let single = stage(
        "uniform-to-single",
        uniform_to_single(
            &bt.tree,
            pair,
            params.bootstrap.total_samples,
            &uniform_params,
            &params.collapse_c,
            params.enum_budget,
            params.sample_count,
            &mut rng,
        ),
    )?;

    // stage 5: relabel into the final tester
    let final_delta =
        &params.uniform_delta + &params.uniform_eps + params.collapse_c.recip();
    let (_, final_stats) = stage(
        "booster-to-tester",
        booster_to_tester(&single.tree, pair, &final_delta, &params.uniform_m),
    )?;
    let final_error = tester_error(&final_stats);

    // reference: single-sample distributional cost at error 1/3
    let mixture = pair.balanced_mixture();
    let reference_cost = dt_eps(&pair.f, &mixture, &crate::ratio::rat(1, 3), caps)?;
    let cost_ratio = final_stats.depth as f64 / reference_cost.max(1) as f64;

    Ok(PipelineReport {
        corr_error,
        corr_depth: corr_tester.depth(),
        overall_delta: overall.delta,
        bootstrap_depth: bt.tree.depth(),
        uniform_good_mass: uniform.good_mass,
        submartingale_vertices: sub.vertices_checked,
        phase_starts: phases.phase_starts_checked,
        single_value: single.value,
        single_depth: single.tree.depth(),
        single_certified: single.certified,
        final_stats,
        final_error,
        reference_cost,
        cost_ratio,
    })
}

/// Run the chain with the default exact-DP phase boosters.
pub fn run_pipeline(pair: &DistPair, params: &PipelineParams, caps: &Caps) -> Result<PipelineReport> {
    let mut source = DpBoosterSource::new(params.bootstrap.booster_m.clone());
    run_pipeline_with_source(pair, params, &mut source, caps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Alphabet, Cell, Dist, PartialFunction};
    use crate::dtree::{DecisionTree, TruncationParams};
    use crate::ratio::{rat, rat_int};

    fn dictator_pair() -> DistPair {
        let f = PartialFunction::dictator(2, 0);
        let d0 = Dist::uniform_on(2, Alphabet::binary(), &[vec![0, 0], vec![0, 1]]).unwrap();
        let d1 = Dist::uniform_on(2, Alphabet::binary(), &[vec![1, 0], vec![1, 1]]).unwrap();
        DistPair::new(f, d0, d1).unwrap()
    }

    fn skewed_xor_pair() -> DistPair {
        let f = PartialFunction::xor(2);
        let d0 = Dist::uniform_on(2, Alphabet::binary(), &[vec![0, 0], vec![1, 1]]).unwrap();
        let d1 = Dist::new(
            2,
            Alphabet::binary(),
            [(vec![0, 1], rat(2, 3)), (vec![1, 0], rat(1, 3))],
        )
        .unwrap();
        DistPair::new(f, d0, d1).unwrap()
    }

    pub(super) fn toy_params(corr_depth: usize, phase_depth: usize) -> PipelineParams {
        PipelineParams {
            corr_samples: 1,
            corr_depth,
            corr_error_target: rat_int(0),
            booster_m: rat_int(2),
            bootstrap: BootstrapConfig {
                total_samples: 4,
                phase_samples: 1,
                phase_depth,
                phase_multiplier: 2,
                trunc: TruncationParams::toy(),
                unsettled_floor: 1,
                booster_delta: rat(1, 10),
                booster_m: rat_int(2),
                progress_target: 0.001,
            },
            uniform_delta: rat_int(0),
            uniform_eps: rat_int(0),
            uniform_m: rat_int(2),
            collapse_c: rat_int(2),
            enum_budget: 10_000,
            sample_count: 200,
            seed: 7,
        }
    }

    #[test]
    fn pipeline_on_dictator_pair() {
        let pair = dictator_pair();
        let report = run_pipeline(&pair, &toy_params(1, 1), &Caps::default()).unwrap();
        assert_eq!(report.corr_error, rat_int(0));
        assert_eq!(report.overall_delta, rat_int(0));
        assert_eq!(report.uniform_good_mass, rat_int(1));
        assert_eq!(report.single_value, rat_int(1));
        assert!(report.single_certified);
        assert_eq!(report.final_stats.accept_on_d1, rat_int(1));
        assert!(report.final_error <= rat(1, 4));
        assert_eq!(report.reference_cost, 1);
    }

    #[test]
    fn pipeline_on_skewed_xor_pair() {
        let pair = skewed_xor_pair();
        let report = run_pipeline(&pair, &toy_params(2, 2), &Caps::default()).unwrap();
        assert_eq!(report.corr_error, rat_int(0));
        assert_eq!(report.uniform_good_mass, rat_int(1));
        assert!(report.single_value >= rat(1, 2));
        assert!(report.final_error <= rat(1, 3));
        assert_eq!(report.reference_cost, 2);
        assert!(report.cost_ratio <= 4.0);
    }

    struct UselessSource;
    impl BoosterSource for UselessSource {
        fn booster_for(
            &mut self,
            pair: &DistPair,
            _base: &Cell,
            k: usize,
            _depth: usize,
        ) -> crate::error::Result<DecisionTree> {
            Ok(DecisionTree::leaf_only(k, pair.n(), pair.alphabet(), None))
        }
    }

    #[test]
    fn faulty_booster_aborts_with_stage_name() {
        let pair = dictator_pair();
        let mut source = UselessSource;
        let err =
            run_pipeline_with_source(&pair, &toy_params(1, 1), &mut source, &Caps::default()).unwrap_err();
        match err {
            Error::OracleNotBooster(msg) => assert!(msg.contains("stage bootstrap"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
