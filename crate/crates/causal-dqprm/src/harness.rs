//! Experiment harness: one training mode, several seeded runs, percentile
//! bands over the evaluation curves, and a fixed CSV format.
//!
//! Each run is fully determined by its seed (training, evaluation, and the
//! final success estimates all draw from the run's own RNG), so the fan-out
//! over seeds can use however many workers are available without changing a
//! single output byte.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::compose::check_strict;
use crate::envs::{load_task, LoadedTask};
use crate::error::{Error, Result};
use crate::tlcd::CausalDfa;
use crate::train::{
    causal_dqprm_train, centralized_train, dqprm_train, EvalPoint, TrainConfig, TrainRun,
};

/// The four training modes compared in the case studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Decentralized learners with causal knowledge.
    DecTlcd,
    /// Decentralized learners without causal knowledge.
    DecNoTlcd,
    /// One joint learner carrying the team-level causal DFA.
    CentTlcd,
    /// One joint learner, plain.
    CentNoTlcd,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::DecTlcd, Mode::DecNoTlcd, Mode::CentTlcd, Mode::CentNoTlcd];

    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "dec-tlcd" => Ok(Mode::DecTlcd),
            "dec-no-tlcd" => Ok(Mode::DecNoTlcd),
            "cent-tlcd" => Ok(Mode::CentTlcd),
            "cent-no-tlcd" => Ok(Mode::CentNoTlcd),
            other => Err(Error::invalid(format!(
                "unknown mode '{other}'; expected one of dec-tlcd, dec-no-tlcd, \
                 cent-tlcd, cent-no-tlcd"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::DecTlcd => "dec-tlcd",
            Mode::DecNoTlcd => "dec-no-tlcd",
            Mode::CentTlcd => "cent-tlcd",
            Mode::CentNoTlcd => "cent-no-tlcd",
        }
    }

    pub fn centralized(self) -> bool {
        matches!(self, Mode::CentTlcd | Mode::CentNoTlcd)
    }

    pub fn uses_tlcd(self) -> bool {
        matches!(self, Mode::DecTlcd | Mode::CentTlcd)
    }
}

/// A batch of runs over one task and mode.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Path to the task definition file.
    pub task: PathBuf,
    pub mode: Mode,
    /// One training run per seed.
    pub seeds: Vec<u64>,
    /// Per-run template; the seed is replaced per run and `p_sync` is taken
    /// from the task file unless overridden below.
    pub train: TrainConfig,
    pub p_sync_override: Option<f64>,
}

impl ExperimentConfig {
    /// Convenience constructor: `runs` consecutive seeds from `base_seed`.
    pub fn new(task: impl Into<PathBuf>, mode: Mode, runs: usize, base_seed: u64) -> Self {
        ExperimentConfig {
            task: task.into(),
            mode,
            seeds: (0..runs as u64).map(|k| base_seed + k).collect(),
            train: TrainConfig::default(),
            p_sync_override: None,
        }
    }

    pub fn runs(&self) -> usize {
        self.seeds.len()
    }
}

/// What one training run contributes to the aggregate.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub seed: u64,
    pub curve: Vec<EvalPoint>,
    /// Fraction of post-training greedy rollouts the team completed.
    pub team_success: f64,
    /// Per-agent local acceptance fractions over the same rollouts.
    pub agent_success: Vec<f64>,
}

/// Percentile bands over the per-run evaluation curves, one entry per
/// evaluation step.
#[derive(Debug, Clone)]
pub struct Aggregated {
    pub steps: Vec<u64>,
    pub prc_25: Vec<f64>,
    pub prc_50: Vec<f64>,
    pub prc_75: Vec<f64>,
    /// The runs that went into the bands, in seed order.
    pub runs: Vec<RunMetrics>,
}

/// Nearest-rank percentile of an ascending-sorted sample: the element at
/// rank `ceil(pct/100 * n)` (1-based).
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    assert!((0.0..=100.0).contains(&pct) && pct > 0.0, "percentile {pct} out of range");
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "sample not sorted");
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

/// Trains one run of the given mode on a loaded task.
///
/// `dec-no-tlcd` uses the plainly decentralized trainer when the strict
/// decomposition check passes. When it fails but the task carries a
/// team-level diagram, the causally gated trainer takes over with
/// degenerate per-agent DFAs — the relaxed check admits the task, while
/// the learners still get no causal knowledge.
pub fn train_one(task: &LoadedTask, mode: Mode, cfg: &TrainConfig) -> Result<TrainRun> {
    let env = task.team_env()?;
    match mode {
        Mode::CentNoTlcd => centralized_train(&env, cfg, None),
        Mode::CentTlcd => {
            let causal = task.team_causal()?.ok_or_else(|| {
                Error::invalid("mode 'cent-tlcd' needs a causal diagram in the task file")
            })?;
            centralized_train(&env, cfg, Some(&causal))
        }
        Mode::DecTlcd => {
            let team_causal = task.team_causal()?.ok_or_else(|| {
                Error::invalid("mode 'dec-tlcd' needs a team causal diagram in the task file")
            })?;
            if !task.agents.iter().any(|a| a.tlcd.is_some()) {
                return Err(Error::invalid(
                    "mode 'dec-tlcd' needs at least one per-agent causal diagram",
                ));
            }
            let agent_causal: Vec<CausalDfa> =
                (0..task.agents.len()).map(|i| task.agent_causal(i)).collect::<Result<_>>()?;
            causal_dqprm_train(&env, cfg, &team_causal, &agent_causal)
        }
        Mode::DecNoTlcd => {
            let strict_ok =
                check_strict(&task.team, &task.local_alphabets())?.is_bisimilar();
            if strict_ok {
                return dqprm_train(&env, cfg);
            }
            match task.team_causal()? {
                Some(team_causal) => {
                    let trivial: Vec<CausalDfa> = task
                        .agents
                        .iter()
                        .map(|a| CausalDfa::trivial(a.alphabet.clone()))
                        .collect();
                    causal_dqprm_train(&env, cfg, &team_causal, &trivial)
                }
                // No diagram to relax the check with: let the strict gate
                // report the rejection and its distinguishing sequence.
                None => dqprm_train(&env, cfg),
            }
        }
    }
}

/// Runs every seed of the experiment (in parallel) and aggregates the
/// curves. Runs that produced fewer evaluation points than the rest are
/// discarded with a warning; disagreeing step axes are an error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Aggregated> {
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("an experiment needs at least one seed"));
    }
    let task = load_task(&cfg.task)?;
    let p_sync = cfg.p_sync_override.unwrap_or(task.p_sync);
    let runs: Vec<RunMetrics> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let train_cfg = TrainConfig { seed, p_sync, ..cfg.train.clone() };
            let run = train_one(&task, cfg.mode, &train_cfg)?;
            Ok(RunMetrics {
                seed,
                curve: run.stats.eval_curve,
                team_success: run.stats.team_success,
                agent_success: run.stats.agent_success,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(runs)
}

/// Collapses per-run curves into 25/50/75th nearest-rank percentile bands.
pub fn aggregate(runs: Vec<RunMetrics>) -> Result<Aggregated> {
    if runs.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let full_len = runs.iter().map(|r| r.curve.len()).max().unwrap_or(0);
    let (kept, dropped): (Vec<RunMetrics>, Vec<RunMetrics>) =
        runs.into_iter().partition(|r| r.curve.len() == full_len);
    for r in &dropped {
        eprintln!(
            "warning: discarding partial run (seed {}, {} of {} evaluation points)",
            r.seed,
            r.curve.len(),
            full_len
        );
    }

    let steps: Vec<u64> = kept[0].curve.iter().map(|p| p.step).collect();
    for r in &kept[1..] {
        if r.curve.iter().map(|p| p.step).ne(steps.iter().copied()) {
            return Err(Error::internal(
                "evaluation step axes disagree across runs of one experiment",
            ));
        }
    }

    let mut prc_25 = Vec::with_capacity(steps.len());
    let mut prc_50 = Vec::with_capacity(steps.len());
    let mut prc_75 = Vec::with_capacity(steps.len());
    for idx in 0..steps.len() {
        let mut vals: Vec<f64> = kept.iter().map(|r| r.curve[idx].median_steps).collect();
        vals.sort_by(f64::total_cmp);
        prc_25.push(nearest_rank(&vals, 25.0));
        prc_50.push(nearest_rank(&vals, 50.0));
        prc_75.push(nearest_rank(&vals, 75.0));
    }
    Ok(Aggregated { steps, prc_25, prc_50, prc_75, runs: kept })
}

/// First training step at which the aggregate median reaches the
/// threshold, if it ever does.
pub fn first_reach(agg: &Aggregated, threshold: f64) -> Option<u64> {
    agg.steps
        .iter()
        .zip(&agg.prc_50)
        .find(|(_, &median)| median <= threshold)
        .map(|(&step, _)| step)
}

const CSV_HEADER: &str = "steps,prc_25,prc_50,prc_75";

/// The aggregate as CSV: fixed header, integer steps, three-decimal
/// percentiles, LF line endings.
pub fn csv_string(agg: &Aggregated) -> String {
    let mut out = String::with_capacity(32 * (agg.steps.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for i in 0..agg.steps.len() {
        out.push_str(&format!(
            "{},{:.3},{:.3},{:.3}\n",
            agg.steps[i], agg.prc_25[i], agg.prc_50[i], agg.prc_75[i]
        ));
    }
    out
}

/// Writes the aggregate to a CSV file (UTF-8, LF).
pub fn emit_csv(agg: &Aggregated, path: &Path) -> Result<()> {
    fs::write(path, csv_string(agg))?;
    Ok(())
}

/// A percentile-band curve read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvCurve {
    pub steps: Vec<u64>,
    pub prc_25: Vec<f64>,
    pub prc_50: Vec<f64>,
    pub prc_75: Vec<f64>,
}

/// Parses a CSV file produced by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<CsvCurve> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<CsvCurve> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, line)) if line == CSV_HEADER => {}
        other => {
            return Err(Error::parse(
                1,
                format!("expected header '{CSV_HEADER}', got {:?}", other.map(|(_, l)| l)),
            ))
        }
    }
    let mut curve =
        CsvCurve { steps: Vec::new(), prc_25: Vec::new(), prc_50: Vec::new(), prc_75: Vec::new() };
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let step = fields[0]
            .parse::<u64>()
            .map_err(|e| Error::parse(lineno, format!("bad step '{}': {e}", fields[0])))?;
        let mut vals = [0.0f64; 3];
        for (k, f) in fields[1..].iter().enumerate() {
            vals[k] = f
                .parse::<f64>()
                .map_err(|e| Error::parse(lineno, format!("bad value '{f}': {e}")))?;
        }
        curve.steps.push(step);
        curve.prc_25.push(vals[0]);
        curve.prc_50.push(vals[1]);
        curve.prc_75.push(vals[2]);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point(step: u64, median: f64) -> EvalPoint {
        EvalPoint { step, median_steps: median }
    }

    fn run(seed: u64, curve: Vec<EvalPoint>) -> RunMetrics {
        RunMetrics { seed, curve, team_success: 0.0, agent_success: vec![] }
    }

    /// Independent nearest-rank definition: the smallest sample value with
    /// at least `ceil(pct/100 * n)` values at or below it.
    fn counting_percentile(sorted: &[f64], pct: f64) -> f64 {
        let need = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
        for &v in sorted {
            let at_or_below = sorted.iter().filter(|&&x| x <= v).count();
            if at_or_below >= need {
                return v;
            }
        }
        *sorted.last().unwrap()
    }

    #[test]
    fn nearest_rank_matches_the_counting_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let n = rng.gen_range(1..30);
            let mut vals: Vec<f64> =
                (0..n).map(|_| (rng.gen_range(0..50) as f64) / 2.0).collect();
            vals.sort_by(f64::total_cmp);
            for &pct in &[25.0, 50.0, 75.0, 100.0, 1.0] {
                assert_eq!(
                    nearest_rank(&vals, pct),
                    counting_percentile(&vals, pct),
                    "pct {pct} on {vals:?}"
                );
            }
        }
    }

    #[test]
    fn single_run_bands_collapse_onto_the_run() {
        let agg = aggregate(vec![run(1, vec![point(10, 5.0), point(20, 3.0)])]).unwrap();
        assert_eq!(agg.steps, vec![10, 20]);
        assert_eq!(agg.prc_25, vec![5.0, 3.0]);
        assert_eq!(agg.prc_50, vec![5.0, 3.0]);
        assert_eq!(agg.prc_75, vec![5.0, 3.0]);
    }

    #[test]
    fn partial_runs_are_discarded() {
        let agg = aggregate(vec![
            run(1, vec![point(10, 4.0), point(20, 2.0)]),
            run(2, vec![point(10, 8.0)]), // partial: lost its second point
            run(3, vec![point(10, 6.0), point(20, 4.0)]),
        ])
        .unwrap();
        assert_eq!(agg.runs.len(), 2);
        // Nearest-rank median of two survivors picks the lower value.
        assert_eq!(agg.prc_50, vec![4.0, 2.0]);
    }

    #[test]
    fn disagreeing_axes_are_rejected() {
        let res = aggregate(vec![
            run(1, vec![point(10, 4.0), point(20, 2.0)]),
            run(2, vec![point(10, 8.0), point(30, 2.0)]),
        ]);
        assert!(res.is_err());
        assert!(aggregate(vec![]).is_err());
    }

    #[test]
    fn first_reach_scans_the_median_band() {
        let agg = aggregate(vec![run(
            1,
            vec![point(10, 500.0), point(20, 150.0), point(30, 90.0)],
        )])
        .unwrap();
        assert_eq!(first_reach(&agg, 200.0), Some(20));
        assert_eq!(first_reach(&agg, 50.0), None);
    }

    #[test]
    fn csv_output_is_exactly_specified() {
        let agg = aggregate(vec![run(7, vec![point(1000, 12.5), point(2000, 1000.0)])]).unwrap();
        assert_eq!(
            csv_string(&agg),
            "steps,prc_25,prc_50,prc_75\n\
             1000,12.500,12.500,12.500\n\
             2000,1000.000,1000.000,1000.000\n"
        );
    }

    #[test]
    fn csv_round_trips_through_a_file() {
        let agg = aggregate(vec![
            run(1, vec![point(500, 20.25), point(1000, 18.5)]),
            run(2, vec![point(500, 42.75), point(1000, 12.0)]),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        emit_csv(&agg, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.steps, agg.steps);
        assert_eq!(back.prc_25, agg.prc_25);
        assert_eq!(back.prc_50, agg.prc_50);
        assert_eq!(back.prc_75, agg.prc_75);
    }

    #[test]
    fn csv_parser_rejects_malformed_input() {
        assert!(parse_csv("wrong,header\n1,2,3,4\n").is_err());
        assert!(parse_csv("steps,prc_25,prc_50,prc_75\n1,2,3\n").is_err());
        assert!(parse_csv("steps,prc_25,prc_50,prc_75\nx,2,3,4\n").is_err());
    }

    #[test]
    fn mode_parsing_round_trips() {
        for mode in Mode::ALL {
            assert_eq!(Mode::parse(mode.name()).unwrap(), mode);
        }
        assert!(Mode::parse("sideways").is_err());
    }

    fn handshake_task_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, content: &str| {
            std::fs::write(dir.path().join(name), content).unwrap();
        };
        write("team.rm", "alphabet: K\nstates: a b\ninitial: a\nterminal: b\na -K-> b\n");
        write(
            "a1.layout",
            "#####\n#1.k#\n#####\nlegend:\n1 = start 1\nk = trigger K on stay\n",
        );
        write(
            "a2.layout",
            "#####\n#2.k#\n#####\nlegend:\n2 = start 2\nk = trigger K on stay\n",
        );
        write(
            "task.toml",
            "kind = \"generator\"\nrm = \"team.rm\"\np_sync = 0.5\n\n\
             [[agents]]\nalphabet = [\"K\"]\nlayout = \"a1.layout\"\n\n\
             [[agents]]\nalphabet = [\"K\"]\nlayout = \"a2.layout\"\n",
        );
        dir
    }

    fn tiny_experiment(dir: &Path, seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            task: dir.join("task.toml"),
            mode: Mode::DecNoTlcd,
            seeds,
            train: TrainConfig {
                num_episodes: 4,
                num_steps: 50,
                eval_every: 50,
                eval_trials: 3,
                post_eval_episodes: 5,
                ..TrainConfig::default()
            },
            p_sync_override: None,
        }
    }

    #[test]
    fn experiments_are_deterministic_and_worker_independent() {
        let dir = handshake_task_dir();
        let cfg = tiny_experiment(dir.path(), vec![3, 4, 5]);

        let baseline = csv_string(&run_experiment(&cfg).unwrap());
        let again = csv_string(&run_experiment(&cfg).unwrap());
        assert_eq!(baseline, again);

        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| run_experiment(&cfg)).unwrap();
        assert_eq!(baseline, csv_string(&serial));

        let agg = run_experiment(&cfg).unwrap();
        assert_eq!(agg.runs.len(), 3);
        assert_eq!(agg.steps, vec![50, 100, 150, 200]);
    }

    #[test]
    fn tlcd_modes_require_diagrams() {
        let dir = handshake_task_dir();
        let mut cfg = tiny_experiment(dir.path(), vec![1]);
        cfg.mode = Mode::DecTlcd;
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("causal diagram"), "unexpected error: {err}");

        cfg.mode = Mode::CentTlcd;
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("causal diagram"), "unexpected error: {err}");
    }
}
