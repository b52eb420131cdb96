//! `tumorbed mine`: negative-patch selection from a feature file.

use tumorbed::formats::{self, decode_feature_file, render_plan};
use tumorbed::mining::{
    minibatch_kmeans, random_sample, sample_per_cluster, KMeansParams, SamplePlan,
    SamplingStrategy,
};

use crate::config::{write_resolved, InputsSection, MiningSection, RunConfig};
use crate::{CliError, MineArgs};

pub fn run(args: MineArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load_opt(args.config.as_deref())?;

    let features_path = args
        .features
        .clone()
        .or(cfg.inputs.features.clone())
        .ok_or_else(|| CliError::config("mine needs --features FILE"))?;
    let strategy_str = args
        .strategy
        .clone()
        .or(cfg.mining.strategy.clone())
        .unwrap_or_else(|| "kmeans".to_string());
    let strategy = match strategy_str.as_str() {
        "kmeans" => SamplingStrategy::KMeans,
        "random" => SamplingStrategy::Random,
        "none" => SamplingStrategy::None,
        other => {
            return Err(CliError::config(format!(
                "unknown strategy `{other}` (kmeans, random, none)"
            )))
        }
    };
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let k = args.k.or(cfg.mining.k).unwrap_or(3000);
    let m = args.m.or(cfg.mining.m).unwrap_or(7);
    let batch_size = args.batch_size.or(cfg.mining.batch_size).unwrap_or(256);
    let max_iters = args.max_iters.or(cfg.mining.max_iters).unwrap_or(100);
    let m_total = args.m_total.or(cfg.mining.m_total).unwrap_or(21_000);

    let out_dir = args
        .out
        .clone()
        .or(cfg.out_dir.clone())
        .ok_or_else(|| CliError::config("mine needs --out DIR"))?;
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::input(e.to_string()))?;

    let bytes = std::fs::read(&features_path)
        .map_err(|e| CliError::input(format!("{}: {e}", features_path.display())))?;
    let features = decode_feature_file(&bytes)
        .map_err(|e| CliError::input(format!("{}: {e}", features_path.display())))?;

    let plan = match strategy {
        SamplingStrategy::KMeans => {
            let model = minibatch_kmeans(
                &features,
                &KMeansParams {
                    k,
                    batch_size,
                    max_iters,
                    seed,
                    tol_rel: 1e-4,
                },
            )
            .map_err(CliError::from)?;
            sample_per_cluster(&model, &features, m).map_err(CliError::from)?
        }
        SamplingStrategy::Random => {
            random_sample(features.ids(), m_total, seed).map_err(CliError::from)?
        }
        SamplingStrategy::None => SamplePlan {
            strategy: SamplingStrategy::None,
            seed,
            selected: Vec::new(),
            multiplicities: None,
            loss_weights: None,
        },
    };

    let plan_path = out_dir.join("plan.txt");
    formats::atomic_write(&plan_path, render_plan(&plan).as_bytes())?;

    let resolved = RunConfig {
        command: Some("mine".into()),
        seed: Some(seed),
        out_dir: Some(out_dir.clone()),
        mining: MiningSection {
            strategy: Some(strategy_str),
            k: Some(k),
            m: Some(m),
            batch_size: Some(batch_size),
            max_iters: Some(max_iters),
            m_total: Some(m_total),
        },
        inputs: InputsSection {
            features: Some(features_path),
            ..InputsSection::default()
        },
        ..RunConfig::default()
    };
    write_resolved(&out_dir, &resolved)?;
    println!(
        "selected {} patches ({}) -> {}",
        plan.selected.len(),
        plan.strategy,
        plan_path.display()
    );
    Ok(())
}
