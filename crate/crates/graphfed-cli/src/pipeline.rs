//! Pipeline stages behind the subcommands. Every stage reads the same
//! config and writes deterministic artifacts into the output directory.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use graphfed::graph::{
    generate_sbm, load_graph, load_partition, make_nonoverlapping, make_overlapping,
    partition_louvain, DatasetStats, Graph, SubgraphSpec,
};
use graphfed::preprocess::{laplacian_pe, ppr_matrix, write_matrix};
use graphfed::runtime::{train, Federation, History, SummaryReport};
use graphfed::theory::{blob_instance, bound_check, lemma_residual, random_balanced_instance};

use crate::config::{DatasetSpec, ExperimentConfig, PartitionRegime};

const SBM_STREAM: u64 = 0xB0;
const PARTITION_STREAM: u64 = 0xB1;

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Graph> {
    match &cfg.dataset {
        DatasetSpec::Sbm(s) => Ok(generate_sbm(
            &s.blocks,
            s.p_in,
            s.p_out,
            s.feature_dim,
            s.feature_shift,
            graphfed::seed::derive(cfg.seed, &[SBM_STREAM]),
        )?),
        DatasetSpec::Csv(c) => Ok(load_graph(&c.nodes, &c.edges)?),
    }
}

pub fn build_clients(cfg: &ExperimentConfig, g: &Graph) -> Result<Vec<SubgraphSpec>> {
    let seed = graphfed::seed::derive(cfg.seed, &[PARTITION_STREAM]);
    if let DatasetSpec::Csv(c) = &cfg.dataset {
        if let Some(path) = &c.partition {
            let assignment = load_partition(g, path)?;
            return Ok(make_nonoverlapping(g, &assignment)?);
        }
    }
    match cfg.partition.regime {
        PartitionRegime::Nonoverlapping => {
            let p = partition_louvain(g, cfg.partition.clients, seed)?;
            Ok(make_nonoverlapping(g, p.assignment())?)
        }
        PartitionRegime::Overlapping => Ok(make_overlapping(
            g,
            cfg.partition.clients,
            cfg.partition.samples_per_part,
            cfg.partition.sample_frac,
            seed,
        )?),
    }
}

fn ensure_out_dir(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_matrix_csv(path: &Path, m: &ndarray::Array2<f64>) -> Result<()> {
    let mut text = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn cmd_partition(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let g = load_dataset(cfg)?;
    let subs = build_clients(cfg, &g)?;
    let stats = DatasetStats::compute(&g, &subs)?;

    let overlapping = matches!(cfg.partition.regime, PartitionRegime::Overlapping);
    if overlapping {
        let mut text = String::from("client,id\n");
        for s in &subs {
            for &node in s.node_list() {
                text.push_str(&format!("{},{}\n", s.client_id(), g.node_ids()[node]));
            }
        }
        fs::write(cfg.out_dir.join("membership.csv"), text)?;
    } else {
        let mut text = String::from("id,client\n");
        for s in &subs {
            for &node in s.node_list() {
                text.push_str(&format!("{},{}\n", g.node_ids()[node], s.client_id()));
            }
        }
        fs::write(cfg.out_dir.join("partition.csv"), text)?;
    }
    write_json(&cfg.out_dir.join("stats.json"), &stats)?;
    println!(
        "partitioned {} nodes into {} clients (missing links: {}, heterogeneity: {:.4})",
        g.n(),
        subs.len(),
        stats.missing_links,
        stats.heterogeneity
    );
    Ok(())
}

pub fn cmd_preprocess(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let g = load_dataset(cfg)?;
    let subs = build_clients(cfg, &g)?;
    for s in &subs {
        let ppr = ppr_matrix(s, cfg.nu, cfg.ppr_method, cfg.ppr_tol)?;
        let pe = laplacian_pe(s, cfg.pe_dim)?;
        let i = s.client_id();
        write_matrix(&cfg.out_dir.join(format!("client_{i}_ppr.mat")), ppr.matrix())?;
        write_matrix(&cfg.out_dir.join(format!("client_{i}_pe.mat")), pe.matrix())?;
        println!(
            "client {i}: {} nodes, ppr {:?}, pe {:?}",
            s.n_nodes(),
            ppr.matrix().dim(),
            pe.matrix().dim()
        );
    }
    Ok(())
}

pub fn run_training(cfg: &ExperimentConfig) -> Result<(Federation, DatasetStats)> {
    let g = load_dataset(cfg)?;
    let subs = build_clients(cfg, &g)?;
    let stats = DatasetStats::compute(&g, &subs)?;
    let rc = cfg.to_run_config(g.feature_dim(), g.num_classes());
    let fed = train(&g, &subs, &rc)?;
    Ok((fed, stats))
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out_dir(cfg)?;
    let (fed, stats) = run_training(cfg)?;
    fed.history.write_csv(&cfg.out_dir.join("history.csv"))?;
    let summary = SummaryReport {
        avg_test_acc_at_best_val: fed.history.avg_test_acc_at_best_val()?,
        epsilon: fed.cfg.epsilon(),
        missing_links: stats.missing_links,
        heterogeneity: stats.heterogeneity,
    };
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    if cfg.dump_similarity {
        for (round, s) in &fed.similarities {
            write_matrix_csv(&cfg.out_dir.join(format!("similarity_round_{round:04}.csv")), s)?;
        }
        for (round, a) in &fed.alphas {
            write_matrix_csv(&cfg.out_dir.join(format!("alpha_round_{round:04}.csv")), a)?;
        }
    }
    println!(
        "trained {} rounds x {} clients; avg test acc at best val: {:.4}",
        fed.rounds_done(),
        fed.num_clients(),
        summary.avg_test_acc_at_best_val
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct TheoryReport {
    pub residual_max: f64,
    pub trials: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub sigma: f64,
    pub c_hat: f64,
}

pub fn run_theory(seed: u64) -> Result<TheoryReport> {
    let trials = 100;
    let mut residual_max = 0.0f64;
    for t in 0..trials {
        let n_g = [2, 4, 8][t % 3];
        let inst = random_balanced_instance(32, 8, 8, n_g, 8, seed.wrapping_add(t as u64))?;
        residual_max = residual_max.max(lemma_residual(&inst)?);
    }
    let inst = blob_instance(32, 8, 8, 4, 8, 5.0, 0.3, seed)?;
    let report = bound_check(&inst, seed)?;
    Ok(TheoryReport {
        residual_max,
        trials,
        lhs: report.lhs,
        rhs: report.rhs,
        sigma: report.sigma,
        c_hat: report.c_hat,
    })
}

pub fn cmd_theory(seed: u64, out: Option<&Path>) -> Result<()> {
    let report = run_theory(seed)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("theory.json"), &text)?;
    }
    print!("{text}");
    Ok(())
}

/// Rebuilds the summary and plot-ready per-round curves from artifacts
/// written by earlier stages.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<()> {
    let history_path = cfg.out_dir.join("history.csv");
    let stats_path = cfg.out_dir.join("stats.json");
    let history = History::read_csv(&history_path)
        .with_context(|| format!("reading {}", history_path.display()))?;
    let stats: DatasetStats = serde_json::from_str(
        &fs::read_to_string(&stats_path)
            .with_context(|| format!("reading {}", stats_path.display()))?,
    )?;
    let rc = cfg.to_run_config(1, 2);
    let summary = SummaryReport {
        avg_test_acc_at_best_val: history.avg_test_acc_at_best_val()?,
        epsilon: rc.epsilon(),
        missing_links: stats.missing_links,
        heterogeneity: stats.heterogeneity,
    };
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;

    let mut rounds: Vec<usize> = history.records.iter().map(|r| r.round).collect();
    rounds.sort_unstable();
    rounds.dedup();
    let mut text = String::from("round,train_loss,val_acc,test_acc\n");
    for r in rounds {
        let rows: Vec<_> = history.records.iter().filter(|rec| rec.round == r).collect();
        if rows.is_empty() {
            return Err(anyhow!("round {r} vanished while grouping"));
        }
        let n = rows.len() as f64;
        let loss: f64 = rows.iter().map(|rec| rec.train_loss).sum::<f64>() / n;
        let val: f64 = rows.iter().map(|rec| rec.val_acc).sum::<f64>() / n;
        let test: f64 = rows.iter().map(|rec| rec.test_acc).sum::<f64>() / n;
        text.push_str(&format!("{r},{loss},{val},{test}\n"));
    }
    fs::write(cfg.out_dir.join("curves.csv"), text)?;
    println!(
        "report written: {} and {}",
        cfg.out_dir.join("summary.json").display(),
        cfg.out_dir.join("curves.csv").display()
    );
    Ok(())
}
