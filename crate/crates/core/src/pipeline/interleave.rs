use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use super::{
    create_dir, fmt_opt, load_config, verify_input, write_csv, write_text, write_with,
    PipelineError, Result, RunManifest,
};
use crate::attribution::{attribute_all, leakage_guard};
use crate::interleaving::{
    assign_credit, verify_team_draft, winner_stats, write_sessions, CreditOptions, CreditPolicy,
};
use crate::journey::{JourneyStore, StoreConfig};
use crate::learner::SurrogateModel;
use crate::sim::{simulate_interleaving, Ranker};

#[derive(Debug, Clone)]
pub struct InterleaveArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Required by the utility policy.
    pub model: Option<PathBuf>,
    pub ranker_a: Ranker,
    pub ranker_b: Ranker,
    pub queries: usize,
    pub policies: Vec<CreditPolicy>,
    pub all_views: bool,
    pub allow_overlap: bool,
    pub out: PathBuf,
    pub force: bool,
}

/// Parses `"alpha,beta"`.
pub fn parse_ranker(s: &str) -> std::result::Result<Ranker, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        return Err(format!("ranker must be \"alpha,beta\", got {s:?}"));
    };
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("ranker {s:?}: {e}"));
    let (alpha, beta) = (num(a)?, num(b)?);
    if !(alpha.is_finite() && beta.is_finite()) {
        return Err(format!("ranker {s:?}: values must be finite"));
    }
    Ok(Ranker { alpha, beta })
}

/// Interleaves two rankers on simulated queries and credits each query under every policy.
pub fn interleave(args: &InterleaveArgs) -> Result<RunManifest> {
    if args.queries == 0 {
        return Err(PipelineError::Config("queries must be >= 1".into()));
    }
    if args.policies.is_empty() {
        return Err(PipelineError::Config(
            "at least one policy is required".into(),
        ));
    }
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    cfg.validate()?;
    let mut manifest = RunManifest::new("interleave", Some(cfg.seed));
    if let Some(p) = &args.config {
        manifest.config_file(p)?;
    }
    let wants_utility = args.policies.contains(&CreditPolicy::UtilityDelta);
    let model = match (&args.model, wants_utility) {
        (Some(p), _) => {
            verify_input(p, args.force)?;
            manifest.input(p)?;
            let text = std::fs::read_to_string(p).map_err(PipelineError::io(p))?;
            Some(
                SurrogateModel::from_json(&text)
                    .map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))?,
            )
        }
        (None, true) => {
            return Err(PipelineError::Config(
                "the utility_delta policy needs --model".into(),
            ))
        }
        (None, false) => None,
    };

    let run = simulate_interleaving(&cfg, args.ranker_a, args.ranker_b, args.queries)?;
    let mut violations = Vec::new();
    for (s, (a, b)) in run.sessions.iter().zip(&run.rankings) {
        if let Err(e) = verify_team_draft(a, b, cfg.display_k, &s.interleaved) {
            violations.push(format!("{}: {e}", s.query_id));
        }
    }
    let utilities: Option<HashMap<String, f64>> = match &model {
        Some(m) if wants_utility => {
            let store = JourneyStore::ingest(
                run.events.iter().cloned(),
                run.outcomes.iter().cloned(),
                run.listings.iter().cloned(),
                StoreConfig::default(),
            );
            leakage_guard(m, &store, args.allow_overlap)?;
            Some(
                attribute_all(m, &store)?
                    .into_iter()
                    .map(|r| (r.event_id, r.utility))
                    .collect(),
            )
        }
        _ => None,
    };
    let options = CreditOptions {
        utility_all_views: args.all_views,
    };
    let mut ledger = Vec::new();
    for s in &run.sessions {
        for &p in &args.policies {
            ledger.push(assign_credit(s, p, utilities.as_ref(), options)?);
        }
    }
    let reports = winner_stats(&ledger);

    create_dir(&args.out)?;
    write_with(&args.out, "sessions.jsonl", |w| {
        write_sessions(w, &run.sessions)
    })?;
    let rows: Vec<Vec<String>> = ledger
        .iter()
        .map(|e| {
            vec![
                e.query_id.clone(),
                e.policy.as_str().to_string(),
                e.credit_a.to_string(),
                e.credit_b.to_string(),
                e.ignored_events.to_string(),
            ]
        })
        .collect();
    write_csv(
        &args.out,
        "ledger.csv",
        &[
            "query_id",
            "policy",
            "credit_a",
            "credit_b",
            "ignored_events",
        ],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.policy.as_str().to_string(),
                r.n_queries.to_string(),
                r.wins_a.to_string(),
                r.wins_b.to_string(),
                r.ties.to_string(),
                fmt_opt(r.win_rate_a),
                fmt_opt(r.sign_test_p),
                r.mean_diff.to_string(),
                r.diff_ci95.0.to_string(),
                r.diff_ci95.1.to_string(),
            ]
        })
        .collect();
    write_csv(
        &args.out,
        "winners.csv",
        &[
            "policy",
            "n_queries",
            "wins_a",
            "wins_b",
            "ties",
            "win_rate_a",
            "sign_test_p",
            "mean_diff",
            "diff_ci_low",
            "diff_ci_high",
        ],
        &rows,
    )?;
    let mut text = format!(
        "ranker A: alpha={} beta={}\nranker B: alpha={} beta={}\nqueries: {}\nlegality violations: {}\n",
        args.ranker_a.alpha,
        args.ranker_a.beta,
        args.ranker_b.alpha,
        args.ranker_b.beta,
        args.queries,
        violations.len()
    );
    for r in &reports {
        let verdict = match r.win_rate_a {
            None => "no decided queries".to_string(),
            Some(w) if r.sign_test_p.is_some_and(|p| p < 0.05) => {
                format!(
                    "{} wins (win rate A = {w:.4})",
                    if w > 0.5 { "A" } else { "B" }
                )
            }
            Some(w) => format!("no significant winner (win rate A = {w:.4})"),
        };
        let _ = write!(
            text,
            "\n[{}]\nqueries: {}\nwins A: {}\nwins B: {}\nties: {}\nsign test p: {}\nmean credit A - B: {} (95% CI {} to {})\nverdict: {}\n",
            r.policy.as_str(),
            r.n_queries,
            r.wins_a,
            r.wins_b,
            r.ties,
            fmt_opt(r.sign_test_p),
            r.mean_diff,
            r.diff_ci95.0,
            r.diff_ci95.1,
            verdict
        );
    }
    write_text(&args.out, "winner_report.txt", &text)?;

    manifest.param(
        "ranker_a",
        format!("{},{}", args.ranker_a.alpha, args.ranker_a.beta),
    );
    manifest.param(
        "ranker_b",
        format!("{},{}", args.ranker_b.alpha, args.ranker_b.beta),
    );
    manifest.param("queries", args.queries);
    manifest.param(
        "policies",
        args.policies
            .iter()
            .map(|p| p.as_str())
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.param("all_views", args.all_views);
    manifest.param("legality_violations", violations.len());
    let outputs = [
        "sessions.jsonl",
        "ledger.csv",
        "winners.csv",
        "winner_report.txt",
    ]
    .map(String::from);
    let manifest = manifest.finish(&args.out, &outputs)?;
    if !violations.is_empty() {
        return Err(PipelineError::Validation(format!(
            "{} illegal interleavings; first: {}",
            violations.len(),
            violations[0]
        )));
    }
    Ok(manifest)
}
