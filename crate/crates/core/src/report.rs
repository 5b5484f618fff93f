//! CSV and JSON reports, written atomically.
//!
//! Every CSV starts with a `# config_sha256=... seed=...` line followed by the fixed
//! header. Replica studies append `n_replicas,overlap_id,gap,ratio`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::ensemble::{AssumptionReport, ConcentrationReport, SizePointReport, SweepReport, TheoremReport};
use crate::error::{LabError, Result};
use crate::replica::{ProbeReport, RsbReport};
use crate::stats::Estimate;

pub const HEADER: &str = "study,N,lambda,beta,quantity,estimate,std_error,bound,seed";
pub const REPLICA_HEADER: &str = "n_replicas,overlap_id,gap,ratio";

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaColumns {
    pub n_replicas: usize,
    pub overlap_id: String,
    pub gap: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub study: &'static str,
    pub n: Option<usize>,
    pub lambda: Option<f64>,
    pub beta: f64,
    pub quantity: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub bound: Option<f64>,
    pub seed: u64,
    pub replica: Option<ReplicaColumns>,
}

/// Common fields of the rows of one study.
#[derive(Clone, Copy, Debug)]
pub struct RowContext {
    pub study: &'static str,
    pub beta: f64,
    pub seed: u64,
}

impl RowContext {
    fn row(&self, n: Option<usize>, lambda: Option<f64>, quantity: &str, estimate: f64) -> Row {
        Row {
            study: self.study,
            n,
            lambda,
            beta: self.beta,
            quantity: quantity.into(),
            estimate,
            std_error: None,
            bound: None,
            seed: self.seed,
            replica: None,
        }
    }

    fn est(&self, n: Option<usize>, lambda: Option<f64>, quantity: &str, e: Estimate) -> Row {
        Row {
            std_error: Some(e.se),
            ..self.row(n, lambda, quantity, e.value)
        }
    }
}

fn num(x: f64) -> String {
    // shortest round-trip representation; identical bits give identical text
    format!("{x}")
}

fn opt<T: std::fmt::Display>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn render_csv(rows: &[Row], config_sha256: &str, seed: u64) -> String {
    let replica = rows.iter().any(|r| r.replica.is_some());
    let mut out = format!("# config_sha256={config_sha256} seed={seed}\n{HEADER}");
    if replica {
        let _ = write!(out, ",{REPLICA_HEADER}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.study,
            opt(r.n),
            r.lambda.map(num).unwrap_or_default(),
            num(r.beta),
            r.quantity,
            num(r.estimate),
            r.std_error.map(num).unwrap_or_default(),
            r.bound.map(num).unwrap_or_default(),
            r.seed
        );
        if replica {
            match &r.replica {
                Some(c) => {
                    let _ = write!(
                        out,
                        ",{},{},{},{}",
                        c.n_replicas,
                        c.overlap_id,
                        c.gap.map(num).unwrap_or_default(),
                        c.ratio.map(num).unwrap_or_default()
                    );
                }
                None => out.push_str(",,,,"),
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `contents` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io = |source| LabError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    study: &'a str,
    config_sha256: &'a str,
    seed: u64,
    pass: bool,
    report: &'a T,
}

pub fn render_json<T: Serialize>(study: &str, config_sha256: &str, seed: u64, pass: bool, report: &T) -> String {
    let summary = Summary {
        study,
        config_sha256,
        seed,
        pass,
        report,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("reports serialize");
    text.push('\n');
    text
}

fn size_point_rows(ctx: &RowContext, p: &SizePointReport, out: &mut Vec<Row>) {
    let (n, l) = (Some(p.n), Some(p.lambda));
    out.push(ctx.est(n, l, "psi_mean", p.mean_psi));
    out.push(Row {
        bound: Some(p.lemma1_bound),
        ..ctx.est(n, l, "psi_variance", p.var_psi)
    });
    out.push(ctx.row(n, l, "c_phi", p.c_phi));
    out.push(ctx.row(n, l, "sigma_squared", p.sigma_squared));
    out.push(ctx.est(n, l, "order_mean", p.order.mean));
    out.push(ctx.est(n, l, "order_variance_total", p.order.total));
    out.push(ctx.est(n, l, "order_variance_gibbs", p.order.gibbs));
    out.push(ctx.est(n, l, "order_variance_sample", p.order.sample));
    out.push(ctx.row(n, l, "samples_used", p.samples_used as f64));
}

pub fn concentration_rows(ctx: &RowContext, report: &ConcentrationReport) -> Vec<Row> {
    let mut rows = Vec::new();
    for p in &report.points {
        size_point_rows(ctx, p, &mut rows);
    }
    rows
}

pub fn theorem_rows(ctx: &RowContext, report: &TheoremReport) -> Vec<Row> {
    let mut rows = Vec::new();
    for p in &report.points {
        size_point_rows(ctx, p, &mut rows);
    }
    rows
}

pub fn assumption_rows(ctx: &RowContext, report: &AssumptionReport) -> Vec<Row> {
    let mut rows = Vec::new();
    for p in &report.points {
        let n = Some(p.n);
        rows.push(Row {
            std_error: Some(p.commutator_norm.se),
            ..ctx.row(n, None, "double_commutator_norm_mean", p.commutator_norm.mean)
        });
        rows.push(ctx.row(n, None, "double_commutator_norm_max", p.commutator_norm.max));
        rows.push(ctx.row(n, None, "double_commutator_norm_max_times_n", p.scaled_max));
        for (lambda, e) in &p.mean_psi {
            rows.push(ctx.est(n, Some(*lambda), "pressure", *e));
        }
    }
    for inc in &report.increments {
        rows.push(ctx.row(Some(inc.n_to), Some(inc.lambda), "pressure_increment", inc.increment));
    }
    rows
}

pub fn sweep_rows(ctx: &RowContext, report: &SweepReport) -> Vec<Row> {
    let mut rows = Vec::new();
    for p in &report.points {
        let (n, l) = (Some(p.n), Some(p.lambda));
        rows.push(ctx.est(n, l, "order_mean", p.mean_order));
        rows.push(ctx.est(n, l, "psi_mean", p.mean_psi));
        rows.push(ctx.est(n, l, "order_slope_fd", p.order_slope_fd));
        rows.push(ctx.est(n, l, "order_slope_duhamel", p.order_slope_duhamel));
        rows.push(ctx.est(n, l, "psi_slope_fd", p.psi_slope_fd));
        rows.push(ctx.row(n, l, "psi_slope_expected", p.psi_slope_expected));
        rows.push(Row {
            bound: Some(crate::ensemble::SWEEP_REL_TOL),
            ..ctx.row(n, l, "response_rel_err", p.response_rel_err)
        });
        rows.push(Row {
            bound: Some(crate::ensemble::SWEEP_REL_TOL),
            ..ctx.row(n, l, "psi_slope_rel_err", p.psi_rel_err)
        });
    }
    for s in &report.shapes {
        rows.push(ctx.row(Some(s.n), None, "psi_min_curvature", s.min_psi_curvature));
        rows.push(ctx.row(Some(s.n), None, "order_min_step", s.min_order_step));
    }
    for g in &report.gkt {
        rows.push(ctx.est(Some(g.n), Some(0.0), "root_second_moment", g.root_second_moment));
        rows.push(ctx.est(Some(g.n), Some(g.lambda), "order_mean_smallest_field", g.order));
    }
    rows
}

pub fn replica_rows(ctx: &RowContext, report: &RsbReport) -> Vec<Row> {
    let mut rows = Vec::new();
    for p in &report.points {
        let (n, l) = (Some(p.n), Some(p.lambda));
        let cols = |ratio: Option<f64>| ReplicaColumns {
            n_replicas: p.n_replicas,
            overlap_id: p.overlap_id.clone(),
            gap: None,
            ratio,
        };
        let d = &p.decomposition;
        for (name, e) in [
            ("rsb_mean", d.mean),
            ("rsb_variance_gibbs", d.gibbs),
            ("rsb_variance_sample", d.sample),
            ("rsb_variance_total", d.total),
        ] {
            rows.push(Row {
                replica: Some(cols(None)),
                ..ctx.est(n, l, name, e)
            });
        }
        rows.push(Row {
            bound: Some(4.0 * d.combined_se()),
            replica: Some(cols(None)),
            ..ctx.row(n, l, "additivity_defect", d.additivity_defect())
        });
        if let Some(r) = p.ratio {
            rows.push(Row {
                std_error: Some(r.se),
                replica: Some(cols(Some(r.value))),
                ..ctx.row(n, l, "gibbs_fraction", r.value)
            });
        }
        if let Some(defect) = p.swap_defect {
            rows.push(Row {
                bound: Some(crate::replica::SWAP_TOL),
                replica: Some(cols(None)),
                ..ctx.row(n, l, "swap_defect", defect)
            });
        }
    }
    rows
}

pub fn probe_rows(ctx: &RowContext, report: &ProbeReport) -> Vec<Row> {
    let cols = |gap: Option<f64>| ReplicaColumns {
        n_replicas: report.n_replicas,
        overlap_id: report.overlap_id.clone(),
        gap,
        ratio: None,
    };
    let mut rows = Vec::new();
    for s in &report.sizes {
        let n = Some(s.n);
        for (name, e, gap) in [
            ("rsb_mean_at_zero", s.at_zero, None),
            ("rsb_limit_left", s.left, Some(s.gap_left.value)),
            ("rsb_limit_right", s.right, Some(s.gap_right.value)),
            ("gap_left", s.gap_left, Some(s.gap_left.value)),
            ("gap_right", s.gap_right, Some(s.gap_right.value)),
        ] {
            rows.push(Row {
                replica: Some(cols(gap)),
                ..ctx.est(n, Some(0.0), name, e)
            });
        }
    }
    if let Some(o) = &report.orders {
        for (name, e) in [
            ("volume_first_left", o.volume_first_left),
            ("volume_first_right", o.volume_first_right),
            ("switch_off_first", o.switch_off_first),
        ] {
            rows.push(Row {
                replica: Some(cols(None)),
                ..ctx.est(None, Some(0.0), name, e)
            });
        }
    }
    rows
}
