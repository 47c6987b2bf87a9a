//! CSV emission for training logs and across-seed aggregates.
//!
//! Floats are rendered with Rust's shortest-roundtrip `Display`, so the
//! files are bit-exact functions of the numeric values; `None` fields
//! render as empty strings.

use std::fmt::Write as _;

use spil_core::trainer::TrainLog;

/// Per-run log header, one column per [`spil_core::trainer::LogRow`] field.
pub const LOG_HEADER: &str =
    "iteration,p_s,J,delta,integral,lambda,critic_loss,grad_J_norm,grad_P_norm,eval_p_s,eval_return";

/// Aggregate header: across-seed mean and min/max envelope of p_s and J.
pub const AGGREGATE_HEADER: &str =
    "iteration,p_s_mean,p_s_min,p_s_max,J_mean,J_min,J_max";

fn push_opt(out: &mut String, v: Option<f64>) {
    match v {
        Some(x) => {
            let _ = write!(out, ",{x}");
        }
        None => out.push(','),
    }
}

/// Render a full training log as CSV text.
pub fn log_to_csv(log: &TrainLog) -> String {
    let mut out = String::with_capacity(64 * (log.rows.len() + 1));
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in &log.rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.p_s,
            r.objective,
            r.delta,
            r.integrator,
            r.lambda,
            r.critic_loss,
            r.grad_j_norm,
            r.grad_p_norm
        );
        push_opt(&mut out, r.eval_p_s);
        push_opt(&mut out, r.eval_return);
        out.push('\n');
    }
    out
}

/// Render the across-seed aggregate for one (method, threshold) cell group.
///
/// Logs are truncated to the shortest run so every aggregate row averages
/// the same seed set; means are accumulated in the given (seed) order.
pub fn aggregate_to_csv(logs: &[&TrainLog]) -> String {
    let mut out = String::new();
    out.push_str(AGGREGATE_HEADER);
    out.push('\n');
    let Some(rows) = logs.iter().map(|l| l.rows.len()).min() else {
        return out;
    };
    let n = logs.len() as f64;
    for t in 0..rows {
        let mut p_sum = 0.0;
        let mut p_min = f64::INFINITY;
        let mut p_max = f64::NEG_INFINITY;
        let mut j_sum = 0.0;
        let mut j_min = f64::INFINITY;
        let mut j_max = f64::NEG_INFINITY;
        for log in logs {
            let r = &log.rows[t];
            p_sum += r.p_s;
            p_min = p_min.min(r.p_s);
            p_max = p_max.max(r.p_s);
            j_sum += r.objective;
            j_min = j_min.min(r.objective);
            j_max = j_max.max(r.objective);
        }
        let _ = writeln!(
            out,
            "{t},{},{p_min},{p_max},{},{j_min},{j_max}",
            p_sum / n,
            j_sum / n
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use spil_core::trainer::LogRow;

    fn row(it: usize, p_s: f64, j: f64) -> LogRow {
        LogRow {
            iteration: it,
            p_s,
            objective: j,
            delta: 0.1,
            integrator: 0.0,
            lambda: 0.5,
            critic_loss: 1.25,
            grad_j_norm: 2.0,
            grad_p_norm: 3.0,
            eval_p_s: None,
            eval_return: Some(j + 1.0),
        }
    }

    #[test]
    fn log_csv_layout() {
        let log = TrainLog { rows: vec![row(0, 0.5, -1.5)] };
        let csv = log_to_csv(&log);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(LOG_HEADER));
        assert_eq!(lines.next(), Some("0,0.5,-1.5,0.1,0,0.5,1.25,2,3,,-0.5"));
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn shortest_roundtrip_rendering() {
        let mut r = row(3, 0.1, 0.0);
        r.p_s = 0.1 + 0.2; // 0.30000000000000004
        let csv = log_to_csv(&TrainLog { rows: vec![r] });
        assert!(csv.contains("0.30000000000000004"));
        let rendered: f64 = "0.30000000000000004".parse().unwrap();
        assert_eq!(rendered.to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn aggregate_is_exact_mean_and_envelope() {
        let a = TrainLog { rows: vec![row(0, 0.2, 1.0), row(1, 0.4, 2.0)] };
        let b = TrainLog { rows: vec![row(0, 0.6, 3.0)] }; // shorter run truncates
        let csv = aggregate_to_csv(&[&a, &b]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(AGGREGATE_HEADER));
        let r0 = lines.next().unwrap();
        assert_eq!(r0, format!("0,{},0.2,0.6,{},1,3", (0.2 + 0.6) / 2.0, (1.0 + 3.0) / 2.0));
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn aggregate_of_empty_set_is_header_only() {
        assert_eq!(aggregate_to_csv(&[]), format!("{AGGREGATE_HEADER}\n"));
    }
}
