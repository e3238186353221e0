use std::fmt::Write as _;

use super::{MetricReport, VolumeStats, METRIC_NAMES};

/// Tab-delimited table, one row per case: the five measures, their five
/// scores, and the total score. A final `Average` row is appended when there
/// is more than one case.
pub fn format_report_table(rows: &[(String, MetricReport)]) -> String {
    let mut s = String::from("case");
    for n in METRIC_NAMES {
        write!(s, "\t{n}").unwrap();
    }
    for n in METRIC_NAMES {
        write!(s, "\t{n}_score").unwrap();
    }
    s.push_str("\ttotal\n");
    let line = |s: &mut String, name: &str, v: [f64; 5], sc: [f64; 5], total: f64| {
        s.push_str(name);
        for x in v {
            write!(s, "\t{x:.3}").unwrap();
        }
        for x in sc {
            write!(s, "\t{x:.2}").unwrap();
        }
        writeln!(s, "\t{total:.2}").unwrap();
    };
    for (name, r) in rows {
        line(&mut s, name, r.values(), r.scores, r.total);
    }
    if rows.len() > 1 {
        let n = rows.len() as f64;
        let mut v = [0.0; 5];
        let mut sc = [0.0; 5];
        for (_, r) in rows {
            for k in 0..5 {
                v[k] += r.values()[k] / n;
                sc[k] += r.scores[k] / n;
            }
        }
        let total = rows.iter().map(|(_, r)| r.total).sum::<f64>() / n;
        line(&mut s, "Average", v, sc, total);
    }
    s
}

pub fn format_stats_block(stats: &VolumeStats) -> String {
    let mut s = String::from("# volume statistics (mL)\n");
    writeln!(s, "cases\t{}", stats.pairs.len()).unwrap();
    writeln!(s, "slope\t{:.4}", stats.slope).unwrap();
    writeln!(s, "intercept\t{:.4}", stats.intercept).unwrap();
    writeln!(s, "R\t{:.4}", stats.r).unwrap();
    writeln!(s, "mean_difference\t{:.4}", stats.mean_difference).unwrap();
    writeln!(
        s,
        "limits_of_agreement\t{:.4}\t{:.4}",
        stats.limits_of_agreement.0, stats.limits_of_agreement.1
    )
    .unwrap();
    writeln!(s, "CV_percent\t{:.4}", stats.cv_percent).unwrap();
    s
}
