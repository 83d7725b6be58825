//! Trial rows and the versioned CSV layout.

use std::fmt::Write as _;

use crate::config::Method;

pub const SCHEMA_LINE: &str = "#schema,rigid-refine-trials,1";
pub const NA: &str = "NA";

/// Numeric columns in output order (between `method` and `status`).
pub const NUMERIC_COLUMNS: [&str; 14] = [
    "iso_rot_deg",
    "aniso_z_deg",
    "aniso_y_deg",
    "aniso_x_deg",
    "trans_l1",
    "trans_l2",
    "chamfer",
    "mean_point_dist",
    "augmented_loss",
    "divergence",
    "max_col_distance",
    "max_col_angle_deg",
    "det_g_normalized",
    "fallback_count",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub method: Method,
    pub iso_rot_deg: Option<f64>,
    pub aniso_z_deg: Option<f64>,
    pub aniso_y_deg: Option<f64>,
    pub aniso_x_deg: Option<f64>,
    pub trans_l1: Option<f64>,
    pub trans_l2: Option<f64>,
    pub chamfer: Option<f64>,
    pub mean_point_dist: Option<f64>,
    pub augmented_loss: Option<f64>,
    pub divergence: Option<f64>,
    pub max_col_distance: Option<f64>,
    pub max_col_angle_deg: Option<f64>,
    pub det_g_normalized: Option<f64>,
    pub fallback_count: Option<usize>,
    /// `ok`, or the error that stopped the trial.
    pub status: String,
}

impl TrialRecord {
    pub fn empty(seed: u64, method: Method, status: String) -> Self {
        Self {
            seed,
            method,
            iso_rot_deg: None,
            aniso_z_deg: None,
            aniso_y_deg: None,
            aniso_x_deg: None,
            trans_l1: None,
            trans_l2: None,
            chamfer: None,
            mean_point_dist: None,
            augmented_loss: None,
            divergence: None,
            max_col_distance: None,
            max_col_angle_deg: None,
            det_g_normalized: None,
            fallback_count: None,
            status,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Values in [`NUMERIC_COLUMNS`] order.
    pub fn numeric(&self) -> [Option<f64>; 14] {
        [
            self.iso_rot_deg,
            self.aniso_z_deg,
            self.aniso_y_deg,
            self.aniso_x_deg,
            self.trans_l1,
            self.trans_l2,
            self.chamfer,
            self.mean_point_dist,
            self.augmented_loss,
            self.divergence,
            self.max_col_distance,
            self.max_col_angle_deg,
            self.det_g_normalized,
            self.fallback_count.map(|c| c as f64),
        ]
    }
}

/// Nine significant digits in scientific notation; `NA` for missing or non-finite values.
pub fn format_float(value: Option<f64>) -> String {
    match value {
        Some(v) if v.is_finite() => format!("{v:.8e}"),
        _ => NA.to_string(),
    }
}

pub fn header() -> String {
    let mut h = String::from("seed,method");
    for c in NUMERIC_COLUMNS {
        h.push(',');
        h.push_str(c);
    }
    h.push_str(",status");
    h
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn format_row(r: &TrialRecord) -> String {
    let mut line = format!("{},{}", r.seed, r.method);
    let values = r.numeric();
    for (i, v) in values.iter().enumerate() {
        line.push(',');
        if i == values.len() - 1 {
            line.push_str(&r.fallback_count.map_or(NA.to_string(), |c| c.to_string()));
        } else {
            line.push_str(&format_float(*v));
        }
    }
    line.push(',');
    line.push_str(&csv_field(&r.status));
    line
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub rmse: f64,
    pub mae: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

/// Statistics over the finite entries; `None` if there are none.
pub fn column_stats(values: impl IntoIterator<Item = Option<f64>>) -> Option<ColumnStats> {
    let xs: Vec<f64> = values.into_iter().flatten().filter(|v| v.is_finite()).collect();
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Some(ColumnStats {
        mean,
        rmse: (xs.iter().map(|x| x * x).sum::<f64>() / n).sqrt(),
        mae: xs.iter().map(|x| x.abs()).sum::<f64>() / n,
        std: (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt(),
        count: xs.len(),
    })
}

/// RMSE of each Euler axis, averaged over axes.
pub fn aniso_rmse_per_axis(records: &[TrialRecord]) -> Option<f64> {
    let per_axis: Option<Vec<f64>> = [
        |r: &TrialRecord| r.aniso_z_deg,
        |r: &TrialRecord| r.aniso_y_deg,
        |r: &TrialRecord| r.aniso_x_deg,
    ]
    .iter()
    .map(|f| column_stats(records.iter().map(f)).map(|s| s.rmse))
    .collect();
    per_axis.map(|v| v.iter().sum::<f64>() / 3.0)
}

/// RMSE over all Euler-axis errors pooled together.
pub fn aniso_rmse_pooled(records: &[TrialRecord]) -> Option<f64> {
    column_stats(
        records
            .iter()
            .flat_map(|r| [r.aniso_z_deg, r.aniso_y_deg, r.aniso_x_deg]),
    )
    .map(|s| s.rmse)
}

/// `#agg,<stat>,` rows aligned with the header's numeric columns.
pub fn aggregate_rows(records: &[TrialRecord]) -> Vec<String> {
    let stats: Vec<Option<ColumnStats>> = (0..NUMERIC_COLUMNS.len())
        .map(|i| column_stats(records.iter().map(|r| r.numeric()[i])))
        .collect();
    type StatAccessor = fn(&ColumnStats) -> f64;
    let pick: [(&str, StatAccessor); 4] = [
        ("mean", |s| s.mean),
        ("rmse", |s| s.rmse),
        ("mae", |s| s.mae),
        ("std", |s| s.std),
    ];
    let ok = records.iter().filter(|r| r.is_ok()).count();
    let mut rows: Vec<String> = pick
        .iter()
        .map(|(name, f)| {
            let mut line = format!("#agg,{name}");
            for s in &stats {
                line.push(',');
                line.push_str(&format_float(s.as_ref().map(f)));
            }
            let _ = write!(line, ",ok={ok}/{}", records.len());
            line
        })
        .collect();
    rows.push(format!("#agg,aniso_rmse_per_axis,{}", format_float(aniso_rmse_per_axis(records))));
    rows.push(format!("#agg,aniso_rmse_pooled,{}", format_float(aniso_rmse_pooled(records))));
    rows
}

/// Schema line, header, one row per trial, aggregate rows; `\n` endings.
pub fn render_csv(records: &[TrialRecord]) -> String {
    let mut out = String::new();
    out.push_str(SCHEMA_LINE);
    out.push('\n');
    out.push_str(&header());
    out.push('\n');
    for r in records {
        out.push_str(&format_row(r));
        out.push('\n');
    }
    for row in aggregate_rows(records) {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64, iso: f64) -> TrialRecord {
        TrialRecord {
            iso_rot_deg: Some(iso),
            aniso_z_deg: Some(iso),
            aniso_y_deg: Some(-iso),
            aniso_x_deg: Some(0.0),
            fallback_count: Some(0),
            ..TrialRecord::empty(seed, Method::Kabsch, "ok".into())
        }
    }

    #[test]
    fn float_format_has_nine_significant_digits() {
        assert_eq!(format_float(Some(1.0 / 3.0)), "3.33333333e-1");
        assert_eq!(format_float(Some(0.0)), "0.00000000e0");
        assert_eq!(format_float(Some(-12345.678901)), "-1.23456789e4");
        assert_eq!(format_float(None), "NA");
        assert_eq!(format_float(Some(f64::NAN)), "NA");
    }

    #[test]
    fn header_and_row_have_matching_arity() {
        let h = header();
        assert!(h.starts_with("seed,method,iso_rot_deg,"));
        assert!(h.ends_with(",fallback_count,status"));
        let row = format_row(&record(3, 2.0));
        assert_eq!(row.split(',').count(), h.split(',').count());
        assert!(row.starts_with("3,kabsch,2.00000000e0,"));
        assert!(row.contains(",NA,"));
        let failed = TrialRecord::empty(4, Method::Icp, "error: a, b".into());
        assert!(format_row(&failed).ends_with(",NA,\"error: a, b\""));
    }

    #[test]
    fn aggregates_skip_missing_values() {
        let records = vec![record(0, 1.0), record(1, 3.0), TrialRecord::empty(2, Method::Kabsch, "err".into())];
        let s = column_stats(records.iter().map(|r| r.iso_rot_deg)).unwrap();
        assert_eq!((s.mean, s.mae, s.std, s.count), (2.0, 2.0, 1.0, 2));
        assert!((s.rmse - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(column_stats(records.iter().map(|r| r.divergence)), None);
        // z errors {1, 3}, y errors {−1, −3}, x errors {0, 0}
        let per_axis = aniso_rmse_per_axis(&records).unwrap();
        assert!((per_axis - 2.0 * 5f64.sqrt() / 3.0).abs() < 1e-15);
        let pooled = aniso_rmse_pooled(&records).unwrap();
        assert!((pooled - (20.0f64 / 6.0).sqrt()).abs() < 1e-15);
        let rows = aggregate_rows(&records);
        assert!(rows[0].starts_with("#agg,mean,2.00000000e0,"));
        assert!(rows[0].ends_with(",ok=2/3"));
        assert_eq!(rows.len(), 6);
    }
}
