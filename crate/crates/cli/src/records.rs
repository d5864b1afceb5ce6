//! CSV rows: one per run, one per boundary moment, and the per-size
//! summary table aggregated from the run rows.

use std::path::Path;

use odometer::analysis::mean_sd;
use odometer::stacks::ModelKind;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelKind,
    pub seq: String,
    #[serde(rename = "N")]
    pub n: u64,
    pub a: u32,
    pub key_id: String,
    pub lambda: f64,
    pub r_in: f64,
    pub r_out: f64,
    pub diff: f64,
    pub diff_prime: f64,
    pub abs_err_u1: u64,
    pub max_err_u1: u64,
    pub highest_hill: i64,
    pub deepest_hole: i64,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    #[serde(rename = "N")]
    pub n: u64,
    pub a: u32,
    pub m: u32,
    pub re: f64,
    pub im: f64,
}

/// Summary over all runs sharing a model, sequence, key, size and λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: ModelKind,
    pub seq: String,
    pub key_id: String,
    #[serde(rename = "N")]
    pub n: u64,
    pub lambda: f64,
    pub trials: usize,
    pub diff_mean: f64,
    pub diff_sd: f64,
    pub diff_prime_mean: f64,
    pub diff_prime_sd: f64,
    /// `‖u1 - u‖₁ / N`, mean and SD.
    pub err_l1_per_n: f64,
    pub err_l1_per_n_sd: f64,
    /// `‖u1 - u‖₁ / N^1.5`, mean and SD.
    pub err_l1_per_n15: f64,
    pub err_l1_per_n15_sd: f64,
    /// `max |u1 - u|`, mean and SD.
    pub err_max: f64,
    pub err_max_sd: f64,
    pub highest_hill: i64,
    pub deepest_hole: i64,
    pub runtime_ms_mean: f64,
}

/// Groups run rows and summarises each group; groups are ordered by `N`,
/// ties by first appearance. Standard deviations are population SDs.
pub fn aggregate(runs: &[RunRecord]) -> Vec<TableRow> {
    let mut groups: Vec<(usize, Vec<&RunRecord>)> = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let same = |g: &&RunRecord| {
            g.model == r.model && g.seq == r.seq && g.key_id == r.key_id && g.n == r.n && g.lambda == r.lambda
        };
        match groups.iter_mut().find(|(_, g)| same(&g[0])) {
            Some((_, g)) => g.push(r),
            None => groups.push((i, vec![r])),
        }
    }
    groups.sort_by_key(|(first, g)| (g[0].n, *first));
    groups
        .into_iter()
        .map(|(_, g)| {
            let col = |f: fn(&RunRecord) -> f64| g.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (diff_mean, diff_sd) = mean_sd(&col(|r| r.diff));
            let (diff_prime_mean, diff_prime_sd) = mean_sd(&col(|r| r.diff_prime));
            let (err_l1_per_n, err_l1_per_n_sd) = mean_sd(&col(|r| r.abs_err_u1 as f64 / r.n as f64));
            let (err_l1_per_n15, err_l1_per_n15_sd) = mean_sd(&col(|r| r.abs_err_u1 as f64 / (r.n as f64).powf(1.5)));
            let (err_max, err_max_sd) = mean_sd(&col(|r| r.max_err_u1 as f64));
            let first = g[0];
            TableRow {
                model: first.model,
                seq: first.seq.clone(),
                key_id: first.key_id.clone(),
                n: first.n,
                lambda: first.lambda,
                trials: g.len(),
                diff_mean,
                diff_sd,
                diff_prime_mean,
                diff_prime_sd,
                err_l1_per_n,
                err_l1_per_n_sd,
                err_l1_per_n15,
                err_l1_per_n15_sd,
                err_max,
                err_max_sd,
                highest_hill: g.iter().map(|r| r.highest_hill).max().unwrap_or(0),
                deepest_hole: g.iter().map(|r| r.deepest_hole).min().unwrap_or(0),
                runtime_ms_mean: mean_sd(&col(|r| r.runtime_ms)).0,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(n: u64, a: u32, diff: f64) -> RunRecord {
        RunRecord {
            model: ModelKind::Idla,
            seq: "-".into(),
            n,
            a,
            key_id: "00".into(),
            lambda: 0.0,
            r_in: 1.0,
            r_out: 1.0 + diff,
            diff,
            diff_prime: diff,
            abs_err_u1: 8 * n,
            max_err_u1: a as u64,
            highest_hill: a as i64,
            deepest_hole: -(a as i64),
            runtime_ms: 2.0,
        }
    }

    #[test]
    fn aggregates_by_size() {
        let runs = vec![rec(16, 1, 1.0), rec(4, 1, 5.0), rec(16, 2, 3.0)];
        let t = aggregate(&runs);
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].n, t[0].trials, t[0].diff_mean), (4, 1, 5.0));
        assert_eq!((t[1].n, t[1].trials, t[1].diff_mean, t[1].diff_sd), (16, 2, 2.0, 1.0));
        assert_eq!(t[1].err_l1_per_n, 8.0);
        assert_eq!(t[1].err_l1_per_n15, 2.0);
        assert_eq!((t[1].highest_hill, t[1].deepest_hole, t[1].err_max, t[1].err_max_sd), (2, -2, 1.5, 0.5));
        assert_eq!(t[1].err_l1_per_n_sd, 0.0);
    }

    #[test]
    fn csv_header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("runs.csv");
        let runs = vec![rec(16, 1, 1.0), rec(16, 2, 0.5)];
        write_csv(&p, &runs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(
            "model,seq,N,a,key_id,lambda,r_in,r_out,diff,diff_prime,abs_err_u1,max_err_u1,highest_hill,deepest_hole,runtime_ms\n"
        ));
        assert_eq!(read_csv::<RunRecord>(&p).unwrap(), runs);
        let p = dir.path().join("m.csv");
        write_csv(&p, &[MomentRecord { n: 4, a: 1, m: 2, re: 0.5, im: -0.25 }]).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("N,a,m,re,im\n"));
    }
}
