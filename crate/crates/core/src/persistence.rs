//! File formats and the append-only score history.
//!
//! Documents (fleet, scorecards, thresholds, budget) are pretty-printed JSON;
//! logs (incidents, assignments, history) are newline-delimited JSON.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::calibration::{Assignment, BudgetConfig, Thresholds};
use crate::error::{Error, Result};
use crate::fabric::FabricTopology;
use crate::hazard::IncidentRecord;
use crate::scoring::{ScoreCard, ScoreSeries, SeriesPoint};

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_string(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parse JSON, reporting the path of the first offending field.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: origin.to_string(),
        message: format!("at {}: {}", e.path(), e.inner()),
    })
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&read_to_string(path)?, &path.display().to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_string(path, &to_json_pretty(value))
}

pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_to_string(path)?;
    parse_ndjson(&text, &path.display().to_string())
}

pub fn parse_ndjson<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_json(l, &format!("{origin}:{}", i + 1)))
        .collect()
}

pub fn to_ndjson<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn write_ndjson<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_string(path, &to_ndjson(items))
}

/// Name the element a JSON path such as `datacenters[0].layers[1].elements[2].capacity` points into.
fn element_at(value: &serde_json::Value, path: &str) -> Option<String> {
    let mut cur = value;
    for seg in path.split('.') {
        let (key, idx) = match seg.split_once('[') {
            Some((k, rest)) => (k, rest.trim_end_matches(']').parse::<usize>().ok()),
            None => (seg, None),
        };
        cur = cur.get(key)?;
        if let Some(i) = idx {
            cur = cur.get(i)?;
        }
        if key == "elements" && idx.is_some() {
            return cur.get("id").and_then(|v| v.as_str()).map(str::to_string);
        }
    }
    None
}

/// Parse and validate a fleet document.
pub fn parse_fleet(text: &str, origin: &str) -> Result<FabricTopology> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let fleet: FabricTopology = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let element = serde_json::from_str::<serde_json::Value>(text)
            .ok()
            .and_then(|v| element_at(&v, &path))
            .map(|id| format!(" (element {id})"))
            .unwrap_or_default();
        Error::Parse {
            path: origin.to_string(),
            message: format!("at {path}{element}: {}", e.inner()),
        }
    })?;
    fleet.ensure_valid()?;
    Ok(fleet)
}

pub fn load_fleet(path: &Path) -> Result<FabricTopology> {
    parse_fleet(&read_to_string(path)?, &path.display().to_string())
}

pub fn save_fleet(fleet: &FabricTopology, path: &Path) -> Result<()> {
    write_json(path, fleet)
}

pub fn load_incidents(path: &Path) -> Result<Vec<IncidentRecord>> {
    let records: Vec<IncidentRecord> = read_ndjson(path)?;
    for r in &records {
        r.check()?;
    }
    Ok(records)
}

pub fn save_incidents(records: &[IncidentRecord], path: &Path) -> Result<()> {
    write_ndjson(path, records)
}

pub fn load_scorecards(path: &Path) -> Result<Vec<ScoreCard>> {
    read_json(path)
}

pub fn save_scorecards(cards: &[ScoreCard], path: &Path) -> Result<()> {
    write_json(path, &cards)
}

pub fn load_thresholds(path: &Path) -> Result<Thresholds> {
    read_json(path)
}

pub fn save_thresholds(t: &Thresholds, path: &Path) -> Result<()> {
    write_json(path, t)
}

pub fn load_budget(path: &Path) -> Result<BudgetConfig> {
    let b: BudgetConfig = read_json(path)?;
    b.check()?;
    Ok(b)
}

pub fn load_assignments(path: &Path) -> Result<Vec<Assignment>> {
    read_ndjson(path)
}

pub fn save_assignments(items: &[Assignment], path: &Path) -> Result<()> {
    write_ndjson(path, items)
}

fn escape_scope(scope_id: &str) -> String {
    scope_id.replace('%', "%25").replace('/', "%2F")
}

/// Append-only per-scope score history, optionally backed by a directory of
/// `<scope>.ndjson` files.
#[derive(Debug, Default)]
pub struct HistoryStore {
    root: Option<PathBuf>,
    series: BTreeMap<String, Vec<ScoreCard>>,
}

impl HistoryStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (creating if needed) a store directory and index what it holds.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut series: BTreeMap<String, Vec<ScoreCard>> = BTreeMap::new();
        let mut entries: Vec<PathBuf> = fs::read_dir(&root)
            .map_err(|e| Error::io(&root, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        entries.sort();
        for path in entries {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let card: ScoreCard = parse_json(&line, &format!("{}:{}", path.display(), i + 1))?;
                series.entry(card.scope_id.clone()).or_default().push(card);
            }
        }
        for v in series.values_mut() {
            v.sort_by_key(|c| c.at);
        }
        Ok(Self {
            root: Some(root),
            series,
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Append a batch. Every card must be strictly newer than its scope's
    /// tail; on any violation nothing is written.
    pub fn append_scores(&mut self, cards: &[ScoreCard]) -> Result<()> {
        let mut tails: BTreeMap<&str, chrono::DateTime<chrono::Utc>> = BTreeMap::new();
        for c in cards {
            let tail = tails
                .get(c.scope_id.as_str())
                .copied()
                .or_else(|| self.series.get(&c.scope_id).and_then(|v| v.last()).map(|l| l.at));
            if let Some(t) = tail {
                if c.at <= t {
                    return Err(Error::OutOfOrder {
                        scope_id: c.scope_id.clone(),
                        message: format!("{} is not after {t}", c.at),
                    });
                }
            }
            tails.insert(&c.scope_id, c.at);
        }

        if let Some(root) = &self.root {
            let mut grouped: BTreeMap<&str, Vec<&ScoreCard>> = BTreeMap::new();
            for c in cards {
                grouped.entry(&c.scope_id).or_default().push(c);
            }
            for (scope, group) in grouped {
                let path = root.join(format!("{}.ndjson", escape_scope(scope)));
                let mut f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| Error::io(&path, e))?;
                let mut buf = String::new();
                for c in group {
                    buf.push_str(&serde_json::to_string(c).expect("plain data serializes"));
                    buf.push('\n');
                }
                f.write_all(buf.as_bytes()).map_err(|e| Error::io(&path, e))?;
            }
        }
        for c in cards {
            self.series.entry(c.scope_id.clone()).or_default().push(c.clone());
        }
        Ok(())
    }

    pub fn cards(&self, scope_id: &str) -> &[ScoreCard] {
        self.series.get(scope_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Trailing `window` points of a scope, oldest first. Unknown scopes give
    /// an empty series.
    pub fn read_series(&self, scope_id: &str, window: usize) -> ScoreSeries {
        let cards = self.cards(scope_id);
        let from = cards.len().saturating_sub(window);
        ScoreSeries {
            scope_id: scope_id.to_string(),
            points: cards[from..]
                .iter()
                .map(|c| SeriesPoint {
                    at: c.at,
                    persisted: c.persisted,
                    color: c.color,
                })
                .collect(),
        }
    }

    pub fn scopes(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::default_epoch;
    use crate::scoring::{Color, Scope};
    use chrono::Duration;

    fn card(scope: &str, day: i64, p: f64) -> ScoreCard {
        ScoreCard {
            scope: Scope::Datacenter,
            scope_id: scope.into(),
            es: 0.3,
            p_fail: p,
            raw: p,
            persisted: p,
            color: Color::Green,
            at: default_epoch() + Duration::days(day),
        }
    }

    #[test]
    fn append_and_window() {
        let mut store = HistoryStore::in_memory();
        for d in 0..3 {
            store.append_scores(&[card("dc1", d, d as f64 / 10.0)]).unwrap();
        }
        let s = store.read_series("dc1", 2);
        assert_eq!(s.points.len(), 2);
        assert_eq!(s.points[0].persisted, 0.1);
        assert_eq!(s.points[1].persisted, 0.2);
        assert!(store.read_series("unknown", 5).points.is_empty());
    }

    #[test]
    fn out_of_order_is_rejected_atomically() {
        let mut store = HistoryStore::in_memory();
        store.append_scores(&[card("dc1", 5, 0.1)]).unwrap();
        let err = store
            .append_scores(&[card("dc2", 1, 0.1), card("dc1", 4, 0.2)])
            .unwrap_err();
        assert!(matches!(err, Error::OutOfOrder { .. }));
        assert!(store.cards("dc2").is_empty());
        // duplicates within one batch are out of order too
        assert!(store
            .append_scores(&[card("dc3", 1, 0.1), card("dc3", 1, 0.1)])
            .is_err());
    }

    #[test]
    fn directory_store_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut store = HistoryStore::open(dir.path()).unwrap();
            store
                .append_scores(&[card("dc1/agg", 0, 0.1), card("dc1", 0, 0.1)])
                .unwrap();
            store.append_scores(&[card("dc1/agg", 1, 0.3)]).unwrap();
        }
        let store = HistoryStore::open(dir.path()).unwrap();
        assert_eq!(store.read_series("dc1/agg", 10).points.len(), 2);
        assert_eq!(store.read_series("dc1", 10).points.len(), 1);
        assert!(dir.path().join("dc1%2Fagg.ndjson").exists());
    }

    #[test]
    fn fractional_capacity_names_the_element() {
        let text = r#"{"regions":["r1"],"datacenters":[{"id":"dc1","region_id":"r1","layers":[
            {"id":"agg","tier":"agg","demand_forecast":10,"elements":[
              {"id":"dc1/agg/e1","kind":"link","capacity":10,"state":"up"},
              {"id":"dc1/agg/e2","kind":"link","capacity":10.5,"state":"up"}]}]}]}"#;
        let err = parse_fleet(text, "fleet.json").unwrap_err().to_string();
        assert!(err.contains("dc1/agg/e2"), "{err}");
        assert!(err.contains("capacity"), "{err}");
    }

    #[test]
    fn unknown_keys_and_empty_regions_are_rejected() {
        let err = parse_fleet(r#"{"regions":["r"],"datacenters":[],"extra":1}"#, "f").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = parse_fleet(r#"{"regions":[],"datacenters":[]}"#, "f").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_fleet(Path::new("/definitely/not/here.json")).unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.json"));
    }
}
