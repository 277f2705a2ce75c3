use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{NeuronStatic, Statics, CLUSTER_SIZE};

/// Parses a positions file: one `id x y z area_name` row per neuron.
///
/// Blank lines and `#` comments are skipped. Rows may come in any order;
/// the result is sorted by id and the area table keeps first-appearance order.
pub fn parse_positions(path: &Path) -> Result<Statics> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_positions_str(&text, path)
}

pub(crate) fn parse_positions_str(text: &str, path: &Path) -> Result<Statics> {
    let mut rows: Vec<Option<([f32; 3], u16)>> = Vec::new();
    let mut areas: Vec<String> = Vec::new();
    let mut area_ids: HashMap<String, u16> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::format(
                path,
                line_no,
                format!("expected 5 fields (id x y z area), found {}", fields.len()),
            ));
        }
        let id: u32 = fields[0]
            .parse()
            .map_err(|_| Error::format(path, line_no, format!("bad neuron id '{}'", fields[0])))?;
        let mut position = [0f32; 3];
        for (slot, field) in position.iter_mut().zip(&fields[1..4]) {
            *slot = field
                .parse()
                .ok()
                .filter(|v: &f32| v.is_finite())
                .ok_or_else(|| Error::format(path, line_no, format!("bad coordinate '{field}'")))?;
        }
        let next_area = areas.len();
        let area = *area_ids.entry(fields[4].to_string()).or_insert_with(|| {
            areas.push(fields[4].to_string());
            next_area as u16
        });
        if areas.len() > u16::MAX as usize {
            return Err(Error::format(path, line_no, "more than 65535 areas"));
        }

        let slot = id as usize;
        if slot >= rows.len() {
            rows.resize(slot + 1, None);
        }
        if rows[slot].is_some() {
            return Err(Error::format(path, line_no, format!("duplicate neuron id {id}")));
        }
        rows[slot] = Some((position, area));
    }

    let mut neurons = Vec::with_capacity(rows.len());
    for (id, row) in rows.into_iter().enumerate() {
        let (position, area_id) =
            row.ok_or_else(|| Error::Validation(format!("neuron id {id} is missing")))?;
        let id = id as u32;
        neurons.push(NeuronStatic {
            neuron_id: id,
            position,
            cluster_id: id / CLUSTER_SIZE,
            cluster_slot: (id % CLUSTER_SIZE) as u8,
            area_id,
        });
    }
    if neurons.len() % CLUSTER_SIZE as usize != 0 {
        let tail = neurons.len() % CLUSTER_SIZE as usize;
        return Err(Error::Validation(format!(
            "cluster {} has {tail} neurons, expected {CLUSTER_SIZE}",
            neurons.len() / CLUSTER_SIZE as usize
        )));
    }
    let statics = Statics { neurons, areas };
    statics.validate()?;
    Ok(statics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write;

    fn rows(n: u32, areas: u32) -> String {
        let mut s = String::new();
        for id in 0..n {
            let area = (id / 10) % areas;
            writeln!(s, "{id} {}.5 -1 2e1 area_{area}", id).unwrap();
        }
        s
    }

    fn parse(text: &str) -> Result<Statics> {
        parse_positions_str(text, Path::new("positions.txt"))
    }

    #[test]
    fn minimal_well_formed() {
        let s = parse(&rows(20, 2)).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s.areas, vec!["area_0", "area_1"]);
        assert_eq!(s.cluster_count(), 2);
        assert_eq!(s.neurons[13].cluster_id, 1);
        assert_eq!(s.neurons[13].cluster_slot, 3);
        assert_eq!(s.neurons[13].position, [13.5, -1.0, 20.0]);
    }

    #[test]
    fn rows_in_any_order() {
        let text = rows(20, 2);
        let reversed: String = text.lines().rev().map(|l| format!("{l}\r\n")).collect();
        let a = parse(&text).unwrap();
        let b = parse(&reversed).unwrap();
        // first appearance differs, so area ids are permuted but names agree
        assert_eq!(b.areas, vec!["area_1", "area_0"]);
        for (x, y) in a.neurons.iter().zip(&b.neurons) {
            assert_eq!(x.position, y.position);
            assert_eq!(a.areas[x.area_id as usize], b.areas[y.area_id as usize]);
        }
    }

    #[test]
    fn duplicate_id() {
        let mut text = rows(20, 1);
        text.push_str("5 0 0 0 area_0\n");
        let err = parse(&text).unwrap_err();
        assert!(matches!(err, Error::Format { line: 21, .. }), "{err}");
        assert!(err.to_string().contains("duplicate neuron id 5"));
    }

    #[test]
    fn non_numeric_coordinate() {
        let text = rows(10, 1).replacen("0.5", "abc", 1);
        assert!(matches!(parse(&text), Err(Error::Format { line: 1, .. })));
    }

    #[test]
    fn partial_cluster() {
        assert!(matches!(parse(&rows(15, 1)), Err(Error::Validation(_))));
    }

    #[test]
    fn gap_in_ids() {
        let text = rows(20, 1).replace("\n7 ", "\n27 ");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn cluster_split_across_areas() {
        let text = rows(10, 1).replacen("area_0\n", "area_9\n", 1);
        assert!(matches!(parse(&text), Err(Error::Validation(_))));
    }
}
