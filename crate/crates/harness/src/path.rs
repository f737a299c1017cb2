//! CSV rows for depth-indexed paths.

use umspace::Dec;

/// `h_low,h_high,count,mass_1,…,mass_K` with `K` the largest count; shorter
/// rows leave trailing mass cells empty and an unbounded `h_high` is `inf`.
pub fn emit_path_csv(path: &[(Dec, Option<Dec>, Vec<Dec>)]) -> String {
    let width = path.iter().map(|r| r.2.len()).max().unwrap_or(0);
    let mut header = vec!["h_low".to_string(), "h_high".to_string(), "count".to_string()];
    header.extend((1..=width).map(|i| format!("mass_{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for (low, high, masses) in path {
        let mut cells = vec![
            low.to_string(),
            high.map_or_else(|| "inf".to_string(), |h| h.to_string()),
            masses.len().to_string(),
        ];
        cells.extend(masses.iter().map(Dec::to_string));
        cells.resize(3 + width, String::new());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
