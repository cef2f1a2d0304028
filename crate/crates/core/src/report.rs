//! Report serialization: JSON with a stable schema version, CSV tables,
//! and minimal static SVG scatter plots. Reports carry no timestamps so
//! identical configurations produce byte-identical artifacts.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Versioned<T: Serialize> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, body: &T) -> Result<()> {
    let wrapped = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "report": body,
    });
    let mut text = serde_json::to_string_pretty(&wrapped).expect("serializable report");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut s = String::new();
    s.push_str(header);
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Static scatter plot; intended for ratio-vs-point diagnostics, never part
/// of any pass/fail decision.
pub fn write_svg_scatter(
    path: impl AsRef<Path>,
    title: &str,
    points: &[(f64, f64)],
) -> Result<()> {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 40.0, 40.0);
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (0.0f64, 1.0f64, 0.0f64, 1.0f64);
    if !finite.is_empty() {
        x0 = finite.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        x1 = finite.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        y0 = finite.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        y1 = finite.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" font-family="monospace" font-size="14">{}</text>"#,
        ml,
        title.replace('<', "&lt;").replace('>', "&gt;")
    )
    .unwrap();
    writeln!(
        s,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - mb,
        w - mr,
        h - mb
    )
    .unwrap();
    writeln!(
        s,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        h - mb
    )
    .unwrap();
    for &(x, y) in &finite {
        writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            sx(x),
            sy(y)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{ml}" y="{}" font-family="monospace" font-size="11">x: [{x0:.4}, {x1:.4}]  y: [{y0:.4}, {y1:.4}]</text>"#,
        h - 8.0
    )
    .unwrap();
    writeln!(s, "</svg>").unwrap();
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        let body = serde_json::json!({"x": [1.0, 2.0], "name": "t"});
        write_json(&p1, &body).unwrap();
        write_json(&p2, &body).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap()
        );
    }

    #[test]
    fn svg_handles_empty_and_infinite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.svg");
        write_svg_scatter(&p, "t", &[(0.0, f64::INFINITY), (1.0, 2.0)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("</svg>"));
    }
}
