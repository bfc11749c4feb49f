use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataio::{render_rows, write_text};
use crate::error::{Error, Result};
use crate::ndcore::Matrix;

use super::cluster::ClusterTree;
use super::survival::KmCurve;

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

fn class_color(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

/// Blue-white-red, symmetric about zero; `scale` is the magnitude mapped to full colour.
fn diverging(value: f64, scale: f64) -> String {
    let t = if scale > 0.0 { (value / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let (end, w) = if t < 0.0 { ((59.0, 76.0, 192.0), -t) } else { ((180.0, 4.0, 38.0), t) };
    let mix = |e: f64| (247.0 + (e - 247.0) * w).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self { body: String::new(), width, height }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#);
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64) {
        let _ = writeln!(
            self.body,
            r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#333333" stroke-width="0.8"/>"##
        );
    }

    fn circle(&mut self, x: f64, y: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{fill}" stroke="#444444" stroke-width="0.3"/>"##
        );
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif" text-anchor="{anchor}">{}</text>"#,
            escape(content)
        );
    }

    fn rotated_text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text transform="translate({x:.2},{y:.2}) rotate(60)" font-size="{size}" font-family="sans-serif">{}</text>"#,
            escape(content)
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Draws `tree` with leaves at `leaf_pos` (by leaf id) along one axis and
/// heights growing away from `base` toward `tip` along the other.
fn dendrogram(svg: &mut Svg, tree: &ClusterTree, leaf_pos: &[f64], base: f64, tip: f64, vertical_leaves: bool) {
    let n = tree.leaves;
    let max_h = tree.merges.last().map_or(0.0, |m| m.height).max(f64::MIN_POSITIVE);
    let mut pos = leaf_pos.to_vec();
    let mut depth = vec![base; n];
    for m in &tree.merges {
        let d = base + (tip - base) * m.height / max_h;
        for child in [m.left, m.right] {
            if vertical_leaves {
                svg.line(depth[child], pos[child], d, pos[child]);
            } else {
                svg.line(pos[child], depth[child], pos[child], d);
            }
        }
        if vertical_leaves {
            svg.line(d, pos[m.left], d, pos[m.right]);
        } else {
            svg.line(pos[m.left], d, pos[m.right], d);
        }
        pos.push((pos[m.left] + pos[m.right]) / 2.0);
        depth.push(d);
    }
}

/// A matrix to draw as a clustered heatmap with a class colour strip.
pub struct Heatmap<'a> {
    pub values: &'a Matrix,
    pub row_names: &'a [String],
    pub column_names: &'a [String],
    pub labels: &'a [usize],
    pub vocabulary: &'a [String],
    pub row_tree: Option<&'a ClusterTree>,
    pub column_tree: Option<&'a ClusterTree>,
    pub title: &'a str,
}

impl Heatmap<'_> {
    fn check(&self) -> Result<()> {
        let (n, d) = self.values.shape();
        let ok = self.row_names.len() == n
            && self.labels.len() == n
            && self.column_names.len() == d
            && self.row_tree.is_none_or(|t| t.leaves == n)
            && self.column_tree.is_none_or(|t| t.leaves == d)
            && self.labels.iter().all(|&l| l < self.vocabulary.len());
        if !ok {
            return Err(Error::shape("emit_clustermap", format!("inconsistent inputs for a {n}x{d} heatmap")));
        }
        Ok(())
    }

    fn row_order(&self) -> Vec<usize> {
        self.row_tree.map_or_else(|| (0..self.values.rows()).collect(), |t| t.order.clone())
    }

    fn column_order(&self) -> Vec<usize> {
        self.column_tree.map_or_else(|| (0..self.values.cols()).collect(), |t| t.order.clone())
    }
}

/// Writes the heatmap (rows and columns in dendrogram order) as SVG, and the
/// reordered matrix as CSV with `sample,label,<columns...>`.
pub fn emit_clustermap(map: &Heatmap, svg_path: &Path, csv_path: &Path) -> Result<()> {
    map.check()?;
    let rows = map.row_order();
    let cols = map.column_order();
    let (n, d) = map.values.shape();
    let cw = (720.0 / d as f64).clamp(3.0, 16.0);
    let ch = (720.0 / n as f64).clamp(0.5, 16.0);
    let (dendro, strip, top, left) = (90.0, 12.0, 40.0, 20.0);
    let x0 = left + dendro + strip + 4.0;
    let y0 = top + dendro;
    let width = x0 + cw * d as f64 + 180.0;
    let height = y0 + ch * n as f64 + 200.0;
    let mut svg = Svg::new(width.ceil(), height.ceil());
    svg.text(left, 24.0, 14.0, "start", map.title);
    let scale = map.values.max_abs();
    for (i, &r) in rows.iter().enumerate() {
        let y = y0 + ch * i as f64;
        svg.rect(left + dendro, y, strip, ch, class_color(map.labels[r]));
        for (j, &c) in cols.iter().enumerate() {
            svg.rect(x0 + cw * j as f64, y, cw, ch, &diverging(map.values[(r, c)], scale));
        }
    }
    if let Some(tree) = map.row_tree {
        let mut pos = vec![0.0; n];
        rows.iter().enumerate().for_each(|(i, &r)| pos[r] = y0 + ch * (i as f64 + 0.5));
        dendrogram(&mut svg, tree, &pos, left + dendro, left, true);
    }
    if let Some(tree) = map.column_tree {
        let mut pos = vec![0.0; d];
        cols.iter().enumerate().for_each(|(j, &c)| pos[c] = x0 + cw * (j as f64 + 0.5));
        dendrogram(&mut svg, tree, &pos, y0 - 2.0, top, false);
    }
    let label_y = y0 + ch * n as f64 + 6.0;
    for (j, &c) in cols.iter().enumerate() {
        svg.rotated_text(x0 + cw * (j as f64 + 0.3), label_y, cw.clamp(4.0, 9.0), &map.column_names[c]);
    }
    let lx = x0 + cw * d as f64 + 20.0;
    for (k, name) in map.vocabulary.iter().enumerate() {
        let y = y0 + 16.0 * k as f64;
        svg.rect(lx, y, 10.0, 10.0, class_color(k));
        svg.text(lx + 14.0, y + 9.0, 10.0, "start", name);
    }
    let sy = y0 + 16.0 * map.vocabulary.len() as f64 + 20.0;
    for (k, v) in [-1.0, -0.5, 0.0, 0.5, 1.0].iter().enumerate() {
        svg.rect(lx, sy + 12.0 * k as f64, 10.0, 12.0, &diverging(*v * scale, scale));
        svg.text(lx + 14.0, sy + 12.0 * k as f64 + 9.0, 9.0, "start", &format!("{:+.2}", v * scale));
    }
    write_text(svg_path, &svg.finish())?;

    let mut table = vec![["sample", "label"]
        .iter()
        .map(|s| s.to_string())
        .chain(cols.iter().map(|&c| map.column_names[c].clone()))
        .collect::<Vec<_>>()];
    for &r in &rows {
        let mut line = vec![map.row_names[r].clone(), map.vocabulary[map.labels[r]].clone()];
        line.extend(cols.iter().map(|&c| map.values[(r, c)].to_string()));
        table.push(line);
    }
    write_text(csv_path, &render_rows(csv_path, &table)?)
}

/// Samples placed in two dimensions, coloured by class or by a feature.
pub struct ScatterMap<'a> {
    pub coords: &'a Matrix,
    pub labels: &'a [usize],
    pub vocabulary: &'a [String],
    pub axis_labels: [String; 2],
    pub title: &'a str,
}

const PANEL: f64 = 520.0;
const PLOT_MIN: f64 = 60.0;
const PLOT_MAX: f64 = 460.0;

fn scatter_frame(map: &ScatterMap, subtitle: &str) -> (Svg, Vec<(f64, f64)>) {
    let xs = map.coords.column(0);
    let ys = map.coords.column(1);
    let bounds = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = ((hi - lo) * 0.05).max(1e-9);
        (lo - pad, hi + pad)
    };
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let span = PLOT_MAX - PLOT_MIN;
    let points = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (PLOT_MIN + span * (x - x_lo) / (x_hi - x_lo), PLOT_MAX - span * (y - y_lo) / (y_hi - y_lo)))
        .collect();
    let mut svg = Svg::new(PANEL, PANEL);
    svg.text(PLOT_MIN, 24.0, 13.0, "start", map.title);
    svg.text(PLOT_MIN, 42.0, 11.0, "start", subtitle);
    svg.line(PLOT_MIN, PLOT_MAX, PLOT_MAX, PLOT_MAX);
    svg.line(PLOT_MIN, PLOT_MIN, PLOT_MIN, PLOT_MAX);
    svg.text((PLOT_MIN + PLOT_MAX) / 2.0, PLOT_MAX + 30.0, 11.0, "middle", &map.axis_labels[0]);
    svg.text(18.0, (PLOT_MIN + PLOT_MAX) / 2.0, 11.0, "middle", &map.axis_labels[1]);
    (svg, points)
}

/// One class-coloured scatter at `class_path`, then one panel per
/// `(activity column, name, path)` coloured by that column on a scale
/// symmetric about zero. All panels share the same frame and viewBox.
pub fn emit_featuremap(
    map: &ScatterMap,
    activity: &Matrix,
    panels: &[(usize, String, PathBuf)],
    class_path: &Path,
) -> Result<Vec<PathBuf>> {
    let n = map.coords.rows();
    if map.coords.cols() != 2 || activity.rows() != n || map.labels.len() != n {
        return Err(Error::shape("emit_featuremap", "coordinates, labels and activities disagree in length"));
    }
    if let Some((c, ..)) = panels.iter().find(|(c, ..)| *c >= activity.cols()) {
        return Err(Error::shape("emit_featuremap", format!("activity column {c} out of range")));
    }
    let (mut svg, points) = scatter_frame(map, "coloured by class");
    for (p, &l) in points.iter().zip(map.labels) {
        svg.circle(p.0, p.1, class_color(l));
    }
    for (k, name) in map.vocabulary.iter().enumerate() {
        let y = PLOT_MIN + 14.0 * k as f64;
        svg.circle(PLOT_MAX + 12.0, y, class_color(k));
        svg.text(PLOT_MAX + 20.0, y + 4.0, 9.0, "start", name);
    }
    write_text(class_path, &svg.finish())?;
    let mut written = vec![class_path.to_path_buf()];
    for (column, name, path) in panels {
        let values = activity.column(*column);
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (mut svg, points) = scatter_frame(map, &format!("activity: {name}"));
        for (p, v) in points.iter().zip(&values) {
            svg.circle(p.0, p.1, &diverging(*v, scale));
        }
        for (k, v) in [1.0, 0.0, -1.0].iter().enumerate() {
            let y = PLOT_MIN + 14.0 * k as f64;
            svg.circle(PLOT_MAX + 12.0, y, &diverging(v * scale, scale));
            svg.text(PLOT_MAX + 20.0, y + 4.0, 9.0, "start", &format!("{:+.2}", v * scale));
        }
        write_text(path, &svg.finish())?;
        written.push(path.clone());
    }
    Ok(written)
}

/// Step plot of one or more survival curves up to `horizon` days.
pub fn emit_km_plot(curves: &[(&str, &KmCurve)], title: &str, horizon: f64, path: &Path) -> Result<()> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("plot horizon must be positive".into()));
    }
    let mut svg = Svg::new(PANEL, PANEL);
    svg.text(PLOT_MIN, 30.0, 13.0, "start", title);
    svg.line(PLOT_MIN, PLOT_MAX, PLOT_MAX, PLOT_MAX);
    svg.line(PLOT_MIN, PLOT_MIN, PLOT_MIN, PLOT_MAX);
    svg.text((PLOT_MIN + PLOT_MAX) / 2.0, PLOT_MAX + 30.0, 11.0, "middle", "days");
    svg.text(18.0, (PLOT_MIN + PLOT_MAX) / 2.0, 11.0, "middle", "S(t)");
    let span = PLOT_MAX - PLOT_MIN;
    let px = |t: f64| PLOT_MIN + span * (t.min(horizon) / horizon);
    let py = |s: f64| PLOT_MAX - span * s;
    for (k, (name, curve)) in curves.iter().enumerate() {
        let mut pts = vec![(px(0.0), py(1.0))];
        for (&t, &s) in curve.times.iter().zip(&curve.survival) {
            if t > horizon {
                break;
            }
            let prev = pts.last().expect("seeded").1;
            pts.push((px(t), prev));
            pts.push((px(t), py(s)));
        }
        let last = pts.last().expect("seeded").1;
        pts.push((px(horizon), last));
        svg.polyline(&pts, class_color(k));
        svg.rect(PLOT_MAX - 120.0, PLOT_MIN + 16.0 * k as f64, 10.0, 10.0, class_color(k));
        svg.text(PLOT_MAX - 106.0, PLOT_MIN + 16.0 * k as f64 + 9.0, 10.0, "start", name);
    }
    write_text(path, &svg.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpret::{hierarchical_cluster, km_estimate, DistanceMetric};

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn clustermap_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let values = Matrix::from_rows(&[[1.0, 0.1, 0.2], [0.1, 1.0, 0.9], [1.0, 0.2, 0.1]]).unwrap();
        let rt = hierarchical_cluster(&values, DistanceMetric::Cosine).unwrap();
        let ct = hierarchical_cluster(&values.transpose(), DistanceMetric::Cosine).unwrap();
        let vocab = vec!["A&B".to_string(), "C".to_string()];
        let (rn, cn) = (names("s", 3), names("P_<", 3));
        let map = Heatmap {
            values: &values,
            row_names: &rn,
            column_names: &cn,
            labels: &[0, 1, 0],
            vocabulary: &vocab,
            row_tree: Some(&rt),
            column_tree: Some(&ct),
            title: "test",
        };
        let (svg, csv) = (dir.path().join("m.svg"), dir.path().join("m.csv"));
        emit_clustermap(&map, &svg, &csv).unwrap();
        let text = std::fs::read_to_string(&svg).unwrap();
        roxmltree::Document::parse(&text).unwrap();
        let csv_text = std::fs::read_to_string(&csv).unwrap();
        let lines: Vec<&str> = csv_text.lines().collect();
        assert_eq!(lines.len(), 4);
        let first_row = rt.order[0];
        let first_col = ct.order[0];
        let cells: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cells[0], format!("s{first_row}"));
        assert_eq!(cells[2].parse::<f64>().unwrap(), values[(first_row, first_col)]);
        // same inputs, same bytes
        emit_clustermap(&map, &svg, &csv).unwrap();
        assert_eq!(std::fs::read_to_string(&svg).unwrap(), text);
    }

    #[test]
    fn featuremap_panels_share_frame() {
        let dir = tempfile::tempdir().unwrap();
        let coords = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]]).unwrap();
        let activity = Matrix::from_rows(&[[0.5, 3.0], [-1.0, 3.0], [0.2, 3.0]]).unwrap();
        let vocab = vec!["x".to_string(), "y".to_string()];
        let map = ScatterMap {
            coords: &coords,
            labels: &[0, 1, 1],
            vocabulary: &vocab,
            axis_labels: ["PC1".into(), "PC2".into()],
            title: "PCA",
        };
        let panels =
            vec![(0, "P0".to_string(), dir.path().join("p0.svg")), (1, "P1".to_string(), dir.path().join("p1.svg"))];
        let files = emit_featuremap(&map, &activity, &panels, &dir.path().join("c.svg")).unwrap();
        assert_eq!(files.len(), 3);
        let boxes: Vec<String> = files
            .iter()
            .map(|f| {
                let t = std::fs::read_to_string(f).unwrap();
                let doc = roxmltree::Document::parse(&t).unwrap();
                doc.root_element().attribute("viewBox").unwrap().to_string()
            })
            .collect();
        assert!(boxes.windows(2).all(|w| w[0] == w[1]));
        // constant column: every point the same colour
        let t = std::fs::read_to_string(&files[2]).unwrap();
        let doc = roxmltree::Document::parse(&t).unwrap();
        let fills: std::collections::HashSet<_> = doc
            .descendants()
            .filter(|n| n.has_tag_name("circle"))
            .take(3)
            .map(|n| n.attribute("fill").unwrap().to_string())
            .collect();
        assert_eq!(fills.len(), 1);
    }

    #[test]
    fn km_plot_is_xml() {
        let dir = tempfile::tempdir().unwrap();
        let km = km_estimate(&[10.0, 20.0, 3000.0], &[true, false, true]).unwrap();
        let p = dir.path().join("km.svg");
        emit_km_plot(&[("low", &km), ("high", &km)], "GENE p=0.5", 1825.0, &p).unwrap();
        roxmltree::Document::parse(&std::fs::read_to_string(&p).unwrap()).unwrap();
    }
}
