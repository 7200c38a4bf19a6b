//! Data maps: variability on x, confidence on y, coloured by correctness.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynlog::EpochWindow;
use crate::error::{CartographyError, Result};
use crate::measures::{self, MeasureKind, MeasureScores, ScoreTable};

#[derive(Debug, Clone, PartialEq)]
pub struct DataMapPoint {
    pub example_id: String,
    /// Variability.
    pub x: f64,
    /// Confidence.
    pub y: f64,
    pub correctness: f64,
    pub bin: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataMap {
    /// `None` only for an empty map.
    pub measure: Option<MeasureKind>,
    pub window: Option<EpochWindow>,
    /// Sorted by example id, one point per example.
    pub points: Vec<DataMapPoint>,
}

impl DataMap {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The score rows this map was built from.
    pub fn to_scores(&self) -> Vec<MeasureScores> {
        let Some(measure) = self.measure else {
            return Vec::new();
        };
        self.points
            .iter()
            .map(|p| MeasureScores {
                example_id: p.example_id.clone(),
                measure,
                confidence: p.y,
                variability: p.x,
                correctness: p.correctness,
                correctness_bin: p.bin,
            })
            .collect()
    }

    /// Map CSV; same layout as the scores CSV.
    pub fn write_csv<W: Write>(&self, out: W, comments: &[String]) -> std::io::Result<()> {
        measures::write_scores_csv(out, &self.to_scores(), comments)
    }

    pub fn read_csv<R: Read>(input: R, window: Option<EpochWindow>) -> Result<(DataMap, Vec<String>)> {
        let ScoreTable { comments, rows } = measures::read_scores_csv(input)?;
        Ok((build_map(&rows, window)?, comments))
    }
}

pub fn build_map(scores: &[MeasureScores], window: Option<EpochWindow>) -> Result<DataMap> {
    let measure = scores.first().map(|s| s.measure);
    if let Some(first) = measure {
        if let Some(other) = scores.iter().find(|s| s.measure != first) {
            return Err(CartographyError::MixedMeasures {
                first: first.to_string(),
                second: other.measure.to_string(),
            }
            .into());
        }
    }
    let mut points: Vec<DataMapPoint> = scores
        .iter()
        .map(|s| DataMapPoint {
            example_id: s.example_id.clone(),
            x: s.variability,
            y: s.confidence,
            correctness: s.correctness,
            bin: s.correctness_bin,
        })
        .collect();
    points.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    if let Some(w) = points.windows(2).find(|w| w[0].example_id == w[1].example_id) {
        return Err(CartographyError::DuplicateExample(w[0].example_id.clone()).into());
    }
    Ok(DataMap {
        measure,
        window,
        points,
    })
}

/// Keeps `floor(N * fraction)` points chosen uniformly at random under
/// `seed`; the result stays sorted by id.
pub fn sample_map(map: &DataMap, fraction: f64, seed: u64) -> Result<DataMap> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CartographyError::FractionOutOfRange(fraction).into());
    }
    let n = map.points.len();
    let k = crate::floor_count(n, fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(DataMap {
        measure: map.measure,
        window: map.window,
        points: picked.into_iter().map(|i| map.points[i].clone()).collect(),
    })
}

/// Fill colours for correctness bins 0..=9, red (never correct) to blue
/// (always correct).
pub const BIN_COLORS: [&str; 10] = [
    "#a50026", "#d73027", "#f46d43", "#fdae61", "#fee090", "#e0f3f8", "#abd9e9", "#74add1",
    "#4575b4", "#313695",
];

const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 110.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;
const MARKER_RADIUS: f64 = 3.0;

fn xml_escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Plot geometry shared by the renderer and its tests.
#[derive(Debug, Clone, Copy)]
pub struct PlotFrame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x_max: f64,
}

impl PlotFrame {
    pub fn new(map: &DataMap, width: u32, height: u32) -> Self {
        let max_var = map.points.iter().map(|p| p.x).fold(0.0, f64::max);
        // a map with no spread still gets a usable axis
        let x_max = if max_var > 0.0 { max_var * 1.05 } else { 0.5 };
        PlotFrame {
            left: MARGIN_LEFT,
            top: MARGIN_TOP,
            width: (width as f64 - MARGIN_LEFT - MARGIN_RIGHT).max(1.0),
            height: (height as f64 - MARGIN_TOP - MARGIN_BOTTOM).max(1.0),
            x_max,
        }
    }

    pub fn px(&self, variability: f64) -> f64 {
        self.left + variability / self.x_max * self.width
    }

    pub fn py(&self, confidence: f64) -> f64 {
        self.top + (1.0 - confidence) * self.height
    }
}

/// Renders the map as a standalone SVG 1.1 scatter plot. Every point is a
/// `<circle class="marker">`.
pub fn render_svg(map: &DataMap, width: u32, height: u32) -> Result<String> {
    render_svg_with_comment(map, width, height, None)
}

/// As [`render_svg`], embedding `comment` as an XML comment after the root
/// element opens.
pub fn render_svg_with_comment(
    map: &DataMap,
    width: u32,
    height: u32,
    comment: Option<&str>,
) -> Result<String> {
    if map.is_empty() {
        return Err(CartographyError::EmptyMap.into());
    }
    let frame = PlotFrame::new(map, width, height);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    if let Some(comment) = comment {
        // "--" may not appear inside an XML comment
        let _ = writeln!(svg, "<!-- {} -->", comment.replace("--", "- -"));
    }
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
    );

    let (x0, y0) = (frame.left, frame.top);
    let (x1, y1) = (frame.left + frame.width, frame.top + frame.height);
    let _ = writeln!(svg, r#"<g class="axes" stroke="black" stroke-width="1">"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    for i in 0..=5 {
        let v = frame.x_max * i as f64 / 5.0;
        let x = frame.px(v);
        let _ = writeln!(svg, r#"<line x1="{x}" y1="{y1}" x2="{x}" y2="{}"/>"#, y1 + 5.0);
        let c = i as f64 / 5.0;
        let y = frame.py(c);
        let _ = writeln!(svg, r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}"/>"#, x0 - 5.0);
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r#"<g class="tick-labels" font-family="sans-serif" font-size="10">"#
    );
    for i in 0..=5 {
        let v = frame.x_max * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{v:.3}</text>"#,
            frame.px(v),
            y1 + 17.0
        );
        let c = i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{c:.1}</text>"#,
            x0 - 8.0,
            frame.py(c) + 3.0
        );
    }
    let _ = writeln!(svg, "</g>");
    let measure = map.measure.map_or("", |m| m.as_str());
    let _ = writeln!(
        svg,
        r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">variability</text>"#,
        frame.left + frame.width / 2.0,
        y1 + 38.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="axis-label" x="15" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 15 {})">confidence ({measure})</text>"#,
        frame.top + frame.height / 2.0,
        frame.top + frame.height / 2.0
    );

    let _ = writeln!(svg, r#"<g class="markers" fill-opacity="0.8">"#);
    for p in &map.points {
        let _ = writeln!(
            svg,
            r#"<circle class="marker bin-{}" cx="{}" cy="{}" r="{MARKER_RADIUS}" fill="{}"><title>{}</title></circle>"#,
            p.bin,
            frame.px(p.x),
            frame.py(p.y),
            BIN_COLORS[p.bin.min(9) as usize],
            xml_escape(&p.example_id)
        );
    }
    let _ = writeln!(svg, "</g>");

    let mut present = [false; 10];
    for p in &map.points {
        present[p.bin.min(9) as usize] = true;
    }
    let lx = x1 + 20.0;
    let _ = writeln!(
        svg,
        r#"<g class="legend" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<text x="{lx}" y="{}">correctness</text>"#, y0 + 5.0);
    for (bin, color) in BIN_COLORS.iter().enumerate() {
        let y = y0 + 20.0 + bin as f64 * 16.0;
        let (state, opacity) = if present[bin] {
            ("legend-entry active", 1.0)
        } else {
            ("legend-entry", 0.25)
        };
        let lo = bin as f64 / 10.0;
        let label = if bin == 9 {
            format!("{lo:.1}-1.0")
        } else {
            format!("{lo:.1}-{:.1}", lo + 0.1)
        };
        let _ = writeln!(
            svg,
            r#"<g class="{state}" opacity="{opacity}"><rect x="{lx}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{label}</text></g>"#,
            y - 8.0,
            lx + 15.0,
            y
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(id: &str, conf: f64, var: f64, bin: u8) -> MeasureScores {
        MeasureScores {
            example_id: id.into(),
            measure: MeasureKind::InvPpl,
            confidence: conf,
            variability: var,
            correctness: bin as f64 / 10.0,
            correctness_bin: bin,
        }
    }

    fn map_of(n: usize) -> DataMap {
        let scores: Vec<_> = (0..n)
            .map(|i| score(&format!("{i:03}"), i as f64 / n as f64, 0.01 * (i % 7) as f64, (i % 10) as u8))
            .collect();
        build_map(&scores, None).unwrap()
    }

    #[test]
    fn build_map_is_a_bijection() {
        let scores: Vec<_> = ["e", "a", "c", "b", "d"]
            .iter()
            .map(|id| score(id, 0.5, 0.1, 3))
            .collect();
        let map = build_map(&scores, None).unwrap();
        let ids: Vec<_> = map.points.iter().map(|p| p.example_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c", "d", "e"]);
        assert!(build_map(&[], None).unwrap().is_empty());
        let mut mixed = scores.clone();
        mixed[2].measure = MeasureKind::Chia;
        assert!(matches!(
            build_map(&mixed, None),
            Err(crate::Error::Cartography(CartographyError::MixedMeasures { .. }))
        ));
        let mut dup = scores;
        dup[1].example_id = "e".into();
        assert!(build_map(&dup, None).is_err());
    }

    #[test]
    fn sampling() {
        let map = map_of(100);
        let s = sample_map(&map, 0.33, 42).unwrap();
        assert_eq!(s.len(), 33);
        assert!(s.points.windows(2).all(|w| w[0].example_id < w[1].example_id));
        assert_eq!(s, sample_map(&map, 0.33, 42).unwrap());
        assert_ne!(s, sample_map(&map, 0.33, 43).unwrap());
        assert_eq!(sample_map(&map, 1.0, 7).unwrap(), map);
        assert!(sample_map(&map, 0.0, 7).is_err());
        assert!(sample_map(&map, 1.5, 7).is_err());
        assert!(sample_map(&map, f64::NAN, 7).is_err());
    }

    #[test]
    fn svg_has_one_marker_per_point() {
        let scores = vec![score("a", 0.2, 0.1, 0), score("b", 0.5, 0.3, 5), score("c&<", 1.0, 0.0, 9)];
        let map = build_map(&scores, None).unwrap();
        let svg = render_svg(&map, 640, 480).unwrap();
        assert_eq!(svg.matches("<circle class=\"marker").count(), 3);
        assert!(svg.contains("c&amp;&lt;"));
        assert!(render_svg(&build_map(&[], None).unwrap(), 640, 480).is_err());
    }

    #[test]
    fn full_confidence_sits_on_the_top_boundary() {
        let map = build_map(&[score("a", 1.0, 0.2, 9)], None).unwrap();
        let frame = PlotFrame::new(&map, 640, 480);
        assert_eq!(frame.py(1.0), frame.top);
        let svg = render_svg(&map, 640, 480).unwrap();
        assert!(svg.contains(&format!("cy=\"{}\"", frame.top)));
        assert!(frame.px(0.2) < frame.left + frame.width);
    }

    #[test]
    fn legend_highlights_present_bins_only() {
        let map = build_map(&[score("a", 0.1, 0.0, 0), score("b", 0.2, 0.0, 0)], None).unwrap();
        let svg = render_svg(&map, 640, 480).unwrap();
        assert_eq!(svg.matches("legend-entry active").count(), 1);
        assert_eq!(svg.matches("class=\"legend-entry").count(), 10);
    }
}
