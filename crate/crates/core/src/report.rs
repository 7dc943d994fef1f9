//! Plain-text tables, CSV, and dependency-free SVG charts.

use std::fmt::Write as _;

use crate::corpus::CorpusStats;
use crate::evaluation::CvReport;
use crate::explain::{AggregateReport, ImportanceReport, RankedTerm};

const LEFT_COLOR: &str = "#c0392b";
const RIGHT_COLOR: &str = "#2155a6";

/// Rows of `rank,term,value,side`, left side first.
pub fn ranked_csv(left: &[RankedTerm], right: &[RankedTerm]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "term", "value", "side"]).expect("in-memory write");
    for (side, list) in [("left", left), ("right", right)] {
        for (rank, t) in list.iter().enumerate() {
            w.write_record([(rank + 1).to_string(), t.term.clone(), format!("{}", t.value), side.to_string()])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn importance_csv(report: &ImportanceReport) -> String {
    ranked_csv(&report.left_terms, &report.right_terms)
}

pub fn aggregate_csv(report: &AggregateReport) -> String {
    ranked_csv(&report.left_tokens, &report.right_tokens)
}

pub fn keyword_share_csv(shares: &[(String, usize, f64)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["keyword", "count", "share"]).expect("in-memory write");
    for (k, c, s) in shares {
        w.write_record([k.clone(), c.to_string(), format!("{s:.6}")]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
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

/// Two panels of horizontal bars: left terms (red, bars growing leftward
/// from the axis) above right terms (blue, growing rightward). Bar lengths
/// share one scale so the panels are comparable.
pub fn two_sided_bar_svg(title: &str, left: &[RankedTerm], right: &[RankedTerm]) -> String {
    const WIDTH: f64 = 640.0;
    const ROW: f64 = 18.0;
    const LABEL_W: f64 = 170.0;
    const TOP: f64 = 40.0;
    let axis_x = WIDTH / 2.0;
    let half = WIDTH / 2.0 - LABEL_W - 10.0;
    let max_abs = left
        .iter()
        .chain(right)
        .map(|t| t.value.abs())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let rows = left.len() + right.len();
    let height = TOP + ROW * (rows as f64 + 1.0) + 20.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{axis_x}" y="20" text-anchor="middle" font-size="14" font-weight="bold">{}</text>"#,
        xml_escape(title)
    );
    let mut y = TOP;
    for (list, color, dir) in [(left, LEFT_COLOR, -1.0), (right, RIGHT_COLOR, 1.0)] {
        for t in list {
            let len = t.value.abs() / max_abs * half;
            let x = if dir < 0.0 { axis_x - len } else { axis_x };
            let (label_x, anchor) = if dir < 0.0 {
                (axis_x - len - 4.0, "end")
            } else {
                (axis_x + len + 4.0, "start")
            };
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{:.2}" width="{len:.2}" height="{:.2}" fill="{color}"><title>{}: {}</title></rect>"#,
                y + 2.0,
                ROW - 4.0,
                xml_escape(&t.term),
                t.value
            );
            let _ = writeln!(
                s,
                r#"<text x="{label_x:.2}" y="{:.2}" text-anchor="{anchor}">{}</text>"#,
                y + ROW - 5.0,
                xml_escape(&t.term)
            );
            y += ROW;
        }
        y += ROW / 2.0;
    }
    let _ = writeln!(
        s,
        r##"<line x1="{axis_x}" y1="{TOP}" x2="{axis_x}" y2="{:.2}" stroke="#333" stroke-width="1"/>"##,
        y - ROW / 2.0
    );
    s.push_str("</svg>\n");
    s
}

pub fn importance_svg(report: &ImportanceReport) -> String {
    two_sided_bar_svg("SVM feature importance", &report.left_terms, &report.right_terms)
}

pub fn aggregate_svg(report: &AggregateReport) -> String {
    let title = match report.mode {
        crate::explain::AggregationMode::MaxMin => "Minimum and maximum Shapley values",
        crate::explain::AggregationMode::TotalSum => "Total Shapley values",
    };
    two_sided_bar_svg(title, &report.left_tokens, &report.right_tokens)
}

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

/// Pie chart of keyword shares with a legend. Zero shares are listed in the
/// legend but draw no slice.
pub fn keyword_pie_svg(title: &str, shares: &[(String, usize, f64)]) -> String {
    let (cx, cy, r) = (160.0_f64, 180.0_f64, 130.0_f64);
    let height = (60.0 + 18.0 * shares.len() as f64).max(340.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="560" height="{height}" viewBox="0 0 560 {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="280" y="22" text-anchor="middle" font-size="14" font-weight="bold">{}</text>"#,
        xml_escape(title)
    );
    let mut angle = -std::f64::consts::FRAC_PI_2;
    for (i, (k, _, share)) in shares.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if *share >= 1.0 - 1e-12 {
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="{r}" fill="{color}"/>"#);
        } else if *share > 0.0 {
            let sweep = share * std::f64::consts::TAU;
            let (x0, y0) = (cx + r * angle.cos(), cy + r * angle.sin());
            let end = angle + sweep;
            let (x1, y1) = (cx + r * end.cos(), cy + r * end.sin());
            let large = (sweep > std::f64::consts::PI) as u8;
            let _ = writeln!(
                s,
                r#"<path d="M {cx} {cy} L {x0:.3} {y0:.3} A {r} {r} 0 {large} 1 {x1:.3} {y1:.3} Z" fill="{color}" stroke="white"><title>{}: {:.1}%</title></path>"#,
                xml_escape(k),
                share * 100.0
            );
            angle = end;
        }
        let ly = 50.0 + 18.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="320" y="{:.1}" width="12" height="12" fill="{color}"/>"#, ly - 10.0);
        let _ = writeln!(
            s,
            r#"<text x="338" y="{ly:.1}">{} ({:.1}%)</text>"#,
            xml_escape(k),
            share * 100.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Corpus statistics as an aligned two-column table.
pub fn stats_table(topic: &str, stats: &CorpusStats) -> String {
    let rows = [
        ("Topic", topic.to_string()),
        ("Parties", stats.n_parties.to_string()),
        ("Speakers", stats.n_speakers_total.to_string()),
        ("Speakers (left / right)", format!("{} / {}", stats.n_speakers_left, stats.n_speakers_right)),
        ("Speeches", stats.n_speeches_total.to_string()),
        ("Speeches (left / right)", format!("{} / {}", stats.n_speeches_left, stats.n_speeches_right)),
        (
            "Share (left / right)",
            format!("{:.1}% / {:.1}%", stats.share_left * 100.0, stats.share_right * 100.0),
        ),
        ("AWS", format!("{:.1}", stats.avg_words_per_speech)),
        ("MSS", format!("{:.1}", stats.median_speeches_per_speaker)),
    ];
    aligned(&rows.iter().map(|(a, b)| vec![a.to_string(), b.clone()]).collect::<Vec<_>>())
}

/// Model accuracies with confidence half-widths, followed by the majority
/// baseline of the first report.
pub fn accuracy_table(reports: &[CvReport]) -> String {
    let mut rows = vec![vec!["Model".to_string(), "Accuracy".to_string()]];
    for r in reports {
        rows.push(vec![
            r.model_name.clone(),
            format!("{:.3} ± {:.3}", r.mean_accuracy, r.ci95_half_width),
        ]);
    }
    if let Some(r) = reports.first() {
        rows.push(vec!["Majority baseline".to_string(), format!("{:.3}", r.baseline_accuracy)]);
    }
    aligned(&rows)
}

/// Left-aligned columns separated by two spaces.
pub fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:<w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(term: &str, value: f64) -> RankedTerm {
        RankedTerm { term: term.into(), value }
    }

    #[test]
    fn csv_layout() {
        let out = ranked_csv(&[t("a,b", -1.5)], &[t("c", 2.0), t("d", 0.5)]);
        assert_eq!(out, "rank,term,value,side\n1,\"a,b\",-1.5,left\n1,c,2,right\n2,d,0.5,right\n");
    }

    #[test]
    fn svg_escapes_and_colors() {
        let svg = two_sided_bar_svg("x<y", &[t("a&b", -1.0)], &[t("c", 0.5)]);
        assert!(svg.contains("x&lt;y"));
        assert!(svg.contains("a&amp;b"));
        assert!(svg.contains(LEFT_COLOR) && svg.contains(RIGHT_COLOR));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn pie_handles_single_slice() {
        let svg = keyword_pie_svg("k", &[("a".into(), 3, 1.0), ("b".into(), 0, 0.0)]);
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("<path"));
        assert!(svg.contains("b (0.0%)"));
    }

    #[test]
    fn aligned_columns() {
        let out = aligned(&[vec!["a".into(), "1".into()], vec!["long".into(), "2".into()]]);
        assert_eq!(out, "a     1\nlong  2\n");
    }
}
