//! Reliability diagram rendering: a unit square with the diagonal reference
//! line and one marker per occupied bin at (mean predicted, fraction
//! positive), sized by the bin's share of the evaluation points.

use bincal::evaluation::ReliabilityReport;

use crate::io::fmt_f64;

const SIZE: f64 = 440.0;
const MARGIN: f64 = 40.0;

fn x(v: f64) -> f64 {
    MARGIN + v * (SIZE - 2.0 * MARGIN)
}

fn y(v: f64) -> f64 {
    SIZE - MARGIN - v * (SIZE - 2.0 * MARGIN)
}

pub fn reliability_diagram(report: &ReliabilityReport) -> String {
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        x(0.0),
        y(0.0),
        x(1.0),
        y(0.0)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        x(0.0),
        y(0.0),
        x(0.0),
        y(1.0)
    ));
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            x(tick),
            y(0.0) + 16.0,
            tick
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            x(0.0) - 6.0,
            y(tick) + 4.0,
            tick
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">mean predicted</text>\n",
        x(0.5),
        SIZE - 6.0
    ));
    svg.push_str(&format!(
        "<text x=\"12\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 {})\">fraction positive</text>\n",
        y(0.5),
        y(0.5)
    ));
    // Diagonal reference.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"5,4\"/>\n",
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    ));
    for bin in report.bins() {
        let (Some(mp), Some(fp)) = (bin.mean_predicted, bin.fraction_positive) else {
            continue;
        };
        let radius = 2.5 + 9.0 * bin.proportion.sqrt();
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"steelblue\" fill-opacity=\"0.75\"/>\n",
            x(mp),
            y(fp),
            radius
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">ece={}</text>\n",
        x(0.02),
        y(0.97),
        fmt_f64(report.ece())
    ));
    svg.push_str("</svg>\n");
    svg
}
