//! Prediction ribbon rendering: per-frame label tracks as an SVG.
//!
//! Four horizontal tracks share a common time axis: ground-truth steps,
//! predicted steps, ground-truth phases, and a phase-error track marking
//! frames where the phase derived from the predicted steps (ontology lookup
//! with preceding-frame disambiguation) disagrees with the ground truth.

use std::path::Path;

use crate::ontology::Ontology;

use super::HarnessError;

/// Horizontal scale; every track is exactly T × this constant wide.
pub const PIXELS_PER_FRAME: f64 = 3.0;

const TRACK_HEIGHT: f64 = 22.0;
const TRACK_GAP: f64 = 10.0;
const LEFT_MARGIN: f64 = 170.0;
const TOP_MARGIN: f64 = 16.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Deterministic palette: evenly spaced hues at fixed saturation/lightness.
fn class_color(index: usize, total: usize) -> String {
    let hue = 360.0 * index as f64 / total.max(1) as f64;
    let (s, l): (f64, f64) = (0.62, 0.52);
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = hue / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to_byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    format!("#{:02x}{:02x}{:02x}", to_byte(r1), to_byte(g1), to_byte(b1))
}

fn runs(labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..=labels.len() {
        if t == labels.len() || labels[t] != labels[start] {
            out.push((labels[start], start, t - start));
            start = t;
        }
    }
    out
}

fn label_track(
    svg: &mut String,
    id: &str,
    caption: &str,
    labels: &[usize],
    total_classes: usize,
    y: f64,
) {
    svg.push_str(&format!("  <g class=\"track\" id=\"track-{id}\">\n"));
    svg.push_str(&format!(
        "    <text x=\"4\" y=\"{:.1}\">{}</text>\n",
        y + TRACK_HEIGHT * 0.7,
        xml_escape(caption)
    ));
    for (label, start, len) in runs(labels) {
        svg.push_str(&format!(
            "    <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>\n",
            LEFT_MARGIN + start as f64 * PIXELS_PER_FRAME,
            y,
            len as f64 * PIXELS_PER_FRAME,
            TRACK_HEIGHT,
            class_color(label, total_classes)
        ));
    }
    svg.push_str("  </g>\n");
}

/// Renders the four-track ribbon for one video and writes it to `path`.
pub fn emit_ribbon_svg(
    ontology: &Ontology,
    gt_steps: &[usize],
    pred_steps: &[usize],
    gt_phases: &[usize],
    derived_pred_phases: &[usize],
    path: &Path,
) -> Result<(), HarnessError> {
    let t_len = gt_steps.len();
    if t_len == 0 {
        return Err(HarnessError::Spec("ribbon needs at least one frame".into()));
    }
    for (name, labels) in [
        ("pred_steps", pred_steps),
        ("gt_phases", gt_phases),
        ("derived_pred_phases", derived_pred_phases),
    ] {
        if labels.len() != t_len {
            return Err(HarnessError::Spec(format!(
                "{name} has {} frames, ground truth has {t_len}",
                labels.len()
            )));
        }
    }
    let steps = ontology.num_steps();
    let phases = ontology.num_phases();
    for &s in gt_steps.iter().chain(pred_steps) {
        if s >= steps {
            return Err(HarnessError::Spec(format!("step label {s} out of range")));
        }
    }
    for &p in gt_phases.iter().chain(derived_pred_phases) {
        if p >= phases {
            return Err(HarnessError::Spec(format!("phase label {p} out of range")));
        }
    }

    let width = LEFT_MARGIN + t_len as f64 * PIXELS_PER_FRAME + 12.0;
    let track_y = |i: usize| TOP_MARGIN + i as f64 * (TRACK_HEIGHT + TRACK_GAP);

    // Legend lists only the classes that actually occur.
    let mut step_seen: Vec<bool> = vec![false; steps];
    for &s in gt_steps.iter().chain(pred_steps) {
        step_seen[s] = true;
    }
    let mut phase_seen: Vec<bool> = vec![false; phases];
    for &p in gt_phases.iter().chain(derived_pred_phases) {
        phase_seen[p] = true;
    }
    let legend_entries: Vec<(String, String)> = (0..steps)
        .filter(|&s| step_seen[s])
        .map(|s| {
            (
                class_color(s, steps),
                ontology.step_names()[s].clone(),
            )
        })
        .chain((0..phases).filter(|&p| phase_seen[p]).map(|p| {
            (
                class_color(p, phases),
                format!("phase: {}", ontology.phase_names()[p]),
            )
        }))
        .collect();
    let legend_y = track_y(4) + 8.0;
    let legend_rows = legend_entries.len().div_ceil(3);
    let height = legend_y + legend_rows as f64 * 18.0 + 12.0;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    ));
    svg.push_str(
        "  <style>text { font-family: sans-serif; font-size: 11px; fill: #222; }</style>\n",
    );

    label_track(&mut svg, "gt-steps", "steps (ground truth)", gt_steps, steps, track_y(0));
    label_track(&mut svg, "pred-steps", "steps (predicted)", pred_steps, steps, track_y(1));
    label_track(&mut svg, "gt-phases", "phases (ground truth)", gt_phases, phases, track_y(2));

    // Phase-error track: light background plus a red mark per wrong frame.
    let y = track_y(3);
    svg.push_str("  <g class=\"track\" id=\"track-phase-errors\">\n");
    svg.push_str(&format!(
        "    <text x=\"4\" y=\"{:.1}\">phase errors (from predicted steps)</text>\n",
        y + TRACK_HEIGHT * 0.7
    ));
    svg.push_str(&format!(
        "    <rect class=\"bg\" x=\"{LEFT_MARGIN:.1}\" y=\"{y:.1}\" width=\"{:.1}\" \
         height=\"{TRACK_HEIGHT:.1}\" fill=\"#eeeeee\"/>\n",
        t_len as f64 * PIXELS_PER_FRAME
    ));
    let errors: Vec<usize> = (0..t_len)
        .map(|t| usize::from(derived_pred_phases[t] != gt_phases[t]))
        .collect();
    for (value, start, len) in runs(&errors) {
        if value == 1 {
            svg.push_str(&format!(
                "    <rect class=\"err\" x=\"{:.1}\" y=\"{y:.1}\" width=\"{:.1}\" \
                 height=\"{TRACK_HEIGHT:.1}\" fill=\"#c0202a\"/>\n",
                LEFT_MARGIN + start as f64 * PIXELS_PER_FRAME,
                len as f64 * PIXELS_PER_FRAME,
            ));
        }
    }
    svg.push_str("  </g>\n");

    svg.push_str("  <g id=\"legend\">\n");
    for (i, (color, name)) in legend_entries.iter().enumerate() {
        let x = LEFT_MARGIN + (i % 3) as f64 * 230.0;
        let y = legend_y + (i / 3) as f64 * 18.0;
        svg.push_str(&format!(
            "    <rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n"
        ));
        svg.push_str(&format!(
            "    <text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            x + 16.0,
            y + 10.0,
            xml_escape(name)
        ));
    }
    svg.push_str("  </g>\n</svg>\n");

    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::builtin_cataracts_ontology;

    fn render(
        gt_steps: &[usize],
        pred_steps: &[usize],
    ) -> (tempfile::TempDir, String) {
        let o = builtin_cataracts_ontology();
        let gt_phases = o.derive_phase_labels(gt_steps).unwrap();
        let derived = o.derive_phase_labels(pred_steps).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ribbon.svg");
        emit_ribbon_svg(&o, gt_steps, pred_steps, &gt_phases, &derived, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        (dir, text)
    }

    #[test]
    fn well_formed_with_exactly_four_tracks() {
        let gt = [1usize, 1, 3, 3, 8, 8, 8, 16, 16];
        let pred = [1usize, 1, 1, 3, 8, 9, 8, 16, 17];
        let (_dir, svg) = render(&gt, &pred);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let tracks: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("track"))
            .collect();
        assert_eq!(tracks.len(), 4);
        assert!(doc
            .descendants()
            .any(|n| n.attribute("id") == Some("legend")));
    }

    #[test]
    fn perfect_prediction_has_empty_error_track() {
        let gt = [1usize, 1, 5, 5, 8, 8, 16, 16];
        let (_dir, svg) = render(&gt, &gt);
        assert!(!svg.contains("class=\"err\""));
    }

    #[test]
    fn cross_phase_mistake_is_marked() {
        // Ground truth sits in Phacoemulsification (step 8, phase 2); the
        // middle frame predicts Suturing (step 16, phase 4).
        let gt = [8usize, 8, 8];
        let pred = [8usize, 16, 8];
        let (_dir, svg) = render(&gt, &pred);
        let err_count = svg.matches("class=\"err\"").count();
        assert_eq!(err_count, 1);
    }

    #[test]
    fn track_width_scales_with_frames() {
        let gt = vec![8usize; 50];
        let (_dir, svg) = render(&gt, &gt);
        let expected = format!("width=\"{:.1}\"", 50.0 * PIXELS_PER_FRAME);
        assert!(svg.contains(&expected));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let o = builtin_cataracts_ontology();
        let dir = tempfile::tempdir().unwrap();
        let err = emit_ribbon_svg(
            &o,
            &[1, 2],
            &[1],
            &[1, 1],
            &[1, 1],
            &dir.path().join("x.svg"),
        )
        .unwrap_err();
        assert!(matches!(err, HarnessError::Spec(_)));
    }
}
