//! Deterministic SVG output: trajectory overlays and HitRate-vs-k curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use trajkit_core::geometry::Point2;
use trajkit_core::metrics::{hitrate_curve, InstanceEval, PredictionSet};
use trajkit_core::scene::Trajectory;

use crate::ablation::RunRecord;

const ARM_COLORS: [&str; 6] = [
    "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
];
const GT_COLOR: &str = "#1f77b4";
const SET_COLOR: &str = "#b0b0b0";

/// One arm's trajectory to draw in an overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmTrajectory {
    pub name: String,
    pub trajectory: Trajectory,
}

impl ArmTrajectory {
    /// The prediction's most likely mode.
    pub fn from_prediction(name: &str, pred: &PredictionSet) -> Self {
        let best = pred.most_likely().expect("prediction sets are nonempty");
        Self {
            name: name.to_string(),
            trajectory: pred.trajectories()[best].clone(),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn arm_color(i: usize) -> &'static str {
    ARM_COLORS[i % ARM_COLORS.len()]
}

/// Agent-frame meters to canvas pixels: forward is up, +y (left) is left.
struct View {
    top_x: f64,
    left_y: f64,
    scale: f64,
    margin: f64,
}

impl View {
    fn fit<'a>(points: impl Iterator<Item = &'a Point2>, size: f64, margin: f64) -> Self {
        let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for p in points {
            lo_x = lo_x.min(p.x);
            hi_x = hi_x.max(p.x);
            lo_y = lo_y.min(p.y);
            hi_y = hi_y.max(p.y);
        }
        let span = (hi_x - lo_x).max(hi_y - lo_y).max(1.0) + 4.0;
        Self {
            top_x: 0.5 * (lo_x + hi_x) + span / 2.0,
            left_y: 0.5 * (lo_y + hi_y) + span / 2.0,
            scale: (size - 2.0 * margin) / span,
            margin,
        }
    }

    fn px(&self, p: Point2) -> (f64, f64) {
        (
            self.margin + (self.left_y - p.y) * self.scale,
            self.margin + (self.top_x - p.x) * self.scale,
        )
    }

    /// Polyline points from the agent origin through the trajectory.
    fn polyline(&self, t: &Trajectory) -> String {
        let mut s = String::new();
        for (i, p) in std::iter::once(Point2::new(0.0, 0.0))
            .chain(t.points().iter().copied())
            .enumerate()
        {
            let (c, r) = self.px(p);
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{c:.3},{r:.3}");
        }
        s
    }
}

fn legend_entry(out: &mut String, index: usize, color: &str, label: &str) {
    let y = 20 + 18 * index;
    let _ = writeln!(
        out,
        r#"<g class="legend-entry"><line x1="12" y1="{y}" x2="32" y2="{y}" stroke="{color}" stroke-width="3"/><text x="38" y="{}" font-size="12" font-family="sans-serif">{}</text></g>"#,
        y + 4,
        escape(label)
    );
}

const OVERLAY_SIZE: f64 = 480.0;

/// Trajectory set in gray, ground truth in blue, one colored polyline per arm.
pub fn overlay_svg(gt: &Trajectory, background: &[Trajectory], arms: &[ArmTrajectory]) -> String {
    let all = background
        .iter()
        .chain(std::iter::once(gt))
        .chain(arms.iter().map(|a| &a.trajectory))
        .flat_map(|t| t.points().iter());
    let view = View::fit(all, OVERLAY_SIZE, 20.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = OVERLAY_SIZE
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<g class="trajectory-set" fill="none" stroke="{SET_COLOR}" stroke-width="0.7">"#
    );
    for t in background {
        let _ = writeln!(out, r#"<polyline points="{}"/>"#, view.polyline(t));
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        r#"<polyline class="ground-truth" fill="none" stroke="{GT_COLOR}" stroke-width="2.5" points="{}"/>"#,
        view.polyline(gt)
    );
    for (i, arm) in arms.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<polyline class="arm" data-arm="{}" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            escape(&arm.name),
            arm_color(i),
            view.polyline(&arm.trajectory)
        );
    }
    let (c, r) = view.px(Point2::new(0.0, 0.0));
    let _ = writeln!(
        out,
        r#"<circle cx="{c:.3}" cy="{r:.3}" r="4" fill="black"/>"#
    );
    legend_entry(&mut out, 0, GT_COLOR, "ground truth");
    for (i, arm) in arms.iter().enumerate() {
        legend_entry(&mut out, i + 1, arm_color(i), &arm.name);
    }
    out.push_str("</svg>\n");
    out
}

/// HitRate_{k,d} for k = 1..=k_max per arm, pooling the instances of all its seeds.
pub fn hitrate_curves(
    records: &[RunRecord],
    d: f64,
    k_max: usize,
) -> Vec<(String, Vec<(usize, f64)>)> {
    let mut by_arm: BTreeMap<&str, Vec<(u64, &[InstanceEval])>> = BTreeMap::new();
    for r in records {
        by_arm
            .entry(&r.arm)
            .or_default()
            .push((r.seed, &r.report.instances));
    }
    by_arm
        .into_iter()
        .map(|(arm, mut runs)| {
            runs.sort_by_key(|(s, _)| *s);
            let pooled: Vec<InstanceEval> =
                runs.iter().flat_map(|(_, e)| e.iter().cloned()).collect();
            (arm.to_string(), hitrate_curve(&pooled, d, k_max))
        })
        .collect()
}

const CURVE_W: f64 = 640.0;
const CURVE_H: f64 = 400.0;
const CURVE_MARGIN: f64 = 50.0;

/// One curve per arm, k on the x-axis and HitRate on the y-axis. Each curve
/// carries its exact values in a `data-values` attribute.
pub fn hitrate_svg(records: &[RunRecord], d: f64, k_max: usize) -> String {
    let curves = hitrate_curves(records, d, k_max.max(1));
    let k_max = k_max.max(1);
    let plot_w = CURVE_W - 2.0 * CURVE_MARGIN;
    let plot_h = CURVE_H - 2.0 * CURVE_MARGIN;
    let x = |k: usize| {
        if k_max == 1 {
            CURVE_MARGIN + plot_w / 2.0
        } else {
            CURVE_MARGIN + (k - 1) as f64 / (k_max - 1) as f64 * plot_w
        }
    };
    let y = |v: f64| CURVE_MARGIN + (1.0 - v) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CURVE_W}" height="{CURVE_H}" viewBox="0 0 {CURVE_W} {CURVE_H}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}"/></g>"#,
        m = CURVE_MARGIN,
        b = CURVE_H - CURVE_MARGIN,
        r = CURVE_W - CURVE_MARGIN
    );
    for k in 1..=k_max {
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{}" font-size="11" font-family="sans-serif" text-anchor="middle">{k}</text>"#,
            x(k),
            CURVE_H - CURVE_MARGIN + 16.0
        );
    }
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.3}" font-size="11" font-family="sans-serif" text-anchor="end">{tick:.2}</text>"#,
            CURVE_MARGIN - 6.0,
            y(tick) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" font-family="sans-serif" text-anchor="middle">k (top-k modes), d = {d} m</text>"#,
        CURVE_W / 2.0,
        CURVE_H - 12.0
    );
    for (i, (arm, curve)) in curves.iter().enumerate() {
        let pts: Vec<String> = curve
            .iter()
            .map(|&(k, v)| format!("{:.3},{:.3}", x(k), y(v)))
            .collect();
        let values: Vec<String> = curve.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="curve" data-arm="{}" data-values="{}" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            escape(arm),
            values.join(","),
            arm_color(i),
            pts.join(" ")
        );
    }
    for (i, (arm, _)) in curves.iter().enumerate() {
        legend_entry(&mut out, i, arm_color(i), arm);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(dx: f64, dy: f64) -> Trajectory {
        Trajectory::prediction(
            (1..=12)
                .map(|i| Point2::new(dx * i as f64, dy * i as f64))
                .collect(),
        )
        .unwrap()
    }

    fn attr<'a>(svg: &'a str, marker: &str, name: &str) -> Vec<&'a str> {
        svg.lines()
            .filter(|l| l.contains(marker))
            .map(|l| {
                let start = l.find(&format!(" {name}=\"")).unwrap() + name.len() + 3;
                &l[start..start + l[start..].find('"').unwrap()]
            })
            .collect()
    }

    #[test]
    fn perfect_arm_traces_ground_truth() {
        let gt = traj(1.0, 0.1);
        let arms = [ArmTrajectory {
            name: "exact".into(),
            trajectory: gt.clone(),
        }];
        let svg = overlay_svg(&gt, &[traj(1.0, 0.0), traj(0.8, 0.3)], &arms);
        let gt_pts = attr(&svg, "class=\"ground-truth\"", "points");
        let arm_pts = attr(&svg, "class=\"arm\"", "points");
        assert_eq!(gt_pts, arm_pts);
        assert_eq!(svg.matches("class=\"legend-entry\"").count(), 2);
    }

    #[test]
    fn empty_arm_list_draws_gt_and_background() {
        let svg = overlay_svg(&traj(1.0, 0.0), &[traj(1.0, 0.2)], &[]);
        assert_eq!(svg.matches("class=\"arm\"").count(), 0);
        assert_eq!(svg.matches("class=\"ground-truth\"").count(), 1);
        assert!(svg.contains("class=\"trajectory-set\""));
        assert_eq!(svg, overlay_svg(&traj(1.0, 0.0), &[traj(1.0, 0.2)], &[]));
    }

    #[test]
    fn forward_is_up() {
        let view = View::fit([Point2::new(10.0, 0.0)].iter(), 100.0, 0.0);
        let (_, r0) = view.px(Point2::new(0.0, 0.0));
        let (_, r1) = view.px(Point2::new(10.0, 0.0));
        assert!(r1 < r0);
        let (cl, _) = view.px(Point2::new(0.0, 1.0));
        let (cr, _) = view.px(Point2::new(0.0, -1.0));
        assert!(cl < cr);
    }
}
