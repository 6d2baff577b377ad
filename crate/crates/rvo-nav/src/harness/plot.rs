//! Trajectory plots as standalone SVG documents.
//!
//! Rendering is a pure function of the record, so the same input always
//! produces byte-identical output.

use crate::world::{DoneReason, EpisodeRecord};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const SCALE: f64 = 60.0; // px per metre
const MARGIN_M: f64 = 1.0;

/// Render per-robot trajectories with start markers, goal crosses where the
/// robot arrived, and a disc of the given robot radius at each final
/// position. Axes are labeled in metres.
pub fn render_svg(record: &EpisodeRecord, robot_radius: f64) -> String {
    let mut tracks: Vec<Vec<(f64, f64)>> = vec![Vec::new(); record.robot_count];
    let mut last_reason = vec![DoneReason::Running; record.robot_count];
    for row in &record.rows {
        tracks[row.robot_id].push((row.x, row.y));
        last_reason[row.robot_id] = row.done_reason;
    }
    let xs = record.rows.iter().map(|r| r.x);
    let ys = record.rows.iter().map(|r| r.y);
    let min_x = xs.clone().fold(f64::INFINITY, f64::min) - MARGIN_M;
    let max_x = xs.fold(f64::NEG_INFINITY, f64::max) + MARGIN_M;
    let min_y = ys.clone().fold(f64::INFINITY, f64::min) - MARGIN_M;
    let max_y = ys.fold(f64::NEG_INFINITY, f64::max) + MARGIN_M;
    let width = ((max_x - min_x) * SCALE).ceil();
    let height = ((max_y - min_y) * SCALE).ceil();
    let px = |x: f64| (x - min_x) * SCALE;
    let py = |y: f64| (max_y - y) * SCALE; // world y up, svg y down

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\" stroke=\"#333\"/>\n"
    ));
    // Metre grid with axis labels.
    let mut gx = min_x.ceil();
    while gx <= max_x {
        svg.push_str(&format!(
            "<line x1=\"{0:.2}\" y1=\"0\" x2=\"{0:.2}\" y2=\"{height:.0}\" stroke=\"#eee\"/>\n",
            px(gx)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" font-family=\"monospace\" fill=\"#666\">{gx:.0}m</text>\n",
            px(gx) + 2.0,
            height - 4.0
        ));
        gx += 2.0;
    }
    let mut gy = min_y.ceil();
    while gy <= max_y {
        svg.push_str(&format!(
            "<line x1=\"0\" y1=\"{0:.2}\" x2=\"{width:.0}\" y2=\"{0:.2}\" stroke=\"#eee\"/>\n",
            py(gy)
        ));
        svg.push_str(&format!(
            "<text x=\"4\" y=\"{:.2}\" font-size=\"10\" font-family=\"monospace\" fill=\"#666\">{gy:.0}m</text>\n",
            py(gy) - 2.0
        ));
        gy += 2.0;
    }
    for (id, track) in tracks.iter().enumerate() {
        if track.is_empty() {
            continue;
        }
        let color = PALETTE[id % PALETTE.len()];
        let points: Vec<String> =
            track.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            points.join(" ")
        ));
        let (sx, sy) = track[0];
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            px(sx),
            py(sy)
        ));
        let (fx, fy) = *track.last().expect("non-empty track");
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.3\" stroke=\"{color}\"/>\n",
            px(fx),
            py(fy),
            robot_radius * SCALE
        ));
        if last_reason[id] == DoneReason::Arrived {
            // The final position of an arrived robot is its goal.
            let (cx, cy) = (px(fx), py(fy));
            let d = 5.0;
            svg.push_str(&format!(
                "<path d=\"M {:.2} {:.2} L {:.2} {:.2} M {:.2} {:.2} L {:.2} {:.2}\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                cx - d, cy - d, cx + d, cy + d, cx - d, cy + d, cx + d, cy - d
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec2::Vec2;
    use crate::world::{run_episode, Observation, Policy, RobotState, World, WorldConfig};

    struct GoalChaser;
    impl Policy for GoalChaser {
        fn act(&mut self, _id: usize, obs: &Observation) -> Vec2 {
            obs.desired_velocity() - obs.velocity()
        }
    }

    fn sample_record() -> EpisodeRecord {
        let mut a = RobotState::at(Vec2::new(-2.0, 1.0), 0.0, Vec2::new(2.0, 1.0));
        a.id = 0;
        let mut b = RobotState::at(Vec2::new(-2.0, -1.0), 0.0, Vec2::new(2.0, -1.0));
        b.id = 1;
        let mut world = World::from_states(vec![a, b], vec![], WorldConfig::default());
        run_episode(&mut world, &mut GoalChaser, 300)
    }

    #[test]
    fn two_robot_record_renders_two_polylines() {
        let svg = render_svg(&sample_record(), 0.2);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let record = sample_record();
        assert_eq!(render_svg(&record, 0.2), render_svg(&record, 0.2));
    }

    #[test]
    fn arrived_robots_get_goal_crosses() {
        let svg = render_svg(&sample_record(), 0.2);
        assert_eq!(svg.matches("<path d=").count(), 2);
    }
}
