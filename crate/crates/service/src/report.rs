//! Plain-text renderings for the command line.

use std::fmt::Write;

use twin_core::level::HealthLevel;
use twin_core::rollup::IntegratedStatus;
use twin_core::timefmt;
use twin_core::workorder::WorkOrder;

use crate::engine::StatusView;

fn cell(level: Option<HealthLevel>) -> String {
    match level {
        Some(l) => format!("{} {:<6}", l.value(), format!("{:?}", l.color()).to_lowercase()),
        None => "-".to_string(),
    }
}

/// Indented tree of now / 3-month / 6-month levels down to user areas.
pub fn render_status(view: &StatusView) -> String {
    let mut out = String::new();
    let as_of = view.as_of.map_or_else(|| "no data".to_string(), |t| timefmt::format(&t));
    let _ = writeln!(out, "as of {as_of}");
    let _ = writeln!(out, "{:<44} {:<9} {:<9} {:<9}", "node", "now", "3 months", "6 months");
    fn go(node: &IntegratedStatus, depth: usize, out: &mut String) {
        let name = format!("{}{}", "  ".repeat(depth), node.id);
        let _ = writeln!(out, "{:<44} {:<9} {:<9} {:<9}", name, cell(node.now), cell(node.at_m3), cell(node.at_m6));
        for child in &node.children {
            if child.kind != twin_core::NodeKind::Parameter {
                go(child, depth + 1, out);
            }
        }
    }
    go(&view.building, 0, &mut out);
    out
}

pub fn render_orders(orders: &[WorkOrder]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<22} {:<4} {:<10} {:<20} {}", "id", "kind", "status", "due", "path");
    for o in orders {
        let _ = writeln!(
            out,
            "{:<22} {:<4} {:<10} {:<20} {}",
            o.id,
            format!("{:?}", o.kind),
            format!("{:?}", o.status),
            timefmt::format(&o.due_by),
            o.path
        );
    }
    out
}
