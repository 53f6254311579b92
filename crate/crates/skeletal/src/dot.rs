//! Graphviz rendering of skeletons. The output is deterministic:
//! identical skeletons render to identical bytes.
//!
//! Layout: one column (cluster) per strand, nodes labelled `+msg` for
//! transmissions and `-msg` for receptions, double arrows for strand
//! succession, dashed arrows for declared order edges, and a note
//! listing the non and unique sets.

use std::fmt::Write as _;

use crate::protocol::Dir;
use crate::skeleton::Skeleton;

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Render a skeleton as a Graphviz digraph named `name`.
pub fn to_dot(sk: &Skeleton, name: &str) -> String {
    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", escape(name)).unwrap();
    writeln!(out, "  rankdir=TB;").unwrap();
    writeln!(out, "  node [shape=box, fontname=\"monospace\"];").unwrap();
    for (i, s) in sk.strands.iter().enumerate() {
        writeln!(out, "  subgraph cluster_s{i} {{").unwrap();
        writeln!(out, "    label=\"{} ({})\";", escape(&s.role_name), i).unwrap();
        for (p, (d, m)) in s.events.iter().enumerate() {
            let sign = match d {
                Dir::Send => '+',
                Dir::Recv => '-',
            };
            writeln!(out, "    n{i}_{} [label=\"{sign}{}\"];", p + 1, escape(&m.to_string()))
                .unwrap();
        }
        writeln!(out, "  }}").unwrap();
        // strand succession: double arrows
        for p in 1..s.length {
            writeln!(
                out,
                "  n{i}_{p} -> n{i}_{} [style=bold, arrowhead=normalnormal];",
                p + 1
            )
            .unwrap();
        }
    }
    for (a, b) in &sk.order {
        writeln!(
            out,
            "  n{}_{} -> n{}_{} [style=dashed];",
            a.strand, a.pos, b.strand, b.pos
        )
        .unwrap();
    }
    let non: Vec<String> = sk.non.iter().map(|a| a.to_string()).collect();
    let unique: Vec<String> = sk.unique.iter().map(|a| a.to_string()).collect();
    writeln!(
        out,
        "  assumptions [shape=note, label=\"non: {}\\nunique: {}\"];",
        escape(&non.join(", ")),
        escape(&unique.join(", "))
    )
    .unwrap();
    writeln!(out, "}}").unwrap();
    out
}
