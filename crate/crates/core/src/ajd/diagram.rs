//! DOT export of the machine/workplace topology declared by an AJD.
//!
//! Node styling encodes domain nature: the machine (and any sub-performers)
//! get a doubled border, biddable domains a dashed border, causal domains a
//! solid box, lexical domains a note shape. Edge styling encodes the flow:
//! solid for direct interaction (capabilities, confirm requests), dotted for
//! callback channels, dashed for context injection.

use std::fmt::Write;

use super::{AjdSpec, DomainKind};

/// Render the spec as DOT text. Output is byte-identical across runs for the
/// same spec: nodes are emitted in lexicographic id order and edges in a
/// fixed section order.
pub fn export_apf_diagram(spec: &AjdSpec) -> String {
    let mut out = String::new();
    let machine = sanitize(&spec.meta.name);

    writeln!(out, "digraph {machine} {{").unwrap();
    writeln!(out, "    rankdir=LR;").unwrap();
    writeln!(out, "    node [fontsize=10];").unwrap();
    writeln!(out).unwrap();

    // The performing machine, doubled border.
    writeln!(
        out,
        "    {machine} [shape=box peripheries=2 label=\"{}\"];",
        escape(&spec.meta.name)
    )
    .unwrap();

    // Sub-performers are machines too.
    let mut subs: Vec<&str> = spec
        .scope
        .sub_performers
        .iter()
        .map(|s| s.id.as_str())
        .collect();
    subs.sort_unstable();
    for sub in &subs {
        writeln!(
            out,
            "    {} [shape=box peripheries=2 label=\"{}\"];",
            sanitize(sub),
            escape(sub)
        )
        .unwrap();
    }

    let mut domains: Vec<_> = spec.workplace.iter().collect();
    domains.sort_by(|a, b| a.id.cmp(&b.id));
    for d in &domains {
        if subs.contains(&d.id.as_str()) {
            continue; // already drawn as a machine node
        }
        let attrs = match d.kind {
            DomainKind::Causal => "shape=box",
            DomainKind::Biddable => "shape=box style=dashed",
            DomainKind::Lexical => "shape=note",
        };
        writeln!(
            out,
            "    {} [{attrs} label=\"{}\"];",
            sanitize(&d.id),
            escape(&d.id)
        )
        .unwrap();
    }
    writeln!(out).unwrap();

    // Direct interaction: machine projects capabilities onto targets.
    let mut targets: Vec<&str> = spec
        .operational_context
        .capabilities
        .iter()
        .map(|c| c.target.as_str())
        .collect();
    targets.sort_unstable();
    targets.dedup();
    for t in targets {
        writeln!(out, "    {machine} -> {};", sanitize(t)).unwrap();
    }

    // Confirm requests are direct interactions with the approver.
    let mut approvers: Vec<&str> = spec
        .evaluation
        .confirms
        .iter()
        .map(|c| c.approver.as_str())
        .collect();
    approvers.sort_unstable();
    approvers.dedup();
    for a in approvers {
        writeln!(out, "    {machine} -> {} [label=\"confirm\"];", sanitize(a)).unwrap();
    }

    // Sub-performer link: delegation out, reports back.
    for sub in &subs {
        writeln!(out, "    {machine} -> {};", sanitize(sub)).unwrap();
        writeln!(out, "    {} -> {machine} [style=dotted];", sanitize(sub)).unwrap();
    }

    // Callback channels feed the machine, dotted.
    let mut channels: Vec<&str> = spec
        .evaluation
        .callbacks
        .iter()
        .map(|c| c.channel.as_str())
        .collect();
    channels.sort_unstable();
    channels.dedup();
    for c in channels {
        writeln!(out, "    {} -> {machine} [style=dotted];", sanitize(c)).unwrap();
    }

    // Context injection flows, dashed.
    let mut sources: Vec<&str> = spec
        .operational_context
        .contexts
        .iter()
        .map(|c| c.domain.as_str())
        .collect();
    sources.sort_unstable();
    sources.dedup();
    for s in sources {
        writeln!(out, "    {} -> {machine} [style=dashed];", sanitize(s)).unwrap();
    }

    writeln!(out, "}}").unwrap();
    out
}

fn sanitize(id: &str) -> String {
    let mut s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if s.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        s.insert(0, '_');
    }
    s
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}
