use serde::Serialize;

/// Six decimal places. Exact binary ties round to even, so `0.0078125`
/// prints as `0.007812`.
pub fn format_fraction(x: f64) -> String {
    format!("{x:.6}")
}

/// Renders rows as CSV with a fixed header and `\n` line endings.
pub(crate) fn render<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
