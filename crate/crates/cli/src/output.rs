//! Plot-ready output: RFC-4180 CSV with full double-precision round-trip
//! (17 significant digits) and pretty JSON summaries.

use std::io::Write;
use std::path::Path;

use crate::CliError;

/// Format a float with 17 significant digits so re-reading reproduces the
/// exact bit pattern.
pub fn full_precision(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a CSV file with a header row and full-precision float cells.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", path.display())))?;
    writeln!(file, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| full_precision(*x)).collect();
        writeln!(file, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Write a serializable summary as pretty JSON and echo it to stdout.
pub fn emit_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Solver(format!("JSON encoding failed: {e}")))?;
    std::fs::write(path, format!("{text}\n"))
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
    println!("{text}");
    Ok(())
}

/// Parse a decision CSV produced by `solve` back into its columns.
pub fn read_csv_columns(path: &Path, expected_header: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Validation("empty CSV".into()))?;
    if header != expected_header.join(",") {
        return Err(CliError::Validation(format!(
            "unexpected CSV header `{header}`"
        )));
    }
    let mut columns = vec![Vec::new(); expected_header.len()];
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != expected_header.len() {
            return Err(CliError::Validation(format!(
                "row {} has {} cells, expected {}",
                i + 2,
                cells.len(),
                expected_header.len()
            )));
        }
        for (column, cell) in columns.iter_mut().zip(cells) {
            let value: f64 = cell.parse().map_err(|e| {
                CliError::Validation(format!("row {}: bad float `{cell}`: {e}", i + 2))
            })?;
            column.push(value);
        }
    }
    Ok(columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_precision_round_trips() {
        for x in [0.1, std::f64::consts::PI, 2.595155717701e-7, -1234.5678901234567] {
            let parsed: f64 = full_precision(x).parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits());
        }
    }
}
