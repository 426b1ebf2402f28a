//! The symbols ledger: `docs/symbols.tsv` maps each mathematical symbol of
//! the model to the code that owns it.
//!
//! Columns are `symbol`, `owner`, `location`, `status` and `note`. Status is
//! `implemented` (owner required) or `out-of-scope` (note required). Lines
//! starting with `#` are comments.

use std::fmt;

pub const TABLE: &str = include_str!("../../../docs/symbols.tsv");

/// Every symbol the table must cover.
pub const REQUIRED: &[&str] = &[
    "μ", "δ", "α", "k", "M₁", "μ(s)ds", "γ", "K_μ", "Ω", "w_j", "λ_j", "λ₁", "P_n", "b_k", "u_n", "H", "V", "f", "p",
    "f₀", "a₀", "d₀", "M", "a", "m", "m̃", "l", "L_a(R)", "η^t", "η₀", "L²_μ(ℝ⁺;V)", "φ", "u_t", "e^{γs}", "L_V²",
    "𝒥", "𝓗", "X", "‖·‖_𝓗", "‖·‖_X", "z", "z₀", "g", "S(t)", "K₀", "K₁", "K₂", "K₅", "q", "ζ_j", "Q_n", "𝐓",
    "D(𝐓)", "𝓘", "N", "Ω₁",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Implemented,
    OutOfScope,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolEntry {
    pub symbol: String,
    pub owner: String,
    pub location: String,
    pub status: Status,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuditReport {
    pub entries: usize,
    pub duplicates: Vec<String>,
    pub missing: Vec<String>,
    pub unexpected: Vec<String>,
    /// malformed lines and entries without an owner or justification
    pub problems: Vec<String>,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.duplicates.is_empty() && self.missing.is_empty() && self.unexpected.is_empty() && self.problems.is_empty()
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pass() {
            return write!(f, "symbols ledger: {} entries, all symbols owned exactly once", self.entries);
        }
        writeln!(f, "symbols ledger audit failed:")?;
        for (what, list) in [
            ("duplicated", &self.duplicates),
            ("missing", &self.missing),
            ("not expected", &self.unexpected),
            ("problem", &self.problems),
        ] {
            for s in list {
                writeln!(f, "  {what}: {s}")?;
            }
        }
        Ok(())
    }
}

pub fn parse(table: &str) -> (Vec<SymbolEntry>, Vec<String>) {
    let mut entries = Vec::new();
    let mut problems = Vec::new();
    for (i, line) in table.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 || cols.len() > 5 {
            problems.push(format!("line {}: expected 4 or 5 tab-separated columns", i + 1));
            continue;
        }
        let status = match cols[3].trim() {
            "implemented" => Status::Implemented,
            "out-of-scope" => Status::OutOfScope,
            other => {
                problems.push(format!("line {}: unknown status `{other}`", i + 1));
                continue;
            }
        };
        entries.push(SymbolEntry {
            symbol: cols[0].trim().to_string(),
            owner: cols[1].trim().to_string(),
            location: cols[2].trim().to_string(),
            status,
            note: cols.get(4).map_or(String::new(), |s| s.trim().to_string()),
        });
    }
    (entries, problems)
}

pub fn audit_table(table: &str) -> AuditReport {
    let (entries, mut problems) = parse(table);
    let mut duplicates = Vec::new();
    let mut seen: Vec<&str> = Vec::new();
    for e in &entries {
        if seen.contains(&e.symbol.as_str()) {
            if !duplicates.contains(&e.symbol) {
                duplicates.push(e.symbol.clone());
            }
        } else {
            seen.push(&e.symbol);
        }
        match e.status {
            Status::Implemented if e.owner.is_empty() || e.owner == "-" => {
                problems.push(format!("{}: implemented but has no owner", e.symbol))
            }
            Status::OutOfScope if e.note.is_empty() => {
                problems.push(format!("{}: out of scope without a justification", e.symbol))
            }
            _ => {}
        }
    }
    let missing = REQUIRED.iter().filter(|s| !seen.contains(s)).map(|s| s.to_string()).collect();
    let unexpected = seen.iter().filter(|s| !REQUIRED.contains(s)).map(|s| s.to_string()).collect();
    AuditReport {
        entries: entries.len(),
        duplicates,
        missing,
        unexpected,
        problems,
    }
}

/// Audits the compiled-in table.
pub fn audit() -> AuditReport {
    audit_table(TABLE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_table_passes() {
        let r = audit();
        assert!(r.pass(), "{r}");
        assert_eq!(r.entries, REQUIRED.len());
    }

    #[test]
    fn removed_entry_is_named() {
        let table: String = TABLE.lines().filter(|l| !l.starts_with("K₅\t")).map(|l| format!("{l}\n")).collect();
        let r = audit_table(&table);
        assert!(!r.pass());
        assert_eq!(r.missing, vec!["K₅".to_string()]);
    }

    #[test]
    fn duplicated_entry_fails() {
        let dup = TABLE.lines().find(|l| l.starts_with("K₂\t")).unwrap();
        let table = format!("{TABLE}{dup}\n");
        let r = audit_table(&table);
        assert_eq!(r.duplicates, vec!["K₂".to_string()]);
        assert!(r.to_string().contains("duplicated: K₂"));
    }

    #[test]
    fn out_of_scope_needs_note() {
        let table = TABLE.replace(
            "𝓘\t-\tregularity operator into the H² history space\tout-of-scope\thigher regularity is proof-only content",
            "𝓘\t-\tregularity operator into the H² history space\tout-of-scope",
        );
        assert!(!audit_table(&table).pass());
    }
}
