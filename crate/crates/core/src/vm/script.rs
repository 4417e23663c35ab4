use serde::Serialize;
use thiserror::Error;

use super::{Gas, Outcome, Transaction, TxOutcome};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("transaction script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

/// One JSON object per line; blank lines and `#` comments are skipped.
pub fn parse_script(text: &str) -> Result<Vec<Transaction>, ScriptError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tx = serde_json::from_str(line).map_err(|e| ScriptError {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(tx);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TxGasLine {
    pub index: usize,
    pub transaction: String,
    pub outcome: &'static str,
    pub exec_gas: u64,
    pub check_gas: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revert_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check_id: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GasTotals {
    pub exec_gas: u64,
    pub check_gas: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GasReport {
    pub per_tx: Vec<TxGasLine>,
    pub totals: GasTotals,
}

impl GasReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gas report serializes")
    }
}

pub fn gas_report(script: &[Transaction], outcomes: &[TxOutcome]) -> GasReport {
    let mut total = Gas::default();
    let mut lines = Vec::new();
    for (i, (tx, o)) in script.iter().zip(outcomes).enumerate() {
        total.exec += o.gas.exec;
        total.check += o.gas.check;
        let (outcome, reason, id) = match &o.outcome {
            Outcome::Committed { .. } => ("committed", None, None),
            Outcome::Reverted(r) => ("reverted", Some(r.reason.to_string()), r.check_id.clone()),
        };
        lines.push(TxGasLine {
            index: i,
            transaction: tx.to_string(),
            outcome,
            exec_gas: o.gas.exec,
            check_gas: o.gas.check,
            revert_reason: reason,
            check_id: id,
        });
    }
    GasReport {
        per_tx: lines,
        totals: GasTotals {
            exec_gas: total.exec,
            check_gas: total.check,
        },
    }
}
