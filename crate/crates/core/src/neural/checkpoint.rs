//! Plain-text checkpoints: a version line, then per tensor a
//! `tensor <name> <rows> <cols>` header and one line of values.

use std::fmt::Write as _;
use std::path::Path;

use super::{Module, NeuralError};

const MAGIC: &str = "bargain-checkpoint v1";

pub fn write_checkpoint(module: &dyn Module) -> String {
    let mut out = String::from(MAGIC);
    out.push('\n');
    module.visit("", &mut |name, p| {
        let _ = writeln!(out, "tensor {name} {} {}", p.value.rows, p.value.cols);
        let values: Vec<String> = p.value.data.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&values.join(" "));
        out.push('\n');
    });
    out
}

/// Loads values into an already-shaped module; names and shapes must match.
pub fn read_checkpoint(module: &mut dyn Module, text: &str) -> Result<(), NeuralError> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(NeuralError::Checkpoint("missing version header".into()));
    }
    let mut error = None;
    module.visit_mut("", &mut |name, p| {
        if error.is_some() {
            return;
        }
        let header = lines.next().unwrap_or_default();
        let expected = format!("tensor {name} {} {}", p.value.rows, p.value.cols);
        if header != expected {
            error = Some(format!("expected `{expected}`, found `{header}`"));
            return;
        }
        let body = lines.next().unwrap_or_default();
        let values: Result<Vec<f64>, _> = body.split_whitespace().map(str::parse).collect();
        match values {
            Ok(v) if v.len() == p.value.data.len() => p.value.data = v,
            Ok(v) => error = Some(format!("{name}: {} values for {} slots", v.len(), p.value.data.len())),
            Err(e) => error = Some(format!("{name}: {e}")),
        }
    });
    if let Some(e) = error {
        return Err(NeuralError::Checkpoint(e));
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(NeuralError::Checkpoint("trailing tensors".into()));
    }
    Ok(())
}

pub fn save_checkpoint(module: &dyn Module, path: &Path) -> Result<(), NeuralError> {
    std::fs::write(path, write_checkpoint(module))?;
    Ok(())
}

pub fn load_checkpoint(module: &mut dyn Module, path: &Path) -> Result<(), NeuralError> {
    read_checkpoint(module, &std::fs::read_to_string(path)?)
}
