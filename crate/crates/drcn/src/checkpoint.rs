//! Model checkpoints: a UTF-8 `key=value` header carrying the full
//! architecture configuration (plus table sizes), a blank line, then the
//! binary tensor blob with every named parameter and buffer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{DrcnError, Result};
use crate::model::{DrcnModel, ModelConfig};
use crate::params::{Param, ParamSet};
use crate::runconfig::{model_from_kv, model_kv_pairs};
use crate::tensor::serialize::{read_tensors, write_tensors, DType};

/// Parameter flags are not stored in the tensor blob; they are a function of
/// the canonical parameter name.
pub fn param_flags_for(config: &ModelConfig, name: &str, shape: &[usize]) -> Param {
    let _ = config;
    let is_embed = name.starts_with("embed.");
    let trainable = name != "embed.word_fix" && !name.starts_with("bn.run_");
    Param {
        data: Vec::new(),
        shape: shape.to_vec(),
        trainable,
        no_decay: is_embed || name.starts_with("bn.run_"),
        frozen_prefix: if is_embed { shape.last().copied().unwrap_or(0) } else { 0 },
    }
}

pub fn save_model(model: &DrcnModel, path: &Path) -> Result<()> {
    let file =
        File::create(path).map_err(|e| DrcnError::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| DrcnError::io(path.display().to_string(), e);
    for (k, v) in model_kv_pairs(&model.config) {
        writeln!(w, "{k}={v}").map_err(io_err)?;
    }
    writeln!(w, "word_rows={}", model.word_rows).map_err(io_err)?;
    writeln!(w, "char_rows={}", model.char_rows).map_err(io_err)?;
    writeln!(w).map_err(io_err)?;
    let entries: Vec<(&str, &[usize], &[f64])> = model
        .params
        .iter()
        .map(|(name, p)| (name.as_str(), p.shape.as_slice(), p.data.as_slice()))
        .collect();
    write_tensors(&mut w, &entries, DType::F64)?;
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<DrcnModel> {
    let file = File::open(path).map_err(|e| DrcnError::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);

    // header: key=value lines up to the first empty line
    let mut header = Vec::new();
    let mut line = Vec::new();
    loop {
        line.clear();
        let mut byte = [0u8; 1];
        loop {
            match r.read(&mut byte) {
                Ok(0) => {
                    return Err(DrcnError::Format(format!(
                        "{}: truncated checkpoint header",
                        path.display()
                    )))
                }
                Ok(_) => {
                    if byte[0] == b'\n' {
                        break;
                    }
                    line.push(byte[0]);
                }
                Err(e) => return Err(DrcnError::io(path.display().to_string(), e)),
            }
        }
        if line.is_empty() {
            break;
        }
        let text = String::from_utf8(line.clone())
            .map_err(|_| DrcnError::Format("checkpoint header is not UTF-8".into()))?;
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| DrcnError::Format(format!("bad header line {text:?}")))?;
        header.push((k.to_string(), v.to_string()));
    }

    let word_rows = take_usize(&mut header, "word_rows")?;
    let char_rows = take_usize(&mut header, "char_rows")?;
    let config = model_from_kv(&header)?;
    config.validate()?;

    let tensors = read_tensors(&mut r)?;
    let mut params = ParamSet::new();
    for entry in tensors {
        let mut p = param_flags_for(&config, &entry.name, &entry.shape);
        p.data = entry.data;
        if p.data.len() != p.shape.iter().product::<usize>() {
            return Err(DrcnError::Format(format!(
                "tensor {} data does not match shape {:?}",
                entry.name, p.shape
            )));
        }
        params.insert_full(&entry.name, p);
    }
    let model = DrcnModel { config, params, word_rows, char_rows };
    verify_param_set(&model)?;
    Ok(model)
}

fn take_usize(header: &mut Vec<(String, String)>, key: &str) -> Result<usize> {
    let pos = header
        .iter()
        .position(|(k, _)| k == key)
        .ok_or_else(|| DrcnError::Format(format!("checkpoint header missing {key}")))?;
    let (_, v) = header.remove(pos);
    v.parse().map_err(|_| DrcnError::Format(format!("bad {key} value {v:?}")))
}

/// The loaded parameter set must exactly match what `DrcnModel::init` would
/// create for this configuration.
fn verify_param_set(model: &DrcnModel) -> Result<()> {
    let mut rng = crate::rng::DrcnRng::seed_from(0);
    let fresh =
        DrcnModel::init(model.config.clone(), model.word_rows, model.char_rows, &mut rng)?;
    let expected: Vec<String> = fresh.params.names();
    let got: Vec<String> = model.params.names();
    if expected != got {
        return Err(DrcnError::Format(format!(
            "checkpoint parameters {got:?} do not match architecture {expected:?}"
        )));
    }
    for (name, p) in fresh.params.iter() {
        let q = model.params.get(name);
        if p.shape != q.shape {
            return Err(DrcnError::Format(format!(
                "checkpoint tensor {name}: shape {:?}, architecture wants {:?}",
                q.shape, p.shape
            )));
        }
    }
    Ok(())
}
