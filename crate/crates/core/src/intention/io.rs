//! Model and dataset files.
//!
//! Model file (text, UTF-8):
//!
//! ```text
//! coassembly-mlp 1
//! seed <u64>
//! dims 49 32 32 13
//! layer 0
//! <outputs lines of `inputs` weights, row-major>
//! <one line of `outputs` biases>
//! layer 1
//! ...
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a reload
//! reproduces the parameters bit for bit.
//!
//! Dataset CSV: header `f0..f48,label,provenance`, labels `R1..R12|Idle`,
//! provenance `D0|D0_prime|D_adv`.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use super::{Dense, IntentionError, IntentionLabel, LabeledDataset, Mlp, Provenance, Sample, FEATURE_DIM};

pub const MODEL_MAGIC: &str = "coassembly-mlp";
pub const MODEL_VERSION: u32 = 1;

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_model(model: &Mlp, mut out: impl Write) -> Result<(), IntentionError> {
    writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}")?;
    writeln!(out, "seed {}", model.seed)?;
    let mut dims = vec![model.input_dim()];
    dims.extend(model.layers.iter().map(|l| l.outputs));
    writeln!(out, "dims {}", dims.iter().map(usize::to_string).collect::<Vec<_>>().join(" "))?;
    for (i, l) in model.layers.iter().enumerate() {
        writeln!(out, "layer {i}")?;
        for row in l.weights.chunks(l.inputs) {
            writeln!(out, "{}", join(row))?;
        }
        writeln!(out, "{}", join(&l.bias))?;
    }
    Ok(())
}

pub fn read_model(input: impl Read) -> Result<Mlp, IntentionError> {
    let bad = |m: &str| IntentionError::ModelFormat(m.to_string());
    let reader = std::io::BufReader::new(input);
    let mut lines = reader.lines();
    let mut next = || -> Result<String, IntentionError> { lines.next().ok_or_else(|| bad("unexpected end of file"))?.map_err(Into::into) };
    let header = next()?;
    if header != format!("{MODEL_MAGIC} {MODEL_VERSION}") {
        return Err(bad(&format!("unsupported header `{header}`")));
    }
    let seed = next()?
        .strip_prefix("seed ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| bad("missing seed"))?;
    let dims: Vec<usize> = next()?
        .strip_prefix("dims ")
        .ok_or_else(|| bad("missing dims"))?
        .split_whitespace()
        .map(|d| d.parse().map_err(|_| bad("bad dimension")))
        .collect::<Result<_, _>>()?;
    if dims.len() < 2 {
        return Err(bad("need at least two dims"));
    }
    let parse_row = |line: String, n: usize| -> Result<Vec<f64>, IntentionError> {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad("bad number")))
            .collect::<Result<_, _>>()?;
        if row.len() != n {
            return Err(bad(&format!("expected {n} values, found {}", row.len())));
        }
        Ok(row)
    };
    let mut layers = Vec::new();
    for (i, w) in dims.windows(2).enumerate() {
        if next()? != format!("layer {i}") {
            return Err(bad(&format!("missing layer {i} marker")));
        }
        let mut weights = Vec::with_capacity(w[0] * w[1]);
        for _ in 0..w[1] {
            weights.extend(parse_row(next()?, w[0])?);
        }
        let bias = parse_row(next()?, w[1])?;
        layers.push(Dense { inputs: w[0], outputs: w[1], weights, bias });
    }
    Ok(Mlp { layers, seed })
}

pub fn save_model(model: &Mlp, path: &Path) -> Result<(), IntentionError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_model(model, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Mlp, IntentionError> {
    read_model(std::fs::File::open(path)?)
}

pub fn write_dataset(data: &LabeledDataset, out: impl Write) -> Result<(), IntentionError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..FEATURE_DIM).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    header.push("provenance".into());
    w.write_record(&header)?;
    for s in &data.samples {
        let mut rec: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        rec.push(s.label.to_string());
        rec.push(s.provenance.tag().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(input: impl Read) -> Result<LabeledDataset, IntentionError> {
    let mut r = csv::Reader::from_reader(input);
    let mut data = LabeledDataset::default();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != FEATURE_DIM + 2 {
            return Err(IntentionError::DatasetFormat(format!("row has {} columns", rec.len())));
        }
        let features = rec
            .iter()
            .take(FEATURE_DIM)
            .map(|v| v.parse::<f64>().map_err(|e| IntentionError::DatasetFormat(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let label: IntentionLabel = rec[FEATURE_DIM].parse().map_err(IntentionError::DatasetFormat)?;
        let provenance: Provenance = rec[FEATURE_DIM + 1].parse().map_err(IntentionError::DatasetFormat)?;
        data.samples.push(Sample { features, label, provenance });
    }
    Ok(data)
}
