//! Model checkpoints: a versioned text header describing the config,
//! terminated by an `end` line, followed by a binary parameter block.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::engine::{read_checkpoint, write_checkpoint};

use super::{Model, ModelConfig, ModelError};

const HEADER: &str = "dancestream-model v1";

fn header(model: &Model) -> String {
    let c = &model.config;
    let streams: Vec<&str> = c.streams.iter().map(|s| s.name()).collect();
    let m = model.rgb_mean;
    format!(
        "{HEADER}\nname={}\nstreams={}\ntemporal={}\nfc7={}\nclasses={}\ninput={}x{}\ngap_k={}\nconv1={}\nconv2={}\nsame_padding={}\nrgb_mean={:?},{:?},{:?}\nend\n",
        c.name,
        streams.join(","),
        c.temporal_mode,
        c.fc7_width,
        c.class_count,
        c.input_size.0,
        c.input_size.1,
        c.gap_k,
        c.conv1_channels,
        c.conv2_channels,
        c.same_padding,
        m[0],
        m[1],
        m[2],
    )
}

pub fn write_model<W: Write>(model: &Model, mut out: W) -> Result<(), ModelError> {
    out.write_all(header(model).as_bytes())?;
    write_checkpoint(&model.params, &mut out)?;
    Ok(out.flush()?)
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ModelError> {
    v.parse().map_err(|_| bad(format!("bad value {v:?} for {key}")))
}

pub fn read_model<R: Read>(input: R) -> Result<Model, ModelError> {
    let mut input = BufReader::new(input);
    let mut line = String::new();
    input.read_line(&mut line)?;
    if line.trim_end() != HEADER {
        return Err(bad(format!("expected header {HEADER:?}, found {:?}", line.trim_end())));
    }
    let mut fields = std::collections::BTreeMap::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(bad("header is not terminated by `end`"));
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| bad(format!("malformed header line {l:?}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| fields.get(k).map(String::as_str).ok_or_else(|| bad(format!("missing header key {k}")));
    let (h, w) = get("input")?
        .split_once('x')
        .ok_or_else(|| bad("input must be HxW"))?;
    let streams = get("streams")?
        .split(',')
        .map(str::parse)
        .collect::<Result<Vec<_>, _>>()?;
    let means: Vec<f32> = get("rgb_mean")?
        .split(',')
        .map(|v| parse("rgb_mean", v))
        .collect::<Result<_, _>>()?;
    let rgb_mean: [f32; 3] = means.try_into().map_err(|_| bad("rgb_mean needs 3 values"))?;
    let config = ModelConfig {
        name: get("name")?.to_string(),
        streams,
        temporal_mode: get("temporal")?.parse()?,
        fc7_width: parse("fc7", get("fc7")?)?,
        class_count: parse("classes", get("classes")?)?,
        input_size: (parse("input", h)?, parse("input", w)?),
        gap_k: parse("gap_k", get("gap_k")?)?,
        conv1_channels: parse("conv1", get("conv1")?)?,
        conv2_channels: parse("conv2", get("conv2")?)?,
        same_padding: parse("same_padding", get("same_padding")?)?,
    };
    config.validate()?;
    let params = read_checkpoint(&mut input)?;
    let fresh = super::build_model(config.clone(), 0)?;
    let expected: Vec<(&str, &[usize])> = fresh.params.iter().map(|(n, t)| (n, t.shape())).collect();
    let found: Vec<(&str, &[usize])> = params.iter().map(|(n, t)| (n, t.shape())).collect();
    if expected != found {
        return Err(bad("parameter names or shapes do not match the header config"));
    }
    Ok(Model {
        config,
        params,
        rgb_mean,
    })
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ModelError> {
    let file = File::create(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    write_model(model, BufWriter::new(file))
}

pub fn load_model(path: &Path) -> Result<Model, ModelError> {
    let file = File::open(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    read_model(file)
}
