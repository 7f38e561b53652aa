//! Run configuration and its resolution order: built-in default, then a
//! named preset, then the JSON config file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use iavc::config::{preset, CAPTIONER_PAPER_EPOCHS, PIN_PAPER_EPOCHS, PIN_PAPER_LR};
use iavc::data::{SplitSpec, SynthConfig};
use iavc::metrics::MetricConfig;
use iavc::train::{CaptionTrainConfig, PinTrainConfig};
use iavc::{AblationFlags, BsimOutputSel, Error, HyperConfig, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSide {
    Train,
    #[default]
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateOptions {
    pub split: SplitSide,
    /// Falls back to the checkpoint's `beam_size`.
    pub beam_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub candidates: Option<PathBuf>,
    pub references: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateGrid {
    pub variants: Vec<AblationFlags>,
    /// Empty means the default sweep scaled to `d_time`.
    pub d_down: Vec<usize>,
    pub n_q: Vec<usize>,
    pub beam_size: usize,
}

impl Default for AblateGrid {
    fn default() -> Self {
        let on = AblationFlags::default();
        AblateGrid {
            variants: vec![
                on,
                AblationFlags { no_bsim: true, ..on },
                AblationFlags { no_pin: true, ..on },
                AblationFlags { no_pin: true, no_vclm: true, ..on },
                AblationFlags { bsim_output: BsimOutputSel::Video, ..on },
                AblationFlags { bsim_output: BsimOutputSel::Player, ..on },
            ],
            d_down: Vec::new(),
            n_q: vec![8, 16, 32],
            beam_size: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub preset: Option<String>,
    /// When set, overrides every seed below.
    pub seed: Option<u64>,
    pub model: HyperConfig,
    /// Annotation file; the synthetic corpus is used when absent.
    pub data: Option<PathBuf>,
    pub synth: SynthConfig,
    /// Defaults to the 35/40 game ratio.
    pub split: Option<SplitSpec>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub pin: PinTrainConfig,
    pub captioner: CaptionTrainConfig,
    /// Continue captioner training from the optimizer state and epoch
    /// count stored in `checkpoint`.
    pub resume: bool,
    pub generate: GenerateOptions,
    pub eval: EvalOptions,
    pub metrics: MetricConfig,
    pub ablate: AblateGrid,
}

impl RunConfig {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

pub const PRESET_NAMES: &str = "desk, paper, g, q-0.5b, q-1.5b, q-3b, l-1b, l-3b";

/// `desk` is the built-in default; `paper` switches to the published
/// geometry; the language-model rows set decoder width, learning rates,
/// batch size and epoch counts.
pub fn apply_preset(rc: &mut RunConfig, name: &str) -> Result<()> {
    match name {
        "desk" => {}
        "paper" => {
            rc.model = HyperConfig::paper();
            rc.synth.d_in = rc.model.d_in;
        }
        _ => {
            let p = preset(name).ok_or_else(|| {
                Error::Config(format!("unknown preset `{name}` (known: {PRESET_NAMES})"))
            })?;
            rc.model.d_llm = p.hidden;
            rc.captioner.lr = p.lr;
            rc.captioner.batch_size = p.batch_size;
            rc.captioner.epochs = CAPTIONER_PAPER_EPOCHS;
            rc.pin.lr = PIN_PAPER_LR;
            rc.pin.epochs = PIN_PAPER_EPOCHS;
        }
    }
    Ok(())
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
    }
    Ok(v)
}

/// Builds the effective configuration. `cli_preset` wins over a `preset`
/// named in the file; `flags` applies the command-line overrides last.
pub fn resolve(
    command: &str,
    file: Option<Value>,
    cli_preset: Option<&str>,
    flags: impl FnOnce(&mut RunConfig),
) -> Result<RunConfig> {
    let file_preset = file
        .as_ref()
        .and_then(|f| f.get("preset"))
        .and_then(Value::as_str)
        .map(str::to_string);
    let preset_name = cli_preset.map(str::to_string).or(file_preset);

    let mut base = RunConfig::default();
    if let Some(name) = &preset_name {
        apply_preset(&mut base, name)?;
    }
    let mut v = base.to_value();
    if let Some(f) = file {
        merge(&mut v, f);
    }
    let mut rc: RunConfig =
        serde_json::from_value(v).map_err(|e| Error::Config(format!("config: {e}")))?;
    rc.preset = preset_name;
    rc.command = command.to_string();
    flags(&mut rc);
    if let Some(seed) = rc.seed {
        rc.model.seed = seed;
        rc.synth.seed = seed;
        rc.pin.seed = seed;
        rc.captioner.seed = seed;
    }
    if rc.data.is_none() {
        rc.model.d_in = rc.synth.d_in;
    }
    rc.model.validate()?;
    rc.captioner.flags.validate()?;
    for f in &rc.ablate.variants {
        f.validate()?;
    }
    Ok(rc)
}
