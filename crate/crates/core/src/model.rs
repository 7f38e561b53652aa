//! The full captioning model: video projection, player identification,
//! semantic interaction, context queries, prompt and decoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::captioner::{
    self, assemble_prompt, caption_body, declare_decoder, declare_projections, embed_names,
    MultimodalPrompt, PromptNode, Vocabulary,
};
use crate::config::HyperConfig;
use crate::data::{Checkpoint, ClipRecord, OptimizerState};
use crate::error::{Error, Result};
use crate::graph::{Graph, Mode, Var};
use crate::identity::{
    bsim_forward, build_identity_embeddings, declare_bsim, declare_pin, IdentityMode,
    PlayerCatalog,
};
use crate::metrics::tokenize;
use crate::nn;
use crate::params::{Initializer, ParameterStore};
use crate::vclm::{declare_vclm, vclm_forward};

/// Which interaction-module outputs replace the raw features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BsimOutputSel {
    Video,
    Player,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub no_vclm: bool,
    /// Drops player and name rows; the interaction module is skipped too
    /// since it has no player input.
    pub no_pin: bool,
    pub no_bsim: bool,
    pub bsim_output: BsimOutputSel,
}

impl AblationFlags {
    pub fn validate(&self) -> Result<()> {
        if self.bsim_output != BsimOutputSel::Both && (self.no_bsim || self.no_pin) {
            return Err(Error::InconsistentFlags(
                "bsim_output selects interaction outputs, so the interaction module must be on"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Short stable name such as `full`, `no_bsim` or `no_pin+no_vclm`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_pin {
            parts.push("no_pin".to_string());
        }
        if self.no_bsim {
            parts.push("no_bsim".to_string());
        }
        if self.no_vclm {
            parts.push("no_vclm".to_string());
        }
        match self.bsim_output {
            BsimOutputSel::Both => {}
            BsimOutputSel::Video => parts.push("bsim_video".into()),
            BsimOutputSel::Player => parts.push("bsim_player".into()),
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone)]
pub struct IavcModel {
    pub cfg: HyperConfig,
    pub store: ParameterStore,
    pub catalog: PlayerCatalog,
    pub vocab: Vocabulary,
}

/// A generated caption with the players used to prompt it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub caption: String,
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub identified_players: Vec<IdentifiedName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedName {
    pub name: String,
    pub confidence: f64,
}

impl IavcModel {
    pub fn new(cfg: HyperConfig, catalog: PlayerCatalog, vocab: Vocabulary) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParameterStore::new();
        let mut init = Initializer::new(cfg.seed);
        nn::declare_linear(&mut store, &mut init, "video.in", cfg.d_in, cfg.d_time, true)?;
        declare_pin(&mut store, &mut init, &cfg, catalog.len())?;
        declare_bsim(&mut store, &mut init, &cfg)?;
        declare_vclm(&mut store, &mut init, &cfg)?;
        declare_projections(&mut store, &mut init, &cfg)?;
        declare_decoder(&mut store, &mut init, &cfg, vocab.len())?;
        Ok(IavcModel { cfg, store, catalog, vocab })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let fresh = IavcModel::new(ck.config.clone(), ck.catalog.clone(), ck.vocab.clone())?;
        for e in fresh.store.iter() {
            let got = ck.params.value(&e.name).map_err(|_| {
                Error::CorruptFile(format!("checkpoint lacks parameter `{}`", e.name))
            })?;
            if got.shape() != e.value.shape() {
                return Err(Error::CorruptFile(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    e.name,
                    got.shape(),
                    e.value.shape()
                )));
            }
        }
        Ok(IavcModel { cfg: ck.config, store: ck.params, catalog: ck.catalog, vocab: ck.vocab })
    }

    pub fn to_checkpoint(&self, optimizer: Option<OptimizerState>, extra: serde_json::Value) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            catalog: self.catalog.clone(),
            vocab: self.vocab.clone(),
            params: self.store.clone(),
            optimizer,
            extra,
        }
    }

    /// `V_v`: frame features projected to `d_time`.
    pub fn video_rows(&self, g: &mut Graph, clip: &ClipRecord) -> Result<Var> {
        if clip.n_frames() > self.cfg.n_frames_max {
            return Err(Error::shape(format!(
                "clip `{}` has {} frames, cap is {}",
                clip.video_id,
                clip.n_frames(),
                self.cfg.n_frames_max
            )));
        }
        let x = g.input(clip.video_features.clone());
        nn::linear(g, &self.store, "video.in", x)
    }

    /// Prompt for one clip under `flags`. Also returns the names and
    /// confidences of the player rows, if any.
    pub fn build_prompt<R: Rng>(
        &self,
        g: &mut Graph,
        clip: &ClipRecord,
        flags: AblationFlags,
        identity: IdentityMode,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(PromptNode, Vec<IdentifiedName>)> {
        flags.validate()?;
        let (cfg, store) = (&self.cfg, &self.store);
        let v_v = self.video_rows(g, clip)?;
        let v_c = if flags.no_vclm { None } else { Some(vclm_forward(g, store, cfg, v_v)?) };
        if flags.no_pin {
            return Ok((assemble_prompt(g, store, cfg, v_c, v_v, None, None)?, Vec::new()));
        }
        let ids = build_identity_embeddings(
            g,
            store,
            cfg,
            clip,
            identity,
            cfg.k_players,
            &self.catalog,
        )?;
        let (v, f) = if flags.no_bsim {
            (v_v, ids.f_k)
        } else {
            let out = bsim_forward(g, store, cfg, v_v, ids.f_k, mode, rng)?;
            match flags.bsim_output {
                BsimOutputSel::Both => (out.v_bsi, out.f_bsi),
                BsimOutputSel::Video => (out.v_bsi, ids.f_k),
                BsimOutputSel::Player => (v_v, out.f_bsi),
            }
        };
        let e_k = embed_names(g, store, &self.vocab, &ids.names)?;
        let prompt = assemble_prompt(g, store, cfg, v_c, v, Some(f), Some(e_k))?;
        let players = ids
            .names
            .iter()
            .zip(&ids.confidences)
            .map(|(n, &c)| IdentifiedName { name: n.clone(), confidence: c })
            .collect();
        Ok((prompt, players))
    }

    /// Inference prompt as a tensor (dropout off).
    pub fn prompt_tensor(
        &self,
        clip: &ClipRecord,
        flags: AblationFlags,
        identity: IdentityMode,
    ) -> Result<(MultimodalPrompt, Vec<IdentifiedName>)> {
        let mut g = Graph::new();
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let (node, players) = self.build_prompt(&mut g, clip, flags, identity, Mode::Infer, &mut rng)?;
        Ok((node.materialize(&g), players))
    }

    /// `<bos> caption <eos>` ids for a clip.
    pub fn caption_target(&self, clip: &ClipRecord) -> Result<Vec<usize>> {
        let tokens = tokenize(&clip.caption);
        if tokens.len() + 1 > self.cfg.max_len {
            return Err(Error::LengthCapExceeded { len: tokens.len() + 1, cap: self.cfg.max_len });
        }
        self.vocab.encode_caption(&tokens)
    }

    /// Teacher-forced caption loss with annotated identities.
    pub fn caption_loss<R: Rng>(
        &self,
        g: &mut Graph,
        clip: &ClipRecord,
        flags: AblationFlags,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let target = self.caption_target(clip)?;
        let (prompt, _) = self.build_prompt(g, clip, flags, IdentityMode::Train, mode, rng)?;
        captioner::caption_loss(g, &self.store, &self.cfg, &prompt, &target, mode, rng)
    }

    /// Inference: tracker candidates when present, otherwise the annotated
    /// sequences.
    pub fn default_identity(clip: &ClipRecord) -> IdentityMode {
        if clip.candidate_sequences.is_empty() {
            IdentityMode::Train
        } else {
            IdentityMode::Infer
        }
    }

    pub fn generate(&self, clip: &ClipRecord, flags: AblationFlags, beam_size: usize) -> Result<Generated> {
        let (prompt, players) = self.prompt_tensor(clip, flags, Self::default_identity(clip))?;
        let h = captioner::generate(&self.store, &self.cfg, &prompt, beam_size, self.cfg.max_len)?;
        let body = caption_body(&h);
        Ok(Generated {
            caption: self.vocab.decode(body),
            tokens: body.to_vec(),
            log_prob: h.log_prob,
            identified_players: players,
        })
    }
}

/// Prompt for one clip under the given ablation flags, with inference-time
/// identities when the clip has tracker candidates.
pub fn run_ablation_variant(
    model: &IavcModel,
    clip: &ClipRecord,
    flags: AblationFlags,
) -> Result<MultimodalPrompt> {
    Ok(model.prompt_tensor(clip, flags, IavcModel::default_identity(clip))?.0)
}
