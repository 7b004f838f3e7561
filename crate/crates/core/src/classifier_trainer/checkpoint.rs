use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ClassifierParams, Model, TrainConfig};
use crate::attention_pool::AttentionHeadParams;
use crate::error::{Error, Result};

/// A trained model with the configuration that produced it, stored as one
/// JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dimension: usize,
    pub label_count: usize,
    pub head: AttentionHeadParams,
    pub classifier: ClassifierParams,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn new(model: Model, config: TrainConfig) -> Self {
        Self {
            dimension: model.dimension(),
            label_count: model.label_count(),
            head: model.head,
            classifier: model.classifier,
            config,
        }
    }

    pub fn model(&self) -> Result<Model> {
        let head = AttentionHeadParams::new(
            self.head.w_s.clone(),
            self.head.b_s.clone(),
            self.head.u_s.clone(),
        )?;
        let classifier =
            ClassifierParams::new(self.classifier.w_c.clone(), self.classifier.b_c.clone())?;
        let model = Model::new(head, classifier)?;
        if model.dimension() != self.dimension || model.label_count() != self.label_count {
            return Err(Error::Shape(format!(
                "checkpoint declares d={} K={} but tensors are d={} K={}",
                self.dimension,
                self.label_count,
                model.dimension(),
                model.label_count()
            )));
        }
        Ok(model)
    }

    pub fn write(&self, mut writer: impl Write) -> Result<()> {
        serde_json::to_writer(&mut writer, self)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }

    pub fn read(reader: impl Read) -> Result<Self> {
        let checkpoint: Checkpoint = serde_json::from_reader(reader)?;
        checkpoint.model()?;
        checkpoint.config.validate()?;
        Ok(checkpoint)
    }
}
