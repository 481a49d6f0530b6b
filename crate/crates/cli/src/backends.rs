use std::path::Path;

use anyhow::{bail, Context, Result};
use docrel_core::llm::{Embedder, Generator, HashMockEmbedder, HttpBackend, HttpConfig, HttpEmbedder, ReplayBackend};

use crate::{BackendKind, EmbedArgs, EmbedKind};

pub fn embedder(args: &EmbedArgs) -> Result<Box<dyn Embedder>> {
    match args.embed_backend.unwrap_or_default() {
        EmbedKind::Hashmock => Ok(Box::new(HashMockEmbedder::new(args.embed_seed.unwrap_or(0)))),
        EmbedKind::Http => {
            let Some(endpoint) = &args.embed_endpoint else {
                bail!("--embed-endpoint is required with --embed-backend http");
            };
            let Some(dim) = args.embed_dim else {
                bail!("--embed-dim is required with --embed-backend http");
            };
            let model = args.embed_model.clone().unwrap_or_else(|| "default".into());
            Ok(Box::new(HttpEmbedder::new(HttpConfig::new(endpoint), model, dim)?))
        }
    }
}

pub fn generator(kind: BackendKind, endpoint: Option<&str>, replay: Option<&Path>) -> Result<Box<dyn Generator>> {
    match kind {
        BackendKind::Http => {
            let Some(endpoint) = endpoint else {
                bail!("--endpoint is required with --backend http");
            };
            Ok(Box::new(HttpBackend::new(HttpConfig::new(endpoint))?))
        }
        BackendKind::Replay => {
            let Some(path) = replay else {
                bail!("--replay is required with --backend replay");
            };
            let backend = ReplayBackend::load(path).with_context(|| format!("replay fixture {}", path.display()))?;
            Ok(Box::new(backend))
        }
    }
}
