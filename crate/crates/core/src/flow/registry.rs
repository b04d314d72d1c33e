use std::collections::BTreeMap;

use super::io::ByteReader;
use super::{CouplingFlow, FlowKind, FlowOptions, FlowTransform, LinearFlow};
use crate::error::{Error, Result};

type CreateFn = fn(usize, &FlowOptions) -> Result<Box<dyn FlowTransform>>;
type DecodeFn = fn(usize, &mut ByteReader<'_>) -> Result<Box<dyn FlowTransform>>;

/// How to build a flow family fresh and how to rebuild it from a model file.
#[derive(Clone, Copy)]
pub struct FlowFactory {
    pub kind: FlowKind,
    pub create: CreateFn,
    pub decode: DecodeFn,
}

/// Flow families by name (`--kind`) and by on-disk kind code.
pub struct FlowRegistry {
    factories: BTreeMap<&'static str, FlowFactory>,
}

impl Default for FlowRegistry {
    fn default() -> Self {
        let mut reg = FlowRegistry::empty();
        reg.register(FlowFactory {
            kind: FlowKind::Linear,
            create: |dim, _| Ok(Box::new(LinearFlow::identity(dim))),
            decode: |dim, _| Ok(Box::new(LinearFlow::identity(dim))),
        });
        reg.register(FlowFactory {
            kind: FlowKind::Coupling,
            create: |dim, opts| Ok(Box::new(CouplingFlow::new(dim, opts)?)),
            decode: decode_coupling,
        });
        reg
    }
}

impl FlowRegistry {
    pub fn empty() -> Self {
        FlowRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, factory: FlowFactory) {
        self.factories.insert(factory.kind.name(), factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&FlowFactory> {
        self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown flow kind {name:?} (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn by_code(&self, code: u8) -> Result<&FlowFactory> {
        self.factories
            .values()
            .find(|f| f.kind.code() == code)
            .ok_or_else(|| Error::Format(format!("unknown flow kind code {code}")))
    }

    pub fn create(&self, name: &str, dim: usize, opts: &FlowOptions) -> Result<Box<dyn FlowTransform>> {
        if dim < 2 {
            return Err(Error::Config(format!("flow dimension {dim} < 2")));
        }
        (self.get(name)?.create)(dim, opts)
    }
}

fn decode_coupling(dim: usize, r: &mut ByteReader<'_>) -> Result<Box<dyn FlowTransform>> {
    let blocks = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let clamp = r.f64()?;
    if blocks == 0 || hidden == 0 || blocks > 1 << 16 || hidden > 1 << 20 {
        return Err(Error::Format(format!("implausible coupling layout K={blocks} h={hidden}")));
    }
    let mut perms = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let p = (0..dim).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        perms.push(p);
    }
    Ok(Box::new(CouplingFlow::from_layout(dim, hidden, clamp, perms)?))
}
