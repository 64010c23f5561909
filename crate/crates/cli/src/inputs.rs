//! Loading of spaces, measures, profiles, functions and heat operators. Every
//! file read is recorded so the manifest can hash it.

use std::path::Path;

use serde_json::{Map, Value};
use treecalc::calculus::FunctionFile;
use treecalc::heat::{assemble_cached, assemble_with, Boundary, HeatOperator, HeatOptions, MassTreatment};
use treecalc::measure::MeasureFile;
use treecalc::{CableSystem, Error, MeasureWeights, PlFunction, Result, VolumeProfile};

use crate::{FunctionArgs, HeatArgs, ProfileArg, SpaceArgs, CACHE_ENV};

#[derive(Default)]
pub struct Context {
    /// `(path, contents)` of every input file, in reading order.
    pub inputs: Vec<(String, Vec<u8>)>,
    /// Run facts that do not affect the artifact, e.g. cache hits.
    pub notes: Map<String, Value>,
}

impl Context {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push((path.display().to_string(), bytes.clone()));
        Ok(bytes)
    }

    fn read_json(&mut self, path: &Path) -> Result<Value> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::input(format!("{} is not valid JSON: {e}", path.display())))
    }

    pub fn space(&mut self, args: &SpaceArgs) -> Result<(CableSystem, MeasureWeights)> {
        let space = CableSystem::from_json(&self.read_json(&args.space)?)?;
        let measure = match &args.measure {
            Some(path) => {
                let file: MeasureFile = serde_json::from_value(self.read_json(path)?)?;
                MeasureWeights::from_file(&space, &file)?
            }
            None => MeasureWeights::lebesgue(&space),
        };
        Ok((space, measure))
    }

    /// A bare profile, `{"profile": …}` or a `volume` report; otherwise the
    /// profile stored in the space file.
    pub fn profile(&mut self, arg: &ProfileArg, space: &CableSystem) -> Result<VolumeProfile> {
        let value = match &arg.profile {
            Some(path) => {
                let v = self.read_json(path)?;
                let nested = v.pointer("/summary/profile").or_else(|| v.get("profile")).cloned();
                nested.unwrap_or(v)
            }
            None => space.meta().get("profile").cloned().ok_or_else(|| {
                Error::input("the space file stores no volume profile; pass --profile (e.g. a volume report)")
            })?,
        };
        serde_json::from_value(value).map_err(|e| Error::input(format!("unreadable volume profile: {e}")))
    }

    pub fn function(&mut self, args: &FunctionArgs, space: &CableSystem) -> Result<PlFunction> {
        match (&args.f, &args.f_file) {
            (Some(spec), None) => spec.build(space),
            (None, Some(path)) => {
                let file: FunctionFile = serde_json::from_value(self.read_json(path)?)?;
                PlFunction::from_file(space, &file)
            }
            _ => Err(Error::input("give exactly one of --f and --f-file")),
        }
    }

    /// Uses the spectral cache when the cache directory variable is set.
    pub fn operator(&mut self, args: &HeatArgs, space: &CableSystem, m: &MeasureWeights) -> Result<HeatOperator> {
        let mut opts = HeatOptions::default();
        if let Some(modes) = args.modes {
            opts.modes = Some(modes);
        }
        if let Some(limit) = args.dense_limit {
            opts.dense_limit = limit;
        }
        if let Some(relative) = args.mass_floor {
            opts.treatment = MassTreatment::Floor { relative };
        }
        let h = args.h.unwrap_or(f64::INFINITY);
        if !(h > 0.0) {
            return Err(Error::input(format!("mesh size --h {h} must be positive")));
        }
        match std::env::var_os(CACHE_ENV).filter(|d| !d.is_empty()) {
            Some(dir) => {
                let (op, hit) = assemble_cached(Path::new(&dir), space, m, h, Boundary::Reflecting, &opts)?;
                self.notes.insert("cache_hit".into(), Value::Bool(hit));
                Ok(op)
            }
            None => assemble_with(space, m, h, Boundary::Reflecting, &opts),
        }
    }
}
