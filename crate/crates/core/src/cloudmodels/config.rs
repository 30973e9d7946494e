use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KvFile;

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::invalid_argument(format!(
                        concat!("unknown ", stringify!($name), " {:?}"), s
                    ))),
                }
            }
        }
    };
}

string_enum!(Task { Classify => "classify", Segment => "segment" });
string_enum!(Architecture { PointnetMod => "pointnet-mod", Pointnetpp => "pointnetpp", MlpAblation => "mlp-ablation" });
string_enum!(AuxChannel { Normals => "normals", Features => "features" });

/// Architecture, input channels and layer widths of a point-cloud model.
///
/// Only the width fields of the selected architecture are used.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudModelConfig {
    pub task: Task,
    pub architecture: Architecture,
    /// The auxiliary per-point channel; features replace normals, never both.
    pub aux: AuxChannel,
    /// Surface feature width when `aux` is features.
    pub feature_dim: usize,
    pub classes: usize,
    // modified PointNet
    pub layers: usize,
    pub layer_widths: Vec<usize>,
    pub neighbors: usize,
    // PointNet++
    pub sa_widths: Vec<Vec<usize>>,
    pub sa_radii: Vec<f64>,
    pub sa_caps: Vec<usize>,
    pub fp_widths: Vec<Vec<usize>>,
    // MLP ablation
    pub point_widths: Vec<usize>,
    pub global_widths: Vec<usize>,
    /// Hidden widths of the final head (before the class layer).
    pub head_widths: Vec<usize>,
}

impl CloudModelConfig {
    /// Default widths for an architecture.
    pub fn template(task: Task, architecture: Architecture, aux: AuxChannel, feature_dim: usize) -> Self {
        let head_widths = match (architecture, task) {
            (Architecture::Pointnetpp, Task::Classify) => vec![512, 256],
            (Architecture::Pointnetpp, Task::Segment) => vec![128],
            _ => Vec::new(),
        };
        Self {
            task,
            architecture,
            aux,
            feature_dim: if aux == AuxChannel::Features { feature_dim } else { 0 },
            classes: 2,
            layers: 5,
            layer_widths: match task {
                Task::Classify => vec![64, 64],
                Task::Segment => vec![32, 32],
            },
            neighbors: 16,
            sa_widths: vec![vec![64, 64, 128], vec![128, 128, 256], vec![256, 512, 1024]],
            sa_radii: vec![0.2, 0.4],
            sa_caps: vec![32, 64],
            fp_widths: vec![vec![256, 256], vec![256, 128], vec![128, 128, 128]],
            point_widths: vec![128, 128],
            global_widths: vec![64],
            head_widths,
        }
    }

    /// Width of the auxiliary channel block.
    pub fn aux_width(&self) -> usize {
        match self.aux {
            AuxChannel::Normals => 3,
            AuxChannel::Features => self.feature_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid_argument(msg));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.aux == AuxChannel::Features && self.feature_dim == 0 {
            return bad("feature auxiliary channel needs feature_dim > 0".into());
        }
        if self.aux == AuxChannel::Normals && self.feature_dim != 0 {
            return bad("feature_dim must be 0 when the auxiliary channel is normals".into());
        }
        let nonzero = |w: &[usize]| !w.is_empty() && w.iter().all(|&v| v > 0);
        match self.architecture {
            Architecture::PointnetMod => {
                if self.layers == 0 || !nonzero(&self.layer_widths) {
                    return bad("modified PointNet needs at least one layer with non-zero widths".into());
                }
                if self.neighbors == 0 {
                    return bad("neighbor count must be positive".into());
                }
            }
            Architecture::Pointnetpp => {
                if self.sa_widths.len() != 3 || !self.sa_widths.iter().all(|w| nonzero(w)) {
                    return bad("PointNet++ needs three set abstraction MLPs".into());
                }
                if self.sa_radii.len() != 2 || self.sa_radii.iter().any(|r| !(*r > 0.0)) {
                    return bad("PointNet++ needs two positive radii".into());
                }
                if self.sa_caps.len() != 2 || self.sa_caps.contains(&0) {
                    return bad("PointNet++ needs two positive group caps".into());
                }
                if self.task == Task::Segment && (self.fp_widths.len() != 3 || !self.fp_widths.iter().all(|w| nonzero(w))) {
                    return bad("PointNet++ segmentation needs three feature propagation MLPs".into());
                }
            }
            Architecture::MlpAblation => {
                if self.task != Task::Classify {
                    return bad("the MLP ablation is a classifier only".into());
                }
                if self.aux != AuxChannel::Features {
                    return bad("the MLP ablation consumes surface features only".into());
                }
                if !nonzero(&self.point_widths) || !nonzero(&self.global_widths) {
                    return bad("MLP ablation widths must be non-empty".into());
                }
            }
        }
        if self.head_widths.contains(&0) {
            return bad("head widths must be positive".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("model.task", self.task);
        kv.set("model.architecture", self.architecture);
        kv.set("model.aux", self.aux);
        kv.set("model.feature_dim", self.feature_dim);
        kv.set("model.classes", self.classes);
        kv.set_list("model.head_widths", &self.head_widths);
        match self.architecture {
            Architecture::PointnetMod => {
                kv.set("model.layers", self.layers);
                kv.set_list("model.layer_widths", &self.layer_widths);
                kv.set("model.neighbors", self.neighbors);
            }
            Architecture::Pointnetpp => {
                kv.set_nested("model.sa_widths", &self.sa_widths);
                kv.set_list("model.sa_radii", &self.sa_radii);
                kv.set_list("model.sa_caps", &self.sa_caps);
                if self.task == Task::Segment {
                    kv.set_nested("model.fp_widths", &self.fp_widths);
                }
            }
            Architecture::MlpAblation => {
                kv.set_list("model.point_widths", &self.point_widths);
                kv.set_list("model.global_widths", &self.global_widths);
            }
        }
        kv
    }

    /// Reads `model.*` keys; anything missing falls back to the template.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let task: Task = kv.get("model.task")?.ok_or_else(|| Error::invalid_data("config lacks model.task"))?;
        let architecture: Architecture =
            kv.get("model.architecture")?.ok_or_else(|| Error::invalid_data("config lacks model.architecture"))?;
        let aux: AuxChannel = kv.get_or("model.aux", AuxChannel::Features)?;
        let feature_dim = kv.get_or("model.feature_dim", 0usize)?;
        let mut c = Self::template(task, architecture, aux, feature_dim);
        c.feature_dim = feature_dim;
        c.classes = kv.get_or("model.classes", c.classes)?;
        c.layers = kv.get_or("model.layers", c.layers)?;
        c.neighbors = kv.get_or("model.neighbors", c.neighbors)?;
        if let Some(v) = kv.get_list("model.layer_widths")? {
            c.layer_widths = v;
        }
        if let Some(v) = kv.get_nested("model.sa_widths")? {
            c.sa_widths = v;
        }
        if let Some(v) = kv.get_list("model.sa_radii")? {
            c.sa_radii = v;
        }
        if let Some(v) = kv.get_list("model.sa_caps")? {
            c.sa_caps = v;
        }
        if let Some(v) = kv.get_nested("model.fp_widths")? {
            c.fp_widths = v;
        }
        if let Some(v) = kv.get_list("model.point_widths")? {
            c.point_widths = v;
        }
        if let Some(v) = kv.get_list("model.global_widths")? {
            c.global_widths = v;
        }
        if let Some(v) = kv.get_list("model.head_widths")? {
            c.head_widths = v;
        }
        c.validate().map_err(|e| Error::invalid_data(e.to_string()))?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip_every_architecture() {
        for (task, arch) in [
            (Task::Classify, Architecture::PointnetMod),
            (Task::Segment, Architecture::PointnetMod),
            (Task::Classify, Architecture::Pointnetpp),
            (Task::Segment, Architecture::Pointnetpp),
            (Task::Classify, Architecture::MlpAblation),
        ] {
            let c = CloudModelConfig::template(task, arch, AuxChannel::Features, 16);
            c.validate().unwrap();
            let text = c.to_kv().render();
            let kv = KvFile::parse(&text).unwrap();
            assert_eq!(CloudModelConfig::from_kv(&kv).unwrap(), c);
        }
    }

    #[test]
    fn invalid_combinations() {
        let mut c = CloudModelConfig::template(Task::Segment, Architecture::MlpAblation, AuxChannel::Features, 8);
        assert!(c.validate().is_err());
        c.task = Task::Classify;
        c.aux = AuxChannel::Normals;
        assert!(c.validate().is_err());
        let mut p = CloudModelConfig::template(Task::Classify, Architecture::Pointnetpp, AuxChannel::Normals, 0);
        p.sa_radii.pop();
        assert!(p.validate().is_err());
        assert!("pointnet".parse::<Architecture>().is_err());
    }
}
