use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fit::{fit_affine, relative_errors, AffineMap, SurrogateSet};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::seed;

pub const TREE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApproxConfig {
    /// Range-relative error bound, as a fraction.
    pub error_bound: f64,
    /// Minimum edge length in scaled units.
    pub min_segment: f64,
    /// Fit samples per region are `samples_per_dim · (dim + 1)`, capped at `max_samples`.
    pub samples_per_dim: usize,
    pub max_samples: usize,
    /// Scaled data range `[a, b]`.
    pub range: (f64, f64),
    pub seed: u64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            error_bound: 0.15,
            min_segment: 0.125,
            samples_per_dim: 32,
            max_samples: 512,
            range: (-1.0, 1.0),
            seed: 0,
        }
    }
}

impl ApproxConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.range;
        if !(self.error_bound > 0.0 && self.error_bound < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "error_bound must lie in (0, 1), got {}",
                self.error_bound
            )));
        }
        if !(a < b) || !(self.min_segment > 0.0 && self.min_segment <= b - a) {
            return Err(Error::InvalidConfig(format!(
                "min_segment must lie in (0, b - a], got {} for range ({a}, {b})",
                self.min_segment
            )));
        }
        if self.samples_per_dim == 0 {
            return Err(Error::InvalidConfig("samples_per_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn sample_count(&self, dim: usize) -> usize {
        (self.samples_per_dim * (dim + 1)).min(self.max_samples).max(dim + 1)
    }

    /// `((b - a) / s_min)^dim`, the most leaves a tree over `dim` dimensions can have.
    pub fn max_regions(&self, dim: usize) -> f64 {
        ((self.range.1 - self.range.0) / self.min_segment).powi(dim as i32)
    }
}

/// A leaf cell with one affine map per prediction step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub depth: usize,
    pub bounds: BoxDomain,
    pub maps: Vec<AffineMap>,
    /// Relative error on fresh validation samples, per step and output.
    pub max_error: Vec<Vec<f64>>,
    /// Over the bound but no edge could be split further.
    pub saturated: bool,
}

impl Region {
    pub fn x_box(&self, state_dim: usize) -> BoxDomain {
        self.bounds.project(0, state_dim)
    }

    pub fn u_box(&self, state_dim: usize) -> BoxDomain {
        self.bounds.project(state_dim, self.bounds.dim())
    }

    pub fn worst_error(&self) -> f64 {
        self.max_error.iter().flatten().fold(0.0, |a, b| a.max(*b))
    }

    /// Half-open containment, closed on the faces shared with `root`.
    pub fn contains_half_open(&self, p: &[f64], root: &BoxDomain) -> bool {
        (0..p.len()).all(|d| half_open(p[d], self.bounds.lo[d], self.bounds.hi[d], root.hi[d]))
    }
}

fn half_open(v: f64, lo: f64, hi: f64, root_hi: f64) -> bool {
    v >= lo && (v < hi || (hi == root_hi && v == hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split { dim: usize, at: f64, lo: usize, hi: usize },
    Leaf { region: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionTree {
    pub format_version: u32,
    pub state_dim: usize,
    pub input_dim: usize,
    pub horizon: usize,
    pub root: BoxDomain,
    pub config: ApproxConfig,
    /// Node 0 is the root; regions are numbered in depth-first order.
    pub nodes: Vec<Node>,
    pub regions: Vec<Region>,
}

enum Built {
    Leaf(Region),
    Split {
        dim: usize,
        at: f64,
        lo: Box<Built>,
        hi: Box<Built>,
    },
}

fn build(set: &SurrogateSet, bounds: BoxDomain, cfg: &ApproxConfig, depth: usize) -> Result<Built> {
    let dim = set.joint_dim();
    let n = cfg.sample_count(dim);
    let fit = fit_affine(set, &bounds, n, seed::for_box(cfg.seed, &bounds.lo, &bounds.hi, 0))?;
    let max_error = relative_errors(
        set,
        &fit.maps,
        &bounds,
        n,
        seed::for_box(cfg.seed, &bounds.lo, &bounds.hi, 1),
    );
    let violating = max_error
        .iter()
        .rposition(|errs| errs.iter().any(|e| *e > cfg.error_bound));
    let Some(k) = violating else {
        return Ok(Built::Leaf(Region {
            id: 0,
            depth,
            bounds,
            maps: fit.maps,
            max_error,
            saturated: false,
        }));
    };
    // Later models read every coordinate the earlier ones do.
    let relevant = set.model_width(k);
    let mut split_dim = None;
    let mut longest = 2.0 * cfg.min_segment;
    for d in 0..relevant {
        if bounds.width(d) > longest {
            longest = bounds.width(d);
            split_dim = Some(d);
        }
    }
    let Some(d) = split_dim else {
        return Ok(Built::Leaf(Region {
            id: 0,
            depth,
            bounds,
            maps: fit.maps,
            max_error,
            saturated: true,
        }));
    };
    let at = 0.5 * (bounds.lo[d] + bounds.hi[d]);
    let mut lo_box = bounds.clone();
    lo_box.hi[d] = at;
    let mut hi_box = bounds;
    hi_box.lo[d] = at;
    let (lo, hi) = rayon::join(
        || build(set, lo_box, cfg, depth + 1),
        || build(set, hi_box, cfg, depth + 1),
    );
    Ok(Built::Split {
        dim: d,
        at,
        lo: Box::new(lo?),
        hi: Box::new(hi?),
    })
}

fn flatten(built: Built, nodes: &mut Vec<Node>, regions: &mut Vec<Region>) -> usize {
    let index = nodes.len();
    match built {
        Built::Leaf(mut region) => {
            region.id = regions.len();
            nodes.push(Node::Leaf { region: region.id });
            regions.push(region);
        }
        Built::Split { dim, at, lo, hi } => {
            nodes.push(Node::Split { dim, at, lo: 0, hi: 0 });
            let lo_index = flatten(*lo, nodes, regions);
            let hi_index = flatten(*hi, nodes, regions);
            nodes[index] = Node::Split {
                dim,
                at,
                lo: lo_index,
                hi: hi_index,
            };
        }
    }
    index
}

/// Recursive midpoint bisection until every model output meets the error
/// bound or no edge may be split without going below the minimum segment.
pub fn build_region_tree(set: &SurrogateSet, root: &BoxDomain, cfg: &ApproxConfig) -> Result<RegionTree> {
    cfg.validate()?;
    if root.dim() != set.joint_dim() {
        return Err(Error::dims("root box", set.joint_dim(), root.dim()));
    }
    let built = build(set, root.clone(), cfg, 0)?;
    let mut nodes = Vec::new();
    let mut regions = Vec::new();
    flatten(built, &mut nodes, &mut regions);
    log::info!(
        "region tree: {} leaves, {} saturated",
        regions.len(),
        regions.iter().filter(|r| r.saturated).count()
    );
    Ok(RegionTree {
        format_version: TREE_FORMAT_VERSION,
        state_dim: set.state_dim,
        input_dim: set.input_dim,
        horizon: set.horizon(),
        root: root.clone(),
        config: cfg.clone(),
        nodes,
        regions,
    })
}

impl RegionTree {
    pub fn joint_dim(&self) -> usize {
        self.root.dim()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn root_x_box(&self) -> BoxDomain {
        self.root.project(0, self.state_dim)
    }

    pub fn root_u_box(&self) -> BoxDomain {
        self.root.project(self.state_dim, self.joint_dim())
    }

    pub fn max_depth(&self) -> usize {
        self.regions.iter().map(|r| r.depth).max().unwrap_or(0)
    }

    /// The unique leaf containing `p`; points on a split plane go to the upper side.
    pub fn locate(&self, p: &[f64]) -> Result<&Region> {
        if p.len() != self.joint_dim() {
            return Err(Error::dims("query point", self.joint_dim(), p.len()));
        }
        if !self.root.contains(p) {
            return Err(Error::OutsideDomain(format!("{p:?} is outside the region tree root")));
        }
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                Node::Leaf { region } => return Ok(&self.regions[*region]),
                Node::Split { dim, at, lo, hi } => node = if p[*dim] >= *at { *hi } else { *lo },
            }
        }
    }

    /// Leaves whose state slab contains `x`, in id order.
    pub fn candidate_regions(&self, x: &[f64]) -> Result<Vec<&Region>> {
        if x.len() != self.state_dim {
            return Err(Error::dims("measured state", self.state_dim, x.len()));
        }
        if !self.root_x_box().contains(x) {
            return Err(Error::OutsideDomain(format!("{x:?} is outside the region tree state box")));
        }
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            match &self.nodes[node] {
                Node::Leaf { region } => out.push(&self.regions[*region]),
                Node::Split { dim, at, lo, hi } => {
                    if *dim < self.state_dim {
                        stack.push(if x[*dim] >= *at { *hi } else { *lo });
                    } else {
                        stack.push(*hi);
                        stack.push(*lo);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Leaves in the slab of `x` sharing a facet with `region` across the face
    /// of joint dimension `dim` (upper face when `upper`).
    pub fn facet_neighbors(&self, x: &[f64], region: &Region, dim: usize, upper: bool) -> Vec<usize> {
        let b = &region.bounds;
        let v = if upper { b.hi[dim] } else { b.lo[dim] };
        if (upper && v >= self.root.hi[dim]) || (!upper && v <= self.root.lo[dim]) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            match &self.nodes[node] {
                Node::Leaf { region } => out.push(*region),
                Node::Split { dim: d, at, lo, hi } => {
                    let d = *d;
                    if d < self.state_dim {
                        stack.push(if x[d] >= *at { *hi } else { *lo });
                    } else if d == dim {
                        let go_hi = if upper { v >= *at } else { v > *at };
                        stack.push(if go_hi { *hi } else { *lo });
                    } else {
                        if b.hi[d] > *at {
                            stack.push(*hi);
                        }
                        if b.lo[d] < *at {
                            stack.push(*lo);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != TREE_FORMAT_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported region tree format version {}",
                self.format_version
            )));
        }
        if self.joint_dim() != self.state_dim + self.input_dim * self.horizon {
            return Err(Error::dims("region tree root", self.state_dim + self.input_dim * self.horizon, self.joint_dim()));
        }
        let mut seen = vec![false; self.regions.len()];
        for node in &self.nodes {
            match node {
                Node::Leaf { region } => match seen.get_mut(*region) {
                    Some(s) if !*s => *s = true,
                    _ => return Err(Error::InvalidModel(format!("bad leaf reference {region}"))),
                },
                Node::Split { dim, lo, hi, .. } => {
                    if *dim >= self.joint_dim() || *lo >= self.nodes.len() || *hi >= self.nodes.len() {
                        return Err(Error::InvalidModel("bad split node".into()));
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidModel("unreferenced region".into()));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if r.id != i || r.maps.len() != self.horizon || r.bounds.dim() != self.joint_dim() {
                return Err(Error::InvalidModel(format!("malformed region {i}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: RegionTree = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// One row per leaf: id, depth, volume, saturation flag, validation errors.
    pub fn write_stats_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["region".to_owned(), "depth".into(), "volume".into(), "saturated".into()];
        if let Some(r) = self.regions.first() {
            for (k, errs) in r.max_error.iter().enumerate() {
                for j in 0..errs.len() {
                    header.push(format!("error_k{}_y{}", k + 1, j + 1));
                }
            }
        }
        wr.write_record(&header)?;
        for r in &self.regions {
            let mut row = vec![
                r.id.to_string(),
                r.depth.to_string(),
                r.bounds.volume().to_string(),
                r.saturated.to_string(),
            ];
            row.extend(r.max_error.iter().flatten().map(|e| e.to_string()));
            wr.write_record(&row)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
