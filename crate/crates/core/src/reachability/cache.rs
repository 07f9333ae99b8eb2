//! In-memory reach cache and its binary file format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic  b"RCH1"
//! u32    n                 state dimension
//! u64    entries
//! per entry:
//!   u32 + bytes            system id (UTF-8)
//!   u32 + bytes            resolution key (UTF-8)
//!   n x i64                x quantized at 1e-9
//!   i64                    t quantized at 1e-9
//!   n x f64                base point
//!   f64                    horizon
//!   u8                     mode (0 full tube, 1 endpoints only)
//!   u8                     truncated flag
//!   u32, u32               bundle size, node stride
//!   u64                    point count m
//!   m x n x f64            points, row-major
//!   m x u32                s-index per point
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::RwLock;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{reach, ReachCloud, ReachMode, ReachResolution};
use crate::dynamics::InclusionSpec;
use crate::error::{Error, Result};
use crate::solver::IntegratorConfig;
use crate::StateVector;

const MAGIC: &[u8; 4] = b"RCH1";
const QUANTUM: f64 = 1e-9;

fn quantize(v: f64) -> i64 {
    (v / QUANTUM).round() as i64
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CacheKey {
    pub system: String,
    pub resolution: String,
    pub x: Vec<i64>,
    pub t: i64,
}

impl CacheKey {
    pub fn new(system: &str, x: &StateVector, t: f64, resolution: String) -> Self {
        CacheKey {
            system: system.to_string(),
            resolution,
            x: x.iter().map(|v| quantize(*v)).collect(),
            t: quantize(t),
        }
    }
}

/// Shared cache of reach clouds: concurrent readers, exclusive insertion.
#[derive(Debug, Default)]
pub struct ReachCache {
    map: RwLock<BTreeMap<CacheKey, ReachCloud>>,
}

impl ReachCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &CacheKey) -> Option<ReachCloud> {
        self.map.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, cloud: ReachCloud) {
        self.map.write().expect("cache lock").insert(key, cloud);
    }

    /// Cached [`reach`].
    pub fn reach(
        &self,
        f: &InclusionSpec,
        x: &StateVector,
        t: f64,
        cfg: &IntegratorConfig,
        res: &ReachResolution,
    ) -> Result<ReachCloud> {
        let key = CacheKey::new(&f.id(), x, t, res.key(cfg));
        if let Some(c) = self.get(&key) {
            return Ok(c);
        }
        let cloud = reach(f, x, t, cfg, res)?;
        self.insert(key, cloud.clone());
        Ok(cloud)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map = self.map.read().expect("cache lock");
        let entries: Vec<(&CacheKey, &ReachCloud)> = map.iter().collect();
        let mut w = BufWriter::new(File::create(path)?);
        write_entries(&mut w, &entries)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let entries = read_entries(&mut r)?;
        Ok(ReachCache {
            map: RwLock::new(entries.into_iter().collect()),
        })
    }
}

/// Writes one cloud as a single-entry cache file.
pub fn write_cloud_binary(cloud: &ReachCloud, system: &str, resolution: &str, w: impl Write) -> Result<()> {
    let key = CacheKey::new(system, &cloud.base, cloud.horizon, resolution.to_string());
    let mut w = w;
    write_entries(&mut w, &[(&key, cloud)])
}

/// Reads every entry of a cache file.
pub fn read_cloud_binary(r: impl Read) -> Result<Vec<(CacheKey, ReachCloud)>> {
    let mut r = r;
    read_entries(&mut r)
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(format!("invalid UTF-8 key: {e}")))
}

fn write_entries(w: &mut impl Write, entries: &[(&CacheKey, &ReachCloud)]) -> Result<()> {
    let n = entries.first().map_or(0, |(_, c)| c.base.len());
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(n as u32)?;
    w.write_u64::<LittleEndian>(entries.len() as u64)?;
    for (key, cloud) in entries {
        if cloud.base.len() != n || key.x.len() != n {
            return Err(Error::Format("mixed dimensions in one cache file".into()));
        }
        write_str(w, &key.system)?;
        write_str(w, &key.resolution)?;
        for q in &key.x {
            w.write_i64::<LittleEndian>(*q)?;
        }
        w.write_i64::<LittleEndian>(key.t)?;
        for v in cloud.base.iter() {
            w.write_f64::<LittleEndian>(*v)?;
        }
        w.write_f64::<LittleEndian>(cloud.horizon)?;
        w.write_u8(match cloud.mode {
            ReachMode::FullTube => 0,
            ReachMode::EndpointsOnly => 1,
        })?;
        w.write_u8(cloud.truncated as u8)?;
        w.write_u32::<LittleEndian>(cloud.bundle_size)?;
        w.write_u32::<LittleEndian>(cloud.node_stride)?;
        w.write_u64::<LittleEndian>(cloud.points.len() as u64)?;
        for p in &cloud.points {
            for v in p.iter() {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        for s in &cloud.s_index {
            w.write_u32::<LittleEndian>(*s)?;
        }
    }
    Ok(())
}

fn read_entries(r: &mut impl Read) -> Result<Vec<(CacheKey, ReachCloud)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let count = r.read_u64::<LittleEndian>()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let system = read_str(r)?;
        let resolution = read_str(r)?;
        let x = (0..n).map(|_| r.read_i64::<LittleEndian>()).collect::<std::io::Result<Vec<_>>>()?;
        let t = r.read_i64::<LittleEndian>()?;
        let base = (0..n).map(|_| r.read_f64::<LittleEndian>()).collect::<std::io::Result<Vec<_>>>()?;
        let horizon = r.read_f64::<LittleEndian>()?;
        let mode = match r.read_u8()? {
            0 => ReachMode::FullTube,
            1 => ReachMode::EndpointsOnly,
            other => return Err(Error::Format(format!("unknown mode byte {other}"))),
        };
        let truncated = r.read_u8()? != 0;
        let bundle_size = r.read_u32::<LittleEndian>()?;
        let node_stride = r.read_u32::<LittleEndian>()?;
        let m = r.read_u64::<LittleEndian>()? as usize;
        let mut points = Vec::with_capacity(m);
        for _ in 0..m {
            let p = (0..n).map(|_| r.read_f64::<LittleEndian>()).collect::<std::io::Result<Vec<_>>>()?;
            points.push(StateVector::from_vec(p));
        }
        let s_index = (0..m).map(|_| r.read_u32::<LittleEndian>()).collect::<std::io::Result<Vec<_>>>()?;
        out.push((
            CacheKey {
                system,
                resolution,
                x,
                t,
            },
            ReachCloud {
                base: StateVector::from_vec(base),
                horizon,
                points,
                s_index,
                mode,
                bundle_size,
                node_stride,
                truncated,
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::BundlePlan;
    use crate::state;

    #[test]
    fn round_trip_is_bit_identical() {
        let f = InclusionSpec::ball(crate::dynamics::FieldHandle::builtin("linear_safe").unwrap(), 0.1).unwrap();
        let cache = ReachCache::new();
        let res = ReachResolution::new(BundlePlan::constant(4), 2);
        let cfg = IntegratorConfig::default();
        let a = cache.reach(&f, &state(&[0.3, 0.1]), -0.4, &cfg, &res).unwrap();
        cache.reach(&f, &state(&[0.0, 1.0]), 0.2, &cfg, &res).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.rch");
        cache.save(&path).unwrap();
        let loaded = ReachCache::load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        let b = loaded.reach(&f, &state(&[0.3, 0.1]), -0.4, &cfg, &res).unwrap();
        assert_eq!(a, b);
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert!(pa.iter().zip(pb.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let data = b"NOPE\x02\x00\x00\x00";
        assert!(matches!(read_cloud_binary(&data[..]), Err(Error::Format(_))));
    }
}
