//! Block-fading channel generation: 3GPP path-loss models, Rayleigh
//! small-scale fading, the equivalent channel through the surface, and noise
//! realizations. All draws are pure functions of an explicit RNG stream, so
//! trial workers with disjoint streams can run concurrently.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{RisMode, SystemConfig};
use crate::error::Error;
use crate::linalg::{CMat, C64};
use crate::Result;

/// Path-loss model for heavily obstructed links (access point to user), dB.
pub fn path_loss_weak(d: f64) -> Result<f64> {
    if d <= 0.0 {
        return Err(Error::config(format!("path loss needs d > 0, got {d}")));
    }
    Ok(41.2 + 28.7 * d.log10())
}

/// Path-loss model for the strong links through the surface, dB.
pub fn path_loss_strong(d: f64) -> Result<f64> {
    if d <= 0.0 {
        return Err(Error::config(format!("path loss needs d > 0, got {d}")));
    }
    Ok(37.3 + 22.0 * d.log10())
}

/// Attenuation in dB to a linear power gain.
pub fn linear_gain(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Node placement for one realization.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub ap: [f64; 2],
    pub ris: [f64; 2],
    pub users: Vec<[f64; 2]>,
}

/// One block-fading realization of all links.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// Direct links, M x K (column k is user k).
    pub direct: CMat,
    /// Access point to surface, M x N.
    pub ap_ris: CMat,
    /// Surface to users, N x K (column k is user k).
    pub ris_user: CMat,
    /// Average linear path gain of the AP-RIS hop.
    pub g_loss: f64,
}

/// Per-channel-use noise draw. The dynamic part is identically zero unless
/// the surface is active.
#[derive(Debug, Clone)]
pub struct NoiseRealization {
    pub static_noise: Vec<C64>,
    pub dynamic_noise: Vec<C64>,
}

fn complex_gaussian(variance: f64, rng: &mut impl Rng) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Places users uniformly in the configured disc; AP and surface are fixed.
pub fn draw_geometry(cfg: &SystemConfig, rng: &mut impl Rng) -> Geometry {
    let users = (0..cfg.users)
        .map(|_| {
            let r = cfg.user_radius * rng.random::<f64>().sqrt();
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            [
                cfg.user_center[0] + r * theta.cos(),
                cfg.user_center[1] + r * theta.sin(),
            ]
        })
        .collect();
    Geometry {
        ap: cfg.ap_pos,
        ris: cfg.ris_pos,
        users,
    }
}

/// Rayleigh fading with the large-scale gain applied as the per-entry
/// variance. Distances are clamped to 1 m, the domain edge of the models.
pub fn draw_channels(
    geom: &Geometry,
    cfg: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<ChannelSet> {
    let m = cfg.antennas;
    let n = cfg.ris_elements;
    let k = cfg.users;
    if geom.users.len() != k {
        return Err(Error::dimension("geometry user count"));
    }
    let clamp = |d: f64| d.max(1.0);

    let mut direct = CMat::zeros(m, k);
    for (u, pos) in geom.users.iter().enumerate() {
        let gain = linear_gain(path_loss_weak(clamp(distance(geom.ap, *pos)))?);
        for r in 0..m {
            direct[(r, u)] = complex_gaussian(gain, rng);
        }
    }

    let d_ap_ris = clamp(distance(geom.ap, geom.ris));
    let g_loss = if n > 0 {
        linear_gain(path_loss_strong(d_ap_ris)?)
    } else {
        0.0
    };
    let mut ap_ris = CMat::zeros(m, n);
    for r in 0..m {
        for c in 0..n {
            ap_ris[(r, c)] = complex_gaussian(g_loss, rng);
        }
    }

    let mut ris_user = CMat::zeros(n, k);
    for (u, pos) in geom.users.iter().enumerate() {
        let gain = linear_gain(path_loss_strong(clamp(distance(geom.ris, *pos)))?);
        for r in 0..n {
            ris_user[(r, u)] = complex_gaussian(gain, rng);
        }
    }

    Ok(ChannelSet {
        direct,
        ap_ris,
        ris_user,
        g_loss,
    })
}

/// Equivalent channel columns `h_k + G diag(phi) f_k`, M x K.
pub fn equivalent_channel(cs: &ChannelSet, phi: &[C64]) -> Result<CMat> {
    let m = cs.direct.rows();
    let k = cs.direct.cols();
    let n = cs.ap_ris.cols();
    if phi.len() != n || cs.ris_user.rows() != n || cs.ris_user.cols() != k {
        return Err(Error::dimension("equivalent_channel: phi/channel shapes"));
    }
    let mut out = cs.direct.clone();
    if n == 0 {
        return Ok(out);
    }
    let mut scaled = vec![C64::new(0.0, 0.0); n];
    for u in 0..k {
        for (i, s) in scaled.iter_mut().enumerate() {
            *s = phi[i] * cs.ris_user[(i, u)];
        }
        for r in 0..m {
            let mut acc = C64::new(0.0, 0.0);
            for (i, s) in scaled.iter().enumerate() {
                acc += cs.ap_ris[(r, i)] * s;
            }
            out[(r, u)] += acc;
        }
    }
    Ok(out)
}

/// Reflected noise path `G diag(phi) n_v`, M-vector.
pub fn reflected_noise(cs: &ChannelSet, phi: &[C64], dynamic_noise: &[C64]) -> Result<Vec<C64>> {
    let m = cs.ap_ris.rows();
    let n = cs.ap_ris.cols();
    if phi.len() != n || dynamic_noise.len() != n {
        return Err(Error::dimension("reflected_noise: shapes"));
    }
    let mut out = vec![C64::new(0.0, 0.0); m];
    for r in 0..m {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            acc += cs.ap_ris[(r, i)] * phi[i] * dynamic_noise[i];
        }
        out[r] = acc;
    }
    Ok(out)
}

/// Synthesizes one received vector `y = sum_i h_eq_i x_i + G diag(phi) n_v + n_s`.
pub fn received_signal(
    cs: &ChannelSet,
    phi: &[C64],
    symbols: &[C64],
    noise: &NoiseRealization,
) -> Result<Vec<C64>> {
    let m = cs.direct.rows();
    if symbols.len() != cs.direct.cols() {
        return Err(Error::dimension("received_signal: symbol count"));
    }
    if noise.static_noise.len() != m {
        return Err(Error::dimension("received_signal: static noise length"));
    }
    let h_eq = equivalent_channel(cs, phi)?;
    let mut y = noise.static_noise.clone();
    for (r, y_r) in y.iter_mut().enumerate() {
        for (u, &x) in symbols.iter().enumerate() {
            *y_r += h_eq[(r, u)] * x;
        }
    }
    if !noise.dynamic_noise.is_empty() {
        let reflected = reflected_noise(cs, phi, &noise.dynamic_noise)?;
        for (y_r, v) in y.iter_mut().zip(reflected) {
            *y_r += v;
        }
    }
    Ok(y)
}

/// Draws static and (in active mode) dynamic noise for one channel use.
pub fn draw_noise(cfg: &SystemConfig, rng: &mut impl Rng) -> NoiseRealization {
    let sigma_s2 = cfg.sigma_s2();
    let static_noise = (0..cfg.antennas)
        .map(|_| complex_gaussian(sigma_s2, rng))
        .collect();
    let sigma_v2 = cfg.sigma_v2();
    let dynamic_noise = if cfg.ris_mode == RisMode::Active && sigma_v2 > 0.0 {
        (0..cfg.ris_elements)
            .map(|_| complex_gaussian(sigma_v2, rng))
            .collect()
    } else {
        vec![C64::new(0.0, 0.0); cfg.ris_elements]
    };
    NoiseRealization {
        static_noise,
        dynamic_noise,
    }
}

// ---------------------------------------------------------------------------
// Channel dump: a small binary container with named complex arrays, used for
// regression fixtures.
// ---------------------------------------------------------------------------

const DUMP_MAGIC: &[u8; 4] = b"RLCD";

fn write_array(w: &mut impl Write, name: &str, mat: &CMat) -> Result<()> {
    let bytes = name.as_bytes();
    w.write_all(&[bytes.len() as u8])?;
    w.write_all(bytes)?;
    w.write_all(&(mat.rows() as u64).to_le_bytes())?;
    w.write_all(&(mat.cols() as u64).to_le_bytes())?;
    for r in 0..mat.rows() {
        for c in 0..mat.cols() {
            let z = mat[(r, c)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array(r: &mut impl Read) -> Result<(String, CMat)> {
    let mut len = [0u8; 1];
    r.read_exact(&mut len)?;
    let mut name = vec![0u8; len[0] as usize];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| Error::Parse("dump: name".into()))?;
    let mut dims = [0u8; 16];
    r.read_exact(&mut dims)?;
    let rows = u64::from_le_bytes(dims[..8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(dims[8..].try_into().unwrap()) as usize;
    let mut mat = CMat::zeros(rows, cols);
    let mut buf = [0u8; 16];
    for i in 0..rows {
        for j in 0..cols {
            r.read_exact(&mut buf)?;
            mat[(i, j)] = Complex64::new(
                f64::from_le_bytes(buf[..8].try_into().unwrap()),
                f64::from_le_bytes(buf[8..].try_into().unwrap()),
            );
        }
    }
    Ok((name, mat))
}

/// Writes H, G, F and the AP-RIS average gain to a binary fixture file.
pub fn write_channel_dump(path: impl AsRef<Path>, cs: &ChannelSet) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(DUMP_MAGIC)?;
    file.write_all(&3u32.to_le_bytes())?;
    write_array(&mut file, "H", &cs.direct)?;
    write_array(&mut file, "G", &cs.ap_ris)?;
    write_array(&mut file, "F", &cs.ris_user)?;
    file.write_all(&cs.g_loss.to_le_bytes())?;
    Ok(())
}

/// Reads a fixture produced by [`write_channel_dump`].
pub fn read_channel_dump(path: impl AsRef<Path>) -> Result<ChannelSet> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Parse("dump: bad magic".into()));
    }
    let mut count = [0u8; 4];
    file.read_exact(&mut count)?;
    if u32::from_le_bytes(count) != 3 {
        return Err(Error::Parse("dump: unexpected array count".into()));
    }
    let mut named = std::collections::HashMap::new();
    for _ in 0..3 {
        let (name, mat) = read_array(&mut file)?;
        named.insert(name, mat);
    }
    let mut gl = [0u8; 8];
    file.read_exact(&mut gl)?;
    let take = |named: &mut std::collections::HashMap<String, CMat>, key: &str| {
        named
            .remove(key)
            .ok_or_else(|| Error::Parse(format!("dump: missing array {key}")))
    };
    Ok(ChannelSet {
        direct: take(&mut named, "H")?,
        ap_ris: take(&mut named, "G")?,
        ris_user: take(&mut named, "F")?,
        g_loss: f64::from_le_bytes(gl),
    })
}
