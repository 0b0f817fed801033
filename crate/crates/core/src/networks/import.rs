//! Import of externally trained weights exported as one `.npy` file per
//! state-dict entry (`<dir>/<name>.npy`, e.g. `encoder.layer1.0.conv1.weight.npy`).

use super::params::ParamStore;
use crate::error::{Error, Result};
use endodepth_tensor::{Shape, Tensor};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImportReport {
    pub loaded: usize,
    /// First-layer weights whose input channels were widened for priors.
    pub adapted: Vec<String>,
}

fn read_npy(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let err = |reason: String| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let npy = npyz::NpyFile::new(BufReader::new(file)).map_err(|e| err(e.to_string()))?;
    let shape: Vec<usize> = npy.shape().iter().map(|&d| d as usize).collect();
    if npy.order() != npyz::Order::C {
        return Err(err("Fortran-ordered arrays are not supported".into()));
    }
    let data = match npy.try_data::<f32>() {
        Ok(r) => r
            .map(|v| v.map(f64::from))
            .collect::<std::io::Result<Vec<f64>>>()
            .map_err(|e| err(e.to_string()))?,
        Err(npy) => npy.into_vec::<f64>().map_err(|e| err(e.to_string()))?,
    };
    Ok((shape, data))
}

/// Widen `[o, frames·3, k, k]` to `[o, frames·per_frame, k, k]`: each frame
/// block keeps its RGB filters and every extra prior channel gets the mean
/// of that block's RGB filters.
fn widen_input(w: &Tensor, target: Shape) -> Option<Tensor> {
    let s = w.shape();
    if s.n != target.n || s.h != target.h || s.w != target.w || s.c % 3 != 0 {
        return None;
    }
    let frames = s.c / 3;
    if target.c % frames != 0 || target.c / frames < 3 {
        return None;
    }
    let per = target.c / frames;
    Some(Tensor::from_fn(target, |o, c, y, x| {
        let (f, j) = (c / per, c % per);
        if j < 3 {
            w.at(o, 3 * f + j, y, x)
        } else {
            (0..3).map(|k| w.at(o, 3 * f + k, y, x)).sum::<f64>() / 3.0
        }
    }))
}

fn to_shape(dims: &[usize], data: Vec<f64>, target: Shape, name: &str) -> Result<(Tensor, bool)> {
    let mismatch = || Error::dims(format!("{name} {target}"), format!("{dims:?}"));
    match dims.len() {
        4 => {
            let t = Tensor::from_vec(Shape::new(dims[0], dims[1], dims[2], dims[3]), data);
            if t.shape() == target {
                Ok((t, false))
            } else {
                widen_input(&t, target).map(|t| (t, true)).ok_or_else(mismatch)
            }
        }
        0 | 1 if data.len() == target.len() => Ok((Tensor::from_vec(target, data), false)),
        _ => Err(mismatch()),
    }
}

/// Overwrite every parameter and buffer of `store` from `dir`.
pub fn import_npy_dir(store: &mut ParamStore, dir: &Path) -> Result<ImportReport> {
    let mut report = ImportReport::default();
    let mut params = BTreeMap::new();
    let mut buffers = BTreeMap::new();
    for (is_buffer, map) in [(false, store.params()), (true, store.buffers())] {
        for (name, current) in map {
            let path = dir.join(format!("{name}.npy"));
            if !path.exists() {
                return Err(Error::Checkpoint {
                    path,
                    reason: format!("missing weight file for {name}"),
                });
            }
            let (dims, data) = read_npy(&path)?;
            let (t, adapted) = to_shape(&dims, data, current.shape(), name)?;
            if adapted {
                report.adapted.push(name.clone());
            }
            report.loaded += 1;
            if is_buffer {
                buffers.insert(name.clone(), t);
            } else {
                params.insert(name.clone(), t);
            }
        }
    }
    for (k, v) in params {
        store.insert(k, v);
    }
    for (k, v) in buffers {
        store.insert_buffer(k, v);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use npyz::WriterBuilder;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn write_npy(path: &Path, shape: &[u64], data: &[f32]) {
        let mut file = File::create(path).unwrap();
        let mut w = npyz::WriteOptions::new()
            .default_dtype()
            .shape(shape)
            .writer(&mut file)
            .begin_nd()
            .unwrap();
        w.extend(data.iter().copied()).unwrap();
        w.finish().unwrap();
    }

    #[test]
    fn imports_and_widens_first_layer() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        store.init_conv(&mut ChaCha8Rng::seed_from_u64(0), "conv1", 4, 2, 1, false);
        store.init_batch_norm("bn1", 2);
        // RGB filters [2,3,1,1]
        write_npy(&dir.path().join("conv1.weight.npy"), &[2, 3, 1, 1], &[1.0, 2.0, 3.0, -3.0, 0.0, 0.0]);
        write_npy(&dir.path().join("bn1.weight.npy"), &[2], &[0.5, 0.25]);
        write_npy(&dir.path().join("bn1.bias.npy"), &[2], &[0.0, 1.0]);
        write_npy(&dir.path().join("bn1.running_mean.npy"), &[2], &[0.1, 0.2]);
        write_npy(&dir.path().join("bn1.running_var.npy"), &[2], &[2.0, 4.0]);
        let report = import_npy_dir(&mut store, dir.path()).unwrap();
        assert_eq!(report.loaded, 5);
        assert_eq!(report.adapted, vec!["conv1.weight".to_string()]);
        assert_eq!(store.get("conv1.weight").unwrap().data(), &[1.0, 2.0, 3.0, 2.0, -3.0, 0.0, 0.0, -1.0]);
        assert_eq!(store.buffer("bn1.running_var").unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        store.init_batch_norm("bn", 1);
        let e = import_npy_dir(&mut store, dir.path()).unwrap_err();
        assert!(e.to_string().contains("bn.bias.npy") || e.to_string().contains("bn.weight.npy"));
    }
}
