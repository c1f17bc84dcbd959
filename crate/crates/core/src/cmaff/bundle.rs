//! Parameter bundles: a text manifest of `(name, file)` pairs, one FTEN file per buffer.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ften::TensorRecord;
use crate::tensor::AffineLayer;

use super::params::{CmaffParams, ConcatReduceParams, CsmParams, DemParams};

pub const MANIFEST_NAME: &str = "manifest.txt";

const LAYER_ORDER: [&str; 6] = [
    "dem.reduce",
    "dem.expand",
    "csm.shared",
    "csm.rgb",
    "csm.ir",
    "concat",
];

/// Writes `params` into `dir` and returns every path written, manifest last.
pub fn save_bundle(params: &CmaffParams<f32>, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    let mut written = Vec::new();
    for (name, layer) in params.named_layers() {
        let w = TensorRecord::new(
            vec![layer.out_dim(), layer.in_dim()],
            layer.weights().to_vec(),
        )?;
        let b = TensorRecord::new(vec![layer.out_dim()], layer.bias().to_vec())?;
        for (suffix, rec) in [("w", w), ("b", b)] {
            let file = format!("{name}.{suffix}.ften");
            let path = dir.join(&file);
            rec.write(&path)?;
            written.push(path);
            manifest.push_str(&format!("{name}.{suffix} {file}\n"));
        }
    }
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Loads a bundle from its manifest path. Entries must appear in the canonical order.
pub fn load_bundle(manifest: impl AsRef<Path>) -> Result<CmaffParams<f32>> {
    let manifest = manifest.as_ref();
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));

    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [name, file] = fields[..] else {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected `name file`, got '{line}'"),
            });
        };
        entries.push((i + 1, name.to_string(), base.join(file)));
    }

    if entries.len() != 10 && entries.len() != 12 {
        return Err(Error::Format(format!(
            "manifest lists {} buffers, expected 10 or 12",
            entries.len()
        )));
    }
    let mut layers = Vec::new();
    for (k, pair) in entries.chunks(2).enumerate() {
        let expect = LAYER_ORDER[k];
        for ((line, name, _), suffix) in pair.iter().zip(["w", "b"]) {
            if *name != format!("{expect}.{suffix}") {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("expected entry '{expect}.{suffix}', found '{name}'"),
                });
            }
        }
        let w = TensorRecord::read(&pair[0].2)?;
        let b = TensorRecord::read(&pair[1].2)?;
        let (out_dim, in_dim) = match w.dims[..] {
            [o, i] => (o, i),
            _ => {
                return Err(Error::Shape(format!(
                    "{expect}: weight file has dims {:?}, expected 2",
                    w.dims
                )))
            }
        };
        if b.dims != [out_dim] {
            return Err(Error::Shape(format!(
                "{expect}: bias dims {:?} do not match {out_dim} outputs",
                b.dims
            )));
        }
        layers.push(AffineLayer::new(in_dim, out_dim, w.data, b.data)?);
    }

    let mut it = layers.into_iter();
    let mut next = || it.next().expect("count checked above");
    let reduce = next();
    let expand = next();
    let channels = reduce.in_dim();
    let ratio = channels.div_ceil(reduce.out_dim());
    let dem = DemParams {
        reduce,
        expand,
        ratio,
    };
    let csm = CsmParams {
        shared: next(),
        branch_rgb: next(),
        branch_ir: next(),
    };
    let concat_reduce = (entries.len() == 12).then(|| ConcatReduceParams { project: next() });
    let params = CmaffParams {
        channels,
        dem,
        csm,
        concat_reduce,
        seed: None,
    };
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmaff::params::init_params;

    fn scratch(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("cmaff-bundle-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn round_trip_with_and_without_concat() {
        for use_concat in [false, true] {
            let dir = scratch(if use_concat { "concat" } else { "plain" });
            let p = CmaffParams::<f32>::init(12, 4, 3, use_concat).unwrap();
            let written = save_bundle(&p, &dir).unwrap();
            assert_eq!(written.len(), if use_concat { 13 } else { 11 });
            let q = load_bundle(dir.join(MANIFEST_NAME)).unwrap();
            assert_eq!(q.flatten(), p.flatten());
            assert_eq!(q.dem.ratio, 4);
            assert_eq!(q.concat_reduce.is_some(), use_concat);
            fs::remove_dir_all(&dir).unwrap();
        }
    }

    #[test]
    fn manifest_order_is_fixed() {
        let dir = scratch("order");
        save_bundle(&init_params(4, 2, 0).unwrap(), &dir).unwrap();
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).unwrap();
        let first: Vec<&str> = text.lines().map(|l| l.split(' ').next().unwrap()).collect();
        assert_eq!(
            first,
            [
                "dem.reduce.w",
                "dem.reduce.b",
                "dem.expand.w",
                "dem.expand.b",
                "csm.shared.w",
                "csm.shared.b",
                "csm.rgb.w",
                "csm.rgb.b",
                "csm.ir.w",
                "csm.ir.b"
            ]
        );
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(0, 2);
        fs::write(&path, lines.join("\n")).unwrap();
        assert!(matches!(
            load_bundle(&path),
            Err(Error::Parse { line: 1, .. })
        ));
        fs::remove_dir_all(&dir).unwrap();
    }
}
