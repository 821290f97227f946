//! Labeled image folders: `<root>/<split>/<class>/<image>`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{io_err, Error, Result};
use crate::image::ImageTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageTensor>,
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    /// The first `per_class` samples of each class, in class order.
    pub fn balanced_subset(&self, per_class: usize) -> Result<Dataset> {
        let mut idx = Vec::new();
        for c in 0..self.classes() {
            let members: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == c).take(per_class).collect();
            if members.len() < per_class {
                return Err(Error::Invalid(format!(
                    "class `{}` has {} samples, {per_class} requested",
                    self.class_names[c],
                    members.len()
                )));
            }
            idx.extend(members);
        }
        Ok(self.select(&idx))
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            images: idx.iter().map(|&i| self.images[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Per-channel mean over every pixel of every image.
    pub fn channel_means(&self) -> [f32; 3] {
        if self.is_empty() {
            return [0.0; 3];
        }
        let mut acc = [0.0f64; 3];
        for img in &self.images {
            let m = img.channel_means();
            for c in 0..3 {
                acc[c] += m[c] as f64;
            }
        }
        acc.map(|a| (a / self.len() as f64) as f32)
    }
}

/// Parses a subset selector of the form `balanced:<total>`.
pub fn parse_subset(spec: &str, classes: usize) -> Result<usize> {
    let total: usize = spec
        .strip_prefix("balanced:")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::Invalid(format!("subset `{spec}` is not of the form balanced:<count>")))?;
    if classes == 0 || !total.is_multiple_of(classes) || total == 0 {
        return Err(Error::Invalid(format!("subset size {total} is not a positive multiple of {classes} classes")));
    }
    Ok(total / classes)
}

pub(crate) fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

pub(crate) fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

/// Loads `<root>/<split>`, resizing to `resolution` and keeping the first
/// `size / classes` files (sorted by name) of every class when `size` is set.
pub fn load_split(root: &Path, split: &str, resolution: usize, size: Option<usize>) -> Result<Dataset> {
    let dir = root.join(split);
    let class_dirs: Vec<PathBuf> = sorted_entries(&dir)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::Missing(format!("no class folders under {}", dir.display())));
    }
    let per_class = match size {
        Some(s) if s % class_dirs.len() != 0 => {
            return Err(Error::Invalid(format!("split size {s} is not divisible by {} classes", class_dirs.len())))
        }
        Some(s) => Some(s / class_dirs.len()),
        None => None,
    };
    let mut ds = Dataset { images: Vec::new(), labels: Vec::new(), ids: Vec::new(), class_names: Vec::new() };
    for (label, cdir) in class_dirs.iter().enumerate() {
        let name = cdir.file_name().unwrap().to_string_lossy().to_string();
        let files: Vec<PathBuf> = sorted_entries(cdir)?.into_iter().filter(|p| is_image_file(p)).collect();
        let take = per_class.unwrap_or(files.len());
        if files.len() < take {
            return Err(Error::Missing(format!("class `{name}` in {} has {} images, {take} needed", dir.display(), files.len())));
        }
        for f in &files[..take] {
            let img = ImageTensor::load(f)?.resized(resolution, resolution)?;
            ds.images.push(img);
            ds.labels.push(label);
            ds.ids.push(format!("{name}/{}", f.file_stem().unwrap().to_string_lossy()));
        }
        ds.class_names.push(name);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_parsing() {
        assert_eq!(parse_subset("balanced:100", 10).unwrap(), 10);
        assert!(parse_subset("balanced:15", 10).is_err());
        assert!(parse_subset("random:10", 10).is_err());
        assert!(parse_subset("balanced:0", 10).is_err());
    }

    #[test]
    fn loads_a_tiny_folder() {
        let dir = tempfile::tempdir().unwrap();
        for class in ["b", "a"] {
            let cdir = dir.path().join("train").join(class);
            fs::create_dir_all(&cdir).unwrap();
            for i in 0..3 {
                let shade = if class == "a" { 0.2 } else { 0.8 };
                ImageTensor::filled(40, 40, [shade, 0.5, i as f32 / 4.0]).unwrap().save(&cdir.join(format!("{i}.png"))).unwrap();
            }
        }
        let ds = load_split(dir.path(), "train", 32, Some(4)).unwrap();
        assert_eq!(ds.class_names, vec!["a", "b"]);
        assert_eq!(ds.labels, vec![0, 0, 1, 1]);
        assert_eq!(ds.ids[3], "b/1");
        assert_eq!(ds.images[0].height(), 32);
        let sub = ds.balanced_subset(1).unwrap();
        assert_eq!(sub.labels, vec![0, 1]);
        assert!(ds.balanced_subset(3).is_err());
        assert!(load_split(dir.path(), "train", 32, Some(3)).is_err());
        assert!(load_split(dir.path(), "test", 32, None).is_err());
    }
}
