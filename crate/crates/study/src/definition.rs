use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Result, StudyError};

/// Directory holding the reference images; each method has a sibling
/// directory with files of the same names.
pub const ORIGINAL_DIR: &str = "original";

const IMAGE_EXTENSIONS: &[&str] = &["png", "ppm", "pgm", "pnm", "jpg", "jpeg"];

/// One test image shown against its original.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub image: String,
    pub method: String,
    pub original: PathBuf,
    pub test: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyDefinition {
    pub methods: Vec<String>,
    pub images: Vec<String>,
    /// Image-major: all methods of the first image, then the next image.
    pub stimuli: Vec<Stimulus>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

impl StudyDefinition {
    /// Every original must have a test image for every method.
    pub fn from_parts(root: &Path, images: Vec<String>, methods: Vec<String>) -> Result<Self> {
        if images.is_empty() || methods.is_empty() {
            return Err(StudyError::Invalid("a study needs at least one image and one method".into()));
        }
        let unique: BTreeSet<&String> = methods.iter().collect();
        if unique.len() != methods.len() || methods.iter().any(|m| m.is_empty() || m == ORIGINAL_DIR) {
            return Err(StudyError::Invalid(format!("method names must be distinct, non-empty and not `{ORIGINAL_DIR}`")));
        }
        let stimuli = images
            .iter()
            .flat_map(|image| {
                methods.iter().map(move |method| Stimulus {
                    image: image.clone(),
                    method: method.clone(),
                    original: root.join(ORIGINAL_DIR).join(image),
                    test: root.join(method).join(image),
                })
            })
            .collect();
        Ok(StudyDefinition {
            methods,
            images,
            stimuli,
        })
    }

    /// Scans `root/original` and checks that each `root/<method>` has the
    /// same files.
    pub fn from_dir(root: &Path, methods: &[String]) -> Result<Self> {
        let dir = root.join(ORIGINAL_DIR);
        let entries = std::fs::read_dir(&dir).map_err(|e| StudyError::Io(dir.clone(), e))?;
        let mut images = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| StudyError::Io(dir.clone(), e))?.path();
            if path.is_file() && is_image(&path) {
                images.push(path.file_name().unwrap_or_default().to_string_lossy().into_owned());
            }
        }
        images.sort();
        let def = Self::from_parts(root, images, methods.to_vec())?;
        let missing: Vec<String> = def
            .stimuli
            .iter()
            .filter(|s| !s.test.is_file())
            .map(|s| s.test.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(StudyError::Invalid(format!("missing test images: {}", missing.join(", "))));
        }
        Ok(def)
    }

    pub fn trial_count(&self) -> usize {
        self.stimuli.len()
    }

    /// Stimulus identities recorded in the event log header.
    pub fn fingerprint(&self) -> Vec<String> {
        self.stimuli.iter().map(|s| format!("{}/{}", s.method, s.image)).collect()
    }
}
