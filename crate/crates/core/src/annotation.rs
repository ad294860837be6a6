//! Cell classes and the per-tile annotation file.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// The four annotated cell types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CellClass {
    #[serde(rename = "ki67_pos")]
    Ki67Positive,
    #[serde(rename = "ki67_neg")]
    Ki67Negative,
    #[serde(rename = "stroma")]
    Stroma,
    #[serde(rename = "lymphocyte")]
    Lymphocyte,
}

impl CellClass {
    pub const ALL: [CellClass; 4] = [
        CellClass::Ki67Positive,
        CellClass::Ki67Negative,
        CellClass::Stroma,
        CellClass::Lymphocyte,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            CellClass::Ki67Positive => "ki67_pos",
            CellClass::Ki67Negative => "ki67_neg",
            CellClass::Stroma => "stroma",
            CellClass::Lymphocyte => "lymphocyte",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == s)
    }

    /// Class used by the pixel segmentation head: 1 for Ki67-positive
    /// (DAB) nuclei, 2 for every hematoxylin-only nucleus. 0 is background.
    pub fn segmentation_class(self) -> usize {
        match self {
            CellClass::Ki67Positive => 1,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CellClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedCell {
    pub x: f64,
    pub y: f64,
    pub class: CellClass,
}

/// Ground-truth centroids for one tile, in tile pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_magnification")]
    pub magnification: String,
    pub cells: Vec<AnnotatedCell>,
}

fn default_magnification() -> String {
    "base".to_string()
}

impl AnnotationSet {
    pub fn validate(&self) -> Result<()> {
        for c in &self.cells {
            if !(c.x >= 0.0 && c.y >= 0.0 && c.x < self.width as f64 && c.y < self.height as f64) {
                return Err(Error::OutOfBounds {
                    x: c.x as i64,
                    y: c.y as i64,
                    width: self.width,
                    height: self.height,
                });
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<AnnotationSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: AnnotationSet = serde_json::from_str(&text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn class_counts(&self) -> [usize; 4] {
        let mut n = [0; 4];
        for c in &self.cells {
            n[c.class.index()] += 1;
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_roundtrip() {
        for c in CellClass::ALL {
            assert_eq!(CellClass::parse(c.label()), Some(c));
            assert_eq!(CellClass::from_index(c.index()), Some(c));
        }
        assert_eq!(CellClass::parse("tumour"), None);
    }

    #[test]
    fn json_shape_and_bounds() {
        let set = AnnotationSet {
            image_id: "t0".into(),
            width: 10,
            height: 10,
            magnification: "20x".into(),
            cells: vec![AnnotatedCell { x: 1.5, y: 2.0, class: CellClass::Stroma }],
        };
        let text = serde_json::to_string(&set).unwrap();
        assert!(text.contains("\"class\":\"stroma\""));
        let back: AnnotationSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, set);
        let mut bad = set.clone();
        bad.cells[0].x = 10.0;
        assert!(bad.validate().is_err());
    }
}
