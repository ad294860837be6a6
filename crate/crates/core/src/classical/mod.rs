//! Handcrafted-feature baseline: segmentation, 101 features and an RBF SVM.

pub mod features;
pub mod haralick;
pub mod intensity;
pub mod morphology;
pub mod normalize;
pub mod segment;
pub mod shape;
pub mod stain;
pub mod svm;
pub mod zernike;
