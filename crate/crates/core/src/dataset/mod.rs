//! Dataset handling: annotation files, stratified splits, patch sets stored
//! as regenerable provenance records, augmentation and negative mining.

mod annotations;
mod augment;
mod bootstrap;
mod patches;
mod split;

pub use annotations::{
    load_dataset, read_annotations, resolve_image_path, write_annotations, AnnotatedImage,
    AnnotationEntry, ANNOTATION_HEADER,
};
pub use augment::{augment_patch, AugmentMode, Transform, DIHEDRAL, NUM_TRANSFORMS, SHIFTS};
pub use bootstrap::{bootstrap_negatives, scaled_cap, BootstrapReport};
pub use patches::{
    extract_positive_patches, mine_negative_patches, read_manifest, write_manifest, Label,
    MiningConfig, PatchRecord, PatchSet, PatchView, MANIFEST_HEADER,
};
pub use split::{split_indices, subsample_indices, SplitSpec};

/// Splits images into train/validation/test with `split_indices`.
pub fn split_dataset(
    images: Vec<AnnotatedImage>,
    spec: &SplitSpec,
) -> crate::Result<[Vec<AnnotatedImage>; 3]> {
    let flags: Vec<bool> = images.iter().map(AnnotatedImage::has_moth).collect();
    let parts = split_indices(&flags, spec)?;
    let mut slots: Vec<Option<AnnotatedImage>> = images.into_iter().map(Some).collect();
    Ok(parts.map(|idx| idx.into_iter().filter_map(|i| slots[i].take()).collect()))
}
