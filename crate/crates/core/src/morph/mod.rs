//! Morphable face model: container, synthesis, augmentation, fitting and
//! dataset generation.

mod dataset;
mod fit;
mod generate;
mod model;

pub use dataset::{
    expr_label, generate_dataset, id_label, DatasetManifest, DatasetSpec, FaceRecord, FaceSink, MemorySink,
};
pub use fit::{fit_coeffs, CoeffBlock, FittedCoeffs};
pub use generate::{
    draw_alpha, draw_beta, euler_rotation, generate_face, generate_identity_face, mix_expression,
    render_face, rotate_about_nose, synthesize, GenParams,
};
pub use model::{load_model, make_toy_model, vector_to_cloud, MorphableModel, TOY_EXPR_MM, TOY_SHAPE_MM};
