//! Archive and lexicon I/O, instance ground truth and synthetic maps.

mod archive;
mod instances;
mod lexicon;
mod synth;

pub use archive::{
    decode_map_archive, encode_map_archive, read_map_archive, write_map_archive, MAGIC, NO_INSTANCE,
    NO_LABEL, VERSION,
};
pub use instances::{grow_instances, Connectivity};
pub use lexicon::{load_lexicon, parse_lexicon, QueryLexicon};
pub use synth::{
    class_directions, class_name, generate_synthetic_map, solid_cube, SyntheticSpec,
    MIN_CLASS_SEPARATION_DEG, OTHER_KEY,
};
