mod exact;
mod grid;
mod operator;
mod parametrix;
mod reference;
mod spectral;
mod tables;

pub use exact::{exact_propagator, kernel_value, ExactKind};
pub use grid::{Grid, WaveFunction};
pub use operator::{apply_chain, compose_subdivision, KernelOperator, Label, Subdivision};
pub use parametrix::{
    build_amplitudes, build_amplitudes_with, build_e0, build_e0_with, build_en_gn, build_en_gn_with, AmplitudeTable,
    NYQUIST_MARGIN,
};
pub use reference::{propagate_block, reference_on_window, reference_propagator, ReferenceBlock, ReferenceOptions};
pub use spectral::{circulant, Spectral};
pub use tables::{
    action_table, cached_action_table, clear_table_cache, gauss_legendre, interp_column, x_laplacian, ActionTable, TableOptions,
};
