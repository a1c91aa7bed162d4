//! Toy-scale numeric kernels for the detection-stage fusion block, with
//! analytic gradients and a finite-difference checker.

mod attention;
mod backend;
mod block;
mod dwconv;
mod gradcheck;
mod mlp;
mod norm;
mod params;
mod params_io;
mod scan;
mod sensory;
mod tensor;

pub use attention::{cross_attention, cross_attention_backward, cross_attention_cached, AttentionCache, AttentionParams};
pub use backend::NeuralBackend;
pub use block::{
    block_backward, block_forward, st_block_forward, BlockCache, BlockGradients, BlockOutput, StBlockParams, TextTokens,
};
pub use dwconv::{dwconv7x7, dwconv7x7_backward, DwConvParams, KERNEL};
pub use gradcheck::{compare_gradients, grad_check, grad_check_dwconv_inputs, GradCheckReport, KernelOp, VALIDATED_EPS};
pub use mlp::{gelu, gelu_grad, inverted_mlp, inverted_mlp_backward, inverted_mlp_cached, MlpCache, MlpParams, EXPANSION};
pub use norm::{layer_norm, layer_norm_backward, layer_norm_cached, LayerNormCache, LayerNormParams, LN_EPS};
pub use params::Parameters;
pub use params_io::{read_params, write_params, FORMAT_VERSION, MAGIC};
pub use scan::{selective_scan, selective_scan_backward, selective_scan_cached, ScanCache, ScanParams};
pub use sensory::{SensoryMemory, SENSORY_SLOTS};
pub use tensor::{FeatureGrid, Matrix};
