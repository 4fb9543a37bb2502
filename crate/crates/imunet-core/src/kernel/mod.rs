//! Numeric kernels for the segmentation network: tensors, convolutions,
//! pooling, batch normalization, elementwise ops, the training loss, and the
//! Adam optimizer. Everything is plain f64 with explicit loops and no
//! external numeric dependencies, which keeps results bit-reproducible.

pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod loss;
pub mod norm;
pub mod ops;
pub mod pool;
pub mod tensor;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use conv::{
    conv2d, conv2d_backward, conv2d_backward_batch, conv2d_batch, transposed_conv,
    transposed_conv_backward_batch, transposed_conv_batch, ConvGrads, ConvParams,
};
pub use loss::{argmax_classes, softmax_cross_entropy};
pub use norm::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, BatchNormCache, BatchNormParams,
};
pub use ops::{
    crop_length, crop_length_backward, mean_height, mean_height_backward, pad_right_edge,
    pad_right_edge_backward, padded_len, relu_backward_batch, relu_batch,
};
pub use pool::{maxpool, maxpool_backward_batch, maxpool_batch, PoolOutput};
pub use tensor::{
    concat_channels, concat_channels_batch, split_channels_batch, Tensor, TensorBatch,
};
