#pragma once

#include <span>

#include "rollgan/gan.hpp"
#include "rollgan/pianoroll.hpp"

namespace rollgan::dataset {

/// One image per column, pixels rescaled to [-1,1] via x/127.5 - 1, layout
/// (c,h,w) flattened to match nn::Tensor.
nn::Mat<float> to_training_data(std::span<const pianoroll::PianoRollImage> images);

/// Inverse rescale of one generated image: [-1,1] -> [0,255], half rounds up.
pianoroll::PianoRollImage to_pianoroll(const nn::Tensor<float>& batch, Eigen::Index index);

}  // namespace rollgan::dataset
