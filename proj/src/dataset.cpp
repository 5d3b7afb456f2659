#include "rollgan/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace rollgan::dataset {

using pianoroll::kImageSize;
using pianoroll::PianoRollImage;

nn::Mat<float> to_training_data(std::span<const PianoRollImage> images) {
  const Eigen::Index pixels = 3 * kImageSize * kImageSize;
  nn::Mat<float> data(pixels, static_cast<Eigen::Index>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < kImageSize; ++y)
        for (int x = 0; x < kImageSize; ++x)
          data((c * kImageSize + y) * kImageSize + x, i) =
              images[i].at(y, x, c) / 127.5f - 1.0f;
  }
  return data;
}

PianoRollImage to_pianoroll(const nn::Tensor<float>& batch, Eigen::Index index) {
  PianoRollImage img;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kImageSize; ++y)
      for (int x = 0; x < kImageSize; ++x) {
        double v = std::floor((batch.at(index, c, y, x) + 1.0) * 127.5 + 0.5);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  return img;
}

}  // namespace rollgan::dataset
