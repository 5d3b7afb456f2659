#pragma once

#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>

#include "rollgan/nn.hpp"

namespace rollgan::gan {

using nn::Mat;
using nn::Tensor;
using nn::Vec;

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CorruptCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GanArchitecture {
  int latent_dim = 100;
  // transposed-conv channel chain after the latent; last entry is the image depth
  std::vector<int> gen_channels = {512, 256, 128, 64, 3};
  // strided-conv chain between image depth and the final single channel
  std::vector<int> disc_channels = {64, 128, 256, 512};

  int image_size() const { return 4 << (static_cast<int>(gen_channels.size()) - 1); }
  int image_depth() const { return gen_channels.back(); }
  bool operator==(const GanArchitecture&) const = default;

  static GanArchitecture tiny() { return {4, {8, 3}, {8}}; }
};

struct GanConfig {
  GanArchitecture arch;
  int batch_size = 64;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  long total_iterations = 0;
  std::uint32_t seed = 0;
  long checkpoint_every = 1000;
};

struct TrainReport {
  std::vector<double> d_loss;
  std::vector<double> g_loss;
  std::vector<std::string> checkpoints;
  double wall_seconds = 0;
};

namespace detail {

inline constexpr std::uint32_t kMagic = 0x4B434752u;  // "RGCK"
inline constexpr std::uint32_t kVersion = 1;

struct ByteWriter {
  std::vector<std::uint8_t> bytes;
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back((v >> (8 * i)) & 0xFF);
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back((v >> (8 * i)) & 0xFF);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  template <typename Scalar>
  void f32_array(const Scalar* data, Eigen::Index n) {
    u64(static_cast<std::uint64_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      float f = static_cast<float>(data[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      u32(bits);
    }
  }
};

struct ByteReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;
  void need(std::size_t n) {
    if (pos + n > size) throw CorruptCheckpoint("truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(data[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(data[pos++]) << (8 * i);
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
  template <typename Scalar>
  void f32_array(Scalar* out, Eigen::Index expected) {
    std::uint64_t n = u64();
    if (static_cast<Eigen::Index>(n) != expected)
      throw VersionMismatch("tensor size mismatch");
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t bits = u32();
      float f;
      std::memcpy(&f, &bits, 4);
      out[i] = static_cast<Scalar>(f);
    }
  }
};

}  // namespace detail

template <typename Scalar>
class Gan {
 public:
  Gan(GanArchitecture arch, std::uint32_t seed, Scalar lr = Scalar(2e-4),
      Scalar beta1 = Scalar(0.5), Scalar beta2 = Scalar(0.999))
      : arch_(std::move(arch)), adam_g_(lr, beta1, beta2), adam_d_(lr, beta1, beta2),
        latent_rng_(seed ^ 0x5DEECE66u) {
    if (arch_.disc_channels.size() + 1 != arch_.gen_channels.size())
      throw nn::ShapeMismatch("generator and discriminator chains must mirror each other");
    build();
    std::mt19937 init_rng(seed);
    gen_.init(init_rng);
    disc_.init(init_rng);
  }

  const GanArchitecture& architecture() const { return arch_; }
  long iteration() const { return iteration_; }

  /// z has shape (n, latent_dim, 1, 1); output (n, 3, S, S) in [-1,1].
  Tensor<Scalar> gen_forward(const Tensor<Scalar>& z, bool train = false) {
    if (z.c != arch_.latent_dim || z.h != 1 || z.w != 1)
      throw nn::ShapeMismatch("latent batch must be (n, latent_dim, 1, 1)");
    return gen_.forward(z, train);
  }

  /// images (n, 3, S, S) -> (n, 1, 1, 1) probabilities strictly in (0,1).
  Tensor<Scalar> disc_forward(const Tensor<Scalar>& images, bool train = false) {
    const int s = arch_.image_size();
    if (images.c != arch_.image_depth() || images.h != s || images.w != s)
      throw nn::ShapeMismatch("image batch shape mismatch");
    return disc_.forward(images, train);
  }

  Tensor<Scalar> draw_latent(Eigen::Index n) { return draw_latent(n, latent_rng_); }

  Tensor<Scalar> draw_latent(Eigen::Index n, std::mt19937& rng) const {
    Tensor<Scalar> z(n, arch_.latent_dim, 1, 1);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data[i] = static_cast<Scalar>(dist(rng));
    return z;
  }

  /// One discriminator update (real=1, fake=0) followed by one generator
  /// update (fake=1), both with mean binary cross-entropy.
  std::pair<double, double> train_step(const Tensor<Scalar>& real) {
    if (real.n < 1) throw std::invalid_argument("empty training batch");
    Tensor<Scalar> z = draw_latent(real.n);
    Tensor<Scalar> fake = gen_.forward(z, true);

    disc_.zero_grad();
    Tensor<Scalar> grad;
    Tensor<Scalar> p_real = disc_forward(real, true);
    double loss_real = nn::bce_loss<Scalar>(p_real, Scalar(1), grad);
    disc_.backward(grad);
    Tensor<Scalar> p_fake = disc_forward(fake, true);
    double loss_fake = nn::bce_loss<Scalar>(p_fake, Scalar(0), grad);
    disc_.backward(grad);
    adam_d_.step(disc_params());
    double d_loss = loss_real + loss_fake;

    gen_.zero_grad();
    disc_.zero_grad();
    Tensor<Scalar> p_fake2 = disc_forward(fake, true);
    double g_loss = nn::bce_loss<Scalar>(p_fake2, Scalar(1), grad);
    Tensor<Scalar> dfake = disc_.backward(grad);
    gen_.backward(dfake);
    adam_g_.step(gen_params());

    if (!std::isfinite(d_loss) || !std::isfinite(g_loss))
      throw NonFiniteLoss("non-finite loss at iteration " + std::to_string(iteration_));
    ++iteration_;
    return {d_loss, g_loss};
  }

  /// Inference samples from a seeded latent draw, rescaled to [0,255] later.
  Tensor<Scalar> sample(Eigen::Index n, std::uint32_t seed) {
    std::mt19937 rng(seed);
    Tensor<Scalar> z = draw_latent(n, rng);
    return gen_.forward(z, false);
  }

  std::vector<nn::ParamSlot<Scalar>> gen_params() { return gen_.parameters("gen"); }
  std::vector<nn::ParamSlot<Scalar>> disc_params() { return disc_.parameters("disc"); }
  std::vector<nn::BufferSlot<Scalar>> all_buffers() {
    auto b = gen_.buffers("gen");
    auto d = disc_.buffers("disc");
    b.insert(b.end(), d.begin(), d.end());
    return b;
  }

  nn::Sequential<Scalar>& generator() { return gen_; }
  nn::Sequential<Scalar>& discriminator() { return disc_; }

  std::vector<std::uint8_t> save() {
    detail::ByteWriter w;
    w.u32(detail::kMagic);
    w.u32(detail::kVersion);
    w.u32(static_cast<std::uint32_t>(arch_.latent_dim));
    w.u32(static_cast<std::uint32_t>(arch_.gen_channels.size()));
    for (int c : arch_.gen_channels) w.u32(static_cast<std::uint32_t>(c));
    w.u32(static_cast<std::uint32_t>(arch_.disc_channels.size()));
    for (int c : arch_.disc_channels) w.u32(static_cast<std::uint32_t>(c));

    auto write_slots = [&w](auto slots) {
      w.u32(static_cast<std::uint32_t>(slots.size()));
      for (const auto& s : slots) {
        w.str(s.name);
        w.f32_array(s.value, s.size);
      }
    };
    write_slots(gen_params());
    write_slots(disc_params());
    write_slots(all_buffers());

    auto write_adam = [&w](nn::Adam<Scalar>& adam) {
      w.u64(static_cast<std::uint64_t>(adam.iterations()));
      w.u32(static_cast<std::uint32_t>(adam.first_moments().size()));
      for (const auto& m : adam.first_moments()) w.f32_array(m.data(), m.size());
      for (const auto& v : adam.second_moments()) w.f32_array(v.data(), v.size());
    };
    write_adam(adam_g_);
    write_adam(adam_d_);

    std::ostringstream rng_state;
    rng_state << latent_rng_;
    w.str(rng_state.str());
    w.u64(static_cast<std::uint64_t>(iteration_));

    std::uint32_t crc = crc32(0, w.bytes.data(), static_cast<uInt>(w.bytes.size()));
    w.u32(crc);
    return w.bytes;
  }

  /// Restores parameters, optimizer and RNG state into this instance; the
  /// stored architecture must match.
  void restore(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw CorruptCheckpoint("checkpoint too small");
    std::uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
      stored_crc |= std::uint32_t(bytes[bytes.size() - 4 + i]) << (8 * i);
    std::uint32_t crc = crc32(0, bytes.data(), static_cast<uInt>(bytes.size() - 4));
    if (crc != stored_crc) throw CorruptCheckpoint("checksum mismatch");

    detail::ByteReader r{bytes.data(), bytes.size() - 4};
    if (r.u32() != detail::kMagic) throw CorruptCheckpoint("bad magic");
    if (r.u32() != detail::kVersion) throw VersionMismatch("unsupported checkpoint version");

    GanArchitecture stored;
    stored.latent_dim = static_cast<int>(r.u32());
    stored.gen_channels.resize(r.u32());
    for (int& c : stored.gen_channels) c = static_cast<int>(r.u32());
    stored.disc_channels.resize(r.u32());
    for (int& c : stored.disc_channels) c = static_cast<int>(r.u32());
    if (!(stored == arch_)) throw VersionMismatch("architecture mismatch");

    auto read_slots = [&r](auto slots) {
      if (r.u32() != slots.size()) throw VersionMismatch("tensor count mismatch");
      for (auto& s : slots) {
        if (r.str() != s.name) throw VersionMismatch("tensor name mismatch");
        r.f32_array(s.value, s.size);
      }
    };
    read_slots(gen_params());
    read_slots(disc_params());
    read_slots(all_buffers());

    auto read_adam = [&r](nn::Adam<Scalar>& adam, const std::vector<nn::ParamSlot<Scalar>>& params) {
      long t = static_cast<long>(r.u64());
      std::uint32_t n = r.u32();
      if (n != 0 && n != params.size()) throw VersionMismatch("optimizer state mismatch");
      std::vector<Vec<Scalar>> m, v;
      for (std::uint32_t i = 0; i < n; ++i) {
        m.emplace_back(params[i].size);
        r.f32_array(m.back().data(), params[i].size);
      }
      for (std::uint32_t i = 0; i < n; ++i) {
        v.emplace_back(params[i].size);
        r.f32_array(v.back().data(), params[i].size);
      }
      adam.restore(std::move(m), std::move(v), t);
    };
    read_adam(adam_g_, gen_params());
    read_adam(adam_d_, disc_params());

    std::istringstream rng_state(r.str());
    rng_state >> latent_rng_;
    iteration_ = static_cast<long>(r.u64());
  }

  /// Reads the architecture header and builds a matching instance.
  static Gan load(std::span<const std::uint8_t> bytes, Scalar lr = Scalar(2e-4),
                  Scalar beta1 = Scalar(0.5), Scalar beta2 = Scalar(0.999)) {
    if (bytes.size() < 8) throw CorruptCheckpoint("checkpoint too small");
    detail::ByteReader r{bytes.data(), bytes.size()};
    if (r.u32() != detail::kMagic) throw CorruptCheckpoint("bad magic");
    if (r.u32() != detail::kVersion) throw VersionMismatch("unsupported checkpoint version");
    GanArchitecture arch;
    arch.latent_dim = static_cast<int>(r.u32());
    arch.gen_channels.resize(r.u32());
    for (int& c : arch.gen_channels) c = static_cast<int>(r.u32());
    arch.disc_channels.resize(r.u32());
    for (int& c : arch.disc_channels) c = static_cast<int>(r.u32());
    Gan gan(arch, 0, lr, beta1, beta2);
    gan.restore(bytes);
    return gan;
  }

 private:
  void build() {
    const auto& gc = arch_.gen_channels;
    gen_.add(std::make_unique<nn::ConvTranspose2d<Scalar>>(arch_.latent_dim, gc[0], 4, 1, 0));
    gen_.add(std::make_unique<nn::BatchNorm2d<Scalar>>(gc[0]));
    gen_.add(std::make_unique<nn::ReLU<Scalar>>());
    for (std::size_t i = 1; i + 1 < gc.size(); ++i) {
      gen_.add(std::make_unique<nn::ConvTranspose2d<Scalar>>(gc[i - 1], gc[i], 4, 2, 1));
      gen_.add(std::make_unique<nn::BatchNorm2d<Scalar>>(gc[i]));
      gen_.add(std::make_unique<nn::ReLU<Scalar>>());
    }
    gen_.add(std::make_unique<nn::ConvTranspose2d<Scalar>>(gc[gc.size() - 2], gc.back(), 4, 2, 1));
    gen_.add(std::make_unique<nn::Tanh<Scalar>>());

    const auto& dc = arch_.disc_channels;
    disc_.add(std::make_unique<nn::Conv2d<Scalar>>(arch_.image_depth(), dc[0], 4, 2, 1));
    disc_.add(std::make_unique<nn::LeakyReLU<Scalar>>(Scalar(0.2)));
    for (std::size_t i = 1; i < dc.size(); ++i) {
      disc_.add(std::make_unique<nn::Conv2d<Scalar>>(dc[i - 1], dc[i], 4, 2, 1));
      disc_.add(std::make_unique<nn::BatchNorm2d<Scalar>>(dc[i]));
      disc_.add(std::make_unique<nn::LeakyReLU<Scalar>>(Scalar(0.2)));
    }
    disc_.add(std::make_unique<nn::Conv2d<Scalar>>(dc.back(), 1, 4, 1, 0));
    disc_.add(std::make_unique<nn::Sigmoid<Scalar>>());
  }

  GanArchitecture arch_;
  nn::Sequential<Scalar> gen_, disc_;
  nn::Adam<Scalar> adam_g_, adam_d_;
  std::mt19937 latent_rng_;
  long iteration_ = 0;
};

/// Deterministic cyclic batch order: sample index for global position s is
/// order(epoch)[s % n] with a per-epoch reshuffle derived from the seed.
class BatchSchedule {
 public:
  BatchSchedule(Eigen::Index dataset_size, std::uint32_t seed)
      : n_(dataset_size), seed_(seed) {
    if (n_ < 1) throw EmptyDataset("dataset is empty");
  }

  Eigen::Index index_at(long global_sample) {
    long epoch = global_sample / n_;
    if (epoch != epoch_ || order_.empty()) {
      order_.resize(n_);
      std::iota(order_.begin(), order_.end(), Eigen::Index(0));
      std::mt19937 rng(seed_ + 0x9E3779B9u * static_cast<std::uint32_t>(epoch + 1));
      std::shuffle(order_.begin(), order_.end(), rng);
      epoch_ = epoch;
    }
    return order_[global_sample % n_];
  }

 private:
  Eigen::Index n_;
  std::uint32_t seed_;
  long epoch_ = -1;
  std::vector<Eigen::Index> order_;
};

/// dataset: one image per column, values already scaled to [-1,1], layout
/// (c,h,w) flattened to match Tensor.
template <typename Scalar>
TrainReport train(Gan<Scalar>& gan, const GanConfig& config, const Mat<Scalar>& dataset,
                  const std::function<void(long, const std::vector<std::uint8_t>&)>& sink = {}) {
  if (dataset.cols() == 0) throw EmptyDataset("dataset is empty");
  const int s = gan.architecture().image_size();
  const Eigen::Index pixels =
      static_cast<Eigen::Index>(gan.architecture().image_depth()) * s * s;
  if (dataset.rows() != pixels) throw nn::ShapeMismatch("dataset image size mismatch");

  TrainReport report;
  auto start = std::chrono::steady_clock::now();
  BatchSchedule schedule(dataset.cols(), config.seed);
  const Eigen::Index b = config.batch_size;

  for (long it = 0; it < config.total_iterations; ++it) {
    Tensor<Scalar> batch(b, gan.architecture().image_depth(), s, s);
    long base = gan.iteration() * b;
    for (Eigen::Index j = 0; j < b; ++j)
      batch.data.segment(j * pixels, pixels) = dataset.col(schedule.index_at(base + j));
    auto [d_loss, g_loss] = gan.train_step(batch);
    report.d_loss.push_back(d_loss);
    report.g_loss.push_back(g_loss);
    if (sink && config.checkpoint_every > 0 && gan.iteration() % config.checkpoint_every == 0)
      sink(gan.iteration(), gan.save());
  }
  if (sink) sink(gan.iteration(), gan.save());
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace rollgan::gan
