#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "rollgan/midi.hpp"
#include "rollgan/preprocess.hpp"

namespace rollgan::pianoroll {

inline constexpr int kImageSize = 64;
inline constexpr int kSlotsPerPixel = 3;  // R, G, B
inline constexpr int kOutputDivision = 120;
inline constexpr int kTicksPerSlot = 30;

// 64x64 RGB raster; channel k of column x holds slot 3x+k, image row y holds
// pitch row 63-y (higher pitches at the top).
struct PianoRollImage {
  std::array<std::uint8_t, kImageSize * kImageSize * 3> pixels{};

  std::uint8_t& at(int y, int x, int c) { return pixels[(y * kImageSize + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(y * kImageSize + x) * 3 + c]; }

  bool operator==(const PianoRollImage&) const = default;
};

struct BadWindowShape : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadImageShape : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PngDecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct WrongDimensions : std::runtime_error {
  using std::runtime_error::runtime_error;
};

PianoRollImage encode_window(const preprocess::NoteGrid& window);

preprocess::NoteGrid decode_image(const PianoRollImage& image, preprocess::GridMode mode);

/// Format-0 SMF at division 120, tempo 500000: one slot = 30 ticks.
/// Each maximal horizontal run of nonzero cells becomes one note.
midi::MidiFile window_to_midi(const preprocess::NoteGrid& window, preprocess::GridMode mode);

std::vector<std::uint8_t> write_png(const PianoRollImage& image);
PianoRollImage read_png(std::span<const std::uint8_t> bytes);

}  // namespace rollgan::pianoroll
