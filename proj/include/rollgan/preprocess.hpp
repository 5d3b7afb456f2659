#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "rollgan/midi.hpp"

namespace rollgan::preprocess {

inline constexpr double kSlotSeconds = 0.125;  // sixteenth note at 120 bpm
inline constexpr int kPitchWindowLow = 28;     // 64-row window 28..91, middle C at row 32
inline constexpr int kPitchWindowHigh = 91;
inline constexpr int kGridRows = 64;
inline constexpr int kSilenceCapSlots = 16;  // one 4/4 bar
inline constexpr int kWindowSlots = 192;
inline constexpr std::uint32_t kDefaultTempoUs = 500000;

struct TempoSegment {
  std::uint32_t start_tick;
  std::uint32_t us_per_quarter;
};

struct TempoMap {
  std::vector<TempoSegment> segments;  // starts strictly increasing, first at 0
  int division;
};

struct TimedNote {
  double onset_s;
  double release_s;  // > onset_s
  std::uint8_t pitch;
  std::uint8_t velocity;  // 1..127
};

struct QuantizedNote {
  int onset_slot;
  int offset_slot;  // > onset_slot
  std::uint8_t pitch;
  std::uint8_t velocity;
};

enum class GridMode { Binary, Velocity };

// 64 pitch rows (row 0 = lowest), T sixteenth-note columns, cell = velocity 0..127.
struct NoteGrid {
  Eigen::Matrix<std::uint8_t, kGridRows, Eigen::Dynamic> cells;
  GridMode mode = GridMode::Binary;

  Eigen::Index slots() const { return cells.cols(); }
};

struct ModeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

TempoMap build_tempo_map(const midi::MidiFile& file);
double ticks_to_seconds(const TempoMap& map, std::uint64_t tick);

std::vector<TimedNote> resolve_sustain(std::span<const midi::Event> events, const TempoMap& map,
                                       double cap_s = 3.0);

std::vector<QuantizedNote> quantize(std::span<const TimedNote> notes,
                                    double slot_s = kSlotSeconds);

int fold_pitch(int note);

NoteGrid to_grid(std::span<const QuantizedNote> notes, GridMode mode);

NoteGrid collapse_silence(const NoteGrid& grid, int max_gap = kSilenceCapSlots);

NoteGrid concat_grids(std::span<const NoteGrid> grids);

std::vector<NoteGrid> segment(const NoteGrid& grid, int window_slots = kWindowSlots);

/// Full per-file pipeline without silence collapsing:
/// tempo map -> merge tracks -> sustain -> quantize -> grid.
NoteGrid grid_from_midi(const midi::MidiFile& file, GridMode mode);

inline long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

}  // namespace rollgan::preprocess
