#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rollgan/preprocess.hpp"

namespace rollgan::analysis {

enum class ChordQuality { Major, Minor, Quartal, Other };

struct ChordEvent {
  int slot;
  ChordQuality quality;
};

struct AnalysisReport {
  std::array<std::uint64_t, 12> pitch_class_histogram{};
  double note_density = 0.0;  // onsets per slot
  std::vector<ChordEvent> chord_events;
  double repeated_rhythm_score = 0.0;  // in [0,1]
};

/// Onsets are starts of maximal horizontal runs. Chords are matched per slot
/// against the pitch-class sets of major, minor and quartal triads under all
/// 12 rotations. Rhythm score is the maximal lag-1..96 autocorrelation of the
/// per-slot onset-count series (0 for a constant series).
AnalysisReport analyze(const preprocess::NoteGrid& grid);

const char* chord_quality_name(ChordQuality q);

std::string format_report(const AnalysisReport& report);

}  // namespace rollgan::analysis
