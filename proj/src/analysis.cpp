#include "rollgan/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

namespace rollgan::analysis {

namespace {

bool matches_rotated(unsigned sounding, unsigned pattern) {
  for (int r = 0; r < 12; ++r) {
    unsigned rotated = ((pattern << r) | (pattern >> (12 - r))) & 0xFFF;
    if ((sounding & rotated) == rotated) return true;
  }
  return false;
}

// Pearson correlation of the series against its lag-shifted self over the overlap.
double lag_correlation(const std::vector<double>& series, int lag) {
  int n = static_cast<int>(series.size()) - lag;
  if (n < 2) return 0.0;
  double ma = 0, mb = 0;
  for (int i = 0; i < n; ++i) {
    ma += series[i];
    mb += series[i + lag];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (int i = 0; i < n; ++i) {
    double a = series[i] - ma;
    double b = series[i + lag] - mb;
    cov += a * b;
    va += a * a;
    vb += b * b;
  }
  if (va <= 0 || vb <= 0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace

AnalysisReport analyze(const preprocess::NoteGrid& grid) {
  AnalysisReport report;
  Eigen::Index t = grid.slots();
  if (t == 0) return report;

  std::vector<double> onset_counts(t, 0.0);
  std::uint64_t total_onsets = 0;
  for (int row = 0; row < preprocess::kGridRows; ++row) {
    int pitch_class = (row + preprocess::kPitchWindowLow) % 12;
    for (Eigen::Index s = 0; s < t; ++s) {
      bool active = grid.cells(row, s) != 0;
      bool prev = s > 0 && grid.cells(row, s - 1) != 0;
      if (active && !prev) {
        ++report.pitch_class_histogram[pitch_class];
        ++total_onsets;
        onset_counts[s] += 1.0;
      }
    }
  }
  report.note_density = double(total_onsets) / double(t);

  constexpr unsigned kMajor = (1u << 0) | (1u << 4) | (1u << 7);
  constexpr unsigned kMinor = (1u << 0) | (1u << 3) | (1u << 7);
  constexpr unsigned kQuartal = (1u << 0) | (1u << 5) | (1u << 10);
  for (Eigen::Index s = 0; s < t; ++s) {
    unsigned sounding = 0;
    for (int row = 0; row < preprocess::kGridRows; ++row)
      if (grid.cells(row, s) != 0)
        sounding |= 1u << ((row + preprocess::kPitchWindowLow) % 12);
    if (std::popcount(sounding) < 3) continue;
    ChordQuality q;
    if (matches_rotated(sounding, kMajor))
      q = ChordQuality::Major;
    else if (matches_rotated(sounding, kMinor))
      q = ChordQuality::Minor;
    else if (matches_rotated(sounding, kQuartal))
      q = ChordQuality::Quartal;
    else
      q = ChordQuality::Other;
    report.chord_events.push_back({static_cast<int>(s), q});
  }

  int max_lag = std::min<int>(96, static_cast<int>(t) - 1);
  double best = 0.0;
  for (int lag = 1; lag <= max_lag; ++lag)
    best = std::max(best, lag_correlation(onset_counts, lag));
  report.repeated_rhythm_score = std::clamp(best, 0.0, 1.0);
  return report;
}

const char* chord_quality_name(ChordQuality q) {
  switch (q) {
    case ChordQuality::Major:
      return "major";
    case ChordQuality::Minor:
      return "minor";
    case ChordQuality::Quartal:
      return "quartal";
    default:
      return "other";
  }
}

std::string format_report(const AnalysisReport& report) {
  static const char* kNames[12] = {"C",  "C#", "D",  "D#", "E",  "F",
                                   "F#", "G",  "G#", "A",  "A#", "B"};
  std::ostringstream os;
  os << "note_density " << report.note_density << '\n';
  os << "repeated_rhythm_score " << report.repeated_rhythm_score << '\n';
  os << "pitch_class_histogram";
  for (int i = 0; i < 12; ++i) os << ' ' << kNames[i] << '=' << report.pitch_class_histogram[i];
  os << '\n';
  std::array<int, 4> counts{};
  for (const ChordEvent& c : report.chord_events) counts[static_cast<int>(c.quality)]++;
  os << "chords major=" << counts[0] << " minor=" << counts[1] << " quartal=" << counts[2]
     << " other=" << counts[3] << '\n';
  return os.str();
}

}  // namespace rollgan::analysis
