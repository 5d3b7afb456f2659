#include "rollgan/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace rollgan::preprocess {

TempoMap build_tempo_map(const midi::MidiFile& file) {
  TempoMap map;
  map.division = file.division;
  for (const midi::Track& track : file.tracks) {
    for (const midi::Event& ev : track) {
      if (const auto* tempo = std::get_if<midi::Tempo>(&ev.kind))
        map.segments.push_back({ev.tick, tempo->microseconds_per_quarter});
    }
  }
  std::stable_sort(map.segments.begin(), map.segments.end(),
                   [](const TempoSegment& a, const TempoSegment& b) {
                     return a.start_tick < b.start_tick;
                   });
  // duplicate tempos at one tick: last wins
  std::vector<TempoSegment> dedup;
  for (const TempoSegment& s : map.segments) {
    if (!dedup.empty() && dedup.back().start_tick == s.start_tick)
      dedup.back() = s;
    else
      dedup.push_back(s);
  }
  map.segments = std::move(dedup);
  if (map.segments.empty() || map.segments.front().start_tick != 0)
    map.segments.insert(map.segments.begin(), {0, kDefaultTempoUs});
  return map;
}

double ticks_to_seconds(const TempoMap& map, std::uint64_t tick) {
  double seconds = 0.0;
  for (std::size_t i = 0; i < map.segments.size(); ++i) {
    std::uint64_t seg_start = map.segments[i].start_tick;
    if (seg_start >= tick) break;
    std::uint64_t seg_end =
        (i + 1 < map.segments.size()) ? map.segments[i + 1].start_tick : tick;
    std::uint64_t end = std::min<std::uint64_t>(seg_end, tick);
    seconds += double(end - seg_start) / map.division *
               (map.segments[i].us_per_quarter / 1e6);
  }
  return seconds;
}

std::vector<TimedNote> resolve_sustain(std::span<const midi::Event> events, const TempoMap& map,
                                       double cap_s) {
  struct ActiveNote {
    double onset_s;
    std::uint8_t velocity;
  };
  struct SustainedNote {
    double onset_s;
    double deadline_s;  // pedal-down time + cap
    std::uint8_t pitch;
    std::uint8_t velocity;
  };

  std::map<std::pair<int, int>, ActiveNote> active;        // (channel, pitch)
  std::vector<std::vector<SustainedNote>> sustained(16);   // per channel
  bool pedal_down[16] = {};
  double pedal_since[16] = {};

  std::vector<TimedNote> out;
  auto emit = [&out](double onset, double release, std::uint8_t pitch, std::uint8_t vel) {
    if (release > onset) out.push_back({onset, release, pitch, vel});
  };

  double last_s = 0.0;
  for (const midi::Event& ev : events) {
    double t = ticks_to_seconds(map, ev.tick);
    last_s = std::max(last_s, t);
    if (const auto* on = std::get_if<midi::NoteOn>(&ev.kind)) {
      int ch = on->channel;
      auto key = std::make_pair(ch, int(on->note));
      if (on->velocity > 0) {
        if (auto it = active.find(key); it != active.end()) {
          // re-struck while held: previous note ends at the new onset
          emit(it->second.onset_s, t, on->note, it->second.velocity);
          active.erase(it);
        }
        auto& sus = sustained[ch];
        for (auto it = sus.begin(); it != sus.end();) {
          if (it->pitch == on->note) {
            emit(it->onset_s, std::min(t, it->deadline_s), it->pitch, it->velocity);
            it = sus.erase(it);
          } else {
            ++it;
          }
        }
        active[key] = {t, on->velocity};
      } else {
        auto it = active.find(key);
        if (it == active.end()) continue;  // orphan note-off
        ActiveNote note = it->second;
        active.erase(it);
        if (pedal_down[ch] && t < pedal_since[ch] + cap_s) {
          sustained[ch].push_back({note.onset_s, pedal_since[ch] + cap_s, on->note,
                                   note.velocity});
        } else {
          emit(note.onset_s, t, on->note, note.velocity);
        }
      }
    } else if (const auto* cc = std::get_if<midi::ControlChange>(&ev.kind)) {
      if (cc->controller != 64) continue;
      int ch = cc->channel;
      bool down = cc->value >= 64;
      if (down && !pedal_down[ch]) {
        pedal_down[ch] = true;
        pedal_since[ch] = t;
      } else if (!down && pedal_down[ch]) {
        pedal_down[ch] = false;
        for (const SustainedNote& s : sustained[ch])
          emit(s.onset_s, std::min(t, s.deadline_s), s.pitch, s.velocity);
        sustained[ch].clear();
      }
    }
    // everything else (programs, other controllers, metas) is discarded
  }

  // end of file: open notes close at the last event time, sustained ones at their cap
  for (const auto& [key, note] : active)
    emit(note.onset_s, last_s, static_cast<std::uint8_t>(key.second), note.velocity);
  for (const auto& chan : sustained)
    for (const SustainedNote& s : chan) emit(s.onset_s, s.deadline_s, s.pitch, s.velocity);

  std::sort(out.begin(), out.end(), [](const TimedNote& a, const TimedNote& b) {
    return std::tie(a.onset_s, a.pitch, a.release_s) < std::tie(b.onset_s, b.pitch, b.release_s);
  });
  return out;
}

std::vector<QuantizedNote> quantize(std::span<const TimedNote> notes, double slot_s) {
  std::vector<QuantizedNote> out;
  out.reserve(notes.size());
  for (const TimedNote& n : notes) {
    int onset = static_cast<int>(round_half_up(n.onset_s / slot_s));
    int offset = static_cast<int>(round_half_up(n.release_s / slot_s));
    if (offset <= onset) offset = onset + 1;  // no note vanishes
    out.push_back({onset, offset, n.pitch, n.velocity});
  }
  return out;
}

int fold_pitch(int note) {
  while (note < kPitchWindowLow) note += 12;
  while (note > kPitchWindowHigh) note -= 12;
  return note - kPitchWindowLow;
}

NoteGrid to_grid(std::span<const QuantizedNote> notes, GridMode mode) {
  int slots = 0;
  for (const QuantizedNote& n : notes) slots = std::max(slots, n.offset_slot);
  NoteGrid grid;
  grid.mode = mode;
  grid.cells.setZero(kGridRows, slots);
  for (const QuantizedNote& n : notes) {
    int row = fold_pitch(n.pitch);
    std::uint8_t level = mode == GridMode::Binary ? 127 : n.velocity;
    for (int s = n.onset_slot; s < n.offset_slot; ++s)
      grid.cells(row, s) = std::max(grid.cells(row, s), level);
  }
  return grid;
}

NoteGrid collapse_silence(const NoteGrid& grid, int max_gap) {
  Eigen::Index t = grid.slots();
  std::vector<Eigen::Index> keep;
  keep.reserve(t);
  Eigen::Index zero_run = 0;
  bool seen_note = false;
  for (Eigen::Index col = 0; col < t; ++col) {
    bool silent = (grid.cells.col(col).array() == 0).all();
    if (silent) {
      ++zero_run;
    } else {
      if (seen_note) {
        Eigen::Index kept_gap = std::min<Eigen::Index>(zero_run, max_gap);
        for (Eigen::Index g = 0; g < kept_gap; ++g) keep.push_back(col - kept_gap + g);
      }
      seen_note = true;
      zero_run = 0;
      keep.push_back(col);
    }
  }
  // trailing silence dropped entirely
  NoteGrid out;
  out.mode = grid.mode;
  out.cells.resize(kGridRows, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) out.cells.col(i) = grid.cells.col(keep[i]);
  return out;
}

NoteGrid concat_grids(std::span<const NoteGrid> grids) {
  NoteGrid out;
  if (grids.empty()) {
    out.cells.resize(kGridRows, 0);
    return out;
  }
  out.mode = grids.front().mode;
  Eigen::Index total = 0;
  for (const NoteGrid& g : grids) {
    if (g.mode != out.mode) throw ModeMismatch("cannot concatenate grids of different modes");
    total += g.slots();
  }
  out.cells.resize(kGridRows, total);
  Eigen::Index at = 0;
  for (const NoteGrid& g : grids) {
    out.cells.middleCols(at, g.slots()) = g.cells;
    at += g.slots();
  }
  return out;
}

std::vector<NoteGrid> segment(const NoteGrid& grid, int window_slots) {
  std::vector<NoteGrid> windows;
  Eigen::Index count = grid.slots() / window_slots;  // trailing partial dropped
  windows.reserve(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    NoteGrid w;
    w.mode = grid.mode;
    w.cells = grid.cells.middleCols(i * window_slots, window_slots);
    windows.push_back(std::move(w));
  }
  return windows;
}

NoteGrid grid_from_midi(const midi::MidiFile& file, GridMode mode) {
  TempoMap map = build_tempo_map(file);
  auto events = midi::merge_tracks(file);
  auto notes = resolve_sustain(events, map);
  auto quantized = quantize(notes);
  return to_grid(quantized, mode);
}

}  // namespace rollgan::preprocess
