// Shared test helpers: random MIDI generators and fixture corpora.
#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "rollgan/midi.hpp"
#include "rollgan/preprocess.hpp"

namespace testsupport {

using rollgan::midi::ControlChange;
using rollgan::midi::EndOfTrack;
using rollgan::midi::Event;
using rollgan::midi::Meta;
using rollgan::midi::MidiFile;
using rollgan::midi::NoteOn;
using rollgan::midi::ProgramChange;
using rollgan::midi::Tempo;
using rollgan::midi::TimeSig;
using rollgan::midi::Track;

inline int uniform(std::mt19937& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Arbitrary structurally-valid MidiFile for round-trip properties.
inline MidiFile random_midi_file(std::mt19937& rng) {
  MidiFile file;
  file.format = uniform(rng, 0, 1);
  file.division = uniform(rng, 1, 960);
  int ntrks = file.format == 0 ? 1 : uniform(rng, 1, 4);
  for (int t = 0; t < ntrks; ++t) {
    Track track;
    std::uint32_t tick = 0;
    int nevents = uniform(rng, 0, 40);
    for (int i = 0; i < nevents; ++i) {
      tick += uniform(rng, 0, 500);
      switch (uniform(rng, 0, 6)) {
        case 0:
        case 1:
          track.push_back({tick, NoteOn{static_cast<std::uint8_t>(uniform(rng, 0, 15)),
                                        static_cast<std::uint8_t>(uniform(rng, 0, 127)),
                                        static_cast<std::uint8_t>(uniform(rng, 0, 127))}});
          break;
        case 2:
          track.push_back({tick, ControlChange{static_cast<std::uint8_t>(uniform(rng, 0, 15)),
                                               static_cast<std::uint8_t>(uniform(rng, 0, 127)),
                                               static_cast<std::uint8_t>(uniform(rng, 0, 127))}});
          break;
        case 3:
          track.push_back({tick, ProgramChange{static_cast<std::uint8_t>(uniform(rng, 0, 15)),
                                               static_cast<std::uint8_t>(uniform(rng, 0, 127))}});
          break;
        case 4:
          track.push_back(
              {tick, Tempo{static_cast<std::uint32_t>(uniform(rng, 100000, 2000000))}});
          break;
        case 5: {
          int den_pow = uniform(rng, 0, 5);
          track.push_back({tick, TimeSig{static_cast<std::uint8_t>(uniform(rng, 1, 16)),
                                         static_cast<std::uint8_t>(1 << den_pow),
                                         static_cast<std::uint8_t>(uniform(rng, 1, 96)),
                                         static_cast<std::uint8_t>(uniform(rng, 1, 32))}});
          break;
        }
        default: {
          std::vector<std::uint8_t> payload(uniform(rng, 0, 8));
          for (auto& b : payload) b = static_cast<std::uint8_t>(uniform(rng, 0, 255));
          int type = uniform(rng, 0, 2) == 0 ? 0xF0 : uniform(rng, 1, 0x40);
          if (type == 0x2F || type == 0x51 || type == 0x58) type = 0x01;
          track.push_back({tick, Meta{static_cast<std::uint8_t>(type), std::move(payload)}});
          break;
        }
      }
    }
    track.push_back({tick, EndOfTrack{}});
    file.tracks.push_back(std::move(track));
  }
  return file;
}

/// Piano-like fixture: tempo events, chords and melody as on/off pairs,
/// occasional sustain pedal, one or two tracks.
inline MidiFile fixture_midi(std::mt19937& rng) {
  MidiFile file;
  file.format = 1;
  file.division = std::vector<int>{120, 384, 480}[uniform(rng, 0, 2)];
  int div = file.division;

  Track meta_track;
  meta_track.push_back({0, Tempo{static_cast<std::uint32_t>(uniform(rng, 400000, 700000))}});
  meta_track.push_back({0, TimeSig{4, 4, 24, 8}});
  if (uniform(rng, 0, 1)) {
    auto mid_tick = static_cast<std::uint32_t>(div * uniform(rng, 8, 24));
    meta_track.push_back(
        {mid_tick, Tempo{static_cast<std::uint32_t>(uniform(rng, 400000, 700000))}});
  }
  meta_track.push_back({meta_track.back().tick, EndOfTrack{}});
  file.tracks.push_back(std::move(meta_track));

  Track notes;
  notes.push_back({0, ProgramChange{0, 0}});
  std::uint32_t tick = 0;
  std::vector<Event> events;
  int bars = uniform(rng, 24, 64);
  bool pedal_down = false;
  static const int kChordShapes[4][3] = {{0, 4, 7}, {0, 3, 7}, {0, 5, 10}, {0, 4, 9}};
  for (int beat = 0; beat < bars * 4; ++beat) {
    std::uint32_t beat_tick = tick + static_cast<std::uint32_t>(beat) * div;
    if (uniform(rng, 0, 7) == 0) {
      events.push_back({beat_tick, ControlChange{0, 64, static_cast<std::uint8_t>(
                                                            pedal_down ? 0 : 100)}});
      pedal_down = !pedal_down;
    }
    if (uniform(rng, 0, 2) == 0) {  // chord
      int root = uniform(rng, 36, 72);
      const int* shape = kChordShapes[uniform(rng, 0, 3)];
      std::uint32_t len = static_cast<std::uint32_t>(div * uniform(rng, 1, 4) / 2);
      for (int k = 0; k < 3; ++k) {
        auto pitch = static_cast<std::uint8_t>(root + shape[k]);
        auto vel = static_cast<std::uint8_t>(uniform(rng, 40, 110));
        events.push_back({beat_tick, NoteOn{0, pitch, vel}});
        events.push_back({beat_tick + len, NoteOn{0, pitch, 0}});
      }
    }
    // melody eighths
    int steps = uniform(rng, 0, 2);
    for (int sub = 0; sub < steps; ++sub) {
      auto pitch = static_cast<std::uint8_t>(uniform(rng, 55, 90));
      auto vel = static_cast<std::uint8_t>(uniform(rng, 50, 115));
      std::uint32_t start = beat_tick + static_cast<std::uint32_t>(sub * div / 2);
      std::uint32_t len = static_cast<std::uint32_t>(div * uniform(rng, 1, 3) / 4);
      events.push_back({start, NoteOn{0, pitch, vel}});
      events.push_back({start + std::max<std::uint32_t>(len, 1), NoteOn{0, pitch, 0}});
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.tick < b.tick; });
  notes.insert(notes.end(), events.begin(), events.end());
  std::uint32_t last = notes.empty() ? 0 : notes.back().tick;
  notes.push_back({last, EndOfTrack{}});
  file.tracks.push_back(std::move(notes));
  return file;
}

inline void write_fixture_corpus(const std::filesystem::path& dir, int count,
                                 std::uint32_t seed) {
  std::filesystem::create_directories(dir);
  std::mt19937 rng(seed);
  for (int i = 0; i < count; ++i) {
    auto bytes = rollgan::midi::write_smf(fixture_midi(rng));
    char name[32];
    std::snprintf(name, sizeof name, "fixture_%03d.mid", i);
    std::ofstream out(dir / name, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
}

/// Random binary 64x192 window.
inline rollgan::preprocess::NoteGrid random_binary_window(std::mt19937& rng,
                                                         double density = 0.05) {
  rollgan::preprocess::NoteGrid w;
  w.mode = rollgan::preprocess::GridMode::Binary;
  w.cells.setZero(64, 192);
  std::bernoulli_distribution cell(density);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 192; ++c)
      if (cell(rng)) w.cells(r, c) = 127;
  return w;
}

}  // namespace testsupport
