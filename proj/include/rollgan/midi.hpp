#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rollgan::midi {

// Channel numbers are 0-based internally; the MTX text form prints them
// 1-based.
struct NoteOn {
  std::uint8_t channel;
  std::uint8_t note;
  std::uint8_t velocity;  // 0 is the canonical note-off
};

struct ControlChange {
  std::uint8_t channel;
  std::uint8_t controller;
  std::uint8_t value;
};

struct ProgramChange {
  std::uint8_t channel;
  std::uint8_t program;
};

struct Tempo {
  std::uint32_t microseconds_per_quarter;
};

struct TimeSig {
  std::uint8_t numerator;
  std::uint8_t denominator;  // actual denominator (4, 8, ...), not log2
  std::uint8_t clocks_per_click;
  std::uint8_t notated_32nds;
};

// Unrecognized meta events; sysex payloads use type 0xF0 / 0xF7.
struct Meta {
  std::uint8_t type;
  std::vector<std::uint8_t> bytes;
};

struct EndOfTrack {};

using EventKind =
    std::variant<NoteOn, ControlChange, ProgramChange, Tempo, TimeSig, Meta, EndOfTrack>;

struct Event {
  std::uint32_t tick;  // absolute
  EventKind kind;
};

using Track = std::vector<Event>;

struct MidiFile {
  int format = 1;    // 0 or 1
  int division = 0;  // ticks per quarter note, > 0
  std::vector<Track> tracks;
};

struct MidiError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedHeader : MidiError {
  using MidiError::MidiError;
};
struct TruncatedChunk : MidiError {
  using MidiError::MidiError;
};
struct SmpteDivisionUnsupported : MidiError {
  using MidiError::MidiError;
};
struct BadVarint : MidiError {
  using MidiError::MidiError;
};
struct TickOverflow : MidiError {
  using MidiError::MidiError;
};
struct SyntaxError : MidiError {
  SyntaxError(std::size_t line, const std::string& what)
      : MidiError("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};
struct ValueOutOfRange : MidiError {
  using MidiError::MidiError;
};

/// Parse a Standard MIDI File (format 0 or 1, PPQN division).
/// NoteOff status bytes are normalized to NoteOn with velocity 0.
MidiFile parse_smf(std::span<const std::uint8_t> bytes);

/// Inverse of parse_smf up to event equivalence.
std::vector<std::uint8_t> write_smf(const MidiFile& file);

/// Line-oriented text dump ("MFile <fmt> <ntrks> <div>", "MTrk"/"TrkEnd", ...).
std::string to_mtx(const MidiFile& file);

/// Parse the text form emitted by to_mtx.
MidiFile from_mtx(std::string_view text);

/// All tracks merged into one stream, stable-sorted by tick.
std::vector<Event> merge_tracks(const MidiFile& file);

bool events_equivalent(const MidiFile& a, const MidiFile& b);

}  // namespace rollgan::midi
