#include "rollgan/midi.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <sstream>

namespace rollgan::midi {

namespace {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool eof() const { return pos_ >= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t pos() const { return pos_; }

  std::uint8_t u8() {
    if (eof()) throw TruncatedChunk("unexpected end of data");
    return bytes_[pos_++];
  }

  std::uint8_t peek() const {
    if (eof()) throw TruncatedChunk("unexpected end of data");
    return bytes_[pos_];
  }

  std::uint16_t u16() { return static_cast<std::uint16_t>(u8() << 8 | u8()); }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | u8();
    return v;
  }

  std::uint32_t varint() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      std::uint8_t b = u8();
      v = v << 7 | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    throw BadVarint("variable-length quantity longer than 4 bytes");
  }

  std::vector<std::uint8_t> take(std::size_t n) {
    if (remaining() < n) throw TruncatedChunk("unexpected end of data");
    std::vector<std::uint8_t> out(bytes_.begin() + pos_, bytes_.begin() + pos_ + n);
    pos_ += n;
    return out;
  }

  void skip(std::size_t n) {
    if (remaining() < n) throw TruncatedChunk("unexpected end of data");
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint8_t data_byte(std::uint8_t b) {
  if (b & 0x80) throw MalformedHeader("data byte out of range");
  return b;
}

Track parse_track(std::span<const std::uint8_t> data) {
  Reader r(data);
  Track track;
  std::uint32_t tick = 0;
  std::uint8_t running = 0;
  bool ended = false;
  while (!r.eof() && !ended) {
    tick += r.varint();
    std::uint8_t status = r.peek();
    if (status & 0x80) {
      r.skip(1);
      if (status < 0xF0) running = status;
    } else {
      if (running == 0) throw MalformedHeader("data byte without running status");
      status = running;
    }
    switch (status & 0xF0) {
      case 0x80: {  // note off -> NoteOn v=0, release velocity dropped
        std::uint8_t note = data_byte(r.u8());
        data_byte(r.u8());
        track.push_back({tick, NoteOn{static_cast<std::uint8_t>(status & 0x0F), note, 0}});
        break;
      }
      case 0x90: {
        std::uint8_t note = data_byte(r.u8());
        std::uint8_t vel = data_byte(r.u8());
        track.push_back({tick, NoteOn{static_cast<std::uint8_t>(status & 0x0F), note, vel}});
        break;
      }
      case 0xB0: {
        std::uint8_t ctrl = data_byte(r.u8());
        std::uint8_t val = data_byte(r.u8());
        track.push_back(
            {tick, ControlChange{static_cast<std::uint8_t>(status & 0x0F), ctrl, val}});
        break;
      }
      case 0xC0: {
        std::uint8_t prog = data_byte(r.u8());
        track.push_back({tick, ProgramChange{static_cast<std::uint8_t>(status & 0x0F), prog}});
        break;
      }
      case 0xA0:  // poly aftertouch: not representable, skip
      case 0xE0:  // pitch bend: not representable, skip
        data_byte(r.u8());
        data_byte(r.u8());
        break;
      case 0xD0:  // channel pressure: skip
        data_byte(r.u8());
        break;
      case 0xF0: {
        if (status == 0xF0 || status == 0xF7) {
          running = 0;
          std::uint32_t len = r.varint();
          track.push_back({tick, Meta{status, r.take(len)}});
        } else if (status == 0xFF) {
          running = 0;
          std::uint8_t type = r.u8();
          std::uint32_t len = r.varint();
          auto payload = r.take(len);
          if (type == 0x2F) {
            track.push_back({tick, EndOfTrack{}});
            ended = true;
          } else if (type == 0x51 && len == 3) {
            std::uint32_t us = static_cast<std::uint32_t>(payload[0]) << 16 |
                               static_cast<std::uint32_t>(payload[1]) << 8 | payload[2];
            track.push_back({tick, Tempo{us}});
          } else if (type == 0x58 && len == 4) {
            if (payload[1] > 15) throw MalformedHeader("time signature exponent too large");
            track.push_back({tick, TimeSig{payload[0],
                                           static_cast<std::uint8_t>(1u << payload[1]),
                                           payload[2], payload[3]}});
          } else {
            track.push_back({tick, Meta{type, std::move(payload)}});
          }
        } else {
          throw MalformedHeader("unsupported system message");
        }
        break;
      }
      default:
        throw MalformedHeader("bad status byte");
    }
  }
  if (track.empty() || !std::holds_alternative<EndOfTrack>(track.back().kind))
    track.push_back({tick, EndOfTrack{}});
  return track;
}

}  // namespace

MidiFile parse_smf(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.remaining() < 8 || r.u32() != 0x4D546864u)  // "MThd"
    throw MalformedHeader("missing MThd signature");
  std::uint32_t hlen = r.u32();
  if (hlen < 6) throw MalformedHeader("header chunk too short");
  std::uint16_t format = r.u16();
  std::uint16_t ntrks = r.u16();
  std::uint16_t division = r.u16();
  r.skip(hlen - 6);
  if (format > 1) throw MalformedHeader("only SMF format 0 and 1 supported");
  if (format == 0 && ntrks != 1) throw MalformedHeader("format 0 requires exactly one track");
  if (division & 0x8000) throw SmpteDivisionUnsupported("SMPTE division not supported");
  if (division == 0) throw MalformedHeader("division must be positive");

  MidiFile file;
  file.format = format;
  file.division = division;
  for (std::uint16_t i = 0; i < ntrks; ++i) {
    // skip alien chunks
    while (true) {
      std::uint32_t magic = r.u32();
      std::uint32_t len = r.u32();
      if (magic == 0x4D54726Bu) {  // "MTrk"
        auto data = r.take(len);
        file.tracks.push_back(parse_track(data));
        break;
      }
      r.skip(len);
    }
  }
  return file;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v >> 8);
  out.push_back(v & 0xFF);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back((v >> (8 * i)) & 0xFF);
}

void put_varint(std::vector<std::uint8_t>& out, std::uint32_t v) {
  if (v > 0x0FFFFFFFu) throw TickOverflow("delta time exceeds varint range");
  std::uint8_t buf[4];
  int n = 0;
  do {
    buf[n++] = v & 0x7F;
    v >>= 7;
  } while (v);
  for (int i = n - 1; i > 0; --i) out.push_back(buf[i] | 0x80);
  out.push_back(buf[0]);
}

void write_event(std::vector<std::uint8_t>& out, const EventKind& kind) {
  std::visit(
      [&out](const auto& ev) {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, NoteOn>) {
          out.push_back(0x90 | ev.channel);
          out.push_back(ev.note & 0x7F);
          out.push_back(ev.velocity & 0x7F);
        } else if constexpr (std::is_same_v<T, ControlChange>) {
          out.push_back(0xB0 | ev.channel);
          out.push_back(ev.controller & 0x7F);
          out.push_back(ev.value & 0x7F);
        } else if constexpr (std::is_same_v<T, ProgramChange>) {
          out.push_back(0xC0 | ev.channel);
          out.push_back(ev.program & 0x7F);
        } else if constexpr (std::is_same_v<T, Tempo>) {
          out.push_back(0xFF);
          out.push_back(0x51);
          out.push_back(3);
          out.push_back((ev.microseconds_per_quarter >> 16) & 0xFF);
          out.push_back((ev.microseconds_per_quarter >> 8) & 0xFF);
          out.push_back(ev.microseconds_per_quarter & 0xFF);
        } else if constexpr (std::is_same_v<T, TimeSig>) {
          out.push_back(0xFF);
          out.push_back(0x58);
          out.push_back(4);
          out.push_back(ev.numerator);
          out.push_back(static_cast<std::uint8_t>(std::countr_zero(ev.denominator)));
          out.push_back(ev.clocks_per_click);
          out.push_back(ev.notated_32nds);
        } else if constexpr (std::is_same_v<T, Meta>) {
          if (ev.type == 0xF0 || ev.type == 0xF7) {
            out.push_back(ev.type);
          } else {
            out.push_back(0xFF);
            out.push_back(ev.type);
          }
          put_varint(out, static_cast<std::uint32_t>(ev.bytes.size()));
          out.insert(out.end(), ev.bytes.begin(), ev.bytes.end());
        } else if constexpr (std::is_same_v<T, EndOfTrack>) {
          out.push_back(0xFF);
          out.push_back(0x2F);
          out.push_back(0);
        }
      },
      kind);
}

}  // namespace

std::vector<std::uint8_t> write_smf(const MidiFile& file) {
  if (file.division <= 0 || file.division >= 0x8000)
    throw MalformedHeader("division must be in 1..32767");
  if (file.format != 0 && file.format != 1) throw MalformedHeader("format must be 0 or 1");
  if (file.format == 0 && file.tracks.size() != 1)
    throw MalformedHeader("format 0 requires exactly one track");

  std::vector<std::uint8_t> out;
  out.reserve(1024);
  put_u32(out, 0x4D546864u);
  put_u32(out, 6);
  put_u16(out, static_cast<std::uint16_t>(file.format));
  put_u16(out, static_cast<std::uint16_t>(file.tracks.size()));
  put_u16(out, static_cast<std::uint16_t>(file.division));

  for (const Track& track : file.tracks) {
    std::vector<std::uint8_t> data;
    std::uint32_t tick = 0;
    bool has_end = false;
    for (const Event& ev : track) {
      if (ev.tick < tick) throw MidiError("events not sorted by tick");
      put_varint(data, ev.tick - tick);
      tick = ev.tick;
      write_event(data, ev.kind);
      has_end = std::holds_alternative<EndOfTrack>(ev.kind);
    }
    if (!has_end) {
      put_varint(data, 0);
      write_event(data, EndOfTrack{});
    }
    put_u32(out, 0x4D54726Bu);
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    out.insert(out.end(), data.begin(), data.end());
  }
  return out;
}

std::string to_mtx(const MidiFile& file) {
  std::ostringstream os;
  os << "MFile " << file.format << ' ' << file.tracks.size() << ' ' << file.division << '\n';
  for (const Track& track : file.tracks) {
    os << "MTrk\n";
    for (const Event& ev : track) {
      os << ev.tick << ' ';
      std::visit(
          [&os](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, NoteOn>) {
              os << "On ch=" << int(e.channel) + 1 << " n=" << int(e.note)
                 << " v=" << int(e.velocity);
            } else if constexpr (std::is_same_v<T, ControlChange>) {
              os << "Par ch=" << int(e.channel) + 1 << " c=" << int(e.controller)
                 << " v=" << int(e.value);
            } else if constexpr (std::is_same_v<T, ProgramChange>) {
              os << "PrCh ch=" << int(e.channel) + 1 << " p=" << int(e.program);
            } else if constexpr (std::is_same_v<T, Tempo>) {
              os << "Tempo " << e.microseconds_per_quarter;
            } else if constexpr (std::is_same_v<T, TimeSig>) {
              os << "TimeSig " << int(e.numerator) << '/' << int(e.denominator) << ' '
                 << int(e.clocks_per_click) << ' ' << int(e.notated_32nds);
            } else if constexpr (std::is_same_v<T, Meta>) {
              char buf[8];
              std::snprintf(buf, sizeof buf, "0x%02x", e.type);
              os << "Meta " << buf;
              for (std::uint8_t b : e.bytes) {
                std::snprintf(buf, sizeof buf, " %02x", b);
                os << buf;
              }
            } else if constexpr (std::is_same_v<T, EndOfTrack>) {
              os << "Meta TrkEnd";
            }
          },
          ev.kind);
      os << '\n';
    }
    os << "TrkEnd\n";
  }
  return os.str();
}

namespace {

struct LineParser {
  std::string_view line;
  std::size_t lineno;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  }

  bool done() {
    skip_ws();
    return pos >= line.size();
  }

  std::string_view token() {
    skip_ws();
    std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
    if (start == pos) throw SyntaxError(lineno, "expected token");
    return line.substr(start, pos - start);
  }

  long number(std::string_view tok) {
    long v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
      throw SyntaxError(lineno, "expected number, got '" + std::string(tok) + "'");
    return v;
  }

  long number() { return number(token()); }

  // "ch=3" style field
  long field(std::string_view key) {
    auto tok = token();
    if (tok.size() < key.size() + 2 || tok.substr(0, key.size()) != key ||
        tok[key.size()] != '=')
      throw SyntaxError(lineno, "expected " + std::string(key) + "=<value>");
    return number(tok.substr(key.size() + 1));
  }

  std::uint8_t byte7(long v, const char* what) {
    if (v < 0 || v > 127)
      throw ValueOutOfRange(std::string(what) + " out of range 0..127 at line " +
                            std::to_string(lineno));
    return static_cast<std::uint8_t>(v);
  }
};

}  // namespace

MidiFile from_mtx(std::string_view text) {
  MidiFile file;
  std::size_t declared_tracks = 0;
  bool have_header = false;
  bool in_track = false;
  Track track;

  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    LineParser lp{raw, lineno};
    if (lp.done()) continue;

    if (!have_header) {
      auto tok = lp.token();
      if (tok != "MFile") throw SyntaxError(lineno, "expected MFile header");
      long fmt = lp.number();
      long ntrks = lp.number();
      long div = lp.number();
      if (fmt != 0 && fmt != 1) throw SyntaxError(lineno, "format must be 0 or 1");
      if (div <= 0 || div >= 0x8000) throw SyntaxError(lineno, "bad division");
      if (ntrks < 0) throw SyntaxError(lineno, "bad track count");
      file.format = static_cast<int>(fmt);
      file.division = static_cast<int>(div);
      declared_tracks = static_cast<std::size_t>(ntrks);
      have_header = true;
      continue;
    }

    auto first = lp.token();
    if (first == "MTrk") {
      if (in_track) throw SyntaxError(lineno, "nested MTrk");
      in_track = true;
      track.clear();
      continue;
    }
    if (first == "TrkEnd") {
      if (!in_track) throw SyntaxError(lineno, "TrkEnd outside track");
      if (track.empty() || !std::holds_alternative<EndOfTrack>(track.back().kind)) {
        std::uint32_t t = track.empty() ? 0 : track.back().tick;
        track.push_back({t, EndOfTrack{}});
      }
      file.tracks.push_back(std::move(track));
      track.clear();
      in_track = false;
      continue;
    }
    if (!in_track) throw SyntaxError(lineno, "event outside MTrk block");

    long tick_l = lp.number(first);
    if (tick_l < 0) throw SyntaxError(lineno, "negative tick");
    auto tick = static_cast<std::uint32_t>(tick_l);
    if (!track.empty() && tick < track.back().tick)
      throw SyntaxError(lineno, "ticks not monotone");
    auto kind = lp.token();
    if (kind == "On") {
      long ch = lp.field("ch");
      long n = lp.field("n");
      long v = lp.field("v");
      if (ch < 1 || ch > 16) throw ValueOutOfRange("channel out of range 1..16");
      track.push_back({tick, NoteOn{static_cast<std::uint8_t>(ch - 1), lp.byte7(n, "note"),
                                    lp.byte7(v, "velocity")}});
    } else if (kind == "Par") {
      long ch = lp.field("ch");
      long c = lp.field("c");
      long v = lp.field("v");
      if (ch < 1 || ch > 16) throw ValueOutOfRange("channel out of range 1..16");
      track.push_back({tick, ControlChange{static_cast<std::uint8_t>(ch - 1),
                                           lp.byte7(c, "controller"), lp.byte7(v, "value")}});
    } else if (kind == "PrCh") {
      long ch = lp.field("ch");
      long p = lp.field("p");
      if (ch < 1 || ch > 16) throw ValueOutOfRange("channel out of range 1..16");
      track.push_back(
          {tick, ProgramChange{static_cast<std::uint8_t>(ch - 1), lp.byte7(p, "program")}});
    } else if (kind == "Tempo") {
      long us = lp.number();
      if (us <= 0 || us > 0xFFFFFF) throw ValueOutOfRange("tempo out of range");
      track.push_back({tick, Tempo{static_cast<std::uint32_t>(us)}});
    } else if (kind == "TimeSig") {
      auto frac = lp.token();
      auto slash = frac.find('/');
      if (slash == std::string_view::npos) throw SyntaxError(lineno, "expected <n>/<d>");
      long num = lp.number(frac.substr(0, slash));
      long den = lp.number(frac.substr(slash + 1));
      long clocks = lp.number();
      long n32 = lp.number();
      if (den <= 0 || den > 128 || !std::has_single_bit(static_cast<unsigned>(den)))
        throw ValueOutOfRange("denominator must be a power of two");
      track.push_back({tick, TimeSig{lp.byte7(num, "numerator"),
                                     static_cast<std::uint8_t>(den), lp.byte7(clocks, "clocks"),
                                     lp.byte7(n32, "notated 32nds")}});
    } else if (kind == "Meta") {
      auto sub = lp.token();
      if (sub == "TrkEnd") {
        track.push_back({tick, EndOfTrack{}});
      } else if (sub.size() > 2 && sub.substr(0, 2) == "0x") {
        long type = std::strtol(std::string(sub.substr(2)).c_str(), nullptr, 16);
        std::vector<std::uint8_t> bytes;
        while (!lp.done()) {
          auto hex = lp.token();
          long b = std::strtol(std::string(hex).c_str(), nullptr, 16);
          if (b < 0 || b > 255) throw SyntaxError(lineno, "bad hex byte");
          bytes.push_back(static_cast<std::uint8_t>(b));
        }
        track.push_back({tick, Meta{static_cast<std::uint8_t>(type), std::move(bytes)}});
      } else {
        throw SyntaxError(lineno, "unrecognized meta event");
      }
    } else {
      throw SyntaxError(lineno, "unrecognized event '" + std::string(kind) + "'");
    }
  }
  if (!have_header) throw SyntaxError(lineno, "missing MFile header");
  if (in_track) throw SyntaxError(lineno, "unterminated MTrk block");
  if (declared_tracks != file.tracks.size())
    throw SyntaxError(lineno, "track count does not match header");
  if (file.format == 0 && file.tracks.size() != 1)
    throw SyntaxError(lineno, "format 0 requires exactly one track");
  return file;
}

std::vector<Event> merge_tracks(const MidiFile& file) {
  std::vector<Event> all;
  for (const Track& t : file.tracks)
    for (const Event& e : t)
      if (!std::holds_alternative<EndOfTrack>(e.kind)) all.push_back(e);
  std::stable_sort(all.begin(), all.end(),
                   [](const Event& a, const Event& b) { return a.tick < b.tick; });
  return all;
}

bool events_equivalent(const MidiFile& a, const MidiFile& b) {
  auto kind_eq = [](const EventKind& x, const EventKind& y) {
    if (x.index() != y.index()) return false;
    return std::visit(
        [&y](const auto& ex) {
          using T = std::decay_t<decltype(ex)>;
          const auto& ey = std::get<T>(y);
          if constexpr (std::is_same_v<T, NoteOn>) {
            return ex.channel == ey.channel && ex.note == ey.note && ex.velocity == ey.velocity;
          } else if constexpr (std::is_same_v<T, ControlChange>) {
            return ex.channel == ey.channel && ex.controller == ey.controller &&
                   ex.value == ey.value;
          } else if constexpr (std::is_same_v<T, ProgramChange>) {
            return ex.channel == ey.channel && ex.program == ey.program;
          } else if constexpr (std::is_same_v<T, Tempo>) {
            return ex.microseconds_per_quarter == ey.microseconds_per_quarter;
          } else if constexpr (std::is_same_v<T, TimeSig>) {
            return ex.numerator == ey.numerator && ex.denominator == ey.denominator &&
                   ex.clocks_per_click == ey.clocks_per_click &&
                   ex.notated_32nds == ey.notated_32nds;
          } else if constexpr (std::is_same_v<T, Meta>) {
            return ex.type == ey.type && ex.bytes == ey.bytes;
          } else {
            return true;
          }
        },
        x);
  };
  if (a.format != b.format || a.division != b.division || a.tracks.size() != b.tracks.size())
    return false;
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    if (a.tracks[i].size() != b.tracks[i].size()) return false;
    for (std::size_t j = 0; j < a.tracks[i].size(); ++j) {
      if (a.tracks[i][j].tick != b.tracks[i][j].tick) return false;
      if (!kind_eq(a.tracks[i][j].kind, b.tracks[i][j].kind)) return false;
    }
  }
  return true;
}

}  // namespace rollgan::midi
