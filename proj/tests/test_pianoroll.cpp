#include <doctest.h>
#include <png.h>

#include <random>

#include "rollgan/midi.hpp"
#include "rollgan/pianoroll.hpp"
#include "support.hpp"

using namespace rollgan;
using namespace rollgan::pianoroll;
using preprocess::GridMode;
using preprocess::NoteGrid;

namespace {

NoteGrid empty_window(GridMode mode = GridMode::Binary) {
  NoteGrid w;
  w.mode = mode;
  w.cells.setZero(64, 192);
  return w;
}

// Arbitrary-size RGB/RGBA PNG for the decoder's shape checks.
std::vector<std::uint8_t> make_png(int w, int h, int color_type) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        v->insert(v->end(), data, data + len);
      },
      [](png_structp) {});
  png_set_IHDR(png, info, w, h, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  int channels = color_type == PNG_COLOR_TYPE_RGB_ALPHA ? 4 : 3;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      row[x * channels + 0] = static_cast<std::uint8_t>((x + y) & 0xFF);
      if (channels == 4) row[x * channels + 3] = 200;
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace

TEST_CASE("a full pixel column is yellow, note-plus-rest is a primary pair") {
  NoteGrid w = empty_window();
  // row 40, slots 0..1 active, slot 2 silent -> pixel (23, 0) = (255, 255, 0)
  w.cells(40, 0) = 127;
  w.cells(40, 1) = 127;
  PianoRollImage img = encode_window(w);
  CHECK(img.at(23, 0, 0) == 255);
  CHECK(img.at(23, 0, 1) == 255);
  CHECK(img.at(23, 0, 2) == 0);
  // everything else black
  long sum = 0;
  for (auto p : img.pixels) sum += p;
  CHECK(sum == 510);

  w.cells(40, 2) = 127;  // all three slots -> white
  img = encode_window(w);
  CHECK(img.at(23, 0, 0) == 255);
  CHECK(img.at(23, 0, 1) == 255);
  CHECK(img.at(23, 0, 2) == 255);
}

TEST_CASE("decode maps image rows back to pitch rows") {
  PianoRollImage img;
  img.at(23, 5, 1) = 200;  // G channel of column 5 -> slot 16, row 63-23=40
  NoteGrid w = decode_image(img, GridMode::Binary);
  CHECK(w.cells(40, 16) == 127);
  CHECK(w.cells.cast<int>().sum() == 127);
}

TEST_CASE("binary decode thresholds at 128") {
  PianoRollImage img;
  img.at(0, 0, 0) = 127;
  img.at(0, 1, 0) = 128;
  NoteGrid w = decode_image(img, GridMode::Binary);
  CHECK(w.cells(63, 0) == 0);
  CHECK(w.cells(63, 3) == 127);
}

TEST_CASE("encode/decode round-trips random binary windows") {
  std::mt19937 rng(2024);
  for (int i = 0; i < 100; ++i) {
    NoteGrid w = testsupport::random_binary_window(rng);
    NoteGrid back = decode_image(encode_window(w), GridMode::Binary);
    CHECK((back.cells.array() == w.cells.array()).all());
  }
}

TEST_CASE("velocity mode round-trips all 128 cell values") {
  NoteGrid w = empty_window(GridMode::Velocity);
  for (int v = 0; v <= 127; ++v) w.cells(v % 64, v) = static_cast<std::uint8_t>(v);
  NoteGrid back = decode_image(encode_window(w), GridMode::Velocity);
  CHECK((back.cells.array() == w.cells.array()).all());
}

TEST_CASE("encode rejects wrong window shapes") {
  NoteGrid w;
  w.mode = GridMode::Binary;
  w.cells.setZero(64, 100);
  CHECK_THROWS_AS(encode_window(w), BadWindowShape);
}

TEST_CASE("window_to_midi emits one note per run") {
  NoteGrid w = empty_window();
  for (int s = 0; s < 4; ++s) w.cells(32, s) = 127;  // pitch 60, slots [0,4)
  midi::MidiFile file = window_to_midi(w, GridMode::Binary);
  CHECK(file.format == 0);
  CHECK(file.division == 120);
  REQUIRE(file.tracks.size() == 1);
  const auto& track = file.tracks[0];
  REQUIRE(track.size() == 4);  // tempo, on, off, end
  CHECK(std::get<midi::Tempo>(track[0].kind).microseconds_per_quarter == 500000);
  auto on = std::get<midi::NoteOn>(track[1].kind);
  CHECK(track[1].tick == 0);
  CHECK(on.note == 60);
  CHECK(on.velocity == 127);
  auto off = std::get<midi::NoteOn>(track[2].kind);
  CHECK(track[2].tick == 120);
  CHECK(off.velocity == 0);
}

TEST_CASE("window_to_midi splits runs at zero slots and keeps the run max velocity") {
  NoteGrid w = empty_window(GridMode::Velocity);
  w.cells(32, 0) = 50;
  w.cells(32, 1) = 90;
  w.cells(32, 3) = 40;
  midi::MidiFile file = window_to_midi(w, GridMode::Velocity);
  const auto& track = file.tracks[0];
  REQUIRE(track.size() == 6);
  CHECK(std::get<midi::NoteOn>(track[1].kind).velocity == 90);
  CHECK(track[2].tick == 60);  // first off
  CHECK(track[3].tick == 90);  // second on
  CHECK(std::get<midi::NoteOn>(track[3].kind).velocity == 40);
}

TEST_CASE("window_to_midi on an empty window is tempo-only") {
  midi::MidiFile file = window_to_midi(empty_window(), GridMode::Binary);
  REQUIRE(file.tracks.size() == 1);
  CHECK(file.tracks[0].size() == 2);
}

TEST_CASE("PNG round trip") {
  std::mt19937 rng(8);
  for (int i = 0; i < 20; ++i) {
    PianoRollImage img = encode_window(testsupport::random_binary_window(rng));
    CHECK(read_png(write_png(img)) == img);
  }
}

TEST_CASE("read_png separates shape errors from decode errors") {
  CHECK_THROWS_AS(read_png(make_png(32, 32, PNG_COLOR_TYPE_RGB)), WrongDimensions);
  CHECK_THROWS_AS(read_png(make_png(64, 32, PNG_COLOR_TYPE_RGB)), WrongDimensions);
  std::vector<std::uint8_t> garbage = {'n', 'o', 't', ' ', 'a', ' ', 'p', 'n', 'g', '!'};
  CHECK_THROWS_AS(read_png(garbage), PngDecodeError);
  auto truncated = make_png(64, 64, PNG_COLOR_TYPE_RGB);
  truncated.resize(truncated.size() / 2);
  CHECK_THROWS_AS(read_png(truncated), PngDecodeError);
}

TEST_CASE("read_png drops an alpha channel") {
  PianoRollImage img = read_png(make_png(64, 64, PNG_COLOR_TYPE_RGB_ALPHA));
  CHECK(img.at(0, 10, 0) == 10);
  CHECK(img.at(0, 10, 1) == 0);
}
