#include "rollgan/pianoroll.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>

namespace rollgan::pianoroll {

using preprocess::GridMode;
using preprocess::NoteGrid;
using preprocess::round_half_up;

PianoRollImage encode_window(const NoteGrid& window) {
  if (window.cells.rows() != preprocess::kGridRows ||
      window.cells.cols() != preprocess::kWindowSlots)
    throw BadWindowShape("expected a 64x192 window");
  PianoRollImage img;
  for (int row = 0; row < preprocess::kGridRows; ++row) {
    int y = kImageSize - 1 - row;
    for (int x = 0; x < kImageSize; ++x) {
      for (int k = 0; k < kSlotsPerPixel; ++k) {
        std::uint8_t cell = window.cells(row, x * kSlotsPerPixel + k);
        std::uint8_t level;
        if (window.mode == GridMode::Binary)
          level = cell ? 255 : 0;
        else
          level = static_cast<std::uint8_t>(round_half_up(cell * 255.0 / 127.0));
        img.at(y, x, k) = level;
      }
    }
  }
  return img;
}

NoteGrid decode_image(const PianoRollImage& image, GridMode mode) {
  NoteGrid window;
  window.mode = mode;
  window.cells.setZero(preprocess::kGridRows, preprocess::kWindowSlots);
  for (int row = 0; row < preprocess::kGridRows; ++row) {
    int y = kImageSize - 1 - row;
    for (int x = 0; x < kImageSize; ++x) {
      for (int k = 0; k < kSlotsPerPixel; ++k) {
        std::uint8_t level = image.at(y, x, k);
        std::uint8_t cell;
        if (mode == GridMode::Binary)
          cell = level >= 128 ? 127 : 0;
        else
          cell = static_cast<std::uint8_t>(round_half_up(level * 127.0 / 255.0));
        window.cells(row, x * kSlotsPerPixel + k) = cell;
      }
    }
  }
  return window;
}

midi::MidiFile window_to_midi(const NoteGrid& window, GridMode mode) {
  midi::MidiFile file;
  file.format = 0;
  file.division = kOutputDivision;

  midi::Track track;
  track.push_back({0, midi::Tempo{preprocess::kDefaultTempoUs}});

  std::vector<midi::Event> notes;
  Eigen::Index t = window.slots();
  for (int row = 0; row < preprocess::kGridRows; ++row) {
    Eigen::Index s = 0;
    while (s < t) {
      if (window.cells(row, s) == 0) {
        ++s;
        continue;
      }
      Eigen::Index start = s;
      std::uint8_t vel = 0;
      while (s < t && window.cells(row, s) != 0) {
        vel = std::max(vel, window.cells(row, s));
        ++s;
      }
      if (mode == GridMode::Binary) vel = 127;
      auto pitch = static_cast<std::uint8_t>(row + preprocess::kPitchWindowLow);
      notes.push_back({static_cast<std::uint32_t>(start * kTicksPerSlot),
                       midi::NoteOn{0, pitch, vel}});
      notes.push_back(
          {static_cast<std::uint32_t>(s * kTicksPerSlot), midi::NoteOn{0, pitch, 0}});
    }
  }
  std::stable_sort(notes.begin(), notes.end(), [](const midi::Event& a, const midi::Event& b) {
    return a.tick < b.tick;
  });
  track.insert(track.end(), notes.begin(), notes.end());
  std::uint32_t last = track.back().tick;
  track.push_back({last, midi::EndOfTrack{}});
  file.tracks.push_back(std::move(track));
  return file;
}

namespace {

struct PngWriteSink {
  std::vector<std::uint8_t>* out;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* sink = static_cast<PngWriteSink*>(png_get_io_ptr(png));
  sink->out->insert(sink->out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

struct PngReadSource {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

void png_read_from_span(png_structp png, png_bytep out, png_size_t len) {
  auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
  if (src->pos + len > src->size) png_error(png, "read past end of buffer");
  std::memcpy(out, src->data + src->pos, len);
  src->pos += len;
}

}  // namespace

std::vector<std::uint8_t> write_png(const PianoRollImage& image) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw PngDecodeError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw PngDecodeError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw PngDecodeError("png write failed");
  }
  PngWriteSink sink{&out};
  png_set_write_fn(png, &sink, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, kImageSize, kImageSize, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < kImageSize; ++y)
    png_write_row(png, const_cast<png_bytep>(&image.pixels[y * kImageSize * 3]));
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  return out;
}

PianoRollImage read_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw PngDecodeError("not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw PngDecodeError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw PngDecodeError("png_create_info_struct failed");
  }
  std::vector<std::uint8_t> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw PngDecodeError("png decode failed");
  }
  PngReadSource src{bytes.data(), bytes.size(), 0};
  png_set_read_fn(png, &src, png_read_from_span);
  png_read_info(png, info);

  png_uint_32 width = png_get_image_width(png, info);
  png_uint_32 height = png_get_image_height(png, info);
  int depth = png_get_bit_depth(png, info);
  int color = png_get_color_type(png, info);
  if (width != kImageSize || height != kImageSize) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw WrongDimensions("expected a 64x64 image");
  }
  if (depth != 8 || (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_RGB_ALPHA)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw PngDecodeError("expected 8-bit RGB or RGBA");
  }
  if (color == PNG_COLOR_TYPE_RGB_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  PianoRollImage img;
  for (int y = 0; y < kImageSize; ++y) png_read_row(png, &img.pixels[y * kImageSize * 3], nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace rollgan::pianoroll
