// Command-line front end for the MIDI piano-roll / DCGAN pipeline.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rollgan/analysis.hpp"
#include "rollgan/dataset.hpp"
#include "rollgan/gan.hpp"
#include "rollgan/midi.hpp"
#include "rollgan/pianoroll.hpp"
#include "rollgan/preprocess.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rollgan;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Write to a temp file and rename so failures leave no partial output.
void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp_dir = path.parent_path();
  if (const char* env = std::getenv("ROLLGAN_TMPDIR"); env && *env) tmp_dir = env;
  fs::path tmp = tmp_dir / (path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {  // cross-device temp dir: fall back to copy
    fs::copy_file(tmp, path, fs::copy_options::overwrite_existing);
    fs::remove(tmp);
  }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

bool is_midi_path(const fs::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  return ext == ".mid" || ext == ".midi";
}

std::vector<fs::path> sorted_files(const fs::path& dir, bool (*pred)(const fs::path&)) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && pred(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

preprocess::GridMode parse_mode(const std::string& mode) {
  if (mode == "binary") return preprocess::GridMode::Binary;
  if (mode == "velocity") return preprocess::GridMode::Velocity;
  throw CLI::ValidationError("--mode must be binary or velocity");
}

int cmd_convert(const std::string& in, const std::string& out, bool to_mtx_flag,
                bool to_midi_flag) {
  auto bytes = read_file(in);
  bool is_smf = bytes.size() >= 4 && bytes[0] == 'M' && bytes[1] == 'T' && bytes[2] == 'h' &&
                bytes[3] == 'd';
  bool to_mtx = to_mtx_flag || (!to_midi_flag && is_smf);
  if (to_mtx) {
    midi::MidiFile file = midi::parse_smf(bytes);
    write_text_atomic(out, midi::to_mtx(file));
  } else {
    std::string text(bytes.begin(), bytes.end());
    midi::MidiFile file = midi::from_mtx(text);
    write_file_atomic(out, midi::write_smf(file));
  }
  return 0;
}

int cmd_build_dataset(const std::string& midi_dir, const std::string& out_dir,
                      const std::string& mode_str, int window_slots) {
  auto mode = parse_mode(mode_str);
  auto files = sorted_files(midi_dir, is_midi_path);
  std::vector<preprocess::NoteGrid> grids;
  std::vector<std::string> sources;
  for (const auto& path : files) {
    try {
      midi::MidiFile file = midi::parse_smf(read_file(path));
      grids.push_back(preprocess::grid_from_midi(file, mode));
      sources.push_back(path.filename().string());
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << path.string() << ": " << e.what() << '\n';
    }
  }
  if (grids.empty()) throw std::runtime_error("no valid MIDI inputs in " + midi_dir);

  preprocess::NoteGrid corpus = preprocess::collapse_silence(preprocess::concat_grids(grids));
  auto windows = preprocess::segment(corpus, window_slots);

  fs::create_directories(out_dir);
  char name[32];
  for (std::size_t i = 0; i < windows.size(); ++i) {
    pianoroll::PianoRollImage img = pianoroll::encode_window(windows[i]);
    std::snprintf(name, sizeof name, "%06zu.png", i);
    write_file_atomic(fs::path(out_dir) / name, pianoroll::write_png(img));
  }
  json manifest = {
      {"schema_version", 1},
      {"mode", mode_str},
      {"window_slots", window_slots},
      {"sources", sources},
      {"images", windows.size()},
      {"corpus_slots", corpus.slots()},
  };
  write_text_atomic(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << windows.size() << " images from " << sources.size()
            << " files to " << out_dir << '\n';
  return 0;
}

nn::Mat<float> load_dataset_dir(const std::string& dir) {
  auto files = sorted_files(dir, +[](const fs::path& p) { return p.extension() == ".png"; });
  std::vector<pianoroll::PianoRollImage> images;
  images.reserve(files.size());
  for (const auto& path : files) images.push_back(pianoroll::read_png(read_file(path)));
  if (images.empty()) throw std::runtime_error("no PNG images in " + dir);
  return dataset::to_training_data(images);
}

int cmd_train(const std::string& dataset_dir, const std::string& out_dir,
              const std::string& preset, long iterations, int batch_size, unsigned seed,
              long checkpoint_every, const std::string& resume) {
  gan::GanConfig config;
  config.seed = seed;
  config.batch_size = batch_size;
  config.checkpoint_every = checkpoint_every;
  if (preset == "base" || preset == "small-corpus" || preset == "full-dynamics") {
    config.total_iterations = 50000;
  } else if (preset == "extra-iterations") {
    config.total_iterations = 20000;
    if (resume.empty())
      throw std::runtime_error("preset extra-iterations requires --resume <base checkpoint>");
  } else if (!preset.empty()) {
    throw std::runtime_error("unknown preset '" + preset + "'");
  }
  if (iterations >= 0) config.total_iterations = iterations;

  nn::Mat<float> data = load_dataset_dir(dataset_dir);
  fs::create_directories(out_dir);

  gan::Gan<float> net(config.arch, config.seed);
  if (!resume.empty()) net.restore(read_file(resume));

  std::ostringstream csv;
  csv << "iteration,d_loss,g_loss\n";
  long start_iter = net.iteration();
  auto sink = [&](long iter, const std::vector<std::uint8_t>& bytes) {
    char name[48];
    std::snprintf(name, sizeof name, "checkpoint_%08ld.ckpt", iter);
    write_file_atomic(fs::path(out_dir) / name, bytes);
  };
  gan::TrainReport report = gan::train(net, config, data, sink);
  for (std::size_t i = 0; i < report.d_loss.size(); ++i)
    csv << start_iter + static_cast<long>(i) + 1 << ',' << report.d_loss[i] << ','
        << report.g_loss[i] << '\n';
  write_text_atomic(fs::path(out_dir) / "loss.csv", csv.str());
  std::cout << "trained " << report.d_loss.size() << " iterations in " << report.wall_seconds
            << " s\n";
  return 0;
}

int cmd_generate(const std::string& checkpoint, int n, unsigned seed,
                 const std::string& out_dir, const std::string& mode_str) {
  auto mode = parse_mode(mode_str);
  gan::Gan<float> net = gan::Gan<float>::load(read_file(checkpoint));
  nn::Tensor<float> batch = net.sample(n, seed);
  fs::create_directories(out_dir);
  char name[48];
  for (int i = 0; i < n; ++i) {
    pianoroll::PianoRollImage img = dataset::to_pianoroll(batch, i);
    std::snprintf(name, sizeof name, "sample_%04d.png", i);
    write_file_atomic(fs::path(out_dir) / name, pianoroll::write_png(img));
    preprocess::NoteGrid window = pianoroll::decode_image(img, mode);
    midi::MidiFile file = pianoroll::window_to_midi(window, mode);
    std::snprintf(name, sizeof name, "sample_%04d.mid", i);
    write_file_atomic(fs::path(out_dir) / name, midi::write_smf(file));
  }
  std::cout << "wrote " << n << " samples to " << out_dir << '\n';
  return 0;
}

// Pads a grid to whole windows, then checks per window that
// encode -> decode -> midi -> preprocess reproduces the activity bitmap.
bool roundtrip_file_ok(const midi::MidiFile& file) {
  preprocess::NoteGrid grid = preprocess::grid_from_midi(file, preprocess::GridMode::Binary);
  Eigen::Index padded =
      (grid.slots() + preprocess::kWindowSlots - 1) / preprocess::kWindowSlots *
      preprocess::kWindowSlots;
  preprocess::NoteGrid full;
  full.mode = grid.mode;
  full.cells.setZero(preprocess::kGridRows, padded);
  full.cells.leftCols(grid.slots()) = grid.cells;

  for (const preprocess::NoteGrid& window : preprocess::segment(full)) {
    pianoroll::PianoRollImage img = pianoroll::encode_window(window);
    preprocess::NoteGrid decoded = pianoroll::decode_image(img, window.mode);
    if ((decoded.cells.array() != window.cells.array()).any()) return false;
    midi::MidiFile back = pianoroll::window_to_midi(decoded, window.mode);
    preprocess::NoteGrid regrid = preprocess::grid_from_midi(back, window.mode);
    auto activity = [](const preprocess::NoteGrid& g, Eigen::Index slots) {
      Eigen::Matrix<bool, preprocess::kGridRows, Eigen::Dynamic> a(preprocess::kGridRows,
                                                                   slots);
      a.setZero();
      for (Eigen::Index c = 0; c < std::min(slots, g.slots()); ++c)
        for (int r = 0; r < preprocess::kGridRows; ++r) a(r, c) = g.cells(r, c) != 0;
      return a;
    };
    if (regrid.slots() > window.slots()) return false;
    auto a = activity(regrid, preprocess::kWindowSlots);
    auto b = activity(window, preprocess::kWindowSlots);
    if ((a.array() != b.array()).any()) return false;
  }
  return true;
}

int cmd_roundtrip_check(const std::string& midi_dir) {
  auto files = sorted_files(midi_dir, is_midi_path);
  if (files.empty()) throw std::runtime_error("no MIDI files in " + midi_dir);
  bool all_ok = true;
  for (const auto& path : files) {
    bool ok = false;
    try {
      ok = roundtrip_file_ok(midi::parse_smf(read_file(path)));
    } catch (const std::exception& e) {
      std::cerr << "warning: " << path.string() << ": " << e.what() << '\n';
    }
    std::cout << (ok ? "PASS " : "FAIL ") << path.filename().string() << '\n';
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}

analysis::AnalysisReport analyze_path(const fs::path& path, preprocess::GridMode mode) {
  if (path.extension() == ".png") {
    auto img = pianoroll::read_png(read_file(path));
    return analysis::analyze(pianoroll::decode_image(img, mode));
  }
  midi::MidiFile file = midi::parse_smf(read_file(path));
  return analysis::analyze(preprocess::grid_from_midi(file, mode));
}

int cmd_analyze(const std::vector<std::string>& paths, const std::string& mode_str) {
  auto mode = parse_mode(mode_str);
  std::vector<analysis::AnalysisReport> reports;
  for (const auto& p : paths) {
    analysis::AnalysisReport report = analyze_path(p, mode);
    std::cout << "== " << p << '\n' << analysis::format_report(report);
    reports.push_back(std::move(report));
  }
  if (reports.size() == 2) {
    std::cout << "== diff\n";
    std::cout << "note_density_delta " << reports[1].note_density - reports[0].note_density
              << '\n';
    std::cout << "rhythm_score_delta "
              << reports[1].repeated_rhythm_score - reports[0].repeated_rhythm_score << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIDI piano-roll DCGAN pipeline"};
  app.require_subcommand(1);

  std::string in, out, mode = "binary", preset, resume;
  std::vector<std::string> paths;
  bool to_mtx = false, to_midi = false;
  int batch_size = 64, n_samples = 64, window_slots = preprocess::kWindowSlots;
  long iterations = -1, checkpoint_every = 1000;
  unsigned seed = 0;

  auto* convert = app.add_subcommand("convert", "Convert between SMF and MTX text form");
  convert->add_option("input", in)->required();
  convert->add_option("output", out)->required();
  convert->add_flag("--to-mtx", to_mtx, "force MIDI -> MTX");
  convert->add_flag("--to-midi", to_midi, "force MTX -> MIDI");

  auto* build = app.add_subcommand("build-dataset", "Convert a MIDI directory to PNG windows");
  build->add_option("midi_dir", in)->required();
  build->add_option("out_dir", out)->required();
  build->add_option("--mode", mode, "binary|velocity");
  build->add_option("--window-slots", window_slots);

  auto* train = app.add_subcommand("train", "Train the DCGAN on a PNG dataset");
  train->add_option("dataset_dir", in)->required();
  train->add_option("--out", out)->required();
  train->add_option("--preset", preset, "base|extra-iterations|small-corpus|full-dynamics");
  train->add_option("--iterations", iterations);
  train->add_option("--batch-size", batch_size);
  train->add_option("--seed", seed);
  train->add_option("--checkpoint-every", checkpoint_every);
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* generate = app.add_subcommand("generate", "Sample images and MIDI from a checkpoint");
  generate->add_option("checkpoint", in)->required();
  generate->add_option("--n", n_samples)->check(CLI::PositiveNumber);
  generate->add_option("--seed", seed);
  generate->add_option("--out", out)->required();
  generate->add_option("--mode", mode, "binary|velocity");

  auto* roundtrip = app.add_subcommand("roundtrip-check", "Verify codec losslessness per file");
  roundtrip->add_option("midi_dir", in)->required();

  auto* analyze = app.add_subcommand("analyze", "Report pitch/chord/rhythm statistics");
  analyze->add_option("paths", paths)->required();
  analyze->add_option("--mode", mode, "binary|velocity");

  CLI11_PARSE(app, argc, argv);

  try {
    if (convert->parsed()) return cmd_convert(in, out, to_mtx, to_midi);
    if (build->parsed()) return cmd_build_dataset(in, out, mode, window_slots);
    if (train->parsed())
      return cmd_train(in, out, preset, iterations, batch_size, seed, checkpoint_every, resume);
    if (generate->parsed()) return cmd_generate(in, n_samples, seed, out, mode);
    if (roundtrip->parsed()) return cmd_roundtrip_check(in);
    if (analyze->parsed()) return cmd_analyze(paths, mode);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
