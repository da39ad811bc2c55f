// Copyright 2026 The lhbvc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: training, coding, metrics, sweeps and ablations.
// Results go to stdout as JSON (or CSV where noted); errors go to stderr
// with a nonzero exit code.
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lhbvc/checkpoint.hpp"
#include "lhbvc/eval.hpp"
#include "lhbvc/training.hpp"

namespace lhbvc {
namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path);
}

// Raw inputs need --width and --height; y4m files carry their size.
struct VideoArgs {
  int width = 0;
  int height = 0;

  void add(CLI::App* app) {
    app->add_option("--width", width, "Frame width of raw planar RGB input");
    app->add_option("--height", height, "Frame height of raw planar RGB input");
  }
  Video read(const std::string& path) const {
    const bool y4m = std::filesystem::path(path).extension() == ".y4m";
    if (!y4m && (width <= 0 || height <= 0))
      throw std::invalid_argument(path + ": raw input needs --width and --height");
    Video v = read_video(path, width, height);
    if (v.frames.empty()) throw std::runtime_error(path + ": no frames");
    return v;
  }
};

void print(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

double load_level_position(const std::string& text, int levels) {
  std::size_t used = 0;
  const double p = std::stod(text, &used);
  if (used != text.size() || !(p >= 0.0 && p <= levels - 1))
    throw std::invalid_argument("level position '" + text + "' outside [0, " + std::to_string(levels - 1) + "]");
  return p;
}

std::vector<LevelCoefficient> parse_levels(const std::vector<std::string>& list, int points, int levels) {
  if (list.empty()) return sweep_coefficients(levels, points);
  std::vector<LevelCoefficient> out;
  for (const std::string& s : list) out.push_back(LevelCoefficient::from_position(load_level_position(s, levels), levels));
  return out;
}

// --- train --------------------------------------------------------------------

struct TrainArgs {
  std::string model_config;
  std::string train_config;
  std::string data;
  std::string output;
  std::string log;
  std::string resume;
  std::int64_t iterations = 0;
  std::int64_t checkpoint_every = 1000;
  double max_motion = 8.0;
};

void run_train(const TrainArgs& a) {
  std::optional<Trainer> trainer;
  if (!a.resume.empty()) {
    trainer.emplace(Trainer::resume(a.resume));
  } else {
    const ModelConfig mc = a.model_config.empty() ? ModelConfig{} : model_config_from_json(read_json(a.model_config));
    TrainConfig tc = a.train_config.empty() ? desk_train_config() : train_config_from_json(read_json(a.train_config));
    if (a.iterations > 0) tc.iterations = a.iterations;
    trainer.emplace(mc, tc);
  }
  const TrainConfig& tc = trainer->config();
  TripletSource source;
  std::optional<TripletDataset> dataset;
  if (!a.data.empty()) {
    dataset.emplace(a.data, tc.patch_size, tc.batch_size, tc.seed);
    source = dataset->source();
  } else {
    SynthSpec spec;
    spec.batch_size = tc.batch_size;
    spec.patch_size = tc.patch_size;
    spec.max_motion = a.max_motion;
    source = synth_source(spec, tc.seed);
  }
  LoopOptions opt;
  opt.checkpoint = a.output;
  opt.checkpoint_every = a.checkpoint_every;
  opt.log = a.log;
  const std::int64_t until = a.iterations > 0 ? a.iterations : -1;
  trainer->run(source, opt, until);
  const TrainProgress& p = trainer->progress();
  print({{"checkpoint", a.output},
         {"iterations", p.iteration},
         {"learning_rate", p.learning_rate},
         {"smoothed_loss", p.smoothed_loss},
         {"wall_seconds", p.wall_seconds},
         {"parameters", trainer->model().params().parameter_count()}});
}

// --- codec ----------------------------------------------------------------------

struct EncodeArgs {
  std::string input;
  std::string output;
  std::string checkpoint;
  std::string reconstruction;
  int gop = 16;
  int level_pair = 2;
  double level_frac = 1.0;
  VideoArgs video;
};

void run_encode(const EncodeArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Video v = a.video.read(a.input);
  const int levels = ck.config.levels;
  if (a.level_pair < 0 || a.level_pair > levels - 2)
    throw std::invalid_argument("--level-pair must be in [0, " + std::to_string(levels - 2) + "]");
  if (!(a.level_frac >= 0.0 && a.level_frac <= 1.0)) throw std::invalid_argument("--level-frac must be in [0, 1]");
  const EncodeResult r = encode_sequence(*ck.model, v.frames, CodecConfig{a.gop, {a.level_pair, a.level_frac}, {}});
  const std::vector<std::uint8_t> bytes = serialize_bitstream(r.stream);
  write_bytes(a.output, bytes);
  if (!a.reconstruction.empty()) write_video(a.reconstruction, r.reconstructions);
  print({{"frames", v.frames.size()},
         {"width", v.width},
         {"height", v.height},
         {"bytes", bytes.size()},
         {"payload_bytes", r.stream.payload_bytes()},
         {"bpp", bits_per_pixel(r.stream)},
         {"psnr", psnr(r.reconstructions, v.frames)},
         {"levels", [&] {
            nlohmann::json j = nlohmann::json::array();
            for (const LevelBits& l : level_bits(r.stats))
              j.push_back({{"level", l.level}, {"frames", l.frames}, {"mean_bits", l.mean_bits}});
            return j;
          }()}});
}

struct DecodeArgs {
  std::string input;
  std::string output;
  std::string checkpoint;
};

void run_decode(const DecodeArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const std::vector<std::uint8_t> bytes = read_bytes(a.input);
  const Bitstream stream = parse_bitstream(bytes);
  const std::vector<Tensor> frames = decode_sequence(*ck.model, stream);
  write_video(a.output, frames);
  print({{"frames", frames.size()}, {"width", stream.width}, {"height", stream.height}, {"bpp", bits_per_pixel(stream)}});
}

struct PsnrArgs {
  std::string reference;
  std::string distorted;
  VideoArgs video;
};

void run_psnr(const PsnrArgs& a) {
  const Video ref = a.video.read(a.reference), dist = a.video.read(a.distorted);
  nlohmann::json per_frame = nlohmann::json::array();
  if (ref.frames.size() != dist.frames.size())
    throw std::invalid_argument("psnr: " + std::to_string(ref.frames.size()) + " reference frames against " +
                                std::to_string(dist.frames.size()));
  for (std::size_t i = 0; i < ref.frames.size(); ++i) per_frame.push_back(psnr(ref.frames[i], dist.frames[i]));
  print({{"frames", ref.frames.size()}, {"psnr", psnr(ref.frames, dist.frames)}, {"per_frame", per_frame}});
}

// --- evaluation -------------------------------------------------------------------

struct SweepArgs {
  std::string input;
  std::string checkpoint;
  std::string output;
  std::string format = "csv";
  std::vector<std::string> levels;
  int points = 9;
  int gop = 16;
  VideoArgs video;
};

void run_sweep(const SweepArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Video v = a.video.read(a.input);
  const auto bases = parse_levels(a.levels, a.points, ck.config.levels);
  const auto points = rd_sweep(*ck.model, v.frames, a.gop, bases);
  if (a.format == "json") {
    const std::string text = sweep_to_json(points).dump(2) + "\n";
    if (a.output.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(a.output);
      if (!(out << text)) throw std::runtime_error("cannot write " + a.output);
    }
    return;
  }
  if (a.output.empty()) {
    write_sweep_csv(std::cout, points);
  } else {
    write_sweep_csv(a.output, points);
  }
}

struct BdRateArgs {
  std::string anchor;
  std::string test;
};

void run_bdrate(const BdRateArgs& a) {
  const RdCurve anchor = read_curve_csv(a.anchor), test = read_curve_csv(a.test);
  const BdRate r = bd_rate(anchor, test);
  print({{"bd_rate", r.percent},
         {"log_rate_delta", r.log_rate_delta},
         {"psnr_low", r.psnr_low},
         {"psnr_high", r.psnr_high},
         {"linear", r.linear}});
}

struct AblateArgs {
  std::vector<std::string> inputs;
  std::vector<std::string> variants;  // name=checkpoint
  std::vector<std::string> levels;
  int points = 4;
  int gop = 8;
  VideoArgs video;
};

void run_ablate(const AblateArgs& a) {
  std::map<std::string, std::filesystem::path> checkpoints;
  for (const std::string& v : a.variants) {
    const auto eq = v.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == v.size())
      throw std::invalid_argument("--variant expects name=checkpoint, got '" + v + "'");
    checkpoints[v.substr(0, eq)] = v.substr(eq + 1);
  }
  std::vector<std::vector<Tensor>> clips;
  for (const std::string& path : a.inputs) clips.push_back(a.video.read(path).frames);
  const auto it = checkpoints.find("full");
  if (it == checkpoints.end()) throw std::invalid_argument("ablate: no checkpoint for variant 'full'");
  const int levels = load_checkpoint(it->second).config.levels;
  print(ablation_to_json(ablation_run(clips, checkpoints, a.gop, parse_levels(a.levels, a.points, levels))));
}

int run(int argc, char** argv) {
  CLI::App app{"Learned hierarchical bi-directional video codec"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model on a triplet dataset or synthetic triplets");
  t->add_option("--model-config", train.model_config, "Model configuration JSON");
  t->add_option("--train-config", train.train_config, "Training configuration JSON (desk preset when omitted)");
  t->add_option("--data", train.data, "Dataset root; synthetic triplets when omitted");
  t->add_option("--output", train.output, "Checkpoint path")->required();
  t->add_option("--log", train.log, "Training log CSV");
  t->add_option("--resume", train.resume, "Continue from a training checkpoint");
  t->add_option("--iterations", train.iterations, "Stop after this many steps");
  t->add_option("--checkpoint-every", train.checkpoint_every, "Steps between checkpoints");
  t->add_option("--max-motion", train.max_motion, "Largest synthetic displacement in pixels");

  EncodeArgs enc;
  auto* e = app.add_subcommand("encode", "Encode a video file");
  e->add_option("--input", enc.input, "Input video (.y4m or raw planar RGB8)")->required();
  e->add_option("--output", enc.output, "Bitstream path")->required();
  e->add_option("--checkpoint", enc.checkpoint, "Model checkpoint")->required();
  e->add_option("--gop", enc.gop, "GoP size (power of two)");
  e->add_option("--level-pair", enc.level_pair, "Lower trained level of the interpolated pair");
  e->add_option("--level-frac", enc.level_frac, "Interpolation fraction within the pair");
  e->add_option("--reconstruction", enc.reconstruction, "Also write the encoder-side reconstruction");
  enc.video.add(e);

  DecodeArgs dec;
  auto* d = app.add_subcommand("decode", "Decode a bitstream");
  d->add_option("--input", dec.input, "Bitstream path")->required();
  d->add_option("--output", dec.output, "Output video (.y4m or raw planar RGB8)")->required();
  d->add_option("--checkpoint", dec.checkpoint, "Model checkpoint")->required();

  PsnrArgs ps;
  auto* p = app.add_subcommand("psnr", "RGB PSNR between two videos");
  p->add_option("--reference", ps.reference, "Reference video")->required();
  p->add_option("--distorted", ps.distorted, "Distorted video")->required();
  ps.video.add(p);

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Rate-distortion points over gain interpolation positions");
  s->add_option("--input", sw.input, "Input video")->required();
  s->add_option("--checkpoint", sw.checkpoint, "Model checkpoint")->required();
  s->add_option("--levels", sw.levels, "Level positions in [0, levels-1]")->delimiter(',');
  s->add_option("--points", sw.points, "Evenly spaced positions when --levels is omitted");
  s->add_option("--gop", sw.gop, "GoP size");
  s->add_option("--format", sw.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  s->add_option("--output", sw.output, "Output file; stdout when omitted");
  sw.video.add(s);

  BdRateArgs bd;
  auto* b = app.add_subcommand("bdrate", "BD-rate of a test curve against an anchor (CSV with bpp or rate, psnr)");
  b->add_option("anchor", bd.anchor, "Anchor curve CSV")->required();
  b->add_option("test", bd.test, "Test curve CSV")->required();

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "BD-rate and parameter deltas of model variants against 'full'");
  a->add_option("--input", ab.inputs, "Test videos")->required();
  a->add_option("--variant", ab.variants, "name=checkpoint, including full=...")->required();
  a->add_option("--levels", ab.levels, "Level positions")->delimiter(',');
  a->add_option("--points", ab.points, "Evenly spaced positions when --levels is omitted");
  a->add_option("--gop", ab.gop, "GoP size");
  ab.video.add(a);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("lhbvc"));
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*t) run_train(train);
    if (*e) run_encode(enc);
    if (*d) run_decode(dec);
    if (*p) run_psnr(ps);
    if (*s) run_sweep(sw);
    if (*b) run_bdrate(bd);
    if (*a) run_ablate(ab);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace
}  // namespace lhbvc

int main(int argc, char** argv) { return lhbvc::run(argc, argv); }
