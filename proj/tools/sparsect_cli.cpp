// sparsect: command-line pipeline from phantoms to the evaluation report.
//
//   sparsect phantom   --out DIR --seed N
//   sparsect project   --in DIR --out DIR
//   sparsect subsample --in DIR --out DIR --factor 20
//   sparsect fbp       --in DIR --out DIR --window ramlak
//   sparsect dataset   --phantoms DIR [--inputs DIR] --out DIR --seed N
//   sparsect train     --data DIR --out DIR --model resattunet --opt-level O2 --seed N
//   sparsect infer     --checkpoint DIR --in PATH --out PATH
//   sparsect eval      --data DIR --checkpoint DIR... --out report.json
//   sparsect export-pgm --in FILE --out FILE
//
// Exit codes: 0 ok, 2 usage or configuration error, 3 I/O error, 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sparsect/sparsect.hpp"

namespace fs = std::filesystem;
using namespace sparsect;
using io::json;

namespace {

enum Exit : int { kOk = 0, kUsage = 2, kIo = 3, kNumeric = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

RunConfig load_config(const Globals& g) {
  if (g.config_path.empty()) return parse_run_config(json::object());
  return parse_run_config(io::read_json(g.config_path));
}

std::uint64_t require_seed(const Globals& g, const char* cmd) {
  if (!g.seed) throw UsageError(std::string(cmd) + " requires --seed");
  return *g.seed;
}

std::vector<fs::path> inputs_of(const fs::path& p) {
  if (fs::is_directory(p)) {
    auto files = io::list_tensors(p);
    if (files.empty()) throw IoError("no .tsr files in " + p.string());
    return files;
  }
  if (!fs::exists(p)) throw IoError(p.string() + " does not exist");
  return {p};
}

// Output path for `in` given an --out that is a directory when --in was one.
fs::path output_for(const fs::path& in, const fs::path& in_root, const fs::path& out) {
  if (fs::is_directory(in_root)) {
    fs::create_directories(out);
    return out / in.filename();
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  return out;
}

int cmd_phantom(const Globals& g, const std::string& out, std::int64_t count, std::int64_t size) {
  RunConfig c = load_config(g);
  if (size > 0) c.phantom = PhantomConfig::for_size(size);
  if (count > 0) c.phantom_count = count;
  const auto phantoms = generate_dataset(c.phantom, c.phantom_count, require_seed(g, "phantom"));
  fs::create_directories(out);
  std::int64_t failures = 0;
  for (std::size_t i = 0; i < phantoms.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "phantom_%04zu.tsr", i);
    io::save_phantom(fs::path(out) / name, phantoms[i]);
    failures += phantoms[i].placement_failures;
  }
  std::printf("wrote %zu phantoms (%lldx%lld) to %s\n", phantoms.size(), static_cast<long long>(c.phantom.size),
              static_cast<long long>(c.phantom.size), out.c_str());
  if (failures) std::printf("note: %lld voids could not be placed\n", static_cast<long long>(failures));
  return kOk;
}

int cmd_project(const Globals& g, const std::string& in, const std::string& out, std::int64_t angles) {
  const RunConfig c = load_config(g);
  const auto a = uniform_angles(angles > 0 ? angles : c.projection.angles_total);
  for (const auto& f : inputs_of(in)) {
    const Tensor<float> img = io::read_tensor<float>(f);
    io::save_sinogram(output_for(f, in, out), radon_forward(img, a), {{"source", f.filename().string()}});
  }
  return kOk;
}

int cmd_subsample(const std::string& in, const std::string& out, std::int64_t factor) {
  for (const auto& f : inputs_of(in)) io::save_sinogram(output_for(f, in, out), subsample(io::load_sinogram(f), factor));
  return kOk;
}

int cmd_fbp(const Globals& g, const std::string& in, const std::string& out, const std::string& window,
            std::int64_t zero_pad) {
  const RunConfig c = load_config(g);
  FilterSpec spec = c.projection.filter;
  if (!window.empty()) spec.window = parse_window(window);
  if (zero_pad > 0) spec.zero_pad = zero_pad;
  for (const auto& f : inputs_of(in)) {
    const Sinogram s = io::load_sinogram(f);
    io::write_tensor(output_for(f, in, out), fbp(s, spec, s.detector_count()));
  }
  return kOk;
}

int cmd_dataset(const Globals& g, const std::string& phantom_dir, const std::string& input_dir, const std::string& out) {
  const RunConfig c = load_config(g);
  const std::uint64_t seed = require_seed(g, "dataset");
  std::vector<SamplePair> samples;
  std::size_t degenerate = 0;
  const auto files = inputs_of(phantom_dir);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Phantom p = io::load_phantom(files[i]);
    Tensor<float> recon;
    if (input_dir.empty()) {
      recon = sparse_reconstruction(p.image, c.projection);
    } else {
      recon = io::read_tensor<float>(fs::path(input_dir) / files[i].filename());
      if (recon.shape().rank() == 2) recon = recon.reshaped(Shape{1, 1, recon.shape()[0], recon.shape()[1]});
    }
    auto q = quantize_pair(recon, p.image);
    degenerate += q.degenerate;
    samples.push_back(SamplePair{std::move(q.input), std::move(q.label), p.seed, i});
  }
  const DatasetSplits d = split_samples(std::move(samples), c.train.splits, seed);
  io::save_dataset(out, d,
                   {{"seed", seed},
                    {"angles_total", c.projection.angles_total},
                    {"factor", c.projection.factor},
                    {"window", to_string(c.projection.filter.window)},
                    {"inputs", input_dir.empty() ? "computed" : input_dir}});
  std::printf("dataset: %zu train, %zu val, %zu test", d.train.size(), d.val.size(), d.test.size());
  if (degenerate) std::printf(" (%zu constant labels)", degenerate);
  std::printf("\n");
  return kOk;
}

int cmd_train(const Globals& g, const std::string& data_dir, const std::string& out, std::string model_name,
              std::string level, int epochs) {
  RunConfig c = load_config(g);
  if (!model_name.empty()) c.model_name = model_name;
  if (!level.empty()) {
    c.train.policy.level = parse_opt_level(level);
    c.train.policy.loss_scale = c.train.policy.half() ? 1024.0 : 1.0;
  }
  if (epochs > 0) c.train.epochs = epochs;
  c.train.seed = require_seed(g, "train");
  c.validate();
  const DatasetSplits d = io::load_dataset(data_dir);
  NetworkGraph<float> model = build_model<float>(c.model_name, c.model, split(c.train.seed, 1));
  const TrainResult r = io::train_to_directory(model, d, c.train, out, [](const EpochRecord& e) {
    std::printf("epoch %3d  lr %.4g  train %.6f  val %.6f  skipped %lld\n", e.epoch, e.lr, e.train_mse, e.val_mse,
                static_cast<long long>(e.skipped_steps));
    std::fflush(stdout);
  });
  std::printf("trained %s in %.1f s; best epoch %d (val %.6f)\n",
              display_name(c.model_name, c.train.policy.level).c_str(), r.seconds, r.best_epoch, r.best_val_mse);
  return kOk;
}

int cmd_infer(const std::string& ckpt, const std::string& in, const std::string& out) {
  auto loaded = io::load_checkpoint(ckpt);
  for (const auto& f : inputs_of(in)) {
    Tensor<float> x = io::read_tensor<float>(f);
    if (x.shape().rank() == 2) x = x.reshaped(Shape{1, 1, x.shape()[0], x.shape()[1]});
    io::write_tensor(output_for(f, in, out), infer(loaded.model, x));
  }
  return kOk;
}

int cmd_eval(const Globals& g, const std::string& data_dir, const std::vector<std::string>& ckpts,
             const std::string& out, const std::string& table) {
  const RunConfig c = load_config(g);
  const DatasetSplits d = io::load_dataset(data_dir);
  std::vector<io::LoadedCheckpoint> loaded;
  for (const auto& p : ckpts) loaded.push_back(io::load_checkpoint(p));
  std::vector<std::pair<std::string, NetworkGraph<float>*>> models;
  for (auto& l : loaded) {
    const auto level = policy_from_json(l.manifest.at("policy")).level;
    models.emplace_back(display_name(l.model.model_name(), level), &l.model);
  }
  const EvalReport report = evaluate(models, d, c.metric);
  const std::string text = render_table(report);
  std::cout << text;
  if (!out.empty()) io::write_json(out, io::to_json(report));
  if (!table.empty()) {
    std::ofstream t(table);
    if (!t) throw IoError("cannot write " + table);
    t << text;
  }
  return kOk;
}

int cmd_export_pgm(const std::string& in, const std::string& out, bool auto_range) {
  const Tensor<float> t = io::read_tensor<float>(in);
  const int rank = t.shape().rank();
  if (rank != 2 && !(rank == 4 && t.shape().n() == 1 && t.shape().c() == 1))
    throw UsageError("export-pgm: expected a rank-2 or (1,1,H,W) tensor, got " + t.shape().str());
  double lo = 0.0, hi = 1.0;
  if (auto_range) {
    const auto [a, b] = std::minmax_element(t.vec().begin(), t.vec().end());
    lo = *a;
    hi = *b;
  }
  io::write_pgm(out, quantize_image(t, lo, hi));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-view CT simulation, reconstruction and artifact removal"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed for all randomness");
  app.add_option("--threads", g.threads, "worker threads (1 forces deterministic mode)")->check(CLI::PositiveNumber);

  std::string in, out, phantoms, inputs, data, window, model_name, level, ckpt, table;
  std::vector<std::string> ckpts;
  std::int64_t count = 0, size = 0, angles = 0, factor = 0, zero_pad = 0;
  int epochs = 0;
  bool auto_range = false;

  auto* ph = app.add_subcommand("phantom", "generate foam phantoms");
  ph->add_option("--out", out, "output directory")->required();
  ph->add_option("--count", count, "number of phantoms (overrides config)");
  ph->add_option("--size", size, "image side in pixels (overrides config)");

  auto* pr = app.add_subcommand("project", "parallel-beam sinograms of phantom images");
  pr->add_option("--in", in, "phantom file or directory")->required();
  pr->add_option("--out", out, "output file or directory")->required();
  pr->add_option("--angles", angles, "angle count over [0, pi) (overrides config)");

  auto* sub = app.add_subcommand("subsample", "keep one angle in every N");
  sub->add_option("--in", in, "sinogram file or directory")->required();
  sub->add_option("--out", out, "output file or directory")->required();
  sub->add_option("--factor", factor, "subsampling factor")->required();

  auto* fb = app.add_subcommand("fbp", "filtered backprojection");
  fb->add_option("--in", in, "sinogram file or directory")->required();
  fb->add_option("--out", out, "output file or directory")->required();
  fb->add_option("--window", window, "ramlak or hann")->check(CLI::IsMember({"ramlak", "hann"}));
  fb->add_option("--zero-pad", zero_pad, "padded filter length");

  auto* ds = app.add_subcommand("dataset", "pair sparse reconstructions with labels and split");
  ds->add_option("--phantoms", phantoms, "phantom directory")->required();
  ds->add_option("--inputs", inputs, "directory of reconstructions named like the phantoms");
  ds->add_option("--out", out, "dataset directory")->required();

  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  tr->add_option("--data", data, "dataset directory")->required();
  tr->add_option("--out", out, "run directory")->required();
  tr->add_option("--model", model_name, "resattunet or unet")->check(CLI::IsMember({"resattunet", "unet"}));
  tr->add_option("--opt-level", level, "O0 or O2")->check(CLI::IsMember({"O0", "O2"}));
  tr->add_option("--epochs", epochs, "epoch count (overrides config)");

  auto* inf = app.add_subcommand("infer", "remove artifacts with a trained checkpoint");
  inf->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
  inf->add_option("--in", in, "image file or directory")->required();
  inf->add_option("--out", out, "output file or directory")->required();

  auto* ev = app.add_subcommand("eval", "PSNR/SSIM report over all splits");
  ev->add_option("--data", data, "dataset directory")->required();
  ev->add_option("--checkpoint", ckpts, "checkpoint directories, one row each")->required();
  ev->add_option("--out", out, "report JSON path");
  ev->add_option("--table", table, "plain-text table path");

  auto* ex = app.add_subcommand("export-pgm", "write a tensor as an 8-bit PGM");
  ex->add_option("--in", in, "tensor file")->required();
  ex->add_option("--out", out, "PGM path")->required();
  ex->add_flag("--auto-range", auto_range, "map [min, max] instead of [0, 1]");

  for (auto* s : app.get_subcommands({})) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*ph) return cmd_phantom(g, out, count, size);
    if (*pr) return cmd_project(g, in, out, angles);
    if (*sub) return cmd_subsample(in, out, factor);
    if (*fb) return cmd_fbp(g, in, out, window, zero_pad);
    if (*ds) return cmd_dataset(g, phantoms, inputs, out);
    if (*tr) return cmd_train(g, data, out, model_name, level, epochs);
    if (*inf) return cmd_infer(ckpt, in, out);
    if (*ev) return cmd_eval(g, data, ckpts, out, table);
    if (*ex) return cmd_export_pgm(in, out, auto_range);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    // anything else stems from bad arguments or configuration
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
