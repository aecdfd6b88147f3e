#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "dssa/biometry.hpp"
#include "dssa/commands.hpp"
#include "dssa/io/config.hpp"
#include "dssa/io/image.hpp"
#include "dssa/oracle.hpp"
#include "dssa/synth.hpp"
#include "dssa/train.hpp"

namespace fs = std::filesystem;
using namespace dssa;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
};

io::RunConfig resolve(const Common& c, bool required) {
  if (c.config.empty() && required) throw ConfigError("--config is required");
  io::RunConfig cfg = c.config.empty() ? io::RunConfig{} : io::load_run_config(c.config);
  if (c.seed) cfg.train.seed = *c.seed;
  if (c.deterministic) cfg.deterministic = true;
  if (!c.out.empty()) cfg.data.out_dir = c.out;
  return cfg;
}

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--config", c.config, "run configuration file");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_flag("--deterministic", c.deterministic, "single-threaded, bit-reproducible");
  if (with_out) cmd->add_option("--out", c.out, "output directory");
}

int cmd_train(const Common& c) {
  io::RunConfig cfg = resolve(c, true);
  if (cfg.data.train_dir.empty()) throw ConfigError("train_dir is not set");
  const auto train = load_dataset(cfg.data.train_dir, cfg.data.image_size, cfg.data.spacing);
  std::vector<Sample> val;
  if (!cfg.data.val_dir.empty()) {
    val = load_dataset(cfg.data.val_dir, cfg.data.image_size, cfg.data.spacing);
  }
  fs::create_directories(cfg.data.out_dir);
  std::ofstream(cfg.data.out_dir / "config.txt") << io::to_text(cfg);
  std::ofstream log(cfg.data.out_dir / "train.log");
  DssauNet<float> net(cfg.model, cfg.train.seed);
  std::cout << "training " << net.parameter_count() << " parameters on " << train.size()
            << " cases for " << cfg.train.steps << " steps\n";
  const TrainResult r = train_model(cfg, net, train, val, &log);
  if (!r.losses.empty()) std::cout << "final loss " << r.losses.back() << "\n";
  for (const auto& [step, d] : r.validation) {
    std::cout << "step " << step << " validation DSC " << d << "\n";
  }
  std::cout << "weights written to " << r.final_checkpoint.string() << "\n";
  return 0;
}

int cmd_infer(const Common& c, const std::string& weights, const std::vector<std::string>& inputs) {
  io::RunConfig cfg = resolve(c, true);
  std::vector<fs::path> paths;
  for (const auto& i : inputs) {
    if (fs::is_directory(i)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(i)) {
        if (e.is_regular_file()) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      paths.insert(paths.end(), found.begin(), found.end());
    } else {
      paths.emplace_back(i);
    }
  }
  const fs::path out = c.out.empty() ? fs::path("masks") : fs::path(c.out);
  for (const auto& p : infer_images(cfg, weights, paths, out)) std::cout << p.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gt, double spacing) {
  const EvalReport r = evaluate_directories(pred, gt, spacing);
  std::cout << format_eval_report(r);
  return r.orphans.empty() ? 0 : 2;
}

int cmd_biometry(const std::vector<std::string>& masks, double spacing) {
  int status = 0;
  for (const auto& m : masks) {
    try {
      const LabelMask mask = io::read_mask(m, spacing);
      const BiometryResult b = measure_biometry(mask, mask);
      std::printf("%s AoP %.3f deg HSD %.3f mm\n", m.c_str(), b.aop_deg, b.hsd);
    } catch (const Error& e) {
      std::printf("%s error: %s\n", m.c_str(), e.what());
      status = 1;
    }
  }
  return status;
}

int cmd_gen_synth(std::size_t n, std::size_t size, std::uint64_t seed, const std::string& out) {
  const auto cases = write_synthetic_dataset(out, n, size, seed);
  std::cout << "wrote " << cases.size() << " cases to " << out << "\n";
  return 0;
}

int cmd_flops(const Common& c, std::size_t size, bool sweep, bool breakdown) {
  const io::RunConfig cfg = resolve(c, false);
  const FlopsReport r = flops_report(cfg.model, size, sweep, breakdown);
  std::cout << r.text;
  return 0;
}

int cmd_gradcheck(const Common& c, std::size_t size, double threshold) {
  io::RunConfig cfg = resolve(c, false);
  if (c.config.empty()) cfg.model = ModelConfig::tiny();
  const std::uint64_t seed = c.seed.value_or(0);
  const auto t0 = std::chrono::steady_clock::now();
  DssaConfig block = DssaConfig::for_feature_map(32, 16, 16, 4, 4, 0.5, 8);
  const GradCheckResult rb = check_block_gradients(block, 16, seed);
  const GradCheckResult rn = check_net_gradients(cfg.model, size, seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = true;
  for (const auto& [what, r] : {std::pair{"dssa block", rb}, std::pair{"network", rn}}) {
    const bool pass = r.worst_relative_error < threshold;
    ok = ok && pass;
    std::printf("%-10s %s worst relative error %.3e at %s[%zu] (analytic %.6e, numeric %.6e), %zu coordinates\n",
                what, pass ? "PASS" : "FAIL", r.worst_relative_error, r.worst_parameter.c_str(),
                r.worst_index, r.analytic, r.numeric, r.coordinates);
  }
  std::printf("%.1f s\n", secs);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DSSAU-Net segmentation and biometry"};
  app.require_subcommand(1);

  Common common;
  auto* train = app.add_subcommand("train", "train a network from a run configuration");
  add_common(train, common);

  std::string weights;
  std::vector<std::string> inputs;
  auto* infer = app.add_subcommand("infer", "segment images with trained weights");
  add_common(infer, common);
  infer->add_option("--weights", weights, "weight container")->required();
  infer->add_option("inputs", inputs, "images or directories")->required();

  std::string pred, gt;
  double spacing = 1.0;
  auto* eval = app.add_subcommand("eval", "compare predicted and reference masks");
  eval->add_option("pred", pred, "predicted mask directory")->required();
  eval->add_option("gt", gt, "reference mask directory")->required();
  eval->add_option("--spacing", spacing, "reference pixel spacing in mm");

  std::vector<std::string> masks;
  auto* bio = app.add_subcommand("biometry", "AoP and HSD from label masks");
  bio->add_option("masks", masks, "mask files")->required();
  bio->add_option("--spacing", spacing, "pixel spacing in mm");

  std::size_t count = 10, size = 256;
  std::uint64_t seed = 0;
  std::string out = "synthetic";
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic ellipse dataset");
  gen->add_option("-n,--count", count, "number of cases");
  gen->add_option("--size", size, "image extent, a multiple of 32");
  gen->add_option("--seed", seed, "random seed");
  gen->add_option("--out", out, "output directory");

  bool sweep = false, breakdown = false;
  auto* flops = app.add_subcommand("flops", "parameter and FLOP accounting");
  add_common(flops, common, false);
  flops->add_option("--size", size, "input extent");
  flops->add_flag("--lambda-sweep", sweep, "compare lambda 1/4, 1/8, 1/16");
  flops->add_flag("--breakdown", breakdown, "per-module costs");

  double threshold = 1e-3;
  std::size_t gc_size = 64;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_common(gc, common, false);
  gc->add_option("--size", gc_size, "network input extent");
  gc->add_option("--threshold", threshold, "maximum relative error");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(common);
    if (*infer) return cmd_infer(common, weights, inputs);
    if (*eval) return cmd_eval(pred, gt, spacing);
    if (*bio) return cmd_biometry(masks, spacing);
    if (*gen) return cmd_gen_synth(count, size, seed, out);
    if (*flops) return cmd_flops(common, size, sweep, breakdown);
    if (*gc) return cmd_gradcheck(common, gc_size, threshold);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
