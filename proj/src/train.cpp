#include "dssa/train.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "dssa/io/weights.hpp"
#include "dssa/losses.hpp"
#include "dssa/optim.hpp"

namespace dssa {

namespace fs = std::filesystem;

Sample make_sample(std::string name, const io::Image& image, const LabelMask* mask,
                   std::size_t size) {
  io::Image gray = io::resize_image(image.to_gray(), size, size);
  Sample s;
  s.name = std::move(name);
  s.size = size;
  s.image.assign(gray.pixels.begin(), gray.pixels.end());
  if (mask) s.mask = io::resize_mask(*mask, size, size);
  return s;
}

std::vector<Sample> load_dataset(const fs::path& dir, std::size_t size, double spacing) {
  const fs::path images = dir / "images", masks = dir / "masks";
  if (!fs::is_directory(images) || !fs::is_directory(masks)) {
    throw DataError(dir.string() + ": expected images/ and masks/ subdirectories");
  }
  std::map<std::string, fs::path> image_files, mask_files;
  for (const auto& e : fs::directory_iterator(images)) {
    if (e.is_regular_file()) image_files[e.path().stem().string()] = e.path();
  }
  for (const auto& e : fs::directory_iterator(masks)) {
    if (e.is_regular_file()) mask_files[e.path().stem().string()] = e.path();
  }
  std::string orphans;
  for (const auto& [k, p] : image_files) {
    if (!mask_files.count(k)) orphans += " " + p.string();
  }
  for (const auto& [k, p] : mask_files) {
    if (!image_files.count(k)) orphans += " " + p.string();
  }
  if (!orphans.empty()) throw DataError("unpaired files:" + orphans);
  if (image_files.empty()) throw DataError(dir.string() + ": no images");
  std::vector<Sample> out;
  for (const auto& [name, path] : image_files) {
    io::Image img = io::read_image(path);
    LabelMask mask = io::read_mask(mask_files[name], spacing);
    if (mask.width != img.width || mask.height != img.height) {
      throw DataError(name + ": image and mask extents differ");
    }
    out.push_back(make_sample(name, img, &mask, size));
  }
  return out;
}

Sample augment(const Sample& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const bool flip_x = coin(rng) < 0.5, flip_y = coin(rng) < 0.5;
  const double angle = (coin(rng) * 30.0 - 15.0) * std::numbers::pi / 180.0;
  const double gain = 0.8 + coin(rng) * (1.25 - 0.8);
  const std::size_t n = s.size;
  const double c = std::cos(angle), sn = std::sin(angle), mid = (double(n) - 1) / 2;
  Sample out = s;
  const double mean = std::accumulate(s.image.begin(), s.image.end(), 0.0) / double(n * n);
  auto clampi = [n](long v) { return std::size_t(std::clamp(v, 0L, long(n) - 1)); };
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      // Output pixel -> source pixel: undo the flips, then rotate about the center.
      const double fx = flip_x ? double(n - 1 - x) : double(x);
      const double fy = flip_y ? double(n - 1 - y) : double(y);
      const double sx = c * (fx - mid) + sn * (fy - mid) + mid;
      const double sy = -sn * (fx - mid) + c * (fy - mid) + mid;
      const long x0 = long(std::floor(sx)), y0 = long(std::floor(sy));
      const double ax = sx - double(x0), ay = sy - double(y0);
      auto px = [&](long xx, long yy) { return double(s.image[clampi(yy) * n + clampi(xx)]); };
      const double v = (1 - ay) * ((1 - ax) * px(x0, y0) + ax * px(x0 + 1, y0)) +
                       ay * ((1 - ax) * px(x0, y0 + 1) + ax * px(x0 + 1, y0 + 1));
      out.image[y * n + x] = float(std::clamp(mean + gain * (v - mean), 0.0, 255.0));
      const long nx = std::lround(sx), ny = std::lround(sy);
      const bool inside = nx >= 0 && ny >= 0 && nx < long(n) && ny < long(n);
      out.mask.at(x, y) = inside ? s.mask.at(std::size_t(nx), std::size_t(ny)) : kBackground;
    }
  }
  return out;
}

Tensor<float> batch_input(const std::vector<const Sample*>& batch) {
  if (batch.empty()) throw DataError("empty batch");
  const std::size_t n = batch[0]->size;
  std::vector<float> v(batch.size() * n * n * 3);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b]->size != n) throw DataError("batch mixes image sizes");
    for (std::size_t i = 0; i < n * n; ++i) {
      const float x = (batch[b]->image[i] / 255.0f - 0.5f) / 0.25f;
      for (std::size_t c = 0; c < 3; ++c) v[(b * n * n + i) * 3 + c] = x;
    }
  }
  return Tensor<float>(Shape{batch.size(), n, n, 3}, std::move(v));
}

LabelMask predict_mask(const DssauNet<float>& net, const Sample& s) {
  NoGradGuard no_grad;
  Tensor<float> logits = net.forward(batch_input({&s}));
  const std::size_t k = logits.dim(-1);
  LabelMask m(s.size, s.size, kBackground, s.mask.spacing > 0 ? s.mask.spacing : 1.0);
  for (std::size_t i = 0; i < s.size * s.size; ++i) {
    const float* row = logits.data().data() + i * k;
    m.labels[i] = std::uint8_t(std::max_element(row, row + k) - row);
  }
  return m;
}

double mean_foreground_dsc(const DssauNet<float>& net, const std::vector<Sample>& samples) {
  if (samples.empty()) throw DataError("no samples to evaluate");
  double total = 0;
  for (const auto& s : samples) {
    LabelMask pred = predict_mask(net, s);
    pred.spacing = s.mask.spacing;
    total += 0.5 * (dsc(pred, s.mask, kPubicSymphysis) + dsc(pred, s.mask, kFetalHead));
  }
  return total / double(samples.size());
}

void apply_thread_settings(const io::RunConfig& cfg) {
  if (cfg.deterministic) {
    omp_set_num_threads(1);
  } else if (cfg.threads > 0) {
    omp_set_num_threads(int(cfg.threads));
  }
}

TrainResult train_model(const io::RunConfig& cfg, DssauNet<float>& net,
                        const std::vector<Sample>& train, const std::vector<Sample>& val,
                        std::ostream* log) {
  if (train.empty()) throw DataError("training set is empty");
  apply_thread_settings(cfg);
  std::mt19937_64 rng(cfg.train.seed ^ 0x5eedULL);
  const auto named = net.named_parameters();
  Adam<float> opt(net.parameters(), AdamOptions{cfg.train.lr});
  const bool write = !cfg.data.out_dir.empty();
  if (write) fs::create_directories(cfg.data.out_dir);

  auto save = [&](const fs::path& p) { io::save_weights(p, io::entries_from(named)); };

  TrainResult result;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  for (std::size_t step = 1; step <= cfg.train.steps; ++step) {
    std::vector<Sample> batch;
    for (std::size_t b = 0; b < cfg.train.batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Sample& s = train[order[cursor++]];
      batch.push_back(cfg.train.augment ? augment(s, rng) : s);
    }
    std::vector<const Sample*> ptrs;
    std::vector<std::uint8_t> labels;
    for (const auto& s : batch) {
      ptrs.push_back(&s);
      labels.insert(labels.end(), s.mask.labels.begin(), s.mask.labels.end());
    }
    opt.zero_grad();
    Tensor<float> probs = softmax(net.forward(batch_input(ptrs)), -1);
    Tensor<float> loss = hybrid_loss(probs, std::span<const std::uint8_t>(labels));
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step));
    }
    loss.backward();
    opt.step();
    result.losses.push_back(value);
    if (log) *log << "step " << step << " loss " << value << "\n";

    if (cfg.train.val_every > 0 && !val.empty() &&
        (step % cfg.train.val_every == 0 || step == cfg.train.steps)) {
      const double d = mean_foreground_dsc(net, val);
      result.validation.push_back({step, d});
      if (log) *log << "step " << step << " val_dsc " << d << "\n";
    }
    if (write && cfg.train.checkpoint_every > 0 && step % cfg.train.checkpoint_every == 0) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_%06zu.dssw", step);
      save(cfg.data.out_dir / name);
    }
  }
  if (write) {
    result.final_checkpoint = cfg.data.out_dir / "final.dssw";
    save(result.final_checkpoint);
  }
  return result;
}

}  // namespace dssa
