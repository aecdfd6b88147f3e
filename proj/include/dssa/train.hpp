#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "dssa/io/config.hpp"
#include "dssa/io/image.hpp"
#include "dssa/metrics.hpp"
#include "dssa/model.hpp"

namespace dssa {

/// One grayscale image with its labels, resampled to the run's extent.
struct Sample {
  std::string name;
  std::size_t size = 0;
  std::vector<float> image;  // size x size, raw 0..255 intensities
  LabelMask mask;
};

// Gray (RGB converted to luma), resized to size x size.
Sample make_sample(std::string name, const io::Image& image, const LabelMask* mask,
                   std::size_t size);

/// Reads DIR/images/* with matching DIR/masks/* (same file stem), sorted by
/// name. Throws DataError on missing directories, orphan images or masks
/// and unreadable files.
std::vector<Sample> load_dataset(const std::filesystem::path& dir, std::size_t size,
                                 double spacing);

// Random flips (0.5 per axis), rotation in +-15 degrees (bilinear image,
// nearest-neighbour mask) and contrast gain in [0.8, 1.25] about the mean.
Sample augment(const Sample& s, std::mt19937_64& rng);

/// Network input for a batch: (v / 255 - 0.5) / 0.25 replicated to 3 channels.
Tensor<float> batch_input(const std::vector<const Sample*>& batch);

LabelMask predict_mask(const DssauNet<float>& net, const Sample& s);
// Mean over cases of the PS / FH averaged DSC.
double mean_foreground_dsc(const DssauNet<float>& net, const std::vector<Sample>& samples);

struct TrainResult {
  std::vector<double> losses;                              // one per step
  std::vector<std::pair<std::size_t, double>> validation;  // (step, mean foreground DSC)
  std::filesystem::path final_checkpoint;
};

/// Adam on the hybrid loss. Logs "step,loss" lines and validation results
/// to `log` when given; writes checkpoints under cfg.data.out_dir when it is
/// non-empty. Throws TrainingError on a non-finite loss.
TrainResult train_model(const io::RunConfig& cfg, DssauNet<float>& net,
                        const std::vector<Sample>& train, const std::vector<Sample>& val,
                        std::ostream* log = nullptr);

// Applies the thread settings of a run (deterministic forces one thread).
void apply_thread_settings(const io::RunConfig& cfg);

}  // namespace dssa
