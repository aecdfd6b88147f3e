#pragma once

// Command implementations behind the dssau command-line tool.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dssa/io/config.hpp"
#include "dssa/metrics.hpp"

namespace dssa {

struct EvalCase {
  std::string name;
  std::optional<double> aop_error;  // degrees
  std::optional<double> hsd_error;  // mm
  std::optional<double> dsc[2];     // PS, FH; fractions
  std::optional<double> hd[2];
  std::optional<double> asd[2];
};

struct EvalReport {
  std::size_t width = 0;  // resolution the metrics were computed at
  std::size_t height = 0;
  double spacing = 0;  // mm per pixel at that resolution
  std::vector<EvalCase> cases;
  EvalCase mean;  // average of the defined values per column
  std::vector<std::filesystem::path> orphans;
};

/// Pairs masks by file stem. Ground truth is resampled (nearest) to the
/// prediction extents when they differ; `spacing` is the ground-truth pixel
/// spacing. Unpaired files are listed in `orphans` and skipped.
EvalReport evaluate_directories(const std::filesystem::path& pred_dir,
                                const std::filesystem::path& gt_dir, double spacing);

// Columns AoP(°), HSD(mm), DSC(%), HD(mm), ASD(mm); per-class cells for the
// last three. Undefined values print as "n/a".
std::string format_eval_report(const EvalReport& report);

/// Writes OUT/<stem>.png with labels {0,1,2} at the configured image size,
/// one per input, in input order.
std::vector<std::filesystem::path> infer_images(const io::RunConfig& cfg,
                                                const std::filesystem::path& weights,
                                                const std::vector<std::filesystem::path>& inputs,
                                                const std::filesystem::path& out_dir);

struct FlopsReport {
  std::string text;
  bool within_tolerance = false;  // params within 20% and FLOPs within 15% of the published figures
  bool sweep_ordered = true;      // FLOPs strictly decrease as lambda shrinks
};

inline constexpr double kPublishedParamsM = 29.25;
inline constexpr double kPublishedGflops = 7.15;

FlopsReport flops_report(const ModelConfig& cfg, std::size_t size, bool lambda_sweep,
                         bool breakdown);

}  // namespace dssa
