#include "dssa/commands.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "dssa/biometry.hpp"
#include "dssa/io/image.hpp"
#include "dssa/io/weights.hpp"
#include "dssa/oracle.hpp"
#include "dssa/train.hpp"

namespace dssa {

namespace fs = std::filesystem;

namespace {

std::map<std::string, fs::path> files_by_stem(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) out[e.path().stem().string()] = e.path();
  }
  return out;
}

template <typename F>
auto defined(F&& f) -> std::optional<decltype(f())> {
  try {
    return f();
  } catch (const UndefinedMetricError&) {
  } catch (const UndefinedBiometryError&) {
  } catch (const DegenerateGeometryError&) {
  } catch (const FitError&) {
  }
  return std::nullopt;
}

struct Average {
  double sum = 0;
  std::size_t n = 0;
  void add(const std::optional<double>& v) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  std::optional<double> value() const {
    return n ? std::optional<double>(sum / double(n)) : std::nullopt;
  }
};

std::string cell(const std::optional<double>& v, double factor = 1.0) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * factor);
  return buf;
}

}  // namespace

EvalReport evaluate_directories(const fs::path& pred_dir, const fs::path& gt_dir, double spacing) {
  const auto preds = files_by_stem(pred_dir), gts = files_by_stem(gt_dir);
  EvalReport report;
  for (const auto& [k, p] : preds) {
    if (!gts.count(k)) report.orphans.push_back(p);
  }
  for (const auto& [k, p] : gts) {
    if (!preds.count(k)) report.orphans.push_back(p);
  }
  Average aop, hsd, dsc_avg[2], hd_avg[2], asd_avg[2];
  for (const auto& [name, pred_path] : preds) {
    if (!gts.count(name)) continue;
    LabelMask truth = io::read_mask(gts.at(name), spacing);
    LabelMask pred = io::read_mask(pred_path, spacing);
    if (pred.width != truth.width || pred.height != truth.height) {
      truth = io::resize_mask(truth, pred.width, pred.height);
    }
    pred.spacing = truth.spacing;
    if (report.cases.empty()) {
      report.width = pred.width;
      report.height = pred.height;
      report.spacing = pred.spacing;
    } else if (pred.width != report.width || pred.height != report.height) {
      throw DataError(name + ": prediction extents differ from earlier cases");
    }

    EvalCase c;
    c.name = name;
    const auto pb = defined([&] { return measure_biometry(pred, pred); });
    const auto tb = defined([&] { return measure_biometry(truth, truth); });
    if (pb && tb) {
      const BiometryError e = biometry_error(*pb, *tb);
      c.aop_error = e.aop_deg;
      c.hsd_error = e.hsd;
    }
    aop.add(c.aop_error);
    hsd.add(c.hsd_error);
    for (int i = 0; i < 2; ++i) {
      const std::uint8_t cls = i == 0 ? kPubicSymphysis : kFetalHead;
      c.dsc[i] = dsc(pred, truth, cls);
      c.hd[i] = defined([&] { return hausdorff(pred, truth, cls); });
      c.asd[i] = defined([&] { return asd(pred, truth, cls); });
      dsc_avg[i].add(c.dsc[i]);
      hd_avg[i].add(c.hd[i]);
      asd_avg[i].add(c.asd[i]);
    }
    report.cases.push_back(std::move(c));
  }
  report.mean.name = "mean";
  report.mean.aop_error = aop.value();
  report.mean.hsd_error = hsd.value();
  for (int i = 0; i < 2; ++i) {
    report.mean.dsc[i] = dsc_avg[i].value();
    report.mean.hd[i] = hd_avg[i].value();
    report.mean.asd[i] = asd_avg[i].value();
  }
  return report;
}

std::string format_eval_report(const EvalReport& r) {
  std::ostringstream os;
  char line[256];
  os << "# evaluated at " << r.width << "x" << r.height << " pixels, spacing " << r.spacing
     << " mm/pixel, " << r.cases.size() << " cases\n";
  std::snprintf(line, sizeof line, "%-20s %9s %9s %9s %9s %9s %9s %9s %9s\n", "case", "AoP(°)",
                "HSD(mm)", "DSC(%)PS", "DSC(%)FH", "HD(mm)PS", "HD(mm)FH", "ASD(mm)PS",
                "ASD(mm)FH");
  os << line;
  auto row = [&](const EvalCase& c) {
    std::snprintf(line, sizeof line, "%-20s %8s %9s %9s %9s %9s %9s %9s %9s\n", c.name.c_str(),
                  cell(c.aop_error).c_str(), cell(c.hsd_error).c_str(),
                  cell(c.dsc[0], 100).c_str(), cell(c.dsc[1], 100).c_str(), cell(c.hd[0]).c_str(),
                  cell(c.hd[1]).c_str(), cell(c.asd[0]).c_str(), cell(c.asd[1]).c_str());
    os << line;
  };
  for (const auto& c : r.cases) row(c);
  row(r.mean);
  if (!r.orphans.empty()) {
    os << "# unpaired files:\n";
    for (const auto& p : r.orphans) os << "#   " << p.string() << "\n";
  }
  return os.str();
}

std::vector<fs::path> infer_images(const io::RunConfig& cfg, const fs::path& weights,
                                   const std::vector<fs::path>& inputs, const fs::path& out_dir) {
  DssauNet<float> net(cfg.model, 0);
  io::assign_weights(io::load_weights(weights), net.named_parameters());
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& path : inputs) {
    const Sample s = make_sample(path.stem().string(), io::read_image(path), nullptr,
                                 cfg.data.image_size);
    const fs::path out = out_dir / (path.stem().string() + ".png");
    io::write_mask(out, predict_mask(net, s));
    written.push_back(out);
  }
  return written;
}

FlopsReport flops_report(const ModelConfig& cfg, std::size_t size, bool lambda_sweep,
                         bool breakdown) {
  FlopsReport out;
  std::ostringstream os;
  char line[256];
  const CostReport cost = count_cost(cfg, size, size);
  os << "input " << size << "x" << size << ", 1 FLOP = 1 multiply-accumulate\n";
  if (breakdown) {
    for (const auto& e : cost.breakdown) {
      std::snprintf(line, sizeof line, "  %-10s %10.4f GFLOPs %9.4f M params\n", e.name.c_str(),
                    double(e.macs) / 1e9, double(e.params) / 1e6);
      os << line;
    }
  }
  const double dp = (cost.mparams() - kPublishedParamsM) / kPublishedParamsM;
  const double df = (cost.gflops() - kPublishedGflops) / kPublishedGflops;
  std::snprintf(line, sizeof line, "%-8s %12s %12s %9s %10s\n", "", "measured", "published",
                "delta", "tolerance");
  os << line;
  std::snprintf(line, sizeof line, "%-8s %12.3f %12.2f %+8.1f%% %9s\n", "Params(M)",
                cost.mparams(), kPublishedParamsM, 100 * dp, "20%");
  os << line;
  std::snprintf(line, sizeof line, "%-8s %12.3f %12.2f %+8.1f%% %9s\n", "FLOPs(G)", cost.gflops(),
                kPublishedGflops, 100 * df, "15%");
  os << line;
  out.within_tolerance = std::abs(dp) <= 0.20 && std::abs(df) <= 0.15;
  os << "verdict: " << (out.within_tolerance ? "within tolerance" : "OUTSIDE tolerance") << "\n";

  if (lambda_sweep) {
    const std::vector<std::size_t> a{1, 4, 16, 64}, b{2, 8, 32, 64};
    const double* published = nullptr;
    static const double pa[3] = {7.17, 7.15, 7.14}, pb[3] = {7.39, 7.35, 7.32};
    if (cfg.k1_schedule == a) published = pa;
    if (cfg.k1_schedule == b) published = pb;
    os << "lambda sweep, k1 =";
    for (auto k : cfg.k1_schedule) os << " " << k;
    os << "\n";
    std::snprintf(line, sizeof line, "%-8s %12s %12s\n", "lambda", "FLOPs(G)", "published");
    os << line;
    double previous = 0;
    const char* names[3] = {"1/4", "1/8", "1/16"};
    for (int i = 0; i < 3; ++i) {
      ModelConfig c = cfg;
      c.lambda = 1.0 / double(4 << i);
      const double g = count_cost(c, size, size).gflops();
      if (i > 0 && !(g < previous)) out.sweep_ordered = false;
      previous = g;
      std::snprintf(line, sizeof line, "%-8s %12.4f %12s\n", names[i], g,
                    published ? cell(published[i]).c_str() : "-");
      os << line;
    }
    os << "ordering: "
       << (out.sweep_ordered ? "strictly decreasing, as published" : "NOT strictly decreasing")
       << "\n";
  }
  out.text = os.str();
  return out;
}

}  // namespace dssa
