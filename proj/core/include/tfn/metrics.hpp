#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace tfn {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
  explicit ConfusionMatrix(std::size_t k);
  ConfusionMatrix(std::vector<std::vector<std::uint64_t>> counts);

  std::size_t classes() const { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * k_ + pred]; }
  void add(std::size_t truth, std::size_t pred);
  std::uint64_t total() const;
  std::uint64_t trace() const;

  std::vector<std::vector<std::uint64_t>> rows() const;
  bool operator==(const ConfusionMatrix &) const = default;

private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(const std::vector<std::size_t> &truth,
                                 const std::vector<std::size_t> &pred, std::size_t k);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
};

// Ratios with a zero denominator are reported as 0.
struct MetricsReport {
  double accuracy = 0.0;
  double top1_error = 0.0;
  std::vector<ClassMetrics> per_class;
  ClassMetrics macro;
  ConfusionMatrix confusion{1};
};

MetricsReport classification_metrics(const ConfusionMatrix &cm);

// class_names may be empty, in which case classes are named by index.
nlohmann::json metrics_json(const MetricsReport &report,
                            const std::vector<std::string> &class_names = {});
void write_metrics_json(const MetricsReport &report, const std::vector<std::string> &class_names,
                        const std::filesystem::path &path);

} // namespace tfn
