#include "tfn/metrics.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "tfn/error.hpp"

namespace tfn {

ConfusionMatrix::ConfusionMatrix(std::size_t k) : k_(k), counts_(k * k, 0) {
  if (k == 0)
    throw SizeError("confusion matrix needs at least one class");
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::vector<std::uint64_t>> counts)
    : ConfusionMatrix(counts.size()) {
  for (std::size_t r = 0; r < k_; ++r) {
    if (counts[r].size() != k_)
      throw SizeError("confusion matrix must be square");
    for (std::size_t c = 0; c < k_; ++c)
      counts_[r * k_ + c] = counts[r][c];
  }
}

void ConfusionMatrix::add(std::size_t truth, std::size_t pred) {
  if (truth >= k_ || pred >= k_)
    throw LabelError("label pair (" + std::to_string(truth) + "," + std::to_string(pred) +
                     ") outside [0," + std::to_string(k_) + ")");
  ++counts_[truth * k_ + pred];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto v : counts_)
    s += v;
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i)
    s += at(i, i);
  return s;
}

std::vector<std::vector<std::uint64_t>> ConfusionMatrix::rows() const {
  std::vector<std::vector<std::uint64_t>> out(k_);
  for (std::size_t r = 0; r < k_; ++r)
    out[r].assign(counts_.begin() + static_cast<std::ptrdiff_t>(r * k_),
                  counts_.begin() + static_cast<std::ptrdiff_t>((r + 1) * k_));
  return out;
}

ConfusionMatrix confusion_matrix(const std::vector<std::size_t> &truth,
                                 const std::vector<std::size_t> &pred, std::size_t k) {
  if (truth.size() != pred.size())
    throw SizeError("confusion matrix: " + std::to_string(truth.size()) + " labels vs " +
                    std::to_string(pred.size()) + " predictions");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < truth.size(); ++i)
    cm.add(truth[i], pred[i]);
  return cm;
}

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

} // namespace

MetricsReport classification_metrics(const ConfusionMatrix &cm) {
  const std::uint64_t total = cm.total();
  if (total == 0)
    throw DataError("cannot compute metrics from an empty confusion matrix");
  const std::size_t k = cm.classes();
  MetricsReport r;
  r.confusion = cm;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  r.top1_error = 1.0 - r.accuracy;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = static_cast<double>(cm.at(c, c)), fp = 0.0, fn = 0.0;
    for (std::size_t o = 0; o < k; ++o)
      if (o != c) {
        fp += static_cast<double>(cm.at(o, c));
        fn += static_cast<double>(cm.at(c, o));
      }
    ClassMetrics m;
    m.precision = ratio(tp, tp + fp);
    m.recall = ratio(tp, tp + fn);
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    m.iou = ratio(tp, tp + fp + fn);
    r.per_class.push_back(m);
    r.macro.precision += m.precision;
    r.macro.recall += m.recall;
    r.macro.f1 += m.f1;
    r.macro.iou += m.iou;
  }
  const auto kd = static_cast<double>(k);
  r.macro.precision /= kd;
  r.macro.recall /= kd;
  r.macro.f1 /= kd;
  r.macro.iou /= kd;
  return r;
}

nlohmann::json metrics_json(const MetricsReport &report,
                            const std::vector<std::string> &class_names) {
  nlohmann::json j;
  j["accuracy"] = report.accuracy;
  j["top1_error"] = report.top1_error;
  j["per_class"] = nlohmann::json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto &m = report.per_class[c];
    j["per_class"].push_back({{"class", c < class_names.size() ? class_names[c] : std::to_string(c)},
                              {"precision", m.precision},
                              {"recall", m.recall},
                              {"f1", m.f1},
                              {"iou", m.iou}});
  }
  j["macro"] = {{"precision", report.macro.precision},
                {"recall", report.macro.recall},
                {"f1", report.macro.f1},
                {"iou", report.macro.iou}};
  j["confusion"] = report.confusion.rows();
  return j;
}

void write_metrics_json(const MetricsReport &report, const std::vector<std::string> &class_names,
                        const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot open '" + path.string() + "' for writing");
  out << metrics_json(report, class_names).dump(2) << '\n';
  if (!out)
    throw IoError("failed writing '" + path.string() + "'");
}

} // namespace tfn
