#include "dlseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "dlseg/errors.hpp"

namespace dlseg::metrics {

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes), counts_(static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes), 0) {
  if (classes < 0) throw ValidationError("confusion matrix needs a non-negative class count");
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ValidationError("cannot add confusion matrices of different size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelMask& pred, const LabelMask& gt) {
  if (!pred.same_shape(gt)) throw ValidationError("prediction and ground truth shapes differ");
  const int C = cm.classes();
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const int g = gt.data[i];
    if (g == kIgnoreLabel) continue;
    const int p = pred.data[i];
    if (g >= C || p >= C) throw ValidationError("label id outside confusion matrix range");
    ++cm.at(g, p);
  }
  return cm;
}

IouResult miou(const ConfusionMatrix& cm) {
  const int C = cm.classes();
  IouResult r;
  r.per_class.assign(static_cast<std::size_t>(C), std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < C; ++c) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (int k = 0; k < C; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t uni = row + col - tp;
    if (uni > 0) r.per_class[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(uni);
  }
  std::vector<int> all(static_cast<std::size_t>(C));
  std::iota(all.begin(), all.end(), 0);
  r.mean = subset_mean(r.per_class, all);
  r.undefined = std::isnan(r.mean);
  return r;
}

double subset_mean(const std::vector<double>& per_class, const std::vector<int>& ids) {
  double acc = 0.0;
  int n = 0;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= per_class.size()) continue;
    const double v = per_class[static_cast<std::size_t>(id)];
    if (std::isnan(v)) continue;
    acc += v;
    ++n;
  }
  return n ? acc / n : std::numeric_limits<double>::quiet_NaN();
}

namespace {

std::string pct(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string column_name(const ReportInput& in, std::size_t c) {
  std::string name = c < in.class_names.size() ? in.class_names[c] : "class" + std::to_string(c);
  if (std::find(in.hard_classes.begin(), in.hard_classes.end(), static_cast<int>(c)) != in.hard_classes.end())
    name += "*";
  return name;
}

std::size_t class_count(const ReportInput& in) {
  std::size_t n = in.class_names.size();
  for (const auto& m : in.methods) n = std::max(n, m.iou.per_class.size());
  return n;
}

}  // namespace

std::string format_table(const ReportInput& in) {
  const std::size_t C = class_count(in);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"method"};
  for (std::size_t c = 0; c < C; ++c) header.push_back(column_name(in, c));
  header.push_back("mIoU");
  header.push_back("hard_mIoU");
  rows.push_back(header);
  for (const auto& m : in.methods) {
    std::vector<std::string> row{m.method};
    for (std::size_t c = 0; c < C; ++c) row.push_back(c < m.iou.per_class.size() ? pct(m.iou.per_class[c]) : "nan");
    row.push_back(pct(m.iou.mean));
    row.push_back(pct(subset_mean(m.iou.per_class, in.hard_classes)));
    rows.push_back(row);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::string cell = r[i];
      cell.resize(width[i], ' ');
      out += cell;
      out += i + 1 < r.size() ? "  " : "\n";
    }
  }
  if (!in.hard_classes.empty()) out += "(* = hard class)\n";
  return out;
}

std::string report(const ReportInput& in, const std::filesystem::path& stem) {
  const std::size_t C = class_count(in);

  std::string tsv = "method";
  for (std::size_t c = 0; c < C; ++c) tsv += "\t" + column_name(in, c);
  tsv += "\tmIoU\thard_mIoU\n";
  for (const auto& m : in.methods) {
    tsv += m.method;
    for (std::size_t c = 0; c < C; ++c) tsv += "\t" + (c < m.iou.per_class.size() ? pct(m.iou.per_class[c]) : "nan");
    tsv += "\t" + pct(m.iou.mean) + "\t" + pct(subset_mean(m.iou.per_class, in.hard_classes)) + "\n";
  }

  nlohmann::ordered_json j;
  j["format"] = 1;
  auto& classes = j["classes"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < C; ++c) {
    const bool hard = std::find(in.hard_classes.begin(), in.hard_classes.end(), static_cast<int>(c)) != in.hard_classes.end();
    classes.push_back({{"id", c}, {"name", c < in.class_names.size() ? in.class_names[c] : ""}, {"hard", hard}});
  }
  auto nan_to_null = [](double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); };
  auto& methods = j["methods"] = nlohmann::ordered_json::array();
  for (const auto& m : in.methods) {
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (double v : m.iou.per_class) per.push_back(nan_to_null(v));
    methods.push_back({{"method", m.method},
                       {"per_class_iou", per},
                       {"miou", nan_to_null(m.iou.mean)},
                       {"hard_miou", nan_to_null(subset_mean(m.iou.per_class, in.hard_classes))},
                       {"undefined", m.iou.undefined}});
  }
  auto& prov = j["provenance"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : in.provenance) prov[k] = v;

  const auto parent = stem.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  {
    std::ofstream out(stem.string() + ".tsv", std::ios::binary);
    if (!out) throw IoError("cannot write report " + stem.string() + ".tsv");
    out << tsv;
  }
  {
    std::ofstream out(stem.string() + ".json", std::ios::binary);
    if (!out) throw IoError("cannot write report " + stem.string() + ".json");
    out << j.dump(2) << "\n";
  }
  return format_table(in);
}

}  // namespace dlseg::metrics
