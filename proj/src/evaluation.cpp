#include "mpmri/evaluation.hpp"
#include "mpmri/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

namespace mpmri {
namespace {

double ratio(double num, double den, bool& undefined) {
  if (den == 0.0) {
    undefined = true;
    return 0.0;
  }
  return num / den;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::vector<std::string> default_names(Index n) {
  std::vector<std::string> names;
  for (Index i = 0; i < n; ++i)
    names.push_back(n == kNumLabels ? std::string(kLabelTokens[static_cast<std::size_t>(i)]) : std::to_string(i));
  return names;
}

std::vector<std::string> axis_names(Index n) {
  std::vector<std::string> names;
  for (Index i = 0; i < n; ++i)
    names.push_back(n == kNumLabels ? std::string(kLabelAbbreviations[static_cast<std::size_t>(i)])
                                    : std::to_string(i));
  return names;
}

nlohmann::ordered_json metrics_json(const ClassMetrics& m) {
  nlohmann::ordered_json j;
  j["precision"] = m.precision;
  j["sensitivity"] = m.sensitivity;
  j["specificity"] = m.specificity;
  j["f1"] = m.f1;
  j["support"] = m.support;
  j["degenerate"] = m.degenerate();
  return j;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
  if (truth.size() != predicted.size())
    throw ValidationError("confusion needs equal-length label lists, got " + std::to_string(truth.size()) + " and " +
                          std::to_string(predicted.size()));
  if (num_classes <= 0) throw ValidationError("class count must be positive");
  ConfusionMatrix cm = ConfusionMatrix::Zero(num_classes, num_classes);
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] < 0 || truth[k] >= num_classes || predicted[k] < 0 || predicted[k] >= num_classes)
      throw ValidationError("label out of range at position " + std::to_string(k));
    ++cm(truth[k], predicted[k]);
  }
  return cm;
}

ClassMetrics class_metrics(const ConfusionMatrix& cm, int i) {
  if (cm.rows() != cm.cols()) throw ValidationError("confusion matrix must be square");
  if (i < 0 || i >= cm.rows()) throw ValidationError("class index " + std::to_string(i) + " out of range");
  const auto tp = static_cast<double>(cm(i, i));
  const auto fp = static_cast<double>(cm.col(i).sum()) - tp;
  const auto fn = static_cast<double>(cm.row(i).sum()) - tp;
  const auto tn = static_cast<double>(cm.sum()) - tp - fp - fn;
  ClassMetrics m;
  m.support = cm.row(i).sum();
  m.precision = ratio(tp, tp + fp, m.precision_undefined);
  m.sensitivity = ratio(tp, tp + fn, m.sensitivity_undefined);
  m.specificity = ratio(tn, tn + fp, m.specificity_undefined);
  m.f1 = ratio(2.0 * m.precision * m.sensitivity, m.precision + m.sensitivity, m.f1_undefined);
  return m;
}

MetricsReport macro_report(const ConfusionMatrix& cm, Averaging averaging, std::vector<std::string> class_names) {
  MetricsReport r;
  r.cm = cm;
  r.averaging = averaging;
  r.class_names = class_names.empty() ? default_names(cm.rows()) : std::move(class_names);
  if (static_cast<Index>(r.class_names.size()) != cm.rows())
    throw ValidationError("class names do not match the confusion matrix size");
  const double total = static_cast<double>(cm.sum());
  for (int i = 0; i < cm.rows(); ++i) {
    const auto m = class_metrics(cm, i);
    const double w = averaging == Averaging::Macro ? 1.0 / static_cast<double>(cm.rows())
                     : total > 0                   ? static_cast<double>(m.support) / total
                                                   : 0.0;
    r.total.precision += w * m.precision;
    r.total.sensitivity += w * m.sensitivity;
    r.total.specificity += w * m.specificity;
    r.total.f1 += w * m.f1;
    r.total.support += m.support;
    r.total.precision_undefined |= m.precision_undefined;
    r.total.sensitivity_undefined |= m.sensitivity_undefined;
    r.total.specificity_undefined |= m.specificity_undefined;
    r.total.f1_undefined |= m.f1_undefined;
    r.per_class.push_back(m);
  }
  return r;
}

std::string render_table(const MetricsReport& report) {
  std::size_t width = 5;
  for (const auto& n : report.class_names) width = std::max(width, n.size());
  char buf[256];
  std::ostringstream out;
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %11s  %11s  %8s\n", static_cast<int>(width), "Class", "Precision",
                "Sensitivity", "Specificity", "F1");
  out << buf;
  auto row = [&](const std::string& name, const ClassMetrics& m) {
    std::snprintf(buf, sizeof buf, "%-*s  %9s  %11s  %11s  %8s%s\n", static_cast<int>(width), name.c_str(),
                  percent(m.precision).c_str(), percent(m.sensitivity).c_str(), percent(m.specificity).c_str(),
                  percent(m.f1).c_str(), m.degenerate() ? "  (undefined ratios as 0)" : "");
    out << buf;
  };
  for (std::size_t i = 0; i < report.per_class.size(); ++i) row(report.class_names[i], report.per_class[i]);
  ClassMetrics total = report.total;
  total.precision_undefined = total.sensitivity_undefined = total.specificity_undefined = total.f1_undefined = false;
  row(report.averaging == Averaging::Macro ? "Total" : "Weighted", total);
  return out.str();
}

void write_report_json(const MetricsReport& report, std::ostream& out, std::optional<std::uint64_t> seed) {
  nlohmann::ordered_json j;
  if (seed) j["seed"] = *seed;
  j["averaging"] = report.averaging == Averaging::Macro ? "macro" : "support_weighted";
  j["classes"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.per_class.size(); ++i) {
    auto m = metrics_json(report.per_class[i]);
    m["class"] = report.class_names[i];
    j["classes"].push_back(std::move(m));
  }
  j["total"] = metrics_json(report.total);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Index r = 0; r < report.cm.rows(); ++r) {
    std::vector<std::int64_t> row(report.cm.cols());
    for (Index c = 0; c < report.cm.cols(); ++c) row[static_cast<std::size_t>(c)] = report.cm(r, c);
    rows.push_back(row);
  }
  j["confusion"] = rows;
  out << j.dump(2) << '\n';
}

ModelComparison compare_models(const MetricsReport& a, const MetricsReport& b, std::string name_a,
                               std::string name_b) {
  if (a.class_names != b.class_names) throw ValidationError("reports do not share a class order");
  ModelComparison c;
  c.model_names = {std::move(name_a), std::move(name_b)};
  c.totals = {a.total, b.total};
  auto column = [](const ClassMetrics& m, int k) {
    switch (k) {
      case 0: return m.precision;
      case 1: return m.sensitivity;
      case 2: return m.specificity;
      default: return m.f1;
    }
  };
  for (int k = 0; k < 4; ++k) {
    double best = column(c.totals[0], k);
    for (const auto& t : c.totals) best = std::max(best, column(t, k));
    for (const auto& t : c.totals) c.best[static_cast<std::size_t>(k)].push_back(column(t, k) == best);
  }
  return c;
}

std::string render_comparison(const ModelComparison& c) {
  std::size_t width = 5;
  for (const auto& n : c.model_names) width = std::max(width, n.size());
  char buf[256];
  std::ostringstream out;
  std::snprintf(buf, sizeof buf, "%-*s  %10s  %12s  %12s  %9s\n", static_cast<int>(width), "Model", "Precision",
                "Sensitivity", "Specificity", "F1");
  out << buf;
  for (std::size_t r = 0; r < c.totals.size(); ++r) {
    const auto& m = c.totals[r];
    const double v[4] = {m.precision, m.sensitivity, m.specificity, m.f1};
    std::string cells[4];
    for (std::size_t k = 0; k < 4; ++k) cells[k] = percent(v[k]) + (c.best[k][r] ? "*" : " ");
    std::snprintf(buf, sizeof buf, "%-*s  %10s  %12s  %12s  %9s\n", static_cast<int>(width),
                  c.model_names[r].c_str(), cells[0].c_str(), cells[1].c_str(), cells[2].c_str(), cells[3].c_str());
    out << buf;
  }
  return out.str();
}

void write_confusion_csv(const ConfusionMatrix& cm, std::ostream& out) {
  const auto names = axis_names(cm.rows());
  out << "true\\predicted";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (Index r = 0; r < cm.rows(); ++r) {
    out << names[static_cast<std::size_t>(r)];
    for (Index c = 0; c < cm.cols(); ++c) out << ',' << cm(r, c);
    out << '\n';
  }
}

std::string render_confusion_text(const ConfusionMatrix& cm) {
  const auto names = axis_names(cm.rows());
  int width = 6;
  for (const auto& n : names) width = std::max(width, static_cast<int>(n.size()));
  for (Index i = 0; i < cm.size(); ++i) width = std::max(width, static_cast<int>(std::to_string(cm.data()[i]).size()));
  char buf[64];
  std::ostringstream out;
  std::snprintf(buf, sizeof buf, "%-*s", width, "");
  out << buf;
  for (const auto& n : names) {
    std::snprintf(buf, sizeof buf, " %*s", width, n.c_str());
    out << buf;
  }
  out << '\n';
  for (Index r = 0; r < cm.rows(); ++r) {
    std::snprintf(buf, sizeof buf, "%-*s", width, names[static_cast<std::size_t>(r)].c_str());
    out << buf;
    for (Index c = 0; c < cm.cols(); ++c) {
      std::snprintf(buf, sizeof buf, " %*lld", width, static_cast<long long>(cm(r, c)));
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

void write_confusion_svg(const ConfusionMatrix& cm, std::ostream& out, const std::string& title) {
  const auto names = axis_names(cm.rows());
  const int cell = 48, left = 80, top = 80;
  const int n = static_cast<int>(cm.rows());
  const int w = left + n * cell + 20, h = top + n * cell + 40;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty())
    out << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
        << "</text>\n";
  out << "<text x=\"" << left + n * cell / 2 << "\" y=\"40\" text-anchor=\"middle\">Predicted</text>\n";
  out << "<text x=\"14\" y=\"" << top + n * cell / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << top + n * cell / 2 << ")\">True</text>\n";
  for (int r = 0; r < n; ++r) {
    const double row_sum = static_cast<double>(cm.row(r).sum());
    out << "<text x=\"" << left - 6 << "\" y=\"" << top + r * cell + cell / 2 + 4 << "\" text-anchor=\"end\">"
        << xml_escape(names[static_cast<std::size_t>(r)]) << "</text>\n";
    for (int c = 0; c < n; ++c) {
      const double frac = row_sum > 0 ? static_cast<double>(cm(r, c)) / row_sum : 0.0;
      const int shade = static_cast<int>(255.0 - 200.0 * frac);
      out << "<rect x=\"" << left + c * cell << "\" y=\"" << top + r * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\" stroke=\"#888\"/>\n";
      out << "<text x=\"" << left + c * cell + cell / 2 << "\" y=\"" << top + r * cell + cell / 2 + 4
          << "\" text-anchor=\"middle\">" << cm(r, c) << "</text>\n";
    }
  }
  for (int c = 0; c < n; ++c)
    out << "<text x=\"" << left + c * cell + cell / 2 << "\" y=\"" << top - 8 << "\" text-anchor=\"middle\">"
        << xml_escape(names[static_cast<std::size_t>(c)]) << "</text>\n";
  out << "</svg>\n";
}

std::vector<EvaluatedSeries> collapse_dwi_duplicates(const std::vector<EvaluatedSeries>& series) {
  const int dwi = index_of(SeriesLabel::DWI);
  std::map<std::string, std::size_t> keep;  // study -> index of the kept DWI series
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    if (s.truth != dwi) continue;
    auto [it, inserted] = keep.emplace(s.study_uid, i);
    if (inserted) continue;
    const auto& kept = series[it->second];
    const double b = s.b_value.value_or(0.0), kb = kept.b_value.value_or(0.0);
    if (b < kb || (b == kb && s.series_uid < kept.series_uid)) it->second = i;
  }
  std::vector<EvaluatedSeries> out;
  for (std::size_t i = 0; i < series.size(); ++i)
    if (series[i].truth != dwi || keep.at(series[i].study_uid) == i) out.push_back(series[i]);
  return out;
}

ConfusionMatrix confusion(const std::vector<EvaluatedSeries>& series) {
  std::vector<int> truth, predicted;
  for (const auto& s : series) {
    truth.push_back(s.truth);
    predicted.push_back(s.predicted);
  }
  return confusion(truth, predicted);
}

}  // namespace mpmri
