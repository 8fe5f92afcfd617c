#pragma once

#include "mpmri/series_label.hpp"
#include "mpmri/volume.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mpmri {

/// Rows are true labels, columns are predictions.
using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, int num_classes = kNumLabels);

struct ClassMetrics {
  double precision = 0;
  double sensitivity = 0;
  double specificity = 0;
  double f1 = 0;
  std::int64_t support = 0;  // true count of the class
  // Set for every metric whose ratio was 0/0 and therefore reported as 0.
  bool precision_undefined = false;
  bool sensitivity_undefined = false;
  bool specificity_undefined = false;
  bool f1_undefined = false;

  bool degenerate() const {
    return precision_undefined || sensitivity_undefined || specificity_undefined || f1_undefined;
  }
};

/// One-vs-rest precision, sensitivity, specificity and F1 of one class.
ClassMetrics class_metrics(const ConfusionMatrix& cm, int class_index);

enum class Averaging { Macro, SupportWeighted };

struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<ClassMetrics> per_class;
  ClassMetrics total;
  Averaging averaging = Averaging::Macro;
  ConfusionMatrix cm;
};

/// Per-class metrics and their mean over classes (unweighted unless asked otherwise).
MetricsReport macro_report(const ConfusionMatrix& cm, Averaging averaging = Averaging::Macro,
                           std::vector<std::string> class_names = {});

/// Class rows and a total row, metrics in percent with 2 decimals.
std::string render_table(const MetricsReport& report);
void write_report_json(const MetricsReport& report, std::ostream& out, std::optional<std::uint64_t> seed = {});

struct ModelComparison {
  std::vector<std::string> model_names;
  std::vector<ClassMetrics> totals;
  // best[column][row]; column order precision, sensitivity, specificity, f1.
  std::array<std::vector<bool>, 4> best;
};

/// Side-by-side total rows; every row holding a column maximum is marked.
ModelComparison compare_models(const MetricsReport& a, const MetricsReport& b, std::string name_a = "A",
                               std::string name_b = "B");
std::string render_comparison(const ModelComparison& comparison);

void write_confusion_csv(const ConfusionMatrix& cm, std::ostream& out);
std::string render_confusion_text(const ConfusionMatrix& cm);
void write_confusion_svg(const ConfusionMatrix& cm, std::ostream& out, const std::string& title = "");

/// One evaluated series, as needed for study-level bookkeeping.
struct EvaluatedSeries {
  std::string study_uid;
  std::string series_uid;
  int truth = 0;
  int predicted = 0;
  std::optional<double> b_value;
};

/// Keeps only the lowest-b DWI series (by truth) of each study; other series pass through.
std::vector<EvaluatedSeries> collapse_dwi_duplicates(const std::vector<EvaluatedSeries>& series);

ConfusionMatrix confusion(const std::vector<EvaluatedSeries>& series);

}  // namespace mpmri
