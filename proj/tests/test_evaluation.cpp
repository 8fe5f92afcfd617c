#include "mpmri/evaluation.hpp"
#include "mpmri/errors.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace mpmri;

namespace {

ConfusionMatrix matrix(std::initializer_list<std::initializer_list<std::int64_t>> rows) {
  ConfusionMatrix cm(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (auto v : row) cm(r, c++) = v;
    ++r;
  }
  return cm;
}

ClassMetrics row(double p, double s, double sp, double f) {
  ClassMetrics m;
  m.precision = p / 100;
  m.sensitivity = s / 100;
  m.specificity = sp / 100;
  m.f1 = f / 100;
  return m;
}

}  // namespace

TEST_CASE("confusion counts by hand") {
  const std::vector<int> truth = {0, 1, 2, 2, 1, 0};
  const std::vector<int> pred = {0, 2, 2, 2, 1, 1};
  const auto cm = confusion(truth, pred, 3);
  CHECK(cm == matrix({{1, 1, 0}, {0, 1, 1}, {0, 0, 2}}));
  CHECK(cm.sum() == 6);
  CHECK(cm.trace() == 4);
}

TEST_CASE("confusion input errors") {
  const std::vector<int> a = {0, 1}, b = {0};
  CHECK_THROWS_AS(confusion(a, b), ValidationError);
  const std::vector<int> c = {0, 8};
  CHECK_THROWS_AS(confusion(a, c), ValidationError);
  const std::vector<int> d = {-1, 0};
  CHECK_THROWS_AS(confusion(d, a), ValidationError);
}

TEST_CASE("binary metrics") {
  const auto m = class_metrics(matrix({{8, 2}, {1, 9}}), 0);
  CHECK(m.precision == doctest::Approx(8.0 / 9));
  CHECK(std::abs(m.precision - 0.8889) < 5e-5);
  CHECK(m.sensitivity == doctest::Approx(0.8));
  CHECK(m.specificity == doctest::Approx(0.9));
  CHECK(std::abs(m.f1 - 0.8421) < 5e-5);
  CHECK(m.support == 10);
  CHECK(!m.degenerate());
}

TEST_CASE("perfect predictions") {
  const ConfusionMatrix cm = ConfusionMatrix::Identity(8, 8) * 5;
  const auto r = macro_report(cm);
  for (const auto& m : r.per_class) {
    CHECK(m.precision == 1.0);
    CHECK(m.sensitivity == 1.0);
    CHECK(m.specificity == 1.0);
    CHECK(m.f1 == 1.0);
  }
  CHECK(r.total.f1 == 1.0);
}

TEST_CASE("a class absent from truth and predictions reports zeros and a flag") {
  ConfusionMatrix cm = ConfusionMatrix::Identity(8, 8) * 3;
  cm(7, 7) = 0;
  const auto r = macro_report(cm);
  const auto& m = r.per_class[7];
  CHECK(m.precision == 0.0);
  CHECK(m.sensitivity == 0.0);
  CHECK(m.f1 == 0.0);
  CHECK(m.precision_undefined);
  CHECK(m.sensitivity_undefined);
  CHECK(m.specificity == 1.0);
  CHECK(m.degenerate());
  CHECK(r.total.f1 == doctest::Approx(7.0 / 8));
  CHECK(render_table(r).find("undefined") != std::string::npos);
}

TEST_CASE("rendered table formatting") {
  MetricsReport r;
  r.class_names = {"T1w-pre"};
  r.per_class = {row(96.598, 96.591, 99.62, 96.594)};
  r.total = r.per_class[0];
  const auto text = render_table(r);
  CHECK(text.find("96.60") != std::string::npos);
  CHECK(text.find("96.59") != std::string::npos);
  CHECK(text.find("99.62") != std::string::npos);
  CHECK(text.find("Total") != std::string::npos);
}

TEST_CASE("published per-class rows average to the published total") {
  MetricsReport r;
  r.class_names = {"T1w-pre", "T1w-art", "T1w-por", "T1w-del", "T2", "T2FS", "DWI", "ADC"};
  r.per_class = {row(99.36, 99.68, 99.93, 99.52), row(98.01, 94.25, 99.79, 96.09), row(87.34, 88.18, 98.58, 87.76),
                 row(89.66, 91.37, 98.83, 90.51), row(99.37, 100.00, 99.93, 99.68), row(99.68, 99.36, 99.96, 99.52),
                 row(100.00, 99.89, 100.00, 99.95), row(99.37, 100.00, 99.93, 99.68)};
  for (const auto& m : r.per_class) {
    r.total.precision += m.precision / 8;
    r.total.sensitivity += m.sensitivity / 8;
    r.total.specificity += m.specificity / 8;
    r.total.f1 += m.f1 / 8;
  }
  const auto text = render_table(r);
  const auto total_line = text.substr(text.find("Total"));
  CHECK(total_line.find("96.60") != std::string::npos);
  CHECK(total_line.find("96.59") != std::string::npos);
  CHECK(total_line.find("99.62") != std::string::npos);
}

TEST_CASE("uniform random predictions give chance sensitivity") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(0, 7);
  std::vector<int> truth, pred;
  for (int i = 0; i < 20000; ++i) {
    truth.push_back(u(rng));
    pred.push_back(u(rng));
  }
  const auto r = macro_report(confusion(truth, pred));
  CHECK(std::abs(r.total.sensitivity - 0.125) < 0.03);
  CHECK(std::abs(r.total.specificity - 0.875) < 0.03);
}

TEST_CASE("metrics agree with a brute-force recount") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> u(0, 7), n(1, 300);
  for (int t = 0; t < 100; ++t) {
    std::vector<int> truth, pred;
    const int count = n(rng);
    for (int i = 0; i < count; ++i) {
      truth.push_back(u(rng));
      pred.push_back(rng() % 3 == 0 ? u(rng) : truth.back());
    }
    const auto cm = confusion(truth, pred);
    REQUIRE(cm.sum() == count);
    for (int c = 0; c < 8; ++c) {
      double tp = 0, fp = 0, fn = 0, tn = 0;
      for (int i = 0; i < count; ++i) {
        const bool is_t = truth[i] == c, is_p = pred[i] == c;
        tp += is_t && is_p;
        fp += !is_t && is_p;
        fn += is_t && !is_p;
        tn += !is_t && !is_p;
      }
      const auto m = class_metrics(cm, c);
      const double p = tp + fp > 0 ? tp / (tp + fp) : 0, s = tp + fn > 0 ? tp / (tp + fn) : 0;
      REQUIRE(m.precision == doctest::Approx(p));
      REQUIRE(m.sensitivity == doctest::Approx(s));
      REQUIRE(m.specificity == doctest::Approx(tn + fp > 0 ? tn / (tn + fp) : 0));
      REQUIRE(m.f1 == doctest::Approx(p + s > 0 ? 2 * p * s / (p + s) : 0));
    }
    // Accuracy from the trace.
    int correct = 0;
    for (int i = 0; i < count; ++i) correct += truth[i] == pred[i];
    REQUIRE(cm.trace() == correct);
  }
}

TEST_CASE("relabeling classes permutes the matrix") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> u(0, 7);
  std::vector<int> truth, pred;
  for (int i = 0; i < 200; ++i) {
    truth.push_back(u(rng));
    pred.push_back(u(rng));
  }
  const std::vector<int> perm = {3, 0, 7, 1, 6, 2, 5, 4};
  std::vector<int> pt, pp;
  for (int i = 0; i < 200; ++i) {
    pt.push_back(perm[truth[i]]);
    pp.push_back(perm[pred[i]]);
  }
  const auto a = confusion(truth, pred), b = confusion(pt, pp);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(a(r, c) == b(perm[r], perm[c]));
  CHECK(macro_report(a).total.f1 == doctest::Approx(macro_report(b).total.f1));
}

TEST_CASE("support-weighted averaging") {
  const auto cm = matrix({{8, 2}, {1, 9}});
  const auto r = macro_report(cm, Averaging::SupportWeighted, {"a", "b"});
  const auto a = class_metrics(cm, 0), b = class_metrics(cm, 1);
  CHECK(r.total.sensitivity == doctest::Approx(0.5 * a.sensitivity + 0.5 * b.sensitivity));
  const auto skew = matrix({{30, 0}, {5, 5}});
  const auto w = macro_report(skew, Averaging::SupportWeighted, {"a", "b"});
  CHECK(w.total.sensitivity == doctest::Approx(0.75 * 1.0 + 0.25 * 0.5));
  CHECK(render_table(w).find("Weighted") != std::string::npos);
  CHECK_THROWS_AS(macro_report(skew, Averaging::Macro, {"only one"}), ValidationError);
}

TEST_CASE("model comparison marks every best cell") {
  const auto a = macro_report(matrix({{8, 2}, {1, 9}}), Averaging::Macro, {"x", "y"});
  const auto b = macro_report(matrix({{9, 1}, {2, 8}}), Averaging::Macro, {"x", "y"});
  const auto c = compare_models(a, b, "ResNet-50", "DenseNet-121");
  // Mirror-image matrices tie on every column.
  for (int k = 0; k < 4; ++k) CHECK((c.best[k][0] && c.best[k][1]));
  const auto better = macro_report(matrix({{10, 0}, {0, 10}}), Averaging::Macro, {"x", "y"});
  const auto d = compare_models(a, better);
  for (int k = 0; k < 4; ++k) {
    CHECK(!d.best[k][0]);
    CHECK(d.best[k][1]);
  }
  const auto text = render_comparison(d);
  CHECK(text.find("100.00*") != std::string::npos);
  const auto other = macro_report(matrix({{1, 0}, {0, 1}}), Averaging::Macro, {"p", "q"});
  CHECK_THROWS_AS(compare_models(a, other), ValidationError);
}

TEST_CASE("confusion exports use the axis abbreviations") {
  ConfusionMatrix cm = ConfusionMatrix::Identity(8, 8) * 2;
  cm(1, 2) = 3;
  std::ostringstream csv;
  write_confusion_csv(cm, csv);
  const auto s = csv.str();
  CHECK(s.starts_with("true\\predicted,T1w-p,T1w-a,T1w-v,T1w-d,T2,T2FS,DWI,ADC\n"));
  CHECK(s.find("T1w-a,0,2,3,0,0,0,0,0\n") != std::string::npos);
  const auto text = render_confusion_text(cm);
  CHECK(text.find("T1w-v") != std::string::npos);
  std::ostringstream svg;
  write_confusion_svg(cm, svg, "a < b");
  CHECK(svg.str().find("<svg") == 0);
  CHECK(svg.str().find("a &lt; b") != std::string::npos);
  CHECK(svg.str().find(">T1w-d<") != std::string::npos);

  std::ostringstream json;
  write_report_json(macro_report(cm), json, 42);
  CHECK(json.str().find("\"seed\": 42") != std::string::npos);
  CHECK(json.str().find("\"class\": \"T1w-art\"") != std::string::npos);
}

TEST_CASE("collapsing duplicate DWI series") {
  const int dwi = index_of(SeriesLabel::DWI);
  std::vector<EvaluatedSeries> s = {
      {"A", "a1", dwi, dwi, 800.0}, {"A", "a2", dwi, dwi, 50.0}, {"A", "a3", dwi, 7, 1000.0},
      {"A", "a4", 4, 4, {}},        {"B", "b1", dwi, 0, 400.0},  {"B", "b2", 0, 0, {}},
  };
  const auto out = collapse_dwi_duplicates(s);
  std::vector<std::string> uids;
  for (const auto& e : out) uids.push_back(e.series_uid);
  CHECK(uids == std::vector<std::string>{"a2", "a4", "b1", "b2"});
  const auto cm = confusion(out);
  CHECK(cm.sum() == 4);
  CHECK(cm(dwi, 0) == 1);
}
