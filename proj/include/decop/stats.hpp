#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "decop/common.hpp"
#include "decop/scoring.hpp"

namespace decop::stats {

class DegenerateClasses : public Error {
 public:
  DegenerateClasses() : Error("AUROC needs at least one positive and one negative unit") {}
  using Error::Error;
};

class ResampleExhausted : public Error {
 public:
  using Error::Error;
};

// Mann-Whitney statistic kept as integers: twice_u = 2 * #(p > n) + #(p == n)
// over all (positive, negative) pairs. AUROC = twice_u / (2 * pairs).
struct AurocCount {
  std::uint64_t twice_u = 0;
  std::uint64_t pairs = 0;

  double value() const { return static_cast<double>(twice_u) / static_cast<double>(2 * pairs); }
};

AurocCount auroc_count(std::span<const double> pos, std::span<const double> neg);

// Exact pairwise AUROC with ties worth one half. Throws DegenerateClasses.
inline double auroc(std::span<const double> pos, std::span<const double> neg) {
  return auroc_count(pos, neg).value();
}

enum class ThresholdCriterion {
  Youden,    // maximize TPR - FPR
  Accuracy,  // maximize (TP + TN) / N
};

struct Threshold {
  double value = 0.0;  // predict positive when score > value
  double youden_j = 0.0;
};

// Scans -inf, midpoints between adjacent distinct scores, and +inf; returns
// the best threshold under the criterion, the smallest one on ties.
Threshold optimal_threshold(std::span<const double> pos, std::span<const double> neg,
                            ThresholdCriterion criterion = ThresholdCriterion::Youden);

// Binarizes every unit at the optimal threshold and takes the AUROC of the
// binary predictions, i.e. (TPR + TNR) / 2 at that threshold.
AurocCount papers_method_count(std::span<const double> pos, std::span<const double> neg,
                               ThresholdCriterion criterion = ThresholdCriterion::Youden);
inline double papers_method_auroc(std::span<const double> pos, std::span<const double> neg,
                                  ThresholdCriterion criterion = ThresholdCriterion::Youden) {
  return papers_method_count(pos, neg, criterion).value();
}

using BaseMethod = std::function<AurocCount(std::span<const double>, std::span<const double>)>;

// Chooses `take` of `n` indices uniformly without replacement (partial
// Fisher-Yates over 0..n-1; the first `take` slots are returned).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t take, Rng& rng);

// Mean of `base` over n_subsets class-balanced subsets. Subset s subsamples
// the majority class to the minority size using Rng::stream(seed, s). The
// mean is formed from integer counts, so equal class sizes reproduce the
// base method exactly.
double balanced_auroc(std::span<const double> pos, std::span<const double> neg, const BaseMethod& base,
                      int n_subsets = 100, std::uint64_t seed = 0);

struct BootstrapOptions {
  int n_boot = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct BootstrapInterval {
  double low = 0.0;
  double high = 0.0;
  int replicates = 0;
  int redraws = 0;
};

// Linear-interpolation percentile of sorted values.
double percentile(std::span<const double> sorted, double q);

struct BookGroup {
  std::string doc_id;
  bool positive = false;
  std::vector<double> scores;  // paragraph guess rates
};

// Resamples books with replacement within each class, then paragraphs with
// replacement within each drawn book, and recomputes book-level AUROC.
// Replicate r draws from Rng::stream(seed, r), so thread count does not
// change the result. Throws DegenerateClasses (fewer than two books in a
// class) and ResampleExhausted.
BootstrapInterval hierarchical_bootstrap_ci(std::span<const BookGroup> books, const BootstrapOptions& options = {});

// Class-stratified resampling of paragraphs; paragraph-level AUROC.
BootstrapInterval flat_bootstrap_ci(std::span<const double> pos, std::span<const double> neg,
                                    const BootstrapOptions& options = {});

// ---- report grid ---------------------------------------------------------

enum class Method {
  ParagraphLevel,
  BookLevel,
  PapersMethodBinary,
  BalancedParagraph,
  BalancedBook,
  BalancedPapersMethod,
};

inline constexpr Method kAllMethods[] = {Method::PapersMethodBinary, Method::BookLevel,
                                         Method::ParagraphLevel,     Method::BalancedPapersMethod,
                                         Method::BalancedBook,       Method::BalancedParagraph};

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

struct AurocReport {
  std::string model_name;
  Method method = Method::BookLevel;
  AccessSplit split = AccessSplit::All;
  std::optional<double> value;  // absent when a class is empty
  std::optional<std::pair<double, double>> ci;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::uint64_t seed = 0;
};

json to_json(const AurocReport& r);
AurocReport report_from_json(const json& j);

struct GridOptions {
  int balanced_subsets = 100;
  BootstrapOptions bootstrap;
  ThresholdCriterion criterion = ThresholdCriterion::Youden;
};

// Positive units are PotentialMember, negative NonMember; ineligible
// paragraphs are ignored. Book methods use book mean rates; the book-level
// CI is hierarchical, the paragraph-level CI flat.
std::vector<AurocReport> auroc_grid(const std::string& model_name, std::span<const scoring::ScoredParagraph> paragraphs,
                                    AccessSplit split, const GridOptions& options);

// Positive/negative paragraph rates in the split.
std::pair<std::vector<double>, std::vector<double>> paragraph_scores(
    std::span<const scoring::ScoredParagraph> paragraphs, AccessSplit split);
std::vector<BookGroup> book_groups(std::span<const scoring::ScoredParagraph> paragraphs, AccessSplit split);

}  // namespace decop::stats
