#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decop/common.hpp"
#include "decop/quiz.hpp"

namespace decop::scoring {

class NoResults : public Error {
 public:
  explicit NoResults(const std::string& paragraph_id)
      : Error("no parseable quiz results for paragraph '" + paragraph_id + "'") {}
};

class EmptySplit : public Error {
 public:
  using Error::Error;
};

class EmptySelection : public Error {
 public:
  using Error::Error;
};

// Paragraphs with fewer parseable results than this are flagged and left
// out of statistics.
inline constexpr int kDefaultMinCoverage = 18;

struct GuessRate {
  std::string paragraph_id;
  int n_quizzes = 0;
  int n_correct = 0;
  double rate = 0.0;
};

// Fraction correct over the paragraph's parseable results. Throws NoResults.
GuessRate guess_rate(const std::string& paragraph_id, std::span<const quiz::QuizResult> results);

// A guess rate joined with the labels it is analysed under.
struct ScoredParagraph {
  GuessRate rate;
  std::string doc_id;
  AccessLabel access = AccessLabel::NonPublic;
  MembershipLabel membership = MembershipLabel::Excluded;
  bool low_coverage = false;
};

inline bool eligible(const ScoredParagraph& p) {
  return !p.low_coverage && p.membership != MembershipLabel::Excluded;
}

struct BookScore {
  std::string doc_id;
  AccessSplit split = AccessSplit::All;
  MembershipLabel membership = MembershipLabel::Excluded;
  double mean_rate = 0.0;
  std::size_t n_paragraphs = 0;
};

// Unweighted mean of the book's paragraph rates within the split. All
// paragraphs passed in must belong to doc_id. Throws EmptySplit.
BookScore book_mean(const std::string& doc_id, std::span<const ScoredParagraph> paragraphs, AccessSplit split);

// Book means for every book with at least one eligible paragraph in the
// split, ordered by doc_id.
std::vector<BookScore> book_scores(std::span<const ScoredParagraph> paragraphs, AccessSplit split);

// Quiz-weighted rate sum(n_correct) / sum(n_quizzes) over eligible
// paragraphs matching the filters. Throws EmptySelection.
double pooled_rate(std::span<const ScoredParagraph> paragraphs, std::optional<MembershipLabel> membership,
                   AccessSplit split);

json to_json(const ScoredParagraph& p);
ScoredParagraph scored_from_json(const json& record);

}  // namespace decop::scoring
