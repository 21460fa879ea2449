#include "decop/scoring.hpp"

#include <map>

#include <fmt/format.h>

namespace decop::scoring {

GuessRate guess_rate(const std::string& paragraph_id, std::span<const quiz::QuizResult> results) {
  GuessRate g;
  g.paragraph_id = paragraph_id;
  for (const auto& r : results) {
    ++g.n_quizzes;
    if (r.correct) ++g.n_correct;
  }
  if (g.n_quizzes == 0) throw NoResults(paragraph_id);
  g.rate = static_cast<double>(g.n_correct) / g.n_quizzes;
  return g;
}

BookScore book_mean(const std::string& doc_id, std::span<const ScoredParagraph> paragraphs, AccessSplit split) {
  BookScore b;
  b.doc_id = doc_id;
  b.split = split;
  double sum = 0.0;
  for (const auto& p : paragraphs) {
    if (!eligible(p) || !in_split(p.access, split)) continue;
    sum += p.rate.rate;
    b.membership = p.membership;
    ++b.n_paragraphs;
  }
  if (b.n_paragraphs == 0) {
    throw EmptySplit(fmt::format("book '{}' has no scored paragraphs in split '{}'", doc_id, to_string(split)));
  }
  b.mean_rate = sum / static_cast<double>(b.n_paragraphs);
  return b;
}

std::vector<BookScore> book_scores(std::span<const ScoredParagraph> paragraphs, AccessSplit split) {
  std::map<std::string, std::vector<ScoredParagraph>> by_book;
  for (const auto& p : paragraphs) {
    if (eligible(p) && in_split(p.access, split)) by_book[p.doc_id].push_back(p);
  }
  std::vector<BookScore> out;
  out.reserve(by_book.size());
  for (const auto& [doc_id, members] : by_book) out.push_back(book_mean(doc_id, members, split));
  return out;
}

double pooled_rate(std::span<const ScoredParagraph> paragraphs, std::optional<MembershipLabel> membership,
                   AccessSplit split) {
  long long correct = 0;
  long long quizzes = 0;
  for (const auto& p : paragraphs) {
    if (!eligible(p) || !in_split(p.access, split)) continue;
    if (membership && p.membership != *membership) continue;
    correct += p.rate.n_correct;
    quizzes += p.rate.n_quizzes;
  }
  if (quizzes == 0) throw EmptySelection("no scored quizzes match the pooling filter");
  return static_cast<double>(correct) / static_cast<double>(quizzes);
}

json to_json(const ScoredParagraph& p) {
  return {{"paragraph_id", p.rate.paragraph_id},
          {"doc_id", p.doc_id},
          {"access_label", to_string(p.access)},
          {"membership_label", to_string(p.membership)},
          {"n_quizzes", p.rate.n_quizzes},
          {"n_correct", p.rate.n_correct},
          {"rate", p.rate.rate},
          {"low_coverage", p.low_coverage}};
}

ScoredParagraph scored_from_json(const json& record) {
  ScoredParagraph p;
  p.rate.paragraph_id = record.at("paragraph_id").get<std::string>();
  p.rate.n_quizzes = record.at("n_quizzes").get<int>();
  p.rate.n_correct = record.at("n_correct").get<int>();
  p.rate.rate = record.at("rate").get<double>();
  p.doc_id = record.at("doc_id").get<std::string>();
  p.access = parse_access_label(record.at("access_label").get<std::string>());
  p.membership = parse_membership_label(record.at("membership_label").get<std::string>());
  p.low_coverage = record.value("low_coverage", false);
  return p;
}

}  // namespace decop::scoring
