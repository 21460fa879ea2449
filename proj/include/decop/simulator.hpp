#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "decop/common.hpp"
#include "decop/corpus.hpp"
#include "decop/provider.hpp"
#include "decop/scoring.hpp"

namespace decop::sim {

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

struct SyntheticConfig {
  int n_books_member = 30;
  int n_books_nonmember = 8;
  int paragraphs_per_book = 200;
  double p_member = 0.8;
  double p_nonmember = 0.5;
  double p_public_boost = 0.0;  // added for Public paragraphs; may be negative
  bool boost_members_only = false;
  int quizzes_per_paragraph = 24;
  int chapters_per_book = 8;
  std::uint64_t seed = 0;
};

// Throws InvalidConfig. Every probability a paragraph can be assigned,
// including base + boost, must lie in [0, 1].
void validate(const SyntheticConfig& cfg);

SyntheticConfig synthetic_config_from_json(const json& j);
json to_json(const SyntheticConfig& cfg);

// Member books are dated 2020-2022, non-member books 2024, so the synthetic
// model's 2023 cutoff excludes nothing.
inline constexpr Date kSyntheticCutoff{2023, 10, 1};
inline constexpr std::string_view kSyntheticModelName = "synthetic-target";

struct SyntheticCorpus {
  std::vector<corpus::ManifestEntry> manifest;
  std::vector<corpus::Document> documents;
  std::vector<corpus::Paragraph> paragraphs;  // chunked, in document order
  corpus::ModelSpec model;
};

// Deterministic in (cfg, seed). Chapter text is built from blocks that the
// chunker returns unchanged, so every book yields exactly
// paragraphs_per_book paragraphs.
SyntheticCorpus synth_corpus(const SyntheticConfig& cfg);

// Writes manifest.jsonl plus one text file per chapter under dir.
std::filesystem::path write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

// Probability of a correct answer for a paragraph with these labels.
double correct_probability(const SyntheticConfig& cfg, MembershipLabel membership, AccessLabel access);

// Answers `answer_key` with probability p, otherwise one of the three other
// letters uniformly.
char synth_model_answer(char answer_key, double p, Rng& rng);

// Exact AUROC between Binomial(k, p_m)/k and Binomial(k, p_n)/k scores, by
// direct summation over all (k+1)^2 outcome pairs.
double expected_paragraph_auroc(double p_m, double p_n, int k);

// Guess rates drawn directly from the answer model, skipping prompt
// rendering and the provider. Paragraph i of the corpus draws its answers
// from Rng::stream(seed, fnv1a64(paragraph_id)).
std::vector<scoring::ScoredParagraph> simulate_guess_rates(const SyntheticConfig& cfg, const SyntheticCorpus& corpus,
                                                           std::uint64_t seed);

// ---- mock provider backends --------------------------------------------

// Index from original paragraph text to its labels, used by the simulated
// target model to find the verbatim option in a quiz prompt.
class ParagraphIndex {
 public:
  struct Entry {
    std::string paragraph_id;
    Date publication_date;
    AccessLabel access = AccessLabel::NonPublic;
  };

  ParagraphIndex(const std::vector<corpus::Document>& documents, const std::vector<corpus::Paragraph>& paragraphs);
  const Entry* find(const std::string& text) const;

 private:
  std::unordered_map<std::string, Entry> by_text_;
};

// Answers quiz prompts in the openai-chat response shape. The correct
// option is the one whose text is an original paragraph; its membership
// follows the model's cutoff and its access label comes from the paragraph.
// Randomness is drawn from a stream keyed by the user prompt, so answers do
// not depend on request order.
class SimulatedTargetModel : public provider::Transport {
 public:
  SimulatedTargetModel(SyntheticConfig cfg, corpus::ModelSpec model, std::shared_ptr<const ParagraphIndex> index);

  provider::HttpResult post(const json& wire_request) override;

 private:
  SyntheticConfig cfg_;
  corpus::ModelSpec model_;
  std::shared_ptr<const ParagraphIndex> index_;
};

// Splits a rendered quiz prompt back into its four options.
std::array<std::string, 4> parse_quiz_options(const std::string& user_prompt);

// Answers paraphrase prompts with three deterministic word-substitution
// rewrites of the same length, rendered in the "Example B/C/D" format.
class SimulatedParaphraser : public provider::Transport {
 public:
  provider::HttpResult post(const json& wire_request) override;
};

std::string synthetic_paraphrase(const std::string& text, int variant);

// Builds the backend named by cfg.mock["backend"]: "simulated-target" (with
// the synthetic answer-model parameters) or "simulated-paraphraser".
std::shared_ptr<provider::Transport> make_mock_transport(const provider::ProviderConfig& cfg,
                                                         const corpus::ModelSpec& model,
                                                         std::shared_ptr<const ParagraphIndex> index);

}  // namespace decop::sim
