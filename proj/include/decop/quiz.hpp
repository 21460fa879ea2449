#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "decop/common.hpp"
#include "decop/corpus.hpp"
#include "decop/paraphrase.hpp"

namespace decop::quiz {

inline constexpr int kPermutationCount = 24;
inline constexpr std::array<char, 4> kLetters = {'A', 'B', 'C', 'D'};

inline constexpr std::string_view kSystemPrompt =
    "You are a helpful assistant. You must answer using only the provided options A, B, C, or D, "
    "you may not decline to answer.";

// The index-th permutation of (0, 1, 2, 3) in lexicographic order. Entry i
// names the option source shown at position i: 0 is the original, 1..3 the
// paraphrases.
std::array<int, 4> permutation(int index);

// Stable short hash of (paragraph_id, permutation_index).
std::string make_quiz_id(std::string_view paragraph_id, int permutation_index);

struct QuizInstance {
  std::string quiz_id;
  std::string paragraph_id;
  int permutation_index = 0;
  std::array<std::string, 4> options;
  char answer_key = 'A';
};

// Answer key of a permutation without materializing option texts.
char answer_key_for(int permutation_index);

QuizInstance make_instance(const paraphrase::ParaphraseSet& set, int permutation_index);

// All 24 orderings; each letter is the answer key exactly six times.
std::vector<QuizInstance> enumerate_permutations(const paraphrase::ParaphraseSet& set);

ChatPrompt render_quiz_prompt(const QuizInstance& q, const corpus::Document& doc);

struct QuizResult {
  std::string quiz_id;
  std::string paragraph_id;
  std::string model_name;
  char chosen = 'A';
  bool correct = false;
  std::optional<std::map<char, double>> logprobs;
  std::string raw_response_id;  // request fingerprint
};

// Quiz store records carry no option text; options are rebuilt from the
// paraphrase set and the permutation index.
json to_json(const QuizInstance& q);
QuizInstance quiz_record_from_json(const json& record);

json to_json(const QuizResult& r);
QuizResult result_from_json(const json& record);

}  // namespace decop::quiz
