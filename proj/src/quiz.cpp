#include "decop/quiz.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

namespace decop::quiz {

std::array<int, 4> permutation(int index) {
  if (index < 0 || index >= kPermutationCount) {
    throw std::out_of_range(fmt::format("permutation index {} outside [0, 23]", index));
  }
  std::array<int, 4> perm = {0, 1, 2, 3};
  for (int i = 0; i < index; ++i) std::next_permutation(perm.begin(), perm.end());
  return perm;
}

std::string make_quiz_id(std::string_view paragraph_id, int permutation_index) {
  return sha256_hex(fmt::format("{}#{}", paragraph_id, permutation_index)).substr(0, 16);
}

char answer_key_for(int permutation_index) {
  const auto perm = permutation(permutation_index);
  const auto pos = std::find(perm.begin(), perm.end(), 0) - perm.begin();
  return kLetters[static_cast<std::size_t>(pos)];
}

QuizInstance make_instance(const paraphrase::ParaphraseSet& set, int permutation_index) {
  const auto perm = permutation(permutation_index);
  QuizInstance q;
  q.paragraph_id = set.paragraph_id;
  q.permutation_index = permutation_index;
  q.quiz_id = make_quiz_id(set.paragraph_id, permutation_index);
  for (std::size_t pos = 0; pos < 4; ++pos) {
    const int source = perm[pos];
    q.options[pos] = source == 0 ? set.original : set.paraphrases[static_cast<std::size_t>(source - 1)];
    if (source == 0) q.answer_key = kLetters[pos];
  }
  return q;
}

std::vector<QuizInstance> enumerate_permutations(const paraphrase::ParaphraseSet& set) {
  std::vector<QuizInstance> out;
  out.reserve(kPermutationCount);
  for (int i = 0; i < kPermutationCount; ++i) out.push_back(make_instance(set, i));
  return out;
}

ChatPrompt render_quiz_prompt(const QuizInstance& q, const corpus::Document& doc) {
  std::string user = fmt::format(
      "Question: Which of the following passages is verbatim from the \"{}\" book by {}?\n\nOptions:\n\n",
      doc.title, doc.author);
  for (std::size_t pos = 0; pos < 4; ++pos) {
    user += fmt::format("{}. {}\n\n", kLetters[pos], q.options[pos]);
  }
  user += "Answer:";
  return ChatPrompt{std::string(kSystemPrompt), std::move(user)};
}

json to_json(const QuizInstance& q) {
  return {{"quiz_id", q.quiz_id},
          {"paragraph_id", q.paragraph_id},
          {"permutation_index", q.permutation_index},
          {"answer_key", std::string(1, q.answer_key)}};
}

QuizInstance quiz_record_from_json(const json& record) {
  QuizInstance q;
  q.quiz_id = record.at("quiz_id").get<std::string>();
  q.paragraph_id = record.at("paragraph_id").get<std::string>();
  q.permutation_index = record.at("permutation_index").get<int>();
  q.answer_key = record.at("answer_key").get<std::string>().at(0);
  return q;
}

json to_json(const QuizResult& r) {
  json j = {{"quiz_id", r.quiz_id},
            {"paragraph_id", r.paragraph_id},
            {"model_name", r.model_name},
            {"chosen", std::string(1, r.chosen)},
            {"correct", r.correct},
            {"raw_response_id", r.raw_response_id}};
  if (r.logprobs) {
    json lp = json::object();
    for (const auto& [letter, value] : *r.logprobs) lp[std::string(1, letter)] = value;
    j["logprobs"] = std::move(lp);
  }
  return j;
}

QuizResult result_from_json(const json& record) {
  QuizResult r;
  r.quiz_id = record.at("quiz_id").get<std::string>();
  r.paragraph_id = record.at("paragraph_id").get<std::string>();
  r.model_name = record.at("model_name").get<std::string>();
  r.chosen = record.at("chosen").get<std::string>().at(0);
  r.correct = record.at("correct").get<bool>();
  r.raw_response_id = record.value("raw_response_id", "");
  if (auto it = record.find("logprobs"); it != record.end() && it->is_object()) {
    std::map<char, double> lp;
    for (const auto& [k, v] : it->items()) lp[k.at(0)] = v.get<double>();
    r.logprobs = std::move(lp);
  }
  return r;
}

}  // namespace decop::quiz
