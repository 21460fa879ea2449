#include "decop/quiz.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

using namespace decop;
using namespace decop::quiz;

namespace {

const std::filesystem::path kFixtures = DECOP_FIXTURE_DIR;

paraphrase::ParaphraseSet sample_set() {
  return {"doc:2:0", "original text", {"para one", "para two", "para three"}};
}

}  // namespace

TEST(Permutations, LexicographicAndDistinct) {
  EXPECT_EQ(permutation(0), (std::array<int, 4>{0, 1, 2, 3}));
  EXPECT_EQ(permutation(1), (std::array<int, 4>{0, 1, 3, 2}));
  EXPECT_EQ(permutation(23), (std::array<int, 4>{3, 2, 1, 0}));
  std::set<std::array<int, 4>> seen;
  for (int i = 0; i < kPermutationCount; ++i) seen.insert(permutation(i));
  EXPECT_EQ(seen.size(), 24u);
  EXPECT_THROW(permutation(24), std::out_of_range);
  EXPECT_THROW(permutation(-1), std::out_of_range);
}

TEST(Permutations, EveryLetterIsTheKeySixTimes) {
  const auto quizzes = enumerate_permutations(sample_set());
  ASSERT_EQ(quizzes.size(), 24u);
  std::map<char, int> histogram;
  for (const auto& q : quizzes) {
    ++histogram[q.answer_key];
    EXPECT_EQ(q.answer_key, answer_key_for(q.permutation_index));
    const auto pos = static_cast<std::size_t>(q.answer_key - 'A');
    EXPECT_EQ(q.options[pos], "original text");
    std::set<std::string> distinct(q.options.begin(), q.options.end());
    EXPECT_EQ(distinct.size(), 4u);
  }
  for (char c : kLetters) EXPECT_EQ(histogram[c], 6) << c;
}

TEST(QuizIds, StableAndUnique) {
  const auto a = enumerate_permutations(sample_set());
  const auto b = enumerate_permutations(sample_set());
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].quiz_id, b[i].quiz_id);
    ids.insert(a[i].quiz_id);
  }
  EXPECT_EQ(ids.size(), 24u);
  EXPECT_EQ(make_quiz_id("doc:2:0", 3), make_quiz_id("doc:2:0", 3));
  EXPECT_NE(make_quiz_id("doc:2:0", 3), make_quiz_id("doc:2:1", 3));
}

TEST(QuizPrompt, MatchesGoldenExample) {
  const auto golden = json::parse(read_text_file(kFixtures / "quiz_golden.json"));
  corpus::Document doc;
  doc.title = golden.at("title").get<std::string>();
  doc.author = golden.at("author").get<std::string>();
  QuizInstance q;
  q.options = golden.at("options").get<std::array<std::string, 4>>();
  const auto prompt = render_quiz_prompt(q, doc);
  EXPECT_EQ(prompt.system, golden.at("system").get<std::string>());
  EXPECT_EQ(prompt.user, read_text_file(kFixtures / "quiz_golden_user.txt"));
}

TEST(QuizRecords, JsonRoundTripWithoutOptionText) {
  const auto q = make_instance(sample_set(), 17);
  const json j = to_json(q);
  EXPECT_FALSE(j.contains("options"));
  const auto back = quiz_record_from_json(j);
  EXPECT_EQ(back.quiz_id, q.quiz_id);
  EXPECT_EQ(back.permutation_index, 17);
  EXPECT_EQ(back.answer_key, q.answer_key);

  QuizResult r{"qid", "pid", "model", 'C', true, std::map<char, double>{{'A', -1.5}, {'C', -0.2}}, "fp"};
  const auto rb = result_from_json(to_json(r));
  EXPECT_EQ(rb.chosen, 'C');
  EXPECT_TRUE(rb.correct);
  ASSERT_TRUE(rb.logprobs.has_value());
  EXPECT_DOUBLE_EQ(rb.logprobs->at('C'), -0.2);
  EXPECT_EQ(rb.raw_response_id, "fp");
}
