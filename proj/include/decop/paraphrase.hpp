#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "decop/common.hpp"
#include "decop/corpus.hpp"

namespace decop::provider {
class ChatClient;
}

namespace decop::paraphrase {

// Letters of the three paraphrase blocks, indexed like ParaphraseSet::paraphrases.
inline constexpr std::array<char, 3> kParaphraseLetters = {'B', 'C', 'D'};

class MissingLabel : public Error {
 public:
  explicit MissingLabel(char which)
      : Error(std::string("paraphrase response lacks 'Example ") + which + ":'"), which_(which) {}
  char which() const { return which_; }

 private:
  char which_;
};

class EmptyParaphrase : public Error {
 public:
  explicit EmptyParaphrase(char which)
      : Error(std::string("paraphrase block ") + which + " is empty"), which_(which) {}
  char which() const { return which_; }

 private:
  char which_;
};

class LengthOutOfBounds : public Error {
 public:
  LengthOutOfBounds(std::size_t index, double ratio);
  std::size_t index() const { return index_; }
  double ratio() const { return ratio_; }

 private:
  std::size_t index_;
  double ratio_;
};

class DuplicateText : public Error {
 public:
  explicit DuplicateText(std::size_t index);
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

struct ParaphraseSet {
  std::string paragraph_id;
  std::string original;                   // option source A
  std::array<std::string, 3> paraphrases;  // option sources B, C, D

  bool operator==(const ParaphraseSet&) const = default;
};

struct LengthBounds {
  double min_ratio = 0.5;
  double max_ratio = 2.0;
};

std::string build_paraphrase_prompt(std::string_view paragraph_text);

// Extracts the blocks that follow line-initial "Example B:", "Example C:" and
// "Example D:" markers. Text before the first marker is ignored; block D
// ends at the next line-initial "Example <letter>:" marker or end of input.
// Throws MissingLabel, EmptyParaphrase.
ParaphraseSet parse_paraphrase_response(std::string_view response);

// Inverse of parse_paraphrase_response for well-formed sets.
std::string render_paraphrase_response(const ParaphraseSet& set);

// Throws EmptyParaphrase, DuplicateText, LengthOutOfBounds.
const ParaphraseSet& validate_paraphrases(const ParaphraseSet& set, const LengthBounds& bounds = {});

// ---- generation and cache -------------------------------------------------

struct CacheEntry {
  std::string paragraph_id;
  std::string raw_response;  // last response received
  std::optional<ParaphraseSet> set;  // absent when the paragraph was dropped
  std::string error;
  int attempts = 0;
};

json to_json(const CacheEntry& entry);
CacheEntry cache_entry_from_json(const json& record);

// Append-only record-per-line cache keyed by paragraph_id. The last record
// for a key wins.
class ParaphraseCache {
 public:
  ParaphraseCache() = default;
  explicit ParaphraseCache(std::filesystem::path path);

  std::optional<CacheEntry> lookup(const std::string& paragraph_id) const;
  void store(const CacheEntry& entry);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, CacheEntry> entries_;
  std::unique_ptr<JsonlAppender> log_;
};

struct GenerationOptions {
  int max_retries = 2;
  LengthBounds bounds;
};

// Looks up the cache, otherwise asks the paraphrase model, retrying failed
// parses or validations up to max_retries times before dropping the paragraph.
CacheEntry generate_paraphrases(const corpus::Paragraph& paragraph, provider::ChatClient& client,
                                ParaphraseCache& cache, const GenerationOptions& options = {});

}  // namespace decop::paraphrase
