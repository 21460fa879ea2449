#include "decop/paraphrase.hpp"

#include <spdlog/spdlog.h>
#include <fmt/format.h>

#include "decop/provider.hpp"

namespace decop::paraphrase {

namespace {

constexpr std::string_view kInstruction =
    "Rewrite this entire text (all sentences with no exception) expressing the same meaning "
    "using different words. Aim to keep the rewriting similar in length to the original text. "
    "Do it three times. The text to be rewritten is identified as <Example A>.\n"
    "\n"
    "Format your output as:\n"
    "Example B: <insert paraphrase B>\n"
    "Example C: <insert paraphrase C>\n"
    "Example D: <insert paraphrase D>\n"
    "-\n"
    "Example A: ";

struct Marker {
  char letter = 0;
  std::size_t line_begin = 0;  // where the marker line starts
  std::size_t content_begin = 0;  // first byte after the colon
};

// Recognizes "Example X:" at the start of a line, tolerating surrounding
// blanks and markdown emphasis ("**Example B:**").
std::optional<Marker> marker_at(std::string_view text, std::size_t line_begin) {
  std::size_t i = line_begin;
  auto skip = [&](auto pred) {
    while (i < text.size() && pred(text[i])) ++i;
  };
  auto blank = [](char c) { return c == ' ' || c == '\t'; };
  skip(blank);
  skip([](char c) { return c == '*' || c == '_'; });
  constexpr std::string_view kWord = "Example";
  if (text.substr(i, kWord.size()) != kWord) return std::nullopt;
  i += kWord.size();
  const std::size_t before_letter = i;
  skip(blank);
  if (i == before_letter || i >= text.size()) return std::nullopt;
  const char letter = text[i];
  if (letter < 'A' || letter > 'Z') return std::nullopt;
  ++i;
  skip([](char c) { return c == '*' || c == '_'; });
  skip(blank);
  if (i >= text.size() || text[i] != ':') return std::nullopt;
  ++i;
  skip([](char c) { return c == '*' || c == '_'; });
  return Marker{letter, line_begin, i};
}

std::vector<Marker> find_markers(std::string_view text) {
  std::vector<Marker> markers;
  std::size_t line = 0;
  while (line <= text.size()) {
    if (auto m = marker_at(text, line)) markers.push_back(*m);
    const auto nl = text.find('\n', line);
    if (nl == std::string_view::npos) break;
    line = nl + 1;
  }
  return markers;
}

}  // namespace

LengthOutOfBounds::LengthOutOfBounds(std::size_t index, double ratio)
    : Error(fmt::format("paraphrase {} length ratio {:.3f} outside bounds", kParaphraseLetters.at(index),
                        ratio)),
      index_(index),
      ratio_(ratio) {}

DuplicateText::DuplicateText(std::size_t index)
    : Error(fmt::format("paraphrase {} duplicates another option", kParaphraseLetters.at(index))),
      index_(index) {}

std::string build_paraphrase_prompt(std::string_view paragraph_text) {
  std::string prompt(kInstruction);
  prompt.append(paragraph_text);
  return prompt;
}

ParaphraseSet parse_paraphrase_response(std::string_view response) {
  const auto markers = find_markers(response);
  ParaphraseSet set;
  std::size_t search_from = 0;
  for (std::size_t k = 0; k < kParaphraseLetters.size(); ++k) {
    const char letter = kParaphraseLetters[k];
    std::size_t found = markers.size();
    for (std::size_t m = search_from; m < markers.size(); ++m) {
      if (markers[m].letter == letter) {
        found = m;
        break;
      }
    }
    if (found == markers.size()) throw MissingLabel(letter);
    const std::size_t begin = markers[found].content_begin;
    std::size_t end = response.size();
    if (k + 1 < kParaphraseLetters.size()) {
      // Block ends where the next expected label starts.
      for (std::size_t m = found + 1; m < markers.size(); ++m) {
        if (markers[m].letter == kParaphraseLetters[k + 1]) {
          end = markers[m].line_begin;
          break;
        }
      }
    } else if (found + 1 < markers.size()) {
      end = markers[found + 1].line_begin;
    }
    auto block = trim(response.substr(begin, end - begin));
    if (block.empty()) throw EmptyParaphrase(letter);
    set.paraphrases[k] = std::string(block);
    search_from = found + 1;
  }
  return set;
}

std::string render_paraphrase_response(const ParaphraseSet& set) {
  std::string out;
  for (std::size_t k = 0; k < kParaphraseLetters.size(); ++k) {
    out += fmt::format("Example {}: {}\n", kParaphraseLetters[k], set.paraphrases[k]);
  }
  return out;
}

const ParaphraseSet& validate_paraphrases(const ParaphraseSet& set, const LengthBounds& bounds) {
  const auto original_words = static_cast<double>(count_words(set.original));
  for (std::size_t k = 0; k < set.paraphrases.size(); ++k) {
    const auto& p = set.paraphrases[k];
    if (trim(p).empty()) throw EmptyParaphrase(kParaphraseLetters[k]);
    if (p == set.original) throw DuplicateText(k);
    for (std::size_t j = 0; j < k; ++j) {
      if (p == set.paraphrases[j]) throw DuplicateText(k);
    }
    const double ratio = original_words > 0 ? static_cast<double>(count_words(p)) / original_words : 0.0;
    if (ratio < bounds.min_ratio || ratio > bounds.max_ratio) throw LengthOutOfBounds(k, ratio);
  }
  return set;
}

json to_json(const CacheEntry& entry) {
  json j = {{"paragraph_id", entry.paragraph_id},
            {"raw_response", entry.raw_response},
            {"attempts", entry.attempts}};
  if (entry.set) {
    j["paraphrases"] = entry.set->paraphrases;
  } else {
    j["paraphrases"] = nullptr;
    j["error"] = entry.error;
  }
  return j;
}

CacheEntry cache_entry_from_json(const json& record) {
  CacheEntry e;
  e.paragraph_id = record.at("paragraph_id").get<std::string>();
  e.raw_response = record.value("raw_response", "");
  e.attempts = record.value("attempts", 0);
  e.error = record.value("error", "");
  const auto& p = record.at("paraphrases");
  if (!p.is_null()) {
    ParaphraseSet set;
    set.paragraph_id = e.paragraph_id;
    set.paraphrases = p.get<std::array<std::string, 3>>();
    e.set = std::move(set);
  }
  return e;
}

ParaphraseCache::ParaphraseCache(std::filesystem::path path)
    : log_(std::make_unique<JsonlAppender>(std::move(path))) {
  for (const auto& r : log_->existing()) {
    auto e = cache_entry_from_json(r);
    entries_[e.paragraph_id] = std::move(e);
  }
}

std::optional<CacheEntry> ParaphraseCache::lookup(const std::string& paragraph_id) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(paragraph_id);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ParaphraseCache::store(const CacheEntry& entry) {
  std::lock_guard lock(mutex_);
  if (log_) log_->append(to_json(entry));
  entries_[entry.paragraph_id] = entry;
}

std::size_t ParaphraseCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

CacheEntry generate_paraphrases(const corpus::Paragraph& paragraph, provider::ChatClient& client,
                                ParaphraseCache& cache, const GenerationOptions& options) {
  if (auto hit = cache.lookup(paragraph.paragraph_id)) {
    if (hit->set) hit->set->original = paragraph.text;
    return *hit;
  }
  CacheEntry entry;
  entry.paragraph_id = paragraph.paragraph_id;
  const ChatPrompt prompt{"", build_paraphrase_prompt(paragraph.text)};
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    entry.attempts = attempt + 1;
    try {
      auto reply = client.complete(prompt, attempt);
      entry.raw_response = reply.completion.text;
      auto set = parse_paraphrase_response(entry.raw_response);
      set.paragraph_id = paragraph.paragraph_id;
      set.original = paragraph.text;
      validate_paraphrases(set, options.bounds);
      entry.set = std::move(set);
      entry.error.clear();
      break;
    } catch (const provider::FatalProviderError&) {
      throw;
    } catch (const Error& e) {
      entry.error = e.what();
    }
  }
  if (!entry.set) {
    spdlog::warn("dropping paragraph {} after {} attempts: {}", paragraph.paragraph_id, entry.attempts,
                 entry.error);
  }
  cache.store(entry);
  return entry;
}

}  // namespace decop::paraphrase
