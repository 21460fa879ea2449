#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "decop/common.hpp"

namespace decop::corpus {

class EmptyDocument : public Error {
 public:
  explicit EmptyDocument(const std::string& doc_id)
      : Error("document '" + doc_id + "' has no chapters") {}
};

class InvalidManifest : public Error {
 public:
  using Error::Error;
};

struct Chapter {
  int index = 1;  // 1-based
  std::string text;
};

struct Document {
  std::string doc_id;
  std::string title;
  std::string author;  // several authors are joined with ", "
  Date publication_date;
  std::vector<Chapter> chapters;
  // Calibration-only documents are ingested and quizzed but never scored.
  bool exclude_from_scoring = false;
};

struct Paragraph {
  std::string paragraph_id;
  std::string doc_id;
  int chapter_index = 1;
  // Offset of the first character of the paragraph within its chapter,
  // counted in Unicode code points.
  std::size_t char_offset = 0;
  std::string text;
  std::size_t word_count = 0;
  AccessLabel access = AccessLabel::NonPublic;
};

enum class ProviderKind { OpenAIChat, AnthropicChat, Mock };

std::string_view to_string(ProviderKind kind);
ProviderKind parse_provider_kind(std::string_view text);

struct ModelSpec {
  std::string model_name;
  Date cutoff_date;
  int cutoff_year = 1970;
  ProviderKind provider = ProviderKind::OpenAIChat;

  static ModelSpec make(std::string name, Date cutoff, ProviderKind provider) {
    return ModelSpec{std::move(name), cutoff, cutoff.year, provider};
  }
};

// One manifest record, before chapter sources are read.
struct ManifestEntry {
  std::string id;
  std::string title;
  std::string author;
  std::string date;  // unparsed ISO-8601
  std::vector<std::string> chapters;
  bool exclude_from_scoring = false;
};

ManifestEntry parse_manifest_entry(const json& record);
json to_json(const ManifestEntry& entry);

// Builds a document from a manifest entry and its chapter texts, in order.
// Throws InvalidDate, EmptyDocument.
Document ingest_document(const ManifestEntry& entry, std::vector<std::string> chapter_sources);

// Reads a JSON-lines manifest; chapter paths are relative to its directory.
// Throws IoError when a chapter source cannot be read.
std::vector<Document> load_corpus(const std::filesystem::path& manifest_path);

// ---- segmentation and chunking ------------------------------------------

struct SentenceSpan {
  std::size_t begin = 0;  // byte offsets into the chapter text
  std::size_t end = 0;
};

// Rule-based segmenter: a sentence ends at . ! or ? (plus any closing quotes
// or brackets) followed by whitespace and then an uppercase letter, an
// opening quote or a digit, unless the terminated token is a known
// abbreviation or a single-letter initial.
std::vector<SentenceSpan> segment_sentences(std::string_view text);

struct ChunkingOptions {
  std::size_t min_words = 100;
  std::size_t max_words = 140;
  std::size_t min_trailing_words = 50;
};

std::vector<Paragraph> chunk_paragraphs(const Document& doc, const ChunkingOptions& options = {});

// ---- labels ----------------------------------------------------------------

inline constexpr std::size_t kPublicPreviewChars = 1500;

// Chapters one and four are fully public; elsewhere a paragraph is public
// when it starts inside the first 1500 characters of its chapter.
AccessLabel label_access(int chapter_index, std::size_t char_offset);
inline AccessLabel label_access(const Paragraph& p) {
  return label_access(p.chapter_index, p.char_offset);
}

// Books published in the cutoff year are excluded for that model.
MembershipLabel label_membership(const Date& publication_date, const ModelSpec& model);
inline MembershipLabel label_membership(const Document& doc, const ModelSpec& model) {
  return label_membership(doc.publication_date, model);
}

// ---- diagnostics -----------------------------------------------------------

// Case-folded, punctuation-stripped three-word phrases over paragraphs in
// the given split, ordered by count descending then phrase ascending.
std::vector<std::pair<std::string, std::size_t>> trigram_stats(
    const std::vector<Paragraph>& paragraphs, AccessLabel split);

// ---- paragraph store -------------------------------------------------------

json to_json(const Paragraph& p);
Paragraph paragraph_from_json(const json& record);
void write_paragraph_store(const std::filesystem::path& path, const std::vector<Paragraph>& paragraphs);
std::vector<Paragraph> read_paragraph_store(const std::filesystem::path& path);

}  // namespace decop::corpus
