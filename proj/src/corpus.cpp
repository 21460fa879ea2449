#include "decop/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>

#include <fmt/format.h>

namespace decop::corpus {

namespace {

constexpr std::array<std::string_view, 24> kAbbreviations = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "e.g", "i.e", "cf",
    "fig", "figs", "eq", "eqs", "ch", "sec", "no", "vol", "approx", "et al", "al", "ca"};

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool starts_with_at(std::string_view text, std::size_t pos, std::string_view what) {
  return text.substr(pos, what.size()) == what;
}

// Length of a closing quote/bracket at pos, or 0.
std::size_t closing_mark(std::string_view text, std::size_t pos) {
  if (pos >= text.size()) return 0;
  const char c = text[pos];
  if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
  if (starts_with_at(text, pos, "\xE2\x80\x9D") || starts_with_at(text, pos, "\xE2\x80\x99")) return 3;
  return 0;
}

bool opens_sentence(std::string_view text, std::size_t pos) {
  if (pos >= text.size()) return false;
  const auto c = static_cast<unsigned char>(text[pos]);
  if (std::isupper(c) || std::isdigit(c) || c == '"' || c == '\'' || c == '(') return true;
  return starts_with_at(text, pos, "\xE2\x80\x9C") || starts_with_at(text, pos, "\xE2\x80\x98");
}

bool is_abbreviation(std::string_view text, std::size_t period_pos) {
  std::size_t start = period_pos;
  while (start > 0 && !is_space(static_cast<unsigned char>(text[start - 1]))) --start;
  std::string token;
  for (std::size_t i = start; i < period_pos; ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (token.empty() && (c == '(' || c == '"' || c == '\'' || c == '[')) continue;
    token.push_back(static_cast<char>(std::tolower(c)));
  }
  if (token.empty()) return false;
  if (token.size() == 1 && std::isalpha(static_cast<unsigned char>(token[0]))) return true;
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), token) != kAbbreviations.end();
}

std::string normalize_newlines(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (auto w : split_words(text)) {
    if (!out.empty()) out.push_back(' ');
    out.append(w);
  }
  return out;
}

std::string string_field(const json& record, const char* key) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw InvalidManifest(fmt::format("manifest record missing string field '{}'", key));
  }
  return it->get<std::string>();
}

}  // namespace

std::string_view to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::OpenAIChat:
      return "openai-chat";
    case ProviderKind::AnthropicChat:
      return "anthropic-chat";
    case ProviderKind::Mock:
      return "mock";
  }
  return "mock";
}

ProviderKind parse_provider_kind(std::string_view text) {
  if (text == "openai-chat") return ProviderKind::OpenAIChat;
  if (text == "anthropic-chat") return ProviderKind::AnthropicChat;
  if (text == "mock") return ProviderKind::Mock;
  throw Error(fmt::format("unknown provider kind '{}'", text));
}

ManifestEntry parse_manifest_entry(const json& record) {
  if (!record.is_object()) throw InvalidManifest("manifest record is not an object");
  ManifestEntry entry;
  entry.id = string_field(record, "id");
  entry.title = string_field(record, "title");
  entry.date = string_field(record, "date");
  const auto author = record.find("author");
  if (author == record.end()) throw InvalidManifest("manifest record missing 'author'");
  if (author->is_array()) {
    for (const auto& a : *author) {
      if (!entry.author.empty()) entry.author += ", ";
      entry.author += a.get<std::string>();
    }
  } else {
    entry.author = author->get<std::string>();
  }
  const auto chapters = record.find("chapters");
  if (chapters == record.end() || !chapters->is_array()) {
    throw InvalidManifest(fmt::format("manifest record '{}' missing 'chapters' list", entry.id));
  }
  for (const auto& c : *chapters) entry.chapters.push_back(c.get<std::string>());
  entry.exclude_from_scoring = record.value("exclude_from_scoring", false);
  return entry;
}

json to_json(const ManifestEntry& entry) {
  json j = {{"id", entry.id},
            {"title", entry.title},
            {"author", entry.author},
            {"date", entry.date},
            {"chapters", entry.chapters}};
  if (entry.exclude_from_scoring) j["exclude_from_scoring"] = true;
  return j;
}

Document ingest_document(const ManifestEntry& entry, std::vector<std::string> chapter_sources) {
  Document doc;
  doc.doc_id = entry.id;
  doc.title = entry.title;
  doc.author = entry.author;
  doc.publication_date = parse_date(entry.date);
  doc.exclude_from_scoring = entry.exclude_from_scoring;
  if (chapter_sources.empty()) throw EmptyDocument(entry.id);
  doc.chapters.reserve(chapter_sources.size());
  int index = 1;
  for (auto& src : chapter_sources) {
    doc.chapters.push_back(Chapter{index++, normalize_newlines(src)});
  }
  return doc;
}

std::vector<Document> load_corpus(const std::filesystem::path& manifest_path) {
  const auto base = manifest_path.parent_path();
  std::vector<Document> docs;
  for (const auto& record : read_jsonl(manifest_path)) {
    const auto entry = parse_manifest_entry(record);
    std::vector<std::string> sources;
    sources.reserve(entry.chapters.size());
    for (const auto& rel : entry.chapters) sources.push_back(read_text_file(base / rel));
    docs.push_back(ingest_document(entry, std::move(sources)));
  }
  return docs;
}

std::vector<SentenceSpan> segment_sentences(std::string_view text) {
  std::vector<SentenceSpan> spans;
  std::size_t begin = 0;
  auto emit = [&](std::size_t end) {
    while (begin < end && is_space(static_cast<unsigned char>(text[begin]))) ++begin;
    std::size_t e = end;
    while (e > begin && is_space(static_cast<unsigned char>(text[e - 1]))) --e;
    if (e > begin) spans.push_back({begin, e});
    begin = end;
  };

  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    // A blank line always separates sentences (headings, list items).
    if (c == '\n' && i + 1 < text.size()) {
      std::size_t k = i + 1;
      while (k < text.size() && (text[k] == ' ' || text[k] == '\t')) ++k;
      if (k < text.size() && text[k] == '\n') {
        emit(i);
        i = k + 1;
        continue;
      }
    }
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
    while (std::size_t n = closing_mark(text, j)) j += n;
    if (j >= text.size()) break;
    if (!is_space(static_cast<unsigned char>(text[j]))) {
      i = j;
      continue;
    }
    std::size_t k = j;
    while (k < text.size() && is_space(static_cast<unsigned char>(text[k]))) ++k;
    const bool abbreviation = c == '.' && j == i + 1 && is_abbreviation(text, i);
    if (opens_sentence(text, k) && !abbreviation) emit(j);
    i = j;
  }
  emit(text.size());
  return spans;
}

std::vector<Paragraph> chunk_paragraphs(const Document& doc, const ChunkingOptions& options) {
  std::vector<Paragraph> out;
  for (const auto& chapter : doc.chapters) {
    const std::string_view text = chapter.text;
    const auto spans = segment_sentences(text);

    // Code-point offset of each byte position we care about, computed
    // incrementally as spans are ordered.
    std::size_t cp_pos = 0;
    std::size_t byte_pos = 0;
    auto code_point_offset = [&](std::size_t byte) {
      for (; byte_pos < byte; ++byte_pos) {
        if ((static_cast<unsigned char>(text[byte_pos]) & 0xC0) != 0x80) ++cp_pos;
      }
      return cp_pos;
    };

    std::size_t chunk_begin = 0;
    std::size_t chunk_end = 0;
    std::size_t chunk_words = 0;
    bool open = false;
    auto close = [&](bool trailing) {
      if (!open) return;
      open = false;
      if (trailing && chunk_words < options.min_trailing_words) return;
      Paragraph p;
      p.doc_id = doc.doc_id;
      p.chapter_index = chapter.index;
      p.char_offset = code_point_offset(chunk_begin);
      p.text = collapse_whitespace(text.substr(chunk_begin, chunk_end - chunk_begin));
      p.word_count = count_words(p.text);
      p.paragraph_id = fmt::format("{}:{}:{}", doc.doc_id, chapter.index, p.char_offset);
      p.access = label_access(p.chapter_index, p.char_offset);
      out.push_back(std::move(p));
    };

    for (const auto& span : spans) {
      const std::size_t n = count_words(text.substr(span.begin, span.end - span.begin));
      if (open && chunk_words >= options.min_words && chunk_words + n > options.max_words) {
        close(false);
      }
      if (!open) {
        open = true;
        chunk_begin = span.begin;
        chunk_words = 0;
      }
      chunk_end = span.end;
      chunk_words += n;
    }
    close(true);
  }
  return out;
}

AccessLabel label_access(int chapter_index, std::size_t char_offset) {
  if (chapter_index == 1 || chapter_index == 4) return AccessLabel::Public;
  return char_offset < kPublicPreviewChars ? AccessLabel::Public : AccessLabel::NonPublic;
}

MembershipLabel label_membership(const Date& publication_date, const ModelSpec& model) {
  if (publication_date.year == model.cutoff_year) return MembershipLabel::Excluded;
  return publication_date.year < model.cutoff_year ? MembershipLabel::PotentialMember
                                                   : MembershipLabel::NonMember;
}

std::vector<std::pair<std::string, std::size_t>> trigram_stats(
    const std::vector<Paragraph>& paragraphs, AccessLabel split) {
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> tokens;
  for (const auto& p : paragraphs) {
    if (p.access != split) continue;
    tokens.clear();
    for (auto w : split_words(p.text)) {
      std::string t;
      for (char c : w) {
        const auto u = static_cast<unsigned char>(c);
        if (std::ispunct(u)) continue;
        t.push_back(static_cast<char>(std::tolower(u)));
      }
      if (!t.empty()) tokens.push_back(std::move(t));
    }
    for (std::size_t i = 0; i + 2 < tokens.size(); ++i) {
      ++counts[tokens[i] + ' ' + tokens[i + 1] + ' ' + tokens[i + 2]];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

json to_json(const Paragraph& p) {
  return {{"paragraph_id", p.paragraph_id}, {"doc_id", p.doc_id},
          {"chapter_index", p.chapter_index}, {"char_offset", p.char_offset},
          {"word_count", p.word_count},       {"text", p.text},
          {"access_label", to_string(p.access)}};
}

Paragraph paragraph_from_json(const json& record) {
  Paragraph p;
  p.paragraph_id = record.at("paragraph_id").get<std::string>();
  p.doc_id = record.at("doc_id").get<std::string>();
  p.chapter_index = record.at("chapter_index").get<int>();
  p.char_offset = record.at("char_offset").get<std::size_t>();
  p.word_count = record.at("word_count").get<std::size_t>();
  p.text = record.at("text").get<std::string>();
  p.access = parse_access_label(record.at("access_label").get<std::string>());
  return p;
}

void write_paragraph_store(const std::filesystem::path& path, const std::vector<Paragraph>& paragraphs) {
  std::vector<json> records;
  records.reserve(paragraphs.size());
  for (const auto& p : paragraphs) records.push_back(to_json(p));
  write_jsonl(path, records);
}

std::vector<Paragraph> read_paragraph_store(const std::filesystem::path& path) {
  std::vector<Paragraph> out;
  for (const auto& r : read_jsonl(path)) out.push_back(paragraph_from_json(r));
  return out;
}

}  // namespace decop::corpus
