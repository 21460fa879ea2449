#include <map>
#include <sstream>

#include <fmt/format.h>

#include "decop/pipeline.hpp"
#include "decop/stats.hpp"

namespace decop::pipeline {

namespace fs = std::filesystem;

namespace {

std::string num(const json& v) { return v.is_null() ? "" : fmt::format("{:.6f}", v.get<double>()); }

// Quotes a CSV field when it contains a delimiter, quote or newline.
std::string field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class Csv {
 public:
  explicit Csv(std::initializer_list<std::string_view> header) {
    bool first = true;
    for (auto h : header) {
      if (!first) text_ += ',';
      text_ += h;
      first = false;
    }
    text_ += '\n';
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) text_ += ',';
      text_ += field(cells[i]);
    }
    text_ += '\n';
  }

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

std::string str(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

std::vector<fs::path> emit_report(const fs::path& analyze_dir, const fs::path& report_dir) {
  const auto auroc = read_jsonl(analyze_dir / "auroc.jsonl");
  const auto rates = read_jsonl(analyze_dir / "guess_rates.jsonl");
  const auto books = read_jsonl(analyze_dir / "book_scores.jsonl");
  const auto sizes = read_jsonl(analyze_dir / "sample_sizes.jsonl");
  const auto trigrams = read_jsonl(analyze_dir / "trigrams.jsonl");
  fs::create_directories(report_dir);

  Csv sizes_csv({"model", "split", "membership", "books", "paragraphs", "mean_words"});
  for (const auto& r : sizes) {
    sizes_csv.row({str(r.at("model")), str(r.at("split")), str(r.at("membership")), str(r.at("books")),
                   str(r.at("paragraphs")), num(r.at("mean_words"))});
  }

  Csv grid_csv({"model", "split", "method", "status", "value", "ci_low", "ci_high", "n_pos", "n_neg", "seed"});
  Csv book_ci_csv({"model", "split", "status", "value", "ci_low", "ci_high", "n_pos", "n_neg"});
  Csv par_ci_csv({"model", "split", "status", "value", "ci_low", "ci_high", "n_pos", "n_neg"});
  for (const auto& r : auroc) {
    const bool degenerate = r.at("value").is_null();
    const std::string status = degenerate ? "degenerate" : "ok";
    const json& ci = r.at("ci");
    const std::string lo = ci.is_null() ? "" : num(ci.at(0));
    const std::string hi = ci.is_null() ? "" : num(ci.at(1));
    const std::string method = str(r.at("method"));
    grid_csv.row({str(r.at("model")), str(r.at("split")), method, status, num(r.at("value")), lo, hi,
                  str(r.at("n_pos")), str(r.at("n_neg")), str(r.at("seed"))});
    std::vector<std::string> ci_row = {str(r.at("model")), str(r.at("split")), status, num(r.at("value")), lo, hi,
                                       str(r.at("n_pos")),  str(r.at("n_neg"))};
    if (method == stats::to_string(stats::Method::BookLevel)) book_ci_csv.row(ci_row);
    if (method == stats::to_string(stats::Method::ParagraphLevel)) par_ci_csv.row(ci_row);
  }

  Csv rates_csv({"model", "split", "potential_member_rate", "non_member_rate", "potential_member_quizzes",
                 "non_member_quizzes"});
  for (const auto& r : rates) {
    rates_csv.row({str(r.at("model")), str(r.at("split")), num(r.at("potential_member_rate")),
                   num(r.at("non_member_rate")), str(r.at("potential_member_quizzes")),
                   str(r.at("non_member_quizzes"))});
  }

  Csv books_csv({"model", "split", "doc_id", "membership", "n_paragraphs", "mean_rate"});
  for (const auto& r : books) {
    books_csv.row({str(r.at("model")), str(r.at("split")), str(r.at("doc_id")), str(r.at("membership")),
                   str(r.at("n_paragraphs")), num(r.at("mean_rate"))});
  }

  Csv trigram_csv({"split", "rank", "phrase", "count"});
  for (const auto& r : trigrams) {
    trigram_csv.row({str(r.at("split")), str(r.at("rank")), str(r.at("phrase")), str(r.at("count"))});
  }

  // Human-readable digest of the same records.
  std::ostringstream summary;
  std::vector<std::string> models;
  for (const auto& r : auroc) {
    const auto m = str(r.at("model"));
    if (models.empty() || models.back() != m) models.push_back(m);
  }
  for (const auto& model : models) {
    summary << "Model: " << model << "\n\n";
    summary << "  Sample sizes (books / paragraphs / mean words)\n";
    for (const auto& r : sizes) {
      if (str(r.at("model")) != model) continue;
      summary << fmt::format("    {:<10} {:<16} {:>4} / {:>6} / {}\n", str(r.at("split")), str(r.at("membership")),
                             str(r.at("books")), str(r.at("paragraphs")),
                             r.at("mean_words").is_null() ? "-" : fmt::format("{:.1f}", r.at("mean_words").get<double>()));
    }
    summary << "\n  Pooled guess rate (potential member vs non-member)\n";
    for (const auto& r : rates) {
      if (str(r.at("model")) != model) continue;
      auto pct = [](const json& v) { return v.is_null() ? std::string("-") : fmt::format("{:.1f}%", 100.0 * v.get<double>()); };
      summary << fmt::format("    {:<10} {:>7} vs {:>7}\n", str(r.at("split")), pct(r.at("potential_member_rate")),
                             pct(r.at("non_member_rate")));
    }
    summary << "\n  AUROC\n";
    for (const auto& r : auroc) {
      if (str(r.at("model")) != model) continue;
      std::string value = r.at("value").is_null() ? "degenerate" : fmt::format("{:.3f}", r.at("value").get<double>());
      if (!r.at("ci").is_null()) {
        value += fmt::format(" [{:.3f}, {:.3f}]", r.at("ci").at(0).get<double>(), r.at("ci").at(1).get<double>());
      }
      summary << fmt::format("    {:<10} {:<26} {}\n", str(r.at("split")), str(r.at("method")), value);
    }
    summary << "\n";
  }

  const std::vector<std::pair<std::string, std::string>> files = {
      {"sample_sizes.csv", sizes_csv.text()},   {"auroc_grid.csv", grid_csv.text()},
      {"book_ci.csv", book_ci_csv.text()},      {"paragraph_ci.csv", par_ci_csv.text()},
      {"guess_rates.csv", rates_csv.text()},    {"book_scores.csv", books_csv.text()},
      {"trigrams.csv", trigram_csv.text()},     {"summary.txt", summary.str()}};
  std::vector<fs::path> written;
  for (const auto& [name, text] : files) {
    write_text_file(report_dir / name, text);
    written.push_back(report_dir / name);
  }
  return written;
}

}  // namespace decop::pipeline
