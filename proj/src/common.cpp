#include "decop/common.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

namespace decop {

namespace {

bool parse_uint(std::string_view text, unsigned& out) {
  if (text.empty()) return false;
  unsigned value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') return false;
    value = value * 10 + static_cast<unsigned>(c - '0');
  }
  out = value;
  return true;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

Date parse_date(std::string_view text) {
  const std::string_view t = trim(text);
  unsigned year = 0;
  unsigned month = 0;
  unsigned day = 1;
  const bool full = t.size() == 10 && t[4] == '-' && t[7] == '-';
  const bool month_only = t.size() == 7 && t[4] == '-';
  if (!full && !month_only) throw InvalidDate(std::string(text));
  if (!parse_uint(t.substr(0, 4), year) || !parse_uint(t.substr(5, 2), month) ||
      (full && !parse_uint(t.substr(8, 2), day))) {
    throw InvalidDate(std::string(text));
  }
  const std::chrono::year_month_day ymd{std::chrono::year{static_cast<int>(year)},
                                        std::chrono::month{month}, std::chrono::day{day}};
  if (!ymd.ok()) throw InvalidDate(std::string(text));
  return Date{static_cast<int>(year), month, day};
}

std::string format_date(const Date& date) {
  return fmt::format("{:04d}-{:02d}-{:02d}", date.year, date.month, date.day);
}

std::string_view to_string(AccessLabel label) {
  return label == AccessLabel::Public ? "public" : "non_public";
}

std::string_view to_string(MembershipLabel label) {
  switch (label) {
    case MembershipLabel::PotentialMember:
      return "potential_member";
    case MembershipLabel::NonMember:
      return "non_member";
    case MembershipLabel::Excluded:
      return "excluded";
  }
  return "excluded";
}

std::string_view to_string(AccessSplit split) {
  switch (split) {
    case AccessSplit::All:
      return "all";
    case AccessSplit::Public:
      return "public";
    case AccessSplit::NonPublic:
      return "non_public";
  }
  return "all";
}

AccessLabel parse_access_label(std::string_view text) {
  if (text == "public") return AccessLabel::Public;
  if (text == "non_public") return AccessLabel::NonPublic;
  throw Error(fmt::format("unknown access label '{}'", text));
}

MembershipLabel parse_membership_label(std::string_view text) {
  if (text == "potential_member") return MembershipLabel::PotentialMember;
  if (text == "non_member") return MembershipLabel::NonMember;
  if (text == "excluded") return MembershipLabel::Excluded;
  throw Error(fmt::format("unknown membership label '{}'", text));
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file_hex(const std::filesystem::path& path) {
  return sha256_hex(read_text_file(path));
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.push_back(std::move(line));
  }
  std::vector<json> records;
  records.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      records.push_back(json::parse(lines[i]));
    } catch (const json::parse_error& e) {
      if (i + 1 == lines.size()) break;
      throw IoError(fmt::format("{}:{}: {}", path.string(), i + 1, e.what()));
    }
  }
  return records;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  write_text_file(path, out);
}

JsonlAppender::JsonlAppender(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (std::filesystem::exists(path_)) {
    const std::string content = read_text_file(path_);
    const auto last_newline = content.rfind('\n');
    const std::size_t keep = last_newline == std::string::npos ? 0 : last_newline + 1;
    if (keep < content.size()) std::filesystem::resize_file(path_, keep);
    existing_ = read_jsonl(path_);
  }
  out_ = std::make_unique<std::ofstream>(path_, std::ios::binary | std::ios::app);
  if (!*out_) throw IoError(fmt::format("cannot append to '{}'", path_.string()));
}

void JsonlAppender::append(const json& record) {
  *out_ << record.dump() << '\n';
  out_->flush();
  if (!*out_) throw IoError(fmt::format("write to '{}' failed", path_.string()));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write '{}'", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError(fmt::format("short write to '{}'", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

std::string_view trim(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return text.substr(b, e - b);
}

}  // namespace decop
