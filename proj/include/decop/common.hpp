#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace decop {

using json = nlohmann::json;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidDate : public Error {
 public:
  explicit InvalidDate(const std::string& text)
      : Error("invalid ISO-8601 date: '" + text + "'") {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Calendar date. Ordering is chronological.
struct Date {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;

  auto operator<=>(const Date&) const = default;
};

// Accepts YYYY-MM-DD, and YYYY-MM (day 1).
Date parse_date(std::string_view text);
std::string format_date(const Date& date);

enum class AccessLabel { Public, NonPublic };
enum class MembershipLabel { PotentialMember, NonMember, Excluded };
enum class AccessSplit { All, Public, NonPublic };

std::string_view to_string(AccessLabel label);
std::string_view to_string(MembershipLabel label);
std::string_view to_string(AccessSplit split);
AccessLabel parse_access_label(std::string_view text);
MembershipLabel parse_membership_label(std::string_view text);

inline bool in_split(AccessLabel label, AccessSplit split) {
  switch (split) {
    case AccessSplit::All:
      return true;
    case AccessSplit::Public:
      return label == AccessLabel::Public;
    case AccessSplit::NonPublic:
      return label == AccessLabel::NonPublic;
  }
  return false;
}

inline constexpr AccessSplit kAllSplits[] = {AccessSplit::All, AccessSplit::Public,
                                             AccessSplit::NonPublic};

// A system + user message pair sent to a chat model.
struct ChatPrompt {
  std::string system;
  std::string user;

  bool operator==(const ChatPrompt&) const = default;
};

// ---- hashing -------------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::string sha256_file_hex(const std::filesystem::path& path);

// FNV-1a, 64 bit. Stable across platforms; used for RNG stream ids.
constexpr std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---- random numbers ------------------------------------------------------

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded generator with distributions defined here rather than by the
// standard library, whose distribution algorithms differ between vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Independent stream for (seed, stream_id).
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(splitmix64(seed) ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL));
  }

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// ---- record-per-line files ------------------------------------------------

// Reads a JSON-lines file. A final line that fails to parse (a torn write)
// is skipped; malformed lines elsewhere raise IoError.
std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

// Append-only JSON-lines log. Opening repairs a torn final line left by an
// interrupted writer; each append is flushed before returning.
class JsonlAppender {
 public:
  explicit JsonlAppender(std::filesystem::path path);
  JsonlAppender(const JsonlAppender&) = delete;
  JsonlAppender& operator=(const JsonlAppender&) = delete;

  // Records present when the log was opened.
  const std::vector<json>& existing() const { return existing_; }
  void append(const json& record);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<json> existing_;
  std::unique_ptr<std::ofstream> out_;
};

std::string read_text_file(const std::filesystem::path& path);
// Writes via a temporary file and rename so readers never see partial output.
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Splits on ASCII whitespace.
std::vector<std::string_view> split_words(std::string_view text);
std::size_t count_words(std::string_view text);
std::string_view trim(std::string_view text);

}  // namespace decop
