#include "decop/simulator.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "decop/paraphrase.hpp"

namespace decop::sim {

namespace {

// Filler vocabulary: lowercase, at least three letters, and disjoint from the
// segmenter's abbreviation list so no generated period is mistaken for one.
constexpr std::string_view kVocabulary[] = {
    "river",    "stone",    "garden",   "window",  "market",   "signal",   "engine",   "harbor",   "lantern",
    "orchard",  "meadow",   "bridge",   "canvas",  "thunder",  "pattern",  "village",  "compass",  "anchor",
    "mirror",   "ladder",   "kettle",   "basket",  "feather",  "candle",   "shadow",   "valley",   "forest",
    "silver",   "copper",   "marble",   "timber",  "granite",  "velvet",   "cotton",   "linen",    "paper",
    "letter",   "number",   "system",   "module",  "network",  "server",   "client",   "buffer",   "packet",
    "record",   "ledger",   "account",  "balance", "budget",   "report",   "review",   "summary",  "chapter",
    "section",  "figure",   "table",    "column",  "header",   "footer",   "margin",   "border",   "corner",
    "center",   "method",   "process",  "result",  "outcome",  "measure",  "metric",   "sample",   "survey",
    "question", "answer",   "option",   "choice",  "decision", "reason",   "purpose",  "context",  "detail",
    "careful",  "quiet",    "steady",   "rapid",   "gentle",   "bright",   "narrow",   "broad",    "simple",
    "formal",   "casual",   "modern",   "ancient", "hidden",   "visible",  "useful",   "fragile",  "robust",
    "public",   "private",  "shared",   "central", "distant",  "nearby",   "early",    "later",    "often",
    "rarely",   "always",   "never",    "perhaps", "indeed",   "however",  "although", "because",  "while",
    "before",   "after",    "during",   "around",  "between",  "within",   "without",  "across",   "toward",
    "builds",   "carries",  "follows",  "gathers", "holds",    "keeps",    "leads",    "moves",    "opens",
    "places",   "reaches",  "shapes",   "turns",   "watches",  "writes",   "reads",    "counts",   "checks",
    "sorts",    "joins",    "splits",   "stores",  "sends",    "returns",  "handles",  "tests",    "tracks",
    "the",      "and",      "with",     "from",    "into",     "over",     "under",    "about"};

std::string capitalized(std::string_view word) {
  std::string out(word);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::string make_sentence(Rng& rng, int n_words) {
  std::string s;
  for (int i = 0; i < n_words; ++i) {
    const auto word = kVocabulary[rng.below(std::size(kVocabulary))];
    if (i == 0) {
      s += capitalized(word);
    } else {
      s += ' ';
      s += word;
    }
  }
  s += '.';
  return s;
}

// One paragraph-sized block: a 41-50 word opening sentence, then 10-25 word
// sentences until the block reaches 100 words (so it ends below 125). The
// next block's opening sentence then always overflows the chunk limit.
std::string make_block(Rng& rng) {
  int words = 41 + static_cast<int>(rng.below(10));
  std::string block = make_sentence(rng, words);
  while (words < 100) {
    const int n = 10 + static_cast<int>(rng.below(16));
    block += ' ';
    block += make_sentence(rng, n);
    words += n;
  }
  return block;
}

double binomial_pmf(int k, int i, double p) {
  if (p <= 0.0) return i == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return i == k ? 1.0 : 0.0;
  const double log_choose = std::lgamma(k + 1.0) - std::lgamma(i + 1.0) - std::lgamma(k - i + 1.0);
  return std::exp(log_choose + i * std::log(p) + (k - i) * std::log1p(-p));
}

std::string user_message(const json& wire) {
  for (auto it = wire.at("messages").rbegin(); it != wire.at("messages").rend(); ++it) {
    if (it->value("role", "") == "user") return it->at("content").get<std::string>();
  }
  throw provider::ProviderError("request has no user message", 400);
}

}  // namespace

void validate(const SyntheticConfig& cfg) {
  if (cfg.n_books_member < 0 || cfg.n_books_nonmember < 0) throw InvalidConfig("book counts must be >= 0");
  if (cfg.paragraphs_per_book < 1) throw InvalidConfig("paragraphs_per_book must be >= 1");
  if (cfg.quizzes_per_paragraph < 1) throw InvalidConfig("quizzes_per_paragraph must be >= 1");
  if (cfg.chapters_per_book < 1) throw InvalidConfig("chapters_per_book must be >= 1");
  auto check = [](double p, std::string_view what) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidConfig(fmt::format("{} = {} is outside [0, 1]", what, p));
  };
  check(cfg.p_member, "p_member");
  check(cfg.p_nonmember, "p_nonmember");
  check(cfg.p_member + cfg.p_public_boost, "p_member + p_public_boost");
  if (!cfg.boost_members_only) check(cfg.p_nonmember + cfg.p_public_boost, "p_nonmember + p_public_boost");
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig c;
  c.n_books_member = j.value("n_books_member", c.n_books_member);
  c.n_books_nonmember = j.value("n_books_nonmember", c.n_books_nonmember);
  c.paragraphs_per_book = j.value("paragraphs_per_book", c.paragraphs_per_book);
  c.p_member = j.value("p_member", c.p_member);
  c.p_nonmember = j.value("p_nonmember", c.p_nonmember);
  c.p_public_boost = j.value("p_public_boost", c.p_public_boost);
  c.boost_members_only = j.value("boost_members_only", c.boost_members_only);
  c.quizzes_per_paragraph = j.value("quizzes_per_paragraph", c.quizzes_per_paragraph);
  c.chapters_per_book = j.value("chapters_per_book", c.chapters_per_book);
  c.seed = j.value("seed", c.seed);
  return c;
}

json to_json(const SyntheticConfig& c) {
  return {{"n_books_member", c.n_books_member},
          {"n_books_nonmember", c.n_books_nonmember},
          {"paragraphs_per_book", c.paragraphs_per_book},
          {"p_member", c.p_member},
          {"p_nonmember", c.p_nonmember},
          {"p_public_boost", c.p_public_boost},
          {"boost_members_only", c.boost_members_only},
          {"quizzes_per_paragraph", c.quizzes_per_paragraph},
          {"chapters_per_book", c.chapters_per_book},
          {"seed", c.seed}};
}

SyntheticCorpus synth_corpus(const SyntheticConfig& cfg) {
  validate(cfg);
  SyntheticCorpus out;
  out.model = corpus::ModelSpec::make(std::string(kSyntheticModelName), kSyntheticCutoff, corpus::ProviderKind::Mock);

  const int chapters = std::min(cfg.chapters_per_book, cfg.paragraphs_per_book);
  const int n_books = cfg.n_books_member + cfg.n_books_nonmember;
  for (int b = 0; b < n_books; ++b) {
    const bool member = b < cfg.n_books_member;
    const int i = member ? b : b - cfg.n_books_member;
    corpus::ManifestEntry entry;
    entry.id = fmt::format("synth-{}-{:03}", member ? "member" : "nonmember", i + 1);
    entry.title = fmt::format("Synthetic {} Volume {}", member ? "Member" : "Holdout", i + 1);
    entry.author = fmt::format("Author {}", b + 1);
    entry.date = member ? fmt::format("{}-{:02}-01", 2020 + i % 3, 1 + i % 12) : fmt::format("2024-{:02}-15", 1 + i % 12);

    Rng rng = Rng::stream(cfg.seed, fnv1a64(entry.id));
    std::vector<std::string> sources;
    for (int c = 0; c < chapters; ++c) {
      const int blocks = cfg.paragraphs_per_book / chapters + (c < cfg.paragraphs_per_book % chapters ? 1 : 0);
      std::string text;
      for (int k = 0; k < blocks; ++k) {
        if (k > 0) text += "\n\n";
        text += make_block(rng);
      }
      text += '\n';
      entry.chapters.push_back(fmt::format("texts/{}/ch{:02}.txt", entry.id, c + 1));
      sources.push_back(std::move(text));
    }
    auto doc = corpus::ingest_document(entry, std::move(sources));
    auto paragraphs = corpus::chunk_paragraphs(doc);
    out.paragraphs.insert(out.paragraphs.end(), std::make_move_iterator(paragraphs.begin()),
                          std::make_move_iterator(paragraphs.end()));
    out.manifest.push_back(std::move(entry));
    out.documents.push_back(std::move(doc));
  }
  return out;
}

std::filesystem::path write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::vector<json> records;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    const auto& entry = corpus.manifest.at(d);
    const auto& doc = corpus.documents.at(d);
    for (std::size_t c = 0; c < entry.chapters.size(); ++c) {
      const auto path = dir / entry.chapters[c];
      std::filesystem::create_directories(path.parent_path());
      write_text_file(path, doc.chapters.at(c).text);
    }
    records.push_back(corpus::to_json(entry));
  }
  const auto manifest = dir / "manifest.jsonl";
  write_jsonl(manifest, records);
  return manifest;
}

double correct_probability(const SyntheticConfig& cfg, MembershipLabel membership, AccessLabel access) {
  const bool member = membership == MembershipLabel::PotentialMember;
  double p = member ? cfg.p_member : cfg.p_nonmember;
  if (access == AccessLabel::Public && (member || !cfg.boost_members_only)) p += cfg.p_public_boost;
  return p;
}

char synth_model_answer(char answer_key, double p, Rng& rng) {
  if (rng.bernoulli(p)) return answer_key;
  std::array<char, 3> wrong{};
  std::size_t n = 0;
  for (char letter : quiz::kLetters) {
    if (letter != answer_key) wrong[n++] = letter;
  }
  return wrong[rng.below(3)];
}

double expected_paragraph_auroc(double p_m, double p_n, int k) {
  if (k < 1) throw InvalidConfig("k must be >= 1");
  std::vector<double> pm(static_cast<std::size_t>(k) + 1);
  std::vector<double> pn(static_cast<std::size_t>(k) + 1);
  for (int i = 0; i <= k; ++i) {
    pm[static_cast<std::size_t>(i)] = binomial_pmf(k, i, p_m);
    pn[static_cast<std::size_t>(i)] = binomial_pmf(k, i, p_n);
  }
  // Wins, ties and losses are summed separately and normalized by their
  // total, so rounding in the pmf does not leave the result a few ulps off
  // when one side is negligible.
  double win = 0.0;
  double tie = 0.0;
  double loss = 0.0;
  for (int i = 0; i <= k; ++i) {
    for (int j = 0; j <= k; ++j) {
      const double w = pm[static_cast<std::size_t>(i)] * pn[static_cast<std::size_t>(j)];
      (i > j ? win : i == j ? tie : loss) += w;
    }
  }
  return (win + 0.5 * tie) / (win + tie + loss);
}

std::vector<scoring::ScoredParagraph> simulate_guess_rates(const SyntheticConfig& cfg, const SyntheticCorpus& corpus,
                                                           std::uint64_t seed) {
  validate(cfg);
  std::map<std::string, MembershipLabel, std::less<>> membership;
  for (const auto& doc : corpus.documents) membership[doc.doc_id] = corpus::label_membership(doc, corpus.model);

  std::vector<scoring::ScoredParagraph> out;
  out.reserve(corpus.paragraphs.size());
  for (const auto& p : corpus.paragraphs) {
    scoring::ScoredParagraph s;
    s.doc_id = p.doc_id;
    s.access = p.access;
    s.membership = membership.at(p.doc_id);
    const double prob = correct_probability(cfg, s.membership, s.access);
    Rng rng = Rng::stream(seed, fnv1a64(p.paragraph_id));
    s.rate.paragraph_id = p.paragraph_id;
    s.rate.n_quizzes = cfg.quizzes_per_paragraph;
    for (int q = 0; q < cfg.quizzes_per_paragraph; ++q) {
      if (rng.bernoulli(prob)) ++s.rate.n_correct;
    }
    s.rate.rate = static_cast<double>(s.rate.n_correct) / s.rate.n_quizzes;
    out.push_back(std::move(s));
  }
  return out;
}

ParagraphIndex::ParagraphIndex(const std::vector<corpus::Document>& documents,
                               const std::vector<corpus::Paragraph>& paragraphs) {
  std::map<std::string, Date, std::less<>> dates;
  for (const auto& doc : documents) dates[doc.doc_id] = doc.publication_date;
  for (const auto& p : paragraphs) {
    auto it = dates.find(p.doc_id);
    if (it == dates.end()) continue;
    by_text_.emplace(p.text, Entry{p.paragraph_id, it->second, p.access});
  }
}

const ParagraphIndex::Entry* ParagraphIndex::find(const std::string& text) const {
  auto it = by_text_.find(text);
  return it == by_text_.end() ? nullptr : &it->second;
}

std::array<std::string, 4> parse_quiz_options(const std::string& user_prompt) {
  std::array<std::string, 4> options;
  std::array<std::size_t, 5> starts{};
  std::size_t from = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string marker = fmt::format("\n\n{}. ", quiz::kLetters[i]);
    const auto at = user_prompt.find(marker, from);
    if (at == std::string::npos) throw provider::ProviderError("quiz prompt lacks option " + marker.substr(2, 1), 400);
    starts[i] = at;
    from = at + marker.size();
  }
  starts[4] = user_prompt.find("\n\nAnswer:", from);
  if (starts[4] == std::string::npos) throw provider::ProviderError("quiz prompt lacks 'Answer:'", 400);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t begin = starts[i] + 5;  // "\n\nX. "
    options[i] = user_prompt.substr(begin, starts[i + 1] - begin);
  }
  return options;
}

SimulatedTargetModel::SimulatedTargetModel(SyntheticConfig cfg, corpus::ModelSpec model,
                                           std::shared_ptr<const ParagraphIndex> index)
    : cfg_(cfg), model_(std::move(model)), index_(std::move(index)) {
  validate(cfg_);
}

provider::HttpResult SimulatedTargetModel::post(const json& wire_request) {
  const std::string user = user_message(wire_request);
  const auto options = parse_quiz_options(user);
  Rng rng = Rng::stream(cfg_.seed, fnv1a64(model_.model_name + "\n" + user));

  char answer = quiz::kLetters[rng.below(4)];
  for (std::size_t i = 0; i < 4; ++i) {
    const auto* entry = index_->find(options[i]);
    if (entry == nullptr) continue;
    const auto membership = corpus::label_membership(entry->publication_date, model_);
    answer = synth_model_answer(quiz::kLetters[i], correct_probability(cfg_, membership, entry->access), rng);
    break;
  }
  std::vector<std::pair<std::string, double>> top;
  top.emplace_back(std::string(1, answer), -0.05);
  for (char letter : quiz::kLetters) {
    if (letter != answer) top.emplace_back(std::string(1, letter), -3.5);
  }
  return provider::HttpResult{200, provider::openai_style_body(std::string(1, answer), top), std::nullopt};
}

std::string synthetic_paraphrase(const std::string& text, int variant) {
  const auto words = split_words(text);
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::string_view word = words[i];
    std::size_t core = word.size();
    while (core > 0 && std::ispunct(static_cast<unsigned char>(word[core - 1]))) --core;
    const std::string_view suffix = word.substr(core);
    word = word.substr(0, core);
    const std::uint64_t h = fnv1a64(fmt::format("{}|{}|{}", variant, i, word));
    // Word `variant - 1` is always replaced, so the three rewrites differ
    // from the original and, through the hash, from each other.
    const bool forced = i == static_cast<std::size_t>(variant - 1) % std::max<std::size_t>(words.size(), 1);
    std::string replacement(word);
    if (forced || h % 4 == 0) {
      std::size_t pick = (h >> 8) % std::size(kVocabulary);
      std::string lowered(word);
      for (auto& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (kVocabulary[pick] == lowered) pick = (pick + 1) % std::size(kVocabulary);
      replacement = std::isupper(static_cast<unsigned char>(word.empty() ? 'a' : word[0]))
                        ? capitalized(kVocabulary[pick])
                        : std::string(kVocabulary[pick]);
    }
    if (i > 0) out += ' ';
    out += replacement;
    out += suffix;
  }
  return out;
}

provider::HttpResult SimulatedParaphraser::post(const json& wire_request) {
  const std::string user = user_message(wire_request);
  const auto at = user.rfind("Example A: ");
  if (at == std::string::npos) throw provider::ProviderError("paraphrase prompt lacks 'Example A:'", 400);
  const std::string original(trim(std::string_view(user).substr(at + 11)));
  paraphrase::ParaphraseSet set;
  set.original = original;
  for (int v = 1; v <= 3; ++v) set.paraphrases[static_cast<std::size_t>(v - 1)] = synthetic_paraphrase(original, v);
  return provider::HttpResult{200, provider::openai_style_body(paraphrase::render_paraphrase_response(set)),
                              std::nullopt};
}

std::shared_ptr<provider::Transport> make_mock_transport(const provider::ProviderConfig& cfg,
                                                         const corpus::ModelSpec& model,
                                                         std::shared_ptr<const ParagraphIndex> index) {
  const std::string backend = cfg.mock.is_object() ? cfg.mock.value("backend", "") : "";
  if (backend == "simulated-target") {
    return std::make_shared<SimulatedTargetModel>(synthetic_config_from_json(cfg.mock), model, std::move(index));
  }
  if (backend == "simulated-paraphraser") return std::make_shared<SimulatedParaphraser>();
  throw provider::FatalProviderError(
      fmt::format("mock provider for '{}' names unknown backend '{}'", cfg.model_name, backend));
}

}  // namespace decop::sim
