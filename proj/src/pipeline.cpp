#include "decop/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "decop/paraphrase.hpp"
#include "decop/quiz.hpp"
#include "decop/scoring.hpp"
#include "decop/simulator.hpp"
#include "decop/stats.hpp"

namespace decop::pipeline {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Streams records to a temporary file that replaces the target on commit,
// so an interrupted stage never leaves a truncated output behind.
class JsonlWriter {
 public:
  explicit JsonlWriter(fs::path path) : path_(std::move(path)), tmp_(path_.string() + ".tmp") {
    fs::create_directories(path_.parent_path());
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot write " + tmp_.string());
  }

  void write(const json& record) { out_ << record.dump() << '\n'; }

  void commit() {
    out_.close();
    if (!out_) throw IoError("failed writing " + tmp_.string());
    fs::rename(tmp_, path_);
  }

 private:
  fs::path path_;
  fs::path tmp_;
  std::ofstream out_;
};

template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const json::parse_error& e) {
      throw IoError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
}

// Builds the real transport on first use, so a fully cached stage never
// needs credentials.
class LazyTransport : public provider::Transport {
 public:
  explicit LazyTransport(std::function<std::shared_ptr<provider::Transport>()> make) : make_(std::move(make)) {}

  provider::HttpResult post(const json& wire_request) override {
    std::call_once(once_, [this] { inner_ = make_(); });
    return inner_->post(wire_request);
  }

 private:
  std::function<std::shared_ptr<provider::Transport>()> make_;
  std::once_flag once_;
  std::shared_ptr<provider::Transport> inner_;
};

json document_meta(const corpus::Document& d) {
  return {{"doc_id", d.doc_id},
          {"title", d.title},
          {"author", d.author},
          {"publication_date", format_date(d.publication_date)},
          {"exclude_from_scoring", d.exclude_from_scoring},
          {"chapters", d.chapters.size()}};
}

corpus::Document document_from_meta(const json& j) {
  corpus::Document d;
  d.doc_id = j.at("doc_id").get<std::string>();
  d.title = j.at("title").get<std::string>();
  d.author = j.at("author").get<std::string>();
  d.publication_date = parse_date(j.at("publication_date").get<std::string>());
  d.exclude_from_scoring = j.value("exclude_from_scoring", false);
  return d;
}

struct Layout {
  fs::path root;

  fs::path documents() const { return root / "corpus" / "documents.jsonl"; }
  fs::path paragraphs() const { return root / "corpus" / "paragraphs.jsonl"; }
  fs::path paraphrase_cache() const { return root / "paraphrase" / "cache.jsonl"; }
  fs::path paraphrase_responses() const { return root / "paraphrase" / "responses.jsonl"; }
  fs::path sets() const { return root / "paraphrase" / "sets.jsonl"; }
  fs::path dropped() const { return root / "paraphrase" / "dropped.jsonl"; }
  fs::path quizzes() const { return root / "quiz" / "quizzes.jsonl"; }
  fs::path query_dir(const std::string& model) const { return root / "query" / model_dir_name(model); }
  fs::path responses(const std::string& model) const { return query_dir(model) / "responses.jsonl"; }
  fs::path results(const std::string& model) const { return query_dir(model) / "results.jsonl"; }
  fs::path failures(const std::string& model) const { return query_dir(model) / "failures.jsonl"; }
  fs::path scores(const std::string& model) const { return root / "score" / model_dir_name(model) / "scores.jsonl"; }
  fs::path analyze_dir() const { return root / "analyze"; }
  fs::path report_dir() const { return root / "report"; }
};

std::vector<fs::path> analyze_outputs(const Layout& l) {
  const auto d = l.analyze_dir();
  return {d / "auroc.jsonl", d / "guess_rates.jsonl", d / "book_scores.jsonl", d / "sample_sizes.jsonl",
          d / "trigrams.jsonl"};
}

class Runner {
 public:
  Runner(const RunConfig& cfg, const RunHooks& hooks) : cfg_(cfg), hooks_(hooks), layout_{cfg.output_dir} {
    fs::create_directories(cfg_.output_dir);
    if (fs::exists(manifest_path(cfg_))) {
      try {
        manifest_ = run_manifest_from_json(json::parse(read_text_file(manifest_path(cfg_))));
      } catch (const std::exception& e) {
        spdlog::warn("ignoring unreadable run manifest: {}", e.what());
      }
    }
    manifest_.config = to_json(cfg_);
    manifest_.version = std::string(kVersion);
  }

  void execute(Stage stage) {
    std::map<std::string, std::string> inputs;
    try {
      inputs = stage_inputs(stage);
      if (up_to_date(stage, inputs)) {
        spdlog::info("stage {}: up to date", to_string(stage));
        auto& rec = manifest_.stages[stage];
        rec.cache_hit = true;
        rec.completed_at = utc_now();
        save_manifest();
        return;
      }
      spdlog::info("stage {}: running", to_string(stage));
      const auto outputs = run_stage(stage);
      StageRecord rec;
      rec.inputs = std::move(inputs);
      for (const auto& p : outputs) rec.outputs[relative(p)] = sha256_file_hex(p);
      rec.completed_at = utc_now();
      manifest_.stages[stage] = std::move(rec);
      save_manifest();
    } catch (const StageInputMissing&) {
      throw;
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

  const RunManifest& manifest() const { return manifest_; }

 private:
  std::string relative(const fs::path& p) const { return fs::relative(p, cfg_.output_dir).generic_string(); }

  void save_manifest() { write_text_file(manifest_path(cfg_), to_json(manifest_).dump(2) + "\n"); }

  std::string require(Stage stage, const fs::path& p, Stage producer) const {
    if (!fs::exists(p)) {
      throw StageInputMissing(fmt::format("stage '{}' needs {} (produced by the '{}' stage)", to_string(stage),
                                          p.string(), to_string(producer)));
    }
    return sha256_file_hex(p);
  }

  std::map<std::string, std::string> stage_inputs(Stage stage) const {
    std::map<std::string, std::string> in;
    const auto& L = layout_;
    switch (stage) {
      case Stage::Ingest: {
        if (!fs::exists(cfg_.corpus_manifest)) {
          throw StageInputMissing(fmt::format("corpus manifest {} does not exist", cfg_.corpus_manifest.string()));
        }
        in["manifest"] = sha256_file_hex(cfg_.corpus_manifest);
        std::string chapters;
        const auto base = cfg_.corpus_manifest.parent_path();
        for (const auto& record : read_jsonl(cfg_.corpus_manifest)) {
          for (const auto& ch : corpus::parse_manifest_entry(record).chapters) {
            const auto p = base / ch;
            chapters += ch + "=" + (fs::exists(p) ? sha256_file_hex(p) : std::string("missing")) + "\n";
          }
        }
        in["chapters"] = sha256_hex(chapters);
        break;
      }
      case Stage::Paraphrase:
        in["paragraphs"] = require(stage, L.paragraphs(), Stage::Ingest);
        in["params"] = sha256_hex(json{{"provider", provider::to_json(cfg_.paraphrase_provider)},
                                       {"retries", cfg_.paraphrase_retries}}
                                      .dump());
        break;
      case Stage::Quiz:
        in["sets"] = require(stage, L.sets(), Stage::Paraphrase);
        break;
      case Stage::Query: {
        in["quizzes"] = require(stage, L.quizzes(), Stage::Quiz);
        in["sets"] = require(stage, L.sets(), Stage::Paraphrase);
        in["documents"] = require(stage, L.documents(), Stage::Ingest);
        json models = json::array();
        for (const auto& m : cfg_.models) models.push_back(provider::to_json(m.provider));
        in["params"] = sha256_hex(models.dump());
        break;
      }
      case Stage::Score: {
        in["paragraphs"] = require(stage, L.paragraphs(), Stage::Ingest);
        in["documents"] = require(stage, L.documents(), Stage::Ingest);
        in["sets"] = require(stage, L.sets(), Stage::Paraphrase);
        json params = json::array();
        for (const auto& m : cfg_.models) {
          in["results:" + m.spec.model_name] = require(stage, L.results(m.spec.model_name), Stage::Query);
          params.push_back({m.spec.model_name, format_date(m.spec.cutoff_date)});
        }
        params.push_back(cfg_.low_coverage_threshold);
        in["params"] = sha256_hex(params.dump());
        break;
      }
      case Stage::Analyze: {
        in["paragraphs"] = require(stage, L.paragraphs(), Stage::Ingest);
        for (const auto& m : cfg_.models) {
          in["scores:" + m.spec.model_name] = require(stage, L.scores(m.spec.model_name), Stage::Score);
        }
        in["params"] = sha256_hex(
            json{cfg_.seed, cfg_.balanced_subsets, cfg_.bootstrap_count, std::string(kVersion)}.dump());
        break;
      }
      case Stage::Report:
        for (const auto& p : analyze_outputs(L)) in[p.filename().string()] = require(stage, p, Stage::Analyze);
        break;
    }
    return in;
  }

  bool up_to_date(Stage stage, const std::map<std::string, std::string>& inputs) const {
    auto it = manifest_.stages.find(stage);
    if (it == manifest_.stages.end() || it->second.inputs != inputs || it->second.outputs.empty()) return false;
    for (const auto& [rel, hash] : it->second.outputs) {
      const auto p = cfg_.output_dir / rel;
      if (!fs::exists(p) || sha256_file_hex(p) != hash) return false;
    }
    return true;
  }

  std::vector<fs::path> run_stage(Stage stage) {
    switch (stage) {
      case Stage::Ingest:
        return ingest();
      case Stage::Paraphrase:
        return paraphrase();
      case Stage::Quiz:
        return make_quizzes();
      case Stage::Query:
        return query();
      case Stage::Score:
        return score();
      case Stage::Analyze:
        return analyze();
      case Stage::Report:
        return emit_report(layout_.analyze_dir(), layout_.report_dir());
    }
    return {};
  }

  // ---- shared loaders ----------------------------------------------------

  const std::vector<corpus::Document>& documents() {
    if (!documents_) {
      documents_.emplace();
      for_each_jsonl(layout_.documents(), [&](const json& j) { documents_->push_back(document_from_meta(j)); });
    }
    return *documents_;
  }

  const std::vector<corpus::Paragraph>& paragraphs() {
    if (!paragraphs_) paragraphs_ = corpus::read_paragraph_store(layout_.paragraphs());
    return *paragraphs_;
  }

  std::shared_ptr<const sim::ParagraphIndex> paragraph_index() {
    std::lock_guard lock(index_mutex_);
    if (!index_) index_ = std::make_shared<sim::ParagraphIndex>(documents(), paragraphs());
    return index_;
  }

  std::shared_ptr<provider::Transport> transport_for(const provider::ProviderConfig& pc, const corpus::ModelSpec& spec) {
    std::shared_ptr<provider::Transport> t;
    if (pc.kind == corpus::ProviderKind::Mock) {
      t = sim::make_mock_transport(pc, spec, paragraph_index());
    } else {
      t = std::make_shared<LazyTransport>([pc] { return provider::make_http_transport(pc); });
    }
    if (hooks_.wrap_transport) t = hooks_.wrap_transport(pc, t);
    return t;
  }

  // paragraph_id -> full option set (original text from the paragraph store).
  std::unordered_map<std::string, paraphrase::ParaphraseSet> load_sets() {
    std::unordered_map<std::string, const corpus::Paragraph*> by_id;
    for (const auto& p : paragraphs()) by_id[p.paragraph_id] = &p;
    std::unordered_map<std::string, paraphrase::ParaphraseSet> sets;
    for_each_jsonl(layout_.sets(), [&](const json& j) {
      paraphrase::ParaphraseSet s;
      s.paragraph_id = j.at("paragraph_id").get<std::string>();
      auto it = by_id.find(s.paragraph_id);
      if (it == by_id.end()) throw Error("paraphrase set for unknown paragraph '" + s.paragraph_id + "'");
      s.original = it->second->text;
      for (std::size_t i = 0; i < 3; ++i) s.paraphrases[i] = j.at("paraphrases").at(i).get<std::string>();
      sets.emplace(s.paragraph_id, std::move(s));
    });
    return sets;
  }

  // ---- stages --------------------------------------------------------------

  std::vector<fs::path> ingest() {
    const auto docs = corpus::load_corpus(cfg_.corpus_manifest);
    std::set<std::string> seen;
    JsonlWriter doc_out(layout_.documents());
    JsonlWriter par_out(layout_.paragraphs());
    std::size_t n_paragraphs = 0;
    for (const auto& d : docs) {
      if (!seen.insert(d.doc_id).second) throw corpus::InvalidManifest("duplicate document id '" + d.doc_id + "'");
      doc_out.write(document_meta(d));
      for (const auto& p : corpus::chunk_paragraphs(d)) {
        par_out.write(corpus::to_json(p));
        ++n_paragraphs;
      }
    }
    doc_out.commit();
    par_out.commit();
    documents_.reset();
    paragraphs_.reset();
    index_.reset();
    spdlog::info("ingested {} documents, {} paragraphs", docs.size(), n_paragraphs);
    return {layout_.documents(), layout_.paragraphs()};
  }

  std::vector<fs::path> paraphrase() {
    const auto& pars = paragraphs();
    const auto& pc = cfg_.paraphrase_provider;
    paraphrase::ParaphraseCache cache(layout_.paraphrase_cache());
    provider::ChatClient client(pc,
                                transport_for(pc, corpus::ModelSpec::make(pc.model_name, Date{}, pc.kind)),
                                std::make_shared<provider::ResponseCache>(layout_.paraphrase_responses()));
    paraphrase::GenerationOptions options;
    options.max_retries = cfg_.paraphrase_retries;

    std::vector<paraphrase::CacheEntry> entries(pars.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
      while (!abort) {
        const std::size_t i = next++;
        if (i >= pars.size()) return;
        try {
          entries[i] = paraphrase::generate_paraphrases(pars[i], client, cache, options);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          abort = true;
        }
      }
    };
    const int workers = std::min<int>(pc.limits.max_in_flight, static_cast<int>(std::max<std::size_t>(pars.size(), 1)));
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);

    JsonlWriter sets_out(layout_.sets());
    JsonlWriter dropped_out(layout_.dropped());
    std::size_t kept = 0;
    for (const auto& e : entries) {
      if (e.set) {
        sets_out.write({{"paragraph_id", e.paragraph_id},
                        {"paraphrases", json::array({e.set->paraphrases[0], e.set->paraphrases[1],
                                                     e.set->paraphrases[2]})}});
        ++kept;
      } else {
        dropped_out.write({{"paragraph_id", e.paragraph_id}, {"error", e.error}, {"attempts", e.attempts}});
      }
    }
    sets_out.commit();
    dropped_out.commit();
    spdlog::info("paraphrased {} of {} paragraphs ({} requests, {} cache hits)", kept, pars.size(),
                 client.network_requests(), client.cache_hits());
    return {layout_.sets(), layout_.dropped()};
  }

  std::vector<fs::path> make_quizzes() {
    JsonlWriter out(layout_.quizzes());
    std::size_t n = 0;
    for_each_jsonl(layout_.sets(), [&](const json& j) {
      const auto pid = j.at("paragraph_id").get<std::string>();
      for (int i = 0; i < quiz::kPermutationCount; ++i) {
        quiz::QuizInstance q;
        q.quiz_id = quiz::make_quiz_id(pid, i);
        q.paragraph_id = pid;
        q.permutation_index = i;
        q.answer_key = quiz::answer_key_for(i);
        out.write(quiz::to_json(q));
        ++n;
      }
    });
    out.commit();
    spdlog::info("built {} quiz instances", n);
    return {layout_.quizzes()};
  }

  std::vector<fs::path> query() {
    const auto sets = load_sets();
    std::unordered_map<std::string, const corpus::Document*> doc_by_id;
    for (const auto& d : documents()) doc_by_id[d.doc_id] = &d;
    std::unordered_map<std::string, const corpus::Document*> doc_by_paragraph;
    for (const auto& p : paragraphs()) doc_by_paragraph[p.paragraph_id] = doc_by_id.at(p.doc_id);
    const provider::DocumentLookup lookup = [&](const quiz::QuizInstance& q) -> const corpus::Document& {
      return *doc_by_paragraph.at(q.paragraph_id);
    };

    std::vector<fs::path> outputs;
    for (const auto& m : cfg_.models) {
      const auto& name = m.spec.model_name;
      provider::validate_for_quiz(m.provider);
      provider::ChatClient client(m.provider, transport_for(m.provider, m.spec),
                                  std::make_shared<provider::ResponseCache>(layout_.responses(name)));
      JsonlWriter results_out(layout_.results(name));
      JsonlWriter failures_out(layout_.failures(name));
      std::size_t n_results = 0;
      std::size_t n_failures = 0;
      std::vector<quiz::QuizInstance> batch;
      auto flush = [&] {
        if (batch.empty()) return;
        auto outcome = provider::batch_submit(batch, lookup, client);
        for (const auto& r : outcome.results) {
          if (!r) continue;
          results_out.write(quiz::to_json(*r));
          ++n_results;
        }
        for (const auto& f : outcome.failures) {
          failures_out.write({{"quiz_id", f.quiz_id},
                              {"paragraph_id", f.paragraph_id},
                              {"kind", f.kind},
                              {"message", f.message}});
          ++n_failures;
        }
        batch.clear();
      };
      for_each_jsonl(layout_.quizzes(), [&](const json& j) {
        const auto record = quiz::quiz_record_from_json(j);
        auto it = sets.find(record.paragraph_id);
        if (it == sets.end()) throw Error("quiz '" + record.quiz_id + "' refers to a paragraph without paraphrases");
        auto q = quiz::make_instance(it->second, record.permutation_index);
        if (q.quiz_id != record.quiz_id || q.answer_key != record.answer_key) {
          throw Error("quiz store does not match the paraphrase sets at '" + record.quiz_id + "'");
        }
        batch.push_back(std::move(q));
        if (batch.size() >= cfg_.query_batch) flush();
      });
      flush();
      results_out.commit();
      failures_out.commit();
      spdlog::info("{}: {} answers, {} failures ({} requests, {} cache hits)", name, n_results, n_failures,
                   client.network_requests(), client.cache_hits());
      outputs.push_back(layout_.results(name));
      outputs.push_back(layout_.failures(name));
    }
    return outputs;
  }

  std::vector<fs::path> score() {
    std::unordered_map<std::string, const corpus::Document*> doc_by_id;
    for (const auto& d : documents()) doc_by_id[d.doc_id] = &d;
    std::set<std::string> quizzed;
    for_each_jsonl(layout_.sets(), [&](const json& j) { quizzed.insert(j.at("paragraph_id").get<std::string>()); });

    std::vector<fs::path> outputs;
    for (const auto& m : cfg_.models) {
      const auto& name = m.spec.model_name;
      std::unordered_map<std::string, std::vector<quiz::QuizResult>> by_paragraph;
      for_each_jsonl(layout_.results(name), [&](const json& j) {
        auto r = quiz::result_from_json(j);
        by_paragraph[r.paragraph_id].push_back(std::move(r));
      });
      JsonlWriter out(layout_.scores(name));
      for (const auto& p : paragraphs()) {
        const auto* doc = doc_by_id.at(p.doc_id);
        if (doc->exclude_from_scoring || !quizzed.count(p.paragraph_id)) continue;
        scoring::ScoredParagraph s;
        s.doc_id = p.doc_id;
        s.access = p.access;
        s.membership = corpus::label_membership(*doc, m.spec);
        const auto it = by_paragraph.find(p.paragraph_id);
        if (it == by_paragraph.end() || it->second.empty()) {
          s.rate.paragraph_id = p.paragraph_id;
        } else {
          s.rate = scoring::guess_rate(p.paragraph_id, it->second);
        }
        s.low_coverage = s.rate.n_quizzes < cfg_.low_coverage_threshold;
        out.write(scoring::to_json(s));
      }
      out.commit();
      outputs.push_back(layout_.scores(name));
    }
    return outputs;
  }

  std::vector<fs::path> analyze() {
    const auto files = analyze_outputs(layout_);
    JsonlWriter auroc_out(files[0]);
    JsonlWriter rates_out(files[1]);
    JsonlWriter books_out(files[2]);
    JsonlWriter sizes_out(files[3]);
    JsonlWriter trigram_out(files[4]);

    std::unordered_map<std::string, std::size_t> words;
    for (const auto& p : paragraphs()) words[p.paragraph_id] = p.word_count;

    stats::GridOptions grid;
    grid.balanced_subsets = cfg_.balanced_subsets;
    grid.bootstrap.n_boot = cfg_.bootstrap_count;
    grid.bootstrap.seed = cfg_.seed;

    for (const auto& m : cfg_.models) {
      const auto& name = m.spec.model_name;
      std::vector<scoring::ScoredParagraph> scored;
      for_each_jsonl(layout_.scores(name), [&](const json& j) { scored.push_back(scoring::scored_from_json(j)); });

      for (AccessSplit split : kAllSplits) {
        for (const auto& r : stats::auroc_grid(name, scored, split, grid)) auroc_out.write(stats::to_json(r));

        json rates = {{"model", name}, {"split", to_string(split)}};
        for (auto label : {MembershipLabel::PotentialMember, MembershipLabel::NonMember}) {
          long long quizzes = 0;
          for (const auto& s : scored) {
            if (scoring::eligible(s) && in_split(s.access, split) && s.membership == label) quizzes += s.rate.n_quizzes;
          }
          const std::string key(to_string(label));
          rates[key + "_quizzes"] = quizzes;
          try {
            rates[key + "_rate"] = scoring::pooled_rate(scored, label, split);
          } catch (const scoring::EmptySelection&) {
            rates[key + "_rate"] = nullptr;
          }
        }
        rates_out.write(rates);

        for (const auto& b : scoring::book_scores(scored, split)) {
          books_out.write({{"model", name},
                           {"split", to_string(split)},
                           {"doc_id", b.doc_id},
                           {"membership", to_string(b.membership)},
                           {"n_paragraphs", b.n_paragraphs},
                           {"mean_rate", b.mean_rate}});
        }

        for (auto label : {MembershipLabel::PotentialMember, MembershipLabel::NonMember}) {
          std::set<std::string> books;
          std::size_t n = 0;
          std::size_t total_words = 0;
          for (const auto& s : scored) {
            if (!scoring::eligible(s) || !in_split(s.access, split) || s.membership != label) continue;
            books.insert(s.doc_id);
            ++n;
            total_words += words.at(s.rate.paragraph_id);
          }
          json row = {{"model", name},
                      {"split", to_string(split)},
                      {"membership", to_string(label)},
                      {"books", books.size()},
                      {"paragraphs", n}};
          row["mean_words"] = n == 0 ? json(nullptr) : json(static_cast<double>(total_words) / static_cast<double>(n));
          sizes_out.write(row);
        }
      }
    }

    for (auto label : {AccessLabel::Public, AccessLabel::NonPublic}) {
      const auto ranked = corpus::trigram_stats(paragraphs(), label);
      for (std::size_t i = 0; i < ranked.size() && i < 20; ++i) {
        trigram_out.write(
            {{"split", to_string(label)}, {"rank", i + 1}, {"phrase", ranked[i].first}, {"count", ranked[i].second}});
      }
    }

    auroc_out.commit();
    rates_out.commit();
    books_out.commit();
    sizes_out.commit();
    trigram_out.commit();
    return files;
  }

  RunConfig cfg_;
  RunHooks hooks_;
  Layout layout_;
  RunManifest manifest_;
  std::optional<std::vector<corpus::Document>> documents_;
  std::optional<std::vector<corpus::Paragraph>> paragraphs_;
  std::mutex index_mutex_;
  std::shared_ptr<const sim::ParagraphIndex> index_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Ingest:
      return "ingest";
    case Stage::Paraphrase:
      return "paraphrase";
    case Stage::Quiz:
      return "quiz";
    case Stage::Query:
      return "query";
    case Stage::Score:
      return "score";
    case Stage::Analyze:
      return "analyze";
    case Stage::Report:
      return "report";
  }
  return "ingest";
}

Stage parse_stage(std::string_view text) {
  for (Stage s : kAllStages) {
    if (to_string(s) == text) return s;
  }
  throw InvalidRunConfig(fmt::format("unknown stage '{}'", text));
}

StageError::StageError(Stage stage, const std::string& what)
    : Error(fmt::format("stage '{}' failed: {}", to_string(stage), what)), stage_(stage) {}

std::string model_dir_name(std::string_view model_name) {
  std::string out;
  for (char c : model_name) {
    const auto u = static_cast<unsigned char>(c);
    out.push_back(std::isalnum(u) || c == '-' || c == '_' || c == '.' ? c : '_');
  }
  return out.empty() ? "_" : out;
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  RunConfig cfg;
  try {
    cfg.corpus_manifest = resolve(base_dir, j.at("corpus_manifest").get<std::string>());
    cfg.output_dir = resolve(base_dir, j.value("output_dir", "out"));
    cfg.seed = j.value("seed", cfg.seed);
    cfg.low_coverage_threshold = j.value("low_coverage_threshold", cfg.low_coverage_threshold);
    cfg.balanced_subsets = j.value("balanced_subsets", cfg.balanced_subsets);
    cfg.bootstrap_count = j.value("bootstrap_count", cfg.bootstrap_count);
    cfg.paraphrase_retries = j.value("paraphrase_retries", cfg.paraphrase_retries);
    cfg.query_batch = j.value("query_batch", cfg.query_batch);

    const json providers = j.value("providers", json::object());
    auto provider_json = [&](const json& ref, const std::string& fallback_model) {
      json p = ref.is_string() ? providers.at(ref.get<std::string>()) : ref;
      if (!p.contains("model")) p["model"] = fallback_model;
      return p;
    };
    cfg.paraphrase_provider =
        provider::provider_config_from_json(provider_json(j.at("paraphrase_provider"), "paraphraser"), true);
    for (const auto& m : j.at("models")) {
      ModelEntry e;
      const auto name = m.at("name").get<std::string>();
      e.provider = provider::provider_config_from_json(provider_json(m.at("provider"), name));
      e.spec = corpus::ModelSpec::make(name, parse_date(m.at("cutoff_date").get<std::string>()), e.provider.kind);
      cfg.models.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw InvalidRunConfig(fmt::format("malformed run config: {}", e.what()));
  }
  if (cfg.query_batch == 0) throw InvalidRunConfig("query_batch must be >= 1");
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw InvalidRunConfig("run config " + path.string() + " does not exist");
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw InvalidRunConfig(fmt::format("{}: {}", path.string(), e.what()));
  }
  return run_config_from_json(j, path.parent_path());
}

json to_json(const RunConfig& cfg) {
  json models = json::array();
  for (const auto& m : cfg.models) {
    models.push_back({{"name", m.spec.model_name},
                      {"cutoff_date", format_date(m.spec.cutoff_date)},
                      {"provider", provider::to_json(m.provider)}});
  }
  return {{"corpus_manifest", cfg.corpus_manifest.string()},
          {"paraphrase_provider", provider::to_json(cfg.paraphrase_provider)},
          {"models", models},
          {"output_dir", cfg.output_dir.string()},
          {"seed", cfg.seed},
          {"low_coverage_threshold", cfg.low_coverage_threshold},
          {"balanced_subsets", cfg.balanced_subsets},
          {"bootstrap_count", cfg.bootstrap_count},
          {"paraphrase_retries", cfg.paraphrase_retries},
          {"query_batch", cfg.query_batch}};
}

void validate(const RunConfig& cfg) {
  if (!fs::exists(cfg.corpus_manifest)) {
    throw InvalidRunConfig("corpus manifest " + cfg.corpus_manifest.string() + " does not exist");
  }
  if (cfg.output_dir.empty()) throw InvalidRunConfig("output_dir is empty");
  if (cfg.models.empty()) throw InvalidRunConfig("no models configured");
  if (cfg.low_coverage_threshold < 0 || cfg.low_coverage_threshold > quiz::kPermutationCount) {
    throw InvalidRunConfig("low_coverage_threshold must lie in [0, 24]");
  }
  if (cfg.balanced_subsets < 1 || cfg.bootstrap_count < 1) {
    throw InvalidRunConfig("balanced_subsets and bootstrap_count must be >= 1");
  }
  std::set<std::string> names;
  auto check_provider = [](const provider::ProviderConfig& p, const std::string& who) {
    if (p.kind == corpus::ProviderKind::Mock) {
      if (!p.mock.is_object() || p.mock.value("backend", "").empty()) {
        throw InvalidRunConfig(who + ": mock provider needs mock.backend");
      }
    } else if (p.api_key_env.empty()) {
      throw InvalidRunConfig(who + ": api_key_env is empty");
    }
  };
  check_provider(cfg.paraphrase_provider, "paraphrase_provider");
  std::set<std::string> dirs;
  for (const auto& m : cfg.models) {
    if (!names.insert(m.spec.model_name).second) throw InvalidRunConfig("duplicate model '" + m.spec.model_name + "'");
    if (!dirs.insert(model_dir_name(m.spec.model_name)).second) {
      throw InvalidRunConfig("model names collide after sanitizing: '" + m.spec.model_name + "'");
    }
    check_provider(m.provider, "model '" + m.spec.model_name + "'");
  }
}

json to_json(const RunManifest& m) {
  json stages = json::object();
  for (const auto& [stage, rec] : m.stages) {
    stages[std::string(to_string(stage))] = {{"completed_at", rec.completed_at},
                                             {"inputs", rec.inputs},
                                             {"outputs", rec.outputs},
                                             {"cache_hit", rec.cache_hit}};
  }
  return {{"version", m.version}, {"config", m.config}, {"stages", stages}};
}

RunManifest run_manifest_from_json(const json& j) {
  RunManifest m;
  m.version = j.value("version", "");
  m.config = j.value("config", json::object());
  const json stages = j.value("stages", json::object());
  for (const auto& [name, rec] : stages.items()) {
    StageRecord r;
    r.completed_at = rec.value("completed_at", "");
    r.inputs = rec.value("inputs", std::map<std::string, std::string>{});
    r.outputs = rec.value("outputs", std::map<std::string, std::string>{});
    r.cache_hit = rec.value("cache_hit", false);
    m.stages[parse_stage(name)] = std::move(r);
  }
  return m;
}

json synthetic_run_config(const sim::SyntheticConfig& cfg, const std::string& corpus_manifest,
                          const std::string& output_dir) {
  json target = sim::to_json(cfg);
  target["backend"] = "simulated-target";
  return {{"corpus_manifest", corpus_manifest},
          {"output_dir", output_dir},
          {"seed", cfg.seed},
          {"paraphrase_provider",
           {{"kind", "mock"}, {"model", "synthetic-paraphraser"}, {"mock", {{"backend", "simulated-paraphraser"}}}}},
          {"models",
           json::array({{{"name", sim::kSyntheticModelName},
                         {"cutoff_date", format_date(sim::kSyntheticCutoff)},
                         {"provider", {{"kind", "mock"}, {"mock", target}}}}})}};
}

fs::path manifest_path(const RunConfig& cfg) { return cfg.output_dir / "run_manifest.json"; }

RunManifest run(const RunConfig& cfg, std::span<const Stage> stages, const RunHooks& hooks) {
  validate(cfg);
  std::set<Stage> selected(stages.begin(), stages.end());
  Runner runner(cfg, hooks);
  for (Stage s : kAllStages) {
    if (selected.count(s)) runner.execute(s);
  }
  return runner.manifest();
}

}  // namespace decop::pipeline
