#include "decop/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>

namespace decop::stats {

namespace {

std::vector<double> sorted_copy(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  std::sort(out.begin(), out.end());
  return out;
}

// Runs fn(r) for r in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(int n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max(n, 1)));
  if (threads <= 1) {
    for (int r = 0; r < n; ++r) fn(r);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      try {
        for (int r = next++; r < n; r = next++) fn(r);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

BootstrapInterval summarize(std::vector<double> values, double level, int redraws) {
  std::sort(values.begin(), values.end());
  const double alpha = 1.0 - level;
  BootstrapInterval ci;
  ci.low = percentile(values, alpha / 2.0);
  ci.high = percentile(values, 1.0 - alpha / 2.0);
  ci.replicates = static_cast<int>(values.size());
  ci.redraws = redraws;
  return ci;
}

AurocCount plain_auroc(std::span<const double> pos, std::span<const double> neg) { return auroc_count(pos, neg); }

}  // namespace

AurocCount auroc_count(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw DegenerateClasses();
  const auto p = sorted_copy(pos);
  const auto n = sorted_copy(neg);
  AurocCount c;
  c.pairs = static_cast<std::uint64_t>(p.size()) * n.size();
  std::size_t below = 0;     // negatives strictly below the current positive
  std::size_t not_above = 0;  // negatives <= the current positive
  for (double x : p) {
    while (below < n.size() && n[below] < x) ++below;
    if (not_above < below) not_above = below;
    while (not_above < n.size() && n[not_above] <= x) ++not_above;
    c.twice_u += 2 * static_cast<std::uint64_t>(below) + (not_above - below);
  }
  return c;
}

Threshold optimal_threshold(std::span<const double> pos, std::span<const double> neg, ThresholdCriterion criterion) {
  if (pos.empty() || neg.empty()) throw DegenerateClasses();
  const auto p = sorted_copy(pos);
  const auto n = sorted_copy(neg);
  std::vector<double> distinct;
  distinct.reserve(p.size() + n.size());
  std::merge(p.begin(), p.end(), n.begin(), n.end(), std::back_inserter(distinct));
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> candidates;
  candidates.reserve(distinct.size() + 1);
  candidates.push_back(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
    candidates.push_back(distinct[i] + (distinct[i + 1] - distinct[i]) / 2.0);
  }
  candidates.push_back(std::numeric_limits<double>::infinity());

  const auto np = static_cast<long long>(p.size());
  const auto nn = static_cast<long long>(n.size());
  Threshold best;
  long long best_score = std::numeric_limits<long long>::min();
  for (double t : candidates) {
    const auto tp = static_cast<long long>(p.end() - std::upper_bound(p.begin(), p.end(), t));
    const auto fp = static_cast<long long>(n.end() - std::upper_bound(n.begin(), n.end(), t));
    // Youden's J scaled by np * nn keeps comparisons exact.
    const long long score = criterion == ThresholdCriterion::Youden ? tp * nn - fp * np : tp + (nn - fp);
    if (score > best_score) {
      best_score = score;
      best.value = t;
      best.youden_j = static_cast<double>(tp) / np - static_cast<double>(fp) / nn;
    }
  }
  return best;
}

AurocCount papers_method_count(std::span<const double> pos, std::span<const double> neg,
                               ThresholdCriterion criterion) {
  const double t = optimal_threshold(pos, neg, criterion).value;
  auto binarize = [t](std::span<const double> xs) {
    std::vector<double> out;
    out.reserve(xs.size());
    for (double x : xs) out.push_back(x > t ? 1.0 : 0.0);
    return out;
  };
  const auto bp = binarize(pos);
  const auto bn = binarize(neg);
  return auroc_count(bp, bn);
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t take, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  take = std::min(take, n);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  return idx;
}

double balanced_auroc(std::span<const double> pos, std::span<const double> neg, const BaseMethod& base,
                      int n_subsets, std::uint64_t seed) {
  if (pos.empty() || neg.empty()) throw DegenerateClasses();
  if (n_subsets < 1) throw Error("balanced_auroc needs at least one subset");
  const bool pos_major = pos.size() > neg.size();
  const auto major = pos_major ? pos : neg;
  const auto minor = pos_major ? neg : pos;

  std::uint64_t twice_u_sum = 0;
  std::uint64_t pairs = 0;
  std::vector<double> subset;
  for (int s = 0; s < n_subsets; ++s) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(s));
    const auto pick = sample_without_replacement(major.size(), minor.size(), rng);
    subset.clear();
    for (auto i : pick) subset.push_back(major[i]);
    const AurocCount c = pos_major ? base(subset, minor) : base(minor, subset);
    twice_u_sum += c.twice_u;
    pairs = c.pairs;  // identical for every subset
  }
  return static_cast<double>(twice_u_sum) / static_cast<double>(2 * pairs * static_cast<std::uint64_t>(n_subsets));
}

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("percentile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

BootstrapInterval hierarchical_bootstrap_ci(std::span<const BookGroup> books, const BootstrapOptions& options) {
  std::vector<const BookGroup*> pos_books;
  std::vector<const BookGroup*> neg_books;
  for (const auto& b : books) {
    if (b.scores.empty()) continue;
    (b.positive ? pos_books : neg_books).push_back(&b);
  }
  if (pos_books.size() < 2 || neg_books.size() < 2) {
    throw DegenerateClasses(fmt::format("hierarchical bootstrap needs >= 2 books per class (have {} / {})",
                                        pos_books.size(), neg_books.size()));
  }
  const long long max_attempts = 10LL * options.n_boot;
  std::atomic<long long> attempts{0};
  std::atomic<int> redraws{0};
  std::vector<double> values(static_cast<std::size_t>(options.n_boot));

  parallel_for(options.n_boot, options.threads, [&](int r) {
    Rng rng = Rng::stream(options.seed, static_cast<std::uint64_t>(r));
    std::vector<double> pos_means;
    std::vector<double> neg_means;
    auto draw = [&rng](const std::vector<const BookGroup*>& pool, std::vector<double>& means) {
      means.clear();
      for (std::size_t k = 0; k < pool.size(); ++k) {
        const auto& scores = pool[rng.below(pool.size())]->scores;
        double sum = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) sum += scores[rng.below(scores.size())];
        means.push_back(sum / static_cast<double>(scores.size()));
      }
    };
    for (;;) {
      if (++attempts > max_attempts) {
        throw ResampleExhausted(fmt::format("no usable bootstrap replicate within {} attempts", max_attempts));
      }
      draw(pos_books, pos_means);
      draw(neg_books, neg_means);
      if (!pos_means.empty() && !neg_means.empty()) break;
      ++redraws;
    }
    values[static_cast<std::size_t>(r)] = auroc(pos_means, neg_means);
  });
  return summarize(std::move(values), options.level, redraws.load());
}

BootstrapInterval flat_bootstrap_ci(std::span<const double> pos, std::span<const double> neg,
                                    const BootstrapOptions& options) {
  if (pos.empty() || neg.empty()) throw DegenerateClasses();
  std::vector<double> values(static_cast<std::size_t>(options.n_boot));
  parallel_for(options.n_boot, options.threads, [&](int r) {
    Rng rng = Rng::stream(options.seed, static_cast<std::uint64_t>(r));
    std::vector<double> bp(pos.size());
    std::vector<double> bn(neg.size());
    for (auto& x : bp) x = pos[rng.below(pos.size())];
    for (auto& x : bn) x = neg[rng.below(neg.size())];
    values[static_cast<std::size_t>(r)] = auroc(bp, bn);
  });
  return summarize(std::move(values), options.level, 0);
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::ParagraphLevel:
      return "paragraph_level";
    case Method::BookLevel:
      return "book_level";
    case Method::PapersMethodBinary:
      return "papers_method_binary";
    case Method::BalancedParagraph:
      return "balanced_paragraph_level";
    case Method::BalancedBook:
      return "balanced_book_level";
    case Method::BalancedPapersMethod:
      return "balanced_papers_method";
  }
  return "book_level";
}

Method parse_method(std::string_view text) {
  for (Method m : kAllMethods) {
    if (to_string(m) == text) return m;
  }
  throw Error(fmt::format("unknown AUROC method '{}'", text));
}

json to_json(const AurocReport& r) {
  json j = {{"model", r.model_name},
            {"method", to_string(r.method)},
            {"split", to_string(r.split)},
            {"n_pos", r.n_pos},
            {"n_neg", r.n_neg},
            {"seed", r.seed}};
  j["value"] = r.value ? json(*r.value) : json(nullptr);
  j["ci"] = r.ci ? json::array({r.ci->first, r.ci->second}) : json(nullptr);
  return j;
}

AurocReport report_from_json(const json& j) {
  AurocReport r;
  r.model_name = j.at("model").get<std::string>();
  r.method = parse_method(j.at("method").get<std::string>());
  const auto split = j.at("split").get<std::string>();
  r.split = split == "all" ? AccessSplit::All : split == "public" ? AccessSplit::Public : AccessSplit::NonPublic;
  r.n_pos = j.at("n_pos").get<std::size_t>();
  r.n_neg = j.at("n_neg").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("value").is_null()) r.value = j.at("value").get<double>();
  if (!j.at("ci").is_null()) r.ci = std::make_pair(j.at("ci").at(0).get<double>(), j.at("ci").at(1).get<double>());
  return r;
}

std::pair<std::vector<double>, std::vector<double>> paragraph_scores(
    std::span<const scoring::ScoredParagraph> paragraphs, AccessSplit split) {
  std::pair<std::vector<double>, std::vector<double>> out;
  for (const auto& p : paragraphs) {
    if (!scoring::eligible(p) || !in_split(p.access, split)) continue;
    (p.membership == MembershipLabel::PotentialMember ? out.first : out.second).push_back(p.rate.rate);
  }
  return out;
}

std::vector<BookGroup> book_groups(std::span<const scoring::ScoredParagraph> paragraphs, AccessSplit split) {
  std::map<std::string, BookGroup> by_doc;
  for (const auto& p : paragraphs) {
    if (!scoring::eligible(p) || !in_split(p.access, split)) continue;
    auto& g = by_doc[p.doc_id];
    g.doc_id = p.doc_id;
    g.positive = p.membership == MembershipLabel::PotentialMember;
    g.scores.push_back(p.rate.rate);
  }
  std::vector<BookGroup> out;
  out.reserve(by_doc.size());
  for (auto& [id, g] : by_doc) out.push_back(std::move(g));
  return out;
}

std::vector<AurocReport> auroc_grid(const std::string& model_name, std::span<const scoring::ScoredParagraph> paragraphs,
                                    AccessSplit split, const GridOptions& options) {
  const auto [pos_par, neg_par] = paragraph_scores(paragraphs, split);
  const auto books = book_groups(paragraphs, split);
  std::vector<double> pos_book;
  std::vector<double> neg_book;
  for (const auto& b : books) {
    double sum = 0.0;
    for (double s : b.scores) sum += s;
    (b.positive ? pos_book : neg_book).push_back(sum / static_cast<double>(b.scores.size()));
  }

  const BaseMethod papers = [criterion = options.criterion](std::span<const double> p, std::span<const double> n) {
    return papers_method_count(p, n, criterion);
  };
  const std::uint64_t seed = options.bootstrap.seed;

  std::vector<AurocReport> out;
  for (Method m : kAllMethods) {
    AurocReport r;
    r.model_name = model_name;
    r.method = m;
    r.split = split;
    r.seed = seed;
    const bool paragraph_units = m == Method::ParagraphLevel || m == Method::BalancedParagraph;
    const auto& pos = paragraph_units ? pos_par : pos_book;
    const auto& neg = paragraph_units ? neg_par : neg_book;
    r.n_pos = pos.size();
    r.n_neg = neg.size();
    if (!pos.empty() && !neg.empty()) {
      switch (m) {
        case Method::ParagraphLevel: {
          r.value = auroc(pos, neg);
          const auto ci = flat_bootstrap_ci(pos, neg, options.bootstrap);
          r.ci = std::make_pair(ci.low, ci.high);
          break;
        }
        case Method::BookLevel:
          r.value = auroc(pos, neg);
          if (pos.size() >= 2 && neg.size() >= 2) {
            const auto ci = hierarchical_bootstrap_ci(books, options.bootstrap);
            r.ci = std::make_pair(ci.low, ci.high);
          }
          break;
        case Method::PapersMethodBinary:
          r.value = papers(pos, neg).value();
          break;
        case Method::BalancedParagraph:
        case Method::BalancedBook:
          r.value = balanced_auroc(pos, neg, plain_auroc, options.balanced_subsets, seed);
          break;
        case Method::BalancedPapersMethod:
          r.value = balanced_auroc(pos, neg, papers, options.balanced_subsets, seed);
          break;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace decop::stats
