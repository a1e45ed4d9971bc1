#include "kgq/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace kgq {

int filtered_rank(const Eigen::VectorXd& scores, EntityId answer,
                  const std::vector<EntityId>& filter_out) {
  if (answer >= scores.size()) throw Error("filtered_rank: answer id out of range");
  if (std::find(filter_out.begin(), filter_out.end(), answer) != filter_out.end()) {
    throw Error("filtered_rank: answer must not be in the filter set");
  }
  const double gold = scores(answer);
  int rank = 1;
  for (Eigen::Index e = 0; e < scores.size(); ++e) {
    if (static_cast<EntityId>(e) == answer) continue;
    if (scores(e) < gold) continue;
    if (std::binary_search(filter_out.begin(), filter_out.end(), static_cast<EntityId>(e))) {
      continue;
    }
    ++rank;
  }
  return rank;
}

std::string AnswererConfig::describe() const {
  if (const auto* b = std::get_if<BeamConfig>(&impl)) {
    return std::string("beam(width=") + std::to_string(b->width) + ",tnorm=" +
           to_string(b->tnorm) + ")";
  }
  const auto& c = std::get<ContinuousConfig>(impl);
  return std::string("continuous(tnorm=") + to_string(c.tnorm) + ")";
}

AnswerRanking run_answerer(const EmbeddingModel& m, const DnfQuery& q,
                           const AnswererConfig& cfg) {
  if (const auto* b = std::get_if<BeamConfig>(&cfg.impl)) {
    return answer_beam(m, q, *b);
  }
  return answer_continuous(m, q, std::get<ContinuousConfig>(cfg.impl));
}

namespace {

struct QueryOutcome {
  double seconds = 0.0;
  std::vector<PerAnswerRank> ranks;
};

QueryOutcome score_query(const EmbeddingModel& m, const GeneratedQuery& gq,
                         const AnswererConfig& cfg) {
  const DnfQuery q = gq.query();
  const auto t0 = std::chrono::steady_clock::now();
  AnswerRanking ranking = run_answerer(m, q, cfg);
  const auto t1 = std::chrono::steady_clock::now();

  QueryOutcome out;
  out.seconds = std::chrono::duration<double>(t1 - t0).count();
  const std::vector<EntityId> hard = gq.hard_answers();
  for (EntityId a : gq.answers_full) {
    // Filter out every other known correct answer.
    std::vector<EntityId> filter;
    filter.reserve(gq.answers_full.size());
    for (EntityId other : gq.answers_full) {
      if (other != a) filter.push_back(other);
    }
    PerAnswerRank r;
    r.answer = a;
    r.rank = filtered_rank(ranking.scores, a, filter);
    r.hard = std::binary_search(hard.begin(), hard.end(), a);
    out.ranks.push_back(r);
  }
  return out;
}

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<std::size_t>(jobs, n);
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

void finalize_macro(MetricReport& report) {
  if (report.per_type.empty()) return;
  double h1 = 0, h3 = 0, h10 = 0, mrr = 0;
  for (const auto& [type, met] : report.per_type) {
    h1 += met.h1;
    h3 += met.h3;
    h10 += met.h10;
    mrr += met.mrr;
  }
  const double n = static_cast<double>(report.per_type.size());
  report.avg_h1 = h1 / n;
  report.avg_h3 = h3 / n;
  report.avg_h10 = h10 / n;
  report.avg_mrr = mrr / n;
}

}  // namespace

MetricReport evaluate(const EmbeddingModel& m,
                      const std::map<std::string, AnswererConfig>& configs,
                      const std::map<std::string, std::vector<GeneratedQuery>>& queries_by_type,
                      const EvalOptions& opts) {
  MetricReport report;
  for (const auto& [type, queries] : queries_by_type) {
    if (queries.empty()) {
      report.warnings.push_back("query type " + type + " has zero queries; omitted");
      continue;
    }
    auto cfg_it = configs.find(type);
    if (cfg_it == configs.end()) {
      throw Error("evaluate: no answerer config for query type " + type);
    }
    const AnswererConfig& cfg = cfg_it->second;

    std::vector<QueryOutcome> outcomes(queries.size());
    parallel_for(queries.size(), opts.jobs,
                 [&](std::size_t i) { outcomes[i] = score_query(m, queries[i], cfg); });

    TypeMetrics met;
    met.n_queries = static_cast<int>(queries.size());
    double h1 = 0, h3 = 0, h10 = 0, mrr = 0, all_h3 = 0;
    int n_hard = 0, n_all = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      met.mean_seconds += outcomes[i].seconds;
      for (const PerAnswerRank& r : outcomes[i].ranks) {
        ++n_all;
        all_h3 += r.rank <= 3;
        if (!r.hard) continue;
        ++n_hard;
        h1 += r.rank <= 1;
        h3 += r.rank <= 3;
        h10 += r.rank <= 10;
        mrr += 1.0 / r.rank;
      }
      if (opts.keep_per_query_log) {
        report.per_query.push_back({type, i, outcomes[i].seconds, outcomes[i].ranks});
      }
    }
    met.mean_seconds /= static_cast<double>(queries.size());
    met.n_answers = n_hard;
    if (n_hard > 0) {
      met.h1 = h1 / n_hard;
      met.h3 = h3 / n_hard;
      met.h10 = h10 / n_hard;
      met.mrr = mrr / n_hard;
    }
    if (n_all > 0) met.all_h3 = all_h3 / n_all;
    report.per_type[type] = met;
  }
  finalize_macro(report);
  return report;
}

MetricReport evaluate(const EmbeddingModel& m, const AnswererConfig& config,
                      const std::map<std::string, std::vector<GeneratedQuery>>& queries_by_type,
                      const EvalOptions& opts) {
  std::map<std::string, AnswererConfig> configs;
  for (const auto& [type, queries] : queries_by_type) configs[type] = config;
  return evaluate(m, configs, queries_by_type, opts);
}

MetricReport evaluate_random_baseline(
    Eigen::Index n_entities,
    const std::map<std::string, std::vector<GeneratedQuery>>& queries_by_type,
    std::uint64_t seed) {
  MetricReport report;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const auto& [type, queries] : queries_by_type) {
    if (queries.empty()) continue;
    TypeMetrics met;
    met.n_queries = static_cast<int>(queries.size());
    double h1 = 0, h3 = 0, h10 = 0, mrr = 0;
    int n_hard = 0;
    for (const GeneratedQuery& gq : queries) {
      Eigen::VectorXd scores(n_entities);
      for (Eigen::Index e = 0; e < n_entities; ++e) scores(e) = unif(rng);
      for (EntityId a : gq.hard_answers()) {
        std::vector<EntityId> filter;
        for (EntityId other : gq.answers_full) {
          if (other != a) filter.push_back(other);
        }
        const int rank = filtered_rank(scores, a, filter);
        ++n_hard;
        h1 += rank <= 1;
        h3 += rank <= 3;
        h10 += rank <= 10;
        mrr += 1.0 / rank;
      }
    }
    met.n_answers = n_hard;
    if (n_hard > 0) {
      met.h1 = h1 / n_hard;
      met.h3 = h3 / n_hard;
      met.h10 = h10 / n_hard;
      met.mrr = mrr / n_hard;
    }
    report.per_type[type] = met;
  }
  finalize_macro(report);
  return report;
}

SelectedConfig select_config(const EmbeddingModel& m,
                             const std::map<std::string, std::vector<GeneratedQuery>>& valid,
                             const SelectOptions& opts) {
  bool any = false;
  for (const auto& [type, queries] : valid) any = any || !queries.empty();
  if (!any) throw Error("select_config: empty validation set");

  // Beam cells first (ascending width, then t-norm order), continuous cells
  // last; the first cell attaining the max H@3 wins.
  std::vector<AnswererConfig> cells;
  for (int width : opts.beam_widths) {
    for (TNormKind tnorm : opts.tnorms) {
      BeamConfig b;
      b.width = width;
      b.tnorm = tnorm;
      b.keep_traces = false;
      cells.push_back({b});
    }
  }
  if (opts.include_continuous) {
    for (TNormKind tnorm : opts.tnorms) {
      ContinuousConfig c = opts.continuous_base;
      c.tnorm = tnorm;
      cells.push_back({c});
    }
  }

  SelectedConfig out;
  EvalOptions eval_opts;
  eval_opts.jobs = opts.jobs;
  eval_opts.keep_per_query_log = false;

  for (const auto& [type, queries] : valid) {
    if (queries.empty()) continue;
    std::map<std::string, std::vector<GeneratedQuery>> one{{type, queries}};
    double best = -1.0;
    std::size_t best_cell = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      MetricReport rep = evaluate(m, cells[i], one, eval_opts);
      const double h3 = rep.per_type.at(type).h3;
      out.grid[type].push_back({cells[i], h3});
      if (h3 > best) {
        best = h3;
        best_cell = i;
      }
    }
    out.per_type[type] = cells[best_cell];
  }
  return out;
}

namespace {

const std::vector<std::string>& column_order() {
  static const std::vector<std::string> cols = {"1p", "2p", "3p", "2i", "3i",
                                                "ip", "pi", "2u", "up"};
  return cols;
}

std::string fmt3(double v) {
  std::ostringstream ss;
  ss.precision(3);
  ss << std::fixed << v;
  return ss.str();
}

}  // namespace

std::string report_markdown(const MetricReport& report, const std::string& title) {
  std::ostringstream out;
  out << "# " << title << "\n\n";
  out << "H@3 over hard answers, filtered ranking with pessimistic ties.\n\n";
  out << "| Metric | Avg |";
  for (const auto& c : column_order()) out << ' ' << c << " |";
  out << "\n|---|---|";
  for (std::size_t i = 0; i < column_order().size(); ++i) out << "---|";
  out << '\n';

  auto row = [&](const std::string& name, auto getter, double avg) {
    out << "| " << name << " | " << fmt3(avg) << " |";
    for (const auto& c : column_order()) {
      auto it = report.per_type.find(c);
      out << ' ' << (it == report.per_type.end() ? std::string("-") : fmt3(getter(it->second)))
          << " |";
    }
    out << '\n';
  };
  row("H@1", [](const TypeMetrics& m) { return m.h1; }, report.avg_h1);
  row("H@3", [](const TypeMetrics& m) { return m.h3; }, report.avg_h3);
  row("H@10", [](const TypeMetrics& m) { return m.h10; }, report.avg_h10);
  row("MRR", [](const TypeMetrics& m) { return m.mrr; }, report.avg_mrr);

  out << "\n## Query counts and timing\n\n";
  out << "| Type | Queries | Hard answers | Mean seconds/query |\n|---|---|---|---|\n";
  for (const auto& c : column_order()) {
    auto it = report.per_type.find(c);
    if (it == report.per_type.end()) continue;
    out << "| " << c << " | " << it->second.n_queries << " | " << it->second.n_answers << " | "
        << fmt3(it->second.mean_seconds) << " |\n";
  }
  if (!report.warnings.empty()) {
    out << "\n";
    for (const auto& w : report.warnings) out << "- warning: " << w << '\n';
  }
  return out.str();
}

std::string report_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "type,n_queries,n_hard_answers,h1,h3,h10,mrr,all_h3,mean_seconds\n";
  for (const auto& c : column_order()) {
    auto it = report.per_type.find(c);
    if (it == report.per_type.end()) continue;
    const TypeMetrics& m = it->second;
    out << c << ',' << m.n_queries << ',' << m.n_answers << ',' << m.h1 << ',' << m.h3 << ','
        << m.h10 << ',' << m.mrr << ',' << m.all_h3 << ',' << m.mean_seconds << '\n';
  }
  out << "avg,,," << report.avg_h1 << ',' << report.avg_h3 << ',' << report.avg_h10 << ','
      << report.avg_mrr << ",,\n";
  return out.str();
}

void write_per_query_json(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write per-query log: " + path.string());
  for (const PerQueryLog& q : report.per_query) {
    nlohmann::json j;
    j["type"] = q.type;
    j["index"] = q.index;
    j["seconds"] = q.seconds;
    nlohmann::json ranks = nlohmann::json::array();
    for (const PerAnswerRank& r : q.ranks) {
      ranks.push_back({{"answer", r.answer}, {"rank", r.rank}, {"hard", r.hard}});
    }
    j["ranks"] = ranks;
    out << j.dump() << '\n';
  }
}

}  // namespace kgq
