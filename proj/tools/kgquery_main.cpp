#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kgq/answer_beam.hpp"
#include "kgq/answer_continuous.hpp"
#include "kgq/eval.hpp"
#include "kgq/query_gen.hpp"
#include "kgq/synth.hpp"
#include "kgq/train.hpp"

namespace fs = std::filesystem;

namespace {

// Paths resolve against $KGQ_DATA_ROOT when set and the path is relative.
fs::path resolve(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("KGQ_DATA_ROOT")) {
    return fs::path(root) / p;
  }
  return p;
}

struct KgArgs {
  std::string train, valid, test;
  std::string dir;
  bool id_mapped = false;

  void attach(CLI::App* app) {
    app->add_option("--kg-dir", dir, "directory holding train.txt/valid.txt/test.txt");
    app->add_option("--train", train, "train split TSV");
    app->add_option("--valid", valid, "valid split TSV");
    app->add_option("--test", test, "test split TSV");
    app->add_flag("--id-mapped", id_mapped,
                  "splits hold integer ids; read entity2id.txt/relation2id.txt from --kg-dir");
  }

  kgq::KnowledgeGraph load() const {
    fs::path base = resolve(dir.empty() ? "." : dir);
    fs::path tr = train.empty() ? base / "train.txt" : resolve(train);
    fs::path va = valid.empty() ? base / "valid.txt" : resolve(valid);
    fs::path te = test.empty() ? base / "test.txt" : resolve(test);
    if (id_mapped) return kgq::load_kg_id_mapped(base, tr, va, te);
    return kgq::load_kg(tr, va, te);
  }
};

// Every run drops its fully-resolved configuration next to its outputs.
void write_resolved_config(const CLI::App& app, const fs::path& out_dir,
                           const std::string& name) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::ofstream out(out_dir / (name + ".resolved.cfg"));
  out << app.config_to_str(true, false);
}

void check_strict_grid(const kgq::TrainConfig& cfg) {
  auto in = [](auto value, const auto& grid) {
    return std::find(std::begin(grid), std::end(grid), value) != std::end(grid);
  };
  auto list = [](const auto& grid) {
    std::string s = "{";
    for (auto v : grid) s += (s.size() > 1 ? "," : "") + std::to_string(v);
    return s + "}";
  };
  if (!in(cfg.rank, kgq::kRankGrid)) {
    throw kgq::Error("--strict-grid: rank " + std::to_string(cfg.rank) + " not in " +
                     list(kgq::kRankGrid));
  }
  if (!in(cfg.batch_size, kgq::kBatchSizeGrid)) {
    throw kgq::Error("--strict-grid: batch size " + std::to_string(cfg.batch_size) + " not in " +
                     list(kgq::kBatchSizeGrid));
  }
  if (cfg.reg_coeff < kgq::kRegCoeffMin || cfg.reg_coeff > kgq::kRegCoeffMax) {
    throw kgq::Error("--strict-grid: reg coefficient must lie in [1e-4, 0.5]");
  }
}

std::map<std::string, std::vector<kgq::GeneratedQuery>> load_query_dir(const fs::path& dir) {
  std::map<std::string, std::vector<kgq::GeneratedQuery>> by_type;
  for (const auto& type : kgq::kQueryTypes) {
    fs::path p = dir / (std::string(type) + ".jsonl");
    if (fs::exists(p)) {
      auto qs = kgq::load_queries_jsonl(p);
      if (!qs.empty()) by_type[std::string(type)] = std::move(qs);
    }
  }
  if (by_type.empty()) throw kgq::Error("no <type>.jsonl query files found in " + dir.string());
  return by_type;
}

int run_train(CLI::App& app, const KgArgs& kg_args, kgq::TrainConfig& cfg, bool strict_grid,
              bool grid_search, std::vector<int>& grid_ranks, std::vector<int>& grid_batches,
              std::vector<double>& grid_regs, const std::string& out_dir_s,
              const std::string& scorer_s, const std::string& calibration_s) {
  cfg.scorer = kgq::scorer_from_string(scorer_s);
  cfg.calibration.kind = kgq::calibration_from_string(calibration_s);
  if (strict_grid) check_strict_grid(cfg);

  const fs::path out_dir = resolve(out_dir_s);
  fs::create_directories(out_dir);
  kgq::KnowledgeGraph kg = kg_args.load();
  std::cout << "loaded KG: |E|=" << kg.vocab.num_entities()
            << " |R|=" << kg.vocab.num_relations() << " (" << kg.vocab.num_base_relations
            << " base), train=" << kg.train.size() << " valid=" << kg.valid.size()
            << " test=" << kg.test.size() << " triples (reciprocals included)\n";

  kgq::TrainResult best;
  kgq::TrainConfig best_cfg = cfg;
  double best_h3 = -2.0;
  if (grid_search) {
    if (grid_ranks.empty()) grid_ranks = {cfg.rank};
    if (grid_batches.empty()) grid_batches = {cfg.batch_size};
    if (grid_regs.empty()) grid_regs = {cfg.reg_coeff};
    std::cout << "grid search over ranks x batch sizes x reg coefficients "
              << "(validation filtered H@3 on 1p):\n";
    std::cout << "rank\tbatch\treg\tvalid_h3\n";
    for (int rank : grid_ranks) {
      for (int batch : grid_batches) {
        for (double reg : grid_regs) {
          kgq::TrainConfig c = cfg;
          c.rank = rank;
          c.batch_size = batch;
          c.reg_coeff = reg;
          if (strict_grid) check_strict_grid(c);
          kgq::TrainResult r = kgq::train(kg, c);
          std::cout << rank << '\t' << batch << '\t' << reg << '\t' << r.best_valid_h3 << '\n';
          if (r.best_valid_h3 > best_h3) {
            best_h3 = r.best_valid_h3;
            best = std::move(r);
            best_cfg = c;
          }
        }
      }
    }
  } else {
    best = kgq::train(kg, cfg);
    best_cfg = cfg;
    best_h3 = best.best_valid_h3;
  }

  kgq::save_model(best.model, out_dir / "model.bin");
  kgq::save_vocab(kg.vocab, out_dir / "vocab.json");
  kgq::write_train_log_csv(best.log, out_dir / "training_log.csv");
  write_resolved_config(app, out_dir, "train");
  std::cout << "trained " << to_string(best_cfg.scorer) << " rank " << best_cfg.rank
            << "; validation 1p filtered H@3 = " << best_h3 << '\n';
  std::cout << "wrote " << (out_dir / "model.bin").string() << '\n';
  return 0;
}

kgq::Vocab vocab_for_model(const std::string& vocab_path, const KgArgs& kg_args,
                           std::optional<kgq::KnowledgeGraph>& kg_out, bool need_kg) {
  if (!vocab_path.empty() && !need_kg) {
    return kgq::load_vocab(resolve(vocab_path));
  }
  kg_out = kg_args.load();
  return kg_out->vocab;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EPFO query answering over incomplete knowledge graphs"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value config file; flags override");
  app.get_config_formatter_base()->comment('#');

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train the neural link predictor on 1p triples");
  KgArgs train_kg;
  train_kg.attach(train_cmd);
  kgq::TrainConfig tcfg;
  std::string scorer_s = "complex", calibration_s = "logistic", train_out = "run";
  bool strict_grid = false, grid_search = false;
  std::vector<int> grid_ranks, grid_batches;
  std::vector<double> grid_regs;
  train_cmd->add_option("--out", train_out, "output directory")->capture_default_str();
  train_cmd->add_option("--scorer", scorer_s, "complex|distmult")->capture_default_str();
  train_cmd->add_option("--rank", tcfg.rank, "embedding rank (real dims)")->capture_default_str();
  train_cmd->add_option("--batch-size", tcfg.batch_size, "minibatch size")->capture_default_str();
  train_cmd->add_option("--reg", tcfg.reg_coeff, "N3 regularization coefficient")
      ->capture_default_str();
  train_cmd->add_option("--lr", tcfg.learning_rate, "Adagrad learning rate")
      ->capture_default_str();
  train_cmd->add_option("--epochs", tcfg.epochs, "max training epochs")->capture_default_str();
  train_cmd->add_option("--seed", tcfg.seed, "RNG seed")->capture_default_str();
  train_cmd->add_option("--calibration", calibration_s, "logistic|minmax")
      ->capture_default_str();
  train_cmd->add_option("--temperature", tcfg.calibration.temperature,
                        "logistic calibration temperature")->capture_default_str();
  train_cmd->add_option("--patience", tcfg.patience, "early stopping patience (valid H@3)")
      ->capture_default_str();
  train_cmd->add_flag("--no-early-stopping", [&tcfg](std::int64_t) { tcfg.early_stopping = false; },
                      "always run all epochs");
  train_cmd->add_flag("--strict-grid", strict_grid,
                      "restrict rank/batch/reg to the published hyperparameter grid");
  train_cmd->add_flag("--grid-search", grid_search, "sweep --grid-* lists, keep the best model");
  train_cmd->add_option("--grid-ranks", grid_ranks, "ranks to sweep");
  train_cmd->add_option("--grid-batch-sizes", grid_batches, "batch sizes to sweep");
  train_cmd->add_option("--grid-regs", grid_regs, "reg coefficients to sweep");

  // ---- generate-queries ----
  auto* gen_cmd = app.add_subcommand("generate-queries", "sample benchmark queries from a KG");
  KgArgs gen_kg;
  gen_kg.attach(gen_cmd);
  std::string types_s = "1p,2p,3p,2i,3i,ip,pi,2u,up", gen_out = "queries", gen_split = "test";
  int gen_count = 100;
  std::uint64_t gen_seed = 0;
  gen_cmd->add_option("--types", types_s, "comma-separated query types")->capture_default_str();
  gen_cmd->add_option("--count", gen_count, "queries per type")->capture_default_str();
  gen_cmd->add_option("--seed", gen_seed, "RNG seed")->capture_default_str();
  gen_cmd->add_option("--split", gen_split, "valid|test: which full graph labels answers")
      ->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "output directory for <type>.jsonl")
      ->capture_default_str();

  // ---- answer (and its explain alias) ----
  auto add_answer_options = [&](CLI::App* cmd, bool default_explain) {
    struct AnswerOpts {
      KgArgs kg;
      std::string model_path, vocab_path, query, method = "beam", tnorm = "product";
      std::string gold = "none", out_dir;
      int width = 16, top = 10, max_iters = 1000, restarts = 1;
      std::uint64_t seed = 0;
      bool explain = false;
      bool json = false;
    };
    auto opts = std::make_shared<AnswerOpts>();
    opts->explain = default_explain;
    opts->kg.attach(cmd);
    cmd->add_option("--model", opts->model_path, "model checkpoint")->required();
    cmd->add_option("--vocab", opts->vocab_path, "vocab.json (otherwise rebuilt from the KG)");
    cmd->add_option("--query", opts->query, "query in the DSL, e.g. \"?T : exists V . p(a,V) & q(V,T)\"")
        ->required();
    cmd->add_option("--method", opts->method, "beam|continuous")->capture_default_str();
    cmd->add_option("--tnorm", opts->tnorm, "godel|product|lukasiewicz")->capture_default_str();
    cmd->add_option("--width", opts->width, "beam width")->capture_default_str();
    cmd->add_option("--top", opts->top, "entities to print")->capture_default_str();
    cmd->add_option("--max-iters", opts->max_iters, "continuous optimization iterations")
        ->capture_default_str();
    cmd->add_option("--restarts", opts->restarts, "continuous optimization restarts")
        ->capture_default_str();
    cmd->add_option("--seed", opts->seed, "seed for the continuous answerer")
        ->capture_default_str();
    if (!default_explain) {
      cmd->add_flag("--explain", opts->explain, "print intermediate variable assignments");
    }
    cmd->add_option("--gold", opts->gold,
                    "none|full|train: mark correctness against symbolic answers on that graph")
        ->capture_default_str();
    cmd->add_flag("--json", opts->json, "emit the explanation as JSON");
    cmd->add_option("--out", opts->out_dir, "directory for the resolved config (optional)");
    return opts;
  };

  auto* answer_cmd = app.add_subcommand("answer", "answer one DSL query with a trained model");
  auto answer_opts = add_answer_options(answer_cmd, false);
  auto* explain_cmd =
      app.add_subcommand("explain", "answer one DSL query and print the explanation table");
  auto explain_opts = add_answer_options(explain_cmd, true);

  // ---- evaluate ----
  auto* eval_cmd = app.add_subcommand("evaluate", "filtered ranking metrics over query files");
  KgArgs eval_kg;
  eval_kg.attach(eval_cmd);
  std::string eval_model, eval_queries, eval_valid_queries, eval_method = "beam";
  std::string eval_tnorm = "product", eval_out = "eval";
  int eval_width = 16, eval_jobs = 1;
  std::uint64_t eval_seed = 0;
  bool eval_random_baseline = false;
  eval_cmd->add_option("--model", eval_model, "model checkpoint")->required();
  eval_cmd->add_option("--queries", eval_queries, "directory of <type>.jsonl files")->required();
  eval_cmd->add_option("--valid-queries", eval_valid_queries,
                       "validation query dir; triggers per-type grid selection (method=auto)");
  eval_cmd->add_option("--method", eval_method, "beam|continuous|auto")->capture_default_str();
  eval_cmd->add_option("--tnorm", eval_tnorm, "godel|product|lukasiewicz")
      ->capture_default_str();
  eval_cmd->add_option("--width", eval_width, "beam width")->capture_default_str();
  eval_cmd->add_option("--jobs", eval_jobs, "query-level parallelism")->capture_default_str();
  eval_cmd->add_option("--seed", eval_seed, "seed for the continuous answerer")
      ->capture_default_str();
  eval_cmd->add_flag("--random-baseline", eval_random_baseline,
                     "also report a seeded random-scorer baseline");
  eval_cmd->add_option("--out", eval_out, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      return run_train(app, train_kg, tcfg, strict_grid, grid_search, grid_ranks, grid_batches,
                       grid_regs, train_out, scorer_s, calibration_s);
    }

    if (gen_cmd->parsed()) {
      if (gen_split != "valid" && gen_split != "test") {
        throw kgq::Error("--split must be valid or test");
      }
      kgq::KnowledgeGraph kg = gen_kg.load();
      const fs::path out_dir = resolve(gen_out);
      fs::create_directories(out_dir);
      std::vector<std::string> types;
      std::stringstream ss(types_s);
      std::string t;
      while (std::getline(ss, t, ',')) {
        if (!t.empty()) types.push_back(t);
      }
      for (const std::string& type : types) {
        if (!kgq::is_query_type(type)) {
          throw kgq::Error("unknown query type '" + type + "' (expected one of 1p,2p,3p,2i,3i,ip,pi,2u,up)");
        }
      }
      const auto split = gen_split == "valid" ? kgq::QuerySplit::Valid : kgq::QuerySplit::Test;
      for (const std::string& type : types) {
        auto queries = kgq::sample_queries(kg, type, gen_count, gen_seed, split);
        kgq::save_queries_jsonl(queries, out_dir / (type + ".jsonl"));
        std::cout << "wrote " << queries.size() << " " << type << " queries to "
                  << (out_dir / (type + ".jsonl")).string() << '\n';
      }
      write_resolved_config(app, out_dir, "generate-queries");
      return 0;
    }

    auto run_answer = [&](decltype(answer_opts)& o) -> int {
      kgq::EmbeddingModel model = kgq::load_model(resolve(o->model_path));
      std::optional<kgq::KnowledgeGraph> kg;
      const bool need_kg = o->gold != "none";
      kgq::Vocab vocab = vocab_for_model(o->vocab_path, o->kg, kg, need_kg);
      if (static_cast<Eigen::Index>(vocab.num_entities()) != model.num_entities()) {
        throw kgq::Error("vocab/model size mismatch: " + std::to_string(vocab.num_entities()) +
                         " entities vs " + std::to_string(model.num_entities()));
      }

      kgq::EpfoQuery parsed;
      try {
        parsed = kgq::parse_query(o->query, vocab);
      } catch (const kgq::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n  " << o->query << "\n  "
                  << std::string(std::min(e.position, o->query.size()), ' ') << "^\n";
        return 1;
      }
      kgq::DnfQuery dnf = kgq::to_dnf(parsed);

      kgq::AnswererConfig cfg;
      const kgq::TNormKind tnorm = kgq::tnorm_from_string(o->tnorm);
      if (o->method == "beam") {
        kgq::BeamConfig b;
        b.width = o->width;
        b.tnorm = tnorm;
        cfg.impl = b;
      } else if (o->method == "continuous") {
        kgq::ContinuousConfig c;
        c.tnorm = tnorm;
        c.max_iters = o->max_iters;
        c.num_restarts = o->restarts;
        c.init_seed = o->seed;
        cfg.impl = c;
      } else {
        throw kgq::Error("--method must be beam or continuous");
      }

      std::optional<std::vector<kgq::EntityId>> gold;
      if (o->gold == "full") {
        gold = kgq::symbolic_answers(*kg, kgq::Graph::Full, dnf);
      } else if (o->gold == "train") {
        gold = kgq::symbolic_answers(*kg, kgq::Graph::Train, dnf);
      } else if (o->gold != "none") {
        throw kgq::Error("--gold must be none, full or train");
      }

      kgq::AnswerRanking ranking = kgq::run_answerer(model, dnf, cfg);
      if (o->explain && !ranking.has_traces()) {
        throw kgq::Error("--explain requires the beam answerer");
      }

      if (o->explain) {
        kgq::ExplanationTable table = kgq::explain(ranking, o->top, gold);
        if (o->json) {
          std::cout << kgq::explanation_to_json(table, dnf, vocab).dump(2) << '\n';
        } else {
          std::cout << kgq::explanation_to_text(table, dnf, vocab);
        }
      } else {
        const auto order = kgq::ranked_entities(ranking.scores);
        const int n = std::min<int>(o->top, static_cast<int>(order.size()));
        std::cout << "rank\tentity\tscore\n";
        for (int i = 0; i < n; ++i) {
          std::cout << (i + 1) << '\t' << vocab.entity_names[order[i]] << '\t'
                    << ranking.scores(order[i]);
          if (gold) {
            const bool correct =
                std::find(gold->begin(), gold->end(), order[i]) != gold->end();
            std::cout << '\t' << (correct ? "correct" : "wrong");
          }
          std::cout << '\n';
        }
      }
      if (!o->out_dir.empty()) write_resolved_config(app, resolve(o->out_dir), "answer");
      return 0;
    };

    if (answer_cmd->parsed()) return run_answer(answer_opts);
    if (explain_cmd->parsed()) return run_answer(explain_opts);

    if (eval_cmd->parsed()) {
      kgq::EmbeddingModel model = kgq::load_model(resolve(eval_model));
      auto queries = load_query_dir(resolve(eval_queries));
      const fs::path out_dir = resolve(eval_out);
      fs::create_directories(out_dir);

      kgq::EvalOptions eopts;
      eopts.jobs = eval_jobs;

      kgq::MetricReport report;
      if (eval_method == "auto") {
        if (eval_valid_queries.empty()) {
          throw kgq::Error("--method auto needs --valid-queries");
        }
        auto valid = load_query_dir(resolve(eval_valid_queries));
        kgq::SelectOptions sopts;
        sopts.jobs = eval_jobs;
        sopts.continuous_base.init_seed = eval_seed;
        kgq::SelectedConfig sel = kgq::select_config(model, valid, sopts);
        std::cout << "selected per-type configs (validation H@3):\n";
        for (const auto& [type, cfg] : sel.per_type) {
          double best = -1;
          for (const auto& cell : sel.grid.at(type)) best = std::max(best, cell.h3);
          std::cout << "  " << type << ": " << cfg.describe() << "  (H@3 " << best << ")\n";
        }
        std::map<std::string, kgq::AnswererConfig> configs;
        for (const auto& [type, qs] : queries) {
          auto it = sel.per_type.find(type);
          if (it == sel.per_type.end()) {
            throw kgq::Error("no validation queries for type " + type +
                             "; cannot select a config");
          }
          configs[type] = it->second;
        }
        report = kgq::evaluate(model, configs, queries, eopts);
      } else {
        kgq::AnswererConfig cfg;
        const kgq::TNormKind tnorm = kgq::tnorm_from_string(eval_tnorm);
        if (eval_method == "beam") {
          kgq::BeamConfig b;
          b.width = eval_width;
          b.tnorm = tnorm;
          b.keep_traces = false;
          cfg.impl = b;
        } else if (eval_method == "continuous") {
          kgq::ContinuousConfig c;
          c.tnorm = tnorm;
          c.init_seed = eval_seed;
          cfg.impl = c;
        } else {
          throw kgq::Error("--method must be beam, continuous or auto");
        }
        report = kgq::evaluate(model, cfg, queries, eopts);
      }

      const std::string md = kgq::report_markdown(report, "Complex query answering report");
      std::cout << md;
      std::ofstream(out_dir / "report.md") << md;
      std::ofstream(out_dir / "report.csv") << kgq::report_csv(report);
      kgq::write_per_query_json(report, out_dir / "per_query.jsonl");

      if (eval_random_baseline) {
        kgq::MetricReport rnd =
            kgq::evaluate_random_baseline(model.num_entities(), queries, eval_seed);
        std::cout << "random-scorer baseline macro H@3: " << rnd.avg_h3 << '\n';
        std::ofstream(out_dir / "random_baseline.csv") << kgq::report_csv(rnd);
      }
      write_resolved_config(app, out_dir, "evaluate");
      std::cout << "wrote report to " << (out_dir / "report.md").string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
