#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "kgq/query_gen.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const char* binary(const char* env) {
  const char* path = std::getenv(env);
  REQUIRE_MESSAGE(path != nullptr, "set " << env << " to the binary under test");
  return path;
}

RunResult run(const std::string& cmd, const fs::path& workdir) {
  const fs::path out = workdir / "stdout.txt";
  const fs::path err = workdir / "stderr.txt";
  const std::string full =
      "cd '" + workdir.string() + "' && " + cmd + " > '" + out.string() + "' 2> '" +
      err.string() + "'";
  RunResult r;
  const int rc = std::system(full.c_str());
  r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// One shared pipeline workspace: synth KG -> trained model -> queries.
struct CliWorkspace {
  kgq::test::TempDir dir{"cli"};
  std::string cli;
  std::string synth;

  CliWorkspace() : cli(binary("KGQ_CLI")), synth(binary("KGQ_SYNTH")) {
    RunResult r = run(synth + " --out kg --entities 80 --seed 3", dir.path);
    REQUIRE(r.status == 0);
    r = run(cli +
                " train --kg-dir kg --out run --rank 32 --epochs 40 --batch-size 100"
                " --reg 0.005 --seed 1",
            dir.path);
    REQUIRE_MESSAGE(r.status == 0, r.err);
    r = run(cli + " generate-queries --kg-dir kg --out queries --types 1p,2p,2i --count 8"
                  " --seed 5 --split test",
            dir.path);
    REQUIRE_MESSAGE(r.status == 0, r.err);
  }
};

CliWorkspace& workspace() {
  static CliWorkspace ws;
  return ws;
}

}  // namespace

TEST_CASE("train writes checkpoint, vocab, log and resolved config") {
  auto& ws = workspace();
  CHECK(fs::exists(ws.dir.path / "run/model.bin"));
  CHECK(fs::exists(ws.dir.path / "run/vocab.json"));
  CHECK(fs::exists(ws.dir.path / "run/training_log.csv"));
  CHECK(fs::exists(ws.dir.path / "run/train.resolved.cfg"));
  const std::string cfg = slurp(ws.dir.path / "run/train.resolved.cfg");
  CHECK(cfg.find("rank=32") != std::string::npos);
}

TEST_CASE("train rejects off-grid hyperparameters under --strict-grid") {
  auto& ws = workspace();
  RunResult r = run(ws.cli + " train --kg-dir kg --out sg --rank 137 --strict-grid", ws.dir.path);
  CHECK(r.status != 0);
  CHECK(r.err.find("137") != std::string::npos);
  CHECK(r.err.find("100") != std::string::npos);
  CHECK(r.err.find("1000") != std::string::npos);
}

TEST_CASE("same seed reruns produce identical checkpoints") {
  auto& ws = workspace();
  RunResult r1 = run(ws.cli + " train --kg-dir kg --out det1 --rank 16 --epochs 5 --seed 9",
                     ws.dir.path);
  RunResult r2 = run(ws.cli + " train --kg-dir kg --out det2 --rank 16 --epochs 5 --seed 9",
                     ws.dir.path);
  REQUIRE(r1.status == 0);
  REQUIRE(r2.status == 0);
  CHECK(slurp(ws.dir.path / "det1/model.bin") == slurp(ws.dir.path / "det2/model.bin"));
}

TEST_CASE("generate-queries writes one jsonl per type and validates") {
  auto& ws = workspace();
  for (const char* type : {"1p", "2p", "2i"}) {
    const fs::path p = ws.dir.path / "queries" / (std::string(type) + ".jsonl");
    REQUIRE(fs::exists(p));
    auto queries = kgq::load_queries_jsonl(p);
    CHECK(queries.size() == 8);
    // Re-validate the stored answers against the symbolic evaluator.
    auto kg = kgq::load_kg(ws.dir.path / "kg/train.txt", ws.dir.path / "kg/valid.txt",
                           ws.dir.path / "kg/test.txt");
    for (const auto& gq : queries) {
      CHECK(kgq::symbolic_answers(kg, kgq::Graph::Full, gq.query()) == gq.answers_full);
    }
  }
}

TEST_CASE("generate-queries rejects unknown types") {
  auto& ws = workspace();
  RunResult r = run(ws.cli + " generate-queries --kg-dir kg --out q4 --types 4p --count 1",
                    ws.dir.path);
  CHECK(r.status != 0);
  CHECK(r.err.find("4p") != std::string::npos);
}

TEST_CASE("answer prints a ranking for a 1p query") {
  auto& ws = workspace();
  RunResult r = run(ws.cli + " answer --model run/model.bin --kg-dir kg"
                            " --query '?T : next(e005,T)' --top 10",
                    ws.dir.path);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.out.find("e006") != std::string::npos);
  std::istringstream lines(r.out);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 11);  // header + 10 rows
}

TEST_CASE("explain prints the assignment table with correctness") {
  auto& ws = workspace();
  RunResult r = run(ws.cli + " answer --model run/model.bin --kg-dir kg --explain --top 9"
                            " --query '?T : exists V . next(e010,V) & skip3(V,T)' --gold full",
                    ws.dir.path);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.out.find("Rank") != std::string::npos);
  CHECK(r.out.find("Correct") != std::string::npos);
  CHECK(r.out.find("V") != std::string::npos);
  // 9 rows + header + rule line.
  std::istringstream lines(r.out);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 11);

  // The explain subcommand is an alias for answer --explain.
  RunResult alias = run(ws.cli + " explain --model run/model.bin --kg-dir kg --top 9"
                                " --query '?T : exists V . next(e010,V) & skip3(V,T)' --gold full",
                        ws.dir.path);
  REQUIRE(alias.status == 0);
  CHECK(alias.out == r.out);

  // JSON rendering.
  RunResult js = run(ws.cli + " explain --model run/model.bin --kg-dir kg --top 3 --json"
                             " --query '?T : exists V . next(e010,V) & skip3(V,T)'",
                     ws.dir.path);
  REQUIRE(js.status == 0);
  CHECK(js.out.find("\"rows\"") != std::string::npos);
}

TEST_CASE("malformed query shows a caret at the error position") {
  auto& ws = workspace();
  RunResult r = run(ws.cli + " answer --model run/model.bin --kg-dir kg"
                            " --query '?T : next(e005,'",
                    ws.dir.path);
  CHECK(r.status == 1);
  CHECK(r.err.find("parse error") != std::string::npos);
  CHECK(r.err.find('^') != std::string::npos);
}

TEST_CASE("evaluate writes reports and respects --method") {
  auto& ws = workspace();
  RunResult r = run(ws.cli + " evaluate --model run/model.bin --queries queries --method beam"
                            " --width 16 --tnorm product --out eval --random-baseline --jobs 2",
                    ws.dir.path);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(fs::exists(ws.dir.path / "eval/report.md"));
  CHECK(fs::exists(ws.dir.path / "eval/report.csv"));
  CHECK(fs::exists(ws.dir.path / "eval/per_query.jsonl"));
  CHECK(fs::exists(ws.dir.path / "eval/evaluate.resolved.cfg"));
  CHECK(r.out.find("random-scorer baseline") != std::string::npos);

  // Deterministic given the resolved config: run again and compare the csv.
  RunResult r2 = run(ws.cli + " evaluate --model run/model.bin --queries queries --method beam"
                             " --width 16 --tnorm product --out eval2",
                     ws.dir.path);
  REQUIRE(r2.status == 0);
  CHECK(slurp(ws.dir.path / "eval/report.csv") == slurp(ws.dir.path / "eval2/report.csv"));
}

TEST_CASE("evaluate auto-selects per-type configs from validation queries") {
  auto& ws = workspace();
  RunResult gen = run(ws.cli + " generate-queries --kg-dir kg --out vqueries --types 1p,2p"
                              " --count 6 --seed 11 --split valid",
                      ws.dir.path);
  REQUIRE_MESSAGE(gen.status == 0, gen.err);
  RunResult gen2 = run(ws.cli + " generate-queries --kg-dir kg --out tqueries --types 1p,2p"
                               " --count 6 --seed 12 --split test",
                       ws.dir.path);
  REQUIRE(gen2.status == 0);
  RunResult r = run(ws.cli + " evaluate --model run/model.bin --queries tqueries"
                            " --valid-queries vqueries --method auto --out evalauto",
                    ws.dir.path);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.out.find("selected per-type configs") != std::string::npos);
  CHECK(r.out.find("1p:") != std::string::npos);
  CHECK(r.out.find("2p:") != std::string::npos);
}

TEST_CASE("unknown flags are rejected") {
  auto& ws = workspace();
  RunResult r = run(ws.cli + " train --kg-dir kg --no-such-flag", ws.dir.path);
  CHECK(r.status != 0);
}

TEST_CASE("config file values are applied and overridable") {
  auto& ws = workspace();
  {
    std::ofstream cfg(ws.dir.path / "train.cfg");
    cfg << "[train]\nrank=16\nepochs=3\nseed=2\n";
  }
  RunResult r = run(ws.cli + " --config train.cfg train --kg-dir kg --out fromcfg", ws.dir.path);
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const std::string resolved = slurp(ws.dir.path / "fromcfg/train.resolved.cfg");
  CHECK(resolved.find("rank=16") != std::string::npos);
}
