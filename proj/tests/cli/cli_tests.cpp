#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "remember/fsio.hpp"
#include "../unit/test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using remember::read_file;
using remember::write_file;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the installed binary with stdout/stderr captured to files.
RunResult run_cli(const std::string& args) {
  static int counter = 0;
  fs::path cap = fs::temp_directory_path() / "remember-tests" / "cli-capture";
  fs::create_directories(cap);
  fs::path out = cap / ("out-" + std::to_string(counter) + ".txt");
  fs::path err = cap / ("err-" + std::to_string(counter) + ".txt");
  ++counter;
  std::string cmd = std::string(REMEMBER_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                    err.string();
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

// Every invocation prints "run dir: <path>" before doing work.
fs::path run_dir_of(const RunResult& r) {
  const std::string tag = "run dir: ";
  std::size_t pos = r.out.find(tag);
  REQUIRE(pos != std::string::npos);
  std::size_t end = r.out.find('\n', pos);
  return fs::path(r.out.substr(pos + tag.size(), end - pos - tag.size()));
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("help succeeds and usage errors exit with code 1") {
  RunResult help = run_cli("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("gen-synth") != std::string::npos);
  CHECK(help.out.find("infer") != std::string::npos);

  CHECK(run_cli("").code == 1);                                  // missing subcommand
  CHECK(run_cli("gen-synth --bogus-flag 3").code == 1);          // unknown option
  CHECK(run_cli("zeroshot --task bogus").code == 1);             // enum violation
  RunResult sub_help = run_cli("train-head --help");
  CHECK(sub_help.code == 0);
  CHECK(sub_help.out.find("--patience") != std::string::npos);
}

TEST_CASE("failures exit with category-specific codes") {
  auto dir = test_tmp_dir("cli-errors");

  RunResult io = run_cli("train-head --corpus " + (dir / "missing.json").string() +
                         " --output-dir " + (dir / "o1").string());
  CHECK(io.code == 2);
  CHECK(io.err.find("error (I/O)") != std::string::npos);

  RunResult bad_spec =
      run_cli("gen-synth --classes 1 --output-dir " + (dir / "o2").string());
  CHECK(bad_spec.code == 3);
  CHECK(bad_spec.err.find("error (validation)") != std::string::npos);

  write_file(dir / "notjson.txt", "{oops");
  RunResult bad_json = run_cli("report --input " + (dir / "notjson.txt").string() +
                               " --output-dir " + (dir / "o3").string());
  CHECK(bad_json.code == 2);
  CHECK(bad_json.err.find("error (load)") != std::string::npos);

  write_file(dir / "badschema.json", "{\"version\": 2}");
  RunResult bad_schema = run_cli("report --input " + (dir / "badschema.json").string() +
                                 " --output-dir " + (dir / "o4").string());
  CHECK(bad_schema.code == 3);
  CHECK(bad_schema.err.find("schema:") != std::string::npos);

  RunResult no_corpus = run_cli("zeroshot --output-dir " + (dir / "o5").string());
  CHECK(no_corpus.code == 3);
  CHECK(no_corpus.err.find("--corpus") != std::string::npos);
}

TEST_CASE("gen-synth is reproducible for a seed and run dirs are hash-named") {
  auto dir = test_tmp_dir("cli-gensynth");
  const std::string params = "gen-synth --classes 4 --per-class 3 --dim 8 --seed 5 --output-dir ";
  RunResult a = run_cli(params + (dir / "a").string());
  RunResult b = run_cli(params + (dir / "b").string());
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  fs::path da = run_dir_of(a), db = run_dir_of(b);
  CHECK(da.filename() == db.filename());  // same effective config, same hash
  CHECK(read_file(da / "corpus.json") == read_file(db / "corpus.json"));
  CHECK(read_file(da / "corpus.blob") == read_file(db / "corpus.blob"));
  CHECK(read_file(da / "run-config.json") == read_file(db / "run-config.json"));

  RunResult c = run_cli(
      "gen-synth --classes 4 --per-class 3 --dim 8 --seed 6 --output-dir " + (dir / "c").string());
  REQUIRE(c.code == 0);
  fs::path dc = run_dir_of(c);
  CHECK(dc.filename() != da.filename());  // the seed is part of the config hash
  CHECK(read_file(dc / "corpus.blob") != read_file(da / "corpus.blob"));
}

TEST_CASE("config files supply defaults and flags win") {
  auto dir = test_tmp_dir("cli-config");
  write_file(dir / "cfg.json",
             "{\"gen-synth\": {\"classes\": 3, \"seed\": 9, \"per-class\": 4, "
             "\"mystery-knob\": 1}}");
  RunResult r = run_cli("gen-synth --config " + (dir / "cfg.json").string() +
                        " --seed 11 --dim 8 --output-dir " + (dir / "out").string());
  REQUIRE(r.code == 0);
  CHECK(r.err.find("unknown key 'mystery-knob'") != std::string::npos);

  json cfg = read_json(run_dir_of(r) / "run-config.json");
  CHECK(cfg.at("command") == "gen-synth");
  CHECK(cfg.at("classes") == 3);    // from the config file
  CHECK(cfg.at("per-class") == 4);  // from the config file
  CHECK(cfg.at("seed") == 11);      // flag beats file
  CHECK(cfg.at("dim") == 8);        // flag
  CHECK(cfg.at("sigma") == 1.0);    // untouched default

  json manifest = read_json(run_dir_of(r) / "corpus.json");
  CHECK(manifest.at("cases").size() == 12);  // 3 classes x 4
}

TEST_CASE("the full workflow hangs together end to end") {
  auto dir = test_tmp_dir("cli-workflow");

  // 1. corpus
  RunResult gen = run_cli("gen-synth --classes 4 --per-class 6 --dim 16 --seed 1 --output-dir " +
                          (dir / "gen").string());
  REQUIRE(gen.code == 0);
  fs::path corpus = run_dir_of(gen) / "corpus.json";

  // 2. zero-shot over every case
  RunResult zs = run_cli("zeroshot --corpus " + corpus.string() + " --output-dir " +
                         (dir / "zs").string());
  REQUIRE(zs.code == 0);
  json zj = read_json(run_dir_of(zs) / "zeroshot.json");
  CHECK(zj.at("n") == 24);
  REQUIRE(zj.at("results").size() == 24);
  const json& row = zj.at("results")[0];
  CHECK(row.contains("abnormality"));
  CHECK(row.contains("binary"));
  CHECK(row.contains("dementia_type"));
  CHECK(row.contains("severity"));
  CHECK(row.at("id") == "synth-0000");

  // 3. zero-shot evaluation with retrieval statistics
  RunResult ev = run_cli("eval --corpus " + corpus.string() +
                         " --task abnormality --retrieval-stats --k 2 --k-max 2 --output-dir " +
                         (dir / "ev").string());
  REQUIRE(ev.code == 0);
  json ej = read_json(run_dir_of(ev) / "metrics.json");
  CHECK(ej.at("mode") == "zero-shot");
  CHECK(ej.at("metrics").at("accuracy").get<double>() >= 0.9);
  CHECK(ej.at("retrieval_consistency").size() == 2);
  std::string csv = read_file(run_dir_of(ev) / "similarity.csv");
  CHECK(count_lines(csv) == 65);
  CHECK(csv.rfind("bin_low,bin_high,count_match,count_mismatch\n", 0) == 0);

  // 4. train the evidence head
  RunResult tr = run_cli("train-head --corpus " + corpus.string() +
                         " --task abnormality --k 2 --hidden 8 --lr 1e-3 --batch 4"
                         " --max-epochs 3 --patience 3 --seed 7 --output-dir " +
                         (dir / "tr").string());
  REQUIRE(tr.code == 0);
  fs::path model = run_dir_of(tr) / "model.json";
  json hj = read_json(run_dir_of(tr) / "history.json");
  CHECK(hj.at("n_train") == 16);
  CHECK(hj.at("n_val") == 8);
  CHECK(hj.at("val_loss").size() >= 1);
  CHECK(hj.at("val_loss").size() <= 3);
  CHECK(hj.at("val_metrics").contains("macro_f1"));

  // 5. inference with the trained head and a pinned timestamp
  const std::string infer_args = "infer --corpus " + corpus.string() +
                                 " --query synth-0000 --model " + model.string() +
                                 " --k 3 --timestamp 2026-01-01T00:00:00Z"
                                 " --corpus-id democorpus --encoder-id demoenc --output-dir ";
  RunResult inf = run_cli(infer_args + (dir / "inf").string());
  REQUIRE(inf.code == 0);
  CHECK(inf.out.find("Diagnostic Report") != std::string::npos);
  fs::path inf_dir = run_dir_of(inf);
  std::string report_text = read_file(inf_dir / "report.txt");
  CHECK(report_text.rfind("Diagnostic Report\n", 0) == 0);
  json rj = read_json(inf_dir / "report.json");
  CHECK(rj.at("predictions").at("abnormality").at("source") == "evidence-guided");
  CHECK(rj.at("predictions").at("binary").at("scale") == "softmax");
  CHECK(rj.at("predictions").at("severity").at("source") == "zero-shot");
  CHECK(rj.at("metadata").at("corpus_id") == "democorpus");
  CHECK(rj.at("metadata").at("encoder_id") == "demoenc");
  CHECK(rj.at("metadata").at("k") == 3);
  CHECK(rj.at("metadata").at("generated_at") == "2026-01-01T00:00:00Z");
  REQUIRE(rj.at("evidence").size() == 3);
  for (const json& e : rj.at("evidence")) CHECK(e.at("case_id") != "synth-0000");

  // same invocation, different root: byte-identical artifacts
  RunResult inf2 = run_cli(infer_args + (dir / "inf2").string());
  REQUIRE(inf2.code == 0);
  CHECK(read_file(run_dir_of(inf2) / "report.json") == read_file(inf_dir / "report.json"));
  CHECK(read_file(run_dir_of(inf2) / "report.txt") == report_text);

  // 6. re-render the report document: validate + identical output
  RunResult rep = run_cli("report --input " + (inf_dir / "report.json").string() +
                          " --format both --output-dir " + (dir / "rep").string());
  REQUIRE(rep.code == 0);
  CHECK(read_file(run_dir_of(rep) / "report.json") == read_file(inf_dir / "report.json"));
  CHECK(read_file(run_dir_of(rep) / "report.txt") == report_text);

  // 7. model-mode evaluation reports the model's own task and k
  RunResult evm = run_cli("eval --corpus " + corpus.string() + " --model " + model.string() +
                          " --output-dir " + (dir / "evm").string());
  REQUIRE(evm.code == 0);
  json mj = read_json(run_dir_of(evm) / "metrics.json");
  CHECK(mj.at("mode") == "model");
  CHECK(mj.at("task") == "abnormality");
  CHECK(mj.at("k") == 2);

  // 8. embedding export: header + 4 rows per case + 11 anchors
  RunResult ex = run_cli("export-embeddings --corpus " + corpus.string() + " --output-dir " +
                         (dir / "ex").string());
  REQUIRE(ex.code == 0);
  std::string emb = read_file(run_dir_of(ex) / "embeddings.csv");
  CHECK(emb.rfind("id,abnormality,dementia,modality,e0,", 0) == 0);
  CHECK(count_lines(emb) == 1 + 24 * 4 + 11);
}

TEST_CASE("train-encoder writes a checkpoint and a loss history") {
  auto dir = test_tmp_dir("cli-encoder");
  RunResult r = run_cli(
      "train-encoder --classes 2 --per-class 4 --eval-per-class 2 --dim 8 --epochs 2"
      " --batch 4 --lr 1e-4 --seed 11 --output-dir " + (dir / "out").string());
  REQUIRE(r.code == 0);
  fs::path rd = run_dir_of(r);
  CHECK(fs::exists(rd / "encoder.json"));
  json h = read_json(rd / "history.json");
  CHECK(h.at("initial_loss").is_number());
  CHECK(h.at("final_loss").is_number());
  CHECK(h.at("epoch_mean_loss").size() == 2);
  CHECK(h.at("eval_matched_text_top1").is_number());
}

TEST_CASE("build-index repackages external cases") {
  auto dir = test_tmp_dir("cli-buildindex");
  json cases = {
      {"dim", 2},
      {"provenance", "handmade"},
      {"cases",
       {{{"id", "one"},
         {"abnormality", "Normal"},
         {"dementia", "Non-Dementia"},
         {"description", "first"},
         {"image_embedding", {1.0, 0.0}},
         {"abn_embedding", {1.0, 0.0}},
         {"dx_embedding", {1.0, 0.0}},
         {"desc_embedding", {1.0, 0.0}}},
        {{"id", "two"},
         {"abnormality", "WMH"},
         {"dementia", "Other Dementia"},
         {"description", "second"},
         {"image_embedding", {0.0, 1.0}},
         {"abn_embedding", {0.0, 1.0}},
         {"dx_embedding", {0.0, 1.0}},
         {"desc_embedding", {0.0, 1.0}}}}}};
  write_file(dir / "cases.json", cases.dump(2));

  RunResult r = run_cli("build-index --input " + (dir / "cases.json").string() +
                        " --output-dir " + (dir / "out").string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("2 cases, dim 2, 0 anchor sets") != std::string::npos);
  fs::path corpus = run_dir_of(r) / "corpus.json";

  // anchor-free corpora cannot answer zero-shot queries
  RunResult zs = run_cli("zeroshot --corpus " + corpus.string() + " --output-dir " +
                         (dir / "zs").string());
  CHECK(zs.code == 3);

  CHECK(run_cli("build-index --output-dir " + (dir / "o2").string()).code == 3);
}

TEST_CASE("fewshot and ablate smoke runs produce well-formed summaries") {
  auto dir = test_tmp_dir("cli-protocols");
  RunResult gen_pool = run_cli(
      "gen-synth --classes 4 --per-class 6 --dim 8 --seed 21 --output-dir " +
      (dir / "pool").string());
  RunResult gen_test = run_cli(
      "gen-synth --classes 4 --per-class 3 --dim 8 --seed 22 --output-dir " +
      (dir / "test").string());
  REQUIRE(gen_pool.code == 0);
  REQUIRE(gen_test.code == 0);

  RunResult fs_run = run_cli("fewshot --corpus " + (run_dir_of(gen_pool) / "corpus.json").string() +
                             " --test-corpus " + (run_dir_of(gen_test) / "corpus.json").string() +
                             " --task abnormality --ks 2 --runs 1 --k 2 --hidden 4 --lr 1e-3"
                             " --batch 4 --max-epochs 2 --patience 2 --seed 3 --output-dir " +
                             (dir / "fs").string());
  REQUIRE(fs_run.code == 0);
  json fj = read_json(run_dir_of(fs_run) / "fewshot.json");
  CHECK(fj.at("task") == "abnormality");
  CHECK(fj.at("runs") == 1);
  REQUIRE(fj.at("cells").size() == 1);
  CHECK(fj.at("cells")[0].at("k_shots") == 2);
  CHECK(fj.at("cells")[0].at("runs").size() == 1);
  CHECK(fj.at("cells")[0].at("mean").at("accuracy").is_number());

  RunResult ab = run_cli(
      "ablate --dataset contextual --task abnormality --runs 1 --k 2 --hidden 4 --lr 1e-3"
      " --batch 4 --max-epochs 2 --patience 2 --seed 5 --output-dir " + (dir / "ab").string());
  REQUIRE(ab.code == 0);
  json aj = read_json(run_dir_of(ab) / "ablation.json");
  CHECK(aj.at("runs") == 1);
  CHECK(aj.at("full").at("name") == "full");
  REQUIRE(aj.at("variants").size() == 8);
  CHECK(aj.at("variants")[0].at("name") == "full");
  CHECK(aj.at("variants")[7].at("name") == "query_only");
  CHECK(aj.at("variants")[0].at("mean_delta_vs_full").at("macro_f1") == 0.0);
}
