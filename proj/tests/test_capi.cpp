// Exercises the shared library through its C header only.

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "genuda/genuda.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("genuda_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

const char* kSpec =
    "shared_background = 10\ndomain_background = 10\nsentiment_words = 5\n"
    "train = 80\nval = 10\ntest = 30\nseed = 7\n";

const char* kRun =
    "pair = pair\nschedule = two_phase_cpt\nphase1_steps = 3\nphase2_steps = 3\nbatch_size = 4\n"
    "seed = 5\nmask.min_freq = 2\nmodel.d_model = 16\nmodel.n_heads = 2\nmodel.n_layers = 1\n"
    "model.d_ff = 24\nmodel.max_seq_len = 48\n";

// A synthesized pair, a run config beside it and a trained run.
fs::path trained(const std::string& name) {
  const fs::path dir = scratch(name);
  put(dir / "spec.cfg", kSpec);
  put(dir / "run.cfg", kRun);
  REQUIRE(genuda_synth((dir / "spec.cfg").c_str(), (dir / "pair").c_str(), "tsv") == GENUDA_OK);
  char* run_dir = nullptr;
  REQUIRE(genuda_train((dir / "run.cfg").c_str(), (dir / "run").c_str(), 0, &run_dir) == GENUDA_OK);
  REQUIRE(run_dir != nullptr);
  CHECK(fs::equivalent(run_dir, dir / "run"));
  genuda_string_free(run_dir);
  return dir;
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::strlen(genuda_version()) > 0);
  CHECK(std::string(genuda_status_name(GENUDA_OK)) == "ok");
  CHECK(std::string(genuda_status_name(GENUDA_E_CONFIG)) == "config_error");
  CHECK(std::string(genuda_status_name(GENUDA_E_ARGUMENT)) == "argument_error");
  CHECK(std::string(genuda_status_name(GENUDA_E_INTERNAL)) == "internal_error");
}

TEST_CASE("null arguments and library errors come back as status codes") {
  CHECK(genuda_train(nullptr, "x", 0, nullptr) == GENUDA_E_ARGUMENT);
  CHECK(std::strlen(genuda_last_error()) > 0);
  genuda_pair* pair = nullptr;
  CHECK(genuda_pair_open("/nonexistent/genuda/pair", &pair) == GENUDA_E_IO);
  CHECK(pair == nullptr);
  CHECK(std::string(genuda_last_error()).find("/nonexistent/genuda/pair") != std::string::npos);

  const fs::path dir = scratch("badcfg");
  put(dir / "bad.cfg", "pair = p\nnot_a_key = 1\n");
  CHECK(genuda_train((dir / "bad.cfg").c_str(), (dir / "r").c_str(), 0, nullptr) == GENUDA_E_CONFIG);
  CHECK(std::string(genuda_last_error()).find("not_a_key") != std::string::npos);
  CHECK(genuda_synth(nullptr, (dir / "p").c_str(), "xml") != GENUDA_OK);
}

TEST_CASE("train, open, evaluate, classify and export through handles") {
  const fs::path dir = trained("flow");
  genuda_pair* pair = nullptr;
  genuda_run* run = nullptr;
  REQUIRE(genuda_pair_open((dir / "pair").c_str(), &pair) == GENUDA_OK);
  REQUIRE(genuda_run_open((dir / "run").c_str(), &run) == GENUDA_OK);

  size_t n = 0;
  CHECK(genuda_pair_size(pair, "target", "test", &n) == GENUDA_OK);
  CHECK(n == 30);
  CHECK(genuda_pair_size(pair, "target", "dev", &n) != GENUDA_OK);
  CHECK(genuda_run_trainable_count(run, &n) == GENUDA_OK);
  CHECK(n > 0);

  double acc = -1;
  char* json = nullptr;
  CHECK(genuda_evaluate(run, pair, "target", "test", nullptr, &acc, &json) == GENUDA_OK);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  REQUIRE(json != nullptr);
  CHECK(std::string(json).find("\"domain\": \"target\"") != std::string::npos);
  genuda_string_free(json);
  CHECK(genuda_evaluate(run, pair, "target", "test", "informative", &acc, nullptr) == GENUDA_OK);
  CHECK(genuda_evaluate(run, pair, "elsewhere", "test", nullptr, &acc, nullptr) == GENUDA_E_CONFIG);

  int label = -1;
  CHECK(genuda_classify(run, pair, "bg1 bg2 pos0", &label) == GENUDA_OK);
  CHECK((label == 0 || label == 1));

  CHECK(genuda_export_embeddings(run, pair, "test", (dir / "emb.csv").c_str()) == GENUDA_OK);
  CHECK(fs::file_size(dir / "emb.csv") > 0);

  char* reports = nullptr;
  CHECK(genuda_eval_command((dir / "run").c_str(), nullptr, nullptr, "test", nullptr, nullptr, (dir / "ev").c_str(),
                            &reports) == GENUDA_OK);
  REQUIRE(reports != nullptr);
  CHECK(reports[0] == '[');
  genuda_string_free(reports);
  CHECK(fs::exists(dir / "ev/eval_source.json"));
  CHECK(fs::exists(dir / "ev/eval_target.json"));

  CHECK(genuda_train((dir / "run.cfg").c_str(), (dir / "run").c_str(), 0, nullptr) == GENUDA_E_IO);

  genuda_run_close(run);
  genuda_pair_close(pair);
  genuda_run_close(nullptr);
  genuda_pair_close(nullptr);
}

TEST_CASE("sweep and report") {
  const fs::path dir = trained("sweep");
  const uint64_t seeds[] = {1, 2};
  char* csv = nullptr;
  REQUIRE(genuda_sweep("shots", (dir / "run.cfg").c_str(), seeds, 2, "8,16", (dir / "sw").c_str(), 1, 0, &csv) ==
          GENUDA_OK);
  REQUIRE(csv != nullptr);
  CHECK(std::string(csv).rfind("shots,seeds,", 0) == 0);
  genuda_string_free(csv);
  char* text = nullptr;
  REQUIRE(genuda_report((dir / "sw").c_str(), "8", "16", &text) == GENUDA_OK);
  CHECK(std::string(text).find("mann_whitney_u") != std::string::npos);
  genuda_string_free(text);
  CHECK(genuda_sweep("depth", (dir / "run.cfg").c_str(), seeds, 2, nullptr, (dir / "sw2").c_str(), 1, 0, nullptr) ==
        GENUDA_E_CONFIG);
}

TEST_CASE("significance tests") {
  const double a[] = {1, 2, 3}, b[] = {4, 5, 6};
  double u = -1, p = -1;
  CHECK(genuda_mann_whitney(a, 3, b, 3, &u, &p) == GENUDA_OK);
  CHECK(u == 0.0);
  CHECK(std::abs(p - 0.1) < 1e-12);
  double t = 0;
  CHECK(genuda_students_t(a, 3, b, 3, &t, &p) == GENUDA_OK);
  CHECK(std::abs(t + 3.0 / std::sqrt(2.0 / 3.0)) < 1e-12);
  CHECK(p < 0.05);
  CHECK(genuda_mann_whitney(a, 0, b, 3, &u, &p) == GENUDA_E_DOMAIN);
  CHECK(genuda_students_t(a, 1, b, 3, &t, &p) == GENUDA_E_DOMAIN);
  CHECK(genuda_students_t(nullptr, 3, b, 3, &t, &p) == GENUDA_E_ARGUMENT);
}
