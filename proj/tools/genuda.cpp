// genuda: command-line front end over the C library.

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "genuda/genuda.h"

namespace {

// Single-line, machine-parsable failure: `error: <status>: <message>`.
int report_failure(const char* status, std::string message) {
  for (char& c : message) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::fprintf(stderr, "error: %s: %s\n", status, message.c_str());
  return 1;
}

int check(genuda_status st) {
  if (st == GENUDA_OK) return 0;
  return report_failure(genuda_status_name(st), genuda_last_error());
}

const char* opt(const std::optional<std::string>& s) { return s ? s->c_str() : nullptr; }

// Takes ownership of a library string and prints it.
void emit(char* s) {
  if (!s) return;
  std::fputs(s, stdout);
  genuda_string_free(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative domain adaptation lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", genuda_version());

  // synth
  std::optional<std::string> synth_spec;
  std::string synth_out, synth_format = "tsv";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic source/target pair");
  synth->add_option("--spec", synth_spec, "Generator config (key = value)")->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--format", synth_format, "Corpus format")->check(CLI::IsMember({"tsv", "jsonl"}));

  // pmi
  std::string pmi_corpus, pmi_out;
  double pmi_k = 15;
  size_t pmi_min_freq = 10;
  auto* pmi = app.add_subcommand("pmi", "Word/class PMI table of a labeled corpus");
  pmi->add_option("corpus", pmi_corpus, "Pair directory or labeled corpus file")->required()->check(CLI::ExistingPath);
  pmi->add_option("--out", pmi_out, "Output CSV")->required();
  pmi->add_option("--k", pmi_k, "Percent of words per informative/uninformative set");
  pmi->add_option("--min-freq", pmi_min_freq, "Minimum word count for the word sets");

  // train
  std::string train_config, train_out;
  bool train_force = false;
  auto* train = app.add_subcommand("train", "Train one run from a config file");
  train->add_option("config", train_config, "Run config (key = value)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_flag("--force", train_force, "Overwrite an existing run");

  // eval
  std::string eval_run, eval_split = "test";
  std::optional<std::string> eval_pair, eval_domain, eval_masked, eval_embeddings, eval_out;
  auto* eval = app.add_subcommand("eval", "Evaluate a trained run");
  eval->add_option("run", eval_run, "Run directory")->required();
  eval->add_option("--pair", eval_pair, "Data pair (default: the one the run was trained on)");
  eval->add_option("--domain", eval_domain, "source or target (default: both)")
      ->check(CLI::IsMember({"source", "target"}));
  eval->add_option("--split", eval_split, "Split")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--masked-inference", eval_masked, "Mask PMI words at inference")
      ->check(CLI::IsMember({"informative", "uninformative"}));
  eval->add_option("--export-embeddings", eval_embeddings, "Write final-layer embeddings CSV");
  eval->add_option("--out", eval_out, "Report directory (default: the run directory)");

  // sweep
  std::string sweep_axis, sweep_config, sweep_out;
  std::optional<std::string> sweep_values;
  std::vector<uint64_t> sweep_seeds{1, 2, 3};
  int sweep_jobs = 1;
  bool sweep_force = false;
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate a grid of runs over one axis");
  sweep->add_option("axis", sweep_axis, "mask_rate | shots | schedule | phase1_data")
      ->required()
      ->check(CLI::IsMember({"mask_rate", "shots", "schedule", "phase1_data"}));
  sweep->add_option("config", sweep_config, "Base run config")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_out, "Sweep directory")->required();
  sweep->add_option("--values", sweep_values, "Comma-separated axis values (default: the standard grid)");
  sweep->add_option("--seeds", sweep_seeds, "Seeds")->delimiter(',');
  sweep->add_option("--jobs", sweep_jobs, "Parallel runs")->check(CLI::PositiveNumber);
  sweep->add_flag("--force", sweep_force, "Overwrite existing cells");

  // report
  std::string report_dir;
  std::vector<std::string> report_compare;
  auto* report = app.add_subcommand("report", "Summarize a sweep");
  report->add_option("dir", report_dir, "Sweep directory")->required();
  report->add_option("--compare", report_compare, "Two axis values to test against each other")->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_failure("argument_error", e.what());
    return 2;
  }

  if (*synth) {
    if (int rc = check(genuda_synth(opt(synth_spec), synth_out.c_str(), synth_format.c_str()))) return rc;
    std::printf("wrote %s\n", synth_out.c_str());
  } else if (*pmi) {
    size_t words = 0, inf = 0, uninf = 0;
    if (int rc = check(genuda_pmi(pmi_corpus.c_str(), pmi_out.c_str(), pmi_k, pmi_min_freq, &words, &inf, &uninf))) {
      return rc;
    }
    std::printf("words=%zu informative=%zu uninformative=%zu\n", words, inf, uninf);
  } else if (*train) {
    char* dir = nullptr;
    if (int rc = check(genuda_train(train_config.c_str(), train_out.c_str(), train_force ? 1 : 0, &dir))) return rc;
    std::printf("run %s\n", dir);
    genuda_string_free(dir);
  } else if (*eval) {
    const std::string out = eval_out.value_or(eval_run);
    char* json = nullptr;
    if (int rc = check(genuda_eval_command(eval_run.c_str(), opt(eval_pair), opt(eval_domain), eval_split.c_str(),
                                           opt(eval_masked), opt(eval_embeddings), out.c_str(), &json))) {
      return rc;
    }
    emit(json);
    std::fputs("\n", stdout);
  } else if (*sweep) {
    char* csv = nullptr;
    if (int rc = check(genuda_sweep(sweep_axis.c_str(), sweep_config.c_str(), sweep_seeds.data(), sweep_seeds.size(),
                                    opt(sweep_values), sweep_out.c_str(), sweep_jobs, sweep_force ? 1 : 0, &csv))) {
      return rc;
    }
    emit(csv);
  } else if (*report) {
    char* text = nullptr;
    const char* a = report_compare.size() == 2 ? report_compare[0].c_str() : nullptr;
    const char* b = report_compare.size() == 2 ? report_compare[1].c_str() : nullptr;
    if (int rc = check(genuda_report(report_dir.c_str(), a, b, &text))) return rc;
    emit(text);
  }
  return 0;
}
