#include "genuda/genuda.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <string>

#include "genuda/error.hpp"
#include "genuda/experiment.hpp"

struct genuda_pair {
  genuda::DomainPair pair;
};

struct genuda_run {
  genuda::LoadedRun run;
};

namespace {

thread_local std::string last_error;

genuda_status status_of(genuda::ErrorCode code) { return static_cast<genuda_status>(static_cast<int>(code)); }

template <typename F>
genuda_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return GENUDA_OK;
  } catch (const genuda::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return GENUDA_E_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return GENUDA_E_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw genuda::Error(genuda::ErrorCode::kConfig, what);
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* genuda_version(void) { return "0.1.0"; }

const char* genuda_status_name(genuda_status status) {
  switch (status) {
    case GENUDA_OK: return "ok";
    case GENUDA_E_ARGUMENT: return "argument_error";
    case GENUDA_E_INTERNAL: return "internal_error";
    default: break;
  }
  if (status >= GENUDA_E_IO && status <= GENUDA_E_DOMAIN) {
    return genuda::error_code_name(static_cast<genuda::ErrorCode>(static_cast<int>(status)));
  }
  return "unknown";
}

const char* genuda_last_error(void) { return last_error.c_str(); }

void genuda_string_free(char* s) { std::free(s); }

genuda_status genuda_synth(const char* spec_path, const char* out_dir, const char* format) {
  if (!out_dir) return last_error = "out_dir is NULL", GENUDA_E_ARGUMENT;
  return guarded([&] {
    std::optional<std::filesystem::path> spec;
    if (spec_path) spec = spec_path;
    genuda::synth_command(spec, out_dir, genuda::parse_corpus_format(format ? format : "tsv"));
  });
}

genuda_status genuda_pmi(const char* corpus_path, const char* out_csv, double k_percent, size_t min_freq,
                         size_t* n_words, size_t* n_informative, size_t* n_uninformative) {
  if (!corpus_path || !out_csv) return last_error = "corpus_path or out_csv is NULL", GENUDA_E_ARGUMENT;
  return guarded([&] {
    const auto s = genuda::pmi_command(corpus_path, out_csv, k_percent, min_freq);
    if (n_words) *n_words = s.words;
    if (n_informative) *n_informative = s.informative;
    if (n_uninformative) *n_uninformative = s.uninformative;
  });
}

genuda_status genuda_train(const char* config_path, const char* out_dir, int force, char** run_dir_out) {
  if (!config_path || !out_dir) return last_error = "config_path or out_dir is NULL", GENUDA_E_ARGUMENT;
  return guarded([&] {
    const auto run = genuda::train_command(config_path, out_dir, force != 0);
    if (run_dir_out) *run_dir_out = dup(run.dir.string());
  });
}

genuda_status genuda_pair_open(const char* dir, genuda_pair** out) {
  if (!dir || !out) return last_error = "dir or out is NULL", GENUDA_E_ARGUMENT;
  return guarded([&] { *out = new genuda_pair{genuda::load_pair(dir)}; });
}

void genuda_pair_close(genuda_pair* pair) { delete pair; }

genuda_status genuda_pair_size(const genuda_pair* pair, const char* domain, const char* split, size_t* out) {
  if (!pair || !domain || !split || !out) return last_error = "NULL argument", GENUDA_E_ARGUMENT;
  return guarded([&] {
    *out = genuda::parse_domain(domain) == genuda::Domain::kSource ? pair->pair.source_split(split).size()
                                                                  : pair->pair.target_split(split).size();
  });
}

genuda_status genuda_run_open(const char* run_dir, genuda_run** out) {
  if (!run_dir || !out) return last_error = "run_dir or out is NULL", GENUDA_E_ARGUMENT;
  return guarded([&] { *out = new genuda_run{genuda::load_run(run_dir)}; });
}

void genuda_run_close(genuda_run* run) { delete run; }

genuda_status genuda_run_trainable_count(const genuda_run* run, size_t* out) {
  if (!run || !out) return last_error = "NULL argument", GENUDA_E_ARGUMENT;
  return guarded([&] { *out = run->run.model.params.trainable_count(); });
}

genuda_status genuda_evaluate(const genuda_run* run, const genuda_pair* pair, const char* domain, const char* split,
                              const char* masked_inference, double* accuracy, char** report_json) {
  if (!run || !pair || !domain || !split) return last_error = "NULL argument", GENUDA_E_ARGUMENT;
  return guarded([&] {
    genuda::EvalOptions opt;
    opt.domains = {genuda::parse_domain(domain)};
    opt.split = split;
    if (masked_inference) opt.masked_inference = genuda::parse_inference_mask_mode(masked_inference);
    const auto reports = genuda::eval_run(run->run, pair->pair, opt);
    if (accuracy) *accuracy = reports.front().accuracy;
    if (report_json) *report_json = dup(reports.front().to_json());
  });
}

genuda_status genuda_eval_command(const char* run_dir, const char* pair_dir, const char* domain, const char* split,
                                  const char* masked_inference, const char* embeddings_csv, const char* out_dir,
                                  char** reports_json) {
  if (!run_dir || !out_dir) return last_error = "run_dir or out_dir is NULL", GENUDA_E_ARGUMENT;
  return guarded([&] {
    genuda::EvalOptions opt;
    if (domain) opt.domains = {genuda::parse_domain(domain)};
    if (split) opt.split = split;
    if (masked_inference) opt.masked_inference = genuda::parse_inference_mask_mode(masked_inference);
    if (embeddings_csv) opt.embeddings_csv = embeddings_csv;
    const auto reports = genuda::eval_command(run_dir, pair_dir ? pair_dir : "", opt, out_dir);
    if (reports_json) {
      std::string all = "[";
      for (size_t i = 0; i < reports.size(); ++i) all += (i ? "," : "") + reports[i].to_json(false);
      *reports_json = dup(all + "]");
    }
  });
}

genuda_status genuda_classify(const genuda_run* run, const genuda_pair* pair, const char* text, int* label) {
  if (!run || !pair || !text || !label) return last_error = "NULL argument", GENUDA_E_ARGUMENT;
  return guarded([&] {
    const auto prompt = genuda::PromptTemplate::from_config(run->run.config.prompt, pair->pair.label_space);
    const genuda::Classifier clf{run->run.model, run->run.vocab, prompt};
    *label = genuda::rank_classify(clf, text);
  });
}

genuda_status genuda_export_embeddings(const genuda_run* run, const genuda_pair* pair, const char* split,
                                       const char* path) {
  if (!run || !pair || !split || !path) return last_error = "NULL argument", GENUDA_E_ARGUMENT;
  return guarded([&] {
    const auto prompt = genuda::PromptTemplate::from_config(run->run.config.prompt, pair->pair.label_space);
    const genuda::Classifier clf{run->run.model, run->run.vocab, prompt};
    genuda::export_embeddings(clf, pair->pair, split, genuda::resolve_output(path));
  });
}

genuda_status genuda_sweep(const char* axis, const char* base_config, const uint64_t* seeds, size_t n_seeds,
                           const char* values, const char* out_dir, int jobs, int force, char** aggregate_csv) {
  if (!axis || !base_config || !out_dir || (n_seeds && !seeds)) return last_error = "NULL argument", GENUDA_E_ARGUMENT;
  return guarded([&] {
    genuda::SweepRequest req;
    req.axis = genuda::parse_sweep_axis(axis);
    req.base_config = base_config;
    req.out_dir = out_dir;
    req.jobs = jobs;
    req.force = force != 0;
    if (n_seeds) req.seeds.assign(seeds, seeds + n_seeds);
    if (values) {
      for (const auto& v : genuda::split(values, ',')) {
        const std::string t = genuda::trim(v);
        require(!t.empty(), "empty sweep value");
        req.values.push_back(t);
      }
    }
    const auto rows = genuda::sweep_command(req);
    if (aggregate_csv) *aggregate_csv = dup(genuda::aggregate_csv(req.axis, rows));
  });
}

genuda_status genuda_report(const char* sweep_dir, const char* compare_a, const char* compare_b, char** text) {
  if (!sweep_dir || !text) return last_error = "NULL argument", GENUDA_E_ARGUMENT;
  return guarded([&] {
    std::optional<std::string> a, b;
    if (compare_a) a = compare_a;
    if (compare_b) b = compare_b;
    *text = dup(genuda::report_command(sweep_dir, a, b));
  });
}

genuda_status genuda_mann_whitney(const double* a, size_t n, const double* b, size_t m, double* u, double* p) {
  if (!a || !b) return last_error = "NULL sample", GENUDA_E_ARGUMENT;
  return guarded([&] {
    const auto r = genuda::mann_whitney_u({a, a + n}, {b, b + m});
    if (u) *u = r.u;
    if (p) *p = r.p;
  });
}

genuda_status genuda_students_t(const double* a, size_t n, const double* b, size_t m, double* t, double* p) {
  if (!a || !b) return last_error = "NULL sample", GENUDA_E_ARGUMENT;
  return guarded([&] {
    const auto r = genuda::students_t({a, a + n}, {b, b + m});
    if (t) *t = r.t;
    if (p) *p = r.p;
  });
}

}  // extern "C"
