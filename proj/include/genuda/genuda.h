/* C interface to the genuda library. Every call returns a genuda_status; on failure the
   message is available from genuda_last_error() on the calling thread. Strings returned
   through char** out-parameters are owned by the caller and released with genuda_string_free. */
#ifndef GENUDA_GENUDA_H
#define GENUDA_GENUDA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GENUDA_API __declspec(dllexport)
#else
#define GENUDA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum genuda_status {
  GENUDA_OK = 0,
  GENUDA_E_IO = 1,
  GENUDA_E_PARSE = 2,
  GENUDA_E_CONFIG = 3,
  GENUDA_E_LABEL = 4,
  GENUDA_E_TEMPLATE = 5,
  GENUDA_E_SHAPE = 6,
  GENUDA_E_CONTRACT = 7,
  GENUDA_E_DOMAIN = 8,
  GENUDA_E_ARGUMENT = 20,
  GENUDA_E_INTERNAL = 99
} genuda_status;

typedef struct genuda_pair genuda_pair;
typedef struct genuda_run genuda_run;

GENUDA_API const char* genuda_version(void);
GENUDA_API const char* genuda_status_name(genuda_status status);
GENUDA_API const char* genuda_last_error(void);
GENUDA_API void genuda_string_free(char* s);

/* spec_path may be NULL for the default generator settings; format is "tsv" or "jsonl". */
GENUDA_API genuda_status genuda_synth(const char* spec_path, const char* out_dir, const char* format);

/* corpus_path: a pair directory or a labeled corpus file. Counts may be NULL. */
GENUDA_API genuda_status genuda_pmi(const char* corpus_path, const char* out_csv, double k_percent, size_t min_freq,
                                    size_t* n_words, size_t* n_informative, size_t* n_uninformative);

/* Writes the run into out_dir; *run_dir_out (optional) receives the resolved directory. */
GENUDA_API genuda_status genuda_train(const char* config_path, const char* out_dir, int force, char** run_dir_out);

GENUDA_API genuda_status genuda_pair_open(const char* dir, genuda_pair** out);
GENUDA_API void genuda_pair_close(genuda_pair* pair);
/* domain: "source" | "target"; split: "train" | "val" | "test". */
GENUDA_API genuda_status genuda_pair_size(const genuda_pair* pair, const char* domain, const char* split,
                                          size_t* out);

GENUDA_API genuda_status genuda_run_open(const char* run_dir, genuda_run** out);
GENUDA_API void genuda_run_close(genuda_run* run);
GENUDA_API genuda_status genuda_run_trainable_count(const genuda_run* run, size_t* out);

/* masked_inference: NULL, "informative" or "uninformative". report_json may be NULL. */
GENUDA_API genuda_status genuda_evaluate(const genuda_run* run, const genuda_pair* pair, const char* domain,
                                         const char* split, const char* masked_inference, double* accuracy,
                                         char** report_json);

/* Evaluates a run directory and writes eval_<domain>[_<mode>].json into out_dir.
   pair_dir NULL: the pair recorded in the run manifest. domain NULL: both domains.
   embeddings_csv (optional) also exports final-layer embeddings. *reports_json (optional)
   receives a JSON array of the reports. */
GENUDA_API genuda_status genuda_eval_command(const char* run_dir, const char* pair_dir, const char* domain,
                                             const char* split, const char* masked_inference,
                                             const char* embeddings_csv, const char* out_dir, char** reports_json);

GENUDA_API genuda_status genuda_classify(const genuda_run* run, const genuda_pair* pair, const char* text,
                                         int* label);

GENUDA_API genuda_status genuda_export_embeddings(const genuda_run* run, const genuda_pair* pair, const char* split,
                                                  const char* path);

/* axis: "mask_rate" | "shots" | "schedule" | "phase1_data"; values: comma list or NULL for
   the axis defaults. *aggregate_csv (optional) receives the aggregate table. */
GENUDA_API genuda_status genuda_sweep(const char* axis, const char* base_config, const uint64_t* seeds,
                                      size_t n_seeds, const char* values, const char* out_dir, int jobs, int force,
                                      char** aggregate_csv);

/* compare_a/compare_b: NULL or two sweep values whose target accuracies are tested. */
GENUDA_API genuda_status genuda_report(const char* sweep_dir, const char* compare_a, const char* compare_b,
                                       char** text);

GENUDA_API genuda_status genuda_mann_whitney(const double* a, size_t n, const double* b, size_t m, double* u,
                                             double* p);
GENUDA_API genuda_status genuda_students_t(const double* a, size_t n, const double* b, size_t m, double* t,
                                           double* p);

#ifdef __cplusplus
}
#endif

#endif
