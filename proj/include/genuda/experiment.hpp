#pragma once

// On-disk experiments: synthetic pairs, PMI tables, training runs with manifests,
// evaluation reports and sweeps. The only layer that writes artifacts.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "genuda/evaluation.hpp"
#include "genuda/training.hpp"

namespace genuda {

// Relative output paths are placed under $GENUDA_OUT when it is set. Run and sweep
// directories are outputs too, so commands reading them resolve the same way.
std::filesystem::path resolve_output(const std::filesystem::path& path);

// ISO-8601 UTC timestamp.
std::string utc_timestamp();

void synth_command(const std::optional<std::filesystem::path>& spec_path, const std::filesystem::path& out_dir,
                   CorpusFormat format = CorpusFormat::kTsv);

struct PmiSummary {
  size_t words = 0;
  size_t informative = 0;
  size_t uninformative = 0;
};

// `corpus` is a pair directory (its labeled source train split is used) or a labeled
// corpus file with the given label space.
PmiSummary pmi_command(const std::filesystem::path& corpus, const std::filesystem::path& out_csv, double k_percent,
                       size_t min_freq, const LabelSpace& labels = LabelSpace::binary_sentiment());

// Run directory layout.
struct RunLayout {
  std::filesystem::path dir;
  std::filesystem::path config() const { return dir / "config.cfg"; }
  std::filesystem::path vocab() const { return dir / "vocab.txt"; }
  std::filesystem::path checkpoint() const { return dir / "checkpoint"; }
  std::filesystem::path loss_log() const { return dir / "loss.csv"; }
  std::filesystem::path manifest() const { return dir / "manifest.json"; }
};

// Config hash: content hash of the canonical serialization (stable under key reordering).
std::string config_hash(const KvConfig& cfg);

// Resolves `pair` relative to `base_dir`, trains, and writes config, vocabulary,
// checkpoint, loss log and manifest. An existing run directory needs `force`.
RunLayout train_from_config(const KvConfig& cfg, const std::filesystem::path& base_dir,
                            const std::filesystem::path& out_dir, bool force);
RunLayout train_command(const std::filesystem::path& config_path, const std::filesystem::path& out_dir, bool force);

// A finished run read back from disk.
struct LoadedRun {
  TrainConfig config;
  std::string config_hash;
  Vocab vocab;
  Model model;
};

LoadedRun load_run(const std::filesystem::path& run_dir);

struct EvalOptions {
  std::vector<Domain> domains{Domain::kSource, Domain::kTarget};
  std::string split = "test";
  std::optional<InferenceMaskMode> masked_inference;
  std::optional<std::filesystem::path> embeddings_csv;
};

// Data pair a run was trained on, as recorded in its manifest.
std::filesystem::path run_pair_dir(const std::filesystem::path& run_dir);

std::vector<EvalReport> eval_run(const LoadedRun& run, const DomainPair& pair, const EvalOptions& options);
// Evaluates and writes one JSON report per domain (`eval_<domain>[_<mode>].json`) into `out_dir`.
// An empty `pair_dir` means the pair recorded in the run manifest.
std::vector<EvalReport> eval_command(const std::filesystem::path& run_dir, const std::filesystem::path& pair_dir,
                                     const EvalOptions& options, const std::filesystem::path& out_dir);

enum class SweepAxis { kMaskRate, kShots, kSchedule, kPhase1Data };
SweepAxis parse_sweep_axis(const std::string& name);
const char* sweep_axis_name(SweepAxis axis);
// Values swept when none are given.
std::vector<std::string> default_sweep_values(SweepAxis axis);
// Config key the axis overrides.
const char* sweep_axis_key(SweepAxis axis);

struct SweepRequest {
  SweepAxis axis = SweepAxis::kMaskRate;
  std::vector<std::string> values;  // empty: default_sweep_values
  std::vector<uint64_t> seeds{1, 2, 3};
  std::filesystem::path base_config;
  std::filesystem::path out_dir;
  int jobs = 1;
  bool force = false;
};

struct SweepRow {
  std::string value;
  std::vector<double> source, target;  // per seed, in seed order
};

// Trains and evaluates every (value, seed) cell into `<out>/<axis>=<value>/seed=<s>/` and
// writes `<out>/aggregate.csv` with mean and sample stddev per value.
std::vector<SweepRow> sweep_command(const SweepRequest& request);

std::string aggregate_csv(SweepAxis axis, const std::vector<SweepRow>& rows);

// Human-readable summary of a sweep directory; with two values, adds Mann-Whitney and
// Welch tests on their per-seed target accuracies.
std::string report_command(const std::filesystem::path& sweep_dir, const std::optional<std::string>& compare_a,
                           const std::optional<std::string>& compare_b);

}  // namespace genuda
