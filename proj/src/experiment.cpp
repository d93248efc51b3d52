#include "genuda/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "genuda/error.hpp"
#include "json.hpp"

namespace genuda {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

fs::path resolve_output(const fs::path& path) {
  const char* root = std::getenv("GENUDA_OUT");
  if (root && *root && path.is_relative()) return fs::path(root) / path;
  return path;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void synth_command(const std::optional<fs::path>& spec_path, const fs::path& out_dir, CorpusFormat format) {
  SynthSpec spec;
  if (spec_path) spec = SynthSpec::from_config(KvConfig::load(*spec_path));
  const SynthResult r = synth_generate(spec, spec.seed);
  const fs::path dir = resolve_output(out_dir);
  save_pair(r.pair, dir, format);
  write_file_atomic(dir / "synth.cfg", spec.to_config().serialize());
}

PmiSummary pmi_command(const fs::path& corpus, const fs::path& out_csv, double k_percent, size_t min_freq,
                       const LabelSpace& labels) {
  Corpus source;
  LabelSpace space = labels;
  if (fs::is_directory(corpus)) {
    DomainPair pair = load_pair(corpus);
    source = pair.source_train;
    space = pair.label_space;
  } else {
    const std::string ext = corpus.extension().string();
    source = load_corpus(corpus, ext == ".jsonl" ? CorpusFormat::kJsonl : CorpusFormat::kTsv, labels);
  }
  const PmiTable table = compute_pmi(source);
  const WordSets sets = select_word_sets(table, k_percent, min_freq);
  write_file_atomic(resolve_output(out_csv), pmi_csv(table, space));
  return PmiSummary{table.word_counts.size(), sets.informative.size(), sets.uninformative.size()};
}

std::string config_hash(const KvConfig& cfg) { return content_hash(cfg.serialize()); }

namespace {

std::string file_hash(const fs::path& p) { return content_hash(read_file(p)); }

// Hash over the resolved config and every file of the data pair.
std::string input_hash(const KvConfig& resolved, const fs::path& pair_dir) {
  std::string acc = config_hash(resolved) + "\n";
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(pair_dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) acc += f.filename().string() + " " + file_hash(f) + "\n";
  return content_hash(acc);
}

fs::path resolve_pair(const KvConfig& cfg, const fs::path& base_dir) {
  if (!cfg.has("pair")) fail(ErrorCode::kConfig, "missing config key `pair` (data pair directory)");
  fs::path p = cfg.get_string("pair");
  if (p.is_relative()) p = base_dir / p;
  return p;
}

}  // namespace

RunLayout train_from_config(const KvConfig& cfg, const fs::path& base_dir, const fs::path& out_dir, bool force) {
  const TrainConfig config = TrainConfig::from_config(cfg);
  const fs::path pair_dir = resolve_pair(cfg, base_dir);
  const DomainPair pair = load_pair(pair_dir);

  RunLayout run{resolve_output(out_dir)};
  if (fs::exists(run.manifest()) && !force) {
    fail(ErrorCode::kIo, "run directory " + run.dir.string() + " already holds a run (use --force to overwrite)");
  }
  ensure_dir(run.dir);

  const KvConfig resolved = config.to_config();
  ojson manifest;
  manifest["command"] = "train";
  manifest["status"] = "running";
  manifest["seed"] = config.seed;
  manifest["config_hash"] = config_hash(resolved);
  manifest["input_hash"] = input_hash(resolved, pair_dir);
  manifest["pair"] = fs::absolute(pair_dir).lexically_normal().string();
  manifest["config"] = resolved.entries();
  manifest["started"] = utc_timestamp();
  manifest["finished"] = nullptr;
  manifest["artifacts"] = ojson::array();
  write_file_atomic(run.manifest(), manifest.dump(2) + "\n");

  TrainResult result = train(config, pair);

  write_file_atomic(run.config(), resolved.serialize());
  write_file_atomic(run.vocab(), result.context.vocab.serialize());
  ensure_dir(run.checkpoint());
  save_checkpoint(result.model, run.checkpoint());
  write_file_atomic(run.loss_log(), loss_log_csv(result.log));

  manifest["status"] = "complete";
  manifest["finished"] = utc_timestamp();
  ojson artifacts = ojson::array();
  for (const fs::path& p : {run.config(), run.vocab(), run.checkpoint() / "model.bin", run.checkpoint() / "model.cfg",
                            run.loss_log()}) {
    artifacts.push_back({{"path", fs::relative(p, run.dir).string()}, {"hash", file_hash(p)}});
  }
  manifest["artifacts"] = artifacts;
  write_file_atomic(run.manifest(), manifest.dump(2) + "\n");
  return run;
}

RunLayout train_command(const fs::path& config_path, const fs::path& out_dir, bool force) {
  const KvConfig cfg = KvConfig::load(config_path);
  return train_from_config(cfg, config_path.parent_path(), out_dir, force);
}

LoadedRun load_run(const fs::path& run_dir) {
  const RunLayout run{resolve_output(run_dir)};
  LoadedRun r;
  const KvConfig cfg = KvConfig::load(run.config());
  r.config = TrainConfig::from_config(cfg);
  r.config_hash = config_hash(cfg);
  r.vocab = Vocab::load(run.vocab());
  r.model = load_checkpoint(run.checkpoint());
  if (r.model.config.vocab_size != r.vocab.size()) {
    fail(ErrorCode::kShape, "checkpoint vocabulary size does not match " + run.vocab().string());
  }
  return r;
}

fs::path run_pair_dir(const fs::path& run_dir) {
  const RunLayout run{resolve_output(run_dir)};
  const std::string text = read_file(run.manifest());
  ojson m;
  try {
    m = ojson::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorCode::kParse, run.manifest().string() + ": " + e.what());
  }
  if (!m.contains("pair") || !m["pair"].is_string()) fail(ErrorCode::kParse, run.manifest().string() + ": no `pair` entry");
  return m["pair"].get<std::string>();
}

std::vector<EvalReport> eval_run(const LoadedRun& run, const DomainPair& pair, const EvalOptions& options) {
  const PromptTemplate prompt = PromptTemplate::from_config(run.config.prompt, pair.label_space);
  const Classifier clf{run.model, run.vocab, prompt};
  std::optional<WordSets> sets;
  if (options.masked_inference) {
    sets = select_word_sets(compute_pmi(pair.source_train), run.config.select_k_percent, run.config.select_min_freq);
  }
  std::vector<EvalReport> out;
  for (Domain d : options.domains) {
    EvalReport r = options.masked_inference
                       ? masked_inference_eval(clf, pair, d, options.split, *sets, *options.masked_inference)
                       : evaluate(clf, pair, d, options.split);
    r.seed = run.config.seed;
    r.config_hash = run.config_hash;
    out.push_back(std::move(r));
  }
  if (options.embeddings_csv) export_embeddings(clf, pair, options.split, resolve_output(*options.embeddings_csv));
  return out;
}

std::vector<EvalReport> eval_command(const fs::path& run_dir, const fs::path& pair_dir, const EvalOptions& options,
                                     const fs::path& out_dir) {
  const LoadedRun run = load_run(run_dir);
  const DomainPair pair = load_pair(pair_dir.empty() ? run_pair_dir(run_dir) : pair_dir);
  std::vector<EvalReport> reports = eval_run(run, pair, options);
  const fs::path dir = resolve_output(out_dir);
  ensure_dir(dir);
  for (const auto& r : reports) {
    std::string name = "eval_" + r.domain;
    if (!r.masked_inference.empty()) name += "_" + r.masked_inference;
    write_file_atomic(dir / (name + ".json"), r.to_json());
  }
  return reports;
}

// --- sweeps ------------------------------------------------------------------------------

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "mask_rate") return SweepAxis::kMaskRate;
  if (name == "shots") return SweepAxis::kShots;
  if (name == "schedule") return SweepAxis::kSchedule;
  if (name == "phase1_data") return SweepAxis::kPhase1Data;
  fail(ErrorCode::kConfig, "sweep axis must be mask_rate, shots, schedule or phase1_data, got `" + name + "`");
}

const char* sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kMaskRate: return "mask_rate";
    case SweepAxis::kShots: return "shots";
    case SweepAxis::kSchedule: return "schedule";
    case SweepAxis::kPhase1Data: return "phase1_data";
  }
  return "?";
}

const char* sweep_axis_key(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kMaskRate: return "mask.rate";
    case SweepAxis::kShots: return "shots";
    case SweepAxis::kSchedule: return "schedule";
    case SweepAxis::kPhase1Data: return "phase1_data";
  }
  return "?";
}

std::vector<std::string> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kMaskRate: return {"0.05", "0.15", "0.30", "0.60", "0.90"};
    case SweepAxis::kShots: return {"32", "128", "256"};
    case SweepAxis::kSchedule: {
      std::vector<std::string> out;
      for (ScheduleKind k : all_schedules()) out.push_back(schedule_name(k));
      return out;
    }
    case SweepAxis::kPhase1Data: return {"source_only", "target_only", "source_and_target"};
  }
  return {};
}

std::string aggregate_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::string out = std::string(sweep_axis_name(axis)) + ",seeds,source_mean,source_std,target_mean,target_std\n";
  for (const auto& r : rows) {
    out += csv_field(r.value) + "," + std::to_string(r.target.size()) + "," + fmt(mean_of(r.source)) + "," +
           fmt(stddev_of(r.source)) + "," + fmt(mean_of(r.target)) + "," + fmt(stddev_of(r.target)) + "\n";
  }
  return out;
}

namespace {

fs::path cell_dir(const fs::path& root, SweepAxis axis, const std::string& value, uint64_t seed) {
  return root / (std::string(sweep_axis_name(axis)) + "=" + value) / ("seed=" + std::to_string(seed));
}

}  // namespace

std::vector<SweepRow> sweep_command(const SweepRequest& req) {
  if (req.seeds.empty()) fail(ErrorCode::kConfig, "sweep needs at least one seed");
  if (req.jobs < 1) fail(ErrorCode::kConfig, "--jobs must be >= 1");
  const std::vector<std::string> values = req.values.empty() ? default_sweep_values(req.axis) : req.values;
  const KvConfig base = KvConfig::load(req.base_config);
  const fs::path base_dir = req.base_config.parent_path();
  const fs::path root = resolve_output(req.out_dir);
  ensure_dir(root);

  const fs::path pair_dir = resolve_pair(base, base_dir);
  // Validate every cell's config before any training starts.
  struct Cell {
    size_t row;
    size_t seed_index;
    KvConfig cfg;
    fs::path dir;
  };
  std::vector<Cell> cells;
  for (size_t v = 0; v < values.size(); ++v) {
    for (size_t s = 0; s < req.seeds.size(); ++s) {
      KvConfig cfg = base;
      cfg.set(sweep_axis_key(req.axis), values[v]);
      cfg.set("seed", std::to_string(req.seeds[s]));
      cfg.set("pair", fs::absolute(pair_dir).lexically_normal().string());
      TrainConfig::from_config(cfg);
      cells.push_back({v, s, cfg, cell_dir(root, req.axis, values[v], req.seeds[s])});
    }
  }

  ojson manifest;
  manifest["command"] = "sweep";
  manifest["status"] = "running";
  manifest["axis"] = sweep_axis_name(req.axis);
  manifest["values"] = values;
  manifest["seeds"] = req.seeds;
  manifest["config_hash"] = config_hash(base);
  manifest["started"] = utc_timestamp();
  manifest["finished"] = nullptr;
  manifest["artifacts"] = ojson::array();
  write_file_atomic(root / "sweep.json", manifest.dump(2) + "\n");

  std::vector<SweepRow> rows(values.size());
  for (size_t v = 0; v < values.size(); ++v) {
    rows[v].value = values[v];
    rows[v].source.assign(req.seeds.size(), 0.0);
    rows[v].target.assign(req.seeds.size(), 0.0);
  }
  const DomainPair pair = load_pair(pair_dir);
  std::atomic<size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      {
        std::lock_guard<std::mutex> lock(error_mu);
        if (error) return;
      }
      try {
        const Cell& c = cells[i];
        train_from_config(c.cfg, base_dir, c.dir, req.force);
        const LoadedRun run = load_run(c.dir);
        const auto reports = eval_run(run, pair, EvalOptions{});
        for (const auto& r : reports) {
          write_file_atomic(c.dir / ("eval_" + r.domain + ".json"), r.to_json());
          (r.domain == "source" ? rows[c.row].source : rows[c.row].target)[c.seed_index] = r.accuracy;
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const size_t n_threads = std::min<size_t>(static_cast<size_t>(req.jobs), cells.size());
  for (size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  write_file_atomic(root / "aggregate.csv", aggregate_csv(req.axis, rows));
  manifest["status"] = "complete";
  manifest["finished"] = utc_timestamp();
  ojson artifacts = ojson::array();
  artifacts.push_back("aggregate.csv");
  for (const auto& c : cells) {
    for (const char* d : {"source", "target"}) {
      artifacts.push_back(fs::relative(c.dir / (std::string("eval_") + d + ".json"), root).string());
    }
  }
  manifest["artifacts"] = artifacts;
  write_file_atomic(root / "sweep.json", manifest.dump(2) + "\n");
  return rows;
}

std::string report_command(const fs::path& sweep_dir, const std::optional<std::string>& a,
                           const std::optional<std::string>& b) {
  const fs::path root = resolve_output(sweep_dir);
  ojson manifest;
  try {
    manifest = ojson::parse(read_file(root / "sweep.json"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, (root / "sweep.json").string() + ": " + e.what());
  }
  const SweepAxis axis = parse_sweep_axis(manifest.at("axis").get<std::string>());
  const auto values = manifest.at("values").get<std::vector<std::string>>();
  const auto seeds = manifest.at("seeds").get<std::vector<uint64_t>>();

  std::map<std::string, SweepRow> rows;
  std::vector<SweepRow> ordered;
  for (const auto& v : values) {
    SweepRow row;
    row.value = v;
    for (uint64_t s : seeds) {
      const fs::path dir = cell_dir(root, axis, v, s);
      row.source.push_back(EvalReport::from_json(read_file(dir / "eval_source.json")).accuracy);
      row.target.push_back(EvalReport::from_json(read_file(dir / "eval_target.json")).accuracy);
    }
    rows[v] = row;
    ordered.push_back(row);
  }
  std::string out = aggregate_csv(axis, ordered);
  if (a && b) {
    if (!rows.count(*a) || !rows.count(*b)) fail(ErrorCode::kConfig, "report: unknown sweep value to compare");
    const auto& ta = rows[*a].target;
    const auto& tb = rows[*b].target;
    const MannWhitneyResult mw = mann_whitney_u(ta, tb);
    const TTestResult tt = students_t(ta, tb);
    out += "\ncompare target accuracy " + *a + " vs " + *b + "\n";
    out += "mann_whitney_u U=" + fmt(mw.u) + " p=" + fmt(mw.p) + (mw.exact ? " (exact)" : " (normal)") + "\n";
    out += "welch_t t=" + fmt(tt.t) + " df=" + fmt(tt.df) + " p=" + fmt(tt.p) + (tt.degenerate ? " (degenerate)" : "") +
           "\n";
  }
  return out;
}

}  // namespace genuda
