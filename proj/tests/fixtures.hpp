#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "genuda/corpus.hpp"
#include "genuda/error.hpp"
#include "genuda/training.hpp"

namespace fixture {

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("genuda_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// A small synthetic pair that trains in well under a second per hundred steps.
inline genuda::DomainPair small_pair(uint64_t seed = 7, size_t train = 120) {
  genuda::SynthSpec s;
  s.shared_background = 10;
  s.domain_background = 10;
  s.sentiment_words = 5;
  s.train = train;
  s.val = 20;
  s.test = 40;
  return genuda::synth_generate(s, seed).pair;
}

inline genuda::TrainConfig tiny_config(genuda::ScheduleKind schedule, long steps = 6) {
  genuda::TrainConfig c;
  c.schedule = schedule;
  c.phase1_steps = steps;
  c.phase2_steps = steps;
  c.batch_size = 4;
  c.seed = 11;
  c.select_min_freq = 2;
  c.model.d_model = 16;
  c.model.n_heads = 2;
  c.model.n_layers = 1;
  c.model.d_ff = 24;
  c.model.max_seq_len = 48;
  return c;
}

template <typename F>
genuda::ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const genuda::Error& e) {
    return e.code();
  }
  return static_cast<genuda::ErrorCode>(0);
}

}  // namespace fixture
