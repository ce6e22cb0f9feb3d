// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "fm3/config.hpp"
#include "fm3/rng.hpp"
#include "fm3/tensor.hpp"

namespace fm3::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double stddev = 1.0) { return gaussian(std::move(shape), stddev, rng); }

/// Small encoders and pools so that end-to-end tests run in well under a second.
inline RunConfig tiny_config() {
  RunConfig cfg = RunConfig::with_default_suite();
  cfg.text_encoder.hidden_dim = 16;
  cfg.text_encoder.output_dim = 16;
  cfg.text_encoder.num_layers = 2;
  cfg.vision_encoder.hidden_dim = 16;
  cfg.vision_encoder.output_dim = 16;
  cfg.vision_encoder.num_layers = 2;
  cfg.shared_dim = 16;
  cfg.hypernet.budget_fraction = 0.5;
  cfg.hypernet.max_width = 16;
  cfg.contrastive.steps = 4;
  cfg.heads.max_iters = 200;
  cfg.shots = {0, 2, 4};
  cfg.episodes_per_setting = 2;
  for (auto& t : cfg.tasks) {
    for (auto& d : t.datasets) {
      d.examples_per_class = 12;
      d.eval_per_class = 6;
    }
  }
  return cfg;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fm3_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace fm3::testing
