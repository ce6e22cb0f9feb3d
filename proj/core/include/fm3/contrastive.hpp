// Copyright 2026 The fm3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fm3/autodiff.hpp"
#include "fm3/encoders.hpp"
#include "fm3/error.hpp"
#include "fm3/rng.hpp"

namespace fm3 {

struct LabeledExample {
  std::uint64_t example_id = 0;
  std::size_t task_id = 0;
  Payload inputs;
  std::size_t label = 0;
  std::size_t language = 0;

  bool operator==(const LabeledExample&) const = default;
};

enum class Polarity { positive, negative };

/// Indices into the example list the pair was mined from.
struct ContrastivePair {
  std::size_t anchor = 0;
  std::size_t other = 0;
  Polarity polarity = Polarity::positive;
};

struct PairMiningConfig {
  std::size_t R = 20;
  std::uint64_t rng_seed = 0;
};

class NoPositivePairsError : public MiningError {
 public:
  NoPositivePairsError() : MiningError("no feasible positive pairs") {}
};

class NoNegativePairsError : public MiningError {
 public:
  NoNegativePairsError() : MiningError("no feasible negative pairs") {}
};

/// Number of unordered pairs among k examples, k(k-1)/2.
std::uint64_t potential_pair_count(std::uint64_t k);

/// All unordered same-label and different-label pairs, in (i < j) order.
struct FeasiblePairs {
  std::vector<ContrastivePair> positives;
  std::vector<ContrastivePair> negatives;
};
FeasiblePairs enumerate_pairs(std::span<const std::size_t> labels);

/// Up to R positive and R negative pairs, drawn without replacement; positives
/// come first. Anchor/other orientation is randomised.
std::vector<ContrastivePair> mine_pairs(std::span<const std::size_t> labels, const PairMiningConfig& cfg);
std::vector<ContrastivePair> mine_pairs(std::span<const LabeledExample> examples, const PairMiningConfig& cfg);

/// Multiple-negatives ranking loss over n aligned rows: each anchor's own
/// positive competes with the other n - 1 positives under scaled cosine.
Var mnr_loss(Var anchor_embs, Var positive_embs, double scale = 20.0);

/// Mean of (1 - cos) over positives and max(0, cos - margin) over negatives.
Var explicit_pair_loss(Var anchor_embs, Var other_embs, std::span<const Polarity> polarity, double margin = 0.0);

}  // namespace fm3
